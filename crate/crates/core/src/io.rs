//! Deterministic on-disk formats: the HNUD1 field snapshot (bit-exact
//! little-endian binary), trajectory norm CSVs, and the monitor ledger as
//! JSON lines.

use std::io::{Read, Write};
use std::path::Path;

use crate::assimilation::MonitorLedger;
use crate::domain::{DomainSpec, Grid, PhysicalField};
use crate::error::{CoreError, Result};
use crate::timestep::NormSeries;

pub const SNAPSHOT_MAGIC: &[u8; 5] = b"HNUD1";

/// Header of a field snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotHeader {
    pub nx: u32,
    pub ny: u32,
    pub nz: u32,
    pub components: u32,
    pub l: f64,
    pub lx: f64,
    pub ly: f64,
    pub time: f64,
}

impl SnapshotHeader {
    pub fn for_grid(grid: &Grid, components: usize, time: f64) -> Self {
        SnapshotHeader {
            nx: grid.nx() as u32,
            ny: grid.ny() as u32,
            nz: grid.nz() as u32,
            components: components as u32,
            l: grid.spec.l,
            lx: grid.spec.lx,
            ly: grid.spec.ly,
            time,
        }
    }

    pub fn matches(&self, spec: &DomainSpec) -> bool {
        self.nx as usize == spec.nx
            && self.ny as usize == spec.ny
            && self.nz as usize == spec.nz
            && self.l == spec.l
            && self.lx == spec.lx
            && self.ly == spec.ly
    }
}

/// Write a physical-space snapshot: magic, u32 LE dims, f64 LE geometry and
/// time, then row-major f64 LE values.
pub fn write_snapshot(path: &Path, header: &SnapshotHeader, field: &PhysicalField) -> Result<()> {
    let sh = field.values.shape();
    if sh[0] != header.components as usize
        || sh[1] != header.nx as usize
        || sh[2] != header.ny as usize
        || sh[3] != header.nz as usize
    {
        return Err(CoreError::ShapeMismatch {
            what: "snapshot field",
            expected: vec![
                header.components as usize,
                header.nx as usize,
                header.ny as usize,
                header.nz as usize,
            ],
            got: sh.to_vec(),
        });
    }
    let mut buf = Vec::with_capacity(5 + 16 + 32 + field.values.len() * 8);
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    for v in [header.nx, header.ny, header.nz, header.components] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in [header.l, header.lx, header.ly, header.time] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    // row-major (components, nx, ny, nz)
    for v in field.values.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, PhysicalField)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 5 + 16 + 32 || &buf[..5] != SNAPSHOT_MAGIC {
        return Err(CoreError::Other(format!(
            "{} is not an HNUD1 snapshot",
            path.display()
        )));
    }
    let mut off = 5;
    let mut read_u32 = || {
        let v = u32::from_le_bytes(buf[off..off + 4].try_into().unwrap());
        off += 4;
        v
    };
    let (nx, ny, nz, components) = (read_u32(), read_u32(), read_u32(), read_u32());
    let read_f64 = |off: &mut usize| {
        let v = f64::from_le_bytes(buf[*off..*off + 8].try_into().unwrap());
        *off += 8;
        v
    };
    let l = read_f64(&mut off);
    let lx = read_f64(&mut off);
    let ly = read_f64(&mut off);
    let time = read_f64(&mut off);
    let count = (components * nx * ny * nz) as usize;
    if buf.len() != off + count * 8 {
        return Err(CoreError::Other(format!(
            "snapshot payload has {} bytes, expected {}",
            buf.len() - off,
            count * 8
        )));
    }
    let mut values = Vec::with_capacity(count);
    for i in 0..count {
        values.push(f64::from_le_bytes(
            buf[off + 8 * i..off + 8 * i + 8].try_into().unwrap(),
        ));
    }
    let arr = ndarray::Array4::from_shape_vec(
        (components as usize, nx as usize, ny as usize, nz as usize),
        values,
    )
    .map_err(|e| CoreError::Other(e.to_string()))?;
    Ok((
        SnapshotHeader {
            nx,
            ny,
            nz,
            components,
            l,
            lx,
            ly,
            time,
        },
        PhysicalField { values: arr },
    ))
}

/// Trajectory norms CSV: `t,L2,H1,H2,Lq,wH1cross`.
pub fn write_norms_csv(path: &Path, norms: &NormSeries) -> Result<()> {
    let mut out = String::from("t,L2,H1,H2,Lq,wH1cross\n");
    for i in 0..norms.l2.len() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            norms.l2.times[i],
            norms.l2.values[i],
            norms.h1.values[i],
            norms.h2.values[i],
            norms.lq.values[i],
            norms.w_h1.values[i],
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Monitor ledger as JSON lines, one record per (t, monitor).
pub fn write_ledger_jsonl(path: &Path, ledger: &MonitorLedger) -> Result<()> {
    let mut out = String::new();
    for e in &ledger.entries {
        out.push_str(&serde_json::to_string(e).map_err(|e| CoreError::Other(e.to_string()))?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

//! Small dense kernels for the per-mode implicit solves and semigroup
//! exponentials: partial-pivot LU and a Pade scaling-and-squaring matrix
//! exponential. Blocks are O(2 Nz) square, so no external LAPACK is needed.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{CoreError, Result};

/// LU factorization with partial pivoting of a real square matrix.
#[derive(Debug, Clone)]
pub struct LuReal {
    lu: Array2<f64>,
    piv: Vec<usize>,
}

impl LuReal {
    pub fn factor(a: &Array2<f64>) -> Result<LuReal> {
        let n = a.nrows();
        assert_eq!(n, a.ncols());
        let mut lu = a.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let mut pmax = lu[[col, col]].abs();
            let mut prow = col;
            for r in col + 1..n {
                let v = lu[[r, col]].abs();
                if v > pmax {
                    pmax = v;
                    prow = r;
                }
            }
            if pmax == 0.0 || !pmax.is_finite() {
                return Err(CoreError::Degenerate(format!(
                    "singular matrix in LU at column {col}"
                )));
            }
            if prow != col {
                for c in 0..n {
                    let tmp = lu[[col, c]];
                    lu[[col, c]] = lu[[prow, c]];
                    lu[[prow, c]] = tmp;
                }
                piv.swap(col, prow);
            }
            let d = lu[[col, col]];
            for r in col + 1..n {
                let f = lu[[r, col]] / d;
                lu[[r, col]] = f;
                for c in col + 1..n {
                    lu[[r, c]] -= f * lu[[col, c]];
                }
            }
        }
        Ok(LuReal { lu, piv })
    }

    pub fn n(&self) -> usize {
        self.lu.nrows()
    }

    pub fn solve_f64(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for r in 1..n {
            for c in 0..r {
                x[r] = x[r] - self.lu[[r, c]] * x[c];
            }
        }
        for r in (0..n).rev() {
            for c in r + 1..n {
                x[r] = x[r] - self.lu[[r, c]] * x[c];
            }
            x[r] /= self.lu[[r, r]];
        }
        x
    }

    pub fn solve_c64(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n();
        let mut x: Vec<Complex64> = self.piv.iter().map(|&p| b[p]).collect();
        for r in 1..n {
            for c in 0..r {
                x[r] = x[r] - self.lu[[r, c]] * x[c];
            }
        }
        for r in (0..n).rev() {
            for c in r + 1..n {
                x[r] = x[r] - self.lu[[r, c]] * x[c];
            }
            x[r] = x[r] / self.lu[[r, r]];
        }
        x
    }
}

fn norm_1(a: &Array2<f64>) -> f64 {
    let mut m: f64 = 0.0;
    for c in 0..a.ncols() {
        let s: f64 = (0..a.nrows()).map(|r| a[[r, c]].abs()).sum();
        m = m.max(s);
    }
    m
}

/// Matrix exponential by Pade(13) with scaling and squaring.
pub fn expm(a: &Array2<f64>) -> Result<Array2<f64>> {
    const THETA_13: f64 = 5.371920351148152;
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let nrm = norm_1(a);
    if !nrm.is_finite() {
        return Err(CoreError::NonFinite("expm input".into()));
    }
    let s = if nrm > THETA_13 {
        (nrm / THETA_13).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let a = a.mapv(|v| v / 2f64.powi(s as i32));

    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let eye = Array2::<f64>::eye(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);
    let u_inner = a6.dot(&(&a6 * B[13] + &a4 * B[11] + &a2 * B[9]))
        + &a6 * B[7]
        + &a4 * B[5]
        + &a2 * B[3]
        + &eye * B[1];
    let u = a.dot(&u_inner);
    let v = a6.dot(&(&a6 * B[12] + &a4 * B[10] + &a2 * B[8]))
        + &a6 * B[6]
        + &a4 * B[4]
        + &a2 * B[2]
        + &eye * B[0];

    // (V - U) X = (V + U)
    let vm_u = &v - &u;
    let vp_u = &v + &u;
    let lu = LuReal::factor(&vm_u)?;
    let mut x = Array2::<f64>::zeros((n, n));
    for c in 0..n {
        let col: Vec<f64> = (0..n).map(|r| vp_u[[r, c]]).collect();
        let sol = lu.solve_f64(&col);
        for r in 0..n {
            x[[r, c]] = sol[r];
        }
    }
    for _ in 0..s {
        x = x.dot(&x);
    }
    Ok(x)
}

/// exp(Z) together with phi_1(Z) = Z^{-1}(e^Z - I) and
/// phi_2(Z) = Z^{-2}(e^Z - I - Z), computed from the exponential of the
/// augmented block matrix [[Z, I, 0], [0, 0, I], [0, 0, 0]] so the phi
/// functions stay accurate for small ||Z||.
pub fn phi_functions(z: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
    let n = z.nrows();
    let m = 3 * n;
    let mut aug = Array2::<f64>::zeros((m, m));
    for r in 0..n {
        for c in 0..n {
            aug[[r, c]] = z[[r, c]];
        }
        aug[[r, n + r]] = 1.0;
        aug[[n + r, 2 * n + r]] = 1.0;
    }
    let e = expm(&aug)?;
    let mut e0 = Array2::<f64>::zeros((n, n));
    let mut p1 = Array2::<f64>::zeros((n, n));
    let mut p2 = Array2::<f64>::zeros((n, n));
    for r in 0..n {
        for c in 0..n {
            e0[[r, c]] = e[[r, c]];
            p1[[r, c]] = e[[r, n + c]];
            p2[[r, c]] = e[[r, 2 * n + c]];
        }
    }
    Ok((e0, p1, p2))
}

/// y = M x for a complex vector with a real matrix.
pub fn matvec_c64(m: &Array2<f64>, x: &[Complex64]) -> Vec<Complex64> {
    let (rows, cols) = (m.nrows(), m.ncols());
    debug_assert_eq!(cols, x.len());
    let mut y = vec![Complex64::default(); rows];
    for r in 0..rows {
        let mut s = Complex64::default();
        for c in 0..cols {
            s += m[[r, c]] * x[c];
        }
        y[r] = s;
    }
    y
}

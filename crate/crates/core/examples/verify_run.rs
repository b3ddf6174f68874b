use hydronudge::domain::{DomainSpec, Grid};
use hydronudge::verify::{format_table, run_operator_suite};

fn main() {
    let grid = Grid::new(DomainSpec::new(1.0, 16, 16, 17).unwrap()).unwrap();
    let t0 = std::time::Instant::now();
    let results = run_operator_suite(&grid, 12345).unwrap();
    print!("{}", format_table(&results));
    println!("elapsed: {:?}, all pass: {}", t0.elapsed(), results.iter().all(|r| r.pass));
}

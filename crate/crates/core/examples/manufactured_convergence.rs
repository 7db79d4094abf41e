//! Spectral decay in n and second-order decay in Δt on a manufactured solution.

use anisodiff::cli::manufactured_error;
use anisodiff::expr::Expr;
use anisodiff::tensor::{ThetaKind, ThetaSchedule};

fn main() -> anisodiff::error::Result<()> {
    let u = Expr::parse("exp(-t)*sin(pi*x)*sin(pi*y)")?;
    let (k11, k22) = (Expr::parse("2+x")?, Expr::parse("1")?);
    let schedule = ThetaSchedule::new(ThetaKind::Linear { theta0: 0.0, rate: 0.4 }, 1.0)?;

    println!("spatial (2000 steps, t = 0.1)");
    let short = ThetaSchedule::new(schedule.kind().clone(), 0.1)?;
    for n in [4, 6, 8, 10, 12] {
        println!("  n = {n:>2}  error = {:.3e}", manufactured_error(&u, &k11, &k22, &short, n, 2000, 0.1)?);
    }

    println!("temporal (n = 16, t = 1)");
    let mut prev: Option<f64> = None;
    for steps in [10, 20, 40, 80] {
        let e = manufactured_error(&u, &k11, &k22, &schedule, 16, steps, 1.0)?;
        let ratio = prev.map(|p| format!("{:.3}", p / e)).unwrap_or_default();
        println!("  steps = {steps:>3}  error = {e:.3e}  ratio {ratio}");
        prev = Some(e);
    }
    Ok(())
}

//! Diffusion tensor of a rotating material frame.

use anisodiff::tensor::{tensor_at, ThetaKind, ThetaSchedule};

fn main() -> anisodiff::error::Result<()> {
    let (k11, k22) = (4.0, 1.0);
    let schedule = ThetaSchedule::new(
        ThetaKind::Linear {
            theta0: 0.0,
            rate: std::f64::consts::PI,
        },
        1.0,
    )?;
    println!("{:>6} {:>8} {:>10} {:>10} {:>10} {:>8}", "t", "theta", "Kxx", "Kxy", "Kyy", "lambda");
    for q in 0..=8 {
        let t = q as f64 / 8.0;
        let theta = schedule.eval(t)?;
        let k = tensor_at(k11, k22, theta)?;
        let (lo, hi) = k.eigenvalues();
        println!(
            "{t:>6.3} {theta:>8.4} {:>10.6} {:>10.6} {:>10.6} {lo:.3}/{hi:.3}",
            k.k11, k.k12, k.k22
        );
    }
    Ok(())
}

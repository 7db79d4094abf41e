//! Sensitivity Jacobian against a sixth-order central difference.

use std::sync::Arc;

use anisodiff::assembly::BoundaryData;
use anisodiff::cheb::ChebGrid;
use anisodiff::forward::ForwardProblem;
use anisodiff::sensitivity::{fd_jacobian_with, full_jacobian, max_relative_discrepancy, FdOrder};
use anisodiff::tensor::{PrincipalField, ThetaKind, ThetaSchedule};

fn main() -> anisodiff::error::Result<()> {
    let n = 3;
    let grid = ChebGrid::new(n)?;
    let t_final = 0.05;
    let problem = ForwardProblem {
        field: PrincipalField::from_fn(&grid, |x, y| 1.0 + 0.5 * x * y, |x, _| 1.0 + 0.25 * x * x),
        schedule: ThetaSchedule::new(
            ThetaKind::Linear {
                theta0: std::f64::consts::FRAC_PI_6,
                rate: 1.0,
            },
            t_final,
        )?,
        boundary: BoundaryData::new(
            Arc::new(|t, _, y| 1.0 + t * y),
            Arc::new(|_, _, y| 0.5 - y),
            Arc::new(|_, x, _| x * x),
            Arc::new(|t, x, _| (t + x).sin()),
        ),
        source: Arc::new(|t, x, y| 1.0 + t * x * y),
        initial: grid.sample(|x, y| (std::f64::consts::PI * x).cos() * (y + 1.0)),
        t_final,
        steps: 50,
    };
    let times = [0.025, 0.05];
    let j = full_jacobian(&problem, &times)?;
    let fd = fd_jacobian_with(&problem, &times, 3e-3, FdOrder::Sixth)?;
    println!("Jacobian {}x{}", j.matrix.nrows(), j.matrix.ncols());
    println!("max |J| = {:.3e}", j.matrix.amax());
    println!("max relative discrepancy = {:.3e}", max_relative_discrepancy(&j.matrix, &fd.matrix, 1e-10));
    Ok(())
}

//! Crank–Nicolson march of a rotating-anisotropy problem with Robin edges.

use std::sync::Arc;

use anisodiff::assembly::BoundaryData;
use anisodiff::cheb::ChebGrid;
use anisodiff::forward::{solve_forward, ForwardProblem};
use anisodiff::tensor::{PrincipalField, ThetaKind, ThetaSchedule};

fn main() -> anisodiff::error::Result<()> {
    let n = 12;
    let grid = ChebGrid::new(n)?;
    let t_final = 0.5;
    let problem = ForwardProblem {
        field: PrincipalField::from_fn(&grid, |x, y| 2.0 + x * y, |x, _| 0.5 + 0.25 * x),
        schedule: ThetaSchedule::new(ThetaKind::Linear { theta0: 0.0, rate: 1.0 }, t_final)?,
        boundary: BoundaryData::new(
            Arc::new(|t, _, _| t),
            Arc::new(|_, _, _| 0.0),
            Arc::new(|_, _, _| 0.0),
            Arc::new(|_, x, _| x * (1.0 - x)),
        ),
        source: Arc::new(|_, _, _| 0.0),
        initial: grid.sample(|x, y| (-20.0 * ((x - 0.3).powi(2) + (y - 0.6).powi(2))).exp()),
        t_final,
        steps: 250,
    };
    let traj = solve_forward(&problem)?;
    let centre = grid.index(n / 2, n / 2);
    for (t, u) in traj.times.iter().zip(&traj.states).step_by(25) {
        println!("t = {t:.3}  max |U| = {:.6}  U(centre) = {:.6}", u.amax(), u[centre]);
    }
    Ok(())
}

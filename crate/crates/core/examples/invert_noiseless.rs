//! Recovers both principal diffusivities from exact snapshots.

use std::sync::Arc;

use anisodiff::assembly::BoundaryData;
use anisodiff::cheb::ChebGrid;
use anisodiff::forward::ForwardProblem;
use anisodiff::inversion::{
    interior_nodes, lm_solve, relative_l2_error, synthesize, InverseProblem, LmOptions,
};
use anisodiff::tensor::{PrincipalField, ThetaSchedule};
use nalgebra::DVector;

fn main() -> anisodiff::error::Result<()> {
    let n = 4;
    let grid = ChebGrid::new(n)?;
    let truth = PrincipalField::from_fn(&grid, |x, y| 1.0 + 0.5 * x * y, |x, _| 1.0 + 0.25 * x * x);
    let problem = ForwardProblem {
        field: truth.clone(),
        schedule: ThetaSchedule::constant(0.0, 0.1)?,
        boundary: BoundaryData::new(
            Arc::new(|_, _, y| y - 1.0),
            Arc::new(|_, _, y| 1.0 - y),
            Arc::new(|_, x, _| x - 1.0),
            Arc::new(|_, x, _| 1.0 + x),
        ),
        source: Arc::new(|_, x, y| 4.0 * (x - 0.5) * (y - 0.5)),
        initial: grid.sample(|x, y| (3.0 * x).sin() * (2.0 * y + 0.5).cos()),
        t_final: 0.1,
        steps: 100,
    };
    let data = synthesize(&problem, &[0.02, 0.04, 0.06, 0.08, 0.1])?;
    let inverse = InverseProblem::new(problem, data)?;
    let k0 = DVector::from_element(truth.to_unknowns().len(), 1.0);
    let out = lm_solve(&k0, &inverse, 0.0, &LmOptions::default())?;
    for h in &out.history {
        println!("iter {:>2}  phi {:.3e}  |F| {:.3e}  mu {:.2e}", h.iteration, h.phi, h.residual_norm, h.mu);
    }
    let est = PrincipalField::from_unknowns(n, out.k.as_slice())?;
    let nodes = interior_nodes(n);
    println!("status {:?}", out.status);
    println!("k11 interior error {:.2e}", relative_l2_error(est.k11_values(), truth.k11_values(), &nodes));
    println!("k22 interior error {:.2e}", relative_l2_error(est.k22_values(), truth.k22_values(), &nodes));
    Ok(())
}

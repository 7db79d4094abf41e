//! Noisy data and the discrepancy stop for several seeds.

use std::sync::Arc;

use anisodiff::assembly::BoundaryData;
use anisodiff::cheb::ChebGrid;
use anisodiff::forward::ForwardProblem;
use anisodiff::inversion::{
    add_noise, interior_nodes, lm_solve, relative_l2_error, synthesize, InverseProblem, LmOptions,
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
    let clean = synthesize(&problem, &[0.02, 0.04, 0.06, 0.08, 0.1])?;
    let k0 = DVector::from_element(truth.to_unknowns().len(), 1.0);
    let nodes = interior_nodes(n);
    let opts = LmOptions::default();
    for seed in [2026, 7, 42] {
        let noisy = add_noise(&clean, 0.01, seed)?;
        let inverse = InverseProblem::new(problem.clone(), noisy.clone())?;
        let out = lm_solve(&k0, &inverse, noisy.delta, &opts)?;
        let est = PrincipalField::from_unknowns(n, out.k.as_slice())?;
        println!(
            "seed {seed:>4}: {:?} after {} iterations, |F| = {:.3e} <= {:.3e}, errors k11 {:.1}% k22 {:.1}%",
            out.status,
            out.iterations(),
            out.residual_norm,
            opts.tau * noisy.delta,
            100.0 * relative_l2_error(est.k11_values(), truth.k11_values(), &nodes),
            100.0 * relative_l2_error(est.k22_values(), truth.k22_values(), &nodes),
        );
    }
    Ok(())
}

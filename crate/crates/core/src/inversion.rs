//! Levenberg–Marquardt reconstruction of the principal diffusivities from
//! state measurements, stopped by the discrepancy principle.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{integrate, steps_needed, ForwardProblem};
use crate::sensitivity::full_jacobian_with;
use crate::tensor::PrincipalField;

/// Observed states at measurement times.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub times: Vec<f64>,
    /// One full grid state per time.
    pub data: Vec<DVector<f64>>,
    /// Noise level `‖Ũ − U‖₂` over the observed entries.
    pub delta: f64,
    /// Observed nodes; `None` observes every node.
    pub mask: Option<Vec<bool>>,
    /// Whether any time fell between solver time nodes.
    pub interpolated: bool,
}

impl MeasurementSet {
    pub fn validate(&self, state_len: usize, t_final: f64) -> Result<()> {
        if self.times.is_empty() {
            return Err(Error::InvalidArgument("measurement set is empty".into()));
        }
        if self.times.len() != self.data.len() {
            return Err(Error::DimensionMismatch {
                expected: self.times.len(),
                got: self.data.len(),
            });
        }
        if self.times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument(
                "measurement times must be strictly increasing".into(),
            ));
        }
        if let Some(&t) = self.times.iter().find(|&&t| t < 0.0 || t > t_final * (1.0 + 1e-12)) {
            return Err(Error::TimeOutOfRange { t, t_final });
        }
        if let Some(d) = self.data.iter().find(|d| d.len() != state_len) {
            return Err(Error::DimensionMismatch {
                expected: state_len,
                got: d.len(),
            });
        }
        if let Some(m) = &self.mask {
            if m.len() != state_len {
                return Err(Error::DimensionMismatch {
                    expected: state_len,
                    got: m.len(),
                });
            }
        }
        if !(self.delta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise level must be non-negative, got {}",
                self.delta
            )));
        }
        Ok(())
    }

    fn observed(&self) -> Vec<usize> {
        let len = self.data[0].len();
        (0..len)
            .filter(|&k| self.mask.as_ref().is_none_or(|m| m[k]))
            .collect()
    }

    /// Stacked state indices that enter the residual.
    pub fn stacked_rows(&self) -> Vec<usize> {
        let len = self.data[0].len();
        let obs = self.observed();
        (0..self.times.len())
            .flat_map(|q| obs.iter().map(move |&k| q * len + k))
            .collect()
    }

    /// Observed data stacked by time.
    pub fn stacked(&self) -> DVector<f64> {
        let obs = self.observed();
        DVector::from_iterator(
            obs.len() * self.times.len(),
            self.data.iter().flat_map(|d| obs.iter().map(move |&k| d[k])),
        )
    }

    pub fn observation_count(&self) -> usize {
        self.observed().len() * self.times.len()
    }
}

/// Noiseless measurements of the forward solution at `times`.
pub fn synthesize(problem: &ForwardProblem, times: &[f64]) -> Result<MeasurementSet> {
    problem.validate()?;
    let steps = steps_needed(problem, times)?;
    let traj = integrate(problem, &problem.assembler()?, steps)?;
    let mut data = Vec::with_capacity(times.len());
    let mut interpolated = false;
    for &t in times {
        let (u, interp) = traj.sample(t)?;
        interpolated |= interp;
        data.push(u);
    }
    Ok(MeasurementSet {
        times: times.to_vec(),
        data,
        delta: 0.0,
        mask: None,
        interpolated,
    })
}

/// `Ũ = U + level · ‖U‖_∞ · ξ` with `ξ` standard normal from a seeded
/// ChaCha20 stream; records the exact `δ` over the observed entries.
pub fn add_noise(clean: &MeasurementSet, level: f64, seed: u64) -> Result<MeasurementSet> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise level must be non-negative, got {level}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let scale = level * clean.data.iter().map(|d| d.amax()).fold(0.0, f64::max);
    let data: Vec<DVector<f64>> = clean
        .data
        .iter()
        .map(|d| {
            d.map(|v| {
                let xi: f64 = StandardNormal.sample(&mut rng);
                v + scale * xi
            })
        })
        .collect();
    let mut out = MeasurementSet {
        data,
        ..clean.clone()
    };
    out.delta = (out.stacked() - clean.stacked()).norm();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    #[default]
    Identity,
    /// `D = diag(‖J e_ℓ‖)`.
    ColumnNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmOptions {
    /// Discrepancy factor `τ > 1`.
    pub tau: f64,
    pub scaling: Scaling,
    /// `μ = c ‖F‖²`.
    pub mu_factor: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub positivity_floor: f64,
    pub max_iterations: usize,
    /// Stop when `‖F‖` falls below this (noiseless data).
    pub residual_tol: f64,
    /// Stop when `‖Δk‖ ≤ step_tol (1 + ‖k‖)`.
    pub step_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            tau: 1.05,
            scaling: Scaling::Identity,
            mu_factor: 1.0,
            mu_min: 1e-12,
            mu_max: 1e8,
            positivity_floor: 1e-6,
            max_iterations: 50,
            residual_tol: 1e-11,
            step_tol: 1e-14,
        }
    }
}

impl LmOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.tau > 1.0) {
            return bad("tau must exceed 1");
        }
        if !(self.positivity_floor > 0.0) {
            return bad("positivity floor must be positive");
        }
        if !(self.mu_factor > 0.0) || !(self.mu_min > 0.0) || !(self.mu_max >= self.mu_min) {
            return bad("damping parameters must satisfy 0 < mu_min <= mu_max, mu_factor > 0");
        }
        if !(self.residual_tol >= 0.0) || !(self.step_tol >= 0.0) {
            return bad("tolerances must be non-negative");
        }
        Ok(())
    }
}

/// A nonlinear least-squares problem `min ½‖F(k)‖²`.
pub trait LeastSquares {
    fn dim(&self) -> usize;

    fn residual(&self, k: &DVector<f64>) -> Result<DVector<f64>>;

    fn jacobian(&self, k: &DVector<f64>) -> Result<DMatrix<f64>>;

    fn evaluate(&self, k: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        Ok((self.residual(k)?, self.jacobian(k)?))
    }
}

/// Diffusivity reconstruction from measurements of the forward problem.
#[derive(Debug, Clone)]
pub struct InverseProblem {
    pub forward: ForwardProblem,
    pub measurements: MeasurementSet,
    rows: Vec<usize>,
    observed: DVector<f64>,
    steps: usize,
}

impl InverseProblem {
    pub fn new(forward: ForwardProblem, measurements: MeasurementSet) -> Result<Self> {
        forward.validate()?;
        measurements.validate(forward.initial.len(), forward.t_final)?;
        let steps = steps_needed(&forward, &measurements.times)?;
        Ok(Self {
            rows: measurements.stacked_rows(),
            observed: measurements.stacked(),
            forward,
            measurements,
            steps,
        })
    }

    fn field(&self, k: &DVector<f64>) -> Result<PrincipalField> {
        PrincipalField::from_unknowns(self.forward.degree(), k.as_slice())
    }

    fn solve(&self, k: &DVector<f64>) -> Result<(ForwardProblem, crate::forward::Trajectory)> {
        let p = self.forward.with_field(self.field(k)?);
        let traj = integrate(&p, &p.assembler()?, self.steps)?;
        Ok((p, traj))
    }

    fn select(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|&r| full[r]))
    }
}

impl LeastSquares for InverseProblem {
    fn dim(&self) -> usize {
        2 * self.forward.initial.len()
    }

    fn residual(&self, k: &DVector<f64>) -> Result<DVector<f64>> {
        let (_, traj) = self.solve(k)?;
        let (u, _) = traj.observe(&self.measurements.times)?;
        Ok(self.select(&u) - &self.observed)
    }

    fn jacobian(&self, k: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.evaluate(k)?.1)
    }

    fn evaluate(&self, k: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (p, traj) = self.solve(k)?;
        let (u, _) = traj.observe(&self.measurements.times)?;
        let j = full_jacobian_with(&p, &traj, &self.measurements.times)?.matrix;
        Ok((self.select(&u) - &self.observed, j.select_rows(&self.rows)))
    }
}

/// `F(k)` and `φ = ½‖F‖²`.
pub fn residual(k: &DVector<f64>, problem: &impl LeastSquares) -> Result<(DVector<f64>, f64)> {
    let f = problem.residual(k)?;
    let phi = 0.5 * f.norm_squared();
    Ok((f, phi))
}

/// Solves `(JᵀJ + μ DᵀD) d = −JᵀF`, with `D = diag(dscale)`.
pub fn lm_direction(
    j: &DMatrix<f64>,
    f: &DVector<f64>,
    mu: f64,
    dscale: &DVector<f64>,
) -> Result<DVector<f64>> {
    if j.nrows() != f.len() {
        return Err(Error::DimensionMismatch {
            expected: j.nrows(),
            got: f.len(),
        });
    }
    if dscale.len() != j.ncols() {
        return Err(Error::DimensionMismatch {
            expected: j.ncols(),
            got: dscale.len(),
        });
    }
    if !(mu >= 0.0) {
        return Err(Error::InvalidArgument(format!("damping must be non-negative, got {mu}")));
    }
    let mut a = j.tr_mul(j);
    for (k, s) in dscale.iter().enumerate() {
        a[(k, k)] += mu * s * s;
    }
    let rhs = -j.tr_mul(f);
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(&rhs));
    }
    a.lu().solve(&rhs).ok_or(Error::IndefiniteSystem { mu })
}

fn scaling_vector(j: &DMatrix<f64>, mode: Scaling) -> DVector<f64> {
    match mode {
        Scaling::Identity => DVector::from_element(j.ncols(), 1.0),
        Scaling::ColumnNorm => {
            let norms = DVector::from_iterator(j.ncols(), j.column_iter().map(|c| c.norm()));
            let floor = norms.max() * 1e-8;
            norms.map(|v| v.max(floor).max(f64::MIN_POSITIVE))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub phi: f64,
    pub residual_norm: f64,
    /// Damping of the accepted step (`NaN` for the starting point).
    pub mu: f64,
    pub step_norm: f64,
    pub rejections: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LmStatus {
    /// `‖F‖ ≤ τδ`.
    Discrepancy,
    /// `‖F‖` below the residual tolerance.
    Residual,
    /// Step below the step tolerance.
    StepTolerance,
    /// Damping hit its ceiling without a decrease of `φ`.
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub k: DVector<f64>,
    pub status: LmStatus,
    pub converged: bool,
    pub residual_norm: f64,
    pub phi: f64,
    pub history: Vec<IterationRecord>,
}

impl LmOutcome {
    pub fn iterations(&self) -> usize {
        self.history.len().saturating_sub(1)
    }
}

/// Levenberg–Marquardt with `μ = c‖F‖²` (clipped), ×10 on rejected steps,
/// entrywise positivity floor and discrepancy stopping at `‖F‖ ≤ τδ`.
pub fn lm_solve(
    k0: &DVector<f64>,
    problem: &impl LeastSquares,
    delta: f64,
    opts: &LmOptions,
) -> Result<LmOutcome> {
    opts.validate()?;
    if k0.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: k0.len(),
        });
    }
    if let Some(v) = k0.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "initial guess must be positive, found {v}"
        )));
    }
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise level must be non-negative, got {delta}")));
    }
    let target = opts.tau * delta;
    let mut k = k0.clone();
    let (mut f, mut j) = problem.evaluate(&k)?;
    let mut phi = 0.5 * f.norm_squared();
    let mut history = vec![IterationRecord {
        iteration: 0,
        phi,
        residual_norm: f.norm(),
        mu: f64::NAN,
        step_norm: 0.0,
        rejections: 0,
    }];

    let finish = |k: DVector<f64>, f: &DVector<f64>, status: LmStatus, history: Vec<IterationRecord>| {
        let norm = f.norm();
        let converged = match status {
            LmStatus::Discrepancy => true,
            LmStatus::Residual | LmStatus::StepTolerance => delta == 0.0 || norm <= target,
            LmStatus::Stalled | LmStatus::MaxIterations => false,
        };
        LmOutcome {
            k,
            status,
            converged,
            residual_norm: norm,
            phi: 0.5 * norm * norm,
            history,
        }
    };

    for iteration in 1..=opts.max_iterations + 1 {
        let norm = f.norm();
        if delta > 0.0 && norm <= target {
            return Ok(finish(k, &f, LmStatus::Discrepancy, history));
        }
        if norm <= opts.residual_tol {
            return Ok(finish(k, &f, LmStatus::Residual, history));
        }
        if iteration > opts.max_iterations {
            break;
        }
        let dscale = scaling_vector(&j, opts.scaling);
        let mut mu = (opts.mu_factor * norm * norm).clamp(opts.mu_min, opts.mu_max);
        let mut rejections = 0;
        loop {
            let d = lm_direction(&j, &f, mu, &dscale)?;
            let trial = (&k + &d).map(|v| v.max(opts.positivity_floor));
            let step = (&trial - &k).norm();
            if step <= opts.step_tol * (1.0 + k.norm()) {
                return Ok(finish(k, &f, LmStatus::StepTolerance, history));
            }
            // a failed forward solve counts as a rejected step
            let accepted = match problem.residual(&trial) {
                Ok(ft) => {
                    let phi_t = 0.5 * ft.norm_squared();
                    (phi_t < phi).then_some((ft, phi_t))
                }
                Err(_) => None,
            };
            if let Some((ft, phi_t)) = accepted {
                k = trial;
                let (fk, jk) = problem.evaluate(&k)?;
                debug_assert!((fk.norm() - ft.norm()).abs() <= 1e-12 * (1.0 + ft.norm()));
                f = fk;
                j = jk;
                phi = phi_t.min(0.5 * f.norm_squared());
                history.push(IterationRecord {
                    iteration,
                    phi,
                    residual_norm: f.norm(),
                    mu,
                    step_norm: step,
                    rejections,
                });
                break;
            }
            rejections += 1;
            if mu >= opts.mu_max {
                return Ok(finish(k, &f, LmStatus::Stalled, history));
            }
            mu = (mu * 10.0).min(opts.mu_max);
        }
    }
    Ok(finish(k, &f, LmStatus::MaxIterations, history))
}

/// Relative L2 error of `estimate` against `truth` over the listed entries.
pub fn relative_l2_error(estimate: &[f64], truth: &[f64], entries: &[usize]) -> f64 {
    let num: f64 = entries.iter().map(|&k| (estimate[k] - truth[k]).powi(2)).sum();
    let den: f64 = entries.iter().map(|&k| truth[k].powi(2)).sum();
    (num / den).sqrt()
}

/// Lexicographic indices of the interior grid nodes.
pub fn interior_nodes(n: usize) -> Vec<usize> {
    (1..n)
        .flat_map(|j| (1..n).map(move |i| i + j * (n + 1)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear {
        a: DMatrix<f64>,
        b: DVector<f64>,
    }

    impl LeastSquares for Linear {
        fn dim(&self) -> usize {
            self.a.ncols()
        }
        fn residual(&self, k: &DVector<f64>) -> Result<DVector<f64>> {
            Ok(&self.a * k - &self.b)
        }
        fn jacobian(&self, _: &DVector<f64>) -> Result<DMatrix<f64>> {
            Ok(self.a.clone())
        }
    }

    fn linear() -> Linear {
        Linear {
            a: DMatrix::from_row_slice(
                4,
                3,
                &[2.0, 0.5, 0.0, 0.1, 1.0, 0.3, 0.0, 0.2, 3.0, 1.0, 1.0, 1.0],
            ),
            b: DVector::from_vec(vec![3.0, 2.0, 9.0, 4.5]),
        }
    }

    #[test]
    fn gauss_newton_limit() {
        let j = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]);
        let f = DVector::from_vec(vec![1.0, -2.0]);
        let d = lm_direction(&j, &f, 0.0, &DVector::from_element(2, 1.0)).unwrap();
        let gn = -j.clone().lu().solve(&f).unwrap();
        assert!((d - gn).amax() < 1e-14);
    }

    #[test]
    fn steepest_descent_limit() {
        let l = linear();
        let f = DVector::from_vec(vec![1.0, 0.5, -0.2, 0.3]);
        let mu = 1e8;
        let d = lm_direction(&l.a, &f, mu, &DVector::from_element(3, 1.0)).unwrap();
        let sd = -l.a.tr_mul(&f) / mu;
        let cos = d.dot(&sd) / (d.norm() * sd.norm());
        assert!(cos > 0.99);
        assert!((d.norm() / sd.norm() - 1.0).abs() < 0.01);
    }

    #[test]
    fn orthogonal_residual_gives_zero_step() {
        let j = DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
        let f = DVector::from_vec(vec![0.0, 1.0, -2.0]);
        let d = lm_direction(&j, &f, 0.5, &DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(d[0], 0.0);
    }

    #[test]
    fn linear_problem_reaches_least_squares_solution() {
        let l = linear();
        let normal = l.a.tr_mul(&l.a).cholesky().unwrap().solve(&l.a.tr_mul(&l.b));
        let phi_star = 0.5 * (&l.a * &normal - &l.b).norm_squared();
        let out = lm_solve(&DVector::from_element(3, 1.0), &l, 0.0, &LmOptions::default()).unwrap();
        assert!((out.phi - phi_star).abs() < 1e-10);
        assert!((&out.k - &normal).amax() < 1e-6);
        assert!(out.converged);
        for w in out.history.windows(2) {
            assert!(w[1].phi < w[0].phi);
        }
    }

    #[test]
    fn column_norm_scaling_also_converges() {
        let l = linear();
        let opts = LmOptions {
            scaling: Scaling::ColumnNorm,
            ..LmOptions::default()
        };
        let normal = l.a.tr_mul(&l.a).cholesky().unwrap().solve(&l.a.tr_mul(&l.b));
        let out = lm_solve(&DVector::from_element(3, 1.0), &l, 0.0, &opts).unwrap();
        assert!((&out.k - &normal).amax() < 1e-6);
    }

    #[test]
    fn positivity_floor_is_enforced() {
        // unconstrained minimiser has a negative entry
        let l = Linear {
            a: DMatrix::identity(2, 2),
            b: DVector::from_vec(vec![1.0, -1.0]),
        };
        let out = lm_solve(&DVector::from_element(2, 1.0), &l, 0.0, &LmOptions::default()).unwrap();
        assert!(out.k.iter().all(|&v| v >= 1e-6));
        assert!((out.k[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn discrepancy_stop_is_flagged_honestly() {
        let l = linear();
        let opts = LmOptions {
            max_iterations: 1,
            ..LmOptions::default()
        };
        // unreachable discrepancy: not converged
        let out = lm_solve(&DVector::from_element(3, 1.0), &l, 1e-9, &opts).unwrap();
        assert!(!out.converged || out.residual_norm <= 1.05e-9);
        // generous discrepancy: stops at start
        let out = lm_solve(&DVector::from_element(3, 1.0), &l, 1e3, &opts).unwrap();
        assert_eq!(out.status, LmStatus::Discrepancy);
        assert_eq!(out.iterations(), 0);
    }

    #[test]
    fn noise_statistics_and_determinism() {
        let clean = MeasurementSet {
            times: vec![0.1, 0.2],
            data: vec![DVector::from_element(250, 2.0), DVector::from_element(250, -1.0)],
            delta: 0.0,
            mask: None,
            interpolated: false,
        };
        let same = add_noise(&clean, 0.0, 7).unwrap();
        assert_eq!(same.data, clean.data);
        assert_eq!(same.delta, 0.0);
        let a = add_noise(&clean, 0.01, 42).unwrap();
        let b = add_noise(&clean, 0.01, 42).unwrap();
        assert_eq!(a, b);
        let ratio = a.delta / (0.01 * 2.0);
        assert!((ratio / 500f64.sqrt() - 1.0).abs() < 0.2, "{ratio}");
        assert_ne!(add_noise(&clean, 0.01, 43).unwrap().data, a.data);
    }

    #[test]
    fn mask_selects_rows() {
        let m = MeasurementSet {
            times: vec![0.0, 1.0],
            data: vec![DVector::from_vec(vec![1.0, 2.0, 3.0]), DVector::from_vec(vec![4.0, 5.0, 6.0])],
            delta: 0.0,
            mask: Some(vec![true, false, true]),
            interpolated: false,
        };
        assert_eq!(m.stacked_rows(), vec![0, 2, 3, 5]);
        assert_eq!(m.stacked().as_slice(), &[1.0, 3.0, 4.0, 6.0]);
    }

    #[test]
    fn interior_node_list() {
        assert_eq!(interior_nodes(3), vec![5, 6, 9, 10]);
    }
}

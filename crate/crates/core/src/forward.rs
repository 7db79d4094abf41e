//! Crank–Nicolson integration of `U' = M(t) U + Sg(t)`.

use nalgebra::{DMatrix, DVector};

use crate::assembly::{Assembler, BoundaryData};
use crate::cheb::{ChebGrid, DiffOperators};
use crate::error::{Error, Result};
use crate::expr::SpaceTimeFn;
use crate::linalg::Factorization;
use crate::tensor::{PrincipalField, ThetaSchedule};

/// Angle change below which the implicit matrix is reused.
pub const REFACTOR_THRESHOLD: f64 = 1e-14;

#[derive(Clone)]
pub struct ForwardProblem {
    pub field: PrincipalField,
    pub schedule: ThetaSchedule,
    pub boundary: BoundaryData,
    pub source: SpaceTimeFn,
    /// Initial state in lexicographic order.
    pub initial: DVector<f64>,
    pub t_final: f64,
    pub steps: usize,
}

impl std::fmt::Debug for ForwardProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForwardProblem")
            .field("degree", &self.degree())
            .field("schedule", &self.schedule)
            .field("t_final", &self.t_final)
            .field("steps", &self.steps)
            .finish_non_exhaustive()
    }
}

impl ForwardProblem {
    pub fn degree(&self) -> usize {
        self.field.degree()
    }

    pub fn grid(&self) -> Result<ChebGrid> {
        ChebGrid::new(self.degree())
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    /// `t_i = i Δt`, computed so that the last node is exactly `t_final`.
    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.t_final
        } else {
            self.t_final * i as f64 / self.steps as f64
        }
    }

    pub fn with_field(&self, field: PrincipalField) -> Self {
        Self {
            field,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "final time must be positive, got {}",
                self.t_final
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("at least one time step required".into()));
        }
        let len = (self.degree() + 1).pow(2);
        if self.initial.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: self.initial.len(),
            });
        }
        if self.schedule.t_final() + 1e-12 * self.t_final < self.t_final {
            return Err(Error::InvalidArgument(format!(
                "angle schedule ends at {} before final time {}",
                self.schedule.t_final(),
                self.t_final
            )));
        }
        Ok(())
    }

    pub fn assembler(&self) -> Result<Assembler> {
        let grid = self.grid()?;
        Assembler::new(self.field.clone(), DiffOperators::new(&grid))
    }
}

/// Snapshots on the uniform time mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub dt: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// States at `times` stacked in order; the flag reports whether any
    /// time required interpolation.
    pub fn observe(&self, times: &[f64]) -> Result<(DVector<f64>, bool)> {
        let len = self.states[0].len();
        let mut out = DVector::zeros(len * times.len());
        let mut any = false;
        for (q, &t) in times.iter().enumerate() {
            let (u, interp) = self.sample(t)?;
            out.rows_mut(q * len, len).copy_from(&u);
            any |= interp;
        }
        Ok((out, any))
    }

    /// State at `t`; the flag is true when `t` falls between mesh nodes and
    /// the value was interpolated linearly.
    pub fn sample(&self, t: f64) -> Result<(DVector<f64>, bool)> {
        let (lo, hi, w) = bracket(&self.times, t)?;
        if w == 0.0 {
            return Ok((self.states[lo].clone(), false));
        }
        Ok((&self.states[lo] * (1.0 - w) + &self.states[hi] * w, true))
    }
}

/// Checks measurement times and returns how many steps cover them.
pub fn steps_needed(problem: &ForwardProblem, times: &[f64]) -> Result<usize> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("no measurement times".into()));
    }
    if times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(
            "measurement times must be strictly increasing".into(),
        ));
    }
    let mesh: Vec<f64> = (0..=problem.steps).map(|i| problem.time(i)).collect();
    let (_, hi, _) = bracket(&mesh, *times.last().unwrap())?;
    bracket(&mesh, times[0])?;
    Ok(hi)
}

/// Finds `(lo, hi, weight)` with `t ≈ (1-w) times[lo] + w times[hi]`.
/// Times within `1e-10 Δt` of a node snap to it.
pub(crate) fn bracket(times: &[f64], t: f64) -> Result<(usize, usize, f64)> {
    let last = times.len() - 1;
    let span = times[last] - times[0];
    let tol = if last > 0 { 1e-10 * span / last as f64 } else { 0.0 };
    if t < times[0] - tol || t > times[last] + tol {
        return Err(Error::TimeOutOfRange {
            t,
            t_final: times[last],
        });
    }
    let k = times.partition_point(|&s| s < t - tol);
    let k = k.min(last);
    if (times[k] - t).abs() <= tol {
        return Ok((k, k, 0.0));
    }
    let (lo, hi) = (k - 1, k);
    Ok((lo, hi, (t - times[lo]) / (times[hi] - times[lo])))
}

/// One Crank–Nicolson step:
/// `(I − Δt/2 M₊) U₊ = (I + Δt/2 M) U + Δt/2 (Sg + Sg₊)`.
pub fn cn_step(
    m_i: &DMatrix<f64>,
    m_ip1: &DMatrix<f64>,
    sg_i: &DVector<f64>,
    sg_ip1: &DVector<f64>,
    u_i: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let len = u_i.len();
    for (got, what) in [
        (m_i.nrows(), "M_i"),
        (m_ip1.nrows(), "M_i+1"),
        (sg_i.len(), "Sg_i"),
        (sg_ip1.len(), "Sg_i+1"),
    ] {
        if got != len {
            return Err(Error::InvalidArgument(format!(
                "{what} has dimension {got}, state has {len}"
            )));
        }
    }
    let lhs = implicit_matrix(m_ip1, dt);
    let f = Factorization::new(lhs).map_err(|reason| Error::StepFailure { step: 0, reason })?;
    let rhs = u_i + (m_i * u_i) * (0.5 * dt) + (sg_i + sg_ip1) * (0.5 * dt);
    Ok(f.solve(&rhs))
}

fn implicit_matrix(m: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    let mut lhs = m * (-0.5 * dt);
    for k in 0..lhs.nrows() {
        lhs[(k, k)] += 1.0;
    }
    lhs
}

/// Matrices of successive CN steps, refactoring only when `θ` moves.
pub(crate) struct CnMarcher<'a> {
    assembler: &'a Assembler,
    schedule: &'a ThetaSchedule,
    dt: f64,
    times: Vec<f64>,
    current: Option<(f64, DMatrix<f64>)>,
    next: Option<(f64, DMatrix<f64>)>,
    implicit: Option<(f64, Factorization)>,
}

impl<'a> CnMarcher<'a> {
    pub fn new(assembler: &'a Assembler, schedule: &'a ThetaSchedule, times: Vec<f64>, dt: f64) -> Self {
        Self {
            assembler,
            schedule,
            dt,
            times,
            current: None,
            next: None,
            implicit: None,
        }
    }

    pub fn theta(&self, i: usize) -> Result<f64> {
        self.schedule.eval(self.times[i])
    }

    fn matrix_at(&self, theta: f64, reuse: &Option<(f64, DMatrix<f64>)>) -> Result<DMatrix<f64>> {
        if let Some((th, m)) = reuse {
            if (th - theta).abs() <= REFACTOR_THRESHOLD {
                return Ok(m.clone());
            }
        }
        self.assembler.matrix(theta)
    }

    /// Makes `M(t_i)`, `M(t_{i+1})` and the implicit factorization current.
    pub fn prepare(&mut self, i: usize) -> Result<()> {
        let th_i = self.theta(i)?;
        let th_n = self.theta(i + 1)?;
        let current = match self.next.take() {
            Some((th, m)) if (th - th_i).abs() <= REFACTOR_THRESHOLD => (th, m),
            other => {
                let m = self.matrix_at(th_i, &other)?;
                (th_i, m)
            }
        };
        let next_m = if (current.0 - th_n).abs() <= REFACTOR_THRESHOLD {
            current.1.clone()
        } else {
            self.assembler.matrix(th_n)?
        };
        let refactor = match &self.implicit {
            Some((th, _)) => (th - th_n).abs() > REFACTOR_THRESHOLD,
            None => true,
        };
        if refactor {
            let f = Factorization::new(implicit_matrix(&next_m, self.dt))
                .map_err(|reason| Error::StepFailure { step: i, reason })?;
            self.implicit = Some((th_n, f));
        }
        self.current = Some(current);
        self.next = Some((th_n, next_m));
        Ok(())
    }

    pub fn m_current(&self) -> &DMatrix<f64> {
        &self.current.as_ref().expect("prepare called").1
    }

    /// `(I + Δt/2 M_i) x`.
    pub fn explicit_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        x + (self.m_current() * x) * (0.5 * self.dt)
    }

    pub fn explicit_apply_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x + (self.m_current() * x) * (0.5 * self.dt)
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.implicit.as_ref().expect("prepare called").1.solve(rhs)
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.implicit.as_ref().expect("prepare called").1.solve_matrix(rhs)
    }
}

/// Integrates the full time window.
pub fn solve_forward(problem: &ForwardProblem) -> Result<Trajectory> {
    solve_forward_steps(problem, problem.steps)
}

/// Integrates only the first `max_steps` steps of the mesh.
pub fn solve_forward_steps(problem: &ForwardProblem, max_steps: usize) -> Result<Trajectory> {
    problem.validate()?;
    let assembler = problem.assembler()?;
    integrate(problem, &assembler, max_steps.min(problem.steps))
}

pub(crate) fn integrate(
    problem: &ForwardProblem,
    assembler: &Assembler,
    steps: usize,
) -> Result<Trajectory> {
    let dt = problem.dt();
    let all_times: Vec<f64> = (0..=problem.steps).map(|i| problem.time(i)).collect();
    let mut marcher = CnMarcher::new(assembler, &problem.schedule, all_times.clone(), dt);
    let source_at = |i: usize| -> Result<DVector<f64>> {
        let t = all_times[i];
        assembler.source(problem.schedule.eval(t)?, t, &problem.source, &problem.boundary)
    };
    let mut states = Vec::with_capacity(steps + 1);
    states.push(problem.initial.clone());
    let mut sg_prev = source_at(0)?;
    for i in 0..steps {
        marcher.prepare(i)?;
        let sg_next = source_at(i + 1)?;
        let rhs = marcher.explicit_apply(&states[i]) + (&sg_prev + &sg_next) * (0.5 * dt);
        let u = marcher.solve(&rhs);
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepFailure {
                step: i,
                reason: "non-finite state".into(),
            });
        }
        states.push(u);
        sg_prev = sg_next;
    }
    Ok(Trajectory {
        times: all_times[..=steps].to_vec(),
        states,
        dt,
    })
}

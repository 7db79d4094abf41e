//! Forward sensitivities `∂U/∂k` of the discrete trajectory.
//!
//! The unknown vector is `k = [k11 (lexicographic); k22 (lexicographic)]`.
//! Every nodal flux depends only on the diffusivities at its own node, so
//! `∂(MU + Sg)/∂k_ℓ` is a sum of two rank-one terms: a column of `D` times a
//! row functional of `U`, one for the x-flux and one for the y-flux at the
//! node of `ℓ`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::assembly::{
    edge_position, flux_stencil, node_role, trig_coeffs, Assembler, BoundaryData, Direction, Dual,
    Edge, NodeRole,
};
use crate::error::{Error, Result};
use crate::forward::{bracket, integrate, steps_needed, CnMarcher, ForwardProblem, Trajectory, REFACTOR_THRESHOLD};
use crate::tensor::PrincipalField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    K11,
    K22,
}

/// Position of one entry of the unknown vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UnknownIndex {
    pub component: Component,
    pub i: usize,
    pub j: usize,
}

impl UnknownIndex {
    /// Decodes the 0-based index `ell` for a grid of degree `n`.
    pub fn from_flat(n: usize, ell: usize) -> Result<Self> {
        let len = (n + 1) * (n + 1);
        if ell >= 2 * len {
            return Err(Error::InvalidArgument(format!(
                "unknown index {ell} out of range 0..{}",
                2 * len
            )));
        }
        let (component, k) = if ell < len {
            (Component::K11, ell)
        } else {
            (Component::K22, ell - len)
        };
        Ok(Self {
            component,
            i: k % (n + 1),
            j: k / (n + 1),
        })
    }

    pub fn flat(&self, n: usize) -> usize {
        let k = self.i + self.j * (n + 1);
        match self.component {
            Component::K11 => k,
            Component::K22 => k + (n + 1) * (n + 1),
        }
    }
}

/// `column ⊗ functional` placed in the rows listed in `rows`, with an
/// additional data term `data · f(datum)` on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneTerm {
    pub rows: Vec<usize>,
    pub column: DVector<f64>,
    /// Sparse row functional `(state index, weight)`.
    pub functional: Vec<(usize, f64)>,
    pub data: f64,
    /// Edge and node coordinates of the Robin datum multiplied by `data`.
    pub datum: Option<(Edge, f64, f64)>,
}

impl RankOneTerm {
    fn apply_functional(&self, u: &DVector<f64>) -> f64 {
        self.functional.iter().map(|&(k, w)| w * u[k]).sum()
    }

    fn datum_value(&self, bdata: &BoundaryData, t: f64) -> f64 {
        match self.datum {
            Some((edge, x, y)) if self.data != 0.0 => self.data * bdata.eval(edge, t, x, y),
            _ => 0.0,
        }
    }
}

/// Derivative of `M` (and of the boundary part of `Sg`) with respect to one
/// unknown at a fixed angle.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcePattern {
    pub unknown: UnknownIndex,
    pub len: usize,
    pub terms: Vec<RankOneTerm>,
}

impl SourcePattern {
    /// `∂M/∂k_ℓ` as a dense matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.len, self.len);
        for term in &self.terms {
            for (&r, &c) in term.rows.iter().zip(term.column.iter()) {
                for &(k, w) in &term.functional {
                    out[(r, k)] += c * w;
                }
            }
        }
        out
    }

    /// `∂M/∂k_ℓ · u`.
    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.len);
        for term in &self.terms {
            self.scatter(term, term.apply_functional(u), &mut out);
        }
        out
    }

    /// `∂Sg/∂k_ℓ`; the sampled source does not depend on `k`.
    pub fn data_vector(&self, bdata: &BoundaryData, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.len);
        for term in &self.terms {
            self.scatter(term, term.datum_value(bdata, t), &mut out);
        }
        out
    }

    /// Sensitivity forcing `W_ℓ = ∂M/∂k_ℓ · u + ∂Sg/∂k_ℓ`.
    pub fn forcing(&self, u: &DVector<f64>, bdata: &BoundaryData, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.len);
        for term in &self.terms {
            let s = term.apply_functional(u) + term.datum_value(bdata, t);
            self.scatter(term, s, &mut out);
        }
        out
    }

    fn scatter(&self, term: &RankOneTerm, s: f64, out: &mut DVector<f64>) {
        if s == 0.0 {
            return;
        }
        for (&r, &c) in term.rows.iter().zip(term.column.iter()) {
            out[r] += c * s;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

/// `∂M/∂k_ℓ` at angle `theta` for the field held by `assembler`.
pub fn dm_dk(ell: usize, assembler: &Assembler, theta: f64) -> Result<SourcePattern> {
    let n = assembler.degree();
    let m = n + 1;
    let unknown = UnknownIndex::from_flat(n, ell)?;
    let (a, b) = (unknown.i, unknown.j);
    let field = assembler.field();
    let d = &assembler.diff().d;
    let nodes = assembler.diff().grid().nodes();
    let tc = trig_coeffs(theta);
    let (k11, k22) = match unknown.component {
        Component::K11 => (Dual::variable(field.k11(a, b)), Dual::constant(field.k22(a, b))),
        Component::K22 => (Dual::constant(field.k11(a, b)), Dual::variable(field.k22(a, b))),
    };
    let mut terms = Vec::with_capacity(2);
    for dir in [Direction::X, Direction::Y] {
        let role = node_role(dir, a, b, n);
        let s = flux_stencil(dir, role, k11, k22, &tc, edge_position(role, a, b))?;
        let mut functional = Vec::new();
        // ∂_dir and ∂_other at (a, b)
        let (along_line, across_line): (Vec<usize>, Vec<usize>) = match dir {
            Direction::X => ((0..m).map(|q| q + b * m).collect(), (0..m).map(|q| a + q * m).collect()),
            Direction::Y => ((0..m).map(|q| a + q * m).collect(), (0..m).map(|q| q + b * m).collect()),
        };
        let (p_along, p_across) = match dir {
            Direction::X => (a, b),
            Direction::Y => (b, a),
        };
        if s.along.d != 0.0 {
            for q in 0..m {
                functional.push((along_line[q], s.along.d * d[(p_along, q)]));
            }
        }
        if s.across.d != 0.0 {
            for q in 0..m {
                functional.push((across_line[q], s.across.d * d[(p_across, q)]));
            }
        }
        if s.nodal.d != 0.0 {
            functional.push((a + b * m, s.nodal.d));
        }
        let datum = match role {
            NodeRole::Robin(e) | NodeRole::Eliminated(e) => Some((e, nodes[a], nodes[b])),
            NodeRole::Interior => None,
        };
        if functional.is_empty() && s.data.d == 0.0 {
            continue;
        }
        // flux at (a, b) feeds D[:, p_along] along the same line
        terms.push(RankOneTerm {
            rows: along_line,
            column: d.column(p_along).into_owned(),
            functional,
            data: s.data.d,
            datum,
        });
    }
    Ok(SourcePattern {
        unknown,
        len: m * m,
        terms,
    })
}

/// Sensitivity matrix sampled at measurement times: rows grouped by time,
/// columns ordered by unknown index.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedJacobian {
    pub times: Vec<f64>,
    pub matrix: DMatrix<f64>,
}

impl StackedJacobian {
    pub fn block(&self, q: usize) -> DMatrix<f64> {
        let rows = self.matrix.nrows() / self.times.len();
        self.matrix.rows(q * rows, rows).into_owned()
    }
}

fn check_field(problem: &ForwardProblem) -> Result<()> {
    problem.validate()?;
    crate::tensor::validate_field(&problem.field).into_result()
}

/// Sensitivities of the selected unknowns, integrated with the same CN
/// scheme and step as `trajectory`.
pub fn jacobian_columns(
    problem: &ForwardProblem,
    trajectory: &Trajectory,
    times: &[f64],
    ells: &[usize],
) -> Result<DMatrix<f64>> {
    check_field(problem)?;
    let steps = steps_needed(problem, times)?;
    if trajectory.len() <= steps {
        return Err(Error::InvalidArgument(format!(
            "trajectory has {} steps, measurements need {steps}",
            trajectory.len().saturating_sub(1)
        )));
    }
    let len = problem.initial.len();
    for &ell in ells {
        UnknownIndex::from_flat(problem.degree(), ell)?;
    }
    let assembler = problem.assembler()?;
    let chunks = rayon::current_num_threads().clamp(1, ells.len().max(1));
    let size = ells.len().div_ceil(chunks).max(1);
    let parts = ells
        .par_chunks(size)
        .map(|chunk| {
            march_chunk(problem, &assembler, trajectory, times, steps, chunk).map_err(|e| {
                Error::ColumnFailure {
                    column: chunk[0],
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = DMatrix::zeros(len * times.len(), ells.len());
    let mut col = 0;
    for p in parts {
        out.columns_mut(col, p.ncols()).copy_from(&p);
        col += p.ncols();
    }
    Ok(out)
}

fn march_chunk(
    problem: &ForwardProblem,
    assembler: &Assembler,
    trajectory: &Trajectory,
    times: &[f64],
    steps: usize,
    ells: &[usize],
) -> Result<DMatrix<f64>> {
    let len = problem.initial.len();
    let cols = ells.len();
    let dt = problem.dt();
    let mesh: Vec<f64> = (0..=problem.steps).map(|i| problem.time(i)).collect();
    let brackets = times
        .iter()
        .map(|&t| bracket(&mesh, t))
        .collect::<Result<Vec<_>>>()?;
    let keep: BTreeSet<usize> = brackets.iter().flat_map(|&(lo, hi, _)| [lo, hi]).collect();
    let mut stored = std::collections::HashMap::new();

    let mut patterns: Option<(f64, Vec<SourcePattern>)> = None;
    let mut forcing = |i: usize| -> Result<DMatrix<f64>> {
        let t = mesh[i];
        let theta = problem.schedule.eval(t)?;
        let stale = match &patterns {
            Some((th, _)) => (th - theta).abs() > REFACTOR_THRESHOLD,
            None => true,
        };
        if stale {
            let p = ells
                .iter()
                .map(|&ell| dm_dk(ell, assembler, theta))
                .collect::<Result<Vec<_>>>()?;
            patterns = Some((theta, p));
        }
        let u = &trajectory.states[i];
        let mut w = DMatrix::zeros(len, cols);
        for (c, p) in patterns.as_ref().unwrap().1.iter().enumerate() {
            w.set_column(c, &p.forcing(u, &problem.boundary, t));
        }
        Ok(w)
    };

    let mut s = DMatrix::zeros(len, cols);
    if keep.contains(&0) {
        stored.insert(0, s.clone());
    }
    let mut marcher = CnMarcher::new(assembler, &problem.schedule, mesh.clone(), dt);
    let mut w_prev = forcing(0)?;
    for i in 0..steps {
        marcher.prepare(i)?;
        let w_next = forcing(i + 1)?;
        let rhs = marcher.explicit_apply_matrix(&s) + (&w_prev + &w_next) * (0.5 * dt);
        s = marcher.solve_matrix(&rhs);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepFailure {
                step: i,
                reason: "non-finite sensitivity".into(),
            });
        }
        if keep.contains(&(i + 1)) {
            stored.insert(i + 1, s.clone());
        }
        w_prev = w_next;
    }

    let mut out = DMatrix::zeros(len * times.len(), cols);
    for (q, &(lo, hi, w)) in brackets.iter().enumerate() {
        let block = if w == 0.0 {
            stored[&lo].clone()
        } else {
            &stored[&lo] * (1.0 - w) + &stored[&hi] * w
        };
        out.rows_mut(q * len, len).copy_from(&block);
    }
    Ok(out)
}

/// One column of the stacked Jacobian.
pub fn jacobian_column(
    ell: usize,
    problem: &ForwardProblem,
    trajectory: &Trajectory,
    times: &[f64],
) -> Result<DVector<f64>> {
    let m = jacobian_columns(problem, trajectory, times, &[ell])?;
    Ok(m.column(0).into_owned())
}

/// All `2(n+1)²` columns; solves the forward problem first.
pub fn full_jacobian(problem: &ForwardProblem, times: &[f64]) -> Result<StackedJacobian> {
    check_field(problem)?;
    let steps = steps_needed(problem, times)?;
    let traj = integrate(problem, &problem.assembler()?, steps)?;
    full_jacobian_with(problem, &traj, times)
}

/// All columns for an already computed trajectory.
pub fn full_jacobian_with(
    problem: &ForwardProblem,
    trajectory: &Trajectory,
    times: &[f64],
) -> Result<StackedJacobian> {
    let ells: Vec<usize> = (0..2 * problem.initial.len()).collect();
    Ok(StackedJacobian {
        times: times.to_vec(),
        matrix: jacobian_columns(problem, trajectory, times, &ells)?,
    })
}

/// Observations of the forward solution at `times` for field `field`.
pub fn observe(problem: &ForwardProblem, field: PrincipalField, times: &[f64]) -> Result<DVector<f64>> {
    let p = problem.with_field(field);
    check_field(&p)?;
    let steps = steps_needed(&p, times)?;
    let traj = integrate(&p, &p.assembler()?, steps)?;
    Ok(traj.observe(times)?.0)
}

/// Central finite-difference stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FdOrder {
    #[default]
    Second,
    Fourth,
    Sixth,
}

impl FdOrder {
    /// `(offset multiples, weights, denominator)` of the stencil.
    fn stencil(self) -> (&'static [f64], &'static [f64], f64) {
        match self {
            FdOrder::Second => (&[1.0, -1.0], &[1.0, -1.0], 2.0),
            FdOrder::Fourth => (&[2.0, 1.0, -1.0, -2.0], &[-1.0, 8.0, -8.0, 1.0], 12.0),
            FdOrder::Sixth => (
                &[3.0, 2.0, 1.0, -1.0, -2.0, -3.0],
                &[1.0, -9.0, 45.0, -45.0, 9.0, -1.0],
                60.0,
            ),
        }
    }

    fn reach(self) -> f64 {
        match self {
            FdOrder::Second => 1.0,
            FdOrder::Fourth => 2.0,
            FdOrder::Sixth => 3.0,
        }
    }
}

/// Central-difference Jacobian with step `h_rel · (1 + |k_ℓ|)`.
pub fn fd_jacobian(problem: &ForwardProblem, times: &[f64], h_rel: f64) -> Result<StackedJacobian> {
    fd_jacobian_with(problem, times, h_rel, FdOrder::Second)
}

/// Central-difference Jacobian of the given order.
pub fn fd_jacobian_with(
    problem: &ForwardProblem,
    times: &[f64],
    h_rel: f64,
    order: FdOrder,
) -> Result<StackedJacobian> {
    if !(h_rel > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h_rel}")));
    }
    let n = problem.degree();
    let k = problem.field.to_unknowns();
    let (offsets, weights, denom) = order.stencil();
    let columns = (0..k.len())
        .into_par_iter()
        .map(|ell| {
            let h = h_rel * (1.0 + k[ell].abs());
            let lowest = k[ell] - order.reach() * h;
            if lowest <= 0.0 {
                let u = UnknownIndex::from_flat(n, ell)?;
                return Err(Error::NonPositiveDiffusivity {
                    component: match u.component {
                        Component::K11 => "k11",
                        Component::K22 => "k22",
                    },
                    i: u.i,
                    j: u.j,
                    value: lowest,
                });
            }
            let mut acc: Option<DVector<f64>> = None;
            for (&o, &w) in offsets.iter().zip(weights) {
                let mut kp = k.clone();
                kp[ell] += o * h;
                let obs = observe(problem, PrincipalField::from_unknowns(n, kp.as_slice())?, times)? * w;
                acc = Some(match acc {
                    Some(a) => a + obs,
                    None => obs,
                });
            }
            Ok(acc.expect("non-empty stencil") / (denom * h))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StackedJacobian {
        times: times.to_vec(),
        matrix: DMatrix::from_columns(&columns),
    })
}

/// Largest `|a − b| / max(|a|, |b|)` over entries where `max(|a|, |b|)`
/// exceeds `floor`.
pub fn max_relative_discrepancy(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    a.iter()
        .zip(b.iter())
        .filter_map(|(&x, &y)| {
            let scale = x.abs().max(y.abs());
            (scale > floor).then(|| (x - y).abs() / scale)
        })
        .fold(0.0, f64::max)
}

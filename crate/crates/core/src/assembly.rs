//! Boundary-closed collocation operator for `∇·(K∇U)` with Robin edges.
//!
//! The divergence at node `(i, j)` is `Σ_m D[i,m] Fx(m,j) + Σ_m D[j,m] Fy(i,m)`
//! where the nodal fluxes are
//!
//! * on an edge normal to the flux, the Robin data `s (U − f)` (`s = +1` on
//!   `x = 0`, `y = 0` and `−1` on `x = 1`, `y = 1`);
//! * on an edge parallel to the flux, `K∇U` with the edge-normal derivative
//!   eliminated through that edge's Robin relation;
//! * elsewhere `K∇U` with both derivatives taken spectrally.
//!
//! `M(t) = blockdiag(F_j) + Pᵀ blockdiag(G_i) P + X`, where `F_j` collects the
//! x-flux terms acting inside row block `j`, `G_i` the y-flux terms acting
//! inside column `i` and `X` the interior mixed-derivative couplings, which
//! carry the factor `½ sin 2θ` and vanish identically at `θ = 0`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use crate::cheb::{DiffOperators, GridPermutation};
use crate::error::{Error, Result};
use crate::expr::SpaceTimeFn;
use crate::tensor::{validate_field, PrincipalField, ThetaSchedule};

/// Below this the Robin relation cannot be solved for the normal derivative.
pub const MIN_CLOSURE_PIVOT: f64 = 1e-12;

/// `cos²θ`, `½ sin 2θ`, `sin²θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigCoeffs {
    pub c2: f64,
    pub si: f64,
    pub si2: f64,
}

pub fn trig_coeffs(theta: f64) -> TrigCoeffs {
    let (s, c) = theta.sin_cos();
    TrigCoeffs {
        c2: c * c,
        si: s * c,
        si2: s * s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    /// `x = 0`, data `f1`.
    Left,
    /// `x = 1`, data `f2`.
    Right,
    /// `y = 0`, data `f3`.
    Bottom,
    /// `y = 1`, data `f4`.
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];

    pub fn name(self) -> &'static str {
        match self {
            Edge::Left => "x=0",
            Edge::Right => "x=1",
            Edge::Bottom => "y=0",
            Edge::Top => "y=1",
        }
    }

    /// `+1` where the Robin relation reads `flux = U − f`, `−1` where it
    /// reads `flux = −U + f`.
    pub fn sign(self) -> f64 {
        match self {
            Edge::Left | Edge::Bottom => 1.0,
            Edge::Right | Edge::Top => -1.0,
        }
    }

    fn is_x_edge(self) -> bool {
        matches!(self, Edge::Left | Edge::Right)
    }

    /// Grid node `(i, j)` at position `index` along this edge.
    pub fn node(self, n: usize, index: usize) -> (usize, usize) {
        match self {
            Edge::Left => (0, index),
            Edge::Right => (n, index),
            Edge::Bottom => (index, 0),
            Edge::Top => (index, n),
        }
    }
}

/// Robin data `f1..f4` as functions of `(t, x, y)` on their edges.
#[derive(Clone)]
pub struct BoundaryData {
    pub f1: SpaceTimeFn,
    pub f2: SpaceTimeFn,
    pub f3: SpaceTimeFn,
    pub f4: SpaceTimeFn,
}

impl BoundaryData {
    pub fn new(f1: SpaceTimeFn, f2: SpaceTimeFn, f3: SpaceTimeFn, f4: SpaceTimeFn) -> Self {
        Self { f1, f2, f3, f4 }
    }

    pub fn homogeneous() -> Self {
        let z: SpaceTimeFn = Arc::new(|_, _, _| 0.0);
        Self::new(z.clone(), z.clone(), z.clone(), z)
    }

    pub fn eval(&self, edge: Edge, t: f64, x: f64, y: f64) -> f64 {
        match edge {
            Edge::Left => (self.f1)(t, x, y),
            Edge::Right => (self.f2)(t, x, y),
            Edge::Bottom => (self.f3)(t, x, y),
            Edge::Top => (self.f4)(t, x, y),
        }
    }
}

impl std::fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("BoundaryData { .. }")
    }
}

/// Elimination of the normal derivative from one Robin relation:
/// `normal · ∂ₙU + tangential · ∂ₜU = s (U − f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeClosure {
    pub edge: Edge,
    pub index: usize,
    /// Conormal coefficient multiplying the normal derivative (the pivot).
    pub normal: f64,
    /// Coefficient multiplying the tangential derivative.
    pub tangential: f64,
}

impl EdgeClosure {
    /// Multiplier of `s (U − f)` in the eliminated normal derivative.
    pub fn scale(&self) -> f64 {
        1.0 / self.normal
    }

    /// Multiplier of the tangential derivative in the eliminated normal
    /// derivative.
    pub fn tangential_ratio(&self) -> f64 {
        -self.tangential / self.normal
    }

    pub fn normal_derivative(&self, u: f64, f: f64, du_tangential: f64) -> f64 {
        (self.edge.sign() * (u - f) - self.tangential * du_tangential) / self.normal
    }
}

/// Closure coefficients at node `index` along `edge`.
pub fn boundary_coefficients(
    field: &PrincipalField,
    theta: f64,
    edge: Edge,
    index: usize,
) -> Result<EdgeClosure> {
    let n = field.degree();
    if index > n {
        return Err(Error::InvalidArgument(format!(
            "edge index {index} exceeds degree {n}"
        )));
    }
    let (i, j) = edge.node(n, index);
    let tc = trig_coeffs(theta);
    let (a, b) = (field.k11(i, j), field.k22(i, j));
    let k12 = tc.si * (a - b);
    let normal = if edge.is_x_edge() {
        tc.c2 * a + tc.si2 * b
    } else {
        tc.si2 * a + tc.c2 * b
    };
    if !(normal.abs() >= MIN_CLOSURE_PIVOT) {
        return Err(Error::SingularClosure {
            edge: edge.name(),
            index,
            pivot: normal,
        });
    }
    Ok(EdgeClosure {
        edge,
        index,
        normal,
        tangential: k12,
    })
}

/// Forward-mode dual number used to differentiate nodal fluxes with respect
/// to the local diffusivities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn constant(v: f64) -> Self {
        Self { v, d: 0.0 }
    }
    pub fn variable(v: f64) -> Self {
        Self { v, d: 1.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            d: self.d + o.d,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            v: self.v - o.v,
            d: self.d - o.d,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
        }
    }
}

impl Mul<Dual> for f64 {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self * o.v,
            d: self * o.d,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual {
            v: self.v / o.v,
            d: (self.d * o.v - self.v * o.d) / (o.v * o.v),
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            v: -self.v,
            d: -self.d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    X,
    Y,
}

/// How the flux in one direction is closed at a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum NodeRole {
    /// Node on an edge normal to the flux: Robin data.
    Robin(Edge),
    /// Node on an edge parallel to the flux: that edge's normal derivative is
    /// eliminated.
    Eliminated(Edge),
    Interior,
}

pub(crate) fn node_role(dir: Direction, i: usize, j: usize, n: usize) -> NodeRole {
    let (along, across) = match dir {
        Direction::X => (i, j),
        Direction::Y => (j, i),
    };
    let (lo, hi) = match dir {
        Direction::X => (Edge::Left, Edge::Right),
        Direction::Y => (Edge::Bottom, Edge::Top),
    };
    let (par_lo, par_hi) = match dir {
        Direction::X => (Edge::Bottom, Edge::Top),
        Direction::Y => (Edge::Left, Edge::Right),
    };
    if along == 0 {
        NodeRole::Robin(lo)
    } else if along == n {
        NodeRole::Robin(hi)
    } else if across == 0 {
        NodeRole::Eliminated(par_lo)
    } else if across == n {
        NodeRole::Eliminated(par_hi)
    } else {
        NodeRole::Interior
    }
}

/// Nodal flux `along·∂_dir U + across·∂_other U + nodal·U + data·f`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FluxStencil<T> {
    pub along: T,
    pub across: T,
    pub nodal: T,
    /// Multiplies the Robin datum of the role's edge.
    pub data: T,
}

pub(crate) fn flux_stencil(
    dir: Direction,
    role: NodeRole,
    k11: Dual,
    k22: Dual,
    tc: &TrigCoeffs,
    index: usize,
) -> Result<FluxStencil<Dual>> {
    let zero = Dual::constant(0.0);
    let kxx = tc.c2 * k11 + tc.si2 * k22;
    let kyy = tc.si2 * k11 + tc.c2 * k22;
    let kxy = tc.si * (k11 - k22);
    let (k_along, k_normal_other) = match dir {
        Direction::X => (kxx, kyy),
        Direction::Y => (kyy, kxx),
    };
    Ok(match role {
        NodeRole::Robin(edge) => {
            let s = edge.sign();
            FluxStencil {
                along: zero,
                across: zero,
                nodal: Dual::constant(s),
                data: Dual::constant(-s),
            }
        }
        NodeRole::Eliminated(edge) => {
            if !(k_normal_other.v.abs() >= MIN_CLOSURE_PIVOT) {
                return Err(Error::SingularClosure {
                    edge: edge.name(),
                    index,
                    pivot: k_normal_other.v,
                });
            }
            let s = edge.sign();
            let ratio = kxy / k_normal_other;
            FluxStencil {
                along: k_along - kxy * ratio,
                across: zero,
                nodal: s * ratio,
                data: -s * ratio,
            }
        }
        NodeRole::Interior => FluxStencil {
            along: k_along,
            across: kxy,
            nodal: zero,
            data: zero,
        },
    })
}

/// Value-only stencil at node `(i, j)`.
pub(crate) fn stencil_value(
    field: &PrincipalField,
    dir: Direction,
    i: usize,
    j: usize,
    tc: &TrigCoeffs,
) -> Result<(NodeRole, FluxStencil<f64>)> {
    let n = field.degree();
    let role = node_role(dir, i, j, n);
    let s = flux_stencil(
        dir,
        role,
        Dual::constant(field.k11(i, j)),
        Dual::constant(field.k22(i, j)),
        tc,
        edge_position(role, i, j),
    )?;
    Ok((
        role,
        FluxStencil {
            along: s.along.v,
            across: s.across.v,
            nodal: s.nodal.v,
            data: s.data.v,
        },
    ))
}

pub(crate) fn edge_position(role: NodeRole, i: usize, j: usize) -> usize {
    match role {
        NodeRole::Robin(e) | NodeRole::Eliminated(e) => {
            if e.is_x_edge() {
                j
            } else {
                i
            }
        }
        NodeRole::Interior => 0,
    }
}

/// Robin datum that a node's flux stencil refers to.
pub(crate) fn role_datum(
    role: NodeRole,
    bdata: &BoundaryData,
    t: f64,
    x: f64,
    y: f64,
) -> f64 {
    match role {
        NodeRole::Robin(e) | NodeRole::Eliminated(e) => bdata.eval(e, t, x, y),
        NodeRole::Interior => 0.0,
    }
}

/// One `(n+1)×(n+1)` block with its constant boundary vector.
#[derive(Debug, Clone)]
pub struct ClosedOperator {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Normal-derivative eliminations used inside this block (empty for
    /// interior blocks).
    pub eliminations: Vec<EdgeClosure>,
}

/// Assembled `M(t)` with its block decomposition.
#[derive(Debug, Clone)]
pub struct SystemOperator {
    pub t: f64,
    pub theta: f64,
    pub m: DMatrix<f64>,
    /// Boundary-data contribution to `Sg(t)`.
    pub b_global: DVector<f64>,
    pub f_blocks: Vec<ClosedOperator>,
    pub g_blocks: Vec<ClosedOperator>,
    /// Interior mixed-derivative coupling.
    pub cross: DMatrix<f64>,
}

/// Builds `M(t)` and `Sg(t)` for a fixed principal field.
///
/// The interior products `D1 · diag(k) · D2` are computed once; each time
/// level only rescales them by the trigonometric prefactors.
#[derive(Debug, Clone)]
pub struct Assembler {
    diff: DiffOperators,
    field: PrincipalField,
    perm: GridPermutation,
    row_k11: Vec<DMatrix<f64>>,
    row_k22: Vec<DMatrix<f64>>,
    col_k11: Vec<DMatrix<f64>>,
    col_k22: Vec<DMatrix<f64>>,
    robin_ends: DMatrix<f64>,
    cross_unit: DMatrix<f64>,
}

impl Assembler {
    pub fn new(field: PrincipalField, diff: DiffOperators) -> Result<Self> {
        let n = diff.degree();
        if field.degree() != n {
            return Err(Error::DimensionMismatch {
                expected: (n + 1) * (n + 1),
                got: field.len(),
            });
        }
        validate_field(&field).into_result()?;
        let m = n + 1;
        let interior = n.saturating_sub(1);
        let sandwich = |vals: Vec<f64>| {
            let k = DMatrix::from_diagonal(&DVector::from_vec(vals));
            &diff.d1 * k * &diff.d2
        };
        let row = |get: &dyn Fn(usize, usize) -> f64| -> Vec<DMatrix<f64>> {
            (0..m)
                .map(|j| sandwich((1..=interior).map(|i| get(i, j)).collect()))
                .collect()
        };
        let col = |get: &dyn Fn(usize, usize) -> f64| -> Vec<DMatrix<f64>> {
            (0..m)
                .map(|i| sandwich((1..=interior).map(|j| get(i, j)).collect()))
                .collect()
        };
        let row_k11 = row(&|i, j| field.k11(i, j));
        let row_k22 = row(&|i, j| field.k22(i, j));
        let col_k11 = col(&|i, j| field.k11(i, j));
        let col_k22 = col(&|i, j| field.k22(i, j));

        let mut robin_ends = DMatrix::zeros(m, m);
        robin_ends.column_mut(0).copy_from(&diff.d.column(0));
        robin_ends.column_mut(n).copy_from(&(-diff.d.column(n)));

        let len = m * m;
        let mut cross_unit = DMatrix::zeros(len, len);
        for a in 1..n {
            for b in 1..n {
                let w = field.k11(a, b) - field.k22(a, b);
                // x-flux at (a, b): D[i,a] · w · D[b,q] U(a,q) into row (i, b)
                for i in 0..m {
                    let di = diff.d[(i, a)] * w;
                    for q in 0..m {
                        cross_unit[(i + b * m, a + q * m)] += di * diff.d[(b, q)];
                    }
                }
                // y-flux at (a, b): D[j,b] · w · D[a,p] U(p,b) into row (a, j)
                for j in 0..m {
                    let dj = diff.d[(j, b)] * w;
                    for p in 0..m {
                        cross_unit[(a + j * m, p + b * m)] += dj * diff.d[(a, p)];
                    }
                }
            }
        }

        Ok(Self {
            perm: GridPermutation::new(n)?,
            diff,
            field,
            row_k11,
            row_k22,
            col_k11,
            col_k22,
            robin_ends,
            cross_unit,
        })
    }

    pub fn field(&self) -> &PrincipalField {
        &self.field
    }

    pub fn diff(&self) -> &DiffOperators {
        &self.diff
    }

    pub fn permutation(&self) -> &GridPermutation {
        &self.perm
    }

    pub fn degree(&self) -> usize {
        self.diff.degree()
    }

    pub fn state_len(&self) -> usize {
        self.diff.grid().state_len()
    }

    /// `(along, nodal)` coefficients of the flux in `dir` along one grid
    /// line, plus the closures used on that line.
    fn line_block(
        &self,
        dir: Direction,
        line: usize,
        tc: &TrigCoeffs,
        theta: f64,
    ) -> Result<(DMatrix<f64>, Vec<EdgeClosure>)> {
        let n = self.degree();
        let m = n + 1;
        let interior_line = line > 0 && line < n;
        if interior_line {
            let (a, b) = match dir {
                Direction::X => (&self.row_k11[line], &self.row_k22[line]),
                Direction::Y => (&self.col_k22[line], &self.col_k11[line]),
            };
            // kxx = c2 k11 + si2 k22 for x, kyy = c2 k22 + si2 k11 for y
            let a = a * tc.c2 + b * tc.si2 + &self.robin_ends;
            return Ok((a, Vec::new()));
        }
        let mut inner = DMatrix::zeros(m, m);
        let mut closures = Vec::new();
        for p in 0..m {
            let (i, j) = match dir {
                Direction::X => (p, line),
                Direction::Y => (line, p),
            };
            let (role, s) = stencil_value(&self.field, dir, i, j, tc)?;
            if let NodeRole::Eliminated(edge) = role {
                closures.push(boundary_coefficients(&self.field, theta, edge, edge_position(role, i, j))?);
            }
            for q in 0..m {
                inner[(p, q)] += s.along * self.diff.d[(p, q)];
            }
            inner[(p, p)] += s.nodal;
        }
        Ok((&self.diff.d * inner, closures))
    }

    fn line_data(
        &self,
        dir: Direction,
        line: usize,
        tc: &TrigCoeffs,
        t: f64,
        bdata: &BoundaryData,
    ) -> Result<DVector<f64>> {
        let m = self.degree() + 1;
        let nodes = self.diff.grid().nodes();
        let mut data = DVector::zeros(m);
        for p in 0..m {
            let (i, j) = match dir {
                Direction::X => (p, line),
                Direction::Y => (line, p),
            };
            let (role, s) = stencil_value(&self.field, dir, i, j, tc)?;
            if s.data != 0.0 {
                data[p] = s.data * role_datum(role, bdata, t, nodes[i], nodes[j]);
            }
        }
        Ok(&self.diff.d * data)
    }

    /// Block `F_j`: x-flux terms acting inside row block `j`.
    pub fn block_f(
        &self,
        theta: f64,
        t: f64,
        bdata: &BoundaryData,
        j: usize,
    ) -> Result<ClosedOperator> {
        self.check_line(j)?;
        let tc = trig_coeffs(theta);
        let (a, eliminations) = self.line_block(Direction::X, j, &tc, theta)?;
        let b = self.line_data(Direction::X, j, &tc, t, bdata)?;
        Ok(ClosedOperator { a, b, eliminations })
    }

    /// Block `G_i`: y-flux terms acting inside column `i`.
    pub fn block_g(
        &self,
        theta: f64,
        t: f64,
        bdata: &BoundaryData,
        i: usize,
    ) -> Result<ClosedOperator> {
        self.check_line(i)?;
        let tc = trig_coeffs(theta);
        let (a, eliminations) = self.line_block(Direction::Y, i, &tc, theta)?;
        let b = self.line_data(Direction::Y, i, &tc, t, bdata)?;
        Ok(ClosedOperator { a, b, eliminations })
    }

    fn check_line(&self, k: usize) -> Result<()> {
        if k > self.degree() {
            return Err(Error::InvalidArgument(format!(
                "line index {k} exceeds degree {}",
                self.degree()
            )));
        }
        Ok(())
    }

    /// `X(θ) = ½ sin 2θ · X₁`.
    pub fn cross(&self, theta: f64) -> DMatrix<f64> {
        &self.cross_unit * trig_coeffs(theta).si
    }

    fn scatter(&self, f: &[DMatrix<f64>], g: &[DMatrix<f64>], cross: DMatrix<f64>) -> DMatrix<f64> {
        let m = self.degree() + 1;
        let mut out = cross;
        for (j, fj) in f.iter().enumerate() {
            let mut view = out.view_mut((j * m, j * m), (m, m));
            view += fj;
        }
        for (i, gi) in g.iter().enumerate() {
            for c in 0..m {
                for r in 0..m {
                    out[(i + r * m, i + c * m)] += gi[(r, c)];
                }
            }
        }
        out
    }

    /// `M` at angle `θ`; boundary data do not enter.
    pub fn matrix(&self, theta: f64) -> Result<DMatrix<f64>> {
        let tc = trig_coeffs(theta);
        let m = self.degree() + 1;
        let f = (0..m)
            .map(|j| self.line_block(Direction::X, j, &tc, theta).map(|r| r.0))
            .collect::<Result<Vec<_>>>()?;
        let g = (0..m)
            .map(|i| self.line_block(Direction::Y, i, &tc, theta).map(|r| r.0))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.scatter(&f, &g, self.cross(theta)))
    }

    /// Boundary-data part of `Sg(t)`.
    pub fn boundary_vector(&self, theta: f64, t: f64, bdata: &BoundaryData) -> Result<DVector<f64>> {
        let tc = trig_coeffs(theta);
        let m = self.degree() + 1;
        let mut out = DVector::zeros(m * m);
        for line in 0..m {
            let bx = self.line_data(Direction::X, line, &tc, t, bdata)?;
            let by = self.line_data(Direction::Y, line, &tc, t, bdata)?;
            for p in 0..m {
                out[p + line * m] += bx[p];
                out[line + p * m] += by[p];
            }
        }
        Ok(out)
    }

    /// `Sg(t)`: boundary contributions plus grid samples of `g`.
    pub fn source(
        &self,
        theta: f64,
        t: f64,
        g: &SpaceTimeFn,
        bdata: &BoundaryData,
    ) -> Result<DVector<f64>> {
        let grid = self.diff.grid();
        let samples = grid.sample(|x, y| g(t, x, y));
        Ok(self.boundary_vector(theta, t, bdata)? + samples)
    }

    /// Full operator with its block decomposition.
    pub fn system_operator(&self, theta: f64, t: f64, bdata: &BoundaryData) -> Result<SystemOperator> {
        let m = self.degree() + 1;
        let f_blocks = (0..m)
            .into_par_iter()
            .map(|j| self.block_f(theta, t, bdata, j))
            .collect::<Result<Vec<_>>>()?;
        let g_blocks = (0..m)
            .into_par_iter()
            .map(|i| self.block_g(theta, t, bdata, i))
            .collect::<Result<Vec<_>>>()?;
        let cross = self.cross(theta);
        let fa: Vec<_> = f_blocks.iter().map(|b| b.a.clone()).collect();
        let ga: Vec<_> = g_blocks.iter().map(|b| b.a.clone()).collect();
        let mat = self.scatter(&fa, &ga, cross.clone());
        let mut b_global = DVector::zeros(m * m);
        for line in 0..m {
            for p in 0..m {
                b_global[p + line * m] += f_blocks[line].b[p];
                b_global[line + p * m] += g_blocks[line].b[p];
            }
        }
        Ok(SystemOperator {
            t,
            theta,
            m: mat,
            b_global,
            f_blocks,
            g_blocks,
            cross,
        })
    }
}

/// One-shot assembly of `M(t)`; prefer reusing an [`Assembler`] across times.
pub fn assemble_m(
    field: &PrincipalField,
    schedule: &ThetaSchedule,
    diff: &DiffOperators,
    bdata: &BoundaryData,
    t: f64,
) -> Result<SystemOperator> {
    let theta = schedule.eval(t)?;
    Assembler::new(field.clone(), diff.clone())?.system_operator(theta, t, bdata)
}

/// One-shot assembly of `Sg(t)`.
pub fn assemble_source(
    g: &SpaceTimeFn,
    bdata: &BoundaryData,
    field: &PrincipalField,
    schedule: &ThetaSchedule,
    diff: &DiffOperators,
    t: f64,
) -> Result<DVector<f64>> {
    let theta = schedule.eval(t)?;
    Assembler::new(field.clone(), diff.clone())?.source(theta, t, g, bdata)
}

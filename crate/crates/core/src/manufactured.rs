//! Manufactured-solution harness: from a closed-form `U(t, x, y)` and
//! principal fields, derive the source `g`, the Robin data `f1..f4` and the
//! initial state that make `U` an exact solution.

use std::sync::Arc;

use crate::assembly::BoundaryData;
use crate::cheb::ChebGrid;
use crate::expr::{Expr, SpaceTimeFn, Var};
use crate::tensor::{PrincipalField, ThetaSchedule};

struct Derivatives {
    u: Expr,
    ut: Expr,
    ux: Expr,
    uy: Expr,
    uxx: Expr,
    uxy: Expr,
    uyy: Expr,
    k11: Expr,
    k11x: Expr,
    k11y: Expr,
    k22: Expr,
    k22x: Expr,
    k22y: Expr,
    schedule: ThetaSchedule,
}

impl Derivatives {
    fn tensor(&self, t: f64, x: f64, y: f64) -> (f64, f64, f64) {
        let (s, c) = self.schedule.angle(t).sin_cos();
        let (a, b) = (self.k11.eval(t, x, y), self.k22.eval(t, x, y));
        (
            c * c * a + s * s * b,
            s * c * (a - b),
            s * s * a + c * c * b,
        )
    }

    fn flux(&self, t: f64, x: f64, y: f64) -> (f64, f64) {
        let (kxx, kxy, kyy) = self.tensor(t, x, y);
        let ux = self.ux.eval(t, x, y);
        let uy = self.uy.eval(t, x, y);
        (kxx * ux + kxy * uy, kxy * ux + kyy * uy)
    }

    fn source(&self, t: f64, x: f64, y: f64) -> f64 {
        let (s, c) = self.schedule.angle(t).sin_cos();
        let (c2, si, si2) = (c * c, s * c, s * s);
        let (kxx, kxy, kyy) = self.tensor(t, x, y);
        let e = |ex: &Expr| ex.eval(t, x, y);
        let (ux, uy) = (e(&self.ux), e(&self.uy));
        let (a_x, a_y, b_x, b_y) = (e(&self.k11x), e(&self.k11y), e(&self.k22x), e(&self.k22y));
        let div = (c2 * a_x + si2 * b_x) * ux
            + kxx * e(&self.uxx)
            + si * (a_x - b_x) * uy
            + si * (a_y - b_y) * ux
            + 2.0 * kxy * e(&self.uxy)
            + (si2 * a_y + c2 * b_y) * uy
            + kyy * e(&self.uyy);
        e(&self.ut) - div
    }
}

/// Source, boundary data and exact solution for a manufactured problem.
#[derive(Clone)]
pub struct ManufacturedData {
    pub source: SpaceTimeFn,
    pub boundary: BoundaryData,
    pub exact: SpaceTimeFn,
}

impl ManufacturedData {
    /// `U(0, ·, ·)` sampled on the grid.
    pub fn initial_state(&self, grid: &ChebGrid) -> nalgebra::DVector<f64> {
        grid.sample(|x, y| (self.exact)(0.0, x, y))
    }

    pub fn exact_state(&self, grid: &ChebGrid, t: f64) -> nalgebra::DVector<f64> {
        grid.sample(|x, y| (self.exact)(t, x, y))
    }
}

impl std::fmt::Debug for ManufacturedData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ManufacturedData { .. }")
    }
}

/// Builds `g = U_t − ∇·(K∇U)` and `f1..f4` from the Robin relations.
///
/// The principal fields may depend on `x` and `y` only.
pub fn manufactured_data(
    u_exact: &Expr,
    k11: &Expr,
    k22: &Expr,
    schedule: &ThetaSchedule,
) -> ManufacturedData {
    let ux = u_exact.diff(Var::X);
    let uy = u_exact.diff(Var::Y);
    let d = Arc::new(Derivatives {
        ut: u_exact.diff(Var::T),
        uxx: ux.diff(Var::X),
        uxy: ux.diff(Var::Y),
        uyy: uy.diff(Var::Y),
        ux,
        uy,
        u: u_exact.clone(),
        k11x: k11.diff(Var::X),
        k11y: k11.diff(Var::Y),
        k22x: k22.diff(Var::X),
        k22y: k22.diff(Var::Y),
        k11: k11.clone(),
        k22: k22.clone(),
        schedule: schedule.clone(),
    });
    let src = d.clone();
    let source: SpaceTimeFn = Arc::new(move |t, x, y| src.source(t, x, y));
    // flux = s (U − f)  ⇒  f = U − s·flux
    let edge = |normal_is_x: bool, sign: f64| -> SpaceTimeFn {
        let d = d.clone();
        Arc::new(move |t, x, y| {
            let (fx, fy) = d.flux(t, x, y);
            let flux = if normal_is_x { fx } else { fy };
            d.u.eval(t, x, y) - sign * flux
        })
    };
    let boundary = BoundaryData::new(
        edge(true, 1.0),
        edge(true, -1.0),
        edge(false, 1.0),
        edge(false, -1.0),
    );
    let ex = d.clone();
    ManufacturedData {
        source,
        boundary,
        exact: Arc::new(move |t, x, y| ex.u.eval(t, x, y)),
    }
}

/// Samples closed-form principal fields on the grid (at `t = 0`).
pub fn sample_field(grid: &ChebGrid, k11: &Expr, k22: &Expr) -> PrincipalField {
    PrincipalField::from_fn(grid, |x, y| k11.eval(0.0, x, y), |x, y| k22.eval(0.0, x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ThetaKind;
    use std::f64::consts::PI;

    fn parse(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    #[test]
    fn constant_solution_has_zero_source() {
        let sched = ThetaSchedule::constant(0.4, 1.0).unwrap();
        let m = manufactured_data(&parse("2.5"), &parse("1.3"), &parse("1.3"), &sched);
        for (t, x, y) in [(0.0, 0.1, 0.2), (0.5, 0.9, 0.3)] {
            assert_eq!((m.source)(t, x, y), 0.0);
            // flux vanishes, so the Robin data equal the constant
            for e in crate::assembly::Edge::ALL {
                assert_eq!(m.boundary.eval(e, t, x, y), 2.5);
            }
        }
    }

    #[test]
    fn linear_solution_with_constant_field_has_zero_source() {
        let sched = ThetaSchedule::constant(0.0, 1.0).unwrap();
        let m = manufactured_data(&parse("x"), &parse("2"), &parse("1"), &sched);
        assert_eq!((m.source)(0.3, 0.4, 0.5), 0.0);
        // K11 Ux = 2 at x = 0: f1 = U - 2
        assert_eq!((m.boundary.f1)(0.0, 0.0, 0.5), -2.0);
        let m = manufactured_data(&parse("x"), &parse("1+x"), &parse("1"), &sched);
        // g = -∂x(k11) = -1
        assert!(((m.source)(0.3, 0.4, 0.5) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn source_matches_finite_difference_residual() {
        let sched = ThetaSchedule::new(
            ThetaKind::Linear {
                theta0: 0.0,
                rate: PI / 8.0,
            },
            1.0,
        )
        .unwrap();
        let u = |t: f64, x: f64, y: f64| (-t).exp() * (PI * x).sin() * (PI * y).sin();
        let m = manufactured_data(
            &parse("exp(-t)*sin(pi*x)*sin(pi*y)"),
            &parse("2"),
            &parse("1"),
            &sched,
        );
        let h = 1e-4;
        let (t, x, y) = (0.6, 0.37, 0.71);
        let th = PI / 8.0 * t;
        let k = crate::tensor::tensor_at(2.0, 1.0, th).unwrap();
        let ut = (u(t + h, x, y) - u(t - h, x, y)) / (2.0 * h);
        let uxx = (u(t, x + h, y) - 2.0 * u(t, x, y) + u(t, x - h, y)) / (h * h);
        let uyy = (u(t, x, y + h) - 2.0 * u(t, x, y) + u(t, x, y - h)) / (h * h);
        let uxy = (u(t, x + h, y + h) - u(t, x + h, y - h) - u(t, x - h, y + h)
            + u(t, x - h, y - h))
            / (4.0 * h * h);
        let residual = ut - (k.k11 * uxx + 2.0 * k.k12 * uxy + k.k22 * uyy);
        assert!(((m.source)(t, x, y) - residual).abs() < 1e-6);
    }
}

//! Rotation-parametrised diffusion tensor `K = Φ(θ) diag(k11, k22) Φ(θ)ᵀ`.

use nalgebra::{DVector, Matrix2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::cheb::ChebGrid;
use crate::error::{Error, Result};

/// Grid samples of the principal diffusivities, lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalField {
    n: usize,
    k11: Vec<f64>,
    k22: Vec<f64>,
}

impl PrincipalField {
    /// Builds a field from raw samples. Positivity is not enforced here; see
    /// [`validate_field`].
    pub fn new(n: usize, k11: Vec<f64>, k22: Vec<f64>) -> Result<Self> {
        let len = (n + 1) * (n + 1);
        for v in [&k11, &k22] {
            if v.len() != len {
                return Err(Error::DimensionMismatch {
                    expected: len,
                    got: v.len(),
                });
            }
        }
        Ok(Self { n, k11, k22 })
    }

    pub fn constant(n: usize, k11: f64, k22: f64) -> Self {
        let len = (n + 1) * (n + 1);
        Self {
            n,
            k11: vec![k11; len],
            k22: vec![k22; len],
        }
    }

    pub fn from_fn<F, G>(grid: &ChebGrid, k11: F, k22: G) -> Self
    where
        F: Fn(f64, f64) -> f64,
        G: Fn(f64, f64) -> f64,
    {
        Self {
            n: grid.degree(),
            k11: grid.sample(k11).as_slice().to_vec(),
            k22: grid.sample(k22).as_slice().to_vec(),
        }
    }

    /// Inverse of [`PrincipalField::to_unknowns`]: `[k11 ; k22]`.
    pub fn from_unknowns(n: usize, k: &[f64]) -> Result<Self> {
        let len = (n + 1) * (n + 1);
        if k.len() != 2 * len {
            return Err(Error::DimensionMismatch {
                expected: 2 * len,
                got: k.len(),
            });
        }
        Ok(Self {
            n,
            k11: k[..len].to_vec(),
            k22: k[len..].to_vec(),
        })
    }

    /// The unknown vector `[k11 ; k22]` of length `2(n+1)²`.
    pub fn to_unknowns(&self) -> DVector<f64> {
        DVector::from_iterator(
            2 * self.k11.len(),
            self.k11.iter().chain(self.k22.iter()).copied(),
        )
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.k11.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k11.is_empty()
    }

    #[inline]
    pub fn k11(&self, i: usize, j: usize) -> f64 {
        self.k11[i + j * (self.n + 1)]
    }

    #[inline]
    pub fn k22(&self, i: usize, j: usize) -> f64 {
        self.k22[i + j * (self.n + 1)]
    }

    pub fn k11_values(&self) -> &[f64] {
        &self.k11
    }

    pub fn k22_values(&self) -> &[f64] {
        &self.k22
    }

    /// Swap the roles of x and y (grid transpose) for both components.
    pub fn transpose(&self) -> Self {
        let m = self.n + 1;
        let t = |v: &[f64]| (0..m * m).map(|k| v[(k / m) + (k % m) * m]).collect();
        Self {
            n: self.n,
            k11: t(&self.k11),
            k22: t(&self.k22),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldViolation {
    pub component: &'static str,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<FieldViolation>,
    /// Smallest pointwise `k11 · k22`.
    pub min_det: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty() && self.min_det > 0.0
    }

    pub fn into_result(self) -> Result<()> {
        match self.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::NonPositiveDiffusivity {
                component: v.component,
                i: v.i,
                j: v.j,
                value: v.value,
            }),
        }
    }
}

/// Lists every node where a principal diffusivity is not strictly positive.
pub fn validate_field(field: &PrincipalField) -> ValidationReport {
    let m = field.n + 1;
    let mut violations = Vec::new();
    let mut min_det = f64::INFINITY;
    for k in 0..field.len() {
        let (a, b) = (field.k11[k], field.k22[k]);
        // NaN fails both comparisons and is reported as well
        if !(a > 0.0) {
            violations.push(FieldViolation {
                component: "k11",
                i: k % m,
                j: k / m,
                value: a,
            });
        }
        if !(b > 0.0) {
            violations.push(FieldViolation {
                component: "k22",
                i: k % m,
                j: k / m,
                value: b,
            });
        }
        min_det = min_det.min(a * b);
    }
    ValidationReport {
        violations,
        min_det,
    }
}

/// Known angular schedule `θ(t)` on `[0, t_final]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaKind {
    Constant {
        value: f64,
    },
    /// `theta0 + rate · t`
    Linear { theta0: f64, rate: f64 },
    /// `mean + amplitude · sin(frequency · t + phase)`
    Sinusoidal {
        mean: f64,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Piecewise-linear through `(t, θ)` knots with increasing `t`.
    Tabulated { knots: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSchedule {
    kind: ThetaKind,
    t_final: f64,
}

impl ThetaSchedule {
    pub fn new(kind: ThetaKind, t_final: f64) -> Result<Self> {
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "schedule end time must be positive, got {t_final}"
            )));
        }
        if let ThetaKind::Tabulated { knots } = &kind {
            if knots.is_empty() {
                return Err(Error::InvalidArgument("tabulated schedule has no knots".into()));
            }
            if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                return Err(Error::InvalidArgument(
                    "tabulated schedule knots must have strictly increasing times".into(),
                ));
            }
        }
        Ok(Self { kind, t_final })
    }

    pub fn constant(theta: f64, t_final: f64) -> Result<Self> {
        Self::new(ThetaKind::Constant { value: theta }, t_final)
    }

    pub fn kind(&self) -> &ThetaKind {
        &self.kind
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, ThetaKind::Constant { .. })
    }

    /// Angle at `t`, checked against the schedule domain.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * self.t_final;
        if !(t >= -slack && t <= self.t_final + slack) {
            return Err(Error::TimeOutOfRange {
                t,
                t_final: self.t_final,
            });
        }
        Ok(self.angle(t))
    }

    /// Angle at `t` without the domain check, reduced to `[0, π)`.
    pub fn angle(&self, t: f64) -> f64 {
        normalize_angle(self.raw(t))
    }

    fn raw(&self, t: f64) -> f64 {
        match &self.kind {
            ThetaKind::Constant { value } => *value,
            ThetaKind::Linear { theta0, rate } => theta0 + rate * t,
            ThetaKind::Sinusoidal {
                mean,
                amplitude,
                frequency,
                phase,
            } => mean + amplitude * (frequency * t + phase).sin(),
            ThetaKind::Tabulated { knots } => {
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if t <= first.0 {
                    return first.1;
                }
                if t >= last.0 {
                    return last.1;
                }
                let k = knots.partition_point(|&(tk, _)| tk <= t);
                let (t0, a0) = knots[k - 1];
                let (t1, a1) = knots[k];
                a0 + (a1 - a0) * (t - t0) / (t1 - t0)
            }
        }
    }
}

/// Reduces an angle modulo π (the period of the tensor) into `[0, π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    if (0.0..PI).contains(&theta) {
        return theta;
    }
    let r = theta.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Free-function form of [`ThetaSchedule::eval`].
pub fn theta_eval(schedule: &ThetaSchedule, t: f64) -> Result<f64> {
    schedule.eval(t)
}

/// Symmetric 2×2 diffusion tensor at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorSample {
    pub k11: f64,
    pub k12: f64,
    pub k21: f64,
    pub k22: f64,
}

impl TensorSample {
    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.k11, self.k12, self.k21, self.k22)
    }

    pub fn trace(&self) -> f64 {
        self.k11 + self.k22
    }

    pub fn det(&self) -> f64 {
        self.k11 * self.k22 - self.k12 * self.k21
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.k11 + self.k22);
        let half_gap = (0.5 * (self.k11 - self.k22)).hypot(self.k12);
        (mean - half_gap, mean + half_gap)
    }
}

pub fn rotation_matrix(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Tensor entries from principal values and rotation angle.
pub fn tensor_at(k11: f64, k22: f64, theta: f64) -> Result<TensorSample> {
    if !(k11 > 0.0) || !(k22 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "principal diffusivities must be positive, got k11 = {k11}, k22 = {k22}"
        )));
    }
    let (s, c) = theta.sin_cos();
    let (c2, s2) = (c * c, s * s);
    let off = 0.5 * (k11 - k22) * (2.0 * theta).sin();
    Ok(TensorSample {
        k11: k11 * c2 + k22 * s2,
        k12: off,
        k21: off,
        k22: k11 * s2 + k22 * c2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6, FRAC_PI_8};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn constant_linear_tabulated() {
        let c = ThetaSchedule::constant(0.0, 5.0).unwrap();
        assert_eq!(c.eval(3.3).unwrap(), 0.0);
        let l = ThetaSchedule::new(
            ThetaKind::Linear {
                theta0: 0.0,
                rate: FRAC_PI_8,
            },
            4.0,
        )
        .unwrap();
        assert!(close(l.eval(2.0).unwrap(), FRAC_PI_4, 1e-15));
        let tab = ThetaSchedule::new(
            ThetaKind::Tabulated {
                knots: vec![(0.0, 0.0), (1.0, PI / 3.0)],
            },
            1.0,
        )
        .unwrap();
        assert!(close(tab.eval(0.5).unwrap(), FRAC_PI_6, 1e-15));
    }

    #[test]
    fn time_outside_domain_rejected() {
        let c = ThetaSchedule::constant(0.1, 1.0).unwrap();
        assert!(matches!(c.eval(1.5), Err(Error::TimeOutOfRange { .. })));
        assert!(c.eval(-0.1).is_err());
        assert!(c.eval(1.0).is_ok());
    }

    #[test]
    fn bad_schedules_rejected() {
        assert!(ThetaSchedule::constant(0.0, 0.0).is_err());
        let bad = ThetaKind::Tabulated {
            knots: vec![(0.0, 0.0), (0.0, 1.0)],
        };
        assert!(ThetaSchedule::new(bad, 1.0).is_err());
    }

    #[test]
    fn angles_reduced_modulo_pi() {
        assert!(close(normalize_angle(-0.1), PI - 0.1, 1e-15));
        assert!(close(normalize_angle(PI + 0.2), 0.2, 1e-15));
        assert_eq!(normalize_angle(0.3), 0.3);
        let t = tensor_at(2.0, 1.0, -0.1).unwrap();
        let u = tensor_at(2.0, 1.0, normalize_angle(-0.1)).unwrap();
        assert!(close(t.k12, u.k12, 1e-15) && close(t.k11, u.k11, 1e-15));
    }

    #[test]
    fn tensor_special_cases() {
        let t = tensor_at(3.0, 1.0, 0.0).unwrap();
        assert_eq!((t.k11, t.k12, t.k21, t.k22), (3.0, 0.0, 0.0, 1.0));
        let t = tensor_at(2.0, 1.0, FRAC_PI_4).unwrap();
        assert!(close(t.k11, 1.5, 1e-15) && close(t.k22, 1.5, 1e-15));
        assert!(close(t.k12, 0.5, 1e-15) && t.k12 == t.k21);
        let t = tensor_at(1.7, 1.7, 0.9).unwrap();
        assert_eq!(t.k12, 0.0);
        assert!(close(t.k11, 1.7, 1e-15) && close(t.k22, 1.7, 1e-15));
        assert!(tensor_at(0.0, 1.0, 0.0).is_err());
        assert!(tensor_at(1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn rotation_matrix_basics() {
        assert_eq!(rotation_matrix(0.0), Matrix2::identity());
        let r = rotation_matrix(FRAC_PI_2);
        assert!((r - Matrix2::new(0.0, -1.0, 1.0, 0.0)).amax() < 1e-16);
        let r = rotation_matrix(0.3);
        assert!((r * r.transpose() - Matrix2::identity()).amax() < 1e-15);
        assert!(close(r.determinant(), 1.0, 1e-15));
    }

    #[test]
    fn validation_reports_offending_nodes() {
        let f = PrincipalField::constant(2, 1.0, 1.0);
        assert!(validate_field(&f).is_valid());
        let mut k11 = vec![1.0; 9];
        k11[4] = 0.0;
        let f = PrincipalField::new(2, k11, vec![1.0; 9]).unwrap();
        let r = validate_field(&f);
        assert_eq!(r.violations.len(), 1);
        assert_eq!((r.violations[0].i, r.violations[0].j), (1, 1));
        assert!(r.clone().into_result().is_err());
        let f = PrincipalField::constant(3, 2.0, 1.0);
        let r = validate_field(&f);
        assert!(r.violations.is_empty());
        assert_eq!(r.min_det, 2.0);
    }

    #[test]
    fn unknown_layout_round_trips() {
        let g = ChebGrid::new(3).unwrap();
        let f = PrincipalField::from_fn(&g, |x, y| 1.0 + x * y, |x, _| 2.0 + x);
        let k = f.to_unknowns();
        assert_eq!(k.len(), 32);
        assert_eq!(k[16], f.k22(0, 0));
        assert_eq!(PrincipalField::from_unknowns(3, k.as_slice()).unwrap(), f);
        assert_eq!(f.transpose().k11(1, 2), f.k11(2, 1));
        assert_eq!(f.transpose().transpose(), f);
    }
}

//! Dense LU with partial pivoting plus a 1-norm condition estimate.

use nalgebra::{DMatrix, DVector, Dyn, LU};

/// Factorization refused when the condition estimate exceeds this.
pub const MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Clone)]
pub struct Factorization {
    lu: LU<f64, Dyn, Dyn>,
    cond: f64,
}

impl Factorization {
    /// Factors `a`; fails on exact singularity or when the estimated
    /// 1-norm condition number exceeds [`MAX_CONDITION`].
    pub fn new(a: DMatrix<f64>) -> Result<Self, String> {
        if !a.is_square() {
            return Err(format!("matrix is {}x{}, not square", a.nrows(), a.ncols()));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err("matrix has non-finite entries".into());
        }
        let norm1 = one_norm(&a);
        let lu = a.lu();
        if !lu.is_invertible() {
            return Err("matrix is singular".into());
        }
        let cond = norm1 * inverse_one_norm_estimate(&lu);
        if !(cond <= MAX_CONDITION) {
            return Err(format!("condition estimate {cond:e} exceeds {MAX_CONDITION:e}"));
        }
        Ok(Self { lu, cond })
    }

    pub fn condition_estimate(&self) -> f64 {
        self.cond
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.lu.solve(b).expect("factorization checked invertible")
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu.solve(b).expect("factorization checked invertible")
    }
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `Aᵀ x = b` from `P A = L U`.
fn solve_transpose(lu: &LU<f64, Dyn, Dyn>, b: &DVector<f64>) -> DVector<f64> {
    let l = lu.l();
    let u = lu.u();
    let w = u
        .tr_solve_upper_triangular(b)
        .expect("nonzero pivots");
    let mut v = l.tr_solve_lower_triangular(&w).expect("unit diagonal");
    lu.p().inv_permute_rows(&mut v);
    v
}

/// Hager's estimator for `‖A⁻¹‖₁`.
fn inverse_one_norm_estimate(lu: &LU<f64, Dyn, Dyn>) -> f64 {
    let n = lu.l().nrows();
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut estimate = 0.0;
    for _ in 0..5 {
        let y = lu.solve(&x).expect("nonzero pivots");
        estimate = y.iter().map(|v| v.abs()).sum::<f64>();
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let z = solve_transpose(lu, &xi);
        let (jmax, zmax) = z
            .iter()
            .enumerate()
            .map(|(k, v)| (k, v.abs()))
            .fold((0, 0.0), |acc, it| if it.1 > acc.1 { it } else { acc });
        if zmax <= z.dot(&x) {
            break;
        }
        x = DVector::zeros(n);
        x[jmax] = 1.0;
    }
    estimate
}

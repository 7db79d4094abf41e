//! Chebyshev–Gauss–Lobatto grids on `[0, 1]` and their collocation
//! differentiation matrices.
//!
//! Nodes ascend from `0` to `1`. Grid functions on the square are stored
//! lexicographically with the x-index running fastest: entry `i + j (n+1)`
//! holds the value at `(x_i, y_j)`, so block `j` is the row of values at
//! fixed `y_j`.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Gauss–Lobatto nodes `½(1 − cos(iπ/n))`, `i = 0..=n`.
///
/// Evaluated as `½(1 + sin((2i − n)π / 2n))`, which gives exact endpoints,
/// an exact midpoint for even `n` and mirror symmetry about `½`.
pub fn gauss_lobatto_nodes(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "polynomial degree must be at least 1".into(),
        ));
    }
    Ok((0..=n).map(|i| 0.5 * (1.0 + node_angle(i, n).sin())).collect())
}

fn node_angle(i: usize, n: usize) -> f64 {
    (2.0 * i as f64 - n as f64) * PI / (2.0 * n as f64)
}

/// The one-dimensional collocation grid shared by both axes.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebGrid {
    n: usize,
    nodes: Vec<f64>,
}

impl ChebGrid {
    pub fn new(n: usize) -> Result<Self> {
        Ok(Self {
            n,
            nodes: gauss_lobatto_nodes(n)?,
        })
    }

    /// Polynomial degree; the grid has `n + 1` nodes per axis.
    pub fn degree(&self) -> usize {
        self.n
    }

    /// Number of nodes per axis.
    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of unknowns of a grid function on the square.
    pub fn state_len(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Lexicographic position of node `(x_i, y_j)`.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + j * (self.n + 1)
    }

    /// Samples `f(x, y)` in lexicographic order.
    pub fn sample<F: Fn(f64, f64) -> f64>(&self, f: F) -> DVector<f64> {
        let m = self.len();
        DVector::from_fn(m * m, |k, _| f(self.nodes[k % m], self.nodes[k / m]))
    }
}

/// First-derivative collocation matrix and the row/column splits used by the
/// boundary-closed operators.
#[derive(Debug, Clone)]
pub struct DiffOperators {
    grid: ChebGrid,
    /// Full `(n+1)×(n+1)` derivative matrix on `[0, 1]`.
    pub d: DMatrix<f64>,
    /// Interior columns `d_1 .. d_{n-1}`.
    pub d1: DMatrix<f64>,
    /// Interior rows `r_1 .. r_{n-1}`.
    pub d2: DMatrix<f64>,
    /// `d1` padded with a zero column on each side.
    pub d1_0: DMatrix<f64>,
    /// First and last rows taken from `d1_0`, interior rows from `d2`.
    pub d_hat: DMatrix<f64>,
}

impl DiffOperators {
    pub fn new(grid: &ChebGrid) -> Self {
        let n = grid.degree();
        let m = n + 1;
        let weight = |j: usize| {
            let sign = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
            if j == 0 || j == n {
                0.5 * sign
            } else {
                sign
            }
        };
        let mut d = DMatrix::zeros(m, m);
        for i in 0..m {
            let ai = node_angle(i, n);
            let mut row_sum = 0.0;
            for j in 0..m {
                if i == j {
                    continue;
                }
                let aj = node_angle(j, n);
                // x_i - x_j without cancellation
                let dx = (0.5 * (ai + aj)).cos() * (0.5 * (ai - aj)).sin();
                let v = weight(j) / weight(i) / dx;
                d[(i, j)] = v;
                row_sum += v;
            }
            d[(i, i)] = -row_sum;
        }

        let interior = n.saturating_sub(1);
        let d1 = d.columns(1, interior).into_owned();
        let d2 = d.rows(1, interior).into_owned();
        let mut d1_0 = d.clone();
        d1_0.column_mut(0).fill(0.0);
        d1_0.column_mut(n).fill(0.0);
        let mut d_hat = d.clone();
        d_hat.row_mut(0).copy_from(&d1_0.row(0));
        d_hat.row_mut(n).copy_from(&d1_0.row(n));

        Self {
            grid: grid.clone(),
            d,
            d1,
            d2,
            d1_0,
            d_hat,
        }
    }

    pub fn grid(&self) -> &ChebGrid {
        &self.grid
    }

    pub fn degree(&self) -> usize {
        self.grid.degree()
    }

    /// Row `r_i` of `D`.
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.d.row(i).transpose()
    }

    /// Column `d_i` of `D`.
    pub fn column(&self, i: usize) -> DVector<f64> {
        self.d.column(i).into_owned()
    }

    /// Column `d̂_i` of `D̂`.
    pub fn hat_column(&self, i: usize) -> DVector<f64> {
        self.d_hat.column(i).into_owned()
    }

    /// x-derivative of a lexicographic grid function.
    pub fn dx(&self, u: &DVector<f64>) -> DVector<f64> {
        let m = self.grid.len();
        let mut out = DVector::zeros(m * m);
        for j in 0..m {
            for i in 0..m {
                let mut s = 0.0;
                for p in 0..m {
                    s += self.d[(i, p)] * u[p + j * m];
                }
                out[i + j * m] = s;
            }
        }
        out
    }

    /// y-derivative of a lexicographic grid function.
    pub fn dy(&self, u: &DVector<f64>) -> DVector<f64> {
        let m = self.grid.len();
        let mut out = DVector::zeros(m * m);
        for j in 0..m {
            for i in 0..m {
                let mut s = 0.0;
                for q in 0..m {
                    s += self.d[(j, q)] * u[i + q * m];
                }
                out[i + j * m] = s;
            }
        }
        out
    }
}

/// Convenience wrapper: `DiffOperators` for a grid.
pub fn diff_matrix(grid: &ChebGrid) -> DiffOperators {
    DiffOperators::new(grid)
}

/// Commutation permutation exchanging the roles of the x and y indices.
///
/// Maps entry `i + j(n+1)` to `j + i(n+1)`. It is an involution, so it is its
/// own transpose and inverse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridPermutation {
    m: usize,
    target: Vec<usize>,
}

impl GridPermutation {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "polynomial degree must be at least 1".into(),
            ));
        }
        let m = n + 1;
        let target = (0..m * m).map(|k| (k / m) + (k % m) * m).collect();
        Ok(Self { m, target })
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    /// Position that entry `k` moves to.
    pub fn target(&self, k: usize) -> usize {
        self.target[k]
    }

    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(u.len());
        for (k, &t) in self.target.iter().enumerate() {
            out[t] = u[k];
        }
        out
    }

    pub fn apply_transpose(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(u.len(), |k, _| u[self.target[k]])
    }

    /// `P · A · Pᵀ` for a square matrix on the full grid.
    pub fn conjugate(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let len = self.len();
        let mut out = DMatrix::zeros(len, len);
        for c in 0..len {
            for r in 0..len {
                out[(self.target[r], self.target[c])] = a[(r, c)];
            }
        }
        out
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let len = self.len();
        let mut p = DMatrix::zeros(len, len);
        for (k, &t) in self.target.iter().enumerate() {
            p[(t, k)] = 1.0;
        }
        p
    }

    pub fn block_size(&self) -> usize {
        self.m
    }
}

/// Convenience wrapper matching the grid-degree signature.
pub fn grid_permutation(n: usize) -> Result<GridPermutation> {
    GridPermutation::new(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_small_degrees() {
        assert_eq!(gauss_lobatto_nodes(1).unwrap(), vec![0.0, 1.0]);
        assert_eq!(gauss_lobatto_nodes(2).unwrap(), vec![0.0, 0.5, 1.0]);
        let x = gauss_lobatto_nodes(4).unwrap();
        let expect = [0.0, 0.146_446_609_406_726_24, 0.5, 0.853_553_390_593_273_8, 1.0];
        for (a, b) in x.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn degree_zero_rejected() {
        assert!(gauss_lobatto_nodes(0).is_err());
        assert!(ChebGrid::new(0).is_err());
        assert!(GridPermutation::new(0).is_err());
    }

    #[test]
    fn nodes_symmetric_and_increasing() {
        for n in 1..40 {
            let x = gauss_lobatto_nodes(n).unwrap();
            assert_eq!(x[0], 0.0);
            assert_eq!(x[n], 1.0);
            for i in 0..n {
                assert!(x[i + 1] > x[i]);
                assert!((x[i] + x[n - i] - 1.0).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn linear_interpolant_derivative() {
        let d = DiffOperators::new(&ChebGrid::new(1).unwrap());
        assert_eq!(d.d, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, -1.0, 1.0]));
    }

    #[test]
    fn derivative_of_constants_and_identity() {
        for n in 1..25 {
            let g = ChebGrid::new(n).unwrap();
            let d = DiffOperators::new(&g);
            let x = DVector::from_column_slice(g.nodes());
            let ones = DVector::from_element(n + 1, 1.0);
            assert!((&d.d * &ones).amax() <= 1e-12);
            assert!((&d.d * &x - &ones).amax() <= 1e-12, "n = {n}");
        }
    }

    #[test]
    fn square_is_differentiated_exactly() {
        let g = ChebGrid::new(4).unwrap();
        let d = DiffOperators::new(&g);
        let x = DVector::from_column_slice(g.nodes());
        let x2 = x.map(|v| v * v);
        assert!((&d.d * x2 - 2.0 * x).amax() < 1e-12);
    }

    #[test]
    fn polynomials_up_to_degree_n_exact() {
        for n in 2..=12 {
            let g = ChebGrid::new(n).unwrap();
            let d = DiffOperators::new(&g);
            for p in 0..=n as i32 {
                let u = DVector::from_iterator(n + 1, g.nodes().iter().map(|x| x.powi(p)));
                let du = DVector::from_iterator(
                    n + 1,
                    g.nodes()
                        .iter()
                        .map(|x| if p == 0 { 0.0 } else { p as f64 * x.powi(p - 1) }),
                );
                assert!((&d.d * u - du).amax() < 1e-10, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn splits_have_expected_shape() {
        let g = ChebGrid::new(5).unwrap();
        let d = DiffOperators::new(&g);
        assert_eq!(d.d1.shape(), (6, 4));
        assert_eq!(d.d2.shape(), (4, 6));
        assert!(d.d1_0.column(0).iter().all(|&v| v == 0.0));
        assert!(d.d1_0.column(5).iter().all(|&v| v == 0.0));
        assert_eq!(d.d1_0.columns(1, 4), d.d1);
        assert_eq!(d.d_hat.rows(1, 4), d.d2);
        assert_ne!(d.d_hat, d.d);
        for i in 1..5 {
            assert_eq!(d.hat_column(i).rows(1, 4), d.column(i).rows(1, 4));
        }
    }

    #[test]
    fn permutation_transposes_two_by_two() {
        let p = GridPermutation::new(1).unwrap();
        let u = DVector::from_vec(vec![0.0, 1.0, 10.0, 11.0]);
        assert_eq!(p.apply(&u).as_slice(), &[0.0, 10.0, 1.0, 11.0]);
    }

    #[test]
    fn permutation_orthogonal_and_involutive() {
        let p = GridPermutation::new(3).unwrap();
        let pm = p.to_matrix();
        let eye = DMatrix::identity(16, 16);
        assert_eq!(&pm * pm.transpose(), eye);
        assert_eq!(&pm * &pm, eye);
        let u = DVector::from_fn(16, |k, _| k as f64);
        assert_eq!(p.apply(&p.apply(&u)), u);
        assert_eq!(p.apply_transpose(&u), &pm.transpose() * &u);
        assert_eq!(p.apply(&u), &pm * &u);
    }

    #[test]
    fn conjugate_matches_explicit_product() {
        let p = GridPermutation::new(2).unwrap();
        let a = DMatrix::from_fn(9, 9, |r, c| (r * 9 + c) as f64);
        let pm = p.to_matrix();
        assert_eq!(p.conjugate(&a), &pm * &a * pm.transpose());
    }
}

use nalgebra::DVector;
use proptest::prelude::*;

use anisodiff::assembly::Assembler;
use anisodiff::cheb::{ChebGrid, DiffOperators, GridPermutation};
use anisodiff::tensor::{normalize_angle, tensor_at, PrincipalField};

fn field_strategy(n: usize) -> impl Strategy<Value = PrincipalField> {
    let len = (n + 1) * (n + 1);
    (
        prop::collection::vec(0.2f64..5.0, len),
        prop::collection::vec(0.2f64..5.0, len),
    )
        .prop_map(move |(a, b)| PrincipalField::new(n, a, b).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn differentiation_is_exact_on_polynomials(
        n in 2usize..14,
        coeffs in prop::collection::vec(-2.0f64..2.0, 1..14),
    ) {
        let deg = coeffs.len().min(n);
        let c = &coeffs[..deg];
        let grid = ChebGrid::new(n).unwrap();
        let d = DiffOperators::new(&grid);
        let p = |x: f64| c.iter().rev().fold(0.0, |acc, a| acc * x + a);
        let dp = |x: f64| c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, a)| acc * x + k as f64 * a);
        let v = DVector::from_iterator(n + 1, grid.nodes().iter().map(|&x| p(x)));
        let got = &d.d * v;
        for (i, &x) in grid.nodes().iter().enumerate() {
            prop_assert!((got[i] - dp(x)).abs() <= 1e-9 * (1.0 + dp(x).abs()));
        }
    }

    #[test]
    fn permutation_is_an_involution(n in 1usize..12, seed in any::<u64>()) {
        let p = GridPermutation::new(n).unwrap();
        let len = (n + 1) * (n + 1);
        let u = DVector::from_fn(len, |k, _| ((k as u64).wrapping_mul(seed | 1) % 1000) as f64);
        prop_assert_eq!(p.apply(&p.apply(&u)), u.clone());
        prop_assert_eq!(p.apply_transpose(&p.apply(&u)), u);
    }

    #[test]
    fn tensor_spectrum_and_trace(k11 in 1e-3f64..1e3, k22 in 1e-3f64..1e3, theta in -10.0f64..10.0) {
        let k = tensor_at(k11, k22, theta).unwrap();
        let scale = k11.max(k22);
        prop_assert!((k.trace() - (k11 + k22)).abs() <= 1e-13 * scale);
        prop_assert!((k.det() - k11 * k22).abs() <= 1e-12 * scale * scale);
        let (lo, hi) = k.eigenvalues();
        prop_assert!((lo - k11.min(k22)).abs() <= 1e-12 * scale);
        prop_assert!((hi - k11.max(k22)).abs() <= 1e-12 * scale);
        prop_assert_eq!(k.k12, k.k21);
    }

    #[test]
    fn tensor_has_period_pi(k11 in 0.1f64..10.0, k22 in 0.1f64..10.0, theta in -10.0f64..10.0) {
        let a = tensor_at(k11, k22, theta).unwrap().matrix();
        let b = tensor_at(k11, k22, theta + std::f64::consts::PI).unwrap().matrix();
        let c = tensor_at(k11, k22, normalize_angle(theta)).unwrap().matrix();
        prop_assert!((a - b).amax() <= 1e-12 * k11.max(k22));
        prop_assert!((a - c).amax() <= 1e-12 * k11.max(k22));
    }

    #[test]
    fn operator_is_linear(
        field in field_strategy(3),
        theta in 0.0f64..3.1,
        u in prop::collection::vec(-1.0f64..1.0, 16),
        v in prop::collection::vec(-1.0f64..1.0, 16),
        a in -3.0f64..3.0,
    ) {
        let asm = Assembler::new(field, DiffOperators::new(&ChebGrid::new(3).unwrap())).unwrap();
        let m = asm.matrix(theta).unwrap();
        let (u, v) = (DVector::from_vec(u), DVector::from_vec(v));
        let lhs = &m * (&u * a + &v);
        let rhs = (&m * &u) * a + &m * &v;
        prop_assert!((lhs - &rhs).amax() <= 1e-11 * (1.0 + rhs.amax()));
    }

    #[test]
    fn swapping_axes_conjugates_the_operator(field in field_strategy(3), theta in 0.0f64..3.1) {
        let grid = ChebGrid::new(3).unwrap();
        let p = GridPermutation::new(3).unwrap();
        let a = Assembler::new(field.clone(), DiffOperators::new(&grid)).unwrap();
        let b = Assembler::new(field.transpose(), DiffOperators::new(&grid)).unwrap();
        let swapped = std::f64::consts::FRAC_PI_2 - theta;
        let ma = a.matrix(theta).unwrap();
        let mb = b.matrix(normalize_angle(swapped)).unwrap();
        prop_assert!((p.conjugate(&ma) - &mb).amax() <= 1e-10 * ma.amax());
    }
}

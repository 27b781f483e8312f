use ksmix_core::flows::{self, divergence_residual, lipschitz_seminorm};
use ksmix_core::initdata::random_smooth_field;
use ksmix_core::spectral::{invert_laplacian, laplacian, to_physical, to_spectral};
use ksmix_core::{Grid, ScalarField};
use proptest::prelude::*;

fn field(dim: usize, n: usize, seed: u64) -> ScalarField {
    random_smooth_field(Grid::new(dim, n).unwrap(), seed, 3.0).unwrap()
}

fn max_abs_diff(a: &ScalarField, b: &ScalarField) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn transform_roundtrip(seed in any::<u64>(), dim in 2usize..=3, shift in -5.0f64..5.0) {
        let n = if dim == 2 { 32 } else { 16 };
        let f = field(dim, n, seed).map(|v| v + shift);
        let back = to_physical(&to_spectral(&f)).unwrap();
        prop_assert!(max_abs_diff(&f, &back) < 1e-12);
        prop_assert!((to_spectral(&f).mean() - f.mean()).abs() < 1e-12);
    }

    #[test]
    fn laplacian_inverts_poisson_solve(seed in any::<u64>()) {
        let f = field(2, 32, seed);
        let c = to_spectral(&f);
        let round = laplacian(&invert_laplacian(&c));
        let err = round
            .coeffs()
            .iter()
            .zip(c.coeffs())
            .map(|(a, b)| (a + b).norm())
            .fold(0.0, f64::max);
        prop_assert!(err < 1e-12);
    }

    #[test]
    fn shears_are_divergence_free(seed in any::<u64>(), m in 1u32..4, t in 0.0f64..1.0) {
        let flow = flows::make_shear_alternating(m, 0.05, seed).unwrap();
        let grid = Grid::new(2, 32).unwrap();
        prop_assert!(divergence_residual(&flow, t, grid) < 1e-10);
        prop_assert!(lipschitz_seminorm(&flow, t, grid) <= flow.lipschitz_bound() * (1.0 + 1e-9));
    }

    /// A seed names one field: refining the grid only adds modes beyond the coarse cutoff.
    #[test]
    fn random_field_is_resolution_independent(seed in any::<u64>()) {
        let coarse = to_spectral(&field(2, 32, seed));
        let fine = to_spectral(&field(2, 64, seed));
        for k in [[1i64, 0], [0, 1], [3, -2], [-7, 5], [10, 0]] {
            prop_assert!((coarse.get(&k) - fine.get(&k)).norm() < 1e-14);
        }
        prop_assert!(fine.get(&[15, 12]).norm() > 1e-6);
        prop_assert!(coarse.get(&[15, 12]).norm() < 1e-15);
    }
}

use std::f64::consts::PI;

use ddcool::geometry::{coupling_matrices, dipole_in_xz, pair_couplings, AtomConfiguration};
use ddcool::hilbert::{HilbertLayout, C64};
use ddcool::liouvillian::{build_liouvillian, ModelParams};
use faer::{Mat, Side};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GAMMA: f64 = 0.1;

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn random_configuration(rng: &mut ChaCha8Rng) -> AtomConfiguration {
    let n = rng.gen_range(2..=6);
    loop {
        let positions: Vec<[f64; 3]> =
            (0..n).map(|_| [rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)]).collect();
        let dipole = loop {
            let v: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            if v.iter().map(|x| x * x).sum::<f64>() > 1e-2 {
                break unit(v);
            }
        };
        let config = AtomConfiguration::new(positions, dipole, 0).unwrap();
        if config.min_pair_distance().unwrap() >= 0.05 {
            return config;
        }
    }
}

#[test]
fn decay_matrix_is_psd_for_random_geometries() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..200 {
        let config = random_configuration(&mut rng);
        let c = coupling_matrices(&config, GAMMA).unwrap();
        let n = c.len();
        let m = Mat::<f64>::from_fn(n, n, |i, j| c.decay(i, j));
        let oracle = m.self_adjoint_eigenvalues(Side::Lower).unwrap();
        let smallest = oracle.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(smallest >= -1e-10 * GAMMA, "eigenvalue {smallest:e} for {config:?}");
        assert!((c.min_decay_eigenvalue() - smallest).abs() < 1e-12);
    }
}

#[test]
fn dicke_limit() {
    for k in 0..=8 {
        let theta = k as f64 * PI / 16.0;
        let (_, gamma12) = pair_couplings([1e-6, 0.0, 0.0], dipole_in_xz(theta), GAMMA).unwrap();
        assert!(((gamma12 - GAMMA) / GAMMA).abs() < 1e-5, "theta = {theta}: {gamma12}");
    }
}

/// s·max(|g|, |γ|) maximized over s ∈ [1, 10] and a θ grid.
fn fitted_far_field_constant() -> f64 {
    let mut c: f64 = 0.0;
    for k in 0..=20 {
        let d = dipole_in_xz(k as f64 * PI / 40.0);
        for i in 0..=9000 {
            let s = 1.0 + i as f64 * 1e-3;
            let (g, gm) = pair_couplings([s, 0.0, 0.0], d, GAMMA).unwrap();
            c = c.max(s * g.abs().max(gm.abs()));
        }
    }
    c
}

#[test]
fn far_field_constant_is_below_analytic_bound() {
    let c = fitted_far_field_constant();
    // |g|, |γ| ≤ (3Γ/2)(1/ξ + 2/ξ² + 2/ξ³) with ξ ≥ 2π for s ≥ λ
    let x = 2.0 * PI;
    let bound = 1.5 * GAMMA * (1.0 + 2.0 / x + 2.0 / (x * x)) / x;
    assert!(c <= bound, "fitted {c} above analytic {bound}");
    assert!(c > 0.2 * GAMMA);
}

fn separation() -> impl Strategy<Value = [f64; 3]> {
    (0.01f64..3.0, 0.0..PI, 0.0..2.0 * PI)
        .prop_map(|(r, pol, az)| [r * pol.sin() * az.cos(), r * pol.sin() * az.sin(), r * pol.cos()])
        .prop_filter("at least the minimum spacing", |s| s.iter().map(|x| x * x).sum::<f64>().sqrt() >= 0.01)
}

fn dipole() -> impl Strategy<Value = [f64; 3]> {
    (0.0..PI, 0.0..2.0 * PI).prop_map(|(pol, az)| [pol.sin() * az.cos(), pol.sin() * az.sin(), pol.cos()])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn couplings_are_symmetric_under_reversal(s in separation(), d in dipole()) {
        let forward = pair_couplings(s, d, GAMMA).unwrap();
        let backward = pair_couplings([-s[0], -s[1], -s[2]], d, GAMMA).unwrap();
        prop_assert_eq!(forward, backward);
    }

    #[test]
    fn collective_decay_below_single_atom_rate(s in 0.01f64..60.0, theta in 0.0..PI) {
        let (g, gamma12) = pair_couplings([s, 0.0, 0.0], dipole_in_xz(theta), GAMMA).unwrap();
        prop_assert!(g.is_finite());
        prop_assert!(gamma12.abs() < GAMMA, "s = {}, theta = {}: {}", s, theta, gamma12);
    }

    #[test]
    fn far_field_decay_as_inverse_distance(s in 1.0f64..200.0, theta in 0.0..PI / 2.0) {
        // 2% margin covers maxima between grid points of the fit
        let c = 1.02 * fitted_far_field_constant_cached();
        let (g, gamma12) = pair_couplings([s, 0.0, 0.0], dipole_in_xz(theta), GAMMA).unwrap();
        prop_assert!(g.abs() <= c / s && gamma12.abs() <= c / s);
    }

    #[test]
    fn liouvillian_preserves_trace_and_hermiticity(
        spacing in 0.05f64..1.5,
        theta in 0.0..PI / 2.0,
        n_cut in 1usize..=2,
        entries in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 144),
    ) {
        let config = AtomConfiguration::new(vec![[0.0; 3], [spacing, 0.0, 0.0]], dipole_in_xz(theta), 0).unwrap();
        let c = coupling_matrices(&config, GAMMA).unwrap();
        let layout = HilbertLayout::reduced(2, 0, n_cut).unwrap();
        let params = ModelParams { n_cut, ..ModelParams::sideband(2, 0) };
        let l = build_liouvillian(&layout, &params, &c).unwrap();
        let d = layout.dim();
        // arbitrary operator X; vec index i + j·D holds X_ij
        let x: Vec<C64> = entries.iter().take(d * d).map(|&(re, im)| C64::new(re, im)).collect();
        let lx = l.apply(&x).unwrap();
        let trace: C64 = (0..d).map(|i| lx[i + i * d]).sum();
        prop_assert!(trace.norm() < 1e-12, "tr L(X) = {}", trace);

        let x_dag: Vec<C64> = (0..d * d).map(|k| x[(k / d) + (k % d) * d].conj()).collect();
        let l_x_dag = l.apply(&x_dag).unwrap();
        for k in 0..d * d {
            let transposed = lx[(k / d) + (k % d) * d].conj();
            prop_assert!((l_x_dag[k] - transposed).norm() < 1e-12);
        }
    }
}

fn fitted_far_field_constant_cached() -> f64 {
    static C: std::sync::OnceLock<f64> = std::sync::OnceLock::new();
    *C.get_or_init(fitted_far_field_constant)
}

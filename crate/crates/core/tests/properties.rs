//! Property tests for the invariants of every module.

use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use serde_json::{json, Map, Value};

use trapgap::analytic::{
    gap_edges, hole_radius, inverse_design, maxwell_gap, two_screen_gaps, GapSpec, Radicand, ScreenDesign,
    ScreenParams, TwoScreenInput,
};
use trapgap::band::{complement, merge_intervals, phi_samples, representatives, Interval};
use trapgap::capacity::{aperture_profile_2d, disc_capacity_exact};
use trapgap::cli::{canonical_json, config_hash};
use trapgap::eigen::{smallest_eigs, EigenOptions};
use trapgap::fem::{assemble_as, BoundaryRegime, OperatorPair, ScreenBc};
use trapgap::mesh::{build_cell_mesh, CellGeometry, CellMesh};
use trapgap::sparse::{Cholesky, Scalar};

fn cap(n: u32) -> Option<f64> {
    (n > 2).then(|| disc_capacity_exact(n))
}

fn coarse(b: f64, r: f64) -> CellMesh {
    build_cell_mesh(&CellGeometry::new(b, r).with_h_max(1.0 / 16.0)).unwrap()
}

fn eigs<T: Scalar>(pair: &OperatorPair<T>, k: usize) -> Vec<f64> {
    smallest_eigs(pair, k, &EigenOptions::default()).unwrap().values
}

fn close(a: &[f64], b: &[f64], rel: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= rel * x.abs().max(y.abs()).max(1.0))
}

proptest! {
    #[test]
    fn design_round_trip(n in 2u32..=4, d in 0.05f64..5.0, b in 0.1f64..0.9) {
        let g = gap_edges(&ScreenDesign::new(n, d, b).unwrap(), cap(n)).unwrap();
        let back = inverse_design(g.sigma, g.mu, n, cap(n)).unwrap();
        prop_assert!((back.d / d - 1.0).abs() <= 1e-12);
        prop_assert!((back.b / b - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn resonance_monotonicity(n in 2u32..=3, d in 0.05f64..5.0, b in 0.05f64..0.9, f in 1.001f64..1.5) {
        let at = |d: f64, b: f64| gap_edges(&ScreenDesign::new(n, d, b).unwrap(), cap(n)).unwrap();
        let base = at(d, b);
        let wider = at(d * f, b);
        let bigger = at(d, (b * f).min(0.95));
        prop_assert!(wider.sigma > base.sigma);
        prop_assert!(bigger.sigma < base.sigma);
        prop_assert!(bigger.mu / bigger.sigma > base.mu / base.sigma);
        prop_assert!((base.mu / base.sigma - 1.0 / (1.0 - b.powi(n as i32))).abs() < 1e-12 * base.mu / base.sigma);
    }

    #[test]
    fn hole_radius_is_increasing(n in 2u32..=3, d in 0.2f64..3.0, eps in 0.3f64..0.7, f in 1.01f64..1.2) {
        let r = |d: f64, eps: f64| ScreenParams::new(n, d, 0.5, eps).and_then(|p| hole_radius(&p));
        if let (Ok(base), Ok(more_d), Ok(more_eps)) = (r(d, eps), r(d * f, eps), r(d, eps * f)) {
            prop_assert!(more_d > base);
            prop_assert!(more_eps > base);
        }
    }

    #[test]
    fn symmetrized_two_screen_is_ordered(
        d1 in 0.1f64..5.0, d2 in 0.1f64..5.0, vol1 in 0.01f64..0.9, vol2 in 0.01f64..0.9,
    ) {
        let input = TwoScreenInput { n: 2, d1, d2, vol1, vol2 };
        if let Ok(s) = two_screen_gaps(&input, None, Radicand::Symmetrized) {
            prop_assert!(s.is_ordered(), "{s:?}");
        }
    }

    #[test]
    fn maxwell_is_the_square_root_image(sigma in 0.01f64..100.0, w in 1.0001f64..10.0) {
        let mu = sigma * w;
        let [neg, pos] = maxwell_gap(&GapSpec::new(sigma, mu).unwrap()).unwrap();
        prop_assert_eq!(pos, (sigma.sqrt(), mu.sqrt()));
        prop_assert_eq!(neg, (-mu.sqrt(), -sigma.sqrt()));
    }

    #[test]
    fn annulus_energy_matches_quadrature(r in 1e-6f64..0.05, ratio in 1.5f64..1e3) {
        let p = aperture_profile_2d(r, r * ratio).unwrap();
        let closed = p.half_annulus_energy();
        prop_assert!((p.half_annulus_energy_quadrature(256) / closed - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn gaps_and_bands_partition_the_window(
        raw in prop::collection::vec((0.0f64..100.0, 0.0f64..20.0), 1..12), limit in 1.0f64..150.0,
    ) {
        let bands: Vec<Interval> = raw.iter().map(|&(a, w)| Interval { lower: a, upper: a + w }).collect();
        let merged = merge_intervals(bands.clone());
        for w in merged.windows(2) {
            prop_assert!(w[0].upper < w[1].lower);
        }
        let gaps = complement(&merged, limit);
        for g in &gaps {
            prop_assert!(g.lower < g.upper && g.upper <= limit);
            for b in &bands {
                prop_assert!(g.upper <= b.lower || g.lower >= b.upper, "gap {g:?} meets band {b:?}");
            }
        }
        let covered: f64 = merged.iter().map(|b| (b.upper.min(limit) - b.lower.min(limit)).max(0.0)).sum();
        let open: f64 = gaps.iter().map(|g| g.upper - g.lower).sum();
        prop_assert!((covered + open - limit).abs() < 1e-9 * limit);
    }

    #[test]
    fn config_hash_ignores_key_order(entries in prop::collection::btree_map("[a-z]{1,6}", -1e6f64..1e6, 1..8)) {
        let forward: Map<String, Value> = entries.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        let reverse: Map<String, Value> = entries.iter().rev().map(|(k, v)| (k.clone(), json!(v))).collect();
        let a = json!({"command": "band", "config": Value::Object(forward)});
        let b = json!({"config": Value::Object(reverse), "command": "band"});
        prop_assert_eq!(canonical_json(&a), canonical_json(&b));
        prop_assert_eq!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn seventeen_digits_round_trip(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        let s = format!("{x:.16e}");
        prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn mesh_area_is_one(b in 0.3f64..0.7, r in 0.002f64..0.1) {
        let mesh = coarse(b, r);
        prop_assert!((mesh.total_area() - 1.0).abs() < 1e-10);
        prop_assert_eq!(mesh.components().1, 1);
    }

    #[test]
    fn pairs_are_hermitian_and_definite(r in 0.005f64..0.05, p1 in 0.0f64..(2.0 * PI), p2 in 0.0f64..(2.0 * PI)) {
        let mesh = coarse(0.5, r);
        for regime in [BoundaryRegime::neumann(), BoundaryRegime::dirichlet(), BoundaryRegime::bloch([p1, p2])] {
            let pair = assemble_as::<Complex64>(&mesh, &regime).unwrap();
            prop_assert!(pair.stiffness.hermitian_defect() <= 1e-14 * pair.stiffness.max_abs());
            prop_assert!(pair.mass.hermitian_defect() <= 1e-14 * pair.mass.max_abs());
            prop_assert!(Cholesky::factor(&pair.mass).is_ok());
            let v = eigs(&pair, 1);
            prop_assert!(v[0] >= -1e-10 * pair.stiffness.max_abs());
        }
    }

    #[test]
    fn bloch_conjugate_and_mirror_symmetry(p1 in 0.1f64..3.0, p2 in 0.1f64..3.0) {
        let mesh = coarse(0.5, 0.02);
        let spec = |phi: [f64; 2]| eigs(&assemble_as::<Complex64>(&mesh, &BoundaryRegime::bloch(phi)).unwrap(), 4);
        let base = spec([p1, p2]);
        prop_assert!(close(&base, &spec([-p1, -p2]), 1e-8));
        // the mesh is not mirror symmetric, so reflection holds to discretization error
        let mirrored = spec([-p1, p2]);
        prop_assert!(close(&base, &mirrored, 2e-2), "{:?} vs {:?}", base, mirrored);
    }

    #[test]
    fn eigenvalues_ignore_node_order(seed in 0u64..1000) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mesh = coarse(0.5, 0.02);
        let mut perm: Vec<usize> = (0..mesh.num_nodes()).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let shuffled = mesh.renumber(&perm);
        for regime in [BoundaryRegime::neumann(), BoundaryRegime::bloch([1.0, 2.5])] {
            let a = eigs(&assemble_as::<Complex64>(&mesh, &regime).unwrap(), 4);
            let b = eigs(&assemble_as::<Complex64>(&shuffled, &regime).unwrap(), 4);
            prop_assert!(close(&a, &b, 1e-8), "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn dirichlet_constraints_never_lower_eigenvalues() {
    let mesh = coarse(0.5, 0.02);
    let k = 5;
    let n = eigs(&assemble_as::<f64>(&mesh, &BoundaryRegime::neumann()).unwrap(), k);
    let d = eigs(&assemble_as::<f64>(&mesh, &BoundaryRegime::dirichlet()).unwrap(), k);
    let n_screen = eigs(
        &assemble_as::<f64>(&mesh, &BoundaryRegime::neumann().with_screen(ScreenBc::Dirichlet)).unwrap(),
        k,
    );
    let d_screen = eigs(
        &assemble_as::<f64>(&mesh, &BoundaryRegime::dirichlet().with_screen(ScreenBc::Dirichlet)).unwrap(),
        k,
    );
    for i in 0..k {
        let tol = 1e-8 * d_screen[i].max(1.0);
        assert!(d[i] >= n[i] - tol);
        assert!(n_screen[i] >= n[i] - tol);
        assert!(d_screen[i] >= d[i] - tol && d_screen[i] >= n_screen[i] - tol);
    }
}

#[test]
fn periodic_spectrum_is_bracketed() {
    let mesh = coarse(0.5, 0.02);
    let k = 6;
    let n = eigs(&assemble_as::<f64>(&mesh, &BoundaryRegime::neumann()).unwrap(), k);
    let d = eigs(&assemble_as::<f64>(&mesh, &BoundaryRegime::dirichlet()).unwrap(), k);
    let p = eigs(&assemble_as::<f64>(&mesh, &BoundaryRegime::bloch([0.0, 0.0])).unwrap(), k);
    for i in 0..k {
        let tol = 1e-8 * d[i].max(1.0);
        assert!(n[i] - tol <= p[i] && p[i] <= d[i] + tol, "k = {}: {} not in [{}, {}]", i + 1, p[i], n[i], d[i]);
    }
}

#[test]
fn dirichlet_ground_value_grows_with_the_aperture() {
    let values: Vec<f64> = [0.005, 0.01, 0.02, 0.05, 0.1]
        .iter()
        .map(|&r| {
            let mesh = build_cell_mesh(&CellGeometry::new(0.5, r).with_h_max(1.0 / 32.0)).unwrap();
            eigs(&assemble_as::<f64>(&mesh, &BoundaryRegime::dirichlet()).unwrap(), 1)[0]
        })
        .collect();
    for w in values.windows(2) {
        assert!(w[1] >= w[0], "{values:?}");
    }
}

#[test]
fn conjugate_representatives_are_conjugates() {
    for n in [3, 4, 5, 8] {
        let phis = phi_samples(n);
        let reps = representatives(&phis, true);
        for (i, &j) in reps.iter().enumerate() {
            assert!(j <= i && reps[j] == j);
            let sum = [phis[i][0] + phis[j][0], phis[i][1] + phis[j][1]];
            for (s, (a, b)) in sum.iter().zip(phis[i].iter().zip(phis[j].iter())) {
                let same = (a - b).abs() < 1e-12;
                let wraps = (s.rem_euclid(2.0 * PI)).min(2.0 * PI - s.rem_euclid(2.0 * PI)) < 1e-12;
                assert!(same || wraps, "n = {n}: {:?} vs {:?}", phis[i], phis[j]);
            }
        }
    }
}

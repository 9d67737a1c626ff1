//! Numerical solvers checked against independent closed forms.

use std::f64::consts::PI;

use num_complex::Complex64;
use trapgap::capacity::{
    disc_capacity, disc_potential_3d, energy, meridian_mesh, meridian_stiffness, solve_potential, truncated_capacity,
    Obstacle,
};
use trapgap::eigen::{smallest_eigs, EigenOptions};
use trapgap::fem::{assemble_as, BoundaryRegime};
use trapgap::mesh::CellMesh;

/// Smallest `|phi + 2 pi m|^2` over integer shifts, ascending.
fn plane_wave_levels(phi: [f64; 2], count: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (-3i32..=3)
        .flat_map(|a| (-3i32..=3).map(move |b| (a, b)))
        .map(|(a, b)| (phi[0] + 2.0 * PI * a as f64).powi(2) + (phi[1] + 2.0 * PI * b as f64).powi(2))
        .collect();
    v.sort_by(f64::total_cmp);
    v.truncate(count);
    v
}

#[test]
fn bloch_spectrum_of_the_empty_cell_is_plane_waves() {
    let mesh = CellMesh::empty_cell(64);
    for phi in [[0.3, 1.7], [2.0, 2.9], [PI, 0.5], [4.0, 5.5]] {
        let pair = assemble_as::<Complex64>(&mesh, &BoundaryRegime::bloch(phi)).unwrap();
        let got = smallest_eigs(&pair, 3, &EigenOptions::default()).unwrap().values;
        let want = plane_wave_levels(phi, 3);
        for (g, w) in got.iter().zip(&want) {
            assert!((g / w - 1.0).abs() < 5e-3, "phi = {phi:?}: {got:?} vs {want:?}");
        }
    }
}

#[test]
fn dirichlet_square_spectrum() {
    let mesh = CellMesh::empty_cell(64);
    let pair = assemble_as::<f64>(&mesh, &BoundaryRegime::dirichlet()).unwrap();
    let got = smallest_eigs(&pair, 3, &EigenOptions::default()).unwrap().values;
    let pi2 = PI * PI;
    for (g, w) in got.iter().zip([2.0 * pi2, 5.0 * pi2, 5.0 * pi2]) {
        assert!((g / w - 1.0).abs() < 5e-3, "{got:?}");
    }
}

#[test]
fn interpolated_disc_potential_has_more_energy_than_the_discrete_minimizer() {
    for radius in [8.0, 16.0] {
        let mesh = meridian_mesh(Obstacle::Disc, radius, 0.1).unwrap();
        let k = meridian_stiffness(&mesh, 3);
        let minimizer = solve_potential(&mesh, &k).unwrap();
        let mut trial: Vec<f64> = mesh.vertices.iter().map(|p| disc_potential_3d(p[0], p[1]).0).collect();
        for &i in &mesh.inner {
            trial[i] = 1.0;
        }
        for &i in &mesh.outer {
            trial[i] = 0.0;
        }
        let e_min = energy(&k, &minimizer);
        let e_trial = energy(&k, &trial);
        assert!(e_trial >= e_min, "R = {radius}: trial {e_trial} below minimum {e_min}");
        // The zero extension of the discrete minimizer is admissible for the
        // exact problem, so every truncated value bounds the capacity from above.
        assert!(e_min >= 8.0 - 1e-10, "R = {radius}: {e_min}");
    }
}

#[test]
fn truncated_capacity_decreases_with_radius() {
    let values: Vec<f64> = [4.0, 8.0, 16.0, 32.0]
        .iter()
        .map(|&r| truncated_capacity(3, Obstacle::Disc, r, 0.1).unwrap().cap_t)
        .collect();
    for w in values.windows(2) {
        assert!(w[1] <= w[0], "{values:?}");
    }
}

#[test]
fn capacity_converges_with_order_at_least_one() {
    let c: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&h| truncated_capacity(3, Obstacle::Disc, 8.0, h).unwrap().cap_t)
        .collect();
    let order = ((c[0] - c[1]) / (c[1] - c[2])).log2();
    assert!(order >= 1.0, "values {c:?}, order {order}");
}

#[test]
fn four_dimensional_disc_capacity() {
    let exact = 2.0 * PI * PI;
    let got = disc_capacity(4, &[8.0, 16.0, 32.0], 0.05).unwrap().cap_t;
    assert!((got / exact - 1.0).abs() < 1e-2, "{got} vs {exact}");
}

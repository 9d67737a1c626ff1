//! Capacity of the unit (n-1)-disc in R^n and the logarithmic aperture
//! profile.
//!
//! The exterior problem is axisymmetric about the disc normal, so it is solved
//! on the quarter meridian plane `{rho >= 0, z >= 0, rho^2 + z^2 < R^2}` with
//! linear elements and the volume weight `|S^{n-2}| rho^{n-2}`. The reflection
//! `z -> -z` doubles the quarter-plane energy.

use std::collections::HashSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};

use crate::error::{Error, Result};
use crate::mesh::discretize_segment;
use crate::sparse::{Cholesky, CsrMatrix};

/// Smallest truncation radius accepted by the meshed solver.
pub const MIN_DOMAIN_RADIUS: f64 = 4.0;

/// `Gamma(k / 2)` for a positive integer `k`.
pub fn gamma_half(k: u32) -> f64 {
    assert!(k > 0, "Gamma(0) is undefined");
    let (mut g, mut x) = if k % 2 == 0 { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    while x < 0.5 * k as f64 - 0.25 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Surface measure of the unit sphere `S^k` in `R^{k+1}`.
pub fn sphere_area(k: u32) -> f64 {
    2.0 * PI.powf(0.5 * (k + 1) as f64) / gamma_half(k + 1)
}

/// Closed-form capacity of the unit (n-1)-disc, as a flattened ellipsoid.
pub fn disc_capacity_exact(n: u32) -> f64 {
    assert!(n >= 3);
    // 2 |S^{n-1}| / int_0^inf ds / sqrt(s (1 + s)^{n-1})
    let beta = gamma_half(1) * gamma_half(n - 2) / gamma_half(n - 1);
    2.0 * sphere_area(n - 1) / beta
}

/// Capacity of the unit ball relative to the concentric ball of radius `r`
/// (`r = inf` gives the exterior capacity).
pub fn ball_capacity_exact(n: u32, r: f64) -> f64 {
    assert!(n >= 3);
    (n - 2) as f64 * sphere_area(n - 1) / (1.0 - r.powi(2 - n as i32))
}

/// Equilibrium potential of the unit disc in R^3 at meridian point
/// `(rho, z)`, and its gradient.
pub fn disc_potential_3d(rho: f64, z: f64) -> (f64, [f64; 2]) {
    let d1 = ((rho - 1.0).powi(2) + z * z).sqrt();
    let d2 = ((rho + 1.0).powi(2) + z * z).sqrt();
    let s = d1 + d2;
    let w = 2.0 / PI * (2.0 / s).min(1.0).asin();
    if s <= 2.0 * (1.0 + 1e-15) {
        return (w, [f64::NAN; 2]);
    }
    let dw_ds = -4.0 / (PI * s * (s * s - 4.0).sqrt());
    let ds = [(rho - 1.0) / d1 + (rho + 1.0) / d2, z / d1 + z / d2];
    (w, [dw_ds * ds[0], dw_ds * ds[1]])
}

/// Flux of the disc potential through the sphere of radius `radius`, by
/// composite Gauss-Legendre quadrature in the polar angle.
pub fn disc_potential_flux(radius: f64, panels: usize) -> f64 {
    const NODES: [(f64, f64); 5] = [
        (0.0, 0.568_888_888_888_888_9),
        (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    let width = PI / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * width;
        for (x, w) in NODES {
            let t = mid + 0.5 * width * x;
            let (rho, z) = (radius * t.sin(), radius * t.cos());
            let (_, g) = disc_potential_3d(rho, z);
            let dr = g[0] * t.sin() + g[1] * t.cos();
            total += 0.5 * width * w * (-dr) * 2.0 * PI * radius * radius * t.sin();
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Obstacle {
    /// The flat unit (n-1)-disc.
    Disc,
    /// The unit ball (sanity case).
    Ball,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub n: u32,
    pub obstacle: Obstacle,
    #[serde(rename = "capT")]
    pub cap_t: f64,
    pub domain_radius: f64,
    pub mesh_h: f64,
    pub extrapolated: bool,
    pub nodes: usize,
}

/// Meridian-plane mesh with Dirichlet node sets.
#[derive(Debug, Clone)]
pub struct MeridianMesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Nodes with `w = 1`.
    pub inner: Vec<usize>,
    /// Nodes with `w = 0`.
    pub outer: Vec<usize>,
}

fn arc_points(radius: f64, size: f64) -> Vec<[f64; 2]> {
    let m = ((0.5 * PI * radius / size).ceil() as usize).max(2);
    (0..=m)
        .map(|i| {
            let t = 0.5 * PI * i as f64 / m as f64;
            if i == m {
                [0.0, radius]
            } else if i == 0 {
                [radius, 0.0]
            } else {
                [radius * t.cos(), radius * t.sin()]
            }
        })
        .collect()
}

/// Quarter meridian mesh around the obstacle, graded toward the disc rim.
pub fn meridian_mesh(obstacle: Obstacle, radius: f64, h: f64) -> Result<MeridianMesh> {
    if !(radius >= MIN_DOMAIN_RADIUS) {
        return Err(Error::Domain(format!(
            "domain radius {radius} below the truncation minimum {MIN_DOMAIN_RADIUS}"
        )));
    }
    if !(h > 0.0 && h <= 0.5) {
        return Err(Error::Domain(format!("mesh size {h} must lie in (0, 0.5]")));
    }
    let far = |p: [f64; 2]| h * (0.5 * (p[0] * p[0] + p[1] * p[1]).sqrt()).max(1.0);
    let size = |p: [f64; 2]| match obstacle {
        Obstacle::Disc => {
            let rim = ((p[0] - 1.0).powi(2) + p[1] * p[1]).sqrt();
            far(p).min(h * rim.max(h * h).sqrt())
        }
        Obstacle::Ball => far(p),
    };
    let mut chains: Vec<Vec<[f64; 2]>> = Vec::new();
    match obstacle {
        Obstacle::Disc => {
            chains.push(discretize_segment([0.0, 0.0], [1.0, 0.0], &size));
            chains.push(discretize_segment([1.0, 0.0], [radius, 0.0], &size));
            chains.push(arc_points(radius, size([radius, 0.0])));
            chains.push(discretize_segment([0.0, radius], [0.0, 0.0], &size));
        }
        Obstacle::Ball => {
            chains.push(discretize_segment([1.0, 0.0], [radius, 0.0], &size));
            chains.push(arc_points(radius, size([radius, 0.0])));
            chains.push(discretize_segment([0.0, radius], [0.0, 1.0], &size));
            let mut inner = arc_points(1.0, h);
            inner.reverse();
            chains.push(inner);
        }
    }
    // consecutive chains share end points; the last one closes the loop
    let mut points: Vec<[f64; 2]> = Vec::new();
    for chain in &chains {
        let skip = usize::from(!points.is_empty());
        points.extend_from_slice(&chain[skip..]);
    }
    points.pop();
    let m = points.len();
    let edges: Vec<[usize; 2]> = (0..m).map(|i| [i, (i + 1) % m]).collect();

    let vertices: Vec<Point2<f64>> = points.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> =
        ConstrainedDelaunayTriangulation::bulk_load_cdt(vertices, edges)
            .map_err(|e| Error::Structure(format!("triangulation failed: {e:?}")))?;
    let far_h = far([radius, 0.0]);
    let params = RefinementParameters::<f64>::new()
        .keep_constraint_edges()
        .exclude_outer_faces(true)
        .with_angle_limit(AngleLimit::from_deg(25.0))
        .with_max_allowed_area(0.45 * far_h * far_h)
        .with_max_additional_vertices(2_000_000);
    // quality refinement only follows the boundary spacing; split triangles
    // that are still too large for the size field until none are left
    let mut excluded: HashSet<usize>;
    let mut pass = 0;
    loop {
        let refine = cdt.refine(params.clone());
        if !refine.refinement_complete {
            log::warn!("capacity mesh refinement stopped early");
        }
        excluded = refine.excluded_faces.iter().map(|f| f.index()).collect();
        let split: Vec<Point2<f64>> = cdt
            .inner_faces()
            .filter(|f| !excluded.contains(&f.fix().index()))
            .filter_map(|f| {
                let [a, b, c] = f.positions();
                let centre = [(a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0];
                let longest = [(a, b), (b, c), (c, a)]
                    .iter()
                    .map(|(p, q)| ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt())
                    .fold(0.0, f64::max);
                (longest > 1.5 * size(centre)).then(|| Point2::new(centre[0], centre[1]))
            })
            .collect();
        pass += 1;
        if split.is_empty() || pass > 40 {
            break;
        }
        for p in split {
            cdt.insert(p).map_err(|e| Error::Structure(format!("mesh insertion failed: {e:?}")))?;
        }
    }
    let vertices: Vec<[f64; 2]> = cdt.vertices().map(|v| [v.position().x, v.position().y]).collect();
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix().index()) {
            continue;
        }
        let [a, b, c] = face.vertices().map(|v| v.fix().index());
        let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
        let area2 = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pb[1] - pa[1]) * (pc[0] - pa[0]);
        triangles.push(if area2 > 0.0 { [a, b, c] } else { [a, c, b] });
    }

    let mut inner = HashSet::new();
    let mut outer = HashSet::new();
    let mid_radius = 0.5 * (1.0 + radius);
    for e in cdt.undirected_edges() {
        if !e.is_constraint_edge() {
            continue;
        }
        let [a, b] = e.vertices().map(|v| v.fix().index());
        let (pa, pb) = (vertices[a], vertices[b]);
        let on_axis = (pa[0] == 0.0 && pb[0] == 0.0) || (pa[1] == 0.0 && pb[1] == 0.0);
        let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
        let rmid = (mid[0] * mid[0] + mid[1] * mid[1]).sqrt();
        let target = match obstacle {
            Obstacle::Disc if pa[1] == 0.0 && pb[1] == 0.0 && pa[0] <= 1.0 && pb[0] <= 1.0 => Some(&mut inner),
            _ if on_axis => None,
            Obstacle::Ball if rmid < mid_radius => Some(&mut inner),
            _ => Some(&mut outer),
        };
        if let Some(set) = target {
            set.insert(a);
            set.insert(b);
        }
    }
    let mut inner: Vec<usize> = inner.into_iter().collect();
    let mut outer: Vec<usize> = outer.into_iter().filter(|v| !inner.contains(v)).collect();
    inner.sort_unstable();
    outer.sort_unstable();
    Ok(MeridianMesh { vertices, triangles, inner, outer })
}

/// `int_T rho^p dA` for a triangle, exact for linear `rho`.
fn weighted_area(rho: [f64; 3], area: f64, p: u32) -> f64 {
    // complete homogeneous symmetric polynomial of degree p in rho_1..rho_3
    let mut h = 0.0;
    for i in 0..=p {
        for j in 0..=(p - i) {
            let k = p - i - j;
            h += rho[0].powi(i as i32) * rho[1].powi(j as i32) * rho[2].powi(k as i32);
        }
    }
    let fact = |m: u32| (1..=m).map(|x| x as f64).product::<f64>();
    2.0 * area * fact(p) / fact(p + 2) * h
}

/// Weighted stiffness matrix of the meridian mesh, already multiplied by
/// `2 |S^{n-2}|` so that `w^T K w` is the full-space energy.
pub fn meridian_stiffness(mesh: &MeridianMesh, n: u32) -> CsrMatrix<f64> {
    let scale = 2.0 * sphere_area(n - 2);
    let mut triplets = Vec::with_capacity(9 * mesh.triangles.len());
    for tri in &mesh.triangles {
        let p = tri.map(|v| mesh.vertices[v]);
        let (ke, _, area) = crate::fem::element_matrices(p);
        let w = weighted_area(p.map(|q| q[0]), area, n - 2) / area;
        for a in 0..3 {
            for b in 0..3 {
                triplets.push((tri[a], tri[b], scale * w * ke[a][b]));
            }
        }
    }
    let nv = mesh.vertices.len();
    CsrMatrix::from_triplets(nv, nv, triplets)
}

/// Energy `w^T K w` of a nodal function.
pub fn energy(k: &CsrMatrix<f64>, w: &[f64]) -> f64 {
    w.iter().zip(k.mul_vec(w)).map(|(a, b)| a * b).sum()
}

/// Discrete minimizer with `w = 1` on the obstacle and `0` on the outer arc.
pub fn solve_potential(mesh: &MeridianMesh, k: &CsrMatrix<f64>) -> Result<Vec<f64>> {
    let nv = mesh.vertices.len();
    let mut fixed: Vec<Option<f64>> = vec![None; nv];
    for &i in &mesh.inner {
        fixed[i] = Some(1.0);
    }
    for &i in &mesh.outer {
        fixed[i] = Some(0.0);
    }
    let mut dof = vec![usize::MAX; nv];
    let mut free = Vec::new();
    for i in 0..nv {
        if fixed[i].is_none() {
            dof[i] = free.len();
            free.push(i);
        }
    }
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; free.len()];
    for (i, j, v) in k.triplets() {
        if dof[i] == usize::MAX {
            continue;
        }
        match fixed[j] {
            None => triplets.push((dof[i], dof[j], v)),
            Some(g) => rhs[dof[i]] -= v * g,
        }
    }
    let kff = CsrMatrix::from_triplets(free.len(), free.len(), triplets);
    let x = Cholesky::factor(&kff)?.solve(&rhs);
    let mut w: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    for (d, &i) in free.iter().enumerate() {
        w[i] = x[d];
    }
    Ok(w)
}

/// Truncated capacity of the obstacle relative to the ball of radius `radius`.
pub fn truncated_capacity(n: u32, obstacle: Obstacle, radius: f64, h: f64) -> Result<CapacityResult> {
    if n < 3 {
        return Err(Error::Domain(format!("capacity needs n >= 3, got {n}")));
    }
    let mesh = meridian_mesh(obstacle, radius, h)?;
    let k = meridian_stiffness(&mesh, n);
    let w = solve_potential(&mesh, &k)?;
    Ok(CapacityResult {
        n,
        obstacle,
        cap_t: energy(&k, &w),
        domain_radius: radius,
        mesh_h: h,
        extrapolated: false,
        nodes: mesh.vertices.len(),
    })
}

/// Two-point extrapolation in `R^{2-n}` from truncated values at `r1 < r2`.
pub fn richardson(n: u32, (r1, c1): (f64, f64), (r2, c2): (f64, f64)) -> f64 {
    let t1 = r1.powi(2 - n as i32);
    let t2 = r2.powi(2 - n as i32);
    (c2 * t1 - c1 * t2) / (t1 - t2)
}

/// Default truncation radii.
pub const RADII: [f64; 3] = [8.0, 16.0, 32.0];

/// Capacity of the unit disc extrapolated to an infinite domain from the
/// two largest of `radii`.
pub fn disc_capacity(n: u32, radii: &[f64], h: f64) -> Result<CapacityResult> {
    obstacle_capacity(n, Obstacle::Disc, radii, h)
}

pub fn obstacle_capacity(n: u32, obstacle: Obstacle, radii: &[f64], h: f64) -> Result<CapacityResult> {
    let mut radii = radii.to_vec();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    if radii.len() < 2 {
        return Err(Error::Domain("extrapolation needs two distinct radii".into()));
    }
    let r = &radii[radii.len() - 2..];
    let a = truncated_capacity(n, obstacle, r[0], h)?;
    let b = truncated_capacity(n, obstacle, r[1], h)?;
    Ok(CapacityResult {
        cap_t: richardson(n, (r[0], a.cap_t), (r[1], b.cap_t)),
        domain_radius: f64::INFINITY,
        extrapolated: true,
        nodes: b.nodes,
        ..b
    })
}

/// Radial profile `rho -> clamp(ln(l / rho) / ln(l / r), 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApertureProfile {
    pub hole_radius: f64,
    pub cutoff_radius: f64,
}

pub fn aperture_profile_2d(r: f64, l: f64) -> Result<ApertureProfile> {
    if !(r > 0.0 && r < l && l.is_finite()) {
        return Err(Error::Domain(format!("aperture profile needs 0 < r < l, got r = {r}, l = {l}")));
    }
    Ok(ApertureProfile { hole_radius: r, cutoff_radius: l })
}

impl ApertureProfile {
    pub fn value(&self, rho: f64) -> f64 {
        let (r, l) = (self.hole_radius, self.cutoff_radius);
        ((l / rho).ln() / (l / r).ln()).clamp(0.0, 1.0)
    }

    /// `|d profile / d rho|`, zero outside the annulus.
    pub fn slope(&self, rho: f64) -> f64 {
        let (r, l) = (self.hole_radius, self.cutoff_radius);
        if rho <= r || rho >= l {
            0.0
        } else {
            1.0 / (rho * (l / r).ln())
        }
    }

    /// Dirichlet energy over the half annulus `r < rho < l`.
    pub fn half_annulus_energy(&self) -> f64 {
        PI / (self.cutoff_radius / self.hole_radius).ln()
    }

    /// Same energy by Gauss-Legendre quadrature in `log rho`.
    pub fn half_annulus_energy_quadrature(&self, panels: usize) -> f64 {
        let (a, b) = (self.hole_radius.ln(), self.cutoff_radius.ln());
        let width = (b - a) / panels as f64;
        let g = [(-1.0 / 3f64.sqrt(), 1.0), (1.0 / 3f64.sqrt(), 1.0)];
        let mut total = 0.0;
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * width;
            for (x, w) in g {
                let rho = (mid + 0.5 * width * x).exp();
                // d rho = rho d(log rho)
                total += 0.5 * width * w * self.slope(rho).powi(2) * PI * rho * rho;
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(1) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(2) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((gamma_half(7) - 15.0 / 8.0 * PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn closed_forms() {
        assert!((disc_capacity_exact(3) - 8.0).abs() < 1e-13);
        assert!((ball_capacity_exact(3, f64::INFINITY) - 4.0 * PI).abs() < 1e-13);
        // the disc is smaller than the ball containing it
        for n in 3..8 {
            assert!(disc_capacity_exact(n) < ball_capacity_exact(n, f64::INFINITY));
        }
    }

    #[test]
    fn analytic_potential_has_flux_eight() {
        for radius in [1.5, 2.0, 5.0] {
            let flux = disc_potential_flux(radius, 64);
            assert!((flux - 8.0).abs() < 1e-9, "flux {flux} at radius {radius}");
        }
        assert_eq!(disc_potential_3d(0.3, 0.0).0, 1.0);
    }

    #[test]
    fn weighted_area_is_exact_for_monomials() {
        let rho = [0.5, 2.0, 1.0];
        // triangle (0.5,0), (2,0), (1,1): area 0.75
        let area = 0.75;
        assert!((weighted_area(rho, area, 0) - area).abs() < 1e-15);
        assert!((weighted_area(rho, area, 1) - area * 3.5 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn small_domain_is_rejected() {
        assert!(matches!(truncated_capacity(3, Obstacle::Disc, 3.0, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn truncated_ball_matches_closed_form() {
        let res = truncated_capacity(3, Obstacle::Ball, 4.0, 0.1).unwrap();
        let exact = ball_capacity_exact(3, 4.0);
        assert!((res.cap_t / exact - 1.0).abs() < 5e-3, "{} vs {exact}", res.cap_t);
    }

    #[test]
    fn profile_energy() {
        let p = aperture_profile_2d(0.01, 0.1).unwrap();
        assert_eq!(p.value(0.01), 1.0);
        assert_eq!(p.value(0.1), 0.0);
        assert!((p.half_annulus_energy() - 1.364_376_353_841_841).abs() < 1e-12);
        assert!((p.half_annulus_energy_quadrature(64) - p.half_annulus_energy()).abs() < 1e-10);
        assert!(aperture_profile_2d(0.1, 0.1).is_err());
    }
}

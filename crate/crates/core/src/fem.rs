//! P1 stiffness/mass pairs on a cell mesh under Neumann, Dirichlet or
//! quasi-periodic (Bloch) conditions.
//!
//! Essential conditions are imposed by eliminating degrees of freedom: every
//! mesh node maps either to nothing (Dirichlet) or to one DOF times a unit
//! phase. Slaves on the right and top faces reuse the DOF of their image on the
//! left or bottom face, multiplied by `theta_1^a theta_2^b`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{CellMesh, NodeTag};
use crate::sparse::{dot, CsrMatrix, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScreenBc {
    Neumann,
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OuterBc {
    Neumann,
    Dirichlet,
    /// `u(x + e_k) = exp(i phi_k) u(x)` across the cell faces.
    Bloch { phi: [f64; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRegime {
    pub screen: ScreenBc,
    pub outer: OuterBc,
}

/// `exp(i phi)`, exact for the real phases 0 and pi.
pub fn unit_phase(phi: f64) -> Complex64 {
    if phi == 0.0 {
        Complex64::new(1.0, 0.0)
    } else if phi == PI {
        Complex64::new(-1.0, 0.0)
    } else {
        Complex64::from_polar(1.0, phi)
    }
}

/// Wraps an angle into `[0, 2 pi)`.
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

impl BoundaryRegime {
    pub fn neumann() -> Self {
        Self { screen: ScreenBc::Neumann, outer: OuterBc::Neumann }
    }

    pub fn dirichlet() -> Self {
        Self { screen: ScreenBc::Neumann, outer: OuterBc::Dirichlet }
    }

    /// Bloch conditions with phases wrapped into `[0, 2 pi)`.
    pub fn bloch(phi: [f64; 2]) -> Self {
        Self {
            screen: ScreenBc::Neumann,
            outer: OuterBc::Bloch { phi: phi.map(wrap_phase) },
        }
    }

    pub fn with_screen(mut self, screen: ScreenBc) -> Self {
        self.screen = screen;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let OuterBc::Bloch { phi } = self.outer {
            if phi.iter().any(|p| !(0.0..2.0 * PI).contains(p)) {
                return Err(Error::Domain(format!("Bloch phases {phi:?} must lie in [0, 2 pi)")));
            }
        }
        Ok(())
    }

    /// `(theta_1, theta_2)` for Bloch conditions.
    pub fn theta(&self) -> Option<[Complex64; 2]> {
        match self.outer {
            OuterBc::Bloch { phi } => Some(phi.map(unit_phase)),
            _ => None,
        }
    }

    /// Whether the pair can be assembled in real arithmetic.
    pub fn is_real(&self) -> bool {
        match self.outer {
            OuterBc::Bloch { phi } => phi.iter().all(|&p| p == 0.0 || p == PI),
            _ => true,
        }
    }

    pub fn label(&self) -> String {
        let screen = match self.screen {
            ScreenBc::Neumann => "N",
            ScreenBc::Dirichlet => "D",
        };
        match self.outer {
            OuterBc::Neumann => format!("screen {screen}, outer neumann"),
            OuterBc::Dirichlet => format!("screen {screen}, outer dirichlet"),
            OuterBc::Bloch { phi } => format!("screen {screen}, bloch({:.6}, {:.6})", phi[0], phi[1]),
        }
    }
}

/// Where a mesh node's value comes from: `u_node = coeff * u[dof]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DofRef {
    pub dof: usize,
    pub coeff: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Real,
    Complex,
}

#[derive(Debug, Clone)]
pub struct OperatorPair<T> {
    pub stiffness: CsrMatrix<T>,
    pub mass: CsrMatrix<T>,
    /// Per mesh node; `None` for eliminated Dirichlet nodes.
    pub dof_map: Vec<Option<DofRef>>,
    pub regime: BoundaryRegime,
}

/// An assembled pair in whichever arithmetic the regime needs.
#[derive(Debug, Clone)]
pub enum AnyPair {
    Real(OperatorPair<f64>),
    Complex(OperatorPair<Complex64>),
}

impl AnyPair {
    pub fn field_kind(&self) -> FieldKind {
        match self {
            AnyPair::Real(_) => FieldKind::Real,
            AnyPair::Complex(_) => FieldKind::Complex,
        }
    }

    pub fn ndof(&self) -> usize {
        match self {
            AnyPair::Real(p) => p.ndof(),
            AnyPair::Complex(p) => p.ndof(),
        }
    }

    pub fn regime(&self) -> BoundaryRegime {
        match self {
            AnyPair::Real(p) => p.regime,
            AnyPair::Complex(p) => p.regime,
        }
    }
}

/// Element stiffness and mass of a linear triangle.
pub fn element_matrices(p: [[f64; 2]; 3]) -> ([[f64; 3]; 3], [[f64; 3]; 3], f64) {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]));
    // gradient of barycentric i is (y_j - y_k, x_k - x_j) / (2 area)
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        g[i] = [p[j][1] - p[k][1], p[k][0] - p[j][0]];
    }
    let mut ke = [[0.0; 3]; 3];
    let mut me = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            ke[i][j] = (g[i][0] * g[j][0] + g[i][1] * g[j][1]) / (4.0 * area);
            me[i][j] = area / if i == j { 6.0 } else { 12.0 };
        }
    }
    (ke, me, area)
}

fn is_eliminated(tag: NodeTag, regime: &BoundaryRegime) -> bool {
    match tag {
        NodeTag::ScreenInner | NodeTag::ScreenOuter | NodeTag::ApertureTip => {
            regime.screen == ScreenBc::Dirichlet
        }
        NodeTag::OuterBoundary => regime.outer == OuterBc::Dirichlet,
        _ => false,
    }
}

/// Maps every mesh node onto a DOF under `regime`.
pub fn dof_map(mesh: &CellMesh, regime: &BoundaryRegime) -> Result<(Vec<Option<DofRef>>, usize)> {
    regime.validate()?;
    let n = mesh.num_nodes();
    let mut map: Vec<Option<DofRef>> = vec![None; n];
    let mut slave_of: Vec<Option<(usize, [u8; 2])>> = vec![None; n];
    if let Some(_theta) = regime.theta() {
        let has_outer = mesh.tags.iter().any(|t| *t == NodeTag::OuterBoundary);
        if has_outer && mesh.outer_pairs.is_empty() {
            return Err(Error::Structure(
                "Bloch conditions need periodic pairs on the outer boundary".into(),
            ));
        }
        for p in &mesh.outer_pairs {
            slave_of[p.slave] = Some((p.master, p.shift));
        }
    }
    let one = Complex64::new(1.0, 0.0);
    let mut ndof = 0;
    for i in 0..n {
        if slave_of[i].is_some() || is_eliminated(mesh.tags[i], regime) {
            continue;
        }
        map[i] = Some(DofRef { dof: ndof, coeff: one });
        ndof += 1;
    }
    if let Some([t1, t2]) = regime.theta() {
        for i in 0..n {
            if let Some((master, shift)) = slave_of[i] {
                let m = map[master].ok_or_else(|| {
                    Error::Structure(format!("periodic master {master} of node {i} has no DOF"))
                })?;
                let phase = t1.powu(shift[0] as u32) * t2.powu(shift[1] as u32);
                map[i] = Some(DofRef { dof: m.dof, coeff: m.coeff * phase });
            }
        }
    }
    Ok((map, ndof))
}

const CHUNK: usize = 2048;

/// Assembles the pair in the arithmetic `T`.
pub fn assemble_as<T: Scalar>(mesh: &CellMesh, regime: &BoundaryRegime) -> Result<OperatorPair<T>> {
    let (map, ndof) = dof_map(mesh, regime)?;
    if !T::IS_COMPLEX && !regime.is_real() {
        return Err(Error::Domain(format!("{} needs complex arithmetic", regime.label())));
    }
    if ndof == 0 {
        return Err(Error::Structure("no degrees of freedom left".into()));
    }
    let coeffs: Vec<Option<(usize, T)>> = map
        .iter()
        .map(|m| m.map(|d| (d.dof, T::from_phase(d.coeff).expect("real phase"))))
        .collect();
    // per-chunk triplet buffers, concatenated in chunk order so the summation
    // order per entry does not depend on the thread schedule
    let chunks: Vec<(Vec<(usize, usize, T)>, Vec<(usize, usize, T)>)> = mesh
        .triangles
        .par_chunks(CHUNK)
        .map(|tris| {
            let mut k = Vec::with_capacity(9 * tris.len());
            let mut m = Vec::with_capacity(9 * tris.len());
            for tri in tris {
                let p = tri.map(|v| mesh.vertices[v]);
                let (ke, me, _) = element_matrices(p);
                for a in 0..3 {
                    let Some((ja, ca)) = coeffs[tri[a]] else { continue };
                    for b in 0..3 {
                        let Some((jb, cb)) = coeffs[tri[b]] else { continue };
                        let w = ca.conj() * cb;
                        k.push((ja, jb, w.scale(ke[a][b])));
                        m.push((ja, jb, w.scale(me[a][b])));
                    }
                }
            }
            (k, m)
        })
        .collect();
    let mut kt = Vec::new();
    let mut mt = Vec::new();
    for (k, m) in chunks {
        kt.extend(k);
        mt.extend(m);
    }
    Ok(OperatorPair {
        stiffness: CsrMatrix::from_triplets(ndof, ndof, kt),
        mass: CsrMatrix::from_triplets(ndof, ndof, mt),
        dof_map: map,
        regime: *regime,
    })
}

/// Assembles the pair, in real arithmetic whenever the regime allows it.
pub fn assemble(mesh: &CellMesh, regime: &BoundaryRegime) -> Result<AnyPair> {
    if regime.is_real() {
        assemble_as::<f64>(mesh, regime).map(AnyPair::Real)
    } else {
        assemble_as::<Complex64>(mesh, regime).map(AnyPair::Complex)
    }
}

impl<T: Scalar> OperatorPair<T> {
    pub fn ndof(&self) -> usize {
        self.stiffness.nrows()
    }

    /// DOF vector of a nodal function (values read from each DOF's owner node).
    pub fn restrict_nodal(&self, nodal: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.ndof()];
        let mut set = vec![false; self.ndof()];
        for (i, m) in self.dof_map.iter().enumerate() {
            if let Some(d) = m {
                if !set[d.dof] && d.coeff == Complex64::new(1.0, 0.0) {
                    out[d.dof] = nodal[i];
                    set[d.dof] = true;
                }
            }
        }
        out
    }

    /// Nodal values of a DOF vector (zero on eliminated nodes).
    pub fn expand(&self, v: &[T]) -> Vec<T> {
        self.dof_map
            .iter()
            .map(|m| match m {
                Some(d) => T::from_phase(d.coeff).expect("phase representable") * v[d.dof],
                None => T::zero(),
            })
            .collect()
    }

    pub fn energy(&self, v: &[T]) -> f64 {
        dot(v, &self.stiffness.mul_vec(v)).re()
    }

    pub fn mass_norm2(&self, v: &[T]) -> f64 {
        dot(v, &self.mass.mul_vec(v)).re()
    }

    /// Writes `row col re im` lines for both matrices.
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::new();
        for (name, mat) in [("stiffness", &self.stiffness), ("mass", &self.mass)] {
            writeln!(s, "% {name} {} {} {}", mat.nrows(), mat.ncols(), mat.nnz()).unwrap();
            for (i, j, v) in mat.triplets() {
                writeln!(s, "{i} {j} {:.16e} {:.16e}", v.re(), v.im()).unwrap();
            }
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }
}

/// `(v^H K v) / (v^H M v)`.
pub fn rayleigh_quotient<T: Scalar>(pair: &OperatorPair<T>, v: &[T]) -> Result<f64> {
    if v.len() != pair.ndof() {
        return Err(Error::Domain(format!(
            "vector of length {} for a pair with {} DOFs",
            v.len(),
            pair.ndof()
        )));
    }
    let mass = pair.mass_norm2(v);
    if !(mass > 0.0) {
        return Err(Error::Domain("Rayleigh quotient of the zero vector".into()));
    }
    Ok(pair.energy(v) / mass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn element_matrices_of_reference_triangle() {
        let (ke, me, area) = element_matrices([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(area, 0.5);
        assert_eq!(ke[0], [1.0, -0.5, -0.5]);
        assert_eq!(ke[1], [-0.5, 0.5, 0.0]);
        let total: f64 = me.iter().flatten().sum();
        assert!((total - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bloch_without_pairs_is_a_structural_error() {
        let mut mesh = CellMesh::empty_cell(4);
        mesh.outer_pairs.clear();
        let err = assemble(&mesh, &BoundaryRegime::bloch([0.3, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Structure(_)));
    }

    #[test]
    fn real_phases_assemble_real() {
        let mesh = CellMesh::empty_cell(4);
        assert_eq!(assemble(&mesh, &BoundaryRegime::bloch([PI, 0.0])).unwrap().field_kind(), FieldKind::Real);
        assert_eq!(
            assemble(&mesh, &BoundaryRegime::bloch([0.5, 0.0])).unwrap().field_kind(),
            FieldKind::Complex
        );
        assert!(assemble_as::<f64>(&mesh, &BoundaryRegime::bloch([0.5, 0.0])).is_err());
    }

    #[test]
    fn periodic_dofs_identify_faces() {
        let mesh = CellMesh::empty_cell(4);
        let pair = assemble_as::<f64>(&mesh, &BoundaryRegime::bloch([0.0, 0.0])).unwrap();
        assert_eq!(pair.ndof(), 16);
        let dir = assemble_as::<f64>(&mesh, &BoundaryRegime::dirichlet()).unwrap();
        assert_eq!(dir.ndof(), 9);
        let neu = assemble_as::<f64>(&mesh, &BoundaryRegime::neumann()).unwrap();
        assert_eq!(neu.ndof(), 25);
    }

    #[test]
    fn constants_span_the_neumann_kernel() {
        let mesh = CellMesh::empty_cell(6);
        let pair = assemble_as::<f64>(&mesh, &BoundaryRegime::neumann()).unwrap();
        let ones = vec![1.0; pair.ndof()];
        assert!(rayleigh_quotient(&pair, &ones).unwrap().abs() < 1e-13);
        assert!((pair.mass_norm2(&ones) - 1.0).abs() < 1e-13);
        assert!(rayleigh_quotient(&pair, &vec![0.0; pair.ndof()]).is_err());
        assert!(rayleigh_quotient(&pair, &[1.0]).is_err());
    }

    #[test]
    fn pairs_are_hermitian() {
        let mesh = CellMesh::empty_cell(6);
        let pair = assemble_as::<Complex64>(&mesh, &BoundaryRegime::bloch([0.4, 2.2])).unwrap();
        assert!(pair.stiffness.hermitian_defect() <= 1e-14);
        assert!(pair.mass.hermitian_defect() <= 1e-14);
    }

    #[test]
    fn wrap_phase_maps_into_range() {
        assert_eq!(wrap_phase(-PI), PI);
        assert_eq!(wrap_phase(2.0 * PI), 0.0);
        assert!(BoundaryRegime {
            screen: ScreenBc::Neumann,
            outer: OuterBc::Bloch { phi: [7.0, 0.0] }
        }
        .validate()
        .is_err());
    }
}

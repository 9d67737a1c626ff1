//! Triangulated period cell `(-1/2, 1/2)^2` containing a square trap whose
//! boundary is a crack except for a small aperture in the middle of its top
//! face.
//!
//! The screen is represented by node duplication: every screen node outside
//! the closed aperture exists twice, once for the triangles inside the trap and
//! once for those outside, so the discrete space may jump across the screen
//! while staying continuous through the aperture.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};

use crate::error::{Error, Result};

/// Smallest aperture radius the mesher agrees to resolve.
pub const MIN_RESOLVABLE_RADIUS: f64 = 1e-8;

/// Geometry of the period cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellGeometry {
    /// Edge length of the trap square, in (0, 1).
    pub b: f64,
    /// Half-width of the aperture; 0 closes the screen.
    pub hole_radius: f64,
    /// Ratio between consecutive element sizes moving away from a tip.
    pub grading_ratio: f64,
    /// Bulk element size.
    pub h_max: f64,
    /// Tip element size is `hole_radius / (4 * tip_refinement)`.
    pub tip_refinement: u32,
}

impl CellGeometry {
    pub fn new(b: f64, hole_radius: f64) -> Self {
        Self {
            b,
            hole_radius,
            grading_ratio: 1.3,
            h_max: 1.0 / 64.0,
            tip_refinement: 1,
        }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    pub fn with_tip_refinement(mut self, refinement: u32) -> Self {
        self.tip_refinement = refinement;
        self
    }

    pub fn closed(&self) -> bool {
        self.hole_radius == 0.0
    }

    pub fn aperture_center(&self) -> [f64; 2] {
        [0.0, 0.5 * self.b]
    }

    pub fn tips(&self) -> Vec<[f64; 2]> {
        if self.closed() {
            Vec::new()
        } else {
            let y = 0.5 * self.b;
            vec![[-self.hole_radius, y], [self.hole_radius, y]]
        }
    }

    pub fn tip_size(&self) -> f64 {
        self.hole_radius / (4.0 * self.tip_refinement as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.b < 1.0) {
            return Err(Error::Domain(format!("screen edge b = {} must lie in (0, 1)", self.b)));
        }
        let r = self.hole_radius;
        if !(r >= 0.0 && r < 0.5 * self.b) {
            return Err(Error::Geometry(format!(
                "aperture radius {r} must lie in [0, b/2 = {})",
                0.5 * self.b
            )));
        }
        if r > 0.0 && r < MIN_RESOLVABLE_RADIUS {
            return Err(Error::Unresolvable(format!(
                "aperture radius {r:e} is below the resolvable limit {MIN_RESOLVABLE_RADIUS:e}"
            )));
        }
        if !(self.grading_ratio > 1.0 && self.grading_ratio < 3.0) {
            return Err(Error::Domain(format!(
                "grading ratio {} must lie in (1, 3)",
                self.grading_ratio
            )));
        }
        if !(self.h_max > 0.0 && self.h_max <= 0.25) {
            return Err(Error::Domain(format!("h_max = {} must lie in (0, 1/4]", self.h_max)));
        }
        if self.tip_refinement == 0 {
            return Err(Error::Domain("tip refinement must be >= 1".into()));
        }
        Ok(())
    }

    /// Target element size at `p`.
    pub fn size_at(&self, p: [f64; 2]) -> f64 {
        let tips = self.tips();
        if tips.is_empty() {
            return self.h_max;
        }
        let dist = tips
            .iter()
            .map(|t| ((p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        (self.tip_size() + (self.grading_ratio - 1.0) * dist).min(self.h_max)
    }
}

/// Region label of a mesh node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeTag {
    InteriorF,
    InteriorB,
    ScreenInner,
    ScreenOuter,
    /// Open aperture (shared by both sides).
    Aperture,
    /// Aperture end point; shared by both sides, belongs to the closed screen.
    ApertureTip,
    OuterBoundary,
}

impl NodeTag {
    pub fn code(self) -> &'static str {
        match self {
            NodeTag::InteriorF => "F",
            NodeTag::InteriorB => "B",
            NodeTag::ScreenInner => "SI",
            NodeTag::ScreenOuter => "SO",
            NodeTag::Aperture => "A",
            NodeTag::ApertureTip => "T",
            NodeTag::OuterBoundary => "O",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Some(match code {
            "F" => NodeTag::InteriorF,
            "B" => NodeTag::InteriorB,
            "SI" => NodeTag::ScreenInner,
            "SO" => NodeTag::ScreenOuter,
            "A" => NodeTag::Aperture,
            "T" => NodeTag::ApertureTip,
            "O" => NodeTag::OuterBoundary,
            _ => return None,
        })
    }

    pub fn is_screen(self) -> bool {
        matches!(self, NodeTag::ScreenInner | NodeTag::ScreenOuter)
    }
}

/// Copy of a duplicated screen node on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeamPair {
    pub inner: usize,
    pub outer: usize,
}

/// Identification of an outer-boundary node with its image on the left or
/// bottom face: `coords(slave) = coords(master) + shift`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicPair {
    pub slave: usize,
    pub master: usize,
    pub shift: [u8; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellMesh {
    pub geometry: Option<CellGeometry>,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub seam_pairs: Vec<SeamPair>,
    pub outer_pairs: Vec<PeriodicPair>,
    pub tags: Vec<NodeTag>,
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

/// Places points on the segment `[p0, p1]` following the size field.
/// Both end points are included and reproduced exactly.
pub(crate) fn discretize_segment(p0: [f64; 2], p1: [f64; 2], size: &dyn Fn([f64; 2]) -> f64) -> Vec<[f64; 2]> {
    let len = ((p1[0] - p0[0]).powi(2) + (p1[1] - p0[1]).powi(2)).sqrt();
    let at = |s: f64| [p0[0] + (p1[0] - p0[0]) * s / len, p0[1] + (p1[1] - p0[1]) * s / len];
    // cumulative integral of 1/h on a fine adaptive sampling
    let mut samples = vec![(0.0f64, 0.0f64)];
    let mut s = 0.0;
    let mut inv = 1.0 / size(p0);
    while s < len {
        let step = (size(at(s)) / 32.0).min(len - s);
        let s_next = if len - s - step < 1e-3 * step { len } else { s + step };
        let inv_next = 1.0 / size(at(s_next));
        let acc = samples.last().unwrap().1 + 0.5 * (inv + inv_next) * (s_next - s);
        samples.push((s_next, acc));
        s = s_next;
        inv = inv_next;
    }
    let total = samples.last().unwrap().1;
    let count = (total - 1e-9).ceil().max(1.0) as usize;
    let mut points = vec![p0];
    let mut j = 0;
    for k in 1..count {
        let target = total * k as f64 / count as f64;
        while samples[j + 1].1 < target {
            j += 1;
        }
        let (s0, a0) = samples[j];
        let (s1, a1) = samples[j + 1];
        let t = if a1 > a0 { (target - a0) / (a1 - a0) } else { 0.0 };
        points.push(at(s0 + t * (s1 - s0)));
    }
    points.push(p1);
    points
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Seed {
    Outer,
    Screen,
    Aperture,
    Tip,
}

/// Builds the cell triangulation.
pub fn build_cell_mesh(geom: &CellGeometry) -> Result<CellMesh> {
    geom.validate()?;
    let half_b = 0.5 * geom.b;
    let r = geom.hole_radius;
    let size = |p: [f64; 2]| geom.size_at(p);

    let mut points: Vec<[f64; 2]> = Vec::new();
    let mut kinds: Vec<Seed> = Vec::new();
    let mut edges: Vec<[usize; 2]> = Vec::new();
    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    let mut add_point = |p: [f64; 2], kind: Seed, points: &mut Vec<[f64; 2]>, kinds: &mut Vec<Seed>| {
        let key = (p[0].to_bits(), p[1].to_bits());
        *index.entry(key).or_insert_with(|| {
            points.push(p);
            kinds.push(kind);
            points.len() - 1
        })
    };
    let mut add_polyline = |pts: &[[f64; 2]],
                            kind: &dyn Fn(usize) -> Seed,
                            points: &mut Vec<[f64; 2]>,
                            kinds: &mut Vec<Seed>,
                            edges: &mut Vec<[usize; 2]>| {
        let ids: Vec<usize> = pts
            .iter()
            .enumerate()
            .map(|(i, &p)| add_point(p, kind(i), points, kinds))
            .collect();
        for w in ids.windows(2) {
            edges.push([w[0], w[1]]);
        }
    };

    // outer boundary: uniform spacing, identical on opposite faces
    let n_out = (1.0 / geom.h_max - 1e-9).ceil() as usize;
    let ticks: Vec<f64> = (0..=n_out).map(|i| -0.5 + i as f64 / n_out as f64).collect();
    let outer_sides: [Vec<[f64; 2]>; 4] = [
        ticks.iter().map(|&t| [t, -0.5]).collect(),
        ticks.iter().map(|&t| [0.5, t]).collect(),
        ticks.iter().rev().map(|&t| [t, 0.5]).collect(),
        ticks.iter().rev().map(|&t| [-0.5, t]).collect(),
    ];
    for side in &outer_sides {
        add_polyline(side, &|_| Seed::Outer, &mut points, &mut kinds, &mut edges);
    }

    // screen: bottom, right and left faces, then the top face with the aperture
    let (bl, br, tr, tl) = ([-half_b, -half_b], [half_b, -half_b], [half_b, half_b], [-half_b, half_b]);
    for (p0, p1) in [(bl, br), (br, tr), (tl, bl)] {
        let pts = discretize_segment(p0, p1, &size);
        add_polyline(&pts, &|_| Seed::Screen, &mut points, &mut kinds, &mut edges);
    }
    if geom.closed() {
        let pts = discretize_segment(tr, tl, &size);
        add_polyline(&pts, &|_| Seed::Screen, &mut points, &mut kinds, &mut edges);
    } else {
        // right part, mirrored to the left so the point set is symmetric in x
        let right = discretize_segment([r, half_b], tr, &size);
        let left: Vec<[f64; 2]> = right.iter().rev().map(|p| [-p[0], p[1]]).collect();
        let last = right.len() - 1;
        add_polyline(
            &right,
            &|i| if i == 0 { Seed::Tip } else { Seed::Screen },
            &mut points,
            &mut kinds,
            &mut edges,
        );
        add_polyline(
            &left,
            &|i| if i == last { Seed::Tip } else { Seed::Screen },
            &mut points,
            &mut kinds,
            &mut edges,
        );
        let mut half = discretize_segment([0.0, half_b], [r, half_b], &size);
        half.reverse();
        let mut aperture: Vec<[f64; 2]> = half.iter().map(|p| [-p[0], p[1]]).collect();
        aperture.extend(half.iter().rev().skip(1));
        let last = aperture.len() - 1;
        add_polyline(
            &aperture,
            &|i| if i == 0 || i == last { Seed::Tip } else { Seed::Aperture },
            &mut points,
            &mut kinds,
            &mut edges,
        );
    }

    let seeds = points.len();
    let vertices: Vec<Point2<f64>> = points.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> =
        ConstrainedDelaunayTriangulation::bulk_load_cdt(vertices, edges)
            .map_err(|e| Error::Structure(format!("triangulation failed: {e:?}")))?;
    if cdt.num_vertices() != seeds {
        return Err(Error::Structure("duplicate seed points in the cell outline".into()));
    }
    let params = RefinementParameters::<f64>::new()
        .keep_constraint_edges()
        .with_angle_limit(AngleLimit::from_deg(28.0))
        .with_max_allowed_area(0.45 * geom.h_max * geom.h_max)
        .with_max_additional_vertices(4_000_000);
    let outcome = cdt.refine(params);
    if !outcome.refinement_complete {
        log::warn!("mesh refinement stopped before reaching the quality target");
    }

    let mut vertices: Vec<[f64; 2]> = cdt
        .vertices()
        .map(|v| {
            let p = v.position();
            [p.x, p.y]
        })
        .collect();
    let inside_b = |p: [f64; 2]| p[0].abs() < half_b && p[1].abs() < half_b;
    let mut tags: Vec<NodeTag> = vertices
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if i < seeds {
                match kinds[i] {
                    Seed::Outer => NodeTag::OuterBoundary,
                    Seed::Screen => NodeTag::ScreenOuter,
                    Seed::Aperture => NodeTag::Aperture,
                    Seed::Tip => NodeTag::ApertureTip,
                }
            } else if inside_b(p) {
                NodeTag::InteriorB
            } else {
                NodeTag::InteriorF
            }
        })
        .collect();

    let mut triangles: Vec<[usize; 3]> = Vec::with_capacity(cdt.num_inner_faces());
    for face in cdt.inner_faces() {
        let [a, b, c] = face.vertices().map(|v| v.fix().index());
        let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
        if signed_area(pa, pb, pc) > 0.0 {
            triangles.push([a, b, c]);
        } else {
            triangles.push([a, c, b]);
        }
    }

    // duplicate screen nodes for the triangles inside the trap
    let mut inner_copy: BTreeMap<usize, usize> = BTreeMap::new();
    for tri in triangles.iter_mut() {
        let c = tri.iter().fold([0.0, 0.0], |acc, &v| {
            [acc[0] + vertices[v][0] / 3.0, acc[1] + vertices[v][1] / 3.0]
        });
        if !inside_b(c) {
            continue;
        }
        for v in tri.iter_mut() {
            if tags[*v] == NodeTag::ScreenOuter {
                let copy = *inner_copy.entry(*v).or_insert_with(|| {
                    vertices.push(vertices[*v]);
                    tags.push(NodeTag::ScreenInner);
                    vertices.len() - 1
                });
                *v = copy;
            }
        }
    }
    let seam_pairs = inner_copy
        .iter()
        .map(|(&outer, &inner)| SeamPair { inner, outer })
        .collect();

    let outer_pairs = periodic_pairs(&vertices, &tags)?;
    Ok(CellMesh {
        geometry: Some(*geom),
        vertices,
        triangles,
        seam_pairs,
        outer_pairs,
        tags,
    })
}

fn periodic_pairs(vertices: &[[f64; 2]], tags: &[NodeTag]) -> Result<Vec<PeriodicPair>> {
    let key = |p: [f64; 2]| (p[0].to_bits(), p[1].to_bits());
    let lookup: HashMap<(u64, u64), usize> = tags
        .iter()
        .enumerate()
        .filter(|(_, t)| **t == NodeTag::OuterBoundary)
        .map(|(i, _)| (key(vertices[i]), i))
        .collect();
    let mut pairs = Vec::new();
    for (i, t) in tags.iter().enumerate() {
        if *t != NodeTag::OuterBoundary {
            continue;
        }
        let p = vertices[i];
        let sx = u8::from(p[0] == 0.5);
        let sy = u8::from(p[1] == 0.5);
        if sx == 0 && sy == 0 {
            continue;
        }
        let image = [p[0] - sx as f64, p[1] - sy as f64];
        let master = *lookup.get(&key(image)).ok_or_else(|| {
            Error::Structure(format!("outer node {i} at {p:?} has no periodic image"))
        })?;
        pairs.push(PeriodicPair { slave: i, master, shift: [sx, sy] });
    }
    Ok(pairs)
}

impl CellMesh {
    /// Structured triangulation of the cell without any screen: `m x m`
    /// squares, each cut along the same diagonal.
    pub fn empty_cell(m: usize) -> Self {
        let h = 1.0 / m as f64;
        let id = |i: usize, j: usize| j * (m + 1) + i;
        let mut vertices = Vec::with_capacity((m + 1) * (m + 1));
        let mut tags = Vec::with_capacity((m + 1) * (m + 1));
        for j in 0..=m {
            for i in 0..=m {
                let x = if i == m { 0.5 } else { -0.5 + i as f64 * h };
                let y = if j == m { 0.5 } else { -0.5 + j as f64 * h };
                vertices.push([x, y]);
                let on_outer = i == 0 || j == 0 || i == m || j == m;
                tags.push(if on_outer { NodeTag::OuterBoundary } else { NodeTag::InteriorF });
            }
        }
        let mut triangles = Vec::with_capacity(2 * m * m);
        for j in 0..m {
            for i in 0..m {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let outer_pairs = periodic_pairs(&vertices, &tags).expect("structured grid is periodic");
        Self {
            geometry: None,
            vertices,
            triangles,
            seam_pairs: Vec::new(),
            outer_pairs,
            tags,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.vertices.len()
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        [(pa[0] + pb[0] + pc[0]) / 3.0, (pa[1] + pb[1] + pc[1]) / 3.0]
    }

    /// Whether triangle `t` lies inside the trap.
    pub fn in_trap(&self, t: usize) -> bool {
        match self.geometry {
            Some(g) => {
                let c = self.centroid(t);
                c[0].abs() < 0.5 * g.b && c[1].abs() < 0.5 * g.b
            }
            None => false,
        }
    }

    /// Interior angles of triangle `t` in degrees.
    pub fn angles(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        let angle = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
            let u = [q[0] - p[0], q[1] - p[1]];
            let v = [r[0] - p[0], r[1] - p[1]];
            let cos = (u[0] * v[0] + u[1] * v[1])
                / ((u[0].hypot(u[1])) * (v[0].hypot(v[1])));
            cos.clamp(-1.0, 1.0).acos().to_degrees()
        };
        [angle(a, b, c), angle(b, c, a), angle(c, a, b)]
    }

    fn edge_lengths(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        let d = |p: [f64; 2], q: [f64; 2]| (p[0] - q[0]).hypot(p[1] - q[1]);
        [d(a, b), d(b, c), d(c, a)]
    }

    /// Shortest edge among triangles touching an aperture tip.
    pub fn min_tip_edge(&self) -> Option<f64> {
        let tips: Vec<usize> = (0..self.num_nodes())
            .filter(|&i| self.tags[i] == NodeTag::ApertureTip)
            .collect();
        (0..self.triangles.len())
            .filter(|&t| self.triangles[t].iter().any(|v| tips.contains(v)))
            .map(|t| self.edge_lengths(t).into_iter().fold(f64::INFINITY, f64::min))
            .reduce(f64::min)
    }

    /// Connected components of the triangle graph (triangles sharing a node).
    /// Returns the component id of every triangle and the component count.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let n = self.num_nodes();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for tri in &self.triangles {
            for k in 1..3 {
                let (a, b) = (find(&mut parent, tri[0]), find(&mut parent, tri[k]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
        let comp: Vec<usize> = self
            .triangles
            .iter()
            .map(|tri| {
                let root = find(&mut parent, tri[0]);
                let next = ids.len();
                *ids.entry(root).or_insert(next)
            })
            .collect();
        (comp, ids.len())
    }

    /// Renumbers nodes: node `i` becomes `perm[i]`.
    pub fn renumber(&self, perm: &[usize]) -> Self {
        let n = self.num_nodes();
        let mut vertices = vec![[0.0; 2]; n];
        let mut tags = vec![NodeTag::InteriorF; n];
        for i in 0..n {
            vertices[perm[i]] = self.vertices[i];
            tags[perm[i]] = self.tags[i];
        }
        Self {
            geometry: self.geometry,
            vertices,
            triangles: self.triangles.iter().map(|t| t.map(|v| perm[v])).collect(),
            seam_pairs: self
                .seam_pairs
                .iter()
                .map(|s| SeamPair { inner: perm[s.inner], outer: perm[s.outer] })
                .collect(),
            outer_pairs: self
                .outer_pairs
                .iter()
                .map(|p| PeriodicPair { slave: perm[p.slave], master: perm[p.master], shift: p.shift })
                .collect(),
            tags,
        }
    }

    /// Sub-mesh made of the triangles accepted by `keep`, with unused nodes
    /// dropped and periodic pairs discarded.
    pub fn restrict(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut map = vec![usize::MAX; self.num_nodes()];
        let mut vertices = Vec::new();
        let mut tags = Vec::new();
        let mut triangles = Vec::new();
        for t in 0..self.triangles.len() {
            if !keep(t) {
                continue;
            }
            let tri = self.triangles[t].map(|v| {
                if map[v] == usize::MAX {
                    map[v] = vertices.len();
                    vertices.push(self.vertices[v]);
                    tags.push(self.tags[v]);
                }
                map[v]
            });
            triangles.push(tri);
        }
        Self {
            geometry: self.geometry,
            vertices,
            triangles,
            seam_pairs: Vec::new(),
            outer_pairs: Vec::new(),
            tags,
        }
    }
}

/// Outcome of one mesh invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Offending node or triangle indices (truncated).
    pub offenders: Vec<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshReport {
    pub checks: Vec<Check>,
}

impl MeshReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Minimum angle required away from the aperture tips, in degrees.
pub const MIN_ANGLE_BULK: f64 = 15.0;
/// Minimum angle tolerated in the graded zone around the tips, in degrees.
pub const MIN_ANGLE_TIP: f64 = 5.0;

/// Checks every structural invariant of a cell mesh.
pub fn validate_mesh(mesh: &CellMesh) -> MeshReport {
    const MAX_OFFENDERS: usize = 32;
    let mut checks = Vec::new();
    let mut push = |name: &'static str, offenders: Vec<usize>, detail: String| {
        let passed = offenders.is_empty() && !detail.starts_with("FAIL");
        checks.push(Check {
            name,
            passed,
            offenders: offenders.into_iter().take(MAX_OFFENDERS).collect(),
            detail,
        });
    };

    let inverted: Vec<usize> = (0..mesh.triangles.len()).filter(|&t| !(mesh.area(t) > 0.0)).collect();
    push("orientation", inverted, String::new());

    let total = mesh.total_area();
    let detail = if (total - 1.0).abs() <= 1e-10 {
        format!("total area {total:.15}")
    } else {
        format!("FAIL total area {total:.15}")
    };
    push("area", Vec::new(), detail);

    // seam: screen positions twice (one copy per side), aperture positions once
    let mut by_position: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
    for (i, p) in mesh.vertices.iter().enumerate() {
        by_position.entry((p[0].to_bits(), p[1].to_bits())).or_default().push(i);
    }
    let mut seam_bad = Vec::new();
    for nodes in by_position.values() {
        let tags: Vec<NodeTag> = nodes.iter().map(|&i| mesh.tags[i]).collect();
        let screen = tags.iter().any(|t| t.is_screen());
        let ok = if screen {
            nodes.len() == 2
                && tags.contains(&NodeTag::ScreenInner)
                && tags.contains(&NodeTag::ScreenOuter)
        } else {
            nodes.len() == 1
        };
        if !ok {
            seam_bad.extend(nodes.iter().copied());
        }
    }
    if mesh.geometry.is_some() {
        for t in 0..mesh.triangles.len() {
            let inside = mesh.in_trap(t);
            for &v in &mesh.triangles[t] {
                let wrong_side = match mesh.tags[v] {
                    NodeTag::ScreenInner => !inside,
                    NodeTag::ScreenOuter => inside,
                    _ => false,
                };
                if wrong_side {
                    seam_bad.push(v);
                }
            }
        }
    }
    for pair in &mesh.seam_pairs {
        if mesh.tags.get(pair.inner) != Some(&NodeTag::ScreenInner)
            || mesh.tags.get(pair.outer) != Some(&NodeTag::ScreenOuter)
            || mesh.vertices[pair.inner] != mesh.vertices[pair.outer]
        {
            seam_bad.push(pair.inner);
        }
    }
    let screen_nodes = mesh.tags.iter().filter(|t| t.is_screen()).count();
    let detail = if screen_nodes == 2 * mesh.seam_pairs.len() {
        format!("{} seam pairs", mesh.seam_pairs.len())
    } else {
        format!("FAIL {screen_nodes} screen nodes for {} seam pairs", mesh.seam_pairs.len())
    };
    push("seam_pairs", seam_bad, detail);

    // periodic pairing: exact images, every non-master outer node paired once
    let mut outer_bad = Vec::new();
    let mut seen = vec![0usize; mesh.num_nodes()];
    for p in &mesh.outer_pairs {
        let s = mesh.vertices[p.slave];
        let m = mesh.vertices[p.master];
        let dx = s[0] - m[0] - p.shift[0] as f64;
        let dy = s[1] - m[1] - p.shift[1] as f64;
        let master_face = m[0] == -0.5 || m[1] == -0.5;
        if dx.abs() > 1e-12 || dy.abs() > 1e-12 || !master_face || p.shift == [0, 0] {
            outer_bad.push(p.slave);
        }
        seen[p.slave] += 1;
    }
    for (i, t) in mesh.tags.iter().enumerate() {
        if *t != NodeTag::OuterBoundary {
            continue;
        }
        let p = mesh.vertices[i];
        let is_slave = p[0] == 0.5 || p[1] == 0.5;
        if (is_slave && seen[i] != 1) || (!is_slave && seen[i] != 0) {
            outer_bad.push(i);
        }
    }
    outer_bad.sort_unstable();
    outer_bad.dedup();
    push("outer_pairs", outer_bad, format!("{} periodic pairs", mesh.outer_pairs.len()));

    // quality
    let tips: Vec<[f64; 2]> = mesh.geometry.map(|g| g.tips()).unwrap_or_default();
    let tip_zone = mesh.geometry.map(|g| 2.0 * g.hole_radius).unwrap_or(0.0);
    let mut poor = Vec::new();
    let mut min_bulk = f64::INFINITY;
    let mut min_tip = f64::INFINITY;
    for t in 0..mesh.triangles.len() {
        let c = mesh.centroid(t);
        let near_tip = tips.iter().any(|p| (c[0] - p[0]).hypot(c[1] - p[1]) <= tip_zone);
        let min_angle = mesh.angles(t).into_iter().fold(f64::INFINITY, f64::min);
        if near_tip {
            min_tip = min_tip.min(min_angle);
            if min_angle < MIN_ANGLE_TIP {
                poor.push(t);
            }
        } else {
            min_bulk = min_bulk.min(min_angle);
            if min_angle < MIN_ANGLE_BULK {
                poor.push(t);
            }
        }
    }
    push(
        "quality",
        poor,
        format!("min angle {min_bulk:.2} deg in bulk, {min_tip:.2} deg near tips"),
    );

    let (_, components) = mesh.components();
    let expected = match mesh.geometry {
        Some(g) if g.closed() => 2,
        _ => 1,
    };
    let detail = if components == expected {
        format!("{components} component(s)")
    } else {
        format!("FAIL {components} component(s), expected {expected}")
    };
    push("connectivity", Vec::new(), detail);

    MeshReport { checks }
}

const MESH_HEADER: &str = "cellmesh v1";

/// Writes the `cellmesh v1` text format.
pub fn write_mesh<W: Write>(mesh: &CellMesh, mut out: W) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "{MESH_HEADER}").unwrap();
    match mesh.geometry {
        Some(g) => writeln!(
            s,
            "geometry {:.16e} {:.16e} {:.16e} {:.16e} {}",
            g.b, g.hole_radius, g.grading_ratio, g.h_max, g.tip_refinement
        )
        .unwrap(),
        None => writeln!(s, "geometry none").unwrap(),
    }
    writeln!(s, "vertices {}", mesh.vertices.len()).unwrap();
    for p in &mesh.vertices {
        writeln!(s, "{:.16e} {:.16e}", p[0], p[1]).unwrap();
    }
    writeln!(s, "triangles {}", mesh.triangles.len()).unwrap();
    for t in &mesh.triangles {
        writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(s, "seam_pairs {}", mesh.seam_pairs.len()).unwrap();
    for p in &mesh.seam_pairs {
        writeln!(s, "{} {}", p.inner, p.outer).unwrap();
    }
    writeln!(s, "outer_pairs {}", mesh.outer_pairs.len()).unwrap();
    for p in &mesh.outer_pairs {
        writeln!(s, "{} {} {} {}", p.slave, p.master, p.shift[0], p.shift[1]).unwrap();
    }
    writeln!(s, "tags {}", mesh.tags.len()).unwrap();
    for t in &mesh.tags {
        writeln!(s, "{}", t.code()).unwrap();
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

/// Reads the `cellmesh v1` text format.
pub fn read_mesh<R: BufRead>(input: R) -> Result<CellMesh> {
    let mut lines = input.lines();
    let mut next = move || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Parse("unexpected end of mesh file".into()))?
            .map_err(Error::from)
    };
    fn fields<T: std::str::FromStr>(line: &str, n: usize) -> Result<Vec<T>> {
        let out: Vec<T> = line
            .split_whitespace()
            .map(|f| f.parse::<T>().map_err(|_| Error::Parse(format!("bad field '{f}' in '{line}'"))))
            .collect::<Result<_>>()?;
        if out.len() != n {
            return Err(Error::Parse(format!("expected {n} fields in '{line}'")));
        }
        Ok(out)
    }
    fn section(line: &str, name: &str) -> Result<usize> {
        let mut it = line.split_whitespace();
        match (it.next(), it.next().and_then(|c| c.parse().ok()), it.next()) {
            (Some(n), Some(c), None) if n == name => Ok(c),
            _ => Err(Error::Parse(format!("expected '{name} <count>', found '{line}'"))),
        }
    }

    if next()?.trim_end() != MESH_HEADER {
        return Err(Error::Parse(format!("missing '{MESH_HEADER}' header")));
    }
    let geo = next()?;
    let geometry = if geo.trim() == "geometry none" {
        None
    } else {
        let rest = geo
            .strip_prefix("geometry ")
            .ok_or_else(|| Error::Parse(format!("bad geometry line '{geo}'")))?;
        let parts: Vec<&str> = rest.split_whitespace().collect();
        if parts.len() != 5 {
            return Err(Error::Parse(format!("bad geometry line '{geo}'")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{s}'")));
        Some(CellGeometry {
            b: num(parts[0])?,
            hole_radius: num(parts[1])?,
            grading_ratio: num(parts[2])?,
            h_max: num(parts[3])?,
            tip_refinement: parts[4].parse().map_err(|_| Error::Parse(format!("bad refinement '{}'", parts[4])))?,
        })
    };
    let nv = section(&next()?, "vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let f = fields::<f64>(&next()?, 2)?;
        vertices.push([f[0], f[1]]);
    }
    let nt = section(&next()?, "triangles")?;
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let f = fields::<usize>(&next()?, 3)?;
        if f.iter().any(|&v| v >= nv) {
            return Err(Error::Parse(format!("triangle {f:?} references a missing vertex")));
        }
        triangles.push([f[0], f[1], f[2]]);
    }
    let ns = section(&next()?, "seam_pairs")?;
    let mut seam_pairs = Vec::with_capacity(ns);
    for _ in 0..ns {
        let f = fields::<usize>(&next()?, 2)?;
        seam_pairs.push(SeamPair { inner: f[0], outer: f[1] });
    }
    let no = section(&next()?, "outer_pairs")?;
    let mut outer_pairs = Vec::with_capacity(no);
    for _ in 0..no {
        let f = fields::<usize>(&next()?, 4)?;
        outer_pairs.push(PeriodicPair {
            slave: f[0],
            master: f[1],
            shift: [f[2] as u8, f[3] as u8],
        });
    }
    let ng = section(&next()?, "tags")?;
    if ng != nv {
        return Err(Error::Parse(format!("{ng} tags for {nv} vertices")));
    }
    let mut tags = Vec::with_capacity(ng);
    for _ in 0..ng {
        let line = next()?;
        tags.push(
            NodeTag::from_code(line.trim())
                .ok_or_else(|| Error::Parse(format!("unknown tag '{}'", line.trim())))?,
        );
    }
    Ok(CellMesh { geometry, vertices, triangles, seam_pairs, outer_pairs, tags })
}

//! Structured triangular meshes, curved mappings, connectivity and geometric
//! factors.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::quadrature::SurfaceQuadrature;
use crate::refelem::{basis_vandermonde, equispaced_nodes, grad_vandermonde};

/// Pointwise map applied on top of the straight-sided mesh.
pub type Deformation = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Axis-aligned rectangle given by its center and side lengths.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub x0: f64,
    pub y0: f64,
    pub lx: f64,
    pub ly: f64,
}

impl Domain {
    pub fn from_bounds(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Domain {
        Domain {
            x0: 0.5 * (xmin + xmax),
            y0: 0.5 * (ymin + ymax),
            lx: xmax - xmin,
            ly: ymax - ymin,
        }
    }

    pub fn xmin(&self) -> f64 {
        self.x0 - 0.5 * self.lx
    }
    pub fn xmax(&self) -> f64 {
        self.x0 + 0.5 * self.lx
    }
    pub fn ymin(&self) -> f64 {
        self.y0 - 0.5 * self.ly
    }
    pub fn ymax(&self) -> f64 {
        self.y0 + 0.5 * self.ly
    }
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }
}

/// What lies across an element face.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Neighbor {
    Element { elem: usize, face: usize },
    Boundary,
}

#[derive(Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub elements: Vec<[usize; 3]>,
    pub domain: Domain,
    /// Topological neighbors, face f joining local vertices f and (f+1)%3.
    pub neighbors: Vec<[Neighbor; 3]>,
    /// Faces treated as reflective walls even if they have a neighbor.
    pub wall_faces: Vec<(usize, usize)>,
    deformation: Option<Deformation>,
}

impl std::fmt::Debug for Mesh {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mesh")
            .field("vertices", &self.vertices.len())
            .field("elements", &self.elements.len())
            .field("domain", &self.domain)
            .field("wall_faces", &self.wall_faces.len())
            .field("curved", &self.deformation.is_some())
            .finish()
    }
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl Mesh {
    /// Builds a mesh and its face adjacency. Elements must be counterclockwise.
    pub fn new(vertices: Vec<[f64; 2]>, elements: Vec<[usize; 3]>) -> Result<Mesh> {
        if elements.is_empty() {
            return Err(Error::DegenerateMesh("no elements".into()));
        }
        let mut xmin = f64::INFINITY;
        let mut xmax = f64::NEG_INFINITY;
        let mut ymin = f64::INFINITY;
        let mut ymax = f64::NEG_INFINITY;
        for v in &vertices {
            xmin = xmin.min(v[0]);
            xmax = xmax.max(v[0]);
            ymin = ymin.min(v[1]);
            ymax = ymax.max(v[1]);
        }
        for (k, e) in elements.iter().enumerate() {
            if e.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::DegenerateMesh(format!(
                    "element {k} references a missing vertex"
                )));
            }
            let a = signed_area(vertices[e[0]], vertices[e[1]], vertices[e[2]]);
            if !(a > 0.0) {
                return Err(Error::DegenerateMesh(format!(
                    "element {k} is not counterclockwise (signed area {a:.3e})"
                )));
            }
        }
        let mut neighbors = vec![[Neighbor::Boundary; 3]; elements.len()];
        let mut open: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (k, e) in elements.iter().enumerate() {
            for f in 0..3 {
                let (a, b) = (e[f], e[(f + 1) % 3]);
                let key = (a.min(b), a.max(b));
                if let Some((k2, f2)) = open.remove(&key) {
                    neighbors[k][f] = Neighbor::Element { elem: k2, face: f2 };
                    neighbors[k2][f2] = Neighbor::Element { elem: k, face: f };
                } else {
                    open.insert(key, (k, f));
                }
            }
        }
        Ok(Mesh {
            vertices,
            elements,
            domain: Domain::from_bounds(xmin, xmax, ymin, ymax),
            neighbors,
            wall_faces: Vec::new(),
            deformation: None,
        })
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn is_curved(&self) -> bool {
        self.deformation.is_some()
    }

    pub fn element_vertices(&self, k: usize) -> [[f64; 2]; 3] {
        let e = self.elements[k];
        [
            self.vertices[e[0]],
            self.vertices[e[1]],
            self.vertices[e[2]],
        ]
    }

    /// Straight-sided image of a reference point.
    pub fn affine_point(&self, k: usize, r: [f64; 2]) -> [f64; 2] {
        let [a, b, c] = self.element_vertices(k);
        let (la, lb, lc) = (-0.5 * (r[0] + r[1]), 0.5 * (1.0 + r[0]), 0.5 * (1.0 + r[1]));
        [
            la * a[0] + lb * b[0] + lc * c[0],
            la * a[1] + lb * b[1] + lc * c[1],
        ]
    }

    /// Applies the deformation (identity on straight meshes).
    pub fn deform(&self, p: [f64; 2]) -> [f64; 2] {
        match &self.deformation {
            Some(d) => d(p),
            None => p,
        }
    }

    /// Physical positions of the degree-n equispaced mapping nodes of element k.
    pub fn mapping_nodes(&self, k: usize, n: usize) -> Vec<[f64; 2]> {
        equispaced_nodes(n)
            .into_iter()
            .map(|r| self.deform(self.affine_point(k, r)))
            .collect()
    }

    /// Composes a further deformation on top of the current one.
    pub fn with_deformation(&self, d: Deformation) -> Mesh {
        let mut out = self.clone();
        out.deformation = Some(match self.deformation.clone() {
            Some(prev) => Arc::new(move |p| d(prev(p))),
            None => d,
        });
        out
    }

    /// Shortest edge between deformed vertices.
    pub fn min_edge_length(&self) -> f64 {
        let mut h = f64::INFINITY;
        for e in &self.elements {
            for f in 0..3 {
                let a = self.deform(self.vertices[e[f]]);
                let b = self.deform(self.vertices[e[(f + 1) % 3]]);
                h = h.min(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        h
    }

    pub fn affine_areas(&self) -> Vec<f64> {
        self.elements
            .iter()
            .map(|e| {
                signed_area(
                    self.vertices[e[0]],
                    self.vertices[e[1]],
                    self.vertices[e[2]],
                )
            })
            .collect()
    }

    /// Straight-sided centroid.
    pub fn centroid(&self, k: usize) -> [f64; 2] {
        let [a, b, c] = self.element_vertices(k);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Checks the deformation's Jacobian at a lattice of points in every
    /// element by central differences.
    fn check_deformation(&self) -> Result<()> {
        let lattice = equispaced_nodes(4);
        for k in 0..self.num_elements() {
            let [a, b, c] = self.element_vertices(k);
            let scale = ((b[0] - a[0]).abs()
                + (c[1] - a[1]).abs()
                + (b[1] - a[1]).abs()
                + (c[0] - a[0]).abs())
                * 1e-6;
            for r in &lattice {
                let p = self.affine_point(k, *r);
                let dx = |q: [f64; 2]| self.deform(q);
                let px = dx([p[0] + scale, p[1]]);
                let mx = dx([p[0] - scale, p[1]]);
                let py = dx([p[0], p[1] + scale]);
                let my = dx([p[0], p[1] - scale]);
                let j = ((px[0] - mx[0]) * (py[1] - my[1]) - (py[0] - my[0]) * (px[1] - mx[1]))
                    / (4.0 * scale * scale);
                if !(j > 0.0) {
                    return Err(Error::NonPositiveJacobian {
                        element: k,
                        value: j,
                    });
                }
            }
        }
        Ok(())
    }
}

/// `nx * ny` rectangles on a tensor grid, each split along its rising diagonal.
pub fn tensor_tri_mesh(xs: &[f64], ys: &[f64]) -> Result<Mesh> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(Error::DegenerateMesh(
            "need at least one cell per direction".into(),
        ));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) || ys.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::DegenerateMesh(
            "grid lines must be strictly increasing".into(),
        ));
    }
    let nx = xs.len() - 1;
    let ny = ys.len() - 1;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for y in ys {
        for x in xs {
            vertices.push([*x, *y]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            elements.push([a, b, c]);
            elements.push([a, c, d]);
        }
    }
    Mesh::new(vertices, elements)
}

/// Uniform `nx x ny` grid of split rectangles covering `domain`; K = 2 nx ny.
pub fn uniform_tri_mesh(nx: usize, ny: usize, domain: Domain) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::DegenerateMesh(format!("nx={nx}, ny={ny}")));
    }
    if !(domain.lx > 0.0 && domain.ly > 0.0) {
        return Err(Error::DegenerateMesh(format!(
            "domain extents {} x {}",
            domain.lx, domain.ly
        )));
    }
    let line = |lo: f64, len: f64, n: usize| -> Vec<f64> {
        (0..=n).map(|i| lo + len * i as f64 / n as f64).collect()
    };
    tensor_tri_mesh(
        &line(domain.xmin(), domain.lx, nx),
        &line(domain.ymin(), domain.ly, ny),
    )
}

/// The smooth warp used for curved test meshes.
pub fn warp_point(p: [f64; 2], c: f64, d: &Domain) -> [f64; 2] {
    use std::f64::consts::PI;
    let x = p[0]
        + c * d.lx * (PI * (p[0] - d.x0) / d.lx).cos() * (1.5 * PI * (p[1] - d.y0) / d.ly).cos();
    let y =
        p[1] + c * d.ly * (2.0 * PI * (x - d.x0) / d.lx).sin() * (PI * (p[1] - d.y0) / d.ly).cos();
    [x, y]
}

/// Curves the mesh with [`warp_point`]; `c = 0` leaves it straight.
pub fn warp_mesh(mesh: &Mesh, c: f64) -> Result<Mesh> {
    if c == 0.0 {
        return Ok(mesh.clone());
    }
    let d = mesh.domain;
    let out = mesh.with_deformation(Arc::new(move |p| warp_point(p, c, &d)));
    out.check_deformation()?;
    Ok(out)
}

/// Bends the grid line `x = x_line` onto the curve `x = q(y)`. The
/// displacement `q(y) - x_line` is blended linearly to zero at distance `band`.
/// Faces on the line become curved; no element may straddle the line or the
/// band edges, which keeps the mapping polynomial inside every element.
pub fn fit_curve_boundary(
    mesh: &Mesh,
    q: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    x_line: f64,
    band: f64,
) -> Result<Mesh> {
    if !(band > 0.0) {
        return Err(Error::DegenerateMesh(format!(
            "band {band} must be positive"
        )));
    }
    let tol = 1e-12 * (1.0 + band);
    for (k, e) in mesh.elements.iter().enumerate() {
        for cut in [x_line - band, x_line, x_line + band] {
            let side: Vec<f64> = e.iter().map(|&v| mesh.vertices[v][0] - cut).collect();
            let lo = side.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = side.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if lo < -tol && hi > tol {
                return Err(Error::DegenerateMesh(format!(
                    "element {k} straddles x = {cut}; align the grid with the curve"
                )));
            }
        }
    }
    let d: Deformation = Arc::new(move |p: [f64; 2]| {
        let w = (1.0 - (p[0] - x_line).abs() / band).max(0.0);
        [p[0] + (q(p[1]) - x_line) * w, p[1]]
    });
    let out = mesh.with_deformation(d);
    out.check_deformation()?;
    Ok(out)
}

/// Marks faces whose straight vertices lie on `x = x_line` and whose midpoint
/// satisfies `keep(y_mid)` as walls on both sides.
pub fn tag_line_walls(mesh: &mut Mesh, x_line: f64, keep: impl Fn(f64) -> bool) {
    let tol = 1e-12 * (1.0 + mesh.domain.lx);
    for k in 0..mesh.num_elements() {
        let e = mesh.elements[k];
        for f in 0..3 {
            let a = mesh.vertices[e[f]];
            let b = mesh.vertices[e[(f + 1) % 3]];
            if (a[0] - x_line).abs() < tol
                && (b[0] - x_line).abs() < tol
                && keep(0.5 * (a[1] + b[1]))
            {
                mesh.wall_faces.push((k, f));
            }
        }
    }
}

/// The dam-break grid: 20 columns on [-10, 10]; rows graded so that y = -0.5,
/// 0, 0.5 are grid lines. The dam line x = 0 is bent onto x = y^2/25 and its
/// faces with |y| > 0.5 are walls.
pub fn dam_break_mesh() -> Result<Mesh> {
    let xs: Vec<f64> = (0..=20).map(|i| -10.0 + i as f64).collect();
    let mut ys: Vec<f64> = (0..=9).map(|i| -10.0 + 9.5 * i as f64 / 9.0).collect();
    ys.push(0.0);
    ys.extend((0..=9).map(|i| 0.5 + 9.5 * i as f64 / 9.0));
    let base = tensor_tri_mesh(&xs, &ys)?;
    let mut mesh = fit_curve_boundary(&base, Arc::new(|y: f64| y * y / 25.0), 0.0, 10.0)?;
    tag_line_walls(&mut mesh, 0.0, |y| y.abs() > 0.5);
    Ok(mesh)
}

/// Reads the text format: `nv ne`, `nv` lines `x y`, `ne` lines `v0 v1 v2`,
/// then optional `wallface e f` lines.
pub fn read_mesh(text: &str) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let err = |line: usize, msg: &str| Error::MeshFormat {
        line,
        msg: msg.to_string(),
    };
    let (hl, header) = lines.next().ok_or_else(|| err(1, "empty mesh file"))?;
    let counts: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| err(hl, "header must be `nv ne`"))?;
    if counts.len() != 2 {
        return Err(err(hl, "header must be `nv ne`"));
    }
    let mut vertices = Vec::with_capacity(counts[0]);
    let mut elements = Vec::with_capacity(counts[1]);
    for _ in 0..counts[0] {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| err(hl, "missing vertex lines"))?;
        let v: Vec<f64> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err(ln, "vertex line must be `x y`"))?;
        if v.len() != 2 {
            return Err(err(ln, "vertex line must be `x y`"));
        }
        vertices.push([v[0], v[1]]);
    }
    for _ in 0..counts[1] {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| err(hl, "missing element lines"))?;
        let v: Vec<usize> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err(ln, "element line must be `v0 v1 v2`"))?;
        if v.len() != 3 {
            return Err(err(ln, "element line must be `v0 v1 v2`"));
        }
        elements.push([v[0], v[1], v[2]]);
    }
    let mut walls = Vec::new();
    for (ln, l) in lines {
        let mut it = l.split_whitespace();
        if it.next() != Some("wallface") {
            return Err(err(ln, "expected `wallface e f`"));
        }
        let ef: Vec<usize> = it
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err(ln, "expected `wallface e f`"))?;
        if ef.len() != 2 || ef[0] >= elements.len() || ef[1] > 2 {
            return Err(err(ln, "wallface index out of range"));
        }
        walls.push((ef[0], ef[1]));
    }
    let mut mesh = Mesh::new(vertices, elements)?;
    mesh.wall_faces = walls;
    Ok(mesh)
}

/// Writes the straight-sided mesh in the format read by [`read_mesh`].
pub fn write_mesh(mesh: &Mesh) -> String {
    let mut s = format!("{} {}\n", mesh.vertices.len(), mesh.elements.len());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{:e} {:e}", v[0], v[1]);
    }
    for e in &mesh.elements {
        let _ = writeln!(s, "{} {} {}", e[0], e[1], e[2]);
    }
    for (k, f) in &mesh.wall_faces {
        let _ = writeln!(s, "wallface {k} {f}");
    }
    s
}

/// Periodic directions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Periodicity {
    pub x: bool,
    pub y: bool,
}

impl Periodicity {
    pub const NONE: Periodicity = Periodicity { x: false, y: false };
    pub const XY: Periodicity = Periodicity { x: true, y: true };
}

impl std::str::FromStr for Periodicity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xy" | "both" => Ok(Periodicity::XY),
            "x" => Ok(Periodicity { x: true, y: false }),
            "y" => Ok(Periodicity { x: false, y: true }),
            "none" => Ok(Periodicity::NONE),
            _ => Err(Error::Config(format!(
                "periodic must be xy|x|y|none, got `{s}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceKind {
    Interior,
    Periodic,
    Wall,
}

/// Exterior-trace gather maps.
#[derive(Clone, Debug)]
pub struct FaceMatch {
    /// Points per face.
    pub nfp: usize,
    pub kinds: Vec<[FaceKind; 3]>,
    /// For surface point `i` of element `k`, `ext[k * 3 nfp + i]` is the flat
    /// index of the coincident exterior point; walls point to themselves.
    pub ext: Vec<usize>,
}

impl FaceMatch {
    pub fn num_walls(&self) -> usize {
        self.kinds
            .iter()
            .flatten()
            .filter(|k| **k == FaceKind::Wall)
            .count()
    }

    #[inline]
    pub fn is_wall(&self, k: usize, i: usize) -> bool {
        self.kinds[k][i / self.nfp] == FaceKind::Wall
    }
}

/// Classifies every face and builds gather maps for a face rule whose 1D
/// nodes are symmetric about 0. Matched points are checked against `geom`.
pub fn connect(mesh: &Mesh, periodic: Periodicity, geom: &Geometry) -> Result<FaceMatch> {
    let nfp = geom.nfp;
    let nf = 3 * nfp;
    let kn = mesh.num_elements();
    let mut kinds = vec![[FaceKind::Interior; 3]; kn];
    let mut partner: Vec<[Option<(usize, usize)>; 3]> = vec![[None; 3]; kn];
    for k in 0..kn {
        for f in 0..3 {
            if let Neighbor::Element { elem, face } = mesh.neighbors[k][f] {
                partner[k][f] = Some((elem, face));
            }
        }
    }
    for &(k, f) in &mesh.wall_faces {
        kinds[k][f] = FaceKind::Wall;
    }
    let d = mesh.domain;
    let tol = 1e-9 * (d.lx + d.ly);
    let on = |a: f64, b: f64| (a - b).abs() < tol;
    let mut boundary = Vec::new();
    for k in 0..kn {
        for f in 0..3 {
            if partner[k][f].is_none() {
                let e = mesh.elements[k];
                boundary.push((k, f, mesh.vertices[e[f]], mesh.vertices[e[(f + 1) % 3]]));
            }
        }
    }
    for &(k, f, a, b) in &boundary {
        let shift = if periodic.x && on(a[0], d.xmin()) && on(b[0], d.xmin()) {
            Some([d.lx, 0.0])
        } else if periodic.x && on(a[0], d.xmax()) && on(b[0], d.xmax()) {
            Some([-d.lx, 0.0])
        } else if periodic.y && on(a[1], d.ymin()) && on(b[1], d.ymin()) {
            Some([0.0, d.ly])
        } else if periodic.y && on(a[1], d.ymax()) && on(b[1], d.ymax()) {
            Some([0.0, -d.ly])
        } else {
            None
        };
        match shift {
            None => kinds[k][f] = FaceKind::Wall,
            Some(s) => {
                let (a2, b2) = ([a[0] + s[0], a[1] + s[1]], [b[0] + s[0], b[1] + s[1]]);
                let found = boundary.iter().find(|(_, _, c, dd)| {
                    on(c[0], b2[0]) && on(c[1], b2[1]) && on(dd[0], a2[0]) && on(dd[1], a2[1])
                });
                match found {
                    Some(&(k2, f2, _, _)) => {
                        partner[k][f] = Some((k2, f2));
                        kinds[k][f] = FaceKind::Periodic;
                    }
                    None => {
                        return Err(Error::UnmatchedFace {
                            element: k,
                            face: f,
                            kind: "periodic",
                        })
                    }
                }
            }
        }
    }
    let mut ext = vec![0usize; kn * nf];
    let ptol = 1e-10 * (1.0 + d.lx.max(d.ly));
    for k in 0..kn {
        for f in 0..3 {
            for i in 0..nfp {
                let me = k * nf + f * nfp + i;
                if kinds[k][f] == FaceKind::Wall {
                    ext[me] = me;
                    continue;
                }
                let (k2, f2) = partner[k][f].expect("non-wall face has a partner");
                let other = k2 * nf + f2 * nfp + (nfp - 1 - i);
                let p = geom.surf_xy(k, f * nfp + i);
                let q = geom.surf_xy(k2, f2 * nfp + (nfp - 1 - i));
                let mut dx = p[0] - q[0];
                let mut dy = p[1] - q[1];
                if kinds[k][f] == FaceKind::Periodic {
                    dx -= (dx / d.lx).round() * d.lx;
                    dy -= (dy / d.ly).round() * d.ly;
                }
                if dx.abs().max(dy.abs()) > ptol {
                    return Err(Error::UnmatchedFace {
                        element: k,
                        face: f,
                        kind: if kinds[k][f] == FaceKind::Periodic {
                            "periodic"
                        } else {
                            "interior"
                        },
                    });
                }
                ext[me] = other;
            }
        }
    }
    Ok(FaceMatch { nfp, kinds, ext })
}

/// Geometric factors at a set of volume points followed by a face rule.
///
/// `g` holds the Jacobian-scaled factors `[J dr/dx, J ds/dx, J dr/dy, J ds/dy]`,
/// i.e. `[y_s, -y_r, -x_s, x_r]`. Scaled normals are `nJ_i = sum_j G_ij n_j`
/// with unit reference normals, and `sJ = |nJ|` is the face Jacobian times the
/// reference face length ratio.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub k: usize,
    pub nvol: usize,
    pub nsurf: usize,
    pub nfp: usize,
    pub xy: Vec<[f64; 2]>,
    pub j: Vec<f64>,
    pub g: Vec<[f64; 4]>,
    pub nj: Vec<[f64; 2]>,
    pub sj: Vec<f64>,
    pub normal: Vec<[f64; 2]>,
}

impl Geometry {
    pub fn npts(&self) -> usize {
        self.nvol + self.nsurf
    }

    /// Volume then surface points of element k.
    pub fn pts(&self, k: usize) -> std::ops::Range<usize> {
        k * self.npts()..(k + 1) * self.npts()
    }

    pub fn surf_xy(&self, k: usize, i: usize) -> [f64; 2] {
        self.xy[k * self.npts() + self.nvol + i]
    }

    pub fn surf_range(&self, k: usize) -> std::ops::Range<usize> {
        k * self.nsurf..(k + 1) * self.nsurf
    }
}

/// Interpolation and derivative matrices from degree-n mapping nodes.
pub struct MapOps {
    pub interp: Mat,
    pub dr: Mat,
    pub ds: Mat,
}

pub fn map_ops(n: usize, points: &[[f64; 2]]) -> Result<MapOps> {
    let veq = basis_vandermonde(n, &equispaced_nodes(n));
    let vinv = veq.inverse()?;
    let (vr, vs) = grad_vandermonde(n, points);
    Ok(MapOps {
        interp: basis_vandermonde(n, points).matmul(&vinv),
        dr: vr.matmul(&vinv),
        ds: vs.matmul(&vinv),
    })
}

/// Evaluates the degree-n isoparametric map of every element at the given
/// volume points and face rule.
pub fn build_geometry(
    mesh: &Mesh,
    n: usize,
    vol_points: &[[f64; 2]],
    surf: &SurfaceQuadrature,
) -> Result<Geometry> {
    let mut pts = vol_points.to_vec();
    pts.extend_from_slice(&surf.points);
    let ops = map_ops(n, &pts)?;
    let nvol = vol_points.len();
    let nsurf = surf.len();
    let np = pts.len();
    let kn = mesh.num_elements();
    let per: Vec<_> = crate::par::map_range(kn, |k| {
        let nodes = mesh.mapping_nodes(k, n);
        let xs: Vec<f64> = nodes.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = nodes.iter().map(|p| p[1]).collect();
        let x = ops.interp.matvec(&xs);
        let y = ops.interp.matvec(&ys);
        let xr = ops.dr.matvec(&xs);
        let xs_ = ops.ds.matvec(&xs);
        let yr = ops.dr.matvec(&ys);
        let ys_ = ops.ds.matvec(&ys);
        let mut out = Vec::with_capacity(np);
        for i in 0..np {
            let j = xr[i] * ys_[i] - xs_[i] * yr[i];
            out.push(([x[i], y[i]], j, [ys_[i], -yr[i], -xs_[i], xr[i]]));
        }
        out
    });
    let mut geom = Geometry {
        k: kn,
        nvol,
        nsurf,
        nfp: surf.points_per_face(),
        xy: Vec::with_capacity(kn * np),
        j: Vec::with_capacity(kn * np),
        g: Vec::with_capacity(kn * np),
        nj: Vec::with_capacity(kn * nsurf),
        sj: Vec::with_capacity(kn * nsurf),
        normal: Vec::with_capacity(kn * nsurf),
    };
    for (k, rows) in per.into_iter().enumerate() {
        for (i, (xy, j, g)) in rows.into_iter().enumerate() {
            if !(j > 0.0) {
                return Err(Error::NonPositiveJacobian {
                    element: k,
                    value: j,
                });
            }
            geom.xy.push(xy);
            geom.j.push(j);
            geom.g.push(g);
            if i >= nvol {
                let nh = surf.normal(i - nvol);
                let nx = g[0] * nh[0] + g[1] * nh[1];
                let ny = g[2] * nh[0] + g[3] * nh[1];
                let s = nx.hypot(ny);
                geom.nj.push([nx, ny]);
                geom.sj.push(s);
                geom.normal.push([nx / s, ny / s]);
            }
        }
    }
    Ok(geom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{surface_rule, volume_rule};

    fn square() -> Domain {
        Domain::from_bounds(-1.0, 1.0, -1.0, 1.0)
    }

    fn geometry(mesh: &Mesh, n: usize) -> Geometry {
        build_geometry(
            mesh,
            n,
            &volume_rule(n).unwrap().points,
            &surface_rule(n).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn single_cell_and_area() {
        let m = uniform_tri_mesh(1, 1, square()).unwrap();
        assert_eq!(m.num_elements(), 2);
        assert!((m.affine_areas().iter().sum::<f64>() - 4.0).abs() < 1e-15);
        let m = uniform_tri_mesh(8, 8, square()).unwrap();
        assert_eq!(m.num_elements(), 128);
        assert!((m.affine_areas().iter().sum::<f64>() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn adjacency_is_mutual() {
        let m = uniform_tri_mesh(5, 3, square()).unwrap();
        let mut boundary = 0;
        for k in 0..m.num_elements() {
            for f in 0..3 {
                match m.neighbors[k][f] {
                    Neighbor::Element { elem, face } => {
                        assert_eq!(
                            m.neighbors[elem][face],
                            Neighbor::Element { elem: k, face: f }
                        )
                    }
                    Neighbor::Boundary => boundary += 1,
                }
            }
        }
        assert_eq!(boundary, 2 * (5 + 3));
    }

    #[test]
    fn degenerate_input_is_rejected() {
        assert!(uniform_tri_mesh(0, 3, square()).is_err());
        assert!(uniform_tri_mesh(2, 2, Domain::from_bounds(0.0, 0.0, 0.0, 1.0)).is_err());
        assert!(Mesh::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]], vec![[0, 1, 2]]).is_err());
    }

    #[test]
    fn affine_jacobian_value() {
        let h = 0.5;
        let m = Mesh::new(vec![[0.0, 0.0], [h, 0.0], [0.0, h]], vec![[0, 1, 2]]).unwrap();
        let g = geometry(&m, 3);
        for j in &g.j {
            assert!((j - h * h / 4.0).abs() < 1e-15);
        }
        for n in &g.normal {
            assert!((n[0] * n[0] + n[1] * n[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_normals_are_axis_aligned() {
        let m = uniform_tri_mesh(3, 3, square()).unwrap();
        let g = geometry(&m, 2);
        let fm = connect(&m, Periodicity::NONE, &g).unwrap();
        for k in 0..m.num_elements() {
            for i in 0..g.nsurf {
                if fm.is_wall(k, i) {
                    let n = g.normal[k * g.nsurf + i];
                    assert!((n[0].abs() - 1.0).abs() < 1e-14 || (n[1].abs() - 1.0).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn periodic_mesh_has_no_walls_and_matches() {
        let m = uniform_tri_mesh(4, 3, square()).unwrap();
        let g = geometry(&m, 3);
        let fm = connect(&m, Periodicity::XY, &g).unwrap();
        assert_eq!(fm.num_walls(), 0);
        let fm = connect(&m, Periodicity { x: true, y: false }, &g).unwrap();
        assert_eq!(fm.num_walls(), 2 * 4);
    }

    #[test]
    fn warp_zero_is_identity() {
        let m = uniform_tri_mesh(4, 4, square()).unwrap();
        let w = warp_mesh(&m, 0.0).unwrap();
        assert_eq!(w.deform([0.3, 0.1]), [0.3, 0.1]);
    }

    #[test]
    fn warp_is_periodic_compatible() {
        let d = square();
        for t in [-0.8, -0.3, 0.0, 0.45, 0.9] {
            let l = warp_point([d.xmin(), t], 0.1, &d);
            let r = warp_point([d.xmax(), t], 0.1, &d);
            assert!((r[0] - l[0] - d.lx).abs() < 1e-14 && (r[1] - l[1]).abs() < 1e-14);
            let b = warp_point([t, d.ymin()], 0.1, &d);
            let top = warp_point([t, d.ymax()], 0.1, &d);
            assert!((top[1] - b[1] - d.ly).abs() < 1e-14 && (top[0] - b[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn warped_meshes_stay_valid() {
        for nx in [4, 8] {
            let m = warp_mesh(&uniform_tri_mesh(nx, nx, square()).unwrap(), 0.1).unwrap();
            for n in 1..=4 {
                let g = geometry(&m, n);
                let fm = connect(&m, Periodicity::XY, &g).unwrap();
                let w = &surface_rule(n).unwrap().weights;
                // weighted scaled normals cancel at matched points
                for k in 0..m.num_elements() {
                    for i in 0..g.nsurf {
                        let o = fm.ext[k * g.nsurf + i];
                        let a = g.nj[k * g.nsurf + i];
                        let b = g.nj[o];
                        let (wa, wb) = (w[i], w[o % g.nsurf]);
                        assert!(
                            (wa * a[0] + wb * b[0]).abs() < 1e-10
                                && (wa * a[1] + wb * b[1]).abs() < 1e-10
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn strong_warp_is_rejected() {
        let m = uniform_tri_mesh(4, 4, square()).unwrap();
        let err = warp_mesh(&m, 2.0).unwrap_err();
        assert!(matches!(err, Error::NonPositiveJacobian { .. }));
    }

    #[test]
    fn closed_surface_normal_sum_vanishes() {
        let m = warp_mesh(&uniform_tri_mesh(4, 4, square()).unwrap(), 0.1).unwrap();
        let n = 3;
        let surf = surface_rule(n).unwrap();
        let g = build_geometry(&m, n, &volume_rule(n).unwrap().points, &surf).unwrap();
        for k in 0..m.num_elements() {
            let mut s = [0.0; 2];
            for i in 0..g.nsurf {
                let nj = g.nj[k * g.nsurf + i];
                s[0] += surf.weights[i] * nj[0];
                s[1] += surf.weights[i] * nj[1];
            }
            assert!(s[0].abs() < 1e-10 && s[1].abs() < 1e-10);
        }
    }

    #[test]
    fn constant_curve_does_not_move_nodes() {
        let m = tensor_tri_mesh(&[-1.0, 0.0, 1.0], &[0.0, 1.0]).unwrap();
        let f = fit_curve_boundary(&m, Arc::new(|_| 0.0), 0.0, 1.0).unwrap();
        for k in 0..f.num_elements() {
            for (a, b) in f.mapping_nodes(k, 3).iter().zip(m.mapping_nodes(k, 3)) {
                assert!((a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dam_mesh_is_fitted_and_tagged() {
        let m = dam_break_mesh().unwrap();
        assert_eq!(m.num_elements(), 800);
        let n = 3;
        let surf = surface_rule(n).unwrap();
        let g = build_geometry(&m, n, &volume_rule(n).unwrap().points, &surf).unwrap();
        let fm = connect(&m, Periodicity::NONE, &g).unwrap();
        let outer = 4 * 20;
        assert_eq!(fm.num_walls(), outer + 2 * 18);
        for &(k, f) in &m.wall_faces {
            for i in 0..surf.points_per_face() {
                let p = g.surf_xy(k, f * surf.points_per_face() + i);
                assert!((p[0] - p[1] * p[1] / 25.0).abs() < 1e-12);
            }
        }
        let area: f64 = (0..m.num_elements())
            .map(|k| {
                let q = volume_rule(n).unwrap();
                (0..q.len())
                    .map(|i| q.weights[i] * g.j[k * g.npts() + i])
                    .sum::<f64>()
            })
            .sum();
        assert!((area - 400.0).abs() < 1e-10);
    }

    #[test]
    fn mesh_text_roundtrip() {
        let mut m = uniform_tri_mesh(2, 2, square()).unwrap();
        m.wall_faces.push((1, 2));
        let back = read_mesh(&write_mesh(&m)).unwrap();
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(back.elements, m.elements);
        assert_eq!(back.wall_faces, m.wall_faces);
        assert!(read_mesh("3 1\n0 0\n1 0\n").is_err());
        assert!(read_mesh("3 1\n0 0\n1 0\n0 1\n0 1 2\nwallface 0 7\n").is_err());
    }

    #[test]
    fn misaligned_curve_fit_is_rejected() {
        let m = uniform_tri_mesh(3, 2, square()).unwrap();
        assert!(fit_curve_boundary(&m, Arc::new(|y| 0.1 * y), 0.0, 1.0).is_err());
    }
}

//! Quadrature rules on the reference triangle with vertices (-1,-1), (1,-1), (-1,1).
//!
//! Three kinds of rules live here:
//!
//! * volume rules, used for mass matrices, projections and error norms;
//! * surface rules, one 1D Gauss rule mapped onto every face;
//! * boundary-inclusive SBP rules, tabulated data whose node set contains a
//!   full surface rule.
//!
//! Faces are numbered 0: (-1,-1)->(1,-1), 1: (1,-1)->(-1,1), 2: (-1,1)->(-1,-1).

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub const MIN_DEGREE: usize = 1;
pub const MAX_DEGREE: usize = 7;
/// Largest degree with a tabulated Gauss-Legendre-edge SBP rule.
pub const MAX_SBP_DEGREE: usize = 4;

/// Absolute tolerance used by [`verify_exactness`].
pub const EXACTNESS_TOL: f64 = 1e-12;

/// Area of the reference triangle.
pub const REF_AREA: f64 = 2.0;

/// Reference face lengths, indexed by face.
pub const FACE_LENGTHS: [f64; 3] = [2.0, 2.0 * std::f64::consts::SQRT_2, 2.0];

/// Outward unit normals of the reference faces.
pub const FACE_NORMALS: [[f64; 2]; 3] = [
    [0.0, -1.0],
    [
        std::f64::consts::FRAC_1_SQRT_2,
        std::f64::consts::FRAC_1_SQRT_2,
    ],
    [-1.0, 0.0],
];

/// Point on face `f` at 1D parameter `t` in [-1, 1].
pub fn face_point(f: usize, t: f64) -> [f64; 2] {
    match f {
        0 => [t, -1.0],
        1 => [-t, t],
        2 => [-1.0, -t],
        _ => panic!("reference triangle has three faces, got {f}"),
    }
}

/// A 2D rule on the reference triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadrature2D {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Declared polynomial exactness.
    pub degree: usize,
}

impl Quadrature2D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[0], p[1]))
            .sum()
    }
}

/// A face rule: the same 1D rule mapped onto each of the three faces.
///
/// `weights` already include the reference face Jacobian, so the weights of
/// face `f` sum to `FACE_LENGTHS[f]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceQuadrature {
    pub nodes_1d: Vec<f64>,
    pub weights_1d: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub face: Vec<usize>,
    pub degree: usize,
}

impl SurfaceQuadrature {
    fn from_1d(nodes: Vec<f64>, weights: Vec<f64>, degree: usize) -> Self {
        let mut points = Vec::with_capacity(3 * nodes.len());
        let mut w = Vec::with_capacity(3 * nodes.len());
        let mut face = Vec::with_capacity(3 * nodes.len());
        for f in 0..3 {
            for (t, wt) in nodes.iter().zip(&weights) {
                points.push(face_point(f, *t));
                w.push(wt * FACE_LENGTHS[f] / 2.0);
                face.push(f);
            }
        }
        SurfaceQuadrature {
            nodes_1d: nodes,
            weights_1d: weights,
            points,
            weights: w,
            face,
            degree,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points_per_face(&self) -> usize {
        self.nodes_1d.len()
    }

    /// Outward unit reference normal at surface point `i`.
    pub fn normal(&self, i: usize) -> [f64; 2] {
        FACE_NORMALS[self.face[i]]
    }
}

/// Edge node family of a boundary-inclusive rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeFamily {
    GaussLegendre,
    GaussLobatto,
}

impl fmt::Display for EdgeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeFamily::GaussLegendre => "legendre",
            EdgeFamily::GaussLobatto => "lobatto",
        })
    }
}

impl std::str::FromStr for EdgeFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "legendre" | "gauss-legendre" => Ok(EdgeFamily::GaussLegendre),
            "lobatto" | "gauss-lobatto" => Ok(EdgeFamily::GaussLobatto),
            _ => Err(Error::Config(format!("unknown edge family `{s}`"))),
        }
    }
}

/// A boundary-inclusive volume rule together with its embedded face rule.
#[derive(Clone, Debug, PartialEq)]
pub struct SbpQuadrature {
    pub degree: usize,
    pub volume: Quadrature2D,
    pub surface: SurfaceQuadrature,
    /// For every surface point, the index of the coincident volume node.
    pub face_nodes: Vec<usize>,
    pub family: EdgeFamily,
}

/// Gauss-Jacobi nodes and weights for the weight (1-x)^alpha (1+x)^beta,
/// computed from the eigen-decomposition of the Jacobi matrix.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let ab = alpha + beta;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let denom = (2.0 * kf + ab) * (2.0 * kf + ab + 2.0);
        jac[(k, k)] = if denom.abs() < 1e-300 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / denom
        };
        if k + 1 < n {
            let m = kf + 1.0;
            let num = m * (m + alpha) * (m + beta) * (m + ab);
            let den = (2.0 * m + ab - 1.0) * (2.0 * m + ab + 1.0);
            let b = 2.0 / (2.0 * m + ab) * (num / den).sqrt();
            jac[(k, k + 1)] = b;
            jac[(k + 1, k)] = b;
        }
    }
    let mu0 = 2f64.powf(ab + 1.0) * gamma(alpha + 1.0) * gamma(beta + 1.0) / gamma(ab + 2.0);
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Polish with Newton on the Jacobi polynomial and restore exact symmetry.
    let mut x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    for xi in x.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = jacobi_with_derivative(n, alpha, beta, *xi);
            if dp != 0.0 {
                *xi -= p / dp;
            }
        }
    }
    let mut w: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    if alpha == beta {
        for i in 0..n / 2 {
            let xs = 0.5 * (x[n - 1 - i] - x[i]);
            x[i] = -xs;
            x[n - 1 - i] = xs;
            let ws = 0.5 * (w[i] + w[n - 1 - i]);
            w[i] = ws;
            w[n - 1 - i] = ws;
        }
        if n % 2 == 1 {
            x[n / 2] = 0.0;
        }
    }
    (x, w)
}

/// Classical (unnormalized) Jacobi polynomial P_n^(a,b)(x) and its derivative.
fn jacobi_with_derivative(n: usize, a: f64, b: f64, x: f64) -> (f64, f64) {
    let p = |m: usize, a: f64, b: f64| -> f64 {
        if m == 0 {
            return 1.0;
        }
        let mut p0 = 1.0;
        let mut p1 = 0.5 * (a - b + (a + b + 2.0) * x);
        for k in 2..=m {
            let kf = k as f64;
            let c = 2.0 * kf + a + b;
            let a1 = 2.0 * kf * (kf + a + b) * (c - 2.0);
            let a2 = (c - 1.0) * (a * a - b * b);
            let a3 = (c - 2.0) * (c - 1.0) * c;
            let a4 = 2.0 * (kf + a - 1.0) * (kf + b - 1.0) * c;
            let p2 = ((a2 + a3 * x) * p1 - a4 * p0) / a1;
            p0 = p1;
            p1 = p2;
        }
        p1
    };
    let val = p(n, a, b);
    let der = if n == 0 {
        0.0
    } else {
        0.5 * (n as f64 + a + b + 1.0) * p(n - 1, a + 1.0, b + 1.0)
    };
    (val, der)
}

/// Lanczos approximation; only used for the small arguments of `mu0`.
pub(crate) fn gamma(x: f64) -> f64 {
    if x == x.floor() && x > 0.0 && x < 30.0 {
        return (1..x as u64).map(|k| k as f64).product();
    }
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_jacobi(n, 0.0, 0.0)
}

/// n-point Gauss-Lobatto-Legendre rule on [-1, 1], n >= 2.
pub fn gauss_lobatto(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut x = vec![-1.0];
    if n > 2 {
        x.extend(gauss_jacobi(n - 2, 1.0, 1.0).0);
    }
    x.push(1.0);
    let nm1 = n - 1;
    let w = x
        .iter()
        .map(|&xi| {
            let p = legendre(nm1, xi);
            2.0 / ((n * nm1) as f64 * p * p)
        })
        .collect();
    (x, w)
}

fn legendre(n: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return 1.0;
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Collapsed-coordinate product rule exact to `degree` with positive weights
/// and all nodes strictly inside the triangle.
pub fn triangle_rule(degree: usize) -> Quadrature2D {
    let n = degree / 2 + 1;
    let (a, wa) = gauss_jacobi(n, 0.0, 0.0);
    let (b, wb) = gauss_jacobi(n, 1.0, 0.0);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (bj, wbj) in b.iter().zip(&wb) {
        for (ai, wai) in a.iter().zip(&wa) {
            points.push([0.5 * (1.0 + ai) * (1.0 - bj) - 1.0, *bj]);
            weights.push(0.5 * wai * wbj);
        }
    }
    Quadrature2D {
        points,
        weights,
        degree,
    }
}

fn check_degree(n: usize, max: usize) -> Result<()> {
    if (MIN_DEGREE..=max).contains(&n) {
        Ok(())
    } else {
        Err(Error::DegreeOutOfRange {
            degree: n,
            min: MIN_DEGREE,
            max,
        })
    }
}

/// Volume rule for a degree-`n` approximation: exact to degree 2n, which keeps
/// the quadrature mass matrix equal to the exact one.
pub fn volume_rule(n: usize) -> Result<Quadrature2D> {
    check_degree(n, MAX_DEGREE)?;
    Ok(triangle_rule(2 * n))
}

/// (n+1)-point Gauss rule on each face, exact to degree 2n+1.
pub fn surface_rule(n: usize) -> Result<SurfaceQuadrature> {
    check_degree(n, MAX_DEGREE)?;
    let (x, w) = gauss_legendre(n + 1);
    Ok(SurfaceQuadrature::from_1d(x, w, 2 * n + 1))
}

fn face_rule_for(family: EdgeFamily, points_per_face: usize) -> SurfaceQuadrature {
    match family {
        EdgeFamily::GaussLegendre => {
            let (x, w) = gauss_legendre(points_per_face);
            SurfaceQuadrature::from_1d(x, w, 2 * points_per_face - 1)
        }
        EdgeFamily::GaussLobatto => {
            let (x, w) = gauss_lobatto(points_per_face);
            SurfaceQuadrature::from_1d(x, w, 2 * points_per_face - 3)
        }
    }
}

const SBP_LEGENDRE: [&str; MAX_SBP_DEGREE] = [
    include_str!("../data/sbp_legendre_n1.txt"),
    include_str!("../data/sbp_legendre_n2.txt"),
    include_str!("../data/sbp_legendre_n3.txt"),
    include_str!("../data/sbp_legendre_n4.txt"),
];

/// Environment variable naming a directory with `sbp_lobatto_n<N>.txt` tables.
pub const SBP_DATA_DIR_ENV: &str = "SWE_ESDG_SBP_DIR";

/// Tabulated boundary-inclusive rule for degree `n`.
///
/// Gauss-Legendre-edge rules are embedded. Gauss-Lobatto-edge rules are read
/// from `$SWE_ESDG_SBP_DIR/sbp_lobatto_n<N>.txt` when that file exists.
pub fn sbp_rule(n: usize, family: EdgeFamily) -> Result<SbpQuadrature> {
    let unavailable = || Error::SbpRuleUnavailable {
        degree: n,
        family: family.to_string(),
    };
    if !(MIN_DEGREE..=MAX_SBP_DEGREE).contains(&n) && family == EdgeFamily::GaussLegendre {
        return Err(unavailable());
    }
    match family {
        EdgeFamily::GaussLegendre => parse_sbp_rule(SBP_LEGENDRE[n - 1], n, family),
        EdgeFamily::GaussLobatto => {
            let dir = std::env::var_os(SBP_DATA_DIR_ENV).ok_or_else(unavailable)?;
            let path = Path::new(&dir).join(format!("sbp_lobatto_n{n}.txt"));
            if !path.is_file() {
                return Err(unavailable());
            }
            load_sbp_rule(&path, n, family)
        }
    }
}

/// Reads a rule data file and verifies it for degree `n`.
pub fn load_sbp_rule(path: &Path, n: usize, family: EdgeFamily) -> Result<SbpQuadrature> {
    let text = std::fs::read_to_string(path)?;
    parse_sbp_rule(&text, n, family)
}

/// Parsed but unverified rule data.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleData {
    pub degree: usize,
    pub faces: Vec<Vec<usize>>,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

/// Parses the `degree=<d> faces=<i,j,..;..;..>` header followed by `x y w` lines.
pub fn parse_rule_text(text: &str) -> Result<RuleData> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or(Error::RuleParse {
        line: 1,
        msg: "empty rule file".into(),
    })?;
    let perr = |line: usize, msg: String| Error::RuleParse { line, msg };
    let mut degree = None;
    let mut faces = None;
    for tok in header.split_whitespace() {
        if let Some(d) = tok.strip_prefix("degree=") {
            degree = Some(
                d.parse::<usize>()
                    .map_err(|e| perr(hline, format!("bad degree: {e}")))?,
            );
        } else if let Some(f) = tok.strip_prefix("faces=") {
            let lists = f
                .split(';')
                .map(|list| {
                    list.split(',')
                        .map(|s| s.trim().parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                })
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| perr(hline, format!("bad face list: {e}")))?;
            faces = Some(lists);
        } else {
            return Err(perr(hline, format!("unknown header token `{tok}`")));
        }
    }
    let degree = degree.ok_or_else(|| perr(hline, "missing degree=".into()))?;
    let faces = faces.ok_or_else(|| perr(hline, "missing faces=".into()))?;
    if faces.len() != 3 {
        return Err(perr(
            hline,
            format!("expected 3 face lists, got {}", faces.len()),
        ));
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (ln, line) in lines {
        let vals = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| perr(ln, e.to_string()))?;
        if vals.len() != 3 {
            return Err(perr(
                ln,
                format!("expected `x y w`, got {} values", vals.len()),
            ));
        }
        points.push([vals[0], vals[1]]);
        weights.push(vals[2]);
    }
    for list in &faces {
        if let Some(&bad) = list.iter().find(|&&i| i >= points.len()) {
            return Err(perr(hline, format!("face node index {bad} out of range")));
        }
    }
    Ok(RuleData {
        degree,
        faces,
        points,
        weights,
    })
}

/// Serializes a rule in the text format read by [`parse_rule_text`].
/// Values are written in shortest round-trip form, so parsing is bit-exact.
pub fn format_rule_text(rule: &SbpQuadrature) -> String {
    let per_face = rule.surface.points_per_face();
    let faces: Vec<String> = (0..3)
        .map(|f| {
            rule.face_nodes[f * per_face..(f + 1) * per_face]
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    let mut out = format!("degree={} faces={}\n", rule.volume.degree, faces.join(";"));
    for (p, w) in rule.volume.points.iter().zip(&rule.volume.weights) {
        out.push_str(&format!("{:e} {:e} {:e}\n", p[0], p[1], w));
    }
    out
}

/// Builds and verifies an SBP rule from rule text.
pub fn parse_sbp_rule(text: &str, n: usize, family: EdgeFamily) -> Result<SbpQuadrature> {
    let data = parse_rule_text(text)?;
    let per_face = data.faces[0].len();
    if data.faces.iter().any(|f| f.len() != per_face) {
        return Err(Error::SelectionMismatch(
            "faces carry different numbers of nodes".into(),
        ));
    }
    let surface = face_rule_for(family, per_face);
    let volume = Quadrature2D {
        points: data.points,
        weights: data.weights,
        degree: data.degree,
    };
    let face_nodes: Vec<usize> = data.faces.concat();
    let rule = SbpQuadrature {
        degree: n,
        volume,
        surface,
        face_nodes,
        family,
    };
    verify_sbp_rule(&rule)?;
    Ok(rule)
}

/// Checks every invariant of a boundary-inclusive rule.
pub fn verify_sbp_rule(rule: &SbpQuadrature) -> Result<()> {
    let n = rule.degree;
    if let Some(w) = rule.volume.weights.iter().find(|w| **w <= 0.0) {
        return Err(Error::Exactness {
            what: format!("non-positive SBP weight {w}"),
            max_error: w.abs(),
        });
    }
    if rule.volume.degree + 1 < 2 * n {
        return Err(Error::Exactness {
            what: format!("declared degree {} below 2N-1", rule.volume.degree),
            max_error: f64::NAN,
        });
    }
    let vol = verify_exactness(&rule.volume, 2 * n - 1);
    if !vol.pass {
        return Err(Error::Exactness {
            what: format!("SBP volume rule at degree {}", 2 * n - 1),
            max_error: vol.max_error,
        });
    }
    let surf = verify_surface_exactness(&rule.surface, 2 * n);
    if !surf.pass {
        return Err(Error::Exactness {
            what: format!("SBP surface rule at degree {}", 2 * n),
            max_error: surf.max_error,
        });
    }
    if rule.face_nodes.len() != rule.surface.len() {
        return Err(Error::SelectionMismatch(format!(
            "{} face nodes for {} surface points",
            rule.face_nodes.len(),
            rule.surface.len()
        )));
    }
    for (i, &vi) in rule.face_nodes.iter().enumerate() {
        let p = rule.surface.points[i];
        let q = rule.volume.points[vi];
        let d = (p[0] - q[0]).abs().max((p[1] - q[1]).abs());
        if d > 1e-12 {
            return Err(Error::SelectionMismatch(format!(
                "surface point {i} is {d:.3e} away from volume node {vi}"
            )));
        }
    }
    Ok(())
}

/// Exact integral of x^i y^j over the reference triangle.
pub fn monomial_integral(i: usize, j: usize) -> f64 {
    // Integrate x first on [-1, -y], then y on [-1, 1].
    let m = |k: usize| {
        if k.is_multiple_of(2) {
            2.0 / (k as f64 + 1.0)
        } else {
            0.0
        }
    };
    let sign = if (i + 1).is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * (m(i + j + 1) - m(j)) / (i as f64 + 1.0)
}

/// Per-monomial errors of a rule.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactnessReport {
    pub degree: usize,
    /// `((i, j), |error|)` for every x^i y^j with i + j <= degree; for surface
    /// rules `i` is the face and `j` the power of the face parameter.
    pub errors: Vec<((usize, usize), f64)>,
    pub max_error: f64,
    pub pass: bool,
}

impl ExactnessReport {
    fn from_errors(degree: usize, errors: Vec<((usize, usize), f64)>) -> Self {
        let max_error = errors.iter().fold(0.0f64, |m, e| m.max(e.1));
        ExactnessReport {
            degree,
            errors,
            max_error,
            pass: max_error <= EXACTNESS_TOL,
        }
    }
}

/// Compares the rule against exact monomial integrals for all i + j <= degree.
pub fn verify_exactness(rule: &Quadrature2D, degree: usize) -> ExactnessReport {
    let mut errors = Vec::new();
    for total in 0..=degree {
        for i in 0..=total {
            let j = total - i;
            let approx = rule.integrate(|x, y| x.powi(i as i32) * y.powi(j as i32));
            errors.push(((i, j), (approx - monomial_integral(i, j)).abs()));
        }
    }
    ExactnessReport::from_errors(degree, errors)
}

/// Checks each face as a 1D rule: integrates t^k along the face parameter and
/// compares with (length / 2) * int_{-1}^{1} t^k dt.
pub fn verify_surface_exactness(rule: &SurfaceQuadrature, degree: usize) -> ExactnessReport {
    let per_face = rule.points_per_face();
    let mut errors = Vec::new();
    for f in 0..3 {
        for k in 0..=degree {
            let approx: f64 = (0..per_face)
                .map(|i| rule.weights[f * per_face + i] * rule.nodes_1d[i].powi(k as i32))
                .sum();
            let exact = if k % 2 == 0 {
                FACE_LENGTHS[f] / 2.0 * 2.0 / (k as f64 + 1.0)
            } else {
                0.0
            };
            errors.push(((f, k), (approx - exact).abs()));
        }
    }
    ExactnessReport::from_errors(degree, errors)
}

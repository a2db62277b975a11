//! Test problems, error norms, invariant tracking and output writers.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{
    build_geometry, dam_break_mesh, uniform_tri_mesh, warp_mesh, Domain, Mesh, Periodicity,
};
use crate::par;
use crate::quadrature::{surface_rule, triangle_rule};
use crate::refelem::{basis_vandermonde, equispaced_index, equispaced_nodes};
use crate::solver::{compute_dt, run, Discretization, Penalty, Scheme, State};
use crate::swe::{self, Cons};

/// Parameters of the translating vortex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VortexParams {
    pub h_inf: f64,
    pub beta: f64,
    pub g: f64,
    pub u_inf: f64,
    pub v_inf: f64,
    pub xc: f64,
    pub yc: f64,
}

impl Default for VortexParams {
    fn default() -> Self {
        VortexParams {
            h_inf: 1.0,
            beta: 5.0,
            g: 2.0,
            u_inf: 1.0,
            v_inf: 0.0,
            xc: 0.0,
            yc: 0.0,
        }
    }
}

/// Exact vortex solution `(h, u, v)`.
pub fn vortex_exact(p: &VortexParams, x: f64, y: f64, t: f64) -> Result<[f64; 3]> {
    let xt = x - p.xc - p.u_inf * t;
    let yt = y - p.yc - p.v_inf * t;
    // velocity decays with exp(1 - r^2) and the height with its square,
    // which is what balances the centrifugal term when g = 2
    let e = (1.0 - xt * xt - yt * yt).exp();
    let h = p.h_inf - p.beta * p.beta / (32.0 * PI * PI) * e * e;
    if !(h > 0.0) {
        return Err(Error::NonPositiveHeight { h });
    }
    let a = p.beta / (2.0 * PI) * e;
    Ok([h, p.u_inf - a * yt, p.v_inf + a * xt])
}

/// Conservative form of [`vortex_exact`].
pub fn vortex_cons(p: &VortexParams, x: f64, y: f64, t: f64) -> Result<Cons> {
    let [h, u, v] = vortex_exact(p, x, y, t)?;
    Ok([h, h * u, h * v])
}

/// Bathymetry of the lake-at-rest test.
pub fn lake_bathymetry(x: f64, _y: f64) -> f64 {
    0.1 * (2.0 * PI * x).sin() * (2.0 * PI * x).cos() + 0.5
}

pub const LAKE_LEVEL: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Problem {
    Lake,
    Vortex,
    DamBreak,
}

impl std::fmt::Display for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Problem::Lake => "lake",
            Problem::Vortex => "vortex",
            Problem::DamBreak => "dambreak",
        })
    }
}

impl std::str::FromStr for Problem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lake" => Ok(Problem::Lake),
            "vortex" => Ok(Problem::Vortex),
            "dambreak" => Ok(Problem::DamBreak),
            _ => Err(Error::Config(format!(
                "problem must be lake|vortex|dambreak, got `{s}`"
            ))),
        }
    }
}

impl Problem {
    pub fn domain(&self) -> Domain {
        match self {
            Problem::Lake => Domain::from_bounds(-1.0, 1.0, -1.0, 1.0),
            Problem::Vortex => Domain::from_bounds(-10.0, 10.0, -5.0, 5.0),
            Problem::DamBreak => Domain::from_bounds(-10.0, 10.0, -10.0, 10.0),
        }
    }

    pub fn periodicity(&self) -> Periodicity {
        match self {
            Problem::DamBreak => Periodicity::NONE,
            _ => Periodicity::XY,
        }
    }

    pub fn default_g(&self) -> f64 {
        match self {
            Problem::Vortex => VortexParams::default().g,
            _ => 1.0,
        }
    }

    /// Builds the problem mesh; the dam-break mesh ignores `nx`, `ny`.
    pub fn mesh(&self, nx: usize, ny: usize, warp: f64) -> Result<Mesh> {
        match self {
            Problem::DamBreak => dam_break_mesh(),
            _ => warp_mesh(&uniform_tri_mesh(nx, ny, self.domain())?, warp),
        }
    }
}

/// Lake at rest: C0 bathymetry, `h = 2 - b`, zero velocity.
pub fn lake_at_rest_setup(disc: &mut Discretization) -> State {
    let b = disc.interpolate_bathymetry(lake_bathymetry);
    disc.set_bathymetry(&b);
    let mut u = disc.project(|_, _| [LAKE_LEVEL, 0.0, 0.0]);
    for (c, bi) in u.iter_mut().zip(&b) {
        c[0] -= bi;
    }
    State { t: 0.0, u, b }
}

/// Vortex initial condition with flat bottom.
pub fn vortex_setup(disc: &mut Discretization, p: &VortexParams) -> Result<State> {
    vortex_exact(p, p.xc, p.yc, 0.0)?;
    let b = vec![0.0; disc.num_elements() * disc.dofs];
    disc.set_bathymetry(&b);
    let u = disc.project(|x, y| vortex_cons(p, x, y, 0.0).unwrap_or([f64::NAN; 3]));
    Ok(State { t: 0.0, u, b })
}

/// Dam break: h = 10 left of the dam curve x = y^2/25, 5 to the right.
pub fn dam_break_setup(disc: &mut Discretization) -> Result<State> {
    if disc.mesh.wall_faces.is_empty() {
        return Err(Error::InvalidState(
            "dam-break mesh has no dam wall faces".into(),
        ));
    }
    let b = vec![0.0; disc.num_elements() * disc.dofs];
    disc.set_bathymetry(&b);
    let u = disc.project(|x, y| [if x < y * y / 25.0 { 10.0 } else { 5.0 }, 0.0, 0.0]);
    Ok(State { t: 0.0, u, b })
}

/// L2 errors of a discrete solution.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub n: usize,
    pub k: usize,
    /// Shortest mesh edge.
    pub h: f64,
    /// Per-field errors in (h, hu, hv).
    pub fields: [f64; 3],
    pub total: f64,
}

/// L2 error against `exact` using a rule exact for degree 2N+2.
pub fn l2_error(
    disc: &Discretization,
    u: &[Cons],
    exact: impl Fn(f64, f64) -> Cons + Sync,
) -> Result<ErrorReport> {
    let n = disc.n;
    let rule = triangle_rule(2 * n + 2);
    let geom = build_geometry(&disc.mesh, n, &rule.points, &surface_rule(n)?)?;
    let v = basis_vandermonde(n, &rule.points);
    let per: Vec<[f64; 3]> = par::map_range(disc.num_elements(), |k| {
        let modal = disc.modal(k, u);
        let mut vals = vec![[0.0; 3]; rule.len()];
        v.matvec3(&modal, &mut vals);
        let base = k * geom.npts();
        let mut e = [0.0; 3];
        for (i, val) in vals.iter().enumerate() {
            let p = geom.xy[base + i];
            let ex = exact(p[0], p[1]);
            let w = rule.weights[i] * geom.j[base + i];
            for c in 0..3 {
                e[c] += w * (val[c] - ex[c]).powi(2);
            }
        }
        e
    });
    let mut sq = [0.0; 3];
    for e in per {
        for c in 0..3 {
            sq[c] += e[c];
        }
    }
    Ok(ErrorReport {
        n,
        k: disc.num_elements(),
        h: disc.mesh.min_edge_length(),
        fields: [sq[0].sqrt(), sq[1].sqrt(), sq[2].sqrt()],
        total: (sq[0] + sq[1] + sq[2]).sqrt(),
    })
}

/// L2 deviation of (H, hu, hv) from the lake at rest.
pub fn lake_deviation(disc: &Discretization, u: &[Cons], b: &[f64]) -> Result<ErrorReport> {
    // add b back onto h so the exact state is the constant (2, 0, 0)
    let shifted: Vec<Cons> = u
        .iter()
        .zip(b)
        .map(|(c, bi)| [c[0] + bi, c[1], c[2]])
        .collect();
    l2_error(disc, &shifted, |_, _| [LAKE_LEVEL, 0.0, 0.0])
}

/// One sample of the conserved and dissipated quantities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantRow {
    pub t: f64,
    pub mass: f64,
    pub entropy: f64,
    pub min_h: f64,
    /// Element holding `min_h`.
    pub min_h_element: usize,
}

/// Totals with the scheme's own volume quadrature, so that the discrete
/// entropy identity applies to them directly.
pub fn invariants(disc: &Discretization, state: &State) -> InvariantRow {
    let w = &disc.ops.vol.weights;
    let per: Vec<(f64, f64, f64)> = par::map_range(disc.num_elements(), |k| {
        let vals = disc.volume_values(k, &state.u);
        let bq = disc.volume_bathymetry(k);
        let base = disc.geom.pts(k).start;
        let mut m = 0.0;
        let mut s = 0.0;
        let mut lo = f64::INFINITY;
        for (i, c) in vals.iter().enumerate() {
            let wj = w[i] * disc.geom.j[base + i];
            m += wj * c[0];
            s += wj * swe::entropy_unchecked(*c, bq[i], disc.g);
            lo = lo.min(c[0]);
        }
        (m, s, lo)
    });
    let mut row = InvariantRow {
        t: state.t,
        mass: 0.0,
        entropy: 0.0,
        min_h: f64::INFINITY,
        min_h_element: 0,
    };
    for (k, (m, s, lo)) in per.into_iter().enumerate() {
        row.mass += m;
        row.entropy += s;
        // NaN heights count as the minimum so they are reported
        if lo < row.min_h || lo.is_nan() && !row.min_h.is_nan() {
            row.min_h = lo;
            row.min_h_element = k;
        }
    }
    row
}

pub fn invariants_csv(rows: &[InvariantRow]) -> String {
    let mut s = String::from("t,mass,entropy,min_h\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:.12e},{:.16e},{:.16e},{:.16e}",
            r.t, r.mass, r.entropy, r.min_h
        );
    }
    s
}

/// One case of a convergence study.
#[derive(Clone, Debug)]
pub struct StudyCase {
    pub scheme: Scheme,
    pub n: usize,
    pub nx: usize,
    pub ny: usize,
    pub warp: f64,
}

#[derive(Clone, Debug)]
pub struct StudyRow {
    pub case: StudyCase,
    pub result: std::result::Result<ErrorReport, String>,
    /// log2(e_coarse / e_fine) against the previous case of the same
    /// scheme, degree and warp.
    pub order: Option<f64>,
}

/// Vortex runs to `t_final`; failures are recorded and the study continues.
pub fn convergence_study(cases: &[StudyCase], t_final: f64, cfl: f64) -> Vec<StudyRow> {
    let p = VortexParams::default();
    let mut rows: Vec<StudyRow> = Vec::new();
    for case in cases {
        let result = (|| -> Result<ErrorReport> {
            let mesh = Problem::Vortex.mesh(case.nx, case.ny, case.warp)?;
            let dt = compute_dt(&mesh, case.n, cfl);
            let mut disc = Discretization::new(
                mesh,
                Periodicity::XY,
                case.n,
                case.scheme,
                Penalty::LaxFriedrichs,
                p.g,
            )?;
            let s0 = vortex_setup(&mut disc, &p)?;
            let s = run(&disc, s0, t_final, dt, 0, |_| Ok(()))?;
            l2_error(&disc, &s.u, |x, y| {
                vortex_cons(&p, x, y, t_final).unwrap_or([f64::NAN; 3])
            })
        })()
        .map_err(|e| e.to_string());
        let prev = rows.iter().rev().find(|r| {
            r.case.scheme == case.scheme && r.case.n == case.n && r.case.warp == case.warp
        });
        let order = match (prev.map(|r| &r.result), &result) {
            (Some(Ok(a)), Ok(b)) => Some((a.total / b.total).ln() / (a.h / b.h).ln()),
            _ => None,
        };
        rows.push(StudyRow {
            case: case.clone(),
            result,
            order,
        });
    }
    rows
}

pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut s = String::from("scheme,N,nx,ny,warp,K,h,err_h,err_hu,err_hv,err_total,order\n");
    for r in rows {
        let c = &r.case;
        match &r.result {
            Ok(e) => {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{}",
                    c.scheme,
                    c.n,
                    c.nx,
                    c.ny,
                    c.warp,
                    e.k,
                    e.h,
                    e.fields[0],
                    e.fields[1],
                    e.fields[2],
                    e.total,
                    r.order.map(|o| format!("{o:.3}")).unwrap_or_default()
                );
            }
            Err(msg) => {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},,,,,,,failed: {}",
                    c.scheme,
                    c.n,
                    c.nx,
                    c.ny,
                    c.warp,
                    msg.replace(',', ";")
                );
            }
        }
    }
    s
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Legacy ASCII VTK of (H, h, hu, hv, b) on each element's equispaced
/// lattice, split into sub-triangles.
pub fn vtk_string(disc: &Discretization, state: &State) -> String {
    let n = disc.n.max(1);
    let lattice = equispaced_nodes(n);
    let v = basis_vandermonde(disc.n, &lattice);
    let mut tris = Vec::new();
    for j in 0..n {
        for i in 0..n - j {
            let a = equispaced_index(n, i, j);
            let b = equispaced_index(n, i + 1, j);
            let c = equispaced_index(n, i, j + 1);
            tris.push([a, b, c]);
            if i + j + 1 < n {
                let d = equispaced_index(n, i + 1, j + 1);
                tris.push([b, d, c]);
            }
        }
    }
    let kn = disc.num_elements();
    let npl = lattice.len();
    let mut pts = Vec::with_capacity(kn * npl);
    let mut vals = Vec::with_capacity(kn * npl);
    let mut bath = Vec::with_capacity(kn * npl);
    for k in 0..kn {
        pts.extend(
            lattice
                .iter()
                .map(|r| disc.mesh.deform(disc.mesh.affine_point(k, *r))),
        );
        let modal = disc.modal(k, &state.u);
        let mut out = vec![[0.0; 3]; npl];
        v.matvec3(&modal, &mut out);
        vals.extend(out);
        bath.extend(v.matvec(&disc.modal_scalar(k, &state.b)));
    }
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# vtk DataFile Version 3.0\nshallow water t={:e}\nASCII\nDATASET UNSTRUCTURED_GRID",
        state.t
    );
    let _ = writeln!(s, "POINTS {} double", pts.len());
    for p in &pts {
        let _ = writeln!(s, "{:e} {:e} 0", p[0], p[1]);
    }
    let ncell = kn * tris.len();
    let _ = writeln!(s, "CELLS {} {}", ncell, 4 * ncell);
    for k in 0..kn {
        for t in &tris {
            let o = k * npl;
            let _ = writeln!(s, "3 {} {} {}", o + t[0], o + t[1], o + t[2]);
        }
    }
    let _ = writeln!(s, "CELL_TYPES {ncell}");
    for _ in 0..ncell {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {}", pts.len());
    let mut field = |name: &str, f: &dyn Fn(usize) -> f64| {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for i in 0..pts.len() {
            let _ = writeln!(s, "{:e}", f(i));
        }
    };
    field("H", &|i| vals[i][0] + bath[i]);
    field("h", &|i| vals[i][0]);
    field("hu", &|i| vals[i][1]);
    field("hv", &|i| vals[i][2]);
    field("b", &|i| bath[i]);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lake_disc(n: usize, scheme: Scheme, warp: f64) -> Discretization {
        let mesh = Problem::Lake.mesh(4, 4, warp).unwrap();
        Discretization::new(
            mesh,
            Periodicity::XY,
            n,
            scheme,
            Penalty::LaxFriedrichs,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn vortex_center_and_far_field() {
        let p = VortexParams::default();
        let c = vortex_exact(&p, 0.0, 0.0, 0.0).unwrap();
        let expect = 1.0 - 25.0 / (32.0 * PI * PI) * 2f64.exp();
        assert!((c[0] - expect).abs() < 1e-15);
        let far = vortex_exact(&p, 30.0, 30.0, 0.0).unwrap();
        assert!(
            (far[0] - 1.0).abs() < 1e-15 && (far[1] - 1.0).abs() < 1e-15 && far[2].abs() < 1e-15
        );
        let a = vortex_exact(&p, 1.3, 0.4, 0.7).unwrap();
        let b = vortex_exact(&p, 1.3 - 0.7, 0.4, 0.0).unwrap();
        assert_eq!(a, b);
        let strong = VortexParams { beta: 30.0, ..p };
        assert!(vortex_exact(&strong, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn vortex_satisfies_the_equations() {
        use rand::{Rng, SeedableRng};
        let p = VortexParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let e = 1e-3;
        let d = |f: &dyn Fn(f64) -> Cons, x: f64| -> Cons {
            let (a, b, c, dd) = (f(x - 2.0 * e), f(x - e), f(x + e), f(x + 2.0 * e));
            let mut out = [0.0; 3];
            for i in 0..3 {
                out[i] = (a[i] - 8.0 * b[i] + 8.0 * c[i] - dd[i]) / (12.0 * e);
            }
            out
        };
        for _ in 0..100 {
            let (x, y, t) = (
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(0.0..1.0),
            );
            let u = |x: f64, y: f64, t: f64| vortex_cons(&p, x, y, t).unwrap();
            let fx = |x: f64, y: f64, t: f64| swe::flux(u(x, y, t), p.g, swe::Dir::X).unwrap();
            let fy = |x: f64, y: f64, t: f64| swe::flux(u(x, y, t), p.g, swe::Dir::Y).unwrap();
            let ut = d(&|s| u(x, y, s), t);
            let fxx = d(&|s| fx(s, y, t), x);
            let fyy = d(&|s| fy(x, s, t), y);
            for c in 0..3 {
                assert!((ut[c] + fxx[c] + fyy[c]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn lake_setup_is_flat_and_still() {
        for scheme in [
            Scheme::Hybridized,
            Scheme::Sbp(crate::quadrature::EdgeFamily::GaussLegendre),
        ] {
            let mut d = lake_disc(3, scheme, 0.1);
            let s = lake_at_rest_setup(&mut d);
            for k in 0..d.num_elements() {
                let vals = d.volume_values(k, &s.u);
                for (c, b) in vals.iter().zip(d.volume_bathymetry(k)) {
                    assert!((c[0] + b - 2.0).abs() < 1e-13);
                    assert_eq!((c[1], c[2]), (0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn error_of_constant_field() {
        let d = lake_disc(2, Scheme::Hybridized, 0.0);
        let u = d.project(|_, _| [1.0, 0.0, 0.0]);
        let e = l2_error(&d, &u, |_, _| [0.0, 0.0, 0.0]).unwrap();
        assert!((e.total - 2.0).abs() < 1e-12);
        let z = l2_error(&d, &u, |_, _| [1.0, 0.0, 0.0]).unwrap();
        assert!(z.total < 1e-12);
    }

    #[test]
    fn higher_degree_is_more_accurate() {
        let p = VortexParams::default();
        let errs: Vec<f64> = [2, 3]
            .iter()
            .map(|&n| {
                let mesh = Problem::Vortex.mesh(8, 4, 0.0).unwrap();
                let mut d = Discretization::new(
                    mesh,
                    Periodicity::XY,
                    n,
                    Scheme::Hybridized,
                    Penalty::LaxFriedrichs,
                    2.0,
                )
                .unwrap();
                let s = vortex_setup(&mut d, &p).unwrap();
                l2_error(&d, &s.u, |x, y| vortex_cons(&p, x, y, 0.0).unwrap())
                    .unwrap()
                    .total
            })
            .collect();
        assert!(errs[1] < errs[0]);
    }

    #[test]
    fn dam_break_initial_mass() {
        let mesh = Problem::DamBreak.mesh(0, 0, 0.0).unwrap();
        let mut d = Discretization::new(
            mesh,
            Periodicity::NONE,
            3,
            Scheme::Hybridized,
            Penalty::LaxFriedrichs,
            1.0,
        )
        .unwrap();
        let s = dam_break_setup(&mut d).unwrap();
        // left area = 200 + int_{-10}^{10} y^2/25 dy
        let left = 200.0 + 2000.0 / 75.0;
        let expect = 10.0 * left + 5.0 * (400.0 - left);
        let inv = invariants(&d, &s);
        assert!(
            (inv.mass - expect).abs() < 1e-9 * expect,
            "{} vs {}",
            inv.mass,
            expect
        );
        let plain = Problem::Lake.mesh(2, 2, 0.0).unwrap();
        let mut d = Discretization::new(
            plain,
            Periodicity::NONE,
            1,
            Scheme::Hybridized,
            Penalty::LaxFriedrichs,
            1.0,
        )
        .unwrap();
        assert!(dam_break_setup(&mut d).is_err());
    }

    #[test]
    fn vtk_has_expected_counts() {
        let mut d = lake_disc(2, Scheme::Hybridized, 0.0);
        let s = lake_at_rest_setup(&mut d);
        let v = vtk_string(&d, &s);
        assert!(v.contains(&format!("POINTS {} double", 32 * 6)));
        assert!(v.contains(&format!("CELLS {} {}", 32 * 4, 32 * 16)));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}

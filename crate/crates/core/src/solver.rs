//! Semi-discrete entropy stable DG operators and explicit time integration.
//!
//! Two discretizations share one driver:
//!
//! * `Hybridized` keeps modal coefficients, evaluates the entropy projection
//!   at volume and surface quadrature points and applies hybridized SBP
//!   operators in skew form;
//! * `Sbp` keeps nodal values at the nodes of a boundary-inclusive rule and
//!   applies the diagonal-norm operators directly.
//!
//! Physical operators are assembled on the fly from the reference skew
//! operators and the Jacobian-scaled geometric factors,
//! `S^x_ij = (G_xr(i) + G_xr(j)) Sr_ij / 2 + (G_xs(i) + G_xs(j)) Ss_ij / 2`.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::mesh::{build_geometry, connect, FaceMatch, Geometry, Mesh, Periodicity};
use crate::par;
use crate::quadrature::{sbp_rule, EdgeFamily};
use crate::refelem::{
    basis_vandermonde, build_traditional_sbp, equispaced_nodes, RefOperators, TraditionalSbp,
};
use crate::swe::{self, ec_flux_xy, max_wave_speed, wall_ghost, Cons, Prim};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Hybridized,
    Sbp(EdgeFamily),
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Hybridized => f.write_str("hybridized"),
            Scheme::Sbp(fam) => write!(f, "sbp-{fam}"),
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hybridized" => Ok(Scheme::Hybridized),
            "sbp-legendre" => Ok(Scheme::Sbp(EdgeFamily::GaussLegendre)),
            "sbp-lobatto" => Ok(Scheme::Sbp(EdgeFamily::GaussLobatto)),
            _ => Err(Error::Config(format!(
                "scheme must be hybridized|sbp-legendre|sbp-lobatto, got `{s}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Penalty {
    EntropyConservative,
    LaxFriedrichs,
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Penalty::EntropyConservative => "ec",
            Penalty::LaxFriedrichs => "lax-friedrichs",
        })
    }
}

impl std::str::FromStr for Penalty {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ec" | "none" => Ok(Penalty::EntropyConservative),
            "lf" | "lax-friedrichs" => Ok(Penalty::LaxFriedrichs),
            _ => Err(Error::Config(format!(
                "penalty must be ec|lax-friedrichs, got `{s}`"
            ))),
        }
    }
}

/// Solution snapshot. `u` and `b` are modal coefficients for the hybridized
/// scheme and nodal values for the SBP scheme, `dofs` entries per element.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Vec<Cons>,
    pub b: Vec<f64>,
}

/// Everything needed to evaluate the semi-discrete right-hand side.
pub struct Discretization {
    pub scheme: Scheme,
    pub n: usize,
    pub g: f64,
    pub penalty: Penalty,
    pub mesh: Mesh,
    /// Geometry at volume points followed by surface points.
    pub geom: Geometry,
    pub faces: FaceMatch,
    pub ops: RefOperators,
    pub sbp: Option<TraditionalSbp>,
    /// Degrees of freedom per element.
    pub dofs: usize,
    /// Points carrying flux data per element (Nq + Nf or Nq).
    pub npts: usize,
    /// Reference skew operators restricted to rows of volume points,
    /// row-major with `npts` columns.
    skew_r: Vec<f64>,
    skew_s: Vec<f64>,
    /// Surface point -> local point index (Nq + f, or the SBP face node).
    surf_point: Vec<usize>,
    /// Per element: projection onto modal coefficients (Np x Nq).
    proj: Vec<Mat>,
    /// Per element: `M_h^{-1} [Vq; Vf]^T` (Np x Nh); hybridized only.
    lift: Vec<Mat>,
    /// Per element: inverse nodal masses `1 / (w_i J_i)`; SBP only.
    inv_mass: Vec<Vec<f64>>,
    /// Bathymetry at flux points and its weak gradients `Q^{x,k} b`, `Q^{y,k} b`.
    b_pts: Vec<f64>,
    db: Vec<[f64; 2]>,
}

impl fmt::Debug for Discretization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Discretization")
            .field("scheme", &self.scheme)
            .field("n", &self.n)
            .field("g", &self.g)
            .field("penalty", &self.penalty)
            .field("elements", &self.mesh.num_elements())
            .finish()
    }
}

/// `C_N = (N+1)(N+2)/2`, the trace inequality constant.
pub fn trace_constant(n: usize) -> f64 {
    ((n + 1) * (n + 2)) as f64 / 2.0
}

/// `dt = CFL h / C_N` with h the shortest edge of the mesh.
pub fn compute_dt(mesh: &Mesh, n: usize, cfl: f64) -> f64 {
    cfl * mesh.min_edge_length() / trace_constant(n)
}

impl Discretization {
    pub fn new(
        mesh: Mesh,
        periodic: Periodicity,
        n: usize,
        scheme: Scheme,
        penalty: Penalty,
        g: f64,
    ) -> Result<Discretization> {
        if !(g > 0.0) {
            return Err(Error::Config(format!("gravity must be positive, got {g}")));
        }
        let (ops, sbp) = match scheme {
            Scheme::Hybridized => (RefOperators::new(n)?, None),
            Scheme::Sbp(family) => {
                let rule = sbp_rule(n, family)?;
                let ops = RefOperators::on_sbp_rule(&rule)?;
                let sbp = build_traditional_sbp(&ops, &rule)?;
                (ops, Some(sbp))
            }
        };
        let geom = build_geometry(&mesh, n, &ops.vol.points, &ops.surf)?;
        let faces = connect(&mesh, periodic, &geom)?;
        let nq = ops.nq();
        let nf = ops.nf();
        let kn = mesh.num_elements();
        let (dofs, npts, skew_r, skew_s, surf_point) = match &sbp {
            None => {
                let nh = nq + nf;
                let rows = |m: &Mat| m.block(0, 0, nq, nh).as_slice().to_vec();
                (
                    ops.np,
                    nh,
                    rows(&ops.qh_skew_r),
                    rows(&ops.qh_skew_s),
                    (nq..nh).collect(),
                )
            }
            Some(s) => (
                nq,
                nq,
                s.s_r.as_slice().to_vec(),
                s.s_s.as_slice().to_vec(),
                s.face_nodes.clone(),
            ),
        };
        let w = &ops.vol.weights;
        let gnp = geom.npts();
        let per: Vec<(Mat, Mat, Vec<f64>)> = par::map_range(kn, |k| {
            let wj: Vec<f64> = (0..nq).map(|i| w[i] * geom.j[k * gnp + i]).collect();
            let vtw = ops.vq.transpose().scale_cols(&wj);
            let mk = vtw.matmul(&ops.vq);
            let minv = mk
                .inverse()
                .expect("positive weights give an invertible mass matrix");
            let proj = minv.matmul(&vtw);
            match &sbp {
                None => (proj, minv.matmul(&ops.vh.transpose()), Vec::new()),
                Some(_) => (proj, Mat::zeros(0, 0), wj.iter().map(|v| 1.0 / v).collect()),
            }
        });
        let mut proj = Vec::with_capacity(kn);
        let mut lift = Vec::with_capacity(kn);
        let mut inv_mass = Vec::with_capacity(kn);
        for (p, l, m) in per {
            proj.push(p);
            lift.push(l);
            inv_mass.push(m);
        }
        let mut disc = Discretization {
            scheme,
            n,
            g,
            penalty,
            mesh,
            geom,
            faces,
            ops,
            sbp,
            dofs,
            npts,
            skew_r,
            skew_s,
            surf_point,
            proj,
            lift,
            inv_mass,
            b_pts: Vec::new(),
            db: Vec::new(),
        };
        disc.set_bathymetry(&vec![0.0; kn * dofs]);
        Ok(disc)
    }

    pub fn num_elements(&self) -> usize {
        self.mesh.num_elements()
    }

    pub fn nq(&self) -> usize {
        self.ops.nq()
    }

    pub fn nf(&self) -> usize {
        self.ops.nf()
    }

    /// Precomputes bathymetry values and `Q^{i,k} b` at the flux points.
    pub fn set_bathymetry(&mut self, b: &[f64]) {
        let kn = self.num_elements();
        assert_eq!(b.len(), kn * self.dofs, "bathymetry length");
        let npts = self.npts;
        let gnp = self.geom.npts();
        let per: Vec<(Vec<f64>, Vec<[f64; 2]>)> = par::map_range(kn, |k| {
            let bk = &b[k * self.dofs..(k + 1) * self.dofs];
            let (bp, qr, qs) = match &self.sbp {
                None => (self.ops.vh.matvec(bk), &self.ops.qh_r, &self.ops.qh_s),
                Some(s) => (bk.to_vec(), &s.q_r, &s.q_s),
            };
            let gk = &self.geom.g[k * gnp..k * gnp + npts];
            // Q^{x,k} b = sum_j (diag(G_xj) Q^j b + Q^j (G_xj b)) / 2
            let comp =
                |c: usize| -> Vec<f64> { gk.iter().zip(&bp).map(|(g, b)| g[c] * b).collect() };
            let qrb = qr.matvec(&bp);
            let qsb = qs.matvec(&bp);
            let qr_gb: Vec<Vec<f64>> = (0..4)
                .map(|c| {
                    if c % 2 == 0 {
                        qr.matvec(&comp(c))
                    } else {
                        qs.matvec(&comp(c))
                    }
                })
                .collect();
            let db = (0..npts)
                .map(|i| {
                    let g = gk[i];
                    [
                        0.5 * (g[0] * qrb[i] + g[1] * qsb[i] + qr_gb[0][i] + qr_gb[1][i]),
                        0.5 * (g[2] * qrb[i] + g[3] * qsb[i] + qr_gb[2][i] + qr_gb[3][i]),
                    ]
                })
                .collect();
            (bp, db)
        });
        self.b_pts = Vec::with_capacity(kn * npts);
        self.db = Vec::with_capacity(kn * npts);
        for (bp, db) in per {
            self.b_pts.extend(bp);
            self.db.extend(db);
        }
    }

    /// Physical coordinates of the volume points of element k.
    pub fn volume_xy(&self, k: usize) -> &[[f64; 2]] {
        let r = self.geom.pts(k);
        &self.geom.xy[r.start..r.start + self.nq()]
    }

    /// Initial data from a pointwise function: L2 projection (hybridized) or
    /// nodal values (SBP).
    pub fn project(&self, f: impl Fn(f64, f64) -> Cons + Sync) -> Vec<Cons> {
        let per: Vec<Vec<Cons>> = par::map_range(self.num_elements(), |k| {
            let vals: Vec<Cons> = self.volume_xy(k).iter().map(|p| f(p[0], p[1])).collect();
            match self.sbp {
                Some(_) => vals,
                None => {
                    let mut out = vec![[0.0; 3]; self.dofs];
                    self.proj[k].matvec3(&vals, &mut out);
                    out
                }
            }
        });
        per.concat()
    }

    /// Continuous degree-N interpolant of `b` through the equispaced mapping
    /// nodes, stored like the state.
    pub fn interpolate_bathymetry(&self, b: impl Fn(f64, f64) -> f64 + Sync) -> Vec<f64> {
        let n = self.n;
        let veq = basis_vandermonde(n, &equispaced_nodes(n));
        let vinv = veq.inverse().expect("equispaced nodes are unisolvent");
        let to_nodes = self.ops.vq.matmul(&vinv);
        let per: Vec<Vec<f64>> = par::map_range(self.num_elements(), |k| {
            let vals: Vec<f64> = self
                .mesh
                .mapping_nodes(k, n)
                .iter()
                .map(|p| b(p[0], p[1]))
                .collect();
            match self.sbp {
                Some(_) => to_nodes.matvec(&vals),
                None => vinv.matvec(&vals),
            }
        });
        per.concat()
    }

    /// Modal coefficients of the solution on element k (projecting nodal
    /// SBP values with the J-weighted rule).
    pub fn modal(&self, k: usize, u: &[Cons]) -> Vec<Cons> {
        let uk = &u[k * self.dofs..(k + 1) * self.dofs];
        match self.sbp {
            None => uk.to_vec(),
            Some(_) => {
                let mut out = vec![[0.0; 3]; self.ops.np];
                self.proj[k].matvec3(uk, &mut out);
                out
            }
        }
    }

    /// Values at the volume points of element k.
    pub fn volume_values(&self, k: usize, u: &[Cons]) -> Vec<Cons> {
        let uk = &u[k * self.dofs..(k + 1) * self.dofs];
        match self.sbp {
            Some(_) => uk.to_vec(),
            None => {
                let mut out = vec![[0.0; 3]; self.nq()];
                self.ops.vq.matvec3(uk, &mut out);
                out
            }
        }
    }

    /// Modal coefficients of a scalar field stored like the state.
    pub fn modal_scalar(&self, k: usize, b: &[f64]) -> Vec<f64> {
        let bk = &b[k * self.dofs..(k + 1) * self.dofs];
        match self.sbp {
            None => bk.to_vec(),
            Some(_) => self.proj[k].matvec(bk),
        }
    }

    /// Bathymetry at the volume points of element k.
    pub fn volume_bathymetry(&self, k: usize) -> &[f64] {
        &self.b_pts[k * self.npts..k * self.npts + self.nq()]
    }

    /// Entropy-projected (hybridized) or nodal (SBP) point data for element k.
    pub fn element_prims(&self, k: usize, u: &[Cons], t: f64, out: &mut [Prim]) -> Result<()> {
        let uq = self.volume_values(k, u);
        let bk = &self.b_pts[k * self.npts..(k + 1) * self.npts];
        for (q, c) in uq.iter().enumerate() {
            if !(c[0] > 0.0) {
                return Err(if c.iter().all(|v| v.is_finite()) {
                    Error::Positivity {
                        element: k,
                        time: t,
                        h: c[0],
                    }
                } else {
                    Error::NonFinite {
                        element: k,
                        time: t,
                    }
                });
            }
            if self.sbp.is_some() {
                out[q] = Prim::new(*c);
            }
        }
        if self.sbp.is_some() {
            return Ok(());
        }
        let vq: Vec<Cons> = uq
            .iter()
            .zip(bk)
            .map(|(c, b)| swe::entropy_vars_unchecked(*c, *b, self.g))
            .collect();
        let mut vmodal = vec![[0.0; 3]; self.ops.np];
        self.proj[k].matvec3(&vq, &mut vmodal);
        let mut vh = vec![[0.0; 3]; self.npts];
        self.ops.vh.matvec3(&vmodal, &mut vh);
        for (i, v) in vh.iter().enumerate() {
            let c = swe::cons_from_entropy_unchecked(*v, bk[i], self.g);
            if !(c[0] > 0.0) {
                return Err(if c.iter().all(|v| v.is_finite()) {
                    Error::Positivity {
                        element: k,
                        time: t,
                        h: c[0],
                    }
                } else {
                    Error::NonFinite {
                        element: k,
                        time: t,
                    }
                });
            }
            out[i] = Prim::new(c);
        }
        Ok(())
    }

    /// Phase one: point data for every element.
    pub fn all_prims(&self, u: &[Cons], t: f64) -> Result<Vec<Prim>> {
        let mut prims = vec![Prim::default(); self.num_elements() * self.npts];
        par::try_for_each_chunk(&mut prims, self.npts, |k, out| {
            self.element_prims(k, u, t, out)
        })?;
        Ok(prims)
    }

    #[inline(always)]
    fn split(gi: &[f64; 4], gj: &[f64; 4], sr: f64, ss: f64) -> (f64, f64) {
        (
            0.5 * ((gi[0] + gj[0]) * sr + (gi[1] + gj[1]) * ss),
            0.5 * ((gi[2] + gj[2]) * sr + (gi[3] + gj[3]) * ss),
        )
    }

    fn element_g(&self, k: usize) -> &[[f64; 4]] {
        let r = self.geom.pts(k);
        &self.geom.g[r.start..r.start + self.npts]
    }

    /// `(S^x o F^x + S^y o F^y) 1` on element k using skew symmetry: each
    /// pair is evaluated once and the empty surface-surface block is skipped.
    pub fn volume_term_skew(&self, k: usize, p: &[Prim], acc: &mut [Cons]) {
        let nq = self.nq();
        let np = self.npts;
        let g = self.element_g(k);
        let grav = self.g;
        for i in 0..nq {
            let pi = p[i];
            let gi = g[i];
            let row_r = &self.skew_r[i * np..(i + 1) * np];
            let row_s = &self.skew_s[i * np..(i + 1) * np];
            let mut ai = acc[i];
            for j in i + 1..np {
                let (sx, sy) = Self::split(&gi, &g[j], row_r[j], row_s[j]);
                let (fx, fy) = ec_flux_xy(&pi, &p[j], grav);
                let v0 = sx * fx[0] + sy * fy[0];
                let v1 = sx * fx[1] + sy * fy[1];
                let v2 = sx * fx[2] + sy * fy[2];
                ai[0] += v0;
                ai[1] += v1;
                ai[2] += v2;
                let aj = &mut acc[j];
                aj[0] -= v0;
                aj[1] -= v1;
                aj[2] -= v2;
            }
            acc[i] = ai;
        }
    }

    /// Reference assembly of the same term over the full square skew
    /// operators, used to check [`Self::volume_term_skew`].
    pub fn volume_term_naive(&self, k: usize, p: &[Prim]) -> Vec<Cons> {
        let np = self.npts;
        let g = self.element_g(k);
        let (sr, ss) = match &self.sbp {
            None => (&self.ops.qh_skew_r, &self.ops.qh_skew_s),
            Some(s) => (&s.s_r, &s.s_s),
        };
        let mut out = vec![[0.0; 3]; np];
        for i in 0..np {
            for j in 0..np {
                let (sx, sy) = Self::split(&g[i], &g[j], sr[(i, j)], ss[(i, j)]);
                let (fx, fy) = ec_flux_xy(&p[i], &p[j], self.g);
                for c in 0..3 {
                    out[i][c] += sx * fx[c] + sy * fy[c];
                }
            }
        }
        out
    }

    /// Interface flux contributions added to the point residual of element k.
    fn surface_term(&self, k: usize, prims: &[Prim], acc: &mut [Cons]) {
        let nf = self.nf();
        let np = self.npts;
        let wf = &self.ops.surf.weights;
        let lf = self.penalty == Penalty::LaxFriedrichs;
        for s in 0..nf {
            let gi = k * nf + s;
            let own = prims[k * np + self.surf_point[s]];
            let n = self.geom.normal[gi];
            let ext = if self.faces.is_wall(k, s) {
                Prim::new(wall_ghost([own.h, own.hu, own.hv], n))
            } else {
                let e = self.faces.ext[gi];
                prims[(e / nf) * np + self.surf_point[e % nf]]
            };
            let (fx, fy) = ec_flux_xy(&own, &ext, self.g);
            let nj = self.geom.nj[gi];
            let w = wf[s];
            let a = &mut acc[self.surf_point[s]];
            for c in 0..3 {
                a[c] += w * (nj[0] * fx[c] + nj[1] * fy[c]);
            }
            if lf {
                let lam = 0.5 * w * self.geom.sj[gi] * max_wave_speed(&own, &ext, n, self.g);
                a[0] -= lam * (ext.h - own.h);
                a[1] -= lam * (ext.hu - own.hu);
                a[2] -= lam * (ext.hv - own.hv);
            }
        }
    }

    /// Point residual `-(volume + surface) + source` of element k.
    pub fn point_residual(&self, k: usize, prims: &[Prim]) -> Vec<Cons> {
        let np = self.npts;
        let p = &prims[k * np..(k + 1) * np];
        let mut acc = vec![[0.0; 3]; np];
        self.volume_term_skew(k, p, &mut acc);
        self.surface_term(k, prims, &mut acc);
        let db = &self.db[k * np..(k + 1) * np];
        for i in 0..np {
            let gh = self.g * p[i].h;
            acc[i] = [
                -acc[i][0],
                -acc[i][1] - gh * db[i][0],
                -acc[i][2] - gh * db[i][1],
            ];
        }
        acc
    }

    /// Semi-discrete right-hand side `du/dt` for all elements.
    pub fn rhs(&self, u: &[Cons], t: f64, out: &mut [Cons]) -> Result<()> {
        let prims = self.all_prims(u, t)?;
        let dofs = self.dofs;
        par::try_for_each_chunk(out, dofs, |k, o| {
            let r = self.point_residual(k, &prims);
            match self.sbp {
                None => self.lift[k].matvec3(&r, o),
                Some(_) => {
                    let im = &self.inv_mass[k];
                    for i in 0..dofs {
                        o[i] = [r[i][0] * im[i], r[i][1] * im[i], r[i][2] * im[i]];
                    }
                }
            }
            if o.iter().flatten().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::NonFinite {
                    element: k,
                    time: t,
                })
            }
        })
    }

    /// Global entropy production `sum_k v_h^T M_h du/dt` of one right-hand
    /// side evaluation, where `v_h` is the projected entropy variable.
    /// Also returns the sum of the absolute pointwise terms as a scale.
    pub fn entropy_rate(&self, u: &[Cons]) -> Result<(f64, f64)> {
        let prims = self.all_prims(u, 0.0)?;
        let per: Vec<(f64, f64)> = par::map_range(self.num_elements(), |k| {
            let r = self.point_residual(k, &prims);
            let np = self.npts;
            let bk = &self.b_pts[k * np..(k + 1) * np];
            // hybridized: v~ = Vh v_h, so v_h^T Vh^T r = v~^T r
            let mut sum = 0.0;
            let mut abs = 0.0;
            for i in 0..np {
                let p = prims[k * np + i];
                let v = swe::entropy_vars_unchecked([p.h, p.hu, p.hv], bk[i], self.g);
                let t = v[0] * r[i][0] + v[1] * r[i][1] + v[2] * r[i][2];
                sum += t;
                abs += t.abs();
            }
            (sum, abs)
        });
        Ok(per.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1)))
    }

    /// `sum_k 1^T M_h dh/dt`: the mass rate of a right-hand side.
    pub fn mass_rate(&self, du: &[Cons]) -> f64 {
        (0..self.num_elements())
            .map(|k| {
                let vals = self.volume_values(k, du);
                let r = self.geom.pts(k);
                vals.iter()
                    .enumerate()
                    .map(|(i, v)| self.ops.vol.weights[i] * self.geom.j[r.start + i] * v[0])
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Carpenter-Kennedy five-stage fourth-order low-storage coefficients.
pub const RK4A: [f64; 5] = [
    0.0,
    -567301805773.0 / 1357537059087.0,
    -2404267990393.0 / 2016746695238.0,
    -3550918686646.0 / 2091501179385.0,
    -1275806237668.0 / 842570457699.0,
];
pub const RK4B: [f64; 5] = [
    1432997174477.0 / 9575080441755.0,
    5161836677717.0 / 13612068292357.0,
    1720146321549.0 / 2090206949498.0,
    3134564353537.0 / 4481467310338.0,
    2277821191437.0 / 14882151754819.0,
];
pub const RK4C: [f64; 5] = [
    0.0,
    1432997174477.0 / 9575080441755.0,
    2526269341429.0 / 6820363962896.0,
    2006345519317.0 / 3224310063776.0,
    2802321613138.0 / 2924317926251.0,
];

/// One low-storage RK step of `y' = f(t, y)`. `res` and `k` are scratch
/// registers of the same length as `y`.
pub fn step_lsrk45<F>(
    y: &mut [f64],
    res: &mut [f64],
    k: &mut [f64],
    t: f64,
    dt: f64,
    mut f: F,
) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidState(format!(
            "time step {dt} must be positive"
        )));
    }
    res.iter_mut().for_each(|r| *r = 0.0);
    for s in 0..5 {
        f(t + RK4C[s] * dt, y, k)?;
        for ((r, kk), yy) in res.iter_mut().zip(k.iter()).zip(y.iter_mut()) {
            *r = RK4A[s] * *r + dt * kk;
            *yy += RK4B[s] * *r;
        }
    }
    Ok(())
}

/// Integrates `state` to `t_final` with step `dt`, shortening the last step to
/// land on `t_final`. `observe` is called after every `every` steps and at
/// the end (and at the start, before any step).
pub fn run<O>(
    disc: &Discretization,
    mut state: State,
    t_final: f64,
    dt: f64,
    every: usize,
    mut observe: O,
) -> Result<State>
where
    O: FnMut(&State) -> Result<()>,
{
    if !(t_final >= 0.0) {
        return Err(Error::InvalidState(format!(
            "final time {t_final} must be >= 0"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidState(format!(
            "time step {dt} must be positive"
        )));
    }
    observe(&state)?;
    let t0 = state.t;
    let span = t_final - t0;
    if span <= 0.0 {
        return Ok(state);
    }
    let full = (span / dt).floor() as usize;
    let rest = span - full as f64 * dt;
    let steps = if rest > 1e-12 * span {
        full + 1
    } else {
        full.max(1)
    };
    let len = state.u.len();
    let mut res = vec![[0.0; 3]; len];
    let mut k = vec![[0.0; 3]; len];
    for step in 0..steps {
        let t = t0 + step as f64 * dt;
        let h = if step + 1 == steps { t_final - t } else { dt };
        step_lsrk45(
            state.u.as_flattened_mut(),
            res.as_flattened_mut(),
            k.as_flattened_mut(),
            t,
            h,
            |tt, y, out| {
                let y: &[Cons] = as_triples(y);
                disc.rhs(y, tt, as_triples_mut(out))
            },
        )?;
        state.t = if step + 1 == steps { t_final } else { t + h };
        if every > 0 && (step + 1) % every == 0 && step + 1 != steps {
            observe(&state)?;
        }
    }
    observe(&state)?;
    Ok(state)
}

fn as_triples(y: &[f64]) -> &[Cons] {
    let (chunks, rest) = y.as_chunks::<3>();
    debug_assert!(rest.is_empty());
    chunks
}

fn as_triples_mut(y: &mut [f64]) -> &mut [Cons] {
    let (chunks, rest) = y.as_chunks_mut::<3>();
    debug_assert!(rest.is_empty());
    chunks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{uniform_tri_mesh, warp_mesh, Domain};

    fn disc(n: usize, scheme: Scheme, warp: f64) -> Discretization {
        let m = uniform_tri_mesh(4, 4, Domain::from_bounds(-1.0, 1.0, -1.0, 1.0)).unwrap();
        let m = warp_mesh(&m, warp).unwrap();
        Discretization::new(m, Periodicity::XY, n, scheme, Penalty::LaxFriedrichs, 1.0).unwrap()
    }

    #[test]
    fn trace_constants() {
        assert_eq!(trace_constant(3), 10.0);
        assert_eq!(trace_constant(1), 3.0);
        let d = Domain::from_bounds(0.0, 1.0, 0.0, 1.0);
        let a = compute_dt(&uniform_tri_mesh(4, 4, d).unwrap(), 2, 0.125);
        let b = compute_dt(&uniform_tri_mesh(8, 8, d).unwrap(), 2, 0.125);
        assert!((a - 2.0 * b).abs() < 1e-15);
    }

    #[test]
    fn free_stream_is_preserved() {
        for scheme in [Scheme::Hybridized, Scheme::Sbp(EdgeFamily::GaussLegendre)] {
            for warp in [0.0, 0.1] {
                let d = disc(3, scheme, warp);
                let u = d.project(|_, _| [1.5, 0.3, -0.2]);
                let mut out = vec![[0.0; 3]; u.len()];
                d.rhs(&u, 0.0, &mut out).unwrap();
                let m = out.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(m < 1e-12, "{scheme} warp={warp}: {m:e}");
            }
        }
    }

    #[test]
    fn skew_and_naive_volume_terms_agree() {
        let d = disc(2, Scheme::Hybridized, 0.1);
        let u = d.project(|x, y| [2.0 + 0.3 * (3.0 * x).sin(), 0.2 * y, 0.1 * x * y]);
        let prims = d.all_prims(&u, 0.0).unwrap();
        for k in 0..d.num_elements() {
            let p = &prims[k * d.npts..(k + 1) * d.npts];
            let mut a = vec![[0.0; 3]; d.npts];
            d.volume_term_skew(k, p, &mut a);
            let b = d.volume_term_naive(k, p);
            for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_of_constants_is_exact() {
        let d = disc(3, Scheme::Hybridized, 0.1);
        let u = d.project(|_, _| [1.2, 0.4, -0.1]);
        let prims = d.all_prims(&u, 0.0).unwrap();
        for p in prims {
            assert!(
                (p.h - 1.2).abs() < 1e-12
                    && (p.hu - 0.4).abs() < 1e-12
                    && (p.hv + 0.1).abs() < 1e-12
            );
        }
    }

    #[test]
    fn positivity_failure_names_element() {
        let d = disc(1, Scheme::Hybridized, 0.0);
        let mut u = d.project(|_, _| [1.0, 0.0, 0.0]);
        for c in &mut u[3 * d.dofs..4 * d.dofs] {
            c[0] = -1.0;
        }
        let mut out = vec![[0.0; 3]; u.len()];
        match d.rhs(&u, 0.25, &mut out).unwrap_err() {
            Error::Positivity { element, time, .. } => {
                assert_eq!(element, 3);
                assert_eq!(time, 0.25);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn lsrk_zero_rhs_and_constant_rhs() {
        let mut y = vec![1.0, -2.0];
        let mut r = vec![0.0; 2];
        let mut k = vec![0.0; 2];
        step_lsrk45(&mut y, &mut r, &mut k, 0.0, 0.1, |_, _, o| {
            o.fill(0.0);
            Ok(())
        })
        .unwrap();
        assert_eq!(y, vec![1.0, -2.0]);
        step_lsrk45(&mut y, &mut r, &mut k, 0.0, 0.5, |_, _, o| {
            o.fill(3.0);
            Ok(())
        })
        .unwrap();
        assert!((y[0] - 2.5).abs() < 1e-15 && (y[1] + 0.5).abs() < 1e-15);
        assert!(step_lsrk45(&mut y, &mut r, &mut k, 0.0, 0.0, |_, _, _| Ok(())).is_err());
    }

    #[test]
    fn run_to_zero_time_returns_initial_state() {
        let d = disc(1, Scheme::Hybridized, 0.0);
        let s = State {
            t: 0.0,
            u: d.project(|_, _| [1.0, 0.1, 0.0]),
            b: vec![0.0; 32 * d.dofs],
        };
        let out = run(&d, s.clone(), 0.0, 0.01, 0, |_| Ok(())).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn run_lands_on_final_time() {
        let d = disc(1, Scheme::Hybridized, 0.0);
        let s = State {
            t: 0.0,
            u: d.project(|_, _| [1.0, 0.1, 0.0]),
            b: vec![0.0; 32 * d.dofs],
        };
        let mut times = Vec::new();
        let out = run(&d, s, 0.035, 0.01, 1, |st| {
            times.push(st.t);
            Ok(())
        })
        .unwrap();
        assert_eq!(out.t, 0.035);
        assert_eq!(times.len(), 5);
    }
}

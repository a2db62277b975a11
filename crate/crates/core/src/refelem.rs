//! Reference element operators.
//!
//! Reference coordinates are written (r, s). Matrices named `*_r`/`*_s`
//! act in those directions; physical x/y operators are assembled per element
//! in the solver.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::quadrature::{
    self, verify_exactness, verify_surface_exactness, Quadrature2D, SbpQuadrature,
    SurfaceQuadrature,
};

/// Number of basis functions of total degree <= n.
pub fn num_modes(n: usize) -> usize {
    (n + 1) * (n + 2) / 2
}

/// Orthonormal Jacobi polynomial P_n^(a,b) at x.
fn jacobi_p(x: f64, a: f64, b: f64, n: usize) -> f64 {
    let g = quadrature::gamma;
    let gamma0 = 2f64.powf(a + b + 1.0) / (a + b + 1.0) * g(a + 1.0) * g(b + 1.0) / g(a + b + 1.0);
    let p0 = 1.0 / gamma0.sqrt();
    if n == 0 {
        return p0;
    }
    let gamma1 = (a + 1.0) * (b + 1.0) / (a + b + 3.0) * gamma0;
    let p1 = ((a + b + 2.0) * x / 2.0 + (a - b) / 2.0) / gamma1.sqrt();
    if n == 1 {
        return p1;
    }
    let mut aold = 2.0 / (2.0 + a + b) * ((a + 1.0) * (b + 1.0) / (a + b + 3.0)).sqrt();
    let (mut pm, mut pc) = (p0, p1);
    for i in 1..n {
        let i = i as f64;
        let h1 = 2.0 * i + a + b;
        let anew = 2.0 / (h1 + 2.0)
            * ((i + 1.0) * (i + 1.0 + a + b) * (i + 1.0 + a) * (i + 1.0 + b)
                / (h1 + 1.0)
                / (h1 + 3.0))
                .sqrt();
        let bnew = -(a * a - b * b) / h1 / (h1 + 2.0);
        let pn = (-aold * pm + (x - bnew) * pc) / anew;
        pm = pc;
        pc = pn;
        aold = anew;
    }
    pc
}

fn grad_jacobi_p(x: f64, a: f64, b: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        ((n as f64) * (n as f64 + a + b + 1.0)).sqrt() * jacobi_p(x, a + 1.0, b + 1.0, n - 1)
    }
}

/// Collapsed coordinates of a reference point.
fn rs_to_ab(r: f64, s: f64) -> (f64, f64) {
    let a = if (1.0 - s).abs() > 1e-14 {
        2.0 * (1.0 + r) / (1.0 - s) - 1.0
    } else {
        -1.0
    };
    (a, s)
}

/// Mode ordering: (i, j) for i in 0..=n, j in 0..=n-i.
fn mode_indices(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..=n).flat_map(move |i| (0..=n - i).map(move |j| (i, j)))
}

fn simplex_p(a: f64, b: f64, i: usize, j: usize) -> f64 {
    let h1 = jacobi_p(a, 0.0, 0.0, i);
    let h2 = jacobi_p(b, 2.0 * i as f64 + 1.0, 0.0, j);
    std::f64::consts::SQRT_2 * h1 * h2 * (1.0 - b).powi(i as i32)
}

fn grad_simplex_p(a: f64, b: f64, id: usize, jd: usize) -> (f64, f64) {
    let fa = jacobi_p(a, 0.0, 0.0, id);
    let dfa = grad_jacobi_p(a, 0.0, 0.0, id);
    let alpha = 2.0 * id as f64 + 1.0;
    let gb = jacobi_p(b, alpha, 0.0, jd);
    let dgb = grad_jacobi_p(b, alpha, 0.0, jd);
    let half = 0.5 * (1.0 - b);
    let low = if id > 0 {
        half.powi(id as i32 - 1)
    } else {
        1.0
    };
    let mut dr = dfa * gb;
    let mut ds = dfa * gb * 0.5 * (1.0 + a);
    if id > 0 {
        dr *= low;
        ds *= low;
    }
    let mut tmp = dgb * half.powi(id as i32);
    if id > 0 {
        tmp -= 0.5 * id as f64 * gb * low;
    }
    ds += fa * tmp;
    let scale = 2f64.powf(id as f64 + 0.5);
    (dr * scale, ds * scale)
}

/// Orthonormal basis values at `points`: one row per point, one column per mode.
pub fn basis_vandermonde(n: usize, points: &[[f64; 2]]) -> Mat {
    let modes: Vec<_> = mode_indices(n).collect();
    Mat::from_fn(points.len(), modes.len(), |p, m| {
        let (a, b) = rs_to_ab(points[p][0], points[p][1]);
        simplex_p(a, b, modes[m].0, modes[m].1)
    })
}

/// Reference derivatives of the basis at `points`.
pub fn grad_vandermonde(n: usize, points: &[[f64; 2]]) -> (Mat, Mat) {
    let modes: Vec<_> = mode_indices(n).collect();
    let mut vr = Mat::zeros(points.len(), modes.len());
    let mut vs = Mat::zeros(points.len(), modes.len());
    for (p, pt) in points.iter().enumerate() {
        let (a, b) = rs_to_ab(pt[0], pt[1]);
        for (m, &(i, j)) in modes.iter().enumerate() {
            let (dr, ds) = grad_simplex_p(a, b, i, j);
            vr[(p, m)] = dr;
            vs[(p, m)] = ds;
        }
    }
    (vr, vs)
}

/// Equispaced lattice of degree `n` on the reference triangle, row by row in s.
pub fn equispaced_nodes(n: usize) -> Vec<[f64; 2]> {
    if n == 0 {
        return vec![[-1.0 / 3.0, -1.0 / 3.0]];
    }
    let mut out = Vec::with_capacity(num_modes(n));
    for j in 0..=n {
        for i in 0..=n - j {
            out.push([
                -1.0 + 2.0 * i as f64 / n as f64,
                -1.0 + 2.0 * j as f64 / n as f64,
            ]);
        }
    }
    out
}

/// Index of lattice node (i, j) in [`equispaced_nodes`] order.
pub fn equispaced_index(n: usize, i: usize, j: usize) -> usize {
    // rows 0..j hold (n+1) + n + ... + (n+2-j) nodes
    j * (n + 1) - j * (j.saturating_sub(1)) / 2 + i
}

/// All reference-element matrices for degree N on a given pair of rules.
#[derive(Clone, Debug)]
pub struct RefOperators {
    pub n: usize,
    pub np: usize,
    pub vol: Quadrature2D,
    pub surf: SurfaceQuadrature,
    /// Basis values at volume points (Nq x Np).
    pub vq: Mat,
    /// Basis values at surface points (Nf x Np).
    pub vf: Mat,
    /// `[Vq; Vf]`.
    pub vh: Mat,
    /// Modal differentiation matrices.
    pub dr: Mat,
    pub ds: Mat,
    pub m: Mat,
    pub m_inv: Mat,
    /// Quadrature L2 projection (Np x Nq).
    pub pq: Mat,
    /// Extrapolation from volume to surface points (Nf x Nq).
    pub e: Mat,
    /// Nodal differentiation matrices (Nq x Nq).
    pub qr: Mat,
    pub qs: Mat,
    /// Diagonals of `Wf diag(n_r)` and `Wf diag(n_s)`.
    pub br: Vec<f64>,
    pub bs: Vec<f64>,
    /// Hybridized operators on volume+surface points.
    pub qh_r: Mat,
    pub qh_s: Mat,
    /// `Qh - Qh^T`.
    pub qh_skew_r: Mat,
    pub qh_skew_s: Mat,
}

impl RefOperators {
    pub fn nq(&self) -> usize {
        self.vol.len()
    }

    pub fn nf(&self) -> usize {
        self.surf.len()
    }

    pub fn nh(&self) -> usize {
        self.nq() + self.nf()
    }

    /// Default operators: volume rule exact to 2N, (N+1)-point Gauss faces.
    pub fn new(n: usize) -> Result<Self> {
        build_ref_operators(
            n,
            &quadrature::volume_rule(n)?,
            &quadrature::surface_rule(n)?,
        )
    }

    /// Operators on a boundary-inclusive rule and its embedded face rule.
    pub fn on_sbp_rule(sbp: &SbpQuadrature) -> Result<Self> {
        build_ref_operators(sbp.degree, &sbp.volume, &sbp.surface)
    }

    /// Residuals of the defining matrix identities, by name.
    pub fn identity_residuals(&self) -> Vec<(&'static str, f64)> {
        let nq = self.nq();
        let nh = self.nh();
        let mut out = Vec::new();
        out.push((
            "Pq*Vq = I",
            self.pq
                .matmul(&self.vq)
                .sub(&Mat::identity(self.np))
                .max_abs(),
        ));
        let msym = self.m.sub(&self.m.transpose()).max_abs();
        let mpos = if self.m.min_symmetric_eigenvalue() > 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        out.push(("M symmetric positive definite", msym + mpos));
        for (name, q, b, qh, sk) in [
            ("r", &self.qr, &self.br, &self.qh_r, &self.qh_skew_r),
            ("s", &self.qs, &self.bs, &self.qh_s, &self.qh_skew_s),
        ] {
            let etbe = self.e.transpose().matmul(&self.e.scale_rows(b));
            out.push((
                if name == "r" {
                    "Qr + Qr^T = E^T Br E"
                } else {
                    "Qs + Qs^T = E^T Bs E"
                },
                q.add(&q.transpose()).sub(&etbe).max_abs(),
            ));
            let mut bd = Mat::zeros(nh, nh);
            for (f, bf) in b.iter().enumerate() {
                bd[(nq + f, nq + f)] = *bf;
            }
            out.push((
                if name == "r" {
                    "Qh_r + Qh_r^T = diag(0, Br)"
                } else {
                    "Qh_s + Qh_s^T = diag(0, Bs)"
                },
                qh.add(&qh.transpose()).sub(&bd).max_abs(),
            ));
            let ones = vec![1.0; nh];
            let r1 = qh.matvec(&ones).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            out.push((
                if name == "r" {
                    "Qh_r * 1 = 0"
                } else {
                    "Qh_s * 1 = 0"
                },
                r1,
            ));
            let nf = self.nf();
            let lr = sk.block(nq, nq, nf, nf).max_abs();
            out.push((
                if name == "r" {
                    "Qh_skew_r surface block = 0"
                } else {
                    "Qh_skew_s surface block = 0"
                },
                lr,
            ));
        }
        out
    }
}

/// Builds every reference operator from a volume and a surface rule.
pub fn build_ref_operators(
    n: usize,
    vol: &Quadrature2D,
    surf: &SurfaceQuadrature,
) -> Result<RefOperators> {
    let vrep = verify_exactness(vol, (2 * n).saturating_sub(1));
    if !vrep.pass {
        return Err(Error::Exactness {
            what: format!("volume rule below degree {}", 2 * n - 1),
            max_error: vrep.max_error,
        });
    }
    let srep = verify_surface_exactness(surf, 2 * n);
    if !srep.pass {
        return Err(Error::Exactness {
            what: format!("surface rule below degree {}", 2 * n),
            max_error: srep.max_error,
        });
    }
    let np = num_modes(n);
    let nq = vol.len();
    let nf = surf.len();
    let vq = basis_vandermonde(n, &vol.points);
    let vf = basis_vandermonde(n, &surf.points);
    let (vqr, vqs) = grad_vandermonde(n, &vol.points);
    let vt_w = vq.transpose().scale_cols(&vol.weights);
    let m = vt_w.matmul(&vq);
    let m_inv = m
        .inverse()
        .map_err(|_| Error::Operator("volume rule gives a singular mass matrix".into()))?;
    let pq = m_inv.matmul(&vt_w);
    let dr = pq.matmul(&vqr);
    let ds = pq.matmul(&vqs);
    let e = vf.matmul(&pq);
    // Q = Pq^T M D Pq
    let qr = pq.transpose().matmul(&m.matmul(&dr)).matmul(&pq);
    let qs = pq.transpose().matmul(&m.matmul(&ds)).matmul(&pq);
    let br: Vec<f64> = (0..nf)
        .map(|i| surf.weights[i] * surf.normal(i)[0])
        .collect();
    let bs: Vec<f64> = (0..nf)
        .map(|i| surf.weights[i] * surf.normal(i)[1])
        .collect();
    let hyb = |q: &Mat, b: &[f64]| -> Mat {
        let mut qh = Mat::zeros(nq + nf, nq + nf);
        qh.set_block(0, 0, &q.sub(&q.transpose()).scale(0.5));
        let be = e.scale_rows(b);
        qh.set_block(0, nq, &be.transpose().scale(0.5));
        qh.set_block(nq, 0, &be.scale(-0.5));
        for (f, bf) in b.iter().enumerate() {
            qh[(nq + f, nq + f)] = 0.5 * bf;
        }
        qh
    };
    let qh_r = hyb(&qr, &br);
    let qh_s = hyb(&qs, &bs);
    let qh_skew_r = qh_r.sub(&qh_r.transpose());
    let qh_skew_s = qh_s.sub(&qh_s.transpose());
    Ok(RefOperators {
        n,
        np,
        vol: vol.clone(),
        surf: surf.clone(),
        vh: Mat::vstack(&vq, &vf),
        vq,
        vf,
        dr,
        ds,
        m,
        m_inv,
        pq,
        e,
        qr,
        qs,
        br,
        bs,
        qh_r,
        qh_s,
        qh_skew_r,
        qh_skew_s,
    })
}

/// Diagonal-norm SBP operators at the nodes of a boundary-inclusive rule.
#[derive(Clone, Debug)]
pub struct TraditionalSbp {
    pub n: usize,
    /// Diagonal of the norm matrix (the rule weights).
    pub m: Vec<f64>,
    pub q_r: Mat,
    pub q_s: Mat,
    /// `Q - Q^T`.
    pub s_r: Mat,
    pub s_s: Mat,
    /// `I_f^T B I_f`.
    pub b_r: Mat,
    pub b_s: Mat,
    /// Row f of I_f selects volume node `face_nodes[f]`.
    pub face_nodes: Vec<usize>,
    pub rule: SbpQuadrature,
}

/// Forms `Q_SBP = [I; I_f]^T Qh [I; I_f]` for both directions.
pub fn build_traditional_sbp(ops: &RefOperators, sbp: &SbpQuadrature) -> Result<TraditionalSbp> {
    let nq = sbp.volume.len();
    if ops.nq() != nq || ops.nf() != sbp.surface.len() || ops.vol.points != sbp.volume.points {
        return Err(Error::SelectionMismatch(
            "operators were not built on this SBP rule".into(),
        ));
    }
    if sbp.face_nodes.len() != ops.nf() {
        return Err(Error::SelectionMismatch(format!(
            "{} selected nodes for {} surface points",
            sbp.face_nodes.len(),
            ops.nf()
        )));
    }
    for (f, &v) in sbp.face_nodes.iter().enumerate() {
        if v >= nq {
            return Err(Error::SelectionMismatch(format!(
                "face node {v} out of range"
            )));
        }
        let (p, q) = (ops.surf.points[f], sbp.volume.points[v]);
        if (p[0] - q[0]).abs().max((p[1] - q[1]).abs()) > 1e-12 {
            return Err(Error::SelectionMismatch(format!(
                "surface point {f} does not coincide with volume node {v}"
            )));
        }
    }
    // Z = [I; I_f] as an (Nq+Nf) x Nq matrix
    let mut z = Mat::zeros(ops.nh(), nq);
    for i in 0..nq {
        z[(i, i)] = 1.0;
    }
    for (f, &v) in sbp.face_nodes.iter().enumerate() {
        z[(nq + f, v)] = 1.0;
    }
    let zt = z.transpose();
    let q_r = zt.matmul(&ops.qh_r).matmul(&z);
    let q_s = zt.matmul(&ops.qh_s).matmul(&z);
    let ift = |b: &[f64]| {
        let mut out = Mat::zeros(nq, nq);
        for (f, &v) in sbp.face_nodes.iter().enumerate() {
            out[(v, v)] += b[f];
        }
        out
    };
    Ok(TraditionalSbp {
        n: ops.n,
        m: sbp.volume.weights.clone(),
        s_r: q_r.sub(&q_r.transpose()),
        s_s: q_s.sub(&q_s.transpose()),
        q_r,
        q_s,
        b_r: ift(&ops.br),
        b_s: ift(&ops.bs),
        face_nodes: sbp.face_nodes.clone(),
        rule: sbp.clone(),
    })
}

impl TraditionalSbp {
    pub fn nq(&self) -> usize {
        self.m.len()
    }

    /// `M^{-1} Q` for direction 0 (r) or 1 (s).
    pub fn derivative(&self, dir: usize) -> Mat {
        let inv: Vec<f64> = self.m.iter().map(|w| 1.0 / w).collect();
        if dir == 0 {
            self.q_r.scale_rows(&inv)
        } else {
            self.q_s.scale_rows(&inv)
        }
    }

    pub fn identity_residuals(&self) -> Vec<(&'static str, f64)> {
        let nq = self.nq();
        let ones = vec![1.0; nq];
        let one_res = |q: &Mat| q.matvec(&ones).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        vec![
            (
                "Q_SBP_r + Q_SBP_r^T = I_f^T Br I_f",
                self.q_r.add(&self.q_r.transpose()).sub(&self.b_r).max_abs(),
            ),
            (
                "Q_SBP_s + Q_SBP_s^T = I_f^T Bs I_f",
                self.q_s.add(&self.q_s.transpose()).sub(&self.b_s).max_abs(),
            ),
            ("Q_SBP_r * 1 = 0", one_res(&self.q_r)),
            ("Q_SBP_s * 1 = 0", one_res(&self.q_s)),
        ]
    }
}

//! Cost of flux differencing against a plain matrix-vector product.
//!
//! Both kernels apply one dense `n x n` matrix per element to a field of
//! shallow water states. The DG kernel evaluates `n` fluxes and multiplies;
//! the flux differencing kernel evaluates `n^2` two-point fluxes.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::Mat;
use crate::par;
use crate::swe::{self, Cons, Dir, Prim};

/// Gravity used by the benchmark states.
pub const BENCH_G: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kernel {
    MatVec,
    FluxDiff,
    FluxDiffSkew,
}

impl std::fmt::Display for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Kernel::MatVec => "matvec",
            Kernel::FluxDiff => "flux-diff",
            Kernel::FluxDiffSkew => "flux-diff-skew",
        })
    }
}

/// Random inputs for one matrix size.
#[derive(Clone, Debug)]
pub struct KernelCase {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub q: Mat,
    pub states: Vec<Cons>,
}

impl KernelCase {
    /// Matrix entries in [-1, 1], heights in [0.5, 2], velocities in [-1, 1].
    pub fn generate(n: usize, k: usize, seed: u64) -> Self {
        assert!(n >= 2, "matrix size must be at least 2");
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let q = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let states = random_states(&mut rng, n * k);
        KernelCase {
            n,
            k,
            seed,
            q,
            states,
        }
    }
}

pub fn random_states(rng: &mut impl Rng, len: usize) -> Vec<Cons> {
    (0..len)
        .map(|_| {
            let h: f64 = rng.gen_range(0.5..2.0);
            [
                h,
                h * rng.gen_range(-1.0..1.0),
                h * rng.gen_range(-1.0..1.0),
            ]
        })
        .collect()
}

fn drive(exec: Exec, out: &mut [Cons], n: usize, f: impl Fn(usize, &mut [Cons]) + Sync + Send) {
    match exec {
        Exec::Sequential => out.chunks_mut(n).enumerate().for_each(|(k, c)| f(k, c)),
        Exec::Parallel => par::for_each_chunk(out, n, f),
    }
}

#[inline(always)]
fn flux_x(p: &Prim, g: f64) -> Cons {
    [p.hu, p.hu * p.u + 0.5 * g * p.h2, p.hu * p.v]
}

#[inline(always)]
fn ec_flux_x(l: &Prim, r: &Prim, g: f64) -> Cons {
    let hu = 0.5 * (l.hu + r.hu);
    let u = 0.5 * (l.u + r.u);
    let v = 0.5 * (l.v + r.v);
    let h = 0.5 * (l.h + r.h);
    let p = g * h * h - 0.25 * g * (l.h2 + r.h2);
    [hu, hu * u + p, hu * v]
}

/// Per element `y = Q f(u)` with `f` the x-flux.
pub fn kernel_matvec(q: &Mat, states: &[Cons], g: f64, out: &mut [Cons], exec: Exec) {
    let n = q.rows();
    drive(exec, out, n, |k, y| {
        let u = &states[k * n..(k + 1) * n];
        let f: Vec<Cons> = u.iter().map(|c| flux_x(&Prim::new(*c), g)).collect();
        for (i, yi) in y.iter_mut().enumerate() {
            let row = q.row(i);
            let mut acc = [0.0; 3];
            for (qij, fj) in row.iter().zip(&f) {
                acc[0] += qij * fj[0];
                acc[1] += qij * fj[1];
                acc[2] += qij * fj[2];
            }
            *yi = acc;
        }
    });
}

/// Per element `y_i = sum_j 2 Q_ij f_S(u_i, u_j)`.
pub fn kernel_fluxdiff(q: &Mat, states: &[Cons], g: f64, out: &mut [Cons], exec: Exec) {
    let n = q.rows();
    drive(exec, out, n, |k, y| {
        let p: Vec<Prim> = states[k * n..(k + 1) * n]
            .iter()
            .map(|c| Prim::new(*c))
            .collect();
        for (i, yi) in y.iter_mut().enumerate() {
            let row = q.row(i);
            let mut acc = [0.0; 3];
            for (qij, pj) in row.iter().zip(&p) {
                let f = ec_flux_x(&p[i], pj, g);
                let c = 2.0 * qij;
                acc[0] += c * f[0];
                acc[1] += c * f[1];
                acc[2] += c * f[2];
            }
            *yi = acc;
        }
    });
}

/// Flux differencing with a skew-symmetric `q` whose trailing
/// `n - n_vol` square block is zero. Each pair is visited once.
pub fn kernel_fluxdiff_skew(
    q: &Mat,
    n_vol: usize,
    states: &[Cons],
    g: f64,
    out: &mut [Cons],
    exec: Exec,
) {
    let n = q.rows();
    drive(exec, out, n, |k, y| {
        let p: Vec<Prim> = states[k * n..(k + 1) * n]
            .iter()
            .map(|c| Prim::new(*c))
            .collect();
        y.iter_mut().for_each(|v| *v = [0.0; 3]);
        for i in 0..n_vol {
            let row = q.row(i);
            for j in i + 1..n {
                let f = ec_flux_x(&p[i], &p[j], g);
                let c = 2.0 * row[j];
                for m in 0..3 {
                    y[i][m] += c * f[m];
                    y[j][m] -= c * f[m];
                }
            }
        }
    });
}

/// Triple loop oracle for [`kernel_matvec`].
pub fn naive_matvec(q: &Mat, states: &[Cons], g: f64) -> Vec<Cons> {
    let n = q.rows();
    let mut out = vec![[0.0; 3]; states.len()];
    for k in 0..states.len() / n {
        for i in 0..n {
            for j in 0..n {
                let f = swe::flux(states[k * n + j], g, Dir::X).expect("admissible state");
                for m in 0..3 {
                    out[k * n + i][m] += q[(i, j)] * f[m];
                }
            }
        }
    }
    out
}

/// Double loop oracle for [`kernel_fluxdiff`].
pub fn naive_fluxdiff(q: &Mat, states: &[Cons], g: f64) -> Vec<Cons> {
    let n = q.rows();
    let mut out = vec![[0.0; 3]; states.len()];
    for k in 0..states.len() / n {
        for i in 0..n {
            for j in 0..n {
                let f = swe::ec_flux(states[k * n + i], states[k * n + j], g, Dir::X)
                    .expect("admissible state");
                for m in 0..3 {
                    out[k * n + i][m] += 2.0 * q[(i, j)] * f[m];
                }
            }
        }
    }
    out
}

/// Skew-symmetric matrix with a zero trailing block, as produced by the
/// hybridized operators.
pub fn block_skew(n: usize, n_vol: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Mat::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if i < n_vol {
                let x = rng.gen_range(-1.0..1.0);
                q[(i, j)] = x;
                q[(j, i)] = -x;
            }
        }
    }
    q
}

/// Timing settings for [`ratio_sweep`].
#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    /// Starting element count; raised until one DG run takes `min_run_secs`.
    pub k: usize,
    pub threads: usize,
    pub seed: u64,
    pub warmups: usize,
    pub reps: usize,
    pub min_run_secs: f64,
}

pub const DEFAULT_SIZES: [usize; 9] = [6, 10, 15, 21, 28, 36, 50, 100, 200];

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            sizes: DEFAULT_SIZES.to_vec(),
            k: 64,
            threads: 0,
            seed: 1,
            warmups: 2,
            reps: 5,
            min_run_secs: 2e-3,
        }
    }
}

/// Timing of both kernels at one matrix size.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioReport {
    pub n: usize,
    pub k: usize,
    pub reps: usize,
    pub t_esdg: f64,
    pub t_dg: f64,
    pub ratio: f64,
    /// (max - min) / median over the repetitions, per kernel.
    pub spread_esdg: f64,
    pub spread_dg: f64,
}

fn median_and_spread(mut t: Vec<f64>) -> (f64, f64) {
    t.sort_by(f64::total_cmp);
    let m = t.len();
    let med = if m % 2 == 1 {
        t[m / 2]
    } else {
        0.5 * (t[m / 2 - 1] + t[m / 2])
    };
    (med, (t[m - 1] - t[0]) / med)
}

fn time_runs(warmups: usize, reps: usize, mut f: impl FnMut()) -> Vec<f64> {
    for _ in 0..warmups {
        f();
    }
    (0..reps)
        .map(|_| {
            let t0 = Instant::now();
            f();
            t0.elapsed().as_secs_f64()
        })
        .collect()
}

/// Median timings of flux differencing and matvec for each size.
pub fn ratio_sweep(cfg: &SweepConfig) -> Vec<RatioReport> {
    let warmups = cfg.warmups.max(2);
    let reps = cfg.reps.max(5);
    par::with_threads(cfg.threads, || {
        cfg.sizes
            .iter()
            .map(|&n| {
                let mut k = cfg.k.max(1);
                let mut case = KernelCase::generate(n, k, cfg.seed);
                let mut out = vec![[0.0; 3]; n * k];
                // grow K until a single DG run is well above timer resolution
                loop {
                    let t0 = Instant::now();
                    kernel_matvec(&case.q, &case.states, BENCH_G, &mut out, Exec::Parallel);
                    if t0.elapsed().as_secs_f64() >= cfg.min_run_secs || k >= 1 << 22 {
                        break;
                    }
                    k *= 2;
                    case = KernelCase::generate(n, k, cfg.seed);
                    out = vec![[0.0; 3]; n * k];
                }
                let dg = time_runs(warmups, reps, || {
                    kernel_matvec(&case.q, &case.states, BENCH_G, &mut out, Exec::Parallel);
                    std::hint::black_box(&out);
                });
                let esdg = time_runs(warmups, reps, || {
                    kernel_fluxdiff(&case.q, &case.states, BENCH_G, &mut out, Exec::Parallel);
                    std::hint::black_box(&out);
                });
                let (t_dg, spread_dg) = median_and_spread(dg);
                let (t_esdg, spread_esdg) = median_and_spread(esdg);
                RatioReport {
                    n,
                    k,
                    reps,
                    t_esdg,
                    t_dg,
                    ratio: t_esdg / t_dg,
                    spread_esdg,
                    spread_dg,
                }
            })
            .collect()
    })
}

/// Last three ratios are within `tol` (relative to the smallest) of each other.
pub fn plateau(reports: &[RatioReport], tol: f64) -> bool {
    if reports.len() < 3 {
        return false;
    }
    let last = &reports[reports.len() - 3..];
    let lo = last.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let hi = last.iter().map(|r| r.ratio).fold(0.0, f64::max);
    hi <= (1.0 + tol) * lo
}

pub fn ratio_csv(reports: &[RatioReport]) -> String {
    let mut s = String::from("n,K,reps,t_esdg,t_dg,ratio,spread_esdg,spread_dg\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{:.6e},{:.6e},{:.4},{:.3},{:.3}",
            r.n, r.k, r.reps, r.t_esdg, r.t_dg, r.ratio, r.spread_esdg, r.spread_dg
        );
    }
    s
}

/// Largest absolute difference between two state fields.
pub fn max_diff(a: &[Cons], b: &[Cons]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matvec_is_flux() {
        let case = KernelCase::generate(6, 3, 4);
        let mut out = vec![[0.0; 3]; 18];
        kernel_matvec(
            &Mat::identity(6),
            &case.states,
            BENCH_G,
            &mut out,
            Exec::Sequential,
        );
        for (u, y) in case.states.iter().zip(&out) {
            let f = swe::flux(*u, BENCH_G, Dir::X).unwrap();
            assert!(max_diff(&[f], &[*y]) < 1e-15);
        }
    }

    #[test]
    fn rest_state_matvec() {
        let q = KernelCase::generate(5, 1, 2).q;
        let mut out = vec![[0.0; 3]; 5];
        kernel_matvec(
            &q,
            &[[1.0, 0.0, 0.0]; 5],
            BENCH_G,
            &mut out,
            Exec::Sequential,
        );
        for i in 0..5 {
            let s: f64 = q.row(i).iter().sum();
            assert!(max_diff(&[out[i]], &[[0.0, 0.5 * s, 0.0]]) < 1e-14);
        }
    }

    #[test]
    fn kernels_match_oracles() {
        for n in [2, 7, 15] {
            let case = KernelCase::generate(n, 9, 11);
            let mut out = vec![[0.0; 3]; n * 9];
            for exec in [Exec::Sequential, Exec::Parallel] {
                kernel_matvec(&case.q, &case.states, BENCH_G, &mut out, exec);
                assert!(max_diff(&out, &naive_matvec(&case.q, &case.states, BENCH_G)) < 1e-12);
                kernel_fluxdiff(&case.q, &case.states, BENCH_G, &mut out, exec);
                assert!(max_diff(&out, &naive_fluxdiff(&case.q, &case.states, BENCH_G)) < 1e-12);
            }
        }
    }

    #[test]
    fn equal_states_with_zero_row_sums_vanish() {
        let mut q = KernelCase::generate(6, 1, 3).q;
        for i in 0..6 {
            let s: f64 = q.row(i).iter().sum();
            q[(i, i)] -= s;
        }
        let mut out = vec![[0.0; 3]; 6];
        kernel_fluxdiff(
            &q,
            &[[1.3, 0.2, -0.4]; 6],
            BENCH_G,
            &mut out,
            Exec::Sequential,
        );
        assert!(max_diff(&out, &[[0.0; 3]; 6]) < 1e-13);
    }

    #[test]
    fn skew_variant_matches_full() {
        let (n, nv) = (16, 10);
        let q = block_skew(n, nv, 5);
        let case = KernelCase::generate(n, 4, 6);
        let mut a = vec![[0.0; 3]; n * 4];
        let mut b = a.clone();
        kernel_fluxdiff(&q, &case.states, BENCH_G, &mut a, Exec::Parallel);
        kernel_fluxdiff_skew(&q, nv, &case.states, BENCH_G, &mut b, Exec::Sequential);
        assert!(max_diff(&a, &b) < 1e-12);
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let case = KernelCase::generate(10, 17, 8);
        let run = |t| {
            par::with_threads(t, || {
                let mut out = vec![[0.0; 3]; 170];
                kernel_fluxdiff(&case.q, &case.states, BENCH_G, &mut out, Exec::Parallel);
                out
            })
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn inputs_are_reproducible() {
        let a = KernelCase::generate(6, 2, 9);
        let b = KernelCase::generate(6, 2, 9);
        assert_eq!(a.states, b.states);
        assert_eq!(a.q.as_slice(), b.q.as_slice());
        assert!(a.states.iter().all(|c| (0.5..2.0).contains(&c[0])));
    }

    #[test]
    fn short_sweep_reports_positive_times() {
        let cfg = SweepConfig {
            sizes: vec![4, 8],
            k: 4,
            min_run_secs: 1e-5,
            ..SweepConfig::default()
        };
        let r = ratio_sweep(&cfg);
        assert_eq!(r.len(), 2);
        assert!(r
            .iter()
            .all(|x| x.t_dg > 0.0 && x.t_esdg > 0.0 && x.reps >= 5));
        assert_eq!(ratio_csv(&r).lines().count(), 3);
    }
}

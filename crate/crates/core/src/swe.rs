//! Shallow water physics: variables, fluxes, entropy and boundary states.
//!
//! States are conservative triples `[h, hu, hv]`.

use crate::error::{Error, Result};

pub type Cons = [f64; 3];

/// Direction of a flux component.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dir {
    X,
    Y,
}

fn check_h(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveHeight { h })
    }
}

/// Entropy variables `(g(h+b) - |u|^2/2, u, v)`.
pub fn entropy_vars(u: Cons, b: f64, g: f64) -> Result<Cons> {
    check_h(u[0])?;
    Ok(entropy_vars_unchecked(u, b, g))
}

#[inline]
pub fn entropy_vars_unchecked(u: Cons, b: f64, g: f64) -> Cons {
    let vx = u[1] / u[0];
    let vy = u[2] / u[0];
    [g * (u[0] + b) - 0.5 * (vx * vx + vy * vy), vx, vy]
}

/// Inverse of [`entropy_vars`].
pub fn cons_from_entropy(v: Cons, b: f64, g: f64) -> Result<Cons> {
    let u = cons_from_entropy_unchecked(v, b, g);
    check_h(u[0])?;
    Ok(u)
}

#[inline]
pub fn cons_from_entropy_unchecked(v: Cons, b: f64, g: f64) -> Cons {
    let h = (v[0] + 0.5 * (v[1] * v[1] + v[2] * v[2])) / g - b;
    [h, h * v[1], h * v[2]]
}

/// Total energy `h|u|^2/2 + g h^2/2 + g h b`.
pub fn entropy(u: Cons, b: f64, g: f64) -> Result<f64> {
    check_h(u[0])?;
    Ok(entropy_unchecked(u, b, g))
}

#[inline]
pub fn entropy_unchecked(u: Cons, b: f64, g: f64) -> f64 {
    let h = u[0];
    0.5 * (u[1] * u[1] + u[2] * u[2]) / h + 0.5 * g * h * h + g * h * b
}

/// Physical flux in one direction.
pub fn flux(u: Cons, g: f64, dir: Dir) -> Result<Cons> {
    check_h(u[0])?;
    let (h, hu, hv) = (u[0], u[1], u[2]);
    let p = 0.5 * g * h * h;
    Ok(match dir {
        Dir::X => [hu, hu * hu / h + p, hu * hv / h],
        Dir::Y => [hv, hu * hv / h, hv * hv / h + p],
    })
}

/// Entropy flux `F = (S + g h^2/2) u_n`, used to cross-check the potential.
pub fn entropy_flux(u: Cons, b: f64, g: f64, dir: Dir) -> Result<f64> {
    let s = entropy(u, b, g)?;
    let h = u[0];
    let vel = match dir {
        Dir::X => u[1] / h,
        Dir::Y => u[2] / h,
    };
    Ok((s + 0.5 * g * h * h) * vel)
}

/// Entropy potential `psi = v^T f - F = g h^2 u_n / 2`.
pub fn entropy_potential(u: Cons, g: f64, dir: Dir) -> Result<f64> {
    check_h(u[0])?;
    let h = u[0];
    let m = match dir {
        Dir::X => u[1],
        Dir::Y => u[2],
    };
    Ok(0.5 * g * h * m)
}

/// Point data used by the two-point flux; computed once per node.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Prim {
    pub h: f64,
    pub u: f64,
    pub v: f64,
    pub hu: f64,
    pub hv: f64,
    pub h2: f64,
}

impl Prim {
    #[inline]
    pub fn new(c: Cons) -> Prim {
        let h = c[0];
        Prim {
            h,
            u: c[1] / h,
            v: c[2] / h,
            hu: c[1],
            hv: c[2],
            h2: h * h,
        }
    }
}

/// Both entropy conservative fluxes between two prepared states.
#[inline(always)]
pub fn ec_flux_xy(l: &Prim, r: &Prim, g: f64) -> (Cons, Cons) {
    let hu = 0.5 * (l.hu + r.hu);
    let hv = 0.5 * (l.hv + r.hv);
    let u = 0.5 * (l.u + r.u);
    let v = 0.5 * (l.v + r.v);
    let h = 0.5 * (l.h + r.h);
    let p = g * h * h - 0.25 * g * (l.h2 + r.h2);
    let huv = hu * v;
    ([hu, hu * u + p, huv], [hv, hv * u, hv * v + p])
}

/// Entropy conservative two-point flux.
pub fn ec_flux(ul: Cons, ur: Cons, g: f64, dir: Dir) -> Result<Cons> {
    check_h(ul[0])?;
    check_h(ur[0])?;
    let (fx, fy) = ec_flux_xy(&Prim::new(ul), &Prim::new(ur), g);
    Ok(match dir {
        Dir::X => fx,
        Dir::Y => fy,
    })
}

/// Local wave speed bound `max(|u_n| + sqrt(g h))` over both states.
#[inline]
pub fn max_wave_speed(l: &Prim, r: &Prim, n: [f64; 2], g: f64) -> f64 {
    let cl = (l.u * n[0] + l.v * n[1]).abs() + (g * l.h).sqrt();
    let cr = (r.u * n[0] + r.v * n[1]).abs() + (g * r.h).sqrt();
    cl.max(cr)
}

/// Lax-Friedrichs dissipation `lambda/2 (uR - uL)`.
pub fn lf_penalty(ul: Cons, ur: Cons, g: f64, n: [f64; 2]) -> Result<Cons> {
    check_h(ul[0])?;
    check_h(ur[0])?;
    let lam = max_wave_speed(&Prim::new(ul), &Prim::new(ur), n, g);
    Ok([
        0.5 * lam * (ur[0] - ul[0]),
        0.5 * lam * (ur[1] - ul[1]),
        0.5 * lam * (ur[2] - ul[2]),
    ])
}

/// Reflective wall exterior state: normal velocity flipped, h kept.
#[inline]
pub fn wall_ghost(u: Cons, n: [f64; 2]) -> Cons {
    let mn = u[1] * n[0] + u[2] * n[1];
    [u[0], u[1] - 2.0 * mn * n[0], u[2] - 2.0 * mn * n[1]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn entropy_variable_examples() {
        assert_eq!(
            entropy_vars([1.0, 0.0, 0.0], 0.0, 1.0).unwrap(),
            [1.0, 0.0, 0.0]
        );
        assert_eq!(
            entropy_vars([1.0, 2.0, 3.0], 0.0, 1.0).unwrap(),
            [-5.5, 2.0, 3.0]
        );
        let v0 = entropy_vars([1.3, 0.2, 0.1], 0.0, 9.81).unwrap();
        let v1 = entropy_vars([1.3, 0.2, 0.1], 1.0, 9.81).unwrap();
        assert!(close(v1[0] - v0[0], 9.81, 1e-15));
        assert_eq!(
            cons_from_entropy([2.5, 0.0, 0.0], 0.0, 1.0).unwrap(),
            [2.5, 0.0, 0.0]
        );
        assert!(entropy_vars([0.0, 1.0, 0.0], 0.0, 1.0).is_err());
        assert!(cons_from_entropy([-1.0, 0.0, 0.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy([2.0, 0.0, 0.0], 0.0, 1.0).unwrap(), 2.0);
        let s0 = entropy([1.5, 0.3, 0.0], 0.0, 2.0).unwrap();
        let s1 = entropy([1.5, 0.3, 0.0], 1.0, 2.0).unwrap();
        assert!(close(s1 - s0, 2.0 * 1.5, 1e-15));
    }

    #[test]
    fn entropy_hessian_is_positive_definite() {
        let u0 = [1.0, 0.3, -0.2];
        let e = 1e-4;
        let mut hess = crate::linalg::Mat::zeros(3, 3);
        let s = |u: Cons| entropy(u, 0.0, 1.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let shift = |di: f64, dj: f64| {
                    let mut u = u0;
                    u[i] += di;
                    u[j] += dj;
                    s(u)
                };
                hess[(i, j)] =
                    (shift(e, e) - shift(e, -e) - shift(-e, e) + shift(-e, -e)) / (4.0 * e * e);
            }
        }
        assert!(hess.min_symmetric_eigenvalue() > 0.0);
    }

    #[test]
    fn flux_examples() {
        assert_eq!(flux([1.0, 0.0, 0.0], 1.0, Dir::X).unwrap(), [0.0, 0.5, 0.0]);
        let fy = flux([1.2, 0.3, -0.7], 2.0, Dir::Y).unwrap();
        let fx = flux([1.2, -0.7, 0.3], 2.0, Dir::X).unwrap();
        assert_eq!(fy, [fx[0], fx[2], fx[1]]);
    }

    #[test]
    fn ec_flux_example() {
        let f = ec_flux([1.0, 0.0, 0.0], [2.0, 2.0, 0.0], 1.0, Dir::X).unwrap();
        assert!(close(f[0], 1.0, 1e-15) && close(f[1], 1.5, 1e-15) && f[2] == 0.0);
    }

    #[test]
    fn lf_examples() {
        let l = Prim::new([4.0, 4.0, 0.0]);
        assert_eq!(max_wave_speed(&l, &l, [1.0, 0.0], 1.0), 3.0);
        assert_eq!(
            lf_penalty([1.0, 0.0, 0.0], [1.0, 0.0, 0.0], 1.0, [0.0, 1.0]).unwrap(),
            [0.0; 3]
        );
    }

    #[test]
    fn wall_examples() {
        assert_eq!(wall_ghost([1.0, 1.0, 0.0], [1.0, 0.0]), [1.0, -1.0, 0.0]);
        assert_eq!(wall_ghost([1.0, 0.0, 1.0], [1.0, 0.0]), [1.0, 0.0, 1.0]);
        let n = [0.6, 0.8];
        let u = [2.0, 0.3, -1.1];
        let back = wall_ghost(wall_ghost(u, n), n);
        for k in 0..3 {
            assert!(close(back[k], u[k], 1e-15));
        }
    }

    #[test]
    fn potential_examples() {
        assert_eq!(
            entropy_potential([1.0, 0.0, 0.0], 1.0, Dir::X).unwrap(),
            0.0
        );
        assert_eq!(
            entropy_potential([2.0, 6.0, 0.0], 1.0, Dir::X).unwrap(),
            6.0
        );
    }

    fn state() -> impl Strategy<Value = Cons> {
        (0.1f64..5.0, -3.0f64..3.0, -3.0f64..3.0).prop_map(|(h, u, v)| [h, h * u, h * v])
    }

    proptest! {
        #[test]
        fn roundtrip(u in state(), b in -1.0f64..1.0, g in 0.5f64..10.0) {
            let back = cons_from_entropy(entropy_vars(u, b, g).unwrap(), b, g).unwrap();
            for k in 0..3 {
                prop_assert!(close(back[k], u[k], 1e-12));
            }
        }

        #[test]
        fn ec_flux_is_consistent_and_symmetric(ul in state(), ur in state(), g in 0.5f64..10.0) {
            for dir in [Dir::X, Dir::Y] {
                let f = flux(ul, g, dir).unwrap();
                let fs = ec_flux(ul, ul, g, dir).unwrap();
                let a = ec_flux(ul, ur, g, dir).unwrap();
                let b = ec_flux(ur, ul, g, dir).unwrap();
                for k in 0..3 {
                    prop_assert!(close(f[k], fs[k], 1e-13));
                    prop_assert!(close(a[k], b[k], 1e-14));
                }
            }
        }

        #[test]
        fn potential_identity(u in state(), g in 0.5f64..10.0) {
            for dir in [Dir::X, Dir::Y] {
                let v = entropy_vars(u, 0.0, g).unwrap();
                let f = flux(u, g, dir).unwrap();
                let vf = v[0] * f[0] + v[1] * f[1] + v[2] * f[2];
                let psi = vf - entropy_flux(u, 0.0, g, dir).unwrap();
                let scale = vf.abs().max(1.0);
                prop_assert!((psi - entropy_potential(u, g, dir).unwrap()).abs() <= 1e-12 * scale);
            }
        }
    }
}

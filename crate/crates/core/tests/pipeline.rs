use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swe_esdg::diagnostics::{invariants, lake_bathymetry, vortex_setup, Problem, VortexParams};
use swe_esdg::mesh::{read_mesh, write_mesh, Periodicity};
use swe_esdg::quadrature::EdgeFamily;
use swe_esdg::solver::{run, Discretization, Penalty, Scheme};

fn random_state(disc: &Discretization, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = disc.project(|x, y| [2.0 + 0.2 * (x * 3.0).sin() * y.cos(), 0.3 * y, -0.2 * x]);
    for c in u.iter_mut().flatten() {
        *c += 0.01 * rng.gen_range(-1.0..1.0);
    }
    u
}

#[test]
fn mass_rate_vanishes_on_periodic_meshes() {
    for scheme in [Scheme::Hybridized, Scheme::Sbp(EdgeFamily::GaussLegendre)] {
        for n in 1..=4 {
            let mesh = Problem::Lake.mesh(4, 4, 0.1).unwrap();
            let mut disc = Discretization::new(
                mesh,
                Periodicity::XY,
                n,
                scheme,
                Penalty::LaxFriedrichs,
                1.0,
            )
            .unwrap();
            let b = disc.interpolate_bathymetry(lake_bathymetry);
            disc.set_bathymetry(&b);
            let u = random_state(&disc, n as u64);
            let mut du = vec![[0.0; 3]; u.len()];
            disc.rhs(&u, 0.0, &mut du).unwrap();
            let m = disc.mass_rate(&du);
            assert!(m.abs() < 1e-10, "{scheme} N={n}: {m:e}");
        }
    }
}

#[test]
fn mass_rate_vanishes_with_walls() {
    let mesh = Problem::Lake.mesh(4, 4, 0.0).unwrap();
    let disc = Discretization::new(
        mesh,
        Periodicity::NONE,
        3,
        Scheme::Hybridized,
        Penalty::LaxFriedrichs,
        1.0,
    )
    .unwrap();
    let u = random_state(&disc, 9);
    let mut du = vec![[0.0; 3]; u.len()];
    disc.rhs(&u, 0.0, &mut du).unwrap();
    assert!(disc.mass_rate(&du).abs() < 1e-10);
}

#[test]
fn mesh_text_roundtrip_preserves_discretization() {
    let mesh = Problem::DamBreak.mesh(0, 0, 0.0).unwrap();
    let text = write_mesh(&mesh);
    let back = read_mesh(&text).unwrap();
    assert_eq!(back.num_elements(), mesh.num_elements());
    assert_eq!(back.wall_faces, mesh.wall_faces);
    assert_eq!(write_mesh(&back), text);
}

#[test]
fn zero_final_time_returns_initial_state() {
    let p = VortexParams::default();
    let mesh = Problem::Vortex.mesh(4, 2, 0.0).unwrap();
    let mut disc = Discretization::new(
        mesh,
        Periodicity::XY,
        2,
        Scheme::Hybridized,
        Penalty::LaxFriedrichs,
        p.g,
    )
    .unwrap();
    let s0 = vortex_setup(&mut disc, &p).unwrap();
    let s = run(&disc, s0.clone(), 0.0, 0.1, 1, |_| Ok(())).unwrap();
    assert_eq!(s, s0);
}

#[test]
fn entropy_decays_under_lax_friedrichs() {
    let p = VortexParams::default();
    let mesh = Problem::Vortex.mesh(8, 4, 0.1).unwrap();
    let mut disc = Discretization::new(
        mesh,
        Periodicity::XY,
        2,
        Scheme::Hybridized,
        Penalty::LaxFriedrichs,
        p.g,
    )
    .unwrap();
    let s0 = vortex_setup(&mut disc, &p).unwrap();
    let mut rows = Vec::new();
    run(&disc, s0, 0.2, 0.01, 5, |s| {
        rows.push(invariants(&disc, s));
        Ok(())
    })
    .unwrap();
    for w in rows.windows(2) {
        assert!(w[1].entropy <= w[0].entropy + 1e-12);
        assert!((w[1].mass - w[0].mass).abs() < 1e-11 * w[0].mass);
    }
}

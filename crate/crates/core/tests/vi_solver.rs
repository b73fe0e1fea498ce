mod common;

use common::{max_abs_diff, GameData};
use pvjtcs::model::{pseudo_gradient, GameParams, PvGroup};
use pvjtcs::projection::FeasibleSet;
use pvjtcs::vi::{default_start, kkt_verify, line_search, residual, sspm_solve};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn table() -> GameParams {
    GameParams::default()
}

fn asymmetric() -> (Vec<PvGroup>, FeasibleSet, GameData) {
    let groups = vec![PvGroup::player(10, 8), PvGroup::player(20, 4)];
    let set = FeasibleSet::new(vec![10, 20], 12, 6.0, 1.0);
    let p = table();
    let data = GameData {
        m: vec![10.0, 20.0],
        d: vec![8.0, 4.0],
        price: 3.0,
        alpha1: p.alpha1,
        alpha2: p.alpha2,
    };
    (groups, set, data)
}

#[test]
fn asymmetric_pair_matches_golden_section() {
    let p = table();
    let (groups, set, data) = asymmetric();
    let x0 = default_start(&groups, &set).unwrap();
    let (x, trace) = sspm_solve(&groups, &set, 3.0, &p, &x0).unwrap();
    let want = common::golden_section_pair(&data, set.rhs());
    assert!(max_abs_diff(&x, &want) <= 1e-3, "{x:?} vs {want:?}");
    assert!(trace.final_residual().unwrap() < p.epsilon);
}

#[test]
fn residual_composes_projection() {
    let p = table();
    let groups = vec![PvGroup::player(10, 5), PvGroup::player(10, 5)];
    let set = FeasibleSet::new(vec![10, 10], 8, 8.0, 1.0);
    let x = [1.0, 0.2];
    let field = |z: &[f64]| pseudo_gradient(&groups, z, 2.0, &p).unwrap();
    let nu = residual(&x, 1.0, field, &set).unwrap();
    let fx = field(&x);
    let step: Vec<f64> = x.iter().zip(&fx).map(|(a, f)| a - f).collect();
    let proj = common::breakpoint_projection(&step, &[10.0, 10.0], 12.0);
    let want: Vec<f64> = x.iter().zip(&proj).map(|(a, b)| a - b).collect();
    assert!(common::norm(&nu) > 0.1);
    assert!(max_abs_diff(&nu, &want) <= 1e-12, "{nu:?} vs {want:?}");
}

#[test]
fn line_search_matches_exhaustive_scan() {
    let p = table();
    // Strongly monotone affine field F(x) = a x - b in one dimension.
    for (a, b, x, nu, mu) in [(40.0, 3.0, 0.7, 0.3, 1.0), (300.0, 10.0, 0.5, 0.05, 0.6), (5.0, -1.0, 0.2, 0.9, 1.0)] {
        let field = move |z: &[f64]| vec![a * z[0] - b];
        let (zeta, eta) = line_search(&[x], &[nu], mu, field, &p).unwrap();
        let scan = (0..=100u32)
            .find(|&k| {
                let e = p.gamma1.powi(k as i32) * mu;
                (a * (x - e * nu) - b) * nu >= p.gamma2 / mu * nu * nu
            })
            .unwrap();
        assert_eq!(zeta, scan);
        assert!((eta - p.gamma1.powi(scan as i32) * mu).abs() <= 1e-15);
    }
}

#[test]
fn kkt_flags_perturbed_point() {
    let p = table();
    let (groups, set, data) = asymmetric();
    let x0 = default_start(&groups, &set).unwrap();
    let (x, _) = sspm_solve(&groups, &set, 3.0, &p, &x0).unwrap();
    assert!(kkt_verify(&x, &groups, &set, 3.0, &p).worst() <= 1e-3);
    // Slide along the hyperplane: 10 * 0.2 = 20 * 0.1.
    let star = common::dual_oracle(&data, set.rhs());
    let moved = [star[0] - 0.2, star[1] + 0.1];
    assert!(moved.iter().all(|v| (0.0..=1.0).contains(v)));
    let report = kkt_verify(&moved, &groups, &set, 3.0, &p);
    assert!(report.stationarity_residual > 0.1, "{report:?}");
}

#[test]
fn random_instances_converge_to_potential_maximizer() {
    let p = table();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..40 {
        let game = common::random_game(&mut rng, &p);
        let x0 = default_start(&game.groups, &game.set).unwrap();
        let (x, trace) = sspm_solve(&game.groups, &game.set, game.price, &p, &x0).unwrap();
        let dual = common::dual_oracle(&game.data, game.set.rhs());
        assert!(max_abs_diff(&x, &dual) <= 1e-3, "{:?}: {x:?} vs {dual:?}", game.set);
        assert_eq!(trace.projections, 2 * trace.iterations() + 1);
        let start = common::random_feasible_start(&mut rng, &game.set);
        let (x2, _) = sspm_solve(&game.groups, &game.set, game.price, &p, &start).unwrap();
        assert!(max_abs_diff(&x, &x2) <= 1e-3);
    }
}

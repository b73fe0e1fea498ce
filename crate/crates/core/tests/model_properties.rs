mod common;

use pvjtcs::model::{pseudo_gradient, utility_gradient, utility_unchecked, GameParams, PvGroup};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_group(rng: &mut impl Rng) -> PvGroup {
    let m = rng.gen_range(0..=100);
    PvGroup::player(m, rng.gen_range(0..=m))
}

/// Worst relative error of the analytic gradient against central differences
/// over `n` random inputs.
pub fn worst_gradient_error(seed: u64, n: usize) -> f64 {
    let p = GameParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..n {
        let g = random_group(&mut rng);
        let x = rng.gen_range(0.0..=1.0);
        let price = rng.gen_range(0.0..10.0);
        let fd = (utility_unchecked(&g, x + h, price, &p) - utility_unchecked(&g, x - h, price, &p)) / (2.0 * h);
        let exact = utility_gradient(&g, x, price, &p).unwrap();
        worst = worst.max((fd - exact).abs() / exact.abs().max(1.0));
    }
    worst
}

/// Smallest `<F(x) - F(y), x - y>` over `n` random pairs.
pub fn worst_monotonicity(seed: u64, n: usize) -> f64 {
    let p = GameParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..n {
        let dim = rng.gen_range(1..=6);
        let groups: Vec<PvGroup> = (0..dim).map(|_| random_group(&mut rng)).collect();
        let price = rng.gen_range(0.0..10.0);
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let y: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let fx = pseudo_gradient(&groups, &x, price, &p).unwrap();
        let fy = pseudo_gradient(&groups, &y, price, &p).unwrap();
        let df: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| a - b).collect();
        let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        worst = worst.min(common::dot(&df, &dx));
    }
    worst
}

#[test]
fn gradient_matches_central_differences() {
    let err = worst_gradient_error(11, 1000);
    assert!(err <= 1e-5, "relative error {err:e}");
}

#[test]
fn pseudo_gradient_is_monotone() {
    let worst = worst_monotonicity(12, 1000);
    assert!(worst >= -1e-9, "{worst:e}");
}

#[test]
fn pseudo_gradient_vanishes_at_demand_without_weights() {
    let p = GameParams {
        alpha1: 0.0,
        alpha2: 0.0,
        ..GameParams::default()
    };
    let groups = [PvGroup::player(10, 6), PvGroup::player(4, 1), PvGroup::player(8, 8)];
    let x: Vec<f64> = groups.iter().map(|g| f64::from(g.d) / f64::from(g.m)).collect();
    let f = pseudo_gradient(&groups, &x, 7.0, &p).unwrap();
    assert!(f.iter().all(|v| v.abs() < 1e-12), "{f:?}");
}

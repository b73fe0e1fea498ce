//! Independent reference solvers used to freeze and cross-check results.
//! Nothing here calls into the library's solver paths.
#![allow(dead_code)]

use rand::Rng;

pub mod day_ahead;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Dense Gaussian elimination with partial pivoting; `None` when singular.
#[allow(clippy::needless_range_loop)]
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Projection of `p` onto `{z in [0,1]^n : m.z = s, g.z <= b}` (the cut is
/// optional) by enumerating every activity pattern of the box faces and the
/// cut, solving the equality-constrained least squares for each pattern and
/// keeping the closest feasible candidate.
pub fn qp_oracle(p: &[f64], m: &[f64], s: f64, cut: Option<(&[f64], f64)>) -> Option<Vec<f64>> {
    let n = p.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let cut_states: &[bool] = if cut.is_some() { &[false, true] } else { &[false] };
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0u8; n];
        let mut c = code;
        for s_i in state.iter_mut() {
            *s_i = (c % 3) as u8;
            c /= 3;
        }
        for &cut_on in cut_states {
            let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
            let fixed = |i: usize| if state[i] == 1 { 1.0 } else { 0.0 };
            // z_F = p_F + sum_k theta_k a_k(F), constraints a_k . z = rhs_k
            let mut rows: Vec<(Vec<f64>, f64)> = vec![(m.to_vec(), s)];
            if cut_on {
                let (g, b) = cut.unwrap();
                rows.push((g.to_vec(), b));
            }
            let k = rows.len();
            let mut z: Vec<f64> = (0..n).map(|i| if state[i] == 2 { p[i] } else { fixed(i) }).collect();
            if free.is_empty() {
                // all pinned: check the equalities directly
            } else {
                let mut mat = vec![vec![0.0; k]; k];
                let mut rhs = vec![0.0; k];
                for (r, (a, level)) in rows.iter().enumerate() {
                    let pinned: f64 = (0..n).filter(|i| state[*i] != 2).map(|i| a[i] * fixed(i)).sum();
                    rhs[r] = level - pinned - free.iter().map(|&i| a[i] * p[i]).sum::<f64>();
                    for (c2, (a2, _)) in rows.iter().enumerate() {
                        mat[r][c2] = free.iter().map(|&i| a[i] * a2[i]).sum();
                    }
                }
                let Some(theta) = solve_dense(mat, rhs) else { continue };
                for &i in &free {
                    z[i] = p[i] + rows.iter().zip(&theta).map(|((a, _), t)| a[i] * t).sum::<f64>();
                }
            }
            let total: f64 = m.iter().sum();
            let tol = 1e-9 * total.max(1.0);
            let ok_box = z.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v));
            let ok_plane = (dot(m, &z) - s).abs() <= tol;
            let ok_cut = cut.is_none_or(|(g, b)| dot(g, &z) - b <= 1e-9 * (1.0 + norm(g)));
            if ok_box && ok_plane && ok_cut {
                let d: f64 = z.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
                if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                    best = Some((d, z));
                }
            }
        }
    }
    best.map(|(_, z)| z)
}

/// Random feasible instance for a slot: integer weights in `[1, 100]`.
pub fn random_weights(rng: &mut impl Rng, n: usize) -> Vec<u32> {
    (0..n).map(|_| rng.gen_range(1..=100)).collect()
}

/// Projection onto `{z in [0,1]^n : m.z = s}` by sorting the clipping
/// breakpoints of `z(l) = clip(p + l m)` and interpolating the piecewise
/// linear level `m.z(l)`.
pub fn breakpoint_projection(p: &[f64], m: &[f64], s: f64) -> Vec<f64> {
    let level = |l: f64| -> f64 { p.iter().zip(m).map(|(pi, mi)| mi * (pi + l * mi).clamp(0.0, 1.0)).sum() };
    let mut bps: Vec<f64> = p
        .iter()
        .zip(m)
        .flat_map(|(pi, mi)| [-pi / mi, (1.0 - pi) / mi])
        .collect();
    bps.sort_by(f64::total_cmp);
    let mut l = bps[0];
    for w in bps.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (la, lb) = (level(a), level(b));
        if la <= s && s <= lb {
            l = if lb > la { a + (s - la) / (lb - la) * (b - a) } else { a };
            break;
        }
        l = b;
    }
    p.iter().zip(m).map(|(pi, mi)| (pi + l * mi).clamp(0.0, 1.0)).collect()
}

/// Game data for the oracles: `(m_i, d_i)` pairs, price and weights.
#[derive(Clone, Debug)]
pub struct GameData {
    pub m: Vec<f64>,
    pub d: Vec<f64>,
    pub price: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl GameData {
    /// Derivative of group `i`'s utility written out from the utility formula.
    pub fn du(&self, i: usize, x: f64) -> f64 {
        let (m, d) = (self.m[i], self.d[i]);
        -2.0 * m * (m * x - d) - self.alpha1 * m / (2.0 - x) + self.alpha2 * self.price * m
    }

    pub fn potential(&self, x: &[f64]) -> f64 {
        (0..x.len())
            .map(|i| {
                let (m, d) = (self.m[i], self.d[i]);
                -(m * x[i] - d).powi(2) + self.alpha1 * m * (2.0 - x[i]).ln()
                    - self.alpha2 * self.price * m * (1.0 - x[i])
            })
            .sum()
    }

    fn lipschitz(&self) -> f64 {
        self.m
            .iter()
            .map(|m| 2.0 * m * m + self.alpha1 * m)
            .fold(0.0, f64::max)
    }
}

/// Maximizer of the summed utilities over box and `m.x = s` by projected
/// gradient ascent with step `1/L` (L bounds every utility's curvature).
pub fn projected_gradient_oracle(game: &GameData, s: f64, max_steps: usize) -> Vec<f64> {
    let n = game.m.len();
    let step = 1.0 / game.lipschitz();
    let mut x = breakpoint_projection(&vec![0.5; n], &game.m, s);
    for _ in 0..max_steps {
        let ascent: Vec<f64> = (0..n).map(|i| x[i] + step * game.du(i, x[i])).collect();
        let next = breakpoint_projection(&ascent, &game.m, s);
        let moved = max_abs_diff(&next, &x);
        x = next;
        if moved < 1e-14 {
            break;
        }
    }
    x
}

/// Maximizer of the summed utilities by dual bisection: for a multiplier `l`
/// every group solves `du_i(x) = l m_i` on `[0, 1]` (its derivative is
/// decreasing), and `l` is bisected until `m.x(l) = s`.
pub fn dual_oracle(game: &GameData, s: f64) -> Vec<f64> {
    let n = game.m.len();
    let respond = |i: usize, l: f64| -> f64 {
        let g = |x: f64| game.du(i, x) - l * game.m[i];
        if g(0.0) <= 0.0 {
            return 0.0;
        }
        if g(1.0) >= 0.0 {
            return 1.0;
        }
        let (mut a, mut b) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if g(mid) > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    };
    let level = |l: f64| -> f64 { (0..n).map(|i| game.m[i] * respond(i, l)).sum() };
    let (mut lo, mut hi) = (-1e7, 1e7);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        // level is nonincreasing in l
        if level(mid) > s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let l = 0.5 * (lo + hi);
    (0..n).map(|i| respond(i, l)).collect()
}

/// Two-group maximizer along the hyperplane by golden-section search on x_1.
pub fn golden_section_pair(game: &GameData, s: f64) -> Vec<f64> {
    let (m1, m2) = (game.m[0], game.m[1]);
    let lo = ((s - m2) / m1).max(0.0);
    let hi = (s / m1).min(1.0);
    let along = |x1: f64| game.potential(&[x1, (s - m1 * x1) / m2]);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    for _ in 0..300 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if along(c) >= along(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let x1 = 0.5 * (a + b);
    vec![x1, (s - m1 * x1) / m2]
}

pub struct RandomGame {
    pub groups: Vec<pvjtcs::model::PvGroup>,
    pub set: pvjtcs::projection::FeasibleSet,
    pub price: f64,
    pub data: GameData,
}

/// Random feasible slot game with `I in {2, 3, 5}`, `m_i in [1, 100]`,
/// `d_i <= m_i`, charging demand inside the clamp bound, price in `[1, 10]`.
pub fn random_game(rng: &mut impl Rng, params: &pvjtcs::model::GameParams) -> RandomGame {
    let n = [2usize, 3, 5][rng.gen_range(0..3)];
    let m: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=100)).collect();
    let d: Vec<u32> = m.iter().map(|&mi| rng.gen_range(0..=mi)).collect();
    let d_total: u32 = d.iter().sum();
    let total: u32 = m.iter().sum();
    let e_plus = rng.gen_range(0.0..=params.r * f64::from(total - d_total));
    let price = rng.gen_range(1.0..=10.0);
    let groups = m.iter().zip(&d).map(|(&mi, &di)| pvjtcs::model::PvGroup::player(mi, di)).collect();
    RandomGame {
        groups,
        set: pvjtcs::projection::FeasibleSet::new(m.clone(), d_total, e_plus, params.r),
        price,
        data: GameData {
            m: m.iter().map(|&v| f64::from(v)).collect(),
            d: d.iter().map(|&v| f64::from(v)).collect(),
            price,
            alpha1: params.alpha1,
            alpha2: params.alpha2,
        },
    }
}

/// Random point of the slot set (projection of a random box point).
pub fn random_feasible_start(rng: &mut impl Rng, set: &pvjtcs::projection::FeasibleSet) -> Vec<f64> {
    let raw: Vec<f64> = (0..set.dim()).map(|_| rng.gen_range(0.0..=1.0)).collect();
    breakpoint_projection(&raw, &set.weights(), set.rhs())
}

//! Game primitives: parameters, vehicle groups, the per-group utility and
//! its derivatives, the stacked pseudogradient, and electricity pricing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tunable constants shared by the game, the solver and the fleet model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameParams {
    /// Weight of the charging satisfaction term.
    pub alpha1: f64,
    /// Weight of the charging fee term.
    pub alpha2: f64,
    /// Line-search contraction base, in (0, 1).
    pub gamma1: f64,
    /// Line-search acceptance threshold, in (0, 1).
    pub gamma2: f64,
    /// Step amplifier applied to the previous accepted step, > 1.
    pub gamma3: f64,
    pub mu_init: f64,
    pub eta_init: f64,
    /// Stop bound on the projected residual norm.
    pub epsilon: f64,
    /// Energy reserve margin used by the day-ahead plan.
    pub rho: f64,
    /// Energy (kwh) a vehicle needs to reach a charging station.
    pub e_min: f64,
    /// Energy (kwh) a charging vehicle gains in one slot.
    pub r: f64,
    /// Battery capacity (kwh).
    pub c: f64,
    /// Fleet size.
    pub fleet_size: usize,
    pub slot_hours: f64,
    /// Travel speed (km/h).
    pub speed: f64,
    /// Energy use (kwh/km).
    pub consume_rate: f64,
    /// Maximum on-vehicle distance over direct distance for any passenger.
    pub detour_max: f64,
    pub seats: u32,
}

impl Default for GameParams {
    fn default() -> Self {
        Self {
            alpha1: 20.0,
            alpha2: 5.0,
            gamma1: 0.4,
            gamma2: 0.5,
            gamma3: 1.5,
            mu_init: 1.0,
            eta_init: 1.0,
            epsilon: 1e-3,
            rho: 0.2,
            e_min: 3.0,
            r: 5.625,
            c: 45.0,
            fleet_size: 500,
            slot_hours: 1.0,
            speed: 30.0,
            consume_rate: 0.3,
            detour_max: 1.5,
            seats: 16,
        }
    }
}

impl GameParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParams(what.to_string()))
            }
        };
        check(self.gamma1 > 0.0 && self.gamma1 < 1.0, "gamma1 must lie in (0, 1)")?;
        check(self.gamma2 > 0.0 && self.gamma2 < 1.0, "gamma2 must lie in (0, 1)")?;
        check(self.gamma3 > 1.0, "gamma3 must exceed 1")?;
        check(self.mu_init > 0.0, "mu_init must be positive")?;
        check(self.eta_init > 0.0, "eta_init must be positive")?;
        check(self.epsilon > 0.0, "epsilon must be positive")?;
        check(self.rho > 0.0, "rho must be positive")?;
        check(self.alpha1 >= 0.0 && self.alpha2 >= 0.0, "alpha weights must be nonnegative")?;
        check(self.e_min >= 0.0 && self.r >= 0.0 && self.c >= 0.0, "energies must be nonnegative")?;
        check(self.r <= self.c, "r must not exceed c")?;
        check(self.slot_hours > 0.0, "slot_hours must be positive")?;
        check(self.speed > 0.0, "speed must be positive")?;
        check(self.consume_rate >= 0.0, "consume_rate must be nonnegative")?;
        check(self.detour_max >= 1.0, "detour_max must be at least 1")?;
        check(self.seats >= 1, "seats must be at least 1")?;
        Ok(())
    }

    /// Energy above which a vehicle counts as fully charged (`c - r`).
    pub fn full_threshold(&self) -> f64 {
        self.c - self.r
    }

    pub fn is_fully_charged(&self, energy: f64) -> bool {
        energy > self.full_threshold()
    }

    /// Worst-case energy a vehicle can burn in one slot of continuous driving.
    pub fn slot_consumption(&self) -> f64 {
        self.speed * self.slot_hours * self.consume_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PvStatus {
    Idle,
    Serving,
    Charging,
}

/// One vehicle: where it is, how much energy it holds, what it is doing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvState {
    pub id: u32,
    pub node: u64,
    /// Remaining energy (kwh), within `[0, c]`.
    pub energy: f64,
    pub status: PvStatus,
}

/// The unfully charged vehicles of one region in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvGroup {
    pub region: usize,
    /// All vehicles in the region.
    pub a: u32,
    /// Fully (or near fully) charged vehicles.
    pub f: u32,
    /// Unfully charged vehicles, `a - f`.
    pub m: u32,
    /// Transporting vehicles observed in the dry run.
    pub n: u32,
    /// Transportation demand, `max(n - f, 0)`.
    pub d: u32,
    pub x: f64,
}

impl PvGroup {
    pub fn new(region: usize, a: u32, f: u32, n: u32) -> Self {
        let m = a.saturating_sub(f);
        Self {
            region,
            a,
            f,
            m,
            n,
            d: n.saturating_sub(f),
            x: 1.0,
        }
    }

    /// A bare player with population `m` and demand `d`, for solver use.
    pub fn player(m: u32, d: u32) -> Self {
        Self {
            region: 0,
            a: m,
            f: 0,
            m,
            n: d,
            d,
            x: 1.0,
        }
    }
}

fn check_ratio(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("strategy {x} outside [0, 1]")));
    }
    Ok(())
}

/// `u(x) = -(m x - d)^2 + alpha1 m ln(2 - x) - alpha2 p m (1 - x)`.
pub fn utility(group: &PvGroup, x: f64, price: f64, params: &GameParams) -> Result<f64> {
    check_ratio(x)?;
    Ok(utility_unchecked(group, x, price, params))
}

/// Utility without the strategy box check. The solver probes points slightly
/// outside `[0, 1]` during line search; `ln(2 - x)` stays finite for `x < 2`.
pub fn utility_unchecked(group: &PvGroup, x: f64, price: f64, params: &GameParams) -> f64 {
    let m = f64::from(group.m);
    let d = f64::from(group.d);
    let gap = m * x - d;
    -gap * gap + params.alpha1 * m * (2.0 - x).ln() - params.alpha2 * price * m * (1.0 - x)
}

pub fn utility_gradient(group: &PvGroup, x: f64, price: f64, params: &GameParams) -> Result<f64> {
    check_ratio(x)?;
    Ok(utility_gradient_unchecked(group, x, price, params))
}

pub fn utility_gradient_unchecked(group: &PvGroup, x: f64, price: f64, params: &GameParams) -> f64 {
    let m = f64::from(group.m);
    let d = f64::from(group.d);
    -2.0 * m * (m * x - d) - params.alpha1 * m / (2.0 - x) + params.alpha2 * price * m
}

/// `d²u/dx² = -2 m² - alpha1 m / (2 - x)²`, strictly negative for `m > 0`.
pub fn utility_curvature(group: &PvGroup, x: f64, params: &GameParams) -> f64 {
    let m = f64::from(group.m);
    -2.0 * m * m - params.alpha1 * m / ((2.0 - x) * (2.0 - x))
}

/// Stacked negative utility gradients, `F_i(x) = -du_i/dx_i`.
pub fn pseudo_gradient(groups: &[PvGroup], x: &[f64], price: f64, params: &GameParams) -> Result<Vec<f64>> {
    if groups.len() != x.len() {
        return Err(Error::LengthMismatch {
            expected: groups.len(),
            got: x.len(),
        });
    }
    Ok(pseudo_gradient_unchecked(groups, x, price, params))
}

pub(crate) fn pseudo_gradient_unchecked(groups: &[PvGroup], x: &[f64], price: f64, params: &GameParams) -> Vec<f64> {
    groups
        .iter()
        .zip(x)
        .map(|(g, &xi)| -utility_gradient_unchecked(g, xi, price, params))
        .collect()
}

/// Per-slot electricity prices in cents per kwh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceCurve {
    pub prices: Vec<f64>,
}

impl PriceCurve {
    pub fn new(prices: Vec<f64>) -> Result<Self> {
        if let Some(p) = prices.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::Domain(format!("price {p} must be finite and nonnegative")));
        }
        Ok(Self { prices })
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn at(&self, slot: usize) -> f64 {
        self.prices[slot]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            prices: self.prices.iter().map(|p| p * factor).collect(),
        }
    }
}

/// Load-driven price model `p_t = alpha0 (L_t / C0)^k0` with `L_t` summed over regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingModel {
    pub alpha0: f64,
    pub k0: f64,
    pub c0: f64,
    /// `loads[t][i]` is the load of region `i` in slot `t` (kwh).
    pub loads: Vec<Vec<f64>>,
}

impl PricingModel {
    pub fn total_load(&self, slot: usize) -> f64 {
        self.loads.get(slot).map(|l| l.iter().sum()).unwrap_or(0.0)
    }

    /// Price curve over every slot the model has loads for.
    pub fn curve(&self) -> Result<PriceCurve> {
        let prices = (0..self.loads.len())
            .map(|t| rtp_price(self, t))
            .collect::<Result<Vec<_>>>()?;
        PriceCurve::new(prices)
    }
}

pub fn rtp_price(model: &PricingModel, slot: usize) -> Result<f64> {
    if model.c0 <= 0.0 {
        return Err(Error::Domain("market capacity C0 must be positive".into()));
    }
    if model.alpha0 < 0.0 || model.k0 < 0.0 {
        return Err(Error::Domain("alpha0 and k0 must be nonnegative".into()));
    }
    let load = model.total_load(slot);
    Ok(model.alpha0 * (load / model.c0).powf(model.k0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn table_params() -> GameParams {
        GameParams::default()
    }

    #[test]
    fn defaults_match_simulation_settings() {
        let p = table_params();
        assert_eq!((p.alpha1, p.alpha2, p.eta_init, p.mu_init), (20.0, 5.0, 1.0, 1.0));
        assert_eq!((p.gamma1, p.gamma2, p.gamma3), (0.4, 0.5, 1.5));
        assert_eq!((p.e_min, p.rho, p.epsilon), (3.0, 0.2, 1e-3));
        assert_eq!((p.c, p.r, p.consume_rate, p.speed, p.seats), (45.0, 5.625, 0.3, 30.0, 16));
        assert_abs_diff_eq!(p.slot_consumption(), 9.0, epsilon = 1e-12);
        p.validate().unwrap();
    }

    #[test]
    fn validate_rejects_bad_gammas() {
        let mut p = table_params();
        p.gamma1 = 1.0;
        assert!(p.validate().is_err());
        let mut p = table_params();
        p.gamma3 = 1.0;
        assert!(p.validate().is_err());
        let mut p = table_params();
        p.r = 50.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn utility_reference_values() {
        let p = table_params();
        let g = PvGroup::player(100, 60);
        assert_abs_diff_eq!(utility(&g, 0.6, 5.0, &p).unwrap(), -327.0555, epsilon = 1e-3);

        let zero = GameParams {
            alpha1: 0.0,
            alpha2: 0.0,
            ..p.clone()
        };
        let g = PvGroup::player(10, 6);
        assert_abs_diff_eq!(utility(&g, 0.6, 123.0, &zero).unwrap(), 0.0, epsilon = 1e-12);

        let empty = PvGroup::player(0, 0);
        assert_eq!(utility(&empty, 0.3, 9.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn utility_rejects_out_of_box() {
        let g = PvGroup::player(10, 6);
        assert!(matches!(utility(&g, 1.2, 1.0, &table_params()), Err(Error::Domain(_))));
        assert!(utility_gradient(&g, -0.1, 1.0, &table_params()).is_err());
    }

    #[test]
    fn gradient_reference_values() {
        let p = table_params();
        let g = PvGroup::player(100, 60);
        assert_abs_diff_eq!(utility_gradient(&g, 0.6, 5.0, &p).unwrap(), 1071.4286, epsilon = 1e-3);
        let zero = GameParams {
            alpha1: 0.0,
            alpha2: 0.0,
            ..p.clone()
        };
        assert_abs_diff_eq!(
            utility_gradient(&PvGroup::player(10, 6), 0.6, 1.0, &zero).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_eq!(utility_gradient(&PvGroup::player(0, 0), 0.5, 4.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn pseudo_gradient_cases() {
        let p = table_params();
        let f = pseudo_gradient(&[PvGroup::player(100, 60)], &[0.6], 5.0, &p).unwrap();
        assert_abs_diff_eq!(f[0], -1071.4286, epsilon = 1e-3);

        let twins = [PvGroup::player(30, 10), PvGroup::player(30, 10)];
        let f = pseudo_gradient(&twins, &[0.4, 0.4], 2.0, &p).unwrap();
        assert_eq!(f[0], f[1]);

        let zero = GameParams {
            alpha1: 0.0,
            alpha2: 0.0,
            ..p.clone()
        };
        let groups = [PvGroup::player(10, 5), PvGroup::player(4, 1)];
        let f = pseudo_gradient(&groups, &[0.5, 0.25], 7.0, &zero).unwrap();
        assert!(f.iter().all(|v| v.abs() < 1e-12));

        assert!(matches!(
            pseudo_gradient(&groups, &[0.5], 1.0, &p),
            Err(Error::LengthMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn rtp_price_cases() {
        let model = |alpha0, k0, c0, load| PricingModel {
            alpha0,
            k0,
            c0,
            loads: vec![vec![load / 2.0, load / 2.0]],
        };
        assert_abs_diff_eq!(rtp_price(&model(1.0, 2.0, 100.0, 100.0), 0).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rtp_price(&model(1.0, 2.0, 100.0, 200.0), 0).unwrap(), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rtp_price(&model(3.0, 0.0, 7.0, 55.0), 0).unwrap(), 3.0, epsilon = 1e-12);
        assert!(rtp_price(&model(1.0, 2.0, 0.0, 10.0), 0).is_err());
    }

    #[test]
    fn price_curve_rejects_negative() {
        assert!(PriceCurve::new(vec![1.0, -0.5]).is_err());
        assert_eq!(PriceCurve::new(vec![2.0, 3.0]).unwrap().scaled(2.0).prices, vec![4.0, 6.0]);
    }

    #[test]
    fn fully_charged_threshold() {
        let p = table_params();
        assert!(p.is_fully_charged(39.4));
        assert!(!p.is_fully_charged(39.3));
        assert!(!p.is_fully_charged(39.375));
    }

    proptest! {
        #[test]
        fn utility_is_strictly_concave(m in 1u32..200, x in 0.0f64..=1.0, alpha1 in 0.0f64..50.0) {
            let p = GameParams { alpha1, ..GameParams::default() };
            prop_assert!(utility_curvature(&PvGroup::player(m, 0), x, &p) < 0.0);
        }

        #[test]
        fn rtp_price_nondecreasing_in_load(k0 in 0.0f64..4.0, l1 in 0.0f64..500.0, dl in 0.0f64..500.0) {
            let mk = |l: f64| PricingModel { alpha0: 2.0, k0, c0: 100.0, loads: vec![vec![l]] };
            prop_assert!(rtp_price(&mk(l1), 0).unwrap() <= rtp_price(&mk(l1 + dl), 0).unwrap() + 1e-12);
        }
    }
}

//! Base-station load arithmetic and the EARTH-style power model.
//!
//! A base station consumes `P_o + psi * mu * P_tx` watts while active, where
//! `psi` is its normalized traffic load, and a constant `P_s` while asleep.
//! The built-in [`ProfileSet`] carries the standard EARTH measurement
//! campaign constants for the five station classes handled here; the harness
//! config can override any of them.

use serde::{Deserialize, Serialize};

/// Errors from load and power computations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PowerError {
    #[error("load {0} outside [0, 1]")]
    LoadOutOfRange(f64),
    #[error("negative input: {name} = {value}")]
    NegativeInput { name: &'static str, value: f64 },
    #[error("sinr must be positive to serve a minimum rate")]
    InfeasibleUser,
    #[error("demand of {demanded} resource blocks exceeds the {available} available")]
    Overload { demanded: u64, available: u64 },
    #[error("mismatched lengths: {0}")]
    LengthMismatch(String),
    #[error("the macro station never takes the sleep branch")]
    MbsMustStayOn,
    #[error("invalid power profile: {0}")]
    InvalidProfile(String),
}

/// The five station classes of an ultra-dense heterogeneous deployment.
///
/// Exactly one `Macro` anchors each macro cell; the other four are the
/// switchable small-cell classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BsClass {
    Macro,
    Rrh,
    Micro,
    Pico,
    Femto,
}

impl BsClass {
    pub const ALL: [BsClass; 5] = [
        BsClass::Macro,
        BsClass::Rrh,
        BsClass::Micro,
        BsClass::Pico,
        BsClass::Femto,
    ];

    /// The switchable classes, largest to smallest.
    pub const SMALL_CELLS: [BsClass; 4] =
        [BsClass::Rrh, BsClass::Micro, BsClass::Pico, BsClass::Femto];

    pub fn name(self) -> &'static str {
        match self {
            BsClass::Macro => "macro",
            BsClass::Rrh => "rrh",
            BsClass::Micro => "micro",
            BsClass::Pico => "pico",
            BsClass::Femto => "femto",
        }
    }
}

impl std::fmt::Display for BsClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-class power constants plus the class bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    /// Fixed consumption while active, watts (`P_o`).
    pub p_fixed: f64,
    /// Power amplifier efficiency factor (`mu`), dimensionless.
    pub amp_eff: f64,
    /// Transmit power at full load, watts (`P_tx`). Transmit power is fixed
    /// per class, so this doubles as `P_max`.
    pub p_tx_max: f64,
    /// Sleep-mode consumption, watts (`P_s`).
    pub p_sleep: f64,
    /// Class bandwidth in MHz; used to scale offloaded traffic.
    pub bandwidth_mhz: f64,
}

impl PowerProfile {
    pub fn validate(&self) -> Result<(), PowerError> {
        let fields = [
            ("p_fixed", self.p_fixed),
            ("amp_eff", self.amp_eff),
            ("p_tx_max", self.p_tx_max),
            ("p_sleep", self.p_sleep),
            ("bandwidth_mhz", self.bandwidth_mhz),
        ];
        for (name, value) in fields {
            if value <= 0.0 || value.is_nan() {
                return Err(PowerError::InvalidProfile(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if self.p_sleep >= self.p_fixed {
            return Err(PowerError::InvalidProfile(format!(
                "p_sleep ({}) must be below p_fixed ({})",
                self.p_sleep, self.p_fixed
            )));
        }
        Ok(())
    }

    /// Active consumption on the linear load curve: `P_o + load * mu * P_tx`.
    ///
    /// Total accounting helpers call this without a range check so that a
    /// hypothetical over-capacity configuration still has a well-defined
    /// (linearly extended) power value; user-facing entry points validate the
    /// load first.
    pub fn active_power(&self, load: f64) -> f64 {
        self.p_fixed + load * self.amp_eff * self.p_tx_max
    }
}

/// One [`PowerProfile`] per station class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    #[serde(rename = "macro")]
    pub macro_bs: PowerProfile,
    pub rrh: PowerProfile,
    pub micro: PowerProfile,
    pub pico: PowerProfile,
    pub femto: PowerProfile,
}

impl ProfileSet {
    pub fn get(&self, class: BsClass) -> &PowerProfile {
        match class {
            BsClass::Macro => &self.macro_bs,
            BsClass::Rrh => &self.rrh,
            BsClass::Micro => &self.micro,
            BsClass::Pico => &self.pico,
            BsClass::Femto => &self.femto,
        }
    }

    pub fn validate(&self) -> Result<(), PowerError> {
        for class in BsClass::ALL {
            self.get(class).validate()?;
        }
        Ok(())
    }
}

impl Default for ProfileSet {
    /// The EARTH measurement constants per class.
    fn default() -> Self {
        ProfileSet {
            macro_bs: PowerProfile {
                p_fixed: 130.0,
                amp_eff: 4.7,
                p_tx_max: 20.0,
                p_sleep: 75.0,
                bandwidth_mhz: 20.0,
            },
            rrh: PowerProfile {
                p_fixed: 84.0,
                amp_eff: 2.8,
                p_tx_max: 20.0,
                p_sleep: 56.0,
                bandwidth_mhz: 15.0,
            },
            micro: PowerProfile {
                p_fixed: 56.0,
                amp_eff: 2.6,
                p_tx_max: 6.3,
                p_sleep: 39.0,
                bandwidth_mhz: 10.0,
            },
            pico: PowerProfile {
                p_fixed: 6.8,
                amp_eff: 4.0,
                p_tx_max: 0.13,
                p_sleep: 4.3,
                bandwidth_mhz: 5.0,
            },
            femto: PowerProfile {
                p_fixed: 4.8,
                amp_eff: 8.0,
                p_tx_max: 0.05,
                p_sleep: 2.9,
                bandwidth_mhz: 3.0,
            },
        }
    }
}

/// A normalized traffic load, valid in `[0, 1]` at construction.
///
/// Post-offload macro loads may exceed 1 and are therefore carried as plain
/// `f64` until the feasibility check; nothing is clamped silently.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct LoadFraction(f64);

impl LoadFraction {
    pub const ZERO: LoadFraction = LoadFraction(0.0);
    pub const FULL: LoadFraction = LoadFraction(1.0);

    pub fn new(value: f64) -> Result<Self, PowerError> {
        if value.is_finite() && (0.0..=1.0).contains(&value) {
            Ok(LoadFraction(value))
        } else {
            Err(PowerError::LoadOutOfRange(value))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for LoadFraction {
    type Error = PowerError;
    fn try_from(value: f64) -> Result<Self, PowerError> {
        LoadFraction::new(value)
    }
}

impl From<LoadFraction> for f64 {
    fn from(l: LoadFraction) -> f64 {
        l.0
    }
}

/// Aggregate resource-block demand at one station.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RbDemand {
    /// Resource blocks required by all attached users.
    pub rb_count: u64,
    /// Resource blocks the station has available.
    pub total_rbs: u64,
    /// Number of attached users.
    pub users: u64,
}

impl RbDemand {
    pub fn load(&self) -> Result<LoadFraction, PowerError> {
        bs_load(&[self.rb_count], self.total_rbs)
    }
}

/// Achievable user rate in bit/s for `rb_assigned` resource blocks of
/// `rb_bandwidth_hz` each at linear SINR `sinr`.
pub fn user_rate(rb_assigned: u64, rb_bandwidth_hz: f64, sinr: f64) -> Result<f64, PowerError> {
    if rb_bandwidth_hz <= 0.0 || rb_bandwidth_hz.is_nan() {
        return Err(PowerError::NegativeInput {
            name: "rb_bandwidth_hz",
            value: rb_bandwidth_hz,
        });
    }
    if sinr < 0.0 || sinr.is_nan() {
        return Err(PowerError::NegativeInput {
            name: "sinr",
            value: sinr,
        });
    }
    Ok(rb_assigned as f64 * rb_bandwidth_hz * (1.0 + sinr).log2())
}

/// Minimum whole resource blocks needed to provide `min_rate_bps`.
///
/// The underlying ratio is real-valued; blocks are indivisible, so the result
/// is rounded up.
pub fn required_rbs(min_rate_bps: f64, rb_bandwidth_hz: f64, sinr: f64) -> Result<u64, PowerError> {
    if min_rate_bps < 0.0 || min_rate_bps.is_nan() {
        return Err(PowerError::NegativeInput {
            name: "min_rate_bps",
            value: min_rate_bps,
        });
    }
    if rb_bandwidth_hz <= 0.0 || rb_bandwidth_hz.is_nan() {
        return Err(PowerError::NegativeInput {
            name: "rb_bandwidth_hz",
            value: rb_bandwidth_hz,
        });
    }
    if sinr <= 0.0 || sinr.is_nan() {
        return Err(PowerError::InfeasibleUser);
    }
    let blocks = min_rate_bps / (rb_bandwidth_hz * (1.0 + sinr).log2());
    Ok(blocks.ceil() as u64)
}

/// Station load: demanded blocks over available blocks.
///
/// A demand above capacity is rejected rather than clamped; the simulator
/// assumes the all-on network can serve every user.
pub fn bs_load(demands: &[u64], total_rbs: u64) -> Result<LoadFraction, PowerError> {
    if total_rbs == 0 {
        return Err(PowerError::InvalidProfile(
            "total_rbs must be at least 1".into(),
        ));
    }
    let demanded: u64 = demands.iter().sum();
    if demanded > total_rbs {
        return Err(PowerError::Overload {
            demanded,
            available: total_rbs,
        });
    }
    Ok(LoadFraction(demanded as f64 / total_rbs as f64))
}

/// Instantaneous consumption of one station: the linear load curve while on,
/// the sleep constant while off.
pub fn instantaneous_power(
    profile: &PowerProfile,
    load: f64,
    is_on: bool,
) -> Result<f64, PowerError> {
    if !is_on {
        return Ok(profile.p_sleep);
    }
    if !load.is_finite() || !(0.0..=1.0).contains(&load) {
        return Err(PowerError::LoadOutOfRange(load));
    }
    Ok(profile.active_power(load))
}

/// Network-wide instantaneous consumption over parallel per-station slices.
///
/// Index 0 is the macro station and must be switched on; its entry in
/// `loads` is expected to already include any offloaded traffic.
pub fn total_network_power(
    loads: &[f64],
    switched_on: &[bool],
    classes: &[BsClass],
    profiles: &ProfileSet,
) -> Result<f64, PowerError> {
    if loads.len() != switched_on.len() || loads.len() != classes.len() {
        return Err(PowerError::LengthMismatch(format!(
            "loads {} / switch {} / classes {}",
            loads.len(),
            switched_on.len(),
            classes.len()
        )));
    }
    if let Some(false) = switched_on.first() {
        return Err(PowerError::MbsMustStayOn);
    }
    let mut total = 0.0;
    for i in 0..loads.len() {
        total += instantaneous_power(profiles.get(classes[i]), loads[i], switched_on[i])?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn user_rate_matches_hand_values() {
        // log2(2) = 1
        assert_eq!(user_rate(1, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(user_rate(0, 5.0, 9.0).unwrap(), 0.0);
        // 2 * 10 * log2(4) = 40
        assert_eq!(user_rate(2, 10.0, 3.0).unwrap(), 40.0);
    }

    #[test]
    fn user_rate_rejects_negative_inputs() {
        assert!(matches!(
            user_rate(1, -1.0, 1.0),
            Err(PowerError::NegativeInput { .. })
        ));
        assert!(matches!(
            user_rate(1, 1.0, -0.5),
            Err(PowerError::NegativeInput { .. })
        ));
    }

    #[test]
    fn required_rbs_rounds_up() {
        assert_eq!(required_rbs(2.0, 1.0, 3.0).unwrap(), 1);
        assert_eq!(required_rbs(1.0, 1.0, 1.0).unwrap(), 1);
        // ceil(3 / 1) = 3
        assert_eq!(required_rbs(3.0, 1.0, 1.0).unwrap(), 3);
    }

    #[test]
    fn required_rbs_zero_sinr_is_infeasible() {
        assert_eq!(required_rbs(1.0, 1.0, 0.0), Err(PowerError::InfeasibleUser));
    }

    #[test]
    fn required_rbs_ceiling_covers_the_rate() {
        // Ceiling correctness: the granted blocks always meet the demand.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..500 {
            let rate = next() * 100.0 + 1e-9;
            let bw = next() * 10.0 + 0.1;
            let sinr = next() * 30.0 + 1e-6;
            let blocks = required_rbs(rate, bw, sinr).unwrap();
            let achieved = user_rate(blocks, bw, sinr).unwrap();
            assert!(
                achieved >= rate - 1e-9,
                "blocks {blocks} give {achieved} < {rate}"
            );
        }
    }

    #[test]
    fn bs_load_sums_demands() {
        assert_eq!(bs_load(&[50], 100).unwrap().get(), 0.5);
        assert_eq!(bs_load(&[], 100).unwrap().get(), 0.0);
        assert_eq!(bs_load(&[30, 70], 100).unwrap().get(), 1.0);
    }

    #[test]
    fn bs_load_rejects_overload() {
        assert_eq!(
            bs_load(&[60, 70], 100),
            Err(PowerError::Overload {
                demanded: 130,
                available: 100
            })
        );
    }

    #[test]
    fn instantaneous_power_golden_values() {
        let p = ProfileSet::default();
        assert_eq!(
            instantaneous_power(p.get(BsClass::Macro), 0.0, true).unwrap(),
            130.0
        );
        // 130 + 1.0 * 4.7 * 20
        assert_eq!(
            instantaneous_power(p.get(BsClass::Macro), 1.0, true).unwrap(),
            224.0
        );
        assert_eq!(
            instantaneous_power(p.get(BsClass::Femto), 0.7, false).unwrap(),
            2.9
        );
        // 84 + 0.5 * 2.8 * 20
        assert_eq!(
            instantaneous_power(p.get(BsClass::Rrh), 0.5, true).unwrap(),
            112.0
        );
    }

    #[test]
    fn instantaneous_power_rejects_out_of_range_load() {
        let p = ProfileSet::default();
        assert!(matches!(
            instantaneous_power(p.get(BsClass::Macro), 1.2, true),
            Err(PowerError::LoadOutOfRange(_))
        ));
        assert!(matches!(
            instantaneous_power(p.get(BsClass::Macro), -0.1, true),
            Err(PowerError::LoadOutOfRange(_))
        ));
        // Off-state power ignores the load entirely.
        assert_eq!(
            instantaneous_power(p.get(BsClass::Macro), 7.0, false).unwrap(),
            75.0
        );
    }

    #[test]
    fn power_is_strictly_increasing_in_load() {
        let profiles = ProfileSet::default();
        for class in BsClass::ALL {
            let p = profiles.get(class);
            let mut prev = instantaneous_power(p, 0.0, true).unwrap();
            for step in 1..=20 {
                let load = step as f64 / 20.0;
                let cur = instantaneous_power(p, load, true).unwrap();
                assert!(cur > prev, "{class} not increasing at load {load}");
                prev = cur;
            }
        }
    }

    #[test]
    fn sleep_power_is_below_idle_active_power() {
        let profiles = ProfileSet::default();
        for class in BsClass::ALL {
            let p = profiles.get(class);
            assert!(p.p_sleep < instantaneous_power(p, 0.0, true).unwrap());
        }
    }

    #[test]
    fn total_power_sums_the_sleep_column() {
        let profiles = ProfileSet::default();
        let classes = [
            BsClass::Macro,
            BsClass::Rrh,
            BsClass::Micro,
            BsClass::Pico,
            BsClass::Femto,
        ];
        let loads = [0.0; 5];
        let on = [true, false, false, false, false];
        // 130 + 56 + 39 + 4.3 + 2.9
        let expected = 130.0 + 56.0 + 39.0 + 4.3 + 2.9;
        assert!(
            (total_network_power(&loads, &on, &classes, &profiles).unwrap() - expected).abs()
                < 1e-12
        );

        let all_on = [true; 5];
        let fixed: f64 = classes.iter().map(|c| profiles.get(*c).p_fixed).sum();
        assert_eq!(
            total_network_power(&loads, &all_on, &classes, &profiles).unwrap(),
            fixed
        );
    }

    #[test]
    fn total_power_macro_plus_sleeping_femto() {
        let profiles = ProfileSet::default();
        let classes = [BsClass::Macro, BsClass::Femto];
        // 130 + 0.5 * 94 = 177, plus femto sleep 2.9
        let total = total_network_power(&[0.5, 0.3], &[true, false], &classes, &profiles).unwrap();
        assert!((total - 179.9).abs() < 1e-12);
    }

    #[test]
    fn total_power_rejects_sleeping_macro() {
        let profiles = ProfileSet::default();
        let classes = [BsClass::Macro, BsClass::Femto];
        assert_eq!(
            total_network_power(&[0.5, 0.3], &[false, true], &classes, &profiles),
            Err(PowerError::MbsMustStayOn)
        );
    }

    #[test]
    fn total_power_matches_per_station_loop() {
        // Additivity against an independent accumulation on random snapshots.
        let profiles = ProfileSet::default();
        let mut state = 42u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let n = 1 + (next() * 12.0) as usize;
            let mut classes = vec![BsClass::Macro];
            let mut loads = vec![next()];
            let mut on = vec![true];
            for _ in 1..n {
                classes.push(BsClass::SMALL_CELLS[(next() * 4.0) as usize % 4]);
                loads.push(next());
                on.push(next() < 0.5);
            }
            let total = total_network_power(&loads, &on, &classes, &profiles).unwrap();
            let mut by_hand = 0.0;
            for i in 0..n {
                let p = profiles.get(classes[i]);
                by_hand += if on[i] {
                    p.p_fixed + loads[i] * p.amp_eff * p.p_tx_max
                } else {
                    p.p_sleep
                };
            }
            assert_eq!(total, by_hand);
        }
    }

    #[test]
    fn load_fraction_bounds() {
        assert!(LoadFraction::new(0.0).is_ok());
        assert!(LoadFraction::new(1.0).is_ok());
        assert!(LoadFraction::new(1.0 + 1e-12).is_err());
        assert!(LoadFraction::new(-0.0).is_ok());
        assert!(LoadFraction::new(f64::NAN).is_err());
    }

    #[test]
    fn default_profiles_are_valid() {
        ProfileSet::default().validate().unwrap();
    }

    #[test]
    fn rb_demand_load() {
        let d = RbDemand {
            rb_count: 25,
            total_rbs: 100,
            users: 5,
        };
        assert_eq!(d.load().unwrap().get(), 0.25);
    }
}

//! Macro-cell topology, switch vectors, vertical offloading and the
//! power/energy/coverage metrics built on top of them.
//!
//! Each macro cell is one macro station (index 0, always on) plus a list of
//! switchable small cells. Switching a small cell off moves its traffic to
//! the macro; the move is feasible only while the macro stays within its
//! capacity limit.

use serde::{Deserialize, Serialize};

use crate::power::{self, BsClass, LoadFraction, PowerError, ProfileSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("macro capacity limit {0} outside (0, 1]")]
    InvalidCapacityLimit(f64),
    #[error("coverage loss is undefined for zero pre-switch traffic")]
    UndefinedCoverage,
    #[error("switch vector must keep the macro station on")]
    MbsMustStayOn,
    #[error(transparent)]
    Power(#[from] PowerError),
}

/// How a sleeping small cell's load lands on the macro station.
///
/// Loads are normalized per class, so one unit of femto load is far less
/// absolute traffic than one unit of macro load. `BandwidthScaled` converts
/// by the bandwidth ratio before adding; `Literal` adds the raw fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffloadScaling {
    BandwidthScaled,
    Literal,
}

/// Static description of one macro cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroCellConfig {
    /// Classes of the switchable stations, in station-index order (the macro
    /// itself is implicit at index 0).
    pub sbs_classes: Vec<BsClass>,
    /// Largest post-offload load the macro accepts (`psi_m`), in (0, 1].
    pub mbs_capacity_limit: f64,
    pub offload_scaling: OffloadScaling,
}

impl MacroCellConfig {
    pub fn new(
        sbs_classes: Vec<BsClass>,
        mbs_capacity_limit: f64,
        offload_scaling: OffloadScaling,
    ) -> Result<Self, NetworkError> {
        if !(mbs_capacity_limit > 0.0 && mbs_capacity_limit <= 1.0) {
            return Err(NetworkError::InvalidCapacityLimit(mbs_capacity_limit));
        }
        Ok(MacroCellConfig {
            sbs_classes,
            mbs_capacity_limit,
            offload_scaling,
        })
    }

    /// Total stations including the macro.
    pub fn n_bs(&self) -> usize {
        1 + self.sbs_classes.len()
    }

    pub fn n_sbs(&self) -> usize {
        self.sbs_classes.len()
    }

    /// Per-station classes with the macro prepended.
    pub fn bs_classes(&self) -> Vec<BsClass> {
        let mut classes = Vec::with_capacity(self.n_bs());
        classes.push(BsClass::Macro);
        classes.extend_from_slice(&self.sbs_classes);
        classes
    }

    /// Load conversion factor for offloading one unit of `class` load onto
    /// the macro.
    pub fn offload_scale(&self, class: BsClass, profiles: &ProfileSet) -> f64 {
        match self.offload_scaling {
            OffloadScaling::BandwidthScaled => {
                profiles.get(class).bandwidth_mhz / profiles.get(BsClass::Macro).bandwidth_mhz
            }
            OffloadScaling::Literal => 1.0,
        }
    }
}

/// Per-station on/off assignment; index 0 is the macro and is always on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SwitchVector(Vec<bool>);

impl SwitchVector {
    pub fn all_on(n_bs: usize) -> Self {
        assert!(n_bs >= 1, "a cell has at least the macro station");
        SwitchVector(vec![true; n_bs])
    }

    /// Builds from small-cell bits only, prepending the always-on macro.
    pub fn from_sbs_bits(bits: &[bool]) -> Self {
        let mut gamma = Vec::with_capacity(bits.len() + 1);
        gamma.push(true);
        gamma.extend_from_slice(bits);
        SwitchVector(gamma)
    }

    /// Builds from a full per-station vector, rejecting a sleeping macro.
    pub fn from_gamma(gamma: Vec<bool>) -> Result<Self, NetworkError> {
        match gamma.first() {
            Some(true) => Ok(SwitchVector(gamma)),
            _ => Err(NetworkError::MbsMustStayOn),
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_on(&self, index: usize) -> bool {
        self.0[index]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    /// Small-cell bits, macro excluded.
    pub fn sbs_bits(&self) -> &[bool] {
        &self.0[1..]
    }

    pub fn n_off(&self) -> usize {
        self.0.iter().filter(|on| !**on).count()
    }
}

/// Post-offload macro load for the given switch assignment. Unclamped: the
/// result exceeds the capacity limit exactly when the assignment is
/// infeasible.
pub fn offloaded_mbs_load(
    mbs_load: LoadFraction,
    sbs_loads: &[LoadFraction],
    switch: &SwitchVector,
    cfg: &MacroCellConfig,
    profiles: &ProfileSet,
) -> f64 {
    assert_eq!(sbs_loads.len(), cfg.n_sbs(), "one load per small cell");
    assert_eq!(switch.len(), cfg.n_bs(), "one switch bit per station");
    let mut effective = mbs_load.get();
    for (i, load) in sbs_loads.iter().enumerate() {
        if !switch.is_on(i + 1) {
            effective += load.get() * cfg.offload_scale(cfg.sbs_classes[i], profiles);
        }
    }
    effective
}

/// The capacity constraint: the post-offload macro load must not exceed
/// `psi_m` (boundary inclusive).
pub fn qos_feasible(effective_mbs_load: f64, cfg: &MacroCellConfig) -> bool {
    effective_mbs_load <= cfg.mbs_capacity_limit
}

/// One slot of the cell: raw loads, the switch assignment and the implied
/// post-offload macro load.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSnapshot {
    raw_loads: Vec<LoadFraction>,
    switch: SwitchVector,
    effective_mbs_load: f64,
}

impl NetworkSnapshot {
    /// `raw_loads` holds the macro first, then each small cell.
    pub fn build(
        raw_loads: Vec<LoadFraction>,
        switch: SwitchVector,
        cfg: &MacroCellConfig,
        profiles: &ProfileSet,
    ) -> Self {
        assert_eq!(raw_loads.len(), cfg.n_bs(), "one load per station");
        let effective = offloaded_mbs_load(raw_loads[0], &raw_loads[1..], &switch, cfg, profiles);
        NetworkSnapshot {
            raw_loads,
            switch,
            effective_mbs_load: effective,
        }
    }

    pub fn raw_loads(&self) -> &[LoadFraction] {
        &self.raw_loads
    }

    pub fn switch(&self) -> &SwitchVector {
        &self.switch
    }

    pub fn effective_mbs_load(&self) -> f64 {
        self.effective_mbs_load
    }

    pub fn is_feasible(&self, cfg: &MacroCellConfig) -> bool {
        qos_feasible(self.effective_mbs_load, cfg)
    }

    /// Network-wide power with the macro billed at its post-offload load.
    pub fn total_power(
        &self,
        cfg: &MacroCellConfig,
        profiles: &ProfileSet,
    ) -> Result<f64, PowerError> {
        let mut loads = Vec::with_capacity(self.raw_loads.len());
        loads.push(self.effective_mbs_load);
        loads.extend(self.raw_loads[1..].iter().map(|l| l.get()));
        power::total_network_power(&loads, self.switch.as_slice(), &cfg.bs_classes(), profiles)
    }
}

/// Everything a policy needs to know about one candidate switch assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchOutcome {
    pub effective_mbs_load: f64,
    pub feasible: bool,
    pub power_w: f64,
}

/// Evaluates a candidate assignment: post-offload macro load, feasibility,
/// and total power. Power stays on the linearly extended load curve so that
/// infeasible candidates still compare consistently.
pub fn evaluate_switch(
    raw_loads: &[LoadFraction],
    switch: &SwitchVector,
    cfg: &MacroCellConfig,
    profiles: &ProfileSet,
) -> SwitchOutcome {
    let effective = offloaded_mbs_load(raw_loads[0], &raw_loads[1..], switch, cfg, profiles);
    let classes = cfg.bs_classes();
    let mut power_w = profiles.get(BsClass::Macro).active_power(effective);
    for i in 1..cfg.n_bs() {
        let profile = profiles.get(classes[i]);
        power_w += if switch.is_on(i) {
            profile.active_power(raw_loads[i].get())
        } else {
            profile.p_sleep
        };
    }
    SwitchOutcome {
        effective_mbs_load: effective,
        feasible: qos_feasible(effective, cfg),
        power_w,
    }
}

/// Instantaneous power saved by `switch` relative to keeping everything on.
/// Negative when sleeping a cell costs more at the macro than it saves
/// locally; never clamped.
pub fn power_saved(
    raw_loads: &[LoadFraction],
    switch: &SwitchVector,
    profiles: &ProfileSet,
    cfg: &MacroCellConfig,
) -> f64 {
    let all_on = evaluate_switch(raw_loads, &SwitchVector::all_on(cfg.n_bs()), cfg, profiles);
    let with_switch = evaluate_switch(raw_loads, switch, cfg, profiles);
    all_on.power_w - with_switch.power_w
}

/// Traffic carried before and after switching, in comparable units.
///
/// Under bandwidth scaling the comparable unit is load x class bandwidth;
/// under literal offloading it is the plain load fraction. For any feasible
/// assignment the two sides are equal: offloading moves traffic, it does not
/// drop it.
pub fn served_traffic(
    raw_loads: &[LoadFraction],
    switch: &SwitchVector,
    cfg: &MacroCellConfig,
    profiles: &ProfileSet,
) -> (f64, f64) {
    let classes = cfg.bs_classes();
    let unit = |class: BsClass| match cfg.offload_scaling {
        OffloadScaling::BandwidthScaled => profiles.get(class).bandwidth_mhz,
        OffloadScaling::Literal => 1.0,
    };
    let before: f64 = raw_loads
        .iter()
        .zip(&classes)
        .map(|(l, c)| l.get() * unit(*c))
        .sum();
    let effective = offloaded_mbs_load(raw_loads[0], &raw_loads[1..], switch, cfg, profiles);
    let mut after = effective * unit(BsClass::Macro);
    for i in 1..raw_loads.len() {
        if switch.is_on(i) {
            after += raw_loads[i].get() * unit(classes[i]);
        }
    }
    (before, after)
}

/// Joules consumed by a sequence of per-slot powers, each held for
/// `slot_minutes`.
pub fn energy_over_horizon(per_slot_power_w: &[f64], slot_minutes: f64) -> f64 {
    assert!(slot_minutes > 0.0, "slot duration must be positive");
    per_slot_power_w.iter().sum::<f64>() * slot_minutes * 60.0
}

/// Energy saved by a method relative to the all-on baseline.
pub fn energy_saved(all_on_energy_j: f64, method_energy_j: f64) -> f64 {
    all_on_energy_j - method_energy_j
}

/// Percent of pre-switch traffic no longer carried after switching.
pub fn coverage_loss(traffic_before: f64, traffic_after: f64) -> Result<f64, NetworkError> {
    if traffic_before <= 0.0 || traffic_before.is_nan() {
        return Err(NetworkError::UndefinedCoverage);
    }
    Ok((traffic_before - traffic_after) / traffic_before * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lf(v: f64) -> LoadFraction {
        LoadFraction::new(v).unwrap()
    }

    fn cfg_with(classes: &[BsClass], scaling: OffloadScaling) -> MacroCellConfig {
        MacroCellConfig::new(classes.to_vec(), 1.0, scaling).unwrap()
    }

    #[test]
    fn offload_nothing_when_all_on() {
        let profiles = ProfileSet::default();
        let cfg = cfg_with(&[BsClass::Rrh, BsClass::Micro], OffloadScaling::Literal);
        let eff = offloaded_mbs_load(
            lf(0.3),
            &[lf(0.2), lf(0.1)],
            &SwitchVector::all_on(3),
            &cfg,
            &profiles,
        );
        assert_eq!(eff, 0.3);
    }

    #[test]
    fn offload_literal_adds_raw_fraction() {
        let profiles = ProfileSet::default();
        let cfg = cfg_with(&[BsClass::Rrh], OffloadScaling::Literal);
        let eff = offloaded_mbs_load(
            lf(0.3),
            &[lf(0.2)],
            &SwitchVector::from_sbs_bits(&[false]),
            &cfg,
            &profiles,
        );
        assert!((eff - 0.5).abs() < 1e-15);
    }

    #[test]
    fn offload_bandwidth_scaled_converts_by_ratio() {
        let profiles = ProfileSet::default();
        let cfg = cfg_with(&[BsClass::Femto], OffloadScaling::BandwidthScaled);
        let eff = offloaded_mbs_load(
            lf(0.3),
            &[lf(0.2)],
            &SwitchVector::from_sbs_bits(&[false]),
            &cfg,
            &profiles,
        );
        // 0.3 + 0.2 * 3/20
        assert!((eff - 0.33).abs() < 1e-15);
    }

    #[test]
    fn qos_boundary_is_inclusive() {
        let cfg = cfg_with(&[], OffloadScaling::Literal);
        assert!(qos_feasible(0.5, &cfg));
        assert!(!qos_feasible(1.2, &cfg));
        assert!(qos_feasible(1.0, &cfg));
    }

    #[test]
    fn power_saved_zero_for_all_on() {
        let profiles = ProfileSet::default();
        let cfg = cfg_with(
            &[BsClass::Rrh, BsClass::Pico],
            OffloadScaling::BandwidthScaled,
        );
        let saved = power_saved(
            &[lf(0.4), lf(0.6), lf(0.2)],
            &SwitchVector::all_on(3),
            &profiles,
            &cfg,
        );
        assert_eq!(saved, 0.0);
    }

    #[test]
    fn power_saved_rrh_off_hand_value() {
        // All-on: (130 + 0.3*94) + (84 + 0.2*56). Off: RRH sleeps at 56 and
        // the macro picks up 0.2 * 15/20 of load: 130 + 0.45*94.
        let profiles = ProfileSet::default();
        let cfg = cfg_with(&[BsClass::Rrh], OffloadScaling::BandwidthScaled);
        let saved = power_saved(
            &[lf(0.3), lf(0.2)],
            &SwitchVector::from_sbs_bits(&[false]),
            &profiles,
            &cfg,
        );
        assert!((saved - 25.1).abs() < 1e-9, "saved = {saved}");
    }

    #[test]
    fn power_saved_femto_off_is_negative() {
        let profiles = ProfileSet::default();
        let cfg = cfg_with(&[BsClass::Femto], OffloadScaling::BandwidthScaled);
        let saved = power_saved(
            &[lf(0.3), lf(0.2)],
            &SwitchVector::from_sbs_bits(&[false]),
            &profiles,
            &cfg,
        );
        assert!((saved - (-0.84)).abs() < 1e-9, "saved = {saved}");
    }

    #[test]
    fn power_saved_single_off_matches_symbolic_form() {
        // For a single sleeping small cell of class c at load psi:
        //   saved = (P_o - P_s) + psi*mu*P_tx - psi*scale*mu_mbs*P_tx_mbs
        let profiles = ProfileSet::default();
        let mbs = profiles.get(BsClass::Macro);
        for class in BsClass::ALL {
            for psi in [0.0, 0.5, 1.0] {
                let cfg = cfg_with(&[class], OffloadScaling::BandwidthScaled);
                let saved = power_saved(
                    &[lf(0.1), lf(psi)],
                    &SwitchVector::from_sbs_bits(&[false]),
                    &profiles,
                    &cfg,
                );
                let p = profiles.get(class);
                let scale = p.bandwidth_mhz / mbs.bandwidth_mhz;
                let symbolic = (p.p_fixed - p.p_sleep) + psi * p.amp_eff * p.p_tx_max
                    - psi * scale * mbs.amp_eff * mbs.p_tx_max;
                assert!(
                    (saved - symbolic).abs() < 1e-9,
                    "{class} at {psi}: {saved} vs {symbolic}"
                );
            }
        }
    }

    #[test]
    fn feasible_switches_conserve_traffic() {
        let profiles = ProfileSet::default();
        let mut state = 7u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for scaling in [OffloadScaling::BandwidthScaled, OffloadScaling::Literal] {
            for _ in 0..100 {
                let n_sbs = 1 + (next() * 6.0) as usize;
                let classes: Vec<BsClass> = (0..n_sbs)
                    .map(|_| BsClass::SMALL_CELLS[(next() * 4.0) as usize % 4])
                    .collect();
                let cfg = cfg_with(&classes, scaling);
                let mut loads = vec![lf(next() * 0.4)];
                for _ in 0..n_sbs {
                    loads.push(lf(next()));
                }
                let bits: Vec<bool> = (0..n_sbs).map(|_| next() < 0.5).collect();
                let switch = SwitchVector::from_sbs_bits(&bits);
                let outcome = evaluate_switch(&loads, &switch, &cfg, &profiles);
                if !outcome.feasible {
                    continue;
                }
                let (before, after) = served_traffic(&loads, &switch, &cfg, &profiles);
                assert!(
                    (before - after).abs() < 1e-12,
                    "conservation broke: {before} vs {after}"
                );
                assert!(coverage_loss(before.max(1e-12), after).unwrap().abs() < 1e-9);
            }
        }
    }

    #[test]
    fn energy_over_horizon_unit_conversion() {
        let day: Vec<f64> = vec![100.0; 144];
        assert_eq!(energy_over_horizon(&day, 10.0), 8_640_000.0);
        assert_eq!(energy_over_horizon(&[0.0], 10.0), 0.0);
        assert_eq!(energy_over_horizon(&[1.0], 1.0), 60.0);
        assert_eq!(energy_over_horizon(&[], 10.0), 0.0);
    }

    #[test]
    fn energy_saved_is_a_difference() {
        assert_eq!(energy_saved(100.0, 100.0), 0.0);
        assert_eq!(energy_saved(100.0, 60.0), 40.0);
    }

    #[test]
    fn coverage_loss_golden_values() {
        assert_eq!(coverage_loss(10.0, 10.0).unwrap(), 0.0);
        assert_eq!(coverage_loss(10.0, 0.0).unwrap(), 100.0);
        assert_eq!(coverage_loss(10.0, 9.0).unwrap(), 10.0);
        assert_eq!(
            coverage_loss(0.0, 0.0),
            Err(NetworkError::UndefinedCoverage)
        );
    }

    #[test]
    fn snapshot_effective_load_dominates_raw() {
        let profiles = ProfileSet::default();
        let cfg = cfg_with(
            &[BsClass::Rrh, BsClass::Micro],
            OffloadScaling::BandwidthScaled,
        );
        let all_on = NetworkSnapshot::build(
            vec![lf(0.4), lf(0.5), lf(0.6)],
            SwitchVector::all_on(3),
            &cfg,
            &profiles,
        );
        assert_eq!(all_on.effective_mbs_load(), 0.4);
        let one_off = NetworkSnapshot::build(
            vec![lf(0.4), lf(0.5), lf(0.6)],
            SwitchVector::from_sbs_bits(&[false, true]),
            &cfg,
            &profiles,
        );
        assert!(one_off.effective_mbs_load() >= 0.4);
    }

    #[test]
    fn snapshot_total_power_uses_effective_load() {
        let profiles = ProfileSet::default();
        let cfg = cfg_with(&[BsClass::Rrh], OffloadScaling::BandwidthScaled);
        let snap = NetworkSnapshot::build(
            vec![lf(0.3), lf(0.2)],
            SwitchVector::from_sbs_bits(&[false]),
            &cfg,
            &profiles,
        );
        // Macro at 0.45 load plus a sleeping RRH.
        let expected = 130.0 + 0.45 * 94.0 + 56.0;
        assert!((snap.total_power(&cfg, &profiles).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn capacity_limit_validation() {
        assert!(MacroCellConfig::new(vec![], 0.0, OffloadScaling::Literal).is_err());
        assert!(MacroCellConfig::new(vec![], 1.2, OffloadScaling::Literal).is_err());
        assert!(MacroCellConfig::new(vec![], 1.0, OffloadScaling::Literal).is_ok());
    }

    #[test]
    fn switch_vector_guards_the_macro() {
        assert!(SwitchVector::from_gamma(vec![false, true]).is_err());
        let sv = SwitchVector::from_gamma(vec![true, false, true]).unwrap();
        assert_eq!(sv.n_off(), 1);
        assert_eq!(sv.sbs_bits(), &[false, true]);
    }
}

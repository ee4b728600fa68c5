//! Property tests for the invariants that hold across the whole input
//! space rather than at hand-picked points.

use proptest::prelude::*;

use cellsleep::agent::{reward, AgentAction, RewardNormalizer};
use cellsleep::baselines::exhaustive_search;
use cellsleep::fedlearn::aggregate;
use cellsleep::network::{
    evaluate_switch, served_traffic, MacroCellConfig, OffloadScaling, SwitchVector,
};
use cellsleep::nn::{
    load_params, save_params, HiddenActivation, LayerSpec, OutputActivation, ParamVector,
};
use cellsleep::power::{
    instantaneous_power, required_rbs, user_rate, BsClass, LoadFraction, ProfileSet,
};
use cellsleep::traffic::{emit_trace, ingest_trace, split, GridSeries};

fn class_strategy() -> impl Strategy<Value = BsClass> {
    prop_oneof![
        Just(BsClass::Rrh),
        Just(BsClass::Micro),
        Just(BsClass::Pico),
        Just(BsClass::Femto),
    ]
}

fn scaling_strategy() -> impl Strategy<Value = OffloadScaling> {
    prop_oneof![
        Just(OffloadScaling::BandwidthScaled),
        Just(OffloadScaling::Literal)
    ]
}

proptest! {
    #[test]
    fn active_power_increases_with_load(
        class in prop_oneof![
            Just(BsClass::Macro), Just(BsClass::Rrh), Just(BsClass::Micro),
            Just(BsClass::Pico), Just(BsClass::Femto)
        ],
        lo in 0.0..1.0f64,
        delta in 1e-6..1.0f64,
    ) {
        let profiles = ProfileSet::default();
        let hi = (lo + delta).min(1.0);
        prop_assume!(hi > lo);
        let p = profiles.get(class);
        let at_lo = instantaneous_power(p, lo, true).unwrap();
        let at_hi = instantaneous_power(p, hi, true).unwrap();
        prop_assert!(at_hi > at_lo);
        prop_assert!(p.p_sleep < at_lo);
    }

    #[test]
    fn granted_blocks_always_cover_the_rate(
        rate in 0.0..500.0f64,
        bandwidth in 0.01..50.0f64,
        sinr in 1e-6..40.0f64,
    ) {
        let blocks = required_rbs(rate, bandwidth, sinr).unwrap();
        let achieved = user_rate(blocks, bandwidth, sinr).unwrap();
        prop_assert!(achieved >= rate - 1e-9);
        if blocks > 0 {
            let under = user_rate(blocks - 1, bandwidth, sinr).unwrap();
            prop_assert!(under < rate + 1e-9, "one block fewer should not suffice");
        }
    }

    #[test]
    fn feasible_switches_conserve_traffic(
        classes in prop::collection::vec(class_strategy(), 1..8),
        scaling in scaling_strategy(),
        seed_loads in prop::collection::vec(0.0..1.0f64, 9),
        bits in prop::collection::vec(any::<bool>(), 7),
    ) {
        let profiles = ProfileSet::default();
        let cfg = MacroCellConfig::new(classes.clone(), 1.0, scaling).unwrap();
        let n = classes.len();
        let loads: Vec<LoadFraction> = seed_loads[..=n]
            .iter()
            .map(|&l| LoadFraction::new(l).unwrap())
            .collect();
        let switch = SwitchVector::from_sbs_bits(&bits[..n]);
        let outcome = evaluate_switch(&loads, &switch, &cfg, &profiles);
        if outcome.feasible {
            let (before, after) = served_traffic(&loads, &switch, &cfg, &profiles);
            prop_assert!((before - after).abs() < 1e-9 * before.max(1.0));
            // All-on is a strict no-op on the macro.
            let all_on = evaluate_switch(&loads, &SwitchVector::all_on(n + 1), &cfg, &profiles);
            prop_assert_eq!(all_on.effective_mbs_load, loads[0].get());
        }
    }

    #[test]
    fn no_feasible_vector_beats_exhaustive_search(
        classes in prop::collection::vec(class_strategy(), 1..7),
        seed_loads in prop::collection::vec(0.0..1.0f64, 8),
        bits in prop::collection::vec(any::<bool>(), 6),
    ) {
        let profiles = ProfileSet::default();
        let cfg = MacroCellConfig::new(
            classes.clone(),
            1.0,
            OffloadScaling::BandwidthScaled,
        ).unwrap();
        let n = classes.len();
        let loads: Vec<LoadFraction> = seed_loads[..=n]
            .iter()
            .map(|&l| LoadFraction::new(l).unwrap())
            .collect();
        let best = exhaustive_search(&loads, &profiles, &cfg).unwrap();
        let candidate = SwitchVector::from_sbs_bits(&bits[..n]);
        let outcome = evaluate_switch(&loads, &candidate, &cfg, &profiles);
        if outcome.feasible {
            prop_assert!(best.power_w <= outcome.power_w);
        }
    }

    #[test]
    fn chronological_split_partitions_every_index(n in 1usize..5000, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let train = a.min(b);
        let val = (a.max(b) - train).min(1.0 - train);
        let test = (1.0 - train - val).max(0.0);
        let s = split(n, [train, val, test]).unwrap();
        prop_assert_eq!(s.train.start, 0);
        prop_assert_eq!(s.train.end, s.val.start);
        prop_assert_eq!(s.val.end, s.test.start);
        prop_assert_eq!(s.test.end, n);
    }

    #[test]
    fn traces_round_trip_through_csv(
        values in prop::collection::vec(0.0..1000.0f64, 1..200),
        grid in "[a-z]{1,8}",
    ) {
        let series = GridSeries { grid_id: grid, values };
        let mut buf = Vec::new();
        emit_trace(&mut buf, [&series]).unwrap();
        let (grids, report) = ingest_trace(buf.as_slice()).unwrap();
        prop_assert_eq!(&grids[&series.grid_id].values, &series.values);
        prop_assert_eq!(report.filled_missing, 0);
    }

    #[test]
    fn rewards_stay_in_range_and_the_maximum_never_decreases(
        classes in prop::collection::vec(class_strategy(), 1..6),
        steps in prop::collection::vec((prop::collection::vec(0.0..1.0f64, 7), prop::collection::vec(any::<bool>(), 6)), 1..40),
    ) {
        let profiles = ProfileSet::default();
        let cfg = MacroCellConfig::new(classes.clone(), 1.0, OffloadScaling::BandwidthScaled).unwrap();
        let n = classes.len();
        let mut normalizer = RewardNormalizer::new();
        let mut prev_max = normalizer.max();
        for (loads, bits) in steps {
            let raw: Vec<LoadFraction> = loads[..=n]
                .iter()
                .map(|&l| LoadFraction::new(l).unwrap())
                .collect();
            let action = AgentAction { bits: bits[..n].to_vec() };
            let r = reward(&raw, &action, &profiles, &cfg, &mut normalizer);
            prop_assert!((-1.0..=1.0).contains(&r), "reward {} escaped", r);
            prop_assert!(normalizer.max() >= prev_max);
            prev_max = normalizer.max();
        }
    }

    #[test]
    fn aggregation_is_the_weighted_mean(
        deltas in prop::collection::vec(
            (prop::collection::vec(-10.0..10.0f64, 5), 1usize..200),
            1..6
        ),
    ) {
        let input: Vec<(ParamVector, usize)> = deltas
            .iter()
            .map(|(v, n)| (ParamVector::from_vec(v.clone()), *n))
            .collect();
        let mean = aggregate(&input).unwrap();
        let total: usize = deltas.iter().map(|(_, n)| n).sum();
        for i in 0..5 {
            let expected: f64 = deltas
                .iter()
                .map(|(v, n)| *n as f64 / total as f64 * v[i])
                .sum();
            prop_assert!((mean.values()[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoints_round_trip(
        widths in prop::collection::vec(1usize..12, 2..5),
        seed in any::<u64>(),
    ) {
        let spec = LayerSpec::new(widths, HiddenActivation::Relu, OutputActivation::Sigmoid).unwrap();
        let params = cellsleep::nn::init_params(&spec, seed);
        let mut buf = Vec::new();
        save_params(&mut buf, &spec, &params).unwrap();
        let (loaded_spec, loaded_params) = load_params(buf.as_slice()).unwrap();
        prop_assert_eq!(loaded_spec, spec);
        prop_assert_eq!(loaded_params, params);
    }
}

use proptest::prelude::*;

use softdp::harness::{self, generate, EventMix, GenParams};
use softdp::model::{validate_scenario, Protocol, SimDuration, SimTime};
use softdp::simnet::{EventQueue, Simulation};

fn small(protocol: Protocol) -> GenParams {
    GenParams { protocol, max_switches: 8, events: 10, mix: EventMix::ALL, ..GenParams::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn queue_pops_in_time_then_insertion_order(times in prop::collection::vec(0u64..50, 1..60), cancel in prop::collection::vec(any::<bool>(), 60)) {
        let mut q = EventQueue::new();
        let mut kept = Vec::new();
        for (i, &t) in times.iter().enumerate() {
            let h = q.schedule(SimTime::from_nanos(t), i).unwrap();
            if cancel[i] {
                prop_assert_eq!(q.cancel(h), Some(i));
            } else {
                kept.push((t, i));
            }
        }
        kept.sort();
        let mut popped = Vec::new();
        while let Some((t, _, i)) = q.pop_until(SimTime::from_nanos(1_000)) {
            popped.push((t.as_nanos(), i));
        }
        if let Some(&(last, _)) = popped.last() {
            if last > 0 {
                prop_assert!(q.schedule(SimTime::from_nanos(last - 1), 0).is_err());
            }
        }
        prop_assert_eq!(popped, kept);
    }

    #[test]
    fn generated_scenarios_are_valid(seed in any::<u64>()) {
        let spec = generate(seed, &small(Protocol::Softdp));
        prop_assert_eq!(validate_scenario(&spec), vec![]);
    }

    #[test]
    fn softdp_map_tracks_ground_truth(seed in 0u64..10_000) {
        let spec = generate(seed, &small(Protocol::Softdp));
        let until = spec.last_event_at() + SimDuration::from_secs(5);
        let sim = Simulation::run(spec, until).unwrap();
        prop_assert_eq!(sim.controller().map().directed_links(), sim.physical().live_directed_links());
    }

    #[test]
    fn baselines_track_ground_truth_after_expiry(seed in 0u64..10_000, v2 in any::<bool>()) {
        let protocol = if v2 { Protocol::Ofdpv2 } else { Protocol::Ofdp };
        let spec = generate(seed, &small(protocol));
        // Three missed rounds expire a link; one more round learns new ones.
        let until = spec.last_event_at() + SimDuration::from_secs(45);
        let sim = Simulation::run(spec, until).unwrap();
        prop_assert_eq!(sim.controller().map().directed_links(), sim.physical().live_directed_links());
    }

    #[test]
    fn reruns_share_a_digest(seed in 0u64..10_000) {
        let spec = generate(seed, &small(Protocol::Softdp));
        let until = harness::default_horizon(&spec);
        let a = harness::run_scenario(spec.clone(), until).unwrap().0.digest;
        let b = harness::run_scenario(spec, until).unwrap().0.digest;
        prop_assert_eq!(a, b);
    }
}

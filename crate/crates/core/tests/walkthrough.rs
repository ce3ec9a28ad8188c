use softdp::harness::{self, builtin};
use softdp::metrics::EventKind;
use softdp::model::{Protocol, SimDuration};

#[test]
fn softdp_walkthrough_matches_predictions() {
    let spec = builtin::walkthrough(Protocol::Softdp);
    let tick = spec.bfd.interval;
    let (report, sim) = harness::run_scenario(spec.clone(), harness::default_horizon(&spec)).unwrap();
    let kinds: Vec<EventKind> = report.metrics.events.iter().map(|e| e.kind).collect();
    assert_eq!(
        kinds,
        [EventKind::Bootstrap, EventKind::SwitchJoin, EventKind::SwitchLeave, EventKind::LinkAdd, EventKind::LinkRemove]
    );
    assert_eq!(report.metrics.unresolved(), 0);
    for e in &report.metrics.events[1..] {
        let learned = e.learning.unwrap();
        let predicted = e.predicted_learning.as_ref().unwrap().value;
        match e.kind {
            EventKind::SwitchJoin | EventKind::LinkAdd => assert_eq!(learned, predicted, "{}", e.label),
            _ => assert!(learned >= predicted && learned <= predicted + tick, "{}: {learned} vs {predicted}", e.label),
        }
    }
    let add = &report.metrics.events[3];
    assert_eq!(add.adaptation, add.predicted_adaptation.as_ref().map(|p| p.value));
    assert_eq!(sim.controller().map().directed_links(), sim.physical().live_directed_links());
}

#[test]
fn baselines_converge_on_the_same_map() {
    for protocol in [Protocol::Ofdp, Protocol::Ofdpv2] {
        let spec = builtin::walkthrough(protocol);
        let until = spec.last_event_at() + SimDuration::from_secs(40);
        let (report, sim) = harness::run_scenario(spec, until).unwrap();
        assert_eq!(sim.controller().map().directed_links(), sim.physical().live_directed_links(), "{protocol:?}");
        // Periodic discovery is bounded by the round length plus expiry, not
        // by an analytic prediction.
        assert!(report.deltas.is_empty());
        let add = report.metrics.events.iter().find(|e| e.kind == EventKind::LinkAdd).unwrap();
        assert!(add.learning.unwrap() <= SimDuration::from_secs(10) + SimDuration::from_millis(10));
    }
}

#[test]
fn softdp_is_quiet_between_events() {
    let spec = builtin::square(Protocol::Softdp);
    let (report, _) = harness::run_scenario(spec, softdp::model::SimTime::ZERO + SimDuration::from_secs(60)).unwrap();
    assert!(report.metrics.rounds.is_empty());
    let late: u64 = report.metrics.per_second.iter().filter(|s| s.second >= 1).map(|s| s.total()).sum();
    assert_eq!(late, 0);
}

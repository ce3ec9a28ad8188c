use softdp::adversary::{AttackAction, AttackKind, Evidence};
use softdp::harness::{self, builtin};
use softdp::model::{Protocol, SimDuration, TimelineEvent};

fn verdict(kind: AttackKind, protocol: Protocol) -> softdp::adversary::AttackVerdict {
    harness::run_attack(builtin::attack(kind, protocol)).unwrap().expect("verdict")
}

#[test]
fn flood_overwhelms_baselines_only() {
    for protocol in [Protocol::Ofdp, Protocol::Ofdpv2] {
        let v = verdict(AttackKind::Flood, protocol);
        assert!(v.succeeded);
        let Evidence::Flood { packet_ins, attack_rate, threshold, .. } = v.evidence else { panic!() };
        assert!(packet_ins > 1000 && attack_rate > threshold);
    }
    let v = verdict(AttackKind::Flood, Protocol::Softdp);
    assert!(!v.succeeded);
    let Evidence::Flood { packet_ins, from_flooded_port, frames_sent, .. } = v.evidence else { panic!() };
    assert_eq!((packet_ins, from_flooded_port), (0, 0));
    assert_eq!(frames_sent, 10_000);
}

#[test]
fn forged_lldp_fabricates_links_on_baselines() {
    for kind in [AttackKind::Inject, AttackKind::Relay] {
        for protocol in [Protocol::Ofdp, Protocol::Ofdpv2] {
            let v = verdict(kind, protocol);
            let Evidence::FakeLinks { links, .. } = &v.evidence else { panic!("{kind}") };
            assert!(v.succeeded && !links.is_empty(), "{kind} vs {protocol:?}");
        }
        let v = verdict(kind, Protocol::Softdp);
        // Outside a window the switch drops the frame before the controller
        // sees it, so nothing is even rejected.
        let Evidence::FakeLinks { links, .. } = &v.evidence else { panic!("{kind}") };
        assert!(!v.succeeded && links.is_empty(), "{kind} vs softdp");
    }
}

#[test]
fn spoofed_session_needs_a_leaked_identity() {
    for protocol in [Protocol::Ofdp, Protocol::Ofdpv2] {
        let v = verdict(AttackKind::Spoof, protocol);
        let Evidence::Session { bound_to_rogue, .. } = v.evidence else { panic!() };
        assert!(v.succeeded && bound_to_rogue);
    }
    let v = verdict(AttackKind::Spoof, Protocol::Softdp);
    assert!(!v.succeeded);
}

#[test]
fn fingerprint_identifies_the_baseline_controller() {
    let v = verdict(AttackKind::Fingerprint, Protocol::Ofdp);
    let Evidence::Fingerprint { period, identified, .. } = v.evidence else { panic!() };
    assert!(v.succeeded);
    assert_eq!(period, Some(SimDuration::from_secs(10)));
    assert!(identified.is_some());
}

#[test]
fn relay_inside_a_window_is_the_residual() {
    let r = harness::relay_residual(&[SimDuration::from_millis(1), SimDuration::from_millis(900)]).unwrap();
    assert!(r.points[0].succeeded, "a fast tunnel opened by a port bounce lands in the window");
    assert!(!r.points[1].succeeded, "a tunnel slower than the window is rejected");
    assert_eq!(r.success_rate, 0.5);
}

#[test]
fn attack_scenarios_carry_exactly_one_attack() {
    for kind in AttackKind::ALL {
        let spec = builtin::attack(kind, Protocol::Softdp);
        let attacks: Vec<&AttackAction> = spec
            .timeline
            .iter()
            .filter_map(|e| match &e.event {
                TimelineEvent::Attack(a) => Some(a),
                _ => None,
            })
            .collect();
        assert_eq!(attacks.len(), 1);
        assert_eq!(attacks[0].kind(), kind);
    }
}

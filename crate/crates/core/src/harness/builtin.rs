//! Scenarios shipped with the crate.

use crate::adversary::{AttackAction, AttackKind};
use crate::model::{
    ChannelSpec, Delay, Dpid, HostSpec, LinkSpec, PortRef, Protocol, ScenarioSpec, SimDuration, SimTime,
    SwitchSpec, TimelineEntry, TimelineEvent,
};

pub const NAMES: [&str; 9] = [
    "square",
    "walkthrough",
    "attack_spoof",
    "attack_inject",
    "attack_relay",
    "attack_flood",
    "attack_fingerprint",
    "chain",
    "mesh",
];

const MS: SimDuration = SimDuration::from_millis(1);

fn p(dpid: u64, port: u16) -> PortRef {
    PortRef::new(dpid, port)
}

fn link(a: PortRef, b: PortRef) -> LinkSpec {
    LinkSpec::new(a, b, MS)
}

fn at_secs(s: u64) -> SimTime {
    SimTime::ZERO + SimDuration::from_secs(s)
}

fn with_switches(id: &str, protocol: Protocol, ports: &[u16]) -> ScenarioSpec {
    let mut spec = ScenarioSpec::new(id, protocol);
    for (i, n) in ports.iter().enumerate() {
        let dpid = i as u64 + 1;
        spec.switches.push(SwitchSpec::new(dpid, *n));
        spec.channels.push(ChannelSpec::new(Dpid(dpid), MS));
    }
    spec
}

/// Resolves a builtin by name. `chain` and `mesh` take a size suffix, as in
/// `chain:8`.
pub fn by_name(name: &str, protocol: Protocol) -> Option<ScenarioSpec> {
    let (base, size) = match name.split_once(':') {
        Some((b, n)) => (b, Some(n.parse::<usize>().ok()?)),
        None => (name, None),
    };
    let spec = match base {
        "square" => square(protocol),
        "walkthrough" => walkthrough(protocol),
        "chain" => chain(size.unwrap_or(4), protocol),
        "mesh" => mesh(size.unwrap_or(4), protocol),
        other => {
            let kind = other.strip_prefix("attack_")?.parse::<AttackKind>().ok()?;
            attack(kind, protocol)
        }
    };
    Some(spec)
}

/// Four switches in a ring, two ports each.
pub fn square(protocol: Protocol) -> ScenarioSpec {
    let mut spec = with_switches("square", protocol, &[2, 2, 2, 2]);
    spec.links = vec![
        link(p(1, 1), p(2, 1)),
        link(p(2, 2), p(3, 1)),
        link(p(3, 2), p(4, 2)),
        link(p(4, 1), p(1, 2)),
    ];
    spec
}

/// s1-s2-s3 at start; s4 joins, s2 leaves, s1-s3 is cabled, s3-s4 is cut.
pub fn walkthrough(protocol: Protocol) -> ScenarioSpec {
    let mut spec = with_switches("walkthrough", protocol, &[2, 2, 2, 2]);
    spec.switches[3].joined = false;
    spec.links = vec![link(p(1, 1), p(2, 1)), link(p(2, 2), p(3, 1))];
    spec.timeline = vec![
        TimelineEntry {
            at: at_secs(1),
            event: TimelineEvent::SwitchJoin {
                switch: Dpid(4),
                links: vec![link(p(1, 2), p(4, 1)), link(p(4, 2), p(3, 2))],
            },
        },
        TimelineEntry { at: at_secs(2), event: TimelineEvent::SwitchLeave { switch: Dpid(2) } },
        TimelineEntry { at: at_secs(3), event: TimelineEvent::LinkAdd(link(p(1, 1), p(3, 1))) },
        TimelineEntry { at: at_secs(4), event: TimelineEvent::LinkRemove { a: p(3, 2), b: p(4, 2) } },
    ];
    spec
}

/// Linear chain; every switch also has one host on port 1.
pub fn chain(n: usize, protocol: Protocol) -> ScenarioSpec {
    let ports: Vec<u16> = (0..n).map(|i| if n == 1 { 1 } else if i == 0 || i + 1 == n { 2 } else { 3 }).collect();
    let mut spec = with_switches(&format!("chain:{n}"), protocol, &ports);
    for i in 1..n as u64 {
        let right = if i == 1 { 2 } else { 3 };
        spec.links.push(link(p(i, right), p(i + 1, 2)));
    }
    add_hosts(&mut spec);
    spec
}

/// Full mesh; every switch also has one host on port 1.
pub fn mesh(n: usize, protocol: Protocol) -> ScenarioSpec {
    let mut spec = with_switches(&format!("mesh:{n}"), protocol, &vec![n as u16; n]);
    // Port k+1 of switch i faces the k-th other switch.
    let port_to = |i: u64, j: u64| -> u16 { (if j < i { j } else { j - 1 }) as u16 + 1 };
    for i in 1..=n as u64 {
        for j in i + 1..=n as u64 {
            spec.links.push(link(p(i, port_to(i, j)), p(j, port_to(j, i))));
        }
    }
    add_hosts(&mut spec);
    spec
}

fn add_hosts(spec: &mut ScenarioSpec) {
    for sw in &spec.switches {
        spec.hosts.push(HostSpec { name: format!("h{}", sw.dpid.0), port: sw.dpid.port(1), delay: MS.into() });
    }
}

/// Chain s1-s2-s3 with h1 on s1.p2, h2 on s3.p2 and an observer on s1.p3,
/// plus one attack of the given kind.
pub fn attack(kind: AttackKind, protocol: Protocol) -> ScenarioSpec {
    let mut spec = with_switches(&format!("attack_{kind}"), protocol, &[3, 2, 2]);
    spec.links = vec![link(p(1, 1), p(2, 1)), link(p(2, 2), p(3, 1))];
    spec.hosts = vec![
        HostSpec { name: "h1".into(), port: p(1, 2), delay: Delay::fixed(MS) },
        HostSpec { name: "h2".into(), port: p(3, 2), delay: Delay::fixed(MS) },
        HostSpec { name: "eve".into(), port: p(1, 3), delay: Delay::fixed(MS) },
    ];
    let (at, action) = match kind {
        AttackKind::Spoof => (25, AttackAction::Spoof { observer: "eve".into(), channel_delay: Delay::fixed(MS) }),
        AttackKind::Inject => (
            25,
            AttackAction::Inject { host: "h1".into(), forged: p(3, 2), count: 1, interval: MS, bounce: false },
        ),
        AttackKind::Relay => (
            5,
            AttackAction::Relay {
                a: "h1".into(),
                b: "h2".into(),
                tunnel_delay: MS,
                duration: SimDuration::from_secs(20),
                bounce: false,
            },
        ),
        AttackKind::Flood => (
            25,
            AttackAction::Flood {
                host: "h1".into(),
                rate: 10_000,
                duration: SimDuration::from_secs(1),
                bounce: false,
                threshold: 100,
            },
        ),
        AttackKind::Fingerprint => (35, AttackAction::Fingerprint { host: "eve".into() }),
    };
    spec.timeline.push(TimelineEntry { at: at_secs(at), event: TimelineEvent::Attack(action) });
    spec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_scenario;

    #[test]
    fn every_builtin_validates() {
        for protocol in Protocol::ALL {
            for name in NAMES {
                let spec = by_name(name, protocol).unwrap();
                assert_eq!(validate_scenario(&spec), vec![], "{name}");
            }
            for n in [0, 1, 2, 5] {
                assert_eq!(validate_scenario(&chain(n, protocol)), vec![]);
                assert_eq!(validate_scenario(&mesh(n, protocol)), vec![]);
            }
        }
    }

    #[test]
    fn chain_and_mesh_port_totals() {
        let total = |s: &ScenarioSpec| s.switches.iter().map(|s| s.ports as usize).sum::<usize>();
        assert_eq!(total(&chain(4, Protocol::Ofdp)), 4 + 6);
        assert_eq!(total(&mesh(4, Protocol::Ofdp)), 16);
        assert_eq!(chain(4, Protocol::Ofdp).links.len(), 3);
        assert_eq!(mesh(5, Protocol::Ofdp).links.len(), 10);
    }

    #[test]
    fn unknown_names() {
        assert!(by_name("ring", Protocol::Softdp).is_none());
        assert!(by_name("chain:x", Protocol::Softdp).is_none());
        assert_eq!(by_name("chain:7", Protocol::Softdp).unwrap().switches.len(), 7);
    }
}

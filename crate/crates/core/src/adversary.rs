//! Attacks on topology discovery and their verdicts.
//!
//! An [`AttackAction`] is a timeline entry; the engine carries it out
//! through the hosts named in it. Verdicts are computed afterwards from the
//! trace alone, via [`evaluate`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{
    canonical, ControlMessage, Delay, Dpid, Frame, ModelError, PortRef, ScenarioSpec, SimDuration,
    SimTime, SwitchId, TimelineEvent, Violation,
};
use crate::simnet::{ControlDirection, Trace, TraceKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Spoof,
    Inject,
    Relay,
    Flood,
    Fingerprint,
}

impl AttackKind {
    pub const ALL: [AttackKind; 5] =
        [AttackKind::Spoof, AttackKind::Inject, AttackKind::Relay, AttackKind::Flood, AttackKind::Fingerprint];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::Spoof => "spoof",
            AttackKind::Inject => "inject",
            AttackKind::Relay => "relay",
            AttackKind::Flood => "flood",
            AttackKind::Fingerprint => "fingerprint",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ModelError::BadIdentifier(s.to_string()))
    }
}

fn one() -> u32 {
    1
}
fn default_gap() -> SimDuration {
    SimDuration::from_millis(1)
}
fn default_threshold() -> u32 {
    100
}

/// What the adversary does, starting at the timeline entry's time.
///
/// `bounce` re-plugs the attacker's host port first, which makes the switch
/// report the port up and the controller open a discovery window on it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "attack", rename_all = "snake_case")]
pub enum AttackAction {
    /// Replay the chassis identity seen by `observer` over a rogue control
    /// channel.
    Spoof {
        observer: String,
        #[serde(default)]
        channel_delay: Delay,
    },
    /// Emit `count` forged LLDP frames claiming to come from `forged`.
    Inject {
        host: String,
        forged: PortRef,
        #[serde(default = "one")]
        count: u32,
        #[serde(default = "default_gap")]
        interval: SimDuration,
        #[serde(default)]
        bounce: bool,
    },
    /// Tunnel every LLDP frame seen at one host out of the other, both ways.
    Relay {
        a: String,
        b: String,
        tunnel_delay: SimDuration,
        duration: SimDuration,
        #[serde(default)]
        bounce: bool,
    },
    /// Emit `rate` random LLDP frames per second for `duration`.
    Flood {
        host: String,
        rate: u32,
        duration: SimDuration,
        #[serde(default)]
        bounce: bool,
        /// LLDP PACKET_INs per second above the pre-attack rate that count
        /// as a successful flood.
        #[serde(default = "default_threshold")]
        threshold: u32,
    },
    /// Classify the controller from LLDP content and period seen at `host`.
    Fingerprint { host: String },
}

impl AttackAction {
    pub fn kind(&self) -> AttackKind {
        match self {
            AttackAction::Spoof { .. } => AttackKind::Spoof,
            AttackAction::Inject { .. } => AttackKind::Inject,
            AttackAction::Relay { .. } => AttackKind::Relay,
            AttackAction::Flood { .. } => AttackKind::Flood,
            AttackAction::Fingerprint { .. } => AttackKind::Fingerprint,
        }
    }

    pub fn hosts(&self) -> Vec<&str> {
        match self {
            AttackAction::Spoof { observer, .. } => vec![observer],
            AttackAction::Inject { host, .. } | AttackAction::Flood { host, .. } | AttackAction::Fingerprint { host } => {
                vec![host]
            }
            AttackAction::Relay { a, b, .. } => vec![a, b],
        }
    }

    /// Checks that attach points exist. Element names are relative to the
    /// timeline entry.
    pub fn validate(&self, spec: &ScenarioSpec) -> Vec<Violation> {
        let mut v = Vec::new();
        for h in self.hosts() {
            if spec.host(h).is_none() {
                v.push(Violation::new(h, "unknown host"));
            }
        }
        match self {
            AttackAction::Inject { forged, count, .. } => {
                if spec.switch(forged.dpid).is_none() {
                    v.push(Violation::new(forged, "forged identity names an unknown switch"));
                }
                if *count == 0 {
                    v.push(Violation::new("count", "must be at least 1"));
                }
            }
            AttackAction::Relay { a, b, duration, .. } => {
                if a == b {
                    v.push(Violation::new(b, "relay needs two distinct hosts"));
                } else if let (Some(ha), Some(hb)) = (spec.host(a), spec.host(b)) {
                    if ha.port.dpid == hb.port.dpid {
                        v.push(Violation::new(b, "relay hosts must sit on different switches"));
                    }
                }
                if duration.is_zero() {
                    v.push(Violation::new("duration", "must be positive"));
                }
            }
            AttackAction::Flood { rate, duration, .. } => {
                if *rate == 0 {
                    v.push(Violation::new("rate", "must be positive"));
                }
                if duration.is_zero() {
                    v.push(Violation::new("duration", "must be positive"));
                }
            }
            AttackAction::Spoof { .. } | AttackAction::Fingerprint { .. } => {}
        }
        v
    }
}

/// Known controller: LLDP system description plus discovery period.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub name: String,
    pub content: String,
    pub period: SimDuration,
}

/// Synthetic signature database. Two entries share content and differ only
/// in period.
pub fn signature_db() -> Vec<Signature> {
    vec![
        Signature {
            name: "alpha".into(),
            content: "alpha-sdn-controller 2.1".into(),
            period: SimDuration::from_secs(10),
        },
        Signature {
            name: "alpha-fast".into(),
            content: "alpha-sdn-controller 2.1".into(),
            period: SimDuration::from_secs(5),
        },
        Signature { name: "beta".into(), content: "beta-ctl 4.0".into(), period: SimDuration::from_secs(15) },
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Evidence {
    NoMaterial {
        detail: String,
    },
    Session {
        victim: Dpid,
        claimed: Option<SwitchId>,
        rogue_channel: Option<u32>,
        bound_to_rogue: bool,
    },
    FakeLinks {
        links: Vec<(PortRef, PortRef)>,
        first_at: Option<SimTime>,
        rejected: u64,
    },
    Flood {
        frames_sent: u64,
        packet_ins: u64,
        from_flooded_port: u64,
        attack_rate: f64,
        baseline_rate: f64,
        threshold: f64,
    },
    Fingerprint {
        frames: usize,
        content: String,
        period: Option<SimDuration>,
        candidates: Vec<String>,
        identified: Option<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackVerdict {
    pub index: usize,
    pub kind: AttackKind,
    pub at: SimTime,
    pub succeeded: bool,
    pub evidence: Evidence,
}

/// Directed links the controller held at some point that never existed
/// physically at that moment, with the time each first appeared.
pub fn fake_links(trace: &Trace, spec: &ScenarioSpec) -> Vec<(SimTime, PortRef, PortRef)> {
    let mut physical: BTreeSet<(PortRef, PortRef)> = BTreeSet::new();
    let joined: BTreeSet<Dpid> = spec.switches.iter().filter(|s| s.joined).map(|s| s.dpid).collect();
    for l in &spec.links {
        if joined.contains(&l.a.dpid) && joined.contains(&l.b.dpid) {
            physical.insert((l.a, l.b));
            physical.insert((l.b, l.a));
        }
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in trace.iter() {
        match &r.kind {
            TraceKind::Timeline { added, removed, .. } => {
                for (a, b) in added {
                    physical.insert((*a, *b));
                    physical.insert((*b, *a));
                }
                for (a, b) in removed {
                    physical.remove(&(*a, *b));
                    physical.remove(&(*b, *a));
                }
            }
            TraceKind::MapChanged { added_links, .. } => {
                for l in added_links {
                    if !physical.contains(l) && seen.insert(*l) {
                        out.push((r.t, l.0, l.1));
                    }
                }
            }
            _ => {}
        }
    }
    out
}

fn rejected_since(trace: &Trace, at: SimTime) -> u64 {
    trace
        .iter()
        .filter(|r| r.t >= at && matches!(r.kind, TraceKind::LldpRejected { .. }))
        .count() as u64
}

fn lldp_seen_by(trace: &Trace, host: &str, until: SimTime) -> Vec<(SimTime, crate::model::LldpFrame)> {
    trace
        .iter()
        .take_while(|r| r.t <= until)
        .filter_map(|r| match &r.kind {
            TraceKind::HostReceived { host: h, frame: Frame::Lldp(f), .. } if h == host => Some((r.t, f.clone())),
            _ => None,
        })
        .collect()
}

/// Computes the verdict of the attack at timeline position `index`.
pub fn evaluate(spec: &ScenarioSpec, trace: &Trace, index: usize) -> Option<AttackVerdict> {
    let entry = spec.timeline.get(index)?;
    let TimelineEvent::Attack(action) = &entry.event else {
        return None;
    };
    let at = entry.at;
    let (succeeded, evidence) = match action {
        AttackAction::Spoof { observer, .. } => evaluate_spoof(spec, trace, index, at, observer),
        AttackAction::Inject { forged, .. } => {
            let links: Vec<_> = fake_links(trace, spec)
                .into_iter()
                .filter(|(t, a, b)| *t >= at && (a == forged || b == forged))
                .collect();
            (
                !links.is_empty(),
                Evidence::FakeLinks {
                    first_at: links.first().map(|l| l.0),
                    links: links.iter().map(|l| (l.1, l.2)).collect(),
                    rejected: rejected_since(trace, at),
                },
            )
        }
        AttackAction::Relay { a, b, .. } => {
            let pa = spec.host(a).map(|h| h.port);
            let pb = spec.host(b).map(|h| h.port);
            let links: Vec<_> = fake_links(trace, spec)
                .into_iter()
                .filter(|(t, x, y)| {
                    *t >= at && pa.is_some() && pb.is_some() && canonical(*x, *y) == canonical(pa.unwrap(), pb.unwrap())
                })
                .collect();
            (
                !links.is_empty(),
                Evidence::FakeLinks {
                    first_at: links.first().map(|l| l.0),
                    links: links.iter().map(|l| (l.1, l.2)).collect(),
                    rejected: rejected_since(trace, at),
                },
            )
        }
        AttackAction::Flood { host, duration, threshold, .. } => {
            evaluate_flood(spec, trace, at, host, *duration, *threshold)
        }
        AttackAction::Fingerprint { host } => evaluate_fingerprint(spec, trace, at, host),
    };
    Some(AttackVerdict { index, kind: action.kind(), at, succeeded, evidence })
}

fn evaluate_spoof(spec: &ScenarioSpec, trace: &Trace, index: usize, at: SimTime, observer: &str) -> (bool, Evidence) {
    let Some(victim) = spec.host(observer).map(|h| h.port.dpid) else {
        return (false, Evidence::NoMaterial { detail: format!("unknown host {observer}") });
    };
    let started = trace
        .iter()
        .position(|r| matches!(&r.kind, TraceKind::AttackStarted { index: i, .. } if *i == index));
    let Some(start) = started else {
        return (false, Evidence::NoMaterial { detail: "attack never started".into() });
    };
    let rogue = trace.records()[start..].iter().find_map(|r| match &r.kind {
        TraceKind::RogueConnected { channel, claimed } if r.t >= at => Some((*channel, *claimed)),
        _ => None,
    });
    let Some((channel, claimed)) = rogue else {
        return (false, Evidence::NoMaterial { detail: "no LLDP observed; nothing to spoof".into() });
    };
    let bound = trace.records()[start..]
        .iter()
        .any(|r| matches!(&r.kind, TraceKind::SessionBound { dpid, channel: c } if *dpid == victim && *c == channel));
    (
        bound,
        Evidence::Session { victim, claimed: Some(claimed), rogue_channel: Some(channel), bound_to_rogue: bound },
    )
}

fn evaluate_flood(
    spec: &ScenarioSpec,
    trace: &Trace,
    at: SimTime,
    host: &str,
    duration: SimDuration,
    threshold: u32,
) -> (bool, Evidence) {
    let port = spec.host(host).map(|h| h.port);
    let end = at + duration;
    let before = SimTime::from_nanos(at.as_nanos().saturating_sub(duration.as_nanos()));
    let (mut during, mut baseline, mut from_port, mut sent) = (0u64, 0u64, 0u64, 0u64);
    for r in trace.iter() {
        match &r.kind {
            TraceKind::ControlDelivered {
                direction: ControlDirection::ToController,
                dpid,
                message: ControlMessage::PacketIn { in_port, .. },
                ..
            } => {
                if r.t >= at && r.t < end {
                    during += 1;
                    if port.is_some_and(|p| Some(p.dpid) == *dpid && p.port == *in_port) {
                        from_port += 1;
                    }
                } else if r.t >= before && r.t < at {
                    baseline += 1;
                }
            }
            TraceKind::HostSent { host: h, .. } if h == host && r.t >= at && r.t < end => sent += 1,
            _ => {}
        }
    }
    let secs = duration.as_secs_f64();
    let base_secs = at.saturating_since(before).as_secs_f64();
    let attack_rate = during as f64 / secs;
    let baseline_rate = if base_secs > 0.0 { baseline as f64 / base_secs } else { 0.0 };
    let succeeded = attack_rate - baseline_rate > threshold as f64;
    (
        succeeded,
        Evidence::Flood {
            frames_sent: sent,
            packet_ins: during,
            from_flooded_port: from_port,
            attack_rate,
            baseline_rate,
            threshold: threshold as f64,
        },
    )
}

fn evaluate_fingerprint(spec: &ScenarioSpec, trace: &Trace, at: SimTime, host: &str) -> (bool, Evidence) {
    let frames = lldp_seen_by(trace, host, at);
    let mut by_content: BTreeMap<Vec<u8>, Vec<SimTime>> = BTreeMap::new();
    for (t, f) in &frames {
        by_content.entry(f.system_description.clone()).or_default().push(*t);
    }
    let best = by_content.iter().max_by_key(|(_, ts)| ts.len());
    let Some((content, times)) = best.filter(|(_, ts)| ts.len() >= 2) else {
        return (false, Evidence::NoMaterial { detail: "no periodic LLDP observed".into() });
    };
    let mut gaps: Vec<u64> = times.windows(2).map(|w| w[1].saturating_since(w[0]).as_nanos()).collect();
    gaps.sort_unstable();
    let period = SimDuration::from_nanos(gaps[gaps.len() / 2]);
    let content = String::from_utf8_lossy(content).into_owned();
    let candidates: Vec<String> = signature_db()
        .into_iter()
        .filter(|s| {
            let tol = s.period.as_nanos() / 10;
            s.content == content && period.as_nanos().abs_diff(s.period.as_nanos()) <= tol
        })
        .map(|s| s.name)
        .collect();
    let identified = if candidates.len() == 1 { Some(candidates[0].clone()) } else { None };
    let succeeded = identified.as_deref() == Some(spec.controller.name.as_str());
    (
        succeeded,
        Evidence::Fingerprint { frames: frames.len(), content, period: Some(period), candidates, identified },
    )
}

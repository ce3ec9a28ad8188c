//! Ordered record of everything that happened during a run.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{ControlMessage, Dpid, Frame, GroupCommand, PortNo, PortRef, SimTime, SwitchId};
use crate::switch_agent::{DropReason, GroupId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlDirection {
    ToController,
    FromController,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceKind {
    /// A timeline entry fired; `added`/`removed` are the ground-truth link
    /// changes it caused.
    Timeline {
        index: usize,
        label: String,
        added: Vec<(PortRef, PortRef)>,
        removed: Vec<(PortRef, PortRef)>,
        joined: Option<Dpid>,
        left: Option<Dpid>,
    },
    Bootstrap {
        switches: usize,
    },
    ControlDelivered {
        channel: u32,
        dpid: Option<Dpid>,
        direction: ControlDirection,
        sent_at: SimTime,
        message: ControlMessage,
    },
    ControlDropped {
        channel: u32,
        direction: ControlDirection,
        sent_at: SimTime,
        message: ControlMessage,
    },
    FrameDelivered {
        from: PortRef,
        to: PortRef,
        frame: Frame,
    },
    FrameDropped {
        at: Option<PortRef>,
        reason: FrameDropReason,
    },
    HostReceived {
        host: String,
        port: PortRef,
        frame: Frame,
    },
    HostSent {
        host: String,
        port: PortRef,
        frame: Frame,
    },
    BfdUp {
        port: PortRef,
    },
    BfdTick {
        port: PortRef,
        misses: u32,
    },
    BfdDown {
        port: PortRef,
    },
    MapChanged {
        added_links: Vec<(PortRef, PortRef)>,
        removed_links: Vec<(PortRef, PortRef)>,
        added_switches: Vec<Dpid>,
        removed_switches: Vec<Dpid>,
    },
    SessionBound {
        dpid: Dpid,
        channel: u32,
    },
    RogueConnected {
        channel: u32,
        claimed: SwitchId,
    },
    GroupApplied {
        switch: Dpid,
        dst: Dpid,
        command: GroupCommand,
        buckets: Vec<PortNo>,
    },
    /// A failover group changed its live bucket; `to = None` means no
    /// bucket is left and traffic is black-holed.
    Switchover {
        switch: Dpid,
        group: GroupId,
        from: Option<PortNo>,
        to: Option<PortNo>,
    },
    ProbeDelivered {
        from: PortRef,
        to: PortRef,
        dst: Dpid,
    },
    RuleExpired {
        switch: Dpid,
        cookie: u64,
    },
    DiscoveryRound {
        round: u64,
    },
    LldpRejected {
        ingress: PortRef,
        reason: RejectReason,
    },
    AttackStarted {
        index: usize,
        attack: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameDropReason {
    LinkDown,
    Unconnected,
    Switch(DropReason),
    SwitchOffline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Unknown nonce, replayed nonce, or arrival after the window closed.
    Suspicious,
    /// Probe issued before the ingress port's window opened.
    Premature,
}

impl TraceKind {
    pub fn name(&self) -> &'static str {
        match self {
            TraceKind::Timeline { .. } => "timeline",
            TraceKind::Bootstrap { .. } => "bootstrap",
            TraceKind::ControlDelivered { .. } => "control_delivered",
            TraceKind::ControlDropped { .. } => "control_dropped",
            TraceKind::FrameDelivered { .. } => "frame_delivered",
            TraceKind::FrameDropped { .. } => "frame_dropped",
            TraceKind::HostReceived { .. } => "host_received",
            TraceKind::HostSent { .. } => "host_sent",
            TraceKind::BfdUp { .. } => "bfd_up",
            TraceKind::BfdTick { .. } => "bfd_tick",
            TraceKind::BfdDown { .. } => "bfd_down",
            TraceKind::MapChanged { .. } => "map_changed",
            TraceKind::SessionBound { .. } => "session_bound",
            TraceKind::RogueConnected { .. } => "rogue_connected",
            TraceKind::GroupApplied { .. } => "group_applied",
            TraceKind::Switchover { .. } => "switchover",
            TraceKind::ProbeDelivered { .. } => "probe_delivered",
            TraceKind::RuleExpired { .. } => "rule_expired",
            TraceKind::DiscoveryRound { .. } => "discovery_round",
            TraceKind::LldpRejected { .. } => "lldp_rejected",
            TraceKind::AttackStarted { .. } => "attack_started",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: SimTime,
    pub seq: u64,
    #[serde(flatten)]
    pub kind: TraceKind,
}

#[derive(Serialize)]
struct Line<'a> {
    t_ns: u64,
    seq: u64,
    kind: &'static str,
    digest: &'a str,
    payload: &'a serde_json::Value,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn push(&mut self, t: SimTime, kind: TraceKind) {
        let seq = self.records.len() as u64;
        self.records.push(TraceRecord { t, seq, kind });
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter()
    }

    /// One JSON object per line: `t_ns`, `seq`, `kind`, a short digest of
    /// the payload, and the payload itself.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let mut payload = serde_json::to_value(&r.kind).expect("trace payload serializes");
            if let Some(map) = payload.as_object_mut() {
                map.remove("kind");
            }
            let text = payload.to_string();
            let digest = hex::encode(&Sha256::digest(text.as_bytes())[..8]);
            let line = Line { t_ns: r.t.as_nanos(), seq: r.seq, kind: r.kind.name(), digest: &digest, payload: &payload };
            out.push_str(&serde_json::to_string(&line).expect("line serializes"));
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the JSONL export, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_has_one_line_per_record() {
        let mut t = Trace::default();
        t.push(SimTime::from_nanos(5), TraceKind::Bootstrap { switches: 4 });
        t.push(SimTime::from_nanos(7), TraceKind::DiscoveryRound { round: 1 });
        let text = t.to_jsonl();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(v["t_ns"], 5);
        assert_eq!(v["kind"], "bootstrap");
        assert_eq!(v["payload"]["switches"], 4);
        assert_eq!(v["digest"].as_str().unwrap().len(), 16);
    }

    #[test]
    fn digest_changes_with_content() {
        let mut a = Trace::default();
        a.push(SimTime::ZERO, TraceKind::Bootstrap { switches: 1 });
        let mut b = Trace::default();
        b.push(SimTime::ZERO, TraceKind::Bootstrap { switches: 2 });
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), a.clone().digest());
        assert_eq!(a.digest().len(), 64);
    }
}

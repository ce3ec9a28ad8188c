//! Simulated OpenFlow switch: ports, a priority flow table with hard
//! timeouts, fast-failover groups and BFD session endpoints.
//!
//! The agent is a pure state machine. Every handler returns the
//! [`SwitchOutput`]s the engine must act on (messages to the controller,
//! frames to transmit, timers to arm); the agent never schedules anything
//! itself.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{
    BfdParams, ControlMessage, DataFrame, Dpid, Frame, FrameKind, GroupCommand, GroupMod,
    LldpFrame, OutPort, PortNo, PortRef, PortStatusEntry, Protocol, SimDuration, SimTime,
    SwitchId, SwitchSpec,
};
use crate::simnet::EventHandle;

/// Priority of the default rule that drops (sOFTDP) or punts (baselines)
/// every LLDP frame.
pub const PRIORITY_LLDP_DEFAULT: u16 = 100;
/// Priority of the temporary per-port rules that forward LLDP to the
/// controller while a discovery window is open.
pub const PRIORITY_LLDP_WINDOW: u16 = 200;
/// Priority of the data rules that point at failover groups.
pub const PRIORITY_GROUP: u16 = 300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleId(pub u64);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlowMatch {
    pub frame: Option<FrameKind>,
    pub in_port: Option<PortNo>,
    pub dst: Option<Dpid>,
}

impl FlowMatch {
    pub fn lldp() -> Self {
        FlowMatch { frame: Some(FrameKind::Lldp), ..Default::default() }
    }

    pub fn lldp_on(port: PortNo) -> Self {
        FlowMatch { frame: Some(FrameKind::Lldp), in_port: Some(port), dst: None }
    }

    pub fn data_to(dst: Dpid) -> Self {
        FlowMatch { frame: Some(FrameKind::Data), in_port: None, dst: Some(dst) }
    }

    pub fn matches(&self, frame: &Frame, ingress: PortNo) -> bool {
        if self.frame.is_some_and(|k| k != frame.kind()) {
            return false;
        }
        if self.in_port.is_some_and(|p| p != ingress) {
            return false;
        }
        match (self.dst, frame) {
            (None, _) => true,
            (Some(d), Frame::Data(data)) => data.dst == d,
            (Some(_), Frame::Lldp(_)) => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowAction {
    Drop,
    SendToController,
    Output(PortNo),
    Group(GroupId),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlowRule {
    pub priority: u16,
    #[serde(rename = "match")]
    pub matcher: FlowMatch,
    pub action: FlowAction,
    pub hard_timeout: Option<SimDuration>,
    /// Opaque tag copied into PACKET_INs raised by this rule.
    pub cookie: u64,
}

impl FlowRule {
    /// The rule every sOFTDP switch starts with.
    pub fn drop_lldp() -> Self {
        FlowRule {
            priority: PRIORITY_LLDP_DEFAULT,
            matcher: FlowMatch::lldp(),
            action: FlowAction::Drop,
            hard_timeout: None,
            cookie: 0,
        }
    }

    /// The rule OFDP-style switches use to report every LLDP frame.
    pub fn punt_lldp() -> Self {
        FlowRule { action: FlowAction::SendToController, ..FlowRule::drop_lldp() }
    }

    /// Temporary LLDP-to-controller rule for one port.
    pub fn lldp_window(port: PortNo, timeout: SimDuration, cookie: u64) -> Self {
        FlowRule {
            priority: PRIORITY_LLDP_WINDOW,
            matcher: FlowMatch::lldp_on(port),
            action: FlowAction::SendToController,
            hard_timeout: Some(timeout),
            cookie,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bucket {
    pub watch_port: PortNo,
    pub out_port: PortNo,
}

impl Bucket {
    pub fn via(port: PortNo) -> Self {
        Bucket { watch_port: port, out_port: port }
    }
}

/// Ordered buckets; traffic leaves through the first one whose watched port
/// is live.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FailoverGroup {
    pub group_id: GroupId,
    pub buckets: Vec<Bucket>,
}

impl FailoverGroup {
    pub fn live_bucket(&self, is_live: impl Fn(PortNo) -> bool) -> Option<Bucket> {
        self.buckets.iter().copied().find(|b| is_live(b.watch_port))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BfdState {
    Init,
    Up,
    Down,
}

/// One end of an asynchronous-mode BFD session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BfdSession {
    pub local: PortRef,
    pub remote: PortRef,
    pub interval: SimDuration,
    pub multiplier: u32,
    pub misses: u32,
    pub state: BfdState,
    /// When the three-way handshake completed; ticks fall on
    /// `up_since + k * interval` for k >= 1.
    pub up_since: Option<SimTime>,
}

impl BfdSession {
    pub fn new(local: PortRef, remote: PortRef, params: BfdParams) -> Self {
        BfdSession {
            local,
            remote,
            interval: params.interval,
            multiplier: params.multiplier,
            misses: 0,
            state: BfdState::Init,
            up_since: None,
        }
    }

    pub fn handshake_complete(&mut self, now: SimTime) {
        if self.state == BfdState::Init {
            self.state = BfdState::Up;
            self.up_since = Some(now);
            self.misses = 0;
        }
    }

    /// Evaluates one transmit interval. `received` tells whether at least
    /// one control packet from the peer arrived during it. Returns
    /// `Some(Down)` exactly once, on the tick where the miss counter
    /// reaches the multiplier.
    pub fn step(&mut self, received: bool) -> Option<BfdState> {
        if self.state != BfdState::Up {
            return None;
        }
        if received {
            self.misses = 0;
            return None;
        }
        self.misses += 1;
        if self.misses >= self.multiplier {
            self.state = BfdState::Down;
            return Some(BfdState::Down);
        }
        None
    }

    /// First tick boundary at or after `t`, or `None` before the session is up.
    pub fn first_tick_at_or_after(&self, t: SimTime) -> Option<SimTime> {
        let up = self.up_since?;
        let step = self.interval.as_nanos();
        let elapsed = t.saturating_since(up).as_nanos();
        let k = elapsed.div_ceil(step).max(1);
        Some(up + SimDuration::from_nanos(k * step))
    }

    /// Control packets this end has transmitted up to `t`.
    pub fn packets_sent(&self, t: SimTime) -> u64 {
        match self.up_since {
            Some(up) => t.saturating_since(up).as_nanos() / self.interval.as_nanos(),
            None => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub no: PortNo,
    pub admin_up: bool,
    pub link_up: bool,
}

impl Port {
    pub fn is_live(&self) -> bool {
        self.admin_up && self.link_up
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstalledRule {
    pub id: RuleId,
    pub rule: FlowRule,
    pub installed_at: SimTime,
    pub expires_at: Option<SimTime>,
    #[serde(skip)]
    pub expiry: Option<EventHandle>,
}

impl InstalledRule {
    fn active_at(&self, now: SimTime) -> bool {
        self.expires_at.is_none_or(|t| now < t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NoRule,
    DropRule,
    NoLiveBucket,
    PortDown,
    UnknownPort,
    NotLldp,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SwitchOutput {
    ToController(ControlMessage),
    Transmit { port: PortNo, frame: Frame },
    ScheduleRuleExpiry { rule: RuleId, at: SimTime },
    CancelTimer(EventHandle),
    StartBfdHandshake { port: PortNo, remote: PortRef },
    Switchover { group: GroupId, from: Option<PortNo>, to: Option<PortNo> },
    Delivered(Frame),
    Dropped(DropReason),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchCounters {
    pub dropped: u64,
    pub packet_ins: u64,
    pub bfd_status_sent: u64,
    pub port_status_sent: u64,
}

/// Per-switch state owned by the simulation engine.
#[derive(Clone, Debug)]
pub struct SwitchAgent {
    id: SwitchId,
    protocol: Protocol,
    bfd_params: BfdParams,
    lldp_window: SimDuration,
    ports: BTreeMap<PortNo, Port>,
    flow_table: Vec<InstalledRule>,
    groups: BTreeMap<GroupId, (Dpid, FailoverGroup)>,
    bfd: BTreeMap<PortNo, BfdSession>,
    next_rule: u64,
    counters: SwitchCounters,
}

/// Serializable snapshot of a switch for golden comparisons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchDump {
    pub switch: SwitchId,
    pub ports: Vec<Port>,
    pub flow_table: Vec<InstalledRule>,
    pub groups: Vec<(Dpid, FailoverGroup)>,
    pub bfd_sessions: Vec<BfdSession>,
}

fn window_cookie(port: PortNo) -> u64 {
    0x5_0000 | port.0 as u64
}

impl SwitchAgent {
    pub fn new(spec: &SwitchSpec, protocol: Protocol, bfd_params: BfdParams, lldp_window: SimDuration) -> Self {
        let ports = (1..=spec.ports)
            .map(|n| (PortNo(n), Port { no: PortNo(n), admin_up: true, link_up: false }))
            .collect();
        let mut agent = SwitchAgent {
            id: SwitchId { dpid: spec.dpid, local_mac: spec.mac() },
            protocol,
            bfd_params,
            lldp_window,
            ports,
            flow_table: Vec::new(),
            groups: BTreeMap::new(),
            bfd: BTreeMap::new(),
            next_rule: 0,
            counters: SwitchCounters::default(),
        };
        let default_rule = match protocol {
            Protocol::Softdp => FlowRule::drop_lldp(),
            Protocol::Ofdp | Protocol::Ofdpv2 => FlowRule::punt_lldp(),
        };
        agent.install(default_rule, SimTime::ZERO);
        agent
    }

    pub fn id(&self) -> SwitchId {
        self.id
    }

    pub fn dpid(&self) -> Dpid {
        self.id.dpid
    }

    pub fn counters(&self) -> SwitchCounters {
        self.counters
    }

    pub fn port(&self, no: PortNo) -> Option<&Port> {
        self.ports.get(&no)
    }

    pub fn is_live(&self, no: PortNo) -> bool {
        self.ports.get(&no).is_some_and(Port::is_live)
    }

    pub fn flow_table(&self) -> &[InstalledRule] {
        &self.flow_table
    }

    pub fn group(&self, id: GroupId) -> Option<&FailoverGroup> {
        self.groups.get(&id).map(|(_, g)| g)
    }

    pub fn bfd_session(&self, port: PortNo) -> Option<&BfdSession> {
        self.bfd.get(&port)
    }

    pub fn bfd_sessions(&self) -> impl Iterator<Item = &BfdSession> {
        self.bfd.values()
    }

    /// Sets the link state silently, e.g. while loading the initial topology.
    pub fn set_link_state(&mut self, port: PortNo, up: bool) {
        if let Some(p) = self.ports.get_mut(&port) {
            p.link_up = up;
        }
    }

    pub fn feature_reply(&self) -> ControlMessage {
        ControlMessage::FeatureReply {
            switch: self.id,
            ports: self
                .ports
                .values()
                .map(|p| PortStatusEntry { port: p.no, up: p.is_live() })
                .collect(),
        }
    }

    /// A port changed state in a way the switch reports: a link came up,
    /// or the port was administratively toggled. Emits one PORT_STATUS.
    /// On "up" with a known peer, a BFD handshake starts (sOFTDP only).
    pub fn on_port_event(&mut self, port: PortNo, up: bool, peer: Option<PortRef>, now: SimTime) -> Vec<SwitchOutput> {
        let before = self.group_snapshot();
        let Some(p) = self.ports.get_mut(&port) else {
            return vec![SwitchOutput::Dropped(DropReason::UnknownPort)];
        };
        if up {
            p.admin_up = true;
            p.link_up = true;
        } else {
            p.admin_up = false;
        }
        let mut out = vec![SwitchOutput::ToController(ControlMessage::PortStatus {
            port: self.id.dpid.port(port.0),
            up,
        })];
        self.counters.port_status_sent += 1;
        if self.protocol == Protocol::Softdp {
            if up {
                // Provisional trap so discovery probes that overtake the
                // controller's own window rule are not lost.
                out.extend(self.install(
                    FlowRule::lldp_window(port, self.lldp_window, window_cookie(port)),
                    now,
                ));
                if let Some(remote) = peer {
                    let local = self.id.dpid.port(port.0);
                    self.bfd.insert(port, BfdSession::new(local, remote, self.bfd_params));
                    out.push(SwitchOutput::StartBfdHandshake { port, remote });
                }
            } else {
                self.bfd.remove(&port);
            }
        }
        out.extend(self.regroup(&before));
        out
    }

    /// Powers on with the given ports cabled. No PORT_STATUS is sent: the
    /// FEATURE_REPLY reports them. Under sOFTDP each port gets a
    /// provisional LLDP trap and linked ports start a BFD handshake.
    pub fn boot(&mut self, cabled: &[(PortNo, Option<PortRef>)], now: SimTime) -> Vec<SwitchOutput> {
        let mut out = Vec::new();
        for &(port, peer) in cabled {
            let Some(p) = self.ports.get_mut(&port) else {
                continue;
            };
            p.link_up = true;
            if self.protocol == Protocol::Softdp {
                out.extend(self.install(
                    FlowRule::lldp_window(port, self.lldp_window, window_cookie(port)),
                    now,
                ));
                if let Some(remote) = peer {
                    let local = self.id.dpid.port(port.0);
                    self.bfd.insert(port, BfdSession::new(local, remote, self.bfd_params));
                    out.push(SwitchOutput::StartBfdHandshake { port, remote });
                }
            }
        }
        out
    }

    /// Carrier lost without an administrative change. Nothing is reported;
    /// fast-failover groups react immediately and BFD reports later.
    pub fn on_carrier_lost(&mut self, port: PortNo) -> Vec<SwitchOutput> {
        let before = self.group_snapshot();
        if let Some(p) = self.ports.get_mut(&port) {
            p.link_up = false;
        }
        self.regroup(&before)
    }

    pub fn bfd_handshake_complete(&mut self, port: PortNo, now: SimTime) {
        if let Some(s) = self.bfd.get_mut(&port) {
            s.handshake_complete(now);
        }
    }

    /// Runs one BFD tick on `port`. Emits BFD_STATUS(DOWN) exactly when the
    /// session transitions to DOWN.
    pub fn bfd_step(&mut self, port: PortNo, received: bool) -> Option<ControlMessage> {
        let session = self.bfd.get_mut(&port)?;
        match session.step(received) {
            Some(BfdState::Down) => {
                self.counters.bfd_status_sent += 1;
                Some(ControlMessage::BfdStatus { port: session.local, state: BfdState::Down })
            }
            _ => None,
        }
    }

    fn best_rule(&self, frame: &Frame, ingress: PortNo, now: SimTime) -> Option<&InstalledRule> {
        // Highest priority wins; among equals the newest rule.
        self.flow_table
            .iter()
            .filter(|r| r.active_at(now) && r.rule.matcher.matches(frame, ingress))
            .max_by_key(|r| (r.rule.priority, r.id))
    }

    /// Processes a frame arriving on `ingress`.
    pub fn forward(&mut self, frame: Frame, ingress: PortNo, now: SimTime) -> Vec<SwitchOutput> {
        if !self.ports.contains_key(&ingress) {
            self.counters.dropped += 1;
            return vec![SwitchOutput::Dropped(DropReason::UnknownPort)];
        }
        if let Frame::Data(d) = &frame {
            if d.switchover_probe || d.dst == self.id.dpid {
                return vec![SwitchOutput::Delivered(frame)];
            }
        }
        let Some(rule) = self.best_rule(&frame, ingress, now) else {
            self.counters.dropped += 1;
            return vec![SwitchOutput::Dropped(DropReason::NoRule)];
        };
        let cookie = rule.rule.cookie;
        match rule.rule.action {
            FlowAction::Drop => {
                self.counters.dropped += 1;
                vec![SwitchOutput::Dropped(DropReason::DropRule)]
            }
            FlowAction::SendToController => match frame {
                Frame::Lldp(mut lldp) => {
                    if cookie != 0 {
                        lldp.ingress_window_tag = Some(cookie.to_be_bytes().to_vec());
                    }
                    self.counters.packet_ins += 1;
                    vec![SwitchOutput::ToController(ControlMessage::PacketIn { in_port: ingress, frame: lldp })]
                }
                Frame::Data(_) => {
                    self.counters.dropped += 1;
                    vec![SwitchOutput::Dropped(DropReason::NotLldp)]
                }
            },
            FlowAction::Output(port) => self.transmit(port, frame),
            FlowAction::Group(g) => {
                let bucket = self.group(g).and_then(|grp| grp.live_bucket(|p| self.is_live(p)));
                match bucket {
                    Some(b) => self.transmit(b.out_port, frame),
                    None => {
                        self.counters.dropped += 1;
                        vec![SwitchOutput::Dropped(DropReason::NoLiveBucket)]
                    }
                }
            }
        }
    }

    fn transmit(&mut self, port: PortNo, frame: Frame) -> Vec<SwitchOutput> {
        if self.is_live(port) {
            vec![SwitchOutput::Transmit { port, frame }]
        } else {
            self.counters.dropped += 1;
            vec![SwitchOutput::Dropped(DropReason::PortDown)]
        }
    }

    /// Executes a PACKET_OUT. `AllPorts` replicates the frame onto every
    /// live port and rewrites the port id of each copy.
    pub fn packet_out(&mut self, out: OutPort, frame: LldpFrame) -> Vec<SwitchOutput> {
        match out {
            OutPort::Port(p) => self.transmit(p, Frame::Lldp(frame)),
            OutPort::AllPorts => {
                let live: Vec<PortNo> = self.ports.values().filter(|p| p.is_live()).map(|p| p.no).collect();
                live.into_iter()
                    .map(|p| {
                        let mut copy = frame.clone();
                        copy.port_id = p.0.to_be_bytes().to_vec();
                        SwitchOutput::Transmit { port: p, frame: Frame::Lldp(copy) }
                    })
                    .collect()
            }
        }
    }

    /// Installs a rule, replacing any rule with identical priority and match.
    fn install(&mut self, rule: FlowRule, now: SimTime) -> Vec<SwitchOutput> {
        let mut out = Vec::new();
        if let Some(pos) = self
            .flow_table
            .iter()
            .position(|r| r.rule.priority == rule.priority && r.rule.matcher == rule.matcher)
        {
            let old = self.flow_table.remove(pos);
            if let Some(h) = old.expiry {
                out.push(SwitchOutput::CancelTimer(h));
            }
        }
        self.next_rule += 1;
        let id = RuleId(self.next_rule);
        let expires_at = rule.hard_timeout.map(|t| now + t);
        if let Some(at) = expires_at {
            out.push(SwitchOutput::ScheduleRuleExpiry { rule: id, at });
        }
        self.flow_table.push(InstalledRule { id, rule, installed_at: now, expires_at, expiry: None });
        out
    }

    /// Records the engine's timer handle for a rule's hard timeout.
    pub fn attach_expiry(&mut self, rule: RuleId, handle: EventHandle) {
        if let Some(r) = self.flow_table.iter_mut().find(|r| r.id == rule) {
            r.expiry = Some(handle);
        }
    }

    /// Removes a rule whose hard timeout fired, returning it if it was
    /// still installed.
    pub fn expire_rule(&mut self, rule: RuleId) -> Option<FlowRule> {
        let pos = self.flow_table.iter().position(|r| r.id == rule)?;
        Some(self.flow_table.remove(pos).rule)
    }

    /// Applies a FLOW_MOD or GROUP_MOD. Group installs immediately send a
    /// switchover probe through the group's live bucket.
    pub fn apply_mod(&mut self, msg: &ControlMessage, now: SimTime) -> Vec<SwitchOutput> {
        match msg {
            ControlMessage::FlowMod { rule } => self.install(rule.clone(), now),
            ControlMessage::GroupMod(gm) => self.apply_group_mod(gm, now),
            _ => Vec::new(),
        }
    }

    fn apply_group_mod(&mut self, gm: &GroupMod, now: SimTime) -> Vec<SwitchOutput> {
        let gid = gm.group.group_id;
        let data_rule = FlowRule {
            priority: PRIORITY_GROUP,
            matcher: FlowMatch::data_to(gm.dst),
            action: FlowAction::Group(gid),
            hard_timeout: None,
            cookie: 0,
        };
        match gm.command {
            GroupCommand::Delete => {
                self.groups.remove(&gid);
                self.flow_table.retain(|r| r.rule != data_rule);
                Vec::new()
            }
            GroupCommand::Add | GroupCommand::Modify => {
                self.groups.insert(gid, (gm.dst, gm.group.clone()));
                let mut out = self.install(data_rule, now);
                if let Some(b) = gm.group.live_bucket(|p| self.is_live(p)) {
                    out.extend(self.probe(gm.dst, b.out_port));
                }
                out
            }
        }
    }

    fn probe(&mut self, dst: Dpid, port: PortNo) -> Vec<SwitchOutput> {
        let frame = Frame::Data(DataFrame { src: self.id.dpid, dst, switchover_probe: true });
        self.transmit(port, frame)
    }

    fn group_snapshot(&self) -> BTreeMap<GroupId, Option<PortNo>> {
        self.groups
            .iter()
            .map(|(id, (_, g))| (*id, g.live_bucket(|p| self.is_live(p)).map(|b| b.out_port)))
            .collect()
    }

    /// Emits a switchover (plus probe) for every group whose live bucket
    /// changed since `before`.
    fn regroup(&mut self, before: &BTreeMap<GroupId, Option<PortNo>>) -> Vec<SwitchOutput> {
        let after = self.group_snapshot();
        let mut out = Vec::new();
        for (id, now_port) in after {
            let was = before.get(&id).copied().flatten();
            if was != now_port {
                out.push(SwitchOutput::Switchover { group: id, from: was, to: now_port });
                if let Some(p) = now_port {
                    let dst = self.groups[&id].0;
                    out.extend(self.probe(dst, p));
                }
            }
        }
        out
    }

    /// Dispatches a message arriving from the controller.
    pub fn handle_control(&mut self, msg: &ControlMessage, now: SimTime) -> Vec<SwitchOutput> {
        match msg {
            ControlMessage::FeatureRequest => vec![SwitchOutput::ToController(self.feature_reply())],
            ControlMessage::PacketOut { out, frame } => self.packet_out(*out, frame.clone()),
            ControlMessage::FlowMod { .. } | ControlMessage::GroupMod(_) => self.apply_mod(msg, now),
            _ => Vec::new(),
        }
    }

    pub fn dump(&self) -> SwitchDump {
        SwitchDump {
            switch: self.id,
            ports: self.ports.values().copied().collect(),
            flow_table: self.flow_table.clone(),
            groups: self.groups.values().cloned().collect(),
            bfd_sessions: self.bfd.values().cloned().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn softdp_switch(ports: u16) -> SwitchAgent {
        SwitchAgent::new(&SwitchSpec::new(4, ports), Protocol::Softdp, BfdParams::default(), SimDuration::from_millis(500))
    }

    fn lldp() -> Frame {
        Frame::Lldp(LldpFrame { chassis_id: vec![1], ..Default::default() })
    }

    fn ms(v: u64) -> SimTime {
        SimTime::ZERO + SimDuration::from_millis(v)
    }

    #[test]
    fn port_up_reports_status_and_starts_bfd() {
        let mut sw = softdp_switch(2);
        let peer = PortRef::new(1, 2);
        let out = sw.on_port_event(PortNo(1), true, Some(peer), ms(0));
        assert_eq!(
            out[0],
            SwitchOutput::ToController(ControlMessage::PortStatus { port: PortRef::new(4, 1), up: true })
        );
        assert!(out.contains(&SwitchOutput::StartBfdHandshake { port: PortNo(1), remote: peer }));
        assert_eq!(sw.bfd_session(PortNo(1)).unwrap().state, BfdState::Init);
    }

    #[test]
    fn admin_down_reports_port_status_only() {
        let mut sw = softdp_switch(2);
        sw.on_port_event(PortNo(1), true, Some(PortRef::new(1, 2)), ms(0));
        let out = sw.on_port_event(PortNo(1), false, None, ms(1));
        let to_ctl: Vec<_> = out
            .iter()
            .filter_map(|o| match o {
                SwitchOutput::ToController(m) => Some(m.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(to_ctl, vec![ControlMessage::PortStatus { port: PortRef::new(4, 1), up: false }]);
    }

    #[test]
    fn unlinked_port_up_has_no_session() {
        let mut sw = softdp_switch(2);
        let out = sw.on_port_event(PortNo(2), true, None, ms(0));
        assert!(!out.iter().any(|o| matches!(o, SwitchOutput::StartBfdHandshake { .. })));
        assert!(sw.bfd_session(PortNo(2)).is_none());
    }

    #[test]
    fn bfd_declares_down_after_multiplier_misses_once() {
        let mut s = BfdSession::new(PortRef::new(1, 1), PortRef::new(2, 1), BfdParams::default());
        assert_eq!(s.step(false), None, "INIT sessions never report");
        s.handshake_complete(ms(0));
        assert_eq!(s.step(false), None);
        assert_eq!(s.step(false), None);
        assert_eq!(s.step(false), Some(BfdState::Down));
        assert_eq!(s.step(false), None, "exactly one emission");
    }

    #[test]
    fn bfd_received_packet_resets_misses() {
        let mut s = BfdSession::new(PortRef::new(1, 1), PortRef::new(2, 1), BfdParams::default());
        s.handshake_complete(ms(0));
        s.step(false);
        s.step(false);
        assert_eq!(s.step(true), None);
        assert_eq!(s.misses, 0);
        s.step(false);
        s.step(false);
        assert_eq!(s.state, BfdState::Up);
    }

    #[test]
    fn bfd_tick_grid() {
        let mut s = BfdSession::new(PortRef::new(1, 1), PortRef::new(2, 1), BfdParams::default());
        s.handshake_complete(ms(10));
        let t_i = SimDuration::from_nanos(16_700_000);
        assert_eq!(s.first_tick_at_or_after(ms(10)), Some(ms(10) + t_i));
        assert_eq!(s.first_tick_at_or_after(ms(10) + t_i), Some(ms(10) + t_i));
        assert_eq!(s.first_tick_at_or_after(ms(27)), Some(ms(10) + t_i * 2));
        assert_eq!(s.packets_sent(ms(10) + SimDuration::from_secs(1)), 59);
    }

    #[test]
    fn drop_lldp_rule_drops_everything_by_default() {
        let mut sw = softdp_switch(2);
        sw.set_link_state(PortNo(1), true);
        assert_eq!(sw.forward(lldp(), PortNo(1), ms(0)), vec![SwitchOutput::Dropped(DropReason::DropRule)]);
    }

    #[test]
    fn window_rule_forwards_then_expires() {
        let mut sw = softdp_switch(2);
        sw.set_link_state(PortNo(1), true);
        let rule = FlowRule::lldp_window(PortNo(1), SimDuration::from_millis(500), 77);
        let out = sw.apply_mod(&ControlMessage::FlowMod { rule }, ms(0));
        let (id, at) = match out[0] {
            SwitchOutput::ScheduleRuleExpiry { rule, at } => (rule, at),
            ref o => panic!("unexpected {o:?}"),
        };
        assert_eq!(at, ms(500));
        match &sw.forward(lldp(), PortNo(1), ms(100))[0] {
            SwitchOutput::ToController(ControlMessage::PacketIn { in_port, frame }) => {
                assert_eq!(*in_port, PortNo(1));
                assert_eq!(frame.ingress_window_tag, Some(77u64.to_be_bytes().to_vec()));
            }
            o => panic!("unexpected {o:?}"),
        }
        // Lazily inactive at the deadline even before the timer fires.
        assert_eq!(sw.forward(lldp(), PortNo(1), ms(500)), vec![SwitchOutput::Dropped(DropReason::DropRule)]);
        assert_eq!(sw.expire_rule(id).map(|r| r.cookie), Some(77));
        assert!(sw.expire_rule(id).is_none());
    }

    #[test]
    fn equal_priority_newest_wins_and_replacement_cancels_timer() {
        let mut sw = softdp_switch(2);
        sw.set_link_state(PortNo(1), true);
        sw.set_link_state(PortNo(2), true);
        let r = |action| FlowRule {
            priority: 50,
            matcher: FlowMatch::data_to(Dpid(9)),
            action,
            hard_timeout: None,
            cookie: 0,
        };
        sw.apply_mod(&ControlMessage::FlowMod { rule: r(FlowAction::Output(PortNo(1))) }, ms(0));
        let data = Frame::Data(DataFrame { src: Dpid(4), dst: Dpid(9), switchover_probe: false });
        // Different match, same priority: newest wins.
        let mut other = r(FlowAction::Output(PortNo(2)));
        other.matcher.in_port = Some(PortNo(1));
        sw.apply_mod(&ControlMessage::FlowMod { rule: other }, ms(1));
        assert_eq!(sw.forward(data.clone(), PortNo(1), ms(2)), vec![SwitchOutput::Transmit { port: PortNo(2), frame: data.clone() }]);

        let mut timed = FlowRule::lldp_window(PortNo(1), SimDuration::from_millis(5), 1);
        sw.apply_mod(&ControlMessage::FlowMod { rule: timed.clone() }, ms(0));
        let id = sw.flow_table().last().unwrap().id;
        sw.attach_expiry(id, EventHandle::from_raw(42));
        timed.cookie = 2;
        let out = sw.apply_mod(&ControlMessage::FlowMod { rule: timed }, ms(1));
        assert_eq!(out[0], SwitchOutput::CancelTimer(EventHandle::from_raw(42)));
    }

    #[test]
    fn failover_group_uses_first_live_bucket() {
        let mut sw = softdp_switch(2);
        sw.set_link_state(PortNo(1), true);
        sw.set_link_state(PortNo(2), true);
        let group = FailoverGroup {
            group_id: GroupId(3),
            buckets: vec![Bucket::via(PortNo(1)), Bucket::via(PortNo(2))],
        };
        let gm = ControlMessage::GroupMod(GroupMod { command: GroupCommand::Add, dst: Dpid(3), group: group.clone() });
        let out = sw.apply_mod(&gm, ms(0));
        assert!(matches!(out.last(), Some(SwitchOutput::Transmit { port: PortNo(1), .. })));
        assert_eq!(sw.group(GroupId(3)), Some(&group));

        let out = sw.on_carrier_lost(PortNo(1));
        assert_eq!(out[0], SwitchOutput::Switchover { group: GroupId(3), from: Some(PortNo(1)), to: Some(PortNo(2)) });
        let data = Frame::Data(DataFrame { src: Dpid(4), dst: Dpid(3), switchover_probe: false });
        assert_eq!(sw.forward(data.clone(), PortNo(2), ms(1)), vec![SwitchOutput::Transmit { port: PortNo(2), frame: data.clone() }]);

        sw.on_carrier_lost(PortNo(2));
        assert_eq!(sw.forward(data, PortNo(2), ms(2)), vec![SwitchOutput::Dropped(DropReason::NoLiveBucket)]);
    }

    #[test]
    fn duplicate_group_id_is_last_writer_wins() {
        let mut sw = softdp_switch(2);
        let mk = |ports: &[u16]| {
            ControlMessage::GroupMod(GroupMod {
                command: GroupCommand::Add,
                dst: Dpid(3),
                group: FailoverGroup { group_id: GroupId(3), buckets: ports.iter().map(|p| Bucket::via(PortNo(*p))).collect() },
            })
        };
        sw.apply_mod(&mk(&[1, 2]), ms(0));
        sw.apply_mod(&mk(&[2]), ms(0));
        assert_eq!(sw.group(GroupId(3)).unwrap().buckets, vec![Bucket::via(PortNo(2))]);
        assert_eq!(sw.flow_table().iter().filter(|r| r.rule.priority == PRIORITY_GROUP).count(), 1);
    }

    #[test]
    fn ofdpv2_replication_rewrites_port_ids() {
        let mut sw = SwitchAgent::new(&SwitchSpec::new(1, 5), Protocol::Ofdpv2, BfdParams::default(), SimDuration::from_millis(500));
        for p in 1..=5 {
            sw.set_link_state(PortNo(p), true);
        }
        let out = sw.packet_out(OutPort::AllPorts, LldpFrame::default());
        assert_eq!(out.len(), 5);
        for (i, o) in out.iter().enumerate() {
            match o {
                SwitchOutput::Transmit { port, frame: Frame::Lldp(f) } => {
                    assert_eq!(port.0 as usize, i + 1);
                    assert_eq!(f.port_id, (port.0).to_be_bytes().to_vec());
                }
                o => panic!("unexpected {o:?}"),
            }
        }
    }

    #[test]
    fn baseline_switch_punts_lldp() {
        let mut sw = SwitchAgent::new(&SwitchSpec::new(1, 1), Protocol::Ofdp, BfdParams::default(), SimDuration::from_millis(500));
        sw.set_link_state(PortNo(1), true);
        assert!(matches!(sw.forward(lldp(), PortNo(1), ms(0))[0], SwitchOutput::ToController(ControlMessage::PacketIn { .. })));
    }
}

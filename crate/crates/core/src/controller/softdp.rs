//! Event-driven discovery: BFD-reported removals, PORT_STATUS-triggered
//! hashed LLDP confined to short windows, and failover-group installation
//! from path tags.

use std::collections::{BTreeMap, BTreeSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ChannelId, Core, CtlOutput, CtlTimer, IdentityHasher, MapDelta};
use crate::model::{
    ControlMessage, Dpid, GroupCommand, GroupMod, LldpFrame, OutPort, PortRef, ScenarioSpec, SimDuration,
    SimTime,
};
use crate::simnet::{RejectReason, TraceKind};
use crate::switch_agent::{FailoverGroup, FlowRule};

const NONCE_LEN: usize = 16;

/// A port on which LLDP is currently forwarded to the controller.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingWindow {
    pub port: PortRef,
    pub opened_at: SimTime,
    pub expires_at: SimTime,
    /// Nonce of the latest probe sent out of this port, empty before any.
    pub nonce: Vec<u8>,
    /// A probe sent out of this port has been accepted.
    pub confirmed: bool,
}

#[derive(Clone, Debug)]
struct Probe {
    egress: PortRef,
    issued_at: SimTime,
}

#[derive(Clone, Debug)]
pub struct SoftdpController {
    pub(crate) core: Core,
    hasher: IdentityHasher,
    description: Vec<u8>,
    window: SimDuration,
    te_override: bool,
    windows: BTreeMap<PortRef, PendingWindow>,
    probes: BTreeMap<Vec<u8>, Probe>,
    rng: ChaCha8Rng,
    installed: BTreeMap<(Dpid, Dpid), FailoverGroup>,
    forced: BTreeSet<(Dpid, Dpid)>,
    retag_pending: bool,
    next_cookie: u64,
}

impl SoftdpController {
    pub fn new(spec: &ScenarioSpec) -> Self {
        SoftdpController {
            core: Core::new(spec),
            hasher: IdentityHasher::from_seed(spec.rng_seed),
            description: spec.controller.system_description.clone().into_bytes(),
            window: spec.lldp_window,
            te_override: spec.te_override,
            windows: BTreeMap::new(),
            probes: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(0x6e6f_6e63_6500_0000 ^ spec.rng_seed as u64),
            installed: BTreeMap::new(),
            forced: BTreeSet::new(),
            retag_pending: false,
            next_cookie: 1,
        }
    }

    pub fn windows(&self) -> impl Iterator<Item = &PendingWindow> {
        self.windows.values()
    }

    pub fn installed_groups(&self) -> &BTreeMap<(Dpid, Dpid), FailoverGroup> {
        &self.installed
    }

    pub(super) fn start(&mut self, now: SimTime) -> Vec<CtlOutput> {
        if self.core.initial.is_empty() {
            self.bootstrap(now);
        }
        self.core.take()
    }

    /// Opens a window on every up port of every connected switch, then
    /// probes each of them once.
    fn bootstrap(&mut self, now: SimTime) {
        self.core.bootstrapped = true;
        self.core.trace(TraceKind::Bootstrap { switches: self.core.sessions.len() });
        let ports: Vec<PortRef> = self
            .core
            .sessions
            .iter()
            .flat_map(|(d, s)| s.ports.iter().filter(|(_, up)| **up).map(move |(p, _)| d.port(p.0)))
            .collect();
        for p in &ports {
            self.open_window(*p, now);
        }
        for p in ports {
            self.probe(p, now);
        }
    }

    pub(super) fn on_message(&mut self, channel: ChannelId, msg: ControlMessage, now: SimTime) -> Vec<CtlOutput> {
        match &msg {
            ControlMessage::Hello | ControlMessage::FeatureReply { .. } => {
                if let Some(b) = self.core.handshake(channel, &msg) {
                    if b.replaced {
                        self.forget_switch(b.dpid);
                    }
                    if b.bootstrap_now {
                        self.bootstrap(now);
                    } else if self.core.bootstrapped {
                        if let ControlMessage::FeatureReply { ports, .. } = &msg {
                            for p in ports.iter().filter(|p| p.up) {
                                self.port_up(b.dpid.port(p.port.0), now);
                            }
                        }
                    }
                }
            }
            ControlMessage::PortStatus { port, up } => {
                if let Some(d) = self.core.bound(channel) {
                    if d != port.dpid {
                        self.core.counters.protocol_errors += 1;
                    } else {
                        if let Some(s) = self.core.sessions.get_mut(&d) {
                            s.ports.insert(port.port, *up);
                        }
                        if *up {
                            self.port_up(*port, now);
                        } else {
                            self.port_down(*port);
                        }
                    }
                }
            }
            ControlMessage::PacketIn { in_port, frame } => {
                self.core.counters.packet_ins += 1;
                if let Some(d) = self.core.bound(channel) {
                    self.packet_in(d.port(in_port.0), frame, now);
                }
            }
            ControlMessage::BfdStatus { port, .. } => {
                if let Some(d) = self.core.bound(channel) {
                    self.bfd_down(d, *port);
                }
            }
            _ => self.core.counters.protocol_errors += 1,
        }
        self.core.take()
    }

    pub(super) fn on_timer(&mut self, timer: CtlTimer, _now: SimTime) -> Vec<CtlOutput> {
        if timer == CtlTimer::Retag {
            self.retag();
        }
        self.core.take()
    }

    pub(super) fn on_channel_lost(&mut self, channel: ChannelId, _now: SimTime) -> Vec<CtlOutput> {
        if let Some(d) = self.core.channel_lost(channel) {
            self.forget_switch(d);
        }
        self.core.take()
    }

    fn forget_switch(&mut self, d: Dpid) {
        self.windows.retain(|p, _| p.dpid != d);
        self.installed.retain(|(s, _), _| *s != d);
        self.schedule_retag();
    }

    fn schedule_retag(&mut self) {
        if !self.retag_pending {
            self.retag_pending = true;
            self.core.out.push(CtlOutput::Timer { after: SimDuration::ZERO, timer: CtlTimer::Retag });
        }
    }

    fn purge_expired(&mut self, now: SimTime) {
        self.windows.retain(|_, w| w.expires_at > now);
        let windows = &self.windows;
        self.probes.retain(|_, p| windows.contains_key(&p.egress));
    }

    fn open_window(&mut self, port: PortRef, now: SimTime) {
        let cookie = self.next_cookie;
        self.next_cookie += 1;
        self.core.send(
            port.dpid,
            ControlMessage::FlowMod { rule: FlowRule::lldp_window(port.port, self.window, cookie) },
        );
        self.windows.insert(
            port,
            PendingWindow { port, opened_at: now, expires_at: now + self.window, nonce: Vec::new(), confirmed: false },
        );
    }

    fn probe(&mut self, port: PortRef, now: SimTime) {
        let Some(session) = self.core.sessions.get(&port.dpid) else {
            return;
        };
        let mac = session.id.local_mac.0;
        let mut nonce = vec![0u8; NONCE_LEN];
        self.rng.fill_bytes(&mut nonce);
        let mut port_field = mac.to_vec();
        port_field.extend_from_slice(&port.port.0.to_be_bytes());
        let frame = LldpFrame {
            chassis_id: self.hasher.hash(&mac),
            port_id: self.hasher.hash(&port_field),
            system_description: self.hasher.hash(&self.description),
            nonce: nonce.clone(),
            ingress_window_tag: None,
        };
        if let Some(w) = self.windows.get_mut(&port) {
            w.nonce = nonce.clone();
        }
        self.probes.insert(nonce, Probe { egress: port, issued_at: now });
        self.core.send(port.dpid, ControlMessage::PacketOut { out: OutPort::Port(port.port), frame });
    }

    /// A port came up: open its window and, once a second window is
    /// waiting, probe every unconfirmed window so each candidate link is
    /// tried after both of its ends are listening.
    fn port_up(&mut self, port: PortRef, now: SimTime) {
        self.purge_expired(now);
        self.open_window(port, now);
        let pending: Vec<PortRef> = self
            .windows
            .values()
            .filter(|w| !w.confirmed && self.core.sessions.contains_key(&w.port.dpid))
            .map(|w| w.port)
            .collect();
        if pending.len() >= 2 {
            for p in pending {
                self.probe(p, now);
            }
        }
    }

    fn port_down(&mut self, port: PortRef) {
        self.windows.remove(&port);
        let mut delta = MapDelta::default();
        if self.core.map.remove_links_at(port, &mut delta) {
            self.core.prune_isolated(&mut delta);
            self.core.record(delta);
            self.schedule_retag();
        }
    }

    fn reject(&mut self, ingress: PortRef, reason: RejectReason) {
        match reason {
            RejectReason::Suspicious => self.core.counters.suspicious += 1,
            RejectReason::Premature => self.core.counters.premature += 1,
        }
        self.core.trace(TraceKind::LldpRejected { ingress, reason });
    }

    fn packet_in(&mut self, ingress: PortRef, frame: &LldpFrame, now: SimTime) {
        let Some(probe) = self.probes.get(&frame.nonce).cloned() else {
            return self.reject(ingress, RejectReason::Suspicious);
        };
        let egress_open = self.windows.get(&probe.egress).is_some_and(|w| now < w.expires_at);
        let chassis_ok = self
            .core
            .sessions
            .get(&probe.egress.dpid)
            .is_some_and(|s| self.hasher.hash(&s.id.local_mac.0) == frame.chassis_id);
        if !egress_open || !chassis_ok {
            return self.reject(ingress, RejectReason::Suspicious);
        }
        match self.windows.get(&ingress) {
            Some(w) if w.opened_at <= probe.issued_at && now < w.expires_at => {}
            Some(w) if now >= w.expires_at => return self.reject(ingress, RejectReason::Suspicious),
            _ => return self.reject(ingress, RejectReason::Premature),
        }
        if ingress.dpid == probe.egress.dpid {
            return self.reject(ingress, RejectReason::Suspicious);
        }
        self.probes.remove(&frame.nonce);
        if let Some(w) = self.windows.get_mut(&probe.egress) {
            w.confirmed = true;
        }
        let mut delta = MapDelta::default();
        self.core.map.add_link(probe.egress, ingress, &mut delta);
        if !delta.removed_links.is_empty() {
            self.core.prune_isolated(&mut delta);
        }
        let changed = delta.touches_links();
        self.core.record(delta);
        if changed && self.core.map.is_bidirectional(probe.egress, ingress) {
            self.forced.insert((probe.egress.dpid, ingress.dpid));
            self.forced.insert((ingress.dpid, probe.egress.dpid));
            self.schedule_retag();
        }
    }

    /// The first endpoint report removes the link; later ones are no-ops.
    fn bfd_down(&mut self, reporter: Dpid, port: PortRef) {
        let known_port = port.dpid == reporter
            && self.core.sessions.get(&reporter).is_some_and(|s| s.ports.contains_key(&port.port));
        if !known_port {
            self.core.counters.suspicious += 1;
            return;
        }
        let mut delta = MapDelta::default();
        if self.core.map.remove_links_at(port, &mut delta) {
            self.core.prune_isolated(&mut delta);
            self.core.record(delta);
            self.schedule_retag();
        }
    }

    /// Recomputes path tags and pushes the group changes they imply.
    fn retag(&mut self) {
        self.retag_pending = false;
        let mut desired = self.core.map.retag();
        if self.te_override {
            desired.clear();
        }
        desired.retain(|(s, _), _| self.core.sessions.contains_key(s));
        for (key, group) in &desired {
            let command = match self.installed.get(key) {
                None => GroupCommand::Add,
                Some(old) if old != group || self.forced.contains(key) => GroupCommand::Modify,
                Some(_) => continue,
            };
            self.core.send(key.0, ControlMessage::GroupMod(GroupMod { command, dst: key.1, group: group.clone() }));
            self.installed.insert(*key, group.clone());
        }
        let stale: Vec<(Dpid, Dpid)> = self.installed.keys().filter(|k| !desired.contains_key(k)).copied().collect();
        for key in stale {
            let group = self.installed.remove(&key).expect("present");
            self.core.send(key.0, ControlMessage::GroupMod(GroupMod { command: GroupCommand::Delete, dst: key.1, group }));
        }
        self.forced.clear();
    }
}

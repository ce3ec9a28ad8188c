//! Periodic OFDP and OFDPv2 discovery with cleartext LLDP.

use std::collections::BTreeMap;

use super::{ChannelId, Core, CtlOutput, CtlTimer, MapDelta};
use crate::model::{
    ControlMessage, Dpid, LldpFrame, MacAddr, OutPort, PortNo, PortRef, Protocol, ScenarioSpec, SimDuration,
    SimTime, SwitchId,
};
use crate::simnet::{RejectReason, TraceKind};

/// Rounds without a sighting after which a link is dropped.
pub const LINK_TIMEOUT_ROUNDS: u64 = 3;

#[derive(Clone, Debug)]
pub struct BaselineController {
    pub(crate) core: Core,
    protocol: Protocol,
    period: SimDuration,
    description: Vec<u8>,
    round: u64,
    last_seen: BTreeMap<PortRef, SimTime>,
}

impl BaselineController {
    pub fn new(spec: &ScenarioSpec) -> Self {
        BaselineController {
            core: Core::new(spec),
            protocol: spec.protocol,
            period: spec.discovery_period,
            description: spec.controller.system_description.clone().into_bytes(),
            round: 0,
            last_seen: BTreeMap::new(),
        }
    }

    pub fn rounds(&self) -> u64 {
        self.round
    }

    pub(super) fn start(&mut self, now: SimTime) -> Vec<CtlOutput> {
        if self.core.initial.is_empty() {
            self.bootstrap(now);
        }
        self.core.take()
    }

    fn bootstrap(&mut self, now: SimTime) {
        self.core.bootstrapped = true;
        self.core.trace(TraceKind::Bootstrap { switches: self.core.sessions.len() });
        self.run_round(now);
    }

    fn frame(&self, id: SwitchId, port: Option<PortNo>) -> LldpFrame {
        LldpFrame {
            chassis_id: id.local_mac.0.to_vec(),
            port_id: port.map(|p| p.0.to_be_bytes().to_vec()).unwrap_or_default(),
            system_description: self.description.clone(),
            nonce: Vec::new(),
            ingress_window_tag: None,
        }
    }

    fn run_round(&mut self, now: SimTime) {
        self.round += 1;
        self.core.trace(TraceKind::DiscoveryRound { round: self.round });
        self.expire_links(now);
        let mut msgs = Vec::new();
        for (dpid, s) in &self.core.sessions {
            match self.protocol {
                Protocol::Ofdpv2 => {
                    msgs.push((*dpid, ControlMessage::PacketOut { out: OutPort::AllPorts, frame: self.frame(s.id, None) }));
                }
                _ => {
                    for (p, _) in s.ports.iter().filter(|(_, up)| **up) {
                        msgs.push((*dpid, ControlMessage::PacketOut { out: OutPort::Port(*p), frame: self.frame(s.id, Some(*p)) }));
                    }
                }
            }
        }
        for (d, m) in msgs {
            self.core.send(d, m);
        }
        self.core.out.push(CtlOutput::Timer { after: self.period, timer: CtlTimer::DiscoveryRound });
    }

    fn expire_links(&mut self, now: SimTime) {
        let timeout = self.period * LINK_TIMEOUT_ROUNDS;
        let map = &self.core.map;
        self.last_seen.retain(|src, _| map.link_from(*src).is_some());
        let stale: Vec<PortRef> = self
            .last_seen
            .iter()
            .filter(|(_, t)| now.saturating_since(**t) >= timeout)
            .map(|(p, _)| *p)
            .collect();
        let mut delta = MapDelta::default();
        for src in stale {
            self.last_seen.remove(&src);
            self.core.map.remove_link(src, &mut delta);
        }
        self.core.prune_isolated(&mut delta);
        self.core.record(delta);
    }

    fn sender_of(&self, chassis: &[u8]) -> Option<Dpid> {
        let mac = MacAddr(chassis.try_into().ok()?);
        self.core.sessions.iter().find(|(_, s)| s.id.local_mac == mac).map(|(d, _)| *d)
    }

    pub(super) fn on_message(&mut self, channel: ChannelId, msg: ControlMessage, now: SimTime) -> Vec<CtlOutput> {
        match &msg {
            ControlMessage::Hello | ControlMessage::FeatureReply { .. } => {
                if let Some(b) = self.core.handshake(channel, &msg) {
                    if b.bootstrap_now {
                        self.bootstrap(now);
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
                        if !*up {
                            let mut delta = MapDelta::default();
                            self.core.map.remove_links_at(*port, &mut delta);
                            self.core.prune_isolated(&mut delta);
                            self.core.record(delta);
                        }
                    }
                }
            }
            ControlMessage::PacketIn { in_port, frame } => {
                self.core.counters.packet_ins += 1;
                if let Some(d) = self.core.bound(channel) {
                    let ingress = d.port(in_port.0);
                    let src = self.sender_of(&frame.chassis_id).and_then(|s| {
                        let port: [u8; 2] = frame.port_id.as_slice().try_into().ok()?;
                        Some(s.port(u16::from_be_bytes(port)))
                    });
                    match src {
                        Some(src) if src.dpid != ingress.dpid && src.port.0 != 0 => {
                            let mut delta = MapDelta::default();
                            self.core.map.add_link(src, ingress, &mut delta);
                            self.last_seen.insert(src, now);
                            self.core.prune_isolated(&mut delta);
                            self.core.record(delta);
                        }
                        _ => {
                            self.core.counters.suspicious += 1;
                            self.core.trace(TraceKind::LldpRejected { ingress, reason: RejectReason::Suspicious });
                        }
                    }
                }
            }
            _ => self.core.counters.protocol_errors += 1,
        }
        self.core.take()
    }

    pub(super) fn on_timer(&mut self, timer: CtlTimer, now: SimTime) -> Vec<CtlOutput> {
        if timer == CtlTimer::DiscoveryRound {
            self.run_round(now);
        }
        self.core.take()
    }

    pub(super) fn on_channel_lost(&mut self, channel: ChannelId, _now: SimTime) -> Vec<CtlOutput> {
        self.core.channel_lost(channel);
        self.core.take()
    }
}

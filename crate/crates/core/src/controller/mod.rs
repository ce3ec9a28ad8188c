//! Controller-side discovery engines.
//!
//! [`Controller`] dispatches to the event-driven sOFTDP engine or to one of
//! the periodic OFDP/OFDPv2 baselines. All engines share session handling
//! and the [`TopologyMap`].

mod baseline;
mod hashing;
mod softdp;
mod topology;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{ControlMessage, Dpid, PortNo, Protocol, ScenarioSpec, SimDuration, SimTime, SwitchId};
use crate::simnet::TraceKind;

pub use baseline::BaselineController;
pub use hashing::IdentityHasher;
pub use softdp::{PendingWindow, SoftdpController};
pub use topology::{MapDelta, MapSnapshot, PathTag, TaggedPath, TopologyMap};

/// Control connection as seen by the controller. Every (re)connection gets
/// a fresh id.
pub type ChannelId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CtlTimer {
    Retag,
    DiscoveryRound,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CtlOutput {
    Send { channel: ChannelId, msg: ControlMessage },
    Timer { after: SimDuration, timer: CtlTimer },
    Trace(TraceKind),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerCounters {
    /// LLDP with an unknown or replayed nonce, arriving after its window,
    /// or naming an unknown switch; BFD_STATUS for unknown ports.
    pub suspicious: u64,
    /// Genuine probes that overtook the ingress port's window.
    pub premature: u64,
    /// Messages from unbound channels or for unknown switches.
    pub protocol_errors: u64,
    pub packet_ins: u64,
}

#[derive(Clone, Debug)]
pub(crate) struct Session {
    pub channel: ChannelId,
    pub id: SwitchId,
    pub ports: BTreeMap<PortNo, bool>,
}

/// State and bookkeeping common to every engine.
#[derive(Clone, Debug)]
pub(crate) struct Core {
    pub sessions: BTreeMap<Dpid, Session>,
    pub channels: BTreeMap<ChannelId, Dpid>,
    pub map: TopologyMap,
    pub initial: BTreeSet<Dpid>,
    pub bootstrapped: bool,
    pub counters: ControllerCounters,
    pub out: Vec<CtlOutput>,
}

/// What a FEATURE_REPLY did to the session table.
pub(crate) struct Bound {
    pub dpid: Dpid,
    pub replaced: bool,
    pub bootstrap_now: bool,
}

impl Core {
    fn new(spec: &ScenarioSpec) -> Self {
        Core {
            sessions: BTreeMap::new(),
            channels: BTreeMap::new(),
            map: TopologyMap::default(),
            initial: spec.switches.iter().filter(|s| s.joined).map(|s| s.dpid).collect(),
            bootstrapped: false,
            counters: ControllerCounters::default(),
            out: Vec::new(),
        }
    }

    pub fn send(&mut self, dpid: Dpid, msg: ControlMessage) {
        if let Some(s) = self.sessions.get(&dpid) {
            self.out.push(CtlOutput::Send { channel: s.channel, msg });
        }
    }

    pub fn trace(&mut self, kind: TraceKind) {
        self.out.push(CtlOutput::Trace(kind));
    }

    pub fn record(&mut self, delta: MapDelta) {
        if !delta.is_empty() {
            self.trace(TraceKind::MapChanged {
                added_links: delta.added_links,
                removed_links: delta.removed_links,
                added_switches: delta.added_switches,
                removed_switches: delta.removed_switches,
            });
        }
    }

    /// Drops switches left without links after a removal.
    pub fn prune_isolated(&mut self, delta: &mut MapDelta) {
        let mut touched: Vec<Dpid> = delta.removed_links.iter().flat_map(|(a, b)| [a.dpid, b.dpid]).collect();
        touched.sort();
        touched.dedup();
        for d in touched {
            if self.map.contains_switch(d) && !self.map.has_links(d) {
                self.map.remove_switch(d, delta);
            }
        }
    }

    /// The switch bound to `channel`, counting a protocol error otherwise.
    pub fn bound(&mut self, channel: ChannelId) -> Option<Dpid> {
        let d = self.channels.get(&channel).copied();
        if d.is_none() {
            self.counters.protocol_errors += 1;
        }
        d
    }

    /// Common HELLO / FEATURE_REPLY handling. Returns `Some` when a session
    /// was bound by this message.
    pub fn handshake(&mut self, channel: ChannelId, msg: &ControlMessage) -> Option<Bound> {
        match msg {
            ControlMessage::Hello => {
                self.out.push(CtlOutput::Send { channel, msg: ControlMessage::Hello });
                self.out.push(CtlOutput::Send { channel, msg: ControlMessage::FeatureRequest });
                None
            }
            ControlMessage::FeatureReply { switch, ports } => {
                if let Some(other) = self.channels.get(&channel) {
                    if *other != switch.dpid {
                        self.counters.protocol_errors += 1;
                        return None;
                    }
                }
                let session = Session {
                    channel,
                    id: *switch,
                    ports: ports.iter().map(|p| (p.port, p.up)).collect(),
                };
                // Accept the latest handshake for a dpid; the old session
                // and everything learned through it is stale.
                let old = self.sessions.insert(switch.dpid, session);
                let mut delta = MapDelta::default();
                let replaced = match old {
                    Some(old) if old.channel != channel => {
                        self.channels.remove(&old.channel);
                        self.map.remove_switch(switch.dpid, &mut delta);
                        self.prune_isolated(&mut delta);
                        true
                    }
                    _ => false,
                };
                self.channels.insert(channel, switch.dpid);
                self.map.add_switch(switch.dpid, &mut delta);
                self.record(delta);
                self.trace(TraceKind::SessionBound { dpid: switch.dpid, channel });
                let bootstrap_now = !self.bootstrapped && self.initial.iter().all(|d| self.sessions.contains_key(d));
                Some(Bound { dpid: switch.dpid, replaced, bootstrap_now })
            }
            _ => None,
        }
    }

    /// Forgets a session whose channel went silent.
    pub fn channel_lost(&mut self, channel: ChannelId) -> Option<Dpid> {
        let dpid = self.channels.remove(&channel)?;
        self.sessions.remove(&dpid);
        let mut delta = MapDelta::default();
        self.map.remove_switch(dpid, &mut delta);
        self.prune_isolated(&mut delta);
        self.record(delta);
        Some(dpid)
    }

    pub fn take(&mut self) -> Vec<CtlOutput> {
        std::mem::take(&mut self.out)
    }
}

/// The controller, running one discovery engine.
#[derive(Clone, Debug)]
// One controller per run, so the size gap between variants costs nothing.
#[allow(clippy::large_enum_variant)]
pub enum Controller {
    Softdp(SoftdpController),
    Baseline(BaselineController),
}

impl Controller {
    pub fn new(spec: &ScenarioSpec) -> Self {
        match spec.protocol {
            Protocol::Softdp => Controller::Softdp(SoftdpController::new(spec)),
            Protocol::Ofdp | Protocol::Ofdpv2 => Controller::Baseline(BaselineController::new(spec)),
        }
    }

    /// Called once at time zero. Bootstraps immediately when no switch is
    /// expected.
    pub fn start(&mut self, now: SimTime) -> Vec<CtlOutput> {
        match self {
            Controller::Softdp(c) => c.start(now),
            Controller::Baseline(c) => c.start(now),
        }
    }

    pub fn on_message(&mut self, channel: ChannelId, msg: ControlMessage, now: SimTime) -> Vec<CtlOutput> {
        match self {
            Controller::Softdp(c) => c.on_message(channel, msg, now),
            Controller::Baseline(c) => c.on_message(channel, msg, now),
        }
    }

    pub fn on_timer(&mut self, timer: CtlTimer, now: SimTime) -> Vec<CtlOutput> {
        match self {
            Controller::Softdp(c) => c.on_timer(timer, now),
            Controller::Baseline(c) => c.on_timer(timer, now),
        }
    }

    pub fn on_channel_lost(&mut self, channel: ChannelId, now: SimTime) -> Vec<CtlOutput> {
        match self {
            Controller::Softdp(c) => c.on_channel_lost(channel, now),
            Controller::Baseline(c) => c.on_channel_lost(channel, now),
        }
    }

    fn core(&self) -> &Core {
        match self {
            Controller::Softdp(c) => &c.core,
            Controller::Baseline(c) => &c.core,
        }
    }

    pub fn map(&self) -> &TopologyMap {
        &self.core().map
    }

    pub fn counters(&self) -> ControllerCounters {
        self.core().counters
    }

    pub fn is_bootstrapped(&self) -> bool {
        self.core().bootstrapped
    }

    /// Channel currently accepted as `dpid`.
    pub fn bound_channel(&self, dpid: Dpid) -> Option<ChannelId> {
        self.core().sessions.get(&dpid).map(|s| s.channel)
    }

    pub fn connected(&self) -> Vec<Dpid> {
        self.core().sessions.keys().copied().collect()
    }
}

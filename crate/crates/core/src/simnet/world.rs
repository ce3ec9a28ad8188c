//! The simulated network: switches, links, control channels, hosts and the
//! adversary, all driven by one event queue.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::AttackAction;
use crate::controller::{ChannelId, Controller, CtlOutput, CtlTimer};
use crate::model::{
    validate_scenario, ControlMessage, Dpid, Frame, LinkSpec, LldpFrame, MacAddr, PhysicalTopology, PortNo,
    PortRef, ScenarioSpec, SimDuration, SimTime, SwitchId, TimelineEvent,
};
use crate::switch_agent::{BfdState, RuleId, SwitchAgent, SwitchOutput};

use super::{ControlDirection, EventQueue, FrameDropReason, SimError, Trace, TraceKind};

// Independent RNG streams so that adding an attack never perturbs the
// delays sampled for links and channels.
const NETWORK_STREAM: u64 = 0x6e65_7477_6f72_6b00;
const ADVERSARY_STREAM: u64 = 0x6164_7665_7273_6172;

/// Conservation counters. Every frame put on a wire is eventually
/// delivered or dropped, likewise every control message.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimCounters {
    pub events: u64,
    pub control_sent: u64,
    pub control_delivered: u64,
    pub control_dropped: u64,
    pub frames_sent: u64,
    pub frames_delivered: u64,
    pub frames_dropped: u64,
    /// Frames discarded by a switch pipeline after delivery.
    pub switch_drops: u64,
}

/// One control connection. Rogue channels have no `switch`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelInfo {
    pub id: ChannelId,
    pub switch: Option<Dpid>,
    pub claimed: Option<SwitchId>,
    pub opened_at: SimTime,
    pub closed_at: Option<SimTime>,
    pub to_controller: SimDuration,
    pub from_controller: SimDuration,
}

/// Delay sampled for one direction of a link when it was created.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSample {
    pub from: PortRef,
    pub to: PortRef,
    pub created_at: SimTime,
    pub delay: SimDuration,
}

#[derive(Clone, Copy, Debug)]
struct LiveLink {
    peer: PortRef,
    instance: u64,
    delay: SimDuration,
}

#[derive(Clone, Debug)]
struct HostState {
    name: String,
    delay: SimDuration,
    captured: Vec<(SimTime, LldpFrame)>,
}

#[derive(Clone, Copy, Debug)]
struct Relay {
    a: PortRef,
    b: PortRef,
    tunnel: SimDuration,
    until: SimTime,
}

#[derive(Clone, Copy, Debug)]
struct BfdLife {
    interval: SimDuration,
    up: Option<SimTime>,
    end: Option<SimTime>,
}

#[derive(Clone, Debug)]
enum Action {
    Start,
    Timeline(usize),
    Control { channel: ChannelId, to_controller: bool, sent_at: SimTime, msg: ControlMessage },
    Frame { from: PortRef, to: PortRef, instance: u64, frame: Frame },
    HostReceive { port: PortRef, frame: Frame },
    HostEmit { port: PortRef, frame: Frame },
    SwitchIngress { port: PortRef, frame: Frame },
    Flood { port: PortRef, remaining: u64, interval: SimDuration },
    BfdUp { port: PortRef, gen: u64 },
    BfdTick { port: PortRef, gen: u64 },
    RuleExpiry { dpid: Dpid, epoch: u64, rule: RuleId },
    CtlTimer(CtlTimer),
    ChannelLost(ChannelId),
}

/// A complete, deterministic run of one scenario.
pub struct Simulation {
    spec: ScenarioSpec,
    queue: EventQueue<Action>,
    trace: Trace,
    rng: ChaCha8Rng,
    adversary_rng: ChaCha8Rng,
    physical: PhysicalTopology,
    controller: Controller,
    agents: BTreeMap<Dpid, SwitchAgent>,
    epochs: BTreeMap<Dpid, u64>,
    online: BTreeMap<Dpid, ChannelId>,
    channels: Vec<ChannelInfo>,
    links: BTreeMap<PortRef, LiveLink>,
    link_log: Vec<LinkSample>,
    next_instance: u64,
    hosts: BTreeMap<PortRef, HostState>,
    pending_join: BTreeMap<Dpid, Vec<LinkSpec>>,
    relays: Vec<Relay>,
    bfd_gens: BTreeMap<PortRef, u64>,
    bfd_log: BTreeMap<u64, BfdLife>,
    next_gen: u64,
    counters: SimCounters,
    error: Option<SimError>,
}

impl Simulation {
    /// Validates `spec` and schedules its timeline. Nothing runs until
    /// [`Simulation::run_until`].
    pub fn new(spec: ScenarioSpec) -> Result<Self, SimError> {
        let violations = validate_scenario(&spec);
        if !violations.is_empty() {
            let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(SimError::InvalidScenario(text.join("; ")));
        }
        let physical = PhysicalTopology::initial(&spec, &mut Vec::new());
        let seed = u64::from(spec.rng_seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NETWORK_STREAM);
        let adversary_rng = ChaCha8Rng::seed_from_u64(seed ^ ADVERSARY_STREAM);
        let hosts = spec
            .hosts
            .iter()
            .map(|h| {
                let state = HostState { name: h.name.clone(), delay: h.delay.sample(&mut rng), captured: Vec::new() };
                (h.port, state)
            })
            .collect();
        let mut queue = EventQueue::new();
        queue.schedule(SimTime::ZERO, Action::Start)?;
        let mut order: Vec<usize> = (0..spec.timeline.len()).collect();
        order.sort_by_key(|&i| spec.timeline[i].at);
        for i in order {
            queue.schedule(spec.timeline[i].at, Action::Timeline(i))?;
        }
        Ok(Simulation {
            controller: Controller::new(&spec),
            spec,
            queue,
            trace: Trace::default(),
            rng,
            adversary_rng,
            physical,
            agents: BTreeMap::new(),
            epochs: BTreeMap::new(),
            online: BTreeMap::new(),
            channels: Vec::new(),
            links: BTreeMap::new(),
            link_log: Vec::new(),
            next_instance: 0,
            hosts,
            pending_join: BTreeMap::new(),
            relays: Vec::new(),
            bfd_gens: BTreeMap::new(),
            bfd_log: BTreeMap::new(),
            next_gen: 0,
            counters: SimCounters::default(),
            error: None,
        })
    }

    /// Builds and runs a scenario up to `t_end`.
    pub fn run(spec: ScenarioSpec, t_end: SimTime) -> Result<Self, SimError> {
        let mut sim = Simulation::new(spec)?;
        sim.run_until(t_end)?;
        Ok(sim)
    }

    /// Fires every event due at or before `t_end`.
    pub fn run_until(&mut self, t_end: SimTime) -> Result<(), SimError> {
        while let Some((t, _, action)) = self.queue.pop_until(t_end) {
            self.counters.events += 1;
            self.handle(t, action);
            if let Some(e) = self.error.take() {
                return Err(e);
            }
        }
        self.queue.advance_to(t_end);
        Ok(())
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    /// The agent of a connected switch.
    pub fn switch(&self, dpid: Dpid) -> Option<&SwitchAgent> {
        self.agents.get(&dpid)
    }

    pub fn physical(&self) -> &PhysicalTopology {
        &self.physical
    }

    pub fn counters(&self) -> SimCounters {
        self.counters
    }

    pub fn channels(&self) -> &[ChannelInfo] {
        &self.channels
    }

    /// The switch's own channel that was open at `at`, or the first one
    /// opened after it.
    pub fn channel_of(&self, dpid: Dpid, at: SimTime) -> Option<&ChannelInfo> {
        let own = || self.channels.iter().filter(|c| c.switch == Some(dpid));
        own().rfind(|c| c.opened_at <= at).or_else(|| own().find(|c| c.opened_at > at))
    }

    pub fn link_samples(&self) -> &[LinkSample] {
        &self.link_log
    }

    /// Delay of `from -> to` for the link instance that existed at `at`,
    /// or the first one created after it (links of a joining switch come up
    /// only after its handshake).
    pub fn link_delay(&self, from: PortRef, to: PortRef, at: SimTime) -> Option<SimDuration> {
        let dir = || self.link_log.iter().filter(|s| s.from == from && s.to == to);
        dir().rfind(|s| s.created_at <= at)
            .or_else(|| dir().find(|s| s.created_at > at))
            .map(|s| s.delay)
    }

    /// Delay of the first link instance `from -> to` created at or after `at`.
    pub fn link_delay_after(&self, from: PortRef, to: PortRef, at: SimTime) -> Option<SimDuration> {
        self.link_log.iter().find(|s| s.from == from && s.to == to && s.created_at >= at).map(|s| s.delay)
    }

    pub fn host_delay(&self, name: &str) -> Option<SimDuration> {
        self.hosts.values().find(|h| h.name == name).map(|h| h.delay)
    }

    /// LLDP frames the named host has seen so far.
    pub fn captured(&self, name: &str) -> &[(SimTime, LldpFrame)] {
        self.hosts.values().find(|h| h.name == name).map_or(&[], |h| h.captured.as_slice())
    }

    /// BFD control packets transmitted by all session ends so far.
    pub fn bfd_packets(&self) -> u64 {
        let now = self.now();
        self.bfd_log
            .values()
            .filter_map(|l| {
                let up = l.up?;
                let end = l.end.unwrap_or(now).min(now);
                Some(end.saturating_since(up).as_nanos() / l.interval.as_nanos())
            })
            .sum()
    }

    fn at(&mut self, t: SimTime, action: Action) -> Option<super::EventHandle> {
        match self.queue.schedule(t, action) {
            Ok(h) => Some(h),
            Err(e) => {
                self.error.get_or_insert(e);
                None
            }
        }
    }

    fn record(&mut self, now: SimTime, kind: TraceKind) {
        self.trace.push(now, kind);
    }

    fn handle(&mut self, now: SimTime, action: Action) {
        match action {
            Action::Start => self.start(now),
            Action::Timeline(i) => self.timeline(i, now),
            Action::Control { channel, to_controller, sent_at, msg } => {
                self.control_arrives(channel, to_controller, sent_at, msg, now)
            }
            Action::Frame { from, to, instance, frame } => self.frame_arrives(from, to, instance, frame, now),
            Action::HostReceive { port, frame } => self.host_receive(port, frame, now),
            Action::HostEmit { port, frame } => self.host_emit(port, frame, now),
            Action::SwitchIngress { port, frame } => self.switch_ingress(port, frame, now),
            Action::Flood { port, remaining, interval } => {
                let frame = self.random_lldp();
                self.host_emit(port, Frame::Lldp(frame), now);
                if remaining > 1 {
                    self.at(now + interval, Action::Flood { port, remaining: remaining - 1, interval });
                }
            }
            Action::BfdUp { port, gen } => self.bfd_up(port, gen, now),
            Action::BfdTick { port, gen } => self.bfd_tick(port, gen, now),
            Action::RuleExpiry { dpid, epoch, rule } => {
                if self.epochs.get(&dpid) != Some(&epoch) {
                    return;
                }
                let expired = self.agents.get_mut(&dpid).and_then(|a| a.expire_rule(rule));
                if let Some(r) = expired {
                    self.record(now, TraceKind::RuleExpired { switch: dpid, cookie: r.cookie });
                }
            }
            Action::CtlTimer(timer) => {
                let outs = self.controller.on_timer(timer, now);
                self.apply_ctl(outs, now);
            }
            Action::ChannelLost(channel) => {
                let outs = self.controller.on_channel_lost(channel, now);
                self.apply_ctl(outs, now);
            }
        }
    }

    fn start(&mut self, now: SimTime) {
        let outs = self.controller.start(now);
        self.apply_ctl(outs, now);
        for link in self.spec.links.clone() {
            self.create_link(&link, now);
        }
        let initial: Vec<(Dpid, u16)> =
            self.spec.switches.iter().filter(|s| s.joined).map(|s| (s.dpid, s.ports)).collect();
        for (dpid, ports) in initial {
            self.new_agent(dpid);
            let cabled: Vec<(PortNo, Option<PortRef>)> = (1..=ports)
                .map(|p| dpid.port(p))
                .filter_map(|pr| {
                    let peer = self.physical.peer(pr);
                    (peer.is_some() || self.hosts.contains_key(&pr)).then_some((pr.port, peer))
                })
                .collect();
            let outs = self.agents.get_mut(&dpid).expect("agent").boot(&cabled, now);
            self.apply_switch(dpid, outs, None, None, now);
            self.connect(dpid, now);
        }
    }

    fn new_agent(&mut self, dpid: Dpid) {
        let spec = self.spec.switch(dpid).expect("validated switch");
        let agent = SwitchAgent::new(spec, self.spec.protocol, self.spec.bfd, self.spec.lldp_window);
        self.agents.insert(dpid, agent);
        *self.epochs.entry(dpid).or_insert(0) += 1;
    }

    fn open_channel(&mut self, switch: Option<Dpid>, claimed: Option<SwitchId>, now: SimTime) -> ChannelId {
        let (to_controller, from_controller) = match switch.and_then(|d| self.spec.channel(d)) {
            Some(c) => (c.to_controller.sample(&mut self.rng), c.from_controller.sample(&mut self.rng)),
            None => (SimDuration::ZERO, SimDuration::ZERO),
        };
        let id = self.channels.len() as ChannelId;
        self.channels.push(ChannelInfo {
            id,
            switch,
            claimed,
            opened_at: now,
            closed_at: None,
            to_controller,
            from_controller,
        });
        id
    }

    fn connect(&mut self, dpid: Dpid, now: SimTime) {
        let ch = self.open_channel(Some(dpid), None, now);
        self.online.insert(dpid, ch);
        self.send_up(ch, ControlMessage::Hello, now);
    }

    fn send_up(&mut self, channel: ChannelId, msg: ControlMessage, now: SimTime) {
        self.counters.control_sent += 1;
        let at = now + self.channels[channel as usize].to_controller;
        self.at(at, Action::Control { channel, to_controller: true, sent_at: now, msg });
    }

    fn send_down(&mut self, channel: ChannelId, msg: ControlMessage, now: SimTime) {
        self.counters.control_sent += 1;
        let Some(info) = self.channels.get(channel as usize) else {
            self.counters.control_dropped += 1;
            let kind = TraceKind::ControlDropped {
                channel,
                direction: ControlDirection::FromController,
                sent_at: now,
                message: msg,
            };
            self.record(now, kind);
            return;
        };
        let at = now + info.from_controller;
        self.at(at, Action::Control { channel, to_controller: false, sent_at: now, msg });
    }

    fn apply_ctl(&mut self, outs: Vec<CtlOutput>, now: SimTime) {
        for out in outs {
            match out {
                CtlOutput::Send { channel, msg } => self.send_down(channel, msg, now),
                CtlOutput::Timer { after, timer } => {
                    self.at(now + after, Action::CtlTimer(timer));
                }
                CtlOutput::Trace(kind) => self.record(now, kind),
            }
        }
    }

    fn apply_switch(
        &mut self,
        dpid: Dpid,
        outs: Vec<SwitchOutput>,
        from: Option<PortRef>,
        ingress: Option<PortRef>,
        now: SimTime,
    ) {
        for out in outs {
            match out {
                SwitchOutput::ToController(msg) => {
                    if let Some(&ch) = self.online.get(&dpid) {
                        self.send_up(ch, msg, now);
                    }
                }
                SwitchOutput::Transmit { port, frame } => self.transmit(dpid.port(port.0), frame, now),
                SwitchOutput::ScheduleRuleExpiry { rule, at } => {
                    let epoch = self.epochs.get(&dpid).copied().unwrap_or(0);
                    if let Some(h) = self.at(at, Action::RuleExpiry { dpid, epoch, rule }) {
                        if let Some(a) = self.agents.get_mut(&dpid) {
                            a.attach_expiry(rule, h);
                        }
                    }
                }
                SwitchOutput::CancelTimer(h) => {
                    self.queue.cancel(h);
                }
                SwitchOutput::StartBfdHandshake { port, remote } => self.start_bfd(dpid.port(port.0), remote, now),
                SwitchOutput::Switchover { group, from, to } => {
                    self.record(now, TraceKind::Switchover { switch: dpid, group, from, to });
                }
                SwitchOutput::Delivered(Frame::Data(d)) => {
                    if let (true, Some(from), Some(to)) = (d.switchover_probe, from, ingress) {
                        self.record(now, TraceKind::ProbeDelivered { from, to, dst: d.dst });
                    }
                }
                SwitchOutput::Delivered(Frame::Lldp(_)) => {}
                SwitchOutput::Dropped(reason) => {
                    self.counters.switch_drops += 1;
                    self.record(now, TraceKind::FrameDropped { at: ingress, reason: FrameDropReason::Switch(reason) });
                }
            }
        }
    }

    fn create_link(&mut self, link: &LinkSpec, now: SimTime) {
        let ab = link.delay_ab.sample(&mut self.rng);
        let ba = link.delay_ba.sample(&mut self.rng);
        let instance = self.next_instance;
        self.next_instance += 1;
        self.links.insert(link.a, LiveLink { peer: link.b, instance, delay: ab });
        self.links.insert(link.b, LiveLink { peer: link.a, instance, delay: ba });
        self.link_log.push(LinkSample { from: link.a, to: link.b, created_at: now, delay: ab });
        self.link_log.push(LinkSample { from: link.b, to: link.a, created_at: now, delay: ba });
    }

    /// Cuts the link at `a`. Surviving ends lose carrier silently and start
    /// missing BFD packets.
    fn kill_link(&mut self, a: PortRef, now: SimTime) {
        let Some(la) = self.links.remove(&a) else {
            return;
        };
        let b = la.peer;
        self.links.remove(&b);
        for p in [a, b] {
            let Some(agent) = self.agents.get_mut(&p.dpid) else {
                continue;
            };
            let outs = agent.on_carrier_lost(p.port);
            self.apply_switch(p.dpid, outs, None, None, now);
            self.begin_failure_ticks(p, now);
        }
    }

    fn port_up(&mut self, p: PortRef, peer: Option<PortRef>, now: SimTime) {
        if let Some(agent) = self.agents.get_mut(&p.dpid) {
            let outs = agent.on_port_event(p.port, true, peer, now);
            self.apply_switch(p.dpid, outs, None, None, now);
        }
    }

    fn transmit(&mut self, from: PortRef, frame: Frame, now: SimTime) {
        self.counters.frames_sent += 1;
        if let Some(link) = self.links.get(&from).copied() {
            let action = Action::Frame { from, to: link.peer, instance: link.instance, frame };
            self.at(now + link.delay, action);
        } else if let Some(h) = self.hosts.get(&from) {
            let at = now + h.delay;
            self.at(at, Action::HostReceive { port: from, frame });
        } else {
            self.counters.frames_dropped += 1;
            self.record(now, TraceKind::FrameDropped { at: Some(from), reason: FrameDropReason::Unconnected });
        }
    }

    fn frame_arrives(&mut self, from: PortRef, to: PortRef, instance: u64, frame: Frame, now: SimTime) {
        let alive = self.links.get(&from).is_some_and(|l| l.instance == instance);
        if !alive {
            self.counters.frames_dropped += 1;
            self.record(now, TraceKind::FrameDropped { at: Some(from), reason: FrameDropReason::LinkDown });
            return;
        }
        self.counters.frames_delivered += 1;
        self.record(now, TraceKind::FrameDelivered { from, to, frame: frame.clone() });
        if let Some(agent) = self.agents.get_mut(&to.dpid) {
            let outs = agent.forward(frame, to.port, now);
            self.apply_switch(to.dpid, outs, Some(from), Some(to), now);
        }
    }

    fn host_receive(&mut self, port: PortRef, frame: Frame, now: SimTime) {
        let Some(host) = self.hosts.get_mut(&port) else {
            return;
        };
        self.counters.frames_delivered += 1;
        if let Frame::Lldp(f) = &frame {
            host.captured.push((now, f.clone()));
        }
        let name = host.name.clone();
        let relayed: Vec<(PortRef, SimDuration)> = if matches!(frame, Frame::Lldp(_)) {
            self.relays
                .iter()
                .filter(|r| now < r.until)
                .filter_map(|r| {
                    if r.a == port {
                        Some((r.b, r.tunnel))
                    } else if r.b == port {
                        Some((r.a, r.tunnel))
                    } else {
                        None
                    }
                })
                .collect()
        } else {
            Vec::new()
        };
        for (other, tunnel) in relayed {
            self.at(now + tunnel, Action::HostEmit { port: other, frame: frame.clone() });
        }
        self.record(now, TraceKind::HostReceived { host: name, port, frame });
    }

    fn host_emit(&mut self, port: PortRef, frame: Frame, now: SimTime) {
        let Some(host) = self.hosts.get(&port) else {
            return;
        };
        let (name, at) = (host.name.clone(), now + host.delay);
        self.counters.frames_sent += 1;
        self.record(now, TraceKind::HostSent { host: name, port, frame: frame.clone() });
        self.at(at, Action::SwitchIngress { port, frame });
    }

    fn switch_ingress(&mut self, port: PortRef, frame: Frame, now: SimTime) {
        let Some(agent) = self.agents.get_mut(&port.dpid) else {
            self.counters.frames_dropped += 1;
            self.record(now, TraceKind::FrameDropped { at: Some(port), reason: FrameDropReason::SwitchOffline });
            return;
        };
        self.counters.frames_delivered += 1;
        let outs = agent.forward(frame, port.port, now);
        self.apply_switch(port.dpid, outs, None, Some(port), now);
    }

    fn control_arrives(
        &mut self,
        channel: ChannelId,
        to_controller: bool,
        sent_at: SimTime,
        msg: ControlMessage,
        now: SimTime,
    ) {
        let info = self.channels[channel as usize].clone();
        let direction = if to_controller { ControlDirection::ToController } else { ControlDirection::FromController };
        if info.closed_at.is_some() {
            self.counters.control_dropped += 1;
            self.record(now, TraceKind::ControlDropped { channel, direction, sent_at, message: msg });
            return;
        }
        self.counters.control_delivered += 1;
        let dpid = info.switch.or(info.claimed.map(|c| c.dpid));
        let kind = TraceKind::ControlDelivered { channel, dpid, direction, sent_at, message: msg.clone() };
        self.record(now, kind);
        if to_controller {
            let outs = self.controller.on_message(channel, msg, now);
            self.apply_ctl(outs, now);
            return;
        }
        let Some(dpid) = info.switch else {
            // A rogue endpoint answers the handshake and ignores the rest.
            if let (ControlMessage::FeatureRequest, Some(claimed)) = (&msg, info.claimed) {
                self.send_up(channel, ControlMessage::FeatureReply { switch: claimed, ports: Vec::new() }, now);
            }
            return;
        };
        if let ControlMessage::GroupMod(gm) = &msg {
            let buckets = gm.group.buckets.iter().map(|b| b.out_port).collect();
            let kind = TraceKind::GroupApplied { switch: dpid, dst: gm.dst, command: gm.command, buckets };
            self.record(now, kind);
        }
        let Some(agent) = self.agents.get_mut(&dpid) else {
            return;
        };
        let outs = agent.handle_control(&msg, now);
        self.apply_switch(dpid, outs, None, None, now);
        if msg == ControlMessage::FeatureRequest {
            self.bring_up_join_links(dpid, now);
        }
    }

    /// A joining switch's links and host ports come up once it has
    /// answered the controller's FEATURE_REQUEST.
    fn bring_up_join_links(&mut self, dpid: Dpid, now: SimTime) {
        let Some(links) = self.pending_join.remove(&dpid) else {
            return;
        };
        for link in links {
            if !self.agents.contains_key(&link.a.dpid) || !self.agents.contains_key(&link.b.dpid) {
                continue;
            }
            self.create_link(&link, now);
            self.port_up(link.a, Some(link.b), now);
            self.port_up(link.b, Some(link.a), now);
        }
        let host_ports: Vec<PortRef> = self.hosts.keys().filter(|p| p.dpid == dpid).copied().collect();
        for p in host_ports {
            self.port_up(p, None, now);
        }
    }

    fn timeline(&mut self, index: usize, now: SimTime) {
        let event = self.spec.timeline[index].event.clone();
        let delta = match self.physical.apply(&event) {
            Ok(d) => d,
            Err(v) => {
                self.error.get_or_insert(SimError::InvalidScenario(v.to_string()));
                return;
            }
        };
        self.record(
            now,
            TraceKind::Timeline {
                index,
                label: event.label(),
                added: delta.added,
                removed: delta.removed,
                joined: delta.joined,
                left: delta.left,
            },
        );
        match event {
            TimelineEvent::LinkAdd(link) => {
                self.create_link(&link, now);
                self.port_up(link.a, Some(link.b), now);
                self.port_up(link.b, Some(link.a), now);
            }
            TimelineEvent::LinkRemove { a, b } => {
                for links in self.pending_join.values_mut() {
                    links.retain(|l| canonical_pair(l.a, l.b) != canonical_pair(a, b));
                }
                self.kill_link(a, now);
            }
            TimelineEvent::SwitchJoin { switch, links } => {
                self.new_agent(switch);
                self.pending_join.insert(switch, links);
                self.connect(switch, now);
            }
            TimelineEvent::SwitchLeave { switch } => self.leave(switch, now),
            TimelineEvent::Attack(action) => {
                self.record(now, TraceKind::AttackStarted { index, attack: action.kind().as_str().to_string() });
                self.attack(&action, now);
            }
        }
    }

    fn leave(&mut self, switch: Dpid, now: SimTime) {
        self.pending_join.remove(&switch);
        self.agents.remove(&switch);
        if let Some(ch) = self.online.remove(&switch) {
            self.channels[ch as usize].closed_at = Some(now);
            self.at(now + self.spec.channel_timeout, Action::ChannelLost(ch));
        }
        let sessions: Vec<PortRef> = self.bfd_gens.keys().filter(|p| p.dpid == switch).copied().collect();
        for p in sessions {
            if let Some(gen) = self.bfd_gens.remove(&p) {
                self.end_bfd_life(gen, now);
            }
        }
        let ports: Vec<PortRef> = self.links.keys().filter(|p| p.dpid == switch).copied().collect();
        for p in ports {
            self.kill_link(p, now);
        }
    }

    fn start_bfd(&mut self, local: PortRef, remote: PortRef, now: SimTime) {
        let gen = self.next_gen;
        self.next_gen += 1;
        if let Some(old) = self.bfd_gens.insert(local, gen) {
            self.end_bfd_life(old, now);
        }
        self.bfd_log.insert(gen, BfdLife { interval: self.spec.bfd.interval, up: None, end: None });
        let (Some(lr), Some(rl)) = (self.links.get(&local), self.links.get(&remote)) else {
            return;
        };
        // Three-way handshake started by the lower port; both ends come up
        // together once the final leg arrives.
        let (first, second) = if local < remote { (lr.delay, rl.delay) } else { (rl.delay, lr.delay) };
        self.at(now + first + second + first, Action::BfdUp { port: local, gen });
    }

    fn end_bfd_life(&mut self, gen: u64, now: SimTime) {
        if let Some(life) = self.bfd_log.get_mut(&gen) {
            life.end.get_or_insert(now);
        }
    }

    fn bfd_up(&mut self, port: PortRef, gen: u64, now: SimTime) {
        if self.bfd_gens.get(&port) != Some(&gen) {
            return;
        }
        let Some(agent) = self.agents.get_mut(&port.dpid) else {
            return;
        };
        agent.bfd_handshake_complete(port.port, now);
        let remote = agent.bfd_session(port.port).map(|s| s.remote);
        if let Some(life) = self.bfd_log.get_mut(&gen) {
            life.up = Some(now);
        }
        self.record(now, TraceKind::BfdUp { port });
        let alive = self.links.get(&port).is_some_and(|l| Some(l.peer) == remote);
        if !alive {
            self.begin_failure_ticks(port, now);
        }
    }

    /// The peer stopped sending at `now`. The first interval evaluated
    /// without packets ends one interval after the next tick boundary.
    fn begin_failure_ticks(&mut self, port: PortRef, now: SimTime) {
        let Some(&gen) = self.bfd_gens.get(&port) else {
            return;
        };
        let Some(session) = self.agents.get(&port.dpid).and_then(|a| a.bfd_session(port.port)) else {
            return;
        };
        if session.state != BfdState::Up {
            return;
        }
        let Some(boundary) = session.first_tick_at_or_after(now) else {
            return;
        };
        let at = boundary + session.interval;
        self.at(at, Action::BfdTick { port, gen });
    }

    fn bfd_tick(&mut self, port: PortRef, gen: u64, now: SimTime) {
        if self.bfd_gens.get(&port) != Some(&gen) {
            return;
        }
        let Some(agent) = self.agents.get_mut(&port.dpid) else {
            return;
        };
        let status = agent.bfd_step(port.port, false);
        let Some(session) = agent.bfd_session(port.port) else {
            return;
        };
        let (misses, state, interval) = (session.misses, session.state, session.interval);
        self.record(now, TraceKind::BfdTick { port, misses });
        if let Some(msg) = status {
            self.record(now, TraceKind::BfdDown { port });
            self.end_bfd_life(gen, now);
            if let Some(&ch) = self.online.get(&port.dpid) {
                self.send_up(ch, msg, now);
            }
        } else if state == BfdState::Up {
            self.at(now + interval, Action::BfdTick { port, gen });
        }
    }

    fn host_port(&self, name: &str) -> Option<PortRef> {
        self.hosts.iter().find(|(_, h)| h.name == name).map(|(p, _)| *p)
    }

    fn random_lldp(&mut self) -> LldpFrame {
        let mut chassis = vec![0u8; 6];
        let mut port = vec![0u8; 2];
        let mut nonce = vec![0u8; 16];
        self.adversary_rng.fill(&mut chassis[..]);
        self.adversary_rng.fill(&mut port[..]);
        self.adversary_rng.fill(&mut nonce[..]);
        LldpFrame { chassis_id: chassis, port_id: port, nonce, ..LldpFrame::default() }
    }

    /// Re-plugs a host port: carrier drops and returns at once, so the
    /// switch reports the port up again.
    fn bounce(&mut self, port: PortRef, now: SimTime) {
        let Some(agent) = self.agents.get_mut(&port.dpid) else {
            return;
        };
        let mut outs = agent.on_carrier_lost(port.port);
        outs.extend(agent.on_port_event(port.port, true, None, now));
        self.apply_switch(port.dpid, outs, None, None, now);
    }

    fn attack(&mut self, action: &AttackAction, now: SimTime) {
        match action {
            AttackAction::Spoof { observer, channel_delay } => {
                let Some(port) = self.host_port(observer) else {
                    return;
                };
                let Some((_, seen)) = self.hosts[&port].captured.last() else {
                    return;
                };
                let mut mac = [0u8; 6];
                for (dst, src) in mac.iter_mut().zip(&seen.chassis_id) {
                    *dst = *src;
                }
                let mac = MacAddr(mac);
                let claimed = SwitchId { dpid: Dpid::from_mac(mac), local_mac: mac };
                let delay = channel_delay.sample(&mut self.adversary_rng);
                let ch = self.open_channel(None, Some(claimed), now);
                self.channels[ch as usize].to_controller = delay;
                self.channels[ch as usize].from_controller = delay;
                self.record(now, TraceKind::RogueConnected { channel: ch, claimed });
                self.send_up(ch, ControlMessage::Hello, now);
            }
            AttackAction::Inject { host, forged, count, interval, bounce } => {
                let Some(port) = self.host_port(host) else {
                    return;
                };
                if *bounce {
                    self.bounce(port, now);
                }
                let description =
                    self.hosts[&port].captured.last().map(|(_, f)| f.system_description.clone()).unwrap_or_default();
                for k in 0..u64::from(*count) {
                    let mut nonce = vec![0u8; 16];
                    self.adversary_rng.fill(&mut nonce[..]);
                    let frame = LldpFrame {
                        chassis_id: forged.dpid.default_mac().0.to_vec(),
                        port_id: forged.port.0.to_be_bytes().to_vec(),
                        system_description: description.clone(),
                        nonce,
                        ingress_window_tag: None,
                    };
                    self.at(now + *interval * k, Action::HostEmit { port, frame: Frame::Lldp(frame) });
                }
            }
            AttackAction::Relay { a, b, tunnel_delay, duration, bounce } => {
                let (Some(pa), Some(pb)) = (self.host_port(a), self.host_port(b)) else {
                    return;
                };
                if *bounce {
                    self.bounce(pa, now);
                    self.bounce(pb, now);
                }
                self.relays.push(Relay { a: pa, b: pb, tunnel: *tunnel_delay, until: now + *duration });
            }
            AttackAction::Flood { host, rate, duration, bounce, .. } => {
                let Some(port) = self.host_port(host) else {
                    return;
                };
                if *bounce {
                    self.bounce(port, now);
                }
                if *rate == 0 {
                    return;
                }
                let total = u64::from(*rate) * duration.as_nanos() / 1_000_000_000;
                let interval = SimDuration::from_nanos(1_000_000_000 / u64::from(*rate));
                if total > 0 {
                    self.at(now, Action::Flood { port, remaining: total, interval });
                }
            }
            AttackAction::Fingerprint { .. } => {}
        }
    }
}

fn canonical_pair(a: PortRef, b: PortRef) -> (PortRef, PortRef) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::builtin;
    use crate::model::Protocol;

    fn secs(v: u64) -> SimTime {
        SimTime::ZERO + SimDuration::from_secs(v)
    }

    #[test]
    fn conservation_holds_after_run() {
        for p in Protocol::ALL {
            let sim = Simulation::run(builtin::walkthrough(p), secs(6)).unwrap();
            let c = sim.counters();
            assert_eq!(c.frames_sent, c.frames_delivered + c.frames_dropped + in_flight(&sim), "{p:?}");
            assert!(c.control_sent >= c.control_delivered + c.control_dropped);
        }
    }

    fn in_flight(sim: &Simulation) -> u64 {
        sim.queue.len() as u64
            - sim
                .queue
                .pending
                .values()
                .filter(|a| !matches!(a, Action::Frame { .. } | Action::HostReceive { .. } | Action::SwitchIngress { .. }))
                .count() as u64
    }

    #[test]
    fn same_seed_same_trace() {
        let a = Simulation::run(builtin::walkthrough(Protocol::Softdp), secs(5)).unwrap();
        let b = Simulation::run(builtin::walkthrough(Protocol::Softdp), secs(5)).unwrap();
        assert_eq!(a.trace().digest(), b.trace().digest());
    }

    #[test]
    fn square_is_learned_under_every_protocol() {
        for p in Protocol::ALL {
            let sim = Simulation::run(builtin::square(p), secs(12)).unwrap();
            assert_eq!(sim.controller().map().directed_links().len(), 8, "{p:?}");
        }
    }

    #[test]
    fn bfd_comes_up_after_three_legs() {
        let sim = Simulation::run(builtin::square(Protocol::Softdp), secs(1)).unwrap();
        let first = sim.trace().iter().find(|r| matches!(r.kind, TraceKind::BfdUp { .. })).unwrap();
        assert_eq!(first.t, SimTime::ZERO + SimDuration::from_millis(3));
    }

    #[test]
    fn invalid_scenario_is_an_error() {
        let mut spec = builtin::square(Protocol::Softdp);
        spec.links.push(spec.links[0].clone());
        assert!(matches!(Simulation::new(spec), Err(SimError::InvalidScenario(_))));
    }
}

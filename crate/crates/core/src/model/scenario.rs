//! Declarative scenario description and its validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ids::{Dpid, MacAddr, PortRef};
use super::time::{SimDuration, SimTime};
use super::ModelError;
use crate::adversary::AttackAction;

/// Discovery engine run by the controller.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Ofdp,
    Ofdpv2,
    Softdp,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Ofdp, Protocol::Ofdpv2, Protocol::Softdp];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Ofdp => "ofdp",
            Protocol::Ofdpv2 => "ofdpv2",
            Protocol::Softdp => "softdp",
        }
    }

    pub fn is_baseline(self) -> bool {
        !matches!(self, Protocol::Softdp)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ofdp" => Ok(Protocol::Ofdp),
            "ofdpv2" => Ok(Protocol::Ofdpv2),
            "softdp" | "sofdp" | "softdp-protocol" => Ok(Protocol::Softdp),
            _ => Err(ModelError::BadIdentifier(s.to_string())),
        }
    }
}

/// A propagation delay: either constant, or drawn once per medium from a
/// uniform range using the scenario seed. Written `"1ms"` or `"0.5ms..1.5ms"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Delay {
    Fixed(SimDuration),
    Uniform { min: SimDuration, max: SimDuration },
}

impl Delay {
    pub const fn fixed(d: SimDuration) -> Self {
        Delay::Fixed(d)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SimDuration {
        match *self {
            Delay::Fixed(d) => d,
            Delay::Uniform { min, max } => {
                SimDuration::from_nanos(rng.gen_range(min.as_nanos()..=max.as_nanos()))
            }
        }
    }

    fn is_well_formed(&self) -> bool {
        match self {
            Delay::Fixed(_) => true,
            Delay::Uniform { min, max } => min <= max,
        }
    }
}

impl Default for Delay {
    fn default() -> Self {
        Delay::Fixed(SimDuration::from_millis(1))
    }
}

impl From<SimDuration> for Delay {
    fn from(d: SimDuration) -> Self {
        Delay::Fixed(d)
    }
}

impl fmt::Display for Delay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Delay::Fixed(d) => write!(f, "{d}"),
            Delay::Uniform { min, max } => write!(f, "{min}..{max}"),
        }
    }
}

impl FromStr for Delay {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once("..") {
            Some((lo, hi)) => Ok(Delay::Uniform { min: lo.parse()?, max: hi.parse()? }),
            None => Ok(Delay::Fixed(s.parse()?)),
        }
    }
}

super::time::string_serde!(Delay);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BfdParams {
    /// Transmit interval between control packets.
    pub interval: SimDuration,
    /// Consecutive misses before the session is declared down.
    pub multiplier: u32,
}

impl BfdParams {
    pub fn detection_time(&self) -> SimDuration {
        self.interval * self.multiplier as u64
    }
}

impl Default for BfdParams {
    fn default() -> Self {
        BfdParams { interval: SimDuration::from_nanos(16_700_000), multiplier: 3 }
    }
}

/// What the controller writes into cleartext LLDP, and the name an observer
/// should be able to recover from it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ControllerProfile {
    pub name: String,
    pub system_description: String,
}

impl Default for ControllerProfile {
    fn default() -> Self {
        ControllerProfile {
            name: "alpha".into(),
            system_description: "alpha-sdn-controller 2.1".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SwitchSpec {
    pub dpid: Dpid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_mac: Option<MacAddr>,
    pub ports: u16,
    /// Connected at simulation start. Switches with `joined = false` enter
    /// through a `switch_join` timeline event.
    #[serde(default = "yes")]
    pub joined: bool,
}

fn yes() -> bool {
    true
}

impl SwitchSpec {
    pub fn new(dpid: u64, ports: u16) -> Self {
        SwitchSpec { dpid: Dpid(dpid), local_mac: None, ports, joined: true }
    }

    pub fn mac(&self) -> MacAddr {
        self.local_mac.unwrap_or_else(|| self.dpid.default_mac())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinkSpec {
    pub a: PortRef,
    pub b: PortRef,
    #[serde(default)]
    pub delay_ab: Delay,
    #[serde(default)]
    pub delay_ba: Delay,
}

impl LinkSpec {
    pub fn new(a: PortRef, b: PortRef, delay: SimDuration) -> Self {
        LinkSpec { a, b, delay_ab: delay.into(), delay_ba: delay.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub switch: Dpid,
    #[serde(default)]
    pub to_controller: Delay,
    #[serde(default)]
    pub from_controller: Delay,
}

impl ChannelSpec {
    pub fn new(switch: Dpid, delay: SimDuration) -> Self {
        ChannelSpec { switch, to_controller: delay.into(), from_controller: delay.into() }
    }
}

/// End host attached to a switch port. Adversaries act through hosts.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HostSpec {
    pub name: String,
    pub port: PortRef,
    #[serde(default)]
    pub delay: Delay,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimelineEvent {
    LinkAdd(LinkSpec),
    LinkRemove { a: PortRef, b: PortRef },
    SwitchJoin {
        switch: Dpid,
        #[serde(default)]
        links: Vec<LinkSpec>,
    },
    SwitchLeave { switch: Dpid },
    Attack(AttackAction),
}

impl TimelineEvent {
    pub fn label(&self) -> String {
        match self {
            TimelineEvent::LinkAdd(l) => format!("link_add {}<->{}", l.a, l.b),
            TimelineEvent::LinkRemove { a, b } => format!("link_remove {a}<->{b}"),
            TimelineEvent::SwitchJoin { switch, .. } => format!("switch_join {switch}"),
            TimelineEvent::SwitchLeave { switch } => format!("switch_leave {switch}"),
            TimelineEvent::Attack(a) => format!("attack {}", a.kind()),
        }
    }

    pub fn is_topology_event(&self) -> bool {
        !matches!(self, TimelineEvent::Attack(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub at: SimTime,
    #[serde(flatten)]
    pub event: TimelineEvent,
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: String,
    pub protocol: Protocol,
    #[serde(default)]
    pub rng_seed: u32,
    #[serde(default = "default_period")]
    pub discovery_period: SimDuration,
    #[serde(default = "default_window")]
    pub lldp_window: SimDuration,
    /// How long the controller waits before declaring a silent control
    /// channel closed.
    #[serde(default = "default_channel_timeout")]
    pub channel_timeout: SimDuration,
    /// When set, path tagging still runs but no failover groups are pushed.
    #[serde(default)]
    pub te_override: bool,
    #[serde(default)]
    pub bfd: BfdParams,
    #[serde(default)]
    pub controller: ControllerProfile,
    #[serde(default)]
    pub switches: Vec<SwitchSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub channels: Vec<ChannelSpec>,
    #[serde(default)]
    pub hosts: Vec<HostSpec>,
    #[serde(default)]
    pub timeline: Vec<TimelineEntry>,
}

fn default_period() -> SimDuration {
    SimDuration::from_secs(10)
}
fn default_window() -> SimDuration {
    SimDuration::from_millis(500)
}
fn default_channel_timeout() -> SimDuration {
    SimDuration::from_secs(3)
}

impl ScenarioSpec {
    pub fn new(id: impl Into<String>, protocol: Protocol) -> Self {
        ScenarioSpec {
            id: id.into(),
            protocol,
            rng_seed: 0,
            discovery_period: default_period(),
            lldp_window: default_window(),
            channel_timeout: default_channel_timeout(),
            te_override: false,
            bfd: BfdParams::default(),
            controller: ControllerProfile::default(),
            switches: Vec::new(),
            links: Vec::new(),
            channels: Vec::new(),
            hosts: Vec::new(),
            timeline: Vec::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        toml::from_str(text).map_err(|e| ModelError::Decode(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String, ModelError> {
        toml::to_string(self).map_err(|e| ModelError::Encode(e.to_string()))
    }

    pub fn switch(&self, dpid: Dpid) -> Option<&SwitchSpec> {
        self.switches.iter().find(|s| s.dpid == dpid)
    }

    pub fn channel(&self, dpid: Dpid) -> Option<&ChannelSpec> {
        self.channels.iter().find(|c| c.switch == dpid)
    }

    pub fn host(&self, name: &str) -> Option<&HostSpec> {
        self.hosts.iter().find(|h| h.name == name)
    }

    /// Time of the last timeline entry, or zero.
    pub fn last_event_at(&self) -> SimTime {
        self.timeline.last().map(|e| e.at).unwrap_or(SimTime::ZERO)
    }
}

/// A broken invariant, naming the element that breaks it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub element: String,
    pub message: String,
}

impl Violation {
    pub fn new(element: impl fmt::Display, message: impl Into<String>) -> Self {
        Violation { element: element.to_string(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.element, self.message)
    }
}

/// An undirected link written with its smaller endpoint first.
pub fn canonical(a: PortRef, b: PortRef) -> (PortRef, PortRef) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Ground-truth physical topology obtained by replaying the timeline.
#[derive(Clone, Debug, Default)]
pub struct PhysicalTopology {
    ports: BTreeMap<Dpid, u16>,
    joined: BTreeSet<Dpid>,
    peers: BTreeMap<PortRef, PortRef>,
    hosts: BTreeMap<PortRef, String>,
}

/// Links and switches changed by one timeline entry.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyDelta {
    pub added: Vec<(PortRef, PortRef)>,
    pub removed: Vec<(PortRef, PortRef)>,
    pub joined: Option<Dpid>,
    pub left: Option<Dpid>,
}

impl PhysicalTopology {
    /// Builds the t=0 topology, collecting every violated invariant.
    pub fn initial(spec: &ScenarioSpec, violations: &mut Vec<Violation>) -> Self {
        let mut topo = PhysicalTopology::default();
        let mut macs = BTreeSet::new();
        for sw in &spec.switches {
            if topo.ports.insert(sw.dpid, sw.ports).is_some() {
                violations.push(Violation::new(sw.dpid, "duplicate dpid"));
            }
            if !macs.insert(sw.mac()) {
                violations.push(Violation::new(sw.dpid, format!("duplicate local_mac {}", sw.mac())));
            }
            if sw.ports == 0 {
                violations.push(Violation::new(sw.dpid, "switch needs at least one port"));
            }
            if sw.joined {
                topo.joined.insert(sw.dpid);
            }
        }
        for host in &spec.hosts {
            if let Err(v) = topo.check_port_free(host.port) {
                violations.push(v);
                continue;
            }
            topo.hosts.insert(host.port, host.name.clone());
        }
        for link in &spec.links {
            if let Err(v) = topo.attach(link) {
                violations.push(v);
            }
        }
        topo
    }

    fn check_port_exists(&self, p: PortRef) -> Result<(), Violation> {
        match self.ports.get(&p.dpid) {
            None => Err(Violation::new(p, "unknown switch")),
            Some(&n) if p.port.0 == 0 || p.port.0 > n => Err(Violation::new(p, "port out of range")),
            Some(_) => Ok(()),
        }
    }

    fn check_port_free(&self, p: PortRef) -> Result<(), Violation> {
        self.check_port_exists(p)?;
        if self.peers.contains_key(&p) {
            return Err(Violation::new(p, "port already part of a link"));
        }
        if let Some(h) = self.hosts.get(&p) {
            return Err(Violation::new(p, format!("port already attached to host {h}")));
        }
        Ok(())
    }

    fn attach(&mut self, link: &LinkSpec) -> Result<(PortRef, PortRef), Violation> {
        if link.a == link.b {
            return Err(Violation::new(link.a, "link endpoints must differ"));
        }
        if link.a.dpid == link.b.dpid {
            return Err(Violation::new(link.a, "link connects a switch to itself"));
        }
        self.check_port_free(link.a)?;
        self.check_port_free(link.b)?;
        for p in [link.a, link.b] {
            if !self.joined.contains(&p.dpid) {
                return Err(Violation::new(p, "switch is not connected"));
            }
        }
        for d in [&link.delay_ab, &link.delay_ba] {
            if !d.is_well_formed() {
                return Err(Violation::new(link.a, "delay range min > max"));
            }
        }
        self.peers.insert(link.a, link.b);
        self.peers.insert(link.b, link.a);
        Ok(canonical(link.a, link.b))
    }

    /// Applies one timeline event, returning what changed physically.
    pub fn apply(&mut self, event: &TimelineEvent) -> Result<TopologyDelta, Violation> {
        let mut delta = TopologyDelta::default();
        match event {
            TimelineEvent::LinkAdd(link) => {
                delta.added.push(self.attach(link)?);
            }
            TimelineEvent::LinkRemove { a, b } => {
                if self.peers.get(a) != Some(b) {
                    return Err(Violation::new(a, format!("no live link {a}<->{b}")));
                }
                self.peers.remove(a);
                self.peers.remove(b);
                delta.removed.push(canonical(*a, *b));
            }
            TimelineEvent::SwitchJoin { switch, links } => {
                if !self.ports.contains_key(switch) {
                    return Err(Violation::new(switch, "unknown switch"));
                }
                if !self.joined.insert(*switch) {
                    return Err(Violation::new(switch, "switch already connected"));
                }
                delta.joined = Some(*switch);
                for link in links {
                    if link.a.dpid != *switch && link.b.dpid != *switch {
                        return Err(Violation::new(link.a, "join link does not touch the joining switch"));
                    }
                    delta.added.push(self.attach(link)?);
                }
            }
            TimelineEvent::SwitchLeave { switch } => {
                if !self.joined.remove(switch) {
                    return Err(Violation::new(switch, "switch is not connected"));
                }
                delta.left = Some(*switch);
                let gone: Vec<PortRef> =
                    self.peers.keys().filter(|p| p.dpid == *switch).copied().collect();
                for p in gone {
                    let peer = self.peers.remove(&p).expect("peer present");
                    self.peers.remove(&peer);
                    delta.removed.push(canonical(p, peer));
                }
            }
            TimelineEvent::Attack(_) => {}
        }
        Ok(delta)
    }

    pub fn peer(&self, p: PortRef) -> Option<PortRef> {
        self.peers.get(&p).copied()
    }

    pub fn host_at(&self, p: PortRef) -> Option<&str> {
        self.hosts.get(&p).map(String::as_str)
    }

    pub fn is_joined(&self, d: Dpid) -> bool {
        self.joined.contains(&d)
    }

    pub fn joined(&self) -> impl Iterator<Item = Dpid> + '_ {
        self.joined.iter().copied()
    }

    /// Every live link as two directed entries.
    pub fn live_directed_links(&self) -> BTreeSet<(PortRef, PortRef)> {
        self.peers.iter().map(|(a, b)| (*a, *b)).collect()
    }

    pub fn live_links(&self) -> BTreeSet<(PortRef, PortRef)> {
        self.peers.iter().filter(|(a, b)| a < b).map(|(a, b)| (*a, *b)).collect()
    }
}

/// Checks every scenario invariant. An empty result means the scenario is
/// runnable; violations are data, never panics.
pub fn validate_scenario(spec: &ScenarioSpec) -> Vec<Violation> {
    let mut violations = Vec::new();
    if spec.lldp_window.is_zero() {
        violations.push(Violation::new("lldp_window", "must be positive"));
    }
    if spec.discovery_period.is_zero() {
        violations.push(Violation::new("discovery_period", "must be positive"));
    }
    if spec.channel_timeout.is_zero() {
        violations.push(Violation::new("channel_timeout", "must be positive"));
    }
    if spec.bfd.interval.is_zero() {
        violations.push(Violation::new("bfd.interval", "must be positive"));
    }
    if spec.bfd.multiplier == 0 {
        violations.push(Violation::new("bfd.multiplier", "must be at least 1"));
    }

    let mut topo = PhysicalTopology::initial(spec, &mut violations);

    let mut names = BTreeSet::new();
    for host in &spec.hosts {
        if !names.insert(host.name.as_str()) {
            violations.push(Violation::new(&host.name, "duplicate host name"));
        }
        if !host.delay.is_well_formed() {
            violations.push(Violation::new(&host.name, "delay range min > max"));
        }
    }

    let mut with_channel = BTreeSet::new();
    for ch in &spec.channels {
        if spec.switch(ch.switch).is_none() {
            violations.push(Violation::new(ch.switch, "channel for unknown switch"));
        }
        if !with_channel.insert(ch.switch) {
            violations.push(Violation::new(ch.switch, "more than one control channel"));
        }
        if !ch.to_controller.is_well_formed() || !ch.from_controller.is_well_formed() {
            violations.push(Violation::new(ch.switch, "channel delay range min > max"));
        }
    }
    for sw in &spec.switches {
        if !with_channel.contains(&sw.dpid) {
            violations.push(Violation::new(sw.dpid, "no control channel"));
        }
    }

    let mut last = SimTime::ZERO;
    for (i, entry) in spec.timeline.iter().enumerate() {
        if entry.at < last {
            violations.push(Violation::new(format!("timeline[{i}]"), "timeline not sorted by time"));
        }
        last = last.max(entry.at);
        if let TimelineEvent::Attack(action) = &entry.event {
            for v in action.validate(spec) {
                violations.push(Violation::new(format!("timeline[{i}].{}", v.element), v.message));
            }
        }
        if let Err(v) = topo.apply(&entry.event) {
            violations.push(Violation::new(format!("timeline[{i}].{}", v.element), v.message));
        }
    }
    violations
}

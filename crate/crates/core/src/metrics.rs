//! Analytic timing predictors and measurements extracted from traces.
//!
//! Predictors are pure functions of delays. [`measure`] replays a trace and
//! never looks at engine state, so any saved trace can be re-measured.
//! [`attach_predictions`] fills the predicted columns from the delays a
//! [`Simulation`] actually sampled.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::{evaluate, AttackVerdict};
use crate::model::{
    ControlMessage, Dpid, PortRef, Protocol, ScenarioSpec, SimDuration, SimTime, TimelineEvent,
};
use crate::simnet::{ControlDirection, Simulation, Trace, TraceKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    BfdDetect,
    LinkAddLearn,
    LinkRemoveLearn,
    Adaptation,
}

/// A predicted duration and the named inputs it was computed from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingPrediction {
    pub quantity: Quantity,
    pub value: SimDuration,
    pub inputs: Vec<(String, SimDuration)>,
}

/// Worst-case BFD detection time.
pub fn predict_bfd_detect(interval: SimDuration, multiplier: u32) -> SimDuration {
    interval * u64::from(multiplier)
}

/// One-way delays relevant to discovering the link between `i` and `j`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkAddDelays {
    /// PORT_STATUS from each switch to the controller.
    pub status_i: SimDuration,
    pub status_j: SimDuration,
    /// PACKET_OUT from the controller to each switch.
    pub out_i: SimDuration,
    pub out_j: SimDuration,
    pub link_ij: SimDuration,
    pub link_ji: SimDuration,
    /// PACKET_IN from each switch to the controller.
    pub in_i: SimDuration,
    pub in_j: SimDuration,
}

impl LinkAddDelays {
    fn inputs(&self) -> Vec<(String, SimDuration)> {
        [
            ("status_i", self.status_i),
            ("status_j", self.status_j),
            ("out_i", self.out_i),
            ("out_j", self.out_j),
            ("link_ij", self.link_ij),
            ("link_ji", self.link_ji),
            ("in_i", self.in_i),
            ("in_j", self.in_j),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Time until both directions of a new link are known: the later port
/// report plus one probe round trip, for the slower direction.
pub fn predict_link_add_learn(d: &LinkAddDelays) -> SimDuration {
    let status = d.status_i.max(d.status_j);
    let ij = status + d.out_i + d.link_ij + d.in_j;
    let ji = status + d.out_j + d.link_ji + d.in_i;
    ij.max(ji)
}

/// Time until a failed link is removed: the first endpoint's detection
/// plus delivery of its report. `None` delivery means that endpoint can
/// never report; the result is `None` when neither can.
pub fn predict_link_remove_learn(t_det: [SimDuration; 2], delivery: [Option<SimDuration>; 2]) -> Option<SimDuration> {
    t_det.iter().zip(delivery).filter_map(|(det, delv)| delv.map(|d| *det + d)).min()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Bootstrap,
    LinkAdd,
    LinkRemove,
    SwitchJoin,
    SwitchLeave,
}

/// Measurements for one topology event (or the initial bootstrap).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventMetrics {
    /// Timeline index; `None` for the bootstrap.
    pub index: Option<usize>,
    pub kind: EventKind,
    pub label: String,
    pub at: SimTime,
    pub added: Vec<(PortRef, PortRef)>,
    pub removed: Vec<(PortRef, PortRef)>,
    pub learning: Option<SimDuration>,
    pub adaptation: Option<SimDuration>,
    /// How long traffic routed over a failed link had no live bucket.
    pub loss_window: Option<SimDuration>,
    pub predicted_learning: Option<TimingPrediction>,
    pub predicted_adaptation: Option<TimingPrediction>,
    /// The controller never reflected this event in its map.
    pub unresolved: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: u64,
    pub at: SimTime,
    pub packet_outs: u64,
    pub packet_ins: u64,
}

/// Control messages crossing the controller boundary in one simulated second.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecondLoad {
    pub second: u64,
    pub to_controller: u64,
    pub from_controller: u64,
}

impl SecondLoad {
    pub fn total(&self) -> u64 {
        self.to_controller + self.from_controller
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub events: Vec<EventMetrics>,
    pub rounds: Vec<RoundMetrics>,
    /// Delivered messages sent by the controller, by kind.
    pub controller_sent: BTreeMap<String, u64>,
    /// Delivered messages received by the controller, by kind.
    pub controller_received: BTreeMap<String, u64>,
    /// Everything switches put on their channels, delivered or not.
    pub switch_emitted: BTreeMap<String, u64>,
    pub per_second: Vec<SecondLoad>,
    pub attacks: Vec<AttackVerdict>,
}

impl RunMetrics {
    pub fn unresolved(&self) -> usize {
        self.events.iter().filter(|e| e.unresolved).count()
    }

    /// PACKET_OUTs the controller sent at or after `from`.
    pub fn packet_outs_since(trace: &Trace, from: SimTime) -> u64 {
        trace
            .iter()
            .filter(|r| match &r.kind {
                TraceKind::ControlDelivered { direction: ControlDirection::FromController, sent_at, message, .. } => {
                    *sent_at >= from && matches!(message, ControlMessage::PacketOut { .. })
                }
                _ => false,
            })
            .count() as u64
    }
}

/// What the controller's map must show before an event counts as learned.
struct Goal {
    present: Vec<(PortRef, PortRef)>,
    absent: Vec<(PortRef, PortRef)>,
    switch_present: Option<Dpid>,
    switch_absent: Option<Dpid>,
}

impl Goal {
    fn met(&self, links: &BTreeSet<(PortRef, PortRef)>, switches: &BTreeSet<Dpid>) -> bool {
        self.present.iter().all(|l| links.contains(l))
            && self.absent.iter().all(|l| !links.contains(l))
            && self.switch_present.is_none_or(|d| switches.contains(&d))
            && self.switch_absent.is_none_or(|d| !switches.contains(&d))
    }
}

fn both_ways(links: &[(PortRef, PortRef)]) -> Vec<(PortRef, PortRef)> {
    links.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect()
}

/// Extracts every metric from a finished trace.
pub fn measure(trace: &Trace, spec: &ScenarioSpec) -> RunMetrics {
    let mut m = RunMetrics::default();
    let mut links = BTreeSet::new();
    let mut switches = BTreeSet::new();
    let mut open: Vec<(usize, Goal)> = Vec::new();
    let mut learned_at: Vec<Option<SimTime>> = Vec::new();

    let initial: Vec<(PortRef, PortRef)> = spec.links.iter().map(|l| (l.a, l.b)).collect();
    m.events.push(EventMetrics {
        index: None,
        kind: EventKind::Bootstrap,
        label: "bootstrap".into(),
        at: SimTime::ZERO,
        added: initial.clone(),
        removed: Vec::new(),
        learning: None,
        adaptation: None,
        loss_window: None,
        predicted_learning: None,
        predicted_adaptation: None,
        unresolved: false,
    });
    learned_at.push(None);
    open.push((0, Goal { present: both_ways(&initial), absent: Vec::new(), switch_present: None, switch_absent: None }));

    let check = |open: &mut Vec<(usize, Goal)>,
                     learned_at: &mut Vec<Option<SimTime>>,
                     links: &BTreeSet<(PortRef, PortRef)>,
                     switches: &BTreeSet<Dpid>,
                     t: SimTime| {
        open.retain(|(i, goal)| {
            if goal.met(links, switches) {
                learned_at[*i] = Some(t);
                false
            } else {
                true
            }
        });
    };

    let mut round_marks: Vec<(u64, SimTime)> = Vec::new();
    for r in trace.iter() {
        match &r.kind {
            TraceKind::Timeline { index, label, added, removed, joined, left } => {
                let event = &spec.timeline[*index].event;
                let kind = match event {
                    TimelineEvent::LinkAdd(_) => EventKind::LinkAdd,
                    TimelineEvent::LinkRemove { .. } => EventKind::LinkRemove,
                    TimelineEvent::SwitchJoin { .. } => EventKind::SwitchJoin,
                    TimelineEvent::SwitchLeave { .. } => EventKind::SwitchLeave,
                    TimelineEvent::Attack(_) => continue,
                };
                let i = m.events.len();
                m.events.push(EventMetrics {
                    index: Some(*index),
                    kind,
                    label: label.clone(),
                    at: r.t,
                    added: added.clone(),
                    removed: removed.clone(),
                    learning: None,
                    adaptation: None,
                    loss_window: None,
                    predicted_learning: None,
                    predicted_adaptation: None,
                    unresolved: false,
                });
                learned_at.push(None);
                let goal = Goal {
                    present: both_ways(added),
                    absent: both_ways(removed),
                    switch_present: *joined,
                    switch_absent: *left,
                };
                open.push((i, goal));
                check(&mut open, &mut learned_at, &links, &switches, r.t);
            }
            TraceKind::MapChanged { added_links, removed_links, added_switches, removed_switches } => {
                for l in removed_links {
                    links.remove(l);
                }
                links.extend(added_links.iter().copied());
                for d in removed_switches {
                    switches.remove(d);
                }
                switches.extend(added_switches.iter().copied());
                check(&mut open, &mut learned_at, &links, &switches, r.t);
            }
            TraceKind::DiscoveryRound { round } => round_marks.push((*round, r.t)),
            _ => {}
        }
    }

    for (e, t) in m.events.iter_mut().zip(&learned_at) {
        match t {
            Some(t) => e.learning = Some(t.saturating_since(e.at)),
            None => e.unresolved = true,
        }
    }

    measure_adaptation(trace, &mut m, &learned_at);
    measure_loss(trace, &mut m);
    count_messages(trace, &mut m);
    m.rounds = rounds(trace, &round_marks);
    m.attacks = spec
        .timeline
        .iter()
        .enumerate()
        .filter(|(_, e)| matches!(e.event, TimelineEvent::Attack(_)))
        .filter_map(|(i, _)| evaluate(spec, trace, i))
        .collect();
    m
}

/// For a single link addition: the later of the two endpoints' first
/// switchover probe across the new link after it was learned.
fn measure_adaptation(trace: &Trace, m: &mut RunMetrics, learned_at: &[Option<SimTime>]) {
    let probes: Vec<(SimTime, PortRef, PortRef)> = trace
        .iter()
        .filter_map(|r| match r.kind {
            TraceKind::ProbeDelivered { from, to, .. } => Some((r.t, from, to)),
            _ => None,
        })
        .collect();
    for (e, learned) in m.events.iter_mut().zip(learned_at) {
        if e.kind != EventKind::LinkAdd {
            continue;
        }
        let (Some(t_l), Some(&(a, b))) = (learned, e.added.first()) else {
            continue;
        };
        let first = |from: PortRef, to: PortRef| {
            probes.iter().find(|(t, f, d)| t >= t_l && *f == from && *d == to).map(|(t, _, _)| *t)
        };
        if let (Some(x), Some(y)) = (first(a, b), first(b, a)) {
            e.adaptation = Some(x.max(y).saturating_since(e.at));
        }
    }
}

/// For removals: per failed port, from the event until its groups again
/// have a live bucket.
/// (time, switch, group, from port, to port).
type SwitchoverRow = (SimTime, Dpid, u64, Option<u16>, Option<u16>);

fn measure_loss(trace: &Trace, m: &mut RunMetrics) {
    let switchovers: Vec<SwitchoverRow> = trace
        .iter()
        .filter_map(|r| match r.kind {
            TraceKind::Switchover { switch, group, from, to } => {
                Some((r.t, switch, group.0, from.map(|p| p.0), to.map(|p| p.0)))
            }
            _ => None,
        })
        .collect();
    for e in m.events.iter_mut() {
        if e.removed.is_empty() || e.kind == EventKind::Bootstrap {
            continue;
        }
        let mut worst: Option<SimDuration> = None;
        for &(a, b) in &e.removed {
            for port in [a, b] {
                let hits = switchovers
                    .iter()
                    .filter(|s| s.0 >= e.at && s.1 == port.dpid && s.3 == Some(port.port.0));
                for &(t, sw, group, _, to) in hits {
                    let restored = if to.is_some() {
                        Some(t)
                    } else {
                        switchovers.iter().find(|s| s.0 >= t && s.1 == sw && s.2 == group && s.4.is_some()).map(|s| s.0)
                    };
                    if let Some(r) = restored {
                        let w = r.saturating_since(e.at);
                        worst = Some(worst.map_or(w, |x| x.max(w)));
                    }
                }
            }
        }
        e.loss_window = worst;
    }
}

fn count_messages(trace: &Trace, m: &mut RunMetrics) {
    let mut per_second: BTreeMap<u64, SecondLoad> = BTreeMap::new();
    let mut last = 0;
    for r in trace.iter() {
        let second = r.t.as_nanos() / 1_000_000_000;
        last = last.max(second);
        match &r.kind {
            TraceKind::ControlDelivered { direction, message, .. } => {
                let kind = message.kind().as_str().to_string();
                let slot = per_second.entry(second).or_insert(SecondLoad { second, ..SecondLoad::default() });
                match direction {
                    ControlDirection::ToController => {
                        slot.to_controller += 1;
                        *m.controller_received.entry(kind.clone()).or_default() += 1;
                        *m.switch_emitted.entry(kind).or_default() += 1;
                    }
                    ControlDirection::FromController => {
                        slot.from_controller += 1;
                        *m.controller_sent.entry(kind).or_default() += 1;
                    }
                }
            }
            TraceKind::ControlDropped { direction: ControlDirection::ToController, message, .. } => {
                *m.switch_emitted.entry(message.kind().as_str().to_string()).or_default() += 1;
            }
            _ => {}
        }
    }
    m.per_second = (0..=last)
        .map(|s| per_second.get(&s).copied().unwrap_or(SecondLoad { second: s, ..SecondLoad::default() }))
        .collect();
}

/// PACKET_OUTs issued at each round mark and LLDP PACKET_INs raised until
/// the next one.
fn rounds(trace: &Trace, marks: &[(u64, SimTime)]) -> Vec<RoundMetrics> {
    let mut out: Vec<RoundMetrics> =
        marks.iter().map(|&(round, at)| RoundMetrics { round, at, packet_outs: 0, packet_ins: 0 }).collect();
    if out.is_empty() {
        return out;
    }
    let slot = |t: SimTime| marks.iter().rposition(|&(_, at)| at <= t);
    for r in trace.iter() {
        let TraceKind::ControlDelivered { sent_at, message, .. } = &r.kind else {
            continue;
        };
        match message {
            ControlMessage::PacketOut { .. } => {
                if let Some(i) = marks.iter().position(|&(_, at)| at == *sent_at) {
                    out[i].packet_outs += 1;
                }
            }
            ControlMessage::PacketIn { .. } => {
                if let Some(i) = slot(*sent_at) {
                    out[i].packet_ins += 1;
                }
            }
            _ => {}
        }
    }
    out
}

fn named(pairs: &[(&str, SimDuration)]) -> Vec<(String, SimDuration)> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Channel delays `(to_controller, from_controller)` of `dpid` around `at`.
fn channel(sim: &Simulation, dpid: Dpid, at: SimTime) -> Option<(SimDuration, SimDuration)> {
    sim.channel_of(dpid, at).map(|c| (c.to_controller, c.from_controller))
}

fn link_add_delays(sim: &Simulation, a: PortRef, b: PortRef, at: SimTime) -> Option<LinkAddDelays> {
    let (up_a, down_a) = channel(sim, a.dpid, at)?;
    let (up_b, down_b) = channel(sim, b.dpid, at)?;
    Some(LinkAddDelays {
        status_i: up_a,
        status_j: up_b,
        out_i: down_a,
        out_j: down_b,
        link_ij: sim.link_delay_after(a, b, at)?,
        link_ji: sim.link_delay_after(b, a, at)?,
        in_i: up_a,
        in_j: up_b,
    })
}

/// Fills the predicted columns for sOFTDP runs from the delays the
/// simulation sampled. Baseline learning depends on round phase and is
/// left unpredicted.
pub fn attach_predictions(sim: &Simulation, m: &mut RunMetrics) {
    let spec = sim.spec();
    if spec.protocol != Protocol::Softdp {
        return;
    }
    let t_det = predict_bfd_detect(spec.bfd.interval, spec.bfd.multiplier);
    for e in m.events.iter_mut() {
        e.predicted_learning = match e.kind {
            EventKind::Bootstrap => None,
            EventKind::LinkAdd => {
                let &(a, b) = e.added.first().expect("link add adds a link");
                link_add_delays(sim, a, b, e.at).map(|d| TimingPrediction {
                    quantity: Quantity::LinkAddLearn,
                    value: predict_link_add_learn(&d),
                    inputs: d.inputs(),
                })
            }
            EventKind::SwitchJoin => predict_join(sim, e),
            EventKind::LinkRemove | EventKind::SwitchLeave => predict_removal(sim, e, t_det),
        };
        if let (Some(_), Some(learn), EventKind::LinkAdd) = (e.adaptation, e.learning, e.kind) {
            let &(a, b) = e.added.first().expect("link add adds a link");
            let legs: Option<Vec<SimDuration>> = [(a, b), (b, a)]
                .iter()
                .map(|&(x, y)| Some(channel(sim, x.dpid, e.at)?.1 + sim.link_delay_after(x, y, e.at)?))
                .collect();
            if let Some(legs) = legs {
                let install = legs[0].max(legs[1]);
                e.predicted_adaptation = Some(TimingPrediction {
                    quantity: Quantity::Adaptation,
                    value: learn + install,
                    inputs: named(&[("learning", learn), ("install_and_probe", install)]),
                });
            }
        }
    }
}

/// A joining switch's ports come up once its handshake reaches it, after
/// which each link follows the link-add prediction.
fn predict_join(sim: &Simulation, e: &EventMetrics) -> Option<TimingPrediction> {
    let TimelineEvent::SwitchJoin { switch, .. } = &sim.spec().timeline[e.index?].event else {
        return None;
    };
    let (up, down) = channel(sim, *switch, e.at)?;
    let handshake = up + down;
    let mut worst = handshake + up;
    let mut inputs = named(&[("hello", up), ("feature_request", down)]);
    for &(a, b) in &e.added {
        let d = link_add_delays(sim, a, b, e.at)?;
        let learn = predict_link_add_learn(&d);
        inputs.push((format!("{a}<->{b}"), learn));
        worst = worst.max(handshake + learn);
    }
    Some(TimingPrediction { quantity: Quantity::LinkAddLearn, value: worst, inputs })
}

/// Each removed link is dropped on the first endpoint report; a leaving
/// switch cannot report, and it disappears with its last link or when its
/// channel times out.
fn predict_removal(sim: &Simulation, e: &EventMetrics, t_det: SimDuration) -> Option<TimingPrediction> {
    let spec = sim.spec();
    let left = match &spec.timeline[e.index?].event {
        TimelineEvent::SwitchLeave { switch } => Some(*switch),
        _ => None,
    };
    let mut inputs = named(&[("t_det", t_det)]);
    let mut worst: Option<SimDuration> = None;
    for &(a, b) in &e.removed {
        let delivery = [a, b].map(|p| {
            if Some(p.dpid) == left {
                None
            } else {
                channel(sim, p.dpid, e.at).map(|c| c.0)
            }
        });
        let v = predict_link_remove_learn([t_det, t_det], delivery)?;
        inputs.push((format!("{a}<->{b}"), v));
        worst = Some(worst.map_or(v, |w| w.max(v)));
    }
    let value = match (worst, left) {
        (Some(v), _) => v,
        (None, Some(_)) => {
            inputs.push(("channel_timeout".into(), spec.channel_timeout));
            spec.channel_timeout
        }
        (None, None) => return None,
    };
    Some(TimingPrediction { quantity: Quantity::LinkRemoveLearn, value, inputs })
}

/// One CSV row per event.
#[derive(Debug, Serialize)]
struct EventRow<'a> {
    index: Option<usize>,
    kind: EventKind,
    label: &'a str,
    at_ns: u64,
    learning_ns: Option<u64>,
    predicted_learning_ns: Option<u64>,
    learning_delta_ns: Option<i128>,
    adaptation_ns: Option<u64>,
    predicted_adaptation_ns: Option<u64>,
    loss_window_ns: Option<u64>,
    unresolved: bool,
}

fn delta(measured: Option<SimDuration>, predicted: &Option<TimingPrediction>) -> Option<i128> {
    Some(i128::from(measured?.as_nanos()) - i128::from(predicted.as_ref()?.value.as_nanos()))
}

pub fn events_csv(m: &RunMetrics) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in &m.events {
        w.serialize(EventRow {
            index: e.index,
            kind: e.kind,
            label: &e.label,
            at_ns: e.at.as_nanos(),
            learning_ns: e.learning.map(|d| d.as_nanos()),
            predicted_learning_ns: e.predicted_learning.as_ref().map(|p| p.value.as_nanos()),
            learning_delta_ns: delta(e.learning, &e.predicted_learning),
            adaptation_ns: e.adaptation.map(|d| d.as_nanos()),
            predicted_adaptation_ns: e.predicted_adaptation.as_ref().map(|p| p.value.as_nanos()),
            loss_window_ns: e.loss_window.map(|d| d.as_nanos()),
            unresolved: e.unresolved,
        })?;
    }
    finish(w)
}

#[derive(Debug, Serialize)]
struct RoundRow {
    round: u64,
    at_ns: u64,
    packet_outs: u64,
    packet_ins: u64,
}

pub fn rounds_csv(m: &RunMetrics) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &m.rounds {
        w.serialize(RoundRow { round: r.round, at_ns: r.at.as_nanos(), packet_outs: r.packet_outs, packet_ins: r.packet_ins })?;
    }
    finish(w)
}

pub fn load_csv(m: &RunMetrics) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in &m.per_second {
        w.serialize(s)?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, csv::Error> {
    let bytes = w.into_inner().map_err(|e| csv::Error::from(io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `contents` to `path` via a temporary file in the same directory,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    use std::io::Write;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::builtin;

    fn ms(v: u64) -> SimDuration {
        SimDuration::from_millis(v)
    }

    #[test]
    fn bfd_detect_examples() {
        assert_eq!(predict_bfd_detect(SimDuration::from_micros(16_700), 3), SimDuration::from_micros(50_100));
        assert_eq!(predict_bfd_detect(ms(7), 1), ms(7));
        assert_eq!(predict_bfd_detect(ms(1), 3), ms(3));
    }

    #[test]
    fn link_add_examples() {
        let uniform = LinkAddDelays {
            status_i: ms(1),
            status_j: ms(1),
            out_i: ms(1),
            out_j: ms(1),
            link_ij: ms(1),
            link_ji: ms(1),
            in_i: ms(1),
            in_j: ms(1),
        };
        assert_eq!(predict_link_add_learn(&uniform), ms(4));
        assert_eq!(predict_link_add_learn(&LinkAddDelays::default()), SimDuration::ZERO);
        let skew = LinkAddDelays { status_i: ms(2), ..uniform };
        assert_eq!(predict_link_add_learn(&skew), ms(5));
    }

    #[test]
    fn link_remove_examples() {
        assert_eq!(predict_link_remove_learn([ms(1), ms(1)], [Some(ms(1)), Some(ms(1))]), Some(ms(2)));
        assert_eq!(predict_link_remove_learn([ms(1), ms(3)], [None, Some(ms(1))]), Some(ms(4)));
        let det = SimDuration::from_micros(50_100);
        assert_eq!(predict_link_remove_learn([det, det], [Some(SimDuration::ZERO), None]), Some(det));
        assert_eq!(predict_link_remove_learn([det, det], [None, None]), None);
    }

    #[test]
    fn empty_timeline_still_counts_messages() {
        let spec = builtin::square(Protocol::Ofdp);
        let sim = Simulation::run(spec.clone(), SimTime::ZERO + SimDuration::from_secs(25)).unwrap();
        let m = measure(sim.trace(), &spec);
        assert_eq!(m.events.len(), 1);
        assert_eq!(m.events[0].kind, EventKind::Bootstrap);
        assert!(m.controller_sent["PACKET_OUT"] > 0);
        assert_eq!(m.rounds.len(), 3);
        assert_eq!(m.per_second.len(), 21, "last record falls in second 20");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let spec = builtin::walkthrough(Protocol::Softdp);
        let sim = Simulation::run(spec.clone(), SimTime::ZERO + SimDuration::from_secs(8)).unwrap();
        let mut m = measure(sim.trace(), &spec);
        attach_predictions(&sim, &mut m);
        let text = events_csv(&m).unwrap();
        assert_eq!(text.lines().count(), 1 + m.events.len());
        assert!(text.starts_with("index,kind,label,at_ns,learning_ns"));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}

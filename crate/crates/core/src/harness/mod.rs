//! Runs scenarios end to end and drives the comparison and attack suites.

pub mod builtin;
mod generate;

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::{AttackAction, AttackKind, AttackVerdict};
use crate::metrics::{self, Quantity, RunMetrics};
use crate::model::{
    Protocol, ScenarioSpec, SimDuration, SimTime, TimelineEntry, TimelineEvent,
};
use crate::simnet::{SimCounters, SimError, Simulation, Trace};

pub use generate::{generate, EventMix, GenParams};

/// Measured minus predicted, for one event.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionDelta {
    pub index: Option<usize>,
    pub label: String,
    pub quantity: Quantity,
    pub predicted: SimDuration,
    pub measured: SimDuration,
    pub delta_ns: i128,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub protocol: Protocol,
    pub seed: u32,
    pub until: SimTime,
    pub metrics: RunMetrics,
    pub deltas: Vec<PredictionDelta>,
    pub attacks: Vec<AttackVerdict>,
    pub counters: SimCounters,
    pub bfd_packets: u64,
    pub trace_records: usize,
    pub digest: String,
}

/// Long enough for every event to settle: baseline links expire after
/// three rounds, silent channels after the channel timeout.
pub fn default_horizon(spec: &ScenarioSpec) -> SimTime {
    let settle = (spec.discovery_period * 4).max(spec.channel_timeout) + SimDuration::from_secs(1);
    spec.last_event_at() + settle
}

/// Runs `spec` to `until` and assembles its report.
pub fn run_scenario(spec: ScenarioSpec, until: SimTime) -> Result<(RunReport, Simulation), SimError> {
    let sim = Simulation::run(spec, until)?;
    let report = report(&sim);
    Ok((report, sim))
}

pub fn report(sim: &Simulation) -> RunReport {
    let spec = sim.spec();
    let mut m = metrics::measure(sim.trace(), spec);
    metrics::attach_predictions(sim, &mut m);
    let mut deltas = Vec::new();
    for e in &m.events {
        let pairs = [(e.learning, &e.predicted_learning), (e.adaptation, &e.predicted_adaptation)];
        for (measured, predicted) in pairs {
            if let (Some(measured), Some(p)) = (measured, predicted) {
                deltas.push(PredictionDelta {
                    index: e.index,
                    label: e.label.clone(),
                    quantity: p.quantity,
                    predicted: p.value,
                    measured,
                    delta_ns: i128::from(measured.as_nanos()) - i128::from(p.value.as_nanos()),
                });
            }
        }
    }
    RunReport {
        scenario: spec.id.clone(),
        protocol: spec.protocol,
        seed: spec.rng_seed,
        until: sim.now(),
        attacks: m.attacks.clone(),
        metrics: m,
        deltas,
        counters: sim.counters(),
        bfd_packets: sim.bfd_packets(),
        trace_records: sim.trace().len(),
        digest: sim.trace().digest(),
    }
}

/// Writes the trace, CSV tables and JSON report into `dir`, each file
/// atomically.
pub fn write_outputs(dir: &Path, report: &RunReport, trace: &Trace) -> io::Result<()> {
    let csv_err = |e: csv::Error| io::Error::other(e.to_string());
    metrics::write_atomic(&dir.join("trace.jsonl"), trace.to_jsonl().as_bytes())?;
    metrics::write_atomic(&dir.join("events.csv"), metrics::events_csv(&report.metrics).map_err(csv_err)?.as_bytes())?;
    metrics::write_atomic(&dir.join("rounds.csv"), metrics::rounds_csv(&report.metrics).map_err(csv_err)?.as_bytes())?;
    metrics::write_atomic(&dir.join("load.csv"), metrics::load_csv(&report.metrics).map_err(csv_err)?.as_bytes())?;
    let json = serde_json::to_vec_pretty(report).map_err(io::Error::other)?;
    metrics::write_atomic(&dir.join("report.json"), &json)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Chain,
    Mesh,
}

impl Shape {
    pub fn build(self, n: usize, protocol: Protocol) -> ScenarioSpec {
        match self {
            Shape::Chain => builtin::chain(n, protocol),
            Shape::Mesh => builtin::mesh(n, protocol),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Shape::Chain => "chain",
            Shape::Mesh => "mesh",
        }
    }
}

/// One (size, protocol) cell of the load comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub shape: Shape,
    pub n: usize,
    pub protocol: Protocol,
    /// Ports across all switches.
    pub ports: u64,
    pub inter_switch_ports: u64,
    pub rounds: usize,
    /// PACKET_OUTs a round is expected to cost: every port, every switch,
    /// or nothing.
    pub expected_per_round: u64,
    /// Steady-state PACKET_OUTs per discovery period, from an event-free
    /// run.
    pub packet_outs_per_round: f64,
    /// LLDP PACKET_INs per round in the run with topology events.
    pub packet_ins_per_round: f64,
    /// Every round of the run with events cost exactly `expected_per_round`.
    pub rounds_exact: bool,
    /// PACKET_OUTs sent after the first period of the event-free run.
    pub steady_packet_outs: u64,
    pub events: usize,
    pub total_messages: u64,
    pub messages_per_sec: f64,
}

/// Adds a toggle of the last chain link (or one mesh link) every second.
pub fn with_toggles(mut spec: ScenarioSpec, horizon: SimDuration) -> ScenarioSpec {
    let Some(last) = spec.links.last().cloned() else {
        return spec;
    };
    let secs = horizon.as_nanos() / 1_000_000_000;
    for s in 1..secs {
        let at = SimTime::ZERO + SimDuration::from_secs(s);
        let event = if s % 2 == 1 {
            TimelineEvent::LinkRemove { a: last.a, b: last.b }
        } else {
            TimelineEvent::LinkAdd(last.clone())
        };
        spec.timeline.push(TimelineEntry { at, event });
    }
    spec
}

fn compare_one(shape: Shape, n: usize, protocol: Protocol, horizon: SimDuration) -> Result<CompareRow, SimError> {
    let base = shape.build(n, protocol);
    let ports: u64 = base.switches.iter().map(|s| u64::from(s.ports)).sum();
    let inter_switch_ports = 2 * base.links.len() as u64;
    let period = base.discovery_period;
    let until = SimTime::ZERO + horizon;

    // Steady state: no events, count what is still sent after the first
    // period.
    let steady = Simulation::run(base.clone(), until)?;
    let steady_outs = RunMetrics::packet_outs_since(steady.trace(), SimTime::ZERO + period);
    let periods = (horizon.as_nanos() / period.as_nanos()).saturating_sub(1).max(1);

    let loaded = with_toggles(base, horizon);
    let events = loaded.timeline.len();
    let sim = Simulation::run(loaded, until)?;
    let m = metrics::measure(sim.trace(), sim.spec());
    let expected = match protocol {
        Protocol::Ofdp => ports,
        Protocol::Ofdpv2 => n as u64,
        Protocol::Softdp => 0,
    };
    let rounds = m.rounds.len();
    let packet_ins_per_round = if rounds == 0 {
        0.0
    } else {
        m.rounds.iter().map(|r| r.packet_ins).sum::<u64>() as f64 / rounds as f64
    };
    let total: u64 = m.per_second.iter().map(|s| s.total()).sum();
    Ok(CompareRow {
        shape,
        n,
        protocol,
        ports,
        inter_switch_ports,
        rounds,
        expected_per_round: expected,
        packet_outs_per_round: steady_outs as f64 / periods as f64,
        packet_ins_per_round,
        rounds_exact: m.rounds.iter().all(|r| r.packet_outs == expected),
        steady_packet_outs: steady_outs,
        events,
        total_messages: total,
        messages_per_sec: total as f64 / horizon.as_secs_f64(),
    })
}

/// Runs every protocol at every size, one worker thread per size.
pub fn compare(shape: Shape, sizes: &[usize], horizon: SimDuration) -> Result<Vec<CompareRow>, SimError> {
    let per_size: Vec<Result<Vec<CompareRow>, SimError>> = std::thread::scope(|s| {
        let handles: Vec<_> = sizes
            .iter()
            .map(|&n| s.spawn(move || Protocol::ALL.iter().map(|&p| compare_one(shape, n, p, horizon)).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("compare worker panicked")).collect()
    });
    let mut rows = Vec::new();
    for r in per_size {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Whether periodic cost is strictly ordered OFDP > OFDPv2 > sOFTDP for
/// one size.
pub fn ordering_holds(rows: &[CompareRow], n: usize) -> bool {
    let per = |p: Protocol| rows.iter().find(|r| r.n == n && r.protocol == p).map(|r| r.packet_outs_per_round);
    match (per(Protocol::Ofdp), per(Protocol::Ofdpv2), per(Protocol::Softdp)) {
        (Some(a), Some(b), Some(c)) => a > b && b > c,
        _ => false,
    }
}

pub fn compare_csv(rows: &[CompareRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "shape",
        "n",
        "protocol",
        "ports",
        "inter_switch_ports",
        "rounds",
        "expected_per_round",
        "packet_outs_per_round",
        "packet_ins_per_round",
        "rounds_exact",
        "steady_packet_outs",
        "events",
        "total_messages",
        "messages_per_sec",
    ])?;
    for r in rows {
        w.write_record([
            r.shape.as_str().to_string(),
            r.n.to_string(),
            r.protocol.as_str().to_string(),
            r.ports.to_string(),
            r.inter_switch_ports.to_string(),
            r.rounds.to_string(),
            r.expected_per_round.to_string(),
            format!("{:.3}", r.packet_outs_per_round),
            format!("{:.3}", r.packet_ins_per_round),
            r.rounds_exact.to_string(),
            r.steady_packet_outs.to_string(),
            r.events.to_string(),
            r.total_messages.to_string(),
            format!("{:.3}", r.messages_per_sec),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Horizon for the attack scenarios: past every attack plus time for
/// fabricated links to appear.
pub const ATTACK_HORIZON: SimDuration = SimDuration::from_secs(40);

/// Runs one attack scenario and returns its verdict.
pub fn run_attack(spec: ScenarioSpec) -> Result<Option<AttackVerdict>, SimError> {
    let index = spec.timeline.iter().position(|e| matches!(e.event, TimelineEvent::Attack(_)));
    let until = (SimTime::ZERO + ATTACK_HORIZON).max(spec.last_event_at() + SimDuration::from_secs(5));
    let sim = Simulation::run(spec, until)?;
    Ok(index.and_then(|i| crate::adversary::evaluate(sim.spec(), sim.trace(), i)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackCell {
    pub kind: AttackKind,
    pub protocol: Protocol,
    pub verdict: Option<AttackVerdict>,
}

/// Every attack against every protocol on the builtin attack topology.
pub fn attack_matrix() -> Result<Vec<AttackCell>, SimError> {
    let mut out = Vec::new();
    for kind in AttackKind::ALL {
        for protocol in Protocol::ALL {
            let verdict = run_attack(builtin::attack(kind, protocol))?;
            out.push(AttackCell { kind, protocol, verdict });
        }
    }
    Ok(out)
}

/// Outcome of one in-window relay attempt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub tunnel_delay: SimDuration,
    pub succeeded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelayResidual {
    pub window: SimDuration,
    pub points: Vec<ResidualPoint>,
    pub success_rate: f64,
}

/// Relays that re-plug both host ports, opening discovery windows, for a
/// spread of tunnel delays against sOFTDP.
pub fn relay_residual(tunnel_delays: &[SimDuration]) -> Result<RelayResidual, SimError> {
    let mut points = Vec::new();
    let mut window = SimDuration::ZERO;
    for &d in tunnel_delays {
        let mut spec = builtin::attack(AttackKind::Relay, Protocol::Softdp);
        window = spec.lldp_window;
        for entry in &mut spec.timeline {
            if let TimelineEvent::Attack(AttackAction::Relay { tunnel_delay, bounce, .. }) = &mut entry.event {
                *tunnel_delay = d;
                *bounce = true;
            }
        }
        let succeeded = run_attack(spec)?.is_some_and(|v| v.succeeded);
        points.push(ResidualPoint { tunnel_delay: d, succeeded });
    }
    let wins = points.iter().filter(|p| p.succeeded).count();
    let success_rate = if points.is_empty() { 0.0 } else { wins as f64 / points.len() as f64 };
    Ok(RelayResidual { window, points, success_rate })
}

/// Default sweep: 0.1 ms to 1 s, straddling the discovery window.
pub fn default_residual_sweep() -> Vec<SimDuration> {
    [100, 500, 1_000, 5_000, 20_000, 100_000, 250_000, 400_000, 490_000, 510_000, 750_000, 1_000_000]
        .into_iter()
        .map(SimDuration::from_micros)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_covers_baseline_expiry() {
        let spec = builtin::walkthrough(Protocol::Ofdp);
        assert_eq!(default_horizon(&spec), SimTime::ZERO + SimDuration::from_secs(4 + 40 + 1));
    }

    #[test]
    fn toggles_alternate() {
        let spec = with_toggles(builtin::chain(3, Protocol::Softdp), SimDuration::from_secs(5));
        let kinds: Vec<bool> =
            spec.timeline.iter().map(|e| matches!(e.event, TimelineEvent::LinkRemove { .. })).collect();
        assert_eq!(kinds, vec![true, false, true, false]);
    }

    #[test]
    fn report_digest_matches_trace() {
        let spec = builtin::square(Protocol::Softdp);
        let (report, sim) = run_scenario(spec, SimTime::ZERO + SimDuration::from_secs(1)).unwrap();
        assert_eq!(report.digest, sim.trace().digest());
        assert_eq!(report.trace_records, sim.trace().len());
    }
}

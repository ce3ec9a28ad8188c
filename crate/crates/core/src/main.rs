use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use softdp::adversary::AttackKind;
use softdp::harness::{self, builtin, Shape};
use softdp::metrics::{self, Quantity};
use softdp::model::{Protocol, ScenarioSpec, SimDuration, SimTime, TimelineEvent};
use softdp::simnet::SimError;

const EXIT_SCENARIO: u8 = 2;
const EXIT_ASSERTION: u8 = 3;

#[derive(Parser)]
#[command(name = "softdp", version, about = "Deterministic SDN topology-discovery simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace, CSV tables and a JSON report.
    Run {
        /// Scenario TOML file, or `builtin:<name>`.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        protocol: Option<Protocol>,
        #[arg(long)]
        seed: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Simulated seconds to run; defaults to long enough for every
        /// event to settle.
        #[arg(long)]
        until: Option<f64>,
        /// Exit 3 unless measured sOFTDP timings match their predictions.
        #[arg(long)]
        check: bool,
    },
    /// Compare controller load across protocols and sizes.
    Compare {
        /// `chain` or `mesh`.
        #[arg(long, default_value = "chain")]
        scenario: String,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 200.0)]
        until: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one attack against one protocol and print the verdict.
    Attack {
        #[arg(long)]
        attack: AttackKind,
        #[arg(long, default_value = "softdp")]
        protocol: Protocol,
        /// Scenario TOML file or `builtin:<name>`; defaults to the builtin
        /// attack topology.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        seed: Option<u32>,
        /// Also sweep relay tunnel delays against discovery windows.
        #[arg(long)]
        residual: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List builtin scenarios, or print one as TOML.
    Scenarios {
        #[arg(long)]
        dump: Option<String>,
        #[arg(long, default_value = "softdp")]
        protocol: Protocol,
    },
}

#[derive(Debug)]
enum Failure {
    Scenario(String),
    Assertion(String),
    Io(std::io::Error),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidScenario(v) => Failure::Scenario(v),
            other => Failure::Assertion(other.to_string()),
        }
    }
}

fn load(source: &str, protocol: Protocol) -> Result<ScenarioSpec, Failure> {
    if let Some(name) = source.strip_prefix("builtin:") {
        return builtin::by_name(name, protocol).ok_or_else(|| Failure::Scenario(format!("unknown builtin {name}")));
    }
    let text = std::fs::read_to_string(source).map_err(|e| Failure::Scenario(format!("{source}: {e}")))?;
    ScenarioSpec::from_toml_str(&text).map_err(|e| Failure::Scenario(format!("{source}: {e}")))
}

fn secs(s: f64) -> Result<SimTime, Failure> {
    if !(s.is_finite() && s >= 0.0) {
        return Err(Failure::Scenario(format!("--until must be a non-negative number, got {s}")));
    }
    Ok(SimTime::ZERO + SimDuration::from_nanos((s * 1e9).round() as u64))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let bytes = serde_json::to_vec_pretty(value).map_err(std::io::Error::other)?;
    metrics::write_atomic(path, &bytes)?;
    Ok(())
}

fn cmd_run(
    scenario: &str,
    protocol: Option<Protocol>,
    seed: Option<u32>,
    out: Option<&Path>,
    until: Option<f64>,
    check: bool,
) -> Result<(), Failure> {
    let mut spec = load(scenario, protocol.unwrap_or(Protocol::Softdp))?;
    if let Some(p) = protocol {
        spec.protocol = p;
    }
    if let Some(s) = seed {
        spec.rng_seed = s;
    }
    let until = match until {
        Some(s) => secs(s)?,
        None => harness::default_horizon(&spec),
    };
    let (report, sim) = harness::run_scenario(spec, until)?;
    println!("scenario {} protocol {} seed {}", report.scenario, report.protocol.as_str(), report.seed);
    for e in &report.metrics.events {
        let show = |d: Option<SimDuration>| d.map_or("-".to_string(), |d| d.to_string());
        let predicted = e.predicted_learning.as_ref().map(|p| p.value);
        println!(
            "  {:<32} at {:>10}  learning {:>10}  predicted {:>10}  adaptation {:>10}{}",
            e.label,
            e.at.to_string(),
            show(e.learning),
            show(predicted),
            show(e.adaptation),
            if e.unresolved { "  UNRESOLVED" } else { "" }
        );
    }
    for v in &report.attacks {
        println!("  attack {} succeeded={}", v.kind, v.succeeded);
    }
    println!("digest {}", report.digest);
    if let Some(dir) = out {
        harness::write_outputs(dir, &report, sim.trace())?;
    }
    if check {
        let tick = sim.spec().bfd.interval.as_nanos() as i128;
        let bad: Vec<String> = report
            .deltas
            .iter()
            .filter(|d| match d.quantity {
                Quantity::LinkRemoveLearn => d.delta_ns < 0 || d.delta_ns > tick,
                _ => d.delta_ns != 0,
            })
            .map(|d| format!("{} {:?} off by {} ns", d.label, d.quantity, d.delta_ns))
            .collect();
        if !bad.is_empty() {
            return Err(Failure::Assertion(bad.join("; ")));
        }
    }
    Ok(())
}

fn cmd_compare(scenario: &str, sizes: &[usize], until: f64, out: Option<&Path>) -> Result<(), Failure> {
    let shape = match scenario {
        "chain" | "builtin:chain" => Shape::Chain,
        "mesh" | "builtin:mesh" => Shape::Mesh,
        other => return Err(Failure::Scenario(format!("compare supports chain or mesh, got {other}"))),
    };
    let horizon = secs(until)?.since_start();
    let rows = harness::compare(shape, sizes, horizon)?;
    let table = harness::compare_csv(&rows).map_err(|e| std::io::Error::other(e.to_string()))?;
    print!("{table}");
    if let Some(dir) = out {
        metrics::write_atomic(&dir.join("compare.csv"), table.as_bytes())?;
    }
    let broken: Vec<String> = sizes
        .iter()
        .filter(|&&n| n >= 2 && !harness::ordering_holds(&rows, n))
        .map(|n| format!("ordering fails at n={n}"))
        .chain(rows.iter().filter(|r| !r.rounds_exact).map(|r| format!("inexact rounds at n={} {}", r.n, r.protocol)))
        .collect();
    if broken.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assertion(broken.join("; ")))
    }
}

fn cmd_attack(
    attack: AttackKind,
    protocol: Protocol,
    scenario: Option<&str>,
    seed: Option<u32>,
    residual: bool,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let mut spec = match scenario {
        Some(s) => load(s, protocol)?,
        None => builtin::attack(attack, protocol),
    };
    spec.protocol = protocol;
    if let Some(s) = seed {
        spec.rng_seed = s;
    }
    let has_attack =
        spec.timeline.iter().any(|e| matches!(&e.event, TimelineEvent::Attack(a) if a.kind() == attack));
    if !has_attack {
        return Err(Failure::Scenario(format!("scenario {} has no {attack} attack", spec.id)));
    }
    spec.timeline.retain(|e| match &e.event {
        TimelineEvent::Attack(a) => a.kind() == attack,
        _ => true,
    });
    let verdict = harness::run_attack(spec)?;
    match &verdict {
        Some(v) => {
            println!("{} vs {}: succeeded={}", attack, protocol.as_str(), v.succeeded);
            println!("{}", serde_json::to_string_pretty(&v.evidence).map_err(std::io::Error::other)?);
        }
        None => println!("{} vs {}: no verdict", attack, protocol.as_str()),
    }
    if let Some(dir) = out {
        write_json(&dir.join(format!("attack_{attack}_{}.json", protocol.as_str())), &verdict)?;
    }
    if residual {
        let r = harness::relay_residual(&harness::default_residual_sweep())?;
        for p in &r.points {
            println!("  relay tunnel {:>8}: {}", p.tunnel_delay.to_string(), if p.succeeded { "fabricated" } else { "blocked" });
        }
        println!("relay residual success rate {:.3} (window {})", r.success_rate, r.window);
        if let Some(dir) = out {
            write_json(&dir.join("relay_residual.json"), &r)?;
        }
    }
    Ok(())
}

fn cmd_scenarios(dump: Option<&str>, protocol: Protocol) -> Result<(), Failure> {
    match dump {
        None => {
            for name in builtin::NAMES {
                println!("{name}");
            }
            Ok(())
        }
        Some(name) => {
            let spec = builtin::by_name(name, protocol).ok_or_else(|| Failure::Scenario(format!("unknown builtin {name}")))?;
            let text = spec.to_toml_string().map_err(|e| Failure::Scenario(e.to_string()))?;
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, protocol, seed, out, until, check } => {
            cmd_run(scenario, *protocol, *seed, out.as_deref(), *until, *check)
        }
        Command::Compare { scenario, sizes, until, out } => cmd_compare(scenario, sizes, *until, out.as_deref()),
        Command::Attack { attack, protocol, scenario, seed, residual, out } => {
            cmd_attack(*attack, *protocol, scenario.as_deref(), *seed, *residual, out.as_deref())
        }
        Command::Scenarios { dump, protocol } => cmd_scenarios(dump.as_deref(), *protocol),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Scenario(msg)) => {
            eprintln!("scenario error: {msg}");
            ExitCode::from(EXIT_SCENARIO)
        }
        Err(Failure::Assertion(msg)) => {
            eprintln!("assertion failed: {msg}");
            ExitCode::from(EXIT_ASSERTION)
        }
        Err(Failure::Io(e)) => {
            eprintln!("i/o error: {e}");
            ExitCode::FAILURE
        }
    }
}

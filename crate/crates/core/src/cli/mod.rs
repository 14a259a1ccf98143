//! Command-line front end: runs a scenario file, one of the three
//! experiments, or the forwarding benchmark, and prints a [`Report`].

pub mod bench;
pub mod report;

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::net::Ipv6Addr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::ids::NodeId;
use crate::netsim::trace::{goodput_estimate, reorder_fraction};
use crate::netsim::{Stats, NS_PER_MS};
use crate::scenario::{
    build_simulation, ConfigError, DaemonKind, Overrides, ProgramConfig, Scenario, ScenarioConfig, TraceConfig,
    TransitBehaviorConfig,
};
use crate::usecases::dm::{owd_collector_drain, summarize, DelayRecord, OwdCollector};
use crate::usecases::hybrid::{AppliedDelay, TwdProber};
use crate::usecases::traceroute::{multipath_traceroute, HopGraph, TracerouteOptions};
use crate::usecases::wrr::WrrState;

pub use bench::{bench_report, run_bench, BenchFunction, BenchResult};
pub use report::{Format, Metric, Report, Series};

/// Share of originated packets that may be dropped before a run counts
/// as a drop storm.
pub const DROP_STORM_RATIO: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Output { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Something was measured but not everything the command promises.
    Partial,
    DropStorm,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Partial => 1,
            Status::DropStorm => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub status: Status,
}

/// Reads, overrides and builds a scenario. Returns it with the digest of
/// the file as written.
pub fn load_scenario(path: &Path, overrides: &Overrides) -> Result<(Scenario, String), ConfigError> {
    let (mut cfg, digest) = ScenarioConfig::load(path)?;
    cfg.apply(overrides);
    Ok((build_simulation(&cfg)?, digest))
}

fn write_trace(s: &Scenario, out: Option<&Path>, report: &mut Report) -> Result<(), CliError> {
    let Some(dir) = out else { return Ok(()) };
    let path = dir.join("trace.tsv");
    let err = |source| CliError::Output {
        path: path.clone(),
        source,
    };
    fs::create_dir_all(dir).map_err(err)?;
    let f = fs::File::create(&path).map_err(err)?;
    let mut w = io::BufWriter::new(f);
    s.sim.write_trace(&mut w).map_err(err)?;
    w.flush().map_err(err)?;
    report.trace_path = Some(path);
    Ok(())
}

fn base_report(name: &str, s: &Scenario, digest: String) -> Report {
    let mut r = Report::new(name);
    r.config_digest = Some(digest);
    r.param("scenario", &s.config.name);
    r.param("seed", s.config.seed);
    r.param("duration_ms", s.config.duration_ms);
    r
}

fn traffic_metrics(r: &mut Report, stats: &Stats) -> Status {
    r.metric("originated", stats.originated() as f64, "packets");
    r.metric("forwarded", stats.forwarded() as f64, "packets");
    r.metric("delivered", stats.delivered() as f64, "packets");
    r.metric("dropped", stats.dropped() as f64, "packets");
    r.metric("events_emitted", stats.events_emitted as f64, "events");
    r.metric("events_dropped", stats.events_dropped as f64, "events");
    let mut reasons = std::collections::BTreeMap::new();
    for n in &stats.nodes {
        for (reason, c) in &n.drop_reasons {
            *reasons.entry(format!("{reason:?}")).or_insert(0u64) += c;
        }
    }
    for (reason, c) in reasons {
        r.metric(format!("dropped.{reason}"), c as f64, "packets");
    }
    let ratio = if stats.originated() == 0 {
        0.0
    } else {
        stats.dropped() as f64 / stats.originated() as f64
    };
    r.metric("drop_ratio", ratio, "ratio");
    if ratio > DROP_STORM_RATIO {
        Status::DropStorm
    } else {
        Status::Ok
    }
}

pub fn cmd_run(path: &Path, overrides: &Overrides, out: Option<&Path>) -> Result<Outcome, CliError> {
    let (mut s, digest) = load_scenario(path, overrides)?;
    let stats = s.run();
    let mut report = base_report("run", &s, digest);
    let status = traffic_metrics(&mut report, &stats);
    write_trace(&s, out, &mut report)?;
    Ok(Outcome { report, status })
}

/// Every delay record gathered by the scenario's collectors, including
/// events still queued when the run stopped.
pub fn owd_records(s: &Scenario) -> (Vec<DelayRecord>, u64) {
    let mut records = Vec::new();
    let mut malformed = 0;
    for id in s.daemons_of(DaemonKind::OwdCollector) {
        if let Some(c) = s.sim.daemon::<OwdCollector>(id) {
            records.extend_from_slice(&c.records);
            malformed += c.malformed;
            if let Some(n) = c.node {
                let (rest, bad) = owd_collector_drain(&s.sim.node(n).events);
                records.extend(rest);
                malformed += bad;
            }
        }
    }
    (records, malformed)
}

pub fn cmd_owd(path: &Path, overrides: &Overrides, out: Option<&Path>) -> Result<Outcome, CliError> {
    let (mut s, digest) = load_scenario(path, overrides)?;
    if s.daemons_of(DaemonKind::OwdCollector).next().is_none() {
        return Err(ConfigError::Invalid {
            path: "daemons".into(),
            message: "the owd experiment needs an owd_collector daemon".into(),
        }
        .into());
    }
    let stats = s.run();
    let mut report = base_report("owd", &s, digest);
    if let Some(r) = overrides.ratio {
        report.param("ratio", format!("1:{r}"));
    }
    let mut status = traffic_metrics(&mut report, &stats);
    let (records, malformed) = owd_records(&s);
    let sent: u64 = s.sim.generators().iter().map(|g| g.sent()).sum();
    report.metric("packets_sent", sent as f64, "packets");
    report.metric("probes", records.len() as f64, "probes");
    let ms = |ns: f64| ns / NS_PER_MS as f64;
    match summarize(&records) {
        Some(sum) => {
            report.metric("owd_mean", ms(sum.mean_ns), "ms");
            report.metric("owd_min", ms(sum.min_ns as f64), "ms");
            report.metric("owd_max", ms(sum.max_ns as f64), "ms");
            report.metric("owd_p99", ms(sum.p99_ns as f64), "ms");
        }
        None => {
            for m in ["owd_mean", "owd_min", "owd_max", "owd_p99"] {
                report.metric(m, 0.0, "ms");
            }
            if status == Status::Ok {
                status = Status::Partial;
            }
        }
    }
    report.metric("event_drops", (stats.events_dropped + malformed) as f64, "events");
    write_trace(&s, out, &mut report)?;
    Ok(Outcome { report, status })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridMetrics {
    /// Packets scheduled on each WRR path.
    pub per_link: Vec<u64>,
    pub reorder_fraction: Option<f64>,
    pub goodput_bps: Option<f64>,
    pub compensation: Vec<AppliedDelay>,
    pub twd_probes: u64,
}

/// Reorder and goodput of the scenario's metrics flow, WRR counters and
/// the prober's compensation history.
pub fn hybrid_metrics(s: &Scenario) -> Result<HybridMetrics, ConfigError> {
    let m = s.config.metrics.as_ref().ok_or_else(|| ConfigError::Invalid {
        path: "metrics".into(),
        message: "the hybrid experiment needs a metrics section naming the flow and sink".into(),
    })?;
    let sink = s.node(&m.sink).ok_or_else(|| ConfigError::Invalid {
        path: "metrics.sink".into(),
        message: format!("unknown node {:?}", m.sink),
    })?;
    let mut per_link = Vec::new();
    for t in &s.config.transit {
        if let TransitBehaviorConfig::Program {
            program: ProgramConfig::Wrr { paths },
        } = &t.behavior
        {
            let counts = s
                .node(&t.node)
                .and_then(|n| WrrState::load(&s.sim.node(n).maps, paths.len()))
                .map(|st| st.counts)
                .unwrap_or_else(|| vec![0; paths.len()]);
            per_link = counts;
            break;
        }
    }
    let mut compensation = Vec::new();
    let mut twd_probes = 0;
    for id in s.daemons_of(DaemonKind::TwdProber) {
        if let Some(p) = s.sim.daemon::<TwdProber>(id) {
            compensation.extend_from_slice(&p.history);
            twd_probes += p.probes_sent.iter().sum::<u64>();
        }
    }
    let trace = s.sim.trace();
    let penalty = (m.stall_penalty_ms * NS_PER_MS as f64).round() as u64;
    Ok(HybridMetrics {
        per_link,
        reorder_fraction: reorder_fraction(trace, m.flow, sink).ok(),
        goodput_bps: goodput_estimate(trace, m.flow, sink, m.gap_threshold, penalty).ok(),
        compensation,
        twd_probes,
    })
}

pub fn cmd_hybrid(path: &Path, overrides: &Overrides, out: Option<&Path>) -> Result<Outcome, CliError> {
    let (mut s, digest) = load_scenario(path, overrides)?;
    // fail before a long run rather than after it
    hybrid_metrics(&s)?;
    let stats = s.run();
    let mut report = base_report("hybrid", &s, digest);
    let on = s.config.daemons.iter().any(|d| {
        matches!(d, crate::scenario::DaemonConfig::TwdProber { compensate: true, .. })
    });
    report.param("compensation", if on { "on" } else { "off" });
    let mut status = traffic_metrics(&mut report, &stats);
    let h = hybrid_metrics(&s)?;
    for (i, c) in h.per_link.iter().enumerate() {
        report.metric(format!("link{i}.packets"), *c as f64, "packets");
    }
    if (h.reorder_fraction.is_none() || h.goodput_bps.is_none()) && status == Status::Ok {
        status = Status::Partial;
    }
    report.metric("reorder_fraction", h.reorder_fraction.unwrap_or(0.0), "ratio");
    report.metric("goodput_estimate", h.goodput_bps.unwrap_or(0.0) / 1e6, "Mbit/s");
    report.metric("twd_probes", h.twd_probes as f64, "probes");
    let current = s.links_with_delay().into_iter().map(|(_, d)| d).max().unwrap_or(0);
    report.metric("compensation_delay", current as f64 / NS_PER_MS as f64, "ms");
    let mut by_link: HashMap<u32, Vec<(u64, f64)>> = HashMap::new();
    for a in &h.compensation {
        by_link
            .entry(a.link.0)
            .or_default()
            .push((a.time_ns, a.delay_ns as f64 / NS_PER_MS as f64));
    }
    let mut links: Vec<_> = by_link.into_iter().collect();
    links.sort_by_key(|(l, _)| *l);
    for (l, points) in links {
        let name = s.link_names.get(l as usize).cloned().unwrap_or_else(|| l.to_string());
        report.series.push(Series {
            name: format!("compensation_delay.{name}"),
            unit: "ms".into(),
            points,
        });
    }
    write_trace(&s, out, &mut report)?;
    Ok(Outcome { report, status })
}

fn resolve_addr(s: &Scenario, key: &str, what: &str) -> Result<Ipv6Addr, ConfigError> {
    if let Ok(a) = key.parse() {
        return Ok(a);
    }
    s.node(key)
        .map(|n| s.sim.node(n).tables.primary_address())
        .ok_or_else(|| ConfigError::Invalid {
            path: what.into(),
            message: format!("unknown node {key:?}"),
        })
}

fn resolve_node(s: &Scenario, key: &str, what: &str) -> Result<NodeId, ConfigError> {
    let by_addr = key.parse().ok().and_then(|a| s.sim.node_by_address(a));
    by_addr.or_else(|| s.node(key)).ok_or_else(|| ConfigError::Invalid {
        path: what.into(),
        message: format!("unknown node {key:?}"),
    })
}

/// Traceroute from `src` to `target` (node names or addresses). With
/// `use_oamp` off every hop is probed by hop limit.
pub fn traceroute(
    s: &mut Scenario,
    src: &str,
    target: &str,
    use_oamp: bool,
    opts: &TracerouteOptions,
) -> Result<HopGraph, ConfigError> {
    let src = resolve_node(s, src, "--src")?;
    let target = resolve_addr(s, target, "--target")?;
    let oamp = if use_oamp { s.oamp_sids.clone() } else { HashMap::new() };
    Ok(multipath_traceroute(&mut s.sim, src, target, &oamp, opts))
}

pub fn cmd_traceroute(
    path: &Path,
    overrides: &Overrides,
    src: &str,
    target: &str,
    use_oamp: bool,
    opts: &TracerouteOptions,
) -> Result<Outcome, CliError> {
    let (mut s, digest) = load_scenario(path, overrides)?;
    let graph = traceroute(&mut s, src, target, use_oamp, opts)?;
    let mut report = base_report("traceroute", &s, digest);
    report.param("src", src);
    report.param("target", target);
    report.param("oamp", if use_oamp { "on" } else { "off" });
    report.metric("hops", graph.hops.len() as f64, "hops");
    report.metric("probes", graph.total_probes() as f64, "probes");
    report.metric("reached", if graph.reached { 1.0 } else { 0.0 }, "bool");
    let names: HashMap<Ipv6Addr, String> = s
        .sim
        .nodes()
        .iter()
        .flat_map(|n| n.tables.addresses.iter().map(move |a| (*a, n.name.clone())))
        .collect();
    report.body = Some(graph.render(|a| names.get(&a).cloned()));
    let status = if graph.reached { Status::Ok } else { Status::Partial };
    Ok(Outcome { report, status })
}

pub fn cmd_bench(functions: &[BenchFunction], packets: u64, trials: usize) -> Outcome {
    let results = run_bench(functions, packets, trials);
    Outcome {
        report: bench_report(&results, packets),
        status: Status::Ok,
    }
}

#[derive(Debug, Parser)]
#[command(name = "srv6sim", version, about = "SRv6 dataplane simulator and experiment runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Report format on stdout and in the output directory.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario for its configured duration.
    Run(ScenarioArgs),
    /// One-way delay measurement with End.DM.
    Owd(OwdArgs),
    /// Two-link aggregation with optional delay compensation.
    Hybrid(HybridArgs),
    /// Multipath traceroute using End.OAMP where available.
    Traceroute(TracerouteArgs),
    /// Forwarding microbenchmark of the built-in functions.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TraceToggle {
    All,
    Off,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    pub scenario: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated duration in milliseconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Directory for the report and trace.tsv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub trace: Option<TraceToggle>,
}

impl ScenarioArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            duration_ms: self.duration,
            trace: self.trace.map(|t| {
                TraceConfig::Mode(match t {
                    TraceToggle::All => "all".into(),
                    TraceToggle::Off => "off".into(),
                })
            }),
            ..Overrides::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct OwdArgs {
    #[command(flatten)]
    pub common: ScenarioArgs,
    /// Probe one packet in N.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub ratio: Option<u64>,
    /// Packets per generator.
    #[arg(long)]
    pub count: Option<u64>,
}

#[derive(Debug, Args)]
pub struct HybridArgs {
    #[command(flatten)]
    pub common: ScenarioArgs,
    #[arg(long, value_enum)]
    pub compensation: Option<Toggle>,
}

#[derive(Debug, Args)]
pub struct TracerouteArgs {
    #[command(flatten)]
    pub common: ScenarioArgs,
    /// Source node name or address.
    #[arg(long)]
    pub src: String,
    /// Target node name or address.
    #[arg(long)]
    pub target: String,
    /// Ignore End.OAMP SIDs and probe by hop limit only.
    #[arg(long)]
    pub no_oamp: bool,
    /// Number of flow labels for hop-limited probing.
    #[arg(long, default_value_t = 32)]
    pub flows: u32,
    #[arg(long, default_value_t = 3000)]
    pub timeout_ms: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = BenchFunction::ALL.map(|f| f.name().to_string()))]
    pub functions: Vec<String>,
    #[arg(long, default_value_t = 200_000)]
    pub packets: u64,
    #[arg(long, default_value_t = 3)]
    pub trials: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn write_report(report: &Report, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let Some(dir) = out else { return Ok(()) };
    let name = match format {
        Format::Text => "report.txt",
        Format::Tsv => "report.tsv",
    };
    let path = dir.join(name);
    fs::create_dir_all(dir)
        .and_then(|_| fs::write(&path, report.render(format)))
        .map_err(|source| CliError::Output { path, source })
}

/// Executes a parsed command line, printing the report, and returns the
/// process exit code.
pub fn execute(cli: Cli) -> i32 {
    let format = cli.format;
    let (result, out) = match &cli.command {
        Command::Run(a) => (cmd_run(&a.scenario, &a.overrides(), a.out.as_deref()), a.out.clone()),
        Command::Owd(a) => {
            let mut o = a.common.overrides();
            o.ratio = a.ratio;
            o.count = a.count;
            (cmd_owd(&a.common.scenario, &o, a.common.out.as_deref()), a.common.out.clone())
        }
        Command::Hybrid(a) => {
            let mut o = a.common.overrides();
            o.compensation = a.compensation.map(|t| t == Toggle::On);
            (cmd_hybrid(&a.common.scenario, &o, a.common.out.as_deref()), a.common.out.clone())
        }
        Command::Traceroute(a) => {
            let opts = TracerouteOptions {
                flow_labels: (0..a.flows).collect(),
                timeout_ns: a.timeout_ms * NS_PER_MS,
                ..TracerouteOptions::default()
            };
            (
                cmd_traceroute(&a.common.scenario, &a.common.overrides(), &a.src, &a.target, !a.no_oamp, &opts),
                a.common.out.clone(),
            )
        }
        Command::Bench(a) => {
            let mut functions = Vec::new();
            for f in &a.functions {
                match f.parse::<BenchFunction>() {
                    Ok(f) => functions.push(f),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return 2;
                    }
                }
            }
            (Ok(cmd_bench(&functions, a.packets, a.trials)), a.out.clone())
        }
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    print!("{}", outcome.report.render(format));
    if let Err(e) = write_report(&outcome.report, format, out.as_deref()) {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match outcome.status {
        Status::Ok => {}
        Status::Partial => eprintln!("warning: partial result"),
        Status::DropStorm => eprintln!("error: more than half of all packets were dropped"),
    }
    outcome.status.exit_code()
}

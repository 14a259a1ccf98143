//! JSON scenario files: parsing, validation and construction of a
//! [`Simulation`]. The schema is documented in `scenarios/schema.json`.

use std::collections::HashMap;
use std::fmt;
use std::net::Ipv6Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ids::{LinkId, Nexthop, NodeId, TableId};
use crate::netsim::{DaemonId, LinkParams, Simulation, TraceMode, UdpStream, NS_PER_MS};
use crate::packet::SegmentRoutingHeader;
use crate::program::samples::{AddTlv, EndTProgram, Noop, TagIncrement};
use crate::program::ProgramRef;
use crate::srv6::{FibEntry, LocalBehavior, Prefix, TransitBehavior};
use crate::usecases::dm::{DmTransit, EndDm, OwdCollector};
use crate::usecases::hybrid::{CompensatorState, ProbedLink, TwdProber};
use crate::usecases::oamp::{EndOamp, OampResponder};
use crate::usecases::tlvs::Controller;
use crate::usecases::wrr::{Wrr, WrrPath};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{path}: {message} (line {line}, column {column})")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("cannot read {file}: {message}")]
    Io { file: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub duration_ms: f64,
    #[serde(default)]
    pub trace: TraceConfig,
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub links: Vec<LinkConfig>,
    #[serde(default)]
    pub routes: Vec<RouteConfig>,
    #[serde(default)]
    pub sids: Vec<SidConfig>,
    #[serde(default)]
    pub transit: Vec<TransitConfig>,
    #[serde(default)]
    pub daemons: Vec<DaemonConfig>,
    #[serde(default)]
    pub generators: Vec<GeneratorConfig>,
    #[serde(default)]
    pub metrics: Option<MetricsConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(untagged)]
pub enum TraceConfig {
    /// "all" or "off"
    Mode(String),
    Nodes(Vec<String>),
    #[default]
    #[serde(skip)]
    All,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub name: String,
    /// The first address is the node's primary address.
    pub addresses: Vec<Ipv6Addr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub a: String,
    pub b: String,
    pub bandwidth_mbps: f64,
    #[serde(default)]
    pub rtt_mean_ms: f64,
    #[serde(default)]
    pub rtt_stddev_ms: f64,
}

impl LinkConfig {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("{}-{}", self.a, self.b))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Via {
    Node(String),
    Link {
        node: String,
        link: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteConfig {
    pub node: String,
    pub prefix: String,
    #[serde(default)]
    pub table: u32,
    pub via: Vec<Via>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidConfig {
    pub node: String,
    pub sid: Ipv6Addr,
    pub behavior: BehaviorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BehaviorConfig {
    End,
    EndX {
        via: Via,
    },
    EndT {
        table: u32,
    },
    EndB6 {
        segments: Vec<Ipv6Addr>,
    },
    EndB6Encaps {
        segments: Vec<Ipv6Addr>,
    },
    EndDt6 {
        #[serde(default)]
        table: u32,
    },
    EndBpf {
        program: ProgramConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitConfig {
    pub node: String,
    pub prefix: String,
    pub behavior: TransitBehaviorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransitBehaviorConfig {
    Insert { segments: Vec<Ipv6Addr> },
    Encaps { segments: Vec<Ipv6Addr> },
    Program { program: ProgramConfig },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub addr: Ipv6Addr,
    pub port: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrrPathConfig {
    pub weight: u32,
    pub segments: Vec<Ipv6Addr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProgramConfig {
    Noop,
    EndT {
        table: u32,
    },
    TagIncrement,
    AddTlv,
    DmTransit {
        ratio: u64,
        segments: Vec<Ipv6Addr>,
        #[serde(default)]
        path_id: u16,
        controller: ControllerConfig,
    },
    EndDm,
    Wrr {
        paths: Vec<WrrPathConfig>,
    },
    EndOamp,
}

fn default_interval_ms() -> f64 {
    100.0
}

fn default_alpha() -> f64 {
    crate::usecases::hybrid::DEFAULT_ALPHA
}

fn default_true() -> bool {
    true
}

fn default_probe_port() -> u16 {
    8800
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DaemonConfig {
    OwdCollector {
        node: String,
    },
    OampResponder {
        node: String,
    },
    TwdProber {
        node: String,
        links: [String; 2],
        dm_sids: [Ipv6Addr; 2],
        return_sids: [Ipv6Addr; 2],
        #[serde(default = "default_interval_ms")]
        interval_ms: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_true")]
        compensate: bool,
        #[serde(default = "default_probe_port")]
        port: u16,
        #[serde(default)]
        start_ms: f64,
    },
}

fn default_src_port() -> u16 {
    40000
}

fn default_dst_port() -> u16 {
    9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub node: String,
    pub dst: Ipv6Addr,
    pub rate_pps: u64,
    pub payload_size: usize,
    pub count: u64,
    #[serde(default)]
    pub flow: u32,
    #[serde(default)]
    pub start_ms: f64,
    #[serde(default = "default_src_port")]
    pub src_port: u16,
    #[serde(default = "default_dst_port")]
    pub dst_port: u16,
}

fn default_gap_threshold() -> u32 {
    3
}

/// Which flow the reordering and goodput metrics look at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub flow: u32,
    pub sink: String,
    #[serde(default = "default_gap_threshold")]
    pub gap_threshold: u32,
    #[serde(default)]
    pub stall_penalty_ms: f64,
}

/// Command-line adjustments applied on top of a file. They do not change
/// the configuration digest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub duration_ms: Option<f64>,
    pub ratio: Option<u64>,
    pub compensation: Option<bool>,
    pub count: Option<u64>,
    pub trace: Option<TraceConfig>,
}

impl ScenarioConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ConfigError::Parse {
                path,
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            file: path.display().to_string(),
            message: e.to_string(),
        })?;
        let cfg = Self::from_json_str(&text)?;
        Ok((cfg, config_digest(&text)?))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = o.duration_ms {
            self.duration_ms = d;
        }
        if let Some(t) = &o.trace {
            self.trace = t.clone();
        }
        if let Some(c) = o.count {
            for g in &mut self.generators {
                g.count = c;
            }
        }
        let set_ratio = |p: &mut ProgramConfig| {
            if let (ProgramConfig::DmTransit { ratio, .. }, Some(r)) = (p, o.ratio) {
                *ratio = r;
            }
        };
        for t in &mut self.transit {
            if let TransitBehaviorConfig::Program { program } = &mut t.behavior {
                set_ratio(program);
            }
        }
        for s in &mut self.sids {
            if let BehaviorConfig::EndBpf { program } = &mut s.behavior {
                set_ratio(program);
            }
        }
        if let Some(on) = o.compensation {
            for d in &mut self.daemons {
                if let DaemonConfig::TwdProber { compensate, .. } = d {
                    *compensate = on;
                }
            }
        }
    }

    pub fn duration_ns(&self) -> u64 {
        ms_to_ns(self.duration_ms)
    }
}

fn ms_to_ns(ms: f64) -> u64 {
    (ms * NS_PER_MS as f64).round().max(0.0) as u64
}

/// SHA-256 over the file's JSON with object keys sorted and whitespace
/// removed, as lowercase hex.
pub fn config_digest(text: &str) -> Result<String, ConfigError> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        path: ".".into(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let canonical = serde_json::to_string(&v).map_err(|e| invalid(".", e))?;
    let hash = Sha256::digest(canonical.as_bytes());
    Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DaemonKind {
    OwdCollector,
    OampResponder,
    TwdProber,
}

/// A built simulation together with lookup tables from the file.
#[derive(Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub sim: Simulation,
    pub daemons: Vec<(DaemonId, DaemonKind)>,
    pub link_names: Vec<String>,
    /// Primary address of each node bound to End.OAMP, mapped to its SID.
    pub oamp_sids: HashMap<Ipv6Addr, Ipv6Addr>,
}

impl Scenario {
    pub fn run(&mut self) -> crate::netsim::Stats {
        let end = self.config.duration_ns();
        self.sim.run_until(end)
    }

    pub fn daemons_of(&self, kind: DaemonKind) -> impl Iterator<Item = DaemonId> + '_ {
        self.daemons.iter().filter(move |(_, k)| *k == kind).map(|(id, _)| *id)
    }

    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.sim.node_by_name(name)
    }

    pub fn link(&self, name: &str) -> Option<LinkId> {
        self.link_names.iter().position(|n| n == name).map(|i| LinkId(i as u32))
    }

    /// Links currently carrying a non-zero egress delay, by name.
    pub fn links_with_delay(&self) -> Vec<(String, u64)> {
        let mut out = Vec::new();
        for (i, l) in self.sim.links().iter().enumerate() {
            let (a, b) = l.endpoints;
            for n in [a, b] {
                if let Some(d) = l.qdisc_delay(n).filter(|d| *d > 0) {
                    out.push((self.link_names[i].clone(), d));
                }
            }
        }
        out
    }
}

struct Builder {
    sim: Simulation,
    names: HashMap<String, NodeId>,
    link_names: Vec<String>,
}

impl Builder {
    fn node(&self, path: &str, name: &str) -> Result<NodeId, ConfigError> {
        self.names
            .get(name)
            .copied()
            .ok_or_else(|| invalid(path, format!("unknown node {name:?}")))
    }

    fn link(&self, path: &str, name: &str) -> Result<LinkId, ConfigError> {
        self.link_names
            .iter()
            .position(|n| n == name)
            .map(|i| LinkId(i as u32))
            .ok_or_else(|| invalid(path, format!("unknown link {name:?}")))
    }

    fn nexthop(&self, path: &str, from: NodeId, via: &Via) -> Result<Nexthop, ConfigError> {
        let (node_name, link_name) = match via {
            Via::Node(n) => (n, None),
            Via::Link { node, link } => (node, Some(link)),
        };
        let to = self.node(path, node_name)?;
        let link = match link_name {
            Some(l) => {
                let id = self.link(path, l)?;
                let e = self.sim.link(id).endpoints;
                if e != (from, to) && e != (to, from) {
                    return Err(invalid(path, format!("link {l:?} does not connect to {node_name:?}")));
                }
                id
            }
            None => *self
                .sim
                .links_between(from, to)
                .first()
                .ok_or_else(|| invalid(path, format!("no link towards {node_name:?}")))?,
        };
        Ok(Nexthop::new(self.sim.node(to).tables.primary_address(), link))
    }
}

fn srh_for(path: &str, segments: &[Ipv6Addr]) -> Result<SegmentRoutingHeader, ConfigError> {
    if segments.is_empty() || segments.len() > 128 {
        return Err(invalid(path, "segment list must hold 1 to 128 segments"));
    }
    Ok(SegmentRoutingHeader::from_path(segments))
}

fn prefix(path: &str, s: &str) -> Result<Prefix, ConfigError> {
    s.parse().map_err(|e| invalid(path, e))
}

fn program(path: &str, cfg: &ProgramConfig) -> Result<ProgramRef, ConfigError> {
    Ok(match cfg {
        ProgramConfig::Noop => ProgramRef::new(Noop),
        ProgramConfig::EndT { table } => ProgramRef::new(EndTProgram { table: TableId(*table) }),
        ProgramConfig::TagIncrement => ProgramRef::new(TagIncrement),
        ProgramConfig::AddTlv => ProgramRef::new(AddTlv::default()),
        ProgramConfig::DmTransit {
            ratio,
            segments,
            path_id,
            controller,
        } => {
            if *ratio == 0 {
                return Err(invalid(format!("{path}.ratio"), "probing ratio must be at least 1"));
            }
            srh_for(&format!("{path}.segments"), segments)?;
            ProgramRef::new(DmTransit::new(
                *ratio,
                segments.clone(),
                *path_id,
                Controller::new(controller.addr, controller.port),
            ))
        }
        ProgramConfig::EndDm => ProgramRef::new(EndDm),
        ProgramConfig::Wrr { paths } => {
            if paths.is_empty() || paths.len() > 4 {
                return Err(invalid(format!("{path}.paths"), "WRR needs 1 to 4 paths"));
            }
            let mut out = Vec::new();
            for (i, p) in paths.iter().enumerate() {
                if p.weight == 0 {
                    return Err(invalid(format!("{path}.paths[{i}].weight"), "weight must be positive"));
                }
                out.push(WrrPath {
                    weight: p.weight,
                    srh: srh_for(&format!("{path}.paths[{i}].segments"), &p.segments)?,
                });
            }
            ProgramRef::new(Wrr::new(out))
        }
        ProgramConfig::EndOamp => ProgramRef::new(EndOamp),
    })
}

fn trace_mode(b: &Builder, cfg: &TraceConfig) -> Result<TraceMode, ConfigError> {
    Ok(match cfg {
        TraceConfig::All => TraceMode::All,
        TraceConfig::Mode(m) if m == "all" => TraceMode::All,
        TraceConfig::Mode(m) if m == "off" => TraceMode::Off,
        TraceConfig::Mode(m) => return Err(invalid("trace", format!("expected \"all\", \"off\" or a node list, got {m:?}"))),
        TraceConfig::Nodes(list) => TraceMode::Nodes(
            list.iter()
                .enumerate()
                .map(|(i, n)| b.node(&format!("trace[{i}]"), n))
                .collect::<Result<_, _>>()?,
        ),
    })
}

/// Validates `cfg` and instantiates nodes, links, tables, programs,
/// daemons and generators. The clock starts at zero.
// `!(x > 0.0)` also rejects NaN
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn build_simulation(cfg: &ScenarioConfig) -> Result<Scenario, ConfigError> {
    if !(cfg.duration_ms > 0.0) {
        return Err(invalid("duration_ms", "duration must be positive"));
    }
    let mut b = Builder {
        sim: Simulation::new(cfg.seed),
        names: HashMap::new(),
        link_names: Vec::new(),
    };

    let mut owners: HashMap<Ipv6Addr, String> = HashMap::new();
    for (i, n) in cfg.nodes.iter().enumerate() {
        let path = format!("nodes[{i}]");
        if b.names.contains_key(&n.name) {
            return Err(invalid(format!("{path}.name"), format!("duplicate node {:?}", n.name)));
        }
        if n.addresses.is_empty() {
            return Err(invalid(format!("{path}.addresses"), "a node needs at least one address"));
        }
        for a in &n.addresses {
            if let Some(prev) = owners.insert(*a, n.name.clone()) {
                return Err(invalid(format!("{path}.addresses"), format!("{a} already assigned to {prev:?}")));
            }
        }
        let id = b.sim.add_node(n.name.clone(), n.addresses.clone());
        b.names.insert(n.name.clone(), id);
    }

    for (i, l) in cfg.links.iter().enumerate() {
        let path = format!("links[{i}]");
        let a = b.node(&format!("{path}.a"), &l.a)?;
        let z = b.node(&format!("{path}.b"), &l.b)?;
        if a == z {
            return Err(invalid(&path, "a link needs two distinct endpoints"));
        }
        if !(l.bandwidth_mbps > 0.0) {
            return Err(invalid(format!("{path}.bandwidth_mbps"), "bandwidth must be positive"));
        }
        if l.rtt_mean_ms < 0.0 || l.rtt_stddev_ms < 0.0 {
            return Err(invalid(&path, "delays must not be negative"));
        }
        let name = l.display_name();
        if b.link_names.contains(&name) {
            return Err(invalid(format!("{path}.name"), format!("duplicate link {name:?}")));
        }
        let params = LinkParams::from_rtt(
            (l.bandwidth_mbps * 1e6).round() as u64,
            ms_to_ns(l.rtt_mean_ms),
            ms_to_ns(l.rtt_stddev_ms),
        );
        b.sim.add_link(a, z, params).map_err(|e| invalid(&path, e))?;
        b.link_names.push(name);
    }

    let mut seen_routes = std::collections::HashSet::new();
    for (i, r) in cfg.routes.iter().enumerate() {
        let path = format!("routes[{i}]");
        let node = b.node(&format!("{path}.node"), &r.node)?;
        let p = prefix(&format!("{path}.prefix"), &r.prefix)?;
        if !seen_routes.insert((node, p, r.table)) {
            return Err(invalid(&path, format!("duplicate route {p} in table {}", r.table)));
        }
        let nexthops = r
            .via
            .iter()
            .enumerate()
            .map(|(j, v)| b.nexthop(&format!("{path}.via[{j}]"), node, v))
            .collect::<Result<Vec<_>, _>>()?;
        let entry = FibEntry::new(p, nexthops, TableId(r.table)).map_err(|e| invalid(format!("{path}.via"), e))?;
        b.sim.node_mut(node).fib_insert(entry);
    }

    let mut oamp_sids = HashMap::new();
    for (i, s) in cfg.sids.iter().enumerate() {
        let path = format!("sids[{i}]");
        let node = b.node(&format!("{path}.node"), &s.node)?;
        if b.sim.node(node).tables.local_sids.contains_key(&s.sid) {
            return Err(invalid(format!("{path}.sid"), format!("duplicate SID {}", s.sid)));
        }
        let bp = format!("{path}.behavior");
        let behavior = match &s.behavior {
            BehaviorConfig::End => LocalBehavior::End,
            BehaviorConfig::EndX { via } => LocalBehavior::EndX(b.nexthop(&format!("{bp}.via"), node, via)?),
            BehaviorConfig::EndT { table } => LocalBehavior::EndT(TableId(*table)),
            BehaviorConfig::EndB6 { segments } => LocalBehavior::EndB6(srh_for(&format!("{bp}.segments"), segments)?),
            BehaviorConfig::EndB6Encaps { segments } => LocalBehavior::EndB6Encaps {
                srh: srh_for(&format!("{bp}.segments"), segments)?,
                src: None,
            },
            BehaviorConfig::EndDt6 { table } => LocalBehavior::EndDT6(TableId(*table)),
            BehaviorConfig::EndBpf { program: pc } => {
                if matches!(pc, ProgramConfig::EndOamp) {
                    oamp_sids.insert(b.sim.node(node).tables.primary_address(), s.sid);
                }
                LocalBehavior::EndBpf(program(&format!("{bp}.program"), pc)?)
            }
        };
        b.sim
            .node_mut(node)
            .add_local_sid(s.sid, behavior)
            .map_err(|e| invalid(&bp, e))?;
    }

    for (i, t) in cfg.transit.iter().enumerate() {
        let path = format!("transit[{i}]");
        let node = b.node(&format!("{path}.node"), &t.node)?;
        let p = prefix(&format!("{path}.prefix"), &t.prefix)?;
        if b.sim.node(node).tables.transit.get(&p).is_some() {
            return Err(invalid(format!("{path}.prefix"), format!("duplicate transit prefix {p}")));
        }
        let bp = format!("{path}.behavior");
        let behavior = match &t.behavior {
            TransitBehaviorConfig::Insert { segments } => {
                TransitBehavior::Insert(srh_for(&format!("{bp}.segments"), segments)?)
            }
            TransitBehaviorConfig::Encaps { segments } => TransitBehavior::Encaps {
                srh: srh_for(&format!("{bp}.segments"), segments)?,
                src: None,
            },
            TransitBehaviorConfig::Program { program: pc } => {
                TransitBehavior::Program(program(&format!("{bp}.program"), pc)?)
            }
        };
        b.sim
            .node_mut(node)
            .add_transit(p, behavior)
            .map_err(|e| invalid(&bp, e))?;
    }

    let mut daemons = Vec::new();
    let mut consumers: HashMap<NodeId, usize> = HashMap::new();
    for (i, d) in cfg.daemons.iter().enumerate() {
        let path = format!("daemons[{i}]");
        let node_name = match d {
            DaemonConfig::OwdCollector { node } | DaemonConfig::OampResponder { node } | DaemonConfig::TwdProber { node, .. } => node,
        };
        let node = b.node(&format!("{path}.node"), node_name)?;
        if let Some(prev) = consumers.insert(node, i) {
            return Err(invalid(&path, format!("node {node_name:?} already has daemons[{prev}]")));
        }
        let entry = match d {
            DaemonConfig::OwdCollector { .. } => (
                b.sim.add_daemon(Box::new(OwdCollector::new(node)), Some(node), None),
                DaemonKind::OwdCollector,
            ),
            DaemonConfig::OampResponder { .. } => (
                b.sim.add_daemon(Box::new(OampResponder::new(node)), Some(node), None),
                DaemonKind::OampResponder,
            ),
            DaemonConfig::TwdProber {
                links,
                dm_sids,
                return_sids,
                interval_ms,
                alpha,
                compensate,
                port,
                start_ms,
                ..
            } => {
                if !(*interval_ms > 0.0) {
                    return Err(invalid(format!("{path}.interval_ms"), "interval must be positive"));
                }
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return Err(invalid(format!("{path}.alpha"), "alpha must be in (0, 1]"));
                }
                let mut probed = Vec::new();
                for k in 0..2 {
                    let lp = format!("{path}.links[{k}]");
                    let id = b.link(&lp, &links[k])?;
                    if b.sim.link(id).peer(node).is_none() {
                        return Err(invalid(lp, format!("link {:?} is not attached to {node_name:?}", links[k])));
                    }
                    probed.push(ProbedLink {
                        link: id,
                        dm_sid: dm_sids[k],
                        return_sid: return_sids[k],
                    });
                }
                let mut p = TwdProber::new(node, [probed[0], probed[1]], *port);
                p.interval_ns = ms_to_ns(*interval_ms);
                p.compensate = *compensate;
                p.state = CompensatorState::new(*alpha);
                (
                    b.sim.add_daemon(Box::new(p), Some(node), Some(ms_to_ns(*start_ms))),
                    DaemonKind::TwdProber,
                )
            }
        };
        daemons.push(entry);
    }

    for (i, g) in cfg.generators.iter().enumerate() {
        let path = format!("generators[{i}]");
        let node = b.node(&format!("{path}.node"), &g.node)?;
        if g.rate_pps == 0 {
            return Err(invalid(format!("{path}.rate_pps"), "rate must be positive"));
        }
        if g.payload_size < crate::netsim::trace::STREAM_HEADER_LEN || g.payload_size > 65_000 {
            return Err(invalid(format!("{path}.payload_size"), "payload must hold 12 to 65000 octets"));
        }
        let src = b.sim.node(node).tables.primary_address();
        let mut s = UdpStream::new(node, src, g.dst, g.rate_pps, g.payload_size, g.count)
            .with_flow(g.flow)
            .starting_at(ms_to_ns(g.start_ms));
        s.src_port = g.src_port;
        s.dst_port = g.dst_port;
        b.sim.add_generator(s);
    }

    if let Some(m) = &cfg.metrics {
        b.node("metrics.sink", &m.sink)?;
    }
    let mode = trace_mode(&b, &cfg.trace)?;
    b.sim.set_trace_mode(mode);

    Ok(Scenario {
        config: cfg.clone(),
        sim: b.sim,
        daemons,
        link_names: b.link_names,
        oamp_sids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "t", "duration_ms": 10,
        "nodes": [{"name": "A", "addresses": ["fc00::1"]}, {"name": "B", "addresses": ["fc00::2"]}],
        "links": [{"a": "A", "b": "B", "bandwidth_mbps": 100, "rtt_mean_ms": 2}],
        "routes": [{"node": "A", "prefix": "::/0", "via": ["B"]}]
    }"#;

    #[test]
    fn builds_minimal() {
        let cfg = ScenarioConfig::from_json_str(MINIMAL).unwrap();
        let s = build_simulation(&cfg).unwrap();
        assert_eq!(s.sim.nodes().len(), 2);
        assert_eq!(s.sim.links().len(), 1);
        assert_eq!(s.sim.link(LinkId(0)).params.delay_mean_ns, 1_000_000);
        assert_eq!(s.link("A-B"), Some(LinkId(0)));
    }

    #[test]
    fn duplicate_node_is_rejected() {
        let text = MINIMAL.replace("\"name\": \"B\"", "\"name\": \"A\"");
        let cfg = ScenarioConfig::from_json_str(&text).unwrap();
        let err = build_simulation(&cfg).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref path, .. } if path == "nodes[1].name"), "{err}");
    }

    #[test]
    fn unknown_reference_names_the_key() {
        let text = MINIMAL.replace("\"via\": [\"B\"]", "\"via\": [\"Z\"]");
        let err = build_simulation(&ScenarioConfig::from_json_str(&text).unwrap()).unwrap_err();
        assert_eq!(err.to_string(), "routes[0].via[0]: unknown node \"Z\"");
    }

    #[test]
    fn parse_errors_carry_path_and_line() {
        let text = MINIMAL.replace("\"bandwidth_mbps\": 100", "\"bandwidth_mbps\": \"fast\"");
        match ScenarioConfig::from_json_str(&text).unwrap_err() {
            ConfigError::Parse { path, line, .. } => {
                assert_eq!(path, "links[0].bandwidth_mbps");
                assert_eq!(line, 4);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn digest_ignores_formatting_and_key_order() {
        let a = config_digest(r#"{"b": 1, "a": [1, 2]}"#).unwrap();
        let b = config_digest("{\"a\":[1,2],\n \"b\":1}").unwrap();
        assert_eq!(a, b);
        assert_ne!(a, config_digest(r#"{"a": [2, 1], "b": 1}"#).unwrap());
        assert_eq!(a.len(), 64);
    }
}

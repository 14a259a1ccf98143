//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//! Built with `harness = false` so the criteria run in order on one thread.

mod common;

use std::collections::BTreeSet;
use std::net::Ipv6Addr;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use srv6sim::cli::bench::{run_bench, BenchFunction};
use srv6sim::cli::{hybrid_metrics, owd_records, traceroute};
use srv6sim::netsim::rng::SimRng;
use srv6sim::netsim::NS_PER_MS;
use srv6sim::packet::{decode_packet, encode_packet};
use srv6sim::program::samples::Noop;
use srv6sim::program::{run_transit_program, ProgramRef};
use srv6sim::scenario::{build_simulation, Overrides, Scenario, ScenarioConfig, TraceConfig};
use srv6sim::srv6::{process_ingress, FibEntry, LocalBehavior, Prefix};
use srv6sim::usecases::traceroute::{HopMethod, TracerouteOptions};
use srv6sim::usecases::wrr::{Wrr, WrrPath};
use srv6sim::{LinkId, Nexthop, NodeId, Packet, SegmentRoutingHeader, TableId};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn load(name: &str, o: &Overrides) -> ScenarioConfig {
    let (mut cfg, _) = ScenarioConfig::load(&common::scenario_path(name)).expect("fixture loads");
    cfg.apply(o);
    cfg
}

fn build(cfg: &ScenarioConfig) -> Scenario {
    build_simulation(cfg).expect("fixture builds")
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure!(t < limit, "took {t:?}, limit {limit:?}");
    Ok(t)
}

fn codec_suite() -> Verdict {
    let start = Instant::now();
    for seed in 0..10_000u64 {
        let p = common::random_packet(&mut common::rng(seed));
        let bytes = encode_packet(&p).map_err(|e| format!("seed {seed}: encode: {e}"))?;
        let back = decode_packet(&bytes).map_err(|e| format!("seed {seed}: decode: {e}"))?;
        ensure!(back == p, "seed {seed}: decoded packet differs");
        let again = encode_packet(&back).map_err(|e| format!("seed {seed}: re-encode: {e}"))?;
        ensure!(again == bytes, "seed {seed}: re-encoded bytes differ");
    }
    let (mut parsed, mut rejected) = (0, 0);
    for corpus in 0..1_000u64 {
        let mut r = common::rng(1 << 32 | corpus);
        let base = encode_packet(&common::random_packet(&mut r)).expect("valid packet");
        for _ in 0..16 {
            let mut bytes = base.clone();
            common::mutate(&mut r, &mut bytes);
            let res = std::panic::catch_unwind(|| decode_packet(&bytes));
            match res {
                Err(_) => return Err(format!("corpus {corpus}: decoder panicked")),
                Ok(Err(_)) => rejected += 1,
                Ok(Ok(p)) => {
                    ensure!(
                        p.validate_srhs().is_ok() && p.check().is_ok(),
                        "corpus {corpus}: accepted an invalid packet"
                    );
                    parsed += 1;
                }
            }
        }
    }
    let t = within(start, Duration::from_secs(10))?;
    Ok(format!(
        "10000 round trips, 1000 corpora ({rejected} rejected, {parsed} valid), {:.2}s",
        t.as_secs_f64()
    ))
}

fn sandbox_suite() -> Verdict {
    let start = Instant::now();
    let (mut accepted, mut calls) = (0, 0);
    for seed in 0..10_000u64 {
        let f = common::fuzz_once(seed);
        calls += f.calls;
        ensure!(f.violations.is_empty(), "seed {seed}: {:?}", f.violations);
        if let Some(bytes) = f.wire {
            let p = decode_packet(&bytes).map_err(|e| format!("seed {seed}: accepted packet fails decode: {e}"))?;
            ensure!(p.validate_srhs().is_ok(), "seed {seed}: accepted packet has an invalid SRH");
            accepted += 1;
        }
    }
    let t = within(start, Duration::from_secs(30))?;
    Ok(format!(
        "10000 programs, {calls} helper calls, {accepted} accepted, {:.2}s",
        t.as_secs_f64()
    ))
}

fn noop_equivalence() -> Verdict {
    let mut forwarded = 0;
    for seed in 0..1_000u64 {
        let p = common::random_sr_packet(&mut common::rng(seed), common::SID);
        let mut native = common::test_node();
        native.add_local_sid(common::SID, LocalBehavior::End).expect("no maps");
        let mut bpf = common::test_node();
        bpf.add_local_sid(common::SID, LocalBehavior::EndBpf(ProgramRef::new(Noop)))
            .expect("no maps");
        let a = process_ingress(&mut native, p.clone(), 7);
        let b = process_ingress(&mut bpf, p, 7);
        ensure!(a.decision == b.decision, "seed {seed}: {:?} vs {:?}", a.decision, b.decision);
        if matches!(a.decision, srv6sim::srv6::ForwardingDecision::Forward { .. }) {
            forwarded += 1;
        }
    }
    Ok(format!("1000/1000 decisions identical ({forwarded} forwarded)"))
}

const R_S2: u64 = 1;

fn owd_reproduction() -> Verdict {
    // zero jitter: every probe sees the propagation delay plus the
    // serialization of the 224-octet probe at 1 Gbit/s
    let mut s = build(&load("setup1.json", &Overrides::default()));
    s.run();
    let (records, _) = owd_records(&s);
    let expect = 15 * NS_PER_MS as i64 + 224 * 8;
    ensure!(!records.is_empty(), "no probes collected");
    ensure!(
        records.iter().all(|r| r.owd_ns == expect),
        "OWDs differ from {expect} ns: {:?}",
        records.iter().map(|r| r.owd_ns).collect::<BTreeSet<_>>()
    );

    // jitter: per-direction stddev 2.5 ms, every packet probed
    let o = Overrides {
        ratio: Some(1),
        count: Some(1_000),
        duration_ms: Some(100_500.0),
        trace: Some(TraceConfig::Mode("off".into())),
        ..Overrides::default()
    };
    let mut cfg = load("setup1.json", &o);
    cfg.links[R_S2 as usize].rtt_stddev_ms = 5.0;
    cfg.generators[0].rate_pps = 10;
    let mut s = build(&cfg);
    s.run();
    let (mut records, _) = owd_records(&s);
    records.sort_by_key(|r| r.tx_ts_ns);
    ensure!(records.len() == 1_000, "{} jittered probes", records.len());
    let n = records.len() as f64;
    let mean = records.iter().map(|r| r.owd_ns as f64).sum::<f64>() / n;
    let bound = 3.0 * 2.5e6 / n.sqrt();
    ensure!((mean - 15e6).abs() <= bound, "mean {mean} ns outside 15 ms ± {bound} ns");
    // link model replayed from the link's random stream: serialization,
    // Gaussian delay, FIFO clamp
    let mut rng = SimRng::stream(cfg.seed, R_S2);
    let mut last = 0;
    for (k, r) in records.iter().enumerate() {
        let d = rng.delay_ns(15 * NS_PER_MS, 2_500_000);
        let delivery = (r.tx_ts_ns + 224 * 8 + d).max(last);
        last = delivery;
        ensure!(r.rx_ts_ns == delivery, "probe {k}: rx {} vs oracle {delivery}", r.rx_ts_ns);
    }

    let mut counts = Vec::new();
    for ratio in [100u64, 10_000] {
        let o = Overrides {
            ratio: Some(ratio),
            count: Some(1_000_000),
            duration_ms: Some(100_100.0),
            trace: Some(TraceConfig::Mode("off".into())),
            ..Overrides::default()
        };
        let mut s = build(&load("setup1.json", &o));
        s.run();
        let sent: u64 = s.sim.generators().iter().map(|g| g.sent()).sum();
        ensure!(sent == 1_000_000, "sent {sent} packets");
        let probes = owd_records(&s).0.len() as u64;
        ensure!(probes == 1_000_000 / ratio, "ratio 1:{ratio}: {probes} probes");
        counts.push(probes);
    }
    Ok(format!(
        "zero-jitter OWD {expect} ns on all probes; jitter mean {:.4} ms (bound ±{:.4}); probes {:?}",
        mean / 1e6,
        bound / 1e6,
        counts
    ))
}

/// Interleaved WRR reference: reduce by the gcd, then in round r take every
/// path whose weight is at least r.
fn iwrr_oracle(weights: &[u32]) -> Vec<usize> {
    fn gcd(a: u32, b: u32) -> u32 {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    let g = weights.iter().fold(0, |acc, &w| gcd(acc, w));
    let w: Vec<u32> = weights.iter().map(|x| x / g).collect();
    let mut out = Vec::new();
    for r in 1..=*w.iter().max().unwrap() {
        for (i, &wi) in w.iter().enumerate() {
            if wi >= r {
                out.push(i);
            }
        }
    }
    out
}

fn wrr_proportionality() -> Verdict {
    let oracle = iwrr_oracle(&[50, 30]);
    let sids: [Ipv6Addr; 2] = ["fc00:b::a1".parse().unwrap(), "fc00:b::b1".parse().unwrap()];
    let wrr = Wrr::new(
        sids.iter()
            .zip([50, 30])
            .map(|(s, weight)| WrrPath {
                weight,
                srh: SegmentRoutingHeader::from_path(&[*s]),
            })
            .collect(),
    );
    ensure!(wrr.schedule() == oracle, "schedule {:?} vs oracle {oracle:?}", wrr.schedule());
    let prog = ProgramRef::new(wrr);
    let mut node = srv6sim::srv6::Node::new(NodeId(0), "A", vec!["fc00:a::1".parse().unwrap()]);
    node.attach_link(LinkId(0));
    node.fib_insert(
        FibEntry::new(
            Prefix::new(Ipv6Addr::UNSPECIFIED, 0),
            vec![Nexthop::new("fc00:b::1".parse().unwrap(), LinkId(0))],
            TableId::MAIN,
        )
        .unwrap(),
    );
    node.add_transit("fc00:2::/48".parse().unwrap(), srv6sim::srv6::TransitBehavior::Program(prog.clone()))
        .unwrap();
    let mut seq = Vec::new();
    for i in 0..8000u32 {
        let mut p = Packet::udp("fc00:1::1".parse().unwrap(), "fc00:2::1".parse().unwrap(), 40000, 9, i.to_be_bytes().to_vec());
        run_transit_program(&mut node, &prog, &mut p, u64::from(i));
        let path = sids.iter().position(|s| *s == p.dst()).ok_or("packet left on no path")?;
        seq.push(path);
    }
    let expected: Vec<usize> = oracle.iter().copied().cycle().take(8000).collect();
    ensure!(seq == expected, "per-packet sequence departs from the IWRR cycle");

    // same split end to end through the simulator
    let o = Overrides {
        count: Some(8_000),
        duration_ms: Some(10_500.0),
        trace: Some(TraceConfig::Mode("off".into())),
        ..Overrides::default()
    };
    let mut s = build(&load("setup2-hybrid.json", &o));
    s.run();
    let h = hybrid_metrics(&s).map_err(|e| e.to_string())?;
    ensure!(h.per_link == vec![5000, 3000], "simulated split {:?}", h.per_link);
    Ok(format!("split 5000:3000, cycle {oracle:?}"))
}

fn compensation_efficacy() -> Verdict {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for seed in 1..=10u64 {
        let mut m = Vec::new();
        for comp in [false, true] {
            let o = Overrides {
                seed: Some(seed),
                compensation: Some(comp),
                ..Overrides::default()
            };
            let mut s = build(&load("setup2-hybrid.json", &o));
            s.run();
            let h = hybrid_metrics(&s).map_err(|e| e.to_string())?;
            let reorder = h.reorder_fraction.ok_or("no reorder fraction")?;
            let goodput = h.goodput_bps.ok_or("no goodput estimate")?;
            m.push((reorder, goodput));
        }
        let ((r_off, g_off), (r_on, g_on)) = (m[0], m[1]);
        lines.push(format!(
            "seed {seed}: reorder {r_off:.4} -> {r_on:.4} ({:.2}x), goodput {:.2} -> {:.2} Mbit/s",
            r_on / r_off,
            g_off / 1e6,
            g_on / 1e6
        ));
        if r_on > 0.2 * r_off {
            failures.push(format!("seed {seed}: reorder(on) {r_on:.4} > 0.2 x {r_off:.4}"));
        }
        if g_on <= g_off {
            failures.push(format!("seed {seed}: goodput(on) {g_on:.0} <= goodput(off) {g_off:.0}"));
        }
    }
    for l in &lines {
        println!("    {l}");
    }
    let t = within(start, Duration::from_secs(60))?;
    ensure!(failures.is_empty(), "{}", failures.join("; "));
    Ok(format!("10 seeds, {:.2}s", t.as_secs_f64()))
}

fn oamp_traceroute() -> Verdict {
    let cfg = load("diamond.json", &Overrides::default());
    let b: Ipv6Addr = "fc00:11::1".parse().unwrap();
    let x: Ipv6Addr = "fc00:12::1".parse().unwrap();
    let y: Ipv6Addr = "fc00:13::1".parse().unwrap();
    let opts = TracerouteOptions::default();

    let mut s = build(&cfg);
    let g = traceroute(&mut s, "S", "T", true, &opts).map_err(|e| e.to_string())?;
    let hop = g.hop(b).ok_or("branch hop missing")?;
    ensure!(hop.method == HopMethod::Oamp, "branch answered by {:?}", hop.method);
    ensure!(hop.probes == 1, "branch took {} probes", hop.probes);
    let oamp_set = hop.nexthops.clone();
    ensure!(oamp_set == BTreeSet::from([x, y]), "OAMP set {oamp_set:?}");
    ensure!(g.reached, "target not reached with OAMP");

    let mut union = BTreeSet::new();
    for label in 0..32u32 {
        let mut s = build(&cfg);
        s.oamp_sids.remove(&b);
        let o = TracerouteOptions {
            flow_labels: vec![label],
            ..TracerouteOptions::default()
        };
        let g = traceroute(&mut s, "S", "T", true, &o).map_err(|e| e.to_string())?;
        let hop = g.hop(b).ok_or("branch hop missing without OAMP")?;
        ensure!(hop.method == HopMethod::Icmp, "label {label}: branch answered by {:?}", hop.method);
        ensure!(hop.nexthops.len() == 1, "label {label}: {} nexthops", hop.nexthops.len());
        union.extend(hop.nexthops.iter().copied());
    }
    ensure!(union == oamp_set, "ICMP union {union:?} vs OAMP {oamp_set:?}");
    Ok("OAMP: 2 nexthops in 1 probe; ICMP: 1 per flow key, union over 32 keys equal".into())
}

fn bench_ordering() -> Verdict {
    use BenchFunction::*;
    let mut summary = Vec::new();
    for run in 1..=3 {
        let results = run_bench(&BenchFunction::ALL, 1_000_000, 1);
        let pps = |f: BenchFunction| results.iter().find(|r| r.function == f).map_or(0.0, |r| r.pps);
        let chain = [Plain, EndNative, EndProgramNoop, TagIncrement];
        for w in chain.windows(2) {
            ensure!(
                pps(w[0]) >= pps(w[1]),
                "run {run}: {} {:.0} < {} {:.0}",
                w[0],
                pps(w[0]),
                w[1],
                pps(w[1])
            );
        }
        ensure!(
            pps(EndProgramNoop) >= pps(AddTlv),
            "run {run}: end_program_noop {:.0} < add_tlv {:.0}",
            pps(EndProgramNoop),
            pps(AddTlv)
        );
        summary.push(format!(
            "run {run}: {}",
            BenchFunction::ALL
                .iter()
                .map(|&f| format!("{f}={:.2}M", pps(f) / 1e6))
                .collect::<Vec<_>>()
                .join(" ")
        ));
    }
    for l in &summary {
        println!("    {l}");
    }
    Ok("ordering held in 3 runs".into())
}

fn trace_bytes(cfg: &ScenarioConfig) -> Vec<u8> {
    let mut s = build(cfg);
    s.run();
    let mut out = Vec::new();
    s.sim.write_trace(&mut out).expect("in-memory write");
    out
}

fn determinism() -> Verdict {
    let mut sizes = Vec::new();
    let mut r = common::rng(9);
    for name in ["setup1.json", "setup2-hybrid.json", "diamond.json", "chain.json"] {
        for seed in [None, Some(r.gen_range(0..u64::MAX))] {
            let o = Overrides {
                seed,
                ..Overrides::default()
            };
            let cfg = load(name, &o);
            let a = trace_bytes(&cfg);
            let b = trace_bytes(&cfg);
            ensure!(!a.is_empty(), "{name}: empty trace");
            ensure!(a == b, "{name} seed {:?}: traces differ", seed);
            sizes.push(a.len());
        }
    }
    Ok(format!("4 fixtures x 2 seeds, trace sizes {sizes:?} octets"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("codec suite", codec_suite),
        ("sandbox suite", sandbox_suite),
        ("noop equivalence", noop_equivalence),
        ("OWD reproduction", owd_reproduction),
        ("WRR proportionality", wrr_proportionality),
        ("compensation efficacy", compensation_efficacy),
        ("OAMP traceroute", oamp_traceroute),
        ("bench ordering", bench_ordering),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|s| *s == n.to_string() || name.contains(s.as_str())) {
            continue;
        }
        let start = Instant::now();
        let verdict = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("criterion {n} ({name}): PASS [{secs:.2}s] {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL [{secs:.2}s] {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}

//! Per-packet interleaved weighted round-robin over several SR paths.

use crate::packet::SegmentRoutingHeader;
use crate::program::{EncapMode, MapSpec, Program, ProgramContext, ProgramOutcome};

const STATE_MAP: &str = "wrr_state";
const MAX_PATHS: usize = 4;
// weights:4 each, cursor:4, counts:8 each
const STATE_LEN: usize = MAX_PATHS * 4 + 4 + MAX_PATHS * 8;

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Weights divided by their greatest common divisor.
pub fn reduce_weights(weights: &[u32]) -> Vec<u32> {
    let g = weights.iter().copied().fold(0, gcd).max(1);
    weights.iter().map(|w| w / g).collect()
}

/// One cycle of interleaved WRR: round r visits, in order, every path
/// whose weight is at least r.
pub fn iwrr_schedule(weights: &[u32]) -> Vec<usize> {
    let w = reduce_weights(weights);
    let rounds = w.iter().copied().max().unwrap_or(0);
    (1..=rounds)
        .flat_map(|r| w.iter().enumerate().filter(move |(_, &wi)| wi >= r).map(|(i, _)| i))
        .collect()
}

/// Scheduler state as kept in the program's map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrrState {
    pub weights: Vec<u32>,
    pub cursor: u32,
    pub counts: Vec<u64>,
}

impl WrrState {
    /// Reads the state a WRR program with `paths` paths left in `maps`.
    pub fn load(maps: &crate::program::MapStore, paths: usize) -> Option<Self> {
        let v = maps.get(STATE_MAP, &[0; 4]).ok()??;
        Self::from_bytes(v, paths)
    }

    fn to_bytes(&self) -> [u8; STATE_LEN] {
        let mut b = [0; STATE_LEN];
        for (i, w) in self.weights.iter().enumerate() {
            b[i * 4..i * 4 + 4].copy_from_slice(&w.to_be_bytes());
        }
        let c = MAX_PATHS * 4;
        b[c..c + 4].copy_from_slice(&self.cursor.to_be_bytes());
        for (i, n) in self.counts.iter().enumerate() {
            let o = c + 4 + i * 8;
            b[o..o + 8].copy_from_slice(&n.to_be_bytes());
        }
        b
    }

    fn from_bytes(b: &[u8], paths: usize) -> Option<Self> {
        if b.len() != STATE_LEN {
            return None;
        }
        let u32_at = |o: usize| u32::from_be_bytes(b[o..o + 4].try_into().unwrap_or_default());
        let c = MAX_PATHS * 4;
        Some(WrrState {
            weights: (0..paths).map(|i| u32_at(i * 4)).collect(),
            cursor: u32_at(c),
            counts: (0..paths)
                .map(|i| {
                    let o = c + 4 + i * 8;
                    u64::from_be_bytes(b[o..o + 8].try_into().unwrap_or_default())
                })
                .collect(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct WrrPath {
    pub weight: u32,
    pub srh: SegmentRoutingHeader,
}

/// Transit program spreading packets over `paths` by encapsulating each
/// one with the SRH of the scheduled path.
#[derive(Debug, Clone)]
pub struct Wrr {
    paths: Vec<WrrPath>,
    schedule: Vec<usize>,
    weights: Vec<u32>,
}

impl Wrr {
    pub fn new(paths: Vec<WrrPath>) -> Self {
        assert!(
            (1..=MAX_PATHS).contains(&paths.len()),
            "WRR needs between 1 and {MAX_PATHS} paths"
        );
        assert!(paths.iter().all(|p| p.weight > 0), "WRR weights must be positive");
        let raw: Vec<u32> = paths.iter().map(|p| p.weight).collect();
        Wrr {
            schedule: iwrr_schedule(&raw),
            weights: reduce_weights(&raw),
            paths,
        }
    }

    pub fn schedule(&self) -> &[usize] {
        &self.schedule
    }

    /// Current scheduler state on a node, if any packet was scheduled.
    pub fn state(&self, maps: &crate::program::MapStore) -> Option<WrrState> {
        WrrState::load(maps, self.paths.len())
    }
}

impl Program for Wrr {
    fn name(&self) -> &str {
        "wrr"
    }

    fn maps(&self) -> Vec<MapSpec> {
        vec![MapSpec::new(STATE_MAP, 4, STATE_LEN)]
    }

    fn run(&self, ctx: &mut ProgramContext<'_>) -> ProgramOutcome {
        let key = [0; 4];
        let mut state = match ctx.map_get(STATE_MAP, &key) {
            Ok(Some(v)) => match WrrState::from_bytes(&v, self.paths.len()) {
                Some(s) => s,
                None => return ProgramOutcome::Drop,
            },
            Ok(None) => WrrState {
                weights: self.weights.clone(),
                cursor: 0,
                counts: vec![0; self.paths.len()],
            },
            Err(_) => return ProgramOutcome::Drop,
        };
        let pos = state.cursor as usize % self.schedule.len();
        let path = self.schedule[pos];
        state.cursor = ((pos + 1) % self.schedule.len()) as u32;
        state.counts[path] += 1;
        if ctx.map_put(STATE_MAP, &key, &state.to_bytes()).is_err() {
            return ProgramOutcome::Drop;
        }
        match ctx.push_encap(EncapMode::Encaps, &self.paths[path].srh, None) {
            Ok(()) => ProgramOutcome::Ok,
            Err(_) => ProgramOutcome::Drop,
        }
    }
}

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::net::Ipv6Addr;
use std::str::FromStr;

use thiserror::Error;

use crate::ids::{Nexthop, TableId};
use crate::packet::{Packet, Transport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FibError {
    #[error("no route to {0}")]
    NoRoute(Ipv6Addr),
    #[error("FIB entry for {0} has no nexthops")]
    EmptyNexthops(Prefix),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid prefix {0:?}")]
pub struct PrefixParseError(pub String);

/// An IPv6 prefix. Host bits are always zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prefix {
    addr: Ipv6Addr,
    len: u8,
}

fn mask(len: u8) -> u128 {
    if len == 0 {
        0
    } else {
        u128::MAX << (128 - u32::from(len))
    }
}

impl Prefix {
    pub fn new(addr: Ipv6Addr, len: u8) -> Self {
        let len = len.min(128);
        Prefix {
            addr: Ipv6Addr::from(u128::from(addr) & mask(len)),
            len,
        }
    }

    pub fn host(addr: Ipv6Addr) -> Self {
        Prefix::new(addr, 128)
    }

    pub fn addr(&self) -> Ipv6Addr {
        self.addr
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn is_default(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, addr: Ipv6Addr) -> bool {
        u128::from(addr) & mask(self.len) == u128::from(self.addr)
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.len)
    }
}

impl FromStr for Prefix {
    type Err = PrefixParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || PrefixParseError(s.to_string());
        match s.split_once('/') {
            Some((a, l)) => {
                let addr = a.parse().map_err(|_| err())?;
                let len: u8 = l.parse().map_err(|_| err())?;
                if len > 128 {
                    return Err(err());
                }
                Ok(Prefix::new(addr, len))
            }
            None => Ok(Prefix::host(s.parse().map_err(|_| err())?)),
        }
    }
}

/// Longest-prefix-match table: one hash map per prefix length, probed from
/// the longest populated length down.
#[derive(Debug, Clone)]
pub struct PrefixTable<V> {
    by_len: BTreeMap<u8, HashMap<u128, V>>,
    count: usize,
}

impl<V> Default for PrefixTable<V> {
    fn default() -> Self {
        PrefixTable {
            by_len: BTreeMap::new(),
            count: 0,
        }
    }
}

impl<V> PrefixTable<V> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn insert(&mut self, prefix: Prefix, value: V) -> Option<V> {
        let old = self
            .by_len
            .entry(prefix.len)
            .or_default()
            .insert(u128::from(prefix.addr), value);
        if old.is_none() {
            self.count += 1;
        }
        old
    }

    pub fn remove(&mut self, prefix: &Prefix) -> Option<V> {
        let bucket = self.by_len.get_mut(&prefix.len)?;
        let old = bucket.remove(&u128::from(prefix.addr));
        if bucket.is_empty() {
            self.by_len.remove(&prefix.len);
        }
        if old.is_some() {
            self.count -= 1;
        }
        old
    }

    pub fn get(&self, prefix: &Prefix) -> Option<&V> {
        self.by_len.get(&prefix.len)?.get(&u128::from(prefix.addr))
    }

    pub fn lookup(&self, addr: Ipv6Addr) -> Option<(Prefix, &V)> {
        let bits = u128::from(addr);
        self.by_len.iter().rev().find_map(|(&len, bucket)| {
            let key = bits & mask(len);
            bucket.get(&key).map(|v| (Prefix::new(Ipv6Addr::from(key), len), v))
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (Prefix, &V)> {
        self.by_len.iter().flat_map(|(&len, bucket)| {
            bucket
                .iter()
                .map(move |(&k, v)| (Prefix::new(Ipv6Addr::from(k), len), v))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FibEntry {
    pub prefix: Prefix,
    pub nexthops: Vec<Nexthop>,
    pub table: TableId,
}

impl FibEntry {
    pub fn new(prefix: Prefix, nexthops: Vec<Nexthop>, table: TableId) -> Result<Self, FibError> {
        if nexthops.is_empty() {
            return Err(FibError::EmptyNexthops(prefix));
        }
        Ok(FibEntry {
            prefix,
            nexthops,
            table,
        })
    }
}

/// Fields hashed to pick among ECMP nexthops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlowKey {
    pub src: Ipv6Addr,
    pub dst: Ipv6Addr,
    pub flow_label: u32,
    pub src_port: u16,
    pub dst_port: u16,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

impl FlowKey {
    /// Key of the outer header, with ports from the innermost UDP layer.
    pub fn of(p: &Packet) -> Self {
        let ip = p.outer();
        let (src_port, dst_port) = match &p.transport {
            Transport::Udp(u) => (u.src_port, u.dst_port),
            Transport::Opaque { .. } => (0, 0),
        };
        FlowKey {
            src: ip.src,
            dst: ip.dst,
            flow_label: ip.flow_label,
            src_port,
            dst_port,
        }
    }

    /// 64-bit FNV-1a over src, dst, flow label, src port, dst port (network
    /// byte order).
    pub fn hash(&self) -> u64 {
        let mut h = FNV_OFFSET;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(FNV_PRIME);
            }
        };
        feed(&self.src.octets());
        feed(&self.dst.octets());
        feed(&self.flow_label.to_be_bytes());
        feed(&self.src_port.to_be_bytes());
        feed(&self.dst_port.to_be_bytes());
        h
    }
}

/// Per-node forwarding tables. A table that was never populated behaves as
/// an empty one.
#[derive(Debug, Clone, Default)]
pub struct Fib {
    tables: HashMap<TableId, PrefixTable<Vec<Nexthop>>>,
}

impl Fib {
    pub fn new() -> Self {
        Self::default()
    }

    /// Installs an entry, replacing any entry for the same prefix and table.
    pub fn insert(&mut self, entry: FibEntry) {
        self.tables
            .entry(entry.table)
            .or_default()
            .insert(entry.prefix, entry.nexthops);
    }

    pub fn remove(&mut self, prefix: &Prefix, table: TableId) -> Option<Vec<Nexthop>> {
        self.tables.get_mut(&table)?.remove(prefix)
    }

    pub fn table(&self, table: TableId) -> Option<&PrefixTable<Vec<Nexthop>>> {
        self.tables.get(&table)
    }

    /// Longest-prefix match, then `hash(flow) mod n` among the nexthops.
    pub fn lookup(&self, addr: Ipv6Addr, table: TableId, flow: &FlowKey) -> Result<Nexthop, FibError> {
        let hops = self.ecmp_list(addr, table)?;
        let idx = if hops.len() == 1 {
            0
        } else {
            (flow.hash() % hops.len() as u64) as usize
        };
        Ok(hops[idx])
    }

    /// Every nexthop of the longest matching prefix, in insertion order.
    pub fn ecmp_list(&self, addr: Ipv6Addr, table: TableId) -> Result<&[Nexthop], FibError> {
        self.tables
            .get(&table)
            .and_then(|t| t.lookup(addr))
            .map(|(_, hops)| hops.as_slice())
            .ok_or(FibError::NoRoute(addr))
    }
}

//! Userspace SRv6 dataplane with pluggable network functions.
//!
//! The crate is organised bottom-up:
//!
//! * [`packet`] models IPv6 packets carrying Segment Routing Headers, with a
//!   byte-exact codec and SRH validator.
//! * [`srv6`] is the per-node dataplane: longest-prefix-match FIB with ECMP,
//!   local SID table, transit routes and the native endpoint behaviors.
//! * [`program`] is the sandbox for pluggable programs bound to an endpoint
//!   SID or a transit route. Programs only mutate packets through helpers.
//! * [`netsim`] is a deterministic discrete-event simulator.
//! * [`usecases`] holds the delay-monitoring, link-aggregation and ECMP
//!   discovery functions together with their daemons.
//! * [`scenario`] and [`cli`] load JSON scenarios and drive experiments.

pub mod cli;
pub mod ids;
pub mod netsim;
pub mod packet;
pub mod program;
pub mod scenario;
pub mod srv6;
pub mod usecases;

pub use ids::{LinkId, Nexthop, NodeId, TableId};
pub use packet::{Packet, SegmentRoutingHeader};

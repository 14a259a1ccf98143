use crate::ids::NodeId;

use super::rng::SimRng;

/// Static parameters of a bidirectional link. Delays are per direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkParams {
    pub bandwidth_bps: u64,
    pub delay_mean_ns: u64,
    pub delay_stddev_ns: u64,
}

impl LinkParams {
    /// One-way parameters from a round-trip mean and standard deviation.
    pub fn from_rtt(bandwidth_bps: u64, rtt_mean_ns: u64, rtt_stddev_ns: u64) -> Self {
        LinkParams {
            bandwidth_bps,
            delay_mean_ns: rtt_mean_ns / 2,
            delay_stddev_ns: rtt_stddev_ns / 2,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct DirectionState {
    busy_until: u64,
    last_delivery: u64,
    qdisc_extra_delay_ns: u64,
}

/// A point-to-point link with an unbounded FIFO in each direction.
#[derive(Debug, Clone)]
pub struct Link {
    pub endpoints: (NodeId, NodeId),
    pub params: LinkParams,
    dirs: [DirectionState; 2],
    rng: SimRng,
}

impl Link {
    pub fn new(a: NodeId, b: NodeId, params: LinkParams, rng: SimRng) -> Self {
        assert!(params.bandwidth_bps > 0, "link bandwidth must be positive");
        Link {
            endpoints: (a, b),
            params,
            dirs: Default::default(),
            rng,
        }
    }

    fn dir(&self, from: NodeId) -> Option<usize> {
        if from == self.endpoints.0 {
            Some(0)
        } else if from == self.endpoints.1 {
            Some(1)
        } else {
            None
        }
    }

    pub fn peer(&self, of: NodeId) -> Option<NodeId> {
        match self.dir(of)? {
            0 => Some(self.endpoints.1),
            _ => Some(self.endpoints.0),
        }
    }

    pub fn serialization_ns(&self, size: usize) -> u64 {
        let bits = size as u128 * 8 * 1_000_000_000;
        bits.div_ceil(self.params.bandwidth_bps as u128) as u64
    }

    pub fn qdisc_delay(&self, from: NodeId) -> Option<u64> {
        Some(self.dirs[self.dir(from)?].qdisc_extra_delay_ns)
    }

    pub(crate) fn set_qdisc_delay(&mut self, from: NodeId, delay_ns: u64) -> bool {
        match self.dir(from) {
            Some(d) => {
                self.dirs[d].qdisc_extra_delay_ns = delay_ns;
                true
            }
            None => false,
        }
    }

    /// Queues `size` octets sent by `from` at `now`; returns the receiver
    /// and the delivery time. Deliveries in one direction never overtake
    /// each other.
    pub fn transmit(&mut self, from: NodeId, size: usize, now: u64) -> Option<(NodeId, u64)> {
        let d = self.dir(from)?;
        let ser = self.serialization_ns(size);
        let jitter = self.rng.delay_ns(self.params.delay_mean_ns, self.params.delay_stddev_ns);
        let state = &mut self.dirs[d];
        let start = now.max(state.busy_until);
        state.busy_until = start + ser;
        let delivery = (start + ser + jitter + state.qdisc_extra_delay_ns).max(state.last_delivery);
        state.last_delivery = delivery;
        Some((self.peer(from)?, delivery))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(mean: u64) -> Link {
        Link::new(
            NodeId(0),
            NodeId(1),
            LinkParams {
                bandwidth_bps: 50_000_000,
                delay_mean_ns: mean,
                delay_stddev_ns: 0,
            },
            SimRng::stream(0, 0),
        )
    }

    #[test]
    fn serialization_of_1250_octets_at_50mbps() {
        let mut l = link(0);
        assert_eq!(l.transmit(NodeId(0), 1250, 0), Some((NodeId(1), 200_000)));
    }

    #[test]
    fn back_to_back_packets_queue() {
        let mut l = link(0);
        l.transmit(NodeId(0), 1250, 0);
        assert_eq!(l.transmit(NodeId(0), 1250, 0).unwrap().1, 400_000);
        // the other direction is independent
        assert_eq!(l.transmit(NodeId(1), 1250, 0).unwrap(), (NodeId(0), 200_000));
    }

    #[test]
    fn qdisc_delay_is_additive() {
        let mut l = link(15_000_000);
        assert!(l.set_qdisc_delay(NodeId(0), 12_500_000));
        assert_eq!(l.transmit(NodeId(0), 1250, 0).unwrap().1, 200_000 + 15_000_000 + 12_500_000);
        l.set_qdisc_delay(NodeId(0), 0);
        assert_eq!(l.transmit(NodeId(0), 1250, 1_000_000_000).unwrap().1, 1_000_000_000 + 200_000 + 15_000_000);
        assert!(!l.set_qdisc_delay(NodeId(7), 1));
    }

    #[test]
    fn rtt_conversion() {
        let p = LinkParams::from_rtt(1, 30_000_000, 5_000_000);
        assert_eq!((p.delay_mean_ns, p.delay_stddev_ns), (15_000_000, 2_500_000));
    }
}

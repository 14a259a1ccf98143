use std::collections::VecDeque;
use std::sync::{Arc, Mutex, MutexGuard};

use crate::ids::NodeId;

pub const MAX_EVENT_PAYLOAD: usize = 256;
pub const EVENT_QUEUE_CAPACITY: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmittedEvent {
    pub node: NodeId,
    pub timestamp_ns: u64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Default)]
struct Inner {
    events: VecDeque<EmittedEvent>,
    emitted: u64,
    dropped: u64,
}

/// Bounded per-node event queue. Clones share the same queue, so a
/// collector on another thread can drain while the simulator pushes.
/// When full, the oldest unread event is discarded and counted.
#[derive(Debug, Clone)]
pub struct EventQueue {
    inner: Arc<Mutex<Inner>>,
    capacity: usize,
}

impl Default for EventQueue {
    fn default() -> Self {
        Self::new()
    }
}

impl EventQueue {
    pub fn new() -> Self {
        Self::with_capacity(EVENT_QUEUE_CAPACITY)
    }

    pub fn with_capacity(capacity: usize) -> Self {
        EventQueue {
            inner: Arc::new(Mutex::new(Inner::default())),
            capacity: capacity.max(1),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn push(&self, event: EmittedEvent) {
        let mut q = self.lock();
        if q.events.len() == self.capacity {
            q.events.pop_front();
            q.dropped += 1;
        }
        q.events.push_back(event);
        q.emitted += 1;
    }

    pub fn drain(&self) -> Vec<EmittedEvent> {
        self.lock().events.drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.lock().events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn emitted(&self) -> u64 {
        self.lock().emitted
    }

    pub fn dropped(&self) -> u64 {
        self.lock().dropped
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(i: u64) -> EmittedEvent {
        EmittedEvent {
            node: NodeId(0),
            timestamp_ns: i,
            payload: vec![],
        }
    }

    #[test]
    fn overflow_drops_oldest() {
        let q = EventQueue::new();
        for i in 0..=EVENT_QUEUE_CAPACITY as u64 {
            q.push(ev(i));
        }
        assert_eq!(q.dropped(), 1);
        let all = q.drain();
        assert_eq!(all.len(), EVENT_QUEUE_CAPACITY);
        assert_eq!(all[0].timestamp_ns, 1);
        assert!(q.is_empty());
    }

    #[test]
    fn drain_from_another_thread() {
        let q = EventQueue::new();
        let consumer = q.clone();
        let h = std::thread::spawn(move || {
            let mut got = 0;
            while got < 100 {
                got += consumer.drain().len();
                std::thread::yield_now();
            }
            got
        });
        for i in 0..100 {
            q.push(ev(i));
        }
        assert_eq!(h.join().unwrap(), 100);
    }
}

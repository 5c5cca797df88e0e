//! Priority queue of simulated events.
//!
//! Events are totally ordered by `(time, slot, kind, insertion order)`.
//! `slot` is the worker index for worker events; shared events (collective
//! completions, parameter-server actions) use a slot past the last worker.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

pub trait EventKey {
    fn slot(&self) -> usize;
    fn kind(&self) -> u8;
}

struct Entry<E> {
    time: f64,
    slot: usize,
    kind: u8,
    seq: u64,
    event: E,
}

impl<E> Entry<E> {
    fn key(&self) -> (f64, usize, u8, u64) {
        (self.time, self.slot, self.kind, self.seq)
    }
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    }
}

pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<Entry<E>>>,
    seq: u64,
}

impl<E: EventKey> EventQueue<E> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            seq: 0,
        }
    }

    pub fn push(&mut self, time: f64, event: E) {
        debug_assert!(time.is_finite(), "event time must be finite");
        self.seq += 1;
        self.heap.push(Reverse(Entry {
            time,
            slot: event.slot(),
            kind: event.kind(),
            seq: self.seq,
            event,
        }));
    }

    pub fn pop(&mut self) -> Option<(f64, E)> {
        self.heap.pop().map(|Reverse(e)| (e.time, e.event))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

impl<E: EventKey> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq)]
    struct Ev(usize, u8, &'static str);

    impl EventKey for Ev {
        fn slot(&self) -> usize {
            self.0
        }
        fn kind(&self) -> u8 {
            self.1
        }
    }

    #[test]
    fn total_order() {
        let mut q = EventQueue::new();
        q.push(2.0, Ev(0, 0, "late"));
        q.push(1.0, Ev(3, 0, "w3"));
        q.push(1.0, Ev(1, 1, "w1 kind1"));
        q.push(1.0, Ev(1, 0, "w1 kind0"));
        q.push(1.0, Ev(1, 0, "w1 kind0 again"));
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).map(|(_, e)| e.2).collect();
        assert_eq!(
            order,
            ["w1 kind0", "w1 kind0 again", "w1 kind1", "w3", "late"]
        );
    }
}

//! Deterministic discrete-event engine.
//!
//! [`EventQueue`] orders events by `(fire_at, seq)` and supports
//! cancellation; [`Simulation`] wires the queue to the switch agents, the
//! controller and the adversary and records a [`Trace`].

mod trace;
mod world;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SimTime;

pub use trace::{ControlDirection, FrameDropReason, RejectReason, Trace, TraceKind, TraceRecord};
pub use world::{Simulation, SimCounters};

/// Cancellation handle returned by [`EventQueue::schedule`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn from_raw(seq: u64) -> Self {
        EventHandle(seq)
    }

    pub fn seq(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("event scheduled at {at} but the clock is already at {now}")]
    ScheduledInPast { at: SimTime, now: SimTime },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

/// Time-ordered queue. Same-time events fire in insertion order.
#[derive(Debug)]
pub struct EventQueue<A> {
    heap: BinaryHeap<Reverse<(SimTime, u64)>>,
    pending: HashMap<u64, A>,
    now: SimTime,
    next_seq: u64,
}

impl<A> Default for EventQueue<A> {
    fn default() -> Self {
        EventQueue { heap: BinaryHeap::new(), pending: HashMap::new(), now: SimTime::ZERO, next_seq: 0 }
    }
}

impl<A> EventQueue<A> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn schedule(&mut self, at: SimTime, action: A) -> Result<EventHandle, SimError> {
        if at < self.now {
            return Err(SimError::ScheduledInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse((at, seq)));
        self.pending.insert(seq, action);
        Ok(EventHandle(seq))
    }

    /// Cancels a pending event. Returns the action if it had not fired yet.
    pub fn cancel(&mut self, handle: EventHandle) -> Option<A> {
        self.pending.remove(&handle.0)
    }

    /// Time of the next live event.
    pub fn peek_time(&mut self) -> Option<SimTime> {
        while let Some(Reverse((t, seq))) = self.heap.peek().copied() {
            if self.pending.contains_key(&seq) {
                return Some(t);
            }
            self.heap.pop();
        }
        None
    }

    /// Removes and returns the next event if it fires no later than
    /// `t_end`, advancing the clock to its time.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<(SimTime, EventHandle, A)> {
        let t = self.peek_time()?;
        if t > t_end {
            return None;
        }
        let Reverse((t, seq)) = self.heap.pop().expect("peeked");
        let action = self.pending.remove(&seq).expect("live event");
        self.now = t;
        Some((t, EventHandle(seq), action))
    }

    /// Moves the clock forward to `t` without firing anything.
    pub(crate) fn advance_to(&mut self, t: SimTime) {
        self.now = self.now.max(t);
    }

    /// Fires every event with `fire_at <= t_end` through `handler` and
    /// returns the `(time, handle)` sequence that fired. The clock ends at
    /// `t_end` unless no event was pending past it.
    pub fn run_until(
        &mut self,
        t_end: SimTime,
        mut handler: impl FnMut(&mut Self, SimTime, A),
    ) -> Vec<(SimTime, EventHandle)> {
        let mut fired = Vec::new();
        while let Some((t, h, a)) = self.pop_until(t_end) {
            fired.push((t, h));
            handler(self, t, a);
        }
        self.now = self.now.max(t_end);
        fired
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SimDuration;

    fn ms(v: u64) -> SimTime {
        SimTime::ZERO + SimDuration::from_millis(v)
    }

    #[test]
    fn fires_at_scheduled_time() {
        let mut q = EventQueue::new();
        q.schedule(ms(1), "a").unwrap();
        let fired = q.run_until(ms(10), |_, t, a| assert_eq!((t, a), (ms(1), "a")));
        assert_eq!(fired.len(), 1);
    }

    #[test]
    fn ties_fire_in_insertion_order() {
        let mut q = EventQueue::new();
        for i in 0..5 {
            q.schedule(ms(3), i).unwrap();
        }
        let mut seen = Vec::new();
        q.run_until(ms(3), |_, _, a| seen.push(a));
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn cancelled_event_never_fires() {
        let mut q = EventQueue::new();
        let h = q.schedule(ms(2), 1).unwrap();
        q.schedule(ms(3), 2).unwrap();
        assert_eq!(q.cancel(h), Some(1));
        assert_eq!(q.cancel(h), None);
        let mut seen = Vec::new();
        q.run_until(ms(5), |_, _, a| seen.push(a));
        assert_eq!(seen, vec![2]);
    }

    #[test]
    fn boundary_and_empty() {
        let mut q: EventQueue<u8> = EventQueue::new();
        assert!(q.run_until(ms(4), |_, _, _| {}).is_empty());
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_nanos(5), 1).unwrap();
        assert!(q.run_until(SimTime::from_nanos(4), |_, _, _| {}).is_empty());
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn past_scheduling_is_rejected() {
        let mut q = EventQueue::new();
        q.schedule(ms(5), 0).unwrap();
        q.run_until(ms(5), |_, _, _| {});
        assert_eq!(q.schedule(ms(4), 1), Err(SimError::ScheduledInPast { at: ms(4), now: ms(5) }));
    }

    #[test]
    fn zero_delay_runs_after_already_queued_same_tick() {
        let mut q = EventQueue::new();
        q.schedule(ms(1), "first").unwrap();
        q.schedule(ms(1), "second").unwrap();
        let mut seen = Vec::new();
        q.run_until(ms(1), |q, t, a| {
            seen.push(a);
            if a == "first" {
                q.schedule(t, "spawned").unwrap();
            }
        });
        assert_eq!(seen, vec!["first", "second", "spawned"]);
    }
}

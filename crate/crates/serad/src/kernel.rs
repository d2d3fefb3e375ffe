//! Deterministic discrete-event kernel.
//!
//! Events are ordered by `(fire_at, seq)`: simultaneous events run in the
//! order they were scheduled. The kernel owns no randomness.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::Sub;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulation timestamp in integer picoseconds.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Time(pub u64);

impl Time {
    pub const ZERO: Time = Time(0);
    pub const MAX: Time = Time(u64::MAX);

    pub fn ps(self) -> u64 {
        self.0
    }

    pub fn checked_add(self, d: u64) -> Result<Time, KernelError> {
        self.0
            .checked_add(d)
            .map(Time)
            .ok_or(KernelError::TimeOverflow {
                base: self,
                delta: d,
            })
    }

    /// Adds with overflow checking; panics on overflow instead of wrapping.
    pub fn after(self, d: u64) -> Time {
        match self.checked_add(d) {
            Ok(t) => t,
            Err(e) => panic!("{e}"),
        }
    }

    pub fn saturating_sub(self, other: Time) -> u64 {
        self.0.saturating_sub(other.0)
    }
}

impl Sub for Time {
    type Output = u64;
    fn sub(self, rhs: Time) -> u64 {
        self.0.checked_sub(rhs.0).expect("negative time difference")
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ps", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("cannot schedule at {at} when now is {now}")]
    SchedulingInPast { at: Time, now: Time },
    #[error("time overflow: {base} + {delta}ps")]
    TimeOverflow { base: Time, delta: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventId(pub u64);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event<A> {
    pub fire_at: Time,
    pub target: u32,
    pub action: A,
    pub seq: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    pub events_processed: u64,
    pub final_time: Time,
    pub deadlocked: bool,
}

/// What an event handler reports back to [`Kernel::run`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Step {
    /// The event completed observable work (e.g. a token reached the sink).
    pub progress: bool,
    /// The simulation reached its goal; stop without flagging deadlock.
    pub finished: bool,
}

pub struct Kernel<A> {
    now: Time,
    heap: BinaryHeap<Reverse<(Time, u64)>>,
    slots: Vec<Option<(u32, A)>>,
    processed: u64,
}

impl<A> Default for Kernel<A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<A> Kernel<A> {
    pub fn new() -> Self {
        Kernel {
            now: Time::ZERO,
            heap: BinaryHeap::new(),
            slots: Vec::new(),
            processed: 0,
        }
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn events_processed(&self) -> u64 {
        self.processed
    }

    pub fn is_empty(&self) -> bool {
        self.peek_time().is_none()
    }

    pub fn schedule(&mut self, target: u32, action: A, at: Time) -> Result<EventId, KernelError> {
        if at < self.now {
            return Err(KernelError::SchedulingInPast { at, now: self.now });
        }
        let seq = self.slots.len() as u64;
        self.slots.push(Some((target, action)));
        self.heap.push(Reverse((at, seq)));
        Ok(EventId(seq))
    }

    pub fn schedule_after(
        &mut self,
        target: u32,
        action: A,
        delay: u64,
    ) -> Result<EventId, KernelError> {
        let at = self.now.checked_add(delay)?;
        self.schedule(target, action, at)
    }

    /// Removes a pending event. Returns false if it already fired, was
    /// already cancelled, or never existed.
    pub fn cancel(&mut self, id: EventId) -> bool {
        match self.slots.get_mut(id.0 as usize) {
            Some(slot) if slot.is_some() => {
                *slot = None;
                true
            }
            _ => false,
        }
    }

    pub fn is_pending(&self, id: EventId) -> bool {
        matches!(self.slots.get(id.0 as usize), Some(Some(_)))
    }

    fn peek_time(&self) -> Option<Time> {
        self.heap.peek().map(|Reverse((t, _))| *t)
    }

    fn discard_cancelled(&mut self) {
        while let Some(Reverse((_, seq))) = self.heap.peek() {
            if self.slots[*seq as usize].is_some() {
                break;
            }
            self.heap.pop();
        }
    }

    /// Pops the next live event and advances `now` to its timestamp.
    pub fn pop(&mut self) -> Option<Event<A>> {
        self.discard_cancelled();
        let Reverse((t, seq)) = self.heap.pop()?;
        let (target, action) = self.slots[seq as usize].take().expect("live slot");
        debug_assert!(t >= self.now);
        self.now = t;
        self.processed += 1;
        Some(Event {
            fire_at: t,
            target,
            action,
            seq,
        })
    }

    /// Processes events in `(fire_at, seq)` order until the queue empties,
    /// `now` would pass `until`, the handler reports completion, or no
    /// progress was reported for `watchdog` picoseconds.
    pub fn run<F>(&mut self, until: Time, watchdog: Time, mut handler: F) -> SimStats
    where
        F: FnMut(&mut Kernel<A>, Event<A>) -> Step,
    {
        let start = self.processed;
        let mut last_progress = self.now;
        let deadlocked = loop {
            self.discard_cancelled();
            let Some(next) = self.peek_time() else {
                break true;
            };
            // a stall is a deadlock even if the only pending event lies past `until`
            let limit = Time(last_progress.0.saturating_add(watchdog.0));
            if next > limit && limit <= until {
                self.now = limit.max(self.now);
                break true;
            }
            if next > until {
                break false;
            }
            let ev = self.pop().expect("peeked event");
            let step = handler(self, ev);
            if step.progress {
                last_progress = self.now;
            }
            if step.finished {
                break false;
            }
        };
        SimStats {
            events_processed: self.processed - start,
            final_time: self.now,
            deadlocked,
        }
    }
}

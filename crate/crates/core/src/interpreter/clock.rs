//! Simulated clock and timer queue.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::home::SimTime;
use crate::language::{Block, ProgramId};

pub const MINUTE_MS: u64 = 60_000;
pub const DAY_MS: u64 = 24 * 60 * MINUTE_MS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ClockMode {
    /// Time moves only on explicit advance.
    Simulated,
    /// Time follows wall time multiplied by `factor`.
    Accelerated { factor: u32 },
    Realtime,
}

impl ClockMode {
    /// Simulated milliseconds per wall millisecond, if time follows the wall.
    pub fn factor(self) -> Option<u32> {
        match self {
            ClockMode::Simulated => None,
            ClockMode::Accelerated { factor } => Some(factor),
            ClockMode::Realtime => Some(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "purpose", rename_all = "snake_case")]
pub enum TimerPurpose {
    /// Continue a block after a wait.
    Resume { program: ProgramId, epoch: u64, block: Block, index: usize },
    /// Time-of-day strike for armed clock triggers.
    ClockTick { minutes: u16 },
    ScenarioStep { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Timer {
    pub due: SimTime,
    pub seq: u64,
    #[serde(flatten)]
    pub purpose: TimerPurpose,
}

/// `now` never decreases; timers fire by due time, then by scheduling order.
#[derive(Debug, Clone)]
pub struct SimClock {
    now: SimTime,
    mode: ClockMode,
    timers: BTreeMap<(SimTime, u64), TimerPurpose>,
    next_seq: u64,
}

impl SimClock {
    pub fn new(now: SimTime) -> Self {
        Self { now, mode: ClockMode::Simulated, timers: BTreeMap::new(), next_seq: 0 }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: ClockMode) {
        self.mode = mode;
    }

    pub(crate) fn set_now(&mut self, t: SimTime) {
        debug_assert!(t >= self.now);
        self.now = self.now.max(t);
    }

    pub fn schedule(&mut self, due: SimTime, purpose: TimerPurpose) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.timers.insert((due.max(self.now), seq), purpose);
        seq
    }

    pub fn next_due(&self) -> Option<SimTime> {
        self.timers.keys().next().map(|(due, _)| *due)
    }

    /// Removes and returns the first timer due at or before `until`.
    pub fn pop_due(&mut self, until: SimTime) -> Option<Timer> {
        let (&(due, seq), _) = self.timers.iter().next()?;
        if due > until {
            return None;
        }
        let purpose = self.timers.remove(&(due, seq)).expect("present");
        Some(Timer { due, seq, purpose })
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&TimerPurpose) -> bool) {
        self.timers.retain(|_, p| keep(p));
    }

    pub fn timers(&self) -> impl Iterator<Item = Timer> + '_ {
        self.timers.iter().map(|(&(due, seq), p)| Timer { due, seq, purpose: p.clone() })
    }
}

/// First time after `now` whose time of day is `minutes`.
pub fn next_strike(now: SimTime, minutes: u16) -> SimTime {
    let t = now - now % DAY_MS + minutes as u64 * MINUTE_MS;
    if t > now {
        t
    } else {
        t + DAY_MS
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timers_fire_in_due_then_fifo_order() {
        let mut c = SimClock::new(0);
        c.schedule(50, TimerPurpose::ScenarioStep { index: 0 });
        c.schedule(10, TimerPurpose::ScenarioStep { index: 1 });
        c.schedule(50, TimerPurpose::ScenarioStep { index: 2 });
        assert!(c.pop_due(9).is_none());
        let order: Vec<_> = std::iter::from_fn(|| c.pop_due(100))
            .map(|t| match t.purpose {
                TimerPurpose::ScenarioStep { index } => index,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(order, [1, 0, 2]);
    }

    #[test]
    fn strikes_are_strictly_in_the_future() {
        assert_eq!(next_strike(0, 0), DAY_MS);
        assert_eq!(next_strike(0, 1), MINUTE_MS);
        assert_eq!(next_strike(DAY_MS + 5 * MINUTE_MS, 5), 2 * DAY_MS + 5 * MINUTE_MS);
        assert_eq!(next_strike(DAY_MS + 4 * MINUTE_MS, 5), DAY_MS + 5 * MINUTE_MS);
    }
}

use serde::{Deserialize, Serialize};

use super::{BusError, Result, Topic};

/// Payload of the `clock` topic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockTick {
    pub timestamp_ns: i64,
}

/// Logical session time. Only ever moves forward, and only when told to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionClock {
    now_ns: i64,
}

impl SessionClock {
    pub fn new(start_ns: i64) -> Self {
        Self { now_ns: start_ns }
    }

    pub fn now(&self) -> i64 {
        self.now_ns
    }

    pub fn advance_to(&mut self, t: i64) -> Result<ClockTick> {
        if t < self.now_ns {
            return Err(BusError::TimestampRegression { topic: Topic::Clock, last: self.now_ns, got: t });
        }
        self.now_ns = t;
        Ok(ClockTick { timestamp_ns: t })
    }

    pub fn advance_by(&mut self, dt_ns: i64) -> Result<ClockTick> {
        self.advance_to(self.now_ns + dt_ns)
    }
}

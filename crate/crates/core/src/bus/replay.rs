use std::time::{Duration, Instant};

use super::{Bag, Bus, ClockTick, Result, SessionClock, Topic};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReplaySpeed {
    AsFastAsPossible,
    /// Wall time runs at `1/x` of logical time between records.
    Multiplier(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayStats {
    pub records: usize,
    pub final_clock_ns: i64,
    pub wall: Duration,
}

/// Re-publishes every record of `bag` on `bus` in bag order, pacing by
/// `speed`. Clock records drive `clock`; the returned stats carry its final
/// value. The bag is fully parsed before this is called, so a corrupt file
/// never delivers a partial stream.
pub fn replay(bag: &Bag, bus: &Bus, clock: &mut SessionClock, speed: ReplaySpeed) -> Result<ReplayStats> {
    let start = Instant::now();
    let t0 = bag.records.first().map_or(0, |r| r.timestamp_ns);
    for r in &bag.records {
        if let ReplaySpeed::Multiplier(x) = speed {
            let due = Duration::from_secs_f64(((r.timestamp_ns - t0) as f64 / 1e9 / x).max(0.0));
            if let Some(wait) = due.checked_sub(start.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        if r.topic == Topic::Clock {
            let tick: ClockTick = r.decode()?;
            clock.advance_to(tick.timestamp_ns)?;
        }
        bus.publish(r.topic, r.timestamp_ns, r.payload.clone())?;
    }
    Ok(ReplayStats { records: bag.records.len(), final_clock_ns: clock.now(), wall: start.elapsed() })
}

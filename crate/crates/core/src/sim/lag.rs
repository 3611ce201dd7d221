use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use super::{quantize_up, sub_seed, Result, SimError};
use crate::task::{Action, ActionAck};

const STREAM_LAG: u64 = 2;

/// Frontend-to-backend delivery model. With probability `p_late` an action
/// is held back until some later action has been delivered, and then
/// arrives `release_after_s` after it; a held action never waits longer
/// than `max_hold_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagConfig {
    pub p_late: f64,
    pub release_after_s: f64,
    pub max_hold_s: f64,
}

impl LagConfig {
    pub fn none() -> Self {
        Self { p_late: 0.0, release_after_s: 0.3, max_hold_s: 30.0 }
    }

    pub fn late(p_late: f64) -> Self {
        Self { p_late, ..Self::none() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_late) || !(self.release_after_s > 0.0) || !(self.max_hold_s > 0.0) {
            return Err(SimError::Config("lag: p_late in [0, 1], delays positive".into()));
        }
        Ok(())
    }
}

impl Default for LagConfig {
    fn default() -> Self {
        Self::none()
    }
}

struct Queued {
    due_ns: i64,
    action: Action,
    released: bool,
}

/// Delivers at most one action per tick, in due order.
pub struct LagBridge {
    cfg: LagConfig,
    seed: u64,
    tick_ns: i64,
    submitted: u64,
    held: Vec<Action>,
    queue: VecDeque<Queued>,
}

impl LagBridge {
    pub fn new(cfg: LagConfig, seed: u64, tick_ns: i64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, seed, tick_ns, submitted: 0, held: Vec::new(), queue: VecDeque::new() })
    }

    fn after(&self, t: i64, secs: f64) -> i64 {
        t + quantize_up((secs * 1e9) as i64, self.tick_ns)
    }

    pub fn submit(&mut self, action: Action, t: i64) {
        let j = self.submitted;
        self.submitted += 1;
        let late = self.cfg.p_late > 0.0 && ChaCha8Rng::seed_from_u64(sub_seed(self.seed, STREAM_LAG, j)).random::<f64>() < self.cfg.p_late;
        if late {
            self.held.push(action);
        } else {
            self.queue.push_back(Queued { due_ns: t, action, released: false });
        }
    }

    pub fn pending(&self) -> usize {
        self.held.len() + self.queue.len()
    }

    /// The action delivered at tick `t` with its acknowledgement, if any.
    pub fn deliver(&mut self, t: i64) -> Option<(Action, ActionAck)> {
        let max_hold = (self.cfg.max_hold_s * 1e9) as i64;
        let (expired, still): (Vec<Action>, Vec<Action>) = self.held.drain(..).partition(|a| a.timestamp_ns + max_hold <= t);
        self.held = still;
        for action in expired {
            self.queue.push_back(Queued { due_ns: t, action, released: true });
        }
        let pos = self.queue.iter().enumerate().filter(|(_, q)| q.due_ns <= t).min_by_key(|(_, q)| q.due_ns).map(|(i, _)| i)?;
        let q = self.queue.remove(pos).expect("index from enumerate");
        if !q.released && !self.held.is_empty() {
            let due = self.after(t, self.cfg.release_after_s);
            for action in std::mem::take(&mut self.held) {
                self.queue.push_back(Queued { due_ns: due, action, released: true });
            }
        }
        let ack = ActionAck { control_id: q.action.control_id.clone(), value: q.action.value.clone(), event_ns: q.action.timestamp_ns, delivered_ns: t };
        Some((q.action, ack))
    }
}

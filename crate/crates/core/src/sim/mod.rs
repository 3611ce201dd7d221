//! Closed-loop session simulator.
//!
//! A scripted workload drives a synthetic fNIRS stream through the real
//! pipeline and classifier; a simulated pilot works the checklist through
//! a lagged action bridge; the task engine and guidance policy react. Every
//! message goes over the bus and is recorded, so a session's bag can be
//! replayed through the same downstream code.

mod agent;
mod downstream;
mod generator;
mod lag;
mod latin;
mod metrics;
mod replay;
mod script;
mod session;
mod stats;
mod study;
mod training;

pub use agent::{AgentConfig, Expertise, PilotAgent};
pub use downstream::{Downstream, Output};
pub use generator::{facet_of_channel, generate_fnirs, FnirsGenerator, GeneratorConfig};
pub use lag::{LagBridge, LagConfig};
pub use latin::{cyclic_latin_square, is_latin_square, latin_order};
pub use metrics::{compute_metrics, metrics_from_bag, MetricContext, Need, ProcedureTime, SessionMetrics};
pub use replay::{replay_session, ReplayOutcome};
pub use script::{ArtifactSchedule, Coupling, LoadScript, Segment, PRESETS};
pub use session::{
    event_log_bytes, guidance_log_bytes, models_digest, run_session, run_session_with, Driver, FrontendAck, SessionConfig, SessionCore,
    SessionOutcome, SessionRecord, SessionStatus, TickReport, TruthRecord,
};
pub use stats::{log_odds_ratio, rate_ratio, LogOdds, RateRatio};
pub use study::{report_from_bags, run_study, ConditionSummary, LogOddsRow, RateRatioRow, StudyConfig, StudyReport, StudySession};
pub use training::{fixture_models, train_models, training_set, TrainingConfig, TrainingSet, FIXTURE_MODEL_TEXT};

use thiserror::Error;

use crate::bus::BusError;
use crate::classifier::ClassifierError;
use crate::policy::PolicyError;
use crate::signal::PipelineError;
use crate::task::TaskError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("replay: {0}")]
    Replay(String),
    #[error("statistics: {0}")]
    Stats(String),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

/// Independent seed for one random stream of a session. Streams are
/// numbered per consumer and `index` separates draws within a stream.
pub fn sub_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Smallest multiple of `tick` that is at least `ns`.
pub fn quantize_up(ns: i64, tick: i64) -> i64 {
    ns.div_euclid(tick) * tick + if ns.rem_euclid(tick) == 0 { 0 } else { tick }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sub_seeds_differ_by_stream_and_index() {
        let s: std::collections::HashSet<u64> =
            (0..4).flat_map(|st| (0..50).map(move |i| sub_seed(7, st, i))).collect();
        assert_eq!(s.len(), 200);
        assert_eq!(sub_seed(7, 1, 2), sub_seed(7, 1, 2));
    }

    #[test]
    fn quantize_rounds_up_to_tick() {
        assert_eq!(quantize_up(0, 100), 0);
        assert_eq!(quantize_up(1, 100), 100);
        assert_eq!(quantize_up(100, 100), 100);
        assert_eq!(quantize_up(-50, 100), 0);
        assert_eq!(quantize_up(-150, 100), -100);
    }
}

//! Streaming fNIRS preprocessing.
//!
//! Raw dual-wavelength intensities are buffered into a sliding window, motion
//! corrected with a multi-level db5 wavelet threshold, low-pass filtered with a
//! causal Butterworth cascade, converted to optical density against a
//! calibration baseline and finally inverted through the modified Beer-Lambert
//! law into HbO/HbR concentration changes.

mod baseline;
mod butterworth;
mod config;
mod frames;
mod mbll;
mod pipeline;
pub mod wavelet;

pub use baseline::{calibrate_baseline, BaselineStats};
pub use butterworth::{butterworth_magnitude, lowpass_filter, Biquad, ButterworthLowpass, FilterState};
pub use config::{PipelineConfig, ThresholdMode, WaveletName};
pub use frames::{read_frames_csv, write_frames_csv, RawFrame};
pub use mbll::{optical_density, optical_density_series, ExtinctionModel};
pub use pipeline::{process_recording, HemoSample, Pipeline, Quality, Window, WindowReady};
pub use wavelet::{wavelet_motion_correct, MotionCorrection};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("frame timestamp {got} ns is not after previous {previous} ns")]
    NonMonotonicTimestamp { previous: i64, got: i64 },
    #[error("frame has {got} channels, expected {expected}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("non-finite sample in input series")]
    NonFiniteInput,
    #[error("series of length {len} is too short, need at least {min}")]
    SeriesTooShort { len: usize, min: usize },
    #[error("non-positive intensity {0}")]
    NonPositiveIntensity(f64),
    #[error("extinction matrix is singular (|det| = {0:e})")]
    SingularExtinctionMatrix(f64),
    #[error("calibration segment has {len} frames, need at least {min}")]
    SegmentTooShort { len: usize, min: usize },
    #[error("window is not full ({len}/{capacity})")]
    WindowNotFull { len: usize, capacity: usize },
    #[error("frame csv: {0}")]
    Csv(String),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

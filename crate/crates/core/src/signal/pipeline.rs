use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use super::butterworth::{ButterworthLowpass, FilterState};
use super::mbll::{optical_density, ExtinctionModel};
use super::wavelet::{correct_with, Wavelet};
use super::{BaselineStats, PipelineConfig, PipelineError, RawFrame, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    Ok,
    ArtifactHeavy,
    Gap,
}

/// Hemoglobin concentration changes in micromolar, one value per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HemoSample {
    pub timestamp_ns: i64,
    pub hbo: Vec<f64>,
    pub hbr: Vec<f64>,
    pub quality: Vec<Quality>,
}

impl HemoSample {
    pub fn is_gap(&self) -> bool {
        self.quality.iter().any(|q| *q == Quality::Gap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowReady {
    pub newest_timestamp_ns: i64,
    /// Some frame in the window follows a gap.
    pub discontinuous: bool,
    /// The newest frame itself follows a gap.
    pub gap_at_newest: bool,
}

/// Fixed-capacity ring of the most recent frames.
#[derive(Debug, Clone)]
pub struct Window {
    capacity: usize,
    channels: usize,
    gap_threshold_ns: i64,
    frames: VecDeque<RawFrame>,
    gap_after: VecDeque<bool>,
    last_ts: Option<i64>,
}

impl Window {
    pub fn new(cfg: &PipelineConfig) -> Self {
        Self {
            capacity: cfg.window_len(),
            channels: cfg.channel_count,
            gap_threshold_ns: cfg.gap_threshold_ns(),
            frames: VecDeque::with_capacity(cfg.window_len() + 1),
            gap_after: VecDeque::with_capacity(cfg.window_len() + 1),
            last_ts: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.frames.len() == self.capacity
    }

    /// Append a frame; the oldest frame drops out once the ring is full.
    /// Intervals longer than two sample periods flag the new frame as a gap.
    pub fn ingest_frame(&mut self, frame: RawFrame) -> Result<Option<WindowReady>> {
        if frame.channel_count() != self.channels {
            return Err(PipelineError::ChannelMismatch { expected: self.channels, got: frame.channel_count() });
        }
        let gap = match self.last_ts {
            Some(prev) if frame.timestamp_ns <= prev => {
                return Err(PipelineError::NonMonotonicTimestamp { previous: prev, got: frame.timestamp_ns })
            }
            Some(prev) => frame.timestamp_ns - prev > self.gap_threshold_ns,
            None => false,
        };
        self.last_ts = Some(frame.timestamp_ns);
        let ts = frame.timestamp_ns;
        self.frames.push_back(frame);
        self.gap_after.push_back(gap);
        if self.frames.len() > self.capacity {
            self.frames.pop_front();
            self.gap_after.pop_front();
        }
        Ok(self.is_full().then(|| WindowReady {
            newest_timestamp_ns: ts,
            discontinuous: self.gap_after.iter().any(|g| *g),
            gap_at_newest: gap,
        }))
    }

    /// Time series of one channel at one wavelength, oldest first.
    pub fn series(&self, channel: usize, wavelength: usize) -> Vec<f64> {
        self.frames.iter().map(|f| f.intensities[channel][wavelength]).collect()
    }

    pub fn newest(&self) -> Option<&RawFrame> {
        self.frames.back()
    }

    fn newest_is_gap(&self) -> bool {
        self.gap_after.back().copied().unwrap_or(false)
    }
}

/// One subject's streaming preprocessing state.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    wavelet: Wavelet,
    filter: ButterworthLowpass,
    extinction: ExtinctionModel,
    baseline: BaselineStats,
    window: Window,
    filters: Vec<[FilterState; 2]>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, baseline: BaselineStats) -> Result<Self> {
        cfg.validate()?;
        if baseline.channel_count() != cfg.channel_count {
            return Err(PipelineError::ChannelMismatch { expected: cfg.channel_count, got: baseline.channel_count() });
        }
        if let Some(bad) = baseline.mean.iter().flatten().find(|m| !(**m > 0.0)) {
            return Err(PipelineError::NonPositiveIntensity(*bad));
        }
        let filter = ButterworthLowpass::from_config(&cfg)?;
        let filters = (0..cfg.channel_count).map(|_| [filter.new_state(), filter.new_state()]).collect();
        Ok(Self {
            wavelet: Wavelet::new(cfg.wavelet_name),
            extinction: ExtinctionModel::from_config(&cfg)?,
            window: Window::new(&cfg),
            filter,
            filters,
            baseline,
            cfg,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn ingest_frame(&mut self, frame: RawFrame) -> Result<Option<WindowReady>> {
        self.window.ingest_frame(frame)
    }

    /// Wavelet correction of the current window, then the newest corrected
    /// value of every series goes through the carried low-pass state, OD and
    /// the Beer-Lambert inversion.
    pub fn process_window(&mut self) -> Result<HemoSample> {
        if !self.window.is_full() {
            return Err(PipelineError::WindowNotFull { len: self.window.len(), capacity: self.window.capacity() });
        }
        let channels = self.cfg.channel_count;
        let gap = self.window.newest_is_gap();
        let mut hbo = Vec::with_capacity(channels);
        let mut hbr = Vec::with_capacity(channels);
        let mut quality = Vec::with_capacity(channels);
        for c in 0..channels {
            let mut od = [0.0; 2];
            let mut heavy = false;
            for (w, od_w) in od.iter_mut().enumerate() {
                let corrected = correct_with(&self.wavelet, &self.window.series(c, w), &self.cfg)?;
                heavy |= corrected.max_outlier_sigma > self.cfg.artifact_sigma;
                let newest = *corrected.series.last().expect("full window");
                let filtered = self.filters[c][w].step(&self.filter, newest);
                *od_w = optical_density(filtered, self.baseline.mean[c][w])?;
            }
            let [o, r] = self.extinction.invert(od);
            hbo.push(o);
            hbr.push(r);
            quality.push(if gap {
                Quality::Gap
            } else if heavy {
                Quality::ArtifactHeavy
            } else {
                Quality::Ok
            });
        }
        let timestamp_ns = self.window.newest().expect("full window").timestamp_ns;
        Ok(HemoSample { timestamp_ns, hbo, hbr, quality })
    }

    /// Ingest and, once the window is full, emit one sample per frame.
    pub fn push(&mut self, frame: RawFrame) -> Result<Option<HemoSample>> {
        match self.ingest_frame(frame)? {
            Some(_) => self.process_window().map(Some),
            None => Ok(None),
        }
    }
}

/// Offline counterpart of [`Pipeline::push`] over a whole recording: each
/// series is wavelet corrected window by window, then low-pass filtered in one
/// pass, then converted.
pub fn process_recording(cfg: &PipelineConfig, baseline: &BaselineStats, frames: &[RawFrame]) -> Result<Vec<HemoSample>> {
    cfg.validate()?;
    let n = cfg.window_len();
    let channels = cfg.channel_count;
    // reuse the window for validation and gap flags
    let mut window = Window::new(cfg);
    let mut gaps = Vec::with_capacity(frames.len());
    for f in frames {
        window.ingest_frame(f.clone())?;
        gaps.push(window.newest_is_gap());
    }
    if frames.len() < n {
        return Ok(Vec::new());
    }
    let wavelet = Wavelet::new(cfg.wavelet_name);
    let filter = ButterworthLowpass::from_config(cfg)?;
    let extinction = ExtinctionModel::from_config(cfg)?;
    let outputs = frames.len() - n + 1;
    let mut od = vec![vec![[0.0; 2]; channels]; outputs];
    let mut heavy = vec![vec![false; channels]; outputs];
    for c in 0..channels {
        for w in 0..2 {
            let series: Vec<f64> = frames.iter().map(|f| f.intensities[c][w]).collect();
            let mut newest = Vec::with_capacity(outputs);
            for (k, win) in series.windows(n).enumerate() {
                let corrected = correct_with(&wavelet, win, cfg)?;
                heavy[k][c] |= corrected.max_outlier_sigma > cfg.artifact_sigma;
                newest.push(*corrected.series.last().unwrap());
            }
            let mut state: FilterState = filter.new_state();
            for (k, x) in newest.into_iter().enumerate() {
                od[k][c][w] = optical_density(state.step(&filter, x), baseline.mean[c][w])?;
            }
        }
    }
    Ok((0..outputs)
        .map(|k| {
            let t = k + n - 1;
            let (hbo, hbr) = od[k].iter().map(|pair| extinction.invert(*pair)).map(|[o, r]| (o, r)).unzip();
            let quality = (0..channels)
                .map(|c| {
                    if gaps[t] {
                        Quality::Gap
                    } else if heavy[k][c] {
                        Quality::ArtifactHeavy
                    } else {
                        Quality::Ok
                    }
                })
                .collect();
            HemoSample { timestamp_ns: frames[t].timestamp_ns, hbo, hbr, quality }
        })
        .collect())
}

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use super::{PipelineError, Result};

/// One acquisition instant: two light intensities per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawFrame {
    pub timestamp_ns: i64,
    pub intensities: Vec<[f64; 2]>,
}

impl RawFrame {
    pub fn new(timestamp_ns: i64, intensities: Vec<[f64; 2]>) -> Self {
        Self { timestamp_ns, intensities }
    }

    pub fn channel_count(&self) -> usize {
        self.intensities.len()
    }
}

/// Reads `timestamp_ns, ch0_w1, ch0_w2, ch1_w1, ...` rows (header required).
pub fn read_frames_csv<R: Read>(reader: R) -> Result<Vec<RawFrame>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| PipelineError::Csv(e.to_string()))?.clone();
    if headers.len() < 3 || (headers.len() - 1) % 2 != 0 || &headers[0] != "timestamp_ns" {
        return Err(PipelineError::Csv(
            "header must be timestamp_ns followed by two columns per channel".into(),
        ));
    }
    let channels = (headers.len() - 1) / 2;
    let mut frames = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| PipelineError::Csv(e.to_string()))?;
        let bad = |what: &str| PipelineError::Csv(format!("row {}: bad {what}", row + 1));
        let ts: i64 = record[0].parse().map_err(|_| bad("timestamp"))?;
        let mut intensities = Vec::with_capacity(channels);
        for c in 0..channels {
            let w1: f64 = record[1 + 2 * c].parse().map_err(|_| bad("intensity"))?;
            let w2: f64 = record[2 + 2 * c].parse().map_err(|_| bad("intensity"))?;
            intensities.push([w1, w2]);
        }
        frames.push(RawFrame::new(ts, intensities));
    }
    Ok(frames)
}

pub fn write_frames_csv<W: Write>(writer: W, frames: &[RawFrame]) -> Result<()> {
    let channels = frames.first().map_or(0, RawFrame::channel_count);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp_ns".to_string()];
    for c in 0..channels {
        header.push(format!("ch{c}_w1"));
        header.push(format!("ch{c}_w2"));
    }
    w.write_record(&header).map_err(|e| PipelineError::Csv(e.to_string()))?;
    for f in frames {
        let mut row = vec![f.timestamp_ns.to_string()];
        for [a, b] in &f.intensities {
            row.push(a.to_string());
            row.push(b.to_string());
        }
        w.write_record(&row).map_err(|e| PipelineError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| PipelineError::Csv(e.to_string()))
}

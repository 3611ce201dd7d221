use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use super::{ClassifierError, Facet, Result, WorkloadState, WorkloadVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetSummary {
    pub state: WorkloadState,
    pub mean_confidence: f64,
    pub counts: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSummary {
    pub timestamp_ns: i64,
    pub span_count: usize,
    pub memory: FacetSummary,
    pub attention: FacetSummary,
    pub perception: FacetSummary,
}

impl WorkloadSummary {
    pub fn facet(&self, facet: Facet) -> &FacetSummary {
        match facet {
            Facet::Memory => &self.memory,
            Facet::Attention => &self.attention,
            Facet::Perception => &self.perception,
        }
    }

    pub fn states(&self) -> [WorkloadState; 3] {
        Facet::ALL.map(|f| self.facet(f).state)
    }
}

/// Modal state per facet over vectors newer than `last - span_ns`. A tie
/// goes to whichever tied label occurred most recently.
pub fn rolling_summary<'a, I>(history: I, span_ns: i64) -> Result<WorkloadSummary>
where
    I: IntoIterator<Item = &'a WorkloadVector>,
    I::IntoIter: DoubleEndedIterator,
{
    let mut iter = history.into_iter().rev().peekable();
    let last = iter.peek().ok_or(ClassifierError::EmptyHistory)?.timestamp_ns;
    let in_span: Vec<&WorkloadVector> = iter.take_while(|v| v.timestamp_ns > last - span_ns).collect();
    let summarize = |facet: Facet| {
        let mut counts = [0usize; 3];
        // index within in_span (newest first) of each label's latest sighting
        let mut latest = [usize::MAX; 3];
        let mut conf = 0.0;
        for (i, v) in in_span.iter().enumerate() {
            let e = v.facet(facet);
            counts[e.state.index()] += 1;
            latest[e.state.index()] = latest[e.state.index()].min(i);
            conf += e.confidence;
        }
        let state = WorkloadState::ALL
            .into_iter()
            .max_by(|a, b| counts[a.index()].cmp(&counts[b.index()]).then(latest[b.index()].cmp(&latest[a.index()])))
            .unwrap_or(WorkloadState::Optimal);
        FacetSummary { state, mean_confidence: conf / in_span.len() as f64, counts }
    };
    Ok(WorkloadSummary {
        timestamp_ns: last,
        span_count: in_span.len(),
        memory: summarize(Facet::Memory),
        attention: summarize(Facet::Attention),
        perception: summarize(Facet::Perception),
    })
}

/// Per-session buffer of recent vectors. Entries older than the span are
/// dropped on push.
#[derive(Debug, Clone)]
pub struct WorkloadHistory {
    span_ns: i64,
    buf: VecDeque<WorkloadVector>,
}

impl WorkloadHistory {
    pub fn new(span_ns: i64) -> Self {
        Self { span_ns, buf: VecDeque::new() }
    }

    pub fn push(&mut self, v: WorkloadVector) {
        let cutoff = v.timestamp_ns - self.span_ns;
        self.buf.push_back(v);
        while self.buf.front().is_some_and(|f| f.timestamp_ns <= cutoff) {
            self.buf.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn latest(&self) -> Option<&WorkloadVector> {
        self.buf.back()
    }

    pub fn summary(&self) -> Result<WorkloadSummary> {
        rolling_summary(&self.buf, self.span_ns)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::FacetEstimate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SPAN: i64 = 10_000_000_000;

    fn vector(i: i64, states: [WorkloadState; 3], conf: f64) -> WorkloadVector {
        let est = |facet, state: WorkloadState| FacetEstimate { facet, state, confidence: conf, probs: [0.0; 3] };
        WorkloadVector {
            timestamp_ns: i * 100_000_000,
            memory: est(Facet::Memory, states[0]),
            attention: est(Facet::Attention, states[1]),
            perception: est(Facet::Perception, states[2]),
        }
    }

    #[test]
    fn all_overload() {
        let h: Vec<_> = (0..100).map(|i| vector(i, [WorkloadState::Overload; 3], 0.9)).collect();
        let s = rolling_summary(&h, SPAN).unwrap();
        assert_eq!(s.span_count, 100);
        assert_eq!(s.states(), [WorkloadState::Overload; 3]);
        assert!((s.memory.mean_confidence - 0.9).abs() < 1e-12);
    }

    #[test]
    fn tie_goes_to_most_recent() {
        let h: Vec<_> = (0..100)
            .map(|i| vector(i, [if i < 50 { WorkloadState::Underload } else { WorkloadState::Optimal }; 3], 0.5))
            .collect();
        assert_eq!(rolling_summary(&h, SPAN).unwrap().memory.state, WorkloadState::Optimal);
        let h: Vec<_> = (0..100)
            .map(|i| vector(i, [if i < 50 { WorkloadState::Optimal } else { WorkloadState::Overload }; 3], 0.5))
            .collect();
        assert_eq!(rolling_summary(&h, SPAN).unwrap().memory.state, WorkloadState::Overload);
    }

    #[test]
    fn span_excludes_old_vectors() {
        let h: Vec<_> = (0..250).map(|i| vector(i, [WorkloadState::Optimal; 3], 0.5)).collect();
        assert_eq!(rolling_summary(&h, SPAN).unwrap().span_count, 100);
    }

    #[test]
    fn mixed_stream_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let n = rng.random_range(1..300);
            let h: Vec<_> = (0..n)
                .map(|i| {
                    let s = [0, 1, 2].map(|_| WorkloadState::from_index(rng.random_range(0..3)));
                    vector(i, s, rng.random_range(0.34..1.0))
                })
                .collect();
            let got = rolling_summary(&h, SPAN).unwrap();
            let last = h.last().unwrap().timestamp_ns;
            let window: Vec<_> = h.iter().filter(|v| last - v.timestamp_ns < SPAN).collect();
            for f in Facet::ALL {
                let count = |k: WorkloadState| window.iter().filter(|v| v.facet(f).state == k).count();
                let best = WorkloadState::ALL.iter().map(|k| count(*k)).max().unwrap();
                let tied: Vec<_> = WorkloadState::ALL.into_iter().filter(|k| count(*k) == best).collect();
                let expect = window.iter().rev().map(|v| v.facet(f).state).find(|s| tied.contains(s)).unwrap();
                assert_eq!(got.facet(f).state, expect);
                let conf: f64 = window.iter().map(|v| v.facet(f).confidence).sum::<f64>() / window.len() as f64;
                assert!((got.facet(f).mean_confidence - conf).abs() < 1e-12);
            }
            assert_eq!(got.span_count, window.len());
        }
    }

    #[test]
    fn empty_history_errors() {
        let h: Vec<WorkloadVector> = vec![];
        assert_eq!(rolling_summary(&h, SPAN), Err(ClassifierError::EmptyHistory));
    }

    #[test]
    fn history_buffer_matches_free_function() {
        let mut hist = WorkloadHistory::new(SPAN);
        let mut all = Vec::new();
        for i in 0..300 {
            let v = vector(i, [WorkloadState::from_index((i / 7 % 3) as usize); 3], 0.6);
            hist.push(v.clone());
            all.push(v);
        }
        assert_eq!(hist.len(), 100);
        assert_eq!(hist.summary().unwrap(), rolling_summary(&all, SPAN).unwrap());
    }
}

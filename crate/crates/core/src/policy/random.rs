use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{compose_message, DecisionSource, GuidanceDecision, InfoLoad, Modality, ModalitySet, Result};
use crate::task::Step;

/// Random-condition guidance: a uniformly drawn modality set at the
/// standard load. Draws from all seven subsets by default, or from the
/// three single modalities when `singletons_only` is set.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
    singletons_only: bool,
}

impl RandomPolicy {
    pub fn new(seed: u64, singletons_only: bool) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), singletons_only }
    }

    pub fn draw(&mut self) -> ModalitySet {
        if self.singletons_only {
            ModalitySet::singletons()[self.rng.random_range(0..3)]
        } else {
            ModalitySet::all()[self.rng.random_range(0..7)]
        }
    }

    pub fn decide(&mut self, timestamp_ns: i64, step: &Step) -> Result<GuidanceDecision> {
        let modalities = self.draw();
        let load = InfoLoad::Standard;
        Ok(GuidanceDecision {
            timestamp_ns,
            step_id: step.id.clone(),
            modalities,
            load,
            message_text: compose_message(step, load)?,
            visual_target: modalities.contains(Modality::Visual).then(|| step.control.clone()),
            reasoning: "random condition".into(),
            source: DecisionSource::Random,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::ChecklistSpec;

    #[test]
    fn seeded_sequence_is_reproducible() {
        let a: Vec<_> = (0..50).map({
            let mut p = RandomPolicy::new(9, false);
            move |_| p.draw()
        }).collect();
        let b: Vec<_> = (0..50).map({
            let mut p = RandomPolicy::new(9, false);
            move |_| p.draw()
        }).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_over_seven_subsets() {
        let mut p = RandomPolicy::new(1, false);
        let n = 70_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..n {
            *counts.entry(p.draw()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 7);
        // chi-square with 6 dof; 22.46 is the 0.999 quantile
        let e = n as f64 / 7.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 22.46, "chi2 = {chi2}");
    }

    #[test]
    fn singleton_switch() {
        let mut p = RandomPolicy::new(3, true);
        assert!((0..100).all(|_| p.draw().len() == 1));
    }

    #[test]
    fn decisions_use_standard_load() {
        let spec = ChecklistSpec::fixture();
        let mut p = RandomPolicy::new(5, false);
        for (_, step) in spec.steps() {
            let d = p.decide(0, step).unwrap();
            assert_eq!(d.load, InfoLoad::Standard);
            assert!(d.check().is_ok());
        }
    }
}

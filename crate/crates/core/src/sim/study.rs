use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use super::latin::latin_order;
use super::metrics::{metrics_from_bag, SessionMetrics};
use super::session::{run_session, Driver, SessionConfig};
use super::stats::{log_odds_ratio, rate_ratio, LogOdds, RateRatio};
use super::{sub_seed, AgentConfig, Expertise, Result, SimError};
use crate::bus::Bag;
use crate::classifier::{Facet, FacetModels};
use crate::policy::Condition;

const STREAM_PARTICIPANT: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub participants: usize,
    pub conditions: Vec<Condition>,
    pub seed: u64,
    /// Settings shared by every session. Per-session fields are filled in
    /// from the participant and run order.
    pub template: SessionConfig,
    /// Alternate experienced and novice agents across participants.
    pub mixed_expertise: bool,
}

impl StudyConfig {
    pub fn new(participants: usize, seed: u64) -> Self {
        Self {
            participants,
            conditions: Condition::ALL.to_vec(),
            seed,
            template: SessionConfig::new(Condition::Baseline, seed),
            mixed_expertise: true,
        }
    }

    pub fn ordering(&self) -> Vec<Vec<Condition>> {
        latin_order(&self.conditions, self.participants)
    }

    pub fn participant_seed(&self, p: usize) -> u64 {
        sub_seed(self.seed, STREAM_PARTICIPANT, p as u64)
    }

    pub fn expertise(&self, p: usize) -> Expertise {
        if self.mixed_expertise && p % 2 == 1 {
            Expertise::Novice
        } else {
            Expertise::Experienced
        }
    }

    /// Session configs in participant-major, run-order-minor order.
    pub fn sessions(&self) -> Vec<(usize, SessionConfig)> {
        self.ordering()
            .into_iter()
            .enumerate()
            .flat_map(|(p, row)| {
                row.into_iter().map(move |condition| {
                    let mut cfg = self.template.clone();
                    cfg.condition = condition;
                    cfg.seed = self.participant_seed(p);
                    if let Driver::Agent(a) = &cfg.driver {
                        let base = AgentConfig::for_expertise(self.expertise(p));
                        cfg.driver = Driver::Agent(AgentConfig { guided_error_mult: a.guided_error_mult, guided_latency_mult: a.guided_latency_mult, ..base });
                    }
                    (p, cfg)
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.participants == 0 || self.conditions.is_empty() {
            return Err(SimError::Config("a study needs participants and conditions".into()));
        }
        self.template.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySession {
    pub participant: usize,
    pub run_index: usize,
    pub metrics: SessionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub sessions: usize,
    pub completed: usize,
    pub mean_completion_time_s: f64,
    pub exposure_s: f64,
    pub actions: usize,
    pub errors: usize,
    pub false_errors: usize,
    pub false_error_rate: f64,
    pub guidance_count: usize,
    pub guided_match_rate: Option<f64>,
    pub visual_only_share: Option<f64>,
    pub optimal_ticks: [u64; 3],
    pub workload_samples: u64,
    pub optimal_incidence: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogOddsRow {
    pub facet: Facet,
    pub condition: Condition,
    pub reference: Condition,
    pub result: LogOdds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRatioRow {
    pub condition: Condition,
    pub reference: Condition,
    /// `None` when the reference condition has no errors.
    pub result: Option<RateRatio>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub ordering: Vec<Vec<Condition>>,
    pub sessions: Vec<StudySession>,
    pub conditions: Vec<ConditionSummary>,
    pub log_odds: Vec<LogOddsRow>,
    pub rate_ratios: Vec<RateRatioRow>,
    /// Agent guidance-response multipliers, reported so outputs are read as
    /// properties of the simulated agent.
    pub agent_guided_error_mult: f64,
    pub agent_guided_latency_mult: f64,
}

fn summarize(condition: Condition, ms: &[&SessionMetrics]) -> ConditionSummary {
    let sum = |f: fn(&SessionMetrics) -> usize| ms.iter().map(|m| f(m)).sum::<usize>();
    let completed: Vec<_> = ms.iter().filter(|m| m.status == super::SessionStatus::Complete).collect();
    let guidance = sum(|m| m.guidance_count);
    let weighted = |f: fn(&SessionMetrics) -> Option<f64>| {
        (guidance > 0).then(|| ms.iter().map(|m| f(m).unwrap_or(0.0) * m.guidance_count as f64).sum::<f64>() / guidance as f64)
    };
    let optimal_ticks = [0, 1, 2].map(|i| ms.iter().map(|m| m.optimal_ticks[i] as u64).sum::<u64>());
    let samples = ms.iter().map(|m| m.workload_samples as u64).sum::<u64>();
    let actions = sum(|m| m.actions);
    let false_errors = sum(|m| m.false_errors);
    ConditionSummary {
        condition,
        sessions: ms.len(),
        completed: completed.len(),
        mean_completion_time_s: if completed.is_empty() {
            0.0
        } else {
            completed.iter().map(|m| m.completion_time_s).sum::<f64>() / completed.len() as f64
        },
        exposure_s: ms.iter().map(|m| m.duration_s).sum(),
        actions,
        errors: sum(|m| m.errors),
        false_errors,
        false_error_rate: if actions == 0 { 0.0 } else { false_errors as f64 / actions as f64 },
        guidance_count: guidance,
        guided_match_rate: weighted(|m| m.guided_match_rate),
        visual_only_share: weighted(|m| m.visual_only_share),
        optimal_ticks,
        workload_samples: samples,
        optimal_incidence: optimal_ticks.map(|k| if samples == 0 { 0.0 } else { k as f64 / samples as f64 }),
    }
}

impl StudyReport {
    pub fn from_sessions(cfg: &StudyConfig, sessions: Vec<StudySession>) -> Result<Self> {
        let conditions: Vec<ConditionSummary> = cfg
            .conditions
            .iter()
            .map(|&c| summarize(c, &sessions.iter().filter(|s| s.metrics.condition == c).map(|s| &s.metrics).collect::<Vec<_>>()))
            .collect();
        let reference = if cfg.conditions.contains(&Condition::Baseline) { Condition::Baseline } else { cfg.conditions[0] };
        let r = conditions.iter().find(|c| c.condition == reference).expect("reference is a study condition");
        let mut log_odds = Vec::new();
        let mut rate_ratios = Vec::new();
        for c in conditions.iter().filter(|c| c.condition != reference) {
            for (i, facet) in Facet::ALL.into_iter().enumerate() {
                let a = (c.optimal_ticks[i], c.workload_samples - c.optimal_ticks[i]);
                let b = (r.optimal_ticks[i], r.workload_samples - r.optimal_ticks[i]);
                log_odds.push(LogOddsRow { facet, condition: c.condition, reference, result: log_odds_ratio(a, b) });
            }
            let result = if c.exposure_s > 0.0 && r.exposure_s > 0.0 {
                rate_ratio(c.errors as u64, c.exposure_s, r.errors as u64, r.exposure_s).ok()
            } else {
                None
            };
            rate_ratios.push(RateRatioRow { condition: c.condition, reference, result });
        }
        let (em, lm) = match &cfg.template.driver {
            Driver::Agent(a) => (a.guided_error_mult, a.guided_latency_mult),
            Driver::Human => (1.0, 1.0),
        };
        Ok(Self {
            ordering: cfg.ordering(),
            sessions,
            conditions,
            log_odds,
            rate_ratios,
            agent_guided_error_mult: em,
            agent_guided_latency_mult: lm,
        })
    }

    /// One session per line.
    pub fn to_jsonl(&self) -> String {
        self.sessions.iter().map(|s| serde_json::to_string(s).expect("session serializes") + "\n").collect()
    }

    pub fn summary_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Study summary\n");
        let _ = writeln!(
            s,
            "Simulated agents: guidance that matches the scripted need scales error probability by {} and latency by {}. \
             These outputs describe the simulation, not human pilots.\n",
            self.agent_guided_error_mult, self.agent_guided_latency_mult
        );
        let _ = writeln!(s, "## Ordering\n");
        for (p, row) in self.ordering.iter().enumerate() {
            let names: Vec<_> = row.iter().map(|c| c.as_str()).collect();
            let _ = writeln!(s, "- participant {p}: {}", names.join(", "));
        }
        let _ = writeln!(s, "\n## Conditions\n");
        let _ = writeln!(
            s,
            "| condition | sessions | completed | mean completion (s) | errors | false errors | false error rate | guidance | match rate | visual-only share | optimal memory | optimal attention | optimal perception |"
        );
        let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|---|---|---|---|");
        let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
        for c in &self.conditions {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {:.1} | {} | {} | {:.4} | {} | {} | {} | {:.3} | {:.3} | {:.3} |",
                c.condition,
                c.sessions,
                c.completed,
                c.mean_completion_time_s,
                c.errors,
                c.false_errors,
                c.false_error_rate,
                c.guidance_count,
                opt(c.guided_match_rate),
                opt(c.visual_only_share),
                c.optimal_incidence[0],
                c.optimal_incidence[1],
                c.optimal_incidence[2]
            );
        }
        let _ = writeln!(s, "\n## Optimal-state log-odds\n");
        let _ = writeln!(s, "| facet | condition | reference | log-odds | 95% CI | corrected |");
        let _ = writeln!(s, "|---|---|---|---|---|---|");
        for r in &self.log_odds {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {:.4} | [{:.4}, {:.4}] | {} |",
                r.facet, r.condition, r.reference, r.result.estimate, r.result.ci95[0], r.result.ci95[1], r.result.corrected
            );
        }
        let _ = writeln!(s, "\n## Error rate ratios\n");
        let _ = writeln!(s, "| condition | reference | ratio | 95% CI |");
        let _ = writeln!(s, "|---|---|---|---|");
        for r in &self.rate_ratios {
            match &r.result {
                Some(x) => {
                    let _ = writeln!(s, "| {} | {} | {:.4} | [{:.4}, {:.4}] |", r.condition, r.reference, x.estimate, x.ci95[0], x.ci95[1]);
                }
                None => {
                    let _ = writeln!(s, "| {} | {} | undefined (no reference errors) | - |", r.condition, r.reference);
                }
            }
        }
        s
    }

    /// Writes `sessions.jsonl`, `summary.md` and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sessions.jsonl"), self.to_jsonl())?;
        std::fs::write(dir.join("summary.md"), self.summary_markdown())?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self).expect("report serializes"))?;
        Ok(())
    }
}

/// Runs every session of the study on the rayon pool. Results keep
/// participant and run order regardless of scheduling.
pub fn run_study(cfg: &StudyConfig, models: &FacetModels) -> Result<(StudyReport, Vec<Bag>)> {
    cfg.validate()?;
    let per_participant = cfg.conditions.len();
    let runs: Vec<_> = cfg
        .sessions()
        .into_par_iter()
        .enumerate()
        .map(|(i, (p, sc))| {
            let out = run_session(&sc, models)?;
            Ok((StudySession { participant: p, run_index: i % per_participant, metrics: out.metrics }, out.bag))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sessions, bags): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    Ok((StudyReport::from_sessions(cfg, sessions)?, bags))
}

/// Rebuilds the study report from recorded bags alone.
pub fn report_from_bags(cfg: &StudyConfig, bags: &[Bag]) -> Result<StudyReport> {
    let per_participant = cfg.conditions.len();
    let sessions = cfg
        .sessions()
        .into_iter()
        .enumerate()
        .map(|(i, (p, sc))| {
            let id = sc.session_id();
            let bag = bags.iter().find(|b| b.session_id == id).ok_or_else(|| SimError::Replay(format!("no bag for session {id}")))?;
            Ok(StudySession { participant: p, run_index: i % per_participant, metrics: metrics_from_bag(bag)? })
        })
        .collect::<Result<Vec<_>>>()?;
    StudyReport::from_sessions(cfg, sessions)
}

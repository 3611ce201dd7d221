//! Reasoner reply grammar.
//!
//! A reply is a set of labelled fields, each starting a line:
//!
//! ```text
//! REASONING: free text, may continue on following lines
//! MODALITY: visual+audio
//! LOAD: standard
//! MESSAGE: Set APU switch ON
//! ```
//!
//! Labels are case-insensitive and may appear in any order, each at most
//! once. Only MESSAGE may be left out.
//! Lines before the first label are ignored. A bad modality token is
//! reported as such even when other fields are missing.

use super::{InfoLoad, ModalitySet, PolicyError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReasonerOutput {
    pub reasoning: String,
    pub modalities: ModalitySet,
    pub load: InfoLoad,
    pub message: Option<String>,
}

const LABELS: [&str; 4] = ["REASONING", "MODALITY", "LOAD", "MESSAGE"];

fn label_of(line: &str) -> Option<(usize, &str)> {
    let (head, rest) = line.split_once(':')?;
    let head = head.trim();
    LABELS.iter().position(|l| l.eq_ignore_ascii_case(head)).map(|i| (i, rest))
}

pub fn parse_reasoner_output(text: &str) -> Result<ReasonerOutput> {
    let mut fields: [Option<String>; 4] = Default::default();
    let mut current: Option<usize> = None;
    for line in text.lines() {
        if let Some((i, rest)) = label_of(line) {
            if fields[i].is_some() {
                return Err(PolicyError::ParseFailure(format!("{} given twice", LABELS[i])));
            }
            fields[i] = Some(rest.trim().to_string());
            current = Some(i);
        } else if let Some(i) = current {
            let f = fields[i].as_mut().expect("current field is set");
            let extra = line.trim();
            if !extra.is_empty() {
                if !f.is_empty() {
                    f.push(' ');
                }
                f.push_str(extra);
            }
        }
    }
    let [reasoning, modality, load, message] = fields;
    let modalities = match &modality {
        Some(m) => Some(ModalitySet::parse_tokens(m)?),
        None => None,
    };
    let missing = |name: &str| PolicyError::ParseFailure(format!("missing {name}"));
    let reasoning = reasoning.filter(|r| !r.is_empty()).ok_or_else(|| missing("REASONING"))?;
    let modalities = modalities.ok_or_else(|| missing("MODALITY"))?;
    let load: InfoLoad = load.ok_or_else(|| missing("LOAD"))?.parse()?;
    Ok(ReasonerOutput { reasoning, modalities, load, message: message.filter(|m| !m.is_empty()) })
}

/// Formats a reply in the grammar above.
pub fn format_reasoner_output(out: &ReasonerOutput) -> String {
    let mut s = format!("REASONING: {}\nMODALITY: {}\nLOAD: {}\n", out.reasoning, out.modalities, out.load);
    if let Some(m) = &out.message {
        s.push_str(&format!("MESSAGE: {m}\n"));
    }
    s
}

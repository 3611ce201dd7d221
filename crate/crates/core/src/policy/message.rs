use super::{InfoLoad, PolicyError, Result};
use crate::task::Step;

/// Message text for a step at the given load. Each load adds one block to
/// the previous one, so shorter variants are prefixes of longer ones.
pub fn compose_message(step: &Step, load: InfoLoad) -> Result<String> {
    let g = &step.guidance;
    let blocks: &[(&'static str, &str)] = match load {
        InfoLoad::Essential => &[("command", &g.command)],
        InfoLoad::Standard => &[("command", &g.command), ("context", &g.context)],
        InfoLoad::Comprehensive => &[("command", &g.command), ("context", &g.context), ("environment", &g.environment)],
    };
    let mut out = Vec::with_capacity(blocks.len());
    for (name, text) in blocks {
        let text = text.trim();
        if text.is_empty() {
            return Err(PolicyError::MissingVariant { step: step.id.clone(), block: name });
        }
        out.push(text);
    }
    Ok(out.join(" "))
}

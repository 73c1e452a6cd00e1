use crate::error::{Error, Result};
use crate::numerics::{Graph, Var};
use crate::rouge::Candidate;

fn check_lengths(p: usize, labels: usize) -> Result<()> {
    if p != labels {
        return Err(Error::arg(format!("{p} probabilities but {labels} labels")));
    }
    Ok(())
}

/// Binary cross-entropy `-Σ [y·ln p + (1-y)·ln(1-p)]` on probabilities.
pub fn ce_loss(p: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(p.len(), labels.len())?;
    Ok(p
        .iter()
        .zip(labels)
        .map(|(&p, &y)| if y == 1 { -p.ln() } else { -(1.0 - p).ln() })
        .sum())
}

/// [`ce_loss`] on pre-squash scores, without forming the probabilities.
pub fn ce_loss_logits(s: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(s.len(), labels.len())?;
    Ok(s
        .iter()
        .zip(labels)
        .map(|(&s, &y)| s.max(0.0) - s * f64::from(y) + (-s.abs()).exp().ln_1p())
        .sum())
}

/// `reward · ce_loss(p, labels)`.
pub fn reinforced_loss(p: &[f64], labels: &[u8], reward: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&reward) {
        return Err(Error::arg(format!("reward {reward} outside [0, 1]")));
    }
    Ok(reward * ce_loss(p, labels)?)
}

fn as_targets(labels: &[u8]) -> Vec<f64> {
    labels.iter().map(|&l| f64::from(l)).collect()
}

/// Cross-entropy on pre-squash scores `logits` (`[n × 1]` or `[n]`).
pub fn ce_loss_graph(g: &mut Graph, logits: Var, labels: &[u8]) -> Result<Var> {
    check_lengths(g.value(logits).len(), labels.len())?;
    g.bce_with_logits(logits, &as_targets(labels))
}

/// Mean over `candidates` of `reward · CE(logits, candidate labels)`.
pub fn reinforced_loss_graph(g: &mut Graph, logits: Var, candidates: &[Candidate]) -> Result<Var> {
    if candidates.is_empty() {
        return Err(Error::arg("reinforced loss needs at least one candidate"));
    }
    let weight = 1.0 / candidates.len() as f64;
    let terms = candidates
        .iter()
        .map(|c| {
            let ce = ce_loss_graph(g, logits, &c.labels)?;
            Ok(g.scale(ce, c.reward * weight))
        })
        .collect::<Result<Vec<_>>>()?;
    g.add_all(&terms)
}

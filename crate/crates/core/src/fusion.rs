//! Speaker-level late fusion of per-utterance (or per-model) decisions.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::severity::{Severity, N_CLASSES};

const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Which class wins when several share the top score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiePolicy {
    /// Lowest label, i.e. the most severe grade.
    #[default]
    Severe,
    LeastSevere,
}

impl TiePolicy {
    fn pick(self, tied: impl DoubleEndedIterator<Item = usize>) -> usize {
        match self {
            TiePolicy::Severe => tied.into_iter().next(),
            TiePolicy::LeastSevere => tied.into_iter().next_back(),
        }
        .expect("at least one class holds the maximum")
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TiePolicy::Severe => "severe",
            TiePolicy::LeastSevere => "least-severe",
        }
    }
}

impl fmt::Display for TiePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TiePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "severe" => Ok(TiePolicy::Severe),
            "least-severe" => Ok(TiePolicy::LeastSevere),
            other => Err(Error::InvalidParameter(format!(
                "unknown tie policy `{other}` (expected severe or least-severe)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionMode {
    /// Hard plurality vote over per-voter argmax labels.
    #[default]
    Majority,
    /// Argmax of the averaged class distributions.
    Soft,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Majority => "majority",
            FusionMode::Soft => "soft",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "majority" => Ok(FusionMode::Majority),
            "soft" => Ok(FusionMode::Soft),
            other => Err(Error::InvalidParameter(format!(
                "unknown fusion mode `{other}` (expected majority or soft)"
            ))),
        }
    }
}

/// Probabilities over the five grades, summing to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassDistribution([f64; N_CLASSES]);

impl ClassDistribution {
    pub fn new(probabilities: [f64; N_CLASSES]) -> Result<Self> {
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "class probabilities must be finite and non-negative: {probabilities:?}"
            )));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "class probabilities sum to {total}, not 1"
            )));
        }
        Ok(ClassDistribution(probabilities))
    }

    /// Normalizes non-negative scores (counts, unnormalized weights).
    pub fn from_weights(weights: [f64; N_CLASSES]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "class weights must be finite and non-negative: {weights:?}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("class weights are all zero".into()));
        }
        Ok(ClassDistribution(weights.map(|w| w / total)))
    }

    pub fn one_hot(class: Severity) -> Self {
        let mut p = [0.0; N_CLASSES];
        p[class.index()] = 1.0;
        ClassDistribution(p)
    }

    pub fn probabilities(&self) -> &[f64; N_CLASSES] {
        &self.0
    }

    pub fn get(&self, class: Severity) -> f64 {
        self.0[class.index()]
    }

    pub fn argmax(&self, policy: TiePolicy) -> Severity {
        Severity::from_index(argmax_with(&self.0, policy).0)
    }
}

/// Index of the maximum and whether it was shared. Exact float equality
/// counts as a tie.
fn argmax_with<T: PartialOrd + Copy>(scores: &[T; N_CLASSES], policy: TiePolicy) -> (usize, bool) {
    let best = scores
        .iter()
        .copied()
        .fold(scores[0], |a, b| if b > a { b } else { a });
    let tied: Vec<usize> = (0..N_CLASSES).filter(|&i| scores[i] == best).collect();
    (policy.pick(tied.iter().copied()), tied.len() > 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoteOutcome {
    pub winner: Severity,
    /// Votes per class, index 0 = class 1.
    pub counts: [usize; N_CLASSES],
    pub was_tie: bool,
}

impl VoteOutcome {
    pub fn from_counts(counts: [usize; N_CLASSES], policy: TiePolicy) -> Result<Self> {
        if counts.iter().sum::<usize>() == 0 {
            return Err(Error::EmptyInput("vote"));
        }
        let (winner, was_tie) = argmax_with(&counts, policy);
        Ok(VoteOutcome {
            winner: Severity::from_index(winner),
            counts,
            was_tie,
        })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn majority_vote(labels: &[Severity], policy: TiePolicy) -> Result<VoteOutcome> {
    let mut counts = [0usize; N_CLASSES];
    for label in labels {
        counts[label.index()] += 1;
    }
    VoteOutcome::from_counts(counts, policy)
}

/// Element-wise mean, renormalized, with its argmax.
pub fn average_probabilities(
    dists: &[ClassDistribution],
    policy: TiePolicy,
) -> Result<(ClassDistribution, Severity)> {
    if dists.is_empty() {
        return Err(Error::EmptyInput("probability distributions"));
    }
    let mut sum = [0.0; N_CLASSES];
    for d in dists {
        for (s, p) in sum.iter_mut().zip(d.0) {
            *s += p;
        }
    }
    let mean = ClassDistribution::from_weights(sum.map(|s| s / dists.len() as f64))?;
    let winner = mean.argmax(policy);
    Ok((mean, winner))
}

pub fn aggregate_speaker_loss(per_utterance_losses: &[f64]) -> Result<f64> {
    if per_utterance_losses.is_empty() {
        return Err(Error::EmptyInput("utterance losses"));
    }
    if let Some(bad) = per_utterance_losses.iter().find(|l| !l.is_finite() || **l < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "losses must be finite and non-negative, got {bad}"
        )));
    }
    Ok(per_utterance_losses.iter().sum::<f64>() / per_utterance_losses.len() as f64)
}

/// One speaker-level label from several voters' distributions.
pub fn fuse(dists: &[ClassDistribution], mode: FusionMode, policy: TiePolicy) -> Result<Severity> {
    match mode {
        FusionMode::Majority => {
            let labels: Vec<Severity> = dists.iter().map(|d| d.argmax(policy)).collect();
            Ok(majority_vote(&labels, policy)?.winner)
        }
        FusionMode::Soft => Ok(average_probabilities(dists, policy)?.1),
    }
}

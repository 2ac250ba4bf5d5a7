//! Target difficulty distributions: empirical (from a graded evaluation
//! set), curriculum (from strictly decreasing level weights), or loaded from
//! another run's `distribution.json`.

use std::path::Path;

use crate::domain::{
    CurriculumSpec, DifficultyDistribution, DistributionKind, GradedQuestion, Level, Record,
    ValidationError,
};
use crate::jsonl::{self, JsonlError};

#[derive(Debug, thiserror::Error)]
pub enum DistributionError {
    #[error("cannot build a distribution from zero graded questions")]
    Empty,
    #[error("invalid curriculum: {0}")]
    Curriculum(ValidationError),
    #[error(transparent)]
    File(#[from] JsonlError),
}

/// Label frequencies of a graded evaluation set.
pub fn build_eval_distribution(
    graded: &[GradedQuestion],
) -> Result<DifficultyDistribution, DistributionError> {
    if graded.is_empty() {
        return Err(DistributionError::Empty);
    }
    let counts = label_counts(graded.iter().map(GradedQuestion::level));
    Ok(distribution_from_counts(DistributionKind::Eval, &counts))
}

pub fn label_counts(levels: impl IntoIterator<Item = Level>) -> [usize; 6] {
    let mut counts = [0usize; 6];
    for l in levels {
        counts[l.index()] += 1;
    }
    counts
}

pub(crate) fn distribution_from_counts(
    kind: DistributionKind,
    counts: &[usize; 6],
) -> DifficultyDistribution {
    let total: usize = counts.iter().sum();
    let mut probs = [0.0; 6];
    for (p, c) in probs.iter_mut().zip(counts) {
        *p = *c as f64 / total as f64;
    }
    DifficultyDistribution { kind, probs }
}

/// `p(L_i) = w_i / (sum(w) + easy_weight)`, `p(Easy) = easy_weight / (sum(w) + easy_weight)`.
pub fn build_curriculum_distribution(
    spec: &CurriculumSpec,
) -> Result<DifficultyDistribution, DistributionError> {
    spec.validate().map_err(DistributionError::Curriculum)?;
    let total: f64 = spec.weights.iter().sum::<f64>() + spec.easy_weight;
    let mut probs = [0.0; 6];
    probs[Level::Easy.index()] = spec.easy_weight / total;
    for (level, w) in Level::GRADED.iter().zip(spec.weights) {
        probs[level.index()] = w / total;
    }
    let dist = DifficultyDistribution {
        kind: DistributionKind::Curriculum,
        probs,
    };
    debug_assert!(dist.validate().is_ok());
    Ok(dist)
}

/// Load a distribution produced elsewhere (e.g. by another base model).
pub fn load_external_distribution(
    path: &Path,
) -> Result<DifficultyDistribution, DistributionError> {
    let mut dist: DifficultyDistribution = jsonl::read_json(path)?;
    dist.kind = DistributionKind::External;
    Ok(dist)
}

/// Parse `"5,4,3,2,1"` into five weights.
pub fn parse_weights(s: &str) -> Result<[f64; 5], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad weight '{p}': {e}"))
        })
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected exactly 5 weights, got {}", v.len()))
}

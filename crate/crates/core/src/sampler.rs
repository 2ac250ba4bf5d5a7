//! Draws a question set whose label mix follows a target distribution.
//!
//! Per-label quotas are fixed by largest-remainder apportionment of `n`;
//! within each label, questions are drawn uniformly without replacement by a
//! partial Fisher-Yates shuffle driven by ChaCha8 seeded from `seed`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{DifficultyDistribution, GradedQuestion, Level};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shortfall {
    /// Move unmet quota onto labels that still have questions.
    #[default]
    Redistribute,
    /// Return fewer than `n`.
    Truncate,
    Fail,
}

impl FromStr for Shortfall {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "redistribute" => Ok(Shortfall::Redistribute),
            "truncate" => Ok(Shortfall::Truncate),
            "fail" => Ok(Shortfall::Fail),
            other => Err(format!(
                "unknown shortfall policy '{other}' (expected redistribute, truncate or fail)"
            )),
        }
    }
}

impl fmt::Display for Shortfall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shortfall::Redistribute => "redistribute",
            Shortfall::Truncate => "truncate",
            Shortfall::Fail => "fail",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("sample size must be at least 1")]
    ZeroSize,
    #[error("cannot sample from an empty database")]
    EmptyDatabase,
    #[error("requested {requested} questions but the database holds only {available}")]
    NotEnough { requested: usize, available: usize },
    #[error("label {label} needs {quota} questions but only {available} are available")]
    BucketShort {
        label: Level,
        quota: usize,
        available: usize,
    },
}

/// Largest-remainder apportionment of `n` over `weights` (need not sum to 1;
/// all-zero weights yield all-zero quotas). Ties go to the earlier label.
pub fn apportion(n: usize, weights: &[f64; 6]) -> [usize; 6] {
    let total: f64 = weights.iter().sum();
    let mut quotas = [0usize; 6];
    if n == 0 || total <= 0.0 {
        return quotas;
    }
    let mut remainders = [0.0f64; 6];
    for i in 0..6 {
        let mut exact = n as f64 * weights[i] / total;
        if (exact - exact.round()).abs() < 1e-9 {
            exact = exact.round();
        }
        quotas[i] = exact.floor() as usize;
        remainders[i] = exact - exact.floor();
    }
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..6).filter(|i| weights[*i] > 0.0).collect();
    order.sort_by(|a, b| remainders[*b].total_cmp(&remainders[*a]).then(a.cmp(b)));
    for i in order.into_iter().cycle().take(n.saturating_sub(assigned)) {
        quotas[i] += 1;
    }
    quotas
}

/// Final per-label quotas after applying the shortfall policy.
pub fn plan_quotas(
    n: usize,
    dist: &DifficultyDistribution,
    available: &[usize; 6],
    policy: Shortfall,
) -> Result<[usize; 6], SampleError> {
    let mut quotas = apportion(n, &dist.probs);
    match policy {
        Shortfall::Fail => {
            for level in Level::ALL {
                let i = level.index();
                if quotas[i] > available[i] {
                    return Err(SampleError::BucketShort {
                        label: level,
                        quota: quotas[i],
                        available: available[i],
                    });
                }
            }
        }
        Shortfall::Truncate => {
            for i in 0..6 {
                quotas[i] = quotas[i].min(available[i]);
            }
        }
        Shortfall::Redistribute => loop {
            let mut excess = 0;
            for i in 0..6 {
                if quotas[i] > available[i] {
                    excess += quotas[i] - available[i];
                    quotas[i] = available[i];
                }
            }
            if excess == 0 {
                break;
            }
            let open: Vec<usize> = (0..6).filter(|i| quotas[*i] < available[*i]).collect();
            if open.is_empty() {
                break;
            }
            let mut weights = [0.0; 6];
            for &i in &open {
                weights[i] = dist.probs[i];
            }
            if weights.iter().sum::<f64>() <= 0.0 {
                // no target mass left anywhere open: spread by spare capacity
                for &i in &open {
                    weights[i] = (available[i] - quotas[i]) as f64;
                }
            }
            let extra = apportion(excess, &weights);
            for i in 0..6 {
                quotas[i] += extra[i];
            }
        },
    }
    Ok(quotas)
}

/// Draw `n` questions from `db` following `dist`.
///
/// Output is grouped by label (Easy, L1..L5), each group in draw order.
/// Duplicate ids in `db` are collapsed to their first occurrence.
pub fn sample(
    db: &[GradedQuestion],
    dist: &DifficultyDistribution,
    n: usize,
    seed: u64,
    policy: Shortfall,
) -> Result<Vec<GradedQuestion>, SampleError> {
    if n == 0 {
        return Err(SampleError::ZeroSize);
    }
    if db.is_empty() {
        return Err(SampleError::EmptyDatabase);
    }
    let mut seen = HashSet::new();
    let mut buckets: [Vec<&GradedQuestion>; 6] = Default::default();
    for g in db {
        if seen.insert(g.id()) {
            buckets[g.level().index()].push(g);
        }
    }
    let supply = seen.len();
    if n > supply && policy != Shortfall::Truncate {
        return Err(SampleError::NotEnough {
            requested: n,
            available: supply,
        });
    }
    let available: [usize; 6] = std::array::from_fn(|i| buckets[i].len());
    let quotas = plan_quotas(n, dist, &available, policy)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(quotas.iter().sum());
    for (bucket, quota) in buckets.iter_mut().zip(quotas) {
        // partial Fisher-Yates: the first `quota` slots become the draw
        for i in 0..quota {
            let j = rng.random_range(i..bucket.len());
            bucket.swap(i, j);
        }
        out.extend(bucket[..quota].iter().map(|g| (*g).clone()));
    }
    Ok(out)
}

/// L1 distance between the sample's label mix and the target.
pub fn check_fit(samples: &[GradedQuestion], dist: &DifficultyDistribution) -> f64 {
    if samples.is_empty() {
        return dist.probs.iter().sum();
    }
    let counts = crate::distribution::label_counts(samples.iter().map(GradedQuestion::level));
    let n = samples.len() as f64;
    counts
        .iter()
        .zip(dist.probs)
        .map(|(c, p)| (*c as f64 / n - p).abs())
        .sum()
}

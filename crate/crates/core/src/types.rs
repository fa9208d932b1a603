//! Domain types shared by all modules.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::scalar::Real;

/// One member of a symmetric input bag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    /// 0-based index, unique within a task.
    pub id: usize,
    pub text: String,
    /// Number of tokens the backend tokenizer assigns to `text` (>= 1).
    pub token_len: usize,
}

impl Element {
    pub fn new(id: usize, text: impl Into<String>, token_len: usize) -> Self {
        assert!(token_len >= 1, "token_len must be positive");
        Element {
            id,
            text: text.into(),
            token_len,
        }
    }
}

/// Answer produced by an oracle or parsed from an LLM reply.
///
/// Counts are kept as `f64`: real replies occasionally contain fractional
/// values and the distance functions are real-valued anyway.
#[derive(Debug, Clone, PartialEq)]
pub enum Answer {
    Count(f64),
    Counts(BTreeMap<String, f64>),
    Text(String),
}

/// Ground-truth answer function for a task, evaluable on any sub-bag of the
/// task's elements. Implementations must be permutation-invariant: the
/// answer depends only on which elements are present.
pub trait Oracle: Send + Sync {
    /// Answer the task query over the given (retained) elements.
    fn answer(&self, retained: &[&Element]) -> Answer;

    /// Distance between a reply and the correct answer.
    fn distance(&self, reply: &Answer, truth: &Answer) -> f64;
}

/// A symmetric task: a bag of elements plus a natural-language query and a
/// ground-truth oracle.
#[derive(Clone)]
pub struct Task {
    pub elements: Vec<Element>,
    pub query: String,
    pub oracle: Arc<dyn Oracle>,
}

impl Task {
    pub fn n(&self) -> usize {
        self.elements.len()
    }

    pub fn token_lens(&self) -> Vec<usize> {
        self.elements.iter().map(|e| e.token_len).collect()
    }

    pub fn total_tokens(&self) -> usize {
        self.elements.iter().map(|e| e.token_len).sum()
    }

    /// Oracle answer over the full bag.
    pub fn truth_answer(&self) -> Answer {
        let all: Vec<&Element> = self.elements.iter().collect();
        self.oracle.answer(&all)
    }

    /// Error of a reply against the full-bag truth.
    pub fn error_of(&self, reply: &Answer) -> f64 {
        self.oracle.distance(reply, &self.truth_answer())
    }
}

impl std::fmt::Debug for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Task")
            .field("n", &self.n())
            .field("query", &self.query)
            .finish()
    }
}

/// How a relevance vector was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceMethod {
    Warmup,
    Bipartite,
    GroundTruth,
    Random,
}

/// Per-element relevance scores in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceVector<F> {
    pub scores: Vec<F>,
    pub method: RelevanceMethod,
}

impl<F: Real> RelevanceVector<F> {
    pub fn new(scores: Vec<F>, method: RelevanceMethod) -> Self {
        debug_assert!(scores
            .iter()
            .all(|s| *s >= F::zero() && *s <= F::one()));
        RelevanceVector { scores, method }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Per-token-position exposure weights of a target LLM, with uncertainty.
///
/// `values[i]` is the weight of 1-based token position `i + 1`. Variances
/// are reported on the unnormalized fit scale; `df` is the residual degrees
/// of freedom of the fit (0 for synthetic profiles).
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureProfile<F> {
    pub values: Vec<F>,
    pub variances: Vec<F>,
    pub df: usize,
    /// True when `values` sum to 1.
    pub normalized: bool,
    /// Set when a variance target could not be met within the sample budget.
    pub target_not_met: bool,
}

impl<F: Real> ExposureProfile<F> {
    pub fn from_values(values: Vec<F>) -> Self {
        let n = values.len();
        ExposureProfile {
            values,
            variances: vec![F::zero(); n],
            df: 0,
            normalized: false,
            target_not_met: false,
        }
    }

    /// Flat profile of `n` positions summing to 1.
    pub fn uniform(n: usize) -> Self {
        let w = F::one() / F::from_usize_(n);
        let mut p = Self::from_values(vec![w; n]);
        p.normalized = true;
        p
    }

    /// The paper-style 1/i profile over 1-based positions (unnormalized,
    /// so utilities match the worked values like 1 + 1/2 + 1/3).
    pub fn inverse_rank(n: usize) -> Self {
        Self::from_values(
            (1..=n)
                .map(|i| F::one() / F::from_usize_(i))
                .collect(),
        )
    }

    /// Bell-shaped profile peaking mid-prompt (the retention pattern some
    /// models show: early and late tokens are forgotten more often).
    pub fn hump(n: usize) -> Self {
        Self::from_values(hump_shape(n).into_iter().map(F::from_f64_).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_variance(&self) -> F {
        self.variances
            .iter()
            .cloned()
            .fold(F::zero(), |a, b| a.max(b))
    }

    /// Rescale values to sum to 1 (variances scale by the square).
    pub fn normalize(mut self) -> Self {
        let sum: F = self.values.iter().cloned().sum();
        if sum > F::zero() {
            let inv = F::one() / sum;
            for v in &mut self.values {
                *v = *v * inv;
            }
            for v in &mut self.variances {
                *v = *v * inv * inv;
            }
        }
        self.normalized = true;
        self
    }

    /// Linearly interpolate the profile onto `len` positions. Used when a
    /// discovered profile is shorter or longer than an arrangement needs.
    pub fn resampled(&self, len: usize) -> Self {
        assert!(!self.values.is_empty() && len >= 1);
        let n = self.values.len();
        if n == len {
            return self.clone();
        }
        let lerp = |src: &[F]| -> Vec<F> {
            (0..len)
                .map(|i| {
                    if n == 1 {
                        return src[0];
                    }
                    let t = F::from_usize_(i) * F::from_usize_(n - 1)
                        / F::from_usize_(len.max(2) - 1);
                    let lo = t.floor();
                    let k = lo.to_usize().unwrap_or(0).min(n - 1);
                    let frac = t - lo;
                    if k + 1 < n {
                        src[k] * (F::one() - frac) + src[k + 1] * frac
                    } else {
                        src[k]
                    }
                })
                .collect()
        };
        ExposureProfile {
            values: lerp(&self.values),
            variances: lerp(&self.variances),
            df: self.df,
            normalized: false,
            target_not_met: self.target_not_met,
        }
    }
}

/// Shared hump shape on [0.15, 0.95], used both for synthetic profiles and
/// simulator ground truths.
pub(crate) fn hump_shape(n: usize) -> Vec<f64> {
    let c = (n.max(1) - 1) as f64 / 2.0;
    let s = (n as f64 / 6.0).max(1.0);
    (0..n)
        .map(|i| {
            let d = i as f64 - c;
            0.15 + 0.8 * (-d * d / (2.0 * s * s)).exp()
        })
        .collect()
}

/// A permutation of element indices with its computed expected utility.
/// `perm[i]` is the id of the element placed at slot `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking<F> {
    pub perm: Vec<usize>,
    pub utility: F,
}

//! Exposure discovery: estimate the per-position exposure profile of a
//! target LLM from token-counting probes, with uncertainty quantification
//! and an exponential sample-doubling budget.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backend::prompts::probe_request;
use crate::backend::{bounded_map, parse::parse_count_reply, LlmBackend};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Qr};
use crate::scalar::Real;
use crate::seed;
use crate::types::{Answer, Element, ExposureProfile, Oracle, Task};

/// Default length of the tracked-token run placed at consecutive positions.
pub const DEFAULT_WINDOW: usize = 10;

/// Error floor: count errors of a real counting task are integers, so one
/// half is below any achievable nonzero error.
pub const ERROR_FLOOR: f64 = 0.5;

/// Condition-number bound on the design matrix (the normal matrix bound of
/// 1e12 corresponds to 1e6 on the factor diagonal).
const MAX_DESIGN_CONDITION: f64 = 1e6;

/// Oracle for counting probes: the answer is the census of the retained
/// tokens, the distance is the total absolute count error.
pub struct TokenCountOracle;

impl Oracle for TokenCountOracle {
    fn answer(&self, retained: &[&Element]) -> Answer {
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for e in retained {
            *counts.entry(e.text.clone()).or_insert(0.0) += 1.0;
        }
        Answer::Counts(counts)
    }

    fn distance(&self, reply: &Answer, truth: &Answer) -> f64 {
        match (reply, truth) {
            (Answer::Counts(got), Answer::Counts(want)) => {
                let mut err = 0.0;
                for (tok, t) in want {
                    err += (got.get(tok).copied().unwrap_or(0.0) - t).abs();
                }
                err
            }
            _ => f64::INFINITY,
        }
    }
}

/// A token-counting probe: single-token elements over a small alphabet,
/// with the exact census as ground truth. One token type is `tracked`; its
/// occurrences are placed as runs during sampling and form the binary
/// design rows of the fit.
pub struct ProbeTask {
    pub task: Task,
    pub counts: BTreeMap<String, f64>,
    pub tracked: String,
}

impl ProbeTask {
    /// Build a probe from an explicit token multiset; counts are the exact
    /// census of `tokens`.
    pub fn from_tokens(tokens: Vec<String>, tracked: impl Into<String>) -> Self {
        let tracked = tracked.into();
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for t in &tokens {
            *counts.entry(t.clone()).or_insert(0.0) += 1.0;
        }
        let elements = tokens
            .into_iter()
            .enumerate()
            .map(|(i, t)| Element::new(i, t, 1))
            .collect();
        ProbeTask {
            task: Task {
                elements,
                query: crate::backend::prompts::PROBE_QUERY.to_string(),
                oracle: Arc::new(TokenCountOracle),
            },
            counts,
            tracked,
        }
    }

    pub fn n(&self) -> usize {
        self.task.n()
    }

    pub fn tracked_count(&self) -> usize {
        self.counts.get(&self.tracked).copied().unwrap_or(0.0) as usize
    }
}

fn symbol(k: usize) -> String {
    if k < 26 {
        ((b'a' + k as u8) as char).to_string()
    } else {
        format!("t{k}")
    }
}

/// Generate a probe of `n` tokens over an alphabet of `a` symbols with
/// seeded multiplicities. Symbol 0 is tracked and receives up to
/// [`DEFAULT_WINDOW`] occurrences (all of them when `a == 1`).
pub fn make_probe(alphabet: usize, n: usize, seed: u64) -> ProbeTask {
    make_probe_with_window(alphabet, n, DEFAULT_WINDOW, seed)
}

pub fn make_probe_with_window(alphabet: usize, n: usize, window: usize, seed: u64) -> ProbeTask {
    assert!(alphabet >= 1 && n >= alphabet, "need a >= 1 and n >= a");
    let tracked = symbol(0);
    let mut tokens = Vec::with_capacity(n);
    if alphabet == 1 {
        tokens = vec![tracked.clone(); n];
    } else {
        let w = window.clamp(1, n - (alphabet - 1));
        tokens.extend(std::iter::repeat_n(tracked.clone(), w));
        // Every other symbol appears at least once; the rest is seeded.
        for k in 1..alphabet {
            tokens.push(symbol(k));
        }
        let mut rng = seed::rng(seed);
        while tokens.len() < n {
            tokens.push(symbol(rng.random_range(1..alphabet)));
        }
    }
    ProbeTask::from_tokens(tokens, tracked)
}

/// One probed permutation: the arrangement, the binary row marking tracked
/// positions, and the floored inverse error of the LLM's reply.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureSample<F> {
    pub perm: Vec<usize>,
    pub rel_row: Vec<bool>,
    pub inv_error: F,
}

/// Arrangement for sample `j`: a run of the tracked token at a seeded
/// start, remaining tracked occurrences scattered among the shuffled
/// fillers. Depends only on `(seed, j)`, so sample prefixes are reused
/// across budget doublings.
fn sample_arrangement(probe: &ProbeTask, sample_seed: u64) -> (Vec<usize>, Vec<bool>) {
    let n = probe.n();
    let mut rng = seed::rng(sample_seed);
    let tracked_idx: Vec<usize> = probe
        .task
        .elements
        .iter()
        .filter(|e| e.text == probe.tracked)
        .map(|e| e.id)
        .collect();
    let w = tracked_idx.len().max(1);
    let run_len = rng.random_range(1..=w.min(n));
    let start = rng.random_range(0..=(n - run_len));

    let mut rest: Vec<usize> = probe
        .task
        .elements
        .iter()
        .map(|e| e.id)
        .filter(|id| !tracked_idx[..run_len].contains(id))
        .collect();
    rest.shuffle(&mut rng);

    let mut perm = vec![usize::MAX; n];
    for (offset, &idx) in tracked_idx[..run_len].iter().enumerate() {
        perm[start + offset] = idx;
    }
    let mut it = rest.into_iter();
    for slot in perm.iter_mut() {
        if *slot == usize::MAX {
            *slot = it.next().expect("exactly n ids");
        }
    }
    let rel_row = perm
        .iter()
        .map(|&idx| probe.task.elements[idx].text == probe.tracked)
        .collect();
    (perm, rel_row)
}

fn take_samples(
    llm: &LlmBackend,
    probe: &ProbeTask,
    range: std::ops::Range<usize>,
    seed: u64,
) -> Result<Vec<ExposureSample<f64>>> {
    let jobs: Vec<usize> = range.collect();
    let results = bounded_map(llm.parallelism, jobs, |_, j| {
        let (perm, rel_row) = sample_arrangement(probe, seed::derive(seed, j as u64));
        let texts: Vec<&str> = perm
            .iter()
            .map(|&idx| probe.task.elements[idx].text.as_str())
            .collect();
        let req = probe_request(&texts);
        let reply = llm.complete(&req).map_err(|e| Error::BackendUnavailable {
            reason: format!("probe permutation {j}: {e}"),
        })?;
        let reported = parse_count_reply(&reply.text)?;
        // The sample's signal is the tracked token's count error: that is
        // the sub-problem whose relevant positions the row marks. The other
        // tokens anchor the rest of the prompt.
        let truth = probe.counts.get(&probe.tracked).copied().unwrap_or(0.0);
        let eps = (reported.get(&probe.tracked).copied().unwrap_or(0.0) - truth).abs();
        Ok::<_, Error>(ExposureSample {
            perm,
            rel_row,
            inv_error: 1.0 / eps.max(ERROR_FLOOR),
        })
    });
    results.into_iter().collect()
}

/// Query the LLM on `p` seeded permutations of the probe and record one
/// [`ExposureSample`] per permutation, with the tracked token's count error
/// as the probed signal.
pub fn sample_errors(
    llm: &LlmBackend,
    probe: &ProbeTask,
    p: usize,
    seed: u64,
) -> Result<Vec<ExposureSample<f64>>> {
    if p == 0 {
        return Err(Error::Underdetermined { p: 0, n: probe.n() });
    }
    take_samples(llm, probe, 0..p, seed)
}

/// Least-squares exposure fit.
///
/// Solves `R^T x = inv_errors` by Householder QR; per-coordinate variances
/// are `ssr/df * [(R R^T)^{-1}]_ii` on the raw fit scale (kept raw so that
/// variance targets are independent of the normalization). Negative
/// estimates are clamped to zero and values are normalized to sum 1; the
/// profile is only identified up to a positive scale.
pub fn estimate_profile<F: Real>(samples: &[ExposureSample<F>]) -> Result<ExposureProfile<F>> {
    let p = samples.len();
    let n = samples.first().map_or(0, |s| s.rel_row.len());
    if p < n || n == 0 {
        return Err(Error::Underdetermined { p, n });
    }
    let mut design = Matrix::zeros(p, n);
    let mut rhs = Vec::with_capacity(p);
    for (r, s) in samples.iter().enumerate() {
        assert_eq!(s.rel_row.len(), n, "inconsistent sample width");
        for (c, &on) in s.rel_row.iter().enumerate() {
            if on {
                design.set(r, c, F::one());
            }
        }
        rhs.push(s.inv_error);
    }
    let qr = Qr::factor(design.clone())?;
    if qr.diag_condition() > F::from_f64_(MAX_DESIGN_CONDITION) {
        return Err(Error::SingularDesign);
    }
    let x = qr.solve(&rhs);

    let fitted = design.mul_vec(&x);
    let ssr: F = fitted
        .iter()
        .zip(&rhs)
        .map(|(&f, &y)| (f - y) * (f - y))
        .sum();
    let df = p - n;
    let sigma_sq = if df > 0 {
        ssr / F::from_usize_(df)
    } else {
        F::zero()
    };
    let variances: Vec<F> = qr
        .normal_inverse_diag()
        .into_iter()
        .map(|d| sigma_sq * d)
        .collect();

    let clamped: Vec<F> = x.into_iter().map(|v| v.max(F::zero())).collect();
    let sum: F = clamped.iter().cloned().sum();
    let values = if sum > F::zero() {
        clamped.into_iter().map(|v| v / sum).collect()
    } else {
        clamped
    };
    Ok(ExposureProfile {
        values,
        variances,
        df,
        normalized: true,
        target_not_met: false,
    })
}

/// Exposure discovery with a variance target: start from `p0` samples and
/// double the budget (reusing earlier samples) until the largest
/// per-coordinate variance drops below `target_var` or doubling would
/// exceed `p_max`. An unmet target is reported on the profile, not as an
/// error.
pub fn estimate_with_confidence(
    llm: &LlmBackend,
    probe: &ProbeTask,
    target_var: f64,
    p0: usize,
    p_max: usize,
    seed: u64,
) -> Result<ExposureProfile<f64>> {
    let n = probe.n();
    if p0 < n + 1 {
        return Err(Error::Underdetermined { p: p0, n });
    }
    let mut samples = sample_errors(llm, probe, p0, seed)?;
    let mut profile = estimate_profile(&samples)?;
    while profile.max_variance() > target_var && 2 * samples.len() <= p_max {
        let p = samples.len();
        samples.extend(take_samples(llm, probe, p..2 * p, seed)?);
        profile = estimate_profile(&samples)?;
    }
    profile.target_not_met = profile.max_variance() > target_var;
    Ok(profile)
}

/// Per-slot mean token exposure of each element's contiguous block under an
/// arrangement.
pub fn element_profile<F: Real>(
    prof: &ExposureProfile<F>,
    lens: &[usize],
    arrangement: &[usize],
) -> Result<Vec<F>> {
    let needed: usize = lens.iter().sum();
    if prof.len() < needed {
        return Err(Error::ProfileTooShort {
            needed,
            have: prof.len(),
        });
    }
    Ok(crate::rank::token_blocks(arrangement, lens)
        .into_iter()
        .map(|(offset, len)| {
            let sum: F = prof.values[offset..offset + len].iter().cloned().sum();
            sum / F::from_usize_(len)
        })
        .collect())
}

/// On-disk form of a discovered profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileDocument {
    pub llm_id: String,
    pub n_positions: usize,
    pub values: Vec<f64>,
    pub variances: Vec<f64>,
    pub df: usize,
    pub created_at: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub target_not_met: bool,
}

impl ProfileDocument {
    pub fn from_profile(
        profile: &ExposureProfile<f64>,
        llm_id: impl Into<String>,
        created_at: impl Into<String>,
    ) -> Self {
        ProfileDocument {
            llm_id: llm_id.into(),
            n_positions: profile.len(),
            values: profile.values.clone(),
            variances: profile.variances.clone(),
            df: profile.df,
            created_at: created_at.into(),
            target_not_met: profile.target_not_met,
        }
    }

    pub fn to_profile(&self) -> ExposureProfile<f64> {
        let sum: f64 = self.values.iter().sum();
        ExposureProfile {
            values: self.values.clone(),
            variances: self.variances.clone(),
            df: self.df,
            normalized: (sum - 1.0).abs() < 1e-9,
            target_not_met: self.target_not_met,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("profile serialization: {e}")))?;
        std::fs::write(path, body + "\n").map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&body)
            .map_err(|e| Error::Config(format!("{}: bad profile document: {e}", path.display())))
    }
}

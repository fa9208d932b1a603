//! Deterministic simulated LLM.
//!
//! The simulator is a test double for both roles in the pipeline: the
//! target model (answers task queries, forgetting input tokens according to
//! a ground-truth exposure profile) and the helper model (selects or scores
//! relevant elements with a per-evaluation multiplicative bias).
//!
//! All randomness is derived from `(config.seed, stable salts)`, never from
//! call order, so outcomes are identical at any parallelism level:
//! - token retention is drawn once per (seed, token position), so two
//!   arrangements that place the same elements on the same positions see
//!   the same misses (common random numbers across methods);
//! - per-evaluation bias is keyed by the evaluation tag in the prompt;
//! - score noise is keyed by (seed, evaluation, element).

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::backend::prompts::{parse_element_ids, parse_eval_tag};
use crate::backend::{ChatReply, ChatRequest};
use crate::error::{Error, Result};
use crate::seed;
use crate::types::{Answer, Element, Oracle, Task};

const SALT_RETENTION: u64 = 0x5245_5441_494e;
const SALT_BIAS: u64 = 0x4249_4153;
const SALT_SCORE_NOISE: u64 = 0x4e4f_4953_45;
const SALT_PROBE_NOISE: u64 = 0x5052_4f42_45;
const SALT_SELECT_MISS: u64 = 0x4d49_5353;

/// Utilization floor of the reciprocal error model; errors saturate below it.
const UTILIZATION_FLOOR: f64 = 1e-9;

/// How the simulated target loses input content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissModel {
    /// Each token is retained independently with probability
    /// `exposure_truth[position]`; the answer is computed on the retained
    /// sub-bag.
    BernoulliPerToken,
    /// Reciprocal-utilization model for counting probes: the reported count
    /// of the tracked token is off by `1 / max(utilization, floor)` where
    /// utilization is the exposure mass under the tracked positions. This
    /// is the regime the inverse-error exposure fit assumes.
    Threshold,
}

/// Distribution of the per-evaluation helper bias coefficient.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasLaw {
    Constant(f64),
    LogUniform { lo: f64, hi: f64 },
}

impl BiasLaw {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            BiasLaw::Constant(b) => b,
            BiasLaw::LogUniform { lo, hi } => {
                let u: f64 = rng.random();
                (lo.ln() + u * (hi.ln() - lo.ln())).exp()
            }
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SimulatorConfig {
    /// Ground-truth per-token-position retention profile.
    pub exposure_truth: Vec<f64>,
    pub miss_model: MissModel,
    pub helper_bias_law: BiasLaw,
    /// Std of the additive noise on helper scores (on the 1..5 scale).
    pub score_noise_std: f64,
    /// Relative std of the noise on probe utilization (threshold model).
    pub probe_noise_std: f64,
    /// Per-element false-negative rate of the helper's selection replies.
    pub helper_miss_rate: f64,
    pub seed: u64,
}

impl SimulatorConfig {
    pub fn new(exposure_truth: Vec<f64>, seed: u64) -> Self {
        SimulatorConfig {
            exposure_truth,
            miss_model: MissModel::BernoulliPerToken,
            helper_bias_law: BiasLaw::Constant(1.0),
            score_noise_std: 0.0,
            probe_noise_std: 0.0,
            helper_miss_rate: 0.0,
            seed,
        }
    }

    fn exposure_at(&self, pos: usize) -> Result<f64> {
        self.exposure_truth.get(pos).copied().ok_or_else(|| {
            Error::BackendUnavailable {
                reason: format!(
                    "simulator exposure truth covers {} positions, prompt needs {}",
                    self.exposure_truth.len(),
                    pos + 1
                ),
            }
        })
    }

    /// Retention draw for one token position (fixed per seed).
    fn retained(&self, pos: usize) -> Result<bool> {
        let x = self.exposure_at(pos)?.clamp(0.0, 1.0);
        let mut rng = seed::rng(seed::derive(seed::derive(self.seed, SALT_RETENTION), pos as u64));
        Ok(rng.random_bool(x))
    }
}

/// Standard normal via Box-Muller.
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// What the simulated model is a stand-in for.
#[derive(Clone)]
pub enum SimWorld {
    /// Target model answering a task query over arranged elements.
    Target {
        elements: Vec<Element>,
        oracle: Arc<dyn Oracle>,
    },
    /// Target model answering a token-counting probe.
    Probe {
        counts: BTreeMap<String, f64>,
        tracked: String,
    },
    /// Helper model judging element relevance against a fixed truth.
    Helper { truth: Vec<f64> },
}

#[derive(Clone)]
pub struct SimulatedLlm {
    pub config: SimulatorConfig,
    pub world: SimWorld,
}

impl SimulatedLlm {
    pub fn target(config: SimulatorConfig, task: &Task) -> Self {
        SimulatedLlm {
            config,
            world: SimWorld::Target {
                elements: task.elements.clone(),
                oracle: Arc::clone(&task.oracle),
            },
        }
    }

    pub fn probe(config: SimulatorConfig, counts: BTreeMap<String, f64>, tracked: String) -> Self {
        SimulatedLlm {
            config,
            world: SimWorld::Probe { counts, tracked },
        }
    }

    pub fn helper(config: SimulatorConfig, truth: Vec<f64>) -> Self {
        SimulatedLlm {
            config,
            world: SimWorld::Helper { truth },
        }
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<ChatReply> {
        let text = match &self.world {
            SimWorld::Helper { truth } => self.helper_reply(req, truth)?,
            SimWorld::Target { elements, oracle } => self.target_reply(req, elements, oracle)?,
            SimWorld::Probe { counts, tracked } => self.probe_reply(req, counts, tracked)?,
        };
        Ok(ChatReply {
            text,
            prompt_tokens: req
                .messages
                .iter()
                .map(|m| m.text.split_whitespace().count())
                .sum(),
            completion_tokens: 0,
        })
    }

    fn helper_reply(&self, req: &ChatRequest, truth: &[f64]) -> Result<String> {
        let prompt = &req
            .messages
            .first()
            .ok_or_else(|| Error::BackendUnavailable {
                reason: "empty request".into(),
            })?
            .text;
        let ids = parse_element_ids(prompt);
        if let Some(eval_id) = parse_eval_tag(prompt) {
            let scores = simulate_helper_scores(&self.config, &ids, truth, eval_id);
            Ok(scores
                .iter()
                .map(|(id, s)| format!("{id}: {s}"))
                .collect::<Vec<_>>()
                .join("\n"))
        } else {
            let digest = req.digest();
            let mut named = Vec::new();
            for &id in &ids {
                let relevant = truth.get(id).copied().unwrap_or(0.0) >= 0.5;
                if !relevant {
                    continue;
                }
                let mut rng = seed::rng(seed::derive(
                    seed::derive(seed::derive(self.config.seed, SALT_SELECT_MISS), digest),
                    id as u64,
                ));
                if self.config.helper_miss_rate > 0.0
                    && rng.random_bool(self.config.helper_miss_rate.clamp(0.0, 1.0))
                {
                    continue;
                }
                named.push(id.to_string());
            }
            if named.is_empty() {
                Ok("ids: none".to_string())
            } else {
                Ok(format!("ids: {}", named.join(", ")))
            }
        }
    }

    fn target_reply(
        &self,
        req: &ChatRequest,
        elements: &[Element],
        oracle: &Arc<dyn Oracle>,
    ) -> Result<String> {
        let listing = &req
            .messages
            .first()
            .ok_or_else(|| Error::BackendUnavailable {
                reason: "empty request".into(),
            })?
            .text;
        let order = parse_element_ids(listing);
        let retained = retained_elements(&self.config, elements, &order)?;
        Ok(answer_to_text(&oracle.answer(&retained)))
    }

    fn probe_reply(
        &self,
        req: &ChatRequest,
        counts: &BTreeMap<String, f64>,
        tracked: &str,
    ) -> Result<String> {
        let listing = &req
            .messages
            .first()
            .ok_or_else(|| Error::BackendUnavailable {
                reason: "empty request".into(),
            })?
            .text;
        let tokens: Vec<&str> = listing.split_whitespace().collect();
        let reported = match self.config.miss_model {
            MissModel::BernoulliPerToken => {
                let mut seen: BTreeMap<String, f64> = BTreeMap::new();
                for (pos, tok) in tokens.iter().enumerate() {
                    if self.config.retained(pos)? {
                        *seen.entry((*tok).to_string()).or_insert(0.0) += 1.0;
                    }
                }
                // Tokens fully forgotten still get a zero line.
                for tok in counts.keys() {
                    seen.entry(tok.clone()).or_insert(0.0);
                }
                seen
            }
            MissModel::Threshold => {
                let mut utilization = 0.0;
                for (pos, tok) in tokens.iter().enumerate() {
                    if *tok == tracked {
                        utilization += self.config.exposure_at(pos)?;
                    }
                }
                if self.config.probe_noise_std > 0.0 {
                    let mut rng = seed::rng(seed::derive(
                        seed::derive(self.config.seed, SALT_PROBE_NOISE),
                        req.digest(),
                    ));
                    utilization *= 1.0 + self.config.probe_noise_std * gauss(&mut rng);
                }
                let err = 1.0 / utilization.max(UTILIZATION_FLOOR);
                let mut reported = counts.clone();
                if let Some(c) = reported.get_mut(tracked) {
                    *c += err;
                }
                reported
            }
        };
        Ok(reported
            .iter()
            .map(|(tok, c)| format!("{tok}: {c}"))
            .collect::<Vec<_>>()
            .join("\n"))
    }
}

/// Retained sub-bag under the per-token retention draw: an element survives
/// iff every token of its block survives. `order` gives the arrangement as
/// element ids; blocks are consecutive in that order.
fn retained_elements<'a>(
    config: &SimulatorConfig,
    elements: &'a [Element],
    order: &[usize],
) -> Result<Vec<&'a Element>> {
    let by_id: BTreeMap<usize, &Element> = elements.iter().map(|e| (e.id, e)).collect();
    let mut retained = Vec::new();
    let mut pos = 0usize;
    for &id in order {
        let el = by_id.get(&id).ok_or_else(|| Error::BackendUnavailable {
            reason: format!("unknown element id {id} in prompt"),
        })?;
        let mut keep = true;
        for p in pos..pos + el.token_len {
            if !config.retained(p)? {
                keep = false;
            }
        }
        if keep {
            retained.push(*el);
        }
        pos += el.token_len;
    }
    Ok(retained)
}

/// Answer of the simulated target for a task under an arrangement: tokens
/// are dropped according to the retention profile and the oracle is
/// evaluated on the surviving sub-bag.
pub fn simulate_answer(
    config: &SimulatorConfig,
    task: &Task,
    arrangement: &[usize],
) -> Result<Answer> {
    let retained = retained_elements(config, &task.elements, arrangement)?;
    Ok(task.oracle.answer(&retained))
}

/// Helper scores for one evaluation round: a bias coefficient is drawn once
/// per `eval_id`, then each element's true relevance is scaled, jittered and
/// quantized onto the 1..5 scale.
pub fn simulate_helper_scores(
    config: &SimulatorConfig,
    chunk: &[usize],
    truth: &[f64],
    eval_id: usize,
) -> Vec<(usize, u8)> {
    let mut bias_rng = seed::rng(seed::derive(
        seed::derive(config.seed, SALT_BIAS),
        eval_id as u64,
    ));
    let beta = config.helper_bias_law.draw(&mut bias_rng);
    chunk
        .iter()
        .map(|&id| {
            let truth_i = truth.get(id).copied().unwrap_or(0.0);
            let mut raw = 5.0 * beta * truth_i;
            if config.score_noise_std > 0.0 {
                let mut rng = seed::rng(seed::derive(
                    seed::derive(seed::derive(config.seed, SALT_SCORE_NOISE), eval_id as u64),
                    id as u64,
                ));
                raw += config.score_noise_std * gauss(&mut rng);
            }
            let score = raw.round().clamp(1.0, 5.0) as u8;
            (id, score)
        })
        .collect()
}

pub fn answer_to_text(answer: &Answer) -> String {
    match answer {
        Answer::Count(c) => {
            if c.fract() == 0.0 {
                format!("{}", *c as i64)
            } else {
                format!("{c}")
            }
        }
        Answer::Counts(map) => map
            .iter()
            .map(|(k, v)| {
                if v.fract() == 0.0 {
                    format!("{k}: {}", *v as i64)
                } else {
                    format!("{k}: {v}")
                }
            })
            .collect::<Vec<_>>()
            .join("\n"),
        Answer::Text(t) => t.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::prompts;

    struct CountAll;
    impl Oracle for CountAll {
        fn answer(&self, retained: &[&Element]) -> Answer {
            Answer::Count(retained.len() as f64)
        }
        fn distance(&self, reply: &Answer, truth: &Answer) -> f64 {
            match (reply, truth) {
                (Answer::Count(a), Answer::Count(b)) => (a - b).abs(),
                _ => f64::INFINITY,
            }
        }
    }

    fn toy_task(n: usize) -> Task {
        Task {
            elements: (0..n).map(|i| Element::new(i, format!("e{i}"), 1)).collect(),
            query: "how many elements are there?".into(),
            oracle: Arc::new(CountAll),
        }
    }

    #[test]
    fn full_exposure_answers_exactly() {
        let task = toy_task(8);
        let config = SimulatorConfig::new(vec![1.0; 8], 5);
        let ans = simulate_answer(&config, &task, &[0, 1, 2, 3, 4, 5, 6, 7]).unwrap();
        assert_eq!(ans, Answer::Count(8.0));
    }

    #[test]
    fn zero_exposure_drops_everything() {
        let task = toy_task(4);
        let config = SimulatorConfig::new(vec![0.0; 4], 5);
        let ans = simulate_answer(&config, &task, &[3, 2, 1, 0]).unwrap();
        assert_eq!(ans, Answer::Count(0.0));
    }

    #[test]
    fn complete_is_deterministic_for_same_seed_and_request() {
        let task = toy_task(6);
        let config = SimulatorConfig::new(vec![0.5; 6], 77);
        let sim = SimulatedLlm::target(config, &task);
        let refs: Vec<&Element> = task.elements.iter().collect();
        let req = prompts::target_request(&refs, &task.query);
        let a = sim.complete(&req).unwrap();
        let b = sim.complete(&req).unwrap();
        assert_eq!(a.text, b.text);
    }

    #[test]
    fn helper_bias_constant_per_eval_id() {
        let config = SimulatorConfig {
            helper_bias_law: BiasLaw::LogUniform { lo: 0.5, hi: 2.0 },
            ..SimulatorConfig::new(vec![], 3)
        };
        let truth = vec![1.0, 0.2, 0.8];
        let a = simulate_helper_scores(&config, &[0, 1, 2], &truth, 4);
        let b = simulate_helper_scores(&config, &[0, 1, 2], &truth, 4);
        assert_eq!(a, b);
        // Distinct evaluations draw fresh biases; over a few rounds the
        // quantized scores cannot all coincide.
        let distinct = (0..20)
            .map(|eval| simulate_helper_scores(&config, &[0, 1, 2], &truth, eval))
            .any(|c| c != a);
        assert!(distinct);
    }

    #[test]
    fn degenerate_bias_maps_binary_truth_to_score_extremes() {
        let config = SimulatorConfig::new(vec![], 3);
        let truth = vec![1.0, 0.0, 1.0, 0.0];
        let scores = simulate_helper_scores(&config, &[0, 1, 2, 3], &truth, 0);
        assert_eq!(
            scores.iter().map(|&(_, s)| s).collect::<Vec<_>>(),
            vec![5, 1, 5, 1]
        );
    }

    #[test]
    fn bias_two_truth_point_four_scores_four() {
        let config = SimulatorConfig {
            helper_bias_law: BiasLaw::Constant(2.0),
            ..SimulatorConfig::new(vec![], 3)
        };
        let scores = simulate_helper_scores(&config, &[0], &[0.4], 0);
        assert_eq!(scores, vec![(0, 4)]);
    }
}

//! Query-relevance estimation with a helper LLM: the warm-up selection
//! baseline and the bipartite evaluation-graph method with iterative bias
//! removal.

use rand::seq::SliceRandom;

use crate::backend::prompts::{scoring_request, selection_request, PromptTemplate};
use crate::backend::{bounded_map, ChatRequest, LlmBackend};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed;
use crate::types::{Element, RelevanceMethod, RelevanceVector, Task};

/// Denominator guard for the bias iteration.
const SOLVER_EPS: f64 = 1e-12;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// A partition of element ids `0..n` into chunks of size `ceil(n/m)`, the
/// last chunk holding the remainder. `m` is the realized chunk count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partitioning {
    pub chunks: Vec<Vec<usize>>,
    pub m: usize,
    pub shuffle_seed: Option<u64>,
}

pub fn partition(n: usize, m: usize, shuffle_seed: Option<u64>) -> Result<Partitioning> {
    if m == 0 {
        return Err(Error::BadPartitionCount);
    }
    if m > n {
        return Err(Error::TooManyPartitions { m, n });
    }
    let mut ids: Vec<usize> = (0..n).collect();
    if let Some(s) = shuffle_seed {
        ids.shuffle(&mut seed::rng(s));
    }
    let chunk_size = n.div_ceil(m);
    let chunks: Vec<Vec<usize>> = ids.chunks(chunk_size).map(<[usize]>::to_vec).collect();
    Ok(Partitioning {
        m: chunks.len(),
        chunks,
        shuffle_seed,
    })
}

/// Weighted bipartite graph linking element nodes to evaluation nodes.
/// Edge `(u, v, w)` records the helper score `w` that evaluation `v` gave
/// element `u`. `s_bar` and `beta` are filled in by [`solve_bias`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationGraph<F> {
    pub n: usize,
    pub sigma: usize,
    /// Chunks per shuffle; evaluation `s * m + k` scored chunk `k` of
    /// shuffle `s`.
    pub m: usize,
    pub edges: Vec<(usize, usize, F)>,
    pub s_bar: Vec<F>,
    pub beta: Vec<F>,
    pub converged: bool,
    pub iterations: usize,
}

impl<F: Real> EvaluationGraph<F> {
    pub fn evals(&self) -> usize {
        self.sigma * self.m
    }

    /// Size of a full chunk, the normalizer of the beta update.
    pub fn chunk_size(&self) -> usize {
        self.n.div_ceil(self.m)
    }
}

fn chunk_elements<'a>(task: &'a Task, ids: &[usize]) -> Vec<&'a Element> {
    ids.iter().map(|&id| &task.elements[id]).collect()
}

/// One helper call with parse-and-retry. The request is re-sent as is; HTTP
/// backends resample, the simulator is deterministic so a deterministic
/// failure stays a failure.
fn ask<T>(
    helper: &LlmBackend,
    req: &ChatRequest,
    parse: impl Fn(&str) -> Result<T>,
) -> Result<T> {
    let mut last = None;
    for _ in 0..=helper.retry_budget {
        match helper.complete(req) {
            Err(e) => last = Some(e),
            Ok(reply) => match parse(&reply.text) {
                Ok(v) => return Ok(v),
                Err(e) => last = Some(e),
            },
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Warm-up estimator: partition the input, ask the helper which elements of
/// each chunk are relevant, score named elements 1 and the rest 0.
pub fn warmup_estimate(task: &Task, helper: &LlmBackend, m: usize) -> Result<RelevanceVector<f64>> {
    warmup_estimate_with(task, helper, m, &PromptTemplate::select_default())
}

pub fn warmup_estimate_with(
    task: &Task,
    helper: &LlmBackend,
    m: usize,
    template: &PromptTemplate,
) -> Result<RelevanceVector<f64>> {
    let n = task.n();
    let parts = partition(n, m, None)?;
    let per_chunk = bounded_map(
        helper.parallelism,
        parts.chunks.clone(),
        |chunk_idx, ids| -> Result<Vec<usize>> {
            let els = chunk_elements(task, &ids);
            let req = selection_request(template, &task.query, &els);
            let named = ask(helper, &req, crate::backend::parse::parse_relevant_ids).map_err(
                |e| Error::HelperUnavailable {
                    chunk: chunk_idx,
                    source: Box::new(e),
                },
            )?;
            let mut kept = Vec::new();
            for id in named {
                if ids.contains(&id) {
                    kept.push(id);
                } else {
                    log::warn!("helper named id {id} outside chunk {chunk_idx}; ignored");
                }
            }
            Ok(kept)
        },
    );
    let mut scores = vec![0.0; n];
    for kept in per_chunk {
        for id in kept? {
            scores[id] = 1.0;
        }
    }
    Ok(RelevanceVector::new(scores, RelevanceMethod::Warmup))
}

/// Build the evaluation graph: shuffle the input `sigma` times, partition
/// each shuffle into `m` chunks, and have the helper score every chunk on
/// the 1..5 scale. Edges are inserted in (shuffle, chunk) order, so the
/// result is independent of call scheduling.
pub fn build_evaluation_graph(
    task: &Task,
    helper: &LlmBackend,
    m: usize,
    sigma: usize,
    seed: u64,
) -> Result<EvaluationGraph<f64>> {
    build_evaluation_graph_with(task, helper, m, sigma, seed, &PromptTemplate::score_default())
}

pub fn build_evaluation_graph_with(
    task: &Task,
    helper: &LlmBackend,
    m: usize,
    sigma: usize,
    seed: u64,
    template: &PromptTemplate,
) -> Result<EvaluationGraph<f64>> {
    assert!(sigma >= 1, "sigma must be at least 1");
    let n = task.n();
    let mut jobs: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut m_actual = None;
    for s in 0..sigma {
        let parts = partition(n, m, Some(seed::derive(seed, s as u64)))?;
        let m_here = parts.m;
        match m_actual {
            None => m_actual = Some(m_here),
            Some(prev) => debug_assert_eq!(prev, m_here),
        }
        for (k, chunk) in parts.chunks.into_iter().enumerate() {
            jobs.push((s * m_here + k, chunk));
        }
    }
    let m_actual = m_actual.expect("sigma >= 1");

    let scored = bounded_map(helper.parallelism, jobs, |_, (eval_id, ids)| {
        let els = chunk_elements(task, &ids);
        let req = scoring_request(template, &task.query, &els, eval_id);
        let parse = |text: &str| -> Result<Vec<(usize, f64)>> {
            let raw = crate::backend::parse::parse_scores(text)?;
            let mut out = Vec::with_capacity(ids.len());
            for &id in &ids {
                match raw.iter().find(|(rid, _)| *rid == id) {
                    Some(&(_, score)) => out.push((id, score as f64)),
                    None => {
                        return Err(Error::ReplyParseFailed {
                            what: format!("no score for element {id}"),
                        })
                    }
                }
            }
            Ok(out)
        };
        let scores = ask(helper, &req, parse).map_err(|e| match e {
            Error::ReplyParseFailed { .. } => Error::ScoreParseFailed { eval: eval_id },
            other => other,
        })?;
        Ok::<_, Error>((eval_id, scores))
    });

    let mut edges = Vec::with_capacity(n * sigma);
    for job in scored {
        let (eval_id, scores) = job?;
        for (id, w) in scores {
            edges.push((id, eval_id, w));
        }
    }
    Ok(EvaluationGraph {
        n,
        sigma,
        m: m_actual,
        edges,
        s_bar: Vec::new(),
        beta: Vec::new(),
        converged: false,
        iterations: 0,
    })
}

/// Alternating update of element scores and evaluation biases. One `sweep`
/// is a score update followed by a bias update; the scaled matrix
/// `w / (s_bar * beta)` has row sums `sigma` after the score step and
/// column sums `ceil(n/m)` after the bias step.
pub struct BiasSolver<F> {
    by_element: Vec<Vec<(usize, F)>>,
    by_eval: Vec<Vec<(usize, F)>>,
    sigma: F,
    chunk_size: F,
    pub s_bar: Vec<F>,
    pub beta: Vec<F>,
}

impl<F: Real> BiasSolver<F> {
    pub fn new(graph: &EvaluationGraph<F>) -> Result<Self> {
        let evals = graph.evals();
        let mut by_element = vec![Vec::new(); graph.n];
        let mut by_eval = vec![Vec::new(); evals];
        for &(u, v, w) in &graph.edges {
            if w <= F::zero() {
                return Err(Error::InvalidWeight {
                    element: u,
                    eval: v,
                    weight: w.to_f64().unwrap_or(f64::NAN),
                });
            }
            by_element[u].push((v, w));
            by_eval[v].push((u, w));
        }
        Ok(BiasSolver {
            by_element,
            by_eval,
            sigma: F::from_usize_(graph.sigma),
            chunk_size: F::from_usize_(graph.chunk_size()),
            s_bar: vec![F::zero(); graph.n],
            beta: vec![F::one(); evals],
        })
    }

    fn guard(x: F) -> F {
        x.max(F::from_f64_(SOLVER_EPS))
    }

    /// Score update: `s_i = (1/sigma) * sum_j w_ij / beta_j`.
    pub fn step_scores(&mut self) {
        for (i, adj) in self.by_element.iter().enumerate() {
            let sum: F = adj
                .iter()
                .map(|&(j, w)| w / Self::guard(self.beta[j]))
                .sum();
            self.s_bar[i] = sum / self.sigma;
        }
    }

    /// Bias update: `beta_j = (1/ceil(n/m)) * sum_i w_ij / s_i`.
    pub fn step_biases(&mut self) {
        for (j, adj) in self.by_eval.iter().enumerate() {
            let sum: F = adj
                .iter()
                .map(|&(i, w)| w / Self::guard(self.s_bar[i]))
                .sum();
            self.beta[j] = sum / self.chunk_size;
        }
    }

    /// Dense rescaled matrix `w_ij / (s_bar_i * beta_j)`, zeros off-edge.
    pub fn scaled_matrix(&self) -> Vec<Vec<F>> {
        let evals = self.beta.len();
        let mut out = vec![vec![F::zero(); evals]; self.by_element.len()];
        for (i, adj) in self.by_element.iter().enumerate() {
            for &(j, w) in adj {
                out[i][j] = w / (Self::guard(self.s_bar[i]) * Self::guard(self.beta[j]));
            }
        }
        out
    }
}

fn max_rel_change<F: Real>(new: &[F], old: &[F]) -> F {
    new.iter()
        .zip(old)
        .map(|(&a, &b)| (a - b).abs() / b.abs().max(F::from_f64_(SOLVER_EPS)))
        .fold(F::zero(), F::max)
}

/// Iterate the score/bias updates until the maximum relative change across
/// both vectors drops below `tol` or `max_iter` sweeps have run. Reaching
/// the budget is not an error: the graph comes back with `converged =
/// false` and the caller decides.
pub fn solve_bias<F: Real>(
    mut graph: EvaluationGraph<F>,
    tol: F,
    max_iter: usize,
) -> Result<EvaluationGraph<F>> {
    let mut solver = BiasSolver::new(&graph)?;
    let mut prev: Option<(Vec<F>, Vec<F>)> = None;
    let mut converged = false;
    let mut iterations = 0;
    for sweep in 1..=max_iter {
        solver.step_scores();
        solver.step_biases();
        iterations = sweep;
        let finite =
            solver.s_bar.iter().all(|v| v.is_finite()) && solver.beta.iter().all(|v| v.is_finite());
        if !finite {
            // Inconsistent marginals can drift without bound; keep the last
            // finite iterate.
            if let Some((s, b)) = prev {
                solver.s_bar = s;
                solver.beta = b;
            }
            break;
        }
        if let Some((ps, pb)) = &prev {
            let delta = max_rel_change(&solver.s_bar, ps).max(max_rel_change(&solver.beta, pb));
            if delta < tol {
                converged = true;
                break;
            }
        }
        prev = Some((solver.s_bar.clone(), solver.beta.clone()));
    }
    graph.s_bar = solver.s_bar;
    graph.beta = solver.beta;
    graph.converged = converged;
    graph.iterations = iterations;
    Ok(graph)
}

/// Min-max normalization onto [0, 1]; a constant vector maps to all 0.5.
pub fn min_max_normalize<F: Real>(values: &[F]) -> Vec<F> {
    let lo = values.iter().cloned().fold(F::infinity(), F::min);
    let hi = values.iter().cloned().fold(F::neg_infinity(), F::max);
    let span = hi - lo;
    if span <= F::zero() {
        return vec![F::from_f64_(0.5); values.len()];
    }
    values.iter().map(|&v| (v - lo) / span).collect()
}

/// Bipartite estimator: build the evaluation graph, remove the
/// per-evaluation biases, and min-max normalize the solved scores.
pub fn bipartite_estimate(
    task: &Task,
    helper: &LlmBackend,
    m: usize,
    sigma: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<RelevanceVector<f64>> {
    let graph = build_evaluation_graph(task, helper, m, sigma, seed)?;
    let solved = solve_bias(graph, tol, max_iter)?;
    Ok(RelevanceVector::new(
        min_max_normalize(&solved.s_bar),
        RelevanceMethod::Bipartite,
    ))
}

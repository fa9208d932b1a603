//! Experiment orchestration: run the ranking methods over seeded tasks,
//! query the target model on each arrangement, and aggregate errors, rank
//! utilities and proximities into a report.
//!
//! Rank utilities are always computed against the ground-truth relevance
//! under the 1/i slot profile, so the utility columns are comparable across
//! methods and match the worked values of the equal-exposure setting. The
//! configured rerank profile only shapes the arrangements.

pub mod config;
pub mod report;
pub mod svg;

use rand::seq::SliceRandom;
use rand::Rng;

pub use config::{
    exposure_truth_shape, parse_bias_law, resolve_profile, Assembly, ExperimentConfig, HelperSpec,
    Method, RerankSpec, TargetNode, TargetSpec, TaskSpec,
};
pub use report::{emit_report, normalize_errors, tables_csv, Aggregate, Cell, Report};

use crate::backend::prompts::target_request;
use crate::backend::{
    parse::parse_first_number, HttpLlm, LlmBackend, MissModel, SimulatedLlm, SimulatorConfig,
};
use crate::error::{Error, Result};
use crate::rank;
use crate::relevance;
use crate::seed;
use crate::tasks;
use crate::types::{Answer, ExposureProfile, RelevanceVector, Task};

struct BuiltTask {
    task: Task,
    truth: RelevanceVector<f64>,
}

fn cell_seed(root: u64, size: usize, label: &str, run: usize) -> u64 {
    seed::derive(
        seed::derive_str(seed::derive(root, size as u64), label),
        run as u64,
    )
}

fn build_task(spec: &TaskSpec, size: usize, task_seed: u64) -> Result<BuiltTask> {
    match spec {
        TaskSpec::Graph {
            p_edge, target, ..
        } => {
            // Retry a few seeds if the draw cannot host a positive-degree
            // target; ER graphs at reasonable p make this vanishingly rare.
            for attempt in 0..16 {
                let edges =
                    tasks::gen_er_edges(size, *p_edge, seed::derive(task_seed, attempt));
                if edges.is_empty() {
                    continue;
                }
                let chosen = match target {
                    TargetNode::Fixed(t) => *t,
                    TargetNode::Named(name) if name == "random" => {
                        let mut degree = vec![0usize; size];
                        for &(u, v) in &edges {
                            degree[u] += 1;
                            degree[v] += 1;
                        }
                        let candidates: Vec<usize> =
                            (0..size).filter(|&v| degree[v] > 0).collect();
                        if candidates.is_empty() {
                            continue;
                        }
                        let mut rng = seed::rng(seed::derive(task_seed, 0x7a67));
                        candidates[rng.random_range(0..candidates.len())]
                    }
                    TargetNode::Named(other) => {
                        return Err(Error::Config(format!("unknown target spec {other:?}")))
                    }
                };
                let g = tasks::graph_task_from_edges(size, edges, chosen)?;
                return Ok(BuiltTask {
                    task: g.task,
                    truth: g.truth,
                });
            }
            Err(Error::Config(format!(
                "could not draw a usable graph at size {size}"
            )))
        }
        TaskSpec::Table { csv, predicate, .. } => {
            let t = tasks::load_table_task(csv, tasks::Predicate::parse(predicate)?, size, task_seed)?;
            Ok(BuiltTask {
                task: t.task,
                truth: t.truth,
            })
        }
        TaskSpec::ExampleGraph => {
            let g = tasks::example_graph_task();
            Ok(BuiltTask {
                task: g.task,
                truth: g.truth,
            })
        }
    }
}

fn target_backend(spec: &TargetSpec, task: &Task, seed: u64) -> Result<LlmBackend> {
    match spec.kind.as_str() {
        "simulated" => {
            let truth = exposure_truth_shape(
                &spec.profile,
                task.total_tokens(),
                MissModel::BernoulliPerToken,
            )?;
            let sim = SimulatedLlm::target(SimulatorConfig::new(truth, seed), task);
            Ok(LlmBackend::simulated(sim).with_parallelism(spec.parallelism))
        }
        "http" => {
            let base = spec
                .base_url
                .as_deref()
                .ok_or_else(|| Error::Config("http target needs base_url".into()))?;
            let model = spec.model_id.as_deref().unwrap_or("gpt-3.5-turbo");
            Ok(LlmBackend::http(HttpLlm::new(base, model, spec.timeout_ms))
                .with_parallelism(spec.parallelism))
        }
        other => Err(Error::Config(format!("unknown target kind {other:?}"))),
    }
}

fn helper_backend(spec: &HelperSpec, truth: &[f64], seed: u64) -> Result<LlmBackend> {
    match spec.kind.as_str() {
        "simulated" => {
            let config = SimulatorConfig {
                helper_bias_law: parse_bias_law(&spec.bias)?,
                score_noise_std: spec.noise_std,
                helper_miss_rate: spec.miss_rate,
                ..SimulatorConfig::new(Vec::new(), seed)
            };
            let sim = SimulatedLlm::helper(config, truth.to_vec());
            Ok(LlmBackend::simulated(sim).with_parallelism(spec.parallelism))
        }
        "http" => {
            let base = spec
                .base_url
                .as_deref()
                .ok_or_else(|| Error::Config("http helper needs base_url".into()))?;
            let model = spec.model_id.as_deref().unwrap_or("helper");
            Ok(LlmBackend::http(HttpLlm::new(base, model, spec.timeout_ms))
                .with_parallelism(spec.parallelism))
        }
        other => Err(Error::Config(format!("unknown helper kind {other:?}"))),
    }
}

fn descending_by_score(scores: &RelevanceVector<f64>) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..scores.len()).collect();
    perm.sort_by(|&a, &b| {
        scores.scores[b]
            .partial_cmp(&scores.scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    perm
}

/// What a method produced for one cell: the arrangement actually sent to
/// the target, and the relevance-descending order used for the rank-utility
/// column (how well the method sorted the truly relevant elements).
struct Arrangements {
    query_perm: Vec<usize>,
    utility_perm: Vec<usize>,
}

fn arrange(
    method: Method,
    built: &BuiltTask,
    cfg: &ExperimentConfig,
    method_seed: u64,
) -> Result<Arrangements> {
    let n = built.task.n();
    let scores = match method {
        Method::Random => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut seed::rng(method_seed));
            return Ok(Arrangements {
                utility_perm: perm.clone(),
                query_perm: perm,
            });
        }
        Method::Optimum => built.truth.clone(),
        Method::Warmup => {
            let helper = helper_backend(&cfg.helper, &built.truth.scores, method_seed)?;
            relevance::warmup_estimate(&built.task, &helper, cfg.rerank.m.min(n))?
        }
        Method::Bipartite => {
            let helper = helper_backend(&cfg.helper, &built.truth.scores, method_seed)?;
            relevance::bipartite_estimate(
                &built.task,
                &helper,
                cfg.rerank.m.min(n),
                cfg.rerank.sigma,
                method_seed,
                cfg.rerank.tol,
                cfg.rerank.max_iter,
            )?
        }
    };
    let utility_perm = descending_by_score(&scores);
    let query_perm = match cfg.assembly {
        Assembly::ExposureAware => {
            let lens = built.task.token_lens();
            let profile = resolve_profile(&cfg.rerank.exposure_profile, built.task.total_tokens())?;
            rank::optimal_ranking(&scores, &profile, &lens)?.perm
        }
        Assembly::RelevanceDescending => utility_perm.clone(),
    };
    Ok(Arrangements {
        query_perm,
        utility_perm,
    })
}

fn query_target(backend: &LlmBackend, task: &Task, perm: &[usize]) -> Result<f64> {
    let ordered: Vec<&crate::types::Element> =
        perm.iter().map(|&i| &task.elements[i]).collect();
    let req = target_request(&ordered, &task.query);
    let reply = backend.complete(&req)?;
    let value = parse_first_number(&reply.text)?;
    Ok(task.error_of(&Answer::Count(value)))
}

/// Run the configured experiment grid and aggregate the results.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let sizes = cfg.task.sizes();

    let mut jobs = Vec::new();
    for &size in &sizes {
        for run in 0..cfg.runs {
            for &method in &cfg.methods {
                jobs.push((size, run, method));
            }
        }
    }

    let cells: Vec<Cell> = crate::backend::bounded_map(cfg.parallelism, jobs, |_, job| {
        let (size, run, method) = job;
        let method_seed = cell_seed(cfg.seed, size, method.label(), run);
        let mut cell = Cell {
            size,
            method,
            run,
            seed: method_seed,
            error: None,
            utility: None,
            failure: None,
        };
        let outcome = (|| -> Result<(f64, f64)> {
            let built = build_task(&cfg.task, size, cell_seed(cfg.seed, size, "task", run))?;
            let arranged = arrange(method, &built, cfg, method_seed)?;
            let n = built.task.n();
            let rank_utility = rank::utility(
                &arranged.utility_perm,
                &built.truth,
                &ExposureProfile::inverse_rank(n),
                &vec![1; n],
            )?;
            // The target backend seed is shared across methods of a run, so
            // methods that produce the same arrangement see the same misses.
            let target = target_backend(
                &cfg.target,
                &built.task,
                cell_seed(cfg.seed, size, "target", run),
            )?;
            let error = query_target(&target, &built.task, &arranged.query_perm)?;
            Ok((error, rank_utility))
        })();
        match outcome {
            Ok((error, utility)) => {
                cell.error = Some(error);
                cell.utility = Some(utility);
            }
            Err(e) => cell.failure = Some(e.to_string()),
        }
        cell
    });

    let mut flags: Vec<String> = cells
        .iter()
        .filter(|c| !c.complete())
        .map(|c| {
            format!(
                "incomplete cell size={} method={} run={}: {}",
                c.size,
                c.method.label(),
                c.run,
                c.failure.as_deref().unwrap_or("unknown")
            )
        })
        .collect();

    let mut aggregates = Vec::new();
    for &size in &sizes {
        let mean_of = |method: Method, pick: &dyn Fn(&Cell) -> Option<f64>| -> Option<f64> {
            let values: Vec<f64> = cells
                .iter()
                .filter(|c| c.size == size && c.method == method)
                .filter_map(pick)
                .collect();
            if values.is_empty() {
                None
            } else {
                Some(values.iter().sum::<f64>() / values.len() as f64)
            }
        };
        let random_bounds = (
            mean_of(Method::Random, &|c| c.utility),
            mean_of(Method::Random, &|c| c.error),
        );
        let optimum_bounds = (
            mean_of(Method::Optimum, &|c| c.utility),
            mean_of(Method::Optimum, &|c| c.error),
        );

        let means: Vec<(Method, f64, f64, usize)> = cfg
            .methods
            .iter()
            .map(|&m| {
                let complete = cells
                    .iter()
                    .filter(|c| c.size == size && c.method == m && c.complete())
                    .count();
                (
                    m,
                    mean_of(m, &|c| c.utility).unwrap_or(f64::NAN),
                    mean_of(m, &|c| c.error).unwrap_or(f64::NAN),
                    complete,
                )
            })
            .collect();

        let (norm, degenerate) = normalize_errors(
            &means.iter().map(|&(_, _, e, _)| e).collect::<Vec<f64>>(),
        );
        if degenerate {
            flags.push(format!("constant error group at size {size}"));
        }

        for (k, &(method, mean_utility, mean_error, complete_runs)) in means.iter().enumerate() {
            let utility_proximity = match (random_bounds.0, optimum_bounds.0) {
                (Some(lo), Some(hi)) => rank::proximity(mean_utility, lo, hi)
                    .ok()
                    .map(|p| p.value),
                _ => None,
            };
            let error_proximity = match (optimum_bounds.1, random_bounds.1) {
                (Some(lo), Some(hi)) => rank::proximity(mean_error, lo, hi)
                    .ok()
                    .map(|p| 1.0 - p.value),
                _ => None,
            };
            aggregates.push(Aggregate {
                size,
                method,
                complete_runs,
                mean_utility,
                utility_proximity,
                mean_error,
                normalized_error: if degenerate { None } else { Some(norm[k]) },
                error_proximity,
            });
        }
    }

    Ok(Report {
        schema_version: 1,
        created_at: None,
        config: cfg.clone(),
        cells,
        aggregates,
        flags,
    })
}

//! Command-line front end: exposure discovery, one-shot reranking,
//! experiment evaluation, and task generation.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use symrank::backend::{HttpLlm, LlmBackend, MissModel, SimulatedLlm, SimulatorConfig};
use symrank::error::{Error, ErrorKind};
use symrank::exposure::{self, ProfileDocument};
use symrank::harness::{self, exposure_truth_shape, parse_bias_law, resolve_profile};
use symrank::tasks;
use symrank::types::Element;
use symrank::{relevance, Result};

#[derive(Parser)]
#[command(
    name = "symrank",
    version,
    about = "Rerank the unordered inputs of symmetric LLM tasks",
    propagate_version = true
)]
struct Cli {
    /// Omit timestamps from outputs so equal seeds produce identical bytes.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure the per-position exposure profile of a target LLM and write
    /// it as a profile JSON.
    ExposureDiscover {
        /// Target backend: `simulated:<shape>` with shape one of
        /// perfect|uniform|inverse_rank|hump, or `http:<base_url>[,<model>]`.
        #[arg(long)]
        llm: String,
        /// Number of probed token positions.
        #[arg(long, default_value_t = 50)]
        n: usize,
        /// Initial permutation budget (defaults to 4n).
        #[arg(long)]
        p0: Option<usize>,
        /// Budget ceiling for doubling.
        #[arg(long)]
        p_max: Option<usize>,
        /// Stop once every coordinate variance is below this.
        #[arg(long, default_value_t = 1e-6)]
        target_var: f64,
        /// Probe alphabet size.
        #[arg(long, default_value_t = 4)]
        alphabet: usize,
        /// Tracked-token window length.
        #[arg(long, default_value_t = exposure::DEFAULT_WINDOW)]
        window: usize,
        /// Relative noise of the simulated probe replies.
        #[arg(long, default_value_t = 0.0)]
        probe_noise_std: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rerank an element file (edge list or CSV) for a query.
    Rerank {
        /// Input element file.
        input: PathBuf,
        #[arg(long)]
        query: String,
        /// Relevance estimator.
        #[arg(long, default_value = "bipartite", value_parser = ["bipartite", "warmup"])]
        method: String,
        /// Chunks per shuffle.
        #[arg(long, default_value_t = 5)]
        m: usize,
        /// Shuffle count for the bipartite method.
        #[arg(long, default_value_t = 4)]
        sigma: usize,
        /// Helper backend: `simulated` or `http:<base_url>[,<model>]`.
        #[arg(long, default_value = "simulated")]
        helper: String,
        /// Helper bias law for the simulated helper.
        #[arg(long, default_value = "none")]
        helper_bias: String,
        #[arg(long, default_value_t = 0.0)]
        helper_noise_std: f64,
        /// Exposure profile: uniform|inverse_rank|hump or a profile JSON path.
        #[arg(long, default_value = "inverse_rank")]
        profile: String,
        /// Ground-truth predicate for CSV inputs, as column,op,literal.
        #[arg(long)]
        predicate: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a configured experiment and write a report directory.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "report")]
        out: PathBuf,
        /// Override the config's worker bound.
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Generate a seeded graph-degree task as an edge-list file.
    GenTask {
        #[arg(long, default_value_t = 30)]
        n_nodes: usize,
        #[arg(long, default_value_t = 0.2)]
        p_edge: f64,
        #[arg(long, default_value_t = 0)]
        target: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Optional sidecar with the oracle answer and relevant ids.
        #[arg(long)]
        truth_out: Option<PathBuf>,
    },
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            let code = match e.kind() {
                K::DisplayHelp | K::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        let code = match e.kind() {
            ErrorKind::Usage => 1,
            ErrorKind::Backend => 2,
            ErrorKind::Numeric => 3,
        };
        std::process::exit(code);
    }
}

fn timestamp(deterministic: bool) -> String {
    if deterministic {
        "1970-01-01T00:00:00Z".to_string()
    } else {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    }
}

/// `simulated[:<shape>]` or `http:<base_url>[,<model>]`.
fn split_backend_spec(spec: &str) -> Result<(&str, &str)> {
    if spec == "simulated" {
        return Ok(("simulated", "uniform"));
    }
    if let Some(shape) = spec.strip_prefix("simulated:") {
        return Ok(("simulated", shape));
    }
    if let Some(rest) = spec.strip_prefix("http:") {
        return Ok(("http", rest));
    }
    Err(Error::Config(format!(
        "bad backend spec {spec:?} (expected simulated[:<shape>] or http:<base_url>[,<model>])"
    )))
}

fn http_backend(rest: &str, timeout_ms: u64) -> LlmBackend {
    let (base, model) = match rest.split_once(',') {
        Some((b, m)) => (b.trim(), m.trim()),
        None => (rest.trim(), "default"),
    };
    LlmBackend::http(HttpLlm::new(base, model, timeout_ms))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ExposureDiscover {
            llm,
            n,
            p0,
            p_max,
            target_var,
            alphabet,
            window,
            probe_noise_std,
            seed,
            out,
        } => {
            let p0 = p0.unwrap_or(4 * n);
            let p_max = p_max.unwrap_or(16 * n.max(1));
            let probe = exposure::make_probe_with_window(alphabet, n, window, seed);
            let (backend, label) = match split_backend_spec(&llm)? {
                ("simulated", shape) => {
                    let truth = exposure_truth_shape(shape, n, MissModel::Threshold)?;
                    let config = SimulatorConfig {
                        miss_model: MissModel::Threshold,
                        probe_noise_std,
                        ..SimulatorConfig::new(truth, seed)
                    };
                    let sim =
                        SimulatedLlm::probe(config, probe.counts.clone(), probe.tracked.clone());
                    (LlmBackend::simulated(sim), format!("simulated:{shape}"))
                }
                (_, rest) => (http_backend(rest, 30_000), format!("http:{rest}")),
            };
            let profile =
                exposure::estimate_with_confidence(&backend, &probe, target_var, p0, p_max, seed)?;
            if profile.target_not_met {
                log::warn!("variance target not met within the sample budget");
            }
            ProfileDocument::from_profile(&profile, label, timestamp(cli.deterministic))
                .save(&out)?;
            println!(
                "wrote {} ({} positions, df={}, max variance {:.3e})",
                out.display(),
                profile.len(),
                profile.df,
                profile.max_variance()
            );
            Ok(())
        }

        Command::Rerank {
            input,
            query,
            method,
            m,
            sigma,
            helper,
            helper_bias,
            helper_noise_std,
            profile,
            predicate,
            seed,
            out,
        } => {
            let (elements, truth) = load_rerank_input(&input, &query, predicate.as_deref())?;
            let task = symrank::Task {
                elements,
                query: query.clone(),
                oracle: std::sync::Arc::new(exposure::TokenCountOracle),
            };
            let helper_backend = match split_backend_spec(&helper)? {
                ("simulated", _) => {
                    let truth = truth.clone().ok_or_else(|| {
                        Error::Config(
                            "simulated helper needs inferable relevance: use an edge list \
                             with a node query, or pass --predicate for CSV inputs"
                                .into(),
                        )
                    })?;
                    let config = SimulatorConfig {
                        helper_bias_law: parse_bias_law(&helper_bias)?,
                        score_noise_std: helper_noise_std,
                        ..SimulatorConfig::new(Vec::new(), seed)
                    };
                    LlmBackend::simulated(SimulatedLlm::helper(config, truth))
                }
                (_, rest) => http_backend(rest, 30_000),
            };
            let m = m.min(task.n());
            let rel = match method.as_str() {
                "warmup" => relevance::warmup_estimate(&task, &helper_backend, m)?,
                _ => relevance::bipartite_estimate(
                    &task,
                    &helper_backend,
                    m,
                    sigma,
                    seed,
                    relevance::DEFAULT_TOL,
                    relevance::DEFAULT_MAX_ITER,
                )?,
            };
            let prof = resolve_profile(&profile, task.total_tokens())?;
            let ranking = symrank::optimal_ranking(&rel, &prof, &task.token_lens())?;

            let body: String = ranking
                .perm
                .iter()
                .map(|&i| task.elements[i].text.clone() + "\n")
                .collect();
            std::fs::write(&out, body).map_err(|e| Error::io(out.display().to_string(), e))?;
            let sidecar = out.with_extension("scores.json");
            let doc = serde_json::json!({
                "method": method,
                "query": query,
                "seed": seed,
                "perm": ranking.perm,
                "scores": rel.scores,
                "utility": ranking.utility,
            });
            std::fs::write(&sidecar, serde_json::to_string_pretty(&doc).unwrap() + "\n")
                .map_err(|e| Error::io(sidecar.display().to_string(), e))?;
            println!("wrote {} and {}", out.display(), sidecar.display());
            Ok(())
        }

        Command::Eval {
            config,
            out,
            parallelism,
        } => {
            let mut cfg = harness::ExperimentConfig::load(&config)?;
            if let Some(p) = parallelism {
                cfg.parallelism = p.max(1);
            }
            let mut report = harness::run_experiment(&cfg)?;
            if !cli.deterministic {
                report.created_at = Some(timestamp(false));
            }
            harness::emit_report(&report, &out)?;
            for flag in &report.flags {
                log::warn!("{flag}");
            }
            println!(
                "wrote {} ({} cells, {} aggregates)",
                out.display(),
                report.cells.len(),
                report.aggregates.len()
            );
            Ok(())
        }

        Command::GenTask {
            n_nodes,
            p_edge,
            target,
            seed,
            out,
            truth_out,
        } => {
            let g = tasks::gen_graph_task(n_nodes, p_edge, target, seed)?;
            tasks::write_edge_list(&out, &g)?;
            if let Some(path) = truth_out {
                let relevant: Vec<usize> = g
                    .truth
                    .scores
                    .iter()
                    .enumerate()
                    .filter(|(_, &s)| s == 1.0)
                    .map(|(i, _)| i)
                    .collect();
                let doc = serde_json::json!({
                    "target": g.target,
                    "degree": g.degree,
                    "relevant_ids": relevant,
                    "query": g.task.query,
                });
                std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap() + "\n")
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
            }
            println!(
                "wrote {} (nodes={}, edges={}, target={}, degree={})",
                out.display(),
                g.n_nodes,
                g.edges.len(),
                g.target,
                g.degree
            );
            Ok(())
        }
    }
}

/// Read a rerank input file into elements plus, when derivable, the
/// ground-truth relevance used to equip the simulated helper.
fn load_rerank_input(
    path: &Path,
    query: &str,
    predicate: Option<&str>,
) -> Result<(Vec<Element>, Option<Vec<f64>>)> {
    match tasks::load_elements(path)? {
        tasks::LoadedElements::Edges { edges, .. } => {
            let elements: Vec<Element> = edges
                .iter()
                .enumerate()
                .map(|(i, &(u, v))| {
                    let text = tasks::edge_text(u, v);
                    let len = text.split_whitespace().count().max(1);
                    Element::new(i, text, len)
                })
                .collect();
            let truth = tasks::infer_relevance(&elements, query);
            Ok((elements, truth))
        }
        tasks::LoadedElements::Rows { header, rows } => {
            let truth = match predicate {
                Some(spec) => {
                    let table = tasks::table_task_from_rows(
                        header,
                        rows.clone(),
                        tasks::Predicate::parse(spec)?,
                    )?;
                    Some(table.truth.scores)
                }
                None => None,
            };
            let elements = rows
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let text = format!("[{i}] {}", r.join(","));
                    let len = text.split_whitespace().count().max(1);
                    Element::new(i, text, len)
                })
                .collect();
            Ok((elements, truth))
        }
    }
}

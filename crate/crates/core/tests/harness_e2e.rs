//! End-to-end experiment runs against the simulated backends, plus report
//! emission.

mod common;

use symrank::harness::{
    emit_report, run_experiment, Assembly, ExperimentConfig, HelperSpec, Method, RerankSpec,
    TargetNode, TargetSpec, TaskSpec,
};

fn base_config(task: TaskSpec, methods: Vec<Method>, runs: usize) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: 1,
        runs,
        seed: 2024,
        methods,
        assembly: Assembly::ExposureAware,
        parallelism: 1,
        task,
        target: TargetSpec {
            kind: "simulated".into(),
            profile: "inverse_rank".into(),
            base_url: None,
            model_id: None,
            timeout_ms: 1_000,
            parallelism: 1,
        },
        helper: HelperSpec {
            bias: "none".into(),
            ..HelperSpec::default()
        },
        rerank: RerankSpec {
            exposure_profile: "inverse_rank".into(),
            ..RerankSpec::default()
        },
    }
}

#[test]
fn worked_example_utilities_and_proximities() {
    let mut cfg = base_config(
        TaskSpec::ExampleGraph,
        vec![Method::Optimum, Method::Random],
        1,
    );
    // Most seeds leave the shuffled baseline strictly below the optimum;
    // this one does (a 1-in-120 shuffle would tie and void the bounds).
    cfg.seed = 7;
    let report = run_experiment(&cfg).unwrap();
    let cell = |m: Method| {
        report
            .cells
            .iter()
            .find(|c| c.method == m)
            .expect("cell present")
    };
    // Three relevant edges sorted first under the 1/i slot profile.
    let opt = cell(Method::Optimum).utility.unwrap();
    assert!((opt - 11.0 / 6.0).abs() < 1e-12, "optimum utility {opt}");
    let rand = cell(Method::Random).utility.unwrap();
    assert!(rand < opt, "shuffled utility {rand} strictly below optimum");

    let agg = |m: Method| {
        report
            .aggregates
            .iter()
            .find(|a| a.method == m)
            .unwrap()
            .clone()
    };
    assert!((agg(Method::Optimum).utility_proximity.unwrap() - 1.0).abs() < 1e-12);
    assert!(agg(Method::Random).utility_proximity.unwrap() < 1e-12);
}

#[test]
fn noiseless_bipartite_utility_tracks_the_optimum() {
    let cfg = base_config(
        TaskSpec::Graph {
            n_nodes: 20,
            p_edge: 0.3,
            target: TargetNode::default(),
            sizes: Vec::new(),
        },
        vec![Method::Random, Method::Bipartite, Method::Optimum],
        10,
    );
    let report = run_experiment(&cfg).unwrap();
    let mean = |m: Method| {
        report
            .aggregates
            .iter()
            .find(|a| a.method == m)
            .unwrap()
            .mean_utility
    };
    let (bip, opt) = (mean(Method::Bipartite), mean(Method::Optimum));
    assert!(
        (opt - bip).abs() / opt < 0.02,
        "bipartite {bip} should sit within 2% of optimum {opt}"
    );
}

#[test]
fn report_directory_has_the_expected_shape() {
    let cfg = base_config(
        TaskSpec::Graph {
            n_nodes: 16,
            p_edge: 0.3,
            target: TargetNode::default(),
            sizes: Vec::new(),
        },
        vec![
            Method::Random,
            Method::Warmup,
            Method::Bipartite,
            Method::Optimum,
        ],
        10,
    );
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.cells.len(), 40);
    assert_eq!(report.aggregates.len(), 4);

    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("tables.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5, "header plus one row per method");
    assert!(lines[0].starts_with("method,mean_utility,utility_proximity,mean_error,normalized_error"));
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("error_vs_size.svg").exists());
    assert!(dir.path().join("exposure_profile.svg").exists());

    // Identical second emission, byte for byte.
    let again = run_experiment(&cfg).unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    emit_report(&again, dir2.path()).unwrap();
    let a = std::fs::read(dir.path().join("report.json")).unwrap();
    let b = std::fs::read(dir2.path().join("report.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unreachable_task_files_mark_cells_incomplete() {
    let cfg = base_config(
        TaskSpec::Table {
            csv: "does/not/exist.csv".into(),
            predicate: "rating,ge,8.2".into(),
            sample_rows: 10,
            sizes: Vec::new(),
        },
        vec![Method::Random],
        2,
    );
    let report = run_experiment(&cfg).unwrap();
    assert!(report.cells.iter().all(|c| !c.complete()));
    assert_eq!(report.flags.len(), 3, "two cell flags plus a degenerate group");
    assert!(report.cells.iter().all(|c| c.error.is_none()));
}

#[test]
fn size_sweeps_produce_one_aggregate_row_per_size_and_method() {
    let cfg = base_config(
        TaskSpec::Graph {
            n_nodes: 12,
            p_edge: 0.4,
            target: TargetNode::default(),
            sizes: vec![12, 20],
        },
        vec![Method::Random, Method::Optimum],
        3,
    );
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.cells.len(), 2 * 3 * 2);
    assert_eq!(report.aggregates.len(), 4);
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("tables.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().nth(1).unwrap().ends_with(",12"));
    assert!(csv.lines().nth(4).unwrap().ends_with(",20"));
    let svg = std::fs::read_to_string(dir.path().join("error_vs_size.svg")).unwrap();
    assert!(svg.contains("polyline"), "two sizes draw real series");
}

#[test]
fn normalized_errors_put_random_at_one_with_a_hump_target() {
    let mut cfg = base_config(
        TaskSpec::Graph {
            n_nodes: 30,
            p_edge: 0.25,
            target: TargetNode::default(),
            sizes: Vec::new(),
        },
        vec![Method::Random, Method::Bipartite, Method::Optimum],
        5,
    );
    cfg.target.profile = "hump".into();
    cfg.rerank.exposure_profile = "hump".into();
    let report = run_experiment(&cfg).unwrap();
    let agg = |m: Method| {
        report
            .aggregates
            .iter()
            .find(|a| a.method == m)
            .unwrap()
            .clone()
    };
    assert_eq!(agg(Method::Random).normalized_error, Some(1.0));
    assert_eq!(agg(Method::Optimum).normalized_error, Some(0.0));
}

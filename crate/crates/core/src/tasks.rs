//! Task families: Erdős–Rényi graph-degree queries and tabular count
//! queries, with ground-truth oracles and relevance.

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;
use crate::types::{Answer, Element, Oracle, RelevanceMethod, RelevanceVector, Task};

/// Prompt-budget cap on generated graphs.
pub const DEFAULT_EDGE_CAP: usize = 500;

/// Counts retained elements whose id is marked; distance is the absolute
/// count difference. Covers both degree queries (marked = incident edges)
/// and predicate counts (marked = matching rows).
pub struct MarkCountOracle {
    marked: Vec<bool>,
}

impl Oracle for MarkCountOracle {
    fn answer(&self, retained: &[&Element]) -> Answer {
        let count = retained
            .iter()
            .filter(|e| self.marked.get(e.id).copied().unwrap_or(false))
            .count();
        Answer::Count(count as f64)
    }

    fn distance(&self, reply: &Answer, truth: &Answer) -> f64 {
        match (reply, truth) {
            (Answer::Count(a), Answer::Count(b)) => (a - b).abs(),
            _ => f64::INFINITY,
        }
    }
}

fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count().max(1)
}

fn marked_task(
    texts: Vec<String>,
    query: String,
    marked: Vec<bool>,
) -> (Task, RelevanceVector<f64>) {
    let elements = texts
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let len = whitespace_tokens(&t);
            Element::new(i, t, len)
        })
        .collect();
    let truth = RelevanceVector::new(
        marked.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        RelevanceMethod::GroundTruth,
    );
    let task = Task {
        elements,
        query,
        oracle: Arc::new(MarkCountOracle { marked }),
    };
    (task, truth)
}

// ---------------------------------------------------------------------------
// Graph degree tasks
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct GraphTask {
    pub n_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub target: usize,
    pub task: Task,
    /// Ground truth: 1 exactly on edges incident to the target.
    pub truth: RelevanceVector<f64>,
    pub degree: usize,
}

pub fn edge_text(u: usize, v: usize) -> String {
    format!("{u} -- {v}")
}

pub fn parse_edge(text: &str) -> Option<(usize, usize)> {
    let (u, v) = text.split_once("--")?;
    Some((u.trim().parse().ok()?, v.trim().parse().ok()?))
}

/// Build a degree task from an explicit edge list.
pub fn graph_task_from_edges(
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    target: usize,
) -> Result<GraphTask> {
    if target >= n_nodes {
        return Err(Error::BadTarget { target, n_nodes });
    }
    for &(u, v) in &edges {
        if u == v || u >= n_nodes || v >= n_nodes {
            return Err(Error::Config(format!(
                "edge ({u}, {v}) invalid for {n_nodes} nodes"
            )));
        }
    }
    let marked: Vec<bool> = edges.iter().map(|&(u, v)| u == target || v == target).collect();
    let degree = marked.iter().filter(|&&m| m).count();
    let texts = edges.iter().map(|&(u, v)| edge_text(u, v)).collect();
    let query = format!("What is the degree of node {target}?");
    let (task, truth) = marked_task(texts, query, marked);
    Ok(GraphTask {
        n_nodes,
        edges,
        target,
        task,
        truth,
        degree,
    })
}

/// Erdős–Rényi G(n, p): each unordered pair is an edge independently with
/// probability `p_edge`.
pub fn gen_graph_task(
    n_nodes: usize,
    p_edge: f64,
    target: usize,
    seed: u64,
) -> Result<GraphTask> {
    gen_graph_task_capped(n_nodes, p_edge, target, seed, DEFAULT_EDGE_CAP)
}

pub fn gen_graph_task_capped(
    n_nodes: usize,
    p_edge: f64,
    target: usize,
    seed: u64,
    edge_cap: usize,
) -> Result<GraphTask> {
    if target >= n_nodes {
        return Err(Error::BadTarget { target, n_nodes });
    }
    let edges = gen_er_edges(n_nodes, p_edge, seed);
    if edges.len() > edge_cap {
        return Err(Error::EdgeBudgetExceeded {
            edges: edges.len(),
            cap: edge_cap,
        });
    }
    graph_task_from_edges(n_nodes, edges, target)
}

/// Sample the edge set of G(n, p).
pub fn gen_er_edges(n_nodes: usize, p_edge: f64, seed: u64) -> Vec<(usize, usize)> {
    assert!(p_edge > 0.0 && p_edge <= 1.0, "p_edge must be in (0, 1]");
    let mut rng = seed::rng(seed);
    let mut edges = Vec::new();
    for u in 0..n_nodes {
        for v in u + 1..n_nodes {
            if rng.random_bool(p_edge) {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Fixed six-node, ten-edge graph whose first node has degree three; the
/// relevant edges sit at ids 0, 2 and 4.
pub fn example_graph_task() -> GraphTask {
    let edges = vec![
        (0, 1),
        (1, 3),
        (0, 3),
        (2, 3),
        (0, 2),
        (1, 4),
        (2, 4),
        (2, 5),
        (4, 5),
        (1, 5),
    ];
    graph_task_from_edges(6, edges, 0).expect("static example")
}

/// Write a graph as an edge-list text file, one `u -- v` line per edge.
pub fn write_edge_list(path: &Path, graph: &GraphTask) -> Result<()> {
    let body: String = graph
        .edges
        .iter()
        .map(|&(u, v)| edge_text(u, v) + "\n")
        .collect();
    std::fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

// ---------------------------------------------------------------------------
// Tabular count tasks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub column: String,
    pub comparator: Comparator,
    pub literal: String,
}

impl Predicate {
    /// Parse the CLI form `column,op,literal` with `op` one of `eq`, `ge`.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.splitn(3, ',').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!(
                "predicate {spec:?} is not column,op,literal"
            )));
        }
        let comparator = match parts[1].trim() {
            "eq" => Comparator::Eq,
            "ge" => Comparator::Ge,
            other => return Err(Error::Config(format!("unknown comparator {other:?}"))),
        };
        Ok(Predicate {
            column: parts[0].trim().to_string(),
            comparator,
            literal: parts[2].trim().to_string(),
        })
    }

    /// Numeric comparison when both sides parse as numbers, otherwise exact
    /// match (eq) or lexicographic order (ge) after trimming.
    pub fn matches(&self, value: &str) -> bool {
        let value = value.trim();
        let literal = self.literal.trim();
        match (value.parse::<f64>(), literal.parse::<f64>()) {
            (Ok(v), Ok(l)) => match self.comparator {
                Comparator::Eq => v == l,
                Comparator::Ge => v >= l,
            },
            _ => match self.comparator {
                Comparator::Eq => value == literal,
                Comparator::Ge => value >= literal,
            },
        }
    }
}

#[derive(Debug)]
pub struct TableTask {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub predicate: Predicate,
    pub task: Task,
    /// Ground truth: 1 exactly on rows satisfying the predicate.
    pub truth: RelevanceVector<f64>,
    pub count: usize,
}

fn comparator_phrase(c: Comparator) -> &'static str {
    match c {
        Comparator::Eq => "equal to",
        Comparator::Ge => "greater than or equal to",
    }
}

/// Build a count task from in-memory rows.
pub fn table_task_from_rows(
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    predicate: Predicate,
) -> Result<TableTask> {
    let col = header
        .iter()
        .position(|h| h.trim() == predicate.column)
        .ok_or_else(|| Error::UnknownColumn {
            column: predicate.column.clone(),
        })?;
    let marked: Vec<bool> = rows.iter().map(|r| predicate.matches(&r[col])).collect();
    let count = marked.iter().filter(|&&m| m).count();
    let texts: Vec<String> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| format!("[{i}] {}", r.join(",")))
        .collect();
    let query = format!(
        "How many rows have {} {} {}?",
        predicate.column,
        comparator_phrase(predicate.comparator),
        predicate.literal
    );
    let (task, truth) = marked_task(texts, query, marked);
    Ok(TableTask {
        header,
        rows,
        predicate,
        task,
        truth,
        count,
    })
}

/// Load a CSV (RFC 4180), take a seeded uniform row sample, and build the
/// count task for the predicate.
pub fn load_table_task(
    csv_path: &Path,
    predicate: Predicate,
    sample_rows: usize,
    seed: u64,
) -> Result<TableTask> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(csv_path)
        .map_err(|e| Error::Config(format!("{}: {e}", csv_path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Config(format!("{}: bad header: {e}", csv_path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let arity = header.len();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header occupies line 1
        let record = record.map_err(|e| Error::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        if record.len() != arity {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected {arity} fields, found {}", record.len()),
            });
        }
        rows.push(record.iter().map(str::to_string).collect::<Vec<String>>());
    }
    let sampled = if sample_rows >= rows.len() {
        rows
    } else {
        let mut idx: Vec<usize> = (0..rows.len()).collect();
        idx.shuffle(&mut seed::rng(seed));
        let mut chosen: Vec<usize> = idx.into_iter().take(sample_rows).collect();
        chosen.sort_unstable();
        chosen.into_iter().map(|i| rows[i].clone()).collect()
    };
    table_task_from_rows(header, sampled, predicate)
}

// ---------------------------------------------------------------------------
// Element-file ingestion for the CLI
// ---------------------------------------------------------------------------

/// What a rerank input file turned out to contain.
pub enum LoadedElements {
    Edges { n_nodes: usize, edges: Vec<(usize, usize)> },
    Rows { header: Vec<String>, rows: Vec<Vec<String>> },
}

/// Read an element file: an edge list when every non-empty line is
/// `u -- v`, otherwise CSV.
pub fn load_elements(path: &Path) -> Result<LoadedElements> {
    let body =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let lines: Vec<&str> = body.lines().filter(|l| !l.trim().is_empty()).collect();
    if !lines.is_empty() && lines.iter().all(|l| parse_edge(l).is_some()) {
        let edges: Vec<(usize, usize)> = lines.iter().map(|l| parse_edge(l).unwrap()).collect();
        let n_nodes = edges
            .iter()
            .map(|&(u, v)| u.max(v) + 1)
            .max()
            .unwrap_or(0);
        return Ok(LoadedElements::Edges { n_nodes, edges });
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(body.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Config(format!("{}: bad header: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::MalformedRow {
            line: i + 2,
            reason: e.to_string(),
        })?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(LoadedElements::Rows { header, rows })
}

/// Ground-truth relevance inferable from the element texts and the query:
/// for edge lists, incidence to the node named in the query. Used to equip
/// the simulated helper with task knowledge in the CLI.
pub fn infer_relevance(elements: &[Element], query: &str) -> Option<Vec<f64>> {
    let edges: Option<Vec<(usize, usize)>> =
        elements.iter().map(|e| parse_edge(&e.text)).collect();
    let edges = edges?;
    let target = crate::backend::parse::parse_first_number(query).ok()? as usize;
    Some(
        edges
            .iter()
            .map(|&(u, v)| if u == target || v == target { 1.0 } else { 0.0 })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Answer;

    #[test]
    fn example_graph_has_expected_truth() {
        let g = example_graph_task();
        assert_eq!(g.degree, 3);
        assert_eq!(g.task.n(), 10);
        let flagged: Vec<usize> = g
            .truth
            .scores
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 1.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(flagged, vec![0, 2, 4]);
        assert_eq!(g.task.truth_answer(), Answer::Count(3.0));
    }

    #[test]
    fn complete_graph_degree() {
        let g = gen_graph_task(4, 1.0, 2, 123).unwrap();
        assert_eq!(g.degree, 3);
        assert_eq!(g.edges.len(), 6);
    }

    #[test]
    fn degree_matches_adjacency_recount() {
        let g = gen_graph_task(30, 0.2, 7, 99).unwrap();
        // Independent recount via an adjacency census.
        let mut adj = vec![0usize; 30];
        for &(u, v) in &g.edges {
            adj[u] += 1;
            adj[v] += 1;
        }
        assert_eq!(g.degree, adj[7]);
        assert_eq!(g.task.truth_answer(), Answer::Count(adj[7] as f64));
    }

    #[test]
    fn bad_target_rejected() {
        assert!(matches!(
            gen_graph_task(5, 0.5, 9, 1).unwrap_err(),
            Error::BadTarget { target: 9, n_nodes: 5 }
        ));
    }

    #[test]
    fn edge_cap_enforced() {
        let err = gen_graph_task_capped(40, 1.0, 0, 1, 100).unwrap_err();
        assert!(err.to_string().starts_with("edge_budget_exceeded"));
    }

    #[test]
    fn oracle_is_permutation_invariant() {
        let g = gen_graph_task(12, 0.4, 3, 5).unwrap();
        let mut refs: Vec<&Element> = g.task.elements.iter().collect();
        let before = g.task.oracle.answer(&refs);
        refs.reverse();
        assert_eq!(g.task.oracle.answer(&refs), before);
    }

    #[test]
    fn dropping_irrelevant_elements_preserves_the_oracle() {
        let g = gen_graph_task(15, 0.3, 2, 8).unwrap();
        let relevant_only: Vec<&Element> = g
            .task
            .elements
            .iter()
            .filter(|e| g.truth.scores[e.id] == 1.0)
            .collect();
        assert_eq!(g.task.oracle.answer(&relevant_only), g.task.truth_answer());
    }

    fn ratings_table() -> TableTask {
        let header = vec!["title".to_string(), "rating".to_string()];
        let rows: Vec<Vec<String>> = [8.5, 8.0, 9.0, 7.9, 8.2]
            .iter()
            .enumerate()
            .map(|(i, r)| vec![format!("movie{i}"), r.to_string()])
            .collect();
        table_task_from_rows(header, rows, Predicate::parse("rating,ge,8.2").unwrap()).unwrap()
    }

    #[test]
    fn rating_count_query() {
        let t = ratings_table();
        assert_eq!(t.count, 3);
        assert_eq!(t.task.truth_answer(), Answer::Count(3.0));
        assert_eq!(t.truth.scores, vec![1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_match_predicate() {
        let header = vec!["a".to_string()];
        let rows = vec![vec!["x".to_string()], vec!["y".to_string()]];
        let t = table_task_from_rows(header, rows, Predicate::parse("a,eq,z").unwrap()).unwrap();
        assert_eq!(t.count, 0);
        assert!(t.truth.scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn unknown_column_rejected() {
        let header = vec!["a".to_string()];
        let rows = vec![vec!["x".to_string()]];
        let err =
            table_task_from_rows(header, rows, Predicate::parse("b,eq,x").unwrap()).unwrap_err();
        assert!(matches!(err, Error::UnknownColumn { .. }));
    }

    #[test]
    fn csv_load_sample_and_recount() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("movies.csv");
        let mut body = String::from("title,rating\n");
        for i in 0..40 {
            body.push_str(&format!("movie{i},{}\n", 7.0 + (i % 30) as f64 / 10.0));
        }
        std::fs::write(&path, &body).unwrap();
        let pred = Predicate::parse("rating,ge,8.2").unwrap();
        let t = load_table_task(&path, pred.clone(), 25, 7).unwrap();
        assert_eq!(t.rows.len(), 25);
        // Second-pass recount over the sampled rows.
        let col = t.header.iter().position(|h| h == "rating").unwrap();
        let recount = t.rows.iter().filter(|r| pred.matches(&r[col])).count();
        assert_eq!(t.count, recount);
        // Determinism.
        let again = load_table_task(&path, pred, 25, 7).unwrap();
        assert_eq!(again.rows, t.rows);
    }

    #[test]
    fn ragged_row_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b\n1,2\n3\n").unwrap();
        let err = load_table_task(&path, Predicate::parse("a,eq,1").unwrap(), 10, 0).unwrap_err();
        match err {
            Error::MalformedRow { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn string_predicate_falls_back_to_exact_match() {
        let p = Predicate::parse("workclass,eq,Private").unwrap();
        assert!(p.matches(" Private "));
        assert!(!p.matches("Public"));
        let ge = Predicate::parse("name,ge,m").unwrap();
        assert!(ge.matches("zed"));
        assert!(!ge.matches("alice"));
    }

    #[test]
    fn infer_relevance_for_edge_lists() {
        let g = example_graph_task();
        let truth = infer_relevance(&g.task.elements, "What is the degree of node 0?").unwrap();
        assert_eq!(truth, g.truth.scores);
        assert!(infer_relevance(&g.task.elements, "no digits here").is_none());
    }
}

//! End-to-end counting runs: reduce, plan (anytime), contract, report.

use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::decomp::{AnytimeTd, Strategy, TreeDecomposition};
use crate::formula::{
    encode_vertex_cover, random_cubic_graph, serialize_dimacs, CnfFormula, FormulaError,
};
use crate::graph::{line_graph, Multigraph};
use crate::methods::{
    ft_rank_bound, plan_ft_with_td, plan_greedy, plan_lg_with_td, serialize_plan, Method,
    MethodError, PlanResult,
};
use crate::network::{
    contract, estimate_cost, reduce_wmc, structure_graph, NetworkError, TensorNetwork,
    DEFAULT_MEM_CAP,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("timed out")]
    Timeout,
    #[error("result exceeds memory cap ({entries} entries, cap {cap}); plan max rank {max_rank}")]
    MemCap {
        entries: u128,
        cap: u64,
        max_rank: usize,
        source_width: Option<usize>,
    },
    #[error("planning failed: {0}")]
    Method(#[from] MethodError),
    #[error(transparent)]
    Network(NetworkError),
}

impl From<NetworkError> for RunError {
    fn from(e: NetworkError) -> RunError {
        match e {
            NetworkError::Timeout => RunError::Timeout,
            other => RunError::Network(other),
        }
    }
}

/// Which planner(s) a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Greedy,
    LineGraph,
    FactorTree,
    Portfolio,
}

impl std::str::FromStr for MethodChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<MethodChoice, String> {
        match s {
            "greedy" => Ok(MethodChoice::Greedy),
            "lg" => Ok(MethodChoice::LineGraph),
            "ft" => Ok(MethodChoice::FactorTree),
            "portfolio" => Ok(MethodChoice::Portfolio),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub method: MethodChoice,
    pub strategies: Vec<Strategy>,
    pub seed: u64,
    /// wall-clock limit for the whole run, in seconds
    pub timeout: Option<f64>,
    /// largest tensor, in entries, the contraction may materialize
    pub mem_cap: u64,
    /// converts estimated flops into estimated seconds for the stop rule
    pub seconds_per_flop: f64,
    /// use this decomposition instead of running the heuristics
    pub import_td: Option<TreeDecomposition>,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            method: MethodChoice::FactorTree,
            strategies: vec![Strategy::MinFill, Strategy::MinDegree],
            seed: 0,
            timeout: None,
            mem_cap: DEFAULT_MEM_CAP,
            seconds_per_flop: 1e-10,
            import_td: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub count: f64,
    pub plan: PlanResult<f64>,
    pub plan_seconds: f64,
    pub contract_seconds: f64,
    pub total_seconds: f64,
}

impl RunReport {
    pub fn plan_text(&self) -> String {
        serialize_plan(&self.plan)
    }

    pub fn tree_text(&self) -> String {
        self.plan.tree.serialize()
    }
}

/// Counts the weighted models of `formula` under `cfg`.
pub fn count(formula: &CnfFormula, cfg: &RunConfig) -> Result<RunReport, RunError> {
    let start = Instant::now();
    let deadline = cfg
        .timeout
        .map(|s| start + Duration::from_secs_f64(s.max(0.0)));
    if cfg.method == MethodChoice::Portfolio {
        return portfolio(formula, cfg, start, deadline);
    }
    let mut net: TensorNetwork<f64> = reduce_wmc(formula);
    if net.tensors.is_empty() {
        // empty formula: the count is the empty product
        net = TensorNetwork::new(vec![crate::network::TaggedTensor::dense(
            crate::tensor::Tensor::scalar(1.0),
        )])
        .expect("single scalar network is valid");
    }
    let plan = plan(&net, cfg, start, deadline)?;
    finish(&plan, cfg, start, deadline)
}

fn finish(
    plan: &PlanResult<f64>,
    cfg: &RunConfig,
    start: Instant,
    deadline: Option<Instant>,
) -> Result<RunReport, RunError> {
    let plan_seconds = start.elapsed().as_secs_f64();
    let contract_start = Instant::now();
    let out = contract(&plan.network, &plan.tree, cfg.mem_cap, deadline).map_err(|e| match e {
        NetworkError::MemCap { entries, cap } => RunError::MemCap {
            entries,
            cap,
            max_rank: plan.max_rank,
            source_width: plan.source_width,
        },
        other => other.into(),
    })?;
    let count = out.value_at(&vec![0; out.rank()]);
    Ok(RunReport {
        count,
        plan: plan.clone(),
        plan_seconds,
        contract_seconds: contract_start.elapsed().as_secs_f64(),
        total_seconds: start.elapsed().as_secs_f64(),
    })
}

fn plan(
    net: &TensorNetwork<f64>,
    cfg: &RunConfig,
    start: Instant,
    deadline: Option<Instant>,
) -> Result<PlanResult<f64>, RunError> {
    let method = match cfg.method {
        MethodChoice::Greedy => Method::Greedy,
        MethodChoice::LineGraph => Method::LineGraph,
        MethodChoice::FactorTree => Method::FactorTree,
        MethodChoice::Portfolio => unreachable!("portfolio plans per thread"),
    };
    let sg = structure_graph(net);
    // with no indices at all there is nothing to decompose; any order works
    if method == Method::Greedy || sg.graph.num_edges() == 0 {
        return Ok(plan_greedy(net, cfg.seed));
    }
    let plan_one = |td: &TreeDecomposition| -> Result<PlanResult<f64>, MethodError> {
        match method {
            Method::LineGraph => plan_lg_with_td(net, td),
            Method::FactorTree => plan_ft_with_td(net, td),
            Method::Greedy => unreachable!(),
        }
    };
    if let Some(td) = &cfg.import_td {
        return Ok(plan_one(td)?);
    }

    let source = match method {
        Method::LineGraph => line_graph(&sg.graph),
        _ => sg.graph.clone(),
    };
    let producer_deadline = deadline.unwrap_or_else(|| Instant::now() + Duration::from_secs(3600));
    let strategies = cfg.strategies.clone();
    let seed = cfg.seed;
    let stop = std::sync::Arc::new(std::sync::atomic::AtomicBool::new(false));
    let stop_producer = stop.clone();
    let (tx, rx) = mpsc::channel::<TreeDecomposition>();
    let producer = thread::spawn(move || {
        let stream =
            AnytimeTd::new(&source, strategies, producer_deadline, seed).with_stop(stop_producer);
        for td in stream {
            if tx.send(td).is_err() {
                return;
            }
        }
    });

    let mut best: Option<(f64, PlanResult<f64>)> = None;
    loop {
        let now = Instant::now();
        // once a plan exists, stop when more planning can no longer pay for
        // itself: elapsed planning time has reached the estimated
        // contraction time of the best plan so far
        let mut wait = Duration::from_secs(3600);
        if let Some((_, p)) = &best {
            let est = estimate_cost(&p.network, &p.tree, cfg.seconds_per_flop);
            let planned = (now - start).as_secs_f64();
            if planned >= est {
                break;
            }
            wait = wait.min(Duration::from_secs_f64(est - planned));
        }
        if let Some(d) = deadline {
            if now >= d {
                break;
            }
            wait = wait.min(d - now);
        }
        match rx.recv_timeout(wait) {
            Ok(td) => {
                let p = plan_one(&td)?;
                let cost = p.estimated_flops();
                if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                    best = Some((cost, p));
                }
            }
            Err(mpsc::RecvTimeoutError::Timeout) => break,
            Err(mpsc::RecvTimeoutError::Disconnected) => break,
        }
    }
    stop.store(true, std::sync::atomic::Ordering::Relaxed);
    drop(rx);
    let _ = producer.join();
    match best {
        Some((_, p)) => Ok(p),
        None => Err(RunError::Timeout),
    }
}

/// Runs all three planners in parallel and returns the first success.
fn portfolio(
    formula: &CnfFormula,
    cfg: &RunConfig,
    _start: Instant,
    _deadline: Option<Instant>,
) -> Result<RunReport, RunError> {
    let (tx, rx) = mpsc::channel::<Result<RunReport, RunError>>();
    let mut handles = Vec::new();
    for method in [
        MethodChoice::FactorTree,
        MethodChoice::LineGraph,
        MethodChoice::Greedy,
    ] {
        let tx = tx.clone();
        let f = formula.clone();
        let mut c = cfg.clone();
        c.method = method;
        handles.push(thread::spawn(move || {
            let _ = tx.send(count(&f, &c));
        }));
    }
    drop(tx);
    let mut first_err = None;
    let mut winner = None;
    for res in rx {
        match res {
            Ok(r) => {
                winner = Some(r);
                break;
            }
            Err(e) => first_err = Some(first_err.unwrap_or(e)),
        }
    }
    // remaining threads unblock once their sends fail or they finish
    for h in handles {
        let _ = h.join();
    }
    match winner {
        Some(r) => Ok(r),
        None => Err(first_err.unwrap_or(RunError::Timeout)),
    }
}

/// Generates a weighted vertex-cover counting benchmark over a random
/// 3-regular graph, in DIMACS form.
pub fn gen_cubic_vc(n: usize, seed: u64) -> Result<String, FormulaError> {
    let g = random_cubic_graph(n, seed)?;
    Ok(serialize_dimacs(&encode_vertex_cover(&g)))
}

/// Structural report for a formula: sizes, degree spread, and the best
/// decomposition widths found for each planning route within `budget`
/// seconds, with the rank bounds they imply.
pub fn inspect(formula: &CnfFormula, budget: f64) -> String {
    let net: TensorNetwork<f64> = reduce_wmc(formula);
    let sg = structure_graph(&net);
    let g = &sg.graph;
    let mut out = String::new();
    let mut line = |s: String| {
        out.push_str("c ");
        out.push_str(&s);
        out.push('\n');
    };
    line(format!(
        "formula variables {} clauses {}",
        formula.num_vars,
        formula.clauses.len()
    ));
    line(format!(
        "network tensors {} bonds {}",
        net.tensors.len(),
        net.bond_indices().len()
    ));
    line(format!(
        "structure-graph vertices {} edges {}",
        g.num_vertices(),
        g.num_edges()
    ));
    let max_deg = g.vertices().map(|v| g.degree(v)).max().unwrap_or(0);
    line(format!("max tensor rank {max_deg}"));
    if g.num_edges() == 0 {
        line("no bonds; any order works".to_string());
        return out;
    }
    let half = Duration::from_secs_f64((budget / 2.0).max(0.01));
    let best_width = |graph: &Multigraph| {
        AnytimeTd::new(
            graph,
            vec![Strategy::MinFill, Strategy::MinDegree],
            Instant::now() + half,
            0,
        )
        .map(|td| td.width())
        .min()
    };
    if let Some(w) = best_width(&line_graph(g)) {
        line(format!(
            "line-graph route: decomposition width {w}, rank bound {}",
            w + 1
        ));
    }
    if let Some(w) = best_width(g) {
        line(format!(
            "factoring route: decomposition width {w}, rank bound {} (pieces have rank <= 3)",
            ft_rank_bound(w)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{brute_force_wmc, parse_dimacs};

    const SMALL: &str = "p cnf 4 4\n1 2 -3 0\n1 3 4 0\n-2 -3 0\n-3 -4 0\n";

    #[test]
    fn count_all_methods_agree() {
        let f = parse_dimacs(SMALL).unwrap();
        let want = brute_force_wmc(&f).unwrap();
        for method in [
            MethodChoice::Greedy,
            MethodChoice::LineGraph,
            MethodChoice::FactorTree,
            MethodChoice::Portfolio,
        ] {
            let cfg = RunConfig {
                method,
                timeout: Some(30.0),
                ..RunConfig::default()
            };
            let r = count(&f, &cfg).unwrap();
            assert!(
                (r.count - want).abs() < 1e-9,
                "{method:?}: {} vs {want}",
                r.count
            );
        }
    }

    #[test]
    fn count_empty_formula() {
        let f = parse_dimacs("p cnf 0 0\n").unwrap();
        let r = count(&f, &RunConfig::default()).unwrap();
        assert!((r.count - 1.0).abs() < 1e-12);
    }

    #[test]
    fn count_unused_variables() {
        let f = parse_dimacs("p cnf 3 1\n1 0\n").unwrap();
        let r = count(&f, &RunConfig::default()).unwrap();
        assert!((r.count - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_timeout_times_out() {
        let f = parse_dimacs(SMALL).unwrap();
        let cfg = RunConfig {
            timeout: Some(0.0),
            ..RunConfig::default()
        };
        match count(&f, &cfg) {
            Err(RunError::Timeout) => {}
            other => panic!("expected timeout, got {other:?}"),
        }
    }

    #[test]
    fn tiny_mem_cap_reports_cap() {
        let f = parse_dimacs(SMALL).unwrap();
        let cfg = RunConfig {
            method: MethodChoice::Greedy,
            mem_cap: 1,
            ..RunConfig::default()
        };
        match count(&f, &cfg) {
            Err(RunError::MemCap { .. }) => {}
            other => panic!("expected mem cap, got {other:?}"),
        }
    }

    #[test]
    fn gen_is_parseable_and_deterministic() {
        let a = gen_cubic_vc(10, 7).unwrap();
        let b = gen_cubic_vc(10, 7).unwrap();
        assert_eq!(a, b);
        let f = parse_dimacs(&a).unwrap();
        assert!(f.num_vars >= 10);
    }

    #[test]
    fn inspect_mentions_routes() {
        let f = parse_dimacs(SMALL).unwrap();
        let text = inspect(&f, 0.2);
        assert!(text.contains("structure-graph"));
        assert!(text.contains("rank bound"));
    }
}

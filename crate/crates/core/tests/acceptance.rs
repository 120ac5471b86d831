//! End-to-end acceptance checks for the whole pipeline, one test per
//! criterion. Each prints a single summary line on success.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tncount::decomp::{
    binarize, heuristic_td, simplify_leaves, validate_td, AnytimeTd, Strategy, TreeDecomposition,
};
use tncount::driver::{count, MethodChoice, RunConfig, RunError};
use tncount::formula::{brute_force_wmc, parse_dimacs, CnfFormula};
use tncount::graph::{line_graph, EdgeCliqueCover, Multigraph};
use tncount::methods::{
    carving_from_line_td, ft_rank_bound, plan_ft_with_td, plan_greedy, plan_lg, plan_lg_with_td,
};
use tncount::network::{
    carving_width, contract, max_rank, reduce_wmc, structure_graph, ContractionTree, NetworkError,
    TensorKind, TensorNetwork, DEFAULT_MEM_CAP,
};

const FIG_DIMACS: &str = "p cnf 4 4\n1 2 -3 0\n1 3 4 0\n-2 -3 0\n-3 -4 0\n";
const BIG_CAP: u64 = 1 << 34;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn random_formula(rng: &mut ChaCha8Rng, max_vars: usize, max_clauses: usize) -> CnfFormula {
    let nv = rng.gen_range(3..=max_vars);
    // keep clause count proportional so no single variable's tensor is huge
    let nc = rng.gen_range(1..=max_clauses.min(2 * nv));
    let mut clauses = Vec::with_capacity(nc);
    for _ in 0..nc {
        let len = rng.gen_range(1..=3.min(nv));
        let mut vars: Vec<usize> = (1..=nv).collect();
        for i in 0..len {
            let j = rng.gen_range(i..vars.len());
            vars.swap(i, j);
        }
        let clause: Vec<i64> = vars[..len]
            .iter()
            .map(|&v| if rng.gen_bool(0.5) { v as i64 } else { -(v as i64) })
            .collect();
        clauses.push(clause);
    }
    let weights = (0..nv).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
    CnfFormula {
        num_vars: nv,
        clauses,
        weights,
    }
}

/// Random loop-free multigraph with no isolated vertices.
fn random_multigraph(rng: &mut ChaCha8Rng, max_vertices: usize) -> Multigraph {
    let n = rng.gen_range(2..=max_vertices);
    let m = rng.gen_range(1..=2 * n);
    let mut g = Multigraph::new(n);
    for _ in 0..m {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v {
            g.add_edge(u, v).unwrap();
        }
    }
    for v in 0..n {
        if g.degree(v) == 0 {
            let u = if v == 0 { 1 } else { v - 1 };
            g.add_edge(u, v).unwrap();
        }
    }
    g
}

fn run(f: &CnfFormula, method: MethodChoice) -> Result<f64, RunError> {
    let cfg = RunConfig {
        method,
        timeout: Some(120.0),
        ..RunConfig::default()
    };
    count(f, &cfg).map(|r| r.count)
}

#[test]
fn acceptance_01_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x01);
    for case in 0..500 {
        let f = random_formula(&mut rng, 15, 30);
        let want = brute_force_wmc(&f).unwrap();
        for method in [
            MethodChoice::Greedy,
            MethodChoice::LineGraph,
            MethodChoice::FactorTree,
        ] {
            let got = run(&f, method).unwrap();
            assert!(
                rel_close(got, want, 1e-9),
                "case {case} {method:?}: {got} vs {want}"
            );
        }
    }
    assert!(start.elapsed() < Duration::from_secs(120));
    println!("PASS acceptance 01: 500 random formulas, all methods match the oracle within 1e-9");
}

/// All unordered rooted binary trees over the given leaf slots.
fn rooted_trees(leaves: &[usize]) -> Vec<ContractionTree> {
    if leaves.len() == 1 {
        return vec![ContractionTree::Leaf(leaves[0])];
    }
    let first = leaves[0];
    let rest = &leaves[1..];
    let mut out = Vec::new();
    // the left child is the subtree containing the first leaf
    for mask in 0..(1u32 << rest.len()) - 1 {
        let mut left = vec![first];
        let mut right = Vec::new();
        for (i, &l) in rest.iter().enumerate() {
            if mask >> i & 1 == 1 {
                left.push(l);
            } else {
                right.push(l);
            }
        }
        for lt in rooted_trees(&left) {
            for rt in rooted_trees(&right) {
                out.push(ContractionTree::branch(lt.clone(), rt.clone()));
            }
        }
    }
    out
}

#[test]
fn acceptance_02_small_network_exhaustive_orders() {
    let f = parse_dimacs(FIG_DIMACS).unwrap();
    let net: TensorNetwork<f64> = reduce_wmc(&f);
    assert_eq!(net.tensors.len(), 8);
    assert_eq!(net.bond_indices().len(), 10);
    assert!(net.free_indices().is_empty());
    let sg = structure_graph(&net);
    assert_eq!(sg.graph.num_vertices(), 9);

    // every contraction order: unrooted binary trees over the 8 tensors,
    // rooted at the arc next to tensor 0
    let slots: Vec<usize> = (1..8).collect();
    let all: Vec<ContractionTree> = rooted_trees(&slots)
        .into_iter()
        .map(|t| ContractionTree::branch(ContractionTree::Leaf(0), t))
        .collect();
    assert_eq!(all.len(), 10_395);
    let mut best: Option<(usize, &ContractionTree)> = None;
    for t in &all {
        let r = max_rank(&net, t);
        if best.is_none_or(|(b, _)| r < b) {
            best = Some((r, t));
        }
    }
    let (width, tree) = best.unwrap();
    assert_eq!(width, 4);
    let out = contract(&net, tree, BIG_CAP, None).unwrap();
    let got = out.value_at(&[]);
    assert!((got - 7.0).abs() < 1e-12, "{got}");
    println!("PASS acceptance 02: 10395 orders enumerated, min width 4, count 7.0");
}

#[test]
fn acceptance_03_fixed_decomposition_factoring() {
    let f = parse_dimacs(FIG_DIMACS).unwrap();
    let net: TensorNetwork<f64> = reduce_wmc(&f);
    // structure-graph slots: variables 0..4, clauses 4..8, free vertex 8
    let td = TreeDecomposition {
        bags: vec![
            vec![0, 1, 2, 4],
            vec![1, 2, 6],
            vec![0, 1, 2],
            vec![0, 2, 3],
            vec![0, 2, 3, 5],
            vec![2, 3, 7],
        ],
        neighbors: vec![vec![2], vec![2], vec![0, 1, 3], vec![2, 4, 5], vec![3], vec![3]],
    };
    assert_eq!(td.width(), 3);
    let plan = plan_ft_with_td(&net, &td).unwrap();

    // the third variable appears in all four clauses; its rank-4 tensor must
    // split into exactly two rank-3 halves joined by one fresh bond
    let y_ids: Vec<u64> = net.tensors[2].indices().iter().map(|i| i.id()).collect();
    assert_eq!(y_ids.len(), 4);
    let holders: Vec<usize> = (0..plan.network.tensors.len())
        .filter(|&s| {
            let t = &plan.network.tensors[s];
            // the clause tensors see these indices too; the variable's own
            // pieces are the copy tensors carrying them
            matches!(t.kind, TensorKind::WeightedCopy { .. })
                && t.indices().iter().any(|i| y_ids.contains(&i.id()))
        })
        .collect();
    assert_eq!(holders.len(), 2, "split into two pieces");
    for &h in &holders {
        let t = &plan.network.tensors[h];
        assert_eq!(t.rank(), 3);
        assert!(matches!(t.kind, TensorKind::WeightedCopy { .. }));
        assert_eq!(
            t.indices().iter().filter(|i| y_ids.contains(&i.id())).count(),
            2
        );
    }
    let shared: Vec<u64> = plan.network.tensors[holders[0]]
        .indices()
        .iter()
        .map(|i| i.id())
        .filter(|id| {
            plan.network.tensors[holders[1]]
                .indices()
                .iter()
                .any(|j| j.id() == *id)
        })
        .collect();
    assert_eq!(shared.len(), 1, "one connecting bond");

    assert_eq!(plan.max_rank, 3);
    let out = contract(&plan.network, &plan.tree, BIG_CAP, None).unwrap();
    assert!((out.value_at(&[]) - 7.0).abs() < 1e-12);
    println!("PASS acceptance 03: fixed width-3 decomposition splits the shared variable into two rank-3 pieces, plan max rank 3, count 7.0");
}

#[test]
fn acceptance_04_line_route_width_bound() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x04);
    let mut checked = 0usize;
    for case in 0..200 {
        let g = random_multigraph(&mut rng, 40);
        let lg = line_graph(&g);
        for strategy in [Strategy::MinFill, Strategy::MinDegree] {
            let deadline = Instant::now() + Duration::from_millis(30);
            for td in AnytimeTd::new(&lg, vec![strategy], deadline, case) {
                let carv = carving_from_line_td(&g, &td).unwrap();
                let errs = carv.validate(&g);
                assert!(errs.is_empty(), "case {case}: {errs:?}");
                let cw = carving_width(&carv, &g);
                assert!(
                    cw <= td.width() + 1,
                    "case {case}: carving width {cw} > {} + 1",
                    td.width()
                );
                checked += 1;
            }
        }
    }
    assert!(start.elapsed() < Duration::from_secs(300));
    println!("PASS acceptance 04: {checked} line-graph decompositions over 200 multigraphs, carving width always <= width + 1");
}

#[test]
fn acceptance_05_factoring_route_rank_bound() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x05);
    let mut checked = 0usize;
    for case in 0..200 {
        let f = if case % 4 == 0 {
            // force a high-occurrence variable
            let mut f = random_formula(&mut rng, 6, 8);
            let reps = rng.gen_range(10..=14);
            for k in 0..reps {
                let other = 2 + (k % (f.num_vars - 1)) as i64;
                let sign = if k % 2 == 0 { 1 } else { -1 };
                f.clauses.push(vec![1, sign * other]);
            }
            f
        } else {
            random_formula(&mut rng, 12, 24)
        };
        let want = brute_force_wmc(&f).unwrap();
        let net: TensorNetwork<f64> = reduce_wmc(&f);
        let sg = structure_graph(&net);
        if sg.graph.num_edges() == 0 {
            continue;
        }
        let deadline = Instant::now() + Duration::from_millis(30);
        for td in AnytimeTd::new(
            &sg.graph,
            vec![Strategy::MinFill, Strategy::MinDegree],
            deadline,
            case,
        ) {
            let w = td.width();
            if w < 1 {
                continue;
            }
            let plan = plan_ft_with_td(&net, &td).unwrap();
            for t in &plan.network.tensors {
                assert!(t.rank() <= 3, "case {case}: rank {} piece", t.rank());
                for i in t.indices() {
                    assert_eq!(i.dim(), 2, "case {case}: bond dimension");
                }
            }
            assert!(
                plan.max_rank <= ft_rank_bound(w),
                "case {case}: max rank {} > bound {} at width {w}",
                plan.max_rank,
                ft_rank_bound(w)
            );
            let out = contract(&plan.network, &plan.tree, BIG_CAP, None).unwrap();
            assert!(
                rel_close(out.value_at(&[]), want, 1e-9),
                "case {case}: {} vs {want}",
                out.value_at(&[])
            );
            checked += 1;
        }
    }
    assert!(start.elapsed() < Duration::from_secs(600));
    println!("PASS acceptance 05: {checked} factored plans over 200 formulas, ranks <= 3, max rank within bound, counts match");
}

#[test]
fn acceptance_06_high_occurrence_variable() {
    // one variable shared by 25 clauses: an unfactored plan cannot avoid the
    // rank-25 tensor, which exceeds the default memory cap
    let mut clauses = Vec::new();
    for i in 0..25i64 {
        clauses.push(vec![1, i + 2]);
    }
    let f = CnfFormula::unweighted(26, clauses);
    let net: TensorNetwork<f64> = reduce_wmc(&f);

    let greedy = plan_greedy(&net, 0);
    assert!(greedy.max_rank >= 25, "greedy max rank {}", greedy.max_rank);
    match contract(&greedy.network, &greedy.tree, DEFAULT_MEM_CAP, None) {
        Err(NetworkError::MemCap { .. }) => {}
        other => panic!("expected greedy mem-cap refusal, got {other:?}"),
    }

    let sg = structure_graph(&net);
    let lg = line_graph(&sg.graph);
    let deadline = Instant::now() + Duration::from_millis(200);
    let lg_plan = plan_lg(
        &net,
        AnytimeTd::new(&lg, vec![Strategy::MinFill, Strategy::MinDegree], deadline, 0),
    )
    .unwrap();
    assert!(lg_plan.max_rank >= 25, "lg max rank {}", lg_plan.max_rank);
    match contract(&lg_plan.network, &lg_plan.tree, DEFAULT_MEM_CAP, None) {
        Err(NetworkError::MemCap { .. }) => {}
        other => panic!("expected lg mem-cap refusal, got {other:?}"),
    }

    let deadline = Instant::now() + Duration::from_millis(200);
    let ft_plan = plan_ft(
        &net,
        AnytimeTd::new(
            &sg.graph,
            vec![Strategy::MinFill, Strategy::MinDegree],
            deadline,
            0,
        ),
    )
    .unwrap();
    let w = ft_plan.source_width.unwrap();
    assert!(
        ft_plan.max_rank <= ft_rank_bound(w),
        "ft max rank {} > bound {}",
        ft_plan.max_rank,
        ft_rank_bound(w)
    );
    let out = contract(&ft_plan.network, &ft_plan.tree, DEFAULT_MEM_CAP, None).unwrap();
    // satisfied unless the shared variable is false and some partner is false
    let want = (1u64 << 25) as f64 + 1.0;
    assert!((out.value_at(&[]) - want).abs() < 1e-6 * want);
    println!("PASS acceptance 06: unfactored plans need rank >= 25 and hit the default memory cap; factoring completes the count");
}

use tncount::methods::plan_ft;

#[test]
fn acceptance_07_vertex_cover_scaling() {
    // exact comparison at exhaustible sizes
    for n in [10usize, 14, 18] {
        let text = tncount::driver::gen_cubic_vc(n, 42).unwrap();
        let f = parse_dimacs(&text).unwrap();
        let want = brute_force_wmc(&f).unwrap();
        for method in [
            MethodChoice::Greedy,
            MethodChoice::LineGraph,
            MethodChoice::FactorTree,
        ] {
            let got = run(&f, method).unwrap();
            assert!(rel_close(got, want, 1e-9), "n={n} {method:?}: {got} vs {want}");
        }
    }
    // mutual agreement at larger sizes
    for n in [50usize, 80] {
        let text = tncount::driver::gen_cubic_vc(n, 42).unwrap();
        let f = parse_dimacs(&text).unwrap();
        let mut counts = Vec::new();
        for method in [
            MethodChoice::Greedy,
            MethodChoice::LineGraph,
            MethodChoice::FactorTree,
        ] {
            let cfg = RunConfig {
                method,
                timeout: Some(120.0),
                mem_cap: BIG_CAP,
                ..RunConfig::default()
            };
            let started = Instant::now();
            let r = count(&f, &cfg).unwrap();
            if n == 80 && method == MethodChoice::LineGraph {
                assert!(
                    started.elapsed() < Duration::from_secs(120),
                    "line-graph route too slow at n=80"
                );
            }
            counts.push(r.count);
        }
        for c in &counts[1..] {
            assert!(
                rel_close(*c, counts[0], 1e-6),
                "n={n}: counts disagree: {counts:?}"
            );
        }
    }
    println!("PASS acceptance 07: vertex-cover counts exact at n=10/14/18, methods agree at n=50/80, line-graph route under 120s at n=80");
}

#[test]
fn acceptance_08_decomposition_fuzzing() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x08);
    for case in 0..1000u64 {
        let g = random_multigraph(&mut rng, 24);
        for strategy in [Strategy::MinFill, Strategy::MinDegree] {
            let td = heuristic_td(&g, strategy, case);
            let errs = validate_td(&td, &g);
            assert!(errs.is_empty(), "case {case}: {errs:?}");
            let b = binarize(&td);
            let errs = validate_td(&b, &g);
            assert!(errs.is_empty(), "case {case} binarized: {errs:?}");
            assert!((0..b.num_nodes()).all(|n| b.degree(n) <= 3));
            let cover = EdgeCliqueCover {
                sets: g
                    .edges()
                    .map(|e| {
                        let [u, v] = g.endpoints(e);
                        vec![u, v]
                    })
                    .collect(),
            };
            let (s, leaves) = simplify_leaves(&td, &cover, &g).unwrap();
            assert!(validate_td(&s, &g).is_empty(), "case {case} simplified");
            assert!(s.width() <= td.width());
            assert_eq!(leaves.len(), g.num_edges());
        }
    }
    // plan validity over random formulas, every route
    let mut rng = ChaCha8Rng::seed_from_u64(0x88);
    for case in 0..100u64 {
        let f = random_formula(&mut rng, 12, 20);
        let net: TensorNetwork<f64> = reduce_wmc(&f);
        let sg = structure_graph(&net);
        let mut plans = vec![plan_greedy(&net, case)];
        if sg.graph.num_edges() > 0 {
            let td = heuristic_td(&line_graph(&sg.graph), Strategy::MinFill, case);
            plans.push(plan_lg_with_td(&net, &td).unwrap());
            let td = heuristic_td(&sg.graph, Strategy::MinDegree, case);
            plans.push(plan_ft_with_td(&net, &td).unwrap());
        }
        for p in plans {
            p.tree.validate(&p.network).unwrap();
            assert_eq!(p.max_rank, max_rank(&p.network, &p.tree));
        }
    }
    println!("PASS acceptance 08: 1000 graphs and 100 formulas fuzzed, all decompositions and plans valid");
}

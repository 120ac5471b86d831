//! Tree decompositions: heuristic construction, validation, binarization,
//! leaf simplification, and PACE I/O.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{EdgeCliqueCover, Multigraph};

#[derive(Debug, Error)]
pub enum DecompError {
    #[error("invalid edge clique cover: {0}")]
    BadCover(String),
    #[error("cover set {0} is contained in no bag")]
    UncoveredSet(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Unrooted tree of bags. Node ids are dense; `bags[n]` is sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeDecomposition {
    pub neighbors: Vec<Vec<usize>>,
    pub bags: Vec<Vec<usize>>,
}

impl TreeDecomposition {
    pub fn num_nodes(&self) -> usize {
        self.bags.len()
    }

    pub fn width(&self) -> usize {
        self.bags.iter().map(|b| b.len()).max().unwrap_or(1) - 1
    }

    pub fn degree(&self, n: usize) -> usize {
        self.neighbors[n].len()
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&n| self.neighbors[n].len() <= 1)
            .collect()
    }
}

/// Width = max bag size minus 1.
pub fn td_width(td: &TreeDecomposition) -> usize {
    td.width()
}

/// Checks all three decomposition properties plus tree shape and the
/// degree-1-or-3 constraint, reporting every violation found.
pub fn validate_td(td: &TreeDecomposition, g: &Multigraph) -> Vec<String> {
    let mut errs = Vec::new();
    let n = td.num_nodes();
    if n == 0 {
        return vec!["decomposition has no nodes".into()];
    }
    // symmetric adjacency and tree shape
    let mut arc_count = 0;
    for a in 0..n {
        for &b in &td.neighbors[a] {
            if b >= n {
                errs.push(format!("node {a} adjacent to unknown node {b}"));
            } else if !td.neighbors[b].contains(&a) {
                errs.push(format!("asymmetric arc {a} -- {b}"));
            }
            arc_count += 1;
        }
    }
    if arc_count % 2 != 0 || arc_count / 2 != n - 1 {
        errs.push(format!("not a tree: {n} nodes, {} arcs", arc_count / 2));
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &td.neighbors[v] {
            if w < n && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    if seen.iter().any(|&s| !s) {
        errs.push("not a tree: disconnected".into());
    }
    if n > 2 {
        for a in 0..n {
            let d = td.degree(a);
            if d != 1 && d != 3 {
                errs.push(format!("node {a} has degree {d}, want 1 or 3"));
            }
        }
    }
    // property 1: vertex coverage
    let mut covered = vec![false; g.num_vertices()];
    for bag in &td.bags {
        for &v in bag {
            if v >= g.num_vertices() {
                errs.push(format!("bag vertex {v} out of range"));
            } else {
                covered[v] = true;
            }
        }
    }
    for (v, &c) in covered.iter().enumerate() {
        if !c {
            errs.push(format!("vertex {v} in no bag"));
        }
    }
    // property 2: edge coverage
    for e in g.edges() {
        let [u, v] = g.endpoints(e);
        if !td
            .bags
            .iter()
            .any(|bag| bag.contains(&u) && bag.contains(&v))
        {
            errs.push(format!("edge {e} ({u} -- {v}) jointly in no bag"));
        }
    }
    // property 3: connectivity of each vertex's bag set
    for v in g.vertices() {
        let nodes: Vec<usize> = (0..n).filter(|&a| td.bags[a].contains(&v)).collect();
        if nodes.len() <= 1 {
            continue;
        }
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        let mut stack = vec![nodes[0]];
        seen.insert(nodes[0]);
        while let Some(a) = stack.pop() {
            for &b in &td.neighbors[a] {
                if b < n && td.bags[b].contains(&v) && seen.insert(b) {
                    stack.push(b);
                }
            }
        }
        if seen.len() != nodes.len() {
            errs.push(format!("bags containing vertex {v} are disconnected"));
        }
    }
    errs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    MinDegree,
    MinFill,
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "min-degree" => Ok(Strategy::MinDegree),
            "min-fill" => Ok(Strategy::MinFill),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

/// Greedy elimination tree decomposition. Ties are broken by a seeded
/// shuffle, so the result is deterministic per `(strategy, seed)`.
pub fn heuristic_td(g: &Multigraph, strategy: Strategy, seed: u64) -> TreeDecomposition {
    let simple = g.simplified();
    let n = simple.num_vertices();
    assert!(n > 0, "graph must be non-empty");
    let mut adj: Vec<BTreeSet<usize>> = (0..n)
        .map(|v| simple.neighbors(v).collect::<BTreeSet<usize>>())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tiebreak: Vec<usize> = (0..n).collect();
    tiebreak.shuffle(&mut rng);

    let mut alive: BTreeSet<usize> = (0..n).collect();
    let mut order = Vec::with_capacity(n);
    let mut bags: Vec<Vec<usize>> = Vec::with_capacity(n);
    while let Some(&first) = alive.iter().next() {
        let mut best = first;
        let mut best_score = (usize::MAX, usize::MAX);
        for &v in &alive {
            let score = match strategy {
                Strategy::MinDegree => adj[v].len(),
                Strategy::MinFill => {
                    let nbrs: Vec<usize> = adj[v].iter().copied().collect();
                    let mut fill = 0;
                    for (i, &a) in nbrs.iter().enumerate() {
                        for &b in &nbrs[i + 1..] {
                            if !adj[a].contains(&b) {
                                fill += 1;
                            }
                        }
                    }
                    fill
                }
            };
            if (score, tiebreak[v]) < best_score {
                best_score = (score, tiebreak[v]);
                best = v;
            }
        }
        let v = best;
        let mut bag: Vec<usize> = adj[v].iter().copied().collect();
        bag.push(v);
        bag.sort_unstable();
        bags.push(bag);
        order.push(v);
        let nbrs: Vec<usize> = adj[v].iter().copied().collect();
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        for &a in &nbrs {
            adj[a].remove(&v);
        }
        adj[v].clear();
        alive.remove(&v);
    }

    // bag-tree assembly: node i links to the node of the first-eliminated
    // vertex among bag_i minus v_i; remaining roots are chained
    let position: Vec<usize> = {
        let mut p = vec![0; n];
        for (i, &v) in order.iter().enumerate() {
            p[v] = i;
        }
        p
    };
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut roots = Vec::new();
    for i in 0..n {
        let parent = bags[i]
            .iter()
            .filter(|&&u| u != order[i])
            .map(|&u| position[u])
            .min();
        match parent {
            Some(p) => {
                neighbors[i].push(p);
                neighbors[p].push(i);
            }
            None => roots.push(i),
        }
    }
    for pair in roots.windows(2) {
        neighbors[pair[0]].push(pair[1]);
        neighbors[pair[1]].push(pair[0]);
    }
    binarize(&TreeDecomposition { neighbors, bags })
}

/// Rebuilds the decomposition so every node has degree 1 or 3: high-degree
/// nodes split into chains of duplicated bags, degree-2 nodes gain a
/// duplicate pendant leaf. Width is unchanged.
pub fn binarize(td: &TreeDecomposition) -> TreeDecomposition {
    let mut t = Builder::from_td(td);
    loop {
        let Some(n) = t.alive_nodes().find(|&n| t.degree(n) > 3) else {
            break;
        };
        // peel two neighbors off onto a duplicate bag
        let a = t.nodes[n].as_ref().unwrap().neighbors[0];
        let b = t.nodes[n].as_ref().unwrap().neighbors[1];
        let bag = t.nodes[n].as_ref().unwrap().bag.clone();
        let m = t.add_node(bag);
        t.disconnect(n, a);
        t.disconnect(n, b);
        t.connect(m, a);
        t.connect(m, b);
        t.connect(m, n);
    }
    if t.alive_nodes().count() > 2 {
        let two: Vec<usize> = t.alive_nodes().filter(|&n| t.degree(n) == 2).collect();
        for n in two {
            let bag = t.nodes[n].as_ref().unwrap().bag.clone();
            let leaf = t.add_node(bag);
            t.connect(n, leaf);
        }
    }
    t.finish().0
}

/// Mutable tree-of-bags under construction; node slots are stable until
/// `finish` compacts them.
struct Builder {
    nodes: Vec<Option<BuilderNode>>,
}

struct BuilderNode {
    bag: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Builder {
    fn from_td(td: &TreeDecomposition) -> Builder {
        Builder {
            nodes: (0..td.num_nodes())
                .map(|n| {
                    Some(BuilderNode {
                        bag: td.bags[n].clone(),
                        neighbors: td.neighbors[n].clone(),
                    })
                })
                .collect(),
        }
    }

    fn alive_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&n| self.nodes[n].is_some())
    }

    fn degree(&self, n: usize) -> usize {
        self.nodes[n].as_ref().unwrap().neighbors.len()
    }

    fn add_node(&mut self, bag: Vec<usize>) -> usize {
        self.nodes.push(Some(BuilderNode {
            bag,
            neighbors: Vec::new(),
        }));
        self.nodes.len() - 1
    }

    fn connect(&mut self, a: usize, b: usize) {
        self.nodes[a].as_mut().unwrap().neighbors.push(b);
        self.nodes[b].as_mut().unwrap().neighbors.push(a);
    }

    fn disconnect(&mut self, a: usize, b: usize) {
        self.nodes[a]
            .as_mut()
            .unwrap()
            .neighbors
            .retain(|&x| x != b);
        self.nodes[b]
            .as_mut()
            .unwrap()
            .neighbors
            .retain(|&x| x != a);
    }

    fn remove(&mut self, n: usize) {
        let nbrs = self.nodes[n].as_ref().unwrap().neighbors.clone();
        for b in nbrs {
            self.disconnect(n, b);
        }
        self.nodes[n] = None;
    }

    /// Removes a degree-2 node, joining its two neighbors.
    fn suppress(&mut self, n: usize) {
        let nbrs = self.nodes[n].as_ref().unwrap().neighbors.clone();
        debug_assert_eq!(nbrs.len(), 2);
        self.remove(n);
        self.connect(nbrs[0], nbrs[1]);
    }

    /// Subdivides the arc `a -- b` with a fresh node carrying `bag`.
    fn subdivide(&mut self, a: usize, b: usize, bag: Vec<usize>) -> usize {
        let m = self.add_node(bag);
        self.disconnect(a, b);
        self.connect(a, m);
        self.connect(m, b);
        m
    }

    /// Node minimizing the largest component left by its removal; ties by id.
    fn centroid(&self) -> usize {
        let alive: Vec<usize> = self.alive_nodes().collect();
        let total = alive.len();
        let mut best = alive[0];
        let mut best_score = usize::MAX;
        // subtree sizes by rooting at the first alive node
        let root = alive[0];
        let mut order = Vec::with_capacity(total);
        let mut parent: Vec<Option<usize>> = vec![None; self.nodes.len()];
        let mut stack = vec![root];
        let mut visited = vec![false; self.nodes.len()];
        visited[root] = true;
        while let Some(n) = stack.pop() {
            order.push(n);
            for &m in &self.nodes[n].as_ref().unwrap().neighbors {
                if !visited[m] {
                    visited[m] = true;
                    parent[m] = Some(n);
                    stack.push(m);
                }
            }
        }
        let mut size = vec![1usize; self.nodes.len()];
        for &n in order.iter().rev() {
            if let Some(p) = parent[n] {
                size[p] += size[n];
            }
        }
        for &n in &alive {
            let mut largest = total - size[n];
            for &m in &self.nodes[n].as_ref().unwrap().neighbors {
                if parent[m] == Some(n) {
                    largest = largest.max(size[m]);
                }
            }
            if (largest, n) < (best_score, best) || largest < best_score {
                best_score = largest;
                best = n;
            }
        }
        best
    }

    /// First hop from `n` toward `target`.
    fn step_toward(&self, n: usize, target: usize) -> Option<usize> {
        if n == target {
            return None;
        }
        let mut parent: Vec<Option<usize>> = vec![None; self.nodes.len()];
        let mut stack = vec![n];
        let mut visited = vec![false; self.nodes.len()];
        visited[n] = true;
        while let Some(a) = stack.pop() {
            if a == target {
                let mut cur = target;
                while parent[cur] != Some(n) {
                    cur = parent[cur].unwrap();
                }
                return Some(cur);
            }
            for &b in &self.nodes[a].as_ref().unwrap().neighbors {
                if !visited[b] {
                    visited[b] = true;
                    parent[b] = Some(a);
                    stack.push(b);
                }
            }
        }
        None
    }

    /// Compacts into a `TreeDecomposition`, returning the id remap.
    fn finish(self) -> (TreeDecomposition, Vec<Option<usize>>) {
        let mut remap = vec![None; self.nodes.len()];
        let mut bags = Vec::new();
        let mut old_ids = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(n) = node {
                remap[i] = Some(bags.len());
                bags.push(n.bag.clone());
                old_ids.push(i);
            }
        }
        let neighbors = old_ids
            .iter()
            .map(|&i| {
                self.nodes[i]
                    .as_ref()
                    .unwrap()
                    .neighbors
                    .iter()
                    .map(|&j| remap[j].unwrap())
                    .collect()
            })
            .collect();
        (TreeDecomposition { neighbors, bags }, remap)
    }
}

/// Reshapes a tree decomposition so its leaves are exactly the sets of an
/// edge clique cover, one leaf per label, without increasing the width.
///
/// Returns the new decomposition and, per cover label, the leaf node holding
/// that label's set as its bag.
pub fn simplify_leaves(
    td: &TreeDecomposition,
    cover: &EdgeCliqueCover,
    g: &Multigraph,
) -> Result<(TreeDecomposition, Vec<usize>), DecompError> {
    cover.validate(g).map_err(DecompError::BadCover)?;
    let mut t = Builder::from_td(td);
    let mut label_leaves = Vec::with_capacity(cover.sets.len());
    for (label, set) in cover.sets.iter().enumerate() {
        let mut sorted = set.clone();
        sorted.sort_unstable();
        sorted.dedup();
        let host = t
            .alive_nodes()
            .find(|&n| {
                let bag = &t.nodes[n].as_ref().unwrap().bag;
                sorted.iter().all(|v| bag.contains(v))
            })
            .ok_or(DecompError::UncoveredSet(label))?;
        let leaf = if t.degree(host) == 0 {
            let leaf = t.add_node(sorted);
            t.connect(host, leaf);
            leaf
        } else {
            // splice onto the arc from the host toward the centroid, or the
            // lowest-id neighbor when the host is the centroid itself
            let centroid = t.centroid();
            let toward = t
                .step_toward(host, centroid)
                .unwrap_or_else(|| *t.nodes[host].as_ref().unwrap().neighbors.iter().min().unwrap());
            let bag = t.nodes[host].as_ref().unwrap().bag.clone();
            let mid = t.subdivide(host, toward, bag);
            let leaf = t.add_node(sorted);
            t.connect(mid, leaf);
            leaf
        };
        label_leaves.push(leaf);
    }
    // prune leaves outside the label range
    loop {
        let Some(n) = t
            .alive_nodes()
            .find(|&n| t.degree(n) <= 1 && !label_leaves.contains(&n))
        else {
            break;
        };
        t.remove(n);
    }
    // the label leaves now satisfy coverage on their own, so interior
    // degree-2 nodes can be dropped outright
    if t.alive_nodes().count() > 2 {
        loop {
            let Some(n) = t
                .alive_nodes()
                .find(|&n| t.degree(n) == 2 && !label_leaves.contains(&n))
            else {
                break;
            };
            t.suppress(n);
        }
    }
    loop {
        let Some(n) = t.alive_nodes().find(|&n| t.degree(n) > 3) else {
            break;
        };
        let nbrs = t.nodes[n].as_ref().unwrap().neighbors.clone();
        let (a, b) = (nbrs[0], nbrs[1]);
        let bag = t.nodes[n].as_ref().unwrap().bag.clone();
        let m = t.add_node(bag);
        t.disconnect(n, a);
        t.disconnect(n, b);
        t.connect(m, a);
        t.connect(m, b);
        t.connect(m, n);
    }
    let (out, remap) = t.finish();
    let leaves = label_leaves
        .into_iter()
        .map(|l| remap[l].unwrap())
        .collect();
    Ok((out, leaves))
}

/// Anytime stream of tree decompositions of strictly decreasing width,
/// produced by seeded restarts over the given strategies until the deadline.
/// The first decomposition is always emitted, even past the deadline.
pub struct AnytimeTd<'g> {
    graph: &'g Multigraph,
    strategies: Vec<Strategy>,
    deadline: Instant,
    seed: u64,
    attempt: u64,
    best: Option<usize>,
    /// restarts stop once this width is reached (1, or 0 for edgeless graphs)
    floor: usize,
    /// set by a consumer to end the stream after the mandatory first emission
    stop: Option<std::sync::Arc<std::sync::atomic::AtomicBool>>,
}

impl<'g> AnytimeTd<'g> {
    pub fn new(
        graph: &'g Multigraph,
        strategies: Vec<Strategy>,
        deadline: Instant,
        seed: u64,
    ) -> AnytimeTd<'g> {
        assert!(!strategies.is_empty());
        let floor = if graph.num_edges() == 0 { 0 } else { 1 };
        AnytimeTd {
            graph,
            strategies,
            deadline,
            seed,
            attempt: 0,
            best: None,
            floor,
            stop: None,
        }
    }

    pub fn with_stop(
        mut self,
        stop: std::sync::Arc<std::sync::atomic::AtomicBool>,
    ) -> AnytimeTd<'g> {
        self.stop = Some(stop);
        self
    }
}

impl Iterator for AnytimeTd<'_> {
    type Item = TreeDecomposition;

    fn next(&mut self) -> Option<TreeDecomposition> {
        if let Some(best) = self.best {
            if best <= self.floor {
                return None;
            }
        }
        loop {
            let stopped = self
                .stop
                .as_ref()
                .is_some_and(|s| s.load(std::sync::atomic::Ordering::Relaxed));
            if self.best.is_some() && (stopped || Instant::now() >= self.deadline) {
                return None;
            }
            let strategy = self.strategies[(self.attempt as usize) % self.strategies.len()];
            let td = heuristic_td(self.graph, strategy, self.seed.wrapping_add(self.attempt));
            self.attempt += 1;
            let w = td.width();
            if self.best.is_none_or(|b| w < b) {
                self.best = Some(w);
                return Some(td);
            }
        }
    }
}

/// Reads PACE-2017 `.td`: `s td <bags> <max-bag> <n>`, `b <id> <verts...>`,
/// then bag-id arcs. Ids are 1-based.
pub fn read_pace_td(text: &str) -> Result<TreeDecomposition, DecompError> {
    let err = |line: usize, msg: String| DecompError::Parse { line, msg };
    let mut num_bags = None;
    let mut bags: Vec<Vec<usize>> = Vec::new();
    let mut neighbors: Vec<Vec<usize>> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('c') {
            continue;
        }
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts[0] == "s" {
            if parts.len() != 5 || parts[1] != "td" {
                return Err(err(line, format!("malformed solution line: {l}")));
            }
            let n: usize = parts[2]
                .parse()
                .map_err(|_| err(line, "malformed bag count".into()))?;
            num_bags = Some(n);
            bags = vec![Vec::new(); n];
            neighbors = vec![Vec::new(); n];
        } else if parts[0] == "b" {
            let n = num_bags.ok_or_else(|| err(line, "bag before solution line".into()))?;
            let id: usize = parts
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err(line, "malformed bag id".into()))?;
            if id == 0 || id > n {
                return Err(err(line, format!("bag id {id} out of range")));
            }
            let mut bag = Vec::new();
            for tok in &parts[2..] {
                let v: usize = tok
                    .parse()
                    .map_err(|_| err(line, format!("malformed bag vertex `{tok}`")))?;
                if v == 0 {
                    return Err(err(line, "bag vertex 0 (vertices are 1-based)".into()));
                }
                bag.push(v - 1);
            }
            bag.sort_unstable();
            bag.dedup();
            bags[id - 1] = bag;
        } else {
            let n = num_bags.ok_or_else(|| err(line, "arc before solution line".into()))?;
            if parts.len() != 2 {
                return Err(err(line, format!("malformed arc line: {l}")));
            }
            let a: usize = parts[0]
                .parse()
                .map_err(|_| err(line, "malformed arc endpoint".into()))?;
            let b: usize = parts[1]
                .parse()
                .map_err(|_| err(line, "malformed arc endpoint".into()))?;
            if a == 0 || b == 0 || a > n || b > n {
                return Err(err(line, format!("arc endpoint out of range: {l}")));
            }
            neighbors[a - 1].push(b - 1);
            neighbors[b - 1].push(a - 1);
        }
    }
    if num_bags.is_none() {
        return Err(err(0, "missing `s td` line".into()));
    }
    Ok(TreeDecomposition { neighbors, bags })
}

pub fn write_pace_td(td: &TreeDecomposition, num_graph_vertices: usize) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "s td {} {} {}",
        td.num_nodes(),
        td.bags.iter().map(|b| b.len()).max().unwrap_or(0),
        num_graph_vertices
    )
    .unwrap();
    for (i, bag) in td.bags.iter().enumerate() {
        write!(out, "b {}", i + 1).unwrap();
        for &v in bag {
            write!(out, " {}", v + 1).unwrap();
        }
        writeln!(out).unwrap();
    }
    for a in 0..td.num_nodes() {
        for &b in &td.neighbors[a] {
            if a < b {
                writeln!(out, "{} {}", a + 1, b + 1).unwrap();
            }
        }
    }
    out
}

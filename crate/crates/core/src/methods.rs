//! Contraction planning: greedy pairing, line-graph tree decompositions,
//! and factor-tree preprocessing.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::Instant;

use thiserror::Error;

use crate::decomp::{binarize, simplify_leaves, validate_td, DecompError, TreeDecomposition};
use crate::graph::{edge_incidence_cover, line_graph, EdgeCliqueCover, Multigraph};
use crate::network::{
    carving_to_tree, carving_width, estimate_flops, max_rank, structure_graph,
    CarvingDecomposition, ContractionTree, NetworkError, Polarity, TaggedTensor,
    TensorKind, TensorNetwork,
};
use crate::scalar::Scalar;
use crate::tensor::Index;

#[derive(Debug, Error)]
pub enum MethodError {
    #[error("structure graph has no edges")]
    EdgelessStructureGraph,
    #[error("invalid tree decomposition: {0:?}")]
    InvalidTd(Vec<String>),
    #[error("network has free indices; factoring requires a closed network")]
    FreeIndices,
    #[error("tensor is not tagged as factorable")]
    NotFactorable,
    #[error("bad dimension tree: {0}")]
    BadDimensionTree(String),
    #[error("decomposition stream produced nothing")]
    EmptyStream,
    #[error(transparent)]
    Decomp(#[from] DecompError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Greedy,
    LineGraph,
    FactorTree,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Greedy => "greedy",
            Method::LineGraph => "lg",
            Method::FactorTree => "ft",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "greedy" => Ok(Method::Greedy),
            "lg" => Ok(Method::LineGraph),
            "ft" => Ok(Method::FactorTree),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

/// A chosen contraction plan. For the factoring method the network is the
/// factored one; otherwise it is the input network unchanged.
#[derive(Debug, Clone)]
pub struct PlanResult<S> {
    pub network: TensorNetwork<S>,
    pub tree: ContractionTree,
    pub max_rank: usize,
    pub source_width: Option<usize>,
    pub method: Method,
    pub plan_seconds: f64,
}

impl<S: Scalar> PlanResult<S> {
    pub fn estimated_flops(&self) -> f64 {
        estimate_flops(&self.network, &self.tree)
    }
}

/// Line-oriented plan dump for debugging and fixtures.
pub fn serialize_plan<S: Scalar>(p: &PlanResult<S>) -> String {
    format!(
        "method {}\nsource-width {}\nmax-rank {}\ntensors {}\ntree {}\n",
        p.method,
        p.source_width
            .map_or_else(|| "-".to_string(), |w| w.to_string()),
        p.max_rank,
        p.network.tensors.len(),
        p.tree.serialize()
    )
}

fn mix(a: u64, b: u64) -> u64 {
    a.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(27) ^ b
}

fn greedy_tree<S: Scalar>(net: &TensorNetwork<S>, seed: u64) -> ContractionTree {
    assert!(!net.tensors.is_empty());
    // occurrence counts decide which indices vanish when both ends meet
    let mut total: HashMap<u64, usize> = HashMap::new();
    for t in &net.tensors {
        for i in t.indices() {
            *total.entry(i.id()).or_insert(0) += 1;
        }
    }
    struct Comp {
        tree: ContractionTree,
        free: BTreeSet<u64>,
        tb: u64,
    }
    let mut comps: Vec<Comp> = net
        .tensors
        .iter()
        .enumerate()
        .map(|(slot, t)| {
            let mut counts: HashMap<u64, usize> = HashMap::new();
            for i in t.indices() {
                *counts.entry(i.id()).or_insert(0) += 1;
            }
            Comp {
                tree: ContractionTree::Leaf(slot),
                free: counts
                    .into_iter()
                    .filter(|&(_, c)| c == 1)
                    .map(|(id, _)| id)
                    .collect(),
                tb: mix(seed, slot as u64 + 1),
            }
        })
        .collect();
    while comps.len() > 1 {
        let mut best = (0usize, 1usize);
        let mut best_score = (usize::MAX, u64::MAX);
        for i in 0..comps.len() {
            for j in (i + 1)..comps.len() {
                let rank = comps[i].free.symmetric_difference(&comps[j].free).count();
                let score = (rank, mix(comps[i].tb, comps[j].tb));
                if score < best_score {
                    best_score = score;
                    best = (i, j);
                }
            }
        }
        let (i, j) = best;
        let b = comps.swap_remove(j);
        let a = std::mem::replace(
            &mut comps[i],
            Comp {
                tree: ContractionTree::Leaf(0),
                free: BTreeSet::new(),
                tb: 0,
            },
        );
        comps[i] = Comp {
            tree: ContractionTree::branch(a.tree, b.tree),
            free: a.free.symmetric_difference(&b.free).copied().collect(),
            tb: mix(a.tb, b.tb),
        };
    }
    comps.pop().unwrap().tree
}

/// Greedy baseline: repeatedly contracts the pair whose result has the
/// smallest rank, with seeded tie-breaking.
pub fn plan_greedy<S: Scalar>(net: &TensorNetwork<S>, seed: u64) -> PlanResult<S> {
    let start = Instant::now();
    let tree = greedy_tree(net, seed);
    let mr = max_rank(net, &tree);
    PlanResult {
        network: net.clone(),
        tree,
        max_rank: mr,
        source_width: None,
        method: Method::Greedy,
        plan_seconds: start.elapsed().as_secs_f64(),
    }
}

/// Turns a tree decomposition of `Line(g)` into a carving decomposition of
/// `g` whose width is at most the decomposition width plus one: reshape the
/// decomposition so its leaves are the edge sets incident to each vertex,
/// then read the leaves as the vertices themselves.
pub fn carving_from_line_td(
    g: &Multigraph,
    td: &TreeDecomposition,
) -> Result<CarvingDecomposition, MethodError> {
    if g.num_edges() == 0 {
        return Err(MethodError::EdgelessStructureGraph);
    }
    let lg = line_graph(g);
    let errs = validate_td(td, &lg);
    let errs: Vec<String> = errs
        .into_iter()
        .filter(|e| !e.contains("want 1 or 3"))
        .collect();
    if !errs.is_empty() {
        return Err(MethodError::InvalidTd(errs));
    }
    let cover = edge_incidence_cover(g);
    let (s, label_leaves) = simplify_leaves(td, &cover, &lg)?;
    let mut leaf_of = vec![None; s.num_nodes()];
    for (vertex, &node) in label_leaves.iter().enumerate() {
        leaf_of[node] = Some(vertex);
    }
    let carv = CarvingDecomposition {
        neighbors: s.neighbors.clone(),
        leaf_of,
    };
    debug_assert!(carv.validate(g).is_empty(), "{:?}", carv.validate(g));
    Ok(carv)
}

/// Single-decomposition line-graph planning step.
pub fn plan_lg_with_td<S: Scalar>(
    net: &TensorNetwork<S>,
    td: &TreeDecomposition,
) -> Result<PlanResult<S>, MethodError> {
    let start = Instant::now();
    let sg = structure_graph(net);
    let carv = carving_from_line_td(&sg.graph, td)?;
    let tree = carving_to_tree(net, &carv)?;
    let mr = max_rank(net, &tree);
    debug_assert!(mr <= carving_width(&carv, &sg.graph));
    Ok(PlanResult {
        network: net.clone(),
        tree,
        max_rank: mr,
        source_width: Some(td.width()),
        method: Method::LineGraph,
        plan_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Consumes a stream of decompositions of the structure graph's line graph
/// and keeps the cheapest resulting plan (ties favor earlier emissions).
pub fn plan_lg<S: Scalar>(
    net: &TensorNetwork<S>,
    tds: impl IntoIterator<Item = TreeDecomposition>,
) -> Result<PlanResult<S>, MethodError> {
    let mut best: Option<(f64, PlanResult<S>)> = None;
    for td in tds {
        let plan = plan_lg_with_td(net, &td)?;
        let cost = plan.estimated_flops();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, plan));
        }
    }
    best.map(|(_, p)| p).ok_or(MethodError::EmptyStream)
}

/// Unrooted tree describing how to split one tensor: leaves carry the
/// tensor's indices, internal nodes become the factored pieces.
#[derive(Debug, Clone)]
pub struct DimensionTree {
    pub neighbors: Vec<Vec<usize>>,
    pub leaf_index: Vec<Option<Index>>,
}

/// Factors a tagged tensor over a dimension tree: each internal node
/// becomes one piece holding the indices of its leaf neighbors plus a fresh
/// binary bond per internal arc. Returns the pieces and, per tree node, the
/// piece slot it became (leaves map to none).
///
/// Weighted-copy tensors factor into plain copies with the weight pair kept
/// on the piece hosting the first index; clause tensors factor by threading
/// a "satisfied below" flag through each bond toward a root piece.
pub fn factor_tensor<S: Scalar>(
    a: &TaggedTensor<S>,
    t: &DimensionTree,
) -> Result<(TensorNetwork<S>, Vec<Option<usize>>), MethodError> {
    let n = t.neighbors.len();
    if n == 0 || t.leaf_index.len() != n {
        return Err(MethodError::BadDimensionTree("empty or ragged tree".into()));
    }
    let mut tree_ids: Vec<u64> = t.leaf_index.iter().flatten().map(|i| i.id()).collect();
    let mut tensor_ids: Vec<u64> = a.indices().iter().map(|i| i.id()).collect();
    tree_ids.sort_unstable();
    tensor_ids.sort_unstable();
    if tree_ids != tensor_ids {
        return Err(MethodError::BadDimensionTree(
            "tree leaves do not carry exactly the tensor's indices".into(),
        ));
    }
    for (node, idx) in t.leaf_index.iter().enumerate() {
        if idx.is_some() && t.neighbors[node].len() > 1 {
            return Err(MethodError::BadDimensionTree(format!(
                "index node {node} is not a leaf"
            )));
        }
    }
    let internals: Vec<usize> = (0..n).filter(|&m| t.leaf_index[m].is_none()).collect();
    let mut node_slots = vec![None; n];
    if internals.is_empty() {
        // one or two index leaves: the tensor stays whole
        node_slots[0] = Some(0);
        let net = TensorNetwork::new(vec![a.clone()])?;
        return Ok((net, node_slots));
    }
    for (slot, &m) in internals.iter().enumerate() {
        node_slots[m] = Some(slot);
    }
    // fresh bond per internal-internal arc
    let mut bonds: BTreeMap<(usize, usize), Index> = BTreeMap::new();
    for &m in &internals {
        for &o in &t.neighbors[m] {
            if t.leaf_index[o].is_none() && m < o {
                bonds.insert((m, o), Index::fresh(2));
            }
        }
    }
    let piece_indices = |m: usize| -> Vec<Index> {
        t.neighbors[m]
            .iter()
            .map(|&o| match t.leaf_index[o] {
                Some(i) => i,
                None => bonds[&(m.min(o), m.max(o))],
            })
            .collect()
    };
    let pieces: Vec<TaggedTensor<S>> = match &a.kind {
        TensorKind::WeightedCopy { w0, w1 } => {
            // the piece adjacent to the first index carries the weights
            let first = a.indices()[0].id();
            let host = *internals
                .iter()
                .find(|&&m| {
                    t.neighbors[m]
                        .iter()
                        .any(|&o| t.leaf_index[o].is_some_and(|i| i.id() == first))
                })
                .expect("every index leaf touches an internal node");
            internals
                .iter()
                .map(|&m| {
                    let (p0, p1) = if m == host {
                        (*w0, *w1)
                    } else {
                        (S::one(), S::one())
                    };
                    TaggedTensor::weighted_copy(piece_indices(m), p0, p1)
                })
                .collect()
        }
        TensorKind::ClauseFactor {
            polarities,
            parent: None,
        } => {
            let polarity_of: HashMap<u64, Polarity> = a
                .indices()
                .iter()
                .zip(polarities)
                .map(|(i, &p)| (i.id(), p))
                .collect();
            // orient internal arcs toward the smallest internal node
            let root = internals[0];
            let mut parent_node: HashMap<usize, usize> = HashMap::new();
            let mut stack = vec![root];
            let mut seen: BTreeSet<usize> = [root].into();
            while let Some(m) = stack.pop() {
                for &o in &t.neighbors[m] {
                    if t.leaf_index[o].is_none() && seen.insert(o) {
                        parent_node.insert(o, m);
                        stack.push(o);
                    }
                }
            }
            internals
                .iter()
                .map(|&m| {
                    let indices = piece_indices(m);
                    let mut parent_slot = None;
                    let pols: Vec<Polarity> = t.neighbors[m]
                        .iter()
                        .enumerate()
                        .map(|(pos, &o)| match t.leaf_index[o] {
                            Some(i) => polarity_of[&i.id()],
                            None => {
                                if parent_node.get(&m) == Some(&o) {
                                    parent_slot = Some(pos);
                                }
                                Polarity::Flag
                            }
                        })
                        .collect();
                    TaggedTensor::clause_factor(indices, pols, parent_slot)
                })
                .collect()
        }
        _ => return Err(MethodError::NotFactorable),
    };
    Ok((TensorNetwork::new(pieces)?, node_slots))
}

/// Unrooted-tree surgery helper with stable node slots, used to build the
/// factoring method's carving decomposition.
struct CarvBuilder {
    nbr: Vec<Option<Vec<usize>>>,
    leaf: Vec<Option<usize>>,
}

impl CarvBuilder {
    fn new() -> CarvBuilder {
        CarvBuilder {
            nbr: Vec::new(),
            leaf: Vec::new(),
        }
    }

    fn add(&mut self, leaf: Option<usize>) -> usize {
        self.nbr.push(Some(Vec::new()));
        self.leaf.push(leaf);
        self.nbr.len() - 1
    }

    fn alive(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nbr.len()).filter(|&n| self.nbr[n].is_some())
    }

    fn degree(&self, n: usize) -> usize {
        self.nbr[n].as_ref().unwrap().len()
    }

    fn connect(&mut self, a: usize, b: usize) {
        self.nbr[a].as_mut().unwrap().push(b);
        self.nbr[b].as_mut().unwrap().push(a);
    }

    fn disconnect(&mut self, a: usize, b: usize) {
        self.nbr[a].as_mut().unwrap().retain(|&x| x != b);
        self.nbr[b].as_mut().unwrap().retain(|&x| x != a);
    }

    fn remove(&mut self, n: usize) {
        for b in self.nbr[n].clone().unwrap() {
            self.disconnect(n, b);
        }
        self.nbr[n] = None;
    }

    fn suppress(&mut self, n: usize) {
        let nbrs = self.nbr[n].clone().unwrap();
        debug_assert_eq!(nbrs.len(), 2);
        self.remove(n);
        self.connect(nbrs[0], nbrs[1]);
    }

    fn subdivide(&mut self, a: usize, b: usize) -> usize {
        let m = self.add(None);
        self.disconnect(a, b);
        self.connect(a, m);
        self.connect(m, b);
        m
    }

    /// Inserts a pendant leaf on the arc `a -- b`, returning the new spine
    /// node so callers can keep chaining from it.
    fn pendant(&mut self, a: usize, b: usize, leaf: usize) -> usize {
        let mid = self.subdivide(a, b);
        let l = self.add(Some(leaf));
        self.connect(mid, l);
        mid
    }

    /// Drops bare spine nodes: degree <= 1 removed, degree 2 spliced out.
    fn cleanup(&mut self) {
        loop {
            let Some(n) = self
                .alive()
                .find(|&n| self.leaf[n].is_none() && self.degree(n) <= 2)
            else {
                break;
            };
            if self.degree(n) == 2 {
                self.suppress(n);
            } else {
                self.remove(n);
            }
        }
    }

    fn finish(self) -> CarvingDecomposition {
        let mut remap = vec![usize::MAX; self.nbr.len()];
        let mut leaf_of = Vec::new();
        let mut old = Vec::new();
        for (n, slot) in self.nbr.iter().enumerate() {
            if slot.is_some() {
                remap[n] = old.len();
                old.push(n);
                leaf_of.push(self.leaf[n]);
            }
        }
        let neighbors = old
            .iter()
            .map(|&n| {
                self.nbr[n]
                    .as_ref()
                    .unwrap()
                    .iter()
                    .map(|&m| remap[m])
                    .collect()
            })
            .collect();
        CarvingDecomposition { neighbors, leaf_of }
    }
}

/// Maximum intermediate rank guaranteed by the factoring method for a
/// source decomposition of width `w`.
pub fn ft_rank_bound(w: usize) -> usize {
    (4 * (w + 1)).div_ceil(3)
}

/// Single-decomposition factoring step: splits every tensor with four or
/// more indices into rank-3 pieces guided by a decomposition of the
/// structure graph, and derives a contraction tree whose max rank is at
/// most `ft_rank_bound(width)`.
pub fn plan_ft_with_td<S: Scalar>(
    net: &TensorNetwork<S>,
    td: &TreeDecomposition,
) -> Result<PlanResult<S>, MethodError> {
    let start = Instant::now();
    if !net.free_indices().is_empty() {
        return Err(MethodError::FreeIndices);
    }
    let sg = structure_graph(net);
    let td = binarize(td);
    let errs: Vec<String> = validate_td(&td, &sg.graph)
        .into_iter()
        .filter(|e| {
            // degree-0 vertices (the free vertex, scalar tensors) may be
            // legitimately absent from every bag
            !(0..sg.graph.num_vertices()).any(|v| {
                sg.graph.degree(v) == 0 && e == &format!("vertex {v} in no bag")
            })
        })
        .collect();
    if !errs.is_empty() {
        return Err(MethodError::InvalidTd(errs));
    }
    let source_width = td.width();

    let finish = |network: TensorNetwork<S>, tree: ContractionTree| {
        let mr = max_rank(&network, &tree);
        Ok(PlanResult {
            network,
            tree,
            max_rank: mr,
            source_width: Some(source_width),
            method: Method::FactorTree,
            plan_seconds: start.elapsed().as_secs_f64(),
        })
    };

    // compact graph of the tensors that actually carry indices
    let active: Vec<usize> = (0..net.tensors.len())
        .filter(|&t| net.tensors[t].rank() > 0)
        .collect();
    if sg.graph.num_edges() == 0 {
        // nothing but scalars; any order works
        let mut tree = ContractionTree::Leaf(0);
        for i in 1..net.tensors.len() {
            tree = ContractionTree::branch(tree, ContractionTree::Leaf(i));
        }
        return finish(net.clone(), tree);
    }
    let mut to_g = vec![usize::MAX; sg.graph.num_vertices()];
    for (gi, &slot) in active.iter().enumerate() {
        to_g[slot] = gi;
    }
    let mut g = Multigraph::new(active.len());
    for e in sg.graph.edges() {
        let [u, v] = sg.graph.endpoints(e);
        g.add_edge(to_g[u], to_g[v]).expect("no self loops");
    }
    let td_g = TreeDecomposition {
        neighbors: td.neighbors.clone(),
        bags: td
            .bags
            .iter()
            .map(|bag| {
                let mut b: Vec<usize> = bag
                    .iter()
                    .filter(|&&v| to_g[v] != usize::MAX)
                    .map(|&v| to_g[v])
                    .collect();
                b.sort_unstable();
                b
            })
            .collect(),
    };
    let cover = EdgeCliqueCover {
        sets: g
            .edges()
            .map(|e| {
                let [u, v] = g.endpoints(e);
                vec![u, v]
            })
            .collect(),
    };
    let (t, leaf_of_edge) = simplify_leaves(&td_g, &cover, &g)?;
    let tn = t.num_nodes();

    // factor each tensor over the condensed subtree spanning its edges' leaves
    struct Factored<S> {
        pieces: Vec<TaggedTensor<S>>,
        /// decomposition node each piece sits at
        at: Vec<usize>,
    }
    let mut factored: Vec<Factored<S>> = Vec::with_capacity(active.len());
    for (gi, &slot) in active.iter().enumerate() {
        let delta: Vec<usize> = g.incident_edges(gi).to_vec();
        let targets: Vec<usize> = delta.iter().map(|&e| leaf_of_edge[e]).collect();
        let target_set: BTreeSet<usize> = targets.iter().copied().collect();
        // minimal connected subtree of t spanning the targets
        let root = targets[0];
        let mut parent = vec![usize::MAX; tn];
        let mut order = vec![root];
        let mut seen = vec![false; tn];
        seen[root] = true;
        let mut qi = 0;
        while qi < order.len() {
            let a = order[qi];
            qi += 1;
            for &b in &t.neighbors[a] {
                if !seen[b] {
                    seen[b] = true;
                    parent[b] = a;
                    order.push(b);
                }
            }
        }
        let mut in_sub = vec![false; tn];
        for &tg in &target_set {
            let mut cur = tg;
            while !in_sub[cur] {
                in_sub[cur] = true;
                if cur == root {
                    break;
                }
                cur = parent[cur];
            }
        }
        let sub_deg = |m: usize| -> usize {
            t.neighbors[m].iter().filter(|&&o| in_sub[o]).count()
        };
        // condensation keeps only branching internal nodes
        let kept: Vec<usize> = (0..tn)
            .filter(|&m| in_sub[m] && !target_set.contains(&m) && sub_deg(m) >= 3)
            .collect();
        if kept.len() <= 1 {
            let at = if let Some(&k) = kept.first() {
                k
            } else if targets.len() >= 2 {
                // pure path: sit the whole tensor on its first interior node
                *t.neighbors[root]
                    .iter()
                    .find(|&&o| in_sub[o] && !target_set.contains(&o))
                    .unwrap_or(&root)
            } else {
                root
            };
            factored.push(Factored {
                pieces: vec![net.tensors[slot].clone()],
                at: vec![at],
            });
            continue;
        }
        // walk from each target to its nearest kept node
        let is_kept = {
            let mut k = vec![false; tn];
            for &m in &kept {
                k[m] = true;
            }
            k
        };
        let host_of = |tg: usize| -> usize {
            let mut prev = tg;
            let mut cur = *t.neighbors[tg].iter().find(|&&o| in_sub[o]).unwrap();
            while !is_kept[cur] {
                let next = *t.neighbors[cur]
                    .iter()
                    .find(|&&o| in_sub[o] && o != prev)
                    .unwrap();
                prev = cur;
                cur = next;
            }
            cur
        };
        // dimension tree over kept nodes and index leaves
        let mut local_of: HashMap<usize, usize> = HashMap::new();
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); kept.len()];
        let mut leaf_index: Vec<Option<Index>> = vec![None; kept.len()];
        for (li, &m) in kept.iter().enumerate() {
            local_of.insert(m, li);
        }
        for (pos, &e) in delta.iter().enumerate() {
            let host = host_of(targets[pos]);
            let li = neighbors.len();
            neighbors.push(vec![local_of[&host]]);
            leaf_index.push(Some(sg.edge_indices[e]));
            neighbors[local_of[&host]].push(li);
        }
        // condensed arcs: follow each subtree direction to the next kept node
        for &m in &kept {
            for &o in &t.neighbors[m] {
                if !in_sub[o] || target_set.contains(&o) {
                    continue;
                }
                let (mut prev, mut cur) = (m, o);
                while !is_kept[cur] {
                    let step = t.neighbors[cur]
                        .iter()
                        .find(|&&x| in_sub[x] && x != prev && !target_set.contains(&x));
                    match step {
                        Some(&x) => {
                            prev = cur;
                            cur = x;
                        }
                        None => break,
                    }
                }
                if is_kept[cur] && m < cur {
                    neighbors[local_of[&m]].push(local_of[&cur]);
                    neighbors[local_of[&cur]].push(local_of[&m]);
                }
            }
        }
        let dim_tree = DimensionTree {
            neighbors,
            leaf_index,
        };
        let (pieces_net, node_slots) = factor_tensor(&net.tensors[slot], &dim_tree)?;
        let mut at = vec![usize::MAX; pieces_net.tensors.len()];
        for (local, slot_opt) in node_slots.iter().enumerate() {
            if let Some(s) = *slot_opt {
                at[s] = kept[local];
            }
        }
        factored.push(Factored {
            pieces: pieces_net.tensors,
            at,
        });
    }

    // assemble the factored network in original slot order
    let mut tensors: Vec<TaggedTensor<S>> = Vec::new();
    let mut pieces_at: Vec<Vec<usize>> = vec![Vec::new(); tn];
    let mut scalar_slots: Vec<usize> = Vec::new();
    let mut gi_iter = 0usize;
    for slot in 0..net.tensors.len() {
        if net.tensors[slot].rank() == 0 {
            scalar_slots.push(tensors.len());
            tensors.push(net.tensors[slot].clone());
        } else {
            let f = &factored[gi_iter];
            gi_iter += 1;
            for (pi, piece) in f.pieces.iter().enumerate() {
                pieces_at[f.at[pi]].push(tensors.len());
                tensors.push(piece.clone());
            }
        }
    }
    let m_net = TensorNetwork::new(tensors)?;
    let free_slot = m_net.tensors.len();

    // a single-node decomposition means one bond total; any order is fine
    if m_net.tensors.len() <= 3 || tn == 1 {
        let tree = greedy_tree(&m_net, 0);
        return finish(m_net, tree);
    }

    // carving decomposition: hang each piece as a leaf along the arcs of
    // its decomposition node, three near-equal groups at branching nodes
    let mut cb = CarvBuilder::new();
    let spine: Vec<usize> = (0..tn).map(|_| cb.add(None)).collect();
    for a in 0..tn {
        for &b in &t.neighbors[a] {
            if a < b {
                cb.connect(spine[a], spine[b]);
            }
        }
    }
    for n in 0..tn {
        if pieces_at[n].is_empty() {
            continue;
        }
        let dirs: Vec<usize> = cb.nbr[spine[n]].clone().unwrap();
        let mut cursors: Vec<(usize, usize)> = dirs.iter().map(|&d| (spine[n], d)).collect();
        for (k, &piece) in pieces_at[n].iter().enumerate() {
            let slot_dir = k % cursors.len();
            let (a, b) = cursors[slot_dir];
            let mid = cb.pendant(a, b, piece);
            cursors[slot_dir] = (mid, b);
        }
    }
    // original decomposition leaves are scaffolding, not carving leaves
    for (n, &s) in spine.iter().enumerate() {
        if t.neighbors[n].len() <= 1 {
            cb.remove(s);
        }
    }
    cb.cleanup();
    // degree-0 graph vertices ride along anywhere without affecting cuts
    for extra in scalar_slots.into_iter().chain([free_slot]) {
        let (a, b) = {
            let a = cb
                .alive()
                .find(|&x| cb.degree(x) >= 1)
                .expect("carving has at least one arc");
            let b = cb.nbr[a].as_ref().unwrap()[0];
            (a, b)
        };
        cb.pendant(a, b, extra);
    }
    let carv = cb.finish();
    debug_assert!(
        carv.validate(&structure_graph(&m_net).graph).is_empty(),
        "{:?}",
        carv.validate(&structure_graph(&m_net).graph)
    );
    let bound_tree = carving_to_tree(&m_net, &carv)?;
    // the guided tree carries the width guarantee; keep a greedy candidate
    // when it happens to do better
    let greedy = greedy_tree(&m_net, 0);
    let tree = if (max_rank(&m_net, &greedy), estimate_flops(&m_net, &greedy))
        < (
            max_rank(&m_net, &bound_tree),
            estimate_flops(&m_net, &bound_tree),
        ) {
        greedy
    } else {
        bound_tree
    };
    finish(m_net, tree)
}

/// Consumes a stream of structure-graph decompositions and keeps the
/// cheapest factored plan (ties favor earlier emissions).
pub fn plan_ft<S: Scalar>(
    net: &TensorNetwork<S>,
    tds: impl IntoIterator<Item = TreeDecomposition>,
) -> Result<PlanResult<S>, MethodError> {
    let mut best: Option<(f64, PlanResult<S>)> = None;
    for td in tds {
        let plan = plan_ft_with_td(net, &td)?;
        let cost = plan.estimated_flops();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, plan));
        }
    }
    best.map(|(_, p)| p).ok_or(MethodError::EmptyStream)
}

pub use crate::network::DEFAULT_MEM_CAP;

//! Tensor networks: reduction from weighted CNF, structure graphs,
//! contraction trees, carving decompositions, and execution.

use std::collections::HashMap;
use std::time::Instant;

use thiserror::Error;

use crate::formula::{lit_var, CnfFormula};
use crate::graph::Multigraph;
use crate::scalar::Scalar;
use crate::tensor::{entry_count, Index, Tensor, TensorError};

/// Default limit on the entries of any single materialized tensor.
pub const DEFAULT_MEM_CAP: u64 = 1 << 24;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("index {0} appears more than twice")]
    OverusedIndex(u64),
    #[error("tensor would exceed the memory cap: {entries} entries > {cap}")]
    MemCap { entries: u128, cap: u64 },
    #[error("deadline exceeded during contraction")]
    Timeout,
    #[error("contraction tree leaves do not match the network tensors")]
    BadTree,
    #[error("invalid contraction tree text: {0}")]
    TreeParse(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Literal-test role an index plays inside a clause tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    /// satisfied when the occurrence is assigned 1
    Pos,
    /// satisfied when the occurrence is assigned 0
    Neg,
    /// always satisfied (the variable occurs with both signs)
    Both,
    /// bond carrying the "subtree already satisfied" bit of another piece
    Flag,
}

/// Tensor payload. Structured kinds stay symbolic until contraction so that
/// high-rank inputs never cost dense storage up front.
#[derive(Debug, Clone)]
pub enum TensorKind<S> {
    Dense(Tensor<S>),
    /// `w1` on the all-ones assignment, `w0` on the all-zeros, 0 elsewhere
    WeightedCopy { w0: S, w1: S },
    /// disjunction gadget: `polarities[i]` describes index position i, and
    /// `parent`, when set, is the position whose value must equal the
    /// disjunction of the remaining positions; without a parent the entry is
    /// the disjunction itself
    ClauseFactor {
        polarities: Vec<Polarity>,
        parent: Option<usize>,
    },
}

#[derive(Debug, Clone)]
pub struct TaggedTensor<S> {
    indices: Vec<Index>,
    pub kind: TensorKind<S>,
}

impl<S: Scalar> TaggedTensor<S> {
    pub fn dense(t: Tensor<S>) -> TaggedTensor<S> {
        TaggedTensor {
            indices: t.indices().to_vec(),
            kind: TensorKind::Dense(t),
        }
    }

    pub fn weighted_copy(indices: Vec<Index>, w0: S, w1: S) -> TaggedTensor<S> {
        assert!(!indices.is_empty() && indices.iter().all(|i| i.dim() == 2));
        TaggedTensor {
            indices,
            kind: TensorKind::WeightedCopy { w0, w1 },
        }
    }

    pub fn clause_factor(
        indices: Vec<Index>,
        polarities: Vec<Polarity>,
        parent: Option<usize>,
    ) -> TaggedTensor<S> {
        assert_eq!(indices.len(), polarities.len());
        assert!(indices.iter().all(|i| i.dim() == 2));
        if let Some(p) = parent {
            assert!(p < indices.len());
        }
        TaggedTensor {
            indices,
            kind: TensorKind::ClauseFactor { polarities, parent },
        }
    }

    pub fn indices(&self) -> &[Index] {
        &self.indices
    }

    pub fn rank(&self) -> usize {
        self.indices.len()
    }

    /// Expands to a dense tensor, refusing if it would exceed `cap` entries.
    pub fn materialize(&self, cap: u64) -> Result<Tensor<S>, NetworkError> {
        let entries = entry_count(&self.indices);
        if entries > cap as u128 {
            return Err(NetworkError::MemCap { entries, cap });
        }
        Ok(match &self.kind {
            TensorKind::Dense(t) => t.clone(),
            TensorKind::WeightedCopy { w0, w1 } => {
                let (w0, w1) = (*w0, *w1);
                Tensor::from_entries(self.indices.clone(), |a| {
                    if a.iter().all(|&x| x == 1) {
                        w1
                    } else if a.iter().all(|&x| x == 0) {
                        w0
                    } else {
                        S::zero()
                    }
                })
            }
            TensorKind::ClauseFactor { polarities, parent } => {
                let polarities = polarities.clone();
                let parent = *parent;
                Tensor::from_entries(self.indices.clone(), |a| {
                    let mut or = false;
                    for (i, &p) in polarities.iter().enumerate() {
                        if Some(i) == parent {
                            continue;
                        }
                        or |= match p {
                            Polarity::Pos | Polarity::Flag => a[i] == 1,
                            Polarity::Neg => a[i] == 0,
                            Polarity::Both => true,
                        };
                    }
                    let ok = match parent {
                        Some(p) => a[p] == usize::from(or),
                        None => or,
                    };
                    if ok {
                        S::one()
                    } else {
                        S::zero()
                    }
                })
            }
        })
    }
}

/// Collection of tensors where every index appears at most twice. Indices
/// appearing once are free; twice, bonds.
#[derive(Debug, Clone)]
pub struct TensorNetwork<S> {
    pub tensors: Vec<TaggedTensor<S>>,
}

impl<S: Scalar> TensorNetwork<S> {
    pub fn new(tensors: Vec<TaggedTensor<S>>) -> Result<TensorNetwork<S>, NetworkError> {
        let net = TensorNetwork { tensors };
        for (id, occ) in net.index_occurrences() {
            if occ > 2 {
                return Err(NetworkError::OverusedIndex(id));
            }
        }
        Ok(net)
    }

    fn index_occurrences(&self) -> HashMap<u64, usize> {
        let mut occ = HashMap::new();
        for t in &self.tensors {
            for i in t.indices() {
                *occ.entry(i.id()).or_insert(0) += 1;
            }
        }
        occ
    }

    pub fn free_indices(&self) -> Vec<Index> {
        let occ = self.index_occurrences();
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for t in &self.tensors {
            for &i in t.indices() {
                if occ[&i.id()] == 1 && seen.insert(i.id(), ()).is_none() {
                    out.push(i);
                }
            }
        }
        out
    }

    pub fn bond_indices(&self) -> Vec<Index> {
        let occ = self.index_occurrences();
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for t in &self.tensors {
            for &i in t.indices() {
                if occ[&i.id()] == 2 && seen.insert(i.id(), ()).is_none() {
                    out.push(i);
                }
            }
        }
        out
    }
}

/// How the network reduced from a formula maps back to it: tensor slots
/// 0..num_vars are variables, the rest are clauses, in order.
pub fn reduce_wmc<S: Scalar>(formula: &CnfFormula) -> TensorNetwork<S> {
    let nv = formula.num_vars;
    // occurrence index per (clause, distinct variable) pair
    let mut var_indices: Vec<Vec<Index>> = vec![Vec::new(); nv];
    let mut clause_tensors = Vec::with_capacity(formula.clauses.len());
    for clause in &formula.clauses {
        let mut vars: Vec<usize> = clause.iter().map(|&l| lit_var(l) - 1).collect();
        vars.sort_unstable();
        vars.dedup();
        let mut indices = Vec::with_capacity(vars.len());
        let mut polarities = Vec::with_capacity(vars.len());
        for &v in &vars {
            let idx = Index::fresh(2);
            indices.push(idx);
            var_indices[v].push(idx);
            let pos = clause.contains(&((v as i64) + 1));
            let neg = clause.contains(&(-((v as i64) + 1)));
            polarities.push(match (pos, neg) {
                (true, true) => Polarity::Both,
                (true, false) => Polarity::Pos,
                (false, true) => Polarity::Neg,
                (false, false) => unreachable!(),
            });
        }
        clause_tensors.push(TaggedTensor::clause_factor(indices, polarities, None));
    }
    let mut tensors = Vec::with_capacity(nv + clause_tensors.len());
    for (v, slot) in var_indices.iter_mut().enumerate() {
        let (w0, w1) = formula.weights[v];
        let (w0, w1) = (<S as Scalar>::from_f64(w0), <S as Scalar>::from_f64(w1));
        if slot.is_empty() {
            tensors.push(TaggedTensor::dense(Tensor::scalar(w0 + w1)));
        } else {
            tensors.push(TaggedTensor::weighted_copy(std::mem::take(slot), w0, w1));
        }
    }
    tensors.extend(clause_tensors);
    TensorNetwork::new(tensors).expect("occurrence indices are used at most twice")
}

/// Structure graph: one vertex per tensor plus a distinguished vertex for
/// the free indices, one edge per index. `edge_indices[e]` is the index the
/// edge stands for, in first-occurrence order.
pub struct StructureGraph {
    pub graph: Multigraph,
    pub free_vertex: usize,
    pub edge_indices: Vec<Index>,
}

pub fn structure_graph<S: Scalar>(net: &TensorNetwork<S>) -> StructureGraph {
    let n = net.tensors.len();
    let mut g = Multigraph::new(n + 1);
    let free_vertex = n;
    let mut first_seen: Vec<(Index, usize, Option<usize>)> = Vec::new();
    let mut slot: HashMap<u64, usize> = HashMap::new();
    for (t, tensor) in net.tensors.iter().enumerate() {
        for &i in tensor.indices() {
            match slot.get(&i.id()) {
                Some(&s) => first_seen[s].2 = Some(t),
                None => {
                    slot.insert(i.id(), first_seen.len());
                    first_seen.push((i, t, None));
                }
            }
        }
    }
    let mut edge_indices = Vec::with_capacity(first_seen.len());
    for (idx, a, b) in first_seen {
        g.add_edge(a, b.unwrap_or(free_vertex))
            .expect("tensor vertices are distinct");
        edge_indices.push(idx);
    }
    StructureGraph {
        graph: g,
        free_vertex,
        edge_indices,
    }
}

/// Rooted binary tree whose leaves name tensor slots of a network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContractionTree {
    Leaf(usize),
    Branch(Box<ContractionTree>, Box<ContractionTree>),
}

impl ContractionTree {
    pub fn branch(l: ContractionTree, r: ContractionTree) -> ContractionTree {
        ContractionTree::Branch(Box::new(l), Box::new(r))
    }

    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            ContractionTree::Leaf(t) => out.push(*t),
            ContractionTree::Branch(l, r) => {
                l.collect_leaves(out);
                r.collect_leaves(out);
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        match self {
            ContractionTree::Leaf(_) => 1,
            ContractionTree::Branch(l, r) => l.num_leaves() + r.num_leaves(),
        }
    }

    /// Nested-parenthesis text: a leaf is its slot number, a branch is
    /// `(left right)`.
    pub fn serialize(&self) -> String {
        match self {
            ContractionTree::Leaf(t) => t.to_string(),
            ContractionTree::Branch(l, r) => format!("({} {})", l.serialize(), r.serialize()),
        }
    }

    pub fn parse(text: &str) -> Result<ContractionTree, NetworkError> {
        let tokens: Vec<String> = text
            .replace('(', " ( ")
            .replace(')', " ) ")
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let mut pos = 0;
        let tree = Self::parse_tokens(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(NetworkError::TreeParse(format!(
                "trailing input at token {pos}"
            )));
        }
        Ok(tree)
    }

    fn parse_tokens(tokens: &[String], pos: &mut usize) -> Result<ContractionTree, NetworkError> {
        let tok = tokens
            .get(*pos)
            .ok_or_else(|| NetworkError::TreeParse("unexpected end of input".into()))?;
        *pos += 1;
        if tok == "(" {
            let l = Self::parse_tokens(tokens, pos)?;
            let r = Self::parse_tokens(tokens, pos)?;
            match tokens.get(*pos) {
                Some(t) if t == ")" => {
                    *pos += 1;
                    Ok(ContractionTree::branch(l, r))
                }
                _ => Err(NetworkError::TreeParse(format!(
                    "expected `)` at token {pos}",
                    pos = *pos
                ))),
            }
        } else if tok == ")" {
            Err(NetworkError::TreeParse(format!(
                "unexpected `)` at token {}",
                *pos - 1
            )))
        } else {
            let t: usize = tok
                .parse()
                .map_err(|_| NetworkError::TreeParse(format!("bad leaf `{tok}`")))?;
            Ok(ContractionTree::Leaf(t))
        }
    }

    /// Errors unless the leaves are exactly the slots `0..n`, each once.
    pub fn validate<S: Scalar>(&self, net: &TensorNetwork<S>) -> Result<(), NetworkError> {
        let mut leaves = self.leaves();
        leaves.sort_unstable();
        if leaves.len() != net.tensors.len() || leaves.iter().enumerate().any(|(i, &l)| i != l) {
            return Err(NetworkError::BadTree);
        }
        Ok(())
    }
}

/// Largest rank any intermediate (or input) tensor reaches when the tree is
/// executed, computed symbolically from index occurrence counts.
pub fn max_rank<S: Scalar>(net: &TensorNetwork<S>, tree: &ContractionTree) -> usize {
    fn go(
        net_ranks: &[Vec<u64>],
        tree: &ContractionTree,
        best: &mut usize,
    ) -> HashMap<u64, usize> {
        match tree {
            ContractionTree::Leaf(t) => {
                let mut counts = HashMap::new();
                for &id in &net_ranks[*t] {
                    *counts.entry(id).or_insert(0) += 1;
                }
                let rank = counts.values().filter(|&&c| c == 1).count();
                *best = (*best).max(rank);
                counts
            }
            ContractionTree::Branch(l, r) => {
                let mut counts = go(net_ranks, l, best);
                let rc = go(net_ranks, r, best);
                for (id, c) in rc {
                    *counts.entry(id).or_insert(0) += c;
                }
                let rank = counts.values().filter(|&&c| c == 1).count();
                *best = (*best).max(rank);
                counts
            }
        }
    }
    let ids: Vec<Vec<u64>> = net
        .tensors
        .iter()
        .map(|t| t.indices().iter().map(|i| i.id()).collect())
        .collect();
    let mut best = 0;
    go(&ids, tree, &mut best);
    best
}

/// Scalar multiplications performed by a dense execution of the tree: each
/// pairwise contraction costs the product of the dimensions of the union of
/// its operands' indices.
pub fn estimate_flops<S: Scalar>(net: &TensorNetwork<S>, tree: &ContractionTree) -> f64 {
    fn go(
        net: &[Vec<Index>],
        tree: &ContractionTree,
        total: &mut f64,
    ) -> HashMap<u64, (usize, usize)> {
        match tree {
            ContractionTree::Leaf(t) => {
                let mut counts = HashMap::new();
                for &i in &net[*t] {
                    counts
                        .entry(i.id())
                        .and_modify(|e: &mut (usize, usize)| e.1 += 1)
                        .or_insert((i.dim(), 1));
                }
                counts
            }
            ContractionTree::Branch(l, r) => {
                let mut lc = go(net, l, total);
                let rc = go(net, r, total);
                let mut cost = 1.0;
                for (_, &(dim, lcount)) in lc.iter().filter(|&(_, &(_, c))| c == 1) {
                    let _ = lcount;
                    cost *= dim as f64;
                }
                for (id, &(dim, _)) in rc.iter() {
                    let outside_left = !matches!(lc.get(id), Some(&(_, c)) if c == 1);
                    let free_right = rc[id].1 == 1;
                    if free_right && outside_left {
                        cost *= dim as f64;
                    }
                }
                *total += cost;
                for (id, (dim, c)) in rc {
                    lc.entry(id)
                        .and_modify(|e| e.1 += c)
                        .or_insert((dim, c));
                }
                lc
            }
        }
    }
    let ids: Vec<Vec<Index>> = net.tensors.iter().map(|t| t.indices().to_vec()).collect();
    let mut total = 0.0;
    go(&ids, tree, &mut total);
    total
}

/// Predicted contraction time in seconds at the given per-multiplication
/// rate.
pub fn estimate_cost<S: Scalar>(
    net: &TensorNetwork<S>,
    tree: &ContractionTree,
    seconds_per_flop: f64,
) -> f64 {
    estimate_flops(net, tree) * seconds_per_flop
}

/// Executes the tree bottom-up with dense pairwise contractions. Every
/// materialized or produced tensor must fit in `cap` entries; the optional
/// deadline is checked before each contraction.
pub fn contract<S: Scalar>(
    net: &TensorNetwork<S>,
    tree: &ContractionTree,
    cap: u64,
    deadline: Option<Instant>,
) -> Result<Tensor<S>, NetworkError> {
    tree.validate(net)?;
    fn go<S: Scalar>(
        net: &TensorNetwork<S>,
        tree: &ContractionTree,
        cap: u64,
        deadline: Option<Instant>,
    ) -> Result<Tensor<S>, NetworkError> {
        match tree {
            ContractionTree::Leaf(t) => net.tensors[*t].materialize(cap),
            ContractionTree::Branch(l, r) => {
                let a = go(net, l, cap, deadline)?;
                let b = go(net, r, cap, deadline)?;
                if let Some(d) = deadline {
                    if Instant::now() >= d {
                        return Err(NetworkError::Timeout);
                    }
                }
                // the result keeps the symmetric difference of the indices
                let mut out = Vec::new();
                for &i in a.indices() {
                    if !b.indices().iter().any(|j| j.id() == i.id()) {
                        out.push(i);
                    }
                }
                for &i in b.indices() {
                    if !a.indices().iter().any(|j| j.id() == i.id()) {
                        out.push(i);
                    }
                }
                let entries = entry_count(&out);
                if entries > cap as u128 {
                    return Err(NetworkError::MemCap { entries, cap });
                }
                Ok(a.contract_with(&b)?)
            }
        }
    }
    go(net, tree, cap, deadline)
}

/// Unrooted tree whose leaves are exactly the vertices of some graph;
/// internal nodes have degree 3.
#[derive(Debug, Clone)]
pub struct CarvingDecomposition {
    pub neighbors: Vec<Vec<usize>>,
    /// `Some(v)` marks the leaf standing for graph vertex `v`
    pub leaf_of: Vec<Option<usize>>,
}

impl CarvingDecomposition {
    pub fn num_nodes(&self) -> usize {
        self.neighbors.len()
    }

    /// Checks tree shape, leaf/internal degrees, and the leaf bijection.
    pub fn validate(&self, g: &Multigraph) -> Vec<String> {
        let mut errs = Vec::new();
        let n = self.num_nodes();
        if n == 0 {
            return vec!["carving has no nodes".into()];
        }
        let mut arcs = 0;
        for a in 0..n {
            for &b in &self.neighbors[a] {
                if b >= n || !self.neighbors[b].contains(&a) {
                    errs.push(format!("bad arc {a} -- {b}"));
                }
                arcs += 1;
            }
        }
        if arcs / 2 != n - 1 {
            errs.push(format!("not a tree: {n} nodes, {} arcs", arcs / 2));
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(a) = stack.pop() {
            for &b in &self.neighbors[a] {
                if b < n && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        if seen.iter().any(|&s| !s) {
            errs.push("not a tree: disconnected".into());
        }
        let mut vertex_leaf = vec![0usize; g.num_vertices()];
        for a in 0..n {
            match self.leaf_of[a] {
                Some(v) => {
                    if n > 1 && self.neighbors[a].len() != 1 {
                        errs.push(format!("leaf node {a} has degree {}", self.neighbors[a].len()));
                    }
                    if v >= g.num_vertices() {
                        errs.push(format!("leaf node {a} names unknown vertex {v}"));
                    } else {
                        vertex_leaf[v] += 1;
                    }
                }
                None => {
                    if self.neighbors[a].len() != 3 {
                        errs.push(format!(
                            "internal node {a} has degree {}",
                            self.neighbors[a].len()
                        ));
                    }
                }
            }
        }
        for (v, &c) in vertex_leaf.iter().enumerate() {
            if c != 1 {
                errs.push(format!("vertex {v} appears in {c} leaves"));
            }
        }
        errs
    }
}

/// Width = the largest number of graph edges crossing any arc's induced
/// vertex bipartition (0 for trees without arcs).
pub fn carving_width(carv: &CarvingDecomposition, g: &Multigraph) -> usize {
    let n = carv.num_nodes();
    let mut leaf_node = vec![usize::MAX; g.num_vertices()];
    for a in 0..n {
        if let Some(v) = carv.leaf_of[a] {
            leaf_node[v] = a;
        }
    }
    // arc keyed by (min, max) node pair
    let mut cut: HashMap<(usize, usize), usize> = HashMap::new();
    for a in 0..n {
        for &b in &carv.neighbors[a] {
            if a < b {
                cut.insert((a, b), 0);
            }
        }
    }
    for e in g.edges() {
        let [u, v] = g.endpoints(e);
        let (from, to) = (leaf_node[u], leaf_node[v]);
        if from == to {
            continue;
        }
        // walk the unique tree path
        let mut parent = vec![usize::MAX; n];
        let mut stack = vec![from];
        let mut seen = vec![false; n];
        seen[from] = true;
        while let Some(a) = stack.pop() {
            if a == to {
                break;
            }
            for &b in &carv.neighbors[a] {
                if !seen[b] {
                    seen[b] = true;
                    parent[b] = a;
                    stack.push(b);
                }
            }
        }
        let mut cur = to;
        while cur != from {
            let p = parent[cur];
            *cut.get_mut(&(p.min(cur), p.max(cur))).unwrap() += 1;
            cur = p;
        }
    }
    cut.values().copied().max().unwrap_or(0)
}

/// Turns a contraction tree into a carving decomposition of the network's
/// structure graph by hanging the free vertex off the root.
pub fn tree_to_carving<S: Scalar>(
    net: &TensorNetwork<S>,
    tree: &ContractionTree,
) -> CarvingDecomposition {
    let free_vertex = net.tensors.len();
    let mut neighbors: Vec<Vec<usize>> = Vec::new();
    let mut leaf_of: Vec<Option<usize>> = Vec::new();
    fn go(
        tree: &ContractionTree,
        neighbors: &mut Vec<Vec<usize>>,
        leaf_of: &mut Vec<Option<usize>>,
    ) -> usize {
        match tree {
            ContractionTree::Leaf(t) => {
                neighbors.push(Vec::new());
                leaf_of.push(Some(*t));
                neighbors.len() - 1
            }
            ContractionTree::Branch(l, r) => {
                let a = go(l, neighbors, leaf_of);
                let b = go(r, neighbors, leaf_of);
                neighbors.push(vec![a, b]);
                leaf_of.push(None);
                let m = neighbors.len() - 1;
                neighbors[a].push(m);
                neighbors[b].push(m);
                m
            }
        }
    }
    let root = go(tree, &mut neighbors, &mut leaf_of);
    // the free vertex replaces the missing third arc at the root
    neighbors.push(vec![root]);
    leaf_of.push(Some(free_vertex));
    let z = neighbors.len() - 1;
    neighbors[root].push(z);
    if let ContractionTree::Leaf(_) = tree {
        // two-leaf path; nothing else to fix up
    }
    CarvingDecomposition { neighbors, leaf_of }
}

/// Inverse direction: root the carving at the free vertex's leaf and read
/// off the contraction order of the tensor leaves.
pub fn carving_to_tree<S: Scalar>(
    net: &TensorNetwork<S>,
    carv: &CarvingDecomposition,
) -> Result<ContractionTree, NetworkError> {
    let free_vertex = net.tensors.len();
    let z = (0..carv.num_nodes())
        .find(|&a| carv.leaf_of[a] == Some(free_vertex))
        .ok_or(NetworkError::BadTree)?;
    fn go(
        carv: &CarvingDecomposition,
        node: usize,
        from: usize,
    ) -> Result<ContractionTree, NetworkError> {
        match carv.leaf_of[node] {
            Some(v) => Ok(ContractionTree::Leaf(v)),
            None => {
                let children: Vec<usize> = carv.neighbors[node]
                    .iter()
                    .copied()
                    .filter(|&b| b != from)
                    .collect();
                if children.len() != 2 {
                    return Err(NetworkError::BadTree);
                }
                Ok(ContractionTree::branch(
                    go(carv, children[0], node)?,
                    go(carv, children[1], node)?,
                ))
            }
        }
    }
    let anchors: Vec<usize> = carv.neighbors[z].to_vec();
    if anchors.len() != 1 {
        return Err(NetworkError::BadTree);
    }
    let tree = go(carv, anchors[0], z)?;
    tree.validate(net)?;
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{brute_force_wmc, parse_dimacs};

    const FIG_DIMACS: &str = "p cnf 4 4\n1 2 -3 0\n1 3 4 0\n-2 -3 0\n-3 -4 0\n";

    fn left_comb(n: usize) -> ContractionTree {
        let mut t = ContractionTree::Leaf(0);
        for i in 1..n {
            t = ContractionTree::branch(t, ContractionTree::Leaf(i));
        }
        t
    }

    #[test]
    fn reduce_counts_tensors_and_indices() {
        let f = parse_dimacs(FIG_DIMACS).unwrap();
        let net: TensorNetwork<f64> = reduce_wmc(&f);
        assert_eq!(net.tensors.len(), 8);
        assert_eq!(net.bond_indices().len(), 10);
        assert!(net.free_indices().is_empty());
    }

    #[test]
    fn reduce_then_contract_matches_brute_force() {
        let f = parse_dimacs(FIG_DIMACS).unwrap();
        let net: TensorNetwork<f64> = reduce_wmc(&f);
        let tree = left_comb(net.tensors.len());
        let out = contract(&net, &tree, DEFAULT_MEM_CAP, None).unwrap();
        assert_eq!(out.rank(), 0);
        assert!((out.values()[0] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn reduce_weighted() {
        let text = "p cnf 2 1\nc w 1 0.25\n1 -2 0\n";
        let f = parse_dimacs(text).unwrap();
        let net: TensorNetwork<f64> = reduce_wmc(&f);
        let tree = left_comb(net.tensors.len());
        let got = contract(&net, &tree, DEFAULT_MEM_CAP, None).unwrap().values()[0];
        assert!((got - brute_force_wmc(&f).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn reduce_handles_unused_variable_and_tautology() {
        // var 2 unused; clause (1 or not 1) tautological
        let text = "p cnf 2 1\n1 -1 0\n";
        let f = parse_dimacs(text).unwrap();
        let net: TensorNetwork<f64> = reduce_wmc(&f);
        let tree = left_comb(net.tensors.len());
        let got = contract(&net, &tree, DEFAULT_MEM_CAP, None).unwrap().values()[0];
        assert!((got - 4.0).abs() < 1e-12);
    }

    #[test]
    fn structure_graph_is_incidence_graph() {
        let f = parse_dimacs(FIG_DIMACS).unwrap();
        let net: TensorNetwork<f64> = reduce_wmc(&f);
        let sg = structure_graph(&net);
        assert_eq!(sg.graph.num_vertices(), 9);
        assert_eq!(sg.graph.num_edges(), 10);
        assert_eq!(sg.graph.degree(sg.free_vertex), 0);
        assert_eq!(sg.edge_indices.len(), 10);
        // matches the formula's incidence graph on the shared vertices
        let inc = f.incidence_graph();
        for e in inc.edges() {
            let [u, v] = inc.endpoints(e);
            assert!(sg.graph.has_edge_between(u, v));
        }
    }

    #[test]
    fn max_rank_matches_dense_execution() {
        let f = parse_dimacs(FIG_DIMACS).unwrap();
        let net: TensorNetwork<f64> = reduce_wmc(&f);
        let tree = left_comb(net.tensors.len());
        let symbolic = max_rank(&net, &tree);
        // replay and track actual ranks
        let mut worst = 0;
        fn replay(
            net: &TensorNetwork<f64>,
            t: &ContractionTree,
            worst: &mut usize,
        ) -> crate::tensor::Tensor<f64> {
            match t {
                ContractionTree::Leaf(i) => {
                    let out = net.tensors[*i].materialize(u64::MAX).unwrap();
                    *worst = (*worst).max(out.rank());
                    out
                }
                ContractionTree::Branch(l, r) => {
                    let a = replay(net, l, worst);
                    let b = replay(net, r, worst);
                    let out = a.contract_with(&b).unwrap();
                    *worst = (*worst).max(out.rank());
                    out
                }
            }
        }
        replay(&net, &tree, &mut worst);
        assert_eq!(symbolic, worst);
    }

    #[test]
    fn estimate_flops_simple_cases() {
        let f = parse_dimacs("p cnf 1 1\n1 0\n").unwrap();
        let net: TensorNetwork<f64> = reduce_wmc(&f);
        // two rank-1 binary tensors: one contraction over a single bond
        let tree = left_comb(2);
        assert_eq!(estimate_flops(&net, &tree), 2.0);
        assert_eq!(estimate_flops(&net, &ContractionTree::Leaf(0)), 0.0);
    }

    #[test]
    fn mem_cap_trips_on_high_rank_materialization() {
        let mut text = String::from("p cnf 1 25\n");
        for _ in 0..25 {
            text.push_str("1 0\n");
        }
        let f = parse_dimacs(&text).unwrap();
        let net: TensorNetwork<f64> = reduce_wmc(&f);
        assert_eq!(net.tensors[0].rank(), 25);
        let err = net.tensors[0].materialize(DEFAULT_MEM_CAP).unwrap_err();
        assert!(matches!(err, NetworkError::MemCap { .. }));
    }

    #[test]
    fn tree_serialize_round_trip() {
        let tree = ContractionTree::branch(
            ContractionTree::branch(ContractionTree::Leaf(0), ContractionTree::Leaf(2)),
            ContractionTree::Leaf(1),
        );
        let text = tree.serialize();
        assert_eq!(text, "((0 2) 1)");
        assert_eq!(ContractionTree::parse(&text).unwrap(), tree);
        assert!(ContractionTree::parse("((0 1)").is_err());
        assert!(ContractionTree::parse("(0 1) 2").is_err());
        assert!(ContractionTree::parse("(0 x)").is_err());
    }

    #[test]
    fn carving_round_trip_preserves_width_and_rank() {
        let f = parse_dimacs(FIG_DIMACS).unwrap();
        let net: TensorNetwork<f64> = reduce_wmc(&f);
        let sg = structure_graph(&net);
        let tree = left_comb(net.tensors.len());
        let carv = tree_to_carving(&net, &tree);
        assert!(carv.validate(&sg.graph).is_empty());
        assert_eq!(carving_width(&carv, &sg.graph), max_rank(&net, &tree));
        let back = carving_to_tree(&net, &carv).unwrap();
        assert_eq!(max_rank(&net, &back), max_rank(&net, &tree));
    }

    #[test]
    fn single_tensor_network_carving() {
        let f = parse_dimacs("p cnf 1 0\n").unwrap();
        let net: TensorNetwork<f64> = reduce_wmc(&f);
        let tree = ContractionTree::Leaf(0);
        let carv = tree_to_carving(&net, &tree);
        let sg = structure_graph(&net);
        assert!(carv.validate(&sg.graph).is_empty());
        assert_eq!(carving_width(&carv, &sg.graph), 0);
        let back = carving_to_tree(&net, &carv).unwrap();
        assert_eq!(back, tree);
    }

    #[test]
    fn clause_factor_flag_semantics() {
        // two pieces of (x or not y) chained by a flag bond agree with the
        // unfactored clause tensor
        let ix = Index::fresh(2);
        let iy = Index::fresh(2);
        let bond = Index::fresh(2);
        let whole: TaggedTensor<f64> = TaggedTensor::clause_factor(
            vec![ix, iy],
            vec![Polarity::Pos, Polarity::Neg],
            None,
        );
        let piece_child: TaggedTensor<f64> = TaggedTensor::clause_factor(
            vec![iy, bond],
            vec![Polarity::Neg, Polarity::Flag],
            Some(1),
        );
        let piece_root: TaggedTensor<f64> = TaggedTensor::clause_factor(
            vec![ix, bond],
            vec![Polarity::Pos, Polarity::Flag],
            None,
        );
        let joined = piece_root
            .materialize(u64::MAX)
            .unwrap()
            .contract_with(&piece_child.materialize(u64::MAX).unwrap())
            .unwrap();
        let dense = whole.materialize(u64::MAX).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let lhs = joined.value_at(&[a, b]);
                let rhs = dense.value_at(&[a, b]);
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn timeout_reported() {
        let f = parse_dimacs(FIG_DIMACS).unwrap();
        let net: TensorNetwork<f64> = reduce_wmc(&f);
        let tree = left_comb(net.tensors.len());
        let past = Instant::now() - std::time::Duration::from_secs(1);
        let err = contract(&net, &tree, DEFAULT_MEM_CAP, Some(past)).unwrap_err();
        assert!(matches!(err, NetworkError::Timeout));
    }
}

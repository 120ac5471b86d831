//! Multigraphs with explicit incidence maps.
//!
//! Vertices and edges are dense integer ids assigned in construction order.
//! Parallel edges are permitted; self-loops are rejected.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("self-loop on vertex {0} is not allowed")]
    SelfLoop(usize),
    #[error("vertex {0} out of range")]
    BadVertex(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Undirected multigraph. Each edge joins two distinct vertices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Multigraph {
    /// Endpoints of each edge, by edge id.
    endpoints: Vec<[usize; 2]>,
    /// Incident edge ids per vertex.
    incident: Vec<Vec<usize>>,
}

impl Multigraph {
    pub fn new(num_vertices: usize) -> Self {
        Multigraph {
            endpoints: Vec::new(),
            incident: vec![Vec::new(); num_vertices],
        }
    }

    pub fn add_vertex(&mut self) -> usize {
        self.incident.push(Vec::new());
        self.incident.len() - 1
    }

    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<usize, GraphError> {
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        let n = self.num_vertices();
        if u >= n || v >= n {
            return Err(GraphError::BadVertex(u.max(v)));
        }
        let e = self.endpoints.len();
        self.endpoints.push([u, v]);
        self.incident[u].push(e);
        self.incident[v].push(e);
        Ok(e)
    }

    pub fn num_vertices(&self) -> usize {
        self.incident.len()
    }

    pub fn num_edges(&self) -> usize {
        self.endpoints.len()
    }

    pub fn endpoints(&self, e: usize) -> [usize; 2] {
        self.endpoints[e]
    }

    /// Edges incident to `v`.
    pub fn incident_edges(&self, v: usize) -> &[usize] {
        &self.incident[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.incident[v].len()
    }

    pub fn vertices(&self) -> impl Iterator<Item = usize> {
        0..self.num_vertices()
    }

    pub fn edges(&self) -> impl Iterator<Item = usize> {
        0..self.num_edges()
    }

    /// Neighbors of `v`, with multiplicity.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.incident[v].iter().map(move |&e| {
            let [a, b] = self.endpoints[e];
            if a == v {
                b
            } else {
                a
            }
        })
    }

    pub fn is_connected(&self) -> bool {
        let n = self.num_vertices();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for w in self.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == n
    }

    /// True if some pair of distinct vertices is joined by an edge; used to
    /// check cliques in covers.
    pub fn has_edge_between(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).any(|w| w == v)
    }

    /// The same graph with parallel edges collapsed.
    pub fn simplified(&self) -> Multigraph {
        let mut g = Multigraph::new(self.num_vertices());
        let mut seen = HashSet::new();
        for e in self.edges() {
            let [u, v] = self.endpoints(e);
            let key = (u.min(v), u.max(v));
            if seen.insert(key) {
                g.add_edge(u, v).unwrap();
            }
        }
        g
    }
}

/// Line graph: one vertex per edge of `g`; the number of edges between two
/// vertices equals the number of endpoints shared by the corresponding edges.
pub fn line_graph(g: &Multigraph) -> Multigraph {
    let mut lg = Multigraph::new(g.num_edges());
    for e in g.edges() {
        for f in (e + 1)..g.num_edges() {
            let [a, b] = g.endpoints(e);
            let [c, d] = g.endpoints(f);
            let shared = (a == c) as usize
                + (a == d) as usize
                + (b == c) as usize
                + (b == d) as usize;
            for _ in 0..shared {
                lg.add_edge(e, f).unwrap();
            }
        }
    }
    lg
}

/// A labeled family of vertex sets, each a clique of the target graph, that
/// together cover all its vertices. Labels are positional.
#[derive(Debug, Clone)]
pub struct EdgeCliqueCover {
    pub sets: Vec<Vec<usize>>,
}

impl EdgeCliqueCover {
    /// Checks the cover against `g`: every vertex covered, every set a clique.
    pub fn validate(&self, g: &Multigraph) -> Result<(), String> {
        let mut covered = vec![false; g.num_vertices()];
        for (label, set) in self.sets.iter().enumerate() {
            for &v in set {
                if v >= g.num_vertices() {
                    return Err(format!("set {label} names unknown vertex {v}"));
                }
                covered[v] = true;
            }
            for i in 0..set.len() {
                for j in (i + 1)..set.len() {
                    if set[i] != set[j] && !g.has_edge_between(set[i], set[j]) {
                        return Err(format!(
                            "set {label} is not a clique: no edge {} -- {}",
                            set[i], set[j]
                        ));
                    }
                }
            }
        }
        if let Some(v) = covered.iter().position(|&c| !c) {
            return Err(format!("vertex {v} not covered"));
        }
        Ok(())
    }
}

/// The edge clique cover of `Line(g)` induced by vertex incidence: label `v`
/// maps to the set of edges incident to `v`, viewed as vertices of the line
/// graph. Labels are the vertices of `g`, in order.
pub fn edge_incidence_cover(g: &Multigraph) -> EdgeCliqueCover {
    EdgeCliqueCover {
        sets: g.vertices().map(|v| g.incident_edges(v).to_vec()).collect(),
    }
}

/// Reads a PACE-2017 `.gr` graph (`p tw <n> <m>`, one `u v` edge per line,
/// 1-based vertices).
pub fn read_pace_gr(text: &str) -> Result<Multigraph, GraphError> {
    let mut g: Option<Multigraph> = None;
    let mut edges_seen = 0usize;
    let mut edges_declared = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('c') {
            continue;
        }
        if let Some(rest) = l.strip_prefix("p ") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != "tw" {
                return Err(GraphError::Parse {
                    line,
                    msg: format!("bad header: {l}"),
                });
            }
            let n: usize = parts[1].parse().map_err(|_| GraphError::Parse {
                line,
                msg: "bad vertex count".into(),
            })?;
            edges_declared = parts[2].parse().map_err(|_| GraphError::Parse {
                line,
                msg: "bad edge count".into(),
            })?;
            g = Some(Multigraph::new(n));
        } else {
            let g = g.as_mut().ok_or(GraphError::Parse {
                line,
                msg: "edge before header".into(),
            })?;
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(GraphError::Parse {
                    line,
                    msg: format!("bad edge line: {l}"),
                });
            }
            let u: usize = parts[0].parse().map_err(|_| GraphError::Parse {
                line,
                msg: "bad endpoint".into(),
            })?;
            let v: usize = parts[1].parse().map_err(|_| GraphError::Parse {
                line,
                msg: "bad endpoint".into(),
            })?;
            if u == 0 || v == 0 || u > g.num_vertices() || v > g.num_vertices() {
                return Err(GraphError::Parse {
                    line,
                    msg: format!("endpoint out of range: {l}"),
                });
            }
            g.add_edge(u - 1, v - 1).map_err(|e| GraphError::Parse {
                line,
                msg: e.to_string(),
            })?;
            edges_seen += 1;
        }
    }
    let g = g.ok_or(GraphError::Parse {
        line: 0,
        msg: "missing header".into(),
    })?;
    if edges_seen != edges_declared {
        return Err(GraphError::Parse {
            line: 0,
            msg: format!("header declares {edges_declared} edges, found {edges_seen}"),
        });
    }
    Ok(g)
}

/// Writes PACE-2017 `.gr`. Parallel edges are collapsed on export (PACE
/// graphs are simple); returns `(text, collapsed_count)`.
pub fn write_pace_gr(g: &Multigraph) -> (String, usize) {
    let simple = g.simplified();
    let mut out = String::new();
    writeln!(out, "p tw {} {}", simple.num_vertices(), simple.num_edges()).unwrap();
    for e in simple.edges() {
        let [u, v] = simple.endpoints(e);
        writeln!(out, "{} {}", u + 1, v + 1).unwrap();
    }
    (out, g.num_edges() - simple.num_edges())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Multigraph {
        // a -- b -- c
        let mut g = Multigraph::new(3);
        g.add_edge(0, 1).unwrap();
        g.add_edge(1, 2).unwrap();
        g
    }

    fn triangle() -> Multigraph {
        let mut g = Multigraph::new(3);
        g.add_edge(0, 1).unwrap();
        g.add_edge(1, 2).unwrap();
        g.add_edge(0, 2).unwrap();
        g
    }

    #[test]
    fn rejects_self_loop() {
        let mut g = Multigraph::new(2);
        assert!(matches!(g.add_edge(1, 1), Err(GraphError::SelfLoop(1))));
    }

    #[test]
    fn line_graph_of_path() {
        let lg = line_graph(&path3());
        assert_eq!(lg.num_vertices(), 2);
        assert_eq!(lg.num_edges(), 1);
    }

    #[test]
    fn line_graph_of_triangle_is_triangle() {
        let lg = line_graph(&triangle());
        assert_eq!(lg.num_vertices(), 3);
        assert_eq!(lg.num_edges(), 3);
    }

    #[test]
    fn line_graph_of_parallel_pair() {
        let mut g = Multigraph::new(2);
        g.add_edge(0, 1).unwrap();
        g.add_edge(0, 1).unwrap();
        let lg = line_graph(&g);
        assert_eq!(lg.num_vertices(), 2);
        // |eps(e) cap eps(f)| = 2, so two parallel edges.
        assert_eq!(lg.num_edges(), 2);
    }

    #[test]
    fn line_graph_edge_count_simple() {
        // For simple g: |E(Line(g))| = sum_v C(deg v, 2).
        let g = triangle();
        let expect: usize = g
            .vertices()
            .map(|v| g.degree(v) * (g.degree(v) - 1) / 2)
            .sum();
        assert_eq!(line_graph(&g).num_edges(), expect);
    }

    #[test]
    fn incidence_cover_star() {
        // K_{1,3} centered at 0.
        let mut g = Multigraph::new(4);
        for v in 1..4 {
            g.add_edge(0, v).unwrap();
        }
        let cover = edge_incidence_cover(&g);
        assert_eq!(cover.sets[0].len(), 3);
        for v in 1..4 {
            assert_eq!(cover.sets[v].len(), 1);
        }
        cover.validate(&line_graph(&g)).unwrap();
    }

    #[test]
    fn incidence_cover_single_edge() {
        let mut g = Multigraph::new(2);
        g.add_edge(0, 1).unwrap();
        let cover = edge_incidence_cover(&g);
        assert_eq!(cover.sets, vec![vec![0], vec![0]]);
        cover.validate(&line_graph(&g)).unwrap();
    }

    #[test]
    fn incidence_cover_triangle() {
        let cover = edge_incidence_cover(&triangle());
        assert!(cover.sets.iter().all(|s| s.len() == 2));
        cover.validate(&line_graph(&triangle())).unwrap();
    }

    #[test]
    fn pace_round_trip() {
        let g = triangle();
        let (text, collapsed) = write_pace_gr(&g);
        assert_eq!(collapsed, 0);
        let h = read_pace_gr(&text).unwrap();
        assert_eq!(h.num_vertices(), 3);
        assert_eq!(h.num_edges(), 3);
    }

    #[test]
    fn pace_bad_header() {
        assert!(read_pace_gr("p cnf 3 2\n1 2\n").is_err());
        assert!(read_pace_gr("p tw 2 1\n1 3\n").is_err());
        assert!(read_pace_gr("p tw 2 2\n1 2\n").is_err());
    }
}

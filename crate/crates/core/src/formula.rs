//! CNF data model, weighted DIMACS parsing, and benchmark encoders.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::Multigraph;

#[derive(Debug, Error)]
pub enum FormulaError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("brute force refused: {0} variables is more than 30")]
    TooManyVariables(usize),
    #[error("no cubic graph exists on an odd number of vertices ({0})")]
    OddCubic(usize),
    #[error("cubic graphs need at least 4 vertices, got {0}")]
    TooSmallCubic(usize),
}

/// A non-zero DIMACS literal: variable id 1..=num_vars, negative = negated.
pub type Lit = i64;

pub fn lit_var(l: Lit) -> usize {
    l.unsigned_abs() as usize
}

/// CNF formula with a per-variable literal weight function.
///
/// `weights[v - 1]` is `(W(v, 0), W(v, 1))`; unspecified variables default to
/// `(1, 1)` for unweighted counting.
#[derive(Debug, Clone, PartialEq)]
pub struct CnfFormula {
    pub num_vars: usize,
    pub clauses: Vec<Vec<Lit>>,
    pub weights: Vec<(f64, f64)>,
}

impl CnfFormula {
    pub fn unweighted(num_vars: usize, clauses: Vec<Vec<Lit>>) -> CnfFormula {
        CnfFormula {
            num_vars,
            clauses,
            weights: vec![(1.0, 1.0); num_vars],
        }
    }

    pub fn weight(&self, var: usize, value: bool) -> f64 {
        let (w0, w1) = self.weights[var - 1];
        if value {
            w1
        } else {
            w0
        }
    }

    /// Clause ids containing each variable, i.e. `dep(x)` for every `x`.
    pub fn clause_occurrences(&self) -> Vec<Vec<usize>> {
        let mut dep = vec![Vec::new(); self.num_vars];
        for (c, clause) in self.clauses.iter().enumerate() {
            let mut seen = Vec::new();
            for &l in clause {
                let v = lit_var(l);
                if !seen.contains(&v) {
                    seen.push(v);
                    dep[v - 1].push(c);
                }
            }
        }
        dep
    }

    pub fn satisfied_by(&self, assignment: u64) -> bool {
        self.clauses.iter().all(|clause| {
            clause.iter().any(|&l| {
                let bit = (assignment >> (lit_var(l) - 1)) & 1 == 1;
                bit == (l > 0)
            })
        })
    }

    /// The incidence graph: variables then clauses as vertices, one edge per
    /// distinct (variable, clause) occurrence.
    pub fn incidence_graph(&self) -> Multigraph {
        let mut g = Multigraph::new(self.num_vars + self.clauses.len());
        for (c, clause) in self.clauses.iter().enumerate() {
            let mut seen = Vec::new();
            for &l in clause {
                let v = lit_var(l);
                if !seen.contains(&v) {
                    seen.push(v);
                    g.add_edge(v - 1, self.num_vars + c).unwrap();
                }
            }
        }
        g
    }
}

/// Parses DIMACS CNF with cachet-style `c w <var> <p>` weight comments and
/// explicit `w <var> <p0> <p1> 0` weight lines.
pub fn parse_dimacs(text: &str) -> Result<CnfFormula, FormulaError> {
    let err = |line: usize, msg: String| FormulaError::Parse { line, msg };

    // locate the header first so weight lines may appear anywhere
    let mut header = None;
    for (lineno, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if l.starts_with("p ") {
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.len() != 4 || parts[1] != "cnf" {
                return Err(err(lineno + 1, format!("malformed header: {l}")));
            }
            let nv: usize = parts[2]
                .parse()
                .map_err(|_| err(lineno + 1, "malformed variable count".into()))?;
            let nc: usize = parts[3]
                .parse()
                .map_err(|_| err(lineno + 1, "malformed clause count".into()))?;
            header = Some((lineno, nv, nc));
            break;
        }
    }
    let (header_line, num_vars, num_clauses) =
        header.ok_or_else(|| err(0, "missing `p cnf` header".into()))?;

    let mut weights = vec![(1.0, 1.0); num_vars];
    let mut clauses: Vec<Vec<Lit>> = Vec::new();
    let mut current: Vec<Lit> = Vec::new();
    let mut current_start = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let l = raw.trim();
        if lineno == header_line || l.is_empty() {
            continue;
        }
        if let Some(rest) = l.strip_prefix("c w ").or_else(|| l.strip_prefix("c w\t")) {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(err(line, format!("malformed weight comment: {l}")));
            }
            let var: usize = parts[0]
                .parse()
                .map_err(|_| err(line, "malformed weight variable".into()))?;
            let p: f64 = parts[1]
                .parse()
                .map_err(|_| err(line, "malformed weight value".into()))?;
            if var == 0 || var > num_vars {
                return Err(err(line, format!("weight for unknown variable {var}")));
            }
            weights[var - 1] = (1.0 - p, p);
            continue;
        }
        if l.starts_with('c') {
            continue;
        }
        if let Some(rest) = l.strip_prefix("w ") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 4 || parts[3] != "0" {
                return Err(err(line, format!("malformed weight line: {l}")));
            }
            let var: usize = parts[0]
                .parse()
                .map_err(|_| err(line, "malformed weight variable".into()))?;
            let p0: f64 = parts[1]
                .parse()
                .map_err(|_| err(line, "malformed weight value".into()))?;
            let p1: f64 = parts[2]
                .parse()
                .map_err(|_| err(line, "malformed weight value".into()))?;
            if var == 0 || var > num_vars {
                return Err(err(line, format!("weight for unknown variable {var}")));
            }
            weights[var - 1] = (p0, p1);
            continue;
        }
        // clause tokens; a clause may span lines and ends at 0
        for tok in l.split_whitespace() {
            let v: Lit = tok
                .parse()
                .map_err(|_| err(line, format!("malformed literal `{tok}`")))?;
            if v == 0 {
                if current.is_empty() {
                    return Err(err(line, "empty clause".into()));
                }
                clauses.push(std::mem::take(&mut current));
            } else {
                if lit_var(v) > num_vars {
                    return Err(err(line, format!("literal {v} out of range 1..{num_vars}")));
                }
                if current.is_empty() {
                    current_start = line;
                }
                // duplicate literals deduplicated; complementary pairs kept,
                // so tautological clauses survive as written
                if !current.contains(&v) {
                    current.push(v);
                }
            }
        }
    }
    if !current.is_empty() {
        return Err(err(current_start, "unterminated clause".into()));
    }
    if clauses.len() != num_clauses {
        return Err(err(
            0,
            format!(
                "header declares {num_clauses} clauses, found {}",
                clauses.len()
            ),
        ));
    }
    Ok(CnfFormula {
        num_vars,
        clauses,
        weights,
    })
}

/// Serializes back to DIMACS; non-unit weights become `w` lines.
pub fn serialize_dimacs(formula: &CnfFormula) -> String {
    let mut out = String::new();
    writeln!(out, "p cnf {} {}", formula.num_vars, formula.clauses.len()).unwrap();
    for (v, &(w0, w1)) in formula.weights.iter().enumerate() {
        if (w0, w1) != (1.0, 1.0) {
            writeln!(out, "w {} {} {} 0", v + 1, w0, w1).unwrap();
        }
    }
    for clause in &formula.clauses {
        for l in clause {
            write!(out, "{l} ").unwrap();
        }
        writeln!(out, "0").unwrap();
    }
    out
}

/// Direct evaluation of the weighted model count over all assignments.
pub fn brute_force_wmc(formula: &CnfFormula) -> Result<f64, FormulaError> {
    if formula.num_vars > 30 {
        return Err(FormulaError::TooManyVariables(formula.num_vars));
    }
    let mut total = 0.0;
    for assignment in 0u64..(1 << formula.num_vars) {
        if !formula.satisfied_by(assignment) {
            continue;
        }
        let mut weight = 1.0;
        for v in 1..=formula.num_vars {
            weight *= formula.weight(v, (assignment >> (v - 1)) & 1 == 1);
        }
        total += weight;
    }
    Ok(total)
}

/// Monotone 2-CNF whose models are the vertex covers of `g`: one variable
/// per vertex, one clause `(x_u | x_v)` per edge, unit weights.
pub fn encode_vertex_cover(g: &Multigraph) -> CnfFormula {
    let clauses = g
        .edges()
        .map(|e| {
            let [u, v] = g.endpoints(e);
            vec![(u + 1) as Lit, (v + 1) as Lit]
        })
        .collect();
    CnfFormula::unweighted(g.num_vertices(), clauses)
}

/// Samples a connected simple 3-regular graph by the pairing model with
/// rejection of loops, parallel edges, and disconnected outcomes.
/// Deterministic for a fixed `(n, seed)`.
pub fn random_cubic_graph(n: usize, seed: u64) -> Result<Multigraph, FormulaError> {
    if !n.is_multiple_of(2) {
        return Err(FormulaError::OddCubic(n));
    }
    if n < 4 {
        return Err(FormulaError::TooSmallCubic(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut points: Vec<usize> = (0..3 * n).collect();
        points.shuffle(&mut rng);
        let mut g = Multigraph::new(n);
        let mut simple = true;
        let mut seen = std::collections::HashSet::new();
        for pair in points.chunks(2) {
            let (u, v) = (pair[0] / 3, pair[1] / 3);
            if u == v || !seen.insert((u.min(v), u.max(v))) {
                simple = false;
                break;
            }
            g.add_edge(u, v).unwrap();
        }
        if simple && g.is_connected() {
            return Ok(g);
        }
    }
}

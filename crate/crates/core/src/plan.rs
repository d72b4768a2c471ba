//! Plan algebra: queries over triple patterns, binary join trees, their
//! adjacency-matrix encoding, enumeration, and projection from relaxed
//! adjacencies back to discrete plans.
//!
//! Node indexing is zero-based throughout the crate: a query with `n`
//! patterns yields plans over `N = 2n - 1` nodes where nodes `0..n` are the
//! pattern leaves, nodes `n..2n-1` are joins, and node `2n - 2` is the root.
//! The matrix entry `A[i][j] = 1` means node `i` is joined into node `j`;
//! the root row is always all zeros. Serialized plan files use 1-based
//! indices.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use crate::tensor::Tensor;

/// A position of a triple pattern: either a constant entity label or a
/// variable name. Variable names live in a namespace disjoint from entity
/// labels; serialized forms mark variables with a leading `?`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(String),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn constant(label: impl Into<String>) -> Term {
        Term::Const(label.into())
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    /// Serialized form: variables carry a leading `?`.
    pub fn encode(&self) -> String {
        match self {
            Term::Var(v) => format!("?{v}"),
            Term::Const(c) => c.clone(),
        }
    }

    pub fn decode(s: &str) -> Term {
        match s.strip_prefix('?') {
            Some(v) => Term::Var(v.to_string()),
            None => Term::Const(s.to_string()),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TriplePattern {
    pub s: Term,
    pub p: Term,
    pub o: Term,
}

impl TriplePattern {
    pub fn new(s: Term, p: Term, o: Term) -> TriplePattern {
        TriplePattern { s, p, o }
    }

    pub fn terms(&self) -> [&Term; 3] {
        [&self.s, &self.p, &self.o]
    }

    /// Variable names in position order, deduplicated.
    pub fn vars(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in self.terms() {
            if let Term::Var(v) = t {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
        }
        out
    }
}

/// An ordered conjunctive query; pattern order fixes leaf indices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    patterns: Vec<TriplePattern>,
}

impl Query {
    pub fn new(patterns: Vec<TriplePattern>) -> Result<Query, PlanError> {
        if patterns.is_empty() {
            return Err(PlanError::EmptyQuery);
        }
        Ok(Query { patterns })
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn patterns(&self) -> &[TriplePattern] {
        &self.patterns
    }

    pub fn pattern(&self, idx: usize) -> &TriplePattern {
        &self.patterns[idx]
    }

    /// Total plan-node count `N = 2n - 1`.
    pub fn node_count(&self) -> usize {
        2 * self.patterns.len() - 1
    }

    /// Sub-query over the given pattern indices, in the given order.
    pub fn subquery(&self, indices: &[usize]) -> Result<Query, PlanError> {
        let mut patterns = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.patterns.len() {
                return Err(PlanError::PatternOutOfRange {
                    index: i,
                    n: self.patterns.len(),
                });
            }
            patterns.push(self.patterns[i].clone());
        }
        Query::new(patterns)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("query must contain at least one pattern")]
    EmptyQuery,
    #[error("pattern index {index} out of range for query with {n} patterns")]
    PatternOutOfRange { index: usize, n: usize },
    #[error("plan over {n} patterns needs {expected} join entries, got {got}")]
    BadJoinCount { n: usize, expected: usize, got: usize },
    #[error("node {node} referenced as a child more than once or out of range")]
    BadChild { node: usize },
    #[error("plan is not a single tree rooted at the last join")]
    NotATree,
    #[error("interpolation weight {alpha} outside [0, 1]")]
    AlphaOutOfRange { alpha: f64 },
    #[error("matrix dimension {dim} is not odd and square")]
    BadMatrixDim { dim: usize },
    #[error("plan count overflows for n = {n}")]
    CountOverflow { n: usize },
    #[error("matrix shapes differ: {a}x{a} vs {b}x{b}")]
    DimMismatch { a: usize, b: usize },
}

/// A binary join tree. `joins[k]` holds the two child node ids of join
/// node `n + k`; the root is join node `2n - 2`. For `n = 1` there are no
/// joins and the single leaf is the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Plan {
    n: usize,
    joins: Vec<(usize, usize)>,
}

impl Plan {
    pub fn new(n: usize, joins: Vec<(usize, usize)>) -> Result<Plan, PlanError> {
        if n == 0 {
            return Err(PlanError::EmptyQuery);
        }
        if joins.len() != n - 1 {
            return Err(PlanError::BadJoinCount {
                n,
                expected: n - 1,
                got: joins.len(),
            });
        }
        let total = 2 * n - 1;
        let root = total - 1;
        // every non-root node is a child exactly once; the root never is
        let mut seen = vec![false; total];
        for &(l, r) in &joins {
            for c in [l, r] {
                if c >= total || c == root || seen[c] {
                    return Err(PlanError::BadChild { node: c });
                }
                seen[c] = true;
            }
        }
        if seen.iter().take(root).any(|&s| !s) {
            return Err(PlanError::NotATree);
        }
        let plan = Plan { n, joins };
        // reachability from the root rules out cycles among joins
        let mut visited = 0usize;
        let mut stack = vec![root];
        let mut mark = vec![false; total];
        while let Some(v) = stack.pop() {
            if mark[v] {
                return Err(PlanError::NotATree);
            }
            mark[v] = true;
            visited += 1;
            if let Some((l, r)) = plan.children(v) {
                stack.push(l);
                stack.push(r);
            }
        }
        if visited != total {
            return Err(PlanError::NotATree);
        }
        Ok(plan)
    }

    /// Single-leaf plan (one pattern, no joins).
    pub fn leaf() -> Plan {
        Plan { n: 1, joins: Vec::new() }
    }

    /// Left-linear chain over the given leaf order: the deepest join
    /// combines `order[0]` and `order[1]`, and each later join appends the
    /// next leaf to the running prefix. Join indices are canonical: join
    /// `n + k` is the k-th from the bottom, the root is `2n - 2`.
    pub fn left_linear_chain(n: usize, order: &[usize]) -> Result<Plan, PlanError> {
        if order.len() != n {
            return Err(PlanError::BadJoinCount {
                n,
                expected: n,
                got: order.len(),
            });
        }
        if n == 1 {
            if order[0] != 0 {
                return Err(PlanError::BadChild { node: order[0] });
            }
            return Ok(Plan::leaf());
        }
        let mut joins = Vec::with_capacity(n - 1);
        joins.push((order[0], order[1]));
        for (k, &leaf) in order.iter().enumerate().skip(2) {
            joins.push((n + k - 2, leaf));
        }
        Plan::new(n, joins)
    }

    pub fn leaf_count(&self) -> usize {
        self.n
    }

    pub fn node_count(&self) -> usize {
        2 * self.n - 1
    }

    pub fn root(&self) -> usize {
        2 * self.n - 2
    }

    pub fn is_join(&self, node: usize) -> bool {
        node >= self.n
    }

    /// Children of a join node; `None` for leaves.
    pub fn children(&self, node: usize) -> Option<(usize, usize)> {
        if node >= self.n {
            Some(self.joins[node - self.n])
        } else {
            None
        }
    }

    pub fn joins(&self) -> &[(usize, usize)] {
        &self.joins
    }

    /// Leaf order of a left-linear plan read from the deepest join upward;
    /// `None` when the plan is bushy.
    pub fn linear_order(&self) -> Option<Vec<usize>> {
        if self.n == 1 {
            return Some(vec![0]);
        }
        // walk down from the root following the single join child
        let mut chain = vec![self.root()];
        loop {
            let (l, r) = self.children(*chain.last().unwrap()).unwrap();
            let join_children: Vec<usize> =
                [l, r].into_iter().filter(|&c| self.is_join(c)).collect();
            match join_children.len() {
                0 => break,
                1 => chain.push(join_children[0]),
                _ => return None,
            }
        }
        let deepest = *chain.last().unwrap();
        let (l, r) = self.children(deepest).unwrap();
        if self.is_join(l) || self.is_join(r) {
            return None;
        }
        let mut order = vec![l, r];
        for &j in chain.iter().rev().skip(1) {
            let (a, b) = self.children(j).unwrap();
            let leaf = if self.is_join(a) { b } else { a };
            if self.is_join(leaf) {
                return None;
            }
            order.push(leaf);
        }
        Some(order)
    }
}

/// True iff every join has at most one join child and, for `n >= 2`, the
/// canonical first join (node `n`) has two leaf children.
pub fn is_left_linear(plan: &Plan) -> bool {
    if plan.leaf_count() == 1 {
        return true;
    }
    for &(l, r) in plan.joins() {
        if plan.is_join(l) && plan.is_join(r) {
            return false;
        }
    }
    let (l0, r0) = plan.children(plan.leaf_count()).unwrap();
    !plan.is_join(l0) && !plan.is_join(r0)
}

/// Binary adjacency encoding of a plan: `N x N` entries in `{0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanMatrix {
    n: usize,
    mat: Tensor,
}

impl PlanMatrix {
    pub fn leaf_count(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n - 1
    }

    pub fn matrix(&self) -> &Tensor {
        &self.mat
    }

    pub fn into_matrix(self) -> Tensor {
        self.mat
    }

    /// Wraps a square odd-dimension tensor without validating entries;
    /// [`decode`] reports any structural problems.
    pub fn from_tensor(mat: Tensor) -> Result<PlanMatrix, PlanError> {
        let (r, c) = mat.shape();
        if r != c || r % 2 == 0 {
            return Err(PlanError::BadMatrixDim { dim: r });
        }
        Ok(PlanMatrix { n: (r + 1) / 2, mat })
    }

    /// Returns a copy with the root row forced to zero.
    pub fn with_zero_root_row(&self) -> PlanMatrix {
        let mut mat = self.mat.clone();
        let root = self.dim() - 1;
        for j in 0..self.dim() {
            mat.set(root, j, 0.0);
        }
        PlanMatrix { n: self.n, mat }
    }
}

/// Adjacency matrix of a plan: exactly one out-edge per non-root node,
/// zeros elsewhere. The inverse of [`decode`].
pub fn encode(plan: &Plan) -> PlanMatrix {
    let dim = plan.node_count();
    let mut mat = Tensor::zeros(dim, dim);
    for (k, &(l, r)) in plan.joins().iter().enumerate() {
        let parent = plan.leaf_count() + k;
        mat.set(l, parent, 1.0);
        mat.set(r, parent, 1.0);
    }
    PlanMatrix { n: plan.leaf_count(), mat }
}

/// One structural defect found while decoding a matrix into a plan.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Entry is neither 0 nor 1.
    NonBinaryEntry { from: usize, to: usize, value: f64 },
    /// A pattern node has an incoming edge.
    PatternInEdge { from: usize, into: usize },
    /// Out-degree of a non-root node differs from 1, or the root row is
    /// not empty.
    OutDegree { node: usize, expected: usize, actual: usize },
    /// In-degree of a join differs from 2.
    JoinInDegree { node: usize, actual: usize },
    /// Nodes involved in a directed cycle.
    Cycle { nodes: Vec<usize> },
    /// Nodes that cannot reach the root.
    Disconnected { nodes: Vec<usize> },
    /// A node joined into itself.
    SelfLoop { node: usize },
    /// Matrix is not square with odd dimension.
    BadDimension { rows: usize, cols: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // report 1-based node indices, matching the serialized convention
        match self {
            Violation::NonBinaryEntry { from, to, value } => {
                write!(f, "entry ({}, {}) is {} (not 0/1)", from + 1, to + 1, value)
            }
            Violation::PatternInEdge { from, into } => {
                write!(f, "pattern node {} receives an edge from {}", into + 1, from + 1)
            }
            Violation::OutDegree { node, expected, actual } => {
                write!(f, "node {} has out-degree {actual}, expected {expected}", node + 1)
            }
            Violation::JoinInDegree { node, actual } => {
                write!(f, "join node {} has in-degree {actual}, expected 2", node + 1)
            }
            Violation::Cycle { nodes } => {
                let ids: Vec<String> = nodes.iter().map(|v| (v + 1).to_string()).collect();
                write!(f, "cycle through nodes {}", ids.join(", "))
            }
            Violation::Disconnected { nodes } => {
                let ids: Vec<String> = nodes.iter().map(|v| (v + 1).to_string()).collect();
                write!(f, "nodes {} cannot reach the root", ids.join(", "))
            }
            Violation::SelfLoop { node } => write!(f, "node {} joined into itself", node + 1),
            Violation::BadDimension { rows, cols } => {
                write!(f, "matrix is {rows}x{cols}, expected odd square")
            }
        }
    }
}

/// All structural defects of a candidate plan matrix, not just the first.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct PlanViolations {
    pub violations: Vec<Violation>,
}

impl fmt::Display for PlanViolations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid plan matrix: ")?;
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Decodes a binary matrix back into the unique plan it encodes, or
/// reports every violation found.
pub fn decode(mat: &Tensor) -> Result<Plan, PlanViolations> {
    let (rows, cols) = mat.shape();
    let mut violations = Vec::new();
    if rows != cols || rows % 2 == 0 {
        return Err(PlanViolations {
            violations: vec![Violation::BadDimension { rows, cols }],
        });
    }
    let dim = rows;
    let n = (dim + 1) / 2;
    let root = dim - 1;

    for i in 0..dim {
        for j in 0..dim {
            let v = mat.get(i, j);
            if v != 0.0 && v != 1.0 {
                violations.push(Violation::NonBinaryEntry { from: i, to: j, value: v });
            } else if v == 1.0 {
                if i == j {
                    violations.push(Violation::SelfLoop { node: i });
                }
                if j < n {
                    violations.push(Violation::PatternInEdge { from: i, into: j });
                }
            }
        }
    }

    let edge = |i: usize, j: usize| mat.get(i, j) == 1.0;
    for i in 0..dim {
        let out: usize = (0..dim).filter(|&j| edge(i, j)).count();
        let expected = usize::from(i != root);
        if out != expected {
            violations.push(Violation::OutDegree { node: i, expected, actual: out });
        }
    }
    for j in n..dim {
        let inn: usize = (0..dim).filter(|&i| edge(i, j)).count();
        if inn != 2 {
            violations.push(Violation::JoinInDegree { node: j, actual: inn });
        }
    }

    // cycle + connectivity over the out-edge graph
    let mut reach = vec![false; dim];
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        if reach[v] {
            continue;
        }
        reach[v] = true;
        for i in 0..dim {
            if edge(i, v) {
                stack.push(i);
            }
        }
    }
    let unreachable: Vec<usize> = (0..dim).filter(|&v| !reach[v]).collect();
    if !unreachable.is_empty() {
        violations.push(Violation::Disconnected { nodes: unreachable.clone() });
        // an unreachable region with out-edges everywhere must contain a cycle
        let looped: Vec<usize> = unreachable
            .iter()
            .copied()
            .filter(|&v| (0..dim).any(|j| edge(v, j)))
            .collect();
        if !looped.is_empty() && looped.iter().all(|&v| (0..dim).any(|j| edge(v, j))) {
            violations.push(Violation::Cycle { nodes: looped });
        }
    }

    if !violations.is_empty() {
        return Err(PlanViolations { violations });
    }

    let mut joins = Vec::with_capacity(n - 1);
    for j in n..dim {
        let children: Vec<usize> = (0..dim).filter(|&i| edge(i, j)).collect();
        joins.push((children[0], children[1]));
    }
    Plan::new(n, joins).map_err(|_| PlanViolations {
        violations: vec![Violation::Disconnected { nodes: vec![] }],
    })
}

/// Number of plans for `n` patterns: `n!` left-linear, or `C(n-1) * n!`
/// bushy, where `C` is the Catalan number.
pub fn count_plans(n: usize, space: PlanSpace) -> Result<u128, PlanError> {
    if n == 0 {
        return Err(PlanError::EmptyQuery);
    }
    let mut factorial: u128 = 1;
    for k in 2..=n as u128 {
        factorial = factorial
            .checked_mul(k)
            .ok_or(PlanError::CountOverflow { n })?;
    }
    match space {
        PlanSpace::LeftLinear => Ok(factorial),
        PlanSpace::Bushy => {
            // C(n-1) = (2n-2)! / ((n-1)! * n!)
            let m = (n - 1) as u128;
            let mut catalan: u128 = 1;
            for k in 0..m {
                catalan = catalan
                    .checked_mul(2 * m - k)
                    .ok_or(PlanError::CountOverflow { n })?;
                catalan /= k + 1;
            }
            catalan /= m + 1;
            catalan
                .checked_mul(factorial)
                .ok_or(PlanError::CountOverflow { n })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSpace {
    LeftLinear,
    Bushy,
}

/// Lazily enumerates all `n!` left-linear plans of a query, one per leaf
/// permutation, in lexicographic order of the leaf sequence.
pub fn enumerate_left_linear(query: &Query) -> impl Iterator<Item = Plan> {
    Permutations::new(query.len()).map(move |order| {
        Plan::left_linear_chain(order.len(), &order).expect("permutation yields a valid chain")
    })
}

/// Lexicographic permutations of `0..n`.
struct Permutations {
    next: Option<Vec<usize>>,
}

impl Permutations {
    fn new(n: usize) -> Permutations {
        Permutations {
            next: Some((0..n).collect()),
        }
    }
}

impl Iterator for Permutations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        // standard next_permutation
        let n = succ.len();
        let advanced = (|| {
            if n < 2 {
                return false;
            }
            let mut i = n - 1;
            while i > 0 && succ[i - 1] >= succ[i] {
                i -= 1;
            }
            if i == 0 {
                return false;
            }
            let mut j = n - 1;
            while succ[j] <= succ[i - 1] {
                j -= 1;
            }
            succ.swap(i - 1, j);
            succ[i..].reverse();
            true
        })();
        if advanced {
            self.next = Some(succ);
        }
        Some(current)
    }
}

/// Extracts a valid left-linear plan from an arbitrary nonnegative soft
/// adjacency by a best-first walk from the root: at each step the free
/// join `j` and free pattern `k` maximizing `A[j][c] + A[k][c]` are
/// attached to the current join `c`, then the walk descends into `j`; the
/// final join receives the two remaining patterns. Join indices of the
/// result are canonical (deepest join is node `n`), so re-encoding the
/// output of `encode` recovers the original plan.
pub fn project_discrete(soft: &Tensor, n: usize) -> Plan {
    assert!(n >= 2, "projection needs at least two patterns");
    let dim = 2 * n - 1;
    assert_eq!(soft.shape(), (dim, dim), "soft adjacency must be {dim}x{dim}");

    let mut free_patterns: Vec<usize> = (0..n).collect();
    let mut free_joins: Vec<usize> = (n..dim - 1).collect();
    let mut current = dim - 1;
    // leaf order collected from the root downward
    let mut picked = Vec::with_capacity(n);

    while !free_joins.is_empty() {
        let mut best = f64::NEG_INFINITY;
        let mut pick = (free_joins[0], free_patterns[0]);
        for &j in &free_joins {
            for &k in &free_patterns {
                let score = soft.get(j, current) + soft.get(k, current);
                if score > best {
                    best = score;
                    pick = (j, k);
                }
            }
        }
        let (j_star, k_star) = pick;
        picked.push(k_star);
        free_joins.retain(|&j| j != j_star);
        free_patterns.retain(|&k| k != k_star);
        current = j_star;
    }
    // the final join receives the two remaining patterns; prefer the one
    // with the larger in-edge first for a deterministic operand order
    let (a, b) = (free_patterns[0], free_patterns[1]);
    let (first, second) = if soft.get(b, current) > soft.get(a, current) {
        (b, a)
    } else {
        (a, b)
    };
    picked.push(second);
    picked.push(first);
    let order: Vec<usize> = picked.into_iter().rev().collect();
    Plan::left_linear_chain(n, &order).expect("projection produces a valid chain")
}

/// Entrywise convex combination `(1 - alpha) * p1 + alpha * p2`.
pub fn interpolate(p1: &PlanMatrix, p2: &PlanMatrix, alpha: f64) -> Result<Tensor, PlanError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(PlanError::AlphaOutOfRange { alpha });
    }
    if p1.dim() != p2.dim() {
        return Err(PlanError::DimMismatch { a: p1.dim(), b: p2.dim() });
    }
    let mut out = p1.matrix().scale(1.0 - alpha);
    out.axpy(alpha, p2.matrix());
    Ok(out)
}

/// Serialized plan document; node indices are 1-based on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanDoc {
    pub query_id: String,
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

impl PlanDoc {
    pub fn from_plan(query_id: impl Into<String>, plan: &Plan) -> PlanDoc {
        let matrix = encode(plan);
        let dim = matrix.dim();
        let mut edges = Vec::new();
        for i in 0..dim {
            for j in 0..dim {
                if matrix.matrix().get(i, j) == 1.0 {
                    edges.push([i + 1, j + 1]);
                }
            }
        }
        PlanDoc {
            query_id: query_id.into(),
            n: plan.leaf_count(),
            edges,
        }
    }

    pub fn to_plan(&self) -> Result<Plan, PlanViolations> {
        let dim = 2 * self.n - 1;
        let mut mat = Tensor::zeros(dim, dim);
        for &[i, j] in &self.edges {
            if i == 0 || j == 0 || i > dim || j > dim {
                return Err(PlanViolations {
                    violations: vec![Violation::NonBinaryEntry {
                        from: i.wrapping_sub(1),
                        to: j.wrapping_sub(1),
                        value: 1.0,
                    }],
                });
            }
            mat.set(i - 1, j - 1, 1.0);
        }
        decode(&mat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize) -> Plan {
        let order: Vec<usize> = (0..n).collect();
        Plan::left_linear_chain(n, &order).unwrap()
    }

    #[test]
    fn encode_single_pattern_is_one_by_one_zero() {
        let m = encode(&Plan::leaf());
        assert_eq!(m.matrix().shape(), (1, 1));
        assert_eq!(m.matrix().get(0, 0), 0.0);
    }

    #[test]
    fn encode_three_pattern_chain_matches_expected_edges() {
        // ((t1 join t2) join t3): first join is node 3 (0-based), root node 4
        let plan = chain(3);
        let m = encode(&plan);
        let expect = [(0, 3), (1, 3), (3, 4), (2, 4)];
        for i in 0..5 {
            for j in 0..5 {
                let want = if expect.contains(&(i, j)) { 1.0 } else { 0.0 };
                assert_eq!(m.matrix().get(i, j), want, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn root_row_is_always_zero() {
        for n in 1..=5 {
            let m = encode(&chain(n));
            let root = m.dim() - 1;
            for j in 0..m.dim() {
                assert_eq!(m.matrix().get(root, j), 0.0);
            }
        }
    }

    #[test]
    fn encode_has_exactly_2n_minus_2_ones() {
        for n in 2..=6 {
            let m = encode(&chain(n));
            let ones = m.matrix().data().iter().filter(|&&v| v == 1.0).count();
            assert_eq!(ones, 2 * n - 2);
        }
    }

    #[test]
    fn decode_rejects_pattern_in_edge() {
        let mut mat = encode(&chain(3)).into_matrix();
        mat.set(0, 1, 1.0);
        let err = decode(&mat).unwrap_err();
        assert!(err
            .violations
            .iter()
            .any(|v| matches!(v, Violation::PatternInEdge { into: 1, .. })));
    }

    #[test]
    fn decode_rejects_two_cycle_between_joins() {
        // n = 3: nodes 3, 4 are joins; wire them into a 2-cycle
        let mut mat = Tensor::zeros(5, 5);
        mat.set(3, 4, 1.0);
        mat.set(4, 3, 1.0);
        mat.set(0, 3, 1.0);
        mat.set(1, 3, 1.0);
        mat.set(2, 4, 1.0);
        let err = decode(&mat).unwrap_err();
        assert!(err.violations.iter().any(|v| matches!(v, Violation::Cycle { .. })));
    }

    #[test]
    fn decode_reports_multiple_violations() {
        let mut mat = encode(&chain(3)).into_matrix();
        mat.set(0, 1, 1.0); // pattern in-edge, also out-degree 2 for node 0
        mat.set(2, 4, 0.5); // non-binary
        let err = decode(&mat).unwrap_err();
        assert!(err.violations.len() >= 3, "got {:?}", err.violations);
    }

    #[test]
    fn left_linear_checks() {
        assert!(is_left_linear(&chain(3)));
        assert!(is_left_linear(&chain(2)));
        assert!(is_left_linear(&Plan::leaf()));
        let bushy = Plan::new(4, vec![(0, 1), (2, 3), (4, 5)]).unwrap();
        assert!(!is_left_linear(&bushy));
    }

    #[test]
    fn counts_match_formulas() {
        assert_eq!(count_plans(5, PlanSpace::LeftLinear).unwrap(), 120);
        assert_eq!(count_plans(3, PlanSpace::Bushy).unwrap(), 12);
        assert_eq!(count_plans(1, PlanSpace::LeftLinear).unwrap(), 1);
        assert_eq!(count_plans(1, PlanSpace::Bushy).unwrap(), 1);
        assert_eq!(count_plans(4, PlanSpace::Bushy).unwrap(), 120);
    }

    #[test]
    fn count_overflow_is_reported() {
        assert!(matches!(
            count_plans(40, PlanSpace::LeftLinear),
            Err(PlanError::CountOverflow { .. })
        ));
    }

    #[test]
    fn enumeration_yields_factorial_many_plans() {
        let q = test_query(3);
        assert_eq!(enumerate_left_linear(&q).count(), 6);
        let q1 = test_query(1);
        assert_eq!(enumerate_left_linear(&q1).count(), 1);
        let q4 = test_query(4);
        assert_eq!(enumerate_left_linear(&q4).count(), 24);
    }

    #[test]
    fn projection_is_identity_on_hard_chains() {
        // The matrix encoding does not distinguish the operand order of the
        // deepest join (both leaves point at the same node), so projection
        // recovers the plan exactly up to that orientation and the matrix
        // exactly in every case.
        for n in 2..=5 {
            let q = test_query(n);
            for plan in enumerate_left_linear(&q) {
                let hard = encode(&plan);
                let back = project_discrete(hard.matrix(), n);
                assert_eq!(encode(&back), hard);
                let (l, r) = plan.children(n).unwrap();
                if l < r {
                    assert_eq!(back, plan);
                }
            }
        }
    }

    #[test]
    fn projection_n2_is_the_unique_plan() {
        let soft = Tensor::from_vec(3, 3, vec![0.9, 0.0, 0.1, 0.2, 0.3, 0.5, 0.0, 0.0, 0.0]).unwrap();
        let plan = project_discrete(&soft, 2);
        assert_eq!(plan, Plan::left_linear_chain(2, &[0, 1]).unwrap());
    }

    #[test]
    fn projection_follows_dominant_entries() {
        // n = 3: join 3, root 4. Column 4 dominated by join 3 and pattern 2,
        // leaving patterns 0, 1 for the deepest join.
        let mut soft = Tensor::zeros(5, 5);
        soft.set(3, 4, 0.9);
        soft.set(2, 4, 0.8);
        soft.set(0, 3, 0.7);
        soft.set(1, 3, 0.2);
        let plan = project_discrete(&soft, 3);
        assert_eq!(plan, Plan::left_linear_chain(3, &[0, 1, 2]).unwrap());
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let p1 = encode(&chain(3));
        let q = test_query(3);
        let other = enumerate_left_linear(&q).nth(3).unwrap();
        let p2 = encode(&other);
        assert_eq!(&interpolate(&p1, &p2, 0.0).unwrap(), p1.matrix());
        assert_eq!(&interpolate(&p1, &p2, 1.0).unwrap(), p2.matrix());
        let mid = interpolate(&p1, &p2, 0.5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let a = p1.matrix().get(i, j);
                let b = p2.matrix().get(i, j);
                assert_eq!(mid.get(i, j), 0.5 * a + 0.5 * b);
            }
        }
        assert!(matches!(
            interpolate(&p1, &p2, 1.5),
            Err(PlanError::AlphaOutOfRange { .. })
        ));
    }

    #[test]
    fn plan_doc_round_trips() {
        let plan = chain(4);
        let doc = PlanDoc::from_plan("q0", &plan);
        assert_eq!(doc.to_plan().unwrap(), plan);
    }

    fn test_query(n: usize) -> Query {
        let patterns = (0..n)
            .map(|i| {
                TriplePattern::new(
                    Term::var(format!("v{i}")),
                    Term::constant(format!("p{i}")),
                    Term::var(format!("v{}", i + 1)),
                )
            })
            .collect();
        Query::new(patterns).unwrap()
    }
}

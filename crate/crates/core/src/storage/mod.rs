//! In-memory triple store with per-access-pattern indexes, hash-join
//! evaluation of queries, and the exact plan cost (sum of intermediate
//! join cardinalities).
//!
//! The store is immutable after load and safe to share across threads.

mod gen;
pub mod io;

pub use gen::{generate_synthetic, GenConfig, GenError, GeneratedQuery, QueryShape};

use std::collections::{HashMap, HashSet};
use thiserror::Error;

use crate::plan::{Plan, Query, Term, TriplePattern};

pub type EntityId = u32;

/// A labelled directed edge over dictionary-encoded entities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triple {
    pub s: EntityId,
    pub p: EntityId,
    pub o: EntityId,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("plan has {plan_leaves} leaves but query has {n} patterns")]
    LeafCountMismatch { plan_leaves: usize, n: usize },
    #[error("malformed triple line {line}: expected 3 whitespace-separated labels")]
    MalformedLine { line: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Bijection between entity labels and dense ids, assigned in first-seen
/// order so a reloaded store is bit-identical.
#[derive(Debug, Default, Clone)]
pub struct Dictionary {
    labels: Vec<String>,
    ids: HashMap<String, EntityId>,
}

impl Dictionary {
    pub fn intern(&mut self, label: &str) -> EntityId {
        if let Some(&id) = self.ids.get(label) {
            return id;
        }
        let id = self.labels.len() as EntityId;
        self.labels.push(label.to_string());
        self.ids.insert(label.to_string(), id);
        id
    }

    pub fn lookup(&self, label: &str) -> Option<EntityId> {
        self.ids.get(label).copied()
    }

    pub fn label(&self, id: EntityId) -> &str {
        &self.labels[id as usize]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Immutable triple set plus one index per constant access pattern.
#[derive(Debug)]
pub struct TripleStore {
    triples: Vec<Triple>,
    dict: Dictionary,
    occurrences: Vec<u32>,
    by_s: HashMap<EntityId, Vec<u32>>,
    by_p: HashMap<EntityId, Vec<u32>>,
    by_o: HashMap<EntityId, Vec<u32>>,
    by_sp: HashMap<(EntityId, EntityId), Vec<u32>>,
    by_po: HashMap<(EntityId, EntityId), Vec<u32>>,
    by_so: HashMap<(EntityId, EntityId), Vec<u32>>,
    spo: HashSet<(EntityId, EntityId, EntityId)>,
}

impl TripleStore {
    /// Builds a store from label triples; duplicates are dropped, keeping
    /// first occurrence order.
    pub fn from_labels<'a>(triples: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>) -> TripleStore {
        let mut dict = Dictionary::default();
        let mut seen = HashSet::new();
        let mut rows = Vec::new();
        for (s, p, o) in triples {
            let t = Triple {
                s: dict.intern(s),
                p: dict.intern(p),
                o: dict.intern(o),
            };
            if seen.insert((t.s, t.p, t.o)) {
                rows.push(t);
            }
        }
        TripleStore::build(rows, dict)
    }

    fn build(triples: Vec<Triple>, dict: Dictionary) -> TripleStore {
        let mut occurrences = vec![0u32; dict.len()];
        let mut by_s: HashMap<EntityId, Vec<u32>> = HashMap::new();
        let mut by_p: HashMap<EntityId, Vec<u32>> = HashMap::new();
        let mut by_o: HashMap<EntityId, Vec<u32>> = HashMap::new();
        let mut by_sp: HashMap<(EntityId, EntityId), Vec<u32>> = HashMap::new();
        let mut by_po: HashMap<(EntityId, EntityId), Vec<u32>> = HashMap::new();
        let mut by_so: HashMap<(EntityId, EntityId), Vec<u32>> = HashMap::new();
        let mut spo = HashSet::new();
        for (idx, t) in triples.iter().enumerate() {
            let idx = idx as u32;
            occurrences[t.s as usize] += 1;
            occurrences[t.p as usize] += 1;
            occurrences[t.o as usize] += 1;
            by_s.entry(t.s).or_default().push(idx);
            by_p.entry(t.p).or_default().push(idx);
            by_o.entry(t.o).or_default().push(idx);
            by_sp.entry((t.s, t.p)).or_default().push(idx);
            by_po.entry((t.p, t.o)).or_default().push(idx);
            by_so.entry((t.s, t.o)).or_default().push(idx);
            spo.insert((t.s, t.p, t.o));
        }
        TripleStore {
            triples,
            dict,
            occurrences,
            by_s,
            by_p,
            by_o,
            by_sp,
            by_po,
            by_so,
            spo,
        }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    /// Number of times a label occurs in the graph across all positions;
    /// 0 for unknown labels.
    pub fn occurrence_count(&self, label: &str) -> u32 {
        self.dict
            .lookup(label)
            .map_or(0, |id| self.occurrences[id as usize])
    }

    pub fn contains(&self, s: EntityId, p: EntityId, o: EntityId) -> bool {
        self.spo.contains(&(s, p, o))
    }

    /// All solution mappings of one triple pattern, answered through the
    /// most selective index for its constant positions. A constant label
    /// absent from the dictionary yields an empty table.
    pub fn match_pattern(&self, tp: &TriplePattern) -> BindingsTable {
        // columns: distinct variable names in position order
        let columns: Vec<String> = tp.vars().into_iter().map(str::to_string).collect();

        let mut consts: [Option<EntityId>; 3] = [None, None, None];
        for (slot, term) in consts.iter_mut().zip(tp.terms()) {
            if let Term::Const(label) = term {
                match self.dict.lookup(label) {
                    Some(id) => *slot = Some(id),
                    None => return BindingsTable::new(columns, Vec::new()),
                }
            }
        }

        let candidates: Candidates = match consts {
            [Some(s), Some(p), Some(o)] => {
                if self.contains(s, p, o) {
                    return BindingsTable::new(columns, vec![Vec::new()]);
                }
                return BindingsTable::new(columns, Vec::new());
            }
            [Some(s), Some(p), None] => Candidates::Index(self.by_sp.get(&(s, p))),
            [None, Some(p), Some(o)] => Candidates::Index(self.by_po.get(&(p, o))),
            [Some(s), None, Some(o)] => Candidates::Index(self.by_so.get(&(s, o))),
            [Some(s), None, None] => Candidates::Index(self.by_s.get(&s)),
            [None, Some(p), None] => Candidates::Index(self.by_p.get(&p)),
            [None, None, Some(o)] => Candidates::Index(self.by_o.get(&o)),
            [None, None, None] => Candidates::Scan,
        };

        let mut rows = Vec::new();
        let mut emit = |t: &Triple| {
            let mut bound: Vec<(usize, EntityId)> = Vec::with_capacity(3);
            for (term, value) in tp.terms().into_iter().zip([t.s, t.p, t.o]) {
                match term {
                    Term::Const(label) => {
                        if self.dict.lookup(label) != Some(value) {
                            return;
                        }
                    }
                    Term::Var(name) => {
                        let col = columns.iter().position(|c| c == name).unwrap();
                        if let Some(&(_, prev)) = bound.iter().find(|(c, _)| *c == col) {
                            if prev != value {
                                return; // repeated variable must bind equal values
                            }
                        } else {
                            bound.push((col, value));
                        }
                    }
                }
            }
            let mut row = vec![0; columns.len()];
            for (col, value) in bound {
                row[col] = value;
            }
            rows.push(row);
        };
        match candidates {
            Candidates::Scan => {
                for t in &self.triples {
                    emit(t);
                }
            }
            Candidates::Index(Some(idxs)) => {
                for &i in idxs {
                    emit(&self.triples[i as usize]);
                }
            }
            Candidates::Index(None) => {}
        }
        BindingsTable::new(columns, rows)
    }

    /// Evaluates a plan bottom-up, returning the table at every node.
    fn evaluate_plan(
        &self,
        query: &Query,
        plan: &Plan,
    ) -> Result<Vec<BindingsTable>, StoreError> {
        let n = query.len();
        if plan.leaf_count() != n {
            return Err(StoreError::LeafCountMismatch {
                plan_leaves: plan.leaf_count(),
                n,
            });
        }
        let mut tables: Vec<Option<BindingsTable>> = Vec::with_capacity(plan.node_count());
        for leaf in 0..n {
            tables.push(Some(self.match_pattern(query.pattern(leaf))));
        }
        for k in 0..n.saturating_sub(1) {
            let (l, r) = plan.children(n + k).expect("join node");
            let left = tables[l].take().expect("child evaluated once");
            let right = tables[r].take().expect("child evaluated once");
            tables.push(Some(join(&left, &right)));
        }
        Ok(tables.into_iter().map(|t| t.expect("unused child")).collect())
    }

    /// Full query answer under the given plan (the root table).
    pub fn answer(&self, query: &Query, plan: &Plan) -> Result<BindingsTable, StoreError> {
        let mut tables = self.evaluate_plan(query, plan)?;
        Ok(tables.pop().expect("root table"))
    }

    /// Exact cost of a plan: the sum of all intermediate join result
    /// cardinalities. Leaves cost 0. Also reports the per-join cardinality
    /// vector (index k is join node `n + k`).
    pub fn c_out_true(&self, query: &Query, plan: &Plan) -> Result<CoutReport, StoreError> {
        let tables = self.evaluate_plan(query, plan)?;
        let n = query.len();
        let join_cardinalities: Vec<u64> =
            tables[n..].iter().map(|t| t.len() as u64).collect();
        Ok(CoutReport {
            total: join_cardinalities.iter().sum(),
            join_cardinalities,
        })
    }
}

enum Candidates<'a> {
    Scan,
    Index(Option<&'a Vec<u32>>),
}

/// Exact plan cost: the total and per-join intermediate cardinalities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoutReport {
    pub total: u64,
    pub join_cardinalities: Vec<u64>,
}

/// A set of solution mappings: named columns over entity-id rows. Rows are
/// kept sorted and deduplicated, so equal mapping sets compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BindingsTable {
    columns: Vec<String>,
    rows: Vec<Vec<EntityId>>,
}

impl BindingsTable {
    pub fn new(columns: Vec<String>, mut rows: Vec<Vec<EntityId>>) -> BindingsTable {
        debug_assert!(rows.iter().all(|r| r.len() == columns.len()));
        rows.sort_unstable();
        rows.dedup();
        BindingsTable { columns, rows }
    }

    pub fn empty(columns: Vec<String>) -> BindingsTable {
        BindingsTable {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<EntityId>] {
        &self.rows
    }

    /// Cardinality |Omega|.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Row set projected onto the given column order, for order-insensitive
    /// comparisons across differently-arranged tables.
    pub fn projected_rows(&self, columns: &[String]) -> Vec<Vec<EntityId>> {
        let idx: Vec<usize> = columns
            .iter()
            .map(|c| self.column_index(c).expect("column present"))
            .collect();
        let mut out: Vec<Vec<EntityId>> = self
            .rows
            .iter()
            .map(|r| idx.iter().map(|&i| r[i]).collect())
            .collect();
        out.sort_unstable();
        out
    }
}

/// Hash join on the shared variables; disjoint variable sets degenerate to
/// a cross product. The build side is the smaller input. Output columns are
/// the left columns followed by the right-only columns.
pub fn join(left: &BindingsTable, right: &BindingsTable) -> BindingsTable {
    let shared: Vec<String> = left
        .columns
        .iter()
        .filter(|c| right.column_index(c).is_some())
        .cloned()
        .collect();
    let mut columns = left.columns.clone();
    for c in &right.columns {
        if !shared.contains(c) {
            columns.push(c.clone());
        }
    }

    let (build, probe, build_is_left) = if left.len() <= right.len() {
        (left, right, true)
    } else {
        (right, left, false)
    };

    let build_key_idx: Vec<usize> = shared
        .iter()
        .map(|c| build.column_index(c).unwrap())
        .collect();
    let probe_key_idx: Vec<usize> = shared
        .iter()
        .map(|c| probe.column_index(c).unwrap())
        .collect();

    let mut table: HashMap<Vec<EntityId>, Vec<usize>> = HashMap::new();
    for (i, row) in build.rows.iter().enumerate() {
        let key: Vec<EntityId> = build_key_idx.iter().map(|&k| row[k]).collect();
        table.entry(key).or_default().push(i);
    }

    // output assembly order: left row columns then right-only columns
    let right_t = if build_is_left { probe } else { build };
    let right_extra_idx: Vec<usize> = right_t
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| !shared.contains(c))
        .map(|(i, _)| i)
        .collect();

    let mut rows = Vec::new();
    for probe_row in &probe.rows {
        let key: Vec<EntityId> = probe_key_idx.iter().map(|&k| probe_row[k]).collect();
        let Some(matches) = table.get(&key) else { continue };
        for &bi in matches {
            let build_row = &build.rows[bi];
            let (lrow, rrow) = if build_is_left {
                (build_row, probe_row)
            } else {
                (probe_row, build_row)
            };
            let mut out = Vec::with_capacity(columns.len());
            out.extend_from_slice(lrow);
            for &i in &right_extra_idx {
                out.push(rrow[i]);
            }
            rows.push(out);
        }
    }
    BindingsTable::new(columns, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{Plan, Query, Term, TriplePattern};

    fn tp(s: &str, p: &str, o: &str) -> TriplePattern {
        TriplePattern::new(Term::decode(s), Term::decode(p), Term::decode(o))
    }

    #[test]
    fn match_pattern_with_two_variables() {
        let store = TripleStore::from_labels([("a", "p", "b"), ("a", "p", "c")]);
        let t = store.match_pattern(&tp("?x", "p", "?y"));
        assert_eq!(t.columns(), &["x".to_string(), "y".to_string()]);
        assert_eq!(t.len(), 2);
        let a = store.dictionary().lookup("a").unwrap();
        let b = store.dictionary().lookup("b").unwrap();
        let c = store.dictionary().lookup("c").unwrap();
        assert_eq!(t.rows(), &[vec![a, b], vec![a, c]]);
    }

    #[test]
    fn ground_triple_yields_single_empty_row() {
        let store = TripleStore::from_labels([("a", "p", "b")]);
        let t = store.match_pattern(&tp("a", "p", "b"));
        assert_eq!(t.columns().len(), 0);
        assert_eq!(t.len(), 1);
        assert_eq!(t.rows()[0].len(), 0);
    }

    #[test]
    fn unknown_predicate_yields_empty_table() {
        let store = TripleStore::from_labels([("a", "p", "b")]);
        let t = store.match_pattern(&tp("?x", "q", "?y"));
        assert_eq!(t.len(), 0);
    }

    #[test]
    fn repeated_variable_requires_equal_bindings() {
        let store = TripleStore::from_labels([("a", "p", "a"), ("a", "p", "b")]);
        let t = store.match_pattern(&tp("?x", "p", "?x"));
        assert_eq!(t.len(), 1);
        let a = store.dictionary().lookup("a").unwrap();
        assert_eq!(t.rows(), &[vec![a]]);
    }

    #[test]
    fn join_on_shared_variable() {
        let left = BindingsTable::new(
            vec!["x".into(), "y".into()],
            vec![vec![0, 1], vec![0, 2]],
        );
        let right = BindingsTable::new(
            vec!["y".into(), "z".into()],
            vec![vec![1, 9], vec![2, 9]],
        );
        let out = join(&left, &right);
        assert_eq!(out.columns(), &["x".to_string(), "y".to_string(), "z".to_string()]);
        assert_eq!(out.rows(), &[vec![0, 1, 9], vec![0, 2, 9]]);
    }

    #[test]
    fn join_with_empty_table_is_empty() {
        let left = BindingsTable::new(vec!["x".into()], vec![vec![1]]);
        let right = BindingsTable::empty(vec!["x".into()]);
        assert_eq!(join(&left, &right).len(), 0);
    }

    #[test]
    fn join_without_shared_variables_is_cross_product() {
        let left = BindingsTable::new(vec!["x".into()], vec![vec![1]]);
        let right = BindingsTable::new(vec!["y".into()], vec![vec![2]]);
        let out = join(&left, &right);
        assert_eq!(out.columns(), &["x".to_string(), "y".to_string()]);
        assert_eq!(out.rows(), &[vec![1, 2]]);
    }

    #[test]
    fn c_out_single_join() {
        let store =
            TripleStore::from_labels([("a", "p", "b"), ("a", "p", "c"), ("b", "q", "d"), ("c", "q", "d")]);
        let query = Query::new(vec![tp("?x", "p", "?y"), tp("?y", "q", "?z")]).unwrap();
        let plan = Plan::left_linear_chain(2, &[0, 1]).unwrap();
        let report = store.c_out_true(&query, &plan).unwrap();
        assert_eq!(report.total, 2);
        assert_eq!(report.join_cardinalities, vec![2]);
    }

    #[test]
    fn c_out_empty_join_propagates_zero() {
        let store = TripleStore::from_labels([("a", "p", "b"), ("x", "q", "y")]);
        let query = Query::new(vec![tp("?x", "p", "?y"), tp("?y", "q", "?z")]).unwrap();
        let plan = Plan::left_linear_chain(2, &[0, 1]).unwrap();
        let report = store.c_out_true(&query, &plan).unwrap();
        assert_eq!(report.total, 0);
    }

    #[test]
    fn c_out_three_pattern_chain_sums_both_joins() {
        let store = TripleStore::from_labels([
            ("a", "p", "b"),
            ("a", "p", "c"),
            ("b", "q", "d"),
            ("c", "q", "d"),
            ("d", "r", "e"),
        ]);
        let query = Query::new(vec![
            tp("?x", "p", "?y"),
            tp("?y", "q", "?z"),
            tp("?z", "r", "?w"),
        ])
        .unwrap();
        let plan = Plan::left_linear_chain(3, &[0, 1, 2]).unwrap();
        let report = store.c_out_true(&query, &plan).unwrap();
        assert_eq!(report.join_cardinalities, vec![2, 2]);
        assert_eq!(report.total, 4);
    }

    #[test]
    fn mismatched_plan_is_a_structural_error() {
        let store = TripleStore::from_labels([("a", "p", "b")]);
        let query = Query::new(vec![tp("?x", "p", "?y")]).unwrap();
        let plan = Plan::left_linear_chain(2, &[0, 1]).unwrap();
        assert!(matches!(
            store.c_out_true(&query, &plan),
            Err(StoreError::LeafCountMismatch { .. })
        ));
    }
}

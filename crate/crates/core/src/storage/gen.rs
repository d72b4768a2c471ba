//! Seeded synthetic graph and query generation.
//!
//! The graph is built so that both query shapes are always satisfiable at
//! the requested sizes: a backbone cycle over all entities guarantees
//! arbitrarily long paths, and a few hub subjects carry many distinct
//! predicates for wide stars. Queries are sampled by picking real triples
//! and generalizing positions to variables, so every generated query has
//! at least one answer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use thiserror::Error;

use super::{EntityId, TripleStore};
use crate::plan::{Query, Term, TriplePattern};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryShape {
    /// One shared subject variable across all patterns.
    Star,
    /// Object of pattern i chains into the subject of pattern i+1.
    Path,
}

impl fmt::Display for QueryShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryShape::Star => f.write_str("star"),
            QueryShape::Path => f.write_str("path"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenConfig {
    pub entities: usize,
    pub predicates: usize,
    pub triples: usize,
    pub seed: u64,
    pub shapes: Vec<QueryShape>,
    /// Pattern counts per query.
    pub sizes: Vec<usize>,
    pub queries_per_size: usize,
    pub max_retries: usize,
}

impl Default for GenConfig {
    fn default() -> GenConfig {
        GenConfig {
            entities: 300,
            predicates: 120,
            triples: 1500,
            seed: 1,
            shapes: vec![QueryShape::Star, QueryShape::Path],
            sizes: (2..=8).collect(),
            queries_per_size: 20,
            max_retries: 200,
        }
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("cannot satisfy {shape} query of size {size} after {retries} retries")]
    Unsatisfiable {
        shape: QueryShape,
        size: usize,
        retries: usize,
    },
    #[error("config invalid: {reason}")]
    BadConfig { reason: String },
}

#[derive(Debug, Clone)]
pub struct GeneratedQuery {
    pub id: String,
    pub shape: QueryShape,
    pub query: Query,
}

/// Deterministic for a fixed config: same seed, same store, same queries.
pub fn generate_synthetic(config: &GenConfig) -> Result<(TripleStore, Vec<GeneratedQuery>), GenError> {
    validate(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let store = generate_store(config, &mut rng);
    let queries = generate_queries(config, &store, &mut rng)?;
    Ok((store, queries))
}

fn validate(config: &GenConfig) -> Result<(), GenError> {
    let bad = |reason: &str| -> Result<(), GenError> {
        Err(GenError::BadConfig {
            reason: reason.to_string(),
        })
    };
    if config.entities < 2 {
        return bad("need at least two entities");
    }
    if config.predicates == 0 {
        return bad("need at least one predicate");
    }
    if config.triples < config.entities {
        return bad("need at least as many triples as entities for the backbone");
    }
    if config.sizes.iter().any(|&n| n == 0) {
        return bad("query sizes must be positive");
    }
    Ok(())
}

fn generate_store(config: &GenConfig, rng: &mut ChaCha8Rng) -> TripleStore {
    let ent = |i: usize| format!("e{i}");
    let pred = |i: usize| format!("p{i}");
    let mut seen: HashSet<(usize, usize, usize)> = HashSet::new();
    let mut triples: Vec<(usize, usize, usize)> = Vec::with_capacity(config.triples);
    fn push(
        seen: &mut HashSet<(usize, usize, usize)>,
        triples: &mut Vec<(usize, usize, usize)>,
        t: (usize, usize, usize),
    ) {
        if t.0 != t.2 && seen.insert(t) {
            triples.push(t);
        }
    }

    // backbone: a shuffled cycle over all entities so every entity has an
    // out-edge and paths of any length exist
    let mut order: Vec<usize> = (0..config.entities).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    for i in 0..order.len() {
        let s = order[i];
        let o = order[(i + 1) % order.len()];
        let p = rng.gen_range(0..config.predicates);
        push(&mut seen, &mut triples, (s, p, o));
    }

    // hubs: subjects with many distinct predicates support wide stars
    let max_size = config.sizes.iter().copied().max().unwrap_or(2);
    let hub_width = config.predicates.min(max_size.max(16));
    let hub_count = (config.entities / 64).max(4);
    for h in 0..hub_count {
        let s = order[h % order.len()];
        let mut preds: Vec<usize> = (0..config.predicates).collect();
        for i in (1..preds.len()).rev() {
            preds.swap(i, rng.gen_range(0..=i));
        }
        for &p in preds.iter().take(hub_width) {
            let o = rng.gen_range(0..config.entities);
            push(&mut seen, &mut triples, (s, p, o));
        }
    }

    // fill with uniform random triples up to the requested count
    let mut guard = 0usize;
    while triples.len() < config.triples && guard < config.triples * 20 {
        guard += 1;
        let t = (
            rng.gen_range(0..config.entities),
            rng.gen_range(0..config.predicates),
            rng.gen_range(0..config.entities),
        );
        push(&mut seen, &mut triples, t);
    }

    let labelled: Vec<(String, String, String)> = triples
        .iter()
        .map(|&(s, p, o)| (ent(s), pred(p), ent(o)))
        .collect();
    TripleStore::from_labels(labelled.iter().map(|(s, p, o)| (s.as_str(), p.as_str(), o.as_str())))
}

fn generate_queries(
    config: &GenConfig,
    store: &TripleStore,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<GeneratedQuery>, GenError> {
    // subject -> sorted distinct predicates, in deterministic order
    let mut subject_preds: BTreeMap<EntityId, BTreeSet<EntityId>> = BTreeMap::new();
    let mut out_edges: BTreeMap<EntityId, Vec<(EntityId, EntityId)>> = BTreeMap::new();
    for t in store.triples() {
        subject_preds.entry(t.s).or_default().insert(t.p);
        out_edges.entry(t.s).or_default().push((t.p, t.o));
    }
    let star_candidates: Vec<(EntityId, Vec<EntityId>)> = subject_preds
        .iter()
        .map(|(&s, preds)| (s, preds.iter().copied().collect()))
        .collect();
    let walk_starts: Vec<EntityId> = out_edges.keys().copied().collect();

    let mut queries = Vec::new();
    let mut seen_signatures: HashSet<String> = HashSet::new();
    for &shape in &config.shapes {
        for &n in &config.sizes {
            for q_idx in 0..config.queries_per_size {
                let mut found = None;
                for _ in 0..config.max_retries.max(1) {
                    let candidate = match shape {
                        QueryShape::Star => sample_star(store, &star_candidates, n, rng),
                        QueryShape::Path => sample_path(store, &out_edges, &walk_starts, n, rng),
                    };
                    if let Some(patterns) = candidate {
                        let signature = patterns
                            .iter()
                            .map(|p| format!("{} {} {}", p.s, p.p, p.o))
                            .collect::<Vec<_>>()
                            .join("|");
                        if seen_signatures.insert(signature) {
                            found = Some(patterns);
                            break;
                        }
                    }
                }
                match found {
                    Some(patterns) => {
                        let query = Query::new(patterns).expect("non-empty pattern list");
                        queries.push(GeneratedQuery {
                            id: format!("{shape}_n{n}_q{q_idx}"),
                            shape,
                            query,
                        });
                    }
                    None => {
                        return Err(GenError::Unsatisfiable {
                            shape,
                            size: n,
                            retries: config.max_retries,
                        })
                    }
                }
            }
        }
    }
    Ok(queries)
}

/// Star of size n: a subject with >= n distinct predicates, generalized to
/// (?v0, p_i, ?vi) with distinct constant predicates.
fn sample_star(
    store: &TripleStore,
    candidates: &[(EntityId, Vec<EntityId>)],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<TriplePattern>> {
    let eligible: Vec<&(EntityId, Vec<EntityId>)> =
        candidates.iter().filter(|(_, preds)| preds.len() >= n).collect();
    if eligible.is_empty() {
        return None;
    }
    let (_, preds) = eligible[rng.gen_range(0..eligible.len())];
    let mut picks = preds.clone();
    for i in (1..picks.len()).rev() {
        picks.swap(i, rng.gen_range(0..=i));
    }
    picks.truncate(n);
    Some(
        picks
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                TriplePattern::new(
                    Term::var("v0"),
                    Term::constant(store.dictionary().label(p)),
                    Term::var(format!("v{}", i + 1)),
                )
            })
            .collect(),
    )
}

/// Path of size n: a random walk of n edges, generalized to
/// (?v0, p1, ?v1), (?v1, p2, ?v2), ...
fn sample_path(
    store: &TripleStore,
    out_edges: &BTreeMap<EntityId, Vec<(EntityId, EntityId)>>,
    starts: &[EntityId],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<TriplePattern>> {
    if starts.is_empty() {
        return None;
    }
    let mut current = starts[rng.gen_range(0..starts.len())];
    let mut preds = Vec::with_capacity(n);
    for _ in 0..n {
        let edges = out_edges.get(&current)?;
        let &(p, o) = &edges[rng.gen_range(0..edges.len())];
        preds.push(p);
        current = o;
    }
    Some(
        preds
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                TriplePattern::new(
                    Term::var(format!("v{i}")),
                    Term::constant(store.dictionary().label(p)),
                    Term::var(format!("v{}", i + 1)),
                )
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::Plan;

    fn small_config() -> GenConfig {
        GenConfig {
            entities: 60,
            predicates: 24,
            triples: 300,
            seed: 7,
            shapes: vec![QueryShape::Star, QueryShape::Path],
            sizes: vec![3, 4],
            queries_per_size: 5,
            max_retries: 200,
        }
    }

    #[test]
    fn star_queries_share_subject_variable_with_distinct_predicates() {
        let (_, queries) = generate_synthetic(&small_config()).unwrap();
        let star = queries
            .iter()
            .find(|q| q.shape == QueryShape::Star && q.query.len() == 3)
            .unwrap();
        let mut preds = HashSet::new();
        for tp in star.query.patterns() {
            assert_eq!(tp.s, Term::var("v0"));
            assert!(tp.o.is_var());
            match &tp.p {
                Term::Const(p) => assert!(preds.insert(p.clone()), "duplicate predicate"),
                Term::Var(_) => panic!("star predicate must be constant"),
            }
        }
    }

    #[test]
    fn path_queries_chain_object_into_subject() {
        let (_, queries) = generate_synthetic(&small_config()).unwrap();
        let path = queries
            .iter()
            .find(|q| q.shape == QueryShape::Path && q.query.len() == 4)
            .unwrap();
        for (i, tp) in path.query.patterns().iter().enumerate() {
            assert_eq!(tp.s, Term::var(format!("v{i}")));
            assert_eq!(tp.o, Term::var(format!("v{}", i + 1)));
            assert!(!tp.p.is_var());
        }
    }

    #[test]
    fn same_seed_reproduces_store_and_queries() {
        let cfg = small_config();
        let (store_a, queries_a) = generate_synthetic(&cfg).unwrap();
        let (store_b, queries_b) = generate_synthetic(&cfg).unwrap();
        assert_eq!(store_a.triples(), store_b.triples());
        assert_eq!(queries_a.len(), queries_b.len());
        for (a, b) in queries_a.iter().zip(queries_b.iter()) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.query, b.query);
        }
    }

    #[test]
    fn every_generated_query_has_results() {
        let (store, queries) = generate_synthetic(&small_config()).unwrap();
        for gq in &queries {
            let n = gq.query.len();
            let order: Vec<usize> = (0..n).collect();
            let plan = Plan::left_linear_chain(n, &order).unwrap();
            let answer = store.answer(&gq.query, &plan).unwrap();
            assert!(!answer.is_empty(), "query {} has no results", gq.id);
        }
    }

    #[test]
    fn oversized_star_reports_the_failing_size() {
        let mut cfg = small_config();
        cfg.predicates = 4;
        cfg.sizes = vec![10];
        cfg.shapes = vec![QueryShape::Star];
        cfg.max_retries = 5;
        match generate_synthetic(&cfg) {
            Err(GenError::Unsatisfiable { size: 10, .. }) => {}
            other => panic!("expected unsatisfiable error, got {other:?}"),
        }
    }
}

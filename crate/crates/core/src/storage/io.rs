//! Flat-file formats: triple files, query documents, dataset manifests.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use super::{GenConfig, QueryShape, StoreError, TripleStore};
use crate::plan::{Query, Term, TriplePattern};

/// Writes one triple per line as three whitespace-separated labels.
pub fn save_store(store: &TripleStore, path: &Path) -> Result<(), StoreError> {
    let mut out = String::new();
    out.push_str("# triples: subject predicate object\n");
    for t in store.triples() {
        let d = store.dictionary();
        out.push_str(d.label(t.s));
        out.push(' ');
        out.push_str(d.label(t.p));
        out.push(' ');
        out.push_str(d.label(t.o));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Loads a triple file; `#`-prefixed and blank lines are ignored.
pub fn load_store(path: &Path) -> Result<TripleStore, StoreError> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<(String, String, String)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(s), Some(p), Some(o), None) => {
                rows.push((s.to_string(), p.to_string(), o.to_string()))
            }
            _ => return Err(StoreError::MalformedLine { line: lineno + 1 }),
        }
    }
    Ok(TripleStore::from_labels(
        rows.iter().map(|(s, p, o)| (s.as_str(), p.as_str(), o.as_str())),
    ))
}

/// Serialized query: a leading `?` marks a variable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryDoc {
    pub id: String,
    pub shape: QueryShape,
    pub patterns: Vec<PatternDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternDoc {
    pub s: String,
    pub p: String,
    pub o: String,
}

impl QueryDoc {
    pub fn from_query(id: impl Into<String>, shape: QueryShape, query: &Query) -> QueryDoc {
        QueryDoc {
            id: id.into(),
            shape,
            patterns: query
                .patterns()
                .iter()
                .map(|tp| PatternDoc {
                    s: tp.s.encode(),
                    p: tp.p.encode(),
                    o: tp.o.encode(),
                })
                .collect(),
        }
    }

    pub fn to_query(&self) -> Result<Query, crate::plan::PlanError> {
        Query::new(
            self.patterns
                .iter()
                .map(|p| {
                    TriplePattern::new(Term::decode(&p.s), Term::decode(&p.p), Term::decode(&p.o))
                })
                .collect(),
        )
    }
}

pub fn save_queries(docs: &[QueryDoc], path: &Path) -> Result<(), StoreError> {
    let json = serde_json::to_string_pretty(docs)?;
    fs::write(path, json + "\n")?;
    Ok(())
}

pub fn load_queries(path: &Path) -> Result<Vec<QueryDoc>, StoreError> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Provenance record tying a store, its queries, and the generator config
/// together. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub store: String,
    pub queries: Vec<String>,
    pub seed: u64,
    pub generator: GenConfig,
    /// Training-example file (query id, plan file, exact cost per line).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub examples: Option<String>,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DatasetManifest, StoreError> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Resolves a manifest-relative path against the manifest location.
    pub fn resolve(&self, manifest_path: &Path, relative: &str) -> PathBuf {
        match manifest_path.parent() {
            Some(dir) => dir.join(relative),
            None => PathBuf::from(relative),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::generate_synthetic;

    #[test]
    fn store_round_trips_through_text() {
        let cfg = GenConfig {
            entities: 20,
            predicates: 8,
            triples: 60,
            seed: 3,
            shapes: vec![QueryShape::Star],
            sizes: vec![2],
            queries_per_size: 1,
            max_retries: 50,
        };
        let (store, _) = generate_synthetic(&cfg).unwrap();
        let dir = std::env::temp_dir().join(format!("joinopt-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("store.txt");
        save_store(&store, &path).unwrap();
        let loaded = load_store(&path).unwrap();
        assert_eq!(store.triples(), loaded.triples());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn query_doc_round_trips_variables_and_constants() {
        let q = Query::new(vec![TriplePattern::new(
            Term::var("x"),
            Term::constant("p1"),
            Term::var("y"),
        )])
        .unwrap();
        let doc = QueryDoc::from_query("q", QueryShape::Star, &q);
        assert_eq!(doc.patterns[0].s, "?x");
        assert_eq!(doc.patterns[0].p, "p1");
        assert_eq!(doc.to_query().unwrap(), q);
    }
}

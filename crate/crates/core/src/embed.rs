//! Per-class word embeddings: a loader for whitespace-separated text files
//! (one token per line, `token v1 v2 ... vE`) and a deterministic synthetic
//! generator with controllable semantic cluster structure.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::catalog::ClassCatalog;
use crate::hash::fnv64;
use crate::rng::{derive_seed, Rng};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("classes missing from embedding file: {0:?}")]
    MissingClasses(Vec<String>),
    #[error("line {line}: expected dimension {expected}, got {got}")]
    DimMismatch {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("{count} prototypes cannot be orthogonalized in {dim} dimensions")]
    TooManyPrototypes { count: usize, dim: usize },
    #[error("embedding dimension must be >= 2, got {0}")]
    DimTooSmall(usize),
    #[error("noise sigma must be >= 0, got {0}")]
    NegativeSigma(f64),
    #[error("token {0:?} contains whitespace and cannot be serialized")]
    UnserializableToken(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Immutable class-name -> vector table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, class: &str) -> bool {
        self.vectors.contains_key(class)
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(|s| s.as_str())
    }

    /// The stored vector for a registered class.
    pub fn embedding_of(&self, class: &str) -> Result<&[f64], EmbedError> {
        self.vectors
            .get(class)
            .map(|v| v.as_slice())
            .ok_or_else(|| EmbedError::UnknownClass(class.to_string()))
    }

    /// Write in the same text format the loader reads. Full-precision float
    /// formatting keeps save -> load an identity.
    pub fn save_text(&self, path: &Path) -> Result<(), EmbedError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (name, vec) in &self.vectors {
            if name.split_whitespace().count() != 1 {
                return Err(EmbedError::UnserializableToken(name.clone()));
            }
            write!(out, "{name}")?;
            for v in vec {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Load embeddings for `wanted` classes from a text file.
///
/// Multi-word class names (whitespace-separated) resolve to the mean of
/// their token vectors. Token lookup tries the exact token first, then
/// its lowercase form.
pub fn load_text_embeddings(
    path: &Path,
    wanted: &[String],
) -> Result<EmbeddingTable, EmbedError> {
    let file = std::fs::File::open(path)?;
    let mut tokens: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut dim: Option<usize> = None;

    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line_no = line_no + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts
            .next()
            .ok_or_else(|| EmbedError::Parse {
                line: line_no,
                msg: "missing token".into(),
            })?
            .to_string();
        let values: Result<Vec<f64>, _> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|e| EmbedError::Parse {
                    line: line_no,
                    msg: format!("bad float {p:?}: {e}"),
                })
            })
            .collect();
        let values = values?;
        if values.is_empty() {
            return Err(EmbedError::Parse {
                line: line_no,
                msg: "no vector values".into(),
            });
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(EmbedError::DimMismatch {
                    line: line_no,
                    expected: d,
                    got: values.len(),
                });
            }
            _ => {}
        }
        tokens.insert(token, values);
    }

    let dim = dim.ok_or(EmbedError::Parse {
        line: 0,
        msg: "empty embedding file".into(),
    })?;

    let lookup = |tok: &str| -> Option<&Vec<f64>> {
        tokens.get(tok).or_else(|| tokens.get(&tok.to_lowercase()))
    };

    let mut vectors = BTreeMap::new();
    let mut missing = Vec::new();
    for class in wanted {
        let words: Vec<&str> = class.split_whitespace().collect();
        let mut acc = vec![0.0; dim];
        let mut found = true;
        for w in &words {
            match lookup(w) {
                Some(v) => {
                    for (a, x) in acc.iter_mut().zip(v) {
                        *a += x;
                    }
                }
                None => {
                    found = false;
                    break;
                }
            }
        }
        if !found || words.is_empty() {
            missing.push(class.clone());
            continue;
        }
        for a in &mut acc {
            *a /= words.len() as f64;
        }
        vectors.insert(class.clone(), acc);
    }
    if !missing.is_empty() {
        return Err(EmbedError::MissingClasses(missing));
    }
    Ok(EmbeddingTable { dim, vectors })
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity of two registered classes.
pub fn cosine(table: &EmbeddingTable, a: &str, b: &str) -> Result<f64, EmbedError> {
    let va = table.embedding_of(a)?;
    let vb = table.embedding_of(b)?;
    let na = dot(va, va).sqrt();
    let nb = dot(vb, vb).sqrt();
    Ok(dot(va, vb) / (na * nb))
}

/// Deterministic synthetic embeddings with semantic cluster structure.
///
/// One unit-norm prototype vector per prototype id, near-orthogonalized by
/// Gram-Schmidt (requires #prototypes <= dim); each class vector is the
/// normalized sum of its prototype and sigma-scaled Gaussian noise. A pure
/// function of (catalog, dim, sigma, seed): per-class noise streams derive
/// from the class name, so insertion order cannot matter.
pub fn synth_embeddings(
    catalog: &ClassCatalog,
    dim: usize,
    sigma: f64,
    seed: u64,
) -> Result<EmbeddingTable, EmbedError> {
    if dim < 2 {
        return Err(EmbedError::DimTooSmall(dim));
    }
    if sigma < 0.0 {
        return Err(EmbedError::NegativeSigma(sigma));
    }
    let prototypes = catalog.prototypes();
    if prototypes.len() > dim {
        return Err(EmbedError::TooManyPrototypes {
            count: prototypes.len(),
            dim,
        });
    }

    // Prototype directions: seeded Gaussian draws, orthogonalized in the
    // deterministic order given by the catalog.
    let mut protos: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for name in &prototypes {
        let mut rng = Rng::new(derive_seed(seed, fnv64(name.as_bytes())));
        let v = loop {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.gaussian()).collect();
            for b in &basis {
                let d = dot(&v, b);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= d * y;
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-6 {
                for x in v.iter_mut() {
                    *x /= norm;
                }
                break v;
            }
        };
        basis.push(v.clone());
        protos.insert(name.clone(), v);
    }

    let mut vectors = BTreeMap::new();
    for class in catalog.classes() {
        let proto = &protos[&class.prototype];
        let mut rng = Rng::new(derive_seed(
            seed ^ 0x5eed_c1a5,
            fnv64(class.name.as_bytes()),
        ));
        let mut v: Vec<f64> = proto
            .iter()
            .map(|p| p + sigma * rng.gaussian())
            .collect();
        normalize(&mut v);
        vectors.insert(class.name.clone(), v);
    }
    Ok(EmbeddingTable { dim, vectors })
}

/// Smallest within-prototype cosine minus largest cross-prototype cosine
/// over all class pairs. Positive means nearest-neighbor-by-cosine always
/// stays inside the prototype cluster.
pub fn cluster_margin(table: &EmbeddingTable, catalog: &ClassCatalog) -> f64 {
    let mut min_within = f64::INFINITY;
    let mut max_cross = f64::NEG_INFINITY;
    let classes: Vec<_> = catalog.classes().collect();
    for (i, a) in classes.iter().enumerate() {
        for b in classes.iter().skip(i + 1) {
            let c = cosine(table, &a.name, &b.name).expect("registered");
            if a.prototype == b.prototype {
                min_within = min_within.min(c);
            } else {
                max_cross = max_cross.max(c);
            }
        }
    }
    min_within - max_cross
}

//! Vector index with inner-product ranking: exact flat scan, approximate
//! inverted-file search over k-means partitions, and binary persistence.

pub mod kmeans;
mod persist;
pub mod scan;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("doc id already present: {0}")]
    DuplicateDocId(String),
    #[error("vector dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    BadK,
    #[error("cannot train {nlist} lists from {size} vectors")]
    TooFewVectors { size: usize, nlist: usize },
    #[error("index has no trained partitions")]
    NotTrained,
    #[error("nprobe {nprobe} out of range 1..={nlist}")]
    BadNprobe { nprobe: usize, nlist: usize },
    #[error("corrupt index file: {0}")]
    CorruptFile(String),
    #[error("index i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
}

/// One stored document vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub doc_id: String,
    pub vector: Vec<f32>,
}

/// A ranked retrieval result. Within a result list scores are non-increasing
/// by rank and equal scores are ordered by ascending doc id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub doc_id: String,
    pub score: f32,
    pub rank: usize,
}

/// Trained inverted-file state: k-means centroids plus the list assignment
/// of every entry. Lists partition the entry set.
#[derive(Debug, Clone, PartialEq)]
pub struct IvfState {
    nlist: usize,
    centroids: Vec<Vec<f32>>,
    assignments: Vec<u32>,
    lists: Vec<Vec<u32>>,
}

impl IvfState {
    fn from_parts(nlist: usize, centroids: Vec<Vec<f32>>, assignments: Vec<u32>) -> Self {
        let mut lists = vec![Vec::new(); nlist];
        for (pos, &a) in assignments.iter().enumerate() {
            lists[a as usize].push(pos as u32);
        }
        Self {
            nlist,
            centroids,
            assignments,
            lists,
        }
    }

    pub fn nlist(&self) -> usize {
        self.nlist
    }

    pub fn centroids(&self) -> &[Vec<f32>] {
        &self.centroids
    }

    pub fn assignments(&self) -> &[u32] {
        &self.assignments
    }

    pub fn list_sizes(&self) -> Vec<usize> {
        self.lists.iter().map(|l| l.len()).collect()
    }
}

/// MIPS-searchable store of document vectors, flat by default with optional
/// IVF partitions after [`VectorIndex::train_ivf`]. Immutable once built;
/// concurrent searches on a shared index are safe.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    dimension: usize,
    entries: Vec<Entry>,
    positions: HashMap<String, usize>,
    ivf: Option<IvfState>,
}

impl VectorIndex {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension >= 1, "index dimension must be at least 1");
        Self {
            dimension,
            entries: Vec::new(),
            positions: HashMap::new(),
            ivf: None,
        }
    }

    fn from_parts(
        dimension: usize,
        entries: Vec<Entry>,
        positions: HashMap<String, usize>,
        ivf: Option<IvfState>,
    ) -> Self {
        Self {
            dimension,
            entries,
            positions,
            ivf,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn ivf(&self) -> Option<&IvfState> {
        self.ivf.as_ref()
    }

    pub fn get(&self, doc_id: &str) -> Option<&[f32]> {
        self.positions
            .get(doc_id)
            .map(|&pos| self.entries[pos].vector.as_slice())
    }

    /// Adds a document vector. After training, the vector is also assigned
    /// to its nearest centroid.
    pub fn add(&mut self, doc_id: impl Into<String>, vector: Vec<f32>) -> Result<(), IndexError> {
        let doc_id = doc_id.into();
        if vector.len() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                got: vector.len(),
            });
        }
        if self.positions.contains_key(&doc_id) {
            return Err(IndexError::DuplicateDocId(doc_id));
        }
        let pos = self.entries.len();
        self.positions.insert(doc_id.clone(), pos);
        if let Some(ivf) = &mut self.ivf {
            let assignment = kmeans::nearest_centroid(&vector, &ivf.centroids);
            ivf.assignments.push(assignment);
            ivf.lists[assignment as usize].push(pos as u32);
        }
        self.entries.push(Entry { doc_id, vector });
        Ok(())
    }

    /// Exact top-k by inner product: a full scan, by definition the
    /// brute-force answer.
    pub fn search_exact(&self, query: &[f32], k: usize) -> Result<Vec<SearchHit>, IndexError> {
        if k < 1 {
            return Err(IndexError::BadK);
        }
        if self.entries.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        self.check_query(query)?;
        let scores = scan::score_all(&self.entries, query);
        Ok(self.rank_candidates(scores.into_iter().enumerate(), k))
    }

    /// Partitions the entries into `nlist` k-means cells. Deterministic for
    /// fixed entries, nlist, and seed.
    pub fn train_ivf(&mut self, nlist: usize, seed: u64) -> Result<(), IndexError> {
        if nlist < 1 || self.entries.len() < nlist {
            return Err(IndexError::TooFewVectors {
                size: self.entries.len(),
                nlist,
            });
        }
        let clustering = kmeans::train(&self.entries, nlist, seed);
        self.ivf = Some(IvfState::from_parts(
            nlist,
            clustering.centroids,
            clustering.assignments,
        ));
        Ok(())
    }

    /// Approximate top-k: scans only the `nprobe` lists whose centroids have
    /// the largest inner product with the query, then ranks with the same
    /// rules as [`VectorIndex::search_exact`].
    pub fn search_ivf(
        &self,
        query: &[f32],
        k: usize,
        nprobe: usize,
    ) -> Result<Vec<SearchHit>, IndexError> {
        let ivf = self.ivf.as_ref().ok_or(IndexError::NotTrained)?;
        if k < 1 {
            return Err(IndexError::BadK);
        }
        if nprobe < 1 || nprobe > ivf.nlist {
            return Err(IndexError::BadNprobe {
                nprobe,
                nlist: ivf.nlist,
            });
        }
        self.check_query(query)?;

        let mut ranked_lists: Vec<(usize, f32)> = ivf
            .centroids
            .iter()
            .map(|c| scan::dot(c, query))
            .enumerate()
            .collect();
        ranked_lists.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut candidates = Vec::new();
        for &(list, _) in ranked_lists.iter().take(nprobe) {
            candidates.extend_from_slice(&ivf.lists[list]);
        }
        let scores = scan::score_subset(&self.entries, &candidates, query);
        Ok(self.rank_candidates(
            candidates.into_iter().map(|p| p as usize).zip(scores),
            k,
        ))
    }

    fn rank_candidates(
        &self,
        candidates: impl Iterator<Item = (usize, f32)>,
        k: usize,
    ) -> Vec<SearchHit> {
        let mut scored: Vec<(usize, f32)> = candidates.collect();
        scored.sort_unstable_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.entries[a.0].doc_id.cmp(&self.entries[b.0].doc_id))
        });
        scored.truncate(k);
        scored
            .into_iter()
            .enumerate()
            .map(|(i, (pos, score))| SearchHit {
                doc_id: self.entries[pos].doc_id.clone(),
                score,
                rank: i + 1,
            })
            .collect()
    }

    fn check_query(&self, query: &[f32]) -> Result<(), IndexError> {
        if query.len() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                got: query.len(),
            });
        }
        Ok(())
    }

    /// Writes the index in the binary format described in [`persist`].
    /// A save/load round trip preserves every search result exactly.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        persist::save(self, path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<VectorIndex, IndexError> {
        persist::load(path.as_ref())
    }
}

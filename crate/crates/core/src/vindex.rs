//! Exact top-k cosine-similarity index.
//!
//! Per-meeting indexes stay small (a few thousand vectors), so exact
//! brute-force search is fast and, unlike approximate search, makes every
//! retrieval result deterministic. Vectors are normalized at build time and
//! queries at search time; scores are plain dot products accumulated in f64.
//! Ties break by ascending payload id, then insertion order.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::clients::EmbeddingVector;

const MAGIC: [u8; 4] = *b"MQVX";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot build an empty index")]
    EmptyIndex,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("entry {0} is a zero vector and cannot be normalized")]
    ZeroVector(usize),
    #[error("bad index file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One search result. Hits are returned in non-increasing score order.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub payload_id: u64,
    pub score: f64,
}

/// Immutable exact-search index. Payload ids need not be unique: several
/// synthetic queries may map to the same sentence position.
///
/// Entries are stored as f32 (the persisted precision); scoring divides by
/// each row's f64 norm, so an index built in memory and one loaded from disk
/// produce identical scores, and a query equal to an entry scores 1 to
/// within f64 rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    vectors: Vec<f32>,
    payload_ids: Vec<u64>,
    row_norms: Vec<f64>,
}

impl VectorIndex {
    pub fn build(entries: Vec<(EmbeddingVector, u64)>) -> Result<Self, IndexError> {
        if entries.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        let dim = entries[0].0.dim();
        let mut vectors = Vec::with_capacity(entries.len() * dim);
        let mut payload_ids = Vec::with_capacity(entries.len());
        for (i, (vector, payload_id)) in entries.into_iter().enumerate() {
            if vector.dim() != dim {
                return Err(IndexError::DimensionMismatch {
                    expected: dim,
                    got: vector.dim(),
                });
            }
            let normalized = vector.try_normalized().ok_or(IndexError::ZeroVector(i))?;
            vectors.extend_from_slice(&normalized.values);
            payload_ids.push(payload_id);
        }
        Ok(Self::assemble(dim, vectors, payload_ids))
    }

    fn assemble(dim: usize, vectors: Vec<f32>, payload_ids: Vec<u64>) -> Self {
        let row_norms = payload_ids
            .iter()
            .enumerate()
            .map(|(i, _)| {
                vectors[i * dim..(i + 1) * dim]
                    .iter()
                    .map(|&v| (v as f64) * (v as f64))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        Self {
            dim,
            vectors,
            payload_ids,
            row_norms,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.payload_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payload_ids.is_empty()
    }

    /// Exact top-k by cosine similarity. Returns `min(k, len)` hits.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let query_norm = query
            .values
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt();
        if query_norm == 0.0 || !query_norm.is_finite() {
            return Err(IndexError::ZeroVector(0));
        }
        let query: Vec<f64> = query
            .values
            .iter()
            .map(|&v| v as f64 / query_norm)
            .collect();
        let mut scored: Vec<(f64, u64, usize)> = self
            .payload_ids
            .iter()
            .enumerate()
            .map(|(i, &payload_id)| {
                let row = &self.vectors[i * self.dim..(i + 1) * self.dim];
                let dot: f64 = row.iter().zip(&query).map(|(&x, &y)| (x as f64) * y).sum();
                (dot / self.row_norms[i], payload_id, i)
            })
            .collect();
        scored.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("cosine scores are finite")
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(score, payload_id, _)| SearchHit { payload_id, score })
            .collect())
    }

    /// Write the index: header (magic, version, dim, count), then the f32
    /// vector block, then the u64 payload-id block, all little-endian.
    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let mut buf = Vec::with_capacity(20 + self.vectors.len() * 4 + self.payload_ids.len() * 8);
        buf.write_all(&MAGIC)?;
        buf.write_all(&VERSION.to_le_bytes())?;
        buf.write_all(&(self.dim as u32).to_le_bytes())?;
        buf.write_all(&(self.len() as u64).to_le_bytes())?;
        for v in &self.vectors {
            buf.write_all(&v.to_le_bytes())?;
        }
        for id in &self.payload_ids {
            buf.write_all(&id.to_le_bytes())?;
        }
        crate::util::atomic_write(path, &buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let mut file = std::fs::File::open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        if bytes.len() < 20 {
            return Err(IndexError::Format("file shorter than header".into()));
        }
        if bytes[0..4] != MAGIC {
            return Err(IndexError::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(IndexError::Format(format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        if dim == 0 || count == 0 {
            return Err(IndexError::Format("empty index file".into()));
        }
        let expected = 20 + count * dim * 4 + count * 8;
        if bytes.len() != expected {
            return Err(IndexError::Format(format!(
                "expected {expected} bytes for dim {dim} count {count}, got {}",
                bytes.len()
            )));
        }
        let mut vectors = Vec::with_capacity(count * dim);
        let mut offset = 20;
        for _ in 0..count * dim {
            vectors.push(f32::from_le_bytes(
                bytes[offset..offset + 4].try_into().expect("4 bytes"),
            ));
            offset += 4;
        }
        let mut payload_ids = Vec::with_capacity(count);
        for _ in 0..count {
            payload_ids.push(u64::from_le_bytes(
                bytes[offset..offset + 8].try_into().expect("8 bytes"),
            ));
            offset += 8;
        }
        Ok(Self::assemble(dim, vectors, payload_ids))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_of(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec())
    }

    #[test]
    fn builds_from_three_vectors() {
        let ix = VectorIndex::build(vec![
            (vec_of(&[1.0, 0.0, 0.0, 0.0]), 0),
            (vec_of(&[0.0, 1.0, 0.0, 0.0]), 1),
            (vec_of(&[0.0, 0.0, 1.0, 0.0]), 2),
        ])
        .unwrap();
        assert_eq!(ix.len(), 3);
        assert_eq!(ix.dim(), 4);
    }

    #[test]
    fn mixed_dims_are_rejected() {
        let err = VectorIndex::build(vec![
            (vec_of(&[1.0, 0.0, 0.0, 0.0]), 0),
            (vec_of(&[1.0; 8]), 1),
        ])
        .unwrap_err();
        assert!(matches!(
            err,
            IndexError::DimensionMismatch {
                expected: 4,
                got: 8
            }
        ));
    }

    #[test]
    fn zero_vector_is_rejected() {
        let err = VectorIndex::build(vec![(vec_of(&[0.0, 0.0]), 0)]).unwrap_err();
        assert!(matches!(err, IndexError::ZeroVector(0)));
    }

    #[test]
    fn empty_build_is_rejected() {
        assert!(matches!(
            VectorIndex::build(vec![]),
            Err(IndexError::EmptyIndex)
        ));
    }

    #[test]
    fn exact_query_hits_itself_first() {
        let ix =
            VectorIndex::build(vec![(vec_of(&[1.0, 0.0]), 10), (vec_of(&[0.6, 0.8]), 11)]).unwrap();
        let hits = ix.search(&vec_of(&[0.6, 0.8]), 1).unwrap();
        assert_eq!(hits[0].payload_id, 11);
        assert!((hits[0].score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn k_larger_than_index_returns_everything() {
        let ix =
            VectorIndex::build(vec![(vec_of(&[1.0, 0.0]), 0), (vec_of(&[0.0, 1.0]), 1)]).unwrap();
        assert_eq!(ix.search(&vec_of(&[1.0, 1.0]), 10).unwrap().len(), 2);
    }

    #[test]
    fn ties_break_by_ascending_payload_id() {
        let ix = VectorIndex::build(vec![
            (vec_of(&[1.0, 0.0]), 7),
            (vec_of(&[1.0, 0.0]), 3),
            (vec_of(&[1.0, 0.0]), 5),
        ])
        .unwrap();
        let hits = ix.search(&vec_of(&[1.0, 0.0]), 3).unwrap();
        let ids: Vec<u64> = hits.iter().map(|h| h.payload_id).collect();
        assert_eq!(ids, vec![3, 5, 7]);
    }

    #[test]
    fn duplicate_payload_ids_tie_break_by_insertion_order() {
        let ix =
            VectorIndex::build(vec![(vec_of(&[1.0, 0.0]), 3), (vec_of(&[1.0, 0.0]), 3)]).unwrap();
        let hits = ix.search(&vec_of(&[1.0, 0.0]), 2).unwrap();
        assert_eq!(hits.len(), 2);
    }

    #[test]
    fn query_dimension_mismatch_is_rejected() {
        let ix = VectorIndex::build(vec![(vec_of(&[1.0, 0.0]), 0)]).unwrap();
        assert!(matches!(
            ix.search(&vec_of(&[1.0, 0.0, 0.0]), 1),
            Err(IndexError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn scaling_the_query_leaves_the_ranking_unchanged() {
        let ix = VectorIndex::build(vec![
            (vec_of(&[1.0, 0.2, 0.1]), 0),
            (vec_of(&[0.1, 1.0, 0.3]), 1),
            (vec_of(&[0.3, 0.3, 1.0]), 2),
        ])
        .unwrap();
        let q = vec_of(&[0.5, 0.4, 0.9]);
        let scaled = vec_of(&[0.5 * 37.0, 0.4 * 37.0, 0.9 * 37.0]);
        let a = ix.search(&q, 3).unwrap();
        let b = ix.search(&scaled, 3).unwrap();
        let ids = |hits: &[SearchHit]| hits.iter().map(|h| h.payload_id).collect::<Vec<_>>();
        assert_eq!(ids(&a), ids(&b));
        // Scores agree to f32 input precision (the scaled components round).
        for (x, y) in a.iter().zip(&b) {
            assert!((x.score - y.score).abs() < 1e-6);
        }
    }

    #[test]
    fn hits_at_k_are_a_prefix_of_hits_at_k_plus_one() {
        let entries: Vec<(EmbeddingVector, u64)> = (0..10)
            .map(|i| {
                let angle = i as f32 * 0.37;
                (vec_of(&[angle.cos(), angle.sin()]), i)
            })
            .collect();
        let ix = VectorIndex::build(entries).unwrap();
        let q = vec_of(&[0.8, 0.6]);
        for k in 1..10 {
            let small = ix.search(&q, k).unwrap();
            let large = ix.search(&q, k + 1).unwrap();
            assert_eq!(small[..], large[..k]);
        }
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ix.vidx");
        let ix = VectorIndex::build(vec![
            (vec_of(&[0.1, 0.9, 0.3]), 42),
            (vec_of(&[0.7, 0.2, 0.6]), 7),
        ])
        .unwrap();
        ix.save(&path).unwrap();
        let loaded = VectorIndex::load(&path).unwrap();
        assert_eq!(ix, loaded);
    }

    #[test]
    fn load_rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.vidx");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(
            VectorIndex::load(&path),
            Err(IndexError::Format(_))
        ));
        let ix = VectorIndex::build(vec![(vec_of(&[1.0, 0.0]), 0)]).unwrap();
        ix.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            VectorIndex::load(&path),
            Err(IndexError::Format(_))
        ));
    }

    #[test]
    fn saving_twice_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.vidx");
        let b = dir.path().join("b.vidx");
        let ix = VectorIndex::build(vec![(vec_of(&[0.3, 0.4, 0.5]), 1)]).unwrap();
        ix.save(&a).unwrap();
        ix.save(&b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }
}

//! Persisted POI embedding index with filtered exact top-k search.
//!
//! Inference splits the bi-encoder: POI vectors are computed once, stored
//! here with their metadata, and queries only ever run the question side.
//! Search is an exact inner-product scan — no approximation — with a
//! deterministic tie-break so identical inputs always rank identically.
//!
//! On disk: magic `LAMBIDX1`, u32 LE entry count, u32 LE dimension, the
//! vectors as 32-bit LE floats, then a u64 LE length-prefixed JSON trailer
//! `{ids, cities, types, fingerprint}`. Scoring widens stored f32 values
//! to f64.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{poi_text, DigestConfig, PoiCollection, PoiType, TextMode};
use crate::encoders::BiEncoder;
use crate::error::{Error, Result};
use crate::nn::fingerprint;

const INDEX_MAGIC: &[u8; 8] = b"LAMBIDX1";
const INDEX_VERSION: u8 = b'1';

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    dim: usize,
    ids: Vec<String>,
    cities: Vec<String>,
    types: Vec<PoiType>,
    /// Row-major `len x dim`.
    vectors: Vec<f32>,
    fingerprint: String,
}

/// Search hit: 1-based rank, scores non-increasing, ties by ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub poi_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Restrict search to one city and/or one POI type.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidateFilter {
    pub city: Option<String>,
    pub poi_type: Option<PoiType>,
}

impl CandidateFilter {
    pub fn none() -> Self {
        CandidateFilter::default()
    }

    pub fn city(city: impl Into<String>) -> Self {
        CandidateFilter { city: Some(city.into()), poi_type: None }
    }

    fn admits(&self, city: &str, poi_type: PoiType) -> bool {
        self.city.as_deref().is_none_or(|c| c == city)
            && self.poi_type.is_none_or(|t| t == poi_type)
    }
}

#[derive(Serialize, Deserialize)]
struct Trailer {
    ids: Vec<String>,
    cities: Vec<String>,
    types: Vec<PoiType>,
    fingerprint: String,
}

impl EmbeddingIndex {
    pub fn from_parts(
        dim: usize,
        ids: Vec<String>,
        cities: Vec<String>,
        types: Vec<PoiType>,
        vectors: Vec<f32>,
        fingerprint: String,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("index dimension must be >= 1".into()));
        }
        let n = ids.len();
        if cities.len() != n || types.len() != n {
            return Err(Error::ShapeMismatch {
                context: "index metadata",
                expected: n,
                got: cities.len().min(types.len()),
            });
        }
        if vectors.len() != n * dim {
            return Err(Error::ShapeMismatch {
                context: "index vectors",
                expected: n * dim,
                got: vectors.len(),
            });
        }
        let distinct: HashSet<&String> = ids.iter().collect();
        if distinct.len() != n {
            return Err(Error::Config("index ids must be unique".into()));
        }
        if fingerprint.is_empty() {
            return Err(Error::Config("index fingerprint must be non-empty".into()));
        }
        Ok(EmbeddingIndex { dim, ids, cities, types, vectors, fingerprint })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    fn score(&self, i: usize, query: &[f64]) -> f64 {
        self.vector(i)
            .iter()
            .zip(query)
            .map(|(&v, &q)| v as f64 * q)
            .sum()
    }

    fn candidate_indices(&self, filter: &CandidateFilter) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| filter.admits(&self.cities[i], self.types[i]))
            .collect()
    }

    fn rank_candidates(&self, candidates: Vec<usize>, scores: &[f64], k: usize) -> Vec<RankedResult> {
        let mut order = candidates;
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .expect("non-finite score")
                .then_with(|| self.ids[a].cmp(&self.ids[b]))
        });
        order
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(r, i)| RankedResult {
                poi_id: self.ids[i].clone(),
                score: scores[i],
                rank: r + 1,
            })
            .collect()
    }

    fn check_query(&self, query: &[f64], k: usize) -> Result<()> {
        if query.len() != self.dim {
            return Err(Error::ShapeMismatch {
                context: "index query",
                expected: self.dim,
                got: query.len(),
            });
        }
        if k == 0 {
            return Err(Error::Config("search k must be >= 1".into()));
        }
        Ok(())
    }

    /// Exact top-k inner-product search over entries passing the filter.
    ///
    /// Returns fewer than `k` results when the filtered pool is smaller;
    /// a filter matching nothing yields an empty list.
    pub fn search(&self, query: &[f64], k: usize, filter: &CandidateFilter) -> Result<Vec<RankedResult>> {
        self.check_query(query, k)?;
        let candidates = self.candidate_indices(filter);
        let mut scores = vec![0.0; self.len()];
        for &i in &candidates {
            scores[i] = self.score(i, query);
        }
        Ok(self.rank_candidates(candidates, &scores, k))
    }

    /// Same contract and bit-identical results as [`Self::search`], with
    /// scoring fanned out over `threads` fixed chunks.
    pub fn search_parallel(
        &self,
        query: &[f64],
        k: usize,
        filter: &CandidateFilter,
        threads: usize,
    ) -> Result<Vec<RankedResult>> {
        self.check_query(query, k)?;
        if threads == 0 {
            return Err(Error::Config("thread count must be >= 1".into()));
        }
        let candidates = self.candidate_indices(filter);
        let mut scores = vec![0.0; self.len()];
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        // Each thread scores a fixed contiguous chunk of the candidate
        // list into a disjoint slice of `scores`; every individual score
        // is computed exactly as in the serial path, so the merged result
        // is bitwise identical.
        let chunk = candidates.len().div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = candidates
                .chunks(chunk)
                .map(|cands| {
                    scope.spawn(move || {
                        cands
                            .iter()
                            .map(|&i| (i, self.score(i, query)))
                            .collect::<Vec<(usize, f64)>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, s) in h.join().expect("search worker panicked") {
                    scores[i] = s;
                }
            }
        });
        Ok(self.rank_candidates(candidates, &scores, k))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let trailer = serde_json::to_vec(&Trailer {
            ids: self.ids.clone(),
            cities: self.cities.clone(),
            types: self.types.clone(),
            fingerprint: self.fingerprint.clone(),
        })?;
        let mut out = Vec::with_capacity(16 + self.vectors.len() * 4 + trailer.len() + 8);
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.vectors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(trailer.len() as u64).to_le_bytes());
        out.extend_from_slice(&trailer);
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(fs::write(path, self.to_bytes()?)?)
    }

    pub fn from_bytes(bytes: &[u8], label: &str) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize, what: &'static str| -> Result<&[u8]> {
            if pos + n > bytes.len() {
                return Err(Error::Truncated { path: label.to_string(), what });
            }
            let out = &bytes[pos..pos + n];
            pos += n;
            Ok(out)
        };

        let magic = take(8, "magic")?;
        if &magic[..7] != &INDEX_MAGIC[..7] {
            return Err(Error::BadMagic { path: label.to_string() });
        }
        if magic[7] != INDEX_VERSION {
            return Err(Error::VersionMismatch {
                path: label.to_string(),
                expected: INDEX_VERSION,
                got: magic[7],
            });
        }
        let count = u32::from_le_bytes(take(4, "entry count")?.try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(take(4, "dimension")?.try_into().unwrap()) as usize;
        let vec_bytes = take(count * dim * 4, "vector block")?;
        let vectors: Vec<f32> = vec_bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let trailer_len =
            u64::from_le_bytes(take(8, "trailer length")?.try_into().unwrap()) as usize;
        let trailer_bytes = take(trailer_len, "trailer")?;
        let trailer: Trailer = serde_json::from_slice(trailer_bytes)?;
        EmbeddingIndex::from_parts(
            dim,
            trailer.ids,
            trailer.cities,
            trailer.types,
            vectors,
            trailer.fingerprint,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

/// Encode every POI with the frozen model and collect the results into an
/// index stamped with the model's checkpoint fingerprint.
pub fn build_index(
    model: &BiEncoder,
    pois: &PoiCollection,
    mode: TextMode,
    digest_config: &DigestConfig,
) -> Result<EmbeddingIndex> {
    let dim = model.config.d;
    let mut ids = Vec::with_capacity(pois.len());
    let mut cities = Vec::with_capacity(pois.len());
    let mut types = Vec::with_capacity(pois.len());
    let mut vectors = Vec::with_capacity(pois.len() * dim);
    for poi in pois.iter() {
        let digest = poi_text(poi, mode, digest_config)?;
        let v = model.encode_poi(poi, &digest)?;
        ids.push(poi.id.clone());
        cities.push(poi.name.city.clone());
        types.push(poi.poi_type);
        vectors.extend(v.iter().map(|&x| x as f32));
    }
    EmbeddingIndex::from_parts(dim, ids, cities, types, vectors, fingerprint(&model.to_bytes()?))
}

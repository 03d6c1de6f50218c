//! Reference systems: Sort-by-Distance, BM25, and the geo-coordinate
//! question/distance variants with weighted-sum similarity.
//!
//! These exist to be beaten: each one reuses the shared corpus, analyzer,
//! and evaluation plumbing so comparisons against the bi-encoder isolate
//! the modeling choice rather than pipeline differences.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{poi_text, DigestConfig, Poi, PoiCollection, PoiType, Question, TextMode};
use crate::encoders::{split_words, BiEncoder};
use crate::error::{Error, Result};
use crate::eval::Ranker;
use crate::geo::{haversine_km, normalized_distance, GeoPoint};
use crate::index::{CandidateFilter, EmbeddingIndex, RankedResult};
use crate::nn::{seeded_rng, Activation, DenseLayer, Dropout};

/// Rank candidate POIs by distance to the question's nearest tagged
/// location: `score = -min_tag haversine_km(tag, poi)`, nearest first,
/// ties by ascending id.
///
/// Questions without tagged locations cannot be distance-ranked; they fall
/// back to ascending-id order with score 0 and the returned flag set.
pub fn sort_by_distance(
    question: &Question,
    pois: &PoiCollection,
    candidates: &[usize],
) -> Result<(Vec<RankedResult>, bool)> {
    let tags = question.tagged_locations.as_deref().unwrap_or(&[]);
    let mut order: Vec<usize> = candidates.to_vec();
    if tags.is_empty() {
        order.sort_by(|&a, &b| pois.by_index(a).id.cmp(&pois.by_index(b).id));
        let results = order
            .into_iter()
            .enumerate()
            .map(|(r, i)| RankedResult {
                poi_id: pois.by_index(i).id.clone(),
                score: 0.0,
                rank: r + 1,
            })
            .collect();
        return Ok((results, true));
    }

    let mut scores = HashMap::with_capacity(candidates.len());
    for &i in candidates {
        let poi = pois.by_index(i);
        let mut best = f64::INFINITY;
        for tag in tags {
            best = best.min(haversine_km(*tag, poi.location)?);
        }
        scores.insert(i, -best);
    }
    order.sort_by(|&a, &b| {
        scores[&b]
            .partial_cmp(&scores[&a])
            .expect("non-finite distance score")
            .then_with(|| pois.by_index(a).id.cmp(&pois.by_index(b).id))
    });
    let results = order
        .into_iter()
        .enumerate()
        .map(|(r, i)| RankedResult {
            poi_id: pois.by_index(i).id.clone(),
            score: scores[&i],
            rank: r + 1,
        })
        .collect();
    Ok((results, false))
}

/// Sort-by-Distance as an evaluable ranker.
pub struct SdRanker<'a> {
    pub pois: &'a PoiCollection,
}

fn filtered_indices(pois: &PoiCollection, filter: &CandidateFilter) -> Vec<usize> {
    (0..pois.len())
        .filter(|&i| {
            let p = pois.by_index(i);
            filter.city.as_deref().is_none_or(|c| c == p.name.city)
                && filter.poi_type.is_none_or(|t| t == p.poi_type)
        })
        .collect()
}

impl Ranker for SdRanker<'_> {
    fn rank(&self, question: &Question, filter: &CandidateFilter, k: usize) -> Result<Vec<String>> {
        let candidates = filtered_indices(self.pois, filter);
        let (results, _) = sort_by_distance(question, self.pois, &candidates)?;
        Ok(results.into_iter().take(k).map(|r| r.poi_id).collect())
    }
}

const BM25_K1: f64 = 1.2;
const BM25_B: f64 = 0.75;

/// Classic Okapi BM25 over digest text, sharing the encoder's analyzer.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    ids: Vec<String>,
    cities: Vec<String>,
    types: Vec<PoiType>,
    /// term → (doc index, term frequency), docs in ascending order.
    postings: HashMap<String, Vec<(usize, f64)>>,
    doc_lengths: Vec<f64>,
    avgdl: f64,
    k1: f64,
    b: f64,
}

impl Bm25Index {
    /// Index arbitrary documents; metadata arrays must align.
    pub fn from_documents(
        ids: Vec<String>,
        cities: Vec<String>,
        types: Vec<PoiType>,
        texts: &[String],
    ) -> Result<Self> {
        let n = ids.len();
        if cities.len() != n || types.len() != n || texts.len() != n {
            return Err(Error::ShapeMismatch {
                context: "bm25 documents",
                expected: n,
                got: cities.len().min(types.len()).min(texts.len()),
            });
        }
        if n == 0 {
            return Err(Error::EmptyInput("bm25 needs at least one document"));
        }
        let mut postings: HashMap<String, Vec<(usize, f64)>> = HashMap::new();
        let mut doc_lengths = Vec::with_capacity(n);
        for (doc, text) in texts.iter().enumerate() {
            let words = split_words(text);
            doc_lengths.push(words.len() as f64);
            let mut tf: HashMap<String, f64> = HashMap::new();
            for w in words {
                *tf.entry(w).or_insert(0.0) += 1.0;
            }
            // Insert in sorted term order so posting lists are built
            // doc-by-doc deterministically regardless of hash order.
            let mut terms: Vec<(String, f64)> = tf.into_iter().collect();
            terms.sort_by(|a, b| a.0.cmp(&b.0));
            for (term, count) in terms {
                postings.entry(term).or_default().push((doc, count));
            }
        }
        let avgdl = doc_lengths.iter().sum::<f64>() / n as f64;
        if avgdl <= 0.0 {
            return Err(Error::EmptyInput("bm25 corpus has no tokens"));
        }
        Ok(Bm25Index {
            ids,
            cities,
            types,
            postings,
            doc_lengths,
            avgdl,
            k1: BM25_K1,
            b: BM25_B,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn idf(&self, term: &str) -> f64 {
        let df = self.postings.get(term).map_or(0.0, |p| p.len() as f64);
        let n = self.len() as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Raw BM25 score of one document for a tokenized query.
    fn score_terms(&self, terms: &[String], doc: usize) -> f64 {
        let mut score = 0.0;
        for term in terms {
            let Some(postings) = self.postings.get(term) else { continue };
            let Ok(pos) = postings.binary_search_by_key(&doc, |&(d, _)| d) else { continue };
            let tf = postings[pos].1;
            let dl = self.doc_lengths[doc];
            let denom = tf + self.k1 * (1.0 - self.b + self.b * dl / self.avgdl);
            score += self.idf(term) * tf * (self.k1 + 1.0) / denom;
        }
        score
    }

    /// Top-k by BM25 score with ascending-id tie-break. An empty query
    /// (no tokens survive the analyzer) returns no results.
    pub fn search(&self, query: &str, k: usize, filter: &CandidateFilter) -> Result<Vec<RankedResult>> {
        if k == 0 {
            return Err(Error::Config("search k must be >= 1".into()));
        }
        let terms = split_words(query);
        if terms.is_empty() {
            return Ok(Vec::new());
        }
        let mut order: Vec<usize> = (0..self.len())
            .filter(|&i| {
                filter.city.as_deref().is_none_or(|c| c == self.cities[i])
                    && filter.poi_type.is_none_or(|t| t == self.types[i])
            })
            .collect();
        let scores: Vec<f64> = (0..self.len())
            .map(|doc| self.score_terms(&terms, doc))
            .collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .expect("non-finite bm25 score")
                .then_with(|| self.ids[a].cmp(&self.ids[b]))
        });
        Ok(order
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(r, i)| RankedResult {
                poi_id: self.ids[i].clone(),
                score: scores[i],
                rank: r + 1,
            })
            .collect())
    }
}

/// Index every POI's digest text.
pub fn bm25_build(
    pois: &PoiCollection,
    mode: TextMode,
    digest_config: &DigestConfig,
) -> Result<Bm25Index> {
    let mut texts = Vec::with_capacity(pois.len());
    for poi in pois.iter() {
        texts.push(poi_text(poi, mode, digest_config)?.joined());
    }
    Bm25Index::from_documents(
        pois.iter().map(|p| p.id.clone()).collect(),
        pois.iter().map(|p| p.name.city.clone()).collect(),
        pois.iter().map(|p| p.poi_type).collect(),
        &texts,
    )
}

/// BM25 as an evaluable ranker over question text.
pub struct Bm25Ranker<'a> {
    pub index: &'a Bm25Index,
}

impl Ranker for Bm25Ranker<'_> {
    fn rank(&self, question: &Question, filter: &CandidateFilter, k: usize) -> Result<Vec<String>> {
        Ok(self
            .index
            .search(&question.text, k, filter)?
            .into_iter()
            .map(|r| r.poi_id)
            .collect())
    }
}

/// Question-side geo MLP configuration (coordinate-variant ablations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeoMlpConfig {
    /// Max question locations consumed; extras are subsampled.
    pub m: usize,
    /// Distance weight in the combined similarity.
    pub lambda: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for GeoMlpConfig {
    fn default() -> Self {
        GeoMlpConfig { m: 5, lambda: 0.5, dropout: 0.2, seed: 0 }
    }
}

impl GeoMlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("geo mlp m must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::OutOfDomain {
                name: "lambda",
                value: self.lambda,
                lo: 0.0,
                hi: 1.0,
            });
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::OutOfDomain {
                name: "geo mlp dropout",
                value: self.dropout,
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(())
    }
}

/// Flatten up to `m` tagged locations as `[lat1, long1, ...]`, choosing a
/// seeded subset when more are given, zero-padded to length `2m`.
pub fn question_location_input(tagged: &[GeoPoint], m: usize, seed: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * m);
    if tagged.len() <= m {
        for p in tagged {
            out.push(p.lat);
            out.push(p.long);
        }
    } else {
        let mut rng = seeded_rng(seed);
        let mut picks: Vec<usize> = sample(&mut rng, tagged.len(), m).into_iter().collect();
        picks.sort_unstable();
        for i in picks {
            out.push(tagged[i].lat);
            out.push(tagged[i].long);
        }
    }
    out.resize(2 * m, 0.0);
    out
}

/// Question-location encoder: flattened coordinates through a 3-layer MLP
/// (`2m -> 2m -> 2m`, relu/relu/identity) with dropout on the hidden
/// activations at train time.
#[derive(Debug, Clone)]
pub struct GeoMlp {
    pub config: GeoMlpConfig,
    pub mlp: Vec<DenseLayer>,
    dropout: Dropout,
}

impl GeoMlp {
    pub fn new(config: GeoMlpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let width = 2 * config.m;
        let mut rng = seeded_rng(seed);
        let acts = [Activation::Relu, Activation::Relu, Activation::Identity];
        let mlp = acts
            .iter()
            .enumerate()
            .map(|(i, &act)| DenseLayer::new(&format!("geo_mlp{i}"), width, width, act, &mut rng))
            .collect();
        let dropout = Dropout::new(config.dropout)?;
        Ok(GeoMlp { config, mlp, dropout })
    }

    /// Encode tagged locations; pass a training rng to enable dropout.
    pub fn encode(&self, tagged: &[GeoPoint], train_rng: Option<&mut ChaCha8Rng>) -> Result<Vec<f64>> {
        let mut h = question_location_input(tagged, self.config.m, self.config.seed);
        let mut rng = train_rng;
        for (i, layer) in self.mlp.iter().enumerate() {
            h = layer.forward(&h)?.0;
            if i + 1 < self.mlp.len() {
                if let Some(rng) = rng.as_deref_mut() {
                    self.dropout.forward_train(&mut h, rng);
                }
            }
        }
        Ok(h)
    }
}

/// Minimum normalized distance from a question's tagged locations to a
/// POI; 0 when the question has no tags.
pub fn question_poi_distance(question: &Question, poi: &Poi) -> Result<f64> {
    let tags = question.tagged_locations.as_deref().unwrap_or(&[]);
    let mut best: Option<f64> = None;
    for tag in tags {
        let d = normalized_distance(*tag, poi.location)?;
        best = Some(best.map_or(d, |b: f64| b.min(d)));
    }
    Ok(best.unwrap_or(0.0))
}

/// Weighted sum of embedding similarity and negative distance:
/// `(1 - lambda) * sim - lambda * dist`.
pub fn combined_similarity(sim_vec: f64, question: &Question, poi: &Poi, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::OutOfDomain { name: "lambda", value: lambda, lo: 0.0, hi: 1.0 });
    }
    Ok((1.0 - lambda) * sim_vec - lambda * question_poi_distance(question, poi)?)
}

/// The distance-reranked bi-encoder: embedding similarity from the index,
/// combined with tagged-location distance at query time.
pub struct GeoDistRanker<'a> {
    pub model: &'a BiEncoder,
    pub index: &'a EmbeddingIndex,
    pub pois: &'a PoiCollection,
    pub lambda: f64,
}

impl Ranker for GeoDistRanker<'_> {
    fn rank(&self, question: &Question, filter: &CandidateFilter, k: usize) -> Result<Vec<String>> {
        let qv = self.model.encode_question(&question.text)?;
        // Rerank the full filtered pool; truncation happens only at the end.
        let pool = self.index.search(&qv, self.index.len().max(1), filter)?;
        let mut rescored = Vec::with_capacity(pool.len());
        for hit in pool {
            let poi = self.pois.get(&hit.poi_id)?;
            let combined = combined_similarity(hit.score, question, poi, self.lambda)?;
            rescored.push((hit.poi_id, combined));
        }
        rescored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        Ok(rescored.into_iter().take(k).map(|(id, _)| id).collect())
    }
}

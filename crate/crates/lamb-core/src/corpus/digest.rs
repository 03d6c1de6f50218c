//! Review digests: sentence segmentation and cluster-based selection.
//!
//! A POI's reviews are compressed to a small sentence set either by k-means
//! clustering over hashed sentence features (pick the sentences nearest each
//! centroid) or by consuming a precomputed summary shipped with the data.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{DigestSource, Poi, ReviewDigest};
use crate::encoders::features::{hash_features, split_words, FeatureConfig};
use crate::error::{Error, Result};
use crate::nn::seeded_rng;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextMode {
    Cluster,
    Summary,
}

impl FromStr for TextMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cluster" => Ok(TextMode::Cluster),
            "summary" => Ok(TextMode::Summary),
            other => Err(Error::Config(format!("unknown text mode: {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DigestConfig {
    pub k_clusters: usize,
    pub n_per_cluster: usize,
    pub max_tokens: usize,
}

impl Default for DigestConfig {
    fn default() -> Self {
        DigestConfig {
            k_clusters: 10,
            n_per_cluster: 10,
            max_tokens: 256,
        }
    }
}

impl DigestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_clusters == 0 || self.n_per_cluster == 0 || self.max_tokens == 0 {
            return Err(Error::Config(
                "digest k_clusters, n_per_cluster and max_tokens must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Split text into sentences at `.`/`!`/`?` runs followed by whitespace.
///
/// The terminator stays attached to its sentence; text without a final
/// terminator still yields its trailing sentence. Interior punctuation not
/// followed by whitespace (decimals, abbrev dots) does not split.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    let push = |s: &[char], out: &mut Vec<String>| {
        let sentence: String = s.iter().collect();
        let trimmed = sentence.trim();
        if !trimmed.is_empty() {
            out.push(trimmed.to_string());
        }
    };
    while i < chars.len() {
        if matches!(chars[i], '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j], '.' | '!' | '?') {
                j += 1;
            }
            if j >= chars.len() || chars[j].is_whitespace() {
                push(&chars[start..j], &mut out);
                start = j;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    if start < chars.len() {
        push(&chars[start..], &mut out);
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Internal seed for the clustering start point; fixed so digests are stable.
const KMEANS_SEED: u64 = 0x6b6d_6561_6e73;
const KMEANS_MAX_ITER: usize = 50;

/// Lloyd's algorithm with deterministic farthest-point initialization.
///
/// Returns the cluster assignment per point and the final centroids.
/// Requires `1 <= k <= points.len()`.
fn kmeans(points: &[Vec<f64>], k: usize) -> (Vec<usize>, Vec<Vec<f64>>) {
    assert!(k >= 1 && k <= points.len());
    let n = points.len();

    // Farthest-point init from a seeded start index.
    let start = seeded_rng(KMEANS_SEED).random_range(0..n);
    let mut center_idx = vec![start];
    let mut nearest = vec![f64::INFINITY; n];
    while center_idx.len() < k {
        let last = *center_idx.last().unwrap();
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(p, &points[last]));
        }
        let (next, _) = nearest
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bd), (i, &d)| {
                if d > bd {
                    (i, d)
                } else {
                    (bi, bd)
                }
            });
        center_idx.push(next);
    }
    let mut centroids: Vec<Vec<f64>> = center_idx.iter().map(|&i| points[i].clone()).collect();

    let mut assignment = vec![0usize; n];
    let mut prev_objective = f64::INFINITY;
    for iter in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        let mut objective = 0.0;
        for (i, p) in points.iter().enumerate() {
            let mut best = (0usize, f64::INFINITY);
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(p, centroid);
                // Strict `<` ties to the lowest cluster index.
                if d < best.1 {
                    best = (c, d);
                }
            }
            objective += best.1;
            if assignment[i] != best.0 {
                assignment[i] = best.0;
                changed = true;
            }
        }
        debug_assert!(
            objective <= prev_objective + 1e-9,
            "k-means objective increased: {prev_objective} -> {objective}"
        );
        prev_objective = objective;
        // The first pass must reach the centroid update even when the
        // initial all-zeros assignment happens to be stable already.
        if !changed && iter > 0 {
            break;
        }
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, x) in sums[assignment[i]].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                centroids[c] = sums[c].iter().map(|s| s * inv).collect();
            }
            // Empty clusters keep their previous centroid.
        }
    }
    (assignment, centroids)
}

/// Keep whole sentences up to `max_tokens` words; a first sentence that
/// alone exceeds the cap is cut at the word level so the digest stays
/// non-empty and the cap always holds.
fn truncate_to_tokens(sentences: Vec<String>, max_tokens: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut used = 0;
    for s in sentences {
        let count = split_words(&s).len();
        if used + count <= max_tokens {
            used += count;
            out.push(s);
        } else if out.is_empty() {
            let words = split_words(&s);
            out.push(words[..max_tokens.min(words.len())].join(" "));
            break;
        } else {
            break;
        }
    }
    out
}

/// Cluster review sentences and keep the ones nearest each centroid.
pub fn select_reviews_cluster(
    poi: &Poi,
    k_clusters: usize,
    n_per_cluster: usize,
    max_tokens: usize,
) -> Result<ReviewDigest> {
    if k_clusters == 0 || n_per_cluster == 0 {
        return Err(Error::Config(
            "k_clusters and n_per_cluster must be >= 1".into(),
        ));
    }
    let sentences: Vec<String> = poi.reviews.iter().flat_map(|r| segment_sentences(r)).collect();
    if sentences.is_empty() {
        return Err(Error::EmptyPoiText { id: poi.id.clone() });
    }
    let selected = if sentences.len() <= k_clusters {
        sentences
    } else {
        let feature_cfg = FeatureConfig::default();
        let points: Vec<Vec<f64>> = sentences
            .iter()
            .map(|s| hash_features(s, &feature_cfg))
            .collect();
        let (assignment, centroids) = kmeans(&points, k_clusters);
        let mut picked = Vec::new();
        for c in 0..k_clusters {
            let mut members: Vec<(usize, f64)> = assignment
                .iter()
                .enumerate()
                .filter(|(_, &a)| a == c)
                .map(|(i, _)| (i, sq_dist(&points[i], &centroids[c])))
                .collect();
            members.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            picked.extend(
                members
                    .into_iter()
                    .take(n_per_cluster)
                    .map(|(i, _)| sentences[i].clone()),
            );
        }
        picked
    };
    Ok(ReviewDigest {
        sentences: truncate_to_tokens(selected, max_tokens),
        source: DigestSource::Cluster,
    })
}

/// Produce the digest for one POI under the chosen text mode.
///
/// Cluster mode with no review sentences falls back to the precomputed
/// summary when one exists (collection invariants guarantee one does).
pub fn poi_text(poi: &Poi, mode: TextMode, config: &DigestConfig) -> Result<ReviewDigest> {
    config.validate()?;
    match mode {
        TextMode::Summary => {
            let summary = poi.summary.as_ref().ok_or_else(|| {
                Error::Config(format!("poi {} has no precomputed summary", poi.id))
            })?;
            Ok(ReviewDigest {
                sentences: truncate_to_tokens(summary.clone(), config.max_tokens),
                source: DigestSource::PrecomputedSummary,
            })
        }
        TextMode::Cluster => {
            let has_sentences = poi.reviews.iter().any(|r| !segment_sentences(r).is_empty());
            if !has_sentences {
                if let Some(summary) = &poi.summary {
                    return Ok(ReviewDigest {
                        sentences: truncate_to_tokens(summary.clone(), config.max_tokens),
                        source: DigestSource::PrecomputedSummary,
                    });
                }
            }
            select_reviews_cluster(poi, config.k_clusters, config.n_per_cluster, config.max_tokens)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{PoiName, PoiType};
    use crate::geo::GeoPoint;
    use proptest::prelude::*;

    fn poi_with_reviews(reviews: Vec<&str>) -> Poi {
        Poi {
            id: "p".into(),
            name: PoiName {
                entity: "The Spot".into(),
                street: String::new(),
                city: "ashford".into(),
                postcode: String::new(),
            },
            location: GeoPoint { lat: 0.0, long: 0.0 },
            poi_type: PoiType::Restaurant,
            reviews: reviews.into_iter().map(String::from).collect(),
            summary: None,
        }
    }

    #[test]
    fn segments_on_terminator_plus_whitespace() {
        assert_eq!(
            segment_sentences("Good pub. Nice food!"),
            vec!["Good pub.", "Nice food!"]
        );
        assert_eq!(segment_sentences(""), Vec::<String>::new());
        assert_eq!(segment_sentences("Hello"), vec!["Hello"]);
    }

    #[test]
    fn decimals_and_repeated_marks() {
        assert_eq!(
            segment_sentences("Rated 4.5 stars. Loved it!!! Would return?  Yes."),
            vec!["Rated 4.5 stars.", "Loved it!!!", "Would return?", "Yes."]
        );
    }

    #[test]
    fn fewer_sentences_than_clusters_returns_all() {
        let poi = poi_with_reviews(vec!["Good pub. Nice food!"]);
        let digest = select_reviews_cluster(&poi, 5, 1, 256).unwrap();
        assert_eq!(digest.sentences, vec!["Good pub.", "Nice food!"]);
    }

    #[test]
    fn single_cluster_picks_sentence_nearest_the_mean() {
        let poi = poi_with_reviews(vec![
            "The garden terrace is lovely in summer.",
            "Terrace seating with a lovely garden view.",
            "Parking was a nightmare downtown.",
        ]);
        let digest = select_reviews_cluster(&poi, 1, 1, 256).unwrap();

        // Independent oracle: brute-force distance to the feature mean.
        let cfg = FeatureConfig::default();
        let feats: Vec<Vec<f64>> = poi.reviews.iter().map(|r| hash_features(r, &cfg)).collect();
        let dim = feats[0].len();
        let mean: Vec<f64> = (0..dim)
            .map(|j| feats.iter().map(|f| f[j]).sum::<f64>() / feats.len() as f64)
            .collect();
        let best = (0..feats.len())
            .min_by(|&a, &b| {
                sq_dist(&feats[a], &mean)
                    .partial_cmp(&sq_dist(&feats[b], &mean))
                    .unwrap()
            })
            .unwrap();
        assert_eq!(digest.sentences, vec![poi.reviews[best].clone()]);
    }

    #[test]
    fn two_well_separated_topics_both_get_picked() {
        let poi = poi_with_reviews(vec![
            "Breakfast menu was superb. Breakfast eggs cooked perfectly. Superb breakfast pastries every day.",
            "Parking garage is cramped. Cramped parking spots downstairs. Parking entrance is cramped and dark.",
        ]);
        let digest = select_reviews_cluster(&poi, 2, 1, 256).unwrap();
        assert_eq!(digest.sentences.len(), 2);
        let joined = digest.joined().to_lowercase();
        assert!(joined.contains("breakfast") && joined.contains("parking"), "{joined}");
    }

    #[test]
    fn digest_is_deterministic() {
        let poi = poi_with_reviews(vec![
            "One fine dish. Two fine dishes! Three fine dishes? Four. Five. Six. Seven.",
        ]);
        let a = select_reviews_cluster(&poi, 3, 2, 256).unwrap();
        let b = select_reviews_cluster(&poi, 3, 2, 256).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_sentences_is_an_error() {
        let mut poi = poi_with_reviews(vec![]);
        poi.summary = None;
        assert!(matches!(
            select_reviews_cluster(&poi, 3, 2, 256),
            Err(Error::EmptyPoiText { .. })
        ));
    }

    #[test]
    fn cluster_mode_falls_back_to_summary_when_reviews_empty() {
        let mut poi = poi_with_reviews(vec![]);
        poi.summary = Some(vec!["Calm rooftop bar.".into()]);
        let digest = poi_text(&poi, TextMode::Cluster, &DigestConfig::default()).unwrap();
        assert_eq!(digest.sentences, vec!["Calm rooftop bar."]);
        assert_eq!(digest.source, DigestSource::PrecomputedSummary);
    }

    #[test]
    fn summary_mode_uses_the_summary_verbatim() {
        let mut poi = poi_with_reviews(vec!["Ignored review."]);
        poi.summary = Some(vec!["Great pub".into(), "Central".into()]);
        let digest = poi_text(&poi, TextMode::Summary, &DigestConfig::default()).unwrap();
        assert_eq!(digest.sentences, vec!["Great pub", "Central"]);
        assert_eq!(digest.source, DigestSource::PrecomputedSummary);
    }

    #[test]
    fn summary_mode_without_summary_is_a_config_error() {
        let poi = poi_with_reviews(vec!["A review."]);
        assert!(matches!(
            poi_text(&poi, TextMode::Summary, &DigestConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn oversized_first_sentence_is_word_truncated() {
        let long = (0..50).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let poi = poi_with_reviews(vec![&long]);
        let digest = select_reviews_cluster(&poi, 5, 5, 10).unwrap();
        assert_eq!(split_words(&digest.joined()).len(), 10);
    }

    proptest! {
        #[test]
        fn token_cap_always_holds(
            sentences in proptest::collection::vec("[a-z]{1,8}( [a-z]{1,8}){0,12}\\.", 1..20),
            max_tokens in 1usize..40,
        ) {
            let review = sentences.join(" ");
            let poi = poi_with_reviews(vec![&review]);
            let digest = select_reviews_cluster(&poi, 3, 2, max_tokens).unwrap();
            prop_assert!(split_words(&digest.joined()).len() <= max_tokens);
            prop_assert!(!digest.sentences.is_empty());
        }
    }
}

//! Deterministic hashed n-gram text features.
//!
//! Stand-in for a pretrained textual encoder's input featurization: word
//! unigrams, adjacent-word bigrams, and per-word character trigrams, counted
//! into a fixed number of hash buckets and L2-normalized. The same analyzer
//! (lowercase, split on non-alphanumerics) is shared with BM25 so lexical
//! baselines and the neural model see identical tokenization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Chainable FNV-1a 64-bit hasher over byte slices.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Fnv1a(u64);

impl Fnv1a {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;

    pub fn new() -> Self {
        Fnv1a(Self::OFFSET)
    }

    pub fn write(mut self, bytes: &[u8]) -> Self {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(Self::PRIME);
        }
        self
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    /// Number of hash buckets F.
    pub buckets: usize,
    pub word_bigrams: bool,
    pub char_trigrams: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            buckets: 4096,
            word_bigrams: true,
            char_trigrams: true,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.buckets < 64 {
            return Err(Error::Config(format!(
                "feature buckets must be >= 64, got {}",
                self.buckets
            )));
        }
        Ok(())
    }
}

/// Lowercase and split on non-alphanumeric characters, dropping empties.
pub fn split_words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Hash namespaced n-gram counts into `config.buckets` and L2-normalize.
///
/// The all-zero vector (empty or non-alphanumeric input) is returned as-is.
pub fn hash_features(text: &str, config: &FeatureConfig) -> Vec<f64> {
    let buckets = config.buckets as u64;
    let mut v = vec![0.0; config.buckets];
    let words = split_words(text);

    for w in &words {
        let h = Fnv1a::new().write(b"u:").write(w.as_bytes()).finish();
        v[(h % buckets) as usize] += 1.0;
    }
    if config.word_bigrams {
        for pair in words.windows(2) {
            let h = Fnv1a::new()
                .write(b"b:")
                .write(pair[0].as_bytes())
                .write(b" ")
                .write(pair[1].as_bytes())
                .finish();
            v[(h % buckets) as usize] += 1.0;
        }
    }
    if config.char_trigrams {
        let mut buf = [0u8; 4];
        for w in &words {
            let chars: Vec<char> = w.chars().collect();
            for tri in chars.windows(3) {
                let mut h = Fnv1a::new().write(b"t:");
                for &c in tri {
                    h = h.write(c.encode_utf8(&mut buf).as_bytes());
                }
                v[(h.finish() % buckets) as usize] += 1.0;
            }
        }
    }

    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

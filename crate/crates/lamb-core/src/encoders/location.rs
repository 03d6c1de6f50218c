//! Multi-granularity location-name tokenizer.
//!
//! A POI name is flattened to `⟨ENT⟩ entity words ⟨STR⟩ street words ⟨CITY⟩
//! city words ⟨PC⟩ postcode words`, with each word hashed into a fixed
//! vocabulary. The four granularity markers hold reserved ids 0..=3 so the
//! embedding table can learn field-level structure; all remaining ids are
//! hash buckets (there is no learned vocabulary file, so every word takes
//! the hashed-fallback path).

use crate::corpus::PoiName;
use crate::encoders::features::{split_words, Fnv1a};

pub const TOKEN_ENT: usize = 0;
pub const TOKEN_STR: usize = 1;
pub const TOKEN_CITY: usize = 2;
pub const TOKEN_PC: usize = 3;
/// Number of reserved marker ids at the bottom of the vocabulary.
pub const MARKER_COUNT: usize = 4;

/// Tokenize a place name into ids below `vocab`, truncated to `max_tokens`.
pub fn tokenize_location(name: &PoiName, vocab: usize, max_tokens: usize) -> Vec<usize> {
    debug_assert!(vocab > MARKER_COUNT);
    let word_buckets = (vocab - MARKER_COUNT) as u64;
    let mut ids = Vec::new();
    let fields: [(usize, &str); 4] = [
        (TOKEN_ENT, &name.entity),
        (TOKEN_STR, &name.street),
        (TOKEN_CITY, &name.city),
        (TOKEN_PC, &name.postcode),
    ];
    for (marker, text) in fields {
        ids.push(marker);
        for word in split_words(text) {
            let h = Fnv1a::new().write(b"l:").write(word.as_bytes()).finish();
            ids.push(MARKER_COUNT + (h % word_buckets) as usize);
        }
    }
    ids.truncate(max_tokens);
    ids
}

//! POI and question data model, ingestion, digests, and synthetic corpora.

mod digest;
mod io;
mod synth;
mod types;

pub use digest::{poi_text, segment_sentences, select_reviews_cluster, DigestConfig, TextMode};
pub use io::{load_pois, load_questions, save_pois, save_questions};
pub use synth::{generate_synthetic_corpus, SynthSpec};
pub use types::{DigestSource, Poi, PoiCollection, PoiName, PoiType, Question, ReviewDigest};

//! Question and POI encoders with the location module.

pub mod features;
pub mod location;
mod model;
mod sim;

pub use features::{hash_features, split_words, FeatureConfig};
pub use location::{tokenize_location, MARKER_COUNT, TOKEN_CITY, TOKEN_ENT, TOKEN_PC, TOKEN_STR};
pub use model::{
    load_loc_module, save_loc_module, BiEncoder, CoordLoc, EncoderConfig, LocEncoder, LocationMode,
    NameLoc, NameLocCache, PoiCache, PoiInput, BIENCODER_KIND, LOC_MODULE_KIND,
};
pub use sim::{cosine_sim01, cosine_sim01_backward, inner_product};

//! Deterministic synthetic POI/question corpora.
//!
//! Cities sit on a coarse global grid (≥ ~2,500 km apart) with seeded
//! jitter; each city's POIs occupy a local 0.01° grid. Names carry the
//! geography: one city word, a street word per (city, grid row), a postcode
//! word per (city, grid column). Entities are padded with words from a
//! shared pool plus a unique numeric token, which keeps name overlap between
//! any two POIs noisy — an untrained encoder sees no usable geo signal.
//!
//! Reviews are templated purely from a (type, tag-pair) combo that repeats
//! round-robin in every city and never mentions the city, so review text
//! alone cannot localize a POI. Questions name a city and a combo; their
//! answer set is exactly the same-city POIs of that combo.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Poi, PoiCollection, PoiName, PoiType, Question};
use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::nn::{derive_seed, seeded_rng};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSpec {
    pub cities: usize,
    pub pois_per_city: usize,
    pub questions_per_city: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            cities: 5,
            pois_per_city: 40,
            questions_per_city: 20,
        }
    }
}

const CITY_NAMES: [&str; 24] = [
    "ashford", "brindle", "calverton", "drayton", "eastmere", "farrow", "glenside", "harwick",
    "ivorton", "jennings", "kelbrook", "lunden", "marwick", "norcross", "oakhurst", "pellworth",
    "quarrow", "redmond", "silvane", "thornbury", "umberton", "vexford", "wyndham", "yarrow",
];

const ENTITY_POOL: [&str; 12] = [
    "maple", "harbor", "golden", "crown", "willow", "summit", "cedar", "lantern", "anchor",
    "meadow", "copper", "birch",
];

const STREET_POOL: [&str; 48] = [
    "alder", "barton", "camden", "derwent", "elm", "foxglove", "gorse", "hazel", "iris", "juniper",
    "kestrel", "larch", "mulberry", "nettle", "osprey", "primrose", "quince", "rowan", "sorrel",
    "tamarind", "ulmus", "violet", "wisteria", "yew", "aspen", "bramble", "clover", "dahlia",
    "ebony", "fennel", "garnet", "heather", "indigo", "jasmine", "krummholz", "laurel", "magnolia",
    "nutmeg", "olive", "poplar", "quill", "reed", "saffron", "teasel", "umber", "vervain",
    "walnut", "zinnia",
];

const TAGS: [&str; 4] = ["seafood", "vegan", "rooftop", "historic"];
const TAG_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
/// (type, tag pair) combos cycled over POIs in construction order.
const COMBOS: usize = TAG_PAIRS.len() * 3;

const POIS_PER_ROW: usize = 6;
const GRID_STEP_DEG: f64 = 0.01;

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

fn combo_parts(combo: usize) -> (PoiType, &'static str, &'static str) {
    let poi_type = PoiType::ALL[combo % 3];
    let (a, b) = TAG_PAIRS[combo / 3];
    (poi_type, TAGS[a], TAGS[b])
}

fn combo_reviews(combo: usize) -> Vec<String> {
    let (poi_type, a, b) = combo_parts(combo);
    let t = poi_type.as_str();
    match combo % 3 {
        0 => vec![
            format!("Wonderful {a} options and a genuinely {b} feel."),
            format!("This {t} nails the {a} angle; the {b} side is just as strong. Service was quick."),
            format!("Came for the {a} menu, stayed for the {b} charm."),
        ],
        1 => vec![
            format!("A {b} gem with serious {a} credentials."),
            format!("Easily the most {b} {t} we tried; the {a} selection stands out. Staff were friendly."),
            format!("If you want {a} done right in a {b} setting, this is it."),
        ],
        _ => vec![
            format!("Known locally for {a} and its {b} atmosphere."),
            format!("The {a} offerings at this {t} are consistent, and the {b} touch makes it memorable. Prices fair."),
            format!("Great {a} picks; unmistakably {b} throughout."),
        ],
    }
}

fn question_text(rng: &mut ChaCha8Rng, city: &str, combo: usize) -> String {
    let (poi_type, a, b) = combo_parts(combo);
    let t = poi_type.as_str();
    match rng.random_range(0..4u32) {
        0 => format!("Any good {a} {b} {t} in {city}?"),
        1 => format!("Looking for a {b} {t} with {a} options in {city}."),
        2 => format!("Where should we go in {city} for a {a} friendly {b} {t}?"),
        _ => format!("Recommend a {t} in {city} that is {b} and strong on {a}."),
    }
}

/// City centers on a jittered 4-row × 6-column world grid.
fn city_centers(cities: usize, seed: u64) -> Vec<GeoPoint> {
    let mut rng = seeded_rng(derive_seed(seed, "synth-centers"));
    (0..cities)
        .map(|i| {
            let row = i % 4;
            let col = i / 4;
            let lat = -45.0 + 30.0 * row as f64 + rng.random_range(-3.0..3.0);
            let long = -150.0 + 60.0 * col as f64 + rng.random_range(-3.0..3.0);
            GeoPoint { lat, long }
        })
        .collect()
}

/// Generate a fully deterministic corpus for the given spec and seed.
pub fn generate_synthetic_corpus(
    spec: &SynthSpec,
    seed: u64,
) -> Result<(PoiCollection, Vec<Question>)> {
    if spec.cities == 0 {
        return Err(Error::Config("synthetic corpus needs at least 1 city".into()));
    }
    if spec.cities > CITY_NAMES.len() {
        return Err(Error::Config(format!(
            "synthetic corpus supports at most {} cities, got {}",
            CITY_NAMES.len(),
            spec.cities
        )));
    }
    if spec.pois_per_city == 0 {
        return Err(Error::Config("synthetic corpus needs at least 1 poi per city".into()));
    }

    let centers = city_centers(spec.cities, seed);
    let mut entity_rng = seeded_rng(derive_seed(seed, "synth-entities"));
    let n_rows = spec.pois_per_city.div_ceil(POIS_PER_ROW);

    let mut pois = Vec::with_capacity(spec.cities * spec.pois_per_city);
    for (ci, center) in centers.iter().enumerate() {
        for p in 0..spec.pois_per_city {
            let g = ci * spec.pois_per_city + p;
            let (row, col) = (p / POIS_PER_ROW, p % POIS_PER_ROW);
            let combo = g % COMBOS;
            let (poi_type, _, _) = combo_parts(combo);

            let picks = sample(&mut entity_rng, ENTITY_POOL.len(), 5);
            let mut entity_words: Vec<String> =
                picks.iter().map(|i| capitalize(ENTITY_POOL[i])).collect();
            entity_words.push(format!("#{g}"));

            let street_word = STREET_POOL[(ci * n_rows + row) % STREET_POOL.len()];
            pois.push(Poi {
                id: format!("p{g:04}"),
                name: PoiName {
                    entity: entity_words.join(" "),
                    street: format!("{} Street", capitalize(street_word)),
                    city: CITY_NAMES[ci].to_string(),
                    postcode: format!("PC{ci:02}{col}"),
                },
                location: GeoPoint {
                    lat: center.lat + row as f64 * GRID_STEP_DEG,
                    long: center.long + col as f64 * GRID_STEP_DEG,
                },
                poi_type,
                reviews: combo_reviews(combo),
                summary: None,
            });
        }
    }

    let mut question_rng = seeded_rng(derive_seed(seed, "synth-questions"));
    let mut questions = Vec::with_capacity(spec.cities * spec.questions_per_city);
    for (ci, center) in centers.iter().enumerate() {
        let city = CITY_NAMES[ci];
        for q in 0..spec.questions_per_city {
            // Target the combo of a random POI in this city so the answer
            // set is never empty regardless of spec sizes.
            let target = question_rng.random_range(0..spec.pois_per_city);
            let combo = (ci * spec.pois_per_city + target) % COMBOS;
            let answer_ids: Vec<String> = (0..spec.pois_per_city)
                .filter(|p| (ci * spec.pois_per_city + p) % COMBOS == combo)
                .map(|p| format!("p{:04}", ci * spec.pois_per_city + p))
                .collect();
            questions.push(Question {
                id: format!("q{ci:02}{q:03}"),
                text: question_text(&mut question_rng, city, combo),
                city: city.to_string(),
                answer_ids,
                tagged_locations: Some(vec![*center]),
            });
        }
    }

    let collection = PoiCollection::new(pois)?;
    for q in &questions {
        collection.validate_question(q)?;
    }
    Ok((collection, questions))
}

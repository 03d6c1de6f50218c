//! Core data model: POIs, questions, and review digests.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

/// Multi-granularity place name. Entity and city are required; street and
/// postcode may be empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoiName {
    pub entity: String,
    pub street: String,
    pub city: String,
    pub postcode: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoiType {
    Restaurant,
    Attraction,
    Hotel,
}

impl PoiType {
    pub const ALL: [PoiType; 3] = [PoiType::Restaurant, PoiType::Attraction, PoiType::Hotel];

    pub fn as_str(self) -> &'static str {
        match self {
            PoiType::Restaurant => "restaurant",
            PoiType::Attraction => "attraction",
            PoiType::Hotel => "hotel",
        }
    }
}

impl fmt::Display for PoiType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PoiType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "restaurant" => Ok(PoiType::Restaurant),
            "attraction" => Ok(PoiType::Attraction),
            "hotel" => Ok(PoiType::Hotel),
            other => Err(Error::Config(format!("unknown poi type: {other}"))),
        }
    }
}

/// A candidate answer entity: place name, coordinates, and review text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub id: String,
    pub name: PoiName,
    #[serde(flatten)]
    pub location: GeoPoint,
    #[serde(rename = "type")]
    pub poi_type: PoiType,
    pub reviews: Vec<String>,
    /// Precomputed abstractive summary, if the data ships one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<Vec<String>>,
}

impl Poi {
    /// Check the single-record invariants; collection-level ones (id
    /// uniqueness) live in [`PoiCollection`].
    pub fn validate(&self) -> Result<()> {
        let fail = |message: &str| {
            Err(Error::InvalidPoi {
                id: self.id.clone(),
                message: message.to_string(),
            })
        };
        if self.id.is_empty() {
            return Err(Error::InvalidPoi {
                id: "<empty>".into(),
                message: "empty id".into(),
            });
        }
        if self.name.entity.is_empty() {
            return fail("empty entity name");
        }
        if self.name.city.is_empty() {
            return fail("empty city");
        }
        if self.reviews.is_empty() && self.summary.is_none() {
            return fail("no reviews and no summary");
        }
        GeoPoint::new(self.location.lat, self.location.long)?;
        Ok(())
    }
}

/// A POI-seeking question with its gold answer set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub city: String,
    #[serde(rename = "answers")]
    pub answer_ids: Vec<String>,
    /// Geo-tagged locations mentioned in the question, for distance baselines.
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "geo_pairs"
    )]
    pub tagged_locations: Option<Vec<GeoPoint>>,
}

/// Serialize tagged locations as `[[lat, long], ...]` pairs.
mod geo_pairs {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::geo::GeoPoint;

    pub fn serialize<S: Serializer>(
        value: &Option<Vec<GeoPoint>>,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Option<Vec<[f64; 2]>> = value
            .as_ref()
            .map(|v| v.iter().map(|p| [p.lat, p.long]).collect());
        pairs.serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Option<Vec<GeoPoint>>, D::Error> {
        let pairs: Option<Vec<[f64; 2]>> = Option::deserialize(deserializer)?;
        Ok(pairs.map(|v| {
            v.into_iter()
                .map(|[lat, long]| GeoPoint { lat, long })
                .collect()
        }))
    }
}

/// The compact sentence set standing in for a POI's full review text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewDigest {
    pub sentences: Vec<String>,
    pub source: DigestSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DigestSource {
    Cluster,
    PrecomputedSummary,
}

impl ReviewDigest {
    /// All sentences joined for featurization.
    pub fn joined(&self) -> String {
        self.sentences.join(" ")
    }
}

/// Validated, indexed set of POIs.
#[derive(Debug, Clone)]
pub struct PoiCollection {
    pois: Vec<Poi>,
    by_id: HashMap<String, usize>,
    by_city: BTreeMap<String, Vec<usize>>,
    by_city_type: BTreeMap<(String, PoiType), Vec<usize>>,
}

impl PoiCollection {
    pub fn new(pois: Vec<Poi>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(pois.len());
        let mut by_city: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_city_type: BTreeMap<(String, PoiType), Vec<usize>> = BTreeMap::new();
        for (i, poi) in pois.iter().enumerate() {
            poi.validate()?;
            if by_id.insert(poi.id.clone(), i).is_some() {
                return Err(Error::InvalidPoi {
                    id: poi.id.clone(),
                    message: "duplicate id".into(),
                });
            }
            by_city.entry(poi.name.city.clone()).or_default().push(i);
            by_city_type
                .entry((poi.name.city.clone(), poi.poi_type))
                .or_default()
                .push(i);
        }
        Ok(PoiCollection {
            pois,
            by_id,
            by_city,
            by_city_type,
        })
    }

    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Poi> {
        self.pois.iter()
    }

    pub fn pois(&self) -> &[Poi] {
        &self.pois
    }

    pub fn get(&self, id: &str) -> Result<&Poi> {
        self.by_id
            .get(id)
            .map(|&i| &self.pois[i])
            .ok_or_else(|| Error::UnknownPoi { id: id.to_string() })
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownPoi { id: id.to_string() })
    }

    pub fn by_index(&self, i: usize) -> &Poi {
        &self.pois[i]
    }

    pub fn contains_city(&self, city: &str) -> bool {
        self.by_city.contains_key(city)
    }

    /// Cities in sorted order.
    pub fn cities(&self) -> impl Iterator<Item = &str> {
        self.by_city.keys().map(String::as_str)
    }

    /// Indices of POIs in a city, in insertion order; empty if unknown.
    pub fn city_indices(&self, city: &str) -> &[usize] {
        self.by_city.get(city).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Indices of POIs matching (city, type); empty if none.
    pub fn city_type_indices(&self, city: &str, poi_type: PoiType) -> &[usize] {
        self.by_city_type
            .get(&(city.to_string(), poi_type))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Validate one question against this collection.
    pub fn validate_question(&self, q: &Question) -> Result<()> {
        let invalid = |message: String| {
            Err(Error::Parse {
                path: String::new(),
                line: 0,
                message,
            })
        };
        if q.answer_ids.is_empty() {
            return invalid(format!("question {}: empty answer set", q.id));
        }
        for id in &q.answer_ids {
            let poi = self.get(id).map_err(|_| Error::UnknownPoi {
                id: format!("{id} (answer of question {})", q.id),
            })?;
            if poi.name.city != q.city {
                return invalid(format!(
                    "question {}: answer {} is in {}, not {}",
                    q.id, id, poi.name.city, q.city
                ));
            }
        }
        if let Some(tags) = &q.tagged_locations {
            for t in tags {
                GeoPoint::new(t.lat, t.long)?;
            }
        }
        Ok(())
    }
}

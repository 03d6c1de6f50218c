//! JSONL ingestion and serialization for POIs and questions.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::corpus::{Poi, PoiCollection, Question};
use crate::error::{Error, Result};

/// Parse one record per non-blank line, keeping 1-based line numbers so
/// later validation errors can cite their source line.
fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path)?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push((idx + 1, record));
    }
    Ok(records)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Load and validate a POI collection from JSONL.
pub fn load_pois(path: impl AsRef<Path>) -> Result<PoiCollection> {
    let path = path.as_ref();
    let rows: Vec<(usize, Poi)> = read_jsonl(path)?;
    let pois: Vec<Poi> = rows.iter().map(|(_, p)| p.clone()).collect();
    PoiCollection::new(pois.clone()).map_err(|e| {
        // Error path only: the offending line is the first prefix that
        // fails validation (for duplicates, the second copy's line).
        let line = (1..=pois.len())
            .find(|&n| PoiCollection::new(pois[..n].to_vec()).is_err())
            .map(|n| rows[n - 1].0)
            .unwrap_or(0);
        Error::Parse {
            path: path.display().to_string(),
            line,
            message: e.to_string(),
        }
    })
}

/// Load questions and validate them against an already-loaded collection.
pub fn load_questions(path: impl AsRef<Path>, pois: &PoiCollection) -> Result<Vec<Question>> {
    let path = path.as_ref();
    let rows: Vec<(usize, Question)> = read_jsonl(path)?;
    for (line, q) in &rows {
        pois.validate_question(q).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: *line,
            message: e.to_string(),
        })?;
    }
    Ok(rows.into_iter().map(|(_, q)| q).collect())
}

pub fn save_pois(path: impl AsRef<Path>, pois: &PoiCollection) -> Result<()> {
    write_jsonl(path.as_ref(), pois.pois())
}

pub fn save_questions(path: impl AsRef<Path>, questions: &[Question]) -> Result<()> {
    write_jsonl(path.as_ref(), questions)
}

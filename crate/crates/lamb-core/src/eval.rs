//! Accuracy@N / MRR evaluation over local and global candidate pools.
//!
//! Local evaluation restricts candidates to the question's city; global
//! ranks against every POI. Metrics are averaged over questions, with
//! rankings truncated at `k_retrieve` — an answer missing from the
//! truncated list contributes 0 to both metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{PoiCollection, Question};
use crate::encoders::BiEncoder;
use crate::error::{Error, Result};
use crate::index::{CandidateFilter, EmbeddingIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Local,
    Global,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Local => "local",
            EvalMode::Global => "global",
        }
    }

    /// Default Acc@N cutoffs for this candidate pool.
    pub fn default_ns(self) -> Vec<usize> {
        match self {
            EvalMode::Local => vec![3, 5, 30],
            EvalMode::Global => vec![5, 30, 100],
        }
    }
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub acc_at: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub question_count: usize,
}

/// Retrieval depth: deep enough for every requested cutoff and never less
/// than 100.
pub fn default_k_retrieve(ns: &[usize]) -> usize {
    ns.iter().copied().max().unwrap_or(0).max(100)
}

/// 1 iff any of the first `min(n, len)` ranked ids is an answer.
pub fn accuracy_at_n(ranked: &[String], answers: &[String], n: usize) -> Result<u8> {
    if answers.is_empty() {
        return Err(Error::EmptyInput("accuracy_at_n needs a non-empty answer set"));
    }
    if n == 0 {
        return Err(Error::Config("accuracy cutoff N must be >= 1".into()));
    }
    let hit = ranked
        .iter()
        .take(n)
        .any(|id| answers.contains(id));
    Ok(hit as u8)
}

/// `1/rank` of the first answer in the list; 0 when no answer appears.
pub fn reciprocal_rank(ranked: &[String], answers: &[String]) -> Result<f64> {
    if answers.is_empty() {
        return Err(Error::EmptyInput("reciprocal_rank needs a non-empty answer set"));
    }
    Ok(ranked
        .iter()
        .position(|id| answers.contains(id))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64))
}

/// Anything that can produce a ranked candidate list for a question.
pub trait Ranker {
    /// Ranked poi ids, best first, truncated to `k`.
    fn rank(&self, question: &Question, filter: &CandidateFilter, k: usize) -> Result<Vec<String>>;
}

/// The main model's inference path: encode the question, scan the index.
pub struct ModelRanker<'a> {
    pub model: &'a BiEncoder,
    pub index: &'a EmbeddingIndex,
}

impl Ranker for ModelRanker<'_> {
    fn rank(&self, question: &Question, filter: &CandidateFilter, k: usize) -> Result<Vec<String>> {
        let qv = self.model.encode_question(&question.text)?;
        Ok(self
            .index
            .search(&qv, k, filter)?
            .into_iter()
            .map(|r| r.poi_id)
            .collect())
    }
}

/// Average Accuracy@N for every `N` in `ns`, plus MRR, over all questions.
pub fn evaluate(
    ranker: &dyn Ranker,
    questions: &[Question],
    pois: &PoiCollection,
    mode: EvalMode,
    ns: &[usize],
    k_retrieve: usize,
) -> Result<EvalReport> {
    if questions.is_empty() {
        return Err(Error::EmptyInput("evaluate needs at least one question"));
    }
    if ns.is_empty() {
        return Err(Error::EmptyInput("evaluate needs at least one cutoff N"));
    }
    if k_retrieve < ns.iter().copied().max().unwrap_or(1) {
        return Err(Error::Config(format!(
            "k_retrieve {} is below the largest cutoff {}",
            k_retrieve,
            ns.iter().max().unwrap()
        )));
    }
    if mode == EvalMode::Local {
        for q in questions {
            if !pois.contains_city(&q.city) {
                return Err(Error::UnknownCity { city: q.city.clone() });
            }
        }
    }

    let mut acc_sums: BTreeMap<usize, f64> = ns.iter().map(|&n| (n, 0.0)).collect();
    let mut mrr_sum = 0.0;
    for q in questions {
        let filter = match mode {
            EvalMode::Local => CandidateFilter::city(q.city.clone()),
            EvalMode::Global => CandidateFilter::none(),
        };
        let ranked = ranker.rank(q, &filter, k_retrieve)?;
        for &n in ns {
            *acc_sums.get_mut(&n).unwrap() += accuracy_at_n(&ranked, &q.answer_ids, n)? as f64;
        }
        mrr_sum += reciprocal_rank(&ranked, &q.answer_ids)?;
    }

    let count = questions.len() as f64;
    Ok(EvalReport {
        mode,
        acc_at: acc_sums.into_iter().map(|(n, s)| (n, s / count)).collect(),
        mrr: mrr_sum / count,
        question_count: questions.len(),
    })
}

/// `metric,value` CSV across reports, e.g. `local_acc@3,0.25`.
pub fn reports_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("metric,value\n");
    for r in reports {
        for (n, acc) in &r.acc_at {
            out.push_str(&format!("{}_acc@{},{}\n", r.mode, n, acc));
        }
        out.push_str(&format!("{}_mrr,{}\n", r.mode, r.mrr));
        out.push_str(&format!("{}_questions,{}\n", r.mode, r.question_count));
    }
    out
}

/// JSON mirror of the same reports.
pub fn reports_json(reports: &[EvalReport]) -> Result<String> {
    Ok(serde_json::to_string_pretty(reports)?)
}

//! Main-model contrastive training.
//!
//! Each training instance pits one positive POI against `n` negatives under
//! an NLL loss over inner-product scores. Negatives come in three tiers —
//! easy (anywhere), medium (same city and type as the positive), hard
//! (mined from the model's own top-ranked non-answers) — and training runs
//! in two phases: easy/medium first, then medium/hard with a fresh mining
//! pass before every phase-2 epoch.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{PoiCollection, Question, ReviewDigest};
use crate::encoders::{inner_product, BiEncoder, PoiInput};
use crate::error::{Error, Result};
use crate::nn::{derive_seed, lr_at, seeded_rng, Adam};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Easy,
    Medium,
    Hard,
}

/// How many negatives to draw from each tier; must sum to `n_negatives`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierMix {
    #[serde(default)]
    pub easy: usize,
    #[serde(default)]
    pub medium: usize,
    #[serde(default)]
    pub hard: usize,
}

impl TierMix {
    pub fn total(&self) -> usize {
        self.easy + self.medium + self.hard
    }
}

/// One (question, positive) pair plus its sampled negatives, all as
/// collection/slice indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingInstance {
    pub question_idx: usize,
    pub positive: usize,
    pub negatives: Vec<(usize, Tier)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub total_epochs: usize,
    pub phase1_epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub n_negatives: usize,
    pub phase1_mix: TierMix,
    pub phase2_mix: TierMix,
    pub mining_k: usize,
    pub seed: u64,
    /// Keep the location module fixed during main training.
    pub freeze_location: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_epochs: 10,
            phase1_epochs: 5,
            batch_size: 8,
            base_lr: 2e-5,
            n_negatives: 15,
            phase1_mix: TierMix { easy: 7, medium: 8, hard: 0 },
            phase2_mix: TierMix { easy: 0, medium: 3, hard: 12 },
            mining_k: 30,
            seed: 0,
            freeze_location: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.phase1_epochs > self.total_epochs {
            return Err(Error::Config(format!(
                "phase1_epochs {} exceeds total_epochs {}",
                self.phase1_epochs, self.total_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if self.n_negatives == 0 {
            return Err(Error::Config("n_negatives must be >= 1".into()));
        }
        if self.phase1_mix.total() != self.n_negatives {
            return Err(Error::Config(format!(
                "phase1 tier mix sums to {}, expected n_negatives = {}",
                self.phase1_mix.total(),
                self.n_negatives
            )));
        }
        if self.phase1_mix.hard != 0 {
            return Err(Error::Config("phase 1 must not request hard negatives".into()));
        }
        if self.phase2_mix.total() != self.n_negatives {
            return Err(Error::Config(format!(
                "phase2 tier mix sums to {}, expected n_negatives = {}",
                self.phase2_mix.total(),
                self.n_negatives
            )));
        }
        if self.phase2_mix.easy != 0 {
            return Err(Error::Config("phase 2 draws from medium and hard tiers only".into()));
        }
        if self.mining_k == 0 {
            return Err(Error::Config("mining_k must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-question ordered non-answer POI indices from the latest mining pass.
#[derive(Debug, Clone, Default)]
pub struct HardNegativePool {
    pools: Vec<Vec<usize>>,
}

impl HardNegativePool {
    pub fn empty(n_questions: usize) -> Self {
        HardNegativePool { pools: vec![Vec::new(); n_questions] }
    }

    pub fn get(&self, question_idx: usize) -> &[usize] {
        self.pools.get(question_idx).map_or(&[], |p| p.as_slice())
    }
}

/// NLL of the positive under a softmax over `[sim_pos, sim_negs...]`,
/// computed with a max shift.
pub fn nll_loss(sim_pos: f64, sim_negs: &[f64]) -> Result<f64> {
    if sim_negs.is_empty() {
        return Err(Error::EmptyInput("nll_loss needs at least one negative"));
    }
    let m = sim_negs.iter().fold(sim_pos, |acc, &s| acc.max(s));
    let z: f64 = (sim_pos - m).exp() + sim_negs.iter().map(|&s| (s - m).exp()).sum::<f64>();
    Ok(m + z.ln() - sim_pos)
}

/// `(dL/dsim_pos, dL/dsim_negs)`: softmax probabilities minus the one-hot
/// target.
pub fn nll_grads(sim_pos: f64, sim_negs: &[f64]) -> Result<(f64, Vec<f64>)> {
    if sim_negs.is_empty() {
        return Err(Error::EmptyInput("nll_grads needs at least one negative"));
    }
    let m = sim_negs.iter().fold(sim_pos, |acc, &s| acc.max(s));
    let e_pos = (sim_pos - m).exp();
    let e_negs: Vec<f64> = sim_negs.iter().map(|&s| (s - m).exp()).collect();
    let z = e_pos + e_negs.iter().sum::<f64>();
    Ok((e_pos / z - 1.0, e_negs.iter().map(|e| e / z).collect()))
}

/// One skeleton instance per (question, answer) pair, negatives unfilled.
pub fn build_instances(
    questions: &[Question],
    pois: &PoiCollection,
) -> Result<Vec<TrainingInstance>> {
    let mut out = Vec::new();
    for (qi, q) in questions.iter().enumerate() {
        pois.validate_question(q)?;
        for id in &q.answer_ids {
            out.push(TrainingInstance {
                question_idx: qi,
                positive: pois.index_of(id)?,
                negatives: Vec::new(),
            });
        }
    }
    Ok(out)
}

fn draw_from_pool(
    pool: &[usize],
    want: usize,
    taken: &mut HashSet<usize>,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let candidates: Vec<usize> = pool.iter().copied().filter(|i| !taken.contains(i)).collect();
    let picks = sample(rng, candidates.len(), want.min(candidates.len()));
    let chosen: Vec<usize> = picks.iter().map(|i| candidates[i]).collect();
    taken.extend(&chosen);
    chosen
}

/// Fill an instance's negatives for the given tier mix.
///
/// Hard negatives come from the question's mined pool, medium from the
/// positive's (city, type) bucket, easy from the whole collection; answers
/// are always excluded and tiers never repeat a POI. A tier whose pool runs
/// short backfills from the next easier tier, so the instance always ends
/// up with exactly `mix.total()` distinct negatives.
pub fn sample_negatives(
    instance: &TrainingInstance,
    questions: &[Question],
    pois: &PoiCollection,
    mix: TierMix,
    hard_pool: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<TrainingInstance> {
    let question = &questions[instance.question_idx];
    let answers: HashSet<usize> = question
        .answer_ids
        .iter()
        .map(|id| pois.index_of(id))
        .collect::<Result<_>>()?;
    let available = pois.len() - answers.len();
    if available < mix.total() {
        return Err(Error::InsufficientPool { needed: mix.total(), available });
    }

    // `taken` keeps answers and already-chosen negatives out of every draw.
    let mut taken = answers;
    let mut negatives = Vec::with_capacity(mix.total());

    let hard = draw_from_pool(hard_pool, mix.hard, &mut taken, rng);
    negatives.extend(hard.iter().map(|&i| (i, Tier::Hard)));

    let positive = pois.by_index(instance.positive);
    let medium_pool = pois.city_type_indices(&positive.name.city, positive.poi_type);
    let medium_want = mix.medium + (mix.hard - hard.len());
    let medium = draw_from_pool(medium_pool, medium_want, &mut taken, rng);
    negatives.extend(medium.iter().map(|&i| (i, Tier::Medium)));

    let all: Vec<usize> = (0..pois.len()).collect();
    let easy_want = mix.total() - negatives.len();
    let easy = draw_from_pool(&all, easy_want, &mut taken, rng);
    negatives.extend(easy.iter().map(|&i| (i, Tier::Easy)));

    debug_assert_eq!(negatives.len(), mix.total());
    Ok(TrainingInstance { negatives, ..instance.clone() })
}

/// Rank candidate indices by score (descending), breaking ties by POI id.
fn rank_by_score(scores: &[f64], candidates: &[usize], pois: &PoiCollection) -> Vec<usize> {
    let mut order: Vec<usize> = candidates.to_vec();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("non-finite score")
            .then_with(|| pois.by_index(a).id.cmp(&pois.by_index(b).id))
    });
    order
}

/// Score every question against the whole collection and keep the top-k
/// POIs per question with all answers removed, in rank order.
pub fn mine_hard_negatives(
    model: &BiEncoder,
    questions: &[Question],
    pois: &PoiCollection,
    inputs: &[PoiInput],
    k: usize,
) -> Result<HardNegativePool> {
    let poi_vecs = encode_all_pois(model, inputs)?;
    let all: Vec<usize> = (0..pois.len()).collect();
    let mut pools = Vec::with_capacity(questions.len());
    for q in questions {
        let qv = model.encode_question(&q.text)?;
        let scores: Vec<f64> =
            poi_vecs.iter().map(|p| inner_product(&qv, p)).collect::<Result<_>>()?;
        let answers: HashSet<usize> =
            q.answer_ids.iter().map(|id| pois.index_of(id)).collect::<Result<_>>()?;
        let ranked = rank_by_score(&scores, &all, pois);
        pools.push(
            ranked
                .into_iter()
                .take(k)
                .filter(|i| !answers.contains(i))
                .collect(),
        );
    }
    Ok(HardNegativePool { pools })
}

/// One row of the training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub phase: u8,
    pub mean_loss: f64,
    pub local_acc1: f64,
    pub global_acc1: f64,
}

/// CSV body for the training trace.
pub fn train_trace_csv(trace: &[EpochStats]) -> String {
    let mut out = String::from("epoch,phase,mean_loss,local_acc1,global_acc1\n");
    for s in trace {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.epoch, s.phase, s.mean_loss, s.local_acc1, s.global_acc1
        ));
    }
    out
}

fn encode_all_pois(model: &BiEncoder, inputs: &[PoiInput]) -> Result<Vec<Vec<f64>>> {
    inputs.iter().map(|inp| Ok(model.encode_poi_cached(inp, None)?.0)).collect()
}

/// Top-1 accuracy over the given candidate set for every question.
fn acc1(
    model: &BiEncoder,
    questions: &[Question],
    pois: &PoiCollection,
    poi_vecs: &[Vec<f64>],
    local: bool,
) -> Result<f64> {
    let mut hits = 0usize;
    for q in questions {
        let candidates: Vec<usize> = if local {
            pois.city_indices(&q.city).to_vec()
        } else {
            (0..pois.len()).collect()
        };
        let qv = model.encode_question(&q.text)?;
        let mut scores = vec![f64::NEG_INFINITY; pois.len()];
        for &c in &candidates {
            scores[c] = inner_product(&qv, &poi_vecs[c])?;
        }
        let ranked = rank_by_score(&scores, &candidates, pois);
        if let Some(&top) = ranked.first() {
            if q.answer_ids.iter().any(|id| id == &pois.by_index(top).id) {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / questions.len().max(1) as f64)
}

/// Two-phase contrastive training over a prepared corpus.
///
/// `digests` must align with the collection's POI order. The model trains
/// in place; the returned trace has one row per epoch with the mean NLL
/// and train-set Acc@1 (local = same-city candidates only).
pub fn train(
    model: &mut BiEncoder,
    pois: &PoiCollection,
    questions: &[Question],
    digests: &[ReviewDigest],
    config: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    config.validate()?;
    if digests.len() != pois.len() {
        return Err(Error::ShapeMismatch {
            context: "train digests",
            expected: pois.len(),
            got: digests.len(),
        });
    }
    if questions.is_empty() {
        return Err(Error::EmptyInput("train needs at least one question"));
    }

    let skeletons = build_instances(questions, pois)?;
    let inputs: Vec<PoiInput> = pois
        .iter()
        .zip(digests)
        .map(|(p, d)| model.prepare_poi(p, d))
        .collect::<Result<_>>()?;
    let q_features: Vec<Vec<f64>> =
        questions.iter().map(|q| model.question_features(&q.text)).collect();

    let steps_per_epoch = skeletons.len().div_ceil(config.batch_size);
    let total_steps = config.total_epochs * steps_per_epoch;
    let mut optimizer = Adam::new();
    let mut sample_rng = seeded_rng(derive_seed(config.seed, "train-sampling"));
    let mut dropout_rng = seeded_rng(derive_seed(config.seed, "train-dropout"));
    let mut hard_pool = HardNegativePool::empty(questions.len());
    let mut step = 0usize;
    let mut trace = Vec::with_capacity(config.total_epochs);

    for epoch in 0..config.total_epochs {
        let phase: u8 = if epoch < config.phase1_epochs { 1 } else { 2 };
        let mix = if phase == 1 { config.phase1_mix } else { config.phase2_mix };
        if phase == 2 {
            // Refresh the pool from the current model before each phase-2
            // epoch, so its first epoch already mines the phase-1 model.
            hard_pool = mine_hard_negatives(model, questions, pois, &inputs, config.mining_k)?;
        }

        let mut order: Vec<usize> = (0..skeletons.len()).collect();
        order.shuffle(&mut sample_rng);
        let instances: Vec<TrainingInstance> = order
            .iter()
            .map(|&i| {
                sample_negatives(
                    &skeletons[i],
                    questions,
                    pois,
                    mix,
                    hard_pool.get(skeletons[i].question_idx),
                    &mut sample_rng,
                )
            })
            .collect::<Result<_>>()?;

        let mut epoch_loss = 0.0;
        for batch in instances.chunks(config.batch_size) {
            let inv = 1.0 / batch.len() as f64;
            for inst in batch {
                let (qv, q_cache) =
                    model.encode_question_cached(&q_features[inst.question_idx])?;
                let (pv, p_cache) =
                    model.encode_poi_cached(&inputs[inst.positive], Some(&mut dropout_rng))?;
                let mut neg_vecs = Vec::with_capacity(inst.negatives.len());
                let mut neg_caches = Vec::with_capacity(inst.negatives.len());
                for &(ni, _) in &inst.negatives {
                    let (nv, nc) =
                        model.encode_poi_cached(&inputs[ni], Some(&mut dropout_rng))?;
                    neg_vecs.push(nv);
                    neg_caches.push(nc);
                }

                let sim_pos = inner_product(&qv, &pv)?;
                let sim_negs: Vec<f64> =
                    neg_vecs.iter().map(|nv| inner_product(&qv, nv)).collect::<Result<_>>()?;
                epoch_loss += nll_loss(sim_pos, &sim_negs)?;
                let (g_pos, g_negs) = nll_grads(sim_pos, &sim_negs)?;

                // d(q·p)/dq = p and symmetrically for each POI vector.
                let mut dq = vec![0.0; qv.len()];
                for (x, &p) in dq.iter_mut().zip(&pv) {
                    *x += g_pos * inv * p;
                }
                for (g, nv) in g_negs.iter().zip(&neg_vecs) {
                    for (x, &p) in dq.iter_mut().zip(nv) {
                        *x += g * inv * p;
                    }
                }
                model.backward_question(&q_cache, &dq)?;

                let dp: Vec<f64> = qv.iter().map(|&x| g_pos * inv * x).collect();
                model.backward_poi(&p_cache, &dp)?;
                for (g, nc) in g_negs.iter().zip(&neg_caches) {
                    let dn: Vec<f64> = qv.iter().map(|&x| g * inv * x).collect();
                    model.backward_poi(nc, &dn)?;
                }
            }

            let lr = lr_at(step, total_steps, config.base_lr)?;
            let mut params = model.params_mut();
            if config.freeze_location {
                params.retain(|p| !p.name.starts_with("loc."));
            }
            optimizer.step(&mut params, lr)?;
            drop(params);
            // Frozen (or otherwise skipped) params still accumulate grads
            // from backward; clear everything so they never leak across
            // steps.
            model.zero_grads();
            step += 1;
        }

        let poi_vecs = encode_all_pois(model, &inputs)?;
        trace.push(EpochStats {
            epoch: epoch + 1,
            phase,
            mean_loss: epoch_loss / instances.len() as f64,
            local_acc1: acc1(model, questions, pois, &poi_vecs, true)?,
            global_acc1: acc1(model, questions, pois, &poi_vecs, false)?,
        });
    }
    Ok(trace)
}

//! Geographic pretraining of the name-mode location module.
//!
//! For a triplet of POIs `(p0, p1, p2)` with normalized anchor distances
//! `d1`, `d2`, the loss asks the location-embedding similarities to order
//! and separate the two candidates the way the map does, with `|d1 - d2|`
//! acting as a dynamic margin. Minimizing it over random triplets makes
//! cosine similarity between location vectors track geographic proximity
//! before any question/answer supervision is seen.

use rand::seq::index::sample;
use rand::Rng;

use crate::corpus::PoiCollection;
use crate::encoders::{
    cosine_sim01, cosine_sim01_backward, tokenize_location, EncoderConfig, NameLoc,
};
use crate::error::{Error, Result};
use crate::geo::normalized_distance;
use crate::nn::{derive_seed, lr_at, seeded_rng, Adam};

/// One pretraining example: anchor `p0` and candidates `p1`, `p2` as
/// collection indices, with their precomputed normalized anchor distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletSample {
    pub p0: usize,
    pub p1: usize,
    pub p2: usize,
    pub d1: f64,
    pub d2: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct GeoPretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub max_name_tokens: usize,
    pub seed: u64,
    /// Triplets drawn per epoch; `None` scales with the corpus,
    /// `max(1000, 4 * n_pois)`.
    pub triplets_per_epoch: Option<usize>,
    /// Draw one candidate from the anchor's city and one from another city
    /// instead of fully uniform triples.
    pub stratified: bool,
}

impl Default for GeoPretrainConfig {
    fn default() -> Self {
        GeoPretrainConfig {
            epochs: 3,
            batch_size: 8,
            base_lr: 2e-5,
            max_name_tokens: 64,
            seed: 0,
            triplets_per_epoch: None,
            stratified: false,
        }
    }
}

impl GeoPretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if self.max_name_tokens == 0 {
            return Err(Error::Config("max_name_tokens must be >= 1".into()));
        }
        if self.triplets_per_epoch == Some(0) {
            return Err(Error::Config("triplets_per_epoch must be >= 1".into()));
        }
        Ok(())
    }

    fn triplet_count(&self, n_pois: usize) -> usize {
        self.triplets_per_epoch.unwrap_or_else(|| 1000.max(4 * n_pois))
    }
}

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::OutOfDomain { name, value: v, lo: 0.0, hi: 1.0 });
    }
    Ok(())
}

/// Piecewise triplet loss with the distance gap as a dynamic margin.
///
/// When `p1` is the farther candidate (`d1 - d2 > 0`) the loss is
/// `max((s1 - s2) + (d1 - d2), 0)`: it vanishes only once `s1` is below
/// `s2` by at least the distance gap. Otherwise the roles flip:
/// `max((s2 - s1) - (d1 - d2), 0)`. Ties `d1 == d2` take the second
/// branch, where both forms agree.
pub fn triplet_loss(s1: f64, s2: f64, d1: f64, d2: f64) -> Result<f64> {
    check_unit("s1", s1)?;
    check_unit("s2", s2)?;
    check_unit("d1", d1)?;
    check_unit("d2", d2)?;
    let gap = d1 - d2;
    let raw = if gap > 0.0 { (s1 - s2) + gap } else { (s2 - s1) - gap };
    Ok(raw.max(0.0))
}

/// `(dL/ds1, dL/ds2)` for [`triplet_loss`], with subgradient 0 exactly at
/// the clamp kink.
pub fn triplet_loss_grad(s1: f64, s2: f64, d1: f64, d2: f64) -> Result<(f64, f64)> {
    let loss = triplet_loss(s1, s2, d1, d2)?;
    if loss <= 0.0 {
        return Ok((0.0, 0.0));
    }
    Ok(if d1 - d2 > 0.0 { (1.0, -1.0) } else { (-1.0, 1.0) })
}

fn triplet_from_indices(pois: &PoiCollection, p0: usize, p1: usize, p2: usize) -> Result<TripletSample> {
    let a = pois.by_index(p0).location;
    Ok(TripletSample {
        p0,
        p1,
        p2,
        d1: normalized_distance(a, pois.by_index(p1).location)?,
        d2: normalized_distance(a, pois.by_index(p2).location)?,
    })
}

fn require_pool(pois: &PoiCollection) -> Result<usize> {
    let n = pois.len();
    if n < 3 {
        return Err(Error::InsufficientPool { needed: 3, available: n });
    }
    Ok(n)
}

/// Uniform triples: three distinct indices per sample, fresh each call.
pub fn sample_triplets(pois: &PoiCollection, count: usize, seed: u64) -> Result<Vec<TripletSample>> {
    let n = require_pool(pois)?;
    let mut rng = seeded_rng(seed);
    (0..count)
        .map(|_| {
            let picks = sample(&mut rng, n, 3);
            triplet_from_indices(pois, picks.index(0), picks.index(1), picks.index(2))
        })
        .collect()
}

/// City-stratified triples: one candidate shares the anchor's city, the
/// other comes from a different city, alternating which slot is the near
/// one. Falls back to uniform picks when a pool is too small.
pub fn sample_triplets_stratified(
    pois: &PoiCollection,
    count: usize,
    seed: u64,
) -> Result<Vec<TripletSample>> {
    let n = require_pool(pois)?;
    let mut rng = seeded_rng(seed);
    fn pick_not(rng: &mut impl Rng, n: usize, exclude: &[usize]) -> usize {
        loop {
            let i = rng.random_range(0..n);
            if !exclude.contains(&i) {
                return i;
            }
        }
    }
    (0..count)
        .map(|t| {
            let p0 = rng.random_range(0..n);
            let same = pois.city_indices(&pois.by_index(p0).name.city);
            let near = if same.len() >= 2 {
                loop {
                    let i = same[rng.random_range(0..same.len())];
                    if i != p0 {
                        break i;
                    }
                }
            } else {
                pick_not(&mut rng, n, &[p0])
            };
            let far = if same.len() < n {
                loop {
                    let i = rng.random_range(0..n);
                    if !same.contains(&i) && i != near {
                        break i;
                    }
                }
            } else {
                pick_not(&mut rng, n, &[p0, near])
            };
            let (p1, p2) = if t % 2 == 0 { (near, far) } else { (far, near) };
            triplet_from_indices(pois, p0, p1, p2)
        })
        .collect()
}

/// Fresh location module with seed-derived initialization — the "untrained"
/// reference point for alignment comparisons.
pub fn init_location_module(encoder: &EncoderConfig, seed: u64) -> Result<NameLoc> {
    encoder.validate()?;
    let mut rng = seeded_rng(derive_seed(seed, "loc-init"));
    Ok(NameLoc::new(encoder, &mut rng))
}

/// Minibatch Adam over the triplet loss with a linear lr decay.
///
/// Triplets are resampled fresh each epoch from a seed-derived stream.
/// Returns the trained module and the per-epoch mean loss trace; zero
/// epochs returns the initialization unchanged with an empty trace.
pub fn pretrain_location_module(
    pois: &PoiCollection,
    encoder: &EncoderConfig,
    config: &GeoPretrainConfig,
) -> Result<(NameLoc, Vec<f64>)> {
    config.validate()?;
    let mut module = init_location_module(encoder, config.seed)?;
    if config.epochs == 0 {
        return Ok((module, Vec::new()));
    }
    let n = require_pool(pois)?;

    let tokens: Vec<Vec<usize>> = pois
        .iter()
        .map(|p| tokenize_location(&p.name, encoder.loc_vocab, config.max_name_tokens))
        .collect();

    let per_epoch = config.triplet_count(n);
    let total_steps = config.epochs * per_epoch.div_ceil(config.batch_size);
    let mut optimizer = Adam::new();
    let mut step = 0usize;
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let epoch_seed = derive_seed(config.seed, &format!("geo-epoch-{epoch}"));
        let triplets = if config.stratified {
            sample_triplets_stratified(pois, per_epoch, epoch_seed)?
        } else {
            sample_triplets(pois, per_epoch, epoch_seed)?
        };

        let mut epoch_loss = 0.0;
        for batch in triplets.chunks(config.batch_size) {
            let inv = 1.0 / batch.len() as f64;
            for t in batch {
                let (h0, c0) = module.forward(&tokens[t.p0])?;
                let (h1, c1) = module.forward(&tokens[t.p1])?;
                let (h2, c2) = module.forward(&tokens[t.p2])?;
                let s1 = cosine_sim01(&h0, &h1)?;
                let s2 = cosine_sim01(&h0, &h2)?;
                epoch_loss += triplet_loss(s1, s2, t.d1, t.d2)?;
                let (g1, g2) = triplet_loss_grad(s1, s2, t.d1, t.d2)?;
                if g1 != 0.0 {
                    let (da, db) = cosine_sim01_backward(&h0, &h1, g1 * inv)?;
                    module.backward(&c0, &da)?;
                    module.backward(&c1, &db)?;
                }
                if g2 != 0.0 {
                    let (da, db) = cosine_sim01_backward(&h0, &h2, g2 * inv)?;
                    module.backward(&c0, &da)?;
                    module.backward(&c2, &db)?;
                }
            }
            let lr = lr_at(step, total_steps, config.base_lr)?;
            optimizer.step(&mut module.params_mut(), lr)?;
            step += 1;
        }
        trace.push(epoch_loss / triplets.len() as f64);
    }
    Ok((module, trace))
}

/// Distinct index pairs for held-out alignment checks.
pub fn sample_pairs(n_pois: usize, count: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if n_pois < 2 {
        return Err(Error::InsufficientPool { needed: 2, available: n_pois });
    }
    let mut rng = seeded_rng(seed);
    Ok((0..count)
        .map(|_| {
            let picks = sample(&mut rng, n_pois, 2);
            (picks.index(0), picks.index(1))
        })
        .collect())
}

/// Spearman correlation between `1 - cosine_sim01` of the location vectors
/// and the normalized geographic distance over the given pairs. Near 1
/// means the module's similarity tracks the map.
pub fn similarity_distance_spearman(
    module: &NameLoc,
    pois: &PoiCollection,
    pairs: &[(usize, usize)],
    loc_vocab: usize,
    max_name_tokens: usize,
) -> Result<f64> {
    let mut dissims = Vec::with_capacity(pairs.len());
    let mut dists = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        let (pa, pb) = (pois.by_index(a), pois.by_index(b));
        let ha = module.forward(&tokenize_location(&pa.name, loc_vocab, max_name_tokens))?.0;
        let hb = module.forward(&tokenize_location(&pb.name, loc_vocab, max_name_tokens))?.0;
        dissims.push(1.0 - cosine_sim01(&ha, &hb)?);
        dists.push(normalized_distance(pa.location, pb.location)?);
    }
    spearman(&dissims, &dists)
}

/// Average ranks, ties sharing the mean of their positions.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("non-finite rank input"));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Positions i..=j (1-based) share one averaged rank.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average-rank tie handling.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch {
            context: "spearman",
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::EmptyInput("spearman needs at least 2 pairs"));
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (da, db) = (a - mean, b - mean);
        cov += da * db;
        vx += da * da;
        vy += db * db;
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::Config("spearman undefined for constant input".into()));
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

/// CSV body for a loss trace: `epoch,mean_loss` with 1-based epochs.
pub fn loss_trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for (i, loss) in trace.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, loss));
    }
    out
}

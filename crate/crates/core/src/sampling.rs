//! Cascaded online hard example mining.
//!
//! Each iteration draws random windows from a negative raster, enumerates
//! every patch center inside them, scores the candidates with the current
//! detector and samples the batch from the highest-loss part of the pool.

use std::collections::{BTreeMap, HashMap};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::patch::{apply_symmetry, dihedral_group, extract_patch, Patch, PatchCenter, Provenance, Symmetry};
use crate::data::raster::{window_fully_masked, Raster};
use crate::error::{Error, Result};
use crate::losses::bce;
use crate::models::detector::{forward_train, score_region, DetectorSpec, Region, PATCH_HALF, PATCH_SIZE};
use crate::models::ModelParams;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// `[height, width]` of each random negative window.
    pub window_size: [usize; 2],
    pub window_count: usize,
    pub batch_size: usize,
    /// `[positive, negative]` parts of each batch.
    pub pos_neg_ratio: [usize; 2],
    /// The hard pool holds this many times the number of examples needed.
    pub hard_pool_multiplier: usize,
    /// Rank candidates by loss; when off, examples are drawn uniformly.
    pub hard_mining: bool,
    /// Apply a random mirror symmetry to each selected positive.
    pub augment_positives: bool,
    pub augment_negatives: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            window_size: [37, 37],
            window_count: 100,
            batch_size: 256,
            pos_neg_ratio: [1, 3],
            hard_pool_multiplier: 2,
            hard_mining: true,
            augment_positives: true,
            augment_negatives: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let [h, w] = self.window_size;
        if h < PATCH_SIZE || w < PATCH_SIZE {
            return Err(Error::WindowTooSmall { height: h, width: w });
        }
        let parts = self.pos_neg_ratio[0] + self.pos_neg_ratio[1];
        if self.pos_neg_ratio.contains(&0) || self.batch_size == 0 || self.batch_size % parts != 0 {
            return Err(Error::Config(format!(
                "batch size {} cannot be split {}:{}",
                self.batch_size, self.pos_neg_ratio[0], self.pos_neg_ratio[1]
            )));
        }
        if self.window_count == 0 || self.hard_pool_multiplier == 0 {
            return Err(Error::Config("window_count and hard_pool_multiplier must be positive".into()));
        }
        Ok(())
    }

    /// `(positives, negatives)` per batch.
    pub fn batch_split(&self) -> (usize, usize) {
        let unit = self.batch_size / (self.pos_neg_ratio[0] + self.pos_neg_ratio[1]);
        (unit * self.pos_neg_ratio[0], unit * self.pos_neg_ratio[1])
    }

    pub fn candidates_per_window(&self) -> usize {
        (self.window_size[0] - 2 * PATCH_HALF) * (self.window_size[1] - 2 * PATCH_HALF)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub raster_id: String,
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

/// Draw `window_count` windows independently and uniformly over the
/// origins whose window is entirely evaluable.
pub fn sample_negative_windows<R: Rng + ?Sized>(raster: &Raster, config: &SamplerConfig, rng: &mut R) -> Result<Vec<Window>> {
    config.validate()?;
    let [h, w] = config.window_size;
    if h > raster.height || w > raster.width {
        return Err(Error::Unsatisfiable(format!(
            "{h}x{w} window does not fit raster {} ({}x{})",
            raster.id, raster.height, raster.width
        )));
    }
    let (rows, cols) = (raster.height - h + 1, raster.width - w + 1);
    let origins: Vec<(usize, usize)> = if raster.mask.is_none() {
        Vec::new()
    } else {
        let sat = raster.mask_integral();
        (0..rows * cols)
            .map(|i| (i / cols, i % cols))
            .filter(|&(r, c)| window_fully_masked(&sat, raster.width, r, c, h, w))
            .collect()
    };
    if raster.mask.is_some() && origins.is_empty() {
        return Err(Error::Unsatisfiable(format!(
            "no {h}x{w} window of raster {} lies entirely inside its mask",
            raster.id
        )));
    }
    Ok((0..config.window_count)
        .map(|_| {
            let (row, col) = if origins.is_empty() {
                (rng.random_range(0..rows), rng.random_range(0..cols))
            } else {
                origins[rng.random_range(0..origins.len())]
            };
            Window {
                raster_id: raster.id.clone(),
                row,
                col,
                height: h,
                width: w,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub center: PatchCenter,
    pub provenance: Provenance,
    /// Index into [`CandidatePool::generated`] for generated negatives.
    pub generated: Option<usize>,
    pub loss: Option<f64>,
}

impl Candidate {
    fn real(center: PatchCenter) -> Self {
        Candidate {
            center,
            provenance: Provenance::Real,
            generated: None,
            loss: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidatePool {
    pub positives: Vec<Candidate>,
    pub negatives: Vec<Candidate>,
    pub windows: Vec<Window>,
    pub generated: Vec<Patch>,
    /// Window candidates before overlapping centers were merged.
    pub raw_negative_count: usize,
}

impl CandidatePool {
    /// Positive centers plus every distinct center inside the windows.
    pub fn build(positives: Vec<PatchCenter>, windows: Vec<Window>) -> Self {
        let mut seen = std::collections::HashSet::new();
        let mut negatives = Vec::new();
        let mut raw = 0;
        for win in &windows {
            for r in win.row + PATCH_HALF..win.row + win.height - PATCH_HALF {
                for c in win.col + PATCH_HALF..win.col + win.width - PATCH_HALF {
                    raw += 1;
                    if seen.insert((win.raster_id.as_str(), r, c)) {
                        negatives.push(Candidate::real(PatchCenter {
                            raster_id: win.raster_id.clone(),
                            row: r,
                            col: c,
                        }));
                    }
                }
            }
        }
        CandidatePool {
            positives: positives.into_iter().map(Candidate::real).collect(),
            negatives,
            windows,
            generated: Vec::new(),
            raw_negative_count: raw,
        }
    }

    pub fn generated_count(&self) -> usize {
        self.negatives.iter().filter(|c| c.provenance == Provenance::Generated).count()
    }

    /// The candidate's patch values, `c x 25 x 25`.
    pub fn patch_values(&self, cand: &Candidate, rasters: &BTreeMap<String, Raster>) -> Result<Vec<f64>> {
        match cand.generated {
            Some(i) => Ok(self.generated[i].values.clone()),
            None => {
                let r = rasters
                    .get(&cand.center.raster_id)
                    .ok_or_else(|| Error::Integrity(format!("unknown raster {}", cand.center.raster_id)))?;
                Ok(extract_patch(r, cand.center.row, cand.center.col)?.values)
            }
        }
    }
}

/// Union of the pool with generated negatives; both provenances are
/// treated identically from here on.
pub fn merge_generated_negatives(mut pool: CandidatePool, generated: Vec<Patch>) -> CandidatePool {
    for p in generated {
        let idx = pool.generated.len();
        pool.negatives.push(Candidate {
            center: p.center.clone(),
            provenance: Provenance::Generated,
            generated: Some(idx),
            loss: None,
        });
        pool.generated.push(p);
    }
    pool
}

const SCORE_CHUNK: usize = 256;

/// Dropout-free train-mode scores (first output unit) for stacked patches.
pub fn score_patches(spec: &DetectorSpec, params: &ModelParams, patches: &Tensor) -> Result<Vec<f64>> {
    let n = patches.shape()[0];
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + SCORE_CHUNK).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let trace = forward_train::<rand_chacha::ChaCha8Rng>(spec, params, &patches.gather_outer(&idx), None)?;
        let k = spec.output_units;
        out.extend(trace.scores.data().chunks(k).map(|row| row[0]));
        start = end;
    }
    Ok(out)
}

fn stack_values(values: Vec<Vec<f64>>, channels: usize) -> Result<Tensor> {
    let n = values.len();
    Tensor::from_vec(&[n, channels, PATCH_SIZE, PATCH_SIZE], values.concat())
}

/// Attach the detector loss of every candidate (positives against label
/// 1, negatives against 0). Window candidates are scored tile by tile in
/// test mode; positives and generated patches in train mode, both without
/// dropout.
pub fn score_candidates(
    mut pool: CandidatePool,
    spec: &DetectorSpec,
    params: &ModelParams,
    rasters: &BTreeMap<String, Raster>,
) -> Result<CandidatePool> {
    let mut window_scores: HashMap<(String, usize, usize), f64> = HashMap::new();
    for win in &pool.windows {
        let r = rasters
            .get(&win.raster_id)
            .ok_or_else(|| Error::Integrity(format!("unknown raster {}", win.raster_id)))?;
        let tile = r.window_f64(win.row, win.col, win.height, win.width);
        let region = Region::valid(win.height, win.width);
        let map = score_region(spec, params, &tile, win.height, win.width, region);
        for i in 0..region.rows {
            for j in 0..region.cols {
                let key = (win.raster_id.clone(), win.row + PATCH_HALF + i, win.col + PATCH_HALF + j);
                window_scores.entry(key).or_insert(map.data()[i * region.cols + j]);
            }
        }
    }
    let channels = spec.in_channels;
    let mut patch_jobs: Vec<(bool, usize)> = Vec::new();
    let mut patch_values = Vec::new();
    for (i, cand) in pool.negatives.iter_mut().enumerate() {
        let key = (cand.center.raster_id.clone(), cand.center.row, cand.center.col);
        match (cand.generated, window_scores.get(&key)) {
            (None, Some(&s)) => cand.loss = Some(bce(s, 0.0)),
            _ => patch_jobs.push((false, i)),
        }
    }
    patch_jobs.extend((0..pool.positives.len()).map(|i| (true, i)));
    for &(positive, i) in &patch_jobs {
        let cand = if positive { &pool.positives[i] } else { &pool.negatives[i] };
        patch_values.push(pool.patch_values(cand, rasters)?);
    }
    if !patch_jobs.is_empty() {
        let scores = score_patches(spec, params, &stack_values(patch_values, channels)?)?;
        for (&(positive, i), s) in patch_jobs.iter().zip(scores) {
            if positive {
                pool.positives[i].loss = Some(bce(s, 1.0));
            } else {
                pool.negatives[i].loss = Some(bce(s, 0.0));
            }
        }
    }
    Ok(pool)
}

/// Indices chosen for one batch, with the symmetry applied to each.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub positives: Vec<(usize, Symmetry)>,
    pub negatives: Vec<(usize, Symmetry)>,
}

/// Indices of the `needed` examples: uniform over the top
/// `multiplier * needed` by loss (ties keep pool order), or uniform over
/// everything when `hard` is off.
fn pick<R: Rng + ?Sized>(cands: &[Candidate], needed: usize, multiplier: usize, hard: bool, rng: &mut R) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    if hard {
        if let Some(i) = cands.iter().position(|c| c.loss.is_none()) {
            return Err(Error::CannotComposeBatch(format!("candidate {i} has not been scored")));
        }
        order.sort_by(|&a, &b| {
            cands[b]
                .loss
                .partial_cmp(&cands[a].loss)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        order.truncate((multiplier * needed).min(cands.len()));
    }
    Ok(sample(rng, order.len(), needed).into_iter().map(|i| order[i]).collect())
}

fn random_symmetry<R: Rng + ?Sized>(on: bool, group: &[Symmetry], rng: &mut R) -> Symmetry {
    if on {
        group[rng.random_range(0..group.len())]
    } else {
        group[0]
    }
}

/// Choose the batch members. Positives are all used, padded by resampling
/// with replacement, when there are fewer than needed; otherwise they go
/// through the same ranking as negatives.
pub fn select_hard_batch<R: Rng + ?Sized>(pool: &CandidatePool, config: &SamplerConfig, rng: &mut R) -> Result<Selection> {
    config.validate()?;
    let (npos, nneg) = config.batch_split();
    if pool.positives.is_empty() {
        return Err(Error::CannotComposeBatch("no positive examples".into()));
    }
    if pool.negatives.len() < nneg {
        return Err(Error::CannotComposeBatch(format!(
            "{} negative candidates for {nneg} batch slots",
            pool.negatives.len()
        )));
    }
    let group = dihedral_group();
    let positives: Vec<usize> = if pool.positives.len() < npos {
        let mut all: Vec<usize> = (0..pool.positives.len()).collect();
        while all.len() < npos {
            all.push(rng.random_range(0..pool.positives.len()));
        }
        all
    } else {
        pick(&pool.positives, npos, config.hard_pool_multiplier, config.hard_mining, rng)?
    };
    let positives = positives
        .into_iter()
        .enumerate()
        .map(|(slot, i)| {
            // Resampled duplicates are always mirrored to differ from the original.
            let padded = slot >= pool.positives.len();
            let m = if padded && !config.augment_positives {
                group[rng.random_range(1..group.len())]
            } else {
                random_symmetry(config.augment_positives, &group, rng)
            };
            (i, m)
        })
        .collect();
    let negatives = pick(&pool.negatives, nneg, config.hard_pool_multiplier, config.hard_mining, rng)?
        .into_iter()
        .map(|i| (i, random_symmetry(config.augment_negatives, &group, rng)))
        .collect();
    Ok(Selection { positives, negatives })
}

/// A stacked training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchBatch {
    /// `[n, c, 25, 25]`, positives first.
    pub inputs: Tensor,
    pub labels: Vec<u8>,
    pub provenance: Vec<Provenance>,
    pub centers: Vec<PatchCenter>,
}

impl PatchBatch {
    pub fn generated_fraction_of_negatives(&self) -> f64 {
        let neg: Vec<_> = self.labels.iter().zip(&self.provenance).filter(|(l, _)| **l == 0).collect();
        if neg.is_empty() {
            return 0.0;
        }
        neg.iter().filter(|(_, p)| **p == Provenance::Generated).count() as f64 / neg.len() as f64
    }
}

pub fn compose_batch(
    pool: &CandidatePool,
    selection: &Selection,
    rasters: &BTreeMap<String, Raster>,
    channels: usize,
) -> Result<PatchBatch> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut provenance = Vec::new();
    let mut centers = Vec::new();
    let groups = [(&pool.positives, &selection.positives, 1u8), (&pool.negatives, &selection.negatives, 0u8)];
    for (cands, chosen, label) in groups {
        for &(i, m) in chosen {
            let cand = &cands[i];
            let patch = Patch {
                channels,
                values: pool.patch_values(cand, rasters)?,
                label: label as usize,
                center: cand.center.clone(),
                provenance: cand.provenance,
            };
            values.push(apply_symmetry(&patch, m).values);
            labels.push(label);
            provenance.push(cand.provenance);
            centers.push(cand.center.clone());
        }
    }
    Ok(PatchBatch {
        inputs: stack_values(values, channels)?,
        labels,
        provenance,
        centers,
    })
}

/// Per-iteration sampler record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerTelemetry {
    pub candidates: usize,
    pub unique_candidates: usize,
    pub generated_candidates: usize,
    /// Min, 25%, median, 75% and max negative loss.
    pub loss_quantiles: Option<[f64; 5]>,
    pub batch_generated: usize,
    pub batch_negatives: usize,
    pub generated_fraction: f64,
}

pub fn quantiles(values: &[f64]) -> Option<[f64; 5]> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let at = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
    Some([at(0.0), at(0.25), at(0.5), at(0.75), at(1.0)])
}

pub fn telemetry(pool: &CandidatePool, batch: &PatchBatch) -> SamplerTelemetry {
    let losses: Vec<f64> = pool.negatives.iter().filter_map(|c| c.loss).collect();
    let batch_negatives = batch.labels.iter().filter(|&&l| l == 0).count();
    let batch_generated = batch
        .labels
        .iter()
        .zip(&batch.provenance)
        .filter(|(l, p)| **l == 0 && **p == Provenance::Generated)
        .count();
    SamplerTelemetry {
        candidates: pool.raw_negative_count + pool.generated.len(),
        unique_candidates: pool.negatives.len(),
        generated_candidates: pool.generated_count(),
        loss_quantiles: quantiles(&losses),
        batch_generated,
        batch_negatives,
        generated_fraction: batch.generated_fraction_of_negatives(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::init_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn raster(h: usize, w: usize) -> Raster {
        Raster::new("neg", 2, h, w, (0..2 * h * w).map(|i| ((i * 7919) % 101) as f32 / 50.0).collect()).unwrap()
    }

    fn center(row: usize) -> PatchCenter {
        PatchCenter {
            raster_id: "neg".into(),
            row,
            col: 0,
        }
    }

    fn scored_pool(neg_losses: &[f64], positives: usize) -> CandidatePool {
        CandidatePool {
            positives: (0..positives)
                .map(|i| Candidate {
                    loss: Some(0.5),
                    ..Candidate::real(center(10_000 + i))
                })
                .collect(),
            negatives: neg_losses
                .iter()
                .enumerate()
                .map(|(i, &l)| Candidate {
                    loss: Some(l),
                    ..Candidate::real(center(i))
                })
                .collect(),
            ..CandidatePool::default()
        }
    }

    #[test]
    fn window_arithmetic() {
        let r = raster(600, 600);
        let cfg = SamplerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let wins = sample_negative_windows(&r, &cfg, &mut rng).unwrap();
        assert_eq!(wins.len(), 100);
        let pool = CandidatePool::build(vec![], wins.clone());
        assert_eq!(pool.raw_negative_count, 16_900);
        let again = sample_negative_windows(&r, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(again, wins);

        for (size, count, expect) in [(153, 1, 16_641), (65, 10, 16_810), (37, 100, 16_900)] {
            let cfg = SamplerConfig {
                window_size: [size, size],
                window_count: count,
                ..SamplerConfig::default()
            };
            let wins = sample_negative_windows(&r, &cfg, &mut rng).unwrap();
            assert_eq!(CandidatePool::build(vec![], wins).raw_negative_count, expect);
        }
    }

    #[test]
    fn masked_windows_stay_inside_mask() {
        let mut mask = vec![true; 60 * 80];
        for r in 0..60 {
            for c in 0..30 {
                mask[r * 80 + c] = false;
            }
        }
        let r = raster(60, 80).with_mask(mask).unwrap();
        let cfg = SamplerConfig {
            window_count: 50,
            ..SamplerConfig::default()
        };
        for w in sample_negative_windows(&r, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap() {
            assert!(w.col >= 30);
        }
        let big = SamplerConfig {
            window_size: [55, 55],
            ..cfg
        };
        assert!(matches!(
            sample_negative_windows(&r, &big, &mut ChaCha8Rng::seed_from_u64(3)),
            Err(Error::Unsatisfiable(_))
        ));
    }

    #[test]
    fn forced_hard_selection() {
        let mut losses = vec![0.0; 1000];
        for l in losses.iter_mut().take(192) {
            *l = 10.0;
        }
        let pool = scored_pool(&losses, 64);
        let cfg = SamplerConfig {
            hard_pool_multiplier: 1,
            ..SamplerConfig::default()
        };
        let sel = select_hard_batch(&pool, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut idx: Vec<usize> = sel.negatives.iter().map(|p| p.0).collect();
        idx.sort_unstable();
        assert_eq!(idx, (0..192).collect::<Vec<_>>());
        assert_eq!(sel.positives.len(), 64);
    }

    #[test]
    fn monotone_hardness() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let losses: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let pool = scored_pool(&losses, 10);
        let cfg = SamplerConfig::default();
        let sel = select_hard_batch(&pool, &cfg, &mut rng).unwrap();
        let mut sorted = losses.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let cutoff = sorted[384];
        let min_selected = sel.negatives.iter().map(|p| losses[p.0]).fold(f64::INFINITY, f64::min);
        assert!(min_selected >= cutoff);
        assert_eq!(sel.positives.len(), 64);
    }

    #[test]
    fn empty_positive_set_cannot_compose() {
        let pool = scored_pool(&[1.0; 500], 0);
        assert!(matches!(
            select_hard_batch(&pool, &SamplerConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::CannotComposeBatch(_))
        ));
    }

    #[test]
    fn scoring_is_deterministic_and_pointwise() {
        let r = raster(60, 60);
        let rasters = BTreeMap::from([("neg".to_string(), r.clone())]);
        let spec = DetectorSpec::new(2).with_widths(2, 4);
        let params = init_params(&spec, 4);
        let cfg = SamplerConfig {
            window_count: 2,
            ..SamplerConfig::default()
        };
        let wins = sample_negative_windows(&r, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let pos = vec![PatchCenter {
            raster_id: "neg".into(),
            row: 30,
            col: 30,
        }];
        let pool = CandidatePool::build(pos, wins);
        let a = score_candidates(pool.clone(), &spec, &params, &rasters).unwrap();
        let b = score_candidates(pool, &spec, &params, &rasters).unwrap();
        assert_eq!(a, b);
        let c = &a.negatives[5];
        let p = extract_patch(&r, c.center.row, c.center.col).unwrap();
        let s = score_patches(&spec, &params, &Tensor::from_vec(&[1, 2, 25, 25], p.values).unwrap()).unwrap()[0];
        assert!((c.loss.unwrap() - bce(s, 0.0)).abs() < 1e-9);
    }

    #[test]
    fn generated_negatives_dominate_when_harder() {
        let mut pool = scored_pool(&[0.1; 100], 64);
        let generated: Vec<Patch> = (0..100)
            .map(|i| Patch {
                channels: 1,
                values: vec![0.0; 625],
                label: 0,
                center: center(i),
                provenance: Provenance::Generated,
            })
            .collect();
        pool = merge_generated_negatives(pool, generated);
        for c in pool.negatives.iter_mut().filter(|c| c.provenance == Provenance::Generated) {
            c.loss = Some(5.0);
        }
        let cfg = SamplerConfig {
            batch_size: 64,
            ..SamplerConfig::default()
        };
        let sel = select_hard_batch(&pool, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let generated = sel
            .negatives
            .iter()
            .filter(|p| pool.negatives[p.0].provenance == Provenance::Generated)
            .count();
        assert_eq!(sel.negatives.len(), 48);
        assert_eq!(generated, 48);
        assert_eq!(merge_generated_negatives(pool.clone(), vec![]), pool);
    }

    #[test]
    fn quantiles_of_known_values() {
        let q = quantiles(&[4.0, 0.0, 2.0, 1.0, 3.0]).unwrap();
        assert_eq!(q, [0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!(quantiles(&[]).is_none());
    }
}

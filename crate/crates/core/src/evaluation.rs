//! Detection and classification metrics.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::labels::LabelSet;
use crate::data::patch::Patch;
use crate::error::{Error, Result};
use crate::inference::ScoreMap;
use crate::models::detector::{forward_train, DetectorSpec};
use crate::models::ModelParams;
use crate::tensor::Tensor;

/// Detection-rate targets summarized by default.
pub const NDPI_TARGETS: [f64; 3] = [0.25, 0.5, 0.75];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub detection_rate: f64,
    pub ndpi: f64,
    pub fpr: f64,
}

/// Points in ascending threshold order, so both rates fall along the list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCurve {
    pub points: Vec<CurvePoint>,
    pub auc: f64,
    /// `(detection rate, NDPI)` pairs; `None` when the rate is never reached.
    pub ndpi_at: Vec<(f64, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub auc: f64,
    pub ndpi_at: Vec<(f64, Option<f64>)>,
    pub positives: usize,
    pub negatives: usize,
    pub rasters: usize,
}

/// One scored pixel: its score, whether it is a labeled positive and
/// whether it counts as a negative for the false-positive rate.
struct Scored {
    score: f64,
    positive: bool,
    negative: bool,
}

/// Sweep thresholds from the highest score down; `images` divides the
/// detection count.
fn sweep(mut items: Vec<Scored>, images: usize) -> Result<EvalCurve> {
    let pos = items.iter().filter(|s| s.positive).count();
    let neg = items.iter().filter(|s| s.negative).count();
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "need both classes, got {pos} positives and {neg} negatives"
        )));
    }
    items.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut points = Vec::new();
    let (mut tp, mut fp, mut det) = (0usize, 0usize, 0usize);
    let mut i = 0;
    while i < items.len() {
        let t = items[i].score;
        while i < items.len() && items[i].score == t {
            tp += items[i].positive as usize;
            fp += items[i].negative as usize;
            det += 1;
            i += 1;
        }
        points.push(CurvePoint {
            threshold: t,
            detection_rate: tp as f64 / pos as f64,
            ndpi: det as f64 / images as f64,
            fpr: fp as f64 / neg as f64,
        });
    }
    let mut auc = 0.0;
    let (mut x0, mut y0) = (0.0, 0.0);
    for p in &points {
        auc += (p.fpr - x0) * (p.detection_rate + y0) / 2.0;
        (x0, y0) = (p.fpr, p.detection_rate);
    }
    let ndpi_at = NDPI_TARGETS.iter().map(|&r| (r, ndpi_at_rate(&points, r))).collect();
    points.reverse();
    Ok(EvalCurve { points, auc, ndpi_at })
}

/// Smallest NDPI whose detection rate reaches `rate`, interpolated
/// linearly from the preceding point (starting at the origin).
/// `points` must be in descending threshold order.
fn ndpi_at_rate(points: &[CurvePoint], rate: f64) -> Option<f64> {
    let (mut d0, mut n0) = (0.0, 0.0);
    for p in points {
        if p.detection_rate >= rate {
            if p.detection_rate == d0 {
                return Some(p.ndpi.min(n0));
            }
            return Some(n0 + (rate - d0) / (p.detection_rate - d0) * (p.ndpi - n0));
        }
        (d0, n0) = (p.detection_rate, p.ndpi);
    }
    None
}

/// Classic ROC over labeled scores (label 1 positive, 0 negative).
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<EvalCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let items = scores
        .iter()
        .zip(labels)
        .map(|(&score, &l)| match l {
            0 | 1 => Ok(Scored {
                score,
                positive: l == 1,
                negative: l == 0,
            }),
            _ => Err(Error::Label {
                label: l as usize,
                classes: 2,
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    sweep(items, 1)
}

/// Fraction of (positive, negative) pairs ranked correctly, ties worth half.
pub fn pair_counting_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 0).map(|(&s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::UndefinedMetric("need both classes".into()));
    }
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(wins / (pos.len() * neg.len()) as f64)
}

/// Detection rate against detections per image over whole score maps.
///
/// Detection rate counts labeled positive pixels that are evaluable. NDPI
/// counts every evaluable pixel over the threshold and averages over all
/// maps. The false-positive rate (and AUC) uses the evaluable pixels of
/// the negative rasters, or, when no map is a negative raster, every
/// unlabeled evaluable pixel.
pub fn roc_variation_curve(maps: &[ScoreMap], labels: &LabelSet) -> Result<EvalCurve> {
    if maps.is_empty() {
        return Err(Error::UndefinedMetric("no score maps".into()));
    }
    let negative_ids: BTreeSet<&str> = labels.negative_raster_ids.iter().map(String::as_str).collect();
    let have_negative_maps = maps.iter().any(|m| negative_ids.contains(m.id.as_str()));
    let mut items = Vec::new();
    for map in maps {
        let positives: BTreeSet<(usize, usize)> = labels
            .positives
            .get(&map.id)
            .map(|v| v.iter().copied().collect())
            .unwrap_or_default();
        let is_negative_map = negative_ids.contains(map.id.as_str());
        for r in 0..map.height {
            for c in 0..map.width {
                let Some(s) = map.get(r, c) else { continue };
                let positive = positives.contains(&(r, c));
                let negative = if have_negative_maps {
                    is_negative_map
                } else {
                    !positive
                };
                items.push(Scored {
                    score: s as f64,
                    positive,
                    negative,
                });
            }
        }
    }
    if !items.iter().any(|s| s.positive) {
        return Err(Error::UndefinedMetric("no evaluable labeled positives in the score maps".into()));
    }
    sweep(items, maps.len())
}

impl EvalCurve {
    pub fn summary(&self, positives: usize, negatives: usize, rasters: usize) -> EvalSummary {
        EvalSummary {
            auc: self.auc,
            ndpi_at: self.ndpi_at.clone(),
            positives,
            negatives,
            rasters,
        }
    }

    /// `threshold dr ndpi fpr`, one point per line.
    pub fn to_columns(&self) -> String {
        let mut out = String::from("# threshold detection_rate ndpi fpr\n");
        for p in &self.points {
            writeln!(out, "{} {} {} {}", p.threshold, p.detection_rate, p.ndpi, p.fpr).expect("string write");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_columns()).map_err(|e| Error::io(path, e))
    }
}

/// Overall accuracy in percent across repeated splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsiAccuracy {
    pub per_split: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; zero for a single split.
    pub std: f64,
}

/// `runs` holds `(predictions, labels)` per split.
pub fn hsi_accuracy(runs: &[(Vec<usize>, Vec<usize>)]) -> Result<HsiAccuracy> {
    if runs.is_empty() {
        return Err(Error::UndefinedMetric("no evaluation splits".into()));
    }
    let mut per_split = Vec::with_capacity(runs.len());
    for (pred, truth) in runs {
        if pred.len() != truth.len() {
            return Err(Error::Shape(format!("{} predictions for {} labels", pred.len(), truth.len())));
        }
        if truth.is_empty() {
            return Err(Error::UndefinedMetric("empty test set".into()));
        }
        let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
        per_split.push(100.0 * correct as f64 / truth.len() as f64);
    }
    let n = per_split.len() as f64;
    let mean = per_split.iter().sum::<f64>() / n;
    let std = if per_split.len() > 1 {
        (per_split.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(HsiAccuracy { per_split, mean, std })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureGroup {
    Positive,
    RealNegative,
    GeneratedNegative,
}

impl FeatureGroup {
    pub fn tag(self) -> &'static str {
        match self {
            FeatureGroup::Positive => "positive",
            FeatureGroup::RealNegative => "real-negative",
            FeatureGroup::GeneratedNegative => "generated-negative",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub group: FeatureGroup,
    pub features: Vec<f64>,
}

/// Post-activation layer-8 features of each patch, dropout off.
pub fn export_features(
    spec: &DetectorSpec,
    params: &ModelParams,
    patches: &[(Patch, FeatureGroup)],
) -> Result<Vec<FeatureRow>> {
    let mut rows = Vec::with_capacity(patches.len());
    for chunk in patches.chunks(256) {
        let c = spec.in_channels;
        let x = Tensor::from_vec(
            &[chunk.len(), c, 25, 25],
            chunk.iter().flat_map(|(p, _)| p.values.iter().copied()).collect(),
        )?;
        let trace = forward_train::<rand_chacha::ChaCha8Rng>(spec, params, &x, None)?;
        for (i, (_, group)) in chunk.iter().enumerate() {
            rows.push(FeatureRow {
                group: *group,
                features: trace.layer8().outer(i).to_vec(),
            });
        }
    }
    Ok(rows)
}

/// `group f0 f1 ...`, one patch per line.
pub fn features_to_columns(rows: &[FeatureRow]) -> String {
    let width = rows.first().map_or(0, |r| r.features.len());
    let mut out = String::from("# group");
    for i in 0..width {
        write!(out, " f{i}").expect("string write");
    }
    out.push('\n');
    for r in rows {
        out.push_str(r.group.tag());
        for v in &r.features {
            write!(out, " {v}").expect("string write");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn separated_scores_give_unit_auc() {
        let c = roc_curve(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(c.auc, 1.0);
    }

    #[test]
    fn four_point_example() {
        let c = roc_curve(&[0.9, 0.8, 0.3, 0.1], &[1, 0, 1, 0]).unwrap();
        assert!((c.auc - 0.75).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(roc_curve(&[0.1, 0.2], &[1, 1]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(roc_curve(&[0.1, 0.2], &[0, 2]), Err(Error::Label { .. })));
    }

    fn micro_map() -> (ScoreMap, LabelSet) {
        // 4 positives; threshold 0.5 catches two of them and 8 other pixels.
        let mut scores = vec![0.1f32; 100];
        for s in scores.iter_mut().take(8) {
            *s = 0.6;
        }
        scores[50] = 0.9;
        scores[51] = 0.9;
        scores[60] = 0.2;
        scores[61] = 0.3;
        scores[99] = f32::NAN;
        let map = ScoreMap {
            id: "a".into(),
            height: 10,
            width: 10,
            scores,
        };
        let mut labels = LabelSet::default();
        labels.positives.insert("a".into(), vec![(5, 0), (5, 1), (6, 0), (6, 1)]);
        (map, labels)
    }

    #[test]
    fn hand_counted_variation_point() {
        let (map, labels) = micro_map();
        let c = roc_variation_curve(&[map], &labels).unwrap();
        let p = c.points.iter().find(|p| p.threshold == 0.6f32 as f64).unwrap();
        assert_eq!(p.detection_rate, 0.5);
        assert_eq!(p.ndpi, 10.0);
        let all = c.points.first().unwrap();
        assert_eq!(all.detection_rate, 1.0);
        assert_eq!(all.ndpi, 99.0);
        // dr 0.5 is first reached at ndpi 2 (the two 0.9 pixels).
        assert_eq!(c.ndpi_at[1], (0.5, Some(2.0)));
        // dr 0.25 lies halfway to (0.5, 2) from the origin.
        assert_eq!(c.ndpi_at[0], (0.25, Some(1.0)));
    }

    #[test]
    fn variation_curve_without_positives_is_undefined() {
        let (map, _) = micro_map();
        assert!(matches!(
            roc_variation_curve(&[map], &LabelSet::default()),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn accuracy_mean_and_spread() {
        let a = hsi_accuracy(&[(vec![0, 1, 2], vec![0, 1, 2])]).unwrap();
        assert_eq!((a.mean, a.std), (100.0, 0.0));
        let b = hsi_accuracy(&[(vec![0, 0, 1, 1], vec![0, 1, 1, 0])]).unwrap();
        assert_eq!(b.mean, 50.0);
        let c = hsi_accuracy(&[(vec![0, 0], vec![0, 0]), (vec![0, 1], vec![0, 0])]).unwrap();
        assert_eq!(c.mean, 75.0);
        assert!((c.std - (2.0f64 * 625.0).sqrt()).abs() < 1e-12);
        assert!(hsi_accuracy(&[(vec![], vec![])]).is_err());
    }

    proptest! {
        #[test]
        fn trapezoid_matches_pair_counting(
            raw in proptest::collection::vec((0u32..50, 0u8..2), 2..200)
        ) {
            let scores: Vec<f64> = raw.iter().map(|r| r.0 as f64 / 50.0).collect();
            let labels: Vec<u8> = raw.iter().map(|r| r.1).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let c = roc_curve(&scores, &labels).unwrap();
            let oracle = pair_counting_auc(&scores, &labels).unwrap();
            prop_assert!((c.auc - oracle).abs() < 1e-9);
            for w in c.points.windows(2) {
                prop_assert!(w[0].threshold < w[1].threshold);
                prop_assert!(w[0].detection_rate >= w[1].detection_rate);
                prop_assert!(w[0].ndpi >= w[1].ndpi);
            }
        }

        #[test]
        fn accuracy_ignores_pixel_order(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..50), rot in 0usize..50) {
            let (p, t): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let k = rot % pairs.len();
            let mut p2 = p.clone();
            let mut t2 = t.clone();
            p2.rotate_left(k);
            t2.rotate_left(k);
            let a = hsi_accuracy(&[(p, t)]).unwrap();
            let b = hsi_accuracy(&[(p2, t2)]).unwrap();
            prop_assert_eq!(a.mean, b.mean);
        }
    }
}

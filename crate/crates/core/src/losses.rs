//! Training objectives.
//!
//! All losses are cross-entropies on sigmoid probabilities. Probabilities are
//! clamped to `[CLAMP_EPS, 1 - CLAMP_EPS]` before taking logs; every clamp is
//! counted in [`LossValue::clamped`].

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CLAMP_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    /// Mean of `per_example`.
    pub scalar: f64,
    pub per_example: Vec<f64>,
    /// Number of probabilities that hit the clamp.
    pub clamped: usize,
}

impl LossValue {
    fn from_per_example(per_example: Vec<f64>, clamped: usize) -> Self {
        let scalar = if per_example.is_empty() {
            0.0
        } else {
            per_example.iter().sum::<f64>() / per_example.len() as f64
        };
        if clamped > 0 {
            log::debug!("{clamped} probabilities clamped to [{CLAMP_EPS}, 1 - {CLAMP_EPS}]");
        }
        LossValue {
            scalar,
            per_example,
            clamped,
        }
    }
}

fn clamp(s: f64) -> (f64, bool) {
    if s < CLAMP_EPS {
        (CLAMP_EPS, true)
    } else if s > 1.0 - CLAMP_EPS {
        (1.0 - CLAMP_EPS, true)
    } else {
        (s, false)
    }
}

/// Binary cross-entropy of one probability against a target in `[0, 1]`.
pub fn bce(score: f64, target: f64) -> f64 {
    let (s, _) = clamp(score);
    -(target * s.ln() + (1.0 - target) * (1.0 - s).ln())
}

fn bce_batch(scores: &[f64], targets: impl Iterator<Item = f64>) -> (Vec<f64>, usize) {
    let mut clamped = 0;
    let losses = scores
        .iter()
        .zip(targets)
        .map(|(&s, y)| {
            let (c, hit) = clamp(s);
            clamped += hit as usize;
            -(y * c.ln() + (1.0 - y) * (1.0 - c).ln())
        })
        .collect();
    (losses, clamped)
}

fn check_binary(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Label {
            label: bad as usize,
            classes: 2,
        });
    }
    Ok(())
}

/// Mean binary cross-entropy of detector scores against 0/1 labels.
pub fn detector_loss(scores: &[f64], labels: &[u8]) -> Result<LossValue> {
    check_binary(scores, labels)?;
    let (per, clamped) = bce_batch(scores, labels.iter().map(|&l| l as f64));
    Ok(LossValue::from_per_example(per, clamped))
}

/// `d detector_loss.scalar / d scores`. Zero where the clamp is active.
pub fn detector_loss_grad(scores: &[f64], labels: &[u8]) -> Result<Vec<f64>> {
    check_binary(scores, labels)?;
    let n = scores.len() as f64;
    Ok(scores
        .iter()
        .zip(labels)
        .map(|(&s, &l)| {
            let (c, hit) = clamp(s);
            if hit {
                0.0
            } else {
                let y = l as f64;
                (-y / c + (1.0 - y) / (1.0 - c)) / n
            }
        })
        .collect())
}

/// Gradient of the mean sigmoid cross-entropy with respect to the logits,
/// `(sigmoid(z) - y) / n`. This is what training backpropagates; it stays
/// informative where the probability-domain gradient is clamped to zero.
pub fn logit_grad(scores: &[f64], targets: &[f64], n: usize) -> Vec<f64> {
    scores.iter().zip(targets).map(|(s, y)| (s - y) / n as f64).collect()
}

fn sum_paired(a: LossValue, b: LossValue) -> LossValue {
    let per = a.per_example.iter().zip(&b.per_example).map(|(x, y)| x + y).collect();
    LossValue::from_per_example(per, a.clamped + b.clamped)
}

fn check_paired(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Shape("loss needs non-empty score lists".into()));
    }
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "paired score lists differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Discriminator objective: real patches scored against 1, their generated
/// counterparts against 0. `per_example[i]` pairs real `i` with generated `i`.
pub fn discriminator_loss(real_scores: &[f64], generated_scores: &[f64]) -> Result<LossValue> {
    check_paired(real_scores, generated_scores)?;
    let real = detector_loss(real_scores, &vec![1; real_scores.len()])?;
    let fake = detector_loss(generated_scores, &vec![0; generated_scores.len()])?;
    Ok(sum_paired(real, fake))
}

/// Generator objective: generated negatives should be scored positive by
/// the detector and real by the discriminator.
pub fn hng_loss(detector_scores: &[f64], discriminator_scores: &[f64]) -> Result<LossValue> {
    check_paired(detector_scores, discriminator_scores)?;
    let det = detector_loss(detector_scores, &vec![1; detector_scores.len()])?;
    let disc = detector_loss(discriminator_scores, &vec![1; discriminator_scores.len()])?;
    Ok(sum_paired(det, disc))
}

fn check_categorical(scores: &Tensor, labels: &[usize]) -> Result<(usize, usize)> {
    if scores.shape().len() != 2 {
        return Err(Error::Shape(format!("category scores must be [n, k], got {:?}", scores.shape())));
    }
    let (n, k) = scores.dims2();
    if n != labels.len() {
        return Err(Error::Shape(format!("{n} score rows vs {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Label { label: bad, classes: k });
    }
    Ok((n, k))
}

/// Per-class sigmoid cross-entropy against one-hot labels, summed over
/// classes and averaged over examples.
pub fn hsi_detector_loss(scores: &Tensor, labels: &[usize]) -> Result<LossValue> {
    let (_, k) = check_categorical(scores, labels)?;
    let mut clamped = 0;
    let per = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let row = &scores.data()[i * k..(i + 1) * k];
            let (losses, c) = bce_batch(row, (0..k).map(|j| (j == label) as u8 as f64));
            clamped += c;
            losses.iter().sum()
        })
        .collect();
    Ok(LossValue::from_per_example(per, clamped))
}

/// `d hsi_detector_loss.scalar / d scores`, same shape as `scores`.
pub fn hsi_detector_loss_grad(scores: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (n, k) = check_categorical(scores, labels)?;
    let mut g = Tensor::zeros(&[n, k]);
    for (i, &label) in labels.iter().enumerate() {
        for j in 0..k {
            let (c, hit) = clamp(scores.data()[i * k + j]);
            if !hit {
                let y = (j == label) as u8 as f64;
                g.data_mut()[i * k + j] = (-y / c + (1.0 - y) / (1.0 - c)) / n as f64;
            }
        }
    }
    Ok(g)
}

/// Loss of one example's per-class scores under each candidate label.
pub fn category_losses(score_row: &[f64]) -> Vec<f64> {
    let base: Vec<(f64, f64)> = score_row.iter().map(|&s| (bce(s, 0.0), bce(s, 1.0))).collect();
    let total_neg: f64 = base.iter().map(|b| b.0).sum();
    base.iter().map(|(neg, pos)| total_neg - neg + pos).collect()
}

/// Adversarial target for a hard example generator: the highest-loss
/// category other than the true one, lowest index on ties.
pub fn heg_adversarial_label(losses_per_category: &[f64], true_category: usize) -> Result<usize> {
    if losses_per_category.len() < 2 {
        return Err(Error::NoAdversary);
    }
    if true_category >= losses_per_category.len() {
        return Err(Error::Label {
            label: true_category,
            classes: losses_per_category.len(),
        });
    }
    let mut best: Option<usize> = None;
    for (i, &l) in losses_per_category.iter().enumerate() {
        if i == true_category {
            continue;
        }
        match best {
            Some(b) if losses_per_category[b] >= l => {}
            _ => best = Some(i),
        }
    }
    Ok(best.expect("at least one other category"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn saturated_correct_score_has_near_zero_loss() {
        let l = detector_loss(&[1.0 - CLAMP_EPS], &[1]).unwrap();
        assert!(l.scalar < 1e-6);
    }

    #[test]
    fn half_score_costs_ln2_either_way() {
        let l = detector_loss(&[0.5, 0.5], &[0, 1]).unwrap();
        assert!((l.scalar - LN_2).abs() < 1e-12);
        assert_eq!(l.per_example.len(), 2);
    }

    #[test]
    fn exact_zero_and_one_are_clamped_and_counted() {
        let l = detector_loss(&[0.0, 1.0], &[1, 0]).unwrap();
        assert_eq!(l.clamped, 2);
        assert!(l.scalar.is_finite());
        assert!((l.scalar + (CLAMP_EPS).ln()).abs() < 1e-6);
    }

    #[test]
    fn non_binary_label_is_rejected() {
        assert!(matches!(detector_loss(&[0.3], &[2]), Err(Error::Label { .. })));
    }

    #[test]
    fn perfect_discriminator_and_coin_flip() {
        let l = discriminator_loss(&[1.0 - CLAMP_EPS], &[CLAMP_EPS]).unwrap();
        assert!(l.scalar < 1e-6);
        let l = discriminator_loss(&[0.5; 4], &[0.5; 4]).unwrap();
        assert!((l.scalar - 2.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn discriminator_loss_needs_scores() {
        assert!(discriminator_loss(&[], &[]).is_err());
    }

    #[test]
    fn generator_success_and_coin_flip() {
        let l = hng_loss(&[1.0 - CLAMP_EPS; 3], &[1.0 - CLAMP_EPS; 3]).unwrap();
        assert!(l.scalar < 1e-6);
        let l = hng_loss(&[0.5; 3], &[0.5; 3]).unwrap();
        assert!((l.scalar - 2.0 * LN_2).abs() < 1e-12);
        assert!(hng_loss(&[0.5; 3], &[0.5; 2]).is_err());
    }

    #[test]
    fn heg_examples() {
        assert_eq!(heg_adversarial_label(&[0.1, 2.0, 0.5], 1).unwrap(), 2);
        assert_eq!(heg_adversarial_label(&[5.0, 0.1], 0).unwrap(), 1);
        assert_eq!(heg_adversarial_label(&[1.0, 1.0, 1.0], 0).unwrap(), 1);
        assert!(matches!(heg_adversarial_label(&[1.0], 0), Err(Error::NoAdversary)));
    }

    #[test]
    fn hsi_loss_edge_cases() {
        let perfect = Tensor::from_vec(&[1, 3], vec![CLAMP_EPS, 1.0 - CLAMP_EPS, CLAMP_EPS]).unwrap();
        assert!(hsi_detector_loss(&perfect, &[1]).unwrap().scalar < 1e-5);
        let uniform = Tensor::full(&[2, 4], 0.5);
        let l = hsi_detector_loss(&uniform, &[0, 3]).unwrap();
        assert!((l.scalar - 4.0 * LN_2).abs() < 1e-12);
        assert!(matches!(hsi_detector_loss(&uniform, &[4, 0]), Err(Error::Label { .. })));
    }

    #[test]
    fn category_losses_match_direct_sum() {
        let row = [0.2, 0.7, 0.4];
        let got = category_losses(&row);
        for (l, g) in got.iter().enumerate() {
            let want: f64 = row.iter().enumerate().map(|(j, &s)| bce(s, (j == l) as u8 as f64)).sum();
            assert!((g - want).abs() < 1e-12);
        }
    }
}

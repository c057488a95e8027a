//! Per-triplet action-unit relevance and patch geometry.
//!
//! Within a triplet (anchor and positive share a pain level, the negative
//! does not), an AU is *relevant* when it barely moves between anchor and
//! positive (`|Va - Vp| < alpha`) but moves by at least `alpha` between
//! anchor and negative. Every other AU is *irrelevant*. Relevant AUs get a
//! weight proportional to their anchor/negative gap.

use serde::{Deserialize, Serialize};

use crate::data::Landmark;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default patch half-width: patches are `(2 * half + 1)^2` = 11x11 pixels.
pub const DEFAULT_PATCH_HALF: usize = 5;

/// Frame indices of an (anchor, positive, negative) triple and the level
/// gap between anchor and negative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
    pub gap: u8,
}

impl Triplet {
    pub fn new(anchor: usize, positive: usize, negative: usize, levels: (u8, u8, u8)) -> Result<Self> {
        let (la, lp, ln) = levels;
        if la != lp || la == ln {
            return Err(Error::Range(format!(
                "levels ({la}, {lp}, {ln}) do not form a triplet"
            )));
        }
        Ok(Self {
            anchor,
            positive,
            negative,
            gap: la.abs_diff(ln),
        })
    }
}

/// AU indices (positions in the dataset's AU list) split into the relevant
/// set A with weights, and the irrelevant set B.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AuPartition {
    pub set_a: Vec<usize>,
    /// Parallel to `set_a`.
    pub weights: Vec<f64>,
    pub set_b: Vec<usize>,
}

impl AuPartition {
    pub fn n_b(&self) -> usize {
        self.set_b.len()
    }

    pub fn weight_of(&self, au: usize) -> Option<f64> {
        self.set_a
            .iter()
            .position(|&k| k == au)
            .map(|i| self.weights[i])
    }
}

/// Relevance threshold: one scalar, optionally overridden per AU index.
#[derive(Clone, Debug, PartialEq)]
pub struct Thresholds<'a> {
    pub default: f64,
    pub per_au: &'a [Option<f64>],
}

impl Thresholds<'_> {
    pub fn scalar(alpha: f64) -> Thresholds<'static> {
        Thresholds {
            default: alpha,
            per_au: &[],
        }
    }

    fn get(&self, k: usize) -> f64 {
        self.per_au.get(k).copied().flatten().unwrap_or(self.default)
    }
}

pub fn partition_aus(va: &[f64], vp: &[f64], vn: &[f64], alpha: f64) -> Result<AuPartition> {
    partition_aus_with(va, vp, vn, &Thresholds::scalar(alpha))
}

pub fn partition_aus_with(va: &[f64], vp: &[f64], vn: &[f64], alpha: &Thresholds) -> Result<AuPartition> {
    if vp.len() != va.len() {
        return Err(Error::dim("positive AU vector", va.len(), vp.len()));
    }
    if vn.len() != va.len() {
        return Err(Error::dim("negative AU vector", va.len(), vn.len()));
    }
    let mut part = AuPartition::default();
    let mut diffs = Vec::new();
    for k in 0..va.len() {
        let a = alpha.get(k);
        if !(a > 0.0) {
            return Err(Error::Config(format!("alpha for AU index {k} must be > 0, got {a}")));
        }
        let d_neg = (va[k] - vn[k]).abs();
        if (va[k] - vp[k]).abs() < a && d_neg >= a {
            part.set_a.push(k);
            diffs.push(d_neg);
        } else {
            part.set_b.push(k);
        }
    }
    if !part.set_a.is_empty() {
        part.weights = relevance_weights(&diffs)?;
    }
    Ok(part)
}

/// Normalizes anchor/negative gaps of the relevant AUs to sum to one.
pub fn relevance_weights(diffs: &[f64]) -> Result<Vec<f64>> {
    if diffs.is_empty() {
        return Err(Error::EmptyRelevantSet);
    }
    let total: f64 = diffs.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Range(format!("relevant gaps {diffs:?} sum to {total}")));
    }
    Ok(diffs.iter().map(|d| d / total).collect())
}

/// A square patch that always has its full size: near an edge the center
/// is shifted inwards just enough to fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchBox {
    pub au: usize,
    /// Center after shifting, `(row, col)`.
    pub row: usize,
    pub col: usize,
    pub half: usize,
}

impl PatchBox {
    pub fn side(&self) -> usize {
        2 * self.half + 1
    }

    pub fn rows(&self) -> std::ops::RangeInclusive<usize> {
        self.row - self.half..=self.row + self.half
    }

    pub fn cols(&self) -> std::ops::RangeInclusive<usize> {
        self.col - self.half..=self.col + self.half
    }

    /// Flat `row * width + col` offsets of every pixel, row-major.
    pub fn offsets(&self, width: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows()
            .flat_map(move |r| self.cols().map(move |c| r * width + c))
    }

    /// Copies the patch out of a single-channel map.
    pub fn extract(&self, map: &[f64], width: usize) -> Vec<f64> {
        self.offsets(width).map(|i| map[i]).collect()
    }
}

pub fn patch_box(au: usize, landmark: Landmark, image_hw: (usize, usize), half: usize) -> Result<PatchBox> {
    let (h, w) = image_hw;
    let side = 2 * half + 1;
    if h < side || w < side {
        return Err(Error::Shape(format!(
            "{h}x{w} image is smaller than a {side}x{side} patch"
        )));
    }
    let inside = landmark.x >= 0.0
        && landmark.y >= 0.0
        && landmark.x <= (w - 1) as f64
        && landmark.y <= (h - 1) as f64;
    if !inside {
        return Err(Error::Range(format!(
            "landmark ({}, {}) outside {h}x{w} image",
            landmark.x, landmark.y
        )));
    }
    let fit = |v: f64, n: usize| (v.round() as usize).clamp(half, n - 1 - half);
    Ok(PatchBox {
        au,
        row: fit(landmark.y, h),
        col: fit(landmark.x, w),
        half,
    })
}

/// Boxes for every AU of a frame.
pub fn patch_boxes(landmarks: &[Landmark], image_hw: (usize, usize), half: usize) -> Result<Vec<PatchBox>> {
    landmarks
        .iter()
        .enumerate()
        .map(|(k, &lm)| patch_box(k, lm, image_hw, half))
        .collect()
}

/// Zero map with each relevant AU's box filled with its weight (maximum
/// where boxes overlap). Irrelevant AUs leave their boxes at zero.
pub fn render_attention_map(partition: &AuPartition, boxes: &[PatchBox], image_hw: (usize, usize)) -> Result<Tensor> {
    let (h, w) = image_hw;
    let mut map = Tensor::zeros(&[1, h, w]);
    for (&k, &wk) in partition.set_a.iter().zip(&partition.weights) {
        let b = boxes
            .iter()
            .find(|b| b.au == k)
            .ok_or_else(|| Error::Range(format!("no patch box for AU index {k}")))?;
        if b.row + b.half >= h || b.col + b.half >= w {
            return Err(Error::Shape(format!("patch box {b:?} exceeds {h}x{w}")));
        }
        let data = map.data_mut();
        for i in b.offsets(w) {
            data[i] = data[i].max(wk);
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eq1_examples() {
        let p = partition_aus(&[3.0, 0.0], &[3.4, 0.2], &[1.0, 0.1], 1.0).unwrap();
        assert_eq!(p.set_a, vec![0]);
        assert_eq!(p.weights, vec![1.0]);
        assert_eq!(p.set_b, vec![1]);

        // |Va - Vn| == alpha is inclusive
        let p = partition_aus(&[2.0], &[2.5], &[1.0], 1.0).unwrap();
        assert_eq!(p.set_a, vec![0]);
        // |Va - Vp| == alpha is exclusive
        let p = partition_aus(&[2.0], &[3.0], &[0.0], 1.0).unwrap();
        assert!(p.set_a.is_empty());

        let v = [1.0, 2.0, 3.0];
        let p = partition_aus(&v, &v, &v, 1.0).unwrap();
        assert!(p.set_a.is_empty() && p.weights.is_empty());
        assert_eq!(p.set_b, vec![0, 1, 2]);
        assert_eq!(p.n_b(), 3);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(partition_aus(&[1.0, 2.0], &[1.0], &[1.0, 2.0], 1.0).is_err());
        assert!(partition_aus(&[1.0], &[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn per_au_threshold_override() {
        let per = [None, Some(3.0)];
        let t = Thresholds {
            default: 1.0,
            per_au: &per,
        };
        let p = partition_aus_with(&[2.0, 2.0], &[2.0, 2.0], &[0.0, 0.0], &t).unwrap();
        assert_eq!(p.set_a, vec![0]);
        assert_eq!(p.set_b, vec![1]);
    }

    #[test]
    fn weight_examples() {
        assert_eq!(relevance_weights(&[1.7]).unwrap(), vec![1.0]);
        assert_eq!(relevance_weights(&[2.0, 2.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(relevance_weights(&[3.0, 1.0]).unwrap(), vec![0.75, 0.25]);
        assert!(matches!(relevance_weights(&[]), Err(Error::EmptyRelevantSet)));
    }

    #[test]
    fn patch_box_examples() {
        let b = patch_box(0, Landmark { x: 16.0, y: 16.0 }, (32, 32), 5).unwrap();
        assert_eq!((b.rows(), b.cols()), (11..=21, 11..=21));
        let b = patch_box(0, Landmark { x: 16.0, y: 1.0 }, (32, 32), 5).unwrap();
        assert_eq!((b.rows(), b.cols()), (0..=10, 11..=21));
        let b = patch_box(0, Landmark { x: 31.0, y: 30.0 }, (32, 32), 5).unwrap();
        assert_eq!((b.rows(), b.cols()), (21..=31, 21..=31));
        assert!(patch_box(0, Landmark { x: 4.0, y: 4.0 }, (8, 8), 5).is_err());
        assert!(patch_box(0, Landmark { x: 40.0, y: 4.0 }, (32, 32), 5).is_err());
    }

    #[test]
    fn attention_map_examples() {
        let boxes = vec![
            patch_box(0, Landmark { x: 10.0, y: 10.0 }, (32, 32), 5).unwrap(),
            patch_box(1, Landmark { x: 14.0, y: 10.0 }, (32, 32), 5).unwrap(),
        ];
        let empty = AuPartition {
            set_b: vec![0, 1],
            ..AuPartition::default()
        };
        let m = render_attention_map(&empty, &boxes, (32, 32)).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.0));

        let single = AuPartition {
            set_a: vec![0],
            weights: vec![1.0],
            set_b: vec![1],
        };
        let m = render_attention_map(&single, &boxes, (32, 32)).unwrap();
        assert_eq!(m.data().iter().filter(|&&v| v == 1.0).count(), 121);
        assert_eq!(m.data().iter().filter(|&&v| v == 0.0).count(), 1024 - 121);

        let both = AuPartition {
            set_a: vec![0, 1],
            weights: vec![0.75, 0.25],
            set_b: vec![],
        };
        let m = render_attention_map(&both, &boxes, (32, 32)).unwrap();
        assert_eq!(m.data()[10 * 32 + 12], 0.75);
        assert_eq!(m.data()[10 * 32 + 18], 0.25);
        assert_eq!(m.data()[10 * 32 + 6], 0.75);
        assert_eq!(m.data()[10 * 32 + 4], 0.0);
    }

    proptest! {
        #[test]
        fn weights_sum_to_one_and_map_in_unit_range(
            va in prop::collection::vec(0f64..5.0, 6),
            vp in prop::collection::vec(0f64..5.0, 6),
            vn in prop::collection::vec(0f64..5.0, 6),
            alpha in 0.1f64..2.0,
        ) {
            let p = partition_aus(&va, &vp, &vn, alpha).unwrap();
            prop_assert_eq!(p.set_a.len() + p.set_b.len(), 6);
            if !p.set_a.is_empty() {
                prop_assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(p.weights.iter().all(|&w| w > 0.0 && w <= 1.0));
            }
            let lms: Vec<Landmark> = (0..6).map(|k| Landmark { x: 5.0 + 4.0 * k as f64, y: 12.0 }).collect();
            let boxes = patch_boxes(&lms, (32, 32), 5).unwrap();
            let m = render_attention_map(&p, &boxes, (32, 32)).unwrap();
            prop_assert!(m.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}

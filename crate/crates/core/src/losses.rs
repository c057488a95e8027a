//! Loss functions: patch EMD, the per-AU local triplet losses, the global
//! triplet loss on bottleneck features, smooth L1 and the L1 center loss.
//!
//! Triplet losses use the usual orientation (penalize `d(a, p) - d(a, n)`)
//! by default; [`SignConvention::Verbatim`] swaps the operands of every
//! triplet hinge for comparison runs.

use serde::{Deserialize, Serialize};

use crate::attention::AuPartition;
use crate::data::NUM_LEVELS;
use crate::error::{Error, Result};
use crate::ops::{self, HistogramSpec};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// Anchor-positive distance minus anchor-negative distance.
    #[default]
    Standard,
    /// Anchor-negative distance minus anchor-positive distance.
    Verbatim,
}

impl SignConvention {
    pub fn from_verbatim_flag(verbatim: bool) -> Self {
        if verbatim {
            Self::Verbatim
        } else {
            Self::Standard
        }
    }
}

#[inline]
fn hinge(x: f64) -> f64 {
    x.max(0.0)
}

#[inline]
fn hinge_slope(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Normalized 1-D EMD between histograms on evenly spaced bins:
/// `sum_i |CDF1_i - CDF2_i| / (B - 1)`, which lies in `[0, 1]` for
/// probability histograms.
pub fn histogram_emd(h1: &[f64], h2: &[f64]) -> Result<f64> {
    if h1.len() != h2.len() {
        return Err(Error::dim("histogram bins", h1.len(), h2.len()));
    }
    if h1.len() < 2 {
        return Err(Error::Config("EMD needs at least 2 bins".into()));
    }
    let mut c = 0.0;
    let mut total = 0.0;
    for (a, b) in h1.iter().zip(h2) {
        c += a - b;
        total += c.abs();
    }
    Ok(total / (h1.len() - 1) as f64)
}

/// Gradient of [`histogram_emd`] with respect to `h1` (the gradient with
/// respect to `h2` is its negation).
fn histogram_emd_grad(h1: &[f64], h2: &[f64]) -> Vec<f64> {
    let b = h1.len();
    let mut signs = Vec::with_capacity(b);
    let mut c = 0.0;
    for (x, y) in h1.iter().zip(h2) {
        c += x - y;
        signs.push(sign(c));
    }
    let scale = 1.0 / (b - 1) as f64;
    let mut g = vec![0.0; b];
    let mut acc = 0.0;
    for i in (0..b).rev() {
        acc += signs[i];
        g[i] = acc * scale;
    }
    g
}

/// The patch metric `g(m, n)`: EMD between soft histograms of two patches.
pub fn patch_emd(p1: &[f64], p2: &[f64], spec: HistogramSpec) -> Result<f64> {
    if p1.len() != p2.len() {
        return Err(Error::dim("patch size", p1.len(), p2.len()));
    }
    let h1 = ops::soft_histogram_raw(p1, spec)?;
    let h2 = ops::soft_histogram_raw(p2, spec)?;
    histogram_emd(&h1, &h2)
}

/// [`patch_emd`] with gradients on both patches.
pub fn patch_emd_grad(p1: &[f64], p2: &[f64], spec: HistogramSpec) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if p1.len() != p2.len() {
        return Err(Error::dim("patch size", p1.len(), p2.len()));
    }
    let h1 = ops::soft_histogram_raw(p1, spec)?;
    let h2 = ops::soft_histogram_raw(p2, spec)?;
    let d = histogram_emd(&h1, &h2)?;
    let gh = histogram_emd_grad(&h1, &h2);
    let neg: Vec<f64> = gh.iter().map(|v| -v).collect();
    Ok((
        d,
        ops::soft_histogram_backward(p1, spec, &gh),
        ops::soft_histogram_backward(p2, spec, &neg),
    ))
}

/// Saliency patches of one AU in the three triplet members.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchTriplet {
    pub au: usize,
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

impl PatchTriplet {
    fn check(&self) -> Result<()> {
        let n = self.anchor.len();
        if self.positive.len() != n || self.negative.len() != n {
            return Err(Error::Shape(format!("patches of AU index {} differ in size", self.au)));
        }
        Ok(())
    }

    /// `(g(a, p), g(a, n))`
    pub fn distances(&self, spec: HistogramSpec) -> Result<(f64, f64)> {
        self.check()?;
        Ok((
            patch_emd(&self.anchor, &self.positive, spec)?,
            patch_emd(&self.anchor, &self.negative, spec)?,
        ))
    }
}

/// Hinge argument for a relevant AU: it must separate the negative from
/// the positive by `margin`.
pub fn set_a_argument(g_ap: f64, g_an: f64, margin: f64, conv: SignConvention) -> f64 {
    match conv {
        SignConvention::Standard => g_ap - g_an + margin,
        SignConvention::Verbatim => g_an - g_ap + margin,
    }
}

/// Hinge argument for an irrelevant AU: it may not separate the negative
/// from the positive by more than `slack`.
pub fn set_b_argument(g_ap: f64, g_an: f64, slack: f64, conv: SignConvention) -> f64 {
    match conv {
        SignConvention::Standard => g_an - g_ap - slack,
        // the negative part of (g_an - g_ap + slack)
        SignConvention::Verbatim => g_ap - g_an - slack,
    }
}

pub fn set_a_term(g_ap: f64, g_an: f64, margin: f64, conv: SignConvention) -> f64 {
    hinge(set_a_argument(g_ap, g_an, margin, conv))
}

pub fn set_b_term(g_ap: f64, g_an: f64, slack: f64, conv: SignConvention) -> f64 {
    hinge(set_b_argument(g_ap, g_an, slack, conv))
}

/// Sum over relevant AUs of `[g(a,p) - g(a,n) + O * W^k]_+`.
pub fn loss_set_a(
    triplets: &[PatchTriplet],
    weights: &[f64],
    gap: f64,
    spec: HistogramSpec,
    conv: SignConvention,
) -> Result<f64> {
    if triplets.is_empty() {
        return Err(Error::EmptyRelevantSet);
    }
    if weights.len() != triplets.len() {
        return Err(Error::dim("relevance weights", triplets.len(), weights.len()));
    }
    triplets.iter().zip(weights).try_fold(0.0, |acc, (t, &w)| {
        let (ap, an) = t.distances(spec)?;
        Ok(acc + set_a_term(ap, an, gap * w, conv))
    })
}

/// Sum over irrelevant AUs of `[g(a,n) - g(a,p) - O / N]_+`, `N` being the
/// number of irrelevant AUs. An empty set contributes zero.
pub fn loss_set_b(triplets: &[PatchTriplet], gap: f64, spec: HistogramSpec, conv: SignConvention) -> Result<f64> {
    if triplets.is_empty() {
        return Ok(0.0);
    }
    let slack = gap / triplets.len() as f64;
    triplets.iter().try_fold(0.0, |acc, t| {
        let (ap, an) = t.distances(spec)?;
        Ok(acc + set_b_term(ap, an, slack, conv))
    })
}

pub fn local_loss(loss_a: f64, loss_b: f64) -> f64 {
    loss_a + loss_b
}

/// Which local terms contribute gradient. Training uses `Both`; the single
/// sets exist for gradient checking.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LocalPart {
    #[default]
    Both,
    SetA,
    SetB,
}

impl LocalPart {
    fn includes(self, relevant: bool) -> bool {
        match self {
            LocalPart::Both => true,
            LocalPart::SetA => relevant,
            LocalPart::SetB => !relevant,
        }
    }
}

/// Local loss of one triplet with gradients on every patch.
#[derive(Clone, Debug)]
pub struct LocalTerms {
    pub loss_a: f64,
    pub loss_b: f64,
    /// One entry per input patch triplet: gradients on (anchor, positive,
    /// negative) patches of the selected terms.
    pub grads: Vec<[Vec<f64>; 3]>,
}

/// `patches` must hold one [`PatchTriplet`] per AU index referenced by the
/// partition; `partition.set_a` must be non-empty. Both losses are always
/// reported; `part` picks the terms whose gradient is accumulated.
pub fn local_terms(
    patches: &[PatchTriplet],
    partition: &AuPartition,
    gap: f64,
    spec: HistogramSpec,
    conv: SignConvention,
    part: LocalPart,
) -> Result<LocalTerms> {
    if partition.set_a.is_empty() {
        return Err(Error::EmptyRelevantSet);
    }
    let mut out = LocalTerms {
        loss_a: 0.0,
        loss_b: 0.0,
        grads: patches
            .iter()
            .map(|p| {
                let n = p.anchor.len();
                [vec![0.0; n], vec![0.0; n], vec![0.0; n]]
            })
            .collect(),
    };
    let find = |k: usize| -> Result<usize> {
        patches
            .iter()
            .position(|p| p.au == k)
            .ok_or_else(|| Error::Range(format!("no patches for AU index {k}")))
    };
    let slack = if partition.set_b.is_empty() {
        0.0
    } else {
        gap / partition.set_b.len() as f64
    };
    let terms = partition
        .set_a
        .iter()
        .zip(&partition.weights)
        .map(|(&k, &w)| (k, true, gap * w))
        .chain(partition.set_b.iter().map(|&k| (k, false, slack)));
    for (k, relevant, m) in terms {
        let idx = find(k)?;
        let p = &patches[idx];
        p.check()?;
        let (ap, ga_p, gp) = patch_emd_grad(&p.anchor, &p.positive, spec)?;
        let (an, ga_n, gn) = patch_emd_grad(&p.anchor, &p.negative, spec)?;
        let arg = if relevant {
            set_a_argument(ap, an, m, conv)
        } else {
            set_b_argument(ap, an, m, conv)
        };
        if relevant {
            out.loss_a += hinge(arg);
        } else {
            out.loss_b += hinge(arg);
        }
        let slope = hinge_slope(arg);
        if slope == 0.0 || !part.includes(relevant) {
            continue;
        }
        // d arg / d g(a,p) and d arg / d g(a,n)
        let (s_ap, s_an) = match (relevant, conv) {
            (true, SignConvention::Standard) | (false, SignConvention::Verbatim) => (1.0, -1.0),
            (true, SignConvention::Verbatim) | (false, SignConvention::Standard) => (-1.0, 1.0),
        };
        let g = &mut out.grads[idx];
        for i in 0..g[0].len() {
            g[0][i] += s_ap * ga_p[i] + s_an * ga_n[i];
            g[1][i] += s_ap * gp[i];
            g[2][i] += s_an * gn[i];
        }
    }
    Ok(out)
}

fn check_unit(f: &[f64]) -> Result<()> {
    let n = f.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (n - 1.0).abs() > 1e-4 {
        return Err(Error::NotNormalized(n));
    }
    Ok(())
}

/// `[|a - p| - |a - n| + O * beta]_+` on unit-norm features.
pub fn global_triplet_loss(
    fa: &[f64],
    fp: &[f64],
    fneg: &[f64],
    gap: f64,
    beta: f64,
    conv: SignConvention,
) -> Result<f64> {
    Ok(global_triplet_grad(fa, fp, fneg, gap, beta, conv)?.0)
}

/// [`global_triplet_loss`] with gradients on the three unit features.
pub fn global_triplet_grad(
    fa: &[f64],
    fp: &[f64],
    fneg: &[f64],
    gap: f64,
    beta: f64,
    conv: SignConvention,
) -> Result<(f64, [Vec<f64>; 3])> {
    for f in [fa, fp, fneg] {
        if f.len() != fa.len() {
            return Err(Error::dim("feature", fa.len(), f.len()));
        }
        check_unit(f)?;
    }
    let d_ap = ops::euclidean(fa, fp);
    let d_an = ops::euclidean(fa, fneg);
    let margin = gap * beta;
    let (arg, s_ap, s_an) = match conv {
        SignConvention::Standard => (d_ap - d_an + margin, 1.0, -1.0),
        SignConvention::Verbatim => (d_an - d_ap + margin, -1.0, 1.0),
    };
    let n = fa.len();
    let mut grads = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    if arg > 0.0 {
        // d|x - y| / dx = (x - y) / |x - y|, zero at coincidence
        for i in 0..n {
            if d_ap > 0.0 {
                let u = s_ap * (fa[i] - fp[i]) / d_ap;
                grads[0][i] += u;
                grads[1][i] -= u;
            }
            if d_an > 0.0 {
                let u = s_an * (fa[i] - fneg[i]) / d_an;
                grads[0][i] += u;
                grads[2][i] -= u;
            }
        }
    }
    Ok((hinge(arg), grads))
}

/// Huber-style smooth L1 with unit transition point.
pub fn smooth_l1(pred: f64, target: f64) -> f64 {
    let d = pred - target;
    if d.abs() < 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

pub fn smooth_l1_grad(pred: f64, target: f64) -> f64 {
    let d = pred - target;
    if d.abs() < 1.0 {
        d
    } else {
        sign(d)
    }
}

/// `|feature - centers[level]|_1 / dim` and its gradient on the feature.
pub fn center_loss_l1(feature: &[f64], level: u8, centers: &Tensor) -> Result<(f64, Vec<f64>)> {
    let (rows, dim) = match centers.shape()[..] {
        [r, d] => (r, d),
        _ => return Err(Error::dim("centers rank", 2, centers.rank())),
    };
    let level = level as usize;
    if level >= rows || level >= NUM_LEVELS {
        return Err(Error::Range(format!("level {level} outside 0..{}", rows.min(NUM_LEVELS))));
    }
    if feature.len() != dim {
        return Err(Error::dim("center dim", dim, feature.len()));
    }
    let c = &centers.data()[level * dim..(level + 1) * dim];
    let inv = 1.0 / dim as f64;
    let loss = feature.iter().zip(c).map(|(f, c)| (f - c).abs()).sum::<f64>() * inv;
    let grad = feature.iter().zip(c).map(|(f, c)| sign(f - c) * inv).collect();
    Ok((loss, grad))
}

/// Default center step: each center moves half way to its batch mean.
pub const CENTER_RATE: f64 = 0.5;

/// `centers[j] += rate * mean_{i: level_i = j} (f_i - centers[j])`; classes
/// absent from the batch are unchanged.
pub fn update_centers(centers: &mut Tensor, features: &[Vec<f64>], levels: &[u8], rate: f64) -> Result<()> {
    let dim = centers.shape()[1];
    let rows = centers.shape()[0];
    let mut sums = vec![0.0; rows * dim];
    let mut counts = vec![0usize; rows];
    for (f, &l) in features.iter().zip(levels) {
        let l = l as usize;
        if l >= rows {
            return Err(Error::Range(format!("level {l} outside 0..{rows}")));
        }
        counts[l] += 1;
        for (s, v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(f) {
            *s += v;
        }
    }
    let data = centers.data_mut();
    for j in 0..rows {
        if counts[j] == 0 {
            continue;
        }
        let n = counts[j] as f64;
        for i in 0..dim {
            let c = data[j * dim + i];
            data[j * dim + i] = c + rate * (sums[j * dim + i] / n - c);
        }
    }
    Ok(())
}

/// One line of the training log.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: usize,
    #[serde(rename = "loss_A")]
    pub loss_a: f64,
    #[serde(rename = "loss_B")]
    pub loss_b: f64,
    #[serde(rename = "loss_L")]
    pub loss_l: f64,
    #[serde(rename = "loss_G")]
    pub loss_g: f64,
    pub reg: f64,
    pub center: f64,
}

impl LossReport {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(b: usize) -> HistogramSpec {
        HistogramSpec::unit(b).unwrap()
    }

    #[test]
    fn emd_examples() {
        assert_eq!(histogram_emd(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!((histogram_emd(&[0.5, 0.5, 0.0], &[0.0, 0.5, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        let p = vec![0.1, 0.7, 0.3, 0.9];
        assert_eq!(patch_emd(&p, &p, spec(32)).unwrap(), 0.0);
        // patches realizing the histograms above
        assert_eq!(patch_emd(&[0.0], &[1.0], spec(2)).unwrap(), 1.0);
        assert!(patch_emd(&[0.0], &[1.0, 0.0], spec(2)).is_err());
    }

    #[test]
    fn emd_grad_matches_finite_differences() {
        let p1 = vec![0.13, 0.52, 0.77, 0.31, 0.94];
        let p2 = vec![0.61, 0.08, 0.45, 0.29, 0.83];
        let s = spec(8);
        let (_, g1, g2) = patch_emd_grad(&p1, &p2, s).unwrap();
        for i in 0..p1.len() {
            let mut a = p1.clone();
            let mut b = p1.clone();
            a[i] += 1e-7;
            b[i] -= 1e-7;
            let fd = (patch_emd(&a, &p2, s).unwrap() - patch_emd(&b, &p2, s).unwrap()) / 2e-7;
            assert!((fd - g1[i]).abs() < 1e-6, "p1[{i}]");
            let mut a = p2.clone();
            let mut b = p2.clone();
            a[i] += 1e-7;
            b[i] -= 1e-7;
            let fd = (patch_emd(&p1, &a, s).unwrap() - patch_emd(&p1, &b, s).unwrap()) / 2e-7;
            assert!((fd - g2[i]).abs() < 1e-6, "p2[{i}]");
        }
    }

    #[test]
    fn set_a_examples() {
        let c = SignConvention::Standard;
        assert_eq!(set_a_term(0.1, 0.9, 0.5, c), 0.0);
        assert!((set_a_term(0.3, 0.1, 2.0, c) - 2.2).abs() < 1e-15);
        // verbatim swaps the operands
        assert!((set_a_term(0.9, 0.1, 0.5, SignConvention::Verbatim) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn set_b_examples() {
        let c = SignConvention::Standard;
        for (o, n) in [(1.0, 1.0), (3.0, 4.0)] {
            assert_eq!(set_b_term(0.4, 0.4, o / n, c), 0.0);
        }
        assert_eq!(set_b_term(0.1, 0.6, 0.5, c), 0.0);
        assert!((set_b_term(0.1, 0.8, 1.0 / 5.0, c) - 0.5).abs() < 1e-12);
    }

    fn patch_triplet(au: usize, a: Vec<f64>, p: Vec<f64>, n: Vec<f64>) -> PatchTriplet {
        PatchTriplet {
            au,
            anchor: a,
            positive: p,
            negative: n,
        }
    }

    #[test]
    fn set_losses_sum_scalar_terms() {
        let s = spec(4);
        let t1 = patch_triplet(0, vec![0.0, 0.2], vec![0.1, 0.3], vec![0.9, 1.0]);
        let t2 = patch_triplet(1, vec![0.5, 0.5], vec![1.0, 0.0], vec![0.4, 0.6]);
        let w = [0.75, 0.25];
        let gap = 2.0;
        let c = SignConvention::Standard;
        let mut expect = 0.0;
        for (t, wk) in [(&t1, w[0]), (&t2, w[1])] {
            let ap = patch_emd(&t.anchor, &t.positive, s).unwrap();
            let an = patch_emd(&t.anchor, &t.negative, s).unwrap();
            expect += (ap - an + gap * wk).max(0.0);
        }
        let got = loss_set_a(&[t1.clone(), t2.clone()], &w, gap, s, c).unwrap();
        assert!((got - expect).abs() < 1e-12);
        assert!(matches!(loss_set_a(&[], &[], gap, s, c), Err(Error::EmptyRelevantSet)));
        assert_eq!(loss_set_b(&[], gap, s, c).unwrap(), 0.0);

        let part = AuPartition {
            set_a: vec![0],
            weights: vec![1.0],
            set_b: vec![1],
        };
        let terms = local_terms(&[t1.clone(), t2.clone()], &part, gap, s, c, LocalPart::Both).unwrap();
        let la = loss_set_a(&[t1], &[1.0], gap, s, c).unwrap();
        let lb = loss_set_b(&[t2], gap, s, c).unwrap();
        assert_eq!(terms.loss_a, la);
        assert_eq!(terms.loss_b, lb);
        assert_eq!(local_loss(terms.loss_a, terms.loss_b), la + lb);
    }

    #[test]
    fn local_loss_examples() {
        assert_eq!(local_loss(0.0, 0.0), 0.0);
        assert!((local_loss(2.2, 0.5) - 2.7).abs() < 1e-15);
    }

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    #[test]
    fn global_examples() {
        let c = SignConvention::Standard;
        // distances chosen on the unit circle
        let a = [1.0, 0.0];
        let at = |d: f64| {
            // point on the unit circle at chord distance d from (1, 0)
            let cos = 1.0 - d * d / 2.0;
            [cos, (1.0 - cos * cos).max(0.0).sqrt()]
        };
        let l = global_triplet_loss(&a, &at(0.2), &at(1.0), 2.0, 0.2, c).unwrap();
        assert_eq!(l, 0.0);
        let l = global_triplet_loss(&a, &at(1.0), &at(0.5), 1.0, 0.2, c).unwrap();
        assert!((l - 0.7).abs() < 1e-12);
        let p = unit(&[0.3, 0.4]);
        let l = global_triplet_loss(&a, &p, &p, 3.0, 0.2, c).unwrap();
        assert!((l - 0.6).abs() < 1e-15);
        assert!(matches!(
            global_triplet_loss(&[2.0, 0.0], &p, &p, 1.0, 0.2, c),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(3.0, 3.0), 0.0);
        assert_eq!(smooth_l1(2.5, 2.0), 0.125);
        assert_eq!(smooth_l1(0.0, 2.0), 1.5);
        assert_eq!(smooth_l1_grad(0.0, 2.0), -1.0);
        assert_eq!(smooth_l1_grad(2.5, 2.0), 0.5);
    }

    #[test]
    fn center_loss_examples() {
        let mut centers = Tensor::zeros(&[6, 2]);
        assert_eq!(center_loss_l1(&[0.0, 0.0], 3, &centers).unwrap().0, 0.0);
        assert_eq!(center_loss_l1(&[1.0, 2.0], 0, &centers).unwrap().0, 1.5);
        assert!(center_loss_l1(&[1.0, 2.0], 6, &centers).is_err());

        // two class-2 samples with mean (2, 4): center moves half way there
        centers.data_mut()[4] = 1.0;
        update_centers(&mut centers, &[vec![1.0, 3.0], vec![3.0, 5.0]], &[2, 2], CENTER_RATE).unwrap();
        assert_eq!(&centers.data()[4..6], &[1.5, 2.0]);
        assert!(centers.data()[..4].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn report_json_line_keys() {
        let r = LossReport {
            step: 3,
            loss_a: 1.0,
            loss_b: 0.5,
            loss_l: 1.5,
            ..Default::default()
        };
        assert_eq!(
            r.to_json_line().unwrap(),
            r#"{"step":3,"loss_A":1.0,"loss_B":0.5,"loss_L":1.5,"loss_G":0.0,"reg":0.0,"center":0.0}"#
        );
    }

    proptest! {
        #[test]
        fn emd_is_a_pseudometric(
            a in prop::collection::vec(0f64..=1.0, 25),
            b in prop::collection::vec(0f64..=1.0, 25),
            c in prop::collection::vec(0f64..=1.0, 25),
        ) {
            let s = spec(32);
            let ab = patch_emd(&a, &b, s).unwrap();
            let ba = patch_emd(&b, &a, s).unwrap();
            let bc = patch_emd(&b, &c, s).unwrap();
            let ac = patch_emd(&a, &c, s).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ac <= ab + bc + 1e-9);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
            let mut shuffled = a.clone();
            shuffled.reverse();
            prop_assert!(patch_emd(&a, &shuffled, s).unwrap() < 1e-12);
        }

        #[test]
        fn hinges_are_non_negative(ap in 0f64..1.0, an in 0f64..1.0, m in 0f64..5.0) {
            for c in [SignConvention::Standard, SignConvention::Verbatim] {
                prop_assert!(set_a_term(ap, an, m, c) >= 0.0);
                prop_assert!(set_b_term(ap, an, m, c) >= 0.0);
            }
            // exactly at the margin boundary the hinge is inactive
            prop_assert_eq!(set_a_term(ap, ap + m, m, SignConvention::Standard), hinge(ap - (ap + m) + m));
        }
    }
}

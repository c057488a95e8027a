//! Regression metrics, leave-one-subject-out cross-validation and the
//! saliency concentration score.
//!
//! MAE, MSE and PCC are computed per sequence (one subject's frames) and
//! then averaged over sequences. The weighted variants pool all frames and
//! average the per-level errors uniformly over the levels present.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::attention::{patch_boxes, PatchBox};
use crate::data::{split_loso, Dataset, Frame, RescaleTable};
use crate::error::{Error, Result};
use crate::losses::SignConvention;
use crate::network::{Model, ModelConfig};
use crate::training::{train, TrainConfig, Variant};

/// Predictions and labels of one subject's frames, in frame order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub subject_id: String,
    pub predictions: Vec<f64>,
    pub labels: Vec<f64>,
}

impl SequenceResult {
    fn check(&self) -> Result<()> {
        if self.predictions.is_empty() {
            return Err(Error::Range(format!("sequence {} is empty", self.subject_id)));
        }
        if self.predictions.len() != self.labels.len() {
            return Err(Error::dim("sequence labels", self.predictions.len(), self.labels.len()));
        }
        Ok(())
    }
}

/// Pearson correlation; `None` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub mae: f64,
    pub mse: f64,
    pub pcc: f64,
    /// Set when PCC was undefined (constant sequence) and taken as 0.
    pub pcc_undefined: bool,
}

pub fn sequence_metrics(seq: &SequenceResult) -> Result<SequenceMetrics> {
    seq.check()?;
    let n = seq.predictions.len() as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (p, l) in seq.predictions.iter().zip(&seq.labels) {
        abs += (p - l).abs();
        sq += (p - l) * (p - l);
    }
    let pcc = pearson(&seq.predictions, &seq.labels);
    Ok(SequenceMetrics {
        mae: abs / n,
        mse: sq / n,
        pcc: pcc.unwrap_or(0.0),
        pcc_undefined: pcc.is_none(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub mse: f64,
    pub pcc: f64,
    /// Sequences whose PCC was undefined and counted as 0.
    pub undefined_pcc: usize,
}

/// Per-sequence metrics averaged over sequences.
pub fn compute_metrics(results: &[SequenceResult]) -> Result<Metrics> {
    if results.is_empty() {
        return Err(Error::Range("no sequences to evaluate".into()));
    }
    let mut m = Metrics::default();
    for s in results {
        let sm = sequence_metrics(s)?;
        m.mae += sm.mae;
        m.mse += sm.mse;
        m.pcc += sm.pcc;
        m.undefined_pcc += sm.pcc_undefined as usize;
    }
    let n = results.len() as f64;
    m.mae /= n;
    m.mse /= n;
    m.pcc /= n;
    Ok(m)
}

/// `(wMAE, wMSE)`: errors pooled per ground-truth level, averaged over the
/// levels present.
pub fn weighted_metrics(results: &[SequenceResult]) -> Result<(f64, f64)> {
    if results.is_empty() {
        return Err(Error::Range("no sequences to evaluate".into()));
    }
    // keyed by the label's bit pattern; labels are exact level values
    let mut classes: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for s in results {
        s.check()?;
        for (p, l) in s.predictions.iter().zip(&s.labels) {
            let e = classes.entry(l.to_bits()).or_default();
            e.0 += (p - l).abs();
            e.1 += (p - l) * (p - l);
            e.2 += 1;
        }
    }
    let k = classes.len() as f64;
    let (mut wmae, mut wmse) = (0.0, 0.0);
    for (abs, sq, n) in classes.values() {
        wmae += abs / *n as f64;
        wmse += sq / *n as f64;
    }
    Ok((wmae / k, wmse / k))
}

pub fn predict(model: &Model, frame: &Frame) -> Result<f64> {
    model.regress(&model.encode(&frame.image)?)
}

/// One sequence per subject of `ds`, in subject order.
pub fn evaluate(model: &Model, ds: &Dataset) -> Result<Vec<SequenceResult>> {
    ds.subjects
        .iter()
        .map(|s| {
            let idx = ds.subject_frames(s);
            Ok(SequenceResult {
                subject_id: s.clone(),
                predictions: idx
                    .iter()
                    .map(|&i| predict(model, &ds.frames[i]))
                    .collect::<Result<_>>()?,
                labels: idx.iter().map(|&i| ds.frames[i].level as f64).collect(),
            })
        })
        .filter(|r| !matches!(r, Ok(s) if s.predictions.is_empty()))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub held_out: String,
    pub frames: usize,
    pub mae: f64,
    pub mse: f64,
    pub pcc: f64,
    pub pcc_undefined: bool,
}

/// Settings needed to reproduce a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEcho {
    pub variant: Variant,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub sign_convention: SignConvention,
    pub rescale_thresholds: Vec<f64>,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub mse: f64,
    pub pcc: f64,
    pub wmae: f64,
    pub wmse: f64,
    pub undefined_pcc: usize,
    pub folds: Vec<FoldReport>,
    pub config: ReportEcho,
}

/// Published reference numbers: (label, MAE, MSE, PCC, wMAE, wMSE).
pub const PUBLISHED_ROWS: [(&str, f64, f64, f64, f64, f64); 3] = [
    ("method1", 0.401, 0.742, 0.643, 0.883, 1.697),
    ("method2", 0.334, 0.626, 0.804, 0.727, 1.566),
    ("regression_only", 0.456, 0.804, 0.651, 0.991, 1.720),
];

impl MetricsReport {
    pub fn from_results(results: &[SequenceResult], echo: ReportEcho) -> Result<Self> {
        let m = compute_metrics(results)?;
        let (wmae, wmse) = weighted_metrics(results)?;
        let folds = results
            .iter()
            .map(|s| {
                let sm = sequence_metrics(s)?;
                Ok(FoldReport {
                    held_out: s.subject_id.clone(),
                    frames: s.predictions.len(),
                    mae: sm.mae,
                    mse: sm.mse,
                    pcc: sm.pcc,
                    pcc_undefined: sm.pcc_undefined,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            mae: m.mae,
            mse: m.mse,
            pcc: m.pcc,
            wmae,
            wmse,
            undefined_pcc: m.undefined_pcc,
            folds,
            config: echo,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Fixed-column table; published numbers for the real corpus follow as
    /// reference lines. They are not comparable to synthetic runs.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let line = |s: &mut String, name: &str, v: [f64; 5]| {
            let _ = writeln!(
                s,
                "{name:<36} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
                v[0], v[1], v[2], v[3], v[4]
            );
        };
        let _ = writeln!(s, "{:<36} {:>8} {:>8} {:>8} {:>8} {:>8}", "method", "MAE", "MSE", "PCC", "wMAE", "wMSE");
        line(
            &mut s,
            &format!("{} ({:?} signs)", self.config.variant, self.config.sign_convention).to_lowercase(),
            [self.mae, self.mse, self.pcc, self.wmae, self.wmse],
        );
        for f in &self.folds {
            let _ = writeln!(
                s,
                "  held out {:<25} {:>8.3} {:>8.3} {:>8.3}{}",
                f.held_out,
                f.mae,
                f.mse,
                f.pcc,
                if f.pcc_undefined { "  (constant, PCC=0)" } else { "" }
            );
        }
        for (name, mae, mse, pcc, wmae, wmse) in PUBLISHED_ROWS {
            line(&mut s, &format!("published reference: {name}"), [mae, mse, pcc, wmae, wmse]);
        }
        s
    }
}

/// Cross-validation output: the report and each fold's trained model.
#[derive(Clone, Debug)]
pub struct CrossValidation {
    pub report: MetricsReport,
    pub models: Vec<(String, Model)>,
}

/// Leave-one-subject-out cross-validation in subject order.
pub fn cross_validate(
    ds: &Dataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    variant: Variant,
    table: &RescaleTable,
) -> Result<CrossValidation> {
    if ds.subjects.len() < 2 {
        return Err(Error::Dataset(format!(
            "cross-validation needs at least 2 subjects, found {}",
            ds.subjects.len()
        )));
    }
    let mut results = Vec::new();
    let mut models = Vec::new();
    for subject in &ds.subjects {
        let (train_ds, test_ds) = split_loso(ds, subject)?;
        let model = train(&train_ds, model_cfg, cfg, variant)?.model;
        results.extend(evaluate(&model, &test_ds)?);
        models.push((subject.clone(), model));
    }
    let echo = ReportEcho {
        variant,
        seed: cfg.seed,
        alpha: cfg.alpha,
        beta: cfg.beta,
        sign_convention: cfg.sign_convention(),
        rescale_thresholds: table.thresholds.to_vec(),
        model: model_cfg.clone(),
        train: cfg.clone(),
    };
    Ok(CrossValidation {
        report: MetricsReport::from_results(&results, echo)?,
        models,
    })
}

/// Mean map value inside `relevant` boxes over the mean inside `irrelevant`
/// boxes. Zero irrelevant mass gives `f64::INFINITY` (or 1 when the
/// relevant mass is zero too).
pub fn box_concentration(map: &[f64], width: usize, relevant: &[PatchBox], irrelevant: &[PatchBox]) -> Result<f64> {
    if relevant.is_empty() || irrelevant.is_empty() {
        return Err(Error::Range("concentration needs relevant and irrelevant boxes".into()));
    }
    let mean = |boxes: &[PatchBox]| -> f64 {
        let (mut s, mut n) = (0.0, 0usize);
        for b in boxes {
            for i in b.offsets(width) {
                s += map[i];
                n += 1;
            }
        }
        s / n as f64
    };
    let (num, den) = (mean(relevant), mean(irrelevant));
    Ok(if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        1.0
    })
}

/// Frame-averaged [`box_concentration`] of the model's saliency maps, with
/// boxes of half-width `half` around each frame's landmarks. `relevant`
/// holds AU indices; every other AU counts as irrelevant.
pub fn saliency_concentration(model: &Model, frames: &[&Frame], relevant: &[usize], half: usize) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::Range("no frames for saliency concentration".into()));
    }
    let mut total = 0.0;
    for f in frames {
        let (h, w) = f.image_hw();
        let boxes = patch_boxes(&f.landmarks, (h, w), half)?;
        let (rel, irr): (Vec<PatchBox>, Vec<PatchBox>) = boxes.into_iter().partition(|b| relevant.contains(&b.au));
        let map = model.saliency(&f.image)?;
        total += box_concentration(map.data(), w, &rel, &irr)?;
    }
    Ok(total / frames.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(p: &[f64], l: &[f64]) -> SequenceResult {
        SequenceResult {
            subject_id: "s".into(),
            predictions: p.to_vec(),
            labels: l.to_vec(),
        }
    }

    #[test]
    fn metric_examples() {
        let m = compute_metrics(&[seq(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0])]).unwrap();
        assert_eq!((m.mae, m.mse), (0.0, 0.0));
        assert_eq!(m.pcc, 1.0);
        let m = compute_metrics(&[seq(&[1.0, 2.0, 3.0], &[0.0, 1.0, 2.0])]).unwrap();
        assert_eq!((m.mae, m.mse), (1.0, 1.0));
        assert_eq!(m.pcc, 1.0);
        let m = compute_metrics(&[seq(&[2.0, 1.0, 0.0], &[0.0, 1.0, 2.0])]).unwrap();
        assert_eq!((m.mae, m.mse), (4.0 / 3.0, 8.0 / 3.0));
        assert_eq!(m.pcc, -1.0);
        assert!(compute_metrics(&[]).is_err());
        assert!(compute_metrics(&[seq(&[], &[])]).is_err());
    }

    #[test]
    fn constant_sequence_has_zero_pcc() {
        let m = compute_metrics(&[seq(&[0.5, 0.5], &[0.0, 0.0])]).unwrap();
        assert_eq!(m.pcc, 0.0);
        assert_eq!(m.undefined_pcc, 1);
    }

    #[test]
    fn weighted_examples() {
        let s = seq(&[1.0, 2.0, 2.5], &[1.0, 1.0, 1.0]);
        let (wmae, wmse) = weighted_metrics(&[s.clone()]).unwrap();
        let m = sequence_metrics(&s).unwrap();
        assert_eq!((wmae, wmse), (m.mae, m.mse));

        // level 0 exact, level 5 off by one; level 0 has more frames
        let s = seq(&[0.0, 0.0, 0.0, 4.0], &[0.0, 0.0, 0.0, 5.0]);
        assert_eq!(weighted_metrics(&[s]).unwrap(), (0.5, 0.5));
    }

    #[test]
    fn concentration_examples() {
        let b = |au, row, col| PatchBox { au, row, col, half: 1 };
        let rel = [b(0, 1, 1)];
        let irr = [b(1, 5, 5)];
        assert_eq!(box_concentration(&[0.3; 64], 8, &rel, &irr).unwrap(), 1.0);
        let mut map = vec![0.0; 64];
        for i in rel[0].offsets(8) {
            map[i] = 1.0;
        }
        assert_eq!(box_concentration(&map, 8, &rel, &irr).unwrap(), f64::INFINITY);
    }

    #[test]
    fn report_table_has_reference_rows() {
        let s = seq(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]);
        let echo = ReportEcho {
            variant: Variant::Method2,
            seed: 1,
            alpha: 1.0,
            beta: 0.2,
            sign_convention: SignConvention::Standard,
            rescale_thresholds: RescaleTable::default().thresholds.to_vec(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        };
        let r = MetricsReport::from_results(&[s], echo).unwrap();
        let t = r.to_table();
        assert!(t.contains("published reference: method2"));
        assert!(t.contains("0.334"));
        let back: MetricsReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    proptest! {
        #[test]
        fn pcc_is_affine_invariant(
            p in prop::collection::vec(0f64..5.0, 3..20),
            scale in 0.1f64..10.0,
            shift in -3f64..3.0,
        ) {
            let labels: Vec<f64> = (0..p.len()).map(|i| (i % 6) as f64).collect();
            let q: Vec<f64> = p.iter().map(|v| scale * v + shift).collect();
            match (pearson(&p, &labels), pearson(&q, &labels)) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9),
                (a, b) => prop_assert_eq!(a.is_none(), b.is_none()),
            }
        }
    }
}

//! Batch sampling, batch-hard mining and the training stages.
//!
//! The saliency-supervision stage alternates, per batch, a global triplet
//! update on bottleneck features with a local update on saliency patches of
//! the same mined triplets. Regression finetuning follows; by default it
//! trains only the bottleneck layer, the head and the class centers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{self, partition_aus_with, PatchBox, Thresholds, Triplet};
use crate::data::{AuId, Dataset, Frame, NUM_LEVELS};
use crate::error::{Error, Result};
use crate::losses::{self, LocalPart, LossReport, PatchTriplet, SignConvention};
use crate::network::{sync_decoder, EncodeCache, Model, ModelConfig, Net};
use crate::ops::{self, HistogramSpec};
use crate::tensor::{ParamSet, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_global: f64,
    pub lr_local: f64,
    pub lr_finetune: f64,
    pub beta: f64,
    pub alpha: f64,
    /// Per-AU overrides of `alpha`, keyed by AU id.
    pub alpha_per_au: BTreeMap<AuId, f64>,
    pub batch_size: usize,
    /// Steps of the saliency-supervision (or global-only) stage.
    pub align_steps: usize,
    pub finetune_steps: usize,
    pub seed: u64,
    pub emd_bins: usize,
    pub patch_half: usize,
    pub lambda_center: f64,
    pub center_rate: f64,
    pub verbatim_loss_signs: bool,
    pub finetune_all: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_global: 0.001,
            lr_local: 0.01,
            lr_finetune: 0.001,
            beta: 0.2,
            alpha: 1.0,
            alpha_per_au: BTreeMap::new(),
            batch_size: 24,
            align_steps: 2000,
            finetune_steps: 2000,
            seed: 0,
            emd_bins: 32,
            patch_half: attention::DEFAULT_PATCH_HALF,
            lambda_center: 0.01,
            center_rate: losses::CENTER_RATE,
            verbatim_loss_signs: false,
            finetune_all: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_global", self.lr_global),
            ("lr_local", self.lr_local),
            ("lr_finetune", self.lr_finetune),
            ("beta", self.beta),
            ("alpha", self.alpha),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("train.{name} must be > 0, got {v}")));
            }
        }
        for (au, v) in &self.alpha_per_au {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("train.alpha_per_au.{au} must be > 0, got {v}")));
            }
        }
        if !(self.lambda_center >= 0.0 && self.lambda_center.is_finite()) {
            return Err(Error::Config(format!(
                "train.lambda_center must be >= 0, got {}",
                self.lambda_center
            )));
        }
        if !(0.0..=1.0).contains(&self.center_rate) {
            return Err(Error::Config(format!(
                "train.center_rate must lie in [0, 1], got {}",
                self.center_rate
            )));
        }
        if self.batch_size < 6 {
            return Err(Error::Config(format!("train.batch_size must be >= 6, got {}", self.batch_size)));
        }
        if self.emd_bins < 2 {
            return Err(Error::Config(format!("train.emd_bins must be >= 2, got {}", self.emd_bins)));
        }
        Ok(())
    }

    pub fn sign_convention(&self) -> SignConvention {
        SignConvention::from_verbatim_flag(self.verbatim_loss_signs)
    }

    pub fn histogram(&self) -> Result<HistogramSpec> {
        HistogramSpec::unit(self.emd_bins)
    }

    /// Thresholds per AU index of `au_ids`.
    pub fn thresholds(&self, au_ids: &[AuId]) -> Result<Vec<Option<f64>>> {
        if let Some(au) = self.alpha_per_au.keys().find(|a| !au_ids.contains(a)) {
            return Err(Error::Config(format!("train.alpha_per_au names unknown AU {au}")));
        }
        Ok(au_ids.iter().map(|a| self.alpha_per_au.get(a).copied()).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Global triplet stage, then finetuning.
    Method1,
    /// Alternating global and local stage, then finetuning.
    Method2,
    /// Finetuning from random initialization only.
    RegressionOnly,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Method1, Variant::Method2, Variant::RegressionOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Method1 => "method1",
            Variant::Method2 => "method2",
            Variant::RegressionOnly => "regression_only",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

/// Frame indices grouped by level, for stratified sampling.
#[derive(Clone, Debug)]
pub struct LevelPools {
    /// Levels holding at least two frames, ascending, with their frames.
    pools: Vec<(u8, Vec<usize>)>,
}

impl LevelPools {
    pub fn new(levels: &[u8]) -> Result<Self> {
        let mut by_level: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
        for (i, &l) in levels.iter().enumerate() {
            by_level.entry(l).or_default().push(i);
        }
        let pools: Vec<_> = by_level.into_iter().filter(|(_, v)| v.len() >= 2).collect();
        if pools.is_empty() {
            return Err(Error::CannotFormPositives);
        }
        Ok(Self { pools })
    }

    /// Pairs are drawn from levels in round-robin order starting at a random
    /// level; an odd batch gets one extra frame. Frames are distinct within
    /// a batch, so a level with few frames can leave the batch short.
    pub fn draw<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Vec<usize> {
        let m = self.pools.len();
        let start = rng.random_range(0..m);
        let mut want = vec![0usize; m];
        for j in 0..batch_size / 2 {
            want[(start + j) % m] += 2;
        }
        if batch_size % 2 == 1 {
            want[(start + batch_size / 2) % m] += 1;
        }
        let mut batch = Vec::with_capacity(batch_size);
        for (i, (_, pool)) in self.pools.iter().enumerate() {
            let n = want[i].min(pool.len());
            if n > 0 {
                batch.extend(index::sample(rng, pool.len(), n).into_iter().map(|k| pool[k]));
            }
        }
        batch
    }
}

/// Stratified batch of dataset frame indices.
pub fn sample_batch<R: Rng>(ds: &Dataset, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
    if ds.is_empty() {
        return Err(Error::Dataset("cannot sample from an empty dataset".into()));
    }
    let levels: Vec<u8> = ds.frames.iter().map(|f| f.level).collect();
    Ok(LevelPools::new(&levels)?.draw(batch_size, rng))
}

pub type MinedTriplets = Vec<Triplet>;

/// Batch-hard mining: for every anchor the farthest same-level positive and
/// the nearest different-level negative. Ties go to the lowest `keys` entry
/// (the dataset frame index). Returned indices are batch positions.
pub fn mine_hard_triplets(features: &[Vec<f64>], levels: &[u8], keys: &[usize]) -> Result<MinedTriplets> {
    let n = features.len();
    if levels.len() != n || keys.len() != n {
        return Err(Error::dim("mining batch", n, levels.len().min(keys.len())));
    }
    let mut out = Vec::new();
    for a in 0..n {
        let mut pos: Option<(f64, usize)> = None;
        let mut neg: Option<(f64, usize)> = None;
        for j in 0..n {
            if j == a {
                continue;
            }
            let d = ops::euclidean(&features[a], &features[j]);
            if levels[j] == levels[a] {
                let better = match pos {
                    None => true,
                    Some((bd, bj)) => d > bd || (d == bd && keys[j] < keys[bj]),
                };
                if better {
                    pos = Some((d, j));
                }
            } else {
                let better = match neg {
                    None => true,
                    Some((bd, bj)) => d < bd || (d == bd && keys[j] < keys[bj]),
                };
                if better {
                    neg = Some((d, j));
                }
            }
        }
        if let (Some((_, p)), Some((_, q))) = (pos, neg) {
            out.push(Triplet::new(a, p, q, (levels[a], levels[p], levels[q]))?);
        }
    }
    Ok(out)
}

fn check_finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Unit features of a batch, with the norms needed for the backward pass.
pub fn unit_features(caches: &[EncodeCache]) -> Vec<(Vec<f64>, f64)> {
    caches.iter().map(|c| ops::l2_normalize(&c.feature)).collect()
}

/// Mean global triplet loss over `triplets` (indices into `caches`),
/// accumulating its gradient into `grads`.
pub fn global_objective(
    net: Net<'_>,
    caches: &[EncodeCache],
    triplets: &[Triplet],
    beta: f64,
    conv: SignConvention,
    grads: &mut ParamSet,
) -> Result<f64> {
    if triplets.is_empty() {
        return Ok(0.0);
    }
    let units = unit_features(caches);
    let scale = 1.0 / triplets.len() as f64;
    let mut unit_grads: Vec<Option<Vec<f64>>> = vec![None; caches.len()];
    let mut total = 0.0;
    for t in triplets {
        let (l, g) = losses::global_triplet_grad(
            &units[t.anchor].0,
            &units[t.positive].0,
            &units[t.negative].0,
            t.gap as f64,
            beta,
            conv,
        )?;
        total += l;
        for (idx, gv) in [t.anchor, t.positive, t.negative].into_iter().zip(g) {
            let acc = unit_grads[idx].get_or_insert_with(|| vec![0.0; gv.len()]);
            for (a, b) in acc.iter_mut().zip(&gv) {
                *a += scale * b;
            }
        }
    }
    for (i, g) in unit_grads.iter().enumerate() {
        if let Some(g) = g {
            let (u, norm) = &units[i];
            let gf = ops::l2_normalize_backward(u, *norm, g);
            net.encode_backward(&caches[i], &gf, grads, true)?;
        }
    }
    let loss = total * scale;
    check_finite("loss_G", loss)?;
    Ok(loss)
}

/// Everything the local loss needs besides the network.
#[derive(Clone, Debug)]
pub struct LocalContext<'a> {
    pub thresholds: Thresholds<'a>,
    pub patch_half: usize,
    pub spec: HistogramSpec,
    pub conv: SignConvention,
    pub part: LocalPart,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LocalOutcome {
    /// Means over the triplets with a non-empty relevant set.
    pub loss_a: f64,
    pub loss_b: f64,
    pub used: usize,
    /// Triplets skipped because their relevant set was empty.
    pub empty_a: usize,
}

/// Local loss of `triplets` (indices into `frames` and `caches`), averaged
/// over triplets with a non-empty relevant set, accumulating its gradient
/// through the decoder and the encoder into `grads`.
pub fn local_objective(
    net: Net<'_>,
    frames: &[&Frame],
    caches: &[EncodeCache],
    triplets: &[Triplet],
    ctx: &LocalContext<'_>,
    grads: &mut ParamSet,
) -> Result<LocalOutcome> {
    if frames.len() != caches.len() {
        return Err(Error::dim("local batch", frames.len(), caches.len()));
    }
    let [h, w] = net.config.image_size;
    let mut out = LocalOutcome::default();
    let mut involved: Vec<usize> = triplets
        .iter()
        .flat_map(|t| [t.anchor, t.positive, t.negative])
        .collect();
    involved.sort_unstable();
    involved.dedup();
    let mut decoded = BTreeMap::new();
    let mut boxes: BTreeMap<usize, Vec<PatchBox>> = BTreeMap::new();
    for &i in &involved {
        decoded.insert(i, net.decode(&caches[i].feature)?);
        boxes.insert(i, attention::patch_boxes(&frames[i].landmarks, (h, w), ctx.patch_half)?);
    }
    let mut map_grads: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut parts = Vec::with_capacity(triplets.len());
    for t in triplets {
        let part = partition_aus_with(
            &frames[t.anchor].au_values,
            &frames[t.positive].au_values,
            &frames[t.negative].au_values,
            &ctx.thresholds,
        )?;
        if part.set_a.is_empty() {
            out.empty_a += 1;
        } else {
            out.used += 1;
        }
        parts.push(part);
    }
    if out.used == 0 {
        return Ok(out);
    }
    let scale = 1.0 / out.used as f64;
    for (t, part) in triplets.iter().zip(&parts) {
        if part.set_a.is_empty() {
            continue;
        }
        let members = [t.anchor, t.positive, t.negative];
        let n_au = frames[t.anchor].au_values.len();
        let patches: Vec<PatchTriplet> = (0..n_au)
            .map(|k| {
                let p = |i: usize| boxes[&i][k].extract(&decoded[&i].normalized, w);
                PatchTriplet {
                    au: k,
                    anchor: p(t.anchor),
                    positive: p(t.positive),
                    negative: p(t.negative),
                }
            })
            .collect();
        let terms = losses::local_terms(&patches, part, t.gap as f64, ctx.spec, ctx.conv, ctx.part)?;
        out.loss_a += terms.loss_a * scale;
        out.loss_b += terms.loss_b * scale;
        for (k, g3) in terms.grads.iter().enumerate() {
            for (member, g) in members.iter().zip(g3) {
                let mg = map_grads.entry(*member).or_insert_with(|| vec![0.0; h * w]);
                for (off, gv) in boxes[member][k].offsets(w).zip(g) {
                    mg[off] += scale * gv;
                }
            }
        }
    }
    for (i, mg) in &map_grads {
        let gf = net.decode_backward(&decoded[i], mg, grads)?;
        net.encode_backward(&caches[*i], &gf, grads, true)?;
    }
    check_finite("loss_A", out.loss_a)?;
    check_finite("loss_B", out.loss_b)?;
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RegressionOutcome {
    /// Mean smooth L1 between prediction and level.
    pub reg: f64,
    /// Mean L1 center loss.
    pub center: f64,
    /// `reg + lambda * center`.
    pub total: f64,
    /// Head inputs of the batch, the space the centers live in.
    pub embeddings: Vec<Vec<f64>>,
}

/// Mean regression loss of a batch with gradients into `grads`. With
/// `through_conv` false only the bottleneck layer and head receive
/// gradient, and `caches` may hold only `flat` and `feature`.
pub fn regression_objective(
    net: Net<'_>,
    centers: &Tensor,
    caches: &[EncodeCache],
    levels: &[u8],
    lambda_center: f64,
    through_conv: bool,
    grads: &mut ParamSet,
) -> Result<RegressionOutcome> {
    if caches.len() != levels.len() {
        return Err(Error::dim("regression batch", caches.len(), levels.len()));
    }
    if caches.is_empty() {
        return Ok(RegressionOutcome::default());
    }
    let scale = 1.0 / caches.len() as f64;
    let mut out = RegressionOutcome::default();
    for (cache, &level) in caches.iter().zip(levels) {
        let (input, norm) = net.head_input(&cache.feature);
        let (pred, pre) = net.head(&input)?;
        let target = level as f64;
        out.reg += losses::smooth_l1(pred, target) * scale;
        let (c, gc) = losses::center_loss_l1(&input, level, centers)?;
        out.center += c * scale;
        let mut g = net.head_backward(&input, pre, losses::smooth_l1_grad(pred, target) * scale, grads)?;
        for (a, b) in g.iter_mut().zip(&gc) {
            *a += lambda_center * scale * b;
        }
        let gf = net.head_input_backward(&input, norm, &g);
        net.encode_backward(cache, &gf, grads, through_conv)?;
        out.embeddings.push(input);
    }
    out.total = out.reg + lambda_center * out.center;
    check_finite("regression loss", out.total)?;
    Ok(out)
}

fn sgd(model: &mut Model, grads: &ParamSet, lr: f64) {
    if lr != 0.0 {
        model.params.add_scaled(grads, -lr);
    }
}

fn encode_batch(model: &Model, ds: &Dataset, batch: &[usize]) -> Result<Vec<EncodeCache>> {
    let net = model.net();
    batch.iter().map(|&i| net.encode(&ds.frames[i].image)).collect()
}

fn mine_batch(ds: &Dataset, batch: &[usize], caches: &[EncodeCache]) -> Result<MinedTriplets> {
    let units: Vec<Vec<f64>> = unit_features(caches).into_iter().map(|(u, _)| u).collect();
    let levels: Vec<u8> = batch.iter().map(|&i| ds.frames[i].level).collect();
    mine_hard_triplets(&units, &levels, batch)
}

/// Result of one alternating step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub report: LossReport,
    /// Triplets mined in the global phase (batch positions).
    pub mined: MinedTriplets,
    /// Triplets the local phase iterated over.
    pub local_triplets: MinedTriplets,
    pub local: LocalOutcome,
}

/// One global-only update (the first stage of method 1).
pub fn global_step(model: &mut Model, ds: &Dataset, batch: &[usize], cfg: &TrainConfig) -> Result<(LossReport, MinedTriplets)> {
    let caches = encode_batch(model, ds, batch)?;
    let mined = mine_batch(ds, batch, &caches)?;
    let mut grads = model.params.zeros_like();
    let loss_g = global_objective(model.net(), &caches, &mined, cfg.beta, cfg.sign_convention(), &mut grads)?;
    sgd(model, &grads, cfg.lr_global);
    let report = LossReport {
        loss_g,
        ..Default::default()
    };
    Ok((report, mined))
}

/// Global update, then a local update on the same mined triplets with the
/// re-encoded batch. The decoder reads the encoder's kernels throughout.
pub fn alternating_step(model: &mut Model, ds: &Dataset, batch: &[usize], cfg: &TrainConfig) -> Result<StepOutcome> {
    let (mut report, mined) = global_step(model, ds, batch, cfg)?;
    let local_triplets = mined.clone();

    sync_decoder(model)?;
    let caches = encode_batch(model, ds, batch)?;
    let frames: Vec<&Frame> = batch.iter().map(|&i| &ds.frames[i]).collect();
    let per_au = cfg.thresholds(&ds.au_ids)?;
    let ctx = LocalContext {
        thresholds: Thresholds {
            default: cfg.alpha,
            per_au: &per_au,
        },
        patch_half: cfg.patch_half,
        spec: cfg.histogram()?,
        conv: cfg.sign_convention(),
        part: LocalPart::Both,
    };
    let mut grads = model.params.zeros_like();
    let local = local_objective(model.net(), &frames, &caches, &local_triplets, &ctx, &mut grads)?;
    sgd(model, &grads, cfg.lr_local);
    sync_decoder(model)?;

    report.loss_a = local.loss_a;
    report.loss_b = local.loss_b;
    report.loss_l = losses::local_loss(local.loss_a, local.loss_b);
    Ok(StepOutcome {
        report,
        mined,
        local_triplets,
        local,
    })
}

/// Frozen-conv inputs for finetuning: flattened conv activations of every
/// frame, computed once because they cannot change.
pub fn conv_features(model: &Model, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
    let net = model.net();
    ds.frames.iter().map(|f| Ok(net.encode(&f.image)?.flat)).collect()
}

/// One regression update. `flats` (from [`conv_features`]) is used when the
/// conv layers are frozen; `None` encodes the images in full.
pub fn finetune_step(
    model: &mut Model,
    ds: &Dataset,
    batch: &[usize],
    cfg: &TrainConfig,
    flats: Option<&[Vec<f64>]>,
) -> Result<LossReport> {
    let through_conv = cfg.finetune_all;
    let caches: Vec<EncodeCache> = match (through_conv, flats) {
        (false, Some(flats)) => {
            let net = model.net();
            batch
                .iter()
                .map(|&i| {
                    Ok(EncodeCache {
                        inputs: Vec::new(),
                        pre: Vec::new(),
                        feature: net.bottleneck(&flats[i])?,
                        flat: flats[i].clone(),
                    })
                })
                .collect::<Result<_>>()?
        }
        _ => encode_batch(model, ds, batch)?,
    };
    let levels: Vec<u8> = batch.iter().map(|&i| ds.frames[i].level).collect();
    let mut grads = model.params.zeros_like();
    let out = regression_objective(
        model.net(),
        &model.centers,
        &caches,
        &levels,
        cfg.lambda_center,
        through_conv,
        &mut grads,
    )?;
    sgd(model, &grads, cfg.lr_finetune);
    losses::update_centers(&mut model.centers, &out.embeddings, &levels, cfg.center_rate)?;
    Ok(LossReport {
        reg: out.reg,
        center: out.center,
        ..Default::default()
    })
}

/// One line of the training log: a stage marker or a step report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogEntry {
    Stage { stage: String },
    Step(LossReport),
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<LogEntry>,
}

impl TrainOutcome {
    pub fn log_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for e in &self.log {
            s.push_str(&serde_json::to_string(e)?);
            s.push('\n');
        }
        Ok(s)
    }
}

/// Trains a fresh model seeded with `cfg.seed`.
pub fn train(ds: &Dataset, model_cfg: &ModelConfig, cfg: &TrainConfig, variant: Variant) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model = Model::new(model_cfg.clone(), cfg.seed)?;
    let [h, w] = model_cfg.image_size;
    if let Some(f) = ds.frames.iter().find(|f| f.image.shape() != [1, h, w]) {
        return Err(Error::Dataset(format!(
            "frame {} has shape {:?}, model expects [1, {h}, {w}]",
            f.frame_id,
            f.image.shape()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut log = Vec::new();
    let mut step = 0;
    let needs_batches = cfg.finetune_steps > 0 || (variant != Variant::RegressionOnly && cfg.align_steps > 0);
    let pools = if needs_batches {
        let levels: Vec<u8> = ds.frames.iter().map(|f| f.level).collect();
        Some(LevelPools::new(&levels)?)
    } else {
        None
    };

    if variant != Variant::RegressionOnly && cfg.align_steps > 0 {
        let pools = pools.as_ref().expect("built above");
        let stage = match variant {
            Variant::Method1 => "global",
            _ => "alternating",
        };
        log.push(LogEntry::Stage { stage: stage.into() });
        for _ in 0..cfg.align_steps {
            let batch = pools.draw(cfg.batch_size, &mut rng);
            let mut report = match variant {
                Variant::Method1 => global_step(&mut model, ds, &batch, cfg)?.0,
                _ => alternating_step(&mut model, ds, &batch, cfg)?.report,
            };
            report.step = step;
            step += 1;
            log.push(LogEntry::Step(report));
        }
    }

    if cfg.finetune_steps > 0 {
        let pools = pools.as_ref().expect("built above");
        log.push(LogEntry::Stage {
            stage: "finetune".into(),
        });
        let flats = if cfg.finetune_all {
            None
        } else {
            Some(conv_features(&model, ds)?)
        };
        for _ in 0..cfg.finetune_steps {
            let batch = pools.draw(cfg.batch_size, &mut rng);
            let mut report = finetune_step(&mut model, ds, &batch, cfg, flats.as_deref())?;
            report.step = step;
            step += 1;
            log.push(LogEntry::Step(report));
        }
    }
    debug_assert!(model.centers.shape() == [NUM_LEVELS, model_cfg.bottleneck_dim]);
    Ok(TrainOutcome { model, log })
}

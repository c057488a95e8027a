//! Brute-force oracles and the gradient suite, shared by the command line
//! and the acceptance tests.
//!
//! Each oracle is written independently of the code it checks: EMD against
//! an exhaustive search over integer transport plans, mining against a
//! lexicographic minimum over every candidate triple with exact integer
//! distances.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::attention::{Thresholds, Triplet};
use crate::data::{Frame, Landmark};
use crate::error::{Error, Result};
use crate::gradcheck::{grad_check, FnObjective, GradCheckReport};
use crate::losses::{LocalPart, SignConvention};
use crate::network::{Model, ModelConfig, Net};
use crate::ops::HistogramSpec;
use crate::tensor::{ParamSet, Tensor};
use crate::training::{
    global_objective, local_objective, mine_hard_triplets, regression_objective, LocalContext,
};

/// Largest accepted |patch_emd - transport cost|.
pub const EMD_TOLERANCE: f64 = 1e-9;
/// Largest accepted relative gradient error.
pub const GRAD_TOLERANCE: f64 = 1e-4;
/// Finite-difference step of the gradient suite.
pub const GRAD_EPS: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct EmdOracleReport {
    pub pairs: usize,
    pub max_abs_error: f64,
}

impl EmdOracleReport {
    pub fn passed(&self) -> bool {
        self.max_abs_error <= EMD_TOLERANCE
    }
}

/// Every split of `units` into three non-negative parts.
fn compositions(units: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for a in 0..=units {
        for b in 0..=units - a {
            out.push([a, b, units - a - b]);
        }
    }
    out
}

/// Minimum transport cost between integer mass vectors on bin centers
/// `centers`, enumerating every integer plan. Integer marginals admit an
/// integer optimal plan, so this is the exact optimum.
fn brute_force_transport(a: [u32; 3], b: [u32; 3], centers: [f64; 3], unit: f64) -> f64 {
    let mut best = f64::INFINITY;
    for t00 in 0..=a[0].min(b[0]) {
        for t01 in 0..=(a[0] - t00).min(b[1]) {
            let t02 = a[0] - t00 - t01;
            if t02 > b[2] {
                continue;
            }
            for t10 in 0..=a[1].min(b[0] - t00) {
                for t11 in 0..=(a[1] - t10).min(b[1] - t01) {
                    let t12 = a[1] - t10 - t11;
                    if t12 > b[2] - t02 {
                        continue;
                    }
                    let row2 = [b[0] - t00 - t10, b[1] - t01 - t11, b[2] - t02 - t12];
                    if row2.iter().sum::<u32>() != a[2] {
                        continue;
                    }
                    let plan = [[t00, t01, t02], [t10, t11, t12], row2];
                    let mut cost = 0.0;
                    for (i, row) in plan.iter().enumerate() {
                        for (j, &m) in row.iter().enumerate() {
                            cost += m as f64 * unit * (centers[i] - centers[j]).abs();
                        }
                    }
                    best = best.min(cost);
                }
            }
        }
    }
    best
}

/// `patch_emd` against brute-force transport on every pair of 3-bin
/// histograms with masses on the 0.1 grid. Each histogram is realized as a
/// 10-pixel patch with values on the bin centers.
pub fn emd_transport_oracle() -> Result<EmdOracleReport> {
    let spec = HistogramSpec::unit(3)?;
    let centers = [0.0, 0.5, 1.0];
    let patch = |m: [u32; 3]| -> Vec<f64> {
        m.iter()
            .zip(centers)
            .flat_map(|(&k, c)| std::iter::repeat_n(c, k as usize))
            .collect()
    };
    let hists = compositions(10);
    let mut report = EmdOracleReport {
        pairs: 0,
        max_abs_error: 0.0,
    };
    for &a in &hists {
        for &b in &hists {
            let got = crate::losses::patch_emd(&patch(a), &patch(b), spec)?;
            let want = brute_force_transport(a, b, centers, 0.1);
            report.max_abs_error = report.max_abs_error.max((got - want).abs());
            report.pairs += 1;
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MiningOracleReport {
    pub batches: usize,
    pub triplets: usize,
    /// First batch whose mined triplets differ from the oracle.
    pub first_mismatch: Option<usize>,
}

impl MiningOracleReport {
    pub fn passed(&self) -> bool {
        self.first_mismatch.is_none()
    }
}

/// Exhaustive batch-hard reference on integer features: for every anchor,
/// the lexicographic minimum of (-d(a,p), key p, d(a,n), key n) over all
/// valid (p, n).
fn exhaustive_mining(features: &[Vec<i64>], levels: &[u8], keys: &[usize]) -> Vec<(usize, usize, usize)> {
    let d2 = |i: usize, j: usize| -> i64 {
        features[i]
            .iter()
            .zip(&features[j])
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    };
    let n = features.len();
    let mut out = Vec::new();
    for a in 0..n {
        let mut best: Option<((i64, usize, i64, usize), (usize, usize))> = None;
        for p in (0..n).filter(|&p| p != a && levels[p] == levels[a]) {
            for q in (0..n).filter(|&q| levels[q] != levels[a]) {
                let key = (-d2(a, p), keys[p], d2(a, q), keys[q]);
                if best.as_ref().is_none_or(|(k, _)| key < *k) {
                    best = Some((key, (p, q)));
                }
            }
        }
        if let Some((_, (p, q))) = best {
            out.push((a, p, q));
        }
    }
    out
}

/// `mine_hard_triplets` against [`exhaustive_mining`] on random batches of
/// 2 to 32 frames. Features sit on a coarse integer grid so that distance
/// ties, and with them the tie-break, occur often.
pub fn mining_oracle(batches: usize, seed: u64) -> Result<MiningOracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = MiningOracleReport {
        batches,
        triplets: 0,
        first_mismatch: None,
    };
    for b in 0..batches {
        let n = rng.random_range(2..=32);
        let dim = rng.random_range(1..=4);
        let n_levels = rng.random_range(1..=6u8);
        let feats: Vec<Vec<i64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(0..3)).collect())
            .collect();
        let levels: Vec<u8> = (0..n).map(|_| rng.random_range(0..n_levels)).collect();
        let keys = index::sample(&mut rng, 1000, n).into_vec();
        let as_f64: Vec<Vec<f64>> = feats.iter().map(|f| f.iter().map(|&x| x as f64).collect()).collect();
        let got: Vec<(usize, usize, usize)> = mine_hard_triplets(&as_f64, &levels, &keys)?
            .iter()
            .map(|t| (t.anchor, t.positive, t.negative))
            .collect();
        let want = exhaustive_mining(&feats, &levels, &keys);
        report.triplets += want.len();
        if got != want && report.first_mismatch.is_none() {
            report.first_mismatch = Some(b);
        }
    }
    Ok(report)
}

/// Small model and frames for gradient checks: 8x8 inputs, channels
/// [2, 3, 4], an 8-d bottleneck and 3x3 patches around six landmarks.
#[derive(Clone, Debug)]
pub struct ToyFixture {
    pub model: Model,
    pub frames: Vec<Frame>,
    pub triplets: Vec<Triplet>,
    pub centers: Tensor,
    pub spec: HistogramSpec,
    pub patch_half: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lambda_center: f64,
}

const TOY_LEVELS: [u8; 6] = [1, 1, 4, 4, 0, 2];
const TOY_TRIPLETS: [(usize, usize, usize); 3] = [(0, 1, 2), (2, 3, 4), (1, 0, 5)];
const TOY_LANDMARKS: [(f64, f64); 6] = [(1.0, 1.0), (4.0, 1.0), (6.0, 2.0), (1.0, 5.0), (4.0, 5.0), (6.0, 6.0)];

impl ToyFixture {
    pub fn model_config() -> ModelConfig {
        ModelConfig {
            conv_channels: vec![2, 3, 4],
            bottleneck_dim: 8,
            image_size: [8, 8],
            ..ModelConfig::default()
        }
    }

    /// Frame 1 is a perturbed copy of frame 0 and frame 3 of frame 2, so
    /// positives are close and the set-B hinges can be active.
    pub fn new(seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Model::new(Self::model_config(), seed)?;
        // positive biases keep the tiny encoder's rectifiers alive
        for (name, t) in model.params.iter_mut() {
            if name.ends_with(".bias") {
                t.data_mut().fill(0.1);
            }
        }
        let noise = Normal::new(0.0, 0.05).expect("positive std");
        let mut images: Vec<Vec<f64>> = Vec::new();
        for i in 0..TOY_LEVELS.len() {
            let img: Vec<f64> = match i {
                1 | 3 => images[i - 1]
                    .iter()
                    .map(|v| (v + noise.sample(&mut rng)).clamp(0.0, 1.0))
                    .collect(),
                _ => (0..64).map(|_| rng.random::<f64>()).collect(),
            };
            images.push(img);
        }
        let frames = images
            .into_iter()
            .zip(TOY_LEVELS)
            .enumerate()
            .map(|(i, (img, level))| {
                Ok(Frame {
                    subject_id: "toy".into(),
                    frame_id: format!("t{i}"),
                    image: Tensor::new(vec![1, 8, 8], img)?,
                    pspi: level as f64,
                    level,
                    au_values: (0..TOY_LANDMARKS.len()).map(|_| rng.random_range(0.0..5.0)).collect(),
                    landmarks: TOY_LANDMARKS.iter().map(|&(x, y)| Landmark { x, y }).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let triplets = TOY_TRIPLETS
            .iter()
            .map(|&(a, p, n)| Triplet::new(a, p, n, (TOY_LEVELS[a], TOY_LEVELS[p], TOY_LEVELS[n])))
            .collect::<Result<Vec<_>>>()?;
        let centers = Tensor::from_fn(&[6, 8], |_| noise.sample(&mut rng) * 10.0);
        Ok(Self {
            model,
            frames,
            triplets,
            centers,
            spec: HistogramSpec::unit(8)?,
            patch_half: 1,
            alpha: 1.0,
            beta: 0.2,
            lambda_center: 1.0,
        })
    }

    fn net<'a>(&'a self, params: &'a ParamSet) -> Net<'a> {
        Net {
            config: &self.model.config,
            params,
        }
    }

    fn encode(&self, params: &ParamSet) -> Result<Vec<crate::network::EncodeCache>> {
        let net = self.net(params);
        self.frames.iter().map(|f| net.encode(&f.image)).collect()
    }

    /// loss_G with its gradient.
    pub fn global(&self, params: &ParamSet) -> Result<(f64, ParamSet)> {
        let caches = self.encode(params)?;
        let mut g = params.zeros_like();
        let l = global_objective(
            self.net(params),
            &caches,
            &self.triplets,
            self.beta,
            SignConvention::Standard,
            &mut g,
        )?;
        Ok((l, g))
    }

    /// (loss_A, loss_B) with the gradient of the `part` terms.
    pub fn local(&self, params: &ParamSet, part: LocalPart) -> Result<(f64, f64, ParamSet)> {
        let caches = self.encode(params)?;
        let frames: Vec<&Frame> = self.frames.iter().collect();
        let ctx = LocalContext {
            thresholds: Thresholds::scalar(self.alpha),
            patch_half: self.patch_half,
            spec: self.spec,
            conv: SignConvention::Standard,
            part,
        };
        let mut g = params.zeros_like();
        let out = local_objective(self.net(params), &frames, &caches, &self.triplets, &ctx, &mut g)?;
        Ok((out.loss_a, out.loss_b, g))
    }

    /// Smooth L1 plus weighted center loss through the whole encoder.
    pub fn regression(&self, params: &ParamSet) -> Result<(f64, ParamSet)> {
        let caches = self.encode(params)?;
        let levels: Vec<u8> = self.frames.iter().map(|f| f.level).collect();
        let mut g = params.zeros_like();
        let out = regression_objective(
            self.net(params),
            &self.centers,
            &caches,
            &levels,
            self.lambda_center,
            true,
            &mut g,
        )?;
        Ok((out.total, g))
    }

    /// Every objective under test is non-zero at the model's parameters.
    /// A degenerate encoding (all-zero feature) counts as inactive.
    pub fn all_active(&self) -> bool {
        let p = &self.model.params;
        let check = || -> Result<bool> {
            let (a, b, _) = self.local(p, LocalPart::Both)?;
            Ok(self.global(p)?.0 > 0.0 && a > 0.0 && b > 0.0 && self.regression(p)?.0 > 0.0)
        };
        check().unwrap_or(false)
    }
}

/// First fixture seed, counting up from `seed`, whose objectives are all
/// active (a zero hinge would make its check vacuous).
pub fn active_toy_fixture(seed: u64) -> Result<ToyFixture> {
    for s in seed..seed + 500 {
        let fx = ToyFixture::new(s)?;
        if fx.all_active() {
            return Ok(fx);
        }
    }
    Err(Error::Config(format!("no toy fixture with active losses near seed {seed}")))
}

#[derive(Clone, Debug)]
pub struct GradSuiteEntry {
    pub name: &'static str,
    pub value: f64,
    pub report: GradCheckReport,
}

impl GradSuiteEntry {
    pub fn passed(&self) -> bool {
        self.report.max_relative_error < GRAD_TOLERANCE
    }
}

/// Checks loss_G, loss_A, loss_B and smooth L1 + center loss on the toy
/// model, every one through the encoder and, for the local terms, the
/// decoder.
pub fn gradient_suite(fx: &ToyFixture) -> Result<Vec<GradSuiteEntry>> {
    let p = &fx.model.params;
    let mut out = Vec::new();
    let mut run = |name: &'static str, obj: &dyn crate::gradcheck::Objective| -> Result<()> {
        let value = obj.value(p)?;
        let report = grad_check(obj, p, GRAD_EPS)?;
        out.push(GradSuiteEntry { name, value, report });
        Ok(())
    };
    run(
        "loss_G",
        &FnObjective {
            value: |q: &ParamSet| Ok(fx.global(q)?.0),
            grad: |q: &ParamSet| fx.global(q),
        },
    )?;
    run(
        "loss_A",
        &FnObjective {
            value: |q: &ParamSet| Ok(fx.local(q, LocalPart::SetA)?.0),
            grad: |q: &ParamSet| {
                let (a, _, g) = fx.local(q, LocalPart::SetA)?;
                Ok((a, g))
            },
        },
    )?;
    run(
        "loss_B",
        &FnObjective {
            value: |q: &ParamSet| Ok(fx.local(q, LocalPart::SetB)?.1),
            grad: |q: &ParamSet| {
                let (_, b, g) = fx.local(q, LocalPart::SetB)?;
                Ok((b, g))
            },
        },
    )?;
    run(
        "smooth_l1+center",
        &FnObjective {
            value: |q: &ParamSet| Ok(fx.regression(q)?.0),
            grad: |q: &ParamSet| fx.regression(q),
        },
    )?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transport_examples() {
        let c = [0.0, 0.5, 1.0];
        assert_eq!(brute_force_transport([10, 0, 0], [0, 0, 10], c, 0.1), 1.0);
        assert_eq!(brute_force_transport([10, 0, 0], [0, 10, 0], c, 0.1), 0.5);
        assert_eq!(brute_force_transport([3, 4, 3], [3, 4, 3], c, 0.1), 0.0);
        assert_eq!(compositions(10).len(), 66);
    }

    #[test]
    fn exhaustive_mining_example() {
        // levels 0,0,1: anchor 0 has positive 1 and negative 2
        let f = vec![vec![0], vec![2], vec![1]];
        let m = exhaustive_mining(&f, &[0, 0, 1], &[0, 1, 2]);
        assert_eq!(m, vec![(0, 1, 2), (1, 0, 2)]);
    }

    #[test]
    fn emd_oracle_passes() {
        let r = emd_transport_oracle().unwrap();
        assert_eq!(r.pairs, 66 * 66);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn mining_oracle_passes() {
        let r = mining_oracle(50, 3).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.triplets > 0);
    }

    #[test]
    fn toy_fixture_activates_every_loss() {
        let fx = active_toy_fixture(0).unwrap();
        assert!(fx.all_active());
    }

    #[test]
    fn gradient_suite_passes() {
        let fx = active_toy_fixture(0).unwrap();
        for e in gradient_suite(&fx).unwrap() {
            assert!(e.passed(), "{} {:?}", e.name, e.report);
            assert!(e.value > 0.0);
        }
    }
}

//! Encoder, weight-tied saliency decoder and regression head.
//!
//! The encoder is a stack of strided convolutions (each followed by a
//! rectifier) and a linear layer to the bottleneck. The decoder owns no
//! parameters: it applies the transpose of the bottleneck layer and then the
//! exact adjoint of every convolution, in reverse order, using the encoder's
//! own kernels. Following the deconvnet convention, each decoder activation
//! that mirrors an encoder rectifier is rectified as well, and the final map
//! is min-max normalized.
//!
//! Parameter names: `conv{i}.weight`, `conv{i}.bias`, `fc.weight`,
//! `fc.bias` (encoder) and `head.weight`, `head.bias` (regression head).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::NUM_LEVELS;
use crate::error::{Error, Result};
use crate::ops::{self, ConvGeometry, MinMax};
use crate::tensor::{ParamSet, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rectifier {
    #[default]
    Relu,
    /// Linear network; makes encode/decode an exact adjoint pair.
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub bottleneck_dim: usize,
    /// `[H, W]`
    pub image_size: [usize; 2],
    pub rectifier: Rectifier,
    /// Feed the L2-normalized bottleneck feature (the global-loss embedding)
    /// to the regression head and the center loss instead of the raw one.
    pub unit_head: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            conv_channels: vec![8, 16, 32],
            kernel: 3,
            stride: 2,
            padding: 1,
            bottleneck_dim: 64,
            image_size: [32, 32],
            rectifier: Rectifier::Relu,
            unit_head: false,
        }
    }
}

impl ModelConfig {
    pub fn geometry(&self) -> Result<ConvGeometry> {
        ConvGeometry::new(self.kernel, self.stride, self.padding)
    }

    /// `(C, H, W)` entering each conv layer, followed by the output of the
    /// last one.
    pub fn layer_dims(&self) -> Result<Vec<(usize, usize, usize)>> {
        let geo = self.geometry()?;
        let [mut h, mut w] = self.image_size;
        let mut dims = vec![(1, h, w)];
        for &c in &self.conv_channels {
            h = geo.out_len(h)?;
            w = geo.out_len(w)?;
            dims.push((c, h, w));
        }
        Ok(dims)
    }

    pub fn flat_len(&self) -> Result<usize> {
        let (c, h, w) = *self.layer_dims()?.last().expect("non-empty");
        Ok(c * h * w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return Err(Error::Config("model.conv_channels must be non-empty and positive".into()));
        }
        if self.bottleneck_dim < 8 {
            return Err(Error::Config(format!(
                "model.bottleneck_dim {} is below 8",
                self.bottleneck_dim
            )));
        }
        self.layer_dims()?;
        Ok(())
    }

    pub fn conv_weight(i: usize) -> String {
        format!("conv{i}.weight")
    }

    pub fn conv_bias(i: usize) -> String {
        format!("conv{i}.bias")
    }
}

pub const FC_WEIGHT: &str = "fc.weight";
pub const FC_BIAS: &str = "fc.bias";
pub const HEAD_WEIGHT: &str = "head.weight";
pub const HEAD_BIAS: &str = "head.bias";

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    /// Encoder and head parameters (see module docs for names).
    pub params: ParamSet,
    /// `[6, bottleneck_dim]` class centers for the center loss.
    pub centers: Tensor,
}

impl Model {
    /// He-style fan-in initialization; biases and centers start at zero.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut he = |shape: &[usize], fan_in: usize| {
            let n = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            Tensor::from_fn(shape, |_| n.sample(&mut rng))
        };
        let k = config.kernel;
        let mut c_in = 1;
        for (i, &c) in config.conv_channels.iter().enumerate() {
            params.insert(ModelConfig::conv_weight(i), he(&[c, c_in, k, k], c_in * k * k))?;
            params.insert(ModelConfig::conv_bias(i), Tensor::zeros(&[c]))?;
            c_in = c;
        }
        let flat = config.flat_len()?;
        let d = config.bottleneck_dim;
        params.insert(FC_WEIGHT, he(&[d, flat], flat))?;
        params.insert(FC_BIAS, Tensor::zeros(&[d]))?;
        params.insert(HEAD_WEIGHT, he(&[1, d], d))?;
        params.insert(HEAD_BIAS, Tensor::zeros(&[1]))?;
        Ok(Self {
            centers: Tensor::zeros(&[NUM_LEVELS, d]),
            config,
            params,
        })
    }

    pub fn net(&self) -> Net<'_> {
        Net {
            config: &self.config,
            params: &self.params,
        }
    }

    /// The decoder's view of the encoder parameters.
    pub fn decoder(&self) -> Result<DecoderView<'_>> {
        DecoderView::new(&self.config, &self.params)
    }

    pub fn encode(&self, image: &Tensor) -> Result<Vec<f64>> {
        Ok(self.net().encode(image)?.feature)
    }

    pub fn decode_saliency(&self, feature: &[f64]) -> Result<Tensor> {
        let [h, w] = self.config.image_size;
        Tensor::new(vec![1, h, w], self.net().decode(feature)?.normalized)
    }

    pub fn regress(&self, feature: &[f64]) -> Result<f64> {
        Ok(self.net().regress(feature)?.0)
    }

    /// Saliency map of an image: encode, then decode through the mirror.
    pub fn saliency(&self, image: &Tensor) -> Result<Tensor> {
        let f = self.encode(image)?;
        self.decode_saliency(&f)
    }
}

/// Borrowed kernels used by the decoder. It has no storage of its own, so
/// it can never drift from the encoder.
pub struct DecoderView<'a> {
    pub kernels: Vec<&'a Tensor>,
    pub fc_weight: &'a Tensor,
}

impl<'a> DecoderView<'a> {
    fn new(config: &ModelConfig, params: &'a ParamSet) -> Result<Self> {
        let kernels = (0..config.conv_channels.len())
            .map(|i| params.expect(&ModelConfig::conv_weight(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kernels,
            fc_weight: params.expect(FC_WEIGHT)?,
        })
    }
}

/// Checks that the decoder view is bit-identical to the encoder parameters.
pub fn sync_decoder(model: &Model) -> Result<()> {
    let view = model.decoder()?;
    let pairs = view
        .kernels
        .iter()
        .enumerate()
        .map(|(i, k)| (ModelConfig::conv_weight(i), *k))
        .chain(std::iter::once((FC_WEIGHT.to_string(), view.fc_weight)));
    for (name, mirrored) in pairs {
        let enc = model.params.expect(&name)?;
        if !std::ptr::eq(enc, mirrored) && !enc.bit_eq(mirrored) {
            return Err(Error::MirrorDiverged(name));
        }
    }
    Ok(())
}

/// Activations kept by [`Net::encode`] for the backward pass.
#[derive(Clone, Debug)]
pub struct EncodeCache {
    /// Input to each conv layer (image first).
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation of each conv layer.
    pub pre: Vec<Vec<f64>>,
    /// Flattened last activation, input of the bottleneck layer.
    pub flat: Vec<f64>,
    pub feature: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct DecodeCache {
    pub feature: Vec<f64>,
    /// Pre-rectification decoder activations, bottleneck side first.
    pub pre: Vec<Vec<f64>>,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    minmax: MinMax,
}

/// Functional view of a configuration and a parameter set.
#[derive(Clone, Copy)]
pub struct Net<'a> {
    pub config: &'a ModelConfig,
    pub params: &'a ParamSet,
}

impl Net<'_> {
    fn rectify(&self, v: &mut [f64]) {
        if self.config.rectifier == Rectifier::Relu {
            ops::relu_in_place(v);
        }
    }

    fn rectify_backward(&self, pre: &[f64], g: &mut [f64]) {
        if self.config.rectifier == Rectifier::Relu {
            ops::relu_backward_in_place(pre, g);
        }
    }

    pub fn encode(&self, image: &Tensor) -> Result<EncodeCache> {
        let [h, w] = self.config.image_size;
        if image.shape() != [1, h, w] {
            return Err(Error::Shape(format!(
                "image {:?} does not match configured [1, {h}, {w}]",
                image.shape()
            )));
        }
        let geo = self.config.geometry()?;
        let dims = self.config.layer_dims()?;
        let mut inputs = Vec::with_capacity(dims.len() - 1);
        let mut pre = Vec::with_capacity(dims.len() - 1);
        let mut x = image.data().to_vec();
        for i in 0..dims.len() - 1 {
            let (c, h, w) = dims[i];
            let (o, ho, wo) = dims[i + 1];
            let k = self.params.expect(&ModelConfig::conv_weight(i))?;
            let b = self.params.expect(&ModelConfig::conv_bias(i))?;
            let mut y = vec![0.0; o * ho * wo];
            ops::conv_forward_raw(&x, (c, h, w), k.data(), o, geo, &mut y, (ho, wo));
            for (oc, chunk) in y.chunks_mut(ho * wo).enumerate() {
                let bias = b.data()[oc];
                chunk.iter_mut().for_each(|v| *v += bias);
            }
            let mut a = y.clone();
            self.rectify(&mut a);
            inputs.push(x);
            pre.push(y);
            x = a;
        }
        let feature = self.bottleneck(&x)?;
        Ok(EncodeCache {
            inputs,
            pre,
            flat: x,
            feature,
        })
    }

    /// The bottleneck layer alone, applied to a flattened conv activation.
    pub fn bottleneck(&self, flat: &[f64]) -> Result<Vec<f64>> {
        let fc = self.params.expect(FC_WEIGHT)?;
        let fb = self.params.expect(FC_BIAS)?;
        let n = flat.len();
        if fc.len() != n * fb.len() {
            return Err(Error::dim("bottleneck input", fc.len() / fb.len(), n));
        }
        Ok(fc
            .data()
            .chunks_exact(n)
            .zip(fb.data())
            .map(|(row, b)| b + row.iter().zip(flat).map(|(w, v)| w * v).sum::<f64>())
            .collect())
    }

    /// Back-propagates `grad_feature` into `grads`. With `through_conv`
    /// false only the bottleneck layer receives gradient.
    pub fn encode_backward(
        &self,
        cache: &EncodeCache,
        grad_feature: &[f64],
        grads: &mut ParamSet,
        through_conv: bool,
    ) -> Result<()> {
        let fc = self.params.expect(FC_WEIGHT)?;
        let n = cache.flat.len();
        {
            let gw = grads.get_mut(FC_WEIGHT).expect("grad set mirrors params").data_mut();
            for (d, &g) in grad_feature.iter().enumerate() {
                if g != 0.0 {
                    for (gwv, &x) in gw[d * n..(d + 1) * n].iter_mut().zip(&cache.flat) {
                        *gwv += g * x;
                    }
                }
            }
        }
        {
            let gb = grads.get_mut(FC_BIAS).expect("grad set mirrors params").data_mut();
            for (b, g) in gb.iter_mut().zip(grad_feature) {
                *b += g;
            }
        }
        if !through_conv {
            return Ok(());
        }
        let mut g = vec![0.0; n];
        for (row, &gf) in fc.data().chunks_exact(n).zip(grad_feature) {
            if gf != 0.0 {
                for (gv, w) in g.iter_mut().zip(row) {
                    *gv += gf * w;
                }
            }
        }
        let geo = self.config.geometry()?;
        let dims = self.config.layer_dims()?;
        for i in (0..dims.len() - 1).rev() {
            let (c, h, w) = dims[i];
            let (o, ho, wo) = dims[i + 1];
            self.rectify_backward(&cache.pre[i], &mut g);
            {
                let gb = grads
                    .get_mut(&ModelConfig::conv_bias(i))
                    .expect("grad set mirrors params")
                    .data_mut();
                for (oc, chunk) in g.chunks(ho * wo).enumerate() {
                    gb[oc] += chunk.iter().sum::<f64>();
                }
            }
            let gk = grads
                .get_mut(&ModelConfig::conv_weight(i))
                .expect("grad set mirrors params")
                .data_mut();
            ops::conv_kernel_grad_raw(&cache.inputs[i], (c, h, w), &g, (o, ho, wo), geo, gk);
            if i > 0 {
                let k = self.params.expect(&ModelConfig::conv_weight(i))?;
                let mut gx = vec![0.0; c * h * w];
                ops::conv_adjoint_raw(&g, (o, ho, wo), k.data(), c, geo, &mut gx, (h, w));
                g = gx;
            }
        }
        Ok(())
    }

    /// Raw (unnormalized) saliency map from a bottleneck feature.
    pub fn decode(&self, feature: &[f64]) -> Result<DecodeCache> {
        let d = self.config.bottleneck_dim;
        if feature.len() != d {
            return Err(Error::dim("bottleneck", d, feature.len()));
        }
        let geo = self.config.geometry()?;
        let dims = self.config.layer_dims()?;
        let fc = self.params.expect(FC_WEIGHT)?;
        let n = self.config.flat_len()?;
        let mut z = vec![0.0; n];
        for (row, &f) in fc.data().chunks_exact(n).zip(feature) {
            for (zv, w) in z.iter_mut().zip(row) {
                *zv += f * w;
            }
        }
        let mut pre = vec![z.clone()];
        let mut x = z;
        self.rectify(&mut x);
        for i in (0..dims.len() - 1).rev() {
            let (c, h, w) = dims[i];
            let (o, ho, wo) = dims[i + 1];
            let k = self.params.expect(&ModelConfig::conv_weight(i))?;
            let mut y = vec![0.0; c * h * w];
            ops::conv_adjoint_raw(&x, (o, ho, wo), k.data(), c, geo, &mut y, (h, w));
            if i > 0 {
                pre.push(y.clone());
                self.rectify(&mut y);
            }
            x = y;
        }
        let (normalized, minmax) = ops::minmax_normalize(&x);
        Ok(DecodeCache {
            feature: feature.to_vec(),
            pre,
            raw: x,
            normalized,
            minmax,
        })
    }

    /// Back-propagates a gradient on the normalized map. Kernel gradients go
    /// to the encoder's own parameters; returns the gradient on the feature.
    pub fn decode_backward(&self, cache: &DecodeCache, grad_map: &[f64], grads: &mut ParamSet) -> Result<Vec<f64>> {
        let geo = self.config.geometry()?;
        let dims = self.config.layer_dims()?;
        let mut g = ops::minmax_backward(&cache.normalized, &cache.minmax, grad_map);
        // Walk the decoder backwards: layer 0 adjoint first.
        // Input to the adjoint of layer i is the rectified pre[L-1-i].
        let layers = dims.len() - 1;
        for i in 0..layers {
            let (c, h, w) = dims[i];
            let (o, ho, wo) = dims[i + 1];
            let code_pre = &cache.pre[layers - 1 - i];
            let mut code = code_pre.clone();
            self.rectify(&mut code);
            let k = self.params.expect(&ModelConfig::conv_weight(i))?;
            {
                let gk = grads
                    .get_mut(&ModelConfig::conv_weight(i))
                    .expect("grad set mirrors params")
                    .data_mut();
                // d<g, adjoint(code, K)>/dK = kernel grad of conv(g, K) against code
                ops::conv_kernel_grad_raw(&g, (c, h, w), &code, (o, ho, wo), geo, gk);
            }
            let mut gc = vec![0.0; o * ho * wo];
            ops::conv_forward_raw(&g, (c, h, w), k.data(), o, geo, &mut gc, (ho, wo));
            self.rectify_backward(code_pre, &mut gc);
            g = gc;
        }
        // g is now the gradient on z = fc^T f
        let fc = self.params.expect(FC_WEIGHT)?;
        let n = g.len();
        let mut gf = vec![0.0; cache.feature.len()];
        {
            let gw = grads.get_mut(FC_WEIGHT).expect("grad set mirrors params").data_mut();
            for (d, &f) in cache.feature.iter().enumerate() {
                let row = &mut gw[d * n..(d + 1) * n];
                for (gwv, &gz) in row.iter_mut().zip(&g) {
                    *gwv += f * gz;
                }
            }
        }
        for (d, row) in fc.data().chunks_exact(n).enumerate() {
            gf[d] = row.iter().zip(&g).map(|(w, gz)| w * gz).sum();
        }
        Ok(gf)
    }

    /// What the head and the center loss see: the raw feature, or its unit
    /// rescaling when `unit_head` is set. Returns the vector and the norm
    /// divided out (1 for the raw feature).
    pub fn head_input(&self, feature: &[f64]) -> (Vec<f64>, f64) {
        if self.config.unit_head {
            ops::l2_normalize(feature)
        } else {
            (feature.to_vec(), 1.0)
        }
    }

    /// Pulls a gradient on [`Net::head_input`] back onto the raw feature.
    pub fn head_input_backward(&self, input: &[f64], norm: f64, grad: &[f64]) -> Vec<f64> {
        if self.config.unit_head {
            ops::l2_normalize_backward(input, norm, grad)
        } else {
            grad.to_vec()
        }
    }

    /// Head on an already transformed input; returns `(prediction, pre_activation)`.
    pub fn head(&self, input: &[f64]) -> Result<(f64, f64)> {
        let w = self.params.expect(HEAD_WEIGHT)?;
        let b = self.params.expect(HEAD_BIAS)?;
        if w.len() != input.len() {
            return Err(Error::dim("head input", w.len(), input.len()));
        }
        let x = b.data()[0] + w.data().iter().zip(input).map(|(a, f)| a * f).sum::<f64>();
        Ok((ops::scaled_sigmoid(x), x))
    }

    /// Gradient of a loss with slope `grad_pred` on the prediction; returns
    /// the gradient on the head input.
    pub fn head_backward(&self, input: &[f64], pre: f64, grad_pred: f64, grads: &mut ParamSet) -> Result<Vec<f64>> {
        let g = grad_pred * ops::scaled_sigmoid_grad(pre);
        let w = self.params.expect(HEAD_WEIGHT)?;
        {
            let gw = grads.get_mut(HEAD_WEIGHT).expect("grad set mirrors params").data_mut();
            for (gv, f) in gw.iter_mut().zip(input) {
                *gv += g * f;
            }
        }
        grads.get_mut(HEAD_BIAS).expect("grad set mirrors params").data_mut()[0] += g;
        Ok(w.data().iter().map(|wv| wv * g).collect())
    }

    /// Returns `(prediction, pre_activation)` for a raw bottleneck feature.
    pub fn regress(&self, feature: &[f64]) -> Result<(f64, f64)> {
        self.head(&self.head_input(feature).0)
    }

    /// [`Net::head_backward`] chained through [`Net::head_input`]; returns
    /// the gradient on the raw feature.
    pub fn regress_backward(&self, feature: &[f64], pre: f64, grad_pred: f64, grads: &mut ParamSet) -> Result<Vec<f64>> {
        let (input, norm) = self.head_input(feature);
        let g = self.head_backward(&input, pre, grad_pred, grads)?;
        Ok(self.head_input_backward(&input, norm, &g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_config() -> ModelConfig {
        ModelConfig {
            conv_channels: vec![2, 3, 4],
            bottleneck_dim: 8,
            image_size: [8, 8],
            ..ModelConfig::default()
        }
    }

    fn rand_image(seed: u64, h: usize, w: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(&[1, h, w], |_| rng.random_range(0.0..1.0))
    }

    #[test]
    fn default_geometry() {
        let c = ModelConfig::default();
        assert_eq!(
            c.layer_dims().unwrap(),
            vec![(1, 32, 32), (8, 16, 16), (16, 8, 8), (32, 4, 4)]
        );
        assert_eq!(c.flat_len().unwrap(), 512);
        let bad = ModelConfig {
            bottleneck_dim: 4,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_image_with_zero_biases_gives_zero_feature() {
        let m = Model::new(ModelConfig::default(), 1).unwrap();
        let f = m.encode(&Tensor::zeros(&[1, 32, 32])).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
        let s = m.decode_saliency(&f).unwrap();
        assert_eq!(s.shape(), &[1, 32, 32]);
        assert!(s.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn encode_is_deterministic_and_size_checked() {
        let a = Model::new(ModelConfig::default(), 9).unwrap();
        let b = Model::new(ModelConfig::default(), 9).unwrap();
        let img = rand_image(3, 32, 32);
        let fa = a.encode(&img).unwrap();
        let fb = b.encode(&img).unwrap();
        assert!(fa.iter().zip(&fb).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.encode(&Tensor::zeros(&[1, 16, 16])).is_err());
    }

    #[test]
    fn encode_equals_primitive_composition() {
        let cfg = ModelConfig::default();
        let m = Model::new(cfg.clone(), 5).unwrap();
        let img = rand_image(4, 32, 32);
        let geo = cfg.geometry().unwrap();
        let mut x = img.clone();
        for i in 0..3 {
            let k = m.params.get(&ModelConfig::conv_weight(i)).unwrap();
            let b = m.params.get(&ModelConfig::conv_bias(i)).unwrap();
            let mut y = ops::conv2d(&x, k, geo).unwrap();
            let (_, h, w) = y.chw().unwrap();
            for (j, v) in y.data_mut().iter_mut().enumerate() {
                *v += b.data()[j / (h * w)];
            }
            x = ops::relu(&y);
        }
        let fc = m.params.get(FC_WEIGHT).unwrap();
        let expect: Vec<f64> = fc
            .data()
            .chunks(512)
            .map(|row| row.iter().zip(x.data()).map(|(a, b)| a * b).sum())
            .collect();
        let got = m.encode(&img).unwrap();
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_mode_decode_is_adjoint_of_encode() {
        for cfg in [
            ModelConfig {
                rectifier: Rectifier::Identity,
                ..ModelConfig::default()
            },
            ModelConfig {
                rectifier: Rectifier::Identity,
                ..toy_config()
            },
        ] {
            let m = Model::new(cfg.clone(), 11).unwrap();
            let [h, w] = cfg.image_size;
            let img = rand_image(12, h, w);
            let f = m.encode(&img).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(13);
            let y: Vec<f64> = (0..cfg.bottleneck_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let raw = m.net().decode(&y).unwrap().raw;
            let lhs: f64 = f.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = img.data().iter().zip(&raw).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-6 * lhs.abs().max(rhs.abs()), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn saliency_is_normalized() {
        let m = Model::new(ModelConfig::default(), 2).unwrap();
        let s = m.saliency(&rand_image(1, 32, 32)).unwrap();
        let min = s.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let max = s.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((min, max), (0.0, 1.0));
    }

    #[test]
    fn regression_head_range() {
        let mut m = Model::new(toy_config(), 0).unwrap();
        for v in m.params.get_mut(HEAD_WEIGHT).unwrap().data_mut() {
            *v = 0.0;
        }
        assert_eq!(m.regress(&[0.0; 8]).unwrap(), 2.5);
        let m = Model::new(toy_config(), 0).unwrap();
        for scale in [-1e3, -1.0, 0.0, 1.0, 1e3] {
            let p = m.regress(&[scale; 8]).unwrap();
            assert!((0.0..=5.0).contains(&p));
        }
    }

    #[test]
    fn decoder_tracks_encoder_updates() {
        let mut m = Model::new(toy_config(), 3).unwrap();
        sync_decoder(&m).unwrap();
        let f = vec![0.5; 8];
        let before = m.net().decode(&f).unwrap().raw;
        m.params.get_mut("conv0.weight").unwrap().data_mut()[0] += 1.0;
        sync_decoder(&m).unwrap();
        let after = m.net().decode(&f).unwrap().raw;
        assert_ne!(before, after);
        assert!(std::ptr::eq(
            m.decoder().unwrap().kernels[0],
            m.params.get("conv0.weight").unwrap()
        ));
    }
}

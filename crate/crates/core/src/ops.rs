//! Differentiable primitives: strided convolution and its exact adjoint,
//! rectification, the scaled sigmoid, triangular soft histograms and
//! per-map min-max normalization. Every forward has a matching backward.
//!
//! Convolution geometry follows the usual floor rule
//! `out = (in + 2*pad - k) / stride + 1`; rows/columns of the input that no
//! output window reaches simply receive zero from the adjoint.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Stride and zero-padding of a square, odd-sized convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn new(kernel: usize, stride: usize, pad: usize) -> Result<Self> {
        if kernel == 0 || kernel % 2 == 0 {
            return Err(Error::Shape(format!("kernel size {kernel} must be odd")));
        }
        if stride == 0 {
            return Err(Error::Shape("stride must be at least 1".into()));
        }
        Ok(Self {
            kernel,
            stride,
            pad,
        })
    }

    pub fn out_len(&self, n: usize) -> Result<usize> {
        let padded = n + 2 * self.pad;
        if padded < self.kernel {
            return Err(Error::Shape(format!(
                "extent {n} with pad {} is smaller than kernel {}",
                self.pad, self.kernel
            )));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    /// Output positions `o` whose tap `tap` lands inside `[0, n)`.
    #[inline]
    fn valid_range(&self, tap: usize, n: usize, out: usize) -> (usize, usize) {
        let s = self.stride;
        // o*s + tap - pad in [0, n)
        let lo = if self.pad > tap {
            (self.pad - tap).div_ceil(s)
        } else {
            0
        };
        let hi = if n + self.pad > tap {
            ((n + self.pad - tap - 1) / s + 1).min(out)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

fn kernel_dims(kernels: &Tensor) -> Result<(usize, usize, usize)> {
    match kernels.shape()[..] {
        [o, c, k1, k2] => {
            if k1 != k2 {
                return Err(Error::dim("kernel width", k1, k2));
            }
            Ok((o, c, k1))
        }
        _ => Err(Error::dim("kernel rank", 4, kernels.rank())),
    }
}

fn check_kernel(kernels: &Tensor, geo: ConvGeometry) -> Result<(usize, usize)> {
    let (o, c, k) = kernel_dims(kernels)?;
    if k != geo.kernel {
        return Err(Error::dim("kernel size", geo.kernel, k));
    }
    Ok((o, c))
}

/// Cross-correlation of a `[C, H, W]` input with `[O, C, k, k]` kernels.
pub fn conv2d(input: &Tensor, kernels: &Tensor, geo: ConvGeometry) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    let (o, kc) = check_kernel(kernels, geo)?;
    if kc != c {
        return Err(Error::dim("input channels", kc, c));
    }
    let (ho, wo) = (geo.out_len(h)?, geo.out_len(w)?);
    let mut out = vec![0.0; o * ho * wo];
    conv_forward_raw(input.data(), (c, h, w), kernels.data(), o, geo, &mut out, (ho, wo));
    Tensor::new(vec![o, ho, wo], out)
}

/// Exact linear adjoint of [`conv2d`] for the same kernels and geometry.
/// `input_hw` is the spatial size of the forward input being mirrored.
pub fn conv2d_adjoint(
    code: &Tensor,
    kernels: &Tensor,
    geo: ConvGeometry,
    input_hw: (usize, usize),
) -> Result<Tensor> {
    let (o, ho, wo) = code.chw()?;
    let (ko, c) = check_kernel(kernels, geo)?;
    if ko != o {
        return Err(Error::dim("code channels", ko, o));
    }
    let (h, w) = input_hw;
    if geo.out_len(h)? != ho {
        return Err(Error::dim("code height", geo.out_len(h)?, ho));
    }
    if geo.out_len(w)? != wo {
        return Err(Error::dim("code width", geo.out_len(w)?, wo));
    }
    let mut out = vec![0.0; c * h * w];
    conv_adjoint_raw(code.data(), (o, ho, wo), kernels.data(), c, geo, &mut out, (h, w));
    Tensor::new(vec![c, h, w], out)
}

/// Gradient of `<grad_out, conv2d(input, K)>` with respect to `K`.
pub fn conv2d_kernel_grad(input: &Tensor, grad_out: &Tensor, geo: ConvGeometry) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    let (o, ho, wo) = grad_out.chw()?;
    if geo.out_len(h)? != ho {
        return Err(Error::dim("grad height", geo.out_len(h)?, ho));
    }
    if geo.out_len(w)? != wo {
        return Err(Error::dim("grad width", geo.out_len(w)?, wo));
    }
    let k = geo.kernel;
    let mut gk = vec![0.0; o * c * k * k];
    conv_kernel_grad_raw(input.data(), (c, h, w), grad_out.data(), (o, ho, wo), geo, &mut gk);
    Tensor::new(vec![o, c, k, k], gk)
}

/// Unfolds the input into a `[c * k * k, ho * wo]` patch matrix (zero
/// padding included), row index `(ic * k + a) * k + b`.
fn im2col(x: &[f64], (c, h, w): (usize, usize, usize), geo: ConvGeometry, (ho, wo): (usize, usize)) -> Vec<f64> {
    let k = geo.kernel;
    let s = geo.stride;
    let hw = ho * wo;
    let mut cols = vec![0.0; c * k * k * hw];
    for ic in 0..c {
        for a in 0..k {
            let (y0, y1) = geo.valid_range(a, h, ho);
            for b in 0..k {
                let (x0, x1) = geo.valid_range(b, w, wo);
                let row = &mut cols[((ic * k + a) * k + b) * hw..][..hw];
                for y in y0..y1 {
                    let iy = y * s + a - geo.pad;
                    let xrow = &x[(ic * h + iy) * w..][..w];
                    let dst = &mut row[y * wo..(y + 1) * wo];
                    for xo in x0..x1 {
                        dst[xo] = xrow[xo * s + b - geo.pad];
                    }
                }
            }
        }
    }
    cols
}

/// Adds a patch matrix back onto the input grid (the adjoint of [`im2col`]).
fn col2im(cols: &[f64], (c, h, w): (usize, usize, usize), geo: ConvGeometry, (ho, wo): (usize, usize), out: &mut [f64]) {
    let k = geo.kernel;
    let s = geo.stride;
    let hw = ho * wo;
    for ic in 0..c {
        for a in 0..k {
            let (y0, y1) = geo.valid_range(a, h, ho);
            for b in 0..k {
                let (x0, x1) = geo.valid_range(b, w, wo);
                let row = &cols[((ic * k + a) * k + b) * hw..][..hw];
                for y in y0..y1 {
                    let iy = y * s + a - geo.pad;
                    let orow = &mut out[(ic * h + iy) * w..][..w];
                    let src = &row[y * wo..(y + 1) * wo];
                    for xo in x0..x1 {
                        orow[xo * s + b - geo.pad] += src[xo];
                    }
                }
            }
        }
    }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn conv_forward_raw(
    x: &[f64],
    dims_in: (usize, usize, usize),
    kern: &[f64],
    o: usize,
    geo: ConvGeometry,
    out: &mut [f64],
    hw_out: (usize, usize),
) {
    let hw = hw_out.0 * hw_out.1;
    let cols = im2col(x, dims_in, geo, hw_out);
    let taps = dims_in.0 * geo.kernel * geo.kernel;
    for oc in 0..o {
        let orow = &mut out[oc * hw..(oc + 1) * hw];
        for (j, &wv) in kern[oc * taps..(oc + 1) * taps].iter().enumerate() {
            if wv != 0.0 {
                axpy(orow, wv, &cols[j * hw..(j + 1) * hw]);
            }
        }
    }
}

pub(crate) fn conv_adjoint_raw(
    code: &[f64],
    (o, ho, wo): (usize, usize, usize),
    kern: &[f64],
    c: usize,
    geo: ConvGeometry,
    out: &mut [f64],
    (h, w): (usize, usize),
) {
    let hw = ho * wo;
    let taps = c * geo.kernel * geo.kernel;
    let mut cols = vec![0.0; taps * hw];
    for oc in 0..o {
        let crow = &code[oc * hw..(oc + 1) * hw];
        for (j, &wv) in kern[oc * taps..(oc + 1) * taps].iter().enumerate() {
            if wv != 0.0 {
                axpy(&mut cols[j * hw..(j + 1) * hw], wv, crow);
            }
        }
    }
    col2im(&cols, (c, h, w), geo, (ho, wo), out);
}

pub(crate) fn conv_kernel_grad_raw(
    x: &[f64],
    dims_in: (usize, usize, usize),
    g: &[f64],
    (o, ho, wo): (usize, usize, usize),
    geo: ConvGeometry,
    gk: &mut [f64],
) {
    let hw = ho * wo;
    let cols = im2col(x, dims_in, geo, (ho, wo));
    let taps = dims_in.0 * geo.kernel * geo.kernel;
    for oc in 0..o {
        let grow = &g[oc * hw..(oc + 1) * hw];
        for (j, acc) in gk[oc * taps..(oc + 1) * taps].iter_mut().enumerate() {
            *acc += dot(grow, &cols[j * hw..(j + 1) * hw]);
        }
    }
}

/// Rectification. The derivative at exactly zero is taken as zero.
pub fn relu(t: &Tensor) -> Tensor {
    let mut out = t.clone();
    relu_in_place(out.data_mut());
    out
}

pub(crate) fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x <= 0.0 {
            *x = 0.0;
        }
    }
}

/// Zeroes `grad` wherever the pre-activation was not strictly positive.
pub(crate) fn relu_backward_in_place(pre: &[f64], grad: &mut [f64]) {
    for (g, &p) in grad.iter_mut().zip(pre) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Upper bound of the regression output range.
pub const PAIN_MAX: f64 = 5.0;

/// `5 / (1 + exp(-x))`, evaluated without overflow for large `|x|`.
pub fn scaled_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        PAIN_MAX / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        PAIN_MAX * e / (1.0 + e)
    }
}

pub fn scaled_sigmoid_grad(x: f64) -> f64 {
    let s = scaled_sigmoid(x);
    s * (PAIN_MAX - s) / PAIN_MAX
}

/// Binning range and resolution of a triangular soft histogram.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistogramSpec {
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
}

impl HistogramSpec {
    pub fn new(bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Config(format!("histogram needs at least 2 bins, got {bins}")));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("histogram range [{lo}, {hi}] is empty")));
        }
        Ok(Self { bins, lo, hi })
    }

    pub fn unit(bins: usize) -> Result<Self> {
        Self::new(bins, 0.0, 1.0)
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.bins - 1) as f64
    }
}

/// Triangular-kernel histogram normalized by element count.
pub fn soft_histogram(values: &Tensor, spec: HistogramSpec) -> Result<Tensor> {
    let h = soft_histogram_raw(values.data(), spec)?;
    Tensor::new(vec![spec.bins], h)
}

pub(crate) fn soft_histogram_raw(values: &[f64], spec: HistogramSpec) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    let mut hist = vec![0.0; spec.bins];
    let inv_n = 1.0 / values.len() as f64;
    let s = spec.spacing();
    let last = spec.bins - 1;
    for &v in values {
        let t = (v.clamp(spec.lo, spec.hi) - spec.lo) / s;
        let j = (t.floor() as usize).min(last);
        let frac = t - j as f64;
        if j == last || frac <= 0.0 {
            hist[j] += inv_n;
        } else {
            hist[j] += (1.0 - frac) * inv_n;
            hist[j + 1] += frac * inv_n;
        }
    }
    Ok(hist)
}

/// Pulls a gradient on histogram bins back onto the source values.
/// Clamped values receive zero; at knots the left derivative is used.
pub(crate) fn soft_histogram_backward(values: &[f64], spec: HistogramSpec, grad_hist: &[f64]) -> Vec<f64> {
    let inv_ns = 1.0 / (values.len() as f64 * spec.spacing());
    let s = spec.spacing();
    values
        .iter()
        .map(|&v| {
            if v <= spec.lo || v > spec.hi {
                return 0.0;
            }
            let t = (v - spec.lo) / s;
            let j = ((t.ceil() as usize).max(1) - 1).min(spec.bins - 2);
            (grad_hist[j + 1] - grad_hist[j]) * inv_ns
        })
        .collect()
}

/// Bookkeeping needed to differentiate [`minmax_normalize`].
#[derive(Clone, Debug)]
pub(crate) struct MinMax {
    argmin: usize,
    argmax: usize,
    range: f64,
}

/// Per-map min-max normalization to `[0, 1]`; a constant map becomes 0.5.
pub(crate) fn minmax_normalize(raw: &[f64]) -> (Vec<f64>, MinMax) {
    let (mut argmin, mut argmax) = (0, 0);
    for (i, &v) in raw.iter().enumerate() {
        if v < raw[argmin] {
            argmin = i;
        }
        if v > raw[argmax] {
            argmax = i;
        }
    }
    let range = raw[argmax] - raw[argmin];
    if range <= 0.0 {
        return (
            vec![0.5; raw.len()],
            MinMax {
                argmin,
                argmax,
                range: 0.0,
            },
        );
    }
    let lo = raw[argmin];
    let mut out: Vec<f64> = raw.iter().map(|&v| (v - lo) / range).collect();
    // exact endpoints regardless of rounding
    out[argmin] = 0.0;
    out[argmax] = 1.0;
    (
        out,
        MinMax {
            argmin,
            argmax,
            range,
        },
    )
}

pub(crate) fn minmax_backward(normalized: &[f64], mm: &MinMax, grad: &[f64]) -> Vec<f64> {
    if mm.range <= 0.0 {
        return vec![0.0; grad.len()];
    }
    let inv = 1.0 / mm.range;
    let mut out: Vec<f64> = grad.iter().map(|g| g * inv).collect();
    let mut to_min = 0.0;
    let mut to_max = 0.0;
    for (&g, &s) in grad.iter().zip(normalized) {
        to_min += g * (s - 1.0);
        to_max -= g * s;
    }
    out[mm.argmin] += to_min * inv;
    out[mm.argmax] += to_max * inv;
    out
}

/// Unit-L2 scaling; returns the norm alongside. A zero vector stays zero.
pub fn l2_normalize(v: &[f64]) -> (Vec<f64>, f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return (vec![0.0; v.len()], 0.0);
    }
    (v.iter().map(|x| x / norm).collect(), norm)
}

pub(crate) fn l2_normalize_backward(unit: &[f64], norm: f64, grad: &[f64]) -> Vec<f64> {
    if norm == 0.0 {
        return vec![0.0; grad.len()];
    }
    let proj: f64 = unit.iter().zip(grad).map(|(u, g)| u * g).sum();
    unit.iter()
        .zip(grad)
        .map(|(u, g)| (g - u * proj) / norm)
        .collect()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    /// Direct six-nested-loop cross-correlation, independent of the tap-major
    /// production loop.
    fn naive_conv(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Tensor {
        let (c, h, w) = x.chw().unwrap();
        let (o, _, ks, _) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
        let ho = (h + 2 * pad - ks) / stride + 1;
        let wo = (w + 2 * pad - ks) / stride + 1;
        let mut out = Tensor::zeros(&[o, ho, wo]);
        for oc in 0..o {
            for y in 0..ho {
                for xo in 0..wo {
                    let mut acc = 0.0;
                    for ic in 0..c {
                        for a in 0..ks {
                            for b in 0..ks {
                                let iy = (y * stride + a) as isize - pad as isize;
                                let ix = (xo * stride + b) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += x.data()[(ic * h + iy as usize) * w + ix as usize]
                                    * k.data()[((oc * c + ic) * ks + a) * ks + b];
                            }
                        }
                    }
                    out.data_mut()[(oc * ho + y) * wo + xo] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let x = Tensor::zeros(&[1, 3, 3]);
        let k = Tensor::from_fn(&[2, 1, 3, 3], |i| i as f64 - 4.0);
        let y = conv2d(&x, &k, ConvGeometry::new(3, 1, 0).unwrap()).unwrap();
        assert_eq!(y.shape(), &[2, 1, 1]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_tensor(&mut rng, &[1, 3, 3]);
        let mut k = Tensor::zeros(&[1, 1, 3, 3]);
        k.data_mut()[4] = 1.0;
        let y = conv2d(&x, &k, ConvGeometry::new(3, 1, 1).unwrap()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_tensor(&mut rng, &[1, 5, 5]);
        let k = rand_tensor(&mut rng, &[2, 1, 3, 3]);
        let y = conv2d(&x, &k, ConvGeometry::new(3, 1, 0).unwrap()).unwrap();
        let r = naive_conv(&x, &k, 1, 0);
        for (a, b) in y.data().iter().zip(r.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn matches_naive_loops_on_all_small_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for c in 1..=2 {
            for o in 1..=4 {
                for h in 3..=8 {
                    for w in 3..=8 {
                        for stride in 1..=2 {
                            for pad in 0..=1 {
                                let x = rand_tensor(&mut rng, &[c, h, w]);
                                let k = rand_tensor(&mut rng, &[o, c, 3, 3]);
                                let geo = ConvGeometry::new(3, stride, pad).unwrap();
                                let y = conv2d(&x, &k, geo).unwrap();
                                let r = naive_conv(&x, &k, stride, pad);
                                assert_eq!(y.shape(), r.shape());
                                for (a, b) in y.data().iter().zip(r.data()) {
                                    assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()));
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn channel_mismatch_names_axis() {
        let x = Tensor::zeros(&[2, 4, 4]);
        let k = Tensor::zeros(&[1, 1, 3, 3]);
        let err = conv2d(&x, &k, ConvGeometry::new(3, 1, 1).unwrap()).unwrap_err();
        assert!(err.to_string().contains("input channels"), "{err}");
        assert!(ConvGeometry::new(2, 1, 0).is_err());
    }

    #[test]
    fn adjoint_of_zero_is_zero_and_scalar_kernel_scales() {
        let k = Tensor::new(vec![1, 1, 1, 1], vec![2.0]).unwrap();
        let geo = ConvGeometry::new(1, 1, 0).unwrap();
        let z = conv2d_adjoint(&Tensor::zeros(&[1, 3, 3]), &k, geo, (3, 3)).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        let y = Tensor::from_fn(&[1, 3, 3], |i| i as f64);
        let z = conv2d_adjoint(&y, &k, geo, (3, 3)).unwrap();
        for (a, b) in z.data().iter().zip(y.data()) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn adjoint_rejects_inconsistent_geometry() {
        let k = Tensor::zeros(&[2, 1, 3, 3]);
        let geo = ConvGeometry::new(3, 2, 1).unwrap();
        assert!(conv2d_adjoint(&Tensor::zeros(&[2, 5, 4]), &k, geo, (8, 8)).is_err());
        assert!(conv2d_adjoint(&Tensor::zeros(&[3, 4, 4]), &k, geo, (8, 8)).is_err());
    }

    fn adjoint_gap(rng: &mut ChaCha8Rng, c: usize, o: usize, h: usize, w: usize, geo: ConvGeometry) -> f64 {
        let x = rand_tensor(rng, &[c, h, w]);
        let k = rand_tensor(rng, &[o, c, geo.kernel, geo.kernel]);
        let ax = conv2d(&x, &k, geo).unwrap();
        let y = rand_tensor(rng, ax.shape());
        let aty = conv2d_adjoint(&y, &k, geo, (h, w)).unwrap();
        let lhs = ax.dot(&y).unwrap();
        let rhs = x.dot(&aty).unwrap();
        (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12)
    }

    #[test]
    fn adjoint_dot_product_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let geo = ConvGeometry::new(3, 1, 1).unwrap();
        assert!(adjoint_gap(&mut rng, 1, 1, 6, 6, geo) < 1e-6);
        for (k, s, p) in [(1, 1, 0), (3, 2, 1), (3, 2, 0), (5, 2, 2), (3, 3, 1)] {
            let geo = ConvGeometry::new(k, s, p).unwrap();
            assert!(adjoint_gap(&mut rng, 3, 2, 9, 7, geo) < 1e-6);
        }
    }

    #[test]
    fn kernel_grad_matches_bilinear_form() {
        // <g, conv(x, K)> is linear in K, so its gradient is exact under FD.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let geo = ConvGeometry::new(3, 2, 1).unwrap();
        let x = rand_tensor(&mut rng, &[2, 7, 6]);
        let k = rand_tensor(&mut rng, &[3, 2, 3, 3]);
        let g = rand_tensor(&mut rng, conv2d(&x, &k, geo).unwrap().shape());
        let gk = conv2d_kernel_grad(&x, &g, geo).unwrap();
        for i in 0..k.len() {
            let mut kp = k.clone();
            kp.data_mut()[i] += 1.0;
            let delta = conv2d(&x, &kp, geo).unwrap().dot(&g).unwrap()
                - conv2d(&x, &k, geo).unwrap().dot(&g).unwrap();
            assert!((delta - gk.data()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn scaled_sigmoid_values() {
        assert_eq!(scaled_sigmoid(0.0), 2.5);
        assert!((scaled_sigmoid(4f64.ln()) - 4.0).abs() < 1e-12);
        assert!((scaled_sigmoid(-(4f64.ln())) - 1.0).abs() < 1e-12);
        assert!(scaled_sigmoid(800.0) <= 5.0 && scaled_sigmoid(-800.0) >= 0.0);
        assert!(scaled_sigmoid(-800.0).is_finite());
    }

    #[test]
    fn histogram_examples() {
        let spec = HistogramSpec::unit(2).unwrap();
        let h = |v: Vec<f64>| {
            let n = v.len();
            soft_histogram(&Tensor::new(vec![n], v).unwrap(), spec)
                .unwrap()
                .into_data()
        };
        assert_eq!(h(vec![0.0]), vec![1.0, 0.0]);
        assert_eq!(h(vec![0.5]), vec![0.5, 0.5]);
        assert_eq!(h(vec![0.25, 0.75]), vec![0.5, 0.5]);
        assert_eq!(h(vec![-3.0, 7.0]), vec![0.5, 0.5]);
        assert!(matches!(
            soft_histogram_raw(&[], spec),
            Err(Error::EmptyHistogram)
        ));
        assert!(HistogramSpec::new(1, 0.0, 1.0).is_err());
        assert!(HistogramSpec::new(4, 1.0, 1.0).is_err());
    }

    #[test]
    fn histogram_backward_uses_left_derivative_at_knots() {
        let spec = HistogramSpec::unit(3).unwrap();
        // at the interior knot 0.5, the left interval is [0, 0.5]: bins 0 and 1
        let g = soft_histogram_backward(&[0.5], spec, &[1.0, 10.0, 100.0]);
        assert!((g[0] - (10.0 - 1.0) * 2.0).abs() < 1e-12);
        // at lo the clamp is flat from the left
        assert_eq!(soft_histogram_backward(&[0.0], spec, &[1.0, 10.0, 100.0]), vec![0.0]);
        // at hi the last interval applies
        let g = soft_histogram_backward(&[1.0], spec, &[1.0, 10.0, 100.0]);
        assert!((g[0] - 90.0 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn minmax_gradient_matches_finite_differences() {
        let raw = vec![0.3, -1.2, 2.0, 0.7, 0.1];
        let w = vec![0.5, -1.0, 2.0, 0.25, 3.0];
        let f = |r: &[f64]| -> f64 {
            let (n, _) = minmax_normalize(r);
            n.iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let (n, mm) = minmax_normalize(&raw);
        assert_eq!(n[1], 0.0);
        assert_eq!(n[2], 1.0);
        let g = minmax_backward(&n, &mm, &w);
        for i in 0..raw.len() {
            let mut p = raw.clone();
            let mut m = raw.clone();
            p[i] += 1e-6;
            m[i] -= 1e-6;
            let fd = (f(&p) - f(&m)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-6, "{i}: {fd} vs {}", g[i]);
        }
        let (c, mm) = minmax_normalize(&[2.0, 2.0]);
        assert_eq!(c, vec![0.5, 0.5]);
        assert_eq!(minmax_backward(&c, &mm, &[1.0, 1.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn l2_normalize_gradient_matches_finite_differences() {
        let v = vec![0.3, -1.2, 2.0];
        let w = vec![1.0, 2.0, -0.5];
        let f = |r: &[f64]| -> f64 { l2_normalize(r).0.iter().zip(&w).map(|(a, b)| a * b).sum() };
        let (u, n) = l2_normalize(&v);
        let g = l2_normalize_backward(&u, n, &w);
        for i in 0..3 {
            let mut p = v.clone();
            let mut m = v.clone();
            p[i] += 1e-6;
            m[i] -= 1e-6;
            assert!(((f(&p) - f(&m)) / 2e-6 - g[i]).abs() < 1e-7);
        }
    }

    proptest! {
        #[test]
        fn histogram_sums_to_one(values in prop::collection::vec(-0.5f64..1.5, 1..200), bins in 2usize..40) {
            let h = soft_histogram_raw(&values, HistogramSpec::unit(bins).unwrap()).unwrap();
            prop_assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(h.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn scaled_sigmoid_is_increasing_and_symmetric(a in -30f64..30.0, d in 1e-3f64..5.0) {
            prop_assert!(scaled_sigmoid(a + d) > scaled_sigmoid(a));
            prop_assert!((scaled_sigmoid(-a) - (5.0 - scaled_sigmoid(a))).abs() < 1e-12);
        }

        #[test]
        fn adjoint_identity_random_geometry(seed in 0u64..1000, h in 3usize..12, w in 3usize..12,
                                            stride in 1usize..4, pad in 0usize..2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let geo = ConvGeometry::new(3, stride, pad).unwrap();
            prop_assert!(adjoint_gap(&mut rng, 2, 3, h, w, geo) < 1e-6);
        }
    }
}

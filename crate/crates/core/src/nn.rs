//! Feature extractor plus linear classification head, with hand-written
//! backpropagation.
//!
//! The extractor is a stack of layers, each an affine map followed by an
//! element-wise activation. A layer is either dense (`x·W + b`) or a valid
//! 2-D convolution evaluated through im2col, so both kinds store their
//! weights as a single [`DenseMatrix`]. Images are laid out height-major,
//! then width, then channel (HWC), and convolution outputs use the same
//! layout so convolutions can be stacked.
//!
//! The head is `W = [w_1 … w_K]` of shape `feature_dim × K` without bias:
//! `logits = features · W`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => libm::tanh(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Geometry of a valid (unpadded) convolution over an HWC image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvShape {
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvShape {
    pub fn out_height(&self) -> usize {
        (self.height - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width - self.kernel) / self.stride + 1
    }

    fn positions(&self) -> usize {
        self.out_height() * self.out_width()
    }

    fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_channels
    }

    fn validate(&self) -> Result<()> {
        if self.kernel == 0
            || self.stride == 0
            || self.in_channels == 0
            || self.out_channels == 0
            || self.kernel > self.height
            || self.kernel > self.width
        {
            return Err(Error::InvalidArgument(alloc::format!(
                "invalid convolution geometry {self:?}"
            )));
        }
        Ok(())
    }

    /// Gathers the receptive fields of one image into a `positions × patch_len` matrix.
    fn im2col(&self, image: &[f64]) -> DenseMatrix {
        let (oh, ow, k, c) = (self.out_height(), self.out_width(), self.kernel, self.in_channels);
        let mut cols = DenseMatrix::zeros(oh * ow, self.patch_len());
        for oy in 0..oh {
            for ox in 0..ow {
                let row = cols.row_mut(oy * ow + ox);
                let mut idx = 0;
                for ky in 0..k {
                    let y = oy * self.stride + ky;
                    for kx in 0..k {
                        let x = ox * self.stride + kx;
                        let base = (y * self.width + x) * c;
                        row[idx..idx + c].copy_from_slice(&image[base..base + c]);
                        idx += c;
                    }
                }
            }
        }
        cols
    }

    /// Scatters patch gradients back onto the image gradient (adjoint of im2col).
    fn col2im_add(&self, dcols: &DenseMatrix, dimage: &mut [f64]) {
        let (oh, ow, k, c) = (self.out_height(), self.out_width(), self.kernel, self.in_channels);
        for oy in 0..oh {
            for ox in 0..ow {
                let row = dcols.row(oy * ow + ox);
                let mut idx = 0;
                for ky in 0..k {
                    let y = oy * self.stride + ky;
                    for kx in 0..k {
                        let x = ox * self.stride + kx;
                        let base = (y * self.width + x) * c;
                        for ch in 0..c {
                            dimage[base + ch] += row[idx + ch];
                        }
                        idx += c;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Dense,
    Conv2d(ConvShape),
}

/// One extractor layer. Dense weights are `in × out`; convolution weights are
/// `(kernel·kernel·in_channels) × out_channels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub kind: LayerKind,
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        match self.kind {
            LayerKind::Dense => self.weight.rows(),
            LayerKind::Conv2d(s) => s.height * s.width * s.in_channels,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self.kind {
            LayerKind::Dense => self.weight.cols(),
            LayerKind::Conv2d(s) => s.positions() * s.out_channels,
        }
    }

    fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        match self.kind {
            LayerKind::Dense => {
                let mut z = x.matmul(&self.weight)?;
                for r in 0..z.rows() {
                    for (v, b) in z.row_mut(r).iter_mut().zip(&self.bias) {
                        *v += b;
                    }
                }
                Ok(z)
            }
            LayerKind::Conv2d(s) => {
                let mut z = DenseMatrix::zeros(x.rows(), self.out_dim());
                for n in 0..x.rows() {
                    let out = s.im2col(x.row(n)).matmul(&self.weight)?;
                    let dst = z.row_mut(n);
                    for (p, orow) in out.row_iter().enumerate() {
                        for (ch, (&v, b)) in orow.iter().zip(&self.bias).enumerate() {
                            dst[p * s.out_channels + ch] = v + b;
                        }
                    }
                }
                Ok(z)
            }
        }
    }

    /// Given `dz` (gradient w.r.t. pre-activations), returns `(dW, db, dx)`.
    fn backward(
        &self,
        x: &DenseMatrix,
        dz: &DenseMatrix,
        need_dx: bool,
    ) -> Result<(DenseMatrix, Vec<f64>, Option<DenseMatrix>)> {
        match self.kind {
            LayerKind::Dense => {
                let dw = x.t_matmul(dz)?;
                let db = dz.col_sums();
                let dx = if need_dx {
                    Some(dz.matmul_t(&self.weight)?)
                } else {
                    None
                };
                Ok((dw, db, dx))
            }
            LayerKind::Conv2d(s) => {
                let mut dw = DenseMatrix::zeros(self.weight.rows(), self.weight.cols());
                let mut db = vec![0.0; s.out_channels];
                let mut dx = need_dx.then(|| DenseMatrix::zeros(x.rows(), self.in_dim()));
                for n in 0..x.rows() {
                    let cols = s.im2col(x.row(n));
                    let dz_n =
                        DenseMatrix::from_vec(s.positions(), s.out_channels, dz.row(n).to_vec())?;
                    let g = cols.t_matmul(&dz_n)?;
                    for (a, b) in dw.values_mut().iter_mut().zip(g.values()) {
                        *a += b;
                    }
                    for (a, b) in db.iter_mut().zip(dz_n.col_sums()) {
                        *a += b;
                    }
                    if let Some(dx) = dx.as_mut() {
                        let dcols = dz_n.matmul_t(&self.weight)?;
                        s.col2im_add(&dcols, dx.row_mut(n));
                    }
                }
                Ok((dw, db, dx))
            }
        }
    }
}

/// Student or teacher network parameters.
///
/// `generation` counts in-place parameter updates; forward caches remember the
/// generation they were computed at so that stale caches are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: Vec<Layer>,
    pub head: DenseMatrix,
    pub generation: u64,
}

/// Gradients (or optimizer buffers) mirroring the layout of [`ModelParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<(DenseMatrix, Vec<f64>)>,
    pub head: DenseMatrix,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| {
                    (
                        DenseMatrix::zeros(l.weight.rows(), l.weight.cols()),
                        vec![0.0; l.bias.len()],
                    )
                })
                .collect(),
            head: DenseMatrix::zeros(params.head.rows(), params.head.cols()),
        }
    }

    pub fn buffers(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.values(), b.as_slice()])
            .chain(core::iter::once(self.head.values()))
    }

    pub fn buffers_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|(w, b)| [w.values_mut(), b.as_mut_slice()])
            .chain(core::iter::once(self.head.values_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.buffers().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, s: f64) {
        for b in self.buffers_mut() {
            b.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        check_layout(self.buffers(), other.buffers())?;
        for (a, b) in self.buffers_mut().zip(other.buffers()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

pub(crate) fn check_layout<'a, 'b>(
    a: impl Iterator<Item = &'a [f64]>,
    b: impl Iterator<Item = &'b [f64]>,
) -> Result<()> {
    let a: Vec<usize> = a.map(<[f64]>::len).collect();
    let b: Vec<usize> = b.map(<[f64]>::len).collect();
    if a.len() != b.len() {
        return Err(Error::Dimension {
            context: "parameter tensor count",
            expected: a.len(),
            found: b.len(),
        });
    }
    for (x, y) in a.iter().zip(&b) {
        if x != y {
            return Err(Error::Dimension {
                context: "parameter tensor size",
                expected: *x,
                found: *y,
            });
        }
    }
    Ok(())
}

impl ModelParams {
    /// Dense extractor with the given hidden widths (ReLU) and a `K`-way head.
    pub fn mlp<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut dim = input_dim;
        for &h in hidden {
            layers.push(dense_layer(dim, h, Activation::Relu, rng)?);
            dim = h;
        }
        Self::with_head(layers, dim, classes, rng)
    }

    /// One ReLU convolution followed by dense ReLU layers and the head.
    pub fn conv_mlp<R: Rng + ?Sized>(
        conv: ConvShape,
        hidden: &[usize],
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        conv.validate()?;
        let fan_in = conv.patch_len();
        let mut layers = vec![Layer {
            kind: LayerKind::Conv2d(conv),
            weight: he_uniform(fan_in, conv.out_channels, rng)?,
            bias: vec![0.0; conv.out_channels],
            activation: Activation::Relu,
        }];
        let mut dim = layers[0].out_dim();
        for &h in hidden {
            layers.push(dense_layer(dim, h, Activation::Relu, rng)?);
            dim = h;
        }
        Self::with_head(layers, dim, classes, rng)
    }

    fn with_head<R: Rng + ?Sized>(
        layers: Vec<Layer>,
        feature_dim: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if feature_dim == 0 || classes < 2 {
            return Err(Error::InvalidArgument(alloc::format!(
                "head needs feature_dim > 0 and K >= 2 (got {feature_dim}, {classes})"
            )));
        }
        let limit = libm::sqrt(6.0 / (feature_dim + classes) as f64);
        let head = uniform_matrix(feature_dim, classes, limit, rng)?;
        let params = Self {
            layers,
            head,
            generation: 0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn input_dim(&self) -> usize {
        self.layers
            .first()
            .map_or(self.head.rows(), Layer::in_dim)
    }

    pub fn feature_dim(&self) -> usize {
        self.head.rows()
    }

    pub fn classes(&self) -> usize {
        self.head.cols()
    }

    /// Checks that layer shapes chain and every value is finite.
    pub fn validate(&self) -> Result<()> {
        let mut dim = self.input_dim();
        for layer in &self.layers {
            if layer.in_dim() != dim {
                return Err(Error::Dimension {
                    context: "layer chain",
                    expected: dim,
                    found: layer.in_dim(),
                });
            }
            let bias_len = match layer.kind {
                LayerKind::Dense => layer.weight.cols(),
                LayerKind::Conv2d(s) => {
                    if layer.weight.shape() != (s.patch_len(), s.out_channels) {
                        return Err(Error::Dimension {
                            context: "convolution weight",
                            expected: s.patch_len() * s.out_channels,
                            found: layer.weight.values().len(),
                        });
                    }
                    s.out_channels
                }
            };
            if layer.bias.len() != bias_len {
                return Err(Error::Dimension {
                    context: "layer bias",
                    expected: bias_len,
                    found: layer.bias.len(),
                });
            }
            dim = layer.out_dim();
        }
        if self.head.rows() != dim {
            return Err(Error::Dimension {
                context: "head rows",
                expected: dim,
                found: self.head.rows(),
            });
        }
        if !self.buffers().all(|b| b.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(())
    }

    pub fn buffers(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.values(), l.bias.as_slice()])
            .chain(core::iter::once(self.head.values()))
    }

    pub fn buffers_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.values_mut(), l.bias.as_mut_slice()])
            .chain(core::iter::once(self.head.values_mut()))
    }

    pub fn parameter_count(&self) -> usize {
        self.buffers().map(<[f64]>::len).sum()
    }

    /// Column `k` of the head, `w_k`.
    pub fn head_column(&self, k: usize) -> Vec<f64> {
        self.head.column(k)
    }

    /// Runs the batch `x` (one sample per row) through the network.
    pub fn forward_batch(&self, x: &DenseMatrix, temperature: f64) -> Result<ForwardPass> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::Range {
                what: "temperature",
                value: temperature,
                range: "(0, inf)",
            });
        }
        if x.cols() != self.input_dim() {
            return Err(Error::Dimension {
                context: "forward input",
                expected: self.input_dim(),
                found: x.cols(),
            });
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("forward input"));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for layer in &self.layers {
            let z = layer.forward(&a)?;
            let mut next = z.clone();
            next.values_mut()
                .iter_mut()
                .for_each(|v| *v = layer.activation.apply(*v));
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        let features = a;
        let logits = features.matmul(&self.head)?;
        if !logits.is_finite() {
            return Err(Error::NonFinite("forward logits"));
        }
        let mut probs = logits.clone();
        for r in 0..probs.rows() {
            softmax_in_place(probs.row_mut(r), temperature);
        }
        Ok(ForwardPass {
            generation: self.generation,
            inputs,
            pre_activations: pre,
            features,
            logits,
            probs,
            temperature,
        })
    }

    /// Single-sample forward: `(features, logits, probs)`.
    pub fn forward(&self, x: &[f64], temperature: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let batch = DenseMatrix::from_vec(1, x.len(), x.to_vec())?;
        let pass = self.forward_batch(&batch, temperature)?;
        Ok((
            pass.features.into_values(),
            pass.logits.into_values(),
            pass.probs.into_values(),
        ))
    }

    /// Backpropagates `dlogits` (gradient of the loss w.r.t. the logits of each
    /// row of the cached batch) to every parameter and to the features.
    pub fn backward(&self, pass: &ForwardPass, dlogits: &DenseMatrix) -> Result<Backprop> {
        if pass.generation != self.generation {
            return Err(Error::StaleCache {
                cache: pass.generation,
                params: self.generation,
            });
        }
        dlogits.check_same_shape(&pass.logits, "backward dlogits")?;
        if !dlogits.is_finite() {
            return Err(Error::NonFinite("loss gradient"));
        }
        let head = pass.features.t_matmul(dlogits)?;
        let feature_grads = dlogits.matmul_t(&self.head)?;
        let mut layers = vec![(DenseMatrix::zeros(0, 0), Vec::new()); self.layers.len()];
        let mut upstream = feature_grads.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let z = &pass.pre_activations[i];
            let mut dz = upstream;
            for (g, &zv) in dz.values_mut().iter_mut().zip(z.values()) {
                *g *= layer.activation.derivative(zv, layer.activation.apply(zv));
            }
            let (dw, db, dx) = layer.backward(&pass.inputs[i], &dz, i > 0)?;
            layers[i] = (dw, db);
            upstream = dx.unwrap_or_else(|| DenseMatrix::zeros(0, 0));
        }
        Ok(Backprop {
            grads: Gradients { layers, head },
            feature_grads,
        })
    }
}

/// Activations cached by a forward pass, consumed by [`ModelParams::backward`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    generation: u64,
    inputs: Vec<DenseMatrix>,
    pre_activations: Vec<DenseMatrix>,
    pub features: DenseMatrix,
    pub logits: DenseMatrix,
    pub probs: DenseMatrix,
    pub temperature: f64,
}

#[derive(Debug, Clone)]
pub struct Backprop {
    pub grads: Gradients,
    /// Gradient of the loss w.r.t. the extracted features, one row per sample.
    pub feature_grads: DenseMatrix,
}

/// `softmax(logits / temperature)` in place, shifted by the max for stability.
pub fn softmax_in_place(v: &mut [f64], temperature: f64) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = libm::exp((*x - max) / temperature);
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

pub fn softmax(v: &[f64], temperature: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    softmax_in_place(&mut out, temperature);
    out
}

fn dense_layer<R: Rng + ?Sized>(
    input: usize,
    output: usize,
    activation: Activation,
    rng: &mut R,
) -> Result<Layer> {
    if input == 0 || output == 0 {
        return Err(Error::InvalidArgument(alloc::format!(
            "dense layer dims must be > 0 (got {input}x{output})"
        )));
    }
    Ok(Layer {
        kind: LayerKind::Dense,
        weight: he_uniform(input, output, rng)?,
        bias: vec![0.0; output],
        activation,
    })
}

fn he_uniform<R: Rng + ?Sized>(fan_in: usize, out: usize, rng: &mut R) -> Result<DenseMatrix> {
    uniform_matrix(fan_in, out, libm::sqrt(6.0 / fan_in as f64), rng)
}

fn uniform_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    limit: f64,
    rng: &mut R,
) -> Result<DenseMatrix> {
    let dist = Uniform::new(-limit, limit)
        .map_err(|_| Error::InvalidArgument(alloc::format!("bad init limit {limit}")))?;
    let values = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    DenseMatrix::from_vec(rows, cols, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn head_only(w: &[[f64; 2]]) -> ModelParams {
        ModelParams {
            layers: Vec::new(),
            head: DenseMatrix::from_rows(w).unwrap(),
            generation: 0,
        }
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0, 0.0], 1.0);
        assert_eq!(p, vec![0.5, 0.5]);
        let p = softmax(&[1.0, 0.0], 1.0);
        assert!((p[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((p[1] - 0.268_941_421_369_995_1).abs() < 1e-12);
        let cold = softmax(&[1.0, 0.0], 0.01);
        assert!(cold[0] >= 1.0 - 1e-15 && cold[1] < 1e-40);
        assert_eq!(crate::matrix::argmax(&cold), crate::matrix::argmax(&p));
    }

    #[test]
    fn logits_are_features_times_head() {
        // identity head on 2-d features
        let params = head_only(&[[1.0, 0.0], [0.0, 1.0]]);
        let (f, l, p) = params.forward(&[1.0, 0.0], 1.0).unwrap();
        assert_eq!(f, l);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = ModelParams::mlp(3, &[4], 2, &mut rng).unwrap();
        assert!(matches!(
            params.forward(&[1.0, 2.0], 1.0),
            Err(Error::Dimension { .. })
        ));
        assert!(params.forward(&[1.0, 2.0, 3.0], 0.0).is_err());
        assert!(matches!(
            params.forward(&[f64::NAN, 2.0, 3.0], 1.0),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn perfect_prediction_has_zero_feature_gradient() {
        let params = head_only(&[[1.0, 0.0], [0.0, 1.0]]);
        let x = DenseMatrix::from_rows(&[[3.0, 1.0]]).unwrap();
        let pass = params.forward_batch(&x, 1.0).unwrap();
        // dL/dlogits = p - onehot; with p treated as exactly one-hot this is 0
        let bp = params.backward(&pass, &DenseMatrix::zeros(1, 2)).unwrap();
        assert!(bp.feature_grads.values().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn feature_gradient_follows_head_combination() {
        // K = 2, p = (0.5, 0.5), target class 0: -0.5 w_1 + 0.5 w_2
        let params = head_only(&[[1.0, 2.0], [3.0, 5.0]]);
        let x = DenseMatrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let pass = params.forward_batch(&x, 1.0).unwrap();
        assert_eq!(pass.probs.row(0), &[0.5, 0.5]);
        let dlogits = DenseMatrix::from_rows(&[[0.5 - 1.0, 0.5]]).unwrap();
        let bp = params.backward(&pass, &dlogits).unwrap();
        let w1 = params.head_column(0);
        let w2 = params.head_column(1);
        for d in 0..2 {
            let expected = -0.5 * w1[d] + 0.5 * w2[d];
            assert!((bp.feature_grads.get(0, d) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = ModelParams::mlp(2, &[3], 2, &mut rng).unwrap();
        let x = DenseMatrix::from_rows(&[[0.1, 0.2]]).unwrap();
        let pass = params.forward_batch(&x, 1.0).unwrap();
        params.generation += 1;
        let err = params.backward(&pass, &DenseMatrix::zeros(1, 2)).unwrap_err();
        assert!(matches!(err, Error::StaleCache { .. }));
    }

    #[test]
    fn conv_output_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let conv = ConvShape {
            height: 6,
            width: 5,
            in_channels: 1,
            out_channels: 3,
            kernel: 3,
            stride: 1,
        };
        let params = ModelParams::conv_mlp(conv, &[4], 3, &mut rng).unwrap();
        assert_eq!(params.layers[0].out_dim(), 4 * 3 * 3);
        let x = DenseMatrix::zeros(2, 30);
        let pass = params.forward_batch(&x, 1.0).unwrap();
        assert_eq!(pass.probs.shape(), (2, 3));
    }
}

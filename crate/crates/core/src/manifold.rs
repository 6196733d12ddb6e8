//! Autoencoder over design feature vectors with isometric regularization of
//! the decoder.
//!
//! The encoder maps `D -> 64 -> 32 -> z` and the decoder `z -> 32 -> 64 -> D`
//! with `tanh` hidden layers and linear outputs. The regularizer
//! `E[Tr(G^2)] / E[Tr(G)]^2` with `G = J^T J` is evaluated on exact decoder
//! Jacobians (one tangent pass per latent dimension) and differentiated in
//! closed form.

use crate::scalar::{lit, to_f64, Scalar};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

pub const HIDDEN_WIDTHS: [usize; 2] = [64, 32];

#[derive(Debug, Error)]
pub enum ManifoldError {
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("decoder Jacobian vanishes (mean trace {mean_trace:e})")]
    ZeroJacobian { mean_trace: f64 },
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("empty latent batch")]
    EmptyBatch,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Linear,
}

/// Fully connected layer `y = act(W x + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T: Scalar> {
    pub weights: DMatrix<T>,
    pub bias: DVector<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weights: DMatrix::zeros(outputs, inputs),
            bias: DVector::zeros(outputs),
            activation,
        }
    }

    /// Weights and biases uniform in `+-1/sqrt(inputs)`.
    pub fn uniform<R: Rng>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = || lit::<T>(rng.random_range(-bound..bound));
        let weights = DMatrix::from_fn(outputs, inputs, |_, _| draw());
        let bias = DVector::from_fn(outputs, |_, _| draw());
        Self {
            weights,
            bias,
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    fn apply(&self, x: &DVector<T>) -> DVector<T> {
        let a = &self.weights * x + &self.bias;
        match self.activation {
            Activation::Tanh => a.map(|v| v.tanh()),
            Activation::Linear => a,
        }
    }

    /// Activation derivative expressed through the layer output.
    fn slope(&self, out: &DVector<T>) -> DVector<T> {
        match self.activation {
            Activation::Tanh => out.map(|h| T::one() - h * h),
            Activation::Linear => DVector::from_element(out.len(), T::one()),
        }
    }
}

fn stack<T: Scalar>(widths: &[usize], init: &mut dyn FnMut(usize, usize, Activation) -> Dense<T>) -> Vec<Dense<T>> {
    let last = widths.len() - 2;
    (0..widths.len() - 1)
        .map(|i| {
            let act = if i == last {
                Activation::Linear
            } else {
                Activation::Tanh
            };
            init(widths[i], widths[i + 1], act)
        })
        .collect()
}

fn check_len<T>(v: &DVector<T>, expected: usize) -> Result<(), ManifoldError> {
    if v.len() != expected {
        return Err(ManifoldError::DimensionMismatch {
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

/// Runs `x` through `layers`, returning every layer output (input first).
fn forward_all<T: Scalar>(layers: &[Dense<T>], x: &DVector<T>) -> Vec<DVector<T>> {
    let mut outs = Vec::with_capacity(layers.len() + 1);
    outs.push(x.clone());
    for l in layers {
        let next = l.apply(outs.last().expect("nonempty"));
        outs.push(next);
    }
    outs
}

#[derive(Clone, Debug, PartialEq)]
pub struct AeModel<T: Scalar> {
    pub encoder: Vec<Dense<T>>,
    pub decoder: Vec<Dense<T>>,
}

impl<T: Scalar> AeModel<T> {
    /// Randomly initialized model.
    pub fn new<R: Rng>(input_dim: usize, latent_dim: usize, rng: &mut R) -> Self {
        let [h1, h2] = HIDDEN_WIDTHS;
        let encoder = stack(&[input_dim, h1, h2, latent_dim], &mut |i, o, a| Dense::uniform(i, o, a, rng));
        let decoder = stack(&[latent_dim, h2, h1, input_dim], &mut |i, o, a| Dense::uniform(i, o, a, rng));
        Self { encoder, decoder }
    }

    pub fn zeros(input_dim: usize, latent_dim: usize) -> Self {
        let [h1, h2] = HIDDEN_WIDTHS;
        Self {
            encoder: stack(&[input_dim, h1, h2, latent_dim], &mut Dense::zeros),
            decoder: stack(&[latent_dim, h2, h1, input_dim], &mut Dense::zeros),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].inputs()
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder[0].inputs()
    }

    pub fn encode(&self, x: &DVector<T>) -> Result<DVector<T>, ManifoldError> {
        check_len(x, self.input_dim())?;
        Ok(self.encoder.iter().fold(x.clone(), |h, l| l.apply(&h)))
    }

    pub fn decode(&self, z: &DVector<T>) -> Result<DVector<T>, ManifoldError> {
        check_len(z, self.latent_dim())?;
        Ok(self.decoder.iter().fold(z.clone(), |h, l| l.apply(&h)))
    }

    pub fn reconstruct(&self, x: &DVector<T>) -> Result<DVector<T>, ManifoldError> {
        self.decode(&self.encode(x)?)
    }

    /// Exact decoder Jacobian (`D x z`), one tangent pass per column.
    pub fn decoder_jacobian(&self, z: &DVector<T>) -> Result<DMatrix<T>, ManifoldError> {
        check_len(z, self.latent_dim())?;
        let outs = forward_all(&self.decoder, z);
        Ok(tangent_columns(&self.decoder, &outs).0)
    }

    pub fn all_finite(&self) -> bool {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> AeModel<U> {
        let conv = |l: &Dense<T>| Dense {
            weights: l.weights.map(|v| lit::<U>(to_f64(v))),
            bias: l.bias.map(|v| lit::<U>(to_f64(v))),
            activation: l.activation,
        };
        AeModel {
            encoder: self.encoder.iter().map(conv).collect(),
            decoder: self.decoder.iter().map(conv).collect(),
        }
    }
}

/// Tangent passes through `layers` for each unit latent direction.
///
/// Returns the Jacobian plus, per column, the tangents `t_l` (input first)
/// and pre-slope products `u_l = W_l t_{l-1}` needed for differentiation.
#[allow(clippy::type_complexity)]
fn tangent_columns<T: Scalar>(
    layers: &[Dense<T>],
    outs: &[DVector<T>],
) -> (DMatrix<T>, Vec<(Vec<DVector<T>>, Vec<DVector<T>>)>) {
    let zdim = layers[0].inputs();
    let out_dim = layers.last().expect("nonempty").outputs();
    let slopes: Vec<_> = layers.iter().zip(&outs[1..]).map(|(l, o)| l.slope(o)).collect();
    let mut jac = DMatrix::zeros(out_dim, zdim);
    let mut passes = Vec::with_capacity(zdim);
    for k in 0..zdim {
        let mut t = DVector::zeros(zdim);
        t[k] = T::one();
        let mut ts = vec![t];
        let mut us = Vec::with_capacity(layers.len());
        for (l, s) in layers.iter().zip(&slopes) {
            let u = &l.weights * ts.last().expect("nonempty");
            ts.push(u.component_mul(s));
            us.push(u);
        }
        jac.set_column(k, ts.last().expect("nonempty"));
        passes.push((ts, us));
    }
    (jac, passes)
}

/// `mean Tr(G^2) / (mean Tr G)^2` over per-sample Jacobians.
pub fn iso_loss_from_jacobians<T: Scalar>(jacobians: &[DMatrix<T>]) -> Result<T, ManifoldError> {
    if jacobians.is_empty() {
        return Err(ManifoldError::EmptyBatch);
    }
    let n: T = lit(jacobians.len() as f64);
    let (mut sum_sq, mut sum_tr) = (T::zero(), T::zero());
    for j in jacobians {
        let g = j.transpose() * j;
        sum_sq += g.norm_squared();
        sum_tr += g.trace();
    }
    let mean_tr = sum_tr / n;
    if to_f64(mean_tr) < 1e-12 {
        return Err(ManifoldError::ZeroJacobian {
            mean_trace: to_f64(mean_tr),
        });
    }
    Ok(sum_sq / n / (mean_tr * mean_tr))
}

pub fn iso_loss<T: Scalar>(model: &AeModel<T>, zs: &[DVector<T>]) -> Result<T, ManifoldError> {
    let jacs = zs
        .iter()
        .map(|z| model.decoder_jacobian(z))
        .collect::<Result<Vec<_>, _>>()?;
    iso_loss_from_jacobians(&jacs)
}

/// `(1 - alpha) a + alpha b`.
pub fn mix<T: Scalar>(a: &DVector<T>, b: &DVector<T>, alpha: T) -> DVector<T> {
    a * (T::one() - alpha) + b * alpha
}

/// One mixed latent per input: a random partner, weight uniform in
/// `[lo, hi)`.
pub fn augment_latents<T: Scalar, R: Rng>(
    zs: &[DVector<T>],
    mix_range: (f64, f64),
    rng: &mut R,
) -> Vec<DVector<T>> {
    let n = zs.len();
    if n < 2 {
        return zs.to_vec();
    }
    (0..n)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let alpha = rng.random_range(mix_range.0..mix_range.1);
            mix(&zs[i], &zs[j], lit(alpha))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub iso_weight: f64,
    pub mix_range: (f64, f64),
    pub seed: u64,
    pub adam: AdamParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 2,
            lr: 1e-3,
            epochs: 1000,
            batch: 10,
            iso_weight: 1e-7,
            mix_range: (-0.2, 1.2),
            seed: 0,
            adam: AdamParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ManifoldError> {
        let bad = |m: &str| Err(ManifoldError::InvalidConfig(m.to_string()));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch == 0 {
            return bad("batch must be at least 1");
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1");
        }
        if !(self.iso_weight >= 0.0) {
            return bad("iso_weight must be non-negative");
        }
        if !(self.mix_range.0 < self.mix_range.1) {
            return bad("mix_range must be a nonempty interval");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean over minibatches of the reconstruction MSE.
    pub mse: f64,
    /// Mean over minibatches of the isometric term (0 when not evaluated).
    pub iso: f64,
    /// `mse + iso_weight * iso`.
    pub total: f64,
}

pub fn history_csv(history: &[EpochStats]) -> String {
    let mut s = String::from("epoch,mse,iso,total\n");
    for h in history {
        let _ = writeln!(s, "{},{},{},{}", h.epoch, h.mse, h.iso, h.total);
    }
    s
}

/// Mean squared reconstruction error over all components of all rows.
pub fn reconstruction_mse<T: Scalar>(model: &AeModel<T>, data: &[DVector<T>]) -> Result<f64, ManifoldError> {
    if data.is_empty() {
        return Err(ManifoldError::EmptyDataset);
    }
    let mut sum = 0.0;
    for x in data {
        sum += to_f64((model.reconstruct(x)? - x).norm_squared());
    }
    Ok(sum / (data.len() * model.input_dim()) as f64)
}

#[derive(Clone, Debug)]
struct Grads<T: Scalar> {
    w: Vec<DMatrix<T>>,
    b: Vec<DVector<T>>,
}

impl<T: Scalar> Grads<T> {
    fn zeros_like(layers: &[Dense<T>]) -> Self {
        Self {
            w: layers.iter().map(|l| DMatrix::zeros(l.outputs(), l.inputs())).collect(),
            b: layers.iter().map(|l| DVector::zeros(l.outputs())).collect(),
        }
    }
}

/// Backpropagates `g_out` (gradient wrt the last output) through a stack,
/// accumulating parameter gradients. `extra[l]` is added to the gradient
/// wrt the output of layer `l` before it is processed. Returns the gradient
/// wrt the stack input.
fn backprop<T: Scalar>(
    layers: &[Dense<T>],
    outs: &[DVector<T>],
    g_out: DVector<T>,
    extra: Option<&[DVector<T>]>,
    grads: &mut Grads<T>,
) -> DVector<T> {
    let mut g = g_out;
    for l in (0..layers.len()).rev() {
        if let Some(extra) = extra {
            g += &extra[l];
        }
        let s = layers[l].slope(&outs[l + 1]);
        let ga = g.component_mul(&s);
        grads.w[l].ger(T::one(), &ga, &outs[l], T::one());
        grads.b[l] += &ga;
        g = layers[l].weights.tr_mul(&ga);
    }
    g
}

/// Adds the gradient of `L_iso` over the batch `zs` (held fixed) to the
/// decoder gradients, scaled by `weight`. Returns the loss.
fn iso_backward<T: Scalar>(
    decoder: &[Dense<T>],
    zs: &[DVector<T>],
    weight: T,
    grads: &mut Grads<T>,
) -> Result<T, ManifoldError> {
    let b: T = lit(zs.len() as f64);
    let mut cache = Vec::with_capacity(zs.len());
    let (mut sum_sq, mut sum_tr) = (T::zero(), T::zero());
    for z in zs {
        let outs = forward_all(decoder, z);
        let (jac, passes) = tangent_columns(decoder, &outs);
        let g = jac.transpose() * &jac;
        sum_sq += g.norm_squared();
        sum_tr += g.trace();
        cache.push((outs, jac, g, passes));
    }
    let mean_tr = sum_tr / b;
    if to_f64(mean_tr) < 1e-12 {
        return Err(ManifoldError::ZeroJacobian {
            mean_trace: to_f64(mean_tr),
        });
    }
    let mean_sq = sum_sq / b;
    let m2 = mean_tr * mean_tr;
    let loss = mean_sq / m2;
    let c1 = weight * lit::<T>(4.0) / (b * m2);
    let c2 = weight * lit::<T>(4.0) * mean_sq / (b * m2 * mean_tr);

    let n = decoder.len();
    for (outs, jac, g, passes) in &cache {
        // dL/dJ for this sample
        let gj = (jac * g) * c1 - jac * c2;
        let slopes: Vec<_> = decoder.iter().zip(&outs[1..]).map(|(l, o)| l.slope(o)).collect();
        let mut g_h: Vec<DVector<T>> = outs[1..].iter().map(|o| DVector::zeros(o.len())).collect();
        for (k, (ts, us)) in passes.iter().enumerate() {
            let mut gt = gj.column(k).into_owned();
            for l in (0..n).rev() {
                let gu = gt.component_mul(&slopes[l]);
                if decoder[l].activation == Activation::Tanh {
                    // t = (1 - h^2) u
                    let gs = gt.component_mul(&us[l]);
                    g_h[l] -= outs[l + 1].component_mul(&gs) * lit::<T>(2.0);
                }
                grads.w[l].ger(T::one(), &gu, &ts[l], T::one());
                if l > 0 {
                    gt = decoder[l].weights.tr_mul(&gu);
                }
            }
        }
        let zero_out = DVector::zeros(outs[n].len());
        backprop(decoder, outs, zero_out, Some(&g_h), grads);
    }
    Ok(loss)
}

struct Adam<T: Scalar> {
    params: AdamParams,
    lr: f64,
    step: i32,
    m: Vec<Grads<T>>,
    v: Vec<Grads<T>>,
}

impl<T: Scalar> Adam<T> {
    fn new(model: &AeModel<T>, lr: f64, params: AdamParams) -> Self {
        let zeros = |m: &AeModel<T>| vec![Grads::zeros_like(&m.encoder), Grads::zeros_like(&m.decoder)];
        Self {
            params,
            lr,
            step: 0,
            m: zeros(model),
            v: zeros(model),
        }
    }

    fn update(&mut self, model: &mut AeModel<T>, grads: &[Grads<T>; 2]) {
        self.step += 1;
        let (b1, b2) = (self.params.beta1, self.params.beta2);
        let c1 = lit::<T>(1.0 - b1.powi(self.step));
        let c2 = lit::<T>(1.0 - b2.powi(self.step));
        let (b1, b2, eps, lr) = (lit::<T>(b1), lit::<T>(b2), lit::<T>(self.params.eps), lit::<T>(self.lr));
        let one = T::one();
        let step = |p: &mut T, g: T, m: &mut T, v: &mut T| {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + eps);
        };
        let stacks = [&mut model.encoder, &mut model.decoder];
        for (s, layers) in stacks.into_iter().enumerate() {
            for (l, layer) in layers.iter_mut().enumerate() {
                let (gw, mw, vw) = (&grads[s].w[l], &mut self.m[s].w[l], &mut self.v[s].w[l]);
                for i in 0..gw.len() {
                    step(&mut layer.weights[i], gw[i], &mut mw[i], &mut vw[i]);
                }
                let (gb, mb, vb) = (&grads[s].b[l], &mut self.m[s].b[l], &mut self.v[s].b[l]);
                for i in 0..gb.len() {
                    step(&mut layer.bias[i], gb[i], &mut mb[i], &mut vb[i]);
                }
            }
        }
    }
}

/// Trains a fresh model on `data` and returns it with per-epoch statistics.
///
/// Minibatches come from a per-epoch shuffle; the isometric term is
/// evaluated on mixed latents of each minibatch's encodings, held fixed
/// (it updates the decoder only). Everything random is drawn from one
/// stream seeded by `cfg.seed`.
pub fn train<T: Scalar>(
    data: &[DVector<T>],
    cfg: &TrainConfig,
) -> Result<(AeModel<T>, Vec<EpochStats>), ManifoldError> {
    cfg.validate()?;
    let Some(first) = data.first() else {
        return Err(ManifoldError::EmptyDataset);
    };
    let dim = first.len();
    for x in data {
        check_len(x, dim)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = AeModel::<T>::new(dim, cfg.latent_dim, &mut rng);
    let mut adam = Adam::new(&model, cfg.lr, cfg.adam);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let iso_weight = lit::<T>(cfg.iso_weight);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut mse_sum, mut iso_sum, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch) {
            let bsz = chunk.len();
            let scale = lit::<T>(2.0 / (bsz * dim) as f64);
            let mut grads = [Grads::zeros_like(&model.encoder), Grads::zeros_like(&model.decoder)];
            let mut mse = T::zero();
            let mut latents = Vec::with_capacity(bsz);
            for &i in chunk {
                let x = &data[i];
                let enc = forward_all(&model.encoder, x);
                let z = enc.last().expect("nonempty").clone();
                let dec = forward_all(&model.decoder, &z);
                let err = dec.last().expect("nonempty") - x;
                mse += err.norm_squared();
                let gz = backprop(&model.decoder, &dec, err * scale, None, &mut grads[1]);
                backprop(&model.encoder, &enc, gz, None, &mut grads[0]);
                latents.push(z);
            }
            let mse = to_f64(mse) / (bsz * dim) as f64;
            let mut iso = 0.0;
            if bsz >= 2 {
                let mixed = augment_latents(&latents, cfg.mix_range, &mut rng);
                iso = to_f64(iso_backward(&model.decoder, &mixed, iso_weight, &mut grads[1])?);
            }
            if !(mse.is_finite() && iso.is_finite()) {
                return Err(ManifoldError::NonFiniteLoss { epoch });
            }
            adam.update(&mut model, &grads);
            mse_sum += mse;
            iso_sum += iso;
            batches += 1;
        }
        let n = batches as f64;
        let (mse, iso) = (mse_sum / n, iso_sum / n);
        if !model.all_finite() {
            return Err(ManifoldError::NonFiniteLoss { epoch });
        }
        history.push(EpochStats {
            epoch,
            mse,
            iso,
            total: mse + cfg.iso_weight * iso,
        });
    }
    Ok((model, history))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub rows: usize,
    pub cols: usize,
    pub activation: Activation,
    /// Row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Serializable model with the settings that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub initialization: String,
    pub config: TrainConfig,
    pub encoder: Vec<LayerRecord>,
    pub decoder: Vec<LayerRecord>,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &AeModel<T>, config: &TrainConfig) -> Self {
        let rec = |l: &Dense<T>| LayerRecord {
            rows: l.outputs(),
            cols: l.inputs(),
            activation: l.activation,
            weights: (0..l.outputs())
                .flat_map(|r| (0..l.inputs()).map(move |c| (r, c)))
                .map(|(r, c)| to_f64(l.weights[(r, c)]))
                .collect(),
            bias: l.bias.iter().map(|v| to_f64(*v)).collect(),
        };
        Self {
            input_dim: model.input_dim(),
            latent_dim: model.latent_dim(),
            initialization: "uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases".into(),
            config: *config,
            encoder: model.encoder.iter().map(rec).collect(),
            decoder: model.decoder.iter().map(rec).collect(),
        }
    }

    pub fn to_model<T: Scalar>(&self) -> Result<AeModel<T>, ManifoldError> {
        let layer = |r: &LayerRecord| -> Result<Dense<T>, ManifoldError> {
            if r.weights.len() != r.rows * r.cols || r.bias.len() != r.rows {
                return Err(ManifoldError::Checkpoint(format!(
                    "layer {}x{} has {} weights and {} biases",
                    r.rows,
                    r.cols,
                    r.weights.len(),
                    r.bias.len()
                )));
            }
            Ok(Dense {
                weights: DMatrix::from_row_iterator(r.rows, r.cols, r.weights.iter().map(|v| lit::<T>(*v))),
                bias: DVector::from_iterator(r.rows, r.bias.iter().map(|v| lit::<T>(*v))),
                activation: r.activation,
            })
        };
        let encoder = self.encoder.iter().map(layer).collect::<Result<Vec<_>, _>>()?;
        let decoder = self.decoder.iter().map(layer).collect::<Result<Vec<_>, _>>()?;
        let chained = |ls: &[Dense<T>], from: usize, to: usize| {
            !ls.is_empty()
                && ls[0].inputs() == from
                && ls.last().is_some_and(|l| l.outputs() == to)
                && ls.windows(2).all(|w| w[0].outputs() == w[1].inputs())
        };
        if !chained(&encoder, self.input_dim, self.latent_dim) || !chained(&decoder, self.latent_dim, self.input_dim) {
            return Err(ManifoldError::Checkpoint("layer shapes do not chain".into()));
        }
        Ok(AeModel { encoder, decoder })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ManifoldError> {
        serde_json::from_str(s).map_err(|e| ManifoldError::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rand_model(seed: u64, input: usize, latent: usize) -> AeModel<f64> {
        AeModel::new(input, latent, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn shapes() {
        let m = rand_model(1, 120, 2);
        let widths: Vec<_> = m.encoder.iter().map(|l| (l.inputs(), l.outputs())).collect();
        assert_eq!(widths, vec![(120, 64), (64, 32), (32, 2)]);
        let widths: Vec<_> = m.decoder.iter().map(|l| (l.inputs(), l.outputs())).collect();
        assert_eq!(widths, vec![(2, 32), (32, 64), (64, 120)]);
        assert!(matches!(
            m.decode(&DVector::zeros(3)),
            Err(ManifoldError::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn zero_model_decodes_to_output_bias() {
        let mut m = AeModel::<f64>::zeros(120, 2);
        m.decoder[2].bias = DVector::from_fn(120, |i, _| i as f64);
        let out = m.decode(&DVector::from_vec(vec![0.3, -2.0])).unwrap();
        assert_eq!(out, m.decoder[2].bias);
    }

    #[test]
    fn iso_loss_analytic_values() {
        let q = DMatrix::from_row_slice(3, 2, &[0.6, 0.0, 0.8, 0.0, 0.0, 1.0]);
        assert_relative_eq!(iso_loss_from_jacobians(std::slice::from_ref(&q)).unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(iso_loss_from_jacobians(&[q * 3.0]).unwrap(), 0.5, epsilon = 1e-12);
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        assert_relative_eq!(iso_loss_from_jacobians(&[d]).unwrap(), 0.68, epsilon = 1e-12);
        assert!(matches!(
            iso_loss_from_jacobians(&[DMatrix::<f64>::zeros(3, 2)]),
            Err(ManifoldError::ZeroJacobian { .. })
        ));
    }

    #[test]
    fn mixing_endpoints_are_exact() {
        let a = DVector::from_vec(vec![0.1, 0.7]);
        let b = DVector::from_vec(vec![-3.0, 2.5]);
        assert_eq!(mix(&a, &b, 0.0), a);
        assert_eq!(mix(&a, &b, 1.0), b);
    }

    #[test]
    fn iso_gradient_matches_finite_differences() {
        let m = rand_model(7, 12, 2);
        let zs: Vec<_> = (0..4)
            .map(|i| DVector::from_vec(vec![0.3 * i as f64 - 0.5, 0.2 - 0.1 * i as f64]))
            .collect();
        let mut grads = Grads::zeros_like(&m.decoder);
        iso_backward(&m.decoder, &zs, 1.0, &mut grads).unwrap();
        let loss_with = |m: &AeModel<f64>| iso_loss(m, &zs).unwrap();
        let h = 1e-6;
        for l in 0..3 {
            for &(r, c) in &[(0usize, 0usize), (1, 1), (5, 0)] {
                if r >= m.decoder[l].outputs() || c >= m.decoder[l].inputs() {
                    continue;
                }
                let mut p = m.clone();
                p.decoder[l].weights[(r, c)] += h;
                let mut n = m.clone();
                n.decoder[l].weights[(r, c)] -= h;
                let fd = (loss_with(&p) - loss_with(&n)) / (2.0 * h);
                assert_relative_eq!(grads.w[l][(r, c)], fd, epsilon = 1e-7, max_relative = 1e-5);
            }
            let mut p = m.clone();
            p.decoder[l].bias[1] += h;
            let mut n = m.clone();
            n.decoder[l].bias[1] -= h;
            let fd = (loss_with(&p) - loss_with(&n)) / (2.0 * h);
            assert_relative_eq!(grads.b[l][1], fd, epsilon = 1e-7, max_relative = 1e-5);
        }
    }

    #[test]
    fn reconstruction_gradient_matches_finite_differences() {
        let m = rand_model(3, 6, 2);
        let x = DVector::from_vec(vec![0.2, -0.1, 0.5, 0.0, 0.3, -0.4]);
        let loss = |m: &AeModel<f64>| (m.reconstruct(&x).unwrap() - &x).norm_squared() / 6.0;
        let enc = forward_all(&m.encoder, &x);
        let dec = forward_all(&m.decoder, enc.last().unwrap());
        let mut ge = Grads::zeros_like(&m.encoder);
        let mut gd = Grads::zeros_like(&m.decoder);
        let err = (dec.last().unwrap() - &x) * (2.0 / 6.0);
        let gz = backprop(&m.decoder, &dec, err, None, &mut gd);
        backprop(&m.encoder, &enc, gz, None, &mut ge);
        let h = 1e-6;
        let mut p = m.clone();
        p.encoder[0].weights[(2, 3)] += h;
        let mut n = m.clone();
        n.encoder[0].weights[(2, 3)] -= h;
        assert_relative_eq!(ge.w[0][(2, 3)], (loss(&p) - loss(&n)) / (2.0 * h), epsilon = 1e-8, max_relative = 1e-5);
        let mut p = m.clone();
        p.decoder[1].bias[4] += h;
        let mut n = m.clone();
        n.decoder[1].bias[4] -= h;
        assert_relative_eq!(gd.b[1][4], (loss(&p) - loss(&n)) / (2.0 * h), epsilon = 1e-8, max_relative = 1e-5);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let m = rand_model(11, 10, 3);
        let ck = Checkpoint::from_model(&m, &TrainConfig::default());
        let back: AeModel<f64> = Checkpoint::from_json(&ck.to_json()).unwrap().to_model().unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn training_reduces_single_point_error() {
        let x = DVector::from_fn(8, |i, _| (i as f64 * 0.37).sin());
        let cfg = TrainConfig {
            epochs: 50,
            batch: 1,
            ..TrainConfig::default()
        };
        let (_, hist) = train(&[x], &cfg).unwrap();
        assert!(hist.last().unwrap().mse < hist[0].mse);
    }
}

//! The trainable acceleration field `a(x_t, t, v_tau, tau)` and its reduced
//! velocity form `v(x_t, t)`, with exact reverse-mode gradients and an
//! adaptive-moment optimizer.
//!
//! Architecture, stage 1: `x_t` and `v_tau` each pass through a linear
//! encoder of width `hidden_width / 4`; `t` and `tau` are expanded with
//! sinusoidal positional embeddings of size `time_embed_dim` (geometric
//! frequency ladder, base 10000, times scaled by 1000) and then linearly
//! encoded to the same width. Stage 2 concatenates the encodings and refines
//! them through `n_hidden_layers` SiLU-activated linear layers of
//! `hidden_width` units, followed by a linear output head.
//!
//! All row computations use fixed accumulation orders, so a batch forward is
//! bit-identical to row-by-row forwards and results do not depend on the
//! worker count.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams};
use crate::SampleBatch;
use ndarray::Array2;

/// Which field the network models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `a(x_t, t, v_tau, tau)`, the depth-2 field.
    Accel,
    /// `v(x_t, t)`; ignores the `(v_tau, tau)` inputs entirely.
    Velocity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub data_dim: usize,
    pub hidden_width: usize,
    pub n_hidden_layers: usize,
    pub time_embed_dim: usize,
    pub variant: Variant,
}

impl NetConfig {
    /// 1D acceleration preset (304,513 parameters).
    pub fn preset_accel_1d() -> Self {
        Self {
            data_dim: 1,
            hidden_width: 256,
            n_hidden_layers: 4,
            time_embed_dim: 318,
            variant: Variant::Accel,
        }
    }

    /// 2D acceleration preset (321,154 parameters).
    pub fn preset_accel_2d() -> Self {
        Self {
            data_dim: 2,
            hidden_width: 256,
            n_hidden_layers: 4,
            time_embed_dim: 445,
            variant: Variant::Accel,
        }
    }

    /// Velocity-field preset of the same trunk shape.
    pub fn preset_velocity(data_dim: usize) -> Self {
        let time_embed_dim = if data_dim == 1 { 318 } else { 445 };
        Self {
            data_dim,
            hidden_width: 256,
            n_hidden_layers: 4,
            time_embed_dim,
            variant: Variant::Velocity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.data_dim == 0
            || self.hidden_width == 0
            || self.n_hidden_layers == 0
            || self.time_embed_dim == 0
        {
            return Err(Error::InvalidConfig("all net dimensions must be >= 1".into()));
        }
        if self.hidden_width % 4 != 0 {
            return Err(Error::InvalidConfig(
                "hidden_width must be divisible by 4 (encoder width)".into(),
            ));
        }
        Ok(())
    }

    /// Width of each stage-1 encoder.
    pub fn encoder_width(&self) -> usize {
        self.hidden_width / 4
    }

    /// Width of the concatenated stage-1 output.
    pub fn concat_width(&self) -> usize {
        match self.variant {
            Variant::Accel => 4 * self.encoder_width(),
            Variant::Velocity => 2 * self.encoder_width(),
        }
    }

    /// `(rows, cols)` of every parameter tensor, in flat layout order.
    /// Biases are `(rows, 1)`.
    fn shapes(&self) -> Vec<(usize, usize)> {
        let d = self.data_dim;
        let w = self.encoder_width();
        let e = self.time_embed_dim;
        let h = self.hidden_width;
        let c = self.concat_width();
        let mut s = vec![(w, d), (w, 1), (w, e), (w, 1)]; // enc_x, enc_t
        if self.variant == Variant::Accel {
            s.extend([(w, d), (w, 1), (w, e), (w, 1)]); // enc_v, enc_tau
        }
        s.extend([(h, c), (h, 1)]);
        for _ in 1..self.n_hidden_layers {
            s.extend([(h, h), (h, 1)]);
        }
        s.extend([(d, h), (d, 1)]);
        s
    }

    /// Total number of trainable parameters; a pure function of the config.
    pub fn param_count(&self) -> usize {
        self.shapes().iter().map(|(r, c)| r * c).sum()
    }
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone)]
struct Layout {
    offsets: Vec<usize>,
    shapes: Vec<(usize, usize)>,
}

impl Layout {
    fn new(config: &NetConfig) -> Self {
        let shapes = config.shapes();
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut at = 0;
        for &(r, c) in &shapes {
            offsets.push(at);
            at += r * c;
        }
        Self { offsets, shapes }
    }

    fn seg<'a>(&self, params: &'a [f64], idx: usize) -> &'a [f64] {
        let (r, c) = self.shapes[idx];
        &params[self.offsets[idx]..self.offsets[idx] + r * c]
    }

    fn seg_mut<'a>(&self, params: &'a mut [f64], idx: usize) -> &'a mut [f64] {
        let (r, c) = self.shapes[idx];
        &mut params[self.offsets[idx]..self.offsets[idx] + r * c]
    }
}

/// `y[o] = sum_k w[o][k] * x[k] + b[o]` with a fixed 4-way unrolled
/// accumulation order per output unit.
fn affine_row(w: &[f64], b: &[f64], x: &[f64], y: &mut [f64]) {
    let k = x.len();
    for (o, yo) in y.iter_mut().enumerate() {
        let row = &w[o * k..(o + 1) * k];
        let mut a0 = 0.0;
        let mut a1 = 0.0;
        let mut a2 = 0.0;
        let mut a3 = 0.0;
        let mut i = 0;
        while i + 4 <= k {
            a0 += row[i] * x[i];
            a1 += row[i + 1] * x[i + 1];
            a2 += row[i + 2] * x[i + 2];
            a3 += row[i + 3] * x[i + 3];
            i += 4;
        }
        let mut acc = (a0 + a1) + (a2 + a3);
        while i < k {
            acc += row[i] * x[i];
            i += 1;
        }
        *yo = acc + b[o];
    }
}

/// `dx[k] += sum_o dy[o] * w[o][k]`, accumulated row by row.
fn backprop_input_row(w: &[f64], dy: &[f64], dx: &mut [f64]) {
    let k = dx.len();
    for (o, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &w[o * k..(o + 1) * k];
        for i in 0..k {
            dx[i] += g * row[i];
        }
    }
}

/// `dw[o][k] += dy[o] * x[k]`, `db[o] += dy[o]`.
fn accumulate_weight_grad(dw: &mut [f64], db: &mut [f64], dy: &[f64], x: &[f64]) {
    let k = x.len();
    for (o, &g) in dy.iter().enumerate() {
        db[o] += g;
        let row = &mut dw[o * k..(o + 1) * k];
        for i in 0..k {
            row[i] += g * x[i];
        }
    }
}

fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn silu_deriv(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s * (1.0 + z * (1.0 - s))
}

/// Sinusoidal positional embedding of a scalar time in `[0, 1]`.
///
/// Times are scaled by 1000; frequencies follow a geometric ladder with base
/// 10000. Out dim may be odd, in which case the final channel is zero.
pub fn time_embedding(t: f64, dim: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), dim);
    let half = dim / 2;
    let scaled = t * 1000.0;
    let denom = if half > 1 { (half - 1) as f64 } else { 1.0 };
    for i in 0..half {
        let freq = (-(10_000.0f64.ln()) * i as f64 / denom).exp();
        let angle = scaled * freq;
        out[i] = angle.sin();
        out[half + i] = angle.cos();
    }
    if dim % 2 == 1 {
        out[dim - 1] = 0.0;
    }
}

/// One row's worth of forward scratch, reused across rows in a chunk.
struct RowWorkspace {
    emb_t: Vec<f64>,
    emb_tau: Vec<f64>,
    features: Vec<f64>,
    trunk_z: Vec<Vec<f64>>,
    trunk_a: Vec<Vec<f64>>,
    out: Vec<f64>,
    // backward scratch
    d_hidden: Vec<f64>,
    d_hidden_prev: Vec<f64>,
    d_features: Vec<f64>,
}

impl RowWorkspace {
    fn new(config: &NetConfig) -> Self {
        let h = config.hidden_width;
        let l = config.n_hidden_layers;
        Self {
            emb_t: vec![0.0; config.time_embed_dim],
            emb_tau: vec![0.0; config.time_embed_dim],
            features: vec![0.0; config.concat_width()],
            trunk_z: (0..l).map(|_| vec![0.0; h]).collect(),
            trunk_a: (0..l).map(|_| vec![0.0; h]).collect(),
            out: vec![0.0; config.data_dim],
            d_hidden: vec![0.0; h],
            d_hidden_prev: vec![0.0; h],
            d_features: vec![0.0; config.concat_width()],
        }
    }
}

/// A batch of rows for `loss_and_grad`. `v_tau`/`tau` are required by the
/// acceleration variant and ignored by the velocity variant.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub x_t: SampleBatch,
    pub t: Vec<f64>,
    pub v_tau: Option<SampleBatch>,
    pub tau: Option<Vec<f64>>,
    pub target: SampleBatch,
}

/// The trainable model: a config plus a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelModel {
    pub config: NetConfig,
    pub params: Vec<f64>,
}

const ROW_CHUNK: usize = 128;

impl AccelModel {
    /// Fan-in-scaled uniform initialization, deterministic per seed.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; config.param_count()];
        let mut rng = stream_rng(seed, streams::MODEL_INIT);
        // Weight tensors come first in each (weight, bias) pair; both use the
        // weight's fan-in bound, matching common linear-layer defaults.
        for idx in (0..layout.shapes.len()).step_by(2) {
            let fan_in = layout.shapes[idx].1;
            let bound = 1.0 / (fan_in as f64).sqrt();
            for s in [idx, idx + 1] {
                for p in layout.seg_mut(&mut params, s) {
                    *p = (rng.random::<f64>() * 2.0 - 1.0) * bound;
                }
            }
        }
        Ok(Self { config, params })
    }

    /// All-zero parameters; the model maps every input to zero.
    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let params = vec![0.0; config.param_count()];
        Ok(Self { config, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_inputs(
        &self,
        x: &SampleBatch,
        t: &[f64],
        v: Option<&SampleBatch>,
        tau: Option<&[f64]>,
    ) -> Result<usize> {
        let d = self.config.data_dim;
        let n = x.nrows();
        if x.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.ncols() });
        }
        if t.len() != n {
            return Err(Error::BatchSizeMismatch { left: n, right: t.len() });
        }
        if !x.iter().all(|v| v.is_finite()) || !t.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { context: "model input", step: 0 });
        }
        if self.config.variant == Variant::Accel {
            let v = v.ok_or_else(|| {
                Error::InvalidArgument("acceleration variant needs v_tau".into())
            })?;
            let tau = tau.ok_or_else(|| {
                Error::InvalidArgument("acceleration variant needs tau".into())
            })?;
            if v.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.ncols() });
            }
            if v.nrows() != n || tau.len() != n {
                return Err(Error::BatchSizeMismatch { left: n, right: v.nrows().min(tau.len()) });
            }
            if !v.iter().all(|x| x.is_finite()) || !tau.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite { context: "model input", step: 0 });
            }
        }
        Ok(n)
    }

    fn forward_row(
        &self,
        layout: &Layout,
        ws: &mut RowWorkspace,
        x: &[f64],
        t: f64,
        v: Option<&[f64]>,
        tau: Option<f64>,
    ) {
        let cfg = &self.config;
        let w = cfg.encoder_width();
        let p = &self.params;
        time_embedding(t, cfg.time_embed_dim, &mut ws.emb_t);

        let (fx, rest) = ws.features.split_at_mut(w);
        affine_row(layout.seg(p, 0), layout.seg(p, 1), x, fx);
        let (ft, rest) = rest.split_at_mut(w);
        affine_row(layout.seg(p, 2), layout.seg(p, 3), &ws.emb_t, ft);
        if cfg.variant == Variant::Accel {
            time_embedding(tau.unwrap(), cfg.time_embed_dim, &mut ws.emb_tau);
            let (fv, ftau) = rest.split_at_mut(w);
            affine_row(layout.seg(p, 4), layout.seg(p, 5), v.unwrap(), fv);
            affine_row(layout.seg(p, 6), layout.seg(p, 7), &ws.emb_tau, ftau);
        }

        let trunk0 = self.trunk_start();
        let mut input: &[f64] = &ws.features;
        for l in 0..cfg.n_hidden_layers {
            let wi = trunk0 + 2 * l;
            let z = &mut ws.trunk_z[l];
            affine_row(layout.seg(p, wi), layout.seg(p, wi + 1), input, z);
            for (a, &zv) in ws.trunk_a[l].iter_mut().zip(z.iter()) {
                *a = silu(zv);
            }
            input = &ws.trunk_a[l];
        }
        let oi = trunk0 + 2 * cfg.n_hidden_layers;
        affine_row(layout.seg(p, oi), layout.seg(p, oi + 1), input, &mut ws.out);
    }

    fn trunk_start(&self) -> usize {
        match self.config.variant {
            Variant::Accel => 8,
            Variant::Velocity => 4,
        }
    }

    /// Batched forward pass. Rows are independent and bit-identical to
    /// one-row calls.
    pub fn forward_batch(
        &self,
        x: &SampleBatch,
        t: &[f64],
        v: Option<&SampleBatch>,
        tau: Option<&[f64]>,
    ) -> Result<SampleBatch> {
        let n = self.check_inputs(x, t, v, tau)?;
        let layout = Layout::new(&self.config);
        let d = self.config.data_dim;
        let mut out = Array2::zeros((n, d));

        let row_starts: Vec<usize> = (0..n).step_by(ROW_CHUNK).collect();
        let chunks: Vec<Vec<f64>> = row_starts
            .par_iter()
            .map(|&start| {
                let end = (start + ROW_CHUNK).min(n);
                let mut ws = RowWorkspace::new(&self.config);
                let mut vals = Vec::with_capacity((end - start) * d);
                for i in start..end {
                    let xr = x.row(i);
                    let vr = v.map(|vb| vb.row(i));
                    self.forward_row(
                        &layout,
                        &mut ws,
                        xr.as_slice().unwrap(),
                        t[i],
                        vr.as_ref().map(|r| r.as_slice().unwrap()),
                        tau.map(|tt| tt[i]),
                    );
                    vals.extend_from_slice(&ws.out);
                }
                vals
            })
            .collect();

        for (ci, &start) in row_starts.iter().enumerate() {
            let vals = &chunks[ci];
            for (r, chunk_row) in vals.chunks(d).enumerate() {
                for k in 0..d {
                    out[[start + r, k]] = chunk_row[k];
                }
            }
        }
        Ok(out)
    }

    /// Single-row forward.
    pub fn forward(&self, x: &[f64], t: f64, v: &[f64], tau: f64) -> Result<Vec<f64>> {
        let xb = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("shape");
        let vb = Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("shape");
        let out = match self.config.variant {
            Variant::Accel => self.forward_batch(&xb, &[t], Some(&vb), Some(&[tau]))?,
            Variant::Velocity => self.forward_batch(&xb, &[t], None, None)?,
        };
        Ok(out.row(0).to_vec())
    }

    /// Mean over the batch of squared error norms, with its exact gradient
    /// with respect to every parameter.
    pub fn loss_and_grad(&self, batch: &TrainBatch) -> Result<(f64, Vec<f64>)> {
        let v_ref = batch.v_tau.as_ref();
        let tau_ref = batch.tau.as_deref();
        let n = self.check_inputs(&batch.x_t, &batch.t, v_ref, tau_ref)?;
        if batch.target.nrows() != n || batch.target.ncols() != self.config.data_dim {
            return Err(Error::BatchSizeMismatch { left: n, right: batch.target.nrows() });
        }
        let layout = Layout::new(&self.config);
        let n_params = self.params.len();
        let inv_n = 1.0 / n as f64;

        let row_starts: Vec<usize> = (0..n).step_by(ROW_CHUNK).collect();
        let partials: Vec<(f64, Vec<f64>)> = row_starts
            .par_iter()
            .map(|&start| {
                let end = (start + ROW_CHUNK).min(n);
                let mut ws = RowWorkspace::new(&self.config);
                let mut grad = vec![0.0; n_params];
                let mut loss = 0.0;
                for i in start..end {
                    let xr = batch.x_t.row(i);
                    let vr = v_ref.map(|vb| vb.row(i));
                    self.forward_row(
                        &layout,
                        &mut ws,
                        xr.as_slice().unwrap(),
                        batch.t[i],
                        vr.as_ref().map(|r| r.as_slice().unwrap()),
                        tau_ref.map(|tt| tt[i]),
                    );
                    let mut d_out = vec![0.0; self.config.data_dim];
                    for k in 0..self.config.data_dim {
                        let diff = ws.out[k] - batch.target[[i, k]];
                        loss += diff * diff;
                        d_out[k] = 2.0 * diff * inv_n;
                    }
                    self.backward_row(
                        &layout,
                        &mut ws,
                        xr.as_slice().unwrap(),
                        vr.as_ref().map(|r| r.as_slice().unwrap()),
                        &d_out,
                        &mut grad,
                    );
                }
                (loss, grad)
            })
            .collect();

        let mut grad = vec![0.0; n_params];
        let mut loss = 0.0;
        for (l, g) in &partials {
            loss += l;
            for (acc, add) in grad.iter_mut().zip(g) {
                *acc += add;
            }
        }
        loss *= inv_n;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite loss {loss}")));
        }
        Ok((loss, grad))
    }

    fn backward_row(
        &self,
        layout: &Layout,
        ws: &mut RowWorkspace,
        x: &[f64],
        v: Option<&[f64]>,
        d_out: &[f64],
        grad: &mut [f64],
    ) {
        let cfg = &self.config;
        let p = &self.params;
        let trunk0 = self.trunk_start();
        let oi = trunk0 + 2 * cfg.n_hidden_layers;
        let last_a = cfg.n_hidden_layers - 1;

        // Output head.
        {
            let (r, c) = layout.shapes[oi];
            let (wseg, rest) = grad[layout.offsets[oi]..].split_at_mut(r * c);
            accumulate_weight_grad(wseg, &mut rest[..r], d_out, &ws.trunk_a[last_a]);
        }
        ws.d_hidden.iter_mut().for_each(|g| *g = 0.0);
        backprop_input_row(layout.seg(p, oi), d_out, &mut ws.d_hidden);

        // Trunk, last layer to first.
        for l in (0..cfg.n_hidden_layers).rev() {
            for (dh, &z) in ws.d_hidden.iter_mut().zip(&ws.trunk_z[l]) {
                *dh *= silu_deriv(z);
            }
            let wi = trunk0 + 2 * l;
            {
                let input: &[f64] = if l == 0 { &ws.features } else { &ws.trunk_a[l - 1] };
                let (r, c) = layout.shapes[wi];
                let (wseg, rest) = grad[layout.offsets[wi]..].split_at_mut(r * c);
                accumulate_weight_grad(wseg, &mut rest[..r], &ws.d_hidden, input);
            }
            if l == 0 {
                ws.d_features.iter_mut().for_each(|g| *g = 0.0);
                backprop_input_row(layout.seg(p, wi), &ws.d_hidden, &mut ws.d_features);
            } else {
                ws.d_hidden_prev.iter_mut().for_each(|g| *g = 0.0);
                backprop_input_row(layout.seg(p, wi), &ws.d_hidden, &mut ws.d_hidden_prev);
                std::mem::swap(&mut ws.d_hidden, &mut ws.d_hidden_prev);
            }
        }

        // Stage-1 encoders; embeddings carry no parameters.
        let w = cfg.encoder_width();
        let enc_inputs: Vec<(usize, &[f64])> = match cfg.variant {
            Variant::Accel => vec![
                (0, x),
                (2, ws.emb_t.as_slice()),
                (4, v.unwrap()),
                (6, ws.emb_tau.as_slice()),
            ],
            Variant::Velocity => vec![(0, x), (2, ws.emb_t.as_slice())],
        };
        for (slot, (idx, input)) in enc_inputs.into_iter().enumerate() {
            let dseg = &ws.d_features[slot * w..(slot + 1) * w];
            let (r, c) = layout.shapes[idx];
            let (wseg, rest) = grad[layout.offsets[idx]..].split_at_mut(r * c);
            accumulate_weight_grad(wseg, &mut rest[..r], dseg, input);
        }
    }
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        Self {
            step: 0,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One optimizer update, in place. Deterministic given inputs.
pub fn optimizer_step(
    state: &mut OptimizerState,
    model: &mut AccelModel,
    grad: &[f64],
) -> Result<()> {
    if grad.len() != model.params.len() || grad.len() != state.first_moment.len() {
        return Err(Error::BatchSizeMismatch { left: model.params.len(), right: grad.len() });
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - state.beta1.powf(t);
    let bc2 = 1.0 - state.beta2.powf(t);
    for i in 0..grad.len() {
        let g = grad[i];
        state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        state.second_moment[i] =
            state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.first_moment[i] / bc1;
        let v_hat = state.second_moment[i] / bc2;
        model.params[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

/// Versioned checkpoint blob.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: NetConfig,
    pub params: Vec<f64>,
    pub meta: CheckpointMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerState>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub iteration: u64,
    pub seed: u64,
    pub method: String,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn new(model: &AccelModel, meta: CheckpointMeta) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            params: model.params.clone(),
            meta,
            optimizer: None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let data = serde_json::to_vec(self)?;
        std::fs::write(path, data)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data = std::fs::read(path)?;
        let ckpt: Checkpoint = serde_json::from_slice(&data)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        if ckpt.params.len() != ckpt.config.param_count() {
            return Err(Error::Checkpoint("parameter count does not match config".into()));
        }
        Ok(ckpt)
    }

    pub fn into_model(self) -> AccelModel {
        AccelModel { config: self.config, params: self.params }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn small_config(data_dim: usize, variant: Variant) -> NetConfig {
        NetConfig {
            data_dim,
            hidden_width: 16,
            n_hidden_layers: 2,
            time_embed_dim: 7,
            variant,
        }
    }

    fn random_batch(n: usize, d: usize, seed: u64) -> SampleBatch {
        let mut rng = stream_rng(seed, 90);
        Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn random_train_batch(config: &NetConfig, n: usize, seed: u64) -> TrainBatch {
        let d = config.data_dim;
        let mut rng = stream_rng(seed, 91);
        let t: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let tau: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        TrainBatch {
            x_t: random_batch(n, d, seed + 1),
            t,
            v_tau: (config.variant == Variant::Accel).then(|| random_batch(n, d, seed + 2)),
            tau: (config.variant == Variant::Accel).then_some(tau),
            target: random_batch(n, d, seed + 3),
        }
    }

    #[test]
    fn preset_param_counts_match_published_totals() {
        assert_eq!(NetConfig::preset_accel_1d().param_count(), 304_513);
        assert_eq!(NetConfig::preset_accel_2d().param_count(), 321_154);
    }

    #[test]
    fn fresh_model_output_is_bounded() {
        for cfg in [NetConfig::preset_accel_1d(), NetConfig::preset_accel_2d()] {
            let model = AccelModel::init(cfg.clone(), 5).unwrap();
            let d = cfg.data_dim;
            let out = model
                .forward(&vec![0.7; d], 0.3, &vec![-0.4; d], 0.9)
                .unwrap();
            let norm: f64 = out.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(norm.is_finite() && norm < 1e3, "norm {norm}");
        }
    }

    #[test]
    fn velocity_variant_ignores_velocity_inputs() {
        let cfg = small_config(2, Variant::Velocity);
        let model = AccelModel::init(cfg, 6).unwrap();
        let a = model.forward(&[0.5, -0.3], 0.25, &[10.0, 10.0], 0.9).unwrap();
        let b = model.forward(&[0.5, -0.3], 0.25, &[-10.0, 3.0], 0.1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_forward_bit_matches_scalar_forwards() {
        let cfg = small_config(2, Variant::Accel);
        let model = AccelModel::init(cfg, 7).unwrap();
        let n = 300; // spans multiple row chunks
        let x = random_batch(n, 2, 1);
        let v = random_batch(n, 2, 2);
        let mut rng = stream_rng(3, 89);
        let t: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let tau: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let batch = model.forward_batch(&x, &t, Some(&v), Some(&tau)).unwrap();
        for i in 0..n {
            let row = model
                .forward(&x.row(i).to_vec(), t[i], &v.row(i).to_vec(), tau[i])
                .unwrap();
            assert_eq!(batch.row(i).to_vec(), row, "row {i}");
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        let cfg = small_config(1, Variant::Accel);
        let model = AccelModel::init(cfg, 8).unwrap();
        let err = model.forward(&[f64::NAN], 0.5, &[0.0], 0.5);
        assert!(matches!(err, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn zero_residual_gives_zero_loss_and_grad() {
        let cfg = small_config(1, Variant::Accel);
        let model = AccelModel::init(cfg.clone(), 9).unwrap();
        let mut batch = random_train_batch(&cfg, 32, 10);
        batch.target = model
            .forward_batch(&batch.x_t, &batch.t, batch.v_tau.as_ref(), batch.tau.as_deref())
            .unwrap();
        let (loss, grad) = model.loss_and_grad(&batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn duplicating_batch_preserves_loss_and_grad() {
        let cfg = small_config(2, Variant::Accel);
        let model = AccelModel::init(cfg.clone(), 11).unwrap();
        let batch = random_train_batch(&cfg, 20, 12);
        let mut doubled_x = batch.x_t.clone();
        doubled_x.append(ndarray::Axis(0), batch.x_t.view()).unwrap();
        let mut doubled_v = batch.v_tau.clone().unwrap();
        doubled_v
            .append(ndarray::Axis(0), batch.v_tau.as_ref().unwrap().view())
            .unwrap();
        let mut doubled_target = batch.target.clone();
        doubled_target.append(ndarray::Axis(0), batch.target.view()).unwrap();
        let doubled = TrainBatch {
            x_t: doubled_x,
            t: [batch.t.clone(), batch.t.clone()].concat(),
            v_tau: Some(doubled_v),
            tau: Some([batch.tau.clone().unwrap(), batch.tau.clone().unwrap()].concat()),
            target: doubled_target,
        };
        let (l1, g1) = model.loss_and_grad(&batch).unwrap();
        let (l2, g2) = model.loss_and_grad(&doubled).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    /// Central finite-difference oracle for the gradient.
    fn finite_difference_check(cfg: NetConfig, seed: u64) {
        let model = AccelModel::init(cfg.clone(), seed).unwrap();
        let batch = random_train_batch(&cfg, 16, seed + 100);
        let (_, grad) = model.loss_and_grad(&batch).unwrap();
        let mut rng = stream_rng(seed + 7, 88);
        let h = 1e-6;
        let mut checked = 0;
        while checked < 20 {
            let idx = (rng.random::<f64>() * model.params.len() as f64) as usize;
            let mut plus = model.clone();
            plus.params[idx] += h;
            let mut minus = model.clone();
            minus.params[idx] -= h;
            let (lp, _) = plus.loss_and_grad(&batch).unwrap();
            let (lm, _) = minus.loss_and_grad(&batch).unwrap();
            let numeric = (lp - lm) / (2.0 * h);
            if numeric.abs() < 1e-8 && grad[idx].abs() < 1e-8 {
                continue; // both zero; relative error undefined
            }
            let rel = (grad[idx] - numeric).abs() / numeric.abs().max(grad[idx].abs());
            assert!(rel < 1e-4, "param {idx}: analytic {} vs numeric {numeric}", grad[idx]);
            checked += 1;
        }
    }

    #[test]
    fn gradient_matches_finite_differences_accel() {
        finite_difference_check(small_config(1, Variant::Accel), 21);
        finite_difference_check(small_config(2, Variant::Accel), 22);
    }

    #[test]
    fn gradient_matches_finite_differences_velocity() {
        finite_difference_check(small_config(1, Variant::Velocity), 23);
        finite_difference_check(small_config(2, Variant::Velocity), 24);
    }

    #[test]
    fn optimizer_zero_gradient_is_identity() {
        let cfg = small_config(1, Variant::Accel);
        let mut model = AccelModel::init(cfg, 30).unwrap();
        let before = model.params.clone();
        let mut state = OptimizerState::new(model.param_count(), 1e-3);
        let zeros = vec![0.0; model.param_count()];
        optimizer_step(&mut state, &mut model, &zeros).unwrap();
        assert_eq!(model.params, before);
    }

    #[test]
    fn optimizer_converges_on_convex_quadratic() {
        // Toy objective: 0.5*sum((p - c)^2) with analytic minimum at c.
        let cfg = small_config(1, Variant::Velocity);
        let mut model = AccelModel::zeros(cfg).unwrap();
        let targets: Vec<f64> = (0..model.param_count())
            .map(|i| ((i % 13) as f64 - 6.0) / 10.0)
            .collect();
        let mut state = OptimizerState::new(model.param_count(), 0.05);
        for _ in 0..2000 {
            let grad: Vec<f64> = model
                .params
                .iter()
                .zip(&targets)
                .map(|(p, c)| p - c)
                .collect();
            optimizer_step(&mut state, &mut model, &grad).unwrap();
        }
        let err = model
            .params
            .iter()
            .zip(&targets)
            .map(|(p, c)| (p - c).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-3, "max error {err}");
    }

    #[test]
    fn optimizer_runs_are_bit_identical() {
        let cfg = small_config(2, Variant::Accel);
        let run = || {
            let mut model = AccelModel::init(cfg.clone(), 31).unwrap();
            let mut state = OptimizerState::new(model.param_count(), 1e-3);
            let batch = random_train_batch(&cfg, 24, 313);
            for _ in 0..5 {
                let (_, grad) = model.loss_and_grad(&batch).unwrap();
                optimizer_step(&mut state, &mut model, &grad).unwrap();
            }
            model.params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt.json");
        let cfg = small_config(2, Variant::Accel);
        let model = AccelModel::init(cfg, 33).unwrap();
        let ckpt = Checkpoint::new(
            &model,
            CheckpointMeta { iteration: 42, seed: 7, method: "hrf2-d".into() },
        );
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.params, model.params);
        assert_eq!(loaded.config, model.config);
        assert_eq!(loaded.meta.iteration, 42);
    }
}

//! Residual U-net: encoder/decoder with concatenation skips and an additive
//! top skip, `Y = X + N(X)`. Backprop is written out by hand against the
//! layer set in [`crate::layers`].

use std::fs;
use std::path::Path;

use pat_core::grid::{Grid, Image};
use pat_core::metrics::rel_l2_error;
use pat_core::rng;
use pat_core::scalar::{c, Scalar};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, NnError, Result};
use crate::init::glorot_init;
use crate::layers::{
    concat_channels, conv2d_backward, conv2d_forward, maxpool2_backward, maxpool2_forward,
    relu_backward, relu_forward, split_channels, upconv2_backward, upconv2_forward, ConvGrads,
    ConvParams,
};
use crate::loss::l1_loss;
use crate::optim::{sgd_momentum_step, TrainConfig};
use crate::tensor::Tensor4;
use crate::weights::WeightSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UNetConfig {
    /// Channels after the first convolution; doubles per level.
    pub features: usize,
    /// Resolution levels (levels - 1 poolings).
    pub levels: usize,
    /// Intra-level convolution kernel size (odd).
    pub kernel: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            features: 32,
            levels: 5,
            kernel: 3,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.features == 0 {
            return Err(invalid("features must be >= 1"));
        }
        if self.levels < 2 {
            return Err(invalid("need at least 2 resolution levels"));
        }
        if self.kernel % 2 == 0 {
            return Err(invalid("kernel size must be odd"));
        }
        Ok(())
    }

    /// Channels at encoder level `l`: `F * 2^l`.
    pub fn channels(&self, level: usize) -> usize {
        self.features << level
    }

    fn check_input(&self, x: &Tensor4<impl Scalar>) -> Result<()> {
        let div = 1usize << (self.levels - 1);
        if x.c != 1 {
            return Err(shape(format!("expected 1 input channel, got {}", x.c)));
        }
        if x.h != x.w || x.h % div != 0 || x.h / div == 0 {
            return Err(shape(format!(
                "input {}x{} must be square and divisible by {div}",
                x.h, x.w
            )));
        }
        Ok(())
    }
}

/// Layer identities in topological (execution) order: encoder conv pairs,
/// then per decoder level upconv + conv pair, then the final 1x1 conv.
fn layer_names(config: &UNetConfig) -> Vec<String> {
    let mut names = Vec::new();
    for l in 0..config.levels {
        names.push(format!("enc{l}.a"));
        names.push(format!("enc{l}.b"));
    }
    for l in (0..config.levels - 1).rev() {
        names.push(format!("up{l}"));
        names.push(format!("dec{l}.a"));
        names.push(format!("dec{l}.b"));
    }
    names.push("final".into());
    names
}

#[derive(Debug, Clone)]
pub struct UNetModel<S: Scalar> {
    pub config: UNetConfig,
    /// One entry per layer in the order of [`layer_names`].
    params: Vec<ConvParams<S>>,
    names: Vec<String>,
    /// Momentum state per layer: (weight velocity, bias velocity).
    velocity: Vec<(Vec<S>, Vec<S>)>,
}

// layer index helpers
impl UNetConfig {
    fn enc_a(&self, l: usize) -> usize {
        2 * l
    }
    fn enc_b(&self, l: usize) -> usize {
        2 * l + 1
    }
    /// Decoder level `l` executes as the `j`-th decoder block, `l = levels-2-j`.
    fn up(&self, l: usize) -> usize {
        2 * self.levels + 3 * (self.levels - 2 - l)
    }
    fn dec_a(&self, l: usize) -> usize {
        self.up(l) + 1
    }
    fn dec_b(&self, l: usize) -> usize {
        self.up(l) + 2
    }
    fn final_idx(&self) -> usize {
        2 * self.levels + 3 * (self.levels - 1)
    }
}

fn layer_shapes(config: &UNetConfig) -> Vec<ConvParams<f64>> {
    let k = config.kernel;
    let mut out = Vec::new();
    for l in 0..config.levels {
        let c_in = if l == 0 { 1 } else { config.channels(l - 1) };
        let ch = config.channels(l);
        out.push(ConvParams::same(c_in, ch, k).unwrap());
        out.push(ConvParams::same(ch, ch, k).unwrap());
    }
    for l in (0..config.levels - 1).rev() {
        let ch = config.channels(l);
        out.push(ConvParams::zeros(config.channels(l + 1), ch, 2, 2, 0).unwrap());
        out.push(ConvParams::same(2 * ch, ch, k).unwrap());
        out.push(ConvParams::same(ch, ch, k).unwrap());
    }
    out.push(ConvParams::same(config.features, 1, 1).unwrap());
    out
}

/// Everything the backward pass needs from one forward evaluation.
pub struct Tape<S: Scalar> {
    enc_in: Vec<[Tensor4<S>; 2]>,
    enc_pre: Vec<[Tensor4<S>; 2]>,
    pool_in: Vec<Tensor4<S>>,
    pool_arg: Vec<Vec<usize>>,
    up_in: Vec<Option<Tensor4<S>>>,
    dec_in: Vec<Option<[Tensor4<S>; 2]>>,
    dec_pre: Vec<Option<[Tensor4<S>; 2]>>,
    final_in: Tensor4<S>,
}

impl<S: Scalar> UNetModel<S> {
    /// Glorot-initialized model; biases zero. Deterministic in `seed`.
    pub fn build(config: UNetConfig, seed: u64) -> Result<UNetModel<S>> {
        config.validate()?;
        let mut rngen = rng::seeded(seed);
        let mut params = Vec::new();
        for shape in layer_shapes(&config) {
            let mut p: ConvParams<S> =
                ConvParams::zeros(shape.c_in, shape.c_out, shape.k, shape.stride, shape.padding)?;
            let (fan_in, fan_out) = (p.k * p.k * p.c_in, p.k * p.k * p.c_out);
            p.weight = glorot_init(fan_in, fan_out, p.weight.len(), &mut rngen)?;
            params.push(p);
        }
        let velocity = params
            .iter()
            .map(|p| (vec![S::zero(); p.weight.len()], vec![S::zero(); p.bias.len()]))
            .collect();
        Ok(UNetModel {
            names: layer_names(&config),
            config,
            params,
            velocity,
        })
    }

    pub fn layer(&self, name: &str) -> Option<&ConvParams<S>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.params[i])
    }

    pub fn layer_mut(&mut self, name: &str) -> Option<&mut ConvParams<S>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &mut self.params[i])
    }

    pub fn set_all_weights_zero(&mut self) {
        for p in &mut self.params {
            p.weight.fill(S::zero());
            p.bias.fill(S::zero());
        }
    }

    /// Trunk `N(X)` with the tape needed for backprop.
    pub fn forward_trunk(&self, x: &Tensor4<S>) -> Result<(Tensor4<S>, Tape<S>)> {
        self.config.check_input(x)?;
        let cfg = &self.config;
        let levels = cfg.levels;
        let mut enc_in = Vec::with_capacity(levels);
        let mut enc_pre = Vec::with_capacity(levels);
        let mut enc_out = Vec::with_capacity(levels);
        let mut pool_in = Vec::new();
        let mut pool_arg = Vec::new();
        let mut t = x.clone();
        for l in 0..levels {
            let in_a = t;
            let pre_a = conv2d_forward(&in_a, &self.params[cfg.enc_a(l)])?;
            let act_a = relu_forward(&pre_a);
            let pre_b = conv2d_forward(&act_a, &self.params[cfg.enc_b(l)])?;
            let act_b = relu_forward(&pre_b);
            enc_in.push([in_a, act_a]);
            enc_pre.push([pre_a, pre_b]);
            if l < levels - 1 {
                let (pooled, arg) = maxpool2_forward(&act_b)?;
                pool_in.push(act_b.clone());
                pool_arg.push(arg);
                enc_out.push(act_b);
                t = pooled;
            } else {
                enc_out.push(act_b.clone());
                t = act_b;
            }
        }
        let mut up_in = vec![None; levels - 1];
        let mut dec_in = vec![None; levels - 1];
        let mut dec_pre = vec![None; levels - 1];
        for l in (0..levels - 1).rev() {
            up_in[l] = Some(t.clone());
            let up = upconv2_forward(&t, &self.params[cfg.up(l)])?;
            let cat = concat_channels(&enc_out[l], &up)?;
            let pre_a = conv2d_forward(&cat, &self.params[cfg.dec_a(l)])?;
            let act_a = relu_forward(&pre_a);
            let pre_b = conv2d_forward(&act_a, &self.params[cfg.dec_b(l)])?;
            let act_b = relu_forward(&pre_b);
            dec_in[l] = Some([cat, act_a]);
            dec_pre[l] = Some([pre_a, pre_b]);
            t = act_b;
        }
        let final_in = t;
        let out = conv2d_forward(&final_in, &self.params[cfg.final_idx()])?;
        Ok((
            out,
            Tape {
                enc_in,
                enc_pre,
                pool_in,
                pool_arg,
                up_in,
                dec_in,
                dec_pre,
                final_in,
            },
        ))
    }

    /// Residual forward: `Y = X + N(X)`.
    pub fn forward(&self, x: &Tensor4<S>) -> Result<Tensor4<S>> {
        let (trunk, _) = self.forward_trunk(x)?;
        let mut y = x.clone();
        for (yv, tv) in y.data.iter_mut().zip(&trunk.data) {
            *yv += *tv;
        }
        Ok(y)
    }

    /// Image-level forward on a single-channel square input.
    pub fn forward_image(&self, x: &Image<S>) -> Result<Image<S>> {
        let d = x.grid().d();
        let t = Tensor4::from_data(1, 1, d, d, x.values().to_vec())?;
        let y = self.forward(&t)?;
        let mut out = Image::zeros(x.grid());
        out.values_mut().copy_from_slice(&y.data);
        Ok(out)
    }

    /// Parameter gradients given the gradient at the trunk output (which for
    /// the residual forward equals the gradient at `Y`).
    pub fn backward(&self, tape: &Tape<S>, grad_out: &Tensor4<S>) -> Result<Vec<ConvGrads<S>>> {
        let cfg = &self.config;
        let levels = cfg.levels;
        let mut grads: Vec<Option<ConvGrads<S>>> = vec![None; self.params.len()];

        let (mut g, gfinal) =
            conv2d_backward(&tape.final_in, &self.params[cfg.final_idx()], grad_out)?;
        grads[cfg.final_idx()] = Some(gfinal);

        // decoder blocks in reverse execution order (level 0 ran last)
        let mut skip_grads: Vec<Option<Tensor4<S>>> = vec![None; levels];
        for l in 0..levels - 1 {
            let dec_in = tape.dec_in[l].as_ref().unwrap();
            let dec_pre = tape.dec_pre[l].as_ref().unwrap();
            let gb = relu_backward(&dec_pre[1], &g)?;
            let (gb, grads_b) = conv2d_backward(&dec_in[1], &self.params[cfg.dec_b(l)], &gb)?;
            grads[cfg.dec_b(l)] = Some(grads_b);
            let ga = relu_backward(&dec_pre[0], &gb)?;
            let (ga, grads_a) = conv2d_backward(&dec_in[0], &self.params[cfg.dec_a(l)], &ga)?;
            grads[cfg.dec_a(l)] = Some(grads_a);
            let (g_skip, g_up) = split_channels(&ga, cfg.channels(l))?;
            skip_grads[l] = Some(g_skip);
            let up_in = tape.up_in[l].as_ref().unwrap();
            let (g_deeper, grads_up) = upconv2_backward(up_in, &self.params[cfg.up(l)], &g_up)?;
            grads[cfg.up(l)] = Some(grads_up);
            g = g_deeper;
        }

        // encoder blocks from the bottom up (in reverse execution order)
        for l in (0..levels).rev() {
            if l < levels - 1 {
                g = maxpool2_backward(&tape.pool_in[l], &tape.pool_arg[l], &g)?;
                let skip = skip_grads[l].take().unwrap();
                for (gv, sv) in g.data.iter_mut().zip(&skip.data) {
                    *gv += *sv;
                }
            }
            let gb = relu_backward(&tape.enc_pre[l][1], &g)?;
            let (gb, grads_b) = conv2d_backward(&tape.enc_in[l][1], &self.params[cfg.enc_b(l)], &gb)?;
            grads[cfg.enc_b(l)] = Some(grads_b);
            let ga = relu_backward(&tape.enc_pre[l][0], &gb)?;
            let (ga, grads_a) = conv2d_backward(&tape.enc_in[l][0], &self.params[cfg.enc_a(l)], &ga)?;
            grads[cfg.enc_a(l)] = Some(grads_a);
            g = ga;
        }
        Ok(grads.into_iter().map(Option::unwrap).collect())
    }

    /// One SGD step from already-computed gradients.
    pub fn apply_gradients(&mut self, grads: &[ConvGrads<S>], config: &TrainConfig) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(shape("gradient count does not match layer count"));
        }
        for ((p, g), (vw, vb)) in self.params.iter_mut().zip(grads).zip(&mut self.velocity) {
            sgd_momentum_step(&mut p.weight, &g.weight, vw, config)?;
            sgd_momentum_step(&mut p.bias, &g.bias, vb, config)?;
        }
        Ok(())
    }

    /// Loss and parameter gradients for one `(X, Y)` pair.
    pub fn loss_and_gradients(
        &self,
        x: &Tensor4<S>,
        target: &Tensor4<S>,
    ) -> Result<(S, Vec<ConvGrads<S>>)> {
        let (trunk, tape) = self.forward_trunk(x)?;
        let mut pred = x.clone();
        for (pv, tv) in pred.data.iter_mut().zip(&trunk.data) {
            *pv += *tv;
        }
        let (loss, grad) = l1_loss(&pred, target)?;
        let grads = self.backward(&tape, &grad)?;
        Ok((loss, grads))
    }

    /// SGD training with a seeded per-epoch shuffle; batch size 1 semantics
    /// regardless of `config.batch_size` grouping (gradients of a batch are
    /// averaged). Returns per-epoch mean training loss.
    pub fn train(
        &mut self,
        pairs: &[(Image<S>, Image<S>)],
        config: &TrainConfig,
    ) -> Result<Vec<f64>> {
        config.validate()?;
        if pairs.is_empty() {
            return Err(invalid("training set is empty"));
        }
        let d = pairs[0].0.grid().d();
        let tensors: Vec<(Tensor4<S>, Tensor4<S>)> = pairs
            .iter()
            .map(|(x, y)| {
                if x.grid().d() != d || y.grid().d() != d {
                    return Err(shape("inconsistent sample sizes in training set"));
                }
                Ok((
                    Tensor4::from_data(1, 1, d, d, x.values().to_vec())?,
                    Tensor4::from_data(1, 1, d, d, y.values().to_vec())?,
                ))
            })
            .collect::<Result<_>>()?;
        let mut history = Vec::with_capacity(config.epochs);
        let mut order: Vec<usize> = (0..tensors.len()).collect();
        for epoch in 0..config.epochs {
            let mut rngen = rng::substream(config.seed, epoch as u64 + 1);
            order.shuffle(&mut rngen);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(config.batch_size) {
                let mut acc: Option<Vec<ConvGrads<S>>> = None;
                for &i in chunk {
                    let (x, y) = &tensors[i];
                    let (loss, grads) = self.loss_and_gradients(x, y)?;
                    let lf = loss.to_f64().unwrap();
                    if !lf.is_finite() {
                        return Err(NnError::Diverged(format!(
                            "non-finite loss at epoch {epoch}, sample {i}"
                        )));
                    }
                    epoch_loss += lf;
                    acc = Some(match acc {
                        None => grads,
                        Some(mut a) => {
                            for (av, gv) in a.iter_mut().zip(&grads) {
                                for (x, y) in av.weight.iter_mut().zip(&gv.weight) {
                                    *x += *y;
                                }
                                for (x, y) in av.bias.iter_mut().zip(&gv.bias) {
                                    *x += *y;
                                }
                            }
                            a
                        }
                    });
                }
                let mut grads = acc.unwrap();
                if chunk.len() > 1 {
                    let inv = c::<S>(1.0 / chunk.len() as f64);
                    for g in &mut grads {
                        for v in &mut g.weight {
                            *v *= inv;
                        }
                        for v in &mut g.bias {
                            *v *= inv;
                        }
                    }
                }
                self.apply_gradients(&grads, config)?;
            }
            history.push(epoch_loss / tensors.len() as f64);
        }
        Ok(history)
    }

    /// Per-sample and mean relative l2 errors of `forward(X)` against `Y`.
    pub fn evaluate(&self, pairs: &[(Image<S>, Image<S>)]) -> Result<EvalReport> {
        if pairs.is_empty() {
            return Err(invalid("evaluation set is empty"));
        }
        let mut per_sample = Vec::with_capacity(pairs.len());
        for (x, y) in pairs {
            let pred = self.forward_image(x)?;
            per_sample.push(rel_l2_error(&pred, y)?.to_f64().unwrap());
        }
        let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
        Ok(EvalReport { per_sample, mean })
    }

    /// Container bytes: length-prefixed config JSON, then a [`WeightSet`]
    /// holding `{layer}.w`, `{layer}.b` and the momentum buffers
    /// `{layer}.vw`, `{layer}.vb`.
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut ws = WeightSet::new();
        for (i, p) in self.params.iter().enumerate() {
            let name = &self.names[i];
            let (fan_in, fan_out) = (p.k * p.k * p.c_in, p.k * p.k * p.c_out);
            let wdims = vec![p.c_out, p.c_in, p.k, p.k];
            ws.push(format!("{name}.w"), wdims.clone(), fan_in, fan_out, p.weight.clone())?;
            ws.push(format!("{name}.b"), vec![p.c_out], fan_in, fan_out, p.bias.clone())?;
            let (vw, vb) = &self.velocity[i];
            ws.push(format!("{name}.vw"), wdims, fan_in, fan_out, vw.clone())?;
            ws.push(format!("{name}.vb"), vec![p.c_out], fan_in, fan_out, vb.clone())?;
        }
        let json = serde_json::to_vec(&self.config)
            .map_err(|e| invalid(format!("config serialization failed: {e}")))?;
        let weights = ws.encode()?;
        let mut out = Vec::with_capacity(8 + json.len() + weights.len());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&weights);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<UNetModel<S>> {
        if bytes.len() < 8 {
            return Err(invalid("model container truncated"));
        }
        let json_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let body = bytes
            .get(8..8 + json_len)
            .ok_or_else(|| invalid("model config truncated"))?;
        let config: UNetConfig = serde_json::from_slice(body)
            .map_err(|e| invalid(format!("model config parse failed: {e}")))?;
        config.validate()?;
        let ws = WeightSet::<S>::decode(&bytes[8 + json_len..])?;
        let mut model = UNetModel::build(config, 0)?;
        for (i, name) in model.names.clone().iter().enumerate() {
            let p = &mut model.params[i];
            let (_, w) = ws
                .get(&format!("{name}.w"))
                .ok_or_else(|| invalid(format!("missing weight {name}.w")))?;
            let (_, b) = ws
                .get(&format!("{name}.b"))
                .ok_or_else(|| invalid(format!("missing bias {name}.b")))?;
            if w.len() != p.weight.len() || b.len() != p.bias.len() {
                return Err(shape(format!("stored {name} does not match configured shape")));
            }
            p.weight.copy_from_slice(w);
            p.bias.copy_from_slice(b);
            let (vw_buf, vb_buf) = &mut model.velocity[i];
            if let Some((_, vw)) = ws.get(&format!("{name}.vw")) {
                vw_buf.copy_from_slice(vw);
            }
            if let Some((_, vb)) = ws.get(&format!("{name}.vb")) {
                vb_buf.copy_from_slice(vb);
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode()?).map_err(|e| NnError::Core(pat_core::CoreError::Io(e)))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<UNetModel<S>> {
        let bytes = fs::read(path).map_err(|e| NnError::Core(pat_core::CoreError::Io(e)))?;
        Self::decode(&bytes)
    }

    /// Total parameter count (weights + biases).
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.weight.len() + p.bias.len()).sum()
    }
}

/// Evaluation summary mirroring the error-table rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_sample: Vec<f64>,
    pub mean: f64,
}

/// Helper for tests and the CLI: wrap a square image as a 1x1xdxd tensor.
pub fn image_to_tensor<S: Scalar>(x: &Image<S>) -> Result<Tensor4<S>> {
    let d = x.grid().d();
    Tensor4::from_data(1, 1, d, d, x.values().to_vec())
}

/// Inverse of [`image_to_tensor`].
pub fn tensor_to_image<S: Scalar>(t: &Tensor4<S>) -> Result<Image<S>> {
    if t.n != 1 || t.c != 1 || t.h != t.w {
        return Err(shape(format!("tensor {:?} is not a single square image", t.shape())));
    }
    let grid = Grid::new(t.h).map_err(NnError::Core)?;
    let mut img = Image::zeros(grid);
    img.values_mut().copy_from_slice(&t.data);
    Ok(img)
}

//! Encoder/decoder networks over the tape and the serializable model state.

use std::rc::Rc;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sampling::ScalerMethod;

use super::batch::Batch;
use super::heads::{head_loss, point_of_params, sample_step, step_params};
use super::spec::{receptive_field, ArchitectureSpec, DecoderKind, EncoderKind, ForecastMode};
use super::tape::{Mat, Tape, Var};
use super::ZooError;

/// Shapes the network is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub window: usize,
    pub horizon: usize,
    pub past_dim: usize,
    pub future_dim: usize,
}

impl InputDims {
    pub fn step_width(&self) -> usize {
        2 + self.past_dim + self.future_dim
    }
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    id: usize,
    offset: usize,
    rows: usize,
    cols: usize,
    bias: bool,
}

#[derive(Debug, Default)]
struct Layout {
    slots: Vec<Slot>,
    size: usize,
}

impl Layout {
    fn alloc(&mut self, rows: usize, cols: usize, bias: bool) -> Slot {
        let slot = Slot {
            id: self.slots.len(),
            offset: self.size,
            rows,
            cols,
            bias,
        };
        self.size += rows * cols;
        self.slots.push(slot);
        slot
    }

    fn linear(&mut self, input: usize, output: usize) -> Linear {
        Linear {
            w: self.alloc(input, output, false),
            b: self.alloc(1, output, true),
        }
    }

    fn gru(&mut self, input: usize, hidden: usize) -> GruLayer {
        GruLayer {
            wi: self.alloc(input, 3 * hidden, false),
            bi: self.alloc(1, 3 * hidden, true),
            wh: self.alloc(hidden, 3 * hidden, false),
            bh: self.alloc(1, 3 * hidden, true),
            hidden,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    w: Slot,
    b: Slot,
}

#[derive(Debug, Clone, Copy)]
struct GruLayer {
    wi: Slot,
    bi: Slot,
    wh: Slot,
    bh: Slot,
    hidden: usize,
}

#[derive(Debug, Clone, Copy)]
struct TcnBlock {
    conv1: Linear,
    conv2: Linear,
    down: Option<Linear>,
    dilation: usize,
}

#[derive(Debug)]
enum EncoderNet {
    Mlp(Vec<Linear>),
    Rnn(Vec<GruLayer>),
    Tcn {
        blocks: Vec<TcnBlock>,
        kernel: usize,
    },
}

#[derive(Debug)]
enum DecoderNet {
    /// Hidden layer then the output layer.
    Mlp {
        hidden: Linear,
        out: Linear,
    },
    Rnn {
        layers: Vec<GruLayer>,
        out: Linear,
    },
}

/// Parameter layout of one architecture.
#[derive(Debug)]
pub struct Network {
    spec: ArchitectureSpec,
    dims: InputDims,
    encoder: EncoderNet,
    decoder: DecoderNet,
    layout: Layout,
}

impl Network {
    pub fn new(spec: &ArchitectureSpec, dims: InputDims) -> Result<Self, ZooError> {
        spec.validate()?;
        if dims.window == 0 || dims.horizon == 0 {
            return Err(ZooError::ShapeMismatch(
                "window and horizon must be positive".into(),
            ));
        }
        let hid = spec.hidden_size;
        let c = spec.head.channels();
        let d = dims.step_width();
        let h = dims.horizon;
        let f = dims.future_dim;
        let mut layout = Layout::default();
        let encoder = match spec.encoder {
            EncoderKind::Mlp => {
                let mut layers = Vec::new();
                let mut input = dims.window * d;
                for _ in 0..spec.num_layers {
                    layers.push(layout.linear(input, hid));
                    input = hid;
                }
                EncoderNet::Mlp(layers)
            }
            EncoderKind::Rnn => {
                let mut layers = Vec::new();
                let mut input = d;
                for _ in 0..spec.num_layers {
                    layers.push(layout.gru(input, hid));
                    input = hid;
                }
                EncoderNet::Rnn(layers)
            }
            EncoderKind::Tcn => {
                let k = spec.tcn_kernel;
                let mut blocks = Vec::new();
                let mut input = d;
                for i in 0..spec.tcn_num_blocks {
                    let conv1 = layout.linear(k * input, hid);
                    let conv2 = layout.linear(k * hid, hid);
                    let down = (input != hid).then(|| layout.linear(input, hid));
                    blocks.push(TcnBlock {
                        conv1,
                        conv2,
                        down,
                        dilation: 1 << i,
                    });
                    input = hid;
                }
                EncoderNet::Tcn { blocks, kernel: k }
            }
        };
        let decoder = match (spec.mode(), spec.decoder) {
            (ForecastMode::NonAutoRegressive, DecoderKind::Mlp) => DecoderNet::Mlp {
                hidden: layout.linear(hid + h * f, hid),
                out: layout.linear(hid, h * c),
            },
            (ForecastMode::DeepAr | ForecastMode::Seq2Seq, DecoderKind::Mlp) => DecoderNet::Mlp {
                hidden: layout.linear(hid + f, hid),
                out: layout.linear(hid, c),
            },
            (_, DecoderKind::Rnn) => {
                let mut layers = Vec::new();
                let mut input = 1 + f;
                for _ in 0..spec.num_layers {
                    layers.push(layout.gru(input, hid));
                    input = hid;
                }
                DecoderNet::Rnn {
                    layers,
                    out: layout.linear(hid, c),
                }
            }
        };
        Ok(Self {
            spec: spec.clone(),
            dims,
            encoder,
            decoder,
            layout,
        })
    }

    pub fn num_weights(&self) -> usize {
        self.layout.size
    }

    pub fn dims(&self) -> InputDims {
        self.dims
    }

    fn init_weights(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = vec![0.0; self.layout.size];
        for s in &self.layout.slots {
            if s.bias {
                continue;
            }
            let a = (6.0 / (s.rows + s.cols) as f64).sqrt();
            for v in &mut w[s.offset..s.offset + s.rows * s.cols] {
                *v = rng.random_range(-a..a);
            }
        }
        w
    }

    fn output_layer(&self) -> Linear {
        match self.decoder {
            DecoderNet::Mlp { out, .. } | DecoderNet::Rnn { out, .. } => out,
        }
    }
}

/// Where auto-regressive steps get their previous value from.
pub enum Feedback<'r> {
    /// Ground truth (teacher forcing).
    Truth,
    /// The model's own point prediction.
    Point,
    /// A draw from the predicted distribution, one per batch row.
    Sample(&'r mut ChaCha8Rng),
}

struct Fwd<'a, 'r> {
    net: &'a Network,
    tape: Tape,
    weights: &'a [f64],
    params: Vec<Option<Var>>,
    dropout: Option<(f64, &'r mut ChaCha8Rng)>,
    /// Values chosen at each generated step (scaled units).
    generated: Vec<Array1<f64>>,
}

impl<'a, 'r> Fwd<'a, 'r> {
    fn new(net: &'a Network, weights: &'a [f64], dropout_rng: Option<&'r mut ChaCha8Rng>) -> Self {
        let p = net.spec.dropout;
        Self {
            net,
            tape: Tape::new(),
            weights,
            params: vec![None; net.layout.slots.len()],
            dropout: dropout_rng.filter(|_| p > 0.0).map(|r| (p, r)),
            generated: Vec::new(),
        }
    }

    fn param(&mut self, s: Slot) -> Var {
        if let Some(v) = self.params[s.id] {
            return v;
        }
        let v = self.tape.param(self.weights, s.offset, s.rows, s.cols);
        self.params[s.id] = Some(v);
        v
    }

    fn linear(&mut self, x: Var, l: Linear) -> Var {
        let w = self.param(l.w);
        let b = self.param(l.b);
        let xw = self.tape.matmul(x, w);
        self.tape.add_row(xw, b)
    }

    fn dropout(&mut self, x: Var) -> Var {
        let Some((p, rng)) = self.dropout.as_mut() else {
            return x;
        };
        let keep = 1.0 - *p;
        let dim = self.tape.value(x).dim();
        let mask = Array2::from_shape_fn(dim, |_| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        self.tape.mask(x, Rc::new(mask))
    }

    fn gru_step(&mut self, l: GruLayer, x: Var, h: Var) -> Var {
        let n = l.hidden;
        let wi = self.param(l.wi);
        let bi = self.param(l.bi);
        let wh = self.param(l.wh);
        let bh = self.param(l.bh);
        let gi = self.tape.matmul(x, wi);
        let gi = self.tape.add_row(gi, bi);
        let gh = self.tape.matmul(h, wh);
        let gh = self.tape.add_row(gh, bh);
        let i_r = self.tape.slice_cols(gi, 0, n);
        let i_z = self.tape.slice_cols(gi, n, 2 * n);
        let i_n = self.tape.slice_cols(gi, 2 * n, 3 * n);
        let h_r = self.tape.slice_cols(gh, 0, n);
        let h_z = self.tape.slice_cols(gh, n, 2 * n);
        let h_n = self.tape.slice_cols(gh, 2 * n, 3 * n);
        let r = self.tape.add(i_r, h_r);
        let r = self.tape.sigmoid(r);
        let z = self.tape.add(i_z, h_z);
        let z = self.tape.sigmoid(z);
        let rn = self.tape.mul(r, h_n);
        let cand = self.tape.add(i_n, rn);
        let cand = self.tape.tanh(cand);
        let one_minus_z = self.tape.one_minus(z);
        let a = self.tape.mul(one_minus_z, cand);
        let b = self.tape.mul(z, h);
        self.tape.add(a, b)
    }

    /// One time step through a GRU stack; returns the top output.
    fn gru_stack_step(&mut self, layers: &[GruLayer], x: Var, states: &mut [Var]) -> Var {
        let mut input = x;
        for (l, layer) in layers.iter().enumerate() {
            states[l] = self.gru_step(*layer, input, states[l]);
            input = if l + 1 < layers.len() {
                self.dropout(states[l])
            } else {
                states[l]
            };
        }
        input
    }

    fn zero_states(&mut self, layers: &[GruLayer], batch: usize) -> Vec<Var> {
        layers
            .iter()
            .map(|l| self.tape.constant(Array2::zeros((batch, l.hidden))))
            .collect()
    }

    fn tcn(&mut self, blocks: &[TcnBlock], kernel: usize, inputs: &[Var]) -> Var {
        let steps = inputs.len();
        let mut x = self.tape.concat_rows(inputs);
        for blk in blocks {
            let w1 = self.param(blk.conv1.w);
            let b1 = self.param(blk.conv1.b);
            let w2 = self.param(blk.conv2.w);
            let b2 = self.param(blk.conv2.b);
            let y = self
                .tape
                .causal_conv(x, w1, b1, steps, kernel, blk.dilation);
            let y = self.tape.relu(y);
            let y = self.dropout(y);
            let y = self
                .tape
                .causal_conv(y, w2, b2, steps, kernel, blk.dilation);
            let y = self.tape.relu(y);
            let y = self.dropout(y);
            let res = match blk.down {
                Some(d) => self.linear(x, d),
                None => x,
            };
            let sum = self.tape.add(y, res);
            x = self.tape.relu(sum);
        }
        x
    }

    /// Runs the encoder over `inputs`, returning the top-layer output at each
    /// of the `last` final steps and the final recurrent states.
    fn encode(&mut self, inputs: &[Var], last: usize, batch: usize) -> (Vec<Var>, Vec<Var>) {
        let net = self.net;
        match &net.encoder {
            EncoderNet::Mlp(layers) => {
                debug_assert_eq!(last, 1);
                let mut x = self.tape.concat_cols(inputs);
                for l in layers {
                    x = self.linear(x, *l);
                    x = self.tape.relu(x);
                    x = self.dropout(x);
                }
                (vec![x], Vec::new())
            }
            EncoderNet::Rnn(layers) => {
                let layers = layers.clone();
                let mut states = self.zero_states(&layers, batch);
                let mut outs = Vec::with_capacity(last);
                for (t, &x) in inputs.iter().enumerate() {
                    let top = self.gru_stack_step(&layers, x, &mut states);
                    if t + last >= inputs.len() {
                        outs.push(top);
                    }
                }
                (outs, states)
            }
            EncoderNet::Tcn { blocks, kernel } => {
                let (blocks, kernel) = (blocks.clone(), *kernel);
                let rows = self.tcn(&blocks, kernel, inputs);
                let steps = inputs.len();
                let outs = (steps - last..steps)
                    .map(|t| self.tape.slice_rows(rows, t * batch, (t + 1) * batch))
                    .collect();
                (outs, Vec::new())
            }
        }
    }

    fn step_inputs(&mut self, batch: &Batch, steps: usize) -> Vec<Var> {
        (0..steps)
            .map(|t| {
                let m = batch.step_features(t, batch.y.column(t));
                self.tape.constant(m)
            })
            .collect()
    }

    /// Point values (scaled) of one step's `B × C` output for feedback.
    fn feedback_values(&mut self, out: Var, feedback: &mut Feedback) -> Array1<f64> {
        let head = &self.net.spec.head;
        let v = self.tape.value(out);
        let values = Array1::from_iter(v.rows().into_iter().map(|row| {
            let params = step_params(head, row.as_slice().expect("row-major"));
            match feedback {
                Feedback::Sample(rng) => sample_step(head, &params, *rng),
                _ => point_of_params(head, &params),
            }
        }));
        self.generated.push(values.clone());
        values
    }

    fn forward(&mut self, batch: &Batch, mut feedback: Feedback) -> Var {
        let net = self.net;
        let b = batch.size();
        let w = batch.window;
        let h = batch.horizon;
        match net.spec.mode() {
            ForecastMode::NonAutoRegressive => {
                let inputs = self.step_inputs(batch, w);
                let (outs, states) = self.encode(&inputs, 1, b);
                let latent = self.dropout(outs[0]);
                match &net.decoder {
                    DecoderNet::Mlp { hidden, out } => {
                        let (hidden, out) = (*hidden, *out);
                        let mut parts = vec![latent];
                        for k in 0..h {
                            parts.push(self.tape.constant(batch.horizon_cov(k)));
                        }
                        let x = self.tape.concat_cols(&parts);
                        let x = self.linear(x, hidden);
                        let x = self.tape.relu(x);
                        let x = self.dropout(x);
                        self.linear(x, out)
                    }
                    DecoderNet::Rnn { layers, out } => {
                        let (layers, out) = (layers.clone(), *out);
                        let mut states = states;
                        let mut outputs = Vec::with_capacity(h);
                        for k in 0..h {
                            let mut x = Array2::zeros((b, 1 + batch.future_dim));
                            x.column_mut(0).fill((k + 1) as f64 / h as f64);
                            x.slice_mut(ndarray::s![.., 1..])
                                .assign(&batch.horizon_cov(k));
                            let x = self.tape.constant(x);
                            let top = self.gru_stack_step(&layers, x, &mut states);
                            let top = self.dropout(top);
                            outputs.push(self.linear(top, out));
                        }
                        self.tape.concat_cols(&outputs)
                    }
                }
            }
            ForecastMode::Seq2Seq => {
                let DecoderNet::Rnn { layers, out } = &net.decoder else {
                    unreachable!("seq2seq uses a recurrent decoder")
                };
                let (layers, out) = (layers.clone(), *out);
                let inputs = self.step_inputs(batch, w);
                let (_, mut states) = self.encode(&inputs, 1, b);
                let mut prev = batch.y.column(w - 1).to_owned();
                let mut outputs = Vec::with_capacity(h);
                for k in 0..h {
                    let mut x = Array2::zeros((b, 1 + batch.future_dim));
                    x.column_mut(0).assign(&prev);
                    x.slice_mut(ndarray::s![.., 1..])
                        .assign(&batch.horizon_cov(k));
                    let x = self.tape.constant(x);
                    let top = self.gru_stack_step(&layers, x, &mut states);
                    let top = self.dropout(top);
                    let o = self.linear(top, out);
                    outputs.push(o);
                    prev = match feedback {
                        Feedback::Truth => batch.y.column(w + k).to_owned(),
                        _ => self.feedback_values(o, &mut feedback),
                    };
                }
                self.tape.concat_cols(&outputs)
            }
            ForecastMode::DeepAr => {
                let DecoderNet::Mlp { hidden, out } = net.decoder else {
                    unreachable!("deepar uses a flat decoder")
                };
                if matches!(feedback, Feedback::Truth) {
                    let inputs = self.step_inputs(batch, w + h - 1);
                    let (latents, _) = self.encode(&inputs, h, b);
                    let outputs: Vec<Var> = (0..h)
                        .map(|k| self.deepar_decode(latents[k], batch, k, hidden, out))
                        .collect();
                    return self.tape.concat_cols(&outputs);
                }
                let mut seq: Vec<Var> = self.step_inputs(batch, w);
                let mut outputs = Vec::with_capacity(h);
                match &net.encoder {
                    EncoderNet::Rnn(layers) => {
                        let layers = layers.clone();
                        let mut states = self.zero_states(&layers, b);
                        let mut top = None;
                        for &x in &seq {
                            top = Some(self.gru_stack_step(&layers, x, &mut states));
                        }
                        for k in 0..h {
                            let o = self.deepar_decode(
                                top.expect("window >= 1"),
                                batch,
                                k,
                                hidden,
                                out,
                            );
                            outputs.push(o);
                            let v = self.feedback_values(o, &mut feedback);
                            if k + 1 < h {
                                let x = self.tape.constant(batch.step_features(w + k, v.view()));
                                top = Some(self.gru_stack_step(&layers, x, &mut states));
                            }
                        }
                    }
                    EncoderNet::Tcn { .. } => {
                        for k in 0..h {
                            let (latents, _) = self.encode(&seq[seq.len() - w..], 1, b);
                            let o = self.deepar_decode(latents[0], batch, k, hidden, out);
                            outputs.push(o);
                            let v = self.feedback_values(o, &mut feedback);
                            if k + 1 < h {
                                let x = self.tape.constant(batch.step_features(w + k, v.view()));
                                seq.push(x);
                            }
                        }
                    }
                    EncoderNet::Mlp(_) => unreachable!("flat encoders are never auto-regressive"),
                }
                self.tape.concat_cols(&outputs)
            }
        }
    }

    fn deepar_decode(
        &mut self,
        latent: Var,
        batch: &Batch,
        k: usize,
        hidden: Linear,
        out: Linear,
    ) -> Var {
        let latent = self.dropout(latent);
        let cov = self.tape.constant(batch.horizon_cov(k));
        let x = self.tape.concat_cols(&[latent, cov]);
        let x = self.linear(x, hidden);
        let x = self.tape.relu(x);
        let x = self.dropout(x);
        self.linear(x, out)
    }
}

/// A trained or freshly initialized forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub spec: ArchitectureSpec,
    pub dims: InputDims,
    pub scaler: ScalerMethod,
    pub seed: u64,
    pub weights: Vec<f64>,
}

impl ModelState {
    /// Initializes weights uniformly in `±sqrt(6 / (fan_in + fan_out))` per
    /// matrix with zero biases. TCN encoders use their receptive field as the
    /// window regardless of `dims.window`.
    pub fn build(
        spec: &ArchitectureSpec,
        mut dims: InputDims,
        scaler: ScalerMethod,
        seed: u64,
    ) -> Result<Self, ZooError> {
        if spec.encoder == EncoderKind::Tcn {
            dims.window = receptive_field(spec)?;
        }
        let net = Network::new(spec, dims)?;
        Ok(Self {
            spec: spec.clone(),
            dims,
            scaler,
            seed,
            weights: net.init_weights(seed),
        })
    }

    pub fn network(&self) -> Network {
        Network::new(&self.spec, self.dims).expect("state was built from a valid spec")
    }

    fn check_batch(&self, batch: &Batch) -> Result<(), ZooError> {
        let d = &self.dims;
        if batch.window != d.window
            || batch.horizon != d.horizon
            || batch.past_dim != d.past_dim
            || batch.future_dim != d.future_dim
        {
            return Err(ZooError::ShapeMismatch(format!(
                "model expects window {} horizon {} covariates {}/{}, batch has {} {} {}/{}",
                d.window,
                d.horizon,
                d.past_dim,
                d.future_dim,
                batch.window,
                batch.horizon,
                batch.past_dim,
                batch.future_dim
            )));
        }
        Ok(())
    }

    /// Raw head outputs `B × (H·C)` (column `k·C + c`).
    pub fn forward(&self, batch: &Batch, feedback: Feedback) -> Result<Mat, ZooError> {
        self.forward_with(&self.weights, batch, feedback)
    }

    pub fn forward_with(
        &self,
        weights: &[f64],
        batch: &Batch,
        feedback: Feedback,
    ) -> Result<Mat, ZooError> {
        self.generate(weights, batch, feedback).map(|(raw, _)| raw)
    }

    /// Raw outputs plus the value chosen at each generated step
    /// (`B × H`, scaled; empty for non-auto-regressive or teacher-forced runs).
    pub fn generate(
        &self,
        weights: &[f64],
        batch: &Batch,
        feedback: Feedback,
    ) -> Result<(Mat, Mat), ZooError> {
        self.check_batch(batch)?;
        let net = self.network();
        let mut fwd = Fwd::new(&net, weights, None);
        let out = fwd.forward(batch, feedback);
        let mut chosen = Array2::zeros((batch.size(), fwd.generated.len()));
        for (k, v) in fwd.generated.iter().enumerate() {
            chosen.column_mut(k).assign(v);
        }
        Ok((fwd.tape.value(out).clone(), chosen))
    }

    /// Teacher-forced training loss at `weights`. A dropout seed enables
    /// dropout with masks drawn from that seed.
    pub fn loss_with(
        &self,
        weights: &[f64],
        batch: &Batch,
        dropout_seed: Option<u64>,
    ) -> Result<f64, ZooError> {
        self.loss_grad_impl(weights, batch, dropout_seed, false)
            .map(|(l, _)| l)
    }

    /// Teacher-forced loss and its gradient w.r.t. all weights.
    pub fn loss_and_grad(
        &self,
        weights: &[f64],
        batch: &Batch,
        dropout_seed: Option<u64>,
    ) -> Result<(f64, Vec<f64>), ZooError> {
        self.loss_grad_impl(weights, batch, dropout_seed, true)
    }

    fn loss_grad_impl(
        &self,
        weights: &[f64],
        batch: &Batch,
        dropout_seed: Option<u64>,
        want_grad: bool,
    ) -> Result<(f64, Vec<f64>), ZooError> {
        self.check_batch(batch)?;
        let net = self.network();
        let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
        let mut fwd = Fwd::new(&net, weights, rng.as_mut());
        let out = fwd.forward(batch, Feedback::Truth);
        let targets = batch.future_targets();
        let (loss, local) = head_loss(
            &self.spec.head,
            fwd.tape.value(out),
            &targets,
            &batch.weights,
            &batch.mase_denom,
        );
        if !loss.is_finite() {
            return Err(ZooError::NonFiniteLoss);
        }
        let mut grad = vec![0.0; weights.len()];
        if want_grad {
            let root = fwd.tape.fixed(out, loss, local);
            fwd.tape.backward(root, &mut grad);
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(ZooError::NonFiniteGradient);
            }
        }
        Ok((loss, grad))
    }

    /// Pins head channel `channel` of every step to the constant raw value
    /// `raw` by zeroing its output weights.
    pub fn force_head_channel(&mut self, channel: usize, raw: f64) {
        let net = self.network();
        let out = net.output_layer();
        let c = self.spec.head.channels();
        for col in (0..out.w.cols).filter(|col| col % c == channel) {
            for r in 0..out.w.rows {
                self.weights[out.w.offset + r * out.w.cols + col] = 0.0;
            }
            self.weights[out.b.offset + col] = raw;
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        })
        .expect("model state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ZooError> {
        let c: Checkpoint =
            serde_json::from_str(text).map_err(|e| ZooError::Checkpoint(e.to_string()))?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(ZooError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                c.format, c.version
            )));
        }
        let expected = Network::new(&c.model.spec, c.model.dims)?.num_weights();
        if c.model.weights.len() != expected {
            return Err(ZooError::Checkpoint(format!(
                "weight count {} does not match architecture ({expected})",
                c.model.weights.len()
            )));
        }
        Ok(c.model)
    }
}

const CHECKPOINT_FORMAT: &str = "tsforge-model";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: ModelState,
}

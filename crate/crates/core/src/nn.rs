//! Single-layer LSTM with a dense head, trained by exact backpropagation through time.
//!
//! Gate order everywhere is input, forget, output, candidate. A window of
//! derivative triples is fed one triple per time step from zero initial
//! hidden and cell states; the head maps the last hidden state to a
//! predicted triple.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::differentials::{SupervisedSet, Triple};
use crate::error::{Error, Result};
use crate::physics::Objective;

pub const FORMAT_VERSION: u32 = 1;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn is_consistent(&self) -> bool {
        self.data.len() == self.rows * self.cols
    }

    /// `out += self * x`
    fn mul_vec_acc(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, x);
        }
    }

    /// `out += self^T * y`
    fn tmul_vec_acc(&self, y: &[f64], out: &mut [f64]) {
        for (yr, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += yr * w;
            }
        }
    }

    /// `self += y * x^T`
    fn add_outer(&mut self, y: &[f64], x: &[f64]) {
        for (yr, row) in y.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            for (w, xc) in row.iter_mut().zip(x) {
                *w += yr * xc;
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    /// H x D
    pub input_weights: Matrix,
    /// H x H
    pub recurrent_weights: Matrix,
    pub bias: Vec<f64>,
}

impl GateParams {
    fn zeros(h: usize, d: usize) -> Self {
        Self {
            input_weights: Matrix::zeros(h, d),
            recurrent_weights: Matrix::zeros(h, h),
            bias: vec![0.0; h],
        }
    }

    fn pre_activation(&self, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        self.input_weights.mul_vec_acc(x, &mut z);
        self.recurrent_weights.mul_vec_acc(h_prev, &mut z);
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input_size: usize,
    pub hidden_size: usize,
    pub input_gate: GateParams,
    pub forget_gate: GateParams,
    pub output_gate: GateParams,
    pub candidate: GateParams,
}

impl LstmParams {
    pub fn zeros(d: usize, h: usize) -> Self {
        Self {
            input_size: d,
            hidden_size: h,
            input_gate: GateParams::zeros(h, d),
            forget_gate: GateParams::zeros(h, d),
            output_gate: GateParams::zeros(h, d),
            candidate: GateParams::zeros(h, d),
        }
    }

    fn gates(&self) -> [&GateParams; 4] {
        [&self.input_gate, &self.forget_gate, &self.output_gate, &self.candidate]
    }

    fn gates_mut(&mut self) -> [&mut GateParams; 4] {
        [
            &mut self.input_gate,
            &mut self.forget_gate,
            &mut self.output_gate,
            &mut self.candidate,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    /// O x H
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub format_version: u32,
    pub lstm: LstmParams,
    pub head: DenseParams,
}

impl NetworkParams {
    pub fn zeros(d: usize, h: usize, o: usize) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            lstm: LstmParams::zeros(d, h),
            head: DenseParams {
                weight: Matrix::zeros(o, h),
                bias: vec![0.0; o],
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size(), self.hidden_size(), self.output_size())
    }

    pub fn input_size(&self) -> usize {
        self.lstm.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.lstm.hidden_size
    }

    pub fn output_size(&self) -> usize {
        self.head.bias.len()
    }

    /// Every parameter array, in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(14);
        for g in self.lstm.gates() {
            out.push(g.input_weights.data.as_slice());
            out.push(g.recurrent_weights.data.as_slice());
            out.push(g.bias.as_slice());
        }
        out.push(self.head.weight.data.as_slice());
        out.push(self.head.bias.as_slice());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(14);
        for g in self.lstm.gates_mut() {
            out.push(g.input_weights.data.as_mut_slice());
            out.push(g.recurrent_weights.data.as_mut_slice());
            out.push(g.bias.as_mut_slice());
        }
        out.push(self.head.weight.data.as_mut_slice());
        out.push(self.head.bias.as_mut_slice());
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn same_shape(&self, other: &NetworkParams) -> bool {
        let a = self.tensors();
        let b = other.tensors();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.len() == y.len())
    }

    /// Dimensions agree with the declared sizes and every value is finite.
    pub fn validate(&self) -> Result<()> {
        let (d, h, o) = (self.input_size(), self.hidden_size(), self.output_size());
        for g in self.lstm.gates() {
            let ok = g.input_weights.rows == h
                && g.input_weights.cols == d
                && g.recurrent_weights.rows == h
                && g.recurrent_weights.cols == h
                && g.bias.len() == h
                && g.input_weights.is_consistent()
                && g.recurrent_weights.is_consistent();
            if !ok {
                return Err(Error::Shape(format!("LSTM gate inconsistent with D={d}, H={h}")));
            }
        }
        if self.head.weight.rows != o || self.head.weight.cols != h || !self.head.weight.is_consistent() {
            return Err(Error::Shape(format!("dense head inconsistent with H={h}, O={o}")));
        }
        if self.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("network contains non-finite parameters".into()));
        }
        Ok(())
    }
}

/// Seeded initialization: weights uniform in `[-1/sqrt(H), 1/sqrt(H)]`,
/// forget-gate bias 1, all other biases 0.
pub fn init_params(seed: u64, d: usize, h: usize, o: usize) -> Result<NetworkParams> {
    if d == 0 || h == 0 || o == 0 {
        return Err(Error::InvalidConfig(format!(
            "network sizes must be >= 1, got D={d}, H={h}, O={o}"
        )));
    }
    let bound = 1.0 / (h as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound)
        .map_err(|e| Error::InvalidConfig(format!("weight distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = NetworkParams::zeros(d, h, o);
    for g in net.lstm.gates_mut() {
        for w in g
            .input_weights
            .data
            .iter_mut()
            .chain(g.recurrent_weights.data.iter_mut())
        {
            *w = dist.sample(&mut rng);
        }
    }
    net.lstm.forget_gate.bias.fill(1.0);
    for w in net.head.weight.data.iter_mut() {
        *w = dist.sample(&mut rng);
    }
    Ok(net)
}

/// Activations of one LSTM time step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub input: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub input_gate: Vec<f64>,
    pub forget_gate: Vec<f64>,
    pub output_gate: Vec<f64>,
    pub candidate: Vec<f64>,
    pub cell: Vec<f64>,
    pub tanh_cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// Run the recurrence and keep every step's activations.
pub fn lstm_trace(params: &LstmParams, inputs: &[Vec<f64>]) -> Result<Vec<StepTrace>> {
    let h = params.hidden_size;
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    let mut steps = Vec::with_capacity(inputs.len());
    for (t, x) in inputs.iter().enumerate() {
        if x.len() != params.input_size {
            return Err(Error::Shape(format!(
                "input at step {t} has length {}, expected {}",
                x.len(),
                params.input_size
            )));
        }
        let i: Vec<f64> = params.input_gate.pre_activation(x, &h_prev).into_iter().map(sigmoid).collect();
        let f: Vec<f64> = params.forget_gate.pre_activation(x, &h_prev).into_iter().map(sigmoid).collect();
        let o: Vec<f64> = params.output_gate.pre_activation(x, &h_prev).into_iter().map(sigmoid).collect();
        let g: Vec<f64> = params.candidate.pre_activation(x, &h_prev).into_iter().map(f64::tanh).collect();
        let cell: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tanh_cell: Vec<f64> = cell.iter().map(|c| c.tanh()).collect();
        let hidden: Vec<f64> = (0..h).map(|k| o[k] * tanh_cell[k]).collect();
        steps.push(StepTrace {
            input: x.clone(),
            h_prev: std::mem::replace(&mut h_prev, hidden.clone()),
            c_prev: std::mem::replace(&mut c_prev, cell.clone()),
            input_gate: i,
            forget_gate: f,
            output_gate: o,
            candidate: g,
            cell,
            tanh_cell,
            hidden,
        });
    }
    Ok(steps)
}

/// Hidden states for every step and the final cell state.
pub fn lstm_forward(params: &LstmParams, inputs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let steps = lstm_trace(params, inputs)?;
    let cell = steps
        .last()
        .map(|s| s.cell.clone())
        .unwrap_or_else(|| vec![0.0; params.hidden_size]);
    Ok((steps.into_iter().map(|s| s.hidden).collect(), cell))
}

fn window_inputs(net: &NetworkParams, window: &[Triple]) -> Result<Vec<Vec<f64>>> {
    if window.is_empty() {
        return Err(Error::Shape("forward needs a non-empty window".into()));
    }
    if net.input_size() != 3 || net.output_size() != 3 {
        return Err(Error::Shape(format!(
            "triple forecaster needs D=3 and O=3, network has D={}, O={}",
            net.input_size(),
            net.output_size()
        )));
    }
    Ok(window.iter().map(|t| t.to_vec()).collect())
}

fn head_output(net: &NetworkParams, hidden: &[f64]) -> Triple {
    let mut y = [net.head.bias[0], net.head.bias[1], net.head.bias[2]];
    net.head.weight.mul_vec_acc(hidden, &mut y);
    y
}

/// Predict the triple following `window`.
pub fn forward(net: &NetworkParams, window: &[Triple]) -> Result<Triple> {
    let inputs = window_inputs(net, window)?;
    let steps = lstm_trace(&net.lstm, &inputs)?;
    let last = &steps[steps.len() - 1].hidden;
    Ok(head_output(net, last))
}

pub fn forward_batch(net: &NetworkParams, windows: &[Vec<Triple>]) -> Result<Vec<Triple>> {
    windows.iter().map(|w| forward(net, w)).collect()
}

#[derive(Debug, Clone)]
pub struct Gradient {
    pub loss: f64,
    pub grads: NetworkParams,
}

/// Full-batch loss and its exact derivative with respect to every parameter.
pub fn gradient(net: &NetworkParams, batch: &SupervisedSet, objective: &Objective) -> Result<Gradient> {
    if batch.is_empty() {
        return Err(Error::Shape("gradient over an empty batch".into()));
    }
    let mut traces = Vec::with_capacity(batch.len());
    let mut preds = Vec::with_capacity(batch.len());
    for (k, window) in batch.inputs.iter().enumerate() {
        let steps = lstm_trace(&net.lstm, &window_inputs(net, window)?)?;
        let pred = head_output(net, &steps[steps.len() - 1].hidden);
        if pred.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure {
                index: k,
                reason: "non-finite network output".into(),
            });
        }
        preds.push(pred);
        traces.push(steps);
    }
    let eval = objective.evaluate(&preds, &batch.targets)?;
    let dpreds = eval.output_grads();

    let mut grads = net.zeros_like();
    for (steps, dy) in traces.iter().zip(&dpreds) {
        backprop_window(net, steps, dy, &mut grads);
    }
    Ok(Gradient {
        loss: eval.loss,
        grads,
    })
}

fn backprop_window(net: &NetworkParams, steps: &[StepTrace], dy: &Triple, grads: &mut NetworkParams) {
    let h = net.hidden_size();
    let last = &steps[steps.len() - 1];
    grads.head.weight.add_outer(dy, &last.hidden);
    for (b, d) in grads.head.bias.iter_mut().zip(dy) {
        *b += d;
    }
    let mut dh = vec![0.0; h];
    net.head.weight.tmul_vec_acc(dy, &mut dh);
    let mut dc = vec![0.0; h];

    let mut da_i = vec![0.0; h];
    let mut da_f = vec![0.0; h];
    let mut da_o = vec![0.0; h];
    let mut da_g = vec![0.0; h];
    for s in steps.iter().rev() {
        for k in 0..h {
            let (i, f, o, g) = (s.input_gate[k], s.forget_gate[k], s.output_gate[k], s.candidate[k]);
            let tc = s.tanh_cell[k];
            dc[k] += dh[k] * o * (1.0 - tc * tc);
            da_o[k] = dh[k] * tc * o * (1.0 - o);
            da_i[k] = dc[k] * g * i * (1.0 - i);
            da_f[k] = dc[k] * s.c_prev[k] * f * (1.0 - f);
            da_g[k] = dc[k] * i * (1.0 - g * g);
            dc[k] *= f;
        }
        dh.fill(0.0);
        let pre = [&da_i, &da_f, &da_o, &da_g];
        for ((gate, ggrad), da) in net.lstm.gates().into_iter().zip(grads.lstm.gates_mut()).zip(pre) {
            ggrad.input_weights.add_outer(da, &s.input);
            ggrad.recurrent_weights.add_outer(da, &s.h_prev);
            for (b, d) in ggrad.bias.iter_mut().zip(da.iter()) {
                *b += d;
            }
            gate.recurrent_weights.tmul_vec_acc(da, &mut dh);
        }
    }
}

/// Full-batch loss without gradients.
pub fn batch_loss(net: &NetworkParams, batch: &SupervisedSet, objective: &Objective) -> Result<f64> {
    let preds = forward_batch(net, &batch.inputs)?;
    Ok(objective.evaluate(&preds, &batch.targets)?.loss)
}

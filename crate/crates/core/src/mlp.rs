//! Fully-connected feedforward network with hand-written backpropagation.
//!
//! Hidden layers use ReLU, the output layer is linear. Batches are row-major:
//! one sample per row.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative; the ReLU subgradient at exactly 0 is 0.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input: usize, output: usize, activation: Activation) -> Self {
        Self { input, output, activation }
    }
}

/// `input -> hidden x depth (ReLU) -> output (linear)`.
pub fn mlp_specs(input: usize, hidden: &[usize], output: usize) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(hidden.len() + 1);
    let mut width = input;
    for &h in hidden {
        specs.push(LayerSpec::new(width, h, Activation::Relu));
        width = h;
    }
    specs.push(LayerSpec::new(width, output, Activation::Identity));
    specs
}

fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("network needs at least one layer".into()));
    }
    for (k, s) in specs.iter().enumerate() {
        if s.input == 0 || s.output == 0 {
            return Err(Error::InvalidArgument(format!("layer {k} has zero width")));
        }
    }
    for pair in specs.windows(2) {
        if pair[0].output != pair[1].input {
            return Err(Error::Shape { expected: pair[0].output, got: pair[1].input });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    specs: Vec<LayerSpec>,
    /// `output x input` per layer.
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Parameter-shaped gradient set.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl Network {
    /// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases.
    pub fn init<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        validate_specs(specs)?;
        let mut weights = Vec::with_capacity(specs.len());
        let mut biases = Vec::with_capacity(specs.len());
        for s in specs {
            let normal = Normal::new(0.0, (2.0 / s.input as f64).sqrt())
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let data: Vec<f64> = (0..s.output * s.input).map(|_| normal.sample(rng)).collect();
            weights.push(Array2::from_shape_vec((s.output, s.input), data).expect("sized above"));
            biases.push(Array1::zeros(s.output));
        }
        Ok(Self { specs: specs.to_vec(), weights, biases })
    }

    /// Build from explicit parameters; `weights[k]` is `output x input`.
    pub fn from_parts(
        specs: Vec<LayerSpec>,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
    ) -> Result<Self> {
        validate_specs(&specs)?;
        if weights.len() != specs.len() || biases.len() != specs.len() {
            return Err(Error::Shape { expected: specs.len(), got: weights.len().min(biases.len()) });
        }
        for (s, (w, b)) in specs.iter().zip(weights.iter().zip(&biases)) {
            if w.dim() != (s.output, s.input) {
                return Err(Error::Shape { expected: s.output * s.input, got: w.len() });
            }
            if b.len() != s.output {
                return Err(Error::Shape { expected: s.output, got: b.len() });
            }
        }
        let net = Self { specs, weights, biases };
        if !net.is_finite() {
            return Err(Error::NonFinite("network parameter"));
        }
        Ok(net)
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn input_width(&self) -> usize {
        self.specs[0].input
    }

    pub fn output_width(&self) -> usize {
        self.specs[self.specs.len() - 1].output
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            weights: self.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: self.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    /// Visit every parameter mutably in a fixed order (layer by layer,
    /// weights row-major then biases).
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_width() {
            return Err(Error::Shape { expected: self.input_width(), got: input.len() });
        }
        let mut a = Array1::from(input.to_vec());
        for (s, (w, b)) in self.specs.iter().zip(self.weights.iter().zip(&self.biases)) {
            let mut z = w.dot(&a);
            z += b;
            z.mapv_inplace(|v| s.activation.apply(v));
            a = z;
        }
        Ok(a.to_vec())
    }

    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_trace(inputs)?.pop().expect("at least one layer").1)
    }

    /// Per-layer `(pre-activation, activation)` pairs.
    fn forward_trace(&self, inputs: ArrayView2<f64>) -> Result<Vec<(Array2<f64>, Array2<f64>)>> {
        if inputs.ncols() != self.input_width() {
            return Err(Error::Shape { expected: self.input_width(), got: inputs.ncols() });
        }
        let mut trace: Vec<(Array2<f64>, Array2<f64>)> = Vec::with_capacity(self.specs.len());
        for (k, s) in self.specs.iter().enumerate() {
            let mut z = match k {
                0 => inputs.dot(&self.weights[k].t()),
                _ => trace[k - 1].1.dot(&self.weights[k].t()),
            };
            z += &self.biases[k];
            let a = z.mapv(|v| s.activation.apply(v));
            trace.push((z, a));
        }
        Ok(trace)
    }

    /// Backpropagate a caller-supplied output gradient `dL/dY`
    /// (`batch x output`).
    pub fn backward_from_output(
        &self,
        inputs: ArrayView2<f64>,
        output_grad: ArrayView2<f64>,
    ) -> Result<Gradients> {
        let trace = self.forward_trace(inputs)?;
        self.backprop(inputs, &trace, output_grad.to_owned())
    }

    fn backprop(
        &self,
        inputs: ArrayView2<f64>,
        trace: &[(Array2<f64>, Array2<f64>)],
        output_grad: Array2<f64>,
    ) -> Result<Gradients> {
        if output_grad.dim() != (inputs.nrows(), self.output_width()) {
            return Err(Error::Shape {
                expected: inputs.nrows() * self.output_width(),
                got: output_grad.len(),
            });
        }
        let n = self.specs.len();
        let mut grads = self.zero_gradients();
        let mut d_a = output_grad;
        for k in (0..n).rev() {
            let act = self.specs[k].activation;
            let mut d_z = d_a;
            if act != Activation::Identity {
                d_z.zip_mut_with(&trace[k].0, |d, &z| *d *= act.derivative(z));
            }
            grads.weights[k] = match k {
                0 => d_z.t().dot(&inputs),
                _ => d_z.t().dot(&trace[k - 1].1),
            };
            grads.biases[k] = d_z.sum_axis(Axis(0));
            if k > 0 {
                d_a = d_z.dot(&self.weights[k]);
            } else {
                break;
            }
        }
        Ok(grads)
    }

    /// Gradients of the mean-squared error over every output element.
    pub fn backward(
        &self,
        inputs: ArrayView2<f64>,
        targets: ArrayView2<f64>,
    ) -> Result<(Gradients, f64)> {
        let trace = self.forward_trace(inputs)?;
        let out = &trace[trace.len() - 1].1;
        if targets.dim() != out.dim() {
            return Err(Error::Shape { expected: out.len(), got: targets.len() });
        }
        let diff = out - &targets;
        let count = diff.len() as f64;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
        let grad = diff.mapv(|d| 2.0 * d / count);
        Ok((self.backprop(inputs, &trace, grad)?, loss))
    }

    /// Gradients of `mean_i (Y[i, cols[i]] - targets[i])^2`: only the selected
    /// output of each row contributes.
    pub fn backward_selected(
        &self,
        inputs: ArrayView2<f64>,
        cols: &[usize],
        targets: &[f64],
    ) -> Result<(Gradients, f64)> {
        let rows = inputs.nrows();
        if cols.len() != rows || targets.len() != rows {
            return Err(Error::Shape { expected: rows, got: cols.len().min(targets.len()) });
        }
        if rows == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let trace = self.forward_trace(inputs)?;
        let out = &trace[trace.len() - 1].1;
        let width = self.output_width();
        let mut grad = Array2::zeros(out.raw_dim());
        let mut loss = 0.0;
        for (i, (&c, &t)) in cols.iter().zip(targets).enumerate() {
            if c >= width {
                return Err(Error::Shape { expected: width, got: c });
            }
            let d = out[[i, c]] - t;
            loss += d * d;
            grad[[i, c]] = 2.0 * d / rows as f64;
        }
        Ok((self.backprop(inputs, &trace, grad)?, loss / rows as f64))
    }

    /// Text checkpoint: a header with layer specs followed by one line of
    /// row-major weights and one line of biases per layer.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "dynpen-mlp 1").ok();
        writeln!(s, "layers {}", self.specs.len()).ok();
        for spec in &self.specs {
            let act = match spec.activation {
                Activation::Relu => "relu",
                Activation::Identity => "identity",
            };
            writeln!(s, "{} {} {}", spec.input, spec.output, act).ok();
        }
        for (w, b) in self.weights.iter().zip(&self.biases) {
            let join = |it: &mut dyn Iterator<Item = &f64>| {
                it.map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
            };
            writeln!(s, "{}", join(&mut w.iter())).ok();
            writeln!(s, "{}", join(&mut b.iter())).ok();
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("checkpoint: {m}"));
        let mut lines = input.lines();
        let mut next = || -> Result<String> {
            lines.next().ok_or_else(|| bad("unexpected end of file"))?.map_err(Error::from)
        };
        if next()?.trim() != "dynpen-mlp 1" {
            return Err(bad("unknown header"));
        }
        let count: usize = next()?
            .trim()
            .strip_prefix("layers ")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| bad("missing layer count"))?;
        let mut specs = Vec::with_capacity(count);
        for _ in 0..count {
            let line = next()?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad("malformed layer spec"));
            }
            let activation = match f[2] {
                "relu" => Activation::Relu,
                "identity" => Activation::Identity,
                other => return Err(bad(&format!("unknown activation {other}"))),
            };
            let input = f[0].parse().map_err(|_| bad("layer width"))?;
            let output = f[1].parse().map_err(|_| bad("layer width"))?;
            specs.push(LayerSpec { input, output, activation });
        }
        validate_specs(&specs)?;
        let parse = |line: String| -> Result<Vec<f64>> {
            line.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad("parameter value")))
                .collect()
        };
        let mut weights = Vec::with_capacity(count);
        let mut biases = Vec::with_capacity(count);
        for s in &specs {
            let w = parse(next()?)?;
            let b = parse(next()?)?;
            weights.push(
                Array2::from_shape_vec((s.output, s.input), w).map_err(|_| bad("weight count"))?,
            );
            if b.len() != s.output {
                return Err(bad("bias count"));
            }
            biases.push(Array1::from(b));
        }
        Self::from_parts(specs, weights, biases)
    }
}

pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Shape { expected: predictions.len(), got: targets.len() });
    }
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("mse of empty vectors".into()));
    }
    let sum: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / predictions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum UpdateRule {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl UpdateRule {
    pub fn adam(lr: f64) -> Self {
        UpdateRule::Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First-order optimizer with per-parameter moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    rule: UpdateRule,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl Optimizer {
    pub fn new(rule: UpdateRule, net: &Network) -> Self {
        let n = match rule {
            UpdateRule::Sgd { .. } => 0,
            UpdateRule::Adam { .. } => net.num_params(),
        };
        Self { rule, first: vec![0.0; n], second: vec![0.0; n], steps: 0 }
    }

    pub fn rule(&self) -> UpdateRule {
        self.rule
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Apply one update. Non-finite gradients leave the network untouched
    /// and report divergence.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        if grads.weights.len() != net.weights.len() {
            return Err(Error::Shape { expected: net.weights.len(), got: grads.weights.len() });
        }
        for (w, g) in net.weights.iter().zip(&grads.weights) {
            if w.dim() != g.dim() {
                return Err(Error::Shape { expected: w.len(), got: g.len() });
            }
        }
        for (b, g) in net.biases.iter().zip(&grads.biases) {
            if b.len() != g.len() {
                return Err(Error::Shape { expected: b.len(), got: g.len() });
            }
        }
        if !grads.is_finite() {
            return Err(Error::Diverged {
                update: self.steps,
                reason: "non-finite gradient".into(),
            });
        }
        self.steps += 1;
        let flat_grads = grads
            .weights
            .iter()
            .zip(&grads.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()));
        match self.rule {
            UpdateRule::Sgd { lr } => {
                for (p, g) in net.params_mut().zip(flat_grads) {
                    *p -= lr * g;
                }
            }
            UpdateRule::Adam { lr, beta1, beta2, eps } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let moments = self.first.iter_mut().zip(self.second.iter_mut());
                for ((p, g), (m, v)) in net.params_mut().zip(flat_grads).zip(moments) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
        if !net.is_finite() {
            return Err(Error::Diverged {
                update: self.steps,
                reason: "non-finite parameter after update".into(),
            });
        }
        Ok(())
    }
}

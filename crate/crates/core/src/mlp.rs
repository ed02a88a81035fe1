//! Small dense networks with a single scalar output.
//!
//! Parameters live in one flat buffer (per layer: row-major `out × in` weights, then `out`
//! biases) so that optimisers and norm penalties can treat them as a single vector θ. Batched
//! forward and backward passes are plain matrix products over rows of inputs.

use std::fmt::Write as _;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::{seed, text, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Linear,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => fast_tanh(z),
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output `a = act(z)`.
    fn slope_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// `tanh` through a single `exp`, which is several times cheaper than the libm routine. Near
/// zero the quotient cancels, so small arguments fall back to the library call.
#[inline]
fn fast_tanh(z: f64) -> f64 {
    let a = z.abs();
    if a < 0.5 {
        return z.tanh();
    }
    if a > 20.0 {
        return z.signum();
    }
    let e = (2.0 * a).exp();
    (1.0 - 2.0 / (e + 1.0)).copysign(z)
}

/// Architecture of a scalar-output network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub arity: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(arity: usize, hidden: Vec<usize>, activation: Activation) -> Result<Self> {
        if arity == 0 {
            return Err(Error::invalid("network arity must be at least 1"));
        }
        if hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be at least 1"));
        }
        Ok(Self { arity, hidden, activation })
    }

    /// Two tanh layers of width 32.
    pub fn default_for(arity: usize) -> Self {
        Self { arity, hidden: vec![32, 32], activation: Activation::Tanh }
    }

    /// `(fan_in, fan_out)` of every layer, output layer last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut fan_in = self.arity;
        for &w in self.hidden.iter().chain(std::iter::once(&1)) {
            dims.push((fan_in, w));
            fan_in = w;
        }
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|&(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    spec: MlpSpec,
    data: Vec<f64>,
    offsets: Vec<usize>,
}

/// Activations of every layer for one batch, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// `activations[0]` is the input; `activations[l + 1]` the output of layer `l`.
    activations: Vec<Array2<f64>>,
}

impl Tape {
    pub fn output(&self) -> ArrayView1<'_, f64> {
        self.activations.last().expect("non-empty tape").column(0)
    }
}

impl MlpParams {
    pub fn zeros(spec: MlpSpec) -> Self {
        let mut offsets = Vec::new();
        let mut total = 0;
        for (i, o) in spec.layer_dims() {
            offsets.push(total);
            total += i * o + o;
        }
        Self { data: vec![0.0; total], spec, offsets }
    }

    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init(spec: MlpSpec, rng_seed: u64) -> Self {
        let mut params = Self::zeros(spec);
        let mut rng = seed::rng(rng_seed);
        for (l, (fan_in, fan_out)) in params.spec.layer_dims().into_iter().enumerate() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let off = params.offsets[l];
            for w in &mut params.data[off..off + fan_in * fan_out] {
                *w = rng.random_range(-bound..bound);
            }
        }
        params
    }

    pub fn from_flat(spec: MlpSpec, data: Vec<f64>) -> Result<Self> {
        let mut params = Self::zeros(spec);
        if data.len() != params.data.len() {
            return Err(Error::DimensionMismatch { expected: params.data.len(), got: data.len() });
        }
        params.data = data;
        Ok(params)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn arity(&self) -> usize {
        self.spec.arity
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(weights, bias)` of layer `l`; weights are `out × in`.
    pub fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (fan_in, fan_out) = self.spec.layer_dims()[l];
        let off = self.offsets[l];
        let w = ArrayView2::from_shape((fan_out, fan_in), &self.data[off..off + fan_in * fan_out])
            .expect("layer shape");
        let b = ArrayView1::from(&self.data[off + fan_in * fan_out..off + fan_in * fan_out + fan_out]);
        (w, b)
    }

    pub fn forward(&self, inputs: &[f64]) -> Result<f64> {
        self.check_arity(inputs.len())?;
        let x = ArrayView2::from_shape((1, inputs.len()), inputs).expect("row");
        Ok(self.forward_batch(x).output()[0])
    }

    /// Gradients of `upstream · output` with respect to every parameter (flat layout) and to the
    /// inputs.
    pub fn gradient(&self, inputs: &[f64], upstream: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_arity(inputs.len())?;
        let x = ArrayView2::from_shape((1, inputs.len()), inputs).expect("row");
        let tape = self.forward_batch(x);
        let mut grads = vec![0.0; self.data.len()];
        let input_grad = self.backward_batch(&tape, &[upstream], &mut grads, true);
        Ok((grads, input_grad.expect("requested").row(0).to_vec()))
    }

    fn check_arity(&self, got: usize) -> Result<()> {
        if got != self.spec.arity {
            return Err(Error::DimensionMismatch { expected: self.spec.arity, got });
        }
        Ok(())
    }

    /// Forward pass for `rows × arity` inputs.
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> Tape {
        assert_eq!(inputs.ncols(), self.spec.arity, "input width");
        let n_layers = self.offsets.len();
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(inputs.to_owned());
        for l in 0..n_layers {
            let (w, b) = self.layer(l);
            let prev = &activations[l];
            let mut z = Array2::<f64>::zeros((prev.nrows(), w.nrows()));
            general_mat_mul(1.0, prev, &w.t(), 0.0, &mut z);
            z += &b;
            if l + 1 < n_layers {
                let act = self.spec.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            activations.push(z);
        }
        Tape { activations }
    }

    /// Accumulates into `grads` the parameter gradient of `Σ_r upstream[r] · output[r]`.
    /// Returns the input gradient when `want_input_grad` is set.
    pub fn backward_batch(
        &self,
        tape: &Tape,
        upstream: &[f64],
        grads: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Array2<f64>> {
        assert_eq!(grads.len(), self.data.len(), "gradient buffer");
        let rows = tape.activations[0].nrows();
        assert_eq!(upstream.len(), rows, "upstream length");
        let n_layers = self.offsets.len();
        let dims = self.spec.layer_dims();
        let mut delta = Array2::from_shape_vec((rows, 1), upstream.to_vec()).expect("column");
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = dims[l];
            let off = self.offsets[l];
            let prev = &tape.activations[l];
            {
                let (gw, gb) = grads[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                let mut gw = ArrayViewMut2::from_shape((fan_out, fan_in), gw).expect("layer shape");
                general_mat_mul(1.0, &delta.t(), prev, 1.0, &mut gw);
                for (g, s) in gb.iter_mut().zip(delta.sum_axis(Axis(0))) {
                    *g += s;
                }
            }
            if l == 0 && !want_input_grad {
                return None;
            }
            let (w, _) = self.layer(l);
            let mut back = Array2::<f64>::zeros((rows, fan_in));
            general_mat_mul(1.0, &delta, &w, 0.0, &mut back);
            if l > 0 {
                let act = self.spec.activation;
                back.zip_mut_with(prev, |g, &a| *g *= act.slope_from_output(a));
            }
            delta = back;
        }
        Some(delta)
    }

    pub fn write_text(&self, out: &mut String) {
        let hidden: Vec<String> = self.spec.hidden.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "mlp");
        let _ = writeln!(out, "arity {}", self.spec.arity);
        let _ = writeln!(out, "hidden {}", hidden.join(" "));
        let _ = writeln!(out, "activation {}", self.spec.activation.name());
        for (l, (fan_in, fan_out)) in self.spec.layer_dims().into_iter().enumerate() {
            let (w, b) = self.layer(l);
            let _ = writeln!(out, "layer {l} {fan_in} {fan_out}");
            let _ = writeln!(out, "weights {}", text::join_f64(w.as_slice().expect("contiguous"), " "));
            let _ = writeln!(out, "bias {}", text::join_f64(b.as_slice().expect("contiguous"), " "));
        }
        let _ = writeln!(out, "end");
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        self.write_text(&mut s);
        s
    }

    /// Reads one network written by [`MlpParams::write_text`] from `lines`, consuming through
    /// its `end` line. Items are `(line number, line)`.
    pub fn read_text<'a, I>(lines: &mut I) -> std::result::Result<Self, (usize, String)>
    where
        I: Iterator<Item = (usize, &'a str)>,
    {
        let mut next = |what: &str| -> std::result::Result<(usize, Vec<&'a str>), (usize, String)> {
            loop {
                let (n, line) = lines.next().ok_or((0, format!("unexpected end of file, expected {what}")))?;
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields[0] != what {
                    return Err((n, format!("expected `{what}`, found `{}`", fields[0])));
                }
                return Ok((n, fields[1..].to_vec()));
            }
        };
        let parse_usize = |n: usize, s: &str| s.parse::<usize>().map_err(|e| (n, format!("{e}")));
        next("mlp")?;
        let (n, f) = next("arity")?;
        let arity = parse_usize(n, f.first().copied().unwrap_or(""))?;
        let (n, f) = next("hidden")?;
        let hidden = f.iter().map(|s| parse_usize(n, s)).collect::<std::result::Result<Vec<_>, _>>()?;
        let (n, f) = next("activation")?;
        let activation = Activation::parse(f.first().copied().unwrap_or("")).map_err(|e| (n, e.to_string()))?;
        let spec = MlpSpec::new(arity, hidden, activation).map_err(|e| (n, e.to_string()))?;
        let mut data = Vec::with_capacity(spec.param_count());
        for (l, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
            let (n, f) = next("layer")?;
            if f != [l.to_string(), fan_in.to_string(), fan_out.to_string()] {
                return Err((n, format!("layer header does not match architecture: {f:?}")));
            }
            let (n, f) = next("weights")?;
            let w = text::parse_f64s(f.into_iter()).map_err(|m| (n, m))?;
            if w.len() != fan_in * fan_out {
                return Err((n, format!("expected {} weights, got {}", fan_in * fan_out, w.len())));
            }
            let (n, f) = next("bias")?;
            let b = text::parse_f64s(f.into_iter()).map_err(|m| (n, m))?;
            if b.len() != fan_out {
                return Err((n, format!("expected {fan_out} biases, got {}", b.len())));
            }
            data.extend(w);
            data.extend(b);
        }
        next("end")?;
        Self::from_flat(spec, data).map_err(|e| (0, e.to_string()))
    }

    pub fn from_text(src: &str) -> Result<Self> {
        let mut lines = src.lines().enumerate().map(|(i, l)| (i + 1, l));
        Self::read_text(&mut lines)
            .map_err(|(line, msg)| Error::Parse { path: "<mlp>".into(), line, msg })
    }
}

/// Adaptive moment estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "parameter count");
        assert_eq!(grads.len(), self.m.len(), "gradient count");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

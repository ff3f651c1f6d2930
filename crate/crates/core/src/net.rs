//! Dense ReLU network with reverse-mode gradients, inverted dropout and Adam.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub nodes_per_layer: usize,
    pub dropout: f64,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_layers: usize, nodes_per_layer: usize, dropout: f64) -> Self {
        Self { input_dim, hidden_layers, nodes_per_layer, dropout, output_dim: 1 }
    }

    /// Single affine layer: `g(x) = w'x + b`.
    pub fn linear(input_dim: usize) -> Self {
        Self::new(input_dim, 0, 0, 0.0)
    }

    pub fn with_output_dim(mut self, output_dim: usize) -> Self {
        self.output_dim = output_dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArgument("input and output dims must be positive".into()));
        }
        if self.hidden_layers > 0 && self.nodes_per_layer == 0 {
            return Err(Error::InvalidArgument("nodes_per_layer must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout must be in [0,1), got {}", self.dropout)));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` per affine layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.input_dim;
        for _ in 0..self.hidden_layers {
            dims.push((fan_in, self.nodes_per_layer));
            fan_in = self.nodes_per_layer;
        }
        dims.push((fan_in, self.output_dim));
        dims
    }

    pub fn n_params(&self) -> usize {
        self.layer_dims().iter().map(|&(i, o)| (i + 1) * o).sum()
    }
}

/// Feed-forward network over a flat parameter vector. Each layer stores its
/// weights row-major as `fan_in x fan_out`, followed by `fan_out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    spec: MlpSpec,
    parameters: Vec<f64>,
}

/// Activations retained from a forward pass, consumed by [`DenseNet::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    n_params: usize,
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
    output: Array2<f64>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    /// Smallest `|z|` over hidden-layer pre-activations: how close the pass
    /// came to a ReLU kink. Infinite without hidden layers.
    pub fn kink_margin(&self) -> f64 {
        self.pre_activations.iter().flat_map(|z| z.iter()).fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

impl DenseNet {
    /// Glorot-uniform weights and zero biases. A network without hidden
    /// layers is a linear predictor and starts at zero, like a Cox fit.
    pub fn new(spec: MlpSpec, rng: &mut dyn RngCore) -> Result<Self> {
        spec.validate()?;
        let mut parameters = vec![0.0; spec.n_params()];
        if spec.hidden_layers > 0 {
            let mut offset = 0;
            for (fan_in, fan_out) in spec.layer_dims() {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for w in &mut parameters[offset..offset + fan_in * fan_out] {
                    *w = rng.random_range(-limit..limit);
                }
                offset += (fan_in + 1) * fan_out;
            }
        }
        Ok(Self { spec, parameters })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { parameters: vec![0.0; spec.n_params()], spec })
    }

    pub fn from_parameters(spec: MlpSpec, parameters: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if parameters.len() != spec.n_params() {
            return Err(Error::DimensionMismatch { expected: spec.n_params(), actual: parameters.len() });
        }
        Ok(Self { spec, parameters })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn parameters(&self) -> &[f64] {
        &self.parameters
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.parameters
    }

    pub fn set_parameters(&mut self, parameters: &[f64]) -> Result<()> {
        if parameters.len() != self.parameters.len() {
            return Err(Error::DimensionMismatch { expected: self.parameters.len(), actual: parameters.len() });
        }
        self.parameters.copy_from_slice(parameters);
        Ok(())
    }

    fn layer(&self, offset: usize, fan_in: usize, fan_out: usize) -> (ArrayView2<'_, f64>, &[f64]) {
        let w = ArrayView2::from_shape((fan_in, fan_out), &self.parameters[offset..offset + fan_in * fan_out])
            .expect("layer slice matches shape");
        let b = &self.parameters[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
        (w, b)
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.spec.input_dim {
            return Err(Error::DimensionMismatch { expected: self.spec.input_dim, actual: x.ncols() });
        }
        Ok(())
    }

    /// Inference-mode forward pass (no dropout).
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let dims = self.spec.layer_dims();
        let last = dims.len() - 1;
        let mut offset = 0;
        let mut h: Option<Array2<f64>> = None;
        for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let (w, b) = self.layer(offset, fan_in, fan_out);
            let mut z = match &h {
                Some(a) => a.dot(&w),
                None => x.dot(&w),
            };
            for mut row in z.rows_mut() {
                for (v, bias) in row.iter_mut().zip(b) {
                    *v += bias;
                    if l < last && *v <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            h = Some(z);
            offset += (fan_in + 1) * fan_out;
        }
        Ok(h.expect("at least one layer"))
    }

    /// Forward pass retaining activations. Dropout is active only when an
    /// RNG is supplied (training mode).
    pub fn forward(&self, x: ArrayView2<'_, f64>, mut rng: Option<&mut dyn RngCore>) -> Result<Tape> {
        self.check_input(&x)?;
        let dims = self.spec.layer_dims();
        let last = dims.len() - 1;
        let keep = 1.0 - self.spec.dropout;
        let mut inputs = Vec::with_capacity(dims.len());
        let mut pre_activations = Vec::with_capacity(last);
        let mut masks = Vec::with_capacity(last);
        inputs.push(x.to_owned());
        let mut offset = 0;
        let mut output = None;
        for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let (w, b) = self.layer(offset, fan_in, fan_out);
            let mut z = inputs[l].dot(&w);
            for mut row in z.rows_mut() {
                for (v, bias) in row.iter_mut().zip(b) {
                    *v += bias;
                }
            }
            offset += (fan_in + 1) * fan_out;
            if l == last {
                output = Some(z);
                break;
            }
            let mut a = z.mapv(|v| if v > 0.0 { v } else { 0.0 });
            let mask = match rng.as_deref_mut() {
                Some(r) if self.spec.dropout > 0.0 => {
                    let scale = 1.0 / keep;
                    let m = Array2::from_shape_fn(a.raw_dim(), |_| {
                        if r.random::<f64>() < keep {
                            scale
                        } else {
                            0.0
                        }
                    });
                    a *= &m;
                    Some(m)
                }
                _ => None,
            };
            pre_activations.push(z);
            masks.push(mask);
            inputs.push(a);
        }
        Ok(Tape {
            n_params: self.parameters.len(),
            inputs,
            pre_activations,
            masks,
            output: output.expect("at least one layer"),
        })
    }

    /// Gradient of a scalar loss w.r.t. the parameters, given
    /// `upstream = dLoss/dOutput` for the batch recorded in `tape`.
    pub fn backward(&self, tape: &Tape, upstream: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let dims = self.spec.layer_dims();
        if tape.n_params != self.parameters.len() || tape.inputs.len() != dims.len() {
            return Err(Error::TapeMismatch("tape recorded for a different network".into()));
        }
        if upstream.dim() != tape.output.dim() {
            return Err(Error::TapeMismatch(format!(
                "upstream shape {:?} != output shape {:?}",
                upstream.dim(),
                tape.output.dim()
            )));
        }
        let mut grad = vec![0.0; self.parameters.len()];
        let mut offsets = Vec::with_capacity(dims.len());
        let mut offset = 0;
        for &(i, o) in &dims {
            offsets.push(offset);
            offset += (i + 1) * o;
        }
        let mut delta = upstream.to_owned();
        for l in (0..dims.len()).rev() {
            let (fan_in, fan_out) = dims[l];
            let off = offsets[l];
            let dw = tape.inputs[l].t().dot(&delta);
            for (dst, v) in grad[off..off + fan_in * fan_out].iter_mut().zip(dw.iter()) {
                *dst = *v;
            }
            let db = delta.sum_axis(Axis(0));
            for (dst, v) in grad[off + fan_in * fan_out..off + (fan_in + 1) * fan_out].iter_mut().zip(db.iter()) {
                *dst = *v;
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(off, fan_in, fan_out);
            let mut da = delta.dot(&w.t());
            if let Some(mask) = &tape.masks[l - 1] {
                da *= mask;
            }
            let z = &tape.pre_activations[l - 1];
            da.zip_mut_with(z, |d, &zv| {
                if zv <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = da;
        }
        Ok(grad)
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, parameters: &mut [f64], gradient: &[f64]) -> Result<()> {
        if parameters.len() != self.m.len() {
            return Err(Error::DimensionMismatch { expected: self.m.len(), actual: parameters.len() });
        }
        if gradient.len() != self.m.len() {
            return Err(Error::DimensionMismatch { expected: self.m.len(), actual: gradient.len() });
        }
        if let Some(i) = gradient.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in parameters.iter_mut().zip(gradient).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

pub fn adam_update(state: &mut AdamState, parameters: &mut [f64], gradient: &[f64]) -> Result<()> {
    state.update(parameters, gradient)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub n_params: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_index: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Relative error with an absolute floor so that near-zero gradients are
/// compared in absolute terms.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Compares the reverse-mode gradient against central differences over
/// every parameter. `loss` maps network outputs to `(value, dValue/dOutput)`.
/// Runs in inference mode.
pub fn grad_check<F>(net: &DenseNet, batch: ArrayView2<'_, f64>, loss: F, h: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&Array2<f64>) -> (f64, Array2<f64>),
{
    let tape = net.forward(batch, None)?;
    let (_, upstream) = loss(tape.output());
    let analytic = net.backward(&tape, upstream.view())?;
    let mut probe = net.clone();
    let mut report = GradCheckReport {
        n_params: analytic.len(),
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_index: 0,
        tolerance,
    };
    for k in 0..analytic.len() {
        let orig = probe.parameters[k];
        probe.parameters[k] = orig + h;
        let up = loss(&probe.predict(batch)?).0;
        probe.parameters[k] = orig - h;
        let down = loss(&probe.predict(batch)?).0;
        probe.parameters[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = relative_error(analytic[k], numeric);
        report.max_abs_error = report.max_abs_error.max((analytic[k] - numeric).abs());
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = k;
        }
    }
    Ok(report)
}

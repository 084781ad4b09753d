use rand::Rng;

use crate::error::{Error, Result};

/// Fully connected network, rectifier on hidden layers, identity output.
///
/// All parameters live in one flat buffer. Layer `l` stores its weights
/// input-major (`w[i * out + j]` connects input `i` to unit `j`) followed by
/// its biases, so a sparse input only touches the rows of its nonzero
/// entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Per-layer activations from a forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input, the last entry the output.
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace always holds the input")
    }
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() - 1);
        let mut total = 0;
        for pair in sizes.windows(2) {
            offsets.push(total);
            total += pair[0] * pair[1] + pair[1];
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; total],
            offsets,
        })
    }

    /// Weights and biases uniform in ±1/√fan_in.
    pub fn new_uniform<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for l in 0..net.n_layers() {
            let bound = 1.0 / (sizes[l] as f64).sqrt();
            let (start, end) = net.layer_range(l);
            for p in &mut net.params[start..end] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_range(&self, l: usize) -> (usize, usize) {
        let start = self.offsets[l];
        (start, start + self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1])
    }

    /// `(weights, biases)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (start, end) = self.layer_range(l);
        let n_w = self.sizes[l] * self.sizes[l + 1];
        self.params[start..end].split_at(n_w)
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (start, end) = self.layer_range(l);
        let n_w = self.sizes[l] * self.sizes[l + 1];
        self.params[start..end].split_at_mut(n_w)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Config(format!(
                "input has length {}, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(input)?.activations.pop().unwrap())
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(input.to_vec());
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let n_out = self.sizes[l + 1];
            let x = activations.last().unwrap();
            let mut z = b.to_vec();
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (zj, wij) in z.iter_mut().zip(&w[i * n_out..(i + 1) * n_out]) {
                    *zj += xi * wij;
                }
            }
            if l + 1 < self.n_layers() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            activations.push(z);
        }
        Ok(ForwardTrace { activations })
    }

    /// Adds `∂(Σ_k out_grad[k]·output[k]) / ∂θ` for one traced input into
    /// `grads` (shaped like [`Mlp::params`]).
    pub fn accumulate_gradient(&self, trace: &ForwardTrace, out_grad: &[f64], grads: &mut [f64]) {
        assert_eq!(out_grad.len(), self.output_dim());
        assert_eq!(grads.len(), self.params.len());
        let mut delta = out_grad.to_vec();
        for l in (0..self.n_layers()).rev() {
            let n_in = self.sizes[l];
            let n_out = self.sizes[l + 1];
            let x = &trace.activations[l];
            let (start, _) = self.layer_range(l);
            let (gw, gb) = grads[start..start + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for (g, d) in gb.iter_mut().zip(&delta) {
                *g += d;
            }
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (g, d) in gw[i * n_out..(i + 1) * n_out].iter_mut().zip(&delta) {
                    *g += xi * d;
                }
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(l);
            // Hidden activations are post-rectifier, so a zero marks an
            // inactive unit.
            delta = (0..n_in)
                .map(|i| {
                    if x[i] <= 0.0 {
                        0.0
                    } else {
                        w[i * n_out..(i + 1) * n_out]
                            .iter()
                            .zip(&delta)
                            .map(|(wij, d)| wij * d)
                            .sum()
                    }
                })
                .collect();
        }
    }

    /// Parameter gradients of `Σ_b Σ_k out_grads[b][k]·output_b[k]`.
    pub fn backward(&self, inputs: &[Vec<f64>], out_grads: &[Vec<f64>]) -> Result<Vec<f64>> {
        if inputs.len() != out_grads.len() {
            return Err(Error::Config("inputs and output gradients differ in batch size".into()));
        }
        let mut grads = vec![0.0; self.params.len()];
        for (x, g) in inputs.iter().zip(out_grads) {
            if g.len() != self.output_dim() {
                return Err(Error::Config("output gradient has the wrong length".into()));
            }
            let trace = self.forward_trace(x)?;
            self.accumulate_gradient(&trace, g, &mut grads);
        }
        Ok(grads)
    }

    /// Move every parameter a fraction `rate` of the way towards `source`.
    pub fn soft_update_from(&mut self, source: &Mlp, rate: f64) {
        assert_eq!(self.sizes, source.sizes);
        if rate == 1.0 {
            self.params.copy_from_slice(&source.params);
        } else {
            for (p, s) in self.params.iter_mut().zip(&source.params) {
                *p += rate * (s - *p);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

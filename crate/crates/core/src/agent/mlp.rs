use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::rng::Rng;

/// Fully connected network with tanh hidden layers and a linear output.
///
/// All weights and biases live in one flat vector; layer `i` stores its
/// `out x in` weight matrix row-major followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    pub params: Vec<f64>,
}

/// Per-layer activations of one forward pass, reused across calls.
#[derive(Debug, Clone, Default)]
pub struct Activations {
    layers: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.layers.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    /// Zero-initialized network with layer widths `dims`.
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output widths");
        let n = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self {
            dims: dims.to_vec(),
            params: vec![0.0; n],
        }
    }

    /// Rebuilds a network from its widths and flat parameters.
    pub fn from_parts(dims: &[usize], params: Vec<f64>) -> Option<Self> {
        if dims.len() < 2 {
            return None;
        }
        let mut net = Self::zeros(dims);
        if net.params.len() != params.len() {
            return None;
        }
        net.params = params;
        Some(net)
    }

    /// Orthogonal weights (gain `hidden_gain` on hidden layers,
    /// `output_gain` on the last), zero biases.
    pub fn orthogonal(dims: &[usize], hidden_gain: f64, output_gain: f64, rng: &mut Rng) -> Self {
        let mut net = Self::zeros(dims);
        let layers = net.num_layers();
        for layer in 0..layers {
            let (fan_in, fan_out) = (net.dims[layer], net.dims[layer + 1]);
            let gain = if layer + 1 == layers { output_gain } else { hidden_gain };
            let w = orthogonal_matrix(fan_out, fan_in, rng);
            let off = net.weight_offset(layer);
            for r in 0..fan_out {
                for c in 0..fan_in {
                    net.params[off + r * fan_in + c] = gain * w[(r, c)];
                }
            }
        }
        net
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    fn weight_offset(&self, layer: usize) -> usize {
        self.dims.windows(2).take(layer).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn forward(&self, input: &[f64], acts: &mut Activations) {
        assert_eq!(input.len(), self.input_dim(), "input width");
        let layers = self.num_layers();
        acts.layers.resize(layers + 1, Vec::new());
        acts.layers[0].clear();
        acts.layers[0].extend_from_slice(input);
        let mut off = 0;
        for layer in 0..layers {
            let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
            let (done, rest) = acts.layers.split_at_mut(layer + 1);
            let x = &done[layer];
            let y = &mut rest[0];
            y.clear();
            let weights = &self.params[off..off + fan_in * fan_out];
            let bias = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            for (row, b) in weights.chunks_exact(fan_in).zip(bias) {
                let z = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                y.push(if layer + 1 < layers { z.tanh() } else { z });
            }
            off += fan_in * fan_out + fan_out;
        }
    }

    pub fn predict(&self, input: &[f64]) -> Vec<f64> {
        let mut acts = Activations::default();
        self.forward(input, &mut acts);
        acts.output().to_vec()
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`
    /// for the forward pass recorded in `acts`.
    pub fn backward(&self, acts: &Activations, grad_output: &[f64], grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len());
        let layers = self.num_layers();
        let mut delta = grad_output.to_vec();
        let mut next = Vec::new();
        for layer in (0..layers).rev() {
            let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
            let off = self.weight_offset(layer);
            if layer + 1 < layers {
                for (d, y) in delta.iter_mut().zip(&acts.layers[layer + 1]) {
                    *d *= 1.0 - y * y;
                }
            }
            let x = &acts.layers[layer];
            let (gw, gb) = grad[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            for (r, d) in delta.iter().enumerate() {
                gb[r] += d;
                for (g, v) in gw[r * fan_in..(r + 1) * fan_in].iter_mut().zip(x) {
                    *g += d * v;
                }
            }
            if layer > 0 {
                next.clear();
                next.resize(fan_in, 0.0);
                let weights = &self.params[off..off + fan_in * fan_out];
                for (row, d) in weights.chunks_exact(fan_in).zip(&delta) {
                    for (n, w) in next.iter_mut().zip(row) {
                        *n += d * w;
                    }
                }
                std::mem::swap(&mut delta, &mut next);
            }
        }
    }
}

/// `rows x cols` matrix with orthonormal rows or columns, whichever is fewer.
fn orthogonal_matrix(rows: usize, cols: usize, rng: &mut Rng) -> DMatrix<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::from_fn(tall, short, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    // sign fix makes the distribution uniform over orthogonal matrices
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if rows >= cols {
        q
    } else {
        q.transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use rand::Rng as _;

    fn random_net(dims: &[usize], seed: u64) -> Mlp {
        let mut rng = stream(seed, Purpose::Init, 0);
        let mut net = Mlp::orthogonal(dims, 2f64.sqrt(), 1.0, &mut rng);
        for p in &mut net.params {
            *p += rng.random_range(-0.1..0.1);
        }
        net
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut rng = stream(0, Purpose::Init, 0);
        for (r, c) in [(64, 27), (8, 64), (64, 64)] {
            let q = orthogonal_matrix(r, c, &mut rng);
            let gram = if r >= c { q.transpose() * &q } else { &q * q.transpose() };
            let eye = DMatrix::<f64>::identity(r.min(c), r.min(c));
            assert!((gram - eye).abs().max() < 1e-12);
        }
    }

    #[test]
    fn output_gain_scales_last_layer() {
        let mut rng = stream(1, Purpose::Init, 0);
        let net = Mlp::orthogonal(&[4, 16, 2], 1.0, 0.01, &mut rng);
        let off = net.weight_offset(1);
        let max = net.params[off..off + 32].iter().fold(0.0f64, |m, w| m.max(w.abs()));
        assert!(max <= 0.01 + 1e-15);
        assert!(net.params[off + 32..].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let net = random_net(&[5, 7, 6, 3], 3);
        let x = [0.3, -0.2, 0.9, 0.1, -0.7];
        let weights = [0.5, -1.3, 2.0];
        let loss = |n: &Mlp| n.predict(&x).iter().zip(&weights).map(|(y, w)| w * y * y).sum::<f64>();
        let mut acts = Activations::default();
        net.forward(&x, &mut acts);
        let g_out: Vec<f64> = acts.output().iter().zip(&weights).map(|(y, w)| 2.0 * w * y).collect();
        let mut grad = vec![0.0; net.params.len()];
        net.backward(&acts, &g_out, &mut grad);
        let h = 1e-6;
        for i in 0..net.params.len() {
            let mut plus = net.clone();
            plus.params[i] += h;
            let mut minus = net.clone();
            minus.params[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            assert!(err < 1e-5, "param {i}: fd {fd} analytic {}", grad[i]);
        }
    }

    #[test]
    fn forward_reuses_buffers() {
        let net = random_net(&[2, 3, 1], 4);
        let mut acts = Activations::default();
        net.forward(&[1.0, 2.0], &mut acts);
        let a = acts.output().to_vec();
        net.forward(&[0.0, 0.0], &mut acts);
        net.forward(&[1.0, 2.0], &mut acts);
        assert_eq!(acts.output(), a.as_slice());
    }
}

//! Small dense networks with hand-written backpropagation.
//!
//! Hidden layers use tanh, the output layer is linear. Gradients are exact;
//! the test suite checks them against central finite differences.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major: `w[o * in_dim + i]`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Post-activation values per layer, starting with the input.
pub struct ForwardCache {
    pub activations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> MlpGrads {
        MlpGrads {
            w: net.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            b: net.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in self.w.iter_mut().chain(self.b.iter_mut()) {
            for g in layer {
                *g *= factor;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        let sq: f64 = self
            .w
            .iter()
            .chain(self.b.iter())
            .flat_map(|v| v.iter())
            .map(|g| g * g)
            .sum();
        sq.sqrt()
    }
}

impl Mlp {
    /// Builds a network with the given layer widths (`dims[0]` is the input
    /// dimension). Weights are drawn N(0, 1/sqrt(fan_in)), biases start at 0.
    pub fn new(dims: &[usize], rng: &mut impl Rng) -> Result<Mlp> {
        if dims.len() < 2 {
            return Err(Error::invalid("network needs at least input and output dims"));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (in_dim, out_dim) = (pair[0], pair[1]);
            if in_dim == 0 || out_dim == 0 {
                return Err(Error::invalid("layer dims must be positive"));
            }
            let dist = Normal::new(0.0, 1.0 / (in_dim as f64).sqrt())
                .map_err(|e| Error::invalid(e.to_string()))?;
            let w = (0..in_dim * out_dim).map(|_| dist.sample(rng)).collect();
            layers.push(Dense {
                in_dim,
                out_dim,
                w,
                b: vec![0.0; out_dim],
            });
        }
        Ok(Mlp { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.in_dim()];
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if l < last {
                for v in next.iter_mut() {
                    *v = v.tanh();
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, ForwardCache) {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        let last = self.layers.len() - 1;
        let mut next = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            layer.apply(activations.last().unwrap(), &mut next);
            if l < last {
                for v in next.iter_mut() {
                    *v = v.tanh();
                }
            }
            activations.push(next.clone());
        }
        (activations.last().unwrap().clone(), ForwardCache { activations })
    }

    /// Accumulates dL/dparams into `grads` given dL/doutput for one sample.
    pub fn backward(&self, cache: &ForwardCache, dl_dout: &[f64], grads: &mut MlpGrads) {
        let mut delta = dl_dout.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &cache.activations[l];
            for o in 0..layer.out_dim {
                grads.b[l][o] += delta[o];
                let row = &mut grads.w[l][o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += delta[o] * xi;
                }
            }
            if l > 0 {
                let mut prev_delta = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (pd, wi) in prev_delta.iter_mut().zip(row) {
                        *pd += delta[o] * wi;
                    }
                }
                // The stored activation is tanh(z); its derivative is 1 - a^2.
                for (pd, a) in prev_delta.iter_mut().zip(&cache.activations[l]) {
                    *pd *= 1.0 - a * a;
                }
                delta = prev_delta;
            }
        }
    }

    /// One SGD step with global-norm gradient clipping.
    pub fn sgd_step(&mut self, grads: &MlpGrads, lr: f64, clip_norm: f64) {
        let norm = grads.global_norm();
        let scale = if clip_norm > 0.0 && norm > clip_norm {
            clip_norm / norm
        } else {
            1.0
        };
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (wi, gi) in layer.w.iter_mut().zip(&grads.w[l]) {
                *wi -= lr * scale * gi;
            }
            for (bi, gi) in layer.b.iter_mut().zip(&grads.b[l]) {
                *bi -= lr * scale * gi;
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Layer order: weights row-major, then biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.w);
            out.extend_from_slice(&layer.b);
        }
        out
    }

    pub fn load_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::invalid(format!(
                "{} parameters given, network has {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let nw = layer.w.len();
            layer.w.copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = layer.b.len();
            layer.b.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }
}

/// Regression loss on the taken action's value:
/// `mean over batch of 1/2 [q(x)[a] - r]^2`.
pub fn action_value_loss(net: &Mlp, batch: &[(Vec<f64>, usize, f64)]) -> f64 {
    let mut loss = 0.0;
    for (x, action, target) in batch {
        let out = net.forward(x);
        let e = out[*action] - target;
        loss += 0.5 * e * e;
    }
    loss / batch.len() as f64
}

pub fn action_value_grads(net: &Mlp, batch: &[(Vec<f64>, usize, f64)]) -> (f64, MlpGrads) {
    let mut grads = MlpGrads::zeros_like(net);
    let mut loss = 0.0;
    for (x, action, target) in batch {
        let (out, cache) = net.forward_cached(x);
        let e = out[*action] - target;
        loss += 0.5 * e * e;
        let mut dl = vec![0.0; out.len()];
        dl[*action] = e;
        net.backward(&cache, &dl, &mut grads);
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    (loss * inv, grads)
}

/// Imitation loss over every action's value:
/// `mean over batch of 1/2 sum_a [q(x)[a] - target[a]]^2`.
pub fn imitation_loss(net: &Mlp, batch: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let mut loss = 0.0;
    for (x, targets) in batch {
        let out = net.forward(x);
        for (y, t) in out.iter().zip(targets) {
            let e = y - t;
            loss += 0.5 * e * e;
        }
    }
    loss / batch.len() as f64
}

pub fn imitation_grads(net: &Mlp, batch: &[(Vec<f64>, Vec<f64>)]) -> (f64, MlpGrads) {
    let mut grads = MlpGrads::zeros_like(net);
    let mut loss = 0.0;
    for (x, targets) in batch {
        let (out, cache) = net.forward_cached(x);
        let mut dl = vec![0.0; out.len()];
        for (i, (y, t)) in out.iter().zip(targets).enumerate() {
            let e = y - t;
            loss += 0.5 * e * e;
            dl[i] = e;
        }
        net.backward(&cache, &dl, &mut grads);
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    (loss * inv, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn fd_check<F>(net: &Mlp, analytic: &MlpGrads, loss_fn: F, tol: f64)
    where
        F: Fn(&Mlp) -> f64,
    {
        let eps = 1e-5;
        let base = net.flatten();
        let flat_grads: Vec<f64> = analytic
            .w
            .iter()
            .zip(&analytic.b)
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
            .copied()
            .collect();
        let mut probe = net.clone();
        for (k, &g) in flat_grads.iter().enumerate() {
            let mut plus = base.clone();
            plus[k] += eps;
            probe.load_flat(&plus).unwrap();
            let lp = loss_fn(&probe);
            let mut minus = base.clone();
            minus[k] -= eps;
            probe.load_flat(&minus).unwrap();
            let lm = loss_fn(&probe);
            let numeric = (lp - lm) / (2.0 * eps);
            let denom = g.abs().max(numeric.abs()).max(1e-8);
            assert!(
                (g - numeric).abs() / denom <= tol,
                "param {k}: analytic {g} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn action_value_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let net = Mlp::new(&[5, 8, 2], &mut rng).unwrap();
        let batch: Vec<(Vec<f64>, usize, f64)> = (0..4)
            .map(|i| {
                let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
                (x, i % 2, rng.random_range(-2.0..0.0))
            })
            .collect();
        let (_, grads) = action_value_grads(&net, &batch);
        fd_check(&net, &grads, |n| action_value_loss(n, &batch), 1e-4);
    }

    #[test]
    fn imitation_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let net = Mlp::new(&[6, 7, 2], &mut rng).unwrap();
        let batch: Vec<(Vec<f64>, Vec<f64>)> = (0..4)
            .map(|_| {
                let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
                let t: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..0.0)).collect();
                (x, t)
            })
            .collect();
        let (_, grads) = imitation_grads(&net, &batch);
        fd_check(&net, &grads, |n| imitation_loss(n, &batch), 1e-4);
    }

    #[test]
    fn regression_to_constant_target_converges() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut net = Mlp::new(&[3, 8, 2], &mut rng).unwrap();
        let r0 = -1.7;
        let batch: Vec<(Vec<f64>, usize, f64)> = (0..8)
            .map(|i| {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                (x, i % 2, r0)
            })
            .collect();
        let mut last = f64::INFINITY;
        for _ in 0..4000 {
            let (loss, grads) = action_value_grads(&net, &batch);
            net.sgd_step(&grads, 0.05, 5.0);
            last = loss;
        }
        assert!(last < 1e-6, "loss {last}");
        for (x, action, _) in &batch {
            assert_relative_eq!(net.forward(x)[*action], r0, max_relative = 1e-2);
        }
    }

    #[test]
    fn imitation_of_exact_targets_is_zero_loss() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let net = Mlp::new(&[4, 6, 2], &mut rng).unwrap();
        let batch: Vec<(Vec<f64>, Vec<f64>)> = (0..5)
            .map(|_| {
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                let t = net.forward(&x);
                (x, t)
            })
            .collect();
        assert_eq!(imitation_loss(&net, &batch), 0.0);
    }

    #[test]
    fn flatten_round_trip() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let net = Mlp::new(&[4, 5, 2], &mut rng).unwrap();
        let mut other = Mlp::new(&[4, 5, 2], &mut rng).unwrap();
        other.load_flat(&net.flatten()).unwrap();
        assert_eq!(net, other);
    }

    #[test]
    fn clipping_caps_the_step_norm() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let net = Mlp::new(&[2, 3, 1], &mut rng).unwrap();
        let batch = vec![(vec![100.0, -50.0], 0usize, 1e6)];
        let (_, grads) = action_value_grads(&net, &batch);
        assert!(grads.global_norm() > 5.0);
        let mut stepped = net.clone();
        stepped.sgd_step(&grads, 1.0, 5.0);
        let moved: f64 = net
            .flatten()
            .iter()
            .zip(stepped.flatten())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(moved <= 5.0 + 1e-9, "step norm {moved}");
    }
}

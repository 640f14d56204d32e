//! Fully connected Q-network with manual backpropagation and Adam.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden layer widths of the routing agent.
pub const HIDDEN_LAYERS: [usize; 2] = [128, 64];

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    /// `out x in`.
    w: DMatrix<f64>,
    b: DVector<f64>,
}

/// Multilayer perceptron; ReLU on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layers: Vec<Layer>,
}

/// Parameter gradients, laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl QNetwork {
    /// Uniform initialization in `±1/sqrt(fan_in)` for weights and biases.
    pub fn new<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                Layer {
                    w: DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-bound..bound)),
                    b: DVector::from_fn(fan_out, |_, _| rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Ok(QNetwork { layers })
    }

    /// `[input, 128, 64, output]`.
    pub fn routing<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Result<Self> {
        QNetwork::new(&[input, HIDDEN_LAYERS[0], HIDDEN_LAYERS[1], output], rng)
    }

    /// Builds a network from explicit row-major weights (`[out][in]` per
    /// layer) and biases, checking that consecutive shapes line up.
    pub fn from_parameters(weights: Vec<Vec<Vec<f64>>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Config("weights and biases must be non-empty and paired".into()));
        }
        let mut layers = Vec::with_capacity(weights.len());
        let mut fan_in = weights[0].first().map_or(0, Vec::len);
        for (w, b) in weights.into_iter().zip(biases) {
            let rows = w.len();
            if rows == 0 || b.len() != rows {
                return Err(Error::Dimension {
                    expected: rows,
                    got: b.len(),
                });
            }
            if let Some(bad) = w.iter().find(|r| r.len() != fan_in) {
                return Err(Error::Dimension {
                    expected: fan_in,
                    got: bad.len(),
                });
            }
            let flat: Vec<f64> = w.into_iter().flatten().collect();
            if flat.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(Error::Config("non-finite network parameter".into()));
            }
            layers.push(Layer {
                w: DMatrix::from_row_slice(rows, fan_in, &flat),
                b: DVector::from_vec(b),
            });
            fan_in = rows;
        }
        Ok(QNetwork { layers })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].w.ncols()];
        sizes.extend(self.layers.iter().map(|l| l.w.nrows()));
        sizes
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().expect("at least one layer").w.nrows()
    }

    /// Row-major `[out][in]` weights per layer.
    pub fn weights(&self) -> Vec<Vec<Vec<f64>>> {
        self.layers
            .iter()
            .map(|l| l.w.row_iter().map(|r| r.iter().copied().collect()).collect())
            .collect()
    }

    pub fn biases(&self) -> Vec<Vec<f64>> {
        self.layers.iter().map(|l| l.b.iter().copied().collect()).collect()
    }

    pub fn weight_matrices(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.layers.iter().map(|l| &l.w)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// Q-values for one input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_len() {
            return Err(Error::Dimension {
                expected: self.input_len(),
                got: input.len(),
            });
        }
        let x = DMatrix::from_column_slice(input.len(), 1, input);
        Ok(self.forward_batch(&x).iter().copied().collect())
    }

    /// Forward pass over the columns of `x` (`input x batch`).
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            a = affine(layer, &a);
            if i < last {
                a.apply(|v| *v = v.max(0.0));
            }
        }
        a
    }

    /// Mean squared error between `Q(x_i)[actions[i]]` and `targets[i]`, with
    /// its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, x: &DMatrix<f64>, actions: &[usize], targets: &[f64]) -> Result<(f64, Gradients)> {
        let batch = x.ncols();
        if batch == 0 || actions.len() != batch || targets.len() != batch {
            return Err(Error::Dimension {
                expected: batch,
                got: actions.len().min(targets.len()),
            });
        }
        if x.nrows() != self.input_len() {
            return Err(Error::Dimension {
                expected: self.input_len(),
                got: x.nrows(),
            });
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= self.output_len()) {
            return Err(Error::Dimension {
                expected: self.output_len(),
                got: a + 1,
            });
        }

        let last = self.layers.len() - 1;
        // Activations per layer input; pre-activations of hidden layers.
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut a = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = affine(layer, &a);
            inputs.push(a);
            if i < last {
                a = z.map(|v| v.max(0.0));
                pre.push(z);
            } else {
                a = z;
            }
        }

        let n = batch as f64;
        let mut delta = DMatrix::zeros(self.output_len(), batch);
        let mut loss = 0.0;
        for (col, (&act, &y)) in actions.iter().zip(targets).enumerate() {
            let err = a[(act, col)] - y;
            loss += err * err;
            delta[(act, col)] = 2.0 * err / n;
        }
        loss /= n;

        let mut weights = vec![DMatrix::zeros(0, 0); self.layers.len()];
        let mut biases = vec![DVector::zeros(0); self.layers.len()];
        for i in (0..self.layers.len()).rev() {
            weights[i] = &delta * inputs[i].transpose();
            biases[i] = delta.column_sum();
            if i > 0 {
                let mut back = self.layers[i].w.transpose() * &delta;
                back.zip_apply(&pre[i - 1], |d, z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        Ok((loss, Gradients { weights, biases }))
    }

    /// Exact copy of `source`'s parameters into `self`.
    pub fn copy_from(&mut self, source: &QNetwork) -> Result<()> {
        if self.layer_sizes() != source.layer_sizes() {
            return Err(Error::Dimension {
                expected: self.layers.len(),
                got: source.layers.len(),
            });
        }
        self.layers.clone_from(&source.layers);
        Ok(())
    }

    fn parameters_mut(&mut self) -> impl Iterator<Item = (&mut DMatrix<f64>, &mut DVector<f64>)> {
        self.layers.iter_mut().map(|l| (&mut l.w, &mut l.b))
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
    }
    Ok(())
}

fn affine(layer: &Layer, a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = &layer.w * a;
    for mut col in z.column_iter_mut() {
        col += &layer.b;
    }
    z
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &QNetwork, learning_rate: f64) -> Self {
        let zeros = Gradients {
            weights: net.layers.iter().map(|l| DMatrix::zeros(l.w.nrows(), l.w.ncols())).collect(),
            biases: net.layers.iter().map(|l| DVector::zeros(l.b.len())).collect(),
        };
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `net` along `grads`.
    pub fn apply(&mut self, net: &mut QNetwork, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.eps);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (i, (w, b)) in net.parameters_mut().enumerate() {
            for (((p, g), m), v) in w
                .iter_mut()
                .zip(grads.weights[i].iter())
                .zip(self.m.weights[i].iter_mut())
                .zip(self.v.weights[i].iter_mut())
            {
                update(p, *g, m, v);
            }
            for (((p, g), m), v) in b
                .iter_mut()
                .zip(grads.biases[i].iter())
                .zip(self.m.biases[i].iter_mut())
                .zip(self.v.biases[i].iter_mut())
            {
                update(p, *g, m, v);
            }
        }
    }
}

/// Serialized form of a trained routing model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParameters {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

impl From<&QNetwork> for NetworkParameters {
    fn from(net: &QNetwork) -> Self {
        NetworkParameters {
            layer_sizes: net.layer_sizes(),
            weights: net.weights(),
            biases: net.biases(),
        }
    }
}

impl TryFrom<NetworkParameters> for QNetwork {
    type Error = Error;

    fn try_from(p: NetworkParameters) -> Result<Self> {
        check_sizes(&p.layer_sizes)?;
        let net = QNetwork::from_parameters(p.weights, p.biases)?;
        if net.layer_sizes() != p.layer_sizes {
            return Err(Error::Config(format!(
                "layer sizes {:?} do not match weights {:?}",
                p.layer_sizes,
                net.layer_sizes()
            )));
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = QNetwork::from_parameters(
            vec![vec![vec![0.0; 3]; 4], vec![vec![0.0; 4]; 2]],
            vec![vec![0.0; 4], vec![0.0; 2]],
        )
        .unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = QNetwork::from_parameters(
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            vec![vec![0.0, 0.0]],
        )
        .unwrap();
        assert_eq!(net.forward(&[0.3, 2.5]).unwrap(), vec![0.3, 2.5]);
    }

    #[test]
    fn hidden_relu_clips_negatives() {
        let net = QNetwork::from_parameters(vec![vec![vec![1.0]], vec![vec![1.0]]], vec![vec![0.0], vec![0.5]]).unwrap();
        assert_eq!(net.forward(&[-3.0]).unwrap(), vec![0.5]);
        assert_eq!(net.forward(&[2.0]).unwrap(), vec![2.5]);
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let net = QNetwork::routing(5, 3, &mut rng(1)).unwrap();
        assert!(matches!(net.forward(&[0.0; 4]), Err(Error::Dimension { expected: 5, got: 4 })));
        assert_eq!(net.layer_sizes(), vec![5, 128, 64, 3]);
    }

    #[test]
    fn parameters_round_trip() {
        let net = QNetwork::routing(6, 4, &mut rng(2)).unwrap();
        let p = NetworkParameters::from(&net);
        let json = serde_json::to_string(&p).unwrap();
        let back: NetworkParameters = serde_json::from_str(&json).unwrap();
        assert_eq!(QNetwork::try_from(back).unwrap(), net);

        let mut bad = p.clone();
        bad.layer_sizes[1] = 7;
        assert!(QNetwork::try_from(bad).is_err());
        let mut ragged = p;
        ragged.weights[1][0].pop();
        assert!(QNetwork::try_from(ragged).is_err());
    }

    #[test]
    fn copy_from_is_exact_and_idempotent() {
        let a = QNetwork::routing(6, 4, &mut rng(3)).unwrap();
        let mut b = QNetwork::routing(6, 4, &mut rng(4)).unwrap();
        assert_ne!(a, b);
        b.copy_from(&a).unwrap();
        assert_eq!(a, b);
        b.copy_from(&a).unwrap();
        assert_eq!(a, b);
        let x = [0.1, 0.9, 0.0, 0.4, 1.0, 0.0];
        assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
        let mut other = QNetwork::routing(6, 5, &mut rng(4)).unwrap();
        assert!(other.copy_from(&a).is_err());
    }

    fn numeric_loss(net: &QNetwork, x: &DMatrix<f64>, actions: &[usize], targets: &[f64]) -> f64 {
        net.loss_and_gradients(x, actions, targets).unwrap().0
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut r = rng(5);
        let mut net = QNetwork::new(&[4, 6, 5, 3], &mut r).unwrap();
        let x = DMatrix::from_fn(4, 7, |_, _| r.random_range(-1.0..1.0));
        let actions = [0, 2, 1, 1, 0, 2, 2];
        let targets: Vec<f64> = (0..7).map(|_| r.random_range(-1.0..1.0)).collect();
        let (_, grads) = net.loss_and_gradients(&x, &actions, &targets).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for layer in 0..net.layers.len() {
            let (rows, cols) = net.layers[layer].w.shape();
            for idx in 0..rows * cols {
                let orig = net.layers[layer].w[idx];
                net.layers[layer].w[idx] = orig + h;
                let up = numeric_loss(&net, &x, &actions, &targets);
                net.layers[layer].w[idx] = orig - h;
                let down = numeric_loss(&net, &x, &actions, &targets);
                net.layers[layer].w[idx] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = grads.weights[layer][idx];
                worst = worst.max((fd - an).abs() / an.abs().max(1e-6).max(fd.abs()));
            }
            for idx in 0..net.layers[layer].b.len() {
                let orig = net.layers[layer].b[idx];
                net.layers[layer].b[idx] = orig + h;
                let up = numeric_loss(&net, &x, &actions, &targets);
                net.layers[layer].b[idx] = orig - h;
                let down = numeric_loss(&net, &x, &actions, &targets);
                net.layers[layer].b[idx] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = grads.biases[layer][idx];
                worst = worst.max((fd - an).abs() / an.abs().max(1e-6).max(fd.abs()));
            }
        }
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }

    #[test]
    fn adam_first_step_by_hand() {
        // q = w*x + b with w=0.5, b=0, x=2 -> q=1; target 3.
        // loss = (q-3)^2 = 4, dL/dw = 2(q-3)x = -8, dL/db = 2(q-3) = -4.
        // Step 1: m = 0.1 g, v = 0.001 g^2, m_hat = g, v_hat = g^2, so
        // w' = 0.5 + 0.001 * 8/(8 + 1e-8), b' = 0 + 0.001 * 4/(4 + 1e-8).
        let mut net = QNetwork::from_parameters(vec![vec![vec![0.5]]], vec![vec![0.0]]).unwrap();
        let x = DMatrix::from_column_slice(1, 1, &[2.0]);
        let (loss, grads) = net.loss_and_gradients(&x, &[0], &[3.0]).unwrap();
        assert_eq!(loss, 4.0);
        assert_eq!(grads.weights[0][0], -8.0);
        assert_eq!(grads.biases[0][0], -4.0);
        let mut adam = Adam::new(&net, 0.001);
        adam.apply(&mut net, &grads);
        let w = net.weights()[0][0][0];
        let b = net.biases()[0][0];
        assert!((w - 0.500_999_999_998_75).abs() < 1e-15, "w = {w:.17}");
        assert!((b - 0.000_999_999_997_5).abs() < 1e-15, "b = {b:.17}");
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn loss_validates_batch_shape() {
        let net = QNetwork::new(&[2, 3], &mut rng(6)).unwrap();
        let x = DMatrix::zeros(2, 2);
        assert!(net.loss_and_gradients(&x, &[0], &[0.0, 0.0]).is_err());
        assert!(net.loss_and_gradients(&x, &[0, 3], &[0.0, 0.0]).is_err());
        assert!(net.loss_and_gradients(&DMatrix::zeros(2, 0), &[], &[]).is_err());
        assert!(net.loss_and_gradients(&DMatrix::zeros(3, 1), &[0], &[0.0]).is_err());
    }
}

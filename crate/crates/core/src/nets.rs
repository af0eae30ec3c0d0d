//! Dense networks with hand-written backpropagation: the Gaussian policy,
//! the value function and the velocity/contact estimator.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DMatrixView, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geom::Vec3;

pub const POLICY_HIDDEN: [usize; 2] = [256, 128];
pub const ESTIMATOR_HIDDEN: [usize; 2] = [128, 128];
pub const INITIAL_STD: f64 = 0.8;
pub const CONTACT_THRESHOLD: f64 = 0.5;
pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Elu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Elu => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Elu),
            _ => None,
        }
    }
}

/// Multi-layer perceptron with all parameters in one flat vector. Each
/// layer stores its `out × in` weight matrix column-major, then its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    acts: Vec<Activation>,
    pub params: Vec<f64>,
}

/// Per-layer pre-activations and activations of a batched forward pass.
/// Column `k` of every matrix belongs to sample `k`.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
    pub output: DMatrix<f64>,
}

impl Mlp {
    /// Zero-initialized network. `acts` has one entry per layer.
    pub fn new(sizes: &[usize], acts: &[Activation]) -> Result<Self> {
        if sizes.len() < 2 || acts.len() != sizes.len() - 1 || sizes.contains(&0) {
            return Err(Error::invalid("network shape", format!("sizes {sizes:?} with {} activations", acts.len())));
        }
        let n = sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        Ok(Mlp { sizes: sizes.to_vec(), acts: acts.to_vec(), params: vec![0.0; n] })
    }

    /// ELU hidden layers and a linear output.
    pub fn elu(input: usize, hidden: &[usize], output: usize) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        let mut acts = vec![Activation::Elu; hidden.len()];
        acts.push(Activation::Identity);
        Self::new(&sizes, &acts).expect("positive sizes")
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.acts
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.acts.len()
    }

    fn offset(&self, layer: usize) -> usize {
        self.sizes[..layer + 1].windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    fn layer(&self, l: usize) -> (DMatrixView<'_, f64>, &[f64]) {
        let (inp, out) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offset(l);
        let w = DMatrixView::from_slice(&self.params[off..off + out * inp], out, inp);
        (w, &self.params[off + out * inp..off + out * (inp + 1)])
    }

    /// Orthogonal weights scaled by `gains[layer]`, zero biases.
    pub fn init_orthogonal<R: Rng + ?Sized>(&mut self, rng: &mut R, gains: &[f64]) {
        assert_eq!(gains.len(), self.n_layers());
        for l in 0..self.n_layers() {
            let (inp, out) = (self.sizes[l], self.sizes[l + 1]);
            let (rows, cols) = (out.max(inp), out.min(inp));
            let a = DMatrix::<f64>::from_fn(rows, cols, |_, _| rng.sample(StandardNormal));
            let qr = a.qr();
            let mut q = qr.q();
            let r = qr.r();
            for k in 0..cols {
                if r[(k, k)] < 0.0 {
                    q.column_mut(k).neg_mut();
                }
            }
            let w = if out >= inp { q } else { q.transpose() };
            let off = self.offset(l);
            for (dst, src) in self.params[off..off + out * inp].iter_mut().zip(w.iter()) {
                *dst = gains[l] * src;
            }
            self.params[off + out * inp..off + out * (inp + 1)].fill(0.0);
        }
    }

    fn check_input(&self, rows: usize) -> Result<()> {
        if rows != self.input_dim() {
            return Err(Error::invalid("network input", format!("expected {} values, got {rows}", self.input_dim())));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        let mut a = DVector::from_column_slice(x);
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let mut z = w * a;
            for (zi, bi) in z.iter_mut().zip(b) {
                *zi = self.acts[l].apply(*zi + bi);
            }
            a = z;
        }
        Ok(a.as_slice().to_vec())
    }

    /// Batched forward pass keeping what [`Mlp::backward`] needs.
    pub fn forward_batch(&self, x: DMatrix<f64>) -> Result<MlpCache> {
        self.check_input(x.nrows())?;
        let mut inputs = Vec::with_capacity(self.n_layers());
        let mut pre = Vec::with_capacity(self.n_layers());
        let mut a = x;
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let mut z = w * &a;
            for mut col in z.column_iter_mut() {
                for (zi, bi) in col.iter_mut().zip(b) {
                    *zi += bi;
                }
            }
            let act = self.acts[l];
            let out = z.map(|v| act.apply(v));
            inputs.push(a);
            pre.push(z);
            a = out;
        }
        Ok(MlpCache { inputs, pre, output: a })
    }

    /// Parameter gradient of `Σ_k d_out[:, k] · output[:, k]`, summed over
    /// the batch, in the flat parameter layout.
    pub fn backward(&self, cache: &MlpCache, d_out: &DMatrix<f64>) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        let mut delta = d_out.clone();
        for l in (0..self.n_layers()).rev() {
            let act = self.acts[l];
            if act != Activation::Identity {
                delta.zip_apply(&cache.pre[l], |d, z| *d *= act.derivative(z));
            }
            let (inp, out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offset(l);
            let gw = &delta * cache.inputs[l].transpose();
            grad[off..off + out * inp].copy_from_slice(gw.as_slice());
            for (g, row) in grad[off + out * inp..off + out * (inp + 1)].iter_mut().zip(delta.row_iter()) {
                *g = row.sum();
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                delta = w.transpose() * &delta;
            }
        }
        grad
    }
}

/// Diagonal Gaussian policy with a state-independent learned log-std.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut mean = Mlp::elu(obs_dim, hidden, act_dim);
        let mut gains = vec![1.0; hidden.len()];
        gains.push(0.01);
        mean.init_orthogonal(rng, &gains);
        GaussianPolicy { mean, log_std: vec![INITIAL_STD.ln(); act_dim] }
    }

    pub fn obs_dim(&self) -> usize {
        self.mean.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64)> {
        let mu = self.mean.forward(obs)?;
        let action: Vec<f64> = mu
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let lp = gaussian_log_prob(&mu, &self.log_std, &action);
        Ok((action, lp))
    }

    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.mean.forward(obs)
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * (1.0 + LN_2PI)).sum()
    }
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], x: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(x)
        .map(|((m, ls), x)| {
            let z = (x - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

/// State-value network.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub net: Mlp,
}

impl ValueNet {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut net = Mlp::elu(obs_dim, hidden, 1);
        net.init_orthogonal(rng, &vec![1.0; hidden.len() + 1]);
        ValueNet { net }
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.net.forward(obs)?[0])
    }
}

/// Fixed-capacity history of proprioceptive frames.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer {
    capacity: usize,
    frame_dim: usize,
    frames: VecDeque<Vec<f64>>,
}

impl HistoryBuffer {
    pub fn new(capacity: usize, frame_dim: usize) -> Self {
        assert!(capacity > 0);
        HistoryBuffer { capacity, frame_dim, frames: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn frame_dim(&self) -> usize {
        self.frame_dim
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.frames.len() == self.capacity
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }

    pub fn push(&mut self, frame: &[f64]) {
        assert_eq!(frame.len(), self.frame_dim, "history frame size");
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(frame.to_vec());
    }

    /// Oldest frame first; missing frames during warm-up read as zeros.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = vec![0.0; (self.capacity - self.frames.len()) * self.frame_dim];
        out.reserve(self.frames.len() * self.frame_dim);
        for f in &self.frames {
            out.extend_from_slice(f);
        }
        out
    }
}

/// Estimated base velocity and contact probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub velocity: Vec3,
    pub contact_prob: [f64; 4],
}

impl Estimate {
    pub fn contacts(&self) -> [bool; 4] {
        self.contact_prob.map(|c| c > CONTACT_THRESHOLD)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Two-hidden-layer network from a flattened history to velocity and
/// contact logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimator {
    pub net: Mlp,
}

impl Estimator {
    pub const OUTPUTS: usize = 7;

    pub fn new<R: Rng + ?Sized>(input_dim: usize, rng: &mut R) -> Self {
        let mut net = Mlp::elu(input_dim, &ESTIMATOR_HIDDEN, Self::OUTPUTS);
        net.init_orthogonal(rng, &[1.0, 1.0, 1.0]);
        Estimator { net }
    }

    pub fn decode(raw: &[f64]) -> Estimate {
        Estimate {
            velocity: Vec3::new(raw[0], raw[1], raw[2]),
            contact_prob: std::array::from_fn(|i| sigmoid(raw[3 + i])),
        }
    }

    pub fn predict(&self, history: &HistoryBuffer) -> Result<Estimate> {
        Ok(Self::decode(&self.net.forward(&history.flatten())?))
    }
}

/// `‖v̂ − v‖² + ‖ĉ − c‖²`
pub fn estimator_loss(v_hat: &Vec3, v: &Vec3, c_hat: &[f64; 4], c: &[f64; 4]) -> f64 {
    (v_hat - v).norm_squared() + c_hat.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
}

/// Loss and its gradient with respect to the raw estimator outputs
/// (velocity, then contact logits).
pub fn estimator_loss_grad(raw: &[f64], v: &Vec3, c: &[f64; 4]) -> (f64, [f64; 7]) {
    let est = Estimator::decode(raw);
    let mut g = [0.0; 7];
    for k in 0..3 {
        g[k] = 2.0 * (raw[k] - v[k]);
    }
    for i in 0..4 {
        let p = est.contact_prob[i];
        g[3 + i] = 2.0 * (p - c[i]) * p * (1.0 - p);
    }
    (estimator_loss(&est.velocity, v, &est.contact_prob, c), g)
}

/// Adaptive-moment optimizer over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let step = self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
            // lr = 0 must leave parameters bitwise unchanged
            if step != 0.0 {
                params[i] -= step;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_net(rng: &mut ChaCha8Rng, sizes: &[usize]) -> Mlp {
        let mut acts = vec![Activation::Elu; sizes.len() - 2];
        acts.push(Activation::Identity);
        let mut m = Mlp::new(sizes, &acts).unwrap();
        for p in m.params.iter_mut() {
            *p = rng.random_range(-1.0..1.0);
        }
        m
    }

    #[test]
    fn identity_layer_passes_input() {
        let mut m = Mlp::new(&[3, 3], &[Activation::Identity]).unwrap();
        for k in 0..3 {
            m.params[k * 3 + k] = 1.0;
        }
        assert_eq!(m.forward(&[0.5, -2.0, 7.0]).unwrap(), vec![0.5, -2.0, 7.0]);
    }

    #[test]
    fn zero_weights_give_activated_bias() {
        let mut m = Mlp::new(&[2, 2], &[Activation::Elu]).unwrap();
        m.params[4] = 0.7;
        m.params[5] = -1.0;
        let y = m.forward(&[3.0, 4.0]).unwrap();
        assert_eq!(y[0], 0.7);
        assert_relative_eq!(y[1], (-1.0f64).exp() - 1.0, epsilon = 1e-15);
    }

    #[test]
    fn bad_input_size_rejected() {
        let m = Mlp::elu(4, &[8], 2);
        assert!(m.forward(&[1.0; 3]).is_err());
        assert!(Mlp::new(&[3], &[]).is_err());
    }

    #[test]
    fn orthogonal_init_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = Mlp::elu(6, &[10], 3);
        m.init_orthogonal(&mut rng, &[1.0, 0.01]);
        let (w, _) = m.layer(0);
        let wtw = w.transpose() * w;
        assert_relative_eq!(wtw, DMatrix::identity(6, 6), epsilon = 1e-12);
        let (w, _) = m.layer(1);
        let wwt = w * w.transpose();
        assert_relative_eq!(wwt, DMatrix::identity(3, 3) * 1e-4, epsilon = 1e-14);
    }

    #[test]
    fn batch_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_net(&mut rng, &[4, 6, 5, 2]);
        let x = DMatrix::from_fn(4, 3, |_, _| rng.random_range(-2.0..2.0));
        let cache = m.forward_batch(x.clone()).unwrap();
        for k in 0..3 {
            let y = m.forward(x.column(k).as_slice()).unwrap();
            assert_relative_eq!(cache.output[(0, k)], y[0], epsilon = 1e-14);
            assert_relative_eq!(cache.output[(1, k)], y[1], epsilon = 1e-14);
        }
    }

    fn check_gradient(seed: u64, sizes: &[usize], batch: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = random_net(&mut rng, sizes);
        let out = *sizes.last().unwrap();
        let x = DMatrix::from_fn(sizes[0], batch, |_, _| rng.random_range(-2.0..2.0));
        let c = DMatrix::from_fn(out, batch, |_, _| rng.random_range(-1.0..1.0));
        // scalar loss ½Σ(c ∘ y)² exercises a non-constant output gradient
        let loss = |m: &Mlp| {
            let y = m.forward_batch(x.clone()).unwrap().output;
            0.5 * y.component_mul(&c).norm_squared()
        };
        let cache = m.forward_batch(x.clone()).unwrap();
        let d_out = cache.output.component_mul(&c).component_mul(&c);
        let g = m.backward(&cache, &d_out);
        let h = 1e-5;
        for i in 0..m.params.len() {
            let p0 = m.params[i];
            m.params[i] = p0 + h;
            let lp = loss(&m);
            m.params[i] = p0 - h;
            let lm = loss(&m);
            m.params[i] = p0;
            let fd = (lp - lm) / (2.0 * h);
            let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-3);
            assert!(err < 1e-4, "param {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_gradient(2, &[3, 5, 4, 2], 4);
        check_gradient(3, &[6, 7, 1], 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn gradients_random_shapes(seed in 0u64..1000, a in 1usize..5, b in 1usize..6, c in 1usize..4, n in 1usize..4) {
            check_gradient(seed, &[a, b, c], n);
        }
    }

    #[test]
    fn log_prob_at_mean() {
        let ls = [0.1, -0.3, 0.5];
        let lp = gaussian_log_prob(&[1.0, 2.0, 3.0], &ls, &[1.0, 2.0, 3.0]);
        let expected: f64 = ls.iter().map(|l| -l - 0.5 * (2.0 * std::f64::consts::PI).ln()).sum();
        assert_relative_eq!(lp, expected, epsilon = 1e-14);
    }

    #[test]
    fn tiny_std_returns_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = GaussianPolicy::new(3, 2, &[8], &mut rng);
        p.log_std = vec![-40.0; 2];
        let obs = [0.2, -0.1, 0.4];
        let (a, _) = p.sample(&obs, &mut rng).unwrap();
        let mu = p.mean_action(&obs).unwrap();
        assert_relative_eq!(a[0], mu[0], epsilon = 1e-15);
        assert_relative_eq!(a[1], mu[1], epsilon = 1e-15);
    }

    #[test]
    fn sample_mean_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = GaussianPolicy::new(2, 1, &[4], &mut rng);
        let obs = [0.3, 0.9];
        let mu = p.mean_action(&obs).unwrap()[0];
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| p.sample(&obs, &mut rng).unwrap().0[0]).sum::<f64>() / n as f64;
        let sigma = p.log_std[0].exp();
        assert!((mean - mu).abs() < 3.0 * sigma / (n as f64).sqrt());
    }

    #[test]
    fn density_integrates_to_one() {
        let (m, ls) = (0.4, 0.8f64.ln());
        let (lo, hi, n) = (-8.0, 8.0, 20_000);
        let dx = (hi - lo) / n as f64;
        let total: f64 = (0..n).map(|i| gaussian_log_prob(&[m], &[ls], &[lo + (i as f64 + 0.5) * dx]).exp() * dx).sum();
        assert!((total - 1.0).abs() < 0.02);
    }

    #[test]
    fn estimator_threshold_and_range() {
        let e = Estimate { velocity: Vec3::zeros(), contact_prob: [0.51, 0.49, 0.9, 0.1] };
        assert_eq!(e.contacts(), [true, false, true, false]);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let est = Estimator::new(10, &mut rng);
        let mut h = HistoryBuffer::new(2, 5);
        h.push(&[3.0, -1.0, 0.5, 8.0, -9.0]);
        let out = est.predict(&h).unwrap();
        assert!(out.contact_prob.iter().all(|p| *p > 0.0 && *p < 1.0));
    }

    #[test]
    fn estimator_loss_cases() {
        let v = Vec3::new(0.3, -0.2, 0.1);
        let c = [1.0, 0.0, 1.0, 0.0];
        assert_eq!(estimator_loss(&v, &v, &c, &c), 0.0);
        assert_eq!(estimator_loss(&(v + Vec3::new(1.0, 0.0, 0.0)), &v, &c, &c), 1.0);
        let c_hat = [0.9, 0.2, 0.6, 0.3];
        let v_hat = Vec3::new(0.5, -0.5, 0.0);
        let by_hand = 0.2f64.powi(2) + 0.3f64.powi(2) + 0.1f64.powi(2) + 0.01 + 0.04 + 0.16 + 0.09;
        assert_relative_eq!(estimator_loss(&v_hat, &v, &c_hat, &c), by_hand, epsilon = 1e-14);
    }

    #[test]
    fn estimator_grad_matches_fd() {
        let raw = [0.3, -0.7, 1.1, 0.4, -1.3, 2.0, -0.2];
        let v = Vec3::new(0.1, 0.2, -0.3);
        let c = [1.0, 0.0, 1.0, 1.0];
        let (_, g) = estimator_loss_grad(&raw, &v, &c);
        for k in 0..7 {
            let mut a = raw;
            let mut b = raw;
            a[k] += 1e-6;
            b[k] -= 1e-6;
            let fd = (estimator_loss_grad(&a, &v, &c).0 - estimator_loss_grad(&b, &v, &c).0) / 2e-6;
            assert_relative_eq!(fd, g[k], epsilon = 1e-7);
        }
    }

    #[test]
    fn history_is_oldest_first() {
        let mut h = HistoryBuffer::new(3, 2);
        h.push(&[1.0, 1.0]);
        assert_eq!(h.flatten(), vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        h.push(&[2.0, 2.0]);
        h.push(&[3.0, 3.0]);
        h.push(&[4.0, 4.0]);
        assert!(h.is_full());
        assert_eq!(h.flatten(), vec![2.0, 2.0, 3.0, 3.0, 4.0, 4.0]);
    }

    #[test]
    fn adam_zero_lr_is_identity() {
        let mut p = vec![0.1, -0.2, 0.3];
        let before = p.clone();
        let mut opt = Adam::new(3, 0.0);
        opt.step(&mut p, &[1.0, -5.0, 0.0]);
        assert_eq!(p, before);
    }
}

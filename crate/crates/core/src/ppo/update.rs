use nalgebra::{DMatrix, Vector3};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nets::{estimator_loss_grad, Adam, Estimator, GaussianPolicy, ValueNet};

use super::gae::normalize_advantages;
use super::rollout::RolloutBuffer;
use super::TrainConfig;

/// Averages over all minibatch steps of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

impl UpdateStats {
    pub fn is_finite(&self) -> bool {
        [self.policy_loss, self.value_loss, self.entropy, self.approx_kl, self.clip_fraction]
            .iter()
            .all(|x| x.is_finite())
    }
}

/// Number of trainable values: policy mean, log-std, then value network.
pub fn param_count(policy: &GaussianPolicy, value: &ValueNet) -> usize {
    policy.mean.params.len() + policy.log_std.len() + value.net.params.len()
}

fn pack(policy: &GaussianPolicy, value: &ValueNet) -> Vec<f64> {
    let mut p = Vec::with_capacity(param_count(policy, value));
    p.extend_from_slice(&policy.mean.params);
    p.extend_from_slice(&policy.log_std);
    p.extend_from_slice(&value.net.params);
    p
}

fn unpack(p: &[f64], policy: &mut GaussianPolicy, value: &mut ValueNet) {
    let a = policy.mean.params.len();
    let b = a + policy.log_std.len();
    policy.mean.params.copy_from_slice(&p[..a]);
    policy.log_std.copy_from_slice(&p[a..b]);
    value.net.params.copy_from_slice(&p[b..]);
}

/// `−E[min(ρA, clip(ρ, 1 ± ε)A)]`
pub fn clipped_surrogate(ratios: &[f64], adv: &[f64], eps: f64) -> f64 {
    let n = ratios.len() as f64;
    -ratios.iter().zip(adv).map(|(r, a)| (r * a).min(r.clamp(1.0 - eps, 1.0 + eps) * a)).sum::<f64>() / n
}

/// One minibatch, samples as columns.
pub struct Minibatch {
    pub obs: DMatrix<f64>,
    pub actions: DMatrix<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Minibatch {
    pub fn gather(buf: &RolloutBuffer, idx: &[usize], adv: &[f64], ret: &[f64]) -> Self {
        let (od, ad) = (buf.obs_dim, buf.act_dim);
        Minibatch {
            obs: DMatrix::from_fn(od, idx.len(), |r, c| buf.obs[idx[c] * od + r]),
            actions: DMatrix::from_fn(ad, idx.len(), |r, c| buf.actions[idx[c] * ad + r]),
            old_log_probs: idx.iter().map(|i| buf.log_probs[*i]).collect(),
            advantages: idx.iter().map(|i| adv[*i]).collect(),
            returns: idx.iter().map(|i| ret[*i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

/// Total loss, its parts and the gradient in packed parameter order.
pub fn ppo_loss_grad(
    policy: &GaussianPolicy,
    value: &ValueNet,
    mb: &Minibatch,
    cfg: &TrainConfig,
) -> Result<(f64, UpdateStats, Vec<f64>)> {
    let b = mb.len() as f64;
    let act_dim = policy.act_dim();
    let sigma: Vec<f64> = policy.log_std.iter().map(|l| l.exp()).collect();
    let pcache = policy.mean.forward_batch(mb.obs.clone())?;
    let mut d_mu = DMatrix::zeros(act_dim, mb.len());
    let mut g_log_std = vec![0.0; act_dim];
    let eps = cfg.clip_ratio;
    let (mut surrogate, mut kl, mut clipped) = (0.0, 0.0, 0.0);
    for k in 0..mb.len() {
        let mut logp = 0.0;
        let mut z = vec![0.0; act_dim];
        for j in 0..act_dim {
            z[j] = (mb.actions[(j, k)] - pcache.output[(j, k)]) / sigma[j];
            logp += -0.5 * z[j] * z[j] - policy.log_std[j] - 0.5 * crate::nets::LN_2PI;
        }
        let log_ratio = logp - mb.old_log_probs[k];
        let ratio = log_ratio.exp();
        let a = mb.advantages[k];
        let unclipped = ratio * a;
        let clipped_obj = ratio.clamp(1.0 - eps, 1.0 + eps) * a;
        surrogate -= unclipped.min(clipped_obj) / b;
        kl += (ratio - 1.0 - log_ratio) / b;
        if (ratio - 1.0).abs() > eps {
            clipped += 1.0 / b;
        }
        if unclipped <= clipped_obj {
            // d(−ρA/B)/d log π
            let g = -ratio * a / b;
            for j in 0..act_dim {
                d_mu[(j, k)] = g * z[j] / sigma[j];
                g_log_std[j] += g * (z[j] * z[j] - 1.0);
            }
        }
    }
    let entropy = policy.entropy();
    for g in g_log_std.iter_mut() {
        *g -= cfg.entropy_coef;
    }

    let vcache = value.net.forward_batch(mb.obs.clone())?;
    let mut d_v = DMatrix::zeros(1, mb.len());
    let mut value_loss = 0.0;
    for k in 0..mb.len() {
        let err = vcache.output[(0, k)] - mb.returns[k];
        value_loss += err * err / b;
        d_v[(0, k)] = 2.0 * cfg.value_coef * err / b;
    }

    let mut grad = policy.mean.backward(&pcache, &d_mu);
    grad.extend_from_slice(&g_log_std);
    grad.extend(value.net.backward(&vcache, &d_v));
    let loss = surrogate + cfg.value_coef * value_loss - cfg.entropy_coef * entropy;
    let stats = UpdateStats { policy_loss: surrogate, value_loss, entropy, approx_kl: kl, clip_fraction: clipped };
    Ok((loss, stats, grad))
}

fn clip_grad_norm(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

fn shuffled_chunks<R: Rng + ?Sized>(n: usize, chunks: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let size = n.div_ceil(chunks.max(1)).max(1);
    idx.chunks(size).map(|c| c.to_vec()).collect()
}

/// `cfg.epochs` passes over shuffled minibatches of the full buffer.
/// Advantages are normalized over the whole batch first.
pub fn ppo_update<R: Rng + ?Sized>(
    buf: &RolloutBuffer,
    policy: &mut GaussianPolicy,
    value: &mut ValueNet,
    opt: &mut Adam,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    if !buf.is_full() {
        return Err(Error::invalid("rollout buffer", format!("{} of {} transitions", buf.len(), buf.capacity())));
    }
    let (mut adv, ret) = buf.advantages(cfg.gamma, cfg.gae_lambda);
    normalize_advantages(&mut adv);
    let mut params = pack(policy, value);
    let mut total = UpdateStats::default();
    let mut count = 0.0;
    for _ in 0..cfg.epochs {
        for idx in shuffled_chunks(buf.len(), cfg.minibatches, rng) {
            let mb = Minibatch::gather(buf, &idx, &adv, &ret);
            let (loss, s, mut grad) = ppo_loss_grad(policy, value, &mb, cfg)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Fault(format!("non-finite PPO loss ({loss})")));
            }
            clip_grad_norm(&mut grad, cfg.max_grad_norm);
            opt.step(&mut params, &grad);
            unpack(&params, policy, value);
            total.policy_loss += s.policy_loss;
            total.value_loss += s.value_loss;
            total.entropy += s.entropy;
            total.approx_kl += s.approx_kl;
            total.clip_fraction += s.clip_fraction;
            count += 1.0;
        }
    }
    let c = f64::max(count, 1.0);
    Ok(UpdateStats {
        policy_loss: total.policy_loss / c,
        value_loss: total.value_loss / c,
        entropy: total.entropy / c,
        approx_kl: total.approx_kl / c,
        clip_fraction: total.clip_fraction / c,
    })
}

/// One epoch of estimator regression on the buffer's privileged labels.
/// Returns the mean loss, or `None` when the buffer holds no histories.
pub fn estimator_epoch<R: Rng + ?Sized>(
    buf: &RolloutBuffer,
    est: &mut Estimator,
    opt: &mut Adam,
    minibatches: usize,
    max_grad_norm: f64,
    rng: &mut R,
) -> Result<Option<f64>> {
    let hd = buf.history_dim;
    if hd == 0 || buf.is_empty() {
        return Ok(None);
    }
    let mut loss_sum = 0.0;
    for idx in shuffled_chunks(buf.len(), minibatches, rng) {
        let b = idx.len() as f64;
        let x = DMatrix::from_fn(hd, idx.len(), |r, c| buf.histories[idx[c] * hd + r]);
        let cache = est.net.forward_batch(x)?;
        let mut d = DMatrix::zeros(Estimator::OUTPUTS, idx.len());
        for (k, i) in idx.iter().enumerate() {
            let v = Vector3::from_column_slice(&buf.vel_labels[3 * i..3 * i + 3]);
            let c: [f64; 4] = buf.contact_labels[4 * i..4 * i + 4].try_into().unwrap();
            let (l, g) = estimator_loss_grad(cache.output.column(k).as_slice(), &v, &c);
            loss_sum += l;
            for (j, gj) in g.iter().enumerate() {
                d[(j, k)] = gj / b;
            }
        }
        let mut grad = est.net.backward(&cache, &d);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Fault("non-finite estimator gradient".into()));
        }
        clip_grad_norm(&mut grad, max_grad_norm);
        opt.step(&mut est.net.params, &grad);
    }
    Ok(Some(loss_sum / buf.len() as f64))
}

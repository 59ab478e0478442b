//! Continuous-action soft actor-critic with a shared encoder.
//!
//! The encoder is trained by the critic loss only; the actor sees its features as
//! constants. All three gradients of one update (critics with encoder, actor,
//! temperature) are taken at the same parameter point and then applied, which keeps
//! an update a pure function of `(parameters, batch)` and lets the distributed
//! optimizers average each gradient before applying it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::SacConfig;
use super::obs::{InputEncoding, Obs};
use super::replay::{ReplayBuffer, Transition};
use crate::approx::{squash_with_noise, tape_squashed, Adam, Bound, NetInput, NetParams, NetSpec, ParamVector, Tape, Tensor};
use crate::error::{Error, Result};

/// Averages a gradient across optimizer replicas in place. The single-process
/// learner uses [`LocalReducer`], which leaves it untouched.
pub trait GradReducer {
    fn reduce(&mut self, grad: &mut [f64]) -> Result<()>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct LocalReducer;

impl GradReducer for LocalReducer {
    fn reduce(&mut self, _grad: &mut [f64]) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionMode {
    Stochastic,
    Deterministic,
}

/// One minibatch with its reparameterization noise drawn up front.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: NetInput,
    pub next_obs: NetInput,
    pub actions: Tensor,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Noise for the next-state action in the targets, `[B, action_dim]`.
    pub next_noise: Tensor,
    /// Noise for the reparameterized action in the actor loss.
    pub noise: Tensor,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions(spec: &NetSpec, enc: &InputEncoding, ts: &[&Transition], rng: &mut impl Rng) -> Result<Self> {
        if ts.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let b = ts.len();
        let a = spec.action_dim;
        let obs: Vec<&Obs> = ts.iter().map(|t| &t.obs).collect();
        let next: Vec<&Obs> = ts.iter().map(|t| &t.next_obs).collect();
        let mut actions = Vec::with_capacity(b * a);
        for t in ts {
            if t.action.len() != a {
                return Err(Error::Shape(format!("stored action has {} components, expected {a}", t.action.len())));
            }
            actions.extend_from_slice(&t.action);
        }
        let mut noise = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
        let next_noise = Tensor::new(vec![b, a], noise(b * a));
        let cur_noise = Tensor::new(vec![b, a], noise(b * a));
        Ok(Self {
            obs: enc.encode(spec, &obs)?,
            next_obs: enc.encode(spec, &next)?,
            actions: Tensor::new(vec![b, a], actions),
            rewards: ts.iter().map(|t| t.reward).collect(),
            dones: ts.iter().map(|t| t.done).collect(),
            next_noise,
            noise: cur_noise,
        })
    }

    /// Row-wise concatenation, used to build the large-batch reference update.
    pub fn concat(&self, other: &Batch) -> Batch {
        fn cat(a: &Tensor, b: &Tensor) -> Tensor {
            let mut shape = a.shape.clone();
            shape[0] += b.shape[0];
            Tensor::new(shape, [a.data.as_slice(), b.data.as_slice()].concat())
        }
        fn cat_input(a: &NetInput, b: &NetInput) -> NetInput {
            NetInput {
                image: a.image.as_ref().zip(b.image.as_ref()).map(|(x, y)| cat(x, y)),
                aux: cat(&a.aux, &b.aux),
            }
        }
        Batch {
            obs: cat_input(&self.obs, &other.obs),
            next_obs: cat_input(&self.next_obs, &other.next_obs),
            actions: cat(&self.actions, &other.actions),
            rewards: [self.rewards.as_slice(), other.rewards.as_slice()].concat(),
            dones: [self.dones.as_slice(), other.dones.as_slice()].concat(),
            next_noise: cat(&self.next_noise, &other.next_noise),
            noise: cat(&self.noise, &other.noise),
        }
    }
}

/// Everything an acting node needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshot {
    pub version: u64,
    pub spec: NetSpec,
    pub encoding: InputEncoding,
    pub encoder: ParamVector,
    pub actor: ParamVector,
}

impl PolicySnapshot {
    pub fn act(&self, obs: &Obs, mode: ActionMode, rng: &mut impl Rng) -> Result<Vec<f64>> {
        let input = self.encoding.encode(&self.spec, &[obs])?;
        let (mean, log_std) = crate::approx::forward_actor(&self.spec, &self.encoder, &self.actor, &input)?;
        Ok(match mode {
            ActionMode::Deterministic => mean.data.iter().map(|m| m.tanh()).collect(),
            ActionMode::Stochastic => {
                let eps: Vec<f64> = (0..mean.data.len()).map(|_| rng.sample(StandardNormal)).collect();
                squash_with_noise(&mean.data, &log_std.data, &eps).0
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub temperature: f64,
    /// Batch mean of `−log π`.
    pub entropy: f64,
    pub q_mean: f64,
}

#[derive(Debug, Clone)]
pub struct Learner {
    pub spec: NetSpec,
    pub encoding: InputEncoding,
    pub cfg: SacConfig,
    pub net: NetParams,
    pub target_encoder: ParamVector,
    pub target_critic1: ParamVector,
    pub target_critic2: ParamVector,
    pub log_alpha: f64,
    critic_opt: Adam,
    actor_opt: Adam,
    pub updates: u64,
}

/// Gradients of one update before reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateGradients {
    /// Encoder, critic 1 and critic 2, in that order.
    pub critic: Vec<f64>,
    pub actor: Vec<f64>,
    pub temperature: f64,
    pub stats: UpdateStats,
}

impl Learner {
    pub fn new(spec: NetSpec, encoding: InputEncoding, cfg: SacConfig, seed: u64) -> Result<Self> {
        spec.validate()?;
        cfg.validate()?;
        let net = NetParams::init(&spec, &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self::from_params(spec, encoding, cfg, net))
    }

    pub fn from_params(spec: NetSpec, encoding: InputEncoding, cfg: SacConfig, net: NetParams) -> Self {
        let nc = net.encoder.len() + net.critic1.len() + net.critic2.len();
        Self {
            critic_opt: Adam::new(nc, cfg.lr),
            actor_opt: Adam::new(net.actor.len(), cfg.lr),
            target_encoder: net.encoder.clone(),
            target_critic1: net.critic1.clone(),
            target_critic2: net.critic2.clone(),
            log_alpha: cfg.initial_temperature.ln(),
            updates: 0,
            spec,
            encoding,
            cfg,
            net,
        }
    }

    pub fn temperature(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot {
            version: self.updates,
            spec: self.spec.clone(),
            encoding: self.encoding.clone(),
            encoder: self.net.encoder.clone(),
            actor: self.net.actor.clone(),
        }
    }

    pub fn select_action(&self, obs: &Obs, mode: ActionMode, rng: &mut impl Rng) -> Result<Vec<f64>> {
        self.snapshot().act(obs, mode, rng)
    }

    pub fn sample_batch(&self, buffer: &ReplayBuffer, rng: &mut impl Rng) -> Result<Batch> {
        let ts = buffer.sample(self.cfg.batch_size, rng)?;
        Batch::from_transitions(&self.spec, &self.encoding, &ts, rng)
    }

    /// `r + γ(1 − done)·(min_i Q̄_i(s′, a′) − λ log π(a′|s′))` with target encoder and
    /// target critics; `a′` comes from the live actor on target-encoder features.
    pub fn critic_targets(&self, batch: &Batch) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let f = self.spec.encode(&mut tape, Bound::frozen(&self.target_encoder), &batch.next_obs)?;
        let (mean, log_std) = self.spec.actor_head(&mut tape, Bound::frozen(&self.net.actor), f);
        let (a, lp) = tape_squashed(&mut tape, mean, log_std, &batch.next_noise);
        let q1 = self.spec.critic_head(&mut tape, Bound::frozen(&self.target_critic1), f, Some(a));
        let q2 = self.spec.critic_head(&mut tape, Bound::frozen(&self.target_critic2), f, Some(a));
        let lambda = self.temperature();
        let (q1, q2, lp) = (&tape.value(q1).data, &tape.value(q2).data, &tape.value(lp).data);
        Ok((0..batch.len())
            .map(|i| {
                let soft = q1[i].min(q2[i]) - lambda * lp[i];
                let boot = if batch.dones[i] { 0.0 } else { self.cfg.gamma * soft };
                batch.rewards[i] + boot
            })
            .collect())
    }

    /// Sum over both critics of the mean squared residual. Returns the loss, the
    /// gradient over `[encoder | critic 1 | critic 2]`, the encoder features and the
    /// mean of both critics' predictions.
    pub fn critic_loss(&self, batch: &Batch, targets: &[f64]) -> Result<(f64, Vec<f64>, Tensor, f64)> {
        let (ne, nc) = (self.net.encoder.len(), self.net.critic1.len());
        let mut tape = Tape::new();
        let bank = tape.declare_bank(ne + 2 * nc);
        let b1 = tape.bank_view(bank, ne);
        let b2 = tape.bank_view(bank, ne + nc);
        let f = self.spec.encode(&mut tape, Bound::trainable(&self.net.encoder, bank), &batch.obs)?;
        let a = tape.constant(batch.actions.clone());
        let y = tape.constant(Tensor::new(vec![batch.len(), 1], targets.to_vec()));
        let mut loss = None;
        let mut q_sum = 0.0;
        for (p, b) in [(&self.net.critic1, b1), (&self.net.critic2, b2)] {
            let q = self.spec.critic_head(&mut tape, Bound::trainable(p, b), f, Some(a));
            q_sum += tape.value(q).data.iter().sum::<f64>();
            let r = tape.sub(q, y);
            let r2 = tape.square(r);
            let m = tape.mean(r2);
            loss = Some(match loss {
                None => m,
                Some(l) => tape.add(l, m),
            });
        }
        let loss = loss.expect("two critics");
        let grads = tape.backward(loss)?;
        let features = tape.value(f).clone();
        Ok((tape.value(loss).data[0], grads.bank(bank).to_vec(), features, q_sum / (2 * batch.len()) as f64))
    }

    /// `mean(λ log π(a|s) − min_i Q_i(s, a))` with `a` reparameterized from
    /// `batch.noise`. Critics and features are constants. Returns the loss, the actor
    /// gradient and the per-sample log-probabilities.
    pub fn actor_loss(&self, batch: &Batch, features: &Tensor) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let bank = tape.declare_bank(self.net.actor.len());
        let f = tape.constant(features.clone());
        let (mean, log_std) = self.spec.actor_head(&mut tape, Bound::trainable(&self.net.actor, bank), f);
        let (a, lp) = tape_squashed(&mut tape, mean, log_std, &batch.noise);
        let q1 = self.spec.critic_head(&mut tape, Bound::frozen(&self.net.critic1), f, Some(a));
        let q2 = self.spec.critic_head(&mut tape, Bound::frozen(&self.net.critic2), f, Some(a));
        let q = tape.min(q1, q2);
        let scaled = tape.scale(lp, self.temperature());
        let diff = tape.sub(scaled, q);
        let loss = tape.mean(diff);
        let grads = tape.backward(loss)?;
        Ok((tape.value(loss).data[0], grads.bank(bank).to_vec(), tape.value(lp).data.clone()))
    }

    /// Derivative of `log λ · mean(−log π − H*)` with respect to `log λ`.
    pub fn temperature_gradient(&self, log_probs: &[f64]) -> f64 {
        log_probs.iter().map(|lp| -lp - self.cfg.target_entropy).sum::<f64>() / log_probs.len() as f64
    }

    /// Unreduced gradients of one update at the current parameters.
    pub fn gradients(&self, batch: &Batch) -> Result<UpdateGradients> {
        let targets = self.critic_targets(batch)?;
        let (critic_loss, critic, features, q_mean) = self.critic_loss(batch, &targets)?;
        let (actor_loss, actor, lps) = self.actor_loss(batch, &features)?;
        let temperature = self.temperature_gradient(&lps);
        let entropy = -lps.iter().sum::<f64>() / lps.len() as f64;
        Ok(UpdateGradients {
            critic,
            actor,
            temperature,
            stats: UpdateStats { critic_loss, actor_loss, temperature: self.temperature(), entropy, q_mean },
        })
    }

    /// Applies already-reduced gradients, then moves the targets.
    pub fn apply(&mut self, g: &UpdateGradients) -> Result<()> {
        let (ne, nc) = (self.net.encoder.len(), self.net.critic1.len());
        let mut flat = [self.net.encoder.data.as_slice(), &self.net.critic1.data, &self.net.critic2.data].concat();
        self.critic_opt.step(&mut flat, &g.critic);
        self.net.encoder.data.copy_from_slice(&flat[..ne]);
        self.net.critic1.data.copy_from_slice(&flat[ne..ne + nc]);
        self.net.critic2.data.copy_from_slice(&flat[ne + nc..]);
        self.actor_opt.step(&mut self.net.actor.data, &g.actor);
        if self.cfg.auto_temperature {
            self.log_alpha -= self.cfg.temperature_lr * g.temperature;
        }
        self.soft_update();
        self.updates += 1;
        if !self.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite parameters after update {}", self.updates)));
        }
        Ok(())
    }

    /// One full update: gradients, reduction across replicas, application.
    pub fn update(&mut self, batch: &Batch, reducer: &mut dyn GradReducer) -> Result<UpdateStats> {
        let mut g = self.gradients(batch)?;
        reducer.reduce(&mut g.critic)?;
        reducer.reduce(&mut g.actor)?;
        let mut t = [g.temperature];
        reducer.reduce(&mut t)?;
        g.temperature = t[0];
        self.apply(&g)?;
        Ok(g.stats)
    }

    pub fn train_step(&mut self, buffer: &ReplayBuffer, rng: &mut impl Rng) -> Result<Option<UpdateStats>> {
        if buffer.len() < self.cfg.batch_size {
            return Ok(None);
        }
        let batch = self.sample_batch(buffer, rng)?;
        self.update(&batch, &mut LocalReducer).map(Some)
    }

    pub fn soft_update(&mut self) {
        let tau = self.cfg.tau;
        for (t, l) in [
            (&mut self.target_encoder, &self.net.encoder),
            (&mut self.target_critic1, &self.net.critic1),
            (&mut self.target_critic2, &self.net.critic2),
        ] {
            soft_update(&mut t.data, &l.data, tau);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.net.is_finite()
            && self.target_encoder.is_finite()
            && self.target_critic1.is_finite()
            && self.target_critic2.is_finite()
            && self.log_alpha.is_finite()
    }

    /// SHA-256 over every parameter, target and the temperature.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for p in [
            &self.net.encoder,
            &self.net.actor,
            &self.net.critic1,
            &self.net.critic2,
            &self.target_encoder,
            &self.target_critic1,
            &self.target_critic2,
        ] {
            for v in &p.data {
                h.update(v.to_le_bytes());
            }
        }
        h.update(self.log_alpha.to_le_bytes());
        h.finalize().into()
    }
}

/// `target ← (1 − τ)·target + τ·live`.
pub fn soft_update(target: &mut [f64], live: &[f64], tau: f64) {
    for (t, l) in target.iter_mut().zip(live) {
        *t = (1.0 - tau) * *t + tau * l;
    }
}

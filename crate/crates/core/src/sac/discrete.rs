//! Soft actor-critic over a finite action set, with a fixed temperature.
//!
//! Expectations over the next action are taken exactly under the policy's softmax
//! instead of by sampling, so on a tabular problem with deterministic transitions the
//! learned values can be compared directly against soft value iteration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::approx::{Adam, Bound, HeadKind, NetInput, NetParams, NetSpec, Tape, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteConfig {
    pub gamma: f64,
    pub lr: f64,
    pub tau: f64,
    pub temperature: f64,
    pub batch_size: usize,
}

impl Default for DiscreteConfig {
    fn default() -> Self {
        Self { gamma: 0.99, lr: 3e-4, tau: 0.02, temperature: 0.1, batch_size: 256 }
    }
}

/// A transition with vector states and an action index.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTransition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct DiscreteLearner {
    pub spec: NetSpec,
    pub cfg: DiscreteConfig,
    pub net: NetParams,
    pub target_critic1: crate::approx::ParamVector,
    pub target_critic2: crate::approx::ParamVector,
    critic_opt: Adam,
    actor_opt: Adam,
    pub updates: u64,
}

fn input(states: &[&[f64]], dim: usize) -> Result<NetInput> {
    let mut aux = Vec::with_capacity(states.len() * dim);
    for s in states {
        if s.len() != dim {
            return Err(Error::Shape(format!("state of length {}, expected {dim}", s.len())));
        }
        aux.extend_from_slice(s);
    }
    Ok(NetInput { image: None, aux: Tensor::new(vec![states.len(), dim], aux) })
}

impl DiscreteLearner {
    pub fn new(spec: NetSpec, cfg: DiscreteConfig, seed: u64) -> Result<Self> {
        spec.validate()?;
        if spec.encoder.is_some() || !matches!(spec.head, HeadKind::Discrete { .. }) {
            return Err(Error::Config("discrete learner needs a vector network with a discrete head".into()));
        }
        let net = NetParams::init(&spec, &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self {
            critic_opt: Adam::new(2 * net.critic1.len(), cfg.lr),
            actor_opt: Adam::new(net.actor.len(), cfg.lr),
            target_critic1: net.critic1.clone(),
            target_critic2: net.critic2.clone(),
            spec,
            cfg,
            net,
            updates: 0,
        })
    }

    pub fn actions(&self) -> usize {
        match self.spec.head {
            HeadKind::Discrete { actions } => actions,
            HeadKind::Continuous => unreachable!("checked in new"),
        }
    }

    /// Live critic values `Q_i(s, ·)` for each state.
    pub fn q_values(&self, states: &[&[f64]]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let x = input(states, self.spec.aux_dim)?;
        let mut tape = Tape::new();
        let f = tape.constant(x.aux);
        let q1 = self.spec.critic_head(&mut tape, Bound::frozen(&self.net.critic1), f, None);
        let q2 = self.spec.critic_head(&mut tape, Bound::frozen(&self.net.critic2), f, None);
        let n = self.actions();
        let rows = |v: &Tensor| v.data.chunks(n).map(|c| c.to_vec()).collect();
        Ok((rows(tape.value(q1)), rows(tape.value(q2))))
    }

    /// Policy probabilities for each state.
    pub fn policy(&self, states: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let x = input(states, self.spec.aux_dim)?;
        let mut tape = Tape::new();
        let f = tape.constant(x.aux);
        let logits = self.spec.actor_logits(&mut tape, Bound::frozen(&self.net.actor), f);
        let lp = tape.log_softmax(logits);
        let n = self.actions();
        Ok(tape.value(lp).data.chunks(n).map(|c| c.iter().map(|v| v.exp()).collect()).collect())
    }

    pub fn sample_action(&self, state: &[f64], rng: &mut impl Rng) -> Result<usize> {
        let p = &self.policy(&[state])?[0];
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return Ok(i);
            }
        }
        Ok(p.len() - 1)
    }

    /// `r + γ(1 − done)·Σ_a′ π(a′|s′)[min_i Q̄_i(s′, a′) − λ log π(a′|s′)]`.
    pub fn critic_targets(&self, batch: &[&DiscreteTransition]) -> Result<Vec<f64>> {
        let next: Vec<&[f64]> = batch.iter().map(|t| t.next_state.as_slice()).collect();
        let x = input(&next, self.spec.aux_dim)?;
        let mut tape = Tape::new();
        let f = tape.constant(x.aux);
        let logits = self.spec.actor_logits(&mut tape, Bound::frozen(&self.net.actor), f);
        let lp = tape.log_softmax(logits);
        let q1 = self.spec.critic_head(&mut tape, Bound::frozen(&self.target_critic1), f, None);
        let q2 = self.spec.critic_head(&mut tape, Bound::frozen(&self.target_critic2), f, None);
        let (lp, q1, q2) = (&tape.value(lp).data, &tape.value(q1).data, &tape.value(q2).data);
        let n = self.actions();
        let lambda = self.cfg.temperature;
        Ok(batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let v: f64 = (0..n)
                    .map(|a| {
                        let k = i * n + a;
                        lp[k].exp() * (q1[k].min(q2[k]) - lambda * lp[k])
                    })
                    .sum();
                t.reward + if t.done { 0.0 } else { self.cfg.gamma * v }
            })
            .collect())
    }

    pub fn update(&mut self, batch: &[&DiscreteTransition]) -> Result<(f64, f64)> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let n = self.actions();
        let b = batch.len();
        let y = self.critic_targets(batch)?;
        let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let x = input(&states, self.spec.aux_dim)?;
        let mut mask = vec![0.0; b * n];
        for (i, t) in batch.iter().enumerate() {
            if t.action >= n {
                return Err(Error::InvalidInput(format!("action {} out of range", t.action)));
            }
            mask[i * n + t.action] = 1.0;
        }

        // Critics.
        let nc = self.net.critic1.len();
        let mut tape = Tape::new();
        let bank = tape.declare_bank(2 * nc);
        let b2 = tape.bank_view(bank, nc);
        let f = tape.constant(x.aux.clone());
        let m = tape.constant(Tensor::new(vec![b, n], mask));
        let yv = tape.constant(Tensor::new(vec![b, 1], y));
        let mut total = None;
        for (p, bk) in [(&self.net.critic1, bank), (&self.net.critic2, b2)] {
            let q = self.spec.critic_head(&mut tape, Bound::trainable(p, bk), f, None);
            let qa = tape.mul(q, m);
            let qa = tape.sum_cols(qa);
            let r = tape.sub(qa, yv);
            let r2 = tape.square(r);
            let l = tape.mean(r2);
            total = Some(match total {
                None => l,
                Some(t) => tape.add(t, l),
            });
        }
        let closs = total.expect("two critics");
        let cg = tape.backward(closs)?.bank(bank).to_vec();
        let critic_loss = tape.value(closs).data[0];

        // Actor: Σ_a π(a|s)[λ log π(a|s) − min_i Q_i(s, a)], critics frozen.
        let mut tape = Tape::new();
        let ab = tape.declare_bank(self.net.actor.len());
        let f = tape.constant(x.aux);
        let logits = self.spec.actor_logits(&mut tape, Bound::trainable(&self.net.actor, ab), f);
        let lp = tape.log_softmax(logits);
        let p = tape.exp(lp);
        let q1 = self.spec.critic_head(&mut tape, Bound::frozen(&self.net.critic1), f, None);
        let q2 = self.spec.critic_head(&mut tape, Bound::frozen(&self.net.critic2), f, None);
        let q = tape.min(q1, q2);
        let scaled = tape.scale(lp, self.cfg.temperature);
        let inner = tape.sub(scaled, q);
        let w = tape.mul(p, inner);
        let per = tape.sum_cols(w);
        let aloss = tape.mean(per);
        let ag = tape.backward(aloss)?.bank(ab).to_vec();
        let actor_loss = tape.value(aloss).data[0];

        let mut flat = [self.net.critic1.data.as_slice(), &self.net.critic2.data].concat();
        self.critic_opt.step(&mut flat, &cg);
        self.net.critic1.data.copy_from_slice(&flat[..nc]);
        self.net.critic2.data.copy_from_slice(&flat[nc..]);
        self.actor_opt.step(&mut self.net.actor.data, &ag);
        super::learner::soft_update(&mut self.target_critic1.data, &self.net.critic1.data, self.cfg.tau);
        super::learner::soft_update(&mut self.target_critic2.data, &self.net.critic2.data, self.cfg.tau);
        self.updates += 1;
        Ok((critic_loss, actor_loss))
    }
}

/// Finite MDP with deterministic transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    /// `next[s][a]`.
    pub next: Vec<Vec<usize>>,
    pub reward: Vec<Vec<f64>>,
}

impl TabularMdp {
    pub fn states(&self) -> usize {
        self.next.len()
    }

    pub fn actions(&self) -> usize {
        self.next[0].len()
    }

    /// Five states on a ring with actions left, stay, right; rewards differ per
    /// state-action so the soft optimum is not degenerate.
    pub fn ring5() -> Self {
        let n = 5;
        let next = (0..n).map(|s| vec![(s + n - 1) % n, s, (s + 1) % n]).collect();
        let reward = vec![
            vec![0.0, 0.1, 0.3],
            vec![0.2, 0.0, 0.5],
            vec![-0.2, 0.4, 1.0],
            vec![0.6, -0.1, 0.0],
            vec![0.3, 0.2, -0.5],
        ];
        Self { next, reward }
    }

    pub fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.states()];
        v[s] = 1.0;
        v
    }

    /// Soft value iteration: `Q(s,a) = r + γ·λ·ln Σ_a′ exp(Q(s′,a′)/λ)` iterated to
    /// convergence.
    pub fn soft_value_iteration(&self, gamma: f64, lambda: f64, tol: f64) -> Vec<Vec<f64>> {
        let (ns, na) = (self.states(), self.actions());
        let mut q = vec![vec![0.0; na]; ns];
        loop {
            let v: Vec<f64> = q
                .iter()
                .map(|row| {
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    m + lambda * row.iter().map(|x| ((x - m) / lambda).exp()).sum::<f64>().ln()
                })
                .collect();
            let mut delta: f64 = 0.0;
            for s in 0..ns {
                for a in 0..na {
                    let new = self.reward[s][a] + gamma * v[self.next[s][a]];
                    delta = delta.max((new - q[s][a]).abs());
                    q[s][a] = new;
                }
            }
            if delta < tol {
                return q;
            }
        }
    }
}

/// Trains a tabular discrete learner on `mdp` from uniformly explored experience and
/// returns the learner with the sup-norm gap to soft value iteration.
pub fn train_tabular(mdp: &TabularMdp, cfg: DiscreteConfig, updates: usize, seed: u64) -> Result<(DiscreteLearner, f64)> {
    let spec = NetSpec {
        encoder: None,
        aux_dim: mdp.states(),
        action_dim: 1,
        hidden: vec![],
        activation: crate::approx::Activation::Relu,
        head: HeadKind::Discrete { actions: mdp.actions() },
    };
    let mut learner = DiscreteLearner::new(spec, cfg.clone(), seed)?;
    // Deterministic dynamics: one copy of every transition covers the whole MDP.
    let data: Vec<DiscreteTransition> = (0..mdp.states())
        .flat_map(|s| {
            (0..mdp.actions()).map(move |a| (s, a))
        })
        .map(|(s, a)| DiscreteTransition {
            state: mdp.one_hot(s),
            action: a,
            reward: mdp.reward[s][a],
            next_state: mdp.one_hot(mdp.next[s][a]),
            done: false,
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for _ in 0..updates {
        let batch: Vec<&DiscreteTransition> = (0..cfg.batch_size).map(|_| &data[rng.gen_range(0..data.len())]).collect();
        learner.update(&batch)?;
    }
    let oracle = mdp.soft_value_iteration(cfg.gamma, cfg.temperature, 1e-12);
    let states: Vec<Vec<f64>> = (0..mdp.states()).map(|s| mdp.one_hot(s)).collect();
    let refs: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
    let (q1, q2) = learner.q_values(&refs)?;
    let mut gap: f64 = 0.0;
    for s in 0..mdp.states() {
        for a in 0..mdp.actions() {
            gap = gap.max((q1[s][a] - oracle[s][a]).abs()).max((q2[s][a] - oracle[s][a]).abs());
        }
    }
    Ok((learner, gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::Activation;

    fn chain_learner() -> DiscreteLearner {
        let spec = NetSpec {
            encoder: None,
            aux_dim: 3,
            action_dim: 1,
            hidden: vec![],
            activation: Activation::Relu,
            head: HeadKind::Discrete { actions: 2 },
        };
        let cfg = DiscreteConfig { gamma: 0.9, temperature: 0.5, ..Default::default() };
        DiscreteLearner::new(spec, cfg, 0).unwrap()
    }

    /// Chain s0 → s1 → s2 (terminal). Both actions move right; action 0 pays 1,
    /// action 1 pays 0. Fixed uniform policy, so log π = −ln 2 everywhere and
    ///   Q(s1, a) = r(a)                       (next state terminal)
    ///   V(s1)    = ½(1 + 0) + λ ln 2
    ///   Q(s0, a) = r(a) + γ V(s1).
    #[test]
    fn chain_targets_match_hand_solved_values() {
        let mut l = chain_learner();
        let (g, lam) = (0.9, 0.5);
        let v1 = 0.5 + lam * std::f64::consts::LN_2;
        let q = [[1.0 + g * v1, g * v1], [1.0, 0.0], [0.0, 0.0]];
        // Linear tabular heads: weight [2 actions × 3 states], bias 2.
        let mut w = vec![0.0; 8];
        for s in 0..3 {
            for a in 0..2 {
                w[a * 3 + s] = q[s][a];
            }
        }
        l.target_critic1.data = w.clone();
        l.target_critic2.data = w;
        l.net.actor.data = vec![0.0; 8];
        let oh = |s: usize| {
            let mut v = vec![0.0; 3];
            v[s] = 1.0;
            v
        };
        let ts = [
            DiscreteTransition { state: oh(0), action: 0, reward: 1.0, next_state: oh(1), done: false },
            DiscreteTransition { state: oh(0), action: 1, reward: 0.0, next_state: oh(1), done: false },
            DiscreteTransition { state: oh(1), action: 0, reward: 1.0, next_state: oh(2), done: true },
            DiscreteTransition { state: oh(1), action: 1, reward: 0.0, next_state: oh(2), done: true },
        ];
        let refs: Vec<&DiscreteTransition> = ts.iter().collect();
        let y = l.critic_targets(&refs).unwrap();
        let want = [q[0][0], q[0][1], q[1][0], q[1][1]];
        for (a, b) in y.iter().zip(want) {
            assert!((a - b).abs() < 1e-10, "{y:?}");
        }
    }

    #[test]
    fn soft_value_iteration_satisfies_its_own_fixed_point() {
        let mdp = TabularMdp::ring5();
        let q = mdp.soft_value_iteration(0.9, 0.2, 1e-13);
        for s in 0..5 {
            for a in 0..3 {
                let s2 = mdp.next[s][a];
                let v = 0.2 * q[s2].iter().map(|x| (x / 0.2).exp()).sum::<f64>().ln();
                assert!((q[s][a] - mdp.reward[s][a] - 0.9 * v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn short_tabular_run_moves_towards_oracle() {
        let mdp = TabularMdp::ring5();
        let cfg = DiscreteConfig { gamma: 0.9, lr: 1e-2, tau: 0.05, temperature: 0.2, batch_size: 32 };
        let (_, early) = train_tabular(&mdp, cfg.clone(), 10, 1).unwrap();
        let (_, later) = train_tabular(&mdp, cfg, 1500, 1).unwrap();
        assert!(later < early, "{later} vs {early}");
    }
}

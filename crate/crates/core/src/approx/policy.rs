//! Tanh-squashed diagonal Gaussian.
//!
//! With `u = mean + std·ε` and `a = tanh(u)`, the log-density of `a` is the Gaussian
//! log-density of `u` minus `Σ ln(1 − tanh²u)`. The correction is evaluated as
//! `2(ln 2 − u − softplus(−2u))`, which stays finite for large `|u|`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::tape::{softplus, Tape, Tensor, Var};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

fn tanh_correction(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Action and log-probability for given standard-normal noise.
pub fn squash_with_noise(mean: &[f64], log_std: &[f64], eps: &[f64]) -> (Vec<f64>, f64) {
    let mut action = Vec::with_capacity(mean.len());
    let mut lp = 0.0;
    for ((&m, &ls), &e) in mean.iter().zip(log_std).zip(eps) {
        let u = m + ls.exp() * e;
        action.push(u.tanh());
        lp += -0.5 * e * e - ls - HALF_LN_2PI - tanh_correction(u);
    }
    (action, lp)
}

pub fn sample_squashed(mean: &[f64], log_std: &[f64], rng: &mut impl Rng) -> (Vec<f64>, f64) {
    let eps: Vec<f64> = (0..mean.len()).map(|_| rng.sample(StandardNormal)).collect();
    squash_with_noise(mean, log_std, &eps)
}

/// Log-density of an action strictly inside `(−1, 1)^n`.
pub fn squashed_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((&m, &ls), &a)| {
            let u = a.atanh();
            let z = (u - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LN_2PI - tanh_correction(u)
        })
        .sum()
}

/// Reparameterized sample on a tape: returns the action `[B, n]` and log-probability
/// `[B, 1]`. `eps` is the noise `[B, n]`, fixed ahead of time.
pub fn tape_squashed(tape: &mut Tape, mean: Var, log_std: Var, eps: &Tensor) -> (Var, Var) {
    let e = tape.constant(eps.clone());
    let std = tape.exp(log_std);
    let noise = tape.mul(std, e);
    let u = tape.add(mean, noise);
    let action = tape.tanh(u);
    // Per element: −½ε² − ln2π/2 is constant; the rest depends on parameters.
    let base = Tensor::new(eps.shape.clone(), eps.data.iter().map(|e| -0.5 * e * e - HALF_LN_2PI).collect());
    let base = tape.constant(base);
    let neg2u = tape.scale(u, -2.0);
    let sp = tape.softplus(neg2u);
    let us = tape.add(u, sp);
    let corr = tape.scale(us, 2.0);
    let corr = tape.add_scalar(corr, -2.0 * std::f64::consts::LN_2);
    // log π = base − log_std − corr_total, where corr_total = 2ln2 − 2(u + softplus(−2u)).
    let t = tape.sub(base, log_std);
    let t = tape.add(t, corr);
    let lp = tape.sum_cols(t);
    (action, lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Density of the squashed standard normal on (−1, 1), evaluated directly from
    /// the change-of-variables formula rather than through the stable rewrite.
    fn density(a: f64) -> f64 {
        let u = a.atanh();
        (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt() / (1.0 - a * a)
    }

    /// Composite Simpson on (−1, 1) after substituting a = tanh(u), u ∈ [−L, L].
    fn integrate_u(f: impl Fn(f64) -> f64) -> f64 {
        let (l, n) = (12.0, 20_000);
        let h = 2.0 * l / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let u = -l + i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(u);
        }
        s * h / 3.0
    }

    #[test]
    fn density_integrates_to_one() {
        // da = (1 − tanh²u) du
        let total = integrate_u(|u| {
            let a = u.tanh();
            let p = squashed_log_prob(&[0.0], &[0.0], &[a]).exp();
            p * (1.0 - a * a)
        });
        assert!((total - 1.0).abs() < 1e-3, "{total}");
        let shifted = integrate_u(|u| {
            let a = u.tanh();
            squashed_log_prob(&[0.7], &[-0.5], &[a]).exp() * (1.0 - a * a)
        });
        assert!((shifted - 1.0).abs() < 1e-3, "{shifted}");
    }

    #[test]
    fn log_prob_agrees_with_direct_density() {
        for a in [-0.99, -0.5, 0.0, 0.3, 0.95] {
            let lp = squashed_log_prob(&[0.0], &[0.0], &[a]);
            assert!((lp - density(a).ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn monte_carlo_mean_log_prob_matches_quadrature() {
        let expected = integrate_u(|u| {
            let a = u.tanh();
            let p = density(a);
            p * p.ln() * (1.0 - a * a)
        });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 100_000;
        let mc = (0..n).map(|_| sample_squashed(&[0.0], &[0.0], &mut rng).1).sum::<f64>() / n as f64;
        assert!((mc - expected).abs() < 1e-2, "mc {mc} quadrature {expected}");
    }

    #[test]
    fn vanishing_std_concentrates() {
        let mut prev = f64::NEG_INFINITY;
        for ls in [0.0, -2.0, -5.0, -10.0, -20.0] {
            let (a, lp) = squash_with_noise(&[0.4], &[ls], &[0.5]);
            assert!(lp > prev);
            prev = lp;
            if ls <= -10.0 {
                assert!((a[0] - 0.4f64.tanh()).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn tape_matches_plain_evaluation() {
        let mean = Tensor::new(vec![2, 2], vec![0.3, -1.2, 2.5, 0.0]);
        let ls = Tensor::new(vec![2, 2], vec![-0.5, 0.2, -1.0, 1.5]);
        let eps = Tensor::new(vec![2, 2], vec![0.1, -0.7, 1.3, 2.0]);
        let mut t = Tape::new();
        let m = t.constant(mean.clone());
        let s = t.constant(ls.clone());
        let (a, lp) = tape_squashed(&mut t, m, s, &eps);
        for r in 0..2 {
            let (pa, plp) = squash_with_noise(&mean.data[2 * r..2 * r + 2], &ls.data[2 * r..2 * r + 2], &eps.data[2 * r..2 * r + 2]);
            assert_eq!(&t.value(a).data[2 * r..2 * r + 2], pa.as_slice());
            assert!((t.value(lp).data[r] - plp).abs() < 1e-12);
        }
    }

    #[test]
    fn extreme_pre_activation_stays_finite() {
        let (a, lp) = squash_with_noise(&[40.0, -40.0], &[2.0, 2.0], &[3.0, -3.0]);
        assert!(lp.is_finite());
        assert!(a.iter().all(|v| v.abs() <= 1.0));
    }
}

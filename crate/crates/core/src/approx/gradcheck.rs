//! Central finite-difference checks of the reverse sweep.
//!
//! Relative error is `|analytic − numeric| / max(|analytic|, |numeric|, 1e-6)`, the
//! floor keeping coordinates with vanishing gradient from dominating.
//!
//! In a large relu network a perturbation of `STEP` can push some pre-activation across
//! zero, and the difference quotient then mixes two linear pieces. Each probe compares
//! the branch signature of the tape at `x ± h` with the unperturbed one and shrinks `h`
//! tenfold (down to `MIN_STEP`) until all three agree.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::net::{Bound, NetInput, NetSpec, ParamVector, Part};
use super::policy::tape_squashed;
use super::tape::{BankId, Tape, Tensor, Var};

pub const STEP: f64 = 1e-5;
pub const MIN_STEP: f64 = 1e-7;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub coordinates: usize,
    pub max_rel_error: f64,
    /// Coordinates whose step had to shrink to stay on one smooth piece.
    pub refined: usize,
}

/// Checks `build`, which must record a scalar loss of the parameters in one bank.
/// `coords` limits how many coordinates are perturbed (all when `None`).
pub fn check_scalar_fn<F>(name: &str, params: &[f64], coords: Option<&[usize]>, build: F) -> CheckResult
where
    F: Fn(&mut Tape, BankId, &[f64]) -> Var,
{
    let n = params.len();
    let eval = |p: &[f64]| {
        let mut t = Tape::new();
        let b = t.declare_bank(n);
        let l = build(&mut t, b, p);
        (t.value(l).data[0], t.branch_signature())
    };
    let mut tape = Tape::new();
    let bank = tape.declare_bank(n);
    let loss = build(&mut tape, bank, params);
    let base = tape.branch_signature();
    let grads = tape.backward(loss).expect("loss recorded");
    let g = grads.bank(bank);
    let all: Vec<usize> = (0..n).collect();
    let idx = coords.unwrap_or(&all);
    let mut worst: f64 = 0.0;
    let mut refined = 0;
    let mut p = params.to_vec();
    for &i in idx {
        let orig = p[i];
        let mut h = STEP;
        let numeric = loop {
            p[i] = orig + h;
            let (up, su) = eval(&p);
            p[i] = orig - h;
            let (down, sd) = eval(&p);
            p[i] = orig;
            if (su == base && sd == base) || h / 10.0 < MIN_STEP * 0.5 {
                break (up - down) / (2.0 * h);
            }
            h /= 10.0;
        };
        if h < STEP {
            refined += 1;
        }
        worst = worst.max(relative_error(g[i], numeric));
    }
    CheckResult { name: name.to_string(), coordinates: idx.len(), max_rel_error: worst, refined }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Every primitive in isolation on small random inputs.
pub fn layer_checks(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let x = Tensor::new(vec![3, 4], uniform(&mut rng, 12, -1.0, 1.0));
    let p = uniform(&mut rng, 5 * 4 + 5, -1.0, 1.0);
    let weights = Tensor::new(vec![3, 5], uniform(&mut rng, 15, -1.0, 1.0));
    out.push(check_scalar_fn("linear", &p, None, |t, b, p| {
        let xi = t.constant(x.clone());
        let w = t.param(b, 0, vec![5, 4], &p[..20]);
        let bias = t.param(b, 20, vec![5], &p[20..]);
        let y = t.linear(xi, w, bias);
        weighted_sum(t, y, &weights)
    }));

    for (k, s, pad) in [(4, 4, 0), (3, 2, 1), (3, 1, 1)] {
        let (cin, cout, hw) = (2, 3, 8);
        let nw = cout * cin * k * k;
        let p = uniform(&mut rng, nw + cout + 2 * cin * hw * hw, -1.0, 1.0);
        let ho = (hw + 2 * pad - k) / s + 1;
        let wts = Tensor::new(vec![2, cout, ho, ho], uniform(&mut rng, 2 * cout * ho * ho, -1.0, 1.0));
        out.push(check_scalar_fn(&format!("conv k{k} s{s} p{pad}"), &p, None, |t, b, p| {
            let xi = t.param(b, nw + cout, vec![2, cin, hw, hw], &p[nw + cout..]);
            let w = t.param(b, 0, vec![cout, cin, k, k], &p[..nw]);
            let bias = t.param(b, nw, vec![cout], &p[nw..nw + cout]);
            let y = t.conv2d(xi, w, bias, s, pad);
            weighted_sum(t, y, &wts)
        }));
    }

    // Keep inputs away from the non-differentiable points of relu, clamp and min.
    let away = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                let v: f64 = rng.gen_range(0.05..1.5);
                if rng.gen_bool(0.5) {
                    -v
                } else {
                    v
                }
            })
            .collect()
    };
    let w6 = Tensor::new(vec![2, 3], uniform(&mut rng, 6, -1.0, 1.0));
    type Unary = fn(&mut Tape, Var) -> Var;
    let unaries: [(&str, Unary); 8] = [
        ("relu", |t, x| t.relu(x)),
        ("tanh", |t, x| t.tanh(x)),
        ("exp", |t, x| t.exp(x)),
        ("softplus", |t, x| t.softplus(x)),
        ("square", |t, x| t.square(x)),
        ("scale", |t, x| t.scale(x, -1.7)),
        ("add_scalar", |t, x| t.add_scalar(x, 0.4)),
        ("clamp", |t, x| t.clamp(x, -1.0, 1.0)),
    ];
    for (name, f) in unaries {
        let p = away(&mut rng, 6);
        let p: Vec<f64> = if name == "clamp" {
            p.iter().map(|v| if (v.abs() - 1.0).abs() < 0.05 { v * 0.8 } else { *v }).collect()
        } else {
            p
        };
        out.push(check_scalar_fn(name, &p, None, |t, b, p| {
            let x = t.param(b, 0, vec![2, 3], p);
            let y = f(t, x);
            weighted_sum(t, y, &w6)
        }));
    }
    type Binary = fn(&mut Tape, Var, Var) -> Var;
    let binaries: [(&str, Binary); 4] = [
        ("add", |t, a, b| t.add(a, b)),
        ("sub", |t, a, b| t.sub(a, b)),
        ("mul", |t, a, b| t.mul(a, b)),
        ("min", |t, a, b| t.min(a, b)),
    ];
    for (name, f) in binaries {
        let mut p = away(&mut rng, 12);
        if name == "min" {
            for i in 0..6 {
                if (p[i] - p[i + 6]).abs() < 0.05 {
                    p[i + 6] += 0.2;
                }
            }
        }
        out.push(check_scalar_fn(name, &p, None, |t, b, p| {
            let x = t.param(b, 0, vec![2, 3], &p[..6]);
            let y = t.param(b, 6, vec![2, 3], &p[6..]);
            let z = f(t, x, y);
            weighted_sum(t, z, &w6)
        }));
    }

    let p = uniform(&mut rng, 2 * 3 * 3 * 3, -1.0, 1.0);
    let w23 = Tensor::new(vec![2, 3], uniform(&mut rng, 6, -1.0, 1.0));
    out.push(check_scalar_fn("global_avg_pool", &p, None, |t, b, p| {
        let x = t.param(b, 0, vec![2, 3, 3, 3], p);
        let y = t.global_avg_pool(x);
        weighted_sum(t, y, &w23)
    }));
    let p = uniform(&mut rng, 10, -1.0, 1.0);
    out.push(check_scalar_fn("concat+columns", &p, None, |t, b, p| {
        let x = t.param(b, 0, vec![2, 3], &p[..6]);
        let y = t.param(b, 6, vec![2, 2], &p[6..]);
        let c = t.concat(x, y);
        let c = t.columns(c, 1, 3);
        weighted_sum(t, c, &w23)
    }));
    let p = uniform(&mut rng, 6, -2.0, 2.0);
    out.push(check_scalar_fn("log_softmax", &p, None, |t, b, p| {
        let x = t.param(b, 0, vec![2, 3], p);
        let y = t.log_softmax(x);
        weighted_sum(t, y, &w23)
    }));
    let p = uniform(&mut rng, 6, -2.0, 2.0);
    out.push(check_scalar_fn("sum_cols+mean", &p, None, |t, b, p| {
        let x = t.param(b, 0, vec![2, 3], p);
        let s = t.sum_cols(x);
        let s = t.square(s);
        t.mean(s)
    }));

    let p = uniform(&mut rng, 8, -0.8, 0.8);
    let eps = Tensor::new(vec![2, 2], uniform(&mut rng, 4, -1.5, 1.5));
    let w22 = Tensor::new(vec![2, 2], uniform(&mut rng, 4, -1.0, 1.0));
    out.push(check_scalar_fn("squashed_sample", &p, None, |t, b, p| {
        let m = t.param(b, 0, vec![2, 2], &p[..4]);
        let s = t.param(b, 4, vec![2, 2], &p[4..]);
        let (a, lp) = tape_squashed(t, m, s, &eps);
        let wa = weighted_sum(t, a, &w22);
        let ml = t.mean(lp);
        t.add(wa, ml)
    }));
    out
}

fn weighted_sum(t: &mut Tape, y: Var, w: &Tensor) -> Var {
    let wv = t.constant(w.clone());
    let p = t.mul(y, wv);
    let flat = flatten(t, p);
    let s = t.sum_cols(flat);
    t.mean(s)
}

/// Sums image planes so 4-D tensors reduce to `[B, C]`.
fn flatten(t: &mut Tape, x: Var) -> Var {
    let v = t.value(x);
    if v.shape.len() == 2 {
        return x;
    }
    let plane: usize = v.shape[2..].iter().product();
    let pooled = t.global_avg_pool(x);
    t.scale(pooled, plane as f64)
}

/// Random input batch matching `spec`.
pub fn random_input(spec: &NetSpec, batch: usize, rng: &mut impl Rng) -> NetInput {
    let image = spec.encoder.as_ref().map(|e| {
        let n = batch * e.in_channels * e.rows * e.cols;
        Tensor::new(vec![batch, e.in_channels, e.rows, e.cols], (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
    });
    let aux = Tensor::new(vec![batch, spec.aux_dim], (0..batch * spec.aux_dim).map(|_| rng.gen_range(0.0..1.0)).collect());
    NetInput { image, aux }
}

fn sample_coords(segments: &[(usize, usize)], per_segment: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = Vec::new();
    for &(off, len) in segments {
        if len <= per_segment {
            out.extend(off..off + len);
        } else {
            out.extend((0..per_segment).map(|_| off + rng.gen_range(0..len)));
        }
    }
    out
}

/// Full actor and critic passes, checked with respect to every parameter group.
///
/// Loss: `Σ w·mean + Σ w·log_std + mean(log π) + Σ w·Q` with fixed reparameterization
/// noise, so every group receives gradient through at least one path.
pub fn network_checks(spec: &NetSpec, batch: usize, per_segment: Option<usize>, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc = ParamVector::init(spec.layout(Part::Encoder), &mut rng);
    let actor = ParamVector::init(spec.layout(Part::Actor), &mut rng);
    let critic = ParamVector::init(spec.layout(Part::Critic), &mut rng);
    let input = random_input(spec, batch, &mut rng);
    let a = spec.action_dim;
    let eps = Tensor::new(vec![batch, a], uniform(&mut rng, batch * a, -1.5, 1.5));
    let w_mean = Tensor::new(vec![batch, a], uniform(&mut rng, batch * a, -1.0, 1.0));
    let w_std = Tensor::new(vec![batch, a], uniform(&mut rng, batch * a, -1.0, 1.0));
    let w_q = Tensor::new(vec![batch, 1], uniform(&mut rng, batch, -1.0, 1.0));

    let ne = enc.len();
    let na = actor.len();
    let all: Vec<f64> = [enc.data.clone(), actor.data.clone(), critic.data.clone()].concat();
    let build = |t: &mut Tape, b: BankId, p: &[f64]| {
        let e = ParamVector { data: p[..ne].to_vec(), layout: enc.layout.clone() };
        let ac = ParamVector { data: p[ne..ne + na].to_vec(), layout: actor.layout.clone() };
        let cr = ParamVector { data: p[ne + na..].to_vec(), layout: critic.layout.clone() };
        // One bank spans all three groups, so shift the offsets of actor and critic.
        let (be, ba) = (b, t.bank_view(b, ne));
        let bc = t.bank_view(b, ne + na);
        let f = spec.encode(t, Bound::trainable(&e, be), &input).expect("input matches");
        let (mean, log_std) = spec.actor_head(t, Bound::trainable(&ac, ba), f);
        let (act, lp) = tape_squashed(t, mean, log_std, &eps);
        let q = spec.critic_head(t, Bound::trainable(&cr, bc), f, Some(act));
        let l1 = weighted_sum(t, mean, &w_mean);
        let l2 = weighted_sum(t, log_std, &w_std);
        let l3 = t.mean(lp);
        let l4 = weighted_sum(t, q, &w_q);
        let s = t.add(l1, l2);
        let s = t.add(s, l3);
        t.add(s, l4)
    };
    let mut segs = Vec::new();
    for (base, pv) in [(0, &enc), (ne, &actor), (ne + na, &critic)] {
        for s in &pv.layout.segments {
            segs.push((base + s.offset, s.len()));
        }
    }
    let coords = per_segment.map(|k| sample_coords(&segs, k, &mut rng));
    vec![check_scalar_fn("actor+critic network", &all, coords.as_deref(), build)]
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::net::{Activation, ConvStage, EncoderSpec, HeadKind};

    #[test]
    fn every_layer_kind_passes() {
        for r in layer_checks(0) {
            assert!(r.max_rel_error < 1e-4, "{r:?}");
        }
    }

    #[test]
    fn small_full_network_passes_on_all_coordinates() {
        let spec = NetSpec {
            encoder: Some(EncoderSpec {
                in_channels: 3,
                rows: 8,
                cols: 8,
                stages: vec![
                    ConvStage { channels: 3, kernel: 2, stride: 2, pad: 0 },
                    ConvStage { channels: 4, kernel: 3, stride: 2, pad: 1 },
                ],
                residual_blocks: 1,
            }),
            aux_dim: 1,
            action_dim: 2,
            hidden: vec![6],
            activation: Activation::Relu,
            head: HeadKind::Continuous,
        };
        let total = spec.layout(Part::Encoder).len() + spec.layout(Part::Actor).len() + spec.layout(Part::Critic).len();
        assert!(total <= 1000, "{total}");
        let r = &network_checks(&spec, 2, None, 3)[0];
        assert_eq!(r.coordinates, total);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn step_shrinks_across_a_relu_kink() {
        // Pre-activation 4e-6 sits inside ±STEP of the kink; the plain central quotient
        // would read a slope of about 0.7 instead of 1.
        let r = check_scalar_fn("relu near zero", &[4e-6], None, |t, b, p| {
            let x = t.param(b, 0, vec![1], p);
            let y = t.relu(x);
            t.mean(y)
        });
        assert_eq!(r.refined, 1);
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }
}

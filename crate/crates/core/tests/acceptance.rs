//! Acceptance suite. Prints one PASS/FAIL line per criterion straight to stderr so the
//! lines survive the test harness's output capture.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use moddrive::approx::gradcheck::{layer_checks, network_checks};
use moddrive::approx::NetSpec;
use moddrive::bench::{
    compute_mpi, compute_smoothness, compute_sr, EpisodeLog, Intervention, InterventionKind, LogHeader, StepRecord,
};
use moddrive::cli::{cmd_eval, cmd_train, Common};
use moddrive::control::{nyquist_gain, FirstOrderLag, LowPass, Pid, PidGains};
use moddrive::disttrain::{reduce_gradients, run_lockstep, OptimizerRank, Topology};
use moddrive::reward::{total_reward, RewardConfig};
use moddrive::sac::discrete::train_tabular;
use moddrive::sac::env::{point_mass_oracle, point_mass_score, point_mass_starts};
use moddrive::sac::{
    train, ActingPolicy, ActionMode, DiscreteConfig, EnvRunner, InputEncoding, Learner, LocalReducer, PointMass,
    ReplayBuffer, SacConfig, TabularMdp, TrainHooks, TrainOptions, UpdateStats,
};
use moddrive::simworld::{Action, StepEvents, VehicleParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Outcome of one criterion. `transcript` holds every deterministic number the
/// criterion produced, bit-exact, for the determinism audit.
struct Outcome {
    pass: bool,
    detail: String,
    transcript: String,
}

fn report(n: usize, title: &str, o: &Outcome) {
    let line = format!("{} criterion {n:>2}: {title}: {}\n", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn bits(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{:016x}", x.to_bits())).collect::<Vec<_>>().join(",")
}

// 1. Reward exactness.

const REWARD_TOL: f64 = 1e-12;

fn criterion_reward() -> Outcome {
    let cfg = RewardConfig::default();
    let none = StepEvents::default();
    let col = StepEvents { collision: true, ..none };
    let solid = StepEvents { crossed_solid: true, ..none };
    let double = StepEvents { crossed_double_solid: true, ..none };
    let all = StepEvents { collision: true, crossed_solid: true, crossed_double_solid: true, ..none };
    let both_lines = StepEvents { crossed_solid: true, crossed_double_solid: true, ..none };
    // (v, d, α, events, value worked out by hand for v_min 1, v_target 5, v_max 10,
    // d_max 1.75, α_max π/2, weights 25/12/15)
    let table = [
        (0.0, 0.0, 0.0, none, 0.0),
        (0.5, 0.0, 0.0, none, 0.5),
        (1.0, 0.0, 0.0, none, 1.0),
        (3.0, 0.0, 0.0, none, 1.0),
        (5.0, 0.0, 0.0, none, 1.0),
        (7.5, 0.0, 0.0, none, 0.5),
        (10.0, 0.0, 0.0, none, 0.0),
        (5.0, 0.875, 0.0, none, 0.5),
        (5.0, 1.75, 0.0, none, 0.0),
        (5.0, 3.5, 0.0, none, 0.0),
        (5.0, 0.0, FRAC_PI_4, none, 0.5),
        (5.0, 0.0, FRAC_PI_2, none, 0.0),
        (5.0, 0.0, PI, none, 0.0),
        (0.5, 0.875, FRAC_PI_4, none, 0.125),
        (7.5, 0.4375, FRAC_PI_8, none, 0.28125),
        (0.25, 0.21875, 0.0, none, 0.21875),
        (5.0, 0.0, 0.0, col, -24.0),
        (5.0, 0.0, 0.0, solid, -11.0),
        (5.0, 0.0, 0.0, double, -14.0),
        (0.0, 0.0, 0.0, all, -52.0),
        (2.5, 1.3125, 3.0 * FRAC_PI_8, col, -24.9375),
        (8.75, 0.0, 0.0, both_lines, -26.75),
        (5.0, 3.5, PI, all, -52.0),
    ];
    let mut worst: f64 = 0.0;
    let mut tr = String::new();
    for (v, d, a, e, want) in table {
        let got = total_reward(v, d, a, &e, &cfg).unwrap_or(f64::NAN);
        worst = worst.max((got - want).abs());
        if got.is_nan() {
            worst = f64::INFINITY;
        }
        let _ = write!(tr, "{:016x};", got.to_bits());
    }
    // The penalty weights are the published ones.
    let weights = (cfg.w_collision, cfg.w_solid, cfg.w_double_solid) == (25.0, 12.0, 15.0);
    Outcome {
        pass: worst <= REWARD_TOL && weights && table.len() >= 20,
        detail: format!("{} tuples, max |error| {worst:.1e} (tol {REWARD_TOL:.0e}), penalty weights 25/12/15: {weights}", table.len()),
        transcript: tr,
    }
}

// 2. Gradient suite.

const GRAD_TOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(60);

fn criterion_gradients() -> Outcome {
    let t0 = Instant::now();
    let mut results = layer_checks(0);
    results.extend(network_checks(&NetSpec::default_driving(), 2, Some(4), 1));
    let elapsed = t0.elapsed();
    let worst = results.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let failing: Vec<&str> = results.iter().filter(|r| !(r.max_rel_error < GRAD_TOL)).map(|r| r.name.as_str()).collect();
    Outcome {
        pass: failing.is_empty() && elapsed < GRAD_BUDGET,
        detail: format!(
            "{} checks incl. the full default actor+critic, worst relative error {worst:.2e} (tol {GRAD_TOL:.0e}), {} probes stepped past a relu kink, {:.1}s (budget 60s){}",
            results.len(),
            results.iter().map(|r| r.refined).sum::<usize>(),
            elapsed.as_secs_f64(),
            if failing.is_empty() { String::new() } else { format!(", failing: {failing:?}") }
        ),
        transcript: results.iter().map(|r| format!("{}={:016x};", r.name, r.max_rel_error.to_bits())).collect(),
    }
}

// 3. Fully connected share of the default network.

const FC_SHARE_LIMIT: f64 = 0.10;

fn criterion_census() -> Outcome {
    let c = NetSpec::default_driving().census();
    // Independent count from the layer shapes: conv stages (k·k·cin·cout + cout),
    // residual blocks (two 3×3 convs at the last width), and the FC heads.
    let spec = NetSpec::default_driving();
    let e = spec.encoder.as_ref().expect("default net has an encoder");
    let mut conv = 0;
    let mut cin = e.in_channels;
    for s in &e.stages {
        conv += s.kernel * s.kernel * cin * s.channels + s.channels;
        cin = s.channels;
    }
    conv += e.residual_blocks * 2 * (9 * cin * cin + cin);
    let share = c.fc_fraction();
    let counts_agree = c.conv == conv;
    Outcome {
        pass: share < FC_SHARE_LIMIT && counts_agree,
        detail: format!(
            "conv {} (independent count {conv}), fully connected {}, FC share {:.2}% (limit {:.0}%)",
            c.conv,
            c.fully_connected,
            100.0 * share,
            100.0 * FC_SHARE_LIMIT
        ),
        transcript: format!("{};{};{:016x}", c.conv, c.fully_connected, share.to_bits()),
    }
}

// 4. Tabular soft Q against soft value iteration.

const TABULAR_TOL: f64 = 5e-2;
const TABULAR_BUDGET: Duration = Duration::from_secs(300);

fn criterion_tabular() -> Outcome {
    let t0 = Instant::now();
    let mdp = TabularMdp::ring5();
    let cfg = DiscreteConfig { gamma: 0.9, lr: 1e-2, tau: 0.05, temperature: 0.2, batch_size: 32 };
    let gap = train_tabular(&mdp, cfg, 20_000, 0).map(|(_, g)| g).unwrap_or(f64::INFINITY);
    let elapsed = t0.elapsed();
    Outcome {
        pass: gap < TABULAR_TOL && elapsed < TABULAR_BUDGET,
        detail: format!(
            "5 states x 3 actions, sup-norm gap to soft value iteration {gap:.2e} (tol {TABULAR_TOL:.0e}), {:.1}s (budget 300s)",
            elapsed.as_secs_f64()
        ),
        transcript: bits(&[gap]),
    }
}

// 5. Point-mass SAC against the scripted oracle.

const POINT_MASS_SHARE: f64 = 0.90;
const POINT_MASS_STEPS: u64 = 30_000;
const POINT_MASS_BUDGET: Duration = Duration::from_secs(600);

fn criterion_point_mass() -> Outcome {
    let t0 = Instant::now();
    let starts = point_mass_starts(21);
    let (_, _, oracle) = point_mass_oracle(&starts);
    let mut scores = Vec::new();
    for seed in 0..5 {
        let cfg = SacConfig { target_entropy: -1.0, ..SacConfig::default() };
        let score = Learner::new(NetSpec::mlp(2, 1, vec![64, 64]), InputEncoding::Vector, cfg, seed).and_then(|mut l| {
            train(PointMass::new(), &mut l, TrainOptions::new(POINT_MASS_STEPS, seed), &mut ())?;
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            point_mass_score(&starts, |o| Ok(l.select_action(o, ActionMode::Deterministic, &mut rng)?[0]))
        });
        scores.push(score.unwrap_or(f64::NEG_INFINITY));
    }
    let elapsed = t0.elapsed();
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[2];
    let share = median / oracle;
    Outcome {
        pass: share >= POINT_MASS_SHARE && elapsed < POINT_MASS_BUDGET,
        detail: format!(
            "median return of 5 seeds {median:.3} vs scripted oracle {oracle:.3}: {:.1}% (need {:.0}%), {POINT_MASS_STEPS} steps, {:.0}s (budget 600s)",
            100.0 * share,
            100.0 * POINT_MASS_SHARE,
            elapsed.as_secs_f64()
        ),
        transcript: bits(&scores),
    }
}

// 6. Distributed equivalence.

const REDUCE_TOL: f64 = 1e-12;

#[derive(Default)]
struct Digests {
    per_update: Vec<[u8; 32]>,
    replicas_agree: bool,
    seen: usize,
}

impl TrainHooks for Digests {
    fn on_update(&mut self, replicas: &[Learner], _: &UpdateStats) {
        let d = replicas[0].digest();
        self.replicas_agree = (self.seen == 0 || self.replicas_agree) && replicas.iter().all(|r| r.digest() == d);
        self.seen += 1;
        self.per_update.push(d);
    }
}

fn small_learner(batch: usize, warmup: usize) -> Learner {
    let cfg = SacConfig { batch_size: batch, warmup_steps: warmup, target_entropy: -1.0, ..SacConfig::default() };
    Learner::new(NetSpec::mlp(2, 1, vec![16]), InputEncoding::Vector, cfg, 11).expect("valid learner")
}

fn criterion_distributed() -> Outcome {
    let lock = |n, k| Topology { env_nodes: n, optimizers: k, lockstep: true, ..Topology::default() };
    // Warmup 100 and a 0.5 update ratio: 2099 steps owe exactly 1000 updates.
    let steps = 100 + 1999;
    let mut reference = small_learner(32, 100);
    let mut a = Digests::default();
    let single = train(PointMass::new(), &mut reference, TrainOptions::new(steps, 5), &mut a);
    let mut b = Digests::default();
    let dist = run_lockstep(&lock(1, 1), |_| Ok(PointMass::new()), small_learner(32, 100), steps, 5, None, &mut b);
    let bitwise = single.is_ok()
        && dist.as_ref().is_ok_and(|r| r.learner.digest() == reference.digest())
        && a.per_update.len() == 1000
        && a.per_update == b.per_update;

    let mut c = Digests::default();
    let two = run_lockstep(&lock(2, 2), |_| Ok(PointMass::new()), small_learner(16, 50), 600, 3, None, &mut c);
    let replicas = two.as_ref().is_ok_and(|r| r.replica_checks == c.seen as u64) && c.seen > 100 && c.replicas_agree;

    // Averaged K=2 update against one update on the concatenated batch.
    let base = small_learner(8, 0);
    let mut buffer = ReplayBuffer::new(1000).expect("buffer");
    let mut runner = EnvRunner::new(PointMass::new(), 1, 0).expect("runner");
    let mut act = ActingPolicy::new(1, 0, 1, u64::MAX);
    for _ in 0..200 {
        let x = act.act(runner.obs()).expect("act");
        buffer.insert(runner.step(x).expect("step").0).expect("insert");
    }
    let mut ranks: Vec<OptimizerRank> = (0..2).map(|k| OptimizerRank::new(k, base.clone(), 9)).collect();
    let batches: Vec<_> = ranks.iter_mut().map(|r| r.sample(&buffer).expect("batch")).collect();
    let mut grads: Vec<_> = ranks.iter().zip(&batches).map(|(r, b)| r.learner.gradients(b).expect("grads")).collect();
    reduce_gradients(&mut grads).expect("reduce");
    let concat = batches[0].concat(&batches[1]);
    // Adam's first step is close to sign(g), so compare the gradients themselves too.
    let whole = base.gradients(&concat).expect("grads");
    let mut grad_diff = (grads[0].temperature - whole.temperature).abs();
    for (p, q) in grads[0].critic.iter().zip(&whole.critic).chain(grads[0].actor.iter().zip(&whole.actor)) {
        grad_diff = grad_diff.max((p - q).abs());
    }
    ranks[0].learner.apply(&grads[0]).expect("apply");
    let mut oracle = base.clone();
    oracle.update(&concat, &mut LocalReducer).expect("oracle update");
    let got = &ranks[0].learner;
    let mut worst: f64 = (got.log_alpha - oracle.log_alpha).abs();
    for (x, y) in [
        (&got.net.encoder, &oracle.net.encoder),
        (&got.net.actor, &oracle.net.actor),
        (&got.net.critic1, &oracle.net.critic1),
        (&got.net.critic2, &oracle.net.critic2),
        (&got.target_critic1, &oracle.target_critic1),
        (&got.target_critic2, &oracle.target_critic2),
    ] {
        for (p, q) in x.data.iter().zip(&y.data) {
            worst = worst.max((p - q).abs());
        }
    }
    let moved = got.net.actor != base.net.actor && batches[0] != batches[1];
    let hexd = |d: &[u8; 32]| d.iter().map(|b| format!("{b:02x}")).collect::<String>();
    Outcome {
        pass: bitwise && replicas && worst < REDUCE_TOL && grad_diff < REDUCE_TOL && moved,
        detail: format!(
            "N=1,K=1 bit-identical over {} updates: {bitwise}; K=2 replicas identical after all {} all-reduces: {replicas}; averaged vs concatenated batch: gradients max |diff| {grad_diff:.1e}, parameters max |diff| {worst:.1e} (tol {REDUCE_TOL:.0e})",
            a.per_update.len(),
            c.seen
        ),
        transcript: format!(
            "{};{};{}",
            a.per_update.last().map(hexd).unwrap_or_default(),
            c.per_update.last().map(hexd).unwrap_or_default(),
            bits(&[worst, grad_diff])
        ),
    }
}

// 7. Control chain.

const SETTLE_BAND: f64 = 0.02;
const PLANT_TOL: f64 = 1e-3;
const NYQUIST_TOL: f64 = 1e-10;

fn criterion_control() -> Outcome {
    let g = PidGains { kp: 2.0, ki: 6.0, kd: 0.0, out_min: -10.0, out_max: 10.0, integral_clamp: 10.0 };
    let (t_plant, dt, steps) = (0.5, 0.1, 200);
    let mut pid = Pid::new(g).expect("gains");
    let mut plant = FirstOrderLag { time_constant: t_plant, y: 0.0 };
    let ys: Vec<f64> = (0..steps).map(|_| plant.advance(pid.step(1.0, plant.y, dt).expect("pid"), dt)).collect();
    // Oracle: the same discrete PI held over each interval, plant integrated by forward
    // Euler at 2000 substeps.
    let mut pid2 = Pid::new(g).expect("gains");
    let mut y = 0.0;
    let mut fine = Vec::with_capacity(steps);
    for _ in 0..steps {
        let u = pid2.step(1.0, y, dt).expect("pid");
        let h = dt / 2000.0;
        for _ in 0..2000 {
            y += h * (u - y) / t_plant;
        }
        fine.push(y);
    }
    let dev = ys.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let settle = ys.iter().rposition(|y| (y - 1.0).abs() > SETTLE_BAND).map_or(0, |i| i + 1);
    let sse = (ys[steps - 1] - 1.0).abs();

    let mut nyq_err: f64 = 0.0;
    for beta in [0.1, 0.3, 0.5, 0.8, 1.0] {
        let mut f = LowPass::new(beta).expect("beta");
        let mut last = 0.0;
        for n in 0..4001 {
            let x = if n % 2 == 0 { 1.0 } else { -1.0 };
            last = f.apply(Action { steering: x, throttle: 0.0 }).steering;
        }
        nyq_err = nyq_err.max((last.abs() - nyquist_gain(beta)).abs());
    }
    Outcome {
        pass: dev < PLANT_TOL && settle < steps && sse < 1e-9 && nyq_err < NYQUIST_TOL,
        detail: format!(
            "PI settles into ±2% after {settle} steps, steady-state error {sse:.1e}, max deviation from fine-step oracle {dev:.1e} (tol {PLANT_TOL:.0e}); Nyquist attenuation error {nyq_err:.1e} (tol {NYQUIST_TOL:.0e})"
        ),
        transcript: bits(&[dev, sse, nyq_err, ys[steps - 1]]) + &format!(";{settle}"),
    }
}

// 8. Metrics on hand-made logs.

fn synthetic_log(route: f64, speeds: &[f64], steering: &[f64], step_len: f64, interventions: &[(usize, f64)]) -> EpisodeLog {
    let header = LogHeader {
        map: "synthetic".into(),
        seed: 0,
        route_length: route,
        max_servo_angle: 0.5,
        dt: 0.1,
        vehicle: VehicleParams::default(),
        config_digest: String::new(),
    };
    let steps = speeds
        .iter()
        .zip(steering)
        .enumerate()
        .map(|(k, (&v, &s))| StepRecord {
            t: 0.1 * (k + 1) as f64,
            x: k as f64,
            y: 0.0,
            heading: 0.0,
            v,
            steering: s,
            throttle: 0.0,
            action: Some([0.0, 0.0]),
            reward: 0.0,
            distance: step_len,
            events: Default::default(),
        })
        .collect();
    let interventions = interventions
        .iter()
        .map(|&(step, odometer)| Intervention { step, t: 0.1 * (step + 1) as f64, x: 0.0, y: 0.0, kind: InterventionKind::Collision, odometer })
        .collect();
    EpisodeLog { header, steps, interventions, finished: false }
}

fn criterion_metrics() -> Outcome {
    let deg = 0.5f64.to_degrees();
    // (log, hand MPI value or None for ">", hand SR, hand Std[θ] in units of `deg`, hand Std[v])
    let logs = [
        // Two steps of 5 m, no intervention: "> 10".
        (synthetic_log(10.0, &[1.0, 3.0], &[1.0, -1.0], 5.0, &[]), None, 100.0, 1.0, 1.0),
        // 8 m, one intervention at 5 m of a 20 m route.
        (synthetic_log(20.0, &[2.0; 4], &[0.0; 4], 2.0, &[(2, 5.0)]), Some(8.0), 25.0, 0.0, 0.0),
        // 12 m, two interventions, the first at 3 m of 12 m.
        (synthetic_log(12.0, &[0.0, 4.0], &[0.5, -0.5], 6.0, &[(0, 3.0), (1, 9.0)]), Some(6.0), 25.0, 0.5, 2.0),
        // Intervention past the route end: SR capped at 100.
        (synthetic_log(4.0, &[5.0, 5.0], &[0.25, 0.25], 3.0, &[(1, 6.0)]), Some(6.0), 100.0, 0.0, 0.0),
        // 4 m, no intervention.
        (synthetic_log(16.0, &[2.0, 2.0], &[0.0, 0.0], 2.0, &[]), None, 100.0, 0.0, 0.0),
    ];
    let mut exact = true;
    let mut tr = String::new();
    for (log, mpi, sr, std_t, std_v) in &logs {
        let m = compute_mpi(std::slice::from_ref(log)).expect("mpi");
        let got_sr = compute_sr(log);
        let (st, sv) = compute_smoothness(log).expect("smoothness");
        exact &= m.value() == *mpi && got_sr == *sr && st == std_t * deg && sv == *std_v;
        exact &= (mpi.is_none()) == m.to_string().starts_with("> ");
        let _ = write!(tr, "{};{};{};", m, bits(&[got_sr, st, sv]), m.interventions);
    }
    let all: Vec<EpisodeLog> = logs.iter().map(|l| l.0.clone()).collect();
    // Pooled: 10 + 8 + 12 + 6 + 4 = 40 m over 4 interventions.
    let pooled = compute_mpi(&all).expect("mpi");
    exact &= pooled.value() == Some(10.0);
    let clean = compute_mpi(&[all[0].clone(), all[4].clone()]).expect("mpi");
    let convention = clean.to_string() == "> 14.0";
    let _ = write!(tr, "{pooled};{clean}");
    Outcome {
        pass: exact && convention,
        detail: format!("5 synthetic logs exact: {exact}; pooled MPI {pooled}; zero-intervention runs report \"{clean}\""),
        transcript: tr,
    }
}

// 9. NoGap directional trend.

const TREND_STEPS: u64 = 100_000;
const TREND_EPISODES: usize = 7;

fn trend_config(dir: &Path, modality: &str) -> std::path::PathBuf {
    // Compact network and batch 32 keep a 100k-step run near half an hour on one core.
    let text = format!(
        r#"
seed = 11
out = "unused"
[agent]
modality = "{modality}"
net = "compact"
[sac]
batch_size = 32
warmup_steps = 2000
[topology]
lockstep = true
[train]
total_steps = {TREND_STEPS}
checkpoint_every = 0
[maps]
test = ["heldout_town"]
[eval]
episodes = {TREND_EPISODES}
"#
    );
    let p = dir.join(format!("{modality}.toml"));
    std::fs::write(&p, text).expect("write config");
    p
}

fn criterion_trend() -> Outcome {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().expect("tempdir");
    let run = |modality: &str| -> Result<moddrive::bench::NoGapReport, String> {
        let cfg = trend_config(dir.path(), modality);
        let out = dir.path().join(modality);
        let common = Common { config: Some(cfg), seed: None, out: Some(out.clone()) };
        cmd_train(&common, false, None).map_err(|f| f.msg)?;
        Ok(cmd_eval(&common, Some(&out.join("final.ckpt")), false).map_err(|f| f.msg)?.report)
    };
    let (sem, app) = match (run("semantic"), run("appearance")) {
        (Ok(s), Ok(a)) => (s, a),
        (s, a) => {
            return Outcome {
                pass: false,
                detail: format!("run failed: {:?} / {:?}", s.err(), a.err()),
                transcript: String::new(),
            }
        }
    };
    let (st, sr) = (sem.test.mpi.lower_bound(), sem.train.mpi.lower_bound());
    let (at, ar) = (app.test.mpi.lower_bound(), app.train.mpi.lower_bound());
    let ordering = st > at;
    let gap_hurts = st <= sr && at <= ar;
    Outcome {
        pass: ordering && gap_hurts,
        detail: format!(
            "{TREND_STEPS} steps each; semantic MPI train {} / test {}, degraded-appearance MPI train {} / test {}; semantic > degraded on test: {ordering}; test <= train for both: {gap_hurts}; {:.0} min",
            sem.train.mpi,
            sem.test.mpi,
            app.train.mpi,
            app.test.mpi,
            t0.elapsed().as_secs_f64() / 60.0
        ),
        transcript: String::new(),
    }
}

#[test]
fn acceptance_criteria() {
    let deterministic: [(&str, fn() -> Outcome); 8] = [
        ("reward exactness", criterion_reward),
        ("gradient suite", criterion_gradients),
        ("FC parameter budget", criterion_census),
        ("tabular soft Q oracle", criterion_tabular),
        ("point-mass control sanity", criterion_point_mass),
        ("distributed equivalence", criterion_distributed),
        ("control chain", criterion_control),
        ("metrics", criterion_metrics),
    ];
    let mut failed = Vec::new();
    let mut first = Vec::new();
    for (i, (title, f)) in deterministic.iter().enumerate() {
        let o = f();
        report(i + 1, title, &o);
        if !o.pass {
            failed.push(i + 1);
        }
        first.push(o.transcript);
    }

    let trend = criterion_trend();
    report(9, "NoGap directional trend", &trend);
    if !trend.pass {
        failed.push(9);
    }

    let mut differing = Vec::new();
    for (i, (_, f)) in deterministic.iter().enumerate() {
        if f().transcript != first[i] {
            differing.push(i + 1);
        }
    }
    let audit = Outcome {
        pass: differing.is_empty(),
        detail: format!("second run of criteria 1-8 byte-identical; differing: {differing:?}"),
        transcript: String::new(),
    };
    report(10, "determinism audit", &audit);
    if !audit.pass {
        failed.push(10);
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}

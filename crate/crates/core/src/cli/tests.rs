use std::path::Path;

use super::*;
use crate::bench::{Intervention, InterventionKind, LogHeader, StepRecord};
use crate::simworld::VehicleParams;

fn tiny_config(dir: &Path, lockstep: bool) -> PathBuf {
    let text = format!(
        r#"
seed = 3
out = "run"
[agent]
net = "compact"
[sac]
batch_size = 8
warmup_steps = 40
buffer_capacity = 1000
[topology]
lockstep = {lockstep}
[train]
total_steps = 100
checkpoint_every = 10
[maps]
train = ["straight_two_lane", "gentle_left"]
[eval]
episodes = 2
step_budget = 120
"#
    );
    let p = dir.join("tiny.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn common(config: &Path, out: &Path) -> Common {
    Common { config: Some(config.to_path_buf()), seed: None, out: Some(out.to_path_buf()) }
}

#[test]
fn default_config_round_trips_through_toml() {
    let cfg = RunConfig::default();
    assert_eq!(RunConfig::parse(&cfg.to_toml().unwrap(), "x").unwrap(), cfg);
    cfg.validate().unwrap();
}

#[test]
fn unknown_fields_are_named() {
    let e = RunConfig::parse("[drive.reward]\nv_maxx = 3.0\n", "c.toml").unwrap_err();
    let msg = e.to_string();
    assert!(msg.contains("v_maxx") && msg.contains("c.toml"), "{msg}");
    assert_eq!(Failure::from(e).code, 3);
}

#[test]
fn invalid_values_name_their_section() {
    let cfg = RunConfig::parse("[sac]\ngamma = 1.5\n", "c").unwrap();
    let msg = cfg.validate().unwrap_err().to_string();
    assert!(msg.contains("sac") && msg.contains("gamma"), "{msg}");
}

#[test]
fn missing_map_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    std::fs::write(&p, "[maps]\nfiles = [\"maps/absent.toml\"]\n").unwrap();
    let cfg = RunConfig::load(&p).unwrap();
    let f = Failure::from(cfg.load_maps().unwrap_err());
    assert_eq!(f.code, 3);
    assert!(f.msg.contains(&dir.path().join("maps/absent.toml").display().to_string()), "{}", f.msg);
}

#[test]
fn unknown_map_names_are_rejected() {
    let cfg = RunConfig::parse("[maps]\ntrain = [\"atlantis\"]\n", "c").unwrap();
    assert!(cfg.scenario_pools().unwrap_err().to_string().contains("atlantis"));
}

#[test]
fn flags_beat_environment_beats_file() {
    let base = RunConfig { seed: 1, out: "a".into(), ..RunConfig::default() };
    let none = Common { config: None, seed: None, out: None };
    let env = (Some("2".to_string()), Some(PathBuf::from("b")));
    let c = apply_overrides(base.clone(), env.clone(), &none).unwrap();
    assert_eq!((c.seed, c.out), (2, PathBuf::from("b")));
    let flags = Common { config: None, seed: Some(3), out: Some("c".into()) };
    let c = apply_overrides(base.clone(), env, &flags).unwrap();
    assert_eq!((c.seed, c.out), (3, PathBuf::from("c")));
    let bad = apply_overrides(base, (Some("seven".into()), None), &none).unwrap_err();
    assert_eq!(bad.code, 2);
}

#[test]
fn lockstep_training_is_reproducible_and_writes_its_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), true);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ra = cmd_train(&common(&cfg, &a), false, None).unwrap();
    cmd_train(&common(&cfg, &b), false, None).unwrap();
    let read = |p: PathBuf| std::fs::read(p).unwrap();
    assert_eq!(read(a.join("final.ckpt")), read(b.join("final.ckpt")));
    assert_eq!(read(a.join("curve.jsonl")), read(b.join("curve.jsonl")));
    assert!(ra.updates >= 10);
    assert!(a.join("checkpoints/update-00000010.ckpt").is_file());
    // The copied configuration reproduces the resolved one.
    let copied = RunConfig::load(&a.join("run.toml")).unwrap();
    let resolved = resolve_config(&common(&cfg, &a)).unwrap();
    assert_eq!(copied, resolved);
}

#[test]
fn threaded_training_checkpoints_periodically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), false);
    let out = dir.path().join("async");
    let r = cmd_train(&common(&cfg, &out), false, None).unwrap();
    assert_eq!(r.env_steps, 100);
    assert!(out.join("checkpoints/update-00000020.ckpt").is_file());
    assert!(out.join("latest.ckpt").is_file());
}

#[test]
fn resume_continues_from_the_checkpoint_weights() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), true);
    let first = dir.path().join("first");
    cmd_train(&common(&cfg, &first), false, None).unwrap();
    let ckpt = first.join("latest.ckpt");
    let again = |name: &str| {
        let out = dir.path().join(name);
        let r = cmd_train(&common(&cfg, &out), false, Some(&ckpt)).unwrap();
        (r.learner.digest(), std::fs::read(out.join("final.ckpt")).unwrap())
    };
    let (d1, c1) = again("r1");
    let (d2, c2) = again("r2");
    assert_eq!((d1, &c1), (d2, &c2));
    assert_ne!(c1, std::fs::read(first.join("final.ckpt")).unwrap());
}

#[test]
fn eval_refuses_a_checkpoint_for_another_network() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), true);
    let out = dir.path().join("t");
    cmd_train(&common(&cfg, &out), false, None).unwrap();
    let other = dir.path().join("other.toml");
    std::fs::write(&other, std::fs::read_to_string(&cfg).unwrap().replace("\"compact\"", "\"default\"")).unwrap();
    let f = cmd_eval(&common(&other, &out), Some(&out.join("final.ckpt")), false).unwrap_err();
    assert_eq!(f.code, 4, "{}", f.msg);
    assert!(f.msg.contains("final.ckpt"));
}

fn expert_config(dir: &Path) -> PathBuf {
    let p = dir.join("expert.toml");
    std::fs::write(
        &p,
        "seed = 5\n[maps]\ntrain = [\"straight_two_lane\"]\ntest = [\"straight_two_lane\"]\n[eval]\nepisodes = 2\n",
    )
    .unwrap();
    p
}

#[test]
fn expert_eval_on_an_empty_straight_never_intervenes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = expert_config(dir.path());
    let out = cmd_eval(&common(&cfg, dir.path()), None, true).unwrap();
    for r in [&out.report.train, &out.report.test] {
        assert_eq!(r.sr, 100.0);
        assert_eq!(r.mpi.interventions, 0);
        assert!(r.mpi.to_string().starts_with("> "));
        assert!(r.per_episode.iter().all(|e| e.finished));
    }
}

#[test]
fn eval_reports_are_reproducible_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), true);
    let run = dir.path().join("run");
    cmd_train(&common(&cfg, &run), false, None).unwrap();
    let ckpt = run.join("final.ckpt");
    let (a, b) = (dir.path().join("ea"), dir.path().join("eb"));
    let out = cmd_eval(&common(&cfg, &a), Some(&ckpt), false).unwrap();
    cmd_eval(&common(&cfg, &b), Some(&ckpt), false).unwrap();
    for f in ["eval/report.json", "eval/report.txt", "eval/train_logs.jsonl", "eval/test_logs.jsonl"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    for r in [&out.report.train, &out.report.test] {
        let dist: f64 = r.per_episode.iter().map(|e| e.distance).sum();
        let n: usize = r.per_episode.iter().map(|e| e.interventions).sum();
        let sr = r.per_episode.iter().map(|e| e.sr).sum::<f64>() / r.per_episode.len() as f64;
        assert!((r.mpi.distance - dist).abs() < 1e-9);
        assert_eq!(r.mpi.interventions, n);
        assert!((r.sr - sr).abs() < 1e-9);
    }
    // Replaying the saved logs reproduces the per-episode rows.
    let replayed = cmd_replay(&a.join("eval/test_logs.jsonl"), &Common { config: None, seed: None, out: Some(dir.path().join("rp")) }).unwrap();
    let rows: Vec<_> = replayed.iter().map(|r| r.per_episode[0].clone()).collect();
    assert_eq!(rows, out.report.test.per_episode);
}

fn three_step_log() -> EpisodeLog {
    let header = LogHeader {
        map: "synthetic".into(),
        seed: 0,
        route_length: 10.0,
        max_servo_angle: 0.5,
        dt: 0.1,
        vehicle: VehicleParams::default(),
        config_digest: String::new(),
    };
    let step = |k: usize, v: f64, steering: f64| StepRecord {
        t: 0.1 * (k + 1) as f64,
        x: k as f64,
        y: 0.0,
        heading: 0.0,
        v,
        steering,
        throttle: 0.0,
        action: Some([0.0, 0.0]),
        reward: 0.0,
        distance: 0.1 * v,
        events: Default::default(),
    };
    EpisodeLog {
        header,
        steps: vec![step(0, 1.0, 0.0), step(1, 2.0, 0.1), step(2, 3.0, -0.1)],
        interventions: vec![Intervention { step: 1, t: 0.2, x: 1.0, y: 0.0, kind: InterventionKind::Collision, odometer: 0.3 }],
        finished: false,
    }
}

#[test]
fn replay_of_a_three_step_log_matches_hand_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.jsonl");
    let mut f = std::fs::File::create(&path).unwrap();
    three_step_log().write_jsonl(&mut f).unwrap();
    drop(f);
    let r = cmd_replay(&path, &Common { config: None, seed: None, out: Some(dir.path().join("o")) }).unwrap();
    assert_eq!(r.len(), 1);
    let r = &r[0];
    // Distance 0.1 + 0.2 + 0.3 over one intervention.
    assert!((r.mpi.value().unwrap() - 0.6).abs() < 1e-12);
    // 0.3 m of a 10 m route before the first intervention.
    assert!((r.sr - 3.0).abs() < 1e-12);
    // Speeds 1, 2, 3: variance 2/3.
    assert!((r.std_speed - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    // Steering 0, ±0.1 of 0.5 rad: std 0.05·sqrt(2/3) rad.
    let expect = (0.05 * (2.0f64 / 3.0).sqrt()).to_degrees();
    assert!((r.std_steer_deg - expect).abs() < 1e-12);
    assert!(dir.path().join("o/episode-000.png").is_file());
}

#[test]
fn replay_errors_carry_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let none = Common { config: None, seed: None, out: Some(dir.path().join("o")) };
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(cmd_replay(&empty, &none).unwrap_err().code, 2);
    let mut text = Vec::new();
    three_step_log().write_jsonl(&mut text).unwrap();
    let mut lines: Vec<String> = String::from_utf8(text).unwrap().lines().map(String::from).collect();
    lines[2] = "{\"record\": \"step\", \"t\": oops}".into();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    let f = cmd_replay(&bad, &none).unwrap_err();
    assert_eq!(f.code, 5);
    assert!(f.msg.contains("line 3"), "{}", f.msg);
}

#[test]
fn maps_validate_reports_broken_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("broken.toml"), "name = \"x\"\n").unwrap();
    assert_eq!(cmd_maps_validate(&[dir.path().to_path_buf()]).unwrap_err().code, 3);
    assert_eq!(cmd_maps_validate(&[]).unwrap_err().code, 2);
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("maps");
    cmd_maps_validate(&[shipped]).unwrap();
}

#[test]
fn cli_parses_the_documented_flags() {
    let c = Cli::try_parse_from(["moddrive", "train", "--config", "c.toml", "--seed", "7", "--out", "o", "--lockstep", "--checkpoint", "k"]).unwrap();
    match c.command {
        Command::Train { common, lockstep, checkpoint } => {
            assert_eq!(common.seed, Some(7));
            assert!(lockstep);
            assert_eq!(checkpoint, Some(PathBuf::from("k")));
        }
        _ => panic!("wrong subcommand"),
    }
    assert!(Cli::try_parse_from(["moddrive", "eval"]).is_err());
    assert!(Cli::try_parse_from(["moddrive", "eval", "--expert"]).is_ok());
    assert!(Cli::try_parse_from(["moddrive", "maps", "validate", "a", "b"]).is_ok());
}

//! Command-line surface: run configuration, training, evaluation, log replay and map
//! inspection. The `moddrive` binary only parses arguments and calls [`run`].
//!
//! Exit codes:
//!
//! | code | meaning                                             |
//! |------|-----------------------------------------------------|
//! | 0    | success                                             |
//! | 1    | runtime failure (training, evaluation, I/O)         |
//! | 2    | usage error (bad flags, empty log)                  |
//! | 3    | invalid configuration or map, missing map file      |
//! | 4    | checkpoint rejected (wrong network, corrupt file)   |
//! | 5    | malformed episode log                               |

use std::fmt;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::approx::checkpoint::{decode_checkpoint, encode_checkpoint};
use crate::approx::{NetParams, NetSpec};
use crate::bench::plot::{plot_curve, plot_trajectory};
use crate::bench::{
    nogap_eval, BenchConfig, DrivingPolicy, EpisodeLog, EvalSuite, GapConfig, MetricsReport, PurePursuit, SacDriver,
};
use crate::disttrain::{run_async_observed, run_lockstep, DistReport, RunHooks, Topology};
use crate::drive::{DriveConfig, DriveEnv, Modality};
use crate::error::Error;
use crate::sac::{EpisodeRecord, InputEncoding, Learner, SacConfig, UpdateStats};
use crate::simworld::{builtin_scenarios, load_scenario, load_scenarios_from_dir, MapSplit, Palette, Scenario};

pub const ENV_SEED: &str = "MODDRIVE_SEED";
pub const ENV_OUT: &str = "MODDRIVE_OUT";

#[derive(Debug, Parser)]
#[command(name = "moddrive", version, about = "Train and evaluate lane-world driving agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed and $MODDRIVE_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the configured one and $MODDRIVE_OUT.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an agent with the configured topology.
    Train {
        #[command(flatten)]
        common: Common,
        /// Serialize the topology into the deterministic single-thread schedule.
        #[arg(long)]
        lockstep: bool,
        /// Start from these weights instead of a fresh initialization.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint (or the scripted expert) with and without the gap.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present = "expert")]
        checkpoint: Option<PathBuf>,
        /// Evaluate the privileged pure-pursuit driver instead of a checkpoint.
        #[arg(long, conflicts_with = "checkpoint")]
        expert: bool,
    },
    /// Plot and summarize a recorded episode log.
    Replay {
        log: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Inspect map files.
    Maps {
        #[command(subcommand)]
        action: MapsAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum MapsAction {
    /// List the maps a configuration resolves to.
    List {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Parse map files or directories and report every problem.
    Validate { paths: Vec<PathBuf> },
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self { code: 2, msg: msg.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Map { .. } => 3,
            Error::Checkpoint(_) => 4,
            Error::LogParse { .. } => 5,
            _ => 1,
        };
        Self { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetProfile {
    #[default]
    Default,
    Compact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub modality: Modality,
    pub net: NetProfile,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self { modality: Modality::Semantic, net: NetProfile::Default }
    }
}

impl AgentConfig {
    pub fn spec(&self) -> NetSpec {
        match self.net {
            NetProfile::Default => NetSpec::default_driving(),
            NetProfile::Compact => NetSpec::compact_driving(),
        }
    }

    /// Semantic agents read one-hot labels; appearance agents read palette colours,
    /// trained on the flat coarse palette.
    pub fn encoding(&self) -> crate::Result<InputEncoding> {
        match self.modality {
            Modality::Semantic => Ok(InputEncoding::OneHot),
            Modality::Appearance => Ok(InputEncoding::palette(&Palette::coarse())),
            Modality::Privileged => Err(Error::Config("agent.modality: learned agents need semantic or appearance input".into())),
        }
    }
}

/// Where maps come from. Relative paths are resolved against the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapsConfig {
    /// Include the maps shipped with the crate.
    pub builtin: bool,
    pub dir: Option<PathBuf>,
    pub files: Vec<PathBuf>,
    /// Training map names; empty selects every map declared `train`.
    pub train: Vec<String>,
    /// Held-out map names; empty selects every map declared `test`.
    pub test: Vec<String>,
}

impl Default for MapsConfig {
    fn default() -> Self {
        Self { builtin: true, dir: None, files: Vec::new(), train: Vec::new(), test: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub total_steps: u64,
    /// Updates between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: u64,
    /// Episodes in the moving average of the training curve.
    pub curve_window: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { total_steps: 100_000, checkpoint_every: 5_000, curve_window: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Episodes per condition.
    pub episodes: usize,
    pub step_budget: usize,
    pub stationary_limit: u32,
    pub reset_ahead: f64,
    pub reset_margin: f64,
    pub gap: GapConfig,
}

impl Default for EvalSection {
    fn default() -> Self {
        let b = BenchConfig::default();
        Self {
            episodes: 10,
            step_budget: b.step_budget,
            stationary_limit: b.stationary_limit,
            reset_ahead: b.reset_ahead,
            reset_margin: b.reset_margin,
            gap: GapConfig::default(),
        }
    }
}

/// Everything a run depends on. The resolved copy is written to every output
/// directory as `run.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub maps: MapsConfig,
    pub agent: AgentConfig,
    pub sac: SacConfig,
    pub topology: Topology,
    pub drive: DriveConfig,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs/default"),
            maps: MapsConfig::default(),
            agent: AgentConfig::default(),
            sac: SacConfig::default(),
            topology: Topology::default(),
            drive: DriveConfig::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> crate::Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))
    }

    /// Reads a configuration and makes its map paths absolute.
    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &PathBuf| if p.is_relative() { base.join(p) } else { p.clone() };
        cfg.maps.dir = cfg.maps.dir.as_ref().map(resolve);
        cfg.maps.files = cfg.maps.files.iter().map(resolve).collect();
        Ok(cfg)
    }

    pub fn validate(&self) -> crate::Result<()> {
        let field = |name: &str, e: Error| match e {
            Error::Config(m) => Error::Config(format!("{name}: {m}")),
            other => other,
        };
        self.sac.validate().map_err(|e| field("sac", e))?;
        self.topology.validate().map_err(|e| field("topology", e))?;
        self.drive.validate().map_err(|e| field("drive", e))?;
        self.bench().validate().map_err(|e| field("eval", e))?;
        self.agent.spec().validate().map_err(|e| field("agent.net", e))?;
        if self.train.total_steps == 0 || self.train.curve_window == 0 {
            return Err(Error::Config("train: total_steps and curve_window must be positive".into()));
        }
        if self.eval.episodes == 0 {
            return Err(Error::Config("eval.episodes must be positive".into()));
        }
        if !(self.eval.gap.dynamics_jitter >= 0.0 && self.eval.gap.dynamics_jitter < 1.0) {
            return Err(Error::Config("eval.gap.dynamics_jitter must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn bench(&self) -> BenchConfig {
        BenchConfig {
            drive: self.drive.clone(),
            step_budget: self.eval.step_budget,
            stationary_limit: self.eval.stationary_limit,
            reset_ahead: self.eval.reset_ahead,
            reset_margin: self.eval.reset_margin,
        }
    }

    pub fn to_toml(&self) -> crate::Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("serializing the run configuration: {e}")))
    }

    /// Hash of everything that affects results; the output directory is left out.
    pub fn digest(&self) -> crate::Result<String> {
        let c = Self { out: PathBuf::new(), ..self.clone() };
        Ok(hex(&Sha256::digest(c.to_toml()?.as_bytes())))
    }

    /// Every map the configuration names, in a fixed order: builtins, directory,
    /// explicit files. Names must be unique.
    pub fn load_maps(&self) -> crate::Result<Vec<Scenario>> {
        let m = &self.maps;
        let mut all = if m.builtin { builtin_scenarios() } else { Vec::new() };
        if let Some(dir) = &m.dir {
            if !dir.is_dir() {
                return Err(Error::Map { map: dir.display().to_string(), msg: "map directory does not exist".into() });
            }
            all.extend(load_scenarios_from_dir(dir)?);
        }
        for f in &m.files {
            if !f.is_file() {
                return Err(Error::Map { map: f.display().to_string(), msg: "map file does not exist".into() });
            }
            all.push(load_scenario(f)?);
        }
        let mut names: Vec<&str> = all.iter().map(|s| s.map.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("maps: two maps are named `{}`", w[0])));
        }
        Ok(all)
    }

    /// Training and held-out pools.
    pub fn scenario_pools(&self) -> crate::Result<(Vec<Arc<Scenario>>, Vec<Arc<Scenario>>)> {
        let all: Vec<Arc<Scenario>> = self.load_maps()?.into_iter().map(Arc::new).collect();
        let pick = |names: &[String], split: MapSplit, key: &str| -> crate::Result<Vec<Arc<Scenario>>> {
            if names.is_empty() {
                return Ok(all.iter().filter(|s| s.map.split == split).cloned().collect());
            }
            names
                .iter()
                .map(|n| {
                    all.iter()
                        .find(|s| &s.map.name == n)
                        .cloned()
                        .ok_or_else(|| Error::Config(format!("maps.{key}: no map named `{n}`")))
                })
                .collect()
        };
        let train = pick(&self.maps.train, MapSplit::Train, "train")?;
        let test = pick(&self.maps.test, MapSplit::Test, "test")?;
        if train.is_empty() {
            return Err(Error::Config("maps: no training maps selected".into()));
        }
        Ok((train, test))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Configuration after applying the file, environment and flag layers, in that order
/// of increasing precedence.
pub fn resolve_config(common: &Common) -> CliResult<RunConfig> {
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let env = (std::env::var(ENV_SEED).ok(), std::env::var_os(ENV_OUT).map(PathBuf::from));
    let cfg = apply_overrides(cfg, env, common)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Applies `(seed, out)` from the environment, then the flags.
pub fn apply_overrides(mut cfg: RunConfig, env: (Option<String>, Option<PathBuf>), common: &Common) -> CliResult<RunConfig> {
    if let Some(s) = env.0 {
        cfg.seed = s.trim().parse().map_err(|_| Failure::usage(format!("{ENV_SEED}: `{s}` is not a seed")))?;
    }
    if let Some(o) = env.1 {
        cfg.out = o;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn prepare_out(cfg: &RunConfig, dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("run.toml"), cfg.to_toml()?)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(v).map_err(Error::from)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub net_spec_sha256: String,
    pub checkpoint_sha256: Option<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Environment steps across all workers when the episode ended, approximately.
    pub env_steps: u64,
    pub episode_return: f64,
    pub moving_average: f64,
}

/// Episode returns in completion order with a trailing moving average.
pub fn training_curve(episodes: &[EpisodeRecord], workers: usize, window: usize) -> Vec<CurvePoint> {
    let mut out: Vec<CurvePoint> = Vec::with_capacity(episodes.len());
    let mut ordered: Vec<&EpisodeRecord> = episodes.iter().collect();
    ordered.sort_by_key(|e| (e.env_steps, e.worker));
    for (i, e) in ordered.iter().enumerate() {
        let lo = (i + 1).saturating_sub(window);
        let ma = ordered[lo..=i].iter().map(|e| e.episode_return).sum::<f64>() / (i + 1 - lo) as f64;
        out.push(CurvePoint { env_steps: e.env_steps * workers as u64, episode_return: e.episode_return, moving_average: ma });
    }
    out
}

struct Checkpointer {
    dir: PathBuf,
    spec: NetSpec,
    every: u64,
}

impl Checkpointer {
    fn save(&self, name: &str, net: &NetParams) -> crate::Result<()> {
        let bytes = encode_checkpoint(&self.spec, net);
        // Write then rename so an interrupted run never leaves a torn latest.ckpt.
        let tmp = self.dir.join(format!("{name}.tmp"));
        std::fs::write(&tmp, &bytes)?;
        std::fs::rename(&tmp, self.dir.join(name))?;
        Ok(())
    }

    fn periodic(&self, l: &Learner) -> crate::Result<()> {
        if self.every > 0 && l.updates % self.every == 0 {
            self.save(&format!("checkpoints/update-{:08}.ckpt", l.updates), &l.net)?;
            self.save("latest.ckpt", &l.net)?;
        }
        Ok(())
    }
}

/// Lockstep hooks cannot fail, so the first error is kept for after the run.
struct CheckpointHooks<'a> {
    ck: &'a Checkpointer,
    error: Option<Error>,
}

impl RunHooks for CheckpointHooks<'_> {
    fn on_update(&mut self, replicas: &[Learner], _: &UpdateStats) {
        if self.error.is_none() {
            self.error = self.ck.periodic(&replicas[0]).err();
        }
    }
}

fn load_params(path: &Path, spec: &NetSpec) -> CliResult<(NetParams, String)> {
    let bytes = std::fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let params = decode_checkpoint(spec, &bytes).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok((params, hex(&Sha256::digest(&bytes))))
}

pub fn cmd_train(common: &Common, lockstep: bool, checkpoint: Option<&Path>) -> CliResult<DistReport> {
    let mut cfg = resolve_config(common)?;
    if lockstep {
        cfg.topology.lockstep = true;
    }
    let (train_maps, _) = cfg.scenario_pools()?;
    let spec = cfg.agent.spec();
    let encoding = cfg.agent.encoding()?;
    let (learner, ckpt_digest) = match checkpoint {
        Some(p) => {
            let (params, d) = load_params(p, &spec)?;
            (Learner::from_params(spec.clone(), encoding, cfg.sac.clone(), params), Some(d))
        }
        None => (Learner::new(spec.clone(), encoding, cfg.sac.clone(), cfg.seed)?, None),
    };
    let out = cfg.out.clone();
    prepare_out(&cfg, &out)?;
    std::fs::create_dir_all(out.join("checkpoints"))?;
    let ck = Checkpointer { dir: out.clone(), spec: spec.clone(), every: cfg.train.checkpoint_every };
    let maps = Arc::new(train_maps);
    let drive = cfg.drive.clone();
    let make_env = |_: usize| DriveEnv::new(drive.clone(), maps.clone());
    let report = if cfg.topology.lockstep {
        let mut hooks = CheckpointHooks { ck: &ck, error: None };
        let r = run_lockstep(&cfg.topology, make_env, learner, cfg.train.total_steps, cfg.seed, None, &mut hooks)?;
        if let Some(e) = hooks.error {
            return Err(e.into());
        }
        r
    } else {
        run_async_observed(&cfg.topology, make_env, learner, cfg.train.total_steps, cfg.seed, &|l| ck.periodic(l))?
    };
    ck.save("final.ckpt", &report.learner.net)?;
    ck.save("latest.ckpt", &report.learner.net)?;
    let curve = training_curve(&report.episodes, cfg.topology.env_nodes, cfg.train.curve_window);
    let mut f = std::io::BufWriter::new(std::fs::File::create(out.join("curve.jsonl"))?);
    crate::sac::trainer::write_jsonl(&mut f, &curve)?;
    drop(f);
    if !curve.is_empty() {
        let pts: Vec<(f64, f64)> = curve.iter().map(|c| (c.env_steps as f64, c.moving_average)).collect();
        plot_curve(&pts, &out.join("curve.png"))?;
    }
    let mut stats = std::io::BufWriter::new(std::fs::File::create(out.join("node_stats.jsonl"))?);
    crate::sac::trainer::write_jsonl(&mut stats, &report.stats)?;
    drop(stats);
    write_json(
        &out.join("manifest.json"),
        &Manifest {
            config_sha256: cfg.digest()?,
            net_spec_sha256: hex(&spec.digest()),
            checkpoint_sha256: ckpt_digest,
            seed: cfg.seed,
        },
    )?;
    println!(
        "trained {} env steps, {} updates, {} episodes; checkpoint {}",
        report.env_steps,
        report.updates,
        report.episodes.len(),
        out.join("final.ckpt").display()
    );
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub report: crate::bench::NoGapReport,
    pub manifest: Manifest,
}

pub fn cmd_eval(common: &Common, checkpoint: Option<&Path>, expert: bool) -> CliResult<EvalOutput> {
    let cfg = resolve_config(common)?;
    let (train, test) = cfg.scenario_pools()?;
    let spec = cfg.agent.spec();
    let (snapshot, ckpt_digest, modality) = match (checkpoint, expert) {
        (_, true) => (None, None, Modality::Privileged),
        (Some(p), false) => {
            let (params, d) = load_params(p, &spec)?;
            let learner = Learner::from_params(spec.clone(), cfg.agent.encoding()?, cfg.sac.clone(), params);
            (Some(Arc::new(learner.snapshot())), Some(d), cfg.agent.modality)
        }
        (None, false) => return Err(Failure::usage("eval needs --checkpoint or --expert")),
    };
    let suite = EvalSuite {
        train,
        test,
        episodes: cfg.eval.episodes,
        seed: cfg.seed,
        gap: cfg.eval.gap,
        bench: cfg.bench(),
    };
    let factory = move || -> crate::Result<Box<dyn DrivingPolicy>> {
        Ok(match &snapshot {
            Some(s) => Box::new(SacDriver::new(s.clone(), modality)),
            None => Box::new(PurePursuit::default()),
        })
    };
    let (report, train_logs, test_logs) = nogap_eval(&factory, &suite)?;
    let dir = cfg.out.join("eval");
    prepare_out(&cfg, &dir)?;
    for (name, logs) in [("train", &train_logs), ("test", &test_logs)] {
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{name}_logs.jsonl")))?);
        for l in logs.iter() {
            l.write_jsonl(&mut f)?;
        }
        drop(f);
        if let Some(first) = logs.first() {
            let map = suite.train.iter().chain(&suite.test).find(|s| s.map.name == first.header.map).map(|s| &s.map);
            plot_trajectory(first, map, &dir.join(format!("{name}_trajectory.png")))?;
        }
    }
    let manifest = Manifest {
        config_sha256: cfg.digest()?,
        net_spec_sha256: hex(&spec.digest()),
        checkpoint_sha256: ckpt_digest,
        seed: cfg.seed,
    };
    let out = EvalOutput { report, manifest };
    write_json(&dir.join("report.json"), &out)?;
    let text = format!(
        "train condition\n{}\ntest condition (gaps: visual {}, dynamics {}, scenario {})\n{}\ntest/train MPI ratio {:.3}\n",
        out.report.train.table(),
        cfg.eval.gap.visual,
        cfg.eval.gap.dynamics,
        cfg.eval.gap.scenario,
        out.report.test.table(),
        out.report.mpi_ratio
    );
    std::fs::write(dir.join("report.txt"), &text)?;
    print!("{text}");
    Ok(out)
}

/// Plots every log in the file and prints the metrics of each.
pub fn cmd_replay(log: &Path, common: &Common) -> CliResult<Vec<MetricsReport>> {
    let f = std::fs::File::open(log).map_err(|e| Failure::usage(format!("{}: {e}", log.display())))?;
    let logs = EpisodeLog::read_jsonl(BufReader::new(f)).map_err(|e| match e {
        Error::LogParse { line, msg } => Failure { code: 5, msg: format!("{}: line {line}: {msg}", log.display()) },
        other => other.into(),
    })?;
    if logs.is_empty() || logs.iter().all(|l| l.steps.is_empty()) {
        return Err(Failure::usage(format!("{}: the log holds no steps", log.display())));
    }
    let maps = match &common.config {
        Some(_) => resolve_config(common)?.load_maps()?,
        None => builtin_scenarios(),
    };
    let out = common.out.clone().unwrap_or_else(|| log.with_extension(""));
    std::fs::create_dir_all(&out)?;
    let mut reports = Vec::new();
    for (i, l) in logs.iter().enumerate() {
        if l.steps.is_empty() {
            continue;
        }
        let map = maps.iter().find(|s| s.map.name == l.header.map).map(|s| &s.map);
        plot_trajectory(l, map, &out.join(format!("episode-{i:03}.png")))?;
        let r = MetricsReport::from_logs(std::slice::from_ref(l))?;
        println!("episode {i} on {} (seed {}), {} steps\n{}", l.header.map, l.header.seed, l.steps.len(), r.table());
        reports.push(r);
    }
    write_json(&out.join("summary.json"), &reports)?;
    Ok(reports)
}

pub fn cmd_maps_list(config: Option<&Path>) -> CliResult<Vec<Scenario>> {
    let cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let maps = cfg.load_maps()?;
    println!("{:<24} {:<6} {:<10} {:>6} {:>10} {:>10}", "name", "split", "topology", "lanes", "route (m)", "obstacles");
    for s in &maps {
        let m = &s.map;
        println!(
            "{:<24} {:<6} {:<10} {:>6} {:>10.1} {:>10}",
            m.name,
            format!("{:?}", m.split).to_lowercase(),
            format!("{:?}", m.topology).to_lowercase(),
            m.lanes.len(),
            m.route_length(),
            s.obstacles.len()
        );
    }
    Ok(maps)
}

/// Every problem found; an empty list means all maps parsed.
pub fn cmd_maps_validate(paths: &[PathBuf]) -> CliResult<()> {
    if paths.is_empty() {
        return Err(Failure::usage("maps validate needs at least one file or directory"));
    }
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut v: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "toml"))
                .collect();
            v.sort();
            files.extend(v);
        } else {
            files.push(p.clone());
        }
    }
    let mut bad = 0;
    for f in &files {
        match load_scenario(f) {
            Ok(s) => println!("ok      {} ({})", f.display(), s.map.name),
            Err(e) => {
                bad += 1;
                println!("invalid {}: {e}", f.display());
            }
        }
    }
    if bad > 0 {
        return Err(Error::Config(format!("{bad} of {} maps are invalid", files.len())).into());
    }
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { common, lockstep, checkpoint } => cmd_train(&common, lockstep, checkpoint.as_deref()).map(drop),
        Command::Eval { common, checkpoint, expert } => cmd_eval(&common, checkpoint.as_deref(), expert).map(drop),
        Command::Replay { log, common } => cmd_replay(&log, &common).map(drop),
        Command::Maps { action: MapsAction::List { config } } => cmd_maps_list(config.as_deref()).map(drop),
        Command::Maps { action: MapsAction::Validate { paths } } => cmd_maps_validate(&paths),
    }
}

#[cfg(test)]
mod tests;

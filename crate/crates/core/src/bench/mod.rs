//! Closed-loop evaluation: episode logs with the intervention and reset protocol,
//! distance-based autonomy metrics, and the train/test gap benchmark.

mod episode;
mod expert;
mod nogap;
pub mod plot;

pub use episode::{run_episode, BenchConfig, ConstantPolicy, DrivingPolicy, SacDriver};
pub use expert::PurePursuit;
pub use nogap::{
    evaluate, nogap_eval, test_vehicle, EpisodeSpec, EvalSuite, GapConfig, NoGapReport, PolicyFactory,
};

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simworld::{StepEvents, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterventionKind {
    Collision,
    /// No motion for the configured number of consecutive steps.
    Stationary,
    /// The policy produced a NaN or infinite action.
    NonFiniteAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Simulation time at the end of the step, s.
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    /// Servo angle as a fraction of the maximum servo angle.
    pub steering: f64,
    /// Throttle command delivered to the vehicle.
    pub throttle: f64,
    /// The policy's action; `None` when it was not finite.
    pub action: Option<[f64; 2]>,
    pub reward: f64,
    /// Distance driven during the step, m. Resets do not count.
    pub distance: f64,
    pub events: StepEvents,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intervention {
    /// Index of the step that triggered it.
    pub step: usize,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub kind: InterventionKind,
    /// Distance driven since the episode start when it fired, m.
    pub odometer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub map: String,
    pub seed: u64,
    /// Length of the route centerline, m.
    pub route_length: f64,
    /// Scale from normalized steering to radians.
    pub max_servo_angle: f64,
    pub dt: f64,
    pub vehicle: VehicleParams,
    /// SHA-256 of the configuration the episode ran under, hex.
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub steps: Vec<StepRecord>,
    pub interventions: Vec<Intervention>,
    /// The route end was reached.
    pub finished: bool,
}

/// One line of a persisted log. Every log is a header line, then step and
/// intervention lines in the order they happened (an intervention follows the step
/// that triggered it), then one end line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
enum LogLine {
    Header(LogHeader),
    Step(StepRecord),
    Intervention(Intervention),
    End { finished: bool },
}

impl EpisodeLog {
    pub fn distance(&self) -> f64 {
        self.steps.iter().map(|s| s.distance).sum()
    }

    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        let mut line = |l: &LogLine| -> Result<()> {
            serde_json::to_writer(&mut *w, l)?;
            w.write_all(b"\n")?;
            Ok(())
        };
        line(&LogLine::Header(self.header.clone()))?;
        let mut iv = self.interventions.iter().peekable();
        for (i, s) in self.steps.iter().enumerate() {
            line(&LogLine::Step(*s))?;
            while let Some(x) = iv.next_if(|x| x.step == i) {
                line(&LogLine::Intervention(*x))?;
            }
        }
        line(&LogLine::End { finished: self.finished })
    }

    /// Parses logs written by [`EpisodeLog::write_jsonl`]; a file may hold several.
    pub fn read_jsonl(r: impl BufRead) -> Result<Vec<EpisodeLog>> {
        let mut out = Vec::new();
        let mut cur: Option<EpisodeLog> = None;
        let mut last = 0;
        for (i, line) in r.lines().enumerate() {
            let n = i + 1;
            last = n;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: String| Error::LogParse { line: n, msg };
            let parsed: LogLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            match (parsed, cur.as_mut()) {
                (LogLine::Header(header), None) => {
                    cur = Some(EpisodeLog { header, steps: Vec::new(), interventions: Vec::new(), finished: false })
                }
                (LogLine::Header(_), Some(_)) => return Err(bad("header inside an unfinished log".into())),
                (LogLine::Step(s), Some(log)) => {
                    if log.steps.last().is_some_and(|p| !(s.t > p.t)) {
                        return Err(bad(format!("time {} does not increase", s.t)));
                    }
                    log.steps.push(s);
                }
                (LogLine::Intervention(x), Some(log)) => {
                    if x.step + 1 != log.steps.len() {
                        return Err(bad(format!("intervention refers to step {} out of order", x.step)));
                    }
                    log.interventions.push(x);
                }
                (LogLine::End { finished }, Some(_)) => {
                    let mut log = cur.take().expect("checked");
                    log.finished = finished;
                    out.push(log);
                }
                (_, None) => return Err(bad("record before the header".into())),
            }
        }
        if cur.is_some() {
            return Err(Error::LogParse { line: last, msg: "log ends without an end record".into() });
        }
        Ok(out)
    }
}

/// Meters per intervention, pooled over logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mpi {
    pub distance: f64,
    pub interventions: usize,
}

impl Mpi {
    /// `None` when there was no intervention; the distance is then only a lower bound.
    pub fn value(&self) -> Option<f64> {
        (self.interventions > 0).then(|| self.distance / self.interventions as f64)
    }

    /// Numeric value for comparisons, taking the lower bound when no intervention
    /// happened.
    pub fn lower_bound(&self) -> f64 {
        self.value().unwrap_or(self.distance)
    }
}

impl fmt::Display for Mpi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            Some(v) => write!(f, "{v:.1}"),
            None => write!(f, "> {:.1}", self.distance),
        }
    }
}

pub fn compute_mpi(logs: &[EpisodeLog]) -> Result<Mpi> {
    if logs.is_empty() {
        return Err(Error::InvalidInput("MPI needs at least one log".into()));
    }
    Ok(Mpi {
        distance: logs.iter().map(EpisodeLog::distance).sum(),
        interventions: logs.iter().map(|l| l.interventions.len()).sum(),
    })
}

/// Share of the route driven before the first intervention, percent.
pub fn compute_sr(log: &EpisodeLog) -> f64 {
    match log.interventions.first() {
        None => 100.0,
        Some(x) if log.header.route_length > 0.0 => (100.0 * x.odometer / log.header.route_length).min(100.0),
        Some(_) => 0.0,
    }
}

/// Mean success rate over trials.
pub fn mean_sr(logs: &[EpisodeLog]) -> f64 {
    logs.iter().map(compute_sr).sum::<f64>() / logs.len().max(1) as f64
}

/// Population standard deviations of the steering angle (degrees) and speed (m/s).
pub fn compute_smoothness(log: &EpisodeLog) -> Result<(f64, f64)> {
    if log.steps.len() < 2 {
        return Err(Error::InvalidInput("smoothness needs at least two steps".into()));
    }
    let deg = log.header.max_servo_angle.to_degrees();
    Ok((
        population_std(log.steps.iter().map(|s| s.steering * deg)),
        population_std(log.steps.iter().map(|s| s.v)),
    ))
}

/// Welford's single-pass update.
fn population_std(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for x in xs {
        n += 1.0;
        let d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    if n > 0.0 {
        (m2 / n).max(0.0).sqrt()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub map: String,
    pub seed: u64,
    pub distance: f64,
    pub interventions: usize,
    pub sr: f64,
    pub std_steer_deg: f64,
    pub std_speed: f64,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mpi: Mpi,
    /// Mean over episodes, percent.
    pub sr: f64,
    /// Means of the per-episode standard deviations.
    pub std_steer_deg: f64,
    pub std_speed: f64,
    pub episodes: usize,
    pub per_episode: Vec<EpisodeMetrics>,
}

impl MetricsReport {
    pub fn from_logs(logs: &[EpisodeLog]) -> Result<Self> {
        let mpi = compute_mpi(logs)?;
        let per_episode = logs
            .iter()
            .map(|l| {
                let (st, sv) = compute_smoothness(l).unwrap_or((0.0, 0.0));
                EpisodeMetrics {
                    map: l.header.map.clone(),
                    seed: l.header.seed,
                    distance: l.distance(),
                    interventions: l.interventions.len(),
                    sr: compute_sr(l),
                    std_steer_deg: st,
                    std_speed: sv,
                    finished: l.finished,
                }
            })
            .collect::<Vec<_>>();
        let n = per_episode.len() as f64;
        Ok(Self {
            mpi,
            sr: mean_sr(logs),
            std_steer_deg: per_episode.iter().map(|e| e.std_steer_deg).sum::<f64>() / n,
            std_speed: per_episode.iter().map(|e| e.std_speed).sum::<f64>() / n,
            episodes: logs.len(),
            per_episode,
        })
    }

    /// Human-readable summary followed by one row per episode.
    pub fn table(&self) -> String {
        let mut s = format!(
            "MPI (m)    SR (%)   Std[θ] (deg)  Std[v] (m/s)  episodes\n{:<10} {:<8.1} {:<13.2} {:<13.3} {}\n\n",
            self.mpi.to_string(),
            self.sr,
            self.std_steer_deg,
            self.std_speed,
            self.episodes
        );
        s.push_str("map                    seed                  distance  interv  SR      Std[θ]  Std[v]  finished\n");
        for e in &self.per_episode {
            s.push_str(&format!(
                "{:<22} {:<21} {:<9.1} {:<7} {:<7.1} {:<7.2} {:<7.3} {}\n",
                e.map, e.seed, e.distance, e.interventions, e.sr, e.std_steer_deg, e.std_speed, e.finished
            ));
        }
        s
    }
}

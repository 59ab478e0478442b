//! Low-level control chain between the policy and the vehicle: low-pass filtering of
//! the high-level action, mapping to wheel-speed and servo-angle targets, and two PID
//! loops tracking those targets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simworld::{Action, VehicleParams};

/// First-order exponential filter `y ← (1 − β)·y + β·x` on both action channels.
///
/// The first input after a reset passes through unchanged, so a fresh chain does not
/// act on a fictitious zero command.
#[derive(Debug, Clone, PartialEq)]
pub struct LowPass {
    beta: f64,
    state: Option<[f64; 2]>,
}

impl LowPass {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::Config(format!("filter coefficient must lie in (0, 1], got {beta}")));
        }
        Ok(Self { beta, state: None })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn reset(&mut self) {
        self.state = None;
    }

    pub fn apply(&mut self, raw: Action) -> Action {
        let b = self.beta;
        let x = [raw.steering, raw.throttle];
        let y = match self.state {
            None => x,
            Some(prev) => [(1.0 - b) * prev[0] + b * x[0], (1.0 - b) * prev[1] + b * x[1]],
        };
        self.state = Some(y);
        Action { steering: y[0], throttle: y[1] }
    }
}

/// Steady-state amplitude of the filter's response to a unit alternating input
/// `+1, −1, +1, …` (the Nyquist frequency).
pub fn nyquist_gain(beta: f64) -> f64 {
    beta / (2.0 - beta)
}

/// Monotone piecewise-linear curve, held constant beyond its end knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Curve {
    knots: Vec<[f64; 2]>,
}

impl Curve {
    pub fn new(knots: Vec<[f64; 2]>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Config("a curve needs at least two knots".into()));
        }
        if !knots.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::Config("curve knots must be finite".into()));
        }
        if knots.windows(2).any(|w| !(w[1][0] > w[0][0] && w[1][1] >= w[0][1])) {
            return Err(Error::Config("curve knots must increase in x and be non-decreasing in y".into()));
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[[f64; 2]] {
        &self.knots
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        if x <= k[0][0] {
            return k[0][1];
        }
        for w in k.windows(2) {
            let ([x0, y0], [x1, y1]) = (w[0], w[1]);
            if x <= x1 {
                return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
            }
        }
        k[k.len() - 1][1]
    }

    /// Smallest `x` with `eval(x) = y`, clamped to the knot range. Scripted drivers use
    /// it to command a physical target through the map.
    pub fn inverse(&self, y: f64) -> f64 {
        let k = &self.knots;
        if y <= k[0][1] {
            return k[0][0];
        }
        for w in k.windows(2) {
            let ([x0, y0], [x1, y1]) = (w[0], w[1]);
            if y <= y1 && y1 > y0 {
                return x0 + (x1 - x0) * (y - y0) / (y1 - y0);
            }
        }
        k[k.len() - 1][0]
    }
}

impl TryFrom<Vec<[f64; 2]>> for Curve {
    type Error = Error;
    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        Curve::new(v)
    }
}

impl From<Curve> for Vec<[f64; 2]> {
    fn from(c: Curve) -> Self {
        c.knots
    }
}

/// Maps the filtered action to physical targets.
///
/// `throttle` maps `[-1, 1]` to a fraction of the maximum wheel speed. `steering` maps
/// `[0, 1]` to a fraction of the maximum servo angle and is extended as an odd function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalMap {
    /// rad/s
    pub max_wheel_speed: f64,
    /// rad
    pub max_servo_angle: f64,
    pub throttle: Curve,
    pub steering: Curve,
}

impl Default for PhysicalMap {
    fn default() -> Self {
        Self {
            max_wheel_speed: 10.0 / DEFAULT_WHEEL_RADIUS,
            max_servo_angle: 0.5,
            throttle: Curve::new(vec![[-1.0, 0.0], [1.0, 1.0]]).expect("valid"),
            steering: Curve::new(vec![[0.0, 0.0], [0.5, 0.4], [1.0, 1.0]]).expect("valid"),
        }
    }
}

impl PhysicalMap {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_wheel_speed > 0.0 && self.max_servo_angle > 0.0) {
            return Err(Error::Config("physical limits must be positive".into()));
        }
        let s = self.steering.knots();
        if s[0] != [0.0, 0.0] || s[s.len() - 1][0] < 1.0 {
            return Err(Error::Config("steering curve must start at (0, 0) and reach x = 1".into()));
        }
        let t = self.throttle.knots();
        if t[0][0] > -1.0 || t[t.len() - 1][0] < 1.0 {
            return Err(Error::Config("throttle curve must cover [-1, 1]".into()));
        }
        if !self.throttle.knots().iter().chain(s).all(|k| (0.0..=1.0).contains(&k[1])) {
            return Err(Error::Config("curve outputs are fractions in [0, 1]".into()));
        }
        Ok(())
    }

    /// `(ω₁ wheel speed target, ω₂ servo angle target)`.
    pub fn map_targets(&self, a: Action) -> (f64, f64) {
        let th = a.throttle.clamp(-1.0, 1.0);
        let st = a.steering.clamp(-1.0, 1.0);
        let w1 = self.max_wheel_speed * self.throttle.eval(th);
        let w2 = self.max_servo_angle * st.signum() * self.steering.eval(st.abs());
        (w1, if st == 0.0 { 0.0 } else { w2 })
    }

    /// Action whose mapped targets are `(wheel_speed, servo_angle)`, clamped to range.
    pub fn action_for(&self, wheel_speed: f64, servo_angle: f64) -> Action {
        let th = self.throttle.inverse(wheel_speed / self.max_wheel_speed);
        let frac = (servo_angle.abs() / self.max_servo_angle).min(1.0);
        let st = servo_angle.signum() * self.steering.inverse(frac);
        Action::new(if servo_angle == 0.0 { 0.0 } else { st }, th)
    }
}

pub const DEFAULT_WHEEL_RADIUS: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub out_min: f64,
    pub out_max: f64,
    /// Bound on the magnitude of the error integral.
    pub integral_clamp: f64,
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        let g = [self.kp, self.ki, self.kd, self.integral_clamp];
        if !g.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::Config("PID gains and integral clamp must be non-negative".into()));
        }
        if !(self.out_min < self.out_max) {
            return Err(Error::Config("PID output range is empty".into()));
        }
        Ok(())
    }
}

/// PID with output limits and a clamped error integral (anti-windup). The derivative
/// term is zero on the first step since there is no error history yet.
#[derive(Debug, Clone, PartialEq)]
pub struct Pid {
    pub gains: PidGains,
    integral: f64,
    prev_error: Option<f64>,
}

impl Pid {
    pub fn new(gains: PidGains) -> Result<Self> {
        gains.validate()?;
        Ok(Self { gains, integral: 0.0, prev_error: None })
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_error = None;
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    pub fn step(&mut self, target: f64, measurement: f64, dt: f64) -> Result<f64> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        let g = &self.gains;
        let e = target - measurement;
        if !e.is_finite() {
            return Err(Error::InvalidInput("non-finite PID error".into()));
        }
        self.integral = (self.integral + e * dt).clamp(-g.integral_clamp, g.integral_clamp);
        let de = self.prev_error.map_or(0.0, |p| (e - p) / dt);
        self.prev_error = Some(e);
        Ok((g.kp * e + g.ki * self.integral + g.kd * de).clamp(g.out_min, g.out_max))
    }
}

/// First-order lag `ẏ = (u − y)/T`, advanced exactly under a held input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderLag {
    pub time_constant: f64,
    pub y: f64,
}

impl FirstOrderLag {
    pub fn advance(&mut self, u: f64, dt: f64) -> f64 {
        let k = 1.0 - (-dt / self.time_constant).exp();
        self.y += (u - self.y) * k;
        self.y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    /// Filter coefficient β.
    pub beta: f64,
    pub map: PhysicalMap,
    pub wheel_radius: f64,
    /// Wheel-speed loop; its output is the normalized throttle fed to the vehicle.
    pub speed_pid: PidGains,
    /// Servo loop; its output is the servo drive command in radians.
    pub servo_pid: PidGains,
    /// Time constant of the steering servo, seconds.
    pub servo_time_constant: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            map: PhysicalMap::default(),
            wheel_radius: DEFAULT_WHEEL_RADIUS,
            speed_pid: PidGains { kp: 0.3, ki: 0.05, kd: 0.0, out_min: -1.0, out_max: 1.0, integral_clamp: 20.0 },
            servo_pid: PidGains { kp: 1.0, ki: 4.0, kd: 0.0, out_min: -1.0, out_max: 1.0, integral_clamp: 0.25 },
            servo_time_constant: 0.05,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<()> {
        LowPass::new(self.beta)?;
        self.map.validate()?;
        self.speed_pid.validate()?;
        self.servo_pid.validate()?;
        if !(self.wheel_radius > 0.0 && self.servo_time_constant > 0.0) {
            return Err(Error::Config("wheel radius and servo time constant must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainOutput {
    pub smoothed: Action,
    pub wheel_speed_target: f64,
    pub servo_target: f64,
    pub servo_angle: f64,
    /// What the vehicle model receives.
    pub vehicle_action: Action,
}

/// One vehicle's control chain, stepped once per control interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlChain {
    pub cfg: ControlConfig,
    filter: LowPass,
    speed: Pid,
    servo_pid: Pid,
    servo: FirstOrderLag,
}

impl ControlChain {
    pub fn new(cfg: ControlConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            filter: LowPass::new(cfg.beta)?,
            speed: Pid::new(cfg.speed_pid)?,
            servo_pid: Pid::new(cfg.servo_pid)?,
            servo: FirstOrderLag { time_constant: cfg.servo_time_constant, y: 0.0 },
            cfg,
        })
    }

    pub fn reset(&mut self) {
        self.filter.reset();
        self.speed.reset();
        self.servo_pid.reset();
        self.servo.y = 0.0;
    }

    pub fn servo_angle(&self) -> f64 {
        self.servo.y
    }

    pub fn step(&mut self, raw: Action, speed: f64, vehicle: &VehicleParams, dt: f64) -> Result<ChainOutput> {
        if !raw.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite action {raw:?}")));
        }
        let smoothed = self.filter.apply(Action::new(raw.steering, raw.throttle));
        let (w1, w2) = self.cfg.map.map_targets(smoothed);
        let throttle = self.speed.step(w1, speed / self.cfg.wheel_radius, dt)?;
        let drive = self.servo_pid.step(w2, self.servo.y, dt)?;
        let angle = self.servo.advance(drive, dt).clamp(-self.cfg.map.max_servo_angle, self.cfg.map.max_servo_angle);
        self.servo.y = angle;
        Ok(ChainOutput {
            smoothed,
            wheel_speed_target: w1,
            servo_target: w2,
            servo_angle: angle,
            vehicle_action: Action::new(angle / vehicle.max_steer, throttle),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn filter_dc_gain_and_identity() {
        let mut f = LowPass::new(0.3).unwrap();
        let mut y = Action::default();
        for _ in 0..200 {
            y = f.apply(Action { steering: 0.7, throttle: -0.2 });
        }
        assert!((y.steering - 0.7).abs() < 1e-12 && (y.throttle + 0.2).abs() < 1e-12);
        let mut id = LowPass::new(1.0).unwrap();
        let a = Action { steering: 0.1, throttle: -0.9 };
        assert_eq!(id.apply(a), a);
        assert!(LowPass::new(0.0).is_err() && LowPass::new(1.5).is_err());
    }

    #[test]
    fn nyquist_attenuation_matches_closed_form() {
        for beta in [0.1, 0.25, 0.5, 0.9, 1.0] {
            let mut f = LowPass::new(beta).unwrap();
            let mut last = 0.0;
            for n in 0..4000 {
                let x = if n % 2 == 0 { 1.0 } else { -1.0 };
                last = f.apply(Action { steering: x, throttle: 0.0 }).steering;
            }
            // After an odd count the last input was −1.
            assert!((last.abs() - nyquist_gain(beta)).abs() < 1e-10, "β={beta}: {last}");
        }
    }

    #[test]
    fn map_endpoints_and_interpolation() {
        let m = PhysicalMap::default();
        assert_eq!(m.map_targets(Action { steering: 0.0, throttle: 0.3 }).1, 0.0);
        assert_eq!(m.map_targets(Action { steering: 0.0, throttle: 1.0 }).0, m.max_wheel_speed);
        // Between knots (0.5, 0.4) and (1, 1): x = 0.75 gives 0.7.
        let (_, w2) = m.map_targets(Action { steering: 0.75, throttle: 0.0 });
        assert!((w2 - 0.7 * m.max_servo_angle).abs() < 1e-15);
        let (_, neg) = m.map_targets(Action { steering: -0.75, throttle: 0.0 });
        assert_eq!(neg, -w2);
        let (w1, _) = m.map_targets(Action { steering: 0.0, throttle: 0.0 });
        assert!((w1 - 0.5 * m.max_wheel_speed).abs() < 1e-12);
    }

    #[test]
    fn curves_reject_non_monotone_knots() {
        assert!(Curve::new(vec![[0.0, 0.0], [1.0, -0.1]]).is_err());
        assert!(Curve::new(vec![[0.0, 0.0], [0.0, 1.0]]).is_err());
        assert!(Curve::new(vec![[0.0, 0.0]]).is_err());
        let c: Curve = serde_json::from_str("[[0,0],[1,2]]").unwrap();
        assert_eq!(c.eval(0.25), 0.5);
        assert!(serde_json::from_str::<Curve>("[[0,1],[1,0]]").is_err());
    }

    #[test]
    fn pid_trivial_cases() {
        let g = PidGains { kp: 2.5, ki: 0.0, kd: 0.0, out_min: -100.0, out_max: 100.0, integral_clamp: 1.0 };
        let mut p = Pid::new(g).unwrap();
        assert_eq!(p.step(3.0, 1.0, 0.1).unwrap(), 5.0);
        let mut q = Pid::new(PidGains { ki: 1.0, kd: 1.0, ..g }).unwrap();
        assert_eq!(q.step(1.0, 1.0, 0.1).unwrap(), 0.0);
        assert!(q.step(1.0, 0.0, 0.0).is_err());
    }

    /// Fine-step oracle: the same discrete PI (zero-order hold at the control
    /// interval) driving the plant integrated by forward Euler at 1/2000 of the
    /// interval.
    fn fine_step_response(g: PidGains, t_plant: f64, dt: f64, steps: usize) -> Vec<f64> {
        let mut pid = Pid::new(g).unwrap();
        let mut y = 0.0;
        let sub = 2000;
        let h = dt / sub as f64;
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let u = pid.step(1.0, y, dt).unwrap();
            for _ in 0..sub {
                y += h * (u - y) / t_plant;
            }
            out.push(y);
        }
        out
    }

    #[test]
    fn pi_on_first_order_plant_settles_without_steady_state_error() {
        let g = PidGains { kp: 2.0, ki: 6.0, kd: 0.0, out_min: -10.0, out_max: 10.0, integral_clamp: 10.0 };
        let (t_plant, dt, steps) = (0.5, 0.1, 200);
        let mut pid = Pid::new(g).unwrap();
        let mut plant = FirstOrderLag { time_constant: t_plant, y: 0.0 };
        let ys: Vec<f64> = (0..steps).map(|_| plant.advance(pid.step(1.0, plant.y, dt).unwrap(), dt)).collect();
        let oracle = fine_step_response(g, t_plant, dt, steps);
        for (a, b) in ys.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
        let settle = ys.iter().rposition(|y| (y - 1.0).abs() > 0.02).map_or(0, |i| i + 1);
        assert!(settle < 60, "settles after {settle} steps");
        assert!((ys[steps - 1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn speed_loop_tracks_vehicle_speed() {
        let mut chain = ControlChain::new(ControlConfig::default()).unwrap();
        let vp = VehicleParams::default();
        let mut v: f64 = 0.0;
        // Throttle 0 maps to half the maximum wheel speed, i.e. 5 m/s.
        for _ in 0..300 {
            let out = chain.step(Action::new(0.0, 0.0), v, &vp, 0.1).unwrap();
            v = (v + (vp.accel_gain * out.vehicle_action.throttle - vp.drag * v) * 0.1).clamp(0.0, vp.v_max);
        }
        assert!((v - 5.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn servo_follows_steering_target() {
        let mut chain = ControlChain::new(ControlConfig::default()).unwrap();
        let vp = VehicleParams::default();
        let mut out = None;
        for _ in 0..40 {
            out = Some(chain.step(Action::new(1.0, 0.0), 0.0, &vp, 0.1).unwrap());
        }
        let o = out.unwrap();
        assert!((o.servo_angle - o.servo_target).abs() < 0.01 * o.servo_target.abs(), "{o:?}");
        assert!((o.vehicle_action.steering - o.servo_angle / vp.max_steer).abs() < 1e-12);
    }

    #[test]
    fn chain_rejects_nan() {
        let mut chain = ControlChain::new(ControlConfig::default()).unwrap();
        assert!(chain.step(Action { steering: f64::NAN, throttle: 0.0 }, 0.0, &VehicleParams::default(), 0.1).is_err());
    }

    proptest! {
        #[test]
        fn filter_output_stays_in_input_range(beta in 0.01f64..=1.0, xs in proptest::collection::vec(-1.0f64..1.0, 1..100)) {
            let mut f = LowPass::new(beta).unwrap();
            let lo = xs.iter().cloned().fold(0.0, f64::min);
            let hi = xs.iter().cloned().fold(0.0, f64::max);
            for x in xs {
                let y = f.apply(Action { steering: x, throttle: x }).steering;
                prop_assert!(y >= lo - 1e-12 && y <= hi + 1e-12);
            }
        }

        #[test]
        fn map_is_monotone(a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let m = PhysicalMap::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let p = m.map_targets(Action { steering: lo, throttle: lo });
            let q = m.map_targets(Action { steering: hi, throttle: hi });
            prop_assert!(p.0 <= q.0 && p.1 <= q.1);
            prop_assert!(q.0 <= m.max_wheel_speed && q.1.abs() <= m.max_servo_angle);
        }

        #[test]
        fn action_for_inverts_the_map(a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let m = PhysicalMap::default();
            let (w1, w2) = m.map_targets(Action { steering: a, throttle: b });
            let back = m.action_for(w1, w2);
            prop_assert!((back.steering - a).abs() < 1e-9 && (back.throttle - b).abs() < 1e-9);
        }

        #[test]
        fn pid_respects_limits(errors in proptest::collection::vec(-1e6f64..1e6, 1..200), kp in 0.0f64..10.0, ki in 0.0f64..10.0, kd in 0.0f64..1.0) {
            let g = PidGains { kp, ki, kd, out_min: -2.0, out_max: 3.0, integral_clamp: 0.7 };
            let mut p = Pid::new(g).unwrap();
            for e in errors {
                let u = p.step(e, 0.0, 0.1).unwrap();
                prop_assert!((-2.0..=3.0).contains(&u));
                prop_assert!(p.integral().abs() <= 0.7);
            }
        }
    }
}

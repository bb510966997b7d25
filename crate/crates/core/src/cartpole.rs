//! Acceleration-driven cart-pendulum, a swing-up/balance controller, the assistance filter and
//! synthetic subjects.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Matrix4, SMatrix, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::wrap_angle;
use crate::trajectory::{AgentTag, Trajectory};

pub const THETA: usize = 0;
pub const X_C: usize = 1;
pub const THETA_DOT: usize = 2;
pub const XC_DOT: usize = 3;

pub const STATE_NAMES: [&str; 4] = ["theta", "x_c", "theta_dot", "xc_dot"];

/// θ = 0 is upright.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartPoleState {
    pub theta: f64,
    pub x_c: f64,
    pub theta_dot: f64,
    pub xc_dot: f64,
}

impl CartPoleState {
    pub const fn new(theta: f64, x_c: f64, theta_dot: f64, xc_dot: f64) -> Self {
        Self {
            theta,
            x_c,
            theta_dot,
            xc_dot,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.theta, self.x_c, self.theta_dot, self.xc_dot]
    }

    pub fn from_slice(s: &[f64]) -> Result<Self> {
        match s {
            [theta, x_c, theta_dot, xc_dot] => Ok(Self::new(*theta, *x_c, *theta_dot, *xc_dot)),
            _ => Err(Error::invalid(alloc::format!(
                "cart-pendulum state needs 4 components, got {}",
                s.len()
            ))),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// `½ℓ²θ̇² + gℓ cos θ`; equals `gℓ` when balanced at rest.
    pub fn pendulum_energy(&self, params: &SimParams) -> f64 {
        let l = params.length;
        0.5 * l * l * self.theta_dot * self.theta_dot + params.gravity * l * libm::cos(self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    pub length: f64,
    pub gravity: f64,
    pub damping: f64,
    pub u_sat: f64,
    pub dt: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            length: 1.0,
            gravity: 9.81,
            damping: 0.01,
            u_sat: 20.0,
            dt: 1.0 / 60.0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.length.is_finite()
            && self.length > 0.0
            && self.gravity.is_finite()
            && self.gravity > 0.0
            && self.damping.is_finite()
            && self.damping >= 0.0
            && self.u_sat.is_finite()
            && self.u_sat > 0.0
            && self.dt.is_finite()
            && self.dt > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(alloc::format!(
                "invalid simulation parameters: {self:?}"
            )))
        }
    }

    pub fn clamp_control(&self, u: f64) -> f64 {
        u.clamp(-self.u_sat, self.u_sat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub state: CartPoleState,
    /// Control actually integrated.
    pub u: f64,
    /// The requested control exceeded the saturation limit.
    pub clamped: bool,
}

fn derivative(s: &[f64; 4], u: f64, p: &SimParams) -> [f64; 4] {
    let (sin, cos) = libm::sincos(s[THETA]);
    let theta_dd = (p.gravity / p.length) * sin - (u / p.length) * cos - p.damping * s[THETA_DOT];
    [s[THETA_DOT], s[XC_DOT], theta_dd, u]
}

fn axpy(a: &[f64; 4], h: f64, k: &[f64; 4]) -> [f64; 4] {
    core::array::from_fn(|i| a[i] + h * k[i])
}

/// One RK4 step of length `dt` without wrapping.
pub fn rk4(state: [f64; 4], u: f64, params: &SimParams, dt: f64) -> [f64; 4] {
    let k1 = derivative(&state, u, params);
    let k2 = derivative(&axpy(&state, 0.5 * dt, &k1), u, params);
    let k3 = derivative(&axpy(&state, 0.5 * dt, &k2), u, params);
    let k4 = derivative(&axpy(&state, dt, &k3), u, params);
    core::array::from_fn(|i| state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Advances the plant by `params.dt`, clamping `u` to `±u_sat` and wrapping θ afterwards.
pub fn step(state: &CartPoleState, u: f64, params: &SimParams) -> Result<Step> {
    if !state.is_finite() || u.is_nan() {
        return Err(Error::SimulationFault {
            trial: None,
            step: 0,
        });
    }
    let applied = params.clamp_control(u);
    let mut next = rk4(state.to_array(), applied, params, params.dt);
    next[THETA] = wrap_angle(next[THETA]);
    let next = CartPoleState::from_slice(&next)?;
    if !next.is_finite() {
        return Err(Error::SimulationFault {
            trial: None,
            step: 0,
        });
    }
    Ok(Step {
        state: next,
        u: applied,
        clamped: applied != u,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// Diagonal of the state weight, ordered like the state.
    pub q: [f64; 4],
    pub r: f64,
    /// Riccati recursion length in steps.
    pub horizon: usize,
    pub energy_gain: f64,
    /// Cart position and velocity feedback added during swing-up.
    pub centering: [f64; 2],
    pub switch_angle: f64,
    pub switch_rate: f64,
    pub x_goal: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            q: [200.0, 80.0, 0.01, 0.2],
            r: 1.0,
            horizon: 600,
            energy_gain: 1.0,
            centering: [0.5, 1.0],
            switch_angle: 0.35,
            switch_rate: 2.0,
            x_goal: 1.0,
        }
    }
}

/// Energy-shaping swing-up with a finite-horizon discrete LQR near the inverted goal.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalController {
    params: SimParams,
    config: ControllerConfig,
    gain: [f64; 4],
}

/// Zero-order-hold discretization of the upright linearization.
fn discrete_model(p: &SimParams) -> (Matrix4<f64>, Vector4<f64>) {
    let mut aug = SMatrix::<f64, 5, 5>::zeros();
    aug[(0, 2)] = 1.0;
    aug[(1, 3)] = 1.0;
    aug[(2, 0)] = p.gravity / p.length;
    aug[(2, 2)] = -p.damping;
    aug[(2, 4)] = -1.0 / p.length;
    aug[(3, 4)] = 1.0;
    let m = aug * p.dt;
    // ‖m‖ is small at any sensible rate, so a plain Taylor series converges quickly
    let mut e = SMatrix::<f64, 5, 5>::identity();
    let mut term = e;
    for n in 1..=30 {
        term = term * m / n as f64;
        e += term;
        if term.abs().max() < f64::EPSILON * 1e-3 {
            break;
        }
    }
    (
        e.fixed_view::<4, 4>(0, 0).into_owned(),
        e.fixed_view::<4, 1>(0, 4).into_owned(),
    )
}

fn lqr_gain(p: &SimParams, c: &ControllerConfig) -> Result<[f64; 4]> {
    let (a, b) = discrete_model(p);
    let q = Matrix4::from_diagonal(&Vector4::from(c.q));
    let mut pm = q;
    let mut k = Vector4::zeros();
    for _ in 0..c.horizon.max(1) {
        let pb = pm * b;
        let denom = c.r + b.dot(&pb);
        if !(denom > 0.0) {
            return Err(Error::NonFinite {
                function: "riccati".into(),
                sample: None,
            });
        }
        // u = -kᵀx
        k = a.transpose() * pb / denom;
        pm = q + a.transpose() * pm * a - (a.transpose() * pb) * (pb.transpose() * a) / denom;
        pm = 0.5 * (pm + pm.transpose());
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            function: "riccati".into(),
            sample: None,
        });
    }
    Ok([k[0], k[1], k[2], k[3]])
}

impl OptimalController {
    pub fn new(params: SimParams, config: ControllerConfig) -> Result<Self> {
        params.validate()?;
        if config.q.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !(config.r > 0.0) {
            return Err(Error::invalid("LQR weights must be nonnegative with r > 0"));
        }
        let gain = lqr_gain(&params, &config)?;
        Ok(Self {
            params,
            config,
            gain,
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn gain(&self) -> [f64; 4] {
        self.gain
    }

    pub fn goal(&self) -> CartPoleState {
        CartPoleState::new(0.0, self.config.x_goal, 0.0, 0.0)
    }

    pub fn in_balance_region(&self, s: &CartPoleState) -> bool {
        s.theta.abs() <= self.config.switch_angle && s.theta_dot.abs() <= self.config.switch_rate
    }

    pub fn control(&self, s: &CartPoleState) -> f64 {
        let c = &self.config;
        let p = &self.params;
        let u = if self.in_balance_region(s) {
            let e = [wrap_angle(s.theta), s.x_c - c.x_goal, s.theta_dot, s.xc_dot];
            -self.gain.iter().zip(&e).map(|(k, x)| k * x).sum::<f64>()
        } else {
            let excess = s.pendulum_energy(p) - p.gravity * p.length;
            let dir = s.theta_dot * libm::cos(s.theta);
            let sign = if dir >= 0.0 { 1.0 } else { -1.0 };
            c.energy_gain * excess * sign
                - c.centering[0] * (s.x_c - c.x_goal)
                - c.centering[1] * s.xc_dot
        };
        p.clamp_control(u)
    }
}

/// Passes `u_user` only when it pushes the same way as `u_opt`.
pub fn assistance_filter(u_user: f64, u_opt: f64) -> f64 {
    if u_user == 0.0 || (u_user > 0.0) == (u_opt > 0.0) && u_opt != 0.0 {
        u_user
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectSkill {
    /// Relative gain error applied to the optimal command.
    pub gain_error: f64,
    /// Reaction delay in samples.
    pub delay: usize,
    /// Standard deviation of additive input noise.
    pub noise: f64,
}

impl SubjectSkill {
    pub const PERFECT: Self = Self {
        gain_error: 0.0,
        delay: 0,
        noise: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if self.gain_error.is_finite()
            && self.gain_error >= 0.0
            && self.noise.is_finite()
            && self.noise >= 0.0
        {
            Ok(())
        } else {
            Err(Error::invalid(alloc::format!(
                "invalid subject skill {self:?}"
            )))
        }
    }
}

/// A subject that reacts to a delayed view of the plant with a gain error and noisy inputs.
#[derive(Debug, Clone)]
pub struct SyntheticSubject {
    skill: SubjectSkill,
    history: VecDeque<CartPoleState>,
    noise: Normal<f64>,
}

impl SyntheticSubject {
    pub fn new(skill: SubjectSkill) -> Result<Self> {
        skill.validate()?;
        let noise = Normal::new(0.0, skill.noise)
            .map_err(|_| Error::invalid("noise standard deviation must be finite"))?;
        Ok(Self {
            skill,
            history: VecDeque::with_capacity(skill.delay + 1),
            noise,
        })
    }

    pub fn skill(&self) -> &SubjectSkill {
        &self.skill
    }

    /// Forgets past observations.
    pub fn reset(&mut self) {
        self.history.clear();
    }

    pub fn act<R: Rng + ?Sized>(
        &mut self,
        s: &CartPoleState,
        controller: &OptimalController,
        rng: &mut R,
    ) -> f64 {
        if self.history.is_empty() {
            self.history
                .extend(core::iter::repeat_n(*s, self.skill.delay));
        }
        self.history.push_back(*s);
        let seen = self.history.pop_front().unwrap_or(*s);
        let mut u = controller.control(&seen) * (1.0 + self.skill.gain_error);
        if self.skill.noise > 0.0 {
            u += self.noise.sample(rng);
        }
        controller.params().clamp_control(u)
    }
}

/// Who drives the plant during a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Policy {
    Optimal,
    Subject {
        skill: SubjectSkill,
    },
    AssistedSubject {
        skill: SubjectSkill,
    },
    /// Uniform controls in `±u_sat`.
    Random,
}

impl Policy {
    pub fn agent(&self) -> AgentTag {
        match self {
            Policy::Optimal => AgentTag::Optimal,
            Policy::Subject { .. } => AgentTag::Subject,
            Policy::AssistedSubject { .. } => AgentTag::AssistedSubject,
            Policy::Random => AgentTag::Random,
        }
    }
}

/// Distribution of initial states: θ uniform in `(−π, π]`, everything else at rest and zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConditions {
    /// Fixed initial angle instead of a random one.
    pub theta: Option<f64>,
}

impl InitialConditions {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CartPoleState {
        let theta = match self.theta {
            Some(t) => wrap_angle(t),
            None => wrap_angle(rng.random_range(-PI..PI)),
        };
        CartPoleState::new(theta, 0.0, 0.0, 0.0)
    }
}

/// Number of integration steps in `duration`, which must be a whole multiple of `dt`.
pub fn step_count(duration: f64, dt: f64) -> Result<usize> {
    if !(duration.is_finite() && duration >= 0.0 && dt > 0.0) {
        return Err(Error::invalid(
            "duration must be nonnegative and dt positive",
        ));
    }
    let n = libm::round(duration / dt);
    if (n * dt - duration).abs() > 1e-9 * duration.max(1.0) {
        return Err(Error::invalid(alloc::format!(
            "duration {duration} is not a whole number of {dt} steps"
        )));
    }
    Ok(n as usize)
}

/// Seeded generator for trial `trial` of a dataset drawn with `seed`.
pub fn trial_rng(seed: u64, trial: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(trial));
    rng
}

/// Runs one closed-loop trial; samples include both endpoints.
pub fn rollout(
    policy: &Policy,
    controller: &OptimalController,
    initial: CartPoleState,
    duration: f64,
    trial_id: u32,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let params = controller.params();
    let steps = step_count(duration, params.dt)?;
    let mut subject = match policy {
        Policy::Subject { skill } | Policy::AssistedSubject { skill } => {
            Some(SyntheticSubject::new(*skill)?)
        }
        _ => None,
    };
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps + 1);
    let mut s = initial;
    for k in 0..=steps {
        let u = match (policy, subject.as_mut()) {
            (Policy::Optimal, _) => controller.control(&s),
            (Policy::Random, _) => rng.random_range(-params.u_sat..=params.u_sat),
            (Policy::Subject { .. }, Some(sub)) => sub.act(&s, controller, rng),
            (Policy::AssistedSubject { .. }, Some(sub)) => {
                let user = sub.act(&s, controller, rng);
                assistance_filter(user, controller.control(&s))
            }
            _ => unreachable!("subject policies always carry a subject"),
        };
        let u = params.clamp_control(u);
        states.push(s.to_array().to_vec());
        controls.push(u);
        if k < steps {
            s = step(&s, u, params)
                .map_err(|_| Error::SimulationFault {
                    trial: Some(trial_id),
                    step: k,
                })?
                .state;
        }
    }
    Ok(Trajectory::new(trial_id, params.dt, states, controls)?.with_agent(policy.agent(), 0))
}

/// `n_trials` independent rollouts; trial `i` draws from stream `i` of `seed`.
pub fn generate_trials(
    policy: &Policy,
    controller: &OptimalController,
    n_trials: usize,
    duration: f64,
    initial: &InitialConditions,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if n_trials == 0 {
        return Err(Error::invalid("n_trials must be at least 1"));
    }
    (0..n_trials)
        .map(|i| generate_trial(policy, controller, i as u32, duration, initial, seed))
        .collect()
}

/// Trial `trial_id` of the dataset [`generate_trials`] would produce.
pub fn generate_trial(
    policy: &Policy,
    controller: &OptimalController,
    trial_id: u32,
    duration: f64,
    initial: &InitialConditions,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = trial_rng(seed, trial_id);
    let s0 = initial.sample(&mut rng);
    let t = rollout(policy, controller, s0, duration, trial_id, &mut rng)?;
    Ok(t.with_agent(policy.agent(), seed))
}

/// Whether `|θ| < threshold` throughout the last `window` seconds.
pub fn inverted_at_end(traj: &Trajectory, window: f64, threshold: f64) -> bool {
    let n = traj.len();
    let tail = libm::round(window / traj.dt()) as usize;
    let from = n.saturating_sub(tail + 1);
    n > 0
        && traj.states()[from..]
            .iter()
            .all(|s| s[THETA].abs() < threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn controller() -> OptimalController {
        OptimalController::new(SimParams::default(), ControllerConfig::default()).unwrap()
    }

    #[test]
    fn equilibria_are_fixed_points() {
        let p = SimParams::default();
        let up = step(&CartPoleState::default(), 0.0, &p).unwrap().state;
        assert_eq!(up, CartPoleState::default());
        let down = step(&CartPoleState::new(PI, 0.0, 0.0, 0.0), 0.0, &p)
            .unwrap()
            .state;
        assert!((down.theta - PI).abs() < 1e-12 && down.theta_dot.abs() < 1e-12);
    }

    #[test]
    fn clamps_with_flag() {
        let p = SimParams::default();
        let s = step(&CartPoleState::default(), 50.0, &p).unwrap();
        assert!(s.clamped);
        assert_eq!(s.u, 20.0);
    }

    #[test]
    fn non_finite_state_faults() {
        let p = SimParams::default();
        let s = CartPoleState::new(f64::NAN, 0.0, 0.0, 0.0);
        assert!(matches!(
            step(&s, 0.0, &p),
            Err(Error::SimulationFault { .. })
        ));
    }

    #[test]
    fn controller_at_goal_is_idle() {
        let c = controller();
        assert_eq!(c.control(&c.goal()), 0.0);
    }

    #[test]
    fn controller_pumps_from_rest() {
        let c = controller();
        assert!(c.control(&CartPoleState::new(PI, 0.0, 0.0, 0.0)).abs() > 0.0);
    }

    #[test]
    fn filter_rules() {
        assert_eq!(assistance_filter(2.0, 1.0), 2.0);
        assert_eq!(assistance_filter(-2.0, 1.0), 0.0);
        assert_eq!(assistance_filter(0.0, -3.0), 0.0);
        assert_eq!(assistance_filter(1.0, 0.0), 0.0);
    }

    #[test]
    fn perfect_subject_matches_optimal() {
        let c = controller();
        let ic = InitialConditions::default();
        let a = generate_trials(&Policy::Optimal, &c, 2, 5.0, &ic, 9).unwrap();
        let b = generate_trials(
            &Policy::Subject {
                skill: SubjectSkill::PERFECT,
            },
            &c,
            2,
            5.0,
            &ic,
            9,
        )
        .unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.states(), y.states());
            assert_eq!(x.controls(), y.controls());
        }
    }

    #[test]
    fn sample_counts() {
        let c = controller();
        let ic = InitialConditions::default();
        let one = generate_trials(&Policy::Optimal, &c, 1, 1.0, &ic, 0).unwrap();
        assert_eq!(one[0].len(), 61);
        assert!(generate_trials(&Policy::Optimal, &c, 0, 1.0, &ic, 0).is_err());
        assert!(step_count(1.005, 1.0 / 60.0).is_err());
    }
}

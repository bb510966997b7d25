//! Run configuration, stored as JSON.

use std::fs;
use std::path::{Path, PathBuf};

use dss_core::cartpole::{ControllerConfig, SimParams};
use dss_core::{cartpole_basis, BasisSpec, SegmentParams, SvmParams, WindowSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BasisConfig {
    /// Ten observables of the cart-pendulum state and control; `u_sat` defaults to the plant's.
    Cartpole {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        u_sat: Option<f64>,
    },
    /// The raw state.
    Identity { dim: usize },
    /// The raw state followed by a constant.
    Affine { dim: usize },
}

impl BasisConfig {
    pub fn build(&self, sim: &SimParams) -> dss_core::Result<BasisSpec> {
        match self {
            BasisConfig::Cartpole { u_sat } => cartpole_basis(u_sat.unwrap_or(sim.u_sat)),
            BasisConfig::Identity { dim } => BasisSpec::identity(*dim),
            BasisConfig::Affine { dim } => BasisSpec::affine(*dim),
        }
    }
}

/// Inclusive `[low, high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range<T> {
    pub low: T,
    pub high: T,
}

/// Population from which synthetic subjects draw their skill.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillRanges {
    pub gain_error: Range<f64>,
    pub delay: Range<usize>,
    pub noise: Range<f64>,
}

impl Default for SkillRanges {
    fn default() -> Self {
        Self {
            gain_error: Range {
                low: 0.0,
                high: 0.4,
            },
            delay: Range { low: 0, high: 4 },
            noise: Range {
                low: 0.05,
                high: 0.3,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub optimal_trials: usize,
    /// Seconds per trial.
    pub duration: f64,
    pub subjects: usize,
    pub control_subjects: usize,
    pub trials_per_session: usize,
    pub skill: SkillRanges,
    /// A trial counts as inverted when `|θ|` stays below `inversion_threshold` for the last
    /// `inversion_window` seconds.
    pub inversion_window: f64,
    pub inversion_threshold: f64,
    /// Pass level for the paired tests in the text summary.
    pub alpha: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            optimal_trials: 30,
            duration: 30.0,
            subjects: 20,
            control_subjects: 8,
            trials_per_session: 5,
            skill: SkillRanges::default(),
            inversion_window: 10.0,
            inversion_threshold: 0.1,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub basis: BasisConfig,
    pub window: WindowSpec,
    /// `null` picks 5% of the operator count.
    pub min_cluster_size: Option<usize>,
    pub svm: SvmParams,
    pub max_training_points: usize,
    pub sim: SimParams,
    pub controller: ControllerConfig,
    pub experiment: ExperimentConfig,
    /// Dataset directory or manifest read by `segment`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let seg = SegmentParams::default();
        Self {
            seed: 0x5eed,
            basis: BasisConfig::Cartpole { u_sat: None },
            window: seg.window,
            min_cluster_size: seg.min_cluster_size,
            svm: seg.svm,
            max_training_points: seg.max_training_points,
            sim: SimParams::default(),
            controller: ControllerConfig::default(),
            experiment: ExperimentConfig::default(),
            input: None,
            output: PathBuf::from("dss-out"),
        }
    }
}

fn check(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg.to_string()))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: dss_core::Error| CliError::Config(e.to_string());
        self.window.validate().map_err(cfg)?;
        self.sim.validate().map_err(cfg)?;
        self.basis.build(&self.sim).map_err(cfg)?;
        if let Some(m) = self.min_cluster_size {
            check(m >= 2, "min_cluster_size must be at least 2")?;
        }
        check(
            self.svm.c > 0.0 && self.svm.c.is_finite(),
            "svm.c must be positive",
        )?;
        check(self.svm.tolerance > 0.0, "svm.tolerance must be positive")?;
        check(
            self.svm.gamma.is_none_or(|g| g > 0.0 && g.is_finite()),
            "svm.gamma must be positive",
        )?;
        check(
            self.max_training_points >= 2,
            "max_training_points must be at least 2",
        )?;
        let c = &self.controller;
        check(
            c.r > 0.0 && c.q.iter().all(|q| *q >= 0.0),
            "controller weights must be nonnegative with r > 0",
        )?;
        check(
            c.switch_angle > 0.0 && c.switch_rate > 0.0,
            "controller switch thresholds must be positive",
        )?;
        let e = &self.experiment;
        check(
            e.optimal_trials >= 1,
            "experiment.optimal_trials must be at least 1",
        )?;
        check(e.duration > 0.0, "experiment.duration must be positive")?;
        dss_core::cartpole::step_count(e.duration, self.sim.dt).map_err(cfg)?;
        check(
            e.trials_per_session >= 1,
            "experiment.trials_per_session must be at least 1",
        )?;
        check(
            e.subjects != 1 && e.control_subjects != 1,
            "a paired test needs at least two subjects per group",
        )?;
        let s = &e.skill;
        check(
            0.0 <= s.gain_error.low && s.gain_error.low <= s.gain_error.high,
            "skill.gain_error must be a nonnegative range",
        )?;
        check(s.delay.low <= s.delay.high, "skill.delay must be a range")?;
        check(
            0.0 <= s.noise.low && s.noise.low <= s.noise.high,
            "skill.noise must be a nonnegative range",
        )?;
        check(
            e.inversion_window >= 0.0 && e.inversion_threshold > 0.0,
            "inversion criterion must be positive",
        )?;
        check(
            e.alpha > 0.0 && e.alpha < 1.0,
            "experiment.alpha must lie in (0, 1)",
        )?;
        if let Some(input) = &self.input {
            check(
                input.exists(),
                &format!("input path {} does not exist", input.display()),
            )?;
        }
        Ok(())
    }

    pub fn segment_params(&self) -> SegmentParams {
        SegmentParams {
            window: self.window,
            min_cluster_size: self.min_cluster_size,
            svm: self.svm,
            max_training_points: self.max_training_points,
            seed: self.seed,
        }
    }

    pub fn basis(&self) -> Result<BasisSpec> {
        Ok(self.basis.build(&self.sim)?)
    }
}

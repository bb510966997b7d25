use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Who produced a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentTag {
    Optimal,
    Subject,
    AssistedSubject,
    Random,
    /// Data that did not come from the cart-pendulum harness.
    External,
}

impl AgentTag {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentTag::Optimal => "optimal",
            AgentTag::Subject => "subject",
            AgentTag::AssistedSubject => "assisted-subject",
            AgentTag::Random => "random",
            AgentTag::External => "external",
        }
    }
}

impl fmt::Display for AgentTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A uniformly sampled trial: one state vector and one scalar control per sample.
///
/// Sample `k` is taken at time `k * dt`. The control stored at sample `k` is the input applied
/// over `[k*dt, (k+1)*dt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub trial_id: u32,
    pub agent: AgentTag,
    pub seed: u64,
    dt: f64,
    states: Vec<Vec<f64>>,
    controls: Vec<f64>,
}

impl Trajectory {
    pub fn new(trial_id: u32, dt: f64, states: Vec<Vec<f64>>, controls: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(alloc::format!(
                "sample period must be positive, got {dt}"
            )));
        }
        if states.len() != controls.len() {
            return Err(Error::invalid(alloc::format!(
                "{} states but {} controls",
                states.len(),
                controls.len()
            )));
        }
        if let Some(first) = states.first() {
            let dim = first.len();
            if let Some(k) = states.iter().position(|s| s.len() != dim) {
                return Err(Error::invalid(alloc::format!(
                    "sample {k} has state dimension {} (expected {dim})",
                    states[k].len()
                )));
            }
        }
        Ok(Self {
            trial_id,
            agent: AgentTag::External,
            seed: 0,
            dt,
            states,
            controls,
        })
    }

    /// Builds a trajectory from a scalar state sequence with zero control.
    pub fn from_scalar(trial_id: u32, dt: f64, values: &[f64]) -> Result<Self> {
        let states = values.iter().map(|&v| alloc::vec![v]).collect();
        Self::new(trial_id, dt, states, alloc::vec![0.0; values.len()])
    }

    pub fn with_agent(mut self, agent: AgentTag, seed: u64) -> Self {
        self.agent = agent;
        self.seed = seed;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn controls(&self) -> &[f64] {
        &self.controls
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn sample(&self, k: usize) -> (&[f64], f64) {
        (&self.states[k], self.controls[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.states
            .iter()
            .zip(self.controls.iter())
            .map(|(s, &u)| (s.as_slice(), u))
    }

    pub fn describe(&self) -> String {
        alloc::format!(
            "trial {} ({}, {} samples)",
            self.trial_id,
            self.agent,
            self.len()
        )
    }
}

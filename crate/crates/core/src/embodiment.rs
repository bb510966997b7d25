//! Task embodiment: divergence of an agent's behavior frequencies from a reference graph.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cartpole::{THETA, THETA_DOT};
use crate::error::{Error, Result};
use crate::graph::{BehaviorGraph, SymbolDistribution};
use crate::observables::wrap_angle;
use crate::segmentation::DssModel;
use crate::trajectory::Trajectory;

/// Additive smoothing applied to both distributions before taking logs.
pub const KL_SMOOTHING: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbodimentScore {
    /// `D_KL(p ‖ q)` in nats.
    pub kl: f64,
    pub agent: SymbolDistribution,
    pub reference: SymbolDistribution,
    pub samples: usize,
}

fn validate(d: &SymbolDistribution) -> Result<()> {
    if d.is_empty() {
        return Err(Error::invalid("empty distribution"));
    }
    if d.probabilities
        .iter()
        .any(|p| !(p.is_finite() && *p >= 0.0))
    {
        return Err(Error::invalid(
            "distribution has negative or non-finite entries",
        ));
    }
    let total: f64 = d.probabilities.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(alloc::format!(
            "distribution sums to {total}"
        )));
    }
    Ok(())
}

/// `Σ p_i ln(p_i / q_i)` in nats over the support of `p`, with both distributions smoothed as
/// `(x + ε) / (1 + Bε)`.
pub fn kl_divergence(p: &SymbolDistribution, q: &SymbolDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid(alloc::format!(
            "distribution lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    validate(p)?;
    validate(q)?;
    let norm = 1.0 + p.len() as f64 * KL_SMOOTHING;
    let mut kl = 0.0;
    for (&pi, &qi) in p.probabilities.iter().zip(&q.probabilities) {
        if pi == 0.0 {
            continue;
        }
        let ps = (pi + KL_SMOOTHING) / norm;
        let qs = (qi + KL_SMOOTHING) / norm;
        kl += ps * libm::log(ps / qs);
    }
    Ok(kl.max(0.0))
}

/// Pooled frequency of each behavior of `model` over all samples of `trials`.
pub fn behavior_frequencies(model: &DssModel, trials: &[Trajectory]) -> Result<SymbolDistribution> {
    if trials.is_empty() {
        return Err(Error::invalid("no trials to score"));
    }
    let mut counts = vec![0usize; model.num_behaviors()];
    for t in trials {
        for l in model.classify_trajectory(t)? {
            counts[l] += 1;
        }
    }
    SymbolDistribution::from_counts(counts)
}

/// Combines per-trial label counts into one distribution.
pub fn pooled_counts<'a>(
    num_classes: usize,
    per_trial: impl IntoIterator<Item = &'a [usize]>,
) -> Result<SymbolDistribution> {
    let mut counts = vec![0usize; num_classes];
    for labels in per_trial {
        for &l in labels {
            if l >= num_classes {
                return Err(Error::invalid(alloc::format!("label {l} out of range")));
            }
            counts[l] += 1;
        }
    }
    SymbolDistribution::from_counts(counts)
}

/// Embodiment of `trials` relative to the state distribution of `reference`; lower is better.
pub fn task_embodiment(
    reference: &BehaviorGraph,
    model: &DssModel,
    trials: &[Trajectory],
) -> Result<EmbodimentScore> {
    if reference.state_distribution.len() != model.num_behaviors() {
        return Err(Error::invalid(alloc::format!(
            "reference has {} behaviors but the model has {}",
            reference.state_distribution.len(),
            model.num_behaviors()
        )));
    }
    let agent = behavior_frequencies(model, trials)?;
    score_distribution(&reference.state_distribution, agent)
}

pub fn score_distribution(
    reference: &SymbolDistribution,
    agent: SymbolDistribution,
) -> Result<EmbodimentScore> {
    let kl = kl_divergence(reference, &agent)?;
    Ok(EmbodimentScore {
        kl,
        samples: agent.total_count(),
        agent,
        reference: reference.clone(),
    })
}

/// Time-integrated squared deviation of `(θ, θ̇)` from `goal`, with the angle error wrapped.
pub fn integrated_mse(traj: &Trajectory, goal: (f64, f64)) -> Result<f64> {
    if traj.is_empty() {
        return Err(Error::invalid("cannot integrate an empty trajectory"));
    }
    if traj.state_dim() <= THETA_DOT {
        return Err(Error::invalid("integrated MSE needs a cart-pendulum state"));
    }
    let dt = traj.dt();
    Ok(traj
        .states()
        .iter()
        .map(|s| {
            let e = wrap_angle(s[THETA] - goal.0);
            let r = s[THETA_DOT] - goal.1;
            (e * e + r * r) * dt
        })
        .sum())
}

/// Mean of [`integrated_mse`] over a session.
pub fn session_mse(trials: &[Trajectory], goal: (f64, f64)) -> Result<f64> {
    if trials.is_empty() {
        return Err(Error::invalid("no trials in session"));
    }
    let per: Vec<f64> = trials
        .iter()
        .map(|t| integrated_mse(t, goal))
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

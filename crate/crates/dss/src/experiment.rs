//! Synthetic assistance experiment: an optimal reference, an experimental group scored with and
//! without assistance, and a control group scored twice without it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dss_core::cartpole::{
    generate_trial, inverted_at_end, InitialConditions, OptimalController, Policy, SubjectSkill,
};
use dss_core::embodiment::session_mse;
use dss_core::{
    behavior_frequencies, kl_divergence, paired_t_test, segment_detailed, DssModel,
    PairedTestResult, Trajectory,
};
use log::info;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::model_file::save_model;
use crate::svg;

/// `(θ*, θ̇*)` for the integrated MSE.
pub const MSE_GOAL: (f64, f64) = (0.0, 0.0);

const STREAM_RANDOM: u64 = 1 << 20;
const STREAM_SKILL: u64 = 2 << 20;
const STREAM_SESSION: u64 = 3 << 20;

/// Independent seed for one part of the experiment.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Group {
    Experimental,
    Control,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScore {
    /// `assisted` / `unassisted` for the experimental group, `first` / `second` for controls.
    pub tag: String,
    pub seed: u64,
    pub kl: f64,
    pub mse: f64,
    pub samples: usize,
    pub counts: Vec<usize>,
    pub inverted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub group: Group,
    pub skill: SubjectSkill,
    pub sessions: [SessionScore; 2],
}

impl SubjectRecord {
    /// Second session minus first: `unassisted − assisted` or `second − first`.
    pub fn delta_te(&self) -> f64 {
        self.sessions[1].kl - self.sessions[0].kl
    }

    pub fn delta_mse(&self) -> f64 {
        self.sessions[1].mse - self.sessions[0].mse
    }
}

/// A paired test, or why it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<PairedTestResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TestOutcome {
    fn run(a: &[f64], b: &[f64]) -> Self {
        match paired_t_test(a, b) {
            Ok(r) => Self {
                result: Some(r),
                error: None,
            },
            Err(e) => Self {
                result: None,
                error: Some(e.to_string()),
            },
        }
    }

    pub fn p_value(&self) -> Option<f64> {
        self.result.as_ref().map(|r| r.p_value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tests {
    /// Unassisted against assisted.
    pub experimental_te: TestOutcome,
    pub experimental_mse: TestOutcome,
    /// Second session against first.
    pub control_te: TestOutcome,
    pub control_mse: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalSummary {
    pub trials: usize,
    pub inverted: usize,
    pub behaviors: usize,
    pub state_distribution: Vec<f64>,
    pub edges: Vec<(usize, usize)>,
    pub single_cluster_fallback: bool,
    pub noise_operators: usize,
    pub operators: usize,
    /// The optimal trials scored against their own model.
    pub self_kl: f64,
    pub self_total_variation: f64,
    /// A uniform-random-input agent scored against the model.
    pub random_kl: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checks {
    pub optimal_inversion_rate: f64,
    pub behaviors_in_range: bool,
    pub delta_te_positive_fraction: f64,
    pub experimental_te_p_below_0_01: bool,
    pub control_te_p_above_0_05: bool,
    pub te_p_not_above_mse_p: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub divergence_unit: String,
    pub controller: String,
    pub config: RunConfig,
    pub optimal: OptimalSummary,
    pub subjects: Vec<SubjectRecord>,
    pub tests: Tests,
    pub checks: Checks,
}

impl ExperimentReport {
    pub fn group(&self, g: Group) -> impl Iterator<Item = &SubjectRecord> {
        self.subjects.iter().filter(move |s| s.group == g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// The report plus what the plots need.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub model: DssModel,
    pub controller: OptimalController,
}

fn session(
    policy: &Policy,
    controller: &OptimalController,
    n: usize,
    duration: f64,
    seed: u64,
) -> dss_core::Result<Vec<Trajectory>> {
    let ic = InitialConditions::default();
    (0..n as u32)
        .map(|i| generate_trial(policy, controller, i, duration, &ic, seed))
        .collect()
}

fn score_session(
    tag: &str,
    model: &DssModel,
    trials: &[Trajectory],
    seed: u64,
    inverted: usize,
) -> dss_core::Result<SessionScore> {
    let q = behavior_frequencies(model, trials)?;
    Ok(SessionScore {
        tag: tag.to_string(),
        seed,
        kl: kl_divergence(&model.graph.state_distribution, &q)?,
        mse: session_mse(trials, MSE_GOAL)?,
        samples: q.total_count(),
        counts: q.counts,
        inverted,
    })
}

fn draw_skill(cfg: &RunConfig, subject: u64) -> SubjectSkill {
    let r = &cfg.experiment.skill;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_SKILL + subject));
    SubjectSkill {
        gain_error: rng.random_range(r.gain_error.low..=r.gain_error.high),
        delay: rng.random_range(r.delay.low..=r.delay.high),
        noise: rng.random_range(r.noise.low..=r.noise.high),
    }
}

pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentRun> {
    cfg.validate()?;
    let e = &cfg.experiment;
    let controller =
        OptimalController::new(cfg.sim, cfg.controller).map_err(|e| e.in_stage("controller"))?;
    let basis = cfg.basis()?;
    let inverted = |trials: &[Trajectory]| {
        trials
            .iter()
            .filter(|t| inverted_at_end(t, e.inversion_window, e.inversion_threshold))
            .count()
    };

    info!("simulating {} optimal trials", e.optimal_trials);
    let ic = InitialConditions::default();
    let optimal: Vec<Trajectory> = (0..e.optimal_trials as u32)
        .into_par_iter()
        .map(|i| generate_trial(&Policy::Optimal, &controller, i, e.duration, &ic, cfg.seed))
        .collect::<dss_core::Result<_>>()
        .map_err(|e| e.in_stage("simulate"))?;
    let optimal_inverted = inverted(&optimal);

    info!("segmenting the optimal dataset");
    let seg = segment_detailed(&optimal, &basis, &cfg.segment_params())
        .map_err(|e| e.in_stage("segment"))?;
    let model = seg.model;
    let reference = &model.graph.state_distribution;
    let self_q = behavior_frequencies(&model, &optimal).map_err(|e| e.in_stage("score"))?;
    let self_kl = kl_divergence(reference, &self_q)?;

    let random_seed = derive_seed(cfg.seed, STREAM_RANDOM);
    let random = session(
        &Policy::Random,
        &controller,
        e.trials_per_session,
        e.duration,
        random_seed,
    )
    .map_err(|e| e.in_stage("simulate"))?;
    let random_q = behavior_frequencies(&model, &random).map_err(|e| e.in_stage("score"))?;

    let optimal_summary = OptimalSummary {
        trials: optimal.len(),
        inverted: optimal_inverted,
        behaviors: model.num_behaviors(),
        state_distribution: reference.probabilities.clone(),
        edges: model.graph.edges.clone(),
        single_cluster_fallback: seg.single_cluster_fallback,
        noise_operators: seg.clusters.noise_count(),
        operators: seg.bank.len(),
        self_kl,
        self_total_variation: reference.total_variation(&self_q),
        random_kl: kl_divergence(reference, &random_q)?,
        mse: session_mse(&optimal, MSE_GOAL)?,
    };
    info!(
        "{} behaviors, p = {:?}, self kl = {:.4}",
        optimal_summary.behaviors, optimal_summary.state_distribution, optimal_summary.self_kl
    );

    let n_exp = e.subjects;
    let plan: Vec<(usize, Group)> = (0..n_exp)
        .map(|i| (i, Group::Experimental))
        .chain((0..e.control_subjects).map(|i| (n_exp + i, Group::Control)))
        .collect();
    info!("scoring {} subjects", plan.len());
    let subjects: Vec<SubjectRecord> = plan
        .par_iter()
        .map(|&(index, group)| -> dss_core::Result<SubjectRecord> {
            let skill = draw_skill(cfg, index as u64);
            let (policies, tags, id) = match group {
                Group::Experimental => (
                    [Policy::AssistedSubject { skill }, Policy::Subject { skill }],
                    ["assisted", "unassisted"],
                    format!("E{:02}", index + 1),
                ),
                Group::Control => (
                    [Policy::Subject { skill }, Policy::Subject { skill }],
                    ["first", "second"],
                    format!("C{:02}", index - n_exp + 1),
                ),
            };
            let mut scores = Vec::with_capacity(2);
            for (k, (policy, tag)) in policies.iter().zip(tags).enumerate() {
                let seed = derive_seed(cfg.seed, STREAM_SESSION + 2 * index as u64 + k as u64);
                let trials = session(policy, &controller, e.trials_per_session, e.duration, seed)?;
                scores.push(score_session(
                    tag,
                    &model,
                    &trials,
                    seed,
                    inverted(&trials),
                )?);
            }
            let second = scores.pop().expect("two sessions");
            let first = scores.pop().expect("two sessions");
            Ok(SubjectRecord {
                id,
                group,
                skill,
                sessions: [first, second],
            })
        })
        .collect::<dss_core::Result<_>>()
        .map_err(|e| e.in_stage("subjects"))?;

    let column = |g: Group, session: usize, te: bool| -> Vec<f64> {
        subjects
            .iter()
            .filter(|s| s.group == g)
            .map(|s| {
                if te {
                    s.sessions[session].kl
                } else {
                    s.sessions[session].mse
                }
            })
            .collect()
    };
    let tests = Tests {
        experimental_te: TestOutcome::run(
            &column(Group::Experimental, 1, true),
            &column(Group::Experimental, 0, true),
        ),
        experimental_mse: TestOutcome::run(
            &column(Group::Experimental, 1, false),
            &column(Group::Experimental, 0, false),
        ),
        control_te: TestOutcome::run(
            &column(Group::Control, 1, true),
            &column(Group::Control, 0, true),
        ),
        control_mse: TestOutcome::run(
            &column(Group::Control, 1, false),
            &column(Group::Control, 0, false),
        ),
    };

    let exp: Vec<&SubjectRecord> = subjects
        .iter()
        .filter(|s| s.group == Group::Experimental)
        .collect();
    let positive = exp.iter().filter(|s| s.delta_te() > 0.0).count();
    let te_p = tests.experimental_te.p_value();
    let mse_p = tests.experimental_mse.p_value();
    let checks = Checks {
        optimal_inversion_rate: optimal_inverted as f64 / optimal.len() as f64,
        behaviors_in_range: (2..=5).contains(&model.num_behaviors()),
        delta_te_positive_fraction: if exp.is_empty() {
            0.0
        } else {
            positive as f64 / exp.len() as f64
        },
        experimental_te_p_below_0_01: te_p.is_some_and(|p| p < 0.01),
        control_te_p_above_0_05: tests.control_te.p_value().is_some_and(|p| p > 0.05),
        te_p_not_above_mse_p: match (te_p, mse_p) {
            (Some(t), Some(m)) => t <= m,
            (Some(_), None) => true,
            _ => false,
        },
    };

    let report = ExperimentReport {
        seed: cfg.seed,
        divergence_unit: "nats".into(),
        controller: "energy-shaping swing-up with finite-horizon discrete LQR balance".into(),
        config: cfg.clone(),
        optimal: optimal_summary,
        subjects,
        tests,
        checks,
    };
    Ok(ExperimentRun {
        report,
        model,
        controller,
    })
}

fn fmt_test(name: &str, a: &str, b: &str, t: &TestOutcome) -> String {
    match &t.result {
        Some(r) => format!(
            "{name}: {b} (µ={:.4}, σ={:.4}) vs {a} (µ={:.4}, σ={:.4}); t({})={:.4}, p={:.4e}, d={:.4} (pooled d={:.4})\n",
            r.mean_b, r.sd_b, r.mean_a, r.sd_a, r.df, r.t, r.p_value, r.cohens_d, r.cohens_d_pooled
        ),
        None => format!("{name}: not computed ({})\n", t.error.as_deref().unwrap_or("unknown")),
    }
}

/// Plain-text summary of a report.
pub fn summary_text(r: &ExperimentReport) -> String {
    let o = &r.optimal;
    let mut s = String::new();
    let _ = writeln!(s, "seed {}", r.seed);
    let _ = writeln!(s, "controller: {}", r.controller);
    let _ = writeln!(s, "optimal trials inverted: {}/{}", o.inverted, o.trials);
    let _ = writeln!(
        s,
        "behaviors: {} from {} operators ({} noise); p = {:?}",
        o.behaviors,
        o.operators,
        o.noise_operators,
        o.state_distribution
            .iter()
            .map(|p| format!("{p:.4}"))
            .collect::<Vec<_>>()
    );
    let _ = writeln!(s, "edges: {:?}", o.edges);
    let _ = writeln!(
        s,
        "optimal self kl = {:.4} nats, random-input kl = {:.4} nats",
        o.self_kl, o.random_kl
    );
    s.push_str(&fmt_test(
        "experimental TE",
        "unassisted",
        "assisted",
        &r.tests.experimental_te,
    ));
    s.push_str(&fmt_test(
        "experimental MSE",
        "unassisted",
        "assisted",
        &r.tests.experimental_mse,
    ));
    s.push_str(&fmt_test(
        "control TE",
        "second",
        "first",
        &r.tests.control_te,
    ));
    s.push_str(&fmt_test(
        "control MSE",
        "second",
        "first",
        &r.tests.control_mse,
    ));
    let _ = writeln!(
        s,
        "ΔTE > 0 for {:.0}% of experimental subjects",
        100.0 * r.checks.delta_te_positive_fraction
    );
    s
}

pub fn scores_csv(r: &ExperimentReport) -> String {
    let mut s = String::from("subject,group,session,kl,mse,samples,inverted\n");
    for sub in &r.subjects {
        for ses in &sub.sessions {
            let group = match sub.group {
                Group::Experimental => "experimental",
                Group::Control => "control",
            };
            let _ = writeln!(
                s,
                "{},{group},{},{},{},{},{}",
                sub.id, ses.tag, ses.kl, ses.mse, ses.samples, ses.inverted
            );
        }
    }
    s
}

pub fn deltas_csv(r: &ExperimentReport) -> String {
    let mut s = String::from("subject,group,delta_te,delta_mse\n");
    for sub in &r.subjects {
        let group = match sub.group {
            Group::Experimental => "experimental",
            Group::Control => "control",
        };
        let _ = writeln!(
            s,
            "{},{group},{},{}",
            sub.id,
            sub.delta_te(),
            sub.delta_mse()
        );
    }
    s
}

/// Writes all experiment outputs under `out`; on failure files already written are removed.
pub fn write_artifacts(run: &ExperimentRun, out: &Path, emit_svg: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<()> {
        let mut put = |name: &str, body: String| -> Result<()> {
            let path = out.join(name);
            fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
            written.push(path);
            Ok(())
        };
        put("report.json", run.report.to_json())?;
        put("scores.csv", scores_csv(&run.report))?;
        put("deltas.csv", deltas_csv(&run.report))?;
        put("summary.txt", summary_text(&run.report))?;
        if emit_svg {
            put("deltas.svg", svg::delta_scatter(&run.report))?;
            put(
                "partitions.svg",
                svg::partition_grid(&run.model, &run.controller)?,
            )?;
        }
        Ok(())
    })();
    let model_path = out.join("model.json");
    let result = result.and_then(|_| {
        save_model(&model_path, &run.model)?;
        written.push(model_path);
        Ok(())
    });
    match result {
        Ok(()) => Ok(written),
        Err(e) => {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            Err(e)
        }
    }
}

//! Command-line interface.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dss_core::cartpole::{
    generate_trials, InitialConditions, OptimalController, Policy, SubjectSkill,
};
use dss_core::embodiment::session_mse;
use dss_core::{behavior_frequencies, kl_divergence, segment_detailed, DssModel, Trajectory};
use log::info;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::experiment::{run_experiment, summary_text, write_artifacts, MSE_GOAL};
use crate::io::{read_dataset, read_trajectory_csv, write_dataset};
use crate::model_file::{load_model, save_model};

#[derive(Debug, Parser)]
#[command(
    name = "dss",
    version,
    about = "Segment dynamical systems into behaviors and score task embodiment"
)]
pub struct Cli {
    /// JSON run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Also write SVG figures.
    #[arg(long, global = true)]
    pub emit_svg: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgentArg {
    Optimal,
    Subject,
    Assisted,
    Random,
}

#[derive(Debug, Clone, Args)]
pub struct SkillArgs {
    #[arg(long, default_value_t = 0.2)]
    pub gain_error: f64,
    /// Reaction delay in samples.
    #[arg(long, default_value_t = 2)]
    pub delay: usize,
    #[arg(long, default_value_t = 0.15)]
    pub noise: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate trials and write them as CSV files with a manifest.
    Simulate {
        #[arg(long, value_enum, default_value_t = AgentArg::Optimal)]
        agent: AgentArg,
        /// Number of trials (defaults to the configured optimal trial count).
        #[arg(long)]
        trials: Option<usize>,
        /// Seconds per trial.
        #[arg(long)]
        duration: Option<f64>,
        #[command(flatten)]
        skill: SkillArgs,
    },
    /// Segment a dataset into behaviors and write the model.
    Segment {
        /// Dataset directory or manifest (defaults to the configured input).
        dataset: Option<PathBuf>,
        /// Also write the condensed cluster tree as JSON.
        #[arg(long)]
        dump_tree: Option<PathBuf>,
    },
    /// Score trials against a model.
    Embody {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "subject")]
        subject: String,
        /// Session tag; when omitted trials are grouped by agent.
        #[arg(long)]
        session: Option<String>,
        /// Trial CSV files or dataset directories.
        #[arg(required = true)]
        trials: Vec<PathBuf>,
    },
    /// Run the full synthetic assistance experiment.
    Experiment,
    /// Configuration helpers.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConfigAction {
    /// Write the default configuration.
    Init {
        #[arg(default_value = "dss-config.json")]
        path: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

impl Cli {
    /// The configuration with command-line overrides applied.
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        // a second call in the same process only fails because the pool exists already
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global();
    }
    if let Command::Config {
        action: ConfigAction::Init { path, force },
    } = &cli.command
    {
        return config_init(path, *force);
    }
    let cfg = cli.resolve_config()?;
    match &cli.command {
        Command::Simulate {
            agent,
            trials,
            duration,
            skill,
        } => {
            let skill = SubjectSkill {
                gain_error: skill.gain_error,
                delay: skill.delay,
                noise: skill.noise,
            };
            let paths = cmd_simulate(
                &cfg,
                *agent,
                trials.unwrap_or(cfg.experiment.optimal_trials),
                duration.unwrap_or(cfg.experiment.duration),
                skill,
            )?;
            println!("wrote {} files to {}", paths.len(), cfg.output.display());
        }
        Command::Segment { dataset, dump_tree } => {
            let dataset = dataset
                .clone()
                .or_else(|| cfg.input.clone())
                .ok_or_else(|| {
                    CliError::Config("no dataset given and no input configured".into())
                })?;
            let model = cmd_segment(&cfg, &dataset, dump_tree.as_deref())?;
            print!("{}", model.graph.summary());
        }
        Command::Embody {
            model,
            subject,
            session,
            trials,
        } => {
            let rows = cmd_embody(&cfg, model, subject, session.as_deref(), trials)?;
            for r in &rows {
                println!(
                    "{} {}: kl = {:.6} nats, mse = {:.4}, samples = {}",
                    r.subject, r.session, r.kl, r.mse, r.samples
                );
            }
        }
        Command::Experiment => {
            let run = run_experiment(&cfg)?;
            write_artifacts(&run, &cfg.output, cli.emit_svg)?;
            print!("{}", summary_text(&run.report));
        }
        Command::Config { .. } => unreachable!("handled above"),
    }
    Ok(())
}

pub fn config_init(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(CliError::Config(format!(
            "{} exists; pass --force to overwrite",
            path.display()
        )));
    }
    RunConfig::default().save(path)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_simulate(
    cfg: &RunConfig,
    agent: AgentArg,
    n_trials: usize,
    duration: f64,
    skill: SubjectSkill,
) -> Result<Vec<PathBuf>> {
    let controller = OptimalController::new(cfg.sim, cfg.controller)?;
    let (policy, prefix) = match agent {
        AgentArg::Optimal => (Policy::Optimal, "optimal"),
        AgentArg::Subject => (Policy::Subject { skill }, "subject"),
        AgentArg::Assisted => (Policy::AssistedSubject { skill }, "assisted"),
        AgentArg::Random => (Policy::Random, "random"),
    };
    info!("simulating {n_trials} {prefix} trials");
    let trials = generate_trials(
        &policy,
        &controller,
        n_trials,
        duration,
        &InitialConditions::default(),
        cfg.seed,
    )?;
    write_dataset(
        &cfg.output,
        prefix,
        &trials,
        cfg.seed,
        &cfg.sim,
        &cfg.controller,
    )
}

pub fn cmd_segment(cfg: &RunConfig, dataset: &Path, dump_tree: Option<&Path>) -> Result<DssModel> {
    let (_, trials) = read_dataset(dataset)?;
    let basis = cfg.basis()?;
    let seg = segment_detailed(&trials, &basis, &cfg.segment_params())?;
    fs::create_dir_all(&cfg.output).map_err(|e| CliError::io(&cfg.output, e))?;
    save_model(&cfg.output.join("model.json"), &seg.model)?;
    if let Some(p) = dump_tree {
        let text =
            serde_json::to_string_pretty(&seg.tree).map_err(|e| CliError::Data(e.to_string()))?;
        fs::write(p, text + "\n").map_err(|e| CliError::io(p, e))?;
    }
    Ok(seg.model)
}

/// One scored subject-session.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub subject: String,
    pub session: String,
    pub kl: f64,
    pub mse: f64,
    pub samples: usize,
    pub counts: Vec<usize>,
}

fn load_trials(paths: &[PathBuf]) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() || p.extension().is_some_and(|e| e == "json") {
            out.extend(read_dataset(p)?.1);
        } else {
            let id = out.len() as u32;
            out.push(read_trajectory_csv(p, id, None)?);
        }
    }
    Ok(out)
}

pub fn cmd_embody(
    cfg: &RunConfig,
    model_path: &Path,
    subject: &str,
    session: Option<&str>,
    paths: &[PathBuf],
) -> Result<Vec<ScoreRow>> {
    let model = load_model(model_path)?;
    let trials = load_trials(paths)?;
    if trials.is_empty() {
        return Err(CliError::Data("no trials to score".into()));
    }
    let want = model.basis.state_dim();
    if let Some(t) = trials.iter().find(|t| t.state_dim() != want) {
        return Err(CliError::Data(format!(
            "trial {} has state dimension {} but the model expects {want}",
            t.trial_id,
            t.state_dim()
        )));
    }
    let mut groups: BTreeMap<String, Vec<Trajectory>> = BTreeMap::new();
    for t in trials {
        let key = session
            .map(str::to_string)
            .unwrap_or_else(|| t.agent.as_str().to_string());
        groups.entry(key).or_default().push(t);
    }
    let rows = groups
        .into_iter()
        .map(|(session, trials)| {
            let q = behavior_frequencies(&model, &trials)?;
            Ok(ScoreRow {
                subject: subject.to_string(),
                session,
                kl: kl_divergence(&model.graph.state_distribution, &q)?,
                mse: session_mse(&trials, MSE_GOAL)?,
                samples: q.total_count(),
                counts: q.counts,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(&cfg.output).map_err(|e| CliError::io(&cfg.output, e))?;
    let path = cfg.output.join("scores.csv");
    fs::write(&path, scores_table(&rows, model.num_behaviors()))
        .map_err(|e| CliError::io(&path, e))?;
    Ok(rows)
}

pub fn scores_table(rows: &[ScoreRow], classes: usize) -> String {
    let mut s = String::from("subject,session,kl,mse,samples");
    for k in 0..classes {
        let _ = write!(s, ",count_{k}");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(
            s,
            "{},{},{},{},{}",
            r.subject, r.session, r.kl, r.mse, r.samples
        );
        for c in &r.counts {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
    }
    s
}

//! Trajectory CSV files and dataset manifests.

use std::fs;
use std::path::{Path, PathBuf};

use dss_core::cartpole::{ControllerConfig, SimParams, STATE_NAMES};
use dss_core::{AgentTag, Trajectory};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const CSV_HEADER: [&str; 6] = ["t", "theta", "x_c", "theta_dot", "xc_dot", "u"];
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    if traj.state_dim() != STATE_NAMES.len() {
        return Err(CliError::Data(format!(
            "trial {} has {} state components; the CSV schema needs {}",
            traj.trial_id,
            traj.state_dim(),
            STATE_NAMES.len()
        )));
    }
    let io = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(CSV_HEADER).map_err(io)?;
    for (k, (s, u)) in traj.iter().enumerate() {
        let row = [traj.time(k), s[0], s[1], s[2], s[3], u];
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a trajectory; `dt` falls back to the spacing of the `t` column when not given.
pub fn read_trajectory_csv(path: &Path, trial_id: u32, dt: Option<f64>) -> Result<Trajectory> {
    let bad = |msg: String| CliError::Data(format!("{}: {msg}", path.display()));
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(bad(format!(
            "header must be `{}`, found `{}`",
            CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut controls = Vec::new();
    for (i, rec) in r.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let rec = rec.map_err(|e| bad(format!("row {line}: {e}")))?;
        if rec.len() != CSV_HEADER.len() {
            return Err(bad(format!(
                "row {line}: expected {} columns, found {}",
                CSV_HEADER.len(),
                rec.len()
            )));
        }
        let mut vals = [0.0; 6];
        for (j, field) in rec.iter().enumerate() {
            vals[j] = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    bad(format!(
                        "row {line}, column {}: `{field}` is not a finite number",
                        CSV_HEADER[j]
                    ))
                })?;
        }
        times.push(vals[0]);
        states.push(vals[1..5].to_vec());
        controls.push(vals[5]);
    }
    let dt = match dt {
        Some(dt) => dt,
        None if times.len() >= 2 => times[1] - times[0],
        None => {
            return Err(bad(
                "cannot infer the sample period from fewer than two rows".into(),
            ))
        }
    };
    for (k, t) in times.iter().enumerate() {
        let expected = times[0] + k as f64 * dt;
        if (t - expected).abs() > 1e-6 * dt.max(1e-12) * (k as f64 + 1.0) {
            return Err(bad(format!(
                "row {}, column t: samples are not uniformly spaced by {dt}",
                k + 2
            )));
        }
    }
    Trajectory::new(trial_id, dt, states, controls).map_err(|e| bad(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: PathBuf,
    pub trial_id: u32,
    pub agent: AgentTag,
    pub seed: u64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub sim: SimParams,
    pub controller: ControllerConfig,
    pub trials: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if m.schema_version != MANIFEST_VERSION {
            return Err(CliError::Data(format!(
                "{}: unsupported manifest version {}",
                path.display(),
                m.schema_version
            )));
        }
        Ok(m)
    }
}

/// Writes `trials` as `<dir>/<prefix>_<id>.csv` plus the manifest, returning every path written.
pub fn write_dataset(
    dir: &Path,
    prefix: &str,
    trials: &[Trajectory],
    seed: u64,
    sim: &SimParams,
    controller: &ControllerConfig,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::with_capacity(trials.len() + 1);
    let mut entries = Vec::with_capacity(trials.len());
    for t in trials {
        let name = PathBuf::from(format!("{prefix}_{:03}.csv", t.trial_id));
        let path = dir.join(&name);
        write_trajectory_csv(&path, t)?;
        written.push(path);
        entries.push(ManifestEntry {
            file: name,
            trial_id: t.trial_id,
            agent: t.agent,
            seed: t.seed,
            samples: t.len(),
        });
    }
    let manifest = Manifest {
        schema_version: MANIFEST_VERSION,
        seed,
        sim: *sim,
        controller: *controller,
        trials: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    manifest.save(&path)?;
    written.push(path);
    Ok(written)
}

/// Loads every trial in a dataset given its directory or manifest path.
pub fn read_dataset(path: &Path) -> Result<(Manifest, Vec<Trajectory>)> {
    let manifest_path = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let manifest = Manifest::load(&manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let trials = manifest
        .trials
        .iter()
        .map(|e| {
            let t = read_trajectory_csv(&root.join(&e.file), e.trial_id, Some(manifest.sim.dt))?;
            if t.len() != e.samples {
                return Err(CliError::Data(format!(
                    "{}: manifest lists {} samples, file has {}",
                    e.file.display(),
                    e.samples,
                    t.len()
                )));
            }
            Ok(t.with_agent(e.agent, e.seed))
        })
        .collect::<Result<_>>()?;
    Ok((manifest, trials))
}

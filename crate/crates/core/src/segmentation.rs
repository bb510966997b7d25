//! Windowed operator fitting, clustering into behaviors, exemplar synthesis and labelling.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{classify_trajectory, train_svm, SvmModel, SvmParams};
use crate::cluster::{
    default_min_cluster_size, hdbscan_with, ClusterResult, CondensedTree, FeatureMatrix,
    HdbscanParams,
};
use crate::error::{Error, Result};
use crate::graph::{build_graph, labelled_runs, BehaviorGraph};
use crate::koopman::{fit_window, KoopmanOperator, WindowMeta};
use crate::observables::{BasisSpec, LiftedPoint, LiftedTrajectory};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub size: usize,
    pub overlap: f64,
}

impl WindowSpec {
    pub fn new(size: usize, overlap: f64) -> Result<Self> {
        let spec = Self { size, overlap };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::invalid("window size must be at least 2 samples"));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::invalid(alloc::format!(
                "window overlap must lie in [0, 1), got {}",
                self.overlap
            )));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        (libm::round(self.size as f64 * (1.0 - self.overlap)) as usize).max(1)
    }

    /// Start indices of every full window over `len` samples.
    pub fn starts(&self, len: usize) -> Vec<usize> {
        if len < self.size {
            return Vec::new();
        }
        (0..=len - self.size).step_by(self.stride()).collect()
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            size: 120,
            overlap: 0.75,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    pub trial_id: u32,
    pub start: usize,
    pub points: &'a [LiftedPoint],
}

/// Splits a lifted trajectory into full-size windows; a short trailing remainder is dropped.
pub fn make_windows<'a>(
    lifted: &'a LiftedTrajectory,
    spec: &WindowSpec,
) -> Result<Vec<Window<'a>>> {
    spec.validate()?;
    if lifted.len() < spec.size {
        return Err(Error::invalid(alloc::format!(
            "trial {} has {} samples, shorter than the window size {}",
            lifted.trial_id,
            lifted.len(),
            spec.size
        )));
    }
    Ok(spec
        .starts(lifted.len())
        .into_iter()
        .map(|start| Window {
            trial_id: lifted.trial_id,
            start,
            points: &lifted.points[start..start + spec.size],
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankEntry {
    /// Position of the trial in the input list.
    pub trial: usize,
    pub start: usize,
}

/// One operator per window, in trial order then window-start order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorBank {
    pub operators: Vec<KoopmanOperator>,
    pub entries: Vec<BankEntry>,
    pub window_size: usize,
}

impl OperatorBank {
    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }
}

pub fn operator_bank(
    trials: &[LiftedTrajectory],
    spec: &WindowSpec,
    basis_id: &str,
) -> Result<OperatorBank> {
    let mut operators = Vec::new();
    let mut entries = Vec::new();
    for (t, lifted) in trials.iter().enumerate() {
        for w in make_windows(lifted, spec)? {
            let meta = WindowMeta {
                trial_id: w.trial_id,
                start: w.start,
                len: w.points.len(),
            };
            let op =
                fit_window(w.points, basis_id, Some(meta)).map_err(|e| match e {
                    Error::InvalidInput(m) | Error::Degenerate(m) => Error::invalid(
                        alloc::format!("trial {} window at {}: {m}", w.trial_id, w.start),
                    ),
                    other => other,
                })?;
            operators.push(op);
            entries.push(BankEntry {
                trial: t,
                start: w.start,
            });
        }
    }
    Ok(OperatorBank {
        operators,
        entries,
        window_size: spec.size,
    })
}

/// Membership-weighted class averages `K̄_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExemplarSet {
    pub exemplars: Vec<KoopmanOperator>,
}

impl ExemplarSet {
    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&KoopmanOperator> {
        self.exemplars.get(i)
    }
}

pub fn synthesize_exemplars(bank: &OperatorBank, clusters: &ClusterResult) -> Result<ExemplarSet> {
    if clusters.labels.len() != bank.len() {
        return Err(Error::invalid(alloc::format!(
            "{} cluster labels for {} operators",
            clusters.labels.len(),
            bank.len()
        )));
    }
    if clusters.num_classes == 0 {
        return Err(Error::NoBehaviors);
    }
    let mut exemplars = Vec::with_capacity(clusters.num_classes);
    for class in 0..clusters.num_classes {
        let members = clusters.class_members(class)?;
        let mut weights: Vec<f64> = members.iter().map(|&i| clusters.membership[i]).collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            weights.iter_mut().for_each(|w| *w /= total);
        } else {
            let u = 1.0 / members.len() as f64;
            weights.iter_mut().for_each(|w| *w = u);
        }
        let first = &bank.operators[members[0]];
        let n = first.dimension();
        let mut matrix = nalgebra::DMatrix::zeros(n, n);
        let mut residual = 0.0;
        for (&i, &w) in members.iter().zip(&weights) {
            if w == 0.0 {
                continue;
            }
            matrix += bank.operators[i].matrix() * w;
            residual += bank.operators[i].residual * w;
        }
        let mut op = KoopmanOperator::from_matrix(matrix, first.basis_id.clone())?;
        op.residual = residual;
        exemplars.push(op);
    }
    Ok(ExemplarSet { exemplars })
}

/// Per-sample labels of one trial; `None` marks samples covered only by noise windows (or by
/// no window at all).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrial {
    pub trial_id: u32,
    pub labels: Vec<Option<usize>>,
    pub points: Vec<LiftedPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub trials: Vec<LabeledTrial>,
}

impl LabeledDataset {
    pub fn labelled_count(&self) -> usize {
        self.trials
            .iter()
            .map(|t| t.labels.iter().filter(|l| l.is_some()).count())
            .sum()
    }

    pub fn sequences(&self) -> Vec<Vec<usize>> {
        self.trials
            .iter()
            .flat_map(|t| labelled_runs(&t.labels))
            .collect()
    }

    /// One full-length sequence per trial, with unlabelled samples assigned by `svm`.
    pub fn completed(&self, svm: &SvmModel) -> Result<Vec<Vec<usize>>> {
        self.trials
            .iter()
            .map(|t| {
                t.labels
                    .iter()
                    .zip(&t.points)
                    .map(|(l, p)| match l {
                        Some(l) => Ok(*l),
                        None => svm.classify(p),
                    })
                    .collect()
            })
            .collect()
    }
}

/// Each sample takes the label of the covering non-noise window with the highest membership;
/// ties go to the earliest-starting window.
pub fn label_samples(
    bank: &OperatorBank,
    clusters: &ClusterResult,
    trials: &[LiftedTrajectory],
) -> Result<LabeledDataset> {
    if clusters.labels.len() != bank.len() {
        return Err(Error::invalid(
            "cluster result does not match the operator bank",
        ));
    }
    let mut best: Vec<Vec<Option<(usize, f64)>>> =
        trials.iter().map(|t| vec![None; t.len()]).collect();
    for (w, entry) in bank.entries.iter().enumerate() {
        let Some(label) = clusters.labels[w] else {
            continue;
        };
        let m = clusters.membership[w];
        let slots = best
            .get_mut(entry.trial)
            .ok_or_else(|| Error::invalid("bank references a missing trial"))?;
        let end = entry.start + bank.window_size;
        if end > slots.len() {
            return Err(Error::invalid(
                "bank window extends past the end of its trial",
            ));
        }
        for slot in &mut slots[entry.start..end] {
            match slot {
                Some((_, cur)) if *cur >= m => {}
                _ => *slot = Some((label, m)),
            }
        }
    }
    let trials = trials
        .iter()
        .zip(best)
        .map(|(t, b)| LabeledTrial {
            trial_id: t.trial_id,
            labels: b.into_iter().map(|s| s.map(|(l, _)| l)).collect(),
            points: t.points.clone(),
        })
        .collect();
    Ok(LabeledDataset { trials })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub window: WindowSpec,
    /// `None` selects 5% of the operator count (at least 3).
    pub min_cluster_size: Option<usize>,
    pub svm: SvmParams,
    /// Labelled samples are subsampled (stratified by class) to at most this many before
    /// SVM training.
    pub max_training_points: usize,
    pub seed: u64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            window: WindowSpec::default(),
            min_cluster_size: None,
            svm: SvmParams::default(),
            max_training_points: 8000,
            seed: 0,
        }
    }
}

/// Hyperparameters as actually used, recorded in the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub window_size: usize,
    pub overlap: f64,
    pub min_cluster_size: usize,
    pub svm: SvmParams,
    pub max_training_points: usize,
    pub seed: u64,
}

/// The product of segmentation: basis, behavior graph (with exemplars) and partition SVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DssModel {
    pub basis: BasisSpec,
    pub graph: BehaviorGraph,
    pub svm: SvmModel,
    pub hyperparameters: Hyperparameters,
}

impl DssModel {
    pub fn exemplars(&self) -> &ExemplarSet {
        &self.graph.nodes
    }

    pub fn num_behaviors(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn classify_trajectory(&self, traj: &Trajectory) -> Result<Vec<usize>> {
        classify_trajectory(&self.svm, &self.basis, traj)
    }
}

/// Every intermediate product of a segmentation run.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub model: DssModel,
    pub lifted: Vec<LiftedTrajectory>,
    pub bank: OperatorBank,
    pub clusters: ClusterResult,
    pub tree: CondensedTree,
    pub labeled: LabeledDataset,
    /// True when clustering fell back to treating the whole bank as one behavior.
    pub single_cluster_fallback: bool,
}

pub fn segment(
    trials: &[Trajectory],
    basis: &BasisSpec,
    params: &SegmentParams,
) -> Result<DssModel> {
    segment_detailed(trials, basis, params).map(|s| s.model)
}

pub fn segment_detailed(
    trials: &[Trajectory],
    basis: &BasisSpec,
    params: &SegmentParams,
) -> Result<Segmentation> {
    if trials.is_empty() {
        return Err(Error::invalid("no trials to segment").in_stage("lift"));
    }
    let lifted: Vec<LiftedTrajectory> = trials
        .iter()
        .map(|t| basis.lift(t))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("lift"))?;

    params.window.validate().map_err(|e| e.in_stage("window"))?;
    let bank =
        operator_bank(&lifted, &params.window, basis.id()).map_err(|e| e.in_stage("bank"))?;

    let features =
        FeatureMatrix::from_operators(&bank.operators).map_err(|e| e.in_stage("cluster"))?;
    let mcs = params
        .min_cluster_size
        .unwrap_or_else(|| default_min_cluster_size(bank.len()));
    let mut hp = HdbscanParams::new(mcs);
    let (mut clusters, mut tree) =
        hdbscan_with(&features, hp).map_err(|e| e.in_stage("cluster"))?;
    let mut fallback = false;
    if clusters.num_classes == 0 && bank.len() >= mcs {
        // no split survived: the whole bank is one behavior
        hp.allow_single_cluster = true;
        (clusters, tree) = hdbscan_with(&features, hp).map_err(|e| e.in_stage("cluster"))?;
        fallback = true;
    }
    if clusters.num_classes == 0 {
        return Err(Error::NoBehaviors.in_stage("cluster"));
    }

    let exemplars = synthesize_exemplars(&bank, &clusters).map_err(|e| e.in_stage("exemplars"))?;
    let labeled = label_samples(&bank, &clusters, &lifted).map_err(|e| e.in_stage("label"))?;

    let training = training_set(
        &labeled,
        clusters.num_classes,
        params.max_training_points,
        params.seed,
    );
    let svm = train_svm(&training, &params.svm).map_err(|e| e.in_stage("svm"))?;

    let sequences = labeled.completed(&svm).map_err(|e| e.in_stage("graph"))?;
    let graph = build_graph(exemplars, &sequences).map_err(|e| e.in_stage("graph"))?;

    let model = DssModel {
        basis: basis.clone(),
        graph,
        svm,
        hyperparameters: Hyperparameters {
            window_size: params.window.size,
            overlap: params.window.overlap,
            min_cluster_size: mcs,
            svm: params.svm,
            max_training_points: params.max_training_points,
            seed: params.seed,
        },
    };
    Ok(Segmentation {
        model,
        lifted,
        bank,
        clusters,
        tree,
        labeled,
        single_cluster_fallback: fallback,
    })
}

const MIN_TRAINING_PER_CLASS: usize = 50;

/// Labelled samples for SVM training, subsampled per class when above `cap`.
fn training_set(
    labeled: &LabeledDataset,
    num_classes: usize,
    cap: usize,
    seed: u64,
) -> Vec<(LiftedPoint, usize)> {
    let mut by_class: Vec<Vec<&LiftedPoint>> = vec![Vec::new(); num_classes];
    for t in &labeled.trials {
        for (p, l) in t.points.iter().zip(&t.labels) {
            if let Some(l) = l {
                by_class[*l].push(p);
            }
        }
    }
    let total: usize = by_class.iter().map(Vec::len).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(total.min(cap.max(1)));
    for (class, pts) in by_class.iter().enumerate() {
        if total <= cap {
            out.extend(pts.iter().map(|p| ((*p).clone(), class)));
            continue;
        }
        let share = (cap as f64 * pts.len() as f64 / total as f64) as usize;
        let quota = share.max(MIN_TRAINING_PER_CLASS.min(pts.len()));
        let mut idx = rand::seq::index::sample(&mut rng, pts.len(), quota).into_vec();
        idx.sort_unstable();
        out.extend(idx.into_iter().map(|i| (pts[i].clone(), class)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn scalar_lifted(n: usize, trial_id: u32) -> LiftedTrajectory {
        let points = (0..n).map(|k| LiftedPoint::new(vec![k as f64])).collect();
        LiftedTrajectory::new(points, 1.0, trial_id).unwrap()
    }

    fn op(v: f64) -> KoopmanOperator {
        KoopmanOperator::from_matrix(DMatrix::from_element(1, 1, v), "x").unwrap()
    }

    fn bank_of(values: &[f64], size: usize) -> OperatorBank {
        OperatorBank {
            operators: values.iter().map(|&v| op(v)).collect(),
            entries: (0..values.len())
                .map(|i| BankEntry {
                    trial: 0,
                    start: i * size,
                })
                .collect(),
            window_size: size,
        }
    }

    #[test]
    fn window_starts() {
        let l = scalar_lifted(10, 0);
        let w = make_windows(&l, &WindowSpec::new(4, 0.5).unwrap()).unwrap();
        assert_eq!(
            w.iter().map(|w| w.start).collect::<Vec<_>>(),
            vec![0, 2, 4, 6]
        );
        assert!(w.iter().all(|w| w.points.len() == 4));
        let w = make_windows(&l, &WindowSpec::new(10, 0.0).unwrap()).unwrap();
        assert_eq!(w.len(), 1);
        let l9 = scalar_lifted(9, 0);
        let w = make_windows(&l9, &WindowSpec::new(4, 0.75).unwrap()).unwrap();
        assert_eq!(
            w.iter().map(|w| w.start).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 4, 5]
        );
    }

    #[test]
    fn short_trial_is_rejected() {
        let l = scalar_lifted(3, 7);
        let err = make_windows(&l, &WindowSpec::new(4, 0.0).unwrap()).unwrap_err();
        assert!(alloc::format!("{err}").contains("trial 7"));
    }

    #[test]
    fn window_spec_validation() {
        assert!(WindowSpec::new(1, 0.0).is_err());
        assert!(WindowSpec::new(4, 1.0).is_err());
        assert!(WindowSpec::new(4, -0.1).is_err());
        assert_eq!(WindowSpec::new(120, 0.75).unwrap().stride(), 30);
    }

    #[test]
    fn cartpole_bank_size_arithmetic() {
        let spec = WindowSpec::new(120, 0.75).unwrap();
        assert_eq!(spec.starts(1800).len(), 57);
        assert_eq!(spec.starts(1801).len(), 57);
    }

    #[test]
    fn bank_over_one_trial() {
        let l = scalar_lifted(10, 0);
        let bank = operator_bank(&[l], &WindowSpec::new(4, 0.5).unwrap(), "x").unwrap();
        assert_eq!(bank.len(), 4);
        let short = scalar_lifted(3, 5);
        let err = operator_bank(
            &[scalar_lifted(10, 0), short],
            &WindowSpec::new(4, 0.5).unwrap(),
            "x",
        )
        .unwrap_err();
        assert!(alloc::format!("{err}").contains("trial 5"));
    }

    #[test]
    fn exemplar_weighting() {
        let bank = bank_of(&[1.0, 3.0], 2);
        let single = ClusterResult::new(vec![Some(0), None], vec![0.7, 0.0]).unwrap();
        assert_eq!(
            synthesize_exemplars(&bank, &single).unwrap().exemplars[0].matrix()[(0, 0)],
            1.0
        );
        let equal = ClusterResult::new(vec![Some(0), Some(0)], vec![0.5, 0.5]).unwrap();
        assert_eq!(
            synthesize_exemplars(&bank, &equal).unwrap().exemplars[0].matrix()[(0, 0)],
            2.0
        );
        let skewed = ClusterResult::new(vec![Some(0), Some(0)], vec![1.0, 0.0]).unwrap();
        assert_eq!(
            synthesize_exemplars(&bank, &skewed).unwrap().exemplars[0].matrix()[(0, 0)],
            1.0
        );
        let zeros = ClusterResult::new(vec![Some(0), Some(0)], vec![0.0, 0.0]).unwrap();
        assert_eq!(
            synthesize_exemplars(&bank, &zeros).unwrap().exemplars[0].matrix()[(0, 0)],
            2.0
        );
    }

    #[test]
    fn all_noise_has_no_behaviors() {
        let bank = bank_of(&[1.0, 3.0], 2);
        let noise = ClusterResult::new(vec![None, None], vec![0.0, 0.0]).unwrap();
        assert_eq!(synthesize_exemplars(&bank, &noise), Err(Error::NoBehaviors));
    }

    #[test]
    fn labels_without_overlap() {
        let bank = bank_of(&[1.0, 2.0, 3.0], 2);
        let cl = ClusterResult::new(vec![Some(0), Some(1), Some(0)], vec![1.0; 3]).unwrap();
        let ds = label_samples(&bank, &cl, &[scalar_lifted(7, 0)]).unwrap();
        assert_eq!(
            ds.trials[0].labels,
            vec![Some(0), Some(0), Some(1), Some(1), Some(0), Some(0), None]
        );
    }

    #[test]
    fn overlapping_windows_prefer_membership_then_earliest() {
        let mut bank = bank_of(&[1.0, 2.0], 4);
        bank.entries[1].start = 2;
        let cl = ClusterResult::new(vec![Some(1), Some(0)], vec![0.4, 0.9]).unwrap();
        let ds = label_samples(&bank, &cl, &[scalar_lifted(6, 0)]).unwrap();
        assert_eq!(
            ds.trials[0].labels,
            vec![Some(1), Some(1), Some(0), Some(0), Some(0), Some(0)]
        );
        let tie = ClusterResult::new(vec![Some(1), Some(0)], vec![0.5, 0.5]).unwrap();
        let ds = label_samples(&bank, &tie, &[scalar_lifted(6, 0)]).unwrap();
        assert_eq!(
            ds.trials[0].labels,
            vec![Some(1), Some(1), Some(1), Some(1), Some(0), Some(0)]
        );
    }

    #[test]
    fn noise_only_coverage_is_unlabelled() {
        let bank = bank_of(&[1.0, 2.0], 3);
        let cl = ClusterResult::new(vec![None, Some(0)], vec![0.0, 1.0]).unwrap();
        let ds = label_samples(&bank, &cl, &[scalar_lifted(6, 0)]).unwrap();
        assert_eq!(
            ds.trials[0].labels,
            vec![None, None, None, Some(0), Some(0), Some(0)]
        );
        assert_eq!(ds.labelled_count(), 3);
    }
}

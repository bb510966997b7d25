//! Dynamical system segmentation: windowed Koopman operators clustered into behaviors, a
//! support-vector partition of state space, a behavior graph, and KL-based task embodiment.
//!
//! The crate is `no_std` with `alloc`. File formats, the command line and the experiment
//! harness live in the `dss` crate.

#![no_std]
extern crate alloc;

pub mod cartpole;
pub mod classify;
pub mod cluster;
pub mod embodiment;
pub mod error;
pub mod graph;
pub mod koopman;
pub mod observables;
pub mod segmentation;
pub mod stats;
pub mod trajectory;

pub use classify::{classify_trajectory, train_svm, Kernel, KernelKind, SvmModel, SvmParams};
pub use cluster::{hdbscan, hdbscan_with, ClusterResult, FeatureMatrix, HdbscanParams};
pub use embodiment::{
    behavior_frequencies, integrated_mse, kl_divergence, task_embodiment, EmbodimentScore,
};
pub use error::{Error, Result};
pub use graph::{
    build_graph, extract_edges, state_distribution, BehaviorGraph, SymbolDistribution,
};
pub use koopman::{fit_koopman, fit_window, KoopmanOperator};
pub use observables::{cartpole_basis, BasisSpec, LiftedPoint, LiftedTrajectory, Observable};
pub use segmentation::{
    segment, segment_detailed, DssModel, ExemplarSet, SegmentParams, WindowSpec,
};
pub use stats::{cohens_d_paired, paired_t_test, summarize, PairedTestResult};
pub use trajectory::{AgentTag, Trajectory};

//! Behavior graph: exemplar operators as nodes, observed label transitions as edges.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::ExemplarSet;

/// Relative frequency of each behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolDistribution {
    pub probabilities: Vec<f64>,
    pub counts: Vec<usize>,
}

impl SymbolDistribution {
    /// Validates an explicit probability vector (no counts attached).
    pub fn from_probabilities(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::invalid("a distribution needs at least one class"));
        }
        if probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid(
                "probabilities must be finite and nonnegative",
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(alloc::format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let counts = vec![0; probabilities.len()];
        Ok(Self {
            probabilities,
            counts,
        })
    }

    pub fn from_counts(counts: Vec<usize>) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::invalid(
                "cannot form a distribution from zero samples",
            ));
        }
        let probabilities = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Self {
            probabilities,
            counts,
        })
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn total_count(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `½ Σ |p_i − q_i|`.
    pub fn total_variation(&self, other: &Self) -> f64 {
        0.5 * self
            .probabilities
            .iter()
            .zip(&other.probabilities)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Every ordered pair `(l_k, l_{k+1})` seen within a sequence; self-loops included.
pub fn extract_edges(sequences: &[Vec<usize>]) -> BTreeSet<(usize, usize)> {
    sequences
        .iter()
        .flat_map(|s| s.windows(2).map(|w| (w[0], w[1])))
        .collect()
}

/// Pooled relative frequency of each class over all samples of all sequences.
pub fn state_distribution(
    sequences: &[Vec<usize>],
    num_classes: usize,
) -> Result<SymbolDistribution> {
    let mut counts = vec![0usize; num_classes];
    for &l in sequences.iter().flatten() {
        if l >= num_classes {
            return Err(Error::invalid(alloc::format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        counts[l] += 1;
    }
    SymbolDistribution::from_counts(counts)
}

/// Splits a partially labelled sequence into maximal labelled runs so transitions are never
/// tracked across unlabelled gaps.
pub fn labelled_runs(labels: &[Option<usize>]) -> Vec<Vec<usize>> {
    let mut runs = Vec::new();
    let mut current = Vec::new();
    for l in labels {
        match l {
            Some(l) => current.push(*l),
            None if !current.is_empty() => runs.push(core::mem::take(&mut current)),
            None => {}
        }
    }
    if !current.is_empty() {
        runs.push(current);
    }
    runs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorGraph {
    pub nodes: ExemplarSet,
    pub edges: Vec<(usize, usize)>,
    pub state_distribution: SymbolDistribution,
}

pub fn build_graph(exemplars: ExemplarSet, sequences: &[Vec<usize>]) -> Result<BehaviorGraph> {
    let k = exemplars.len();
    let state_distribution = state_distribution(sequences, k)?;
    let edges = extract_edges(sequences).into_iter().collect();
    Ok(BehaviorGraph {
        nodes: exemplars,
        edges,
        state_distribution,
    })
}

impl BehaviorGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.binary_search(&(from, to)).is_ok()
    }

    /// Plain-text node list, adjacency and distribution.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes: {}", self.num_nodes());
        for (i, p) in self.state_distribution.probabilities.iter().enumerate() {
            let succ: Vec<String> = self
                .edges
                .iter()
                .filter(|(a, _)| *a == i)
                .map(|(_, b)| alloc::format!("{b}"))
                .collect();
            let _ = writeln!(
                s,
                "  {i}: p = {p:.4} ({} samples) -> [{}]",
                self.state_distribution.counts.get(i).copied().unwrap_or(0),
                succ.join(", ")
            );
        }
        s
    }

    /// Graphviz description of the graph.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph behaviors {\n");
        for (i, p) in self.state_distribution.probabilities.iter().enumerate() {
            let _ = writeln!(s, "  b{i} [label=\"{i}\\np={p:.4}\"];");
        }
        for (a, b) in &self.edges {
            let _ = writeln!(s, "  b{a} -> b{b};");
        }
        s.push_str("}\n");
        s
    }
}

//! Multiclass kernel SVM that projects behavior labels onto the lifted state space.
//!
//! Binary problems are solved with an SMO solver using second-order working-set selection;
//! classes are combined one-vs-one with majority voting (ties go to the lower class).

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::{BasisSpec, LiftedPoint};
use crate::trajectory::Trajectory;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Rbf { gamma: f64 },
    Linear,
}

impl Kernel {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                libm::exp(-gamma * d2)
            }
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    /// RBF width; `None` selects `1 / (N · mean variance)` of the standardized features.
    pub gamma: Option<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub kernel: KernelKind,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: None,
            tolerance: 1e-3,
            max_iterations: 1_000_000,
            kernel: KernelKind::Rbf,
        }
    }
}

/// One-vs-one machine separating `positive` (target +1) from `negative` (target −1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub positive: usize,
    pub negative: usize,
    /// Indices into the model's support-vector pool.
    pub support: Vec<usize>,
    /// Dual coefficients in `[0, C]`.
    pub alpha: Vec<f64>,
    pub target: Vec<i8>,
    pub bias: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub classes: Vec<usize>,
    pub dimension: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub kernel: Kernel,
    pub c: f64,
    /// Standardized support vectors shared by all machines.
    pub support_vectors: Vec<Vec<f64>>,
    pub machines: Vec<BinaryMachine>,
    /// Set when training saw a single class; the model then predicts that class everywhere.
    pub degenerate: bool,
}

struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(points: &[&[f64]], dim: usize) -> Self {
        let n = points.len() as f64;
        let mut mean = vec![0.0; dim];
        for p in points {
            for (m, v) in mean.iter_mut().zip(p.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for p in points {
            for ((s, v), m) in var.iter_mut().zip(p.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .zip(&mean)
            .map(|(&s, &m)| {
                let sd = libm::sqrt(s / n);
                if sd > 1e-12 * m.abs().max(1.0) {
                    sd
                } else if m != 0.0 {
                    // constant column: scale by its magnitude so uniform rescaling is a no-op
                    m.abs()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

struct BinarySolution {
    alpha: Vec<f64>,
    rho: f64,
    converged: bool,
}

/// Solves `min ½αᵀQα − Σα` s.t. `0 ≤ α ≤ C`, `yᵀα = 0` with `Q_ij = y_i y_j K_ij`.
fn solve_binary(
    kmat: &[f64],
    y: &[f64],
    c: f64,
    tolerance: f64,
    max_iterations: usize,
) -> BinarySolution {
    let n = y.len();
    let k = |i: usize, j: usize| kmat[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let mut converged = false;

    for _ in 0..max_iterations {
        // i: maximal violator in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            let in_up = if y[t] > 0.0 {
                !upper(alpha[t])
            } else {
                !lower(alpha[t])
            };
            if in_up {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        // j: second-order choice in I_low
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best_obj = f64::INFINITY;
        for t in 0..n {
            let in_low = if y[t] > 0.0 {
                !lower(alpha[t])
            } else {
                !upper(alpha[t])
            };
            if !in_low {
                continue;
            }
            let v = y[t] * grad[t];
            if v > gmax2 {
                gmax2 = v;
            }
            if i == usize::MAX {
                continue;
            }
            let b = gmax + v;
            if b > 0.0 {
                let mut a = k(i, i) + k(t, t) - 2.0 * k(i, t);
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj < best_obj {
                    best_obj = obj;
                    j = t;
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax + gmax2 < tolerance {
            converged = true;
            break;
        }

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut quad = k(i, i) + k(j, j) - 2.0 * k(i, j);
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[i] * y[t] * k(i, t) * di + y[j] * y[t] * k(j, t) * dj;
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 {
        sum_free / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else {
        0.0
    };
    BinarySolution {
        alpha,
        rho,
        converged,
    }
}

/// Trains a one-vs-one RBF (or linear) SVM on labelled lifted points.
pub fn train_svm(points: &[(LiftedPoint, usize)], params: &SvmParams) -> Result<SvmModel> {
    if points.is_empty() {
        return Err(Error::invalid("cannot train an SVM on no points"));
    }
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::invalid("SVM regularization C must be positive"));
    }
    if !(params.tolerance > 0.0) {
        return Err(Error::invalid("SVM tolerance must be positive"));
    }
    let dim = points[0].0.len();
    if dim == 0 || points.iter().any(|(p, _)| p.len() != dim) {
        return Err(Error::invalid(
            "training points have inconsistent dimension",
        ));
    }
    if points
        .iter()
        .any(|(p, _)| p.as_slice().iter().any(|v| !v.is_finite()))
    {
        return Err(Error::invalid("training points contain non-finite values"));
    }
    let mut classes: Vec<usize> = points.iter().map(|(_, l)| *l).collect();
    classes.sort_unstable();
    classes.dedup();

    let raw: Vec<&[f64]> = points.iter().map(|(p, _)| p.as_slice()).collect();
    let std = Standardizer::fit(&raw, dim);
    let xs: Vec<Vec<f64>> = raw.iter().map(|p| std.apply(p)).collect();

    let kernel = match params.kernel {
        KernelKind::Linear => Kernel::Linear,
        KernelKind::Rbf => {
            let gamma = match params.gamma {
                Some(g) if g > 0.0 && g.is_finite() => g,
                Some(g) => return Err(Error::invalid(alloc::format!("invalid gamma {g}"))),
                None => default_gamma(&xs, dim),
            };
            Kernel::Rbf { gamma }
        }
    };

    let mut model = SvmModel {
        classes: classes.clone(),
        dimension: dim,
        mean: std.mean,
        scale: std.scale,
        kernel,
        c: params.c,
        support_vectors: Vec::new(),
        machines: Vec::new(),
        degenerate: classes.len() == 1,
    };
    if model.degenerate {
        return Ok(model);
    }

    let mut pool_index: Vec<Option<usize>> = vec![None; points.len()];
    for (ai, &a) in classes.iter().enumerate() {
        for &b in &classes[ai + 1..] {
            let members: Vec<usize> = (0..points.len())
                .filter(|&i| points[i].1 == a || points[i].1 == b)
                .collect();
            let m = members.len();
            let y: Vec<f64> = members
                .iter()
                .map(|&i| if points[i].1 == a { 1.0 } else { -1.0 })
                .collect();
            let mut kmat = vec![0.0; m * m];
            for r in 0..m {
                for s in r..m {
                    let v = kernel.eval(&xs[members[r]], &xs[members[s]]);
                    kmat[r * m + s] = v;
                    kmat[s * m + r] = v;
                }
            }
            let sol = solve_binary(&kmat, &y, params.c, params.tolerance, params.max_iterations);
            let mut machine = BinaryMachine {
                positive: a,
                negative: b,
                support: Vec::new(),
                alpha: Vec::new(),
                target: Vec::new(),
                bias: -sol.rho,
                converged: sol.converged,
            };
            for (r, &i) in members.iter().enumerate() {
                if sol.alpha[r] > 0.0 {
                    let idx = *pool_index[i].get_or_insert_with(|| {
                        model.support_vectors.push(xs[i].clone());
                        model.support_vectors.len() - 1
                    });
                    machine.support.push(idx);
                    machine.alpha.push(sol.alpha[r].min(params.c));
                    machine.target.push(if y[r] > 0.0 { 1 } else { -1 });
                }
            }
            model.machines.push(machine);
        }
    }
    Ok(model)
}

fn default_gamma(xs: &[Vec<f64>], dim: usize) -> f64 {
    let n = xs.len() as f64;
    let mut total_var = 0.0;
    for d in 0..dim {
        let mean = xs.iter().map(|x| x[d]).sum::<f64>() / n;
        total_var += xs
            .iter()
            .map(|x| (x[d] - mean) * (x[d] - mean))
            .sum::<f64>()
            / n;
    }
    let mean_var = total_var / dim as f64;
    if mean_var > 0.0 {
        1.0 / (dim as f64 * mean_var)
    } else {
        1.0 / dim as f64
    }
}

impl SvmModel {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    fn standardize(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    fn check(&self, p: &LiftedPoint) -> Result<()> {
        if p.len() != self.dimension {
            return Err(Error::invalid(alloc::format!(
                "point has dimension {} but the SVM expects {}",
                p.len(),
                self.dimension
            )));
        }
        Ok(())
    }

    /// Decision value of every binary machine, in training order.
    pub fn decision_values(&self, p: &LiftedPoint) -> Result<Vec<f64>> {
        self.check(p)?;
        let x = self.standardize(p.as_slice());
        let kv: Vec<f64> = self
            .support_vectors
            .iter()
            .map(|sv| self.kernel.eval(sv, &x))
            .collect();
        Ok(self
            .machines
            .iter()
            .map(|m| {
                let s: f64 = m
                    .support
                    .iter()
                    .zip(&m.alpha)
                    .zip(&m.target)
                    .map(|((&i, &a), &t)| a * f64::from(t) * kv[i])
                    .sum();
                s + m.bias
            })
            .collect())
    }

    pub fn classify(&self, p: &LiftedPoint) -> Result<usize> {
        self.check(p)?;
        if self.degenerate || self.machines.is_empty() {
            return Ok(self.classes[0]);
        }
        let decisions = self.decision_values(p)?;
        let mut votes = vec![0usize; self.classes.len()];
        for (m, &d) in self.machines.iter().zip(&decisions) {
            let winner = if d >= 0.0 { m.positive } else { m.negative };
            let slot = self.classes.binary_search(&winner).expect("class present");
            votes[slot] += 1;
        }
        let mut best = 0;
        for (slot, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = slot;
            }
        }
        Ok(self.classes[best])
    }
}

/// Per-sample labels of a trajectory under a trained model.
pub fn classify_trajectory(
    model: &SvmModel,
    basis: &BasisSpec,
    traj: &Trajectory,
) -> Result<Vec<usize>> {
    basis
        .lift_points(traj)?
        .iter()
        .map(|p| model.classify(p))
        .collect()
}

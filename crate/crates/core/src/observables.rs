//! Basis-function dictionaries and lifting of trajectories into observable space.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let r = theta - two_pi * libm::floor((theta + PI) / two_pi);
    if r <= -PI {
        r + two_pi
    } else if r > PI {
        r - two_pi
    } else {
        r
    }
}

/// One scalar map from `(state, control)` to a real number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    Constant,
    Control,
    ControlSquared,
    State {
        index: usize,
    },
    /// Degree-two monomial `x_i * x_j`.
    Product {
        i: usize,
        j: usize,
    },
    Sin {
        index: usize,
    },
    Cos {
        index: usize,
    },
    CosSquared {
        index: usize,
    },
    ControlTimesState {
        index: usize,
    },
    ControlTimesSin {
        index: usize,
    },
    ControlTimesCos {
        index: usize,
    },
    /// `|u_sat| * cos²(u π / |u_sat|)`.
    SaturatedCosSquared {
        u_sat: f64,
    },
}

impl Observable {
    fn max_state_index(&self) -> Option<usize> {
        use Observable::*;
        match *self {
            Constant | Control | ControlSquared | SaturatedCosSquared { .. } => None,
            Product { i, j } => Some(i.max(j)),
            State { index }
            | Sin { index }
            | Cos { index }
            | CosSquared { index }
            | ControlTimesState { index }
            | ControlTimesSin { index }
            | ControlTimesCos { index } => Some(index),
        }
    }

    fn eval(&self, x: &[f64], u: f64) -> f64 {
        use Observable::*;
        match *self {
            Constant => 1.0,
            Control => u,
            ControlSquared => u * u,
            State { index } => x[index],
            Product { i, j } => x[i] * x[j],
            Sin { index } => libm::sin(x[index]),
            Cos { index } => libm::cos(x[index]),
            CosSquared { index } => {
                let c = libm::cos(x[index]);
                c * c
            }
            ControlTimesState { index } => u * x[index],
            ControlTimesSin { index } => u * libm::sin(x[index]),
            ControlTimesCos { index } => u * libm::cos(x[index]),
            SaturatedCosSquared { u_sat } => {
                let s = libm::fabs(u_sat);
                let c = libm::cos(u * PI / s);
                s * c * c
            }
        }
    }

    fn describe(&self, names: &[String]) -> String {
        use Observable::*;
        let n = |i: usize| names[i].as_str();
        match *self {
            Constant => "1".to_string(),
            Control => "u".to_string(),
            ControlSquared => "u^2".to_string(),
            State { index } => n(index).to_string(),
            Product { i, j } if i == j => alloc::format!("{}^2", n(i)),
            Product { i, j } => alloc::format!("{}*{}", n(i), n(j)),
            Sin { index } => alloc::format!("sin({})", n(index)),
            Cos { index } => alloc::format!("cos({})", n(index)),
            CosSquared { index } => alloc::format!("cos^2({})", n(index)),
            ControlTimesState { index } => alloc::format!("u*{}", n(index)),
            ControlTimesSin { index } => alloc::format!("u*sin({})", n(index)),
            ControlTimesCos { index } => alloc::format!("u*cos({})", n(index)),
            SaturatedCosSquared { u_sat } => {
                alloc::format!("{}*cos^2(u*pi/{})", libm::fabs(u_sat), libm::fabs(u_sat))
            }
        }
    }
}

#[derive(Deserialize)]
struct BasisSpecRepr {
    id: String,
    state_names: Vec<String>,
    #[serde(default)]
    angle_indices: Vec<usize>,
    functions: Vec<Observable>,
}

/// An ordered dictionary of observables `ψ = [z_1, ..., z_N]` over the extended state `(x, u)`.
///
/// State components listed in `angle_indices` are wrapped to `(-π, π]` before evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisSpecRepr")]
pub struct BasisSpec {
    id: String,
    state_names: Vec<String>,
    angle_indices: Vec<usize>,
    functions: Vec<Observable>,
    #[serde(skip_deserializing)]
    descriptions: Vec<String>,
}

impl TryFrom<BasisSpecRepr> for BasisSpec {
    type Error = Error;

    fn try_from(r: BasisSpecRepr) -> Result<Self> {
        BasisSpec::new(r.id, r.state_names, r.angle_indices, r.functions)
    }
}

impl BasisSpec {
    pub fn new(
        id: impl Into<String>,
        state_names: Vec<String>,
        angle_indices: Vec<usize>,
        functions: Vec<Observable>,
    ) -> Result<Self> {
        let dim = state_names.len();
        if functions.is_empty() {
            return Err(Error::invalid("a basis needs at least one function"));
        }
        if let Some(&i) = angle_indices.iter().find(|&&i| i >= dim) {
            return Err(Error::invalid(alloc::format!(
                "angle index {i} out of range for state dimension {dim}"
            )));
        }
        for f in &functions {
            if let Some(i) = f.max_state_index() {
                if i >= dim {
                    return Err(Error::invalid(alloc::format!(
                        "{f:?} references state index {i} but the state has dimension {dim}"
                    )));
                }
            }
            if let Observable::SaturatedCosSquared { u_sat } = *f {
                if !(u_sat.is_finite() && u_sat != 0.0) {
                    return Err(Error::invalid(
                        "saturation limit must be finite and nonzero",
                    ));
                }
            }
        }
        let descriptions = functions.iter().map(|f| f.describe(&state_names)).collect();
        Ok(Self {
            id: id.into(),
            state_names,
            angle_indices,
            functions,
            descriptions,
        })
    }

    /// `[x_0, ..., x_{d-1}]` on a `d`-dimensional state.
    pub fn identity(state_dim: usize) -> Result<Self> {
        let names = (0..state_dim).map(|i| alloc::format!("x{i}")).collect();
        let functions = (0..state_dim)
            .map(|index| Observable::State { index })
            .collect();
        Self::new("identity", names, Vec::new(), functions)
    }

    /// `[x_0, ..., x_{d-1}, 1]`.
    pub fn affine(state_dim: usize) -> Result<Self> {
        let names = (0..state_dim).map(|i| alloc::format!("x{i}")).collect();
        let mut functions: Vec<Observable> = (0..state_dim)
            .map(|index| Observable::State { index })
            .collect();
        functions.push(Observable::Constant);
        Self::new("affine", names, Vec::new(), functions)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Number of observables `N`.
    pub fn dimension(&self) -> usize {
        self.functions.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_names.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn angle_indices(&self) -> &[usize] {
        &self.angle_indices
    }

    pub fn functions(&self) -> &[Observable] {
        &self.functions
    }

    pub fn descriptions(&self) -> &[String] {
        &self.descriptions
    }

    /// Evaluates every observable at `(state, control)`, in dictionary order.
    pub fn evaluate(&self, state: &[f64], control: f64) -> Result<LiftedPoint> {
        if state.len() != self.state_dim() {
            return Err(Error::invalid(alloc::format!(
                "basis `{}` expects state dimension {}, got {}",
                self.id,
                self.state_dim(),
                state.len()
            )));
        }
        if !control.is_finite() || state.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite state or control"));
        }
        let mut x = state.to_vec();
        for &i in &self.angle_indices {
            x[i] = wrap_angle(x[i]);
        }
        let mut values = Vec::with_capacity(self.functions.len());
        for (f, desc) in self.functions.iter().zip(&self.descriptions) {
            let v = f.eval(&x, control);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    function: desc.clone(),
                    sample: None,
                });
            }
            values.push(v);
        }
        Ok(LiftedPoint(values))
    }

    /// Lifts every sample of `traj`, preserving order and sample period.
    pub fn lift(&self, traj: &Trajectory) -> Result<LiftedTrajectory> {
        if traj.len() < 2 {
            return Err(Error::invalid(alloc::format!(
                "{} has fewer than 2 samples",
                traj.describe()
            )));
        }
        let points = self.lift_points(traj)?;
        Ok(LiftedTrajectory {
            points,
            dt: traj.dt(),
            trial_id: traj.trial_id,
        })
    }

    /// Lifts each sample independently; accepts trajectories of any length.
    pub fn lift_points(&self, traj: &Trajectory) -> Result<Vec<LiftedPoint>> {
        traj.iter()
            .enumerate()
            .map(|(k, (x, u))| {
                self.evaluate(x, u).map_err(|e| match e {
                    Error::NonFinite { function, .. } => Error::NonFinite {
                        function,
                        sample: Some(k),
                    },
                    Error::InvalidInput(msg) => {
                        Error::InvalidInput(alloc::format!("sample {k}: {msg}"))
                    }
                    other => other,
                })
            })
            .collect()
    }
}

/// Ten-function cart-pendulum dictionary over the state `(θ, x_c, θ̇, ẋ_c)` and control `u`:
/// `[θ, x_c, θ̇, ẋ_c, u, u·cos θ, u·cos θ̇, |u_sat|·cos²(uπ/|u_sat|), ẋ_c², 1]`.
pub fn cartpole_basis(u_sat: f64) -> Result<BasisSpec> {
    if !(u_sat > 0.0 && u_sat.is_finite()) {
        return Err(Error::invalid(alloc::format!(
            "saturation limit must be positive, got {u_sat}"
        )));
    }
    use Observable::*;
    let names = ["theta", "x_c", "theta_dot", "xc_dot"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    BasisSpec::new(
        "cartpole",
        names,
        alloc::vec![0],
        alloc::vec![
            State { index: 0 },
            State { index: 1 },
            State { index: 2 },
            State { index: 3 },
            Control,
            ControlTimesCos { index: 0 },
            ControlTimesCos { index: 2 },
            SaturatedCosSquared { u_sat },
            Product { i: 3, j: 3 },
            Constant,
        ],
    )
}

/// A point `ψ(x_k)` in observable space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LiftedPoint(Vec<f64>);

impl LiftedPoint {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl core::ops::Index<usize> for LiftedPoint {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A lifted trial `Ψ_X = [ψ(x_0), ..., ψ(x_M)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedTrajectory {
    pub points: Vec<LiftedPoint>,
    pub dt: f64,
    pub trial_id: u32,
}

impl LiftedTrajectory {
    pub fn new(points: Vec<LiftedPoint>, dt: f64, trial_id: u32) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid(
                "a lifted trajectory needs at least 2 points",
            ));
        }
        if !(dt > 0.0) {
            return Err(Error::invalid("sample period must be positive"));
        }
        let n = points[0].len();
        if points.iter().any(|p| p.len() != n) {
            return Err(Error::invalid("lifted points have inconsistent dimension"));
        }
        Ok(Self {
            points,
            dt,
            trial_id,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.points.first().map_or(0, LiftedPoint::len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn cartpole_basis_at_origin() {
        let b = cartpole_basis(20.0).unwrap();
        assert_eq!(b.dimension(), 10);
        let p = b.evaluate(&[0.0; 4], 0.0).unwrap();
        assert_eq!(
            p.as_slice(),
            &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 20.0, 0.0, 1.0]
        );
    }

    #[test]
    fn cartpole_basis_at_quarter_turn() {
        let b = cartpole_basis(20.0).unwrap();
        let p = b.evaluate(&[PI / 2.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        // 20 cos²(π/20) evaluated independently
        let expected = [PI / 2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 19.5106, 0.0, 1.0];
        assert!(close(p.as_slice(), &expected, 1e-4), "{p:?}");
    }

    #[test]
    fn saturated_entry_vanishes_at_half_saturation() {
        let b = cartpole_basis(20.0).unwrap();
        let p = b.evaluate(&[0.0; 4], 10.0).unwrap();
        assert!(p[7].abs() < 1e-12);
        let b1 = cartpole_basis(1.0).unwrap();
        assert_eq!(b1.evaluate(&[0.0; 4], 0.0).unwrap()[7], 1.0);
    }

    #[test]
    fn rejects_bad_saturation() {
        assert!(cartpole_basis(0.0).is_err());
        assert!(cartpole_basis(-1.0).is_err());
    }

    #[test]
    fn identity_basis_ignores_control() {
        let b = BasisSpec::identity(1).unwrap();
        assert_eq!(b.evaluate(&[3.5], 7.0).unwrap().as_slice(), &[3.5]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let b = cartpole_basis(20.0).unwrap();
        assert!(matches!(
            b.evaluate(&[0.0; 3], 0.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn non_finite_output_names_function() {
        let names = alloc::vec!["x".to_string()];
        let b = BasisSpec::new(
            "sq",
            names,
            alloc::vec![],
            alloc::vec![Observable::Product { i: 0, j: 0 }],
        )
        .unwrap();
        match b.evaluate(&[1e200], 0.0) {
            Err(Error::NonFinite { function, .. }) => assert_eq!(function, "x^2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn angles_are_wrapped_before_lifting() {
        let b = cartpole_basis(20.0).unwrap();
        let p = b.evaluate(&[3.0 * PI / 2.0, 0.0, 0.0, 0.0], 0.0).unwrap();
        assert!((p[0] + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5 + 4.0 * PI) - 0.5).abs() < 1e-12);
        assert!((wrap_angle(-0.5 - 2.0 * PI) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn lift_scalar_trajectory() {
        let b = BasisSpec::identity(1).unwrap();
        let t = Trajectory::from_scalar(0, 1.0, &[1.0, 0.5, 0.25]).unwrap();
        let l = b.lift(&t).unwrap();
        let got: Vec<f64> = l.points.iter().map(|p| p[0]).collect();
        assert_eq!(got, alloc::vec![1.0, 0.5, 0.25]);
        assert_eq!(l.dt, 1.0);
    }

    #[test]
    fn lift_empty_is_rejected() {
        let b = BasisSpec::identity(1).unwrap();
        let t = Trajectory::from_scalar(0, 1.0, &[]).unwrap();
        assert!(b.lift(&t).is_err());
    }

    #[test]
    fn lift_reports_sample_index() {
        let names = alloc::vec!["x".to_string()];
        let b = BasisSpec::new(
            "sq",
            names,
            alloc::vec![],
            alloc::vec![Observable::Product { i: 0, j: 0 }],
        )
        .unwrap();
        let t = Trajectory::from_scalar(0, 1.0, &[1.0, 1e300, 2.0]).unwrap();
        match b.lift(&t) {
            Err(Error::NonFinite { sample, .. }) => assert_eq!(sample, Some(1)),
            other => panic!("unexpected {other:?}"),
        }
    }
}

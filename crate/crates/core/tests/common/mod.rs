#![allow(dead_code)]

use dss_core::Trajectory;
use nalgebra::{Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const SWITCH: usize = 1000;
pub const SWITCHED_LEN: usize = 2000;

pub fn rotation(w: f64) -> Matrix2<f64> {
    Matrix2::new(w.cos(), -w.sin(), w.sin(), w.cos())
}

/// Rotation about the origin, then from `SWITCH` on a rotation the other way about `(2, 0.5)`.
pub fn switched_states() -> Vec<Vec<f64>> {
    let (ra, rb, c) = (rotation(0.21), rotation(-0.37), Vector2::new(2.0, 0.5));
    let mut x = Vector2::new(1.0, 0.0);
    let mut out = Vec::with_capacity(SWITCHED_LEN);
    for k in 0..SWITCHED_LEN {
        out.push(vec![x[0], x[1]]);
        x = if k < SWITCH { ra * x } else { rb * (x - c) + c };
    }
    out
}

pub fn states_trajectory(states: Vec<Vec<f64>>) -> Trajectory {
    let n = states.len();
    Trajectory::new(0, 1.0, states, vec![0.0; n]).unwrap()
}

/// Isotropic Gaussian blobs with their ground-truth labels.
pub fn blobs(
    centres: &[(f64, f64)],
    per: usize,
    sigma: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut pts = Vec::new();
    let mut truth = Vec::new();
    for (j, (cx, cy)) in centres.iter().enumerate() {
        for _ in 0..per {
            pts.push(vec![
                cx + normal.sample(&mut rng),
                cy + normal.sample(&mut rng),
            ]);
            truth.push(j);
        }
    }
    (pts, truth)
}

/// Whether two labelings induce the same partition, noise included.
pub fn same_partition(a: &[Option<usize>], b: &[Option<usize>]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = std::collections::HashMap::new();
    let mut back = std::collections::HashMap::new();
    a.iter().zip(b).all(|(x, y)| match (x, y) {
        (None, None) => true,
        (Some(x), Some(y)) => {
            *fwd.entry(*x).or_insert(*y) == *y && *back.entry(*y).or_insert(*x) == *x
        }
        _ => false,
    })
}

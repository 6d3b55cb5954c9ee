//! Whale Optimization Algorithm for bound-constrained minimization.
//!
//! Per iteration `t` and agent, with `a = 2 (1 - t / max_iter)` and `r`
//! uniform on `[0, 1]` per dimension:
//!
//! ```text
//! A = 2 a r - a,   C = 2 r'
//! p < 0.5, |A| >= 1:  D = |C X_rand - X|,  X' = X_rand - A D   (search)
//! p < 0.5, |A| <  1:  D = |C X*     - X|,  X' = X*     - A D   (encircle)
//! p >= 0.5:           X' = |X* - X| e^(b l) cos(2 pi l) + X*   (spiral)
//! ```
//!
//! `|A|` is the Euclidean norm, `l` is uniform on `[-1, 1]` and positions are
//! clamped back into the box after every update. All random draws for an
//! iteration happen before its fitness evaluations, so evaluation may run
//! in parallel without affecting the random stream. The generator is
//! ChaCha8 seeded from a 64-bit seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which point the search (exploration) move steps away from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationAnchor {
    /// `X' = X_rand - A D`, the usual formulation.
    #[default]
    RandomAgent,
    /// `X' = X* - A D`, with `D` still measured from `X_rand`.
    Best,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WoaConfig {
    pub pop_size: usize,
    pub max_iter: usize,
    /// Logarithmic spiral shape constant `b`.
    pub spiral_b: f64,
    pub seed: u64,
    #[serde(default)]
    pub exploration_anchor: ExplorationAnchor,
}

impl Default for WoaConfig {
    fn default() -> Self {
        Self {
            pop_size: 30,
            max_iter: 100,
            spiral_b: 1.0,
            seed: 42,
            exploration_anchor: ExplorationAnchor::RandomAgent,
        }
    }
}

impl WoaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pop_size < 2 {
            return Err(Error::invalid(format!("pop_size must be at least 2, got {}", self.pop_size)));
        }
        if !self.spiral_b.is_finite() {
            return Err(Error::invalid("spiral_b must be finite"));
        }
        Ok(())
    }
}

/// `a(t) = 2 (1 - t / max_iter)`; 2 at the start, 0 at `max_iter`.
pub fn a_schedule(t: usize, max_iter: usize) -> f64 {
    if max_iter == 0 {
        return 0.0;
    }
    2.0 * (1.0 - t as f64 / max_iter as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BranchCounts {
    pub exploration: usize,
    pub encircling: usize,
    pub spiral: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WoaResult {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    /// Incumbent fitness after initialization and after each iteration
    /// (`max_iter + 1` entries).
    pub trace: Vec<f64>,
    pub branches: BranchCounts,
    pub evaluations: usize,
}

fn evaluate<F>(positions: &[Vec<f64>], objective: &F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    positions
        .par_iter()
        .map(|x| {
            let f = objective(x);
            if f.is_finite() {
                f
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Minimizes `objective` over the box `bounds` (one `(low, high)` per
/// dimension). Non-finite objective values count as `+inf`.
pub fn optimize<F>(cfg: &WoaConfig, bounds: &[(f64, f64)], objective: F) -> Result<WoaResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    if bounds.is_empty() {
        return Err(Error::invalid("search space must have at least one dimension"));
    }
    if let Some((d, b)) = bounds
        .iter()
        .enumerate()
        .find(|(_, (lo, hi))| !(lo < hi) || !lo.is_finite() || !hi.is_finite())
    {
        return Err(Error::invalid(format!("dimension {d}: bounds must satisfy low < high, got {b:?}")));
    }
    let dim = bounds.len();
    let clamp = |x: &mut [f64]| {
        for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
            *v = v.clamp(*lo, *hi);
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut positions: Vec<Vec<f64>> = (0..cfg.pop_size)
        .map(|_| bounds.iter().map(|(lo, hi)| lo + rng.gen::<f64>() * (hi - lo)).collect())
        .collect();
    let mut fitness = evaluate(&positions, &objective);
    let mut evaluations = positions.len();

    let i = argmin(&fitness);
    let mut best_position = positions[i].clone();
    let mut best_fitness = fitness[i];
    let mut trace = Vec::with_capacity(cfg.max_iter + 1);
    trace.push(best_fitness);
    let mut branches = BranchCounts::default();

    let mut r_a = vec![0.0; dim];
    let mut r_c = vec![0.0; dim];
    for t in 0..cfg.max_iter {
        let a = a_schedule(t, cfg.max_iter);
        let snapshot = positions.clone();
        for x in positions.iter_mut() {
            r_a.iter_mut().for_each(|r| *r = rng.gen::<f64>());
            r_c.iter_mut().for_each(|r| *r = rng.gen::<f64>());
            let p: f64 = rng.gen();
            let l: f64 = rng.gen_range(-1.0..=1.0);
            let rand_idx = rng.gen_range(0..cfg.pop_size);

            let coef_a: Vec<f64> = r_a.iter().map(|r| 2.0 * a * r - a).collect();
            let norm_a = coef_a.iter().map(|v| v * v).sum::<f64>().sqrt();

            if p < 0.5 {
                let (reference, anchor) = if norm_a >= 1.0 {
                    branches.exploration += 1;
                    let x_rand = &snapshot[rand_idx];
                    let anchor = match cfg.exploration_anchor {
                        ExplorationAnchor::RandomAgent => x_rand,
                        ExplorationAnchor::Best => &best_position,
                    };
                    (x_rand, anchor)
                } else {
                    branches.encircling += 1;
                    (&best_position, &best_position)
                };
                for d in 0..dim {
                    let dist = (2.0 * r_c[d] * reference[d] - x[d]).abs();
                    x[d] = anchor[d] - coef_a[d] * dist;
                }
            } else {
                branches.spiral += 1;
                let factor = (cfg.spiral_b * l).exp() * (2.0 * std::f64::consts::PI * l).cos();
                for d in 0..dim {
                    x[d] = (best_position[d] - x[d]).abs() * factor + best_position[d];
                }
            }
            clamp(x);
        }

        fitness = evaluate(&positions, &objective);
        evaluations += positions.len();
        let i = argmin(&fitness);
        if fitness[i] < best_fitness {
            best_fitness = fitness[i];
            best_position = positions[i].clone();
        }
        trace.push(best_fitness);
    }

    Ok(WoaResult {
        best_position,
        best_fitness,
        trace,
        branches,
        evaluations,
    })
}

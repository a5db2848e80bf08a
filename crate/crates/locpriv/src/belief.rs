//! Belief-state MDP core: Bayesian posterior update over the previous true
//! location, expected per-step leakage and distortion, and the Lagrangian
//! step cost. Everything here is a deterministic function of
//! (belief, release kernel) except the sampling in `env_step`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{manhattan, sample_categorical, Cell, GridSpec, TransitionMatrix};

/// Minimum kernel entry after flooring. Keeps every observation probability
/// strictly positive so the belief-update denominator cannot vanish.
pub const KERNEL_FLOOR: f64 = 1e-6;

pub const BELIEF_TOL: f64 = 1e-10;

/// Posterior over the previous true location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    b: Vec<f64>,
}

impl Belief {
    pub fn new(b: Vec<f64>) -> Result<Self> {
        let sum: f64 = b.iter().sum();
        if b.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::NonFinite { context: "belief" });
        }
        if (sum - 1.0).abs() > BELIEF_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self { b })
    }

    pub fn uniform(cell_count: usize) -> Self {
        Self {
            b: vec![1.0 / cell_count as f64; cell_count],
        }
    }

    pub fn point_mass(cell: Cell, cell_count: usize) -> Self {
        let mut b = vec![0.0; cell_count];
        b[cell - 1] = 1.0;
        Self { b }
    }

    pub fn probs(&self) -> &[f64] {
        &self.b
    }

    pub fn prob(&self, cell: Cell) -> f64 {
        self.b[cell - 1]
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }
}

/// Release kernel a[x][x'][y]: probability of releasing y given current true
/// cell x and previous true cell x'. Stored flat, one floored simplex row per
/// (x, x') pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseKernel {
    cell_count: usize,
    a: Vec<f64>,
}

impl ReleaseKernel {
    /// Builds a kernel from raw nonnegative rows, flooring every entry at
    /// `KERNEL_FLOOR` and renormalizing each (x, x') row.
    pub fn from_rows(cell_count: usize, rows: Vec<f64>) -> Result<Self> {
        let expected = cell_count * cell_count * cell_count;
        if rows.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                got: rows.len(),
            });
        }
        if rows.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite {
                context: "kernel row",
            });
        }
        let mut a = rows;
        for row in a.chunks_mut(cell_count) {
            let sum: f64 = row.iter().sum();
            if sum <= 0.0 {
                return Err(Error::ZeroRowWeight { row: 0 });
            }
            for v in row.iter_mut() {
                *v = (*v / sum).max(KERNEL_FLOOR);
            }
            let sum: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        Ok(Self { cell_count, a })
    }

    pub fn uniform(cell_count: usize) -> Self {
        let k3 = cell_count * cell_count * cell_count;
        Self {
            cell_count,
            a: vec![1.0 / cell_count as f64; k3],
        }
    }

    /// Kernel releasing the current true cell (up to the floor).
    pub fn identity(cell_count: usize) -> Self {
        let mut rows = vec![0.0; cell_count * cell_count * cell_count];
        for x in 0..cell_count {
            for xp in 0..cell_count {
                rows[(x * cell_count + xp) * cell_count + x] = 1.0;
            }
        }
        Self::from_rows(cell_count, rows).expect("identity rows are valid")
    }

    /// Kernel with the same release row for every (x, x') pair.
    pub fn constant(cell_count: usize, row: &[f64]) -> Result<Self> {
        if row.len() != cell_count {
            return Err(Error::ShapeMismatch {
                expected: cell_count,
                got: row.len(),
            });
        }
        let mut rows = Vec::with_capacity(cell_count * cell_count * cell_count);
        for _ in 0..cell_count * cell_count {
            rows.extend_from_slice(row);
        }
        Self::from_rows(cell_count, rows)
    }

    pub fn cell_count(&self) -> usize {
        self.cell_count
    }

    #[inline]
    pub fn prob(&self, y: Cell, x: Cell, x_prev: Cell) -> f64 {
        self.a[((x - 1) * self.cell_count + (x_prev - 1)) * self.cell_count + (y - 1)]
    }

    /// Release distribution for one (current, previous) pair.
    #[inline]
    pub fn row(&self, x: Cell, x_prev: Cell) -> &[f64] {
        let base = ((x - 1) * self.cell_count + (x_prev - 1)) * self.cell_count;
        &self.a[base..base + self.cell_count]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepCostBreakdown {
    /// Expected per-step information leakage, bits.
    pub leakage: f64,
    /// Expected per-step distortion, grid-distance units.
    pub distortion: f64,
    /// leakage + lambda * (distortion - dbar).
    pub cost: f64,
    pub lambda: f64,
    pub dbar: f64,
}

/// One step of the Bayes filter: posterior over x_t after observing release y.
///
/// b'(x) ∝ sum_x' q(x|x') a(y|x,x') b(x').
pub fn belief_update(
    b: &Belief,
    a: &ReleaseKernel,
    q: &TransitionMatrix,
    y: Cell,
) -> Result<Belief> {
    let k = b.len();
    let mut post = vec![0.0; k];
    for xp in 1..=k {
        let bw = b.prob(xp);
        if bw == 0.0 {
            continue;
        }
        let qrow = q.row(xp);
        for x in 1..=k {
            post[x - 1] += qrow[x - 1] * a.prob(y, x, xp) * bw;
        }
    }
    let z: f64 = post.iter().sum();
    if z < 1e-300 {
        return Err(Error::ZeroProbabilityObservation { y, min: 1e-300 });
    }
    for v in &mut post {
        *v /= z;
    }
    // absorb residual drift
    let z2: f64 = post.iter().sum();
    for v in &mut post {
        *v /= z2;
    }
    Belief::new(post)
}

/// Predictive weight of each release y under (belief, kernel, chain):
/// r(y) = sum_{x,x'} b(x') q(x|x') a(y|x,x').
fn release_predictive(b: &Belief, a: &ReleaseKernel, q: &TransitionMatrix) -> Vec<f64> {
    let k = b.len();
    let mut r = vec![0.0; k];
    for xp in 1..=k {
        let bw = b.prob(xp);
        if bw == 0.0 {
            continue;
        }
        let qrow = q.row(xp);
        for x in 1..=k {
            let w = bw * qrow[x - 1];
            if w == 0.0 {
                continue;
            }
            let arow = a.row(x, xp);
            for y in 0..k {
                r[y] += w * arow[y];
            }
        }
    }
    r
}

/// Expected per-step information leakage in bits: the conditional mutual
/// information I(X_t, X_{t-1}; Y_t) under the belief-weighted joint.
pub fn expected_leakage(b: &Belief, a: &ReleaseKernel, q: &TransitionMatrix) -> f64 {
    let k = b.len();
    let r = release_predictive(b, a, q);
    let mut total = 0.0;
    for xp in 1..=k {
        let bw = b.prob(xp);
        if bw == 0.0 {
            continue;
        }
        let qrow = q.row(xp);
        for x in 1..=k {
            let w = bw * qrow[x - 1];
            if w == 0.0 {
                continue;
            }
            let arow = a.row(x, xp);
            for y in 0..k {
                let ay = arow[y];
                if ay > 0.0 && w * ay > 0.0 {
                    total += w * ay * (ay / r[y]).log2();
                }
            }
        }
    }
    total.max(0.0)
}

/// Expected per-step distortion: mean Manhattan distance between the current
/// true cell and the release under the belief-weighted joint.
pub fn expected_distortion(
    b: &Belief,
    a: &ReleaseKernel,
    q: &TransitionMatrix,
    spec: &GridSpec,
) -> Result<f64> {
    let k = b.len();
    let mut total = 0.0;
    for xp in 1..=k {
        let bw = b.prob(xp);
        if bw == 0.0 {
            continue;
        }
        let qrow = q.row(xp);
        for x in 1..=k {
            let w = bw * qrow[x - 1];
            if w == 0.0 {
                continue;
            }
            let arow = a.row(x, xp);
            for y in 1..=k {
                total += w * arow[y - 1] * manhattan(x, y, spec)? as f64;
            }
        }
    }
    Ok(total)
}

pub fn step_cost(
    b: &Belief,
    a: &ReleaseKernel,
    q: &TransitionMatrix,
    spec: &GridSpec,
    lambda: f64,
    dbar: f64,
) -> Result<StepCostBreakdown> {
    let leakage = expected_leakage(b, a, q);
    let distortion = expected_distortion(b, a, q, spec)?;
    Ok(StepCostBreakdown {
        leakage,
        distortion,
        cost: leakage + lambda * (distortion - dbar),
        lambda,
        dbar,
    })
}

/// One environment transition: sample the release, update the belief, compute
/// the step cost, and advance the true chain.
#[allow(clippy::too_many_arguments)]
pub fn env_step<R: Rng + ?Sized>(
    x_prev: Cell,
    x_cur: Cell,
    b: &Belief,
    a: &ReleaseKernel,
    q: &TransitionMatrix,
    spec: &GridSpec,
    lambda: f64,
    dbar: f64,
    rng: &mut R,
) -> Result<(Cell, Belief, StepCostBreakdown, Cell)> {
    spec.check_cell(x_prev)?;
    spec.check_cell(x_cur)?;
    let y = sample_categorical(a.row(x_cur, x_prev), rng) + 1;
    let b_next = belief_update(b, a, q, y)?;
    let cost = step_cost(b, a, q, spec, lambda, dbar)?;
    let x_next = sample_categorical(q.row(x_cur), rng) + 1;
    Ok((y, b_next, cost, x_next))
}

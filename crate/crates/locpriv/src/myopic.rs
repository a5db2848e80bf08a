//! Myopic baseline: per-step conditional mutual-information minimization with
//! a distortion penalty, solved by Blahut-Arimoto alternating minimization and
//! chained over the horizon by forward propagation of the joint law.

// index-based loops here mirror the table math; iterator forms read worse
#![allow(clippy::needless_range_loop)]

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{manhattan, GridSpec, InitialDistribution, TransitionMatrix};

const LN2: f64 = std::f64::consts::LN_2;

/// Forward-propagated joint over (x_t, x_{t-1}, y_{t-1}), flat
/// [x][x_prev][y_prev] with 0-based offsets.
#[derive(Debug, Clone)]
pub struct MyopicState {
    k: usize,
    joint: Vec<f64>,
    pub step: usize,
}

impl MyopicState {
    /// t = 1 state: all mass on the degenerate x_prev = x_1 diagonal, with the
    /// release-history slot pinned to a single dummy value.
    pub fn initial(k: usize, p1: &InitialDistribution) -> Self {
        let mut joint = vec![0.0; k * k * k];
        for x in 0..k {
            joint[(x * k + x) * k] = p1.probs()[x];
        }
        Self { k, joint, step: 1 }
    }

    #[inline]
    fn get(&self, x: usize, xp: usize, yp: usize) -> f64 {
        self.joint[(x * self.k + xp) * self.k + yp]
    }

    pub fn mass(&self) -> f64 {
        self.joint.iter().sum()
    }
}

/// Release kernel conditioned on the previous release:
/// q[y_prev][x][x_prev][y], flat with 0-based offsets.
#[derive(Debug, Clone)]
pub struct MyopicKernel {
    k: usize,
    q: Vec<f64>,
}

impl MyopicKernel {
    fn uniform(k: usize) -> Self {
        Self {
            k,
            q: vec![1.0 / k as f64; k * k * k * k],
        }
    }

    #[inline]
    pub fn prob(&self, y_prev: usize, x: usize, x_prev: usize, y: usize) -> f64 {
        self.q[(((y_prev * self.k) + x) * self.k + x_prev) * self.k + y]
    }

    #[inline]
    fn slice_mut(&mut self, y_prev: usize, x: usize, x_prev: usize) -> &mut [f64] {
        let base = (((y_prev * self.k) + x) * self.k + x_prev) * self.k;
        &mut self.q[base..base + self.k]
    }

    /// Release row for the realized conditioning triple (1-based cells).
    pub fn row(&self, y_prev: usize, x: usize, x_prev: usize) -> &[f64] {
        let base = (((y_prev * self.k) + x) * self.k + x_prev) * self.k;
        &self.q[base..base + self.k]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaStepResult {
    /// Conditional mutual information achieved under the state, bits.
    pub leakage_bits: f64,
    /// Expected distortion under the state.
    pub distortion: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// One Blahut-Arimoto solve of the per-step problem, separately for every
/// previous-release value with positive probability.
///
/// Alternates m(y|y_prev) = sum p(x,x'|y_prev) q(y|x,x') with
/// q(y|x,x') proportional to m(y|y_prev) exp(-lambda_ba d(x,y)); the Lagrangian
/// objective is asserted non-increasing across iterations.
pub fn ba_solve_step(
    state: &MyopicState,
    lambda_ba: f64,
    spec: &GridSpec,
    tol: f64,
    max_iter: usize,
) -> Result<(MyopicKernel, BaStepResult)> {
    let k = state.k;
    if lambda_ba < 0.0 || !lambda_ba.is_finite() {
        return Err(Error::Domain("lambda_ba must be nonnegative".into()));
    }
    let mut dist = vec![0.0; k * k];
    for x in 0..k {
        for y in 0..k {
            dist[x * k + y] = manhattan(x + 1, y + 1, spec)? as f64;
        }
    }
    let tilt: Vec<f64> = dist.iter().map(|d| (-lambda_ba * d).exp()).collect();

    let mut kernel = MyopicKernel::uniform(k);
    let mut total_leak_nats = 0.0;
    let mut total_dist = 0.0;
    let mut converged = true;
    let mut max_iterations = 0usize;

    for yp in 0..k {
        let mass: f64 = (0..k * k).map(|i| state.joint[i * k + yp]).sum();
        if mass <= 0.0 {
            continue; // zero-probability branch keeps the uniform kernel
        }
        // conditional p(x, x' | y_prev)
        let mut p = vec![0.0; k * k];
        for i in 0..k * k {
            p[i] = state.joint[i * k + yp] / mass;
        }

        let mut q = vec![1.0 / k as f64; k * k * k];
        let mut m = vec![0.0; k];
        let mut prev_obj = f64::INFINITY;
        let mut branch_converged = false;
        let mut iters = 0;
        for it in 0..max_iter {
            iters = it + 1;
            // m-step
            m.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..k * k {
                let w = p[i];
                if w == 0.0 {
                    continue;
                }
                let row = &q[i * k..(i + 1) * k];
                for y in 0..k {
                    m[y] += w * row[y];
                }
            }
            // q-step
            for i in 0..k * k {
                let x = i / k;
                let row = &mut q[i * k..(i + 1) * k];
                let mut z = 0.0;
                for y in 0..k {
                    row[y] = m[y] * tilt[x * k + y];
                    z += row[y];
                }
                if z > 0.0 && z.is_finite() {
                    for v in row.iter_mut() {
                        *v /= z;
                    }
                } else {
                    // fully tilted underflow: release the closest cell
                    for (y, v) in row.iter_mut().enumerate() {
                        *v = if y == x { 1.0 } else { 0.0 };
                    }
                }
            }
            // objective after the pair of updates, nats
            let mut obj = 0.0;
            m.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..k * k {
                let w = p[i];
                if w == 0.0 {
                    continue;
                }
                let row = &q[i * k..(i + 1) * k];
                for y in 0..k {
                    m[y] += w * row[y];
                }
            }
            for i in 0..k * k {
                let w = p[i];
                if w == 0.0 {
                    continue;
                }
                let x = i / k;
                let row = &q[i * k..(i + 1) * k];
                for y in 0..k {
                    let pv = w * row[y];
                    if pv > 0.0 {
                        obj += pv * (row[y] / m[y]).ln() + lambda_ba * pv * dist[x * k + y];
                    }
                }
            }
            if obj > prev_obj + 1e-12 {
                return Err(Error::Domain(format!(
                    "alternating-minimization objective increased: {prev_obj} -> {obj}"
                )));
            }
            if prev_obj - obj < tol {
                branch_converged = true;
                break;
            }
            prev_obj = obj;
        }
        if !branch_converged {
            converged = false;
        }
        max_iterations = max_iterations.max(iters);

        // branch leakage and distortion under the final kernel
        let mut leak = 0.0;
        let mut d_exp = 0.0;
        for i in 0..k * k {
            let w = p[i];
            if w == 0.0 {
                continue;
            }
            let x = i / k;
            let row = &q[i * k..(i + 1) * k];
            for y in 0..k {
                let pv = w * row[y];
                if pv > 0.0 {
                    leak += pv * (row[y] / m[y]).ln();
                }
                d_exp += pv * dist[x * k + y];
            }
        }
        total_leak_nats += mass * leak;
        total_dist += mass * d_exp;

        for x in 0..k {
            for xp in 0..k {
                kernel
                    .slice_mut(yp, x, xp)
                    .copy_from_slice(&q[(x * k + xp) * k..(x * k + xp + 1) * k]);
            }
        }
    }

    Ok((
        kernel,
        BaStepResult {
            leakage_bits: (total_leak_nats / LN2).max(0.0),
            distortion: total_dist,
            converged,
            iterations: max_iterations,
        },
    ))
}

/// Forward propagation of the joint law through one release step and one chain
/// step: the next state covers (x_{t+1}, x_t, y_t).
pub fn propagate(
    state: &MyopicState,
    kernel: &MyopicKernel,
    q: &TransitionMatrix,
) -> Result<MyopicState> {
    let k = state.k;
    let mut next = vec![0.0; k * k * k];
    for x in 0..k {
        for xp in 0..k {
            for yp in 0..k {
                let w = state.get(x, xp, yp);
                if w == 0.0 {
                    continue;
                }
                for y in 0..k {
                    let wy = w * kernel.prob(yp, x, xp, y);
                    if wy == 0.0 {
                        continue;
                    }
                    let qrow = q.row(x + 1);
                    for x2 in 0..k {
                        next[(x2 * k + x) * k + y] += wy * qrow[x2];
                    }
                }
            }
        }
    }
    let mass: f64 = next.iter().sum();
    if (mass - 1.0).abs() > 1e-8 {
        return Err(Error::MassDrift {
            drift: (mass - 1.0).abs(),
        });
    }
    for v in &mut next {
        *v /= mass;
    }
    Ok(MyopicState {
        k,
        joint: next,
        step: state.step + 1,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MyopicCurveRow {
    pub lambda_ba: f64,
    pub avg_distortion: f64,
    pub avg_leakage_bits: f64,
    pub converged: bool,
}

/// Runs the myopic mechanism over the horizon for each tilt value, averaging
/// per-step leakage and distortion.
pub fn run_myopic(
    q: &TransitionMatrix,
    p1: &InitialDistribution,
    spec: &GridSpec,
    lambdas: &[f64],
    n: usize,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<MyopicCurveRow>> {
    if n == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    let k = spec.cell_count();
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda_ba in lambdas {
        let mut state = MyopicState::initial(k, p1);
        let mut leak = 0.0;
        let mut dist = 0.0;
        let mut converged = true;
        for _ in 0..n {
            let (kernel, res) = ba_solve_step(&state, lambda_ba, spec, tol, max_iter)?;
            leak += res.leakage_bits;
            dist += res.distortion;
            converged &= res.converged;
            state = propagate(&state, &kernel, q)?;
        }
        rows.push(MyopicCurveRow {
            lambda_ba,
            avg_distortion: dist / n as f64,
            avg_leakage_bits: leak / n as f64,
            converged,
        });
    }
    Ok(rows)
}

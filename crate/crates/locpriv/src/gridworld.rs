//! Finite grid-world location alphabet: cell geometry, Manhattan distortion,
//! the three transition-matrix families used in the experiments, and Markov
//! trajectory sampling.
//!
//! Cells are numbered 1..=cell_count in row-major order, so on a 4x4 grid the
//! first row is {1,2,3,4} and the last row is {13,14,15,16}.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1-based cell index.
pub type Cell = usize;

pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    side: usize,
}

impl GridSpec {
    pub fn new(side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::Domain("grid side must be positive".into()));
        }
        Ok(Self { side })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn cell_count(&self) -> usize {
        self.side * self.side
    }

    /// Largest Manhattan distance on the grid, 2*(side-1).
    pub fn max_distance(&self) -> usize {
        2 * (self.side - 1)
    }

    pub fn check_cell(&self, cell: Cell) -> Result<()> {
        if cell >= 1 && cell <= self.cell_count() {
            Ok(())
        } else {
            Err(Error::CellOutOfRange {
                cell,
                cell_count: self.cell_count(),
            })
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> {
        1..=self.cell_count()
    }
}

/// Zero-based (row, col) of a cell.
pub fn cell_coords(cell: Cell, spec: &GridSpec) -> Result<(usize, usize)> {
    spec.check_cell(cell)?;
    Ok(((cell - 1) / spec.side(), (cell - 1) % spec.side()))
}

/// Manhattan distance between two cells.
pub fn manhattan(a: Cell, b: Cell, spec: &GridSpec) -> Result<usize> {
    let (ra, ca) = cell_coords(a, spec)?;
    let (rb, cb) = cell_coords(b, spec)?;
    Ok(ra.abs_diff(rb) + ca.abs_diff(cb))
}

/// Row-stochastic matrix over cells; row x holds the distribution of the next
/// cell given current cell x. Grid-built matrices remember their side for JSON
/// export; matrices over a bare alphabet (the small oracle worlds) do not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    side: Option<usize>,
    rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn from_rows(spec: &GridSpec, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = Self::from_rows_general(spec.cell_count(), rows)?;
        m.side = Some(spec.side());
        Ok(m)
    }

    /// Stochastic matrix over an arbitrary alphabet of `k` symbols.
    pub fn from_rows_general(k: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != k {
            return Err(Error::ShapeMismatch {
                expected: k,
                got: rows.len(),
            });
        }
        for row in &rows {
            if row.len() != k {
                return Err(Error::ShapeMismatch {
                    expected: k,
                    got: row.len(),
                });
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(Error::NonFinite {
                    context: "transition row",
                });
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotNormalized { sum });
            }
        }
        Ok(Self { side: None, rows })
    }

    pub fn cell_count(&self) -> usize {
        self.rows.len()
    }

    /// q(next | current).
    pub fn prob(&self, next: Cell, current: Cell) -> f64 {
        self.rows[current - 1][next - 1]
    }

    pub fn row(&self, current: Cell) -> &[f64] {
        &self.rows[current - 1]
    }

    pub fn to_json(&self) -> Result<String> {
        let side = self
            .side
            .ok_or_else(|| Error::Domain("only grid-built matrices have a JSON form".into()))?;
        Ok(serde_json::json!({ "side": side, "rows": self.rows }).to_string())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Wire {
            side: usize,
            rows: Vec<Vec<f64>>,
        }
        let w: Wire = serde_json::from_str(s)?;
        let spec = GridSpec::new(w.side)?;
        Self::from_rows(&spec, w.rows)
    }

    /// Per-row Shannon entropy in bits, averaged under `weights` (typically a
    /// stationary or uniform distribution). Used to compare chain entropy rates.
    pub fn weighted_row_entropy_bits(&self, weights: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(weights)
            .map(|(row, &w)| {
                let h: f64 = row
                    .iter()
                    .filter(|&&p| p > 0.0)
                    .map(|&p| -p * p.log2())
                    .sum();
                w * h
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDistribution {
    p: Vec<f64>,
}

impl InitialDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        let sum: f64 = p.iter().sum();
        if p.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "initial distribution",
            });
        }
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self { p })
    }

    pub fn uniform(spec: &GridSpec) -> Self {
        Self::uniform_k(spec.cell_count())
    }

    pub fn uniform_k(k: usize) -> Self {
        Self {
            p: vec![1.0 / k as f64; k],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn prob(&self, cell: Cell) -> f64 {
        self.p[cell - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub cells: Vec<Cell>,
}

/// Uniform transitions: every entry 1/cell_count.
pub fn build_q0(spec: &GridSpec) -> TransitionMatrix {
    let k = spec.cell_count();
    let rows = vec![vec![1.0 / k as f64; k]; k];
    TransitionMatrix::from_rows(spec, rows).expect("uniform rows are stochastic")
}

/// Distance-weighted transitions: unnormalized weight r_0 on self, r_d/d for a
/// move of Manhattan distance d, each row normalized.
pub fn build_q1(spec: &GridSpec, r: &[f64]) -> Result<TransitionMatrix> {
    let k = spec.cell_count();
    if r.len() < spec.max_distance() + 1 {
        return Err(Error::Domain(format!(
            "need r for distances 0..={}, got {} entries",
            spec.max_distance(),
            r.len()
        )));
    }
    if r.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Domain("r weights must be nonnegative".into()));
    }
    let mut rows = Vec::with_capacity(k);
    for x in spec.cells() {
        let mut row = Vec::with_capacity(k);
        for x2 in spec.cells() {
            let d = manhattan(x, x2, spec)?;
            let w = if d == 0 { r[0] } else { r[d] / d as f64 };
            row.push(w);
        }
        let z: f64 = row.iter().sum();
        if z <= 0.0 {
            return Err(Error::ZeroRowWeight { row: x });
        }
        for w in &mut row {
            *w /= z;
        }
        rows.push(row);
    }
    TransitionMatrix::from_rows(spec, rows)
}

/// Path-following transitions: u(x,x') = r1 on the preferred successor
/// (x+1 off the right edge, x+4 on it, and the absorbing corner 16->16),
/// r0 elsewhere; q proportional to u/max(d,1), rows normalized.
pub fn build_q2(spec: &GridSpec, r0: f64, r1: f64) -> Result<TransitionMatrix> {
    if r0 < 0.0 || r1 < 0.0 || !r0.is_finite() || !r1.is_finite() {
        return Err(Error::Domain("r0, r1 must be nonnegative".into()));
    }
    let k = spec.cell_count();
    let side = spec.side();
    let mut rows = Vec::with_capacity(k);
    for x in spec.cells() {
        let mut row = Vec::with_capacity(k);
        for x2 in spec.cells() {
            let u = if x < k {
                let preferred = if x % side != 0 { x + 1 } else { x + side };
                if x2 == preferred {
                    r1
                } else {
                    r0
                }
            } else if x2 == k {
                r1
            } else {
                r0
            };
            let d = manhattan(x, x2, spec)?;
            row.push(u / (d.max(1) as f64));
        }
        let z: f64 = row.iter().sum();
        if z <= 0.0 {
            return Err(Error::ZeroRowWeight { row: x });
        }
        for w in &mut row {
            *w /= z;
        }
        rows.push(row);
    }
    TransitionMatrix::from_rows(spec, rows)
}

/// The paper's r-table for `build_q1`: r_0 = 1, r_i = 7 - i for i = 1..=6.
pub fn default_r_table() -> Vec<f64> {
    vec![1.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0]
}

/// A complete trajectory model: geometry, chain, and initial distribution.
#[derive(Debug, Clone)]
pub struct World {
    pub spec: GridSpec,
    pub q: TransitionMatrix,
    pub p1: InitialDistribution,
}

impl World {
    /// Identity chain over the same alphabet; stands in for the missing
    /// transition at the first release step, where x_prev := x_1.
    pub fn identity_chain(&self) -> TransitionMatrix {
        let k = self.spec.cell_count();
        let rows = (0..k)
            .map(|i| {
                let mut row = vec![0.0; k];
                row[i] = 1.0;
                row
            })
            .collect();
        TransitionMatrix::from_rows_general(k, rows).expect("identity rows")
    }
}

pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub fn sample_trajectory<R: Rng + ?Sized>(
    q: &TransitionMatrix,
    p1: &InitialDistribution,
    n: usize,
    rng: &mut R,
) -> Trajectory {
    assert!(n >= 1, "horizon must be at least 1");
    let mut cells = Vec::with_capacity(n);
    let mut cur = sample_categorical(p1.probs(), rng) + 1;
    cells.push(cur);
    for _ in 1..n {
        cur = sample_categorical(q.row(cur), rng) + 1;
        cells.push(cur);
    }
    Trajectory { cells }
}

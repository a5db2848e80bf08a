//! Brute-force enumeration of the joint law of (X^n, Y^n) on small alphabets.
//!
//! Everything here is exact (up to f64 summation) and deliberately slow: it
//! exists to validate the leakage decomposition, the simplified-policy
//! reduction, the recursive belief filter, and both mechanisms' accounting on
//! worlds small enough to enumerate.

use rand::Rng;

use crate::belief::{belief_update, Belief, ReleaseKernel};
use crate::error::{Error, Result};
use crate::gridworld::{InitialDistribution, TransitionMatrix};

/// Hard cap on joint-table entries.
pub const TABLE_GUARD: u128 = 10_000_000;

/// Release policy in explicit table form.
///
/// `Simplified` tables give q_t(y | x_t, x_{t-1}, y^{t-1}); `History` tables
/// give q_t(y | x^t, y^{t-1}). The first step has no previous location; the
/// simplified form uses the x_prev := x_1 convention, the history form's x^1
/// is just (x_1).
#[derive(Debug, Clone)]
pub enum ExplicitPolicy {
    Simplified(SimplifiedPolicy),
    History(HistoryPolicy),
}

/// tables[t] is indexed by (prefix y^t of length t, x_t, x_{t-1}, y_t), flat
/// in that order with radix k.
#[derive(Debug, Clone)]
pub struct SimplifiedPolicy {
    pub k: usize,
    pub n: usize,
    tables: Vec<Vec<f64>>,
}

/// tables[t] is indexed by (prefix y^t of length t, x-history x^{t+1} of
/// length t+1, y_t), flat in that order with radix k.
#[derive(Debug, Clone)]
pub struct HistoryPolicy {
    pub k: usize,
    pub n: usize,
    tables: Vec<Vec<f64>>,
}

/// Radix-k index of a 1-based symbol sequence.
fn seq_index(seq: &[usize], k: usize) -> usize {
    seq.iter().fold(0, |acc, &s| acc * k + (s - 1))
}

fn check_slices(tables: &[Vec<f64>], k: usize) -> Result<()> {
    for table in tables {
        for slice in table.chunks(k) {
            let sum: f64 = slice.iter().sum();
            if slice.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(Error::NonFinite {
                    context: "policy slice",
                });
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::NotNormalized { sum });
            }
        }
    }
    Ok(())
}

fn random_simplex<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    // Dirichlet(1,...,1) via exponentials
    let mut v: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let sum: f64 = v.iter().sum();
    for x in &mut v {
        *x /= sum;
    }
    v
}

impl SimplifiedPolicy {
    pub fn new(k: usize, n: usize, tables: Vec<Vec<f64>>) -> Result<Self> {
        if tables.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: tables.len(),
            });
        }
        for (t, table) in tables.iter().enumerate() {
            let expected = k.pow(t as u32) * k * k * k;
            if table.len() != expected {
                return Err(Error::ShapeMismatch {
                    expected,
                    got: table.len(),
                });
            }
        }
        check_slices(&tables, k)?;
        Ok(Self { k, n, tables })
    }

    /// q_t(y | x_t, x_{t-1}, y^{t-1}); `t` is 1-based, `y_prefix` has length t-1.
    pub fn prob(&self, t: usize, y_prefix: &[usize], x: usize, x_prev: usize, y: usize) -> f64 {
        let k = self.k;
        let p = seq_index(y_prefix, k);
        let idx = ((p * k + (x - 1)) * k + (x_prev - 1)) * k + (y - 1);
        self.tables[t - 1][idx]
    }

    /// Random simplified policy; every conditional slice is drawn uniformly
    /// from the simplex.
    pub fn random<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> Self {
        let tables = (0..n)
            .map(|t| {
                let slices = k.pow(t as u32) * k * k;
                let mut table = Vec::with_capacity(slices * k);
                for _ in 0..slices {
                    table.extend(random_simplex(k, rng));
                }
                table
            })
            .collect();
        Self::new(k, n, tables).expect("random slices are normalized")
    }

    /// Policy applying a fixed per-step release kernel regardless of the
    /// release history. Panics if a kernel's alphabet disagrees with `k`.
    pub fn from_kernels(k: usize, kernels: &[ReleaseKernel]) -> Self {
        let n = kernels.len();
        let tables = (0..n)
            .map(|t| {
                let kernel = &kernels[t];
                assert_eq!(kernel.cell_count(), k);
                let prefixes = k.pow(t as u32);
                let mut table = Vec::with_capacity(prefixes * k * k * k);
                for _ in 0..prefixes {
                    for x in 1..=k {
                        for xp in 1..=k {
                            table.extend_from_slice(kernel.row(x, xp));
                        }
                    }
                }
                table
            })
            .collect();
        Self::new(k, n, tables).expect("kernel rows are normalized")
    }
}

impl HistoryPolicy {
    pub fn new(k: usize, n: usize, tables: Vec<Vec<f64>>) -> Result<Self> {
        if tables.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: tables.len(),
            });
        }
        for (t, table) in tables.iter().enumerate() {
            let expected = k.pow(t as u32) * k.pow(t as u32 + 1) * k;
            if table.len() != expected {
                return Err(Error::ShapeMismatch {
                    expected,
                    got: table.len(),
                });
            }
        }
        check_slices(&tables, k)?;
        Ok(Self { k, n, tables })
    }

    /// q_t(y | x^t, y^{t-1}); `t` is 1-based, `x_hist` has length t,
    /// `y_prefix` length t-1.
    pub fn prob(&self, t: usize, y_prefix: &[usize], x_hist: &[usize], y: usize) -> f64 {
        let k = self.k;
        let p = seq_index(y_prefix, k);
        let xh = seq_index(x_hist, k);
        let idx = (p * k.pow(t as u32) + xh) * k + (y - 1);
        self.tables[t - 1][idx]
    }

    pub fn random<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> Self {
        let tables = (0..n)
            .map(|t| {
                let slices = k.pow(t as u32) * k.pow(t as u32 + 1);
                let mut table = Vec::with_capacity(slices * k);
                for _ in 0..slices {
                    table.extend(random_simplex(k, rng));
                }
                table
            })
            .collect();
        Self::new(k, n, tables).expect("random slices are normalized")
    }
}

impl ExplicitPolicy {
    pub fn alphabet(&self) -> usize {
        match self {
            ExplicitPolicy::Simplified(p) => p.k,
            ExplicitPolicy::History(p) => p.k,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            ExplicitPolicy::Simplified(p) => p.n,
            ExplicitPolicy::History(p) => p.n,
        }
    }

    fn release_prob(&self, t: usize, y_prefix: &[usize], x_hist: &[usize], y: usize) -> f64 {
        match self {
            ExplicitPolicy::Simplified(p) => {
                let x = x_hist[t - 1];
                let x_prev = if t == 1 { x } else { x_hist[t - 2] };
                p.prob(t, y_prefix, x, x_prev, y)
            }
            ExplicitPolicy::History(p) => p.prob(t, y_prefix, &x_hist[..t], y),
        }
    }
}

/// Exact joint probability table over (x^n, y^n), flat with the x-sequence as
/// the major index.
#[derive(Debug, Clone)]
pub struct JointLaw {
    pub k: usize,
    pub n: usize,
    p: Vec<f64>,
}

/// Iterate all 1-based sequences of length n over alphabet k, in radix order.
fn for_each_seq(k: usize, n: usize, mut f: impl FnMut(&[usize])) {
    let mut seq = vec![1usize; n];
    loop {
        f(&seq);
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if seq[i] < k {
                seq[i] += 1;
                break;
            }
            seq[i] = 1;
        }
    }
}

pub fn enumerate_joint(
    policy: &ExplicitPolicy,
    q: &TransitionMatrix,
    p1: &InitialDistribution,
) -> Result<JointLaw> {
    let k = policy.alphabet();
    let n = policy.horizon();
    if q.cell_count() != k || p1.probs().len() != k {
        return Err(Error::ShapeMismatch {
            expected: k,
            got: q.cell_count(),
        });
    }
    let entries = (k as u128).pow(2 * n as u32);
    if entries > TABLE_GUARD {
        return Err(Error::TableTooLarge {
            entries,
            limit: TABLE_GUARD,
        });
    }
    let kn = k.pow(n as u32);
    let mut p = vec![0.0; kn * kn];
    for_each_seq(k, n, |xs| {
        // chain probability of x^n
        let mut chain = p1.prob(xs[0]);
        for w in xs.windows(2) {
            chain *= q.prob(w[1], w[0]);
        }
        if chain == 0.0 {
            return;
        }
        let xi = seq_index(xs, k);
        for_each_seq(k, n, |ys| {
            let mut prob = chain;
            for t in 1..=n {
                prob *= policy.release_prob(t, &ys[..t - 1], xs, ys[t - 1]);
                if prob == 0.0 {
                    break;
                }
            }
            if prob != 0.0 {
                p[xi * kn + seq_index(ys, k)] = prob;
            }
        });
    });
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized { sum: total });
    }
    Ok(JointLaw { k, n, p })
}

impl JointLaw {
    pub fn prob(&self, xs: &[usize], ys: &[usize]) -> f64 {
        let kn = self.k.pow(self.n as u32);
        self.p[seq_index(xs, self.k) * kn + seq_index(ys, self.k)]
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }

    fn kn(&self) -> usize {
        self.k.pow(self.n as u32)
    }

    /// Marginal over (x_t, x_{t-1}, y^t) with 1-based t and the x_0 := x_1
    /// convention at t = 1. Flat index ((x-1)k + (x_prev-1)) * k^t + y-prefix.
    fn marginal_xxy(&self, t: usize) -> Vec<f64> {
        let k = self.k;
        let kn = self.kn();
        let kt = k.pow(t as u32);
        let mut m = vec![0.0; k * k * kt];
        let mut xi = 0usize;
        for_each_seq(k, self.n, |xs| {
            let x = xs[t - 1];
            let xp = if t == 1 { x } else { xs[t - 2] };
            let base = ((x - 1) * k + (xp - 1)) * kt;
            let mut yi = 0usize;
            for_each_seq(k, self.n, |ys| {
                let p = self.p[xi * kn + yi];
                if p > 0.0 {
                    m[base + seq_index(&ys[..t], k)] += p;
                }
                yi += 1;
            });
            xi += 1;
        });
        m
    }

    /// Marginal over y^t prefixes, flat radix index.
    fn marginal_y_prefix(&self, t: usize) -> Vec<f64> {
        let k = self.k;
        let kn = self.kn();
        let kt = k.pow(t as u32);
        let mut m = vec![0.0; kt];
        for (idx, &p) in self.p.iter().enumerate() {
            if p > 0.0 {
                let yi = idx % kn;
                m[yi / k.pow((self.n - t) as u32)] += p;
            }
        }
        m
    }
}

/// I(X^n; Y^n) in bits.
pub fn mutual_information_full(j: &JointLaw) -> f64 {
    let kn = j.kn();
    let mut px = vec![0.0; kn];
    let mut py = vec![0.0; kn];
    for (idx, &p) in j.p.iter().enumerate() {
        if p > 0.0 {
            px[idx / kn] += p;
            py[idx % kn] += p;
        }
    }
    let mut mi = 0.0;
    for (idx, &p) in j.p.iter().enumerate() {
        if p > 0.0 {
            mi += p * (p / (px[idx / kn] * py[idx % kn])).log2();
        }
    }
    mi.max(0.0)
}

/// Sum over t of I(X_t, X_{t-1}; Y_t | Y^{t-1}) in bits, evaluated by direct
/// summation over the table.
pub fn decomposed_leakage(j: &JointLaw) -> f64 {
    let k = j.k;
    let mut total = 0.0;
    for t in 1..=j.n {
        let kt = k.pow(t as u32);
        let ktm1 = kt / k;
        let m = j.marginal_xxy(t);
        // marginal over (x_t, x_{t-1}, y^{t-1})
        let mut m_prev = vec![0.0; k * k * ktm1];
        for (idx, &p) in m.iter().enumerate() {
            if p > 0.0 {
                let pair = idx / kt;
                let yfull = idx % kt;
                m_prev[pair * ktm1 + yfull / k] += p;
            }
        }
        let w_t = j.marginal_y_prefix(t);
        let w_prev = j.marginal_y_prefix(t - 1);
        for (idx, &p) in m.iter().enumerate() {
            if p > 0.0 {
                let pair = idx / kt;
                let yfull = idx % kt;
                let cond_y = p / m_prev[pair * ktm1 + yfull / k];
                let base_y = w_t[yfull] / w_prev[yfull / k];
                total += p * (cond_y / base_y).log2();
            }
        }
    }
    total.max(0.0)
}

/// Sum over t of I(X^t; Y_t | Y^{t-1}) in bits (the chain-rule decomposition
/// that holds for every policy class).
pub fn chain_rule_leakage(j: &JointLaw) -> f64 {
    let k = j.k;
    let kn = j.kn();
    let mut total = 0.0;
    for t in 1..=j.n {
        let kt = k.pow(t as u32);
        let ktm1 = kt / k;
        // marginal over (x^t, y^t)
        let mut m = vec![0.0; kt * kt];
        let mut xi = 0usize;
        for_each_seq(k, j.n, |xs| {
            let xpre = seq_index(&xs[..t], k);
            let mut yi = 0usize;
            for_each_seq(k, j.n, |ys| {
                let p = j.p[xi * kn + yi];
                if p > 0.0 {
                    m[xpre * kt + seq_index(&ys[..t], k)] += p;
                }
                yi += 1;
            });
            xi += 1;
        });
        let mut m_prev = vec![0.0; kt * ktm1];
        for (idx, &p) in m.iter().enumerate() {
            if p > 0.0 {
                m_prev[(idx / kt) * ktm1 + (idx % kt) / k] += p;
            }
        }
        let w_t = j.marginal_y_prefix(t);
        let w_prev = j.marginal_y_prefix(t - 1);
        for (idx, &p) in m.iter().enumerate() {
            if p > 0.0 {
                let xpre = idx / kt;
                let yfull = idx % kt;
                let cond_y = p / m_prev[xpre * ktm1 + yfull / k];
                let base_y = w_t[yfull] / w_prev[yfull / k];
                total += p * (cond_y / base_y).log2();
            }
        }
    }
    total.max(0.0)
}

/// Exact conditional distribution of X_t given Y^t = y_prefix, t = prefix length.
pub fn posterior(j: &JointLaw, y_prefix: &[usize]) -> Result<Vec<f64>> {
    let t = y_prefix.len();
    if t == 0 || t > j.n {
        return Err(Error::Domain(format!(
            "prefix length {t} outside 1..={}",
            j.n
        )));
    }
    let k = j.k;
    let kn = j.kn();
    let pre = seq_index(y_prefix, k);
    let tail = k.pow((j.n - t) as u32);
    let mut post = vec![0.0; k];
    let mut xi = 0usize;
    for_each_seq(k, j.n, |xs| {
        let x = xs[t - 1];
        let mut mass = 0.0;
        for ytail in 0..tail {
            mass += j.p[xi * kn + pre * tail + ytail];
        }
        post[x - 1] += mass;
        xi += 1;
    });
    let z: f64 = post.iter().sum();
    if z <= 0.0 {
        return Err(Error::Domain("zero-probability release prefix".into()));
    }
    for v in &mut post {
        *v /= z;
    }
    Ok(post)
}

/// Lemma-2 construction: the simplified policy matching a history policy's
/// conditional release law q_s = P(Y_t | X_t, X_{t-1}, Y^{t-1}). Slices whose
/// conditioning event has zero probability fall back to uniform.
pub fn simplify_history_policy(
    h: &HistoryPolicy,
    q: &TransitionMatrix,
    p1: &InitialDistribution,
) -> Result<SimplifiedPolicy> {
    let k = h.k;
    let n = h.n;
    let j = enumerate_joint(&ExplicitPolicy::History(h.clone()), q, p1)?;
    let mut tables = Vec::with_capacity(n);
    for t in 1..=n {
        let kt = k.pow(t as u32);
        let ktm1 = kt / k;
        let m = j.marginal_xxy(t);
        let mut m_prev = vec![0.0; k * k * ktm1];
        for (idx, &p) in m.iter().enumerate() {
            let pair = idx / kt;
            let yfull = idx % kt;
            m_prev[pair * ktm1 + yfull / k] += p;
        }
        // table layout: (y^{t-1} prefix, x, x_prev, y)
        let mut table = vec![0.0; ktm1 * k * k * k];
        for pre in 0..ktm1 {
            for x in 0..k {
                for xp in 0..k {
                    let denom = m_prev[(x * k + xp) * ktm1 + pre];
                    let base = ((pre * k + x) * k + xp) * k;
                    if denom > 0.0 {
                        for y in 0..k {
                            table[base + y] = m[(x * k + xp) * kt + pre * k + y] / denom;
                        }
                    } else {
                        for y in 0..k {
                            table[base + y] = 1.0 / k as f64;
                        }
                    }
                }
            }
        }
        tables.push(table);
    }
    SimplifiedPolicy::new(k, n, tables)
}

/// Joint marginal over (x_t, x_{t-1}, y^t), exposed for cross-checks.
pub fn marginal_xxy_public(j: &JointLaw, t: usize) -> Vec<f64> {
    j.marginal_xxy(t)
}

/// Probability of a release prefix.
pub fn prefix_probability(j: &JointLaw, y_prefix: &[usize]) -> f64 {
    let t = y_prefix.len();
    j.marginal_y_prefix(t)[seq_index(y_prefix, j.k)]
}

/// Runs the recursive filter along a release prefix and returns the belief
/// after observing it (the posterior over x_t).
pub fn filter_along_prefix(
    kernels: &[ReleaseKernel],
    q: &TransitionMatrix,
    p1: &InitialDistribution,
    y_prefix: &[usize],
) -> Result<Belief> {
    let mut b = Belief::new(p1.probs().to_vec())?;
    for (t, &y) in y_prefix.iter().enumerate() {
        let kernel = &kernels[t];
        if t == 0 {
            // first step: x_prev := x_1, prior p1 plays the belief role and
            // the chain step is the identity
            let ident = identity_chain(q.cell_count());
            b = belief_update(&b, kernel, &ident, y)?;
        } else {
            b = belief_update(&b, kernel, q, y)?;
        }
    }
    Ok(b)
}

fn identity_chain(k: usize) -> TransitionMatrix {
    let rows = (0..k)
        .map(|i| {
            let mut row = vec![0.0; k];
            row[i] = 1.0;
            row
        })
        .collect();
    TransitionMatrix::from_rows_general(k, rows).expect("identity rows")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_chain<R: Rng + ?Sized>(k: usize, rng: &mut R) -> TransitionMatrix {
        let rows = (0..k).map(|_| random_simplex(k, rng)).collect();
        TransitionMatrix::from_rows_general(k, rows).unwrap()
    }

    fn random_initial<R: Rng + ?Sized>(k: usize, rng: &mut R) -> InitialDistribution {
        InitialDistribution::new(random_simplex(k, rng)).unwrap()
    }

    #[test]
    fn n1_joint_is_product_of_prior_and_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = 3;
        let pol = SimplifiedPolicy::random(k, 1, &mut rng);
        let q = random_chain(k, &mut rng);
        let p1 = random_initial(k, &mut rng);
        let j = enumerate_joint(&ExplicitPolicy::Simplified(pol.clone()), &q, &p1).unwrap();
        for x in 1..=k {
            for y in 1..=k {
                let expect = p1.prob(x) * pol.prob(1, &[], x, x, y);
                assert!((j.prob(&[x], &[y]) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn marginals_match_chain_marginals() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = 2;
        let n = 2;
        let pol = SimplifiedPolicy::random(k, n, &mut rng);
        let q = random_chain(k, &mut rng);
        let p1 = random_initial(k, &mut rng);
        let j = enumerate_joint(&ExplicitPolicy::Simplified(pol), &q, &p1).unwrap();
        // P(x1, x2) should equal p1(x1) q(x2|x1) after marginalizing y
        for x1 in 1..=k {
            for x2 in 1..=k {
                let mut got = 0.0;
                for y1 in 1..=k {
                    for y2 in 1..=k {
                        got += j.prob(&[x1, x2], &[y1, y2]);
                    }
                }
                let expect = p1.prob(x1) * q.prob(x2, x1);
                assert!((got - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn independent_releases_have_zero_mi() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = 2;
        let n = 2;
        // release distribution fixed per step, independent of everything
        let kernels: Vec<ReleaseKernel> = (0..n)
            .map(|_| ReleaseKernel::constant(k, &random_simplex(k, &mut rng)).unwrap())
            .collect();
        let pol = SimplifiedPolicy::from_kernels(k, &kernels);
        let q = random_chain(k, &mut rng);
        let p1 = random_initial(k, &mut rng);
        let j = enumerate_joint(&ExplicitPolicy::Simplified(pol), &q, &p1).unwrap();
        assert!(mutual_information_full(&j) < 1e-10);
        assert!(decomposed_leakage(&j) < 1e-10);
    }

    #[test]
    fn identity_releases_leak_trajectory_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = 3;
        let n = 3;
        let kernels = vec![ReleaseKernel::identity(k); n];
        let pol = SimplifiedPolicy::from_kernels(k, &kernels);
        let q = random_chain(k, &mut rng);
        let p1 = random_initial(k, &mut rng);
        let j = enumerate_joint(&ExplicitPolicy::Simplified(pol), &q, &p1).unwrap();
        // H(X^n)
        let mut h = 0.0;
        for_each_seq(k, n, |xs| {
            let mut p = p1.prob(xs[0]);
            for w in xs.windows(2) {
                p *= q.prob(w[1], w[0]);
            }
            if p > 0.0 {
                h -= p * p.log2();
            }
        });
        let mi = mutual_information_full(&j);
        // kernel floor keeps this from exact equality
        assert!((mi - h).abs() < 1e-3, "mi {mi} vs H {h}");
        assert!((decomposed_leakage(&j) - mi).abs() < 1e-10);
    }

    #[test]
    fn theorem_equivalence_on_random_simplified_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..200 {
            let k = 2 + (trial % 2);
            let n = 1 + (trial % 3);
            let pol = SimplifiedPolicy::random(k, n, &mut rng);
            let q = random_chain(k, &mut rng);
            let p1 = random_initial(k, &mut rng);
            let j = enumerate_joint(&ExplicitPolicy::Simplified(pol), &q, &p1).unwrap();
            let full = mutual_information_full(&j);
            let dec = decomposed_leakage(&j);
            assert!(
                (full - dec).abs() < 1e-10,
                "trial {trial}: full {full} vs decomposed {dec}"
            );
            let chain = chain_rule_leakage(&j);
            assert!((full - chain).abs() < 1e-12);
        }
    }

    #[test]
    fn history_policies_satisfy_lemma1_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut strict = 0;
        for trial in 0..100 {
            let k = 2 + (trial % 2);
            let n = 2 + (trial % 2);
            let pol = HistoryPolicy::random(k, n, &mut rng);
            let q = random_chain(k, &mut rng);
            let p1 = random_initial(k, &mut rng);
            let j = enumerate_joint(&ExplicitPolicy::History(pol), &q, &p1).unwrap();
            let full = mutual_information_full(&j);
            let dec = decomposed_leakage(&j);
            assert!(full >= dec - 1e-12, "trial {trial}: {full} < {dec}");
            if full > dec + 1e-9 {
                strict += 1;
            }
            assert!((full - chain_rule_leakage(&j)).abs() < 1e-12);
        }
        assert!(strict > 0, "no strictly larger instance observed");
    }

    #[test]
    fn lemma2_construction_preserves_marginals_and_leakage() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..30 {
            let k = 2 + (trial % 2);
            let n = 2;
            let h = HistoryPolicy::random(k, n, &mut rng);
            let q = random_chain(k, &mut rng);
            let p1 = random_initial(k, &mut rng);
            let jh = enumerate_joint(&ExplicitPolicy::History(h.clone()), &q, &p1).unwrap();
            let s = simplify_history_policy(&h, &q, &p1).unwrap();
            let js = enumerate_joint(&ExplicitPolicy::Simplified(s), &q, &p1).unwrap();
            for t in 1..=n {
                let mh = marginal_xxy_public(&jh, t);
                let ms = marginal_xxy_public(&js, t);
                for (a, b) in mh.iter().zip(&ms) {
                    assert!((a - b).abs() < 1e-12, "trial {trial} t {t}: {a} vs {b}");
                }
            }
            let dh = decomposed_leakage(&jh);
            let ds = decomposed_leakage(&js);
            assert!((dh - ds).abs() < 1e-10, "trial {trial}: {dh} vs {ds}");
        }
    }

    #[test]
    fn posterior_uniform_independent_world() {
        let k = 3;
        let n = 2;
        let kernels = vec![ReleaseKernel::uniform(k); n];
        let pol = SimplifiedPolicy::from_kernels(k, &kernels);
        let q = TransitionMatrix::from_rows_general(k, vec![vec![1.0 / 3.0; 3]; 3]).unwrap();
        let p1 = InitialDistribution::uniform_k(k);
        let j = enumerate_joint(&ExplicitPolicy::Simplified(pol), &q, &p1).unwrap();
        let post = posterior(&j, &[2]).unwrap();
        for &p in &post {
            assert!((p - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn recursive_filter_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..20 {
            let k = 3;
            let n = 3;
            let kernels: Vec<ReleaseKernel> = (0..n)
                .map(|_| {
                    let mut rows = Vec::with_capacity(k * k * k);
                    for _ in 0..k * k {
                        rows.extend(random_simplex(k, &mut rng));
                    }
                    ReleaseKernel::from_rows(k, rows).unwrap()
                })
                .collect();
            let pol = SimplifiedPolicy::from_kernels(k, &kernels);
            let q = random_chain(k, &mut rng);
            let p1 = random_initial(k, &mut rng);
            let j = enumerate_joint(&ExplicitPolicy::Simplified(pol), &q, &p1).unwrap();
            for_each_seq(k, n, |prefix| {
                for t in 1..=n {
                    let pre = &prefix[..t];
                    if prefix_probability(&j, pre) <= 0.0 {
                        continue;
                    }
                    let oracle = posterior(&j, pre).unwrap();
                    let filt = filter_along_prefix(&kernels, &q, &p1, pre).unwrap();
                    for (a, b) in oracle.iter().zip(filt.probs()) {
                        assert!(
                            (a - b).abs() < 1e-10,
                            "trial {trial} prefix {pre:?}: {a} vs {b}"
                        );
                    }
                }
            });
        }
    }

    #[test]
    fn size_guard_refuses_large_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let k = 16;
        let pol = SimplifiedPolicy::random(k, 3, &mut rng);
        let q = random_chain(k, &mut rng);
        let p1 = random_initial(k, &mut rng);
        assert!(matches!(
            enumerate_joint(&ExplicitPolicy::Simplified(pol), &q, &p1),
            Err(Error::TableTooLarge { .. })
        ));
    }
}

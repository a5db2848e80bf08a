//! Configuration-driven experiment runner: trains and evaluates the
//! actor-critic mechanism, runs the myopic baseline over a lambda sweep, and
//! persists results as CSV plus a manifest.
//!
//! Results live in `results.csv` with the schema
//! `method,lambda,seed,avg_distortion,avg_leakage_bits,stderr_leakage,stderr_distortion`.
//! Cells are keyed by (method, lambda, seed) and skipped on re-runs unless
//! forced, and the file is always rewritten in a canonical sort order so that
//! identical configurations produce byte-identical output.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::a2c::{evaluate_policy, train, TrainConfig, TrainResult};
use crate::belief::ReleaseKernel;
use crate::error::{Error, Result};
use crate::gridworld::{
    build_q0, build_q1, build_q2, default_r_table, GridSpec, InitialDistribution, TransitionMatrix,
    World,
};
use crate::myopic::run_myopic;
use crate::neural::{checkpoint_to_json, MlpParams};
use crate::oracle::{
    decomposed_leakage, enumerate_joint, filter_along_prefix, marginal_xxy_public,
    mutual_information_full, posterior, simplify_history_policy, ExplicitPolicy, HistoryPolicy,
    SimplifiedPolicy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorldKind {
    Q0,
    Q1,
    Q2,
}

impl FromStr for WorldKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q0" => Ok(Self::Q0),
            "q1" => Ok(Self::Q1),
            "q2" => Ok(Self::Q2),
            other => Err(Error::Config(format!(
                "unknown world '{other}' (expected q0, q1, or q2)"
            ))),
        }
    }
}

impl fmt::Display for WorldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Q0 => write!(f, "q0"),
            Self::Q1 => write!(f, "q1"),
            Self::Q2 => write!(f, "q2"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    A2c,
    Myopic,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a2c" => Ok(Self::A2c),
            "myopic" => Ok(Self::Myopic),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected a2c or myopic)"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::A2c => write!(f, "a2c"),
            Self::Myopic => write!(f, "myopic"),
        }
    }
}

fn default_side() -> usize {
    4
}
fn default_lambdas() -> Vec<f64> {
    // dense near the low-multiplier corner, where the learned mechanism
    // resolves the trade-off reliably at desk scale
    vec![0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75]
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_methods() -> Vec<Method> {
    vec![Method::A2c, Method::Myopic]
}
fn default_gamma() -> f64 {
    0.99
}
fn default_actor_lr() -> f64 {
    2e-3
}
fn default_critic_lr() -> f64 {
    1e-3
}
fn default_hidden() -> usize {
    64
}
fn default_episodes() -> usize {
    500
}
fn default_horizon() -> usize {
    100
}
fn default_rollouts() -> usize {
    50
}
fn default_ba_tol() -> f64 {
    1e-9
}
fn default_ba_max_iter() -> usize {
    5000
}
fn default_delta_clip() -> f64 {
    1.0
}

/// Full experiment description. Serializable as JSON; every field has a
/// default so partial config files work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldKind,
    pub side: usize,
    pub lambdas: Vec<f64>,
    pub dbar: f64,
    pub horizon: usize,
    pub episodes: usize,
    pub rollouts: usize,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden: usize,
    pub delta_clip: f64,
    pub ba_tol: f64,
    pub ba_max_iter: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            world: WorldKind::Q0,
            side: default_side(),
            lambdas: default_lambdas(),
            dbar: 0.0,
            horizon: default_horizon(),
            episodes: default_episodes(),
            rollouts: default_rollouts(),
            seeds: default_seeds(),
            methods: default_methods(),
            gamma: default_gamma(),
            actor_lr: default_actor_lr(),
            critic_lr: default_critic_lr(),
            hidden: default_hidden(),
            delta_clip: default_delta_clip(),
            ba_tol: default_ba_tol(),
            ba_max_iter: default_ba_max_iter(),
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale profile: quick sweeps that finish on a laptop.
    pub fn desk() -> Self {
        Self::default()
    }

    /// Paper-scale profile: long runs matching the reported experiments.
    pub fn paper() -> Self {
        Self {
            episodes: 5000,
            horizon: 300,
            ..Self::default()
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(Error::Config("lambda sweep must be nonempty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list must be nonempty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("method list must be nonempty".into()));
        }
        for &l in &self.lambdas {
            if !(0.0..=20.0).contains(&l) {
                return Err(Error::Config(format!(
                    "lambda {l} outside the supported range [0, 20]"
                )));
            }
        }
        if self.side < 2 {
            return Err(Error::Config("grid side must be at least 2".into()));
        }
        if self.episodes == 0 || self.horizon == 0 || self.rollouts == 0 {
            return Err(Error::Config(
                "episodes, horizon, and rollouts must be positive".into(),
            ));
        }
        if self.dbar < 0.0 {
            return Err(Error::Config("dbar must be nonnegative".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config("gamma must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn build_world(&self) -> Result<World> {
        let spec = GridSpec::new(self.side)?;
        let q = match self.world {
            WorldKind::Q0 => build_q0(&spec),
            WorldKind::Q1 => build_q1(&spec, &default_r_table())?,
            WorldKind::Q2 => build_q2(&spec, 1.0, 6.0)?,
        };
        let p1 = InitialDistribution::uniform(&spec);
        Ok(World { spec, q, p1 })
    }

    pub fn train_config(&self, lambda: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            episodes: self.episodes,
            horizon: self.horizon,
            gamma: self.gamma,
            lambda,
            dbar: self.dbar,
            critic_lr: self.critic_lr,
            actor_lr: self.actor_lr,
            hidden: self.hidden,
            delta_clip: self.delta_clip,
            seed,
        }
    }
}

/// One line of results.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub method: Method,
    pub lambda: f64,
    pub seed: u64,
    pub avg_distortion: f64,
    pub avg_leakage_bits: f64,
    pub stderr_leakage: f64,
    pub stderr_distortion: f64,
}

pub const RESULTS_HEADER: &str =
    "method,lambda,seed,avg_distortion,avg_leakage_bits,stderr_leakage,stderr_distortion";

impl CurveRow {
    pub fn key(&self) -> CellKey {
        CellKey {
            method: self.method,
            lambda_bits: self.lambda.to_bits(),
            seed: self.seed,
        }
    }

    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.method,
            self.lambda,
            self.seed,
            self.avg_distortion,
            self.avg_leakage_bits,
            self.stderr_leakage,
            self.stderr_distortion
        )
    }

    fn from_csv(line: &str) -> Result<Self> {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 7 {
            return Err(Error::Config(format!(
                "malformed results row (expected 7 fields): {line}"
            )));
        }
        let f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Config(format!("bad number '{s}' in results row")))
        };
        Ok(Self {
            method: parts[0].parse()?,
            lambda: f(parts[1])?,
            seed: parts[2]
                .parse()
                .map_err(|_| Error::Config(format!("bad seed '{}'", parts[2])))?,
            avg_distortion: f(parts[3])?,
            avg_leakage_bits: f(parts[4])?,
            stderr_leakage: f(parts[5])?,
            stderr_distortion: f(parts[6])?,
        })
    }
}

/// Canonical ordering key for a result cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellKey {
    pub method: Method,
    pub lambda_bits: u64,
    pub seed: u64,
}

pub fn read_results(path: &Path) -> Result<BTreeMap<CellKey, CurveRow>> {
    let mut rows = BTreeMap::new();
    if !path.exists() {
        return Ok(rows);
    }
    let text = fs::read_to_string(path)?;
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != RESULTS_HEADER {
                return Err(Error::Config(format!("unexpected results header: {line}")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let row = CurveRow::from_csv(line)?;
        rows.insert(row.key(), row);
    }
    Ok(rows)
}

pub fn write_results(path: &Path, rows: &BTreeMap<CellKey, CurveRow>) -> Result<()> {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for row in rows.values() {
        out.push_str(&row.to_csv());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Computes a single experiment cell.
pub fn run_cell(
    cfg: &ExperimentConfig,
    world: &World,
    method: Method,
    lambda: f64,
    seed: u64,
    checkpoint_dir: Option<&Path>,
) -> Result<CurveRow> {
    match method {
        Method::A2c => {
            let tc = cfg.train_config(lambda, seed);
            let res = train(&tc, world)?;
            if let Some(dir) = checkpoint_dir {
                save_checkpoints(dir, lambda, seed, &res)?;
            }
            let eval = evaluate_policy(
                &res.actor,
                world,
                cfg.horizon,
                cfg.rollouts,
                lambda,
                cfg.dbar,
                seed,
            )?;
            Ok(CurveRow {
                method,
                lambda,
                seed,
                avg_distortion: eval.avg_distortion,
                avg_leakage_bits: eval.avg_leakage_bits,
                stderr_leakage: eval.stderr_leakage,
                stderr_distortion: eval.stderr_distortion,
            })
        }
        Method::Myopic => {
            let rows = run_myopic(
                &world.q,
                &world.p1,
                &world.spec,
                &[lambda],
                cfg.horizon,
                cfg.ba_tol,
                cfg.ba_max_iter,
            )?;
            let r = &rows[0];
            // the myopic propagation is exact, so there is no sampling error
            Ok(CurveRow {
                method,
                lambda,
                seed,
                avg_distortion: r.avg_distortion,
                avg_leakage_bits: r.avg_leakage_bits,
                stderr_leakage: 0.0,
                stderr_distortion: 0.0,
            })
        }
    }
}

fn lambda_tag(lambda: f64) -> String {
    format!("{lambda}").replace('.', "p")
}

fn save_checkpoints(dir: &Path, lambda: f64, seed: u64, res: &TrainResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let tag = format!("a2c_l{}_s{seed}", lambda_tag(lambda));
    fs::write(
        dir.join(format!("{tag}_actor.json")),
        checkpoint_to_json(&res.actor),
    )?;
    fs::write(
        dir.join(format!("{tag}_critic.json")),
        checkpoint_to_json(&res.critic),
    )?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub computed: usize,
    pub skipped: usize,
    pub results_path: PathBuf,
}

/// Runs every (method, lambda, seed) cell of the sweep, skipping rows already
/// present unless `force`. Writes results.csv, manifest.json, and (per cell)
/// actor/critic checkpoints. Partial results are flushed after every cell so
/// a failure preserves completed work.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, force: bool) -> Result<RunReport> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let world = cfg.build_world()?;
    let results_path = out_dir.join("results.csv");
    let checkpoint_dir = out_dir.join("checkpoints");
    let mut rows = read_results(&results_path)?;

    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
    });
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    // wall-clock stamp lives outside the manifest so re-runs stay diffable
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    fs::write(out_dir.join("last_run.txt"), format!("{stamp}\n"))?;

    let mut computed = 0;
    let mut skipped = 0;
    // the myopic solution is seed-independent, so solve each lambda once
    let mut myopic_memo: BTreeMap<u64, CurveRow> = BTreeMap::new();
    for &method in &cfg.methods {
        for &lambda in &cfg.lambdas {
            for &seed in &cfg.seeds {
                let key = CellKey {
                    method,
                    lambda_bits: lambda.to_bits(),
                    seed,
                };
                if !force && rows.contains_key(&key) {
                    skipped += 1;
                    continue;
                }
                let row = match (method, myopic_memo.get(&lambda.to_bits())) {
                    (Method::Myopic, Some(cached)) => CurveRow {
                        seed,
                        ..cached.clone()
                    },
                    _ => {
                        let r = run_cell(cfg, &world, method, lambda, seed, Some(&checkpoint_dir))?;
                        if method == Method::Myopic {
                            myopic_memo.insert(lambda.to_bits(), r.clone());
                        }
                        r
                    }
                };
                rows.insert(key, row);
                computed += 1;
                write_results(&results_path, &rows)?;
            }
        }
    }
    write_results(&results_path, &rows)?;
    Ok(RunReport {
        computed,
        skipped,
        results_path,
    })
}

pub const PLOT_HEADER: &str =
    "method,lambda,mean_distortion,mean_leakage_bits,stderr_leakage,stderr_distortion,seeds";

/// Aggregates results.csv across seeds per (method, lambda) and writes
/// plot-ready rows sorted by mean distortion.
pub fn emit_curve(
    results_path: &Path,
    method_filter: Option<Method>,
    out_path: &Path,
) -> Result<usize> {
    let rows = read_results(results_path)?;
    let mut groups: BTreeMap<(Method, u64), Vec<&CurveRow>> = BTreeMap::new();
    for row in rows.values() {
        if method_filter.is_none_or(|m| m == row.method) {
            groups
                .entry((row.method, row.lambda.to_bits()))
                .or_default()
                .push(row);
        }
    }
    if groups.is_empty() {
        return Err(Error::Config(format!(
            "no rows in {} match the selection",
            results_path.display()
        )));
    }
    let mut agg: Vec<(Method, f64, f64, f64, f64, f64, usize)> = groups
        .into_iter()
        .map(|((method, lb), rs)| {
            let n = rs.len() as f64;
            let md = rs.iter().map(|r| r.avg_distortion).sum::<f64>() / n;
            let ml = rs.iter().map(|r| r.avg_leakage_bits).sum::<f64>() / n;
            let (sl, sd) = if rs.len() > 1 {
                let vl = rs
                    .iter()
                    .map(|r| (r.avg_leakage_bits - ml).powi(2))
                    .sum::<f64>()
                    / (n - 1.0);
                let vd = rs
                    .iter()
                    .map(|r| (r.avg_distortion - md).powi(2))
                    .sum::<f64>()
                    / (n - 1.0);
                ((vl / n).sqrt(), (vd / n).sqrt())
            } else {
                (0.0, 0.0)
            };
            (method, f64::from_bits(lb), md, ml, sl, sd, rs.len())
        })
        .collect();
    agg.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.2.partial_cmp(&b.2).expect("finite distortion"))
            .then(a.1.partial_cmp(&b.1).expect("finite lambda"))
    });
    let mut out = String::from(PLOT_HEADER);
    out.push('\n');
    for (method, lambda, md, ml, sl, sd, n) in &agg {
        out.push_str(&format!("{method},{lambda},{md},{ml},{sl},{sd},{n}\n"));
    }
    fs::write(out_path, out)?;
    Ok(agg.len())
}

/// One property suite's outcome inside an oracle report.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub instances: usize,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub suites: Vec<SuiteOutcome>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

/// Runs the exact-enumeration property suites at guarded sizes.
pub fn oracle_check() -> Result<OracleReport> {
    oracle_check_with(0.0)
}

/// Same as [`oracle_check`], with an optional perturbation injected into the
/// recursive filter's output. Nonzero values are for fault-injection tests.
pub fn oracle_check_with(filter_perturbation: f64) -> Result<OracleReport> {
    let suites = vec![
        theorem_decomposition_suite(1000)?,
        lemma_inequality_suite(500)?,
        lemma_construction_suite(100)?,
        filter_consistency_suite(50, filter_perturbation)?,
    ];
    Ok(OracleReport { suites })
}

/// Problem sizes small enough for exact enumeration, cycled per instance.
const ORACLE_SIZES: [(usize, usize); 5] = [(2, 1), (2, 2), (2, 3), (3, 1), (3, 2)];

fn random_small_world(
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(TransitionMatrix, InitialDistribution)> {
    use rand::Rng;
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let mut v: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
            v
        })
        .collect();
    let q = TransitionMatrix::from_rows_general(k, rows)?;
    let mut p: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    Ok((q, InitialDistribution::new(p)?))
}

fn theorem_decomposition_suite(instances: usize) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e0);
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let (k, n) = ORACLE_SIZES[i % ORACLE_SIZES.len()];
        let (q, p1) = random_small_world(k, &mut rng)?;
        let pol = SimplifiedPolicy::random(k, n, &mut rng);
        let j = enumerate_joint(&ExplicitPolicy::Simplified(pol), &q, &p1)?;
        let diff = (mutual_information_full(&j) - decomposed_leakage(&j)).abs();
        worst = worst.max(diff);
    }
    Ok(SuiteOutcome {
        name: "leakage decomposition",
        instances,
        passed: worst < 1e-10,
        detail: format!("max |I(X^n;Y^n) - sum_t I(X_t,X_t-1;Y_t|Y^t-1)| = {worst:.3e}"),
    })
}

fn lemma_inequality_suite(instances: usize) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1e1);
    let mut worst_violation: f64 = 0.0;
    let mut strict = 0usize;
    for i in 0..instances {
        let (k, n) = ORACLE_SIZES[i % ORACLE_SIZES.len()];
        let (q, p1) = random_small_world(k, &mut rng)?;
        let pol = HistoryPolicy::random(k, n, &mut rng);
        let j = enumerate_joint(&ExplicitPolicy::History(pol), &q, &p1)?;
        let gap = mutual_information_full(&j) - decomposed_leakage(&j);
        worst_violation = worst_violation.max(-gap);
        if gap > 1e-6 {
            strict += 1;
        }
    }
    Ok(SuiteOutcome {
        name: "history lower bound",
        instances,
        passed: worst_violation < 1e-12 && strict >= 1,
        detail: format!(
            "worst violation {worst_violation:.3e}, strict inequality in {strict} instances"
        ),
    })
}

fn lemma_construction_suite(instances: usize) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1e2);
    let mut worst: f64 = 0.0;
    let sizes = [(2, 2), (2, 3), (3, 2)];
    for i in 0..instances {
        let (k, n) = sizes[i % sizes.len()];
        let (q, p1) = random_small_world(k, &mut rng)?;
        let h = HistoryPolicy::random(k, n, &mut rng);
        let jh = enumerate_joint(&ExplicitPolicy::History(h.clone()), &q, &p1)?;
        let s = simplify_history_policy(&h, &q, &p1)?;
        let js = enumerate_joint(&ExplicitPolicy::Simplified(s), &q, &p1)?;
        for t in 1..=n {
            let mh = marginal_xxy_public(&jh, t);
            let ms = marginal_xxy_public(&js, t);
            for (a, b) in mh.iter().zip(&ms) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(SuiteOutcome {
        name: "marginal-matching construction",
        instances,
        passed: worst < 1e-12,
        detail: format!("max marginal deviation {worst:.3e}"),
    })
}

fn filter_consistency_suite(instances: usize, perturbation: f64) -> Result<SuiteOutcome> {
    use rand::Rng;
    let k = 3;
    let n = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(0xf11);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (q, p1) = random_small_world(k, &mut rng)?;
        let kernels: Vec<ReleaseKernel> = (0..n)
            .map(|_| {
                let rows: Vec<f64> = (0..k * k * k).map(|_| rng.gen::<f64>() + 0.01).collect();
                ReleaseKernel::from_rows(k, rows).expect("positive rows")
            })
            .collect();
        let pol = SimplifiedPolicy::from_kernels(k, &kernels);
        let j = enumerate_joint(&ExplicitPolicy::Simplified(pol), &q, &p1)?;
        let mut prefix = Vec::new();
        check_prefixes(
            &mut prefix,
            k,
            n,
            &kernels,
            &q,
            &p1,
            &j,
            perturbation,
            &mut worst,
        )?;
    }
    Ok(SuiteOutcome {
        name: "filter consistency",
        instances,
        passed: worst < 1e-10,
        detail: format!("max posterior deviation {worst:.3e}"),
    })
}

#[allow(clippy::too_many_arguments)]
fn check_prefixes(
    prefix: &mut Vec<usize>,
    k: usize,
    n: usize,
    kernels: &[ReleaseKernel],
    q: &TransitionMatrix,
    p1: &InitialDistribution,
    j: &crate::oracle::JointLaw,
    perturbation: f64,
    worst: &mut f64,
) -> Result<()> {
    if !prefix.is_empty() {
        let b = filter_along_prefix(kernels, q, p1, prefix)?;
        let exact = posterior(j, prefix)?;
        for (i, e) in exact.iter().enumerate() {
            *worst = worst.max((b.prob(i + 1) + perturbation - e).abs());
        }
    }
    if prefix.len() == n {
        return Ok(());
    }
    for y in 1..=k {
        prefix.push(y);
        check_prefixes(prefix, k, n, kernels, q, p1, j, perturbation, worst)?;
        prefix.pop();
    }
    Ok(())
}

/// Learning-curve CSV for a single training run.
pub fn curves_to_csv(res: &TrainResult) -> String {
    let mut out = String::from("episode,avg_leakage_bits,avg_distortion,avg_cost\n");
    for c in &res.curves {
        out.push_str(&format!(
            "{},{},{},{}\n",
            c.episode, c.avg_leakage_bits, c.avg_distortion, c.avg_cost
        ));
    }
    out
}

/// Trailing-window mean of the final training episodes, used for reporting.
pub fn smoothed_final(res: &TrainResult, window: usize) -> (f64, f64, f64) {
    let w = window.min(res.curves.len()).max(1);
    let tail = &res.curves[res.curves.len() - w..];
    let n = w as f64;
    (
        tail.iter().map(|c| c.avg_leakage_bits).sum::<f64>() / n,
        tail.iter().map(|c| c.avg_distortion).sum::<f64>() / n,
        tail.iter().map(|c| c.avg_cost).sum::<f64>() / n,
    )
}

/// Saves one training run's artifacts: checkpoints, curves, and a manifest.
pub fn save_training_run(
    out_dir: &Path,
    cfg: &ExperimentConfig,
    tc: &TrainConfig,
    res: &TrainResult,
) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("actor.json"), checkpoint_to_json(&res.actor))?;
    fs::write(out_dir.join("critic.json"), checkpoint_to_json(&res.critic))?;
    fs::write(out_dir.join("curves.csv"), curves_to_csv(res))?;
    let (leak, dist, cost) = smoothed_final(res, 100);
    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "world": cfg.world,
        "train": tc,
        "episodes": res.curves.len(),
        "final_smoothed": {
            "avg_leakage_bits": leak,
            "avg_distortion": dist,
            "avg_cost": cost,
            "window": 100,
        },
    });
    fs::write(
        out_dir.join("train_manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(())
}

/// Loads an MLP checkpoint from a file.
pub fn load_checkpoint(path: &Path) -> Result<MlpParams> {
    crate::neural::checkpoint_from_json(&fs::read_to_string(path)?)
}

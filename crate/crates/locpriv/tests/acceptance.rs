//! End-to-end acceptance suite. Each test prints one pass/fail line for the
//! property it guards; run with `--nocapture` to see them all.
//!
//! The sweep-backed criteria reuse one shared desk-scale experiment per world,
//! cached under the cargo target tmpdir so re-runs skip finished cells.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use locpriv::a2c::{evaluate_policy, train, TrainConfig};
use locpriv::belief::{expected_distortion, Belief, ReleaseKernel};
use locpriv::experiment::{
    oracle_check, run_experiment, CurveRow, ExperimentConfig, Method, WorldKind,
};
use locpriv::gridworld::{
    build_q0, cell_coords, sample_categorical, GridSpec, InitialDistribution, World,
};
use locpriv::myopic::run_myopic;
use locpriv::neural::{dirichlet_log_density, DirichletParams, MlpParams};

fn report(criterion: &str, passed: bool, detail: &str) {
    println!(
        "acceptance [{criterion}]: {} ({detail})",
        if passed { "pass" } else { "FAIL" }
    );
    assert!(passed, "{criterion}: {detail}");
}

fn oracle_suite(name: &str) -> (bool, usize, String) {
    static REPORT: OnceLock<locpriv::experiment::OracleReport> = OnceLock::new();
    let report = REPORT.get_or_init(|| oracle_check().expect("oracle suites run"));
    let s = report
        .suites
        .iter()
        .find(|s| s.name == name)
        .unwrap_or_else(|| panic!("missing suite {name}"));
    (s.passed, s.instances, s.detail.clone())
}

#[test]
fn criterion_01_leakage_decomposition_oracle() {
    let t0 = Instant::now();
    let (passed, instances, detail) = oracle_suite("leakage decomposition");
    let dt = t0.elapsed().as_secs_f64();
    report(
        "1 decomposition equality",
        passed && instances >= 1000 && dt < 60.0,
        &format!("{instances} instances in {dt:.1}s; {detail}"),
    );
}

#[test]
fn criterion_02_history_policy_lower_bound() {
    let t0 = Instant::now();
    let (passed, instances, detail) = oracle_suite("history lower bound");
    let dt = t0.elapsed().as_secs_f64();
    report(
        "2 history lower bound",
        passed && instances >= 500 && dt < 60.0,
        &format!("{instances} instances in {dt:.1}s; {detail}"),
    );
}

#[test]
fn criterion_03_marginal_matching_construction() {
    let (passed, instances, detail) = oracle_suite("marginal-matching construction");
    report(
        "3 marginal-matching construction",
        passed && instances >= 100,
        &format!("{instances} instances; {detail}"),
    );
}

#[test]
fn criterion_04_filter_consistency() {
    let (passed, instances, detail) = oracle_suite("filter consistency");
    report(
        "4 filter consistency",
        passed && instances >= 50,
        &format!("{instances} kernel sets; {detail}"),
    );
}

#[test]
fn criterion_05_gradient_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6ead);
    let mut worst_mlp: f64 = 0.0;
    for _ in 0..100 {
        let dims = [
            3 + rng.gen_range(0..3),
            4 + rng.gen_range(0..4),
            4 + rng.gen_range(0..4),
            1 + rng.gen_range(0..3),
        ];
        let net = MlpParams::init(&dims, &mut rng);
        let input: Vec<f64> = (0..dims[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let weights: Vec<f64> = (0..dims[3]).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |p: &MlpParams| -> f64 {
            p.forward_nograd(&input)
                .unwrap()
                .iter()
                .zip(&weights)
                .map(|(o, w)| o * w)
                .sum()
        };
        let (_, cache) = net.forward(&input).unwrap();
        let grads = net.backward(&cache, &weights).unwrap();
        let signs = |p: &MlpParams| -> Vec<bool> {
            let (_, c) = p.forward(&input).unwrap();
            c.post_activations()
                .iter()
                .flat_map(|layer| layer.iter().map(|&v| v >= 0.0))
                .collect()
        };
        let h = 1e-5;
        for li in 0..grads.layers.len() {
            for wi in 0..grads.layers[li].w.len() {
                let mut p = net.clone();
                p.layers[li].w[wi] += h;
                let mut m = net.clone();
                m.layers[li].w[wi] -= h;
                // central differences are invalid across an activation kink
                if signs(&p) != signs(&m) {
                    continue;
                }
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                let an = grads.layers[li].w[wi];
                // below ~1e-6 the central difference is dominated by float
                // cancellation, not by the gradient being checked
                let denom = fd.abs().max(an.abs());
                if denom > 1e-6 {
                    worst_mlp = worst_mlp.max((fd - an).abs() / denom);
                }
            }
        }
    }
    let mut worst_dir: f64 = 0.0;
    for _ in 0..100 {
        let k = 2 + rng.gen_range(0..5);
        let xi: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..5.0)).collect();
        let mut x: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v /= s);
        let d = DirichletParams::new(xi.clone()).unwrap();
        let (_, grad) = dirichlet_log_density(&x, &d).unwrap();
        let h = 1e-5;
        for i in 0..k {
            let mut xp = xi.clone();
            xp[i] += h;
            let mut xm = xi.clone();
            xm[i] -= h;
            let lp = dirichlet_log_density(&x, &DirichletParams::new(xp).unwrap())
                .unwrap()
                .0;
            let lm = dirichlet_log_density(&x, &DirichletParams::new(xm).unwrap())
                .unwrap()
                .0;
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(grad[i].abs());
            if denom > 1e-7 {
                worst_dir = worst_dir.max((fd - grad[i]).abs() / denom);
            }
        }
    }
    report(
        "5 gradient checks",
        worst_mlp < 1e-4 && worst_dir < 1e-4,
        &format!("worst rel err: network {worst_mlp:.2e}, log-density {worst_dir:.2e}"),
    );
}

#[test]
fn criterion_06_alternating_minimization() {
    let cfg = ExperimentConfig {
        world: WorldKind::Q2,
        ..ExperimentConfig::default()
    };
    let world = cfg.build_world().unwrap();
    // the per-step solver errors out on any objective increase, so a clean
    // full-sweep run certifies non-increase at every iteration
    let sweep = run_myopic(
        &world.q,
        &world.p1,
        &world.spec,
        &cfg.lambdas,
        cfg.horizon,
        cfg.ba_tol,
        cfg.ba_max_iter,
    );
    let monotone = sweep.is_ok();
    let ends = run_myopic(
        &world.q,
        &world.p1,
        &world.spec,
        &[0.0, 1e3],
        cfg.horizon,
        cfg.ba_tol,
        cfg.ba_max_iter,
    )
    .unwrap();
    let free = &ends[0];
    let tight = &ends[1];
    report(
        "6 alternating minimization",
        monotone && free.avg_leakage_bits < 1e-9 && tight.avg_distortion < 1e-3,
        &format!(
            "sweep ok={monotone}; tilt 0 leakage {:.2e}; tilt 1e3 distortion {:.2e}",
            free.avg_leakage_bits, tight.avg_distortion
        ),
    );
}

fn sweep_dir(world: WorldKind) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(format!("acceptance_{world:?}"))
}

fn desk_sweep(world: WorldKind) -> &'static Vec<CurveRow> {
    static Q0: OnceLock<Vec<CurveRow>> = OnceLock::new();
    static Q2: OnceLock<Vec<CurveRow>> = OnceLock::new();
    let slot = match world {
        WorldKind::Q0 => &Q0,
        WorldKind::Q2 => &Q2,
        WorldKind::Q1 => unreachable!("no q1 sweep in acceptance"),
    };
    slot.get_or_init(|| {
        // centering the Lagrangian at the uniform-kernel distortion keeps the
        // initial TD targets near zero, which the desk-scale budget needs
        // 2000 episodes: at the 500-episode default an occasional seed is
        // still far from converged, which wrecks the seed-averaged frontier
        let cfg = ExperimentConfig {
            world,
            dbar: 2.5,
            episodes: 2000,
            ..ExperimentConfig::default()
        };
        let dir = sweep_dir(world);
        run_experiment(&cfg, &dir, false).expect("sweep runs");
        locpriv::experiment::read_results(&dir.join("results.csv"))
            .expect("results readable")
            .into_values()
            .collect()
    })
}

#[test]
fn criterion_07_zero_leakage_optimum() {
    let t0 = Instant::now();
    let cfg = ExperimentConfig {
        world: WorldKind::Q0,
        dbar: 2.5,
        ..ExperimentConfig::default()
    };
    let world = cfg.build_world().unwrap();
    let tc = cfg.train_config(0.0, 0);
    assert_eq!(tc.episodes, 500);
    assert_eq!(tc.horizon, 100);
    let trained = train(&tc, &world).unwrap();
    let eval = evaluate_policy(
        &trained.actor,
        &world,
        tc.horizon,
        cfg.rollouts,
        0.0,
        2.5,
        0,
    )
    .unwrap();
    let dt = t0.elapsed().as_secs_f64();
    report(
        "7 zero-leakage optimum",
        eval.avg_leakage_bits < 0.05 && dt < 1800.0,
        &format!(
            "500 episodes, horizon 100: evaluated leakage {:.4} bits/step after {dt:.0}s",
            eval.avg_leakage_bits
        ),
    );
}

/// Per-method frontier: seed-averaged (distortion, leakage) points, reduced
/// to the Pareto envelope and sorted by distortion. A multiplier whose run
/// lands strictly inside the envelope carries no frontier information, so
/// dominated points are dropped before interpolation.
fn frontier(rows: &[CurveRow], method: Method) -> Vec<(f64, f64)> {
    use std::collections::BTreeMap;
    let mut by_lambda: BTreeMap<u64, Vec<&CurveRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.method == method) {
        by_lambda.entry(r.lambda.to_bits()).or_default().push(r);
    }
    let mut pts: Vec<(f64, f64)> = by_lambda
        .values()
        .map(|rs| {
            let n = rs.len() as f64;
            (
                rs.iter().map(|r| r.avg_distortion).sum::<f64>() / n,
                rs.iter().map(|r| r.avg_leakage_bits).sum::<f64>() / n,
            )
        })
        .collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let undominated: Vec<(f64, f64)> = pts
        .iter()
        .filter(|&&(d, l)| {
            !pts.iter()
                .any(|&(d2, l2)| (d2, l2) != (d, l) && d2 <= d && l2 <= l)
        })
        .copied()
        .collect();
    undominated
}

/// Linear interpolation of leakage at a distortion value inside the
/// frontier's range.
fn interp(pts: &[(f64, f64)], d: f64) -> Option<f64> {
    if d < pts.first()?.0 || d > pts.last()?.0 {
        return None;
    }
    for w in pts.windows(2) {
        let (d0, l0) = w[0];
        let (d1, l1) = w[1];
        if (d0..=d1).contains(&d) {
            if d1 == d0 {
                return Some(l0.min(l1));
            }
            return Some(l0 + (l1 - l0) * (d - d0) / (d1 - d0));
        }
    }
    None
}

#[test]
fn criterion_08_curve_ordering() {
    let t0 = Instant::now();
    let q2 = desk_sweep(WorldKind::Q2);
    let a2c_q2 = frontier(q2, Method::A2c);
    let myo_q2 = frontier(q2, Method::Myopic);
    // compare at every matched distortion drawn from both frontiers' points
    let mut worst_excess = f64::NEG_INFINITY;
    let mut compared = 0;
    for &(d, _) in a2c_q2.iter().chain(&myo_q2) {
        if let (Some(la), Some(lm)) = (interp(&a2c_q2, d), interp(&myo_q2, d)) {
            worst_excess = worst_excess.max(la - lm);
            compared += 1;
        }
    }
    // the learned kernels carry a ~0.01-bit leakage floor (probability floor
    // plus finite Dirichlet concentrations), so the ordering is checked up to
    // that resolution rather than to machine precision
    let ordered = compared >= 3 && worst_excess <= 0.01;

    let q0 = desk_sweep(WorldKind::Q0);
    let a2c_q0 = frontier(q0, Method::A2c);
    let myo_q0 = frontier(q0, Method::Myopic);
    let mut worst_gap: f64 = 0.0;
    let mut compared0 = 0;
    for &(d, _) in a2c_q0.iter().chain(&myo_q0) {
        if let (Some(la), Some(lm)) = (interp(&a2c_q0, d), interp(&myo_q0, d)) {
            worst_gap = worst_gap.max((la - lm).abs());
            compared0 += 1;
        }
    }
    let agree = compared0 >= 3 && worst_gap < 0.05;
    let dt = t0.elapsed().as_secs_f64();
    report(
        "8 curve ordering",
        ordered && agree && dt < 4.0 * 3600.0,
        &format!(
            "structured world: max excess {worst_excess:.4} bits over {compared} matched points; \
             memoryless world: max gap {worst_gap:.4} bits over {compared0} points; {dt:.0}s"
        ),
    );
}

#[test]
fn criterion_09_distortion_anchor() {
    let spec = GridSpec::new(4).unwrap();
    let q = build_q0(&spec);
    let k = spec.cell_count();
    let kernel = ReleaseKernel::uniform(k);
    let b = Belief::uniform(k);
    let exact = expected_distortion(&b, &kernel, &q, &spec).unwrap();
    let closed_form_ok = (exact - 2.5).abs() < 1e-9;

    // Monte Carlo: realized released-vs-true distance over sampled roll-outs
    let mut rng = ChaCha8Rng::seed_from_u64(0xd157);
    let mut samples = Vec::new();
    for _ in 0..200 {
        let mut x = sample_categorical(&vec![1.0 / k as f64; k], &mut rng) + 1;
        let mut total = 0.0;
        let n = 50;
        for _ in 0..n {
            let y = sample_categorical(kernel.row(x, x), &mut rng) + 1;
            let (xr, xc) = cell_coords(x, &spec).unwrap();
            let (yr, yc) = cell_coords(y, &spec).unwrap();
            total += ((xr as i64 - yr as i64).abs() + (xc as i64 - yc as i64).abs()) as f64;
            x = sample_categorical(q.row(x), &mut rng) + 1;
        }
        samples.push(total / n as f64);
    }
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let sigma = (var / m).sqrt();
    let mc_ok = (mean - 2.5).abs() < 3.0 * sigma;
    report(
        "9 distortion anchor",
        closed_form_ok && mc_ok,
        &format!("closed form {exact:.12}; Monte Carlo {mean:.4} +/- {sigma:.4}"),
    );
}

#[test]
fn criterion_10_determinism() {
    let cfg = ExperimentConfig {
        world: WorldKind::Q0,
        methods: vec![Method::A2c, Method::Myopic],
        lambdas: vec![0.5],
        seeds: vec![7],
        episodes: 20,
        horizon: 20,
        rollouts: 5,
        ..ExperimentConfig::default()
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    run_experiment(&cfg, d1.path(), false).unwrap();
    run_experiment(&cfg, d2.path(), false).unwrap();
    let b1 = std::fs::read(d1.path().join("results.csv")).unwrap();
    let b2 = std::fs::read(d2.path().join("results.csv")).unwrap();
    let fresh_match = b1 == b2;
    // re-running in place (forced) must reproduce the same bytes
    run_experiment(&cfg, d1.path(), true).unwrap();
    let b3 = std::fs::read(d1.path().join("results.csv")).unwrap();
    let rerun_match = b1 == b3;
    report(
        "10 determinism",
        fresh_match && rerun_match,
        &format!(
            "fresh dirs identical: {fresh_match}; forced re-run identical: {rerun_match}; {} bytes",
            b1.len()
        ),
    );
}

// keep the trainer exercised even when the big sweeps are cached
#[test]
fn trainer_smoke_remains_deterministic() {
    let spec = GridSpec::new(2).unwrap();
    let world = World {
        q: build_q0(&spec),
        p1: InitialDistribution::uniform(&spec),
        spec,
    };
    let cfg = TrainConfig {
        episodes: 2,
        horizon: 3,
        seed: 11,
        ..TrainConfig::default()
    };
    let r1 = train(&cfg, &world).unwrap();
    let r2 = train(&cfg, &world).unwrap();
    assert_eq!(r1.actor, r2.actor);
    let e1 = evaluate_policy(&r1.actor, &world, 3, 4, 0.0, 0.0, 1).unwrap();
    let e2 = evaluate_policy(&r2.actor, &world, 3, 4, 0.0, 0.0, 1).unwrap();
    assert_eq!(e1.avg_leakage_bits, e2.avg_leakage_bits);
}

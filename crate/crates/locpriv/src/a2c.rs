//! Advantage actor-critic training of the release policy.
//!
//! The actor maps [belief || one-hot(x_t) || one-hot(x_{t-1})] to Dirichlet
//! concentration parameters; one simplex vector is sampled per location pair
//! to materialize the full release kernel each step. The critic maps the
//! belief to a scalar value. Both are updated from the one-step TD error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{
    belief_update, step_cost, Belief, ReleaseKernel, StepCostBreakdown, KERNEL_FLOOR,
};
use crate::error::{Error, Result};
use crate::gridworld::{sample_categorical, Cell, TransitionMatrix, World};
use crate::neural::mlp::ForwardCache;
use crate::neural::{
    dirichlet_log_density, dirichlet_sample, AdamHyper, AdamState, DirichletParams, MlpParams,
};

/// Lower bound added to the softplus concentration mapping.
pub const CONCENTRATION_FLOOR: f64 = 1e-3;

/// Fraction of training over which the Lagrange multiplier ramps from zero
/// to its configured value.
pub const LAMBDA_RAMP_FRACTION: f64 = 0.8;

/// Trailing-episode window used to score checkpoints during training.
pub const CHECKPOINT_WINDOW: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episodes: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub dbar: f64,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub hidden: usize,
    /// Clamp on the TD error fed to the actor update; large multipliers
    /// produce cost scales that otherwise swamp the policy gradient.
    pub delta_clip: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.horizon == 0 {
            return Err(Error::Config(
                "episodes and horizon must be positive".into(),
            ));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config("gamma must lie in (0, 1]".into()));
        }
        if self.lambda < 0.0 || self.dbar < 0.0 {
            return Err(Error::Config("lambda and dbar must be nonnegative".into()));
        }
        if self.delta_clip <= 0.0 || self.delta_clip.is_nan() {
            return Err(Error::Config("delta_clip must be positive".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            horizon: 100,
            gamma: 0.99,
            lambda: 0.0,
            dbar: 0.0,
            critic_lr: 1e-3,
            actor_lr: 2e-3,
            hidden: 64,
            delta_clip: 1.0,
            seed: 0,
        }
    }
}

/// Experience from one environment step.
#[derive(Debug, Clone)]
pub struct ExperienceTuple {
    pub belief_before: Belief,
    pub kernel: ReleaseKernel,
    pub released: Cell,
    pub belief_after: Belief,
    pub cost: StepCostBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdRecord {
    pub delta: f64,
    pub target: f64,
    pub value_before: f64,
    pub value_after: f64,
    pub gamma: f64,
}

pub fn td_error(cost: f64, v_before: f64, v_after: f64, gamma: f64) -> TdRecord {
    let target = cost + gamma * v_after;
    TdRecord {
        delta: target - v_before,
        target,
        value_before: v_before,
        value_after: v_after,
        gamma,
    }
}

/// Forward-pass state for the realized (x_t, x_{t-1}) pair, kept for the
/// actor's gradient step.
#[derive(Debug, Clone)]
pub struct PairSample {
    pub x: Cell,
    pub x_prev: Cell,
    /// Pre-activation actor outputs for the pair.
    pub pre: Vec<f64>,
    /// Concentrations after the softplus mapping.
    pub xi: Vec<f64>,
    /// The pair's sampled, floored and renormalized release row.
    pub sampled: Vec<f64>,
    cache: ForwardCache,
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else if z < -30.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn concentrations(pre: &[f64]) -> Result<DirichletParams> {
    let xi: Vec<f64> = pre
        .iter()
        .map(|&z| softplus(z) + CONCENTRATION_FLOOR)
        .collect();
    if xi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "actor concentrations",
        });
    }
    DirichletParams::new(xi)
}

pub fn actor_input(belief: &Belief, x: Cell, x_prev: Cell) -> Vec<f64> {
    let k = belief.len();
    let mut input = Vec::with_capacity(3 * k);
    input.extend_from_slice(belief.probs());
    for i in 1..=k {
        input.push(if i == x { 1.0 } else { 0.0 });
    }
    for i in 1..=k {
        input.push(if i == x_prev { 1.0 } else { 0.0 });
    }
    input
}

/// Evaluates the actor on every (x, x') pair, samples one release row per
/// pair, and assembles the floored kernel. The realized pair keeps its
/// forward cache for the gradient step.
pub fn build_release_kernel<R: Rng + ?Sized>(
    actor: &MlpParams,
    belief: &Belief,
    realized: (Cell, Cell),
    rng: &mut R,
) -> Result<(ReleaseKernel, PairSample)> {
    let k = belief.len();
    let partial = actor.first_layer_partial(belief.probs());
    let mut rows = Vec::with_capacity(k * k * k);
    let mut realized_pre = None;
    for x in 1..=k {
        for xp in 1..=k {
            let pre = actor.forward_onehot_rest(&partial, &[k + x - 1, 2 * k + xp - 1]);
            if pre.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "actor output",
                });
            }
            let d = concentrations(&pre)?;
            rows.extend(dirichlet_sample(&d, rng));
            if (x, xp) == realized {
                realized_pre = Some(pre);
            }
        }
    }
    let kernel = ReleaseKernel::from_rows(k, rows)?;
    let (x, x_prev) = realized;
    let pre = realized_pre.ok_or(Error::CellOutOfRange {
        cell: x,
        cell_count: k,
    })?;
    // full forward pass for the realized pair, cached for backprop
    let input = actor_input(belief, x, x_prev);
    let (pre_cached, cache) = actor.forward(&input)?;
    debug_assert!(pre
        .iter()
        .zip(&pre_cached)
        .all(|(a, b)| (a - b).abs() < 1e-9));
    let xi = concentrations(&pre_cached)?.concentrations().to_vec();
    let sampled = kernel.row(x, x_prev).to_vec();
    Ok((
        kernel,
        PairSample {
            x,
            x_prev,
            pre: pre_cached,
            xi,
            sampled,
            cache,
        },
    ))
}

pub fn critic_value(critic: &MlpParams, belief: &Belief) -> Result<f64> {
    Ok(critic.forward_nograd(belief.probs())?[0])
}

/// One Adam step on the squared TD error with the target held constant.
pub fn critic_step(
    critic: &mut MlpParams,
    adam: &mut AdamState,
    td: &TdRecord,
    belief: &Belief,
) -> Result<()> {
    let (_, cache) = critic.forward(belief.probs())?;
    // d/dV (target - V)^2 = -2 delta
    let grads = critic.backward(&cache, &[-2.0 * td.delta])?;
    adam.update(critic, &grads)
}

/// One Adam step on the actor loss ln Dirichlet(a | xi) * delta, with delta
/// treated as a constant; costly samples have their density pushed down.
pub fn actor_step(
    actor: &mut MlpParams,
    adam: &mut AdamState,
    td: &TdRecord,
    pair: &PairSample,
) -> Result<()> {
    let d = DirichletParams::new(pair.xi.clone())?;
    let (_, grad_xi) = dirichlet_log_density(&pair.sampled, &d)?;
    let out_grad: Vec<f64> = pair
        .pre
        .iter()
        .zip(&grad_xi)
        .map(|(&z, &g)| td.delta * g * sigmoid(z))
        .collect();
    let grads = actor.backward(&pair.cache, &out_grad)?;
    adam.update(actor, &grads)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub avg_leakage_bits: f64,
    pub avg_distortion: f64,
    pub avg_cost: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub actor: MlpParams,
    pub critic: MlpParams,
    pub curves: Vec<EpisodeStats>,
}

pub fn init_networks(cfg: &TrainConfig, k: usize, rng: &mut impl Rng) -> (MlpParams, MlpParams) {
    let actor = MlpParams::init(&[3 * k, cfg.hidden, cfg.hidden, k], rng);
    let critic = MlpParams::init(&[k, cfg.hidden, cfg.hidden, 1], rng);
    (actor, critic)
}

/// Runs the full training loop. Deterministic given (config, world).
pub fn train(cfg: &TrainConfig, world: &World) -> Result<TrainResult> {
    cfg.validate()?;
    let k = world.spec.cell_count();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut actor, mut critic) = init_networks(cfg, k, &mut rng);
    let mut actor_adam = AdamState::new(&actor, AdamHyper::with_lr(cfg.actor_lr));
    let mut critic_adam = AdamState::new(&critic, AdamHyper::with_lr(cfg.critic_lr));
    let ident = world.identity_chain();

    // The multiplier is annealed in over the first part of training: every
    // run first converges to the low-leakage regime, then trades distortion
    // from that base. Without the ramp, the distortion term dominates the
    // early chaotic phase and many seeds never reach the frontier.
    let ramp_end = (cfg.episodes as f64 * LAMBDA_RAMP_FRACTION).max(1.0);

    // Training can reach a good policy and later walk away from it under
    // gradient noise, so the returned actor is the snapshot whose trailing
    // window had the lowest cost at the target multiplier, not the last one.
    let mut best_actor = actor.clone();
    let mut best_score = f64::INFINITY;

    let mut curves = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        let lambda_ep = cfg.lambda * (episode as f64 / ramp_end).min(1.0);
        let mut belief = Belief::new(world.p1.probs().to_vec())?;
        let mut x_cur = sample_categorical(world.p1.probs(), &mut rng) + 1;
        let mut x_prev = x_cur;
        let mut sum_leak = 0.0;
        let mut sum_dist = 0.0;
        let mut sum_cost = 0.0;
        for t in 0..cfg.horizon {
            // the first release has no preceding transition
            let chain: &TransitionMatrix = if t == 0 { &ident } else { &world.q };
            let (kernel, pair) = build_release_kernel(&actor, &belief, (x_cur, x_prev), &mut rng)?;
            let y = sample_categorical(kernel.row(x_cur, x_prev), &mut rng) + 1;
            let belief_next = belief_update(&belief, &kernel, chain, y)?;
            let cost = step_cost(&belief, &kernel, chain, &world.spec, lambda_ep, cfg.dbar)?;
            if !cost.cost.is_finite() {
                return Err(Error::NonFinite {
                    context: "step cost",
                });
            }
            let v_before = critic_value(&critic, &belief)?;
            let v_after = critic_value(&critic, &belief_next)?;
            let td = td_error(cost.cost, v_before, v_after, cfg.gamma);
            critic_step(&mut critic, &mut critic_adam, &td, &belief)?;
            let actor_td = TdRecord {
                delta: td.delta.clamp(-cfg.delta_clip, cfg.delta_clip),
                ..td
            };
            actor_step(&mut actor, &mut actor_adam, &actor_td, &pair)?;

            sum_leak += cost.leakage;
            sum_dist += cost.distortion;
            sum_cost += cost.cost;

            let x_next = sample_categorical(world.q.row(x_cur), &mut rng) + 1;
            x_prev = x_cur;
            x_cur = x_next;
            belief = belief_next;
        }
        let n = cfg.horizon as f64;
        curves.push(EpisodeStats {
            episode,
            avg_leakage_bits: sum_leak / n,
            avg_distortion: sum_dist / n,
            avg_cost: sum_cost / n,
        });
        if curves.len() >= CHECKPOINT_WINDOW {
            let window = &curves[curves.len() - CHECKPOINT_WINDOW..];
            // scored at the target multiplier so episodes from the ramp
            // phase compete on equal terms
            let score = window
                .iter()
                .map(|e| e.avg_leakage_bits + cfg.lambda * (e.avg_distortion - cfg.dbar))
                .sum::<f64>()
                / CHECKPOINT_WINDOW as f64;
            if score < best_score {
                best_score = score;
                best_actor = actor.clone();
            }
        }
    }
    if best_score.is_finite() {
        actor = best_actor;
    }
    Ok(TrainResult {
        actor,
        critic,
        curves,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvalResult {
    pub avg_leakage_bits: f64,
    pub avg_distortion: f64,
    pub stderr_leakage: f64,
    pub stderr_distortion: f64,
    pub rollouts: usize,
}

fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Evaluates a trained actor without learning: R independent roll-outs of
/// length n, averaging the expected per-step leakage and distortion along the
/// realized belief path.
pub fn evaluate_policy(
    actor: &MlpParams,
    world: &World,
    horizon: usize,
    rollouts: usize,
    lambda: f64,
    dbar: f64,
    seed: u64,
) -> Result<EvalResult> {
    let mut leaks = Vec::with_capacity(rollouts);
    let mut dists = Vec::with_capacity(rollouts);
    for r in 0..rollouts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64 + 1);
        let (l, d) = rollout(
            |belief, pair, rng| {
                let (kernel, _) = build_release_kernel(actor, belief, pair, rng)?;
                Ok(kernel)
            },
            world,
            horizon,
            lambda,
            dbar,
            &mut rng,
        )?;
        leaks.push(l);
        dists.push(d);
    }
    let (ml, sl) = mean_stderr(&leaks);
    let (md, sd) = mean_stderr(&dists);
    Ok(EvalResult {
        avg_leakage_bits: ml,
        avg_distortion: md,
        stderr_leakage: sl,
        stderr_distortion: sd,
        rollouts,
    })
}

/// Evaluates a fixed kernel (actor bypassed) with the same machinery.
pub fn evaluate_fixed_kernel(
    kernel: &ReleaseKernel,
    world: &World,
    horizon: usize,
    rollouts: usize,
    lambda: f64,
    dbar: f64,
    seed: u64,
) -> Result<EvalResult> {
    let mut leaks = Vec::with_capacity(rollouts);
    let mut dists = Vec::with_capacity(rollouts);
    for r in 0..rollouts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64 + 1);
        let (l, d) = rollout(
            |_, _, _| Ok(kernel.clone()),
            world,
            horizon,
            lambda,
            dbar,
            &mut rng,
        )?;
        leaks.push(l);
        dists.push(d);
    }
    let (ml, sl) = mean_stderr(&leaks);
    let (md, sd) = mean_stderr(&dists);
    Ok(EvalResult {
        avg_leakage_bits: ml,
        avg_distortion: md,
        stderr_leakage: sl,
        stderr_distortion: sd,
        rollouts,
    })
}

fn rollout<R: Rng + ?Sized>(
    mut kernel_for: impl FnMut(&Belief, (Cell, Cell), &mut R) -> Result<ReleaseKernel>,
    world: &World,
    horizon: usize,
    lambda: f64,
    dbar: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let ident = world.identity_chain();
    let mut belief = Belief::new(world.p1.probs().to_vec())?;
    let mut x_cur = sample_categorical(world.p1.probs(), rng) + 1;
    let mut x_prev = x_cur;
    let mut sum_leak = 0.0;
    let mut sum_dist = 0.0;
    for t in 0..horizon {
        let chain: &TransitionMatrix = if t == 0 { &ident } else { &world.q };
        let kernel = kernel_for(&belief, (x_cur, x_prev), rng)?;
        let y = sample_categorical(kernel.row(x_cur, x_prev), rng) + 1;
        let cost = step_cost(&belief, &kernel, chain, &world.spec, lambda, dbar)?;
        sum_leak += cost.leakage;
        sum_dist += cost.distortion;
        belief = belief_update(&belief, &kernel, chain, y)?;
        let x_next = sample_categorical(world.q.row(x_cur), rng) + 1;
        x_prev = x_cur;
        x_cur = x_next;
    }
    let n = horizon as f64;
    Ok((sum_leak / n, sum_dist / n))
}

/// Kernel floor used by the trainer; re-exported for tests.
pub const fn kernel_floor() -> f64 {
    KERNEL_FLOOR
}

//! Training by imitation of the clairvoyant oracle, and episode evaluation.
//!
//! Each training iteration rolls in with a per-step mixture of oracle and current
//! learner, takes one uniformly random feasible action at a uniformly sampled step,
//! labels it with the oracle's value-to-go, aggregates the labels and refits the forest.
//! The iterate with the best validation score is returned.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::features::FeatureContext;
use crate::learner::{ForestParams, LearnedPolicy, QDatapoint, RegressionForest};
use crate::objective::{audit_path, Budget, Instance, PathState};
use crate::planners::{heuristic_select, oracle_action, oracle_rollout, PolicyKind};
use crate::sensor::Belief;
use crate::{par, seed, Error, Result};

const ROLLIN_STREAM: u64 = 0x524f_4c4c;
const FOREST_STREAM: u64 = 0x464f_5245;
const EPISODE_STREAM: u64 = 0x4550_4953;
const VALIDATION_STREAM: u64 = 0x5641_4c49;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSchedule {
    /// `beta_i = ratio^(i-1)`
    Geometric(f64),
    /// Oracle only in the first iteration, learner only afterwards.
    Indicator,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule::Geometric(0.9)
    }
}

impl BetaSchedule {
    /// Mixture weight of the oracle in iteration `i` (1-based).
    pub fn beta(&self, i: usize) -> f64 {
        match *self {
            BetaSchedule::Geometric(r) => r.powi(i.saturating_sub(1) as i32),
            BetaSchedule::Indicator => {
                if i <= 1 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BetaSchedule::Geometric(r) if !(0.0..=1.0).contains(&r) => Err(Error::Config(
                format!("geometric ratio {r} outside [0, 1]"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub datapoints_per_iteration: usize,
    pub schedule: BetaSchedule,
    pub budget: Budget,
    pub forest: ForestParams,
    pub seed: u64,
    /// Label every feasible action at the sampled state instead of one random action.
    pub all_actions: bool,
    /// Give up after this many consecutive failed roll-ins for one datapoint.
    pub max_resamples: usize,
}

impl TrainConfig {
    pub fn new(iterations: usize, datapoints_per_iteration: usize, budget: Budget, seed: u64) -> Self {
        TrainConfig {
            iterations,
            datapoints_per_iteration,
            schedule: BetaSchedule::default(),
            budget,
            forest: ForestParams::default(),
            seed,
            all_actions: false,
            max_resamples: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.datapoints_per_iteration == 0 {
            return Err(Error::Config(
                "iterations and datapoints per iteration must be at least 1".into(),
            ));
        }
        self.schedule.validate()?;
        self.forest.validate()
    }
}

/// Who picks actions during an episode.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    Oracle,
    Learned(&'a LearnedPolicy),
    /// A belief-space heuristic or [`PolicyKind::Random`].
    Heuristic(PolicyKind),
}

impl Policy<'_> {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Oracle => PolicyKind::OracleGcb,
            Policy::Learned(_) => PolicyKind::Learned,
            Policy::Heuristic(k) => *k,
        }
    }

    fn select(
        &self,
        inst: &Instance,
        belief: &Belief,
        state: &PathState,
        budget: &Budget,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<usize>> {
        match self {
            Policy::Oracle => Ok(oracle_action(inst, state, budget)),
            Policy::Learned(p) => p.select_action(inst, belief, state, budget),
            Policy::Heuristic(k) => heuristic_select(*k, inst, belief, state, budget, rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Horizon,
    NoFeasibleAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub state_node: usize,
    pub action: usize,
    pub reward: f64,
    pub cumulative: f64,
    pub travel_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub policy: PolicyKind,
    pub steps: Vec<StepRecord>,
    pub path: Vec<usize>,
    pub travel_cost: f64,
    pub termination: Termination,
    /// `Err` describes a budget or cardinality violation of the executed path.
    pub audit: std::result::Result<(), String>,
    /// `(step, rendered evidence grid)` after the given step; step 0 is the start.
    pub snapshots: Vec<(usize, String)>,
}

impl EpisodeTrace {
    pub fn final_reward(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cumulative)
    }

    /// Cumulative reward after step `t`, carrying the last value past early termination.
    pub fn cumulative_at(&self, t: usize) -> f64 {
        if t == 0 {
            return 0.0;
        }
        self.steps
            .iter()
            .take_while(|s| s.t <= t)
            .last()
            .map_or(0.0, |s| s.cumulative)
    }
}

/// Fresh belief holding only the start node's own observation.
pub fn initial_belief(inst: &Instance) -> Belief {
    let start = inst.nodes().start_index();
    let mut belief = Belief::for_world(inst.world());
    belief.update(start, start, Arc::clone(inst.measurement(start)));
    belief
}

/// Runs one episode from the start node until the horizon or until nothing is feasible.
pub fn run_episode(
    policy: Policy<'_>,
    inst: &Instance,
    budget: &Budget,
    seed: u64,
    snapshot_steps: &[usize],
) -> Result<EpisodeTrace> {
    let mut rng = seed::stream(seed, &[EPISODE_STREAM]);
    let nodes = inst.nodes();
    let mut state = PathState::start(nodes);
    let mut belief = initial_belief(inst);
    let mut covered = inst.covered_by(state.visited());
    let base = covered.count();
    let mut steps = Vec::new();
    let mut snapshots = Vec::new();
    if snapshot_steps.contains(&0) {
        snapshots.push((0, belief.render()));
    }
    let mut termination = Termination::Horizon;
    for t in 1..=budget.horizon {
        let Some(a) = policy.select(inst, &belief, &state, budget, &mut rng)? else {
            termination = Termination::NoFeasibleAction;
            break;
        };
        if !inst.is_feasible(&state, a, budget) {
            return Err(Error::Contract(format!(
                "{} chose infeasible action {a} at step {t}",
                policy.kind()
            )));
        }
        let prev = state.last();
        let gained = covered.insert(inst.measurement(a));
        state.push(a, nodes);
        belief.update(prev, a, Arc::clone(inst.measurement(a)));
        steps.push(StepRecord {
            t,
            state_node: prev,
            action: a,
            reward: inst.fraction(gained),
            cumulative: inst.fraction(covered.count() - base),
            travel_cost: state.travel_cost(),
        });
        if snapshot_steps.contains(&t) {
            snapshots.push((t, belief.render()));
        }
    }
    let path = state.visited().to_vec();
    Ok(EpisodeTrace {
        policy: policy.kind(),
        audit: audit_path(nodes, &path, budget),
        travel_cost: state.travel_cost(),
        path,
        steps,
        termination,
        snapshots,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSource {
    Oracle,
    Learner,
}

#[derive(Debug, Clone)]
pub struct RollIn {
    pub state: PathState,
    pub belief: Belief,
    pub sources: Vec<ActionSource>,
}

/// Executes `steps` actions of the mixture policy: at each step the oracle acts with
/// probability `beta`, the learner otherwise (the oracle stands in when there is no
/// learner yet). `Ok(None)` when the feasible set empties first.
pub fn roll_in(
    inst: &Instance,
    learner: Option<&LearnedPolicy>,
    beta: f64,
    steps: usize,
    budget: &Budget,
    rng: &mut impl Rng,
) -> Result<Option<RollIn>> {
    let nodes = inst.nodes();
    let mut state = PathState::start(nodes);
    let mut belief = initial_belief(inst);
    let mut sources = Vec::with_capacity(steps);
    for _ in 0..steps {
        let use_oracle = rng.gen::<f64>() < beta || learner.is_none();
        let action = match learner {
            Some(l) if !use_oracle => {
                sources.push(ActionSource::Learner);
                l.select_action(inst, &belief, &state, budget)?
            }
            _ => {
                sources.push(ActionSource::Oracle);
                oracle_action(inst, &state, budget)
            }
        };
        let Some(a) = action else {
            return Ok(None);
        };
        let prev = state.last();
        state.push(a, nodes);
        belief.update(prev, a, Arc::clone(inst.measurement(a)));
    }
    Ok(Some(RollIn {
        state,
        belief,
        sources,
    }))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub beta: f64,
    pub new_datapoints: usize,
    pub aggregate_size: usize,
    pub resamples: usize,
    pub oracle_actions: usize,
    pub learner_actions: usize,
    pub violations: usize,
    pub mean_q: f64,
    pub validation_value: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub policy: LearnedPolicy,
    pub best_iteration: usize,
    pub metrics: Vec<IterationMetrics>,
    pub dataset: Vec<QDatapoint>,
    /// The learner after each iteration, in order.
    pub iterates: Vec<LearnedPolicy>,
    /// Paths that failed the constraint audit, with a description.
    pub violations: Vec<String>,
}

struct Collected {
    points: Vec<QDatapoint>,
    resamples: usize,
    sources: Vec<ActionSource>,
    violations: Vec<String>,
}

fn collect_datapoint(
    train: &[Instance],
    learner: Option<&LearnedPolicy>,
    beta: f64,
    config: &TrainConfig,
    iteration: usize,
    j: usize,
) -> Result<Collected> {
    let budget = &config.budget;
    let mut rng = seed::stream(config.seed, &[ROLLIN_STREAM, iteration as u64, j as u64]);
    let mut resamples = 0;
    loop {
        if resamples > config.max_resamples {
            return Err(Error::Training(format!(
                "datapoint {j} of iteration {iteration}: no feasible state after {resamples} resamples"
            )));
        }
        let inst = &train[rng.gen_range(0..train.len())];
        let t = rng.gen_range(1..=budget.horizon);
        let Some(r) = roll_in(inst, learner, beta, t - 1, budget, &mut rng)? else {
            resamples += 1;
            continue;
        };
        let feasible = inst.feasible_actions(&r.state, budget);
        if feasible.is_empty() {
            resamples += 1;
            continue;
        }
        let actions = if config.all_actions {
            feasible
        } else {
            vec![feasible[rng.gen_range(0..feasible.len())]]
        };
        let ctx = FeatureContext::new(&r.belief, inst.nodes(), inst.sensor(), budget);
        let covered = inst.covered_by(r.state.visited());
        let before = covered.count();
        let mut points = Vec::with_capacity(actions.len());
        let mut violations = Vec::new();
        for a in actions {
            let mut cov = covered.clone();
            cov.insert(inst.measurement(a));
            let (end, after) = oracle_rollout(inst, r.state.with(a, inst.nodes()), cov, budget);
            if let Err(e) = audit_path(inst.nodes(), end.visited(), budget) {
                violations.push(format!("iteration {iteration} datapoint {j}: {e}"));
            }
            let q = inst.fraction(after.count() - before);
            let features = ctx.extract(&r.state, a)?;
            points.push(QDatapoint::new(features, q, t).map_err(|e| {
                Error::Oracle(format!("iteration {iteration} datapoint {j}: {e}"))
            })?);
        }
        if let Err(e) = audit_path(inst.nodes(), r.state.visited(), budget) {
            violations.push(format!("iteration {iteration} datapoint {j} roll-in: {e}"));
        }
        return Ok(Collected {
            points,
            resamples,
            sources: r.sources,
            violations,
        });
    }
}

/// Mean final cumulative reward of `policy` with one episode per instance.
pub fn validation_value(policy: &LearnedPolicy, instances: &[Instance], budget: &Budget, seed: u64) -> Result<f64> {
    let finals = par::map_indexed(instances.len(), |k| {
        run_episode(
            Policy::Learned(policy),
            &instances[k],
            budget,
            seed::derive_seed(seed, &[VALIDATION_STREAM, k as u64]),
            &[],
        )
        .map(|tr| tr.final_reward())
    });
    let finals: Vec<f64> = finals.into_iter().collect::<Result<_>>()?;
    Ok(finals.iter().sum::<f64>() / finals.len() as f64)
}

/// Runs the imitation loop and returns the iterate with the best validation value
/// (earliest on ties).
pub fn train(config: &TrainConfig, train: &[Instance], validation: &[Instance]) -> Result<TrainOutput> {
    config.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Config("training and validation sets must be non-empty".into()));
    }
    let mut dataset: Vec<QDatapoint> = Vec::new();
    let mut metrics = Vec::with_capacity(config.iterations);
    let mut learner: Option<LearnedPolicy> = None;
    let mut best: Option<(f64, usize, LearnedPolicy)> = None;
    let mut violations = Vec::new();
    let mut iterates = Vec::with_capacity(config.iterations);
    for i in 1..=config.iterations {
        let beta = config.schedule.beta(i);
        let collected = par::map_indexed(config.datapoints_per_iteration, |j| {
            collect_datapoint(train, learner.as_ref(), beta, config, i, j)
        });
        let mut m = IterationMetrics {
            iteration: i,
            beta,
            ..Default::default()
        };
        let mut q_sum = 0.0;
        for c in collected {
            let c = c?;
            m.resamples += c.resamples;
            m.oracle_actions += c.sources.iter().filter(|s| **s == ActionSource::Oracle).count();
            m.learner_actions += c.sources.iter().filter(|s| **s == ActionSource::Learner).count();
            m.violations += c.violations.len();
            violations.extend(c.violations);
            m.new_datapoints += c.points.len();
            q_sum += c.points.iter().map(|p| p.q).sum::<f64>();
            dataset.extend(c.points);
        }
        m.mean_q = q_sum / m.new_datapoints.max(1) as f64;
        m.aggregate_size = dataset.len();
        let forest = RegressionForest::fit(
            &dataset,
            &config.forest,
            seed::derive_seed(config.seed, &[FOREST_STREAM, i as u64]),
        )?;
        let policy = LearnedPolicy::new(forest)?;
        m.validation_value = validation_value(&policy, validation, &config.budget, config.seed)?;
        if best.as_ref().is_none_or(|(v, ..)| m.validation_value > *v) {
            best = Some((m.validation_value, i, policy.clone()));
        }
        iterates.push(policy.clone());
        learner = Some(policy);
        metrics.push(m);
    }
    let (_, best_iteration, policy) = best.expect("at least one iteration");
    Ok(TrainOutput {
        policy,
        best_iteration,
        metrics,
        dataset,
        iterates,
        violations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub step: usize,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Mean cumulative reward per step with a normal-approximation 95% interval.
pub fn summarize(traces: &[EpisodeTrace], horizon: usize) -> Vec<SummaryRow> {
    if traces.is_empty() {
        return Vec::new();
    }
    (1..=horizon)
        .map(|step| {
            let xs: Vec<f64> = traces.iter().map(|tr| tr.cumulative_at(step)).collect();
            let (mean, half) = mean_ci(&xs);
            SummaryRow {
                step,
                mean,
                ci_lo: mean - half,
                ci_hi: mean + half,
            }
        })
        .collect()
}

/// Sample mean and 1.96 standard errors (zero spread for a single sample).
pub fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub traces: Vec<EpisodeTrace>,
    pub summary: Vec<SummaryRow>,
}

/// Runs `episodes` episodes; episode `k` uses instance `k mod len` and its own seed.
pub fn evaluate(
    policy: Policy<'_>,
    instances: &[Instance],
    budget: &Budget,
    episodes: usize,
    seed: u64,
    snapshot_steps: &[usize],
) -> Result<Evaluation> {
    if instances.is_empty() && episodes > 0 {
        return Err(Error::Config("evaluation needs at least one instance".into()));
    }
    let traces = par::map_indexed(episodes, |k| {
        run_episode(
            policy,
            &instances[k % instances.len()],
            budget,
            seed::derive_seed(seed, &[EPISODE_STREAM, k as u64]),
            snapshot_steps,
        )
    });
    let traces: Vec<EpisodeTrace> = traces.into_iter().collect::<Result<_>>()?;
    let summary = summarize(&traces, budget.horizon);
    Ok(Evaluation { traces, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        let g = BetaSchedule::default();
        assert_eq!(g.beta(1), 1.0);
        assert!((g.beta(3) - 0.81).abs() < 1e-12);
        assert_eq!(BetaSchedule::Indicator.beta(1), 1.0);
        assert_eq!(BetaSchedule::Indicator.beta(2), 0.0);
        assert!(BetaSchedule::Geometric(1.5).validate().is_err());
    }

    #[test]
    fn ci_of_constant_and_single() {
        assert_eq!(mean_ci(&[0.3, 0.3, 0.3]), (0.3, 0.0));
        assert_eq!(mean_ci(&[0.5]), (0.5, 0.0));
        let (m, h) = mean_ci(&[0.0, 1.0]);
        assert_eq!(m, 0.5);
        assert!((h - 1.96 * (0.5f64 / 2.0).sqrt()).abs() < 1e-12);
    }
}

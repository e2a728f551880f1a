//! Lifelong-learning harness: a stream of grid tasks with random switches,
//! served by a small library of tabular Q-learning policies under one of
//! three reuse strategies.
//!
//! * `Cpr`: a fixed task-to-policy map computed up front by clustering the
//!   task distance matrix.
//! * `Lpr`: one epsilon-greedy bandit per task choosing among `k` policies,
//!   rewarded with the episode return.
//! * `Single`: every task shares one policy.
//!
//! Only the policy selected for an episode is trained on it.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chirp::DistanceMatrix;
use crate::clustering::k_medoids;
use crate::gridworld::{Action, Cell, GridMdp, GridOptions, VariantSpec};
use crate::{Error, Result};

pub const DEFAULT_LEARNING_RATE: f64 = 0.1;
pub const DEFAULT_EPSILON_DECAY: f64 = 0.999;
pub const DEFAULT_EPSILON_FLOOR: f64 = 0.05;
pub const DEFAULT_BANDIT_EPSILON: f64 = 0.1;
/// Two-sided 95% normal quantile.
const WILSON_Z: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub tasks: Vec<GridMdp>,
    /// Chance of switching to a different task after each episode.
    pub change_prob: f64,
    pub total_episodes: usize,
    pub horizon: usize,
    pub eval_window: usize,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.tasks.len() < 2 {
            return Err(Error::Config("a scenario needs at least two tasks".into()));
        }
        if !(0.0..=1.0).contains(&self.change_prob) {
            return Err(Error::Config(format!("change probability {} outside [0, 1]", self.change_prob)));
        }
        if self.total_episodes == 0 || self.horizon == 0 || self.eval_window == 0 {
            return Err(Error::Config("episodes, horizon and evaluation window must be positive".into()));
        }
        if self.eval_window > self.total_episodes {
            return Err(Error::Config("evaluation window exceeds the episode count".into()));
        }
        if self.tasks.iter().any(|t| t.grid_size != self.tasks[0].grid_size) {
            return Err(Error::Config("all tasks must share one grid size".into()));
        }
        Ok(())
    }
}

/// On-disk form of a [`Scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub tasks: Vec<VariantSpec>,
    pub change_prob: f64,
    pub total_episodes: usize,
    pub horizon: usize,
    pub eval_window: usize,
    #[serde(default)]
    pub grid: GridOptions,
}

impl ScenarioSpec {
    pub fn build(&self) -> Result<Scenario> {
        let scenario = Scenario {
            tasks: self.tasks.iter().map(|t| t.build(&self.grid)).collect::<Result<_>>()?,
            change_prob: self.change_prob,
            total_episodes: self.total_episodes,
            horizon: self.horizon,
            eval_window: self.eval_window,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Tabular epsilon-greedy Q-learner over the cells of one grid size.
#[derive(Debug, Clone, PartialEq)]
pub struct QPolicy {
    grid_size: i32,
    q: Vec<[f64; 4]>,
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
}

impl QPolicy {
    pub fn new(grid_size: i32, discount: f64) -> Self {
        let inner = (grid_size - 2).max(0) as usize;
        QPolicy {
            grid_size,
            q: vec![[0.0; 4]; inner * inner],
            learning_rate: DEFAULT_LEARNING_RATE,
            discount,
            epsilon: 1.0,
            epsilon_decay: DEFAULT_EPSILON_DECAY,
            epsilon_floor: DEFAULT_EPSILON_FLOOR,
        }
    }

    fn index(&self, c: Cell) -> usize {
        ((c.y - 1) * (self.grid_size - 2) + (c.x - 1)) as usize
    }

    pub fn q_values(&self, c: Cell) -> [f64; 4] {
        self.q[self.index(c)]
    }

    pub fn set_q_values(&mut self, c: Cell, values: [f64; 4]) {
        let i = self.index(c);
        self.q[i] = values;
    }

    pub fn table(&self) -> &[[f64; 4]] {
        &self.q
    }

    fn max_q(&self, c: Cell) -> f64 {
        self.q_values(c).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Epsilon-greedy action; greedy ties are broken uniformly at random.
    pub fn act<R: Rng + ?Sized>(&self, c: Cell, rng: &mut R) -> Action {
        if self.epsilon > 0.0 && rng.gen::<f64>() < self.epsilon {
            return Action::ALL[rng.gen_range(0..Action::COUNT)];
        }
        let q = self.q_values(c);
        let best = self.max_q(c);
        let ties: Vec<usize> = (0..Action::COUNT).filter(|&a| q[a] == best).collect();
        let pick = if ties.len() == 1 { ties[0] } else { ties[rng.gen_range(0..ties.len())] };
        Action::ALL[pick]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    /// Discounted return from the start cell.
    pub ret: f64,
    pub steps: usize,
}

/// One epsilon-greedy rollout from `mdp.start`, updating `policy` after every
/// step; the exploration rate decays once at the end.
pub fn q_learning_episode<R: Rng + ?Sized>(
    policy: &mut QPolicy,
    mdp: &GridMdp,
    horizon: usize,
    rng: &mut R,
) -> Result<EpisodeOutcome> {
    if policy.grid_size != mdp.grid_size {
        return Err(Error::Calculability(format!(
            "policy for grid {} cannot act in grid {}",
            policy.grid_size, mdp.grid_size
        )));
    }
    let mut state = mdp.start;
    let mut ret = 0.0;
    let mut weight = 1.0;
    let mut steps = 0;
    let mut success = false;
    while steps < horizon {
        let action = policy.act(state, rng);
        let t = mdp.step_with(state, action, rng);
        let target = if t.terminal { t.reward } else { t.reward + policy.discount * policy.max_q(t.next_state) };
        let i = policy.index(state);
        let a = action.index();
        policy.q[i][a] += policy.learning_rate * (target - policy.q[i][a]);
        ret += weight * t.reward;
        weight *= policy.discount;
        steps += 1;
        state = t.next_state;
        if t.terminal {
            success = true;
            break;
        }
    }
    policy.epsilon = (policy.epsilon * policy.epsilon_decay).max(policy.epsilon_floor);
    Ok(EpisodeOutcome { success, ret, steps })
}

/// Per-task epsilon-greedy bandits over `k` arms with incremental-mean values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LprBandit {
    pub epsilon: f64,
    pub values: Vec<Vec<f64>>,
    pub counts: Vec<Vec<u64>>,
}

impl LprBandit {
    pub fn new(n_tasks: usize, k: usize, epsilon: f64) -> Self {
        LprBandit { epsilon, values: vec![vec![0.0; k]; n_tasks], counts: vec![vec![0; k]; n_tasks] }
    }

    /// Starts from given arm values, each counted as one prior observation.
    pub fn warm_started(values: Vec<Vec<f64>>, epsilon: f64) -> Result<Self> {
        let k = values.first().map_or(0, Vec::len);
        if k == 0 || values.iter().any(|v| v.len() != k || v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Config("warm start needs one finite value per task and arm".into()));
        }
        let counts = values.iter().map(|v| vec![1; v.len()]).collect();
        Ok(LprBandit { epsilon, values, counts })
    }

    pub fn arms(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Uniform arm with probability epsilon, else the best arm (lowest index on ties).
    pub fn select<R: Rng + ?Sized>(&self, task: usize, rng: &mut R) -> usize {
        let k = self.arms();
        if k > 1 && self.epsilon > 0.0 && rng.gen::<f64>() < self.epsilon {
            return rng.gen_range(0..k);
        }
        let v = &self.values[task];
        (1..k).fold(0, |best, a| if v[a] > v[best] { a } else { best })
    }

    pub fn update(&mut self, task: usize, arm: usize, reward: f64) {
        self.counts[task][arm] += 1;
        let n = self.counts[task][arm] as f64;
        self.values[task][arm] += (reward - self.values[task][arm]) / n;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReuseStrategy {
    Cpr { task_to_policy: Vec<usize> },
    Lpr { k: usize, epsilon: f64, warm_start: Option<Vec<Vec<f64>>> },
    Single,
}

impl ReuseStrategy {
    pub fn lpr(k: usize) -> Self {
        ReuseStrategy::Lpr { k, epsilon: DEFAULT_BANDIT_EPSILON, warm_start: None }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ReuseStrategy::Cpr { .. } => "cpr",
            ReuseStrategy::Lpr { .. } => "lpr",
            ReuseStrategy::Single => "single",
        }
    }

    pub fn policy_count(&self) -> usize {
        match self {
            ReuseStrategy::Cpr { task_to_policy } => task_to_policy.iter().max().map_or(0, |m| m + 1),
            ReuseStrategy::Lpr { k, .. } => *k,
            ReuseStrategy::Single => 1,
        }
    }

    pub fn validate(&self, n_tasks: usize) -> Result<()> {
        match self {
            ReuseStrategy::Cpr { task_to_policy } if task_to_policy.len() != n_tasks => Err(Error::Config(format!(
                "policy map covers {} tasks, scenario has {n_tasks}",
                task_to_policy.len()
            ))),
            ReuseStrategy::Lpr { k, epsilon, warm_start } => {
                if *k == 0 || *k > n_tasks {
                    return Err(Error::Config(format!("k = {k} must be in 1..={n_tasks}")));
                }
                if !(0.0..=1.0).contains(epsilon) {
                    return Err(Error::Config(format!("bandit epsilon {epsilon} outside [0, 1]")));
                }
                if let Some(w) = warm_start {
                    if w.len() != n_tasks || w.iter().any(|v| v.len() != *k) {
                        return Err(Error::Config("warm start must be tasks x k".into()));
                    }
                }
                Ok(())
            }
            ReuseStrategy::Cpr { task_to_policy } if self.policy_count() > n_tasks => Err(Error::Config(format!(
                "{} policies for {} tasks",
                task_to_policy.iter().max().map_or(0, |m| m + 1),
                n_tasks
            ))),
            _ => Ok(()),
        }
    }
}

/// CPR's fixed map: task index to its k-medoids cluster id.
pub fn cpr_policy_map(d: &DistanceMatrix, k: usize, seed: u64) -> Result<Vec<usize>> {
    Ok(k_medoids(d, k, seed)?.cluster_ids())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub task_id: usize,
    pub policy_id: usize,
    pub success: bool,
    #[serde(rename = "return")]
    pub ret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub strategy: &'static str,
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
}

/// Simulates the scenario episode by episode. The first task is uniform;
/// after each episode the task switches to a uniformly chosen different task
/// with probability `change_prob`.
pub fn run_scenario(s: &Scenario, strategy: &ReuseStrategy, seed: u64) -> Result<RunLog> {
    s.validate()?;
    strategy.validate(s.tasks.len())?;
    let n = s.tasks.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let discount = s.tasks[0].discount;
    let mut policies = vec![QPolicy::new(s.tasks[0].grid_size, discount); strategy.policy_count()];
    let mut bandit = match strategy {
        ReuseStrategy::Lpr { k, epsilon, warm_start: None } => Some(LprBandit::new(n, *k, *epsilon)),
        ReuseStrategy::Lpr { epsilon, warm_start: Some(w), .. } => Some(LprBandit::warm_started(w.clone(), *epsilon)?),
        _ => None,
    };
    let mut task = rng.gen_range(0..n);
    let mut records = Vec::with_capacity(s.total_episodes);
    for episode in 0..s.total_episodes {
        let mdp = &s.tasks[task];
        let (policy_id, outcome) = match (strategy, bandit.as_mut()) {
            (ReuseStrategy::Lpr { .. }, Some(b)) => {
                let arm = b.select(task, &mut rng);
                let o = q_learning_episode(&mut policies[arm], mdp, s.horizon, &mut rng)?;
                b.update(task, arm, o.ret);
                (arm, o)
            }
            (ReuseStrategy::Cpr { task_to_policy }, _) => {
                let p = task_to_policy[task];
                (p, q_learning_episode(&mut policies[p], mdp, s.horizon, &mut rng)?)
            }
            _ => (0, q_learning_episode(&mut policies[0], mdp, s.horizon, &mut rng)?),
        };
        records.push(EpisodeRecord { episode, task_id: task, policy_id, success: outcome.success, ret: outcome.ret });
        if rng.gen::<f64>() < s.change_prob {
            let other = rng.gen_range(0..n - 1);
            task = if other >= task { other + 1 } else { other };
        }
    }
    Ok(RunLog { strategy: strategy.kind(), seed, records })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessRate {
    pub successes: usize,
    pub trials: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// 95% Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: usize, trials: usize) -> Result<SuccessRate> {
    if trials == 0 {
        return Err(Error::InsufficientSamples("no trials".into()));
    }
    if successes > trials {
        return Err(Error::Validation(format!("{successes} successes in {trials} trials")));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Ok(SuccessRate {
        successes,
        trials,
        rate: p,
        ci_low: (centre - half).clamp(0.0, p),
        ci_high: (centre + half).clamp(p, 1.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub window: usize,
    pub overall: SuccessRate,
    pub per_task: BTreeMap<usize, SuccessRate>,
}

/// Success rates over the final `window` episodes, overall and per task.
pub fn evaluate_success(records: &[EpisodeRecord], window: usize) -> Result<SuccessReport> {
    if window == 0 || records.is_empty() {
        return Err(Error::InsufficientSamples("empty evaluation window".into()));
    }
    if window > records.len() {
        return Err(Error::Config(format!("window {window} exceeds {} episodes", records.len())));
    }
    let tail = &records[records.len() - window..];
    let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in tail {
        let e = counts.entry(r.task_id).or_default();
        e.0 += usize::from(r.success);
        e.1 += 1;
    }
    let per_task = counts
        .into_iter()
        .map(|(t, (s, n))| Ok((t, wilson_interval(s, n)?)))
        .collect::<Result<_>>()?;
    let successes = tail.iter().filter(|r| r.success).count();
    Ok(SuccessReport { window, overall: wilson_interval(successes, window)?, per_task })
}

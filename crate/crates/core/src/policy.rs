//! Optimal and pessimal tabular policies, and exact expected returns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gridworld::{Action, Cell, GridMdp};
use crate::{Error, Result};

/// Q-values within this distance of the best count as optimal.
pub const TIE_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_VI_TOLERANCE: f64 = 1e-10;
pub const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyRole {
    MaxOptimal,
    MinOptimal,
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMethod {
    ExactDp,
    MonteCarlo,
}

/// Action distribution for every passable cell, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    grid_size: i32,
    probs: Vec<[f64; 4]>,
    pub role: PolicyRole,
}

impl TabularPolicy {
    /// Builds a policy from one probability vector per passable cell.
    pub fn new(grid_size: i32, probs: Vec<[f64; 4]>, role: PolicyRole) -> Result<Self> {
        let n = ((grid_size - 2) * (grid_size - 2)).max(0) as usize;
        if probs.len() != n {
            return Err(Error::Calculability(format!(
                "policy covers {} states, grid of size {grid_size} has {n}",
                probs.len()
            )));
        }
        for (i, p) in probs.iter().enumerate() {
            let sum: f64 = p.iter().sum();
            if p.iter().any(|&x| !(0.0..=1.0 + 1e-12).contains(&x)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!("state {i}: action probabilities {p:?} do not form a distribution")));
            }
        }
        Ok(TabularPolicy { grid_size, probs, role })
    }

    pub fn uniform(grid_size: i32) -> Self {
        let n = ((grid_size - 2) * (grid_size - 2)) as usize;
        TabularPolicy { grid_size, probs: vec![[0.25; 4]; n], role: PolicyRole::Learned }
    }

    pub fn grid_size(&self) -> i32 {
        self.grid_size
    }

    pub fn probs(&self) -> &[[f64; 4]] {
        &self.probs
    }

    pub fn action_probs(&self, cell: Cell) -> [f64; 4] {
        let n = self.grid_size - 2;
        self.probs[((cell.y - 1) * n + (cell.x - 1)) as usize]
    }

    /// Actions with positive probability at `cell`.
    pub fn support(&self, cell: Cell) -> Vec<Action> {
        let p = self.action_probs(cell);
        Action::ALL.into_iter().filter(|a| p[a.index()] > 0.0).collect()
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, cell: Cell, rng: &mut R) -> Action {
        let p = self.action_probs(cell);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for a in Action::ALL {
            acc += p[a.index()];
            if u < acc {
                return a;
            }
        }
        // rounding left a sliver; fall back to the last supported action
        *self.support(cell).last().expect("distribution has support")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnEstimate {
    pub value: f64,
    pub mdp_id: String,
    pub policy_role: PolicyRole,
    pub method: EvalMethod,
}

/// Converged state and action values of an MDP.
#[derive(Debug, Clone)]
pub struct ValueTable {
    pub values: Vec<f64>,
    pub q: Vec<[f64; 4]>,
    pub sweeps: usize,
}

/// Flattened transition model: for each cell and action the reachable cells
/// with their probabilities, and the reward of landing in each cell.
pub(crate) struct Model {
    pub goal: usize,
    pub rewards: Vec<f64>,
    pub outcomes: Vec<[Vec<(usize, f64)>; 4]>,
}

impl Model {
    pub fn new(mdp: &GridMdp) -> Model {
        let rewards = mdp.cells().map(|c| mdp.reward(c)).collect();
        let outcomes = mdp
            .cells()
            .map(|c| {
                Action::ALL.map(|a| {
                    mdp.outcomes(c, a)
                        .into_iter()
                        .map(|(next, p)| (mdp.cell_index(next), p))
                        .collect()
                })
            })
            .collect();
        Model { goal: mdp.cell_index(mdp.goal), rewards, outcomes }
    }

    /// One-step lookahead; landing on the goal ends the episode.
    fn backup(&self, s: usize, a: usize, values: &[f64], discount: f64) -> f64 {
        self.outcomes[s][a]
            .iter()
            .map(|&(next, p)| {
                let future = if next == self.goal { 0.0 } else { values[next] };
                p * (self.rewards[next] + discount * future)
            })
            .sum()
    }
}

fn pick(role: PolicyRole, a: f64, b: f64) -> f64 {
    match role {
        PolicyRole::MinOptimal => a.min(b),
        _ => a.max(b),
    }
}

/// Iterates the Bellman optimality operator (or its minimizing counterpart)
/// to a sup-norm fixed point. The goal's value is pinned at zero.
pub fn value_iteration(mdp: &GridMdp, role: PolicyRole, tol: f64) -> Result<ValueTable> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("value iteration tolerance must be positive, got {tol}")));
    }
    if role == PolicyRole::Learned {
        return Err(Error::Config("value iteration needs MaxOptimal or MinOptimal".into()));
    }
    let model = Model::new(mdp);
    let n = mdp.n_cells();
    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    for sweep in 1..=MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        for s in 0..n {
            if s == model.goal {
                next[s] = 0.0;
                continue;
            }
            let init = if role == PolicyRole::MinOptimal { f64::INFINITY } else { f64::NEG_INFINITY };
            let v = (0..4).fold(init, |acc, a| pick(role, acc, model.backup(s, a, &values, mdp.discount)));
            delta = delta.max((v - values[s]).abs());
            next[s] = v;
        }
        std::mem::swap(&mut values, &mut next);
        if !delta.is_finite() {
            break;
        }
        if delta < tol {
            let q = (0..n)
                .map(|s| {
                    if s == model.goal {
                        [0.0; 4]
                    } else {
                        [0, 1, 2, 3].map(|a| model.backup(s, a, &values, mdp.discount))
                    }
                })
                .collect();
            return Ok(ValueTable { values, q, sweeps: sweep });
        }
    }
    Err(Error::Numerical(format!(
        "value iteration for {} ({role:?}) did not converge within {MAX_SWEEPS} sweeps",
        mdp.id()
    )))
}

/// Policy spreading probability uniformly over the greedy action set of `q`.
pub fn greedy_policy(mdp: &GridMdp, q: &[[f64; 4]], role: PolicyRole) -> TabularPolicy {
    let probs = q
        .iter()
        .map(|row| {
            let best = row.iter().copied().fold(
                if role == PolicyRole::MinOptimal { f64::INFINITY } else { f64::NEG_INFINITY },
                |acc, v| pick(role, acc, v),
            );
            let mask = row.map(|v| (v - best).abs() <= TIE_TOLERANCE);
            let count = mask.iter().filter(|&&m| m).count() as f64;
            mask.map(|m| if m { 1.0 / count } else { 0.0 })
        })
        .collect();
    TabularPolicy { grid_size: mdp.grid_size, probs, role }
}

/// Optimal returns-maximising (`MaxOptimal`) or returns-minimising
/// (`MinOptimal`) policy, uniform over tied actions.
pub fn optimal_policy(mdp: &GridMdp, role: PolicyRole) -> Result<TabularPolicy> {
    let table = value_iteration(mdp, role, DEFAULT_VI_TOLERANCE)?;
    Ok(greedy_policy(mdp, &table.q, role))
}

/// Horizon-truncated expected return of `policy` from every cell of `mdp`,
/// by backward induction.
pub fn state_values(policy: &TabularPolicy, mdp: &GridMdp) -> Result<Vec<f64>> {
    if policy.grid_size != mdp.grid_size {
        return Err(Error::Calculability(format!(
            "policy defined on a {0}x{0} grid cannot run on a {1}x{1} grid",
            policy.grid_size, mdp.grid_size
        )));
    }
    let model = Model::new(mdp);
    let n = mdp.n_cells();
    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..mdp.horizon {
        for s in 0..n {
            next[s] = if s == model.goal {
                0.0
            } else {
                let p = &policy.probs[s];
                (0..4)
                    .filter(|&a| p[a] > 0.0)
                    .map(|a| p[a] * model.backup(s, a, &values, mdp.discount))
                    .sum()
            };
        }
        std::mem::swap(&mut values, &mut next);
    }
    Ok(values)
}

/// Exact expected return of `policy` on `mdp` from `start`.
pub fn policy_evaluation(policy: &TabularPolicy, mdp: &GridMdp, start: Cell) -> Result<ReturnEstimate> {
    evaluate_from(policy, mdp, &[(start, 1.0)])
}

/// Exact expected return over an initial-state distribution.
pub fn evaluate_from(policy: &TabularPolicy, mdp: &GridMdp, initial: &[(Cell, f64)]) -> Result<ReturnEstimate> {
    let total: f64 = initial.iter().map(|(_, p)| p).sum();
    if initial.is_empty() || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Validation("initial-state weights must sum to 1".into()));
    }
    if let Some((c, _)) = initial.iter().find(|(c, _)| !mdp.is_passable(*c)) {
        return Err(Error::Domain(format!("initial state {c} is not passable")));
    }
    let values = state_values(policy, mdp)?;
    let value = initial.iter().map(|&(c, p)| p * values[mdp.cell_index(c)]).sum();
    Ok(ReturnEstimate { value, mdp_id: mdp.id(), policy_role: policy.role, method: EvalMethod::ExactDp })
}

/// Analytic bracket `[lo, 0]` on any horizon-truncated return of `mdp`.
pub fn return_bounds(mdp: &GridMdp) -> (f64, f64) {
    let geometric: f64 = (0..mdp.horizon).map(|k| mdp.discount.powi(k as i32)).sum();
    (mdp.min_reward() * geometric, 0.0)
}

/// Simulated mean return over `episodes` rollouts.
pub fn monte_carlo_return(
    policy: &TabularPolicy,
    mdp: &GridMdp,
    start: Cell,
    episodes: usize,
    seed: u64,
) -> Result<ReturnEstimate> {
    mdp.reset_to(start)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut state = start;
        let mut ret = 0.0;
        let mut scale = 1.0;
        if state != mdp.goal {
            for _ in 0..mdp.horizon {
                let a = policy.sample_action(state, &mut rng);
                let t = mdp.step_with(state, a, &mut rng);
                ret += scale * t.reward;
                scale *= mdp.discount;
                state = t.next_state;
                if t.terminal {
                    break;
                }
            }
        }
        total += ret;
    }
    Ok(ReturnEstimate {
        value: total / episodes.max(1) as f64,
        mdp_id: mdp.id(),
        policy_role: policy.role,
        method: EvalMethod::MonteCarlo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{make_variant, GridOptions};

    fn random_policy(rng: &mut ChaCha8Rng, grid_size: i32) -> TabularPolicy {
        let n = ((grid_size - 2) * (grid_size - 2)) as usize;
        let probs = (0..n)
            .map(|_| {
                let w: [f64; 4] = std::array::from_fn(|_| rng.gen::<f64>());
                let s: f64 = w.iter().sum();
                w.map(|x| x / s)
            })
            .collect();
        TabularPolicy::new(grid_size, probs, PolicyRole::Learned).unwrap()
    }

    #[test]
    fn max_policy_is_greedy_toward_goal() {
        for (goal, start) in [((10, 10), (1, 1)), ((1, 18), (5, 5)), ((17, 2), (3, 16))] {
            let m = make_variant(Cell::new(goal.0, goal.1), Cell::new(start.0, start.1), 0.0).unwrap();
            let pi = optimal_policy(&m, PolicyRole::MaxOptimal).unwrap();
            for c in m.cells().filter(|&c| c != m.goal) {
                let d = c.manhattan(m.goal);
                let closer: Vec<Action> =
                    Action::ALL.into_iter().filter(|&a| m.move_from(c, a).manhattan(m.goal) < d).collect();
                assert_eq!(pi.support(c), closer, "cell {c}");
            }
        }
    }

    #[test]
    fn goal_adjacent_cell_has_single_optimal_action() {
        let m = make_variant(Cell::new(10, 10), Cell::new(1, 1), 0.0).unwrap();
        let pi = optimal_policy(&m, PolicyRole::MaxOptimal).unwrap();
        assert_eq!(pi.action_probs(Cell::new(9, 10)), [0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn min_policy_moves_away_in_open_space() {
        let m = make_variant(Cell::new(10, 10), Cell::new(1, 1), 0.0).unwrap();
        let pi = optimal_policy(&m, PolicyRole::MinOptimal).unwrap();
        for c in m.cells().filter(|c| (2..=17).contains(&c.x) && (2..=17).contains(&c.y) && *c != m.goal) {
            let d = c.manhattan(m.goal);
            let support = pi.support(c);
            assert!(!support.is_empty());
            for a in support {
                assert!(m.move_from(c, a).manhattan(m.goal) > d, "cell {c} action {a:?}");
            }
        }
    }

    #[test]
    fn three_by_three_backward_induction() {
        // 5x5 grid has a 3x3 interior; goal in the centre.
        let opts = GridOptions { grid_size: 5, ..GridOptions::default() };
        let m = GridMdp::with_options(Cell::new(2, 2), Cell::new(1, 1), 0.0, &opts).unwrap();
        let t = value_iteration(&m, PolicyRole::MaxOptimal, 1e-12).unwrap();
        assert_eq!(t.values[m.cell_index(m.goal)], 0.0);
        // goal-adjacent cells step onto the goal for reward 0 and stop.
        for c in [Cell::new(1, 2), Cell::new(3, 2), Cell::new(2, 1), Cell::new(2, 3)] {
            assert_eq!(t.values[m.cell_index(c)], 0.0);
        }
        // corners: one step to distance 1 costs -C, then 0.
        let c = m.c_scale;
        assert!((t.values[m.cell_index(Cell::new(1, 1))] + c).abs() < 1e-12);
    }

    #[test]
    fn tolerance_does_not_change_greedy_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..20 {
            let m = crate::gridworld::random_variant(&mut rng, 0.0, &GridOptions::default()).unwrap();
            let a = value_iteration(&m, PolicyRole::MaxOptimal, 1e-8).unwrap();
            let b = value_iteration(&m, PolicyRole::MaxOptimal, 2e-8).unwrap();
            assert_eq!(
                greedy_policy(&m, &a.q, PolicyRole::MaxOptimal),
                greedy_policy(&m, &b.q, PolicyRole::MaxOptimal)
            );
        }
    }

    #[test]
    fn optimal_returns_bracket_random_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for slip in [0.0, 0.2] {
            let m = make_variant(Cell::new(4, 13), Cell::new(15, 2), slip).unwrap();
            let hi = policy_evaluation(&optimal_policy(&m, PolicyRole::MaxOptimal).unwrap(), &m, m.start).unwrap();
            let lo = policy_evaluation(&optimal_policy(&m, PolicyRole::MinOptimal).unwrap(), &m, m.start).unwrap();
            let (lb, ub) = return_bounds(&m);
            assert!(lb <= lo.value && hi.value <= ub);
            for _ in 0..100 {
                let v = policy_evaluation(&random_policy(&mut rng, 20), &m, m.start).unwrap().value;
                assert!(lo.value - 1e-9 <= v && v <= hi.value + 1e-9);
            }
        }
    }

    #[test]
    fn start_on_goal_is_worth_zero() {
        let m = make_variant(Cell::new(4, 13), Cell::new(15, 2), 0.0).unwrap();
        let pi = TabularPolicy::uniform(20);
        assert_eq!(policy_evaluation(&pi, &m, m.goal).unwrap().value, 0.0);
    }

    #[test]
    fn cross_mdp_evaluation_never_beats_native_optimum() {
        let mi = make_variant(Cell::new(1, 1), Cell::new(9, 9), 0.0).unwrap();
        let mj = make_variant(Cell::new(18, 18), Cell::new(9, 9), 0.0).unwrap();
        let foreign = optimal_policy(&mi, PolicyRole::MaxOptimal).unwrap();
        let native = optimal_policy(&mj, PolicyRole::MaxOptimal).unwrap();
        let a = policy_evaluation(&foreign, &mj, mj.start).unwrap().value;
        let b = policy_evaluation(&native, &mj, mj.start).unwrap().value;
        assert!(a <= b);
    }

    #[test]
    fn evaluation_is_bit_identical_across_calls() {
        let m = make_variant(Cell::new(4, 13), Cell::new(15, 2), 0.1).unwrap();
        let pi = optimal_policy(&m, PolicyRole::MaxOptimal).unwrap();
        let a = policy_evaluation(&pi, &m, m.start).unwrap();
        let b = policy_evaluation(&pi, &m, m.start).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn monte_carlo_agrees_with_dynamic_programming() {
        let m = make_variant(Cell::new(6, 7), Cell::new(12, 14), 0.3).unwrap();
        let pi = optimal_policy(&m, PolicyRole::MaxOptimal).unwrap();
        let exact = policy_evaluation(&pi, &m, m.start).unwrap().value;
        let mc = monte_carlo_return(&pi, &m, m.start, 20_000, 1).unwrap().value;
        assert!((exact - mc).abs() < 0.02 * exact.abs().max(1.0), "{exact} vs {mc}");
    }

    #[test]
    fn grid_size_mismatch_is_not_calculable() {
        let m = make_variant(Cell::new(4, 13), Cell::new(15, 2), 0.0).unwrap();
        let pi = TabularPolicy::uniform(10);
        assert!(matches!(policy_evaluation(&pi, &m, m.start), Err(Error::Calculability(_))));
    }

    #[test]
    fn rejects_non_distributions() {
        assert!(TabularPolicy::new(3, vec![[0.5, 0.5, 0.5, 0.0]], PolicyRole::Learned).is_err());
        assert!(TabularPolicy::new(3, vec![[0.25; 4], [0.25; 4]], PolicyRole::Learned).is_err());
        assert!(TabularPolicy::new(3, vec![[0.25; 4]], PolicyRole::Learned).is_ok());
    }
}

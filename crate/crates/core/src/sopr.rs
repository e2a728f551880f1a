//! Scaled optimal policy regret.
//!
//! `SOPR(i, j)` is the regret of running `M_i`'s optimal policy in `M_j`,
//! normalized by the spread between `M_j`'s best and worst policies:
//!
//! ```text
//! (E[G | M_j, pi+_j] - E[G | M_j, pi+_i]) / (E[G | M_j, pi+_j] - E[G | M_j, pi-_j])
//! ```
//!
//! The set of optimal policies of `M_i` is represented by the single policy
//! uniform over tied greedy actions.

use serde::{Deserialize, Serialize};

use crate::gridworld::{Cell, GridMdp};
use crate::policy::{evaluate_from, optimal_policy, PolicyRole, TabularPolicy};
use crate::{Error, Result};

/// Denominators at or below this are treated as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoprResult {
    pub value: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub source_mdp: String,
    pub target_mdp: String,
    /// `E[G | M_j, pi+_j]`
    pub target_optimal: f64,
    /// `E[G | M_j, pi+_i]`
    pub transferred: f64,
    /// `E[G | M_j, pi-_j]`
    pub target_pessimal: f64,
}

/// Whether `M_i`'s policies are executable in every state of `M_j`:
/// the action sets and state sets must nest.
pub fn calculability_check(m_i: &GridMdp, m_j: &GridMdp) -> bool {
    // Every variant shares the `Action` enum, so A_i = A_j. States are the
    // passable cells and policies are indexed by the source grid, so the
    // state condition reduces to equal grid sizes.
    m_i.grid_size == m_j.grid_size
}

/// Precomputed optimal and pessimal policies of one MDP, for batch SOPR.
pub struct PolicyPair {
    pub best: TabularPolicy,
    pub worst: TabularPolicy,
}

impl PolicyPair {
    pub fn solve(mdp: &GridMdp) -> Result<Self> {
        Ok(PolicyPair {
            best: optimal_policy(mdp, PolicyRole::MaxOptimal)?,
            worst: optimal_policy(mdp, PolicyRole::MinOptimal)?,
        })
    }
}

pub fn sopr(m_i: &GridMdp, m_j: &GridMdp) -> Result<SoprResult> {
    sopr_from(m_i, m_j, &[(m_j.start, 1.0)])
}

/// SOPR with the expectation taken over an initial-state distribution of `M_j`.
pub fn sopr_from(m_i: &GridMdp, m_j: &GridMdp, initial: &[(Cell, f64)]) -> Result<SoprResult> {
    if !calculability_check(m_i, m_j) {
        return Err(Error::Calculability(format!(
            "{} optimal policies are not executable in every state of {}",
            m_i.id(),
            m_j.id()
        )));
    }
    let source = optimal_policy(m_i, PolicyRole::MaxOptimal)?;
    let target = PolicyPair::solve(m_j)?;
    sopr_with(m_i, &source, m_j, &target, initial)
}

/// SOPR given already-solved policies (`source_best` for `M_i`, `target` for `M_j`).
pub fn sopr_with(
    m_i: &GridMdp,
    source_best: &TabularPolicy,
    m_j: &GridMdp,
    target: &PolicyPair,
    initial: &[(Cell, f64)],
) -> Result<SoprResult> {
    if !calculability_check(m_i, m_j) {
        return Err(Error::Calculability(format!("{} -> {}", m_i.id(), m_j.id())));
    }
    let best = evaluate_from(&target.best, m_j, initial)?.value;
    let transferred = evaluate_from(source_best, m_j, initial)?.value;
    let worst = evaluate_from(&target.worst, m_j, initial)?.value;
    let denominator = best - worst;
    if denominator <= DEGENERACY_TOLERANCE {
        return Err(Error::Degenerate(format!(
            "{}: best and worst policies are worth the same ({best} vs {worst})",
            m_j.id()
        )));
    }
    let numerator = best - transferred;
    // Rounding can push a perfectly transferred policy a hair outside the bracket.
    let value = (numerator / denominator).clamp(0.0, 1.0);
    Ok(SoprResult {
        value,
        numerator,
        denominator,
        source_mdp: m_i.id(),
        target_mdp: m_j.id(),
        target_optimal: best,
        transferred,
        target_pessimal: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{make_variant, GridOptions};

    #[test]
    fn calculability_follows_grid_nesting() {
        let a = make_variant(Cell::new(3, 3), Cell::new(1, 1), 0.0).unwrap();
        let b = make_variant(Cell::new(13, 3), Cell::new(1, 9), 0.0).unwrap();
        let small = GridMdp::with_options(
            Cell::new(3, 3),
            Cell::new(1, 1),
            0.0,
            &GridOptions { grid_size: 10, ..GridOptions::default() },
        )
        .unwrap();
        assert!(calculability_check(&a, &b));
        assert!(calculability_check(&a, &a));
        assert!(!calculability_check(&a, &small));
        assert!(matches!(sopr(&a, &small), Err(Error::Calculability(_))));
    }

    #[test]
    fn self_regret_is_exactly_zero() {
        for slip in [0.0, 0.25] {
            let m = make_variant(Cell::new(7, 12), Cell::new(16, 2), slip).unwrap();
            let r = sopr(&m, &m).unwrap();
            assert_eq!(r.value, 0.0);
            assert_eq!(r.numerator, 0.0);
        }
    }

    #[test]
    fn opposite_corner_goals_give_high_regret() {
        let mi = make_variant(Cell::new(1, 1), Cell::new(9, 9), 0.0).unwrap();
        let mj = make_variant(Cell::new(18, 18), Cell::new(9, 9), 0.0).unwrap();
        let r = sopr(&mi, &mj).unwrap();
        assert!(r.value > 0.9, "{r:?}");
        assert!(r.denominator > 0.0);
    }

    #[test]
    fn regret_is_not_symmetric() {
        let mi = make_variant(Cell::new(3, 3), Cell::new(17, 17), 0.0).unwrap();
        let mj = make_variant(Cell::new(10, 16), Cell::new(2, 9), 0.0).unwrap();
        let a = sopr(&mi, &mj).unwrap().value;
        let b = sopr(&mj, &mi).unwrap().value;
        assert!((a - b).abs() > 1e-3, "{a} {b}");
    }
}

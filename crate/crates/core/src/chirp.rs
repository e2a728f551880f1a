//! W1-MDP distances between grid variants.
//!
//! Both MDPs execute the same state-action pairs; each transition becomes an
//! outcome vector `(x', y', goal_x, goal_y, r)` and the distance is the exact
//! W1 between the two resulting clouds. [`chirp_exact`] uses every pair once;
//! [`estimate_chirp`] uses a random or reward-shaped sample of pairs.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gridworld::{Action, Cell, GridMdp};
use crate::transport::{w1_exact, PointCloud};
use crate::{Error, Result};

pub const OUTCOME_DIM: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingScheme {
    Random,
    RewardShaped,
}

/// Cross-entropy search parameters for reward-shaped sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MceConfig {
    pub elite_fraction: f64,
    pub iterations: usize,
    pub population: usize,
}

impl Default for MceConfig {
    fn default() -> Self {
        MceConfig { elite_fraction: 0.125, iterations: 10, population: 64 }
    }
}

impl MceConfig {
    pub fn elite_count(&self) -> usize {
        (self.population as f64 * self.elite_fraction).floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub scheme: SamplingScheme,
    pub n_s: usize,
    pub n_t: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcce: Option<MceConfig>,
}

impl SamplingConfig {
    pub fn random(n_s: usize, n_t: usize, seed: u64) -> Self {
        SamplingConfig { scheme: SamplingScheme::Random, n_s, n_t, seed, mcce: None }
    }

    pub fn reward_shaped(n_s: usize, n_t: usize, seed: u64) -> Self {
        SamplingConfig { scheme: SamplingScheme::RewardShaped, n_s, n_t, seed, mcce: Some(MceConfig::default()) }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        SamplingConfig { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_s == 0 || self.n_t == 0 {
            return Err(Error::Config("n_s and n_t must be positive".into()));
        }
        match (self.scheme, &self.mcce) {
            (SamplingScheme::Random, Some(_)) => Err(Error::Config("random sampling takes no cross-entropy parameters".into())),
            (SamplingScheme::RewardShaped, None) => Err(Error::Config("reward-shaped sampling needs cross-entropy parameters".into())),
            (SamplingScheme::RewardShaped, Some(m)) => {
                if !(m.elite_fraction > 0.0 && m.elite_fraction < 1.0) {
                    return Err(Error::Config(format!("elite fraction {} outside (0, 1)", m.elite_fraction)));
                }
                if m.iterations == 0 || m.population == 0 {
                    return Err(Error::Config("cross-entropy iterations and population must be positive".into()));
                }
                if m.elite_count() < 1 {
                    return Err(Error::Config(format!(
                        "population {} with elite fraction {} leaves an empty elite set",
                        m.population, m.elite_fraction
                    )));
                }
                Ok(())
            }
            (SamplingScheme::Random, None) => Ok(()),
        }
    }
}

/// Paired outcome samples from two MDPs, in matching order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalTransitionSet {
    pub state_actions: Vec<(Cell, Action)>,
    pub n_t: usize,
    pub outcomes_i: PointCloud,
    pub outcomes_j: PointCloud,
}

/// Symmetric matrix of distances between named MDPs.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    ids: Vec<String>,
    entries: Vec<f64>,
    pub repeats: usize,
}

impl DistanceMatrix {
    /// Validates symmetry (to 1e-9), non-negativity and a zero diagonal.
    pub fn new(ids: Vec<String>, entries: Vec<f64>, repeats: usize) -> Result<Self> {
        let n = ids.len();
        if entries.len() != n * n {
            return Err(Error::Validation(format!("{} entries for {n} ids", entries.len())));
        }
        for i in 0..n {
            if entries[i * n + i] != 0.0 {
                return Err(Error::Validation(format!("diagonal entry {i} is {}", entries[i * n + i])));
            }
            for j in 0..n {
                let v = entries[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Validation(format!("entry ({i},{j}) = {v} is not a non-negative distance")));
                }
                if (v - entries[j * n + i]).abs() > 1e-9 {
                    return Err(Error::Validation(format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
            }
        }
        Ok(DistanceMatrix { ids, entries, repeats })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.entries[i * n..(i + 1) * n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// Mixes a sequence of integers into one seed (splitmix64 finalizer).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x6a09_e667_f3bc_c909;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

/// Seed for repeat `r` of the unordered pair `{i, j}`.
pub fn pair_seed(base: u64, i: usize, j: usize, r: usize) -> u64 {
    derive_seed(&[i.min(j) as u64, i.max(j) as u64, base, r as u64])
}

fn check_pair(m_i: &GridMdp, m_j: &GridMdp) -> Result<()> {
    if m_i.grid_size != m_j.grid_size {
        return Err(Error::Shape(format!("grid sizes differ: {} vs {}", m_i.grid_size, m_j.grid_size)));
    }
    Ok(())
}

/// `n_s` distinct state-action pairs drawn uniformly.
pub fn sample_random(m_i: &GridMdp, m_j: &GridMdp, cfg: &SamplingConfig) -> Result<Vec<(Cell, Action)>> {
    check_pair(m_i, m_j)?;
    cfg.validate()?;
    if cfg.scheme != SamplingScheme::Random {
        return Err(Error::Config("sample_random called with a reward-shaped config".into()));
    }
    let all = m_i.enumerate_state_actions();
    if cfg.n_s > all.len() {
        return Err(Error::TooLarge(format!("{} state-action pairs requested, {} exist", cfg.n_s, all.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(index::sample(&mut rng, all.len(), cfg.n_s).into_iter().map(|k| all[k]).collect())
}

fn expected_reward(m: &GridMdp, s: Cell, a: Action) -> f64 {
    m.outcomes(s, a).into_iter().map(|(next, p)| p * m.reward(next)).sum()
}

/// One state-action pair per uniformly drawn reward target, each found by a
/// cross-entropy search over a categorical distribution on all pairs.
pub fn sample_reward_shaped(m_i: &GridMdp, m_j: &GridMdp, cfg: &SamplingConfig) -> Result<Vec<(Cell, Action)>> {
    check_pair(m_i, m_j)?;
    cfg.validate()?;
    let mcce = match (cfg.scheme, cfg.mcce) {
        (SamplingScheme::RewardShaped, Some(m)) => m,
        _ => return Err(Error::Config("sample_reward_shaped needs a reward-shaped config".into())),
    };
    let all = m_i.enumerate_state_actions();
    // A candidate's score is its reward miss averaged over both MDPs. Expected
    // rewards stand in for realized ones (identical without slip), so scoring
    // consumes no randomness and the sampler is symmetric in (i, j).
    let rewards: Vec<(f64, f64)> = all
        .iter()
        .map(|&(s, a)| (expected_reward(m_i, s, a), expected_reward(m_j, s, a)))
        .collect();
    let score = |k: usize, target: f64| 0.5 * ((rewards[k].0 - target).abs() + (rewards[k].1 - target).abs());
    let lo = m_i
        .cells()
        .map(|c| m_i.reward(c).min(m_j.reward(c)))
        .fold(f64::INFINITY, f64::min);
    let hi = 0.0;

    let elites = mcce.elite_count();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.n_s);
    let mut weights = vec![0.0; all.len()];
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(mcce.population);
    for _ in 0..cfg.n_s {
        let target = rng.gen_range(lo..=hi);
        weights.fill(1.0 / all.len() as f64);
        let mut best: Option<(f64, usize)> = None;
        for _ in 0..mcce.iterations {
            candidates.clear();
            for _ in 0..mcce.population {
                let k = draw_categorical(&weights, &mut rng);
                candidates.push((score(k, target), k));
            }
            candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if best.map_or(true, |b| candidates[0].0 < b.0) {
                best = Some(candidates[0]);
            }
            // refit on the elite set, smoothed towards the previous distribution
            for w in weights.iter_mut() {
                *w *= 1.0 - ELITE_SMOOTHING;
            }
            for &(_, k) in &candidates[..elites] {
                weights[k] += ELITE_SMOOTHING / elites as f64;
            }
        }
        out.push(all[best.expect("at least one iteration").1]);
    }
    Ok(out)
}

/// Weight given to the elite frequencies when refitting.
const ELITE_SMOOTHING: f64 = 0.7;

fn draw_categorical<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Executes each pair `n_t` times in both MDPs. Both MDPs draw slip from
/// identical random streams, so equal MDPs give equal clouds.
pub fn build_empirical(
    m_i: &GridMdp,
    m_j: &GridMdp,
    pairs: &[(Cell, Action)],
    n_t: usize,
    seed: u64,
) -> Result<EmpiricalTransitionSet> {
    check_pair(m_i, m_j)?;
    if pairs.is_empty() {
        return Err(Error::Config("no state-action pairs to execute".into()));
    }
    if n_t == 0 {
        return Err(Error::Config("n_t must be positive".into()));
    }
    let run = |m: &GridMdp| -> Result<PointCloud> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(pairs.len() * n_t * OUTCOME_DIM);
        for &(s, a) in pairs {
            let origin = m.reset_to(s)?;
            for _ in 0..n_t {
                let t = m.step_with(origin, a, &mut rng);
                data.extend_from_slice(&m.encode_outcome(t.next_state, t.reward));
            }
        }
        PointCloud::from_flat(OUTCOME_DIM, data)
    };
    Ok(EmpiricalTransitionSet {
        state_actions: pairs.to_vec(),
        n_t,
        outcomes_i: run(m_i)?,
        outcomes_j: run(m_j)?,
    })
}

/// W1-MDP over every state-action pair. Requires deterministic dynamics.
pub fn chirp_exact(m_i: &GridMdp, m_j: &GridMdp) -> Result<f64> {
    check_pair(m_i, m_j)?;
    if m_i.slip_prob > 0.0 || m_j.slip_prob > 0.0 {
        return Err(Error::ExactnessUnavailable(format!(
            "slip probabilities {} / {}; use a sampled estimate",
            m_i.slip_prob, m_j.slip_prob
        )));
    }
    let set = build_empirical(m_i, m_j, &m_i.enumerate_state_actions(), 1, 0)?;
    Ok(w1_exact(&set.outcomes_i, &set.outcomes_j)?.cost)
}

/// Pairs chosen by `cfg.scheme`, executed `cfg.n_t` times each.
pub fn sample_pairs(m_i: &GridMdp, m_j: &GridMdp, cfg: &SamplingConfig) -> Result<Vec<(Cell, Action)>> {
    match cfg.scheme {
        SamplingScheme::Random => sample_random(m_i, m_j, cfg),
        SamplingScheme::RewardShaped => sample_reward_shaped(m_i, m_j, cfg),
    }
}

pub fn estimate_chirp(m_i: &GridMdp, m_j: &GridMdp, cfg: &SamplingConfig) -> Result<f64> {
    let pairs = sample_pairs(m_i, m_j, cfg)?;
    let set = build_empirical(m_i, m_j, &pairs, cfg.n_t, derive_seed(&[cfg.seed, 1]))?;
    Ok(w1_exact(&set.outcomes_i, &set.outcomes_j)?.cost)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn pair_indices(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

fn assemble(mdps: &[GridMdp], values: Vec<((usize, usize), f64)>, repeats: usize) -> Result<DistanceMatrix> {
    let n = mdps.len();
    let mut entries = vec![0.0; n * n];
    for ((i, j), v) in values {
        entries[i * n + j] = v;
        entries[j * n + i] = v;
    }
    DistanceMatrix::new(mdps.iter().map(GridMdp::id).collect(), entries, repeats)
}

/// Median of `repeats` sampled estimates per unordered pair.
pub fn distance_matrix(mdps: &[GridMdp], cfg: &SamplingConfig, repeats: usize) -> Result<DistanceMatrix> {
    if mdps.len() < 2 {
        return Err(Error::Config("distance matrix needs at least two MDPs".into()));
    }
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    cfg.validate()?;
    let values = pair_indices(mdps.len())
        .into_par_iter()
        .map(|(i, j)| {
            let mut estimates = (0..repeats)
                .map(|r| estimate_chirp(&mdps[i], &mdps[j], &cfg.with_seed(pair_seed(cfg.seed, i, j, r))))
                .collect::<Result<Vec<f64>>>()?;
            Ok(((i, j), median(&mut estimates)))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(mdps, values, repeats)
}

/// Exact distances for every unordered pair.
pub fn exact_distance_matrix(mdps: &[GridMdp]) -> Result<DistanceMatrix> {
    if mdps.len() < 2 {
        return Err(Error::Config("distance matrix needs at least two MDPs".into()));
    }
    let values = pair_indices(mdps.len())
        .into_par_iter()
        .map(|(i, j)| Ok(((i, j), chirp_exact(&mdps[i], &mdps[j])?)))
        .collect::<Result<Vec<_>>>()?;
    assemble(mdps, values, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::make_variant;
    use std::collections::HashSet;

    fn mdp(g: (i32, i32), s: (i32, i32)) -> GridMdp {
        make_variant(Cell::new(g.0, g.1), Cell::new(s.0, s.1), 0.0).unwrap()
    }

    #[test]
    fn random_sampling_is_distinct_and_reproducible() {
        let (a, b) = (mdp((3, 3), (9, 9)), mdp((15, 4), (2, 2)));
        let cfg = SamplingConfig::random(15, 1, 42);
        let p = sample_random(&a, &b, &cfg).unwrap();
        assert_eq!(p.len(), 15);
        assert_eq!(p.iter().collect::<HashSet<_>>().len(), 15);
        assert_eq!(p, sample_random(&a, &b, &cfg).unwrap());
        let full = sample_random(&a, &b, &SamplingConfig::random(1296, 1, 1)).unwrap();
        assert_eq!(full.into_iter().collect::<HashSet<_>>(), a.enumerate_state_actions().into_iter().collect());
        assert!(matches!(sample_random(&a, &b, &SamplingConfig::random(1297, 1, 1)), Err(Error::TooLarge(_))));
    }

    #[test]
    fn empty_elite_set_is_a_config_error() {
        let (a, b) = (mdp((3, 3), (9, 9)), mdp((15, 4), (2, 2)));
        let mut cfg = SamplingConfig::reward_shaped(5, 1, 0);
        cfg.mcce = Some(MceConfig { population: 1, elite_fraction: 0.5, iterations: 3 });
        assert!(matches!(sample_reward_shaped(&a, &b, &cfg), Err(Error::Config(_))));
        let mut bad = SamplingConfig::random(5, 1, 0);
        bad.mcce = Some(MceConfig::default());
        assert!(bad.validate().is_err());
    }

    #[test]
    fn reward_shaped_sampling_is_reproducible() {
        let (a, b) = (mdp((3, 3), (9, 9)), mdp((15, 4), (2, 2)));
        let cfg = SamplingConfig::reward_shaped(20, 1, 5);
        assert_eq!(sample_reward_shaped(&a, &b, &cfg).unwrap(), sample_reward_shaped(&a, &b, &cfg).unwrap());
    }

    #[test]
    fn empirical_sets_have_matched_sizes() {
        let a = mdp((3, 3), (9, 9));
        let b = mdp((15, 4), (2, 2));
        let pairs = sample_random(&a, &b, &SamplingConfig::random(15, 1, 2)).unwrap();
        let set = build_empirical(&a, &b, &pairs, 1, 0).unwrap();
        assert_eq!(set.outcomes_i.len(), 15);
        assert_eq!(set.outcomes_j.len(), 15);
        let set = build_empirical(&a, &b, &pairs, 3, 0).unwrap();
        assert_eq!(set.outcomes_i.len(), 45);
        for k in 0..15 {
            assert_eq!(set.outcomes_i.point(3 * k), set.outcomes_i.point(3 * k + 2));
        }
        let same = build_empirical(&a, &a, &pairs, 2, 9).unwrap();
        assert_eq!(same.outcomes_i, same.outcomes_j);
    }

    #[test]
    fn slip_clouds_agree_for_equal_mdps() {
        let a = make_variant(Cell::new(4, 4), Cell::new(9, 9), 0.4).unwrap();
        let pairs = a.enumerate_state_actions();
        let set = build_empirical(&a, &a, &pairs[..100], 4, 11).unwrap();
        assert_eq!(set.outcomes_i, set.outcomes_j);
        assert!(matches!(chirp_exact(&a, &a), Err(Error::ExactnessUnavailable(_))));
    }

    #[test]
    fn exact_distance_basics() {
        let a = mdp((3, 3), (9, 9));
        let b = mdp((4, 3), (9, 9));
        let c = mdp((18, 18), (9, 9));
        assert_eq!(chirp_exact(&a, &a).unwrap(), 0.0);
        let ab = chirp_exact(&a, &b).unwrap();
        let ba = chirp_exact(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-9);
        assert!(ab < chirp_exact(&a, &c).unwrap());
    }

    #[test]
    fn pair_seeds_are_order_free() {
        assert_eq!(pair_seed(7, 2, 5, 1), pair_seed(7, 5, 2, 1));
        assert_ne!(pair_seed(7, 2, 5, 1), pair_seed(7, 2, 5, 2));
        assert_ne!(derive_seed(&[1, 2]), derive_seed(&[2, 1]));
    }

    #[test]
    fn median_handles_both_parities() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn matrix_validation() {
        let ids = vec!["a".to_string(), "b".to_string()];
        assert!(DistanceMatrix::new(ids.clone(), vec![0.0, 1.0, 1.0, 0.0], 1).is_ok());
        assert!(DistanceMatrix::new(ids.clone(), vec![0.0, 1.0, 2.0, 0.0], 1).is_err());
        assert!(DistanceMatrix::new(ids.clone(), vec![0.0, -1.0, -1.0, 0.0], 1).is_err());
        assert!(DistanceMatrix::new(ids, vec![1.0, 1.0, 1.0, 0.0], 1).is_err());
    }
}

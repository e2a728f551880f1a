//! k-medoids (PAM) over distance matrices, with an exhaustive oracle.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chirp::DistanceMatrix;
use crate::{Error, Result};

/// Largest matrix accepted by [`brute_force_medoids`].
pub const BRUTE_FORCE_MAX: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Medoid indices in increasing order.
    pub medoids: Vec<usize>,
    /// For every point, the index of its medoid.
    pub labels: Vec<usize>,
    pub cost: f64,
}

impl ClusterAssignment {
    /// Position of point `i`'s medoid within `medoids` (a dense cluster id).
    pub fn cluster_of(&self, i: usize) -> usize {
        self.medoids.binary_search(&self.labels[i]).expect("label is a medoid")
    }

    /// Dense cluster id for every point.
    pub fn cluster_ids(&self) -> Vec<usize> {
        (0..self.labels.len()).map(|i| self.cluster_of(i)).collect()
    }
}

/// Assigns every point to its nearest medoid (lowest index on ties; medoids
/// always label themselves). `medoids` must be sorted.
fn assign(d: &DistanceMatrix, medoids: &[usize]) -> ClusterAssignment {
    let mut labels = Vec::with_capacity(d.len());
    let mut cost = 0.0;
    for i in 0..d.len() {
        let label = if medoids.binary_search(&i).is_ok() {
            i
        } else {
            let mut best = medoids[0];
            for &m in &medoids[1..] {
                if d.get(i, m) < d.get(i, best) {
                    best = m;
                }
            }
            best
        };
        cost += d.get(i, label);
        labels.push(label);
    }
    ClusterAssignment { medoids: medoids.to_vec(), labels, cost }
}

fn total_cost(d: &DistanceMatrix, medoids: &[usize]) -> f64 {
    (0..d.len()).map(|i| medoids.iter().map(|&m| d.get(i, m)).fold(f64::INFINITY, f64::min)).sum()
}

fn check_k(d: &DistanceMatrix, k: usize) -> Result<()> {
    if k == 0 || k > d.len() {
        return Err(Error::Config(format!("k = {k} must be in 1..={}", d.len())));
    }
    Ok(())
}

/// Seeded random-start SWAP runs tried after the BUILD-initialized one.
pub const DEFAULT_RESTARTS: usize = 16;

/// PAM k-medoids: greedy BUILD then best-improvement SWAP until no single
/// swap lowers the cost, repeated from `DEFAULT_RESTARTS` seeded random
/// medoid sets; the cheapest result wins (earlier runs win ties).
/// Deterministic given `seed`; ties inside a run go to the lowest index.
pub fn k_medoids(d: &DistanceMatrix, k: usize, seed: u64) -> Result<ClusterAssignment> {
    k_medoids_traced(d, k, seed, DEFAULT_RESTARTS).map(|(a, _)| a)
}

/// As [`k_medoids`] with an explicit restart count, also returning the cost
/// after initialization and after each swap of the winning run.
pub fn k_medoids_traced(d: &DistanceMatrix, k: usize, seed: u64, restarts: usize) -> Result<(ClusterAssignment, Vec<f64>)> {
    check_k(d, k)?;
    let n = d.len();
    let mut best = swap_until_stable(d, build(d, k));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..restarts {
        if k == n {
            break;
        }
        let run = swap_until_stable(d, index::sample(&mut rng, n, k).into_vec());
        if run.1 < best.1 - 1e-12 * (1.0 + best.1.abs()) {
            best = run;
        }
    }
    let (medoids, _, history) = best;
    Ok((assign(d, &medoids), history))
}

/// Greedy BUILD: start from the point with the smallest row sum, then keep
/// adding the point that lowers the total cost most.
fn build(d: &DistanceMatrix, k: usize) -> Vec<usize> {
    let n = d.len();
    // nearest[i]: distance from i to its closest medoid so far
    let mut nearest = vec![f64::INFINITY; n];
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    while medoids.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for c in (0..n).filter(|c| !medoids.contains(c)) {
            let cost: f64 = (0..n).map(|i| nearest[i].min(d.get(i, c))).sum();
            if best.map_or(true, |(_, b)| cost < b) {
                best = Some((c, cost));
            }
        }
        let (c, _) = best.expect("k <= n leaves a candidate");
        medoids.push(c);
        for (i, v) in nearest.iter_mut().enumerate() {
            *v = v.min(d.get(i, c));
        }
    }
    medoids
}

/// Best-improvement SWAP from `medoids`; returns the sorted medoids, the
/// final cost and the cost history.
fn swap_until_stable(d: &DistanceMatrix, mut medoids: Vec<usize>) -> (Vec<usize>, f64, Vec<f64>) {
    let n = d.len();
    let k = medoids.len();
    medoids.sort_unstable();
    let mut cost = total_cost(d, &medoids);
    let mut history = vec![cost];
    // Relative slack so floating-point noise cannot cause endless swaps.
    let eps = 1e-12 * (1.0 + cost.abs());
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for slot in 0..k {
            for o in (0..n).filter(|o| medoids.binary_search(o).is_err()) {
                let mut trial = medoids.clone();
                trial[slot] = o;
                let c = total_cost(d, &trial);
                if c < cost - eps && best.map_or(true, |(_, _, b)| c < b) {
                    best = Some((slot, o, c));
                }
            }
        }
        let Some((slot, o, c)) = best else { break };
        medoids[slot] = o;
        medoids.sort_unstable();
        cost = c;
        history.push(cost);
    }
    (medoids, cost, history)
}

/// Globally optimal medoids by exhaustive search over all `C(n, k)` sets;
/// the lexicographically first optimum wins.
pub fn brute_force_medoids(d: &DistanceMatrix, k: usize) -> Result<ClusterAssignment> {
    check_k(d, k)?;
    let n = d.len();
    if n > BRUTE_FORCE_MAX {
        return Err(Error::TooLarge(format!("{n} points exceed the exhaustive limit {BRUTE_FORCE_MAX}")));
    }
    let mut combo: Vec<usize> = (0..k).collect();
    let mut best = (combo.clone(), total_cost(d, &combo));
    loop {
        // advance to the next combination in lexicographic order
        let Some(pos) = (0..k).rev().find(|&p| combo[p] < n - k + p) else { break };
        combo[pos] += 1;
        for q in pos + 1..k {
            combo[q] = combo[q - 1] + 1;
        }
        let c = total_cost(d, &combo);
        if c < best.1 {
            best = (combo.clone(), c);
        }
    }
    Ok(assign(d, &best.0))
}

/// Sum of each point's distance to its assigned medoid.
pub fn within_cluster_cost(d: &DistanceMatrix, a: &ClusterAssignment) -> Result<f64> {
    if a.labels.len() != d.len() || a.medoids.iter().any(|&m| m >= d.len()) {
        return Err(Error::Shape(format!("{} labels for a {}-point matrix", a.labels.len(), d.len())));
    }
    if a.labels.iter().any(|l| a.medoids.binary_search(l).is_err()) {
        return Err(Error::Validation("a label is not one of the medoids".into()));
    }
    Ok(a.labels.iter().enumerate().map(|(i, &m)| d.get(i, m)).sum())
}

//! Exact 1-Wasserstein distance between uniform empirical point clouds.
//!
//! For two clouds of `n` equally weighted points the Kantorovich infimum is
//! attained by a permutation, so W1 is the optimal assignment cost divided by
//! `n`. Transition clouds repeat points heavily (a deterministic grid has at
//! most one outcome per cell), so the solver first collapses identical points
//! into integer masses and solves the smaller transportation problem by
//! successive shortest augmenting paths, then expands the integral flow back
//! into a permutation.

use std::collections::HashMap;

use crate::{Error, Result};

pub const BRUTE_FORCE_MAX: usize = 8;

/// `n` points in `R^d`, each carrying mass `1/n`. Stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    data: Vec<f64>,
}

impl PointCloud {
    pub fn new(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map(Vec::len).ok_or_else(|| Error::Shape("empty point cloud".into()))?;
        let mut data = Vec::with_capacity(points.len() * dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::Shape(format!("point {i} has dimension {}, expected {dim}", p.len())));
            }
            data.extend_from_slice(p);
        }
        PointCloud::from_flat(dim, data)
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::Shape(format!("{} values do not form points of dimension {dim}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("point cloud contains non-finite coordinates".into()));
        }
        Ok(PointCloud { dim, data })
    }

    pub fn from_points<const D: usize>(points: &[[f64; D]]) -> Result<Self> {
        PointCloud::from_flat(D, points.iter().flatten().copied().collect())
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Multiplies every coordinate by `factor`.
    pub fn scaled(&self, factor: f64) -> PointCloud {
        PointCloud { dim: self.dim, data: self.data.iter().map(|v| v * factor).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// `assignment[k]` is the target point matched to source point `k`.
    pub assignment: Vec<usize>,
    pub cost: f64,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_shapes(x: &PointCloud, y: &PointCloud) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("cloud sizes differ: {} vs {}", x.len(), y.len())));
    }
    if x.dim() != y.dim() {
        return Err(Error::Shape(format!("cloud dimensions differ: {} vs {}", x.dim(), y.dim())));
    }
    Ok(())
}

/// Mean matched distance of a given assignment.
pub fn assignment_cost(x: &PointCloud, y: &PointCloud, assignment: &[usize]) -> f64 {
    let total: f64 = assignment.iter().enumerate().map(|(k, &j)| euclidean(x.point(k), y.point(j))).sum();
    total / x.len() as f64
}

/// Groups identical points; returns the distinct points' first indices and
/// the member indices of each group, both in order of first appearance.
fn collapse(cloud: &PointCloud) -> Vec<Vec<usize>> {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, p) in cloud.points().enumerate() {
        // +0.0 and -0.0 are the same location
        let key: Vec<u64> = p.iter().map(|v| (v + 0.0).to_bits()).collect();
        match index.get(&key) {
            Some(&g) => groups[g].push(i),
            None => {
                index.insert(key, groups.len());
                groups.push(vec![i]);
            }
        }
    }
    groups
}

/// Exact W1 with its optimal assignment.
pub fn w1_exact(x: &PointCloud, y: &PointCloud) -> Result<TransportPlan> {
    check_shapes(x, y)?;
    let src = collapse(x);
    let dst = collapse(y);
    let supply: Vec<u32> = src.iter().map(|g| g.len() as u32).collect();
    let demand: Vec<u32> = dst.iter().map(|g| g.len() as u32).collect();
    let cols = dst.len();
    let mut cost = Vec::with_capacity(src.len() * cols);
    for g in &src {
        let p = x.point(g[0]);
        cost.extend(dst.iter().map(|h| euclidean(p, y.point(h[0]))));
    }
    let flow = min_cost_transport(&cost, &supply, &demand);

    let mut assignment = vec![usize::MAX; x.len()];
    let mut taken = vec![0usize; cols];
    for (u, members) in src.iter().enumerate() {
        let mut next = members.iter();
        for v in 0..cols {
            for _ in 0..flow[u * cols + v] {
                let k = *next.next().expect("flow out of a point equals its mass");
                assignment[k] = dst[v][taken[v]];
                taken[v] += 1;
            }
        }
    }
    debug_assert!(assignment.iter().all(|&j| j != usize::MAX));
    let cost = assignment_cost(x, y, &assignment);
    Ok(TransportPlan { assignment, cost })
}

/// Solves the balanced transportation problem with integer masses on a
/// dense cost matrix (`supply.len()` rows by `demand.len()` columns) and
/// returns the optimal integral flow, row-major.
///
/// Successive shortest paths with node potentials; each Dijkstra starts from
/// every row with mass left and stops at the first column with demand left.
fn min_cost_transport(cost: &[f64], supply: &[u32], demand: &[u32]) -> Vec<u32> {
    let rows = supply.len();
    let cols = demand.len();
    let mut flow = vec![0u32; rows * cols];
    let mut supply_left = supply.to_vec();
    let mut demand_left = demand.to_vec();

    // Reduced cost of row->col is cost + pot_row - pot_col, kept >= 0.
    let mut pot_row = vec![0.0; rows];
    let mut pot_col: Vec<f64> = (0..cols)
        .map(|v| (0..rows).map(|u| cost[u * cols + v]).fold(f64::INFINITY, f64::min))
        .collect();

    let mut dist_row = vec![0.0; rows];
    let mut dist_col = vec![0.0; cols];
    let mut done_row = vec![false; rows];
    let mut done_col = vec![false; cols];
    let mut pred_row: Vec<Option<usize>> = vec![None; rows];
    let mut pred_col = vec![0usize; cols];

    let mut remaining: u64 = supply.iter().map(|&s| u64::from(s)).sum();
    while remaining > 0 {
        for u in 0..rows {
            dist_row[u] = if supply_left[u] > 0 { 0.0 } else { f64::INFINITY };
            pred_row[u] = None;
        }
        dist_col.fill(f64::INFINITY);
        done_row.fill(false);
        done_col.fill(false);

        let target = loop {
            // Dense selection of the closest unsettled node.
            let mut best = f64::INFINITY;
            let mut pick: Option<(bool, usize)> = None;
            for u in 0..rows {
                if !done_row[u] && dist_row[u] < best {
                    best = dist_row[u];
                    pick = Some((true, u));
                }
            }
            for v in 0..cols {
                if !done_col[v] && dist_col[v] < best {
                    best = dist_col[v];
                    pick = Some((false, v));
                }
            }
            match pick.expect("balanced problem always has an augmenting path") {
                (true, u) => {
                    done_row[u] = true;
                    let du = dist_row[u];
                    let pu = pot_row[u];
                    let row = &cost[u * cols..(u + 1) * cols];
                    for v in 0..cols {
                        if done_col[v] {
                            continue;
                        }
                        // rounding can leave reduced costs a few ulps negative
                        let d = du + (row[v] + pu - pot_col[v]).max(0.0);
                        if d < dist_col[v] {
                            dist_col[v] = d;
                            pred_col[v] = u;
                        }
                    }
                }
                (false, v) => {
                    done_col[v] = true;
                    if demand_left[v] > 0 {
                        break v;
                    }
                    for u in 0..rows {
                        if done_row[u] || flow[u * cols + v] == 0 {
                            continue;
                        }
                        let rc = (pot_col[v] - cost[u * cols + v] - pot_row[u]).max(0.0);
                        let d = dist_col[v] + rc;
                        if d < dist_row[u] {
                            dist_row[u] = d;
                            pred_row[u] = Some(v);
                        }
                    }
                }
            }
        };

        let reach = dist_col[target];
        for u in 0..rows {
            pot_row[u] += dist_row[u].min(reach);
        }
        for v in 0..cols {
            pot_col[v] += dist_col[v].min(reach);
        }

        // Bottleneck along the path back to a row with mass left.
        let mut push = demand_left[target];
        let mut v = target;
        let root = loop {
            let u = pred_col[v];
            match pred_row[u] {
                None => break u,
                Some(prev) => {
                    push = push.min(flow[u * cols + prev]);
                    v = prev;
                }
            }
        };
        push = push.min(supply_left[root]);

        let mut v = target;
        loop {
            let u = pred_col[v];
            flow[u * cols + v] += push;
            match pred_row[u] {
                None => break,
                Some(prev) => {
                    flow[u * cols + prev] -= push;
                    v = prev;
                }
            }
        }
        supply_left[root] -= push;
        demand_left[target] -= push;
        remaining -= u64::from(push);
    }
    flow
}

/// Minimum over all `n!` assignments. Test oracle; `n <= 8`.
pub fn w1_bruteforce(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    check_shapes(x, y)?;
    let n = x.len();
    if n > BRUTE_FORCE_MAX {
        return Err(Error::TooLarge(format!("brute force over {n}! permutations (max n = {BRUTE_FORCE_MAX})")));
    }
    let d: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| euclidean(x.point(i), y.point(j)))
        .collect();
    let total = |perm: &[usize]| perm.iter().enumerate().map(|(i, &j)| d[i * n + j]).sum::<f64>();

    // Heap's algorithm
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = total(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(total(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best / n as f64)
}

/// Mean distance under the index coupling `k -> k`; an upper bound on W1.
pub fn paired_mean_distance(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    check_shapes(x, y)?;
    let identity: Vec<usize> = (0..x.len()).collect();
    Ok(assignment_cost(x, y, &identity))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(v: &[f64]) -> PointCloud {
        PointCloud::new(&v.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> PointCloud {
        PointCloud::from_flat(d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identical_clouds_match_in_place() {
        let x = PointCloud::from_points(&[[0.0, 1.0], [2.0, 3.0], [0.5, 0.5]]).unwrap();
        let plan = w1_exact(&x, &x).unwrap();
        assert_eq!(plan.cost, 0.0);
        assert_eq!(plan.assignment, vec![0, 1, 2]);
    }

    #[test]
    fn shifted_pair_on_the_line() {
        // both permutations cost (1+1)/2 = (2+0)/2 = 1
        let plan = w1_exact(&line(&[0.0, 1.0]), &line(&[1.0, 2.0])).unwrap();
        assert!((plan.cost - 1.0).abs() < 1e-15);
    }

    #[test]
    fn swapped_pair_beats_index_coupling() {
        let x = line(&[0.0, 1.0]);
        let y = line(&[1.0, 0.0]);
        assert_eq!(paired_mean_distance(&x, &y).unwrap(), 1.0);
        let plan = w1_exact(&x, &y).unwrap();
        assert_eq!(plan.cost, 0.0);
        assert_eq!(plan.assignment, vec![1, 0]);
    }

    #[test]
    fn single_point_is_plain_distance() {
        let x = PointCloud::from_points(&[[0.0, 0.0]]).unwrap();
        let y = PointCloud::from_points(&[[3.0, 4.0]]).unwrap();
        assert_eq!(w1_bruteforce(&x, &y).unwrap(), 5.0);
        assert_eq!(w1_exact(&x, &y).unwrap().cost, 5.0);
    }

    #[test]
    fn duplicated_points_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let n = rng.gen_range(1..=7);
            // draw from a tiny support so repeats are common
            let pick = |rng: &mut ChaCha8Rng| [f64::from(rng.gen_range(0..3)), f64::from(rng.gen_range(0..2))];
            let xs: Vec<[f64; 2]> = (0..n).map(|_| pick(&mut rng)).collect();
            let ys: Vec<[f64; 2]> = (0..n).map(|_| pick(&mut rng)).collect();
            let x = PointCloud::from_points(&xs).unwrap();
            let y = PointCloud::from_points(&ys).unwrap();
            let plan = w1_exact(&x, &y).unwrap();
            let mut seen = plan.assignment.clone();
            seen.sort_unstable();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
            assert!((plan.cost - w1_bruteforce(&x, &y).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn larger_clouds_are_no_worse_than_greedy_couplings() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_cloud(&mut rng, 60, 3);
        let y = random_cloud(&mut rng, 60, 3);
        let plan = w1_exact(&x, &y).unwrap();
        assert!(plan.cost <= paired_mean_distance(&x, &y).unwrap());
        // local optimality: no 2-swap improves the plan
        let a = &plan.assignment;
        for i in 0..60 {
            for j in i + 1..60 {
                let now = euclidean(x.point(i), y.point(a[i])) + euclidean(x.point(j), y.point(a[j]));
                let swapped = euclidean(x.point(i), y.point(a[j])) + euclidean(x.point(j), y.point(a[i]));
                assert!(swapped >= now - 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let x = line(&[0.0, 1.0]);
        let y = line(&[0.0]);
        assert!(matches!(w1_exact(&x, &y), Err(Error::Shape(_))));
        let z = PointCloud::from_points(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(w1_exact(&x, &z), Err(Error::Shape(_))));
        assert!(matches!(paired_mean_distance(&x, &y), Err(Error::Shape(_))));
        assert!(PointCloud::new(&[]).is_err());
        assert!(PointCloud::new(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        let big = line(&[0.0; 9]);
        assert!(matches!(w1_bruteforce(&big, &big), Err(Error::TooLarge(_))));
    }
}

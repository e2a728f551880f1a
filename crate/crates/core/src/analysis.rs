//! Correlation between distances and regret, equal-volume binning, and a
//! monotone cubic B-spline calibration from raw distance to predicted regret.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chirp::median;
use crate::{Error, Result};

pub const SPLINE_DEGREE: usize = 3;
/// Weight of the second-difference penalty on spline coefficients.
const SMOOTHING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub pair_id: String,
    pub chirp: f64,
    pub sopr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub median_chirp: f64,
    pub median_sopr: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pearson_rho: f64,
    pub spearman_rs: f64,
    pub p_pearson: f64,
    pub p_spearman: f64,
    pub n: usize,
    pub permutations: usize,
}

/// Sorts by distance and cuts into `n_bins` contiguous groups whose sizes
/// differ by at most one (larger groups first).
pub fn bin_equal_volume(samples: &[PairedSample], n_bins: usize) -> Result<Vec<Bin>> {
    if n_bins < 2 {
        return Err(Error::Config(format!("need at least 2 bins, got {n_bins}")));
    }
    if samples.len() < n_bins {
        return Err(Error::InsufficientSamples(format!("{} samples for {n_bins} bins", samples.len())));
    }
    let mut sorted: Vec<&PairedSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.chirp.total_cmp(&b.chirp));
    let base = sorted.len() / n_bins;
    let extra = sorted.len() % n_bins;
    let mut bins = Vec::with_capacity(n_bins);
    let mut start = 0;
    for b in 0..n_bins {
        let size = base + usize::from(b < extra);
        let group = &sorted[start..start + size];
        start += size;
        bins.push(Bin {
            median_chirp: median(&mut group.iter().map(|s| s.chirp).collect::<Vec<_>>()),
            median_sopr: median(&mut group.iter().map(|s| s.sopr).collect::<Vec<_>>()),
            count: size,
        });
    }
    Ok(bins)
}

fn centered(v: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::UndefinedCorrelation("a column has zero variance".into()));
    }
    Ok((c, norm))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InsufficientSamples(format!("{} vs {} values", x.len(), y.len())));
    }
    let (xc, xn) = centered(x)?;
    let (yc, yn) = centered(y)?;
    Ok((dot(&xc, &yc) / (xn * yn)).clamp(-1.0, 1.0))
}

/// Ranks starting at 1; ties share their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Pearson and Spearman coefficients with two-sided permutation p-values
/// (the regret column is shuffled; `p = (hits + 1) / (permutations + 1)`).
pub fn correlate(samples: &[PairedSample], permutations: usize, seed: u64) -> Result<CorrelationReport> {
    if samples.len() < 3 {
        return Err(Error::InsufficientSamples(format!("{} samples, need at least 3", samples.len())));
    }
    if permutations < 100 {
        return Err(Error::Config(format!("{permutations} permutations, need at least 100")));
    }
    let x: Vec<f64> = samples.iter().map(|s| s.chirp).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.sopr).collect();
    if x.iter().chain(&y).any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite sample value".into()));
    }
    let (xc, xn) = centered(&x)?;
    let (yc, yn) = centered(&y)?;
    let (rxc, rxn) = centered(&average_ranks(&x))?;
    let (ryc, ryn) = centered(&average_ranks(&y))?;
    let rho = (dot(&xc, &yc) / (xn * yn)).clamp(-1.0, 1.0);
    let rs = (dot(&rxc, &ryc) / (rxn * ryn)).clamp(-1.0, 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..samples.len()).collect();
    let (mut hits_p, mut hits_s) = (0usize, 0usize);
    // slack so that permutations tying the observed statistic count as hits
    let slack = 1e-12;
    for _ in 0..permutations {
        perm.shuffle(&mut rng);
        let mut sp = 0.0;
        let mut ss = 0.0;
        for (k, &j) in perm.iter().enumerate() {
            sp += xc[k] * yc[j];
            ss += rxc[k] * ryc[j];
        }
        if (sp / (xn * yn)).abs() >= rho.abs() - slack {
            hits_p += 1;
        }
        if (ss / (rxn * ryn)).abs() >= rs.abs() - slack {
            hits_s += 1;
        }
    }
    let p = |hits: usize| (hits + 1) as f64 / (permutations + 1) as f64;
    Ok(CorrelationReport {
        pearson_rho: rho,
        spearman_rs: rs,
        p_pearson: p(hits_p),
        p_spearman: p(hits_s),
        n: samples.len(),
        permutations,
    })
}

/// Cubic B-spline from raw distance to predicted regret, clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub degree: usize,
    /// Full clamped knot vector (end knots repeated `degree + 1` times).
    pub knots: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub domain: [f64; 2],
}

impl CalibrationCurve {
    pub fn validate(&self) -> Result<()> {
        let k = self.degree;
        if self.knots.len() != self.coefficients.len() + k + 1 {
            return Err(Error::Validation(format!(
                "{} knots do not fit {} coefficients of degree {k}",
                self.knots.len(),
                self.coefficients.len()
            )));
        }
        if self.knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Validation("knots are not non-decreasing".into()));
        }
        if !(self.domain[0] <= self.domain[1]) {
            return Err(Error::Validation("empty calibration domain".into()));
        }
        Ok(())
    }

    /// Raw spline value at `x`, without clamping the input or output.
    pub fn spline_value(&self, x: f64) -> f64 {
        de_boor(&self.knots, &self.coefficients, self.degree, x)
    }

    pub fn predict(&self, chirp: f64) -> f64 {
        calibrate(self, chirp)
    }
}

/// Index `s` with `knots[s] <= x < knots[s + 1]`, restricted to the spline's
/// valid spans; the right end belongs to the last span.
fn find_span(knots: &[f64], degree: usize, n_coef: usize, x: f64) -> usize {
    let mut s = degree;
    while s + 1 < n_coef && x >= knots[s + 1] {
        s += 1;
    }
    s
}

fn de_boor(knots: &[f64], coef: &[f64], degree: usize, x: f64) -> f64 {
    let s = find_span(knots, degree, coef.len(), x);
    let mut d: Vec<f64> = (0..=degree).map(|j| coef[j + s - degree]).collect();
    for r in 1..=degree {
        for j in (r..=degree).rev() {
            let i = j + s - degree;
            let denom = knots[i + degree + 1 - r] - knots[i];
            let alpha = if denom > 0.0 { (x - knots[i]) / denom } else { 0.0 };
            d[j] = (1.0 - alpha) * d[j - 1] + alpha * d[j];
        }
    }
    d[degree]
}

/// All basis function values at `x` (Cox-de Boor), one per coefficient.
fn basis_row(knots: &[f64], degree: usize, n_coef: usize, x: f64) -> Vec<f64> {
    (0..n_coef)
        .map(|c| {
            let mut unit = vec![0.0; n_coef];
            unit[c] = 1.0;
            de_boor(knots, &unit, degree, x)
        })
        .collect()
}

/// Pool-adjacent-violators: the non-decreasing sequence closest to `y` in
/// least squares, with per-point weights.
pub fn isotonic(y: &[f64], w: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, f64, usize)> = Vec::new(); // (mean, weight, len)
    for (&v, &wt) in y.iter().zip(w) {
        blocks.push((v, wt, 1));
        while blocks.len() > 1 {
            let (m2, w2, l2) = blocks[blocks.len() - 1];
            let (m1, w1, l1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let wsum = w1 + w2;
            *blocks.last_mut().unwrap() = ((m1 * w1 + m2 * w2) / wsum, wsum, l1 + l2);
        }
    }
    blocks.into_iter().flat_map(|(m, _, l)| std::iter::repeat(m).take(l)).collect()
}

/// Fits the calibration curve through bin medians: isotonic pre-pass, then
/// least squares over cubic B-splines whose coefficients are constrained to
/// be non-decreasing (which makes the curve non-decreasing).
pub fn fit_calibration(bins: &[Bin]) -> Result<CalibrationCurve> {
    if bins.len() < SPLINE_DEGREE + 2 {
        return Err(Error::InsufficientSamples(format!("{} bins, a cubic fit needs at least 5", bins.len())));
    }
    if bins.iter().any(|b| !b.median_chirp.is_finite() || !b.median_sopr.is_finite()) {
        return Err(Error::Validation("non-finite bin median".into()));
    }
    let mut order: Vec<usize> = (0..bins.len()).collect();
    order.sort_by(|&a, &b| bins[a].median_chirp.total_cmp(&bins[b].median_chirp));
    let x: Vec<f64> = order.iter().map(|&i| bins[i].median_chirp).collect();
    let raw: Vec<f64> = order.iter().map(|&i| bins[i].median_sopr).collect();
    let y = isotonic(&raw, &vec![1.0; raw.len()]);

    let lo = x[0];
    let hi = x[x.len() - 1];
    // A zero-width domain still needs a valid knot span; the curve is then
    // only ever evaluated at `lo`.
    let span_hi = if hi - lo > 1e-12 { hi } else { lo + 1.0 };
    let interior = bins.len().saturating_sub(4).max(1);
    let mut knots = vec![lo; SPLINE_DEGREE + 1];
    knots.extend((1..=interior).map(|k| lo + (span_hi - lo) * k as f64 / (interior + 1) as f64));
    knots.extend(std::iter::repeat(span_hi).take(SPLINE_DEGREE + 1));
    let n_coef = knots.len() - SPLINE_DEGREE - 1;

    // Coefficients c_k = c_0 + sum_{m<=k} d_m with d_m >= 0. The free c_0 is
    // split into (p - q) with p, q >= 0 so everything is one NNLS problem.
    let n_var = n_coef + 1;
    let to_coef = |z: &[f64]| -> Vec<f64> {
        let mut c = Vec::with_capacity(n_coef);
        let mut acc = z[0] - z[1];
        c.push(acc);
        for d in &z[2..] {
            acc += d;
            c.push(acc);
        }
        c
    };
    // Design columns in z-space: column of variable v applied to a row r of
    // basis values is sum over coefficients it feeds.
    let lift = |row: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n_var];
        let total: f64 = row.iter().sum();
        out[0] = total;
        out[1] = -total;
        for m in 1..n_coef {
            out[m + 1] = row[m..].iter().sum();
        }
        out
    };
    let mut a: Vec<Vec<f64>> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    for (xi, yi) in x.iter().zip(&y) {
        a.push(lift(&basis_row(&knots, SPLINE_DEGREE, n_coef, *xi)));
        b.push(*yi);
    }
    let w = SMOOTHING.sqrt();
    for k in 0..n_coef.saturating_sub(2) {
        let mut row = vec![0.0; n_coef];
        row[k] = w;
        row[k + 1] = -2.0 * w;
        row[k + 2] = w;
        a.push(lift(&row));
        b.push(0.0);
    }
    let z = nnls(&a, &b)?;
    let coefficients = to_coef(&z);
    let curve = CalibrationCurve { degree: SPLINE_DEGREE, knots, coefficients, domain: [lo, hi] };
    curve.validate()?;
    Ok(curve)
}

/// Predicted regret for a raw distance: the input is clamped to the curve's
/// domain and the output to `[0, 1]`.
pub fn calibrate(curve: &CalibrationCurve, chirp: f64) -> f64 {
    let x = if chirp.is_nan() { curve.domain[0] } else { chirp.clamp(curve.domain[0], curve.domain[1]) };
    curve.spline_value(x).clamp(0.0, 1.0)
}

/// Solves `min ||A z - b||` subject to `z >= 0` (Lawson-Hanson active set).
pub fn nnls(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = a.first().map_or(0, Vec::len);
    let m = a.len();
    let mut z = vec![0.0; n];
    let mut passive = vec![false; n];
    let tol = 1e-12;
    let gradient = |z: &[f64]| -> Vec<f64> {
        let resid: Vec<f64> = (0..m).map(|r| b[r] - dot(&a[r], z)).collect();
        (0..n).map(|j| (0..m).map(|r| a[r][j] * resid[r]).sum()).collect()
    };
    for _outer in 0..(3 * n + 10) {
        let w = gradient(&z);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else {
            return Ok(z);
        };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let s_sub = least_squares_subset(a, b, &idx)?;
            if s_sub.iter().all(|&v| v > 0.0) {
                z.fill(0.0);
                for (k, &j) in idx.iter().enumerate() {
                    z[j] = s_sub[k];
                }
                break;
            }
            // step toward s until a passive variable hits zero
            let mut alpha = f64::INFINITY;
            for (k, &j) in idx.iter().enumerate() {
                if s_sub[k] <= 0.0 {
                    let step = z[j] / (z[j] - s_sub[k]);
                    alpha = alpha.min(step);
                }
            }
            for (k, &j) in idx.iter().enumerate() {
                z[j] += alpha * (s_sub[k] - z[j]);
                if z[j] <= tol {
                    z[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    Err(Error::Numerical("monotone spline fit did not converge".into()))
}

/// Unconstrained least squares on the listed columns via normal equations.
fn least_squares_subset(a: &[Vec<f64>], b: &[f64], cols: &[usize]) -> Result<Vec<f64>> {
    let k = cols.len();
    let mut g = vec![vec![0.0; k + 1]; k];
    for row in 0..a.len() {
        for (p, &cp) in cols.iter().enumerate() {
            let v = a[row][cp];
            if v == 0.0 {
                continue;
            }
            for (q, &cq) in cols.iter().enumerate() {
                g[p][q] += v * a[row][cq];
            }
            g[p][k] += v * b[row];
        }
    }
    solve_augmented(g)
}

/// Gaussian elimination with partial pivoting on an augmented `k x (k+1)` system.
fn solve_augmented(mut g: Vec<Vec<f64>>) -> Result<Vec<f64>> {
    let k = g.len();
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| g[i][col].abs().total_cmp(&g[j][col].abs()))
            .expect("non-empty");
        if g[pivot][col].abs() < 1e-14 {
            return Err(Error::Numerical("singular least-squares system".into()));
        }
        g.swap(col, pivot);
        for r in col + 1..k {
            let f = g[r][col] / g[col][col];
            if f != 0.0 {
                for c in col..=k {
                    g[r][c] -= f * g[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; k];
    for r in (0..k).rev() {
        let s: f64 = (r + 1..k).map(|c| g[r][c] * x[c]).sum();
        x[r] = (g[r][k] - s) / g[r][r];
    }
    Ok(x)
}

/// Held-out mean absolute error of calibrated predictions over random
/// `train_fraction` splits; one value per split.
pub fn holdout_mae(
    samples: &[PairedSample],
    n_bins: usize,
    train_fraction: f64,
    splits: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n_train = (samples.len() as f64 * train_fraction).round() as usize;
    if n_train < n_bins || n_train >= samples.len() {
        return Err(Error::InsufficientSamples(format!("{} samples cannot be split {train_fraction}", samples.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    (0..splits)
        .map(|_| {
            idx.shuffle(&mut rng);
            let train: Vec<PairedSample> = idx[..n_train].iter().map(|&i| samples[i].clone()).collect();
            let curve = fit_calibration(&bin_equal_volume(&train, n_bins)?)?;
            let test = &idx[n_train..];
            Ok(test.iter().map(|&i| (calibrate(&curve, samples[i].chirp) - samples[i].sopr).abs()).sum::<f64>()
                / test.len() as f64)
        })
        .collect()
}

//! Sample summaries and goodness-of-fit checks.
//!
//! Thresholds are fixed critical values (two KS levels and the 0.999
//! chi-square quantile) rather than p-values.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expression::EvalError;
use crate::model::{cell_coords, cell_of, SampleBatch, TargetSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("samples must be sorted in non-decreasing order (first violation at index {0})")]
    Unsorted(usize),
    #[error("sample {0} is not finite")]
    NonFinite(usize),
    #[error("CDF value {value} at {x} is outside [0, 1]")]
    CdfRange { x: f64, value: f64 },
    #[error("sample {0} lies outside the target support")]
    OutsideSupport(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("fewer than two chi-square cells remain after merging sparse cells")]
    TooFewCells,
    #[error("invalid binning: {0}")]
    InvalidBins(String),
    #[error("density has no mass on the support")]
    ZeroMass,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Streaming mean / co-moment accumulator. Supports associative merging so
/// chunked summaries can be reduced in parallel.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryAccumulator {
    dims: usize,
    n: u64,
    mean: Vec<f64>,
    // row-major d x d sum of centred cross products
    comoment: Vec<f64>,
}

impl SummaryAccumulator {
    pub fn new(dims: usize) -> Self {
        Self {
            dims,
            n: 0,
            mean: vec![0.0; dims],
            comoment: vec![0.0; dims * dims],
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.dims);
        self.n += 1;
        let n = self.n as f64;
        let d = self.dims;
        let delta: Vec<f64> = row.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl / n;
        }
        for i in 0..d {
            let after = row[i] - self.mean[i];
            for j in 0..d {
                self.comoment[i * d + j] += delta[j] * after;
            }
        }
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.dims, other.dims);
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let d = self.dims;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        for i in 0..d {
            for j in 0..d {
                self.comoment[i * d + j] += other.comoment[i * d + j] + delta[i] * delta[j] * na * nb / n;
            }
        }
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl * nb / n;
        }
        self.n += other.n;
    }

    pub fn finish(&self) -> Result<SummaryStats, StatsError> {
        if self.n < 2 {
            return Err(StatsError::TooFewSamples {
                needed: 2,
                got: self.n as usize,
            });
        }
        let d = self.dims;
        let denom = (self.n - 1) as f64;
        let mut covariance = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                // symmetrise away rounding differences between (i, j) and (j, i)
                let c = 0.5 * (self.comoment[i * d + j] + self.comoment[j * d + i]);
                covariance[i][j] = c / denom;
            }
        }
        let correlation = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let (vi, vj) = (covariance[i][i], covariance[j][j]);
                        if vi <= 0.0 || vj <= 0.0 {
                            None
                        } else if i == j {
                            Some(1.0)
                        } else {
                            Some((covariance[i][j] / (vi.sqrt() * vj.sqrt())).clamp(-1.0, 1.0))
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(SummaryStats {
            n: self.n,
            mean: self.mean.clone(),
            covariance,
            correlation,
        })
    }
}

/// Mean, unbiased covariance and correlation of a sample. A correlation entry
/// is `None` when either coordinate has zero variance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub n: u64,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub correlation: Vec<Vec<Option<f64>>>,
}

impl SummaryStats {
    pub fn correlation(&self, i: usize, j: usize) -> Option<f64> {
        self.correlation[i][j]
    }
}

pub fn summarize(batch: &SampleBatch) -> Result<SummaryStats, StatsError> {
    summarize_rows(batch.dims(), batch.rows())
}

pub fn summarize_rows<'a>(
    dims: usize,
    rows: impl IntoIterator<Item = &'a [f64]>,
) -> Result<SummaryStats, StatsError> {
    let mut acc = SummaryAccumulator::new(dims);
    for r in rows {
        acc.push(r);
    }
    acc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GofKind {
    Ks,
    ChiSquare,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GofReport {
    pub kind: GofKind,
    pub statistic: f64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dof: Option<usize>,
    pub pass: bool,
}

/// Significance levels with tabulated KS critical values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alpha {
    P05,
    P01,
}

impl Alpha {
    pub fn from_level(level: f64) -> Option<Self> {
        if level == 0.05 {
            Some(Alpha::P05)
        } else if level == 0.01 {
            Some(Alpha::P01)
        } else {
            None
        }
    }

    /// Asymptotic critical value of `sqrt(n) * D_n`.
    pub fn ks_coefficient(self) -> f64 {
        match self {
            Alpha::P05 => 1.358,
            Alpha::P01 => 1.628,
        }
    }
}

/// One-sample Kolmogorov-Smirnov test of sorted `samples` against `cdf`.
pub fn ks_test_1d<F>(samples: &[f64], cdf: F, alpha: Alpha) -> Result<GofReport, StatsError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    if samples.is_empty() {
        return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
    }
    for (i, x) in samples.iter().enumerate() {
        if !x.is_finite() {
            return Err(StatsError::NonFinite(i));
        }
    }
    if let Some(i) = samples.windows(2).position(|w| w[0] > w[1]) {
        return Err(StatsError::Unsorted(i + 1));
    }
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x)?;
        if !(-1e-12..=1.0 + 1e-12).contains(&f) {
            return Err(StatsError::CdfRange { x, value: f });
        }
        let above = (i + 1) as f64 / n - f;
        let below = f - i as f64 / n;
        d = d.max(above).max(below);
    }
    let threshold = alpha.ks_coefficient() / n.sqrt();
    Ok(GofReport {
        kind: GofKind::Ks,
        statistic: d,
        threshold,
        dof: None,
        pass: d < threshold,
    })
}

#[rustfmt::skip]
const CHI2_999: [f64; 100] = [
    10.8276, 13.8155, 16.2662, 18.4668, 20.5150,
    22.4577, 24.3219, 26.1245, 27.8772, 29.5883,
    31.2641, 32.9095, 34.5282, 36.1233, 37.6973,
    39.2524, 40.7902, 42.3124, 43.8202, 45.3147,
    46.7970, 48.2679, 49.7282, 51.1786, 52.6197,
    54.0520, 55.4760, 56.8923, 58.3012, 59.7031,
    61.0983, 62.4872, 63.8701, 65.2472, 66.6188,
    67.9852, 69.3465, 70.7029, 72.0547, 73.4020,
    74.7449, 76.0838, 77.4186, 78.7495, 80.0767,
    81.4003, 82.7204, 84.0371, 85.3506, 86.6608,
    87.9680, 89.2722, 90.5734, 91.8718, 93.1675,
    94.4605, 95.7510, 97.0388, 98.3242, 99.6072,
    100.8879, 102.1662, 103.4424, 104.7163, 105.9881,
    107.2579, 108.5256, 109.7913, 111.0551, 112.3169,
    113.5769, 114.8351, 116.0915, 117.3462, 118.5991,
    119.8503, 121.1000, 122.3480, 123.5944, 124.8392,
    126.0826, 127.3244, 128.5648, 129.8037, 131.0412,
    132.2773, 133.5121, 134.7455, 135.9776, 137.2084,
    138.4379, 139.6661, 140.8931, 142.1189, 143.3435,
    144.5670, 145.7892, 147.0104, 148.2304, 149.4493,
];

/// 0.999 quantile of the chi-square distribution: tabulated up to 100
/// degrees of freedom, Wilson-Hilferty beyond (relative error below 4e-4).
pub fn chi_square_quantile_999(dof: usize) -> f64 {
    assert!(dof >= 1, "chi-square needs at least one degree of freedom");
    if dof <= CHI2_999.len() {
        return CHI2_999[dof - 1];
    }
    const Z_999: f64 = 3.090_232_306_167_813;
    let k = dof as f64;
    let a = 2.0 / (9.0 * k);
    k * (1.0 - a + Z_999 * a.sqrt()).powi(3)
}

/// Minimum expected count per chi-square cell.
pub const MIN_EXPECTED: f64 = 5.0;
/// Midpoint quadrature points per cell and axis.
pub const QUADRATURE_POINTS: usize = 32;

/// Outcome of binning a sample and merging sparse cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquareCells {
    pub observed: Vec<f64>,
    pub expected: Vec<f64>,
}

/// Merges every cell whose expected count is below [`MIN_EXPECTED`] into the
/// adjacent group with the largest expected count, scanning cells in
/// row-major order until no sparse group remains.
pub fn merge_sparse_cells(bins: &[usize], observed: &[f64], expected: &[f64]) -> ChiSquareCells {
    let cells = observed.len();
    let mut group: Vec<usize> = (0..cells).collect();
    let mut members: Vec<Vec<usize>> = (0..cells).map(|k| vec![k]).collect();
    let mut obs = observed.to_vec();
    let mut exp = expected.to_vec();
    let mut alive = vec![true; cells];
    let strides: Vec<usize> = (0..bins.len())
        .map(|a| bins[a + 1..].iter().product())
        .collect();

    loop {
        let mut merged = false;
        for k in 0..cells {
            let g = group[k];
            if !alive[g] || exp[g] >= MIN_EXPECTED {
                continue;
            }
            let mut best: Option<usize> = None;
            for &c in &members[g] {
                let coords = cell_coords(bins, c);
                for (axis, &i) in coords.iter().enumerate() {
                    let mut adj = Vec::with_capacity(2);
                    if i > 0 {
                        adj.push(c - strides[axis]);
                    }
                    if i + 1 < bins[axis] {
                        adj.push(c + strides[axis]);
                    }
                    for nb in adj {
                        let h = group[nb];
                        if h == g {
                            continue;
                        }
                        best = match best {
                            Some(b) if exp[b] > exp[h] || (exp[b] == exp[h] && b < h) => Some(b),
                            _ => Some(h),
                        };
                    }
                }
            }
            let Some(target) = best else { continue };
            let moved = std::mem::take(&mut members[g]);
            for &c in &moved {
                group[c] = target;
            }
            members[target].extend(moved);
            obs[target] += obs[g];
            exp[target] += exp[g];
            alive[g] = false;
            merged = true;
        }
        if !merged {
            break;
        }
    }
    let keep: Vec<usize> = (0..cells).filter(|&g| alive[g]).collect();
    ChiSquareCells {
        observed: keep.iter().map(|&g| obs[g]).collect(),
        expected: keep.iter().map(|&g| exp[g]).collect(),
    }
}

/// Probability mass of each cell of a regular `bins` partition of the
/// target's support, by midpoint quadrature with [`QUADRATURE_POINTS`]^d
/// points per cell, normalised to sum to one.
pub fn cell_probabilities(target: &TargetSpec, bins: &[usize]) -> Result<Vec<f64>, StatsError> {
    let support = target.support();
    let d = support.dim();
    if bins.len() != d || bins.contains(&0) {
        return Err(StatsError::InvalidBins(format!("need {d} positive bin counts")));
    }
    let cells: usize = bins.iter().product();
    let q = QUADRATURE_POINTS;
    let per_cell = q.pow(d as u32);
    let field = target.field();
    let raw: Vec<f64> = (0..cells)
        .into_par_iter()
        .map(|k| {
            let coords = cell_coords(bins, k);
            let cell: Vec<(f64, f64)> = coords
                .iter()
                .enumerate()
                .map(|(a, &i)| (support.edge(a, bins[a], i), support.edge(a, bins[a], i + 1)))
                .collect();
            let vol: f64 = cell.iter().map(|(lo, hi)| hi - lo).product();
            let mut point = vec![0.0; d];
            let mut sum = 0.0;
            for j in 0..per_cell {
                let mut rem = j;
                for axis in (0..d).rev() {
                    let t = rem % q;
                    rem /= q;
                    let (lo, hi) = cell[axis];
                    point[axis] = lo + (hi - lo) * ((t as f64 + 0.5) / q as f64);
                }
                sum += field.eval(&point)?;
            }
            Ok(sum * vol / per_cell as f64)
        })
        .collect::<Result<_, StatsError>>()?;
    let total: f64 = raw.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(StatsError::ZeroMass);
    }
    Ok(raw.into_iter().map(|m| m / total).collect())
}

/// Chi-square test of a sample against the target density on a regular
/// partition of its support, with sparse cells merged first.
pub fn chi_square_box(batch: &SampleBatch, target: &TargetSpec, bins: &[usize]) -> Result<GofReport, StatsError> {
    if batch.dims() != target.dim() {
        return Err(StatsError::DimensionMismatch {
            expected: target.dim(),
            got: batch.dims(),
        });
    }
    let probs = cell_probabilities(target, bins)?;
    let mut observed = vec![0.0; probs.len()];
    for (i, row) in batch.rows().enumerate() {
        let k = cell_of(target.support(), bins, row).ok_or(StatsError::OutsideSupport(i))?;
        observed[k] += 1.0;
    }
    let n = batch.len() as f64;
    let expected: Vec<f64> = probs.iter().map(|p| p * n).collect();
    let merged = merge_sparse_cells(bins, &observed, &expected);
    chi_square_from_counts(&merged.observed, &merged.expected)
}

/// Pearson statistic for already-binned counts, with `dof = cells - 1`.
pub fn chi_square_from_counts(observed: &[f64], expected: &[f64]) -> Result<GofReport, StatsError> {
    if observed.len() < 2 {
        return Err(StatsError::TooFewCells);
    }
    let statistic: f64 = observed
        .iter()
        .zip(expected)
        .map(|(o, e)| if *e > 0.0 { (o - e) * (o - e) / e } else if *o > 0.0 { f64::INFINITY } else { 0.0 })
        .sum();
    let dof = observed.len() - 1;
    let threshold = chi_square_quantile_999(dof);
    Ok(GofReport {
        kind: GofKind::ChiSquare,
        statistic,
        threshold,
        dof: Some(dof),
        pass: statistic < threshold,
    })
}

/// Expected SRMC acceptance rate `integral / (c * volume)`.
pub fn predicted_acceptance(f_box_integral: f64, c: f64, volume: f64) -> f64 {
    f_box_integral / (c * volume)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expression::VarOrder;
    use crate::model::{validate_target, BoundingBox, RunMetadata, ScalarField};
    use std::f64::consts::{FRAC_PI_2, SQRT_2};

    fn batch(dims: usize, points: Vec<f64>) -> SampleBatch {
        let n = (points.len() / dims) as u64;
        SampleBatch::new(
            dims,
            points,
            RunMetadata {
                seed: 0,
                requested_n: n,
                proposals_drawn: n,
                accepted: n,
                acceptance_rate: 1.0,
                bound_c: 1.0,
                envelope_violations: 0,
                wall_time_ms: 0.0,
            },
        )
    }

    fn sine_cdf(x: f64) -> Result<f64, EvalError> {
        Ok(0.5 - x.cos() / SQRT_2)
    }

    #[test]
    fn perfect_correlations() {
        let s = summarize(&batch(2, vec![0.0, 0.0, 1.0, 1.0])).unwrap();
        assert!((s.correlation(0, 1).unwrap() - 1.0).abs() < 1e-12);
        let pts: Vec<f64> = (0..10).flat_map(|t| [t as f64, -(t as f64)]).collect();
        let s = summarize(&batch(2, pts)).unwrap();
        assert!((s.correlation(0, 1).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(s.covariance[0][1], s.covariance[1][0]);
    }

    #[test]
    fn constant_column_has_undefined_correlation() {
        let s = summarize(&batch(2, vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0])).unwrap();
        assert_eq!(s.correlation(0, 1), None);
        assert_eq!(s.correlation(1, 1), None);
        assert_eq!(s.correlation(0, 0), Some(1.0));
        assert_eq!(s.covariance[0][0], 1.0);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            summarize(&batch(1, vec![1.0])),
            Err(StatsError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn ks_at_exact_quantiles() {
        // F(x) = x on [0, 1], samples at (i - 0.5)/n
        let n = 200;
        let xs: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        let r = ks_test_1d(&xs, Ok, Alpha::P05).unwrap();
        assert!((r.statistic - 0.5 / n as f64).abs() < 1e-12);
        assert!(r.pass);
    }

    fn sine_cdf_clipped(x: f64) -> Result<f64, EvalError> {
        let lo = std::f64::consts::FRAC_PI_4;
        Ok(if x < lo {
            0.0
        } else if x > 3.0 * lo {
            1.0
        } else {
            sine_cdf(x)?
        })
    }

    #[test]
    fn ks_rejects_unit_uniform_against_sine() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_test_1d(&xs, sine_cdf_clipped, Alpha::P01).unwrap();
        assert!(!r.pass);
        // the two CDFs differ by about 0.882 just below pi/4
        assert!(r.statistic > 0.2);
    }

    #[test]
    fn ks_rejects_box_uniform_at_large_n() {
        // sup |F - G| = 0.0211 between the sine CDF and the uniform CDF on
        // the same interval; at n = 20000 the 1% threshold is 0.0115
        let lo = std::f64::consts::FRAC_PI_4;
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|i| lo + FRAC_PI_2 * (i as f64 + 0.5) / n as f64).collect();
        let r = ks_test_1d(&xs, sine_cdf, Alpha::P01).unwrap();
        assert!(!r.pass);
        assert!((r.statistic - 0.0211).abs() < 1e-3);
    }

    #[test]
    fn ks_requires_sorted_input() {
        assert_eq!(ks_test_1d(&[0.2, 0.1], Ok, Alpha::P05), Err(StatsError::Unsorted(1)));
        assert!(ks_test_1d(&[], Ok, Alpha::P05).is_err());
    }

    #[test]
    fn chi_square_quantiles() {
        assert_eq!(chi_square_quantile_999(63), 103.4424);
        assert_eq!(chi_square_quantile_999(99), 148.2304);
        // scipy.stats.chi2.ppf(0.999, k)
        for (k, exact) in [(101, 150.66705566784537), (200, 267.5405278227572), (1000, 1143.9170926196791)] {
            let q = chi_square_quantile_999(k);
            assert!(((q - exact) / exact).abs() < 4e-4, "{k}: {q}");
        }
    }

    #[test]
    fn all_points_in_one_cell_fail() {
        let vars = VarOrder::new(["x", "y"]).unwrap();
        let t = validate_target(
            ScalarField::parse("1", &vars).unwrap(),
            BoundingBox::parse("0:1,0:1").unwrap(),
            Some(1.0),
        )
        .unwrap();
        let pts: Vec<f64> = (0..1000).flat_map(|_| [0.05, 0.05]).collect();
        let r = chi_square_box(&batch(2, pts), &t, &[4, 4]).unwrap();
        assert!(!r.pass);
        assert_eq!(r.dof, Some(15));
    }

    #[test]
    fn sparse_cells_merge_into_largest_neighbour() {
        // 1 x 4 strip: expected [1, 10, 2, 20]
        let m = merge_sparse_cells(&[4], &[1.0, 9.0, 3.0, 19.0], &[1.0, 10.0, 2.0, 20.0]);
        assert_eq!(m.expected, vec![11.0, 22.0]);
        assert_eq!(m.observed, vec![10.0, 22.0]);
        // 2 x 2 grid, a sparse corner joins the larger of its two neighbours
        let m = merge_sparse_cells(&[2, 2], &[0.0, 6.0, 8.0, 9.0], &[1.0, 6.0, 8.0, 9.0]);
        assert_eq!(m.expected, vec![6.0, 9.0, 9.0]);
        // everything sparse collapses to one group
        let m = merge_sparse_cells(&[3], &[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0]);
        assert_eq!(m.expected, vec![3.0]);
        assert_eq!(chi_square_from_counts(&m.observed, &m.expected), Err(StatsError::TooFewCells));
    }

    #[test]
    fn quadrature_cell_masses_for_sine() {
        let vars = VarOrder::new(["x"]).unwrap();
        let b = BoundingBox::parse("pi/4:3*pi/4").unwrap();
        let t = validate_target(ScalarField::parse("sin(x)/sqrt(2)", &vars).unwrap(), b.clone(), Some(1.1)).unwrap();
        let probs = cell_probabilities(&t, &[8]).unwrap();
        for (k, p) in probs.iter().enumerate() {
            let (a, c) = (b.edge(0, 8, k), b.edge(0, 8, k + 1));
            let exact = sine_cdf(c).unwrap() - sine_cdf(a).unwrap();
            assert!((p - exact).abs() < 1e-5, "cell {k}: {p} vs {exact}");
        }
    }

    #[test]
    fn acceptance_prediction() {
        assert!((predicted_acceptance(1.0, 1.1, FRAC_PI_2) - 0.5787).abs() < 1e-4);
        assert!((predicted_acceptance(1.0, 0.1657, 100.0) - 0.0603).abs() < 1e-4);
        assert!((predicted_acceptance(1.0, 0.37, 1.0 / 0.37) - 1.0).abs() < 1e-15);
    }
}

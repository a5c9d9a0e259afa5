//! Region-restricted integrals over a box.
//!
//! [`integrate_screened`] estimates `∫_D g` as the product of two Monte Carlo
//! estimates taken over the enclosing box `S`:
//!
//! * `A = vol(S) * mean(g)` over uniform points on `S` (the normalising
//!   constant of the density `g / ∫_S g`),
//! * `B = #{s in D} / #S2` over rejection samples `S2` from that density.
//!
//! [`integrate_direct`] is the plain estimator `vol(S) * mean(g * 1_D)` and
//! serves as an independent check.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expression::{EvalError, ExprAst};
use crate::model::{validate_target, BoundingBox, ModelError, ScalarField, TargetSpec};
use crate::randomness::{mix64, substream, RandomStream};
use crate::samplers::{srmc_sample_with, SampleError, SamplerOptions};

/// Replications used when the caller does not choose.
pub const DEFAULT_REPLICATIONS: usize = 10;
// Keeps the direct estimator's streams apart from the screened ones.
const DIRECT_SALT: u64 = 0xD1EC_7000_0000_0001;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("integrand is negative ({value}) at {point:?}; the screened estimator needs g >= 0")]
    NegativeIntegrand { point: Vec<f64>, value: f64 },
    #[error("integrand is zero everywhere on the search grid")]
    ZeroIntegrand,
    #[error("region expression gave {value} at {point:?}; expected 0 or 1")]
    NotIndicator { point: Vec<f64>, value: f64 },
    #[error("variables differ: integrand uses [{integrand}], region uses [{region}]")]
    VariableMismatch { integrand: String, region: String },
    #[error("sample size and replication count must both be at least 1")]
    EmptyRequest,
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl From<ModelError> for IntegrateError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Negative { point, value } => IntegrateError::NegativeIntegrand { point, value },
            ModelError::ZeroField => IntegrateError::ZeroIntegrand,
            ModelError::Eval(e) => IntegrateError::Eval(e),
            other => IntegrateError::Model(other),
        }
    }
}

/// Extra bookkeeping of the screened estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreeningDetail {
    /// `A` per replication.
    pub volume_terms: Vec<f64>,
    /// `B` per replication.
    pub region_fractions: Vec<f64>,
    pub bound_c: f64,
    pub proposals_drawn: u64,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegralEstimate {
    pub value: f64,
    pub replications: usize,
    pub per_replication_values: Vec<f64>,
    /// Standard deviation of the replication values over `sqrt(R)`; absent
    /// with a single replication.
    pub std_error: Option<f64>,
    /// Uniform points drawn, summed over replications.
    pub n_uniform: u64,
    /// Screened samples, summed over replications (zero for the direct
    /// estimator).
    pub n_screened: u64,
    /// Points found inside the region, summed over replications.
    pub n_in_region: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub screening: Option<ScreeningDetail>,
}

impl IntegralEstimate {
    fn aggregate(values: Vec<f64>) -> (f64, Option<f64>) {
        let r = values.len() as f64;
        let mean = values.iter().sum::<f64>() / r;
        let se = (values.len() > 1).then(|| {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0);
            (var / r).sqrt()
        });
        (mean, se)
    }
}

fn check_inputs(g: &ScalarField, region: &ExprAst, support: &BoundingBox, n: usize, reps: usize) -> Result<(), IntegrateError> {
    if n == 0 || reps == 0 {
        return Err(IntegrateError::EmptyRequest);
    }
    if g.vars() != region.vars() {
        return Err(IntegrateError::VariableMismatch {
            integrand: g.vars().to_string(),
            region: region.vars().to_string(),
        });
    }
    if g.dim() != support.dim() {
        return Err(ModelError::DimensionMismatch {
            field: g.dim(),
            support: support.dim(),
        }
        .into());
    }
    Ok(())
}

#[inline]
fn indicator(region: &ExprAst, point: &[f64]) -> Result<bool, IntegrateError> {
    let v = region.eval(point)?;
    if v == 1.0 {
        Ok(true)
    } else if v == 0.0 {
        Ok(false)
    } else {
        Err(IntegrateError::NotIndicator {
            point: point.to_vec(),
            value: v,
        })
    }
}

struct Replication {
    volume_term: f64,
    region_fraction: f64,
    in_region: u64,
    proposals: u64,
}

/// Indicator-screened estimate of `∫_{box ∩ region} g` with `reps`
/// independent replications of `n` uniform and `n` screened points each.
///
/// `g` must be non-negative on the box; the envelope for the screening
/// sampler comes from a grid search with the default safety factor.
pub fn integrate_screened(
    g: &ScalarField,
    region: &ExprAst,
    support: &BoundingBox,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<IntegralEstimate, IntegrateError> {
    check_inputs(g, region, support, n, reps)?;
    let target = validate_target(g.clone(), support.clone(), None)?;
    integrate_screened_with(&target, region, n, reps, seed)
}

/// As [`integrate_screened`], reusing an already validated target for the
/// density proportional to `g`.
pub fn integrate_screened_with(
    target: &TargetSpec,
    region: &ExprAst,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<IntegralEstimate, IntegrateError> {
    check_inputs(target.field(), region, target.support(), n, reps)?;
    let support = target.support();
    let vol = support.volume();
    let opts = SamplerOptions::default();

    let results: Vec<Replication> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut stream = substream(seed, r as u64);
            let sampler_seed = stream.next_u64();

            let mut point = vec![0.0; support.dim()];
            let mut sum = 0.0;
            for _ in 0..n {
                stream.fill_uniform_box(support, &mut point);
                sum += target.field().eval(&point)?;
            }
            let volume_term = vol * sum / n as f64;

            let screened = srmc_sample_with(target, n, sampler_seed, &opts)?;
            let mut in_region = 0u64;
            for row in screened.rows() {
                in_region += indicator(region, row)? as u64;
            }
            Ok(Replication {
                volume_term,
                region_fraction: in_region as f64 / n as f64,
                in_region,
                proposals: screened.meta.proposals_drawn,
            })
        })
        .collect::<Result<_, IntegrateError>>()?;

    let values: Vec<f64> = results.iter().map(|r| r.volume_term * r.region_fraction).collect();
    let proposals: u64 = results.iter().map(|r| r.proposals).sum();
    let total = (n * reps) as u64;
    let (value, std_error) = IntegralEstimate::aggregate(values.clone());
    Ok(IntegralEstimate {
        value,
        replications: reps,
        per_replication_values: values,
        std_error,
        n_uniform: total,
        n_screened: total,
        n_in_region: results.iter().map(|r| r.in_region).sum(),
        screening: Some(ScreeningDetail {
            volume_terms: results.iter().map(|r| r.volume_term).collect(),
            region_fractions: results.iter().map(|r| r.region_fraction).collect(),
            bound_c: target.bound_c(),
            proposals_drawn: proposals,
            acceptance_rate: total as f64 / proposals as f64,
        }),
    })
}

/// Plain Monte Carlo estimate `vol * mean(g * 1_region)` over uniform points.
/// `g` may take either sign and is only evaluated inside the region.
pub fn integrate_direct(
    g: &ScalarField,
    region: &ExprAst,
    support: &BoundingBox,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<IntegralEstimate, IntegrateError> {
    check_inputs(g, region, support, n, reps)?;
    let vol = support.volume();
    let base = mix64(seed ^ DIRECT_SALT);
    let results: Vec<(f64, u64)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut stream: RandomStream = substream(base, r as u64);
            let mut point = vec![0.0; support.dim()];
            let (mut sum, mut hits) = (0.0, 0u64);
            for _ in 0..n {
                stream.fill_uniform_box(support, &mut point);
                if indicator(region, &point)? {
                    hits += 1;
                    sum += g.eval(&point)?;
                }
            }
            Ok((vol * sum / n as f64, hits))
        })
        .collect::<Result<_, IntegrateError>>()?;
    let values: Vec<f64> = results.iter().map(|r| r.0).collect();
    let (value, std_error) = IntegralEstimate::aggregate(values.clone());
    Ok(IntegralEstimate {
        value,
        replications: reps,
        per_replication_values: values,
        std_error,
        n_uniform: (n * reps) as u64,
        n_screened: 0,
        n_in_region: results.iter().map(|r| r.1).sum(),
        screening: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expression::{parse, VarOrder};

    fn xy() -> VarOrder {
        VarOrder::new(["x", "y"]).unwrap()
    }

    fn g(text: &str) -> ScalarField {
        ScalarField::parse(text, &xy()).unwrap()
    }

    fn region(text: &str) -> ExprAst {
        parse(text, &xy()).unwrap()
    }

    const D: &str = "y^2 <= x and y >= 0 and y >= x - 2";

    #[test]
    fn whole_box_region_gives_full_integral() {
        let b = BoundingBox::parse("0:4,0:2").unwrap();
        let est = integrate_screened(&g("x*y"), &region("x <= 4"), &b, 50_000, 4, 3).unwrap();
        let detail = est.screening.as_ref().unwrap();
        assert!(detail.region_fractions.iter().all(|&f| f == 1.0));
        assert_eq!(est.n_in_region, est.n_screened);
        assert!((est.value - 16.0).abs() < 0.3, "{}", est.value);
    }

    #[test]
    fn half_square_area() {
        let b = BoundingBox::parse("0:1,0:1").unwrap();
        let est = integrate_screened(&g("1"), &region("x <= 0.5"), &b, 20_000, 5, 9).unwrap();
        assert!((est.value - 0.5).abs() < 0.02);
        // a constant integrand makes the volume term exact
        assert!(est.screening.unwrap().volume_terms.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn example_two_small_n() {
        let b = BoundingBox::parse("0:4,0:2").unwrap();
        let est = integrate_screened(&g("x*y"), &region(D), &b, 100_000, 10, 1).unwrap();
        assert!((est.value - 6.0).abs() < 0.1, "{}", est.value);
        assert_eq!(est.per_replication_values.len(), 10);
        let mean = est.per_replication_values.iter().sum::<f64>() / 10.0;
        assert!((mean - est.value).abs() < 1e-12);
        assert!(est.n_in_region <= est.n_screened);
    }

    #[test]
    fn direct_estimator_basics() {
        let b = BoundingBox::parse("0:4,0:2").unwrap();
        let zero = integrate_direct(&g("x - x"), &region("x <= 4"), &b, 1000, 3, 1).unwrap();
        assert_eq!(zero.value, 0.0);
        assert!(zero.per_replication_values.iter().all(|&v| v == 0.0));
        let c = integrate_direct(&g("2.5"), &region("x <= 4"), &b, 1000, 3, 1).unwrap();
        assert!(c.per_replication_values.iter().all(|&v| v == 20.0));
        assert_eq!(c.std_error, Some(0.0));
        let est = integrate_direct(&g("x*y"), &region(D), &b, 200_000, 10, 5).unwrap();
        assert!((est.value - 6.0).abs() < 0.05);
    }

    #[test]
    fn direct_accepts_signed_integrands() {
        let b = BoundingBox::parse("-1:1,-1:1").unwrap();
        let est = integrate_direct(&g("x"), &region("x <= 1"), &b, 10_000, 2, 1).unwrap();
        assert!(est.value.abs() < 0.1);
        assert!(matches!(
            integrate_screened(&g("x"), &region("x <= 1"), &b, 100, 2, 1),
            Err(IntegrateError::NegativeIntegrand { .. })
        ));
    }

    #[test]
    fn nested_regions_are_monotone_at_fixed_seed() {
        let b = BoundingBox::parse("0:4,0:2").unwrap();
        let inner = integrate_screened(&g("x*y"), &region("x <= 1 and y <= 1"), &b, 20_000, 3, 8).unwrap();
        let mid = integrate_screened(&g("x*y"), &region("x <= 3 and y <= 1.5"), &b, 20_000, 3, 8).unwrap();
        let outer = integrate_screened(&g("x*y"), &region("x <= 4"), &b, 20_000, 3, 8).unwrap();
        assert!(inner.value <= mid.value && mid.value <= outer.value);
        for r in 0..3 {
            assert!(inner.per_replication_values[r] <= mid.per_replication_values[r]);
        }
    }

    #[test]
    fn region_must_be_an_indicator() {
        let b = BoundingBox::parse("0:1,0:1").unwrap();
        assert!(matches!(
            integrate_direct(&g("1"), &region("x"), &b, 100, 1, 1),
            Err(IntegrateError::NotIndicator { .. })
        ));
    }

    #[test]
    fn bad_requests() {
        let b = BoundingBox::parse("0:1,0:1").unwrap();
        assert_eq!(
            integrate_direct(&g("1"), &region("x <= 1"), &b, 0, 1, 1),
            Err(IntegrateError::EmptyRequest)
        );
        let other = parse("x <= 1", &VarOrder::new(["x", "z"]).unwrap()).unwrap();
        assert!(matches!(
            integrate_direct(&g("1"), &other, &b, 10, 1, 1),
            Err(IntegrateError::VariableMismatch { .. })
        ));
        assert_eq!(
            integrate_screened(&g("0*x"), &region("x <= 1"), &b, 10, 2, 1),
            Err(IntegrateError::ZeroIntegrand)
        );
        let single = integrate_direct(&g("1"), &region("x <= 1"), &b, 10, 1, 1).unwrap();
        assert_eq!(single.std_error, None);
    }
}

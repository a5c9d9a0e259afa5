//! Supports, targets and envelopes: the inputs the samplers consume.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expression::{self, EvalError, ExprAst, ExprError, VarOrder};
use crate::randomness::{make_stream, RandomStream};
use crate::samplers::{default_grid_per_dim, estimate_bound, BoundEstimate, DEFAULT_SAFETY};

/// Number of uniform probe points used by [`validate_target`].
pub const VALIDATION_PROBES: usize = 1_000;
/// Fixed seed for validation probes, so validation is deterministic.
pub const PROBE_SEED: u64 = 0x0005_EED0_FA11_C0DE;
/// Safety factor applied to grid maxima of piecewise envelopes.
pub const PIECEWISE_SAFETY: f64 = 1.2;
/// Sub-intervals per dimension when searching a cell for its maximum.
pub const CELL_REFINEMENT: usize = 8;
pub const MAX_CELLS: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("dimension mismatch: field has {field} variable(s), box has {support} dimension(s)")]
    DimensionMismatch { field: usize, support: usize },
    #[error("field value {value} at {point:?} is not finite")]
    NonFinite { point: Vec<f64>, value: f64 },
    #[error("field value {value} at {point:?} is negative")]
    Negative { point: Vec<f64>, value: f64 },
    #[error("envelope constant {bound} is violated at {point:?}, where f = {value}")]
    EnvelopeViolated {
        point: Vec<f64>,
        value: f64,
        bound: f64,
    },
    #[error("envelope constant must be finite and positive, got {0}")]
    InvalidBound(f64),
    #[error("field is zero everywhere on the search grid")]
    ZeroField,
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid search grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Parse(#[from] ExprError),
}

/// Axis-aligned hyper-rectangle with `lower < upper` on every axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundingBox {
    bounds: Vec<(f64, f64)>,
}

impl BoundingBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self, ModelError> {
        if bounds.is_empty() {
            return Err(ModelError::InvalidBox("no dimensions".into()));
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(ModelError::InvalidBox(format!("dimension {i} has a non-finite bound")));
            }
            if lo >= hi {
                return Err(ModelError::InvalidBox(format!(
                    "dimension {i}: lower {lo} is not below upper {hi}"
                )));
            }
        }
        let bx = Self { bounds };
        let vol = bx.volume();
        if !(vol.is_finite() && vol > 0.0) {
            return Err(ModelError::InvalidBox(format!("volume {vol} is not finite and positive")));
        }
        Ok(bx)
    }

    /// Parses `"lo:hi,lo:hi,..."`. Each bound may be a constant expression
    /// such as `3*pi/4`.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut bounds = Vec::new();
        for (i, pair) in text.split(',').enumerate() {
            let (lo, hi) = pair.split_once(':').ok_or_else(|| {
                ModelError::InvalidBox(format!("dimension {i}: expected `lo:hi`, found `{}`", pair.trim()))
            })?;
            let eval = |s: &str| {
                expression::parse_constant(s).map_err(|e| {
                    ModelError::InvalidBox(format!("dimension {i}: bad bound `{}`: {e}", s.trim()))
                })
            };
            bounds.push((eval(lo)?, eval(hi)?));
        }
        Self::new(bounds)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn lower(&self, i: usize) -> f64 {
        self.bounds[i].0
    }

    pub fn upper(&self, i: usize) -> f64 {
        self.bounds[i].1
    }

    pub fn width(&self, i: usize) -> f64 {
        self.bounds[i].1 - self.bounds[i].0
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    /// Half-open containment: `lower <= x < upper` on every axis.
    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(&self.bounds)
                .all(|(&x, &(lo, hi))| lo <= x && x < hi)
    }

    /// Box with the same centre and every side scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, ModelError> {
        let bounds = self
            .bounds
            .iter()
            .map(|&(lo, hi)| {
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo) * factor;
                (mid - half, mid + half)
            })
            .collect();
        Self::new(bounds)
    }

    /// Edge `i` of `bins` equal slices along axis `axis`. The outer edges are
    /// the box bounds exactly.
    pub fn edge(&self, axis: usize, bins: usize, i: usize) -> f64 {
        let (lo, hi) = self.bounds[axis];
        if i == 0 {
            lo
        } else if i >= bins {
            hi
        } else {
            lo + (hi - lo) * (i as f64 / bins as f64)
        }
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (lo, hi)) in self.bounds.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{lo}:{hi}")?;
        }
        Ok(())
    }
}

/// A real-valued expression over an ordered set of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    expr: ExprAst,
}

impl ScalarField {
    pub fn new(expr: ExprAst) -> Self {
        Self { expr }
    }

    pub fn parse(text: &str, vars: &VarOrder) -> Result<Self, ExprError> {
        expression::parse(text, vars).map(Self::new)
    }

    #[inline]
    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        self.expr.eval(point)
    }

    pub fn expr(&self) -> &ExprAst {
        &self.expr
    }

    pub fn vars(&self) -> &VarOrder {
        self.expr.vars()
    }

    pub fn dim(&self) -> usize {
        self.expr.dim()
    }

    fn check_dim(&self, support: &BoundingBox) -> Result<(), ModelError> {
        if self.dim() != support.dim() {
            return Err(ModelError::DimensionMismatch {
                field: self.dim(),
                support: support.dim(),
            });
        }
        Ok(())
    }

    /// Evaluates and checks the value is a finite, non-negative density value.
    pub(crate) fn density_at(&self, point: &[f64]) -> Result<f64, ModelError> {
        let value = self.eval(point)?;
        if !value.is_finite() {
            return Err(ModelError::NonFinite {
                point: point.to_vec(),
                value,
            });
        }
        if value < 0.0 {
            return Err(ModelError::Negative {
                point: point.to_vec(),
                value,
            });
        }
        Ok(value)
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}

/// A density on a box together with an envelope constant `c >= f`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    field: ScalarField,
    support: BoundingBox,
    bound_c: f64,
    estimated: Option<BoundEstimate>,
}

impl TargetSpec {
    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn support(&self) -> &BoundingBox {
        &self.support
    }

    pub fn bound_c(&self) -> f64 {
        self.bound_c
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    /// Grid search result when the bound was estimated rather than supplied.
    pub fn estimated(&self) -> Option<&BoundEstimate> {
        self.estimated.as_ref()
    }
}

/// Checks `field` on `support` against an envelope constant, estimating one
/// by grid search when `bound_c` is `None`.
///
/// The field is probed at [`VALIDATION_PROBES`] uniform points drawn from a
/// fixed stream; every probe must give a finite, non-negative value no larger
/// than the bound.
pub fn validate_target(
    field: ScalarField,
    support: BoundingBox,
    bound_c: Option<f64>,
) -> Result<TargetSpec, ModelError> {
    field.check_dim(&support)?;
    let (bound_c, estimated) = match bound_c {
        Some(c) => (c, None),
        None => {
            let est = estimate_bound(&field, &support, default_grid_per_dim(support.dim()), DEFAULT_SAFETY)?;
            if est.grid_max == 0.0 {
                return Err(ModelError::ZeroField);
            }
            (est.bound, Some(est))
        }
    };
    if !(bound_c.is_finite() && bound_c > 0.0) {
        return Err(ModelError::InvalidBound(bound_c));
    }
    let mut stream = make_stream(PROBE_SEED);
    let mut point = vec![0.0; support.dim()];
    for _ in 0..VALIDATION_PROBES {
        stream.fill_uniform_box(&support, &mut point);
        let value = field.density_at(&point)?;
        if value > bound_c {
            return Err(ModelError::EnvelopeViolated {
                point: point.clone(),
                value,
                bound: bound_c,
            });
        }
    }
    Ok(TargetSpec {
        field,
        support,
        bound_c,
        estimated,
    })
}

/// Plain Monte Carlo estimate of the share of a density's mass that falls
/// outside its sampling box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationEstimate {
    pub outer_box: String,
    pub probes: usize,
    pub outside_fraction: f64,
    pub std_error: f64,
}

/// Estimates the mass of `field` lying outside `support` by sampling
/// uniformly on the box scaled by `expand` about its centre. This only sees
/// mass inside the enlarged box, so it is a lower bound for heavy tails.
pub fn estimate_truncation_mass(
    field: &ScalarField,
    support: &BoundingBox,
    expand: f64,
    probes: usize,
    seed: u64,
) -> Result<TruncationEstimate, ModelError> {
    field.check_dim(support)?;
    if expand.is_nan() || expand <= 1.0 || probes == 0 {
        return Err(ModelError::InvalidBox("expansion must exceed 1 and probes must be positive".into()));
    }
    let outer = support.scaled(expand)?;
    let mut stream = RandomStream::new(seed);
    let mut point = vec![0.0; support.dim()];
    let mut values = Vec::with_capacity(probes);
    for _ in 0..probes {
        stream.fill_uniform_box(&outer, &mut point);
        let v = field.density_at(&point)?;
        let inside = point
            .iter()
            .zip(support.bounds())
            .all(|(&x, &(lo, hi))| lo <= x && x <= hi);
        values.push((v, !inside));
    }
    let total: f64 = values.iter().map(|(v, _)| v).sum();
    if total == 0.0 {
        return Err(ModelError::ZeroField);
    }
    let outside: f64 = values.iter().filter(|(_, out)| *out).map(|(v, _)| v).sum();
    let ratio = outside / total;
    // delta-method standard error of a ratio estimator
    let ss: f64 = values
        .iter()
        .map(|&(v, out)| {
            let r = v * (if out { 1.0 } else { 0.0 } - ratio);
            r * r
        })
        .sum();
    Ok(TruncationEstimate {
        outer_box: outer.to_string(),
        probes,
        outside_fraction: ratio,
        std_error: ss.sqrt() / total,
    })
}

/// Histogram-shaped envelope: constant height `h_k` on each cell of a regular
/// partition of the support.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseUniformProposal {
    support: BoundingBox,
    bins: Vec<usize>,
    heights: Vec<f64>,
    masses: Vec<f64>,
    cumulative: Vec<f64>,
}

impl PiecewiseUniformProposal {
    pub fn support(&self) -> &BoundingBox {
        &self.support
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn cell_count(&self) -> usize {
        self.heights.len()
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    pub fn max_height(&self) -> f64 {
        self.heights.iter().copied().fold(0.0, f64::max)
    }

    /// Row-major multi-index of cell `k` (last axis fastest).
    pub fn cell_coords(&self, k: usize) -> Vec<usize> {
        cell_coords(&self.bins, k)
    }

    /// Closed bounds `(lo, hi)` of cell `k` on each axis.
    pub fn cell_bounds(&self, k: usize) -> Vec<(f64, f64)> {
        self.cell_coords(k)
            .iter()
            .enumerate()
            .map(|(axis, &i)| {
                let b = self.bins[axis];
                (self.support.edge(axis, b, i), self.support.edge(axis, b, i + 1))
            })
            .collect()
    }

    /// Cell containing `point`, clamping coordinates that sit on the upper
    /// edge. `None` when the point is outside the support.
    pub fn cell_of(&self, point: &[f64]) -> Option<usize> {
        cell_of(&self.support, &self.bins, point)
    }

    pub fn height_at(&self, point: &[f64]) -> Option<f64> {
        self.cell_of(point).map(|k| self.heights[k])
    }

    /// Inverse-CDF cell selection: the first cell whose cumulative mass
    /// exceeds `u * M`. Zero-mass cells are never returned.
    #[inline]
    pub fn select_cell(&self, u: f64) -> usize {
        let target = u * self.total_mass();
        let k = self.cumulative.partition_point(|&c| c <= target);
        k.min(self.cumulative.len() - 1)
    }
}

pub(crate) fn cell_coords(bins: &[usize], mut k: usize) -> Vec<usize> {
    let mut coords = vec![0; bins.len()];
    for axis in (0..bins.len()).rev() {
        coords[axis] = k % bins[axis];
        k /= bins[axis];
    }
    coords
}

pub(crate) fn cell_of(support: &BoundingBox, bins: &[usize], point: &[f64]) -> Option<usize> {
    if point.len() != support.dim() {
        return None;
    }
    let mut k = 0;
    for (axis, &x) in point.iter().enumerate() {
        let (lo, hi) = support.bounds()[axis];
        if !(lo <= x && x <= hi) {
            return None;
        }
        let b = bins[axis];
        let mut i = (((x - lo) / (hi - lo)) * b as f64) as usize;
        i = i.min(b - 1);
        // the float guess can be off by one near an edge
        while i > 0 && x < support.edge(axis, b, i) {
            i -= 1;
        }
        while i + 1 < b && x >= support.edge(axis, b, i + 1) {
            i += 1;
        }
        k = k * b + i;
    }
    Some(k)
}

/// Builds a piecewise-uniform envelope for `field` over `support`.
///
/// Each cell's height is the maximum of `field` over a grid of
/// `(CELL_REFINEMENT + 1)^d` nodes spanning the cell (corners and centre
/// included), times [`PIECEWISE_SAFETY`]. Cells whose grid maximum is zero get
/// zero height and zero mass.
pub fn build_piecewise_proposal(
    field: &ScalarField,
    support: &BoundingBox,
    bins_per_dim: &[usize],
) -> Result<PiecewiseUniformProposal, ModelError> {
    field.check_dim(support)?;
    if bins_per_dim.len() != support.dim() {
        return Err(ModelError::InvalidPartition(format!(
            "{} bin counts given for {} dimensions",
            bins_per_dim.len(),
            support.dim()
        )));
    }
    if bins_per_dim.contains(&0) {
        return Err(ModelError::InvalidPartition("every dimension needs at least one bin".into()));
    }
    let cells = bins_per_dim
        .iter()
        .try_fold(1usize, |acc, &b| acc.checked_mul(b))
        .filter(|&c| c <= MAX_CELLS)
        .ok_or_else(|| ModelError::InvalidPartition(format!("more than {MAX_CELLS} cells")))?;

    let d = support.dim();
    let nodes = CELL_REFINEMENT + 1;
    let per_cell = nodes.pow(d as u32);
    let bins = bins_per_dim.to_vec();

    let heights: Vec<f64> = (0..cells)
        .into_par_iter()
        .map(|k| {
            let coords = cell_coords(&bins, k);
            let cell: Vec<(f64, f64)> = coords
                .iter()
                .enumerate()
                .map(|(axis, &i)| (support.edge(axis, bins[axis], i), support.edge(axis, bins[axis], i + 1)))
                .collect();
            let mut point = vec![0.0; d];
            let mut best = 0.0f64;
            for j in 0..per_cell {
                let mut rem = j;
                for axis in (0..d).rev() {
                    let t = rem % nodes;
                    rem /= nodes;
                    let (lo, hi) = cell[axis];
                    point[axis] = if t == CELL_REFINEMENT {
                        hi
                    } else {
                        lo + (hi - lo) * (t as f64 / CELL_REFINEMENT as f64)
                    };
                }
                best = best.max(field.density_at(&point)?);
            }
            Ok(best * PIECEWISE_SAFETY)
        })
        .collect::<Result<_, ModelError>>()?;

    let masses: Vec<f64> = (0..cells)
        .map(|k| {
            if heights[k] == 0.0 {
                return 0.0;
            }
            let coords = cell_coords(&bins, k);
            let vol: f64 = coords
                .iter()
                .enumerate()
                .map(|(axis, &i)| support.edge(axis, bins[axis], i + 1) - support.edge(axis, bins[axis], i))
                .product();
            heights[k] * vol
        })
        .collect();
    let cumulative: Vec<f64> = masses
        .iter()
        .scan(0.0, |acc, &m| {
            *acc += m;
            Some(*acc)
        })
        .collect();
    if *cumulative.last().unwrap() == 0.0 {
        return Err(ModelError::ZeroField);
    }
    Ok(PiecewiseUniformProposal {
        support: support.clone(),
        bins,
        heights,
        masses,
        cumulative,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub requested_n: u64,
    pub proposals_drawn: u64,
    pub accepted: u64,
    pub acceptance_rate: f64,
    pub bound_c: f64,
    /// Proposals where the density exceeded the envelope; nonzero means the
    /// envelope constant was too small.
    pub envelope_violations: u64,
    #[serde(skip)]
    pub wall_time_ms: f64,
}

/// Accepted draws in acceptance order, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    dims: usize,
    points: Vec<f64>,
    pub meta: RunMetadata,
}

impl SampleBatch {
    pub fn new(dims: usize, points: Vec<f64>, meta: RunMetadata) -> Self {
        assert!(dims > 0 && points.len().is_multiple_of(dims));
        Self { dims, points, meta }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.dims..(i + 1) * self.dims]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dims)
    }

    /// Values of coordinate `axis` across all rows.
    pub fn column(&self, axis: usize) -> Vec<f64> {
        self.rows().map(|r| r[axis]).collect()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.points
    }
}

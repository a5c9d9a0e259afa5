//! Rejection samplers and envelope-constant estimation.
//!
//! Both samplers split the requested sample size into chunks of
//! [`CHUNK_SIZE`] acceptances. Chunk `k` draws from `substream(seed, k)` and
//! chunk outputs are concatenated in chunk order, so a batch is a pure
//! function of `(target, n, seed)` whatever the thread count.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expression::EvalError;
use crate::model::{
    BoundingBox, ModelError, PiecewiseUniformProposal, RunMetadata, SampleBatch, ScalarField, TargetSpec,
};
use crate::randomness::{affine, substream, RandomStream};

pub const CHUNK_SIZE: usize = 4096;
/// Observers are called each time the running proposal count passes a
/// multiple of this interval.
pub const PROGRESS_INTERVAL: u64 = 1 << 16;
pub const DEFAULT_SAFETY: f64 = 1.2;
pub const DEFAULT_RATE_FLOOR: f64 = 1e-6;
pub const MAX_GRID_POINTS: usize = 1 << 22;
const MIN_BUDGET: f64 = 1e4;
const BUDGET_FACTOR: f64 = 1000.0;
const FLUSH_EVERY: u64 = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error(
        "proposal budget exhausted after {proposals_drawn} proposals \
         ({accepted} accepted, acceptance rate {acceptance_rate:.3e}); the envelope is too loose \
         or the density is nearly zero on the box"
    )]
    BudgetExhausted {
        proposals_drawn: u64,
        accepted: u64,
        acceptance_rate: f64,
    },
    #[error("sample size must be at least 1")]
    EmptyRequest,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Progress {
    pub proposals_drawn: u64,
    pub accepted: u64,
}

/// Knobs shared by both samplers.
#[derive(Clone, Copy)]
pub struct SamplerOptions<'a> {
    /// Lower clamp for the running acceptance rate in the budget formula
    /// `max(1e4, 1000 * n / max(rate, rate_floor))`.
    pub rate_floor: f64,
    /// Read-only progress observer.
    pub observer: Option<&'a (dyn Fn(Progress) + Sync)>,
}

impl Default for SamplerOptions<'_> {
    fn default() -> Self {
        Self {
            rate_floor: DEFAULT_RATE_FLOOR,
            observer: None,
        }
    }
}

impl std::fmt::Debug for SamplerOptions<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SamplerOptions")
            .field("rate_floor", &self.rate_floor)
            .field("observer", &self.observer.is_some())
            .finish()
    }
}

/// Result of a grid search for the maximum of a field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundEstimate {
    /// `safety * grid_max`.
    pub bound: f64,
    pub grid_max: f64,
    pub argmax: Vec<f64>,
    pub grid_per_dim: usize,
    pub safety: f64,
}

/// Grid size used when a bound has to be estimated without guidance: the
/// largest odd count not above 1025 with at most 2^20 points in total.
pub fn default_grid_per_dim(dim: usize) -> usize {
    let per = (2f64.powf(20.0 / dim as f64)).floor() as usize;
    let mut g = per.clamp(3, 1025);
    if g.is_multiple_of(2) {
        g -= 1;
    }
    g
}

/// `safety` times the maximum of `field` over a regular grid of
/// `grid_per_dim` points per axis, box corners included. Ties go to the
/// lowest row-major grid index.
pub fn estimate_bound(
    field: &ScalarField,
    support: &BoundingBox,
    grid_per_dim: usize,
    safety: f64,
) -> Result<BoundEstimate, ModelError> {
    let d = support.dim();
    if field.dim() != d {
        return Err(ModelError::DimensionMismatch {
            field: field.dim(),
            support: d,
        });
    }
    if grid_per_dim < 2 {
        return Err(ModelError::InvalidGrid("need at least 2 points per dimension".into()));
    }
    if !(safety >= 1.0 && safety.is_finite()) {
        return Err(ModelError::InvalidGrid(format!("safety factor {safety} must be at least 1")));
    }
    let total = (0..d)
        .try_fold(1usize, |acc, _| acc.checked_mul(grid_per_dim))
        .filter(|&t| t <= MAX_GRID_POINTS)
        .ok_or_else(|| ModelError::InvalidGrid(format!("more than {MAX_GRID_POINTS} grid points")))?;

    let node = |axis: usize, t: usize| -> f64 {
        let (lo, hi) = support.bounds()[axis];
        if t + 1 == grid_per_dim {
            hi
        } else {
            lo + (hi - lo) * (t as f64 / (grid_per_dim - 1) as f64)
        }
    };
    let point_at = |mut j: usize, out: &mut [f64]| {
        for axis in (0..d).rev() {
            out[axis] = node(axis, j % grid_per_dim);
            j /= grid_per_dim;
        }
    };

    const BLOCK: usize = 4096;
    let blocks = total.div_ceil(BLOCK);
    let partial: Vec<(f64, usize)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut point = vec![0.0; d];
            let mut best = (f64::NEG_INFINITY, 0usize);
            for j in b * BLOCK..((b + 1) * BLOCK).min(total) {
                point_at(j, &mut point);
                let v = field.density_at(&point)?;
                if v > best.0 {
                    best = (v, j);
                }
            }
            Ok(best)
        })
        .collect::<Result<_, ModelError>>()?;
    let (grid_max, j) = partial
        .into_iter()
        .fold((f64::NEG_INFINITY, 0), |acc, b| if b.0 > acc.0 { b } else { acc });
    let mut argmax = vec![0.0; d];
    point_at(j, &mut argmax);
    Ok(BoundEstimate {
        bound: safety * grid_max,
        grid_max,
        argmax,
        grid_per_dim,
        safety,
    })
}

struct Draw {
    accepted: bool,
    violated: bool,
    /// The comparison variate: `c * u` for SRMC, `u` for the general sampler.
    y: f64,
}

trait Proposer: Sync {
    fn dim(&self) -> usize;
    fn bound(&self) -> f64;
    fn propose(&self, stream: &mut RandomStream, x: &mut [f64], scratch: &mut Vec<usize>)
        -> Result<Draw, EvalError>;
}

struct Simple<'a> {
    target: &'a TargetSpec,
}

impl Proposer for Simple<'_> {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn bound(&self) -> f64 {
        self.target.bound_c()
    }

    #[inline]
    fn propose(&self, stream: &mut RandomStream, x: &mut [f64], _: &mut Vec<usize>) -> Result<Draw, EvalError> {
        stream.fill_uniform_box(self.target.support(), x);
        let c = self.target.bound_c();
        let y = c * stream.uniform01();
        let f = self.target.field().eval(x)?;
        Ok(Draw {
            accepted: f > y,
            violated: f > c,
            y,
        })
    }
}

struct Piecewise<'a> {
    field: &'a ScalarField,
    proposal: &'a PiecewiseUniformProposal,
}

impl Proposer for Piecewise<'_> {
    fn dim(&self) -> usize {
        self.proposal.support().dim()
    }

    fn bound(&self) -> f64 {
        self.proposal.max_height()
    }

    #[inline]
    fn propose(
        &self,
        stream: &mut RandomStream,
        x: &mut [f64],
        coords: &mut Vec<usize>,
    ) -> Result<Draw, EvalError> {
        let p = self.proposal;
        // a single cell needs no selection draw, which keeps this sampler
        // draw-for-draw identical to SRMC in that case
        let k = if p.cell_count() == 1 {
            0
        } else {
            p.select_cell(stream.uniform01())
        };
        let bins = p.bins();
        let support = p.support();
        coords.clear();
        coords.resize(bins.len(), 0);
        let mut rem = k;
        for axis in (0..bins.len()).rev() {
            coords[axis] = rem % bins[axis];
            rem /= bins[axis];
        }
        for (axis, slot) in x.iter_mut().enumerate() {
            let (b, i) = (bins[axis], coords[axis]);
            *slot = affine(support.edge(axis, b, i), support.edge(axis, b, i + 1), stream.uniform01());
        }
        let u = stream.uniform01();
        let f = self.field.eval(x)?;
        let h = p.heights()[k];
        Ok(Draw {
            accepted: f / h >= u,
            violated: f > h,
            y: u,
        })
    }
}

struct Tally {
    proposals: u64,
    accepted: u64,
    next_report: u64,
    failure: Option<SampleError>,
}

struct Shared<'a> {
    tally: Mutex<Tally>,
    abort: AtomicBool,
    observer: Option<&'a (dyn Fn(Progress) + Sync)>,
}

// Marker for chunks that stopped because another chunk failed.
struct Aborted;

impl Shared<'_> {
    fn flush(&self, proposals: u64, accepted: u64) -> Result<(), Aborted> {
        let mut t = self.tally.lock().unwrap();
        if self.abort.load(Ordering::Relaxed) {
            return Err(Aborted);
        }
        t.proposals += proposals;
        t.accepted += accepted;
        if let Some(obs) = self.observer {
            if t.proposals >= t.next_report {
                obs(Progress {
                    proposals_drawn: t.proposals,
                    accepted: t.accepted,
                });
                t.next_report = (t.proposals / PROGRESS_INTERVAL + 1) * PROGRESS_INTERVAL;
            }
        }
        Ok(())
    }

    fn fail(&self, err: SampleError, proposals: u64, accepted: u64) -> Aborted {
        let mut t = self.tally.lock().unwrap();
        if t.failure.is_some() {
            return Aborted;
        }
        t.proposals += proposals;
        t.accepted += accepted;
        let err = match err {
            SampleError::BudgetExhausted { .. } => SampleError::BudgetExhausted {
                proposals_drawn: t.proposals,
                accepted: t.accepted,
                acceptance_rate: t.accepted as f64 / t.proposals as f64,
            },
            other => other,
        };
        if let Some(obs) = self.observer {
            obs(Progress {
                proposals_drawn: t.proposals,
                accepted: t.accepted,
            });
        }
        t.failure = Some(err);
        self.abort.store(true, Ordering::Relaxed);
        Aborted
    }
}

struct ChunkOut {
    points: Vec<f64>,
    proposals: u64,
    violations: u64,
}

#[inline]
fn budget_exceeded(proposals: u64, accepted: u64, wanted: usize, floor: f64) -> bool {
    let rate = accepted as f64 / proposals as f64;
    let limit = MIN_BUDGET.max(BUDGET_FACTOR * wanted as f64 / rate.max(floor));
    proposals as f64 > limit
}

fn run_chunk<P: Proposer>(
    proposer: &P,
    seed: u64,
    chunk: usize,
    wanted: usize,
    opts: &SamplerOptions<'_>,
    shared: &Shared<'_>,
) -> Result<ChunkOut, Aborted> {
    let d = proposer.dim();
    let mut stream = substream(seed, chunk as u64);
    let mut x = vec![0.0; d];
    let mut scratch = Vec::with_capacity(d);
    let mut points = Vec::with_capacity(wanted * d);
    let (mut proposals, mut accepted, mut violations) = (0u64, 0u64, 0u64);
    let (mut pend_prop, mut pend_acc) = (0u64, 0u64);
    while (accepted as usize) < wanted {
        let draw = match proposer.propose(&mut stream, &mut x, &mut scratch) {
            Ok(d) => d,
            Err(e) => return Err(shared.fail(e.into(), pend_prop, pend_acc)),
        };
        proposals += 1;
        pend_prop += 1;
        violations += draw.violated as u64;
        if draw.accepted {
            points.extend_from_slice(&x);
            accepted += 1;
            pend_acc += 1;
        } else if budget_exceeded(proposals, accepted, wanted, opts.rate_floor) {
            let err = SampleError::BudgetExhausted {
                proposals_drawn: 0,
                accepted: 0,
                acceptance_rate: 0.0,
            };
            return Err(shared.fail(err, pend_prop, pend_acc));
        }
        if pend_prop == FLUSH_EVERY {
            shared.flush(pend_prop, pend_acc)?;
            pend_prop = 0;
            pend_acc = 0;
        }
    }
    shared.flush(pend_prop, pend_acc)?;
    Ok(ChunkOut {
        points,
        proposals,
        violations,
    })
}

fn run<P: Proposer>(proposer: &P, n: usize, seed: u64, opts: &SamplerOptions<'_>) -> Result<SampleBatch, SampleError> {
    if n == 0 {
        return Err(SampleError::EmptyRequest);
    }
    let start = Instant::now();
    let shared = Shared {
        tally: Mutex::new(Tally {
            proposals: 0,
            accepted: 0,
            next_report: PROGRESS_INTERVAL,
            failure: None,
        }),
        abort: AtomicBool::new(false),
        observer: opts.observer,
    };
    let chunks = n.div_ceil(CHUNK_SIZE);
    let outs: Vec<Result<ChunkOut, Aborted>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let wanted = CHUNK_SIZE.min(n - k * CHUNK_SIZE);
            run_chunk(proposer, seed, k, wanted, opts, &shared)
        })
        .collect();
    if let Some(err) = shared.tally.into_inner().unwrap().failure {
        return Err(err);
    }
    let d = proposer.dim();
    let mut points = Vec::with_capacity(n * d);
    let (mut proposals, mut violations) = (0u64, 0u64);
    for out in outs {
        let out = out.unwrap_or_else(|_| unreachable!("aborted chunk without a recorded failure"));
        points.extend_from_slice(&out.points);
        proposals += out.proposals;
        violations += out.violations;
    }
    let meta = RunMetadata {
        seed,
        requested_n: n as u64,
        proposals_drawn: proposals,
        accepted: n as u64,
        acceptance_rate: n as f64 / proposals as f64,
        bound_c: proposer.bound(),
        envelope_violations: violations,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok(SampleBatch::new(d, points, meta))
}

/// Simple rejection sampling: uniform proposals on the support box, accepted
/// when `f(x) > c * u`.
pub fn srmc_sample(target: &TargetSpec, n: usize, seed: u64) -> Result<SampleBatch, SampleError> {
    srmc_sample_with(target, n, seed, &SamplerOptions::default())
}

pub fn srmc_sample_with(
    target: &TargetSpec,
    n: usize,
    seed: u64,
    opts: &SamplerOptions<'_>,
) -> Result<SampleBatch, SampleError> {
    run(&Simple { target }, n, seed, opts)
}

/// General rejection sampling with a piecewise-uniform proposal: pick a cell
/// with probability proportional to its mass, draw uniformly inside it, and
/// accept when `f(x) / h_k >= u`.
pub fn grmc_sample(
    field: &ScalarField,
    proposal: &PiecewiseUniformProposal,
    n: usize,
    seed: u64,
) -> Result<SampleBatch, SampleError> {
    grmc_sample_with(field, proposal, n, seed, &SamplerOptions::default())
}

pub fn grmc_sample_with(
    field: &ScalarField,
    proposal: &PiecewiseUniformProposal,
    n: usize,
    seed: u64,
    opts: &SamplerOptions<'_>,
) -> Result<SampleBatch, SampleError> {
    if field.dim() != proposal.support().dim() {
        return Err(ModelError::DimensionMismatch {
            field: field.dim(),
            support: proposal.support().dim(),
        }
        .into());
    }
    run(&Piecewise { field, proposal }, n, seed, opts)
}

/// One SRMC proposal and its fate.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub point: Vec<f64>,
    pub y: f64,
    pub accepted: bool,
}

/// Replays the first `proposals` proposals of chunk 0 of an SRMC run with
/// `seed`, keeping rejected ones too. Accepted records coincide with the
/// leading rows of `srmc_sample(target, n, seed)`.
pub fn srmc_trace(target: &TargetSpec, proposals: usize, seed: u64) -> Result<Vec<TraceRecord>, SampleError> {
    let proposer = Simple { target };
    let mut stream = substream(seed, 0);
    let mut x = vec![0.0; target.dim()];
    let mut scratch = Vec::new();
    (0..proposals)
        .map(|_| {
            let draw = proposer.propose(&mut stream, &mut x, &mut scratch)?;
            Ok(TraceRecord {
                point: x.clone(),
                y: draw.y,
                accepted: draw.accepted,
            })
        })
        .collect()
}

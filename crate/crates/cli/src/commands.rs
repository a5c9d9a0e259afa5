use std::hash::{BuildHasher, Hasher};
use std::io::IsTerminal;
use std::path::PathBuf;
use std::time::Instant;

use rmc_core::expression::{parse, ExprAst, VarOrder};
use rmc_core::integrator::{integrate_direct, integrate_screened, IntegralEstimate};
use rmc_core::model::{
    build_piecewise_proposal, estimate_truncation_mass, validate_target, BoundingBox, RunMetadata, SampleBatch,
    ScalarField, TargetSpec, TruncationEstimate,
};
use rmc_core::randomness::{mix64, parse_seed};
use rmc_core::samplers::{
    default_grid_per_dim, estimate_bound, grmc_sample_with, srmc_sample_with, srmc_trace, BoundEstimate, Progress,
    SamplerOptions,
};
use rmc_core::stats::{chi_square_box, ks_test_1d, Alpha, GofReport};
use serde::Serialize;

use crate::args::{BoundArgs, IntegrateArgs, Method, Model, SampleArgs, Sampler, Seeding, ValidateArgs};
use crate::error::{CliError, EXIT_VALIDATION};
use crate::output::{to_pretty, write_csv, write_json, write_text, SCHEMA_VERSION};
use crate::svg;

const TRUNCATION_EXPAND: f64 = 2.0;
const TRUNCATION_PROBES: usize = 100_000;
const TRUNCATION_WARN: f64 = 1e-3;
const PLOT_PROPOSALS: usize = 2_000;
const CURVE_POINTS: usize = 400;

struct Setup {
    vars: VarOrder,
    support: BoundingBox,
}

fn setup(model: &Model) -> Result<Setup, CliError> {
    let vars = VarOrder::parse_list(&model.vars).map_err(|e| CliError::usage(e.to_string()))?;
    let support = BoundingBox::parse(&model.bounds).map_err(|e| CliError::usage(format!("--box: {e}")))?;
    if vars.dim() != support.dim() {
        return Err(CliError::usage(format!(
            "--vars names {} variable(s) but --box has {} axis bound(s)",
            vars.dim(),
            support.dim()
        )));
    }
    Ok(Setup { vars, support })
}

fn field(what: &str, text: &str, vars: &VarOrder) -> Result<ScalarField, CliError> {
    ScalarField::parse(text, vars).map_err(|e| CliError::parse(what, text, &e))
}

fn resolve_seed(seeding: &mut Seeding) -> Result<u64, CliError> {
    if seeding.auto_seed {
        let mut h = std::collections::hash_map::RandomState::new().build_hasher();
        h.write_u128(std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_nanos()));
        let seed = mix64(h.finish());
        seeding.seed = seed.to_string();
        return Ok(seed);
    }
    parse_seed(&seeding.seed).ok_or_else(|| CliError::usage(format!("--seed: `{}` is not a 64-bit unsigned integer", seeding.seed)))
}

fn parse_bins(text: &str, dim: usize) -> Result<Vec<usize>, CliError> {
    let bins: Vec<usize> = text
        .split(',')
        .map(|t| t.trim().parse::<usize>().ok().filter(|&b| b > 0))
        .collect::<Option<_>>()
        .ok_or_else(|| CliError::usage(format!("--bins: `{text}` is not a list of positive counts")))?;
    match bins.len() {
        1 => Ok(vec![bins[0]; dim]),
        n if n == dim => Ok(bins),
        n => Err(CliError::usage(format!("--bins has {n} entries for a {dim}-dimensional box"))),
    }
}

fn check_n(n: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::usage("--n must be at least 1"));
    }
    Ok(())
}

fn report_progress(p: Progress) {
    eprint!("\r{} proposals, {} accepted", p.proposals_drawn, p.accepted);
}

/// Outcome of the sampling stage shared by `sample` and `validate`.
struct Drawn {
    batch: SampleBatch,
    method: &'static str,
    target: Option<TargetSpec>,
}

fn draw(field: &ScalarField, support: &BoundingBox, sampler: &Sampler, n: usize, seed: u64) -> Result<Drawn, CliError> {
    if !(sampler.min_rate > 0.0 && sampler.min_rate <= 1.0) {
        return Err(CliError::usage("--min-rate must lie in (0, 1]"));
    }
    let tty = std::io::stderr().is_terminal();
    let observer = report_progress;
    let opts = SamplerOptions {
        rate_floor: sampler.min_rate,
        observer: tty.then_some(&observer as &(dyn Fn(Progress) + Sync)),
    };
    let out = match &sampler.bins {
        Some(text) => {
            let bins = parse_bins(text, support.dim())?;
            let proposal = build_piecewise_proposal(field, support, &bins)?;
            Drawn {
                batch: grmc_sample_with(field, &proposal, n, seed, &opts)?,
                method: "grmc",
                target: None,
            }
        }
        None => {
            let target = validate_target(field.clone(), support.clone(), sampler.bound)?;
            Drawn {
                batch: srmc_sample_with(&target, n, seed, &opts)?,
                method: "srmc",
                target: Some(target),
            }
        }
    };
    if tty {
        eprintln!();
    }
    Ok(out)
}

#[derive(Serialize)]
struct SampleMeta<'a, C: Serialize> {
    schema_version: u32,
    command: &'static str,
    config: &'a C,
    method: &'static str,
    #[serde(flatten)]
    run: &'a RunMetadata,
    #[serde(skip_serializing_if = "Option::is_none")]
    bound_estimate: Option<&'a BoundEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truncation: Option<TruncationEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gof: Option<&'a GofReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_ms: Option<f64>,
}

fn default_meta_path(out: &std::path::Path) -> PathBuf {
    out.with_extension("json")
}

pub fn sample(mut args: SampleArgs) -> Result<i32, CliError> {
    let start = Instant::now();
    check_n(args.n)?;
    let Setup { vars, support } = setup(&args.model)?;
    let seed = resolve_seed(&mut args.seeding)?;
    let f = field("--density", &args.density, &vars)?;
    if args.plot.is_some() && (support.dim() > 2 || (support.dim() == 1 && args.sampler.bins.is_some())) {
        return Err(CliError::usage("--plot supports two-dimensional boxes, or one-dimensional ones without --bins"));
    }

    let drawn = draw(&f, &support, &args.sampler, args.n, seed)?;
    let batch = &drawn.batch;
    let truncation = if args.truncation_check {
        let est = estimate_truncation_mass(&f, &support, TRUNCATION_EXPAND, TRUNCATION_PROBES, mix64(seed))?;
        if est.outside_fraction > TRUNCATION_WARN {
            eprintln!(
                "warning: about {:.3}% of the density's mass within {} lies outside the box; samples follow the truncated density",
                100.0 * est.outside_fraction,
                est.outer_box
            );
        }
        Some(est)
    } else {
        None
    };

    write_csv(&args.out, vars.names(), batch)?;
    let meta_path = args.meta.clone().unwrap_or_else(|| default_meta_path(&args.out));
    let wall = start.elapsed().as_secs_f64() * 1e3;
    write_json(
        &meta_path,
        &SampleMeta {
            schema_version: SCHEMA_VERSION,
            command: "sample",
            config: &args,
            method: drawn.method,
            run: &batch.meta,
            bound_estimate: drawn.target.as_ref().and_then(|t| t.estimated()),
            truncation,
            gof: None,
            wall_time_ms: args.timing.then_some(wall),
        },
    )?;

    if let Some(path) = &args.plot {
        let text = match support.dim() {
            2 => {
                let names = vars.names();
                svg::scatter(
                    [&names[0], &names[1]],
                    support.bounds()[0],
                    support.bounds()[1],
                    batch.rows().map(|r| [r[0], r[1]]),
                )
            }
            _ => proposal_plot(&vars, drawn.target.as_ref().expect("simple sampler target"), seed)?,
        };
        write_text(path, &text)?;
    }

    let m = &batch.meta;
    println!(
        "{} samples from {} proposals (acceptance rate {:.6}, c = {}) -> {}",
        m.accepted,
        m.proposals_drawn,
        m.acceptance_rate,
        m.bound_c,
        args.out.display()
    );
    if m.envelope_violations > 0 {
        eprintln!("warning: density exceeded the envelope at {} proposal(s); raise --bound", m.envelope_violations);
    }
    eprintln!("wall time {wall:.1} ms");
    Ok(0)
}

fn proposal_plot(vars: &VarOrder, target: &TargetSpec, seed: u64) -> Result<String, CliError> {
    let trace = srmc_trace(target, PLOT_PROPOSALS, seed)?;
    let points: Vec<(f64, f64, bool)> = trace.iter().map(|t| (t.point[0], t.y, t.accepted)).collect();
    let (lo, hi) = target.support().bounds()[0];
    let mut curve = Vec::with_capacity(CURVE_POINTS + 1);
    for i in 0..=CURVE_POINTS {
        let x = if i == CURVE_POINTS { hi } else { lo + (hi - lo) * i as f64 / CURVE_POINTS as f64 };
        if let Ok(v) = target.field().eval(&[x]) {
            curve.push((x, v.min(target.bound_c())));
        }
    }
    Ok(svg::proposals(&vars.names()[0], (lo, hi), target.bound_c(), &points, &curve))
}

#[derive(Serialize)]
struct IntegrateMeta<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a IntegrateArgs,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    proposals_drawn: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    accepted: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    acceptance_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bound_c: Option<f64>,
    #[serde(flatten)]
    estimate: &'a IntegralEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_ms: Option<f64>,
}

pub fn integrate(mut args: IntegrateArgs) -> Result<i32, CliError> {
    let start = Instant::now();
    check_n(args.n)?;
    if args.reps == 0 {
        return Err(CliError::usage("--reps must be at least 1"));
    }
    let Setup { vars, support } = setup(&args.model)?;
    let seed = resolve_seed(&mut args.seeding)?;
    let g = field("--integrand", &args.integrand, &vars)?;
    let region: ExprAst = parse(&args.region, &vars).map_err(|e| CliError::parse("--region", &args.region, &e))?;
    if !region.is_indicator() {
        return Err(CliError::usage(
            "--region must be a comparison or a conjunction of comparisons, e.g. \"x >= 0 and y <= x\"",
        ));
    }
    let est = match args.method {
        Method::Screened => integrate_screened(&g, &region, &support, args.n, args.reps, seed)?,
        Method::Direct => integrate_direct(&g, &region, &support, args.n, args.reps, seed)?,
    };
    let detail = est.screening.as_ref();
    let wall = start.elapsed().as_secs_f64() * 1e3;
    write_json(
        &args.meta,
        &IntegrateMeta {
            schema_version: SCHEMA_VERSION,
            command: "integrate",
            config: &args,
            seed,
            proposals_drawn: detail.map(|d| d.proposals_drawn),
            accepted: detail.map(|_| est.n_screened),
            acceptance_rate: detail.map(|d| d.acceptance_rate),
            bound_c: detail.map(|d| d.bound_c),
            estimate: &est,
            wall_time_ms: args.timing.then_some(wall),
        },
    )?;
    match est.std_error {
        Some(se) => println!("{} ± {}", est.value, se),
        None => println!("{}", est.value),
    }
    eprintln!("wall time {wall:.1} ms");
    Ok(0)
}

pub fn validate(mut args: ValidateArgs) -> Result<i32, CliError> {
    check_n(args.n)?;
    let Setup { vars, support } = setup(&args.model)?;
    let seed = resolve_seed(&mut args.seeding)?;
    let f = field("--density", &args.density, &vars)?;
    let alpha = Alpha::from_level(args.alpha).ok_or_else(|| CliError::usage("--alpha must be 0.05 or 0.01"))?;

    let report = if support.dim() == 1 {
        let cdf_text = args.cdf.as_deref().ok_or_else(|| CliError::usage("--cdf is required for one-dimensional targets"))?;
        let cdf = parse(cdf_text, &vars).map_err(|e| CliError::parse("--cdf", cdf_text, &e))?;
        let drawn = draw(&f, &support, &args.sampler, args.n, seed)?;
        let mut xs = drawn.batch.column(0);
        xs.sort_by(f64::total_cmp);
        let report = ks_test_1d(&xs, |x| cdf.eval(&[x]), alpha)?;
        (drawn, report)
    } else {
        if args.gof_bins == 0 {
            return Err(CliError::usage("--gof-bins must be at least 1"));
        }
        let reference = match &args.reference {
            Some(text) => Some(field("--reference", text, &vars)?),
            None => None,
        };
        let drawn = draw(&f, &support, &args.sampler, args.n, seed)?;
        let target = match (reference, &drawn.target) {
            (None, Some(t)) => t.clone(),
            (Some(r), _) => validate_target(r, support.clone(), None)?,
            (None, None) => validate_target(f.clone(), support.clone(), None)?,
        };
        let report = chi_square_box(&drawn.batch, &target, &vec![args.gof_bins; support.dim()])?;
        (drawn, report)
    };
    let (drawn, report) = report;

    if let Some(path) = &args.meta {
        write_json(
            path,
            &SampleMeta {
                schema_version: SCHEMA_VERSION,
                command: "validate",
                config: &args,
                method: drawn.method,
                run: &drawn.batch.meta,
                bound_estimate: drawn.target.as_ref().and_then(|t| t.estimated()),
                truncation: None,
                gof: Some(&report),
                wall_time_ms: None,
            },
        )?;
    }
    println!("{}", to_pretty(&report));
    if report.pass {
        Ok(0)
    } else {
        eprintln!("goodness-of-fit test failed: statistic {} >= threshold {}", report.statistic, report.threshold);
        Ok(EXIT_VALIDATION)
    }
}

pub fn bound(args: BoundArgs) -> Result<i32, CliError> {
    let Setup { vars, support } = setup(&args.model)?;
    let f = field("--density", &args.density, &vars)?;
    let grid = args.grid.unwrap_or_else(|| default_grid_per_dim(support.dim()));
    let est = estimate_bound(&f, &support, grid, args.safety)?;
    println!("{}", to_pretty(&est));
    Ok(0)
}

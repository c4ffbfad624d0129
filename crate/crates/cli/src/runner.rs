//! Subcommand implementations: each builds its inputs from the resolved
//! config, runs the corresponding library operations, and returns the
//! artifacts to emit.

use rayon::prelude::*;
use serde_json::json;

use twistlab_core::cohomology::{self, SolveOptions};
use twistlab_core::haar::{self, FunctionInput, HaarSeries};
use twistlab_core::statistics::{self, ClassifyConfig, Verdict};
use twistlab_core::transfer;
use twistlab_core::{CircleMap, Complex64, PartitionTree, TwistedSolution};

use crate::config::ExperimentConfig;
use crate::output::{fmt_f64, CsvBuilder, RunOutput};
use crate::CliError;

/// Chunk size for parallel sample generation; fixed so that the
/// chunk→value mapping never depends on the worker count.
const SAMPLE_CHUNK: u64 = 4096;

fn build_tree(map: &CircleMap, depth: usize) -> Result<PartitionTree, CliError> {
    Ok(PartitionTree::build(map, depth)?)
}

fn solve(
    map: &CircleMap,
    tree: &PartitionTree,
    config: &ExperimentConfig,
) -> Result<TwistedSolution, CliError> {
    let v = config.require_v()?;
    let beta = config.require_beta()?;
    let opts = SolveOptions {
        tol: config.tol,
        ..Default::default()
    };
    Ok(cohomology::solve_twisted(
        map,
        tree,
        &v,
        beta,
        config.depth,
        config.method(),
        &opts,
    )?)
}

fn coefficient_csv(series: &HaarSeries, tree: &PartitionTree) -> String {
    let mut csv = CsvBuilder::new("level,address,re,im");
    for k in 0..series.depth() {
        for i in 0..tree.num_cells(k) {
            let c = series.coeff(k, i);
            csv.row(&[
                k.to_string(),
                tree.cell(k, i).address(),
                fmt_f64(c.re),
                fmt_f64(c.im),
            ]);
        }
    }
    csv.finish()
}

pub fn run_partition(config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let map = config.map.build()?;
    let tree = build_tree(&map, config.depth)?;
    tree.check_shift_property(&map, 1e-10)?;
    let mut csv = CsvBuilder::new("level,address,a,b,length");
    for level in 0..=tree.depth() {
        for i in 0..tree.num_cells(level) {
            let cell = tree.cell(level, i);
            csv.row(&[
                level.to_string(),
                cell.address(),
                fmt_f64(cell.a),
                fmt_f64(cell.b),
                fmt_f64(cell.length()),
            ]);
        }
    }
    let min_len = (0..tree.num_cells(tree.depth()))
        .map(|i| tree.length(tree.depth(), i))
        .fold(f64::INFINITY, f64::min);
    let results = json!({
        "depth": tree.depth(),
        "cells_at_depth": tree.num_cells(tree.depth()),
        "min_cell_length": min_len,
    });
    Ok(RunOutput::new(results)
        .with_file("partition.csv", csv.finish())
        .with_summary(format!(
            "partition: depth {} ({} cells, min length {:.3e})",
            tree.depth(),
            tree.num_cells(tree.depth()),
            min_len
        )))
}

pub fn run_solve(config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let map = config.map.build()?;
    let tree = build_tree(&map, config.depth.min(25) + 1)?;
    let solution = solve(&map, &tree, config)?;
    let mut csv = CsvBuilder::new("address,re,im");
    for (i, avg) in solution.averages().iter().enumerate() {
        csv.row(&[
            tree.cell(config.depth, i).address(),
            fmt_f64(avg.re),
            fmt_f64(avg.im),
        ]);
    }
    let results = json!({
        "beta": {"re": solution.beta().re, "im": solution.beta().im},
        "depth": solution.depth(),
        "residual_sup": solution.residual_sup(),
        "series_terms": solution.series_terms(),
        "tail_bound": solution.tail_bound(),
    });
    Ok(RunOutput::new(results)
        .with_file("solution.csv", csv.finish())
        .with_summary(format!(
            "solve: residual_sup {:.3e}, {} series terms, tail bound {:.3e}",
            solution.residual_sup(),
            solution.series_terms(),
            solution.tail_bound()
        )))
}

pub fn run_analyze(config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let map = config.map.build()?;
    let tree = build_tree(&map, config.depth)?;
    let v = config.require_v()?;
    let series = haar::analyze_input(&v, &tree, config.depth)?;
    analyze_outputs(&tree, &series, config, "analyze")
}

pub fn run_fracderiv(config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let map = config.map.build()?;
    let tree = build_tree(&map, config.depth)?;
    let v = config.require_v()?;
    let beta = config.require_beta()?;
    let series = twistlab_core::fracderiv::frac_deriv(
        &haar::analyze_input(&v, &tree, config.depth)?,
        &tree,
        beta,
    );
    analyze_outputs(&tree, &series, config, "fracderiv")
}

fn analyze_outputs(
    tree: &PartitionTree,
    series: &HaarSeries,
    config: &ExperimentConfig,
    label: &str,
) -> Result<RunOutput, CliError> {
    let norm = series.besov_norm(tree, config.s, config.flavor());
    let mut profile = CsvBuilder::new("level,partial_value");
    for (k, value) in norm.per_level.iter().enumerate() {
        profile.row(&[k.to_string(), fmt_f64(*value)]);
    }
    let regularity = series.regularity_estimate(tree).ok();
    let results = json!({
        "besov": {"s": config.s, "flavor": config.flavor, "total": norm.total},
        "regularity": regularity.map(|r| json!({"exponent": r.exponent, "residual": r.residual})),
        "c0": {"re": series.c0().re, "im": series.c0().im},
        "max_coeff": series.max_coeff(),
    });
    let summary = match regularity {
        Some(r) => format!(
            "{label}: Besov({}, s={}) = {:.6e}, regularity estimate {:.4} ± {:.4}",
            config.flavor, config.s, norm.total, r.exponent, r.residual
        ),
        None => format!(
            "{label}: Besov({}, s={}) = {:.6e}",
            config.flavor, config.s, norm.total
        ),
    };
    Ok(RunOutput::new(results)
        .with_file("coeffs.csv", coefficient_csv(series, tree))
        .with_file("norm_profile.csv", profile.finish())
        .with_summary(summary))
}

/// Parallel, worker-count-independent CLT sampling: fixed index chunks
/// mapped in order.
fn parallel_clt_samples(
    solution: &TwistedSolution,
    tree: &PartitionTree,
    n: usize,
    seed: u64,
    samples: u64,
) -> Result<Vec<f64>, CliError> {
    let chunks: Vec<(u64, u64)> = (0..samples.div_ceil(SAMPLE_CHUNK))
        .map(|c| (c * SAMPLE_CHUNK, ((c + 1) * SAMPLE_CHUNK).min(samples)))
        .collect();
    let parts: Vec<Result<Vec<f64>, twistlab_core::Error>> = chunks
        .par_iter()
        .map(|&(lo, hi)| statistics::clt_samples(solution, tree, n, seed, lo, hi))
        .collect();
    let mut out = Vec::with_capacity(samples as usize);
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

pub fn run_clt(config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let map = config.map.build()?;
    let tree = build_tree(&map, config.depth.min(25) + 1)?;
    let solution = solve(&map, &tree, config)?;
    let values = parallel_clt_samples(&solution, &tree, config.depth, config.seed, config.samples)?;
    let report = statistics::summarize_clt(&values, config.bins)?;

    let mut hist = CsvBuilder::new("bin_left,bin_right,count");
    for i in 0..report.histogram.count.len() {
        hist.row(&[
            fmt_f64(report.histogram.bin_left[i]),
            fmt_f64(report.histogram.bin_right[i]),
            report.histogram.count[i].to_string(),
        ]);
    }

    // Martingale traces for the first few sample points.
    let rng = twistlab_core::rng::CounterRng::new(config.seed);
    let mut trace = CsvBuilder::new("x,k,psi_k");
    for i in 0..config.trace_samples {
        let x = rng.uniform(i);
        for k in 1..=config.depth {
            trace.row(&[
                fmt_f64(x),
                k.to_string(),
                fmt_f64(solution.martingale_psi(&tree, x, k).re),
            ]);
        }
    }

    let results = json!({
        "samples": report.samples,
        "mean": report.mean,
        "variance": report.variance,
        "ks": report.ks,
        "level": config.depth,
        "residual_sup": solution.residual_sup(),
    });
    Ok(RunOutput::new(results)
        .with_file("histogram.csv", hist.finish())
        .with_file("martingale_trace.csv", trace.finish())
        .with_summary(format!(
            "clt: {} samples at level {}, mean {:.4e}, variance {:.6}, KS {:.4}",
            report.samples, config.depth, report.mean, report.variance, report.ks
        )))
}

fn classify_config(config: &ExperimentConfig) -> ClassifyConfig {
    ClassifyConfig {
        depth: config.depth,
        estimator_level: config.estimator_level,
        kmax: config.kmax,
        neumann_terms: config.neumann_terms,
        tol: config.tol,
        ..Default::default()
    }
}

pub fn run_variance(config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let map = config.map.build()?;
    let tree = build_tree(&map, (config.estimator_level + 2).max(config.depth.min(25) + 1))?;
    let phi = match config.observable.as_str() {
        "direct" => config.require_v()?,
        _ => {
            let solution = solve(&map, &tree, config)?;
            statistics::phi_v_observable(&solution, &tree)
        }
    };
    let gk = statistics::sigma2_green_kubo(&map, &tree, config.estimator_level, &phi, config.kmax)?;
    let (mart, _) = statistics::sigma2_martingale(
        &map,
        &tree,
        config.estimator_level,
        &phi,
        config.neumann_terms,
    )?;
    let mut corr = CsvBuilder::new("k,c_k");
    for (k, c) in gk.diagnostics.iter().enumerate() {
        corr.row(&[k.to_string(), fmt_f64(*c)]);
    }
    let results = json!({
        "observable": config.observable,
        "green_kubo": {"value": gk.value, "stderr": gk.stderr},
        "martingale": {"value": mart.value, "stderr": mart.stderr},
        "estimator_level": config.estimator_level,
    });
    Ok(RunOutput::new(results)
        .with_file("correlations.csv", corr.finish())
        .with_summary(format!(
            "variance: green_kubo {:.6e} ± {:.1e}, martingale {:.6e} ± {:.1e}",
            gk.value, gk.stderr, mart.value, mart.stderr
        )))
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Regular => "regular",
        Verdict::Irregular => "irregular",
        Verdict::Inconclusive => "inconclusive",
    }
}

pub fn run_classify(config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let map = config.map.build()?;
    let tree = build_tree(&map, config.depth.min(25) + 1)?;
    let v = config.require_v()?;
    let beta = config.require_beta()?;
    let cc = classify_config(config);
    let report = statistics::dichotomy_classify(&map, &tree, &v, beta, &cc)?;
    let results = json!({
        "beta": report.beta,
        "depth": report.depth,
        "verdict": verdict_str(report.verdict),
        "in_theorem_range": report.in_theorem_range,
        "tail_warning": report.tail_warning,
        "sigma2": {
            "green_kubo": {"value": report.sigma2_green_kubo.value, "stderr": report.sigma2_green_kubo.stderr},
            "martingale": {"value": report.sigma2_martingale.value, "stderr": report.sigma2_martingale.stderr},
        },
        "coefficient_minima": report.coefficient_minima,
        "oscillation_minima": report.oscillation_minima,
        "thresholds": {
            "base": cc.threshold,
            "irregular_factor": cc.irregular_factor,
            "regular_decay": cc.regular_decay,
            "band_factor": cc.band_factor,
            "min_level": cc.min_level,
            "band_margin": cc.band_margin,
        },
    });
    Ok(RunOutput::new(results).with_summary(format!(
        "classify: verdict {} (σ²_gk {:.4e}, σ²_mart {:.4e}{})",
        verdict_str(report.verdict),
        report.sigma2_green_kubo.value,
        report.sigma2_martingale.value,
        if report.in_theorem_range {
            ""
        } else {
            ", out of theorem range"
        }
    )))
}

pub fn run_sweep(config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let map = config.map.build()?;
    let tree = build_tree(&map, config.depth.min(25) + 1)?;
    let v = config.require_v()?;
    let grid = config
        .beta_grid
        .clone()
        .ok_or_else(|| CliError::Validation("sweep-beta needs \"beta_grid\"".into()))?;
    let cc = classify_config(config);
    let report = statistics::beta_sweep(&map, &tree, &v, &grid, &cc)?;
    let mut csv = CsvBuilder::new("beta,sigma2,stderr");
    for p in &report.points {
        csv.row(&[fmt_f64(p.beta), fmt_f64(p.sigma2), fmt_f64(p.stderr)]);
    }
    let results = json!({
        "points": report.points.iter().map(|p| json!({
            "beta": p.beta, "sigma2": p.sigma2, "stderr": p.stderr
        })).collect::<Vec<_>>(),
        "near_zero_intervals": report.near_zero_intervals,
        "max_second_difference": report.max_second_difference,
    });
    Ok(RunOutput::new(results)
        .with_file("sweep.csv", csv.finish())
        .with_summary(format!(
            "sweep-beta: {} points, {} near-zero interval(s), max second difference {:.3e}",
            report.points.len(),
            report.near_zero_intervals.len(),
            report.max_second_difference
        )))
}

pub fn run_spectrum(config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let map = config.map.build()?;
    let level = config.estimator_level;
    let tree = build_tree(&map, level + 2)?;
    let density = transfer::invariant_density(&map, &tree, level)?;
    let mut rho_csv = CsvBuilder::new("cell,rho");
    for (i, r) in density.rho.iter().enumerate() {
        rho_csv.row(&[tree.cell(level, i).address(), fmt_f64(*r)]);
    }
    let grid = config
        .beta_grid
        .clone()
        .unwrap_or_else(|| vec![config.beta.map(|b| b.value().re).unwrap_or(0.39)]);
    let mut spectral = Vec::new();
    for &b in &grid {
        let eig = transfer::leading_eig(&map, &tree, level, 1.0 + b)?;
        spectral.push(json!({
            "beta": b,
            "lambda": eig.lambda,
            "gap_estimate": eig.gap_estimate,
        }));
    }
    let pressure = transfer::pressure_derivative_check(&map, &tree, level, config.pressure_step)?;
    let results = json!({
        "level": level,
        "spectral": spectral,
        "pressure_derivative_check": pressure,
        "density_iterations": density.iterations,
        "slow_mixing": density.slow_mixing,
    });
    Ok(RunOutput::new(results)
        .with_file("density.csv", rho_csv.finish())
        .with_summary(format!(
            "spectrum: {} β points at level {level}, pressure check {:.3e}",
            grid.len(),
            pressure
        )))
}

/// Compare the solver against the closed-form nowhere-differentiable
/// oracles on the doubling map.
pub fn run_oracle_check(
    config: &ExperimentConfig,
    oracle: &str,
    a: Option<f64>,
) -> Result<RunOutput, CliError> {
    let map = CircleMap::linear();
    let depth = config.depth.min(17);
    let tree = build_tree(&map, depth + 1)?;
    let opts = SolveOptions {
        tol: config.tol.min(1e-9),
        ..Default::default()
    };
    let (label, beta, v, oracle_fn): (String, f64, FunctionInput, Box<dyn Fn(f64) -> f64>) =
        match oracle {
            "weierstrass" => {
                let a = a.unwrap_or(2.0f64.powf(-0.39));
                if !(0.0 < a && a < 1.0) {
                    return Err(CliError::Validation(format!(
                        "weierstrass oracle needs 0 < a < 1, got {a}"
                    )));
                }
                let beta = -a.log2();
                (
                    format!("weierstrass a={a}"),
                    beta,
                    FunctionInput::WeierstrassRhs { a },
                    Box::new(move |x| haar::weierstrass_series(a, 120, x)),
                )
            }
            "takagi" => (
                "takagi".to_string(),
                1.0,
                FunctionInput::pointwise(|x| -2.0 * haar::tent(x)),
                Box::new(|x| haar::takagi_series(60, x)),
            ),
            other => {
                return Err(CliError::Validation(format!(
                    "unknown oracle {other:?}; expected \"weierstrass\" or \"takagi\""
                )))
            }
        };
    let solution = cohomology::solve_twisted(
        &map,
        &tree,
        &v,
        Complex64::new(beta, 0.0),
        depth,
        config.method(),
        &opts,
    )?;
    let rng = twistlab_core::rng::CounterRng::new(config.seed);
    let mut sup_error = 0.0f64;
    for i in 0..10_000u64 {
        let x = rng.uniform(i);
        let got = solution.eval(&tree, x)?.re;
        sup_error = sup_error.max((got - oracle_fn(x)).abs());
    }
    let results = json!({
        "oracle": label,
        "beta": beta,
        "points": 10_000,
        "sup_error": sup_error,
        "residual_sup": solution.residual_sup(),
    });
    Ok(RunOutput::new(results).with_summary(format!(
        "oracle-check {label}: sup error {sup_error:.3e} over 10000 points"
    )))
}

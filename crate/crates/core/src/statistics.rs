//! Asymptotic variance estimators, the CLT experiment on martingale
//! approximations, and the regularity-dichotomy classifier.
//!
//! All operations here require a real twist exponent; complex `β` inputs
//! are rejected with a typed error. Monte-Carlo draws are keyed by
//! `(seed, index)` so results are independent of worker count.

use alloc::vec::Vec;
use alloc::{format, vec};

use num_complex::Complex64;

use crate::circle::CircleMap;
use crate::cohomology::TwistedSolution;
use crate::error::{Error, Result};
use crate::haar::{gauss_nodes, FunctionInput};
use crate::partition::PartitionTree;
use crate::rng::CounterRng;
use crate::transfer::{invariant_density, ulam_matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceMethod {
    /// `σ² = C_0 + 2 Σ_{k≥1} C_k` from transfer-operator correlations.
    GreenKubo,
    /// Martingale decomposition via the Poisson equation
    /// `w = Σ T^k φ`, `h = φ − (w∘F − w)`, `σ² = ‖h‖²_{L²(ρ̂ m)}`.
    Martingale,
}

#[derive(Debug, Clone)]
pub struct VarianceEstimate {
    pub method: VarianceMethod,
    /// `σ̂² ≥ 0` (tiny negative numerical values are clamped).
    pub value: f64,
    /// Geometric tail estimate of the truncation.
    pub stderr: f64,
    /// Per-lag correlations (Green–Kubo) or per-term Neumann increment
    /// norms (martingale).
    pub diagnostics: Vec<f64>,
}

/// By-products of the martingale estimator kept for inspection: the
/// martingale part `h` (cell values) and the density it was weighted by.
#[derive(Debug, Clone)]
pub struct MartingaleParts {
    pub level: usize,
    pub h: Vec<f64>,
    pub rho: Vec<f64>,
}

fn require_real(beta: Complex64) -> Result<f64> {
    if beta.im != 0.0 {
        return Err(Error::ComplexBetaUnsupported);
    }
    Ok(beta.re)
}

/// Exact level-`n` averages of `θ∘F` for piecewise-constant `θ`.
fn compose_real(tree: &PartitionTree, values: &[f64]) -> Vec<f64> {
    let n = values.len().trailing_zeros() as usize;
    let mask = (1usize << n) - 1;
    (0..values.len())
        .map(|i| {
            let (c1, c2) = (2 * i, 2 * i + 1);
            (tree.length(n + 1, c1) * values[c1 & mask]
                + tree.length(n + 1, c2) * values[c2 & mask])
                / tree.length(n, i)
        })
        .collect()
}

fn correlation_tail_ok(corr: &[f64]) -> bool {
    let c0 = libm::fabs(corr[0]);
    if c0 <= 1e-14 {
        return true;
    }
    corr[1..].iter().any(|c| libm::fabs(*c) < 1e-3 * c0)
}

fn green_kubo_inner(
    map: &CircleMap,
    tree: &PartitionTree,
    level: usize,
    phi: &FunctionInput,
    kmax: usize,
) -> Result<(VarianceEstimate, bool)> {
    let corr = crate::transfer::correlations(map, tree, level, phi, phi, kmax)?;
    let value = corr[0] + 2.0 * corr[1..].iter().sum::<f64>();
    // Geometric tail from the last two usable lags.
    let last = libm::fabs(corr[kmax]);
    let prev = libm::fabs(corr[kmax - 1]);
    let ratio = if prev > 0.0 { (last / prev).min(0.95) } else { 0.0 };
    let stderr = 2.0 * last * ratio / (1.0 - ratio).max(0.05);
    Ok((
        VarianceEstimate {
            method: VarianceMethod::GreenKubo,
            value: value.max(0.0),
            stderr,
            diagnostics: corr.clone(),
        },
        correlation_tail_ok(&corr),
    ))
}

/// Green–Kubo variance `C_0 + 2 Σ_{k=1}^{kmax} C_k`; the observable is
/// centered against `ρ̂` inside the correlation computation.
pub fn sigma2_green_kubo(
    map: &CircleMap,
    tree: &PartitionTree,
    level: usize,
    phi: &FunctionInput,
    kmax: usize,
) -> Result<VarianceEstimate> {
    let (est, tail_ok) = green_kubo_inner(map, tree, level, phi, kmax)?;
    if !tail_ok {
        let c0 = libm::fabs(est.diagnostics[0]);
        return Err(Error::TailNotDecaying {
            last: libm::fabs(est.diagnostics[kmax]),
            threshold: 1e-3 * c0,
        });
    }
    Ok(est)
}

fn martingale_inner(
    map: &CircleMap,
    tree: &PartitionTree,
    level: usize,
    phi: &FunctionInput,
    terms: usize,
) -> Result<(VarianceEstimate, MartingaleParts, bool)> {
    let op = ulam_matrix(map, tree, level, 1.0)?;
    let rho = invariant_density(map, tree, level)?.rho;
    let cells = 1usize << level;
    let mut phi_avg = Vec::with_capacity(cells);
    for i in 0..cells {
        let cell = tree.cell(level, i);
        let mut acc = 0.0;
        for (x, w) in gauss_nodes(cell.a, cell.b) {
            acc += phi.eval(x)? * w;
        }
        phi_avg.push(acc / cell.length());
    }
    let mean: f64 = (0..cells)
        .map(|i| tree.length(level, i) * rho[i] * phi_avg[i])
        .sum();
    for v in phi_avg.iter_mut() {
        *v -= mean;
    }

    let l2 = |v: &[f64]| -> f64 {
        libm::sqrt(
            (0..cells)
                .map(|i| tree.length(level, i) * rho[i] * v[i] * v[i])
                .sum(),
        )
    };

    // T θ = Φ(ρ̂ θ)/ρ̂ is the ρ̂-adjoint of the Koopman operator.
    let apply_t = |v: &[f64]| -> Vec<f64> {
        let weighted: Vec<f64> = v.iter().zip(&rho).map(|(x, r)| x * r).collect();
        op.apply(&weighted)
            .iter()
            .zip(&rho)
            .map(|(x, r)| x / r)
            .collect()
    };

    let mut term = phi_avg.clone();
    let mut w = vec![0.0; cells];
    let mut increments = Vec::with_capacity(terms);
    for _ in 0..terms {
        term = apply_t(&term);
        for (wi, ti) in w.iter_mut().zip(&term) {
            *wi += ti;
        }
        increments.push(l2(&term));
    }
    let w_composed = compose_real(tree, &w);
    let h: Vec<f64> = (0..cells)
        .map(|i| phi_avg[i] - (w_composed[i] - w[i]))
        .collect();
    let sigma = l2(&h);

    let phi_norm = l2(&phi_avg);
    let tail_ok = phi_norm <= 1e-14
        || increments
            .iter()
            .any(|inc| *inc < 1e-3 * phi_norm);
    let last = increments.last().copied().unwrap_or(0.0);
    let prev = increments
        .get(increments.len().saturating_sub(2))
        .copied()
        .unwrap_or(0.0);
    let ratio = if prev > 0.0 { (last / prev).min(0.95) } else { 0.0 };
    let stderr = 2.0 * last * (2.0 * sigma + last) * ratio / (1.0 - ratio).max(0.05);
    Ok((
        VarianceEstimate {
            method: VarianceMethod::Martingale,
            value: sigma * sigma,
            stderr,
            diagnostics: increments,
        },
        MartingaleParts {
            level,
            h,
            rho,
        },
        tail_ok,
    ))
}

/// Martingale/Poisson variance: truncate `w = Σ_{k≤K} T^k φ`, form
/// `h = φ − (w∘F − w)` and return `‖h‖²_{L²(ρ̂ m)}` with the parts.
pub fn sigma2_martingale(
    map: &CircleMap,
    tree: &PartitionTree,
    level: usize,
    phi: &FunctionInput,
    terms: usize,
) -> Result<(VarianceEstimate, MartingaleParts)> {
    let (est, parts, tail_ok) = martingale_inner(map, tree, level, phi, terms)?;
    if !tail_ok {
        return Err(Error::TailNotDecaying {
            last: est.diagnostics.last().copied().unwrap_or(0.0),
            threshold: 1e-3,
        });
    }
    Ok((est, parts))
}

/// Wrap the Livšic observable of a solution as a pointwise input at the
/// deepest available resolution.
pub fn phi_v_observable(solution: &TwistedSolution, tree: &PartitionTree) -> FunctionInput {
    let sol = solution.clone();
    let tr = tree.clone();
    let k = solution.depth() - 1;
    FunctionInput::pointwise(move |x| sol.phi_v(&tr, x, k).map(|p| p.value).unwrap_or(0.0))
}

/// Two-sided Kolmogorov–Smirnov distance of the sample against a given
/// CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("NaN in sample"));
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n);
        d = d.max((i + 1) as f64 / n - f);
    }
    Ok(d)
}

/// CDF of the centered normal with variance `sigma2`.
pub fn normal_cdf(x: f64, sigma2: f64) -> f64 {
    0.5 * libm::erfc(-x / libm::sqrt(2.0 * sigma2))
}

/// KS distance against the centered normal with the given variance.
pub fn ks_test(samples: &[f64], sigma2: f64) -> Result<f64> {
    if sigma2 <= 0.0 {
        return Err(Error::InvalidParameter(
            "KS reference variance must be positive".into(),
        ));
    }
    ks_statistic(samples, |x| normal_cdf(x, sigma2))
}

/// `ψ_n(x)/√n` for uniform counter-keyed samples `lo..hi`. Splitting the
/// index range across workers cannot change any value.
pub fn clt_samples(
    solution: &TwistedSolution,
    tree: &PartitionTree,
    n: usize,
    seed: u64,
    lo: u64,
    hi: u64,
) -> Result<Vec<f64>> {
    require_real(solution.beta())?;
    if n > solution.depth() {
        return Err(Error::InvalidParameter(format!(
            "CLT level {n} exceeds solution depth {}",
            solution.depth()
        )));
    }
    let rng = CounterRng::new(seed);
    let scale = 1.0 / libm::sqrt(n as f64);
    Ok((lo..hi)
        .map(|i| solution.martingale_psi(tree, rng.uniform(i), n).re * scale)
        .collect())
}

#[derive(Debug, Clone)]
pub struct Histogram {
    pub bin_left: Vec<f64>,
    pub bin_right: Vec<f64>,
    pub count: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct CltReport {
    pub samples: usize,
    pub mean: f64,
    pub variance: f64,
    pub ks: f64,
    pub histogram: Histogram,
}

/// Histogram + KS summary of precomputed CLT samples against the
/// centered normal with the sample variance.
pub fn summarize_clt(values: &[f64], bins: usize) -> Result<CltReport> {
    if values.is_empty() || bins == 0 {
        return Err(Error::EmptySample);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let ks = if variance > 0.0 {
        ks_test(values, variance)?
    } else {
        // Degenerate sample: all mass at one point vs any normal is 1/2.
        0.5
    };
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut count = vec![0u64; bins];
    for &v in values {
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        count[idx] += 1;
    }
    Ok(CltReport {
        samples: values.len(),
        mean,
        variance,
        ks,
        histogram: Histogram {
            bin_left: (0..bins).map(|i| lo + width * i as f64).collect(),
            bin_right: (1..=bins).map(|i| lo + width * i as f64).collect(),
            count,
        },
    })
}

/// The CLT experiment: draw uniform samples, evaluate `ψ_n/√n`, and
/// compare against the matching centered normal.
pub fn clt_histogram(
    solution: &TwistedSolution,
    tree: &PartitionTree,
    n: usize,
    samples: u64,
    seed: u64,
    bins: usize,
) -> Result<CltReport> {
    let values = clt_samples(solution, tree, n, seed, 0, samples)?;
    summarize_clt(&values, bins)
}

/// Per-level minima of `osc_P(α)/|P|^β` computed from the level-`n` cell
/// averages; the anti-Hölder property keeps these bounded away from 0.
pub fn anti_holder_check(
    solution: &TwistedSolution,
    tree: &PartitionTree,
    levels: core::ops::Range<usize>,
) -> Result<Vec<(usize, f64)>> {
    let beta = require_real(solution.beta())?;
    let n = solution.depth();
    // Bottom-up (min, max) sweep over the average pyramid.
    let mut spans: Vec<(f64, f64)> = solution.averages().iter().map(|c| (c.re, c.re)).collect();
    let mut per_level: Vec<Vec<(f64, f64)>> = Vec::with_capacity(n + 1);
    per_level.push(spans.clone());
    for _ in (0..n).rev() {
        let mut up = Vec::with_capacity(spans.len() / 2);
        for pair in spans.chunks_exact(2) {
            up.push((pair[0].0.min(pair[1].0), pair[0].1.max(pair[1].1)));
        }
        per_level.push(up.clone());
        spans = up;
    }
    per_level.reverse(); // per_level[k] now holds level-k spans
    let mut out = Vec::new();
    for k in levels {
        if k >= n {
            break;
        }
        let mut min_osc = f64::INFINITY;
        for (i, (lo, hi)) in per_level[k].iter().enumerate() {
            let osc = (hi - lo) / libm::pow(tree.length(k, i), beta);
            min_osc = min_osc.min(osc);
        }
        out.push((k, min_osc));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Regular,
    Irregular,
    Inconclusive,
}

/// Calibration constants of the finite-depth classifier. The dichotomy
/// is exact only at infinite depth, so every verdict carries declared
/// margins and an inconclusive zone.
#[derive(Debug, Clone, Copy)]
pub struct ClassifyConfig {
    /// Solution resolution.
    pub depth: usize,
    /// Transfer-operator level for the variance estimators.
    pub estimator_level: usize,
    /// Green–Kubo lag window.
    pub kmax: usize,
    /// Neumann-series truncation of the martingale estimator.
    pub neumann_terms: usize,
    /// Base variance threshold.
    pub threshold: f64,
    /// σ̂² must exceed `irregular_factor·threshold` on both estimators to
    /// call irregular.
    pub irregular_factor: f64,
    /// Criterion-V minima must decay by this factor across the level
    /// range to call regular.
    pub regular_decay: f64,
    /// Criterion-IV minima must stay within this multiplicative band to
    /// call irregular.
    pub band_factor: f64,
    /// First level of the per-level minima scans.
    pub min_level: usize,
    /// Levels within this margin of the solution depth are excluded from
    /// the oscillation-band verdict: so close to the truncation level a
    /// cell's oscillation is measured from too few sub-averages and is
    /// biased downward.
    pub band_margin: usize,
    /// Hölder exponent of `log g`; the theorem range is `β < γ`.
    pub gamma: f64,
    /// Solver tolerance.
    pub tol: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            depth: 14,
            estimator_level: 12,
            kmax: 40,
            neumann_terms: 60,
            threshold: 1e-3,
            irregular_factor: 10.0,
            regular_decay: 4.0,
            band_factor: 2.0,
            min_level: 6,
            band_margin: 3,
            gamma: 1.0,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DichotomyReport {
    pub beta: f64,
    pub depth: usize,
    pub sigma2_green_kubo: VarianceEstimate,
    pub sigma2_martingale: VarianceEstimate,
    /// `(level, min_P |c_β(α, P)|)` over the scan range.
    pub coefficient_minima: Vec<(usize, f64)>,
    /// `(level, min_P osc_P(α)/|P|^β)` over the scan range.
    pub oscillation_minima: Vec<(usize, f64)>,
    pub verdict: Verdict,
    /// False for `β ≥ γ`: the solver still converges but the dichotomy
    /// theorems do not cover the parameter.
    pub in_theorem_range: bool,
    /// Set when an estimator tail failed to decay within its window.
    pub tail_warning: bool,
}

/// Solve, extract the Livšic observable, run both variance estimators,
/// scan the per-level coefficient and oscillation minima, and classify.
pub fn dichotomy_classify(
    map: &CircleMap,
    tree: &PartitionTree,
    v: &FunctionInput,
    beta: Complex64,
    config: &ClassifyConfig,
) -> Result<DichotomyReport> {
    let beta_re = require_real(beta)?;
    if !(0.0 < beta_re && beta_re < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "classifier needs 0 < β < 1, got {beta_re}"
        )));
    }
    let opts = crate::cohomology::SolveOptions {
        tol: config.tol,
        ..Default::default()
    };
    let solution = crate::cohomology::solve_twisted(
        map,
        tree,
        v,
        beta,
        config.depth,
        crate::cohomology::SolveMethod::Series,
        &opts,
    )?;
    let phi = phi_v_observable(&solution, tree);
    let (gk, gk_ok) = green_kubo_inner(map, tree, config.estimator_level, &phi, config.kmax)?;
    let (mart, _, mart_ok) =
        martingale_inner(map, tree, config.estimator_level, &phi, config.neumann_terms)?;

    let scan = config.min_level..config.depth;
    let oscillation_minima = anti_holder_check(&solution, tree, scan.clone())?;
    let mut coefficient_minima = Vec::new();
    for k in scan {
        if k >= solution.depth() {
            break;
        }
        let mut min_c = f64::INFINITY;
        for i in 0..tree.num_cells(k) {
            let cell = tree.cell(k, i);
            let c = solution
                .series()
                .pairing_coeff(tree, &cell, beta_re)
                .norm();
            min_c = min_c.min(c);
        }
        coefficient_minima.push((k, min_c));
    }

    let small = |e: &VarianceEstimate| e.value < config.threshold.max(3.0 * e.stderr);
    let large = |e: &VarianceEstimate| e.value > config.irregular_factor * config.threshold;
    let first_v = coefficient_minima.first().map(|&(_, v)| v).unwrap_or(0.0);
    let last_v = coefficient_minima.last().map(|&(_, v)| v).unwrap_or(0.0);
    let coeffs_decay = last_v <= first_v / config.regular_decay;
    let band = {
        let cutoff = config.depth.saturating_sub(config.band_margin);
        let trimmed: Vec<f64> = oscillation_minima
            .iter()
            .filter(|&&(k, _)| k < cutoff)
            .map(|&(_, v)| v)
            .collect();
        let lo = trimmed.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = trimmed.iter().copied().fold(0.0f64, f64::max);
        !trimmed.is_empty() && lo > 0.0 && hi / lo <= config.band_factor
    };

    let verdict = if small(&gk) && small(&mart) && coeffs_decay {
        Verdict::Regular
    } else if large(&gk) && large(&mart) && band {
        Verdict::Irregular
    } else {
        Verdict::Inconclusive
    };

    Ok(DichotomyReport {
        beta: beta_re,
        depth: config.depth,
        sigma2_green_kubo: gk,
        sigma2_martingale: mart,
        coefficient_minima,
        oscillation_minima,
        verdict,
        in_theorem_range: beta_re < config.gamma,
        tail_warning: !(gk_ok && mart_ok),
    })
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub beta: f64,
    pub sigma2: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// Maximal contiguous grid intervals where σ̂² stays below the
    /// threshold (candidate zero locations).
    pub near_zero_intervals: Vec<(f64, f64)>,
    /// Max second difference of σ²(β) over the grid; small values back
    /// the smoothness expected of a real-analytic curve.
    pub max_second_difference: f64,
}

/// Green–Kubo variance of `φ_v` per grid point, with zero localization.
pub fn beta_sweep(
    map: &CircleMap,
    tree: &PartitionTree,
    v: &FunctionInput,
    beta_grid: &[f64],
    config: &ClassifyConfig,
) -> Result<SweepReport> {
    if beta_grid.is_empty() {
        return Err(Error::EmptySample);
    }
    for &b in beta_grid {
        if !(0.0 < b && b < 0.95) {
            return Err(Error::InvalidParameter(format!(
                "sweep grid must lie in (0, 0.95), got {b}"
            )));
        }
    }
    let opts = crate::cohomology::SolveOptions {
        tol: config.tol,
        ..Default::default()
    };
    let mut points = Vec::with_capacity(beta_grid.len());
    for &b in beta_grid {
        let solution = crate::cohomology::solve_twisted(
            map,
            tree,
            v,
            Complex64::new(b, 0.0),
            config.depth,
            crate::cohomology::SolveMethod::Series,
            &opts,
        )?;
        let phi = phi_v_observable(&solution, tree);
        let (gk, _) = green_kubo_inner(map, tree, config.estimator_level, &phi, config.kmax)?;
        points.push(SweepPoint {
            beta: b,
            sigma2: gk.value,
            stderr: gk.stderr,
        });
    }
    let mut near_zero_intervals = Vec::new();
    let mut open: Option<f64> = None;
    for p in &points {
        if p.sigma2 < config.threshold {
            open.get_or_insert(p.beta);
        } else if let Some(start) = open.take() {
            near_zero_intervals.push((start, p.beta));
        }
    }
    if let Some(start) = open {
        near_zero_intervals.push((start, points.last().unwrap().beta));
    }
    let mut max_second_difference = 0.0f64;
    for w in points.windows(3) {
        max_second_difference =
            max_second_difference.max(libm::fabs(w[2].sigma2 - 2.0 * w[1].sigma2 + w[0].sigma2));
    }
    Ok(SweepReport {
        points,
        near_zero_intervals,
        max_second_difference,
    })
}

/// Stationary samples of the doubling map via its binary-shift
/// representation: a fresh random bit enters at every step, so orbits
/// never collapse the way finite-precision `2x mod 1` iteration does.
pub struct DoublingBitOrbit {
    rng: CounterRng,
    word_index: u64,
    current: u64,
    next: u64,
    bit: u32,
}

impl DoublingBitOrbit {
    pub fn new(rng: CounterRng) -> DoublingBitOrbit {
        DoublingBitOrbit {
            rng,
            word_index: 2,
            current: rng.bits(0),
            next: rng.bits(1),
            bit: 0,
        }
    }

    /// The current point of the orbit, then advance one doubling step.
    pub fn step(&mut self) -> f64 {
        let window = (self.current << self.bit)
            | if self.bit == 0 {
                0
            } else {
                self.next >> (64 - self.bit)
            };
        let x = (window >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        self.bit += 1;
        if self.bit == 64 {
            self.bit = 0;
            self.current = self.next;
            self.next = self.rng.bits(self.word_index);
            self.word_index += 1;
        }
        x
    }
}

/// Birkhoff sums of `φ` under the exact doubling shift, normalized by
/// `√n`, one per sample index.
pub fn doubling_birkhoff_samples(
    phi: impl Fn(f64) -> f64,
    n: usize,
    samples: u64,
    seed: u64,
) -> Vec<f64> {
    let base = CounterRng::new(seed);
    let scale = 1.0 / libm::sqrt(n as f64);
    (0..samples)
        .map(|s| {
            let mut orbit = DoublingBitOrbit::new(base.substream(s));
            let mut acc = 0.0;
            for _ in 0..n {
                acc += phi(orbit.step());
            }
            acc * scale
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohomology::{solve_twisted, SolveMethod, SolveOptions};
    use approx::assert_abs_diff_eq;

    const TAU: f64 = 2.0 * core::f64::consts::PI;

    fn linear_tree(depth: usize) -> PartitionTree {
        PartitionTree::build(&CircleMap::linear(), depth).unwrap()
    }

    fn cos1() -> FunctionInput {
        FunctionInput::Fourier {
            constant: 0.0,
            cos: vec![1.0],
            sin: vec![],
        }
    }

    fn coboundary() -> FunctionInput {
        // cos(4πx) − cos(2πx) = u∘F − u with u = cos(2πx) on the doubling map.
        FunctionInput::Fourier {
            constant: 0.0,
            cos: vec![-1.0, 1.0],
            sin: vec![],
        }
    }

    #[test]
    fn green_kubo_exact_cases() {
        let map = CircleMap::linear();
        let tree = linear_tree(13);
        let est = sigma2_green_kubo(&map, &tree, 12, &cos1(), 40).unwrap();
        assert!((est.value - 0.5).abs() <= 0.01, "σ² = {}", est.value);

        let cb = sigma2_green_kubo(&map, &tree, 12, &coboundary(), 40).unwrap();
        assert!(cb.value <= 0.01, "coboundary σ² = {}", cb.value);
        // C_0 = 1, C_1 = −1/2, rest 0.
        assert_abs_diff_eq!(cb.diagnostics[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(cb.diagnostics[1], -0.5, epsilon = 1e-6);
        assert!(cb.diagnostics[2].abs() <= 1e-6);

        let zero = sigma2_green_kubo(&map, &tree, 10, &FunctionInput::pointwise(|_| 0.0), 40)
            .unwrap();
        assert_eq!(zero.value, 0.0);
    }

    #[test]
    fn martingale_matches_green_kubo_and_detects_coboundaries() {
        for map in [CircleMap::linear(), CircleMap::perturbed_doubling(0.1).unwrap()] {
            let tree = PartitionTree::build(&map, 13).unwrap();
            let observables = [
                cos1(),
                FunctionInput::Fourier {
                    constant: 0.0,
                    cos: vec![],
                    sin: vec![1.0],
                },
                coboundary(),
                FunctionInput::Fourier {
                    constant: 0.0,
                    cos: vec![0.3, 0.5],
                    sin: vec![-0.4],
                },
            ];
            for phi in &observables {
                let gk = sigma2_green_kubo(&map, &tree, 12, phi, 40).unwrap();
                let (mart, _) = sigma2_martingale(&map, &tree, 12, phi, 60).unwrap();
                let tol = 0.1 * gk.value.max(1e-3);
                assert!(
                    (gk.value - mart.value).abs() <= tol,
                    "estimators disagree: {} vs {}",
                    gk.value,
                    mart.value
                );
            }
        }
    }

    #[test]
    fn coboundary_soundness_random_trig() {
        let rng = CounterRng::new(41);
        for map in [CircleMap::linear(), CircleMap::perturbed_doubling(0.1).unwrap()] {
            let tree = PartitionTree::build(&map, 13).unwrap();
            for trial in 0..5u64 {
                let a = rng.uniform(trial) * 2.0 - 1.0;
                let b = rng.uniform(trial + 10) * 2.0 - 1.0;
                let m = map.clone();
                let u = move |x: f64| a * (TAU * x).cos() + b * (TAU * 2.0 * x).sin();
                let phi = FunctionInput::pointwise(move |x| u(m.eval(x)) - u(x));
                let gk = sigma2_green_kubo(&map, &tree, 12, &phi, 40).unwrap();
                let (mart, parts) = sigma2_martingale(&map, &tree, 12, &phi, 60).unwrap();
                assert!(gk.value <= 1e-3, "GK coboundary {}", gk.value);
                assert!(mart.value <= 1e-3, "mart coboundary {}", mart.value);
                let h_norm = libm::sqrt(
                    parts
                        .h
                        .iter()
                        .enumerate()
                        .map(|(i, h)| tree.length(12, i) * parts.rho[i] * h * h)
                        .sum(),
                );
                assert!(h_norm <= 1e-3 * 40.0f64.sqrt(), "h norm {h_norm}");
            }
        }
    }

    #[test]
    fn martingale_h_annihilates_koopman_range() {
        let map = CircleMap::perturbed_doubling(0.1).unwrap();
        let tree = PartitionTree::build(&map, 13).unwrap();
        let (_, parts) = sigma2_martingale(&map, &tree, 12, &cos1(), 60).unwrap();
        let rng = CounterRng::new(7);
        for trial in 0..5u64 {
            let u: Vec<f64> = (0..(1usize << 12))
                .map(|i| rng.uniform(trial * 1_000_000 + i as u64) - 0.5)
                .collect();
            let u_comp = compose_real(&tree, &u);
            let inner: f64 = (0..(1usize << 12))
                .map(|i| tree.length(12, i) * parts.rho[i] * parts.h[i] * u_comp[i])
                .sum();
            assert!(inner.abs() <= 1e-6, "⟨h, u∘F⟩ = {inner}");
        }
    }

    #[test]
    fn scale_equivariance_is_exact() {
        let map = CircleMap::perturbed_doubling(0.1).unwrap();
        let tree = PartitionTree::build(&map, 12).unwrap();
        let c = 3.7;
        let phi = cos1();
        let phi_scaled = FunctionInput::Fourier {
            constant: 0.0,
            cos: vec![c],
            sin: vec![],
        };
        let base = sigma2_green_kubo(&map, &tree, 10, &phi, 30).unwrap();
        let scaled = sigma2_green_kubo(&map, &tree, 10, &phi_scaled, 30).unwrap();
        assert!((scaled.value - c * c * base.value).abs() <= 1e-10 * scaled.value.max(1.0));
        let (mb, _) = sigma2_martingale(&map, &tree, 10, &phi, 40).unwrap();
        let (ms, _) = sigma2_martingale(&map, &tree, 10, &phi_scaled, 40).unwrap();
        assert!((ms.value - c * c * mb.value).abs() <= 1e-10 * ms.value.max(1.0));
    }

    #[test]
    fn ks_examples() {
        // Sample placed at the reference quantiles has tiny distance.
        let n = 1000;
        let quantiles: Vec<f64> = (0..n)
            .map(|i| {
                let p = (i as f64 + 0.5) / n as f64;
                // Inverse normal by bisection on the CDF.
                let (mut lo, mut hi) = (-10.0, 10.0);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if normal_cdf(mid, 1.0) < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect();
        assert!(ks_test(&quantiles, 1.0).unwrap() <= 1.0 / n as f64);

        let zeros = vec![0.0; 100];
        assert_abs_diff_eq!(ks_test(&zeros, 1.0).unwrap(), 0.5, epsilon = 1e-12);

        // A shifted sample is detected at 10^4 draws.
        let rng = CounterRng::new(3);
        let shifted: Vec<f64> = (0..10_000u64)
            .map(|i| {
                let u = rng.uniform(2 * i).max(1e-12);
                let v = rng.uniform(2 * i + 1);
                (-2.0 * u.ln()).sqrt() * (TAU * v).cos() + 0.3
            })
            .collect();
        assert!(ks_test(&shifted, 1.0).unwrap() > 0.1);

        assert_eq!(ks_test(&[], 1.0).unwrap_err(), Error::EmptySample);
    }

    #[test]
    fn birkhoff_clt_sanity_on_linear_map() {
        // σ²(cos 2πx) = 1/2 under doubling; Birkhoff sums over the exact
        // binary shift must be near-normal at n = 2^10.
        let samples = doubling_birkhoff_samples(|x| (TAU * x).cos(), 1 << 10, 100_000, 2024);
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!((0.45..=0.55).contains(&var), "sample variance {var}");
        let ks = ks_test(&samples, 0.5).unwrap();
        assert!(ks <= 0.02, "KS {ks}");
    }

    #[test]
    fn clt_samples_split_invariance() {
        let map = CircleMap::perturbed_doubling(0.1).unwrap();
        let tree = PartitionTree::build(&map, 12).unwrap();
        let v = FunctionInput::Fourier {
            constant: 0.0,
            cos: vec![],
            sin: vec![1.0],
        };
        let sol = solve_twisted(
            &map,
            &tree,
            &v,
            Complex64::new(0.39, 0.0),
            12,
            SolveMethod::Series,
            &SolveOptions::default(),
        )
        .unwrap();
        let whole = clt_samples(&sol, &tree, 12, 42, 0, 1000).unwrap();
        let mut parts = clt_samples(&sol, &tree, 12, 42, 0, 400).unwrap();
        parts.extend(clt_samples(&sol, &tree, 12, 42, 400, 1000).unwrap());
        assert_eq!(whole, parts);
    }

    #[test]
    fn phi_v_has_zero_invariant_mean() {
        // Round-trip data: the observable must integrate to zero against
        // the invariant measure. Monte-Carlo with ρ̂ importance weights.
        let map = CircleMap::perturbed_doubling(0.1).unwrap();
        let tree = PartitionTree::build(&map, 17).unwrap();
        let beta = 0.39;
        let m = map.clone();
        let alpha = |x: f64| (TAU * x).sin();
        let v = FunctionInput::pointwise(move |x| {
            alpha(m.eval(x)) - m.deriv(x).powf(beta) * alpha(x)
        });
        let sol = solve_twisted(
            &map,
            &tree,
            &v,
            Complex64::new(beta, 0.0),
            17,
            SolveMethod::Series,
            &SolveOptions::default(),
        )
        .unwrap();
        let lvl = 11;
        let rho = invariant_density(&map, &tree, lvl).unwrap().rho;
        // Deterministic form: quadrature of φ_v against ρ̂ dm.
        let mut quad_mean = 0.0;
        for i in 0..tree.num_cells(lvl) {
            let cell = tree.cell(lvl, i);
            let mut acc = 0.0;
            for (x, w) in gauss_nodes(cell.a, cell.b) {
                acc += sol.phi_v(&tree, x, 16).unwrap().value * w;
            }
            quad_mean += acc * rho[i];
        }
        assert!(quad_mean.abs() <= 1e-6, "quadrature mean {quad_mean}");

        // Monte-Carlo form with ρ̂ importance weights: zero within its
        // own sampling error.
        let rng = CounterRng::new(99);
        let mut num = 0.0;
        let mut den = 0.0;
        let mut sq = 0.0;
        let total = 100_000u64;
        for i in 0..total {
            let x = rng.uniform(i);
            let w = rho[tree.cell_index_of(x, lvl)];
            let val = sol.phi_v(&tree, x, 16).unwrap().value;
            num += w * val;
            den += w;
            sq += w * val * val;
        }
        let mean = num / den;
        let stderr = libm::sqrt((sq / den - mean * mean) / total as f64);
        assert!(
            mean.abs() <= 4.0 * stderr,
            "invariant mean {mean} vs stderr {stderr}"
        );
    }

    #[test]
    fn degenerate_clt_variance_shrinks_like_one_over_n() {
        // Regular branch: ψ_n converges to a bounded function, so the
        // sample variance of ψ_n/√n decays like 1/n instead of
        // stabilizing at σ² > 0.
        let map = CircleMap::perturbed_doubling(0.1).unwrap();
        let tree = PartitionTree::build(&map, 14).unwrap();
        let beta = 0.39;
        let m = map.clone();
        let alpha = |x: f64| (TAU * x).sin();
        let v = FunctionInput::pointwise(move |x| {
            alpha(m.eval(x)) - m.deriv(x).powf(beta) * alpha(x)
        });
        let sol = solve_twisted(
            &map,
            &tree,
            &v,
            Complex64::new(beta, 0.0),
            14,
            SolveMethod::Series,
            &SolveOptions::default(),
        )
        .unwrap();
        let var_at = |n: usize| {
            let vals = clt_samples(&sol, &tree, n, 7, 0, 20_000).unwrap();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64
        };
        let v7 = var_at(7);
        let v14 = var_at(14);
        assert!(
            v14 <= 0.75 * v7,
            "degenerate variance did not shrink: {v7} -> {v14}"
        );
    }

    #[test]
    fn classify_round_trip_regular() {
        let map = CircleMap::perturbed_doubling(0.1).unwrap();
        let tree = PartitionTree::build(&map, 14).unwrap();
        let beta = 0.39;
        let m = map.clone();
        let alpha = |x: f64| (TAU * x).sin();
        let v = FunctionInput::pointwise(move |x| {
            alpha(m.eval(x)) - m.deriv(x).powf(beta) * alpha(x)
        });
        let config = ClassifyConfig {
            depth: 13,
            ..Default::default()
        };
        let report =
            dichotomy_classify(&map, &tree, &v, Complex64::new(beta, 0.0), &config).unwrap();
        assert_eq!(report.verdict, Verdict::Regular, "report: {report:?}");
        assert!(report.in_theorem_range);
        assert!(report.sigma2_green_kubo.value <= 1e-3);
        assert!(report.sigma2_martingale.value <= 1e-3);
    }

    #[test]
    fn classify_weierstrass_irregular() {
        let map = CircleMap::linear();
        let tree = linear_tree(14);
        let beta = 0.39;
        let a = 2.0f64.powf(-beta);
        let v = FunctionInput::WeierstrassRhs { a };
        let config = ClassifyConfig {
            depth: 13,
            ..Default::default()
        };
        let report =
            dichotomy_classify(&map, &tree, &v, Complex64::new(beta, 0.0), &config).unwrap();
        assert_eq!(report.verdict, Verdict::Irregular, "report: {report:?}");
        // Anti-Hölder minima stay in a tight band away from the
        // truncation level.
        let trimmed: Vec<f64> = report
            .oscillation_minima
            .iter()
            .filter(|&&(k, _)| k < config.depth - config.band_margin)
            .map(|&(_, v)| v)
            .collect();
        let lo = trimmed.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = trimmed.iter().copied().fold(0.0f64, f64::max);
        assert!(hi / lo <= 2.0, "band [{lo}, {hi}]");
    }

    #[test]
    fn anti_holder_trivial_cases() {
        let map = CircleMap::linear();
        let tree = linear_tree(12);
        // Constant data: zero oscillation everywhere.
        let v = FunctionInput::pointwise(|_| 1.0);
        let sol = solve_twisted(
            &map,
            &tree,
            &v,
            Complex64::new(0.5, 0.0),
            12,
            SolveMethod::Series,
            &SolveOptions::default(),
        )
        .unwrap();
        for (_, osc) in anti_holder_check(&sol, &tree, 4..11).unwrap() {
            assert!(osc <= 1e-8);
        }

        // Smooth solution: minima decay geometrically.
        let beta = 0.39;
        let m = map.clone();
        let alpha = |x: f64| (TAU * x).sin();
        let v = FunctionInput::pointwise(move |x| {
            alpha(m.eval(x)) - m.deriv(x).powf(beta) * alpha(x)
        });
        let sol = solve_twisted(
            &map,
            &tree,
            &v,
            Complex64::new(beta, 0.0),
            12,
            SolveMethod::Series,
            &SolveOptions::default(),
        )
        .unwrap();
        let minima = anti_holder_check(&sol, &tree, 4..11).unwrap();
        let first = minima.first().unwrap().1;
        let last = minima.last().unwrap().1;
        assert!(last <= first / 4.0, "no decay: {first} -> {last}");
    }

    #[test]
    fn sweep_coboundary_family_is_flat_zero() {
        let map = CircleMap::perturbed_doubling(0.1).unwrap();
        let tree = PartitionTree::build(&map, 14).unwrap();
        // v_β := α*∘F − g^β α* is an exact coboundary at every β after
        // fractional differentiation, so σ² ≈ 0 along the whole grid.
        // The sweep operation takes one fixed v, so sweep pointwise over
        // a small grid, rebuilding v per β.
        let alpha = |x: f64| (TAU * x).sin();
        let config = ClassifyConfig {
            depth: 13,
            estimator_level: 14,
            ..Default::default()
        };
        for &b in &[0.2, 0.39, 0.5] {
            let m = map.clone();
            let v = FunctionInput::pointwise(move |x| {
                alpha(m.eval(x)) - m.deriv(x).powf(b) * alpha(x)
            });
            let report = beta_sweep(&map, &tree, &v, &[b], &config).unwrap();
            assert!(
                report.points[0].sigma2 <= 1e-3,
                "β={b}: σ² = {}",
                report.points[0].sigma2
            );
        }
    }

    #[test]
    fn sweep_generic_data_stays_positive() {
        let map = CircleMap::perturbed_doubling(0.1).unwrap();
        let tree = PartitionTree::build(&map, 12).unwrap();
        let v = FunctionInput::Fourier {
            constant: 0.0,
            cos: vec![],
            sin: vec![1.0],
        };
        let grid: Vec<f64> = (0..10).map(|i| 0.15 + 0.05 * i as f64).collect();
        let config = ClassifyConfig {
            depth: 11,
            estimator_level: 10,
            ..Default::default()
        };
        let report = beta_sweep(&map, &tree, &v, &grid, &config).unwrap();
        assert!(report.near_zero_intervals.is_empty(), "{report:?}");
        for p in &report.points {
            assert!(p.sigma2 > 1e-3, "β={}: σ²={}", p.beta, p.sigma2);
        }

        // Size-1 grid degenerates to a single estimate.
        let single = beta_sweep(&map, &tree, &v, &[0.39], &config).unwrap();
        assert_eq!(single.points.len(), 1);
        assert_eq!(single.max_second_difference, 0.0);
    }

    #[test]
    fn sweep_rejects_bad_grid() {
        let map = CircleMap::linear();
        let tree = linear_tree(8);
        let v = cos1();
        let config = ClassifyConfig::default();
        assert!(beta_sweep(&map, &tree, &v, &[], &config).is_err());
        assert!(beta_sweep(&map, &tree, &v, &[0.97], &config).is_err());
    }

    #[test]
    fn complex_beta_is_rejected() {
        let map = CircleMap::linear();
        let tree = linear_tree(10);
        let v = cos1();
        let sol = solve_twisted(
            &map,
            &tree,
            &v,
            Complex64::new(0.5, 0.2),
            10,
            SolveMethod::Series,
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(
            clt_samples(&sol, &tree, 10, 1, 0, 10).unwrap_err(),
            Error::ComplexBetaUnsupported
        );
        assert_eq!(
            anti_holder_check(&sol, &tree, 4..8).unwrap_err(),
            Error::ComplexBetaUnsupported
        );
        assert_eq!(
            dichotomy_classify(
                &map,
                &tree,
                &v,
                Complex64::new(0.5, 0.2),
                &ClassifyConfig::default()
            )
            .unwrap_err(),
            Error::ComplexBetaUnsupported
        );
    }
}

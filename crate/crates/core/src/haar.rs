//! Unbalanced Haar analysis and synthesis on a partition tree, Besov
//! norms, and regularity estimation.
//!
//! A series is stored as the mean coefficient `c0` of `1_I` plus one
//! synthesis coefficient `d_P` per cell `P`, in the expansion
//! `ψ = c0·1_I + Σ_P d_P φ_P` with `φ_P = 1_{Q_1}/|Q_1| − 1_{Q_2}/|Q_2|`
//! over the children of `P`. Functions and distributions share this
//! representation; the norm flavor decides the interpretation.
//! Coefficients are complex-capable so that complex twist exponents can
//! flow through the solver; real inputs keep zero imaginary parts.

use alloc::sync::Arc;
use alloc::vec::Vec;
use alloc::{format, vec};

use num_complex::Complex64;

use crate::circle::wrap_unit;
use crate::error::{Error, Result};
use crate::partition::{Cell, PartitionTree};

/// Gauss–Legendre order-5 nodes and weights on `[-1, 1]`.
const GL_NODES: [f64; 5] = [
    -0.906179845938664,
    -0.5384693101056831,
    0.0,
    0.5384693101056831,
    0.906179845938664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.23692688505618908,
    0.47862867049936647,
    0.5688888888888889,
    0.47862867049936647,
    0.23692688505618908,
];

/// Composite quadrature of `f` over `[a, b]`, one order-5 panel.
pub fn gauss_panel(a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (node, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
        acc += w * f(mid + half * node);
    }
    acc * half
}

/// The five order-5 Gauss–Legendre abscissae on `[a, b]` with weights
/// already scaled by the half-length, so `∫_a^b f ≈ Σ w_q f(x_q)`.
pub fn gauss_nodes(a: f64, b: f64) -> [(f64, f64); 5] {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut out = [(0.0, 0.0); 5];
    for (slot, (node, w)) in out.iter_mut().zip(GL_NODES.iter().zip(GL_WEIGHTS.iter())) {
        *slot = (mid + half * node, w * half);
    }
    out
}

pub type PointwiseFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Direct summation of the lacunary cosine series
/// `Σ_{k<terms} a^k cos(π t_k)` along the doubling orbit
/// `t_{k+1} = 2 t_k mod 1`. Exact in double precision because doubling
/// mod 1 only shifts mantissa bits.
pub fn weierstrass_series(a: f64, terms: usize, x: f64) -> f64 {
    let mut t = wrap_unit(x);
    let mut coef = 1.0;
    let mut acc = 0.0;
    for _ in 0..terms {
        acc += coef * libm::cos(core::f64::consts::PI * t);
        coef *= a;
        t = wrap_unit(2.0 * t);
    }
    acc
}

/// Distance from `x` to the nearest integer.
pub fn tent(x: f64) -> f64 {
    let t = wrap_unit(x);
    t.min(1.0 - t)
}

/// Direct summation of the Takagi series `Σ_{k<terms} 2^{-k} tent(2^k x)`.
pub fn takagi_series(terms: usize, x: f64) -> f64 {
    let mut t = wrap_unit(x);
    let mut coef = 1.0;
    let mut acc = 0.0;
    for _ in 0..terms {
        acc += coef * tent(t);
        coef *= 0.5;
        t = wrap_unit(2.0 * t);
    }
    acc
}

/// Input data for analysis and for the twisted-equation solver.
#[derive(Clone)]
pub enum FunctionInput {
    /// An arbitrary bounded evaluation rule on `[0, 1)`.
    Pointwise(PointwiseFn),
    /// Finite trigonometric polynomial
    /// `constant + Σ_j cos[j]·cos(2π(j+1)x) + Σ_j sin[j]·sin(2π(j+1)x)`.
    Fourier {
        constant: f64,
        cos: Vec<f64>,
        sin: Vec<f64>,
    },
    /// Explicit Haar coefficients; admits genuinely discontinuous data.
    HaarCoeffs(HaarSeries),
    /// `x ↦ inf_m |x − m|`.
    TakagiTent,
    /// `x ↦ −cos(πx)/a` on the fundamental domain `[0, 1)`; as a circle
    /// function it jumps at 0, which is a partition point at every level.
    WeierstrassRhs { a: f64 },
}

impl core::fmt::Debug for FunctionInput {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FunctionInput::Pointwise(_) => write!(f, "Pointwise(..)"),
            FunctionInput::Fourier { constant, cos, sin } => f
                .debug_struct("Fourier")
                .field("constant", constant)
                .field("cos", cos)
                .field("sin", sin)
                .finish(),
            FunctionInput::HaarCoeffs(s) => write!(f, "HaarCoeffs(depth {})", s.depth()),
            FunctionInput::TakagiTent => write!(f, "TakagiTent"),
            FunctionInput::WeierstrassRhs { a } => write!(f, "WeierstrassRhs {{ a: {a} }}"),
        }
    }
}

impl FunctionInput {
    pub fn pointwise(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> FunctionInput {
        FunctionInput::Pointwise(Arc::new(f))
    }

    /// Whether a pointwise evaluation rule exists.
    pub fn is_pointwise(&self) -> bool {
        !matches!(self, FunctionInput::HaarCoeffs(_))
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let x = wrap_unit(x);
        match self {
            FunctionInput::Pointwise(f) => Ok(f(x)),
            FunctionInput::Fourier { constant, cos, sin } => {
                let mut acc = *constant;
                let w = 2.0 * core::f64::consts::PI * x;
                for (j, c) in cos.iter().enumerate() {
                    acc += c * libm::cos((j + 1) as f64 * w);
                }
                for (j, s) in sin.iter().enumerate() {
                    acc += s * libm::sin((j + 1) as f64 * w);
                }
                Ok(acc)
            }
            FunctionInput::HaarCoeffs(_) => Err(Error::PointwiseUnavailable),
            FunctionInput::TakagiTent => Ok(tent(x)),
            FunctionInput::WeierstrassRhs { a } => {
                Ok(-libm::cos(core::f64::consts::PI * x) / a)
            }
        }
    }
}

/// Which Besov norm to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BesovFlavor {
    /// `B^s_{∞,∞}`: `|c0| + sup_k sup_P |d_P|·|P|^{−(s+1)}`.
    InfInf,
    /// `B^s_{1,1}`: `|c0| + Σ_k Σ_P |d_P|·|P|^{−s}`.
    OneOne,
}

/// Truncated Besov norm plus the per-level partial maxima/sums; at finite
/// depth the profile, not the single number, is what decides
/// bounded-versus-divergent.
#[derive(Debug, Clone)]
pub struct NormProfile {
    pub total: f64,
    pub per_level: Vec<f64>,
}

/// Least-squares regularity estimate from per-level coefficient decay.
#[derive(Debug, Clone, Copy)]
pub struct RegularityEstimate {
    /// Fitted Hölder exponent.
    pub exponent: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

/// Mean coefficient plus per-cell synthesis coefficients up to (but not
/// including) level `depth`; the series represents a function piecewise
/// constant on level-`depth` cells.
#[derive(Debug, Clone)]
pub struct HaarSeries {
    depth: usize,
    c0: Complex64,
    d: Vec<Vec<Complex64>>,
}

impl HaarSeries {
    pub fn zero(depth: usize) -> HaarSeries {
        HaarSeries {
            depth,
            c0: Complex64::ZERO,
            d: (0..depth).map(|k| vec![Complex64::ZERO; 1 << k]).collect(),
        }
    }

    pub fn constant(depth: usize, value: Complex64) -> HaarSeries {
        let mut s = HaarSeries::zero(depth);
        s.c0 = value;
        s
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn c0(&self) -> Complex64 {
        self.c0
    }

    pub fn set_c0(&mut self, v: Complex64) {
        self.c0 = v;
    }

    pub fn coeff(&self, level: usize, index: usize) -> Complex64 {
        if level < self.depth {
            self.d[level][index]
        } else {
            Complex64::ZERO
        }
    }

    pub fn coeff_mut(&mut self, level: usize, index: usize) -> &mut Complex64 {
        &mut self.d[level][index]
    }

    pub fn level_coeffs(&self, level: usize) -> &[Complex64] {
        &self.d[level]
    }

    /// Largest coefficient magnitude, `c0` excluded.
    pub fn max_coeff(&self) -> f64 {
        self.d
            .iter()
            .flat_map(|lvl| lvl.iter())
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, factor: Complex64) -> HaarSeries {
        let mut out = self.clone();
        out.c0 *= factor;
        for lvl in &mut out.d {
            for c in lvl.iter_mut() {
                *c *= factor;
            }
        }
        out
    }

    /// Coefficient-wise difference, padded to the deeper of the two.
    pub fn sub(&self, other: &HaarSeries) -> HaarSeries {
        let depth = self.depth.max(other.depth);
        let mut out = HaarSeries::zero(depth);
        out.c0 = self.c0 - other.c0;
        for k in 0..depth {
            for i in 0..(1usize << k) {
                *out.coeff_mut(k, i) = self.coeff(k, i) - other.coeff(k, i);
            }
        }
        out
    }

    /// Bottom-up pyramid: cell averages at level `n = averages.len().log2()`
    /// become the mean coefficient and one `d_P` per cell of level `< n`.
    pub fn analyze(averages: &[Complex64], tree: &PartitionTree) -> HaarSeries {
        let n = averages.len().trailing_zeros() as usize;
        assert_eq!(averages.len(), 1 << n, "averages length must be a power of two");
        assert!(n <= tree.depth());
        let mut vals = averages.to_vec();
        let mut d: Vec<Vec<Complex64>> = (0..n).map(|k| vec![Complex64::ZERO; 1 << k]).collect();
        for k in (0..n).rev() {
            let mut up = Vec::with_capacity(1 << k);
            for i in 0..(1usize << k) {
                let l1 = tree.length(k + 1, 2 * i);
                let l2 = tree.length(k + 1, 2 * i + 1);
                let lp = tree.length(k, i);
                let m1 = vals[2 * i];
                let m2 = vals[2 * i + 1];
                let mp = (m1 * l1 + m2 * l2) / lp;
                d[k][i] = (m1 - mp) * l1;
                up.push(mp);
            }
            vals = up;
        }
        HaarSeries {
            depth: n,
            c0: vals[0],
            d,
        }
    }

    pub fn analyze_real(averages: &[f64], tree: &PartitionTree) -> HaarSeries {
        let lifted: Vec<Complex64> = averages.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        HaarSeries::analyze(&lifted, tree)
    }

    /// Top-down inverse pyramid to cell averages at level `n`; coefficients
    /// deeper than the stored depth count as zero, so `n` may exceed it.
    pub fn synthesize(&self, tree: &PartitionTree, n: usize) -> Vec<Complex64> {
        assert!(n <= tree.depth());
        let mut vals = vec![self.c0];
        for k in 0..n {
            let mut next = vec![Complex64::ZERO; 1 << (k + 1)];
            for i in 0..(1usize << k) {
                let dp = self.coeff(k, i);
                let l1 = tree.length(k + 1, 2 * i);
                let l2 = tree.length(k + 1, 2 * i + 1);
                next[2 * i] = vals[i] + dp / l1;
                next[2 * i + 1] = vals[i] - dp / l2;
            }
            vals = next;
        }
        vals
    }

    pub fn synthesize_real(&self, tree: &PartitionTree, n: usize) -> Vec<f64> {
        self.synthesize(tree, n).iter().map(|c| c.re).collect()
    }

    /// Value of the level-`depth` synthesis at the cell containing `x`;
    /// walks one root-to-leaf path instead of synthesizing everything.
    pub fn point_eval(&self, tree: &PartitionTree, x: f64) -> Complex64 {
        let x = wrap_unit(x);
        let mut m = self.c0;
        let mut i = 0usize;
        for k in 0..self.depth {
            let split = tree.child_split(k, i);
            let dp = self.d[k][i];
            if x < split {
                m += dp / tree.length(k + 1, 2 * i);
                i *= 2;
            } else {
                m -= dp / tree.length(k + 1, 2 * i + 1);
                i = 2 * i + 1;
            }
        }
        m
    }

    /// `c_s(ψ, P) = |P|^{−s} ∫ ψ φ_P dm`, computed from reconstructed
    /// child averages: `∫ ψ φ_P dm = m(Q_1) − m(Q_2) = d_P (1/|Q_1| + 1/|Q_2|)`.
    pub fn pairing_coeff(&self, tree: &PartitionTree, cell: &Cell, s: f64) -> Complex64 {
        let l1 = tree.length(cell.level + 1, 2 * cell.index);
        let l2 = tree.length(cell.level + 1, 2 * cell.index + 1);
        let jump = self.coeff(cell.level, cell.index) * (1.0 / l1 + 1.0 / l2);
        jump * libm::pow(cell.length(), -s)
    }

    /// Truncated Besov norm with its per-level profile.
    pub fn besov_norm(&self, tree: &PartitionTree, s: f64, flavor: BesovFlavor) -> NormProfile {
        let mut per_level = Vec::with_capacity(self.depth);
        for k in 0..self.depth {
            let mut level_val = 0.0f64;
            for i in 0..(1usize << k) {
                let len = tree.length(k, i);
                let mag = self.d[k][i].norm();
                match flavor {
                    BesovFlavor::InfInf => {
                        level_val = level_val.max(mag * libm::pow(len, -(s + 1.0)));
                    }
                    BesovFlavor::OneOne => {
                        level_val += mag * libm::pow(len, -s);
                    }
                }
            }
            per_level.push(level_val);
        }
        let wavelet_part: f64 = match flavor {
            BesovFlavor::InfInf => per_level.iter().copied().fold(0.0, f64::max),
            BesovFlavor::OneOne => per_level.iter().sum(),
        };
        NormProfile {
            total: self.c0.norm() + wavelet_part,
            per_level,
        }
    }

    /// Least-squares slope of `log(sup_P |d_P|/|P|)` against `log 2^{-k}`
    /// over levels `k ∈ [4, depth−1]`.
    pub fn regularity_estimate(&self, tree: &PartitionTree) -> Result<RegularityEstimate> {
        if self.depth < 8 {
            return Err(Error::InvalidParameter(format!(
                "regularity estimate needs depth ≥ 8, got {}",
                self.depth
            )));
        }
        if self.max_coeff() < 1e-14 {
            return Err(Error::DegenerateInput);
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for k in 4..self.depth {
            let mut sup = 0.0f64;
            for i in 0..(1usize << k) {
                sup = sup.max(self.d[k][i].norm() / tree.length(k, i));
            }
            if sup > 0.0 {
                xs.push(-(k as f64) * core::f64::consts::LN_2);
                ys.push(libm::log(sup));
            }
        }
        if xs.len() < 2 {
            return Err(Error::DegenerateInput);
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        let rss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                let fit = my + slope * (x - mx);
                (y - fit) * (y - fit)
            })
            .sum();
        Ok(RegularityEstimate {
            exponent: slope,
            residual: libm::sqrt(rss / n),
        })
    }
}

/// Approximate cell averages `m(ψ, Q)` for all level-`n` cells: order-5
/// Gauss–Legendre per cell for pointwise inputs, exact coefficient
/// projection for explicit Haar data.
pub fn cell_averages(input: &FunctionInput, tree: &PartitionTree, n: usize) -> Result<Vec<f64>> {
    assert!(n <= tree.depth());
    match input {
        FunctionInput::HaarCoeffs(series) => Ok(series.synthesize_real(tree, n)),
        _ => {
            let mut out = Vec::with_capacity(1 << n);
            for i in 0..(1usize << n) {
                let cell = tree.cell(n, i);
                let mut err = None;
                let integral = gauss_panel(cell.a, cell.b, |x| match input.eval(x) {
                    Ok(v) => v,
                    Err(e) => {
                        err = Some(e);
                        0.0
                    }
                });
                if let Some(e) = err {
                    return Err(e);
                }
                out.push(integral / cell.length());
            }
            Ok(out)
        }
    }
}

/// Analysis in one call: quadrature averages followed by the pyramid.
pub fn analyze_input(input: &FunctionInput, tree: &PartitionTree, n: usize) -> Result<HaarSeries> {
    Ok(HaarSeries::analyze_real(&cell_averages(input, tree, n)?, tree))
}

/// Exact finite Haar expansion of the normalized indicator `1_P/|P|`:
/// mean 1 plus one coefficient per ancestor of `P`.
pub fn dirac_expand(tree: &PartitionTree, cell: &Cell) -> HaarSeries {
    let mut series = HaarSeries::zero(cell.level);
    series.c0 = Complex64::ONE;
    for k in 0..cell.level {
        let ancestor = cell.index >> (cell.level - k);
        let went_left = (cell.index >> (cell.level - k - 1)) & 1 == 0;
        let parent_len = tree.length(k, ancestor);
        let l1 = tree.length(k + 1, 2 * ancestor);
        let l2 = tree.length(k + 1, 2 * ancestor + 1);
        // Conditional means of 1_P/|P| along the ancestor chain jump by
        // ±|sibling|/|parent| in the φ_W coordinate.
        let coef = if went_left { l2 / parent_len } else { -(l1 / parent_len) };
        *series.coeff_mut(k, ancestor) = Complex64::new(coef, 0.0);
    }
    series
}

//! Ulam-type discretization of the weighted transfer operators
//! `L_s ψ(x) = Σ_{F y = x} ψ(y)/g(y)^s`, invariant densities, leading
//! eigenpairs, and spectral checks.
//!
//! The normalization uses weights `1/g^s` so that `L_1` fixes densities
//! (`∫ L_1 ψ dm = ∫ ψ dm`); the adjoint relation `∫ (L_1 ψ) θ dm =
//! ∫ ψ (θ∘F) dm` is the duality invariant tested below. Each row of the
//! discretized operator has exactly two entries, one per inverse branch,
//! so applies are linear in the cell count and no dense matrix is ever
//! materialized.

use alloc::vec::Vec;
use alloc::{format, vec};

use num_complex::Complex64;

use crate::circle::CircleMap;
use crate::error::{Error, Result};
use crate::haar::{gauss_nodes, gauss_panel, FunctionInput};
use crate::partition::PartitionTree;

/// Resolution guard for building operator matrices.
pub const MAX_OPERATOR_LEVEL: usize = 20;
const POWER_TOL: f64 = 1e-12;
const POWER_CAP: usize = 10_000;

/// Discretized `L_s` on piecewise constants over level-`n` cells. Row `i`
/// holds the two branch weights `(1/|P_i|)∫_{P_i} g(h_b(x))^{−s} dx` and
/// the column indices of the branch-preimage cells' level-`n` ancestors.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    level: usize,
    exponent: f64,
    cols: Vec<[usize; 2]>,
    weights: Vec<[f64; 2]>,
}

/// Leading eigenpair with the deflated second-eigenvalue estimate.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: f64,
    pub vector: Vec<f64>,
    pub gap_estimate: f64,
}

/// Number of power-iteration steps a density solve needed; carries the
/// slow-mixing warning.
#[derive(Debug, Clone)]
pub struct DensityResult {
    pub rho: Vec<f64>,
    pub iterations: usize,
    pub slow_mixing: bool,
}

/// Build the Ulam discretization of `L_s` at level `n`.
pub fn ulam_matrix(
    map: &CircleMap,
    tree: &PartitionTree,
    n: usize,
    s: f64,
) -> Result<OperatorMatrix> {
    if n == 0 || n > MAX_OPERATOR_LEVEL.min(tree.depth()) {
        return Err(Error::InvalidParameter(format!(
            "operator level must lie in 1..={}, got {n}",
            MAX_OPERATOR_LEVEL.min(tree.depth())
        )));
    }
    let cells = 1usize << n;
    let mut cols = Vec::with_capacity(cells);
    let mut weights = Vec::with_capacity(cells);
    for i in 0..cells {
        let cell = tree.cell(n, i);
        let mut row_cols = [0usize; 2];
        let mut row_w = [0.0f64; 2];
        for branch in 0..2usize {
            // The branch-b preimage of cell (n, i) is the level-(n+1)
            // cell b·2^n + i; its level-n ancestor is the column.
            row_cols[branch] = (branch << n | i) >> 1;
            let b = branch as u8;
            let mut err = None;
            let integral = gauss_panel(cell.a, cell.b, |x| match map.inverse_branch(b, x) {
                Ok(y) => libm::pow(map.deriv(y), -s),
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            row_w[branch] = integral / cell.length();
        }
        cols.push(row_cols);
        weights.push(row_w);
    }
    Ok(OperatorMatrix {
        level: n,
        exponent: s,
        cols,
        weights,
    })
}

impl OperatorMatrix {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn dim(&self) -> usize {
        self.cols.len()
    }

    /// `(L_s ψ)` on cell values.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.dim());
        self.cols
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w[0] * values[c[0]] + w[1] * values[c[1]])
            .collect()
    }

    /// Transpose action (Koopman side on densities' duals).
    pub fn apply_transpose(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.dim());
        let mut out = vec![0.0; self.dim()];
        for (i, (c, w)) in self.cols.iter().zip(&self.weights).enumerate() {
            out[c[0]] += w[0] * values[i];
            out[c[1]] += w[1] * values[i];
        }
        out
    }
}

fn weighted_norm(tree: &PartitionTree, n: usize, v: &[f64]) -> f64 {
    libm::sqrt(
        v.iter()
            .enumerate()
            .map(|(i, x)| tree.length(n, i) * x * x)
            .sum(),
    )
}

fn weighted_dot(tree: &PartitionTree, n: usize, a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (x, y))| tree.length(n, i) * x * y)
        .sum()
}

/// Invariant density of `L_1` by power iteration from the constant
/// vector, normalized to `Σ ρ̂ |P| = 1`.
pub fn invariant_density(
    map: &CircleMap,
    tree: &PartitionTree,
    n: usize,
) -> Result<DensityResult> {
    let op = ulam_matrix(map, tree, n, 1.0)?;
    let mut rho = vec![1.0; op.dim()];
    let mut iterations = POWER_CAP;
    for it in 0..POWER_CAP {
        let next = op.apply(&rho);
        let change = next
            .iter()
            .zip(&rho)
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max);
        rho = next;
        if change < POWER_TOL {
            iterations = it + 1;
            break;
        }
    }
    let mass: f64 = rho
        .iter()
        .enumerate()
        .map(|(i, r)| r * tree.length(n, i))
        .sum();
    for r in rho.iter_mut() {
        *r /= mass;
    }
    if rho.iter().any(|&r| r <= 0.0) {
        return Err(Error::InvalidParameter(
            "invariant density lost positivity".into(),
        ));
    }
    Ok(DensityResult {
        rho,
        iterations,
        slow_mixing: iterations >= POWER_CAP,
    })
}

/// Leading eigenvalue and positive eigenvector of `L_s` by power
/// iteration with Rayleigh quotients; the second eigenvalue is estimated
/// on the deflated operator using the transpose (left) eigenvector.
pub fn leading_eig(
    map: &CircleMap,
    tree: &PartitionTree,
    n: usize,
    s: f64,
) -> Result<EigenPair> {
    let op = ulam_matrix(map, tree, n, s)?;
    let dim = op.dim();
    let mut v = vec![1.0; dim];
    let mut lambda = 1.0;
    for _ in 0..POWER_CAP {
        let mut next = op.apply(&v);
        let norm = weighted_norm(tree, n, &next);
        for x in next.iter_mut() {
            *x /= norm;
        }
        let new_lambda = weighted_dot(tree, n, &op.apply(&next), &next)
            / weighted_dot(tree, n, &next, &next);
        let done = libm::fabs(new_lambda - lambda) < POWER_TOL * libm::fabs(new_lambda);
        v = next;
        lambda = new_lambda;
        if done {
            break;
        }
    }

    // Left eigenvector for deflation; plain Euclidean pairing matches
    // apply_transpose.
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let mut u = vec![1.0; dim];
    for _ in 0..2000 {
        let mut next = op.apply_transpose(&u);
        let norm = libm::sqrt(dot(&next, &next));
        for x in next.iter_mut() {
            *x /= norm;
        }
        u = next;
    }
    let uv = dot(&u, &v);
    let mut w: Vec<f64> = (0..dim).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let coeff0 = dot(&u, &w) / uv;
    for (x, vi) in w.iter_mut().zip(&v) {
        *x -= coeff0 * vi;
    }
    // Complex second-eigenvalue pairs make per-step norms oscillate, so
    // estimate |λ₂| by the geometric mean of the growth factors after a
    // transient burn-in.
    let total_steps = 400usize;
    let burn_in = 200usize;
    let mut log_sum = 0.0f64;
    let mut counted = 0usize;
    let mut vanished = false;
    for step in 0..total_steps {
        // Deflated apply: A w − λ v ⟨u, w⟩/⟨u, v⟩.
        let coeff = dot(&u, &w) / uv;
        let mut next = op.apply(&w);
        for (x, vi) in next.iter_mut().zip(&v) {
            *x -= lambda * vi * coeff;
        }
        let norm = libm::sqrt(dot(&next, &next));
        if norm == 0.0 {
            vanished = true;
            break;
        }
        for x in next.iter_mut() {
            *x /= norm;
        }
        if step >= burn_in {
            log_sum += libm::log(norm);
            counted += 1;
        }
        w = next;
    }
    let second = if vanished || counted == 0 {
        0.0
    } else {
        libm::exp(log_sum / counted as f64)
    };
    if second >= 0.95 * libm::fabs(lambda) {
        return Err(Error::GapTooSmall { lambda, second });
    }
    Ok(EigenPair {
        lambda,
        vector: v,
        gap_estimate: second,
    })
}

/// Two-sided check of the pressure-derivative identity
/// `|d/dβ ln λ(1+β)| = ∫ ln g ρ dm`: returns the absolute difference
/// between the central difference of `−ln λ` and the quadrature of the
/// integral.
pub fn pressure_derivative_check(
    map: &CircleMap,
    tree: &PartitionTree,
    n: usize,
    h: f64,
) -> Result<f64> {
    if !(1e-4..=1e-2).contains(&h) {
        return Err(Error::InvalidParameter(format!(
            "step must lie in [1e-4, 1e-2], got {h}"
        )));
    }
    let plus = leading_eig(map, tree, n, 1.0 + h)?.lambda;
    let minus = leading_eig(map, tree, n, 1.0 - h)?.lambda;
    let diff = -(libm::log(plus) - libm::log(minus)) / (2.0 * h);
    let rho = invariant_density(map, tree, n)?.rho;
    let integral: f64 = (0..tree.num_cells(n))
        .map(|i| {
            let cell = tree.cell(n, i);
            rho[i] * gauss_panel(cell.a, cell.b, |x| libm::log(map.deriv(x)))
        })
        .sum();
    Ok(libm::fabs(diff - integral))
}

/// The leading-eigenvector obstruction `⟨v/g^β, ρ_{1+β}⟩`, with the
/// eigenvector normalized to unit mass.
pub fn obstruction(
    map: &CircleMap,
    tree: &PartitionTree,
    n: usize,
    v: &FunctionInput,
    beta: Complex64,
) -> Result<Complex64> {
    let eig = leading_eig(map, tree, n, 1.0 + beta.re)?;
    let mass: f64 = eig
        .vector
        .iter()
        .enumerate()
        .map(|(i, r)| r * tree.length(n, i))
        .sum();
    let mut acc = Complex64::ZERO;
    for i in 0..tree.num_cells(n) {
        let cell = tree.cell(n, i);
        let mut cell_int = Complex64::ZERO;
        for (x, w) in gauss_nodes(cell.a, cell.b) {
            let weight = (-beta * libm::log(map.deriv(x))).exp();
            cell_int += weight * v.eval(x)? * w;
        }
        acc += cell_int * (eig.vector[i] / mass);
    }
    Ok(acc)
}

/// Correlations `C_k = ∫ φ·(ψ∘F^k)·ρ̂ dm − (∫φ ρ̂ dm)(∫ψ ρ̂ dm)`.
/// `C_0` is quadratured pointwise; later lags evolve `φ·ρ̂` with the
/// level-`n` Ulam operator and pair against `ψ`.
pub fn correlations(
    map: &CircleMap,
    tree: &PartitionTree,
    n: usize,
    phi: &FunctionInput,
    psi: &FunctionInput,
    kmax: usize,
) -> Result<Vec<f64>> {
    let op = ulam_matrix(map, tree, n, 1.0)?;
    let rho = invariant_density(map, tree, n)?.rho;
    let cells = tree.num_cells(n);
    let mut phi_avg = Vec::with_capacity(cells);
    let mut psi_avg = Vec::with_capacity(cells);
    let mut c0 = 0.0;
    let mut mean_phi = 0.0;
    let mut mean_psi = 0.0;
    for i in 0..cells {
        let cell = tree.cell(n, i);
        let mut pp = 0.0;
        let mut pa = 0.0;
        let mut sa = 0.0;
        for (x, w) in gauss_nodes(cell.a, cell.b) {
            let f = phi.eval(x)?;
            let g = psi.eval(x)?;
            pp += f * g * w;
            pa += f * w;
            sa += g * w;
        }
        c0 += pp * rho[i];
        mean_phi += pa * rho[i];
        mean_psi += sa * rho[i];
        phi_avg.push(pa / cell.length());
        psi_avg.push(sa / cell.length());
    }
    let mut out = Vec::with_capacity(kmax + 1);
    out.push(c0 - mean_phi * mean_psi);
    let mut evolved: Vec<f64> = phi_avg
        .iter()
        .zip(&rho)
        .map(|(p, r)| p * r)
        .collect();
    for _ in 1..=kmax {
        evolved = op.apply(&evolved);
        let ck: f64 = (0..cells)
            .map(|i| tree.length(n, i) * psi_avg[i] * evolved[i])
            .sum();
        out.push(ck - mean_phi * mean_psi);
    }
    Ok(out)
}

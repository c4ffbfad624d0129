//! Nested Markov partitions `P^0, P^1, …, P^N` generated by preimages of
//! the fixed point, and the grid metric.
//!
//! Cells at level `k` are indexed positionally, `0 ≤ i < 2^k`; the binary
//! digits of `i` (most significant first) are exactly the cylinder
//! address `w_1 … w_k`, with the convention that child `Q_1 = append-0`
//! and `Q_2 = append-1`. Under that convention `F` maps the cell with
//! address `w_1 … w_k` onto the cell `w_2 … w_k`, i.e. index `i mod
//! 2^{k−1}` one level up, and children of cell `i` are `2i` and `2i+1`.
//! Cells are half-open `[a, b)`: a shared endpoint belongs to the cell on
//! its right.

use alloc::string::String;
use alloc::{format, vec::Vec};

use crate::circle::{circle_dist, wrap_unit, CircleMap};
use crate::error::{Error, Result};

/// Hard depth cap: `2^26` cells is the memory guard.
pub const MAX_DEPTH: usize = 26;

/// One partition cell `[a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub level: usize,
    pub index: usize,
    pub a: f64,
    pub b: f64,
}

impl Cell {
    /// `|P| = b − a`.
    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    /// Cylinder address as a bit string, empty for the whole circle.
    pub fn address(&self) -> String {
        let mut s = String::with_capacity(self.level);
        for j in (0..self.level).rev() {
            s.push(if (self.index >> j) & 1 == 1 { '1' } else { '0' });
        }
        s
    }
}

/// Result of the grid metric: the length of the smallest common cell,
/// plus a flag marking that the minimum was still attained at the deepest
/// stored level (so the true infimum may be smaller).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridDistance {
    pub value: f64,
    pub depth_limited: bool,
}

/// The nested partition up to depth `N`, with per-level sorted endpoint
/// arrays. `endpoints[k]` holds `2^k + 1` values starting at 0 and ending
/// at the sentinel 1.
#[derive(Debug, Clone)]
pub struct PartitionTree {
    depth: usize,
    endpoints: Vec<Vec<f64>>,
}

impl PartitionTree {
    /// Build the tree by repeatedly pulling every endpoint back through
    /// both inverse branches.
    pub fn build(map: &CircleMap, depth: usize) -> Result<PartitionTree> {
        if depth == 0 || depth > MAX_DEPTH {
            return Err(Error::InvalidParameter(format!(
                "depth must lie in 1..={MAX_DEPTH}, got {depth}"
            )));
        }
        let mut endpoints = Vec::with_capacity(depth + 1);
        endpoints.push(alloc::vec![0.0, 1.0]);
        for k in 0..depth {
            let prev = &endpoints[k];
            let cells = 1usize << k;
            let mut next = Vec::with_capacity(2 * cells + 1);
            for branch in 0..2u8 {
                for &e in &prev[..cells] {
                    next.push(map.inverse_branch(branch, e)?);
                }
            }
            next.push(1.0);
            endpoints.push(next);
        }
        Ok(PartitionTree { depth, endpoints })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_cells(&self, level: usize) -> usize {
        1usize << level
    }

    /// Left endpoints of all level-`k` cells (the preimage set `F^{-k}(0)`).
    pub fn left_endpoints(&self, level: usize) -> &[f64] {
        let e = &self.endpoints[level];
        &e[..e.len() - 1]
    }

    pub fn cell(&self, level: usize, index: usize) -> Cell {
        let e = &self.endpoints[level];
        Cell {
            level,
            index,
            a: e[index],
            b: e[index + 1],
        }
    }

    pub fn length(&self, level: usize, index: usize) -> f64 {
        let e = &self.endpoints[level];
        e[index + 1] - e[index]
    }

    /// Index of the level-`k` cell whose half-open interval contains `x`.
    pub fn cell_index_of(&self, x: f64, level: usize) -> usize {
        let x = wrap_unit(x);
        let e = &self.endpoints[level];
        // partition_point returns the count of endpoints ≤ x; the first
        // entry is 0 ≤ x, so the count is ≥ 1.
        e[..e.len() - 1].partition_point(|&a| a <= x) - 1
    }

    /// The unique level-`k` cell with `x ∈ [a, b)`.
    pub fn cell_of(&self, x: f64, level: usize) -> Cell {
        self.cell(level, self.cell_index_of(x, level))
    }

    /// Index path `[P_0(x), …, P_n(x)]` of the cells containing `x`,
    /// one entry per level `0..=n`.
    pub fn index_path(&self, x: f64, n: usize) -> Vec<usize> {
        (0..=n).map(|k| self.cell_index_of(x, k)).collect()
    }

    /// Image of a cell under the Markov shift: `F` maps level-`k` cell
    /// `i` onto level-`(k−1)` cell `i mod 2^{k−1}`.
    pub fn shift_index(&self, level: usize, index: usize) -> usize {
        debug_assert!(level >= 1);
        index & ((1usize << (level - 1)) - 1)
    }

    /// Children of `(level, index)` are `(level+1, 2i)` and `(level+1, 2i+1)`.
    pub fn child_indices(&self, index: usize) -> (usize, usize) {
        (2 * index, 2 * index + 1)
    }

    pub fn parent_index(&self, index: usize) -> usize {
        index / 2
    }

    /// The endpoint separating the two children of `(level, index)`.
    pub fn child_split(&self, level: usize, index: usize) -> f64 {
        self.endpoints[level + 1][2 * index + 1]
    }

    /// `d(x, y) = inf |P|` over cells containing both points, truncated
    /// at the stored depth.
    pub fn grid_metric(&self, x: f64, y: f64) -> GridDistance {
        let mut level = 0;
        let mut index = 0;
        while level < self.depth {
            let ix = self.cell_index_of(x, level + 1);
            if ix != self.cell_index_of(y, level + 1) {
                break;
            }
            level += 1;
            index = ix;
        }
        GridDistance {
            value: self.length(level, index),
            depth_limited: level == self.depth,
        }
    }

    /// Verifies the Markov shift property on every stored cell: image
    /// endpoints under `F` must match the shifted cell's endpoints.
    pub fn check_shift_property(&self, map: &CircleMap, tol: f64) -> Result<()> {
        for level in 1..=self.depth {
            for index in 0..self.num_cells(level) {
                let cell = self.cell(level, index);
                let image = self.cell(level - 1, self.shift_index(level, index));
                let da = circle_dist(map.eval(cell.a), image.a);
                let db = circle_dist(map.eval(cell.b), image.b);
                if da > tol || db > tol {
                    return Err(Error::InvalidParameter(format!(
                        "shift property violated at level {level} index {index}: \
                         endpoint errors {da:.3e}, {db:.3e}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use approx::assert_abs_diff_eq;

    fn linear_tree(depth: usize) -> PartitionTree {
        PartitionTree::build(&CircleMap::linear(), depth).unwrap()
    }

    #[test]
    fn linear_level2_is_dyadic() {
        let tree = linear_tree(2);
        let expect = [0.0, 0.25, 0.5, 0.75];
        for (i, &e) in expect.iter().enumerate() {
            assert_abs_diff_eq!(tree.left_endpoints(2)[i], e, epsilon = 1e-14);
        }
    }

    #[test]
    fn perturbed_level1_and_level2() {
        let map = CircleMap::perturbed_doubling(0.1).unwrap();
        let tree = PartitionTree::build(&map, 2).unwrap();
        assert_eq!(tree.left_endpoints(1), &[0.0, 0.5]);

        // Bisection oracle for the two preimages of 0.5.
        let solve = |lo0: f64, hi0: f64, target: f64| {
            let (mut lo, mut hi) = (lo0, hi0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if 2.0 * mid + 0.1 * (2.0 * core::f64::consts::PI * mid).sin() < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let x1 = solve(0.0, 0.5, 0.5);
        let x2 = solve(0.5, 1.0, 1.5);
        let got = tree.left_endpoints(2);
        assert_abs_diff_eq!(got[0], 0.0, epsilon = 0.0);
        assert_abs_diff_eq!(got[1], x1, epsilon = 1e-13);
        assert_abs_diff_eq!(got[2], 0.5, epsilon = 1e-13);
        assert_abs_diff_eq!(got[3], x2, epsilon = 1e-13);
    }

    #[test]
    fn depth_guard() {
        assert!(PartitionTree::build(&CircleMap::linear(), 0).is_err());
        assert!(PartitionTree::build(&CircleMap::linear(), 27).is_err());
    }

    #[test]
    fn cell_of_examples() {
        let tree = linear_tree(3);
        let c = tree.cell_of(0.3, 2);
        assert_eq!((c.a, c.b), (0.25, 0.5));
        let root = tree.cell_of(0.77, 0);
        assert_eq!((root.a, root.b), (0.0, 1.0));
        // Half-open convention: a shared endpoint belongs to the right cell.
        let c = tree.cell_of(0.25, 2);
        assert_eq!((c.a, c.b), (0.25, 0.5));
    }

    #[test]
    fn addresses_and_structure() {
        let tree = linear_tree(3);
        assert_eq!(tree.cell(0, 0).address(), "");
        assert_eq!(tree.cell(3, 5).address(), "101");
        assert_eq!(tree.num_cells(3), 8);
        assert_eq!(tree.shift_index(3, 5), 1);
        assert_eq!(tree.child_indices(2), (4, 5));
        assert_eq!(tree.parent_index(5), 2);
    }

    #[test]
    fn children_partition_parent_exactly() {
        let map = CircleMap::perturbed_doubling(0.1).unwrap();
        let tree = PartitionTree::build(&map, 10).unwrap();
        for level in 0..10 {
            let mut total = 0.0;
            for i in 0..tree.num_cells(level) {
                let p = tree.cell(level, i);
                let (l, r) = tree.child_indices(i);
                let cl = tree.cell(level + 1, l);
                let cr = tree.cell(level + 1, r);
                assert_eq!(cl.a, p.a);
                assert_eq!(cl.b, cr.a);
                assert_eq!(cr.b, p.b);
                total += p.length();
            }
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn shift_property_holds() {
        let map = CircleMap::perturbed_doubling(0.1).unwrap();
        let tree = PartitionTree::build(&map, 12).unwrap();
        tree.check_shift_property(&map, 1e-10).unwrap();
    }

    #[test]
    fn grid_metric_examples() {
        let tree = linear_tree(10);
        assert_abs_diff_eq!(tree.grid_metric(0.1, 0.2).value, 0.25, epsilon = 1e-14);
        let d = tree.grid_metric(0.49, 0.51);
        assert_eq!(d.value, 1.0);
        assert!(!d.depth_limited);
        let diag = tree.grid_metric(0.3, 0.3);
        assert!(diag.depth_limited);
        assert_abs_diff_eq!(
            diag.value,
            tree.cell_of(0.3, 10).length(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn grid_metric_is_ultrametric() {
        let map = CircleMap::perturbed_doubling(0.1).unwrap();
        let tree = PartitionTree::build(&map, 12).unwrap();
        let rng = CounterRng::new(5);
        for i in 0..1000u64 {
            let (x, y, z) = (
                rng.uniform(3 * i),
                rng.uniform(3 * i + 1),
                rng.uniform(3 * i + 2),
            );
            let dxz = tree.grid_metric(x, z).value;
            let dxy = tree.grid_metric(x, y).value;
            let dyz = tree.grid_metric(y, z).value;
            assert!(dxz <= dxy.max(dyz));
        }
    }

    #[test]
    fn distortion_stays_bounded() {
        // Bounded distortion: cylinder lengths track the derivative
        // cocycle, |P| ≍ 1/g_N, with constants uniform in depth.
        let map = CircleMap::perturbed_doubling(0.1).unwrap();
        let tree = PartitionTree::build(&map, 13).unwrap();
        let band = |level: usize| {
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for i in 0..tree.num_cells(level) {
                let cell = tree.cell(level, i);
                let v = cell.length() * map.weight_product(cell.a, level, 1.0);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo, hi)
        };
        let (lo9, hi9) = band(9);
        let (lo13, hi13) = band(13);
        for v in [lo9, hi9, lo13, hi13] {
            assert!((0.25..4.0).contains(&v), "distortion escaped: {v}");
        }
        // The spread must stabilize rather than grow with depth.
        assert!(hi13 / lo13 < 1.01 * (hi9 / lo9));
    }

    #[test]
    fn endpoints_are_nested_bit_exactly() {
        let map = CircleMap::perturbed_doubling(0.1).unwrap();
        let tree = PartitionTree::build(&map, 11).unwrap();
        for level in 0..11 {
            for i in 0..=tree.num_cells(level) {
                assert_eq!(
                    tree.endpoints[level][i],
                    tree.endpoints[level + 1][2 * i],
                    "level {level} endpoint {i} not inherited"
                );
            }
        }
    }
}

//! Sparsifying prior transforms.
//!
//! Three 1D operators, all `n x n` and periodic:
//! - the local differencing operator of order `2p + 1`, a scaled Newton
//!   divided difference detecting jumps between adjacent cells;
//! - the global concentration-factor operator, which modulates discrete
//!   Fourier coefficients so the partial sum converges to the jump function,
//!   evaluated at the in-cell shift `zeta`;
//! - their difference, the residual transform, which annihilates what both
//!   detectors agree on (smooth content) and responds mainly at jumps.
//!
//! At `zeta = 1/2` the concentration operator reproduces the differencing
//! operator exactly, so the residual vanishes there. The 2D variant applies
//! a 1D transform separably along both image axes.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Exact binomial coefficient in integer arithmetic.
fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut out = 1u64;
    for i in 0..k {
        out = out * (n - i) as u64 / (i + 1) as u64;
    }
    out
}

/// Stencil weights of the order-`2p + 1` differencing operator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StencilCoefficients {
    p: usize,
    /// `q_{l,p} = binom(2p, p + |l|)` for `l = 0..p`.
    q: Vec<u64>,
}

impl StencilCoefficients {
    pub fn new(p: usize) -> Self {
        let q = (0..=p).map(|l| binomial(2 * p, p + l)).collect();
        Self { p, q }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `q_{0,p} = binom(2p, p)`, the normalization of the stencil.
    pub fn q0(&self) -> u64 {
        self.q[0]
    }

    pub fn q(&self, l: usize) -> u64 {
        self.q[l]
    }
}

/// Which of the three operators a [`PriorTransform`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    Local,
    Global,
    Residual,
}

/// A dense 1D prior transform together with its construction parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorTransform {
    kind: TransformKind,
    n: usize,
    p: usize,
    zeta: f64,
    matrix: DMatrix<f64>,
}

impl PriorTransform {
    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// In-cell evaluation shift of the global operator; `1/2` for the local
    /// operator, which detects at cell midpoints.
    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

/// Order-`2p + 1` local differencing operator. Row `j` realizes
/// `(1/q_{0,p}) sum_l (-1)^l binom(2p+1, p-l) (f_{j+1+l} - f_{j-l})` with
/// periodic index wrap.
pub fn local_transform(n: usize, p: usize) -> Result<PriorTransform> {
    if n <= 2 * p + 2 {
        return Err(Error::StencilTooWide { p, n, min: 2 * p + 2 });
    }
    let q0 = binomial(2 * p, p) as f64;
    let mut matrix = DMatrix::zeros(n, n);
    for j in 0..n {
        for l in 0..=p {
            let c = (-1f64).powi(l as i32) * binomial(2 * p + 1, p - l) as f64 / q0;
            matrix[(j, (j + 1 + l) % n)] += c;
            matrix[(j, (j + n - l) % n)] -= c;
        }
    }
    Ok(PriorTransform { kind: TransformKind::Local, n, p, zeta: 0.5, matrix })
}

/// Entry value of the concentration operator for column offset `d = j - j'`
/// (mod `n`). The mode sum runs over `k = 1..n/2` with the Nyquist term
/// weighted by 1/2: on the grid the `+n/2` and `-n/2` modes coincide, and
/// counting the shared mode once is what makes the operator reproduce the
/// differencing stencil exactly at `zeta = 1/2`.
fn concentration_entry(n: usize, p: usize, zeta: f64, d: usize) -> f64 {
    let ds = 2.0 * std::f64::consts::PI / n as f64;
    let q0 = binomial(2 * p, p) as f64;
    let phi_plus = d as f64 + 0.5 + zeta;
    let phi_minus = d as f64 - (0.5 - zeta);
    let mut sum = 0.0;
    for k in 1..=n / 2 {
        let weight = if k == n / 2 { 0.5 } else { 1.0 };
        let kds = k as f64 * ds;
        let band = (kds / 2.0).sin().powi(2 * p as i32);
        sum += weight * band * ((kds * phi_plus).cos() - (kds * phi_minus).cos());
    }
    2f64.powi(2 * p as i32 + 1) / (n as f64 * q0) * sum
}

/// Global concentration-factor edge detector evaluated at the in-cell shift
/// `zeta`. Circulant: entry `(j, j')` depends only on `j - j'` mod `n`.
pub fn concentration_transform(n: usize, p: usize, zeta: f64) -> Result<PriorTransform> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidGridSize(n));
    }
    if !(0.0..1.0).contains(&zeta) {
        return Err(Error::InvalidShift(zeta));
    }
    let column: Vec<f64> = (0..n).map(|d| concentration_entry(n, p, zeta, d)).collect();
    let matrix = DMatrix::from_fn(n, n, |j, jp| column[(j + n - jp) % n]);
    Ok(PriorTransform { kind: TransformKind::Global, n, p, zeta, matrix })
}

/// Residual transform: local minus global. Small on smooth content,
/// pronounced at jump discontinuities, and identically zero at `zeta = 1/2`.
pub fn residual_transform(n: usize, p: usize, zeta: f64) -> Result<PriorTransform> {
    let local = local_transform(n, p)?;
    let global = concentration_transform(n, p, zeta)?;
    let matrix = local.matrix - global.matrix;
    Ok(PriorTransform { kind: TransformKind::Residual, n, p, zeta, matrix })
}

/// Linear operator interface the solvers consume: application, adjoint, the
/// diagonal of the weighted Gram matrix, and a dense form.
pub trait PriorOp {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
    fn apply_adjoint(&self, v: &DVector<f64>) -> DVector<f64>;
    /// Diagonal of `Phi^T diag(theta) Phi`.
    fn weighted_gram_diag(&self, theta: &DVector<f64>) -> DVector<f64>;
    /// Dense matrix form; the stacked 2D form is large, build on demand only.
    fn dense(&self) -> DMatrix<f64>;
}

impl PriorOp for DMatrix<f64> {
    fn rows(&self) -> usize {
        self.nrows()
    }

    fn cols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self * x
    }

    fn apply_adjoint(&self, v: &DVector<f64>) -> DVector<f64> {
        self.tr_mul(v)
    }

    fn weighted_gram_diag(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.ncols(), |i, _| {
            (0..self.nrows()).map(|r| theta[r] * self[(r, i)] * self[(r, i)]).sum()
        })
    }

    fn dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

impl PriorOp for PriorTransform {
    fn rows(&self) -> usize {
        self.n
    }

    fn cols(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    fn apply_adjoint(&self, v: &DVector<f64>) -> DVector<f64> {
        self.matrix.tr_mul(v)
    }

    fn weighted_gram_diag(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.matrix.weighted_gram_diag(theta)
    }

    fn dense(&self) -> DMatrix<f64> {
        self.matrix.clone()
    }
}

/// Separable 2D stacking of a 1D transform over an `n x n` image
/// (column-major vectorization): the first `n^2` rows apply the base
/// transform along every image row, the next `n^2` rows along every column.
#[derive(Debug, Clone)]
pub struct StackedTransform2D {
    base: PriorTransform,
    n: usize,
}

/// Stacks `base` along both axes of an `n x n` image; requires `base.n == n`.
pub fn stack_2d(base: PriorTransform, n: usize) -> Result<StackedTransform2D> {
    if base.n() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: base.n() });
    }
    Ok(StackedTransform2D { base, n })
}

impl StackedTransform2D {
    pub fn base(&self) -> &PriorTransform {
        &self.base
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

impl PriorOp for StackedTransform2D {
    fn rows(&self) -> usize {
        2 * self.n * self.n
    }

    fn cols(&self) -> usize {
        self.n * self.n
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let image = DMatrix::from_column_slice(n, n, x.as_slice());
        let along_rows = &image * self.base.matrix.transpose();
        let along_cols = &self.base.matrix * image;
        let mut out = DVector::zeros(2 * n * n);
        out.rows_mut(0, n * n).copy_from_slice(along_rows.as_slice());
        out.rows_mut(n * n, n * n).copy_from_slice(along_cols.as_slice());
        out
    }

    fn apply_adjoint(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let v1 = DMatrix::from_column_slice(n, n, &v.as_slice()[..n * n]);
        let v2 = DMatrix::from_column_slice(n, n, &v.as_slice()[n * n..]);
        let out = v1 * &self.base.matrix + self.base.matrix.tr_mul(&v2);
        DVector::from_column_slice(out.as_slice())
    }

    fn weighted_gram_diag(&self, theta: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let theta_rows = DMatrix::from_column_slice(n, n, &theta.as_slice()[..n * n]);
        let theta_cols = DMatrix::from_column_slice(n, n, &theta.as_slice()[n * n..]);
        let squared = self.base.matrix.map(|v| v * v);
        // Row block `(i, r)` weighs entry `(i, c)` by `Phi[r, c]^2`; column
        // block `(r, c)` weighs entry `(i, c)` by `Phi[r, i]^2`.
        let diag = &theta_rows * &squared + squared.tr_mul(&theta_cols);
        DVector::from_column_slice(diag.as_slice())
    }

    fn dense(&self) -> DMatrix<f64> {
        let n = self.n;
        let eye = DMatrix::identity(n, n);
        let top = self.base.matrix.kronecker(&eye);
        let bottom = eye.kronecker(&self.base.matrix);
        let mut out = DMatrix::zeros(2 * n * n, n * n);
        out.rows_mut(0, n * n).copy_from(&top);
        out.rows_mut(n * n, n * n).copy_from(&bottom);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{sample_example, true_edge_vector, Grid, SignalId};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stencil_coefficients_exact() {
        let c = StencilCoefficients::new(0);
        assert_eq!(c.q0(), 1);
        let c = StencilCoefficients::new(1);
        assert_eq!((c.q(0), c.q(1)), (2, 1));
        let c = StencilCoefficients::new(3);
        assert_eq!(c.q0(), binomial(6, 3));
        assert_eq!(c.q0(), 20);
    }

    #[test]
    fn first_difference_rows() {
        let t = local_transform(4, 0).unwrap();
        let x = DVector::from_column_slice(&[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(t.apply(&x).as_slice(), &[1.0, -1.0, 0.0, 0.0]);
        let ones = DVector::from_element(4, 1.0);
        assert_eq!(t.apply(&ones).abs().max(), 0.0);
        assert!(local_transform(4, 1).is_err());
    }

    #[test]
    fn third_order_stencil_annihilates_quadratics() {
        let n = 16;
        let t = local_transform(n, 1).unwrap();
        let f = DVector::from_fn(n, |j, _| {
            let x = j as f64;
            2.0 * x * x - 3.0 * x + 1.0
        });
        let out = t.apply(&f);
        // Rows whose stencil does not wrap see an exact zero.
        for j in 1..n - 3 {
            assert_abs_diff_eq!(out[j], 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn concentration_rows_annihilate_constants() {
        for (n, p, zeta) in [(8, 0, 0.25), (32, 1, 0.0), (64, 0, 0.75), (128, 1, 0.25)] {
            let s = concentration_transform(n, p, zeta).unwrap();
            let ones = DVector::from_element(n, 1.0);
            assert!(s.apply(&ones).abs().max() <= 1e-10, "n={n} p={p} zeta={zeta}");
        }
    }

    #[test]
    fn concentration_matches_local_at_half_shift() {
        for n in [8, 16, 64, 128] {
            for p in [0, 1] {
                let t = local_transform(n, p).unwrap();
                let s = concentration_transform(n, p, 0.5).unwrap();
                let diff = (t.matrix() - s.matrix()).abs().max();
                assert!(diff <= 1e-13, "n={n} p={p}: {diff:e}");
            }
        }
    }

    #[test]
    fn concentration_entries_match_compensated_summation() {
        // Independent per-entry evaluation of the mode sum with Kahan
        // compensation, in reversed order, against the circulant fill.
        let (n, p, zeta) = (64, 1, 0.25);
        let s = concentration_transform(n, p, zeta).unwrap();
        let ds = 2.0 * std::f64::consts::PI / n as f64;
        let q0 = binomial(2 * p, p) as f64;
        for (j, jp) in [(0, 0), (5, 17), (63, 2), (31, 32), (40, 40)] {
            let d = j as f64 - jp as f64;
            let phi_plus = d + 0.5 + zeta;
            let phi_minus = d - (0.5 - zeta);
            let mut sum = 0.0f64;
            let mut comp = 0.0f64;
            for k in (1..=n / 2).rev() {
                let w = if k == n / 2 { 0.5 } else { 1.0 };
                let kds = k as f64 * ds;
                let term = w
                    * (kds / 2.0).sin().powi(2 * p as i32)
                    * ((kds * phi_plus).cos() - (kds * phi_minus).cos());
                let y = term - comp;
                let t = sum + y;
                comp = (t - sum) - y;
                sum = t;
            }
            let expected = 2f64.powi(2 * p as i32 + 1) / (n as f64 * q0) * sum;
            assert_abs_diff_eq!(s.matrix()[(j, jp)], expected, epsilon = 1e-13);
        }
    }

    #[test]
    fn concentration_peaks_at_step_jumps() {
        let n = 128;
        let grid = Grid::new(n).unwrap();
        let f = sample_example(SignalId::F4, &grid).unwrap();
        let s = concentration_transform(n, 0, 0.25).unwrap();
        let response = s.apply(f.values());
        let peak = response.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let edges = true_edge_vector(SignalId::F4, &grid).unwrap();
        let jump = edges.values()[32].abs();
        // Largest responses sit within one cell of the true jump cells and
        // approximate the jump magnitude.
        let mut indexed: Vec<(usize, f64)> =
            response.iter().enumerate().map(|(j, v)| (j, v.abs())).collect();
        indexed.sort_by(|a, b| b.1.total_cmp(&a.1));
        for (j, _) in &indexed[..2] {
            let near_jump = [32usize, 96].iter().any(|&c| {
                let d = (*j as i64 - c as i64).rem_euclid(n as i64);
                d.min(n as i64 - d) <= 1
            });
            assert!(near_jump, "peak at {j}");
        }
        assert!(peak > 0.5 * jump && peak < 1.5 * jump, "peak {peak} vs jump {jump}");
    }

    #[test]
    fn residual_vanishes_at_half_shift_and_kills_constants() {
        for n in [8, 16, 32, 64, 128] {
            let r = residual_transform(n, 0, 0.5).unwrap();
            assert!(r.matrix().abs().max() <= 1e-13, "n={n}");
            let r = residual_transform(n, 0, 0.25).unwrap();
            let ones = DVector::from_element(n, 1.0);
            assert!(r.apply(&ones).abs().max() <= 1e-10, "n={n}");
        }
        assert!(concentration_transform(64, 0, 1.0).is_err());
        assert!(concentration_transform(63, 0, 0.25).is_err());
    }

    #[test]
    fn residual_separates_jumps_from_smooth_variation() {
        // Frozen regression bound: the residual response within one cell of
        // a jump dominates the response two or more cells away.
        let n = 128;
        let grid = Grid::new(n).unwrap();
        let r = residual_transform(n, 0, 0.25).unwrap();
        for id in [SignalId::F1, SignalId::F2, SignalId::F3] {
            let f = sample_example(id, &grid).unwrap();
            let response = r.apply(f.values());
            let jump_cells = true_edge_vector(id, &grid).unwrap().support();
            let dist = |j: usize| {
                jump_cells
                    .iter()
                    .map(|&c| {
                        let d = (j as i64 - c as i64).rem_euclid(n as i64);
                        d.min(n as i64 - d)
                    })
                    .min()
                    .unwrap()
            };
            let near = (0..n)
                .filter(|&j| dist(j) <= 1)
                .map(|j| response[j].abs())
                .fold(0.0, f64::max);
            let far = (0..n)
                .filter(|&j| dist(j) >= 2)
                .map(|j| response[j].abs())
                .fold(0.0, f64::max);
            assert!(near / far >= 1.5, "{}: near {near} far {far}", id.as_str());
        }
    }

    #[test]
    fn stacked_2d_matches_kronecker_dense() {
        let n = 8;
        let base = residual_transform(n, 0, 0.25).unwrap();
        let stacked = stack_2d(base, n).unwrap();
        let dense = stacked.dense();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let x = DVector::from_fn(n * n, |_, _| rng.gen_range(-1.0..1.0));
            let fast = stacked.apply(&x);
            let slow = &dense * &x;
            assert!((fast - &slow).norm() / slow.norm().max(1e-30) < 1e-12);
            let v = DVector::from_fn(2 * n * n, |_, _| rng.gen_range(-1.0..1.0));
            let fast_t = stacked.apply_adjoint(&v);
            let slow_t = dense.tr_mul(&v);
            assert!((fast_t - &slow_t).norm() / slow_t.norm().max(1e-30) < 1e-12);
        }
    }

    #[test]
    fn stacked_2d_separability_and_annihilation() {
        let n = 16;
        let base = local_transform(n, 0).unwrap();
        let stacked = stack_2d(base, n).unwrap();
        let constant = DVector::from_element(n * n, 3.25);
        assert!(stacked.apply(&constant).abs().max() <= 1e-12);
        // An image varying only along rows (constant within each column) has
        // no response in the column-direction block.
        let image = DMatrix::from_fn(n, n, |_, c| (c as f64).sin());
        let x = DVector::from_column_slice(image.as_slice());
        let out = stacked.apply(&x);
        let along_cols = out.rows(n * n, n * n);
        assert!(along_cols.abs().max() <= 1e-12);
        assert!(out.rows(0, n * n).abs().max() > 0.1);
    }

    #[test]
    fn weighted_gram_diag_matches_dense() {
        let n = 6;
        let base = residual_transform(n, 0, 0.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // 1D case.
        let theta = DVector::from_fn(n, |_, _| rng.gen_range(0.1..10.0));
        let dense = base.dense();
        let direct = dense.transpose() * DMatrix::from_diagonal(&theta) * &dense;
        let fast = base.weighted_gram_diag(&theta);
        for i in 0..n {
            assert_abs_diff_eq!(fast[i], direct[(i, i)], epsilon = 1e-12);
        }
        // Stacked 2D case.
        let stacked = stack_2d(base, n).unwrap();
        let theta = DVector::from_fn(2 * n * n, |_, _| rng.gen_range(0.1..10.0));
        let dense = stacked.dense();
        let direct = dense.transpose() * DMatrix::from_diagonal(&theta) * &dense;
        let fast = stacked.weighted_gram_diag(&theta);
        for i in 0..n * n {
            assert_abs_diff_eq!(fast[i], direct[(i, i)], epsilon = 1e-12);
        }
    }

    proptest! {
        // Linearity of all operator kinds.
        #[test]
        fn transforms_are_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..500) {
            let n = 16;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            for t in [
                local_transform(n, 0).unwrap(),
                concentration_transform(n, 0, 0.25).unwrap(),
                residual_transform(n, 1, 0.25).unwrap(),
            ] {
                let lhs = t.apply(&(a * &u + b * &v));
                let rhs = a * t.apply(&u) + b * t.apply(&v);
                prop_assert!((lhs - rhs).abs().max() < 1e-11);
            }
        }
    }
}

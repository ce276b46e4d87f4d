//! Measurement operators and SNR-calibrated data acquisition.
//!
//! Four operator kinds are supported, in 1D and (for blur and Fourier)
//! separably in 2D: the identity, a periodic Gaussian blur, random row
//! subsampling, and partial Fourier sampling. Complex Fourier measurements
//! are exposed to the solvers through a real stacking `[Re; Im]` with the
//! per-row noise precision doubled, so all downstream arithmetic stays real.

use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// The kind of measurement operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Identity,
    Blur,
    Subsample,
    PartialFourier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    /// Operates on a length-`n` signal.
    Line { n: usize },
    /// Operates on the column-major vectorization of an `n x n` image.
    Square { n: usize },
}

impl Layout {
    fn cols(self) -> usize {
        match self {
            Layout::Line { n } => n,
            Layout::Square { n } => n * n,
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Identity,
    Blur {
        gamma: f64,
        /// Circulant matrix of the periodic Gaussian kernel, acting per axis.
        circulant: DMatrix<f64>,
    },
    Subsample {
        ratio: f64,
        seed: u64,
        mask: Vec<usize>,
    },
    PartialFourier {
        ratio: f64,
        seed: u64,
        mask: Vec<usize>,
        /// DFT matrix of one axis, modes `-n/2 .. n/2 - 1`.
        dft: DMatrix<Complex<f64>>,
    },
}

/// A linear measurement operator with both an explicit matrix form and
/// matrix-free application.
#[derive(Debug, Clone)]
pub struct LinearForwardModel {
    layout: Layout,
    op: Op,
}

/// DFT matrix with entries `(1/n) exp(-i k s_j)` for rows `j = 0..n-1` and
/// modes `k = -n/2 .. n/2 - 1` mapped to columns `0..n-1`.
pub fn dft_matrix(n: usize) -> Result<DMatrix<Complex<f64>>> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidGridSize(n));
    }
    let ds = 2.0 * std::f64::consts::PI / n as f64;
    let scale = 1.0 / n as f64;
    Ok(DMatrix::from_fn(n, n, |j, col| {
        let k = col as f64 - (n / 2) as f64;
        let s = -std::f64::consts::PI + j as f64 * ds;
        Complex::new(0.0, -k * s).exp() * scale
    }))
}

/// Periodic Gaussian convolution kernel on `n` points, normalized to sum 1.
/// Distances are measured in radians with wrap-around.
fn gaussian_kernel(n: usize, gamma: f64) -> DVector<f64> {
    let ds = 2.0 * std::f64::consts::PI / n as f64;
    let mut k = DVector::from_fn(n, |d, _| {
        let dist = d.min(n - d) as f64 * ds;
        (-dist * dist / (2.0 * gamma * gamma)).exp()
    });
    let sum = k.sum();
    k /= sum;
    k
}

fn circulant(kernel: &DVector<f64>) -> DMatrix<f64> {
    let n = kernel.len();
    DMatrix::from_fn(n, n, |j, i| kernel[(i + n - j) % n])
}

fn draw_mask(len: usize, ratio: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::InvalidRatio(ratio));
    }
    let m = ((1.0 - ratio) * len as f64).round() as usize;
    if m == 0 {
        return Err(Error::InvalidRatio(ratio));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = rand::seq::index::sample(&mut rng, len, m).into_vec();
    mask.sort_unstable();
    Ok(mask)
}

/// Identity operator on a length-`len` signal (or vectorized image).
pub fn identity_model(len: usize) -> LinearForwardModel {
    LinearForwardModel { layout: Layout::Line { n: len }, op: Op::Identity }
}

/// Periodic Gaussian blur on `n` points with point-spread width `gamma`
/// (radians). Rows of the circulant matrix sum to one.
pub fn blur_model(n: usize, gamma: f64) -> Result<LinearForwardModel> {
    if gamma <= 0.0 {
        return Err(Error::InvalidBlurWidth(gamma));
    }
    let kernel = gaussian_kernel(n, gamma);
    Ok(LinearForwardModel {
        layout: Layout::Line { n },
        op: Op::Blur { gamma, circulant: circulant(&kernel) },
    })
}

/// Separable periodic Gaussian blur applied along both axes of an `n x n`
/// image.
pub fn blur_model_2d(n: usize, gamma: f64) -> Result<LinearForwardModel> {
    if gamma <= 0.0 {
        return Err(Error::InvalidBlurWidth(gamma));
    }
    let kernel = gaussian_kernel(n, gamma);
    Ok(LinearForwardModel {
        layout: Layout::Square { n },
        op: Op::Blur { gamma, circulant: circulant(&kernel) },
    })
}

/// Keeps `m = round((1 - ratio) * len)` rows of the identity, chosen
/// uniformly without replacement from the seeded generator, sorted ascending.
pub fn subsample_model(len: usize, ratio: f64, seed: u64) -> Result<LinearForwardModel> {
    let mask = draw_mask(len, ratio, seed)?;
    Ok(LinearForwardModel { layout: Layout::Line { n: len }, op: Op::Subsample { ratio, seed, mask } })
}

/// Keeps `m = round((1 - ratio) * n)` rows of the DFT matrix.
pub fn partial_fourier_model(n: usize, ratio: f64, seed: u64) -> Result<LinearForwardModel> {
    let dft = dft_matrix(n)?;
    let mask = draw_mask(n, ratio, seed)?;
    Ok(LinearForwardModel {
        layout: Layout::Line { n },
        op: Op::PartialFourier { ratio, seed, mask, dft },
    })
}

/// Keeps `m = round((1 - ratio) * n^2)` coefficients of the 2D DFT of an
/// `n x n` image.
pub fn partial_fourier_model_2d(n: usize, ratio: f64, seed: u64) -> Result<LinearForwardModel> {
    let dft = dft_matrix(n)?;
    let mask = draw_mask(n * n, ratio, seed)?;
    Ok(LinearForwardModel {
        layout: Layout::Square { n },
        op: Op::PartialFourier { ratio, seed, mask, dft },
    })
}

impl LinearForwardModel {
    pub fn kind(&self) -> ModelKind {
        match self.op {
            Op::Identity => ModelKind::Identity,
            Op::Blur { .. } => ModelKind::Blur,
            Op::Subsample { .. } => ModelKind::Subsample,
            Op::PartialFourier { .. } => ModelKind::PartialFourier,
        }
    }

    /// Number of unknowns the operator acts on.
    pub fn cols(&self) -> usize {
        self.layout.cols()
    }

    /// Number of measurement rows; complex rows count once.
    pub fn rows(&self) -> usize {
        match &self.op {
            Op::Identity | Op::Blur { .. } => self.cols(),
            Op::Subsample { mask, .. } | Op::PartialFourier { mask, .. } => mask.len(),
        }
    }

    /// Rows of the real stacked system the solvers operate on: `rows()` for
    /// real operators, `2 * rows()` for partial Fourier.
    pub fn stacked_rows(&self) -> usize {
        match self.op {
            Op::PartialFourier { .. } => 2 * self.rows(),
            _ => self.rows(),
        }
    }

    /// Factor mapping the measurement noise precision to the precision of
    /// each stacked real row (2 for partial Fourier, where the complex noise
    /// variance splits evenly between the parts).
    pub fn alpha_scale(&self) -> f64 {
        match self.op {
            Op::PartialFourier { .. } => 2.0,
            _ => 1.0,
        }
    }

    pub fn mask(&self) -> Option<&[usize]> {
        match &self.op {
            Op::Subsample { mask, .. } | Op::PartialFourier { mask, .. } => Some(mask),
            _ => None,
        }
    }

    pub fn psf_gamma(&self) -> Option<f64> {
        match self.op {
            Op::Blur { gamma, .. } => Some(gamma),
            _ => None,
        }
    }

    /// Removal ratio of subsampled kinds.
    pub fn ratio(&self) -> Option<f64> {
        match self.op {
            Op::Subsample { ratio, .. } | Op::PartialFourier { ratio, .. } => Some(ratio),
            _ => None,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self.op {
            Op::Subsample { seed, .. } | Op::PartialFourier { seed, .. } => Some(seed),
            _ => None,
        }
    }

    fn check_cols(&self, len: usize) -> Result<()> {
        if len != self.cols() {
            return Err(Error::DimensionMismatch { expected: self.cols(), actual: len });
        }
        Ok(())
    }

    /// Applies the operator, returning the real stacked measurement vector.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_cols(x.len())?;
        Ok(match (&self.op, self.layout) {
            (Op::Identity, _) => x.clone(),
            (Op::Blur { circulant, .. }, Layout::Line { n }) => {
                // Direct circular convolution; kept independent of the dense
                // matrix product for cross-checking.
                DVector::from_fn(n, |j, _| {
                    (0..n).map(|i| circulant[(0, (i + n - j) % n)] * x[i]).sum()
                })
            }
            (Op::Blur { circulant, .. }, Layout::Square { n }) => {
                let image = DMatrix::from_column_slice(n, n, x.as_slice());
                let blurred = circulant * image * circulant.transpose();
                DVector::from_column_slice(blurred.as_slice())
            }
            (Op::Subsample { mask, .. }, _) => DVector::from_iterator(mask.len(), mask.iter().map(|&i| x[i])),
            (Op::PartialFourier { .. }, _) => {
                let coeffs = self.fourier_apply(x);
                let m = coeffs.len();
                let mut out = DVector::zeros(2 * m);
                for (i, c) in coeffs.iter().enumerate() {
                    out[i] = c.re;
                    out[m + i] = c.im;
                }
                out
            }
        })
    }

    /// Complex Fourier coefficients for partial Fourier operators (the
    /// unstacked measurement).
    fn fourier_apply(&self, x: &DVector<f64>) -> DVector<Complex<f64>> {
        let (mask, dft) = match &self.op {
            Op::PartialFourier { mask, dft, .. } => (mask, dft),
            _ => unreachable!("fourier_apply on non-Fourier operator"),
        };
        let full: DVector<Complex<f64>> = match self.layout {
            Layout::Line { .. } => {
                let xc = x.map(|v| Complex::new(v, 0.0));
                dft * xc
            }
            Layout::Square { n } => {
                let image = DMatrix::from_column_slice(n, n, x.as_slice()).map(|v| Complex::new(v, 0.0));
                let coeffs = dft * image * dft.transpose();
                DVector::from_column_slice(coeffs.as_slice())
            }
        };
        DVector::from_iterator(mask.len(), mask.iter().map(|&i| full[i]))
    }

    /// Applies the transpose of the real stacked operator.
    pub fn apply_adjoint(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.stacked_rows() {
            return Err(Error::DimensionMismatch { expected: self.stacked_rows(), actual: v.len() });
        }
        Ok(match (&self.op, self.layout) {
            (Op::Identity, _) => v.clone(),
            (Op::Blur { circulant, .. }, Layout::Line { n }) => {
                DVector::from_fn(n, |i, _| {
                    (0..n).map(|j| circulant[(0, (i + n - j) % n)] * v[j]).sum()
                })
            }
            (Op::Blur { circulant, .. }, Layout::Square { n }) => {
                let image = DMatrix::from_column_slice(n, n, v.as_slice());
                let out = circulant.transpose() * image * circulant;
                DVector::from_column_slice(out.as_slice())
            }
            (Op::Subsample { mask, .. }, _) => {
                let mut out = DVector::zeros(self.cols());
                for (row, &i) in mask.iter().enumerate() {
                    out[i] = v[row];
                }
                out
            }
            (Op::PartialFourier { mask, dft, .. }, layout) => {
                let m = mask.len();
                let mut full = DVector::from_element(self.cols(), Complex::new(0.0, 0.0));
                for (row, &i) in mask.iter().enumerate() {
                    full[i] = Complex::new(v[row], v[m + row]);
                }
                match layout {
                    Layout::Line { .. } => (dft.adjoint() * full).map(|c| c.re),
                    Layout::Square { n } => {
                        let z = DMatrix::from_column_slice(n, n, full.as_slice());
                        let out = dft.adjoint() * z * dft.conjugate();
                        DVector::from_iterator(n * n, out.iter().map(|c| c.re))
                    }
                }
            }
        })
    }

    /// Dense matrix of the real stacked operator. Independent of `apply`;
    /// intended for the direct solver path and for cross-checks. The 2D
    /// variants materialize Kronecker products and are only sensible at
    /// small `n`.
    pub fn dense_stacked(&self) -> DMatrix<f64> {
        match (&self.op, self.layout) {
            (Op::Identity, _) => DMatrix::identity(self.cols(), self.cols()),
            (Op::Blur { circulant, .. }, Layout::Line { .. }) => circulant.clone(),
            (Op::Blur { circulant, .. }, Layout::Square { .. }) => circulant.kronecker(circulant),
            (Op::Subsample { mask, .. }, _) => {
                let mut f = DMatrix::zeros(mask.len(), self.cols());
                for (row, &i) in mask.iter().enumerate() {
                    f[(row, i)] = 1.0;
                }
                f
            }
            (Op::PartialFourier { mask, dft, .. }, layout) => {
                let full = match layout {
                    Layout::Line { .. } => dft.clone(),
                    Layout::Square { .. } => dft.kronecker(dft),
                };
                let m = mask.len();
                let mut f = DMatrix::zeros(2 * m, self.cols());
                for (row, &i) in mask.iter().enumerate() {
                    for c in 0..self.cols() {
                        f[(row, c)] = full[(i, c)].re;
                        f[(m + row, c)] = full[(i, c)].im;
                    }
                }
                f
            }
        }
    }

    /// Diagonal of the stacked Gram matrix `F^T F`, used by the Jacobi
    /// preconditioner.
    pub fn gram_diag(&self) -> DVector<f64> {
        let cols = self.cols();
        match (&self.op, self.layout) {
            (Op::Identity, _) => DVector::from_element(cols, 1.0),
            (Op::Blur { circulant, .. }, Layout::Line { .. }) => {
                let sq = circulant.row(0).iter().map(|v| v * v).sum::<f64>();
                DVector::from_element(cols, sq)
            }
            (Op::Blur { circulant, .. }, Layout::Square { .. }) => {
                let sq = circulant.row(0).iter().map(|v| v * v).sum::<f64>();
                DVector::from_element(cols, sq * sq)
            }
            (Op::Subsample { mask, .. }, _) => {
                let mut d = DVector::zeros(cols);
                for &i in mask {
                    d[i] = 1.0;
                }
                d
            }
            (Op::PartialFourier { mask, .. }, layout) => {
                let scale = match layout {
                    Layout::Line { n } => (n * n) as f64,
                    Layout::Square { n } => (n * n * n * n) as f64,
                };
                DVector::from_element(cols, mask.len() as f64 / scale)
            }
        }
    }
}

/// Noise precision from the target signal-to-noise ratio:
/// `alpha = n 10^(snr/10) / ||f||^2`.
pub fn alpha_from_snr(signal: &DVector<f64>, snr_db: f64) -> Result<f64> {
    let energy = signal.norm_squared();
    if energy == 0.0 {
        return Err(Error::ZeroSignal);
    }
    Ok(signal.len() as f64 * 10f64.powf(snr_db / 10.0) / energy)
}

/// Measurement data; complex only for partial Fourier operators.
#[derive(Debug, Clone)]
pub enum MeasurementData {
    Real(DVector<f64>),
    Complex(DVector<Complex<f64>>),
}

/// One acquired measurement: data, its forward model, and the noise
/// precision the data was generated with.
#[derive(Debug, Clone)]
pub struct Measurement {
    model: LinearForwardModel,
    data: MeasurementData,
    alpha: f64,
    snr_db: f64,
}

impl Measurement {
    pub fn model(&self) -> &LinearForwardModel {
        &self.model
    }

    pub fn data(&self) -> &MeasurementData {
        &self.data
    }

    /// Noise precision of the (complex, for Fourier) measurement components.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Noise precision of each row of the real stacked system.
    pub fn alpha_eff(&self) -> f64 {
        self.alpha * self.model.alpha_scale()
    }

    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }

    /// The data as the real stacked vector `[Re; Im]` (real data unchanged).
    pub fn stacked_data(&self) -> DVector<f64> {
        match &self.data {
            MeasurementData::Real(y) => y.clone(),
            MeasurementData::Complex(y) => {
                let m = y.len();
                let mut out = DVector::zeros(2 * m);
                for (i, c) in y.iter().enumerate() {
                    out[i] = c.re;
                    out[m + i] = c.im;
                }
                out
            }
        }
    }
}

/// Simulates `y = F f + eps` with i.i.d. zero-mean Gaussian noise of
/// variance `1/alpha` per measurement component, `alpha` calibrated from
/// `snr_db`. Partial Fourier noise splits its variance evenly between real
/// and imaginary parts.
pub fn acquire(
    signal: &DVector<f64>,
    model: LinearForwardModel,
    snr_db: f64,
    noise_seed: u64,
) -> Result<Measurement> {
    let alpha = alpha_from_snr(signal, snr_db)?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    model.check_cols(signal.len())?;
    let data = match model.kind() {
        ModelKind::PartialFourier => {
            let sigma = (0.5 / alpha).sqrt();
            let mut y = model.fourier_apply(signal);
            for c in y.iter_mut() {
                *c += Complex::new(sigma * normal(), sigma * normal());
            }
            MeasurementData::Complex(y)
        }
        _ => {
            let sigma = alpha.sqrt().recip();
            let mut y = model.apply(signal)?;
            for v in y.iter_mut() {
                *v += sigma * normal();
            }
            MeasurementData::Real(y)
        }
    };
    Ok(Measurement { model, data, alpha, snr_db })
}

/// Builds an exact (noise-free) measurement `y = F f`. The solvers still
/// need a finite noise precision to weigh the data term; pass the `alpha`
/// they should assume.
pub fn acquire_noiseless(
    signal: &DVector<f64>,
    model: LinearForwardModel,
    assumed_alpha: f64,
) -> Result<Measurement> {
    model.check_cols(signal.len())?;
    let data = match model.kind() {
        ModelKind::PartialFourier => MeasurementData::Complex(model.fourier_apply(signal)),
        _ => MeasurementData::Real(model.apply(signal)?),
    };
    Ok(Measurement { model, data, alpha: assumed_alpha, snr_db: f64::INFINITY })
}

/// An ordered collection of measurements of length-`n` signals sharing `n`.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    measurements: Vec<Measurement>,
}

impl MeasurementSet {
    pub fn new(measurements: Vec<Measurement>) -> Result<Self> {
        let mut cols = None;
        for m in &measurements {
            match cols {
                None => cols = Some(m.model.cols()),
                Some(c) if c != m.model.cols() => {
                    return Err(Error::DimensionMismatch { expected: c, actual: m.model.cols() })
                }
                _ => {}
            }
        }
        Ok(Self { measurements })
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Measurement> {
        self.measurements.iter()
    }

    pub fn get(&self, l: usize) -> &Measurement {
        &self.measurements[l]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::Grid;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_vector(n: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn dft_of_constant_and_single_mode() {
        let n = 16;
        let f = dft_matrix(n).unwrap();
        let ones = DVector::from_element(n, Complex::new(1.0, 0.0));
        let coeffs = &f * ones;
        for (col, c) in coeffs.iter().enumerate() {
            let expected = if col == n / 2 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(c.re, expected, epsilon = 1e-12);
            assert_abs_diff_eq!(c.im, 0.0, epsilon = 1e-12);
        }
        // exp(i s) concentrates on mode k = 1, i.e. column n/2 + 1.
        let grid = Grid::new(n).unwrap();
        let wave = DVector::from_iterator(n, grid.points().iter().map(|&s| Complex::new(0.0, s).exp()));
        let coeffs = &f * wave;
        for (col, c) in coeffs.iter().enumerate() {
            let expected = if col == n / 2 + 1 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(c.norm(), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn dft_rows_are_orthogonal() {
        let n = 32;
        let f = dft_matrix(n).unwrap();
        let gram = &f * f.adjoint();
        for j in 0..n {
            for k in 0..n {
                let expected = if j == k { 1.0 / n as f64 } else { 0.0 };
                assert_abs_diff_eq!(gram[(j, k)].re, expected, epsilon = 1e-12);
                assert_abs_diff_eq!(gram[(j, k)].im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn blur_rows_normalized_and_symmetric() {
        let model = blur_model(128, 0.03).unwrap();
        let b = model.dense_stacked();
        for j in 0..128 {
            assert_abs_diff_eq!(b.row(j).sum(), 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!((&b - b.transpose()).abs().max(), 0.0, epsilon = 1e-15);
        // Eigenvalues of the symmetric circulant are real and in (0, 1].
        let eigs = b.symmetric_eigenvalues();
        assert!(eigs.iter().all(|&e| e > 0.0 && e <= 1.0 + 1e-12), "eigs in (0,1]");
        // The kernel concentrates on a few cells at this width.
        assert!(b[(0, 0)] > 0.5);
        assert!(b[(0, 4)] < 1e-6);
    }

    #[test]
    fn blur_limits() {
        // Width far below the grid spacing degenerates to the identity.
        let model = blur_model(32, 1e-4).unwrap();
        let b = model.dense_stacked();
        assert_abs_diff_eq!((&b - DMatrix::identity(32, 32)).abs().max(), 0.0, epsilon = 1e-12);
        // Blurring a constant returns the constant.
        let model = blur_model(32, 0.3).unwrap();
        let ones = DVector::from_element(32, 1.0);
        let out = model.apply(&ones).unwrap();
        for v in out.iter() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
        assert!(blur_model(32, 0.0).is_err());
    }

    #[test]
    fn subsample_mask_properties() {
        let m0 = subsample_model(128, 0.3, 7).unwrap();
        assert_eq!(m0.rows(), 90);
        let mask = m0.mask().unwrap();
        assert!(mask.windows(2).all(|w| w[0] < w[1]), "sorted and distinct");
        let m1 = subsample_model(128, 0.3, 7).unwrap();
        assert_eq!(m0.mask(), m1.mask());
        let m2 = subsample_model(128, 0.3, 8).unwrap();
        assert_ne!(m0.mask(), m2.mask());
        // ratio 0 keeps everything.
        let id = subsample_model(16, 0.0, 3).unwrap();
        assert_eq!(id.dense_stacked(), DMatrix::identity(16, 16));
        assert!(subsample_model(16, 1.0, 3).is_err());
        assert!(subsample_model(16, -0.1, 3).is_err());
    }

    #[test]
    fn partial_fourier_row_counts() {
        assert_eq!(partial_fourier_model(128, 0.7, 1).unwrap().rows(), 38);
        assert_eq!(partial_fourier_model(400, 0.5, 1).unwrap().rows(), 200);
        let full = partial_fourier_model(16, 0.0, 1).unwrap();
        assert_eq!(full.rows(), 16);
        assert_eq!(full.stacked_rows(), 32);
        assert_eq!(full.alpha_scale(), 2.0);
    }

    #[test]
    fn apply_matches_dense_all_kinds() {
        let n = 24;
        let models = vec![
            identity_model(n),
            blur_model(n, 0.1).unwrap(),
            subsample_model(n, 0.25, 11).unwrap(),
            partial_fourier_model(n, 0.5, 12).unwrap(),
            blur_model_2d(8, 0.2).unwrap(),
            partial_fourier_model_2d(8, 0.4, 13).unwrap(),
            subsample_model(64, 0.5, 14).unwrap(),
        ];
        for (mi, model) in models.iter().enumerate() {
            let f = model.dense_stacked();
            for trial in 0..20 {
                let x = random_vector(model.cols(), 100 * mi as u64 + trial);
                let lhs = model.apply(&x).unwrap();
                let rhs = &f * &x;
                let denom = rhs.norm().max(1e-30);
                assert!((lhs - &rhs).norm() / denom < 1e-12, "model {mi} trial {trial}");
                // Adjoint agrees with the transpose product.
                let v = random_vector(model.stacked_rows(), 999 + 100 * mi as u64 + trial);
                let lhs_t = model.apply_adjoint(&v).unwrap();
                let rhs_t = f.transpose() * &v;
                let denom = rhs_t.norm().max(1e-30);
                assert!((lhs_t - &rhs_t).norm() / denom < 1e-12, "adjoint {mi} trial {trial}");
            }
            // Gram diagonal matches the dense Gram matrix.
            let gram = f.transpose() * &f;
            let d = model.gram_diag();
            for i in 0..model.cols() {
                assert_abs_diff_eq!(d[i], gram[(i, i)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fourier_adjoint_shape_roundtrip() {
        let model = partial_fourier_model_2d(8, 0.6, 5).unwrap();
        let x = random_vector(64, 17);
        let y = model.apply(&x).unwrap();
        assert_eq!(y.len(), model.stacked_rows());
        let back = model.apply_adjoint(&y).unwrap();
        assert_eq!(back.len(), 64);
    }

    #[test]
    fn alpha_from_snr_formula() {
        let f = DVector::from_element(16, 1.0); // ||f||^2 = n
        assert_relative_eq!(alpha_from_snr(&f, 0.0).unwrap(), 1.0);
        assert_relative_eq!(alpha_from_snr(&f, 20.0).unwrap(), 100.0);
        assert!(alpha_from_snr(&DVector::zeros(4), 5.0).is_err());
    }

    #[test]
    fn acquire_is_deterministic_and_noiseless_exact() {
        let grid = Grid::new(64).unwrap();
        let f = crate::signals::sample_example(crate::signals::SignalId::F1, &grid).unwrap();
        let x = f.values();
        let a = acquire(x, blur_model(64, 0.03).unwrap(), 20.0, 42).unwrap();
        let b = acquire(x, blur_model(64, 0.03).unwrap(), 20.0, 42).unwrap();
        assert_eq!(a.stacked_data(), b.stacked_data(), "same seed, same bytes");
        let c = acquire(x, blur_model(64, 0.03).unwrap(), 20.0, 43).unwrap();
        assert_ne!(a.stacked_data(), c.stacked_data());

        let clean = acquire_noiseless(x, identity_model(64), 1.0).unwrap();
        assert_eq!(clean.stacked_data(), *x);
        assert_eq!(clean.snr_db(), f64::INFINITY);

        let short = DVector::zeros(32);
        assert!(acquire(&short, identity_model(64), 20.0, 0).is_err());
    }

    #[test]
    fn acquire_noise_variance_monte_carlo() {
        // Identity measurements: the empirical variance of y - f matches
        // 1/alpha within Monte Carlo tolerance.
        let n = 64;
        let f = DVector::from_element(n, 2.0);
        let snr = 10.0;
        let alpha = alpha_from_snr(&f, snr).unwrap();
        let draws = 10_000 / n * n; // keep full vectors
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for seed in 0..(draws / n) as u64 {
            let m = acquire(&f, identity_model(n), snr, seed).unwrap();
            let resid = m.stacked_data() - &f;
            sum_sq += resid.norm_squared();
            count += n;
            assert_relative_eq!(m.alpha(), alpha);
        }
        let var = sum_sq / count as f64;
        assert!((var - 1.0 / alpha).abs() / (1.0 / alpha) < 0.05, "var {var} vs {}", 1.0 / alpha);
    }

    #[test]
    fn complex_noise_splits_variance() {
        let n = 64;
        let f = random_vector(n, 3);
        let snr = 5.0;
        let alpha = alpha_from_snr(&f, snr).unwrap();
        let model = partial_fourier_model(n, 0.0, 1).unwrap();
        let clean = acquire_noiseless(&f, model.clone(), alpha).unwrap().stacked_data();
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for seed in 0..400 {
            let m = acquire(&f, model.clone(), snr, seed).unwrap();
            let resid = m.stacked_data() - &clean;
            sum_sq += resid.norm_squared();
            count += resid.len();
        }
        // Each stacked row has variance 1/(2 alpha).
        let var = sum_sq / count as f64;
        assert!((var - 0.5 / alpha).abs() / (0.5 / alpha) < 0.05, "var {var}");
    }

    #[test]
    fn measurement_set_requires_shared_cols() {
        let f = random_vector(16, 9);
        let a = acquire(&f, identity_model(16), 10.0, 1).unwrap();
        let g = random_vector(32, 10);
        let b = acquire(&g, identity_model(32), 10.0, 2).unwrap();
        assert!(MeasurementSet::new(vec![a.clone(), b]).is_err());
        assert_eq!(MeasurementSet::new(vec![a.clone(), a]).unwrap().len(), 2);
    }

    proptest! {
        // alpha_from_snr inverts the SNR definition.
        #[test]
        fn snr_round_trip(snr in -20.0f64..40.0, seed in 0u64..1000) {
            let f = random_vector(32, seed);
            prop_assume!(f.norm_squared() > 1e-12);
            let alpha = alpha_from_snr(&f, snr).unwrap();
            let back = 10.0 * (alpha * f.norm_squared() / 32.0).log10();
            prop_assert!((back - snr).abs() < 1e-10);
        }
    }
}

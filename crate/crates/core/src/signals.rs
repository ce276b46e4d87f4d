//! Uniform periodic grids, bundled piecewise smooth test signals and images,
//! and ground-truth edge vectors.
//!
//! Signals live on `[-pi, pi)` discretized by `n` equispaced points
//! `s_j = -pi + j * 2pi/n`, `j = 0..n-1`, with no duplicated endpoint. The
//! bundled 1D signals share jump discontinuities at `-pi/2` and `pi/2` but
//! differ in their smooth variability; the bundled 2D images share circular
//! edges at radii `0.3 pi` and `0.7 pi`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Uniform periodic grid on `[-pi, pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n: usize,
    points: Vec<f64>,
}

impl Grid {
    /// Builds the grid `s_j = -pi + j * 2pi/n`. Requires `n >= 4` and even
    /// (the Fourier edge detector needs the symmetric mode range).
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidGridSize(n));
        }
        let ds = 2.0 * PI / n as f64;
        let points = (0..n).map(|j| -PI + j as f64 * ds).collect();
        Ok(Self { n, points })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Grid spacing `2pi/n` in radians.
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Index of the half-open cell `[s_j, s_{j+1})` containing `s`.
    ///
    /// A point that falls on a grid node (up to a small rounding slack)
    /// belongs to the cell whose left endpoint it is.
    pub fn cell_of(&self, s: f64) -> Result<usize> {
        if !(-PI..PI).contains(&s) {
            return Err(Error::OutOfDomain(s));
        }
        let t = (s + PI) / self.spacing();
        let r = t.round();
        let j = if (t - r).abs() < 1e-9 { r as usize } else { t.floor() as usize };
        Ok(j % self.n)
    }
}

/// Real-valued samples of a function on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SignalVector {
    grid: Grid,
    values: DVector<f64>,
}

impl SignalVector {
    pub fn new(grid: Grid, values: DVector<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::DimensionMismatch { expected: grid.n(), actual: values.len() });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteSample { index, value });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }
}

/// Per-cell jump magnitudes of a piecewise smooth signal: entry `j` holds the
/// jump of any discontinuity falling in `[s_j, s_{j+1})`, else zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeVector {
    grid: Grid,
    values: DVector<f64>,
}

impl EdgeVector {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// Indices of cells holding a nonzero jump.
    pub fn support(&self) -> Vec<usize> {
        self.values.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j).collect()
    }
}

/// Samples a function on the grid, rejecting non-finite values.
pub fn sample<F: Fn(f64) -> f64>(f: F, grid: &Grid) -> Result<SignalVector> {
    let values = DVector::from_iterator(grid.n(), grid.points().iter().map(|&s| f(s)));
    SignalVector::new(grid.clone(), values)
}

/// Identifiers for the bundled 1D test signals.
///
/// `F1`-`F3` are piecewise smooth with varying smooth behavior, `F4`-`F6` are
/// piecewise constant, and `Mixed1`-`Mixed3` are zero on `[-pi, 0)` except
/// for two unit spikes and follow `F1`-`F3` on `[0, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignalId {
    F1,
    F2,
    F3,
    F4,
    F5,
    F6,
    Mixed1,
    Mixed2,
    Mixed3,
}

impl FromStr for SignalId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1" => Ok(Self::F1),
            "f2" => Ok(Self::F2),
            "f3" => Ok(Self::F3),
            "f4" => Ok(Self::F4),
            "f5" => Ok(Self::F5),
            "f6" => Ok(Self::F6),
            "mixed1" => Ok(Self::Mixed1),
            "mixed2" => Ok(Self::Mixed2),
            "mixed3" => Ok(Self::Mixed3),
            other => Err(Error::UnknownSignal(other.to_string())),
        }
    }
}

impl SignalId {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::F1 => "f1",
            Self::F2 => "f2",
            Self::F3 => "f3",
            Self::F4 => "f4",
            Self::F5 => "f5",
            Self::F6 => "f6",
            Self::Mixed1 => "mixed1",
            Self::Mixed2 => "mixed2",
            Self::Mixed3 => "mixed3",
        }
    }
}

/// Subintervals of the signal domain: `U1 = [-pi, -pi/2)`, `U2 = [-pi/2,
/// pi/2)`, `U3 = [pi/2, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Region {
    U1,
    U2,
    U3,
}

fn region_of(s: f64) -> Region {
    if s < -FRAC_PI_2 {
        Region::U1
    } else if s < FRAC_PI_2 {
        Region::U2
    } else {
        Region::U3
    }
}

/// Evaluates one branch of a piecewise definition, ignoring whether `s`
/// actually lies in that branch's region. Used for one-sided limits.
fn branch_value(id: SignalId, region: Region, s: f64) -> f64 {
    use Region::*;
    use SignalId::*;
    match (id, region) {
        (F1, U1) => 11.0 * PI / 4.0 - 5.0 - s * s / 5.0,
        (F1, U2) => 7.0 / 4.0 - s / 2.0 + 6.0 * (s - 0.25).sin(),
        (F1, U3) => 11.0 * s / 4.0 - 5.0,
        (F2, U1) => s + PI,
        (F2, U2) => -(6.0 * s).sin() / 2.0,
        (F2, U3) => (-s + PI).sin(),
        (F3, U1) => (-s / 2.0).sin(),
        (F3, U2) => (1.5 * s).cos(),
        (F3, U3) => (s / 2.0).sin(),
        (F4, U1) | (F4, U3) => 1.5,
        (F4, U2) => -6.0 / PI,
        (F5, U1) | (F5, U3) => -3.0,
        (F5, U2) => -4.0 / PI,
        (F6, U1) | (F6, U3) => 0.5,
        (F6, U2) => -2.0 / PI,
        (Mixed1, r) => mixed_branch(F1, r, s),
        (Mixed2, r) => mixed_branch(F2, r, s),
        (Mixed3, r) => mixed_branch(F3, r, s),
    }
}

/// Smooth part of the mixed signals: zero on `[-pi, 0)`, the underlying
/// signal on `[0, pi)`. The two spikes are grid-bound and added by
/// [`sample_example`].
fn mixed_branch(base: SignalId, region: Region, s: f64) -> f64 {
    if s < 0.0 {
        0.0
    } else {
        branch_value(base, region, s)
    }
}

/// Evaluates a bundled test signal at a point of `[-pi, pi)`.
pub fn example_signal(id: SignalId, s: f64) -> Result<f64> {
    if !(-PI..PI).contains(&s) {
        return Err(Error::OutOfDomain(s));
    }
    Ok(branch_value(id, region_of(s), s))
}

/// Grid indices (0-based) of the unit spikes carried by the mixed signals.
pub const MIXED_SPIKE_INDICES: [usize; 2] = [15, 40];

/// Amplitude of the mixed-signal spikes.
pub const MIXED_SPIKE_AMPLITUDE: f64 = 1.0;

/// Samples a bundled signal on a grid. For the mixed signals this also
/// places the unit spikes at grid indices 15 and 40, which requires those
/// indices to fall inside the zero half `[-pi, 0)`, i.e. `n > 80`.
pub fn sample_example(id: SignalId, grid: &Grid) -> Result<SignalVector> {
    let mut signal = sample(|s| branch_value(id, region_of(s), s), grid)?;
    if matches!(id, SignalId::Mixed1 | SignalId::Mixed2 | SignalId::Mixed3) {
        let last_spike = MIXED_SPIKE_INDICES[1];
        if grid.points()[last_spike.min(grid.n() - 1)] >= 0.0 || grid.n() <= last_spike {
            return Err(Error::InvalidGridSize(grid.n()));
        }
        for &j in &MIXED_SPIKE_INDICES {
            signal.values[j] = MIXED_SPIKE_AMPLITUDE;
        }
    }
    Ok(signal)
}

/// Jump locations and magnitudes `f(xi+) - f(xi-)` of a bundled signal,
/// computed from one-sided branch limits. Interior candidates sit at
/// `-pi/2` and `pi/2`; the periodic wrap at `-pi` (identified with `pi`)
/// contributes whenever the first and last branches disagree there.
fn analytic_jumps(id: SignalId) -> Result<Vec<(f64, f64)>> {
    use Region::*;
    if matches!(id, SignalId::Mixed1 | SignalId::Mixed2 | SignalId::Mixed3) {
        // The grid-bound spikes are not jumps of a piecewise smooth function.
        return Err(Error::NoAnalyticEdges(id.as_str().to_string()));
    }
    let candidates = [
        (-PI, U3, PI, U1, -PI),
        (-FRAC_PI_2, U1, -FRAC_PI_2, U2, -FRAC_PI_2),
        (FRAC_PI_2, U2, FRAC_PI_2, U3, FRAC_PI_2),
    ];
    let mut jumps = Vec::new();
    for (xi, left_region, left_s, right_region, right_s) in candidates {
        let magnitude = branch_value(id, right_region, right_s) - branch_value(id, left_region, left_s);
        if magnitude != 0.0 {
            jumps.push((xi, magnitude));
        }
    }
    Ok(jumps)
}

/// Ground-truth edge vector of a bundled signal on a grid: entry `j` is the
/// jump of the discontinuity lying in `[s_j, s_{j+1})`, zero elsewhere.
pub fn true_edge_vector(id: SignalId, grid: &Grid) -> Result<EdgeVector> {
    let mut values = DVector::zeros(grid.n());
    for (xi, magnitude) in analytic_jumps(id)? {
        let j = grid.cell_of(xi)?;
        values[j] += magnitude;
    }
    Ok(EdgeVector { grid: grid.clone(), values })
}

/// Identifiers for the bundled 2D pattern images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ImageId {
    H1,
    H2,
    H3,
}

impl FromStr for ImageId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h1" => Ok(Self::H1),
            "h2" => Ok(Self::H2),
            "h3" => Ok(Self::H3),
            other => Err(Error::UnknownImage(other.to_string())),
        }
    }
}

impl ImageId {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::H1 => "h1",
            Self::H2 => "h2",
            Self::H3 => "h3",
        }
    }
}

/// Square grayscale image on `[-pi, pi]^2` stored as an `n x n` matrix;
/// entry `(j, j')` is the value at domain coordinates `(s_j, s_{j'})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    n: usize,
    values: DMatrix<f64>,
}

impl Image {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: values.ncols() });
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Column-major vectorization, the layout all 2D operators act on.
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(self.values.as_slice())
    }

    pub fn from_vector(n: usize, v: &DVector<f64>) -> Result<Self> {
        if v.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, actual: v.len() });
        }
        Ok(Self { n, values: DMatrix::from_column_slice(n, n, v.as_slice()) })
    }
}

/// Radial regions shared by the bundled images: `R1 = [0, 0.3 pi)`,
/// `R2 = [0.3 pi, 0.7 pi)`, `R3 = [0.7 pi, ..)`. Corners of the square
/// domain exceed radius `pi` and fall in the outermost region.
fn image_value(id: ImageId, a: f64, b: f64) -> f64 {
    let rho = a.hypot(b);
    match id {
        ImageId::H1 => {
            if rho < 0.3 * PI {
                3.0 + (a.cos() + 1.0).powi(2) + (b.cos() + 1.0).powi(2)
            } else if rho < 0.7 * PI {
                4.0 + (4.0 * a).sin() + (4.0 * b).sin()
            } else {
                a.sin()
            }
        }
        ImageId::H2 => {
            if rho < 0.3 * PI {
                (6.0 * a).sin()
            } else if rho < 0.7 * PI {
                -0.3 * (6.0 * b).sin()
            } else {
                (-a + PI).sin()
            }
        }
        ImageId::H3 => {
            if rho < 0.3 * PI {
                (2.0 * rho).cos()
            } else if rho < 0.7 * PI {
                (4.0 * rho).cos()
            } else {
                -0.5 * a.cos()
            }
        }
    }
}

/// Evaluates a bundled image at 1-based pixel indices `(j, j')`, mapping
/// pixel `j` to domain coordinate `s_{j-1} = -pi + (j-1) * 2pi/n`.
pub fn example_image(id: ImageId, j: usize, jp: usize, n: usize) -> Result<f64> {
    if j == 0 || jp == 0 || j > n || jp > n {
        return Err(Error::PixelOutOfRange { j, jp, n });
    }
    let ds = 2.0 * PI / n as f64;
    let a = -PI + (j - 1) as f64 * ds;
    let b = -PI + (jp - 1) as f64 * ds;
    Ok(image_value(id, a, b))
}

/// Samples a bundled image on the `n x n` periodic pixel grid.
pub fn sample_example_image(id: ImageId, n: usize) -> Result<Image> {
    let grid = Grid::new(n)?;
    let s = grid.points();
    Ok(Image { n, values: DMatrix::from_fn(n, n, |j, jp| image_value(id, s[j], s[jp])) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    #[test]
    fn grid_points_match_formula() {
        let g = Grid::new(4).unwrap();
        assert_eq!(g.points(), &[-PI, -FRAC_PI_2, 0.0, FRAC_PI_2]);
        let g = Grid::new(128).unwrap();
        assert_eq!(g.n(), 128);
        assert_relative_eq!(g.spacing(), 2.0 * PI / 128.0);
        for w in g.points().windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], g.spacing(), epsilon = 1e-15);
        }
        assert_eq!(g.points()[0], -PI);
        assert_abs_diff_eq!(g.points()[127], PI - g.spacing(), epsilon = 1e-12);
    }

    #[test]
    fn grid_rejects_odd_or_tiny_n() {
        assert!(matches!(Grid::new(5), Err(Error::InvalidGridSize(5))));
        assert!(matches!(Grid::new(2), Err(Error::InvalidGridSize(2))));
        assert!(matches!(Grid::new(0), Err(Error::InvalidGridSize(0))));
    }

    #[test]
    fn sampling_basics() {
        let g = Grid::new(4).unwrap();
        let c = sample(|_| 1.0, &g).unwrap();
        assert_eq!(c.values().as_slice(), &[1.0, 1.0, 1.0, 1.0]);
        let s = sample(f64::sin, &g).unwrap();
        assert_abs_diff_eq!(s.values()[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.values()[1], -1.0);
        assert_abs_diff_eq!(s.values()[2], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.values()[3], 1.0);
    }

    #[test]
    fn sampling_rejects_non_finite() {
        let g = Grid::new(4).unwrap();
        let r = sample(|s| 1.0 / (s + FRAC_PI_2), &g);
        assert!(matches!(r, Err(Error::NonFiniteSample { index: 1, .. })));
    }

    #[test]
    fn example_signal_values() {
        // f1 on U2 at the origin.
        assert_relative_eq!(
            example_signal(SignalId::F1, 0.0).unwrap(),
            7.0 / 4.0 + 6.0 * (-0.25f64).sin()
        );
        // f1 at the left endpoint lies on U1.
        assert_relative_eq!(
            example_signal(SignalId::F1, -PI).unwrap(),
            11.0 * PI / 4.0 - 5.0 - PI * PI / 5.0
        );
        assert_relative_eq!(example_signal(SignalId::F4, 0.0).unwrap(), -6.0 / PI);
        assert_relative_eq!(example_signal(SignalId::F5, -3.0).unwrap(), -3.0);
        assert!(matches!(example_signal(SignalId::F1, PI), Err(Error::OutOfDomain(_))));
        assert!(matches!("nope".parse::<SignalId>(), Err(Error::UnknownSignal(_))));
    }

    #[test]
    fn edge_vector_piecewise_constant() {
        let g = Grid::new(128).unwrap();
        let e = true_edge_vector(SignalId::F4, &g).unwrap();
        assert_eq!(e.support(), vec![32, 96]);
        assert_relative_eq!(e.values()[32], -6.0 / PI - 1.5);
        assert_relative_eq!(e.values()[96], 1.5 + 6.0 / PI);
        for id in [SignalId::F4, SignalId::F5, SignalId::F6] {
            assert_eq!(true_edge_vector(id, &g).unwrap().support().len(), 2);
        }
    }

    #[test]
    fn edge_vector_piecewise_smooth() {
        let g = Grid::new(128).unwrap();
        // f1 jumps at both interior boundaries and at the periodic wrap.
        let e = true_edge_vector(SignalId::F1, &g).unwrap();
        assert_eq!(e.support(), vec![0, 32, 96]);
        assert_relative_eq!(e.values()[0], -PI * PI / 5.0);
        let left = 11.0 * PI / 4.0 - 5.0 - PI * PI / 20.0;
        let right = 7.0 / 4.0 + PI / 4.0 + 6.0 * (-FRAC_PI_2 - 0.25f64).sin();
        assert_relative_eq!(e.values()[32], right - left);
        // f2 and f3 are continuous across the wrap.
        assert_eq!(true_edge_vector(SignalId::F2, &g).unwrap().support(), vec![32, 96]);
        assert_eq!(true_edge_vector(SignalId::F3, &g).unwrap().support(), vec![32, 96]);
        assert!(true_edge_vector(SignalId::Mixed1, &g).is_err());
    }

    #[test]
    fn mixed_signals_carry_spikes() {
        let g = Grid::new(128).unwrap();
        let m = sample_example(SignalId::Mixed2, &g).unwrap();
        assert_eq!(m.values()[15], 1.0);
        assert_eq!(m.values()[40], 1.0);
        for j in 0..64 {
            if j != 15 && j != 40 {
                assert_eq!(m.values()[j], 0.0, "index {j}");
            }
        }
        // Right half follows f2.
        let f = sample_example(SignalId::F2, &g).unwrap();
        for j in 64..128 {
            assert_eq!(m.values()[j], f.values()[j]);
        }
        // Too coarse a grid cannot host the spikes.
        assert!(sample_example(SignalId::Mixed1, &Grid::new(64).unwrap()).is_err());
    }

    #[test]
    fn cell_of_handles_node_and_interior_points() {
        let g = Grid::new(128).unwrap();
        assert_eq!(g.cell_of(-FRAC_PI_2).unwrap(), 32);
        assert_eq!(g.cell_of(-PI).unwrap(), 0);
        let ds = g.spacing();
        assert_eq!(g.cell_of(-FRAC_PI_2 + 0.5 * ds).unwrap(), 32);
        assert_eq!(g.cell_of(-FRAC_PI_2 - 0.5 * ds).unwrap(), 31);
    }

    #[test]
    fn image_values_and_regions() {
        let n = 64;
        // Center pixel (rho = 0) for h3: cos(0) = 1.
        assert_relative_eq!(example_image(ImageId::H3, n / 2 + 1, n / 2 + 1, n).unwrap(), 1.0);
        // A pixel deep in the outer region follows h2's third branch.
        assert_relative_eq!(example_image(ImageId::H2, 1, 1, n).unwrap(), (PI + PI).sin());
        // Region boundaries are half-open: radii 0.3pi and 0.7pi map to the
        // second and third branches.
        assert_relative_eq!(image_value(ImageId::H3, 0.3 * PI, 0.0), (1.2 * PI).cos());
        assert_relative_eq!(image_value(ImageId::H3, 0.7 * PI, 0.0), -0.5 * (0.7 * PI).cos());
        assert!(example_image(ImageId::H1, 0, 1, n).is_err());
        assert!(example_image(ImageId::H1, 1, n + 1, n).is_err());
        let img = sample_example_image(ImageId::H1, 8).unwrap();
        let v = img.to_vector();
        assert_eq!(v.len(), 64);
        // Column-major round trip.
        assert_eq!(Image::from_vector(8, &v).unwrap(), img);
        assert_eq!(v[3], img.values()[(3, 0)]);
    }

    proptest! {
        // Every point of the domain lands in exactly one branch region and
        // every bundled signal evaluates finitely there.
        #[test]
        fn branch_regions_partition_domain(s in -PI..PI) {
            let mut hits = 0;
            if (-PI..-FRAC_PI_2).contains(&s) { hits += 1; }
            if (-FRAC_PI_2..FRAC_PI_2).contains(&s) { hits += 1; }
            if (FRAC_PI_2..PI).contains(&s) { hits += 1; }
            prop_assert_eq!(hits, 1);
            for id in [SignalId::F1, SignalId::F2, SignalId::F3, SignalId::F4,
                       SignalId::F5, SignalId::F6, SignalId::Mixed1] {
                prop_assert!(example_signal(id, s).unwrap().is_finite());
            }
        }

        // Sampling a 2pi-periodic function commutes with shifting the
        // evaluation points by a full period, up to machine precision.
        #[test]
        fn sampling_respects_periodicity(shift in 0.0f64..1.0) {
            let g = Grid::new(16).unwrap();
            let f = |s: f64| (s + shift).sin();
            let a = sample(f, &g).unwrap();
            for (j, &s) in g.points().iter().enumerate() {
                prop_assert!((a.values()[j] - f(s + 2.0 * PI)).abs() < 1e-14);
            }
        }
    }
}

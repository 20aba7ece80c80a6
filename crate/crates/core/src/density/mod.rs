//! Probability densities on truncated boxes of `R^n`, `n <= 3`.
//!
//! A [`GridDensity`] stores nonnegative values on a uniform tensor grid that
//! includes both box corners. Integrals use the tensor trapezoidal rule, so
//! the weighted total variation distance
//! `d_g(mu1, mu2) = int (1 + |v|^2) |rho1 - rho2| dv` is a weighted `l1` sum.
//! Every constructor and operator output is renormalized to unit mass.

mod io;

pub use io::{read_binary, write_binary, write_csv};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{BlockStructure, GaussianMeasure};
use crate::linalg;

pub const MAX_DIM: usize = 3;
pub const MIN_POINTS: usize = 16;
/// Half-width, in marginal standard deviations, a box must leave around a
/// Gaussian placed on it.
pub const COVERAGE_SIGMAS: f64 = 6.0;
/// Normalization loss above which an operator logs a resolution warning.
pub const DRIFT_WARN: f64 = 1e-3;
/// Tolerance on unit mass for densities read back from disk.
pub const MASS_TOL: f64 = 1e-8;

/// Sum with a fixed pairwise reduction tree.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// One grid axis: `points` equispaced nodes from `lo` to `hi` inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::InvalidGrid(format!("bad axis bounds [{lo}, {hi}]")));
        }
        if points < MIN_POINTS {
            return Err(Error::InvalidGrid(format!(
                "{points} points per axis, need at least {MIN_POINTS}"
            )));
        }
        Ok(Self { lo, hi, points })
    }

    /// Symmetric axis `[center - half, center + half]`.
    pub fn centered(center: f64, half: f64, points: usize) -> Result<Self> {
        Self::new(center - half, center + half, points)
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.points {
            0.5 * self.step()
        } else {
            self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.node(i)).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.weight(i)).collect()
    }

    /// Cell `i` and fraction `t in [0, 1]` with `x = (1-t) node(i) + t node(i+1)`.
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        if !(x >= self.lo && x <= self.hi) {
            return None;
        }
        let s = (x - self.lo) / self.step();
        let i = (s.floor() as usize).min(self.points - 2);
        Some((i, (s - i as f64).clamp(0.0, 1.0)))
    }
}

/// Tensor product of up to three axes, row-major (last axis fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_DIM {
            return Err(Error::InvalidGrid(format!(
                "grid dimension {} not in 1..={MAX_DIM}",
                axes.len()
            )));
        }
        for a in &axes {
            Axis::new(a.lo, a.hi, a.points)?;
        }
        Ok(Self { axes })
    }

    pub fn from_box(lo: &[f64], hi: &[f64], shape: &[usize]) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != shape.len() {
            return Err(Error::InvalidGrid("box corners and shape disagree".into()));
        }
        let axes = (0..lo.len())
            .map(|i| Axis::new(lo[i], hi[i], shape[i]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(axes)
    }

    /// `[-half, half]^n` with `points` nodes per axis.
    pub fn cube(n: usize, half: f64, points: usize) -> Result<Self> {
        Self::new(vec![Axis::centered(0.0, half, points)?; n])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn strides(&self) -> [usize; MAX_DIM] {
        let mut s = [0; MAX_DIM];
        let mut acc = 1;
        for i in (0..self.dim()).rev() {
            s[i] = acc;
            acc *= self.axes[i].points;
        }
        s
    }

    pub fn unravel(&self, mut flat: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        for i in (0..self.dim()).rev() {
            let p = self.axes[i].points;
            idx[i] = flat % p;
            flat /= p;
        }
        idx
    }

    pub fn coords(&self, flat: usize) -> [f64; MAX_DIM] {
        let idx = self.unravel(flat);
        let mut x = [0.0; MAX_DIM];
        for (i, a) in self.axes.iter().enumerate() {
            x[i] = a.node(idx[i]);
        }
        x
    }

    /// Trapezoidal weight of every node, row-major.
    pub fn weights(&self) -> Vec<f64> {
        let per_axis: Vec<Vec<f64>> = self.axes.iter().map(Axis::weights).collect();
        self.tensor(&per_axis, |acc, w| acc * w, 1.0)
    }

    /// Node coordinates, one `Vec` per axis, expanded row-major.
    pub fn coordinate(&self, axis: usize) -> Vec<f64> {
        let per_axis: Vec<Vec<f64>> = self
            .axes
            .iter()
            .enumerate()
            .map(|(i, a)| if i == axis { a.nodes() } else { vec![0.0; a.points] })
            .collect();
        self.tensor(&per_axis, |acc, x| acc + x, 0.0)
    }

    /// `1 + |v|^2` at every node.
    pub fn g_weight(&self) -> Vec<f64> {
        let per_axis: Vec<Vec<f64>> = self
            .axes
            .iter()
            .map(|a| a.nodes().into_iter().map(|x| x * x).collect())
            .collect();
        self.tensor(&per_axis, |acc, x| acc + x, 1.0)
    }

    fn tensor(&self, per_axis: &[Vec<f64>], op: impl Fn(f64, f64) -> f64, init: f64) -> Vec<f64> {
        let mut out = vec![init];
        for v in per_axis {
            let mut next = Vec::with_capacity(out.len() * v.len());
            for &acc in &out {
                for &x in v {
                    next.push(op(acc, x));
                }
            }
            out = next;
        }
        out
    }

    /// Split into the first `d` axes and the rest.
    pub fn split(&self, d: usize) -> Result<(Grid, Grid)> {
        if d == 0 || d >= self.dim() {
            return Err(Error::InvalidGrid(format!(
                "cannot split a {}-dimensional grid after axis {d}",
                self.dim()
            )));
        }
        Ok((
            Grid::new(self.axes[..d].to_vec())?,
            Grid::new(self.axes[d..].to_vec())?,
        ))
    }

    pub fn product(&self, other: &Grid) -> Result<Grid> {
        let mut axes = self.axes.clone();
        axes.extend_from_slice(&other.axes);
        Grid::new(axes)
    }

    /// Each axis must contain `mean_i +- 6 sqrt(S_ii)`.
    pub fn check_covers(&self, g: &GaussianMeasure) -> Result<()> {
        if g.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: g.dim(),
            });
        }
        for (i, a) in self.axes.iter().enumerate() {
            let m = g.mean()[i];
            let r = COVERAGE_SIGMAS * g.cov()[(i, i)].sqrt();
            if m - r < a.lo || m + r > a.hi {
                return Err(Error::Coverage(format!(
                    "axis {i}: [{:.4}, {:.4}] does not contain {m:.4} +- {r:.4}",
                    a.lo, a.hi
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.axes
            .iter()
            .zip(x)
            .all(|(a, &v)| v >= a.lo && v <= a.hi)
    }
}

/// First two moments of a measure.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Moments {
    pub fn to_gaussian(&self) -> Result<GaussianMeasure> {
        GaussianMeasure::new(self.mean.clone(), self.cov.clone())
    }
}

/// Normalized nonnegative density on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    grid: Grid,
    values: Vec<f64>,
    blocks: Option<BlockStructure>,
}

impl GridDensity {
    /// Validates and renormalizes raw values.
    pub fn new(grid: Grid, values: Vec<f64>, blocks: Option<BlockStructure>) -> Result<Self> {
        let (density, _) = Self::normalized(grid, values, blocks)?;
        Ok(density)
    }

    /// Like [`GridDensity::new`], but also returns the mass before
    /// renormalization.
    pub fn normalized(
        grid: Grid,
        mut values: Vec<f64>,
        blocks: Option<BlockStructure>,
    ) -> Result<(Self, f64)> {
        Self::validate(&grid, &values, blocks)?;
        let mass = quadrature(&grid, &values);
        if !mass.is_finite() || mass <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "density has non-positive or non-finite mass {mass:e}"
            )));
        }
        for v in values.iter_mut() {
            *v /= mass;
        }
        Ok((
            Self {
                grid,
                values,
                blocks,
            },
            mass,
        ))
    }

    /// Renormalize an operator output and warn on large pre-normalization drift.
    pub(crate) fn operator_output(
        grid: Grid,
        values: Vec<f64>,
        blocks: Option<BlockStructure>,
        op: &str,
        expected_mass: f64,
    ) -> Result<(Self, f64)> {
        let (density, mass) = Self::normalized(grid, values, blocks)?;
        let drift = (mass / expected_mass - 1.0).abs();
        if drift > DRIFT_WARN {
            log::warn!("{op}: mass drift {drift:.2e} before renormalization; grid resolution or box may be too coarse");
        } else {
            log::debug!("{op}: mass drift {drift:.2e}");
        }
        Ok((density, mass))
    }

    /// Accepts values that already integrate to one within [`MASS_TOL`],
    /// keeping them bit for bit.
    pub fn from_normalized_values(
        grid: Grid,
        values: Vec<f64>,
        blocks: Option<BlockStructure>,
    ) -> Result<Self> {
        Self::validate(&grid, &values, blocks)?;
        let mass = quadrature(&grid, &values);
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidArgument(format!(
                "density mass {mass} differs from 1 by more than {MASS_TOL:e}"
            )));
        }
        Ok(Self {
            grid,
            values,
            blocks,
        })
    }

    fn validate(grid: &Grid, values: &[f64], blocks: Option<BlockStructure>) -> Result<()> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(b) = blocks {
            if b.n() != grid.dim() {
                return Err(Error::DimensionMismatch {
                    expected: grid.dim(),
                    got: b.n(),
                });
            }
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "density value {v} is negative or not finite"
            )));
        }
        Ok(())
    }

    /// Tabulate a nonnegative function and normalize.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let n = grid.dim();
        let values = (0..grid.len())
            .map(|i| f(&grid.coords(i)[..n]))
            .collect();
        Self::new(grid, values, None)
    }

    /// Grid a Gaussian; fails unless every axis covers `mean +- 6 sd`.
    pub fn from_gaussian(g: &GaussianMeasure, grid: &Grid) -> Result<Self> {
        grid.check_covers(g)?;
        Ok(Self::from_gaussian_unchecked(g, grid))
    }

    pub(crate) fn from_gaussian_unchecked(g: &GaussianMeasure, grid: &Grid) -> Self {
        let n = grid.dim();
        let c = g.log_normalizer();
        let values = (0..grid.len())
            .map(|i| (c - 0.5 * g.mahalanobis_sq(&grid.coords(i)[..n])).exp())
            .collect();
        // a covered Gaussian has positive mass on any valid grid
        Self::new(grid.clone(), values, None).expect("gridded Gaussian has positive mass")
    }

    /// Convex combination `alpha * a + (1 - alpha) * b` on a shared grid.
    pub fn mix(a: &GridDensity, b: &GridDensity, alpha: f64) -> Result<Self> {
        if a.grid != b.grid {
            return Err(Error::GridMismatch);
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("mixing weight {alpha} outside [0, 1]")));
        }
        let values = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| alpha * x + (1.0 - alpha) * y)
            .collect();
        Self::new(a.grid.clone(), values, a.blocks)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn blocks(&self) -> Option<BlockStructure> {
        self.blocks
    }

    pub fn with_blocks(mut self, blocks: BlockStructure) -> Result<Self> {
        if blocks.n() != self.grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.grid.dim(),
                got: blocks.n(),
            });
        }
        self.blocks = Some(blocks);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn mass(&self) -> f64 {
        quadrature(&self.grid, &self.values)
    }

    /// Trapezoidal mean and covariance; the covariance is symmetrized.
    pub fn moments(&self) -> Moments {
        let n = self.dim();
        let w = self.grid.weights();
        let p: Vec<f64> = w.iter().zip(&self.values).map(|(w, v)| w * v).collect();
        let mass = pairwise_sum(&p);
        let coords: Vec<Vec<f64>> = (0..n).map(|i| self.grid.coordinate(i)).collect();
        let mean = DVector::from_fn(n, |i, _| {
            let t: Vec<f64> = p.iter().zip(&coords[i]).map(|(p, x)| p * x).collect();
            pairwise_sum(&t) / mass
        });
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let t: Vec<f64> = p
                    .iter()
                    .zip(coords[i].iter().zip(&coords[j]))
                    .map(|(p, (xi, xj))| p * (xi - mean[i]) * (xj - mean[j]))
                    .collect();
                let c = pairwise_sum(&t) / mass;
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
        }
        Moments { mean, cov }
    }

    /// Multilinear interpolation; zero outside the box.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let strides = self.grid.strides();
        let mut cell = [(0usize, 0.0f64); MAX_DIM];
        for i in 0..n {
            match self.grid.axes[i].locate(x[i]) {
                Some(c) => cell[i] = c,
                None => return 0.0,
            }
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut flat = 0;
            for (i, &(c, t)) in cell.iter().enumerate().take(n) {
                let up = (corner >> i) & 1 == 1;
                w *= if up { t } else { 1.0 - t };
                flat += (c + usize::from(up)) * strides[i];
            }
            if w != 0.0 {
                acc += w * self.values[flat];
            }
        }
        acc
    }
}

pub fn quadrature(grid: &Grid, values: &[f64]) -> f64 {
    let w = grid.weights();
    let t: Vec<f64> = w.iter().zip(values).map(|(w, v)| w * v).collect();
    pairwise_sum(&t)
}

/// `d_g(mu1, mu2) = int (1 + |v|^2) |rho1 - rho2| dv`.
pub fn dg_distance(mu1: &GridDensity, mu2: &GridDensity) -> Result<f64> {
    weighted_l1(mu1, mu2, true)
}

/// Plain total variation `int |rho1 - rho2| dv` (no factor 1/2).
pub fn total_variation(mu1: &GridDensity, mu2: &GridDensity) -> Result<f64> {
    weighted_l1(mu1, mu2, false)
}

fn weighted_l1(mu1: &GridDensity, mu2: &GridDensity, weighted: bool) -> Result<f64> {
    if mu1.grid != mu2.grid {
        return Err(Error::GridMismatch);
    }
    let mut w = mu1.grid.weights();
    if weighted {
        for (w, g) in w.iter_mut().zip(mu1.grid.g_weight()) {
            *w *= g;
        }
    }
    let t: Vec<f64> = w
        .iter()
        .zip(mu1.values.iter().zip(&mu2.values))
        .map(|(w, (a, b))| w * (a - b).abs())
        .collect();
    Ok(pairwise_sum(&t))
}

/// Moment matching `G mu = N(M(mu), C(mu))`.
pub fn gaussian_projection(mu: &GridDensity) -> Result<GaussianMeasure> {
    mu.moments().to_gaussian()
}

/// `d_g(pi, G pi)` for a joint density, with `G pi` gridded on the same box.
pub fn lifted_epsilon(joint: &GridDensity) -> Result<f64> {
    if joint.blocks.is_none() {
        return Err(Error::MissingBlocks);
    }
    let projected = gaussian_projection(joint)?;
    let gridded = GridDensity::from_gaussian(&projected, &joint.grid)?;
    dg_distance(joint, &gridded)
}

/// Integrate out the data block of a joint density.
pub fn marginal_u(joint: &GridDensity) -> Result<GridDensity> {
    let blocks = joint.blocks.ok_or(Error::MissingBlocks)?;
    let (state, data) = joint.grid.split(blocks.d)?;
    let wy = data.weights();
    let ny = data.len();
    let values = joint
        .values
        .chunks_exact(ny)
        .map(|row| {
            let t: Vec<f64> = row.iter().zip(&wy).map(|(v, w)| v * w).collect();
            pairwise_sum(&t)
        })
        .collect();
    GridDensity::new(state, values, None)
}

/// `KL(mu || nu) = int rho log(rho / nu)` by quadrature, with `log nu`
/// evaluated in closed form at the nodes.
pub fn kl_to_gaussian(mu: &GridDensity, nu: &GaussianMeasure) -> Result<f64> {
    if nu.dim() != mu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            got: nu.dim(),
        });
    }
    let n = mu.dim();
    let w = mu.grid.weights();
    let c = nu.log_normalizer();
    let t: Vec<f64> = (0..mu.grid.len())
        .map(|i| {
            let r = mu.values[i];
            if r > 0.0 {
                let log_nu = c - 0.5 * nu.mahalanobis_sq(&mu.grid.coords(i)[..n]);
                w[i] * r * (r.ln() - log_nu)
            } else {
                0.0
            }
        })
        .collect();
    Ok(pairwise_sum(&t))
}

/// Operator norm of a symmetric moment difference, as used in moment bounds.
pub fn cov_difference_norm(a: &Moments, b: &Moments) -> f64 {
    linalg::spectral_norm_sym(&(&a.cov - &b.cov))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(half: f64, points: usize) -> Grid {
        Grid::cube(1, half, points).unwrap()
    }

    fn normal(m: f64, v: f64) -> GaussianMeasure {
        GaussianMeasure::scalar(m, v).unwrap()
    }

    #[test]
    fn axis_validation() {
        assert!(Axis::new(1.0, 1.0, 32).is_err());
        assert!(Axis::new(0.0, 1.0, 8).is_err());
        assert!(Axis::new(f64::NAN, 1.0, 32).is_err());
        let a = Axis::new(-1.0, 1.0, 21).unwrap();
        assert_eq!(a.node(20), 1.0);
        assert!((a.weights().iter().sum::<f64>() - 2.0).abs() < 1e-15);
        assert_eq!(a.locate(1.0), Some((19, 1.0)));
        assert_eq!(a.locate(1.0 + 1e-12), None);
    }

    #[test]
    fn gridded_standard_normal_moments() {
        let d = GridDensity::from_gaussian(&normal(0.0, 1.0), &line(8.0, 512)).unwrap();
        let m = d.moments();
        assert!(m.mean[0].abs() < 1e-6);
        assert!((m.cov[(0, 0)] - 1.0).abs() < 1e-6);
        assert!((d.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gridded_bivariate_moments() {
        let g = GaussianMeasure::standard(2).unwrap();
        let d = GridDensity::from_gaussian(&g, &Grid::cube(2, 8.0, 128).unwrap()).unwrap();
        let m = d.moments();
        assert!(m.mean.amax() < 1e-4);
        assert!((m.cov - DMatrix::<f64>::identity(2, 2)).amax() < 1e-4);

        let g = GaussianMeasure::new(
            DVector::from_column_slice(&[0.5, -0.3]),
            DMatrix::from_row_slice(2, 2, &[0.8, 0.3, 0.3, 0.5]),
        )
        .unwrap();
        let d = GridDensity::from_gaussian(&g, &Grid::cube(2, 7.0, 192).unwrap()).unwrap();
        let m = d.moments();
        assert!((&m.mean - g.mean()).amax() < 1e-4);
        assert!((&m.cov - g.cov()).amax() < 1e-4);
    }

    #[test]
    fn small_box_is_a_coverage_error() {
        let r = GridDensity::from_gaussian(&normal(0.0, 1.0), &line(1.0, 64));
        assert!(matches!(r, Err(Error::Coverage(_))));
    }

    #[test]
    fn rejects_negative_values_and_wrong_length() {
        let g = line(1.0, 16);
        let mut v = vec![1.0; 16];
        v[3] = -1e-3;
        assert!(GridDensity::new(g.clone(), v, None).is_err());
        assert!(GridDensity::new(g, vec![1.0; 15], None).is_err());
    }

    #[test]
    fn dg_identity_and_domination() {
        let grid = line(10.0, 1024);
        let a = GridDensity::from_gaussian(&normal(0.0, 1.0), &grid).unwrap();
        let b = GridDensity::from_gaussian(&normal(1.0, 1.0), &grid).unwrap();
        assert_eq!(dg_distance(&a, &a).unwrap(), 0.0);
        let dg = dg_distance(&a, &b).unwrap();
        let tv = total_variation(&a, &b).unwrap();
        assert!(dg >= tv && tv > 0.0);
        assert_eq!(dg, dg_distance(&b, &a).unwrap());
    }

    #[test]
    fn dg_grid_mismatch() {
        let a = GridDensity::from_gaussian(&normal(0.0, 1.0), &line(8.0, 256)).unwrap();
        let b = GridDensity::from_gaussian(&normal(0.0, 1.0), &line(8.0, 257)).unwrap();
        assert!(matches!(dg_distance(&a, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn projection_is_identity_on_gaussians() {
        let g = normal(0.7, 0.4);
        let d = GridDensity::from_gaussian(&g, &line(8.0, 1024)).unwrap();
        let p = gaussian_projection(&d).unwrap();
        assert!((p.mean()[0] - 0.7).abs() < 1e-8);
        assert!((p.cov()[(0, 0)] - 0.4).abs() < 1e-8);
    }

    #[test]
    fn bimodal_projection() {
        let grid = line(8.0, 1024);
        let a = GridDensity::from_gaussian(&normal(-2.0, 0.25), &grid).unwrap();
        let b = GridDensity::from_gaussian(&normal(2.0, 0.25), &grid).unwrap();
        let mix = GridDensity::mix(&a, &b, 0.5).unwrap();
        let p = gaussian_projection(&mix).unwrap();
        assert!(p.mean()[0].abs() < 1e-10);
        assert!((p.cov()[(0, 0)] - 4.25).abs() < 1e-8);
    }

    #[test]
    fn epsilon_of_gaussian_joint_is_small() {
        let g = GaussianMeasure::new(
            DVector::from_column_slice(&[0.2, -0.1]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.8]),
        )
        .unwrap();
        let joint = GridDensity::from_gaussian(&g, &Grid::cube(2, 8.0, 192).unwrap())
            .unwrap()
            .with_blocks(BlockStructure::new(1, 1).unwrap())
            .unwrap();
        assert!(lifted_epsilon(&joint).unwrap() <= 1e-3);
        let plain = GridDensity::from_gaussian(&g, &Grid::cube(2, 8.0, 64).unwrap()).unwrap();
        assert!(matches!(lifted_epsilon(&plain), Err(Error::MissingBlocks)));
    }

    #[test]
    fn marginal_of_product_and_gaussian() {
        let gu = line(8.0, 256);
        let gy = Grid::new(vec![Axis::new(-5.0, 7.0, 200).unwrap()]).unwrap();
        let joint_grid = gu.product(&gy).unwrap();
        let rho_u = |u: f64| (-0.5 * (u - 0.3) * (u - 0.3)).exp() * (1.0 + 0.5 * u.tanh());
        let rho_y = |y: f64| (-(y - 1.0).powi(2)).exp();
        let joint = GridDensity::from_fn(joint_grid, |x| rho_u(x[0]) * rho_y(x[1]))
            .unwrap()
            .with_blocks(BlockStructure::new(1, 1).unwrap())
            .unwrap();
        let m = marginal_u(&joint).unwrap();
        let direct = GridDensity::from_fn(gu, |x| rho_u(x[0])).unwrap();
        assert!(dg_distance(&m, &direct).unwrap() < 1e-12);
        assert!((m.mass() - 1.0).abs() < 1e-8);

        let g = GaussianMeasure::new(
            DVector::from_column_slice(&[0.5, -1.0]),
            DMatrix::from_row_slice(2, 2, &[0.7, 0.2, 0.2, 1.1]),
        )
        .unwrap();
        let joint = GridDensity::from_gaussian(&g, &Grid::cube(2, 9.0, 192).unwrap())
            .unwrap()
            .with_blocks(BlockStructure::new(1, 1).unwrap())
            .unwrap();
        let mm = marginal_u(&joint).unwrap().moments();
        assert!((mm.mean[0] - 0.5).abs() < 1e-6);
        assert!((mm.cov[(0, 0)] - 0.7).abs() < 1e-6);
    }

    #[test]
    fn interpolation_reproduces_nodes_and_linear_functions() {
        let grid = Grid::cube(2, 1.0, 17).unwrap();
        let d = GridDensity::from_fn(grid.clone(), |x| 2.0 + x[0] - 0.5 * x[1]).unwrap();
        let scale = d.values()[0] / (2.0 - 1.0 + 0.5);
        let f = |x: f64, y: f64| scale * (2.0 + x - 0.5 * y);
        assert!((d.interpolate(&[0.123, -0.77]) - f(0.123, -0.77)).abs() < 1e-12);
        assert!((d.interpolate(&[1.0, 1.0]) - f(1.0, 1.0)).abs() < 1e-12);
        assert_eq!(d.interpolate(&[1.5, 0.0]), 0.0);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_inputs() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }
}

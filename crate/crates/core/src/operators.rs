//! Measure maps on grid densities: prediction `P`, lifting `Q`,
//! conditioning `B` and Kalman transport `T`.
//!
//! `P` and `Q` depend on the model and live on an [`OperatorWorkspace`]
//! that owns the state and joint grids and the tabulated kernels. `B` and
//! `T` only need the joint density and the datum.
//!
//! Joint grids are the state axes followed by the data axes, so a joint
//! tensor is a row-major `state_len x data_len` matrix.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::density::{pairwise_sum, Axis, Grid, GridDensity, MAX_DIM};
use crate::error::{Error, Result};
use crate::gaussian::{BlockStructure, GaussianMeasure};
use crate::linalg;
use crate::model::ModelSpec;

/// Largest prediction kernel (entries) kept in memory; larger grids
/// evaluate the kernel on the fly.
pub const KERNEL_CACHE_LIMIT: usize = 1 << 24;
/// Smallest evidence `int pi(u, y) du` accepted by [`bayes`].
pub const MIN_EVIDENCE: f64 = 1e-300;
/// Datum must sit at least this many cells inside the data box.
pub const DATA_MARGIN_CELLS: f64 = 2.0;
/// Mass allowed to leave the state box under transport.
pub const TRANSPORT_LOSS_TOL: f64 = 1e-3;

/// Points per axis of the state and data grids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Resolution {
    pub state: usize,
    pub data: usize,
}

impl Resolution {
    /// 1024 state / 512 data points for `d = 1`, 96 / 96 for `d = 2`.
    pub fn default_for(d: usize) -> Self {
        match d {
            1 => Self { state: 1024, data: 512 },
            _ => Self { state: 96, data: 96 },
        }
    }

    /// `points` per state axis; the data axis gets half that for `d = 1`.
    pub fn from_points(d: usize, points: usize) -> Self {
        let data = if d == 1 { points / 2 } else { points };
        Self {
            state: points,
            data: data.max(crate::density::MIN_POINTS),
        }
    }
}

/// Grids and tabulated kernels for one model.
#[derive(Clone, Debug)]
pub struct OperatorWorkspace {
    fingerprint: u64,
    model: ModelSpec,
    state: Grid,
    data: Grid,
    joint: Grid,
    blocks: BlockStructure,
    /// `Psi` at the state nodes, `len x d`.
    psi_nodes: Vec<f64>,
    /// `N(u_i; Psi(v_j), Sigma) w_j`, row-major in `(i, j)`.
    p_kernel: Option<Vec<f64>>,
    /// `N(y_l; H(u_i), Gamma)`, laid out like the joint tensor.
    q_kernel: Vec<f64>,
}

fn node_vec(grid: &Grid, i: usize) -> Vec<f64> {
    grid.coords(i)[..grid.dim()].to_vec()
}

impl OperatorWorkspace {
    /// Tabulate kernels for `model` on explicit state and data grids.
    pub fn new(model: &ModelSpec, state: Grid, data: Grid) -> Result<Self> {
        if state.dim() != model.d || data.dim() != model.k {
            return Err(Error::DimensionMismatch {
                expected: model.d + model.k,
                got: state.dim() + data.dim(),
            });
        }
        if model.d + model.k > MAX_DIM {
            return Err(Error::InvalidModel(format!(
                "grid operators need d + K <= {MAX_DIM}, got {}",
                model.d + model.k
            )));
        }
        let joint = state.product(&data)?;
        let blocks = BlockStructure::new(model.d, model.k)?;
        let (d, k) = (model.d, model.k);
        let ns = state.len();

        let mut psi_nodes = vec![0.0; ns * d];
        let mut h_nodes = vec![0.0; ns * k];
        for i in 0..ns {
            let u = node_vec(&state, i);
            model.psi.eval(&u, &mut psi_nodes[i * d..(i + 1) * d]);
            model.h.eval(&u, &mut h_nodes[i * k..(i + 1) * k]);
        }

        let sigma = GaussianMeasure::new(DVector::zeros(d), model.sigma.clone())?;
        let gamma = GaussianMeasure::new(DVector::zeros(k), model.gamma.clone())?;

        let p_kernel = (ns * ns <= KERNEL_CACHE_LIMIT).then(|| {
            let w = state.weights();
            let mut kern = vec![0.0; ns * ns];
            kern.par_chunks_mut(ns).enumerate().for_each(|(i, row)| {
                p_row(&state, &psi_nodes, &sigma, &w, i, row);
            });
            kern
        });

        let nd = data.len();
        let mut q_kernel = vec![0.0; ns * nd];
        let c = gamma.log_normalizer();
        q_kernel.par_chunks_mut(nd).enumerate().for_each(|(i, row)| {
            let hu = &h_nodes[i * k..(i + 1) * k];
            let mut r = [0.0; MAX_DIM];
            for (l, out) in row.iter_mut().enumerate() {
                let y = data.coords(l);
                for a in 0..k {
                    r[a] = y[a] - hu[a];
                }
                *out = (c - 0.5 * gamma.mahalanobis_sq(&r[..k])).exp();
            }
        });

        Ok(Self {
            fingerprint: model.fingerprint(),
            model: model.clone(),
            state,
            data,
            joint,
            blocks,
            psi_nodes,
            p_kernel,
            q_kernel,
        })
    }

    /// Choose boxes from a priori moment envelopes and the observed data.
    ///
    /// Bounded `Psi`: the state half-width per axis covers the initial law
    /// and `kappa_Psi + 6 sqrt(kappa_Psi^2 + Sigma_aa)`, the envelope of any
    /// predicted law. Linear-Gaussian models use the analytic Kalman means
    /// and covariances instead. The data half-width covers
    /// `kappa_H + 6 sqrt(2 kappa_H^2 + Gamma_aa)` (or `max |H|` over the state
    /// box plus `6 sqrt(Gamma_aa)` for unbounded `H`) and every datum with a
    /// margin of a few cells.
    pub fn for_problem(model: &ModelSpec, data: &[DVector<f64>], res: Resolution) -> Result<Self> {
        let state = Self::state_grid(model, data, res.state)?;
        let data_grid = Self::data_grid(model, &state, data, res.data)?;
        Self::new(model, state, data_grid)
    }

    fn state_grid(model: &ModelSpec, data: &[DVector<f64>], points: usize) -> Result<Grid> {
        let d = model.d;
        let mut half = vec![0.0_f64; d];
        let mut cover = |m: &DVector<f64>, c: &nalgebra::DMatrix<f64>| {
            for a in 0..d {
                half[a] = half[a].max(m[a].abs() + 6.0 * c[(a, a)].sqrt());
            }
        };
        cover(&model.m0, &model.s0);
        if let Some(kappa) = model.kappa_psi() {
            let m = DVector::from_element(d, kappa);
            let c = &model.sigma + nalgebra::DMatrix::identity(d, d) * kappa * kappa;
            cover(&m, &c);
        } else if model.linear_matrices().is_some() {
            for (pred, post) in crate::filters::kalman_envelope(model, data)? {
                cover(pred.mean(), pred.cov());
                cover(post.mean(), post.cov());
            }
        } else {
            return Err(Error::InvalidModel(
                "grid boxes need a bounded Psi or a linear-Gaussian model".into(),
            ));
        }
        let axes = half
            .iter()
            .map(|&h| Axis::centered(0.0, h, points))
            .collect::<Result<Vec<_>>>()?;
        Grid::new(axes)
    }

    fn data_grid(model: &ModelSpec, state: &Grid, data: &[DVector<f64>], points: usize) -> Result<Grid> {
        let k = model.k;
        let mut half = vec![0.0_f64; k];
        match model.kappa_h() {
            Some(kappa) => {
                for (a, h) in half.iter_mut().enumerate() {
                    *h = kappa + 6.0 * (2.0 * kappa * kappa + model.gamma[(a, a)]).sqrt();
                }
            }
            None => {
                let mut out = vec![0.0; k];
                for i in 0..state.len() {
                    model.h.eval(&node_vec(state, i), &mut out);
                    for a in 0..k {
                        half[a] = half[a].max(out[a].abs());
                    }
                }
                for (a, h) in half.iter_mut().enumerate() {
                    *h += 6.0 * model.gamma[(a, a)].sqrt();
                }
            }
        }
        // keep every datum a few cells inside: half >= |y| + 4 * (2 half / (points - 1))
        let shrink = 1.0 - 8.0 / (points as f64 - 1.0);
        for y in data {
            for a in 0..k {
                half[a] = half[a].max(y[a].abs() / shrink);
            }
        }
        let axes = half
            .iter()
            .map(|&h| Axis::centered(0.0, h, points))
            .collect::<Result<Vec<_>>>()?;
        Grid::new(axes)
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn state_grid_ref(&self) -> &Grid {
        &self.state
    }

    pub fn data_grid_ref(&self) -> &Grid {
        &self.data
    }

    pub fn joint_grid(&self) -> &Grid {
        &self.joint
    }

    pub fn blocks(&self) -> BlockStructure {
        self.blocks
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn kernel_cached(&self) -> bool {
        self.p_kernel.is_some()
    }

    fn check_model(&self, model: &ModelSpec) -> Result<()> {
        if model.fingerprint() != self.fingerprint {
            return Err(Error::WorkspaceMismatch);
        }
        Ok(())
    }

    fn check_state(&self, mu: &GridDensity) -> Result<()> {
        if mu.grid() != &self.state {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Grid a Gaussian on the state box (coverage-checked).
    pub fn grid_state_gaussian(&self, g: &GaussianMeasure) -> Result<GridDensity> {
        GridDensity::from_gaussian(g, &self.state)
    }

    /// `P mu(u) = int N(u; Psi(v), Sigma) mu(v) dv`.
    pub fn predict(&self, mu: &GridDensity, model: &ModelSpec) -> Result<GridDensity> {
        self.check_model(model)?;
        self.check_state(mu)?;
        let ns = self.state.len();
        let rho = mu.values();
        let values: Vec<f64> = match &self.p_kernel {
            Some(kern) => kern
                .par_chunks(ns)
                .map(|row| dot(row, rho))
                .collect(),
            None => {
                let sigma = GaussianMeasure::new(DVector::zeros(self.model.d), self.model.sigma.clone())?;
                let w = self.state.weights();
                (0..ns)
                    .into_par_iter()
                    .map_init(
                        || vec![0.0; ns],
                        |row, i| {
                            p_row(&self.state, &self.psi_nodes, &sigma, &w, i, row);
                            dot(row, rho)
                        },
                    )
                    .collect()
            }
        };
        let (out, _) = GridDensity::operator_output(self.state.clone(), values, None, "predict", 1.0)?;
        Ok(out)
    }

    /// `Q mu(u, y) = N(y; H(u), Gamma) mu(u)` on the joint grid.
    pub fn lift(&self, mu: &GridDensity, model: &ModelSpec) -> Result<GridDensity> {
        self.check_model(model)?;
        self.check_state(mu)?;
        let nd = self.data.len();
        let wy = self.data.weights();
        let mut values = vec![0.0; self.joint.len()];
        let mut lost = vec![0.0; self.state.len()];
        values
            .par_chunks_mut(nd)
            .zip(lost.par_iter_mut())
            .enumerate()
            .for_each(|(i, (row, lost))| {
                let kern = &self.q_kernel[i * nd..(i + 1) * nd];
                let r = mu.values()[i];
                for (o, q) in row.iter_mut().zip(kern) {
                    *o = q * r;
                }
                // likelihood mass of this row that falls outside the data box
                *lost = r * (1.0 - dot(kern, &wy)).max(0.0);
            });
        let w = self.state.weights();
        let t: Vec<f64> = lost.iter().zip(&w).map(|(l, w)| l * w).collect();
        let escaped = pairwise_sum(&t);
        if escaped > TRANSPORT_LOSS_TOL {
            return Err(Error::Coverage(format!(
                "lift: {escaped:.2e} of the joint mass falls outside the data box"
            )));
        }
        let (out, _) = GridDensity::operator_output(self.joint.clone(), values, Some(self.blocks), "lift", 1.0)?;
        Ok(out)
    }

    /// `Q P mu`.
    pub fn lift_predict(&self, mu: &GridDensity, model: &ModelSpec) -> Result<GridDensity> {
        self.lift(&self.predict(mu, model)?, model)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row `i` of the prediction kernel, quadrature weights included.
fn p_row(state: &Grid, psi_nodes: &[f64], sigma: &GaussianMeasure, w: &[f64], i: usize, row: &mut [f64]) {
    let d = state.dim();
    let u = state.coords(i);
    let c = sigma.log_normalizer();
    let mut r = [0.0; MAX_DIM];
    for (j, out) in row.iter_mut().enumerate() {
        let psi = &psi_nodes[j * d..(j + 1) * d];
        for a in 0..d {
            r[a] = u[a] - psi[a];
        }
        *out = (c - 0.5 * sigma.mahalanobis_sq(&r[..d])).exp() * w[j];
    }
}

fn joint_parts(joint: &GridDensity) -> Result<(BlockStructure, Grid, Grid)> {
    let blocks = joint.blocks().ok_or(Error::MissingBlocks)?;
    let (state, data) = joint.grid().split(blocks.d)?;
    Ok((blocks, state, data))
}

/// Conditioning `B`: `pi(u, y_dagger) / int pi(u', y_dagger) du'`.
///
/// The slice between data nodes is interpolated linearly across the
/// neighbouring planes.
pub fn bayes(joint: &GridDensity, y_dagger: &DVector<f64>) -> Result<GridDensity> {
    let (blocks, state, data) = joint_parts(joint)?;
    if y_dagger.len() != blocks.k {
        return Err(Error::DimensionMismatch {
            expected: blocks.k,
            got: y_dagger.len(),
        });
    }
    let k = blocks.k;
    let mut cell = [(0usize, 0.0f64); MAX_DIM];
    for (a, ax) in data.axes().iter().enumerate() {
        let y = y_dagger[a];
        let margin = DATA_MARGIN_CELLS * ax.step();
        if !(y >= ax.lo + margin && y <= ax.hi - margin) {
            return Err(Error::OutOfDomain(format!(
                "datum component {a} = {y} not inside [{}, {}] with a {DATA_MARGIN_CELLS}-cell margin",
                ax.lo, ax.hi
            )));
        }
        cell[a] = ax.locate(y).expect("inside box");
    }
    let strides = data.strides();
    let mut corners = Vec::with_capacity(1 << k);
    for corner in 0..(1usize << k) {
        let mut w = 1.0;
        let mut flat = 0;
        for (a, &(c, t)) in cell.iter().enumerate().take(k) {
            let up = (corner >> a) & 1 == 1;
            w *= if up { t } else { 1.0 - t };
            flat += (c + usize::from(up)) * strides[a];
        }
        if w != 0.0 {
            corners.push((flat, w));
        }
    }
    let nd = data.len();
    let values: Vec<f64> = joint
        .values()
        .chunks_exact(nd)
        .map(|row| corners.iter().map(|&(f, w)| w * row[f]).sum())
        .collect();
    let evidence = crate::density::quadrature(&state, &values);
    if evidence.is_nan() || evidence < MIN_EVIDENCE {
        return Err(Error::DegenerateEvidence(evidence));
    }
    GridDensity::new(state, values, None)
}

/// Kalman gain `A = C^uy (C^yy)^{-1}` of a joint density.
pub fn kalman_gain(joint: &GridDensity) -> Result<nalgebra::DMatrix<f64>> {
    let blocks = joint.blocks().ok_or(Error::MissingBlocks)?;
    let m = joint.moments();
    let (_, c_uy, c_yy) = blocks.split_cov(&m.cov);
    linalg::gain(&c_uy, &c_yy)
}

/// Kalman transport `T`: push `pi` through `(u, y) -> u + A (y_dagger - y)`,
/// `A = C^uy (C^yy)^{-1}`, and keep the state marginal.
///
/// Evaluated backwards, `(T pi)(v) = int pi(v - A (y_dagger - y), y) dy`.
/// The shift is constant along each data plane, so every plane is a fixed
/// multilinear stencil applied to the state grid.
pub fn transport(joint: &GridDensity, y_dagger: &DVector<f64>) -> Result<GridDensity> {
    let (blocks, state, data) = joint_parts(joint)?;
    if y_dagger.len() != blocks.k {
        return Err(Error::DimensionMismatch {
            expected: blocks.k,
            got: y_dagger.len(),
        });
    }
    let gain = kalman_gain(joint)?;
    transport_with_gain(joint, &state, &data, &gain, y_dagger)
}

fn transport_with_gain(
    joint: &GridDensity,
    state: &Grid,
    data: &Grid,
    gain: &nalgebra::DMatrix<f64>,
    y_dagger: &DVector<f64>,
) -> Result<GridDensity> {
    let d = state.dim();
    let ns = state.len();
    let nd = data.len();
    let wy = data.weights();
    let shape = state.shape();
    let strides = state.strides();
    let steps: Vec<f64> = state.axes().iter().map(Axis::step).collect();
    let vals = joint.values();

    let planes: Vec<Vec<f64>> = (0..nd)
        .into_par_iter()
        .map(|l| {
            let y = data.coords(l);
            let innov: Vec<f64> = (0..data.dim()).map(|a| y_dagger[a] - y[a]).collect();
            // source index offset in cells: -A (y_dagger - y) / h
            let mut base = [0isize; MAX_DIM];
            let mut frac = [0.0f64; MAX_DIM];
            for a in 0..d {
                let s: f64 = (0..innov.len()).map(|b| gain[(a, b)] * innov[b]).sum();
                let q = -s / steps[a];
                let f = q.floor();
                base[a] = f as isize;
                frac[a] = q - f;
            }
            let mut out = vec![0.0; ns];
            for (i, o) in out.iter_mut().enumerate() {
                let idx = state.unravel(i);
                let mut acc = 0.0;
                'corner: for corner in 0..(1usize << d) {
                    let mut w = 1.0;
                    let mut flat = 0usize;
                    for a in 0..d {
                        let up = (corner >> a) & 1 == 1;
                        w *= if up { frac[a] } else { 1.0 - frac[a] };
                        let src = idx[a] as isize + base[a] + isize::from(up);
                        if w == 0.0 || src < 0 || src >= shape[a] as isize {
                            continue 'corner;
                        }
                        flat += src as usize * strides[a];
                    }
                    acc += w * vals[flat * nd + l];
                }
                *o = acc * wy[l];
            }
            out
        })
        .collect();

    let values: Vec<f64> = (0..ns)
        .map(|i| planes.iter().map(|p| p[i]).sum())
        .collect();
    let mass = crate::density::quadrature(state, &values);
    if 1.0 - mass > TRANSPORT_LOSS_TOL {
        return Err(Error::Coverage(format!(
            "transport: {:.2e} of the mass leaves the state box",
            1.0 - mass
        )));
    }
    let (out, _) = GridDensity::operator_output(state.clone(), values, None, "transport", 1.0)?;
    Ok(out)
}

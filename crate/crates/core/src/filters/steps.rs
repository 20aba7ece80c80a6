use nalgebra::DVector;

use crate::density::{gaussian_projection, lifted_epsilon, GridDensity};
use crate::error::{Error, Result};
use crate::gaussian::GaussianMeasure;
use crate::linalg;
use crate::model::ModelSpec;
use crate::operators::{bayes, transport, OperatorWorkspace};

/// The two equivalent orderings of the Gaussian projected filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GpfForm {
    /// Project `Q P mu`, then condition in closed form.
    Bg,
    /// Transport `Q P mu` on the grid, then project.
    Gt,
}

/// `B Q P mu`.
pub fn step_true(ws: &OperatorWorkspace, mu: &GridDensity, model: &ModelSpec, y: &DVector<f64>) -> Result<GridDensity> {
    bayes(&ws.lift_predict(mu, model)?, y)
}

/// `T Q P mu`.
pub fn step_enkf_meanfield(
    ws: &OperatorWorkspace,
    mu: &GridDensity,
    model: &ModelSpec,
    y: &DVector<f64>,
) -> Result<GridDensity> {
    transport(&ws.lift_predict(mu, model)?, y)
}

/// `B G Q P mu` or `G T Q P mu`, with `P` and `Q` evaluated on the grid.
pub fn step_gpf(
    ws: &OperatorWorkspace,
    mu: &GaussianMeasure,
    model: &ModelSpec,
    y: &DVector<f64>,
    form: GpfForm,
) -> Result<GaussianMeasure> {
    let joint = ws.lift_predict(&ws.grid_state_gaussian(mu)?, model)?;
    gpf_analysis(ws, &joint, y, form)
}

fn gpf_analysis(ws: &OperatorWorkspace, joint: &GridDensity, y: &DVector<f64>, form: GpfForm) -> Result<GaussianMeasure> {
    match form {
        GpfForm::Bg => gaussian_projection(joint)?.condition(&ws.blocks(), y),
        GpfForm::Gt => gaussian_projection(&transport(joint, y)?),
    }
}

pub(super) fn true_step_eps(
    ws: &OperatorWorkspace,
    mu: &GridDensity,
    model: &ModelSpec,
    y: &DVector<f64>,
) -> Result<(GridDensity, f64)> {
    let joint = ws.lift_predict(mu, model)?;
    Ok((bayes(&joint, y)?, lifted_epsilon(&joint)?))
}

pub(super) fn enkf_mf_step_eps(
    ws: &OperatorWorkspace,
    mu: &GridDensity,
    model: &ModelSpec,
    y: &DVector<f64>,
) -> Result<(GridDensity, f64)> {
    let joint = ws.lift_predict(mu, model)?;
    Ok((transport(&joint, y)?, lifted_epsilon(&joint)?))
}

pub(super) fn gpf_step_eps(
    ws: &OperatorWorkspace,
    mu: &GaussianMeasure,
    model: &ModelSpec,
    y: &DVector<f64>,
    form: GpfForm,
) -> Result<(GaussianMeasure, f64)> {
    let joint = ws.lift_predict(&ws.grid_state_gaussian(mu)?, model)?;
    Ok((gpf_analysis(ws, &joint, y, form)?, lifted_epsilon(&joint)?))
}

/// Predicted and filtered Kalman laws `(mu_j^-, mu_j)` for `j = 1..J`.
pub fn kalman_envelope(model: &ModelSpec, data: &[DVector<f64>]) -> Result<Vec<(GaussianMeasure, GaussianMeasure)>> {
    let (a, c) = model.linear_matrices().ok_or(Error::NotLinear)?;
    let mut m = model.m0.clone();
    let mut s = model.s0.clone();
    let mut out = Vec::with_capacity(data.len());
    for y in data {
        let mp = &a * &m;
        let sp = linalg::symmetrize(&(&a * &s * a.transpose() + &model.sigma));
        let innov_cov = &c * &sp * c.transpose() + &model.gamma;
        let cross = &sp * c.transpose();
        let gain = linalg::gain(&cross, &innov_cov)?;
        m = &mp + &gain * (y - &c * &mp);
        s = linalg::symmetrize(&(&sp - &gain * cross.transpose()));
        out.push((GaussianMeasure::new(mp, sp)?, GaussianMeasure::new(m.clone(), s.clone())?));
    }
    Ok(out)
}

/// Exact filtering laws `mu_0 .. mu_J` of a linear-Gaussian model.
pub fn kalman_analytic(model: &ModelSpec, data: &[DVector<f64>]) -> Result<Vec<GaussianMeasure>> {
    let mut out = vec![model.initial()?];
    out.extend(kalman_envelope(model, data)?.into_iter().map(|(_, post)| post));
    Ok(out)
}

//! Filtering problems: dynamics `Psi`, observation `H`, noise covariances and
//! the initial law, plus probe-based certificates for the standing
//! assumptions (bounded `Psi`, bounded Lipschitz `H`, SPD noises).
//!
//! Maps come from a closed registry of families so models serialize to a
//! plain config file and kernels can be tabulated ahead of time.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianMeasure;
use crate::linalg;

/// Maximum of `|d/du u^2/(1+u^2)|`, attained at `u = 1/sqrt(3)`.
const RATIONAL_SLOPE: f64 = 0.649_519_052_838_329; // 3 sqrt(3) / 8

/// A registered map family with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum MapFamily {
    /// `u -> M u`
    Linear { matrix: DMatrix<f64> },
    /// `u -> scale tanh(u)` componentwise
    Tanh { scale: f64 },
    /// `u -> scale tanh(u) + delta sin(frequency u)` componentwise
    TanhSin { scale: f64, delta: f64, frequency: f64 },
    /// `u -> scale tanh(u) + delta u^2 / (1 + u^2)` componentwise
    BoundedRational { scale: f64, delta: f64 },
    /// `u -> value`
    Constant { value: DVector<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Scalar,
    Vector,
    Matrix,
}

#[derive(Clone, Copy, Debug)]
pub struct ParamInfo {
    pub name: &'static str,
    pub kind: ParamKind,
    pub default: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct FamilyInfo {
    pub name: &'static str,
    pub params: &'static [ParamInfo],
    pub description: &'static str,
}

const fn scalar(name: &'static str, default: Option<f64>) -> ParamInfo {
    ParamInfo {
        name,
        kind: ParamKind::Scalar,
        default,
    }
}

static FAMILIES: [FamilyInfo; 5] = [
    FamilyInfo {
        name: "linear",
        params: &[ParamInfo {
            name: "matrix",
            kind: ParamKind::Matrix,
            default: None,
        }],
        description: "u -> M u (row-major matrix); unbounded, exactness tests only",
    },
    FamilyInfo {
        name: "tanh",
        params: &[scalar("scale", Some(1.0))],
        description: "u -> scale * tanh(u), componentwise",
    },
    FamilyInfo {
        name: "tanh_sin",
        params: &[
            scalar("scale", Some(1.0)),
            scalar("delta", None),
            scalar("frequency", Some(3.0)),
        ],
        description: "u -> scale * tanh(u) + delta * sin(frequency * u), componentwise",
    },
    FamilyInfo {
        name: "bounded_rational",
        params: &[scalar("scale", Some(1.0)), scalar("delta", None)],
        description: "u -> scale * tanh(u) + delta * u^2 / (1 + u^2), componentwise",
    },
    FamilyInfo {
        name: "constant",
        params: &[ParamInfo {
            name: "value",
            kind: ParamKind::Vector,
            default: None,
        }],
        description: "u -> value",
    },
];

/// Catalog of built-in map families and their parameter schemas.
pub fn registered_families() -> &'static [FamilyInfo] {
    &FAMILIES
}

/// Parameters of a map as written in a config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Vec<f64>>,
}

impl MapParams {
    fn is_set(&self, name: &str) -> bool {
        match name {
            "scale" => self.scale.is_some(),
            "delta" => self.delta.is_some(),
            "frequency" => self.frequency.is_some(),
            "matrix" => self.matrix.is_some(),
            "value" => self.value.is_some(),
            _ => false,
        }
    }

    fn scalar(&self, info: &FamilyInfo, name: &str) -> Result<f64> {
        let v = match name {
            "scale" => self.scale,
            "delta" => self.delta,
            "frequency" => self.frequency,
            _ => None,
        };
        let p = info.params.iter().find(|p| p.name == name).expect("schema entry");
        let v = v.or(p.default).ok_or_else(|| {
            Error::InvalidModel(format!("family '{}' requires parameter '{name}'", info.name))
        })?;
        if !v.is_finite() {
            return Err(Error::InvalidModel(format!("parameter '{name}' is not finite")));
        }
        Ok(v)
    }
}

impl MapFamily {
    /// Build a family from its registered name and parameters.
    pub fn lookup(name: &str, params: &MapParams) -> Result<Self> {
        let info = FAMILIES
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| Error::UnknownFamily(name.to_string()))?;
        for extra in ["scale", "delta", "frequency", "matrix", "value"] {
            if params.is_set(extra) && !info.params.iter().any(|p| p.name == extra) {
                return Err(Error::InvalidModel(format!(
                    "family '{name}' takes no parameter '{extra}'"
                )));
            }
        }
        Ok(match name {
            "linear" => {
                let rows = params.matrix.as_ref().ok_or_else(|| {
                    Error::InvalidModel("family 'linear' requires parameter 'matrix'".into())
                })?;
                let matrix = linalg::matrix_from_rows(rows)?;
                if matrix.is_empty() || !matrix.iter().all(|v| v.is_finite()) {
                    return Err(Error::InvalidModel("linear map matrix is empty or not finite".into()));
                }
                MapFamily::Linear { matrix }
            }
            "tanh" => MapFamily::Tanh {
                scale: params.scalar(info, "scale")?,
            },
            "tanh_sin" => MapFamily::TanhSin {
                scale: params.scalar(info, "scale")?,
                delta: params.scalar(info, "delta")?,
                frequency: params.scalar(info, "frequency")?,
            },
            "bounded_rational" => MapFamily::BoundedRational {
                scale: params.scalar(info, "scale")?,
                delta: params.scalar(info, "delta")?,
            },
            "constant" => {
                let value = params.value.as_ref().ok_or_else(|| {
                    Error::InvalidModel("family 'constant' requires parameter 'value'".into())
                })?;
                if value.is_empty() || !value.iter().all(|v| v.is_finite()) {
                    return Err(Error::InvalidModel("constant map value is empty or not finite".into()));
                }
                MapFamily::Constant {
                    value: DVector::from_column_slice(value),
                }
            }
            _ => unreachable!("registry and constructor out of sync"),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            MapFamily::Linear { .. } => "linear",
            MapFamily::Tanh { .. } => "tanh",
            MapFamily::TanhSin { .. } => "tanh_sin",
            MapFamily::BoundedRational { .. } => "bounded_rational",
            MapFamily::Constant { .. } => "constant",
        }
    }

    pub fn params(&self) -> MapParams {
        let mut p = MapParams::default();
        match self {
            MapFamily::Linear { matrix } => p.matrix = Some(linalg::matrix_to_rows(matrix)),
            MapFamily::Tanh { scale } => p.scale = Some(*scale),
            MapFamily::TanhSin {
                scale,
                delta,
                frequency,
            } => {
                p.scale = Some(*scale);
                p.delta = Some(*delta);
                p.frequency = Some(*frequency);
            }
            MapFamily::BoundedRational { scale, delta } => {
                p.scale = Some(*scale);
                p.delta = Some(*delta);
            }
            MapFamily::Constant { value } => p.value = Some(value.iter().copied().collect()),
        }
        p
    }

    fn scalar_fn(&self, x: f64) -> f64 {
        match *self {
            MapFamily::Tanh { scale } => scale * x.tanh(),
            MapFamily::TanhSin {
                scale,
                delta,
                frequency,
            } => scale * x.tanh() + delta * (frequency * x).sin(),
            MapFamily::BoundedRational { scale, delta } => {
                let x2 = x * x;
                scale * x.tanh() + delta * x2 / (1.0 + x2)
            }
            _ => unreachable!("not a componentwise family"),
        }
    }

    /// Uniform bound on `|f(u)|` per output component.
    fn component_sup(&self) -> Option<f64> {
        match *self {
            MapFamily::Linear { .. } => None,
            MapFamily::Tanh { scale } => Some(scale.abs()),
            MapFamily::TanhSin { scale, delta, .. } => Some(scale.abs() + delta.abs()),
            MapFamily::BoundedRational { scale, delta } => Some(scale.abs() + delta.abs()),
            MapFamily::Constant { .. } => None,
        }
    }

    /// Bound on the derivative of a componentwise family.
    fn component_lipschitz(&self) -> f64 {
        match *self {
            MapFamily::Tanh { scale } => scale.abs(),
            MapFamily::TanhSin {
                scale,
                delta,
                frequency,
            } => scale.abs() + delta.abs() * frequency.abs(),
            MapFamily::BoundedRational { scale, delta } => scale.abs() + delta.abs() * RATIONAL_SLOPE,
            _ => unreachable!("not a componentwise family"),
        }
    }
}

/// A map `R^d -> R^m`: a family, optionally followed by selecting components.
#[derive(Clone, Debug, PartialEq)]
pub struct MapSpec {
    pub family: MapFamily,
    /// Output components to keep, in order; all when `None`.
    pub pick: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pick: Option<Vec<usize>>,
    #[serde(flatten)]
    pub params: MapParams,
}

impl TryFrom<MapConfig> for MapSpec {
    type Error = Error;

    fn try_from(c: MapConfig) -> Result<Self> {
        Ok(MapSpec {
            family: MapFamily::lookup(&c.family, &c.params)?,
            pick: c.pick,
        })
    }
}

impl From<&MapSpec> for MapConfig {
    fn from(m: &MapSpec) -> Self {
        MapConfig {
            family: m.family.name().to_string(),
            pick: m.pick.clone(),
            params: m.family.params(),
        }
    }
}

impl MapSpec {
    pub fn new(family: MapFamily) -> Self {
        Self { family, pick: None }
    }

    pub fn picking(family: MapFamily, pick: Vec<usize>) -> Self {
        Self {
            family,
            pick: Some(pick),
        }
    }

    /// Output dimension of the underlying family for input dimension `d`.
    fn family_output_dim(&self, d: usize) -> usize {
        match &self.family {
            MapFamily::Linear { matrix } => matrix.nrows(),
            MapFamily::Constant { value } => value.len(),
            _ => d,
        }
    }

    fn check_shape(&self, d: usize, m: usize) -> Result<()> {
        if let MapFamily::Linear { matrix } = &self.family {
            if matrix.ncols() != d {
                return Err(Error::InvalidModel(format!(
                    "linear map has {} columns, state dimension is {d}",
                    matrix.ncols()
                )));
            }
        }
        let inner = self.family_output_dim(d);
        if let Some(p) = &self.pick {
            if let Some(bad) = p.iter().find(|&&i| i >= inner) {
                return Err(Error::InvalidModel(format!(
                    "pick index {bad} out of range for {inner} outputs"
                )));
            }
        }
        let out = self.pick.as_ref().map_or(inner, Vec::len);
        if out != m {
            return Err(Error::InvalidModel(format!(
                "map '{}' has {out} outputs, expected {m}",
                self.family.name()
            )));
        }
        Ok(())
    }

    fn source(&self, i: usize) -> usize {
        self.pick.as_ref().map_or(i, |p| p[i])
    }

    /// Evaluate into `out`; shapes were checked when the model was built.
    pub fn eval(&self, u: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let s = self.source(i);
            *o = match &self.family {
                MapFamily::Linear { matrix } => (0..u.len()).map(|j| matrix[(s, j)] * u[j]).sum(),
                MapFamily::Constant { value } => value[s],
                f => f.scalar_fn(u[s]),
            };
        }
    }

    pub fn apply(&self, u: &DVector<f64>, out_dim: usize) -> DVector<f64> {
        let mut out = DVector::zeros(out_dim);
        self.eval(u.as_slice(), out.as_mut_slice());
        out
    }

    /// Analytic bound on `sup |f(u)|` for `out_dim` outputs.
    pub fn sup_bound(&self, out_dim: usize) -> Option<f64> {
        match &self.family {
            MapFamily::Linear { matrix } if matrix.iter().all(|v| *v == 0.0) => Some(0.0),
            MapFamily::Linear { .. } => None,
            MapFamily::Constant { value } => {
                let n2: f64 = (0..out_dim).map(|i| value[self.source(i)].powi(2)).sum();
                Some(n2.sqrt())
            }
            f => f.component_sup().map(|s| s * (out_dim as f64).sqrt()),
        }
    }

    /// Analytic Lipschitz constant (Euclidean norms).
    pub fn lipschitz_bound(&self) -> f64 {
        match &self.family {
            MapFamily::Linear { matrix } => {
                let rows = self.pick.clone().unwrap_or_else(|| (0..matrix.nrows()).collect());
                let picked = DMatrix::from_fn(rows.len(), matrix.ncols(), |i, j| matrix[(rows[i], j)]);
                linalg::spectral_norm(&picked)
            }
            MapFamily::Constant { .. } => 0.0,
            f => f.component_lipschitz(),
        }
    }

    /// Matrix of a linear map (after picking), if the family is linear.
    pub fn linear_matrix(&self) -> Option<DMatrix<f64>> {
        match &self.family {
            MapFamily::Linear { matrix } => {
                let rows = self.pick.clone().unwrap_or_else(|| (0..matrix.nrows()).collect());
                Some(DMatrix::from_fn(rows.len(), matrix.ncols(), |i, j| matrix[(rows[i], j)]))
            }
            _ => None,
        }
    }
}

/// Optional user-declared bounds; analytic family bounds are used otherwise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredBounds {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_psi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lip_h: Option<f64>,
}

impl DeclaredBounds {
    pub fn is_empty(&self) -> bool {
        self.kappa_psi.is_none() && self.kappa_h.is_none() && self.lip_h.is_none()
    }
}

/// A filtering problem
/// `u_{j+1} = Psi(u_j) + xi_j`, `y_{j+1} = H(u_{j+1}) + eta_{j+1}`,
/// `xi ~ N(0, Sigma)`, `eta ~ N(0, Gamma)`, `u_0 ~ N(m0, S0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub d: usize,
    pub k: usize,
    pub psi: MapSpec,
    pub h: MapSpec,
    pub sigma: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub m0: DVector<f64>,
    pub s0: DMatrix<f64>,
    pub declared: DeclaredBounds,
}

/// Config-file form of a [`ModelSpec`]; matrices are row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub k: usize,
    pub sigma: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub m0: Vec<f64>,
    pub s0: Vec<Vec<f64>>,
    pub psi: MapConfig,
    pub h: MapConfig,
    #[serde(default, skip_serializing_if = "DeclaredBounds::is_empty")]
    pub bounds: DeclaredBounds,
}

fn check_spd(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::InvalidModel(format!(
            "{name} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    if linalg::relative_asymmetry(m) > linalg::SYMMETRY_TOL {
        return Err(Error::InvalidModel(format!("{name} is not symmetric")));
    }
    // strict: no jitter repair for model inputs
    let ok = m.clone().cholesky().map(|c| linalg::rcond_estimate(&c) >= linalg::RCOND_THRESHOLD);
    if ok != Some(true) {
        return Err(Error::InvalidModel(format!("{name} is not positive definite")));
    }
    Ok(())
}

impl ModelSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        d: usize,
        k: usize,
        psi: MapSpec,
        h: MapSpec,
        sigma: DMatrix<f64>,
        gamma: DMatrix<f64>,
        m0: DVector<f64>,
        s0: DMatrix<f64>,
    ) -> Result<Self> {
        if d == 0 || k == 0 {
            return Err(Error::InvalidModel(format!("dimensions d={d}, K={k} must be positive")));
        }
        psi.check_shape(d, d)?;
        h.check_shape(d, k)?;
        check_spd("Sigma", &sigma, d)?;
        check_spd("Gamma", &gamma, k)?;
        check_spd("S0", &s0, d)?;
        if m0.len() != d || !m0.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidModel(format!("m0 must be a finite vector of length {d}")));
        }
        Ok(Self {
            d,
            k,
            psi,
            h,
            sigma,
            gamma,
            m0,
            s0,
            declared: DeclaredBounds::default(),
        })
    }

    pub fn with_declared_bounds(mut self, declared: DeclaredBounds) -> Self {
        self.declared = declared;
        self
    }

    /// Scalar model with `Psi = a tanh`, `H = tanh`, `Sigma = Gamma = 0.25`,
    /// `u_0 ~ N(0, 1)`.
    pub fn default_bounded() -> Self {
        Self::scalar(
            MapFamily::Tanh { scale: 0.9 },
            MapFamily::Tanh { scale: 1.0 },
            0.25,
            0.25,
            0.0,
            1.0,
        )
        .expect("valid default model")
    }

    /// Scalar linear-Gaussian model `Psi(u) = a u`, `H(u) = c u`.
    pub fn linear_scalar(a: f64, c: f64, sigma: f64, gamma: f64, m0: f64, s0: f64) -> Result<Self> {
        Self::scalar(
            MapFamily::Linear {
                matrix: DMatrix::from_element(1, 1, a),
            },
            MapFamily::Linear {
                matrix: DMatrix::from_element(1, 1, c),
            },
            sigma,
            gamma,
            m0,
            s0,
        )
    }

    pub fn scalar(psi: MapFamily, h: MapFamily, sigma: f64, gamma: f64, m0: f64, s0: f64) -> Result<Self> {
        Self::new(
            1,
            1,
            MapSpec::new(psi),
            MapSpec::new(h),
            DMatrix::from_element(1, 1, sigma),
            DMatrix::from_element(1, 1, gamma),
            DVector::from_element(1, m0),
            DMatrix::from_element(1, 1, s0),
        )
    }

    /// Near-Gaussianity sweep family:
    /// `Psi(u) = 0.9 tanh(u) + delta sin(3u)`, `H(u) = tanh(u) + delta u^2/(1+u^2)`,
    /// `Sigma = Gamma = 0.25`, `u_0 ~ N(0, 1)`.
    pub fn sweep_family(delta: f64) -> Self {
        Self::scalar(
            MapFamily::TanhSin {
                scale: 0.9,
                delta,
                frequency: 3.0,
            },
            MapFamily::BoundedRational { scale: 1.0, delta },
            0.25,
            0.25,
            0.0,
            1.0,
        )
        .expect("valid sweep model")
    }

    pub fn kappa_psi(&self) -> Option<f64> {
        self.declared.kappa_psi.or_else(|| self.psi.sup_bound(self.d))
    }

    pub fn kappa_h(&self) -> Option<f64> {
        self.declared.kappa_h.or_else(|| self.h.sup_bound(self.k))
    }

    pub fn lip_h(&self) -> f64 {
        self.declared.lip_h.unwrap_or_else(|| self.h.lipschitz_bound())
    }

    /// `d_g` Lipschitz constant of the prediction, `1 + kappa_psi^2 + tr Sigma`.
    pub fn lipschitz_p(&self) -> Option<f64> {
        self.kappa_psi().map(|k| 1.0 + k * k + self.sigma.trace())
    }

    /// `d_g` Lipschitz constant of the lifting, `1 + kappa_h^2 + tr Gamma`.
    pub fn lipschitz_q(&self) -> Option<f64> {
        self.kappa_h().map(|k| 1.0 + k * k + self.gamma.trace())
    }

    /// Largest `sigma` with `Sigma >= sigma I`.
    pub fn sigma_lower(&self) -> f64 {
        linalg::min_eigenvalue(&self.sigma)
    }

    /// Largest `gamma` with `Gamma >= gamma I`.
    pub fn gamma_lower(&self) -> f64 {
        linalg::min_eigenvalue(&self.gamma)
    }

    /// `(A, C)` with `Psi(u) = A u`, `H(u) = C u`, when both maps are linear.
    pub fn linear_matrices(&self) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((self.psi.linear_matrix()?, self.h.linear_matrix()?))
    }

    pub fn initial(&self) -> Result<GaussianMeasure> {
        GaussianMeasure::new(self.m0.clone(), self.s0.clone())
    }

    pub fn psi_at(&self, u: &DVector<f64>) -> DVector<f64> {
        self.psi.apply(u, self.d)
    }

    pub fn h_at(&self, u: &DVector<f64>) -> DVector<f64> {
        self.h.apply(u, self.k)
    }

    pub fn to_config(&self) -> ModelConfig {
        ModelConfig {
            d: self.d,
            k: self.k,
            sigma: linalg::matrix_to_rows(&self.sigma),
            gamma: linalg::matrix_to_rows(&self.gamma),
            m0: self.m0.iter().copied().collect(),
            s0: linalg::matrix_to_rows(&self.s0),
            psi: MapConfig::from(&self.psi),
            h: MapConfig::from(&self.h),
            bounds: self.declared,
        }
    }

    pub fn from_config(c: ModelConfig) -> Result<Self> {
        Ok(Self::new(
            c.d,
            c.k,
            MapSpec::try_from(c.psi)?,
            MapSpec::try_from(c.h)?,
            linalg::matrix_from_rows(&c.sigma)?,
            linalg::matrix_from_rows(&c.gamma)?,
            DVector::from_vec(c.m0),
            linalg::matrix_from_rows(&c.s0)?,
        )?
        .with_declared_bounds(c.bounds))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_config()).expect("model config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: ModelConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_config(c)
    }

    /// Stable-within-a-build identifier used to match operator caches.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.to_toml().hash(&mut h);
        h.finish()
    }
}

/// One line of an assumption report.
#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub bound: Option<f64>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
    /// Set when a linear (hence unbounded) map makes the model usable for
    /// exactness tests only.
    pub linear_exactness_mode: bool,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Number of probe points used for the sup-norm and Lipschitz certificates.
pub const PROBE_POINTS: usize = 10_000;
/// Farthest probe coordinate.
pub const PROBE_RADIUS: f64 = 1000.0;
/// Finite-difference step of the Lipschitz probe.
pub const PROBE_STEP: f64 = 1e-6;
/// Relative slack allowed on the Lipschitz certificate.
pub const LIPSCHITZ_SLACK: f64 = 0.05;

/// Deterministic probe set: a tensor grid of `sinh`-spaced nodes, dense near
/// the origin and reaching `+-PROBE_RADIUS`.
pub fn probe_points(d: usize) -> Vec<Vec<f64>> {
    let per_axis = (PROBE_POINTS as f64).powf(1.0 / d as f64).ceil() as usize;
    let t_max = PROBE_RADIUS.asinh();
    let nodes: Vec<f64> = (0..per_axis)
        .map(|i| (-t_max + 2.0 * t_max * i as f64 / (per_axis - 1) as f64).sinh())
        .collect();
    let mut pts: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..d {
        pts = pts
            .into_iter()
            .flat_map(|p| {
                nodes.iter().map(move |&x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    pts
}

fn probe_directions(d: usize) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for i in 0..d {
        for j in (i + 1)..d {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; d];
                v[i] = std::f64::consts::FRAC_1_SQRT_2;
                v[j] = s * std::f64::consts::FRAC_1_SQRT_2;
                dirs.push(v);
            }
        }
    }
    dirs
}

fn sup_probe(map: &MapSpec, pts: &[Vec<f64>], m: usize) -> f64 {
    let mut out = vec![0.0; m];
    pts.iter()
        .map(|p| {
            map.eval(p, &mut out);
            out.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max)
}

fn lipschitz_probe(map: &MapSpec, pts: &[Vec<f64>], m: usize) -> f64 {
    let d = pts.first().map_or(0, Vec::len);
    let dirs = probe_directions(d);
    let (mut a, mut b) = (vec![0.0; m], vec![0.0; m]);
    let mut best = 0.0_f64;
    for p in pts {
        map.eval(p, &mut a);
        for dir in &dirs {
            let q: Vec<f64> = p.iter().zip(dir).map(|(x, v)| x + PROBE_STEP * v).collect();
            map.eval(&q, &mut b);
            let diff = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            best = best.max(diff / PROBE_STEP);
        }
    }
    best
}

/// Probe-based certificate of the standing assumptions.
pub fn validate_assumptions(model: &ModelSpec) -> AssumptionReport {
    let pts = probe_points(model.d);
    let mut checks = Vec::new();
    let mut linear_mode = false;

    let mut bounded = |name: &'static str, map: &MapSpec, m: usize, bound: Option<f64>| {
        let measured = sup_probe(map, &pts, m);
        let (passed, note) = match bound {
            Some(b) => (
                measured <= b * (1.0 + 1e-12) + 1e-12,
                format!("sup over {} probes", pts.len()),
            ),
            None if matches!(map.family, MapFamily::Linear { .. }) => {
                linear_mode = true;
                (false, "unbounded linear map: linear-exactness mode only".to_string())
            }
            None => (false, "no bound declared".to_string()),
        };
        checks.push(AssumptionCheck {
            name,
            passed,
            measured,
            bound,
            note,
        });
    };
    bounded("psi_bounded", &model.psi, model.d, model.kappa_psi());
    bounded("h_bounded", &model.h, model.k, model.kappa_h());

    let lip = model.lip_h();
    let measured = lipschitz_probe(&model.h, &pts, model.k);
    checks.push(AssumptionCheck {
        name: "h_lipschitz",
        passed: measured <= lip * (1.0 + LIPSCHITZ_SLACK) + 1e-9,
        measured,
        bound: Some(lip),
        note: format!("finite differences, step {PROBE_STEP:e}, {:.0}% slack", LIPSCHITZ_SLACK * 100.0),
    });

    let sigma = model.sigma_lower();
    checks.push(AssumptionCheck {
        name: "sigma_positive_definite",
        passed: sigma > 0.0,
        measured: sigma,
        bound: None,
        note: "smallest eigenvalue of Sigma".into(),
    });
    let gamma = model.gamma_lower();
    checks.push(AssumptionCheck {
        name: "gamma_positive_definite",
        passed: gamma > 0.0,
        measured: gamma,
        bound: None,
        note: "smallest eigenvalue of Gamma".into(),
    });

    AssumptionReport {
        checks,
        linear_exactness_mode: linear_mode,
    }
}

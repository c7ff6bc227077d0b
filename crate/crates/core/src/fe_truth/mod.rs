//! Finite element truth discretization of the two obstacle models.
//!
//! Model 1 is a rope over a rigid obstacle on (0, 1): `-mu u'' = -1`,
//! `u >= 5x - 10`. Model 2 is a membrane under a rigid plate on the unit square:
//! `-mu Laplace(u) = 1`, `u <= 0.1`. Both use P1 elements with the Dirichlet
//! nodes eliminated and X_V equal to the unit-coefficient stiffness matrix.

mod assembly;
mod mesh;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, SkylineCholesky};

pub use assembly::{assemble_model, load_vector, stiffness_matrix};
pub use mesh::{build_mesh, interval_mesh, square_mesh, Elements, Mesh};

/// Which of the two obstacle problems to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelId {
    /// 1D rope over an obstacle, `mu` in `[0.001, 0.01]`.
    Rope,
    /// 2D membrane under a plate, `mu` in `[0.45, 0.55]`.
    Membrane,
}

impl ModelId {
    pub fn number(self) -> u8 {
        match self {
            ModelId::Rope => 1,
            ModelId::Membrane => 2,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(ModelId::Rope),
            2 => Ok(ModelId::Membrane),
            _ => Err(Error::InvalidSpec(format!("unknown model {n}, expected 1 or 2"))),
        }
    }

    pub fn default_resolution(self) -> Resolution {
        match self {
            ModelId::Rope => Resolution::Segments(200),
            ModelId::Membrane => Resolution::Grid { nx: 32, ny: 32 },
        }
    }

    pub fn default_box(self) -> ParameterBox {
        match self {
            ModelId::Rope => ParameterBox::interval(0.001, 0.01),
            ModelId::Membrane => ParameterBox::interval(0.45, 0.55),
        }
    }
}

/// Mesh resolution: segments in 1D, cells per direction in 2D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Resolution {
    Segments(usize),
    Grid { nx: usize, ny: usize },
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolution::Segments(n) => write!(f, "{n}"),
            Resolution::Grid { nx, ny } => write!(f, "{nx}x{ny}"),
        }
    }
}

impl FromStr for Resolution {
    type Err = Error;

    /// Parses `"200"` or `"32x32"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidSpec(format!("cannot parse resolution {s:?}"));
        let s = s.trim();
        match s.split_once(['x', 'X']) {
            Some((a, b)) => Ok(Resolution::Grid {
                nx: a.trim().parse().map_err(|_| bad())?,
                ny: b.trim().parse().map_err(|_| bad())?,
            }),
            None => Ok(Resolution::Segments(s.parse().map_err(|_| bad())?)),
        }
    }
}

/// Axis-aligned parameter domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParameterBox {
    pub fn interval(lower: f64, upper: f64) -> Self {
        Self {
            lower: vec![lower],
            upper: vec![upper],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Membership with a relative slack of `1e-12` times the box width, so that
    /// endpoints produced by floating point arithmetic are accepted.
    pub fn contains(&self, mu: &[f64]) -> bool {
        mu.len() == self.dim()
            && mu.iter().zip(self.lower.iter().zip(&self.upper)).all(|(&m, (&lo, &hi))| {
                let slack = 1e-12 * (hi - lo).abs().max(lo.abs().max(hi.abs()) * 1e-3);
                m.is_finite() && m >= lo - slack && m <= hi + slack
            })
    }

    pub fn check(&self, mu: &[f64]) -> Result<()> {
        if self.contains(mu) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                mu: mu.to_vec(),
                lower: self.lower.clone(),
                upper: self.upper.clone(),
            })
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lower.is_empty()
            || self.lower.len() != self.upper.len()
            || self.lower.iter().zip(&self.upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite())
        {
            return Err(Error::InvalidSpec(format!("malformed parameter box {self:?}")));
        }
        Ok(())
    }
}

/// Model choice, mesh resolution and an optional parameter box override.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub model: ModelId,
    pub resolution: Resolution,
    pub parameter_box: Option<ParameterBox>,
}

impl ModelSpec {
    pub fn new(model: ModelId, resolution: Resolution) -> Self {
        Self {
            model,
            resolution,
            parameter_box: None,
        }
    }

    /// Model 1 with `n_elems` segments.
    pub fn rope(n_elems: usize) -> Self {
        Self::new(ModelId::Rope, Resolution::Segments(n_elems))
    }

    /// Model 2 with `nx * ny` cells.
    pub fn membrane(nx: usize, ny: usize) -> Self {
        Self::new(ModelId::Membrane, Resolution::Grid { nx, ny })
    }

    pub fn default_for(model: ModelId) -> Self {
        Self::new(model, model.default_resolution())
    }

    pub fn parameter_box(&self) -> ParameterBox {
        self.parameter_box.clone().unwrap_or_else(|| self.model.default_box())
    }

    pub fn validate(&self) -> Result<()> {
        match (self.model, self.resolution) {
            (ModelId::Rope, Resolution::Segments(n)) if n >= 2 => {}
            (ModelId::Membrane, Resolution::Grid { nx, ny }) if nx >= 2 && ny >= 2 => {}
            (ModelId::Rope, Resolution::Segments(n)) => {
                return Err(Error::InvalidSpec(format!("need at least 2 elements, got {n}")))
            }
            (ModelId::Membrane, Resolution::Grid { nx, ny }) => {
                return Err(Error::InvalidSpec(format!("need at least 2 cells per direction, got {nx}x{ny}")))
            }
            (m, r) => {
                return Err(Error::InvalidSpec(format!(
                    "resolution {r} does not match model {}",
                    m.number()
                )))
            }
        }
        if let Some(b) = &self.parameter_box {
            b.validate()?;
        }
        Ok(())
    }
}

pub type ThetaFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Coefficient functions of the affine expansions of `A`, `f` and `g`.
#[derive(Clone)]
pub struct ThetaFunctions {
    pub a: Vec<ThetaFn>,
    pub f: Vec<ThetaFn>,
    pub g: Vec<ThetaFn>,
}

impl fmt::Debug for ThetaFunctions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ThetaFunctions")
            .field("q_a", &self.a.len())
            .field("q_f", &self.f.len())
            .field("q_g", &self.g.len())
            .finish()
    }
}

impl ThetaFunctions {
    /// `theta_a = mu`, `theta_f = theta_g = 1`.
    pub fn linear_diffusion() -> Self {
        Self {
            a: vec![Arc::new(|mu: &[f64]| mu[0])],
            f: vec![Arc::new(|_: &[f64]| 1.0)],
            g: vec![Arc::new(|_: &[f64]| 1.0)],
        }
    }
}

/// Coefficient values at one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaValues {
    pub a: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

/// The constraint matrix `B`. Diagonal storage covers both models; dense
/// storage serves general invertible `B`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintOperator {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

impl ConstraintOperator {
    pub fn nrows(&self) -> usize {
        match self {
            ConstraintOperator::Diagonal(d) => d.len(),
            ConstraintOperator::Dense(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            ConstraintOperator::Diagonal(d) => d.len(),
            ConstraintOperator::Dense(m) => m.ncols(),
        }
    }

    /// `B v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            ConstraintOperator::Diagonal(d) => d.component_mul(v),
            ConstraintOperator::Dense(m) => m * v,
        }
    }

    /// `B^T q`.
    pub fn apply_transpose(&self, q: &DVector<f64>) -> DVector<f64> {
        match self {
            ConstraintOperator::Diagonal(d) => d.component_mul(q),
            ConstraintOperator::Dense(m) => m.tr_mul(q),
        }
    }

    /// `B X` for a block of columns.
    pub fn apply_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            ConstraintOperator::Diagonal(d) => DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| d[i] * x[(i, j)]),
            ConstraintOperator::Dense(m) => m * x,
        }
    }

    /// `B^T X` for a block of columns.
    pub fn apply_transpose_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            ConstraintOperator::Diagonal(_) => self.apply_matrix(x),
            ConstraintOperator::Dense(m) => m.tr_mul(x),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            ConstraintOperator::Diagonal(d) => DMatrix::from_diagonal(d),
            ConstraintOperator::Dense(m) => m.clone(),
        }
    }
}

/// Parameter-independent pieces of an affine truth model.
#[derive(Debug, Clone)]
pub struct AffineParts {
    pub a_components: Vec<CsrMatrix>,
    pub f_components: Vec<DVector<f64>>,
    pub g_components: Vec<DVector<f64>>,
    pub b: ConstraintOperator,
    pub x_v: CsrMatrix,
    pub theta: ThetaFunctions,
    pub parameter_box: ParameterBox,
}

/// Truth model `A(mu) = sum theta_a^q(mu) A^q` (and likewise `f`, `g`) with a
/// parameter-independent constraint matrix `B` and inner product matrix X_V.
/// Immutable once built and cheap to share across threads.
#[derive(Debug, Clone)]
pub struct AffineTruthModel {
    /// Present when the model was assembled from a [`ModelSpec`].
    pub spec: Option<ModelSpec>,
    pub mesh: Option<Mesh>,
    pub a_components: Vec<CsrMatrix>,
    pub f_components: Vec<DVector<f64>>,
    pub g_components: Vec<DVector<f64>>,
    pub b: ConstraintOperator,
    pub x_v: CsrMatrix,
    pub x_v_factor: SkylineCholesky,
    pub theta: ThetaFunctions,
    pub parameter_box: ParameterBox,
}

impl AffineTruthModel {
    /// Validates dimensions and factors X_V.
    pub fn from_parts(parts: AffineParts) -> Result<Self> {
        let n = parts.x_v.nrows();
        let dim = |context, expected, found| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    context,
                    expected,
                    found,
                })
            }
        };
        dim("X_V columns", n, parts.x_v.ncols())?;
        dim("theta_a count", parts.a_components.len(), parts.theta.a.len())?;
        dim("theta_f count", parts.f_components.len(), parts.theta.f.len())?;
        dim("theta_g count", parts.g_components.len(), parts.theta.g.len())?;
        if parts.a_components.is_empty() {
            return Err(Error::InvalidSpec("no stiffness components".into()));
        }
        for a in &parts.a_components {
            dim("A^q rows", n, a.nrows())?;
            dim("A^q columns", n, a.ncols())?;
        }
        for f in &parts.f_components {
            dim("f^q length", n, f.len())?;
        }
        dim("B columns", n, parts.b.ncols())?;
        dim("B rows (B must be square)", n, parts.b.nrows())?;
        for g in &parts.g_components {
            dim("g^q length", parts.b.nrows(), g.len())?;
        }
        parts.parameter_box.validate()?;
        let x_v_factor = SkylineCholesky::factor(&parts.x_v)?;
        Ok(Self {
            spec: None,
            mesh: None,
            a_components: parts.a_components,
            f_components: parts.f_components,
            g_components: parts.g_components,
            b: parts.b,
            x_v: parts.x_v,
            x_v_factor,
            theta: parts.theta,
            parameter_box: parts.parameter_box,
        })
    }

    /// Dimension of the primal space.
    pub fn n_v(&self) -> usize {
        self.x_v.nrows()
    }

    /// Dimension of the multiplier space.
    pub fn n_q(&self) -> usize {
        self.b.nrows()
    }

    pub fn q_a(&self) -> usize {
        self.a_components.len()
    }

    pub fn q_f(&self) -> usize {
        self.f_components.len()
    }

    pub fn q_g(&self) -> usize {
        self.g_components.len()
    }

    /// `||v||_V = sqrt(v^T X_V v)`.
    pub fn v_norm(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.x_v.mul_vec(v)).max(0.0).sqrt()
    }

    /// Dual norm `sqrt(r^T X_V^{-1} r)` of a functional given by its nodal vector.
    pub fn dual_norm(&self, r: &DVector<f64>) -> f64 {
        r.dot(&self.x_v_factor.solve(r)).max(0.0).sqrt()
    }
}

/// Evaluates every coefficient function at `mu`, rejecting parameters outside D.
pub fn evaluate_theta(model: &AffineTruthModel, mu: &[f64]) -> Result<ThetaValues> {
    model.parameter_box.check(mu)?;
    Ok(ThetaValues {
        a: model.theta.a.iter().map(|t| t(mu)).collect(),
        f: model.theta.f.iter().map(|t| t(mu)).collect(),
        g: model.theta.g.iter().map(|t| t(mu)).collect(),
    })
}

pub(crate) fn combine(coeffs: &[f64], vectors: &[DVector<f64>]) -> DVector<f64> {
    let mut out = DVector::zeros(vectors[0].len());
    for (c, v) in coeffs.iter().zip(vectors) {
        out.axpy(*c, v, 1.0);
    }
    out
}

/// `(A(mu), f(mu), g(mu))` by affine summation.
pub fn assemble_at(model: &AffineTruthModel, mu: &[f64]) -> Result<(CsrMatrix, DVector<f64>, DVector<f64>)> {
    let th = evaluate_theta(model, mu)?;
    let terms: Vec<(f64, &CsrMatrix)> = th.a.iter().copied().zip(&model.a_components).collect();
    let a = CsrMatrix::linear_combination(&terms);
    let f = if model.f_components.is_empty() {
        DVector::zeros(model.n_v())
    } else {
        combine(&th.f, &model.f_components)
    };
    let g = if model.g_components.is_empty() {
        DVector::zeros(model.n_q())
    } else {
        combine(&th.g, &model.g_components)
    };
    Ok((a, f, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_round_trips_through_text() {
        for r in [Resolution::Segments(200), Resolution::Grid { nx: 32, ny: 16 }] {
            assert_eq!(r.to_string().parse::<Resolution>().unwrap(), r);
        }
        assert!("32y32".parse::<Resolution>().is_err());
    }

    #[test]
    fn box_accepts_endpoints_and_rejects_outside() {
        let b = ModelId::Rope.default_box();
        assert!(b.contains(&[0.001]) && b.contains(&[0.01]));
        assert!(b.contains(&[0.01 * (1.0 + 1e-15)]));
        assert!(!b.contains(&[0.02]) && !b.contains(&[f64::NAN]) && !b.contains(&[0.005, 0.005]));
    }

    #[test]
    fn mismatched_resolution_is_invalid() {
        let spec = ModelSpec::new(ModelId::Rope, Resolution::Grid { nx: 4, ny: 4 });
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
    }
}

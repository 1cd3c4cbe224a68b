//! Born probabilities and Lüders conditioning on pure and mixed states.
//!
//! Conditionals are sequential: `p(X|Y) = ||X Y psi||^2 / ||Y psi||^2`, i.e.
//! measure `Y`, collapse, then measure `X`. For density operators the same
//! rule reads `Tr(X Y rho Y) / Tr(Y rho)`.

use thiserror::Error;

use crate::linalg::{
    ComplexMatrix, ComplexScalar, ComplexVector, LinalgError, NORM_TOL, STRUCTURAL_TOL,
};
use num_complex::Complex64;

/// A conditioning projector must leave at least this much norm on the state.
pub const MIN_CONDITION_NORM: f64 = 1e-12;
/// Branches lighter than this are dropped from the total-probability sum.
pub const MIN_BRANCH_WEIGHT: f64 = 1e-12;
/// Raw probabilities further than this outside `[0, 1]` are logic errors.
pub const RANGE_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantumError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("operator {0:?} is not an orthogonal projector")]
    NotProjector(String),
    #[error("not a density operator: {0}")]
    NotDensity(&'static str),
    #[error("undefined conditional: condition {label:?} has probability {probability:e}")]
    UndefinedConditional { label: String, probability: f64 },
    #[error("probability {0} outside [0, 1] beyond rounding")]
    OutOfRange(f64),
}

pub type Result<T> = std::result::Result<T, QuantumError>;

/// Clamps rounding noise into `[0, 1]`, rejecting anything larger.
pub fn checked_probability(value: f64) -> Result<f64> {
    if !(-RANGE_GUARD..=1.0 + RANGE_GUARD).contains(&value) {
        return Err(QuantumError::OutOfRange(value));
    }
    Ok(value.clamp(0.0, 1.0))
}

/// Unit vector `|psi>`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    vector: ComplexVector,
}

impl PureState {
    pub fn new(vector: ComplexVector) -> Result<Self> {
        let n2 = vector.norm2();
        if (n2 - 1.0).abs() > NORM_TOL {
            return Err(QuantumError::NotNormalized(n2));
        }
        Ok(Self { vector })
    }

    /// Rescales any nonzero vector to unit norm.
    pub fn normalized(vector: ComplexVector) -> Result<Self> {
        let n2 = vector.norm2();
        if n2.sqrt() <= MIN_CONDITION_NORM {
            return Err(QuantumError::ZeroVector);
        }
        Ok(Self {
            vector: vector.scale(Complex64::new(1.0 / n2.sqrt(), 0.0)),
        })
    }

    pub fn vector(&self) -> &ComplexVector {
        &self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.dim()
    }

    pub fn kron(&self, other: &Self) -> Result<Self> {
        Self::new(self.vector.kron(&other.vector))
    }

    /// Multiplies every amplitude by `e^{i phase}`; no observable changes.
    pub fn with_global_phase(&self, phase: f64) -> Self {
        Self {
            vector: self.vector.scale(Complex64::from_polar(1.0, phase)),
        }
    }
}

/// Mixed state `rho`: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
}

impl DensityOperator {
    /// Validates Hermiticity, trace and positivity. Positivity is probed on
    /// the basis vectors and every pair `e_i + z e_j` with `z` in `{1, -1, i, -i}`.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(QuantumError::NotDensity("not square"));
        }
        if matrix.max_abs_diff(&matrix.adjoint())? > STRUCTURAL_TOL {
            return Err(QuantumError::NotDensity("not Hermitian"));
        }
        let tr = matrix.trace()?;
        if (tr.re - 1.0).abs() > STRUCTURAL_TOL || tr.im.abs() > STRUCTURAL_TOL {
            return Err(QuantumError::NotDensity("trace is not 1"));
        }
        let n = matrix.rows();
        let phases = [
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
        ];
        for i in 0..n {
            if matrix.get(i, i).re < -STRUCTURAL_TOL {
                return Err(QuantumError::NotDensity("negative diagonal"));
            }
            for j in (i + 1)..n {
                for z in phases {
                    // <v|rho|v> for v = e_i + z e_j
                    let val = matrix.get(i, i)
                        + matrix.get(j, j) * z.norm_sqr()
                        + matrix.get(i, j) * z
                        + matrix.get(j, i) * z.conj();
                    if val.re < -STRUCTURAL_TOL {
                        return Err(QuantumError::NotDensity("not positive semidefinite"));
                    }
                }
            }
        }
        Ok(Self { matrix })
    }

    pub fn from_pure(state: &PureState) -> Result<Self> {
        Self::new(ComplexMatrix::outer(state.vector(), state.vector())?)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }
}

/// A yes/no question: an orthogonal projector with a display label.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorObservable {
    matrix: ComplexMatrix,
    label: String,
}

impl ProjectorObservable {
    pub fn new(label: impl Into<String>, matrix: ComplexMatrix) -> Result<Self> {
        let label = label.into();
        if !matrix.is_projector(STRUCTURAL_TOL) {
            return Err(QuantumError::NotProjector(label));
        }
        Ok(Self { matrix, label })
    }

    pub fn zero(label: impl Into<String>, dim: usize) -> Result<Self> {
        Self::new(label, ComplexMatrix::zeros(dim, dim)?)
    }

    pub fn identity(label: impl Into<String>, dim: usize) -> Result<Self> {
        Self::new(label, ComplexMatrix::identity(dim)?)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// `I - P`, labelled `not <label>`.
    pub fn complement(&self) -> Result<Self> {
        Ok(Self {
            matrix: self.matrix.complement()?,
            label: format!("not {}", self.label),
        })
    }

    /// Product `self * other`; only a projector when the two commute.
    pub fn product(&self, other: &Self) -> Result<Self> {
        Self::new(
            format!("{}{}", self.label, other.label),
            self.matrix.compose(&other.matrix)?,
        )
    }

    pub fn kron(&self, other: &Self) -> Result<Self> {
        Self::new(
            format!("{}(x){}", self.label, other.label),
            self.matrix.kron(&other.matrix),
        )
    }

    pub fn commutator_norm(&self, other: &Self) -> Result<f64> {
        Ok(self.matrix.commutator_norm(&other.matrix)?)
    }

    fn project(&self, state: &ComplexVector) -> Result<ComplexVector> {
        Ok(self.matrix.apply(state)?)
    }
}

/// `||P psi||^2`.
pub fn born_probability(p: &ProjectorObservable, s: &PureState) -> Result<f64> {
    checked_probability(p.project(s.vector())?.norm2())
}

/// `Re Tr(P rho)`.
pub fn born_probability_density(p: &ProjectorObservable, rho: &DensityOperator) -> Result<f64> {
    let tr = p.matrix().compose(rho.matrix())?.trace()?;
    checked_probability(tr.re)
}

fn condition_vector(y: &ProjectorObservable, s: &PureState) -> Result<ComplexVector> {
    let projected = y.project(s.vector())?;
    let n2 = projected.norm2();
    if n2.sqrt() <= MIN_CONDITION_NORM {
        return Err(QuantumError::UndefinedConditional {
            label: y.label().to_string(),
            probability: n2,
        });
    }
    Ok(projected)
}

/// Post-measurement state `P psi / ||P psi||`.
pub fn luders_condition(p: &ProjectorObservable, s: &PureState) -> Result<PureState> {
    PureState::normalized(condition_vector(p, s)?)
}

/// `p(x | y) = ||x y psi||^2 / ||y psi||^2`.
pub fn conditional_probability(
    x: &ProjectorObservable,
    y: &ProjectorObservable,
    s: &PureState,
) -> Result<f64> {
    let after_y = condition_vector(y, s)?;
    let after_xy = x.project(&after_y)?;
    checked_probability(after_xy.norm2() / after_y.norm2())
}

/// `Tr(x y rho y) / Tr(y rho)`.
pub fn conditional_probability_density(
    x: &ProjectorObservable,
    y: &ProjectorObservable,
    rho: &DensityOperator,
) -> Result<f64> {
    let y_rho = y.matrix().compose(rho.matrix())?;
    let weight = y_rho.trace()?.re;
    if weight.max(0.0).sqrt() <= MIN_CONDITION_NORM {
        return Err(QuantumError::UndefinedConditional {
            label: y.label().to_string(),
            probability: weight,
        });
    }
    let collapsed = y_rho.compose(y.matrix())?;
    let numerator = x.matrix().compose(&collapsed)?.trace()?.re;
    checked_probability(numerator / weight)
}

/// `p(x | not y)`.
pub fn conditional_on_complement(
    x: &ProjectorObservable,
    y: &ProjectorObservable,
    s: &PureState,
) -> Result<f64> {
    conditional_probability(x, &y.complement()?, s)
}

/// `p(x) - [p(x|y) p(y) + p(x|not y) p(not y)]`; zero-weight branches add 0.
pub fn ltp_interference(
    x: &ProjectorObservable,
    y: &ProjectorObservable,
    s: &PureState,
) -> Result<f64> {
    let p_x = born_probability(x, s)?;
    let y_not = y.complement()?;
    let mut mixture = 0.0;
    for branch in [y, &y_not] {
        let weight = born_probability(branch, s)?;
        if weight >= MIN_BRANCH_WEIGHT {
            mixture += conditional_probability(x, branch, s)? * weight;
        }
    }
    Ok(p_x - mixture)
}

/// Side-by-side values for `p(xy | not d)`: the sequential rule versus the
/// trace-ratio shortcut `(Tr(xy) - Tr(xy d rho)) / (1 - Tr(d rho))`, plus the
/// coefficient `Tr(xy) / Tr(xy rho)` that appears when rearranging the latter.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ComplementDiagnostics {
    pub luders: Option<f64>,
    pub trace_formula: Option<f64>,
    pub trace_coefficient: Option<f64>,
}

pub fn complement_diagnostics(
    joint: &ProjectorObservable,
    d: &ProjectorObservable,
    s: &PureState,
) -> Result<ComplementDiagnostics> {
    let rho = ComplexMatrix::outer(s.vector(), s.vector())?;
    let tr = |m: &ComplexMatrix| -> Result<ComplexScalar> { Ok(m.trace()?) };
    let tr_joint = tr(joint.matrix())?.re;
    let x = tr(&joint.matrix().compose(d.matrix())?.compose(&rho)?)?.re;
    let y = tr(&d.matrix().compose(&rho)?)?.re;
    let tr_joint_rho = tr(&joint.matrix().compose(&rho)?)?.re;
    let luders = match conditional_on_complement(joint, d, s) {
        Ok(v) => Some(v),
        Err(QuantumError::UndefinedConditional { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(ComplementDiagnostics {
        luders,
        trace_formula: (1.0 - y > MIN_BRANCH_WEIGHT).then(|| (tr_joint - x) / (1.0 - y)),
        trace_coefficient: (tr_joint_rho > MIN_BRANCH_WEIGHT).then(|| tr_joint / tr_joint_rho),
    })
}

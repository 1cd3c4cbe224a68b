//! Concrete two-cause (6-dim) and three-cause (12-dim) models, the 2-dim
//! witness, probability reports and r-sweeps.
//!
//! All angles and phases in parameter records are stored in units of pi, the
//! same convention the JSON configs use; they are multiplied by pi exactly
//! once, when a model is built.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{ComplexMatrix, ComplexVector, LinalgError, I};
use crate::quantum::{
    born_probability, conditional_on_complement, conditional_probability, ltp_interference,
    ProjectorObservable, PureState, QuantumError,
};

/// Tolerance on the normalization radicand before it counts as a deficit.
const RADICAND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("independence quadratic has negative discriminant {0:e}")]
    NegativeDiscriminant(f64),
    #[error("no admissible independence root for a3={a3}, a4={a4}, a5={a5}")]
    NoAdmissibleRoot { a3: f64, a4: f64, a5: f64 },
    #[error("requested {0:?} independence root is not admissible")]
    RootUnavailable(RootChoice),
    #[error("state normalization deficit: 1 - a1 - a3 - a4 - a5 = {0:e}")]
    NormalizationDeficit(f64),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootChoice {
    Small,
    #[default]
    Large,
}

/// Admissible roots of `a1^2 + a1 (a3 + a4 + a5 - 1) + a3 (a4 + a5) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndependenceRoots {
    pub small: Option<f64>,
    pub large: Option<f64>,
}

impl IndependenceRoots {
    pub fn get(&self, choice: RootChoice) -> Option<f64> {
        match choice {
            RootChoice::Small => self.small,
            RootChoice::Large => self.large,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (RootChoice, f64)> {
        [
            self.small.map(|v| (RootChoice::Small, v)),
            self.large.map(|v| (RootChoice::Large, v)),
        ]
        .into_iter()
        .flatten()
    }
}

/// `a1` making `A` and `B` independent for the given remaining weights.
///
/// Roots are kept when they lie in `(0, 1)` and do not exceed `1 - a3 - a4 - a5`.
pub fn solve_independence_a1(a3: f64, a4: f64, a5: f64) -> Result<IndependenceRoots> {
    let s = a3 + a4 + a5;
    if [a3, a4, a5].iter().any(|&x| !(x.is_finite() && x >= 0.0)) || s >= 1.0 {
        return Err(ModelError::InvalidParams(format!(
            "need a3, a4, a5 >= 0 with sum < 1, got ({a3}, {a4}, {a5})"
        )));
    }
    let b = 1.0 - s;
    let c = a3 * (a4 + a5);
    let disc = b * b - 4.0 * c;
    if disc < 0.0 {
        return Err(ModelError::NegativeDiscriminant(disc));
    }
    let large = (b + disc.sqrt()) / 2.0;
    // product of roots is c; avoids cancellation in b - sqrt(disc)
    let small = if large > 0.0 { c / large } else { 0.0 };
    let admissible = |x: f64| (x > 0.0 && x < 1.0 && x <= b).then_some(x);
    let roots = IndependenceRoots {
        small: admissible(small),
        large: admissible(large),
    };
    if roots.small.is_none() && roots.large.is_none() {
        return Err(ModelError::NoAdmissibleRoot { a3, a4, a5 });
    }
    Ok(roots)
}

/// Directions and phases of the three rank-1 blocks of a generalized `D6`,
/// plus an extra phase on the fourth state amplitude. The block-3 direction
/// is `alpha1` itself. Defaults reproduce the fixed operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneralizedBlockParams {
    pub beta1: f64,
    pub gamma1: f64,
    pub beta2: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub delta: f64,
}

impl Default for GeneralizedBlockParams {
    fn default() -> Self {
        Self {
            beta1: 0.25,
            gamma1: 1.5,
            beta2: 0.25,
            gamma2: 0.5,
            gamma3: 0.0,
            delta: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoCauseParams {
    pub r: f64,
    /// Phase of the second amplitude, units of pi.
    pub theta: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
    /// Direction of the third block of `D6`, units of pi.
    pub alpha1: f64,
    #[serde(default)]
    pub root_choice: RootChoice,
    /// Explicit `a1`; when absent it is solved from the independence condition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<GeneralizedBlockParams>,
}

impl TwoCauseParams {
    /// Two-cause reference point: a3 = a4 = 0.15, a5 = 0.1, alpha1 = 1.25, theta = 0.427, r = 0.5.
    pub fn reference() -> Self {
        Self {
            r: 0.5,
            theta: 0.427,
            a3: 0.15,
            a4: 0.15,
            a5: 0.1,
            alpha1: 1.25,
            root_choice: RootChoice::Large,
            a1: None,
            blocks: None,
        }
    }

    pub fn resolve_a1(&self) -> Result<f64> {
        match self.a1 {
            Some(a1) => Ok(a1),
            None => solve_independence_a1(self.a3, self.a4, self.a5)?
                .get(self.root_choice)
                .ok_or(ModelError::RootUnavailable(self.root_choice)),
        }
    }

    fn validate(&self, a1: f64) -> Result<()> {
        let named = [
            ("r", self.r),
            ("theta", self.theta),
            ("a3", self.a3),
            ("a4", self.a4),
            ("a5", self.a5),
            ("alpha1", self.alpha1),
            ("a1", a1),
        ];
        if let Some((name, _)) = named.iter().find(|(_, v)| !v.is_finite()) {
            return Err(ModelError::InvalidParams(format!("{name} is not finite")));
        }
        if !(0.0..=1.0).contains(&self.r) {
            return Err(ModelError::InvalidParams(format!(
                "r = {} outside [0, 1]",
                self.r
            )));
        }
        if self.a3 < 0.0 || self.a4 < 0.0 || self.a5 < 0.0 {
            return Err(ModelError::InvalidParams(
                "negative amplitude weight".into(),
            ));
        }
        if !(a1 > 0.0 && a1 < 1.0) {
            return Err(ModelError::InvalidParams(format!(
                "a1 = {a1} outside (0, 1)"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreeCauseParams {
    pub six_dim: TwoCauseParams,
    pub r2: f64,
    /// Phase of the second amplitude of the 2-dim factor, units of pi.
    pub theta2: f64,
    /// Direction of `D2`, units of pi.
    pub alpha2: f64,
}

impl ThreeCauseParams {
    /// Fixed survey-model values with `theta = 1.5` and `a4 = a3`, at
    /// `r = 0.01`. Use [`ThreeCauseParams::with_r`] for `r = 0.5`.
    pub fn survey_point() -> Self {
        Self {
            six_dim: TwoCauseParams {
                r: 0.01,
                theta: 1.5,
                a3: 0.15,
                a4: 0.15,
                a5: 0.08,
                alpha1: 0.75,
                root_choice: RootChoice::Large,
                a1: None,
                blocks: None,
            },
            r2: 0.5,
            theta2: 0.48,
            alpha2: 1.268,
        }
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.six_dim.r = r;
        self
    }
}

/// Which parameter record produced a [`ModelInstance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    TwoCause(TwoCauseParams),
    ThreeCause(ThreeCauseParams),
}

impl ModelSpec {
    pub fn build(&self) -> Result<ModelInstance> {
        match self {
            ModelSpec::TwoCause(p) => build_two_cause(p),
            ModelSpec::ThreeCause(p) => build_three_cause(p),
        }
    }

    pub fn six_dim(&self) -> &TwoCauseParams {
        match self {
            ModelSpec::TwoCause(p) => p,
            ModelSpec::ThreeCause(p) => &p.six_dim,
        }
    }

    pub fn six_dim_mut(&mut self) -> &mut TwoCauseParams {
        match self {
            ModelSpec::TwoCause(p) => p,
            ModelSpec::ThreeCause(p) => &mut p.six_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    TwoCause { params: TwoCauseParams, a1: f64 },
    ThreeCause { params: ThreeCauseParams, a1: f64 },
    ToyWitness { c2: f64, w: f64 },
}

/// A built model: commuting condition projectors (A, B[, C]), the target
/// projector D and the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInstance {
    conditions: Vec<ProjectorObservable>,
    d: ProjectorObservable,
    state: PureState,
    source: ModelSource,
}

impl ModelInstance {
    pub fn new(
        conditions: Vec<ProjectorObservable>,
        d: ProjectorObservable,
        state: PureState,
        source: ModelSource,
    ) -> Result<Self> {
        let dim = state.dim();
        if conditions.is_empty() || conditions.len() > 3 {
            return Err(ModelError::InvalidParams(
                "need one to three condition projectors".into(),
            ));
        }
        for p in conditions.iter().chain(std::iter::once(&d)) {
            if p.dim() != dim {
                return Err(LinalgError::DimensionMismatch {
                    op: "model",
                    left: (p.dim(), p.dim()),
                    right: (dim, 1),
                }
                .into());
            }
        }
        for (i, p) in conditions.iter().enumerate() {
            for q in &conditions[i + 1..] {
                if p.commutator_norm(q)? > crate::linalg::STRUCTURAL_TOL {
                    return Err(ModelError::InvalidParams(format!(
                        "conditions {} and {} do not commute",
                        p.label(),
                        q.label()
                    )));
                }
            }
        }
        Ok(Self {
            conditions,
            d,
            state,
            source,
        })
    }

    pub fn dim(&self) -> usize {
        self.state.dim()
    }

    pub fn conditions(&self) -> &[ProjectorObservable] {
        &self.conditions
    }

    pub fn a(&self) -> &ProjectorObservable {
        &self.conditions[0]
    }

    pub fn b(&self) -> Option<&ProjectorObservable> {
        self.conditions.get(1)
    }

    pub fn c(&self) -> Option<&ProjectorObservable> {
        self.conditions.get(2)
    }

    pub fn d(&self) -> &ProjectorObservable {
        &self.d
    }

    pub fn state(&self) -> &PureState {
        &self.state
    }

    pub fn source(&self) -> &ModelSource {
        &self.source
    }

    /// Product of all condition projectors (AB or ABC).
    pub fn joint(&self) -> Result<ProjectorObservable> {
        let mut joint = self.conditions[0].clone();
        for p in &self.conditions[1..] {
            joint = joint.product(p)?;
        }
        Ok(joint)
    }

    /// Same model with the state multiplied by a global phase.
    pub fn with_global_phase(&self, phase: f64) -> Self {
        Self {
            state: self.state.with_global_phase(phase),
            ..self.clone()
        }
    }
}

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn polar_pi(angle_pi: f64) -> Complex64 {
    Complex64::from_polar(1.0, angle_pi * PI)
}

fn identity(dim: usize) -> Result<ComplexMatrix> {
    Ok(ComplexMatrix::identity(dim)?)
}

/// Real rank-1 projector onto `(cos(angle), sin(angle))`, angle in units of pi.
pub fn real_ray_projector(angle_pi: f64) -> Result<ComplexMatrix> {
    let (s, c) = (angle_pi * PI).sin_cos();
    Ok(ComplexMatrix::new(
        2,
        2,
        vec![real(c * c), real(c * s), real(c * s), real(s * s)],
    )?)
}

/// Rank-1 projector onto `(cos(beta), e^{i gamma} sin(beta))`, both in units of pi.
pub fn phased_ray_projector(beta_pi: f64, gamma_pi: f64) -> Result<ComplexMatrix> {
    let (s, c) = (beta_pi * PI).sin_cos();
    let u = ComplexVector::new(vec![real(c), polar_pi(gamma_pi) * s])?;
    Ok(ComplexMatrix::outer(&u, &u)?)
}

/// The 6-dim target operator: two fixed complex blocks and a real block at `alpha1`.
pub fn d6(alpha1_pi: f64) -> Result<ComplexMatrix> {
    let half = real(0.5);
    let ih = I * 0.5;
    let b1 = ComplexMatrix::new(2, 2, vec![half, ih, -ih, half])?;
    let b2 = ComplexMatrix::new(2, 2, vec![half, -ih, ih, half])?;
    Ok(ComplexMatrix::block_diag(&[
        b1,
        b2,
        real_ray_projector(alpha1_pi)?,
    ])?)
}

/// Block-diagonal `D6` with free block directions and phases.
pub fn d6_generalized(alpha1_pi: f64, g: &GeneralizedBlockParams) -> Result<ComplexMatrix> {
    Ok(ComplexMatrix::block_diag(&[
        phased_ray_projector(g.beta1, g.gamma1)?,
        phased_ray_projector(g.beta2, g.gamma2)?,
        phased_ray_projector(alpha1_pi, g.gamma3)?,
    ])?)
}

fn six_dim_state(p: &TwoCauseParams, a1: f64) -> Result<ComplexVector> {
    p.validate(a1)?;
    let rest = 1.0 - a1 - p.a3 - p.a4 - p.a5;
    if rest < -RADICAND_SLACK {
        return Err(ModelError::NormalizationDeficit(rest));
    }
    let delta = p.blocks.map_or(0.0, |b| b.delta);
    Ok(ComplexVector::new(vec![
        real((a1 * p.r).sqrt()),
        polar_pi(p.theta) * (a1 * (1.0 - p.r)).sqrt(),
        real(p.a3.sqrt()),
        -I * polar_pi(delta) * p.a4.sqrt(),
        real(-p.a5.sqrt()),
        real(rest.max(0.0).sqrt()),
    ])?)
}

fn six_dim_target(p: &TwoCauseParams) -> Result<ComplexMatrix> {
    match &p.blocks {
        None => d6(p.alpha1),
        Some(g) => d6_generalized(p.alpha1, g),
    }
}

fn a2() -> Result<ComplexMatrix> {
    Ok(ComplexMatrix::diag_real(&[1.0, 0.0])?)
}

fn b3() -> Result<ComplexMatrix> {
    Ok(ComplexMatrix::diag_real(&[1.0, 1.0, 0.0])?)
}

pub fn build_two_cause(params: &TwoCauseParams) -> Result<ModelInstance> {
    let a1 = params.resolve_a1()?;
    let psi = PureState::new(six_dim_state(params, a1)?)?;
    let a = ProjectorObservable::new("A", a2()?.kron(&identity(3)?))?;
    let b = ProjectorObservable::new("B", identity(2)?.kron(&b3()?))?;
    let d = ProjectorObservable::new("D", six_dim_target(params)?)?;
    ModelInstance::new(
        vec![a, b],
        d,
        psi,
        ModelSource::TwoCause {
            params: params.clone(),
            a1,
        },
    )
}

/// The 2-dim factor of the three-cause state: `(sqrt(r2), e^{i theta2} sqrt(1 - r2))`.
pub fn two_dim_state(r2: f64, theta2_pi: f64) -> Result<PureState> {
    if !(0.0..=1.0).contains(&r2) {
        return Err(ModelError::InvalidParams(format!(
            "r2 = {r2} outside [0, 1]"
        )));
    }
    Ok(PureState::new(ComplexVector::new(vec![
        real(r2.sqrt()),
        polar_pi(theta2_pi) * (1.0 - r2).sqrt(),
    ])?)?)
}

pub fn build_three_cause(params: &ThreeCauseParams) -> Result<ModelInstance> {
    let six = &params.six_dim;
    let a1 = six.resolve_a1()?;
    if !(params.theta2.is_finite() && params.alpha2.is_finite()) {
        return Err(ModelError::InvalidParams("non-finite angle".into()));
    }
    let psi6 = six_dim_state(six, a1)?;
    let psi2 = two_dim_state(params.r2, params.theta2)?;
    let psi = PureState::new(psi6.kron(psi2.vector()))?;
    let (i2, i3) = (identity(2)?, identity(3)?);
    let a = ProjectorObservable::new("A", a2()?.kron(&i3).kron(&i2))?;
    let b = ProjectorObservable::new("B", i2.kron(&b3()?).kron(&i2))?;
    let c = ProjectorObservable::new("C", i2.kron(&i3).kron(&a2()?))?;
    let d = ProjectorObservable::new(
        "D",
        six_dim_target(six)?.kron(&real_ray_projector(params.alpha2)?),
    )?;
    ModelInstance::new(
        vec![a, b, c],
        d,
        psi,
        ModelSource::ThreeCause {
            params: params.clone(),
            a1,
        },
    )
}

/// 2-dim witness: `X = diag(1, 0)`, `D` projects onto `u = (cos a, sin a)` with
/// `cos^2 a = c2`, and `psi = sqrt(w) u + sqrt(1 - w) v` with `v` orthogonal to `u`.
pub fn build_toy_witness(c2: f64, w: f64) -> Result<ModelInstance> {
    if !(0.0..=1.0).contains(&c2) || !(0.0..=1.0).contains(&w) {
        return Err(ModelError::InvalidParams(format!(
            "witness needs c2, w in [0, 1], got ({c2}, {w})"
        )));
    }
    let (cos_a, sin_a) = (c2.sqrt(), (1.0 - c2).sqrt());
    let u = ComplexVector::from_real(&[cos_a, sin_a])?;
    let psi = ComplexVector::from_real(&[
        w.sqrt() * cos_a - (1.0 - w).sqrt() * sin_a,
        w.sqrt() * sin_a + (1.0 - w).sqrt() * cos_a,
    ])?;
    let x = ProjectorObservable::new("X", ComplexMatrix::diag_real(&[1.0, 0.0])?)?;
    let d = ProjectorObservable::new("D", ComplexMatrix::outer(&u, &u)?)?;
    ModelInstance::new(
        vec![x],
        d,
        PureState::normalized(psi)?,
        ModelSource::ToyWitness { c2, w },
    )
}

/// Named probabilities of a model. `None` marks a conditional whose
/// condition has (numerically) zero probability, or a condition the model
/// does not have.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityReport {
    pub p_d: f64,
    pub p_a: f64,
    pub p_b: Option<f64>,
    pub p_c: Option<f64>,
    pub p_joint: f64,
    pub p_d_given_a: Option<f64>,
    pub p_d_given_b: Option<f64>,
    pub p_d_given_c: Option<f64>,
    pub p_d_given_joint: Option<f64>,
    pub p_joint_given_d: Option<f64>,
    pub p_joint_given_not_d: Option<f64>,
    /// Interference term of `D` over the partition `{A, not A}`.
    pub interference_a: f64,
}

fn defined(r: crate::quantum::Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(QuantumError::UndefinedConditional { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn evaluate_report(m: &ModelInstance) -> Result<ProbabilityReport> {
    let s = m.state();
    let d = m.d();
    let joint = m.joint()?;
    let opt_born = |p: Option<&ProjectorObservable>| -> Result<Option<f64>> {
        p.map(|p| born_probability(p, s))
            .transpose()
            .map_err(Into::into)
    };
    let opt_cond = |p: Option<&ProjectorObservable>| -> Result<Option<f64>> {
        match p {
            Some(p) => defined(conditional_probability(d, p, s)),
            None => Ok(None),
        }
    };
    Ok(ProbabilityReport {
        p_d: born_probability(d, s)?,
        p_a: born_probability(m.a(), s)?,
        p_b: opt_born(m.b())?,
        p_c: opt_born(m.c())?,
        p_joint: born_probability(&joint, s)?,
        p_d_given_a: opt_cond(Some(m.a()))?,
        p_d_given_b: opt_cond(m.b())?,
        p_d_given_c: opt_cond(m.c())?,
        p_d_given_joint: defined(conditional_probability(d, &joint, s))?,
        p_joint_given_d: defined(conditional_probability(&joint, d, s))?,
        p_joint_given_not_d: defined(conditional_on_complement(&joint, d, s))?,
        interference_a: ltp_interference(d, m.a(), s)?,
    })
}

/// Causal orderings at the reference point: each single condition raises `p(d)`,
/// the joint condition raises it less than either, and the joint is more
/// likely given `d` than given not-`d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CausalOrderings {
    pub a_raises_d: bool,
    pub b_raises_d: bool,
    pub joint_between: bool,
    pub joint_more_likely_given_d: bool,
}

impl CausalOrderings {
    pub fn from_report(r: &ProbabilityReport) -> Self {
        let gt = |x: Option<f64>, y: f64| x.is_some_and(|x| x > y);
        let min_single = match (r.p_d_given_a, r.p_d_given_b) {
            (Some(a), Some(b)) => Some(a.min(b)),
            _ => None,
        };
        Self {
            a_raises_d: gt(r.p_d_given_a, r.p_d),
            b_raises_d: gt(r.p_d_given_b, r.p_d),
            joint_between: matches!(
                (r.p_d_given_joint, min_single),
                (Some(j), Some(m)) if r.p_d < j && j < m
            ),
            joint_more_likely_given_d: matches!(
                (r.p_joint_given_d, r.p_joint_given_not_d),
                (Some(x), Some(y)) if x > y
            ),
        }
    }

    pub fn all(&self) -> bool {
        self.a_raises_d && self.b_raises_d && self.joint_between && self.joint_more_likely_given_d
    }
}

/// Each single condition raises `p(d)` while the joint condition lowers it.
pub fn destructive_interference(r: &ProbabilityReport) -> bool {
    let singles = [r.p_d_given_a, r.p_d_given_b, r.p_d_given_c];
    let present: Vec<f64> = singles.into_iter().flatten().collect();
    !present.is_empty()
        && present.iter().all(|&x| x > r.p_d)
        && r.p_d_given_joint.is_some_and(|j| j < r.p_d)
}

/// Report for the 2-dim witness, with the lemma verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WitnessReport {
    pub c2: f64,
    pub w: f64,
    pub p_d: f64,
    pub p_d_given_x: Option<f64>,
    pub p_x_given_d: Option<f64>,
    pub p_x_given_not_d: Option<f64>,
    /// `p(d|x) < p(d)`.
    pub joint_lowers_d: Option<bool>,
    /// `p(x|d) < p(x|not d)`.
    pub joint_rarer_given_d: Option<bool>,
    /// The two inequalities disagree, which no classical space allows.
    pub classical_lemma_violated: bool,
}

pub fn witness_report(c2: f64, w: f64) -> Result<WitnessReport> {
    let m = build_toy_witness(c2, w)?;
    let r = evaluate_report(&m)?;
    let joint_lowers_d = r.p_d_given_joint.map(|p| p < r.p_d);
    let joint_rarer_given_d = match (r.p_joint_given_d, r.p_joint_given_not_d) {
        (Some(x), Some(y)) => Some(x < y),
        _ => None,
    };
    Ok(WitnessReport {
        c2,
        w,
        p_d: r.p_d,
        p_d_given_x: r.p_d_given_joint,
        p_x_given_d: r.p_joint_given_d,
        p_x_given_not_d: r.p_joint_given_not_d,
        joint_lowers_d,
        joint_rarer_given_d,
        classical_lemma_violated: matches!(
            (joint_lowers_d, joint_rarer_given_d),
            (Some(a), Some(b)) if a != b
        ),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub r: f64,
    /// `None` when the model could not be built at this `r`.
    pub report: Option<ProbabilityReport>,
}

/// Evaluates the model at every `r` in `grid`, in grid order.
///
/// `a1` is resolved once and held fixed unless `rederive_a1` is set, in which
/// case any explicit `a1` is dropped and the independence root is solved at
/// every point.
pub fn sweep_r(spec: &ModelSpec, grid: &[f64], rederive_a1: bool) -> Result<Vec<SweepRow>> {
    if let Some(bad) = grid.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(ModelError::InvalidParams(format!(
            "grid value {bad} outside [0, 1]"
        )));
    }
    let mut base = spec.clone();
    if rederive_a1 {
        base.six_dim_mut().a1 = None;
    } else if base.six_dim().a1.is_none() {
        if let Ok(a1) = base.six_dim().resolve_a1() {
            base.six_dim_mut().a1 = Some(a1);
        }
    }
    Ok(grid
        .par_iter()
        .map(|&r| {
            let mut point = base.clone();
            point.six_dim_mut().r = r;
            let report = point.build().and_then(|m| evaluate_report(&m)).ok();
            SweepRow { r, report }
        })
        .collect())
}

/// `n + 1` evenly spaced points from 0 to 1, computed as `k / n`.
pub fn uniform_grid(steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| k as f64 / steps as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{STRUCTURAL_TOL, ZERO};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn independence_roots_match_quadratic_formula() {
        let roots = solve_independence_a1(0.15, 0.15, 0.1).unwrap();
        assert!(close(roots.small.unwrap(), 0.070_871_215_252_208, 1e-12));
        assert!(close(roots.large.unwrap(), 0.529_128_784_747_792, 1e-12));
        let roots = solve_independence_a1(0.15, 0.15, 0.08).unwrap();
        assert!(close(roots.small.unwrap(), 0.061_806_527_080_183, 1e-12));
        assert!(close(roots.large.unwrap(), 0.558_193_472_919_817, 1e-12));
    }

    #[test]
    fn independence_degenerate_and_invalid() {
        assert!(matches!(
            solve_independence_a1(0.0, 0.0, 0.0),
            Err(ModelError::NoAdmissibleRoot { .. })
        ));
        assert!(solve_independence_a1(-0.1, 0.2, 0.2).is_err());
        assert!(solve_independence_a1(0.5, 0.3, 0.3).is_err());
        // discriminant (1 - s)^2 - 4 a3 (a4 + a5) < 0
        assert!(matches!(
            solve_independence_a1(0.4, 0.2, 0.2),
            Err(ModelError::NegativeDiscriminant(_))
        ));
    }

    #[test]
    fn roots_make_a_and_b_independent() {
        for (a3, a4, a5) in [(0.15, 0.15, 0.1), (0.15, 0.15, 0.08), (0.05, 0.2, 0.01)] {
            let roots = solve_independence_a1(a3, a4, a5).unwrap();
            for (choice, _) in roots.iter() {
                let p = TwoCauseParams {
                    a3,
                    a4,
                    a5,
                    root_choice: choice,
                    ..TwoCauseParams::reference()
                };
                let r = evaluate_report(&build_two_cause(&p).unwrap()).unwrap();
                assert!((r.p_joint - r.p_a * r.p_b.unwrap()).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn d6_is_rank_three_projector() {
        for alpha in [0.0, 0.3, 1.25, 1.7] {
            let d = d6(alpha).unwrap();
            assert!(d.is_projector(STRUCTURAL_TOL));
            let tr = d.trace().unwrap();
            assert!(close(tr.re, 3.0, 1e-14) && tr.im == 0.0);
        }
        let d = d6(1.25).unwrap();
        assert!(d.compose(&d).unwrap().max_abs_diff(&d).unwrap() <= 1e-15);
    }

    #[test]
    fn generalized_defaults_reproduce_fixed_operator() {
        for alpha in [0.25, 0.75, 1.25] {
            let fixed = d6(alpha).unwrap();
            let gen = d6_generalized(alpha, &GeneralizedBlockParams::default()).unwrap();
            assert!(fixed.max_abs_diff(&gen).unwrap() <= 1e-15);
        }
        let mut p = TwoCauseParams::reference();
        let plain = evaluate_report(&build_two_cause(&p).unwrap()).unwrap();
        p.blocks = Some(GeneralizedBlockParams::default());
        let gen = evaluate_report(&build_two_cause(&p).unwrap()).unwrap();
        assert!(close(plain.p_d, gen.p_d, 1e-14));
        assert!(close(
            plain.p_d_given_joint.unwrap(),
            gen.p_d_given_joint.unwrap(),
            1e-14
        ));
    }

    #[test]
    fn commutators_of_the_six_dim_model() {
        let m = build_two_cause(&TwoCauseParams::reference()).unwrap();
        let (a, b, d) = (m.a(), m.b().unwrap(), m.d());
        assert_eq!(a.commutator_norm(b).unwrap(), 0.0);
        assert!(a.commutator_norm(d).unwrap() > 0.4);
        // D6 is block diagonal over span{e1, e2} = range(AB)
        let ab = m.joint().unwrap();
        assert!(ab.commutator_norm(d).unwrap() <= 1e-15);
    }

    #[test]
    fn state_edge_cases() {
        let mut p = TwoCauseParams::reference();
        p.r = 0.0;
        let m = build_two_cause(&p).unwrap();
        assert_eq!(m.state().vector().get(0), ZERO);
        assert!(close(m.state().vector().norm2(), 1.0, 1e-12));

        let mut p = TwoCauseParams::reference();
        p.a1 = Some(0.7);
        assert!(matches!(
            build_two_cause(&p),
            Err(ModelError::NormalizationDeficit(_))
        ));
        p.a1 = Some(0.0);
        assert!(build_two_cause(&p).is_err());
        let mut p = TwoCauseParams::reference();
        p.r = 1.5;
        assert!(build_two_cause(&p).is_err());
    }

    #[test]
    fn joint_given_condition_is_a_half_at_sweep_ends() {
        for r in [0.0, 1.0] {
            let p = TwoCauseParams {
                r,
                ..TwoCauseParams::reference()
            };
            let rep = evaluate_report(&build_two_cause(&p).unwrap()).unwrap();
            assert_eq!(rep.p_d_given_joint, Some(0.5));
        }
    }

    #[test]
    fn three_cause_survey_point_is_valid() {
        let m = build_three_cause(&ThreeCauseParams::survey_point()).unwrap();
        assert_eq!(m.dim(), 12);
        let d = m.d();
        assert!(d.matrix().is_projector(STRUCTURAL_TOL));
        assert!(close(d.matrix().trace().unwrap().re, 3.0, 1e-12));
        let (a, b, c) = (m.a(), m.b().unwrap(), m.c().unwrap());
        assert_eq!(a.commutator_norm(b).unwrap(), 0.0);
        assert_eq!(a.commutator_norm(c).unwrap(), 0.0);
        assert_eq!(b.commutator_norm(c).unwrap(), 0.0);
        assert!(m.joint().unwrap().commutator_norm(d).unwrap() > 1e-3);
        let r = evaluate_report(&m).unwrap();
        let ab = a.product(b).unwrap();
        let p_ab = born_probability(&ab, m.state()).unwrap();
        assert!(close(r.p_joint, p_ab * r.p_c.unwrap(), 1e-12));
    }

    #[test]
    fn three_cause_factorizes_over_the_product_state() {
        let mut params = ThreeCauseParams::survey_point().with_r(0.5);
        params.six_dim.blocks = Some(GeneralizedBlockParams {
            beta1: 0.3,
            gamma1: 0.7,
            ..Default::default()
        });
        let m = build_three_cause(&params).unwrap();
        let r = evaluate_report(&m).unwrap();
        let six = evaluate_report(&build_two_cause(&params.six_dim).unwrap()).unwrap();
        let psi2 = two_dim_state(params.r2, params.theta2).unwrap();
        let d2 =
            ProjectorObservable::new("D2", real_ray_projector(params.alpha2).unwrap()).unwrap();
        let c2 = ProjectorObservable::new("C2", a2().unwrap()).unwrap();
        let p2_d = born_probability(&d2, &psi2).unwrap();
        let p2_d_c = conditional_probability(&d2, &c2, &psi2).unwrap();
        assert!(close(r.p_d, six.p_d * p2_d, 1e-10));
        assert!(close(
            r.p_d_given_a.unwrap(),
            six.p_d_given_a.unwrap() * p2_d,
            1e-10
        ));
        assert!(close(r.p_d_given_c.unwrap(), six.p_d * p2_d_c, 1e-10));
        assert!(close(
            r.p_d_given_joint.unwrap(),
            six.p_d_given_joint.unwrap() * p2_d_c,
            1e-10
        ));
    }

    #[test]
    fn toy_witness_closed_forms() {
        let r = witness_report(0.4, 0.1).unwrap();
        assert!(close(r.p_d, 0.1, 1e-12));
        assert!(close(r.p_d_given_x.unwrap(), 0.4, 1e-12));
        assert!(close(r.p_x_given_d.unwrap(), 0.4, 1e-12));
        assert!(close(r.p_x_given_not_d.unwrap(), 0.6, 1e-12));
        assert!(r.classical_lemma_violated);

        // zero prior, positive posterior
        let zero = witness_report(0.4, 0.0).unwrap();
        assert!(zero.p_d <= 1e-24);
        assert!(close(zero.p_d_given_x.unwrap(), 0.4, 1e-12));

        // D = X
        let m = build_toy_witness(1.0, 0.3).unwrap();
        assert!(m.a().commutator_norm(m.d()).unwrap() <= 1e-15);
        let r = evaluate_report(&m).unwrap();
        assert!(close(r.p_d_given_joint.unwrap(), 1.0, 1e-12));
        assert!(close(r.p_joint_given_d.unwrap(), 1.0, 1e-12));
    }

    #[test]
    fn sweep_rows_follow_grid() {
        let spec = ModelSpec::TwoCause(TwoCauseParams::reference());
        let grid = uniform_grid(100);
        let rows = sweep_r(&spec, &grid, false).unwrap();
        assert_eq!(rows.len(), 101);
        assert!(rows.iter().zip(&grid).all(|(row, r)| row.r == *r));
        assert!(sweep_r(&spec, &[0.5, 1.2], false).is_err());
    }
}

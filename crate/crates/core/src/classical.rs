//! Kolmogorovian probability over the `2^n` atoms of `n` binary events.
//!
//! Atoms are the only stored state; every marginal and conditional is an
//! atom sum. Atom index bit `k` is set exactly when event `k` is true.
//!
//! Besides plain evaluation this module carries the property suites that
//! pin down what classical spaces can and cannot do: the equivalence of
//! `p(d|ab) < p(d)` with `p(ab|d) < p(ab|not d)`, the conjunction theorem
//! under (conditional) independence, and a randomized feasibility search
//! against target tables.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optim::NelderMead;
use crate::targets::{TargetKey, TargetTable};

/// Guard band around equalities in strict inequalities.
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Tolerance on atom sums.
pub const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassicalError {
    #[error("invalid space: {0}")]
    InvalidSpace(String),
    #[error("unknown event label {0:?}")]
    UnknownEvent(String),
    #[error("cannot parse event expression {0:?}")]
    BadExpression(String),
    #[error("conditioning event {0:?} has no fixed literal")]
    TrivialCondition(String),
    #[error("conditioning event {event:?} has zero probability")]
    ZeroProbabilityCondition { event: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("rejection budget exhausted after {attempts} redraws")]
    RejectionBudgetExhausted { attempts: usize },
    #[error("search budget must be positive")]
    InvalidBudget,
}

pub type Result<T> = std::result::Result<T, ClassicalError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Literal {
    True,
    False,
    Free,
}

/// A conjunction of literals, one per event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventExpr {
    literals: Vec<Literal>,
}

impl EventExpr {
    pub fn free(n: usize) -> Self {
        Self {
            literals: vec![Literal::Free; n],
        }
    }

    pub fn with(mut self, index: usize, value: bool) -> Self {
        self.literals[index] = if value { Literal::True } else { Literal::False };
        self
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }

    pub fn is_trivial(&self) -> bool {
        self.literals.iter().all(|l| *l == Literal::Free)
    }

    /// Masks `(care, value)`: atom `i` matches when `i & care == value`.
    fn masks(&self) -> (usize, usize) {
        let mut care = 0;
        let mut value = 0;
        for (k, l) in self.literals.iter().enumerate() {
            match l {
                Literal::True => {
                    care |= 1 << k;
                    value |= 1 << k;
                }
                Literal::False => care |= 1 << k,
                Literal::Free => {}
            }
        }
        (care, value)
    }

    pub fn matches(&self, atom: usize) -> bool {
        let (care, value) = self.masks();
        atom & care == value
    }

    /// Conjunction, or `None` when the two fix an event to opposite values.
    pub fn and(&self, other: &Self) -> Option<Self> {
        let literals = self
            .literals
            .iter()
            .zip(&other.literals)
            .map(|(a, b)| match (a, b) {
                (Literal::Free, x) | (x, Literal::Free) => Some(*x),
                (x, y) if x == y => Some(*x),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Self { literals })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalSpace {
    labels: Vec<String>,
    atoms: Vec<f64>,
}

impl ClassicalSpace {
    pub fn new(labels: Vec<String>, atoms: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if n == 0 || n > 16 {
            return Err(ClassicalError::InvalidSpace(format!("{n} events")));
        }
        if atoms.len() != 1 << n {
            return Err(ClassicalError::InvalidSpace(format!(
                "{} atoms for {n} events",
                atoms.len()
            )));
        }
        if let Some(bad) = atoms.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(ClassicalError::InvalidSpace(format!("atom weight {bad}")));
        }
        let total: f64 = atoms.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(ClassicalError::InvalidSpace(format!(
                "atoms sum to {total}"
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() || !l.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(ClassicalError::InvalidSpace(format!("bad label {l:?}")));
            }
            if labels[..i].contains(l) {
                return Err(ClassicalError::InvalidSpace(format!(
                    "duplicate label {l:?}"
                )));
            }
        }
        Ok(Self { labels, atoms })
    }

    /// Normalizes nonnegative weights into a space.
    pub fn from_weights(labels: &[&str], weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(ClassicalError::InvalidSpace(format!(
                "weights sum to {total}"
            )));
        }
        let atoms: Vec<f64> = weights.iter().map(|w| w / total).collect();
        Self::new(labels.iter().map(|s| s.to_string()).collect(), atoms)
    }

    pub fn uniform(labels: &[&str]) -> Result<Self> {
        Self::from_weights(labels, &vec![1.0; 1 << labels.len()])
    }

    /// Normalized exponential draws over the atoms (uniform on the simplex).
    pub fn random(labels: &[&str], rng: &mut impl Rng) -> Result<Self> {
        let weights: Vec<f64> = (0..1usize << labels.len())
            .map(|_| -(1.0 - rng.gen::<f64>()).ln())
            .collect();
        Self::from_weights(labels, &weights)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn n_events(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| ClassicalError::UnknownEvent(label.to_string()))
    }

    /// Parses a conjunction such as `"a & b & !d"`; `"true"` is the sure event.
    pub fn event(&self, expr: &str) -> Result<EventExpr> {
        let mut out = EventExpr::free(self.n_events());
        if expr.trim() == "true" {
            return Ok(out);
        }
        for term in expr.split('&') {
            let term = term.trim();
            let (negated, name) = match term.strip_prefix('!') {
                Some(rest) => (true, rest.trim()),
                None => (false, term),
            };
            if name.is_empty() {
                return Err(ClassicalError::BadExpression(expr.to_string()));
            }
            let k = self.index_of(name)?;
            let lit = if negated {
                Literal::False
            } else {
                Literal::True
            };
            if out.literals[k] != Literal::Free && out.literals[k] != lit {
                return Err(ClassicalError::BadExpression(expr.to_string()));
            }
            out.literals[k] = lit;
        }
        Ok(out)
    }

    pub fn probability(&self, event: &EventExpr) -> f64 {
        let (care, value) = event.masks();
        self.atoms
            .iter()
            .enumerate()
            .filter(|(i, _)| i & care == value)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn conditional(&self, event: &EventExpr, given: &EventExpr) -> Result<f64> {
        if given.is_trivial() {
            return Err(ClassicalError::TrivialCondition(self.describe(given)));
        }
        let denom = self.probability(given);
        if denom <= 0.0 {
            return Err(ClassicalError::ZeroProbabilityCondition {
                event: self.describe(given),
            });
        }
        let joint = match event.and(given) {
            Some(both) => self.probability(&both),
            None => 0.0,
        };
        Ok(joint / denom)
    }

    /// Shorthand for `probability(event(expr))`.
    pub fn p(&self, expr: &str) -> Result<f64> {
        Ok(self.probability(&self.event(expr)?))
    }

    /// Shorthand for `conditional(event(expr), event(given))`.
    pub fn p_given(&self, expr: &str, given: &str) -> Result<f64> {
        self.conditional(&self.event(expr)?, &self.event(given)?)
    }

    fn describe(&self, e: &EventExpr) -> String {
        let terms: Vec<String> = e
            .literals
            .iter()
            .zip(&self.labels)
            .filter_map(|(l, name)| match l {
                Literal::True => Some(name.clone()),
                Literal::False => Some(format!("!{name}")),
                Literal::Free => None,
            })
            .collect();
        if terms.is_empty() {
            "true".into()
        } else {
            terms.join(" & ")
        }
    }
}

/// The fixed 8-atom space over `(a, b, d)` in which each of `a`, `b` raises
/// `p(d)` while `a & b` lowers it.
pub fn construct_10c_space() -> ClassicalSpace {
    let mut atoms = vec![0.0; 8];
    // (a, b, d) -> weight, index = a + 2b + 4d
    for (a, b, d, w) in [
        (1, 1, 1, 0.02),
        (1, 1, 0, 0.08),
        (1, 0, 1, 0.28),
        (1, 0, 0, 0.10),
        (0, 1, 1, 0.18),
        (0, 1, 0, 0.05),
        (0, 0, 1, 0.02),
        (0, 0, 0, 0.27),
    ] {
        atoms[a + 2 * b + 4 * d] = w;
    }
    ClassicalSpace::new(vec!["a".into(), "b".into(), "d".into()], atoms)
        .expect("constant space is valid")
}

/// Outcome of comparing `p(d|ab) < p(d)` with `p(ab|d) < p(ab|not d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LemmaCheck {
    pub joint_lowers_d: bool,
    pub joint_rarer_given_d: bool,
    pub equivalent: bool,
    /// Either comparison is within [`BOUNDARY_TOL`] of equality.
    pub boundary: bool,
}

pub fn check_lemma(space: &ClassicalSpace, a: &str, b: &str, d: &str) -> Result<LemmaCheck> {
    let ab = space.event(&format!("{a} & {b}"))?;
    let d_ev = space.event(d)?;
    let not_d = space.event(&format!("!{d}"))?;
    let p_d = space.probability(&d_ev);
    let p_ab = space.probability(&ab);
    if !(p_d > 0.0 && p_d < 1.0) {
        return Err(ClassicalError::Precondition(format!(
            "p({d}) = {p_d} not in (0, 1)"
        )));
    }
    if p_ab <= 0.0 {
        return Err(ClassicalError::Precondition(format!("p({a} & {b}) = 0")));
    }
    let d_given_ab = space.conditional(&d_ev, &ab)?;
    let ab_given_d = space.conditional(&ab, &d_ev)?;
    let ab_given_not_d = space.conditional(&ab, &not_d)?;
    let lhs = d_given_ab - p_d;
    let rhs = ab_given_d - ab_given_not_d;
    let joint_lowers_d = lhs < 0.0;
    let joint_rarer_given_d = rhs < 0.0;
    Ok(LemmaCheck {
        joint_lowers_d,
        joint_rarer_given_d,
        equivalent: joint_lowers_d == joint_rarer_given_d,
        boundary: lhs.abs() <= BOUNDARY_TOL || rhs.abs() <= BOUNDARY_TOL,
    })
}

/// Each single cause raises `p(d)` while the pair lowers it.
pub fn destructive_pattern(space: &ClassicalSpace) -> Result<bool> {
    let p_d = space.p("d")?;
    Ok(space.p_given("d", "a")? > p_d
        && space.p_given("d", "b")? > p_d
        && space.p_given("d", "a & b")? < p_d)
}

/// Ranges for the constrained sampler. All bounds must lie strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub p_d: [f64; 2],
    /// Range for `p(a|d)` and `p(b|d)`.
    pub p_given_d: [f64; 2],
    pub max_redraws: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            p_d: [0.02, 0.98],
            p_given_d: [0.02, 0.98],
            max_redraws: 10_000,
        }
    }
}

impl SamplerConfig {
    fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [("p_d", self.p_d), ("p_given_d", self.p_given_d)] {
            if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
                return Err(ClassicalError::Precondition(format!(
                    "{name} range [{lo}, {hi}] must lie inside (0, 1)"
                )));
            }
        }
        if self.max_redraws == 0 {
            return Err(ClassicalError::Precondition(
                "max_redraws must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Builds the `(a, b, d)` space with `a, b` independent both unconditionally
/// and given `d`, from `p(d)`, `p(a|d)`, `p(b|d)`, `p(a|not d)`, `p(b|not d)`.
/// Returns `None` when the implied `p(ab|not d)` leaves its Fréchet bounds or
/// either cause fails to strictly raise `p(d)`.
pub fn build_constrained_space(
    p_d: f64,
    a_d: f64,
    b_d: f64,
    a_nd: f64,
    b_nd: f64,
) -> Option<ClassicalSpace> {
    if a_d - a_nd <= BOUNDARY_TOL || b_d - b_nd <= BOUNDARY_TOL {
        return None;
    }
    let q = 1.0 - p_d;
    let p_a = a_d * p_d + a_nd * q;
    let p_b = b_d * p_d + b_nd * q;
    let ab_d = a_d * b_d;
    let ab_nd = (p_a * p_b - ab_d * p_d) / q;
    let lower = (a_nd + b_nd - 1.0).max(0.0);
    let upper = a_nd.min(b_nd);
    if !(ab_nd >= lower && ab_nd <= upper) {
        return None;
    }
    let cell = |ab: f64, a: f64, b: f64| [1.0 - a - b + ab, a - ab, b - ab, ab];
    // index = a + 2b + 4d; cell order is (!a!b, a!b, !ab, ab)
    let given_nd = cell(ab_nd, a_nd, b_nd);
    let given_d = cell(ab_d, a_d, b_d);
    let mut atoms = Vec::with_capacity(8);
    atoms.extend(given_nd.iter().map(|x| (x * q).max(0.0)));
    atoms.extend(given_d.iter().map(|x| (x * p_d).max(0.0)));
    let space = ClassicalSpace::from_weights(&["a", "b", "d"], &atoms).ok()?;
    ConstraintPredicates::evaluate(&space)
        .ok()?
        .all()
        .then_some(space)
}

/// Draws a space satisfying the conjunction theorem's premises.
pub fn sample_constrained_space(
    rng: &mut impl Rng,
    config: &SamplerConfig,
) -> Result<ClassicalSpace> {
    config.validate()?;
    let draw = |rng: &mut dyn rand::RngCore, [lo, hi]: [f64; 2]| lo + (hi - lo) * rng.gen::<f64>();
    for _ in 0..config.max_redraws {
        let p_d = draw(rng, config.p_d);
        let a_d = draw(rng, config.p_given_d);
        let b_d = draw(rng, config.p_given_d);
        let a_nd = a_d * rng.gen::<f64>();
        let b_nd = b_d * rng.gen::<f64>();
        if let Some(space) = build_constrained_space(p_d, a_d, b_d, a_nd, b_nd) {
            return Ok(space);
        }
    }
    Err(ClassicalError::RejectionBudgetExhausted {
        attempts: config.max_redraws,
    })
}

/// Seeded wrapper around [`sample_constrained_space`].
pub fn sample_constrained_space_seeded(
    seed: u64,
    config: &SamplerConfig,
) -> Result<ClassicalSpace> {
    sample_constrained_space(&mut ChaCha8Rng::seed_from_u64(seed), config)
}

/// The sampler's guarantees, each evaluated from atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConstraintPredicates {
    pub independent: bool,
    pub independent_given_d: bool,
    pub a_raises_d: bool,
    pub b_raises_d: bool,
    pub joint_given_not_d_admissible: bool,
}

impl ConstraintPredicates {
    pub fn evaluate(space: &ClassicalSpace) -> Result<Self> {
        let p_d = space.p("d")?;
        let (p_a, p_b, p_ab) = (space.p("a")?, space.p("b")?, space.p("a & b")?);
        let a_nd = space.p_given("a", "!d")?;
        let b_nd = space.p_given("b", "!d")?;
        let ab_nd = space.p_given("a & b", "!d")?;
        Ok(Self {
            independent: (p_ab - p_a * p_b).abs() <= BOUNDARY_TOL,
            independent_given_d: (space.p_given("a & b", "d")?
                - space.p_given("a", "d")? * space.p_given("b", "d")?)
            .abs()
                <= BOUNDARY_TOL,
            a_raises_d: space.p_given("d", "a")? - p_d > BOUNDARY_TOL,
            b_raises_d: space.p_given("d", "b")? - p_d > BOUNDARY_TOL,
            joint_given_not_d_admissible: ab_nd >= (a_nd + b_nd - 1.0).max(0.0) - BOUNDARY_TOL
                && ab_nd <= a_nd.min(b_nd) + BOUNDARY_TOL,
        })
    }

    pub fn all(&self) -> bool {
        self.independent
            && self.independent_given_d
            && self.a_raises_d
            && self.b_raises_d
            && self.joint_given_not_d_admissible
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Boundary,
    Counterexample,
    NotApplicable,
}

/// Conjunction-theorem verdict plus its stated consequence `p(ab|d) > p(ab)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TheoremTrial {
    pub verdict: Verdict,
    pub joint_more_likely_given_d: bool,
}

/// If `a, b` are independent, independent given `d`, and each (weakly) raises
/// `p(d)`, checks whether `a & b` raises `p(d)`.
pub fn conjunction_theorem_trial(space: &ClassicalSpace) -> TheoremTrial {
    let not_applicable = TheoremTrial {
        verdict: Verdict::NotApplicable,
        joint_more_likely_given_d: false,
    };
    let eval = || -> Result<Option<TheoremTrial>> {
        let p_d = space.p("d")?;
        let (p_a, p_b, p_ab) = (space.p("a")?, space.p("b")?, space.p("a & b")?);
        let independent = (p_ab - p_a * p_b).abs() <= BOUNDARY_TOL;
        let ab_d = space.p_given("a & b", "d")?;
        let cond_independent =
            (ab_d - space.p_given("a", "d")? * space.p_given("b", "d")?).abs() <= BOUNDARY_TOL;
        let raises = space.p_given("d", "a")? - p_d >= -BOUNDARY_TOL
            && space.p_given("d", "b")? - p_d >= -BOUNDARY_TOL;
        if !(independent && cond_independent && raises) {
            return Ok(None);
        }
        let diff = space.p_given("d", "a & b")? - p_d;
        let verdict = if diff > BOUNDARY_TOL {
            Verdict::Holds
        } else if diff >= -BOUNDARY_TOL {
            Verdict::Boundary
        } else {
            Verdict::Counterexample
        };
        Ok(Some(TheoremTrial {
            verdict,
            joint_more_likely_given_d: ab_d > p_ab,
        }))
    };
    eval().ok().flatten().unwrap_or(not_applicable)
}

/// Trials are split into this many chunks, chunk `k` seeded with `seed + k`,
/// so results do not depend on the thread count.
pub const SUITE_CHUNKS: u64 = 16;

fn chunk_ranges(trials: usize) -> Vec<(u64, usize)> {
    let chunks = SUITE_CHUNKS as usize;
    (0..chunks)
        .map(|k| (k as u64, trials / chunks + usize::from(k < trials % chunks)))
        .collect()
}

/// At most this many counterexamples are kept for inspection.
const DUMP_LIMIT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaSuiteReport {
    pub trials: usize,
    pub boundary: usize,
    pub counterexamples: usize,
    /// Spaces where `p(ab|d) > p(ab|not d)`.
    pub joint_favors_d: usize,
    /// ... among which each cause raised `p(d)` while the pair lowered it.
    pub destructive_despite_joint_favoring_d: usize,
    pub counterexample_atoms: Vec<Vec<f64>>,
}

/// Checks the lemma on `trials` uniformly random `(a, b, d)` spaces.
pub fn lemma_suite(seed: u64, trials: usize) -> LemmaSuiteReport {
    let partials: Vec<LemmaSuiteReport> = chunk_ranges(trials)
        .into_par_iter()
        .map(|(k, n)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k));
            let mut out = LemmaSuiteReport {
                trials: 0,
                boundary: 0,
                counterexamples: 0,
                joint_favors_d: 0,
                destructive_despite_joint_favoring_d: 0,
                counterexample_atoms: Vec::new(),
            };
            for _ in 0..n {
                let space = ClassicalSpace::random(&["a", "b", "d"], &mut rng)
                    .expect("exponential draws are positive");
                out.trials += 1;
                let Ok(check) = check_lemma(&space, "a", "b", "d") else {
                    out.boundary += 1;
                    continue;
                };
                if check.boundary {
                    out.boundary += 1;
                    continue;
                }
                if !check.equivalent {
                    out.counterexamples += 1;
                    if out.counterexample_atoms.len() < DUMP_LIMIT {
                        out.counterexample_atoms.push(space.atoms().to_vec());
                    }
                }
                if !check.joint_rarer_given_d {
                    out.joint_favors_d += 1;
                    if destructive_pattern(&space).unwrap_or(false) {
                        out.destructive_despite_joint_favoring_d += 1;
                    }
                }
            }
            out
        })
        .collect();
    let mut total = LemmaSuiteReport {
        trials: 0,
        boundary: 0,
        counterexamples: 0,
        joint_favors_d: 0,
        destructive_despite_joint_favoring_d: 0,
        counterexample_atoms: Vec::new(),
    };
    for p in partials {
        total.trials += p.trials;
        total.boundary += p.boundary;
        total.counterexamples += p.counterexamples;
        total.joint_favors_d += p.joint_favors_d;
        total.destructive_despite_joint_favoring_d += p.destructive_despite_joint_favoring_d;
        for atoms in p.counterexample_atoms {
            if total.counterexample_atoms.len() < DUMP_LIMIT {
                total.counterexample_atoms.push(atoms);
            }
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremSuiteReport {
    pub trials: usize,
    pub holds: usize,
    pub boundary: usize,
    pub counterexamples: usize,
    pub not_applicable: usize,
    pub consequence_failures: usize,
    pub counterexample_atoms: Vec<Vec<f64>>,
}

/// Runs the conjunction theorem on `trials` constrained samples. Fails only
/// when the sampler exhausts its redraw budget, returning partial counts.
pub fn theorem_suite(
    seed: u64,
    trials: usize,
    config: &SamplerConfig,
) -> std::result::Result<TheoremSuiteReport, (TheoremSuiteReport, ClassicalError)> {
    config
        .validate()
        .map_err(|e| (TheoremSuiteReport::empty(), e))?;
    let partials: Vec<(TheoremSuiteReport, Option<ClassicalError>)> = chunk_ranges(trials)
        .into_par_iter()
        .map(|(k, n)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k));
            let mut out = TheoremSuiteReport::empty();
            for _ in 0..n {
                let space = match sample_constrained_space(&mut rng, config) {
                    Ok(s) => s,
                    Err(e) => return (out, Some(e)),
                };
                out.trials += 1;
                let trial = conjunction_theorem_trial(&space);
                match trial.verdict {
                    Verdict::Holds => out.holds += 1,
                    Verdict::Boundary => out.boundary += 1,
                    Verdict::NotApplicable => out.not_applicable += 1,
                    Verdict::Counterexample => {
                        out.counterexamples += 1;
                        if out.counterexample_atoms.len() < DUMP_LIMIT {
                            out.counterexample_atoms.push(space.atoms().to_vec());
                        }
                    }
                }
                if trial.verdict != Verdict::NotApplicable && !trial.joint_more_likely_given_d {
                    out.consequence_failures += 1;
                }
            }
            (out, None)
        })
        .collect();
    let mut total = TheoremSuiteReport::empty();
    let mut failure = None;
    for (p, err) in partials {
        total.trials += p.trials;
        total.holds += p.holds;
        total.boundary += p.boundary;
        total.counterexamples += p.counterexamples;
        total.not_applicable += p.not_applicable;
        total.consequence_failures += p.consequence_failures;
        for atoms in p.counterexample_atoms {
            if total.counterexample_atoms.len() < DUMP_LIMIT {
                total.counterexample_atoms.push(atoms);
            }
        }
        if failure.is_none() {
            failure = err;
        }
    }
    match failure {
        Some(e) => Err((total, e)),
        None => Ok(total),
    }
}

impl TheoremSuiteReport {
    fn empty() -> Self {
        Self {
            trials: 0,
            holds: 0,
            boundary: 0,
            counterexamples: 0,
            not_applicable: 0,
            consequence_failures: 0,
            counterexample_atoms: Vec::new(),
        }
    }
}

/// Mutual independence of `events` (every subset of two or more), optionally
/// conditional on `given` being true.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndependenceConstraint {
    pub events: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub given: Option<String>,
}

impl IndependenceConstraint {
    pub fn mutual(events: &[&str]) -> Self {
        Self {
            events: events.iter().map(|s| s.to_string()).collect(),
            given: None,
        }
    }

    pub fn mutual_given(events: &[&str], given: &str) -> Self {
        Self {
            given: Some(given.to_string()),
            ..Self::mutual(events)
        }
    }

    /// Relative residuals `p(S | g) / prod_{e in S} p(e | g) - 1`, one per subset.
    ///
    /// The product form `p(S) - prod p(e)` vanishes whenever a marginal does,
    /// so degenerate spaces would satisfy it trivially; the ratio does not.
    fn residuals(&self, space: &ClassicalSpace, out: &mut Vec<f64>) -> Result<()> {
        let idx: Vec<usize> = self
            .events
            .iter()
            .map(|e| space.index_of(e))
            .collect::<Result<_>>()?;
        let n = space.n_events();
        let base = match &self.given {
            Some(g) => EventExpr::free(n).with(space.index_of(g)?, true),
            None => EventExpr::free(n),
        };
        let p_base = space.probability(&base);
        for subset in 0usize..(1 << idx.len()) {
            if subset.count_ones() < 2 {
                continue;
            }
            let mut joint = base.clone();
            let mut product = 1.0;
            for (bit, &k) in idx.iter().enumerate() {
                if subset & (1 << bit) != 0 {
                    joint = joint.with(k, true);
                    product *= space.probability(&base.clone().with(k, true)) / p_base;
                }
            }
            let value = space.probability(&joint) / p_base / product - 1.0;
            out.push(if value.is_finite() { value } else { 1.0 });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityResult {
    /// Largest of the weighted target violations and constraint residuals.
    pub best_residual: f64,
    pub best_space: ClassicalSpace,
    pub target_values: Vec<(TargetKey, Option<f64>)>,
    pub constraint_residuals: Vec<f64>,
    pub evaluations: usize,
}

/// Undefined conditionals count as a full miss.
const UNDEFINED_PENALTY: f64 = 1.0;

struct FeasibilityProblem<'a> {
    labels: Vec<&'static str>,
    targets: &'a TargetTable,
    constraints: &'a [IndependenceConstraint],
    compiled: Vec<(TargetKey, f64, EventExpr, Option<EventExpr>)>,
}

impl<'a> FeasibilityProblem<'a> {
    fn new(targets: &'a TargetTable, constraints: &'a [IndependenceConstraint]) -> Result<Self> {
        let mut labels = targets.labels();
        for c in constraints {
            for e in c.events.iter().chain(c.given.iter()) {
                let known = ["a", "b", "c", "d"]
                    .into_iter()
                    .find(|l| l == e)
                    .ok_or_else(|| ClassicalError::UnknownEvent(e.clone()))?;
                if !labels.contains(&known) {
                    labels.push(known);
                }
            }
        }
        labels.sort_unstable();
        let probe = ClassicalSpace::uniform(&labels)?;
        let compiled = targets
            .iter()
            .map(|(key, entry)| {
                let (ev, given) = key.events();
                Ok((
                    key,
                    entry.weight,
                    probe.event(ev)?,
                    given.map(|g| probe.event(g)).transpose()?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        for c in constraints {
            // validates labels up front
            c.residuals(&probe, &mut Vec::new())?;
        }
        Ok(Self {
            labels,
            targets,
            constraints,
            compiled,
        })
    }

    fn space(&self, logits: &[f64]) -> ClassicalSpace {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        ClassicalSpace::from_weights(&self.labels, &weights).expect("softmax weights are positive")
    }

    /// Signed weighted target residuals followed by constraint residuals.
    fn residuals(&self, space: &ClassicalSpace) -> (Vec<f64>, Vec<f64>) {
        let targets = self
            .compiled
            .iter()
            .map(|(key, w, ev, given)| {
                let value = match given {
                    None => Some(space.probability(ev)),
                    Some(g) => space.conditional(ev, g).ok(),
                };
                let target = self.targets.get(*key).map_or(0.0, |e| e.value);
                w * value.map_or(UNDEFINED_PENALTY, |v| v - target)
            })
            .collect();
        let mut cons = Vec::new();
        for c in self.constraints {
            c.residuals(space, &mut cons).expect("labels validated");
        }
        (targets, cons)
    }

    /// `(max |r|, sum r^2)` over all residuals.
    fn norms(&self, space: &ClassicalSpace) -> (f64, f64) {
        let (t, c) = self.residuals(space);
        t.iter()
            .chain(&c)
            .fold((0.0, 0.0), |(m, s), x| (f64::max(m, x.abs()), s + x * x))
    }
}

/// Evaluation cap for each start of [`feasibility_search`].
pub const EVALS_PER_START: usize = 25_000;
/// Starts run concurrently per batch.
const START_BATCH: usize = 8;

/// Randomized multi-start search for a space matching `targets` under the
/// independence `constraints`, minimizing the largest violation.
///
/// Each start runs a restarted simplex descent on the sum of squared
/// residuals in softmax coordinates; the reported residual is the smallest
/// max-abs violation seen at any evaluated point. Start 0 begins at the
/// uniform space, start `k > 0` at logits drawn from a generator seeded with
/// `seed + k`. Starts are launched until `budget` evaluations are spent.
pub fn feasibility_search(
    targets: &TargetTable,
    constraints: &[IndependenceConstraint],
    seed: u64,
    budget: u64,
) -> Result<FeasibilityResult> {
    if budget == 0 {
        return Err(ClassicalError::InvalidBudget);
    }
    let problem = FeasibilityProblem::new(targets, constraints)?;
    let dim = 1usize << problem.labels.len();
    let budget = budget as usize;
    let run_start = |k: usize, share: usize| -> (f64, Vec<f64>, usize) {
        let x0: Vec<f64> = if k == 0 {
            vec![0.0; dim]
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect()
        };
        let mut best = (f64::INFINITY, x0.clone());
        let nm = NelderMead {
            max_evals: 8_000,
            initial_step: 1.0,
            ftol: 1e-30,
            xtol: 1e-13,
        };
        let m = nm.minimize_with_restarts(
            |z| {
                let (worst, sum_sq) = problem.norms(&problem.space(z));
                if worst < best.0 {
                    best = (worst, z.to_vec());
                }
                sum_sq
            },
            &x0,
            share,
        );
        (best.0, best.1, m.evaluations)
    };
    // Starts run in fixed-size batches until the budget is spent; a start
    // that converges early leaves its unused share to later batches.
    let mut evaluations = 0usize;
    let mut next_start = 0usize;
    let mut best: Option<(f64, Vec<f64>)> = None;
    while evaluations < budget {
        let remaining = budget - evaluations;
        let shares: Vec<(usize, usize)> = (0..START_BATCH)
            .scan(remaining, |left, i| {
                (*left > 0).then(|| {
                    let share = EVALS_PER_START.min(*left);
                    *left -= share;
                    (next_start + i, share)
                })
            })
            .collect();
        next_start += shares.len();
        let results: Vec<(f64, Vec<f64>, usize)> = shares
            .into_par_iter()
            .map(|(k, share)| run_start(k, share))
            .collect();
        for (value, logits, used) in results {
            evaluations += used;
            if best.as_ref().is_none_or(|b| value < b.0) {
                best = Some((value, logits));
            }
        }
    }
    let (best_residual, logits) = best.expect("at least one start");
    let best_space = problem.space(&logits);
    let (_, constraint_residuals) = problem.residuals(&best_space);
    let target_values = problem
        .compiled
        .iter()
        .map(|(key, _, ev, given)| {
            let v = match given {
                None => Some(best_space.probability(ev)),
                Some(g) => best_space.conditional(ev, g).ok(),
            };
            (*key, v)
        })
        .collect();
    Ok(FeasibilityResult {
        best_residual,
        best_space,
        target_values,
        constraint_residuals,
        evaluations,
    })
}

/// Mutual independence of `a, b, c` plus mutual independence given `d`.
pub fn survey_independence_constraints() -> Vec<IndependenceConstraint> {
    vec![
        IndependenceConstraint::mutual(&["a", "b", "c"]),
        IndependenceConstraint::mutual_given(&["a", "b", "c"], "d"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Literal-by-literal enumeration, independent of the bitmask path.
    fn brute_force(space: &ClassicalSpace, lits: &[(usize, bool)]) -> f64 {
        let n = space.n_events();
        let mut total = 0.0;
        for atom in 0..(1usize << n) {
            let bits: Vec<bool> = (0..n).map(|k| (atom >> k) % 2 == 1).collect();
            if lits.iter().all(|&(k, v)| bits[k] == v) {
                total += space.atoms()[atom];
            }
        }
        total
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    #[test]
    fn uniform_three_event_space() {
        let s = ClassicalSpace::uniform(&["a", "b", "d"]).unwrap();
        assert!(close(s.p_given("d", "a & b").unwrap(), 0.5));
        let check = check_lemma(&s, "a", "b", "d").unwrap();
        assert!(check.boundary);
        assert!(!check.joint_lowers_d && !check.joint_rarer_given_d);
    }

    #[test]
    fn canned_destructive_space() {
        let s = construct_10c_space();
        assert!(close(s.atoms().iter().sum::<f64>(), 1.0));
        assert!(close(s.p("d").unwrap(), 0.5));
        assert!(close(s.p_given("d", "a").unwrap(), 0.625));
        assert!(close(s.p_given("d", "b").unwrap(), 0.2 / 0.33));
        assert!(close(s.p_given("d", "a & b").unwrap(), 0.2));
        assert!(close(s.p_given("a & b", "d").unwrap(), 0.04));
        assert!(close(s.p_given("a & b", "!d").unwrap(), 0.16));
        assert!(destructive_pattern(&s).unwrap());
        let check = check_lemma(&s, "a", "b", "d").unwrap();
        assert!(check.joint_lowers_d && check.joint_rarer_given_d && check.equivalent);
        assert!(!check.boundary);
        assert_eq!(
            conjunction_theorem_trial(&s).verdict,
            Verdict::NotApplicable
        );
    }

    #[test]
    fn zero_mass_condition_errors() {
        let s = ClassicalSpace::from_weights(&["a", "d"], &[0.5, 0.0, 0.5, 0.0]).unwrap();
        assert!(matches!(
            s.p_given("d", "a"),
            Err(ClassicalError::ZeroProbabilityCondition { .. })
        ));
        assert!(matches!(
            s.p_given("d", "true"),
            Err(ClassicalError::TrivialCondition(_))
        ));
        assert!(check_lemma(&construct_10c_space(), "a", "b", "x").is_err());
    }

    #[test]
    fn expression_parsing() {
        let s = ClassicalSpace::uniform(&["a", "b", "d"]).unwrap();
        let e = s.event("a & !d").unwrap();
        assert_eq!(
            e.literals(),
            &[Literal::True, Literal::Free, Literal::False]
        );
        assert!(s.event("a & !a").is_err());
        assert!(s.event("a & ").is_err());
        assert!(matches!(s.event("q"), Err(ClassicalError::UnknownEvent(_))));
        assert!(s.event("true").unwrap().is_trivial());
    }

    #[test]
    fn space_validation() {
        assert!(ClassicalSpace::new(vec!["a".into()], vec![0.5, 0.6]).is_err());
        assert!(ClassicalSpace::new(vec!["a".into()], vec![1.5, -0.5]).is_err());
        assert!(ClassicalSpace::new(vec!["a".into()], vec![1.0]).is_err());
        assert!(ClassicalSpace::new(vec!["a".into(), "a".into()], vec![0.25; 4]).is_err());
    }

    #[test]
    fn matches_brute_force_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for labels in [&["a", "b"][..], &["a", "b", "d"], &["a", "b", "c", "d"]] {
            let n = labels.len();
            for _ in 0..200 {
                let s = ClassicalSpace::random(labels, &mut rng).unwrap();
                let mut lits = Vec::new();
                let mut given_lits = Vec::new();
                for k in 0..n {
                    match rng.gen_range(0..3) {
                        0 => lits.push((k, rng.gen::<bool>())),
                        1 => given_lits.push((k, rng.gen::<bool>())),
                        _ => {}
                    }
                }
                let build = |ls: &[(usize, bool)]| {
                    ls.iter()
                        .fold(EventExpr::free(n), |e, &(k, v)| e.with(k, v))
                };
                let ev = build(&lits);
                assert!(close(s.probability(&ev), brute_force(&s, &lits)));
                if !given_lits.is_empty() {
                    let both: Vec<(usize, bool)> =
                        lits.iter().chain(&given_lits).copied().collect();
                    let expected = brute_force(&s, &both) / brute_force(&s, &given_lits);
                    let got = s.conditional(&ev, &build(&given_lits)).unwrap();
                    assert!((got - expected).abs() <= 1e-12, "{got} vs {expected}");
                }
            }
        }
    }

    #[test]
    fn sampler_satisfies_premises() {
        let s = sample_constrained_space_seeded(1, &SamplerConfig::default()).unwrap();
        assert!(ConstraintPredicates::evaluate(&s).unwrap().all());
        assert_eq!(conjunction_theorem_trial(&s).verdict, Verdict::Holds);
    }

    #[test]
    fn sampler_preconditions_and_rejection() {
        let bad = SamplerConfig {
            p_d: [1.0, 1.0],
            ..Default::default()
        };
        assert!(matches!(
            sample_constrained_space_seeded(1, &bad),
            Err(ClassicalError::Precondition(_))
        ));
        // p(a|d) = p(a|not d) is not a strict increase
        assert!(build_constrained_space(0.4, 0.5, 0.6, 0.5, 0.3).is_none());
        assert!(build_constrained_space(0.4, 0.5, 0.6, 0.4, 0.3).is_some());
    }

    #[test]
    fn fully_independent_space_is_boundary() {
        let (pa, pb, pd) = (0.3, 0.6, 0.45);
        let mut atoms = vec![0.0; 8];
        for (i, atom) in atoms.iter_mut().enumerate() {
            let f = |bit: usize, p: f64| if (i >> bit) & 1 == 1 { p } else { 1.0 - p };
            *atom = f(0, pa) * f(1, pb) * f(2, pd);
        }
        let s = ClassicalSpace::from_weights(&["a", "b", "d"], &atoms).unwrap();
        assert_eq!(conjunction_theorem_trial(&s).verdict, Verdict::Boundary);
    }

    #[test]
    fn small_suites_are_clean_and_deterministic() {
        let r1 = lemma_suite(3, 2_000);
        assert_eq!(r1.trials, 2_000);
        assert_eq!(r1.counterexamples, 0);
        assert_eq!(r1.destructive_despite_joint_favoring_d, 0);
        assert_eq!(r1, lemma_suite(3, 2_000));
        let t = theorem_suite(3, 2_000, &SamplerConfig::default()).unwrap();
        assert_eq!(t.trials, 2_000);
        assert_eq!(
            t.counterexamples + t.consequence_failures + t.not_applicable,
            0
        );
    }

    #[test]
    fn relative_constraint_residuals() {
        let s = ClassicalSpace::uniform(&["a", "b", "c", "d"]).unwrap();
        let mut out = Vec::new();
        IndependenceConstraint::mutual_given(&["a", "b", "c"], "d")
            .residuals(&s, &mut out)
            .unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|r| r.abs() <= 1e-12));
        let c = construct_10c_space();
        let mut out = Vec::new();
        IndependenceConstraint::mutual(&["a", "b"])
            .residuals(&c, &mut out)
            .unwrap();
        assert!((out[0] - (0.1 / (0.48 * 0.33) - 1.0)).abs() <= 1e-12);
    }

    #[test]
    fn feasibility_trivial_cases() {
        let half = TargetTable::from_values(&[
            (TargetKey::PD, 0.5),
            (TargetKey::PDA, 0.5),
            (TargetKey::PDAb, 0.5),
        ])
        .unwrap();
        let r = feasibility_search(&half, &[], 1, 30_000).unwrap();
        assert!(r.best_residual <= 1e-9, "{}", r.best_residual);
        assert!(matches!(
            feasibility_search(&half, &[], 1, 0),
            Err(ClassicalError::InvalidBudget)
        ));
        let bad = vec![IndependenceConstraint::mutual(&["a", "z"])];
        assert!(feasibility_search(&half, &bad, 1, 10).is_err());
    }
}

//! Multi-start derivative-free fitting of model parameters to target
//! probabilities.
//!
//! Parameters are searched in unconstrained coordinates: logits for `r`,
//! `r2` and any bounded scalar, raw angles (wrapped on output), and a
//! softmax with a fixed slack logit for the free amplitude weights
//! `a3, a4, a5`, which keeps their sum below one. `a1` is either eliminated
//! through the independence root or, in penalty mode, a free fraction of
//! the remaining weight.
//!
//! A fit first scores a stream of random draws (the same stream
//! [`random_search_baseline`] scores), then descends from the best few in
//! parallel and keeps the overall minimum.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{
    evaluate_report, GeneralizedBlockParams, ModelError, ModelSpec, ProbabilityReport, RootChoice,
    ThreeCauseParams, TwoCauseParams,
};
use crate::optim::NelderMead;
use crate::targets::{TargetError, TargetKey, TargetTable};

/// Random draws allowed to find a single buildable start.
pub const MAX_START_ATTEMPTS: usize = 1_000;
/// Residual charged for a target the model leaves undefined.
pub const UNDEFINED_PENALTY: f64 = 1.0;
/// Objective assigned to parameter points that fail to build.
const INVALID_OBJECTIVE: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error("invalid fit problem: {0}")]
    InvalidProblem(String),
    #[error("no buildable start found in {0} random draws")]
    Infeasible(usize),
}

pub type Result<T> = std::result::Result<T, FitError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFamily {
    TwoCause,
    /// 12-dim model with the fixed D6 blocks, `theta` held at 1.5.
    ThreeCause,
    /// 12-dim model with free `D6` block directions and phases and free `theta`.
    ThreeCauseGeneralized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    R,
    Theta,
    A1,
    A3,
    A4,
    A5,
    Alpha1,
    R2,
    Theta2,
    Alpha2,
    Beta1,
    Gamma1,
    Beta2,
    Gamma2,
    Gamma3,
    Delta,
}

impl ParamName {
    fn is_amplitude(self) -> bool {
        matches!(self, ParamName::A3 | ParamName::A4 | ParamName::A5)
    }

    fn is_probability(self) -> bool {
        matches!(self, ParamName::R | ParamName::R2)
    }
}

impl FitFamily {
    /// Parameters the family can vary, excluding `a1`.
    pub fn params(self) -> Vec<ParamName> {
        use ParamName::*;
        match self {
            FitFamily::TwoCause => vec![R, Theta, A3, A4, A5, Alpha1],
            FitFamily::ThreeCause => vec![R, A3, A4, A5, Alpha1, R2, Theta2, Alpha2],
            FitFamily::ThreeCauseGeneralized => vec![
                R, Theta, A3, A4, A5, Alpha1, R2, Theta2, Alpha2, Beta1, Gamma1, Beta2, Gamma2,
                Gamma3, Delta,
            ],
        }
    }

    /// Values used for parameters that are neither free nor overridden.
    fn defaults(self) -> BTreeMap<ParamName, f64> {
        use ParamName::*;
        let g = GeneralizedBlockParams::default();
        let p = ThreeCauseParams::survey_point();
        let six = if self == FitFamily::TwoCause {
            TwoCauseParams::reference()
        } else {
            p.six_dim.clone()
        };
        [
            (R, six.r),
            (Theta, six.theta),
            (A3, six.a3),
            (A4, six.a4),
            (A5, six.a5),
            (Alpha1, six.alpha1),
            (R2, p.r2),
            (Theta2, p.theta2),
            (Alpha2, p.alpha2),
            (Beta1, g.beta1),
            (Gamma1, g.gamma1),
            (Beta2, g.beta2),
            (Gamma2, g.gamma2),
            (Gamma3, g.gamma3),
            (Delta, g.delta),
        ]
        .into_iter()
        .collect()
    }
}

/// How the `A`/`B` independence condition is imposed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum IndependenceMode {
    /// `a1` is the chosen root of the independence quadratic.
    #[default]
    Eliminate,
    /// `a1` is free; `weight * |p(ab) - p(a) p(b)|` is added to the objective.
    Penalty { weight: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitProblem {
    pub family: FitFamily,
    pub targets: TargetTable,
    /// Parameters pinned to a value (angles in units of pi).
    #[serde(default)]
    pub fixed: BTreeMap<ParamName, f64>,
    /// Search interval for scalar (non-amplitude) parameters.
    #[serde(default)]
    pub bounds: BTreeMap<ParamName, [f64; 2]>,
    #[serde(default)]
    pub independence: IndependenceMode,
    #[serde(default)]
    pub seed: u64,
    /// Total objective evaluations, random phase included.
    #[serde(default = "default_budget")]
    pub budget: u64,
    /// Random draws scored before descent.
    #[serde(default = "default_random_draws")]
    pub random_draws: usize,
    /// Descents launched from the best random draws.
    #[serde(default = "default_starts")]
    pub starts: usize,
}

fn default_budget() -> u64 {
    200_000
}

fn default_random_draws() -> usize {
    1_000
}

fn default_starts() -> usize {
    8
}

impl FitProblem {
    pub fn new(family: FitFamily, targets: TargetTable) -> Self {
        Self {
            family,
            targets,
            fixed: BTreeMap::new(),
            bounds: BTreeMap::new(),
            independence: IndependenceMode::Eliminate,
            seed: 0,
            budget: default_budget(),
            random_draws: default_random_draws(),
            starts: default_starts(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Coord {
    /// `lo + (hi - lo) * sigmoid(z)`.
    Bounded(ParamName, f64, f64),
    Angle(ParamName),
}

/// Compiled coordinate layout of a problem.
#[derive(Debug, Clone)]
struct Layout {
    family: FitFamily,
    base: BTreeMap<ParamName, f64>,
    scalars: Vec<Coord>,
    /// Free amplitude weights sharing `mass` with a slack term.
    amplitudes: Vec<ParamName>,
    amplitude_mass: f64,
    free_a1: bool,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Layout {
    fn new(problem: &FitProblem) -> Result<Self> {
        let family_params = problem.family.params();
        let mut base = problem.family.defaults();
        let free_a1 = matches!(problem.independence, IndependenceMode::Penalty { .. });
        if let IndependenceMode::Penalty { weight } = problem.independence {
            if !(weight.is_finite() && weight >= 0.0) {
                return Err(FitError::InvalidProblem(format!("penalty weight {weight}")));
            }
        }
        for (&name, &value) in &problem.fixed {
            let allowed = family_params.contains(&name) || (name == ParamName::A1 && free_a1);
            if !allowed || !value.is_finite() {
                return Err(FitError::InvalidProblem(format!(
                    "cannot fix {name:?} = {value} in this family"
                )));
            }
            base.insert(name, value);
        }
        let mut scalars = Vec::new();
        let mut amplitudes = Vec::new();
        for name in family_params {
            if problem.fixed.contains_key(&name) {
                continue;
            }
            if name.is_amplitude() {
                if problem.bounds.contains_key(&name) {
                    return Err(FitError::InvalidProblem(format!(
                        "{name:?} is an amplitude weight; bounds are not supported"
                    )));
                }
                amplitudes.push(name);
            } else if let Some(&[lo, hi]) = problem.bounds.get(&name) {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(FitError::InvalidProblem(format!("bad bounds for {name:?}")));
                }
                if name.is_probability() && (lo < 0.0 || hi > 1.0) {
                    return Err(FitError::InvalidProblem(format!(
                        "{name:?} bounds leave [0, 1]"
                    )));
                }
                scalars.push(Coord::Bounded(name, lo, hi));
            } else if name.is_probability() {
                scalars.push(Coord::Bounded(name, 0.0, 1.0));
            } else {
                scalars.push(Coord::Angle(name));
            }
        }
        if let Some(name) = problem
            .bounds
            .keys()
            .find(|n| problem.fixed.contains_key(n))
        {
            return Err(FitError::InvalidProblem(format!(
                "{name:?} is both fixed and bounded"
            )));
        }
        let fixed_mass: f64 = [ParamName::A3, ParamName::A4, ParamName::A5]
            .iter()
            .filter(|n| problem.fixed.contains_key(n))
            .map(|n| base[n])
            .sum();
        if !(0.0..1.0).contains(&fixed_mass) {
            return Err(FitError::InvalidProblem(format!(
                "fixed amplitude weights sum to {fixed_mass}"
            )));
        }
        Ok(Self {
            family: problem.family,
            base,
            scalars,
            amplitudes,
            amplitude_mass: 1.0 - fixed_mass,
            free_a1: free_a1 && !problem.fixed.contains_key(&ParamName::A1),
        })
    }

    fn dim(&self) -> usize {
        self.scalars.len() + self.amplitudes.len() + usize::from(self.free_a1)
    }

    fn decode(&self, z: &[f64]) -> BTreeMap<ParamName, f64> {
        let mut values = self.base.clone();
        let mut it = z.iter().copied();
        for coord in &self.scalars {
            let zi = it.next().expect("layout length");
            match *coord {
                Coord::Bounded(name, lo, hi) => values.insert(name, lo + (hi - lo) * sigmoid(zi)),
                Coord::Angle(name) => values.insert(name, zi.rem_euclid(2.0)),
            };
        }
        if !self.amplitudes.is_empty() {
            let logits: Vec<f64> = self.amplitudes.iter().map(|_| it.next().unwrap()).collect();
            let max = logits.iter().copied().fold(0.0, f64::max);
            let slack = (-max).exp();
            let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let total = slack + weights.iter().sum::<f64>();
            for (name, w) in self.amplitudes.iter().zip(weights) {
                values.insert(*name, self.amplitude_mass * w / total);
            }
        }
        if self.free_a1 {
            let s: f64 = [ParamName::A3, ParamName::A4, ParamName::A5]
                .iter()
                .map(|n| values[n])
                .sum();
            values.insert(ParamName::A1, (1.0 - s) * sigmoid(it.next().unwrap()));
        }
        values
    }

    /// Random coordinates: uniform probabilities in (0.02, 0.98), angles in
    /// [0, 2), amplitude logits in (-3, 1).
    fn draw(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.dim());
        for coord in &self.scalars {
            z.push(match coord {
                Coord::Bounded(..) => {
                    let u: f64 = rng.gen_range(0.02..0.98);
                    (u / (1.0 - u)).ln()
                }
                Coord::Angle(_) => rng.gen_range(0.0..2.0),
            });
        }
        for _ in &self.amplitudes {
            z.push(rng.gen_range(-3.0..1.0));
        }
        if self.free_a1 {
            z.push(rng.gen_range(-3.0..3.0));
        }
        z
    }

    fn spec(&self, v: &BTreeMap<ParamName, f64>, root: RootChoice) -> ModelSpec {
        use ParamName::*;
        let six = TwoCauseParams {
            r: v[&R],
            theta: v[&Theta],
            a3: v[&A3],
            a4: v[&A4],
            a5: v[&A5],
            alpha1: v[&Alpha1],
            root_choice: root,
            a1: v.get(&A1).copied(),
            blocks: (self.family == FitFamily::ThreeCauseGeneralized).then(|| {
                GeneralizedBlockParams {
                    beta1: v[&Beta1],
                    gamma1: v[&Gamma1],
                    beta2: v[&Beta2],
                    gamma2: v[&Gamma2],
                    gamma3: v[&Gamma3],
                    delta: v[&Delta],
                }
            }),
        };
        match self.family {
            FitFamily::TwoCause => ModelSpec::TwoCause(six),
            FitFamily::ThreeCause => ModelSpec::ThreeCause(ThreeCauseParams {
                six_dim: TwoCauseParams { theta: 1.5, ..six },
                r2: v[&R2],
                theta2: v[&Theta2],
                alpha2: v[&Alpha2],
            }),
            FitFamily::ThreeCauseGeneralized => ModelSpec::ThreeCause(ThreeCauseParams {
                six_dim: six,
                r2: v[&R2],
                theta2: v[&Theta2],
                alpha2: v[&Alpha2],
            }),
        }
    }
}

/// One target compared with the fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub key: TargetKey,
    pub target: f64,
    pub weight: f64,
    pub fitted: Option<f64>,
    /// `fitted - target`, or [`UNDEFINED_PENALTY`] when undefined.
    pub residual: f64,
}

/// Fit quality of a model report against a target table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub rows: Vec<ResidualRow>,
    pub rmse: f64,
    pub max_abs: f64,
    pub ordering: bool,
}

/// Weighted residuals of `report` (from a model with `conditions` condition
/// projectors) against `targets`.
pub fn evaluate_targets(
    report: &ProbabilityReport,
    conditions: usize,
    targets: &TargetTable,
) -> Result<Evaluation> {
    let mut rows = Vec::with_capacity(targets.len());
    let mut fitted = BTreeMap::new();
    for (key, entry) in targets.iter() {
        let value = key.from_report(report, conditions)?;
        fitted.insert(key, value);
        rows.push(ResidualRow {
            key,
            target: entry.value,
            weight: entry.weight,
            fitted: value,
            residual: value.map_or(UNDEFINED_PENALTY, |v| v - entry.value),
        });
    }
    let total_weight: f64 = rows.iter().map(|r| r.weight).sum();
    let rmse = if total_weight > 0.0 {
        let sq: f64 = rows
            .iter()
            .map(|r| r.weight * r.residual * r.residual)
            .sum();
        (sq / total_weight).sqrt()
    } else {
        0.0
    };
    let max_abs = rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    Ok(Evaluation {
        rows,
        rmse,
        max_abs,
        ordering: targets.ordering_matches(&fitted),
    })
}

/// Weighted RMSE of a model spec against targets.
pub fn objective(spec: &ModelSpec, targets: &TargetTable) -> Result<f64> {
    let m = spec.build()?;
    let report = evaluate_report(&m)?;
    Ok(evaluate_targets(&report, m.conditions().len(), targets)?.rmse)
}

/// `|p(ab) - p(a) p(b)|` on the 6-dim factor, which carries `A` and `B`.
fn independence_gap(spec: &ModelSpec) -> Result<f64> {
    let m = crate::models::build_two_cause(spec.six_dim())?;
    let r = evaluate_report(&m)?;
    Ok((r.p_joint - r.p_a * r.p_b.unwrap_or(0.0)).abs())
}

struct Scorer<'a> {
    problem: &'a FitProblem,
    layout: Layout,
}

impl Scorer<'_> {
    fn spec(&self, z: &[f64], root: RootChoice) -> ModelSpec {
        self.layout.spec(&self.layout.decode(z), root)
    }

    /// Objective value, `Err` when the point does not build.
    fn score(&self, z: &[f64], root: RootChoice) -> Result<f64> {
        let spec = self.spec(z, root);
        let mut value = objective(&spec, &self.problem.targets)?;
        if let IndependenceMode::Penalty { weight } = self.problem.independence {
            value += weight * independence_gap(&spec)?;
        }
        Ok(value)
    }

    /// Guarded objective for the optimizer.
    fn guarded(&self, z: &[f64], root: RootChoice) -> f64 {
        self.score(z, root).unwrap_or(INVALID_OBJECTIVE)
    }

    fn roots(&self) -> [RootChoice; 2] {
        [RootChoice::Large, RootChoice::Small]
    }

    /// Root for random draw `i`: both roots alternate in elimination mode.
    fn root_for(&self, i: usize) -> RootChoice {
        match self.problem.independence {
            IndependenceMode::Eliminate => self.roots()[i % 2],
            IndependenceMode::Penalty { .. } => RootChoice::Large,
        }
    }
}

#[derive(Debug, Clone)]
struct Draw {
    index: usize,
    z: Vec<f64>,
    root: RootChoice,
    value: f64,
}

/// Scores `n` draws from the problem's seeded stream; `Err` only if none of
/// the first [`MAX_START_ATTEMPTS`] draws builds.
fn random_phase(scorer: &Scorer<'_>, n: usize) -> Result<Vec<Draw>> {
    let mut rng = ChaCha8Rng::seed_from_u64(scorer.problem.seed);
    let points: Vec<(Vec<f64>, RootChoice)> = (0..n.max(MAX_START_ATTEMPTS))
        .map(|i| (scorer.layout.draw(&mut rng), scorer.root_for(i)))
        .collect();
    let mut draws: Vec<Draw> = points[..n]
        .par_iter()
        .enumerate()
        .filter_map(|(index, (z, root))| {
            let value = scorer.score(z, *root).ok()?;
            Some(Draw {
                index,
                z: z.clone(),
                root: *root,
                value,
            })
        })
        .collect();
    if draws.is_empty() {
        let first_ok = points[n..].iter().enumerate().find_map(|(k, (z, root))| {
            let value = scorer.score(z, *root).ok()?;
            Some(Draw {
                index: n + k,
                z: z.clone(),
                root: *root,
                value,
            })
        });
        match first_ok {
            Some(d) => draws.push(d),
            None => return Err(FitError::Infeasible(MAX_START_ATTEMPTS)),
        }
    }
    Ok(draws)
}

/// Best objective among the first `n` random draws of the problem's stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub draws: usize,
    pub feasible: usize,
    pub best_rmse: f64,
}

pub fn random_search_baseline(problem: &FitProblem, n: usize) -> Result<Baseline> {
    if n == 0 {
        return Err(FitError::InvalidProblem("need at least one draw".into()));
    }
    let scorer = Scorer {
        problem,
        layout: Layout::new(problem)?,
    };
    let draws = random_phase(&scorer, n)?;
    let feasible = draws.iter().filter(|d| d.index < n).count();
    let best = draws.iter().map(|d| d.value).fold(f64::INFINITY, f64::min);
    Ok(Baseline {
        draws: n,
        feasible,
        best_rmse: best,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: FitFamily,
    pub params: ModelSpec,
    pub report: ProbabilityReport,
    pub residuals: Vec<ResidualRow>,
    pub rmse: f64,
    pub max_abs: f64,
    /// Fitted values order against `p_d` as the targets do.
    pub ordering: bool,
    /// Final objective (RMSE plus any independence penalty).
    pub objective: f64,
    pub independence_gap: f64,
    pub evaluations: u64,
    /// Best objective seen during the random phase.
    pub random_best: f64,
}

/// Fits `problem`; deterministic for a fixed seed regardless of thread count.
pub fn fit(problem: &FitProblem) -> Result<FitResult> {
    if problem.budget == 0 {
        return Err(FitError::InvalidProblem("budget must be positive".into()));
    }
    if problem.starts == 0 {
        return Err(FitError::InvalidProblem("need at least one start".into()));
    }
    let scorer = Scorer {
        problem,
        layout: Layout::new(problem)?,
    };
    let budget = problem.budget as usize;
    let n_random = problem.random_draws.min(budget / 2).max(1);
    let mut draws = random_phase(&scorer, n_random)?;
    draws.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.index.cmp(&b.index)));
    let random_best = draws[0].clone();

    let mut starts: Vec<Draw> = Vec::new();
    for root in scorer.roots() {
        // best draw of each root, so both roots are always descended from
        if let Some(d) = draws.iter().find(|d| d.root == root) {
            starts.push(d.clone());
        }
    }
    for d in &draws {
        if starts.len() >= problem.starts {
            break;
        }
        if !starts.iter().any(|s| s.index == d.index) {
            starts.push(d.clone());
        }
    }
    starts.truncate(problem.starts.max(1));
    starts.sort_by_key(|d| d.index);

    let remaining = budget.saturating_sub(n_random.max(1));
    let share = (remaining / starts.len()).max(1);
    let nm = NelderMead {
        max_evals: 4_000,
        initial_step: 0.4,
        ftol: 1e-20,
        xtol: 1e-12,
    };
    let descents: Vec<(usize, Draw, usize)> = starts
        .par_iter()
        .enumerate()
        .map(|(k, start)| {
            let m = nm.minimize_with_restarts(|z| scorer.guarded(z, start.root), &start.z, share);
            let better = m.value < start.value;
            let best = Draw {
                index: start.index,
                z: if better { m.x } else { start.z.clone() },
                root: start.root,
                value: m.value.min(start.value),
            };
            (k, best, m.evaluations)
        })
        .collect();
    let evaluations = n_random + descents.iter().map(|d| d.2).sum::<usize>();
    let (_, best, _) = descents
        .into_iter()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .expect("at least one start");
    let best = if random_best.value < best.value {
        random_best.clone()
    } else {
        best
    };

    let spec = scorer.spec(&best.z, best.root);
    let m = spec.build()?;
    let report = evaluate_report(&m)?;
    let eval = evaluate_targets(&report, m.conditions().len(), &problem.targets)?;
    let independence_gap = independence_gap(&spec)?;
    let objective = match problem.independence {
        IndependenceMode::Eliminate => eval.rmse,
        IndependenceMode::Penalty { weight } => eval.rmse + weight * independence_gap,
    };
    Ok(FitResult {
        family: problem.family,
        params: spec,
        report,
        residuals: eval.rows,
        rmse: eval.rmse,
        max_abs: eval.max_abs,
        ordering: eval.ordering,
        objective,
        independence_gap,
        evaluations: evaluations as u64,
        random_best: random_best.value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::build_two_cause;

    fn reference_targets() -> TargetTable {
        let m = build_two_cause(&TwoCauseParams::reference()).unwrap();
        let r = evaluate_report(&m).unwrap();
        let keys = [
            TargetKey::PD,
            TargetKey::PA,
            TargetKey::PB,
            TargetKey::PDA,
            TargetKey::PDB,
            TargetKey::PDAb,
            TargetKey::PAbD,
            TargetKey::PAbNotD,
        ];
        let values: Vec<(TargetKey, f64)> = keys
            .iter()
            .map(|&k| (k, k.from_report(&r, 2).unwrap().unwrap()))
            .collect();
        TargetTable::from_values(&values).unwrap()
    }

    #[test]
    fn objective_is_zero_on_own_report() {
        let spec = ModelSpec::TwoCause(TwoCauseParams::reference());
        assert!(objective(&spec, &reference_targets()).unwrap() <= 1e-15);
        let zero = reference_targets().with_weights(0.0);
        assert_eq!(objective(&spec, &zero).unwrap(), 0.0);
    }

    #[test]
    fn objective_rejects_invalid_and_wrong_arity() {
        let mut p = TwoCauseParams::reference();
        p.a1 = Some(0.9);
        assert!(objective(&ModelSpec::TwoCause(p), &reference_targets()).is_err());
        let spec = ModelSpec::TwoCause(TwoCauseParams::reference());
        assert!(matches!(
            objective(&spec, &TargetTable::survey()),
            Err(FitError::Target(TargetError::WrongArity { .. }))
        ));
    }

    #[test]
    fn objective_invariant_under_global_phase() {
        let spec = ModelSpec::ThreeCause(ThreeCauseParams::survey_point().with_r(0.5));
        let m = spec.build().unwrap();
        let base = evaluate_report(&m).unwrap();
        for phase in [0.3, 1.7, -2.2] {
            let rotated = evaluate_report(&m.with_global_phase(phase)).unwrap();
            let a = evaluate_targets(&base, 3, &TargetTable::survey()).unwrap();
            let b = evaluate_targets(&rotated, 3, &TargetTable::survey()).unwrap();
            assert!((a.rmse - b.rmse).abs() <= 1e-12);
            for (x, y) in a.rows.iter().zip(&b.rows) {
                assert!((x.residual - y.residual).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn layout_keeps_amplitudes_on_simplex() {
        let mut problem = FitProblem::new(FitFamily::ThreeCauseGeneralized, TargetTable::survey());
        problem.fixed.insert(ParamName::A5, 0.2);
        let layout = Layout::new(&problem).unwrap();
        assert_eq!(layout.dim(), 14);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let mut z = layout.draw(&mut rng);
            for x in z.iter_mut() {
                *x *= 10.0;
            }
            let v = layout.decode(&z);
            let s = v[&ParamName::A3] + v[&ParamName::A4] + v[&ParamName::A5];
            assert!(s < 1.0 && v[&ParamName::A3] >= 0.0);
            assert_eq!(v[&ParamName::A5], 0.2);
            assert!((0.0..=1.0).contains(&v[&ParamName::R2]));
            assert!((0.0..2.0).contains(&v[&ParamName::Theta2]));
        }
    }

    #[test]
    fn rejects_bad_problems() {
        let mut p = FitProblem::new(FitFamily::TwoCause, reference_targets());
        p.fixed.insert(ParamName::R2, 0.5);
        assert!(matches!(fit(&p), Err(FitError::InvalidProblem(_))));
        let mut p = FitProblem::new(FitFamily::TwoCause, reference_targets());
        p.bounds.insert(ParamName::A3, [0.0, 0.5]);
        assert!(Layout::new(&p).is_err());
        let mut p = FitProblem::new(FitFamily::TwoCause, reference_targets());
        p.budget = 0;
        assert!(fit(&p).is_err());
    }

    #[test]
    fn infeasible_when_nothing_builds() {
        // a3 = 0.9 leaves no admissible independence root for any a4, a5
        let mut p = FitProblem::new(FitFamily::TwoCause, reference_targets());
        p.fixed.insert(ParamName::A3, 0.9);
        p.budget = 2_000;
        assert!(matches!(fit(&p), Err(FitError::Infeasible(_))));
    }

    #[test]
    fn fit_is_deterministic_and_never_worse_than_random() {
        let mut p = FitProblem::new(FitFamily::ThreeCause, TargetTable::survey());
        p.budget = 6_000;
        p.random_draws = 200;
        p.starts = 3;
        let a = fit(&p).unwrap();
        let b = fit(&p).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert!(a.objective <= a.random_best);
        assert!(a.evaluations <= p.budget + 50);
        let recomputed = objective(&a.params, &p.targets).unwrap();
        assert!((recomputed - a.rmse).abs() <= 1e-12);
    }

    #[test]
    fn penalty_mode_frees_a1() {
        let mut p = FitProblem::new(FitFamily::TwoCause, reference_targets());
        p.independence = IndependenceMode::Penalty { weight: 1.0 };
        p.budget = 4_000;
        p.random_draws = 100;
        p.starts = 2;
        let r = fit(&p).unwrap();
        assert!(r.params.six_dim().a1.is_some());
        assert!(r.objective >= r.rmse);
    }
}

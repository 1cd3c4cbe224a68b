//! Nelder-Mead simplex minimization over unconstrained coordinates.
//!
//! Callers map bounded parameters through their own transforms (logit,
//! softmax, wrapped angles) so every vertex is feasible by construction.
//! Uses the dimension-adaptive coefficients of Gao and Han, which behave
//! much better than the classic (1, 2, 0.5, 0.5) set above ~10 dimensions.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMead {
    /// Hard cap on objective evaluations for one call of [`NelderMead::minimize`].
    pub max_evals: usize,
    /// Edge length of the initial axis-aligned simplex.
    pub initial_step: f64,
    /// Stop when the spread of simplex values falls below this.
    pub ftol: f64,
    /// ... and the simplex diameter below this.
    pub xtol: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_evals: 10_000,
            initial_step: 0.5,
            ftol: 1e-16,
            xtol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

impl NelderMead {
    pub fn minimize(&self, mut f: impl FnMut(&[f64]) -> f64, x0: &[f64]) -> Minimum {
        let n = x0.len();
        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            sanitize(f(x))
        };
        if n == 0 {
            let v = eval(x0, &mut evals);
            return Minimum {
                x: Vec::new(),
                value: v,
                evaluations: evals,
                converged: true,
            };
        }

        let nf = n as f64;
        let (alpha, gamma) = (1.0, 1.0 + 2.0 / nf);
        let rho = 0.75 - 1.0 / (2.0 * nf);
        let sigma = 1.0 - 1.0 / nf;

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((x0.to_vec(), eval(x0, &mut evals)));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += self.initial_step;
            let v = eval(&x, &mut evals);
            simplex.push((x, v));
        }

        let mut converged = false;
        while evals < self.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            let spread = if worst.is_finite() {
                worst - best
            } else {
                f64::INFINITY
            };
            let diameter = simplex[1..]
                .iter()
                .map(|(x, _)| {
                    x.iter()
                        .zip(&simplex[0].0)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if spread <= self.ftol && diameter <= self.xtol {
                converged = true;
                break;
            }

            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / nf;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };

            let xr = along(alpha);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(alpha * gamma);
                let fe = eval(&xe, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(alpha * rho);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-rho);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
                continue;
            }
            // shrink toward the best vertex
            let best_x = simplex[0].0.clone();
            for vertex in simplex.iter_mut().skip(1) {
                if evals >= self.max_evals {
                    break;
                }
                let x: Vec<f64> = best_x
                    .iter()
                    .zip(&vertex.0)
                    .map(|(b, v)| b + sigma * (v - b))
                    .collect();
                let v = eval(&x, &mut evals);
                *vertex = (x, v);
            }
        }

        let (x, value) = simplex
            .into_iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("simplex is never empty");
        Minimum {
            x,
            value,
            evaluations: evals,
            converged,
        }
    }

    /// Repeats [`NelderMead::minimize`] from the incumbent with a fresh simplex
    /// until a restart fails to improve or `budget` evaluations are spent.
    pub fn minimize_with_restarts(
        &self,
        mut f: impl FnMut(&[f64]) -> f64,
        x0: &[f64],
        budget: usize,
    ) -> Minimum {
        let mut total = 0usize;
        let mut best: Option<Minimum> = None;
        let mut start = x0.to_vec();
        let mut step = self.initial_step;
        while total < budget {
            let run = NelderMead {
                max_evals: self.max_evals.min(budget - total),
                initial_step: step,
                ..*self
            };
            let m = run.minimize(&mut f, &start);
            total += m.evaluations;
            let improved = best.as_ref().is_none_or(|b| m.value < b.value);
            let stalled = best
                .as_ref()
                .is_some_and(|b| b.value - m.value <= self.ftol.max(1e-15 * b.value.abs()));
            if improved {
                start = m.x.clone();
                best = Some(m);
            }
            if stalled {
                break;
            }
            step = (step * 0.5).max(1e-3);
        }
        let mut best = best.expect("budget covers at least one run");
        best.evaluations = total;
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    }

    #[test]
    fn finds_rosenbrock_minimum() {
        let nm = NelderMead {
            max_evals: 20_000,
            ..Default::default()
        };
        let m = nm.minimize_with_restarts(rosenbrock, &[-1.2, 1.0], 50_000);
        assert!(m.value < 1e-12, "{m:?}");
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn high_dimensional_quadratic() {
        let target: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let f = |x: &[f64]| -> f64 {
            x.iter()
                .zip(&target)
                .enumerate()
                .map(|(i, (a, b))| (1.0 + i as f64) * (a - b).powi(2))
                .sum()
        };
        let nm = NelderMead {
            max_evals: 50_000,
            ..Default::default()
        };
        let m = nm.minimize_with_restarts(f, &[0.0; 16], 200_000);
        assert!(m.value < 1e-14, "{}", m.value);
    }

    #[test]
    fn respects_budget_and_nan() {
        let mut calls = 0;
        let nm = NelderMead {
            max_evals: 50,
            ..Default::default()
        };
        let m = nm.minimize(
            |x| {
                calls += 1;
                if x[0] > 2.0 {
                    f64::NAN
                } else {
                    (x[0] - 1.0).powi(2) + x[1].powi(2)
                }
            },
            &[0.0, 0.0],
        );
        assert!(m.evaluations <= 50 + 3);
        assert_eq!(calls, m.evaluations);
        assert!(m.value.is_finite());
    }

    #[test]
    fn zero_dimensional_problem_evaluates_once() {
        let m = NelderMead::default().minimize(|_| 3.0, &[]);
        assert_eq!((m.value, m.evaluations), (3.0, 1));
    }
}

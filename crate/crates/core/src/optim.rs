//! Derivative-free-objective BFGS.
//!
//! The objective is a black box (one call = one circuit execution), so the
//! gradient comes from central differences. Objective calls and gradient
//! stencil calls are counted separately: the former are what the line
//! search and the initial point consume, the latter `2 * dim` per gradient.
//!
//! The line search enforces the strong Wolfe conditions following
//! Nocedal & Wright, Algorithms 3.5 and 3.6, with safeguarded quadratic
//! interpolation inside `zoom`.

use log::debug;

#[derive(Clone, Debug)]
pub struct BfgsConfig {
    pub max_iterations: usize,
    pub grad_tol: f64,
    /// Relative objective decrease below which an accepted step ends the run.
    pub f_rel_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub fd_step: f64,
    pub max_line_search: usize,
    /// Hard cap on objective calls (gradient stencils are not counted).
    pub max_objective_calls: Option<usize>,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        BfgsConfig {
            max_iterations: 200,
            grad_tol: 1e-8,
            f_rel_tol: 1e-12,
            c1: 1e-4,
            c2: 0.9,
            fd_step: 1e-6,
            max_line_search: 20,
            max_objective_calls: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    ObjectiveStalled,
    LineSearchFailed,
    MaxIterations,
    CallBudget,
}

#[derive(Clone, Debug)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub f_initial: f64,
    pub iterations: usize,
    pub objective_calls: usize,
    pub gradient_calls: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("objective returned a non-finite value after {objective_calls} calls")]
pub struct NonFiniteObjective {
    pub objective_calls: usize,
}

struct Counted<F> {
    f: F,
    objective_calls: usize,
    gradient_calls: usize,
    cap: Option<usize>,
    best: Option<(f64, Vec<f64>)>,
}

enum Eval {
    Value(f64),
    Exhausted,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn value(&mut self, x: &[f64]) -> Result<Eval, NonFiniteObjective> {
        if self.cap.is_some_and(|c| self.objective_calls >= c) {
            return Ok(Eval::Exhausted);
        }
        self.objective_calls += 1;
        let v = (self.f)(x);
        if !v.is_finite() {
            return Err(NonFiniteObjective {
                objective_calls: self.objective_calls,
            });
        }
        if self.best.as_ref().is_none_or(|(b, _)| v < *b) {
            self.best = Some((v, x.to_vec()));
        }
        Ok(Eval::Value(v))
    }

    fn gradient(&mut self, x: &[f64], h: f64) -> Result<Vec<f64>, NonFiniteObjective> {
        let mut probe = x.to_vec();
        let mut g = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            probe[i] = x[i] + h;
            let fp = (self.f)(&probe);
            probe[i] = x[i] - h;
            let fm = (self.f)(&probe);
            probe[i] = x[i];
            self.gradient_calls += 2;
            if !(fp.is_finite() && fm.is_finite()) {
                return Err(NonFiniteObjective {
                    objective_calls: self.objective_calls,
                });
            }
            g.push((fp - fm) / (2.0 * h));
        }
        Ok(g)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect()
}

struct Accepted {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
}

enum SearchResult {
    Accepted(Accepted),
    Failed,
    Exhausted,
}

/// Point evaluated during the search: step, value, directional derivative.
#[derive(Clone, Copy)]
struct Probe {
    a: f64,
    f: f64,
    d: f64,
}

struct LineSearch<'a, F> {
    oracle: &'a mut Counted<F>,
    cfg: &'a BfgsConfig,
    x: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    d0: f64,
}

impl<F: FnMut(&[f64]) -> f64> LineSearch<'_, F> {
    fn run(&mut self) -> Result<SearchResult, NonFiniteObjective> {
        let mut prev = Probe {
            a: 0.0,
            f: self.f0,
            d: self.d0,
        };
        let mut a = 1.0;
        for i in 0..self.cfg.max_line_search {
            let xa = axpy(self.x, a, self.dir);
            let fa = match self.oracle.value(&xa)? {
                Eval::Value(v) => v,
                Eval::Exhausted => return Ok(SearchResult::Exhausted),
            };
            if fa > self.f0 + self.cfg.c1 * a * self.d0 || (i > 0 && fa >= prev.f) {
                return self.zoom(
                    prev,
                    Probe {
                        a,
                        f: fa,
                        d: f64::NAN,
                    },
                );
            }
            let ga = self.oracle.gradient(&xa, self.cfg.fd_step)?;
            let da = dot(&ga, self.dir);
            if da.abs() <= -self.cfg.c2 * self.d0 {
                return Ok(SearchResult::Accepted(Accepted {
                    alpha: a,
                    f: fa,
                    g: ga,
                }));
            }
            let cur = Probe { a, f: fa, d: da };
            if da >= 0.0 {
                return self.zoom(cur, prev);
            }
            prev = cur;
            a *= 2.0;
        }
        Ok(SearchResult::Failed)
    }

    fn zoom(&mut self, mut lo: Probe, mut hi: Probe) -> Result<SearchResult, NonFiniteObjective> {
        for _ in 0..self.cfg.max_line_search {
            let width = hi.a - lo.a;
            // Quadratic through f(lo), f'(lo), f(hi); fall back to bisection.
            let denom = 2.0 * (hi.f - lo.f - lo.d * width);
            let mut a = if denom > 0.0 {
                lo.a - lo.d * width * width / denom
            } else {
                f64::NAN
            };
            let (left, right) = if lo.a < hi.a {
                (lo.a, hi.a)
            } else {
                (hi.a, lo.a)
            };
            let margin = 0.1 * (right - left);
            if !a.is_finite() || a < left + margin || a > right - margin {
                a = 0.5 * (lo.a + hi.a);
            }
            if (right - left) < 1e-14 * (1.0 + right.abs()) {
                break;
            }
            let xa = axpy(self.x, a, self.dir);
            let fa = match self.oracle.value(&xa)? {
                Eval::Value(v) => v,
                Eval::Exhausted => return Ok(SearchResult::Exhausted),
            };
            if fa > self.f0 + self.cfg.c1 * a * self.d0 || fa >= lo.f {
                hi = Probe {
                    a,
                    f: fa,
                    d: f64::NAN,
                };
                continue;
            }
            let ga = self.oracle.gradient(&xa, self.cfg.fd_step)?;
            let da = dot(&ga, self.dir);
            if da.abs() <= -self.cfg.c2 * self.d0 {
                return Ok(SearchResult::Accepted(Accepted {
                    alpha: a,
                    f: fa,
                    g: ga,
                }));
            }
            if da * (hi.a - lo.a) >= 0.0 {
                hi = lo;
            }
            lo = Probe { a, f: fa, d: da };
        }
        Ok(SearchResult::Failed)
    }
}

/// Minimizes `f` from `x0`. The returned point is the best one evaluated,
/// so `f <= f_initial` always holds.
pub fn minimize<F>(f: F, x0: &[f64], cfg: &BfgsConfig) -> Result<BfgsOutcome, NonFiniteObjective>
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut oracle = Counted {
        f,
        objective_calls: 0,
        gradient_calls: 0,
        cap: cfg.max_objective_calls,
        best: None,
    };
    let f_initial = match oracle.value(x0)? {
        Eval::Value(v) => v,
        Eval::Exhausted => {
            return Ok(BfgsOutcome {
                x: x0.to_vec(),
                f: f64::NAN,
                f_initial: f64::NAN,
                iterations: 0,
                objective_calls: 0,
                gradient_calls: 0,
                termination: Termination::CallBudget,
            })
        }
    };
    let mut x = x0.to_vec();
    let mut fx = f_initial;
    let mut g = oracle.gradient(&x, cfg.fd_step)?;
    // Inverse Hessian approximation, row-major.
    let mut hinv = identity(dim);
    let mut first_update = true;
    let mut iterations = 0;

    let termination = loop {
        if norm(&g) < cfg.grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= cfg.max_iterations {
            break Termination::MaxIterations;
        }
        let mut dir = mat_vec(&hinv, &g, dim);
        dir.iter_mut().for_each(|v| *v = -*v);
        let mut d0 = dot(&g, &dir);
        if d0 >= 0.0 || !d0.is_finite() {
            hinv = identity(dim);
            first_update = true;
            dir = g.iter().map(|v| -v).collect();
            d0 = dot(&g, &dir);
        }
        let mut search = LineSearch {
            oracle: &mut oracle,
            cfg,
            x: &x,
            dir: &dir,
            f0: fx,
            d0,
        };
        let step = match search.run()? {
            SearchResult::Accepted(s) => s,
            SearchResult::Failed => break Termination::LineSearchFailed,
            SearchResult::Exhausted => break Termination::CallBudget,
        };
        iterations += 1;
        let s: Vec<f64> = dir.iter().map(|d| step.alpha * d).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let x_new = axpy(&x, 1.0, &s);
        let decrease = fx - step.f;
        x = x_new;
        fx = step.f;
        g = step.g;
        if decrease <= cfg.f_rel_tol * (1.0 + fx.abs()) {
            break Termination::ObjectiveStalled;
        }
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if first_update {
                let scale = sy / dot(&y, &y);
                hinv = identity(dim);
                hinv.iter_mut().for_each(|v| *v *= scale);
                first_update = false;
            }
            bfgs_update(&mut hinv, &s, &y, sy, dim);
        }
    };
    debug!("bfgs stopped after {iterations} iterations ({termination:?}), f {f_initial} -> {fx}");
    let (f_best, x_best) = oracle.best.take().expect("at least one evaluation");
    let (x, f) = if f_best < fx {
        (x_best, f_best)
    } else {
        (x, fx)
    };
    Ok(BfgsOutcome {
        x,
        f,
        f_initial,
        iterations,
        objective_calls: oracle.objective_calls,
        gradient_calls: oracle.gradient_calls,
        termination,
    })
}

fn identity(dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim * dim];
    for i in 0..dim {
        m[i * dim + i] = 1.0;
    }
    m
}

fn mat_vec(m: &[f64], v: &[f64], dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| dot(&m[i * dim..(i + 1) * dim], v))
        .collect()
}

/// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, dim: usize) {
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y, dim);
    let yhy = dot(y, &hy);
    for i in 0..dim {
        for j in 0..dim {
            h[i * dim + j] +=
                -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

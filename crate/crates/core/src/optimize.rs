//! Newton-type minimization in an unconstrained (transformed) parameter
//! space. Gradients are analytic; the Hessian is a central finite difference
//! of the gradient. A steepest-descent step with backtracking takes over
//! whenever the Newton direction is unusable.

use crate::error::{EbnmError, Result};

pub const GRAD_TOL: f64 = 1e-8;
pub const REL_OBJ_TOL: f64 = 1e-10;
pub const MAX_ITER: usize = 500;
const MAX_STEP: f64 = 5.0;
const ARMIJO: f64 = 1e-4;

/// A smooth function to minimize, with its analytic gradient.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value_grad(&self, p: &[f64]) -> (f64, Vec<f64>);

    fn value(&self, p: &[f64]) -> f64 {
        self.value_grad(p).0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalMin {
    pub params: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value at every accepted iterate, starting point included.
    pub trace: Vec<f64>,
}

/// Central-difference Hessian of the analytic gradient, symmetrized.
pub fn fd_hessian<O: Objective + ?Sized>(obj: &O, p: &[f64]) -> Vec<Vec<f64>> {
    let d = p.len();
    let mut h = vec![vec![0.0; d]; d];
    let mut q = p.to_vec();
    for j in 0..d {
        let step = 1e-4 * p[j].abs().max(1.0);
        q[j] = p[j] + step;
        let (_, gp) = obj.value_grad(&q);
        q[j] = p[j] - step;
        let (_, gm) = obj.value_grad(&q);
        q[j] = p[j];
        for i in 0..d {
            h[i][j] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (h[i][j] + h[j][i]);
            h[i][j] = v;
            h[j][i] = v;
        }
    }
    h
}

/// Solves `a x = b` for symmetric positive definite `a`; `None` otherwise.
pub fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    Some(x)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Backtracking line search along `dir`; returns the accepted point.
fn line_search<O: Objective + ?Sized>(
    obj: &O,
    p: &[f64],
    f: f64,
    g: &[f64],
    dir: &[f64],
) -> Option<(Vec<f64>, f64, Vec<f64>)> {
    let slope = dot(g, dir);
    if !(slope < 0.0) {
        return None;
    }
    let mut t = 1.0;
    for _ in 0..60 {
        let q: Vec<f64> = p.iter().zip(dir).map(|(a, d)| a + t * d).collect();
        let (fq, gq) = obj.value_grad(&q);
        if fq.is_finite() && fq <= f + ARMIJO * t * slope {
            return Some((q, fq, gq));
        }
        t *= 0.5;
    }
    None
}

fn cap_step(mut d: Vec<f64>) -> Vec<f64> {
    let m = inf_norm(&d);
    if m > MAX_STEP {
        let c = MAX_STEP / m;
        d.iter_mut().for_each(|v| *v *= c);
    }
    d
}

/// Local minimization from one start.
pub fn minimize<O: Objective + ?Sized>(obj: &O, start: &[f64]) -> Result<LocalMin> {
    let mut p = start.to_vec();
    let (mut f, mut g) = obj.value_grad(&p);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(EbnmError::OptimizerFailed {
            message: "objective not finite at start".into(),
            best: p,
            objective: f,
        });
    }
    let mut trace = vec![f];
    let mut small_changes = 0;
    let mut iterations = 0;
    let mut converged = p.is_empty();
    while !converged && iterations < MAX_ITER {
        if inf_norm(&g) <= GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let h = fd_hessian(obj, &p);
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let newton = cholesky_solve(&h, &neg_g).filter(|d| dot(d, &g) < 0.0);
        let mut accepted = None;
        let mut newton_step = false;
        if let Some(d) = newton {
            accepted = line_search(obj, &p, f, &g, &cap_step(d));
            newton_step = accepted.is_some();
        }
        if accepted.is_none() {
            let scale = 1.0 / inf_norm(&g).max(1.0);
            let d: Vec<f64> = g.iter().map(|v| -v * scale).collect();
            accepted = line_search(obj, &p, f, &g, &cap_step(d));
        }
        let Some((q, fq, gq)) = accepted else {
            // No decrease is possible at working precision.
            converged = true;
            break;
        };
        let rel = (f - fq).abs() / f.abs().max(1.0);
        p = q;
        f = fq;
        g = gq;
        trace.push(f);
        if rel <= REL_OBJ_TOL {
            small_changes += 1;
            if newton_step || small_changes >= 2 {
                converged = true;
            }
        } else {
            small_changes = 0;
        }
    }
    if inf_norm(&g) <= GRAD_TOL {
        converged = true;
    }
    Ok(LocalMin {
        params: p,
        value: f,
        iterations,
        converged,
        trace,
    })
}

/// Best local minimum over several starts.
///
/// Starts at which the objective is not finite are skipped. Fails when no
/// start converges; the error carries the best iterate seen.
pub fn optimize_transformed<O: Objective + ?Sized>(obj: &O, starts: &[Vec<f64>]) -> Result<LocalMin> {
    let mut best: Option<LocalMin> = None;
    let mut best_failed: Option<LocalMin> = None;
    for start in starts {
        let Ok(run) = minimize(obj, start) else {
            continue;
        };
        let slot = if run.converged { &mut best } else { &mut best_failed };
        if slot.as_ref().is_none_or(|b| run.value < b.value) {
            *slot = Some(run);
        }
    }
    match (best, best_failed) {
        (Some(b), _) => Ok(b),
        (None, Some(b)) => Err(EbnmError::OptimizerFailed {
            message: format!("no start converged within {MAX_ITER} iterations"),
            best: b.params,
            objective: b.value,
        }),
        (None, None) => Err(EbnmError::OptimizerFailed {
            message: "objective not finite at any start".into(),
            best: starts.first().cloned().unwrap_or_default(),
            objective: f64::NAN,
        }),
    }
}

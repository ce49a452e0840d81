//! Quasi-Newton (BFGS) minimization with central-difference gradients.

/// Tuning knobs for [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the Euclidean norm of the gradient falls below this.
    pub grad_tol: f64,
    /// Stop when no coordinate moves more than this in an accepted step.
    pub step_tol: f64,
    /// Central-difference step, scaled by `1 + |x_i|`.
    pub fd_step: f64,
    /// Iterates are projected onto `[-bound, bound]^n`.
    pub bound: f64,
    /// Longest step (infinity norm) tried by the line search.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iter: 10_000,
            grad_tol: 1e-6,
            step_tol: 1e-9,
            fd_step: 1e-5,
            bound: 30.0,
            max_step: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Gradient,
    Step,
    LineSearch,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub stop: StopReason,
}

impl BfgsOutcome {
    pub fn converged(&self) -> bool {
        matches!(self.stop, StopReason::Gradient | StopReason::Step)
    }
}

/// Central-difference gradient with per-coordinate step `h * (1 + |x_i|)`.
pub fn central_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let step = h * (1.0 + x[i].abs());
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// In-place inverse-Hessian update `H <- (I - rho s y') H (I - rho y s') + rho s s'`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Minimizes `f` from `x0`.
///
/// A non-finite objective value is treated as infeasible by the line search.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &BfgsOptions) -> BfgsOutcome {
    let n = x0.len();
    let project = |x: &mut [f64]| {
        for v in x.iter_mut() {
            *v = v.clamp(-opts.bound, opts.bound);
        }
    };
    let mut x = x0.to_vec();
    project(&mut x);
    let mut fx = f(&x);
    let mut g = central_gradient(&f, &x, opts.fd_step);
    let mut h = identity(n);
    let mut fresh = true;
    let mut iterations = 0;

    let stop = loop {
        let gnorm = norm(&g);
        if n == 0 || gnorm < opts.grad_tol {
            break StopReason::Gradient;
        }
        if iterations >= opts.max_iter {
            break StopReason::MaxIter;
        }
        iterations += 1;

        let mut d: Vec<f64> = mat_vec(&h, &g).into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &d);
        if slope >= 0.0 || slope.is_nan() {
            h = identity(n);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let longest = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut alpha = if longest > opts.max_step {
            opts.max_step / longest
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            project(&mut trial);
            let ft = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                break StopReason::LineSearch;
            }
            h = identity(n);
            fresh = true;
            continue;
        };

        let g_new = central_gradient(&f, &x_new, opts.fd_step);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if fresh {
                let scale = sy / dot(&y, &y);
                for (i, row) in h.iter_mut().enumerate() {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    row[i] = scale;
                }
                fresh = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
        let max_move = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        x = x_new;
        fx = f_new;
        g = g_new;
        if norm(&g) < opts.grad_tol {
            break StopReason::Gradient;
        }
        if max_move < opts.step_tol {
            break StopReason::Step;
        }
    };

    BfgsOutcome {
        grad_norm: norm(&g),
        x,
        f: fx,
        iterations,
        stop,
    }
}

//! Barzilai-Borwein gradient descent with Armijo backtracking on a flat
//! parameter vector.

/// Options of [`bb_descent`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOptions {
    pub max_iter: usize,
    /// Stop when the Euclidean norm of the free gradient drops below this.
    pub grad_tol: f64,
    pub armijo_c: f64,
    /// Step used on the first iteration and after a failed BB estimate.
    pub initial_step: f64,
    /// Declare stagnation when the energy decreased by less than
    /// `stall_rtol * |f|` over the last `stall_window` iterations.
    pub stall_window: usize,
    pub stall_rtol: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            max_iter: 50_000,
            grad_tol: 1e-8,
            armijo_c: 1e-4,
            initial_step: 1e-3,
            stall_window: 500,
            stall_rtol: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Gradient tolerance reached.
    pub converged: bool,
    /// Progress fell to roundoff level (flat energy or line-search failure).
    pub stalled: bool,
    /// `f` at the start and after every accepted step.
    pub trace: Vec<f64>,
}

fn masked_norm(g: &[f64], free: Option<&[bool]>) -> f64 {
    match free {
        Some(m) => g
            .iter()
            .zip(m)
            .filter(|(_, &f)| f)
            .map(|(x, _)| x * x)
            .sum::<f64>()
            .sqrt(),
        None => g.iter().map(|x| x * x).sum::<f64>().sqrt(),
    }
}

/// Minimizes `f` from `x0`. `eval(x, grad)` returns `f(x)` and writes the
/// gradient. Entries with `free[k] == false` are never modified. `precond`
/// is an optional positive diagonal scaling of the search direction.
///
/// Every accepted step satisfies the Armijo condition, so the returned energy
/// sequence is nonincreasing.
pub fn bb_descent<F>(
    x0: Vec<f64>,
    free: Option<&[bool]>,
    precond: Option<&[f64]>,
    mut eval: F,
    opts: &DescentOptions,
) -> DescentResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = eval(&x, &mut g);
    let is_free = |k: usize| free.is_none_or(|m| m[k]);
    let pk = |k: usize| precond.map_or(1.0, |p| p[k]);

    let mut d = vec![0.0; n];
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];
    let mut step = opts.initial_step;
    let mut history = std::collections::VecDeque::with_capacity(opts.stall_window + 1);
    let mut it = 0;
    let mut stalled = false;
    let mut gnorm = masked_norm(&g, free);
    let mut trace = vec![f];
    while it < opts.max_iter && gnorm > opts.grad_tol {
        let mut slope = 0.0;
        for k in 0..n {
            d[k] = if is_free(k) { -pk(k) * g[k] } else { 0.0 };
            slope += g[k] * d[k];
        }
        if slope >= 0.0 {
            stalled = true;
            break;
        }
        let mut t = step;
        let mut accepted = false;
        for _ in 0..60 {
            for k in 0..n {
                xn[k] = x[k] + t * d[k];
            }
            let fnew = eval(&xn, &mut gn);
            if fnew.is_finite() && fnew <= f + opts.armijo_c * t * slope {
                // BB step in the preconditioned metric, alternating BB1 / BB2
                let (mut ss, mut sy, mut yy) = (0.0, 0.0, 0.0);
                for k in 0..n {
                    if !is_free(k) {
                        continue;
                    }
                    let s = xn[k] - x[k];
                    let y = gn[k] - g[k];
                    ss += s * s / pk(k);
                    sy += s * y;
                    yy += y * y * pk(k);
                }
                step = if sy > 0.0 {
                    if it % 2 == 0 {
                        ss / sy
                    } else {
                        sy / yy
                    }
                } else {
                    t * 2.0
                };
                std::mem::swap(&mut x, &mut xn);
                std::mem::swap(&mut g, &mut gn);
                f = fnew;
                trace.push(f);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        it += 1;
        if !accepted {
            stalled = true;
            break;
        }
        gnorm = masked_norm(&g, free);
        history.push_back(f);
        if history.len() > opts.stall_window {
            let old = history.pop_front().unwrap_or(f);
            if old - f <= opts.stall_rtol * f.abs().max(1e-300) {
                stalled = true;
                break;
            }
        }
    }
    DescentResult {
        converged: gnorm <= opts.grad_tol,
        x,
        f,
        iterations: it,
        grad_norm: gnorm,
        stalled,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let diag: Vec<f64> = (1..=50).map(|k| k as f64).collect();
        let r = bb_descent(
            vec![1.0; 50],
            None,
            None,
            |x, g| {
                let mut f = 0.0;
                for k in 0..x.len() {
                    g[k] = diag[k] * x[k];
                    f += 0.5 * diag[k] * x[k] * x[k];
                }
                f
            },
            &DescentOptions {
                grad_tol: 1e-10,
                ..Default::default()
            },
        );
        assert!(r.converged);
        assert!(r.x.iter().all(|v| v.abs() < 1e-9));
        assert_eq!(r.trace.len(), r.iterations + 1);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rosenbrock_with_frozen_coordinate() {
        let r = bb_descent(
            vec![-1.2, 1.0, 7.0],
            Some(&[true, true, false]),
            None,
            |x, g| {
                let f = (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
                g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
                g[1] = 200.0 * (x[1] - x[0] * x[0]);
                g[2] = 1.0;
                f
            },
            &DescentOptions {
                grad_tol: 1e-9,
                ..Default::default()
            },
        );
        assert!(r.converged, "{r:?}");
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
        assert_eq!(r.x[2], 7.0);
    }

    #[test]
    fn already_optimal() {
        let r = bb_descent(vec![0.0], None, None, |x, g| {
            g[0] = 2.0 * x[0];
            x[0] * x[0]
        }, &DescentOptions::default());
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
    }
}

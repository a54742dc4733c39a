//! Quasi-Newton minimizer with finite-difference derivatives.
//!
//! BFGS on the unconstrained scale with backtracking line search. Gradients
//! are central differences with step 1e-6 * (1 + |x_i|); the Hessian uses a
//! larger step (~eps^{1/4}) because second differences amplify rounding.

pub const GRAD_STEP: f64 = 1e-6;
pub const HESS_STEP: f64 = 3e-5;

pub struct MinResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn guard(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Central-difference gradient.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], rel: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = rel * (1.0 + x[i].abs());
        xp[i] = x[i] + h;
        let fp = guard(f(&xp));
        xp[i] = x[i] - h;
        let fm = guard(f(&xp));
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Symmetric central-difference Hessian (dense, row-major).
pub fn fd_hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], rel: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let f0 = guard(f(x));
    let h: Vec<f64> = x.iter().map(|&xi| rel * (1.0 + xi.abs())).collect();
    let mut hess = vec![vec![0.0; n]; n];
    let mut xp = x.to_vec();
    for i in 0..n {
        xp[i] = x[i] + h[i];
        let fp = guard(f(&xp));
        xp[i] = x[i] - h[i];
        let fm = guard(f(&xp));
        xp[i] = x[i];
        hess[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            xp[i] = x[i] + h[i];
            xp[j] = x[j] + h[j];
            let fpp = guard(f(&xp));
            xp[j] = x[j] - h[j];
            let fpm = guard(f(&xp));
            xp[i] = x[i] - h[i];
            xp[j] = x[j] + h[j];
            let fmp = guard(f(&xp));
            xp[j] = x[j] - h[j];
            let fmm = guard(f(&xp));
            xp[i] = x[i];
            xp[j] = x[j];
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    hess
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve A d = b by Gaussian elimination with partial pivoting; A is tiny.
fn solve_linear(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let (pivot, pval) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if pval < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut d = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = rhs[r];
        for c in r + 1..n {
            s -= m[r][c] * d[c];
        }
        d[r] = s / m[r][r];
    }
    if d.iter().all(|v| v.is_finite()) {
        Some(d)
    } else {
        None
    }
}

/// Newton refinement near an optimum, where line searches stall because the
/// objective changes less than its evaluation rounding. A Levenberg ladder
/// handles (near-)singular curvature, e.g. at threshold-ordering boundaries.
/// Steps are kept only while the measured gradient norm shrinks.
fn newton_polish<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], g0: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = g0.to_vec();
    'outer: for _ in 0..6 {
        let gnorm = norm2(&g);
        let hess = fd_hessian(f, &x, HESS_STEP);
        let scale = (0..n).map(|i| hess[i][i].abs()).fold(1e-12, f64::max);
        for lambda in [0.0, 1e-8, 1e-5, 1e-2, 1.0] {
            let mut damped = hess.clone();
            for i in 0..n {
                damped[i][i] += lambda * scale;
            }
            let Some(step) = solve_linear(&damped, &g) else {
                continue;
            };
            let x_try: Vec<f64> = x.iter().zip(&step).map(|(xi, di)| xi - di).collect();
            if !x_try.iter().all(|v| v.is_finite()) || !guard(f(&x_try)).is_finite() {
                continue;
            }
            let g_try = fd_gradient(f, &x_try, GRAD_STEP);
            if norm2(&g_try) < 0.9 * gnorm {
                x = x_try;
                g = g_try;
                continue 'outer;
            }
        }
        break;
    }
    (x, g)
}

/// Minimize `f` starting from `x0`. Convergence is declared when the
/// finite-difference gradient norm drops to `tol`.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], tol: f64, max_iter: usize) -> MinResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = guard(f(&x));
    let mut g = fd_gradient(&f, &x, GRAD_STEP);
    // Inverse Hessian approximation.
    let mut h_inv = vec![vec![0.0; n]; n];
    for i in 0..n {
        h_inv[i][i] = 1.0;
    }
    let mut iterations = 0;
    let mut stalls = 0;

    while iterations < max_iter {
        let gnorm = norm2(&g);
        if gnorm <= tol {
            return MinResult {
                x,
                f: fx,
                grad_norm: gnorm,
                grad: g,
                iterations,
                converged: true,
            };
        }
        // Search direction d = -H_inv g.
        let mut d = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                d[i] -= h_inv[i][j] * g[j];
            }
        }
        let mut slope: f64 = d.iter().zip(&g).map(|(di, gi)| di * gi).sum();
        if !(slope < 0.0) {
            // Not a descent direction: reset to steepest descent.
            for i in 0..n {
                for j in 0..n {
                    h_inv[i][j] = if i == j { 1.0 } else { 0.0 };
                }
            }
            for i in 0..n {
                d[i] = -g[i];
            }
            slope = -gnorm * gnorm;
        }

        // Backtracking Armijo line search.
        let mut alpha = 1.0;
        let mut accepted = false;
        let mut x_new = x.clone();
        let mut f_new = fx;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + alpha * d[i];
            }
            f_new = guard(f(&x_new));
            if f_new <= fx + 1e-4 * alpha * slope {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            stalls += 1;
            if stalls >= 2 {
                // Objective improvements are below evaluation rounding; try a
                // few Newton polish steps on the local quadratic model,
                // accepted only if they shrink the measured gradient.
                let (px, pg) = newton_polish(&f, &x, &g);
                let gnorm = norm2(&pg);
                return MinResult {
                    f: guard(f(&px)),
                    x: px,
                    grad_norm: gnorm,
                    grad: pg,
                    iterations,
                    converged: gnorm <= tol,
                };
            }
            // Reset curvature and retry once from steepest descent.
            for i in 0..n {
                for j in 0..n {
                    h_inv[i][j] = if i == j { 1.0 } else { 0.0 };
                }
            }
            iterations += 1;
            continue;
        }
        stalls = 0;

        let g_new = fd_gradient(&f, &x_new, GRAD_STEP);
        // BFGS update of the inverse Hessian.
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 * norm2(&s) * norm2(&y) {
            let rho = 1.0 / sy;
            // H' = (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            let mut hy = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    hy[i] += h_inv[i][j] * y[j];
                }
            }
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h_inv[i][j] += rho * rho * yhy * s[i] * s[j]
                        - rho * (s[i] * hy[j] + hy[i] * s[j])
                        + rho * s[i] * s[j];
                }
            }
        }

        let f_drop = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        iterations += 1;
        if f_drop.abs() <= 1e-15 * (1.0 + fx.abs()) && norm2(&s) <= 1e-12 {
            break;
        }
    }

    // Iteration budget exhausted (or progress stalled): polish and report.
    if norm2(&g) > tol {
        let (px, pg) = newton_polish(&f, &x, &g);
        let gnorm = norm2(&pg);
        return MinResult {
            f: guard(f(&px)),
            x: px,
            grad_norm: gnorm,
            grad: pg,
            iterations,
            converged: gnorm <= tol,
        };
    }
    let gnorm = norm2(&g);
    MinResult {
        x,
        f: fx,
        grad_norm: gnorm,
        grad: g,
        iterations,
        converged: gnorm <= tol,
    }
}

//! Dense quasi-Newton minimization for small unconstrained problems.

use crate::scalar::Real;

/// Smooth objective with an analytic gradient.
pub trait Objective<T> {
    fn dim(&self) -> usize;
    /// Value at `x`; writes the gradient into `grad`.
    fn eval(&self, x: &[T], grad: &mut [T]) -> T;
}

#[derive(Clone, Copy, Debug)]
pub struct BfgsOptions<T> {
    /// Stop once the max-norm of the gradient is below this.
    pub gradient_tol: T,
    pub max_iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BfgsStatus {
    Converged,
    /// Line search could not make progress; usually the gradient is at
    /// round-off level.
    Stalled,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct BfgsReport<T> {
    pub value: T,
    pub gradient_norm: T,
    pub iterations: usize,
    pub status: BfgsStatus,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn max_abs<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// Minimizes `f` starting from `x` (updated in place) with BFGS on a dense
/// inverse-Hessian approximation.
pub fn minimize_bfgs<T: Real, F: Objective<T>>(f: &F, x: &mut [T], opts: &BfgsOptions<T>) -> BfgsReport<T> {
    let n = f.dim();
    debug_assert_eq!(x.len(), n);
    let mut h = vec![T::zero(); n * n];
    let reset = |h: &mut [T]| {
        h.iter_mut().for_each(|v| *v = T::zero());
        for i in 0..n {
            h[i * n + i] = T::one();
        }
    };
    reset(&mut h);

    let mut g = vec![T::zero(); n];
    let mut fx = f.eval(x, &mut g);
    let mut dir = vec![T::zero(); n];
    let mut x_new = vec![T::zero(); n];
    let mut g_new = vec![T::zero(); n];
    let mut s = vec![T::zero(); n];
    let mut y = vec![T::zero(); n];
    let mut hy = vec![T::zero(); n];
    let mut first_step = true;
    let mut stalls = 0;

    for iter in 0..opts.max_iterations {
        let gnorm = max_abs(&g);
        if gnorm <= opts.gradient_tol {
            return BfgsReport {
                value: fx,
                gradient_norm: gnorm,
                iterations: iter,
                status: BfgsStatus::Converged,
            };
        }
        for i in 0..n {
            dir[i] = -(0..n).map(|j| h[i * n + j] * g[j]).sum::<T>();
        }
        let mut slope = dot(&dir, &g);
        if slope >= T::zero() {
            reset(&mut h);
            dir.iter_mut().zip(&g).for_each(|(d, &gi)| *d = -gi);
            slope = dot(&dir, &g);
        }
        let alpha0 = if first_step {
            (T::one() / max_abs(&dir)).min(T::one())
        } else {
            T::one()
        };
        match line_search(f, x, fx, &g, &dir, slope, alpha0, &mut x_new, &mut g_new) {
            Some(f_new) => {
                for i in 0..n {
                    s[i] = x_new[i] - x[i];
                    y[i] = g_new[i] - g[i];
                }
                let sy = dot(&s, &y);
                if sy > T::epsilon() * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                    if first_step {
                        // Scale the initial inverse Hessian before the first update.
                        let scale = sy / dot(&y, &y);
                        h.iter_mut().for_each(|v| *v *= scale);
                        first_step = false;
                    }
                    for i in 0..n {
                        hy[i] = (0..n).map(|j| h[i * n + j] * y[j]).sum();
                    }
                    let yhy = dot(&y, &hy);
                    let rho = T::one() / sy;
                    let coef = (T::one() + yhy * rho) * rho;
                    for i in 0..n {
                        for j in 0..n {
                            h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                        }
                    }
                }
                x.copy_from_slice(&x_new);
                g.copy_from_slice(&g_new);
                let decreased = f_new < fx;
                fx = f_new;
                stalls = if decreased { 0 } else { stalls + 1 };
                if stalls > 3 {
                    return BfgsReport {
                        value: fx,
                        gradient_norm: max_abs(&g),
                        iterations: iter + 1,
                        status: BfgsStatus::Stalled,
                    };
                }
            }
            None => {
                if first_step {
                    return BfgsReport {
                        value: fx,
                        gradient_norm: gnorm,
                        iterations: iter,
                        status: BfgsStatus::Stalled,
                    };
                }
                // Retry once along steepest descent with a fresh Hessian.
                reset(&mut h);
                first_step = true;
            }
        }
    }
    BfgsReport {
        value: fx,
        gradient_norm: max_abs(&g),
        iterations: opts.max_iterations,
        status: BfgsStatus::MaxIterations,
    }
}

/// Strong-Wolfe line search (bracketing + zoom by safeguarded cubic
/// interpolation). Returns the new value with `x_new`/`g_new` filled in.
#[allow(clippy::too_many_arguments)]
fn line_search<T: Real, F: Objective<T>>(
    f: &F,
    x: &[T],
    f0: T,
    g0: &[T],
    dir: &[T],
    slope0: T,
    alpha0: T,
    x_new: &mut [T],
    g_new: &mut [T],
) -> Option<T> {
    let c1 = T::lit(1e-4);
    let c2 = T::lit(0.9);
    let _ = g0;
    let mut eval = |alpha: T, xn: &mut [T], gn: &mut [T]| -> (T, T) {
        for i in 0..x.len() {
            xn[i] = x[i] + alpha * dir[i];
        }
        let v = f.eval(xn, gn);
        (v, dot(gn, dir))
    };

    let mut a_prev = T::zero();
    let mut f_prev = f0;
    let mut d_prev = slope0;
    let mut a = alpha0;
    for i in 0..40 {
        let (fa, da) = eval(a, x_new, g_new);
        if !fa.is_finite() {
            a = (a_prev + a) / T::lit(2.0);
            if i > 30 {
                return None;
            }
            continue;
        }
        if fa > f0 + c1 * a * slope0 || (i > 0 && fa >= f_prev) {
            return zoom(&mut eval, f0, slope0, a_prev, f_prev, d_prev, a, fa, da, x_new, g_new);
        }
        if da.abs() <= -c2 * slope0 {
            return Some(fa);
        }
        if da >= T::zero() {
            return zoom(&mut eval, f0, slope0, a, fa, da, a_prev, f_prev, d_prev, x_new, g_new);
        }
        a_prev = a;
        f_prev = fa;
        d_prev = da;
        a *= T::lit(2.0);
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn zoom<T: Real, E: FnMut(T, &mut [T], &mut [T]) -> (T, T)>(
    eval: &mut E,
    f0: T,
    slope0: T,
    mut a_lo: T,
    mut f_lo: T,
    mut d_lo: T,
    mut a_hi: T,
    mut f_hi: T,
    mut d_hi: T,
    x_new: &mut [T],
    g_new: &mut [T],
) -> Option<T> {
    let c1 = T::lit(1e-4);
    let c2 = T::lit(0.9);
    let mut best: Option<(T, T)> = None;
    for _ in 0..60 {
        let a = cubic_min(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi);
        let (fa, da) = eval(a, x_new, g_new);
        if fa.is_finite() && fa < f0 && best.map_or(true, |(_, fb)| fa < fb) {
            best = Some((a, fa));
        }
        if !fa.is_finite() || fa > f0 + c1 * a * slope0 || fa >= f_lo {
            a_hi = a;
            f_hi = fa;
            d_hi = da;
        } else {
            if da.abs() <= -c2 * slope0 {
                return Some(fa);
            }
            if da * (a_hi - a_lo) >= T::zero() {
                a_hi = a_lo;
                f_hi = f_lo;
                d_hi = d_lo;
            }
            a_lo = a;
            f_lo = fa;
            d_lo = da;
        }
        if (a_hi - a_lo).abs() <= T::epsilon() * a_lo.abs().max(T::epsilon()) {
            break;
        }
    }
    // Accept the best sufficient-decrease point found, if any.
    let (a, fa) = best?;
    if a == T::zero() {
        return None;
    }
    let (fa2, _) = eval(a, x_new, g_new);
    debug_assert!(fa2 == fa);
    Some(fa2)
}

/// Minimizer of the cubic interpolating both endpoints, kept inside the
/// central part of the bracket.
fn cubic_min<T: Real>(a: T, fa: T, da: T, b: T, fb: T, db: T) -> T {
    let lo = a.min(b);
    let hi = a.max(b);
    let width = hi - lo;
    let mid = (a + b) / T::lit(2.0);
    if !(fb.is_finite() && db.is_finite()) {
        return mid;
    }
    let d1 = da + db - T::lit(3.0) * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < T::zero() {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + T::lit(2.0) * d2);
    let margin = T::lit(0.1) * width;
    if !t.is_finite() || t < lo + margin || t > hi - margin {
        mid
    } else {
        t
    }
}

/// Newton iterations on the gradient with a central-difference Hessian.
///
/// Used after BFGS stalls: steps are accepted when they shrink the gradient
/// max-norm, which keeps improving where the objective value has already hit
/// round-off. Returns the final gradient max-norm.
pub fn polish_newton<T: Real, F: Objective<T>>(f: &F, x: &mut [T], gradient_tol: T, max_iterations: usize) -> T {
    let n = f.dim();
    let mut g = vec![T::zero(); n];
    f.eval(x, &mut g);
    let mut gnorm = max_abs(&g);
    let mut gp = vec![T::zero(); n];
    let mut gm = vec![T::zero(); n];
    let mut trial = vec![T::zero(); n];
    let mut gt = vec![T::zero(); n];
    for _ in 0..max_iterations {
        if gnorm <= gradient_tol {
            break;
        }
        let mut hess = vec![vec![T::zero(); n]; n];
        for j in 0..n {
            let h = T::epsilon().cbrt() * (T::one() + x[j].abs());
            let xj = x[j];
            x[j] = xj + h;
            f.eval(x, &mut gp);
            x[j] = xj - h;
            f.eval(x, &mut gm);
            x[j] = xj;
            for i in 0..n {
                hess[i][j] = (gp[i] - gm[i]) / (h + h);
            }
        }
        for i in 0..n {
            for j in 0..i {
                let avg = (hess[i][j] + hess[j][i]) * T::lit(0.5);
                hess[i][j] = avg;
                hess[j][i] = avg;
            }
        }
        let rhs: Vec<T> = g.iter().map(|&v| -v).collect();
        let Some(step) = solve_dense(hess, rhs) else { break };
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..20 {
            for i in 0..n {
                trial[i] = x[i] + t * step[i];
            }
            f.eval(&trial, &mut gt);
            let tn = max_abs(&gt);
            if tn.is_finite() && tn < gnorm {
                x.copy_from_slice(&trial);
                g.copy_from_slice(&gt);
                gnorm = tn;
                accepted = true;
                break;
            }
            t *= T::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    gnorm
}

/// Gaussian elimination with partial pivoting; `None` if singular.
pub fn solve_dense<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()));
    if !(scale > T::zero()) {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if !(a[piv][col].abs() > scale * T::epsilon()) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= factor * v;
            }
            let v = b[col];
            b[row] -= factor * v;
        }
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let s: T = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

//! BFGS minimization on small fixed-dimension problems.

/// How the gradient is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Central differences with step `ε^(1/3)·(1+|x|)`.
    #[default]
    CentralDifference,
    /// Analytic gradient supplied by the objective.
    Analytic,
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    /// Stop when `‖∇f‖ / scale` falls below this.
    pub grad_tol: f64,
    /// Divides the gradient norm, e.g. the sample size for a log-likelihood.
    pub scale: f64,
    pub max_iter: usize,
    /// Largest step accepted in any coordinate.
    pub max_step: f64,
    /// Gradient level accepted as converged after the line search stalls.
    pub stall_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            scale: 1.0,
            max_iter: 500,
            max_step: 2.0,
            stall_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOutcome<const N: usize> {
    pub x: [f64; N],
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Objective with an optional analytic gradient.
pub trait Objective<const N: usize> {
    fn value(&self, x: &[f64; N]) -> f64;

    fn gradient(&self, _x: &[f64; N]) -> Option<[f64; N]> {
        None
    }
}

impl<const N: usize, F: Fn(&[f64; N]) -> f64> Objective<N> for F {
    fn value(&self, x: &[f64; N]) -> f64 {
        self(x)
    }
}

pub fn central_difference<const N: usize, O: Objective<N> + ?Sized>(f: &O, x: &[f64; N]) -> [f64; N] {
    let cbrt_eps = f64::EPSILON.cbrt();
    let mut g = [0.0; N];
    for i in 0..N {
        let h = cbrt_eps * (1.0 + x[i].abs());
        let mut xp = *x;
        let mut xm = *x;
        xp[i] += h;
        xm[i] -= h;
        let h2 = xp[i] - xm[i];
        g[i] = (f.value(&xp) - f.value(&xm)) / h2;
    }
    g
}

fn dot<const N: usize>(a: &[f64; N], b: &[f64; N]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm<const N: usize>(a: &[f64; N]) -> f64 {
    dot(a, a).sqrt()
}

fn identity<const N: usize>() -> [[f64; N]; N] {
    let mut m = [[0.0; N]; N];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn mat_vec<const N: usize>(m: &[[f64; N]; N], v: &[f64; N]) -> [f64; N] {
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = dot(&m[i], v);
    }
    out
}

/// Minimize `f` from `x0` with BFGS and a backtracking Armijo line search.
pub fn minimize<const N: usize, O: Objective<N> + ?Sized>(
    f: &O,
    x0: [f64; N],
    mode: GradientMode,
    opts: &BfgsOptions,
) -> BfgsOutcome<N> {
    let grad = |x: &[f64; N]| match mode {
        GradientMode::Analytic => f.gradient(x).unwrap_or_else(|| central_difference(f, x)),
        GradientMode::CentralDifference => central_difference(f, x),
    };

    let mut x = x0;
    let mut fx = f.value(&x);
    let mut g = grad(&x);
    let mut h_inv = identity::<N>();
    let mut reset_pending = false;

    for iter in 0..opts.max_iter {
        let gnorm = norm(&g) / opts.scale;
        if gnorm < opts.grad_tol {
            return BfgsOutcome { x, value: fx, grad_norm: gnorm, iterations: iter, converged: true };
        }

        let mut dir = mat_vec(&h_inv, &g).map(|v| -v);
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            h_inv = identity();
            dir = g.map(|v| -v);
            slope = -dot(&g, &g);
        }
        let longest = dir.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut t = if longest > opts.max_step { opts.max_step / longest } else { 1.0 };

        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = x;
            for i in 0..N {
                trial[i] += t * dir[i];
            }
            let ft = f.value(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }

        let Some((x_new, f_new)) = accepted else {
            if !reset_pending {
                h_inv = identity();
                reset_pending = true;
                continue;
            }
            return BfgsOutcome {
                x,
                value: fx,
                grad_norm: gnorm,
                iterations: iter,
                converged: gnorm < opts.stall_tol,
            };
        };
        reset_pending = false;

        let g_new = grad(&x_new);
        let mut s = [0.0; N];
        let mut y = [0.0; N];
        for i in 0..N {
            s[i] = x_new[i] - x[i];
            y[i] = g_new[i] - g[i];
        }
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if iter == 0 {
                // Shanno scaling of the initial inverse Hessian.
                let scale = sy / dot(&y, &y);
                h_inv = identity();
                for (i, row) in h_inv.iter_mut().enumerate() {
                    row[i] = scale;
                }
            }
            let rho = 1.0 / sy;
            let hy = mat_vec(&h_inv, &y);
            let yhy = dot(&y, &hy);
            for i in 0..N {
                for j in 0..N {
                    h_inv[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }

        let improvement = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;

        if improvement.abs() <= f64::EPSILON * fx.abs().max(1.0) {
            let gnorm = norm(&g) / opts.scale;
            if gnorm < opts.stall_tol {
                return BfgsOutcome { x, value: fx, grad_norm: gnorm, iterations: iter + 1, converged: true };
            }
        }
    }

    BfgsOutcome {
        x,
        value: fx,
        grad_norm: norm(&g) / opts.scale,
        iterations: opts.max_iter,
        converged: false,
    }
}

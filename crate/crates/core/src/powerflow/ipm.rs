//! Primal-dual interior-point method for dense nonlinear programs
//!
//! ```text
//! min f(x)  s.t.  g(x) = 0,  h(x) <= 0
//! ```
//!
//! Inequalities get slacks `z > 0` with `h(x) + z = 0`; each Newton step
//! solves the reduced KKT system
//!
//! ```text
//! [ Lxx + Jh' Z^-1 M Jh   Jg' ] [dx  ]   [ -(Lx + Jh' Z^-1 (M h + gamma e)) ]
//! [ Jg                    0   ] [dlam] = [ -g                              ]
//! ```
//!
//! followed by a fraction-to-boundary step on the primal and dual sides
//! separately and a barrier update `gamma = sigma z'mu / n_ineq`.

use nalgebra::{DMatrix, DVector};

/// Function values and first derivatives at a point. Jacobians are stored
/// with one row per constraint.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub f: f64,
    pub df: DVector<f64>,
    pub g: DVector<f64>,
    pub jg: DMatrix<f64>,
    pub h: DVector<f64>,
    pub jh: DMatrix<f64>,
}

pub trait Nlp {
    fn n_vars(&self) -> usize;
    fn evaluate(&self, x: &DVector<f64>) -> Evaluation;
    /// Hessian of `f + lam' g + mu' h`.
    fn hessian(&self, x: &DVector<f64>, lam: &DVector<f64>, mu: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmOptions {
    pub feas_tol: f64,
    pub grad_tol: f64,
    pub comp_tol: f64,
    pub cost_tol: f64,
    pub max_iter: usize,
    pub xi: f64,
    pub sigma: f64,
    pub z0: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions {
            feas_tol: 1e-6,
            grad_tol: 1e-6,
            comp_tol: 1e-6,
            cost_tol: 1e-6,
            max_iter: 100,
            xi: 0.99995,
            sigma: 0.1,
            z0: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub x: DVector<f64>,
    pub lam: DVector<f64>,
    pub mu: DVector<f64>,
    pub f: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Scaled feasibility condition per iteration (index 0 is the start).
    pub history: Vec<f64>,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn solve(nlp: &impl Nlp, x0: DVector<f64>, opts: &IpmOptions) -> IpmResult {
    let nx = nlp.n_vars();
    let mut x = x0;
    let mut ev = nlp.evaluate(&x);
    let neq = ev.g.len();
    let niq = ev.h.len();

    let mut lam = DVector::zeros(neq);
    let mut z = DVector::from_element(niq, opts.z0);
    let mut mu = z.clone();
    for k in 0..niq {
        if ev.h[k] < -opts.z0 {
            z[k] = -ev.h[k];
        }
    }
    let mut gamma = 1.0;
    let mut f0 = ev.f;

    let lagrangian_grad = |ev: &Evaluation, lam: &DVector<f64>, mu: &DVector<f64>| {
        &ev.df + ev.jg.tr_mul(lam) + ev.jh.tr_mul(mu)
    };
    let conditions = |ev: &Evaluation,
                      x: &DVector<f64>,
                      z: &DVector<f64>,
                      lam: &DVector<f64>,
                      mu: &DVector<f64>,
                      f0: f64| {
        let lx = lagrangian_grad(ev, lam, mu);
        let maxh = ev.h.iter().cloned().fold(0.0f64, f64::max);
        let feas = inf_norm(&ev.g).max(maxh) / (1.0 + inf_norm(x).max(inf_norm(z)));
        let grad = inf_norm(&lx) / (1.0 + inf_norm(lam).max(inf_norm(mu)));
        let comp = z.dot(mu) / (1.0 + inf_norm(x));
        let cost = (ev.f - f0).abs() / (1.0 + f0.abs());
        (feas, grad, comp, cost)
    };

    let (feas, _, _, _) = conditions(&ev, &x, &z, &lam, &mu, f0);
    let mut history = vec![feas];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let lxx = nlp.hessian(&x, &lam, &mu);
        let lx = lagrangian_grad(&ev, &lam, &mu);

        // Jh' Z^-1 M Jh and the matching right-hand side.
        let mut m = lxx;
        let mut nvec = lx;
        for k in 0..niq {
            let w = mu[k] / z[k];
            let row = ev.jh.row(k);
            let r = (mu[k] * ev.h[k] + gamma) / z[k];
            for a in 0..nx {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                nvec[a] += ra * r;
                for b in 0..nx {
                    let rb = row[b];
                    if rb != 0.0 {
                        m[(a, b)] += w * ra * rb;
                    }
                }
            }
        }
        let dim = nx + neq;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (nx, nx)).copy_from(&m);
        kkt.view_mut((0, nx), (nx, neq)).copy_from(&ev.jg.transpose());
        kkt.view_mut((nx, 0), (neq, nx)).copy_from(&ev.jg);
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, nx).copy_from(&(-&nvec));
        rhs.rows_mut(nx, neq).copy_from(&(-&ev.g));
        let Some(sol) = kkt.lu().solve(&rhs) else {
            break;
        };
        if sol.iter().any(|v| !v.is_finite()) {
            break;
        }
        let dx = sol.rows(0, nx).into_owned();
        let dlam = sol.rows(nx, neq).into_owned();
        let dz = -&ev.h - &z - &ev.jh * &dx;
        let mut dmu = DVector::zeros(niq);
        for k in 0..niq {
            dmu[k] = -mu[k] + (gamma - mu[k] * dz[k]) / z[k];
        }

        let step = |v: &DVector<f64>, dv: &DVector<f64>| {
            let mut a = 1.0f64;
            for k in 0..v.len() {
                if dv[k] < 0.0 {
                    a = a.min(opts.xi * v[k] / -dv[k]);
                }
            }
            a
        };
        let alpha_p = step(&z, &dz);
        let alpha_d = step(&mu, &dmu);
        if alpha_p < 1e-10 || alpha_d < 1e-10 {
            break;
        }
        x += alpha_p * &dx;
        z += alpha_p * &dz;
        lam += alpha_d * &dlam;
        mu += alpha_d * &dmu;
        if niq > 0 {
            gamma = opts.sigma * z.dot(&mu) / niq as f64;
        }

        ev = nlp.evaluate(&x);
        if x.iter().any(|v| !v.is_finite()) || !ev.f.is_finite() {
            break;
        }
        let (feas, grad, comp, cost) = conditions(&ev, &x, &z, &lam, &mu, f0);
        history.push(feas);
        if feas < opts.feas_tol && grad < opts.grad_tol && comp < opts.comp_tol && cost < opts.cost_tol
        {
            converged = true;
            break;
        }
        if gamma < f64::EPSILON || gamma > 1.0 / f64::EPSILON {
            break;
        }
        f0 = ev.f;
    }

    IpmResult {
        f: ev.f,
        x,
        lam,
        mu,
        converged,
        iterations,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min (x0-2)^2 + (x1-1)^2  s.t.  x0 + x1 = 2,  x0^2 - x1 <= 0.5
    struct Toy;

    impl Nlp for Toy {
        fn n_vars(&self) -> usize {
            2
        }
        fn evaluate(&self, x: &DVector<f64>) -> Evaluation {
            Evaluation {
                f: (x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2),
                df: DVector::from_vec(vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] - 1.0)]),
                g: DVector::from_vec(vec![x[0] + x[1] - 2.0]),
                jg: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
                h: DVector::from_vec(vec![x[0] * x[0] - x[1] - 0.5]),
                jh: DMatrix::from_row_slice(1, 2, &[2.0 * x[0], -1.0]),
            }
        }
        fn hessian(&self, _x: &DVector<f64>, _lam: &DVector<f64>, mu: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(2, 2, &[2.0 + 2.0 * mu[0], 0.0, 0.0, 2.0])
        }
    }

    #[test]
    fn solves_small_constrained_problem() {
        let r = solve(&Toy, DVector::from_vec(vec![0.0, 0.0]), &IpmOptions::default());
        assert!(r.converged);
        // Active inequality: x0^2 + x0 - 2.5 = 0 on the line x1 = 2 - x0.
        let x0 = (-1.0 + (1.0f64 + 10.0).sqrt()) / 2.0;
        assert!((r.x[0] - x0).abs() < 1e-5, "{}", r.x[0]);
        assert!((r.x[1] - (2.0 - x0)).abs() < 1e-5);
    }

    #[test]
    fn unconstrained_optimum_inside() {
        struct Q;
        impl Nlp for Q {
            fn n_vars(&self) -> usize {
                1
            }
            fn evaluate(&self, x: &DVector<f64>) -> Evaluation {
                Evaluation {
                    f: (x[0] - 0.3).powi(2),
                    df: DVector::from_vec(vec![2.0 * (x[0] - 0.3)]),
                    g: DVector::zeros(0),
                    jg: DMatrix::zeros(0, 1),
                    h: DVector::from_vec(vec![x[0] - 1.0, -x[0] - 1.0]),
                    jh: DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
                }
            }
            fn hessian(&self, _: &DVector<f64>, _: &DVector<f64>, _: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::from_element(1, 1, 2.0)
            }
        }
        let r = solve(&Q, DVector::from_vec(vec![0.9]), &IpmOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 0.3).abs() < 1e-5);
    }
}

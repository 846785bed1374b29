//! Polar-form AC injection equations and their first and second derivatives.

use nalgebra::DMatrix;
use num_complex::Complex64;

type CMat = DMatrix<Complex64>;

const J: Complex64 = Complex64::new(0.0, 1.0);

pub fn phasors(v: &[f64], delta: &[f64]) -> Vec<Complex64> {
    v.iter()
        .zip(delta)
        .map(|(&m, &a)| Complex64::from_polar(m, a))
        .collect()
}

pub fn currents(y: &CMat, vc: &[Complex64]) -> Vec<Complex64> {
    let n = vc.len();
    (0..n)
        .map(|i| (0..n).map(|j| y[(i, j)] * vc[j]).sum())
        .collect()
}

/// Complex bus injections `S_i = V_i conj((Y V)_i)`.
pub fn injections(y: &CMat, vc: &[Complex64]) -> Vec<Complex64> {
    currents(y, vc)
        .iter()
        .zip(vc)
        .map(|(i, v)| v * i.conj())
        .collect()
}

/// `(dS/dVa, dS/dVm)`.
pub fn ds_dv(y: &CMat, vc: &[Complex64]) -> (CMat, CMat) {
    let n = vc.len();
    let ibus = currents(y, vc);
    let vn: Vec<Complex64> = vc.iter().map(|v| v / v.norm()).collect();
    let mut dva = CMat::from_element(n, n, Complex64::new(0.0, 0.0));
    let mut dvm = dva.clone();
    for i in 0..n {
        for j in 0..n {
            let mut a = -(y[(i, j)] * vc[j]);
            let mut m = vc[i] * (y[(i, j)] * vn[j]).conj();
            if i == j {
                a += ibus[i];
                m += ibus[i].conj() * vn[i];
            }
            dva[(i, j)] = J * vc[i] * a.conj();
            dvm[(i, j)] = m;
        }
    }
    (dva, dvm)
}

/// Second derivatives of `lam' S` with respect to `[Va; Vm]`, returned as the
/// four blocks `(Gaa, Gav, Gva, Gvv)`. Take the real part for active power
/// and the imaginary part for reactive power.
pub fn d2s_dv2(y: &CMat, vc: &[Complex64], lam: &[f64]) -> (CMat, CMat, CMat, CMat) {
    let n = vc.len();
    let zero = Complex64::new(0.0, 0.0);
    let ibus = currents(y, vc);
    let vabs: Vec<f64> = vc.iter().map(|v| v.norm()).collect();

    let mut c = CMat::from_element(n, n, zero);
    let mut d = CMat::from_element(n, n, zero);
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] = lam[i] * vc[i] * (y[(i, j)] * vc[j]).conj();
            d[(i, j)] = y[(j, i)].conj() * vc[j];
        }
    }
    let dlam: Vec<Complex64> = (0..n)
        .map(|i| (0..n).map(|j| d[(i, j)] * lam[j]).sum())
        .collect();
    let mut e = CMat::from_element(n, n, zero);
    let mut f = c.clone();
    for i in 0..n {
        for j in 0..n {
            let mut t = d[(i, j)] * lam[j];
            if i == j {
                t -= dlam[i];
            }
            e[(i, j)] = vc[i].conj() * t;
        }
        f[(i, i)] -= lam[i] * vc[i] * ibus[i].conj();
    }
    let gaa = &e + &f;
    let mut gva = CMat::from_element(n, n, zero);
    let mut gvv = CMat::from_element(n, n, zero);
    for i in 0..n {
        for j in 0..n {
            gva[(i, j)] = J * (e[(i, j)] - f[(i, j)]) / vabs[i];
            gvv[(i, j)] = (c[(i, j)] + c[(j, i)]) / (vabs[i] * vabs[j]);
        }
    }
    let gav = gva.transpose();
    (gaa, gav, gva, gvv)
}

/// Active power leaving bus `a` towards bus `b` through a series admittance
/// `g + jb`, as a function of `(theta_a, theta_b, V_a, V_b)`.
/// Returns the value, gradient and Hessian in that variable order.
pub fn branch_flow(
    y: Complex64,
    theta_a: f64,
    theta_b: f64,
    va: f64,
    vb: f64,
) -> (f64, [f64; 4], [[f64; 4]; 4]) {
    let (g, b) = (y.re, y.im);
    let th = theta_a - theta_b;
    let (s, c) = th.sin_cos();
    let k = g * c + b * s;
    let kp = -g * s + b * c;
    let p = g * va * va - va * vb * k;
    let grad = [-va * vb * kp, va * vb * kp, 2.0 * g * va - vb * k, -va * k];
    let vv = va * vb;
    let hess = [
        [vv * k, -vv * k, -vb * kp, -va * kp],
        [-vv * k, vv * k, vb * kp, va * kp],
        [-vb * kp, vb * kp, 2.0 * g, -k],
        [-va * kp, va * kp, -k, 0.0],
    ];
    (p, grad, hess)
}

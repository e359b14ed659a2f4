//! Damped Newton solver for the discrete 1D functional.
//!
//! Unknowns are interleaved, `x[2k] = rho_k`, `x[2k + 1] = A_k`; each interval
//! couples four consecutive entries, so the Hessian is a symmetric band matrix
//! of half-bandwidth 3.

use std::f64::consts::SQRT_2;

use super::discrete_energy;

const BW: usize = 3;

/// Lower band storage: `band[i][j] = H[i][i - j]` for `j <= BW`.
pub(crate) struct Band {
    pub band: Vec<[f64; BW + 1]>,
}

impl Band {
    fn zeros(n: usize) -> Self {
        Band {
            band: vec![[0.0; BW + 1]; n],
        }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        if i >= j {
            self.band[i][i - j] += v;
        }
    }

    /// In-place Cholesky factorization; `false` if not positive definite.
    fn cholesky(&mut self) -> bool {
        let n = self.band.len();
        for i in 0..n {
            for j in i.saturating_sub(BW)..=i {
                let mut s = self.band[i][i - j];
                for k in i.saturating_sub(BW).max(j.saturating_sub(BW))..j {
                    s -= self.band[i][i - k] * self.band[j][j - k];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return false;
                    }
                    self.band[i][0] = s.sqrt();
                } else {
                    self.band[i][i - j] = s / self.band[j][0];
                }
            }
        }
        true
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(BW)..i {
                s -= self.band[i][i - k] * b[k];
            }
            b[i] = s / self.band[i][0];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + BW + 1).min(n) {
                s -= self.band[k][k - i] * b[k];
            }
            b[i] = s / self.band[i][0];
        }
    }
}

/// Energy, gradient and Hessian in the interleaved layout.
pub(crate) fn assemble(kappa: f64, dt: f64, x: &[f64], grad: &mut [f64], hess: &mut Band) -> f64 {
    let w = kappa * SQRT_2;
    let ik = 1.0 / kappa;
    grad.iter_mut().for_each(|v| *v = 0.0);
    hess.band.iter_mut().for_each(|r| *r = [0.0; BW + 1]);
    let m = x.len() / 2;
    let mut e = 0.0;
    for k in 0..m - 1 {
        let v = [x[2 * k], x[2 * k + 1], x[2 * k + 2], x[2 * k + 3]];
        let d = (v[2] - v[0]) / dt;
        let rm = 0.5 * (v[0] + v[2]);
        let am = 0.5 * (v[1] + v[3]);
        let q = am * rm * ik;
        let r = (v[3] - v[1]) / dt - (1.0 - rm * rm) / SQRT_2;
        e += dt * (d * d + q * q + 2.0 * w * d * q + r * r);

        let gd = [-1.0 / dt, 0.0, 1.0 / dt, 0.0];
        let grm = [0.5, 0.0, 0.5, 0.0];
        let gam = [0.0, 0.5, 0.0, 0.5];
        let mut gq = [0.0; 4];
        let mut gr = [0.0; 4];
        for i in 0..4 {
            gq[i] = (am * grm[i] + rm * gam[i]) * ik;
            gr[i] = [0.0, -1.0 / dt, 0.0, 1.0 / dt][i] + SQRT_2 * rm * grm[i];
        }
        for i in 0..4 {
            let gi = 2.0 * d * gd[i] + 2.0 * q * gq[i] + 2.0 * w * (q * gd[i] + d * gq[i]) + 2.0 * r * gr[i];
            grad[2 * k + i] += dt * gi;
            for j in 0..=i {
                let hq = (gam[i] * grm[j] + grm[i] * gam[j]) * ik;
                let hr = SQRT_2 * grm[i] * grm[j];
                let hij = 2.0 * gd[i] * gd[j]
                    + 2.0 * gq[i] * gq[j]
                    + 2.0 * q * hq
                    + 2.0 * w * (gd[i] * gq[j] + gq[i] * gd[j] + d * hq)
                    + 2.0 * gr[i] * gr[j]
                    + 2.0 * r * hr;
                hess.add(2 * k + i, 2 * k + j, dt * hij);
            }
        }
    }
    e
}

pub(crate) struct NewtonOutcome {
    pub x: Vec<f64>,
    pub energy: f64,
    pub iterations: usize,
    /// Euclidean norm of the free gradient divided by `sqrt(dt)`.
    pub grad_norm: f64,
    pub ok: bool,
}

/// Levenberg-damped Newton iteration with Armijo backtracking. Entries with
/// `free[i] == false` keep their initial values.
pub(crate) fn newton(kappa: f64, dt: f64, x0: Vec<f64>, free: &[bool], tol: f64, max_iter: usize) -> NewtonOutcome {
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut h = Band::zeros(n);
    let mut lambda = 0.0f64;
    let mut iters = 0;
    let mut xt = vec![0.0; n];
    let sdt = dt.sqrt();
    let gnorm = |g: &[f64]| -> f64 {
        g.iter()
            .zip(free)
            .filter(|(_, &f)| f)
            .map(|(v, _)| v * v)
            .sum::<f64>()
            .sqrt()
            / sdt
    };
    let mut e = assemble(kappa, dt, &x, &mut g, &mut h);
    let mut ok = false;
    let mut flat = 0;
    while iters < max_iter {
        if gnorm(&g) <= tol {
            ok = true;
            break;
        }
        iters += 1;
        let base = Band { band: h.band.clone() };
        let mut p;
        loop {
            let mut hl = Band { band: base.band.clone() };
            for i in 0..n {
                if free[i] {
                    hl.band[i][0] += lambda * (1.0 + base.band[i][0].abs());
                } else {
                    hl.band[i] = [0.0; BW + 1];
                    hl.band[i][0] = 1.0;
                    for j in 1..=BW.min(n - 1 - i) {
                        hl.band[i + j][j] = 0.0;
                    }
                }
            }
            if hl.cholesky() {
                p = g.iter().zip(free).map(|(v, &f)| if f { -v } else { 0.0 }).collect::<Vec<_>>();
                hl.solve(&mut p);
                break;
            }
            lambda = if lambda == 0.0 { 1e-8 } else { lambda * 10.0 };
        }
        let slope: f64 = g.iter().zip(&p).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            lambda = if lambda == 0.0 { 1e-8 } else { lambda * 10.0 };
            continue;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            for i in 0..n {
                xt[i] = x[i] + t * p[i];
            }
            let et = discrete_energy_interleaved(kappa, dt, &xt);
            if et <= e + 1e-4 * t * slope {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no representable decrease left
            ok = gnorm(&g) <= tol * 1e3;
            break;
        }
        std::mem::swap(&mut x, &mut xt);
        let e_old = e;
        e = assemble(kappa, dt, &x, &mut g, &mut h);
        // energy at roundoff: the gradient cannot shrink further
        if e_old - e <= 1e-15 * e.abs().max(1.0) {
            flat += 1;
            if flat >= 5 {
                ok = gnorm(&g) <= tol * 1e3;
                break;
            }
        } else {
            flat = 0;
        }
        lambda = if t == 1.0 { lambda * 0.1 } else { (lambda * 4.0).max(1e-10) };
        if lambda < 1e-14 {
            lambda = 0.0;
        }
    }
    NewtonOutcome {
        grad_norm: gnorm(&g),
        x,
        energy: e,
        iterations: iters,
        ok,
    }
}

fn discrete_energy_interleaved(kappa: f64, dt: f64, x: &[f64]) -> f64 {
    let rho: Vec<f64> = x.iter().step_by(2).copied().collect();
    let a: Vec<f64> = x.iter().skip(1).step_by(2).copied().collect();
    discrete_energy(kappa, dt, &rho, &a, None)
}

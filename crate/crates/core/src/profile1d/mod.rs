//! One-dimensional transition profile between the superconducting and the
//! normal phase, and the surface tension reference `sigma_0`.
//!
//! The functional is the energy of an x2-independent configuration
//! `u = rho(t)`, `A = (0, A(t))` at `epsilon = 1`:
//!
//! ```text
//! int (1 - w)(rho'^2 + rho^2 A^2 / kappa^2) + w (rho' + A rho / kappa)^2
//!     + (A' - (1 - rho^2)/sqrt 2)^2 dt,        w = kappa sqrt 2,
//! ```
//!
//! which equals `int rho'^2 + rho^2 A^2 / kappa^2 + sqrt 2 A (rho^2)' +
//! (A' - (1 - rho^2)/sqrt 2)^2`. Each interval is evaluated at its midpoint.

pub mod block;
mod newton;

use std::f64::consts::SQRT_2;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Gl2dError, Result};
use crate::field::{Configuration, LinkField, C64};
use crate::grid::Grid;
use crate::json::fmt17;
use crate::params::Params;

pub use block::{build_block, BuildingBlock};

/// `2 sqrt 2 / 3`.
pub const SIGMA0_EXACT: f64 = 2.0 * SQRT_2 / 3.0;

/// Integrand of `G(v) = int |v'|^2 + (1 - v^2)^2 / 2` along `v = tanh(t / sqrt 2)`.
pub fn sigma0_integrand(t: f64) -> f64 {
    let v = (t / SQRT_2).tanh();
    let dv = (1.0 - v * v) / SQRT_2;
    dv * dv + 0.5 * (1.0 - v * v) * (1.0 - v * v)
}

/// Composite Simpson rule on `[-30, 0]` with `intervals` (even) subintervals.
pub fn sigma0_quadrature(intervals: usize) -> f64 {
    let m = intervals + intervals % 2;
    let (a, b) = (-30.0, 0.0);
    let h = (b - a) / m as f64;
    let mut s = sigma0_integrand(a) + sigma0_integrand(b);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * sigma0_integrand(a + k as f64 * h);
    }
    s * h / 3.0
}

/// `sigma_0` by quadrature; agrees with [`SIGMA0_EXACT`].
pub fn sigma0_reference() -> f64 {
    sigma0_quadrature(60_000)
}

/// Discrete transition profile on `t_k = -T + k dt`, `k = 0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile1D {
    pub kappa: f64,
    pub t_max: f64,
    pub dt: f64,
    pub rho: Vec<f64>,
    pub a: Vec<f64>,
    pub energy_1d: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Discrete energy, with the gradient written to `grad = [d/d rho, d/d a]` when given.
pub fn discrete_energy(kappa: f64, dt: f64, rho: &[f64], a: &[f64], grad: Option<(&mut [f64], &mut [f64])>) -> f64 {
    let w = kappa * SQRT_2;
    let ik = 1.0 / kappa;
    let mut e = 0.0;
    let mut grad = grad;
    if let Some((gr, ga)) = grad.as_mut() {
        gr.iter_mut().for_each(|x| *x = 0.0);
        ga.iter_mut().for_each(|x| *x = 0.0);
    }
    for k in 0..rho.len() - 1 {
        let d = (rho[k + 1] - rho[k]) / dt;
        let rm = 0.5 * (rho[k] + rho[k + 1]);
        let am = 0.5 * (a[k] + a[k + 1]);
        let q = am * rm * ik;
        let r = (a[k + 1] - a[k]) / dt - (1.0 - rm * rm) / SQRT_2;
        e += dt * (d * d + q * q + 2.0 * w * d * q + r * r);
        if let Some((gr, ga)) = grad.as_mut() {
            let ed = 2.0 * (d + w * q);
            let eq = dt * 2.0 * (q + w * d);
            let er = 2.0 * r;
            // d/drho_k, d/drho_{k+1}
            let common = eq * am * ik * 0.5 + dt * er * rm / SQRT_2;
            gr[k] += -ed + common;
            gr[k + 1] += ed + common;
            let ca = eq * rm * ik * 0.5;
            ga[k] += -er + ca;
            ga[k + 1] += er + ca;
        }
    }
    e
}

impl Profile1D {
    pub fn n(&self) -> usize {
        self.rho.len() - 1
    }

    pub fn t(&self, k: usize) -> f64 {
        -self.t_max + k as f64 * self.dt
    }

    /// `(rho, A)` at `t` by linear interpolation, extended by `(1, 0)` on the
    /// left and by `(0, A(T) + (t - T)/sqrt 2)` on the right.
    pub fn sample(&self, t: f64) -> (f64, f64) {
        let n = self.n();
        if t < -self.t_max {
            return (1.0, 0.0);
        }
        if t > self.t_max {
            return (0.0, self.a[n] + (t - self.t_max) / SQRT_2);
        }
        let x = (t + self.t_max) / self.dt;
        let k = (x.floor() as usize).min(n - 1);
        let f = x - k as f64;
        (
            self.rho[k] + f * (self.rho[k + 1] - self.rho[k]),
            self.a[k] + f * (self.a[k + 1] - self.a[k]),
        )
    }

    /// Where the asymptotic line `A = (t - t*)/sqrt 2` of the normal side
    /// crosses zero.
    pub fn flux_center(&self) -> f64 {
        self.t_max - SQRT_2 * self.a[self.n()]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# kappa = {}", fmt17(self.kappa))?;
        writeln!(w, "# T = {}", fmt17(self.t_max))?;
        writeln!(w, "# n = {}", self.n())?;
        writeln!(w, "# energy_1d = {}", fmt17(self.energy_1d))?;
        writeln!(w, "t,rho,a")?;
        for k in 0..=self.n() {
            writeln!(w, "{},{},{}", fmt17(self.t(k)), fmt17(self.rho[k]), fmt17(self.a[k]))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(mut r: R) -> Result<Self> {
        let mut s = String::new();
        r.read_to_string(&mut s)?;
        let mut kappa = None;
        let mut t_max = None;
        let mut energy = None;
        let (mut ts, mut rho, mut a) = (Vec::new(), Vec::new(), Vec::new());
        for line in s.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    let v: f64 = v
                        .trim()
                        .parse()
                        .map_err(|e| Gl2dError::Parse(format!("header {}: {e}", k.trim())))?;
                    match k.trim() {
                        "kappa" => kappa = Some(v),
                        "T" => t_max = Some(v),
                        "energy_1d" => energy = Some(v),
                        _ => {}
                    }
                }
                continue;
            }
            if line == "t,rho,a" {
                continue;
            }
            let f: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| Gl2dError::Parse(format!("{e}"))))
                .collect::<Result<_>>()?;
            if f.len() != 3 {
                return Err(Gl2dError::Parse(format!("expected 3 columns: {line}")));
            }
            ts.push(f[0]);
            rho.push(f[1]);
            a.push(f[2]);
        }
        let kappa = kappa.ok_or_else(|| Gl2dError::Parse("missing kappa".into()))?;
        let t_max = t_max.ok_or_else(|| Gl2dError::Parse("missing T".into()))?;
        if ts.len() < 2 {
            return Err(Gl2dError::Parse("profile needs at least two nodes".into()));
        }
        let dt = 2.0 * t_max / (ts.len() - 1) as f64;
        let mut p = Profile1D {
            kappa,
            t_max,
            dt,
            rho,
            a,
            energy_1d: 0.0,
            iterations: 0,
            grad_norm: 0.0,
        };
        p.energy_1d = energy.unwrap_or_else(|| profile_energy(&p));
        Ok(p)
    }
}

/// Recomputes the discrete functional of `p`.
pub fn profile_energy(p: &Profile1D) -> f64 {
    discrete_energy(p.kappa, p.dt, &p.rho, &p.a, None)
}

fn initial_guess(t_max: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let dt = 2.0 * t_max / n as f64;
    let mut rho: Vec<f64> = (0..=n)
        .map(|k| 0.5 * (1.0 - ((-t_max + k as f64 * dt) / SQRT_2).tanh()))
        .collect();
    rho[0] = 1.0;
    rho[n] = 0.0;
    let mut a = vec![0.0; n + 1];
    for k in 0..n {
        let rm = 0.5 * (rho[k] + rho[k + 1]);
        a[k + 1] = a[k] + dt * (1.0 - rm * rm) / SQRT_2;
    }
    (rho, a)
}

fn solve_level(kappa: f64, t_max: f64, rho: &[f64], a: &[f64], tol: f64) -> newton::NewtonOutcome {
    let n = rho.len() - 1;
    let dt = 2.0 * t_max / n as f64;
    let x: Vec<f64> = rho.iter().zip(a).flat_map(|(&r, &v)| [r, v]).collect();
    let mut free = vec![true; x.len()];
    free[0] = false;
    free[1] = false;
    free[2 * n] = false;
    newton::newton(kappa, dt, x, &free, tol, 500)
}

fn prolong(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * v.len() - 1);
    for k in 0..v.len() - 1 {
        out.push(v[k]);
        out.push(0.5 * (v[k] + v[k + 1]));
    }
    out.push(v[v.len() - 1]);
    out
}

/// Minimizes the discrete functional on `[-T, T]` with `n` intervals, with
/// `rho(-T) = 1`, `A(-T) = 0`, `rho(T) = 0` and `A(T)` free, by damped Newton
/// descent with line search and coarse-to-fine continuation.
pub fn minimize_profile1d(kappa: f64, t_max: f64, n: usize) -> Result<Profile1D> {
    Params::new(1.0, kappa, 0.0)?;
    if !(t_max > 0.0) || n < 8 {
        return Err(Gl2dError::Validation(format!(
            "profile needs T > 0 and n >= 8 (got T = {t_max}, n = {n})"
        )));
    }
    let mut levels = 0;
    let mut nc = n;
    while nc % 2 == 0 && nc / 2 >= 400 {
        nc /= 2;
        levels += 1;
    }
    let (mut rho, mut a) = initial_guess(t_max, nc);
    let mut total_it = 0;
    let mut last = (0.0, 0.0, true);
    for lvl in 0..=levels {
        let out = solve_level(kappa, t_max, &rho, &a, 1e-10);
        total_it += out.iterations;
        last = (out.energy, out.grad_norm, out.ok);
        rho = out.x.iter().step_by(2).copied().collect();
        a = out.x.iter().skip(1).step_by(2).copied().collect();
        if lvl < levels {
            rho = prolong(&rho);
            a = prolong(&a);
        }
    }
    let (energy, gnorm, ok) = last;
    if !ok {
        return Err(Gl2dError::NonConvergence { grad_norm: gnorm });
    }
    Ok(Profile1D {
        kappa,
        t_max,
        dt: 2.0 * t_max / n as f64,
        rho,
        a,
        energy_1d: energy,
        iterations: total_it,
        grad_norm: gnorm,
    })
}

/// Relative gap between the 2D energy per unit height of the lift
/// `u = rho(x1)`, `A = (0, A(x1))` at `epsilon = 1` and the 1D energy of the same
/// samples, both on the grid of spacing `1 / cell_n` covering `[-T, T]`.
pub fn lift_consistency(p: &Profile1D, cell_n: usize) -> Result<f64> {
    let h = 1.0 / cell_n as f64;
    let cells = (2.0 * p.t_max / h).round() as usize;
    let h = 2.0 * p.t_max / cells as f64;
    let grid = Grid::rectangle(cells + 1, 3, h, [-p.t_max, 0.0])?;
    let params = Params::new(1.0, p.kappa, 0.0)?;
    let mut rho = Vec::with_capacity(cells + 1);
    let mut a = Vec::with_capacity(cells + 1);
    for i in 0..=cells {
        let (r, aa) = p.sample(grid.x1(i));
        rho.push(r);
        a.push(aa);
    }
    let mut cfg = Configuration::uniform(grid, params, C64::new(0.0, 0.0), 0.0);
    cfg.a = LinkField::zeros(grid.len(), 0.0);
    for k in 0..grid.len() {
        let i = grid.coords(k).0;
        cfg.u[k] = C64::new(rho[i], 0.0);
        cfg.a.a2[k] = a[i];
    }
    let e2 = crate::energy::total_energy(&cfg, None).total / grid.height();
    let e1 = discrete_energy(p.kappa, h, &rho, &a, None);
    if e1 == 0.0 && e2 == 0.0 {
        return Ok(0.0);
    }
    Ok((e2 - e1).abs() / e1.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigma0_matches_closed_form() {
        let s = sigma0_reference();
        assert!((s - SIGMA0_EXACT).abs() < 1e-6);
        assert!((sigma0_quadrature(120_000) - s).abs() < 1e-8);
        assert!((SIGMA0_EXACT - 0.9428090).abs() < 1e-7);
    }

    #[test]
    fn equipartition_along_tanh() {
        for k in 0..200 {
            let t = -20.0 + 0.1 * k as f64;
            let v = (t / SQRT_2).tanh();
            let w = 0.5 * (1.0 - v * v) * (1.0 - v * v);
            assert!((sigma0_integrand(t) - 2.0 * w).abs() < 1e-10);
        }
    }

    fn flat(kappa: f64, t_max: f64, n: usize, rho: f64, a: impl Fn(f64) -> f64) -> Profile1D {
        let dt = 2.0 * t_max / n as f64;
        Profile1D {
            kappa,
            t_max,
            dt,
            rho: vec![rho; n + 1],
            a: (0..=n).map(|k| a(-t_max + k as f64 * dt)).collect(),
            energy_1d: 0.0,
            iterations: 0,
            grad_norm: 0.0,
        }
    }

    #[test]
    fn trivial_profile_energies() {
        assert_eq!(profile_energy(&flat(0.3, 20.0, 100, 1.0, |_| 0.0)), 0.0);
        assert!(profile_energy(&flat(0.3, 20.0, 100, 0.0, |t| t / SQRT_2)).abs() < 1e-24);
        assert!((profile_energy(&flat(0.3, 20.0, 100, 0.0, |_| 0.0)) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn lift_of_trivial_profile_is_exact() {
        assert_eq!(lift_consistency(&flat(0.3, 20.0, 100, 1.0, |_| 0.0), 16).unwrap(), 0.0);
    }

    #[test]
    fn gradient_matches_fd() {
        let (rho, a) = initial_guess(5.0, 40);
        let rho: Vec<f64> = rho.iter().enumerate().map(|(k, r)| r + 0.01 * (k as f64).sin()).collect();
        let mut gr = vec![0.0; 41];
        let mut ga = vec![0.0; 41];
        let dt = 0.25;
        discrete_energy(0.4, dt, &rho, &a, Some((&mut gr, &mut ga)));
        for k in [0usize, 3, 17, 40] {
            let h = 1e-6;
            let mut rp = rho.clone();
            let mut rm = rho.clone();
            rp[k] += h;
            rm[k] -= h;
            let fd = (discrete_energy(0.4, dt, &rp, &a, None) - discrete_energy(0.4, dt, &rm, &a, None)) / (2.0 * h);
            assert!((fd - gr[k]).abs() < 1e-6 * (1.0 + fd.abs()), "rho {k}: {fd} {}", gr[k]);
            let mut ap = a.clone();
            let mut am = a.clone();
            ap[k] += h;
            am[k] -= h;
            let fd = (discrete_energy(0.4, dt, &rho, &ap, None) - discrete_energy(0.4, dt, &rho, &am, None)) / (2.0 * h);
            assert!((fd - ga[k]).abs() < 1e-6 * (1.0 + fd.abs()), "a {k}: {fd} {}", ga[k]);
        }
    }

    #[test]
    fn minimized_profile_properties() {
        let p = minimize_profile1d(0.3, 20.0, 2000).unwrap();
        assert!((profile_energy(&p) - p.energy_1d).abs() <= 1e-12 * p.energy_1d);
        assert_eq!((p.rho[0], p.a[0], p.rho[p.n()]), (1.0, 0.0, 0.0));
        assert!(p.rho.iter().all(|r| (-1e-9..=1.0 + 1e-9).contains(r)));
        let n = p.n();
        let slope = (p.a[n] - p.a[n - 1]) / p.dt;
        assert!((slope - 1.0 / SQRT_2).abs() < 1e-3, "{slope}");
        assert!(p.energy_1d < SIGMA0_EXACT && p.energy_1d > 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let p = minimize_profile1d(0.5, 20.0, 800).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = Profile1D::read_csv(&buf[..]).unwrap();
        assert_eq!(q.rho, p.rho);
        assert_eq!(q.a, p.a);
        assert_eq!(q.energy_1d, p.energy_1d);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn energy_density_nonnegative(r0 in 0.0f64..1.0, r1 in 0.0f64..1.0, a0 in -3.0f64..3.0, a1 in -3.0f64..3.0, kappa in 0.01f64..0.707) {
            let e = discrete_energy(kappa, 0.1, &[r0, r1], &[a0, a1], None);
            prop_assert!(e >= 0.0);
        }
    }
}

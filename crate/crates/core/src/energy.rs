//! The discrete energy, its exact gradient, and diagnostic functionals.
//!
//! Per owned plaquette `p` the energy density is
//! `h^2 [eps K_p + (B_p - (1 - |u_p|^2)/sqrt 2)^2 / eps]` with
//! `K = (1 - w)|D u|^2 + w |D2 u - i D1 u|^2`, `w = kappa sqrt 2`, and the
//! differences taken forward from `p`.

use std::f64::consts::SQRT_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Gl2dError, Result};
use crate::field::{Configuration, C64};
use crate::grid::Grid;
use crate::reduce::{sum_rows, sum_rows_n};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub grad_sym: f64,
    pub grad_bogo: f64,
    pub well: f64,
    pub total: f64,
    pub region_area: f64,
}

/// Exact gradient of [`total_energy`]: `gu = dE/dRe u + i dE/dIm u` per site and
/// `dE/da1`, `dE/da2` per link (the twist is held fixed).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub gu: Vec<C64>,
    pub ga1: Vec<f64>,
    pub ga2: Vec<f64>,
}

impl Gradient {
    pub fn norm_sqr(&self) -> f64 {
        self.gu.iter().map(|z| z.norm_sqr()).sum::<f64>()
            + self.ga1.iter().map(|x| x * x).sum::<f64>()
            + self.ga2.iter().map(|x| x * x).sum::<f64>()
    }
}

#[inline]
fn kinetic_parts(d1: C64, d2: C64) -> (f64, f64) {
    let g = d1.norm_sqr() + d2.norm_sqr();
    let cross = (d2 * d1.conj()).im;
    (g, g - 2.0 * cross)
}

/// Well residual `B - (1 - rho^2)/sqrt 2`.
#[inline]
pub fn well_residual(b: f64, rho2: f64) -> f64 {
    b - (1.0 - rho2) / SQRT_2
}

/// Energy of the configuration restricted to plaquettes whose lower-left site
/// is in `region` (all owned plaquettes when `None`).
pub fn total_energy(cfg: &Configuration, region: Option<&[bool]>) -> EnergyBreakdown {
    let g = cfg.grid;
    let p = cfg.params;
    let w = p.kappa * SQRT_2;
    let h2 = g.h * g.h;
    let [s, b, wl, cnt] = sum_rows_n::<4, _>(g.ny, |j| {
        let mut acc = [0.0; 4];
        for i in 0..g.nx {
            if !g.owns_plaquette(i, j) {
                continue;
            }
            let k = g.idx(i, j);
            if let Some(m) = region {
                if !m[k] {
                    continue;
                }
            }
            let (d1, d2) = cfg.diffs_at(i, j);
            let (full, bog) = kinetic_parts(d1, d2);
            let r = well_residual(cfg.curl_at(i, j), cfg.u[k].norm_sqr());
            acc[0] += full;
            acc[1] += bog;
            acc[2] += r * r;
            acc[3] += 1.0;
        }
        acc
    });
    let grad_sym = h2 * p.epsilon * (1.0 - w) * s;
    let grad_bogo = h2 * p.epsilon * w * b;
    let well = h2 * wl / p.epsilon;
    EnergyBreakdown {
        grad_sym,
        grad_bogo,
        well,
        total: grad_sym + grad_bogo + well,
        region_area: cnt * h2,
    }
}

/// Energy carried by each owned plaquette, indexed by its lower-left site.
pub fn plaquette_energies(cfg: &Configuration) -> Vec<f64> {
    let g = cfg.grid;
    let p = cfg.params;
    let w = p.kappa * SQRT_2;
    let h2 = g.h * g.h;
    let mut out = vec![0.0; g.len()];
    out.par_chunks_mut(g.nx).enumerate().for_each(|(j, row)| {
        for (i, o) in row.iter_mut().enumerate() {
            if !g.owns_plaquette(i, j) {
                continue;
            }
            let k = g.idx(i, j);
            let (d1, d2) = cfg.diffs_at(i, j);
            let (full, bog) = kinetic_parts(d1, d2);
            let r = well_residual(cfg.curl_at(i, j), cfg.u[k].norm_sqr());
            *o = h2 * (p.epsilon * ((1.0 - w) * full + w * bog) + r * r / p.epsilon);
        }
    });
    out
}

/// Energy and exact gradient in one pass.
pub fn energy_with_gradient(cfg: &Configuration) -> (f64, Gradient) {
    let g = cfg.grid;
    let p = cfg.params;
    let n = g.len();
    let w = p.kappa * SQRT_2;
    let h = g.h;
    let h2 = h * h;
    let iu = C64::new(0.0, 1.0);
    let kin = h2 * p.epsilon / h;
    let wl = h2 / p.epsilon;

    // per plaquette, with G_mu = h eps dE_p/dD_mu:
    // v_mu = conj(U_mu) G_mu (pushed to p + e_mu), sp = G_1 + G_2 (pulled from p)
    let mut v1 = vec![C64::new(0.0, 0.0); n];
    let mut v2 = vec![C64::new(0.0, 0.0); n];
    let mut sp = vec![C64::new(0.0, 0.0); n];
    let mut r = vec![0.0; n];
    let mut e = vec![0.0; g.ny];
    v1.par_chunks_mut(g.nx)
        .zip(v2.par_chunks_mut(g.nx))
        .zip(sp.par_chunks_mut(g.nx))
        .zip(r.par_chunks_mut(g.nx))
        .zip(e.par_iter_mut())
        .enumerate()
        .for_each(|(j, ((((rv1, rv2), rsp), rr), re))| {
            let mut acc = 0.0;
            for i in 0..g.nx {
                if !g.owns_plaquette(i, j) {
                    continue;
                }
                let k = g.idx(i, j);
                let up = cfg.u[k];
                let (q1, t1) = cfg.transport1(i, j).unwrap();
                let (q2, t2) = cfg.transport2(i, j).unwrap();
                let d1 = (t1 * cfg.u[q1] - up) / h;
                let d2 = (t2 * cfg.u[q2] - up) / h;
                let (full, bog) = kinetic_parts(d1, d2);
                let res = well_residual(cfg.curl_at(i, j), up.norm_sqr());
                acc += h2 * p.epsilon * ((1.0 - w) * full + w * bog) + wl * res * res;
                let g1 = (2.0 * d1 + 2.0 * w * iu * d2) * kin;
                let g2 = (2.0 * d2 - 2.0 * w * iu * d1) * kin;
                rv1[i] = t1.conj() * g1;
                rv2[i] = t2.conj() * g2;
                rsp[i] = g1 + g2;
                rr[i] = res;
            }
            *re = acc;
        });
    let energy = crate::reduce::pairwise_sum(&e);

    let alpha_h = p.alpha * h;
    let mut gu = vec![C64::new(0.0, 0.0); n];
    let mut ga1 = vec![0.0; n];
    let mut ga2 = vec![0.0; n];
    gu.par_chunks_mut(g.nx)
        .zip(ga1.par_chunks_mut(g.nx))
        .zip(ga2.par_chunks_mut(g.nx))
        .enumerate()
        .for_each(|(j, ((rgu, rg1), rg2))| {
            for i in 0..g.nx {
                let k = g.idx(i, j);
                let mut gk = -sp[k] + 2.0 * SQRT_2 * wl * r[k] * cfg.u[k];
                if let Some(wk) = g.west(i, j) {
                    gk += v1[wk];
                }
                if let Some(sk) = g.south(i, j) {
                    gk += v2[sk];
                }
                rgu[i] = gk;
                let r_s = g.south(i, j).map_or(0.0, |s| r[s]);
                let r_w = g.west(i, j).map_or(0.0, |s| r[s]);
                let mut a1 = 2.0 * wl * (r[k] - r_s) / h;
                let mut a2 = 2.0 * wl * (r_w - r[k]) / h;
                if let Some((q, _)) = g.east(i, j) {
                    a1 += alpha_h * (v1[k].conj() * cfg.u[q]).im;
                }
                if let Some((q, _)) = g.north(i, j) {
                    a2 += alpha_h * (v2[k].conj() * cfg.u[q]).im;
                }
                rg1[i] = a1;
                rg2[i] = a2;
            }
        });
    (energy, Gradient { gu, ga1, ga2 })
}

pub fn energy_gradient(cfg: &Configuration) -> Gradient {
    energy_with_gradient(cfg).1
}

/// L1 norm of the per-plaquette residual of
/// `|D u|^2 = |D2 u - i D1 u|^2 + alpha rho^2 B + curl j`.
pub fn bogomolny_identity_residual(cfg: &Configuration) -> f64 {
    let g = cfg.grid;
    let [j1, j2] = cfg.supercurrent();
    let alpha = cfg.params.alpha;
    let h2 = g.h * g.h;
    sum_rows(g.ny, |j| {
        let mut s = 0.0;
        for i in 0..g.nx {
            if !g.owns_plaquette(i, j) {
                continue;
            }
            let k = g.idx(i, j);
            let (d1, d2) = cfg.diffs_at(i, j);
            let lhs = 2.0 * (d2 * d1.conj()).im;
            let b = cfg.curl_at(i, j);
            let (e, _) = g.east(i, j).unwrap();
            let (nn, _) = g.north(i, j).unwrap();
            let curl_j = (j2[e] - j2[k] - j1[nn] + j1[k]) / g.h;
            s += (lhs - alpha * cfg.u[k].norm_sqr() * b - curl_j).abs();
        }
        s * h2
    })
}

/// `int |D u|^2 - |D3 u|^2 - alpha rho^2 B` over the domain; on the torus the
/// curl term integrates to zero, so this is the integrated identity defect.
pub fn integrated_identity_defect(cfg: &Configuration) -> f64 {
    let g = cfg.grid;
    let alpha = cfg.params.alpha;
    let h2 = g.h * g.h;
    sum_rows(g.ny, |j| {
        let mut s = 0.0;
        for i in 0..g.nx {
            if !g.owns_plaquette(i, j) {
                continue;
            }
            let (d1, d2) = cfg.diffs_at(i, j);
            let k = g.idx(i, j);
            s += 2.0 * (d2 * d1.conj()).im - alpha * cfg.u[k].norm_sqr() * cfg.curl_at(i, j);
        }
        s * h2
    })
}

/// Double-well potential `W(rho) = min(2 rho^2, 1) (1 - rho^2)^2 / 2`.
#[inline]
pub fn w_potential(rho: f64) -> f64 {
    let r2 = rho * rho;
    0.5 * (2.0 * r2).min(1.0) * (1.0 - r2) * (1.0 - r2)
}

/// `psi(rho) = min(2, 1/rho^2) (1 - rho^2)`, with `psi(0) = 2`.
#[inline]
pub fn psi(rho: f64) -> f64 {
    let r2 = rho * rho;
    let m = if r2 > 0.0 { (1.0 / r2).min(2.0) } else { 2.0 };
    m * (1.0 - r2)
}

/// `(B - (1-rho^2)/sqrt 2)^2 + sqrt 2 min(2 rho^2, 1) B (1 - rho^2) - W(rho)`.
#[inline]
pub fn well_inequality_margin(rho: f64, b: f64) -> f64 {
    let r2 = rho * rho;
    let m = (2.0 * r2).min(1.0);
    let d = well_residual(b, r2);
    d * d + SQRT_2 * m * b * (1.0 - r2) - w_potential(rho)
}

/// Modica-Mortola functional `int eps |grad rho|^2 + W(rho)/eps` with the
/// plaquette collocation of the energy.
pub fn modica_mortola(rho: &[f64], grid: &Grid, epsilon: f64, region: Option<&[bool]>) -> Result<f64> {
    if rho.len() != grid.len() {
        return Err(Gl2dError::Validation(format!(
            "rho has {} values for {} sites",
            rho.len(),
            grid.len()
        )));
    }
    let h2 = grid.h * grid.h;
    Ok(sum_rows(grid.ny, |j| {
        let mut s = 0.0;
        for i in 0..grid.nx {
            if !grid.owns_plaquette(i, j) {
                continue;
            }
            let k = grid.idx(i, j);
            if let Some(m) = region {
                if !m[k] {
                    continue;
                }
            }
            let (e, _) = grid.east(i, j).unwrap();
            let (n, _) = grid.north(i, j).unwrap();
            let g1 = (rho[e] - rho[k]) / grid.h;
            let g2 = (rho[n] - rho[k]) / grid.h;
            s += epsilon * (g1 * g1 + g2 * g2) + w_potential(rho[k]) / epsilon;
        }
        s * h2
    }))
}

/// Ingredients of the weak Meissner estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeissnerIndicator {
    /// `|int rho^2 B phi|`
    pub lhs: f64,
    /// `E ||phi||_inf`
    pub energy_sup: f64,
    /// `eps^(1/2) E^(1/2) ||grad phi||_2`
    pub energy_grad: f64,
    /// `eps |oint phi j . dl|`, zero on the torus
    pub boundary: f64,
}

impl MeissnerIndicator {
    /// Smallest constant `C` with `lhs <= C eps (sum of the three parts)`.
    pub fn constant(&self, epsilon: f64) -> f64 {
        let rhs = epsilon * (self.energy_sup + self.energy_grad + self.boundary);
        if rhs > 0.0 {
            self.lhs / rhs
        } else if self.lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

pub fn meissner_indicator(cfg: &Configuration, phi: &[f64]) -> Result<MeissnerIndicator> {
    let g = cfg.grid;
    if phi.len() != g.len() {
        return Err(Gl2dError::Validation(format!(
            "phi has {} values for {} sites",
            phi.len(),
            g.len()
        )));
    }
    let h2 = g.h * g.h;
    let eps = cfg.params.epsilon;
    let [lhs, grad2] = sum_rows_n::<2, _>(g.ny, |j| {
        let mut acc = [0.0; 2];
        for i in 0..g.nx {
            if !g.owns_plaquette(i, j) {
                continue;
            }
            let k = g.idx(i, j);
            acc[0] += cfg.u[k].norm_sqr() * cfg.curl_at(i, j) * phi[k];
            let (e, _) = g.east(i, j).unwrap();
            let (n, _) = g.north(i, j).unwrap();
            let d1 = (phi[e] - phi[k]) / g.h;
            let d2 = (phi[n] - phi[k]) / g.h;
            acc[1] += d1 * d1 + d2 * d2;
        }
        [acc[0] * h2, acc[1] * h2]
    });
    let e = total_energy(cfg, None).total;
    let sup = phi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let boundary = if g.is_torus() {
        0.0
    } else {
        let [j1, j2] = cfg.supercurrent();
        let mut circ = 0.0;
        for i in 0..g.nx - 1 {
            let (b, t) = (g.idx(i, 0), g.idx(i, g.ny - 1));
            circ += (phi[b] * j1[b] - phi[t] * j1[t]) * g.h;
        }
        for j in 0..g.ny - 1 {
            let (l, r) = (g.idx(0, j), g.idx(g.nx - 1, j));
            circ += (phi[r] * j2[r] - phi[l] * j2[l]) * g.h;
        }
        eps * circ.abs()
    };
    Ok(MeissnerIndicator {
        lhs: lhs.abs(),
        energy_sup: e * sup,
        energy_grad: (eps * e).sqrt() * grad2.sqrt(),
        boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::LinkField;
    use crate::grid::Grid;
    use crate::params::make_params;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cfg(grid: Grid, seed: u64, twist: f64) -> Configuration {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = make_params(0.35, 0.3, 0.0).unwrap();
        let u = (0..grid.len())
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut a = LinkField::zeros(grid.len(), if grid.is_torus() { twist } else { 0.0 });
        for k in 0..grid.len() {
            a.a1[k] = rng.gen_range(-0.1..0.1);
            a.a2[k] = rng.gen_range(-0.1..0.1);
        }
        Configuration::new(grid, params, u, a).unwrap()
    }

    #[test]
    fn trivial_energies() {
        let p = make_params(0.1, 0.3, 0.0).unwrap();
        let c = Configuration::torus_uniform(16, p, C64::new(1.0, 0.0)).unwrap();
        assert_eq!(total_energy(&c, None).total, 0.0);

        let p = make_params(0.1, 0.3, 0.3 / SQRT_2 * 0.999).unwrap();
        let mut c = Configuration::uniform(Grid::torus(16, 1.0).unwrap(), p, C64::new(0.0, 0.0), 0.0);
        c.a.twist_c = 1.0 / SQRT_2;
        assert!(total_energy(&c, None).total < 1e-28);

        let p = make_params(1.0, 0.3, 0.0).unwrap();
        let c = Configuration::uniform(Grid::torus(16, 1.0).unwrap(), p, C64::new(0.0, 0.0), 0.0);
        let e = total_energy(&c, None);
        assert!((e.total - 0.5).abs() < 1e-14);
        assert!((e.region_area - 1.0).abs() < 1e-14);
    }

    #[test]
    fn breakdown_sums_and_is_nonnegative() {
        let c = random_cfg(Grid::torus(12, 1.0).unwrap(), 5, 0.4);
        let e = total_energy(&c, None);
        assert!(e.grad_sym >= 0.0 && e.grad_bogo >= 0.0 && e.well >= 0.0);
        assert!((e.total - (e.grad_sym + e.grad_bogo + e.well)).abs() <= 1e-12 * e.total);
        let per = plaquette_energies(&c);
        assert!((per.iter().sum::<f64>() - e.total).abs() <= 1e-11 * e.total);
        let (ew, _) = energy_with_gradient(&c);
        assert!((ew - e.total).abs() <= 1e-12 * e.total);
    }

    #[test]
    fn region_additivity() {
        let c = random_cfg(Grid::rectangle(9, 7, 0.1, [0.0, 0.0]).unwrap(), 2, 0.0);
        let mask: Vec<bool> = (0..c.grid.len()).map(|k| k % 3 == 0).collect();
        let inv: Vec<bool> = mask.iter().map(|b| !b).collect();
        let (a, b) = (total_energy(&c, Some(&mask)), total_energy(&c, Some(&inv)));
        let t = total_energy(&c, None);
        assert!((a.total + b.total - t.total).abs() <= 1e-12 * t.total);
        assert!((a.region_area + b.region_area - c.grid.area()).abs() < 1e-12);
    }

    #[test]
    fn serializes_flat() {
        let v = serde_json::to_value(EnergyBreakdown::default()).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        for k in ["grad_sym", "grad_bogo", "well", "total", "region_area"] {
            assert!(keys.iter().any(|x| x == k));
        }
    }

    #[test]
    fn zero_gradient_at_superconducting_well() {
        let p = make_params(0.1, 0.3, 0.0).unwrap();
        let c = Configuration::torus_uniform(8, p, C64::new(1.0, 0.0)).unwrap();
        let gr = energy_gradient(&c);
        assert_eq!(gr.norm_sqr(), 0.0);
    }

    fn fd_check(c: &Configuration, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = c.grid.len();
        let du: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let da1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let da2: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gr = energy_gradient(c);
        let mut dd = 0.0;
        for k in 0..n {
            dd += gr.gu[k].re * du[k].re + gr.gu[k].im * du[k].im + gr.ga1[k] * da1[k] + gr.ga2[k] * da2[k];
        }
        let step = 1e-5;
        let shifted = |s: f64| {
            let mut c2 = c.clone();
            for k in 0..n {
                c2.u[k] += du[k] * s;
                c2.a.a1[k] += da1[k] * s;
                c2.a.a2[k] += da2[k] * s;
            }
            total_energy(&c2, None).total
        };
        let fd = (shifted(step) - shifted(-step)) / (2.0 * step);
        (fd - dd).abs() / dd.abs().max(1e-30)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..6 {
            let c = random_cfg(Grid::torus(8, 1.0).unwrap(), seed, 0.25 * seed as f64);
            assert!(fd_check(&c, seed + 100) < 1e-6, "torus seed {seed}");
            let c = random_cfg(Grid::rectangle(7, 6, 0.15, [-0.5, 0.0]).unwrap(), seed, 0.0);
            assert!(fd_check(&c, seed + 200) < 1e-6, "rect seed {seed}");
        }
    }

    #[test]
    fn gradient_is_gauge_equivariant() {
        let c = random_cfg(Grid::torus(10, 1.0).unwrap(), 1, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let phi: Vec<f64> = (0..c.grid.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let c2 = c.gauge_transform(&phi).unwrap();
        let (g1, g2) = (energy_gradient(&c), energy_gradient(&c2));
        let scale = g1.norm_sqr().sqrt();
        for k in 0..c.grid.len() {
            let rot = g1.gu[k] * C64::from_polar(1.0, phi[k]);
            assert!((rot - g2.gu[k]).norm() <= 1e-10 * scale);
            assert!((g1.ga1[k] - g2.ga1[k]).abs() <= 1e-10 * scale);
            assert!((g1.ga2[k] - g2.ga2[k]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn identity_residual_trivial() {
        let p = make_params(0.5, 0.3, 0.0).unwrap();
        let c = Configuration::torus_uniform(8, p, C64::new(0.6, 0.3)).unwrap();
        assert_eq!(bogomolny_identity_residual(&c), 0.0);
    }

    #[test]
    fn modica_mortola_examples() {
        let g = Grid::torus(8, 1.0).unwrap();
        assert_eq!(modica_mortola(&vec![1.0; 64], &g, 0.1, None).unwrap(), 0.0);
        assert_eq!(modica_mortola(&vec![0.0; 64], &g, 0.1, None).unwrap(), 0.0);
        let v = modica_mortola(&vec![1.0 / SQRT_2; 64], &g, 0.1, None).unwrap();
        assert!((v - 1.0 / 0.8).abs() < 1e-12);
        assert!(modica_mortola(&[0.0], &g, 0.1, None).is_err());
    }

    #[test]
    fn margin_examples() {
        assert_eq!(well_inequality_margin(1.0, 0.0), 0.0);
        assert!(well_inequality_margin(0.0, 1.0 / SQRT_2).abs() < 1e-16);
        assert_eq!(psi(0.0), 2.0);
        assert_eq!(psi(1.0), 0.0);
    }

    #[test]
    fn meissner_trivial_cases() {
        let p = make_params(0.2, 0.3, 0.0).unwrap();
        let c = Configuration::torus_uniform(8, p, C64::new(1.0, 0.0)).unwrap();
        let m = meissner_indicator(&c, &vec![1.0; 64]).unwrap();
        assert_eq!(m.lhs, 0.0);
        let c = random_cfg(Grid::torus(8, 1.0).unwrap(), 3, 0.2);
        let m = meissner_indicator(&c, &vec![1.0; 64]).unwrap();
        assert_eq!(m.energy_grad, 0.0);
        assert_eq!(m.boundary, 0.0);
    }

    proptest! {
        #[test]
        fn young_margin_nonnegative(rho in 0.0f64..=1.0, b in -2.0f64..2.0) {
            prop_assert!(well_inequality_margin(rho, b) >= -1e-14);
            let s = psi(rho);
            prop_assert!((0.0..=2.0).contains(&s));
        }

        #[test]
        fn margin_closed_form(rho in 0.0f64..=1.0, b in -2.0f64..2.0) {
            // (1 - m) d^2 + m B^2 with d the well residual
            let m = (2.0 * rho * rho).min(1.0);
            let d = well_residual(b, rho * rho);
            let expect = (1.0 - m) * d * d + m * b * b;
            prop_assert!((well_inequality_margin(rho, b) - expect).abs() < 1e-12);
        }

        #[test]
        fn energy_gauge_invariant(seed in 0u64..500, twist in -0.5f64..0.5) {
            let c = random_cfg(Grid::torus(9, 1.0).unwrap(), seed, twist);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let phi: Vec<f64> = (0..c.grid.len()).map(|_| rng.gen_range(-6.0..6.0)).collect();
            let e0 = total_energy(&c, None).total;
            let e1 = total_energy(&c.gauge_transform(&phi).unwrap(), None).total;
            prop_assert!((e0 - e1).abs() <= 1e-12 * e0);
        }
    }
}

//! Order parameter and link variables with the gauge-covariant difference
//! calculus.
//!
//! On the torus the continuum potential is `A_per + (0, c x1)` with
//! `c = twist_c`. The stored `u` is the restriction to `[0, side)^2` of a field
//! obeying `u(x + side e1) = exp(i alpha c side x2) u(x)`, which is single valued
//! in x2 exactly when `alpha c side^2` is a multiple of `2 pi`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Gl2dError, Result};
use crate::grid::Grid;
use crate::params::Params;
use crate::reduce::sum_rows;

pub type C64 = Complex64;

/// Default tolerance of the `rho <= 1` admissibility check.
pub const TOL_ADMISSIBLE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkField {
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    /// Background field density carried by `(0, twist_c x1)`; zero on rectangles.
    pub twist_c: f64,
}

impl LinkField {
    pub fn zeros(len: usize, twist_c: f64) -> Self {
        LinkField {
            a1: vec![0.0; len],
            a2: vec![0.0; len],
            twist_c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub grid: Grid,
    pub params: Params,
    pub u: Vec<C64>,
    pub a: LinkField,
}

impl Configuration {
    pub fn new(grid: Grid, params: Params, u: Vec<C64>, a: LinkField) -> Result<Self> {
        let n = grid.len();
        if u.len() != n || a.a1.len() != n || a.a2.len() != n {
            return Err(Gl2dError::Validation(format!(
                "field sizes ({}, {}, {}) do not match grid with {} sites",
                u.len(),
                a.a1.len(),
                a.a2.len(),
                n
            )));
        }
        if !grid.is_torus() && a.twist_c != 0.0 {
            return Err(Gl2dError::Validation(
                "twist_c must be 0 on rectangles".into(),
            ));
        }
        Ok(Configuration { grid, params, u, a })
    }

    /// Constant order parameter, zero periodic potential.
    pub fn uniform(grid: Grid, params: Params, u0: C64, twist_c: f64) -> Self {
        let n = grid.len();
        let twist_c = if grid.is_torus() { twist_c } else { 0.0 };
        Configuration {
            grid,
            params,
            u: vec![u0; n],
            a: LinkField::zeros(n, twist_c),
        }
    }

    /// Torus configuration whose twist carries the flux `b_ext / kappa`.
    pub fn torus_uniform(n: usize, params: Params, u0: C64) -> Result<Self> {
        let grid = Grid::torus(n, 1.0)?;
        Ok(Configuration::uniform(grid, params, u0, params.flux()))
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.params.alpha
    }

    /// Effective second component `a2 + twist_c x1` at column `i`, where `i`
    /// may equal `nx` (the seam image of column 0).
    #[inline]
    pub fn a2_eff_col(&self, i: usize, j: usize) -> f64 {
        let g = &self.grid;
        if i == g.nx {
            self.a.a2[g.idx(0, j)] + self.a.twist_c * g.side()
        } else {
            self.a.a2[g.idx(i, j)] + self.a.twist_c * i as f64 * g.h
        }
    }

    /// Parallel transporter along the link `(1, p)` and the neighbour index:
    /// `D1 u(p) = (U1 u(q) - u(p)) / h`.
    #[inline]
    pub fn transport1(&self, i: usize, j: usize) -> Option<(usize, C64)> {
        let g = &self.grid;
        let (q, seam) = g.east(i, j)?;
        let ah = self.params.alpha * g.h;
        let mut phase = -ah * self.a.a1[g.idx(i, j)];
        if seam {
            phase += self.params.alpha * self.a.twist_c * g.x2(j) * g.side();
        }
        Some((q, C64::from_polar(1.0, phase)))
    }

    /// Parallel transporter along the link `(2, p)` and the neighbour index.
    #[inline]
    pub fn transport2(&self, i: usize, j: usize) -> Option<(usize, C64)> {
        let g = &self.grid;
        let (q, _) = g.north(i, j)?;
        let ah = self.params.alpha * g.h;
        Some((q, C64::from_polar(1.0, -ah * self.a2_eff_col(i, j))))
    }

    /// Both covariant differences at site `(i, j)`; a missing link gives 0.
    #[inline]
    pub fn diffs_at(&self, i: usize, j: usize) -> (C64, C64) {
        let g = &self.grid;
        let p = g.idx(i, j);
        let up = self.u[p];
        let inv_h = 1.0 / g.h;
        let d1 = match self.transport1(i, j) {
            Some((q, t)) => (t * self.u[q] - up) * inv_h,
            None => C64::new(0.0, 0.0),
        };
        let d2 = match self.transport2(i, j) {
            Some((q, t)) => (t * self.u[q] - up) * inv_h,
            None => C64::new(0.0, 0.0),
        };
        (d1, d2)
    }

    /// Discrete covariant derivative `D_mu u` per site (`mu` is 1 or 2).
    pub fn covariant_diff(&self, mu: usize) -> Vec<C64> {
        let g = self.grid;
        let mut out = vec![C64::new(0.0, 0.0); g.len()];
        out.par_chunks_mut(g.nx).enumerate().for_each(|(j, row)| {
            for (i, o) in row.iter_mut().enumerate() {
                let (d1, d2) = self.diffs_at(i, j);
                *o = if mu == 1 { d1 } else { d2 };
            }
        });
        out
    }

    /// Discrete curl on plaquette `(i, j)`; callers check ownership.
    #[inline]
    pub fn curl_at(&self, i: usize, j: usize) -> f64 {
        let g = &self.grid;
        let a1 = &self.a.a1;
        let jn = if j + 1 < g.ny { j + 1 } else { 0 };
        (self.a2_eff_col(i + 1, j) - self.a2_eff_col(i, j) - a1[g.idx(i, jn)] + a1[g.idx(i, j)])
            / g.h
    }

    /// Per-plaquette magnetic field; zero on plaquettes outside a rectangle.
    pub fn discrete_curl(&self) -> Vec<f64> {
        let g = self.grid;
        let mut out = vec![0.0; g.len()];
        out.par_chunks_mut(g.nx).enumerate().for_each(|(j, row)| {
            for (i, o) in row.iter_mut().enumerate() {
                if g.owns_plaquette(i, j) {
                    *o = self.curl_at(i, j);
                }
            }
        });
        out
    }

    /// Total flux `h^2 sum_p B_p`.
    pub fn flux(&self) -> f64 {
        let g = self.grid;
        let h2 = g.h * g.h;
        sum_rows(g.ny, |j| {
            let mut s = 0.0;
            for i in 0..g.nx {
                if g.owns_plaquette(i, j) {
                    s += self.curl_at(i, j);
                }
            }
            s * h2
        })
    }

    /// Supercurrent `j_mu = Im(conj(u) D_mu u)` per site.
    pub fn supercurrent(&self) -> [Vec<f64>; 2] {
        let g = self.grid;
        let mut j1 = vec![0.0; g.len()];
        let mut j2 = vec![0.0; g.len()];
        j1.par_chunks_mut(g.nx)
            .zip(j2.par_chunks_mut(g.nx))
            .enumerate()
            .for_each(|(j, (r1, r2))| {
                for i in 0..g.nx {
                    let (d1, d2) = self.diffs_at(i, j);
                    let uc = self.u[g.idx(i, j)].conj();
                    r1[i] = (uc * d1).im;
                    r2[i] = (uc * d2).im;
                }
            });
        [j1, j2]
    }

    /// `(u, A) -> (u e^{i phi}, A + grad_h phi / alpha)` with the forward
    /// difference of `phi` on every link; leaves all covariant moduli invariant.
    pub fn gauge_transform(&self, phi: &[f64]) -> Result<Configuration> {
        let g = self.grid;
        if phi.len() != g.len() {
            return Err(Gl2dError::Validation(format!(
                "phi has {} values for {} sites",
                phi.len(),
                g.len()
            )));
        }
        let scale = 1.0 / (self.params.alpha * g.h);
        let mut out = self.clone();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let p = g.idx(i, j);
                out.u[p] = self.u[p] * C64::from_polar(1.0, phi[p]);
                if let Some((q, _)) = g.east(i, j) {
                    out.a.a1[p] = self.a.a1[p] + (phi[q] - phi[p]) * scale;
                }
                if let Some((q, _)) = g.north(i, j) {
                    out.a.a2[p] = self.a.a2[p] + (phi[q] - phi[p]) * scale;
                }
            }
        }
        Ok(out)
    }

    pub fn rho(&self) -> Vec<f64> {
        self.u.iter().map(|z| z.norm()).collect()
    }

    /// Phase per site, `None` where `rho = 0`.
    pub fn theta(&self) -> Vec<Option<f64>> {
        self.u
            .iter()
            .map(|z| if z.norm() > 0.0 { Some(z.arg()) } else { None })
            .collect()
    }

    pub fn max_rho(&self) -> f64 {
        self.u.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `rho <= 1 + tol` at every site.
    pub fn is_admissible(&self, tol: f64) -> bool {
        self.max_rho() <= 1.0 + tol
    }
}

/// Bogomolny combination `d2 - i d1` per site.
pub fn bogomolny(d1: &[C64], d2: &[C64]) -> Result<Vec<C64>> {
    if d1.len() != d2.len() {
        return Err(Gl2dError::Validation(format!(
            "mismatched fields: {} vs {} sites",
            d1.len(),
            d2.len()
        )));
    }
    let i = C64::new(0.0, 1.0);
    Ok(d1.iter().zip(d2).map(|(&a, &b)| b - i * a).collect())
}

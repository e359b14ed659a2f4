//! The cell building block: the rescaled 1D profile lifted to the unit cell
//! `[-1/2, 1/2]^2`, truncated so that it is exactly superconducting for
//! `x1 < -delta0` and exactly normal for `x1 > delta0`.

use std::f64::consts::SQRT_2;

use serde::Serialize;

use super::Profile1D;
use crate::energy::{total_energy, EnergyBreakdown};
use crate::error::{Gl2dError, Result};
use crate::field::{Configuration, C64};
use crate::grid::Grid;
use crate::params::Params;

/// Profile values below this are set to zero.
pub const TAIL_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct BuildingBlock {
    pub profile: Profile1D,
    /// Profile coordinate mapped to `x1 = 0`.
    pub t_center: f64,
    pub eps0: f64,
    pub delta0: f64,
    pub cell_n: usize,
    /// Lift sampled on the `(cell_n + 1)^2` rectangle grid of the cell.
    pub cfg: Configuration,
    pub energy: EnergyBreakdown,
    /// Cell energy at `epsilon = eps0`.
    pub sigma_cell: f64,
    /// Total flux through the cell.
    pub flux0: f64,
}

/// Scalar summary of a block.
#[derive(Debug, Clone, Serialize)]
pub struct BlockSummary {
    pub kappa: f64,
    pub eps0: f64,
    pub delta0: f64,
    pub cell_n: usize,
    pub sigma_cell: f64,
    pub flux0: f64,
    pub energy_1d: f64,
    pub energy: EnergyBreakdown,
}

#[inline]
fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// `(rho, A2)` of the truncated block at cell coordinate `y`, for profile
/// `p` centered at `t_center`.
fn block_trace(p: &Profile1D, t_center: f64, eps0: f64, delta0: f64, y: f64) -> (f64, f64) {
    if y <= -delta0 {
        return (1.0, 0.0);
    }
    if y >= delta0 {
        return (0.0, y / SQRT_2);
    }
    let (r0, a0) = p.sample(y / eps0 + t_center);
    let mut rho = r0;
    let mut a = eps0 * a0;
    let w = eps0;
    if y < -delta0 + w {
        let s = smoothstep((y + delta0) / w);
        rho = rho * s + (1.0 - s);
        a *= s;
    }
    if y > delta0 - w {
        let s = smoothstep((delta0 - y) / w);
        rho *= s;
        a = a * s + (1.0 - s) * y / SQRT_2;
    }
    if rho < TAIL_TOL {
        rho = 0.0;
    }
    (rho.clamp(0.0, 1.0), a)
}

impl BuildingBlock {
    /// `(rho, A2)` of the block at cell coordinate `y`; constant `(1, 0)` to
    /// the left of `-delta0` and `(0, y / sqrt 2)` to the right of `delta0`.
    pub fn trace(&self, y: f64) -> (f64, f64) {
        block_trace(&self.profile, self.t_center, self.eps0, self.delta0, y)
    }

    pub fn kappa(&self) -> f64 {
        self.profile.kappa
    }

    /// Checks the strip conditions: `u = 1` and `A = 0` left of `-delta0`,
    /// `u = 0` and `B = 1/sqrt 2` right of `delta0`, `A1 = 0` everywhere.
    pub fn check_membership(&self) -> Result<()> {
        let c = &self.cfg;
        let g = c.grid;
        let b = c.discrete_curl();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = g.idx(i, j);
                let x = g.x1(i);
                if c.a.a1[k] != 0.0 {
                    return Err(Gl2dError::Geometry(format!("a1 != 0 at site ({i}, {j})")));
                }
                if x < -self.delta0 && (c.u[k] != C64::new(1.0, 0.0) || c.a.a2[k] != 0.0) {
                    return Err(Gl2dError::Geometry(format!(
                        "superconducting strip violated at x1 = {x}"
                    )));
                }
                if x > self.delta0 && c.u[k] != C64::new(0.0, 0.0) {
                    return Err(Gl2dError::Geometry(format!("normal strip violated at x1 = {x}")));
                }
                if g.owns_plaquette(i, j) && x >= self.delta0 && (b[k] - 1.0 / SQRT_2).abs() > 1e-12 {
                    return Err(Gl2dError::Geometry(format!(
                        "B = {} != 1/sqrt 2 at x1 = {x}",
                        b[k]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Cell energy at `epsilon = eps0` of the lift turned so that the profile
    /// runs along the unit axis `nu`, sampled on the block grid. Equals
    /// `sigma_cell` for `nu = e1` and `sigma_cell` is returned for other
    /// directions that are not axis aligned.
    pub fn sigma_oriented(&self, nu: [f64; 2]) -> f64 {
        let axis = nu[0].abs() < 1e-12 || nu[1].abs() < 1e-12;
        if !axis || (nu[0] - 1.0).abs() < 1e-12 {
            return self.sigma_cell;
        }
        let g = self.cfg.grid;
        let mut cfg = Configuration::uniform(g, self.cfg.params, C64::new(0.0, 0.0), 0.0);
        let tau = [-nu[1], nu[0]];
        for k in 0..g.len() {
            let (i, j) = g.coords(k);
            let y = g.x1(i) * nu[0] + g.x2(j) * nu[1];
            let (r, a) = self.trace(y);
            cfg.u[k] = C64::new(r, 0.0);
            // each link keeps the coordinate along nu of its site
            cfg.a.a1[k] = a * tau[0];
            cfg.a.a2[k] = a * tau[1];
        }
        total_energy(&cfg, None).total
    }

    pub fn summary(&self) -> BlockSummary {
        BlockSummary {
            kappa: self.kappa(),
            eps0: self.eps0,
            delta0: self.delta0,
            cell_n: self.cell_n,
            sigma_cell: self.sigma_cell,
            flux0: self.flux0,
            energy_1d: self.profile.energy_1d,
            energy: self.energy,
        }
    }
}

/// Lifts `p` to the unit cell at interface width `eps0`, truncates it at
/// `+-delta0`, and records its cell energy and flux.
pub fn build_block(p: &Profile1D, eps0: f64, delta0: f64, cell_n: usize) -> Result<BuildingBlock> {
    if !(eps0 > 0.0 && eps0 < delta0 && delta0 < 0.5) {
        return Err(Gl2dError::Validation(format!(
            "need 0 < eps0 < delta0 < 1/2 (got eps0 = {eps0}, delta0 = {delta0})"
        )));
    }
    let t_center = p.flux_center();
    if delta0 / eps0 + t_center.abs() > p.t_max {
        return Err(Gl2dError::Validation(format!(
            "profile on [-{0}, {0}] does not cover delta0/eps0 = {1}",
            p.t_max,
            delta0 / eps0
        )));
    }
    if cell_n < 4 {
        return Err(Gl2dError::Validation(format!("cell_n must be >= 4 (got {cell_n})")));
    }
    let h = 1.0 / cell_n as f64;
    let grid = Grid::rectangle(cell_n + 1, cell_n + 1, h, [-0.5, -0.5])?;
    let params = Params::new(eps0, p.kappa, 0.0)?;
    let mut cfg = Configuration::uniform(grid, params, C64::new(0.0, 0.0), 0.0);
    let cols: Vec<(f64, f64)> = (0..grid.nx)
        .map(|i| block_trace(p, t_center, eps0, delta0, grid.x1(i)))
        .collect();
    for k in 0..grid.len() {
        let (r, a) = cols[grid.coords(k).0];
        cfg.u[k] = C64::new(r, 0.0);
        cfg.a.a2[k] = a;
    }
    let energy = total_energy(&cfg, None);
    let flux0 = cfg.flux();
    let block = BuildingBlock {
        profile: p.clone(),
        t_center,
        eps0,
        delta0,
        cell_n,
        cfg,
        energy,
        sigma_cell: energy.total,
        flux0,
    };
    let (lo, hi) = (1.0 / (4.0 * SQRT_2), 3.0 / (4.0 * SQRT_2));
    if !(flux0 > lo && flux0 <= hi) {
        return Err(Gl2dError::BlockFluxOutOfRange { flux: flux0, lo, hi });
    }
    block.check_membership()?;
    Ok(block)
}

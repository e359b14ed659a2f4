//! Constrained minimization of the lattice energy: torus ground states at
//! fixed flux, the strip-constrained cell problems, epsilon sweeps and the
//! height-scaling check.

pub mod descent;

use std::f64::consts::SQRT_2;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::energy::{energy_with_gradient, total_energy, EnergyBreakdown};
use crate::error::{Gl2dError, Result};
use crate::field::{Configuration, C64, TOL_ADMISSIBLE};
use crate::grid::Grid;
use crate::json::fmt17;
use crate::params::{admissible_epsilons, Params};
use crate::polygeom::PolyhedralSet;
use crate::profile1d::block::{build_block, BuildingBlock};
use crate::profile1d::{minimize_profile1d, Profile1D};
use crate::recovery::{build_recovery, close_flux, global_potential, RecoveryOptions};
use crate::reduce::pairwise_sum;
use descent::{bb_descent, DescentOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// Periodic torus; the flux lives in the fixed twist.
    TorusFlux,
    /// `(u, A) = (1, 0)` for `x1 < -delta`, `(u, B) = (0, 1/sqrt 2)` for
    /// `x1 > delta`, `A1 = 0`.
    DirichletCell,
    /// The Dirichlet cell with `u` also pinned on the bottom and top rows.
    PeriodicCell,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub kind: BoundaryKind,
    /// Strip half-width of the cell kinds; ignored on the torus.
    pub delta: f64,
}

impl BoundarySpec {
    pub fn torus() -> Self {
        BoundarySpec { kind: BoundaryKind::TorusFlux, delta: 0.0 }
    }

    pub fn dirichlet(delta: f64) -> Self {
        BoundarySpec { kind: BoundaryKind::DirichletCell, delta }
    }

    pub fn periodic(delta: f64) -> Self {
        BoundarySpec { kind: BoundaryKind::PeriodicCell, delta }
    }

    /// Degrees of freedom of `cfg` under these boundary conditions. Fails when `cfg` does not
    /// hold the prescribed values.
    pub fn constraints(&self, cfg: &Configuration) -> Result<Constraints> {
        let g = cfg.grid;
        let n = g.len();
        let mut free = vec![true; 4 * n];
        let mut tie = None;
        match self.kind {
            BoundaryKind::TorusFlux => {
                if !g.is_torus() {
                    return Err(Gl2dError::Validation("torus_flux needs a torus grid".into()));
                }
            }
            BoundaryKind::DirichletCell | BoundaryKind::PeriodicCell => {
                if g.is_torus() {
                    return Err(Gl2dError::Validation("cell boundary specs need a rectangle grid".into()));
                }
                let d = self.delta;
                let (x0, x1) = (g.x1(0), g.x1(g.nx - 1));
                if !(d > 0.0 && -d > x0 && d < x1) {
                    return Err(Gl2dError::Validation(format!(
                        "delta = {d} must leave both strips inside [{x0}, {x1}]"
                    )));
                }
                // last column at or left of delta carries the normal-side potential
                let i0 = (0..g.nx).rev().find(|&i| g.x1(i) <= d).unwrap_or(0);
                let bad = |what: &str, k: usize| {
                    let (i, j) = g.coords(k);
                    Err(Gl2dError::Validation(format!("initial {what} violates the boundary conditions at site ({i}, {j})")))
                };
                for k in 0..n {
                    let (i, j) = g.coords(k);
                    let x = g.x1(i);
                    if cfg.a.a1[k] != 0.0 {
                        return bad("a1", k);
                    }
                    free[2 * n + k] = false;
                    if x < -d {
                        if cfg.u[k] != C64::new(1.0, 0.0) {
                            return bad("u", k);
                        }
                        if cfg.a.a2[k] != 0.0 {
                            return bad("a2", k);
                        }
                        free[k] = false;
                        free[n + k] = false;
                        free[3 * n + k] = false;
                    } else if x > d {
                        if cfg.u[k] != C64::new(0.0, 0.0) {
                            return bad("u", k);
                        }
                        let want = cfg.a.a2[g.idx(i0, j)] + (x - g.x1(i0)) / SQRT_2;
                        if (cfg.a.a2[k] - want).abs() > 1e-12 {
                            return bad("a2", k);
                        }
                        free[k] = false;
                        free[n + k] = false;
                        free[3 * n + k] = false;
                    }
                    if !g.has_link(2, i, j) {
                        free[3 * n + k] = false;
                    }
                    if self.kind == BoundaryKind::PeriodicCell && (j == 0 || j + 1 == g.ny) {
                        free[k] = false;
                        free[n + k] = false;
                    }
                }
                tie = Some(Tie { i0, h: g.h, nx: g.nx, ny: g.ny });
            }
        }
        Ok(Constraints { free, tie, n })
    }
}

/// Normal-side columns whose `a2` follows column `i0` with slope `1/sqrt 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Tie {
    i0: usize,
    h: f64,
    nx: usize,
    ny: usize,
}

/// Free mask over the packed vector `[Re u, Im u, a1, a2]` and the tied
/// columns of the cell specs.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraints {
    pub free: Vec<bool>,
    tie: Option<Tie>,
    n: usize,
}

impl Constraints {
    pub fn n_free(&self) -> usize {
        self.free.iter().filter(|&&f| f).count()
    }

    /// Rewrites the tied entries of a packed vector from their anchors.
    pub fn project(&self, x: &mut [f64]) {
        if let Some(t) = self.tie {
            let off = 3 * self.n;
            for j in 0..t.ny {
                let anchor = x[off + j * t.nx + t.i0];
                for i in t.i0 + 1..t.nx {
                    x[off + j * t.nx + i] = anchor + (i - t.i0) as f64 * t.h / SQRT_2;
                }
            }
        }
    }

    /// Moves the gradient of the tied entries onto their anchors.
    fn pull_back(&self, grad: &mut [f64]) {
        if let Some(t) = self.tie {
            let off = 3 * self.n;
            for j in 0..t.ny {
                let mut acc = 0.0;
                for i in t.i0 + 1..t.nx {
                    acc += grad[off + j * t.nx + i];
                    grad[off + j * t.nx + i] = 0.0;
                }
                grad[off + j * t.nx + t.i0] += acc;
            }
        }
        for (g, &f) in grad.iter_mut().zip(&self.free) {
            if !f {
                *g = 0.0;
            }
        }
    }
}

fn pack(cfg: &Configuration) -> Vec<f64> {
    let mut x = Vec::with_capacity(4 * cfg.grid.len());
    x.extend(cfg.u.iter().map(|z| z.re));
    x.extend(cfg.u.iter().map(|z| z.im));
    x.extend_from_slice(&cfg.a.a1);
    x.extend_from_slice(&cfg.a.a2);
    x
}

fn unpack(x: &[f64], cfg: &mut Configuration) {
    let n = cfg.grid.len();
    for k in 0..n {
        cfg.u[k] = C64::new(x[k], x[n + k]);
    }
    cfg.a.a1.copy_from_slice(&x[2 * n..3 * n]);
    cfg.a.a2.copy_from_slice(&x[3 * n..]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Projected gradient tolerance; `None` means `1e-8` times the number of
    /// sites.
    pub tol: Option<f64>,
    pub max_iter: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions { tol: None, max_iter: 50_000 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimizeResult {
    #[serde(skip)]
    pub cfg: Configuration,
    pub energy: EnergyBreakdown,
    pub initial_energy: f64,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub converged: bool,
    /// Stopped on a flat energy before reaching the tolerance.
    pub stalled: bool,
    pub max_rho: f64,
    /// `max_rho <= 1 + TOL_ADMISSIBLE`. Checked, never enforced.
    pub admissible: bool,
    /// Energy after every accepted step, starting from the initial one.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// Descends from `cfg0` under `bc`. Frozen values are never written; the
/// energy is nonincreasing along accepted steps.
pub fn minimize(cfg0: &Configuration, bc: &BoundarySpec, opts: &MinimizeOptions) -> Result<MinimizeResult> {
    let cons = bc.constraints(cfg0)?;
    let n = cfg0.grid.len();
    let tol = opts.tol.unwrap_or(1e-8 * n as f64);
    let mut work = cfg0.clone();
    let mut buf = pack(cfg0);
    let x0 = buf.clone();
    let eval = |x: &[f64], grad: &mut [f64]| -> f64 {
        buf.copy_from_slice(x);
        cons.project(&mut buf);
        unpack(&buf, &mut work);
        let (e, gr) = energy_with_gradient(&work);
        for k in 0..n {
            grad[k] = gr.gu[k].re;
            grad[n + k] = gr.gu[k].im;
            grad[2 * n + k] = gr.ga1[k];
            grad[3 * n + k] = gr.ga2[k];
        }
        cons.pull_back(grad);
        e
    };
    let dopts = DescentOptions {
        max_iter: opts.max_iter,
        grad_tol: tol,
        ..Default::default()
    };
    let mut r = bb_descent(x0, Some(&cons.free), None, eval, &dopts);
    cons.project(&mut r.x);
    let mut cfg = cfg0.clone();
    unpack(&r.x, &mut cfg);
    let energy = total_energy(&cfg, None);
    Ok(MinimizeResult {
        max_rho: cfg.max_rho(),
        admissible: cfg.is_admissible(TOL_ADMISSIBLE),
        energy,
        initial_energy: r.trace[0],
        iterations: r.iterations,
        final_grad_norm: r.grad_norm,
        converged: r.converged,
        stalled: r.stalled,
        trace: r.trace,
        cfg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellVariant {
    Dirichlet,
    Periodic,
}

impl CellVariant {
    pub fn spec(self, delta: f64) -> BoundarySpec {
        match self {
            CellVariant::Dirichlet => BoundarySpec::dirichlet(delta),
            CellVariant::Periodic => BoundarySpec::periodic(delta),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub kappa: f64,
    pub eps0: f64,
    pub delta: f64,
    pub variant: CellVariant,
    pub n: usize,
    /// Minimal cell energy found.
    pub sigma: f64,
    /// Energy of the starting block.
    pub block_sigma: f64,
    pub sigma_1d: f64,
    pub result: MinimizeResult,
}

/// Profile used for every cell problem at `kappa`: long enough to cover
/// `delta / eps0` on the normal side.
pub fn cell_profile(kappa: f64, eps0: f64, delta: f64) -> Result<Profile1D> {
    let t = (delta / eps0 + 10.0).max(20.0);
    minimize_profile1d(kappa, t, (100.0 * t) as usize)
}

/// Minimal energy of the unit cell at `epsilon = eps0` under the strip
/// constraints of `variant`, started from the lifted 1D profile on an
/// `n x n`-cell grid.
pub fn cell_sigma(kappa: f64, eps0: f64, delta: f64, variant: CellVariant, n: usize, opts: &MinimizeOptions) -> Result<CellReport> {
    let prof = cell_profile(kappa, eps0, delta)?;
    let block = build_block(&prof, eps0, delta, n)?;
    cell_sigma_from(&block, variant, opts)
}

pub fn cell_sigma_from(block: &BuildingBlock, variant: CellVariant, opts: &MinimizeOptions) -> Result<CellReport> {
    let r = minimize(&block.cfg, &variant.spec(block.delta0), opts)?;
    Ok(CellReport {
        kappa: block.kappa(),
        eps0: block.eps0,
        delta: block.delta0,
        variant,
        n: block.cell_n,
        sigma: r.energy.total,
        block_sigma: block.sigma_cell,
        sigma_1d: block.profile.energy_1d,
        result: r,
    })
}

/// The block stacked `height` times along `x2`: the cell `Q_{1, height}`
/// with the same spacing.
pub fn tall_block(block: &BuildingBlock, height: usize) -> Result<Configuration> {
    let g = block.cfg.grid;
    let ny = (g.ny - 1) * height + 1;
    let tall = Grid::rectangle(g.nx, ny, g.h, [g.origin[0], g.origin[1]])?;
    let mut cfg = Configuration::uniform(tall, block.cfg.params, C64::new(0.0, 0.0), 0.0);
    for k in 0..tall.len() {
        let (i, _) = tall.coords(k);
        let src = g.idx(i, 0);
        cfg.u[k] = block.cfg.u[src];
        cfg.a.a2[k] = block.cfg.a.a2[src];
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub height: usize,
    pub energy: f64,
    pub per_height: f64,
    pub converged: bool,
}

/// Dirichlet cell minima on `Q_{1, b}` for every `b` in `heights`.
pub fn scaling_check(block: &BuildingBlock, heights: &[usize], opts: &MinimizeOptions) -> Result<Vec<ScalingRow>> {
    heights
        .iter()
        .map(|&b| {
            if b == 0 {
                return Err(Gl2dError::Validation("heights must be >= 1".into()));
            }
            let cfg = tall_block(block, b)?;
            let r = minimize(&cfg, &BoundarySpec::dirichlet(block.delta0), opts)?;
            Ok(ScalingRow {
                height: b,
                energy: r.energy.total,
                per_height: r.energy.total / b as f64,
                converged: r.converged,
            })
        })
        .collect()
}

/// Torus with `E` the vertical strip `1/4 < x1 < 3/4` at `epsilon`: the lifted
/// 1D profile across both interfaces, flux closed exactly, phase winding on
/// the right half.
pub fn flat_interface_init(prof: &Profile1D, params: &Params, n: usize) -> Result<Configuration> {
    let g = Grid::torus(n, 1.0)?;
    let c = params.flux();
    let eps = params.epsilon;
    let t_star = prof.flux_center();
    let rho_col: Vec<f64> = (0..n)
        .map(|i| {
            let x = g.x1(i);
            let d = (x - 0.25).min(0.75 - x);
            prof.sample(d / eps + t_star).0
        })
        .collect();
    let bcol: Vec<f64> = rho_col.iter().map(|r| (1.0 - r * r) / SQRT_2).collect();
    let total = pairwise_sum(&bcol) * g.h;
    if !(total > 0.0) {
        return Err(Gl2dError::Validation("flat interface has no normal phase".into()));
    }
    let mut b: Vec<f64> = (0..g.len()).map(|k| bcol[g.coords(k).0] * c / total).collect();
    close_flux(&g, &mut b, c, g.idx(n / 2, 0));
    let a = global_potential(&g, &b, c)?;
    let u: Vec<C64> = (0..g.len())
        .map(|k| {
            let (i, j) = g.coords(k);
            let theta = if g.x1(i) < 0.5 { 0.0 } else { params.alpha * c * g.x2(j) };
            C64::from_polar(rho_col[i], theta)
        })
        .collect();
    Configuration::new(g, *params, u, a)
}

#[derive(Debug, Clone)]
pub enum Scenario {
    /// The strip `1/4 < x1 < 3/4`, perimeter 2.
    FlatInterface,
    /// Recovery over `set` with block width `eps0` and truncation `delta0`.
    Recovery { set: PolyhedralSet, eps0: f64, delta0: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub n: usize,
    pub m: u64,
    pub initial_energy: f64,
    pub energy: f64,
    pub energy_per_perimeter: f64,
    /// `int (B - (1 - rho^2)/sqrt 2)^2`.
    pub well_l2: f64,
    /// `int |rho - chi_{E^c}|`.
    pub rho_l1: f64,
    pub iterations: usize,
    pub converged: bool,
    pub max_rho: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub scenario: String,
    pub kappa: f64,
    pub cells_per_eps: f64,
    pub tol: Option<f64>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# scenario = {}", self.scenario)?;
        writeln!(w, "# kappa = {}", fmt17(self.kappa))?;
        writeln!(w, "# grid = torus, cells_per_eps = {}", fmt17(self.cells_per_eps))?;
        match self.tol {
            Some(t) => writeln!(w, "# tol = {}", fmt17(t))?,
            None => writeln!(w, "# tol = 1e-8 * sites")?,
        }
        writeln!(w, "epsilon,n,m,initial_energy,energy,energy_per_perimeter,well_l2,rho_l1,iterations,converged,max_rho")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                fmt17(r.epsilon),
                r.n,
                r.m,
                fmt17(r.initial_energy),
                fmt17(r.energy),
                fmt17(r.energy_per_perimeter),
                fmt17(r.well_l2),
                fmt17(r.rho_l1),
                r.iterations,
                r.converged,
                fmt17(r.max_rho)
            )?;
        }
        Ok(())
    }
}

fn sweep_row(cfg: &Configuration, r: &MinimizeResult, m: u64, perimeter: f64, inside: impl Fn(usize) -> bool) -> SweepRow {
    let g = cfg.grid;
    let h2 = g.h * g.h;
    let gap: Vec<f64> = (0..g.len())
        .map(|k| {
            let target = if inside(k) { 0.0 } else { 1.0 };
            (cfg.u[k].norm() - target).abs()
        })
        .collect();
    SweepRow {
        epsilon: cfg.params.epsilon,
        n: g.nx,
        m,
        initial_energy: r.initial_energy,
        energy: r.energy.total,
        energy_per_perimeter: r.energy.total / perimeter,
        well_l2: r.energy.well * cfg.params.epsilon,
        rho_l1: pairwise_sum(&gap) * h2,
        iterations: r.iterations,
        converged: r.converged,
        max_rho: r.max_rho,
    }
}

/// Minimizes `scenario` at each epsilon of `eps_list` (snapped to the nearest
/// admissible value) on the torus with `n = round(cells_per_eps / epsilon)`.
pub fn epsilon_sweep(scenario: &Scenario, kappa: f64, eps_list: &[f64], cells_per_eps: f64, opts: &MinimizeOptions) -> Result<SweepTable> {
    let (area, perimeter, name) = match scenario {
        Scenario::FlatInterface => (0.5, 2.0, "flat_interface_torus".to_string()),
        Scenario::Recovery { set, .. } => {
            let m = set.measures();
            (m.area, m.perimeter, "recovery".to_string())
        }
    };
    let b_ext = kappa * area / SQRT_2;
    let mut rows = Vec::new();
    let mut prof_cache: Option<Profile1D> = None;
    for &hint in eps_list {
        let (eps, m) = admissible_epsilons(kappa, b_ext, hint)?;
        let params = Params::new(eps, kappa, b_ext)?;
        let n = (cells_per_eps / eps).round() as usize;
        let row = match scenario {
            Scenario::FlatInterface => {
                let prof = match &prof_cache {
                    Some(p) => p.clone(),
                    None => {
                        let p = minimize_profile1d(kappa, 20.0, 2000)?;
                        prof_cache = Some(p.clone());
                        p
                    }
                };
                let cfg0 = flat_interface_init(&prof, &params, n)?;
                let r = minimize(&cfg0, &BoundarySpec::torus(), opts)?;
                let g = r.cfg.grid;
                sweep_row(&r.cfg, &r, m, perimeter, |k| {
                    let x = g.x1(g.coords(k).0);
                    x > 0.25 && x < 0.75
                })
            }
            Scenario::Recovery { set, eps0, delta0 } => {
                let prof = cell_profile(kappa, *eps0, *delta0)?;
                let cell_n = ((eps / eps0) * n as f64).round() as usize;
                let block = build_block(&prof, *eps0, *delta0, cell_n)?;
                let rec = build_recovery(set, &params, &block, &RecoveryOptions { n, ..Default::default() })?;
                let cfg0 = rec
                    .cfg
                    .ok_or_else(|| Gl2dError::Validation("recovery report without configuration".into()))?;
                let r = minimize(&cfg0, &BoundarySpec::torus(), opts)?;
                let g = r.cfg.grid;
                sweep_row(&r.cfg, &r, m, perimeter, |k| {
                    let (i, j) = g.coords(k);
                    set.contains([g.x1(i), g.x2(j)])
                })
            }
        };
        rows.push(row);
    }
    Ok(SweepTable {
        scenario: name,
        kappa,
        cells_per_eps,
        tol: opts.tol,
        rows,
    })
}

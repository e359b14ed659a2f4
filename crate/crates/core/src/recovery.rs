//! Explicit near-optimal configurations around a polygonal set: rescaled
//! building blocks tiled along the edges, the profile extension in the
//! corners, flux offsets, a global potential and a single-valued phase.

use std::collections::VecDeque;
use std::f64::consts::{SQRT_2, TAU};

use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{plaquette_energies, total_energy, EnergyBreakdown};
use crate::error::{Gl2dError, Result};
use crate::field::{Configuration, LinkField, C64};
use crate::grid::Grid;
use crate::params::Params;
use crate::polygeom::{edge_squares, square_candidates, EdgeDecomposition, Point, PolyhedralSet, SquareCandidate};
use crate::profile1d::block::BuildingBlock;
use crate::reduce::pairwise_sum;

/// Smallest square side, in grid spacings.
pub const MIN_CELLS_PER_SQUARE: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryOptions {
    /// Torus grid is `n x n`.
    pub n: usize,
    /// Largest accepted loop defect, in units of `2 pi`.
    pub defect_tol: f64,
    pub slack: f64,
    /// Corner energy constant `C` of the budget `C eps_n`; the run's own
    /// measured constant when `None`.
    pub corner_constant: Option<f64>,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        RecoveryOptions {
            n: 512,
            defect_tol: 1e-6,
            slack: 0.15,
            corner_constant: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SiteLabel {
    DeepInterior,
    Square,
    Corner,
    Outside,
}

/// Site and plaquette fields of the construction at fixed offsets.
#[derive(Debug, Clone)]
pub struct ScalarFields {
    pub rho: Vec<f64>,
    /// Per plaquette, indexed by its lower-left site.
    pub b: Vec<f64>,
    /// The auxiliary potential `A0_n`.
    pub a0: LinkField,
    pub labels: Vec<SiteLabel>,
    /// Edge of the square containing each site.
    pub square_edge: Vec<Option<usize>>,
    /// Block coordinate `(sd - zeta) / s` per site.
    pub y: Vec<f64>,
    /// `|rho from the square formula - rho from the corner formula|` per site
    /// inside squares, zero elsewhere.
    pub seam_gap: Vec<f64>,
}

/// Grid, edge squares and per-point candidate lists shared by every stage.
pub struct RecoveryGeometry<'a> {
    pub set: &'a PolyhedralSet,
    pub block: &'a BuildingBlock,
    pub params: Params,
    pub grid: Grid,
    /// Decomposition at zero offsets; trims and counts do not depend on them.
    pub dec: EdgeDecomposition,
    /// Signed distance to `E` at sites.
    pub sd: Vec<f64>,
    /// Level function at sites: signed distance to the boundary with its
    /// vertices rounded to radius `round`. It equals `sd` away from the
    /// vertices.
    pub lev: Vec<f64>,
    pub comp: Vec<usize>,
    /// Corner radius of the level function, the largest one whose arcs stay
    /// inside the corner trims.
    pub round: f64,
    site_cands: Vec<Vec<SquareCandidate>>,
    /// Level function and nearest component at plaquette centers.
    lev_c: Vec<f64>,
    comp_c: Vec<usize>,
    stream: StreamTable,
    pub targets: Vec<f64>,
}

/// `F(y) = int_{-delta0}^y A2`, for `A2` the block trace, with cubic Hermite
/// interpolation between nodes.
#[derive(Debug, Clone)]
struct StreamTable {
    y0: f64,
    dy: f64,
    f: Vec<f64>,
    a: Vec<f64>,
}

impl StreamTable {
    fn new(block: &BuildingBlock, m: usize) -> Self {
        let d = block.delta0;
        let dy = 2.0 * d / m as f64;
        let a: Vec<f64> = (0..=m).map(|k| block.trace(-d + k as f64 * dy).1).collect();
        let mut f = vec![0.0; m + 1];
        // Simpson on each interval with the midpoint value
        for k in 0..m {
            let mid = block.trace(-d + (k as f64 + 0.5) * dy).1;
            f[k + 1] = f[k] + dy * (a[k] + 4.0 * mid + a[k + 1]) / 6.0;
        }
        StreamTable { y0: -d, dy, f, a }
    }

    fn eval(&self, y: f64) -> f64 {
        let m = self.f.len() - 1;
        let t = (y - self.y0) / self.dy;
        if t <= 0.0 {
            return 0.0;
        }
        if t >= m as f64 {
            let y1 = self.y0 + m as f64 * self.dy;
            return self.f[m] + (y * y - y1 * y1) / (2.0 * SQRT_2);
        }
        let k = (t.floor() as usize).min(m - 1);
        let r = t - k as f64;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * r) * (1.0 - r) * (1.0 - r),
            r * (1.0 - r) * (1.0 - r),
            r * r * (3.0 - 2.0 * r),
            r * r * (r - 1.0),
        );
        h00 * self.f[k] + h10 * self.dy * self.a[k] + h01 * self.f[k + 1] + h11 * self.dy * self.a[k + 1]
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Row closure `sum_j (c L - h sum_i b)`, accumulated the way
/// [`global_potential`] does; the curl of its output misses `b` by this
/// over `h L` on the top row.
pub fn flux_residual(grid: &Grid, b: &[f64], c: f64) -> f64 {
    let mut col = Neumaier::default();
    for j in 0..grid.ny {
        let mut acc = Neumaier::default();
        for i in 0..grid.nx {
            acc.add(grid.h * b[grid.idx(i, j)]);
        }
        col.add(c * grid.side());
        col.add(-acc.value());
    }
    col.value()
}

/// Moves the flux residual of `b` onto plaquette `k` so that its total is
/// `c` to rounding, returning the change of `h^2 sum b`.
pub fn close_flux(grid: &Grid, b: &mut [f64], c: f64, k: usize) -> f64 {
    let before = b[k];
    for _ in 0..3 {
        let r = flux_residual(grid, b, c);
        if r == 0.0 {
            break;
        }
        b[k] += r / grid.h;
    }
    (b[k] - before) * grid.h * grid.h
}

/// Distance of `alpha b_ext / kappa` to `2 pi Z`, in units of `2 pi`.
pub fn check_quantization(params: &Params) -> f64 {
    let q = params.alpha * params.flux() / TAU;
    (q - q.round()).abs()
}

fn wrap(x: f64) -> f64 {
    x - TAU * (x / TAU).round()
}

impl<'a> RecoveryGeometry<'a> {
    pub fn new(set: &'a PolyhedralSet, params: Params, block: &'a BuildingBlock, n: usize) -> Result<Self> {
        if (block.kappa() - params.kappa).abs() > 1e-12 {
            return Err(Gl2dError::Validation(format!(
                "block kappa {} differs from kappa {}",
                block.kappa(),
                params.kappa
            )));
        }
        let m = set.measures();
        let want = params.kappa * m.area / SQRT_2;
        if (params.b_ext - want).abs() > 1e-9 * want.max(1e-300) {
            return Err(Gl2dError::Validation(format!(
                "b_ext = {} but kappa |E| / sqrt 2 = {want}",
                params.b_ext
            )));
        }
        let grid = Grid::torus(n, 1.0)?;
        let s = params.epsilon / block.eps0;
        if s < MIN_CELLS_PER_SQUARE * grid.h {
            return Err(Gl2dError::Validation(format!(
                "square side {s} is below {MIN_CELLS_PER_SQUARE} grid spacings (h = {}); increase n or epsilon",
                grid.h
            )));
        }
        let dec = edge_squares(set, params.epsilon, &vec![0.0; set.n_components], block.eps0)?;
        let h = grid.h;
        let pts = |dx: f64, dy: f64| -> Vec<Point> {
            (0..grid.len())
                .map(|k| {
                    let (i, j) = grid.coords(k);
                    [i as f64 * h + dx, j as f64 * h + dy]
                })
                .collect()
        };
        // the largest corner radius that leaves every square untouched
        let round = set
            .vertex_turns()
            .iter()
            .filter(|t| t.2 > 1e-12)
            .map(|&(ei, eo, tn)| dec.trims[ei].1.min(dec.trims[eo].0) / tn)
            .fold(f64::INFINITY, f64::min);
        let round = if round.is_finite() { round } else { 0.0 };
        let level = |xs: &[Point]| -> (Vec<f64>, Vec<usize>) {
            xs.par_iter()
                .map(|&x| {
                    let (d, e) = set.rounded_signed_distance(x, round);
                    (d, set.edges[e].component)
                })
                .unzip()
        };
        let sites = pts(0.0, 0.0);
        let sd: Vec<f64> = sites.par_iter().map(|&x| set.signed_distance(x)).collect();
        let (lev, comp) = level(&sites);
        let site_cands: Vec<Vec<SquareCandidate>> =
            sites.par_iter().map(|&x| square_candidates(x, set, &dec)).collect();
        let (lev_c, comp_c) = level(&pts(0.5 * h, 0.5 * h));

        let c = params.flux();
        let targets = if set.n_components == 1 {
            vec![c]
        } else {
            let mut t: Vec<f64> = m.component_areas[..set.n_components - 1]
                .iter()
                .map(|&a| TAU * (params.alpha * a / (TAU * SQRT_2)).floor() / params.alpha)
                .collect();
            let rest = c - t.iter().sum::<f64>();
            t.push(rest);
            t
        };
        Ok(RecoveryGeometry {
            set,
            block,
            params,
            grid,
            dec,
            sd,
            lev,
            comp,
            round,
            site_cands,
            lev_c,
            comp_c,
            stream: StreamTable::new(block, 20_000),
            targets,
        })
    }

    pub fn side(&self) -> f64 {
        self.dec.side
    }

    pub fn decomposition(&self, zetas: &[f64]) -> Result<EdgeDecomposition> {
        self.dec.with_zetas(self.set, zetas)
    }

    /// `rho_n`, `B_n`, `A0_n` and the region labels at offsets `zetas`.
    pub fn scalar_fields(&self, zetas: &[f64]) -> Result<ScalarFields> {
        let g = self.grid;
        let dec = self.decomposition(zetas)?;
        let s = dec.side;
        let h = g.h;
        let blk = self.block;
        let delta0 = blk.delta0;

        let site: Vec<(f64, f64, SiteLabel, f64, Option<usize>)> = (0..g.len())
            .into_par_iter()
            .map(|p| {
                let y = (self.lev[p] - zetas[self.comp[p]]) / s;
                let corner_rho = blk.trace(y).0;
                match dec.locate(self.set, &self.site_cands[p]) {
                    Some((k, _, local)) => {
                        let r = blk.trace(local[0]).0;
                        (r, y, SiteLabel::Square, (r - corner_rho).abs(), Some(k))
                    }
                    None => {
                        let label = if y >= 0.5 {
                            SiteLabel::DeepInterior
                        } else if y <= -0.5 {
                            SiteLabel::Outside
                        } else {
                            SiteLabel::Corner
                        };
                        (corner_rho, y, label, 0.0, None)
                    }
                }
            })
            .collect();
        let rho: Vec<f64> = site.iter().map(|t| t.0).collect();
        let y: Vec<f64> = site.iter().map(|t| t.1).collect();
        let labels: Vec<SiteLabel> = site.iter().map(|t| t.2).collect();
        let seam_gap: Vec<f64> = site.iter().map(|t| t.3).collect();
        let square_edge: Vec<Option<usize>> = site.iter().map(|t| t.4).collect();

        // A0 = rot90 grad Phi with Phi = s^2 F((sd - zeta) / s), F' = A2:
        // the block potential inside squares, its extension along the level
        // sets of sd in the corners
        let yc: Vec<f64> = self
            .lev_c
            .par_iter()
            .zip(&self.comp_c)
            .map(|(&d, &c)| (d - zetas[c]) / s)
            .collect();
        let phi: Vec<f64> = yc.par_iter().map(|&y| s * s * self.stream.eval(y)).collect();
        let mut a0 = LinkField::zeros(g.len(), 0.0);
        for p in 0..g.len() {
            let (i, j) = g.coords(p);
            let ps = g.south(i, j).expect("torus");
            let pw = g.west(i, j).expect("torus");
            a0.a1[p] = -(phi[p] - phi[ps]) / h;
            a0.a2[p] = (phi[p] - phi[pw]) / h;
        }

        let b: Vec<f64> = (0..g.len())
            .into_par_iter()
            .map(|p| {
                let (i, j) = g.coords(p);
                let (pe, _) = g.east(i, j).expect("torus");
                let (pn, _) = g.north(i, j).expect("torus");
                let (pne, _) = g.north(g.coords(pe).0, j).expect("torus");
                let curl0 = (a0.a2[pe] - a0.a2[p] - a0.a1[pn] + a0.a1[p]) / h;
                if [p, pe, pn, pne].iter().any(|&q| rho[q] > 0.0) {
                    return curl0;
                }
                // normal phase: the block field up to one spacing past delta0
                // (so every plaquette touching rho > 0 is covered), then
                // blended to 1/sqrt 2 over one spacing
                let lam = ((delta0 - yc[p]) * s / h + 2.0).clamp(0.0, 1.0);
                lam * curl0 + (1.0 - lam) / SQRT_2
            })
            .collect();

        Ok(ScalarFields {
            rho,
            b,
            a0,
            labels,
            square_edge,
            y,
            seam_gap,
        })
    }

    /// Flux of `b` per component, plaquettes assigned by their lower-left site.
    pub fn component_fluxes(&self, b: &[f64]) -> Vec<f64> {
        let h2 = self.grid.h * self.grid.h;
        (0..self.set.n_components)
            .map(|c| {
                let v: Vec<f64> = b
                    .iter()
                    .zip(&self.comp)
                    .filter(|(_, &k)| k == c)
                    .map(|(x, _)| *x * h2)
                    .collect();
                pairwise_sum(&v)
            })
            .collect()
    }

    fn component_flux_at(&self, c: usize, zeta: f64) -> Result<f64> {
        let mut z = vec![0.0; self.set.n_components];
        z[c] = zeta;
        let f = self.scalar_fields(&z)?;
        Ok(self.component_fluxes(&f.b)[c])
    }

    /// Offsets `zeta_j` hitting the component flux targets, by bisection.
    pub fn solve_flux_offsets(&self) -> Result<Vec<f64>> {
        let half = 0.5 * self.side() * (1.0 - 1e-12);
        let mut zetas = vec![0.0; self.set.n_components];
        for c in 0..self.set.n_components {
            let target = self.targets[c];
            let f = |z: f64| -> Result<f64> { Ok(self.component_flux_at(c, z)? - target) };
            let (mut lo, mut hi) = (-half, half);
            let (mut flo, fhi) = (f(lo)?, f(hi)?);
            if flo == 0.0 {
                zetas[c] = lo;
                continue;
            }
            if fhi == 0.0 {
                zetas[c] = hi;
                continue;
            }
            if flo.signum() == fhi.signum() {
                return Err(Gl2dError::NotBracketed {
                    component: c,
                    h_lo: flo + target,
                    h_hi: fhi + target,
                    target,
                });
            }
            let mut best = if flo.abs() < fhi.abs() { (lo, flo) } else { (hi, fhi) };
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let fm = f(mid)?;
                if fm.abs() < best.1.abs() {
                    best = (mid, fm);
                }
                if fm == 0.0 {
                    break;
                }
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            zetas[c] = best.0;
        }
        Ok(zetas)
    }
}

/// Potential with `curl = b` on the torus: `a2` integrates `b` along rows
/// on top of the twist `c x1`, and the row fluxes that differ from `c` are
/// balanced by `a1` on the last column.
pub fn global_potential(grid: &Grid, b: &[f64], c: f64) -> Result<LinkField> {
    if !grid.is_torus() || b.len() != grid.len() {
        return Err(Gl2dError::Validation("global potential needs a torus field".into()));
    }
    let (nx, ny, h) = (grid.nx, grid.ny, grid.h);
    let mut a = LinkField::zeros(grid.len(), c);
    // a2 is the running row integral minus its mean slope, so every row
    // closes; the rows' flux defects c - F_j then enter a1, spread evenly
    // along the row
    let mut col = Neumaier::default();
    let mut acc_row = vec![0.0; nx];
    for j in 0..ny {
        let mut acc = Neumaier::default();
        for (i, v) in acc_row.iter_mut().enumerate() {
            *v = acc.value();
            acc.add(h * b[grid.idx(i, j)]);
        }
        let slope = acc.value() / grid.side();
        let a1 = col.value();
        for (i, v) in acc_row.iter().enumerate() {
            let p = grid.idx(i, j);
            a.a2[p] = v - i as f64 * h * slope;
            a.a1[p] = a1;
        }
        col.add(h * c);
        col.add(-h * slope);
    }
    Ok(a)
}

/// Adds the constants to `a1` on the last column and to `a2` that make the
/// phase single-valued along one row and one column lying in `{rho > 0}`.
pub fn fix_holonomy(grid: &Grid, params: &Params, mut a: LinkField, a0: &LinkField, rho: &[f64]) -> LinkField {
    let (nx, ny) = (grid.nx, grid.ny);
    let ah = params.alpha * grid.h;
    let raw = |a: &LinkField, mu: usize, p: usize| -> f64 {
        let (i, j) = grid.coords(p);
        let phi = if mu == 0 {
            let mut f = -ah * a.a1[p];
            if i == nx - 1 {
                f += params.alpha * a.twist_c * grid.x2(j) * grid.side();
            }
            f + ah * a0.a1[p]
        } else {
            -ah * (a.a2[p] + a.twist_c * i as f64 * grid.h) + ah * a0.a2[p]
        };
        -phi
    };
    if let Some(j) = (0..ny).find(|&j| (0..nx).all(|i| rho[grid.idx(i, j)] > 0.0)) {
        let tot: f64 = (0..nx).map(|i| raw(&a, 0, grid.idx(i, j))).sum();
        let k = -wrap(tot) / ah;
        for jj in 0..ny {
            a.a1[grid.idx(nx - 1, jj)] += k;
        }
    }
    if let Some(i) = (0..nx).find(|&i| (0..ny).all(|j| rho[grid.idx(i, j)] > 0.0)) {
        let tot: f64 = (0..ny).map(|j| raw(&a, 1, grid.idx(i, j))).sum();
        let k = -wrap(tot) / (ny as f64 * ah);
        a.a2.iter_mut().for_each(|v| *v += k);
    }
    a
}

/// Outcome of the phase assembly.
#[derive(Debug, Clone)]
pub struct PhaseResult {
    pub theta: Vec<f64>,
    /// Largest distance of a loop defect to `2 pi Z`, in units of `2 pi`.
    pub max_defect: f64,
    pub worst_link: Option<(usize, usize)>,
    /// Components of `E` enclosed by the fundamental loop of the worst link.
    pub worst_enclosed: Vec<usize>,
    pub tree_components: usize,
    pub loops: usize,
}

/// Phase increment along the forward link `(mu, p)` that makes the covariant
/// phase match `A0`, and the head of the link.
fn increment(grid: &Grid, params: &Params, a: &LinkField, a0: &LinkField, theta0: &[f64], mu: usize, p: usize) -> (usize, f64) {
    let (i, j) = grid.coords(p);
    let ah = params.alpha * grid.h;
    let (q, phi, a0v) = if mu == 0 {
        let (q, seam) = grid.east(i, j).expect("torus");
        let mut phi = -ah * a.a1[p];
        if seam {
            phi += params.alpha * a.twist_c * grid.x2(j) * grid.side();
        }
        (q, phi, a0.a1[p])
    } else {
        let (q, _) = grid.north(i, j).expect("torus");
        (q, -ah * (a.a2[p] + a.twist_c * i as f64 * grid.h), a0.a2[p])
    };
    (q, wrap(-phi - ah * a0v + theta0[q] - theta0[p]))
}

/// Spreads the phase along a breadth-first spanning tree of each component of
/// `{rho > 0}` and audits every link off the tree.
pub fn integrate_phase(
    grid: &Grid,
    params: &Params,
    a: &LinkField,
    a0: &LinkField,
    theta0: &[f64],
    rho: &[f64],
    set: &PolyhedralSet,
) -> PhaseResult {
    let n = grid.len();
    let inc: Vec<[(usize, f64); 2]> = (0..n)
        .into_par_iter()
        .map(|p| {
            [
                increment(grid, params, a, a0, theta0, 0, p),
                increment(grid, params, a, a0, theta0, 1, p),
            ]
        })
        .collect();
    let live = |p: usize| rho[p] > 0.0;
    let mut theta = vec![0.0; n];
    let mut parent = vec![usize::MAX; n];
    let mut depth = vec![0u32; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    let mut comps = 0;
    for root in 0..n {
        if !live(root) || seen[root] {
            continue;
        }
        comps += 1;
        seen[root] = true;
        theta[root] = theta0[root];
        queue.push_back(root);
        while let Some(p) = queue.pop_front() {
            let (i, j) = grid.coords(p);
            let w = grid.west(i, j).expect("torus");
            let s = grid.south(i, j).expect("torus");
            let steps = [
                (inc[p][0].0, inc[p][0].1),
                (inc[p][1].0, inc[p][1].1),
                (w, -inc[w][0].1),
                (s, -inc[s][1].1),
            ];
            for (q, d) in steps {
                if live(q) && !seen[q] {
                    seen[q] = true;
                    theta[q] = wrap(theta[p] + d);
                    parent[q] = p;
                    depth[q] = depth[p] + 1;
                    queue.push_back(q);
                }
            }
        }
    }
    let per_site: Vec<(f64, usize, usize)> = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut worst = (0.0, p, p);
            if live(p) {
                for mu in 0..2 {
                    let (q, d) = inc[p][mu];
                    if live(q) {
                        let r = (wrap(theta[p] + d - theta[q]) / TAU).abs();
                        if r > worst.0 {
                            worst = (r, p, q);
                        }
                    }
                }
            }
            worst
        })
        .collect();
    let loops = (0..n)
        .filter(|&p| live(p))
        .map(|p| (0..2).filter(|&mu| live(inc[p][mu].0)).count())
        .sum::<usize>()
        - (n - (0..n).filter(|&p| !live(p)).count() - comps);
    let (max_defect, wp, wq) = per_site
        .iter()
        .copied()
        .fold((0.0, 0, 0), |acc, x| if x.0 > acc.0 { x } else { acc });
    let (worst_link, worst_enclosed) = if max_defect > 0.0 {
        (
            Some((wp, wq)),
            enclosed_components(grid, set, &parent, &depth, wp, wq),
        )
    } else {
        (None, Vec::new())
    };
    PhaseResult {
        theta,
        max_defect,
        worst_link,
        worst_enclosed,
        tree_components: comps,
        loops,
    }
}

/// Components of `E` inside the loop formed by the tree paths to `p`, `q` and
/// the link between them; empty when the loop winds around the torus.
fn enclosed_components(grid: &Grid, set: &PolyhedralSet, parent: &[usize], depth: &[u32], p: usize, q: usize) -> Vec<usize> {
    let (mut a, mut b) = (p, q);
    let mut up = vec![a];
    let mut down = vec![b];
    while depth[a] > depth[b] {
        a = parent[a];
        up.push(a);
    }
    while depth[b] > depth[a] {
        b = parent[b];
        down.push(b);
    }
    while a != b {
        a = parent[a];
        b = parent[b];
        up.push(a);
        down.push(b);
    }
    down.pop();
    down.reverse();
    // loop: p -> ... -> lca -> ... -> q -> p
    let cycle: Vec<usize> = up.into_iter().chain(down).collect();
    let h = grid.h;
    let n = grid.nx as i64;
    let mut pts = Vec::with_capacity(cycle.len());
    let (i0, j0) = grid.coords(cycle[0]);
    let mut cur = [i0 as i64, j0 as i64];
    pts.push(cur);
    for w in cycle.windows(2) {
        let (ia, ja) = grid.coords(w[0]);
        let (ib, jb) = grid.coords(w[1]);
        let step = |x: i64| if x > 1 { x - n } else if x < -1 { x + n } else { x };
        cur = [cur[0] + step(ib as i64 - ia as i64), cur[1] + step(jb as i64 - ja as i64)];
        pts.push(cur);
    }
    let (il, jl) = grid.coords(*cycle.last().expect("nonempty"));
    let step = |x: i64| if x > 1 { x - n } else if x < -1 { x + n } else { x };
    let end = [cur[0] + step(i0 as i64 - il as i64), cur[1] + step(j0 as i64 - jl as i64)];
    if end != pts[0] {
        return Vec::new();
    }
    let poly: Vec<Point> = pts.iter().map(|v| [v[0] as f64 * h, v[1] as f64 * h]).collect();
    let mut out = Vec::new();
    for c in 0..set.n_components {
        let r = interior_point(set, c);
        let inside = (-2..=2).any(|sx| {
            (-2..=2).any(|sy| winding(&poly, [r[0] + sx as f64, r[1] + sy as f64]) != 0)
        });
        if inside {
            out.push(c);
        }
    }
    out
}

fn winding(poly: &[Point], x: Point) -> i32 {
    let mut w = 0;
    let m = poly.len();
    for k in 0..m {
        let a = poly[k];
        let b = poly[(k + 1) % m];
        let side = (b[0] - a[0]) * (x[1] - a[1]) - (x[0] - a[0]) * (b[1] - a[1]);
        if a[1] <= x[1] {
            if b[1] > x[1] && side > 0.0 {
                w += 1;
            }
        } else if b[1] <= x[1] && side < 0.0 {
            w -= 1;
        }
    }
    w
}

/// A point inside component `c`: the centroid-side neighbour of the midpoint of
/// its first edge.
fn interior_point(set: &PolyhedralSet, c: usize) -> Point {
    let e = set.edges.iter().find(|e| e.component == c).expect("component has edges");
    let mid = [0.5 * (e.c_minus[0] + e.c_plus[0]), 0.5 * (e.c_minus[1] + e.c_plus[1])];
    let mut t = 1e-9;
    let mut x = mid;
    while t < e.length {
        x = [mid[0] + e.nu[0] * t, mid[1] + e.nu[1] * t];
        let (sd, _) = set.signed_distance_edge(x);
        if sd > 0.0 && sd >= 0.49 * t {
            break;
        }
        t *= 2.0;
    }
    x
}

/// Energy of the recovery configuration and its audit.
#[derive(Debug, Clone, Serialize)]
pub struct RecoveryReport {
    #[serde(skip)]
    pub cfg: Option<Configuration>,
    pub n: usize,
    pub epsilon: f64,
    pub kappa: f64,
    pub b_ext: f64,
    pub square_side: f64,
    pub approximate: bool,
    pub energy: EnergyBreakdown,
    pub sigma_cell: f64,
    pub perimeter: f64,
    /// `sigma_cell * P(E)`.
    pub target: f64,
    pub energy_ratio: f64,
    pub flux_error: f64,
    /// Change of the total flux made to close it exactly on the torus.
    pub flux_closure: f64,
    pub component_fluxes: Vec<f64>,
    pub component_targets: Vec<f64>,
    pub max_loop_defect: f64,
    pub loops: usize,
    pub quantization_fraction: f64,
    pub zeta: Vec<f64>,
    pub rho_l1_gap: f64,
    pub square_count: usize,
    pub square_energy: f64,
    pub square_mean_energy: f64,
    /// Square energy over the sum of `(eps_n / eps0) sigma` with `sigma` the
    /// cell energy of the block turned to the normal of each square's edge.
    pub square_mean_ratio: f64,
    /// Mean oriented cell energy over `sigma_cell`.
    pub orientation_factor: f64,
    pub corner_energy: f64,
    pub corner_constant: f64,
    pub corner_area_constant: f64,
    pub deep_energy: f64,
    pub outside_energy: f64,
    pub region_sum_defect: f64,
    pub max_curl_error: f64,
    pub max_curl_defect: f64,
    pub max_phase_mismatch: f64,
    pub rho_seam_jump: f64,
    pub energy_bound: f64,
    pub energy_bound_ok: bool,
}

/// Runs the full construction on the `n x n` torus.
pub fn build_recovery(set: &PolyhedralSet, params: &Params, block: &BuildingBlock, opts: &RecoveryOptions) -> Result<RecoveryReport> {
    let geo = RecoveryGeometry::new(set, *params, block, opts.n)?;
    let zetas = geo.solve_flux_offsets()?;
    assemble(&geo, &zetas, opts)
}

/// Builds the configuration at given offsets and audits it.
pub fn assemble(geo: &RecoveryGeometry, zetas: &[f64], opts: &RecoveryOptions) -> Result<RecoveryReport> {
    let set = geo.set;
    let params = geo.params;
    let g = geo.grid;
    let h2 = g.h * g.h;
    let c = params.flux();
    let approximate = !set.is_rectilinear();

    let mut fields = geo.scalar_fields(zetas)?;
    let flux_error = (pairwise_sum(&fields.b) * h2 - c).abs();
    // the rounding left by the offset solve goes to a plaquette in the
    // normal phase, or to the seam corner when there is none
    let sink = (0..g.len())
        .find(|&k| fields.labels[k] == SiteLabel::DeepInterior)
        .unwrap_or(g.len() - 1);
    let flux_closure = close_flux(&g, &mut fields.b, c, sink);
    let a = global_potential(&g, &fields.b, c)?;
    let a = fix_holonomy(&g, &params, a, &fields.a0, &fields.rho);
    let theta0 = vec![0.0; g.len()];
    let phase = integrate_phase(&g, &params, &a, &fields.a0, &theta0, &fields.rho, set);
    if !approximate && phase.max_defect > opts.defect_tol {
        let (p, q) = phase.worst_link.unwrap_or((0, 0));
        return Err(Gl2dError::QuantizationViolated {
            defect_over_2pi: phase.max_defect,
            link: (p, q),
            enclosed: phase.worst_enclosed.clone(),
        });
    }
    let u: Vec<C64> = fields
        .rho
        .iter()
        .zip(&phase.theta)
        .map(|(&r, &t)| if r > 0.0 { C64::from_polar(r, t) } else { C64::new(0.0, 0.0) })
        .collect();
    let cfg = Configuration::new(g, params, u, a)?;

    let energy = total_energy(&cfg, None);
    let pe = plaquette_energies(&cfg);
    let region = |l: SiteLabel| -> f64 {
        let v: Vec<f64> = pe
            .iter()
            .zip(&fields.labels)
            .filter(|(_, &x)| x == l)
            .map(|(e, _)| *e)
            .collect();
        pairwise_sum(&v)
    };
    let square_energy = region(SiteLabel::Square);
    let corner_energy = region(SiteLabel::Corner);
    let deep_energy = region(SiteLabel::DeepInterior);
    let outside_energy = region(SiteLabel::Outside);
    let region_sum = square_energy + corner_energy + deep_energy + outside_energy;

    let curl = cfg.discrete_curl();
    let max_curl_error = curl
        .par_iter()
        .zip(&fields.b)
        .map(|(x, y)| (x - y).abs())
        .reduce(|| 0.0, f64::max);
    let ah = params.alpha * g.h;
    let (max_curl_defect, max_phase_mismatch) = (0..g.len())
        .into_par_iter()
        .map(|p| {
            let (i, j) = g.coords(p);
            let (pe_, _) = g.east(i, j).expect("torus");
            let (pn, _) = g.north(i, j).expect("torus");
            let (pne, _) = g.north(g.coords(pe_).0, j).expect("torus");
            let live = |q: usize| fields.rho[q] > 0.0;
            let mut cd = 0.0;
            if [p, pe_, pn, pne].iter().all(|&q| live(q)) {
                let a0 = &fields.a0;
                let curl0 = (a0.a2[pe_] - a0.a2[p] - a0.a1[pn] + a0.a1[p]) / g.h;
                cd = (curl[p] - curl0).abs();
            }
            let mut pm: f64 = 0.0;
            if live(p) {
                for mu in 0..2 {
                    let t = if mu == 0 { cfg.transport1(i, j) } else { cfg.transport2(i, j) };
                    let (q, tr) = t.expect("torus");
                    if live(q) {
                        let a0v = if mu == 0 { fields.a0.a1[p] } else { fields.a0.a2[p] };
                        let rel = (tr * cfg.u[q] * cfg.u[p].conj()).arg();
                        pm = pm.max(wrap(rel + ah * a0v).abs());
                    }
                }
            }
            (cd, pm)
        })
        .reduce(|| (0.0, 0.0), |x, y| (x.0.max(y.0), x.1.max(y.1)));

    let gap: Vec<f64> = fields
        .rho
        .iter()
        .zip(&geo.sd)
        .map(|(&r, &d)| (r - if d >= 0.0 { 0.0 } else { 1.0 }).abs() * h2)
        .collect();
    let dec = geo.decomposition(zetas)?;
    let square_count: usize = dec.counts.iter().sum();
    let s = dec.side;
    let square_mean_energy = square_energy / square_count as f64;
    // the lattice is not isotropic: compare each edge with the block turned
    // to its normal
    let square_reference: f64 = set
        .edges
        .iter()
        .zip(&dec.counts)
        .map(|(e, &c)| c as f64 * s * geo.block.sigma_oriented(e.nu))
        .sum();
    let block = geo.block;
    let perimeter = set.measures().perimeter;
    let target = block.sigma_cell * perimeter;
    let corner_constant = corner_energy / params.epsilon;
    let budget = opts.corner_constant.unwrap_or(corner_constant) * params.epsilon;
    let energy_bound = target * (1.0 + opts.slack) + budget;
    let flux = cfg.flux();
    Ok(RecoveryReport {
        n: g.nx,
        epsilon: params.epsilon,
        kappa: params.kappa,
        b_ext: params.b_ext,
        square_side: s,
        approximate,
        energy,
        sigma_cell: block.sigma_cell,
        perimeter,
        target,
        energy_ratio: energy.total / target,
        flux_error: flux_error.max((flux - c).abs()),
        flux_closure,
        component_fluxes: geo.component_fluxes(&curl),
        component_targets: geo.targets.clone(),
        max_loop_defect: phase.max_defect,
        loops: phase.loops,
        quantization_fraction: check_quantization(&params),
        zeta: zetas.to_vec(),
        rho_l1_gap: pairwise_sum(&gap),
        square_count,
        square_energy,
        square_mean_energy,
        square_mean_ratio: square_energy / square_reference,
        orientation_factor: square_reference / (square_count as f64 * s * block.sigma_cell),
        corner_energy,
        corner_constant,
        corner_area_constant: dec.corner_constant,
        deep_energy,
        outside_energy,
        region_sum_defect: (region_sum - energy.total).abs(),
        max_curl_error,
        max_curl_defect,
        max_phase_mismatch,
        rho_seam_jump: fields.seam_gap.iter().copied().fold(0.0, f64::max),
        energy_bound,
        energy_bound_ok: energy.total <= energy_bound,
        cfg: Some(cfg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::admissible_epsilons;
    use crate::polygeom::square_ccw;
    use crate::profile1d::{block::build_block, minimize_profile1d};

    const KAPPA: f64 = 0.25;
    const EPS0: f64 = 0.125;

    fn block(s_cells: usize) -> BuildingBlock {
        let p = minimize_profile1d(KAPPA, 20.0, 1000).unwrap();
        build_block(&p, EPS0, 0.375, s_cells).unwrap()
    }

    /// Admissible parameters for `set` near square side `s`.
    fn params(set: &PolyhedralSet, s: f64) -> Params {
        let b_ext = KAPPA * set.measures().area / SQRT_2;
        let (eps, _) = admissible_epsilons(KAPPA, b_ext, s * EPS0).unwrap();
        Params::new(eps, KAPPA, b_ext).unwrap()
    }

    fn square_case() -> (PolyhedralSet, Params, BuildingBlock, usize) {
        let set = PolyhedralSet::square(0.25, 0.25, 0.5).unwrap();
        // six squares per edge of side 1/16, sixteen cells across at n = 256
        let p = params(&set, 0.5 / 8.0 * (1.0 - 1e-3));
        (set, p, block(16), 256)
    }

    fn opts(n: usize) -> RecoveryOptions {
        RecoveryOptions { n, ..Default::default() }
    }

    #[test]
    fn global_potential_examples() {
        let g = Grid::torus(16, 1.0).unwrap();
        let a = global_potential(&g, &vec![0.0; g.len()], 0.0).unwrap();
        assert!(a.a1.iter().chain(&a.a2).all(|&v| v == 0.0));

        let c = 0.375;
        let a = global_potential(&g, &vec![c; g.len()], c).unwrap();
        assert!(a.a1.iter().chain(&a.a2).all(|&v| v == 0.0));
        let cfg = Configuration::new(g, Params::new(0.1, KAPPA, c * KAPPA).unwrap(), vec![C64::new(1.0, 0.0); g.len()], a).unwrap();
        for i in 0..g.nx {
            assert_eq!(cfg.a2_eff_col(i, 3), c * i as f64 * g.h);
        }
    }

    #[test]
    fn global_potential_telescopes() {
        let g = Grid::torus(64, 1.0).unwrap();
        // dyadic values with total flux c: every sum is exact
        let mut b: Vec<f64> = (0..g.len()).map(|k| ((k * 37) % 11) as f64 / 8.0).collect();
        let c = b.iter().sum::<f64>() * g.h * g.h;
        let a = global_potential(&g, &b, c).unwrap();
        let p = Params::new(0.1, KAPPA, c * KAPPA).unwrap();
        let cfg = Configuration::new(g, p, vec![C64::new(1.0, 0.0); g.len()], a).unwrap();
        let err = cfg.discrete_curl().iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-14, "{err}");

        // a flux mismatch is moved onto one plaquette
        b[5] += 1e-3;
        let shift = close_flux(&g, &mut b, c, 100);
        assert!((shift + 1e-3 * g.h * g.h).abs() < 1e-15, "{shift}");
        assert!(flux_residual(&g, &b, c).abs() < 1e-15);
    }

    #[test]
    fn scalar_fields_far_and_deep() {
        let (set, p, blk, n) = square_case();
        let geo = RecoveryGeometry::new(&set, p, &blk, n).unwrap();
        let f = geo.scalar_fields(&[0.0]).unwrap();
        let g = geo.grid;
        let far = g.idx(4, 4);
        let deep = g.idx(n / 2, n / 2);
        assert_eq!(f.labels[far], SiteLabel::Outside);
        assert_eq!((f.rho[far], f.b[far]), (1.0, 0.0));
        assert_eq!(f.labels[deep], SiteLabel::DeepInterior);
        assert_eq!(f.rho[deep], 0.0);
        assert!((f.b[deep] - 1.0 / SQRT_2).abs() < 1e-15);
        assert!(f.rho.iter().all(|&r| (0.0..=1.0).contains(&r)));
        assert_eq!(f.a0.a1[far], 0.0);
        assert_eq!(f.a0.a2[far], 0.0);
        let gap = f.seam_gap.iter().copied().fold(0.0, f64::max);
        assert!(gap <= 1e-12, "{gap}");
    }

    #[test]
    fn offsets_bracket_and_solve() {
        let (set, p, blk, n) = square_case();
        let geo = RecoveryGeometry::new(&set, p, &blk, n).unwrap();
        let half = geo.side() / 2.0;
        let (lo, mid, hi) = (
            geo.component_flux_at(0, -half).unwrap(),
            geo.component_flux_at(0, 0.0).unwrap(),
            geo.component_flux_at(0, half).unwrap(),
        );
        let c = p.flux();
        assert!((lo - c) * (hi - c) < 0.0, "{lo} {c} {hi}");
        assert!((mid - c).abs() < (lo - c).abs().min((hi - c).abs()));
        let z = geo.solve_flux_offsets().unwrap();
        assert!(z[0].abs() < 0.25 * half, "{z:?}");
    }

    #[test]
    fn square_audit() {
        let (set, p, blk, n) = square_case();
        let r = build_recovery(&set, &p, &blk, &opts(n)).unwrap();
        assert!(!r.approximate);
        assert!(r.flux_error <= 1e-10, "{}", r.flux_error);
        assert!(r.max_loop_defect <= 1e-6, "{}", r.max_loop_defect);
        assert!(r.quantization_fraction < 1e-9);
        assert!(r.max_curl_error <= 1e-13, "{}", r.max_curl_error);
        assert!(r.max_curl_defect <= 1e-12, "{}", r.max_curl_defect);
        // covariant phase energy density off the block potential
        let dens = (r.max_phase_mismatch * n as f64).powi(2);
        assert!(dens <= 1e-12, "{}", r.max_phase_mismatch);
        assert!(r.rho_seam_jump <= 1e-12, "{}", r.rho_seam_jump);
        assert!(r.region_sum_defect <= 1e-12 * r.energy.total, "{}", r.region_sum_defect);
        // six squares per edge: the corners still weigh about a quarter
        assert!(r.energy_ratio > 1.0 && r.energy_ratio < 1.5, "{}", r.energy_ratio);
        assert!((r.square_mean_ratio - 1.0).abs() < 0.02, "{}", r.square_mean_ratio);
        assert!(r.energy_bound_ok);
        assert_eq!(r.component_targets, vec![p.flux()]);
        let cfg = r.cfg.as_ref().unwrap();
        assert!(cfg.u.iter().all(|z| z.norm() <= 1.0 + 1e-15));
    }

    #[test]
    fn deterministic() {
        let (set, p, blk, n) = square_case();
        let a = serde_json::to_string(&build_recovery(&set, &p, &blk, &opts(n)).unwrap()).unwrap();
        let b = serde_json::to_string(&build_recovery(&set, &p, &blk, &opts(n)).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inadmissible_epsilon_is_rejected() {
        let (set, p, blk, n) = square_case();
        // a quarter quantum short of the admissible flux
        let q = p.alpha * p.b_ext / (TAU * p.kappa);
        let eps = p.epsilon * (q / (q - 0.25)).sqrt();
        let bad = Params::new(eps, KAPPA, p.b_ext).unwrap();
        let frac = check_quantization(&bad);
        assert!((frac - 0.25).abs() < 1e-6, "{frac}");
        match build_recovery(&set, &bad, &blk, &opts(n)) {
            Err(Gl2dError::QuantizationViolated { defect_over_2pi, enclosed, .. }) => {
                assert!((defect_over_2pi - frac).abs() < 1e-6, "{defect_over_2pi} vs {frac}");
                assert!(enclosed.is_empty() || enclosed == vec![0], "{enclosed:?}");
            }
            other => panic!("expected a quantization error, got {:?}", other.map(|r| r.energy_ratio)),
        }
    }

    #[test]
    fn frame_case() {
        let mut hole = square_ccw(0.35, 0.35, 0.3);
        hole.reverse();
        let set = PolyhedralSet::new(vec![square_ccw(0.2, 0.2, 0.6), hole]).unwrap();
        let p = params(&set, 0.05);
        let n = 320;
        let blk = block((p.epsilon / EPS0 * n as f64).round() as usize);
        let r = build_recovery(&set, &p, &blk, &opts(n)).unwrap();
        assert!(r.max_loop_defect <= 1e-6, "{}", r.max_loop_defect);
        assert!(r.flux_error <= 1e-10, "{}", r.flux_error);
        assert!((r.square_mean_ratio - 1.0).abs() < 0.02, "{}", r.square_mean_ratio);
        assert!(r.energy_ratio > 1.0 && r.energy_bound_ok, "{}", r.energy_ratio);
    }

    #[test]
    fn two_squares_hit_local_quanta() {
        let set = PolyhedralSet::new(vec![square_ccw(0.1, 0.1, 0.3), square_ccw(0.55, 0.5, 0.35)]).unwrap();
        let p = params(&set, 0.05);
        let n = 192;
        let blk = block((p.epsilon / EPS0 * n as f64).round() as usize);
        let r = build_recovery(&set, &p, &blk, &opts(n)).unwrap();
        let quantum = TAU / p.alpha;
        let t0 = r.component_targets[0] / quantum;
        assert!((t0 - t0.round()).abs() < 1e-9, "{t0}");
        assert!(t0 >= 1.0);
        for (f, t) in r.component_fluxes.iter().zip(&r.component_targets) {
            assert!((f - t).abs() <= 1e-9 * quantum, "{f} vs {t}");
        }
        assert!((r.component_targets.iter().sum::<f64>() - p.flux()).abs() < 1e-12);
        assert!(r.max_loop_defect <= 1e-6, "{}", r.max_loop_defect);
    }

    #[test]
    fn rejects_coarse_grids_and_bad_fields() {
        let (set, p, blk, _) = square_case();
        assert!(RecoveryGeometry::new(&set, p, &blk, 64).is_err());
        let off = Params::new(p.epsilon, KAPPA, 2.0 * p.b_ext).unwrap();
        assert!(RecoveryGeometry::new(&set, off, &blk, 256).is_err());
    }
}

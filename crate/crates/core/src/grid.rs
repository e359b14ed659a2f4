//! Uniform grids on the torus and on rectangles.
//!
//! Sites are stored row-major: `idx(i, j) = j * nx + i`, with `i` along x1.
//! The link `(mu, p)` joins site `p` to `p + h e_mu`; the plaquette `p` has
//! lower-left corner `p`.

use serde::{Deserialize, Serialize};

use crate::error::{Gl2dError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// Periodic square of side `side` carrying a net flux through a twist.
    TorusWithFlux,
    /// Closed rectangle with sites on all four boundary lines.
    Rectangle,
}

impl DomainKind {
    pub fn code(self) -> u8 {
        match self {
            DomainKind::TorusWithFlux => 0,
            DomainKind::Rectangle => 1,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(DomainKind::TorusWithFlux),
            1 => Ok(DomainKind::Rectangle),
            _ => Err(Gl2dError::Parse(format!("unknown domain kind code {c}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub kind: DomainKind,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    /// Coordinates of site (0, 0).
    pub origin: [f64; 2],
}

impl Grid {
    /// `n x n` sites on the periodic square `[0, side)^2`, `h = side / n`.
    pub fn torus(n: usize, side: f64) -> Result<Self> {
        if n < 2 {
            return Err(Gl2dError::Validation(format!("torus needs n >= 2 (got {n})")));
        }
        if !(side > 0.0) {
            return Err(Gl2dError::Validation(format!("side must be > 0 (got {side})")));
        }
        Ok(Grid {
            kind: DomainKind::TorusWithFlux,
            nx: n,
            ny: n,
            h: side / n as f64,
            origin: [0.0, 0.0],
        })
    }

    /// `nx x ny` sites at `origin + (i h, j h)`, covering a closed rectangle of
    /// size `(nx - 1) h` by `(ny - 1) h`.
    pub fn rectangle(nx: usize, ny: usize, h: f64, origin: [f64; 2]) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Gl2dError::Validation(format!(
                "rectangle needs at least 2x2 sites (got {nx}x{ny})"
            )));
        }
        if !(h > 0.0) {
            return Err(Gl2dError::Validation(format!("h must be > 0 (got {h})")));
        }
        Ok(Grid {
            kind: DomainKind::Rectangle,
            nx,
            ny,
            h,
            origin,
        })
    }

    /// Rectangle `[x0, x0 + width] x [y0, y0 + height]` with `cells_x` cells
    /// across; `height` is rounded to a whole number of cells.
    pub fn rectangle_cells(cells_x: usize, width: f64, height: f64, origin: [f64; 2]) -> Result<Self> {
        let h = width / cells_x as f64;
        let cells_y = (height / h).round().max(1.0) as usize;
        Grid::rectangle(cells_x + 1, cells_y + 1, h, origin)
    }

    pub fn is_torus(&self) -> bool {
        self.kind == DomainKind::TorusWithFlux
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Side length of the periodic cell (torus) or width of the rectangle.
    pub fn side(&self) -> f64 {
        match self.kind {
            DomainKind::TorusWithFlux => self.nx as f64 * self.h,
            DomainKind::Rectangle => (self.nx - 1) as f64 * self.h,
        }
    }

    pub fn width(&self) -> f64 {
        self.side()
    }

    pub fn height(&self) -> f64 {
        match self.kind {
            DomainKind::TorusWithFlux => self.ny as f64 * self.h,
            DomainKind::Rectangle => (self.ny - 1) as f64 * self.h,
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    #[inline]
    pub fn x1(&self, i: usize) -> f64 {
        self.origin[0] + i as f64 * self.h
    }

    #[inline]
    pub fn x2(&self, j: usize) -> f64 {
        self.origin[1] + j as f64 * self.h
    }

    /// Site `p + e1`, with a flag set when the step crosses the x1 seam.
    #[inline]
    pub fn east(&self, i: usize, j: usize) -> Option<(usize, bool)> {
        if i + 1 < self.nx {
            Some((self.idx(i + 1, j), false))
        } else if self.is_torus() {
            Some((self.idx(0, j), true))
        } else {
            None
        }
    }

    /// Site `p + e2`, with a flag set when the step crosses the x2 seam.
    #[inline]
    pub fn north(&self, i: usize, j: usize) -> Option<(usize, bool)> {
        if j + 1 < self.ny {
            Some((self.idx(i, j + 1), false))
        } else if self.is_torus() {
            Some((self.idx(i, 0), true))
        } else {
            None
        }
    }

    /// Site `p - e1` (wrapping on the torus).
    #[inline]
    pub fn west(&self, i: usize, j: usize) -> Option<usize> {
        if i > 0 {
            Some(self.idx(i - 1, j))
        } else if self.is_torus() {
            Some(self.idx(self.nx - 1, j))
        } else {
            None
        }
    }

    /// Site `p - e2` (wrapping on the torus).
    #[inline]
    pub fn south(&self, i: usize, j: usize) -> Option<usize> {
        if j > 0 {
            Some(self.idx(i, j - 1))
        } else if self.is_torus() {
            Some(self.idx(i, self.ny - 1))
        } else {
            None
        }
    }

    /// Whether plaquette `(i, j)` lies inside the domain.
    #[inline]
    pub fn owns_plaquette(&self, i: usize, j: usize) -> bool {
        self.is_torus() || (i + 1 < self.nx && j + 1 < self.ny)
    }

    /// Whether the link from `(i, j)` in direction `mu` (1 or 2) exists.
    #[inline]
    pub fn has_link(&self, mu: usize, i: usize, j: usize) -> bool {
        self.is_torus()
            || match mu {
                1 => i + 1 < self.nx,
                _ => j + 1 < self.ny,
            }
    }

    /// Number of plaquettes in the domain.
    pub fn plaquette_count(&self) -> usize {
        match self.kind {
            DomainKind::TorusWithFlux => self.nx * self.ny,
            DomainKind::Rectangle => (self.nx - 1) * (self.ny - 1),
        }
    }

    pub fn area(&self) -> f64 {
        self.plaquette_count() as f64 * self.h * self.h
    }

    /// Nearest site index to the point `x` (clamped on rectangles, wrapped on
    /// the torus).
    pub fn nearest_site(&self, x: [f64; 2]) -> (usize, usize) {
        let fi = ((x[0] - self.origin[0]) / self.h).round();
        let fj = ((x[1] - self.origin[1]) / self.h).round();
        match self.kind {
            DomainKind::TorusWithFlux => (
                fi.rem_euclid(self.nx as f64) as usize % self.nx,
                fj.rem_euclid(self.ny as f64) as usize % self.ny,
            ),
            DomainKind::Rectangle => (
                fi.clamp(0.0, (self.nx - 1) as f64) as usize,
                fj.clamp(0.0, (self.ny - 1) as f64) as usize,
            ),
        }
    }
}

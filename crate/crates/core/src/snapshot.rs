//! Field snapshot container.
//!
//! Binary layout (all multi-byte values little-endian):
//!
//! ```text
//! b"GL2D\0"  version:u8  kind:u8  nx:u64  ny:u64
//! h  side  origin_x1  origin_x2  twist_c  epsilon  kappa  b_ext   (f64)
//! Re u[nx*ny]  Im u[nx*ny]  a1[nx*ny]  a2[nx*ny]                 (f64, row-major)
//! ```
//!
//! The text form is CSV: `#`-prefixed `key = value` header lines followed by a
//! `i,j,re_u,im_u,a1,a2` column header and one row per site. Floats are written
//! in shortest round-trip form, so both forms are lossless.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Gl2dError, Result};
use crate::field::{Configuration, LinkField, C64};
use crate::grid::{DomainKind, Grid};
use crate::params::Params;

pub const MAGIC: &[u8; 5] = b"GL2D\0";
pub const VERSION: u8 = 1;

pub fn write_binary<W: Write>(cfg: &Configuration, mut w: W) -> Result<()> {
    let g = &cfg.grid;
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION, g.kind.code()])?;
    w.write_all(&(g.nx as u64).to_le_bytes())?;
    w.write_all(&(g.ny as u64).to_le_bytes())?;
    let p = &cfg.params;
    for x in [
        g.h,
        g.side(),
        g.origin[0],
        g.origin[1],
        cfg.a.twist_c,
        p.epsilon,
        p.kappa,
        p.b_ext,
    ] {
        w.write_all(&x.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(8 * g.len());
    let mut put = |it: &mut dyn Iterator<Item = f64>| -> Result<()> {
        buf.clear();
        for x in it {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    };
    put(&mut cfg.u.iter().map(|z| z.re))?;
    put(&mut cfg.u.iter().map(|z| z.im))?;
    put(&mut cfg.a.a1.iter().copied())?;
    put(&mut cfg.a.a2.iter().copied())?;
    Ok(())
}

fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Gl2dError::Parse(format!("truncated snapshot: {e}")))?;
    Ok(b)
}

fn take_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(take::<8, R>(r)?))
}

/// Params as stored; `alpha` is recomputed, so values outside the validated
/// range are rejected.
fn params_from(epsilon: f64, kappa: f64, b_ext: f64) -> Result<Params> {
    Params::new(epsilon, kappa, b_ext)
}

fn grid_from(kind: DomainKind, nx: usize, ny: usize, h: f64, side: f64, origin: [f64; 2]) -> Result<Grid> {
    let g = match kind {
        DomainKind::TorusWithFlux => {
            let mut g = Grid::torus(nx, side)?;
            g.ny = ny;
            g
        }
        DomainKind::Rectangle => Grid::rectangle(nx, ny, h, origin)?,
    };
    Ok(Grid { h, origin, ..g })
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Configuration> {
    let magic = take::<5, R>(&mut r)?;
    if &magic != MAGIC {
        return Err(Gl2dError::Parse("not a GL2D snapshot (bad magic)".into()));
    }
    let [version, kind] = take::<2, R>(&mut r)?;
    if version != VERSION {
        return Err(Gl2dError::Parse(format!("unsupported snapshot version {version}")));
    }
    let kind = DomainKind::from_code(kind)?;
    let nx = u64::from_le_bytes(take::<8, R>(&mut r)?) as usize;
    let ny = u64::from_le_bytes(take::<8, R>(&mut r)?) as usize;
    let mut hd = [0.0; 8];
    for x in hd.iter_mut() {
        *x = take_f64(&mut r)?;
    }
    let [h, side, o1, o2, twist, eps, kappa, b_ext] = hd;
    let grid = grid_from(kind, nx, ny, h, side, [o1, o2])?;
    let params = params_from(eps, kappa, b_ext)?;
    let n = nx
        .checked_mul(ny)
        .ok_or_else(|| Gl2dError::Parse("grid size overflow".into()))?;
    let mut read_vec = || -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; 8 * n];
        r.read_exact(&mut bytes)
            .map_err(|e| Gl2dError::Parse(format!("truncated snapshot: {e}")))?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let re = read_vec()?;
    let im = read_vec()?;
    let a1 = read_vec()?;
    let a2 = read_vec()?;
    let u = re.into_iter().zip(im).map(|(a, b)| C64::new(a, b)).collect();
    Configuration::new(grid, params, u, LinkField { a1, a2, twist_c: twist })
}

pub fn write_text<W: Write>(cfg: &Configuration, mut w: W) -> Result<()> {
    let g = &cfg.grid;
    let p = &cfg.params;
    writeln!(w, "# gl2d snapshot v{VERSION}")?;
    let kind = match g.kind {
        DomainKind::TorusWithFlux => "torus_with_flux",
        DomainKind::Rectangle => "rectangle",
    };
    writeln!(w, "# kind = {kind}")?;
    writeln!(w, "# nx = {}", g.nx)?;
    writeln!(w, "# ny = {}", g.ny)?;
    writeln!(w, "# h = {:e}", g.h)?;
    writeln!(w, "# side = {:e}", g.side())?;
    writeln!(w, "# origin_x1 = {:e}", g.origin[0])?;
    writeln!(w, "# origin_x2 = {:e}", g.origin[1])?;
    writeln!(w, "# twist_c = {:e}", cfg.a.twist_c)?;
    writeln!(w, "# epsilon = {:e}", p.epsilon)?;
    writeln!(w, "# kappa = {:e}", p.kappa)?;
    writeln!(w, "# b_ext = {:e}", p.b_ext)?;
    writeln!(w, "i,j,re_u,im_u,a1,a2")?;
    for k in 0..g.len() {
        let (i, j) = g.coords(k);
        writeln!(
            w,
            "{i},{j},{:e},{:e},{:e},{:e}",
            cfg.u[k].re, cfg.u[k].im, cfg.a.a1[k], cfg.a.a2[k]
        )?;
    }
    Ok(())
}

pub fn read_text<R: Read>(mut r: R) -> Result<Configuration> {
    let mut s = String::new();
    r.read_to_string(&mut s)?;
    let mut header = std::collections::HashMap::new();
    let mut rows = Vec::new();
    let mut seen_cols = false;
    for (ln, line) in s.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                header.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if !seen_cols {
            if line != "i,j,re_u,im_u,a1,a2" {
                return Err(Gl2dError::Parse(format!("line {}: unexpected column header", ln + 1)));
            }
            seen_cols = true;
            continue;
        }
        rows.push((ln + 1, line));
    }
    let get = |k: &str| -> Result<&String> {
        header
            .get(k)
            .ok_or_else(|| Gl2dError::Parse(format!("missing header key '{k}'")))
    };
    let num = |k: &str| -> Result<f64> {
        get(k)?
            .parse::<f64>()
            .map_err(|e| Gl2dError::Parse(format!("header '{k}': {e}")))
    };
    let int = |k: &str| -> Result<usize> {
        get(k)?
            .parse::<usize>()
            .map_err(|e| Gl2dError::Parse(format!("header '{k}': {e}")))
    };
    let kind = match get("kind")?.as_str() {
        "torus_with_flux" => DomainKind::TorusWithFlux,
        "rectangle" => DomainKind::Rectangle,
        other => return Err(Gl2dError::Parse(format!("unknown kind '{other}'"))),
    };
    let (nx, ny) = (int("nx")?, int("ny")?);
    let grid = grid_from(
        kind,
        nx,
        ny,
        num("h")?,
        num("side")?,
        [num("origin_x1")?, num("origin_x2")?],
    )?;
    let params = params_from(num("epsilon")?, num("kappa")?, num("b_ext")?)?;
    let n = grid.len();
    if rows.len() != n {
        return Err(Gl2dError::Parse(format!("expected {n} rows, found {}", rows.len())));
    }
    let mut u = vec![C64::new(0.0, 0.0); n];
    let mut a = LinkField::zeros(n, num("twist_c")?);
    for (ln, line) in rows {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(Gl2dError::Parse(format!("line {ln}: expected 6 columns")));
        }
        let bad = |e: String| Gl2dError::Parse(format!("line {ln}: {e}"));
        let i: usize = f[0].parse().map_err(|e| bad(format!("{e}")))?;
        let j: usize = f[1].parse().map_err(|e| bad(format!("{e}")))?;
        if i >= nx || j >= ny {
            return Err(bad("site index out of range".into()));
        }
        let v: Vec<f64> = f[2..]
            .iter()
            .map(|x| x.parse::<f64>().map_err(|e| bad(format!("{e}"))))
            .collect::<Result<_>>()?;
        let k = grid.idx(i, j);
        u[k] = C64::new(v[0], v[1]);
        a.a1[k] = v[2];
        a.a2[k] = v[3];
    }
    Configuration::new(grid, params, u, a)
}

/// Writes the binary form when `path` ends in `.gl2d`, the text form otherwise.
pub fn save(cfg: &Configuration, path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    if path.extension().is_some_and(|e| e == "gl2d") {
        write_binary(cfg, f)
    } else {
        write_text(cfg, f)
    }
}

/// Reads either form, detected from the leading magic bytes.
pub fn load(path: &Path) -> Result<Configuration> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        read_binary(&bytes[..])
    } else {
        read_text(&bytes[..])
    }
}

use std::f64::consts::SQRT_2;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use gl2d::json::{fmt17, to_json17};
use gl2d::optimize::{
    cell_profile, cell_sigma_from, epsilon_sweep, minimize as run_minimize, BoundarySpec, CellVariant,
    MinimizeOptions, Scenario,
};
use gl2d::polygeom::PolyhedralSet;
use gl2d::profile1d::block::build_block;
use gl2d::profile1d::{lift_consistency, minimize_profile1d};
use gl2d::recovery::{build_recovery, RecoveryOptions};
use gl2d::{admissible_epsilons, nondimensionalize, snapshot, Configuration, Gl2dError, Params, Result};

use crate::config::RunConfig;
use crate::Common;

pub enum Outcome {
    Done,
    NotConverged(String),
}

/// Resolved configuration, output directory and thread setup shared by every
/// subcommand.
struct Run {
    cfg: RunConfig,
    out: Option<PathBuf>,
}

impl Run {
    fn new(common: &Common) -> Result<Self> {
        let mut cfg = RunConfig::load(common.config.as_deref())?;
        cfg.set("out", common.out.as_ref());
        cfg.set("threads", common.threads);
        Ok(Run { cfg, out: None })
    }

    /// Resolves `out` and `threads`, rejects unknown keys, creates the output
    /// directory and writes `resolved.cfg`. `out` is optional only when
    /// `default_out` is `None`.
    fn start(&mut self, default_out: Option<&str>) -> Result<()> {
        let threads: usize = self.cfg.get("threads", 0)?;
        let out = match default_out {
            Some(d) => Some(self.cfg.get("out", d.to_string())?),
            None => self.cfg.opt::<String>("out")?,
        };
        self.cfg.finish()?;
        if threads > 0 {
            // a second call in the same process keeps the first pool
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        }
        if let Some(o) = out {
            let dir = PathBuf::from(o);
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("resolved.cfg"), self.cfg.to_text())?;
            self.out = Some(dir);
        }
        Ok(())
    }

    fn path(&self, name: &str) -> Option<PathBuf> {
        self.out.as_ref().map(|d| d.join(name))
    }

    fn report<T: Serialize>(&self, value: &T) -> Result<()> {
        let s = to_json17(value).map_err(|e| Gl2dError::Parse(e.to_string()))?;
        if let Some(p) = self.path("report.json") {
            fs::write(p, format!("{s}\n"))?;
        }
        emit(&format!("{s}\n"));
        Ok(())
    }

    fn fields(&self, cfg: &Configuration) -> Result<()> {
        match self.path("fields.gl2d") {
            Some(p) => snapshot::save(cfg, &p),
            None => Ok(()),
        }
    }
}

/// Stdout is informational; a closed pipe must not abort a run whose files
/// are already written.
fn emit(s: &str) {
    let _ = std::io::stdout().lock().write_all(s.as_bytes());
}

fn minimize_options(cfg: &mut RunConfig) -> Result<MinimizeOptions> {
    let tol = cfg.opt("tol")?;
    let max_iter = cfg.get("max_iter", MinimizeOptions::default().max_iter)?;
    Ok(MinimizeOptions { tol, max_iter })
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Gl2dError::Validation(format!("{key} must be > 0 (got {v})")))
    }
}

#[derive(Args, Debug)]
pub struct Profile1dArgs {
    #[command(flatten)]
    common: Common,
    /// Comma separated kappa values.
    #[arg(long)]
    kappa_list: Option<String>,
    /// Half-length of the profile interval.
    #[arg(long)]
    t_max: Option<f64>,
    /// Profile nodes.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Serialize)]
struct Profile1dRow {
    kappa: f64,
    sigma_1d: f64,
    iterations: usize,
    grad_norm: f64,
}

pub fn profile1d(a: Profile1dArgs) -> Result<Outcome> {
    let mut run = Run::new(&a.common)?;
    run.cfg.set("kappa_list", a.kappa_list);
    run.cfg.set("t_max", a.t_max);
    run.cfg.set("n", a.n);
    let kappas = run.cfg.list("kappa_list", "0.05,0.2,0.4,0.6,0.7")?;
    let t_max = positive("t_max", run.cfg.get("t_max", 30.0)?)?;
    let n: usize = run.cfg.get("n", 6000)?;
    for &k in &kappas {
        Params::new(1.0, k, 0.0)?;
    }
    run.start(Some("gl2d-out"))?;

    let mut rows = Vec::new();
    let mut csv = format!("# t_max = {}\n# n = {n}\nkappa,sigma_1d\n", fmt17(t_max));
    for &k in &kappas {
        let p = minimize_profile1d(k, t_max, n)?;
        csv.push_str(&format!("{},{}\n", fmt17(k), fmt17(p.energy_1d)));
        rows.push(Profile1dRow { kappa: k, sigma_1d: p.energy_1d, iterations: p.iterations, grad_norm: p.grad_norm });
    }
    if let Some(p) = run.path("sweep.csv") {
        fs::write(p, &csv)?;
    }
    emit(&csv);
    if let Some(p) = run.path("report.json") {
        let s = to_json17(&rows).map_err(|e| Gl2dError::Parse(e.to_string()))?;
        fs::write(p, format!("{s}\n"))?;
    }
    Ok(Outcome::Done)
}

#[derive(Args, Debug)]
pub struct BlockArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    kappa: Option<f64>,
    /// Transition width of the block.
    #[arg(long)]
    eps0: Option<f64>,
    /// Strip half-width.
    #[arg(long)]
    delta0: Option<f64>,
    /// Cells across the block.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Serialize)]
struct BlockReport {
    #[serde(flatten)]
    summary: gl2d::profile1d::block::BlockSummary,
    membership_ok: bool,
    membership_error: Option<String>,
    lift_gap: f64,
}

pub fn block(a: BlockArgs) -> Result<Outcome> {
    let mut run = Run::new(&a.common)?;
    run.cfg.set("kappa", a.kappa);
    run.cfg.set("eps0", a.eps0);
    run.cfg.set("delta0", a.delta0);
    run.cfg.set("n", a.n);
    let kappa = run.cfg.get("kappa", 0.25)?;
    let eps0 = positive("eps0", run.cfg.get("eps0", 0.125)?)?;
    let delta0 = positive("delta0", run.cfg.get("delta0", 0.375)?)?;
    let n: usize = run.cfg.get("n", 64)?;
    Params::new(eps0, kappa, 0.0)?;
    run.start(Some("gl2d-out"))?;

    let prof = cell_profile(kappa, eps0, delta0)?;
    let b = build_block(&prof, eps0, delta0, n)?;
    let membership = b.check_membership();
    let report = BlockReport {
        summary: b.summary(),
        membership_ok: membership.is_ok(),
        membership_error: membership.err().map(|e| e.to_string()),
        lift_gap: lift_consistency(&prof, n)?,
    };
    run.fields(&b.cfg)?;
    run.report(&report)?;
    Ok(Outcome::Done)
}

#[derive(Args, Debug)]
pub struct CellArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    eps0: Option<f64>,
    /// Strip half-width.
    #[arg(long)]
    delta: Option<f64>,
    /// `dirichlet` or `periodic`.
    #[arg(long)]
    variant: Option<String>,
    /// Cells across the unit cell.
    #[arg(long)]
    n: Option<usize>,
    /// Projected gradient tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

pub fn cell(a: CellArgs) -> Result<Outcome> {
    let mut run = Run::new(&a.common)?;
    run.cfg.set("kappa", a.kappa);
    run.cfg.set("eps0", a.eps0);
    run.cfg.set("delta", a.delta);
    run.cfg.set("variant", a.variant);
    run.cfg.set("n", a.n);
    run.cfg.set("tol", a.tol);
    run.cfg.set("max_iter", a.max_iter);
    let kappa = run.cfg.get("kappa", 0.25)?;
    let eps0 = positive("eps0", run.cfg.get("eps0", 0.0625)?)?;
    let delta = run.cfg.get("delta", 0.25)?;
    let variant = match run.cfg.get("variant", "dirichlet".to_string())?.as_str() {
        "dirichlet" => CellVariant::Dirichlet,
        "periodic" => CellVariant::Periodic,
        v => return Err(Gl2dError::Validation(format!("variant must be dirichlet or periodic (got {v:?})"))),
    };
    let n: usize = run.cfg.get("n", 128)?;
    let opts = minimize_options(&mut run.cfg)?;
    Params::new(eps0, kappa, 0.0)?;
    if !(eps0 < delta && delta < 0.5) {
        return Err(Gl2dError::Validation(format!("need eps0 < delta < 1/2 (got eps0 = {eps0}, delta = {delta})")));
    }
    run.start(Some("gl2d-out"))?;

    let prof = cell_profile(kappa, eps0, delta)?;
    let b = build_block(&prof, eps0, delta, n)?;
    let r = cell_sigma_from(&b, variant, &opts)?;
    run.fields(&r.result.cfg)?;
    run.report(&r)?;
    Ok(if r.result.converged {
        Outcome::Done
    } else {
        Outcome::NotConverged(format!("cell minimization stopped at gradient norm {}", r.result.final_grad_norm))
    })
}

#[derive(Args, Debug, Default)]
pub struct RecoveryKeys {
    /// Polygon file: one `x y` vertex per line, blank line between polygons.
    #[arg(long)]
    set: Option<PathBuf>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Interface width, or `auto` for `cells_per_square` cells per square.
    #[arg(long)]
    eps: Option<String>,
    /// Snap `eps` to the nearest admissible value.
    #[arg(long)]
    snap: Option<bool>,
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long)]
    delta0: Option<f64>,
    /// Torus grid size.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    cells_per_square: Option<f64>,
    #[arg(long)]
    defect_tol: Option<f64>,
    /// Corner energy constant of the energy bound.
    #[arg(long)]
    corner_constant: Option<f64>,
}

struct RecoverySetup {
    set: PolyhedralSet,
    params: Params,
    eps0: f64,
    delta0: f64,
    opts: RecoveryOptions,
}

impl RecoveryKeys {
    fn apply(self, cfg: &mut RunConfig) {
        cfg.set("set", self.set.map(|p| p.display().to_string()));
        cfg.set("kappa", self.kappa);
        cfg.set("eps", self.eps);
        cfg.set("snap", self.snap);
        cfg.set("eps0", self.eps0);
        cfg.set("delta0", self.delta0);
        cfg.set("n", self.n);
        cfg.set("cells_per_square", self.cells_per_square);
        cfg.set("defect_tol", self.defect_tol);
        cfg.set("corner_constant", self.corner_constant);
    }
}

fn recovery_setup(cfg: &mut RunConfig, set_path: &Path) -> Result<RecoverySetup> {
    let set = PolyhedralSet::read(set_path)?;
    let kappa = cfg.get("kappa", 0.25)?;
    let eps0 = positive("eps0", cfg.get("eps0", 0.125)?)?;
    let delta0 = positive("delta0", cfg.get("delta0", 0.375)?)?;
    let n: usize = cfg.get("n", 256)?;
    let cells = positive("cells_per_square", cfg.get("cells_per_square", 16.0)?)?;
    let snap = cfg.get("snap", true)?;
    let b_ext = kappa * set.measures().area / SQRT_2;
    let eps = match cfg.get("eps", "auto".to_string())?.as_str() {
        "auto" => {
            let (e, _) = admissible_epsilons(kappa, b_ext, eps0 * cells / n as f64)?;
            e
        }
        s => {
            let e: f64 = s
                .parse()
                .map_err(|_| Gl2dError::Validation(format!("eps: expected a number or auto (got {s:?})")))?;
            let e = positive("eps", e)?;
            if snap {
                admissible_epsilons(kappa, b_ext, e)?.0
            } else {
                e
            }
        }
    };
    let params = Params::new(eps, kappa, b_ext)?;
    let opts = RecoveryOptions {
        n,
        defect_tol: cfg.get("defect_tol", RecoveryOptions::default().defect_tol)?,
        corner_constant: cfg.opt("corner_constant")?,
        ..Default::default()
    };
    Ok(RecoverySetup { set, params, eps0, delta0, opts })
}

fn recovery_config(s: &RecoverySetup) -> Result<gl2d::recovery::RecoveryReport> {
    let prof = cell_profile(s.params.kappa, s.eps0, s.delta0)?;
    let side = s.params.epsilon / s.eps0;
    let cell_n = (side * s.opts.n as f64).round() as usize;
    let b = build_block(&prof, s.eps0, s.delta0, cell_n)?;
    build_recovery(&s.set, &s.params, &b, &s.opts)
}

#[derive(Args, Debug)]
pub struct RecoveryArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    keys: RecoveryKeys,
}

pub fn recovery(a: RecoveryArgs) -> Result<Outcome> {
    let mut run = Run::new(&a.common)?;
    a.keys.apply(&mut run.cfg);
    let set_path: PathBuf = run.cfg.require::<String>("set")?.into();
    let setup = recovery_setup(&mut run.cfg, &set_path)?;
    run.start(Some("gl2d-out"))?;

    let r = recovery_config(&setup)?;
    if let Some(c) = &r.cfg {
        run.fields(c)?;
    }
    run.report(&r)?;
    Ok(Outcome::Done)
}

#[derive(Args, Debug)]
pub struct MinimizeArgs {
    #[command(flatten)]
    common: Common,
    /// Starting snapshot; the recovery configuration of `--set` otherwise.
    #[arg(long)]
    init: Option<PathBuf>,
    #[command(flatten)]
    keys: RecoveryKeys,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

pub fn minimize(a: MinimizeArgs) -> Result<Outcome> {
    let mut run = Run::new(&a.common)?;
    run.cfg.set("init", a.init.map(|p| p.display().to_string()));
    a.keys.apply(&mut run.cfg);
    run.cfg.set("tol", a.tol);
    run.cfg.set("max_iter", a.max_iter);
    let opts = minimize_options(&mut run.cfg)?;
    let init: Option<String> = run.cfg.opt("init")?;
    let set: Option<String> = run.cfg.opt("set")?;
    let setup = match (&init, &set) {
        (Some(_), None) => None,
        (None, Some(p)) => Some(recovery_setup(&mut run.cfg, Path::new(p))?),
        _ => return Err(Gl2dError::Validation("give exactly one of init or set".into())),
    };
    run.start(Some("gl2d-out"))?;

    let cfg0 = match (init, setup) {
        (Some(p), _) => snapshot::load(Path::new(&p))?,
        (None, Some(s)) => recovery_config(&s)?
            .cfg
            .ok_or_else(|| Gl2dError::Validation("recovery produced no configuration".into()))?,
        (None, None) => unreachable!("checked above"),
    };
    let r = run_minimize(&cfg0, &BoundarySpec::torus(), &opts)?;
    run.fields(&r.cfg)?;
    run.report(&r)?;
    Ok(if r.converged {
        Outcome::Done
    } else {
        Outcome::NotConverged(format!("minimization stopped at gradient norm {}", r.final_grad_norm))
    })
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// `flat` or `recovery`.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Comma separated epsilon hints.
    #[arg(long)]
    eps_list: Option<String>,
    /// Grid cells per epsilon.
    #[arg(long)]
    cells_per_eps: Option<f64>,
    /// Polygon file of the recovery scenario.
    #[arg(long)]
    set: Option<PathBuf>,
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long)]
    delta0: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

pub fn sweep(a: SweepArgs) -> Result<Outcome> {
    let mut run = Run::new(&a.common)?;
    run.cfg.set("scenario", a.scenario);
    run.cfg.set("kappa", a.kappa);
    run.cfg.set("eps_list", a.eps_list);
    run.cfg.set("cells_per_eps", a.cells_per_eps);
    run.cfg.set("set", a.set.map(|p| p.display().to_string()));
    run.cfg.set("eps0", a.eps0);
    run.cfg.set("delta0", a.delta0);
    run.cfg.set("tol", a.tol);
    run.cfg.set("max_iter", a.max_iter);
    let kappa = run.cfg.get("kappa", 0.25)?;
    let eps_list = run.cfg.list("eps_list", "0.1,0.05")?;
    let cells = positive("cells_per_eps", run.cfg.get("cells_per_eps", 8.0)?)?;
    let opts = minimize_options(&mut run.cfg)?;
    let scenario = match run.cfg.get("scenario", "flat".to_string())?.as_str() {
        "flat" => Scenario::FlatInterface,
        "recovery" => {
            let path: String = run.cfg.require("set")?;
            Scenario::Recovery {
                set: PolyhedralSet::read(Path::new(&path))?,
                eps0: positive("eps0", run.cfg.get("eps0", 0.125)?)?,
                delta0: positive("delta0", run.cfg.get("delta0", 0.375)?)?,
            }
        }
        s => return Err(Gl2dError::Validation(format!("scenario must be flat or recovery (got {s:?})"))),
    };
    for &e in &eps_list {
        positive("eps_list", e)?;
    }
    run.start(Some("gl2d-out"))?;

    let t = epsilon_sweep(&scenario, kappa, &eps_list, cells, &opts)?;
    if let Some(p) = run.path("sweep.csv") {
        t.write_csv(fs::File::create(p)?)?;
    }
    run.report(&t)?;
    let stuck: Vec<f64> = t.rows.iter().filter(|r| !r.converged).map(|r| r.epsilon).collect();
    Ok(if stuck.is_empty() {
        Outcome::Done
    } else {
        Outcome::NotConverged(format!("not converged at epsilon {stuck:?}"))
    })
}

#[derive(Args, Debug)]
pub struct SnapArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    b_ext: Option<f64>,
    /// Net flux `b_ext / kappa`; used when `b_ext` is not given.
    #[arg(long)]
    b_ext_over_kappa: Option<f64>,
    #[arg(long)]
    hint: Option<f64>,
}

#[derive(Serialize)]
struct Snapped {
    epsilon: f64,
    m: u64,
    kappa: f64,
    b_ext: f64,
}

pub fn snap_eps(a: SnapArgs) -> Result<Outcome> {
    let mut run = Run::new(&a.common)?;
    run.cfg.set("kappa", a.kappa);
    run.cfg.set("b_ext", a.b_ext);
    run.cfg.set("b_ext_over_kappa", a.b_ext_over_kappa);
    run.cfg.set("hint", a.hint);
    let kappa: f64 = run.cfg.require("kappa")?;
    let b_ext = match (run.cfg.opt::<f64>("b_ext")?, run.cfg.opt::<f64>("b_ext_over_kappa")?) {
        (Some(b), None) => b,
        (None, Some(c)) => c * kappa,
        _ => return Err(Gl2dError::Validation("give exactly one of b_ext or b_ext_over_kappa".into())),
    };
    let hint = positive("hint", run.cfg.require("hint")?)?;
    run.start(None)?;

    let (epsilon, m) = admissible_epsilons(kappa, b_ext, hint)?;
    run.report(&Snapped { epsilon, m, kappa, b_ext })?;
    Ok(Outcome::Done)
}

#[derive(Args, Debug)]
pub struct NondimArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    kappa: Option<f64>,
    /// Sample side in coherence lengths.
    #[arg(long)]
    sample_side: Option<f64>,
    #[arg(long)]
    b_ext: Option<f64>,
}

pub fn nondim(a: NondimArgs) -> Result<Outcome> {
    let mut run = Run::new(&a.common)?;
    run.cfg.set("kappa", a.kappa);
    run.cfg.set("sample_side", a.sample_side);
    run.cfg.set("b_ext", a.b_ext);
    let kappa = run.cfg.require("kappa")?;
    let side = run.cfg.require("sample_side")?;
    let b_ext = run.cfg.get("b_ext", 0.0)?;
    let p = nondimensionalize(kappa, side, b_ext)?;
    run.start(None)?;
    run.report(&p)?;
    Ok(Outcome::Done)
}

use std::f64::consts::{SQRT_2, TAU};

use gl2d::energy::{modica_mortola, total_energy};
use gl2d::optimize::{cell_profile, minimize, BoundarySpec, MinimizeOptions};
use gl2d::polygeom::{classify, edge_squares, square_ccw, PolyhedralSet, Region};
use gl2d::profile1d::block::build_block;
use gl2d::recovery::{build_recovery, RecoveryGeometry, RecoveryOptions};
use gl2d::{admissible_epsilons, make_params, Configuration, Grid, Params, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn smooth(n: usize) -> (Configuration, Vec<C64>, Vec<C64>) {
    let p = make_params(0.5, 0.3, 0.0).unwrap();
    let g = Grid::torus(n, 1.0).unwrap();
    let mut c = Configuration::uniform(g, p, C64::new(0.0, 0.0), 0.0);
    let mut d1 = Vec::with_capacity(g.len());
    let mut d2 = Vec::with_capacity(g.len());
    let i = C64::new(0.0, 1.0);
    for k in 0..g.len() {
        let (a, b) = g.coords(k);
        let (x, y) = (g.x1(a), g.x2(b));
        let rho = 0.6 + 0.25 * (TAU * x).sin() * (TAU * y).cos();
        let rho1 = 0.25 * TAU * (TAU * x).cos() * (TAU * y).cos();
        let rho2 = -0.25 * TAU * (TAU * x).sin() * (TAU * y).sin();
        let th = (TAU * x).cos() + 0.5 * (TAU * (x + y)).sin();
        let th1 = -TAU * (TAU * x).sin() + 0.5 * TAU * (TAU * (x + y)).cos();
        let th2 = 0.5 * TAU * (TAU * (x + y)).cos();
        let a1 = 0.2 * (TAU * y).sin();
        let a2 = 0.15 * (TAU * x).cos();
        let u = C64::from_polar(rho, th);
        c.u[k] = u;
        c.a.a1[k] = a1;
        c.a.a2[k] = a2;
        let du1 = C64::from_polar(1.0, th) * (rho1 + i * rho * th1);
        let du2 = C64::from_polar(1.0, th) * (rho2 + i * rho * th2);
        d1.push(du1 - i * p.alpha * a1 * u);
        d2.push(du2 - i * p.alpha * a2 * u);
    }
    (c, d1, d2)
}

fn max_err(n: usize) -> f64 {
    let (c, e1, e2) = smooth(n);
    let (d1, d2) = (c.covariant_diff(1), c.covariant_diff(2));
    (0..c.grid.len())
        .map(|k| (d1[k] - e1[k]).norm().max((d2[k] - e2[k]).norm()))
        .fold(0.0, f64::max)
}

#[test]
fn covariant_difference_is_first_order() {
    let (a, b, c) = (max_err(64), max_err(128), max_err(256));
    for r in [a / b, b / c] {
        assert!((1.5..=3.0).contains(&r), "ratios {} {}", a / b, b / c);
    }
}

fn seg_dist(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    ((p[0] - a[0] - t * dx).powi(2) + (p[1] - a[1] - t * dy).powi(2)).sqrt()
}

fn frame() -> PolyhedralSet {
    let mut hole = square_ccw(0.35, 0.35, 0.3);
    hole.reverse();
    PolyhedralSet::new(vec![square_ccw(0.2, 0.2, 0.6), hole]).unwrap()
}

#[test]
fn signed_distance_matches_brute_force() {
    let sets = [
        PolyhedralSet::square(0.25, 0.25, 0.5).unwrap(),
        frame(),
        PolyhedralSet::new(vec![square_ccw(0.1, 0.1, 0.3), square_ccw(0.55, 0.5, 0.35)]).unwrap(),
        PolyhedralSet::new(vec![vec![[0.2, 0.2], [0.8, 0.3], [0.5, 0.85]]]).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for set in &sets {
        for _ in 0..10_000 {
            let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let mut d = f64::INFINITY;
            for sx in [-1.0, 0.0, 1.0] {
                for sy in [-1.0, 0.0, 1.0] {
                    for e in &set.edges {
                        let a = [e.c_minus[0] + sx, e.c_minus[1] + sy];
                        let b = [e.c_plus[0] + sx, e.c_plus[1] + sy];
                        d = d.min(seg_dist(x, a, b));
                    }
                }
            }
            let want = if set.contains(x) { d } else { -d };
            assert!((set.signed_distance(x) - want).abs() <= 1e-12, "{x:?}");
        }
    }
}

fn square_params(squares: f64) -> (PolyhedralSet, Params) {
    let set = PolyhedralSet::square(0.25, 0.25, 0.5).unwrap();
    let b_ext = 0.25 * set.measures().area / SQRT_2;
    let (eps, _) = admissible_epsilons(0.25, b_ext, 0.125 * 0.5 / (squares + 2.0) * (1.0 - 1e-3)).unwrap();
    (set, Params::new(eps, 0.25, b_ext).unwrap())
}

#[test]
fn corner_area_scales_with_eps_squared() {
    let cs: Vec<f64> = [6.0, 8.0, 10.0, 14.0]
        .iter()
        .map(|&q| {
            let (set, p) = square_params(q);
            edge_squares(&set, p.epsilon, &[0.0], 0.125).unwrap().corner_constant
        })
        .collect();
    let (lo, hi) = (cs.iter().cloned().fold(f64::MAX, f64::min), cs.iter().cloned().fold(f64::MIN, f64::max));
    assert!(hi / lo <= 1.1, "{cs:?}");
}

#[test]
fn labels_partition_the_torus() {
    let (set, p) = square_params(6.0);
    let dec = edge_squares(&set, p.epsilon, &[0.0], 0.125).unwrap();
    let n = 200;
    let mut counts = [0usize; 4];
    for j in 0..n {
        for i in 0..n {
            let x = [i as f64 / n as f64, j as f64 / n as f64];
            let r = classify(x, &set, &dec);
            let inside = set.contains(x);
            match r {
                Region::DeepInterior => {
                    assert!(inside);
                    counts[0] += 1
                }
                Region::Square { local, .. } => {
                    assert!(local[0].abs() <= 0.5 + 1e-12 && local[1].abs() <= 0.5 + 1e-12);
                    counts[1] += 1
                }
                Region::Corner => counts[2] += 1,
                Region::Outside => {
                    assert!(!inside);
                    counts[3] += 1
                }
            }
        }
    }
    assert_eq!(counts.iter().sum::<usize>(), n * n);
    assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
}

#[test]
fn modica_mortola_over_energy_is_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = make_params(0.2, 0.3, 0.0).unwrap();
    let g = Grid::torus(24, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let mut c = Configuration::uniform(g, p, C64::new(0.0, 0.0), 0.0);
        for k in 0..g.len() {
            c.u[k] = C64::from_polar(rng.gen_range(0.0..1.0), rng.gen_range(0.0..TAU));
            c.a.a1[k] = rng.gen_range(-0.2..0.2);
            c.a.a2[k] = rng.gen_range(-0.2..0.2);
        }
        let m = modica_mortola(&c.rho(), &g, p.epsilon, None).unwrap();
        let e = total_energy(&c, None).total;
        worst = worst.max(m / e);
    }
    println!("empirical M/E constant at kappa = 0.3: {worst:.4}");
    assert!(worst.is_finite() && worst > 0.0);
}

#[test]
fn recovery_fields_in_range_and_minimizer_admissible() {
    let (set, p) = square_params(6.0);
    let n = 256;
    let prof = cell_profile(0.25, 0.125, 0.375).unwrap();
    let blk = build_block(&prof, 0.125, 0.375, (p.epsilon / 0.125 * n as f64).round() as usize).unwrap();
    let geo = RecoveryGeometry::new(&set, p, &blk, n).unwrap();
    let zetas = geo.solve_flux_offsets().unwrap();
    let f = geo.scalar_fields(&zetas).unwrap();
    assert!(f.rho.iter().all(|r| (0.0..=1.0).contains(r)));
    let r = build_recovery(&set, &p, &blk, &RecoveryOptions { n, ..Default::default() }).unwrap();
    assert!(r.region_sum_defect <= 1e-12 * r.energy.total.max(1.0));
    let cfg = r.cfg.unwrap();
    assert!(cfg.is_admissible(1e-6));
    let m = minimize(&cfg, &BoundarySpec::torus(), &MinimizeOptions { tol: None, max_iter: 300 }).unwrap();
    assert!(m.admissible, "max rho {}", m.max_rho);
    assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
    assert!((m.cfg.flux() - p.flux()).abs() <= 1e-14);
}

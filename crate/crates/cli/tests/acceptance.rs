//! Acceptance suite: one test per criterion, each printing a single
//! `PASS`/`FAIL criterion N: ...` line before asserting.
//!
//! Run with `cargo test -p hypolab-cli --test acceptance -- --nocapture` to
//! see the lines.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hypolab_cli::commands::{random_boundary, random_interior};
use hypolab_core::dirichlet::{regularization_ladder, solve, wmp_check, DirichletSolver, Field};
use hypolab_core::discretize::assemble;
use hypolab_core::green::{
    collar_bump, comparison_bound, green_columns, green_matrix, harmonic_extension, verify_boundary_decay, verify_reproduction,
};
use hypolab_core::grid::{ball_domain, box_domain, build_grid, exterior_ball, lens_domain, DomainMask};
use hypolab_core::harnack::{ball_nodes_in, chain_of_balls, poisson_kernel, strong_constant, weak_constant, PoissonKernel};
use hypolab_core::operator::{gallery, OperatorSpec, ParamValue, Params, GALLERY};
use hypolab_core::propagation::{characteristic_test, default_budget, hopf_certificate, reachable_set, smp_test, SmpOutcome};
use hypolab_core::Error;

const SEED: u64 = 0x5EED;
const TILT: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn report(n: u32, pass: bool, detail: String) {
    println!("{} criterion {n}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn op(name: &str, eps: f64) -> OperatorSpec {
    let mut params = Params::new();
    if name == "laplace1d" {
        params.insert("dim".into(), ParamValue::Num(1.0));
        return gallery("laplace", &params).unwrap().with_epsilon(eps).unwrap();
    }
    gallery(name, &params).unwrap().with_epsilon(eps).unwrap()
}

/// Lens domain for each gallery operator. The Grushin lens is tilted so that
/// the degenerate line x1 = 0 crosses it obliquely; the others use h0 = e1.
/// Every lens leaves at least one grid layer free for dilation.
fn gallery_lens(name: &str, res: usize) -> Arc<DomainMask> {
    let dim = match name {
        "laplace" | "grushin_fedii" | "lie2d" => 2,
        "christ3d" | "kusuoka_stroock3d" => 3,
        "morimoto4d" => 4,
        _ => unreachable!(),
    };
    let (bounds, h0) = if name == "grushin_fedii" {
        (vec![(-1.4, 1.4); 2], vec![TILT, TILT])
    } else {
        let mut b = vec![(-2.3, 2.3); dim];
        b[0] = (-1.3, 1.3);
        let mut h = vec![0.0; dim];
        h[0] = 1.0;
        (b, h)
    };
    let grid = build_grid(&bounds, &vec![res; dim]).unwrap();
    Arc::new(lens_domain(&vec![0.0; dim], &h0, 1.0, grid).unwrap())
}

/// Working resolution per dimension that keeps each suite within minutes.
fn working_res(name: &str) -> usize {
    match name {
        "christ3d" | "kusuoka_stroock3d" => 17,
        "morimoto4d" => 11,
        _ => 33,
    }
}

fn gallery_names() -> Vec<&'static str> {
    GALLERY.iter().map(|e| e.name).collect()
}

fn unit_disk(res: usize) -> Arc<DomainMask> {
    let grid = build_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[res, res]).unwrap();
    Arc::new(ball_domain(&[0.0, 0.0], 1.0, grid).unwrap())
}

#[test]
fn criterion_01_green_symmetry() {
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for name in ["grushin_fedii", "lie2d"] {
        let sys = assemble(&op(name, 0.1), gallery_lens(name, 33)).unwrap();
        let a = green_matrix(&sys).unwrap().asymmetry();
        worst = worst.max(a);
        lines.push(format!("{name} {a:.2e}"));
    }
    report(1, worst <= 1e-10, format!("max relative asymmetry {} (≤ 1e-10)", lines.join(", ")));
}

#[test]
fn criterion_02_green_positivity_and_decay() {
    let mut ok = true;
    let mut lines = Vec::new();
    for name in ["grushin_fedii", "lie2d"] {
        let mut systems = Vec::new();
        for res in [17, 33, 65] {
            let sys = assemble(&op(name, 0.1), gallery_lens(name, res)).unwrap();
            let p = green_matrix(&sys).unwrap().positivity();
            ok &= p.nonpositive == 0 && p.min_entry > 0.0;
            lines.push(format!("{name}@{res} min k {:.2e}", p.min_entry));
            systems.push(sys);
        }
        let d = verify_boundary_decay(&systems, &[0.0, 0.0]).unwrap();
        ok &= d.strictly_decreasing;
        lines.push(format!("{name} collar max {:?}", d.collar_max.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>()));
    }
    report(2, ok, lines.join("; "));
}

#[test]
fn criterion_03_reproduction_identity() {
    let mut worst = 0.0f64;
    let mut count = 0;
    for name in gallery_names() {
        let mask = gallery_lens(name, working_res(name));
        let sys = assemble(&op(name, 0.1), mask.clone()).unwrap();
        let gm = green_columns(&sys, &[]).unwrap();
        let dist = mask.boundary_distance();
        let deepest = *dist.iter().max().unwrap();
        let need = deepest.min(4);
        let deep: Vec<usize> = mask.interior().iter().zip(&dist).filter(|(_, d)| **d >= need).map(|(n, _)| *n).collect();
        assert!(need >= 3, "{name}: domain too thin for the collar ({deepest})");
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        for _ in 0..5 {
            let c = deep[rng.random_range(0..deep.len())];
            let r = verify_reproduction(&gm, &collar_bump(&mask, c)).unwrap();
            assert!(r.phi_sup > 0.0);
            worst = worst.max(r.g_of_l).max(r.l_of_g);
            count += 1;
        }
    }
    report(3, worst <= 1e-8, format!("{count} bumps over 6 operators, max residual {worst:.2e}·‖φ‖∞ (≤ 1e-8)"));
}

#[test]
fn criterion_04_comparison_bound() {
    let mut worst = f64::INFINITY;
    let mut samples = 0;
    for name in gallery_names() {
        let mask = gallery_lens(name, working_res(name));
        let outer = Arc::new(mask.dilated().unwrap());
        let outer_solver = DirichletSolver::new(assemble(&op(name, 0.0), outer.clone()).unwrap()).unwrap();
        for eps in [0.05, 0.1, 0.5] {
            let sys = assemble(&op(name, eps), mask.clone()).unwrap();
            let gm = green_columns(&sys, &[]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(SEED);
            for _ in 0..20 {
                let u = harmonic_extension(&outer_solver, &random_boundary(&outer, &mut rng)).unwrap();
                let r = comparison_bound(&gm, outer_solver.system(), &u).unwrap();
                worst = worst.min(r.min_margin / r.u_sup);
                samples += 1;
            }
        }
    }
    report(4, worst >= -1e-8, format!("{samples} samples, min margin {worst:.3e}·‖u‖∞ (≥ -1e-8)"));
}

#[test]
fn criterion_05_wmp_and_monotonicity() {
    let mut ok = true;
    let (mut min_scaled, mut max_excess) = (f64::INFINITY, 0.0f64);
    for name in gallery_names() {
        for eps in [0.0, 0.1] {
            let mask = gallery_lens(name, working_res(name));
            let sys = assemble(&op(name, eps), mask.clone()).unwrap();
            let mm = sys.check_mmatrix();
            ok &= sys.diag_a() && mm.pass;
            let solver = DirichletSolver::new(sys.clone()).unwrap();
            let zero = Field::zeros(mask.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(SEED);
            for _ in 0..20 {
                let phi = random_boundary(&mask, &mut rng);
                let f = random_interior(&mask, &mut rng);
                let u = solver.solve(&f, &phi).unwrap();
                let scale = f.sup_norm().max(phi.sup_norm());
                let umin = u.values().iter().cloned().fold(f64::INFINITY, f64::min);
                min_scaled = min_scaled.min(umin / scale);

                let h = solver.solve(&zero, &phi).unwrap();
                let (_, imax) = h.interior_max();
                let (_, bmax) = h.boundary_max();
                max_excess = max_excess.max(imax.max(bmax) - bmax);
                ok &= wmp_check(&sys, &h).subsolution;
            }
        }
    }
    ok &= min_scaled >= -1e-12 && max_excess <= 1e-10;
    report(
        5,
        ok,
        format!("M-matrix on all systems, min u/scale {min_scaled:.2e} (≥ -1e-12), sup excess over boundary {max_excess:.2e} (≤ 1e-10)"),
    )
}

/// Continuum kernel of `−u'' = f` on `(0, 1)` with zero boundary values.
fn k1(x: f64, y: f64) -> f64 {
    x.min(y) * (1.0 - x.max(y))
}

#[test]
fn criterion_06_one_dimensional_green_oracle() {
    // Nodal values of the discrete kernel coincide with the closed form up to
    // roundoff, so the convergence order is measured on the action of the
    // kernel: Σ_y k_h(x, y) f(y) h against ∫ k(x, y) f(y) dy = sin(πx)/π²
    // for f = sin(πy).
    let spec = op("laplace1d", 0.0);
    let mut nodal = Vec::new();
    let mut action = Vec::new();
    for res in [33, 65, 129] {
        let grid = build_grid(&[(0.0, 1.0)], &[res]).unwrap();
        let mask = Arc::new(box_domain(&[0.0], &[1.0], grid).unwrap());
        let gm = green_matrix(&assemble(&spec, mask.clone()).unwrap()).unwrap();
        let xs: Vec<f64> = mask.interior().iter().map(|&n| mask.grid().coord(n)[0]).collect();
        let mut e = 0.0f64;
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in xs.iter().enumerate() {
                e = e.max((gm.get(i, j) - k1(x, y)).abs());
            }
        }
        nodal.push(e);
        let f: Vec<f64> = xs.iter().map(|x| (std::f64::consts::PI * x).sin()).collect();
        let u = gm.apply(&f).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        action.push(xs.iter().zip(&u).fold(0.0f64, |m, (x, v)| m.max((v - (std::f64::consts::PI * x).sin() / pi2).abs())));
    }
    let orders: Vec<f64> = action.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let ok = nodal.iter().all(|e| *e <= 1e-13)
        && action.windows(2).all(|w| w[1] < w[0])
        && orders.iter().all(|o| *o >= 1.9);
    report(
        6,
        ok,
        format!(
            "nodal max error {:?} (roundoff), kernel action errors {:?}, orders {:?} (≥ 1.9)",
            nodal.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>(),
            action.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>(),
            orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>()
        ),
    );
}

fn disk_kernel(res: usize) -> PoissonKernel {
    poisson_kernel(&assemble(&op("laplace", 0.0), unit_disk(res)).unwrap()).unwrap()
}

fn constants(pk: &PoissonKernel, center: &[f64], radius: f64) -> (f64, f64) {
    let mask = pk.mask();
    let k = ball_nodes_in(mask, center, radius);
    (weak_constant(pk, &k, mask.nearest_interior(center)).unwrap().c, strong_constant(pk, &k).unwrap().m)
}

#[test]
fn criterion_07_harnack_constants() {
    let (c65, m65) = constants(&disk_kernel(65), &[0.0, 0.0], 0.5);
    let (c129, m129) = constants(&disk_kernel(129), &[0.0, 0.0], 0.5);
    let ok = (2.7..=3.3).contains(&c65)
        && (7.5..=10.5).contains(&m65)
        && (c129 / 3.0 - 1.0).abs() <= 0.05
        && (m129 / 9.0 - 1.0).abs() <= 0.05
        && (c129 - 3.0).abs() < (c65 - 3.0).abs()
        && (m129 - 9.0).abs() < (m65 - 9.0).abs();
    report(7, ok, format!("65: C = {c65:.4}, M = {m65:.4}; 129: C = {c129:.4}, M = {m129:.4} (targets 3, 9)"));
}

fn harnack_cases() -> Vec<(&'static str, PoissonKernel, Vec<f64>, f64)> {
    let grushin = poisson_kernel(&assemble(&op("grushin_fedii", 0.0), gallery_lens("grushin_fedii", 33)).unwrap()).unwrap();
    vec![("laplace disk", disk_kernel(65), vec![0.0, 0.0], 0.5), ("grushin_fedii lens", grushin, vec![0.0, 0.0], 0.3)]
}

#[test]
fn criterion_08_cone_exactness() {
    let mut ok = true;
    let mut lines = Vec::new();
    for (label, pk, center, radius) in harnack_cases() {
        let mask = pk.mask();
        let k = ball_nodes_in(mask, &center, radius);
        let y0 = mask.nearest_interior(&center);
        let weak = weak_constant(&pk, &k, y0).unwrap();
        let strong = strong_constant(&pk, &k).unwrap();
        let kpos: Vec<usize> = k.iter().map(|&n| mask.interior_pos(n).unwrap()).collect();
        let ypos = mask.interior_pos(y0).unwrap();
        let sup_inf = |u: &[f64]| {
            let s = kpos.iter().map(|&x| u[x]).fold(f64::NEG_INFINITY, f64::max);
            let i = kpos.iter().map(|&x| u[x]).fold(f64::INFINITY, f64::min);
            (s, i)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        for _ in 0..20 {
            let c: Vec<f64> = (0..pk.n_columns()).map(|_| rng.random::<f64>()).collect();
            let u = pk.combine(&c);
            let (s, i) = sup_inf(&u);
            ok &= s <= weak.c * u[ypos] * (1.0 + 1e-9) && s <= strong.m * i * (1.0 + 1e-9);
        }
        let at = |z: usize| {
            let c: Vec<f64> = pk.columns().iter().map(|&b| if b == z { 1.0 } else { 0.0 }).collect();
            pk.combine(&c)
        };
        let u = at(weak.witness_z);
        let weak_gap = (sup_inf(&u).0 / u[ypos] / weak.c - 1.0).abs();
        let u = at(strong.witness_z);
        let (s, i) = sup_inf(&u);
        let strong_gap = (s / i / strong.m - 1.0).abs();
        ok &= weak_gap <= 1e-9 && strong_gap <= 1e-9;
        lines.push(format!("{label}: 20 draws within bounds, witness gaps {weak_gap:.1e}/{strong_gap:.1e}"));
    }
    report(8, ok, lines.join("; "));
}

fn grushin_profile_kernel(profile: Option<&str>, res: usize) -> PoissonKernel {
    let mut params = Params::new();
    if let Some(p) = profile {
        params.insert("a".into(), ParamValue::Text(p.into()));
    }
    let spec = gallery("grushin_fedii", &params).unwrap();
    poisson_kernel(&assemble(&spec, gallery_lens("grushin_fedii", res)).unwrap()).unwrap()
}

#[test]
fn criterion_09_chain_of_balls() {
    // K = B(0, 0.3) crosses the degenerate line x1 = 0 in every Grushin case.
    // The finite-type profile a = |x1| must build; with the default
    // exp(-1/x1^2) profile the admissible radius near the line is below one
    // cell at these resolutions, which is reported rather than counted.
    let mut ok = true;
    let mut lines = Vec::new();
    let mut cases: Vec<(String, PoissonKernel, f64, bool)> = vec![("laplace disk@65".into(), disk_kernel(65), 0.5, true)];
    for res in [33, 65] {
        cases.push((format!("grushin_fedii a=|x1| lens@{res}"), grushin_profile_kernel(Some("abs(x1)"), res), 0.3, true));
        cases.push((format!("grushin_fedii default lens@{res}"), grushin_profile_kernel(None, res), 0.3, false));
    }
    for (label, pk, radius, must_build) in cases {
        let k = ball_nodes_in(pk.mask(), &[0.0, 0.0], radius);
        match chain_of_balls(&pk, &k, None, 0.4) {
            Ok(c) => {
                ok &= c.strong_m <= c.bound && c.dominates;
                lines.push(format!("{label}: p = {}, M = {:.3} ≤ 3^p = {:.3e}", c.p, c.strong_m, c.bound));
            }
            Err(Error::ChainFailure { node }) => {
                ok &= !must_build;
                lines.push(format!("{label}: no admissible radius at node {node}"));
            }
            Err(e) => panic!("{e}"),
        }
    }
    report(9, ok, lines.join("; "));
}

#[test]
fn criterion_10_controllability() {
    let mut ok = true;
    let mut lines = Vec::new();
    for name in ["grushin_fedii", "lie2d"] {
        let mask = gallery_lens(name, 33);
        let r = reachable_set(&op(name, 0.0), &[0.0, 0.0], &mask, default_budget(&mask)).unwrap();
        ok &= r.complete && r.coverage == 1.0;
        lines.push(format!("{name} {}/{} cells", r.reached.len(), r.n_interior));
    }
    let a = vec![vec!["1".to_string(), "0".into()], vec!["0".into(), "0".into()]];
    let flat = OperatorSpec::from_expressions(&a, "1", None).unwrap();
    let mask = gallery_lens("grushin_fedii", 33);
    let r = reachable_set(&flat, &[0.0, 0.0], &mask, default_budget(&mask)).unwrap();
    let row = mask.grid().multi(r.start_node)[1];
    let on_row = mask.interior().iter().filter(|&&n| mask.grid().multi(n)[1] == row).count();
    let line_only = r.reached.iter().all(|&n| mask.grid().multi(n)[1] == row);
    ok &= line_only && r.reached.len() == on_row && !r.complete;
    lines.push(format!("diag(1,0): {} cells, all on the start row of {on_row}", r.reached.len()));
    report(10, ok, lines.join("; "));
}

#[test]
fn criterion_11_hopf_certificates() {
    let mut ok = true;
    let mut lines = Vec::new();
    for name in gallery_names() {
        let mask = gallery_lens(name, working_res(name));
        let spec = op(name, 0.0);
        let h = mask.grid().max_spacing();
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let mut order = rand::seq::index::sample(&mut rng, mask.n_boundary(), mask.n_boundary()).into_vec().into_iter();
        let (mut certified, mut min_lw, mut min_order) = (0, f64::INFINITY, f64::INFINITY);
        while certified < 50 {
            let Some(k) = order.next() else { break };
            let Ok(ball) = exterior_ball(&mask, mask.boundary()[k]) else { continue };
            if characteristic_test(&spec, &ball.y, &ball.nu, None).unwrap().characteristic {
                continue;
            }
            let c = hopf_certificate(&spec, &ball.y, &ball.nu, Some(h)).unwrap();
            min_lw = min_lw.min(c.lw_at_y);
            min_order = min_order.min(c.cross_check.expect("cross-check requested").min_order());
            certified += 1;
        }
        ok &= certified == 50 && min_lw > 0.0 && min_order >= 1.5;
        lines.push(format!("{name}: {certified} certs, min lw {min_lw:.2e}, min order {min_order:.2}"));
    }
    let spec = op("grushin_fedii", 0.0);
    let classified = [0.3, 0.5, -0.7].iter().all(|&y2| characteristic_test(&spec, &[0.0, y2], &[0.0, 1.0], None).unwrap().characteristic)
        && matches!(hopf_certificate(&spec, &[0.0, 0.5], &[0.0, 1.0], None), Err(Error::CharacteristicDirection { .. }));
    ok &= classified;
    lines.push(format!("grushin x1 = 0, ν = e2 characteristic: {classified}"));
    report(11, ok, lines.join("; "));
}

#[test]
fn criterion_12_regularization_ladder() {
    let mask = gallery_lens("grushin_fedii", 33);
    let spec = op("grushin_fedii", 0.1);
    let f = Field::constant(mask.clone(), 1.0);
    let phi = Field::zeros(mask.clone());
    let l = regularization_ladder(&spec, mask, &f, &phi, &[10.0, 1e2, 1e3, 1e4]).unwrap();
    let bound = 1.0 / 0.1;
    let ok = l.sup_norms.iter().all(|s| *s <= bound)
        && l.consecutive_distances.windows(2).all(|w| w[1] < w[0])
        && l.monotone_decreasing;
    report(
        12,
        ok,
        format!(
            "sup norms {:?} ≤ {bound}, consecutive distances {:?}",
            l.sup_norms.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            l.consecutive_distances.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>()
        ),
    );
}

fn run_cli(args: &[&str], out: &Path) -> serde_json::Value {
    let status = Command::new(env!("CARGO_BIN_EXE_hypolab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .status()
        .expect("binary runs");
    assert_eq!(status.code(), Some(0), "{args:?}");
    let text = std::fs::read_to_string(out.join("report.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v.as_object_mut().unwrap().remove("timing");
    v
}

#[test]
fn criterion_13_determinism() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let grushin = configs.join("grushin_lens.toml");
    let disk = configs.join("laplace_disk.toml");
    let g = grushin.to_str().unwrap();
    let d = disk.to_str().unwrap();
    let suites: Vec<Vec<&str>> = vec![
        vec!["solve", "--config", g],
        vec!["green", "--config", g],
        vec!["harnack", "--config", d],
        vec!["smp", "--config", g],
        vec!["hopf", "--config", g],
        vec!["paths", "--config", g],
        vec!["refine", "--config", g],
        vec!["gallery-list"],
    ];
    let tmp = tempfile::tempdir().unwrap();
    let mut differing = Vec::new();
    for (k, args) in suites.iter().enumerate() {
        let a = run_cli(args, &tmp.path().join(format!("{k}a")));
        let b = run_cli(args, &tmp.path().join(format!("{k}b")));
        let (sa, sb) = (serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        if sa != sb {
            differing.push(args[0]);
        }
    }
    report(
        13,
        differing.is_empty(),
        format!("{} suites run twice, differing reports: {differing:?}", suites.len()),
    );
}

#[test]
fn smp_on_constant_data_is_constant() {
    // Sanity check tying the strong principle to the same systems.
    let mask = gallery_lens("grushin_fedii", 17);
    let sys = assemble(&op("grushin_fedii", 0.0), mask.clone()).unwrap();
    let u = solve(&sys, &Field::zeros(mask.clone()), &Field::constant(mask, 5.0)).unwrap();
    let r = smp_test(&sys, &u, None).unwrap();
    assert!(r.pass && matches!(r.outcome, SmpOutcome::ConstantOnReachableSet | SmpOutcome::NoInteriorMaximum));
}

//! One function per subcommand; each returns the `results` block of the report.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use hypolab_core::dirichlet::{certified_c0, regularization_ladder, wmp_check, DirichletSolver, Field};
use hypolab_core::discretize::{assemble, StencilSystem};
use hypolab_core::expr::Expr;
use hypolab_core::green::{
    collar_bump, comparison_bound, green_columns, green_matrix, harmonic_extension, verify_boundary_decay, verify_reproduction,
    DENSE_CAP,
};
use hypolab_core::grid::{ball_domain, box_domain, lens_domain, DomainMask, Grid, Slice, DEFAULT_NODE_CAP};
use hypolab_core::harnack::{
    ball_nodes_in, chain_of_balls, derivative_constant, poisson_kernel, strong_constant, weak_constant, RefinementEntry,
};
use hypolab_core::operator::{gallery, OperatorSpec, GALLERY};
use hypolab_core::propagation::{characteristic_test, default_budget, hopf_certificate, reachable_set, smp_test, SmpOutcome};
use hypolab_core::viz::{heatmap_pgm, heatmap_svg, mask_pgm, Heatmap};
use hypolab_core::{grid, Error as CoreError};

use crate::config::{DomainConfig, ExperimentConfig, Format, OperatorConfig};
use crate::report::Outputs;
use crate::CmdError;

type Res<T> = std::result::Result<T, CmdError>;

pub struct Setup {
    pub cfg: ExperimentConfig,
    pub spec: OperatorSpec,
    pub mask: Arc<DomainMask>,
    pub hash: String,
}

pub fn build_operator(op: &OperatorConfig) -> Result<OperatorSpec, CoreError> {
    let spec = match (&op.gallery, &op.a) {
        (Some(name), _) => gallery(name, &op.params)?,
        (None, Some(a)) => OperatorSpec::from_expressions(a, op.v.as_deref().unwrap_or("1"), op.c.as_deref())?,
        (None, None) => return Err(CoreError::InvalidOperator("no operator given".into())),
    };
    spec.with_epsilon(op.shift_eps)
}

pub fn build_mask(cfg: &ExperimentConfig, resolution: &[usize]) -> Result<DomainMask, CoreError> {
    let bounds: Vec<(f64, f64)> = cfg.grid.bounds.iter().map(|b| (b[0], b[1])).collect();
    let grid = Grid::with_cap(&bounds, resolution, cfg.grid.node_cap.unwrap_or(DEFAULT_NODE_CAP))?;
    match &cfg.domain {
        DomainConfig::Lens { x0, h0, lens_eps } => lens_domain(x0, h0, *lens_eps, grid),
        DomainConfig::Ball { center, radius } => ball_domain(center, *radius, grid),
        DomainConfig::Box { lo, hi } => box_domain(lo, hi, grid),
    }
}

impl Setup {
    pub fn new(cfg: ExperimentConfig) -> Res<Setup> {
        let spec = build_operator(&cfg.operator)?;
        if spec.dim() != cfg.grid.bounds.len() {
            return Err(CoreError::DimensionMismatch { expected: cfg.grid.bounds.len(), got: spec.dim() }.into());
        }
        let mask = Arc::new(build_mask(&cfg, &cfg.grid.resolution_vec())?);
        let hash = cfg.hash();
        Ok(Setup { cfg, spec, mask, hash })
    }

    fn center(&self) -> Vec<f64> {
        self.cfg.domain.center()
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.cfg.run.seed)
    }

    fn mask_at(&self, res: usize) -> Res<Arc<DomainMask>> {
        Ok(Arc::new(build_mask(&self.cfg, &vec![res; self.spec.dim()])?))
    }

    /// 2-D slice through `node` along the first two axes.
    fn slice_through(&self, node: usize) -> Slice {
        let g = self.mask.grid();
        Slice { axes: (0, 1.min(g.dim() - 1)), fixed: g.multi(node) }
    }

    fn figures(&self, out: &mut Outputs, stem: &str, title: &str, map: &Heatmap, overlays: &[Vec<(f64, f64)>]) -> Res<()> {
        out.write(&format!("{stem}.svg"), Format::Svg, heatmap_svg(map, title, &self.hash, overlays))?;
        out.write(&format!("{stem}.pgm"), Format::Pgm, heatmap_pgm(map))?;
        Ok(())
    }
}

fn expr_field(src: &str, mask: &Arc<DomainMask>) -> Res<Field> {
    let e = Expr::parse(src, mask.dim())?;
    let f = Field::from_fn(mask.clone(), |x| e.eval(x));
    if !f.is_finite() {
        return Err(CoreError::InvalidParameter(format!("expression `{src}` is not finite on the domain")).into());
    }
    Ok(f)
}

/// Uniform `[0, 1)` boundary values, zero elsewhere.
pub fn random_boundary(mask: &Arc<DomainMask>, rng: &mut impl Rng) -> Field {
    let mut f = Field::zeros(mask.clone());
    let vals: Vec<f64> = (0..mask.n_boundary()).map(|_| rng.random::<f64>()).collect();
    f.set_boundary(&vals);
    f
}

/// Uniform `[0, 1)` values on interior nodes, zero elsewhere.
pub fn random_interior(mask: &Arc<DomainMask>, rng: &mut impl Rng) -> Field {
    let mut f = Field::zeros(mask.clone());
    let vals: Vec<f64> = (0..mask.n_interior()).map(|_| rng.random::<f64>()).collect();
    f.set_interior(&vals);
    f
}

fn field_csv(out: &mut Outputs, name: &str, field: &Field) -> Res<()> {
    out.write(name, Format::Csv, field.to_csv())?;
    Ok(())
}

fn mm_outputs(out: &mut Outputs, sys: &StencilSystem) -> Res<()> {
    out.write("system.mtx", Format::Mm, sys.to_matrix_market())?;
    out.write("boundary.mtx", Format::Mm, sys.boundary_map_matrix_market())?;
    out.write("system.json", Format::Mm, serde_json::to_string_pretty(&sys.sidecar()).expect("sidecar"))?;
    Ok(())
}

fn system_summary(sys: &StencilSystem) -> Value {
    let mm = sys.check_mmatrix();
    json!({
        "n_interior": sys.n_interior(),
        "n_boundary": sys.mask().n_boundary(),
        "shift_eps": sys.shift(),
        "diag_a": sys.diag_a(),
        "mmatrix": mm,
        "nu_asymmetry": sys.nu_asymmetry(),
        "certified_c0": certified_c0(sys),
    })
}

pub fn solve(s: &Setup, out: &mut Outputs) -> Res<Value> {
    let sys = assemble(&s.spec, s.mask.clone())?;
    let f = expr_field(&s.cfg.run.f, &s.mask)?;
    let phi = expr_field(&s.cfg.run.phi, &s.mask)?;
    let solver = DirichletSolver::new(sys.clone())?;
    let u = solver.solve(&f, &phi)?;
    let wmp = wmp_check(&sys, &u);
    let ladder = if s.cfg.run.n_list.is_empty() {
        None
    } else {
        Some(regularization_ladder(&s.spec, s.mask.clone(), &f, &phi, &s.cfg.run.n_list)?)
    };
    let (imax_node, imax) = u.interior_max();
    let (_, bmax) = u.boundary_max();
    field_csv(out, "u.csv", &u)?;
    let map = Heatmap::from_field(&u, &s.slice_through(imax_node));
    s.figures(out, "u", &format!("u for {}", s.spec.name()), &map, &[])?;
    out.write("mask.pgm", Format::Pgm, mask_pgm(&s.mask, &s.slice_through(imax_node)))?;
    mm_outputs(out, &sys)?;
    Ok(json!({
        "system": system_summary(&sys),
        "solver": solver.kind(),
        "u": { "sup": u.sup_norm(), "interior_max": imax, "boundary_max": bmax, "argmax": imax_node },
        "wmp": wmp,
        "ladder": ladder,
    }))
}

pub fn green(s: &Setup, out: &mut Outputs) -> Res<Value> {
    let sys = assemble(&s.spec, s.mask.clone())?;
    let x0 = s.cfg.run.point.clone().unwrap_or_else(|| s.center());
    let x_node = s.mask.nearest_interior(&x0);
    let x_pos = s.mask.interior_pos(x_node).expect("nearest interior");
    let dense = sys.n_interior() <= DENSE_CAP;
    let gm = if dense { green_matrix(&sys)? } else { green_columns(&sys, &[x_pos])? };
    let mass = gm.l1_mass()?;
    let positivity = gm.positivity();
    let diag = gm.diagonal();

    let mut rng = s.rng();
    let dist = s.mask.boundary_distance();
    let deep: Vec<usize> = s.mask.interior().iter().zip(&dist).filter(|(_, d)| **d >= 4).map(|(n, _)| *n).collect();
    let mut reproduction = Vec::new();
    for _ in 0..s.cfg.run.bumps.min(if deep.is_empty() { 0 } else { usize::MAX }) {
        let c = deep[rng.random_range(0..deep.len())];
        let r = verify_reproduction(&gm, &collar_bump(&s.mask, c))?;
        reproduction.push(json!({ "center": c, "g_of_l": r.g_of_l, "l_of_g": r.l_of_g }));
    }

    let mut comparison = Value::Null;
    if s.cfg.run.draws > 0 && s.spec.epsilon() > 0.0 {
        let outer = Arc::new(s.mask.dilated()?);
        let outer_sys = assemble(&s.spec.clone().with_epsilon(0.0)?, outer.clone())?;
        let outer_solver = DirichletSolver::new(outer_sys)?;
        let mut worst = f64::INFINITY;
        let mut worst_residual = 0.0f64;
        for _ in 0..s.cfg.run.draws {
            let phi = random_boundary(&outer, &mut rng);
            let u = harmonic_extension(&outer_solver, &phi)?;
            let rep = comparison_bound(&gm, outer_solver.system(), &u)?;
            worst = worst.min(rep.min_margin / rep.u_sup);
            worst_residual = worst_residual.max(rep.harmonic_residual);
        }
        comparison = json!({ "draws": s.cfg.run.draws, "min_relative_margin": worst, "max_harmonic_residual": worst_residual });
    }

    let decay = if s.cfg.run.resolutions.is_empty() {
        None
    } else {
        let systems = s
            .cfg
            .run
            .resolutions
            .iter()
            .map(|&r| Ok(assemble(&s.spec, s.mask_at(r)?)?))
            .collect::<Res<Vec<_>>>()?;
        Some(verify_boundary_decay(&systems, &x0)?)
    };

    let row = gm.row(x_pos)?;
    let mut row_field = Field::zeros(s.mask.clone());
    row_field.set_interior(&row);
    field_csv(out, "k_row.csv", &row_field)?;
    let map = Heatmap::from_nodes(&s.mask, &s.slice_through(x_node), |n| s.mask.interior_pos(n).map(|k| row[k]));
    s.figures(out, "k_row", &format!("k(x0, ·) for {}", s.spec.name()), &map, &[])?;
    if dense {
        out.write("green.bin", Format::Bin, gm.to_binary())?;
        out.write("green.json", Format::Bin, serde_json::to_string_pretty(&gm.metadata()).expect("metadata"))?;
    }
    mm_outputs(out, &sys)?;
    Ok(json!({
        "system": system_summary(&sys),
        "dense": dense,
        "x0_node": x_node,
        "asymmetry": gm.asymmetry(),
        "positivity": positivity,
        "column_harmonicity": gm.column_harmonicity(),
        "mass": { "max_row_mass": mass.max_row_mass, "total": mass.total },
        "diagonal": {
            "at_x0": gm.get(x_pos, x_pos),
            "min": diag.iter().cloned().fold(f64::INFINITY, f64::min),
            "max": diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        },
        "reproduction": reproduction,
        "comparison": comparison,
        "decay": decay,
    }))
}

pub fn harnack(s: &Setup, out: &mut Outputs) -> Res<Value> {
    let run = &s.cfg.run;
    let kc = run.k_center.clone().unwrap_or_else(|| s.center());
    let y0p = run.y0.clone().unwrap_or_else(|| s.center());
    let constants = |mask: &Arc<DomainMask>| -> Res<_> {
        let sys = assemble(&s.spec, mask.clone())?;
        let pk = poisson_kernel(&sys)?;
        let k = ball_nodes_in(mask, &kc, run.k_radius);
        if k.is_empty() {
            return Err(CoreError::InvalidParameter("the compact set K contains no interior node".into()).into());
        }
        let y0 = mask.nearest_interior(&y0p);
        Ok((pk, k, y0))
    };
    let (pk, k, y0) = constants(&s.mask)?;
    let weak = weak_constant(&pk, &k, y0)?;
    let strong = strong_constant(&pk, &k)?;
    let derivative = match derivative_constant(&pk, &k, y0, run.m) {
        Ok(d) => json!(d),
        Err(e @ CoreError::CollarViolation { .. }) => json!({ "error": e.code(), "message": e.to_string() }),
        Err(e) => return Err(e.into()),
    };
    let chain = match chain_of_balls(&pk, &k, None, run.delta) {
        Ok(c) => json!(c),
        Err(e @ CoreError::ChainFailure { .. }) => json!({ "error": e.code(), "message": e.to_string() }),
        Err(e) => return Err(e.into()),
    };

    let kpos: Vec<usize> = k.iter().map(|&n| s.mask.interior_pos(n).expect("K is interior")).collect();
    let ypos = s.mask.interior_pos(y0).expect("y0 is interior");
    let ratios = |u: &[f64]| {
        let sup = kpos.iter().map(|&x| u[x]).fold(f64::NEG_INFINITY, f64::max);
        let inf = kpos.iter().map(|&x| u[x]).fold(f64::INFINITY, f64::min);
        (sup / u[ypos], sup / inf)
    };
    let mut rng = s.rng();
    let (mut weak_worst, mut strong_worst) = (0.0f64, 0.0f64);
    for _ in 0..run.draws {
        let c: Vec<f64> = (0..pk.n_columns()).map(|_| rng.random::<f64>()).collect();
        let (w, m) = ratios(&pk.combine(&c));
        weak_worst = weak_worst.max(w / weak.c);
        strong_worst = strong_worst.max(m / strong.m);
    }
    let indicator = |z: usize| -> Vec<f64> { pk.columns().iter().map(|&c| if c == z { 1.0 } else { 0.0 }).collect() };
    let (w_at, _) = ratios(&pk.combine(&indicator(weak.witness_z)));
    let (_, m_at) = ratios(&pk.combine(&indicator(strong.witness_z)));
    let row_sum_dev = pk.row_sums().iter().fold(0.0f64, |a, v| a.max((v - 1.0).abs()));

    let mut refinement = Vec::new();
    for &r in &run.resolutions {
        let mask = s.mask_at(r)?;
        let (pk, k, y0) = constants(&mask)?;
        refinement.push(RefinementEntry { resolution: r, weak_c: weak_constant(&pk, &k, y0)?.c, strong_m: strong_constant(&pk, &k)?.m });
    }

    let wz = pk.columns().iter().position(|&c| c == weak.witness_z).expect("witness column");
    let base = pk.get(ypos, wz);
    let mut ratio_field = Field::zeros(s.mask.clone());
    ratio_field.set_interior(&(0..pk.n_interior()).map(|x| pk.get(x, wz) / base).collect::<Vec<_>>());
    field_csv(out, "ratio.csv", &ratio_field)?;
    let map = Heatmap::from_nodes(&s.mask, &s.slice_through(y0), |n| s.mask.interior_pos(n).map(|x| pk.get(x, wz) / base));
    s.figures(out, "ratio", "p(x, z*) / p(y0, z*)", &map, &[])?;
    Ok(json!({
        "n_interior": pk.n_interior(),
        "n_columns": pk.n_columns(),
        "min_entry": pk.min_entry(),
        "row_sum_deviation": row_sum_dev,
        "compact_size": k.len(),
        "basepoint": y0,
        "weak": weak,
        "strong": strong,
        "derivative": derivative,
        "chain": chain,
        "cone": {
            "draws": run.draws,
            "max_weak_ratio": weak_worst,
            "max_strong_ratio": strong_worst,
            "weak_witness_gap": (w_at / weak.c - 1.0).abs(),
            "strong_witness_gap": (m_at / strong.m - 1.0).abs(),
        },
        "refinement": refinement,
    }))
}

pub fn smp(s: &Setup, out: &mut Outputs) -> Res<Value> {
    let sys = assemble(&s.spec, s.mask.clone())?;
    let solver = DirichletSolver::new(sys.clone())?;
    let zero = Field::zeros(s.mask.clone());
    let mut rng = s.rng();
    let mut outcomes = json!({ "constant_on_reachable_set": 0, "no_interior_maximum": 0, "violated": 0 });
    let mut all_pass = true;
    let mut min_gap = f64::INFINITY;
    let mut min_scaled = f64::INFINITY;
    let mut max_sup_gap = 0.0f64;
    let mut last = None;
    for _ in 0..s.cfg.run.draws {
        let phi = random_boundary(&s.mask, &mut rng);
        let u = solver.solve(&zero, &phi)?;
        let r = smp_test(&sys, &u, None)?;
        let key = match r.outcome {
            SmpOutcome::ConstantOnReachableSet => "constant_on_reachable_set",
            SmpOutcome::NoInteriorMaximum => "no_interior_maximum",
            SmpOutcome::Violated => "violated",
        };
        outcomes[key] = json!(outcomes[key].as_u64().unwrap_or(0) + 1);
        all_pass &= r.pass;
        min_gap = min_gap.min(r.boundary_max - r.interior_max);
        let scale = phi.sup_norm();
        max_sup_gap = max_sup_gap.max((r.interior_max.max(r.boundary_max) - r.boundary_max) / scale);

        let f = random_interior(&s.mask, &mut rng);
        let v = solver.solve(&f, &phi)?;
        let scale = f.sup_norm().max(phi.sup_norm());
        let vmin = v.values().iter().cloned().fold(f64::INFINITY, f64::min);
        min_scaled = min_scaled.min(vmin / scale);
        last = Some(u);
    }
    let five = Field::constant(s.mask.clone(), 5.0);
    let constant = smp_test(&sys, &solver.solve(&zero, &five)?, None)?;
    if let Some(u) = &last {
        field_csv(out, "u_last.csv", u)?;
        let map = Heatmap::from_field(u, &s.slice_through(u.interior_max().0));
        s.figures(out, "u_last", "harmonic extension of the last draw", &map, &[])?;
    }
    Ok(json!({
        "system": system_summary(&sys),
        "draws": s.cfg.run.draws,
        "outcomes": outcomes,
        "all_pass": all_pass,
        "min_boundary_minus_interior_max": min_gap,
        "max_relative_sup_excess": max_sup_gap,
        "min_relative_value_nonnegative_data": min_scaled,
        "constant_five": constant,
    }))
}

pub fn hopf(s: &Setup, out: &mut Outputs) -> Res<Value> {
    let mask = &s.mask;
    let h = mask.grid().max_spacing();
    let mut rng = s.rng();
    let nb = mask.n_boundary();
    let mut picks = rand::seq::index::sample(&mut rng, nb, s.cfg.run.samples.min(nb)).into_vec();
    picks.sort_unstable();
    let mut csv = String::from("node,lambda,a_nu_nu,lw_at_y,min_order,status\n");
    let (mut certs, mut characteristic, mut no_ball) = (0usize, 0usize, 0usize);
    let mut min_lw = f64::INFINITY;
    let mut min_order = f64::INFINITY;
    let mut finest = h;
    for k in picks {
        let node = mask.boundary()[k];
        let ball = match grid::exterior_ball(mask, node) {
            Ok(b) => b,
            Err(CoreError::NoExteriorBall { .. }) => {
                no_ball += 1;
                csv.push_str(&format!("{node},,,,,no_exterior_ball\n"));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        if characteristic_test(&s.spec, &ball.y, &ball.nu, None)?.characteristic {
            characteristic += 1;
            csv.push_str(&format!("{node},,,,,characteristic\n"));
            continue;
        }
        let c = hopf_certificate(&s.spec, &ball.y, &ball.nu, Some(h))?;
        let order = c.cross_check.as_ref().map(|cc| cc.min_order()).unwrap_or(f64::NAN);
        finest = c.cross_check.as_ref().map_or(finest, |cc| finest.min(cc.spacings[0]));
        certs += 1;
        min_lw = min_lw.min(c.lw_at_y);
        min_order = min_order.min(order);
        csv.push_str(&format!("{node},{},{},{},{order},certificate\n", c.lambda, c.a_nu_nu, c.lw_at_y));
    }
    let probes = s
        .cfg
        .run
        .probes
        .iter()
        .map(|p| Ok(json!({ "y": p.y, "nu": p.nu, "report": characteristic_test(&s.spec, &p.y, &p.nu, None)? })))
        .collect::<Res<Vec<_>>>()?;
    out.write("hopf.csv", Format::Csv, csv)?;
    Ok(json!({
        "sampled": s.cfg.run.samples.min(nb),
        "certificates": certs,
        "characteristic": characteristic,
        "no_exterior_ball": no_ball,
        "min_lw_at_y": min_lw,
        "all_positive": min_lw > 0.0,
        "min_cross_check_order": min_order,
        "grid_spacing": h,
        "min_cross_check_base_spacing": finest,
        "probes": probes,
    }))
}

pub fn paths(s: &Setup, out: &mut Outputs) -> Res<Value> {
    let start = s.cfg.run.start.clone().unwrap_or_else(|| s.center());
    let budget = s.cfg.run.budget.unwrap_or_else(|| default_budget(&s.mask));
    let rep = reachable_set(&s.spec, &start, &s.mask, budget)?;
    let bbox = s.mask.grid().bounds();
    let picks: Vec<usize> = if rep.reached.len() <= 8 {
        rep.reached.clone()
    } else {
        (1..=8).map(|k| rep.reached[k * (rep.reached.len() - 1) / 8]).collect()
    };
    let mut csv = String::new();
    let mut overlays = Vec::new();
    let mut max_gap = 0.0f64;
    let mut all_valid = true;
    for (id, &node) in picks.iter().enumerate() {
        let path = rep.path_to(node).expect("picked nodes are reached");
        let v = path.validate(&s.spec, &bbox)?;
        max_gap = max_gap.max(v.max_reintegration_gap);
        all_valid &= v.valid;
        let body = path.to_csv();
        for (k, line) in body.lines().enumerate() {
            if k == 0 {
                if id == 0 {
                    csv.push_str(&format!("path,{line}\n"));
                }
            } else {
                csv.push_str(&format!("{id},{line}\n"));
            }
        }
        if s.spec.dim() >= 2 {
            overlays.push(path.segments.iter().flat_map(|seg| seg.samples.iter().map(|p| (p[0], p[1]))).collect());
        }
    }
    out.write("paths.csv", Format::Csv, csv)?;
    let depth: Vec<Option<f64>> = (0..s.mask.grid().len())
        .map(|n| rep.path_to(n).map(|p| p.segments.len() as f64))
        .collect();
    let map = Heatmap::from_nodes(&s.mask, &s.slice_through(rep.start_node), |n| depth[n].or(Some(-1.0)));
    s.figures(out, "reach", "control-path length (-1: unreached)", &map, &overlays)?;
    Ok(json!({
        "start": start,
        "budget": budget,
        "report": rep,
        "sampled_paths": picks.len(),
        "sampled_paths_valid": all_valid,
        "sampled_max_reintegration_gap": max_gap,
    }))
}

pub fn refine(s: &Setup, _out: &mut Outputs) -> Res<Value> {
    let mut res = s.cfg.run.resolutions.clone();
    res.sort_unstable();
    res.dedup();
    if res.len() < 2 {
        return Err(CoreError::InvalidParameter("refine needs at least two run.resolutions".into()).into());
    }
    let x0 = s.cfg.run.point.clone().unwrap_or_else(|| s.center());
    let mut sols = Vec::new();
    let mut rows = Vec::new();
    for &r in &res {
        let mask = s.mask_at(r)?;
        let sys = assemble(&s.spec, mask.clone())?;
        let u = DirichletSolver::new(sys.clone())?.solve(&expr_field(&s.cfg.run.f, &mask)?, &expr_field(&s.cfg.run.phi, &mask)?)?;
        let xn = mask.nearest_interior(&x0);
        let xp = mask.interior_pos(xn).expect("interior");
        let gd = green_columns(&sys, &[xp])?.get(xp, xp);
        rows.push(json!({ "resolution": r, "n_interior": sys.n_interior(), "u_sup": u.sup_norm(), "u_at_point": u.get(xn), "green_diagonal_at_point": gd }));
        sols.push(u);
    }
    // Differences on the coarsest interior nodes present in every grid.
    let coarse = sols[0].mask_arc();
    let mut diffs = Vec::new();
    for w in sols.windows(2) {
        let mut d = 0.0f64;
        for &n in coarse.interior() {
            let x = coarse.grid().coord(n);
            let (Some(a), Some(b)) = (w[0].mask().grid().locate(&x), w[1].mask().grid().locate(&x)) else { continue };
            let close = |g: &Grid, m: usize| g.coord(m).iter().zip(&x).all(|(p, q)| (p - q).abs() < 1e-9);
            if close(w[0].mask().grid(), a) && close(w[1].mask().grid(), b) && w[0].mask().interior_pos(a).is_some() && w[1].mask().interior_pos(b).is_some() {
                d = d.max((w[0].get(a) - w[1].get(b)).abs());
            }
        }
        diffs.push(d);
    }
    let orders: Vec<f64> = diffs.windows(2).map(|d| (d[0] / d[1]).log2()).collect();
    Ok(json!({ "levels": rows, "successive_sup_differences": diffs, "observed_orders": orders }))
}

pub fn gallery_list() -> Value {
    json!(GALLERY)
}

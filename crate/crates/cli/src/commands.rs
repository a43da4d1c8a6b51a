use std::fmt::Write as _;
use std::path::PathBuf;

use serde_json::{json, Value};

use flowlip_core::extension::{
    holder_phi, lip_profile, mcshane_extend, select_lambda_bar, verify_extension, SampledFunction,
};
use flowlip_core::fields::{CatalogField, FieldSpec, SpaceTimePoint};
use flowlip_core::flow::{
    build_flowtube, covering_multiflow, default_tol_ode, fb_triviality_check, integrate_curve, validate_fb_curve,
    FbCurve, MultiFlow,
};
use flowlip_core::grid::{time_grid, Lattice};
use flowlip_core::metric::{
    distance_lambda, distance_zero, fb_distance, inf_sentinel, DistanceResult, GraphConfig, LimitStatus, MetricGraph,
    ZeroOptions,
};
use flowlip_core::sobolev::{lemma51_check, maximal_function, radii_ladder, uniqueness_certificate, CertifyOptions, GridScalarField};
use flowlip_core::transport::{compare_solutions, eulerian_solve, lagrangian_solve, weak_residual, TestFunction};
use flowlip_core::Error;

use crate::config::{PhiConfig, RunConfig};
use crate::{CliError, RunArgs};

pub struct Ctx {
    pub cfg: RunConfig,
    base: PathBuf,
    out: PathBuf,
    hash: String,
}

fn compute(e: Error) -> CliError {
    match e {
        Error::Invalid(m) => CliError::Config(m),
        e => CliError::Compute(e),
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Finite numbers as numbers, everything else as the string `inf` / `nan`.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else {
        json!("inf")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| x.to_string())
}

impl Ctx {
    fn spec(&self) -> Result<FieldSpec, CliError> {
        self.cfg.field_spec(&self.base)
    }

    fn meta_line(&self, lambda: &str) -> String {
        format!(
            "# flowlip config_hash={} h={} dt={} ds={} lambda={} seed={}\n",
            self.hash,
            opt(self.cfg.h),
            opt(self.cfg.dt),
            opt(self.cfg.ds),
            lambda,
            self.cfg.seed
        )
    }

    fn meta_json(&self, lambda: Value) -> Value {
        json!({
            "config_hash": self.hash,
            "h": self.cfg.h,
            "dt": self.cfg.dt,
            "ds": self.cfg.ds,
            "lambda": lambda,
            "seed": self.cfg.seed,
        })
    }

    fn write(&self, name: &str, content: &str) -> Result<(), CliError> {
        std::fs::write(self.out.join(name), content)?;
        Ok(())
    }

    fn write_json(&self, name: &str, lambda: Value, result: Value) -> Result<(), CliError> {
        let doc = json!({ "meta": self.meta_json(lambda), "result": result });
        let mut text = serde_json::to_string_pretty(&doc).expect("json");
        text.push('\n');
        self.write(name, &text)
    }

    fn schedule_label(&self) -> String {
        self.cfg.schedule.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(";")
    }

    fn graph(&self, spec: &FieldSpec) -> Result<(MultiFlow, MetricGraph), CliError> {
        let h = self.cfg.need("h", self.cfg.h)?;
        let dt = self.cfg.need("dt", self.cfg.dt)?;
        let l0 = *self.cfg.schedule.first().ok_or_else(|| bad("missing schedule"))?;
        let mf = covering_multiflow(spec, h, dt, self.cfg.saturate).map_err(compute)?;
        let gc = GraphConfig { saturate: self.cfg.saturate, ..GraphConfig::new(h, dt) };
        let g = MetricGraph::from_multiflow(spec, &mf, &gc, l0).map_err(compute)?;
        Ok((mf, g))
    }

    fn spatial_lattice(&self, spec: &FieldSpec) -> Result<Lattice, CliError> {
        let h = self.cfg.need("h", self.cfg.h)?;
        Lattice::covering(&spec.domain.lo, &spec.domain.hi, h).map_err(compute)
    }

    fn tube_function(&self, mf: &MultiFlow) -> Result<SampledFunction, CliError> {
        if self.cfg.tube.is_empty() {
            return Err(bad("missing tube"));
        }
        let idx: Vec<usize> = self
            .cfg
            .tube
            .iter()
            .map(|a| mf.find_param(a).ok_or_else(|| bad(format!("tube parameter {a:?} is not a multi-flow curve"))))
            .collect::<Result<_, _>>()?;
        let tube = build_flowtube(mf, &idx).map_err(compute)?;
        let phi = self.cfg.phi.as_ref().ok_or_else(|| bad("missing phi"))?;
        if let PhiConfig::Branch { values } = phi {
            if values.len() != idx.len() {
                return Err(bad("phi.values needs one value per tube curve"));
            }
        }
        SampledFunction::on_tube(&tube, |c, p| match phi {
            PhiConfig::Branch { values } => values[idx.iter().position(|&i| i == c).unwrap()],
            PhiConfig::Time => p.x0,
            PhiConfig::Holder => holder_phi(p.x0, p.xhat[0]),
        })
        .map_err(compute)
    }
}

pub fn run(name: &str, args: &RunArgs, f: fn(&Ctx) -> Result<(), CliError>) -> Result<(), CliError> {
    let (cfg, base) = RunConfig::load(&args.config)?;
    if let Some(s) = &cfg.subcommand {
        if s != name {
            return Err(bad(format!("config is for `{s}`, not `{name}`")));
        }
    }
    let out = match (&args.out, &cfg.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => PathBuf::from("."),
    };
    std::fs::create_dir_all(&out)?;
    let hash = cfg.hash();
    f(&Ctx { cfg, base, out, hash })
}

pub fn catalog() -> String {
    let mut s = format!("{:<10} {:<36} {}\n", "name", "field", "integral curves");
    for c in CatalogField::all() {
        let _ = writeln!(s, "{:<10} {:<36} {}", c.name(), c.formula(), c.curve_note());
    }
    s
}

fn csv_row(s: &mut String, x: &SpaceTimePoint, y: &SpaceTimePoint, lambda: f64, value: f64, status: &str, r: &DistanceResult) {
    for c in x.to_vec().iter().chain(y.to_vec().iter()) {
        let _ = write!(s, "{c},");
    }
    let _ = writeln!(s, "{lambda},{value},{status},{},{},{}", r.h, r.dt, r.snap_err);
}

pub fn distance(ctx: &Ctx) -> Result<(), CliError> {
    let spec = ctx.spec()?;
    let n = spec.dim();
    if ctx.cfg.schedule.len() < 2 {
        return Err(bad("distance needs a schedule with at least two entries"));
    }
    if ctx.cfg.pairs.is_empty() {
        return Err(bad("missing pairs"));
    }
    let (_, g) = ctx.graph(&spec)?;
    let t_max = spec.domain.t_max;
    let mut csv = ctx.meta_line(&ctx.schedule_label());
    let names = |p: &str| -> String {
        let mut v = vec![format!("{p}0")];
        v.extend((1..=n).map(|k| format!("{p}hat{k}")));
        v.join(",")
    };
    let _ = writeln!(csv, "{},{},lambda,value,status,h,dt,snap_err", names("x"), names("y"));
    let mut summary = Vec::new();
    for (k, [a, b]) in ctx.cfg.pairs.iter().enumerate() {
        let pts = ctx.cfg.points(&[a.clone(), b.clone()], n)?;
        let (x, y) = (&pts[0], &pts[1]);
        let (per, zero) = match distance_zero(&g, x, y, &ctx.cfg.schedule, &ZeroOptions::default()) {
            Ok(z) => (z.per_lambda.clone(), Some(z)),
            Err(Error::ScheduleTooShort) => {
                let per = ctx
                    .cfg
                    .schedule
                    .iter()
                    .map(|&l| distance_lambda(&g.with_lambda(l)?, x, y))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(compute)?;
                (per, None)
            }
            Err(e) => return Err(compute(e)),
        };
        for r in &per {
            let status = if r.is_finite() { "finite" } else { "inf" };
            csv_row(&mut csv, x, y, r.lambda, r.file_value(t_max), status, r);
        }
        let last = per.last().unwrap();
        let (zv, zs) = match &zero {
            Some(z) if z.status == LimitStatus::Finite => (z.value, "finite"),
            Some(_) => (inf_sentinel(t_max), "divergent"),
            None => (last.value, "schedule_too_short"),
        };
        csv_row(&mut csv, x, y, 0.0, zv, zs, last);
        let fb = match &zero {
            Some(z) => z.fb.clone(),
            None => fb_distance(&g, x, y).map_err(compute)?,
        };
        if ctx.cfg.witness && fb.is_finite() {
            let c = fb.to_fb_curve().map_err(compute)?;
            ctx.write(&format!("witness_{k}.fb"), &format!("{}{}", ctx.meta_line("0"), c.to_text()))?;
        }
        summary.push(json!({
            "x": x.to_vec(),
            "y": y.to_vec(),
            "d_lambda": per.iter().map(|r| json!({"lambda": r.lambda, "value": num(r.value)})).collect::<Vec<_>>(),
            "limit_status": zs,
            "limit_value": num(if zs == "divergent" { f64::INFINITY } else { zv }),
            "fb_distance": num(fb.value),
            "fb_switches": if fb.is_finite() { json!(fb.to_fb_curve().map_err(compute)?.switch_points()) } else { Value::Null },
        }));
    }
    ctx.write("distance.csv", &csv)?;
    ctx.write_json("distance.json", json!(ctx.cfg.schedule), json!({ "pairs": summary, "nodes": g.node_count(), "edges": g.edge_count() }))
}

pub fn lipschitz(ctx: &Ctx) -> Result<(), CliError> {
    let spec = ctx.spec()?;
    let (mf, g) = ctx.graph(&spec)?;
    let phi = ctx.tube_function(&mf)?;
    let p = lip_profile(&g, &phi, &ctx.cfg.schedule).map_err(compute)?;
    let mut csv = ctx.meta_line(&ctx.schedule_label());
    csv.push_str("lambda,lip\n");
    for (l, v) in p.lambdas.iter().zip(&p.lip_values) {
        let _ = writeln!(csv, "{l},{v}");
    }
    let _ = writeln!(csv, "0,{}", p.lip0);
    ctx.write("lipschitz.csv", &csv)?;
    ctx.write_json("lipschitz.json", json!(ctx.cfg.schedule), serde_json::to_value(&p).expect("json"))
}

pub fn extend(ctx: &Ctx) -> Result<(), CliError> {
    let spec = ctx.spec()?;
    let eps = ctx.cfg.need("epsilon", ctx.cfg.epsilon)?;
    let (mf, g) = ctx.graph(&spec)?;
    let phi = ctx.tube_function(&mf)?;
    let profile = lip_profile(&g, &phi, &ctx.cfg.schedule).map_err(compute)?;
    let lambda_bar = select_lambda_bar(&profile, eps / 2.0).map_err(compute)?;
    let l_ext = ctx.cfg.l_ext.unwrap_or(profile.lip0 + eps);
    let gl = g.with_lambda(lambda_bar).map_err(compute)?;
    let ext = mcshane_extend(&gl, &phi, l_ext).map_err(compute)?;
    let ds = ctx.cfg.ds.or(ctx.cfg.dt).unwrap();
    let curves: Vec<FbCurve> = match spec.catalog_field() {
        Some(c) => c
            .saturation_starts(&spec.domain)
            .iter()
            .map(|s| integrate_curve(&spec, s, 1, spec.domain.t_max - s.x0, ds, None).map(|c| c.into_fb()))
            .collect::<Result<_, _>>()
            .map_err(compute)?,
        None => Vec::new(),
    };
    let report = verify_extension(&gl, &ext, &phi, &curves, eps / 2.0).map_err(compute)?;
    let lat = ctx.spatial_lattice(&spec)?;
    let grid = ext.to_grid_text(&gl, &lat).map_err(compute)?;
    ctx.write("extension.grid", &format!("{}{}", ctx.meta_line(&lambda_bar.to_string()), grid))?;
    ctx.write_json(
        "extend.json",
        json!(lambda_bar),
        json!({
            "lambda_bar": lambda_bar,
            "l_ext": l_ext,
            "profile": profile,
            "report": report,
            "pass": report.pass(),
        }),
    )
}

pub fn flow(ctx: &Ctx) -> Result<(), CliError> {
    let spec = ctx.spec()?;
    let ds = ctx.cfg.need("ds", ctx.cfg.ds.or(ctx.cfg.dt))?;
    let starts = ctx.cfg.points(&ctx.cfg.starts, spec.dim())?;
    if starts.is_empty() {
        return Err(bad("missing starts"));
    }
    let dir = ctx.cfg.direction;
    let mut summary = Vec::new();
    for (k, s) in starts.iter().enumerate() {
        let dur = ctx.cfg.duration.unwrap_or(if dir > 0 { spec.domain.t_max - s.x0 } else { s.x0 });
        let c = integrate_curve(&spec, s, dir, dur, ds, None).map_err(compute)?;
        summary.push(json!({
            "start": s.to_vec(),
            "end": c.endpoint().to_vec(),
            "samples": c.samples.len(),
            "left_domain": c.left_domain,
            "max_residual": c.max_residual,
            "tol_ode": c.tol_ode,
        }));
        ctx.write(&format!("curve_{k}.fb"), &format!("{}{}", ctx.meta_line("-"), c.into_fb().to_text()))?;
    }
    ctx.write_json("flow.json", Value::Null, json!({ "curves": summary }))
}

pub fn fbcheck(ctx: &Ctx) -> Result<(), CliError> {
    let spec = ctx.spec()?;
    let file = ctx.cfg.curve_file.as_ref().ok_or_else(|| bad("missing curve_file"))?;
    let path = ctx.base.join(file);
    let text = std::fs::read_to_string(&path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    let c = FbCurve::parse(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    let tol = match ctx.cfg.tol {
        Some(t) => t,
        None => default_tol_ode(&spec, c.ds).map_err(compute)?,
    };
    let report = validate_fb_curve(&spec, &c, tol).map_err(compute)?;
    let h = ctx.cfg.need("h", ctx.cfg.h)?;
    let dt = ctx.cfg.need("dt", ctx.cfg.dt)?;
    let mf = covering_multiflow(&spec, h, dt, ctx.cfg.saturate).map_err(compute)?;
    let verdict = fb_triviality_check(&spec, &c, &mf, 2.0 * h);
    ctx.write_json(
        "fbcheck.json",
        Value::Null,
        json!({ "switches": c.switch_points(), "duration": c.duration(), "report": report, "triviality": verdict }),
    )
}

pub fn maximal(ctx: &Ctx) -> Result<(), CliError> {
    let spec = ctx.spec()?;
    let func = ctx.cfg.function.as_ref().ok_or_else(|| bad("missing function"))?;
    let lat = ctx.spatial_lattice(&spec)?;
    let f = GridScalarField::from_fn(lat.clone(), |x| func.eval(x)).map_err(compute)?;
    let h = ctx.cfg.h.unwrap();
    let radii = ctx.cfg.radii.clone().unwrap_or_else(|| radii_ladder(h, spec.domain.spatial_diameter()));
    let m = maximal_function(&f, &radii).map_err(compute)?;
    let mut csv = ctx.meta_line("-");
    let header: Vec<String> = (1..=lat.dim()).map(|k| format!("x{k}")).collect();
    let _ = writeln!(csv, "{},value", header.join(","));
    for i in 0..lat.len() {
        for c in lat.coord(i) {
            let _ = write!(csv, "{c},");
        }
        let _ = writeln!(csv, "{}", m.values[i]);
    }
    ctx.write("maximal.csv", &csv)?;
    let lemma = match ctx.cfg.p {
        Some(p) => Some(lemma51_check(&f, p, ctx.cfg.sample_pairs.unwrap_or(10_000), ctx.cfg.seed).map_err(compute)?),
        None => None,
    };
    ctx.write_json(
        "maximal.json",
        Value::Null,
        json!({
            "radii": radii,
            "fitted_c": lemma.as_ref().map(|r| r.fitted_c),
            "lemma51": lemma,
            "p": ctx.cfg.p,
        }),
    )
}

fn midpoint_starts(lo: &[f64], hi: &[f64], count: usize) -> Vec<Vec<f64>> {
    let n = lo.len();
    let per = (count as f64).powf(1.0 / n as f64).ceil().max(1.0) as usize;
    let total = per.pow(n as u32);
    (0..total)
        .map(|k| {
            let mut r = k;
            (0..n)
                .map(|ax| {
                    let j = r % per;
                    r /= per;
                    lo[ax] + (j as f64 + 0.5) * (hi[ax] - lo[ax]) / per as f64
                })
                .collect()
        })
        .collect()
}

pub fn certify(ctx: &Ctx) -> Result<(), CliError> {
    let spec = ctx.spec()?;
    let n = spec.dim();
    let p = ctx.cfg.need("p", ctx.cfg.p)?;
    let h = ctx.cfg.need("h", ctx.cfg.h)?;
    let mut opts = CertifyOptions::new(n, p, h, ctx.cfg.ds.unwrap_or(h));
    if let Some(pt) = ctx.cfg.p_tilde {
        opts.p_tilde = pt;
    }
    opts.radii = ctx.cfg.radii.clone();
    opts.cap = ctx.cfg.cap;
    let starts = if !ctx.cfg.starts.is_empty() {
        if ctx.cfg.starts.iter().any(|s| s.len() != n) {
            return Err(bad(format!("certify starts need {n} spatial coordinates")));
        }
        ctx.cfg.starts.clone()
    } else {
        let count = ctx.cfg.n_starts.ok_or_else(|| bad("missing starts or n_starts"))?;
        midpoint_starts(&spec.domain.lo, &spec.domain.hi, count)
    };
    let cert = uniqueness_certificate(&spec, &starts, &opts).map_err(compute)?;
    let mut csv = ctx.meta_line("-");
    let header: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
    let _ = writeln!(csv, "{},value,status", header.join(","));
    for (x, v) in cert.start_points.iter().zip(&cert.integrals) {
        for c in x {
            let _ = write!(csv, "{c},");
        }
        match v {
            Some(v) if *v < cert.cap => {
                let _ = writeln!(csv, "{v},finite");
            }
            Some(v) => {
                let _ = writeln!(csv, "{v},refused");
            }
            None => {
                let _ = writeln!(csv, "nan,left_domain");
            }
        }
    }
    ctx.write("certify.csv", &csv)?;
    ctx.write_json(
        "certify.json",
        Value::Null,
        json!({
            "p": cert.p,
            "p_tilde": cert.p_tilde,
            "cap": cert.cap,
            "phi_singular": cert.phi_singular,
            "finite_fraction": cert.finite_fraction,
            "jensen_average": cert.jensen_average,
            "left_domain": cert.left_domain,
            "starts": cert.start_points.len(),
        }),
    )
}

pub fn transport(ctx: &Ctx) -> Result<(), CliError> {
    let spec = ctx.spec()?;
    let func = ctx.cfg.function.as_ref().ok_or_else(|| bad("missing function"))?;
    let h = ctx.cfg.need("h", ctx.cfg.h)?;
    let dt = ctx.cfg.need("dt", ctx.cfg.dt)?;
    let ds = ctx.cfg.ds.unwrap_or(dt);
    let lat = ctx.spatial_lattice(&spec)?;
    let u0 = GridScalarField::from_fn(lat, |x| func.eval(x)).map_err(compute)?;
    let times = time_grid(spec.domain.t_max, dt);
    let dt_cfl = ctx.cfg.dt_cfl.unwrap_or(h / (2.0 * spec.sup_norm_hint));
    let lag = lagrangian_solve(&spec, &u0, &times, ds).map_err(compute)?;
    let eul = eulerian_solve(&spec, &u0, &times, dt_cfl).map_err(compute)?;
    let tests: Vec<TestFunction> = ctx
        .cfg
        .tests
        .iter()
        .map(|t| TestFunction::new(SpaceTimePoint::from_slice(&t.center), t.radius, t.t_radius, t.degree))
        .collect::<Result<_, _>>()
        .map_err(compute)?;
    let weak = if tests.is_empty() {
        None
    } else {
        Some(weak_residual(&lag, &spec, &u0, &tests, ctx.cfg.tol.unwrap_or(0.02)).map_err(compute)?)
    };
    let l1 = compare_solutions(&lag, &eul).map_err(compute)?;
    ctx.write("lagrangian.csv", &format!("{}{}", ctx.meta_line("-"), lag.to_csv()))?;
    ctx.write("eulerian.csv", &format!("{}{}", ctx.meta_line("-"), eul.to_csv()))?;
    let masked: usize = lag.mask.as_ref().map_or(0, |m| m.iter().flatten().filter(|&&b| b).count());
    ctx.write_json(
        "transport.json",
        Value::Null,
        json!({
            "times": times,
            "dt_cfl": dt_cfl,
            "mass_lagrangian": lag.mass,
            "mass_eulerian": eul.mass,
            "boundary_flux_eulerian": eul.boundary_flux,
            "masked_nodes": masked,
            "weak_residual": weak,
            "l1_lagrangian_eulerian": l1,
        }),
    )
}

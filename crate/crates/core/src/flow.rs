//! Integral curves, multi-flows, flow tubes and forward-backward curves.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{euclid, lattice_lipschitz, FieldSpec, SpaceTimePoint};
use crate::grid::{time_grid, Lattice};

/// A sampled integral curve run in a single direction (`+1` forward, `-1` backward).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralCurve {
    pub samples: Vec<SpaceTimePoint>,
    pub ds: f64,
    pub direction: i8,
    pub origin: SpaceTimePoint,
    /// Set when integration stopped at the domain boundary.
    pub left_domain: bool,
    /// Largest `|Δγ/ds − dir·v(midpoint)|` over the steps.
    pub max_residual: f64,
    pub tol_ode: f64,
}

impl IntegralCurve {
    pub fn endpoint(&self) -> &SpaceTimePoint {
        self.samples.last().expect("curve has at least its origin")
    }

    pub fn into_fb(self) -> FbCurve {
        let profile = vec![self.direction; self.samples.len().saturating_sub(1)];
        FbCurve { samples: self.samples, ds: self.ds, profile }
    }
}

/// Default ODE tolerance: `10 · ds · (lattice Lipschitz modulus of v at spacing ds)`.
pub fn default_tol_ode(spec: &FieldSpec, ds: f64) -> Result<f64> {
    let lip = lattice_lipschitz(spec, ds)?;
    Ok((10.0 * ds * lip).max(1e-12))
}

/// Explicit-midpoint residual check for one step `a → b` of signed length `dir·ds`.
fn step_residual(spec: &FieldSpec, a: &SpaceTimePoint, b: &SpaceTimePoint, dir: f64, ds: f64) -> Result<f64> {
    let n = a.dim();
    let mid_t = 0.5 * (a.x0 + b.x0);
    let mid: Vec<f64> = a.xhat.iter().zip(&b.xhat).map(|(p, q)| 0.5 * (p + q)).collect();
    let mut v = vec![0.0; n];
    spec.velocity(mid_t, &mid, &mut v)?;
    let dt_err = (b.x0 - a.x0) / ds - dir;
    let mut s = dt_err * dt_err;
    for k in 0..n {
        let d = (b.xhat[k] - a.xhat[k]) / ds - dir * v[k];
        s += d * d;
    }
    Ok(s.sqrt())
}

/// One explicit midpoint (RK2) step of `γ' = dir·v(γ)`; `None` if it leaves the domain.
pub(crate) fn rk2_step(spec: &FieldSpec, t: f64, x: &[f64], dir: f64, ds: f64, out: &mut [f64]) -> Option<f64> {
    let n = x.len();
    let mut k1 = vec![0.0; n];
    spec.velocity(t, x, &mut k1).ok()?;
    let tm = t + dir * 0.5 * ds;
    let xm: Vec<f64> = x.iter().zip(&k1).map(|(xi, ki)| xi + dir * 0.5 * ds * ki).collect();
    let mut k2 = vec![0.0; n];
    spec.velocity(tm, &xm, &mut k2).ok()?;
    for k in 0..n {
        out[k] = x[k] + dir * ds * k2[k];
    }
    let t1 = t + dir * ds;
    let slack = 1e-9 * ds;
    if t1 >= -slack && t1 <= spec.domain.t_max + slack && spec.domain.contains_space(out) {
        Some(t1)
    } else {
        None
    }
}

/// Integrate `γ' = direction·v(γ)` with fixed-step explicit midpoint steps.
///
/// A curve that reaches the domain boundary is returned truncated with
/// `left_domain` set. `tol_ode` defaults to [`default_tol_ode`].
pub fn integrate_curve(
    spec: &FieldSpec,
    start: &SpaceTimePoint,
    direction: i8,
    duration: f64,
    ds: f64,
    tol_ode: Option<f64>,
) -> Result<IntegralCurve> {
    if !(ds > 0.0) || !(duration >= 0.0) || (direction != 1 && direction != -1) {
        return Err(Error::Invalid("need ds > 0, duration >= 0 and direction = ±1".into()));
    }
    if !spec.domain.contains(start.x0, &start.xhat) {
        return Err(Error::OutOfDomain { point: start.to_vec() });
    }
    let tol = match tol_ode {
        Some(t) => t,
        None => default_tol_ode(spec, ds)?,
    };
    let dir = direction as f64;
    let steps = (duration / ds).round() as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(start.clone());
    let mut left_domain = false;
    let mut max_residual: f64 = 0.0;
    let mut next = vec![0.0; start.dim()];
    for k in 1..=steps {
        let cur = samples.last().unwrap();
        match rk2_step(spec, cur.x0, &cur.xhat, dir, ds, &mut next) {
            Some(_) => {
                // Times from the start, not accumulated, so they stay on the ds grid.
                let t1 = (start.x0 + dir * k as f64 * ds).clamp(0.0, spec.domain.t_max);
                let p = SpaceTimePoint::new(t1, next.clone());
                let r = step_residual(spec, cur, &p, dir, ds)?;
                max_residual = max_residual.max(r);
                samples.push(p);
            }
            None => {
                left_domain = true;
                break;
            }
        }
    }
    if max_residual > 10.0 * tol {
        return Err(Error::StepTooLarge { residual: max_residual, limit: 10.0 * tol });
    }
    Ok(IntegralCurve {
        samples,
        ds,
        direction,
        origin: start.clone(),
        left_domain,
        max_residual,
        tol_ode: tol,
    })
}

/// A curve whose velocity is `+v` or `−v` on each sample interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbCurve {
    pub samples: Vec<SpaceTimePoint>,
    pub ds: f64,
    /// Direction per sample interval (`len = samples.len() − 1`).
    pub profile: Vec<i8>,
}

impl FbCurve {
    pub fn duration(&self) -> f64 {
        self.profile.len() as f64 * self.ds
    }

    /// Parameter values where the direction flips.
    pub fn switch_points(&self) -> Vec<f64> {
        self.profile
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] != w[1])
            .map(|(k, _)| (k + 1) as f64 * self.ds)
            .collect()
    }

    /// Maximal runs `(first_interval, last_interval_exclusive, dir)`.
    pub fn runs(&self) -> Vec<(usize, usize, i8)> {
        let mut out = Vec::new();
        let mut start = 0;
        for k in 1..=self.profile.len() {
            if k == self.profile.len() || self.profile[k] != self.profile[start] {
                out.push((start, k, self.profile[start]));
                start = k;
            }
        }
        out
    }

    /// Concatenate two curves sharing an endpoint (the second curve's first sample is dropped).
    pub fn concat(mut self, other: FbCurve) -> Result<FbCurve> {
        if (self.ds - other.ds).abs() > 1e-15 {
            return Err(Error::Invalid("curves use different ds".into()));
        }
        let (Some(a), Some(b)) = (self.samples.last(), other.samples.first()) else {
            return Err(Error::Invalid("empty curve".into()));
        };
        if a.dist(b) > 1e-9 {
            return Err(Error::Invalid("curves do not join".into()));
        }
        self.samples.extend(other.samples.into_iter().skip(1));
        self.profile.extend(other.profile);
        Ok(self)
    }

    /// Same image traversed in the opposite order.
    pub fn reversed(&self) -> FbCurve {
        FbCurve {
            samples: self.samples.iter().rev().cloned().collect(),
            ds: self.ds,
            profile: self.profile.iter().rev().map(|d| -d).collect(),
        }
    }

    /// Plain-text format: a header `fbcurve n=<n> ds=<ds> switches=<s1,s2,…|->`
    /// then rows `s x0 x1 … xn dir` (dir of the interval starting at the row).
    pub fn to_text(&self) -> String {
        let n = self.samples.first().map_or(0, |p| p.dim());
        let sw = self.switch_points();
        let sw = if sw.is_empty() {
            "-".to_string()
        } else {
            sw.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
        };
        let mut out = format!("fbcurve n={n} ds={} switches={sw}\n", self.ds);
        for (k, p) in self.samples.iter().enumerate() {
            let dir = if k < self.profile.len() {
                self.profile[k]
            } else {
                *self.profile.last().unwrap_or(&1)
            };
            let _ = write!(out, "{} {}", k as f64 * self.ds, p.x0);
            for x in &p.xhat {
                let _ = write!(out, " {x}");
            }
            let _ = writeln!(out, " {dir}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<FbCurve> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let perr = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.into() };
        let (hl, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
        let mut n = None;
        let mut ds = None;
        for tok in header.split_whitespace().skip(1) {
            if let Some(v) = tok.strip_prefix("n=") {
                n = v.parse::<usize>().ok();
            } else if let Some(v) = tok.strip_prefix("ds=") {
                ds = v.parse::<f64>().ok();
            }
        }
        if !header.starts_with("fbcurve") {
            return Err(perr(hl, "missing fbcurve header"));
        }
        let (n, ds) = match (n, ds) {
            (Some(n), Some(ds)) if n > 0 && ds > 0.0 => (n, ds),
            _ => return Err(perr(hl, "header needs n= and ds=")),
        };
        let mut samples = Vec::new();
        let mut dirs = Vec::new();
        for (ln, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != n + 3 {
                return Err(perr(ln, "wrong number of columns"));
            }
            let nums: Vec<f64> = f[1..=n + 1]
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| perr(ln, "bad coordinate"))?;
            let dir: i8 = f[n + 2].parse().map_err(|_| perr(ln, "bad dir"))?;
            if dir != 1 && dir != -1 {
                return Err(perr(ln, "dir must be ±1"));
            }
            samples.push(SpaceTimePoint::from_slice(&nums));
            dirs.push(dir);
        }
        if samples.is_empty() {
            return Err(Error::Parse { line: 0, msg: "no samples".into() });
        }
        dirs.pop();
        Ok(FbCurve { samples, ds, profile: dirs })
    }
}

/// Result of checking an [`FbCurve`] against the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbReport {
    /// `(first_interval, end_interval, dir, max_residual)` per maximal run.
    pub runs: Vec<(usize, usize, i8, f64)>,
    pub max_residual: f64,
    /// `|(y − x) − Σ dir·v(mid)·ds|`.
    pub displacement_error: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Check that each run of `c` follows `+v` or `−v` as its profile declares.
pub fn validate_fb_curve(spec: &FieldSpec, c: &FbCurve, tol: f64) -> Result<FbReport> {
    if c.samples.len() != c.profile.len() + 1 {
        return Err(Error::Invalid("profile length must be samples − 1".into()));
    }
    let n = spec.dim();
    let mut runs = Vec::new();
    let mut max_residual: f64 = 0.0;
    let mut integral = vec![0.0; n + 1];
    let mut v = vec![0.0; n];
    for (ri, (a, b, dir)) in c.runs().into_iter().enumerate() {
        let wrong = (a..b).any(|k| (c.samples[k + 1].x0 - c.samples[k].x0) * dir as f64 <= 0.0);
        if wrong {
            return Err(Error::ProfileMismatch { interval: ri });
        }
        let mut worst: f64 = 0.0;
        for k in a..b {
            let (p, q) = (&c.samples[k], &c.samples[k + 1]);
            worst = worst.max(step_residual(spec, p, q, dir as f64, c.ds)?);
            let mid: Vec<f64> = p.xhat.iter().zip(&q.xhat).map(|(x, y)| 0.5 * (x + y)).collect();
            spec.velocity(0.5 * (p.x0 + q.x0), &mid, &mut v)?;
            integral[0] += dir as f64 * c.ds;
            for j in 0..n {
                integral[j + 1] += dir as f64 * v[j] * c.ds;
            }
        }
        max_residual = max_residual.max(worst);
        runs.push((a, b, dir, worst));
    }
    let first = c.samples.first().unwrap().to_vec();
    let last = c.samples.last().unwrap().to_vec();
    let disp: Vec<f64> = last.iter().zip(&first).map(|(y, x)| y - x).collect();
    let displacement_error = euclid(&disp, &integral);
    let pass = max_residual <= tol && displacement_error <= tol * c.duration().max(c.ds);
    Ok(FbReport { runs, max_residual, displacement_error, tol, pass })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiFlowKind {
    Analytic,
    Numeric,
}

/// A finite family `Z(·, a)` of integral curves sampled on a common time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiFlow {
    pub kind: MultiFlowKind,
    pub times: Vec<f64>,
    /// Parameter of each curve (saturation curves carry their start point).
    pub params: Vec<Vec<f64>>,
    /// Lattice of the parameters, when they form one; drives transversal adjacency.
    pub param_lattice: Option<Lattice>,
    /// `positions[curve][slice]`, `None` outside the domain.
    pub positions: Vec<Vec<Option<Vec<f64>>>>,
    /// Number of trailing curves added by saturation.
    pub saturation: usize,
    pub dist_dense: f64,
    pub tol_ode: f64,
}

impl MultiFlow {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.params.first().map_or(0, |p| p.len())
    }

    pub fn point(&self, curve: usize, slice: usize) -> Option<SpaceTimePoint> {
        self.positions[curve][slice]
            .as_ref()
            .map(|x| SpaceTimePoint::new(self.times[slice], x.clone()))
    }

    /// Index of the parameter equal to `a` (within `1e-12`).
    pub fn find_param(&self, a: &[f64]) -> Option<usize> {
        self.params[..self.len() - self.saturation]
            .iter()
            .position(|p| euclid(p, a) < 1e-12)
    }

    /// Spatial position of curve `c` at time `t`, linear between slices.
    pub fn position_at(&self, c: usize, t: f64) -> Option<Vec<f64>> {
        let dt = self.times[1] - self.times[0];
        let k = ((t - self.times[0]) / dt).floor().max(0.0) as usize;
        let k = k.min(self.times.len() - 2);
        let (a, b) = (self.positions[c][k].as_ref()?, self.positions[c][k + 1].as_ref()?);
        let w = ((t - self.times[k]) / (self.times[k + 1] - self.times[k])).clamp(0.0, 1.0);
        Some(a.iter().zip(b).map(|(p, q)| p + w * (q - p)).collect())
    }

    /// Add curves through `starts`, integrated forward and backward across `[0, T]`.
    pub fn saturate(&mut self, spec: &FieldSpec, starts: &[SpaceTimePoint]) -> Result<()> {
        let dt = self.times[1] - self.times[0];
        for s in starts {
            let k0 = ((s.x0 - self.times[0]) / dt).round() as usize;
            let mut pos = vec![None; self.times.len()];
            pos[k0] = Some(s.xhat.clone());
            let mut next = vec![0.0; s.dim()];
            for (dir, range) in [(1.0, (k0 + 1..self.times.len()).collect::<Vec<_>>()), (-1.0, (0..k0).rev().collect())] {
                let mut cur = s.xhat.clone();
                let mut t = self.times[k0];
                for k in range {
                    let step = (self.times[k] - t).abs();
                    match rk2_step(spec, t, &cur, dir, step, &mut next) {
                        Some(_) => {
                            t = self.times[k];
                            cur.copy_from_slice(&next);
                            pos[k] = Some(cur.clone());
                        }
                        None => break,
                    }
                }
            }
            self.params.push(s.to_vec());
            self.positions.push(pos);
            self.saturation += 1;
        }
        Ok(())
    }

    /// Remove the saturation curves again.
    pub fn unsaturated(&self) -> MultiFlow {
        let keep = self.len() - self.saturation;
        let mut mf = self.clone();
        mf.params.truncate(keep);
        mf.positions.truncate(keep);
        mf.saturation = 0;
        mf
    }
}

/// Options for [`build_multiflow`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiFlowOptions {
    /// Reference spacing of the density scan.
    pub density_spacing: f64,
    /// Reject families whose `dist_dense` exceeds this.
    pub dist_cap: Option<f64>,
    pub tol_ode: Option<f64>,
}

impl Default for MultiFlowOptions {
    fn default() -> Self {
        MultiFlowOptions { density_spacing: 0.05, dist_cap: None, tol_ode: None }
    }
}

/// Sample `Z(s, a)` for the given parameters at time step `ds`.
///
/// Catalog fields use their closed-form curves; other fields integrate each
/// curve forward from the `t = 0` section `x̂ = a`.
pub fn build_multiflow(
    spec: &FieldSpec,
    params: Vec<Vec<f64>>,
    param_lattice: Option<Lattice>,
    ds: f64,
    opts: &MultiFlowOptions,
) -> Result<MultiFlow> {
    if params.is_empty() {
        return Err(Error::EmptySubset);
    }
    let times = time_grid(spec.domain.t_max, ds);
    let tol_ode = match opts.tol_ode {
        Some(t) => t,
        None => default_tol_ode(spec, ds)?,
    };
    let analytic = spec
        .catalog_field()
        .filter(|c| c.analytic_curve(&params[0], 0.0).is_some());
    let mut positions = Vec::with_capacity(params.len());
    let kind = if analytic.is_some() { MultiFlowKind::Analytic } else { MultiFlowKind::Numeric };
    for a in &params {
        let mut pos = Vec::with_capacity(times.len());
        match analytic {
            Some(field) => {
                for &t in &times {
                    let x = field.analytic_curve(a, t).unwrap();
                    pos.push(spec.domain.contains_space(&x).then_some(x));
                }
            }
            None => {
                let mut cur = a.clone();
                let mut alive = spec.domain.contains_space(&cur);
                let mut next = vec![0.0; a.len()];
                pos.push(alive.then(|| cur.clone()));
                for k in 1..times.len() {
                    if alive {
                        match rk2_step(spec, times[k - 1], &cur, 1.0, times[k] - times[k - 1], &mut next) {
                            Some(_) => cur.copy_from_slice(&next),
                            None => alive = false,
                        }
                    }
                    pos.push(alive.then(|| cur.clone()));
                }
            }
        }
        positions.push(pos);
    }
    let mut mf = MultiFlow {
        kind,
        times,
        params,
        param_lattice,
        positions,
        saturation: 0,
        dist_dense: 0.0,
        tol_ode,
    };
    mf.dist_dense = density_proxy(spec, &mf, opts.density_spacing)?;
    if let Some(cap) = opts.dist_cap {
        if mf.dist_dense > cap {
            return Err(Error::SparseFamily { dist_dense: mf.dist_dense, cap });
        }
    }
    Ok(mf)
}

/// A multi-flow covering the domain with spatial spacing about `h` and time step `dt`.
/// With `saturate`, the integral curves the closed-form family leaves out are appended.
pub fn covering_multiflow(spec: &FieldSpec, h: f64, dt: f64, saturate: bool) -> Result<MultiFlow> {
    let opts = MultiFlowOptions { density_spacing: h, ..Default::default() };
    let mut mf = match spec.catalog_field() {
        Some(field) => {
            let (lo, hi, step) = field.analytic_params(&spec.domain, h, dt);
            let first: Vec<i64> = lo.iter().map(|a| (a / step).floor() as i64).collect();
            let last: Vec<i64> = hi.iter().map(|b| (b / step).ceil() as i64).collect();
            let plo: Vec<f64> = first.iter().map(|&i| i as f64 * step).collect();
            let shape: Vec<usize> = first.iter().zip(&last).map(|(a, b)| (b - a + 1) as usize).collect();
            let lat = Lattice::new(plo, vec![step; lo.len()], shape)?;
            let params = (0..lat.len()).map(|i| lat.coord(i)).collect();
            build_multiflow(spec, params, Some(lat), dt, &opts)?
        }
        None => {
            let lat = Lattice::covering(&spec.domain.lo, &spec.domain.hi, h)?;
            let params = (0..lat.len()).map(|i| lat.coord(i)).collect();
            build_multiflow(spec, params, Some(lat), dt, &opts)?
        }
    };
    if saturate {
        if let Some(field) = spec.catalog_field() {
            let starts = field.saturation_starts(&spec.domain);
            mf.saturate(spec, &starts)?;
            mf.dist_dense = density_proxy(spec, &mf, h)?;
        }
    }
    Ok(mf)
}

/// Largest distance from a reference lattice node (per time slice) to the
/// nearest stored curve sample in that slice.
fn density_proxy(spec: &FieldSpec, mf: &MultiFlow, spacing: f64) -> Result<f64> {
    let lat = Lattice::covering(&spec.domain.lo, &spec.domain.hi, spacing)?;
    let mut worst: f64 = 0.0;
    for k in 0..mf.times.len() {
        let mut pts: Vec<&Vec<f64>> = mf.positions.iter().filter_map(|c| c[k].as_ref()).collect();
        if pts.is_empty() {
            return Ok(f64::INFINITY);
        }
        if spec.dim() == 1 {
            pts.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
            let xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
            for i in 0..lat.len() {
                let q = lat.coord(i)[0];
                let j = xs.partition_point(|&x| x < q);
                let mut d = f64::INFINITY;
                if j < xs.len() {
                    d = d.min(xs[j] - q);
                }
                if j > 0 {
                    d = d.min(q - xs[j - 1]);
                }
                worst = worst.max(d);
            }
        } else {
            for i in 0..lat.len() {
                let q = lat.coord(i);
                let d = pts.iter().map(|p| euclid(p, &q)).fold(f64::INFINITY, f64::min);
                worst = worst.max(d);
            }
        }
    }
    Ok(worst)
}

/// The point cloud swept by a subset of the multi-flow's curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTube {
    pub param_subset: Vec<usize>,
    /// `(curve, slice)` of every tube point.
    pub members: Vec<(usize, usize)>,
    pub points: Vec<SpaceTimePoint>,
    pub bbox_lo: Vec<f64>,
    pub bbox_hi: Vec<f64>,
}

pub fn build_flowtube(mf: &MultiFlow, subset: &[usize]) -> Result<FlowTube> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let mut members = Vec::new();
    let mut points = Vec::new();
    for &c in subset {
        if c >= mf.len() {
            return Err(Error::Invalid(format!("curve {c} not in the multi-flow")));
        }
        for k in 0..mf.times.len() {
            if let Some(p) = mf.point(c, k) {
                members.push((c, k));
                points.push(p);
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let d = points[0].dim() + 1;
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in &points {
        for (k, v) in p.to_vec().into_iter().enumerate() {
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    Ok(FlowTube { param_subset: subset.to_vec(), members, points, bbox_lo: lo, bbox_hi: hi })
}

/// Three-valued verdict of [`fb_triviality_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum Triviality {
    /// All samples lie within `tol_geom` of the witness curve.
    Trivial { witness: String },
    /// Every candidate curve through the endpoints misses some sample.
    Nontrivial { worst_sample: usize, miss: f64 },
    Inconclusive,
}

/// Sampled curve used as a triviality candidate (polyline, increasing time).
struct Candidate {
    name: String,
    pts: Vec<SpaceTimePoint>,
}

impl Candidate {
    fn distance(&self, p: &SpaceTimePoint) -> f64 {
        let mut best = f64::INFINITY;
        for w in self.pts.windows(2) {
            best = best.min(point_segment_distance(p, &w[0], &w[1]));
        }
        if self.pts.len() == 1 {
            best = p.dist(&self.pts[0]);
        }
        best
    }
}

fn point_segment_distance(p: &SpaceTimePoint, a: &SpaceTimePoint, b: &SpaceTimePoint) -> f64 {
    let (pv, av, bv) = (p.to_vec(), a.to_vec(), b.to_vec());
    let ab: Vec<f64> = bv.iter().zip(&av).map(|(x, y)| x - y).collect();
    let ap: Vec<f64> = pv.iter().zip(&av).map(|(x, y)| x - y).collect();
    let len2: f64 = ab.iter().map(|x| x * x).sum();
    let t = if len2 > 0.0 {
        (ab.iter().zip(&ap).map(|(x, y)| x * y).sum::<f64>() / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let proj: Vec<f64> = av.iter().zip(&ab).map(|(a, d)| a + t * d).collect();
    euclid(&pv, &proj)
}

/// Full-horizon numeric curve through `p` (forward to `T`, backward to `0`).
fn curve_through(spec: &FieldSpec, p: &SpaceTimePoint, ds: f64) -> Candidate {
    let mut fwd = integrate_curve(spec, p, 1, spec.domain.t_max - p.x0, ds, Some(f64::INFINITY))
        .map(|c| c.samples)
        .unwrap_or_else(|_| vec![p.clone()]);
    let mut bwd = integrate_curve(spec, p, -1, p.x0, ds, Some(f64::INFINITY))
        .map(|c| c.samples)
        .unwrap_or_default();
    bwd.reverse();
    bwd.pop();
    bwd.append(&mut fwd);
    Candidate { name: format!("integrated through {:?}", p.to_vec()), pts: bwd }
}

/// Decide whether the image of `c` lies within `tol_geom` of a single
/// integral curve, drawing candidates from `mf` and from curves integrated
/// through the endpoints and the extremal time sections of `c`.
pub fn fb_triviality_check(spec: &FieldSpec, c: &FbCurve, mf: &MultiFlow, tol_geom: f64) -> Triviality {
    if c.samples.is_empty() {
        return Triviality::Inconclusive;
    }
    if c.switch_points().is_empty() {
        return Triviality::Trivial { witness: "itself (no switches)".into() };
    }
    let first = c.samples.first().unwrap();
    let last = c.samples.last().unwrap();
    let mut candidates: Vec<Candidate> = Vec::new();
    for curve in 0..mf.len() {
        let pts: Vec<SpaceTimePoint> = (0..mf.times.len()).filter_map(|k| mf.point(curve, k)).collect();
        let cand = Candidate { name: format!("multi-flow curve {curve}"), pts };
        if cand.distance(first) <= tol_geom || cand.distance(last) <= tol_geom {
            candidates.push(cand);
        }
    }
    let (mut tmin, mut tmax) = (0, 0);
    for (k, p) in c.samples.iter().enumerate() {
        if p.x0 < c.samples[tmin].x0 {
            tmin = k;
        }
        if p.x0 > c.samples[tmax].x0 {
            tmax = k;
        }
    }
    for p in [first, last, &c.samples[tmin], &c.samples[tmax]] {
        candidates.push(curve_through(spec, p, c.ds));
    }
    let mut best_miss = f64::INFINITY;
    let mut best_sample = 0;
    for cand in &candidates {
        let mut miss: f64 = 0.0;
        let mut at = 0;
        for (k, p) in c.samples.iter().enumerate() {
            let d = cand.distance(p);
            if d > miss {
                miss = d;
                at = k;
            }
        }
        if miss <= tol_geom {
            return Triviality::Trivial { witness: cand.name.clone() };
        }
        if miss < best_miss {
            best_miss = miss;
            best_sample = at;
        }
    }
    // Candidates must actually pass through an endpoint to count as evidence.
    let through_ends = candidates
        .iter()
        .any(|cand| cand.distance(first) <= tol_geom && cand.distance(last) <= tol_geom)
        || candidates.iter().any(|cand| cand.distance(first) <= tol_geom);
    if through_ends {
        Triviality::Nontrivial { worst_sample: best_sample, miss: best_miss }
    } else {
        Triviality::Inconclusive
    }
}

/// Sample the two analytic legs of the fig1 field: forward along `(1−s)³`
/// from `(0, 1)` to `(1, 0)`, then backward along `(s−1)³` to `(0, −1)`.
pub fn fig1_concatenation(ds: f64) -> FbCurve {
    let m = (1.0 / ds).round() as usize;
    let mut samples = Vec::with_capacity(2 * m + 1);
    for k in 0..=m {
        let s = k as f64 * ds;
        samples.push(SpaceTimePoint::planar(s, (1.0 - s).powi(3)));
    }
    for k in 1..=m {
        let s = 1.0 - k as f64 * ds;
        samples.push(SpaceTimePoint::planar(s, (s - 1.0).powi(3)));
    }
    let mut profile = vec![1i8; m];
    profile.extend(std::iter::repeat(-1i8).take(m));
    FbCurve { samples, ds, profile }
}

//! Bounded space-time vector fields `v = (1, v̂)` on `[0, T] × ℝⁿ`.
//!
//! A field is either one of a small catalog of closed-form examples or a
//! sampled grid read from disk. Every evaluation returns a vector whose
//! time-like component is exactly `1`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, Lattice};

/// A point `(x₀, x̂)` with time-like first coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub x0: f64,
    pub xhat: Vec<f64>,
}

impl SpaceTimePoint {
    pub fn new(x0: f64, xhat: Vec<f64>) -> Self {
        SpaceTimePoint { x0, xhat }
    }

    pub fn planar(x0: f64, x1: f64) -> Self {
        SpaceTimePoint { x0, xhat: vec![x1] }
    }

    pub fn dim(&self) -> usize {
        self.xhat.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim() + 1);
        v.push(self.x0);
        v.extend_from_slice(&self.xhat);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        SpaceTimePoint { x0: v[0], xhat: v[1..].to_vec() }
    }

    pub fn dist(&self, other: &SpaceTimePoint) -> f64 {
        let s: f64 = self
            .xhat
            .iter()
            .zip(&other.xhat)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        (s + (self.x0 - other.x0).powi(2)).sqrt()
    }

    pub fn spatial_dist(&self, other: &SpaceTimePoint) -> f64 {
        euclid(&self.xhat, &other.xhat)
    }
}

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// The closed-form fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum CatalogField {
    /// `v = (1, c)`.
    Constant { c: Vec<f64> },
    /// `v = (1, x₁)`.
    Shear,
    /// `v = (1, 3∛(x₁²))`; curves `(s, (s+a)³)` plus the stationary axis.
    Cubic,
    /// `v = (1, −3 sign(x₁)|x₁|^{2/3})`; curves `(s, ±(|a|−s)₊³)` that merge into the axis.
    Fig1,
    /// `v = (1, |x₁|^α)` with `Dv ∈ L^p_loc`.
    Holder { alpha: f64, p: f64 },
}

impl CatalogField {
    pub fn name(&self) -> &'static str {
        match self {
            CatalogField::Constant { .. } => "constant",
            CatalogField::Shear => "shear",
            CatalogField::Cubic => "cubic",
            CatalogField::Fig1 => "fig1",
            CatalogField::Holder { .. } => "holder",
        }
    }

    pub fn formula(&self) -> &'static str {
        match self {
            CatalogField::Constant { .. } => "v = (1, c)",
            CatalogField::Shear => "v = (1, x1)",
            CatalogField::Cubic => "v = (1, 3*cbrt(x1^2))",
            CatalogField::Fig1 => "v = (1, -3*sign(x1)*|x1|^(2/3))",
            CatalogField::Holder { .. } => "v = (1, |x1|^alpha)",
        }
    }

    pub fn curve_note(&self) -> &'static str {
        match self {
            CatalogField::Constant { .. } => "Z(s,a) = (s, a + c*s)",
            CatalogField::Shear => "Z(s,a) = (s, a*exp(s))",
            CatalogField::Cubic => "Z(s,a) = (s, (s+a)^3); the axis (s,0) is an extra integral curve",
            CatalogField::Fig1 => "Z(s,a) = (s, sign(a)*max(|a|-s,0)^3); curves merge into the axis",
            CatalogField::Holder { .. } => {
                "Z(s,a) = (s, sign(w)|w|^(1/(1-alpha))), w = (1-alpha)(s+a)"
            }
        }
    }

    /// Every catalog entry with default parameters.
    pub fn all() -> Vec<CatalogField> {
        vec![
            CatalogField::Constant { c: vec![0.0] },
            CatalogField::Shear,
            CatalogField::Cubic,
            CatalogField::Fig1,
            CatalogField::Holder { alpha: 2.0 / 3.0, p: 2.0 },
        ]
    }

    pub fn space_dim(&self) -> Option<usize> {
        match self {
            CatalogField::Constant { c } => Some(c.len()),
            _ => Some(1),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            CatalogField::Constant { c } if c.is_empty() => {
                Err(Error::Invalid("constant field needs at least one component".into()))
            }
            CatalogField::Holder { alpha, p } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::Invalid("holder exponent must lie in (0, 1)".into()));
                }
                // |x|^(alpha-1) is in L^p near 0 iff (alpha - 1) p > -1.
                if !(*p >= 1.0 && (alpha - 1.0) * p > -1.0) {
                    return Err(Error::Invalid(format!(
                        "holder({alpha}) has Dv outside L^{p}_loc"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Spatial velocity `v̂(x̂)`; all catalog fields are autonomous.
    pub fn velocity(&self, x: &[f64], out: &mut [f64]) {
        match self {
            CatalogField::Constant { c } => out.copy_from_slice(c),
            CatalogField::Shear => out[0] = x[0],
            CatalogField::Cubic => out[0] = 3.0 * x[0].abs().powf(2.0 / 3.0),
            CatalogField::Fig1 => {
                out[0] = -3.0 * sign(x[0]) * x[0].abs().powf(2.0 / 3.0);
            }
            CatalogField::Holder { alpha, .. } => out[0] = x[0].abs().powf(*alpha),
        }
    }

    /// Closed-form spatial Jacobian (row-major `n×n`); entries may be infinite
    /// at the singular axis.
    pub fn jacobian(&self, x: &[f64]) -> Vec<f64> {
        match self {
            CatalogField::Constant { c } => vec![0.0; c.len() * c.len()],
            CatalogField::Shear => vec![1.0],
            CatalogField::Cubic => vec![2.0 * sign(x[0]) * x[0].abs().powf(-1.0 / 3.0)],
            CatalogField::Fig1 => vec![-2.0 * x[0].abs().powf(-1.0 / 3.0)],
            CatalogField::Holder { alpha, .. } => {
                vec![alpha * sign(x[0]) * x[0].abs().powf(alpha - 1.0)]
            }
        }
    }

    pub fn divergence(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let j = self.jacobian(x);
        (0..n).map(|k| j[k * n + k]).sum()
    }

    /// Exact `sup |v|` over the spatial box.
    fn sup_norm(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let m = lo[0].abs().max(hi[0].abs());
        let vhat = match self {
            CatalogField::Constant { c } => norm(c),
            CatalogField::Shear => m,
            CatalogField::Cubic | CatalogField::Fig1 => 3.0 * m.powf(2.0 / 3.0),
            CatalogField::Holder { alpha, .. } => m.powf(*alpha),
        };
        (1.0 + vhat * vhat).sqrt()
    }

    /// Closed-form multi-flow `Z(s, a)` (spatial part) when one exists.
    pub fn analytic_curve(&self, a: &[f64], s: f64) -> Option<Vec<f64>> {
        match self {
            CatalogField::Constant { c } => {
                Some(a.iter().zip(c).map(|(ai, ci)| ai + ci * s).collect())
            }
            CatalogField::Shear => Some(vec![a[0] * s.exp()]),
            CatalogField::Cubic => Some(vec![(s + a[0]).powi(3)]),
            CatalogField::Fig1 => {
                let r = (a[0].abs() - s).max(0.0);
                let v = sign(a[0]) * r.powi(3);
                Some(vec![if v == 0.0 { 0.0 } else { v }])
            }
            CatalogField::Holder { alpha, .. } => {
                let w = (1.0 - alpha) * (s + a[0]);
                Some(vec![sign(w) * w.abs().powf(1.0 / (1.0 - alpha))])
            }
        }
    }

    /// Parameter box and step so that `Z(·, a)` over the box covers the domain
    /// with spatial spacing at most `h`. Steps are `dt / 2^m` so curves hitting
    /// the axis do so on time slices.
    pub fn analytic_params(&self, domain: &Domain, h: f64, dt: f64) -> (Vec<f64>, Vec<f64>, f64) {
        let t = domain.t_max;
        let (lo, hi) = (&domain.lo, &domain.hi);
        let m = lo[0].abs().max(hi[0].abs());
        // Largest |∂Z/∂a| over the domain.
        let (plo, phi, stretch) = match self {
            CatalogField::Constant { c } => {
                let plo = lo.iter().zip(c).map(|(a, ci)| a - (ci * t).max(0.0)).collect();
                let phi = hi.iter().zip(c).map(|(b, ci)| b - (ci * t).min(0.0)).collect();
                (plo, phi, 1.0)
            }
            CatalogField::Shear => {
                let et = (-t).exp();
                (
                    vec![lo[0].min(lo[0] * et)],
                    vec![hi[0].max(hi[0] * et)],
                    t.exp(),
                )
            }
            CatalogField::Cubic => (
                vec![lo[0].cbrt() - t],
                vec![hi[0].cbrt()],
                3.0 * m.powf(2.0 / 3.0),
            ),
            CatalogField::Fig1 => {
                let r = m.cbrt() + t;
                (vec![-r], vec![r], 3.0 * m.powf(2.0 / 3.0))
            }
            CatalogField::Holder { alpha, .. } => {
                let inv = |x: f64| sign(x) * x.abs().powf(1.0 - alpha) / (1.0 - alpha);
                (vec![inv(lo[0]) - t], vec![inv(hi[0])], m.powf(*alpha))
            }
        };
        let mut step = dt;
        while step * stretch > h * (1.0 + 1e-12) {
            step *= 0.5;
        }
        (plo, phi, step)
    }

    /// Starting points of integral curves the analytic multi-flow leaves out.
    pub fn saturation_starts(&self, domain: &Domain) -> Vec<SpaceTimePoint> {
        match self {
            CatalogField::Cubic | CatalogField::Holder { .. } if domain.contains_space(&[0.0]) => {
                vec![SpaceTimePoint::planar(0.0, 0.0)]
            }
            _ => Vec::new(),
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// A field sampled on a spatial lattice, piecewise constant over `nt` time slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledGrid {
    pub t_max: f64,
    pub nt: usize,
    pub lattice: Lattice,
    /// `values[(k * nodes + node) * n + comp]`.
    pub values: Vec<f64>,
}

impl SampledGrid {
    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    fn slice(&self, t: f64) -> usize {
        let k = (t / self.t_max * self.nt as f64).floor();
        (k.max(0.0) as usize).min(self.nt - 1)
    }

    /// Build by sampling a closure `f(t, x̂) -> v̂` at slice start times.
    pub fn from_fn<F>(t_max: f64, nt: usize, lattice: Lattice, f: F) -> Self
    where
        F: Fn(f64, &[f64]) -> Vec<f64>,
    {
        let n = lattice.dim();
        let mut values = Vec::with_capacity(nt * lattice.len() * n);
        for k in 0..nt {
            let t = k as f64 * t_max / nt as f64;
            for i in 0..lattice.len() {
                let v = f(t, &lattice.coord(i));
                values.extend_from_slice(&v[..n]);
            }
        }
        SampledGrid { t_max, nt, lattice, values }
    }

    fn velocity(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.dim();
        let k = self.slice(t);
        let base = k * self.lattice.len();
        let st = self
            .lattice
            .interpolation_stencil(x)
            .ok_or_else(|| Error::OutOfDomain { point: x.to_vec() })?;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (idx, w) in st {
            for c in 0..n {
                let v = self.values[(base + idx) * n + c];
                if !v.is_finite() {
                    return Err(Error::NonFinite { point: x.to_vec() });
                }
                out[c] += w * v;
            }
        }
        Ok(())
    }

    /// Parse the plain-text grid format: a header `n T nx nt lo1 hi1 … lon hin`
    /// followed by rows `t i1 … in v1 … vn` (time-slice index, node indices, components).
    pub fn parse(text: &str) -> Result<Self> {
        let (lattice, t_max, nt, cols, rows) = parse_grid_text(text, None)?;
        let n = lattice.dim();
        debug_assert_eq!(cols, n);
        Ok(SampledGrid { t_max, nt, lattice, values: rows })
    }

    pub fn to_text(&self) -> String {
        write_grid_text(self.t_max, self.nt, &self.lattice, self.dim(), &self.values)
    }
}

/// Parse the shared grid text format. `value_cols` defaults to `n`.
pub(crate) fn parse_grid_text(
    text: &str,
    value_cols: Option<usize>,
) -> Result<(Lattice, f64, usize, usize, Vec<f64>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (hline, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "missing header".into() })?;
    let perr = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };
    let h: Vec<f64> = header
        .split_whitespace()
        .map(|s| s.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| perr(hline, "non-numeric header"))?;
    if h.len() < 4 {
        return Err(perr(hline, "header needs n T nx nt bounds"));
    }
    let n = h[0] as usize;
    let (t_max, nx, nt) = (h[1], h[2] as usize, h[3] as usize);
    if n == 0 || h.len() != 4 + 2 * n || nx < 2 || nt == 0 || !(t_max > 0.0) {
        return Err(perr(hline, "inconsistent header"));
    }
    let lo: Vec<f64> = (0..n).map(|k| h[4 + 2 * k]).collect();
    let hi: Vec<f64> = (0..n).map(|k| h[5 + 2 * k]).collect();
    let lattice = Lattice::with_points(&lo, &hi, nx).map_err(|e| perr(hline, &e.to_string()))?;
    let cols = value_cols.unwrap_or(n);
    let nodes = lattice.len();
    let mut values = vec![f64::NAN; nt * nodes * cols];
    let mut seen = vec![false; nt * nodes];
    for (ln, line) in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 1 + n + cols {
            return Err(perr(ln, "wrong number of columns"));
        }
        let k: usize = f[0].parse().map_err(|_| perr(ln, "bad time index"))?;
        let multi: Vec<usize> = f[1..=n]
            .iter()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| perr(ln, "bad node index"))?;
        if k >= nt || multi.iter().any(|&i| i >= nx) {
            return Err(perr(ln, "index out of range"));
        }
        let node = lattice.flat_index(&multi);
        for c in 0..cols {
            let v: f64 = f[1 + n + c].parse().map_err(|_| perr(ln, "bad value"))?;
            if !v.is_finite() {
                return Err(perr(ln, "non-finite value"));
            }
            values[(k * nodes + node) * cols + c] = v;
        }
        seen[k * nodes + node] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Parse { line: 0, msg: "grid has missing rows".into() });
    }
    Ok((lattice, t_max, nt, cols, values))
}

pub(crate) fn write_grid_text(
    t_max: f64,
    nt: usize,
    lattice: &Lattice,
    cols: usize,
    values: &[f64],
) -> String {
    let n = lattice.dim();
    let mut s = String::new();
    let nx = lattice.shape[0];
    let hi = lattice.hi();
    let _ = write!(s, "{n} {t_max} {nx} {nt}");
    for k in 0..n {
        let _ = write!(s, " {} {}", lattice.lo[k], hi[k]);
    }
    s.push('\n');
    let nodes = lattice.len();
    for k in 0..nt {
        for node in 0..nodes {
            let _ = write!(s, "{k}");
            for i in lattice.multi_index(node) {
                let _ = write!(s, " {i}");
            }
            for c in 0..cols {
                let _ = write!(s, " {}", values[(k * nodes + node) * cols + c]);
            }
            s.push('\n');
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Catalog(CatalogField),
    Sampled(SampledGrid),
}

/// A field together with its domain box and an upper bound for `‖v‖∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub kind: FieldKind,
    pub domain: Domain,
    pub sup_norm_hint: f64,
}

impl FieldSpec {
    pub fn catalog(field: CatalogField, domain: Domain) -> Result<Self> {
        field.validate()?;
        if field.space_dim() != Some(domain.dim()) {
            return Err(Error::Invalid(format!(
                "{} field needs a {}-dimensional box",
                field.name(),
                field.space_dim().unwrap_or(0)
            )));
        }
        let sup_norm_hint = field.sup_norm(&domain.lo, &domain.hi);
        Ok(FieldSpec { kind: FieldKind::Catalog(field), domain, sup_norm_hint })
    }

    pub fn sampled(grid: SampledGrid) -> Result<Self> {
        let domain = Domain::new(grid.t_max, grid.lattice.lo.clone(), grid.lattice.hi())?;
        let n = grid.dim();
        let mut sup: f64 = 1.0;
        for chunk in grid.values.chunks(n) {
            if chunk.iter().any(|v| !v.is_finite()) {
                continue;
            }
            sup = sup.max((1.0 + chunk.iter().map(|v| v * v).sum::<f64>()).sqrt());
        }
        Ok(FieldSpec { kind: FieldKind::Sampled(grid), domain, sup_norm_hint: sup })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn catalog_field(&self) -> Option<&CatalogField> {
        match &self.kind {
            FieldKind::Catalog(c) => Some(c),
            FieldKind::Sampled(_) => None,
        }
    }

    /// Spatial velocity at `(t, x̂)`; errors outside the domain box.
    pub fn velocity(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        if !self.domain.contains(t, x) {
            let mut p = vec![t];
            p.extend_from_slice(x);
            return Err(Error::OutOfDomain { point: p });
        }
        match &self.kind {
            FieldKind::Catalog(c) => {
                c.velocity(x, out);
                Ok(())
            }
            FieldKind::Sampled(g) => g.velocity(t, x, out),
        }
    }

    /// Full field `v(p) = (1, v̂(p))`.
    pub fn eval(&self, p: &SpaceTimePoint) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim() + 1];
        out[0] = 1.0;
        self.velocity(p.x0, &p.xhat, &mut out[1..])?;
        Ok(out)
    }

    /// Spatial Jacobian `Dv̂` (row-major). Closed form for catalog fields,
    /// centred differences with step `fd_step` otherwise.
    pub fn jacobian(&self, t: f64, x: &[f64], fd_step: f64) -> Result<Vec<f64>> {
        if let FieldKind::Catalog(c) = &self.kind {
            if !self.domain.contains(t, x) {
                return Err(Error::OutOfDomain { point: x.to_vec() });
            }
            return Ok(c.jacobian(x));
        }
        let n = self.dim();
        let mut jac = vec![0.0; n * n];
        let (mut vp, mut vm) = (vec![0.0; n], vec![0.0; n]);
        let mut xp = x.to_vec();
        for j in 0..n {
            let hi = (x[j] + fd_step).min(self.domain.hi[j]);
            let lo = (x[j] - fd_step).max(self.domain.lo[j]);
            xp[j] = hi;
            self.velocity(t, &xp, &mut vp)?;
            xp[j] = lo;
            self.velocity(t, &xp, &mut vm)?;
            xp[j] = x[j];
            for i in 0..n {
                jac[i * n + j] = (vp[i] - vm[i]) / (hi - lo);
            }
        }
        Ok(jac)
    }

    pub fn divergence(&self, t: f64, x: &[f64], fd_step: f64) -> Result<f64> {
        if let FieldKind::Catalog(c) = &self.kind {
            if !self.domain.contains(t, x) {
                return Err(Error::OutOfDomain { point: x.to_vec() });
            }
            return Ok(c.divergence(x));
        }
        let n = self.dim();
        let j = self.jacobian(t, x, fd_step)?;
        Ok((0..n).map(|k| j[k * n + k]).sum())
    }

    /// Space-time lattice with `density` points per axis used by the lattice
    /// estimators below.
    fn sample_lattice(&self, density: usize) -> Result<(Vec<f64>, Lattice)> {
        let d = density.max(2);
        let times = (0..d)
            .map(|k| self.domain.t_max * k as f64 / (d - 1) as f64)
            .collect();
        let lat = Lattice::with_points(&self.domain.lo, &self.domain.hi, d)?;
        Ok((times, lat))
    }
}

/// `max |v|` over a `density`-point lattice per axis (time included).
pub fn sup_norm(spec: &FieldSpec, sample_density: usize) -> Result<f64> {
    let (times, lat) = spec.sample_lattice(sample_density)?;
    let n = spec.dim();
    let mut v = vec![0.0; n];
    let mut best: f64 = 1.0;
    for &t in &times {
        for i in 0..lat.len() {
            spec.velocity(t, &lat.coord(i), &mut v)?;
            best = best.max((1.0 + v.iter().map(|x| x * x).sum::<f64>()).sqrt());
        }
    }
    Ok(best)
}

/// Largest lattice-certified `δ` with `|v(x₀,x̂) − v(x₀,x̂′)| ≤ ρ` for all
/// sampled same-time pairs with `|x̂ − x̂′| ≤ δ`.
pub fn continuity_modulus(spec: &FieldSpec, rho: f64, sample_density: usize) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Invalid("rho must be positive".into()));
    }
    let (times, lat) = spec.sample_lattice(sample_density)?;
    let n = spec.dim();
    // Precompute velocities per (time, node).
    let nodes = lat.len();
    let mut vel = vec![0.0; times.len() * nodes * n];
    for (k, &t) in times.iter().enumerate() {
        for i in 0..nodes {
            let off = (k * nodes + i) * n;
            spec.velocity(t, &lat.coord(i), &mut vel[off..off + n])?;
        }
    }
    // Offsets with non-negative leading nonzero entry, sorted by length.
    let reach: Vec<isize> = lat.shape.iter().map(|&m| m as isize - 1).collect();
    let mut offsets: Vec<(f64, Vec<isize>)> = Vec::new();
    let mut cur = vec![0isize; n];
    enumerate_offsets(&reach, 0, &mut cur, &mut |o| {
        let first = o.iter().find(|&&c| c != 0);
        if matches!(first, Some(&c) if c > 0) {
            let len = o
                .iter()
                .zip(&lat.step)
                .map(|(&c, h)| (c as f64 * h).powi(2))
                .sum::<f64>()
                .sqrt();
            offsets.push((len, o.to_vec()));
        }
    });
    offsets.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut certified = 0.0;
    let mut i = 0;
    while i < offsets.len() {
        // All offsets sharing this length must pass together.
        let len = offsets[i].0;
        let mut j = i;
        let mut ok = true;
        while j < offsets.len() && offsets[j].0 <= len * (1.0 + 1e-12) {
            if ok && max_diff_for_offset(&lat, &vel, times.len(), n, &offsets[j].1) > rho {
                ok = false;
            }
            j += 1;
        }
        if !ok {
            if certified == 0.0 {
                return Err(Error::NoModulus { rho });
            }
            return Ok(certified);
        }
        certified = len;
        i = j;
    }
    Ok(spec.domain.spatial_diameter().max(certified))
}

fn enumerate_offsets(reach: &[isize], k: usize, cur: &mut Vec<isize>, f: &mut dyn FnMut(&[isize])) {
    if k == reach.len() {
        f(cur);
        return;
    }
    for c in -reach[k]..=reach[k] {
        cur[k] = c;
        enumerate_offsets(reach, k + 1, cur, f);
    }
}

fn max_diff_for_offset(lat: &Lattice, vel: &[f64], nt: usize, n: usize, off: &[isize]) -> f64 {
    let nodes = lat.len();
    let mut worst: f64 = 0.0;
    for i in 0..nodes {
        let m = lat.multi_index(i);
        let mut tgt = m.clone();
        let mut inside = true;
        for k in 0..n {
            let j = m[k] as isize + off[k];
            if j < 0 || j >= lat.shape[k] as isize {
                inside = false;
                break;
            }
            tgt[k] = j as usize;
        }
        if !inside {
            continue;
        }
        let jdx = lat.flat_index(&tgt);
        for t in 0..nt {
            let a = &vel[(t * nodes + i) * n..(t * nodes + i) * n + n];
            let b = &vel[(t * nodes + jdx) * n..(t * nodes + jdx) * n + n];
            worst = worst.max(euclid(a, b));
        }
    }
    worst
}

/// Largest `|Δv| / |Δx̂|` over axis-neighbour pairs of a lattice with spacing `spacing`.
pub fn lattice_lipschitz(spec: &FieldSpec, spacing: f64) -> Result<f64> {
    let lat = Lattice::covering(&spec.domain.lo, &spec.domain.hi, spacing)?;
    let times = crate::grid::time_grid(spec.domain.t_max, spacing.max(spec.domain.t_max / 64.0));
    let n = spec.dim();
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    let mut best: f64 = 0.0;
    for &t in &times {
        for i in 0..lat.len() {
            spec.velocity(t, &lat.coord(i), &mut a)?;
            for k in 0..n {
                if let Some(j) = lat.shifted(i, k, 1) {
                    spec.velocity(t, &lat.coord(j), &mut b)?;
                    best = best.max(euclid(&a, &b) / lat.step[k]);
                }
            }
        }
    }
    Ok(best)
}

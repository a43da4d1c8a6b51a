//! Discrete Hardy–Littlewood maximal functions, the pointwise Sobolev
//! difference-quotient check and the along-curve uniqueness certificate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{euclid, FieldKind, FieldSpec, SpaceTimePoint};
use crate::flow::{default_tol_ode, integrate_curve, IntegralCurve};
use crate::grid::Lattice;

/// Scalar values on a spatial lattice, optionally tagged with a time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScalarField {
    pub lattice: Lattice,
    pub values: Vec<f64>,
    pub time: Option<f64>,
}

impl GridScalarField {
    pub fn new(lattice: Lattice, values: Vec<f64>, time: Option<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::LatticeMismatch);
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { point: lattice.coord(k) });
        }
        Ok(GridScalarField { lattice, values, time })
    }

    pub fn from_fn(lattice: Lattice, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..lattice.len()).map(|i| f(&lattice.coord(i))).collect();
        GridScalarField::new(lattice, values, None)
    }

    /// `|Df|` by centred differences (one-sided on the boundary).
    pub fn gradient_norm(&self) -> GridScalarField {
        let lat = &self.lattice;
        let n = lat.dim();
        let values = (0..lat.len())
            .map(|i| {
                let mut s = 0.0;
                for ax in 0..n {
                    let p = lat.shifted(i, ax, 1);
                    let m = lat.shifted(i, ax, -1);
                    let (a, b, w) = match (p, m) {
                        (Some(p), Some(m)) => (p, m, 2.0),
                        (Some(p), None) => (p, i, 1.0),
                        (None, Some(m)) => (i, m, 1.0),
                        (None, None) => continue,
                    };
                    let d = (self.values[a] - self.values[b]) / (w * lat.step[ax]);
                    s += d * d;
                }
                s.sqrt()
            })
            .collect();
        GridScalarField { lattice: lat.clone(), values, time: self.time }
    }

    pub fn powf(&self, p: f64) -> GridScalarField {
        GridScalarField {
            lattice: self.lattice.clone(),
            values: self.values.iter().map(|v| v.abs().powf(p)).collect(),
            time: self.time,
        }
    }

    /// Every other node along each axis.
    pub fn coarsened(&self) -> Result<GridScalarField> {
        let lat = &self.lattice;
        let shape: Vec<usize> = lat.shape.iter().map(|&s| (s + 1) / 2).collect();
        let step: Vec<f64> = lat.step.iter().map(|s| 2.0 * s).collect();
        let coarse = Lattice::new(lat.lo.clone(), step, shape)?;
        let values = (0..coarse.len())
            .map(|i| {
                let m: Vec<usize> = coarse.multi_index(i).iter().map(|k| 2 * k).collect();
                self.values[lat.flat_index(&m)]
            })
            .collect();
        Ok(GridScalarField { lattice: coarse, values, time: self.time })
    }
}

/// `{h, 2h, 4h, …}` up to (and including the first radius reaching) `diam`.
pub fn radii_ladder(h: f64, diam: f64) -> Vec<f64> {
    let mut out = vec![h];
    while *out.last().unwrap() < diam {
        out.push(out.last().unwrap() * 2.0);
    }
    out
}

/// Maximal function over a radii set: per node, the largest average of `|f|`
/// over lattice nodes in the closed ball, clipped to the box and renormalised
/// by the number of nodes kept.
pub fn maximal_function(f: &GridScalarField, radii: &[f64]) -> Result<GridScalarField> {
    if radii.is_empty() {
        return Err(Error::EmptyRadii);
    }
    if radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid("radii must be positive and increasing".into()));
    }
    let lat = &f.lattice;
    let abs: Vec<f64> = f.values.iter().map(|v| v.abs()).collect();
    let values = if lat.dim() == 1 {
        maximal_1d(&abs, lat.step[0], radii)
    } else {
        maximal_nd(&abs, lat, radii)
    };
    Ok(GridScalarField { lattice: lat.clone(), values, time: f.time })
}

fn maximal_1d(f: &[f64], h: f64, radii: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + f[i];
    }
    let ks: Vec<usize> = radii.iter().map(|r| (r / h * (1.0 + 1e-12)).floor() as usize).collect();
    (0..n)
        .map(|i| {
            let mut best: f64 = 0.0;
            for &k in &ks {
                let a = i.saturating_sub(k);
                let b = (i + k + 1).min(n);
                best = best.max((prefix[b] - prefix[a]) / (b - a) as f64);
            }
            best
        })
        .collect()
}

fn maximal_nd(f: &[f64], lat: &Lattice, radii: &[f64]) -> Vec<f64> {
    let n = lat.dim();
    let balls: Vec<Vec<Vec<isize>>> = radii
        .iter()
        .map(|&r| {
            let ext: Vec<isize> = lat.step.iter().map(|s| (r / s * (1.0 + 1e-12)).floor() as isize).collect();
            let mut offs = Vec::new();
            let mut cur: Vec<isize> = ext.iter().map(|e| -e).collect();
            loop {
                let d2: f64 = cur.iter().zip(&lat.step).map(|(&o, s)| (o as f64 * s).powi(2)).sum();
                if d2.sqrt() <= r * (1.0 + 1e-12) {
                    offs.push(cur.clone());
                }
                let mut ax = 0;
                while ax < n {
                    cur[ax] += 1;
                    if cur[ax] <= ext[ax] {
                        break;
                    }
                    cur[ax] = -ext[ax];
                    ax += 1;
                }
                if ax == n {
                    break;
                }
            }
            offs
        })
        .collect();
    (0..lat.len())
        .into_par_iter()
        .map(|i| {
            let base = lat.multi_index(i);
            let mut idx = vec![0usize; n];
            let mut best: f64 = 0.0;
            for ball in &balls {
                let (mut sum, mut cnt) = (0.0, 0usize);
                'off: for o in ball {
                    for ax in 0..n {
                        let k = base[ax] as isize + o[ax];
                        if k < 0 || k >= lat.shape[ax] as isize {
                            continue 'off;
                        }
                        idx[ax] = k as usize;
                    }
                    sum += f[lat.flat_index(&idx)];
                    cnt += 1;
                }
                best = best.max(sum / cnt as f64);
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma51Report {
    /// 99th percentile of the ratios.
    pub fitted_c: f64,
    /// `(q, quantile)` for q in {0.5, 0.9, 0.95, 0.99, 1}.
    pub quantiles: Vec<(f64, f64)>,
    pub max_ratio: f64,
    pub pairs_used: usize,
    /// Pairs with a zero denominator.
    pub skipped: usize,
    /// The discrete `‖Df‖_p^p` grows under refinement (ratio fine/coarse above 1.5).
    pub not_sobolev: bool,
    pub seminorm_ratio: f64,
}

/// Ratios `|f(x) − f(y)| / (|x − y| [𝓜(|Df|ᵖ)(x)]^{1/p})` over `pairs` random
/// node pairs drawn from a seeded generator.
pub fn lemma51_check(f: &GridScalarField, p: f64, pairs: usize, seed: u64) -> Result<Lemma51Report> {
    let lat = &f.lattice;
    let n = lat.dim();
    if !(p > n as f64) {
        return Err(Error::Invalid(format!("p must exceed the dimension {n}")));
    }
    if lat.len() < 2 {
        return Err(Error::EmptyDomain);
    }
    let h = lat.step.iter().cloned().fold(f64::INFINITY, f64::min);
    let diam = euclid(&lat.lo, &lat.hi());
    let dfp = f.gradient_norm().powf(p);
    let m = maximal_function(&dfp, &radii_ladder(h, diam))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(pairs);
    let mut skipped = 0;
    while ratios.len() + skipped < pairs {
        let i = rng.gen_range(0..lat.len());
        let j = rng.gen_range(0..lat.len());
        if i == j {
            continue;
        }
        let d = euclid(&lat.coord(i), &lat.coord(j));
        let den = d * m.values[i].powf(1.0 / p);
        if !(den > 0.0) {
            skipped += 1;
            continue;
        }
        ratios.push((f.values[i] - f.values[j]).abs() / den);
    }
    ratios.sort_by(f64::total_cmp);
    let q = |x: f64| -> f64 {
        if ratios.is_empty() {
            return 0.0;
        }
        ratios[((x * (ratios.len() - 1) as f64).round() as usize).min(ratios.len() - 1)]
    };
    let quantiles: Vec<(f64, f64)> = [0.5, 0.9, 0.95, 0.99, 1.0].iter().map(|&x| (x, q(x))).collect();

    let seminorm = |g: &GridScalarField| -> f64 { g.gradient_norm().powf(p).values.iter().sum::<f64>() * g.lattice.cell_volume() };
    let coarse = f.coarsened()?;
    let seminorm_ratio = if coarse.lattice.len() >= 2 {
        let c = seminorm(&coarse);
        let fine = seminorm(f);
        if c > 0.0 { fine / c } else if fine > 0.0 { f64::INFINITY } else { 1.0 }
    } else {
        1.0
    };
    Ok(Lemma51Report {
        fitted_c: q(0.99),
        max_ratio: q(1.0),
        quantiles,
        pairs_used: ratios.len(),
        skipped,
        not_sobolev: seminorm_ratio > 1.5,
        seminorm_ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub p: f64,
    pub p_tilde: f64,
    /// Lattice step for `|Db|^p̃` and its maximal function.
    pub h: f64,
    pub ds: f64,
    /// Defaults to the ladder `{h, 2h, …}`.
    pub radii: Option<Vec<f64>>,
    /// Midpoint subsamples per axis for the cell averages of `|Db|^p̃`.
    pub subsamples: usize,
    /// Divergence cap; defaults to half of `T · max 𝓜^{1/p̃}`.
    pub cap: Option<f64>,
}

impl CertifyOptions {
    /// `p̃ = (n + p)/2`.
    pub fn new(n: usize, p: f64, h: f64, ds: f64) -> Self {
        CertifyOptions { p, p_tilde: 0.5 * (n as f64 + p), h, ds, radii: None, subsamples: 8, cap: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub start_points: Vec<Vec<f64>>,
    /// `Φ(x̂)`; `None` when the curve left the domain or could not be integrated.
    pub integrals: Vec<Option<f64>>,
    pub p: f64,
    pub p_tilde: f64,
    pub cap: f64,
    /// `T · max 𝓜(|Db|^p̃)^{1/p̃}`: the value of a curve sitting on the worst cell.
    pub phi_singular: f64,
    /// Fraction of integrated starts with `Φ < cap`.
    pub finite_fraction: f64,
    /// Sample average of the finite `Φ`.
    pub jensen_average: f64,
    pub left_domain: usize,
}

impl Certificate {
    /// `finite_fraction` against another cap.
    pub fn fraction_below(&self, cap: f64) -> f64 {
        let done: Vec<f64> = self.integrals.iter().flatten().cloned().collect();
        if done.is_empty() {
            return 0.0;
        }
        done.iter().filter(|&&v| v < cap).count() as f64 / done.len() as f64
    }
}

/// Time slices (as representative times) on which the integrand is rebuilt.
fn integrand_times(spec: &FieldSpec) -> Vec<f64> {
    match &spec.kind {
        FieldKind::Catalog(_) => vec![0.0],
        FieldKind::Sampled(g) => (0..g.nt).map(|k| (k as f64 + 0.5) * g.t_max / g.nt as f64).collect(),
    }
}

/// `|Db|^p̃` averaged over each lattice cell by midpoint subsampling, so the
/// integrable singularities of the catalog fields stay finite.
fn db_power_grid(spec: &FieldSpec, lat: &Lattice, t: f64, opts: &CertifyOptions) -> Result<GridScalarField> {
    let n = lat.dim();
    let m = opts.subsamples.max(1);
    let total = m.pow(n as u32);
    let dom = &spec.domain;
    let values = (0..lat.len())
        .into_par_iter()
        .map(|i| {
            let c = lat.coord(i);
            let mut x = vec![0.0; n];
            let mut acc = 0.0;
            for k in 0..total {
                let mut r = k;
                for ax in 0..n {
                    let j = r % m;
                    r /= m;
                    let off = ((j as f64 + 0.5) / m as f64 - 0.5) * lat.step[ax];
                    x[ax] = (c[ax] + off).clamp(dom.lo[ax], dom.hi[ax]);
                }
                let jac = spec.jacobian(t, &x, opts.h)?;
                acc += jac.iter().map(|v| v * v).sum::<f64>().sqrt().powf(opts.p_tilde);
            }
            Ok(acc / total as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut g = GridScalarField::new(lat.clone(), values, None)?;
    g.time = Some(t);
    Ok(g)
}

/// `Φ(x̂) = ∫₀ᵀ [𝓜(|Db|^p̃)(s, X(s, x̂))]^{1/p̃} ds` for every start.
pub fn uniqueness_certificate(spec: &FieldSpec, starts: &[Vec<f64>], opts: &CertifyOptions) -> Result<Certificate> {
    let n = spec.dim();
    if !(opts.p_tilde > n as f64 && opts.p_tilde < opts.p) {
        return Err(Error::Invalid("p_tilde must lie strictly between n and p".into()));
    }
    let dom = &spec.domain;
    let lat = Lattice::covering(&dom.lo, &dom.hi, opts.h)?;
    let radii = match &opts.radii {
        Some(r) => r.clone(),
        None => radii_ladder(opts.h, dom.spatial_diameter()),
    };
    let times = integrand_times(spec);
    let maxima: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| {
            let g = db_power_grid(spec, &lat, t, opts)?;
            Ok(maximal_function(&g, &radii)?.values.iter().map(|v| v.powf(1.0 / opts.p_tilde)).collect())
        })
        .collect::<Result<_>>()?;
    let peak = maxima.iter().flatten().cloned().fold(0.0, f64::max);
    let phi_singular = dom.t_max * peak;
    let cap = opts.cap.unwrap_or(0.5 * phi_singular);

    let tol = default_tol_ode(spec, opts.ds)?;
    let slice = |s: f64| ((s / dom.t_max * times.len() as f64) as usize).min(times.len() - 1);
    let integrals: Vec<Option<f64>> = starts
        .par_iter()
        .map(|x| {
            let c = integrate_curve(spec, &SpaceTimePoint::new(0.0, x.clone()), 1, dom.t_max, opts.ds, Some(tol)).ok()?;
            if c.left_domain {
                return None;
            }
            let vals: Vec<f64> = c
                .samples
                .iter()
                .map(|p| lat.interpolate(&maxima[slice(p.x0)], &p.xhat).unwrap_or(peak))
                .collect();
            let mut phi = 0.0;
            for w in c.samples.windows(2).zip(vals.windows(2)) {
                phi += 0.5 * (w.0[1].x0 - w.0[0].x0) * (w.1[0] + w.1[1]);
            }
            Some(phi)
        })
        .collect();
    let done: Vec<f64> = integrals.iter().flatten().cloned().collect();
    let left_domain = integrals.len() - done.len();
    let finite: Vec<f64> = done.iter().cloned().filter(|&v| v < cap).collect();
    let finite_fraction = if done.is_empty() { 0.0 } else { finite.len() as f64 / done.len() as f64 };
    let jensen_average = if finite.is_empty() { 0.0 } else { finite.iter().sum::<f64>() / finite.len() as f64 };
    Ok(Certificate {
        start_points: starts.to_vec(),
        integrals,
        p: opts.p,
        p_tilde: opts.p_tilde,
        cap,
        phi_singular,
        finite_fraction,
        jensen_average,
        left_domain,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    /// `max_t log(1 + |c1(t) − c2(t)|/δ)` over common samples.
    pub lhs: f64,
    /// `C · Φ + slack`.
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
}

/// Checks `log(1 + |c1 − c2|/δ) ≤ C·Φ + slack` along two curves from one start.
pub fn separation_bound(
    c1: &IntegralCurve,
    c2: &IntegralCurve,
    cert_value: f64,
    fitted_c: f64,
    delta: f64,
    slack: f64,
) -> Result<SeparationReport> {
    if !(delta > 0.0) {
        return Err(Error::Invalid("delta must be positive".into()));
    }
    if c1.origin.dist(&c2.origin) > 1e-12 {
        return Err(Error::DifferentStart);
    }
    // Match samples by time; curves may use different steps.
    let mut lhs: f64 = 0.0;
    for p in &c1.samples {
        let k = c2
            .samples
            .partition_point(|q| (q.x0 - p.x0) * c2.direction as f64 <= 0.0)
            .saturating_sub(1);
        let q = &c2.samples[k];
        if (q.x0 - p.x0).abs() > 1e-9 * c1.ds.max(c2.ds) {
            continue;
        }
        lhs = lhs.max((1.0 + p.spatial_dist(q) / delta).ln());
    }
    let rhs = fitted_c * cert_value + slack;
    Ok(SeparationReport { lhs, rhs, margin: rhs - lhs, holds: lhs <= rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::CatalogField;
    use crate::grid::Domain;

    fn line(lo: f64, hi: f64, h: f64) -> Lattice {
        Lattice::covering(&[lo], &[hi], h).unwrap()
    }

    #[test]
    fn maximal_examples() {
        let one = GridScalarField::from_fn(line(0.0, 1.0, 1.0 / 64.0), |_| 1.0).unwrap();
        let m = maximal_function(&one, &radii_ladder(1.0 / 64.0, 1.0)).unwrap();
        assert!(m.values.iter().all(|v| (v - 1.0).abs() < 1e-12));

        let lat = line(0.0, 1.0, 1.0 / 256.0);
        let ind = GridScalarField::from_fn(lat.clone(), |x| if x[0] <= 0.5 { 1.0 } else { 0.0 }).unwrap();
        let m = maximal_function(&ind, &radii_ladder(1.0 / 256.0, 1.0)).unwrap();
        assert_eq!(m.values[lat.nearest(&[0.25])], 1.0);

        // (1/2r)∫|y| over [-r, r] = r/2, up to the node quadrature.
        let h = 1.0 / 1024.0;
        let lat = line(-1.0, 1.0, h);
        let abs = GridScalarField::from_fn(lat.clone(), |x| x[0].abs()).unwrap();
        let m = maximal_function(&abs, &[0.25, 0.5, 1.0]).unwrap();
        assert!((m.values[lat.nearest(&[0.0])] - 0.5).abs() < 2.0 * h);
        assert_eq!(maximal_function(&abs, &[]), Err(Error::EmptyRadii));
    }

    #[test]
    fn maximal_nd_matches_1d_on_constant_and_is_monotone() {
        let lat = Lattice::covering(&[0.0, 0.0], &[1.0, 1.0], 1.0 / 16.0).unwrap();
        let f = GridScalarField::from_fn(lat.clone(), |x| x[0] * x[1]).unwrap();
        let g = GridScalarField::from_fn(lat.clone(), |x| x[0] * x[1] + 0.1).unwrap();
        let radii = radii_ladder(1.0 / 16.0, 2f64.sqrt());
        let mf = maximal_function(&f, &radii).unwrap();
        let mg = maximal_function(&g, &radii).unwrap();
        for i in 0..lat.len() {
            assert!(mf.values[i] <= mg.values[i]);
            assert!(mf.values[i] >= f.values[i] - 2.0 / 16.0);
        }
    }

    #[test]
    fn lemma51_affine_and_refinement() {
        let affine = GridScalarField::from_fn(line(-1.0, 1.0, 1.0 / 64.0), |x| 3.0 * x[0] + 1.0).unwrap();
        let r = lemma51_check(&affine, 2.0, 4000, 7).unwrap();
        assert!((r.fitted_c - 1.0).abs() < 1e-9, "{r:?}");
        assert!(!r.not_sobolev);

        let c = |h: f64| {
            let f = GridScalarField::from_fn(line(-1.0, 1.0, h), |x| x[0].abs().powf(2.0 / 3.0)).unwrap();
            lemma51_check(&f, 2.0, 20000, 11).unwrap()
        };
        let (a, b) = (c(1.0 / 64.0), c(1.0 / 256.0));
        assert!((a.fitted_c / b.fitted_c - 1.0).abs() < 0.1, "{} {}", a.fitted_c, b.fitted_c);
        assert!(!a.not_sobolev && !b.not_sobolev);

        let jump = GridScalarField::from_fn(line(-1.0, 1.0, 1.0 / 256.0), |x| if x[0] < 0.0 { 0.0 } else { 1.0 }).unwrap();
        assert!(lemma51_check(&jump, 2.0, 2000, 3).unwrap().not_sobolev);
    }

    fn spec(f: CatalogField, lo: f64, hi: f64) -> FieldSpec {
        FieldSpec::catalog(f, Domain::interval(1.0, lo, hi)).unwrap()
    }

    #[test]
    fn certificate_constant_and_shear() {
        let s = spec(CatalogField::Constant { c: vec![0.5] }, -1.0, 1.0);
        let starts: Vec<Vec<f64>> = (0..10).map(|k| vec![-0.9 + 0.1 * k as f64]).collect();
        let c = uniqueness_certificate(&s, &starts, &CertifyOptions::new(1, 2.0, 1.0 / 64.0, 1.0 / 64.0)).unwrap();
        assert!(c.integrals.iter().all(|v| *v == Some(0.0)));

        let s = spec(CatalogField::Shear, -4.0, 4.0);
        let c = uniqueness_certificate(&s, &starts, &CertifyOptions::new(1, 2.0, 1.0 / 64.0, 1.0 / 64.0)).unwrap();
        for v in c.integrals.iter().flatten() {
            assert!((v - 1.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn certificate_holder_off_axis_and_cap_monotonicity() {
        let s = spec(CatalogField::Holder { alpha: 2.0 / 3.0, p: 2.0 }, -1.0, 3.0);
        let starts: Vec<Vec<f64>> = (0..100).map(|k| vec![0.005 + 0.01 * k as f64]).collect();
        let mut opts = CertifyOptions::new(1, 2.0, 1.0 / 128.0, 1.0 / 128.0);
        opts.p_tilde = 1.5;
        let c = uniqueness_certificate(&s, &starts, &opts).unwrap();
        assert!(c.finite_fraction >= 0.97, "{}", c.finite_fraction);
        // Φ grows like log(1/x̂) towards the axis, so refusals sit next to it.
        for (x, v) in c.start_points.iter().zip(&c.integrals) {
            assert!(v.unwrap() < c.cap || x[0] < 0.02);
        }
        assert!(c.jensen_average.is_finite() && c.jensen_average > 0.0);
        let caps = [c.cap * 2.0, c.cap, c.cap / 2.0, c.cap / 8.0];
        let fr: Vec<f64> = caps.iter().map(|&k| c.fraction_below(k)).collect();
        assert!(fr.windows(2).all(|w| w[1] <= w[0]), "{fr:?}");

        // Curves reaching the axis before T may stay there or leave: refused.
        let hit = uniqueness_certificate(&s, &[vec![-0.01], vec![0.0]], &opts).unwrap();
        assert!(hit.integrals.iter().all(|v| v.unwrap() > hit.cap), "{hit:?}");
    }

    #[test]
    fn separation_examples() {
        let s = spec(CatalogField::Shear, -4.0, 4.0);
        let x = SpaceTimePoint::planar(0.0, 0.3);
        let c1 = integrate_curve(&s, &x, 1, 1.0, 1.0 / 64.0, None).unwrap();
        let r = separation_bound(&c1, &c1, 1.0, 1.0, 1e-6, 0.0).unwrap();
        assert!(r.holds && r.lhs == 0.0);
        let mut c2 = integrate_curve(&s, &SpaceTimePoint::planar(0.0, 0.3 + 1e-14), 1, 1.0, 1.0 / 64.0, None).unwrap();
        c2.origin = x.clone();
        assert!(separation_bound(&c1, &c2, 1.0, 1.0, 1e-6, 0.0).unwrap().holds);
        let y = integrate_curve(&s, &SpaceTimePoint::planar(0.0, 0.2), 1, 1.0, 1.0 / 64.0, None).unwrap();
        assert_eq!(separation_bound(&c1, &y, 1.0, 1.0, 1e-6, 0.0), Err(Error::DifferentStart));
    }
}

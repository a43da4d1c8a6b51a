//! Continuity equation `∂ₜu + div(v̂ u) = 0`: backward characteristics,
//! upwind finite volumes and the weak-form residual.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FieldSpec, SpaceTimePoint};
use crate::flow::{default_tol_ode, integrate_curve};
use crate::grid::Lattice;
use crate::sobolev::GridScalarField;

/// Density slices `u(tₖ, ·)` on a spatial lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub lattice: Lattice,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub mass: Vec<f64>,
    /// Net mass that left through the boundary during `(t_{k−1}, t_k]`; zero for `k = 0`.
    pub boundary_flux: Vec<f64>,
    /// Nodes whose characteristic left the domain (Lagrangian only).
    pub mask: Option<Vec<Vec<bool>>>,
}

impl DensityField {
    fn new(lattice: Lattice, times: Vec<f64>, values: Vec<Vec<f64>>, boundary_flux: Vec<f64>, mask: Option<Vec<Vec<bool>>>) -> Self {
        let vol = lattice.cell_volume();
        let mass = values.iter().map(|s| s.iter().sum::<f64>() * vol).collect();
        DensityField { lattice, times, values, mass, boundary_flux, mask }
    }

    pub fn slice(&self, k: usize) -> GridScalarField {
        GridScalarField { lattice: self.lattice.clone(), values: self.values[k].clone(), time: Some(self.times[k]) }
    }

    /// Closed-form or reference solution sampled on the same nodes and times.
    pub fn from_fn(lattice: Lattice, times: &[f64], u: impl Fn(f64, &[f64]) -> f64) -> Self {
        let values = times
            .iter()
            .map(|&t| (0..lattice.len()).map(|i| u(t, &lattice.coord(i))).collect())
            .collect();
        DensityField::new(lattice, times.to_vec(), values, vec![0.0; times.len()], None)
    }

    /// Per-slice values as CSV: `t,x1..xn,u`.
    pub fn to_csv(&self) -> String {
        let n = self.lattice.dim();
        let mut s = String::from("t");
        for k in 1..=n {
            s.push_str(&format!(",x{k}"));
        }
        s.push_str(",u\n");
        for (t, slice) in self.times.iter().zip(&self.values) {
            for (i, v) in slice.iter().enumerate() {
                s.push_str(&format!("{t}"));
                for c in self.lattice.coord(i) {
                    s.push_str(&format!(",{c}"));
                }
                s.push_str(&format!(",{v}\n"));
            }
        }
        s
    }
}

fn check_times(times: &[f64], t_max: f64) -> Result<()> {
    if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) || *times.last().unwrap() > t_max * (1.0 + 1e-12) {
        return Err(Error::Invalid("output times must increase inside [0, T]".into()));
    }
    Ok(())
}

/// `u(t, y) = u₀(X(0; t, y)) · exp(−∫₀ᵗ div v̂)` along backward characteristics.
pub fn lagrangian_solve(spec: &FieldSpec, u0: &GridScalarField, times: &[f64], ds: f64) -> Result<DensityField> {
    check_times(times, spec.domain.t_max)?;
    if !(ds > 0.0) {
        return Err(Error::Invalid("ds must be positive".into()));
    }
    let lat = &u0.lattice;
    let h = lat.step.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut values = Vec::with_capacity(times.len());
    let mut mask = Vec::with_capacity(times.len());
    for &t in times {
        let steps = (t / ds).ceil().max(1.0);
        let dse = t / steps;
        let tol = if t > 0.0 { Some(default_tol_ode(spec, dse)?) } else { None };
        let slice: Vec<(f64, bool)> = (0..lat.len())
            .into_par_iter()
            .map(|i| {
                let y = lat.coord(i);
                if t == 0.0 {
                    return (u0.values[i], false);
                }
                let c = match integrate_curve(spec, &SpaceTimePoint::new(t, y), -1, t, dse, tol) {
                    Ok(c) if !c.left_domain => c,
                    _ => return (0.0, true),
                };
                let mut div = Vec::with_capacity(c.samples.len());
                for p in &c.samples {
                    match spec.divergence(p.x0, &p.xhat, h) {
                        Ok(d) => div.push(d),
                        Err(_) => return (0.0, true),
                    }
                }
                let mut integral = 0.0;
                for k in 1..c.samples.len() {
                    integral += 0.5 * (c.samples[k - 1].x0 - c.samples[k].x0) * (div[k - 1] + div[k]);
                }
                let foot = c.endpoint();
                match lat.interpolate(&u0.values, &foot.xhat) {
                    Some(v) => (v * (-integral).exp(), false),
                    None => (0.0, true),
                }
            })
            .collect();
        values.push(slice.iter().map(|s| s.0).collect());
        mask.push(slice.iter().map(|s| s.1).collect());
    }
    Ok(DensityField::new(lat.clone(), times.to_vec(), values, vec![0.0; times.len()], Some(mask)))
}

/// First-order upwind finite volumes on the cells of `u0`'s lattice. Inflow
/// boundaries carry zero density; outflow is tracked in `boundary_flux`.
pub fn eulerian_solve(spec: &FieldSpec, u0: &GridScalarField, times: &[f64], dt_cfl: f64) -> Result<DensityField> {
    check_times(times, spec.domain.t_max)?;
    let lat = &u0.lattice;
    let n = lat.dim();
    let hmin = lat.step.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(dt_cfl > 0.0) || dt_cfl > hmin / (2.0 * spec.sup_norm_hint) * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt: dt_cfl, limit: hmin / (2.0 * spec.sup_norm_hint) });
    }
    let dom = &spec.domain;
    let vol = lat.cell_volume();
    let mut u = u0.values.clone();
    let mut t = 0.0;
    let mut values = Vec::with_capacity(times.len());
    let mut fluxes = Vec::with_capacity(times.len());
    let mut next = vec![0.0; u.len()];
    let mut v = vec![0.0; n];
    for &target in times {
        let mut out = 0.0;
        while t < target - 1e-12 * target.max(1.0) {
            let dt = dt_cfl.min(target - t);
            next.copy_from_slice(&u);
            for ax in 0..n {
                let area = vol / lat.step[ax];
                for i in 0..lat.len() {
                    // Face on the upper side of cell i along `ax`.
                    let mut x = lat.coord(i);
                    x[ax] += 0.5 * lat.step[ax];
                    for (k, xk) in x.iter_mut().enumerate() {
                        *xk = xk.clamp(dom.lo[k], dom.hi[k]);
                    }
                    spec.velocity(t, &x, &mut v)?;
                    let right = lat.shifted(i, ax, 1);
                    let ur = right.map_or(0.0, |j| u[j]);
                    let f = if v[ax] >= 0.0 { v[ax] * u[i] } else { v[ax] * ur };
                    next[i] -= dt * f / lat.step[ax];
                    match right {
                        Some(j) => next[j] += dt * f / lat.step[ax],
                        None => out += dt * f * area,
                    }
                    if lat.shifted(i, ax, -1).is_none() {
                        let mut x = lat.coord(i);
                        x[ax] = (x[ax] - 0.5 * lat.step[ax]).clamp(dom.lo[ax], dom.hi[ax]);
                        for (k, xk) in x.iter_mut().enumerate() {
                            *xk = xk.clamp(dom.lo[k], dom.hi[k]);
                        }
                        spec.velocity(t, &x, &mut v)?;
                        let f = if v[ax] >= 0.0 { 0.0 } else { v[ax] * u[i] };
                        next[i] += dt * f / lat.step[ax];
                        out -= dt * f * area;
                    }
                }
            }
            std::mem::swap(&mut u, &mut next);
            t += dt;
        }
        t = target;
        values.push(u.clone());
        fluxes.push(out);
    }
    Ok(DensityField::new(lat.clone(), times.to_vec(), values, fluxes, None))
}

/// `φ(t, x) = (1 − r²)ᵈ` with `r² = ((t − t_c)/τ)² + |x − x_c|²/ρ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: SpaceTimePoint,
    pub radius: f64,
    pub t_radius: f64,
    pub degree: u32,
}

impl TestFunction {
    pub fn new(center: SpaceTimePoint, radius: f64, t_radius: f64, degree: u32) -> Result<Self> {
        if degree < 3 || !(radius > 0.0) || !(t_radius > 0.0) {
            return Err(Error::Invalid("bump needs degree ≥ 3 and positive radii".into()));
        }
        Ok(TestFunction { center, radius, t_radius, degree })
    }

    fn r2(&self, t: f64, x: &[f64]) -> f64 {
        let dt = (t - self.center.x0) / self.t_radius;
        let dx: f64 = x.iter().zip(&self.center.xhat).map(|(a, b)| (a - b).powi(2)).sum();
        dt * dt + dx / (self.radius * self.radius)
    }

    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        let r2 = self.r2(t, x);
        if r2 >= 1.0 { 0.0 } else { (1.0 - r2).powi(self.degree as i32) }
    }

    /// `∂ₜφ + v̂·∇φ` at `(t, x)`.
    pub fn transport_derivative(&self, t: f64, x: &[f64], v: &[f64]) -> f64 {
        let r2 = self.r2(t, x);
        if r2 >= 1.0 {
            return 0.0;
        }
        let g = -2.0 * self.degree as f64 * (1.0 - r2).powi(self.degree as i32 - 1);
        let mut d = g * (t - self.center.x0) / (self.t_radius * self.t_radius);
        for k in 0..x.len() {
            d += v[k] * g * (x[k] - self.center.xhat[k]) / (self.radius * self.radius);
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakReport {
    /// `|∬ u (∂ₜφ + v̂·∇φ) + ∫ u₀ φ(0, ·)|` per test.
    pub residuals: Vec<f64>,
    pub tol: f64,
    pub not_a_solution: bool,
}

/// Weak-form residual of `u` against each test; trapezoid in time over the
/// slices of `u`, node sums in space.
pub fn weak_residual(u: &DensityField, spec: &FieldSpec, u0: &GridScalarField, tests: &[TestFunction], tol: f64) -> Result<WeakReport> {
    if u0.lattice != u.lattice {
        return Err(Error::LatticeMismatch);
    }
    let lat = &u.lattice;
    let n = lat.dim();
    let dom = &spec.domain;
    let t_end = *u.times.last().ok_or(Error::EmptyDomain)?;
    if u.times[0] != 0.0 {
        return Err(Error::Invalid("density must start at t = 0".into()));
    }
    let vol = lat.cell_volume();
    let mut residuals = Vec::with_capacity(tests.len());
    for phi in tests {
        let inside = (0..n).all(|k| phi.center.xhat[k] - phi.radius > dom.lo[k] && phi.center.xhat[k] + phi.radius < dom.hi[k]);
        if !inside || phi.center.x0 + phi.t_radius > t_end {
            return Err(Error::SupportLeak);
        }
        let inner: Vec<f64> = u
            .times
            .par_iter()
            .zip(&u.values)
            .map(|(&t, slice)| {
                let mut v = vec![0.0; n];
                let mut s = 0.0;
                for (i, &ui) in slice.iter().enumerate() {
                    if ui == 0.0 {
                        continue;
                    }
                    let x = lat.coord(i);
                    if phi.r2(t, &x) >= 1.0 {
                        continue;
                    }
                    spec.velocity(t, &x, &mut v)?;
                    s += ui * phi.transport_derivative(t, &x, &v);
                }
                Ok(s * vol)
            })
            .collect::<Result<_>>()?;
        let mut lhs = 0.0;
        for k in 1..inner.len() {
            lhs += 0.5 * (u.times[k] - u.times[k - 1]) * (inner[k] + inner[k - 1]);
        }
        let rhs: f64 = -(0..lat.len()).map(|i| u0.values[i] * phi.value(0.0, &lat.coord(i))).sum::<f64>() * vol;
        residuals.push((lhs - rhs).abs());
    }
    let not_a_solution = residuals.iter().any(|&r| r > tol);
    Ok(WeakReport { residuals, tol, not_a_solution })
}

/// Slice-wise `∑|a − b|·hⁿ`.
pub fn compare_solutions(a: &DensityField, b: &DensityField) -> Result<Vec<f64>> {
    if a.lattice != b.lattice || a.times != b.times {
        return Err(Error::LatticeMismatch);
    }
    let vol = a.lattice.cell_volume();
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>() * vol)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::CatalogField;
    use crate::grid::Domain;

    fn spec(f: CatalogField, lo: f64, hi: f64) -> FieldSpec {
        FieldSpec::catalog(f, Domain::interval(1.0, lo, hi)).unwrap()
    }

    fn top_hat(x: f64) -> f64 {
        if (0.2..=0.6).contains(&x) { 1.0 } else { 0.0 }
    }

    fn bump(x: f64) -> f64 {
        let r = (x - 0.3) / 0.2;
        if r.abs() < 1.0 { (1.0 - r * r).powi(4) } else { 0.0 }
    }

    fn grid(h: f64, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> GridScalarField {
        GridScalarField::from_fn(Lattice::covering(&[lo], &[hi], h).unwrap(), |x| f(x[0])).unwrap()
    }

    fn times(dt: f64) -> Vec<f64> {
        crate::grid::time_grid(1.0, dt)
    }

    #[test]
    fn static_and_translation() {
        let s = spec(CatalogField::Constant { c: vec![0.0] }, 0.0, 1.0);
        let u0 = grid(1.0 / 64.0, 0.0, 1.0, bump);
        let l = lagrangian_solve(&s, &u0, &[0.0, 0.5, 1.0], 1.0 / 64.0).unwrap();
        let e = eulerian_solve(&s, &u0, &[0.0, 0.5, 1.0], 1.0 / 256.0).unwrap();
        for k in 0..3 {
            assert_eq!(l.values[k], u0.values);
            assert_eq!(e.values[k], u0.values);
        }

        let s = spec(CatalogField::Constant { c: vec![0.5] }, -1.0, 2.0);
        let u0 = grid(1.0 / 64.0, -1.0, 2.0, bump);
        let l = lagrangian_solve(&s, &u0, &[0.0, 1.0], 1.0 / 64.0).unwrap();
        let exact = DensityField::from_fn(u0.lattice.clone(), &[0.0, 1.0], |t, x| bump(x[0] - 0.5 * t));
        let err = compare_solutions(&l, &exact).unwrap();
        assert!(err[1] < 1e-12, "{err:?}");
        assert!((l.mass[1] - l.mass[0]).abs() < 1e-12);
    }

    #[test]
    fn eulerian_translation_is_first_order() {
        let s = spec(CatalogField::Constant { c: vec![0.5] }, -1.0, 2.0);
        let err = |h: f64| {
            let u0 = grid(h, -1.0, 2.0, bump);
            let e = eulerian_solve(&s, &u0, &[1.0], h / 4.0).unwrap();
            let exact = DensityField::from_fn(u0.lattice.clone(), &[1.0], |_, x| bump(x[0] - 0.5));
            compare_solutions(&e, &exact).unwrap()[0]
        };
        let r = err(1.0 / 64.0) / err(1.0 / 128.0);
        assert!((1.6..=2.4).contains(&r), "{r}");
    }

    #[test]
    fn eulerian_mass_balance_and_cfl() {
        let s = spec(CatalogField::Shear, -1.0, 1.0);
        let u0 = grid(1.0 / 32.0, -1.0, 1.0, |x| 1.0 + x);
        let e = eulerian_solve(&s, &u0, &times(0.125), 1.0 / 128.0).unwrap();
        for k in 1..e.times.len() {
            let bal = e.mass[k] - e.mass[k - 1] + e.boundary_flux[k];
            assert!(bal.abs() < 1e-13, "{bal}");
        }
        assert!(matches!(eulerian_solve(&s, &u0, &[1.0], 0.1), Err(Error::CflViolation { .. })));
    }

    #[test]
    fn lagrangian_shear_matches_closed_form() {
        let s = spec(CatalogField::Shear, -1.0, 4.0);
        let exact = |t: f64, x: &[f64]| top_hat(x[0] * (-t).exp()) * (-t).exp();
        let err = |h: f64| {
            let u0 = grid(h, -1.0, 4.0, top_hat);
            let ts = times(0.125);
            let l = lagrangian_solve(&s, &u0, &ts, h).unwrap();
            let ex = DensityField::from_fn(u0.lattice.clone(), &ts, exact);
            compare_solutions(&l, &ex).unwrap().iter().sum::<f64>()
        };
        let (a, b) = (err(1.0 / 64.0), err(1.0 / 128.0));
        assert!(a < 0.2 && (1.6..=2.4).contains(&(a / b)), "{a} {b}");
    }

    #[test]
    fn weak_residual_examples() {
        let s = spec(CatalogField::Constant { c: vec![0.5] }, -1.0, 2.0);
        let h = 1.0 / 128.0;
        let u0 = grid(h, -1.0, 2.0, bump);
        let ts = times(h);
        let tests: Vec<TestFunction> = (0..5)
            .map(|k| TestFunction::new(SpaceTimePoint::new(0.1 * k as f64, vec![0.2 + 0.15 * k as f64]), 0.3, 0.4, 3).unwrap())
            .collect();
        let zero = DensityField::from_fn(u0.lattice.clone(), &ts, |_, _| 0.0);
        let z0 = grid(h, -1.0, 2.0, |_| 0.0);
        assert!(weak_residual(&zero, &s, &z0, &tests, 1e-12).unwrap().residuals.iter().all(|&r| r == 0.0));

        let exact = DensityField::from_fn(u0.lattice.clone(), &ts, |t, x| bump(x[0] - 0.5 * t));
        let r = weak_residual(&exact, &s, &u0, &tests, 0.02).unwrap();
        assert!(!r.not_a_solution, "{r:?}");

        let frozen = DensityField::from_fn(u0.lattice.clone(), &ts, |_, x| bump(x[0]));
        assert!(weak_residual(&frozen, &s, &u0, &tests, 0.02).unwrap().not_a_solution);

        let leak = TestFunction::new(SpaceTimePoint::new(0.2, vec![1.9]), 0.3, 0.1, 3).unwrap();
        assert_eq!(weak_residual(&exact, &s, &u0, &[leak], 0.02), Err(Error::SupportLeak));
    }

    #[test]
    fn compare_is_a_pseudometric() {
        let lat = Lattice::covering(&[0.0], &[1.0], 0.25).unwrap();
        let a = DensityField::from_fn(lat.clone(), &[0.0, 1.0], |t, x| t + x[0]);
        let b = DensityField::from_fn(lat.clone(), &[0.0, 1.0], |t, x| t * x[0]);
        assert_eq!(compare_solutions(&a, &a).unwrap(), vec![0.0, 0.0]);
        assert_eq!(compare_solutions(&a, &b).unwrap(), compare_solutions(&b, &a).unwrap());
        let c = DensityField::from_fn(lat, &[0.0], |_, _| 0.0);
        assert_eq!(compare_solutions(&a, &c), Err(Error::LatticeMismatch));
    }
}

//! Directional Lipschitz constants on flow tubes and McShane extensions in `d_λ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{euclid, write_grid_text, SpaceTimePoint};
use crate::flow::{FbCurve, FlowTube};
use crate::grid::Lattice;
use crate::metric::{lip_on_nodes, multi_source_distances, LipMetric, MetricGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    OnTube { params: Vec<usize> },
    OnGrid { lattice: Lattice },
    Points,
}

/// Finite values attached to space-time points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledFunction {
    pub points: Vec<SpaceTimePoint>,
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl SampledFunction {
    pub fn new(points: Vec<SpaceTimePoint>, values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::Invalid("points and values differ in length".into()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { point: points[k].to_vec() });
        }
        Ok(SampledFunction { points, values, provenance })
    }

    /// `f` evaluated on every tube point.
    pub fn on_tube(tube: &FlowTube, f: impl Fn(usize, &SpaceTimePoint) -> f64) -> Result<Self> {
        let values = tube.members.iter().zip(&tube.points).map(|(m, p)| f(m.0, p)).collect();
        SampledFunction::new(
            tube.points.clone(),
            values,
            Provenance::OnTube { params: tube.param_subset.clone() },
        )
    }

    /// Graph node of every point; every point must be a node.
    pub fn nodes(&self, g: &MetricGraph) -> Result<Vec<usize>> {
        self.points
            .iter()
            .map(|p| g.node_of(p).ok_or_else(|| Error::Invalid(format!("point {:?} is not a graph node", p.to_vec()))))
            .collect()
    }

    /// Best Euclidean (space-time) Lipschitz constant on the sample.
    pub fn euclid_lip(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.points.len() {
            for j in i + 1..self.points.len() {
                let d = self.points[i].dist(&self.points[j]);
                if d > 0.0 {
                    best = best.max((self.values[i] - self.values[j]).abs() / d);
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipProfile {
    pub lambdas: Vec<f64>,
    pub lip_values: Vec<f64>,
    /// From forward-backward distances.
    pub lip0: f64,
    pub euclid_lip: f64,
}

/// `Lip_λ(φ)` along a decreasing schedule plus `Lip₀(φ)` from flow-only distances.
pub fn lip_profile(g: &MetricGraph, phi: &SampledFunction, schedule: &[f64]) -> Result<LipProfile> {
    if schedule.is_empty() || schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Invalid("schedule must be strictly decreasing".into()));
    }
    let nodes = phi.nodes(g)?;
    let mut lip_values = Vec::with_capacity(schedule.len());
    for &l in schedule {
        let gl = g.with_lambda(l)?;
        lip_values.push(lip_on_nodes(&gl, &nodes, &phi.values, LipMetric::Lambda)?.value);
    }
    let lip0 = lip_on_nodes(g, &nodes, &phi.values, LipMetric::Zero)?.value;
    Ok(LipProfile { lambdas: schedule.to_vec(), lip_values, lip0, euclid_lip: phi.euclid_lip() })
}

/// Largest scheduled `λ` with `Lip_λ ≤ Lip₀ + ε`.
pub fn select_lambda_bar(profile: &LipProfile, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Invalid("epsilon must be positive".into()));
    }
    profile
        .lambdas
        .iter()
        .zip(&profile.lip_values)
        .find(|(_, &v)| v <= profile.lip0 + epsilon)
        .map(|(&l, _)| l)
        .ok_or(Error::NeedSmallerLambda)
}

/// `φ̃` on every graph node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extension {
    pub values: Vec<f64>,
    pub lambda: f64,
    pub l_ext: f64,
}

/// `φ̃(x) = min_y [φ(y) + L·d_λ(x, y)]` over all nodes, by one multi-source sweep.
pub fn mcshane_extend(g: &MetricGraph, phi: &SampledFunction, l_ext: f64) -> Result<Extension> {
    if phi.points.is_empty() {
        return Err(Error::EmptyDomain);
    }
    if !(l_ext > 0.0) {
        return Err(Error::Invalid("L_ext must be positive".into()));
    }
    let nodes = phi.nodes(g)?;
    let pmin = phi.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let sources: Vec<(usize, f64)> = nodes.iter().zip(&phi.values).map(|(&i, &v)| (i, (v - pmin) / l_ext)).collect();
    let d = multi_source_distances(g, &sources, LipMetric::Lambda);
    let values = d.iter().map(|&x| pmin + l_ext * x).collect();
    Ok(Extension { values, lambda: g.lambda, l_ext })
}

impl Extension {
    /// Value at `p`: exact on nodes, otherwise linear inside the nearest slice
    /// (inverse-distance over nearby nodes when `n > 1`).
    pub fn eval(&self, g: &MetricGraph, p: &SpaceTimePoint) -> Result<f64> {
        if let Some(i) = g.node_of(p) {
            return Ok(self.values[i]);
        }
        let (k, _) = g.slice_of(p.x0);
        let s = &g.slice_nodes[k];
        if s.is_empty() {
            return Err(Error::OutOfDomain { point: p.to_vec() });
        }
        let pos = |i: u32| &g.node_x[i as usize * g.n..(i as usize + 1) * g.n];
        if g.n == 1 {
            let j = s.partition_point(|&i| pos(i)[0] < p.xhat[0]);
            if j == 0 || j == s.len() {
                return Err(Error::OutOfDomain { point: p.to_vec() });
            }
            let (a, b) = (s[j - 1], s[j]);
            let (xa, xb) = (pos(a)[0], pos(b)[0]);
            let w = (p.xhat[0] - xa) / (xb - xa);
            return Ok((1.0 - w) * self.values[a as usize] + w * self.values[b as usize]);
        }
        let mut near: Vec<(f64, u32)> = s.iter().map(|&i| (euclid(pos(i), &p.xhat), i)).collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let near = &near[..near.len().min(1 << g.n)];
        let (mut num, mut den) = (0.0, 0.0);
        for &(d, i) in near {
            let w = 1.0 / d.max(1e-300);
            num += w * self.values[i as usize];
            den += w;
        }
        Ok(num / den)
    }

    /// Values on a regular lattice at the given times (for grid output).
    pub fn sample_on(&self, g: &MetricGraph, times: &[f64], lattice: &Lattice) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(times.len() * lattice.len());
        for &t in times {
            for i in 0..lattice.len() {
                let p = SpaceTimePoint::new(t, lattice.coord(i));
                out.push(self.eval(g, &p).unwrap_or(f64::NAN));
            }
        }
        Ok(out)
    }

    /// Grid file with one value column, one slice per graph time; nodes the
    /// extension cannot reach by interpolation are written as `NaN`.
    pub fn to_grid_text(&self, g: &MetricGraph, lattice: &Lattice) -> Result<String> {
        let vals = self.sample_on(g, &g.times, lattice)?;
        Ok(write_grid_text(g.t_max, g.times.len(), lattice, 1, &vals))
    }
}

/// Worst forward-backward difference quotient found by [`verify_extension`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbWorst {
    pub curve: usize,
    pub s: f64,
    pub t: f64,
    /// The sample of the worst pair whose value deviates most from its neighbours.
    pub point: SpaceTimePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionReport {
    /// (i) `max |φ̃ − φ|` on the sample.
    pub restriction_error: f64,
    /// (ii) `max |φ̃(γ(s)) − φ̃(γ(t))| / |s − t|` over the supplied curves.
    pub fb_quotient: f64,
    pub fb_worst: Option<FbWorst>,
    pub fb_bound: f64,
    /// (iii) Largest Euclidean quotient over graph edges and its bound `3L/λ̄ + slack`.
    pub euclid_lip: f64,
    pub euclid_bound: f64,
    /// Edge-wise `|φ̃(u) − φ̃(w)| ≤ L·cost(u, w)`.
    pub edges_ok: bool,
    pub pass_restriction: bool,
    pub pass_fb: bool,
    pub pass_euclid: bool,
}

impl ExtensionReport {
    pub fn pass(&self) -> bool {
        self.pass_restriction && self.pass_fb && self.pass_euclid && self.edges_ok
    }
}

/// Run the three extension checks; failures are recorded, never raised.
pub fn verify_extension(
    g: &MetricGraph,
    ext: &Extension,
    phi: &SampledFunction,
    fb_curves: &[FbCurve],
    slack: f64,
) -> Result<ExtensionReport> {
    let mut restriction_error: f64 = 0.0;
    for (p, &v) in phi.points.iter().zip(&phi.values) {
        restriction_error = restriction_error.max((ext.eval(g, p)? - v).abs());
    }
    let mut fb_quotient: f64 = 0.0;
    let mut fb_worst = None;
    for (ci, c) in fb_curves.iter().enumerate() {
        let vals: Vec<f64> = c.samples.iter().map(|p| ext.eval(g, p)).collect::<Result<_>>()?;
        for i in 0..vals.len() {
            for j in i + 1..vals.len() {
                let q = (vals[i] - vals[j]).abs() / ((j - i) as f64 * c.ds);
                if q > fb_quotient {
                    fb_quotient = q;
                    // Blame the endpoint that disagrees more with its own neighbours.
                    let bump = |k: usize| {
                        let l = if k > 0 { vals[k - 1] } else { vals[k + 1] };
                        let r = if k + 1 < vals.len() { vals[k + 1] } else { vals[k - 1] };
                        (vals[k] - 0.5 * (l + r)).abs()
                    };
                    let k = if vals.len() > 1 && bump(i) >= bump(j) { i } else { j };
                    fb_worst = Some(FbWorst {
                        curve: ci,
                        s: i as f64 * c.ds,
                        t: j as f64 * c.ds,
                        point: c.samples[k].clone(),
                    });
                }
            }
        }
    }
    let mut euclid_lip: f64 = 0.0;
    let mut edges_ok = true;
    for u in 0..g.node_count() {
        let pu = g.node_point(u);
        for (w, base, kind) in g.edges(u) {
            let dphi = (ext.values[u] - ext.values[w]).abs();
            let cost = if kind == 0 { base / g.lambda } else { base };
            if dphi > ext.l_ext * cost * (1.0 + 1e-9) + 1e-12 {
                edges_ok = false;
            }
            let d = pu.dist(&g.node_point(w));
            if d > 0.0 {
                euclid_lip = euclid_lip.max(dphi / d);
            }
        }
    }
    let fb_bound = ext.l_ext + slack;
    let euclid_bound = 3.0 * ext.l_ext / ext.lambda + slack;
    Ok(ExtensionReport {
        restriction_error,
        fb_quotient,
        fb_worst,
        fb_bound,
        euclid_lip,
        euclid_bound,
        edges_ok,
        pass_restriction: restriction_error <= 1e-9,
        pass_fb: fb_quotient <= fb_bound,
        pass_euclid: euclid_lip <= euclid_bound,
    })
}

/// `φ(x₀, x₁) = ∛(x₀ − ∛x₁)`: constant on every cubic multi-flow curve, but
/// only `⅓`-Hölder along the axis.
pub fn holder_phi(x0: f64, x1: f64) -> f64 {
    (x0 - x1.cbrt()).cbrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    /// `(t, |φ(t,0) − φ(0,0)| / t)`.
    pub axis_quotients: Vec<(f64, f64)>,
    /// Least-squares slope of `log q` against `log t`.
    pub slope: f64,
    /// Largest quotient along the sampled multi-flow curves.
    pub multiflow_max: f64,
}

/// Axis quotients at `ts` and multi-flow quotients on `(s, (s+a)³)` for the
/// given parameters and times.
pub fn holder_counterexample(ts: &[f64], params: &[f64], times: &[f64]) -> HolderReport {
    let axis_quotients: Vec<(f64, f64)> = ts
        .iter()
        .map(|&t| (t, (holder_phi(t, 0.0) - holder_phi(0.0, 0.0)).abs() / t))
        .collect();
    let xs: Vec<f64> = axis_quotients.iter().map(|q| q.0.ln()).collect();
    let ys: Vec<f64> = axis_quotients.iter().map(|q| q.1.ln()).collect();
    let slope = ls_slope(&xs, &ys);
    let mut multiflow_max: f64 = 0.0;
    for &a in params {
        let vals: Vec<f64> = times.iter().map(|&s| holder_phi(s, (s + a).powi(3))).collect();
        for i in 0..times.len() {
            for j in i + 1..times.len() {
                multiflow_max = multiflow_max.max((vals[i] - vals[j]).abs() / (times[j] - times[i]).abs());
            }
        }
    }
    HolderReport { axis_quotients, slope, multiflow_max }
}

pub(crate) fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{CatalogField, FieldSpec};
    use crate::flow::{build_flowtube, covering_multiflow};
    use crate::grid::Domain;
    use crate::metric::{GraphConfig, MetricGraph};

    fn cubic_setup(h: f64) -> (FieldSpec, crate::flow::MultiFlow, MetricGraph) {
        let spec = FieldSpec::catalog(CatalogField::Cubic, Domain::interval(1.0, -1.0, 1.0)).unwrap();
        let mf = covering_multiflow(&spec, h, h, true).unwrap();
        let g = MetricGraph::from_multiflow(&spec, &mf, &GraphConfig::new(h, h), 1.0).unwrap();
        (spec, mf, g)
    }

    fn two_branch_tube(mf: &crate::flow::MultiFlow) -> (FlowTube, usize) {
        let a0 = mf.find_param(&[0.0]).unwrap();
        let a1 = mf.find_param(&[-1.0]).unwrap();
        (build_flowtube(mf, &[a0, a1]).unwrap(), a1)
    }

    #[test]
    fn constant_phi_profile_is_zero_and_selects_first_lambda() {
        let (_, mf, g) = cubic_setup(1.0 / 16.0);
        let (tube, _) = two_branch_tube(&mf);
        let phi = SampledFunction::on_tube(&tube, |_, _| 2.5).unwrap();
        let p = lip_profile(&g, &phi, &[1.0, 0.5, 0.25]).unwrap();
        assert_eq!(p.lip_values, vec![0.0; 3]);
        assert_eq!(p.lip0, 0.0);
        assert_eq!(select_lambda_bar(&p, 0.01).unwrap(), 1.0);
        let ext = mcshane_extend(&g, &phi, 1.0).unwrap();
        for i in phi.nodes(&g).unwrap() {
            assert_eq!(ext.values[i], 2.5);
        }
        assert!(ext.values.iter().all(|&v| v >= 2.5));
    }

    #[test]
    fn select_lambda_bar_threshold_scan() {
        let p = LipProfile {
            lambdas: vec![1.0, 0.5, 0.25, 0.125],
            lip_values: vec![2.0, 1.4, 1.1, 1.02],
            lip0: 1.0,
            euclid_lip: 3.0,
        };
        assert_eq!(select_lambda_bar(&p, 0.1).unwrap(), 0.25);
        assert_eq!(select_lambda_bar(&p, 0.05).unwrap(), 0.125);
        assert_eq!(select_lambda_bar(&p, 0.01), Err(Error::NeedSmallerLambda));
    }

    #[test]
    fn time_coordinate_profile_is_one() {
        let (_, mf, g) = cubic_setup(1.0 / 16.0);
        let lo = mf.find_param(&[-1.0]).unwrap();
        let hi = mf.find_param(&[0.0]).unwrap();
        let subset: Vec<usize> = (lo..=hi).step_by(4).collect();
        let tube = build_flowtube(&mf, &subset).unwrap();
        let phi = SampledFunction::on_tube(&tube, |_, p| p.x0).unwrap();
        let p = lip_profile(&g, &phi, &[1.0, 0.5, 0.25]).unwrap();
        for v in &p.lip_values {
            assert!((v - 1.0).abs() < 1e-12, "{v}");
        }
        assert!((p.lip0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_branch_profile_is_monotone_and_lip0_is_one() {
        let (_, mf, g) = cubic_setup(1.0 / 32.0);
        let (tube, a1) = two_branch_tube(&mf);
        let phi = SampledFunction::on_tube(&tube, |c, _| if c == a1 { 1.0 } else { 0.0 }).unwrap();
        let sched = [1.0, 0.5, 0.25, 0.125];
        let p = lip_profile(&g, &phi, &sched).unwrap();
        assert!(p.lip_values.windows(2).all(|w| w[1] <= w[0]), "{:?}", p.lip_values);
        assert!((p.lip0 - 1.0).abs() < 1e-12, "{}", p.lip0);
        assert!(p.lip_values.iter().all(|&v| v >= p.lip0));
    }

    #[test]
    fn single_source_extension_is_a_distance_map() {
        let (_, mf, g) = cubic_setup(1.0 / 16.0);
        let g = g.with_lambda(0.5).unwrap();
        let x = mf.point(mf.find_param(&[0.0]).unwrap(), 4).unwrap();
        let phi = SampledFunction::new(vec![x.clone()], vec![0.0], Provenance::Points).unwrap();
        let ext = mcshane_extend(&g, &phi, 2.0).unwrap();
        for i in (0..g.node_count()).step_by(97) {
            let d = crate::metric::distance_lambda(&g, &x, &g.node_point(i)).unwrap().value;
            assert!((ext.values[i] - 2.0 * d).abs() < 1e-9);
        }
    }

    #[test]
    fn two_branch_extension_and_fault_injection() {
        let (spec, mf, g) = cubic_setup(1.0 / 32.0);
        let (tube, a1) = two_branch_tube(&mf);
        let phi = SampledFunction::on_tube(&tube, |c, _| if c == a1 { 1.0 } else { 0.0 }).unwrap();
        let g = g.with_lambda(1.0 / 512.0).unwrap();
        let ext = mcshane_extend(&g, &phi, 1.1).unwrap();
        let axis = crate::flow::integrate_curve(&spec, &SpaceTimePoint::planar(0.0, 0.0), 1, 1.0, 1.0 / 32.0, None)
            .unwrap()
            .into_fb();
        let r = verify_extension(&g, &ext, &phi, &[axis.clone()], 0.05).unwrap();
        assert!(r.pass(), "{r:?}");
        assert!(r.fb_quotient <= 1.1 + 1e-9);
        assert_eq!(ext.eval(&g, &SpaceTimePoint::planar(0.0, 0.0)).unwrap(), 0.0);
        assert_eq!(ext.eval(&g, &SpaceTimePoint::planar(1.0, 0.0)).unwrap(), 1.0);

        let mut bad = ext.clone();
        let victim = g.node_of(&SpaceTimePoint::planar(0.5, 0.0)).unwrap();
        bad.values[victim] += 0.5;
        let r = verify_extension(&g, &bad, &phi, &[axis], 0.05).unwrap();
        assert!(!r.pass_fb);
        assert_eq!(r.fb_worst.unwrap().point, SpaceTimePoint::planar(0.5, 0.0));
        assert!(!r.edges_ok);
    }

    #[test]
    fn mcshane_pointwise_ordering() {
        let (_, mf, g) = cubic_setup(1.0 / 16.0);
        let g = g.with_lambda(0.25).unwrap();
        let (tube, a1) = two_branch_tube(&mf);
        let phi = SampledFunction::on_tube(&tube, |c, p| if c == a1 { 1.0 + p.x0 } else { p.x0 * 0.5 }).unwrap();
        let ext = mcshane_extend(&g, &phi, 3.0).unwrap();
        let nodes = phi.nodes(&g).unwrap();
        for (k, &y) in nodes.iter().enumerate().step_by(5) {
            let d = multi_source_distances(&g, &[(y, 0.0)], LipMetric::Lambda);
            for &x in nodes.iter().step_by(7) {
                assert!(ext.values[x] <= phi.values[k] + 3.0 * d[x] + 1e-12);
            }
        }
    }

    #[test]
    fn holder_counterexample_examples() {
        let ts: Vec<f64> = (3..=10).map(|k| 0.5f64.powi(k)).collect();
        let params: Vec<f64> = (1..=10).flat_map(|k| [k as f64 * 0.1, -(k as f64) * 0.1]).collect();
        let times: Vec<f64> = (0..=16).map(|k| k as f64 / 16.0).collect();
        let r = holder_counterexample(&ts, &params, &times);
        assert!((r.slope + 2.0 / 3.0).abs() < 1e-9, "{}", r.slope);
        assert!(r.multiflow_max <= 1e-8, "{}", r.multiflow_max);
    }
}

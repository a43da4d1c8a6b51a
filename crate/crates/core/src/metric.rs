//! Layered space-time graphs whose shortest paths approximate `d_λ` and `d₀`.
//!
//! Nodes are the samples `Z(t_i, a_j)` of a multi-flow (coincident samples
//! merged), flow edges join consecutive samples of one curve at cost `Δt`, and
//! transversal edges join neighbouring samples inside a time slice at cost
//! `ℓ / (λ‖v‖∞)`. Query points off the node set are attached as virtual nodes.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::ops::Deref;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{euclid, FieldSpec, SpaceTimePoint};
use crate::flow::{covering_multiflow, FbCurve, MultiFlow};

/// Coincidence tolerance for merging nodes and recognising queries as nodes.
pub const MERGE_TOL: f64 = 1e-12;

/// Finite stand-in for `+∞` in written artifacts: anything above `10⁶·T`.
pub fn inf_sentinel(t_max: f64) -> f64 {
    2e6 * t_max
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub h: f64,
    pub dt: f64,
    /// Append the integral curves the closed-form family leaves out (the axis for `cubic`).
    pub saturate: bool,
    pub node_cap: usize,
}

impl GraphConfig {
    pub fn new(h: f64, dt: f64) -> Self {
        GraphConfig { h, dt, saturate: true, node_cap: 4_000_000 }
    }
}

/// λ-independent part of the graph.
#[derive(Debug)]
pub struct Topology {
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub t_max: f64,
    pub vnorm: f64,
    pub times: Vec<f64>,
    /// Slice index and spatial position of each node.
    pub node_slice: Vec<u32>,
    pub node_x: Vec<f64>,
    /// Nodes of each slice; sorted by position when `n = 1`.
    pub slice_nodes: Vec<Vec<u32>>,
    offsets: Vec<u32>,
    targets: Vec<u32>,
    /// Flow edges: elapsed time. Transversal edges: `ℓ / ‖v‖∞`.
    base: Vec<f64>,
    /// `+1` forward flow, `-1` backward flow, `0` transversal.
    kind: Vec<i8>,
    index: HashMap<(u32, Vec<i64>), u32>,
}

/// The graph at a fixed `λ ∈ (0, 1]`; cheap to re-weight with [`MetricGraph::with_lambda`].
#[derive(Debug, Clone)]
pub struct MetricGraph {
    topo: Arc<Topology>,
    pub lambda: f64,
}

impl Deref for MetricGraph {
    type Target = Topology;
    fn deref(&self) -> &Topology {
        &self.topo
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(Error::Invalid(format!("lambda must lie in (0, 1], got {lambda}")))
    }
}

fn key(slice: usize, x: &[f64]) -> (u32, Vec<i64>) {
    (slice as u32, x.iter().map(|v| (v / MERGE_TOL).round() as i64).collect())
}

/// Build the graph over the covering multi-flow of `spec`.
pub fn build_metric_graph(spec: &FieldSpec, cfg: &GraphConfig, lambda: f64) -> Result<MetricGraph> {
    check_lambda(lambda)?;
    if !(cfg.h > 0.0 && cfg.dt > 0.0) {
        return Err(Error::Invalid("h and dt must be positive".into()));
    }
    let mf = covering_multiflow(spec, cfg.h, cfg.dt, cfg.saturate)?;
    MetricGraph::from_multiflow(spec, &mf, cfg, lambda)
}

impl MetricGraph {
    pub fn from_multiflow(spec: &FieldSpec, mf: &MultiFlow, cfg: &GraphConfig, lambda: f64) -> Result<MetricGraph> {
        check_lambda(lambda)?;
        let n = spec.dim();
        let samples: usize = mf.positions.iter().map(|c| c.iter().filter(|p| p.is_some()).count()).sum();
        if samples > cfg.node_cap {
            return Err(Error::GraphTooLarge { nodes: samples, cap: cfg.node_cap });
        }
        let vnorm = spec.sup_norm_hint;
        let ns = mf.times.len();

        // Node ids per (curve, slice), merging exact coincidences.
        let mut index: HashMap<(u32, Vec<i64>), u32> = HashMap::new();
        let mut node_slice = Vec::new();
        let mut node_x: Vec<f64> = Vec::new();
        let mut id_of = vec![vec![u32::MAX; ns]; mf.len()];
        for k in 0..ns {
            for c in 0..mf.len() {
                if let Some(x) = &mf.positions[c][k] {
                    let x: Vec<f64> = x.iter().map(|v| if *v == 0.0 { 0.0 } else { *v }).collect();
                    let id = *index.entry(key(k, &x)).or_insert_with(|| {
                        node_slice.push(k as u32);
                        node_x.extend_from_slice(&x);
                        (node_slice.len() - 1) as u32
                    });
                    id_of[c][k] = id;
                }
            }
        }
        let nodes = node_slice.len();
        let mut slice_nodes: Vec<Vec<u32>> = vec![Vec::new(); ns];
        for (i, &k) in node_slice.iter().enumerate() {
            slice_nodes[k as usize].push(i as u32);
        }
        if n == 1 {
            for s in &mut slice_nodes {
                s.sort_by(|&a, &b| node_x[a as usize].total_cmp(&node_x[b as usize]).then(a.cmp(&b)));
            }
        }

        let pos = |i: u32| &node_x[i as usize * n..(i as usize + 1) * n];
        let mut edges: Vec<(u32, u32, f64, i8)> = Vec::new();
        let push_pair = |a: u32, b: u32, base: f64, kind: i8, edges: &mut Vec<(u32, u32, f64, i8)>| {
            if a != b {
                edges.push((a, b, base, kind));
                edges.push((b, a, base, -kind));
            }
        };
        for c in 0..mf.len() {
            for k in 0..ns - 1 {
                let (a, b) = (id_of[c][k], id_of[c][k + 1]);
                if a != u32::MAX && b != u32::MAX {
                    push_pair(a, b, mf.times[k + 1] - mf.times[k], 1, &mut edges);
                }
            }
        }
        for k in 0..ns {
            let s = &slice_nodes[k];
            if n == 1 {
                for w in s.windows(2) {
                    let l = (pos(w[1])[0] - pos(w[0])[0]).abs();
                    push_pair(w[0], w[1], l / vnorm, 0, &mut edges);
                }
            } else {
                transversal_nd(mf, &id_of, k, &pos, vnorm, &mut |a, b, base| push_pair(a, b, base, 0, &mut edges));
            }
        }
        edges.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.3.cmp(&b.3)).then(a.2.total_cmp(&b.2)));
        edges.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1 && a.3 == b.3);
        let mut offsets = vec![0u32; nodes + 1];
        for e in &edges {
            offsets[e.0 as usize + 1] += 1;
        }
        for i in 0..nodes {
            offsets[i + 1] += offsets[i];
        }
        let topo = Topology {
            n,
            h: cfg.h,
            dt: cfg.dt,
            t_max: spec.domain.t_max,
            vnorm,
            times: mf.times.clone(),
            node_slice,
            node_x,
            slice_nodes,
            offsets,
            targets: edges.iter().map(|e| e.1).collect(),
            base: edges.iter().map(|e| e.2).collect(),
            kind: edges.iter().map(|e| e.3).collect(),
            index,
        };
        Ok(MetricGraph { topo: Arc::new(topo), lambda })
    }

    /// Same nodes and edges, transversal costs re-weighted for `lambda`.
    pub fn with_lambda(&self, lambda: f64) -> Result<MetricGraph> {
        check_lambda(lambda)?;
        Ok(MetricGraph { topo: Arc::clone(&self.topo), lambda })
    }
}

/// Transversal edges in `n ≥ 2`: parameter-lattice axis and diagonal neighbours,
/// plus nearest-node links for curves outside the lattice.
fn transversal_nd<'p>(
    mf: &MultiFlow,
    id_of: &[Vec<u32>],
    k: usize,
    pos: &dyn Fn(u32) -> &'p [f64],
    vnorm: f64,
    add: &mut dyn FnMut(u32, u32, f64),
) {
    let n = mf.dim();
    let lattice_curves = mf.len() - mf.saturation;
    let mut offsets: Vec<Vec<isize>> = Vec::new();
    for i in 0..n {
        let mut o = vec![0; n];
        o[i] = 1;
        offsets.push(o);
        for j in i + 1..n {
            for sj in [-1, 1] {
                let mut o = vec![0; n];
                o[i] = 1;
                o[j] = sj;
                offsets.push(o);
            }
        }
    }
    let link = |a: u32, b: u32, add: &mut dyn FnMut(u32, u32, f64)| {
        if a != u32::MAX && b != u32::MAX && a != b {
            add(a, b, euclid(pos(a), pos(b)) / vnorm);
        }
    };
    match &mf.param_lattice {
        Some(lat) if lat.len() == lattice_curves => {
            for c in 0..lattice_curves {
                for o in &offsets {
                    let mut m = lat.multi_index(c);
                    let mut ok = true;
                    for (ax, d) in o.iter().enumerate() {
                        let j = m[ax] as isize + d;
                        if j < 0 || j >= lat.shape[ax] as isize {
                            ok = false;
                            break;
                        }
                        m[ax] = j as usize;
                    }
                    if ok {
                        link(id_of[c][k], id_of[lat.flat_index(&m)][k], add);
                    }
                }
            }
        }
        _ => {
            let present: Vec<u32> = (0..lattice_curves).map(|c| id_of[c][k]).filter(|&i| i != u32::MAX).collect();
            for &a in &present {
                for b in nearest(&present, pos(a), pos, offsets.len() + 1) {
                    link(a, b, add);
                }
            }
        }
    }
    let present: Vec<u32> = (0..mf.len()).map(|c| id_of[c][k]).filter(|&i| i != u32::MAX).collect();
    for c in lattice_curves..mf.len() {
        let a = id_of[c][k];
        if a != u32::MAX {
            for b in nearest(&present, pos(a), pos, 2 * offsets.len() + 1) {
                link(a, b, add);
            }
        }
    }
}

fn nearest<'p>(cands: &[u32], x: &[f64], pos: &dyn Fn(u32) -> &'p [f64], k: usize) -> Vec<u32> {
    let mut d: Vec<(f64, u32)> = cands.iter().map(|&c| (euclid(pos(c), x), c)).collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|p| p.1).collect()
}

impl Topology {
    pub fn node_count(&self) -> usize {
        self.node_slice.len()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn node_point(&self, i: usize) -> SpaceTimePoint {
        SpaceTimePoint::new(
            self.times[self.node_slice[i] as usize],
            self.node_x[i * self.n..(i + 1) * self.n].to_vec(),
        )
    }

    fn pos(&self, i: usize) -> &[f64] {
        &self.node_x[i * self.n..(i + 1) * self.n]
    }

    /// Edges leaving node `i` as `(target, base cost, kind)`.
    pub fn edges(&self, i: usize) -> impl Iterator<Item = (usize, f64, i8)> + '_ {
        let (a, b) = (self.offsets[i] as usize, self.offsets[i + 1] as usize);
        (a..b).map(move |e| (self.targets[e] as usize, self.base[e], self.kind[e]))
    }

    /// Nearest time slice and its offset.
    pub fn slice_of(&self, t: f64) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        let k = self.times.partition_point(|&s| s < t);
        for j in [k.saturating_sub(1), k.min(self.times.len() - 1)] {
            let d = (self.times[j] - t).abs();
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }

    /// Node at exactly `p` (up to [`MERGE_TOL`]).
    pub fn node_of(&self, p: &SpaceTimePoint) -> Option<usize> {
        let (k, off) = self.slice_of(p.x0);
        if off > MERGE_TOL {
            return None;
        }
        if let Some(&i) = self.index.get(&key(k, &p.xhat)) {
            return Some(i as usize);
        }
        self.slice_nodes[k]
            .iter()
            .find(|&&i| euclid(self.pos(i as usize), &p.xhat) <= MERGE_TOL)
            .map(|&i| i as usize)
    }

    /// Nodes of slice `k` a virtual point at `x` links to: the bracketing
    /// nodes in one dimension, the nearest few otherwise.
    fn attachments(&self, k: usize, x: &[f64]) -> Vec<usize> {
        let s = &self.slice_nodes[k];
        if s.is_empty() {
            return Vec::new();
        }
        if self.n == 1 {
            let j = s.partition_point(|&i| self.node_x[i as usize] < x[0]);
            let mut out = Vec::new();
            if j > 0 {
                out.push(s[j - 1] as usize);
            }
            if j < s.len() {
                out.push(s[j] as usize);
            }
            out
        } else {
            let k_near = 2 * self.n * self.n + 1;
            nearest(s, x, &|i| self.pos(i as usize), k_near).into_iter().map(|i| i as usize).collect()
        }
    }

    /// Largest node-to-nearest-node gap in a slice (a density diagnostic).
    pub fn max_gap(&self) -> f64 {
        if self.n != 1 {
            return f64::NAN;
        }
        let mut g: f64 = 0.0;
        for s in &self.slice_nodes {
            for w in s.windows(2) {
                g = g.max(self.node_x[w[1] as usize] - self.node_x[w[0] as usize]);
            }
        }
        g
    }
}

/// Where a query point sits in the graph.
#[derive(Debug, Clone)]
enum Anchor {
    Node(usize),
    /// Slice, spatial position and attachment nodes with their lengths.
    Virtual { slice: usize, x: Vec<f64>, links: Vec<(usize, f64)> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Lambda,
    FlowOnly,
}

impl MetricGraph {
    fn cost(&self, base: f64, kind: i8) -> f64 {
        if kind == 0 {
            base / self.lambda
        } else {
            base
        }
    }

    fn anchor(&self, p: &SpaceTimePoint, mode: Mode) -> Result<(Anchor, f64)> {
        if p.dim() != self.n {
            return Err(Error::Invalid("query dimension differs from the graph".into()));
        }
        let (k, off) = self.slice_of(p.x0);
        if let Some(i) = self.node_of(&SpaceTimePoint::new(self.times[k], p.xhat.clone())) {
            return Ok((Anchor::Node(i), off));
        }
        if mode == Mode::FlowOnly {
            // Flow-only queries snap to the nearest node within h, or have no anchor.
            let near = self.attachments(k, &p.xhat);
            let best = near
                .into_iter()
                .map(|i| (euclid(self.pos(i), &p.xhat), i))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            return match best {
                Some((d, i)) if d <= self.h => Ok((Anchor::Node(i), off.hypot(d))),
                _ => Ok((Anchor::Virtual { slice: k, x: p.xhat.clone(), links: Vec::new() }, off)),
            };
        }
        let links = self
            .attachments(k, &p.xhat)
            .into_iter()
            .map(|i| (i, euclid(self.pos(i), &p.xhat) / self.vnorm))
            .collect();
        Ok((Anchor::Virtual { slice: k, x: p.xhat.clone(), links }, off))
    }
}

#[derive(PartialEq)]
struct Entry {
    d: f64,
    node: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        o.d.total_cmp(&self.d).then_with(|| o.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Reusable label-setting search state.
#[derive(Debug, Default)]
pub struct Search {
    dist: Vec<f64>,
    pred: Vec<u32>,
    pred_edge: Vec<u32>,
    done: Vec<bool>,
    touched: Vec<u32>,
}

impl Search {
    pub fn new(nodes: usize) -> Self {
        Search {
            dist: vec![f64::INFINITY; nodes],
            pred: vec![u32::MAX; nodes],
            pred_edge: vec![u32::MAX; nodes],
            done: vec![false; nodes],
            touched: Vec::new(),
        }
    }

    fn reset(&mut self, nodes: usize) {
        if self.dist.len() != nodes {
            *self = Search::new(nodes);
            return;
        }
        for &i in &self.touched {
            let i = i as usize;
            self.dist[i] = f64::INFINITY;
            self.pred[i] = u32::MAX;
            self.pred_edge[i] = u32::MAX;
            self.done[i] = false;
        }
        self.touched.clear();
    }

    pub fn dist(&self, i: usize) -> f64 {
        self.dist[i]
    }

    /// Label-setting sweep from `sources` (node, initial label). `visit` sees
    /// every settled node in order and may stop the sweep by returning `false`.
    fn run(&mut self, g: &MetricGraph, sources: &[(usize, f64)], mode: Mode, mut visit: impl FnMut(usize, f64) -> bool) {
        self.reset(g.node_count());
        let mut heap = BinaryHeap::new();
        for &(s, d0) in sources {
            if d0 < self.dist[s] {
                if self.dist[s].is_infinite() {
                    self.touched.push(s as u32);
                }
                self.dist[s] = d0;
                heap.push(Entry { d: d0, node: s as u32 });
            }
        }
        while let Some(Entry { d, node }) = heap.pop() {
            let u = node as usize;
            if self.done[u] || d > self.dist[u] {
                continue;
            }
            self.done[u] = true;
            if !visit(u, d) {
                return;
            }
            let (a, b) = (g.offsets[u] as usize, g.offsets[u + 1] as usize);
            for e in a..b {
                let kind = g.kind[e];
                if kind == 0 && mode == Mode::FlowOnly {
                    continue;
                }
                let v = g.targets[e] as usize;
                let nd = d + g.cost(g.base[e], kind);
                if nd < self.dist[v] {
                    if self.dist[v].is_infinite() {
                        self.touched.push(v as u32);
                    }
                    self.dist[v] = nd;
                    self.pred[v] = node;
                    self.pred_edge[v] = e as u32;
                    heap.push(Entry { d: nd, node: v as u32 });
                }
            }
        }
    }
}

/// A graph distance with its witness path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceResult {
    /// `f64::INFINITY` when no path exists (flow-only queries).
    pub value: f64,
    pub path: Vec<SpaceTimePoint>,
    /// Edge kind between consecutive path points: `±1` flow, `0` horizontal.
    pub kinds: Vec<i8>,
    pub lambda: f64,
    pub h: f64,
    pub dt: f64,
    /// Time offset from snapping the queries to slices (plus the spatial snap for flow-only queries).
    pub snap_err: f64,
    /// Parameter time spent on horizontal edges (`length / ‖v‖∞`).
    pub horizontal_time: f64,
}

impl DistanceResult {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }

    /// Value for written artifacts: the sentinel replaces `+∞`.
    pub fn file_value(&self, t_max: f64) -> f64 {
        if self.value.is_finite() {
            self.value
        } else {
            inf_sentinel(t_max)
        }
    }

    /// Maximal runs `(kind, edges)` of the witness.
    pub fn runs(&self) -> Vec<(i8, usize)> {
        let mut out: Vec<(i8, usize)> = Vec::new();
        for &k in &self.kinds {
            match out.last_mut() {
                Some((kk, c)) if *kk == k => *c += 1,
                _ => out.push((k, 1)),
            }
        }
        out
    }

    /// Flow-only witness as a forward-backward curve (uniform steps required).
    pub fn to_fb_curve(&self) -> Result<FbCurve> {
        if self.kinds.iter().any(|&k| k == 0) {
            return Err(Error::Invalid("witness has horizontal edges".into()));
        }
        if self.path.len() < 2 {
            return Err(Error::Invalid("witness has no edges".into()));
        }
        let ds = (self.path[1].x0 - self.path[0].x0).abs();
        for w in self.path.windows(2) {
            if ((w[1].x0 - w[0].x0).abs() - ds).abs() > 1e-12 {
                return Err(Error::Invalid("witness steps are not uniform".into()));
            }
        }
        Ok(FbCurve { samples: self.path.clone(), ds, profile: self.kinds.clone() })
    }
}

/// Deterministic order so that `d(x, y)` and `d(y, x)` run the same search.
fn ordered<'a>(x: &'a SpaceTimePoint, y: &'a SpaceTimePoint) -> (&'a SpaceTimePoint, &'a SpaceTimePoint, bool) {
    let (a, b) = (x.to_vec(), y.to_vec());
    let swap = a.iter().zip(&b).map(|(p, q)| p.total_cmp(q)).find(|o| *o != Ordering::Equal) == Some(Ordering::Greater);
    if swap {
        (y, x, true)
    } else {
        (x, y, false)
    }
}

fn point_query(g: &MetricGraph, x: &SpaceTimePoint, y: &SpaceTimePoint, mode: Mode, search: &mut Search) -> Result<DistanceResult> {
    let (x, y, swapped) = ordered(x, y);
    let (ax, ox) = g.anchor(x, mode)?;
    let (ay, oy) = g.anchor(y, mode)?;
    let inv = if mode == Mode::Lambda { 1.0 / g.lambda } else { 0.0 };
    let mut result = DistanceResult {
        value: f64::INFINITY,
        path: Vec::new(),
        kinds: Vec::new(),
        lambda: g.lambda,
        h: g.h,
        dt: g.dt,
        snap_err: ox.max(oy),
        horizontal_time: 0.0,
    };
    let sources: Vec<(usize, f64)> = match &ax {
        Anchor::Node(i) => vec![(*i, 0.0)],
        Anchor::Virtual { links, .. } => links.iter().map(|&(i, b)| (i, b * inv)).collect(),
    };
    let targets: Vec<(usize, f64)> = match &ay {
        Anchor::Node(i) => vec![(*i, 0.0)],
        Anchor::Virtual { links, .. } => links.iter().map(|&(i, b)| (i, b * inv)).collect(),
    };
    // A direct horizontal segment is itself a competitor.
    let mut direct = f64::INFINITY;
    if let (Anchor::Virtual { slice: s1, x: x1, .. }, Anchor::Virtual { slice: s2, x: x2, .. }) = (&ax, &ay) {
        if s1 == s2 && mode == Mode::Lambda {
            direct = euclid(x1, x2) / g.vnorm * inv;
        }
    }
    if let (Anchor::Node(i), Anchor::Node(j)) = (&ax, &ay) {
        if i == j {
            direct = 0.0;
        }
    }
    let mut best = direct;
    let mut best_t: Option<(usize, f64)> = None;
    let tcost: HashMap<usize, f64> = targets.iter().copied().collect();
    let mut remaining = targets.len();
    if direct > 0.0 && !sources.is_empty() && !targets.is_empty() {
        search.run(g, &sources, mode, |u, d| {
            if d >= best {
                return false;
            }
            if let Some(&c) = tcost.get(&u) {
                remaining -= 1;
                if d + c < best {
                    best = d + c;
                    best_t = Some((u, c));
                }
                if remaining == 0 {
                    return false;
                }
            }
            true
        });
    }
    result.value = best;
    if !best.is_finite() {
        return Ok(result);
    }
    // Witness: source point, graph path, target point.
    let mut pts: Vec<SpaceTimePoint> = Vec::new();
    let mut kinds: Vec<i8> = Vec::new();
    let mut htime = 0.0;
    match best_t {
        None => {
            pts.push(x.clone());
            if direct > 0.0 {
                pts.push(y.clone());
                kinds.push(0);
                htime = direct * g.lambda;
            }
        }
        Some((t, tc)) => {
            let mut chain = vec![t];
            let mut edges = Vec::new();
            let mut u = t;
            while search.pred[u] != u32::MAX {
                edges.push(search.pred_edge[u] as usize);
                u = search.pred[u] as usize;
                chain.push(u);
            }
            chain.reverse();
            edges.reverse();
            if let Anchor::Virtual { links, .. } = &ax {
                pts.push(x.clone());
                kinds.push(0);
                htime += links.iter().find(|l| l.0 == chain[0]).map_or(0.0, |l| l.1);
            }
            for (idx, &nd) in chain.iter().enumerate() {
                pts.push(g.node_point(nd));
                if idx < edges.len() {
                    let e = edges[idx];
                    kinds.push(g.kind[e]);
                    if g.kind[e] == 0 {
                        htime += g.base[e];
                    }
                }
            }
            if matches!(ay, Anchor::Virtual { .. }) {
                pts.push(y.clone());
                kinds.push(0);
                htime += tc / inv.max(f64::MIN_POSITIVE);
            }
        }
    }
    if swapped {
        pts.reverse();
        kinds = kinds.iter().rev().map(|k| -k).collect();
    }
    result.path = pts;
    result.kinds = kinds;
    result.horizontal_time = htime;
    Ok(result)
}

/// `d_λ(x, y)` on the graph.
pub fn distance_lambda(g: &MetricGraph, x: &SpaceTimePoint, y: &SpaceTimePoint) -> Result<DistanceResult> {
    let mut s = Search::new(g.node_count());
    let r = point_query(g, x, y, Mode::Lambda, &mut s)?;
    if !r.is_finite() {
        return Err(Error::Unreachable);
    }
    Ok(r)
}

/// Same as [`distance_lambda`] reusing a search buffer.
pub fn distance_lambda_with(g: &MetricGraph, x: &SpaceTimePoint, y: &SpaceTimePoint, search: &mut Search) -> Result<DistanceResult> {
    let r = point_query(g, x, y, Mode::Lambda, search)?;
    if !r.is_finite() {
        return Err(Error::Unreachable);
    }
    Ok(r)
}

/// Minimal forward-backward duration from `x` to `y` over flow edges only;
/// `+∞` when no forward-backward path joins them.
pub fn fb_distance(g: &MetricGraph, x: &SpaceTimePoint, y: &SpaceTimePoint) -> Result<DistanceResult> {
    let mut s = Search::new(g.node_count());
    let mut r = point_query(g, x, y, Mode::FlowOnly, &mut s)?;
    r.lambda = 0.0;
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitStatus {
    Finite,
    Divergent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroOptions {
    /// Successive-increment threshold for a finite verdict (default `2(h + dt)`).
    pub tol_limit: Option<f64>,
    /// Value cap for a divergent verdict (default `100·T/λ_min`).
    pub cap: Option<f64>,
    /// Horizontal-time floor for a divergent verdict (default `2h/‖v‖∞`).
    pub horiz_tol: Option<f64>,
}

impl Default for ZeroOptions {
    fn default() -> Self {
        ZeroOptions { tol_limit: None, cap: None, horiz_tol: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroResult {
    pub status: LimitStatus,
    /// Last value of the nondecreasing sequence `d_λₖ`.
    pub value: f64,
    pub per_lambda: Vec<DistanceResult>,
    /// Flow-only cross-check.
    pub fb: DistanceResult,
    pub tol_limit: f64,
    pub cap: f64,
}

/// `d₀(x, y)` as the limit of `d_λ` along a strictly decreasing schedule.
///
/// Divergent when the last value exceeds the cap, or when the witness keeps
/// spending horizontal time (`> horiz_tol`, not shrinking with `λ`) over the
/// last two entries. Finite when the last increment is within `tol_limit`.
pub fn distance_zero(
    g: &MetricGraph,
    x: &SpaceTimePoint,
    y: &SpaceTimePoint,
    schedule: &[f64],
    opts: &ZeroOptions,
) -> Result<ZeroResult> {
    if schedule.len() < 2 || schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Invalid("schedule must be strictly decreasing with at least two entries".into()));
    }
    let lmin = *schedule.last().unwrap();
    let tol_limit = opts.tol_limit.unwrap_or(2.0 * (g.h + g.dt));
    let cap = opts.cap.unwrap_or(100.0 * g.t_max / lmin);
    let horiz_tol = opts.horiz_tol.unwrap_or(2.0 * g.h / g.vnorm);
    let mut search = Search::new(g.node_count());
    let mut per = Vec::with_capacity(schedule.len());
    for &l in schedule {
        let gl = g.with_lambda(l)?;
        per.push(distance_lambda_with(&gl, x, y, &mut search)?);
    }
    let fb = fb_distance(g, x, y)?;
    let m = per.len();
    let (last, prev) = (&per[m - 1], &per[m - 2]);
    let persistent = last.horizontal_time > horiz_tol && last.horizontal_time > 0.75 * prev.horizontal_time;
    let status = if last.value > cap || persistent {
        LimitStatus::Divergent
    } else if (last.value - prev.value).abs() <= tol_limit {
        LimitStatus::Finite
    } else {
        return Err(Error::ScheduleTooShort);
    };
    Ok(ZeroResult { status, value: last.value, per_lambda: per, fb, tol_limit, cap })
}

/// Best Lipschitz constant from precomputed distances; `+∞` pairs contribute 0.
/// Returns the constant and the realizing pair (first in index order on ties).
pub fn lip_constant(phi: &[f64], dist: &[Vec<f64>]) -> Result<(f64, Option<(usize, usize)>)> {
    if phi.len() < 2 || dist.len() != phi.len() {
        return Err(Error::Invalid("need at least two points and a full distance table".into()));
    }
    let mut best = 0.0;
    let mut at = None;
    for i in 0..phi.len() {
        for j in i + 1..phi.len() {
            let dphi = (phi[i] - phi[j]).abs();
            let d = dist[i][j];
            if d == 0.0 {
                if dphi > 0.0 {
                    return Err(Error::DegeneratePair { first: i, second: j });
                }
                continue;
            }
            if !d.is_finite() {
                continue;
            }
            let r = dphi / d;
            if r > best {
                best = r;
                at = Some((i, j));
            }
        }
    }
    Ok((best, at))
}

/// Which distance a graph Lipschitz computation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LipMetric {
    Lambda,
    /// Forward-backward (flow-only) distance, i.e. `d₀`.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipResult {
    pub value: f64,
    /// Realizing pair as indices into the input nodes, with its distance.
    pub pair: Option<(usize, usize, f64)>,
}

/// `max |φ(x) − φ(y)| / d(x, y)` over graph nodes, one pruned sweep per source.
pub fn lip_on_nodes(g: &MetricGraph, nodes: &[usize], phi: &[f64], metric: LipMetric) -> Result<LipResult> {
    if nodes.len() != phi.len() || nodes.len() < 2 {
        return Err(Error::Invalid("need at least two points with values".into()));
    }
    let mut slot: HashMap<usize, Vec<usize>> = HashMap::new();
    for (k, &i) in nodes.iter().enumerate() {
        slot.entry(i).or_default().push(k);
    }
    for ks in slot.values() {
        for w in ks.windows(2) {
            if phi[w[0]] != phi[w[1]] {
                return Err(Error::DegeneratePair { first: w[0], second: w[1] });
            }
        }
    }
    let mode = match metric {
        LipMetric::Lambda => Mode::Lambda,
        LipMetric::Zero => Mode::FlowOnly,
    };
    let (pmin, pmax) = phi.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    // Sources in order; each sweep stops once no remaining pair can beat the
    // running best, which is only shared within a sweep so the result stays
    // independent of scheduling.
    let per_source: Vec<(f64, Option<(usize, usize, f64)>)> = (0..nodes.len())
        .into_par_iter()
        .map_init(
            || Search::new(g.node_count()),
            |search, k| {
                let spread = (phi[k] - pmin).max(pmax - phi[k]);
                let mut best = 0.0f64;
                let mut at = None;
                if spread == 0.0 {
                    return (best, at);
                }
                search.run(g, &[(nodes[k], 0.0)], mode, |u, d| {
                    if best > 0.0 && d > spread / best {
                        return false;
                    }
                    if let Some(ks) = slot.get(&u) {
                        for &j in ks {
                            if j <= k || d == 0.0 {
                                continue;
                            }
                            let r = (phi[k] - phi[j]).abs() / d;
                            if r > best {
                                best = r;
                                at = Some((k, j, d));
                            }
                        }
                    }
                    true
                });
                (best, at)
            },
        )
        .collect();
    // The pruned sweep of source k only sees partners j > k; pairs (j, k) with
    // j < k were covered by the sweep of j.
    let mut value = 0.0;
    let mut pair = None;
    for (b, at) in per_source {
        if b > value {
            value = b;
            pair = at;
        }
    }
    Ok(LipResult { value, pair })
}

/// Multi-source sweep: `min_s (offset_s + d(s, ·))` at every node.
pub fn multi_source_distances(g: &MetricGraph, sources: &[(usize, f64)], metric: LipMetric) -> Vec<f64> {
    let mode = match metric {
        LipMetric::Lambda => Mode::Lambda,
        LipMetric::Zero => Mode::FlowOnly,
    };
    let mut s = Search::new(g.node_count());
    s.run(g, sources, mode, |_, _| true);
    s.dist.clone()
}

/// Slack `h/λ + dt` attached to continuum comparisons (constant `C_d = 1`).
pub fn slack(h: f64, dt: f64, lambda: f64) -> f64 {
    h / lambda + dt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::CatalogField;
    use crate::grid::Domain;

    fn cubic(h: f64, lambda: f64) -> MetricGraph {
        let spec = FieldSpec::catalog(CatalogField::Cubic, Domain::interval(1.0, -1.0, 1.0)).unwrap();
        build_metric_graph(&spec, &GraphConfig::new(h, h), lambda).unwrap()
    }

    fn constant(h: f64, lambda: f64) -> MetricGraph {
        let spec = FieldSpec::catalog(CatalogField::Constant { c: vec![0.0] }, Domain::interval(1.0, 0.0, 1.0)).unwrap();
        build_metric_graph(&spec, &GraphConfig::new(h, h), lambda).unwrap()
    }

    #[test]
    fn lambda_zero_is_rejected() {
        let spec = FieldSpec::catalog(CatalogField::Cubic, Domain::interval(1.0, -1.0, 1.0)).unwrap();
        assert!(build_metric_graph(&spec, &GraphConfig::new(0.1, 0.1), 0.0).is_err());
    }

    #[test]
    fn transversal_unit_cost() {
        let g = cubic(1.0 / 64.0, 0.5);
        assert!((g.vnorm - 10f64.sqrt()).abs() < 1e-12);
        for u in 0..200 {
            for (v, base, kind) in g.edges(u) {
                if kind == 0 {
                    let l = euclid(g.pos(u), g.pos(v));
                    assert!((g.cost(base, kind) - l / (0.5 * 10f64.sqrt())).abs() < 1e-15);
                } else {
                    assert!((base - g.dt).abs() < 1e-15 && g.node_slice[u].abs_diff(g.node_slice[v]) == 1);
                }
                assert!(g.cost(base, kind) > 0.0);
            }
        }
    }

    #[test]
    fn identical_points_have_zero_distance() {
        let g = cubic(1.0 / 16.0, 0.5);
        let p = SpaceTimePoint::planar(0.5, 0.3);
        assert_eq!(distance_lambda(&g, &p, &p).unwrap().value, 0.0);
        let q = SpaceTimePoint::planar(0.5, 0.125);
        assert_eq!(distance_lambda(&g, &q, &q).unwrap().value, 0.0);
    }

    #[test]
    fn points_on_one_cubic_curve() {
        let g = cubic(1.0 / 32.0, 1.0);
        let x = SpaceTimePoint::planar(0.0, 0.001);
        let y = SpaceTimePoint::planar(0.5, 0.216);
        for l in [1.0, 0.5, 0.25, 0.125] {
            let d = distance_lambda(&g.with_lambda(l).unwrap(), &x, &y).unwrap();
            assert!((d.value - 0.5).abs() <= 2.0 * (g.h + g.dt), "λ={l}: {}", d.value);
            assert!(d.value >= 0.5);
        }
    }

    #[test]
    fn pure_horizontal_run_on_constant_field() {
        let g = constant(1.0 / 64.0, 0.5);
        let d = distance_lambda(&g, &SpaceTimePoint::planar(0.0, 0.0), &SpaceTimePoint::planar(0.0, 0.3)).unwrap();
        assert!((d.value - 0.6).abs() < 1e-12, "{}", d.value);
        assert!(d.kinds.iter().all(|&k| k == 0));
        assert!((d.horizontal_time - 0.3).abs() < 1e-12);
    }

    #[test]
    fn brute_force_agrees_on_a_coarse_instance() {
        // Floyd–Warshall over the same edges.
        let g = constant(0.25, 0.5);
        let n = g.node_count();
        let mut m = vec![vec![f64::INFINITY; n]; n];
        for u in 0..n {
            m[u][u] = 0.0;
            for (v, b, k) in g.edges(u) {
                m[u][v] = m[u][v].min(g.cost(b, k));
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if m[i][k] + m[k][j] < m[i][j] {
                        m[i][j] = m[i][k] + m[k][j];
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let d = distance_lambda(&g, &g.node_point(i), &g.node_point(j)).unwrap();
                assert!((d.value - m[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_and_witness_sums_to_value() {
        let g = cubic(1.0 / 16.0, 0.25);
        let x = SpaceTimePoint::planar(0.125, -0.4);
        let y = SpaceTimePoint::planar(0.75, 0.31);
        let a = distance_lambda(&g, &x, &y).unwrap();
        let b = distance_lambda(&g, &y, &x).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.path.first().unwrap(), &x);
        assert_eq!(a.path.last().unwrap(), &y);
        let mut sum = 0.0;
        for (w, &k) in a.path.windows(2).zip(&a.kinds) {
            sum += if k == 0 { w[0].spatial_dist(&w[1]) / (g.vnorm * g.lambda) } else { (w[1].x0 - w[0].x0).abs() };
            if k != 0 {
                assert_eq!((w[1].x0 - w[0].x0).signum() as i8, k);
            }
        }
        assert!((sum - a.value).abs() < 1e-9, "{sum} vs {}", a.value);
    }

    #[test]
    fn fb_distance_along_the_axis() {
        let g = cubic(1.0 / 32.0, 1.0);
        let d = fb_distance(&g, &SpaceTimePoint::planar(0.0, 0.0), &SpaceTimePoint::planar(1.0, 0.0)).unwrap();
        assert!((d.value - 1.0).abs() < 1e-12);
        let c = d.to_fb_curve().unwrap();
        assert!(c.switch_points().is_empty());
        let same = fb_distance(&g, &SpaceTimePoint::planar(0.5, 0.0), &SpaceTimePoint::planar(0.5, 0.0)).unwrap();
        assert_eq!(same.value, 0.0);
    }

    #[test]
    fn fb_distance_without_the_axis_is_infinite() {
        let spec = FieldSpec::catalog(CatalogField::Cubic, Domain::interval(1.0, -1.0, 1.0)).unwrap();
        let cfg = GraphConfig { saturate: false, ..GraphConfig::new(1.0 / 32.0, 1.0 / 32.0) };
        let g = build_metric_graph(&spec, &cfg, 1.0).unwrap();
        let d = fb_distance(&g, &SpaceTimePoint::planar(0.0, 0.0), &SpaceTimePoint::planar(1.0, 0.0)).unwrap();
        assert!(!d.is_finite());
        assert!(d.file_value(1.0) > 1e6);
    }

    #[test]
    fn fig1_fb_distance_is_two_with_one_switch() {
        let spec = FieldSpec::catalog(CatalogField::Fig1, Domain::interval(1.0, -1.5, 1.5)).unwrap();
        let g = build_metric_graph(&spec, &GraphConfig::new(1.0 / 32.0, 1.0 / 32.0), 1.0).unwrap();
        let d = fb_distance(&g, &SpaceTimePoint::planar(0.0, 1.0), &SpaceTimePoint::planar(0.0, -1.0)).unwrap();
        assert!((d.value - 2.0).abs() < 1e-12, "{}", d.value);
        let c = d.to_fb_curve().unwrap();
        assert_eq!(c.switch_points(), vec![1.0]);
        let r = crate::flow::validate_fb_curve(&spec, &c, 0.2).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn distance_zero_examples() {
        let g = cubic(1.0 / 32.0, 1.0);
        let x = SpaceTimePoint::planar(0.25, 0.25f64.powi(3));
        let y = SpaceTimePoint::planar(0.75, 0.75f64.powi(3));
        let z = distance_zero(&g, &x, &y, &[1.0, 0.5, 0.25, 0.125], &ZeroOptions::default()).unwrap();
        assert_eq!(z.status, LimitStatus::Finite);
        assert!(z.per_lambda.iter().all(|d| (d.value - 0.5).abs() < 1e-12));
        assert!((z.fb.value - 0.5).abs() < 1e-12);

        let c = constant(1.0 / 64.0, 1.0);
        let z = distance_zero(&c, &SpaceTimePoint::planar(0.0, 0.0), &SpaceTimePoint::planar(0.0, 0.3), &[1.0, 0.5, 0.25, 0.125], &ZeroOptions::default()).unwrap();
        assert_eq!(z.status, LimitStatus::Divergent);
        assert!(!z.fb.is_finite());
        for d in &z.per_lambda {
            assert!((d.value * d.lambda - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn lip_constant_examples() {
        let phi = [1.0, 1.0, 1.0];
        let d = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]];
        assert_eq!(lip_constant(&phi, &d).unwrap().0, 0.0);
        let phi = [0.0, 1.0, 3.0];
        assert_eq!(lip_constant(&phi, &d).unwrap(), (2.0, Some((1, 2))));
        let d0 = vec![vec![0.0, 0.0, 2.0], vec![0.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]];
        assert_eq!(lip_constant(&phi, &d0), Err(Error::DegeneratePair { first: 0, second: 1 }));
        let dinf = vec![vec![0.0, f64::INFINITY, 3.0], vec![f64::INFINITY, 0.0, 1.0], vec![3.0, 1.0, 0.0]];
        assert_eq!(lip_constant(&phi, &dinf).unwrap().0, 2.0);
    }

    #[test]
    fn time_coordinate_is_one_lipschitz() {
        let g = cubic(1.0 / 16.0, 0.5);
        let nodes: Vec<usize> = (0..g.node_count()).step_by(37).collect();
        let phi: Vec<f64> = nodes.iter().map(|&i| g.node_point(i).x0).collect();
        let r = lip_on_nodes(&g, &nodes, &phi, LipMetric::Lambda).unwrap();
        assert!(r.value <= 1.0 + 1e-12 && r.value > 0.99, "{}", r.value);
    }

    #[test]
    fn pruned_lip_matches_exhaustive() {
        let g = cubic(1.0 / 8.0, 0.5);
        let nodes: Vec<usize> = (0..g.node_count()).step_by(5).collect();
        let phi: Vec<f64> = nodes.iter().map(|&i| (g.node_point(i).xhat[0] * 3.0).sin()).collect();
        let mut table = vec![vec![0.0; nodes.len()]; nodes.len()];
        for (a, &i) in nodes.iter().enumerate() {
            let d = multi_source_distances(&g, &[(i, 0.0)], LipMetric::Lambda);
            for (b, &j) in nodes.iter().enumerate() {
                table[a][b] = d[j];
            }
        }
        let exhaustive = lip_constant(&phi, &table).unwrap().0;
        let pruned = lip_on_nodes(&g, &nodes, &phi, LipMetric::Lambda).unwrap().value;
        assert_eq!(exhaustive, pruned);
    }
}

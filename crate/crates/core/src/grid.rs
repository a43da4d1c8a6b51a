//! Axis-aligned boxes and regular lattices shared by the sampled fields,
//! the maximal-function code and the transport solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The working domain `[0, T] × ∏ [lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub t_max: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Domain {
    pub fn new(t_max: f64, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::Invalid("domain needs n >= 1 matching bounds".into()));
        }
        if !(t_max > 0.0) || lo.iter().zip(&hi).any(|(a, b)| !(b > a)) {
            return Err(Error::Invalid("domain box must have positive extent".into()));
        }
        Ok(Domain { t_max, lo, hi })
    }

    /// `[0, T] × [lo, hi]` in one space dimension.
    pub fn interval(t_max: f64, lo: f64, hi: f64) -> Self {
        Domain::new(t_max, vec![lo], vec![hi]).expect("valid interval domain")
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, t: f64, x: &[f64]) -> bool {
        self.contains_space(x) && t >= 0.0 && t <= self.t_max
    }

    pub fn contains_space(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    /// Euclidean diameter of the full space-time box.
    pub fn diameter(&self) -> f64 {
        let s: f64 = self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a).powi(2)).sum();
        (s + self.t_max * self.t_max).sqrt()
    }

    pub fn spatial_diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// A regular lattice over a spatial box, row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub lo: Vec<f64>,
    pub step: Vec<f64>,
    pub shape: Vec<usize>,
}

impl Lattice {
    pub fn new(lo: Vec<f64>, step: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        if lo.is_empty() || lo.len() != step.len() || lo.len() != shape.len() {
            return Err(Error::Invalid("lattice axes disagree".into()));
        }
        if step.iter().any(|h| !(*h > 0.0)) || shape.iter().any(|&m| m == 0) {
            return Err(Error::Invalid("lattice needs positive steps and sizes".into()));
        }
        Ok(Lattice { lo, step, shape })
    }

    /// Lattice with spacing (at most) `h` covering `[lo, hi]` exactly on every axis.
    pub fn covering(lo: &[f64], hi: &[f64], h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Invalid("lattice spacing must be positive".into()));
        }
        let mut shape = Vec::with_capacity(lo.len());
        let mut step = Vec::with_capacity(lo.len());
        for (a, b) in lo.iter().zip(hi) {
            let cells = ((b - a) / h - 1e-9).ceil().max(1.0) as usize;
            shape.push(cells + 1);
            step.push((b - a) / cells as f64);
        }
        Lattice::new(lo.to_vec(), step, shape)
    }

    /// Lattice with `points` nodes per axis spanning `[lo, hi]`.
    pub fn with_points(lo: &[f64], hi: &[f64], points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::Invalid("need at least two lattice points per axis".into()));
        }
        let step = lo
            .iter()
            .zip(hi)
            .map(|(a, b)| (b - a) / (points - 1) as f64)
            .collect();
        Lattice::new(lo.to_vec(), step, vec![points; lo.len()])
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hi(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.step)
            .zip(&self.shape)
            .map(|((a, h), &m)| a + h * (m - 1) as f64)
            .collect()
    }

    /// Volume element `∏ h_i`.
    pub fn cell_volume(&self) -> f64 {
        self.step.iter().product()
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            out[k] = idx % self.shape[k];
            idx /= self.shape[k];
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &m)| acc * m + i)
    }

    pub fn coord_of(&self, multi: &[usize]) -> Vec<f64> {
        multi
            .iter()
            .zip(self.lo.iter().zip(&self.step))
            .map(|(&i, (a, h))| a + h * i as f64)
            .collect()
    }

    pub fn coord(&self, idx: usize) -> Vec<f64> {
        self.coord_of(&self.multi_index(idx))
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let hi = self.hi();
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&hi))
                .all(|(v, (a, b))| *v >= *a - 1e-12 && *v <= *b + 1e-12)
    }

    /// Corner weights for multilinear interpolation at `x`; `None` outside the lattice.
    pub fn interpolation_stencil(&self, x: &[f64]) -> Option<Vec<(usize, f64)>> {
        if !self.contains(x) {
            return None;
        }
        let n = self.dim();
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0; n];
        for k in 0..n {
            let r = ((x[k] - self.lo[k]) / self.step[k]).max(0.0);
            let last = self.shape[k] - 1;
            if last == 0 {
                continue;
            }
            let i = (r.floor() as usize).min(last - 1);
            base[k] = i;
            frac[k] = (r - i as f64).clamp(0.0, 1.0);
        }
        let mut out = Vec::with_capacity(1 << n);
        let mut multi = vec![0usize; n];
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            for k in 0..n {
                let up = (corner >> k) & 1 == 1;
                if up && self.shape[k] == 1 {
                    w = 0.0;
                    break;
                }
                multi[k] = base[k] + up as usize;
                w *= if up { frac[k] } else { 1.0 - frac[k] };
            }
            if w > 0.0 {
                out.push((self.flat_index(&multi), w));
            }
        }
        Some(out)
    }

    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> Option<f64> {
        self.interpolation_stencil(x)
            .map(|st| st.iter().map(|&(i, w)| w * values[i]).sum())
    }

    /// Index of the nearest node (coordinates clamped into the box).
    pub fn nearest(&self, x: &[f64]) -> usize {
        let multi: Vec<usize> = (0..self.dim())
            .map(|k| {
                let r = ((x[k] - self.lo[k]) / self.step[k]).round();
                r.clamp(0.0, (self.shape[k] - 1) as f64) as usize
            })
            .collect();
        self.flat_index(&multi)
    }

    /// Lattice-neighbour of `idx` shifted by `delta` along `axis`, if it exists.
    pub fn shifted(&self, idx: usize, axis: usize, delta: isize) -> Option<usize> {
        let mut multi = self.multi_index(idx);
        let j = multi[axis] as isize + delta;
        if j < 0 || j >= self.shape[axis] as isize {
            return None;
        }
        multi[axis] = j as usize;
        Some(self.flat_index(&multi))
    }
}

/// Uniform grid `0, dt, 2dt, …` covering `[0, t_max]`, with the last step shortened if needed.
pub fn time_grid(t_max: f64, dt: f64) -> Vec<f64> {
    let steps = (t_max / dt - 1e-9).ceil().max(1.0) as usize;
    (0..=steps)
        .map(|k| if k == steps { t_max } else { k as f64 * dt })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covering_hits_both_ends() {
        let l = Lattice::covering(&[-1.5], &[1.5], 0.25).unwrap();
        assert_eq!(l.shape, vec![13]);
        assert_eq!(l.coord(0), vec![-1.5]);
        assert_eq!(l.coord(12), vec![1.5]);
        assert_eq!(l.coord(6), vec![0.0]);
    }

    #[test]
    fn flat_and_multi_index_agree() {
        let l = Lattice::with_points(&[0.0, 0.0], &[1.0, 2.0], 5).unwrap();
        for i in 0..l.len() {
            assert_eq!(l.flat_index(&l.multi_index(i)), i);
        }
        assert_eq!(l.multi_index(7), vec![1, 2]);
    }

    #[test]
    fn bilinear_reproduces_affine() {
        let l = Lattice::with_points(&[0.0, -1.0], &[1.0, 1.0], 6).unwrap();
        let vals: Vec<f64> = (0..l.len())
            .map(|i| {
                let c = l.coord(i);
                2.0 * c[0] - 3.0 * c[1] + 0.5
            })
            .collect();
        let v = l.interpolate(&vals, &[0.37, 0.11]).unwrap();
        assert!((v - (2.0 * 0.37 - 3.0 * 0.11 + 0.5)).abs() < 1e-12);
        assert!(l.interpolate(&vals, &[1.2, 0.0]).is_none());
    }

    #[test]
    fn time_grid_ends_at_horizon() {
        let g = time_grid(1.0, 0.3);
        assert_eq!(g.len(), 5);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert_eq!(time_grid(1.0, 0.25), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}

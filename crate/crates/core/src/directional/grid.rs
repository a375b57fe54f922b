//! Piecewise-constant density on a regular grid over `[0,1]^2`.

use alloc::vec::Vec;

use crate::math::PI;
use crate::sampling::SquarePoint;

#[derive(Clone, Debug, PartialEq)]
pub struct DirGrid {
    resolution: usize,
    /// Cell probabilities; empty until the first non-empty frame.
    probs: Vec<f64>,
    accum: Vec<f64>,
    row_cdf: Vec<f64>,
    col_cdf: Vec<f64>,
}

impl DirGrid {
    pub fn new(resolution: usize) -> Self {
        let d = resolution.max(1);
        DirGrid {
            resolution: d,
            probs: Vec::new(),
            accum: alloc::vec![0.0; d * d],
            row_cdf: Vec::new(),
            col_cdf: Vec::new(),
        }
    }

    /// Grid with given cell probabilities (row-major, `v` rows); an empty
    /// list gives an untrained grid. `None` if the length or values are bad.
    pub fn from_probabilities(resolution: usize, probs: Vec<f64>) -> Option<Self> {
        let mut g = DirGrid::new(resolution);
        if probs.is_empty() {
            return Some(g);
        }
        if probs.len() != g.resolution * g.resolution || probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return None;
        }
        if probs.iter().sum::<f64>() <= 0.0 {
            return None;
        }
        g.probs = probs;
        g.build_cdf();
        Some(g)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn is_trained(&self) -> bool {
        !self.probs.is_empty()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        if self.probs.is_empty() {
            let n = self.resolution * self.resolution;
            alloc::vec![1.0 / n as f64; n]
        } else {
            self.probs.clone()
        }
    }

    fn cell_of(&self, uv: SquarePoint) -> (usize, usize) {
        let d = self.resolution;
        let q = |x: f64| ((x * d as f64) as usize).min(d - 1);
        (q(uv.u), q(uv.v))
    }

    pub fn total(&self) -> f64 {
        self.accum.iter().sum()
    }

    /// Returns false (and ignores the value) for negative or non-finite input.
    pub fn record(&mut self, uv: SquarePoint, contribution: f64) -> bool {
        if !(contribution >= 0.0) || !contribution.is_finite() {
            return false;
        }
        let (i, j) = self.cell_of(uv);
        self.accum[j * self.resolution + i] += contribution;
        true
    }

    /// Blends the normalized frame weights into the probabilities.
    pub fn end_frame(&mut self, blend: f64) {
        let total = self.total();
        if total > 0.0 {
            let fresh = self.accum.iter().map(|a| a / total);
            if self.probs.is_empty() {
                self.probs = fresh.collect();
            } else {
                for (p, f) in self.probs.iter_mut().zip(fresh) {
                    *p = (1.0 - blend) * *p + blend * f;
                }
                let s: f64 = self.probs.iter().sum();
                self.probs.iter_mut().for_each(|p| *p /= s);
            }
            self.build_cdf();
        }
        self.accum.iter_mut().for_each(|a| *a = 0.0);
    }

    fn build_cdf(&mut self) {
        let d = self.resolution;
        self.row_cdf.clear();
        self.col_cdf.clear();
        let mut acc = 0.0;
        for j in 0..d {
            let row = &self.probs[j * d..(j + 1) * d];
            let row_sum: f64 = row.iter().sum();
            acc += row_sum;
            self.row_cdf.push(acc);
            let mut c = 0.0;
            for p in row {
                c += p;
                self.col_cdf.push(if row_sum > 0.0 { c / row_sum } else { 0.0 });
            }
        }
    }

    /// Density on the square.
    pub fn pdf(&self, uv: SquarePoint) -> f64 {
        if self.probs.is_empty() {
            return 1.0;
        }
        let (i, j) = self.cell_of(uv);
        self.probs[j * self.resolution + i] * (self.resolution * self.resolution) as f64
    }

    /// Solid-angle density when the square parameterizes the whole sphere.
    pub fn pdf_sphere(&self, uv: SquarePoint) -> f64 {
        self.pdf(uv) / (4.0 * PI)
    }

    /// Two-stage inversion: pick a row, then a column, then a uniform point
    /// in the cell.
    pub fn sample(&self, u: SquarePoint) -> (SquarePoint, f64) {
        if self.probs.is_empty() {
            return (u, 1.0);
        }
        let d = self.resolution;
        let total = *self.row_cdf.last().unwrap();
        let x = u.v * total;
        let j = self.row_cdf.partition_point(|&c| c <= x).min(d - 1);
        let lo = if j == 0 { 0.0 } else { self.row_cdf[j - 1] };
        let row_mass = self.row_cdf[j] - lo;
        let fv = if row_mass > 0.0 { ((x - lo) / row_mass).clamp(0.0, 1.0) } else { 0.5 };
        let cols = &self.col_cdf[j * d..(j + 1) * d];
        let i = cols.partition_point(|&c| c <= u.u).min(d - 1);
        let clo = if i == 0 { 0.0 } else { cols[i - 1] };
        let cm = cols[i] - clo;
        let fu = if cm > 0.0 { ((u.u - clo) / cm).clamp(0.0, 1.0) } else { 0.5 };
        let uv = SquarePoint::new(
            ((i as f64 + fu) / d as f64).min(1.0 - f64::EPSILON),
            ((j as f64 + fv) / d as f64).min(1.0 - f64::EPSILON),
        );
        (uv, self.pdf(uv))
    }
}

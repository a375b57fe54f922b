//! Two-dimensional Gaussian mixture on `[0,1]^2` trained by stepwise EM.
//!
//! Sufficient statistics per component are the row
//! `(1, x, y, x^2, y^2, xy, 1/gamma, 1/b)` folded with
//! `u_i = a_i u_{i-1} + b_i v_i`, `a_i = 1 - i^-alpha`,
//! `b_i = i^-alpha w_i gamma_i`.

use alloc::vec::Vec;

use crate::math::PI;
use crate::sampling::{SquarePoint, UniformSource};

pub const STAT_COLUMNS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: [f64; 2],
    /// Symmetric covariance `[[xx, xy], [xy, yy]]` stored as `[xx, xy, yy]`.
    pub cov: [f64; 3],
}

impl Component {
    fn det(&self) -> f64 {
        self.cov[0] * self.cov[2] - self.cov[1] * self.cov[1]
    }

    fn log_density(&self, p: SquarePoint) -> f64 {
        let det = self.det();
        let dx = p.u - self.mean[0];
        let dy = p.v - self.mean[1];
        let q = (self.cov[2] * dx * dx - 2.0 * self.cov[1] * dx * dy + self.cov[0] * dy * dy) / det;
        -0.5 * q - libm::log(2.0 * PI * libm::sqrt(det))
    }

    /// Probability mass of the component inside the unit square.
    fn unit_mass(&self) -> f64 {
        let sx = libm::sqrt(self.cov[0]);
        let sy2 = self.cov[2];
        let rho_term = self.cov[1] / self.cov[0];
        let cond_sd = libm::sqrt((sy2 - self.cov[1] * rho_term).max(1e-300));
        let lo = (self.mean[0] - 9.0 * sx).max(0.0);
        let hi = (self.mean[0] + 9.0 * sx).min(1.0);
        if hi <= lo {
            return 0.0;
        }
        // Composite Gauss-Legendre over x of the x-marginal times the
        // conditional mass of y in [0, 1].
        let panels = 16;
        let h = (hi - lo) / panels as f64;
        let mut s = 0.0;
        for k in 0..panels {
            let a = lo + k as f64 * h;
            for (node, w) in GL8 {
                let x = a + 0.5 * h * (node + 1.0);
                let dx = x - self.mean[0];
                let fx = libm::exp(-0.5 * dx * dx / self.cov[0]) / (sx * libm::sqrt(2.0 * PI));
                let my = self.mean[1] + rho_term * dx;
                let py = normal_cdf((1.0 - my) / cond_sd) - normal_cdf((0.0 - my) / cond_sd);
                s += 0.5 * h * w * fx * py;
            }
        }
        s
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

#[derive(Clone, Debug, PartialEq)]
pub struct Gmm {
    components: Vec<Component>,
    stats: Vec<[f64; STAT_COLUMNS]>,
    step: u64,
    alpha: f64,
    sigma_min: f64,
    /// Mixture mass inside the unit square.
    mass: f64,
    pending: Vec<(SquarePoint, f64)>,
    trained: bool,
    fallbacks: u64,
}

impl Gmm {
    /// Broad components spread on a circle around the square centre.
    pub fn new(components: usize, alpha: f64) -> Self {
        let c = components.max(1);
        let comps = (0..c)
            .map(|k| {
                let mean = if c == 1 {
                    [0.5, 0.5]
                } else {
                    let a = 2.0 * PI * k as f64 / c as f64 + 0.25 * PI;
                    [0.5 + 0.25 * libm::cos(a), 0.5 + 0.25 * libm::sin(a)]
                };
                Component { weight: 1.0 / c as f64, mean, cov: [0.04, 0.0, 0.04] }
            })
            .collect();
        Gmm::from_components(comps, alpha)
    }

    pub fn from_components(components: Vec<Component>, alpha: f64) -> Self {
        let n = components.len();
        let mut g = Gmm {
            components,
            stats: alloc::vec![[0.0; STAT_COLUMNS]; n],
            step: 0,
            alpha,
            sigma_min: 2e-3,
            mass: 1.0,
            pending: Vec::new(),
            trained: false,
            fallbacks: 0,
        };
        g.update_mass();
        g
    }

    /// Restores a mixture from saved parameters and statistics.
    pub fn restore(
        components: Vec<Component>,
        stats: Vec<[f64; STAT_COLUMNS]>,
        step: u64,
        alpha: f64,
        trained: bool,
    ) -> Self {
        let mut g = Gmm::from_components(components, alpha);
        g.stats = stats;
        g.step = step;
        g.trained = trained;
        g
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn stats(&self) -> &[[f64; STAT_COLUMNS]] {
        &self.stats
    }

    pub fn set_stats(&mut self, stats: Vec<[f64; STAT_COLUMNS]>, step: u64) {
        self.stats = stats;
        self.step = step;
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Number of responsibility evaluations that fell back to uniform.
    pub fn fallbacks(&self) -> u64 {
        self.fallbacks
    }

    fn update_mass(&mut self) {
        self.mass = self.components.iter().map(|c| c.weight * c.unit_mass()).sum();
    }

    /// Normalized component posteriors at `s`; uniform if every density
    /// underflows.
    pub fn responsibilities(&self, s: SquarePoint) -> Vec<f64> {
        let (r, _) = self.responsibilities_checked(s);
        r
    }

    fn responsibilities_checked(&self, s: SquarePoint) -> (Vec<f64>, bool) {
        let c = self.components.len();
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|k| if k.weight > 0.0 { libm::log(k.weight) + k.log_density(s) } else { f64::NEG_INFINITY })
            .collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return (alloc::vec![1.0 / c as f64; c], true);
        }
        let e: Vec<f64> = logs.iter().map(|l| libm::exp(l - m)).collect();
        let sum: f64 = e.iter().sum();
        (e.into_iter().map(|x| x / sum).collect(), false)
    }

    /// One sequential E-step with the current parameters.
    pub fn estep_sequential(&mut self, s: SquarePoint, w: f64) {
        let (gamma, fell_back) = self.responsibilities_checked(s);
        self.fallbacks += fell_back as u64;
        self.step += 1;
        let eta = libm::pow(self.step as f64, -self.alpha);
        let a = 1.0 - eta;
        for (row, &g) in self.stats.iter_mut().zip(&gamma) {
            let b = eta * w * g;
            if b > 0.0 {
                let v = stat_row(s, g, b);
                for (x, vx) in row.iter_mut().zip(v) {
                    *x = a * *x + b * vx;
                }
            } else {
                row.iter_mut().for_each(|x| *x *= a);
            }
        }
    }

    /// All E-steps of `samples` at once. Responsibilities are computed with
    /// the parameters at entry; the decay products come from prefix sums of
    /// `log(1 - k^-alpha)`.
    pub fn estep_batch(&mut self, samples: &[(SquarePoint, f64)]) {
        let n = samples.len();
        if n == 0 {
            return;
        }
        let i0 = self.step;
        // prefix[j] = sum of log factors for k in i0+1 ..= i0+j, with factors
        // equal to zero counted separately.
        let mut prefix = alloc::vec![0.0; n + 1];
        let mut zeros = alloc::vec![0u32; n + 1];
        for j in 1..=n {
            let k = (i0 + j as u64) as f64;
            let f = 1.0 - libm::pow(k, -self.alpha);
            if f > 0.0 {
                prefix[j] = prefix[j - 1] + libm::log(f);
                zeros[j] = zeros[j - 1];
            } else {
                prefix[j] = prefix[j - 1];
                zeros[j] = zeros[j - 1] + 1;
            }
        }
        let decay = |j: usize| -> f64 {
            if zeros[n] != zeros[j] {
                0.0
            } else {
                libm::exp(prefix[n] - prefix[j])
            }
        };
        let c = self.components.len();
        let mut sum = alloc::vec![[0.0; STAT_COLUMNS]; c];
        for (j, &(s, w)) in samples.iter().enumerate() {
            let (gamma, fell_back) = self.responsibilities_checked(s);
            self.fallbacks += fell_back as u64;
            let idx = j + 1;
            let eta = libm::pow((i0 + idx as u64) as f64, -self.alpha);
            let g = decay(idx);
            if g == 0.0 {
                continue;
            }
            for (acc, &gc) in sum.iter_mut().zip(&gamma) {
                let b = eta * w * gc;
                if b > 0.0 {
                    for (x, vx) in acc.iter_mut().zip(stat_row(s, gc, b)) {
                        *x += b * vx * g;
                    }
                }
            }
        }
        let g0 = decay(0);
        for (row, add) in self.stats.iter_mut().zip(sum) {
            for (x, a) in row.iter_mut().zip(add) {
                *x = g0 * *x + a;
            }
        }
        self.step = i0 + n as u64;
    }

    /// Recovers parameters from the statistics. Covariance eigenvalues are
    /// floored at `sigma_min^2`; starved components are re-seeded next to
    /// the heaviest one.
    pub fn mstep(&mut self) {
        let total: f64 = self.stats.iter().map(|r| r[0]).sum();
        if !(total > 0.0) || !total.is_finite() {
            return;
        }
        let heaviest =
            (0..self.stats.len()).max_by(|&a, &b| self.stats[a][0].total_cmp(&self.stats[b][0])).unwrap_or(0);
        let floor = self.sigma_min * self.sigma_min;
        let mut fresh = Vec::with_capacity(self.components.len());
        for (k, row) in self.stats.iter().enumerate() {
            let n = row[0];
            if n > 1e-6 * total {
                let mx = row[1] / n;
                let my = row[2] / n;
                let cov = [row[3] / n - mx * mx, row[5] / n - mx * my, row[4] / n - my * my];
                fresh.push(Some(Component {
                    weight: n / total,
                    mean: [mx.clamp(0.0, 1.0), my.clamp(0.0, 1.0)],
                    cov: regularize(cov, floor),
                }));
            } else {
                let _ = k;
                fresh.push(None);
            }
        }
        let anchor = fresh[heaviest].unwrap_or(self.components[heaviest]);
        let mut comps: Vec<Component> = fresh
            .into_iter()
            .enumerate()
            .map(|(k, c)| {
                c.unwrap_or_else(|| {
                    let a = 2.0 * PI * k as f64 / self.components.len() as f64;
                    Component {
                        weight: 1e-3,
                        mean: [
                            (anchor.mean[0] + 0.05 * libm::cos(a)).clamp(0.0, 1.0),
                            (anchor.mean[1] + 0.05 * libm::sin(a)).clamp(0.0, 1.0),
                        ],
                        cov: [0.01, 0.0, 0.01],
                    }
                })
            })
            .collect();
        let wsum: f64 = comps.iter().map(|c| c.weight).sum();
        comps.iter_mut().for_each(|c| c.weight /= wsum);
        self.components = comps;
        self.update_mass();
        self.trained = true;
    }

    /// Density of the mixture truncated to the unit square.
    pub fn pdf(&self, uv: SquarePoint) -> f64 {
        if !(self.mass > 0.0) {
            return 0.0;
        }
        let d: f64 = self.components.iter().map(|c| c.weight * libm::exp(c.log_density(uv))).sum();
        d / self.mass
    }

    /// Picks a component by weight and draws from it with Box-Muller;
    /// draws outside the square restart from the component choice, which
    /// samples the truncated mixture exactly.
    pub fn sample<S: UniformSource + ?Sized>(&self, rng: &mut S) -> (SquarePoint, f64) {
        for _ in 0..1000 {
            let x = rng.next_f64();
            let mut acc = 0.0;
            let mut pick = self.components.len() - 1;
            for (k, c) in self.components.iter().enumerate() {
                acc += c.weight;
                if x < acc {
                    pick = k;
                    break;
                }
            }
            let c = &self.components[pick];
            let u = rng.next_square();
            let r = libm::sqrt(-2.0 * libm::log(1.0 - u.u));
            let (s, co) = libm::sincos(2.0 * PI * u.v);
            let (z0, z1) = (r * co, r * s);
            let l00 = libm::sqrt(c.cov[0]);
            let l10 = c.cov[1] / l00;
            let l11 = libm::sqrt((c.cov[2] - l10 * l10).max(0.0));
            let p = SquarePoint::new(c.mean[0] + l00 * z0, c.mean[1] + l10 * z0 + l11 * z1);
            if (0.0..=1.0).contains(&p.u) && (0.0..=1.0).contains(&p.v) {
                return (p, self.pdf(p));
            }
        }
        let p = SquarePoint::new(0.5, 0.5);
        (p, self.pdf(p))
    }

    /// Queues a weighted sample for the next [`Gmm::end_frame`].
    pub fn record(&mut self, uv: SquarePoint, w: f64) -> bool {
        if !(w >= 0.0) || !w.is_finite() {
            return false;
        }
        self.pending.push((uv, w));
        true
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Batch E-step over the frame's samples, then an M-step.
    pub fn end_frame(&mut self) {
        if self.pending.iter().all(|&(_, w)| w == 0.0) {
            self.pending.clear();
            return;
        }
        let samples = core::mem::take(&mut self.pending);
        self.estep_batch(&samples);
        self.mstep();
        self.pending = samples;
        self.pending.clear();
    }
}

/// `(1, x, y, x^2, y^2, xy, 1/gamma, 1/b)`.
pub fn stat_row(s: SquarePoint, gamma: f64, b: f64) -> [f64; STAT_COLUMNS] {
    [1.0, s.u, s.v, s.u * s.u, s.v * s.v, s.u * s.v, 1.0 / gamma, 1.0 / b]
}

fn regularize(cov: [f64; 3], floor: f64) -> [f64; 3] {
    let (a, b, c) = (cov[0], cov[1], cov[2]);
    if !(a.is_finite() && b.is_finite() && c.is_finite()) {
        return [floor, 0.0, floor];
    }
    let tr = 0.5 * (a + c);
    let disc = libm::sqrt((0.25 * (a - c) * (a - c) + b * b).max(0.0));
    let l1 = tr + disc;
    let l2 = tr - disc;
    if l2 >= floor {
        return cov;
    }
    // Eigenvector of l1.
    let (vx, vy) = if b.abs() > 1e-300 {
        let n = libm::sqrt(b * b + (l1 - a) * (l1 - a));
        (b / n, (l1 - a) / n)
    } else if a >= c {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let e1 = l1.max(floor);
    let e2 = l2.max(floor);
    // V diag(e1, e2) V^T with columns (vx, vy) and (-vy, vx).
    [e1 * vx * vx + e2 * vy * vy, (e1 - e2) * vx * vy, e1 * vy * vy + e2 * vx * vx]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Rng;

    fn comp(mean: [f64; 2], sd: f64, weight: f64) -> Component {
        Component { weight, mean, cov: [sd * sd, 0.0, sd * sd] }
    }

    #[test]
    fn single_component_owns_everything() {
        let g = Gmm::new(1, 0.7);
        assert_eq!(g.responsibilities(SquarePoint::new(0.1, 0.9)), alloc::vec![1.0]);
    }

    #[test]
    fn identical_components_split_evenly() {
        let g = Gmm::from_components(alloc::vec![comp([0.4, 0.4], 0.1, 0.5); 2], 0.7);
        let r = g.responsibilities(SquarePoint::new(0.9, 0.2));
        assert!((r[0] - 0.5).abs() < 1e-15 && (r[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn far_component_gets_no_responsibility() {
        let g = Gmm::from_components(alloc::vec![comp([0.2, 0.2], 0.01, 0.5), comp([0.3, 0.2], 0.01, 0.5)], 0.7);
        let r = g.responsibilities(SquarePoint::new(0.2, 0.2));
        assert!(r[0] > 1.0 - 1e-6 && r[1] < 1e-6);
    }

    #[test]
    fn first_step_with_unit_alpha_discards_history() {
        let mut g = Gmm::new(2, 1.0);
        g.set_stats(alloc::vec![[3.0; STAT_COLUMNS]; 2], 0);
        let s = SquarePoint::new(0.3, 0.6);
        let gamma = g.responsibilities(s);
        g.estep_sequential(s, 2.0);
        for (row, gc) in g.stats().iter().zip(gamma) {
            let b = 2.0 * gc;
            let v = stat_row(s, gc, b);
            for k in 0..STAT_COLUMNS {
                assert!((row[k] - b * v[k]).abs() <= 1e-15 * row[k].abs());
            }
        }
    }

    #[test]
    fn zero_weight_only_decays() {
        let mut g = Gmm::new(2, 0.7);
        g.set_stats(alloc::vec![[2.0; STAT_COLUMNS]; 2], 4);
        g.estep_sequential(SquarePoint::new(0.5, 0.5), 0.0);
        let a = 1.0 - libm::pow(5.0, -0.7);
        assert!(g.stats().iter().flatten().all(|&x| x == 2.0 * a));
    }

    #[test]
    fn batch_of_one_matches_sequential() {
        let mut a = Gmm::new(3, 0.6);
        let mut b = a.clone();
        let s = SquarePoint::new(0.2, 0.7);
        a.estep_sequential(s, 1.5);
        b.estep_batch(&[(s, 1.5)]);
        for (ra, rb) in a.stats().iter().zip(b.stats()) {
            for k in 0..STAT_COLUMNS {
                assert!((ra[k] - rb[k]).abs() <= 1e-12 * ra[k].abs());
            }
        }
    }

    #[test]
    fn degenerate_samples_hit_the_variance_floor() {
        let mut g = Gmm::new(1, 0.7);
        for _ in 0..100 {
            g.estep_sequential(SquarePoint::new(0.3, 0.3), 1.0);
        }
        g.mstep();
        let c = g.components()[0];
        let f = g.sigma_min() * g.sigma_min();
        assert!((c.cov[0] - f).abs() < 1e-12 && (c.cov[2] - f).abs() < 1e-12);
    }

    #[test]
    fn recovers_isotropic_gaussian() {
        // alpha = 1 makes the statistics an exact running mean.
        let mut g = Gmm::new(1, 1.0);
        let mut rng = Rng::new(9, 0);
        let (mx, my, sd) = (0.45, 0.6, 0.08);
        for _ in 0..10_000 {
            let u = rng.next_square();
            let r = libm::sqrt(-2.0 * libm::log(1.0 - u.u));
            let p = SquarePoint::new(mx + sd * r * libm::cos(2.0 * PI * u.v), my + sd * r * libm::sin(2.0 * PI * u.v));
            g.estep_sequential(p, 1.0);
        }
        g.mstep();
        let c = g.components()[0];
        assert!((c.mean[0] - mx).abs() < 0.01 && (c.mean[1] - my).abs() < 0.01);
        assert!((c.cov[0] / (sd * sd) - 1.0).abs() < 0.05);
        assert!((c.cov[2] / (sd * sd) - 1.0).abs() < 0.05);
    }

    #[test]
    fn pdf_integrates_to_one() {
        let g = Gmm::from_components(
            alloc::vec![
                comp([0.1, 0.2], 0.15, 0.3),
                Component { weight: 0.7, mean: [0.8, 0.6], cov: [0.02, 0.012, 0.03] },
            ],
            0.7,
        );
        let n = 512;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += g.pdf(SquarePoint::new((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64));
            }
        }
        assert!((s / (n * n) as f64 - 1.0).abs() < 1e-3, "{}", s / (n * n) as f64);
    }

    #[test]
    fn tight_component_samples_stay_close() {
        let sd = 0.02;
        let g = Gmm::from_components(alloc::vec![comp([0.5, 0.5], sd, 1.0)], 0.7);
        let mut rng = Rng::new(10, 0);
        let n = 10_000;
        let mut inside = 0;
        for _ in 0..n {
            let (p, pdf) = g.sample(&mut rng);
            assert!((pdf - g.pdf(p)).abs() == 0.0);
            let d2 = (p.u - 0.5).powi(2) + (p.v - 0.5).powi(2);
            if d2 <= 9.0 * sd * sd {
                inside += 1;
            }
        }
        // 2-D Gaussian mass within 3 sd is 1 - exp(-4.5) = 0.9889, so check
        // against that with 3-sigma binomial slack.
        let p = 1.0 - libm::exp(-4.5);
        let slack = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!(inside as f64 / n as f64 > p - slack);
    }

    #[test]
    fn equal_components_selected_evenly() {
        let g = Gmm::from_components(alloc::vec![comp([0.25, 0.5], 0.03, 0.5), comp([0.75, 0.5], 0.03, 0.5)], 0.7);
        let mut rng = Rng::new(11, 0);
        let n = 100_000;
        let left = (0..n).filter(|_| g.sample(&mut rng).0.u < 0.5).count();
        let sd = (0.25 / n as f64).sqrt();
        assert!((left as f64 / n as f64 - 0.5).abs() < 3.0 * sd);
    }
}

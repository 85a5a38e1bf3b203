//! Homodyne events drawn from the exact twin-beam quadrature distribution.
//!
//! For one twin beam measured at LO phases `phi_i, phi_j` the joint density
//! of `(x_i, x_j)` is Gaussian and diagonal in `s = x_i + x_j`,
//! `t = x_i - x_j`:
//!
//! ```text
//! p(x_i, x_j) = 2 exp[-s^2/(d2+ + 4D) - t^2/(d2- + 4D)] / (pi sqrt((d2+ + 4D)(d2- + 4D)))
//! z = e^{-i(phi_i + phi_j)} L_eff,  d2+- = |1 +- z|^2 / (1 - |z|^2),  D = (1-eta)/(4 eta)
//! ```
//!
//! so `s` and `t` are drawn independently and rotated back.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::model::{Efficiency, NopaParams, QuadSample};

/// Parameters of the joint density of one twin beam at fixed LO phases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairPdfParams {
    pub z: Complex64,
    pub d2_plus: f64,
    pub d2_minus: f64,
    pub delta2: f64,
}

impl PairPdfParams {
    pub fn new(phi_i: f64, phi_j: f64, lambda_eff: Complex64, eta: Efficiency) -> Self {
        let z = Complex64::from_polar(1.0, -(phi_i + phi_j)) * lambda_eff;
        let denom = 1.0 - z.norm_sqr();
        Self {
            z,
            d2_plus: (1.0 + z).norm_sqr() / denom,
            d2_minus: (1.0 - z).norm_sqr() / denom,
            delta2: eta.delta2(),
        }
    }

    /// Variance of `x_i + x_j`.
    pub fn var_sum(&self) -> f64 {
        0.5 * (self.d2_plus + 4.0 * self.delta2)
    }

    /// Variance of `x_i - x_j`.
    pub fn var_diff(&self) -> f64 {
        0.5 * (self.d2_minus + 4.0 * self.delta2)
    }

    pub fn density(&self, x_i: f64, x_j: f64) -> f64 {
        let a = self.d2_plus + 4.0 * self.delta2;
        let b = self.d2_minus + 4.0 * self.delta2;
        let s = x_i + x_j;
        let t = x_i - x_j;
        2.0 * (-s * s / a - t * t / b).exp() / (PI * (a * b).sqrt())
    }
}

/// Joint homodyne density of one twin beam. `lambda_eff` must satisfy
/// `|lambda_eff| < 1`.
pub fn joint_pdf(
    x_i: f64,
    x_j: f64,
    phi_i: f64,
    phi_j: f64,
    lambda_eff: Complex64,
    eta: Efficiency,
) -> f64 {
    PairPdfParams::new(phi_i, phi_j, lambda_eff, eta).density(x_i, x_j)
}

pub fn sample_pair<R: Rng + ?Sized>(
    rng: &mut R,
    phi_i: f64,
    phi_j: f64,
    lambda_eff: Complex64,
    eta: Efficiency,
) -> (f64, f64) {
    draw(rng, &PairPdfParams::new(phi_i, phi_j, lambda_eff, eta))
}

#[inline]
fn draw<R: Rng + ?Sized>(rng: &mut R, p: &PairPdfParams) -> (f64, f64) {
    let n1: f64 = rng.sample(StandardNormal);
    let n2: f64 = rng.sample(StandardNormal);
    let s = n1 * p.var_sum().sqrt();
    let t = n2 * p.var_diff().sqrt();
    (0.5 * (s + t), 0.5 * (s - t))
}

/// Draws four-mode events for fixed state parameters and efficiency.
///
/// Per event: four LO phases uniform on `[0, 2pi)` in mode order, then the
/// `(1,2)` pair with gain `L`, then the `(3,4)` pair with gain `L e^{i phi}`.
#[derive(Debug, Clone, Copy)]
pub struct EventSampler {
    lambda_12: Complex64,
    lambda_34: Complex64,
    eta: Efficiency,
}

impl EventSampler {
    pub fn new(params: &NopaParams, eta: Efficiency) -> Self {
        Self { lambda_12: params.lambda_12(), lambda_34: params.lambda_34(), eta }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> QuadSample {
        let phase: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>() * TAU);
        let (x1, x2) = draw(rng, &PairPdfParams::new(phase[0], phase[1], self.lambda_12, self.eta));
        let (x3, x4) = draw(rng, &PairPdfParams::new(phase[2], phase[3], self.lambda_34, self.eta));
        QuadSample { x: [x1, x2, x3, x4], phase }
    }
}

pub fn sample_event<R: Rng + ?Sized>(rng: &mut R, params: &NopaParams, eta: Efficiency) -> QuadSample {
    EventSampler::new(params, eta).sample(rng)
}

/// Independent, reproducible random stream for chunk `chunk` of sweep point
/// `point` under master seed `seed`.
///
/// The ChaCha8 key is `SHA-256("tomobell/stream/v1" || seed || point || chunk)`
/// with each integer as 8 little-endian bytes, so streams are identical on
/// every platform and independent of how chunks are scheduled.
pub fn stream(seed: u64, point: u64, chunk: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut h = Sha256::new();
    h.update(b"tomobell/stream/v1");
    h.update(seed.to_le_bytes());
    h.update(point.to_le_bytes());
    h.update(chunk.to_le_bytes());
    let key: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eta(v: f64) -> Efficiency {
        Efficiency::new(v).unwrap()
    }

    fn var(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
    }

    #[test]
    fn vacuum_density_at_origin() {
        let p = joint_pdf(0.0, 0.0, 0.3, 1.2, Complex64::new(0.0, 0.0), Efficiency::PERFECT);
        assert!((p - 2.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn half_gain_parameters() {
        let p = PairPdfParams::new(0.0, 0.0, Complex64::new(0.5, 0.0), Efficiency::PERFECT);
        assert!((p.d2_plus - 3.0).abs() < 1e-15);
        assert!((p.d2_minus - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.d2_plus * p.d2_minus - 1.0).abs() < 1e-14);
        assert_eq!(p.delta2, 0.0);
        assert!((p.density(0.0, 0.0) - 2.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn density_normalizes() {
        // Simpson on [-6, 6]^2
        let mut rng = stream(99, 0, 0);
        for _ in 0..20 {
            let lam = Complex64::from_polar(rng.random_range(0.0..0.8), rng.random_range(0.0..TAU));
            let e = eta(rng.random_range(0.55..1.0));
            let (pi_, pj) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
            let n = 600;
            let h = 12.0 / n as f64;
            let w = |k: usize| if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            let mut total = 0.0;
            for a in 0..=n {
                for b in 0..=n {
                    let (x, y) = (-6.0 + a as f64 * h, -6.0 + b as f64 * h);
                    total += w(a) * w(b) * joint_pdf(x, y, pi_, pj, lam, e);
                }
            }
            total *= h * h / 9.0;
            assert!((total - 1.0).abs() < 1e-6, "integral {total}");
        }
    }

    #[test]
    fn density_symmetries() {
        let lam = Complex64::from_polar(0.6, 0.4);
        let e = eta(0.8);
        for &(x, y, pi_, pj, d) in &[(0.3, -0.7, 0.2, 1.1, 0.9), (1.2, 0.4, 3.0, 5.5, -2.0)] {
            let p = joint_pdf(x, y, pi_, pj, lam, e);
            assert!((p - joint_pdf(y, x, pi_, pj, lam, e)).abs() < 1e-15);
            assert!((p - joint_pdf(x, y, pi_ + d, pj - d, lam, e)).abs() < 1e-14);
        }
    }

    #[test]
    fn vacuum_variance() {
        let mut rng = stream(1, 0, 0);
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| sample_pair(&mut rng, 0.0, 0.0, Complex64::new(0.0, 0.0), Efficiency::PERFECT).0)
            .collect();
        assert!((var(&xs) - 0.25).abs() < 0.001);
    }

    #[test]
    fn squeezed_sum_variance() {
        let mut rng = stream(2, 0, 0);
        let s: Vec<f64> = (0..1_000_000)
            .map(|_| {
                let (a, b) = sample_pair(&mut rng, 0.0, 0.0, Complex64::new(0.5, 0.0), Efficiency::PERFECT);
                a + b
            })
            .collect();
        assert!((var(&s) / 1.5 - 1.0).abs() < 0.01);
    }

    #[test]
    fn event_marginals_and_independence() {
        let e = eta(0.65);
        let sampler = EventSampler::new(&NopaParams::real(0.0, 0.0).unwrap(), e);
        let mut rng = stream(3, 0, 0);
        let n = 1_000_000;
        let ev: Vec<QuadSample> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
        let want = 0.25 + e.delta2();
        for j in 0..4 {
            let xs: Vec<f64> = ev.iter().map(|s| s.x[j]).collect();
            assert!((var(&xs) / want - 1.0).abs() < 0.01, "mode {j}");
            assert!(ev.iter().all(|s| (0.0..TAU).contains(&s.phase[j])));
        }
        // modes (1,2) against (3,4) under a twin-beam state
        let sampler = EventSampler::new(&NopaParams::real(0.6, 1.0).unwrap(), eta(0.9));
        let ev: Vec<QuadSample> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
        for (a, b) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            let prod: Vec<f64> = ev.iter().map(|s| s.x[a] * s.x[b]).collect();
            let m = prod.iter().sum::<f64>() / n as f64;
            let se = (var(&prod) / n as f64).sqrt();
            assert!(m.abs() < 3.0 * se, "cov({a},{b}) = {m} +- {se}");
        }
    }

    #[test]
    fn efficiency_smoothing_adds_delta2() {
        let lam = Complex64::new(0.5, 0.0);
        let n = 400_000;
        let mut rng = stream(4, 0, 0);
        let mut marg = |e: Efficiency| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let p = rng.random::<f64>() * TAU;
                    sample_pair(&mut rng, p, 0.0, lam, e).0
                })
                .collect()
        };
        let v1 = var(&marg(Efficiency::PERFECT));
        let e = eta(0.7);
        let v7 = var(&marg(e));
        // Var of a sample variance of Gaussian data ~ 2 sigma^4 / n
        let se = (2.0 * v1 * v1 / n as f64 + 2.0 * v7 * v7 / n as f64).sqrt();
        assert!((v7 - v1 - e.delta2()).abs() < 3.0 * se);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream(5, 1, 2).random()).collect();
        let mut s1 = stream(5, 1, 2);
        let b: Vec<u64> = (0..4).map(|_| s1.random()).collect();
        let mut s2 = stream(5, 1, 2);
        let c: Vec<u64> = (0..4).map(|_| s2.random()).collect();
        assert_eq!(b, c);
        assert_eq!(a[0], b[0]);
        let mut other = stream(5, 2, 1);
        assert_ne!(other.random::<u64>(), b[0]);
    }
}

//! Statistical self-checks of the kernels and the sampler.
//!
//! [`kernel_unbiasedness`] reconstructs `rho_00`, `rho_11` and `rho_01` of
//! single-mode Gaussian states from simulated homodyne data and compares
//! them with the exact values. [`pair_goodness_of_fit`] runs a chi-square
//! test of sampled twin-beam pairs against the joint density.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::kernel::PatternKernel;
use crate::model::{Efficiency, VACUUM_VARIANCE};
use crate::sampler::{joint_pdf, sample_pair, stream};

/// Single-mode states with known low-order density matrix elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TestState {
    Vacuum,
    Coherent(Complex64),
    /// Reduced state of one twin-beam mode with gain `lambda`: thermal with
    /// mean photon number `lambda^2 / (1 - lambda^2)`.
    TwinMarginal(f64),
}

impl TestState {
    pub fn name(&self) -> String {
        match self {
            TestState::Vacuum => "vacuum".into(),
            TestState::Coherent(a) => format!("coherent({})", a),
            TestState::TwinMarginal(l) => format!("twin-marginal({l})"),
        }
    }

    /// Exact `(rho_00, rho_11, rho_01)`.
    pub fn exact(&self) -> (f64, f64, Complex64) {
        match *self {
            TestState::Vacuum => (1.0, 0.0, Complex64::new(0.0, 0.0)),
            TestState::Coherent(a) => {
                let p0 = (-a.norm_sqr()).exp();
                (p0, a.norm_sqr() * p0, p0 * a.conj())
            }
            TestState::TwinMarginal(l) => {
                let l2 = l * l;
                (1.0 - l2, (1.0 - l2) * l2, Complex64::new(0.0, 0.0))
            }
        }
    }

    /// One homodyne outcome at a uniformly random LO phase, with detector
    /// efficiency `eta`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, eta: Efficiency) -> (f64, f64) {
        let phi = rng.random::<f64>() * TAU;
        let x = match *self {
            TestState::TwinMarginal(l) => {
                let phi_j = rng.random::<f64>() * TAU;
                sample_pair(rng, phi, phi_j, Complex64::new(l, 0.0), eta).0
            }
            state => {
                let mean = match state {
                    TestState::Coherent(a) => (a * Complex64::from_polar(1.0, -phi)).re,
                    _ => 0.0,
                };
                let sd = (VACUUM_VARIANCE + eta.delta2()).sqrt();
                mean + sd * rng.sample::<f64, _>(StandardNormal)
            }
        };
        (x, phi)
    }
}

/// One reconstructed matrix element against its exact value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementCheck {
    pub element: String,
    pub estimate: f64,
    pub std_error: f64,
    pub exact: f64,
}

impl ElementCheck {
    pub fn sigmas(&self) -> f64 {
        if self.std_error == 0.0 {
            return if self.estimate == self.exact { 0.0 } else { f64::INFINITY };
        }
        (self.estimate - self.exact).abs() / self.std_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnbiasednessResult {
    pub state: TestState,
    pub eta: f64,
    pub n_samples: u64,
    pub checks: Vec<ElementCheck>,
}

impl UnbiasednessResult {
    pub fn max_sigmas(&self) -> f64 {
        self.checks.iter().map(ElementCheck::sigmas).fold(0.0, f64::max)
    }

    pub fn passed(&self, sigmas: f64) -> bool {
        self.max_sigmas() < sigmas
    }
}

#[derive(Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn add(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn std_error(&self) -> f64 {
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

/// Reconstruct `rho_00`, `rho_11`, `Re rho_01`, `Im rho_01` from `n_samples`
/// simulated outcomes. Samples are independent, so errors are plain
/// standard errors of the mean.
pub fn kernel_unbiasedness(
    state: TestState,
    eta: Efficiency,
    n_samples: u64,
    seed: u64,
) -> UnbiasednessResult {
    let kernel = PatternKernel::tabulated(eta);
    let mut rng = stream(seed, 0, 0);
    let mut m: [Moments; 4] = Default::default();
    for _ in 0..n_samples {
        let (x, phi) = state.sample(&mut rng, eta);
        let k = kernel.values(x, phi);
        for (acc, v) in m.iter_mut().zip([k.k0, k.k1, k.k_plus.re, k.k_plus.im]) {
            acc.add(v);
        }
    }
    let (r00, r11, r01) = state.exact();
    let checks = ["rho_00", "rho_11", "Re rho_01", "Im rho_01"]
        .into_iter()
        .zip(m.iter().zip([r00, r11, r01.re, r01.im]))
        .map(|(name, (acc, exact))| ElementCheck {
            element: name.into(),
            estimate: acc.mean,
            std_error: acc.std_error(),
            exact,
        })
        .collect();
    UnbiasednessResult { state, eta: eta.get(), n_samples, checks }
}

pub const GOF_BINS: usize = 20;

/// Cells whose expected count falls below this are pooled into one.
pub const GOF_MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub n_samples: u64,
    pub var_i: f64,
    pub var_j: f64,
    /// Marginal variance implied by the density.
    pub expected_var: f64,
}

/// Covariance `[v_i, v_j, c]` read off the density itself: for a centred
/// Gaussian `-2 ln(p(x)/p(0))` is the quadratic form of the precision.
fn covariance_from_density(pdf: &dyn Fn(f64, f64) -> f64) -> [f64; 3] {
    let p0 = pdf(0.0, 0.0).ln();
    let q = |x: f64, y: f64| -2.0 * (pdf(x, y).ln() - p0);
    let (a, d) = (q(1.0, 0.0), q(0.0, 1.0));
    let b = 0.5 * (q(1.0, 1.0) - a - d);
    let det = a * d - b * b;
    [d / det, a / det, -b / det]
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Chi-square test of `sample_pair` against `joint_pdf` on a
/// [`GOF_BINS`]x[`GOF_BINS`] grid of marginal quantiles.
///
/// Expected cell probabilities integrate the density's conditional form in
/// the outer variable by the midpoint rule.
pub fn pair_goodness_of_fit(
    phi_i: f64,
    phi_j: f64,
    lambda_eff: Complex64,
    eta: Efficiency,
    n_samples: u64,
    seed: u64,
) -> GofResult {
    let pdf = |x: f64, y: f64| joint_pdf(x, y, phi_i, phi_j, lambda_eff, eta);
    let mut rng = stream(seed, 0, 0);
    chi_square_gof(&pdf, n_samples, || sample_pair(&mut rng, phi_i, phi_j, lambda_eff, eta))
}

fn chi_square_gof(
    pdf: &dyn Fn(f64, f64) -> f64,
    n_samples: u64,
    mut draw: impl FnMut() -> (f64, f64),
) -> GofResult {
    const NODES: usize = 128;
    let [vi, vj, c] = covariance_from_density(pdf);
    let (si, sj) = (vi.sqrt(), vj.sqrt());
    let n01 = std_normal();

    let edges: Vec<f64> =
        (0..=GOF_BINS).map(|k| n01.inverse_cdf(k as f64 / GOF_BINS as f64)).collect();
    let bin = |z: f64| edges[1..GOF_BINS].partition_point(|&e| e <= z);

    // x_j | x_i is normal with mean (c / v_i) x_i and variance v_j - c^2 / v_i
    let slope = c / vi;
    let sd_cond = (vj - c * c / vi).max(0.0).sqrt();
    let mut expected = vec![0.0; GOF_BINS * GOF_BINS];
    for a in 0..GOF_BINS {
        let lo = a as f64 / GOF_BINS as f64;
        let h = 1.0 / (GOF_BINS * NODES) as f64;
        for k in 0..NODES {
            let xi = si * n01.inverse_cdf(lo + (k as f64 + 0.5) * h);
            let mu = slope * xi;
            let mut prev = 0.0;
            for b in 0..GOF_BINS {
                let cdf = if b + 1 == GOF_BINS {
                    1.0
                } else {
                    n01.cdf((sj * edges[b + 1] - mu) / sd_cond)
                };
                expected[a * GOF_BINS + b] += (cdf - prev) * h;
                prev = cdf;
            }
        }
    }

    let mut observed = vec![0u64; GOF_BINS * GOF_BINS];
    let (mut mi, mut mj) = (Moments::default(), Moments::default());
    for _ in 0..n_samples {
        let (xi, xj) = draw();
        observed[bin(xi / si) * GOF_BINS + bin(xj / sj)] += 1;
        mi.add(xi);
        mj.add(xj);
    }

    let n = n_samples as f64;
    let (mut chi2, mut cells) = (0.0, 0usize);
    let (mut pooled_o, mut pooled_e) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(&expected) {
        let e = p * n;
        if e < GOF_MIN_EXPECTED {
            pooled_o += o as f64;
            pooled_e += e;
        } else {
            chi2 += (o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pooled_e > 0.0 {
        chi2 += (pooled_o - pooled_e).powi(2) / pooled_e;
        cells += 1;
    }
    let dof = cells.saturating_sub(1).max(1);
    let p_value = ChiSquared::new(dof as f64).expect("positive dof").sf(chi2);
    GofResult {
        chi2,
        dof,
        p_value,
        n_samples,
        var_i: mi.m2 / (mi.n - 1.0),
        var_j: mj.m2 / (mj.n - 1.0),
        expected_var: vi,
    }
}

/// Summary of the default self-test suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub unbiasedness: Vec<UnbiasednessResult>,
    pub goodness_of_fit: Vec<GofResult>,
    pub passed: bool,
}

/// States and efficiencies of the default kernel check.
pub fn default_states() -> [TestState; 3] {
    [
        TestState::Vacuum,
        TestState::Coherent(Complex64::new(0.5, 0.0)),
        TestState::TwinMarginal(1.0 / 3f64.sqrt()),
    ]
}

pub const DEFAULT_ETAS: [f64; 3] = [1.0, 0.85, 0.65];

/// Random `(phi_i, phi_j, lambda_eff, eta)` draws for the sampler check.
pub fn random_pair_parameters(seed: u64, count: usize) -> Vec<(f64, f64, Complex64, Efficiency)> {
    let mut rng = stream(seed, u64::MAX, 0);
    (0..count)
        .map(|_| {
            let phi_i = rng.random::<f64>() * TAU;
            let phi_j = rng.random::<f64>() * TAU;
            let lam = Complex64::from_polar(0.9 * rng.random::<f64>(), rng.random::<f64>() * TAU);
            let eta = Efficiency::new(0.55 + 0.45 * rng.random::<f64>()).expect("in range");
            (phi_i, phi_j, lam, eta)
        })
        .collect()
}

/// Kernel checks at 3 sigma over [`default_states`] x [`DEFAULT_ETAS`] and
/// goodness-of-fit at `p > 0.001` for `gof_draws` random pair parameters.
pub fn run_selftest(seed: u64, n_samples: u64, gof_draws: usize) -> SelftestReport {
    let mut unbiasedness = Vec::new();
    for (i, state) in default_states().into_iter().enumerate() {
        for (j, eta) in DEFAULT_ETAS.into_iter().enumerate() {
            let eta = Efficiency::new(eta).expect("valid eta");
            let sub = seed.wrapping_add((i * DEFAULT_ETAS.len() + j) as u64);
            unbiasedness.push(kernel_unbiasedness(state, eta, n_samples, sub));
        }
    }
    let goodness_of_fit: Vec<GofResult> = random_pair_parameters(seed, gof_draws)
        .into_iter()
        .enumerate()
        .map(|(k, (pi, pj, lam, eta))| {
            pair_goodness_of_fit(pi, pj, lam, eta, n_samples, seed.wrapping_add(1000 + k as u64))
        })
        .collect();
    let passed = unbiasedness.iter().all(|r| r.passed(3.0))
        && goodness_of_fit.iter().all(|g| g.p_value > 1e-3);
    SelftestReport { unbiasedness, goodness_of_fit, passed }
}

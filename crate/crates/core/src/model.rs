//! Domain types shared across the crate.
//!
//! Quadratures follow `x_phi = (a e^{-i phi} + a^dag e^{i phi}) / 2`, so the
//! vacuum variance is [`VACUUM_VARIANCE`] everywhere: in the sampler, in the
//! kernel argument scaling and in the test oracles.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigViolation, Error, Result};

/// Variance of a vacuum quadrature.
pub const VACUUM_VARIANCE: f64 = 0.25;

/// Output state of the parametric amplifier: complex gain and crystal phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NopaParams {
    lambda: Complex64,
    phi: f64,
}

impl NopaParams {
    pub fn new(lambda: Complex64, phi: f64) -> Result<Self> {
        if !lambda.re.is_finite() || !lambda.im.is_finite() || !phi.is_finite() {
            return Err(Error::InvalidParameter("non-finite gain or phase".into()));
        }
        if lambda.norm() >= 1.0 {
            return Err(Error::Config(vec![ConfigViolation::NonNormalizable(lambda.norm())]));
        }
        Ok(Self { lambda, phi: phi.rem_euclid(TAU) })
    }

    /// Real gain `|lambda|` with the given crystal phase.
    pub fn real(lambda: f64, phi: f64) -> Result<Self> {
        Self::new(Complex64::new(lambda, 0.0), phi)
    }

    pub fn from_mean_photon(n_mean: f64, phi: f64) -> Result<Self> {
        Self::real(lambda_from_mean_photon(n_mean)?, phi)
    }

    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Effective gain of the (a_v, b_h) pair, modes 1 and 2.
    pub fn lambda_12(&self) -> Complex64 {
        self.lambda
    }

    /// Effective gain of the (a_h, b_v) pair, modes 3 and 4.
    pub fn lambda_34(&self) -> Complex64 {
        self.lambda * Complex64::from_polar(1.0, self.phi)
    }

    /// Mean photon number per mode, `|L|^2 / (1 - |L|^2)`.
    pub fn mean_photon(&self) -> f64 {
        mean_photon(self.lambda.norm())
    }
}

pub fn mean_photon(lambda_abs: f64) -> f64 {
    let l2 = lambda_abs * lambda_abs;
    l2 / (1.0 - l2)
}

/// Inverse of [`mean_photon`]: `|lambda| = sqrt(N / (1 + N))`.
pub fn lambda_from_mean_photon(n_mean: f64) -> Result<f64> {
    if !n_mean.is_finite() || n_mean < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "mean photon number must be finite and >= 0, got {n_mean}"
        )));
    }
    Ok((n_mean / (1.0 + n_mean)).sqrt())
}

/// Polarizer rotation angles entering the Bell combination.
///
/// Rotations only appear through `cos 2t` and `sin 2t`, so every derived
/// quantity has period `pi` in each angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellAngles {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_prime: f64,
    pub beta_prime: f64,
}

impl BellAngles {
    pub const fn new(alpha: f64, beta: f64, alpha_prime: f64, beta_prime: f64) -> Self {
        Self { alpha, beta, alpha_prime, beta_prime }
    }

    /// `(0, 3pi/8, pi/4, pi/8)`: the maximal-violation setting for `phi = pi`.
    pub fn standard() -> Self {
        Self::new(0.0, 3.0 * PI / 8.0, PI / 4.0, PI / 8.0)
    }

    /// The four `(alpha, beta)` pairs in the order
    /// `C(a,b), C(a,b'), C(a',b'), C(a',b)`.
    pub fn pairs(&self) -> [(f64, f64); 4] {
        [
            (self.alpha, self.beta),
            (self.alpha, self.beta_prime),
            (self.alpha_prime, self.beta_prime),
            (self.alpha_prime, self.beta),
        ]
    }

    /// Each angle reduced to `[0, pi)`.
    pub fn normalized(&self) -> Self {
        let r = |t: f64| t.rem_euclid(PI);
        Self::new(r(self.alpha), r(self.beta), r(self.alpha_prime), r(self.beta_prime))
    }

    fn is_finite(&self) -> bool {
        [self.alpha, self.beta, self.alpha_prime, self.beta_prime]
            .iter()
            .all(|t| t.is_finite())
    }
}

/// `B = |C(a,b) - C(a,b')| + |C(a',b') + C(a',b)|`, with the correlations
/// given in [`BellAngles::pairs`] order.
pub fn bell_combination(c: [f64; 4]) -> f64 {
    (c[0] - c[1]).abs() + (c[2] + c[3]).abs()
}

/// Detector quantum efficiency, restricted to `(0.5, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Efficiency(f64);

impl Efficiency {
    pub const PERFECT: Efficiency = Efficiency(1.0);

    pub fn new(eta: f64) -> Result<Self> {
        if eta.is_finite() && eta > 0.5 && eta <= 1.0 {
            Ok(Self(eta))
        } else {
            Err(Error::Config(vec![ConfigViolation::KernelDivergence(eta)]))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// Added Gaussian quadrature noise, `(1 - eta) / (4 eta)`.
    pub fn delta2(self) -> f64 {
        (1.0 - self.0) / (4.0 * self.0)
    }
}

impl TryFrom<f64> for Efficiency {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Efficiency> for f64 {
    fn from(e: Efficiency) -> f64 {
        e.0
    }
}

/// One detection event: quadrature outcomes and LO phases for modes
/// `a_v, b_h, a_h, b_v` (1..4) in that order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadSample {
    pub x: [f64; 4],
    pub phase: [f64; 4],
}

impl QuadSample {
    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.phase.iter()).all(|v| v.is_finite())
    }
}

/// A ratio-type statistic with its block error. `value` is computed from the
/// full data set, `std_error` from the spread of per-block values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockedEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_blocks: u64,
    pub n_samples: u64,
}

impl BlockedEstimate {
    /// Distance from `target` in units of the standard error.
    pub fn sigmas_from(&self, target: f64) -> f64 {
        (self.value - target).abs() / self.std_error
    }
}

/// Unvalidated run parameters as they come from a config file or flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRunConfig {
    pub lambda: Complex64,
    pub phi: f64,
    pub angles: BellAngles,
    pub eta: f64,
    pub n_samples: u64,
    pub n_blocks: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidatedRun {
    pub params: NopaParams,
    pub angles: BellAngles,
    pub eta: Efficiency,
    pub n_samples: u64,
    pub n_blocks: u64,
    pub seed: u64,
}

/// Check every constraint and report all violations at once. On success the
/// crystal phase is reduced to `[0, 2pi)` and the angles to `[0, pi)`.
pub fn validate_run_config(
    raw: &RawRunConfig,
) -> std::result::Result<ValidatedRun, Vec<ConfigViolation>> {
    let mut errs = Vec::new();
    let lam = raw.lambda;
    if !(lam.re.is_finite() && lam.im.is_finite()) {
        errs.push(ConfigViolation::NonFinite { name: "lambda", value: lam.norm() });
    } else if lam.norm() >= 1.0 {
        errs.push(ConfigViolation::NonNormalizable(lam.norm()));
    }
    if !raw.phi.is_finite() {
        errs.push(ConfigViolation::NonFinite { name: "crystal phase", value: raw.phi });
    }
    if !raw.angles.is_finite() {
        errs.push(ConfigViolation::NonFinite { name: "angles", value: f64::NAN });
    }
    if !(raw.eta.is_finite() && raw.eta > 0.5 && raw.eta <= 1.0) {
        errs.push(ConfigViolation::KernelDivergence(raw.eta));
    }
    if raw.n_blocks < 2 {
        errs.push(ConfigViolation::TooFewBlocks(raw.n_blocks));
    }
    if raw.n_samples < raw.n_blocks {
        errs.push(ConfigViolation::TooFewSamples { samples: raw.n_samples, blocks: raw.n_blocks });
    }
    if !errs.is_empty() {
        return Err(errs);
    }
    Ok(ValidatedRun {
        params: NopaParams { lambda: lam, phi: raw.phi.rem_euclid(TAU) },
        angles: raw.angles.normalized(),
        eta: Efficiency(raw.eta),
        n_samples: raw.n_samples,
        n_blocks: raw.n_blocks,
        seed: raw.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw() -> RawRunConfig {
        RawRunConfig {
            lambda: Complex64::new(0.577, 0.0),
            phi: PI,
            angles: BellAngles::standard(),
            eta: 0.85,
            n_samples: 1_000_000,
            n_blocks: 20,
            seed: 1,
        }
    }

    #[test]
    fn lambda_from_mean_photon_values() {
        assert_eq!(lambda_from_mean_photon(0.0).unwrap(), 0.0);
        assert!((lambda_from_mean_photon(0.5).unwrap() - 0.577_350_269_189_625_8).abs() < 1e-15);
        assert!((lambda_from_mean_photon(1.0 / 3.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(lambda_from_mean_photon(-0.1).is_err());
        assert!(lambda_from_mean_photon(f64::NAN).is_err());
        assert!(lambda_from_mean_photon(f64::INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn mean_photon_round_trip(l in 0.0f64..0.999) {
            let back = lambda_from_mean_photon(mean_photon(l)).unwrap();
            prop_assert!((back - l).abs() <= 1e-12 * l.max(1e-300));
        }
    }

    #[test]
    fn standard_run_config_is_valid() {
        let v = validate_run_config(&raw()).unwrap();
        assert_eq!(v.n_blocks, 20);
        assert!((v.params.phi() - PI).abs() < 1e-15);
    }

    #[test]
    fn eta_at_half_is_rejected() {
        let errs = validate_run_config(&RawRunConfig { eta: 0.5, ..raw() }).unwrap_err();
        assert_eq!(errs, vec![ConfigViolation::KernelDivergence(0.5)]);
        assert!(errs[0].to_string().contains("kernel divergence"));
    }

    #[test]
    fn unit_gain_is_rejected() {
        let errs =
            validate_run_config(&RawRunConfig { lambda: Complex64::new(1.0, 0.0), ..raw() })
                .unwrap_err();
        assert!(errs[0].to_string().contains("non-normalizable state"));
    }

    #[test]
    fn all_violations_are_reported() {
        let bad = RawRunConfig {
            lambda: Complex64::new(0.0, 1.2),
            eta: 1.1,
            n_samples: 0,
            n_blocks: 1,
            ..raw()
        };
        let errs = validate_run_config(&bad).unwrap_err();
        assert_eq!(errs.len(), 4, "{errs:?}");
    }

    #[test]
    fn phases_are_normalized() {
        let v = validate_run_config(&RawRunConfig {
            phi: -PI / 2.0,
            angles: BellAngles::new(-0.1, PI + 0.2, 2.0 * PI, 0.3),
            ..raw()
        })
        .unwrap();
        assert!((v.params.phi() - 1.5 * PI).abs() < 1e-12);
        assert!((v.angles.alpha - (PI - 0.1)).abs() < 1e-12);
        assert!((v.angles.beta - 0.2).abs() < 1e-12);
        assert!(v.angles.alpha_prime.abs() < 1e-12);
    }

    #[test]
    fn efficiency_bounds() {
        assert!(Efficiency::new(1.0).is_ok());
        assert!(Efficiency::new(0.5).is_err());
        assert!(Efficiency::new(1.0 + 1e-12).is_err());
        assert_eq!(Efficiency::PERFECT.delta2(), 0.0);
        let e = Efficiency::new(0.65).unwrap();
        assert!((e.delta2() - 0.134_615_384_615_384_6).abs() < 1e-15);
    }
}

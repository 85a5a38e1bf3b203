//! Exact photon-number probabilities of the rotated twin-beam state.
//!
//! The four-mode state is `(1-|L|^2) sum_{n,m} L^n (L e^{i phi})^m |n,n,m,m>`.
//! The polarization rotations act on the pairs (1,3) and (2,4) and conserve
//! the photon number of each pair, and in the unrotated state both pairs hold
//! `K = n + m` photons. Each sector `K` therefore rotates independently inside
//! a `(K+1) x (K+1)` block, and truncating whole sectors at `K <= n_max` is
//! exact within the kept sectors. The discarded weight is reported as the
//! truncation deficit; nothing is renormalized.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{bell_combination, BellAngles, NopaParams};

pub const DEFAULT_N_MAX: usize = 8;

/// Amplitudes `c_n = sqrt(1-|L|^2) L_eff^n` of one twin beam.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinBeamAmplitudes {
    pub lambda_eff: Complex64,
    pub coeffs: Vec<Complex64>,
}

impl TwinBeamAmplitudes {
    /// `1 - sum |c_n|^2` over the kept amplitudes.
    pub fn deficit(&self) -> f64 {
        1.0 - self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }
}

/// The (1,2) and (3,4) factors of the output state.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinBeamState {
    pub pair_12: TwinBeamAmplitudes,
    pub pair_34: TwinBeamAmplitudes,
}

pub fn build_state(params: &NopaParams, n_max: usize) -> Result<TwinBeamState> {
    if n_max < 1 {
        return Err(Error::InvalidParameter("n_max must be at least 1".into()));
    }
    let norm = (1.0 - params.lambda().norm_sqr()).sqrt();
    let amps = |lambda_eff: Complex64| TwinBeamAmplitudes {
        lambda_eff,
        coeffs: (0..=n_max).map(|n| norm * lambda_eff.powu(n as u32)).collect(),
    };
    Ok(TwinBeamState { pair_12: amps(params.lambda_12()), pair_34: amps(params.lambda_34()) })
}

/// Which construction of the two-mode rotation matrices to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RotationMethod {
    /// Numerical exponential of the generator `A^dag B - A B^dag`.
    #[default]
    Exponential,
    /// Closed-form SU(2) beam-splitter amplitudes.
    Combinatorial,
}

/// Matrix of `exp[theta (A^dag B - A B^dag)]` on the `N`-photon sector,
/// indexed by the photon count in mode `A`: entry `(j, k)` is
/// `<j, N-j| U |k, N-k>`.
pub fn rotation_block(total: usize, theta: f64, method: RotationMethod) -> DMatrix<f64> {
    match method {
        RotationMethod::Exponential => {
            let mut gen = DMatrix::<f64>::zeros(total + 1, total + 1);
            for k in 0..total {
                // A^dag B |k, N-k> = sqrt((k+1)(N-k)) |k+1, N-k-1>
                let amp = (((k + 1) * (total - k)) as f64).sqrt();
                gen[(k + 1, k)] = amp;
                gen[(k, k + 1)] = -amp;
            }
            (gen * theta).exp()
        }
        RotationMethod::Combinatorial => {
            let (s, c) = theta.sin_cos();
            DMatrix::from_fn(total + 1, total + 1, |j, k| beam_splitter_amplitude(total, j, k, c, s))
        }
    }
}

// U A^dag U^dag = c A^dag - s B^dag and U B^dag U^dag = c B^dag + s A^dag, so
// U|k, N-k> = (cA^dag - sB^dag)^k (cB^dag + sA^dag)^{N-k} |0> / sqrt(k!(N-k)!).
// Expanding both binomials and collecting j photons in A gives the sum below.
fn beam_splitter_amplitude(total: usize, j: usize, k: usize, c: f64, s: f64) -> f64 {
    let n = total as i64;
    let (j, k) = (j as i64, k as i64);
    let mut sum = 0.0;
    for p in 0..=k {
        // p photons of A from the first factor, n-k-q from the second
        let q = p + n - k - j;
        if q < 0 || q > n - k {
            continue;
        }
        sum += binomial(k, p)
            * binomial(n - k, q)
            * c.powi((p + q) as i32)
            * (-s).powi((k - p) as i32)
            * s.powi((n - k - q) as i32);
    }
    let norm = (ln_factorial(j) + ln_factorial(n - j) - ln_factorial(k) - ln_factorial(n - k)) / 2.0;
    sum * norm.exp()
}

fn binomial(n: i64, k: i64) -> f64 {
    (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)).exp().round()
}

fn ln_factorial(n: i64) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Photon-number distribution `q(i,l,m,n)` of the rotated state for modes
/// `a_v, b_h, a_h, b_v`, each occupation in `0..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedJointProbabilities {
    pub alpha: f64,
    pub beta: f64,
    n_max: usize,
    q: Vec<f64>,
}

impl RotatedJointProbabilities {
    fn index(&self, o: [usize; 4]) -> Option<usize> {
        let d = self.n_max + 1;
        o.iter().all(|&v| v < d).then(|| ((o[0] * d + o[1]) * d + o[2]) * d + o[3])
    }

    /// `q(i,l,m,n)`; zero outside the truncated domain.
    pub fn get(&self, i: usize, l: usize, m: usize, n: usize) -> f64 {
        self.index([i, l, m, n]).map_or(0.0, |ix| self.q[ix])
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn total(&self) -> f64 {
        self.q.iter().sum()
    }

    /// Probability weight outside the kept sectors.
    pub fn deficit(&self) -> f64 {
        1.0 - self.total()
    }

    /// All nonzero entries as `((i,l,m,n), q)`.
    pub fn entries(&self) -> impl Iterator<Item = ([usize; 4], f64)> + '_ {
        let d = self.n_max + 1;
        self.q.iter().enumerate().filter(|(_, &v)| v != 0.0).map(move |(ix, &v)| {
            ([ix / (d * d * d), (ix / (d * d)) % d, (ix / d) % d, ix % d], v)
        })
    }
}

pub fn rotate_and_project(
    state: &TwinBeamState,
    alpha: f64,
    beta: f64,
    n_max: usize,
) -> Result<RotatedJointProbabilities> {
    rotate_and_project_with(state, alpha, beta, n_max, RotationMethod::Exponential)
}

/// `q(i,l,m,n) = |<i,l,m,n| U_13(alpha) U_24(beta) |psi>|^2` on sectors
/// `K <= n_max`.
///
/// `U_13(alpha) = exp[alpha (a_v^dag a_h - a_v a_h^dag)]` raises mode 1 at the
/// expense of mode 3; `U_24(beta) = exp[beta (b_v^dag b_h - b_v b_h^dag)]`
/// raises mode 4 at the expense of mode 2.
pub fn rotate_and_project_with(
    state: &TwinBeamState,
    alpha: f64,
    beta: f64,
    n_max: usize,
    method: RotationMethod,
) -> Result<RotatedJointProbabilities> {
    let available = state.pair_12.coeffs.len().min(state.pair_34.coeffs.len());
    if n_max < 1 || n_max >= available {
        return Err(Error::InvalidParameter(format!(
            "n_max = {n_max} needs state amplitudes up to n = {n_max}, have {}",
            available.saturating_sub(1)
        )));
    }
    let d = n_max + 1;
    let mut out = RotatedJointProbabilities { alpha, beta, n_max, q: vec![0.0; d * d * d * d] };
    for total in 0..=n_max {
        let ra = rotation_block(total, alpha, method);
        let rb = rotation_block(total, beta, method);
        // Unrotated sector: modes (1,2) hold n photons each, (3,4) hold K-n.
        let amp: Vec<Complex64> = (0..=total)
            .map(|n| state.pair_12.coeffs[n] * state.pair_34.coeffs[total - n])
            .collect();
        for i in 0..=total {
            for j in 0..=total {
                // i photons out in mode 1, j photons out in mode 4; input has
                // n in mode 1 and K-n in mode 4.
                let psi: Complex64 =
                    (0..=total).map(|n| amp[n] * (ra[(i, n)] * rb[(j, total - n)])).sum();
                let ix = out.index([i, total - j, total - i, j]).expect("inside truncation");
                out.q[ix] = psi.norm_sqr();
            }
        }
    }
    Ok(out)
}

/// One-pair probabilities extracted from `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairProbabilities {
    /// Absolute probability of one photon in each arm, any polarization.
    pub p11: f64,
    /// Conditional `p(n, m) = q(n, 1-m, 1-n, m) / P(1,1)`, indexed `[n][m]`.
    pub conditional: [[f64; 2]; 2],
}

impl PairProbabilities {
    pub fn from_rotated(q: &RotatedJointProbabilities) -> Result<Self> {
        let mut joint = [[0.0; 2]; 2];
        for (n, row) in joint.iter_mut().enumerate() {
            for (m, v) in row.iter_mut().enumerate() {
                *v = q.get(n, 1 - m, 1 - n, m);
            }
        }
        let p11: f64 = joint.iter().flatten().sum();
        if p11 <= 0.0 {
            return Err(Error::DegenerateState);
        }
        Ok(Self { p11, conditional: joint.map(|r| r.map(|v| v / p11)) })
    }

    /// `p(1,1) + p(0,0) - p(0,1) - p(1,0)`.
    pub fn correlation(&self) -> f64 {
        let p = &self.conditional;
        p[1][1] + p[0][0] - p[0][1] - p[1][0]
    }
}

pub fn pair_probabilities(
    params: &NopaParams,
    alpha: f64,
    beta: f64,
    n_max: usize,
) -> Result<PairProbabilities> {
    if n_max < 2 {
        return Err(Error::InvalidParameter("n_max must be at least 2".into()));
    }
    let state = build_state(params, n_max)?;
    PairProbabilities::from_rotated(&rotate_and_project(&state, alpha, beta, n_max)?)
}

pub fn correlation_exact(params: &NopaParams, alpha: f64, beta: f64, n_max: usize) -> Result<f64> {
    Ok(pair_probabilities(params, alpha, beta, n_max)?.correlation())
}

pub fn bell_exact(params: &NopaParams, angles: &BellAngles, n_max: usize) -> Result<f64> {
    let mut c = [0.0; 4];
    for (v, (a, b)) in c.iter_mut().zip(angles.pairs()) {
        *v = correlation_exact(params, a, b, n_max)?;
    }
    Ok(bell_combination(c))
}

/// `C = cos(phi) sin(2a) sin(2b) - cos(2a) cos(2b)`.
pub fn correlation_closed_form(phi: f64, alpha: f64, beta: f64) -> f64 {
    phi.cos() * (2.0 * alpha).sin() * (2.0 * beta).sin() - (2.0 * alpha).cos() * (2.0 * beta).cos()
}

pub fn bell_closed_form(phi: f64, angles: &BellAngles) -> f64 {
    bell_combination(angles.pairs().map(|(a, b)| correlation_closed_form(phi, a, b)))
}

/// `P(1,1) = 2 (1-|L|^2)^2 |L|^2`, independent of the rotation angles.
pub fn p11_closed_form(params: &NopaParams) -> f64 {
    let l2 = params.lambda().norm_sqr();
    2.0 * (1.0 - l2) * (1.0 - l2) * l2
}

/// Tsirelson's bound `2 sqrt 2`.
pub const TSIRELSON_BOUND: f64 = 4.0 * FRAC_1_SQRT_2;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn params(l: f64, phi: f64) -> NopaParams {
        NopaParams::real(l, phi).unwrap()
    }

    #[test]
    fn vacuum_state() {
        let s = build_state(&params(0.0, 1.0), 4).unwrap();
        assert_eq!(s.pair_12.coeffs[0], Complex64::new(1.0, 0.0));
        assert!(s.pair_12.coeffs[1..].iter().all(|c| c.norm() == 0.0));
        assert_eq!(s.pair_12.deficit(), 0.0);
    }

    #[test]
    fn half_gain_coefficients() {
        let s = build_state(&params(0.5, 0.0), 1).unwrap();
        let c0 = 0.75f64.sqrt();
        assert!((s.pair_12.coeffs[0].re - c0).abs() < 1e-15);
        assert!((s.pair_12.coeffs[1].re - 0.5 * c0).abs() < 1e-15);
        let s = build_state(&params(0.5, PI), 1).unwrap();
        assert!((s.pair_34.coeffs[1] - Complex64::new(-0.5 * c0, 0.0)).norm() < 1e-15);
        assert!((s.pair_12.coeffs[1].re - 0.5 * c0).abs() < 1e-15);
    }

    #[test]
    fn n_max_bounds() {
        assert!(build_state(&params(0.3, 0.0), 0).is_err());
        assert!(correlation_exact(&params(0.3, 0.0), 0.0, 0.0, 1).is_err());
        let s = build_state(&params(0.3, 0.0), 3).unwrap();
        assert!(rotate_and_project(&s, 0.1, 0.1, 4).is_err());
    }

    #[test]
    fn identity_rotation_keeps_unrotated_distribution() {
        let l: f64 = 0.6;
        let s = build_state(&params(l, 0.7), 5).unwrap();
        let q = rotate_and_project(&s, 0.0, 0.0, 5).unwrap();
        for ([i, ll, m, n], v) in q.entries() {
            assert!(i == ll && m == n, "unexpected occupation {:?}", (i, ll, m, n));
            let want = (1.0 - l * l).powi(2) * l.powi(2 * (i + m) as i32);
            assert!((v - want).abs() < 1e-14);
        }
    }

    #[test]
    fn quarter_rotation_swaps_polarization_modes() {
        let s = build_state(&params(0.45, 0.0), 4).unwrap();
        let q0 = rotate_and_project(&s, 0.0, 0.0, 4).unwrap();
        let q = rotate_and_project(&s, PI / 2.0, 0.0, 4).unwrap();
        for i in 0..=4 {
            for l in 0..=4 {
                for m in 0..=4 {
                    for n in 0..=4 {
                        assert!((q.get(i, l, m, n) - q0.get(m, l, i, n)).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn rotation_methods_agree() {
        for total in 0..=8 {
            for &theta in &[0.0, 0.3, PI / 8.0, 1.9, -0.7] {
                let a = rotation_block(total, theta, RotationMethod::Exponential);
                let b = rotation_block(total, theta, RotationMethod::Combinatorial);
                assert!((&a - &b).amax() < 1e-12, "N={total} theta={theta}");
                let ident = a.transpose() * &a;
                assert!((ident - DMatrix::identity(total + 1, total + 1)).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn rotated_probabilities_dual_path() {
        // |L| = 0.5, phi = pi, alpha = beta = pi/8, n_max = 3
        let s = build_state(&params(0.5, PI), 3).unwrap();
        let a = rotate_and_project_with(&s, PI / 8.0, PI / 8.0, 3, RotationMethod::Exponential)
            .unwrap();
        let b = rotate_and_project_with(&s, PI / 8.0, PI / 8.0, 3, RotationMethod::Combinatorial)
            .unwrap();
        for (o, va) in a.entries() {
            assert!((va - b.get(o[0], o[1], o[2], o[3])).abs() < 1e-14);
            assert!((0.0..=1.0).contains(&va));
            // pair photon numbers conserved
            assert_eq!(o[0] + o[2], o[1] + o[3]);
        }
        assert!((a.total() - b.total()).abs() < 1e-14);
        // one-pair sector by hand: amplitude of |1,0,0,1> is
        // (1-L^2) L [cos(a) sin(b) + e^{i phi} sin(a) cos(b)] = 0 at a = b = pi/8, phi = pi
        assert!(a.get(1, 0, 0, 1) < 1e-30);
        // |1,1,0,0>: (1-L^2) L [cos a cos b - e^{i phi} sin a sin b]
        let want = (0.75f64 * 0.5).powi(2);
        assert!((a.get(1, 1, 0, 0) - want).abs() < 1e-15);
        assert!(a.total() <= 1.0);
    }

    #[test]
    fn deficit_matches_sector_weights() {
        let l2: f64 = 0.49;
        let s = build_state(&params(l2.sqrt(), 0.3), 8).unwrap();
        let q = rotate_and_project(&s, 0.4, 1.1, 8).unwrap();
        let kept: f64 = (0..=8).map(|k| (k + 1) as f64 * (1.0 - l2).powi(2) * l2.powi(k)).sum();
        assert!((q.deficit() - (1.0 - kept)).abs() < 1e-14);
    }

    #[test]
    fn correlation_examples() {
        let sqrt_half = FRAC_1_SQRT_2;
        for l in [0.2, 0.577, 0.9] {
            let c = correlation_exact(&params(l, PI), 0.0, 3.0 * PI / 8.0, 8).unwrap();
            assert!((c - sqrt_half).abs() < 1e-12);
            let c = correlation_exact(&params(l, 2.1), 0.0, 0.0, 8).unwrap();
            assert!((c + 1.0).abs() < 1e-12);
        }
        let a = correlation_exact(&params(0.3, 0.8), 0.2, 0.9, 8).unwrap();
        let b = correlation_exact(&params(0.7, 0.8), 0.2, 0.9, 8).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(matches!(
            correlation_exact(&params(0.0, 0.0), 0.1, 0.2, 8),
            Err(Error::DegenerateState)
        ));
    }

    #[test]
    fn bell_examples() {
        let angles = BellAngles::standard();
        let b = bell_exact(&params(0.577, PI), &angles, 8).unwrap();
        assert!((b - TSIRELSON_BOUND).abs() < 1e-9);
        let b = bell_exact(&params(0.577, PI / 2.0), &angles, 8).unwrap();
        assert!((b - 2f64.sqrt()).abs() < 1e-12);
        let b = bell_exact(&params(0.4, 1.0), &BellAngles::new(0.0, 0.0, 0.0, 0.0), 8).unwrap();
        assert!((b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn p11_matches_closed_form() {
        let p = params(0.577, PI);
        let pp = pair_probabilities(&p, 0.3, 1.2, 8).unwrap();
        assert!((pp.p11 - p11_closed_form(&p)).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn conditional_probabilities_are_a_distribution(
            l in 0.05f64..0.95, phi in 0.0f64..6.3, a in -4.0f64..4.0, b in -4.0f64..4.0
        ) {
            let pp = pair_probabilities(&params(l, phi), a, b, 4).unwrap();
            let total: f64 = pp.conditional.iter().flatten().sum();
            prop_assert!((total - 1.0).abs() < 1e-14);
            for v in pp.conditional.iter().flatten() {
                prop_assert!((-1e-15..=1.0 + 1e-15).contains(v));
            }
        }

        #[test]
        fn period_pi_in_each_angle(
            l in 0.05f64..0.95, phi in 0.0f64..6.3, a in -2.0f64..2.0, b in -2.0f64..2.0
        ) {
            let p = params(l, phi);
            let c = correlation_exact(&p, a, b, 3).unwrap();
            prop_assert!((correlation_exact(&p, a + PI, b, 3).unwrap() - c).abs() < 1e-12);
            prop_assert!((correlation_exact(&p, a, b + PI, 3).unwrap() - c).abs() < 1e-12);
        }

        #[test]
        fn zero_angle_keeps_pair_distribution(
            l in 0.05f64..0.9, phi in 0.0f64..6.3, b in -2.0f64..2.0
        ) {
            // alpha = 0 leaves the (1,3) occupations as in the unrotated state
            let s = build_state(&params(l, phi), 4).unwrap();
            let q0 = rotate_and_project(&s, 0.0, 0.0, 4).unwrap();
            let q = rotate_and_project(&s, 0.0, b, 4).unwrap();
            for i in 0..=4 {
                for m in 0..=4 {
                    let marg = |q: &RotatedJointProbabilities| -> f64 {
                        (0..=4).flat_map(|l| (0..=4).map(move |n| (l, n)))
                            .map(|(l, n)| q.get(i, l, m, n)).sum()
                    };
                    prop_assert!((marg(&q) - marg(&q0)).abs() < 1e-13);
                }
            }
        }
    }
}

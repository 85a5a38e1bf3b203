//! Tomographic pattern functions `<n| K_eta(x - x_phi) |m>` for `n, m <= 1`.
//!
//! With `x_phi = (a e^{-i phi} + a^dag e^{i phi}) / 2` the kernel is
//!
//! ```text
//! K_eta(x - x_phi) = \int dk |k|/4 exp[(1-eta)/(8 eta) k^2 + i k (x - x_phi)]
//! ```
//!
//! averaged over `phi` uniform on `[0, 2pi)`. Its Fock matrix elements reduce
//! to three even/odd profiles of `u = x / (2 sqrt(c))` with
//! `c = (1/4 - Delta^2_eta) / 2 = (2 eta - 1) / (8 eta)`, written in terms of
//! Dawson's integral `F` and `g = 1 - 2uF`:
//!
//! ```text
//! <0|K|0> = g / (4c)
//! <1|K|1> = g / (4c) - [g (1 - u^2) - u F] / (16 c^2)
//! <0|K|1> = e^{-i phi} (F + u g) / (8 c^{3/2})
//! ```
//!
//! `c > 0` exactly when `eta > 1/2`; at and below that the integral diverges.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Efficiency, QuadSample, VACUUM_VARIANCE};
use crate::special::{asymptotic_sums, dawson, ASYMPTOTIC_LIMIT};

/// Sign of the LO phase in the off-diagonal element: `K_+ = e^{i s phi} |K_+|`
/// with `s = -1`. Fixed by the complex coherent-state reconstruction test;
/// averaging `K_+` over data from `|a>` yields `<0|rho|1> = e^{-|a|^2} conj(a)`.
pub const OFFDIAG_PHASE_SIGN: f64 = -1.0;

/// Kernel elements for one mode of one event. `K_-` is derived.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KernelValues {
    pub k0: f64,
    pub k1: f64,
    pub k_plus: Complex64,
}

impl KernelValues {
    #[inline]
    pub fn k_minus(&self) -> Complex64 {
        self.k_plus.conj()
    }
}

// Dimensionless profiles at a given u: (g, g(1-u^2) - uF, F + ug).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Profiles {
    p0: f64,
    p1: f64,
    ps: f64,
}

fn profiles_exact(u: f64) -> Profiles {
    let au = u.abs();
    if au >= ASYMPTOTIC_LIMIT {
        // g = -sum_{k>=1} a_k, p1 = sum_k (k-1) a_k, ps = -(1/u) sum_k k a_k
        let (t, s1, s2) = asymptotic_sums(au);
        let ps = -s1 / au;
        return Profiles { p0: -t, p1: s2, ps: if u < 0.0 { -ps } else { ps } };
    }
    let f = dawson(u);
    let g = 1.0 - 2.0 * u * f;
    Profiles { p0: g, p1: g * (1.0 - u * u) - u * f, ps: f + u * g }
}

// d/du of the three profiles, using F' = g and g' = -2F - 2ug.
fn profile_derivatives(u: f64) -> Profiles {
    if u.abs() >= ASYMPTOTIC_LIMIT {
        let h = 1e-4 * u.abs();
        let (a, b) = (profiles_exact(u + h), profiles_exact(u - h));
        return Profiles {
            p0: (a.p0 - b.p0) / (2.0 * h),
            p1: (a.p1 - b.p1) / (2.0 * h),
            ps: (a.ps - b.ps) / (2.0 * h),
        };
    }
    let f = dawson(u);
    let g = 1.0 - 2.0 * u * f;
    let dg = -2.0 * f - 2.0 * u * g;
    Profiles { p0: dg, p1: dg * (1.0 - u * u) - 3.0 * u * g - f, ps: 2.0 * g + u * dg }
}

/// Upper end of the interpolation table in `u`; beyond it the exact path is used.
const TABLE_U_MAX: f64 = ASYMPTOTIC_LIMIT;
const TABLE_STEPS_PER_UNIT: usize = 512;

/// Cubic Hermite table of the profiles on `u in [0, TABLE_U_MAX]`.
#[derive(Debug, Clone)]
struct ProfileTable {
    inv_h: f64,
    h: f64,
    // per node: [p0, p0', p1, p1', ps, ps']
    nodes: Vec<[f64; 6]>,
}

impl ProfileTable {
    fn build() -> Self {
        let n = (TABLE_U_MAX as usize) * TABLE_STEPS_PER_UNIT;
        let h = 1.0 / TABLE_STEPS_PER_UNIT as f64;
        let nodes = (0..=n)
            .map(|i| {
                let u = i as f64 * h;
                let p = profiles_exact(u);
                let d = profile_derivatives(u);
                [p.p0, d.p0, p.p1, d.p1, p.ps, d.ps]
            })
            .collect();
        Self { inv_h: TABLE_STEPS_PER_UNIT as f64, h, nodes }
    }

    #[inline]
    fn eval(&self, u: f64) -> Option<Profiles> {
        let au = u.abs();
        let pos = au * self.inv_h;
        let i = pos as usize;
        if i + 1 >= self.nodes.len() {
            return None;
        }
        let t = pos - i as f64;
        let (a, b) = (&self.nodes[i], &self.nodes[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = (t3 - 2.0 * t2 + t) * self.h;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = (t3 - t2) * self.h;
        let herm = |k: usize| h00 * a[k] + h10 * a[k + 1] + h01 * b[k] + h11 * b[k + 1];
        let ps = herm(4);
        Some(Profiles { p0: herm(0), p1: herm(2), ps: if u < 0.0 { -ps } else { ps } })
    }
}

/// Pattern-function evaluator for a fixed detector efficiency.
#[derive(Debug, Clone)]
pub struct PatternKernel {
    eta: Efficiency,
    u_scale: f64,
    diag_scale: f64,
    quad_scale: f64,
    off_scale: f64,
    table: Option<ProfileTable>,
}

impl PatternKernel {
    /// Kernel evaluated through Dawson's integral at every call.
    pub fn exact(eta: Efficiency) -> Self {
        let c = 0.5 * (VACUUM_VARIANCE - eta.delta2());
        Self {
            eta,
            u_scale: 1.0 / (2.0 * c.sqrt()),
            diag_scale: 1.0 / (4.0 * c),
            quad_scale: 1.0 / (16.0 * c * c),
            off_scale: 1.0 / (8.0 * c.powf(1.5)),
            table: None,
        }
    }

    /// Kernel backed by an interpolation table; agrees with [`Self::exact`]
    /// to better than `1e-9` and falls back to it outside the table.
    pub fn tabulated(eta: Efficiency) -> Self {
        Self { table: Some(ProfileTable::build()), ..Self::exact(eta) }
    }

    pub fn efficiency(&self) -> Efficiency {
        self.eta
    }

    #[inline]
    fn profiles(&self, x: f64) -> Profiles {
        let u = x * self.u_scale;
        self.table
            .as_ref()
            .and_then(|t| t.eval(u))
            .unwrap_or_else(|| profiles_exact(u))
    }

    /// `<n|K|n>` for `n` in `{0, 1}`.
    pub fn diag(&self, n: u8, x: f64) -> Result<f64> {
        let p = self.profiles(x);
        match n {
            0 => Ok(p.p0 * self.diag_scale),
            1 => Ok(p.p0 * self.diag_scale - p.p1 * self.quad_scale),
            _ => Err(Error::InvalidParameter(format!("diagonal element n = {n} not supported"))),
        }
    }

    /// `K_+ = <0|K|1>` at LO phase `phi`.
    pub fn offdiag(&self, x: f64, phi: f64) -> Complex64 {
        let p = self.profiles(x);
        Complex64::from_polar(p.ps * self.off_scale, OFFDIAG_PHASE_SIGN * phi)
    }

    #[inline]
    pub fn values(&self, x: f64, phi: f64) -> KernelValues {
        let p = self.profiles(x);
        let k0 = p.p0 * self.diag_scale;
        let (s, c) = phi.sin_cos();
        let r = p.ps * self.off_scale;
        KernelValues {
            k0,
            k1: k0 - p.p1 * self.quad_scale,
            k_plus: Complex64::new(r * c, OFFDIAG_PHASE_SIGN * r * s),
        }
    }

    /// Kernel elements for each of the four modes of an event.
    #[inline]
    pub fn event(&self, sample: &QuadSample) -> [KernelValues; 4] {
        std::array::from_fn(|j| self.values(sample.x[j], sample.phase[j]))
    }
}

/// `<n|K_eta(x - x_phi)|n>` for `n` in `{0, 1}`, exact path.
pub fn kernel_diag(n: u8, x: f64, eta: f64) -> Result<f64> {
    PatternKernel::exact(Efficiency::new(eta)?).diag(n, x)
}

/// `<0|K_eta(x - x_phi)|1>`, exact path. `K_-` is its conjugate.
pub fn kernel_offdiag(x: f64, phi: f64, eta: f64) -> Result<Complex64> {
    Ok(PatternKernel::exact(Efficiency::new(eta)?).offdiag(x, phi))
}

pub fn kernel_event(sample: &QuadSample, eta: f64) -> Result<[KernelValues; 4]> {
    if !sample.is_finite() {
        return Err(Error::InvalidParameter("non-finite quadrature sample".into()));
    }
    Ok(PatternKernel::exact(Efficiency::new(eta)?).event(sample))
}

//! Ratio-of-averages estimator for `P(1,1)`, `C(alpha, beta)` and `B`.
//!
//! Every event contributes the one-pair weight
//!
//! ```text
//! (K1^1 K0^3 + K0^1 K1^3)(K1^2 K0^4 + K0^2 K1^4)
//! ```
//!
//! and, per angle pair, the correlation numerator
//!
//! ```text
//! [cos2a (K1^1 K0^3 - K0^1 K1^3) + sin2a (K+^1 K-^3 + K-^1 K+^3)]
//!   x [cos2b (K0^2 K1^4 - K1^2 K0^4) + sin2b (K+^2 K-^4 + K-^2 K+^4)]
//! ```
//!
//! `C` is the ratio of the two averages. Central values come from the full
//! data set; errors from the spread of the same statistic over equal blocks.
//! Samples left over after `n_blocks` equal blocks count toward the central
//! value only.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernel::{KernelValues, PatternKernel};
use crate::model::{bell_combination, BellAngles, BlockedEstimate, Efficiency, QuadSample};

/// Relative size of the imaginary residue tolerated in a numerator.
const IMAG_TOLERANCE: f64 = 1e-9;

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Partition of `n_samples` event indices into `n_blocks` equal blocks plus
/// a trailing remainder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    n_samples: u64,
    n_blocks: u64,
    block_size: u64,
}

impl BlockLayout {
    pub fn new(n_samples: u64, n_blocks: u64) -> Result<Self> {
        if n_blocks < 2 || n_samples < n_blocks {
            return Err(Error::InvalidParameter(format!(
                "cannot split {n_samples} samples into {n_blocks} blocks (need >= 2 blocks)"
            )));
        }
        Ok(Self { n_samples, n_blocks, block_size: n_samples / n_blocks })
    }

    pub fn n_samples(&self) -> u64 {
        self.n_samples
    }

    pub fn n_blocks(&self) -> u64 {
        self.n_blocks
    }

    pub fn block_size(&self) -> u64 {
        self.block_size
    }

    /// Block holding event `index`, `None` for the remainder.
    #[inline]
    pub fn block_of(&self, index: u64) -> Option<usize> {
        let b = index / self.block_size;
        (b < self.n_blocks).then_some(b as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct AngleTerms {
    c2a: f64,
    s2a: f64,
    c2b: f64,
    s2b: f64,
}

impl AngleTerms {
    fn new(alpha: f64, beta: f64) -> Self {
        let (s2a, c2a) = (2.0 * alpha).sin_cos();
        let (s2b, c2b) = (2.0 * beta).sin_cos();
        Self { c2a, s2a, c2b, s2b }
    }
}

// Angle-independent products of one event.
#[derive(Debug, Clone, Copy)]
struct EventTerms {
    p11: f64,
    diag_a: f64,
    off_a: f64,
    diag_b: f64,
    off_b: f64,
}

impl EventTerms {
    #[inline]
    fn new(kv: &[KernelValues; 4]) -> Self {
        let [m1, m2, m3, m4] = kv;
        let one3 = m1.k1 * m3.k0;
        let three1 = m1.k0 * m3.k1;
        let two4 = m2.k1 * m4.k0;
        let four2 = m2.k0 * m4.k1;
        // K+ K-' + K- K+' = 2 Re(K+ conj(K+'))
        let off_a = 2.0 * (m1.k_plus.re * m3.k_plus.re + m1.k_plus.im * m3.k_plus.im);
        let off_b = 2.0 * (m2.k_plus.re * m4.k_plus.re + m2.k_plus.im * m4.k_plus.im);
        Self {
            p11: (one3 + three1) * (two4 + four2),
            diag_a: one3 - three1,
            off_a,
            diag_b: four2 - two4,
            off_b,
        }
    }

    #[inline]
    fn numerator(&self, t: &AngleTerms) -> f64 {
        (t.c2a * self.diag_a + t.s2a * self.off_a) * (t.c2b * self.diag_b + t.s2b * self.off_b)
    }
}

/// Integrand whose average is `P(1,1)`.
pub fn p11_integrand(kv: &[KernelValues; 4]) -> f64 {
    EventTerms::new(kv).p11
}

/// Integrand whose average is `P(1,1) C(alpha, beta)`, evaluated in complex
/// arithmetic. A non-negligible imaginary part means the off-diagonal kernels
/// are not a conjugate pair.
pub fn c_numerator_integrand(kv: &[KernelValues; 4], alpha: f64, beta: f64) -> Result<f64> {
    let [m1, m2, m3, m4] = kv;
    let (s2a, c2a) = (2.0 * alpha).sin_cos();
    let (s2b, c2b) = (2.0 * beta).sin_cos();
    let a = Complex64::from(c2a * (m1.k1 * m3.k0 - m1.k0 * m3.k1))
        + s2a * (m1.k_plus * m3.k_minus() + m1.k_minus() * m3.k_plus);
    let b = Complex64::from(c2b * (m2.k0 * m4.k1 - m2.k1 * m4.k0))
        + s2b * (m2.k_plus * m4.k_minus() + m2.k_minus() * m4.k_plus);
    let v = a * b;
    check_real(v)
}

fn check_real(v: Complex64) -> Result<f64> {
    if !v.re.is_finite() || v.im.abs() > IMAG_TOLERANCE * v.norm().max(1.0) {
        return Err(Error::ConventionViolation { real: v.re, imag: v.im });
    }
    Ok(v.re)
}

#[derive(Debug, Clone, PartialEq)]
struct Sums {
    p11: NeumaierSum,
    num: Vec<NeumaierSum>,
    count: u64,
}

impl Sums {
    fn new(n_pairs: usize) -> Self {
        Self { p11: NeumaierSum::default(), num: vec![NeumaierSum::default(); n_pairs], count: 0 }
    }

    fn merge(&mut self, other: &Sums) {
        self.p11.merge(&other.p11);
        for (a, b) in self.num.iter_mut().zip(&other.num) {
            a.merge(b);
        }
        self.count += other.count;
    }
}

/// Per-block running sums of the `P(1,1)` integrand and of one numerator
/// per requested angle pair.
///
/// Accumulators are additive: merging accumulators built over disjoint index
/// ranges equals accumulating the union, up to compensated-summation rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct EventAccumulator {
    layout: BlockLayout,
    pairs: Vec<(f64, f64)>,
    terms: Vec<AngleTerms>,
    blocks: Vec<Sums>,
    remainder: Sums,
}

impl EventAccumulator {
    pub fn new(layout: BlockLayout, pairs: &[(f64, f64)]) -> Self {
        let n = pairs.len();
        Self {
            layout,
            pairs: pairs.to_vec(),
            terms: pairs.iter().map(|&(a, b)| AngleTerms::new(a, b)).collect(),
            blocks: vec![Sums::new(n); layout.n_blocks as usize],
            remainder: Sums::new(n),
        }
    }

    /// Accumulator for the four pairs of a Bell combination.
    pub fn for_bell(layout: BlockLayout, angles: &BellAngles) -> Self {
        Self::new(layout, &angles.pairs())
    }

    pub fn layout(&self) -> BlockLayout {
        self.layout
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    /// Add the kernels of event number `index` of the run.
    #[inline]
    pub fn add(&mut self, index: u64, kv: &[KernelValues; 4]) {
        let ev = EventTerms::new(kv);
        let slot = match self.layout.block_of(index) {
            Some(b) => &mut self.blocks[b],
            None => &mut self.remainder,
        };
        slot.p11.add(ev.p11);
        for (acc, t) in slot.num.iter_mut().zip(&self.terms) {
            acc.add(ev.numerator(t));
        }
        slot.count += 1;
    }

    pub fn merge(&mut self, other: &EventAccumulator) {
        assert_eq!(self.layout, other.layout, "merging accumulators with different layouts");
        assert_eq!(self.pairs, other.pairs, "merging accumulators with different angles");
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.merge(b);
        }
        self.remainder.merge(&other.remainder);
    }

    pub fn count(&self) -> u64 {
        self.blocks.iter().map(|b| b.count).sum::<u64>() + self.remainder.count
    }

    fn totals(&self) -> Sums {
        let mut t = Sums::new(self.pairs.len());
        for b in &self.blocks {
            t.merge(b);
        }
        t.merge(&self.remainder);
        t
    }

    fn check_complete(&self) -> Result<()> {
        if self.count() != self.layout.n_samples {
            return Err(Error::InvalidParameter(format!(
                "accumulated {} events, layout expects {}",
                self.count(),
                self.layout.n_samples
            )));
        }
        Ok(())
    }

    fn estimate(&self, full: f64, per_block: impl Fn(&Sums) -> f64) -> BlockedEstimate {
        let values: Vec<f64> = self.blocks.iter().map(per_block).collect();
        BlockedEstimate {
            value: full,
            std_error: std_error_of_mean(&values),
            n_blocks: self.layout.n_blocks,
            n_samples: self.layout.n_samples,
        }
    }

    /// Estimate of `P(1,1)`, a plain average.
    pub fn p11(&self) -> Result<BlockedEstimate> {
        self.check_complete()?;
        let t = self.totals();
        Ok(self.estimate(t.p11.value() / t.count as f64, |b| b.p11.value() / b.count as f64))
    }

    /// Estimate of `C` for the `k`-th angle pair.
    pub fn correlation(&self, k: usize) -> Result<BlockedEstimate> {
        self.check_complete()?;
        let t = self.totals();
        let den = t.p11.value();
        if den.is_nan() || den <= 0.0 {
            return Err(Error::IllConditioned(den / t.count as f64));
        }
        Ok(self.estimate(t.num[k].value() / den, |b| b.num[k].value() / b.p11.value()))
    }

    /// `B` from the pairs at `idx`, in [`BellAngles::pairs`] order.
    pub fn bell(&self, idx: [usize; 4]) -> Result<BlockedEstimate> {
        self.check_complete()?;
        let t = self.totals();
        let den = t.p11.value();
        if den.is_nan() || den <= 0.0 {
            return Err(Error::IllConditioned(den / t.count as f64));
        }
        let b_of = |s: &Sums, d: f64| bell_combination(idx.map(|k| s.num[k].value() / d));
        Ok(self.estimate(b_of(&t, den), |b| b_of(b, b.p11.value())))
    }
}

/// Standard error of the mean of `values` (sample variance over `n - 1`).
pub fn std_error_of_mean(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n * (n - 1.0))).sqrt()
}

/// Accumulate a slice of events, event `i` carrying run index `i`.
pub fn accumulate(
    events: &[QuadSample],
    kernel: &PatternKernel,
    layout: BlockLayout,
    pairs: &[(f64, f64)],
) -> EventAccumulator {
    let mut acc = EventAccumulator::new(layout, pairs);
    for (i, ev) in events.iter().enumerate() {
        acc.add(i as u64, &kernel.event(ev));
    }
    acc
}

fn checked_layout(events: &[QuadSample], n_blocks: u64) -> Result<BlockLayout> {
    if let Some(bad) = events.iter().position(|e| !e.is_finite()) {
        return Err(Error::InvalidParameter(format!("event {bad} is not finite")));
    }
    BlockLayout::new(events.len() as u64, n_blocks)
}

pub fn estimate_correlation(
    events: &[QuadSample],
    alpha: f64,
    beta: f64,
    eta: Efficiency,
    n_blocks: u64,
) -> Result<BlockedEstimate> {
    let layout = checked_layout(events, n_blocks)?;
    let kernel = PatternKernel::tabulated(eta);
    accumulate(events, &kernel, layout, &[(alpha, beta)]).correlation(0)
}

/// `B` with all four correlations evaluated on every event.
pub fn estimate_bell(
    events: &[QuadSample],
    angles: &BellAngles,
    eta: Efficiency,
    n_blocks: u64,
) -> Result<BlockedEstimate> {
    let layout = checked_layout(events, n_blocks)?;
    let kernel = PatternKernel::tabulated(eta);
    accumulate(events, &kernel, layout, &angles.pairs()).bell([0, 1, 2, 3])
}

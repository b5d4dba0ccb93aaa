//! Special functions and random streams shared by the rest of the crate.
//!
//! Everything here is a pure function of its arguments except [`RngStream`],
//! which is a value type: clone or re-key it per task instead of sharing it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of a Beta distribution over one dose's DLT rate.
///
/// `a` counts (pseudo-)toxicities and `b` (pseudo-)non-toxicities, so the
/// mean is `a / (a + b)` and the effective sample size is `a + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct BetaParams {
    a: f64,
    b: f64,
}

impl BetaParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
            return Err(Error::Domain(format!(
                "Beta parameters must be positive and finite, got ({a}, {b})"
            )));
        }
        Ok(Self { a, b })
    }

    /// Prior with the given mean and effective sample size.
    pub fn from_mean_ess(mean: f64, ess: f64) -> Result<Self> {
        if !(mean > 0.0 && mean < 1.0) {
            return Err(Error::Domain(format!("mean must lie in (0, 1), got {mean}")));
        }
        Self::new(mean * ess, (1.0 - mean) * ess)
    }

    #[inline]
    pub fn a(&self) -> f64 {
        self.a
    }

    #[inline]
    pub fn b(&self) -> f64 {
        self.b
    }

    #[inline]
    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    /// Effective sample size, `a + b`.
    #[inline]
    pub fn ess(&self) -> f64 {
        self.a + self.b
    }

    /// Conjugate update after `toxic` DLTs and `safe` non-DLTs.
    pub(crate) fn observe(self, toxic: f64, safe: f64) -> Self {
        Self {
            a: self.a + toxic,
            b: self.b + safe,
        }
    }

    /// Divides both pseudo-counts by `factor`, keeping the mean.
    pub(crate) fn shrink(self, factor: f64) -> Self {
        Self {
            a: self.a / factor,
            b: self.b / factor,
        }
    }
}

impl TryFrom<[f64; 2]> for BetaParams {
    type Error = Error;

    fn try_from([a, b]: [f64; 2]) -> Result<Self> {
        Self::new(a, b)
    }
}

impl From<BetaParams> for [f64; 2] {
    fn from(p: BetaParams) -> Self {
        [p.a, p.b]
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];
const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Natural log of the gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(ln_gamma_unchecked(x))
}

fn ln_gamma_unchecked(x: f64) -> f64 {
    // Lanczos loses relative accuracy below 1/2; shift up with Γ(x) = Γ(x+1)/x.
    if x < 0.5 {
        return ln_gamma_unchecked(x + 1.0) - x.ln();
    }
    let z = x - 1.0;
    let mut series = LANCZOS_COEFFS[0];
    for (k, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        series += c / (z + k as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    HALF_LN_TWO_PI + (z + 0.5) * t.ln() - t + series.ln()
}

/// `ln B(a, b)`.
fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma_unchecked(a) + ln_gamma_unchecked(b) - ln_gamma_unchecked(a + b)
}

const CF_MAX_ITER: usize = 10_000;
const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;

/// Modified Lentz evaluation of the continued fraction for `I_x(a, b)`.
fn incbeta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Returns `(I_x(a, b), 1 - I_x(a, b))`, each computed on the branch where
/// it does not suffer cancellation.
fn incbeta_pair(x: f64, a: f64, b: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0);
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        let lower = (front * incbeta_cf(a, b, x) / a).clamp(0.0, 1.0);
        (lower, 1.0 - lower)
    } else {
        let upper = (front * incbeta_cf(b, a, 1.0 - x) / b).clamp(0.0, 1.0);
        (1.0 - upper, upper)
    }
}

fn check_probability(x: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("{what} must lie in [0, 1], got {x}")));
    }
    Ok(())
}

/// Beta CDF `F(x; a, b)`, the regularized incomplete beta function.
pub fn beta_cdf(x: f64, p: BetaParams) -> Result<f64> {
    check_probability(x, "x")?;
    Ok(incbeta_pair(x, p.a, p.b).0)
}

/// Upper tail `P(X > x)` for `X ~ Beta(a, b)`.
pub fn beta_tail(x: f64, p: BetaParams) -> Result<f64> {
    check_probability(x, "x")?;
    Ok(incbeta_pair(x, p.a, p.b).1)
}

/// A reproducible random stream keyed by `(seed, stream id)`.
///
/// Backed by ChaCha8, whose 2^64 stream ids give each replicate its own
/// independent sequence regardless of which worker runs it.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

/// One Bernoulli(p) draw; `true` marks a DLT.
pub fn bernoulli(p: f64, rng: &mut RngStream) -> Result<bool> {
    check_probability(p, "p")?;
    Ok(rng.uniform() < p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beta(a: f64, b: f64) -> BetaParams {
        BetaParams::new(a, b).unwrap()
    }

    #[test]
    fn log_gamma_known_values() {
        assert!(log_gamma(1.0).unwrap().abs() < 1e-14);
        assert!(log_gamma(2.0).unwrap().abs() < 1e-14);
        assert!((log_gamma(0.5).unwrap() - 0.572_364_942_924_700_1).abs() < 1e-13);
        assert!((log_gamma(10.0).unwrap() - 12.801_827_480_081_47).abs() < 1e-12);
    }

    #[test]
    fn log_gamma_matches_factorials() {
        let mut ln_fact = 0.0_f64;
        for n in 1..=170u32 {
            // ln Γ(n) = ln (n-1)!
            let got = log_gamma(n as f64).unwrap();
            assert!(
                (got - ln_fact).abs() <= 1e-12 * ln_fact.abs().max(1.0),
                "n = {n}: {got} vs {ln_fact}"
            );
            ln_fact += (n as f64).ln();
        }
    }

    #[test]
    fn log_gamma_rejects_non_positive() {
        assert!(matches!(log_gamma(0.0), Err(Error::Domain(_))));
        assert!(matches!(log_gamma(-1.5), Err(Error::Domain(_))));
        assert!(log_gamma(f64::NAN).is_err());
    }

    #[test]
    fn log_gamma_small_argument() {
        // Γ(x) ~ 1/x - γ as x -> 0
        let x: f64 = 1e-3;
        let expected = -(x.ln()) - 0.577_215_664_901_532_9 * x;
        assert!((log_gamma(x).unwrap() - expected).abs() < 1e-6);
    }

    #[test]
    fn beta_cdf_examples() {
        assert!((beta_cdf(0.35, beta(1.0, 1.0)).unwrap() - 0.35).abs() < 1e-14);
        assert!((beta_cdf(0.5, beta(2.0, 2.0)).unwrap() - 0.5).abs() < 1e-14);
        // 23193/40000 by exact binomial expansion
        assert!((beta_cdf(0.3, beta(2.0, 5.0)).unwrap() - 0.579_825).abs() < 1e-12);
    }

    #[test]
    fn beta_cdf_endpoints() {
        let p = beta(0.3, 7.0);
        assert_eq!(beta_cdf(0.0, p).unwrap(), 0.0);
        assert_eq!(beta_cdf(1.0, p).unwrap(), 1.0);
        assert_eq!(beta_tail(0.0, beta(3.0, 7.0)).unwrap(), 1.0);
    }

    #[test]
    fn beta_tail_examples() {
        assert!((beta_tail(0.35, beta(1.0, 1.0)).unwrap() - 0.65).abs() < 1e-14);
        assert!((beta_tail(0.25, beta(1.0, 9.0)).unwrap() - 0.075_084_686_279_296_88).abs() < 1e-13);
        assert!((beta_tail(0.35, beta(9.0, 1.0)).unwrap() - 0.999_921_184_361_328_2).abs() < 1e-13);
    }

    #[test]
    fn beta_cdf_rejects_bad_x() {
        assert!(beta_cdf(-0.1, beta(1.0, 1.0)).is_err());
        assert!(beta_tail(1.5, beta(1.0, 1.0)).is_err());
    }

    #[test]
    fn beta_params_validation() {
        assert!(BetaParams::new(0.0, 1.0).is_err());
        assert!(BetaParams::new(1.0, -2.0).is_err());
        assert!(BetaParams::new(f64::INFINITY, 1.0).is_err());
        let p = BetaParams::from_mean_ess(0.25, 4.0).unwrap();
        assert_eq!((p.a(), p.b()), (1.0, 3.0));
        assert!(serde_json::from_str::<BetaParams>("[1.0, 0.0]").is_err());
        assert_eq!(serde_json::to_string(&p).unwrap(), "[1.0,3.0]");
    }

    #[test]
    fn bernoulli_degenerate_and_domain() {
        let mut rng = RngStream::new(7, 0);
        for _ in 0..1000 {
            assert!(!bernoulli(0.0, &mut rng).unwrap());
            assert!(bernoulli(1.0, &mut rng).unwrap());
        }
        assert!(bernoulli(1.01, &mut rng).is_err());
        assert!(bernoulli(-0.01, &mut rng).is_err());
    }

    #[test]
    fn bernoulli_law_of_large_numbers() {
        let mut rng = RngStream::new(2024, 3);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| bernoulli(0.3, &mut rng).unwrap()).count();
        let mean = hits as f64 / n as f64;
        assert!((mean - 0.3).abs() < 0.002, "mean = {mean}");
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draw = |seed, stream| {
            let mut r = RngStream::new(seed, stream);
            (0..64).map(|_| r.uniform().to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(draw(1, 5), draw(1, 5));
        assert_ne!(draw(1, 5), draw(1, 6));
        assert_ne!(draw(1, 5), draw(2, 5));
    }
}

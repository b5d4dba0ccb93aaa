//! Independent oracles for integration and acceptance tests.
//!
//! Nothing here calls into the crate's special functions: Beta integrals
//! are done by adaptive Gauss-Kronrod quadrature and normalized by the
//! same quadrature over [0, 1].

#![allow(dead_code)]

use cfbd::{BetaParams, DoseGrid1, DoseGrid2};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// G7-K15 on one interval: (kronrod estimate, |kronrod - gauss|).
fn gk15(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adapt(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64, depth: u32) -> f64 {
    let (k, err) = gk15(f, lo, hi);
    if err <= tol || depth == 0 || hi - lo < 1e-15 {
        return k;
    }
    let mid = 0.5 * (lo + hi);
    adapt(f, lo, mid, 0.5 * tol, depth - 1) + adapt(f, mid, hi, 0.5 * tol, depth - 1)
}

/// Adaptive quadrature with relative tolerance `rel`.
pub fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, rel: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    const PIECES: usize = 16;
    let w = (hi - lo) / PIECES as f64;
    let coarse: f64 = (0..PIECES)
        .map(|k| gk15(&f, lo + w * k as f64, lo + w * (k + 1) as f64).0.abs())
        .sum();
    let tol = (rel * coarse).max(1e-300) / PIECES as f64;
    (0..PIECES)
        .map(|k| adapt(&f, lo + w * k as f64, lo + w * (k + 1) as f64, tol, 60))
        .sum()
}

/// Relative tolerance for the Beta integrals below; far tighter than any
/// tolerance the tests compare at.
const REL: f64 = 1e-12;

/// `∫_lo^hi g(t) t^(a-1) (1-t)^(b-1) dt`, with power substitutions that
/// remove the endpoint singularities when `a < 1` or `b < 1`.
pub fn beta_kernel_integral(g: &dyn Fn(f64) -> f64, a: f64, b: f64, lo: f64, hi: f64) -> f64 {
    let mut cuts = vec![lo];
    if lo < 0.5 && hi > 0.5 {
        cuts.push(0.5);
    }
    cuts.push(hi);
    cuts.windows(2)
        .map(|w| {
            let (s, e) = (w[0], w[1]);
            if s == 0.0 && a < 1.0 {
                // t = u^(1/a): t^(a-1) dt = du / a
                let f = |u: f64| {
                    let t = u.powf(1.0 / a);
                    g(t) * (1.0 - t).powf(b - 1.0) / a
                };
                integrate(f, 0.0, e.powf(a), REL)
            } else if e == 1.0 && b < 1.0 {
                // 1 - t = v^(1/b): (1-t)^(b-1) dt = -dv / b
                let f = |v: f64| {
                    let t = 1.0 - v.powf(1.0 / b);
                    g(t) * t.powf(a - 1.0) / b
                };
                integrate(f, 0.0, (1.0 - s).powf(b), REL)
            } else {
                let f = |t: f64| g(t) * t.powf(a - 1.0) * (1.0 - t).powf(b - 1.0);
                integrate(f, s, e, REL)
            }
        })
        .sum()
}

fn beta_normalizer(a: f64, b: f64) -> f64 {
    beta_kernel_integral(&|_| 1.0, a, b, 0.0, 1.0)
}

/// `E[g(p)]` restricted to `[lo, hi]` under `p ~ Beta(a, b)`.
pub fn beta_expectation(g: &dyn Fn(f64) -> f64, a: f64, b: f64, lo: f64, hi: f64) -> f64 {
    beta_kernel_integral(g, a, b, lo, hi) / beta_normalizer(a, b)
}

pub fn quad_beta_cdf(x: f64, a: f64, b: f64) -> f64 {
    beta_expectation(&|_| 1.0, a, b, 0.0, x)
}

/// Expected piecewise-linear gain by direct integration against the density.
pub fn quad_expected_utility(a: f64, b: f64, theta0: f64, alpha0: f64, eta0: f64) -> f64 {
    let under = beta_kernel_integral(&|p| -alpha0 * (theta0 - p), a, b, 0.0, theta0);
    let over = beta_kernel_integral(&|p| -eta0 * (p - theta0), a, b, theta0, 1.0);
    (under + over) / beta_normalizer(a, b)
}

/// Exact `I_x(a, b)` for integer parameters via the binomial sum
/// `sum_{k=a}^{a+b-1} C(n,k) x^k (1-x)^(n-k)` with `n = a + b - 1`.
pub fn binomial_beta_cdf(x: f64, a: u32, b: u32) -> f64 {
    let n = a + b - 1;
    (a..=n)
        .map(|k| {
            let mut c = 1.0;
            for i in 0..k {
                c = c * f64::from(n - i) / f64::from(i + 1);
            }
            c * x.powi(k as i32) * (1.0 - x).powi((n - k) as i32)
        })
        .sum()
}

/// One-agent extrapolating update written out case by case on raw `(a, b)` pairs.
pub fn brute_update1(ab: &[(f64, f64)], at: usize, n: u32, t: u32) -> Vec<(f64, f64)> {
    let (n, t) = (f64::from(n), f64::from(t));
    let mut out = Vec::with_capacity(ab.len());
    for (j, &(a, b)) in ab.iter().enumerate() {
        if j < at {
            out.push((a, b + (n - t)));
        } else if j == at {
            out.push((a + t, b + (n - t)));
        } else {
            out.push((a + t, b));
        }
    }
    out
}

/// Two-agent update written out case by case; `ab[i][j]`.
pub fn brute_update2(ab: &[Vec<(f64, f64)>], r: usize, s: usize, n: u32, t: u32) -> Vec<Vec<(f64, f64)>> {
    let (n, t) = (f64::from(n), f64::from(t));
    let mut out = ab.to_vec();
    for i in 0..ab.len() {
        for j in 0..ab[i].len() {
            let (a, b) = ab[i][j];
            let below = i <= r && j <= s && i + j < r + s;
            let above = i >= r && j >= s && i + j > r + s;
            out[i][j] = if i == r && j == s {
                (a + t, b + (n - t))
            } else if below {
                (a, b + (n - t))
            } else if above {
                (a + t, b)
            } else {
                (a, b)
            };
        }
    }
    out
}

pub fn pairs1(g: &DoseGrid1) -> Vec<(f64, f64)> {
    g.params().iter().map(|p| (p.a(), p.b())).collect()
}

pub fn pairs2(g: &DoseGrid2) -> Vec<Vec<(f64, f64)>> {
    g.params()
        .chunks(g.cols())
        .map(|row| row.iter().map(|p| (p.a(), p.b())).collect())
        .collect()
}

pub fn grid1_from(ab: &[(f64, f64)]) -> DoseGrid1 {
    DoseGrid1::new(ab.iter().map(|&(a, b)| BetaParams::new(a, b).unwrap()).collect()).unwrap()
}

pub fn grid2_from(ab: &[Vec<(f64, f64)>]) -> DoseGrid2 {
    DoseGrid2::from_rows(
        ab.iter()
            .map(|row| row.iter().map(|&(a, b)| BetaParams::new(a, b).unwrap()).collect())
            .collect(),
    )
    .unwrap()
}

/// Small deterministic generator for test inputs (SplitMix64).
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }
}

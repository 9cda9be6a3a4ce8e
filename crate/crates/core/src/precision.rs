//! Configurable-precision scalars and the special functions used by the
//! kernel and Hilbert–Schmidt computations.
//!
//! Arithmetic is MPFR-backed through [`rug::Float`]: every basic operation
//! (`+ − × ÷ sqrt ln exp`) is correctly rounded to nearest at the precision
//! of the destination. A [`PrecisionContext`] fixes that precision so that all
//! values produced by one computation share it.

use rug::float::Constant;
use rug::ops::Pow;
use rug::{Assign, Float, Integer, Rational};

use crate::error::{domain, Error, Result};

/// Real scalar at a context-defined precision.
pub type BigReal = Float;

pub const DEFAULT_BITS: u32 = 256;
pub const MIN_BITS: u32 = 64;

/// Mantissa precision, in bits, for every value created by a computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct PrecisionContext {
    bits: u32,
}

impl Default for PrecisionContext {
    fn default() -> Self {
        Self { bits: DEFAULT_BITS }
    }
}

impl PrecisionContext {
    pub fn new(bits: u32) -> Result<Self> {
        if bits < MIN_BITS {
            return Err(Error::InvalidArgument(format!(
                "precision must be at least {MIN_BITS} bits, got {bits}"
            )));
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Context for computations on the n×n Hilbert segment, whose inverse
    /// grows like e^{3.53 n}: at least `max(256, ceil(6n))` bits.
    pub fn for_hilbert(&self, n: usize) -> Self {
        let need = (6 * n).max(DEFAULT_BITS as usize) as u32;
        Self {
            bits: self.bits.max(need),
        }
    }

    /// A context with `extra` guard bits on top of this one.
    pub fn with_guard(&self, extra: u32) -> Self {
        Self {
            bits: self.bits + extra,
        }
    }

    /// 2^{-k}, the usual way tolerances are phrased against the precision.
    pub fn eps_pow2(&self, k: i32) -> BigReal {
        Float::with_val(self.bits, Float::i_exp(1, -k))
    }

    /// 2^{-(bits - slack)}.
    pub fn tolerance(&self, slack: u32) -> BigReal {
        self.eps_pow2(self.bits as i32 - slack as i32)
    }

    pub fn zero(&self) -> BigReal {
        Float::new(self.bits)
    }

    pub fn one(&self) -> BigReal {
        Float::with_val(self.bits, 1)
    }

    pub fn int(&self, v: i64) -> BigReal {
        Float::with_val(self.bits, v)
    }

    pub fn real(&self, v: f64) -> BigReal {
        Float::with_val(self.bits, v)
    }

    /// `num/den` rounded once.
    pub fn ratio(&self, num: i64, den: i64) -> BigReal {
        Float::with_val(self.bits, Rational::from((num, den)))
    }

    pub fn rational(&self, q: &Rational) -> BigReal {
        Float::with_val(self.bits, q)
    }

    pub fn integer(&self, z: &Integer) -> BigReal {
        Float::with_val(self.bits, z)
    }

    /// Re-round an existing value to this context.
    pub fn convert(&self, x: &BigReal) -> BigReal {
        Float::with_val(self.bits, x)
    }

    pub fn parse(&self, s: &str) -> Result<BigReal> {
        let parsed = Float::parse(s.trim())
            .map_err(|e| Error::InvalidArgument(format!("cannot parse real {s:?}: {e}")))?;
        Ok(Float::with_val(self.bits, parsed))
    }

    pub fn pi(&self) -> BigReal {
        Float::with_val(self.bits, Constant::Pi)
    }

    pub fn sqrt_int(&self, v: i64) -> BigReal {
        self.int(v).sqrt()
    }

    /// ζ(2) = π²/6.
    pub fn zeta2(&self) -> BigReal {
        let pi = self.pi();
        Float::with_val(self.bits, &pi * &pi) / 6u32
    }

    /// ζ(3) = −ψ⁽²⁾(1)/2.
    pub fn zeta3(&self) -> BigReal {
        let psi = digamma_second(self, 1).expect("n = 1 is in the domain");
        -psi / 2u32
    }
}

/// Full-precision decimal rendering; parses back to the same value.
pub fn to_decimal(x: &BigReal) -> String {
    x.to_string_radix(10, None)
}

fn check_unit_interval(op: &'static str, x: &BigReal) -> Result<()> {
    if x.is_nan() || *x < 0 || *x > 1 {
        return Err(domain(op, format!("argument {} outside [0, 1]", x.to_f64())));
    }
    Ok(())
}

/// Σ_{j≥1} x^j / j² for 0 ≤ x ≤ 1/2, at `prec` bits.
fn dilog_series(prec: u32, x: &BigReal) -> BigReal {
    let mut sum = Float::new(prec);
    if x.is_zero() {
        return sum;
    }
    let mut power = Float::with_val(prec, x);
    let mut term = Float::new(prec);
    let stop = Float::with_val(prec, Float::i_exp(1, -(prec as i32) - 4));
    let mut j: u64 = 1;
    loop {
        term.assign(&power);
        term /= j * j;
        sum += &term;
        if term.clone().abs() <= Float::with_val(prec, &sum * &stop) {
            break;
        }
        power *= x;
        j += 1;
    }
    sum
}

/// Li₂(x) = Σ_{j≥1} x^j/j² on [0, 1].
///
/// Direct series for x ≤ 1/2; for x > 1/2 the reflection
/// Li₂(x) = π²/6 − ln(x)ln(1−x) − Li₂(1−x), so both branches converge at
/// least like 2^{-j}.
pub fn dilog(ctx: &PrecisionContext, x: &BigReal) -> Result<BigReal> {
    check_unit_interval("dilog", x)?;
    let wp = ctx.bits + 16;
    let xw = Float::with_val(wp, x);
    let value = if xw <= 0.5 {
        dilog_series(wp, &xw)
    } else {
        let wctx = PrecisionContext { bits: wp };
        let comp = complement_above_half(&wctx, &xw);
        wctx.zeta2() - comp
    };
    Ok(ctx.convert(&value))
}

/// π²/6 − Li₂(x), evaluated without cancellation near x = 1.
pub fn dilog_complement(ctx: &PrecisionContext, x: &BigReal) -> Result<BigReal> {
    check_unit_interval("dilog_complement", x)?;
    let wp = ctx.bits + 16;
    let wctx = PrecisionContext { bits: wp };
    let xw = Float::with_val(wp, x);
    let value = if xw <= 0.5 {
        wctx.zeta2() - dilog_series(wp, &xw)
    } else {
        complement_above_half(&wctx, &xw)
    };
    Ok(ctx.convert(&value))
}

// ln(x)ln(1−x) + Li₂(1−x) for x in (1/2, 1].
fn complement_above_half(wctx: &PrecisionContext, x: &BigReal) -> BigReal {
    let wp = wctx.bits;
    let y = Float::with_val(wp, 1 - x);
    if y.is_zero() {
        return Float::new(wp);
    }
    let lx = Float::with_val(wp, x.ln_ref());
    let ly = Float::with_val(wp, y.ln_ref());
    lx * ly + dilog_series(wp, &y)
}

/// Exact Bernoulli numbers B_0..=B_m (B_1 = −1/2).
fn bernoulli_numbers(m: usize) -> Vec<Rational> {
    let mut b: Vec<Rational> = Vec::with_capacity(m + 1);
    b.push(Rational::from(1));
    for k in 1..=m {
        if k > 1 && k % 2 == 1 {
            b.push(Rational::new());
            continue;
        }
        let mut acc = Rational::new();
        let mut binom = Integer::from(1);
        for (i, bi) in b.iter().enumerate() {
            // binom = C(k+1, i)
            if i > 0 {
                binom *= (k + 1 - (i - 1)) as u64;
                binom /= i as u64;
            }
            acc += bi.clone() * &binom;
        }
        b.push(-acc / Integer::from(k as u64 + 1));
    }
    b
}

/// ψ⁽²⁾(n), the second derivative of the digamma function at a positive integer.
///
/// Uses ψ⁽²⁾(n) = −2 Σ_{k≥n} k⁻³: the first terms are summed directly up to
/// N = max(n, 32, bits/2) and the remainder Σ_{k≥N} k⁻³ is taken from the
/// Euler–Maclaurin expansion
/// 1/(2N²) + 1/(2N³) + Σ_p B_{2p}(2p+1)/2 · N^{−2p−2},
/// with terms added until they fall below the working precision.
pub fn digamma_second(ctx: &PrecisionContext, n: i64) -> Result<BigReal> {
    if n <= 0 {
        return Err(domain("digamma_second", format!("n = {n} must be >= 1")));
    }
    let wp = ctx.bits + 32;
    let n = n as u64;
    let big_n = n.max(32).max(u64::from(ctx.bits) / 2);

    let mut head = Float::new(wp);
    for k in n..big_n {
        let cube = Integer::from(k).pow(3u32);
        head += Float::with_val(wp, 1) / Float::with_val(wp, &cube);
    }

    let nf = Float::with_val(wp, big_n);
    let inv_n = Float::with_val(wp, 1) / &nf;
    let inv_n2 = Float::with_val(wp, &inv_n * &inv_n);
    let mut tail = Float::with_val(wp, &inv_n2 / 2u32);
    tail += Float::with_val(wp, &inv_n2 * &inv_n) / 2u32;

    let stop = Float::with_val(wp, Float::i_exp(1, -(wp as i32)));
    let mut power = Float::with_val(wp, &inv_n2 * &inv_n2); // N^{-4}
    let mut bern = bernoulli_numbers(16);
    let mut p = 1usize;
    let mut last = Float::with_val(wp, f64::INFINITY);
    loop {
        if 2 * p >= bern.len() {
            bern = bernoulli_numbers(4 * p + 8);
        }
        let coeff = Rational::from(&bern[2 * p] * Integer::from(2 * p as u64 + 1)) / 2u32;
        let term = Float::with_val(wp, &coeff) * &power;
        let mag = term.clone().abs();
        if mag > last {
            // asymptotic series started to diverge; keep what we have
            break;
        }
        tail += &term;
        if mag <= Float::with_val(wp, &tail * &stop) {
            break;
        }
        last = mag;
        power *= &inv_n2;
        p += 1;
    }

    let psi = -(head + tail) * 2u32;
    Ok(ctx.convert(&psi))
}

/// Σ_{i≥n} i⁻³ = −ψ⁽²⁾(n)/2.
pub fn cubic_tail(ctx: &PrecisionContext, n: i64) -> Result<BigReal> {
    Ok(-digamma_second(ctx, n)? / 2u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ulp(ctx: &PrecisionContext, x: &BigReal) -> BigReal {
        let e = x.get_exp().unwrap_or(0);
        Float::with_val(ctx.bits(), Float::i_exp(1, e - ctx.bits() as i32))
    }

    #[test]
    fn context_rejects_low_precision() {
        assert!(PrecisionContext::new(63).is_err());
        assert_eq!(PrecisionContext::new(64).unwrap().bits(), 64);
        assert_eq!(PrecisionContext::default().bits(), 256);
    }

    #[test]
    fn hilbert_escalation() {
        let ctx = PrecisionContext::default();
        assert_eq!(ctx.for_hilbert(20).bits(), 256);
        assert_eq!(ctx.for_hilbert(100).bits(), 600);
        let wide = PrecisionContext::new(1024).unwrap();
        assert_eq!(wide.for_hilbert(100).bits(), 1024);
    }

    #[test]
    fn values_carry_context_precision() {
        let ctx = PrecisionContext::new(200).unwrap();
        for v in [ctx.one(), ctx.real(0.3), ctx.ratio(1, 3), ctx.pi(), ctx.zeta2()] {
            assert_eq!(v.prec(), 200);
        }
        let x = dilog(&ctx, &ctx.real(0.3)).unwrap();
        assert_eq!(x.prec(), 200);
    }

    #[test]
    fn dilog_endpoints() {
        let ctx = PrecisionContext::default();
        assert!(dilog(&ctx, &ctx.zero()).unwrap().is_zero());
        let one = dilog(&ctx, &ctx.one()).unwrap();
        let diff = Float::with_val(256, &one - &ctx.zeta2()).abs();
        assert!(diff <= ulp(&ctx, &one) * 4u32);
        assert!(dilog_complement(&ctx, &ctx.one()).unwrap().is_zero());
    }

    #[test]
    fn dilog_half_matches_partial_sums() {
        // oracle: partial sums of Σ 2^{-j}/j² in f64
        let mut oracle = 0.0f64;
        for j in 1..200 {
            oracle += 0.5f64.powi(j) / f64::from(j * j);
        }
        let ctx = PrecisionContext::default();
        let v = dilog(&ctx, &ctx.real(0.5)).unwrap().to_f64();
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.5822405265).abs() < 1e-10);
    }

    #[test]
    fn dilog_matches_mpfr_li2() {
        let ctx = PrecisionContext::default();
        for k in 0..=40 {
            let x = ctx.ratio(k, 40);
            let ours = dilog(&ctx, &x).unwrap();
            let mpfr = x.clone().li2();
            let diff = Float::with_val(256, &ours - &mpfr).abs();
            let tol = ulp(&ctx, &mpfr) * 4u32;
            assert!(diff <= tol || mpfr.is_zero(), "x = {k}/40");
        }
    }

    #[test]
    fn dilog_domain() {
        let ctx = PrecisionContext::default();
        assert!(dilog(&ctx, &ctx.real(-0.1)).is_err());
        assert!(dilog(&ctx, &ctx.real(1.5)).is_err());
        assert!(dilog_complement(&ctx, &ctx.real(2.0)).is_err());
    }

    #[test]
    fn zeta3_by_direct_summation() {
        // oracle: Σ_{k<K} k⁻³ + integral-type tail 1/(2K²)
        let k_max = 200_000u64;
        let mut s = 0.0f64;
        for k in (1..k_max).rev() {
            s += 1.0 / (k as f64).powi(3);
        }
        s += 1.0 / (2.0 * (k_max as f64).powi(2));
        let ctx = PrecisionContext::default();
        let psi = digamma_second(&ctx, 1).unwrap().to_f64();
        assert!((psi + 2.0 * s).abs() < 1e-12);
        assert!((psi + 2.4041138063).abs() < 1e-9);
        let z3 = ctx.zeta3();
        let mpfr = Float::with_val(256, 3).zeta();
        assert!(Float::with_val(256, &z3 - &mpfr).abs() < ctx.tolerance(8));
    }

    #[test]
    fn digamma_second_cubic_tail_at_five() {
        let ctx = PrecisionContext::default();
        let tail = cubic_tail(&ctx, 5).unwrap().to_f64();
        // direct partial summation with integral tail
        let k_max = 100_000u64;
        let mut s = 0.0;
        for k in (5..k_max).rev() {
            s += 1.0 / (k as f64).powi(3);
        }
        s += 1.0 / (2.0 * (k_max as f64).powi(2));
        assert!((tail - s).abs() < 1e-13);
        assert!((tail - 0.024394866).abs() < 1e-8);
    }

    #[test]
    fn digamma_second_asymptotics() {
        let ctx = PrecisionContext::default();
        let n = 10_000i64;
        let v = digamma_second(&ctx, n).unwrap().to_f64();
        let scaled = (n as f64).powi(2) * v + 1.0;
        assert!(scaled.abs() < 2.0 / n as f64);
    }

    #[test]
    fn digamma_second_relative_accuracy() {
        // ψ⁽²⁾(n) = −2(ζ(3) − Σ_{k<n} k⁻³), evaluated in an independent way at high precision
        let ctx = PrecisionContext::default();
        let hi = 600;
        let zeta3 = Float::with_val(hi, 3).zeta();
        for n in [1i64, 2, 7, 31, 64, 150] {
            let mut head = Float::new(hi);
            for k in 1..n {
                head += Float::with_val(hi, 1) / Float::with_val(hi, k).pow(3u32);
            }
            let exact = Float::with_val(hi, &zeta3 - &head) * -2i32;
            let ours = digamma_second(&ctx, n).unwrap();
            let rel = Float::with_val(hi, &ours - &exact).abs() / exact.abs();
            assert!(rel < ctx.tolerance(8), "n = {n}");
        }
    }

    #[test]
    fn digamma_second_domain() {
        let ctx = PrecisionContext::default();
        assert!(digamma_second(&ctx, 0).is_err());
        assert!(digamma_second(&ctx, -3).is_err());
    }

    #[test]
    fn bernoulli_small() {
        let b = bernoulli_numbers(8);
        assert_eq!(b[1], Rational::from((-1, 2)));
        assert_eq!(b[2], Rational::from((1, 6)));
        assert_eq!(b[4], Rational::from((-1, 30)));
        assert_eq!(b[6], Rational::from((1, 42)));
        assert_eq!(b[8], Rational::from((-1, 30)));
    }

    #[test]
    fn decimal_round_trip() {
        let ctx = PrecisionContext::default();
        let x = ctx.pi() / 7u32;
        let s = to_decimal(&x);
        assert_eq!(ctx.parse(&s).unwrap(), x);
    }
}

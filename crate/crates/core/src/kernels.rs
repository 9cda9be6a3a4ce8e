//! Kernels of A*A for A = B⁽ᴴ⁾∘J and Ã*Ã for Ã = B⁽ᴹ⁾∘J, their
//! s-derivatives, and Nyström matrices.
//!
//! k(s,t) = Σ_{j≥1} (1−s^j)(1−t^j)/j² = ζ(2) − Li₂(s) − Li₂(t) + Li₂(st),
//! k̃(s,t) = ∫_{max(s,t)}^1 τ^{2θ} dτ = (1 − max(s,t)^{2θ+1})/(2θ+1).

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::exec::Execution;
use crate::jacobi::{jacobi_eigenvalues, DEFAULT_MAX_SWEEPS};
use crate::legendre::{gauss_rule, QuadratureRule};
use crate::matrix::{Basis, DenseMatrix};
use crate::precision::{dilog, dilog_complement, to_decimal, BigReal, PrecisionContext};

fn check_unit(op: &'static str, name: &str, x: &BigReal) -> Result<()> {
    if x.is_nan() || *x < 0 || *x > 1 {
        return Err(domain(op, format!("{name} = {} outside [0, 1]", x.to_f64())));
    }
    Ok(())
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::InvalidArgument(format!("exponent θ must be positive, got {theta}")));
    }
    Ok(())
}

pub fn kernel_k(ctx: &PrecisionContext, s: &BigReal, t: &BigReal) -> Result<BigReal> {
    check_unit("kernel_k", "s", s)?;
    check_unit("kernel_k", "t", t)?;
    let wctx = ctx.with_guard(16);
    let st = Float::with_val(wctx.bits(), s * t);
    // (ζ(2) − Li₂(s)) − (Li₂(t) − Li₂(st)) keeps k(1, t) = 0 exact
    let v = dilog_complement(&wctx, s)? - (dilog(&wctx, t)? - dilog(&wctx, &st)?);
    Ok(ctx.convert(&v))
}

/// ∂k/∂s = (ln(1−s) − ln(1−st))/s, with the limit t − 1 at s = 0. The
/// logarithmic pole at s = 1 is a domain error.
pub fn kernel_k_ds(ctx: &PrecisionContext, s: &BigReal, t: &BigReal) -> Result<BigReal> {
    check_unit("kernel_k_ds", "s", s)?;
    check_unit("kernel_k_ds", "t", t)?;
    if s.is_zero() {
        return Ok(Float::with_val(ctx.bits(), t - 1u32));
    }
    if *s == 1 {
        return Err(domain("kernel_k_ds", "pole at s = 1"));
    }
    let wp = ctx.bits() + 16;
    let one_s = Float::with_val(wp, 1 - s);
    let one_st = Float::with_val(wp, 1 - Float::with_val(wp, s * t));
    let v = (one_s / one_st).ln() / s;
    Ok(ctx.convert(&v))
}

/// ∂²k/∂s² = [s(t/(1−st) − 1/(1−s)) − ln((1−s)/(1−st))]/s², with the limit
/// −(1−t²)/2 at s = 0. Not square integrable near s = 1.
pub fn kernel_k_dss(ctx: &PrecisionContext, s: &BigReal, t: &BigReal) -> Result<BigReal> {
    check_unit("kernel_k_dss", "s", s)?;
    check_unit("kernel_k_dss", "t", t)?;
    if s.is_zero() {
        let t2 = Float::with_val(ctx.bits(), t * t);
        return Ok((t2 - 1u32) / 2u32);
    }
    if *s == 1 {
        return Err(domain("kernel_k_dss", "pole at s = 1"));
    }
    // the numerator cancels to O(s²) as s → 0
    let wp = 2 * ctx.bits() + 16;
    let one_s = Float::with_val(wp, 1 - s);
    let one_st = Float::with_val(wp, 1 - Float::with_val(wp, s * t));
    let log = Float::with_val(wp, &one_s / &one_st).ln();
    let bracket = Float::with_val(wp, t / &one_st) - one_s.recip();
    let v = (bracket * s - log) / Float::with_val(wp, s * s);
    Ok(ctx.convert(&v))
}

pub fn kernel_ktilde(ctx: &PrecisionContext, s: &BigReal, t: &BigReal, theta: f64) -> Result<BigReal> {
    check_unit("kernel_ktilde", "s", s)?;
    check_unit("kernel_ktilde", "t", t)?;
    check_theta(theta)?;
    let prec = ctx.bits() + 16;
    let top = if s >= t { s } else { t };
    let p = Float::with_val(prec, 2.0 * theta + 1.0);
    let power = Float::with_val(prec, Float::with_val(prec, top).pow(&p));
    let v = (Float::with_val(prec, 1u32) - power) / p;
    Ok(ctx.convert(&v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelTag {
    HausdorffJ,
    MultJ { theta: f64 },
    HausdorffJDs,
    HausdorffJDss,
}

impl KernelTag {
    pub fn is_symmetric(self) -> bool {
        matches!(self, KernelTag::HausdorffJ | KernelTag::MultJ { .. })
    }

    pub fn eval(self, ctx: &PrecisionContext, s: &BigReal, t: &BigReal) -> Result<BigReal> {
        match self {
            KernelTag::HausdorffJ => kernel_k(ctx, s, t),
            KernelTag::MultJ { theta } => kernel_ktilde(ctx, s, t, theta),
            KernelTag::HausdorffJDs => kernel_k_ds(ctx, s, t),
            KernelTag::HausdorffJDss => kernel_k_dss(ctx, s, t),
        }
    }
}

impl fmt::Display for KernelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelTag::HausdorffJ => write!(f, "hausdorff-j"),
            KernelTag::MultJ { theta } => write!(f, "mult-j:{theta}"),
            KernelTag::HausdorffJDs => write!(f, "hausdorff-j-ds"),
            KernelTag::HausdorffJDss => write!(f, "hausdorff-j-dss"),
        }
    }
}

impl FromStr for KernelTag {
    type Err = Error;

    /// `hausdorff-j`, `hausdorff-j-ds`, `hausdorff-j-dss` or `mult-j:θ`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hausdorff-j" => Ok(KernelTag::HausdorffJ),
            "hausdorff-j-ds" => Ok(KernelTag::HausdorffJDs),
            "hausdorff-j-dss" => Ok(KernelTag::HausdorffJDss),
            _ => {
                let theta = s
                    .strip_prefix("mult-j:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown kernel tag '{s}'")))?;
                check_theta(theta)?;
                Ok(KernelTag::MultJ { theta })
            }
        }
    }
}

/// Kernel values on a tensor grid. Points on the pole s = 1 of the
/// derivative kernels hold −∞ (0 where t = 1).
#[derive(Debug, Clone)]
pub struct KernelGrid {
    pub tag: KernelTag,
    pub s_nodes: Vec<BigReal>,
    pub t_nodes: Vec<BigReal>,
    /// `values[a][b]` at (s_nodes[a], t_nodes[b]).
    pub values: Vec<Vec<BigReal>>,
}

impl KernelGrid {
    pub fn new(
        ctx: &PrecisionContext,
        tag: KernelTag,
        s_nodes: Vec<BigReal>,
        t_nodes: Vec<BigReal>,
        exec: Execution,
    ) -> Result<Self> {
        let rows: Vec<Result<Vec<BigReal>>> = exec.map(&s_nodes, |s| {
            t_nodes
                .iter()
                .map(|t| match tag.eval(ctx, s, t) {
                    Err(Error::Domain { .. }) if *s == 1 && t.is_finite() && *t <= 1 && *t >= 0 => {
                        if *t == 1 {
                            Ok(ctx.zero())
                        } else {
                            Ok(Float::with_val(ctx.bits(), rug::float::Special::NegInfinity))
                        }
                    }
                    other => other,
                })
                .collect()
        });
        let values = rows.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Self {
            tag,
            s_nodes,
            t_nodes,
            values,
        })
    }

    /// `points` equispaced nodes i/(points−1) in both variables.
    pub fn uniform(ctx: &PrecisionContext, tag: KernelTag, points: usize, exec: Execution) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidArgument("a grid needs at least 2 points".into()));
        }
        let nodes: Vec<BigReal> = (0..points)
            .map(|i| ctx.ratio(i as i64, (points - 1) as i64))
            .collect();
        Self::new(ctx, tag, nodes.clone(), nodes, exec)
    }

    pub fn max_asymmetry(&self) -> Option<BigReal> {
        if self.s_nodes != self.t_nodes {
            return None;
        }
        let prec = self.s_nodes.first().map_or(64, Float::prec);
        let mut worst = Float::new(prec);
        for (a, row) in self.values.iter().enumerate() {
            for (b, v) in row.iter().enumerate().skip(a + 1) {
                let d = Float::with_val(prec, v - &self.values[b][a]).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        Some(worst)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "s,t,value")?;
        for (s, row) in self.s_nodes.iter().zip(&self.values) {
            for (t, v) in self.t_nodes.iter().zip(row) {
                writeln!(w, "{},{},{}", to_decimal(s), to_decimal(t), to_decimal(v))?;
            }
        }
        Ok(())
    }
}

/// Symmetric Nyström matrix W^{1/2} K W^{1/2} on `rule`.
pub fn nystrom_on<F>(ctx: &PrecisionContext, rule: &QuadratureRule, exec: Execution, kernel: F) -> Result<DenseMatrix>
where
    F: Fn(&BigReal, &BigReal) -> Result<BigReal> + Sync + Send,
{
    let m = rule.len();
    let roots: Vec<BigReal> = rule.weights.iter().map(|w| Float::with_val(ctx.bits(), w.sqrt_ref())).collect();
    let rows: Vec<Result<Vec<BigReal>>> = exec.map_range(m, |a| {
        (0..m)
            .map(|b| {
                let k = kernel(&rule.nodes[a], &rule.nodes[b])?;
                Ok(k * &roots[a] * &roots[b])
            })
            .collect()
    });
    let data = rows.into_iter().collect::<Result<Vec<_>>>()?;
    DenseMatrix::from_rows(ctx, data, Basis::Nodal, Basis::Nodal)
}

/// Nyström matrix of a symmetric kernel with an m-point Gauss rule.
pub fn nystrom(ctx: &PrecisionContext, tag: KernelTag, m: usize) -> Result<DenseMatrix> {
    nystrom_with(ctx, tag, m, Execution::default())
}

pub fn nystrom_with(ctx: &PrecisionContext, tag: KernelTag, m: usize, exec: Execution) -> Result<DenseMatrix> {
    if m < 2 {
        return Err(Error::InvalidArgument("Nyström needs m >= 2".into()));
    }
    if !tag.is_symmetric() {
        return Err(Error::InvalidArgument(format!("{tag} is not a symmetric kernel")));
    }
    let rule = gauss_rule(ctx, m)?;
    match tag {
        KernelTag::HausdorffJ => {
            // Li₂ at the nodes is shared by every row
            let wctx = ctx.with_guard(16);
            let comp: Vec<BigReal> = exec
                .map(&rule.nodes, |t| dilog_complement(&wctx, t))
                .into_iter()
                .collect::<Result<_>>()?;
            let zeta2 = wctx.zeta2();
            let index = |x: &BigReal| rule.nodes.iter().position(|n| n == x).expect("node of the rule");
            nystrom_on(ctx, &rule, exec, |s, t| {
                let st = Float::with_val(wctx.bits(), s * t);
                let li_t = Float::with_val(wctx.bits(), &zeta2 - &comp[index(t)]);
                let v = Float::with_val(wctx.bits(), &comp[index(s)] - li_t) + dilog(&wctx, &st)?;
                Ok(ctx.convert(&v))
            })
        }
        _ => nystrom_on(ctx, &rule, exec, |s, t| tag.eval(ctx, s, t)),
    }
}

/// Eigenvalues of the Nyström matrix, non-increasing.
pub fn nystrom_eigenvalues(ctx: &PrecisionContext, tag: KernelTag, m: usize, exec: Execution) -> Result<Vec<BigReal>> {
    let k = nystrom_with(ctx, tag, m, exec)?;
    Ok(jacobi_eigenvalues(&k, exec, DEFAULT_MAX_SWEEPS)?.values)
}

/// Σ_{a,b} w_a w_b k_ss(t_a, t_b)² on an m-point rule. Grows without bound
/// in m because k_ss ∉ L²((0,1)²).
pub fn dss_square_quadrature(ctx: &PrecisionContext, m: usize, exec: Execution) -> Result<BigReal> {
    let rule = gauss_rule(ctx, m)?;
    let rows: Vec<Result<BigReal>> = exec.map_range(m, |a| {
        let mut acc = ctx.zero();
        for b in 0..m {
            let g = kernel_k_dss(ctx, &rule.nodes[a], &rule.nodes[b])?;
            acc += Float::with_val(ctx.bits(), g.square_ref()) * &rule.weights[b];
        }
        Ok(acc * &rule.weights[a])
    });
    let mut total = ctx.zero();
    for r in rows {
        total += r?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> PrecisionContext {
        PrecisionContext::default()
    }

    fn close(a: &BigReal, b: &BigReal, tol: f64) -> bool {
        Float::with_val(a.prec(), a - b).abs() <= tol
    }

    // Σ_{j≤J} (1−s^j)(1−t^j)/j² with the tail bounded by 1/J
    fn series_k(s: f64, t: f64, terms: usize) -> f64 {
        let (mut sj, mut tj, mut acc) = (1.0f64, 1.0f64, 0.0f64);
        for j in 1..=terms {
            sj *= s;
            tj *= t;
            acc += (1.0 - sj) * (1.0 - tj) / (j * j) as f64;
        }
        acc
    }

    #[test]
    fn kernel_k_values() {
        let c = ctx();
        for t in ["0", "0.3", "0.999", "1"] {
            let t = c.parse(t).unwrap();
            assert!(kernel_k(&c, &c.one(), &t).unwrap().is_zero());
            assert!(kernel_k(&c, &t, &c.one()).unwrap().abs() < c.tolerance(8));
        }
        assert!(close(&kernel_k(&c, &c.zero(), &c.zero()).unwrap(), &c.zeta2(), 1e-70));
        let half = c.ratio(1, 2);
        let v = kernel_k(&c, &half, &half).unwrap().to_f64();
        let terms = 1_000_000;
        let oracle = series_k(0.5, 0.5, terms);
        assert!(v >= oracle && v - oracle <= 1.0 / terms as f64);
        assert!((v - 0.748106).abs() < 1e-6);
        assert!(kernel_k(&c, &c.int(2), &half).is_err());
    }

    #[test]
    fn kernel_k_against_series_near_corner() {
        let c = ctx();
        let terms = 1_000_000;
        for (s, t) in [(0.9, 0.95), (0.99, 0.5), (0.3, 0.999)] {
            let v = kernel_k(&c, &c.real(s), &c.real(t)).unwrap().to_f64();
            let oracle = series_k(s, t, terms);
            assert!((v - oracle).abs() <= 1.0 / terms as f64 + 1e-12);
        }
    }

    #[test]
    fn ds_values() {
        let c = ctx();
        let s = c.real(0.4);
        assert!(kernel_k_ds(&c, &s, &c.one()).unwrap().is_zero());
        let t = c.real(0.25);
        assert_eq!(kernel_k_ds(&c, &c.zero(), &t).unwrap(), c.real(-0.75));
        let small = c.parse("1e-30").unwrap();
        assert!(close(&kernel_k_ds(&c, &small, &t).unwrap(), &c.real(-0.75), 1e-29));
        let finite = kernel_k_ds(&c, &c.real(0.9), &c.real(0.5)).unwrap().to_f64();
        assert!(finite.is_finite() && finite > -3.0);
        let near = Float::with_val(256, 1u32) - c.parse("1e-6").unwrap();
        assert!(kernel_k_ds(&c, &near, &c.real(0.5)).unwrap() < -10);
        assert!(kernel_k_ds(&c, &c.one(), &t).is_err());
        // series oracle −Σ s^{j−1}(1−t^j)/j
        let (sv, tv) = (0.3f64, 0.6f64);
        let oracle: f64 = (1..200).map(|j| -sv.powi(j - 1) * (1.0 - tv.powi(j)) / j as f64).sum();
        let v = kernel_k_ds(&c, &c.real(sv), &c.real(tv)).unwrap().to_f64();
        assert!((v - oracle).abs() < 1e-14);
    }

    #[test]
    fn dss_matches_difference_quotient() {
        let c = ctx();
        let h = c.parse("1e-20").unwrap();
        for (s, t) in [(0.2, 0.7), (0.6, 0.1), (1e-8, 0.5)] {
            let (s, t) = (c.real(s), c.real(t));
            let up = kernel_k_ds(&c, &Float::with_val(256, &s + &h), &t).unwrap();
            let down = kernel_k_ds(&c, &s, &t).unwrap();
            let fd = (up - down) / &h;
            let exact = kernel_k_dss(&c, &s, &t).unwrap();
            assert!(close(&fd, &exact, 1e-15));
        }
        let at_zero = kernel_k_dss(&c, &c.zero(), &c.real(0.5)).unwrap();
        assert_eq!(at_zero, c.real(-0.375));
    }

    #[test]
    fn pole_is_logarithmic() {
        let c = ctx();
        let t = c.real(0.5);
        for k in 2..=8 {
            let h = c.parse(&format!("1e-{k}")).unwrap();
            let s = Float::with_val(256, 1u32) - &h;
            let ratio = kernel_k_ds(&c, &s, &t).unwrap() / h.ln();
            let r = ratio.to_f64();
            assert!(r > 0.5 && r < 2.0, "k={k} ratio={r}");
        }
    }

    #[test]
    fn ktilde_values() {
        let c = ctx();
        assert!(kernel_ktilde(&c, &c.one(), &c.real(0.3), 1.5).unwrap().is_zero());
        assert!(close(&kernel_ktilde(&c, &c.zero(), &c.zero(), 2.0).unwrap(), &c.ratio(1, 5), 1e-70));
        let v = kernel_ktilde(&c, &c.real(0.5), &c.real(0.25), 0.5).unwrap();
        assert!(close(&v, &c.real(0.375), 1e-70));
        assert!(kernel_ktilde(&c, &c.zero(), &c.zero(), 0.0).is_err());
    }

    #[test]
    fn grid_symmetry_and_csv() {
        let c = ctx();
        let g = KernelGrid::uniform(&c, KernelTag::HausdorffJ, 6, Execution::default()).unwrap();
        assert!(g.max_asymmetry().unwrap() < c.tolerance(4));
        for v in &g.values[5] {
            assert!(v.is_zero());
        }
        let d = KernelGrid::uniform(&c, KernelTag::HausdorffJDs, 3, Execution::default()).unwrap();
        assert!(d.values[2][0].is_infinite());
        assert!(d.values[2][2].is_zero());
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 37);
        assert!(text.starts_with("s,t,value\n0,0,1.6449340668482264364724151666460251892189499012067984377355582293700074704032"));
    }

    #[test]
    fn tags_round_trip() {
        for tag in [
            KernelTag::HausdorffJ,
            KernelTag::HausdorffJDs,
            KernelTag::HausdorffJDss,
            KernelTag::MultJ { theta: 0.5 },
        ] {
            assert_eq!(tag.to_string().parse::<KernelTag>().unwrap(), tag);
        }
        assert!("mult-j:-1".parse::<KernelTag>().is_err());
        assert!("other".parse::<KernelTag>().is_err());
    }

    #[test]
    fn constant_kernel_is_rank_one() {
        let c = ctx();
        let rule = gauss_rule(&c, 8).unwrap();
        let k = nystrom_on(&c, &rule, Execution::default(), |_, _| Ok(c.one())).unwrap();
        let e = jacobi_eigenvalues(&k, Execution::default(), 40).unwrap();
        assert!(close(&e.values[0], &c.one(), 1e-60));
        for v in &e.values[1..] {
            assert!(v.clone().abs() < 1e-60);
        }
    }

    #[test]
    fn nystrom_paths_agree() {
        let c = ctx();
        let rule = gauss_rule(&c, 6).unwrap();
        let fast = nystrom(&c, KernelTag::HausdorffJ, 6).unwrap();
        let slow = nystrom_on(&c, &rule, Execution::default(), |s, t| kernel_k(&c, s, t)).unwrap();
        assert!(fast.max_abs_diff(&slow).unwrap() < c.tolerance(8));
        assert!(nystrom(&c, KernelTag::HausdorffJDs, 6).is_err());
    }

    #[test]
    fn second_derivative_not_square_integrable() {
        let c = PrecisionContext::new(128).unwrap();
        let values: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&m| dss_square_quadrature(&c, m, Execution::default()).unwrap().to_f64())
            .collect();
        assert!(values[1] > 2.0 * values[0] && values[2] > 2.0 * values[1], "{values:?}");
    }
}

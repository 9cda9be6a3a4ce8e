//! Orthonormal shifted Legendre polynomials on [0, 1], Gauss–Legendre rules
//! and the closed-form monomial moments ⟨s^i, L_j⟩.
//!
//! Indices follow the convention L_1 ≡ 1, L_2 = √3(2t − 1), …, so that
//! span(L_1..L_N) = span(1, t, …, t^{N−1}).

use rug::{Assign, Float, Rational};

use crate::error::{domain, Error, Result};
use crate::exec::Execution;
use crate::precision::{BigReal, PrecisionContext};

/// Values L_1(t), …, L_n(t) by the three-term recurrence of the
/// (unnormalised) shifted Legendre polynomials, then scaled by √(2j−1).
pub fn legendre_values(ctx: &PrecisionContext, n: usize, t: &BigReal) -> Vec<BigReal> {
    let prec = ctx.bits();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let x = Float::with_val(prec, t * 2u32) - 1u32;
    let mut p_prev = ctx.one();
    let mut p_cur = x.clone();
    out.push(ctx.one());
    if n == 1 {
        return out;
    }
    out.push(Float::with_val(prec, &p_cur * &ctx.sqrt_int(3)));
    let mut scratch = ctx.zero();
    for k in 1..n - 1 {
        // (k+1) P_{k+1} = (2k+1) x P_k − k P_{k−1}
        scratch.assign(&x * &p_cur);
        scratch *= (2 * k + 1) as u64;
        let mut next = Float::with_val(prec, &p_prev * k as u64);
        next = scratch.clone() - next;
        next /= (k + 1) as u64;
        p_prev = std::mem::replace(&mut p_cur, next);
        let scale = ctx.sqrt_int((2 * (k + 1) + 1) as i64);
        out.push(Float::with_val(prec, &p_cur * &scale));
    }
    out
}

/// L_j(t) for j ≥ 1 and t ∈ [0, 1].
pub fn legendre_eval(ctx: &PrecisionContext, j: usize, t: &BigReal) -> Result<BigReal> {
    if j < 1 {
        return Err(domain("legendre_eval", "basis index must be >= 1"));
    }
    if t.is_nan() || *t < 0 || *t > 1 {
        return Err(domain(
            "legendre_eval",
            format!("t = {} outside [0, 1]", t.to_f64()),
        ));
    }
    Ok(legendre_values(ctx, j, t).pop().expect("j >= 1"))
}

/// The first `n` orthonormal shifted Legendre polynomials at a fixed precision.
#[derive(Debug, Clone, Copy)]
pub struct LegendreBasis {
    pub n: usize,
    pub ctx: PrecisionContext,
}

impl LegendreBasis {
    pub fn new(ctx: PrecisionContext, n: usize) -> Self {
        Self { n, ctx }
    }

    pub fn eval(&self, j: usize, t: &BigReal) -> Result<BigReal> {
        if j > self.n {
            return Err(Error::InvalidArgument(format!(
                "index {j} beyond basis size {}",
                self.n
            )));
        }
        legendre_eval(&self.ctx, j, t)
    }

    pub fn values_at(&self, t: &BigReal) -> Vec<BigReal> {
        legendre_values(&self.ctx, self.n, t)
    }

    /// Table `v[k][j-1] = L_j(node_k)` over the nodes of `rule`.
    pub fn tabulate(&self, rule: &QuadratureRule, exec: Execution) -> Vec<Vec<BigReal>> {
        exec.map(&rule.nodes, |t| self.values_at(t))
    }

    /// Gram matrix ⟨L_i, L_j⟩ under `rule`, row-major n×n.
    pub fn gram(&self, rule: &QuadratureRule) -> Vec<BigReal> {
        let table = self.tabulate(rule, Execution::default());
        let prec = self.ctx.bits();
        let mut g = vec![self.ctx.zero(); self.n * self.n];
        let mut tmp = self.ctx.zero();
        for (vals, w) in table.iter().zip(&rule.weights) {
            for i in 0..self.n {
                let wi = Float::with_val(prec, &vals[i] * w);
                for j in 0..self.n {
                    tmp.assign(&wi * &vals[j]);
                    g[i * self.n + j] += &tmp;
                }
            }
        }
        g
    }
}

/// Gauss–Legendre rule on [0, 1].
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<BigReal>,
    pub weights: Vec<BigReal>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F>(&self, f: F) -> BigReal
    where
        F: Fn(&BigReal) -> BigReal,
    {
        let prec = self.weights[0].prec();
        let mut acc = Float::new(prec);
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            acc += Float::with_val(prec, &f(t) * w);
        }
        acc
    }
}

// P_m(x) and P_m'(x) on [-1, 1].
fn legendre_with_derivative(m: usize, x: &Float) -> (Float, Float) {
    let prec = x.prec();
    let mut p0 = Float::with_val(prec, 1);
    let mut p1 = x.clone();
    for k in 1..m {
        let mut p2 = Float::with_val(prec, x * &p1) * (2 * k + 1) as u64;
        p2 -= Float::with_val(prec, &p0 * k as u64);
        p2 /= (k + 1) as u64;
        p0 = std::mem::replace(&mut p1, p2);
    }
    // (1 − x²) P_m' = m (P_{m−1} − x P_m)
    let num = Float::with_val(prec, &p0 - &Float::with_val(prec, x * &p1)) * m as u64;
    let den = 1u32 - Float::with_val(prec, x * x);
    (p1, num / den)
}

fn legendre_f64(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 1..m {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    (p1, m as f64 * (p0 - x * p1) / (1.0 - x * x))
}

/// m-point Gauss–Legendre rule on [0, 1]; nodes are the roots of the degree-m
/// shifted Legendre polynomial found by Newton iteration at context precision.
pub fn gauss_rule(ctx: &PrecisionContext, m: usize) -> Result<QuadratureRule> {
    gauss_rule_with(ctx, m, Execution::default())
}

pub fn gauss_rule_with(ctx: &PrecisionContext, m: usize, exec: Execution) -> Result<QuadratureRule> {
    if m < 1 {
        return Err(Error::InvalidArgument("quadrature needs at least one node".into()));
    }
    let prec = ctx.bits();
    if m == 1 {
        return Ok(QuadratureRule {
            nodes: vec![ctx.ratio(1, 2)],
            weights: vec![ctx.one()],
        });
    }
    let wp = prec + 16;
    let half = m / 2;
    // roots in (0, 1) of P_m on [-1, 1], largest first
    let roots: Vec<Result<(Float, Float)>> = exec.map_range(half, |k| {
        let mut x0 =
            (std::f64::consts::PI * (k as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..8 {
            let (p, dp) = legendre_f64(m, x0);
            x0 -= p / dp;
        }
        let mut x = Float::with_val(wp, x0);
        let stop = Float::with_val(wp, Float::i_exp(1, -(prec as i32)));
        let mut converged = false;
        for _ in 0..64 {
            let (p, dp) = legendre_with_derivative(m, &x);
            let dx = p / &dp;
            x -= &dx;
            if dx.abs() <= stop {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                solver: "gauss_rule Newton",
                iterations: 64,
            });
        }
        let (_, dp) = legendre_with_derivative(m, &x);
        // w = 2 / ((1 − x²) P'(x)²), halved for [0, 1]
        let one_minus = 1u32 - Float::with_val(wp, &x * &x);
        let w = Float::with_val(wp, 1) / (one_minus * Float::with_val(wp, &dp * &dp));
        Ok((x, w))
    });

    let mut upper = Vec::with_capacity(half);
    for r in roots {
        upper.push(r?);
    }
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for (x, w) in upper.iter() {
        // t = (1 − x)/2 gives the lower half ascending
        nodes.push(Float::with_val(prec, Float::with_val(wp, 1u32 - x) / 2u32));
        weights.push(Float::with_val(prec, w));
    }
    if m % 2 == 1 {
        let zero = Float::new(wp);
        let (_, dp) = legendre_with_derivative(m, &zero);
        let w = Float::with_val(wp, 1) / Float::with_val(wp, &dp * &dp);
        nodes.push(ctx.ratio(1, 2));
        weights.push(Float::with_val(prec, w));
    }
    for (x, w) in upper.iter().rev() {
        nodes.push(Float::with_val(prec, Float::with_val(wp, 1u32 + x) / 2u32));
        weights.push(Float::with_val(prec, w));
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Exact (i!)² / ((i−j+1)! (i+j)!) for i ≥ j−1, else 0.
pub fn moment_ratio(i: usize, j: usize) -> Rational {
    if j < 1 || i + 1 < j {
        return Rational::new();
    }
    let mut q = Rational::from((1u64, (i + 1) as u64));
    for jj in 1..j {
        q *= Rational::from(((i + 1 - jj) as u64, (i + jj + 1) as u64));
    }
    q
}

/// ⟨s^i, L_j⟩ = √(2j−1)·(i!)² / ((i−j+1)!(i+j)!) for i ≥ j−1, and 0 otherwise.
pub fn monomial_moment(ctx: &PrecisionContext, i: usize, j: usize) -> BigReal {
    if j < 1 || i + 1 < j {
        return ctx.zero();
    }
    ctx.rational(&moment_ratio(i, j)) * ctx.sqrt_int((2 * j - 1) as i64)
}

/// ⟨s^i, L_j⟩ for j = 1..=n, sharing the product recurrence along the row.
pub fn monomial_moments_row(ctx: &PrecisionContext, i: usize, n: usize) -> Vec<BigReal> {
    let mut out = Vec::with_capacity(n);
    let mut q = Rational::from((1u64, (i + 1) as u64));
    for j in 1..=n {
        if i + 1 < j {
            out.push(ctx.zero());
            continue;
        }
        if j > 1 {
            q *= Rational::from(((i + 2 - j) as u64, (i + j) as u64));
        }
        out.push(ctx.rational(&q) * ctx.sqrt_int((2 * j - 1) as i64));
    }
    out
}

/// Result of a Parseval-style tail computation.
#[derive(Debug, Clone)]
pub struct ProjectionTail {
    /// ‖(I − Q_n) f‖, clipped at zero.
    pub norm: BigReal,
    /// ‖f‖² − Σ_{j≤n} ⟨f, L_j⟩² before clipping.
    pub radicand: BigReal,
    /// Set when the radicand was negative beyond rounding tolerance.
    pub clipped: bool,
}

/// ‖(I − Q_n) f‖ = (‖f‖² − Σ_{j≤n} ⟨f, L_j⟩²)^{1/2} with all integrals taken
/// by the m-point Gauss rule. The caller picks m large enough to resolve the
/// Legendre coefficients of f up to degree n.
pub fn projection_tail_norm<F>(
    ctx: &PrecisionContext,
    f: F,
    n: usize,
    m: usize,
) -> Result<ProjectionTail>
where
    F: Fn(&BigReal) -> BigReal + Sync,
{
    let rule = gauss_rule(ctx, m)?;
    let basis = LegendreBasis::new(*ctx, n);
    let prec = ctx.bits();
    let mut norm2 = ctx.zero();
    let mut coeffs = vec![ctx.zero(); n];
    for (t, w) in rule.nodes.iter().zip(&rule.weights) {
        let ft = f(t);
        let fw = Float::with_val(prec, &ft * w);
        norm2 += Float::with_val(prec, &fw * &ft);
        for (c, l) in coeffs.iter_mut().zip(basis.values_at(t)) {
            *c += Float::with_val(prec, &fw * &l);
        }
    }
    let mut radicand = norm2.clone();
    for c in &coeffs {
        radicand -= Float::with_val(prec, c * c);
    }
    let tol = Float::with_val(prec, &norm2 * &ctx.tolerance(16));
    let (norm, clipped) = if radicand.is_sign_negative() || radicand <= tol {
        let clipped = Float::with_val(prec, -&radicand) > tol;
        (ctx.zero(), clipped)
    } else {
        (radicand.clone().sqrt(), false)
    };
    Ok(ProjectionTail {
        norm,
        radicand,
        clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::ops::Pow;

    fn ctx() -> PrecisionContext {
        PrecisionContext::default()
    }

    fn close(a: &BigReal, b: &BigReal, tol: &BigReal) -> bool {
        Float::with_val(a.prec(), a - b).abs() <= *tol
    }

    #[test]
    fn low_order_values() {
        let c = ctx();
        assert_eq!(legendre_eval(&c, 1, &c.real(0.7)).unwrap(), 1);
        let l2 = legendre_eval(&c, 2, &c.one()).unwrap();
        assert!(close(&l2, &c.sqrt_int(3), &c.tolerance(4)));
        // L_3(t) = √5 (6t² − 6t + 1), from the Rodrigues form
        let t = c.ratio(1, 3);
        let expected = c.sqrt_int(5) * (c.ratio(6, 9) - c.ratio(6, 3) + c.one());
        let got = legendre_eval(&c, 3, &t).unwrap();
        assert!(close(&got, &expected, &c.tolerance(4)));
    }

    #[test]
    fn endpoint_identity() {
        let c = ctx();
        let at_one = legendre_values(&c, 30, &c.one());
        let at_zero = legendre_values(&c, 30, &c.zero());
        for j in 1..=30usize {
            let s = c.sqrt_int((2 * j - 1) as i64);
            assert!(close(&at_one[j - 1], &s, &c.tolerance(10)));
            let signed = if j % 2 == 1 { s.clone() } else { -s.clone() };
            assert!(close(&at_zero[j - 1], &signed, &c.tolerance(10)));
        }
    }

    #[test]
    fn legendre_domain_errors() {
        let c = ctx();
        assert!(legendre_eval(&c, 0, &c.real(0.5)).is_err());
        assert!(legendre_eval(&c, 2, &c.real(1.01)).is_err());
        assert!(legendre_eval(&c, 2, &c.real(-0.01)).is_err());
    }

    #[test]
    fn small_rules() {
        let c = ctx();
        let r1 = gauss_rule(&c, 1).unwrap();
        assert_eq!(r1.nodes[0], 0.5);
        assert_eq!(r1.weights[0], 1);
        let r2 = gauss_rule(&c, 2).unwrap();
        let off = c.one() / (c.sqrt_int(3) * 2u32);
        let lo = c.ratio(1, 2) - off.clone();
        let hi = c.ratio(1, 2) + off;
        assert!(close(&r2.nodes[0], &lo, &c.tolerance(4)));
        assert!(close(&r2.nodes[1], &hi, &c.tolerance(4)));
        for w in &r2.weights {
            assert!(close(w, &c.ratio(1, 2), &c.tolerance(4)));
        }
        assert!(gauss_rule(&c, 0).is_err());
    }

    #[test]
    fn rule_exactness() {
        let c = ctx();
        let r3 = gauss_rule(&c, 3).unwrap();
        let v = r3.integrate(|t| Float::with_val(256, t.pow(4u32)));
        assert!(close(&v, &c.ratio(1, 5), &c.tolerance(4)));
        for m in [5usize, 12, 33] {
            let r = gauss_rule(&c, m).unwrap();
            let total = r.weights.iter().fold(c.zero(), |a, w| a + w);
            assert!(close(&total, &c.one(), &c.tolerance(8)));
            let d = (2 * m - 1) as u32;
            let v = r.integrate(|t| Float::with_val(256, t.pow(d)));
            assert!(close(&v, &c.ratio(1, i64::from(d) + 1), &c.tolerance(10)));
            assert!(r.weights.iter().all(|w| *w > 0));
            assert!(r.nodes.windows(2).all(|p| p[0] < p[1]));
            assert!(r.nodes[0] > 0 && r.nodes[m - 1] < 1);
        }
    }

    #[test]
    fn orthonormality() {
        let c = ctx();
        for n in [5usize, 30] {
            let rule = gauss_rule(&c, 2 * n).unwrap();
            let g = LegendreBasis::new(c, n).gram(&rule);
            let tol = c.tolerance(16);
            for i in 0..n {
                for j in 0..n {
                    let target = if i == j { c.one() } else { c.zero() };
                    assert!(close(&g[i * n + j], &target, &tol), "({i},{j}) at n={n}");
                }
            }
        }
    }

    #[test]
    fn moment_examples() {
        let c = ctx();
        assert_eq!(monomial_moment(&c, 0, 1), 1);
        let expected = c.sqrt_int(3) / 6u32;
        assert!(close(&monomial_moment(&c, 1, 2), &expected, &c.tolerance(4)));
        assert!(monomial_moment(&c, 1, 3).is_zero());
    }

    #[test]
    fn moments_agree_with_quadrature() {
        let c = ctx();
        let tol = c.tolerance(16);
        let rule = gauss_rule(&c, 42).unwrap();
        let table = LegendreBasis::new(c, 40).tabulate(&rule, Execution::default());
        for i in 0..=40usize {
            let row = monomial_moments_row(&c, i, 40);
            for j in 1..=40usize {
                let closed = monomial_moment(&c, i, j);
                assert_eq!(closed, row[j - 1]);
                if i + 1 < j {
                    assert!(closed.is_zero());
                    continue;
                }
                let mut q = c.zero();
                for (k, (t, w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
                    let p = Float::with_val(256, t.pow(i as u32));
                    q += p * &table[k][j - 1] * w;
                }
                assert!(close(&closed, &q, &tol), "i={i} j={j}");
            }
        }
    }

    #[test]
    fn tail_norm_examples() {
        let c = ctx();
        let l3 = |t: &BigReal| legendre_eval(&c, 3, t).unwrap();
        let r = projection_tail_norm(&c, l3, 3, 16).unwrap();
        assert!(r.norm.is_zero());
        assert!(!r.clipped);

        let l5 = |t: &BigReal| legendre_eval(&c, 5, t).unwrap();
        let r = projection_tail_norm(&c, l5, 3, 16).unwrap();
        assert!(close(&r.norm, &c.one(), &c.tolerance(16)));

        let e = |t: &BigReal| Float::with_val(256, t.exp_ref());
        let r = projection_tail_norm(&c, e, 4, 40).unwrap();
        let e2 = c.int(2).exp();
        let bound = ((e2 - 1u32) / 2u32).sqrt() / 8u32;
        assert!(r.norm <= bound);
        assert!((bound.to_f64() - 0.22342).abs() < 1e-4);
    }
}

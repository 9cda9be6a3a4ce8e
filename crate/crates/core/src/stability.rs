//! Modulus of continuity ω(δ) = sup{‖Dx‖ : ‖Ax‖ ≤ δ, ‖x‖ ≤ E} of operator
//! sections and logarithmic envelopes C_k/(ln(1/δ))^k.
//!
//! Two quadratic constraints make the S-procedure exact, so
//! ω²(δ) = min_{β≥0} E²·max(λ_max(DᵀD − βAᵀA), 0) + βδ².
//! The objective is convex in β; it is minimized by golden-section search
//! in ln β over [β_hi·e^{−200}, β_hi] with β_hi = σ₁(D)²/δ², together with
//! the endpoint β = 0.

use std::io::Write;

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::jacobi::{jacobi_eigenvalues, DEFAULT_MAX_SWEEPS};
use crate::matrix::DenseMatrix;
use crate::operators::{assemble, OperatorSpec};
use crate::precision::{to_decimal, BigReal, PrecisionContext};

const LOG_SPAN: f64 = 200.0;
const LOG_TOL: f64 = 1e-9;

/// Precomputed Gram matrices of a (D, A) pair sharing a column space.
#[derive(Debug, Clone)]
pub struct ModulusProblem {
    dtd: DenseMatrix,
    ata: DenseMatrix,
    d_norm2: BigReal,
    a_norm2: BigReal,
    exec: Execution,
}

impl ModulusProblem {
    pub fn new(d: &DenseMatrix, a: &DenseMatrix) -> Result<Self> {
        Self::with_exec(d, a, Execution::default())
    }

    /// `exec` drives the eigenvalue solver inside each evaluation.
    pub fn with_exec(d: &DenseMatrix, a: &DenseMatrix, exec: Execution) -> Result<Self> {
        if d.cols() != a.cols() {
            return Err(Error::Dimension(format!(
                "D has {} columns but A has {}",
                d.cols(),
                a.cols()
            )));
        }
        if d.col_basis != a.col_basis {
            return Err(Error::Basis {
                outer: d.col_basis,
                inner: a.col_basis,
            });
        }
        let ctx = *d.context();
        let a = a.with_context(&ctx);
        let dtd = d.gram(exec);
        let ata = a.gram(exec);
        let d_norm2 = lambda_max(&dtd, exec)?;
        let a_norm2 = lambda_max(&ata, exec)?;
        Ok(Self {
            dtd,
            ata,
            d_norm2,
            a_norm2,
            exec,
        })
    }

    pub fn context(&self) -> &PrecisionContext {
        self.dtd.context()
    }

    pub fn d_norm(&self) -> BigReal {
        Float::with_val(self.context().bits(), self.d_norm2.sqrt_ref())
    }

    pub fn a_norm(&self) -> BigReal {
        Float::with_val(self.context().bits(), self.a_norm2.sqrt_ref())
    }

    pub fn omega(&self, delta: &BigReal) -> Result<BigReal> {
        self.omega_with_radius(delta, &self.context().one())
    }

    pub fn omega_with_radius(&self, delta: &BigReal, radius: &BigReal) -> Result<BigReal> {
        let ctx = *self.context();
        let prec = ctx.bits();
        if !(delta.is_finite() && *delta > 0) {
            return Err(Error::InvalidArgument(format!("δ must be positive, got {}", delta.to_f64())));
        }
        if !(radius.is_finite() && *radius > 0) {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {}", radius.to_f64())));
        }
        let r2 = Float::with_val(prec, radius.square_ref());
        let trivial = Float::with_val(prec, &self.d_norm2 * &r2);
        if trivial.is_zero() {
            return Ok(ctx.zero());
        }
        // ‖Ax‖ ≤ ‖A‖E ≤ δ makes the first constraint inactive
        let reach = Float::with_val(prec, &self.a_norm2 * &r2);
        let delta2 = Float::with_val(prec, delta.square_ref());
        if delta2 >= reach {
            return Ok(trivial.sqrt());
        }

        let objective = |u: f64| -> Result<BigReal> {
            let beta = ctx.real(u).exp();
            let shifted = self.dtd.sub(&self.ata.scale(&beta))?;
            let top = lambda_max(&shifted, self.exec)?;
            let mut v = if top.is_sign_positive() { top * &r2 } else { ctx.zero() };
            v += Float::with_val(prec, &beta * &delta2);
            Ok(v)
        };

        let hi = Float::with_val(prec, &trivial / &delta2).ln().to_f64();
        let lo = hi - LOG_SPAN;
        let (mut a, mut b) = (lo, hi);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let mut f1 = objective(x1)?;
        let mut f2 = objective(x2)?;
        while b - a > LOG_TOL * hi.abs().max(1.0) {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = objective(x1)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = objective(x2)?;
            }
        }
        let best = if f1 <= f2 { f1 } else { f2 };
        if !best.is_finite() {
            return Err(Error::Bracket { lo, hi });
        }
        let best = if best < trivial { best } else { trivial };
        Ok(best.sqrt())
    }
}

fn lambda_max(s: &DenseMatrix, exec: Execution) -> Result<BigReal> {
    let e = jacobi_eigenvalues(s, exec, DEFAULT_MAX_SWEEPS)?;
    Ok(e.values.into_iter().next().unwrap_or_else(|| s.context().zero()))
}

/// ω(δ) over the unit ball.
pub fn modulus(d: &DenseMatrix, a: &DenseMatrix, delta: &BigReal) -> Result<BigReal> {
    ModulusProblem::new(d, a)?.omega(delta)
}

/// ω(δ) over the ball of radius `radius`.
pub fn modulus_with_radius(d: &DenseMatrix, a: &DenseMatrix, delta: &BigReal, radius: &BigReal) -> Result<BigReal> {
    ModulusProblem::new(d, a)?.omega_with_radius(delta, radius)
}

#[derive(Debug, Clone)]
pub struct ModulusCurve {
    /// Decreasing.
    pub deltas: Vec<BigReal>,
    pub omegas: Vec<BigReal>,
    pub d_spec: Option<OperatorSpec>,
    pub a_spec: Option<OperatorSpec>,
    pub n: usize,
    pub d_norm: BigReal,
    pub a_norm: BigReal,
    /// ω non-decreasing in δ up to the working tolerance.
    pub monotone: bool,
}

#[derive(Serialize, Deserialize)]
struct CurveJson {
    d_spec: Option<OperatorSpec>,
    a_spec: Option<OperatorSpec>,
    n: usize,
    precision_bits: u32,
    d_norm: String,
    a_norm: String,
    monotone: bool,
    star_shaped: bool,
    deltas: Vec<String>,
    omegas: Vec<String>,
}

impl ModulusCurve {
    /// ω(δ)/δ non-increasing in δ: the pairwise secant condition that makes
    /// ω majorizable by a concave function.
    pub fn star_shaped(&self) -> bool {
        let prec = self.omegas.first().map_or(64, Float::prec);
        let slack = Float::with_val(prec, Float::i_exp(1, -(prec as i32) / 2));
        let slopes: Vec<BigReal> = self
            .omegas
            .iter()
            .zip(&self.deltas)
            .map(|(w, d)| Float::with_val(prec, w / d))
            .collect();
        // deltas decrease, so slopes must not decrease along the grid
        slopes
            .windows(2)
            .all(|w| w[1] >= Float::with_val(prec, &w[0] * Float::with_val(prec, 1 - &slack)))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "delta,omega")?;
        for (d, o) in self.deltas.iter().zip(&self.omegas) {
            writeln!(w, "{},{}", to_decimal(d), to_decimal(o))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(CurveJson {
            d_spec: self.d_spec.clone(),
            a_spec: self.a_spec.clone(),
            n: self.n,
            precision_bits: self.d_norm.prec(),
            d_norm: to_decimal(&self.d_norm),
            a_norm: to_decimal(&self.a_norm),
            monotone: self.monotone,
            star_shaped: self.star_shaped(),
            deltas: self.deltas.iter().map(to_decimal).collect(),
            omegas: self.omegas.iter().map(to_decimal).collect(),
        })
        .expect("plain data")
    }
}

/// Modulus on a decreasing δ-grid for given matrices. Grid points are
/// evaluated in parallel under `exec`; each evaluation is sequential.
pub fn modulus_curve_of(
    d: &DenseMatrix,
    a: &DenseMatrix,
    deltas: &[BigReal],
    exec: Execution,
) -> Result<ModulusCurve> {
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("empty δ-grid".into()));
    }
    if deltas.iter().any(|d| !(d.is_finite() && *d > 0)) {
        return Err(Error::InvalidArgument("δ-grid must be positive".into()));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("δ-grid must be strictly decreasing".into()));
    }
    let problem = ModulusProblem::with_exec(d, a, Execution::Sequential)?;
    let omegas = exec
        .map(deltas, |delta| problem.omega(delta))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let ctx = problem.context();
    let tol = ctx.eps_pow2(-(ctx.bits() as i32) / 2);
    let monotone = omegas.windows(2).all(|w| {
        let rise = Float::with_val(ctx.bits(), &w[1] - &w[0]);
        rise <= Float::with_val(ctx.bits(), &tol * &w[0])
    });
    Ok(ModulusCurve {
        deltas: deltas.to_vec(),
        omegas,
        d_spec: None,
        a_spec: None,
        n: d.cols(),
        d_norm: problem.d_norm(),
        a_norm: problem.a_norm(),
        monotone,
    })
}

/// Sections of `d_spec` and `a_spec` with `n` columns (row counts keep each
/// spec's aspect ratio), then [`modulus_curve_of`].
pub fn modulus_curve(
    ctx: &PrecisionContext,
    d_spec: &OperatorSpec,
    a_spec: &OperatorSpec,
    n: usize,
    deltas: &[BigReal],
    exec: Execution,
) -> Result<ModulusCurve> {
    let resize = |spec: &OperatorSpec| {
        let rows = (n as f64 * spec.rows as f64 / spec.cols as f64).round().max(1.0) as usize;
        spec.resized(rows, n)
    };
    let (ds, as_) = (resize(d_spec), resize(a_spec));
    let d = assemble(ctx, &ds)?;
    let a = assemble(ctx, &as_)?;
    let mut curve = modulus_curve_of(&d, &a, deltas, exec)?;
    curve.d_spec = Some(ds);
    curve.a_spec = Some(as_);
    Ok(curve)
}

/// Log-spaced decreasing grid 10^{hi_exp} .. 10^{lo_exp}, `per_decade`
/// points per decade.
pub fn log_grid(ctx: &PrecisionContext, hi_exp: i32, lo_exp: i32, per_decade: usize) -> Vec<BigReal> {
    let steps = ((hi_exp - lo_exp) as usize) * per_decade.max(1);
    (0..=steps)
        .map(|k| {
            let e = hi_exp as f64 - k as f64 / per_decade.max(1) as f64;
            Float::with_val(ctx.bits(), 10u32).pow_ref_f64(e)
        })
        .collect()
}

trait PowF64 {
    fn pow_ref_f64(&self, e: f64) -> BigReal;
}

impl PowF64 for Float {
    fn pow_ref_f64(&self, e: f64) -> BigReal {
        let prec = self.prec();
        let lg = Float::with_val(prec, self.ln_ref()) * Float::with_val(prec, e);
        lg.exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThmReport {
    pub passed: bool,
    /// 1-based.
    pub first_violation: Option<usize>,
    pub checked: usize,
    /// max_i σ_i(D)/Ψ(σ_i(A)).
    pub worst_ratio: f64,
}

/// Index-wise check σ_i(D) ≤ Ψ(σ_i(A))·(1 + rel_tol).
pub fn check_thm_general<F>(d_sigmas: &[f64], a_sigmas: &[f64], psi: F, rel_tol: f64) -> Result<ThmReport>
where
    F: Fn(f64) -> f64,
{
    if d_sigmas.len() != a_sigmas.len() {
        return Err(Error::Dimension(format!(
            "{} singular values of D against {} of A",
            d_sigmas.len(),
            a_sigmas.len()
        )));
    }
    let mut first = None;
    let mut worst = 0.0f64;
    for (i, (d, a)) in d_sigmas.iter().zip(a_sigmas).enumerate() {
        let bound = psi(*a);
        let ratio = d / bound;
        worst = worst.max(ratio);
        if (d.is_nan() || *d > bound * (1.0 + rel_tol) || bound.is_nan()) && first.is_none() {
            first = Some(i + 1);
        }
    }
    Ok(ThmReport {
        passed: first.is_none(),
        first_violation: first,
        checked: d_sigmas.len(),
        worst_ratio: worst,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityFit {
    pub k: u32,
    pub c_k: f64,
    /// (smallest δ, largest δ) of the points used.
    pub window: (f64, f64),
    /// max |ln ω − ln C_k + k·ln ln(1/δ)|.
    pub residual: f64,
}

/// Minimax fit of ln ω(δ) ≈ ln C_k − k·ln ln(1/δ) over the curve points
/// with δ in `window` (all points below 1 when `None`).
pub fn fit_log_envelope(curve: &ModulusCurve, k: u32, window: Option<(f64, f64)>) -> Result<StabilityFit> {
    let mut r = Vec::new();
    let mut used = Vec::new();
    for (d, w) in curve.deltas.iter().zip(&curve.omegas) {
        let df = d.to_f64();
        let inside = match window {
            Some((lo, hi)) => df >= lo && df <= hi,
            None => true,
        };
        if !inside || *d >= 1 {
            continue;
        }
        if !(w.is_finite() && *w > 0) {
            return Err(Error::InvalidArgument(format!("ω({df:e}) is not positive")));
        }
        let prec = d.prec();
        let lnln = Float::with_val(prec, d.ln_ref()).abs().ln();
        let v = Float::with_val(prec, w.ln_ref()) + lnln * k;
        r.push(v.to_f64());
        used.push(df);
    }
    if r.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "envelope window holds {} points, need at least 3",
            r.len()
        )));
    }
    let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = r.iter().cloned().fold(f64::INFINITY, f64::min);
    let lo = used.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = used.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(StabilityFit {
        k,
        c_k: ((max + min) / 2.0).exp(),
        window: (lo, hi),
        residual: (max - min) / 2.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Basis;

    fn ctx() -> PrecisionContext {
        PrecisionContext::new(128).unwrap()
    }

    fn diag(c: &PrecisionContext, v: &[f64]) -> DenseMatrix {
        DenseMatrix::diagonal(c, v.iter().map(|x| c.real(*x)).collect(), Basis::Legendre)
    }

    #[test]
    fn square_link_example() {
        // brute force over the unit circle: max ‖Dx‖ subject to ‖Ax‖ ≤ δ
        let c = ctx();
        let d = diag(&c, &[1.0, 0.5]);
        let a = diag(&c, &[1.0, 0.25]);
        let w = modulus(&d, &a, &c.real(0.25)).unwrap().to_f64();
        let mut best = 0.0f64;
        let samples = 1_000_000;
        for k in 0..samples {
            let phi = std::f64::consts::TAU * k as f64 / samples as f64;
            let (x, y) = (phi.cos(), phi.sin());
            let ax = (x * x + (0.25 * y).powi(2)).sqrt();
            let scale = if ax > 0.25 { 0.25 / ax } else { 1.0 };
            best = best.max(scale * (x * x + (0.5 * y).powi(2)).sqrt());
        }
        assert!((w - 0.5).abs() < 1e-8, "{w}");
        assert!(w >= best - 1e-9 && w - best < 1e-5);
    }

    #[test]
    fn inactive_constraint() {
        let c = ctx();
        let d = diag(&c, &[0.7, 0.2]);
        let a = diag(&c, &[0.5, 0.1]);
        let w = modulus(&d, &a, &c.real(0.5)).unwrap();
        assert!((w.to_f64() - 0.7).abs() < 1e-15);
        let w = modulus(&d, &a, &c.real(3.0)).unwrap();
        assert!((w.to_f64() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn identical_operators() {
        let c = ctx();
        let a = DenseMatrix::from_rows(
            &c,
            vec![vec![c.real(0.9), c.real(0.2)], vec![c.real(-0.1), c.real(0.4)], vec![c.real(0.3), c.real(0.0)]],
            Basis::Moment,
            Basis::Legendre,
        )
        .unwrap();
        let problem = ModulusProblem::new(&a, &a).unwrap();
        let s1 = problem.a_norm().to_f64();
        for delta in [1e-4, 0.05, 0.3, 0.9, 2.0] {
            let w = problem.omega(&c.real(delta)).unwrap().to_f64();
            assert!((w - delta.min(s1)).abs() < 1e-8 * delta.min(s1), "δ={delta}");
        }
    }

    #[test]
    fn commuting_square_root_pair_realizes_psi() {
        let c = ctx();
        let a_vals = [1.0, 0.25, 1.0 / 16.0, 1.0 / 64.0];
        let d_vals: Vec<f64> = a_vals.iter().map(|v: &f64| v.sqrt()).collect();
        let (d, a) = (diag(&c, &d_vals), diag(&c, &a_vals));
        // ω² is the piecewise linear interpolant of u ↦ √u at the nodes
        // σ_i(A)², so ω ≤ √δ with equality at δ = σ_i(A)
        for delta in [0.02, 0.1, 0.5, 0.9] {
            let w = modulus(&d, &a, &c.real(delta)).unwrap().to_f64();
            assert!(w <= delta.sqrt() + 1e-9);
        }
        for s in &a_vals[..3] {
            let w = modulus(&d, &a, &c.real(*s)).unwrap().to_f64();
            assert!((w - s.sqrt()).abs() < 1e-7, "δ={s} ω={w}");
        }
    }

    #[test]
    fn radius_scaling() {
        let c = ctx();
        let d = diag(&c, &[0.8, 0.3, 0.05]);
        let a = DenseMatrix::from_rows(
            &c,
            vec![
                vec![c.real(0.5), c.real(0.1), c.real(0.0)],
                vec![c.real(0.0), c.real(0.2), c.real(0.05)],
                vec![c.real(0.0), c.real(0.0), c.real(0.01)],
            ],
            Basis::Moment,
            Basis::Legendre,
        )
        .unwrap();
        let p = ModulusProblem::new(&d, &a).unwrap();
        let two = c.int(2);
        for delta in [0.001, 0.03, 0.2] {
            let lhs = p.omega_with_radius(&c.real(delta), &two).unwrap();
            let rhs = p.omega(&c.real(delta / 2.0)).unwrap() * 2u32;
            assert!((lhs.to_f64() - rhs.to_f64()).abs() < 1e-8 * rhs.to_f64());
        }
    }

    #[test]
    fn argument_errors() {
        let c = ctx();
        let d = diag(&c, &[1.0, 0.5]);
        let a = diag(&c, &[1.0]);
        assert!(matches!(ModulusProblem::new(&d, &a), Err(Error::Dimension(_))));
        let a = diag(&c, &[1.0, 0.25]);
        assert!(modulus(&d, &a, &c.zero()).is_err());
        let mut a_moment = a.clone();
        a_moment.col_basis = Basis::Moment;
        assert!(matches!(ModulusProblem::new(&d, &a_moment), Err(Error::Basis { .. })));
        let grid = vec![c.real(0.1), c.real(0.2)];
        assert!(modulus_curve_of(&d, &a, &grid, Execution::default()).is_err());
    }

    #[test]
    fn curve_above_norm_is_constant() {
        let c = ctx();
        let d = diag(&c, &[0.6, 0.1]);
        let a = diag(&c, &[0.3, 0.2]);
        let grid = vec![c.real(5.0), c.real(2.0), c.real(0.5)];
        let curve = modulus_curve_of(&d, &a, &grid, Execution::default()).unwrap();
        for w in &curve.omegas {
            assert!((w.to_f64() - 0.6).abs() < 1e-15);
        }
        assert!(curve.monotone && curve.star_shaped());
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("delta,omega"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn theorem_check_examples() {
        let s = [1.0, 0.5, 0.25];
        let r = check_thm_general(&s, &s, |t| t, 0.0).unwrap();
        assert!(r.passed && r.checked == 3);
        let r = check_thm_general(&[1.0, 0.5, 0.25], &[1.0, 0.25, 1.0 / 16.0], f64::sqrt, 0.0).unwrap();
        assert!(r.passed);
        assert!((r.worst_ratio - 1.0).abs() < 1e-15);
        let r = check_thm_general(&[1.0, 0.6], &[1.0, 0.25], f64::sqrt, 1e-12).unwrap();
        assert_eq!(r.first_violation, Some(2));
        assert!(check_thm_general(&[1.0], &[1.0, 2.0], f64::sqrt, 0.0).is_err());
    }

    fn synthetic(c: &PrecisionContext, f: impl Fn(f64) -> f64) -> ModulusCurve {
        let deltas = log_grid(c, -1, -8, 2);
        let omegas = deltas.iter().map(|d| c.real(f(d.to_f64()))).collect();
        ModulusCurve {
            deltas,
            omegas,
            d_spec: None,
            a_spec: None,
            n: 0,
            d_norm: c.one(),
            a_norm: c.one(),
            monotone: true,
        }
    }

    #[test]
    fn envelope_exact_models() {
        let c = ctx();
        let fit = fit_log_envelope(&synthetic(&c, |d| 3.0 / (1.0 / d).ln()), 1, None).unwrap();
        assert!((fit.c_k - 3.0).abs() < 1e-10 && fit.residual < 1e-12);
        let fit = fit_log_envelope(&synthetic(&c, |d| 2.0 / (1.0 / d).ln().powi(2)), 2, None).unwrap();
        assert!((fit.c_k - 2.0).abs() < 1e-10 && fit.residual < 1e-12);
        assert!(fit_log_envelope(&synthetic(&c, |d| d), 1, Some((0.05, 0.2))).is_err());
    }

    #[test]
    fn grid_shape() {
        let c = ctx();
        let g = log_grid(&c, -1, -6, 1);
        assert_eq!(g.len(), 6);
        assert!((g[0].to_f64() - 0.1).abs() < 1e-17);
        assert!((g[5].to_f64() - 1e-6).abs() < 1e-22);
    }
}

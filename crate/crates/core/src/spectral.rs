//! Spectra of operator sections, Hilbert–Schmidt tails of B⁽ᴴ⁾∘J and decay
//! estimates.

use std::io::Write;

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::exec::Execution;
use crate::jacobi::{jacobi_svd, SvdOptions};
use crate::legendre::monomial_moments_row;
use crate::matrix::DenseMatrix;
use crate::operators::{assemble, OperatorSpec};
use crate::precision::{to_decimal, BigReal, PrecisionContext};

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub sigmas: Vec<BigReal>,
    pub spec: Option<OperatorSpec>,
    pub rows: usize,
    pub cols: usize,
    pub precision_bits: u32,
    pub orthogonality_residual: BigReal,
    pub sweeps: usize,
    pub converged: bool,
}

#[derive(Serialize, Deserialize)]
struct SpectrumJson {
    spec: Option<OperatorSpec>,
    rows: usize,
    cols: usize,
    precision_bits: u32,
    sweeps: usize,
    converged: bool,
    reliable: bool,
    orthogonality_residual: String,
    sigmas: Vec<String>,
}

impl SpectrumReport {
    /// Section size (number of singular values).
    pub fn n(&self) -> usize {
        self.sigmas.len()
    }

    /// Converged with orthogonality residual below 2^{-bits/2}.
    pub fn reliable(&self) -> bool {
        let bound = Float::with_val(self.precision_bits, Float::i_exp(1, -(self.precision_bits as i32 / 2)));
        self.converged && self.orthogonality_residual < bound
    }

    pub fn sigmas_f64(&self) -> Vec<f64> {
        self.sigmas.iter().map(Float::to_f64).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "index,sigma")?;
        for (i, s) in self.sigmas.iter().enumerate() {
            writeln!(w, "{},{}", i + 1, to_decimal(s))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(SpectrumJson {
            spec: self.spec.clone(),
            rows: self.rows,
            cols: self.cols,
            precision_bits: self.precision_bits,
            sweeps: self.sweeps,
            converged: self.converged,
            reliable: self.reliable(),
            orthogonality_residual: to_decimal(&self.orthogonality_residual),
            sigmas: self.sigmas.iter().map(to_decimal).collect(),
        })
        .expect("plain data")
    }
}

pub fn svd(m: &DenseMatrix, exec: Execution) -> SpectrumReport {
    let r = jacobi_svd(
        m,
        &SvdOptions {
            exec,
            ..SvdOptions::default()
        },
    );
    SpectrumReport {
        sigmas: r.sigmas,
        spec: None,
        rows: m.rows(),
        cols: m.cols(),
        precision_bits: m.context().bits(),
        orthogonality_residual: r.orthogonality_residual,
        sweeps: r.sweeps,
        converged: r.converged,
    }
}

/// Assemble `spec` and compute its singular values.
pub fn spectrum(ctx: &PrecisionContext, spec: &OperatorSpec, exec: Execution) -> Result<SpectrumReport> {
    let m = assemble(ctx, spec)?;
    let mut report = svd(&m, exec);
    report.spec = Some(spec.clone());
    Ok(report)
}

/// ‖A(I−Q_n)‖²_HS for A = B⁽ᴴ⁾∘J, summed over i = n..=cap with the rest
/// enclosed in `[value, value + width]`.
#[derive(Debug, Clone)]
pub struct HsTail {
    pub n: usize,
    pub cap: usize,
    pub value: BigReal,
    pub width: BigReal,
}

impl HsTail {
    pub fn upper(&self) -> BigReal {
        Float::with_val(self.value.prec(), &self.value + &self.width)
    }
}

/// ‖(I−Q_n)h_i‖² = 1 − (2i+1) Σ_{j≤n} ⟨s^i, L_j⟩², h_i = √(2i+1)·s^i.
pub fn projection_defect(ctx: &PrecisionContext, i: usize, n: usize) -> BigReal {
    let row = monomial_moments_row(ctx, i, n);
    let mut sum = ctx.zero();
    for m in &row {
        sum += m * m;
    }
    sum *= (2 * i + 1) as u64;
    let d = ctx.one() - sum;
    if d.is_sign_negative() {
        ctx.zero()
    } else {
        d
    }
}

pub fn hs_tail(ctx: &PrecisionContext, n: usize, cap: usize, exec: Execution) -> Result<HsTail> {
    if n < 1 {
        return Err(Error::InvalidArgument("cutoff n must be >= 1".into()));
    }
    let cap = cap.max(n);
    let terms: Vec<BigReal> = exec.map_range(cap - n + 1, |k| {
        let i = n + k;
        let d = projection_defect(ctx, i, n);
        d / ((i * i * (2 * i + 1)) as f64)
    });
    let mut value = ctx.zero();
    for t in terms.iter().rev() {
        value += t;
    }
    // Σ_{i>cap} 1/(i²(2i+1)) < ∫_cap^∞ dx/(2x³)
    let width = ctx.one() / ((4 * cap * cap) as f64);
    Ok(HsTail { n, cap, value, width })
}

/// Pointwise bound s_i ≤ √C₂·i^{−(1+2κ)/2} with C₂ = C·2^{1+2κ}, obtained from
/// a tail bound Σ_{i>n} s_i² ≤ C·n^{−2κ}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseBound {
    pub c2: f64,
    pub exponent: f64,
}

impl PointwiseBound {
    pub fn coefficient(&self) -> f64 {
        self.c2.sqrt()
    }

    /// The bound the tail argument proves at index i: even indices directly,
    /// odd i ≥ 3 through s_i ≤ s_{i−1}. Nothing is proved for i = 1.
    pub fn bound(&self, i: usize) -> Option<f64> {
        match i {
            0 | 1 => None,
            _ if i.is_multiple_of(2) => Some(self.coefficient() * (i as f64).powf(-self.exponent)),
            _ => Some(self.coefficient() * ((i - 1) as f64).powf(-self.exponent)),
        }
    }
}

pub fn tail_to_pointwise(c: f64, kappa: f64) -> Result<PointwiseBound> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidArgument(format!("tail constant must be positive, got {c}")));
    }
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::InvalidArgument(format!("tail exponent must be positive, got {kappa}")));
    }
    Ok(PointwiseBound {
        c2: c * 2f64.powf(1.0 + 2.0 * kappa),
        exponent: (1.0 + 2.0 * kappa) / 2.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Slope of ln σ_i against ln i.
    pub exponent: f64,
    pub log_constant: f64,
    /// 1-based, inclusive.
    pub window: (usize, usize),
    /// max |fit − data| in log scale.
    pub residual: f64,
    /// Steep slope with residual growing as the window widens: the data is
    /// not a power law.
    pub not_power_law: bool,
}

fn line_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = points
        .iter()
        .map(|p| (intercept + slope * p.0 - p.1).abs())
        .fold(0.0, f64::max);
    (slope, intercept, residual)
}

/// Least-squares power law over `lo..=hi` (1-based indices into `sigmas`).
pub fn fit_decay(sigmas: &[BigReal], lo: usize, hi: usize) -> Result<DecayFit> {
    let logs: Vec<f64> = sigmas
        .iter()
        .map(|s| if s.is_sign_positive() && !s.is_zero() { s.clone().ln().to_f64() } else { f64::NAN })
        .collect();
    fit_log_decay(&logs, lo, hi)
}

pub fn fit_decay_f64(sigmas: &[f64], lo: usize, hi: usize) -> Result<DecayFit> {
    let logs: Vec<f64> = sigmas.iter().map(|s| if *s > 0.0 { s.ln() } else { f64::NAN }).collect();
    fit_log_decay(&logs, lo, hi)
}

fn fit_log_decay(logs: &[f64], lo: usize, hi: usize) -> Result<DecayFit> {
    if lo < 1 || hi > logs.len() || hi < lo || hi - lo + 1 < 5 {
        return Err(Error::InvalidArgument(format!(
            "fit window [{lo}, {hi}] needs at least 5 indices within 1..={}",
            logs.len()
        )));
    }
    let points: Vec<(f64, f64)> = (lo..=hi).map(|i| ((i as f64).ln(), logs[i - 1])).collect();
    if let Some(i) = points.iter().position(|p| !p.1.is_finite()) {
        return Err(domain("fit_decay", format!("sigma_{} is not positive", lo + i)));
    }
    let (slope, intercept, residual) = line_fit(&points);
    let half = points.len() / 2;
    let growing = half >= 5 && line_fit(&points[..half]).2 < residual;
    Ok(DecayFit {
        exponent: slope,
        log_constant: intercept,
        window: (lo, hi),
        residual,
        not_power_law: slope < -6.0 && growing,
    })
}

/// Default fit window: all indices except the last 20% of the section.
pub fn default_fit_window(n: usize) -> (usize, usize) {
    (1, (n * 4 / 5).max(1))
}

#[derive(Debug, Clone)]
pub struct Stabilization {
    pub index: usize,
    pub points: Vec<(usize, BigReal)>,
    /// σ_i non-decreasing in the section size up to the working tolerance.
    pub monotone: bool,
}

/// σ_i for growing sections of `spec`, keeping its row/column aspect ratio.
pub fn section_stabilization(
    ctx: &PrecisionContext,
    spec: &OperatorSpec,
    sizes: &[usize],
    i: usize,
    exec: Execution,
) -> Result<Stabilization> {
    if i < 1 || sizes.iter().any(|&n| n < i) {
        return Err(Error::InvalidArgument(format!("index {i} exceeds a section size")));
    }
    let aspect = spec.rows as f64 / spec.cols as f64;
    let mut points = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let rows = ((n as f64) * aspect).round().max(1.0) as usize;
        let report = spectrum(ctx, &spec.resized(rows, n), exec)?;
        points.push((n, report.sigmas[i - 1].clone()));
    }
    let tol = ctx.tolerance(24);
    let monotone = points.windows(2).all(|w| {
        let drop = Float::with_val(ctx.bits(), &w[0].1 - &w[1].1);
        drop <= Float::with_val(ctx.bits(), &tol * &w[0].1)
    });
    Ok(Stabilization { index: i, points, monotone })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{assemble_integration, hilbert_segment};
    use crate::precision::cubic_tail;

    fn ctx() -> PrecisionContext {
        PrecisionContext::default()
    }

    #[test]
    fn report_serialization() {
        let c = ctx();
        let mut r = svd(&hilbert_segment(&c, 3), Execution::default());
        r.spec = Some(OperatorSpec::integration(3));
        assert!(r.reliable());
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("index,sigma\n1,1.40831"));
        assert_eq!(text.lines().count(), 4);
        let j = r.to_json();
        assert_eq!(j["sigmas"].as_array().unwrap().len(), 3);
        assert_eq!(j["precision_bits"], 256);
    }

    #[test]
    fn integration_small_section_values() {
        let c = ctx();
        let r = svd(&assemble_integration(&c, 60).unwrap(), Execution::default());
        for i in 1..=10 {
            let exact = 2.0 / ((2 * i - 1) as f64 * std::f64::consts::PI);
            assert!((r.sigmas[i - 1].to_f64() / exact - 1.0).abs() < 1e-6, "i={i}");
        }
    }

    #[test]
    fn projection_defect_vanishes_below_cutoff() {
        let c = ctx();
        for n in 2..8 {
            for i in 0..n {
                assert!(projection_defect(&c, i, n) < c.tolerance(16));
            }
            assert!(projection_defect(&c, n, n) > 0.0);
        }
    }

    #[test]
    fn hs_tail_bounds() {
        let c = ctx();
        for n in [2usize, 5, 11] {
            let t = hs_tail(&c, n, 2000, Execution::default()).unwrap();
            // −ψ⁽²⁾(n)/4 = cubic_tail(n)/2
            let bound = cubic_tail(&c, n as i64).unwrap() / 2u32;
            assert!(t.upper() <= bound, "n={n}");
            assert!(t.value > 0.0);
        }
    }

    #[test]
    fn full_hs_norm() {
        // n = 1 removes only the mean of A* e_i = (1 − s^i)/i
        let c = ctx();
        let t = hs_tail(&c, 1, 4000, Execution::default()).unwrap();
        let mut direct = 0.0f64;
        for i in 1..=200_000u64 {
            let i = i as f64;
            let full = (1.0 - 2.0 / (i + 1.0) + 1.0 / (2.0 * i + 1.0)) / (i * i);
            let mean = 1.0 / (i + 1.0);
            direct += full - mean * mean;
        }
        assert!((t.value.to_f64() - direct).abs() < 2e-6);
    }

    #[test]
    fn pointwise_examples() {
        let b = tail_to_pointwise(1.0, 1.0).unwrap();
        assert!((b.coefficient() - 2.0 * 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(b.exponent, 1.5);
        let b = tail_to_pointwise(1.0, 0.5).unwrap();
        assert!((b.coefficient() - 2.0).abs() < 1e-14);
        assert_eq!(b.exponent, 1.0);
        assert!(tail_to_pointwise(0.0, 1.0).is_err());
        assert!(tail_to_pointwise(1.0, -1.0).is_err());
        assert_eq!(b.bound(1), None);
    }

    #[test]
    fn pointwise_cover_of_exact_sequence() {
        // s_i = i^{-3/2}: Σ_{i>n} i^{-3} ≤ 1/(2n²), so C = 1/2, κ = 1
        for n in 1..200u64 {
            let tail: f64 = (n + 1..200_000).map(|i| (i as f64).powi(-3)).sum();
            assert!(tail <= 0.5 / (n * n) as f64);
        }
        let b = tail_to_pointwise(0.5, 1.0).unwrap();
        assert!((b.coefficient() - 2.0).abs() < 1e-14);
        for i in 2..2000usize {
            assert!((i as f64).powf(-1.5) <= b.bound(i).unwrap());
        }
    }

    #[test]
    fn decay_fits() {
        let inv: Vec<f64> = (1..=50).map(|i| 1.0 / i as f64).collect();
        let f = fit_decay_f64(&inv, 1, 50).unwrap();
        assert!((f.exponent + 1.0).abs() < 1e-12 && f.residual < 1e-12);
        assert!(!f.not_power_law);

        let pi = std::f64::consts::PI;
        let j: Vec<f64> = (1..=100).map(|i| 2.0 / ((2 * i - 1) as f64 * pi)).collect();
        let f = fit_decay_f64(&j, 10, 100).unwrap();
        assert!(f.exponent > -1.05 && f.exponent < -0.95);

        let e: Vec<f64> = (1..=40).map(|i| (-(i as f64)).exp()).collect();
        let f = fit_decay_f64(&e, 5, 40).unwrap();
        assert!(f.not_power_law && f.residual > 0.5);

        assert!(fit_decay_f64(&inv, 1, 4).is_err());
        let mut bad = inv.clone();
        bad[2] = 0.0;
        assert!(fit_decay_f64(&bad, 1, 10).is_err());
        assert_eq!(default_fit_window(100), (1, 80));
    }

    #[test]
    fn stabilization_of_integration() {
        let c = ctx();
        let s = section_stabilization(&c, &OperatorSpec::integration(10), &[10, 20, 40], 1, Execution::default())
            .unwrap();
        assert!(s.monotone);
        let last = s.points.last().unwrap().1.to_f64();
        assert!((last - 2.0 / std::f64::consts::PI).abs() < 1e-3);
        assert!(s.points[0].1 <= s.points[1].1);
    }
}

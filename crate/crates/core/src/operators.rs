//! Finite sections of the integration, Hausdorff moment, multiplication and
//! embedding operators, their compositions, and Hilbert-matrix segments.

use std::fmt;

use rug::ops::Pow;
use rug::{Assign, Float, Integer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::legendre::{gauss_rule, monomial_moments_row, LegendreBasis, QuadratureRule};
use crate::matrix::{compose_with, Basis, DenseMatrix};
use crate::precision::{BigReal, PrecisionContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Family {
    /// (Jx)(s) = ∫_0^s x(t) dt.
    Integration,
    /// z ↦ (∫ t^{i−1} z(t) dt)_{i≥1}.
    Hausdorff,
    /// Multiplication by t^θ.
    Multiplication { theta: f64 },
    /// Diagonal model with σ_i ≍ i^{−k} standing in for the H^k embedding.
    EmbeddingModel { k: u32 },
    Composite {
        outer: Box<OperatorSpec>,
        inner: Box<OperatorSpec>,
    },
}

/// Symbolic operator section: family plus truncation sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub family: Family,
    pub rows: usize,
    pub cols: usize,
}

impl OperatorSpec {
    pub fn integration(n: usize) -> Self {
        Self::integration_rect(n, n)
    }

    pub fn integration_rect(rows: usize, cols: usize) -> Self {
        Self {
            family: Family::Integration,
            rows,
            cols,
        }
    }

    pub fn hausdorff(rows: usize, cols: usize) -> Self {
        Self {
            family: Family::Hausdorff,
            rows,
            cols,
        }
    }

    pub fn multiplication(theta: f64, n: usize) -> Self {
        Self {
            family: Family::Multiplication { theta },
            rows: n,
            cols: n,
        }
    }

    pub fn embedding(k: u32, n: usize) -> Self {
        Self {
            family: Family::EmbeddingModel { k },
            rows: n,
            cols: n,
        }
    }

    pub fn composite(outer: OperatorSpec, inner: OperatorSpec) -> Result<Self> {
        let spec = Self {
            rows: outer.rows,
            cols: inner.cols,
            family: Family::Composite {
                outer: Box::new(outer),
                inner: Box::new(inner),
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// B⁽ᴴ⁾∘J with `rows` moments and `cols` Legendre coefficients. The inner
    /// integration section keeps one extra row so the product is exact.
    pub fn hausdorff_integration(rows: usize, cols: usize) -> Self {
        Self::composite(
            Self::hausdorff(rows, cols + 1),
            Self::integration_rect(cols + 1, cols),
        )
        .expect("dimensions chain by construction")
    }

    pub fn multiplication_integration(theta: f64, n: usize) -> Self {
        Self::composite(Self::multiplication(theta, n), Self::integration(n))
            .expect("dimensions chain by construction")
    }

    /// B⁽ᴴ⁾∘E⁽ᵏ⁾ model with `rows` moments.
    pub fn hausdorff_embedding(k: u32, rows: usize, cols: usize) -> Self {
        Self::composite(Self::hausdorff(rows, cols), Self::embedding(k, cols))
            .expect("dimensions chain by construction")
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 1 || self.cols < 1 {
            return Err(Error::InvalidArgument(format!(
                "section sizes must be >= 1, got {}x{}",
                self.rows, self.cols
            )));
        }
        match &self.family {
            Family::Multiplication { theta } if !(theta.is_finite() && *theta > 0.0) => Err(
                Error::InvalidArgument(format!("exponent θ must be positive, got {theta}")),
            ),
            Family::EmbeddingModel { k } if *k < 1 => {
                Err(Error::InvalidArgument("embedding order k must be >= 1".into()))
            }
            Family::EmbeddingModel { .. } | Family::Multiplication { .. }
                if self.rows != self.cols =>
            {
                Err(Error::Dimension(format!(
                    "{self} must be square, got {}x{}",
                    self.rows, self.cols
                )))
            }
            Family::Composite { outer, inner } => {
                outer.validate()?;
                inner.validate()?;
                if inner.rows != outer.cols {
                    return Err(Error::Dimension(format!(
                        "inner section has {} rows but outer expects {}",
                        inner.rows, outer.cols
                    )));
                }
                if self.rows != outer.rows || self.cols != inner.cols {
                    return Err(Error::Dimension("composite size does not match its factors".into()));
                }
                if outer.col_basis() != inner.row_basis() {
                    return Err(Error::Basis {
                        outer: outer.col_basis(),
                        inner: inner.row_basis(),
                    });
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn row_basis(&self) -> Basis {
        match &self.family {
            Family::Hausdorff => Basis::Moment,
            Family::Composite { outer, .. } => outer.row_basis(),
            _ => Basis::Legendre,
        }
    }

    pub fn col_basis(&self) -> Basis {
        match &self.family {
            Family::Composite { inner, .. } => inner.col_basis(),
            _ => Basis::Legendre,
        }
    }

    /// Same operator with a different section size; composites keep the
    /// exact-chaining convention of [`OperatorSpec::hausdorff_integration`].
    pub fn resized(&self, rows: usize, cols: usize) -> Self {
        match &self.family {
            Family::Composite { outer, inner } => match (&outer.family, &inner.family) {
                (Family::Hausdorff, Family::Integration) => Self::hausdorff_integration(rows, cols),
                (Family::Multiplication { theta }, Family::Integration) => {
                    Self::multiplication_integration(*theta, cols)
                }
                (Family::Hausdorff, Family::EmbeddingModel { k }) => {
                    Self::hausdorff_embedding(*k, rows, cols)
                }
                _ => {
                    let mid = outer.cols.max(cols);
                    Self::composite(outer.resized(rows, mid), inner.resized(mid, cols))
                        .unwrap_or_else(|_| self.clone())
                }
            },
            Family::Multiplication { .. } | Family::EmbeddingModel { .. } => Self {
                family: self.family.clone(),
                rows: cols,
                cols,
            },
            _ => Self {
                family: self.family.clone(),
                rows,
                cols,
            },
        }
    }
}

impl fmt::Display for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::Integration => write!(f, "J"),
            Family::Hausdorff => write!(f, "B_H"),
            Family::Multiplication { theta } => write!(f, "B_M(theta={theta})"),
            Family::EmbeddingModel { k } => write!(f, "E({k})"),
            Family::Composite { outer, inner } => write!(f, "{outer}∘{inner}"),
        }
    }
}

/// H_n with entries 1/(i+j−1).
pub fn hilbert_segment(ctx: &PrecisionContext, n: usize) -> DenseMatrix {
    DenseMatrix::from_fn(ctx, n, n, Basis::Moment, Basis::Moment, Execution::Sequential, |i, j| {
        ctx.ratio(1, (i + j + 1) as i64)
    })
}

/// Exact integer entries of H_n⁻¹:
/// (−1)^{i+j}(i+j−1)·C(n+i−1, n−j)·C(n+j−1, n−i)·C(i+j−2, i−1)².
pub fn hilbert_inverse_exact(n: usize) -> Vec<Vec<Integer>> {
    let binom = |a: usize, b: usize| Integer::from(a).binomial(b as u32);
    (1..=n)
        .map(|i| {
            (1..=n)
                .map(|j| {
                    let c = binom(i + j - 2, i - 1);
                    let mut v = Integer::from(i + j - 1);
                    v *= binom(n + i - 1, n - j);
                    v *= binom(n + j - 1, n - i);
                    v *= &c;
                    v *= &c;
                    if (i + j) % 2 == 1 {
                        v = -v;
                    }
                    v
                })
                .collect()
        })
        .collect()
}

pub fn hilbert_inverse(ctx: &PrecisionContext, n: usize) -> DenseMatrix {
    let exact = hilbert_inverse_exact(n);
    let rows = exact
        .iter()
        .map(|r| r.iter().map(|z| ctx.integer(z)).collect())
        .collect();
    DenseMatrix::from_rows(ctx, rows, Basis::Moment, Basis::Moment).expect("square")
}

/// Section of B⁽ᴴ⁾: M_{ij} = ∫ t^{i−1} L_j(t) dt = ⟨t^{i−1}, L_j⟩ (1-based).
/// Zero whenever i < j.
pub fn assemble_hausdorff(ctx: &PrecisionContext, rows: usize, cols: usize) -> DenseMatrix {
    assemble_hausdorff_with(ctx, rows, cols, Execution::default())
}

pub fn assemble_hausdorff_with(
    ctx: &PrecisionContext,
    rows: usize,
    cols: usize,
    exec: Execution,
) -> DenseMatrix {
    let data = exec.map_range(rows, |i| monomial_moments_row(ctx, i, cols));
    DenseMatrix::from_rows(ctx, data, Basis::Moment, Basis::Legendre).expect("uniform rows")
}

/// Galerkin section of A = B⁽ᴴ⁾∘J:
/// A_{i1} = 1/(i+1) and A_{ij} = −⟨s^i, L_j⟩/i for j ≥ 2.
pub fn assemble_bh_j(ctx: &PrecisionContext, rows: usize, cols: usize) -> DenseMatrix {
    assemble_bh_j_with(ctx, rows, cols, Execution::default())
}

pub fn assemble_bh_j_with(
    ctx: &PrecisionContext,
    rows: usize,
    cols: usize,
    exec: Execution,
) -> DenseMatrix {
    let data = exec.map_range(rows, |r| {
        let i = r + 1;
        let mut row = monomial_moments_row(ctx, i, cols);
        row[0] = ctx.ratio(1, (i + 1) as i64);
        for v in row.iter_mut().skip(1) {
            *v /= i as u64;
            v.neg_assign();
        }
        row
    });
    DenseMatrix::from_rows(ctx, data, Basis::Moment, Basis::Legendre).expect("uniform rows")
}

trait NegAssign {
    fn neg_assign(&mut self);
}

impl NegAssign for Float {
    fn neg_assign(&mut self) {
        rug::ops::NegAssign::neg_assign(self);
    }
}

/// (J L_j)(t) for j = 1..=n from the Legendre values L_1..L_{n+1} at t:
/// J L_1 = t and, for j ≥ 2,
/// J L_j = (L_{j+1}/√(2j+1) − L_{j−1}/√(2j−3)) / (2√(2j−1)).
fn integrated_legendre(ctx: &PrecisionContext, n: usize, t: &BigReal, l: &[BigReal]) -> Vec<BigReal> {
    let mut out = Vec::with_capacity(n);
    out.push(ctx.convert(t));
    for j in 2..=n {
        let up = Float::with_val(ctx.bits(), &l[j] / &ctx.sqrt_int((2 * j + 1) as i64));
        let down = Float::with_val(ctx.bits(), &l[j - 2] / &ctx.sqrt_int((2 * j - 3) as i64));
        let v = (up - down) / (ctx.sqrt_int((2 * j - 1) as i64) * 2u32);
        out.push(v);
    }
    out
}

fn default_rule_size(max_index: usize) -> usize {
    2 * max_index + 8
}

/// Square Galerkin section ⟨J L_j, L_i⟩, i, j ≤ n.
pub fn assemble_integration(ctx: &PrecisionContext, n: usize) -> Result<DenseMatrix> {
    assemble_integration_rect(ctx, n, n)
}

/// Rectangular Galerkin section ⟨J L_j, L_i⟩ by Gauss quadrature that is
/// exact for the polynomial integrand. Only the band |i − j| ≤ 1 is nonzero.
pub fn assemble_integration_rect(ctx: &PrecisionContext, rows: usize, cols: usize) -> Result<DenseMatrix> {
    assemble_integration_with(ctx, rows, cols, Execution::default())
}

pub fn assemble_integration_with(
    ctx: &PrecisionContext,
    rows: usize,
    cols: usize,
    exec: Execution,
) -> Result<DenseMatrix> {
    let top = rows.max(cols + 1);
    let rule = gauss_rule(ctx, default_rule_size(top))?;
    let basis = LegendreBasis::new(*ctx, top);
    let values = basis.tabulate(&rule, exec);
    let antiderivs: Vec<Vec<BigReal>> = exec.map_range(rule.len(), |k| {
        integrated_legendre(ctx, cols, &rule.nodes[k], &values[k])
    });
    Ok(galerkin(ctx, &rule, &values, &antiderivs, rows, cols, exec, |_| None))
}

// Σ_k w_k g(t_k) f_j(t_k) L_i(t_k) for tabulated f_j and L_i.
#[allow(clippy::too_many_arguments)]
fn galerkin<G>(
    ctx: &PrecisionContext,
    rule: &QuadratureRule,
    legendre: &[Vec<BigReal>],
    images: &[Vec<BigReal>],
    rows: usize,
    cols: usize,
    exec: Execution,
    weight: G,
) -> DenseMatrix
where
    G: Fn(usize) -> Option<BigReal> + Sync,
{
    let prec = ctx.bits();
    let weighted: Vec<BigReal> = (0..rule.len())
        .map(|k| match weight(k) {
            Some(g) => Float::with_val(prec, &rule.weights[k] * &g),
            None => rule.weights[k].clone(),
        })
        .collect();
    let data = exec.map_range(rows, |i| {
        let mut tmp = Float::new(prec);
        (0..cols)
            .map(|j| {
                let mut acc = Float::new(prec);
                for k in 0..rule.len() {
                    tmp.assign(&weighted[k] * &images[k][j]);
                    tmp *= &legendre[k][i];
                    acc += &tmp;
                }
                acc
            })
            .collect::<Vec<_>>()
    });
    DenseMatrix::from_rows(ctx, data, Basis::Legendre, Basis::Legendre).expect("uniform rows")
}

fn power(ctx: &PrecisionContext, t: &BigReal, theta: &BigReal) -> BigReal {
    if t.is_zero() {
        return ctx.zero();
    }
    Float::with_val(ctx.bits(), t.pow(theta))
}

/// Galerkin section ⟨t^θ L_j, L_i⟩ with an m-point rule.
pub fn assemble_multiplication(
    ctx: &PrecisionContext,
    theta: f64,
    n: usize,
    m: usize,
) -> Result<DenseMatrix> {
    check_theta(theta)?;
    let rule = gauss_rule(ctx, m)?;
    let exec = Execution::default();
    let values = LegendreBasis::new(*ctx, n).tabulate(&rule, exec);
    let th = ctx.real(theta);
    Ok(galerkin(ctx, &rule, &values, &values, n, n, exec, |k| {
        Some(power(ctx, &rule.nodes[k], &th))
    }))
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "exponent θ must be positive, got {theta}"
        )));
    }
    Ok(())
}

/// A quadrature-assembled section together with its self-check.
#[derive(Debug, Clone)]
pub struct QuadratureAssembly {
    pub matrix: DenseMatrix,
    /// Largest entry change when the rule size is doubled.
    pub max_change: BigReal,
    pub converged: bool,
}

/// Galerkin section ⟨B⁽ᴹ⁾(J L_j), L_i⟩ = ∫ s^θ (J L_j)(s) L_i(s) ds on an
/// m-point rule, compared against a 2m-point rule; `converged` is false
/// when the entries moved by more than `tol`.
pub fn assemble_mult_j(
    ctx: &PrecisionContext,
    theta: f64,
    n: usize,
    m: usize,
    tol: f64,
) -> Result<QuadratureAssembly> {
    check_theta(theta)?;
    let build = |m: usize| -> Result<DenseMatrix> {
        let rule = gauss_rule(ctx, m)?;
        let exec = Execution::default();
        let values = LegendreBasis::new(*ctx, n + 1).tabulate(&rule, exec);
        let images: Vec<Vec<BigReal>> = exec.map_range(rule.len(), |k| {
            integrated_legendre(ctx, n, &rule.nodes[k], &values[k])
        });
        let th = ctx.real(theta);
        Ok(galerkin(ctx, &rule, &values, &images, n, n, exec, |k| {
            Some(power(ctx, &rule.nodes[k], &th))
        }))
    };
    let matrix = build(m)?;
    let finer = build(2 * m)?;
    let max_change = matrix.max_abs_diff(&finer)?;
    let converged = max_change <= tol;
    Ok(QuadratureAssembly {
        matrix,
        max_change,
        converged,
    })
}

/// Diagonal model d_i = (1 + (πi)^{2k})^{−1/2}, so that d_i·i^k → π^{−k}.
pub fn embedding_diagonal(ctx: &PrecisionContext, k: u32, n: usize) -> Result<DenseMatrix> {
    if k < 1 {
        return Err(Error::InvalidArgument("embedding order k must be >= 1".into()));
    }
    let pi = ctx.pi();
    let diag = (1..=n)
        .map(|i| {
            let pik = Float::with_val(ctx.bits(), &pi * i as u64).pow(2 * k);
            (pik + 1u32).recip_sqrt()
        })
        .collect();
    Ok(DenseMatrix::diagonal(ctx, diag, Basis::Legendre))
}

/// Default rule size for quadrature-assembled multiplication sections.
pub fn default_mult_rule(n: usize) -> usize {
    default_rule_size(n + 1)
}

/// Build the matrix of any valid spec.
pub fn assemble(ctx: &PrecisionContext, spec: &OperatorSpec) -> Result<DenseMatrix> {
    spec.validate()?;
    let (rows, cols) = (spec.rows, spec.cols);
    match &spec.family {
        Family::Integration => assemble_integration_rect(ctx, rows, cols),
        Family::Hausdorff => Ok(assemble_hausdorff(ctx, rows, cols)),
        Family::Multiplication { theta } => {
            assemble_multiplication(ctx, *theta, cols, default_mult_rule(cols))
        }
        Family::EmbeddingModel { k } => embedding_diagonal(ctx, *k, cols),
        Family::Composite { outer, inner } => match (&outer.family, &inner.family) {
            (Family::Hausdorff, Family::Integration) => Ok(assemble_bh_j(ctx, rows, cols)),
            (Family::Multiplication { theta }, Family::Integration) if rows == cols => {
                Ok(assemble_mult_j(ctx, *theta, cols, default_mult_rule(cols), f64::INFINITY)?.matrix)
            }
            _ => {
                let a = assemble(ctx, outer)?;
                let b = assemble(ctx, inner)?;
                compose_with(&a, &b, Execution::default())
            }
        },
    }
}

//! Jacobi methods at arbitrary precision.
//!
//! [`jacobi_svd`] is one-sided (Hestenes) Jacobi with a column-pivoted
//! Householder QR preconditioner for tall inputs. [`jacobi_eigenvalues`] is
//! the classical two-sided method for symmetric, possibly indefinite,
//! matrices. Both process a round-robin schedule of disjoint pivot pairs, so
//! the rotations of one round can run in parallel; the schedule does not
//! depend on the thread count and results are deterministic.

use std::mem;

use rug::{Assign, Float};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::{Basis, DenseMatrix};
use crate::precision::{BigReal, PrecisionContext};

pub const DEFAULT_MAX_SWEEPS: usize = 80;

#[derive(Debug, Clone, Copy)]
pub struct SvdOptions {
    pub exec: Execution,
    /// Accumulate right singular vectors.
    pub vectors: bool,
    pub max_sweeps: usize,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            exec: Execution::default(),
            vectors: false,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Svd {
    /// Non-increasing, length min(rows, cols).
    pub sigmas: Vec<BigReal>,
    /// Right singular vectors as columns, ordered like `sigmas`.
    pub v: Option<DenseMatrix>,
    pub sweeps: usize,
    pub converged: bool,
    /// max |⟨a, b⟩| / (‖a‖‖b‖) over the pairs of the last sweep.
    pub orthogonality_residual: BigReal,
}

/// Round-robin (circle method) schedule: n − 1 rounds (n even) of disjoint
/// pairs covering every pair once. Odd n gets a bye.
pub fn round_robin(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n < 2 {
        return Vec::new();
    }
    let size = n + n % 2;
    let mut ring: Vec<usize> = (0..size).collect();
    let mut rounds = Vec::with_capacity(size - 1);
    for _ in 0..size - 1 {
        let round = (0..size / 2)
            .map(|i| (ring[i], ring[size - 1 - i]))
            .filter(|&(p, q)| p < n && q < n)
            .map(|(p, q)| (p.min(q), p.max(q)))
            .collect();
        rounds.push(round);
        ring[1..].rotate_right(1);
    }
    rounds
}

fn dot(prec: u32, a: &[Float], b: &[Float]) -> Float {
    let mut acc = Float::new(prec);
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

// (a, b) ← (c·a − s·b, s·a + c·b)
fn rotate(a: &mut [Float], b: &mut [Float], c: &Float, s: &Float) {
    let prec = c.prec();
    let mut t1 = Float::new(prec);
    let mut t2 = Float::new(prec);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        t1.assign(c * &*x);
        t1 -= s * &*y;
        t2.assign(s * &*x);
        t2 += c * &*y;
        mem::swap(x, &mut t1);
        mem::swap(y, &mut t2);
    }
}

// tangent of the angle annihilating the off-diagonal entry for a 2×2
// symmetric problem with diagonal (app, aqq) and off-diagonal apq
fn jacobi_rotation(app: &Float, aqq: &Float, apq: &Float) -> (Float, Float, Float) {
    let prec = app.prec();
    let zeta = Float::with_val(prec, aqq - app) / Float::with_val(prec, apq * 2u32);
    let root = Float::with_val(prec, zeta.square_ref()) + 1u32;
    let mut t = Float::with_val(prec, zeta.abs_ref()) + root.sqrt();
    t.recip_mut();
    if zeta.is_sign_negative() {
        t = -t;
    }
    let c = (Float::with_val(prec, t.square_ref()) + 1u32).recip_sqrt();
    let s = Float::with_val(prec, &c * &t);
    (c, s, t)
}

struct PairWork {
    p: usize,
    q: usize,
    a: Vec<Float>,
    b: Vec<Float>,
    va: Vec<Float>,
    vb: Vec<Float>,
    alpha: Float,
    beta: Float,
    ratio: Float,
    rotated: bool,
}

/// One-sided Jacobi on a set of columns; rotations optionally mirrored on
/// `v`. Columns with squared norm at most `negligible` are left alone.
/// Returns (sweeps, converged, residual).
fn hestenes(
    cols: &mut [Vec<Float>],
    mut v: Option<&mut Vec<Vec<Float>>>,
    tol: &Float,
    negligible: &Float,
    max_sweeps: usize,
    exec: Execution,
) -> (usize, bool, Float) {
    let n = cols.len();
    let prec = tol.prec();
    let schedule = round_robin(n);
    let mut residual = Float::new(prec);
    if schedule.is_empty() {
        return (0, true, residual);
    }
    for sweep in 1..=max_sweeps {
        residual = Float::new(prec);
        let mut any = false;
        // squared norms are refreshed every sweep and updated in between
        let mut norms: Vec<Float> = exec.map(cols, |c| dot(prec, c, c));
        for round in &schedule {
            let mut work: Vec<PairWork> = round
                .iter()
                .map(|&(p, q)| PairWork {
                    p,
                    q,
                    a: mem::take(&mut cols[p]),
                    b: mem::take(&mut cols[q]),
                    va: v.as_mut().map(|v| mem::take(&mut v[p])).unwrap_or_default(),
                    vb: v.as_mut().map(|v| mem::take(&mut v[q])).unwrap_or_default(),
                    alpha: norms[p].clone(),
                    beta: norms[q].clone(),
                    ratio: Float::new(prec),
                    rotated: false,
                })
                .collect();
            exec.for_each_mut(&mut work, |w| {
                if w.alpha <= *negligible || w.beta <= *negligible {
                    return;
                }
                let gamma = dot(prec, &w.a, &w.b);
                let scale = Float::with_val(prec, &w.alpha * &w.beta).sqrt();
                w.ratio = Float::with_val(prec, gamma.abs_ref()) / &scale;
                if w.ratio <= *tol {
                    return;
                }
                let (c, s, t) = jacobi_rotation(&w.alpha, &w.beta, &gamma);
                rotate(&mut w.a, &mut w.b, &c, &s);
                let shift = Float::with_val(prec, &t * &gamma);
                w.alpha -= &shift;
                w.beta += &shift;
                if !w.va.is_empty() {
                    rotate(&mut w.va, &mut w.vb, &c, &s);
                }
                w.rotated = true;
            });
            for w in work {
                cols[w.p] = w.a;
                cols[w.q] = w.b;
                norms[w.p] = w.alpha;
                norms[w.q] = w.beta;
                if let Some(v) = v.as_mut() {
                    v[w.p] = w.va;
                    v[w.q] = w.vb;
                }
                if w.ratio > residual {
                    residual = w.ratio;
                }
                any |= w.rotated;
            }
        }
        if !any {
            return (sweep, true, residual);
        }
    }
    (max_sweeps, false, residual)
}

/// Householder QR with column pivoting, in place on `cols` (each of length
/// m ≥ n). Returns R as columns truncated to length n, and the permutation
/// (`perm[k]` is the original index of column k).
fn pivoted_qr(mut cols: Vec<Vec<Float>>, exec: Execution) -> (Vec<Vec<Float>>, Vec<usize>) {
    let n = cols.len();
    let m = cols.first().map_or(0, Vec::len);
    let prec = cols.first().and_then(|c| c.first()).map_or(64, Float::prec);
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n.min(m) {
        let norms: Vec<Float> = exec.map(&cols[k..], |c| dot(prec, &c[k..], &c[k..]));
        let mut best = 0;
        for (i, v) in norms.iter().enumerate() {
            if *v > norms[best] {
                best = i;
            }
        }
        cols.swap(k, k + best);
        perm.swap(k, k + best);
        let norm2 = &norms[best];
        if norm2.is_zero() {
            break;
        }
        let mut alpha = Float::with_val(prec, norm2.sqrt_ref());
        if !cols[k][k].is_sign_negative() {
            alpha = -alpha;
        }
        let mut v: Vec<Float> = cols[k][k..].to_vec();
        v[0] -= &alpha;
        let vnorm2 = dot(prec, &v, &v);
        if vnorm2.is_zero() {
            continue;
        }
        let scale = Float::with_val(prec, 2u32) / vnorm2;
        let (head, tail) = cols.split_at_mut(k + 1);
        exec.for_each_mut(tail, |c| {
            let mut tau = dot(prec, &v, &c[k..]);
            tau *= &scale;
            for (x, vi) in c[k..].iter_mut().zip(&v) {
                *x -= &tau * vi;
            }
        });
        let pivot = &mut head[k];
        pivot[k] = alpha;
        for x in pivot[k + 1..].iter_mut() {
            x.assign(0);
        }
    }
    for c in cols.iter_mut() {
        c.truncate(n);
    }
    (cols, perm)
}

fn norm(prec: u32, c: &[Float]) -> Float {
    dot(prec, c, c).sqrt()
}

/// Singular values (and optionally right singular vectors) of `m`.
pub fn jacobi_svd(m: &DenseMatrix, opts: &SvdOptions) -> Svd {
    let ctx = *m.context();
    let prec = ctx.bits();
    let (rows, cols_n) = (m.rows(), m.cols());
    let tol = ctx.tolerance(8);
    let k = rows.min(cols_n);

    let (mut work, perm, precondition) = if rows >= cols_n && cols_n > 1 {
        let (r, perm) = pivoted_qr(m.columns(), opts.exec);
        (r, perm, true)
    } else {
        (m.columns(), (0..cols_n).collect(), false)
    };

    // without vectors the transposed factor converges faster and has the
    // same singular values
    let mut v_acc: Option<Vec<Vec<Float>>> = None;
    if precondition && !opts.vectors {
        work = transpose_cols(&work);
    } else if opts.vectors {
        v_acc = Some(
            (0..cols_n)
                .map(|j| {
                    (0..cols_n)
                        .map(|i| Float::with_val(prec, (i == j) as u32))
                        .collect()
                })
                .collect(),
        );
    }

    // a wide matrix has cols − rows columns that rotate down to rounding
    // noise; those never become mutually orthogonal and are dropped
    let negligible = if precondition {
        Float::new(prec)
    } else {
        let mut fro = Float::new(prec);
        for c in &work {
            fro += dot(prec, c, c);
        }
        fro * Float::with_val(prec, tol.square_ref())
    };
    let (sweeps, converged, residual) = hestenes(
        &mut work,
        v_acc.as_mut(),
        &tol,
        &negligible,
        opts.max_sweeps,
        opts.exec,
    );

    let norms: Vec<Float> = opts.exec.map(&work, |c| norm(prec, c));
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap_or(std::cmp::Ordering::Equal));
    let sigmas: Vec<BigReal> = order.iter().take(k).map(|&i| norms[i].clone()).collect();

    let v = v_acc.map(|vc| {
        let mut vm = DenseMatrix::zeros(&ctx, cols_n, k, m.col_basis, Basis::Coordinate);
        for (out, &src) in order.iter().take(k).enumerate() {
            for (i, x) in vc[src].iter().enumerate() {
                vm.set(perm[i], out, x.clone());
            }
        }
        vm
    });

    Svd {
        sigmas,
        v,
        sweeps,
        converged,
        orthogonality_residual: residual,
    }
}

fn transpose_cols(cols: &[Vec<Float>]) -> Vec<Vec<Float>> {
    let n = cols.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| cols.iter().map(|c| c[i].clone()).collect())
        .collect()
}

/// Convenience wrapper returning only the singular values.
pub fn singular_values(m: &DenseMatrix, exec: Execution) -> Vec<BigReal> {
    jacobi_svd(
        m,
        &SvdOptions {
            exec,
            ..SvdOptions::default()
        },
    )
    .sigmas
}

#[derive(Debug, Clone)]
pub struct Eigen {
    /// Non-increasing.
    pub values: Vec<BigReal>,
    pub sweeps: usize,
}

struct RowPair {
    p: usize,
    q: usize,
    rp: Vec<Float>,
    rq: Vec<Float>,
    c: Float,
    s: Float,
}

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi.
pub fn jacobi_eigenvalues(s: &DenseMatrix, exec: Execution, max_sweeps: usize) -> Result<Eigen> {
    let n = s.rows();
    if n != s.cols() {
        return Err(Error::Dimension(format!("eigenvalues need a square matrix, got {}x{}", n, s.cols())));
    }
    let ctx: PrecisionContext = *s.context();
    let prec = ctx.bits();
    let mut a: Vec<Vec<Float>> = (0..n).map(|i| s.row(i).to_vec()).collect();
    let mut fro = Float::new(prec);
    for row in &a {
        fro += dot(prec, row, row);
    }
    let fro = fro.sqrt();
    let threshold = Float::with_val(prec, &fro * &ctx.tolerance(8));
    let schedule = round_robin(n);

    let mut sweeps = 0;
    let mut converged = schedule.is_empty() || fro.is_zero();
    while !converged {
        if sweeps == max_sweeps {
            return Err(Error::NonConvergence {
                solver: "symmetric Jacobi",
                iterations: sweeps,
            });
        }
        sweeps += 1;
        let mut any = false;
        for round in &schedule {
            let rotations: Vec<(usize, usize, Float, Float)> = round
                .iter()
                .filter_map(|&(p, q)| {
                    let apq = &a[p][q];
                    if Float::with_val(prec, apq.abs_ref()) <= threshold {
                        return None;
                    }
                    let (c, s, _) = jacobi_rotation(&a[p][p], &a[q][q], apq);
                    Some((p, q, c, s))
                })
                .collect();
            if rotations.is_empty() {
                continue;
            }
            any = true;
            // A ← A·J on every row
            exec.for_each_mut(&mut a, |row| {
                let mut t1 = Float::new(prec);
                let mut t2 = Float::new(prec);
                for (p, q, c, s) in &rotations {
                    t1.assign(c * &row[*p]);
                    t1 -= s * &row[*q];
                    t2.assign(s * &row[*p]);
                    t2 += c * &row[*q];
                    mem::swap(&mut row[*p], &mut t1);
                    mem::swap(&mut row[*q], &mut t2);
                }
            });
            // A ← Jᵀ·A on the pivot rows
            let mut pairs: Vec<RowPair> = rotations
                .into_iter()
                .map(|(p, q, c, s)| RowPair {
                    p,
                    q,
                    rp: mem::take(&mut a[p]),
                    rq: mem::take(&mut a[q]),
                    c,
                    s,
                })
                .collect();
            exec.for_each_mut(&mut pairs, |w| rotate(&mut w.rp, &mut w.rq, &w.c, &w.s));
            for w in pairs {
                a[w.p] = w.rp;
                a[w.q] = w.rq;
            }
        }
        converged = !any;
    }
    let mut values: Vec<BigReal> = (0..n).map(|i| a[i][i].clone()).collect();
    values.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    Ok(Eigen { values, sweeps })
}

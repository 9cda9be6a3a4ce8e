use momentlab::kernels::{nystrom_eigenvalues, KernelTag};
use momentlab::operators::assemble_bh_j;
use momentlab::spectral::svd;
use momentlab::{Execution, PrecisionContext};
use rug::Float;

fn hs_norm_squared(c: &PrecisionContext) -> Float {
    Float::with_val(c.bits(), c.int(4) * Float::with_val(c.bits(), rug::float::Constant::Log2)) - 2u32
}

#[test]
fn nystrom_trace_is_hilbert_schmidt_norm() {
    let c = PrecisionContext::new(128).unwrap();
    let eig = nystrom_eigenvalues(&c, KernelTag::HausdorffJ, 64, Execution::default()).unwrap();
    let trace = eig.iter().fold(c.zero(), |acc, e| acc + e);
    let gap = (trace - hs_norm_squared(&c)).abs().to_f64();
    assert!(gap < 1e-6, "trace gap {gap:e}");
}

#[test]
fn galerkin_section_below_hilbert_schmidt_norm() {
    let c = PrecisionContext::new(128).unwrap();
    let sigmas = svd(&assemble_bh_j(&c, 90, 30), Execution::default()).sigmas;
    let sum = sigmas.iter().fold(c.zero(), |acc, s| acc + Float::with_val(128, s * s));
    let total = hs_norm_squared(&c);
    assert!(sum < total);
    assert!((total - sum).to_f64() < 2e-2);
}

#[test]
fn galerkin_and_nystrom_leading_eigenvalue() {
    let c = PrecisionContext::new(128).unwrap();
    let eig = nystrom_eigenvalues(&c, KernelTag::HausdorffJ, 64, Execution::default()).unwrap();
    let sigmas = svd(&assemble_bh_j(&c, 300, 30), Execution::default()).sigmas;
    let g = sigmas[0].to_f64().powi(2);
    let n = eig[0].to_f64();
    assert!(((g - n) / n).abs() < 1e-2, "galerkin {g} vs nystrom {n}");
}

//! Seeded random instance generators for the two experiment families:
//! nonnegative quadratic programs with a prescribed condition number, and
//! the log-barrier approximation of a linear program.
//!
//! Generators are pure functions of their spec: the same spec yields a
//! bit-identical problem.

use crate::error::{Error, Result};
use crate::linalg::{self, BlockPartition, DenseMatrix};
use crate::problem::{
    shift_strong_convexity, BlockKind, BlockTerm, ExtendedProblem, Problem, SeparableTerm,
    SmoothTerm, YTerm,
};
use crate::rng::{seeded_rng, Rng};
use serde::{Deserialize, Serialize};

/// Spec for the QP family: Hessian Q = H D H^T with singular values spread
/// over [1, L], constraints A = [B, I] normalized to unit spectral norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSpec {
    pub n: usize,
    pub p: usize,
    #[serde(rename = "L")]
    pub cond: f64,
    pub blocks: usize,
    pub seed: u64,
}

/// Spec for the log-barrier LP family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogBarrierLpSpec {
    pub p: usize,
    pub n: usize,
    #[serde(rename = "u")]
    pub upper: f64,
    pub seed: u64,
}

fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize) -> DenseMatrix {
    let entries = (0..rows * cols).map(|_| rng.normal()).collect();
    DenseMatrix::new(rows, cols, entries).expect("finite gaussian entries")
}

/// Orthogonal factor of the Householder QR of `g`, with columns flipped so
/// the implicit R has positive diagonal (Haar-distributed when `g` is
/// standard Gaussian).
fn qr_orthogonal_sign_fixed(g: &DenseMatrix) -> DenseMatrix {
    let n = g.rows();
    debug_assert_eq!(n, g.cols());
    let mut r = g.clone();
    // Householder vectors, one per column, each with its squared norm.
    let mut reflectors: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n);
    for k in 0..n {
        let mut v: Vec<f64> = (k..n).map(|i| r.get(i, k)).collect();
        let xnorm = linalg::norm(&v);
        let alpha = -v[0].signum() * xnorm;
        v[0] -= alpha;
        let vns = linalg::norm_sq(&v);
        if vns > 0.0 {
            for c in k..n {
                let mut d = 0.0;
                for (idx, i) in (k..n).enumerate() {
                    d += v[idx] * r.get(i, c);
                }
                let f = 2.0 * d / vns;
                for (idx, i) in (k..n).enumerate() {
                    r.set(i, c, r.get(i, c) - f * v[idx]);
                }
            }
        }
        reflectors.push((v, vns));
    }
    // Q = H_0 H_1 ... H_{n-1}: apply the reflections to I in reverse order.
    let mut q = DenseMatrix::identity(n);
    for k in (0..n).rev() {
        let (v, vns) = &reflectors[k];
        if *vns == 0.0 {
            continue;
        }
        for c in 0..n {
            let mut d = 0.0;
            for (idx, i) in (k..n).enumerate() {
                d += v[idx] * q.get(i, c);
            }
            let f = 2.0 * d / vns;
            for (idx, i) in (k..n).enumerate() {
                q.set(i, c, q.get(i, c) - f * v[idx]);
            }
        }
    }
    for k in 0..n {
        if r.get(k, k) < 0.0 {
            for i in 0..n {
                q.set(i, k, -q.get(i, k));
            }
        }
    }
    q
}

/// Generate the QP instance. The returned problem is already split so the
/// separable term carries the unit strong convexity: g_i = nonneg indicator
/// + (1/2)||.||^2 and f keeps the PSD remainder Q - I.
pub fn gen_qp(spec: &QpSpec) -> Result<Problem> {
    if spec.n < 2 {
        return Err(Error::InvalidArgument("QP needs n >= 2".into()));
    }
    if spec.p == 0 {
        return Err(Error::InvalidArgument("QP needs p >= 1".into()));
    }
    if spec.p >= spec.n {
        return Err(Error::InvalidArgument(
            "QP needs p < n (identity block must fit into A)".into(),
        ));
    }
    if !(spec.cond >= 1.0) {
        return Err(Error::InvalidArgument("condition number L must be >= 1".into()));
    }
    let partition = BlockPartition::even(spec.n, spec.blocks)?;
    let (n, p) = (spec.n, spec.p);
    let mut rng = seeded_rng(spec.seed);

    // Draw order is fixed: G, c, b, B.
    let g = gaussian_matrix(&mut rng, n, n);
    let c: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let b: Vec<f64> = (0..p).map(|_| rng.uniform()).collect();
    let b_left = gaussian_matrix(&mut rng, p, n - p);

    let q = if spec.cond == 1.0 {
        // D = I, so H D H^T is exactly the identity.
        DenseMatrix::identity(n)
    } else {
        let h = qr_orthogonal_sign_fixed(&g);
        // H D: scale column i by d_i = 1 + i (L-1)/(n-1)
        let mut hd = h.clone();
        for i in 0..n {
            let d = 1.0 + (i as f64) * (spec.cond - 1.0) / ((n - 1) as f64);
            for row in 0..n {
                hd.set(row, i, hd.get(row, i) * d);
            }
        }
        let mut q = hd.matmul(&h.transpose())?;
        // symmetrize away the matmul roundoff
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (q.get(i, j) + q.get(j, i));
                q.set(i, j, s);
                q.set(j, i, s);
            }
        }
        q
    };

    // A = [B, I], then normalized to unit spectral norm.
    let mut a = DenseMatrix::zeros(p, n);
    for r in 0..p {
        for cidx in 0..n - p {
            a.set(r, cidx, b_left.get(r, cidx));
        }
        a.set(r, n - p + r, 1.0);
    }
    let nrm = linalg::spectral_norm(&a, 1e-10, 10_000)?;
    a.scale(1.0 / nrm);

    let smooth = SmoothTerm::quadratic_with_lipschitz(q, c, spec.cond)?;
    let separable = SeparableTerm::uniform(spec.blocks, BlockTerm::nonneg());
    let raw = Problem::new(partition, smooth, separable, a, b)?;
    shift_strong_convexity(&raw, 1.0)
}

/// Generate the log-barrier LP instance together with its domain-interior
/// initial point (x1, y1). x is a single block; A is left unnormalized.
pub fn gen_logbarrier_lp(spec: &LogBarrierLpSpec) -> Result<(ExtendedProblem, Vec<f64>, Vec<f64>)> {
    if spec.p == 0 || spec.n == 0 {
        return Err(Error::InvalidArgument("LP needs n >= 1 and p >= 1".into()));
    }
    if !(spec.upper > 0.0) {
        return Err(Error::InvalidArgument("upper bound u must be > 0".into()));
    }
    let (n, p, u) = (spec.n, spec.p, spec.upper);
    let mut rng = seeded_rng(spec.seed);

    // Draw order is fixed: A, c, b.
    let a = gaussian_matrix(&mut rng, p, n);
    let c: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let b: Vec<f64> = (0..p).map(|_| rng.uniform_range(0.5, 1.5)).collect();

    let partition = BlockPartition::new(vec![n])?;
    let smooth = SmoothTerm::Linear { c };
    let separable = SeparableTerm::new(vec![BlockTerm::new(
        BlockKind::NegLog {
            weight: 1.0,
            upper: Some(u),
        },
        0.0,
    )?]);
    let base = Problem::new(partition, smooth, separable, a, b)?;

    // Curvature lower bound of -log on (0, u]; a heuristic modulus for
    // schedule construction, overridable by the caller.
    let nu = 1.0 / (u * u);
    let lip_h = nu;
    let ep = ExtendedProblem::new(base, YTerm::NegLog { weight: 1.0 }, DenseMatrix::identity(p), nu, lip_h)?;

    let x1 = vec![u / 2.0; n];
    let ax1 = ep.base.a.matvec(&x1)?;
    let y1: Vec<f64> = ep
        .base
        .b
        .iter()
        .zip(&ax1)
        .map(|(bi, ai)| (bi - ai).max(0.1))
        .collect();
    Ok((ep, x1, y1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::objective;

    fn desk_spec() -> QpSpec {
        QpSpec {
            n: 24,
            p: 4,
            cond: 10.0,
            blocks: 4,
            seed: 1,
        }
    }

    fn quadratic_parts(p: &Problem) -> (&DenseMatrix, &Vec<f64>) {
        match &p.smooth {
            SmoothTerm::Quadratic { q, c, .. } => (q, c),
            other => panic!("expected quadratic, got {other:?}"),
        }
    }

    #[test]
    fn qp_extreme_singular_values() {
        let prob = gen_qp(&desk_spec()).unwrap();
        // f holds Q - I after the split; reconstruct Q's extremes.
        let (q_shift, _) = quadratic_parts(&prob);
        let n = q_shift.rows();
        let mut q = q_shift.clone();
        for i in 0..n {
            q.set(i, i, q.get(i, i) + 1.0);
        }
        let lmax = linalg::spectral_norm(&q, 1e-12, 100_000).unwrap();
        assert!((lmax - 10.0).abs() <= 1e-6, "sigma_max {lmax}");
        // lambda_min(Q) = L - ||L I - Q|| for a symmetric Q with spectrum in [1, L]
        let mut flipped = q.clone();
        flipped.scale(-1.0);
        for i in 0..n {
            flipped.set(i, i, flipped.get(i, i) + 10.0);
        }
        let spread = linalg::spectral_norm(&flipped, 1e-12, 100_000).unwrap();
        let lmin = 10.0 - spread;
        assert!((lmin - 1.0).abs() <= 1e-6, "sigma_min {lmin}");
    }

    #[test]
    fn qp_unit_constraint_norm() {
        let prob = gen_qp(&desk_spec()).unwrap();
        let nrm = linalg::spectral_norm(&prob.a, 1e-12, 100_000).unwrap();
        assert!((nrm - 1.0).abs() <= 1e-6, "||A|| = {nrm}");
    }

    #[test]
    fn qp_degenerate_condition_number_gives_identity() {
        let spec = QpSpec {
            n: 4,
            p: 1,
            cond: 1.0,
            blocks: 2,
            seed: 3,
        };
        let prob = gen_qp(&spec).unwrap();
        // after the unit split the quadratic part is exactly zero
        let (q_shift, _) = quadratic_parts(&prob);
        assert!(q_shift.is_zero());
        assert_eq!(prob.smooth.lipschitz_full(), 0.0);
        assert_eq!(prob.mu, 1.0);
    }

    #[test]
    fn qp_strong_convexity_certificate() {
        let prob = gen_qp(&desk_spec()).unwrap();
        let mut rng = seeded_rng(42);
        let n = prob.dim();
        for _ in 0..100 {
            let x: Vec<f64> = (0..n).map(|_| rng.uniform_range(0.01, 2.0)).collect();
            let z: Vec<f64> = (0..n).map(|_| rng.uniform_range(0.01, 2.0)).collect();
            let fx = objective(&prob, &x).unwrap();
            let fz = objective(&prob, &z).unwrap();
            // interior subgradient of F at x: grad f(x) + x (quad part of g)
            let mut sub = prob.smooth.gradient(&x).unwrap();
            for (s, xi) in sub.iter_mut().zip(&x) {
                *s += xi;
            }
            let dz: Vec<f64> = z.iter().zip(&x).map(|(a, b)| a - b).collect();
            let rhs = fx + linalg::dot(&sub, &dz) + 0.5 * linalg::norm_sq(&dz);
            assert!(fz >= rhs - 1e-8, "{fz} < {rhs}");
        }
    }

    #[test]
    fn qp_feasible_by_construction() {
        // A contains a (scaled) identity block, so x = (0, sigma * b) >= 0 is
        // feasible when b >= 0.
        let prob = gen_qp(&desk_spec()).unwrap();
        let n = prob.dim();
        let p = prob.num_constraints();
        // recover the normalization factor from the identity block entries
        let scale = prob.a.get(0, n - p);
        let mut x = vec![0.0; n];
        for r in 0..p {
            x[n - p + r] = prob.b[r] / scale;
        }
        assert!(x.iter().all(|&v| v >= 0.0));
        let r = linalg::residual(&prob.a, &x, &prob.b).unwrap();
        assert!(linalg::norm(&r) <= 1e-10);
    }

    #[test]
    fn qp_generation_is_deterministic() {
        let a = gen_qp(&desk_spec()).unwrap();
        let b = gen_qp(&desk_spec()).unwrap();
        assert_eq!(a, b);
        let mut other = desk_spec();
        other.seed = 2;
        assert_ne!(gen_qp(&other).unwrap(), a);
    }

    #[test]
    fn qp_rejects_bad_specs() {
        let mut s = desk_spec();
        s.p = s.n;
        assert!(gen_qp(&s).is_err());
        let mut s = desk_spec();
        s.blocks = 5; // does not divide 24... 24 % 5 != 0
        assert!(gen_qp(&s).is_err());
    }

    #[test]
    fn lp_identity_coupling_and_gradient() {
        let spec = LogBarrierLpSpec {
            p: 6,
            n: 20,
            upper: 10.0,
            seed: 1,
        };
        let (ep, x1, y1) = gen_logbarrier_lp(&spec).unwrap();
        assert_eq!(ep.b_mat, DenseMatrix::identity(6));
        assert_eq!(
            linalg::spectral_norm(&ep.b_mat, 1e-12, 100).unwrap(),
            1.0
        );

        // grad of -sum log y at ones is -ones; matches finite differences
        let ones = vec![1.0; 6];
        let grad = ep.h.gradient(&ones).unwrap();
        let eps = 1e-7;
        for j in 0..6 {
            assert_eq!(grad[j], -1.0);
            let mut up = ones.clone();
            up[j] += eps;
            let mut dn = ones.clone();
            dn[j] -= eps;
            let fd = (ep.h.value(&up).unwrap() - ep.h.value(&dn).unwrap()) / (2.0 * eps);
            assert!((fd - grad[j]).abs() <= 1e-6, "fd {fd} vs {}", grad[j]);
        }

        // initial point: x1 = (u/2) ones, y1 = max(b - A x1, 0.1)
        assert!(x1.iter().all(|&v| v == 5.0));
        let ax1 = ep.base.a.matvec(&x1).unwrap();
        for ((yi, bi), ai) in y1.iter().zip(&ep.base.b).zip(&ax1) {
            assert_eq!(*yi, (bi - ai).max(0.1));
            assert!(*yi >= 0.1);
        }
        // objective is finite at the start
        assert!(ep.objective(&x1, &y1).unwrap().is_finite());
    }

    #[test]
    fn lp_heuristic_moduli_recorded() {
        let spec = LogBarrierLpSpec {
            p: 3,
            n: 8,
            upper: 10.0,
            seed: 9,
        };
        let (ep, _, _) = gen_logbarrier_lp(&spec).unwrap();
        assert_eq!(ep.nu, 0.01);
        assert_eq!(ep.lip_h, 0.01);
        assert_eq!(ep.base.mu, 0.0); // -log has no uniform modulus
    }

    #[test]
    fn orthogonal_factor_is_orthogonal() {
        let mut rng = seeded_rng(8);
        let g = gaussian_matrix(&mut rng, 12, 12);
        let q = qr_orthogonal_sign_fixed(&g);
        let qtq = q.transpose().matmul(&q).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (qtq.get(i, j) - expect).abs() <= 1e-12,
                    "Q^T Q [{i}][{j}] = {}",
                    qtq.get(i, j)
                );
            }
        }
    }
}

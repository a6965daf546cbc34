//! Ground-truth solutions for verification: an exact active-set enumeration
//! for tiny nonnegative QPs, and a certified long solver run for instances
//! beyond enumeration reach.

use crate::error::{Error, Result};
use crate::linalg::{self, lu_solve, DenseMatrix};
use crate::problem::{
    extended_kkt_residual, kkt_residual, objective, AnyProblem, BlockKind, Problem, SmoothTerm,
};
use crate::schedule::{inflated_spectral_norm, ScheduleParams};
use crate::solver::{run_with_state, AlgoKind, RunOptions, RunReference};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    ActiveSetEnum,
    LongRun,
}

/// A certified optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub x_star: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub y_star: Option<Vec<f64>>,
    pub lam_star: Vec<f64>,
    #[serde(rename = "F_star")]
    pub f_star: f64,
    pub method: OracleMethod,
    /// (stationarity, feasibility) at the certified point.
    pub kkt: (f64, f64),
}

impl OracleSolution {
    pub fn as_run_reference(&self) -> RunReference {
        RunReference {
            x_star: self.x_star.clone(),
            y_star: self.y_star.clone(),
            f_star: self.f_star,
            kkt: self.kkt,
        }
    }
}

/// Acceptance slack inside the enumeration (primal/dual sign checks).
const ENUM_SLACK: f64 = 1e-10;
/// Certification tolerance of the enumeration oracle.
const ENUM_CERT_TOL: f64 = 1e-8;

/// Exact solver for `min 1/2 x^T Q x + c^T x  s.t.  A x = b, x >= 0` by
/// enumeration of all 2^n active sets of the bound constraints. The problem's
/// separable term must be the nonneg indicator, optionally with quadratic
/// shifts (absorbed into the Hessian).
pub fn solve_qp_bruteforce(p: &Problem, max_n: usize) -> Result<OracleSolution> {
    let n = p.dim();
    if max_n > 20 {
        return Err(Error::InvalidArgument(
            "active-set enumeration capped at n <= 20".into(),
        ));
    }
    if n > max_n {
        return Err(Error::InvalidArgument(format!(
            "dimension {n} too large for enumeration (max {max_n})"
        )));
    }
    // Effective Hessian and linear term with the separable quadratic shifts
    // folded in.
    let (mut q, c) = match &p.smooth {
        SmoothTerm::Quadratic { q, c, .. } => (q.clone(), c.clone()),
        SmoothTerm::Linear { c } => (DenseMatrix::zeros(n, n), c.clone()),
        SmoothTerm::Zero => (DenseMatrix::zeros(n, n), vec![0.0; n]),
    };
    for i in 0..p.partition.num_blocks() {
        let term = p.separable.term(i);
        if !matches!(term.kind, BlockKind::Nonneg) {
            return Err(Error::UnsupportedTerm(
                "enumeration oracle needs nonneg-indicator blocks".into(),
            ));
        }
        for j in p.partition.range(i) {
            q.set(j, j, q.get(j, j) + term.quad);
        }
    }
    let m = p.num_constraints();
    let a = &p.a;

    struct Candidate {
        x: Vec<f64>,
        lam: Vec<f64>,
        obj: f64,
    }
    let mut accepted: Vec<Candidate> = Vec::new();

    for mask in 0u32..(1u32 << n) {
        // bit set = coordinate clamped to zero (active bound)
        let inactive: Vec<usize> = (0..n).filter(|j| mask & (1 << j) == 0).collect();
        let ni = inactive.len();
        if ni + m == 0 {
            continue;
        }
        // KKT system on (x_I, lam):
        //   [ Q_II  -A_I^T ] [x_I]   [-c_I]
        //   [ A_I      0   ] [lam] = [ b  ]
        let dim = ni + m;
        let mut sys = DenseMatrix::zeros(dim, dim);
        let mut rhs = vec![0.0; dim];
        for (row, &jr) in inactive.iter().enumerate() {
            for (col, &jc) in inactive.iter().enumerate() {
                sys.set(row, col, q.get(jr, jc));
            }
            for l in 0..m {
                sys.set(row, ni + l, -a.get(l, jr));
            }
            rhs[row] = -c[jr];
        }
        for l in 0..m {
            for (col, &jc) in inactive.iter().enumerate() {
                sys.set(ni + l, col, a.get(l, jc));
            }
            rhs[ni + l] = p.b[l];
        }
        // singular candidate systems are skipped, not errors
        let Some(sol) = lu_solve(&sys, &rhs)? else {
            continue;
        };
        let mut x = vec![0.0; n];
        for (col, &jc) in inactive.iter().enumerate() {
            x[jc] = sol[col];
        }
        let lam = sol[ni..].to_vec();

        // primal feasibility
        if x.iter().any(|&v| v < -ENUM_SLACK) {
            continue;
        }
        let res = linalg::residual(a, &x, &p.b)?;
        if linalg::norm(&res) > 1e-8 {
            continue;
        }
        // dual feasibility: bound multipliers z = Qx + c - A^T lam must be
        // nonnegative on the active set (zero elsewhere by construction)
        let qx = q.matvec(&x)?;
        let atl = a.tr_matvec(&lam)?;
        let mut dual_ok = true;
        for j in 0..n {
            if mask & (1 << j) != 0 {
                let z = qx[j] + c[j] - atl[j];
                if z < -ENUM_SLACK {
                    dual_ok = false;
                    break;
                }
            }
        }
        if !dual_ok {
            continue;
        }
        let obj = 0.5 * linalg::dot(&x, &qx) + linalg::dot(&c, &x);
        accepted.push(Candidate { x, lam, obj });
    }

    let best_idx = accepted
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.obj.partial_cmp(&b.obj).expect("finite objectives"))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Infeasible("no active set admits a KKT point".into()))?;
    let best_obj = accepted[best_idx].obj;

    // Every accepted candidate is a KKT point of a convex problem, hence
    // optimal; disagreement beyond roundoff means the verification is broken,
    // and distinct minimizers contradict strong convexity.
    for cand in &accepted {
        let tol = 1e-9 * (1.0 + best_obj.abs());
        if cand.obj > best_obj + tol {
            return Err(Error::InvalidArgument(
                "enumeration accepted a non-optimal KKT candidate".into(),
            ));
        }
        let dist: f64 = cand
            .x
            .iter()
            .zip(&accepted[best_idx].x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist > 1e-6 {
            return Err(Error::InvalidArgument(
                "two distinct verified optima: strong convexity violated".into(),
            ));
        }
    }

    let best = &accepted[best_idx];
    let kkt = kkt_residual(p, &best.x, &best.lam, 1.0)?;
    if kkt.0 > ENUM_CERT_TOL || kkt.1 > ENUM_CERT_TOL {
        return Err(Error::CertificationFailed {
            stationarity: kkt.0,
            feasibility: kkt.1,
        });
    }
    Ok(OracleSolution {
        x_star: best.x.clone(),
        y_star: None,
        lam_star: best.lam.clone(),
        f_star: best.obj,
        method: OracleMethod::ActiveSetEnum,
        kkt,
    })
}

/// Configuration of the long-run reference.
#[derive(Debug, Clone, PartialEq)]
pub struct LongRunConfig {
    pub budget: usize,
    pub seed: u64,
    pub x0: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
    /// Penalty parameter for the linear variant.
    pub beta: f64,
    /// Modulus override for schedule construction (needed when the problem's
    /// recorded mu is zero, e.g. log-barrier terms).
    pub mu_hint: Option<f64>,
    pub nu_hint: Option<f64>,
    pub use_lp_preset: bool,
    /// Early-exit tolerance of the underlying run.
    pub stop_tol: f64,
    /// The returned solution is refused unless both KKT components are at or
    /// below this.
    pub certify_tol: f64,
}

impl LongRunConfig {
    pub fn new(budget: usize) -> Self {
        LongRunConfig {
            budget,
            seed: 0,
            x0: None,
            y0: None,
            beta: 0.1,
            mu_hint: None,
            nu_hint: None,
            use_lp_preset: true,
            stop_tol: 1e-11,
            certify_tol: 1e-9,
        }
    }
}

/// High-accuracy reference: run the adaptive solver (base form) or the
/// linear variant (extended form) with theta = 1 for up to `budget`
/// iterations and certify the final KKT residuals; refuses to certify when
/// the tolerance is not met.
pub fn long_run_reference(prob: &AnyProblem, cfg: &LongRunConfig) -> Result<OracleSolution> {
    match prob {
        AnyProblem::Base(p) => {
            let mu = cfg.mu_hint.unwrap_or(p.mu);
            if !(mu > 0.0) {
                return Err(Error::InvalidArgument(
                    "long-run reference needs mu > 0 (supply mu_hint)".into(),
                ));
            }
            let norm_a = inflated_spectral_norm(&p.a)?;
            let lip = p.smooth.lipschitz_full();
            let sp = ScheduleParams::rpdc_adaptive(1.0, 1.0, mu, lip, norm_a, cfg.budget.max(2))?;
            let mut opts = RunOptions::new(cfg.budget.max(2), cfg.seed);
            opts.stop_tol = Some(cfg.stop_tol);
            opts.x0 = cfg.x0.clone();
            let (_, state) = run_with_state(prob, AlgoKind::RpdcAdaptive, &sp, &opts, None)?;
            let kkt = kkt_residual(p, &state.x, &state.lam, 1.0)?;
            if kkt.0 > cfg.certify_tol || kkt.1 > cfg.certify_tol {
                return Err(Error::CertificationFailed {
                    stationarity: kkt.0,
                    feasibility: kkt.1,
                });
            }
            Ok(OracleSolution {
                f_star: objective(p, &state.x)?,
                x_star: state.x,
                y_star: None,
                lam_star: state.lam,
                method: OracleMethod::LongRun,
                kkt,
            })
        }
        AnyProblem::Extended(ep) => {
            let mu = cfg.mu_hint.unwrap_or(ep.base.mu);
            let nu = cfg.nu_hint.unwrap_or(ep.nu);
            if !(mu > 0.0) || !(nu > 0.0) {
                return Err(Error::InvalidArgument(
                    "long-run reference needs mu > 0 and nu > 0 (supply hints)".into(),
                ));
            }
            let norm_a = inflated_spectral_norm(&ep.base.a)?;
            let norm_b = inflated_spectral_norm(&ep.b_mat)?;
            let sp = ScheduleParams::linear_variant(
                1.0,
                cfg.beta,
                mu,
                nu,
                ep.base.smooth.lipschitz_full(),
                ep.base.smooth.lipschitz_full(),
                norm_a,
                norm_b,
            )?;
            let mut opts = RunOptions::new(cfg.budget, cfg.seed);
            opts.stop_tol = Some(cfg.stop_tol);
            opts.linear_preset = cfg.use_lp_preset;
            opts.x0 = cfg.x0.clone();
            opts.y0 = cfg.y0.clone();
            let (_, state) = run_with_state(prob, AlgoKind::LinearVariant, &sp, &opts, None)?;
            let y = state.y.clone().expect("extended state has y");
            let kkt = extended_kkt_residual(ep, &state.x, &y, &state.lam, 1.0)?;
            if kkt.0 > cfg.certify_tol || kkt.1 > cfg.certify_tol {
                return Err(Error::CertificationFailed {
                    stationarity: kkt.0,
                    feasibility: kkt.1,
                });
            }
            Ok(OracleSolution {
                f_star: ep.objective(&state.x, &y)?,
                x_star: state.x,
                y_star: Some(y),
                lam_star: state.lam,
                method: OracleMethod::LongRun,
                kkt,
            })
        }
    }
}

//! Instance construction shared by the commands: generate or load a problem,
//! derive default starts and moduli, and cache certified references beside
//! the traces they serve.

use crate::{CliResult, InstanceArgs};
use pdblock::generate::{gen_logbarrier_lp, gen_qp, LogBarrierLpSpec, QpSpec};
use pdblock::oracle::{long_run_reference, LongRunConfig, OracleSolution};
use pdblock::problem::{AnyProblem, BlockKind, ExtendedProblem, Problem};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::Path;

pub struct BuiltInstance {
    pub prob: AnyProblem,
    pub x0: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
    pub label: String,
    /// Identifies the instance for reference-cache validation.
    pub fingerprint: serde_json::Value,
    /// Default strong-convexity modulus for schedule construction.
    pub mu_default: f64,
    pub nu_default: f64,
    /// Heuristic moduli (not exact constants) are flagged in metadata.
    pub moduli_heuristic: bool,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Default interior starts for a loaded extended problem, reconstructed from
/// its first block's upper bound the same way the generator picks them.
fn extended_starts(ep: &ExtendedProblem) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let upper = match &ep.base.separable.term(0).kind {
        BlockKind::NegLog { upper: Some(u), .. } => *u,
        BlockKind::Box { upper, .. } => *upper,
        other => {
            return Err(format!(
                "cannot derive a default start for extended problems with leading block {other:?}"
            )
            .into());
        }
    };
    let x1 = vec![upper / 2.0; ep.base.dim()];
    let ax1 = ep.base.a.matvec(&x1)?;
    let y1 = ep
        .base
        .b
        .iter()
        .zip(&ax1)
        .map(|(b, a)| (b - a).max(0.1))
        .collect();
    Ok((x1, y1))
}

pub fn build_instance(args: &InstanceArgs, seed: u64) -> CliResult<BuiltInstance> {
    if let Some(path) = &args.problem {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let fingerprint = json!({
            "file": path.display().to_string(),
            "hash": fnv1a(text.as_bytes()),
        });
        if value.get("h").is_some() {
            let ep: ExtendedProblem = serde_json::from_str(&text)?;
            let (x1, y1) = extended_starts(&ep)?;
            let nu = ep.nu;
            Ok(BuiltInstance {
                label: format!("file:{}", path.display()),
                prob: AnyProblem::Extended(ep),
                x0: Some(x1),
                y0: Some(y1),
                fingerprint,
                mu_default: nu,
                nu_default: nu,
                moduli_heuristic: true,
            })
        } else {
            let p: Problem = serde_json::from_str(&text)?;
            let mu = p.mu;
            Ok(BuiltInstance {
                label: format!("file:{}", path.display()),
                prob: AnyProblem::Base(p),
                x0: None,
                y0: None,
                fingerprint,
                mu_default: mu,
                nu_default: 0.0,
                moduli_heuristic: false,
            })
        }
    } else if args.lp {
        let spec = LogBarrierLpSpec {
            p: args.p,
            n: args.n,
            upper: args.u,
            seed,
        };
        let (ep, x1, y1) = gen_logbarrier_lp(&spec)?;
        let nu = ep.nu;
        Ok(BuiltInstance {
            label: format!("lp(p={}, n={}, u={}, seed={seed})", args.p, args.n, args.u),
            fingerprint: serde_json::to_value(&spec)?,
            prob: AnyProblem::Extended(ep),
            x0: Some(x1),
            y0: Some(y1),
            mu_default: nu,
            nu_default: nu,
            moduli_heuristic: true,
        })
    } else {
        // QP is the default family
        let spec = QpSpec {
            n: args.n,
            p: args.p,
            cond: args.cond,
            blocks: args.blocks,
            seed,
        };
        let p = gen_qp(&spec)?;
        let mu = p.mu;
        Ok(BuiltInstance {
            label: format!(
                "qp(n={}, p={}, L={}, blocks={}, seed={seed})",
                args.n, args.p, args.cond, args.blocks
            ),
            fingerprint: serde_json::to_value(&spec)?,
            prob: AnyProblem::Base(p),
            x0: None,
            y0: None,
            mu_default: mu,
            nu_default: 0.0,
            moduli_heuristic: false,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CachedReference {
    fingerprint: serde_json::Value,
    ref_iters: usize,
    solution: OracleSolution,
}

/// Certified reference, loaded from the cache file beside the trace when the
/// fingerprint matches, recomputed and stored otherwise.
pub fn reference_for(
    inst: &BuiltInstance,
    cache_path: &Path,
    ref_iters: usize,
    mu: f64,
    nu: f64,
    beta: f64,
) -> CliResult<OracleSolution> {
    if let Ok(text) = std::fs::read_to_string(cache_path) {
        if let Ok(cached) = serde_json::from_str::<CachedReference>(&text) {
            if cached.fingerprint == inst.fingerprint && cached.ref_iters == ref_iters {
                return Ok(cached.solution);
            }
        }
    }
    let mut cfg = LongRunConfig::new(ref_iters);
    cfg.mu_hint = Some(mu);
    cfg.nu_hint = Some(nu);
    cfg.beta = beta;
    cfg.x0 = inst.x0.clone();
    cfg.y0 = inst.y0.clone();
    let solution = long_run_reference(&inst.prob, &cfg)?;
    let cached = CachedReference {
        fingerprint: inst.fingerprint.clone(),
        ref_iters,
        solution: solution.clone(),
    };
    std::fs::write(cache_path, serde_json::to_string_pretty(&cached)?)?;
    Ok(solution)
}

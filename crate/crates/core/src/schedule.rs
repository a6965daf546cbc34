//! Per-iteration parameter sequences (beta_k, rho_k, eta_k) for each
//! algorithm, produced from the closed-form recipes that make the rate
//! guarantees hold, plus a numerical checker for the parameter conditions
//! those guarantees require.
//!
//! The proximal weight matrices are restricted to scalar multiples of the
//! identity per block: the Jacobian recipe needs `0 < P - beta A^T A <=
//! (mu/2) I`, which a scalar `P = eta_p I` satisfies with `beta =
//! mu / (4 ||A||^2)` and `eta_p = 3 mu / 8` (midpoint of the admissible
//! interval), and scalar weights keep every block prox in closed form.

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, DenseMatrix};
use serde::{Deserialize, Serialize};

/// Multiplicative inflation applied to estimated spectral norms before they
/// enter a schedule, so conditions like `eta >= L_m + beta ||A||^2` survive
/// estimation error.
pub const NORM_INFLATION: f64 = 1.0001;

/// Positivity floor for emitted parameters; degenerate inputs route here
/// with a warning instead of dividing by zero.
pub const PARAM_FLOOR: f64 = 1e-12;

/// Spectral norm estimate inflated for schedule use.
pub fn inflated_spectral_norm(a: &DenseMatrix) -> Result<f64> {
    Ok(spectral_norm(a, 1e-10, 10_000)? * NORM_INFLATION)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    JacobiAccelerated,
    RpdcFixed,
    RpdcAdaptive,
    LinearVariant,
}

/// Inputs a schedule recipe is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub kind: ScheduleKind,
    /// Fraction of blocks updated per iteration, m/M in (0, 1].
    pub theta: f64,
    /// Strong convexity modulus of the separable term.
    pub mu: f64,
    /// Strong convexity modulus of the y-term (linear variant only).
    pub nu: f64,
    /// Lipschitz constant of the full gradient of f.
    pub lip_full: f64,
    /// Uniform Lipschitz constant of partial gradients over m blocks.
    pub lip_partial: f64,
    pub norm_a: f64,
    pub norm_b: f64,
    /// rho >= 1 free parameter of the adaptive recipe (also the constant
    /// rho of fixed recipes where beta_base plays that role).
    pub rho_base: f64,
    pub beta_base: f64,
    /// Total iteration budget; the adaptive recipe's last multiplier step
    /// depends on it.
    pub budget_t: usize,
    /// Derived shift constant of the rate guarantees.
    pub k0: f64,
}

impl ScheduleParams {
    /// Accelerated Jacobian recipe (`beta_k = rho_k = k beta`,
    /// `P^k = k P + L_f I`), with `k0 = 2 L_f / mu`.
    pub fn jacobi(mu: f64, lip_full: f64, norm_a: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::InvalidArgument("jacobi schedule requires mu > 0".into()));
        }
        if !(norm_a > 0.0) {
            return Err(Error::InvalidArgument(
                "jacobi schedule requires ||A|| > 0".into(),
            ));
        }
        Ok(ScheduleParams {
            kind: ScheduleKind::JacobiAccelerated,
            theta: 1.0,
            mu,
            nu: 0.0,
            lip_full,
            lip_partial: lip_full,
            norm_a,
            norm_b: 0.0,
            rho_base: 1.0,
            beta_base: mu / (4.0 * norm_a * norm_a),
            budget_t: 0,
            k0: 2.0 * lip_full / mu,
        })
    }

    /// Fixed-parameter recipe (`rho = theta beta`, `eta = L_m + beta ||A||^2`).
    pub fn rpdc_fixed(theta: f64, beta: f64, lip_partial: f64, norm_a: f64) -> Result<Self> {
        check_theta(theta)?;
        if !(beta > 0.0) {
            return Err(Error::InvalidArgument("beta must be > 0".into()));
        }
        Ok(ScheduleParams {
            kind: ScheduleKind::RpdcFixed,
            theta,
            mu: 0.0,
            nu: 0.0,
            lip_full: lip_partial,
            lip_partial,
            norm_a,
            norm_b: 0.0,
            rho_base: theta * beta,
            beta_base: beta,
            budget_t: 0,
            k0: 0.0,
        })
    }

    /// Adaptive recipe with `k0 = 4/theta + 2 L_m / (theta mu)`; requires the
    /// iteration budget up front because the final multiplier step depends
    /// on it.
    pub fn rpdc_adaptive(
        theta: f64,
        rho_base: f64,
        mu: f64,
        lip_partial: f64,
        norm_a: f64,
        budget_t: usize,
    ) -> Result<Self> {
        check_theta(theta)?;
        if !(mu > 0.0) {
            return Err(Error::InvalidArgument(
                "adaptive schedule requires mu > 0".into(),
            ));
        }
        if !(rho_base >= 1.0) {
            return Err(Error::InvalidArgument("rho_base must be >= 1".into()));
        }
        if budget_t < 2 {
            return Err(Error::InvalidArgument(
                "adaptive schedule requires budget t >= 2".into(),
            ));
        }
        Ok(ScheduleParams {
            kind: ScheduleKind::RpdcAdaptive,
            theta,
            mu,
            nu: 0.0,
            lip_full: lip_partial,
            lip_partial,
            norm_a,
            norm_b: 0.0,
            rho_base,
            beta_base: 0.0,
            budget_t,
            k0: 4.0 / theta + 2.0 * lip_partial / (theta * mu),
        })
    }

    /// Constant-parameter recipe of the linearly convergent y-block variant.
    #[allow(clippy::too_many_arguments)]
    pub fn linear_variant(
        theta: f64,
        beta: f64,
        mu: f64,
        nu: f64,
        lip_full: f64,
        lip_partial: f64,
        norm_a: f64,
        norm_b: f64,
    ) -> Result<Self> {
        check_theta(theta)?;
        if !(beta > 0.0) {
            return Err(Error::InvalidArgument("beta must be > 0".into()));
        }
        if !(mu > 0.0) || !(nu > 0.0) {
            return Err(Error::InvalidArgument(
                "linear variant requires mu > 0 and nu > 0".into(),
            ));
        }
        Ok(ScheduleParams {
            kind: ScheduleKind::LinearVariant,
            theta,
            mu,
            nu,
            lip_full,
            lip_partial,
            norm_a,
            norm_b,
            rho_base: theta * beta,
            beta_base: beta,
            budget_t: 0,
            k0: 0.0,
        })
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "theta must lie in (0, 1], got {theta}"
        )));
    }
    Ok(())
}

/// One iteration's parameter triple; `eta_k` doubles as the scalar proximal
/// weight (P^k = eta_k I).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterParams {
    pub beta_k: f64,
    pub rho_k: f64,
    pub eta_k: f64,
}

fn floored(value: f64, what: &str) -> f64 {
    if value < PARAM_FLOOR {
        log::warn!("schedule parameter {what} = {value} floored to {PARAM_FLOOR}");
        PARAM_FLOOR
    } else {
        value
    }
}

impl IterParams {
    fn new_floored(beta_k: f64, rho_k: f64, eta_k: f64) -> Self {
        IterParams {
            beta_k: floored(beta_k, "beta_k"),
            rho_k: floored(rho_k, "rho_k"),
            eta_k: floored(eta_k, "eta_k"),
        }
    }
}

/// Accelerated Jacobian parameters at iteration k >= 1.
pub fn jacobi_schedule(sp: &ScheduleParams, k: usize) -> Result<IterParams> {
    if sp.kind != ScheduleKind::JacobiAccelerated {
        return Err(Error::InvalidArgument("schedule kind is not jacobi".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("iterations are 1-based".into()));
    }
    if !(sp.mu > 0.0) || !(sp.norm_a > 0.0) {
        return Err(Error::InvalidArgument(
            "jacobi schedule requires mu > 0 and ||A|| > 0".into(),
        ));
    }
    let beta = sp.mu / (4.0 * sp.norm_a * sp.norm_a);
    let eta_p = 3.0 * sp.mu / 8.0;
    let kf = k as f64;
    Ok(IterParams::new_floored(
        kf * beta,
        kf * beta,
        kf * eta_p + sp.lip_full,
    ))
}

/// Constant fixed-recipe parameters (same triple for every k).
pub fn rpdc_fixed_schedule(sp: &ScheduleParams) -> Result<IterParams> {
    if !(sp.beta_base > 0.0) {
        return Err(Error::InvalidArgument("beta must be > 0".into()));
    }
    let beta = sp.beta_base;
    let rho = sp.theta * beta;
    let eta = sp.lip_partial + beta * sp.norm_a * sp.norm_a;
    Ok(IterParams::new_floored(beta, rho, eta))
}

/// Adaptive parameters at iteration 1 <= k <= t. The multiplier step takes
/// its special final value at k = t.
pub fn rpdc_adaptive_schedule(sp: &ScheduleParams, k: usize, t: usize) -> Result<IterParams> {
    if !(sp.mu > 0.0) {
        return Err(Error::InvalidArgument(
            "adaptive schedule requires mu > 0".into(),
        ));
    }
    if k == 0 || k > t {
        return Err(Error::InvalidArgument(format!(
            "iteration k = {k} outside 1..={t}"
        )));
    }
    if t < 2 {
        return Err(Error::InvalidArgument(
            "adaptive schedule requires budget t >= 2".into(),
        ));
    }
    let mut norm_sq = sp.norm_a * sp.norm_a;
    if norm_sq < PARAM_FLOOR {
        log::warn!("||A|| ~ 0 in adaptive schedule; flooring norm^2 at {PARAM_FLOOR}");
        norm_sq = PARAM_FLOOR;
    }
    let theta = sp.theta;
    let rho = sp.rho_base;
    let beta_at = |k: usize| sp.mu * (theta * k as f64 + 2.0 + theta) / (2.0 * rho * norm_sq);
    let beta_k = beta_at(k);
    let rho_k = if k <= t - 1 {
        theta * beta_k / (6.0 - 5.0 * theta)
    } else {
        let rho_prev = theta * beta_at(t - 1) / (6.0 - 5.0 * theta);
        let shifted = (t as f64) + sp.k0 + 1.0;
        shifted * rho_prev / (theta * shifted - 1.0)
    };
    let eta_k = rho * beta_k * norm_sq + sp.lip_partial;
    Ok(IterParams::new_floored(beta_k, rho_k, eta_k))
}

/// Constant parameters of the linearly convergent variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub beta: f64,
    pub rho: f64,
    pub eta_x: f64,
    pub eta_y: f64,
}

/// Strict inequalities of the recipe are realized with this multiplicative
/// margin.
const STRICT_MARGIN: f64 = 1.001;

/// Parameters satisfying the linear-rate conditions: `rho = theta beta`
/// always; at theta = 1, `eta_x = beta ||A||^2 + L_f` and `eta_y` strictly
/// above `(beta + beta^2/mu) ||B||^2`; at theta < 1 the recipe uses
/// `tau_1 = beta/(theta mu)`, `tau_2 = 2 beta (1-theta)/nu`.
pub fn linear_variant_params(sp: &ScheduleParams) -> Result<LinearParams> {
    if !(sp.mu > 0.0) || !(sp.nu > 0.0) {
        return Err(Error::InvalidArgument(
            "linear variant requires mu > 0 and nu > 0".into(),
        ));
    }
    let beta = sp.beta_base;
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument("beta must be > 0".into()));
    }
    let theta = sp.theta;
    let na_sq = sp.norm_a * sp.norm_a;
    let nb_sq = sp.norm_b * sp.norm_b;
    let rho = theta * beta;
    let (eta_x, eta_y) = if theta == 1.0 {
        let eta_x = beta * na_sq + sp.lip_full;
        let eta_y = STRICT_MARGIN * (beta + beta * beta / sp.mu) * nb_sq;
        (eta_x, eta_y)
    } else {
        let tau1 = beta / (theta * sp.mu);
        let tau2 = 2.0 * beta * (1.0 - theta) / sp.nu;
        let eta_x = beta * (1.0 + (1.0 - theta) * tau2) * na_sq + sp.lip_partial;
        let eta_y = STRICT_MARGIN * beta * (1.0 + tau1) * nb_sq;
        (eta_x, eta_y)
    };
    Ok(LinearParams {
        beta,
        rho: floored(rho, "rho"),
        eta_x: floored(eta_x, "eta_x"),
        eta_y: floored(eta_y, "eta_y"),
    })
}

/// The log-barrier LP preset: `rho = theta beta`, `eta_x = beta ||A||^2`,
/// `eta_y = beta (1 + 2.001 beta / (3 mu))`. Assumes a linear smooth term
/// and unit `||B||` (the experiment uses B = I).
pub fn linear_variant_paper_preset(sp: &ScheduleParams) -> Result<LinearParams> {
    if !(sp.mu > 0.0) {
        return Err(Error::InvalidArgument("preset requires mu > 0".into()));
    }
    let beta = sp.beta_base;
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument("beta must be > 0".into()));
    }
    Ok(LinearParams {
        beta,
        rho: floored(sp.theta * beta, "rho"),
        eta_x: floored(beta * sp.norm_a * sp.norm_a, "eta_x"),
        eta_y: floored(beta * (1.0 + 2.001 * beta / (3.0 * sp.mu)), "eta_y"),
    })
}

/// Outcome of evaluating one named parameter condition over its range of k.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub name: String,
    pub pass: bool,
    /// Smallest margin seen (condition holds iff margin >= -tolerance);
    /// absent when the condition's k-range is empty.
    pub worst_margin: Option<f64>,
    pub worst_k: Option<usize>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub kind: ScheduleKind,
    pub budget_t: usize,
    pub entries: Vec<ConditionEntry>,
    pub all_pass: bool,
}

impl ConditionReport {
    pub fn failures(&self) -> Vec<&ConditionEntry> {
        self.entries.iter().filter(|e| !e.pass).collect()
    }
}

struct ConditionAccum {
    name: &'static str,
    worst: Option<(f64, usize, f64)>, // margin, k, tolerance at worst point
    pass: bool,
}

impl ConditionAccum {
    fn new(name: &'static str) -> Self {
        ConditionAccum {
            name,
            worst: None,
            pass: true,
        }
    }

    /// Record one evaluation: condition requires lhs >= rhs.
    fn record(&mut self, k: usize, lhs: f64, rhs: f64) {
        let margin = lhs - rhs;
        let tol = 1e-12 * (1.0 + lhs.abs() + rhs.abs());
        if margin < -tol {
            self.pass = false;
        }
        if self.worst.map_or(true, |(m, _, _)| margin < m) {
            self.worst = Some((margin, k, tol));
        }
    }

    fn into_entry(self) -> ConditionEntry {
        ConditionEntry {
            name: self.name.to_string(),
            pass: self.pass,
            worst_margin: self.worst.map(|(m, _, _)| m),
            worst_k: self.worst.map(|(_, k, _)| k),
            tolerance: self.worst.map_or(0.0, |(_, _, t)| t),
        }
    }
}

/// Numerically evaluate the parameter conditions behind the convergence
/// guarantee of the configured schedule kind, for every applicable k up to
/// the budget t. Matrix orderings are reduced to scalar inequalities at the
/// extreme eigenvalues {0, ||A||^2} (the expressions are affine in the
/// eigenvalue, so endpoint checks are exact).
pub fn verify_conditions(sp: &ScheduleParams, t: usize) -> Result<ConditionReport> {
    let entries = match sp.kind {
        ScheduleKind::RpdcAdaptive => verify_rpdc_adaptive(sp, t)?,
        ScheduleKind::JacobiAccelerated => verify_jacobi(sp, t)?,
        ScheduleKind::RpdcFixed => verify_rpdc_fixed(sp)?,
        ScheduleKind::LinearVariant => verify_linear_variant(sp)?,
    };
    let all_pass = entries.iter().all(|e| e.pass);
    Ok(ConditionReport {
        kind: sp.kind,
        budget_t: t,
        entries,
        all_pass,
    })
}

fn verify_rpdc_adaptive(sp: &ScheduleParams, t: usize) -> Result<Vec<ConditionEntry>> {
    if t < 2 {
        return Err(Error::InvalidArgument(
            "adaptive conditions need t >= 2".into(),
        ));
    }
    let theta = sp.theta;
    let k0 = sp.k0;
    let mu = sp.mu;
    let lm = sp.lip_partial;
    let na_sq = sp.norm_a * sp.norm_a;
    let params: Vec<IterParams> = (1..=t)
        .map(|k| rpdc_adaptive_schedule(sp, k, t))
        .collect::<Result<_>>()?;
    let at = |k: usize| &params[k - 1]; // 1-based

    let mut c1 = ConditionAccum::new("cond1");
    let mut c2 = ConditionAccum::new("cond2");
    let mut c3 = ConditionAccum::new("cond3");
    let mut c4 = ConditionAccum::new("cond4");
    let mut c5 = ConditionAccum::new("cond5");
    let mut c6 = ConditionAccum::new("cond6");
    let mut c7 = ConditionAccum::new("cond7");

    for k in 2..=t {
        let kf = k as f64;
        let (prev, cur) = (at(k - 1), at(k));
        // theta (k + k0 + 1) >= 1
        c1.record(k, theta * (kf + k0 + 1.0), 1.0);
        // (beta_{k-1} - rho_{k-1})(k + k0) >= (1 - theta)(k + k0 + 1) beta_k
        c2.record(
            k,
            (prev.beta_k - prev.rho_k) * (kf + k0),
            (1.0 - theta) * (kf + k0 + 1.0) * cur.beta_k,
        );
        if k <= t - 1 {
            // (theta(k+k0+1)-1)/rho_{k-1} >= (theta(k+k0+2)-1)/rho_k
            c3.record(
                k,
                (theta * (kf + k0 + 1.0) - 1.0) / prev.rho_k,
                (theta * (kf + k0 + 2.0) - 1.0) / cur.rho_k,
            );
        }
        // beta_k (k+k0+1) >= beta_{k-1} (k+k0)
        c5.record(k, cur.beta_k * (kf + k0 + 1.0), prev.beta_k * (kf + k0));
        // (k+k0) eta_{k-1} + mu (theta(k+k0+1) - 1) >= (k+k0+1) eta_k
        c7.record(
            k,
            (kf + k0) * prev.eta_k + mu * (theta * (kf + k0 + 1.0) - 1.0),
            (kf + k0 + 1.0) * cur.eta_k,
        );
    }
    {
        // (theta(t+k0+1)-1)/rho_{t-1} >= (t+k0+1)/rho_t
        let tf = t as f64;
        c4.record(
            t,
            (theta * (tf + k0 + 1.0) - 1.0) / at(t - 1).rho_k,
            (tf + k0 + 1.0) / at(t).rho_k,
        );
    }
    for k in 1..=t {
        let kf = k as f64;
        let cur = at(k);
        // (k+k0+1)(eta_k - L_m) I >= beta_k (k+k0+1) A^T A, at s in {0, ||A||^2}
        for s in [0.0, na_sq] {
            c6.record(
                k,
                (kf + k0 + 1.0) * (cur.eta_k - lm),
                cur.beta_k * (kf + k0 + 1.0) * s,
            );
        }
    }
    Ok(vec![
        c1.into_entry(),
        c2.into_entry(),
        c3.into_entry(),
        c4.into_entry(),
        c5.into_entry(),
        c6.into_entry(),
        c7.into_entry(),
    ])
}

fn verify_jacobi(sp: &ScheduleParams, t: usize) -> Result<Vec<ConditionEntry>> {
    if t < 1 {
        return Err(Error::InvalidArgument("jacobi conditions need t >= 1".into()));
    }
    let k0 = sp.k0;
    let mu = sp.mu;
    let lf = sp.lip_full;
    let na_sq = sp.norm_a * sp.norm_a;
    let params: Vec<IterParams> = (1..=t)
        .map(|k| jacobi_schedule(sp, k))
        .collect::<Result<_>>()?;
    let at = |k: usize| &params[k - 1];

    let mut c1 = ConditionAccum::new("ajadmm-1");
    let mut c2 = ConditionAccum::new("ajadmm-2");
    let mut c3 = ConditionAccum::new("ajadmm-3");

    for k in 1..=t {
        let cur = at(k);
        // 0 < rho_k <= 2 beta_k
        c1.record(k, cur.rho_k, 0.0);
        c1.record(k, 2.0 * cur.beta_k, cur.rho_k);
        // P^k >= beta_k A^T A + L_f I at s in {0, ||A||^2}
        for s in [0.0, na_sq] {
            c1.record(k, cur.eta_k, cur.beta_k * s + lf);
        }
    }
    for k in 2..=t {
        let kf = k as f64;
        let (prev, cur) = (at(k - 1), at(k));
        // (k+k0+1)/rho_k <= (k+k0)/rho_{k-1}
        c2.record(k, (kf + k0) / prev.rho_k, (kf + k0 + 1.0) / cur.rho_k);
        // (k+k0+1)(P^k - beta_k A^T A) <= (k+k0)(P^{k-1} - beta_{k-1} A^T A + mu I)
        for s in [0.0, na_sq] {
            c3.record(
                k,
                (kf + k0) * (prev.eta_k - prev.beta_k * s + mu),
                (kf + k0 + 1.0) * (cur.eta_k - cur.beta_k * s),
            );
        }
    }
    Ok(vec![c1.into_entry(), c2.into_entry(), c3.into_entry()])
}

fn verify_rpdc_fixed(sp: &ScheduleParams) -> Result<Vec<ConditionEntry>> {
    let ip = rpdc_fixed_schedule(sp)?;
    let mut c1 = ConditionAccum::new("naccl-1");
    let mut c2 = ConditionAccum::new("naccl-2");
    // 0 < rho <= theta beta
    c1.record(1, ip.rho_k, 0.0);
    c1.record(1, sp.theta * ip.beta_k, ip.rho_k);
    // eta >= L_m + beta ||A||^2
    c2.record(
        1,
        ip.eta_k,
        sp.lip_partial + ip.beta_k * sp.norm_a * sp.norm_a,
    );
    Ok(vec![c1.into_entry(), c2.into_entry()])
}

fn verify_linear_variant(sp: &ScheduleParams) -> Result<Vec<ConditionEntry>> {
    let lp = linear_variant_params(sp)?;
    let mut c1 = ConditionAccum::new("linear-rho");
    let mut c2 = ConditionAccum::new("linear-eta-x");
    let mut c3 = ConditionAccum::new("linear-eta-y");
    // rho = theta beta (checked both ways)
    c1.record(1, lp.rho, sp.theta * lp.beta);
    c1.record(1, sp.theta * lp.beta, lp.rho);
    let na_sq = sp.norm_a * sp.norm_a;
    let nb_sq = sp.norm_b * sp.norm_b;
    if sp.theta == 1.0 {
        c2.record(1, lp.eta_x, lp.beta * na_sq + sp.lip_full);
        // strict inequality of the recipe
        c3.record(
            1,
            lp.eta_y,
            (lp.beta + lp.beta * lp.beta / sp.mu) * nb_sq + PARAM_FLOOR,
        );
    } else {
        let tau1 = lp.beta / (sp.theta * sp.mu);
        let tau2 = 2.0 * lp.beta * (1.0 - sp.theta) / sp.nu;
        c2.record(
            1,
            lp.eta_x,
            lp.beta * (1.0 + (1.0 - sp.theta) * tau2) * na_sq + sp.lip_partial,
        );
        c3.record(1, lp.eta_y, lp.beta * (1.0 + tau1) * nb_sq + PARAM_FLOOR);
    }
    Ok(vec![c1.into_entry(), c2.into_entry(), c3.into_entry()])
}

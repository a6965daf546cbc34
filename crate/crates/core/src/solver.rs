//! The three algorithm engines: accelerated proximal Jacobian ADMM, the
//! accelerated randomized primal-dual block coordinate update method, and the
//! linearly convergent y-block variant, plus ergodic-average tracking and the
//! run driver that records convergence traces.
//!
//! Block subproblems read only the pre-step state (Jacobian semantics), the
//! residual is maintained incrementally in fixed block-index order and
//! recomputed from scratch every [`RESIDUAL_REFRESH`] iterations, and the
//! full Jacobian step is exactly the randomized step applied to all blocks,
//! bit for bit.

use crate::error::{Error, Result};
use crate::linalg::{self, block_apply};
use crate::problem::{
    extended_kkt_residual, kkt_residual, objective, prox_block, AnyProblem, ExtendedProblem,
    Problem,
};
use crate::rng::{seeded_rng, Rng, RNG_ALGORITHM};
use crate::schedule::{
    jacobi_schedule, linear_variant_paper_preset, linear_variant_params, rpdc_adaptive_schedule,
    rpdc_fixed_schedule, IterParams, LinearParams, ScheduleParams,
};
use serde::{Deserialize, Serialize};

/// Iterations between full residual recomputations (caps incremental drift).
pub const RESIDUAL_REFRESH: usize = 64;

/// Iterations between early-exit KKT checks.
const KKT_CHECK_EVERY: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgoKind {
    Jacobi,
    RpdcFixed,
    RpdcAdaptive,
    LinearVariant,
}

/// Online accumulators for the three weighted ergodic averages. All modes are
/// maintained simultaneously; memory stays O(n).
#[derive(Debug, Clone, PartialEq)]
struct ErgodicTracker {
    theta: f64,
    k0: f64,
    /// sum of (k + k0 + 1) x^k over k = 1..t
    acc_shifted: Vec<f64>,
    den_shifted: f64,
    /// theta * sum of x^k over k = 2..t
    acc_tail: Vec<f64>,
    /// sum of (theta (k + k0 + 1) - 1) x^k over k = 2..t
    acc_mixed: Vec<f64>,
    den_mixed: f64,
}

impl ErgodicTracker {
    fn new(dim: usize, theta: f64, k0: f64) -> Self {
        ErgodicTracker {
            theta,
            k0,
            acc_shifted: vec![0.0; dim],
            den_shifted: 0.0,
            acc_tail: vec![0.0; dim],
            acc_mixed: vec![0.0; dim],
            den_mixed: 0.0,
        }
    }

    /// Fold in the pre-step iterate x^k at the start of iteration k (1-based).
    fn absorb(&mut self, k: usize, x: &[f64]) {
        let w = k as f64 + self.k0 + 1.0;
        for (acc, xi) in self.acc_shifted.iter_mut().zip(x) {
            *acc += w * xi;
        }
        self.den_shifted += w;
        if k >= 2 {
            let wm = self.theta * w - 1.0;
            for ((tail, mixed), xi) in self
                .acc_tail
                .iter_mut()
                .zip(self.acc_mixed.iter_mut())
                .zip(x)
            {
                *tail += self.theta * xi;
                *mixed += wm * xi;
            }
            self.den_mixed += wm;
        }
    }
}

/// Weighted-average flavor, one per convergence theorem that states a bound
/// on an ergodic iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErgodicMode {
    /// Weights (k + k0 + 1) on x^k, k = 1..t (accelerated Jacobian ADMM).
    ShiftedLinear,
    /// (x^{t+1} + theta sum_{k=2..t} x^k) / (1 + theta (t-1)) (fixed recipe).
    TailUniform,
    /// ((t+k0+1) x^{t+1} + sum_{k=2..t} (theta(k+k0+1)-1) x^k) / T (adaptive).
    MixedShifted,
}

/// Mutable state of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub lam: Vec<f64>,
    /// Constraint residual, incrementally maintained.
    pub r: Vec<f64>,
    /// Completed iterations; the state holds the paper's iterate x^{k+1}.
    pub k: usize,
    pub rng: Rng,
    algo: AlgoKind,
    erg: ErgodicTracker,
}

impl SolverState {
    /// Initial state for a base problem: multiplier starts at zero, residual
    /// at A x1 - b.
    pub fn init(
        p: &Problem,
        x1: Vec<f64>,
        algo: AlgoKind,
        theta: f64,
        k0: f64,
        seed: u64,
    ) -> Result<Self> {
        if x1.len() != p.dim() {
            return Err(Error::DimensionMismatch {
                context: "SolverState::init",
                expected: p.dim(),
                got: x1.len(),
            });
        }
        let r = linalg::residual(&p.a, &x1, &p.b)?;
        let erg = ErgodicTracker::new(x1.len(), theta, k0);
        Ok(SolverState {
            lam: vec![0.0; p.num_constraints()],
            r,
            x: x1,
            y: None,
            k: 0,
            rng: seeded_rng(seed),
            algo,
            erg,
        })
    }

    /// Initial state for an extended problem (adds the y block).
    pub fn init_extended(
        ep: &ExtendedProblem,
        x1: Vec<f64>,
        y1: Vec<f64>,
        theta: f64,
        seed: u64,
    ) -> Result<Self> {
        if x1.len() != ep.base.dim() {
            return Err(Error::DimensionMismatch {
                context: "SolverState::init_extended",
                expected: ep.base.dim(),
                got: x1.len(),
            });
        }
        if y1.len() != ep.y_dim() {
            return Err(Error::DimensionMismatch {
                context: "SolverState::init_extended",
                expected: ep.y_dim(),
                got: y1.len(),
            });
        }
        let r = ep.residual(&x1, &y1)?;
        let erg = ErgodicTracker::new(x1.len(), theta, 0.0);
        Ok(SolverState {
            lam: vec![0.0; ep.base.num_constraints()],
            r,
            x: x1,
            y: Some(y1),
            k: 0,
            rng: seeded_rng(seed),
            algo: AlgoKind::LinearVariant,
            erg,
        })
    }

    pub fn algo(&self) -> AlgoKind {
        self.algo
    }
}

fn validate_subset(s: &[usize], blocks: usize) -> Result<()> {
    if s.is_empty() {
        return Err(Error::InvalidArgument(
            "block subset must be nonempty".into(),
        ));
    }
    for win in s.windows(2) {
        if win[1] <= win[0] {
            return Err(Error::InvalidArgument(
                "block subset must be strictly increasing (no duplicates)".into(),
            ));
        }
    }
    if let Some(&last) = s.last() {
        if last >= blocks {
            return Err(Error::IndexOutOfRange {
                index: last,
                len: blocks,
            });
        }
    }
    Ok(())
}

/// One block's subproblem at the pre-step state: the prox-gradient update
/// `prox_{g_i}(eta, x_i - (grad_i f(x) - A_i^T (lam - beta r)) / eta)`.
/// Exposed so callers can verify that block updates commute.
pub fn solve_block_subproblem(
    p: &Problem,
    st: &SolverState,
    i: usize,
    ip: &IterParams,
) -> Result<Vec<f64>> {
    let grad = p.smooth.gradient(&st.x)?;
    let w = shifted_multiplier(&st.lam, &st.r, ip.beta_k);
    let atw = p.a.tr_matvec(&w)?;
    block_update(p, &st.x, &grad, &atw, i, ip.eta_k)
}

fn shifted_multiplier(lam: &[f64], r: &[f64], beta: f64) -> Vec<f64> {
    lam.iter().zip(r).map(|(l, ri)| l - beta * ri).collect()
}

fn block_update(
    p: &Problem,
    x: &[f64],
    grad: &[f64],
    atw: &[f64],
    i: usize,
    eta: f64,
) -> Result<Vec<f64>> {
    let range = p.partition.range(i);
    let v: Vec<f64> = range
        .clone()
        .map(|j| x[j] - (grad[j] - atw[j]) / eta)
        .collect();
    prox_block(&p.separable, i, eta, &v).map_err(|e| match e {
        Error::Domain(msg) => Error::Domain(format!("block {i}: {msg}")),
        other => other,
    })
}

/// Shared x-block update + incremental residual + multiplier step. `s` must
/// be strictly increasing. Reads only the pre-step state.
fn step_blocks(p: &Problem, st: &SolverState, s: &[usize], ip: &IterParams) -> Result<SolverState> {
    validate_subset(s, p.partition.num_blocks())?;
    if st.y.is_some() {
        return Err(Error::InvalidArgument(
            "base-problem step applied to an extended state".into(),
        ));
    }
    let grad = p.smooth.gradient(&st.x)?;
    let w = shifted_multiplier(&st.lam, &st.r, ip.beta_k);
    let atw = p.a.tr_matvec(&w)?;

    let mut next = st.clone();
    next.erg.absorb(st.k + 1, &st.x);
    for &i in s {
        let xi_new = block_update(p, &st.x, &grad, &atw, i, ip.eta_k)?;
        let range = p.partition.range(i);
        let delta: Vec<f64> = xi_new
            .iter()
            .zip(&st.x[range.clone()])
            .map(|(n, o)| n - o)
            .collect();
        let upd = block_apply(&p.a, &p.partition, i, &delta)?;
        for (ri, ui) in next.r.iter_mut().zip(&upd) {
            *ri += ui;
        }
        next.x[range].copy_from_slice(&xi_new);
    }
    for (li, ri) in next.lam.iter_mut().zip(&next.r) {
        *li -= ip.rho_k * ri;
    }
    next.k = st.k + 1;
    Ok(next)
}

/// One accelerated proximal Jacobian ADMM step: every block updated from the
/// pre-step state, then the multiplier.
pub fn jacobi_step(p: &Problem, st: &SolverState, ip: &IterParams) -> Result<SolverState> {
    let all: Vec<usize> = (0..p.partition.num_blocks()).collect();
    step_blocks(p, st, &all, ip)
}

/// One randomized primal-dual block coordinate step on the subset `s`.
pub fn rpdc_step(p: &Problem, st: &SolverState, s: &[usize], ip: &IterParams) -> Result<SolverState> {
    step_blocks(p, st, s, ip)
}

/// Uniform m-subset of {0, .., total-1} by partial Fisher-Yates, returned
/// sorted ascending. Deterministic given the generator state.
pub fn sample_blocks(rng: &mut Rng, total: usize, m: usize) -> Result<Vec<usize>> {
    if m == 0 || m > total {
        return Err(Error::InvalidArgument(format!(
            "subset size m = {m} outside 1..={total}"
        )));
    }
    let mut idx: Vec<usize> = (0..total).collect();
    for j in 0..m {
        let pick = j + rng.below((total - j) as u64) as usize;
        idx.swap(j, pick);
    }
    let mut s = idx[..m].to_vec();
    s.sort_unstable();
    Ok(s)
}

/// Bernoulli draw for the y-update with success probability theta.
pub fn draw_coin(rng: &mut Rng, theta: f64) -> bool {
    rng.uniform() < theta
}

/// One step of the linearly convergent variant: x-blocks in `s`, then the
/// y-block in probability theta (the caller supplies the coin), then the
/// multiplier.
pub fn linear_variant_step(
    ep: &ExtendedProblem,
    st: &SolverState,
    s: &[usize],
    coin: bool,
    lp: &LinearParams,
) -> Result<SolverState> {
    let p = &ep.base;
    validate_subset(s, p.partition.num_blocks())?;
    let y = st
        .y
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("linear variant needs a y block".into()))?;

    let grad = p.smooth.gradient(&st.x)?;
    let w = shifted_multiplier(&st.lam, &st.r, lp.beta);
    let atw = p.a.tr_matvec(&w)?;

    let mut next = st.clone();
    next.erg.absorb(st.k + 1, &st.x);
    for &i in s {
        let xi_new = block_update(p, &st.x, &grad, &atw, i, lp.eta_x)?;
        let range = p.partition.range(i);
        let delta: Vec<f64> = xi_new
            .iter()
            .zip(&st.x[range.clone()])
            .map(|(n, o)| n - o)
            .collect();
        let upd = block_apply(&p.a, &p.partition, i, &delta)?;
        for (ri, ui) in next.r.iter_mut().zip(&upd) {
            *ri += ui;
        }
        next.x[range].copy_from_slice(&xi_new);
    }
    // next.r now holds the half-step residual r^{k+1/2}.
    if coin {
        let w_half = shifted_multiplier(&st.lam, &next.r, lp.beta);
        let shift = ep.b_mat.tr_matvec(&w_half)?;
        let y_new = ep.h.prox_shifted(lp.eta_y, y, &shift)?;
        let dy: Vec<f64> = y_new.iter().zip(y).map(|(n, o)| n - o).collect();
        let upd = ep.b_mat.matvec(&dy)?;
        for (ri, ui) in next.r.iter_mut().zip(&upd) {
            *ri += ui;
        }
        next.y = Some(y_new);
    }
    for (li, ri) in next.lam.iter_mut().zip(&next.r) {
        *li -= lp.rho * ri;
    }
    next.k = st.k + 1;
    Ok(next)
}

/// Mode-specific weighted average of the iterates seen so far.
pub fn ergodic_average(st: &SolverState, mode: ErgodicMode) -> Result<Vec<f64>> {
    let compatible = matches!(
        (st.algo, mode),
        (AlgoKind::Jacobi, ErgodicMode::ShiftedLinear)
            | (AlgoKind::RpdcFixed, ErgodicMode::TailUniform)
            | (AlgoKind::RpdcAdaptive, ErgodicMode::MixedShifted)
    );
    if !compatible {
        return Err(Error::InvalidArgument(format!(
            "ergodic mode {mode:?} does not match algorithm {:?}",
            st.algo
        )));
    }
    if st.k == 0 {
        return Err(Error::InvalidArgument(
            "ergodic average needs at least one step".into(),
        ));
    }
    let erg = &st.erg;
    let t = st.k as f64;
    let avg = match mode {
        ErgodicMode::ShiftedLinear => {
            let den = erg.den_shifted;
            erg.acc_shifted.iter().map(|a| a / den).collect()
        }
        ErgodicMode::TailUniform => {
            let den = 1.0 + erg.theta * (t - 1.0);
            st.x
                .iter()
                .zip(&erg.acc_tail)
                .map(|(xi, ai)| (xi + ai) / den)
                .collect()
        }
        ErgodicMode::MixedShifted => {
            let w_last = t + erg.k0 + 1.0;
            let den = w_last + erg.den_mixed;
            st.x
                .iter()
                .zip(&erg.acc_mixed)
                .map(|(xi, ai)| (w_last * xi + ai) / den)
                .collect()
        }
    };
    Ok(avg)
}

/// Certified point a run measures its progress against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReference {
    pub x_star: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub y_star: Option<Vec<f64>>,
    pub f_star: f64,
    /// (stationarity, feasibility) at the reference point.
    pub kkt: (f64, f64),
}

/// One trace record; gap and distance are present when the run had a
/// certified reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub obj_gap: Option<f64>,
    pub feas: f64,
    pub dist_sq: Option<f64>,
}

/// Per-iteration record of the mode-matched ergodic average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicRow {
    pub k: usize,
    pub obj_gap: Option<f64>,
    pub feas: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub schema: u32,
    pub algorithm: AlgoKind,
    pub schedule: ScheduleParams,
    pub seed: u64,
    pub rng_algorithm: String,
    pub iterations_requested: usize,
    pub iterations_run: usize,
    pub stopped_early: bool,
    /// KKT residuals certifying the reference, when one was supplied.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reference_kkt: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub problem_label: Option<String>,
}

/// Convergence record of a run: one row per iterate (including the initial
/// point), optional ergodic rows, and a metadata envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub meta: TraceMeta,
    pub rows: Vec<TraceRow>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ergodic: Option<Vec<ErgodicRow>>,
}

pub const TRACE_CSV_HEADER: &str = "k,obj_gap,feas,dist_sq";

fn csv_num(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "NaN".to_string(),
    }
}

fn parse_csv_num(s: &str) -> Result<Option<f64>> {
    if s == "NaN" {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|e| Error::InvalidArgument(format!("bad CSV number {s:?}: {e}")))
}

impl Trace {
    /// CSV serialization: fixed header, shortest round-trip numbers.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.rows.len() + 1));
        out.push_str(TRACE_CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.k,
                csv_num(row.obj_gap),
                csv_num(Some(row.feas)),
                csv_num(row.dist_sq),
            ));
        }
        out
    }

    /// Parse rows back from CSV (metadata is not part of the CSV form).
    pub fn rows_from_csv(text: &str) -> Result<Vec<TraceRow>> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == TRACE_CSV_HEADER => {}
            other => {
                return Err(Error::InvalidArgument(format!(
                    "bad CSV header: {other:?}"
                )));
            }
        }
        let mut rows = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(Error::InvalidArgument(format!("bad CSV row: {line:?}")));
            }
            rows.push(TraceRow {
                k: parts[0]
                    .parse()
                    .map_err(|e| Error::InvalidArgument(format!("bad k: {e}")))?,
                obj_gap: parse_csv_num(parts[1])?,
                feas: parse_csv_num(parts[2])?
                    .ok_or_else(|| Error::InvalidArgument("feas may not be NaN".into()))?,
                dist_sq: parse_csv_num(parts[3])?,
            });
        }
        Ok(rows)
    }
}

/// Driver configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub iters: usize,
    pub seed: u64,
    /// Blocks updated per iteration; 0 means all.
    pub m: usize,
    /// Early-exit KKT tolerance (both components), checked every 16
    /// iterations. None disables early exit.
    pub stop_tol: Option<f64>,
    /// Record the mode-matched ergodic average alongside last iterates.
    pub track_ergodic: bool,
    /// Use the log-barrier paper preset instead of the general linear-variant
    /// recipe.
    pub linear_preset: bool,
    pub x0: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
    pub problem_label: Option<String>,
}

impl RunOptions {
    pub fn new(iters: usize, seed: u64) -> Self {
        RunOptions {
            iters,
            seed,
            m: 0,
            stop_tol: Some(1e-12),
            track_ergodic: false,
            linear_preset: false,
            x0: None,
            y0: None,
            problem_label: None,
        }
    }
}

fn ergodic_mode_for(algo: AlgoKind) -> Option<ErgodicMode> {
    match algo {
        AlgoKind::Jacobi => Some(ErgodicMode::ShiftedLinear),
        AlgoKind::RpdcFixed => Some(ErgodicMode::TailUniform),
        AlgoKind::RpdcAdaptive => Some(ErgodicMode::MixedShifted),
        AlgoKind::LinearVariant => None,
    }
}

/// Execute up to `opts.iters` steps, recording one trace row per iterate
/// (the initial point included). Identical inputs produce bit-identical
/// traces.
pub fn run(
    prob: &AnyProblem,
    algo: AlgoKind,
    sp: &ScheduleParams,
    opts: &RunOptions,
    reference: Option<&RunReference>,
) -> Result<Trace> {
    run_with_state(prob, algo, sp, opts, reference).map(|(trace, _)| trace)
}

/// [`run`], also handing back the final solver state.
pub fn run_with_state(
    prob: &AnyProblem,
    algo: AlgoKind,
    sp: &ScheduleParams,
    opts: &RunOptions,
    reference: Option<&RunReference>,
) -> Result<(Trace, SolverState)> {
    match (prob, algo) {
        (AnyProblem::Base(_), AlgoKind::LinearVariant) => {
            return Err(Error::InvalidArgument(
                "linear variant requires the extended problem form".into(),
            ));
        }
        (AnyProblem::Extended(_), a) if a != AlgoKind::LinearVariant => {
            return Err(Error::InvalidArgument(format!(
                "{a:?} runs on the base problem form"
            )));
        }
        _ => {}
    }
    let blocks = match prob {
        AnyProblem::Base(p) => p.partition.num_blocks(),
        AnyProblem::Extended(ep) => ep.base.partition.num_blocks(),
    };
    let m = if opts.m == 0 { blocks } else { opts.m };
    if m > blocks {
        return Err(Error::InvalidArgument(format!(
            "m = {m} exceeds block count {blocks}"
        )));
    }
    match algo {
        AlgoKind::Jacobi => {
            if m != blocks {
                return Err(Error::InvalidArgument(
                    "the Jacobian algorithm updates all blocks (m = M)".into(),
                ));
            }
        }
        AlgoKind::RpdcFixed | AlgoKind::RpdcAdaptive | AlgoKind::LinearVariant => {
            let theta = m as f64 / blocks as f64;
            if (sp.theta - theta).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "schedule theta {} does not match m/M = {theta}",
                    sp.theta
                )));
            }
        }
    }
    if algo == AlgoKind::RpdcAdaptive && opts.iters < 2 {
        return Err(Error::InvalidArgument(
            "adaptive schedule requires at least 2 iterations".into(),
        ));
    }

    let mut state = match prob {
        AnyProblem::Base(p) => {
            let x0 = opts.x0.clone().unwrap_or_else(|| vec![0.0; p.dim()]);
            SolverState::init(p, x0, algo, sp.theta, sp.k0, opts.seed)?
        }
        AnyProblem::Extended(ep) => {
            let x0 = opts
                .x0
                .clone()
                .ok_or_else(|| Error::InvalidArgument("extended run needs x0".into()))?;
            let y0 = opts
                .y0
                .clone()
                .ok_or_else(|| Error::InvalidArgument("extended run needs y0".into()))?;
            SolverState::init_extended(ep, x0, y0, sp.theta, opts.seed)?
        }
    };

    let linear_params = if algo == AlgoKind::LinearVariant {
        Some(if opts.linear_preset {
            linear_variant_paper_preset(sp)?
        } else {
            linear_variant_params(sp)?
        })
    } else {
        None
    };

    let erg_mode = if opts.track_ergodic {
        ergodic_mode_for(algo)
    } else {
        None
    };

    let mut rows = Vec::with_capacity(opts.iters + 1);
    let mut ergodic_rows: Option<Vec<ErgodicRow>> = erg_mode.map(|_| Vec::new());
    rows.push(trace_row(prob, &state, reference)?);

    let mut stopped_early = false;
    for k in 1..=opts.iters {
        if let Some(tol) = opts.stop_tol {
            if (k - 1) % KKT_CHECK_EVERY == 0 {
                let (stat, feas) = state_kkt(prob, &state)?;
                if stat < tol && feas < tol {
                    stopped_early = true;
                    break;
                }
            }
        }
        state = match (prob, algo) {
            (AnyProblem::Base(p), AlgoKind::Jacobi) => {
                let ip = jacobi_schedule(sp, k)?;
                jacobi_step(p, &state, &ip)?
            }
            (AnyProblem::Base(p), AlgoKind::RpdcFixed) => {
                let ip = rpdc_fixed_schedule(sp)?;
                let s = sample_blocks(&mut state.rng, blocks, m)?;
                rpdc_step(p, &state, &s, &ip)?
            }
            (AnyProblem::Base(p), AlgoKind::RpdcAdaptive) => {
                let ip = rpdc_adaptive_schedule(sp, k, opts.iters)?;
                let s = sample_blocks(&mut state.rng, blocks, m)?;
                rpdc_step(p, &state, &s, &ip)?
            }
            (AnyProblem::Extended(ep), AlgoKind::LinearVariant) => {
                let lp = linear_params.as_ref().unwrap();
                // fixed draw order: subset first, then the y coin
                let s = sample_blocks(&mut state.rng, blocks, m)?;
                let coin = draw_coin(&mut state.rng, sp.theta);
                linear_variant_step(ep, &state, &s, coin, lp)?
            }
            _ => unreachable!("pairing validated above"),
        };
        if state.k % RESIDUAL_REFRESH == 0 {
            refresh_residual(prob, &mut state)?;
        }
        rows.push(trace_row(prob, &state, reference)?);
        if let (Some(mode), Some(erg_rows)) = (erg_mode, ergodic_rows.as_mut()) {
            erg_rows.push(ergodic_row(prob, &state, mode, reference)?);
        }
    }

    let meta = TraceMeta {
        schema: 1,
        algorithm: algo,
        schedule: sp.clone(),
        seed: opts.seed,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        iterations_requested: opts.iters,
        iterations_run: rows.len() - 1,
        stopped_early,
        reference_kkt: reference.map(|r| r.kkt),
        problem_label: opts.problem_label.clone(),
    };
    Ok((
        Trace {
            meta,
            rows,
            ergodic: ergodic_rows,
        },
        state,
    ))
}

fn state_kkt(prob: &AnyProblem, st: &SolverState) -> Result<(f64, f64)> {
    match prob {
        AnyProblem::Base(p) => kkt_residual(p, &st.x, &st.lam, 1.0),
        AnyProblem::Extended(ep) => {
            extended_kkt_residual(ep, &st.x, st.y.as_ref().unwrap(), &st.lam, 1.0)
        }
    }
}

fn refresh_residual(prob: &AnyProblem, st: &mut SolverState) -> Result<()> {
    st.r = match prob {
        AnyProblem::Base(p) => linalg::residual(&p.a, &st.x, &p.b)?,
        AnyProblem::Extended(ep) => ep.residual(&st.x, st.y.as_ref().unwrap())?,
    };
    Ok(())
}

fn objective_of(prob: &AnyProblem, x: &[f64], y: Option<&Vec<f64>>) -> Result<f64> {
    match prob {
        AnyProblem::Base(p) => objective(p, x),
        AnyProblem::Extended(ep) => ep.objective(x, y.expect("extended state has y")),
    }
}

fn trace_row(
    prob: &AnyProblem,
    st: &SolverState,
    reference: Option<&RunReference>,
) -> Result<TraceRow> {
    let feas = linalg::norm(&st.r);
    let (obj_gap, dist_sq) = match reference {
        Some(rf) => {
            let f = objective_of(prob, &st.x, st.y.as_ref())?;
            let mut d = st
                .x
                .iter()
                .zip(&rf.x_star)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            if let (Some(y), Some(ys)) = (st.y.as_ref(), rf.y_star.as_ref()) {
                d += y
                    .iter()
                    .zip(ys)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            }
            (Some((f - rf.f_star).abs()), Some(d))
        }
        None => (None, None),
    };
    Ok(TraceRow {
        k: st.k,
        obj_gap,
        feas,
        dist_sq,
    })
}

fn ergodic_row(
    prob: &AnyProblem,
    st: &SolverState,
    mode: ErgodicMode,
    reference: Option<&RunReference>,
) -> Result<ErgodicRow> {
    let xbar = ergodic_average(st, mode)?;
    let (a, b) = match prob {
        AnyProblem::Base(p) => (&p.a, &p.b),
        AnyProblem::Extended(ep) => (&ep.base.a, &ep.base.b),
    };
    let mut r = linalg::residual(a, &xbar, b)?;
    if let AnyProblem::Extended(ep) = prob {
        let by = ep.b_mat.matvec(st.y.as_ref().unwrap())?;
        for (ri, bi) in r.iter_mut().zip(&by) {
            *ri += bi;
        }
    }
    let obj_gap = match reference {
        Some(rf) => {
            let f = objective_of(prob, &xbar, st.y.as_ref());
            // the average can sit outside an indicator's domain; record the
            // gap only when the objective is defined there
            match f {
                Ok(v) => Some((v - rf.f_star).abs()),
                Err(Error::Domain(_)) => None,
                Err(e) => return Err(e),
            }
        }
        None => None,
    };
    Ok(ErgodicRow {
        k: st.k,
        obj_gap,
        feas: linalg::norm(&r),
    })
}

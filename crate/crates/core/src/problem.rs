//! Problem representation: smooth-term oracle, per-block separable terms with
//! closed-form proximal maps, linear constraint data, and KKT residual
//! evaluation. The extended form adds an independent y-block with its own
//! smooth strongly convex term.

use crate::error::{Error, Result};
use crate::linalg::{self, BlockPartition, DenseMatrix};
use serde::{Deserialize, Serialize};

/// Points this close to an indicator boundary (from outside) still evaluate
/// as feasible; oracle outputs are allowed dips of that order.
const INDICATOR_SLACK: f64 = 1e-8;

/// Arguments below this are outside the log domain rather than "a very
/// large value".
const LOG_DOMAIN_FLOOR: f64 = 1e-300;

/// Smooth convex term f with gradient oracle and Lipschitz constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SmoothTerm {
    Zero,
    Linear {
        c: Vec<f64>,
    },
    /// 1/2 x^T Q x + c^T x with gradient Lipschitz constant `lip`.
    Quadratic {
        q: DenseMatrix,
        c: Vec<f64>,
        lip: f64,
    },
}

impl SmoothTerm {
    /// Quadratic term with the Lipschitz constant estimated by power
    /// iteration on Q.
    pub fn quadratic(q: DenseMatrix, c: Vec<f64>) -> Result<Self> {
        let lip = linalg::spectral_norm(&q, 1e-10, 10_000)?;
        Self::quadratic_with_lipschitz(q, c, lip)
    }

    /// Quadratic term with a caller-supplied Lipschitz constant (used when
    /// the spectrum is known by construction). Q must be symmetric; the
    /// gradient is computed as Qx + c.
    pub fn quadratic_with_lipschitz(q: DenseMatrix, c: Vec<f64>, lip: f64) -> Result<Self> {
        if q.rows() != q.cols() {
            return Err(Error::DimensionMismatch {
                context: "SmoothTerm::quadratic",
                expected: q.rows(),
                got: q.cols(),
            });
        }
        for i in 0..q.rows() {
            for j in 0..i {
                let (a, b) = (q.get(i, j), q.get(j, i));
                if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                    return Err(Error::InvalidArgument(format!(
                        "quadratic term matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        if c.len() != q.cols() {
            return Err(Error::DimensionMismatch {
                context: "SmoothTerm::quadratic",
                expected: q.cols(),
                got: c.len(),
            });
        }
        if !(lip >= 0.0) {
            return Err(Error::InvalidArgument("lip must be >= 0".into()));
        }
        Ok(SmoothTerm::Quadratic { q, c, lip })
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        match self {
            SmoothTerm::Zero => Ok(0.0),
            SmoothTerm::Linear { c } => {
                if c.len() != x.len() {
                    return Err(Error::DimensionMismatch {
                        context: "SmoothTerm::value",
                        expected: c.len(),
                        got: x.len(),
                    });
                }
                Ok(linalg::dot(c, x))
            }
            SmoothTerm::Quadratic { q, c, .. } => {
                let qx = q.matvec(x)?;
                Ok(0.5 * linalg::dot(x, &qx) + linalg::dot(c, x))
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            SmoothTerm::Zero => Ok(vec![0.0; x.len()]),
            SmoothTerm::Linear { c } => {
                if c.len() != x.len() {
                    return Err(Error::DimensionMismatch {
                        context: "SmoothTerm::gradient",
                        expected: c.len(),
                        got: x.len(),
                    });
                }
                Ok(c.clone())
            }
            SmoothTerm::Quadratic { q, c, .. } => {
                let mut g = q.matvec(x)?;
                for (gi, ci) in g.iter_mut().zip(c) {
                    *gi += ci;
                }
                Ok(g)
            }
        }
    }

    /// Partial gradient with respect to block `i`. Computed with the same
    /// arithmetic as the corresponding slice of [`Self::gradient`].
    pub fn block_gradient(&self, x: &[f64], part: &BlockPartition, i: usize) -> Result<Vec<f64>> {
        if i >= part.num_blocks() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: part.num_blocks(),
            });
        }
        let range = part.range(i);
        match self {
            SmoothTerm::Zero => Ok(vec![0.0; range.len()]),
            SmoothTerm::Linear { c } => Ok(c[range].to_vec()),
            SmoothTerm::Quadratic { q, c, .. } => {
                let mut g = Vec::with_capacity(range.len());
                for j in range {
                    let mut acc = 0.0;
                    for (a, b) in q.row(j).iter().zip(x) {
                        acc += a * b;
                    }
                    g.push(acc + c[j]);
                }
                Ok(g)
            }
        }
    }

    /// Lipschitz constant of the full gradient.
    pub fn lipschitz_full(&self) -> f64 {
        match self {
            SmoothTerm::Zero | SmoothTerm::Linear { .. } => 0.0,
            SmoothTerm::Quadratic { lip, .. } => *lip,
        }
    }

    /// Uniform Lipschitz constant over partial gradients on any `m` blocks.
    /// The full-gradient constant is always a valid uniform bound, which is
    /// what this returns; it is tight at m = M.
    pub fn lipschitz_partial(&self, _m: usize) -> f64 {
        self.lipschitz_full()
    }
}

/// Base shape of one block's nonsmooth term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BlockKind {
    Free,
    Nonneg,
    Box {
        lower: f64,
        upper: f64,
    },
    /// -weight * sum_j log z_j, optionally with an upper bound z <= upper.
    NegLog {
        weight: f64,
        upper: Option<f64>,
    },
}

/// One block's term: a base kind plus an optional quadratic `(quad/2)||z||^2`.
/// The quadratic composes with any base prox by a weight-and-point shift, so
/// every supported combination keeps a closed-form prox.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTerm {
    pub kind: BlockKind,
    #[serde(default)]
    pub quad: f64,
}

impl BlockTerm {
    pub fn new(kind: BlockKind, quad: f64) -> Result<Self> {
        if !(quad >= 0.0) || !quad.is_finite() {
            return Err(Error::UnsupportedTerm(
                "quadratic shift must be nonnegative and finite".into(),
            ));
        }
        match &kind {
            BlockKind::Box { lower, upper } => {
                if !(lower <= upper) {
                    return Err(Error::UnsupportedTerm(format!(
                        "box bounds out of order: [{lower}, {upper}]"
                    )));
                }
            }
            BlockKind::NegLog { weight, upper } => {
                if !(*weight > 0.0) {
                    return Err(Error::UnsupportedTerm(
                        "neg-log weight must be positive".into(),
                    ));
                }
                if let Some(u) = upper {
                    if !(*u > 0.0) {
                        return Err(Error::UnsupportedTerm(
                            "neg-log upper bound must be positive".into(),
                        ));
                    }
                }
            }
            BlockKind::Free | BlockKind::Nonneg => {}
        }
        Ok(BlockTerm { kind, quad })
    }

    pub fn free() -> Self {
        BlockTerm {
            kind: BlockKind::Free,
            quad: 0.0,
        }
    }

    pub fn nonneg() -> Self {
        BlockTerm {
            kind: BlockKind::Nonneg,
            quad: 0.0,
        }
    }

    pub fn value(&self, z: &[f64]) -> Result<f64> {
        let mut val = 0.5 * self.quad * linalg::norm_sq(z);
        match &self.kind {
            BlockKind::Free => {}
            BlockKind::Nonneg => {
                if z.iter().any(|&v| v < -INDICATOR_SLACK) {
                    return Err(Error::Domain("negative entry under nonneg indicator".into()));
                }
            }
            BlockKind::Box { lower, upper } => {
                if z.iter()
                    .any(|&v| v < lower - INDICATOR_SLACK || v > upper + INDICATOR_SLACK)
                {
                    return Err(Error::Domain("entry outside box indicator".into()));
                }
            }
            BlockKind::NegLog { weight, upper } => {
                for &v in z {
                    if v <= LOG_DOMAIN_FLOOR {
                        return Err(Error::Domain(format!("log argument {v} not positive")));
                    }
                    if let Some(u) = upper {
                        if v > u + INDICATOR_SLACK {
                            return Err(Error::Domain("entry above neg-log upper bound".into()));
                        }
                    }
                    val -= weight * v.ln();
                }
            }
        }
        Ok(val)
    }

    /// Exact minimizer of `g(z) + (eta/2)||z - v||^2`.
    pub fn prox(&self, eta: f64, v: &[f64]) -> Result<Vec<f64>> {
        if !(eta > 0.0) {
            return Err(Error::InvalidArgument("prox weight eta must be > 0".into()));
        }
        // Fold the quadratic shift into the prox point and weight.
        let eta_eff = eta + self.quad;
        let shrink = eta / eta_eff;
        let point = |vj: f64| shrink * vj;
        let out = match &self.kind {
            BlockKind::Free => v.iter().map(|&vj| point(vj)).collect(),
            BlockKind::Nonneg => v.iter().map(|&vj| point(vj).max(0.0)).collect(),
            BlockKind::Box { lower, upper } => v
                .iter()
                .map(|&vj| point(vj).clamp(*lower, *upper))
                .collect(),
            BlockKind::NegLog { weight, upper } => {
                let c = weight / eta_eff;
                v.iter()
                    .map(|&vj| {
                        let p = point(vj);
                        let root = positive_quadratic_root(p, c);
                        match upper {
                            Some(u) => root.min(*u),
                            None => root,
                        }
                    })
                    .collect()
            }
        };
        Ok(out)
    }

    /// Strong convexity modulus contributed by this block.
    pub fn modulus(&self) -> f64 {
        self.quad
    }
}

/// Positive root of z^2 - p z - c = 0 (c > 0), evaluated in the
/// cancellation-free form for negative p.
fn positive_quadratic_root(p: f64, c: f64) -> f64 {
    let s = (p * p + 4.0 * c).sqrt();
    if p >= 0.0 {
        0.5 * (p + s)
    } else {
        2.0 * c / (s - p)
    }
}

/// Block-separable nonsmooth term, one [`BlockTerm`] per partition block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SeparableTerm {
    terms: Vec<BlockTerm>,
}

impl SeparableTerm {
    pub fn new(terms: Vec<BlockTerm>) -> Self {
        SeparableTerm { terms }
    }

    pub fn uniform(blocks: usize, term: BlockTerm) -> Self {
        SeparableTerm {
            terms: vec![term; blocks],
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.terms.len()
    }

    pub fn term(&self, i: usize) -> &BlockTerm {
        &self.terms[i]
    }

    pub fn value(&self, part: &BlockPartition, x: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for (i, term) in self.terms.iter().enumerate() {
            acc += term.value(&x[part.range(i)])?;
        }
        Ok(acc)
    }

    /// Uniform strong convexity modulus of the whole term.
    pub fn modulus(&self) -> f64 {
        self.terms
            .iter()
            .map(BlockTerm::modulus)
            .fold(f64::INFINITY, f64::min)
    }

    /// Add `(extra/2)||.||^2` to every block.
    fn add_quadratic(&mut self, extra: f64) {
        for term in &mut self.terms {
            term.quad += extra;
        }
    }
}

/// Exact minimizer of `g_i(z) + (eta/2)||z - v||^2` for block `i`.
pub fn prox_block(g: &SeparableTerm, i: usize, eta: f64, v: &[f64]) -> Result<Vec<f64>> {
    if i >= g.num_blocks() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: g.num_blocks(),
        });
    }
    g.terms[i].prox(eta, v)
}

/// Linearly constrained problem: min f(x) + sum_i g_i(x_i) s.t. A x = b.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemRepr", into = "ProblemRepr")]
pub struct Problem {
    pub partition: BlockPartition,
    pub smooth: SmoothTerm,
    pub separable: SeparableTerm,
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    /// Uniform strong convexity modulus of the separable term.
    pub mu: f64,
}

#[derive(Serialize, Deserialize)]
struct ProblemRepr {
    sizes: Vec<usize>,
    smooth: SmoothTerm,
    separable: Vec<BlockTerm>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    mu: f64,
}

impl TryFrom<ProblemRepr> for Problem {
    type Error = Error;
    fn try_from(r: ProblemRepr) -> Result<Self> {
        Problem::new(
            BlockPartition::new(r.sizes)?,
            r.smooth,
            SeparableTerm::new(r.separable),
            DenseMatrix::from_rows(&r.a)?,
            r.b,
        )
    }
}

impl From<Problem> for ProblemRepr {
    fn from(p: Problem) -> Self {
        ProblemRepr {
            sizes: p.partition.sizes().to_vec(),
            smooth: p.smooth,
            separable: p.separable.terms,
            a: p.a.into(),
            b: p.b,
            mu: p.mu,
        }
    }
}

impl Problem {
    pub fn new(
        partition: BlockPartition,
        smooth: SmoothTerm,
        separable: SeparableTerm,
        a: DenseMatrix,
        b: Vec<f64>,
    ) -> Result<Self> {
        let n = partition.total();
        if a.cols() != n {
            return Err(Error::DimensionMismatch {
                context: "Problem::new (A columns)",
                expected: n,
                got: a.cols(),
            });
        }
        if b.len() != a.rows() {
            return Err(Error::DimensionMismatch {
                context: "Problem::new (b length)",
                expected: a.rows(),
                got: b.len(),
            });
        }
        if separable.num_blocks() != partition.num_blocks() {
            return Err(Error::DimensionMismatch {
                context: "Problem::new (separable blocks)",
                expected: partition.num_blocks(),
                got: separable.num_blocks(),
            });
        }
        match &smooth {
            SmoothTerm::Linear { c } if c.len() != n => {
                return Err(Error::DimensionMismatch {
                    context: "Problem::new (linear c)",
                    expected: n,
                    got: c.len(),
                });
            }
            SmoothTerm::Quadratic { q, .. } if q.cols() != n => {
                return Err(Error::DimensionMismatch {
                    context: "Problem::new (quadratic Q)",
                    expected: n,
                    got: q.cols(),
                });
            }
            _ => {}
        }
        let mu = separable.modulus();
        Ok(Problem {
            partition,
            smooth,
            separable,
            a,
            b,
            mu,
        })
    }

    pub fn dim(&self) -> usize {
        self.partition.total()
    }

    pub fn num_constraints(&self) -> usize {
        self.a.rows()
    }
}

/// Objective F(x) = f(x) + sum_i g_i(x_i).
pub fn objective(p: &Problem, x: &[f64]) -> Result<f64> {
    Ok(p.smooth.value(x)? + p.separable.value(&p.partition, x)?)
}

/// KKT residual pair: the prox-gradient mapping norm (zero exactly at KKT
/// points) and the constraint violation norm.
pub fn kkt_residual(p: &Problem, x: &[f64], lam: &[f64], eta_probe: f64) -> Result<(f64, f64)> {
    if !(eta_probe > 0.0) {
        return Err(Error::InvalidArgument("eta_probe must be > 0".into()));
    }
    let r = linalg::residual(&p.a, x, &p.b)?;
    let feasibility = linalg::norm(&r);

    let grad = p.smooth.gradient(x)?;
    let atl = p.a.tr_matvec(lam)?;
    let v: Vec<f64> = x
        .iter()
        .zip(grad.iter().zip(&atl))
        .map(|(&xj, (&gj, &aj))| xj - (gj - aj) / eta_probe)
        .collect();
    let mut moved = 0.0;
    for i in 0..p.partition.num_blocks() {
        let range = p.partition.range(i);
        let z = prox_block(&p.separable, i, eta_probe, &v[range.clone()])?;
        for (xj, zj) in x[range].iter().zip(&z) {
            moved += (xj - zj) * (xj - zj);
        }
    }
    let stationarity = eta_probe * moved.sqrt();
    Ok((stationarity, feasibility))
}

/// Move `mu_f` worth of curvature from the smooth term into the separable
/// term: f <- f - (mu_f/2)||.||^2 and g_i <- g_i + (mu_f/2)||.||^2. Objective
/// values are unchanged pointwise; the recorded modulus grows by `mu_f`.
pub fn shift_strong_convexity(p: &Problem, mu_f: f64) -> Result<Problem> {
    if !(mu_f >= 0.0) {
        return Err(Error::InvalidArgument("mu_f must be >= 0".into()));
    }
    if mu_f == 0.0 {
        return Ok(p.clone());
    }
    let smooth = match &p.smooth {
        SmoothTerm::Quadratic { q, c, lip } => {
            let mut q2 = q.clone();
            for i in 0..q2.rows() {
                let v = q2.get(i, i) - mu_f;
                q2.set(i, i, v);
            }
            // For a symmetric Q with lambda_min >= mu_f the shifted spectrum
            // is [lambda_min - mu_f, lip - mu_f].
            SmoothTerm::Quadratic {
                q: q2,
                c: c.clone(),
                lip: (lip - mu_f).max(0.0),
            }
        }
        _ => {
            return Err(Error::InvalidArgument(
                "shift_strong_convexity requires a quadratic smooth term".into(),
            ));
        }
    };
    let mut separable = p.separable.clone();
    separable.add_quadratic(mu_f);
    Problem::new(
        p.partition.clone(),
        smooth,
        separable,
        p.a.clone(),
        p.b.clone(),
    )
}

/// Smooth strongly convex y-block term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum YTerm {
    /// -weight * sum_j log y_j
    NegLog { weight: f64 },
    /// (curvature/2)||y||^2 + linear^T y
    Quadratic { curvature: f64, linear: Vec<f64> },
}

impl YTerm {
    pub fn value(&self, y: &[f64]) -> Result<f64> {
        match self {
            YTerm::NegLog { weight } => {
                let mut acc = 0.0;
                for &v in y {
                    if v <= LOG_DOMAIN_FLOOR {
                        return Err(Error::Domain(format!("log argument {v} not positive")));
                    }
                    acc -= weight * v.ln();
                }
                Ok(acc)
            }
            YTerm::Quadratic { curvature, linear } => {
                Ok(0.5 * curvature * linalg::norm_sq(y) + linalg::dot(linear, y))
            }
        }
    }

    pub fn gradient(&self, y: &[f64]) -> Result<Vec<f64>> {
        match self {
            YTerm::NegLog { weight } => y
                .iter()
                .map(|&v| {
                    if v <= LOG_DOMAIN_FLOOR {
                        Err(Error::Domain(format!("log argument {v} not positive")))
                    } else {
                        Ok(-weight / v)
                    }
                })
                .collect(),
            YTerm::Quadratic { curvature, linear } => Ok(y
                .iter()
                .zip(linear)
                .map(|(&v, &l)| curvature * v + l)
                .collect()),
        }
    }

    /// argmin_y h(y) - <shift, y> + (eta/2)||y - v||^2, via the
    /// linear-coefficient shift prox_h(eta, v + shift/eta).
    pub fn prox_shifted(&self, eta: f64, v: &[f64], shift: &[f64]) -> Result<Vec<f64>> {
        if !(eta > 0.0) {
            return Err(Error::InvalidArgument("prox weight eta must be > 0".into()));
        }
        if shift.len() != v.len() {
            return Err(Error::DimensionMismatch {
                context: "YTerm::prox_shifted",
                expected: v.len(),
                got: shift.len(),
            });
        }
        match self {
            YTerm::NegLog { weight } => {
                let c = weight / eta;
                Ok(v.iter()
                    .zip(shift)
                    .map(|(&vj, &sj)| positive_quadratic_root(vj + sj / eta, c))
                    .collect())
            }
            YTerm::Quadratic { curvature, linear } => Ok(v
                .iter()
                .zip(shift.iter().zip(linear))
                .map(|(&vj, (&sj, &lj))| (eta * vj + sj - lj) / (curvature + eta))
                .collect()),
        }
    }
}

/// Extended problem: min F(x) + h(y) s.t. A x + B y = b.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExtendedRepr", into = "ExtendedRepr")]
pub struct ExtendedProblem {
    pub base: Problem,
    pub h: YTerm,
    pub b_mat: DenseMatrix,
    /// Strong convexity modulus of h (caller-supplied for terms without a
    /// uniform constant, e.g. neg-log).
    pub nu: f64,
    /// Lipschitz constant of grad h (caller-supplied likewise).
    pub lip_h: f64,
}

#[derive(Serialize, Deserialize)]
struct ExtendedRepr {
    sizes: Vec<usize>,
    smooth: SmoothTerm,
    separable: Vec<BlockTerm>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    mu: f64,
    h: YTerm,
    #[serde(rename = "B")]
    b_mat: Vec<Vec<f64>>,
    nu: f64,
    #[serde(rename = "Lh")]
    lip_h: f64,
}

impl TryFrom<ExtendedRepr> for ExtendedProblem {
    type Error = Error;
    fn try_from(r: ExtendedRepr) -> Result<Self> {
        let base = Problem::new(
            BlockPartition::new(r.sizes)?,
            r.smooth,
            SeparableTerm::new(r.separable),
            DenseMatrix::from_rows(&r.a)?,
            r.b,
        )?;
        ExtendedProblem::new(base, r.h, DenseMatrix::from_rows(&r.b_mat)?, r.nu, r.lip_h)
    }
}

impl From<ExtendedProblem> for ExtendedRepr {
    fn from(ep: ExtendedProblem) -> Self {
        ExtendedRepr {
            sizes: ep.base.partition.sizes().to_vec(),
            smooth: ep.base.smooth,
            separable: ep.base.separable.terms,
            a: ep.base.a.into(),
            b: ep.base.b,
            mu: ep.base.mu,
            h: ep.h,
            b_mat: ep.b_mat.into(),
            nu: ep.nu,
            lip_h: ep.lip_h,
        }
    }
}

impl ExtendedProblem {
    pub fn new(
        base: Problem,
        h: YTerm,
        b_mat: DenseMatrix,
        nu: f64,
        lip_h: f64,
    ) -> Result<Self> {
        if b_mat.rows() != base.a.rows() {
            return Err(Error::DimensionMismatch {
                context: "ExtendedProblem::new (B rows)",
                expected: base.a.rows(),
                got: b_mat.rows(),
            });
        }
        if let YTerm::Quadratic { linear, .. } = &h {
            if linear.len() != b_mat.cols() {
                return Err(Error::DimensionMismatch {
                    context: "ExtendedProblem::new (h linear)",
                    expected: b_mat.cols(),
                    got: linear.len(),
                });
            }
        }
        if !(nu >= 0.0) || !(lip_h >= 0.0) {
            return Err(Error::InvalidArgument("nu and Lh must be >= 0".into()));
        }
        Ok(ExtendedProblem {
            base,
            h,
            b_mat,
            nu,
            lip_h,
        })
    }

    pub fn y_dim(&self) -> usize {
        self.b_mat.cols()
    }

    /// Total objective F(x) + h(y).
    pub fn objective(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(objective(&self.base, x)? + self.h.value(y)?)
    }

    /// Residual A x + B y - b.
    pub fn residual(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let mut r = linalg::residual(&self.base.a, x, &self.base.b)?;
        let by = self.b_mat.matvec(y)?;
        for (ri, bi) in r.iter_mut().zip(&by) {
            *ri += bi;
        }
        Ok(r)
    }
}

/// Either problem form, for drivers that accept both.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyProblem {
    Base(Problem),
    Extended(ExtendedProblem),
}

impl AnyProblem {
    pub fn base(&self) -> &Problem {
        match self {
            AnyProblem::Base(p) => p,
            AnyProblem::Extended(ep) => &ep.base,
        }
    }
}

/// KKT residual pair for the extended problem: max of the x-side
/// prox-gradient mapping norm and the y-side gradient residual, plus the
/// joint feasibility norm.
pub fn extended_kkt_residual(
    ep: &ExtendedProblem,
    x: &[f64],
    y: &[f64],
    lam: &[f64],
    eta_probe: f64,
) -> Result<(f64, f64)> {
    if !(eta_probe > 0.0) {
        return Err(Error::InvalidArgument("eta_probe must be > 0".into()));
    }
    let p = &ep.base;
    let r = ep.residual(x, y)?;
    let feasibility = linalg::norm(&r);

    let grad = p.smooth.gradient(x)?;
    let atl = p.a.tr_matvec(lam)?;
    let v: Vec<f64> = x
        .iter()
        .zip(grad.iter().zip(&atl))
        .map(|(&xj, (&gj, &aj))| xj - (gj - aj) / eta_probe)
        .collect();
    let mut moved = 0.0;
    for i in 0..p.partition.num_blocks() {
        let range = p.partition.range(i);
        let z = prox_block(&p.separable, i, eta_probe, &v[range.clone()])?;
        for (xj, zj) in x[range].iter().zip(&z) {
            moved += (xj - zj) * (xj - zj);
        }
    }
    let stat_x = eta_probe * moved.sqrt();

    let gh = ep.h.gradient(y)?;
    let btl = ep.b_mat.tr_matvec(lam)?;
    let stat_y = gh
        .iter()
        .zip(&btl)
        .map(|(g, b)| (g - b) * (g - b))
        .sum::<f64>()
        .sqrt();

    Ok((stat_x.max(stat_y), feasibility))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    fn simple_problem() -> Problem {
        // min 1/2||x||^2 s.t. x1 + x2 = 1, x >= 0
        let part = BlockPartition::new(vec![1, 1]).unwrap();
        let smooth =
            SmoothTerm::quadratic_with_lipschitz(DenseMatrix::identity(2), vec![0.0, 0.0], 1.0)
                .unwrap();
        let g = SeparableTerm::uniform(2, BlockTerm::nonneg());
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        Problem::new(part, smooth, g, a, vec![1.0]).unwrap()
    }

    #[test]
    fn objective_zero_terms() {
        let part = BlockPartition::new(vec![2]).unwrap();
        let p = Problem::new(
            part,
            SmoothTerm::Zero,
            SeparableTerm::uniform(1, BlockTerm::free()),
            DenseMatrix::zeros(1, 2),
            vec![0.0],
        )
        .unwrap();
        assert_eq!(objective(&p, &[3.0, -4.0]).unwrap(), 0.0);
    }

    #[test]
    fn objective_quadratic_with_nonneg() {
        // f = 1/2||x||^2, g = nonneg indicator, x = (1,2) -> 2.5
        let p = simple_problem();
        assert_eq!(objective(&p, &[1.0, 2.0]).unwrap(), 2.5);
    }

    #[test]
    fn objective_domain_error() {
        let part = BlockPartition::new(vec![1]).unwrap();
        let p = Problem::new(
            part,
            SmoothTerm::Zero,
            SeparableTerm::new(vec![BlockTerm::new(
                BlockKind::NegLog {
                    weight: 1.0,
                    upper: None,
                },
                0.0,
            )
            .unwrap()]),
            DenseMatrix::zeros(1, 1),
            vec![0.0],
        )
        .unwrap();
        assert!(matches!(objective(&p, &[0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn prox_nonneg_projection() {
        let t = BlockTerm::nonneg();
        assert_eq!(t.prox(2.5, &[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn prox_nonneg_with_quadratic_shift() {
        // argmin (mu/2)||z||^2 + I(z>=0) + (eta/2)||z-v||^2 = max(eta v/(mu+eta), 0)
        let t = BlockTerm::new(BlockKind::Nonneg, 3.0).unwrap();
        let (eta, v) = (2.0, [5.0, -1.0]);
        let expected = [eta * v[0] / (3.0 + eta), 0.0];
        let got = t.prox(eta, &v).unwrap();
        assert!((got[0] - expected[0]).abs() < 1e-15);
        assert_eq!(got[1], expected[1]);
    }

    #[test]
    fn prox_neglog_stationarity_root() {
        // eta=1, v=0, no upper bound: -1/z + z = 0 -> z = 1
        let t = BlockTerm::new(
            BlockKind::NegLog {
                weight: 1.0,
                upper: None,
            },
            0.0,
        )
        .unwrap();
        let z = t.prox(1.0, &[0.0]).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn prox_neglog_clamps_to_upper() {
        // eta=1, v=100, u=10: unconstrained root exceeds u, convexity forces
        // the boundary.
        let t = BlockTerm::new(
            BlockKind::NegLog {
                weight: 1.0,
                upper: Some(10.0),
            },
            0.0,
        )
        .unwrap();
        let z = t.prox(1.0, &[100.0]).unwrap();
        assert_eq!(z[0], 10.0);
    }

    #[test]
    fn prox_box_clamps() {
        let t = BlockTerm::new(
            BlockKind::Box {
                lower: -1.0,
                upper: 2.0,
            },
            0.0,
        )
        .unwrap();
        assert_eq!(
            t.prox(1.0, &[-5.0, 0.5, 9.0]).unwrap(),
            vec![-1.0, 0.5, 2.0]
        );
    }

    #[test]
    fn rejects_unsupported_terms() {
        assert!(matches!(
            BlockTerm::new(
                BlockKind::NegLog {
                    weight: 0.0,
                    upper: None
                },
                0.0
            ),
            Err(Error::UnsupportedTerm(_))
        ));
        assert!(matches!(
            BlockTerm::new(
                BlockKind::Box {
                    lower: 2.0,
                    upper: 1.0
                },
                0.0
            ),
            Err(Error::UnsupportedTerm(_))
        ));
    }

    /// Subgradient inclusion 0 in dg(z) + eta(z - v): interior points must
    /// have a vanishing derivative, boundary points a one-sided sign.
    #[test]
    fn prox_optimality_subgradient_inclusion() {
        let mut rng = seeded_rng(31);
        let kinds = vec![
            BlockTerm::new(BlockKind::Nonneg, 0.0).unwrap(),
            BlockTerm::new(BlockKind::Nonneg, 1.5).unwrap(),
            BlockTerm::new(
                BlockKind::NegLog {
                    weight: 1.0,
                    upper: Some(4.0),
                },
                0.0,
            )
            .unwrap(),
            BlockTerm::new(
                BlockKind::Box {
                    lower: -1.0,
                    upper: 1.0,
                },
                0.5,
            )
            .unwrap(),
        ];
        for term in kinds {
            for _ in 0..50 {
                let eta = rng.uniform_range(0.2, 5.0);
                let v = [rng.normal() * 3.0];
                let z = term.prox(eta, &v).unwrap()[0];
                // smooth part derivative at z
                let smooth_deriv = term.quad * z
                    + match &term.kind {
                        BlockKind::NegLog { weight, .. } => -weight / z,
                        _ => 0.0,
                    }
                    + eta * (z - v[0]);
                let (at_lower, at_upper) = match &term.kind {
                    BlockKind::Free => (false, false),
                    BlockKind::Nonneg => (z == 0.0, false),
                    BlockKind::Box { lower, upper } => (z == *lower, z == *upper),
                    BlockKind::NegLog { upper, .. } => (false, upper.map_or(false, |u| z == u)),
                };
                if at_lower {
                    assert!(smooth_deriv >= -1e-9, "lower boundary sign: {smooth_deriv}");
                } else if at_upper {
                    assert!(smooth_deriv <= 1e-9, "upper boundary sign: {smooth_deriv}");
                } else {
                    assert!(
                        smooth_deriv.abs() <= 1e-9 * (1.0 + eta * (1.0 + v[0].abs())),
                        "interior stationarity: {smooth_deriv}"
                    );
                }
            }
        }
    }

    #[test]
    fn prox_firm_nonexpansiveness() {
        let mut rng = seeded_rng(77);
        let terms = vec![
            BlockTerm::nonneg(),
            BlockTerm::new(BlockKind::Nonneg, 2.0).unwrap(),
            BlockTerm::new(
                BlockKind::NegLog {
                    weight: 0.7,
                    upper: Some(3.0),
                },
                0.0,
            )
            .unwrap(),
        ];
        for term in terms {
            for _ in 0..50 {
                let eta = rng.uniform_range(0.5, 2.0);
                let u: Vec<f64> = (0..3).map(|_| rng.normal() * 2.0).collect();
                let v: Vec<f64> = (0..3).map(|_| rng.normal() * 2.0).collect();
                let pu = term.prox(eta, &u).unwrap();
                let pv = term.prox(eta, &v).unwrap();
                let dp: Vec<f64> = pu.iter().zip(&pv).map(|(a, b)| a - b).collect();
                let duv: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
                assert!(linalg::norm_sq(&dp) <= linalg::dot(&dp, &duv) + 1e-10);
            }
        }
    }

    #[test]
    fn kkt_residual_constructed_cases() {
        // n=1: f = 1/2 x^2, A = [1], b = [2]. x=2 feasible, lam=0 leaves a
        // nonzero gradient.
        let part = BlockPartition::new(vec![1]).unwrap();
        let p = Problem::new(
            part,
            SmoothTerm::quadratic_with_lipschitz(DenseMatrix::identity(1), vec![0.0], 1.0)
                .unwrap(),
            SeparableTerm::uniform(1, BlockTerm::free()),
            DenseMatrix::from_rows(&[vec![1.0]]).unwrap(),
            vec![2.0],
        )
        .unwrap();
        let (stat, feas) = kkt_residual(&p, &[2.0], &[0.0], 1.0).unwrap();
        assert!(stat > 0.0);
        assert_eq!(feas, 0.0);

        // Infeasible x: feasibility is exactly ||Ax - b||.
        let (_, feas) = kkt_residual(&p, &[5.0], &[0.0], 1.0).unwrap();
        assert_eq!(feas, 3.0);

        // KKT point of the same problem: x*=2, lam*=2 (grad = x = A^T lam).
        let (stat, feas) = kkt_residual(&p, &[2.0], &[2.0], 1.0).unwrap();
        assert!(stat <= 1e-12 && feas <= 1e-12);
    }

    #[test]
    fn shift_identity_at_zero() {
        let p = simple_problem();
        let q = shift_strong_convexity(&p, 0.0).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn shift_preserves_objective_and_kkt() {
        let mut rng = seeded_rng(3);
        let p = simple_problem();
        let shifted = shift_strong_convexity(&p, 1.0).unwrap();
        assert_eq!(shifted.mu, 1.0);
        for _ in 0..10 {
            let x: Vec<f64> = (0..2).map(|_| rng.uniform_range(0.0, 3.0)).collect();
            let f0 = objective(&p, &x).unwrap();
            let f1 = objective(&shifted, &x).unwrap();
            assert!((f0 - f1).abs() <= 1e-12 * (1.0 + f0.abs()));

            let lam: Vec<f64> = vec![rng.normal()];
            let (_, r0) = kkt_residual(&p, &x, &lam, 1.0).unwrap();
            let (_, r1) = kkt_residual(&shifted, &x, &lam, 1.0).unwrap();
            assert!((r0 - r1).abs() <= 1e-10);
        }
        // the prox-gradient stationarity measure depends on the f/g split
        // away from KKT points, but its zero set is preserved: both forms
        // certify the optimum (1/2, 1/2) with multiplier 1/2
        let (s0, r0) = kkt_residual(&p, &[0.5, 0.5], &[0.5], 1.0).unwrap();
        let (s1, r1) = kkt_residual(&shifted, &[0.5, 0.5], &[0.5], 1.0).unwrap();
        assert!(s0 <= 1e-12 && s1 <= 1e-12);
        assert!(r0 <= 1e-12 && r1 <= 1e-12);
    }

    #[test]
    fn shift_requires_quadratic_smooth() {
        let part = BlockPartition::new(vec![1]).unwrap();
        let p = Problem::new(
            part,
            SmoothTerm::Linear { c: vec![1.0] },
            SeparableTerm::uniform(1, BlockTerm::free()),
            DenseMatrix::zeros(1, 1),
            vec![0.0],
        )
        .unwrap();
        assert!(shift_strong_convexity(&p, 0.5).is_err());
        assert!(shift_strong_convexity(&p, -1.0).is_err());
    }

    #[test]
    fn smooth_gradient_matches_finite_differences() {
        let mut rng = seeded_rng(21);
        let n = 5;
        let mut q = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = rng.normal();
                q.set(i, j, v);
                q.set(j, i, v);
            }
        }
        let c: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let terms = [
            SmoothTerm::Zero,
            SmoothTerm::Linear { c: c.clone() },
            SmoothTerm::quadratic_with_lipschitz(q, c, 10.0).unwrap(),
        ];
        let eps = 1e-6;
        for f in &terms {
            for _ in 0..10 {
                let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
                let grad = f.gradient(&x).unwrap();
                for j in 0..n {
                    let mut up = x.clone();
                    up[j] += eps;
                    let mut dn = x.clone();
                    dn[j] -= eps;
                    let fd = (f.value(&up).unwrap() - f.value(&dn).unwrap()) / (2.0 * eps);
                    assert!(
                        (fd - grad[j]).abs() <= 1e-5 * (1.0 + grad[j].abs()),
                        "fd {fd} vs grad {}",
                        grad[j]
                    );
                }
            }
        }
    }

    #[test]
    fn partial_lipschitz_bounded_by_full() {
        let f = SmoothTerm::quadratic_with_lipschitz(DenseMatrix::identity(4), vec![0.0; 4], 7.0)
            .unwrap();
        for m in 1..=4 {
            assert!(f.lipschitz_partial(m) <= f.lipschitz_full());
        }
        assert_eq!(f.lipschitz_partial(4), f.lipschitz_full());
    }

    #[test]
    fn block_gradient_assembles_to_full_gradient() {
        let mut rng = seeded_rng(13);
        let part = BlockPartition::new(vec![2, 1, 3]).unwrap();
        let n = part.total();
        let mut q = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = rng.normal();
                q.set(i, j, v);
                q.set(j, i, v);
            }
        }
        let c: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let f = SmoothTerm::quadratic_with_lipschitz(q, c, 10.0).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let full = f.gradient(&x).unwrap();
        let mut assembled = Vec::new();
        for i in 0..part.num_blocks() {
            assembled.extend(f.block_gradient(&x, &part, i).unwrap());
        }
        // identical arithmetic, so bitwise equality
        for (a, b) in assembled.iter().zip(&full) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn yterm_prox_shift_equivalence() {
        // prox with a linear shift equals prox at the shifted point.
        let h = YTerm::NegLog { weight: 1.0 };
        let eta = 2.0;
        let v = [0.5, 1.5];
        let a = [0.3, -0.2];
        let direct = h.prox_shifted(eta, &v, &a).unwrap();
        let shifted_point: Vec<f64> = v.iter().zip(&a).map(|(vj, aj)| vj + aj / eta).collect();
        let via_point = h.prox_shifted(eta, &shifted_point, &[0.0, 0.0]).unwrap();
        for (d, w) in direct.iter().zip(&via_point) {
            assert!((d - w).abs() <= 1e-14);
        }
        // stationarity of the shifted subproblem: grad h(z) - a + eta(z - v) = 0
        for j in 0..2 {
            let z = direct[j];
            let g = -1.0 / z - a[j] + eta * (z - v[j]);
            assert!(g.abs() <= 1e-12, "{g}");
        }
    }

    #[test]
    fn yterm_quadratic_prox() {
        let h = YTerm::Quadratic {
            curvature: 3.0,
            linear: vec![1.0],
        };
        // argmin (3/2)y^2 + y - a*y + (eta/2)(y-v)^2 with eta=2, v=1, a=0.5:
        // (3+2)y = 2*1 + 0.5 - 1 -> y = 0.3
        let z = h.prox_shifted(2.0, &[1.0], &[0.5]).unwrap();
        assert!((z[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn problem_json_round_trip() {
        let p = simple_problem();
        let json = serde_json::to_string(&p).unwrap();
        // fixed field names
        for key in ["sizes", "smooth", "separable", "\"A\"", "\"b\"", "\"mu\""] {
            assert!(json.contains(key), "missing {key} in {json}");
        }
        let back: Problem = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn extended_json_round_trip() {
        let base = simple_problem();
        let ep = ExtendedProblem::new(
            base,
            YTerm::NegLog { weight: 1.0 },
            DenseMatrix::identity(1),
            0.01,
            100.0,
        )
        .unwrap();
        let json = serde_json::to_string(&ep).unwrap();
        for key in ["\"h\"", "\"B\"", "\"nu\"", "\"Lh\""] {
            assert!(json.contains(key), "missing {key} in {json}");
        }
        let back: ExtendedProblem = serde_json::from_str(&json).unwrap();
        assert_eq!(ep, back);
    }
}

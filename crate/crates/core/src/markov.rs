//! Markov jump systems: `σ` evolves as a Markov chain with transition matrix
//! `Q`, and `ρ_p(𝓜, Q)` replaces the i.i.d. p-radius.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::operator_norm;
use crate::linalg::{checked_dim, kron_dm, rho_dm, spectrum, Limits, Matrix};
use crate::lower::{
    certify_matrices, scalar_weight_bound, search_scalar_weights, zhou_bound_bracketed, BoundReport, Certificate,
    ScalarSearch, Validity, Witness, NORM_TOL,
};
use crate::optimizer::{self, affordable_depth, materialize, CayleyPoint, OptimizerConfig};
use crate::radius::{exact_even_p, exact_invariant_cone, h_sequence, lift_p_to_1, mean_norm_powers, MatrixFamily};
use crate::walk::check_budget;

/// Tolerance on row sums of `Q`.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    family: MatrixFamily,
    transition: Matrix,
}

impl MarkovModel {
    pub fn new(family: MatrixFamily, transition: Matrix) -> Result<Self> {
        let n = family.len();
        if transition.rows() != n || transition.cols() != n {
            return Err(Error::InvalidTransition(format!(
                "transition matrix is {}x{} but the family has {n} members",
                transition.rows(),
                transition.cols()
            )));
        }
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let q = transition.get(i, j);
                if !(0.0..=1.0).contains(&q) {
                    return Err(Error::InvalidTransition(format!(
                        "entry ({i}, {j}) = {q} is outside [0, 1]"
                    )));
                }
                sum += q;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidTransition(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { family, transition })
    }

    /// All transition probabilities equal to `1/N`.
    pub fn uniform(family: MatrixFamily) -> Self {
        let n = family.len();
        let q = Matrix::from_row_major(n, n, vec![1.0 / n as f64; n * n]).expect("finite");
        Self { family, transition: q }
    }

    pub fn family(&self) -> &MatrixFamily {
        &self.family
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    pub fn len(&self) -> usize {
        self.family.len()
    }

    pub fn is_empty(&self) -> bool {
        self.family.is_empty()
    }

    pub fn q(&self, i: usize, j: usize) -> f64 {
        self.transition.get(i, j)
    }
}

/// Either kind of switching.
#[derive(Debug, Clone, PartialEq)]
pub enum SwitchedSystem {
    Iid(MatrixFamily),
    Markov(MarkovModel),
}

impl SwitchedSystem {
    pub fn family(&self) -> &MatrixFamily {
        match self {
            SwitchedSystem::Iid(f) => f,
            SwitchedSystem::Markov(m) => m.family(),
        }
    }
}

impl From<MatrixFamily> for SwitchedSystem {
    fn from(f: MatrixFamily) -> Self {
        SwitchedSystem::Iid(f)
    }
}

impl From<MarkovModel> for SwitchedSystem {
    fn from(m: MarkovModel) -> Self {
        SwitchedSystem::Markov(m)
    }
}

/// Weights `W_ij`, one per transition, indexed `[i][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovWeightSet {
    weights: Vec<Vec<Matrix>>,
    m: usize,
    certificate: Certificate,
}

impl MarkovWeightSet {
    pub fn new(weights: Vec<Vec<Matrix>>) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::EmptyFamily);
        }
        if let Some(i) = weights.iter().position(|row| row.len() != n) {
            return Err(Error::Shape(format!(
                "weight grid row {i} has {} entries, expected {n}",
                weights[i].len()
            )));
        }
        let first = &weights[0][0];
        first.require_square()?;
        let m = first.rows();
        for (i, row) in weights.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                if w.rows() != m || w.cols() != m {
                    return Err(Error::Shape(format!("weight ({i}, {j}) is not {m}x{m}")));
                }
            }
        }
        Ok(Self {
            weights,
            m,
            certificate: Certificate::Unchecked,
        })
    }

    /// Fails unless every weight has norm at most one.
    pub fn norm_bounded(weights: Vec<Vec<Matrix>>) -> Result<Self> {
        let mut set = Self::new(weights)?;
        for (i, row) in set.weights.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                let norm = operator_norm(w);
                if norm > 1.0 + NORM_TOL {
                    return Err(Error::Precondition(format!("weight ({i}, {j}) has norm {norm} > 1")));
                }
            }
        }
        set.certificate = Certificate::NormBounded;
        Ok(set)
    }

    /// 1x1 weights from an `N x N` grid of scalars.
    pub fn scalars(values: &[Vec<f64>]) -> Result<Self> {
        let grid = values
            .iter()
            .map(|row| row.iter().map(|&w| Matrix::scalar(w)).collect())
            .collect();
        Self::new(grid)?.certify(1, &Limits::default())
    }

    /// Norms first, then a bracket on the joint spectral radius of all `N²`
    /// weights taken together.
    pub fn certify(mut self, depth: usize, limits: &Limits) -> Result<Self> {
        self.certificate = certify_matrices(&self.flat(), depth, limits)?;
        Ok(self)
    }

    fn from_flat(flat: Vec<Matrix>, n: usize, certificate: Certificate) -> Result<Self> {
        let mut it = flat.into_iter();
        let grid = (0..n).map(|_| it.by_ref().take(n).collect()).collect();
        let mut set = Self::new(grid)?;
        set.certificate = certificate;
        Ok(set)
    }

    /// Row-major flattening, `(i, j)` lexicographic.
    pub fn flat(&self) -> Vec<Matrix> {
        self.weights.iter().flatten().cloned().collect()
    }

    pub fn get(&self, i: usize, j: usize) -> &Matrix {
        &self.weights[i][j]
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn certificate(&self) -> Certificate {
        self.certificate
    }
}

fn chain_h(sums: Vec<f64>, p: u32) -> Vec<f64> {
    sums.into_iter()
        .enumerate()
        .map(|(i, s)| s.powf(1.0 / (f64::from(p) * (i + 1) as f64)))
        .collect()
}

/// `h_1(𝓜,Q), …, h_{k_max}(𝓜,Q)` with
/// `h_k = (Σ q_{i_1 i_2} ⋯ q_{i_{k-1} i_k} ‖A_{i_k} ⋯ A_{i_1}‖^p)^{1/(pk)}`.
pub fn markov_h_sequence(model: &MarkovModel, p: u32, k_max: usize, limits: &Limits) -> Result<Vec<f64>> {
    if p == 0 || k_max == 0 {
        return Err(Error::InvalidArgument("p and k must be at least 1".into()));
    }
    check_budget(limits, model.len(), k_max)?;
    let q = model.transition.as_dmatrix();
    let sums = mean_norm_powers(&model.family.dmatrices(), Some(q), p, k_max);
    Ok(chain_h(sums, p))
}

pub fn markov_h_k(model: &MarkovModel, p: u32, k: usize, limits: &Limits) -> Result<f64> {
    Ok(*markov_h_sequence(model, p, k, limits)?.last().expect("k >= 1"))
}

/// The `N²` matrices `B_ij = N^{2/p} q_ij^{1/p} A_i ⊗ (e_j e_iᵀ)`, ordered by
/// `(i, j)`. Their i.i.d. p-radius equals `ρ_p(𝓜, Q)`.
pub fn omega_lift(model: &MarkovModel, p: u32, limits: &Limits) -> Result<MatrixFamily> {
    if p == 0 {
        return Err(Error::InvalidArgument("p must be at least 1".into()));
    }
    let n_states = model.len();
    checked_dim(limits, &[model.family.dim(), n_states])?;
    let pf = f64::from(p);
    let boost = (n_states as f64).powf(2.0 / pf);
    let mut members = Vec::with_capacity(n_states * n_states);
    for (i, a) in model.family.members().iter().enumerate() {
        for j in 0..n_states {
            let q = model.q(i, j);
            let coef = if q == 0.0 { 0.0 } else { boost * q.powf(1.0 / pf) };
            let mut e = DMatrix::zeros(n_states, n_states);
            e[(j, i)] = 1.0;
            members.push(Matrix::from_dmatrix_unchecked(kron_dm(a.as_dmatrix(), &e) * coef));
        }
    }
    MatrixFamily::new(members)
}

fn check_grid(model: &MarkovModel, weights: &MarkovWeightSet) -> Result<()> {
    if weights.n() != model.len() {
        return Err(Error::Shape(format!(
            "{0}x{0} weight grid for a chain with {1} states",
            weights.n(),
            model.len()
        )));
    }
    Ok(())
}

/// Block `(j, i)` of the returned matrix is `q_ij W_ij ⊗ A_i`; `weights`
/// is the `(i, j)` lexicographic list of all `N²` weights.
fn assemble(model_q: &DMatrix<f64>, members: &[DMatrix<f64>], weights: &[DMatrix<f64>], block: usize) -> DMatrix<f64> {
    let n_states = members.len();
    let mut out = DMatrix::zeros(n_states * block, n_states * block);
    for (i, a) in members.iter().enumerate() {
        for j in 0..n_states {
            let q = model_q[(i, j)];
            if q == 0.0 {
                continue;
            }
            let b = kron_dm(&weights[i * n_states + j], a) * q;
            out.view_mut((j * block, i * block), (block, block)).copy_from(&b);
        }
    }
    out
}

/// The block matrix `𝒜_W̄`.
pub fn markov_block_matrix(model: &MarkovModel, weights: &MarkovWeightSet, limits: &Limits) -> Result<Matrix> {
    check_grid(model, weights)?;
    let block = checked_dim(limits, &[weights.m(), model.family.dim()])?;
    checked_dim(limits, &[block, model.len()])?;
    let flat: Vec<DMatrix<f64>> = weights.flat().into_iter().map(Matrix::into_dmatrix).collect();
    Ok(Matrix::from_dmatrix_unchecked(assemble(
        model.transition.as_dmatrix(),
        &model.family.dmatrices(),
        &flat,
        block,
    )))
}

/// `ρ(𝒜_W̄)`, a lower bound on `ρ_1(𝓜, Q)` when the weights are certified.
pub fn markov_lambda(model: &MarkovModel, weights: &MarkovWeightSet, limits: &Limits) -> Result<f64> {
    crate::linalg::spectral_radius(&markov_block_matrix(model, weights, limits)?)
}

pub fn markov_lambda_report(model: &MarkovModel, weights: &MarkovWeightSet, limits: &Limits) -> Result<BoundReport> {
    let est = spectrum(&markov_block_matrix(model, weights, limits)?)?;
    let validity = if weights.certificate().is_certified() {
        Validity::Certified
    } else {
        Validity::Heuristic
    };
    Ok(BoundReport::new("markov_lambda", est.radius, validity)
        .with_residual(est.residual)
        .with_witness(Witness::MarkovWeights(weights.clone())))
}

/// `E_ji ⊗ q_ij A_i` for every `(i, j)`: `𝒜_W̄` with scalar weights is the
/// weighted sum of these.
fn scalar_basis(model: &MarkovModel) -> Vec<DMatrix<f64>> {
    let members = model.family.dmatrices();
    let n_states = model.len();
    let n = model.family.dim();
    let mut out = Vec::with_capacity(n_states * n_states);
    for (i, a) in members.iter().enumerate() {
        for j in 0..n_states {
            let mut b = DMatrix::zeros(n_states * n, n_states * n);
            b.view_mut((j * n, i * n), (n, n)).copy_from(&(a * model.q(i, j)));
            out.push(b);
        }
    }
    out
}

fn scalar_grid(model: &MarkovModel, w: &[f64]) -> Vec<Vec<f64>> {
    w.chunks(model.len()).map(<[f64]>::to_vec).collect()
}

/// `ℓ_1(𝓜, Q)`: the best scalar weights `w_ij ∈ [-1, 1]`.
pub fn markov_scalar_bound(model: &MarkovModel, search: &ScalarSearch) -> Result<BoundReport> {
    let (value, w) = search_scalar_weights(&scalar_basis(model), 1.0, search)?;
    let weights = MarkovWeightSet::scalars(&scalar_grid(model, &w))?;
    Ok(BoundReport::new("markov_scalar", value, Validity::Certified)
        .with_witness(Witness::MarkovWeights(weights))
        .with_notes(format!("grid resolution {}", search.grid_resolution)))
}

/// Maximizes `ρ(𝒜_W̄)` over `N²` independent weights `diag(d) · L`.
pub fn markov_optimize(
    model: &MarkovModel,
    m: usize,
    config: &OptimizerConfig,
    limits: &Limits,
) -> Result<BoundReport> {
    if m == 0 {
        return Err(Error::InvalidArgument("weight dimension m must be positive".into()));
    }
    let n_states = model.len();
    let block = checked_dim(limits, &[m, model.family.dim()])?;
    checked_dim(limits, &[block, n_states])?;
    let members = model.family.dmatrices();
    let q = model.transition.as_dmatrix().clone();
    let count = n_states * n_states;

    let objective = |weights: &[DMatrix<f64>]| -> Result<f64> { rho_dm(&assemble(&q, &members, weights, block)) };

    let scalar_search = ScalarSearch {
        grid_resolution: config.seed_scalar_grid.max(2),
        seed: config.rng_seed,
        ..ScalarSearch::default()
    };
    let (_, w) = search_scalar_weights(&scalar_basis(model), 1.0, &scalar_search)?;
    let mut scalar_seed = CayleyPoint::identity(count, m);
    for (f, &wi) in scalar_seed.factors.iter_mut().zip(&w) {
        f.scales = vec![wi; m];
    }
    let seeds = vec![
        ("identity".to_string(), CayleyPoint::identity(count, m)),
        ("scalar".to_string(), scalar_seed),
    ];

    let outcome = optimizer::search(count, m, &objective, seeds, config)?;
    let flat = materialize(&outcome.point).weights().to_vec();
    let weights = MarkovWeightSet::from_flat(flat, n_states, Certificate::NormBounded)?;
    let mut report = BoundReport::new(format!("markov_optimized_m{m}"), outcome.value, Validity::Certified)
        .with_witness(Witness::MarkovWeights(weights))
        .with_notes(format!(
            "local maximum, best of {} restarts (restart {}, seed {})",
            outcome.traces.len(),
            outcome.restart,
            outcome.traces[outcome.restart].seed
        ));
    report.trace = outcome.traces;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Undetermined,
}

impl Stability {
    /// 0 stable, 1 unstable, 2 undetermined.
    pub fn exit_code(self) -> i32 {
        match self {
            Stability::Stable => 0,
            Stability::Unstable => 1,
            Stability::Undetermined => 2,
        }
    }
}

/// How hard [`stability_verdict`] tries before answering undetermined.
#[derive(Debug, Clone, PartialEq)]
pub struct Effort {
    /// Longest product used for the `h_k` upper bounds; reduced to fit the
    /// product budget.
    pub k_max: usize,
    pub jsr_depth: usize,
    /// Weight size for the optimized lower bound.
    pub m: usize,
    pub scalar: ScalarSearch,
    pub optimizer: OptimizerConfig,
    pub optimize: bool,
    pub limits: Limits,
}

impl Default for Effort {
    fn default() -> Self {
        Self {
            k_max: 10,
            jsr_depth: 8,
            m: 2,
            scalar: ScalarSearch::with_grid(11),
            // one gradient sample per step; the verdict only needs a value above 1
            optimizer: OptimizerConfig {
                samples_per_iter: Some(1),
                ..OptimizerConfig::default()
            },
            optimize: true,
            limits: Limits::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Stability,
    pub p: u32,
    /// The bound that decided the status, if any.
    pub witness: Option<BoundReport>,
    /// Smallest upper bound and largest certified lower bound computed.
    pub upper: Option<BoundReport>,
    pub lower: Option<BoundReport>,
    /// Bounds that could not be computed within the limits.
    pub skipped: Vec<String>,
}

struct Tally {
    p: u32,
    upper: Option<BoundReport>,
    lower: Option<BoundReport>,
    skipped: Vec<String>,
}

impl Tally {
    fn offer_upper(&mut self, r: BoundReport) {
        if self.upper.as_ref().is_none_or(|u| r.value < u.value) {
            self.upper = Some(r);
        }
    }

    fn offer_lower(&mut self, r: BoundReport) {
        if r.is_certified() && self.lower.as_ref().is_none_or(|l| r.value > l.value) {
            self.lower = Some(r);
        }
    }

    fn stable(&self) -> bool {
        self.upper.as_ref().is_some_and(|u| u.value + u.tolerance < 1.0)
    }

    fn unstable(&self) -> bool {
        self.lower.as_ref().is_some_and(|l| l.value - l.tolerance > 1.0)
    }

    fn attempt(&mut self, label: &str, r: Result<BoundReport>, lower: bool) {
        match r {
            Ok(rep) if lower => self.offer_lower(rep),
            Ok(rep) => self.offer_upper(rep),
            Err(e) => self.skipped.push(format!("{label}: {e}")),
        }
    }

    fn finish(self) -> Verdict {
        let (status, witness) = if self.stable() {
            (Stability::Stable, self.upper.clone())
        } else if self.unstable() {
            (Stability::Unstable, self.lower.clone())
        } else {
            (Stability::Undetermined, None)
        };
        Verdict {
            status,
            p: self.p,
            witness,
            upper: self.upper,
            lower: self.lower,
            skipped: self.skipped,
        }
    }
}

pub(crate) fn root_report(mut r: BoundReport, p: u32) -> BoundReport {
    if p > 1 {
        let e = 1.0 / f64::from(p);
        r.tolerance = r.tolerance * e * r.value.powf(e - 1.0).max(1.0);
        r.value = r.value.powf(e);
        r.notes = format!("{} (p-th root of the bound for the Kronecker lift)", r.notes);
    }
    r
}

pub(crate) fn exact_report(family: &MatrixFamily, p: u32, limits: &Limits) -> Option<Result<BoundReport>> {
    let est = if p.is_multiple_of(2) {
        exact_even_p(family, p, limits)
    } else if family.is_nonnegative() {
        exact_invariant_cone(family, p, limits)
    } else {
        return None;
    };
    Some(est.map(|e| {
        BoundReport::new("exact", e.value, Validity::Certified)
            .with_residual(e.residual)
            .with_notes("value of the p-radius")
    }))
}

fn h_report(name: &str, h: Vec<f64>) -> BoundReport {
    let (k, &best) = h
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("k_max >= 1");
    BoundReport::new(name, best, Validity::Certified)
        .with_witness(Witness::Sequence(h.clone()))
        .with_notes(format!("minimum at k = {}", k + 1))
}

/// Lower bounds on the i.i.d. 1-radius of `family`, cheapest first, stopping
/// at the first one above 1.
fn iid_lower(tally: &mut Tally, family: &MatrixFamily, root: u32, effort: &Effort, config: &OptimizerConfig) {
    let limits = &effort.limits;
    let depth = affordable_depth(family.len(), effort.jsr_depth, limits);
    tally.attempt(
        "zhou",
        zhou_bound_bracketed(family, depth, limits).map(|r| root_report(r, root)),
        true,
    );
    if tally.unstable() {
        return;
    }
    tally.attempt(
        "scalar",
        scalar_weight_bound(family, &effort.scalar).map(|r| root_report(r, root)),
        true,
    );
    if tally.unstable() || !effort.optimize {
        return;
    }
    tally.attempt(
        "optimized",
        optimizer::optimize(family, effort.m, config, limits).map(|r| root_report(r, root)),
        true,
    );
}

/// Stable if some upper bound is below 1, unstable if some certified lower
/// bound is above 1, otherwise undetermined.
///
/// For `p > 1`, lower bounds come from the 1-radius (since `ρ_p ≥ ρ_1`) and
/// then from the Kronecker lift `{A_i^{⊗p}}`.
pub fn stability_verdict(system: &SwitchedSystem, p: u32, effort: &Effort) -> Result<Verdict> {
    if p == 0 {
        return Err(Error::InvalidArgument("p must be at least 1".into()));
    }
    let limits = &effort.limits;
    let mut tally = Tally {
        p,
        upper: None,
        lower: None,
        skipped: Vec::new(),
    };
    let k_max = affordable_depth(system.family().len(), effort.k_max, limits);
    let config = OptimizerConfig {
        stop_above: Some(1.0),
        ..effort.optimizer.clone()
    };

    // a family whose p-radius the formula gives exactly
    let exact_family = match system {
        SwitchedSystem::Iid(f) => Ok(f.clone()),
        SwitchedSystem::Markov(m) => omega_lift(m, p, limits),
    };

    match system {
        SwitchedSystem::Iid(f) => tally.attempt(
            "h_k",
            h_sequence(f, p, k_max, limits).map(|h| h_report("h_k", h)),
            false,
        ),
        SwitchedSystem::Markov(m) => tally.attempt(
            "markov_h_k",
            markov_h_sequence(m, p, k_max, limits).map(|h| h_report("markov_h_k", h)),
            false,
        ),
    }
    match exact_family {
        Ok(f) => {
            if let Some(r) = exact_report(&f, p, limits) {
                match r {
                    Ok(rep) => {
                        tally.offer_upper(rep.clone());
                        tally.offer_lower(rep);
                    }
                    Err(e) => tally.skipped.push(format!("exact: {e}")),
                }
            }
        }
        Err(e) => tally.skipped.push(format!("lift: {e}")),
    }
    if tally.stable() || tally.unstable() {
        return Ok(tally.finish());
    }

    match system {
        SwitchedSystem::Iid(f) => iid_lower(&mut tally, f, 1, effort, &config),
        SwitchedSystem::Markov(m) => {
            tally.attempt("markov_scalar", markov_scalar_bound(m, &effort.scalar), true);
            if !tally.unstable() && effort.optimize {
                tally.attempt("markov_optimized", markov_optimize(m, effort.m, &config, limits), true);
            }
        }
    }
    if p > 1 && !tally.unstable() {
        let lifted = match system {
            SwitchedSystem::Iid(f) => lift_p_to_1(f, p, limits),
            SwitchedSystem::Markov(m) => omega_lift(m, p, limits).and_then(|f| lift_p_to_1(&f, p, limits)),
        };
        match lifted {
            Ok(f) => iid_lower(&mut tally, &f, p, effort, &config),
            Err(e) => tally.skipped.push(format!("lifted lower bounds: {e}")),
        }
    }
    Ok(tally.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lower::{lambda_w, WeightSet};
    use crate::radius::h_k;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> Matrix {
        Matrix::from_rows(&[[a, b], [c, d]]).unwrap()
    }

    fn lim() -> Limits {
        Limits::default()
    }

    fn example4() -> MarkovModel {
        let fam = MatrixFamily::new(vec![m2(0.77, 0.80, -0.60, 0.87), m2(-0.77, 0.83, -0.70, -0.70)]).unwrap();
        MarkovModel::new(fam, m2(0.70, 0.30, 0.43, 0.57)).unwrap()
    }

    #[test]
    fn transition_validation() {
        let fam = MatrixFamily::new(vec![Matrix::identity(2), Matrix::identity(2)]).unwrap();
        assert!(MarkovModel::new(fam.clone(), m2(0.5, 0.6, 0.5, 0.5)).is_err());
        assert!(MarkovModel::new(fam.clone(), m2(1.2, -0.2, 0.5, 0.5)).is_err());
        assert!(MarkovModel::new(fam.clone(), Matrix::identity(3)).is_err());
        assert!(MarkovModel::new(fam, Matrix::identity(2)).is_ok());
    }

    #[test]
    fn first_term_is_norm_sum() {
        let model = example4();
        let h1 = markov_h_k(&model, 2, 1, &lim()).unwrap();
        let direct: f64 = model.family().members().iter().map(|a| operator_norm(a).powi(2)).sum();
        assert!((h1 - direct.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_state_chain() {
        let a = m2(0.4, 1.0, 0.0, 0.3);
        let model = MarkovModel::new(MatrixFamily::new(vec![a.clone()]).unwrap(), Matrix::identity(1)).unwrap();
        for k in 1..=5 {
            let want = operator_norm(&a.pow(k as u32).unwrap()).powf(1.0 / k as f64);
            assert!((markov_h_k(&model, 1, k, &lim()).unwrap() - want).abs() < 1e-12);
        }
        let lifted = omega_lift(&model, 3, &lim()).unwrap();
        assert_eq!(lifted.len(), 1);
        assert!(lifted.get(0).max_abs_diff(&a) < 1e-15);
    }

    #[test]
    fn uniform_chain_rescales_iid_sequence() {
        let model = MarkovModel::uniform(example4().family().clone());
        for p in 1..=3 {
            for k in 1..=5 {
                let iid = h_k(model.family(), p, k, &lim()).unwrap();
                let mk = markov_h_k(&model, p, k, &lim()).unwrap();
                let factor = 2f64.powf(1.0 / (k as f64 * f64::from(p)));
                assert!((mk - factor * iid).abs() < 1e-12 * mk);
            }
        }
    }

    #[test]
    fn zero_transitions_give_zero_lift_members() {
        let fam = example4().family().clone();
        let model = MarkovModel::new(fam, m2(1.0, 0.0, 0.5, 0.5)).unwrap();
        let lifted = omega_lift(&model, 1, &lim()).unwrap();
        assert_eq!(lifted.len(), 4);
        assert_eq!(lifted.dim(), 4);
        assert_eq!(operator_norm(lifted.get(1)), 0.0);
    }

    #[test]
    fn uniform_lift_coefficients() {
        let model = MarkovModel::uniform(example4().family().clone());
        let lifted = omega_lift(&model, 1, &lim()).unwrap();
        // B_12 = 2 A_1 ⊗ e_2 e_1ᵀ, so entry (a·2 + 1, b·2 + 0) = 2 A_1[a, b]
        let b12 = lifted.get(1);
        let a1 = model.family().get(0);
        for r in 0..2 {
            for c in 0..2 {
                assert!((b12.get(2 * r + 1, 2 * c) - 2.0 * a1.get(r, c)).abs() < 1e-15);
                assert_eq!(b12.get(2 * r, 2 * c), 0.0);
            }
        }
    }

    #[test]
    fn block_layout_is_row_j_column_i() {
        let model = example4();
        let w = MarkovWeightSet::scalars(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let big = markov_block_matrix(&model, &w, &lim()).unwrap();
        let a = model.family().members();
        for (i, ai) in a.iter().enumerate() {
            for j in 0..2 {
                let coef = model.q(i, j) * w.get(i, j).get(0, 0);
                for r in 0..2 {
                    for c in 0..2 {
                        let got = big.get(2 * j + r, 2 * i + c);
                        assert!((got - coef * ai.get(r, c)).abs() < 1e-15, "block ({j}, {i})");
                    }
                }
            }
        }
    }

    #[test]
    fn example4_scalar_weights() {
        let w = MarkovWeightSet::scalars(&[vec![1.0, 1.0], vec![-1.0, 0.932]]).unwrap();
        let v = markov_lambda(&example4(), &w, &lim()).unwrap();
        assert!((v - 0.844).abs() < 0.005, "{v}");
    }

    #[test]
    fn uniform_chain_with_column_independent_weights_matches_iid() {
        let model = MarkovModel::uniform(example4().family().clone());
        let w1 = m2(0.6, -0.8, 0.8, 0.6);
        let w2 = m2(-1.0, 0.0, 0.0, 0.5);
        let grid = MarkovWeightSet::new(vec![vec![w1.clone(), w1.clone()], vec![w2.clone(), w2.clone()]]).unwrap();
        let iid = lambda_w(model.family(), &WeightSet::new(vec![w1, w2]).unwrap(), &lim()).unwrap();
        let mk = markov_lambda(&model, &grid, &lim()).unwrap();
        assert!((iid - mk).abs() < 1e-10);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let w = MarkovWeightSet::scalars(&[vec![1.0]]).unwrap();
        assert!(markov_lambda(&example4(), &w, &lim()).is_err());
        assert!(MarkovWeightSet::new(vec![vec![Matrix::identity(2)], vec![]]).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let grid = vec![
            vec![Matrix::scalar(1.0), Matrix::scalar(2.0)],
            vec![Matrix::scalar(3.0), Matrix::scalar(4.0)],
        ];
        let set = MarkovWeightSet::new(grid).unwrap();
        let back = MarkovWeightSet::from_flat(set.flat(), 2, Certificate::Unchecked).unwrap();
        assert_eq!(set, back);
    }

    #[test]
    fn half_identity_is_stable() {
        let fam = MatrixFamily::new(vec![Matrix::identity(2).scale(0.5)]).unwrap();
        for p in 1..=3 {
            let v = stability_verdict(&fam.clone().into(), p, &Effort::default()).unwrap();
            assert_eq!(v.status, Stability::Stable);
            let w = v.witness.unwrap();
            assert!((w.value - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Stability::Stable.exit_code(), 0);
        assert_eq!(Stability::Unstable.exit_code(), 1);
        assert_eq!(Stability::Undetermined.exit_code(), 2);
    }
}

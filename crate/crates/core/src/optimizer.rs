//! Local maximization of `λ_W` over weights of the form `diag(d) · L` with
//! `|d_k| ≤ 1` and `L` orthogonal.
//!
//! Orthogonal factors are written as `L = D (I - S)(I + S)⁻¹` with `S`
//! skew-symmetric and `D` a diagonal of signs. The continuous parameters (the
//! strict upper triangle of `S` and the scales `d`) are moved by sampled
//! finite-difference gradient ascent with backtracking; the signs are toggled
//! by coordinate search between ascent rounds. Every iterate materializes to
//! weights with `‖W_i‖ ≤ 1`, so every value seen is a certified lower bound;
//! only its optimality is heuristic.
//!
//! Restart policy, in order: identity weights; the best scalar weights
//! `w_i · I`; when `m ≥ n`, the orthogonal polar factors of `A_i` scaled by
//! `min(1, ‖A_i‖ / ρ̂∞)`; then random points with skew entries uniform in
//! `[-2, 2]`, random signs and scales uniform in `[-1, 1]`. Restart `r` draws
//! from a generator seeded with `rng_seed ^ r`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{checked_dim, kron_dm, rho_dm, Limits, Matrix};
use crate::lower::{
    lambda_w, search_scalar_weights, zhou_weights, BoundReport, ScalarSearch, Validity, WeightSet, Witness,
};
use crate::radius::{jsr_bracket, MatrixFamily};
use crate::walk::product_count;

const MAX_ROUNDS: usize = 8;
const RESTART_BATCH: usize = 8;

/// One weight's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CayleyFactor {
    /// Strict upper triangle of `S`, row by row.
    pub skew: Vec<f64>,
    /// Diagonal of `D`, entries ±1.
    pub signs: Vec<f64>,
    /// Outer diagonal, entries in `[-1, 1]`.
    pub scales: Vec<f64>,
}

impl CayleyFactor {
    pub fn identity(m: usize) -> Self {
        Self {
            skew: vec![0.0; m * (m - 1) / 2],
            signs: vec![1.0; m],
            scales: vec![1.0; m],
        }
    }

    pub fn m(&self) -> usize {
        self.scales.len()
    }

    /// `D (I - S)(I + S)⁻¹`.
    pub fn orthogonal(&self) -> DMatrix<f64> {
        cayley(&self.skew, &self.signs)
    }

    pub fn weight(&self) -> DMatrix<f64> {
        let mut w = self.orthogonal();
        for (i, &d) in self.scales.iter().enumerate() {
            let d = d.clamp(-1.0, 1.0);
            for j in 0..w.ncols() {
                w[(i, j)] *= d;
            }
        }
        w
    }
}

/// Parameters for a full weight family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CayleyPoint {
    pub factors: Vec<CayleyFactor>,
}

impl CayleyPoint {
    pub fn identity(count: usize, m: usize) -> Self {
        Self {
            factors: vec![CayleyFactor::identity(m); count],
        }
    }

    fn weights(&self) -> Vec<DMatrix<f64>> {
        self.factors.iter().map(CayleyFactor::weight).collect()
    }

    fn continuous(&self) -> Vec<f64> {
        let mut x = Vec::new();
        for f in &self.factors {
            x.extend_from_slice(&f.skew);
            x.extend_from_slice(&f.scales);
        }
        x
    }

    fn set_continuous(&mut self, x: &[f64]) {
        let mut it = x.iter().copied();
        for f in &mut self.factors {
            for s in f.skew.iter_mut() {
                *s = it.next().expect("parameter length");
            }
            for d in f.scales.iter_mut() {
                *d = it.next().expect("parameter length").clamp(-1.0, 1.0);
            }
        }
    }
}

fn skew_matrix(skew: &[f64], m: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(m, m);
    let mut k = 0;
    for i in 0..m {
        for j in (i + 1)..m {
            s[(i, j)] = skew[k];
            s[(j, i)] = -skew[k];
            k += 1;
        }
    }
    s
}

fn cayley(skew: &[f64], signs: &[f64]) -> DMatrix<f64> {
    let m = signs.len();
    let mut l = match m {
        1 => DMatrix::from_element(1, 1, 1.0),
        2 => {
            let s = skew[0];
            let d = 1.0 + s * s;
            let c = (1.0 - s * s) / d;
            let t = 2.0 * s / d;
            DMatrix::from_row_slice(2, 2, &[c, -t, t, c])
        }
        _ => {
            let s = skew_matrix(skew, m);
            let id = DMatrix::<f64>::identity(m, m);
            // (I - S) and (I + S) commute, so (I - S)(I + S)⁻¹ = (I + S)⁻¹(I - S)
            (&id + &s)
                .lu()
                .solve(&(&id - &s))
                .expect("I + S is invertible for skew-symmetric S")
        }
    };
    for (i, &sgn) in signs.iter().enumerate() {
        if sgn < 0.0 {
            for j in 0..m {
                l[(i, j)] = -l[(i, j)];
            }
        }
    }
    l
}

/// Inverts the Cayley map: picks the signs `D` that keep `I + D·L` best
/// conditioned and returns `(skew, signs)` with `D (I-S)(I+S)⁻¹ = L`.
pub fn orthogonal_to_cayley(l: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    l.require_square()?;
    let m = l.rows();
    let l = l.as_dmatrix();
    let id = DMatrix::<f64>::identity(m, m);
    let signed = |signs: &[f64]| {
        let mut x = l.clone();
        for (i, &s) in signs.iter().enumerate() {
            for j in 0..m {
                x[(i, j)] *= s;
            }
        }
        x
    };
    let conditioning = |signs: &[f64]| {
        (&id + signed(signs))
            .singular_values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    };
    let signs: Vec<f64> = if m <= 10 {
        let mut best = (f64::NEG_INFINITY, vec![1.0; m]);
        for mask in 0u32..(1 << m) {
            let s: Vec<f64> = (0..m).map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let c = conditioning(&s);
            if c > best.0 {
                best = (c, s);
            }
        }
        best.1
    } else {
        let mut s = vec![1.0; m];
        for i in 0..m {
            let keep = conditioning(&s);
            s[i] = -1.0;
            if conditioning(&s) <= keep {
                s[i] = 1.0;
            }
        }
        s
    };
    let x = signed(&signs);
    let skew_full = (&id + &x)
        .lu()
        .solve(&(&id - &x))
        .ok_or_else(|| Error::Precondition("orthogonal factor has eigenvalue -1 under every sign choice".into()))?;
    let mut skew = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            skew.push(0.5 * (skew_full[(i, j)] - skew_full[(j, i)]));
        }
    }
    Ok((skew, signs))
}

/// Weights for a parameter point, certified `norm_bounded` by construction.
pub fn materialize(point: &CayleyPoint) -> WeightSet {
    let weights = point
        .weights()
        .into_iter()
        .map(Matrix::from_dmatrix_unchecked)
        .collect();
    WeightSet::norm_bounded(weights).expect("Cayley weights have norm at most one")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub restarts: usize,
    /// Gradient samples per iteration; `None` means twice the parameter count.
    pub samples_per_iter: Option<usize>,
    pub step_init: f64,
    pub step_shrink: f64,
    pub max_iters: usize,
    pub stall_tol: f64,
    pub rng_seed: u64,
    /// Grid resolution used for the scalar-weight seed.
    pub seed_scalar_grid: usize,
    /// Product depth used for the joint spectral radius estimate in the
    /// normalized-family seed.
    pub seed_jsr_depth: usize,
    /// Stop early once a value above this is found. Restarts run in fixed
    /// batches, so the result stays independent of the thread count.
    pub stop_above: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 32,
            samples_per_iter: None,
            step_init: 0.1,
            step_shrink: 0.5,
            max_iters: 200,
            stall_tol: 1e-7,
            rng_seed: 0,
            seed_scalar_grid: 21,
            seed_jsr_depth: 8,
            stop_above: None,
        }
    }
}

impl OptimizerConfig {
    pub fn with_seed(rng_seed: u64) -> Self {
        Self {
            rng_seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iters == 0 {
            return Err(Error::InvalidArgument("restarts and max_iters must be positive".into()));
        }
        if self.step_init.is_nan() || self.step_init <= 0.0 || self.stall_tol.is_nan() || self.stall_tol <= 0.0 {
            return Err(Error::InvalidArgument(
                "step_init and stall_tol must be positive".into(),
            ));
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return Err(Error::InvalidArgument("step_shrink must lie in (0, 1)".into()));
        }
        if self.samples_per_iter == Some(0) {
            return Err(Error::InvalidArgument("samples_per_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Best-so-far values of one restart, one entry per accepted move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub restart: usize,
    pub seed: String,
    pub best_so_far: Vec<f64>,
}

pub(crate) struct SearchOutcome {
    pub value: f64,
    pub point: CayleyPoint,
    pub restart: usize,
    pub traces: Vec<RestartTrace>,
}

struct Ascent<'a, F> {
    objective: &'a F,
    config: &'a OptimizerConfig,
    samples: usize,
}

impl<F> Ascent<'_, F>
where
    F: Fn(&[DMatrix<f64>]) -> Result<f64>,
{
    fn eval(&self, point: &CayleyPoint) -> Result<f64> {
        (self.objective)(&point.weights())
    }

    fn eval_at(&self, point: &mut CayleyPoint, x: &[f64]) -> Result<f64> {
        point.set_continuous(x);
        self.eval(point)
    }

    fn sampled_gradient(&self, point: &CayleyPoint, x: &[f64], radius: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let mut work = point.clone();
        let mut grad = vec![0.0; x.len()];
        let mut y = x.to_vec();
        for s in 0..self.samples {
            for (yj, &xj) in y.iter_mut().zip(x) {
                *yj = if s == 0 {
                    xj
                } else {
                    xj + radius * rng.gen_range(-1.0..=1.0)
                };
            }
            for j in 0..y.len() {
                let h = 1e-6 * y[j].abs().max(1.0);
                let orig = y[j];
                y[j] = orig + h;
                let fp = self.eval_at(&mut work, &y)?;
                y[j] = orig - h;
                let fm = self.eval_at(&mut work, &y)?;
                y[j] = orig;
                grad[j] += (fp - fm) / (2.0 * h);
            }
        }
        for g in grad.iter_mut() {
            *g /= self.samples as f64;
        }
        Ok(grad)
    }

    fn done(&self, value: f64) -> bool {
        self.config.stop_above.is_some_and(|t| value > t)
    }

    fn continuous_phase(
        &self,
        point: &mut CayleyPoint,
        value: &mut f64,
        rng: &mut ChaCha8Rng,
        trace: &mut Vec<f64>,
    ) -> Result<()> {
        let mut x = point.continuous();
        if x.is_empty() {
            return Ok(());
        }
        let mut step = self.config.step_init;
        let mut work = point.clone();
        for _ in 0..self.config.max_iters {
            if self.done(*value) {
                break;
            }
            let grad = self.sampled_gradient(point, &x, 0.1 * step, rng)?;
            let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !(gnorm > 0.0 && gnorm.is_finite()) {
                break;
            }
            let candidate: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi + step * gi / gnorm).collect();
            let fc = self.eval_at(&mut work, &candidate)?;
            if fc > *value {
                let gain = fc - *value;
                // keep x in the feasible box so later steps start from it
                x = work.continuous();
                point.set_continuous(&x);
                *value = fc;
                trace.push(fc);
                if gain < self.config.stall_tol {
                    break;
                }
            } else {
                step *= self.config.step_shrink;
                if step < self.config.stall_tol {
                    break;
                }
            }
        }
        Ok(())
    }

    /// Tries each sign flip and each snap of a scale to ±1; keeps the first
    /// improvement found.
    fn discrete_phase(&self, point: &mut CayleyPoint, value: &mut f64, trace: &mut Vec<f64>) -> Result<bool> {
        let mut improved = false;
        for i in 0..point.factors.len() {
            for k in 0..point.factors[i].m() {
                point.factors[i].signs[k] = -point.factors[i].signs[k];
                let f = self.eval(point)?;
                if f > *value + self.config.stall_tol {
                    *value = f;
                    trace.push(f);
                    improved = true;
                } else {
                    point.factors[i].signs[k] = -point.factors[i].signs[k];
                }
                let original = point.factors[i].scales[k];
                for snap in [1.0, -1.0] {
                    if original == snap {
                        continue;
                    }
                    point.factors[i].scales[k] = snap;
                    let f = self.eval(point)?;
                    if f > *value + self.config.stall_tol {
                        *value = f;
                        trace.push(f);
                        improved = true;
                        break;
                    }
                    point.factors[i].scales[k] = original;
                }
            }
        }
        Ok(improved)
    }

    fn run(&self, mut point: CayleyPoint, rng: &mut ChaCha8Rng) -> Result<(f64, CayleyPoint, Vec<f64>)> {
        let mut value = self.eval(&point)?;
        let mut trace = vec![value];
        for _ in 0..MAX_ROUNDS {
            self.continuous_phase(&mut point, &mut value, rng, &mut trace)?;
            if self.done(value) || !self.discrete_phase(&mut point, &mut value, &mut trace)? {
                break;
            }
        }
        Ok((value, point, trace))
    }
}

fn random_point(count: usize, m: usize, rng: &mut ChaCha8Rng) -> CayleyPoint {
    let factors = (0..count)
        .map(|_| CayleyFactor {
            skew: (0..m * (m - 1) / 2).map(|_| rng.gen_range(-2.0..=2.0)).collect(),
            signs: (0..m).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect(),
            scales: (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        })
        .collect();
    CayleyPoint { factors }
}

/// Runs all restarts and returns the best, ties going to the lowest restart.
pub(crate) fn search<F>(
    count: usize,
    m: usize,
    objective: &F,
    seeds: Vec<(String, CayleyPoint)>,
    config: &OptimizerConfig,
) -> Result<SearchOutcome>
where
    F: Fn(&[DMatrix<f64>]) -> Result<f64> + Sync,
{
    config.validate()?;
    let dims = count * (m * (m - 1) / 2 + m);
    let ascent = Ascent {
        objective,
        config,
        samples: config.samples_per_iter.unwrap_or(2 * dims).max(1),
    };
    let run_restart = |r: usize| -> Result<(f64, CayleyPoint, RestartTrace)> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ r as u64);
        let (label, start) = match seeds.get(r) {
            Some((label, p)) => (label.clone(), p.clone()),
            None => ("random".to_string(), random_point(count, m, &mut rng)),
        };
        let (value, point, best_so_far) = ascent.run(start, &mut rng)?;
        Ok((
            value,
            point,
            RestartTrace {
                restart: r,
                seed: label,
                best_so_far,
            },
        ))
    };

    let mut best: Option<(f64, CayleyPoint, usize)> = None;
    let mut traces = Vec::with_capacity(config.restarts);
    let mut start = 0;
    while start < config.restarts {
        let end = (start + RESTART_BATCH).min(config.restarts);
        #[cfg(feature = "parallel")]
        let results: Vec<Result<(f64, CayleyPoint, RestartTrace)>> = {
            use rayon::prelude::*;
            (start..end).into_par_iter().map(run_restart).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let results: Vec<Result<(f64, CayleyPoint, RestartTrace)>> = (start..end).map(run_restart).collect();
        for res in results {
            let (value, point, trace) = res?;
            let r = trace.restart;
            traces.push(trace);
            if best.as_ref().is_none_or(|b| value > b.0) {
                best = Some((value, point, r));
            }
        }
        start = end;
        if best.as_ref().is_some_and(|b| ascent.done(b.0)) {
            break;
        }
    }
    let (value, point, restart) = best.expect("at least one restart");
    Ok(SearchOutcome {
        value,
        point,
        restart,
        traces,
    })
}

fn polar_factor(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    u * vt
}

/// Largest bracket depth `≤ wanted` whose enumeration fits the budget.
pub(crate) fn affordable_depth(n: usize, wanted: usize, limits: &Limits) -> usize {
    let mut depth = wanted.max(1);
    while depth > 1 && product_count(n, depth) > u128::from(limits.product_budget) {
        depth -= 1;
    }
    depth
}

/// Maximizes `λ_W` over `m x m` weights `diag(d) · L`.
///
/// When `m ≥ n` the normalized family `{A_i / ρ̂∞}` (padded to `m`) is also
/// evaluated as a candidate; it is certified by the bracket that produced
/// `ρ̂∞` rather than by norms, and attains the Zhou bound.
pub fn optimize(family: &MatrixFamily, m: usize, config: &OptimizerConfig, limits: &Limits) -> Result<BoundReport> {
    if m == 0 {
        return Err(Error::InvalidArgument("weight dimension m must be positive".into()));
    }
    let n = family.dim();
    let dim = checked_dim(limits, &[m, n])?;
    let count = family.len();
    let members = family.dmatrices();
    let inv_n = 1.0 / count as f64;

    let objective = |weights: &[DMatrix<f64>]| -> Result<f64> {
        let mut sum = DMatrix::zeros(dim, dim);
        for (w, a) in weights.iter().zip(&members) {
            sum += kron_dm(w, a);
        }
        rho_dm(&(sum * inv_n))
    };

    let mut seeds = vec![("identity".to_string(), CayleyPoint::identity(count, m))];

    let scalar_search = ScalarSearch {
        grid_resolution: config.seed_scalar_grid.max(2),
        seed: config.rng_seed,
        ..ScalarSearch::default()
    };
    let (_, w) = search_scalar_weights(&members, inv_n, &scalar_search)?;
    let mut scalar_seed = CayleyPoint::identity(count, m);
    for (f, &wi) in scalar_seed.factors.iter_mut().zip(&w) {
        f.scales = vec![wi; m];
    }
    seeds.push(("scalar".to_string(), scalar_seed));

    let mut zhou_candidate = None;
    if m >= n {
        let depth = affordable_depth(count, config.seed_jsr_depth, limits);
        let bracket = jsr_bracket(family, depth, limits)?;
        if bracket.upper > 0.0 {
            let weights = zhou_weights(family, &bracket)?.padded(m)?;
            let value = lambda_w(family, &weights, limits)?;
            zhou_candidate = Some((value, weights));

            let mut polar = CayleyPoint::identity(count, m);
            for (f, a) in polar.factors.iter_mut().zip(&members) {
                let mut u = DMatrix::<f64>::identity(m, m);
                u.view_mut((0, 0), (n, n)).copy_from(&polar_factor(a));
                let (skew, signs) = orthogonal_to_cayley(&Matrix::from_dmatrix_unchecked(u))?;
                let c = (crate::linalg::norm_dm(a) / bracket.upper).min(1.0);
                *f = CayleyFactor {
                    skew,
                    signs,
                    scales: vec![c; m],
                };
            }
            seeds.push(("normalized-family polar".to_string(), polar));
        }
    }

    let outcome = search(count, m, &objective, seeds, config)?;
    let mut report = BoundReport::new(format!("optimized_m{m}"), outcome.value, Validity::Certified)
        .with_witness(Witness::Weights(materialize(&outcome.point)))
        .with_notes(format!(
            "local maximum, best of {} restarts (restart {}, seed {})",
            outcome.traces.len(),
            outcome.restart,
            outcome.traces[outcome.restart].seed
        ));
    if let Some((value, weights)) = zhou_candidate {
        if value > report.value {
            report.value = value;
            report.witness = Some(Witness::Weights(weights));
            report.notes = format!(
                "normalized family beat {} restarts of the orthogonal search",
                outcome.traces.len()
            );
        }
    }
    report.trace = outcome.traces;
    Ok(report)
}

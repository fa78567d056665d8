//! Lower bounds on the 1-radius from Kronecker-weighted averages.
//!
//! For weights `W_1, …, W_N` whose joint spectral radius is at most one,
//! `λ_W = ρ(N⁻¹ Σ W_i ⊗ A_i)` never exceeds `ρ_1`. The bounds here are all
//! instances of that fact: scalar weights in `[-1, 1]`, the normalized family
//! itself, products of the family, and real embeddings of complex weights.
//! Bounds on `ρ_p` for `p > 1` follow by applying them to
//! [`lift_p_to_1`](crate::radius::lift_p_to_1).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, block_matrix, checked_dim, kron_dm, operator_norm, rho_2x2, rho_dm, Limits, Matrix, EIG_REL_TOL,
};
use crate::markov::MarkovWeightSet;
use crate::optimizer::{self, OptimizerConfig, RestartTrace};
use crate::radius::{jsr_bracket, MatrixFamily, RadiusBracket};

/// Slack allowed when checking `‖W_i‖ ≤ 1`.
pub const NORM_TOL: f64 = 1e-9;

/// Why a weight set may be trusted to have joint spectral radius at most one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Certificate {
    /// Every weight has operator norm at most `1 + NORM_TOL`.
    NormBounded,
    /// A product bracket of the given depth put `ρ∞` at most `upper ≤ 1 + NORM_TOL`.
    BracketChecked {
        upper: f64,
        depth: usize,
    },
    Unchecked,
}

impl Certificate {
    pub fn is_certified(&self) -> bool {
        !matches!(self, Certificate::Unchecked)
    }
}

pub(crate) fn certify_matrices(weights: &[Matrix], depth: usize, limits: &Limits) -> Result<Certificate> {
    if weights.iter().all(|w| operator_norm(w) <= 1.0 + NORM_TOL) {
        return Ok(Certificate::NormBounded);
    }
    let fam = MatrixFamily::new(weights.to_vec())?;
    let bracket = jsr_bracket(&fam, depth, limits)?;
    if bracket.upper <= 1.0 + NORM_TOL {
        Ok(Certificate::BracketChecked {
            upper: bracket.upper,
            depth,
        })
    } else {
        Ok(Certificate::Unchecked)
    }
}

/// Weights `W_1, …, W_N`, all `m x m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    weights: Vec<Matrix>,
    m: usize,
    certificate: Certificate,
}

impl WeightSet {
    /// An uncertified weight set.
    pub fn new(weights: Vec<Matrix>) -> Result<Self> {
        let first = weights.first().ok_or(Error::EmptyFamily)?;
        first.require_square()?;
        let m = first.rows();
        if let Some(i) = weights.iter().position(|w| w.rows() != m || w.cols() != m) {
            return Err(Error::Shape(format!("weight {i} is not {m}x{m}")));
        }
        Ok(Self {
            weights,
            m,
            certificate: Certificate::Unchecked,
        })
    }

    /// Fails unless every weight has norm at most one.
    pub fn norm_bounded(weights: Vec<Matrix>) -> Result<Self> {
        let mut set = Self::new(weights)?;
        for (i, w) in set.weights.iter().enumerate() {
            let norm = operator_norm(w);
            if norm > 1.0 + NORM_TOL {
                return Err(Error::Precondition(format!("weight {i} has norm {norm} > 1")));
            }
        }
        set.certificate = Certificate::NormBounded;
        Ok(set)
    }

    /// 1x1 weights.
    pub fn scalars(values: &[f64]) -> Result<Self> {
        let set = Self::new(values.iter().map(|&w| Matrix::scalar(w)).collect())?;
        set.certify(1, &Limits::default())
    }

    /// Attaches the strongest certificate that can be checked: per-matrix norms
    /// first, then a joint spectral radius bracket of the given depth.
    pub fn certify(mut self, depth: usize, limits: &Limits) -> Result<Self> {
        self.certificate = certify_matrices(&self.weights, depth, limits)?;
        Ok(self)
    }

    pub(crate) fn with_certificate(mut self, certificate: Certificate) -> Self {
        self.certificate = certificate;
        self
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn certificate(&self) -> Certificate {
        self.certificate
    }

    /// `diag(W_i, 0)` of size `m_new`. Norms and products are unchanged, so the
    /// certificate carries over.
    pub fn padded(&self, m_new: usize) -> Result<Self> {
        if m_new < self.m {
            return Err(Error::InvalidArgument(format!(
                "cannot pad {}x{} weights down to {m_new}",
                self.m, self.m
            )));
        }
        let extra = m_new - self.m;
        let weights = self
            .weights
            .iter()
            .map(|w| {
                if extra == 0 {
                    Ok(w.clone())
                } else {
                    block_matrix(&[
                        vec![w.clone(), Matrix::zeros(self.m, extra)],
                        vec![Matrix::zeros(extra, self.m), Matrix::zeros(extra, extra)],
                    ])
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            weights,
            m: m_new,
            certificate: self.certificate,
        })
    }

    /// All `N^q` length-`q` products, in the order of [`product_family`].
    pub fn products(&self, q: u32, limits: &Limits) -> Result<Self> {
        let weights = ordered_products(&self.weights, q, limits)?;
        let certificate = match self.certificate {
            Certificate::NormBounded => Certificate::NormBounded,
            Certificate::BracketChecked { upper, depth } => Certificate::BracketChecked {
                upper: upper.powi(q as i32),
                depth,
            },
            Certificate::Unchecked => Certificate::Unchecked,
        };
        Ok(Self {
            weights,
            m: self.m,
            certificate,
        })
    }
}

/// Whether a reported value is guaranteed to be a bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    Certified,
    Heuristic,
}

/// The object that justifies a reported bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum Witness {
    Weights(WeightSet),
    MarkovWeights(MarkovWeightSet),
    Scalars(Vec<f64>),
    Bracket(RadiusBracket),
    Sequence(Vec<f64>),
}

/// A named bound value with its justification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub value: f64,
    #[serde(with = "validity_flag", rename = "certified")]
    pub validity: Validity,
    pub witness: Option<Witness>,
    /// Accuracy of the eigenvalue or norm routine behind `value`.
    pub tolerance: f64,
    pub notes: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<RestartTrace>,
}

mod validity_flag {
    use super::Validity;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Validity, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_bool(*v == Validity::Certified)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Validity, D::Error> {
        Ok(if bool::deserialize(d)? {
            Validity::Certified
        } else {
            Validity::Heuristic
        })
    }
}

impl BoundReport {
    pub fn new(name: impl Into<String>, value: f64, validity: Validity) -> Self {
        Self {
            name: name.into(),
            value,
            validity,
            witness: None,
            tolerance: EIG_REL_TOL * value.abs(),
            notes: String::new(),
            trace: Vec::new(),
        }
    }

    pub fn with_witness(mut self, witness: Witness) -> Self {
        self.witness = Some(witness);
        self
    }

    pub fn with_notes(mut self, notes: impl Into<String>) -> Self {
        self.notes = notes.into();
        self
    }

    pub fn with_residual(mut self, residual: f64) -> Self {
        self.tolerance = self.tolerance.max(residual);
        self
    }

    pub fn is_certified(&self) -> bool {
        self.validity == Validity::Certified
    }
}

fn weighted_average(family: &MatrixFamily, weights: &WeightSet, limits: &Limits) -> Result<Matrix> {
    if weights.len() != family.len() {
        return Err(Error::Shape(format!(
            "{} weights for a family of {} matrices",
            weights.len(),
            family.len()
        )));
    }
    let dim = checked_dim(limits, &[weights.m(), family.dim()])?;
    let mut sum = DMatrix::zeros(dim, dim);
    for (w, a) in weights.weights().iter().zip(family.members()) {
        sum += kron_dm(w.as_dmatrix(), a.as_dmatrix());
    }
    Ok(Matrix::from_dmatrix_unchecked(sum / family.len() as f64))
}

/// `λ_W = ρ(N⁻¹ Σ W_i ⊗ A_i)`. A lower bound on `ρ_1` whenever the weights
/// carry a certificate.
pub fn lambda_w(family: &MatrixFamily, weights: &WeightSet, limits: &Limits) -> Result<f64> {
    linalg::spectral_radius(&weighted_average(family, weights, limits)?)
}

/// [`lambda_w`] packaged as a report.
pub fn lambda_report(family: &MatrixFamily, weights: &WeightSet, limits: &Limits) -> Result<BoundReport> {
    let est = linalg::spectrum(&weighted_average(family, weights, limits)?)?;
    let validity = if weights.certificate().is_certified() {
        Validity::Certified
    } else {
        Validity::Heuristic
    };
    Ok(BoundReport::new("lambda_w", est.radius, validity)
        .with_residual(est.residual)
        .with_witness(Witness::Weights(weights.clone())))
}

/// `ℓ_Z = ρ(Σ A_i ⊗ A_i) / (N · ρ∞)` with `ρ∞` replaced by an upper estimate,
/// which keeps the value a valid lower bound.
pub fn zhou_bound(family: &MatrixFamily, jsr_upper: f64, limits: &Limits) -> Result<BoundReport> {
    if !(jsr_upper > 0.0 && jsr_upper.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "joint spectral radius estimate must be positive, got {jsr_upper}"
        )));
    }
    let self_weights = WeightSet::new(family.members().to_vec())?;
    let est = linalg::spectrum(&weighted_average(family, &self_weights, limits)?)?;
    Ok(BoundReport::new("zhou", est.radius / jsr_upper, Validity::Certified)
        .with_residual(est.residual / jsr_upper)
        .with_notes(format!("joint spectral radius upper estimate {jsr_upper}")))
}

/// [`zhou_bound`] using the upper end of a product bracket of the given depth.
pub fn zhou_bound_bracketed(family: &MatrixFamily, depth: usize, limits: &Limits) -> Result<BoundReport> {
    let bracket = jsr_bracket(family, depth, limits)?;
    let report = zhou_bound(family, bracket.upper, limits)?;
    Ok(report.with_witness(Witness::Bracket(bracket)))
}

/// The normalized family `{A_i / u}` as a weight set, certified by the bracket
/// that produced `u`.
pub fn zhou_weights(family: &MatrixFamily, bracket: &RadiusBracket) -> Result<WeightSet> {
    if bracket.upper <= 0.0 {
        return Err(Error::Precondition("zero joint spectral radius bracket".into()));
    }
    let set = WeightSet::new(family.scaled(1.0 / bracket.upper).members().to_vec())?;
    Ok(set.with_certificate(Certificate::BracketChecked {
        upper: 1.0,
        depth: bracket.depth,
    }))
}

/// Controls for the search over scalar weights in `[-1, 1]^N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSearch {
    pub grid_resolution: usize,
    /// Largest `N` for which the exhaustive grid is used.
    pub max_grid_members: usize,
    /// Largest number of grid points evaluated.
    pub grid_budget: u64,
    /// Allow coordinate ascent from random starts when the grid does not fit.
    pub fallback: bool,
    pub starts: usize,
    pub seed: u64,
}

impl Default for ScalarSearch {
    fn default() -> Self {
        Self {
            grid_resolution: 41,
            max_grid_members: 4,
            grid_budget: 50_000_000,
            fallback: true,
            starts: 16,
            seed: 0,
        }
    }
}

impl ScalarSearch {
    pub fn with_grid(grid_resolution: usize) -> Self {
        Self {
            grid_resolution,
            ..Self::default()
        }
    }
}

/// Spectral radius of `scale · Σ w_i M_i` over a set of small square matrices,
/// evaluated without allocating for dimensions one and two.
pub(crate) struct ScalarObjective {
    mats: Vec<Vec<f64>>, // row-major
    dim: usize,
    scale: f64,
}

impl ScalarObjective {
    pub(crate) fn new(mats: &[DMatrix<f64>], scale: f64) -> Self {
        let dim = mats[0].nrows();
        let mats = mats
            .iter()
            .map(|m| {
                let mut v = Vec::with_capacity(dim * dim);
                for i in 0..dim {
                    for j in 0..dim {
                        v.push(m[(i, j)]);
                    }
                }
                v
            })
            .collect();
        Self { mats, dim, scale }
    }

    fn len(&self) -> usize {
        self.mats.len()
    }

    fn rho_flat(&self, sum: &[f64]) -> Result<f64> {
        let s = self.scale;
        match self.dim {
            1 => Ok((s * sum[0]).abs()),
            2 => Ok(rho_2x2(sum[0], sum[1], sum[2], sum[3]) * s.abs()),
            d => Ok(rho_dm(&DMatrix::from_row_slice(d, d, sum))? * s.abs()),
        }
    }

    pub(crate) fn eval(&self, w: &[f64]) -> Result<f64> {
        let mut sum = vec![0.0; self.dim * self.dim];
        for (wi, m) in w.iter().zip(&self.mats) {
            for (s, x) in sum.iter_mut().zip(m) {
                *s += wi * x;
            }
        }
        self.rho_flat(&sum)
    }

    /// Exhaustive grid with the first coordinate restricted to `w_1 ≥ 0`.
    /// Ties keep the lexicographically smallest vector.
    fn grid(&self, resolution: usize) -> Result<(f64, Vec<f64>)> {
        let values: Vec<f64> = (0..resolution)
            .map(|j| -1.0 + 2.0 * j as f64 / (resolution - 1) as f64)
            .collect();
        let first: Vec<f64> = values.iter().copied().filter(|&v| v >= 0.0).collect();
        let n = self.len();
        let block = self.dim * self.dim;

        let root = |w0: f64| -> Result<(f64, Vec<f64>)> {
            let mut sums = vec![0.0; block * n];
            for (s, x) in sums[..block].iter_mut().zip(&self.mats[0]) {
                *s = w0 * x;
            }
            let mut idx = vec![0usize; n];
            let mut best = (f64::NEG_INFINITY, Vec::new());
            if n == 1 {
                let r = self.rho_flat(&sums[..block])?;
                return Ok((r, vec![w0]));
            }
            // odometer over coordinates 1..n
            let mut level = 1;
            loop {
                let w = values[idx[level]];
                let (prev, cur) = sums.split_at_mut(level * block);
                let prev = &prev[(level - 1) * block..];
                for ((c, p), x) in cur[..block].iter_mut().zip(prev).zip(&self.mats[level]) {
                    *c = p + w * x;
                }
                if level == n - 1 {
                    let r = self.rho_flat(&cur[..block])?;
                    if r > best.0 {
                        let mut wv = vec![w0];
                        wv.extend(idx[1..].iter().map(|&i| values[i]));
                        best = (r, wv);
                    }
                    // advance
                    loop {
                        idx[level] += 1;
                        if idx[level] < resolution {
                            break;
                        }
                        idx[level] = 0;
                        level -= 1;
                        if level == 0 {
                            return Ok(best);
                        }
                    }
                } else {
                    level += 1;
                    idx[level] = 0;
                }
            }
        };

        #[cfg(feature = "parallel")]
        let parts: Vec<Result<(f64, Vec<f64>)>> = {
            use rayon::prelude::*;
            first.par_iter().map(|&w0| root(w0)).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let parts: Vec<Result<(f64, Vec<f64>)>> = first.iter().map(|&w0| root(w0)).collect();

        let mut best = (f64::NEG_INFINITY, Vec::new());
        for part in parts {
            let part = part?;
            if part.0 > best.0 {
                best = part;
            }
        }
        Ok(best)
    }

    /// Coordinate ascent: each coordinate is swept over a uniform grid and the
    /// best point refined by golden-section search; the vector is renormalized
    /// to `max |w_i| = 1` since the objective is positively homogeneous.
    pub(crate) fn polish(&self, mut w: Vec<f64>) -> Result<(f64, Vec<f64>)> {
        const SWEEP: usize = 201;
        let mut f = self.eval(&w)?;
        for _ in 0..50 {
            let before = f;
            for i in 0..w.len() {
                let mut best_t = w[i];
                for j in 0..SWEEP {
                    let t = -1.0 + 2.0 * j as f64 / (SWEEP - 1) as f64;
                    w[i] = t;
                    let v = self.eval(&w)?;
                    if v > f {
                        f = v;
                        best_t = t;
                    }
                }
                let h = 2.0 / (SWEEP - 1) as f64;
                let (mut lo, mut hi) = ((best_t - h).max(-1.0), (best_t + h).min(1.0));
                let g = (5f64.sqrt() - 1.0) / 2.0;
                for _ in 0..40 {
                    let a = hi - g * (hi - lo);
                    let b = lo + g * (hi - lo);
                    w[i] = a;
                    let fa = self.eval(&w)?;
                    w[i] = b;
                    let fb = self.eval(&w)?;
                    if fa >= fb {
                        hi = b;
                    } else {
                        lo = a;
                    }
                    for (t, v) in [(a, fa), (b, fb)] {
                        if v > f {
                            f = v;
                            best_t = t;
                        }
                    }
                }
                w[i] = best_t;
            }
            let peak = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if peak > 0.0 && peak < 1.0 {
                for x in w.iter_mut() {
                    *x /= peak;
                }
                f = self.eval(&w)?;
            }
            if f - before <= 1e-13 {
                break;
            }
        }
        Ok((f, w))
    }
}

/// Best scalar weights `w ∈ [-1,1]^N` for `ρ(scale · Σ w_i M_i)`.
pub(crate) fn search_scalar_weights(
    mats: &[DMatrix<f64>],
    scale: f64,
    search: &ScalarSearch,
) -> Result<(f64, Vec<f64>)> {
    if search.grid_resolution < 2 {
        return Err(Error::InvalidArgument("grid resolution must be at least 2".into()));
    }
    let obj = ScalarObjective::new(mats, scale);
    let n = mats.len();
    let points = (search.grid_resolution as u128).saturating_pow(n as u32);
    if n <= search.max_grid_members && points <= u128::from(search.grid_budget) {
        let (_, w) = obj.grid(search.grid_resolution)?;
        return obj.polish(w);
    }
    if !search.fallback {
        return Err(Error::BudgetExceeded {
            count: points,
            budget: search.grid_budget,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    let mut best = obj.polish(vec![1.0; n])?;
    for _ in 0..search.starts {
        let mut start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        start[0] = start[0].abs();
        let cand = obj.polish(start)?;
        if cand.0 > best.0 {
            best = cand;
        }
    }
    Ok(best)
}

/// `ℓ_[-1,1] = max_{w ∈ [-1,1]^N} ρ(N⁻¹ Σ w_i A_i)`, searched on a grid and
/// polished by coordinate ascent. Any weights found give a certified bound.
pub fn scalar_weight_bound(family: &MatrixFamily, search: &ScalarSearch) -> Result<BoundReport> {
    let (value, w) = search_scalar_weights(&family.dmatrices(), 1.0 / family.len() as f64, search)?;
    Ok(BoundReport::new("scalar", value, Validity::Certified)
        .with_witness(Witness::Scalars(w))
        .with_notes(format!("grid resolution {}", search.grid_resolution)))
}

pub(crate) fn ordered_products(members: &[Matrix], q: u32, limits: &Limits) -> Result<Vec<Matrix>> {
    if q == 0 {
        return Err(Error::InvalidArgument("product length q must be at least 1".into()));
    }
    let n = members.len() as u128;
    limits.check_products(n.saturating_pow(q))?;
    let mut out: Vec<Matrix> = members.to_vec();
    for _ in 1..q {
        let mut next = Vec::with_capacity(out.len() * members.len());
        for prefix in &out {
            for m in members {
                next.push(prefix * m);
            }
        }
        out = next;
    }
    Ok(out)
}

/// `𝓜^q`: the `N^q` products `A_{i_1} A_{i_2} ⋯ A_{i_q}` in lexicographic order
/// of `(i_1, …, i_q)`.
pub fn product_family(family: &MatrixFamily, q: u32, limits: &Limits) -> Result<MatrixFamily> {
    MatrixFamily::new(ordered_products(family.members(), q, limits)?)
}

/// Where [`refined_bound`] gets weights for the product family.
#[derive(Debug, Clone)]
pub enum WeightSource<'a> {
    Optimize { m: usize, config: &'a OptimizerConfig },
    Fixed(&'a WeightSet),
}

/// `ℓ^{(q)} = ℓ(𝓜^q)^{1/q}`.
pub fn refined_bound(family: &MatrixFamily, q: u32, source: WeightSource<'_>, limits: &Limits) -> Result<BoundReport> {
    let products = product_family(family, q, limits)?;
    let inner = match source {
        WeightSource::Optimize { m, config } => optimizer::optimize(&products, m, config, limits)?,
        WeightSource::Fixed(weights) => lambda_report(&products, weights, limits)?,
    };
    let root = 1.0 / f64::from(q);
    let mut report = inner.clone();
    report.name = format!("refined_q{q}");
    report.value = inner.value.powf(root);
    report.tolerance = inner.tolerance * root * inner.value.powf(root - 1.0).max(1.0);
    report.notes = format!("q = {q}; product-family bound {}", inner.value);
    Ok(report)
}

/// `T_W = [[Re W, -Im W], [Im W, Re W]]`.
pub fn complex_embed(re: &Matrix, im: &Matrix) -> Result<Matrix> {
    re.require_square()?;
    if re.rows() != im.rows() || re.cols() != im.cols() {
        return Err(Error::Shape(format!(
            "real part is {}x{} but imaginary part is {}x{}",
            re.rows(),
            re.cols(),
            im.rows(),
            im.cols()
        )));
    }
    block_matrix(&[vec![re.clone(), im.scale(-1.0)], vec![im.clone(), re.clone()]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r() -> Matrix {
        Matrix::rotation_quarter()
    }

    fn lim() -> Limits {
        Limits::default()
    }

    fn example1(n: usize) -> MatrixFamily {
        let mut members = vec![Matrix::identity(2).scale(n as f64)];
        members.extend(std::iter::repeat_n(r(), n));
        MatrixFamily::new(members).unwrap()
    }

    fn rotations() -> Vec<Matrix> {
        (0..4).map(|k| r().pow(k).unwrap()).collect()
    }

    #[test]
    fn lambda_example1_closed_form() {
        for n in 1..=5 {
            let mut w = vec![Matrix::identity(2)];
            w.extend(std::iter::repeat_n(r(), n));
            let ws = WeightSet::norm_bounded(w).unwrap();
            let v = lambda_w(&example1(n), &ws, &lim()).unwrap();
            let expected = 2.0 * n as f64 / (n as f64 + 1.0);
            assert!((v - expected).abs() < 1e-12, "N = {n}");
        }
    }

    #[test]
    fn lambda_rotation_self_weights() {
        let fam = MatrixFamily::new(rotations()).unwrap();
        let ws = WeightSet::norm_bounded(rotations()).unwrap();
        assert!((lambda_w(&fam, &ws, &lim()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_count_mismatch() {
        let fam = MatrixFamily::new(rotations()).unwrap();
        let ws = WeightSet::scalars(&[1.0, 1.0]).unwrap();
        assert!(matches!(lambda_w(&fam, &ws, &lim()), Err(Error::Shape(_))));
    }

    #[test]
    fn zhou_examples() {
        for n in 1..=4 {
            let z = zhou_bound_bracketed(&example1(n), 4, &lim()).unwrap();
            assert!((z.value - 1.0).abs() < 1e-9, "N = {n}: {}", z.value);
        }
        let c = MatrixFamily::new(vec![Matrix::identity(3).scale(1.7)]).unwrap();
        assert!((zhou_bound(&c, 1.7, &lim()).unwrap().value - 1.7).abs() < 1e-12);
        assert!(zhou_bound(&c, 0.0, &lim()).is_err());
    }

    #[test]
    fn scalar_bound_rotations_capped() {
        let fam = MatrixFamily::new(rotations()).unwrap();
        let rep = scalar_weight_bound(&fam, &ScalarSearch::with_grid(21)).unwrap();
        assert!(rep.value <= 2f64.sqrt() / 2.0 + 1e-9);
        assert!(rep.value >= 2f64.sqrt() / 2.0 - 1e-6);
    }

    #[test]
    fn scalar_bound_single_member_is_spectral_radius() {
        let a = Matrix::from_rows(&[[0.2, 1.3], [-0.4, 0.9]]).unwrap();
        let fam = MatrixFamily::new(vec![a.clone()]).unwrap();
        let rep = scalar_weight_bound(&fam, &ScalarSearch::default()).unwrap();
        assert!((rep.value - linalg::spectral_radius(&a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn scalar_bound_without_fallback_errors_when_grid_too_big() {
        let fam = MatrixFamily::new(vec![Matrix::identity(1); 6]).unwrap();
        let search = ScalarSearch {
            fallback: false,
            ..ScalarSearch::default()
        };
        assert!(matches!(
            scalar_weight_bound(&fam, &search),
            Err(Error::BudgetExceeded { .. })
        ));
        let rep = scalar_weight_bound(&fam, &ScalarSearch::default()).unwrap();
        assert!((rep.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn product_family_order() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.0, 1.0], [1.0, 3.0]]).unwrap();
        let fam = MatrixFamily::new(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(product_family(&fam, 1, &lim()).unwrap(), fam);
        let sq = product_family(&fam, 2, &lim()).unwrap();
        assert_eq!(sq.members(), &[&a * &a, &a * &b, &b * &a, &b * &b]);
    }

    #[test]
    fn refined_bound_fixed_and_scalar() {
        let fam = MatrixFamily::new(rotations()).unwrap();
        let ws = WeightSet::norm_bounded(rotations()).unwrap();
        let lifted = ws.products(2, &lim()).unwrap();
        let rep = refined_bound(&fam, 2, WeightSource::Fixed(&lifted), &lim()).unwrap();
        assert!((rep.value - 1.0).abs() < 1e-12);
        assert!(rep.is_certified());

        let c = MatrixFamily::new(vec![Matrix::scalar(0.6)]).unwrap();
        for q in 1..=3 {
            let ones = WeightSet::scalars(&[1.0]).unwrap().products(q, &lim()).unwrap();
            let rep = refined_bound(&c, q, WeightSource::Fixed(&ones), &lim()).unwrap();
            assert!((rep.value - 0.6).abs() < 1e-12);
        }
    }

    #[test]
    fn complex_embed_cases() {
        let w = Matrix::from_rows(&[[0.3, -0.8], [0.1, 0.5]]).unwrap();
        let t = complex_embed(&w, &Matrix::zeros(2, 2)).unwrap();
        let bd = block_matrix(&[
            vec![w.clone(), Matrix::zeros(2, 2)],
            vec![Matrix::zeros(2, 2), w.clone()],
        ])
        .unwrap();
        assert_eq!(t, bd);
        assert!((linalg::spectral_radius(&t).unwrap() - linalg::spectral_radius(&w).unwrap()).abs() < 1e-12);

        let ti = complex_embed(&Matrix::scalar(0.0), &Matrix::scalar(1.0)).unwrap();
        assert_eq!(ti, r());
        assert!((linalg::spectral_radius(&ti).unwrap() - 1.0).abs() < 1e-15);

        assert!(complex_embed(&Matrix::identity(2), &Matrix::identity(3)).is_err());
    }

    #[test]
    fn weight_set_certificates() {
        let ok = WeightSet::norm_bounded(rotations()).unwrap();
        assert_eq!(ok.certificate(), Certificate::NormBounded);
        assert!(WeightSet::norm_bounded(vec![Matrix::identity(2).scale(1.5)]).is_err());

        // nilpotent with large norm but zero joint spectral radius
        let nil = Matrix::from_rows(&[[0.0, 3.0], [0.0, 0.0]]).unwrap();
        let set = WeightSet::new(vec![nil]).unwrap().certify(4, &lim()).unwrap();
        assert!(matches!(set.certificate(), Certificate::BracketChecked { .. }));

        let big = WeightSet::new(vec![Matrix::identity(2).scale(1.2)])
            .unwrap()
            .certify(4, &lim())
            .unwrap();
        assert_eq!(big.certificate(), Certificate::Unchecked);
    }

    #[test]
    fn report_json_field_names() {
        let rep = BoundReport::new("zhou", 0.5, Validity::Certified).with_witness(Witness::Scalars(vec![1.0, -1.0]));
        let v: serde_json::Value = serde_json::to_value(&rep).unwrap();
        for key in ["name", "value", "certified", "witness", "tolerance"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["certified"], serde_json::Value::Bool(true));
        let back: BoundReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, rep);
    }
}

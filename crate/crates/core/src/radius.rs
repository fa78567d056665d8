//! Upper bounds on the p-radius, the exact formulas where they apply, the
//! Kronecker reduction to the 1-radius, and a product-enumeration bracket on
//! the joint spectral radius.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, checked_dim, kron_power, norm_dm, rho_dm, Limits, Matrix};
use crate::walk::{check_budget, walk_products};

/// Default product length for [`jsr_bracket`].
pub const DEFAULT_JSR_DEPTH: usize = 8;

/// An indexed family `{A_1, …, A_N}` of real `n x n` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFamily {
    members: Vec<Matrix>,
    dim: usize,
}

impl MatrixFamily {
    pub fn new(members: Vec<Matrix>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyFamily)?;
        first.require_square()?;
        let dim = first.rows();
        for (i, m) in members.iter().enumerate() {
            if m.rows() != dim || m.cols() != dim {
                return Err(Error::Shape(format!(
                    "member {i} is {}x{}, expected {dim}x{dim}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        Ok(Self { members, dim })
    }

    pub fn members(&self) -> &[Matrix] {
        &self.members
    }

    pub fn get(&self, i: usize) -> &Matrix {
        &self.members[i]
    }

    /// Number of members `N`.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Common dimension `n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            members: self.members.iter().map(|m| m.scale(c)).collect(),
            dim: self.dim,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.members.iter().all(Matrix::is_nonnegative)
    }

    pub(crate) fn dmatrices(&self) -> Vec<DMatrix<f64>> {
        self.members.iter().map(|m| m.as_dmatrix().clone()).collect()
    }

    /// `N⁻¹ Σ A_i`.
    pub fn average(&self) -> Matrix {
        let mut sum = DMatrix::zeros(self.dim, self.dim);
        for m in &self.members {
            sum += m.as_dmatrix();
        }
        Matrix::from_dmatrix_unchecked(sum / self.len() as f64)
    }
}

impl Serialize for MatrixFamily {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.members.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MatrixFamily {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let members = Vec::<Matrix>::deserialize(deserializer)?;
        MatrixFamily::new(members).map_err(serde::de::Error::custom)
    }
}

/// Enclosure `lower ≤ ρ∞ ≤ upper` obtained from products up to length `depth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusBracket {
    pub lower: f64,
    pub upper: f64,
    pub depth: usize,
}

impl RadiusBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// A value read from a spectral radius together with the Schur residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusEstimate {
    pub value: f64,
    pub residual: f64,
}

fn require_positive(name: &str, value: usize) -> Result<()> {
    if value == 0 {
        Err(Error::InvalidArgument(format!("{name} must be at least 1")))
    } else {
        Ok(())
    }
}

/// Chain-weighted sums `Σ w(P) ‖P‖^p` for every product length `k = 1..=k_max`.
pub(crate) fn mean_norm_powers(
    members: &[DMatrix<f64>],
    transition: Option<&DMatrix<f64>>,
    p: u32,
    k_max: usize,
) -> Vec<f64> {
    let parts = walk_products(
        members,
        transition,
        k_max,
        || vec![0.0; k_max],
        |acc, len, prod, weight| acc[len - 1] += weight * norm_dm(prod).powi(p as i32),
    );
    let mut sums = vec![0.0; k_max];
    for part in parts {
        for (s, v) in sums.iter_mut().zip(part) {
            *s += v;
        }
    }
    sums
}

/// The upper-bound sequence `h_1, …, h_{k_max}` for i.i.d. uniform switching.
pub fn h_sequence(family: &MatrixFamily, p: u32, k_max: usize, limits: &Limits) -> Result<Vec<f64>> {
    require_positive("p", p as usize)?;
    require_positive("k", k_max)?;
    check_budget(limits, family.len(), k_max)?;
    let sums = mean_norm_powers(&family.dmatrices(), None, p, k_max);
    let n = family.len() as f64;
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let k = (i + 1) as f64;
            (s / n.powf(k)).powf(1.0 / (f64::from(p) * k))
        })
        .collect())
}

/// `h_k = (N^{-k} Σ_{i_1..i_k} ‖A_{i_k}⋯A_{i_1}‖^p)^{1/(pk)}`, an upper bound on `ρ_p`.
pub fn h_k(family: &MatrixFamily, p: u32, k: usize, limits: &Limits) -> Result<f64> {
    Ok(*h_sequence(family, p, k, limits)?.last().expect("k >= 1"))
}

fn kron_power_average(family: &MatrixFamily, p: u32, limits: &Limits) -> Result<Matrix> {
    let dim = checked_dim(limits, &vec![family.dim(); p as usize])?;
    let mut sum = DMatrix::zeros(dim, dim);
    for a in family.members() {
        sum += kron_power(a, p, limits)?.into_dmatrix();
    }
    Ok(Matrix::from_dmatrix_unchecked(sum / family.len() as f64))
}

fn average_power_radius(family: &MatrixFamily, p: u32, limits: &Limits) -> Result<RadiusEstimate> {
    let avg = kron_power_average(family, p, limits)?;
    let est = linalg::spectrum(&avg)?;
    Ok(RadiusEstimate {
        value: est.radius.powf(1.0 / f64::from(p)),
        residual: est.residual,
    })
}

/// `ρ(N⁻¹ Σ A_i^{⊗p})^{1/p}`, equal to `ρ_p` for even `p`.
pub fn exact_even_p(family: &MatrixFamily, p: u32, limits: &Limits) -> Result<RadiusEstimate> {
    if p == 0 || !p.is_multiple_of(2) {
        return Err(Error::Precondition(format!("p = {p} is not a positive even integer")));
    }
    average_power_radius(family, p, limits)
}

/// Same formula, certified by invariance of the positive orthant: every member
/// must be entrywise nonnegative.
pub fn exact_invariant_cone(family: &MatrixFamily, p: u32, limits: &Limits) -> Result<RadiusEstimate> {
    require_positive("p", p as usize)?;
    if let Some(i) = family.members().iter().position(|m| !m.is_nonnegative()) {
        return Err(Error::Precondition(format!(
            "member {i} has a negative entry; the positive orthant is not invariant"
        )));
    }
    average_power_radius(family, p, limits)
}

/// `{A_1^{⊗p}, …, A_N^{⊗p}}`, whose 1-radius is `ρ_p(family)^p`.
pub fn lift_p_to_1(family: &MatrixFamily, p: u32, limits: &Limits) -> Result<MatrixFamily> {
    require_positive("p", p as usize)?;
    let members = family
        .members()
        .iter()
        .map(|a| kron_power(a, p, limits))
        .collect::<Result<Vec<_>>>()?;
    MatrixFamily::new(members)
}

/// Running bracket at every depth `1..=depth`.
///
/// At depth `d` the bracket is `max_{k≤d} max_P ρ(P)^{1/k}` below and
/// `min_{k≤d} max_P ‖P‖^{1/k}` above, over all products `P` of length `k`.
pub fn jsr_bracket_trace(family: &MatrixFamily, depth: usize, limits: &Limits) -> Result<Vec<RadiusBracket>> {
    require_positive("depth", depth)?;
    check_budget(limits, family.len(), depth)?;
    let parts = walk_products(
        &family.dmatrices(),
        None,
        depth,
        || Ok((vec![0.0f64; depth], vec![0.0f64; depth])),
        |acc: &mut Result<(Vec<f64>, Vec<f64>)>, len, prod, _| {
            if let Ok((rho_max, norm_max)) = acc {
                match rho_dm(prod) {
                    Ok(r) => rho_max[len - 1] = rho_max[len - 1].max(r),
                    Err(e) => {
                        *acc = Err(e);
                        return;
                    }
                }
                norm_max[len - 1] = norm_max[len - 1].max(norm_dm(prod));
            }
        },
    );
    let mut rho_max = vec![0.0f64; depth];
    let mut norm_max = vec![0.0f64; depth];
    for part in parts {
        let (r, n) = part?;
        for k in 0..depth {
            rho_max[k] = rho_max[k].max(r[k]);
            norm_max[k] = norm_max[k].max(n[k]);
        }
    }
    let mut lower = 0.0f64;
    let mut upper = f64::INFINITY;
    let mut trace = Vec::with_capacity(depth);
    for k in 0..depth {
        let root = 1.0 / (k + 1) as f64;
        lower = lower.max(rho_max[k].powf(root));
        upper = upper.min(norm_max[k].powf(root));
        trace.push(RadiusBracket {
            lower: lower.min(upper),
            upper,
            depth: k + 1,
        });
    }
    Ok(trace)
}

pub fn jsr_bracket(family: &MatrixFamily, depth: usize, limits: &Limits) -> Result<RadiusBracket> {
    Ok(*jsr_bracket_trace(family, depth, limits)?.last().expect("depth >= 1"))
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

    fn rotations() -> MatrixFamily {
        MatrixFamily::new((0..4).map(|k| r().pow(k).unwrap()).collect()).unwrap()
    }

    #[test]
    fn family_validation() {
        assert_eq!(MatrixFamily::new(vec![]), Err(Error::EmptyFamily));
        assert!(MatrixFamily::new(vec![Matrix::identity(2), Matrix::identity(3)]).is_err());
        assert!(MatrixFamily::new(vec![Matrix::zeros(2, 3)]).is_err());
    }

    #[test]
    fn single_member_collapses_to_power_norm() {
        let a = Matrix::from_rows(&[[0.9, 0.4], [-0.3, 0.5]]).unwrap();
        let fam = MatrixFamily::new(vec![a.clone()]).unwrap();
        for k in 1..=5 {
            for p in 1..=3 {
                let expected = linalg::operator_norm(&a.pow(k as u32).unwrap()).powf(1.0 / k as f64);
                let got = h_k(&fam, p, k, &lim()).unwrap();
                assert!((got - expected).abs() < 1e-12, "k={k} p={p}");
            }
        }
    }

    #[test]
    fn rotation_family_has_unit_sequence() {
        let seq = h_sequence(&rotations(), 1, 6, &lim()).unwrap();
        for h in seq {
            assert!((h - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_pair_hand_enumeration() {
        // products of length 2 from {2, 0}: 4, 0, 0, 0
        let fam = MatrixFamily::new(vec![Matrix::scalar(2.0), Matrix::scalar(0.0)]).unwrap();
        assert!((h_k(&fam, 1, 2, &lim()).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn h_k_is_not_monotone_but_halves() {
        // A^2 = 0.01 I, so h_2 = 0.1 while h_3 = ‖A^3‖^(1/3) = 0.01^(1/3)
        let fam = MatrixFamily::new(vec![Matrix::from_rows(&[[0.0, 1.0], [0.01, 0.0]]).unwrap()]).unwrap();
        let h = h_sequence(&fam, 1, 4, &lim()).unwrap();
        assert!((h[1] - 0.1).abs() < 1e-12);
        assert!((h[2] - 0.01f64.cbrt()).abs() < 1e-12);
        assert!(h[2] > h[1]);
        assert!(h[3] <= h[1] + 1e-12 && h[1] <= h[0]);
    }

    #[test]
    fn h_k_budget_is_enforced() {
        let limits = Limits {
            product_budget: 10,
            ..Limits::default()
        };
        let fam = MatrixFamily::new(vec![Matrix::identity(1); 2]).unwrap();
        // 2 + 4 = 6 products fit, 2 + 4 + 8 = 14 do not
        assert!(h_k(&fam, 1, 2, &limits).is_ok());
        assert!(matches!(
            h_k(&fam, 1, 3, &limits),
            Err(Error::BudgetExceeded { count: 14, budget: 10 })
        ));
    }

    #[test]
    fn exact_even_p_cases() {
        let fam = MatrixFamily::new(vec![Matrix::identity(2)]).unwrap();
        assert!((exact_even_p(&fam, 2, &lim()).unwrap().value - 1.0).abs() < 1e-12);

        let scalars = MatrixFamily::new(vec![
            Matrix::scalar(3.0),
            Matrix::scalar(1.0),
            Matrix::scalar(1.0),
            Matrix::scalar(1.0),
        ])
        .unwrap();
        let v = exact_even_p(&scalars, 2, &lim()).unwrap().value;
        assert!((v - 3f64.sqrt()).abs() < 1e-12);

        assert!(matches!(exact_even_p(&fam, 3, &lim()), Err(Error::Precondition(_))));
    }

    #[test]
    fn exact_cone_cases() {
        let fam = MatrixFamily::new(vec![
            Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap(),
            Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0]]).unwrap(),
        ])
        .unwrap();
        assert!((exact_invariant_cone(&fam, 1, &lim()).unwrap().value - 1.5).abs() < 1e-12);

        let id = MatrixFamily::new(vec![Matrix::identity(2)]).unwrap();
        assert!((exact_invariant_cone(&id, 3, &lim()).unwrap().value - 1.0).abs() < 1e-12);

        let cd = MatrixFamily::new(vec![Matrix::scalar(0.3), Matrix::scalar(2.1)]).unwrap();
        assert!((exact_invariant_cone(&cd, 1, &lim()).unwrap().value - 1.2).abs() < 1e-12);

        assert!(matches!(
            exact_invariant_cone(&rotations(), 1, &lim()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn lift_cases() {
        let fam = rotations();
        assert_eq!(lift_p_to_1(&fam, 1, &lim()).unwrap(), fam);
        let single = MatrixFamily::new(vec![r()]).unwrap();
        let lifted = lift_p_to_1(&single, 2, &lim()).unwrap();
        assert_eq!(lifted.get(0), &linalg::kron(&r(), &r(), &lim()).unwrap());
    }

    #[test]
    fn bracket_of_rotation_and_scaled_identity() {
        let b = jsr_bracket(&MatrixFamily::new(vec![r()]).unwrap(), 5, &lim()).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-12 && (b.upper - 1.0).abs() < 1e-12);
        let c = MatrixFamily::new(vec![Matrix::identity(3).scale(-0.7)]).unwrap();
        let b = jsr_bracket(&c, 4, &lim()).unwrap();
        assert!((b.lower - 0.7).abs() < 1e-12 && (b.upper - 0.7).abs() < 1e-12);
    }

    #[test]
    fn bracket_trace_tightens() {
        let fam = MatrixFamily::new(vec![
            Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap(),
            Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0]]).unwrap(),
        ])
        .unwrap();
        let trace = jsr_bracket_trace(&fam, 10, &lim()).unwrap();
        for w in trace.windows(2) {
            assert!(w[1].lower >= w[0].lower && w[1].upper <= w[0].upper);
        }
        // ρ∞ of this pair is the golden ratio
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!(trace.last().unwrap().contains(golden));
    }
}

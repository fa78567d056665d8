#![allow(dead_code)]

use nalgebra::{Complex, DMatrix};
use pradius_core::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::result::Result;

pub const TOL: f64 = 1e-9;

pub fn m2(a: f64, b: f64, c: f64, d: f64) -> Matrix {
    Matrix::from_rows(&[[a, b], [c, d]]).unwrap()
}

pub fn lim() -> Limits {
    Limits::default()
}

pub fn iid_pair() -> MatrixFamily {
    MatrixFamily::new(vec![m2(-0.87, -0.77, 1.17, -1.09), m2(0.14, 0.40, 0.89, -0.73)]).unwrap()
}

pub fn iid_pair_printed_weights() -> Vec<Matrix> {
    vec![m2(-0.71, -0.70, 0.70, -0.71), m2(0.85, -0.53, 0.53, -0.85)]
}

/// Second weight with the sign of its (2,1) entry flipped, which makes it
/// orthogonal.
pub fn iid_pair_corrected_weights() -> Vec<Matrix> {
    vec![m2(-0.71, -0.70, 0.70, -0.71), m2(0.85, -0.53, -0.53, -0.85)]
}

pub fn markov_pair() -> MarkovModel {
    let fam = MatrixFamily::new(vec![m2(0.77, 0.80, -0.60, 0.87), m2(-0.77, 0.83, -0.70, -0.70)]).unwrap();
    MarkovModel::new(fam, m2(0.70, 0.30, 0.43, 0.57)).unwrap()
}

/// Printed grid `[[W11, W12], [W21, W22]]`.
pub fn markov_printed_weights() -> Vec<Vec<Matrix>> {
    vec![
        vec![m2(-0.412, -0.911, 0.911, -0.412), m2(0.839, -0.544, 0.544, -0.839)],
        vec![m2(-0.204, -0.979, 0.979, -0.204), m2(0.937, -0.349, 0.349, -0.937)],
    ]
}

/// `W12` and `W22` read as rotations and the `W11`, `W22` slots swapped.
pub fn markov_corrected_weights() -> Vec<Vec<Matrix>> {
    vec![
        vec![m2(0.937, -0.349, 0.349, 0.937), m2(0.839, -0.544, 0.544, 0.839)],
        vec![m2(-0.204, -0.979, 0.979, -0.204), m2(-0.412, -0.911, 0.911, -0.412)],
    ]
}

pub fn rotations() -> MatrixFamily {
    let r = Matrix::rotation_quarter();
    MatrixFamily::new(vec![
        Matrix::identity(2),
        r.clone(),
        r.pow(2).unwrap(),
        r.pow(3).unwrap(),
    ])
    .unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Matrix {
    let entries = (0..n * n).map(|_| rng.gen_range(-scale..=scale)).collect();
    Matrix::from_row_major(n, n, entries).unwrap()
}

pub fn random_family(rng: &mut ChaCha8Rng, count: usize, n: usize) -> MatrixFamily {
    MatrixFamily::new((0..count).map(|_| random_matrix(rng, n, 1.0)).collect()).unwrap()
}

pub fn random_transition(rng: &mut ChaCha8Rng, states: usize) -> Matrix {
    let mut rows = Vec::new();
    for _ in 0..states {
        let mut row: Vec<f64> = (0..states).map(|_| rng.gen_range(0.0..1.0)).collect();
        if rng.gen_bool(0.2) {
            row[rng.gen_range(0..states)] = 0.0;
        }
        let total: f64 = row.iter().sum();
        if total == 0.0 {
            row[0] = 1.0;
        } else {
            for x in row.iter_mut() {
                *x /= total;
            }
            // push rounding into the largest entry
            let sum: f64 = row.iter().sum();
            let imax = (0..states).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            row[imax] += 1.0 - sum;
        }
        rows.push(row);
    }
    Matrix::from_rows(&rows).unwrap()
}

pub fn random_point(rng: &mut ChaCha8Rng, count: usize, m: usize) -> CayleyPoint {
    CayleyPoint {
        factors: (0..count)
            .map(|_| CayleyFactor {
                skew: (0..m * (m - 1) / 2).map(|_| rng.gen_range(-3.0..=3.0)).collect(),
                signs: (0..m).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect(),
                scales: (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
            })
            .collect(),
    }
}

/// `a ≈ b` relative to `max(1, |a|, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn expect(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---- properties; each returns Err with a description on failure ----

pub fn check_h_monotone(family: &MatrixFamily, p: u32, k_max: usize) -> Result<(), String> {
    let h = h_sequence(family, p, k_max, &lim()).map_err(|e| e.to_string())?;
    for k in 1..h.len() {
        expect(h[k] <= h[k - 1] + TOL, || {
            format!("h_{} = {} > h_{} = {}", k + 1, h[k], k, h[k - 1])
        })?;
    }
    Ok(())
}

/// `h_{2k} ≤ h_k`, which follows from submultiplicativity of the averaged
/// norms.
pub fn check_h_doubling(family: &MatrixFamily, p: u32, k_max: usize) -> Result<(), String> {
    let h = h_sequence(family, p, 2 * k_max, &lim()).map_err(|e| e.to_string())?;
    for k in 1..=k_max {
        let (hk, h2k) = (h[k - 1], h[2 * k - 1]);
        expect(h2k <= hk + TOL, || format!("h_{} = {h2k} > h_{k} = {hk}", 2 * k))?;
    }
    Ok(())
}

pub fn check_markov_h_monotone(model: &MarkovModel, p: u32, k_max: usize) -> Result<(), String> {
    let h = markov_h_sequence(model, p, k_max, &lim()).map_err(|e| e.to_string())?;
    for k in 1..h.len() {
        expect(h[k] <= h[k - 1] + TOL, || {
            format!("markov h_{} = {} > h_{} = {}", k + 1, h[k], k, h[k - 1])
        })?;
    }
    Ok(())
}

/// Every certified lower bound sits below every computed `h_k`.
pub fn check_lower_below_upper(family: &MatrixFamily, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let e = |e: Error| e.to_string();
    let h = h_sequence(family, 1, 6, &lim()).map_err(e)?;
    let h_min = h.iter().copied().fold(f64::INFINITY, f64::min);
    let mut lowers = vec![
        zhou_bound_bracketed(family, 5, &lim()).map_err(e)?,
        scalar_weight_bound(family, &ScalarSearch::with_grid(11)).map_err(e)?,
    ];
    for m in 1..=3 {
        let w = materialize(&random_point(rng, family.len(), m));
        lowers.push(lambda_report(family, &w, &lim()).map_err(e)?);
    }
    let quick = OptimizerConfig {
        restarts: 2,
        max_iters: 15,
        ..OptimizerConfig::default()
    };
    lowers.push(optimize(family, 2, &quick, &lim()).map_err(e)?);
    for l in &lowers {
        expect(l.is_certified(), || format!("{} is not certified", l.name))?;
        expect(l.value <= h_min + TOL * h_min.max(1.0), || {
            format!("{} = {} exceeds min h_k = {h_min}", l.name, l.value)
        })?;
    }
    Ok(())
}

pub fn check_markov_lower_below_upper(model: &MarkovModel, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let e = |e: Error| e.to_string();
    let h = markov_h_sequence(model, 1, 6, &lim()).map_err(e)?;
    let h_min = h.iter().copied().fold(f64::INFINITY, f64::min);
    let n = model.len();
    let mut values = vec![
        markov_scalar_bound(model, &ScalarSearch::with_grid(7))
            .map_err(e)?
            .value,
    ];
    for m in 1..=2 {
        let flat = materialize(&random_point(rng, n * n, m)).weights().to_vec();
        let grid = flat.chunks(n).map(<[Matrix]>::to_vec).collect();
        let w = MarkovWeightSet::norm_bounded(grid).map_err(e)?;
        values.push(markov_lambda(model, &w, &lim()).map_err(e)?);
    }
    for v in values {
        expect(v <= h_min + TOL * h_min.max(1.0), || {
            format!("markov lower {v} exceeds min h_k = {h_min}")
        })?;
    }
    Ok(())
}

/// `h_k({A_i^{⊗p}}, 1) = h_k(𝓜, p)^p`.
pub fn check_lift_identity(family: &MatrixFamily, p: u32) -> Result<(), String> {
    let e = |e: Error| e.to_string();
    let lifted = lift_p_to_1(family, p, &lim()).map_err(e)?;
    let base = h_sequence(family, p, 3, &lim()).map_err(e)?;
    let up = h_sequence(&lifted, 1, 3, &lim()).map_err(e)?;
    for (k, (b, u)) in base.iter().zip(&up).enumerate() {
        expect(close(b.powi(p as i32), *u, 1e-9), || {
            format!("k = {}: h^p = {} vs lifted {u}", k + 1, b.powi(p as i32))
        })?;
    }
    Ok(())
}

pub fn check_omega_lift(model: &MarkovModel, p: u32) -> Result<(), String> {
    let e = |e: Error| e.to_string();
    let lifted = omega_lift(model, p, &lim()).map_err(e)?;
    for k in 1..=3 {
        let mk = markov_h_k(model, p, k, &lim()).map_err(e)?;
        let lk = h_k(&lifted, p, k, &lim()).map_err(e)?;
        expect(close(mk, lk, 1e-9), || format!("k = {k}: markov {mk} vs lifted {lk}"))?;
    }
    Ok(())
}

pub fn check_uniform_factor(family: &MatrixFamily, p: u32) -> Result<(), String> {
    let e = |e: Error| e.to_string();
    let n = family.len() as f64;
    let model = MarkovModel::uniform(family.clone());
    for k in 1..=3 {
        let iid = h_k(family, p, k, &lim()).map_err(e)?;
        let mk = markov_h_k(&model, p, k, &lim()).map_err(e)?;
        let want = n.powf(1.0 / (k as f64 * f64::from(p))) * iid;
        expect(close(mk, want, 1e-9), || format!("k = {k}: {mk} vs {want}"))?;
    }
    Ok(())
}

fn complex(re: &Matrix, im: &Matrix) -> DMatrix<Complex<f64>> {
    DMatrix::from_fn(re.rows(), re.cols(), |i, j| Complex::new(re.get(i, j), im.get(i, j)))
}

fn complex_rho_2x2(w: &DMatrix<Complex<f64>>) -> f64 {
    let t = w[(0, 0)] + w[(1, 1)];
    let d = w[(0, 0)] * w[(1, 1)] - w[(0, 1)] * w[(1, 0)];
    let s = (t * t - d * 4.0).sqrt();
    ((t + s) / 2.0).norm().max(((t - s) / 2.0).norm())
}

/// `T_W` has the spectral radius and norm of `Re W + i Im W`, and
/// `T_{W₁} T_{W₂} = T_{W₁W₂}`.
pub fn check_complex_embed(re1: &Matrix, im1: &Matrix, re2: &Matrix, im2: &Matrix) -> Result<(), String> {
    let e = |e: Error| e.to_string();
    let t1 = complex_embed(re1, im1).map_err(e)?;
    let t2 = complex_embed(re2, im2).map_err(e)?;
    let c1 = complex(re1, im1);
    let c2 = complex(re2, im2);
    let rho_t = spectral_radius(&t1).map_err(e)?;
    let rho_c = complex_rho_2x2(&c1);
    expect(close(rho_t, rho_c, 1e-8), || {
        format!("rho(T_W) = {rho_t}, rho(W) = {rho_c}")
    })?;
    let norm_t = operator_norm(&t1);
    let norm_c = c1.clone().svd(false, false).singular_values.max();
    expect(close(norm_t, norm_c, 1e-9), || {
        format!("|T_W| = {norm_t}, |W| = {norm_c}")
    })?;
    let prod = &c1 * &c2;
    let re = Matrix::from_dmatrix(prod.map(|z| z.re)).map_err(e)?;
    let im = Matrix::from_dmatrix(prod.map(|z| z.im)).map_err(e)?;
    let t12 = complex_embed(&re, &im).map_err(e)?;
    let diff = (&t1 * &t2).max_abs_diff(&t12);
    expect(diff < 1e-12, || format!("T_W1 T_W2 differs from T_(W1 W2) by {diff}"))
}

pub fn check_padding(family: &MatrixFamily, point: &CayleyPoint, extra: usize) -> Result<(), String> {
    let e = |e: Error| e.to_string();
    let w = materialize(point);
    let base = lambda_w(family, &w, &lim()).map_err(e)?;
    let padded = lambda_w(family, &w.padded(w.m() + extra).map_err(e)?, &lim()).map_err(e)?;
    expect(close(base, padded, 1e-9), || {
        format!("lambda {base} vs padded {padded}")
    })
}

/// `λ_𝒲(𝓜)² = λ_{𝒲²}(𝓜²)`.
pub fn check_squaring(family: &MatrixFamily, point: &CayleyPoint) -> Result<(), String> {
    let e = |e: Error| e.to_string();
    let w = materialize(point);
    let base = lambda_w(family, &w, &lim()).map_err(e)?;
    let sq = lambda_w(
        &product_family(family, 2, &lim()).map_err(e)?,
        &w.products(2, &lim()).map_err(e)?,
        &lim(),
    )
    .map_err(e)?;
    expect(close(base * base, sq, 1e-8), || {
        format!("lambda^2 = {} vs {sq}", base * base)
    })
}

pub fn check_orthogonality(point: &CayleyPoint) -> Result<(), String> {
    for (i, f) in point.factors.iter().enumerate() {
        let l = f.orthogonal();
        let m = l.nrows();
        let residual = (l.transpose() * &l - DMatrix::<f64>::identity(m, m)).amax();
        expect(residual <= 1e-9, || format!("factor {i}: |LᵀL - I| = {residual}"))?;
    }
    for (i, w) in materialize(point).weights().iter().enumerate() {
        let norm = operator_norm(w);
        expect(norm <= 1.0 + 1e-9, || format!("weight {i} has norm {norm}"))?;
    }
    Ok(())
}

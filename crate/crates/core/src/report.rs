//! Bound reports for a whole problem: every `h_k`, the exact value where a
//! formula applies, and each lower bound computed independently so one
//! infeasible lift does not hide the others.

use crate::error::{Error, Result};
use crate::linalg::Limits;
use crate::lower::{
    refined_bound, scalar_weight_bound, zhou_bound_bracketed, BoundReport, ScalarSearch, Validity, WeightSource,
};
use crate::markov::{
    exact_report, markov_h_sequence, markov_optimize, markov_scalar_bound, omega_lift, root_report, SwitchedSystem,
};
use crate::optimizer::{self, affordable_depth, OptimizerConfig};
use crate::radius::{h_sequence, lift_p_to_1, MatrixFamily};

/// `h_1, …, h_{k_max}` as reports named `h_k` (or `markov_h_k`) with `k`
/// substituted.
pub fn upper_reports(system: &SwitchedSystem, p: u32, k_max: usize, limits: &Limits) -> Result<Vec<BoundReport>> {
    let (prefix, h) = match system {
        SwitchedSystem::Iid(f) => ("h", h_sequence(f, p, k_max, limits)?),
        SwitchedSystem::Markov(m) => ("markov_h", markov_h_sequence(m, p, k_max, limits)?),
    };
    Ok(h.into_iter()
        .enumerate()
        .map(|(i, v)| BoundReport::new(format!("{prefix}_{}", i + 1), v, Validity::Certified))
        .collect())
}

/// Indices `k` (1-based) with `h_k > h_{k-1}` beyond `tol`.
pub fn increases(h: &[f64], tol: f64) -> Vec<usize> {
    (1..h.len()).filter(|&i| h[i] > h[i - 1] + tol).map(|i| i + 1).collect()
}

/// The p-radius itself, for even `p` or a nonnegative family (Markov
/// systems through the Ω-lift).
pub fn exact_value(system: &SwitchedSystem, p: u32, limits: &Limits) -> Result<BoundReport> {
    let family = match system {
        SwitchedSystem::Iid(f) => f.clone(),
        SwitchedSystem::Markov(m) => omega_lift(m, p, limits)?,
    };
    exact_report(&family, p, limits).unwrap_or_else(|| {
        Err(Error::Precondition(format!(
            "no exact formula for odd p = {p} and a family with negative entries"
        )))
    })
}

/// Which lower bounds [`lower_reports`] computes, and how hard.
#[derive(Debug, Clone)]
pub struct LowerRequest {
    pub zhou: bool,
    pub scalar: bool,
    pub optimize: bool,
    /// Weight size for the optimized bound.
    pub m: usize,
    /// Product length for the refined bound; `1` skips it.
    pub q: u32,
    pub jsr_depth: usize,
    pub scalar_search: ScalarSearch,
    pub optimizer: OptimizerConfig,
    pub limits: Limits,
}

impl Default for LowerRequest {
    fn default() -> Self {
        Self {
            zhou: true,
            scalar: true,
            optimize: true,
            m: 2,
            q: 1,
            jsr_depth: 8,
            scalar_search: ScalarSearch::default(),
            optimizer: OptimizerConfig::default(),
            limits: Limits::default(),
        }
    }
}

/// One entry per requested bound; failures carry the bound's name.
pub type LowerOutcome = std::result::Result<BoundReport, (String, Error)>;

fn push(out: &mut Vec<LowerOutcome>, name: String, r: Result<BoundReport>) {
    out.push(r.map_err(|e| (name, e)));
}

fn iid_bounds(out: &mut Vec<LowerOutcome>, family: &MatrixFamily, root: u32, prefix: &str, req: &LowerRequest) {
    let limits = &req.limits;
    let named = |mut r: BoundReport| {
        r = root_report(r, root);
        r.name = format!("{prefix}{}", r.name);
        r
    };
    if req.zhou {
        let depth = affordable_depth(family.len(), req.jsr_depth, limits);
        push(
            out,
            format!("{prefix}zhou"),
            zhou_bound_bracketed(family, depth, limits).map(named),
        );
    }
    if req.scalar {
        push(
            out,
            format!("{prefix}scalar"),
            scalar_weight_bound(family, &req.scalar_search).map(named),
        );
    }
    if req.optimize {
        let r = optimizer::optimize(family, req.m, &req.optimizer, limits).map(named);
        push(out, format!("{prefix}optimized_m{}", req.m), r);
        if req.q > 1 {
            let source = WeightSource::Optimize {
                m: req.m,
                config: &req.optimizer,
            };
            push(
                out,
                format!("{prefix}refined_q{}", req.q),
                refined_bound(family, req.q, source, limits).map(named),
            );
        }
    }
}

/// Lower bounds on `ρ_p`. For `p > 1` the 1-radius bounds come first (they
/// also bound `ρ_p`), followed by the same bounds on the Kronecker lift with
/// names prefixed `lifted_`.
pub fn lower_reports(system: &SwitchedSystem, p: u32, req: &LowerRequest) -> Vec<LowerOutcome> {
    let limits = &req.limits;
    let mut out = Vec::new();
    match system {
        SwitchedSystem::Iid(f) => iid_bounds(&mut out, f, 1, "", req),
        SwitchedSystem::Markov(m) => {
            if req.scalar {
                push(
                    &mut out,
                    "markov_scalar".into(),
                    markov_scalar_bound(m, &req.scalar_search),
                );
            }
            if req.optimize {
                let r = markov_optimize(m, req.m, &req.optimizer, limits);
                push(&mut out, format!("markov_optimized_m{}", req.m), r);
            }
        }
    }
    if p > 1 {
        let lifted = match system {
            SwitchedSystem::Iid(f) => lift_p_to_1(f, p, limits),
            SwitchedSystem::Markov(m) => omega_lift(m, p, limits).and_then(|f| lift_p_to_1(&f, p, limits)),
        };
        match lifted {
            Ok(f) => iid_bounds(&mut out, &f, p, "lifted_", req),
            Err(e) => out.push(Err(("lifted".into(), e))),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn half() -> SwitchedSystem {
        SwitchedSystem::Iid(MatrixFamily::new(vec![Matrix::identity(2).scale(0.5)]).unwrap())
    }

    #[test]
    fn upper_names_and_values() {
        let r = upper_reports(&half(), 1, 3, &Limits::default()).unwrap();
        let names: Vec<_> = r.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["h_1", "h_2", "h_3"]);
        assert!(r.iter().all(|r| (r.value - 0.5).abs() < 1e-12));
    }

    #[test]
    fn increases_are_one_based() {
        assert_eq!(increases(&[1.0, 0.1, 0.2, 0.1], 1e-12), vec![3]);
        assert!(increases(&[1.0, 1.0], 1e-12).is_empty());
    }

    #[test]
    fn exact_needs_a_formula() {
        let lim = Limits::default();
        assert!((exact_value(&half(), 1, &lim).unwrap().value - 0.5).abs() < 1e-12);
        let neg = SwitchedSystem::Iid(MatrixFamily::new(vec![Matrix::identity(2).scale(-0.5)]).unwrap());
        assert!(matches!(exact_value(&neg, 1, &lim), Err(Error::Precondition(_))));
        assert!((exact_value(&neg, 2, &lim).unwrap().value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lower_failures_do_not_hide_others() {
        let req = LowerRequest {
            limits: Limits {
                dim_cap: 3,
                ..Limits::default()
            },
            ..LowerRequest::default()
        };
        let out = lower_reports(&half(), 2, &req);
        assert!(out.iter().any(|r| r.is_ok()));
        assert!(out
            .iter()
            .any(|r| matches!(r, Err((name, Error::DimensionCap { .. })) if name.starts_with("lifted"))));
    }
}

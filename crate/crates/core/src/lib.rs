//! Bounds on the p-radius (the `L^p`-norm joint spectral radius) of matrix
//! families under i.i.d. uniform or Markov switching.
//!
//! Upper bounds come from averaged product norms `h_k`, lower bounds from
//! spectral radii of Kronecker-weighted averages `λ_W`, and exact values from
//! Kronecker power averages where those apply. A Monte Carlo simulator checks
//! the brackets empirically.

pub mod error;
pub mod linalg;
pub mod lower;
pub mod markov;
pub mod optimizer;
pub mod problem;
pub mod radius;
pub mod report;
pub mod simulate;
mod walk;

pub use error::{Error, Result};
pub use linalg::{kron, kron_power, operator_norm, spectral_radius, Limits, Matrix};
pub use lower::{
    complex_embed, lambda_report, lambda_w, product_family, refined_bound, scalar_weight_bound, zhou_bound,
    zhou_bound_bracketed, BoundReport, Certificate, ScalarSearch, Validity, WeightSet, WeightSource, Witness,
};
pub use markov::{
    markov_h_k, markov_h_sequence, markov_lambda, markov_optimize, markov_scalar_bound, omega_lift, stability_verdict,
    Effort, MarkovModel, MarkovWeightSet, Stability, SwitchedSystem, Verdict,
};
pub use optimizer::{
    materialize, optimize, orthogonal_to_cayley, CayleyFactor, CayleyPoint, OptimizerConfig, RestartTrace,
};
pub use problem::{ProblemError, ProblemFile};
pub use radius::{
    exact_even_p, exact_invariant_cone, h_k, h_sequence, jsr_bracket, jsr_bracket_trace, lift_p_to_1, MatrixFamily,
    RadiusBracket, RadiusEstimate,
};
pub use report::{exact_value, increases, lower_reports, upper_reports, LowerOutcome, LowerRequest};
pub use simulate::{empirical_rate, simulate, RateEstimate, TrajectoryEnsemble};

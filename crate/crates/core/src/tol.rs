//! Numerical tolerances shared across modules.

/// Relative factor for the default eigenvalue clustering tolerance, scaled by `1 + ‖X‖₂`.
pub const CLUSTER_REL: f64 = 1e-8;

/// Membership of a vector in a subdifferential generator description.
pub const SUBGRADIENT_MEMBERSHIP: f64 = 1e-9;

/// Active-set detection, scaled by `1 + ‖x‖∞`.
pub const ACTIVE_SET: f64 = 1e-9;

/// Critical cone test `|dθ(x)(w) − ⟨y,w⟩| ≤ CRITICAL_CONE · (1 + ‖w‖)`.
pub const CRITICAL_CONE: f64 = 1e-8;

/// Fan equality on each eigenvalue block.
pub const FAN_EQUALITY: f64 = 1e-8;

/// Definition-level critical cone test `|dg(X)(H) − ⟨Y,H⟩|`.
pub const CRITICAL_CONE_DEFINITION: f64 = 1e-7;

/// Strict positivity of hull coefficients in the relative-interior test.
pub const GQF_SLACK: f64 = 1e-9;

/// Agreement of successive Richardson estimates for prox directional derivatives.
pub const RICHARDSON_AGREEMENT: f64 = 1e-4;

/// Support of a subgradient on a single eigenvalue block.
pub const BLOCK_SUPPORT: f64 = 1e-9;

/// Asymmetry above which matrix input is reported as symmetrized.
pub const INPUT_ASYMMETRY_WARN: f64 = 1e-10;

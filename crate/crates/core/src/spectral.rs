//! Spectral functions `g = θ∘λ`: values, subgradients, the subderivative
//! chain rule, second subderivatives with curvature correction, critical
//! cones, second semiderivatives and the spectral prox.

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::extreal::ExtReal;
use crate::oracle::{self, ProbeOutcome, QuotientProbe};
use crate::perturb::{eig_dir_derivative, EigDirDeriv};
use crate::symfun::{
    self, theta_gradient, theta_prox, theta_second_semiderivative, theta_subderivative,
    theta_subgradients, theta_value, ProxMethod, SymmetricFunctionSpec, ThetaSecondOrder,
};
use crate::symmat::{block_sort_permutation, eig_default, fan_gap, pinv_shift, BlockPermutation, EigenSystem, SymMatrix};
use crate::tol;

/// `(y, v, Q, Y)`: a subgradient `y ∈ ∂θ(λ(X))`, its blockwise sorted copy
/// `v = Qy`, and `Y = U Diag(y) Uᵀ ∈ ∂g(X)`.
#[derive(Debug, Clone)]
pub struct SubgradientTriple {
    y: Vec<f64>,
    v: Vec<f64>,
    q: BlockPermutation,
    big_y: SymMatrix,
}

impl SubgradientTriple {
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn q(&self) -> &BlockPermutation {
        &self.q
    }

    pub fn big_y(&self) -> &SymMatrix {
        &self.big_y
    }
}

/// Everything computed for one direction `H`.
#[derive(Debug, Clone, Serialize)]
pub struct SecondOrderReport {
    pub direction: SymMatrix,
    pub eig_dir: EigDirDeriv,
    pub dg: f64,
    pub in_critical_cone: bool,
    pub fan_gaps: Vec<f64>,
    pub curvature_correction: f64,
    /// `d²θ(λ(X), v)(λ′(X;H))`.
    pub theta_term: ExtReal,
    /// `theta_term + curvature_correction`, a lower bound for `d²g(X,Y)(H)`.
    pub lower_estimate: ExtReal,
    pub d2: ExtReal,
    pub oracle_d2: Option<ExtReal>,
    pub oracle_gap: Option<f64>,
}

pub fn spectral_value(spec: &SymmetricFunctionSpec, x: &SymMatrix) -> Result<f64> {
    theta_value(spec, &x.eigenvalues())
}

/// `g` as a function of `svec(X)`, for the oracles.
pub fn composite_objective(spec: &SymmetricFunctionSpec, n: usize) -> impl Fn(&[f64]) -> ExtReal + '_ {
    move |p: &[f64]| {
        let m = SymMatrix::from_svec(n, p).expect("svec length matches n");
        match theta_value(spec, &m.eigenvalues()) {
            Ok(v) => ExtReal::Finite(v),
            Err(_) => ExtReal::PosInf,
        }
    }
}

pub fn spectral_subgradient(spec: &SymmetricFunctionSpec, es: &EigenSystem, y: &[f64]) -> Result<SubgradientTriple> {
    check_dim(es.n(), y.len())?;
    let lam = es.snapped_lambda();
    if !theta_subgradients(spec, &lam)?.contains(y, tol::SUBGRADIENT_MEMBERSHIP) {
        return Err(Error::InvalidSubgradient(format!(
            "y is not in ∂θ(λ(X)) for {}",
            spec.label()
        )));
    }
    let (v, q) = block_sort_permutation(y, es)?;
    let big_y = es.lift(y)?;
    Ok(SubgradientTriple {
        y: y.to_vec(),
        v,
        q,
        big_y,
    })
}

/// Chain rule `dg(X)(H) = dθ(λ(X))(λ′(X;H))`.
pub fn spectral_subderivative(spec: &SymmetricFunctionSpec, es: &EigenSystem, h: &SymMatrix) -> Result<f64> {
    let ed = eig_dir_derivative(es, h)?;
    theta_subderivative(spec, &es.snapped_lambda(), &ed.d)
}

/// `2 Σ_m ⟨Diag(y)_{α_m α_m}, U_{α_m}ᵀ H (μ_m I − X)† H U_{α_m}⟩`, with the raw `y`.
pub fn curvature_correction(es: &EigenSystem, y: &[f64], h: &SymMatrix) -> Result<f64> {
    check_dim(es.n(), y.len())?;
    check_dim(es.n(), h.dim())?;
    let w = es.to_eigenbasis(h);
    let mut total = 0.0;
    for (m, b) in es.blocks().iter().enumerate() {
        for j in b.clone() {
            if y[j] == 0.0 {
                continue;
            }
            let mut acc = 0.0;
            for (s, bs) in es.blocks().iter().enumerate() {
                if s == m {
                    continue;
                }
                let inv = 1.0 / (es.mu()[m] - es.mu()[s]);
                for k in bs.clone() {
                    acc += inv * w.get(k, j) * w.get(k, j);
                }
            }
            total += y[j] * acc;
        }
    }
    Ok(2.0 * total)
}

fn block_fan_gaps(es: &EigenSystem, y: &[f64], h: &SymMatrix) -> Result<Vec<f64>> {
    (0..es.block_count())
        .map(|m| {
            let b = &es.blocks()[m];
            fan_gap(&SymMatrix::from_diag(&y[b.clone()]), &es.compress(m, h))
        })
        .collect()
}

/// Critical cone membership through the θ-level cone and Fan equality on every block.
pub fn critical_cone_member(
    spec: &SymmetricFunctionSpec,
    es: &EigenSystem,
    triple: &SubgradientTriple,
    h: &SymMatrix,
) -> Result<bool> {
    let ed = eig_dir_derivative(es, h)?;
    let so = ThetaSecondOrder::new(spec, &es.snapped_lambda(), &triple.v)?;
    if !so.in_critical_cone(&ed.d)? {
        return Ok(false);
    }
    Ok(block_fan_gaps(es, &triple.y, h)?
        .iter()
        .all(|g| *g <= tol::FAN_EQUALITY))
}

/// `dg(X)(H) − ⟨Y,H⟩`; zero exactly on the critical cone.
pub fn critical_cone_definition_gap(
    spec: &SymmetricFunctionSpec,
    es: &EigenSystem,
    triple: &SubgradientTriple,
    h: &SymMatrix,
) -> Result<f64> {
    Ok(spectral_subderivative(spec, es, h)? - triple.big_y.inner(h))
}

/// `d²g(X,Y)(H) = d²θ(λ(X), v)(λ′(X;H)) + curvature correction` on the
/// critical cone and `+∞` off it.
pub fn spectral_second_subderivative(
    spec: &SymmetricFunctionSpec,
    es: &EigenSystem,
    triple: &SubgradientTriple,
    h: &SymMatrix,
) -> Result<SecondOrderReport> {
    let ed = eig_dir_derivative(es, h)?;
    let lam = es.snapped_lambda();
    let so = ThetaSecondOrder::new(spec, &lam, &triple.v)?;
    let dg = theta_subderivative(spec, &lam, &ed.d)?;
    let theta_term = so.eval(&ed.d)?;
    let corr = curvature_correction(es, &triple.y, h)?;
    let fan_gaps = block_fan_gaps(es, &triple.y, h)?;
    let in_critical_cone = theta_term.is_finite() && fan_gaps.iter().all(|g| *g <= tol::FAN_EQUALITY);
    let lower_estimate = theta_term + corr;
    let d2 = if in_critical_cone { lower_estimate } else { ExtReal::PosInf };
    Ok(SecondOrderReport {
        direction: h.clone(),
        eig_dir: ed,
        dg,
        in_critical_cone,
        fan_gaps,
        curvature_correction: corr,
        theta_term,
        lower_estimate,
        d2,
        oracle_d2: None,
        oracle_gap: None,
    })
}

/// Sampled liminf of `Δ²_t g(X,Y)(H)` over `svec` coordinates.
pub fn oracle_second_subderivative(
    spec: &SymmetricFunctionSpec,
    x: &SymMatrix,
    big_y: &SymMatrix,
    h: &SymMatrix,
    probe: &QuotientProbe,
) -> Result<ProbeOutcome> {
    check_dim(x.dim(), big_y.dim())?;
    check_dim(x.dim(), h.dim())?;
    let f = composite_objective(spec, x.dim());
    oracle::numeric_second_subderivative(&f, &x.svec(), &big_y.svec(), &h.svec(), probe)
}

/// Fills `oracle_d2` and `oracle_gap`.
pub fn attach_oracle(
    report: &mut SecondOrderReport,
    spec: &SymmetricFunctionSpec,
    es: &EigenSystem,
    triple: &SubgradientTriple,
    probe: &QuotientProbe,
) -> Result<ProbeOutcome> {
    let out = oracle_second_subderivative(spec, es.x(), &triple.big_y, &report.direction, probe)?;
    report.oracle_d2 = Some(out.estimate);
    report.oracle_gap = match (report.d2, out.estimate) {
        (ExtReal::Finite(a), ExtReal::Finite(b)) => Some((a - b).abs()),
        _ => None,
    };
    Ok(out)
}

/// Second semiderivative at a point where `θ` is differentiable at `λ(X)`,
/// cross-checked against the second subderivative for `Y = ∇g(X)`.
pub fn second_semiderivative(spec: &SymmetricFunctionSpec, es: &EigenSystem, h: &SymMatrix) -> Result<f64> {
    let lam = es.snapped_lambda();
    let grad = theta_gradient(spec, &lam)?;
    let ed = eig_dir_derivative(es, h)?;
    let value = theta_second_semiderivative(spec, &lam, &ed.d)? + curvature_correction(es, &grad, h)?;
    let triple = spectral_subgradient(spec, es, &grad)?;
    let via_subderivative = spectral_second_subderivative(spec, es, &triple, h)?.d2;
    match via_subderivative {
        ExtReal::Finite(v) if (v - value).abs() <= 1e-9 * (1.0 + value.abs()) => Ok(value),
        other => Err(Error::Inconsistent(format!(
            "second semiderivative {value} disagrees with second subderivative {other}"
        ))),
    }
}

/// `2⟨Y, H(μ_b I − X)†H⟩` on the critical cone of `λ_i` for the leading
/// index `i` of block `b` (0-based), `+∞` off it.
pub fn leading_eig_second_subderivative(
    es: &EigenSystem,
    block: usize,
    triple: &SubgradientTriple,
    h: &SymMatrix,
) -> Result<ExtReal> {
    if block >= es.block_count() {
        return Err(Error::IndexOutOfRange {
            index: block + 1,
            len: es.block_count(),
        });
    }
    check_dim(es.n(), h.dim())?;
    let b = es.blocks()[block].clone();
    if triple
        .y
        .iter()
        .enumerate()
        .any(|(j, yj)| !b.contains(&j) && yj.abs() > tol::BLOCK_SUPPORT)
    {
        return Err(Error::unsupported(
            "leading eigenvalue hypothesis violated: Y is not supported on the chosen block",
        ));
    }
    let spec = SymmetricFunctionSpec::order_stat(b.start + 1)?;
    if !critical_cone_member(&spec, es, triple, h)? {
        return Ok(ExtReal::PosInf);
    }
    let p = pinv_shift(es, block)?;
    let hph = h.as_matrix() * p.as_matrix() * h.as_matrix();
    Ok(ExtReal::Finite(2.0 * triple.big_y.as_matrix().dot(&hph)))
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralProx {
    pub matrix: SymMatrix,
    pub eigenvalues: Vec<f64>,
    pub method: ProxMethod,
}

/// `U Diag(prox_{γθ}(λ(X))) Uᵀ`.
pub fn spectral_prox(spec: &SymmetricFunctionSpec, gamma: f64, x: &SymMatrix) -> Result<SpectralProx> {
    let es = eig_default(x)?;
    let p = theta_prox(spec, gamma, es.lambda())?;
    Ok(SpectralProx {
        matrix: es.lift(&p.point)?,
        eigenvalues: p.point,
        method: p.method,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProxDirectional {
    pub derivative: SymMatrix,
    pub converged: bool,
    /// Max-abs differences between successive Richardson estimates.
    pub increments: Vec<f64>,
}

/// One-sided directional derivative of the spectral prox at `X` along `D`,
/// via Richardson step halving `2Q(t/2) − Q(t)` for `t ∈ {1e−3, 1e−4, 1e−5}`.
pub fn prox_directional_derivative(
    spec: &SymmetricFunctionSpec,
    gamma: f64,
    x: &SymMatrix,
    d: &SymMatrix,
) -> Result<ProxDirectional> {
    check_dim(x.dim(), d.dim())?;
    let base = spectral_prox(spec, gamma, x)?.matrix;
    let quotient = |t: f64| -> Result<SymMatrix> {
        let moved = spectral_prox(spec, gamma, &x.axpy(t, d))?.matrix;
        Ok(moved.sub(&base).scale(1.0 / t))
    };
    let mut estimates = Vec::new();
    for t in [1e-3, 1e-4, 1e-5] {
        let full = quotient(t)?;
        let half = quotient(0.5 * t)?;
        estimates.push(half.scale(2.0).sub(&full));
    }
    let increments: Vec<f64> = estimates.windows(2).map(|p| p[1].sub(&p[0]).max_abs()).collect();
    let converged = increments.iter().all(|e| *e <= tol::RICHARDSON_AGREEMENT);
    Ok(ProxDirectional {
        derivative: estimates.pop().expect("three estimates"),
        converged,
        increments,
    })
}

/// Re-exported for callers working on eigenvalue vectors.
pub use symfun::theta_second_subderivative;

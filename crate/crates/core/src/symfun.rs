//! Symmetric functions `θ : Rⁿ → R` with their first- and second-order
//! variational objects: order statistic, MCP sum, largest sorted gap and a
//! smooth separable quadratic.

use std::cmp::Ordering;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::extreal::ExtReal;
use crate::oracle::{self, ProxSearch};
use crate::tol;

/// The four shipped symmetric functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaKind {
    /// `φ_i(x)`: the i-th largest entry (1-based).
    OrderStat { i: usize },
    /// `Σ φ(x_j)`, `φ(t) = c|t| − t²/(2a)` for `|t| ≤ ac`, else `ac²/2`.
    Mcp { a: f64, c: f64 },
    /// Largest adjacent gap of `x` sorted nonincreasingly.
    EigGap,
    /// `Σ coeff · x_j² / 2`.
    SmoothSep { coeff: f64 },
}

/// A validated symmetric function. JSON form:
/// `{"name":"order_stat","i":1}`, `{"name":"mcp","a":2,"c":1}`,
/// `{"name":"eig_gap"}`, `{"name":"smooth_sep","coeffs":1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct SymmetricFunctionSpec {
    kind: ThetaKind,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
enum RawSpec {
    OrderStat { i: usize },
    Mcp { a: f64, c: f64 },
    EigGap,
    SmoothSep { coeffs: Coeffs },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Coeffs {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl TryFrom<RawSpec> for SymmetricFunctionSpec {
    type Error = Error;
    fn try_from(raw: RawSpec) -> Result<Self> {
        match raw {
            RawSpec::OrderStat { i } => Self::order_stat(i),
            RawSpec::Mcp { a, c } => Self::mcp(a, c),
            RawSpec::EigGap => Ok(Self::eig_gap()),
            RawSpec::SmoothSep { coeffs: Coeffs::Scalar(c) } => Self::smooth_sep(c),
            RawSpec::SmoothSep { coeffs: Coeffs::Vector(v) } => {
                let first = *v.first().ok_or_else(|| Error::param("empty coeffs"))?;
                if v.iter().any(|c| *c != first) {
                    return Err(Error::param(
                        "smooth_sep coeffs must be uniform, otherwise θ is not symmetric",
                    ));
                }
                Self::smooth_sep(first)
            }
        }
    }
}

impl From<SymmetricFunctionSpec> for RawSpec {
    fn from(s: SymmetricFunctionSpec) -> RawSpec {
        match s.kind {
            ThetaKind::OrderStat { i } => RawSpec::OrderStat { i },
            ThetaKind::Mcp { a, c } => RawSpec::Mcp { a, c },
            ThetaKind::EigGap => RawSpec::EigGap,
            ThetaKind::SmoothSep { coeff } => RawSpec::SmoothSep {
                coeffs: Coeffs::Scalar(coeff),
            },
        }
    }
}

impl SymmetricFunctionSpec {
    pub fn order_stat(i: usize) -> Result<Self> {
        if i == 0 {
            return Err(Error::param("order statistic index is 1-based"));
        }
        Ok(Self { kind: ThetaKind::OrderStat { i } })
    }

    pub fn mcp(a: f64, c: f64) -> Result<Self> {
        if !(a.is_finite() && a > 1.0) {
            return Err(Error::param(format!("MCP requires a > 1, got {a}")));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::param(format!("MCP requires c > 0, got {c}")));
        }
        Ok(Self { kind: ThetaKind::Mcp { a, c } })
    }

    pub fn eig_gap() -> Self {
        Self { kind: ThetaKind::EigGap }
    }

    pub fn smooth_sep(coeff: f64) -> Result<Self> {
        if !coeff.is_finite() {
            return Err(Error::NotFinite("smooth_sep coefficient"));
        }
        Ok(Self { kind: ThetaKind::SmoothSep { coeff } })
    }

    pub fn kind(&self) -> ThetaKind {
        self.kind
    }

    pub fn is_polyhedral(&self) -> bool {
        matches!(self.kind, ThetaKind::OrderStat { .. } | ThetaKind::EigGap)
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            ThetaKind::OrderStat { .. } => "order_stat",
            ThetaKind::Mcp { .. } => "mcp",
            ThetaKind::EigGap => "eig_gap",
            ThetaKind::SmoothSep { .. } => "smooth_sep",
        }
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        match self.kind {
            ThetaKind::OrderStat { i } if i > n => Err(Error::IndexOutOfRange { index: i, len: n }),
            ThetaKind::EigGap if n < 2 => Err(Error::param("eig_gap needs dimension at least 2")),
            _ => Ok(()),
        }
    }
}

/// Generator description of `∂θ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Subdifferential {
    Singleton { point: Vec<f64> },
    /// Product of intervals `[lower_j, upper_j]`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Convex hull of linearly independent vertices.
    Hull { vertices: Vec<Vec<f64>> },
}

impl Subdifferential {
    pub fn dim(&self) -> usize {
        match self {
            Subdifferential::Singleton { point } => point.len(),
            Subdifferential::Box { lower, .. } => lower.len(),
            Subdifferential::Hull { vertices } => vertices[0].len(),
        }
    }

    /// Default element: the first listed vertex, or the lower corner of a box.
    pub fn canonical_element(&self) -> Vec<f64> {
        match self {
            Subdifferential::Singleton { point } => point.clone(),
            Subdifferential::Box { lower, .. } => lower.clone(),
            Subdifferential::Hull { vertices } => vertices[0].clone(),
        }
    }

    /// Barycentric coefficients of `y` and the least-squares residual norm.
    /// Only meaningful for hulls; other variants return `None`.
    pub fn hull_coefficients(&self, y: &[f64]) -> Option<(Vec<f64>, f64)> {
        let Subdifferential::Hull { vertices } = self else {
            return None;
        };
        let n = y.len();
        let k = vertices.len();
        let v = DMatrix::from_fn(n, k, |i, j| vertices[j][i]);
        let yv = DVector::from_column_slice(y);
        let gram = v.transpose() * &v;
        let rhs = v.transpose() * &yv;
        let coef = gram.lu().solve(&rhs)?;
        let resid = (&v * &coef - yv).norm();
        Some((coef.iter().copied().collect(), resid))
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        if y.len() != self.dim() {
            return false;
        }
        match self {
            Subdifferential::Singleton { point } => {
                point.iter().zip(y).all(|(p, q)| (p - q).abs() <= tol)
            }
            Subdifferential::Box { lower, upper } => y
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(q, (lo, hi))| *q >= lo - tol && *q <= hi + tol),
            Subdifferential::Hull { .. } => {
                let (coef, resid) = match self.hull_coefficients(y) {
                    Some(r) => r,
                    None => return false,
                };
                let sum: f64 = coef.iter().sum();
                resid <= tol && (sum - 1.0).abs() <= tol && coef.iter().all(|c| *c >= -tol)
            }
        }
    }

    /// Euclidean distance from `y` to the set. Hull distances are computed
    /// by accelerated projected gradient on barycentric weights.
    pub fn distance(&self, y: &[f64]) -> f64 {
        match self {
            Subdifferential::Singleton { point } => norm(&sub(y, point)),
            Subdifferential::Box { lower, upper } => y
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(q, (lo, hi))| {
                    let d = q - q.clamp(*lo, *hi);
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            Subdifferential::Hull { vertices } => hull_distance(vertices, y),
        }
    }
}

fn hull_distance(vertices: &[Vec<f64>], y: &[f64]) -> f64 {
    let shifted: Vec<Vec<f64>> = vertices.iter().map(|v| sub(v, y)).collect();
    norm(&min_norm_in_hull(&shifted, 20_000))
}

/// Minimum-norm point of `conv{points}` by accelerated projected gradient on
/// barycentric weights.
pub(crate) fn min_norm_in_hull(points: &[Vec<f64>], iters: usize) -> Vec<f64> {
    let k = points.len();
    let n = points[0].len();
    let v = DMatrix::from_fn(n, k, |i, j| points[j][i]);
    let gram = v.transpose() * &v;
    let lip = gram.norm().max(1e-300);
    let mut w = DVector::from_element(k, 1.0 / k as f64);
    let mut z = w.clone();
    let mut tk = 1.0f64;
    for _ in 0..iters {
        let grad = &gram * &z;
        let w_next = project_simplex(&(&z - grad / lip));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        z = &w_next + (&w_next - &w) * ((tk - 1.0) / t_next);
        w = w_next;
        tk = t_next;
    }
    (&v * &w).iter().copied().collect()
}

fn project_simplex(u: &DVector<f64>) -> DVector<f64> {
    let mut s: Vec<f64> = u.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut shift = 0.0;
    for (j, sj) in s.iter().enumerate() {
        cum += sj;
        let cand = (cum - 1.0) / (j as f64 + 1.0);
        if sj - cand > 0.0 {
            shift = cand;
        }
    }
    u.map(|v| (v - shift).max(0.0))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Active-set tolerance at `x`.
pub fn active_tol(x: &[f64]) -> f64 {
    tol::ACTIVE_SET * (1.0 + max_abs(x))
}

/// Stable ordering of indices by nonincreasing value.
fn desc_order(x: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[j].total_cmp(&x[i]));
    idx
}

/// Maximal runs of (numerically) equal consecutive values in a sorted vector.
fn tie_groups(sorted: &[f64], tol: f64) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..sorted.len() {
        if sorted[k - 1] - sorted[k] > tol {
            out.push(start..k);
            start = k;
        }
    }
    out.push(start..sorted.len());
    out
}

fn order_stat_active(i: usize, x: &[f64]) -> Result<Vec<usize>> {
    let order = desc_order(x);
    let phi = x[order[i - 1]];
    let tol = active_tol(x);
    if i > 1 && x[order[i - 2]] - phi <= tol {
        return Err(Error::unsupported(format!(
            "ORDER_STAT leading hypothesis violated: φ_{}(x) = φ_{}(x)",
            i - 1,
            i
        )));
    }
    Ok((0..x.len()).filter(|&j| (x[j] - phi).abs() <= tol).collect())
}

struct GapLocal {
    order: Vec<usize>,
    groups: Vec<Range<usize>>,
    /// Sorted positions `k` whose gap `x_(k) − x_(k+1)` attains the maximum.
    active: Vec<usize>,
}

impl GapLocal {
    fn new(x: &[f64]) -> Self {
        let order = desc_order(x);
        let sorted: Vec<f64> = order.iter().map(|&j| x[j]).collect();
        let tol = active_tol(x);
        let groups = tie_groups(&sorted, tol);
        let gaps: Vec<f64> = sorted.windows(2).map(|w| w[0] - w[1]).collect();
        let big = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let active = (0..gaps.len()).filter(|&k| gaps[k] >= big - tol).collect();
        GapLocal { order, groups, active }
    }

    fn is_singleton(&self, pos: usize) -> bool {
        self.groups.iter().any(|g| g.start == pos && g.len() == 1)
    }

    fn check_supported(&self) -> Result<()> {
        for &k in &self.active {
            if !(self.is_singleton(k) && self.is_singleton(k + 1)) {
                return Err(Error::unsupported(
                    "EIG_GAP_MAX hypothesis violated: an active gap has a tied endpoint",
                ));
            }
        }
        Ok(())
    }

    fn vertex(&self, k: usize, n: usize) -> Vec<f64> {
        let mut e = vec![0.0; n];
        e[self.order[k]] = 1.0;
        e[self.order[k + 1]] = -1.0;
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum McpClass {
    Zero,
    Inner,
    Outer,
    OuterKink,
}

fn mcp_class(t: f64, a: f64, c: f64, tol: f64) -> McpClass {
    let r = t.abs();
    if r <= tol {
        McpClass::Zero
    } else if (r - a * c).abs() <= tol {
        McpClass::OuterKink
    } else if r < a * c {
        McpClass::Inner
    } else {
        McpClass::Outer
    }
}

/// Scalar MCP penalty.
pub fn mcp_phi(t: f64, a: f64, c: f64) -> f64 {
    let r = t.abs();
    if r <= a * c {
        c * r - r * r / (2.0 * a)
    } else {
        a * c * c / 2.0
    }
}

/// Derivative of the scalar MCP penalty away from `t = 0`.
fn mcp_dphi(t: f64, a: f64, c: f64) -> f64 {
    let r = t.abs();
    if r <= a * c {
        t.signum() * (c - r / a)
    } else {
        0.0
    }
}

/// Closed-form scalar MCP prox for `0 < γ < a`.
pub fn mcp_prox_scalar(x: f64, a: f64, c: f64, gamma: f64) -> f64 {
    let r = x.abs();
    if r <= gamma * c {
        0.0
    } else if r <= a * c {
        x.signum() * a / (a - gamma) * (r - gamma * c)
    } else {
        x
    }
}

pub fn theta_value(spec: &SymmetricFunctionSpec, x: &[f64]) -> Result<f64> {
    spec.check_dim(x.len())?;
    check_finite(x, "θ argument")?;
    Ok(match spec.kind {
        ThetaKind::OrderStat { i } => {
            let mut s = x.to_vec();
            s.sort_by(|a, b| b.total_cmp(a));
            s[i - 1]
        }
        ThetaKind::Mcp { a, c } => x.iter().map(|t| mcp_phi(*t, a, c)).sum(),
        ThetaKind::EigGap => {
            let mut s = x.to_vec();
            s.sort_by(|a, b| b.total_cmp(a));
            s.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max)
        }
        ThetaKind::SmoothSep { coeff } => 0.5 * coeff * dot(x, x),
    })
}

pub fn theta_subgradients(spec: &SymmetricFunctionSpec, x: &[f64]) -> Result<Subdifferential> {
    spec.check_dim(x.len())?;
    check_finite(x, "θ argument")?;
    let n = x.len();
    Ok(match spec.kind {
        ThetaKind::OrderStat { i } => {
            let active = order_stat_active(i, x)?;
            let vertices = active
                .into_iter()
                .map(|j| {
                    let mut e = vec![0.0; n];
                    e[j] = 1.0;
                    e
                })
                .collect();
            Subdifferential::Hull { vertices }
        }
        ThetaKind::Mcp { a, c } => {
            let tol = active_tol(x);
            let mut lower = Vec::with_capacity(n);
            let mut upper = Vec::with_capacity(n);
            for &t in x {
                if mcp_class(t, a, c, tol) == McpClass::Zero {
                    lower.push(-c);
                    upper.push(c);
                } else {
                    let d = mcp_dphi(t, a, c);
                    lower.push(d);
                    upper.push(d);
                }
            }
            Subdifferential::Box { lower, upper }
        }
        ThetaKind::EigGap => {
            let local = GapLocal::new(x);
            local.check_supported()?;
            let vertices = local.active.iter().map(|&k| local.vertex(k, n)).collect();
            Subdifferential::Hull { vertices }
        }
        ThetaKind::SmoothSep { coeff } => Subdifferential::Singleton {
            point: x.iter().map(|t| coeff * t).collect(),
        },
    })
}

/// Directional derivative `dθ(x)(w)`.
pub fn theta_subderivative(spec: &SymmetricFunctionSpec, x: &[f64], w: &[f64]) -> Result<f64> {
    spec.check_dim(x.len())?;
    check_dim(x.len(), w.len())?;
    check_finite(x, "θ argument")?;
    check_finite(w, "direction")?;
    Ok(match spec.kind {
        ThetaKind::OrderStat { i } => order_stat_active(i, x)?
            .into_iter()
            .map(|j| w[j])
            .fold(f64::NEG_INFINITY, f64::max),
        ThetaKind::Mcp { a, c } => {
            let tol = active_tol(x);
            x.iter()
                .zip(w)
                .map(|(&t, &wj)| match mcp_class(t, a, c, tol) {
                    McpClass::Zero => c * wj.abs(),
                    _ => mcp_dphi(t, a, c) * wj,
                })
                .sum()
        }
        ThetaKind::EigGap => {
            // within ties the perturbed order follows w
            let local = GapLocal::new(x);
            let mut ws: Vec<f64> = local.order.iter().map(|&j| w[j]).collect();
            for g in &local.groups {
                ws[g.clone()].sort_by(|a, b| b.total_cmp(a));
            }
            local
                .active
                .iter()
                .map(|&k| ws[k] - ws[k + 1])
                .fold(f64::NEG_INFINITY, f64::max)
        }
        ThetaKind::SmoothSep { coeff } => coeff * dot(x, w),
    })
}

/// Critical cone test `|dθ(x)(w) − ⟨y,w⟩| ≤ 1e−8·(1+‖w‖)`.
pub fn theta_critical_cone_member(
    spec: &SymmetricFunctionSpec,
    x: &[f64],
    y: &[f64],
    w: &[f64],
) -> Result<bool> {
    ThetaSecondOrder::new(spec, x, y)?.in_critical_cone(w)
}

/// `d²θ(x, y)(w)`.
pub fn theta_second_subderivative(
    spec: &SymmetricFunctionSpec,
    x: &[f64],
    y: &[f64],
    w: &[f64],
) -> Result<ExtReal> {
    ThetaSecondOrder::new(spec, x, y)?.eval(w)
}

/// Second-order model of `θ` at `x` for the subgradient `y`, validated once.
#[derive(Debug, Clone)]
pub struct ThetaSecondOrder {
    spec: SymmetricFunctionSpec,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl ThetaSecondOrder {
    pub fn new(spec: &SymmetricFunctionSpec, x: &[f64], y: &[f64]) -> Result<Self> {
        check_dim(x.len(), y.len())?;
        check_finite(y, "subgradient")?;
        let sd = theta_subgradients(spec, x)?;
        if !sd.contains(y, tol::SUBGRADIENT_MEMBERSHIP) {
            return Err(Error::InvalidSubgradient(format!(
                "y is not in ∂θ(x) for {}",
                spec.label()
            )));
        }
        if let ThetaKind::Mcp { a, c } = spec.kind {
            let tol = active_tol(x);
            if x.iter().any(|&t| mcp_class(t, a, c, tol) == McpClass::OuterKink) {
                return Err(Error::unsupported(
                    "MCP second-order hypothesis violated: |x_j| = ac",
                ));
            }
        }
        Ok(Self {
            spec: spec.clone(),
            x: x.to_vec(),
            y: y.to_vec(),
        })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// `dθ(x)(w) − ⟨y,w⟩`, nonnegative up to rounding.
    pub fn cone_gap(&self, w: &[f64]) -> Result<f64> {
        Ok(theta_subderivative(&self.spec, &self.x, w)? - dot(&self.y, w))
    }

    pub fn in_critical_cone(&self, w: &[f64]) -> Result<bool> {
        Ok(self.cone_gap(w)?.abs() <= tol::CRITICAL_CONE * (1.0 + norm(w)))
    }

    pub fn eval(&self, w: &[f64]) -> Result<ExtReal> {
        if !self.in_critical_cone(w)? {
            return Ok(ExtReal::PosInf);
        }
        Ok(ExtReal::Finite(self.quadratic_part(w)))
    }

    /// Finite part of `d²θ(x,y)(w)` on the critical cone.
    fn quadratic_part(&self, w: &[f64]) -> f64 {
        match self.spec.kind {
            ThetaKind::OrderStat { .. } | ThetaKind::EigGap => 0.0,
            ThetaKind::Mcp { a, c } => {
                let tol = active_tol(&self.x);
                self.x
                    .iter()
                    .zip(w)
                    .map(|(&t, &wj)| match mcp_class(t, a, c, tol) {
                        McpClass::Zero | McpClass::Inner => -wj * wj / a,
                        _ => 0.0,
                    })
                    .sum()
            }
            ThetaKind::SmoothSep { coeff } => coeff * dot(w, w),
        }
    }
}

/// Gradient of `θ` at points where it is differentiable with a locally
/// quadratic (or affine) expansion.
pub fn theta_gradient(spec: &SymmetricFunctionSpec, x: &[f64]) -> Result<Vec<f64>> {
    let not_smooth = || Error::unsupported(format!("{} is not differentiable at this point", spec.label()));
    match spec.kind {
        ThetaKind::Mcp { a, c } => {
            spec.check_dim(x.len())?;
            check_finite(x, "θ argument")?;
            let tol = active_tol(x);
            if x.iter().any(|&t| matches!(mcp_class(t, a, c, tol), McpClass::Zero | McpClass::OuterKink)) {
                return Err(Error::unsupported(
                    "MCP second semiderivative needs every |x_j| ∉ {0, ac}",
                ));
            }
            Ok(x.iter().map(|&t| mcp_dphi(t, a, c)).collect())
        }
        _ => match theta_subgradients(spec, x)? {
            Subdifferential::Singleton { point } => Ok(point),
            Subdifferential::Hull { vertices } if vertices.len() == 1 => Ok(vertices[0].clone()),
            _ => Err(not_smooth()),
        },
    }
}

/// `d²θ(x)(w)` at a point where [`theta_gradient`] exists.
pub fn theta_second_semiderivative(spec: &SymmetricFunctionSpec, x: &[f64], w: &[f64]) -> Result<f64> {
    let grad = theta_gradient(spec, x)?;
    ThetaSecondOrder::new(spec, x, &grad).map(|s| s.quadratic_part(w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxMethod {
    ClosedForm,
    OracleFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxResult {
    pub point: Vec<f64>,
    pub method: ProxMethod,
}

/// `prox_{γθ}(x)`. MCP requires `γ < a`; SMOOTH_SEP requires `1 + γ·coeff > 0`.
pub fn theta_prox(spec: &SymmetricFunctionSpec, gamma: f64, x: &[f64]) -> Result<ProxResult> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::param("gamma must be positive"));
    }
    spec.check_dim(x.len())?;
    check_finite(x, "prox argument")?;
    match spec.kind {
        ThetaKind::Mcp { a, c } => {
            if gamma >= a {
                return Err(Error::param(format!("MCP prox needs gamma < a = {a}, got {gamma}")));
            }
            Ok(ProxResult {
                point: x.iter().map(|&t| mcp_prox_scalar(t, a, c, gamma)).collect(),
                method: ProxMethod::ClosedForm,
            })
        }
        ThetaKind::SmoothSep { coeff } => {
            let s = 1.0 + gamma * coeff;
            if s <= 0.0 {
                return Err(Error::param("smooth_sep prox needs 1 + gamma·coeff > 0"));
            }
            Ok(ProxResult {
                point: x.iter().map(|t| t / s).collect(),
                method: ProxMethod::ClosedForm,
            })
        }
        ThetaKind::OrderStat { .. } | ThetaKind::EigGap => {
            let f = |z: &[f64]| ExtReal::Finite(theta_value(spec, z).expect("validated dimension"));
            let found = oracle::numeric_prox(&f, gamma, x, &ProxSearch::default())?;
            Ok(ProxResult {
                point: found.point,
                method: ProxMethod::OracleFallback,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GqfCertificate {
    pub is_gqf: bool,
    /// Orthonormal basis of `C_θ(x,y)` when `is_gqf`.
    pub subspace_basis: Option<Vec<Vec<f64>>>,
    /// Barycentric coefficients of `y` over the active generators.
    pub coefficients: Vec<f64>,
}

/// Relative-interior test for polyhedral `θ`: `y ∈ ri ∂θ(x)` makes `d²θ(x,y)`
/// the indicator of the subspace orthogonal to all generator differences.
pub fn theta_gqf_certificate(spec: &SymmetricFunctionSpec, x: &[f64], y: &[f64]) -> Result<GqfCertificate> {
    if !spec.is_polyhedral() {
        return Err(Error::unsupported(format!(
            "GQF certificate is only available for polyhedral θ, not {}",
            spec.label()
        )));
    }
    ThetaSecondOrder::new(spec, x, y)?;
    let sd = theta_subgradients(spec, x)?;
    let Subdifferential::Hull { vertices } = &sd else {
        return Err(Error::Inconsistent("polyhedral θ without hull description".into()));
    };
    let (coefficients, _) = sd
        .hull_coefficients(y)
        .ok_or_else(|| Error::Inconsistent("singular generator Gram matrix".into()))?;
    let is_gqf = coefficients.iter().all(|c| *c >= tol::GQF_SLACK);
    if !is_gqf {
        return Ok(GqfCertificate {
            is_gqf,
            subspace_basis: None,
            coefficients,
        });
    }
    let n = x.len();
    let k = vertices.len();
    let mut rows = DMatrix::zeros(k.saturating_sub(1).max(1), n);
    for r in 1..k {
        for j in 0..n {
            rows[(r - 1, j)] = vertices[r][j] - vertices[0][j];
        }
    }
    let gram = rows.transpose() * &rows;
    let se = gram.symmetric_eigen();
    let mut basis: Vec<(f64, Vec<f64>)> = (0..n)
        .filter(|&j| se.eigenvalues[j].abs() <= 1e-10)
        .map(|j| (se.eigenvalues[j], se.eigenvectors.column(j).iter().copied().collect()))
        .collect();
    basis.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    Ok(GqfCertificate {
        is_gqf,
        subspace_basis: Some(basis.into_iter().map(|(_, v)| v).collect()),
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(i: usize) -> SymmetricFunctionSpec {
        SymmetricFunctionSpec::order_stat(i).unwrap()
    }

    fn mcp21() -> SymmetricFunctionSpec {
        SymmetricFunctionSpec::mcp(2.0, 1.0).unwrap()
    }

    #[test]
    fn values() {
        assert_eq!(theta_value(&mcp21(), &[3.0, 0.0]).unwrap(), 1.0);
        assert_eq!(theta_value(&os(2), &[5.0, 1.0, 4.0]).unwrap(), 4.0);
        assert_eq!(theta_value(&SymmetricFunctionSpec::eig_gap(), &[4.0, 1.0, 0.0]).unwrap(), 3.0);
        assert_eq!(theta_value(&SymmetricFunctionSpec::eig_gap(), &[0.0, 4.0, 1.0]).unwrap(), 3.0);
        assert!(theta_value(&os(4), &[1.0, 2.0]).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(SymmetricFunctionSpec::mcp(1.0, 1.0).is_err());
        assert!(SymmetricFunctionSpec::mcp(2.0, 0.0).is_err());
        assert!(SymmetricFunctionSpec::order_stat(0).is_err());
        assert!(serde_json::from_str::<SymmetricFunctionSpec>(r#"{"name":"mcp","a":0.5,"c":1}"#).is_err());
        assert!(serde_json::from_str::<SymmetricFunctionSpec>(r#"{"name":"smooth_sep","coeffs":[1,2]}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        for s in [
            r#"{"name":"order_stat","i":2}"#,
            r#"{"name":"mcp","a":2.0,"c":1.0}"#,
            r#"{"name":"eig_gap"}"#,
            r#"{"name":"smooth_sep","coeffs":1.5}"#,
        ] {
            let spec: SymmetricFunctionSpec = serde_json::from_str(s).unwrap();
            assert_eq!(serde_json::to_string(&spec).unwrap(), s);
        }
        let spec: SymmetricFunctionSpec =
            serde_json::from_str(r#"{"name":"smooth_sep","coeffs":[1,1,1]}"#).unwrap();
        assert_eq!(spec.kind(), ThetaKind::SmoothSep { coeff: 1.0 });
    }

    #[test]
    fn order_stat_subgradients() {
        let sd = theta_subgradients(&os(1), &[2.0, 2.0, 0.0]).unwrap();
        assert_eq!(
            sd,
            Subdifferential::Hull {
                vertices: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]
            }
        );
        assert!(sd.contains(&[0.3, 0.7, 0.0], 1e-9));
        assert!(!sd.contains(&[0.3, 0.8, 0.0], 1e-9));
        assert!(!sd.contains(&[1.2, -0.2, 0.0], 1e-9));
        let err = theta_subgradients(&os(2), &[2.0, 2.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::UnsupportedPoint { .. }));
        assert!(err.to_string().contains("ORDER_STAT leading hypothesis"));
    }

    #[test]
    fn mcp_subgradients_at_zero() {
        let sd = theta_subgradients(&mcp21(), &[0.0; 3]).unwrap();
        assert_eq!(
            sd,
            Subdifferential::Box {
                lower: vec![-1.0; 3],
                upper: vec![1.0; 3]
            }
        );
    }

    #[test]
    fn smooth_gradient() {
        let s = SymmetricFunctionSpec::smooth_sep(1.0).unwrap();
        let sd = theta_subgradients(&s, &[1.5, -2.0]).unwrap();
        assert_eq!(sd, Subdifferential::Singleton { point: vec![1.5, -2.0] });
    }

    #[test]
    fn subderivative_examples() {
        assert_eq!(theta_subderivative(&os(1), &[2.0, 2.0, 0.0], &[1.0, -1.0, 5.0]).unwrap(), 1.0);
        assert_eq!(theta_subderivative(&mcp21(), &[0.0], &[-3.0]).unwrap(), 3.0);
        let zero = [0.0; 3];
        for spec in [os(1), mcp21(), SymmetricFunctionSpec::eig_gap()] {
            assert_eq!(theta_subderivative(&spec, &[3.0, 1.0, 0.0], &zero).unwrap(), 0.0);
        }
    }

    #[test]
    fn mcp_subderivative_matches_quotient() {
        let t = 1e-6;
        let q = (mcp_phi(-3.0 * t, 2.0, 1.0) - mcp_phi(0.0, 2.0, 1.0)) / t;
        assert!((q - 3.0).abs() < 1e-5);
    }

    #[test]
    fn eig_gap_subderivative_with_ties() {
        // tie between the two largest entries: the perturbed gap is min(w0,w1) − w2
        let g = SymmetricFunctionSpec::eig_gap();
        let d = theta_subderivative(&g, &[1.0, 1.0, 0.0], &[0.5, -0.2, 0.1]).unwrap();
        assert!((d - (-0.3)).abs() < 1e-15);
        let t = 1e-7;
        let q = (theta_value(&g, &[1.0 + 0.5 * t, 1.0 - 0.2 * t, 0.1 * t]).unwrap() - 1.0) / t;
        assert!((q - d).abs() < 1e-6);
        assert!(theta_subgradients(&g, &[1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn second_subderivative_examples() {
        assert_eq!(theta_second_subderivative(&mcp21(), &[0.0], &[0.3], &[1.0]).unwrap(), ExtReal::PosInf);
        assert_eq!(
            theta_second_subderivative(&mcp21(), &[0.0], &[1.0], &[2.0]).unwrap(),
            ExtReal::Finite(-2.0)
        );
        assert_eq!(
            theta_second_subderivative(&os(1), &[2.0, 2.0], &[1.0, 0.0], &[1.0, 1.0]).unwrap(),
            ExtReal::Finite(0.0)
        );
        assert!(matches!(
            theta_second_subderivative(&os(1), &[2.0, 2.0], &[0.5, 0.4], &[1.0, 1.0]),
            Err(Error::InvalidSubgradient(_))
        ));
        assert!(matches!(
            theta_second_subderivative(&mcp21(), &[2.0], &[0.0], &[1.0]),
            Err(Error::UnsupportedPoint { .. })
        ));
    }

    #[test]
    fn critical_cone_examples() {
        assert!(theta_critical_cone_member(&os(1), &[2.0, 2.0], &[1.0, 0.0], &[0.0, 0.0]).unwrap());
        assert!(!theta_critical_cone_member(&os(1), &[2.0, 2.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap());
        assert!(theta_critical_cone_member(&mcp21(), &[0.0], &[1.0], &[1.0]).unwrap());
    }

    #[test]
    fn mcp_prox_branches() {
        let p = |x: f64| theta_prox(&mcp21(), 0.5, &[x]).unwrap().point[0];
        assert_eq!(p(0.4), 0.0);
        assert!((p(0.8) - 0.4).abs() < 1e-15);
        assert_eq!(p(3.0), 3.0);
        assert!((p(-0.8) + 0.4).abs() < 1e-15);
        assert!(theta_prox(&mcp21(), 2.0, &[1.0]).is_err());
    }

    #[test]
    fn mcp_prox_beats_a_grid() {
        for &x in &[-2.5, -1.1, -0.45, 0.05, 0.6, 1.7, 2.2] {
            let gamma = 0.7;
            let p = mcp_prox_scalar(x, 2.0, 1.0, gamma);
            let obj = |q: f64| mcp_phi(q, 2.0, 1.0) + (q - x) * (q - x) / (2.0 * gamma);
            let lo = x - 5.0 * gamma * (1.0 + x.abs());
            let hi = x + 5.0 * gamma * (1.0 + x.abs());
            for k in 0..=10_000 {
                let q = lo + (hi - lo) * k as f64 / 10_000.0;
                assert!(obj(p) <= obj(q) + 1e-12);
            }
        }
    }

    #[test]
    fn order_stat_prox_fallback() {
        let r = theta_prox(&os(1), 1.0, &[2.0, 0.0]).unwrap();
        assert_eq!(r.method, ProxMethod::OracleFallback);
        assert!((r.point[0] - 1.0).abs() < 1e-5 && r.point[1].abs() < 1e-5);
    }

    #[test]
    fn gqf_examples() {
        let c = theta_gqf_certificate(&os(1), &[2.0, 2.0], &[0.5, 0.5]).unwrap();
        assert!(c.is_gqf);
        let basis = c.subspace_basis.unwrap();
        assert_eq!(basis.len(), 1);
        assert!((basis[0][0] - basis[0][1]).abs() < 1e-12);

        let c = theta_gqf_certificate(&os(1), &[2.0, 2.0], &[1.0, 0.0]).unwrap();
        assert!(!c.is_gqf && c.subspace_basis.is_none());

        let c = theta_gqf_certificate(&os(1), &[2.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(c.is_gqf);
        assert_eq!(c.subspace_basis.unwrap().len(), 2);

        assert!(theta_gqf_certificate(&mcp21(), &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn hull_distance_is_exact_on_simple_cases() {
        let sd = Subdifferential::Hull {
            vertices: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        assert!(sd.distance(&[0.5, 0.5]) < 1e-9);
        assert!((sd.distance(&[1.0, 1.0]) - 0.5f64.sqrt()).abs() < 1e-9);
        assert!((sd.distance(&[2.0, 0.0]) - 1.0).abs() < 1e-9);
    }
}

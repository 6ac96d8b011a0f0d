//! Verification suites. Each suite draws seeded random instances, compares a
//! closed form against an independent route and reports pass/fail counts.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::extreal::ExtReal;
use crate::oracle::{self, AttainmentConfig, ProxSearch, QuotientProbe};
use crate::perturb::{eig_dir_derivative, eig_second_prediction};
use crate::sampling::{
    critical_direction, noncritical_direction, prescribed_spectrum, random_block_rotations, random_orthogonal,
    random_sizes, random_spec, random_symmetric, random_unit_symmetric, stream, supported_instance, Instance, Kind,
    SampleRng, Shape,
};
use crate::spectral::{
    attach_oracle, composite_objective, critical_cone_definition_gap, critical_cone_member, curvature_correction,
    leading_eig_second_subderivative, prox_directional_derivative, second_semiderivative, spectral_prox,
    spectral_second_subderivative, spectral_subderivative, spectral_subgradient, spectral_value,
};
use crate::symfun::{
    mcp_phi, mcp_prox_scalar, theta_second_subderivative, theta_value, SymmetricFunctionSpec, ThetaKind,
};
use crate::symmat::{block_sort_permutation, eig, eig_default, fan_gap, pinv_shift, SymMatrix};
use crate::tol;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Multiplier on every trial count; `1.0` runs the full suites.
    pub scale: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { seed: 42, scale: 1.0 }
    }
}

impl VerifyConfig {
    fn count(&self, full: usize) -> usize {
        ((full as f64 * self.scale).round() as usize).max(1)
    }

    fn rng(&self, suite: u64, trial: usize) -> SampleRng {
        stream(self.seed, (suite << 32) | trial as u64)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub id: String,
    pub name: String,
    pub passed: bool,
    pub trials: usize,
    pub failures: usize,
    /// Largest observed deviation, in the suite's own metric.
    pub worst: f64,
    pub detail: String,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>3} {:<44} trials={:<5} failures={:<4} worst={:.3e}  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.trials,
            self.failures,
            self.worst,
            self.detail
        )
    }
}

#[derive(Default)]
struct Tally {
    trials: usize,
    failures: usize,
    worst: f64,
    first_failure: Option<String>,
}

impl Tally {
    fn record(&mut self, ok: bool, metric: f64, note: impl FnOnce() -> String) {
        self.trials += 1;
        if metric.is_finite() {
            self.worst = self.worst.max(metric);
        }
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(note());
            }
        }
    }

    fn check(&mut self, r: Result<(bool, f64, String)>) {
        match r {
            Ok((ok, metric, note)) => self.record(ok, metric, || note),
            Err(e) => self.record(false, f64::NAN, || format!("error: {e}")),
        }
    }

    fn finish(self, id: &str, name: &str, summary: String) -> CriterionOutcome {
        let detail = match self.first_failure {
            Some(f) => format!("{summary}; first failure: {f}"),
            None => summary,
        };
        CriterionOutcome {
            id: id.into(),
            name: name.into(),
            passed: self.failures == 0 && self.trials > 0,
            trials: self.trials,
            failures: self.failures,
            worst: self.worst,
            detail,
        }
    }
}

fn loglog_slope(ts: &[f64], rs: &[f64]) -> f64 {
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = rs.iter().map(|r| r.max(f64::MIN_POSITIVE).ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Smallest sampled quotient at the grid level `t`.
fn quotient_at(levels: &[oracle::ProbeLevel], t: f64) -> f64 {
    levels
        .iter()
        .find(|l| (l.t - t).abs() <= 1e-9 * t)
        .map(|l| l.min_quotient.to_f64())
        .unwrap_or(f64::NAN)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn instance(kind: Kind, n_lo: usize, n_hi: usize, rng: &mut SampleRng) -> Result<Instance> {
    let n = rng.random_range(n_lo..=n_hi);
    let degenerate = rng.random_bool(0.5);
    supported_instance(kind, n, Shape { degenerate, min_blocks: 1 }, rng)
}

/// Residual orders of the first-order and second-order eigenvalue expansions.
pub fn eigen_expansion_orders(cfg: &VerifyConfig) -> CriterionOutcome {
    let mut tally = Tally::default();
    let t1 = [1e-2, 1e-3, 1e-4, 1e-5];
    let t2 = [1e-2, 1e-3, 1e-4];
    let (mut s1_range, mut s2_range) = ((f64::MAX, f64::MIN), (f64::MAX, f64::MIN));
    for k in 0..cfg.count(100) {
        let mut rng = cfg.rng(1, k);
        tally.check((|| {
            let sizes = random_sizes(6, 2, &mut rng);
            let mu1 = rng.random_range(0.5..1.5);
            let mu2 = mu1 - rng.random_range(1.0..2.0);
            let lam: Vec<f64> = (0..6).map(|i| if i < sizes[0] { mu1 } else { mu2 }).collect();
            let x = prescribed_spectrum(&lam, &mut rng);
            let es = eig_default(&x)?;
            if es.block_count() != 2 {
                return Err(Error::Inconsistent("expected two blocks".into()));
            }
            let h = random_unit_symmetric(6, &mut rng);
            let d = eig_dir_derivative(&es, &h)?.d;
            let r1: Vec<f64> = t1
                .iter()
                .map(|&t| {
                    let lt = x.axpy(t, &h).eigenvalues();
                    let lin: Vec<f64> = es.lambda().iter().zip(&d).map(|(l, di)| l + t * di).collect();
                    dist(&lt, &lin)
                })
                .collect();
            let mut r2 = Vec::new();
            for &t in &t2 {
                let pred = eig_second_prediction(&es, &h, t)?;
                r2.push(dist(&x.axpy(t, &h).eigenvalues(), &pred));
            }
            let s1 = loglog_slope(&t1, &r1);
            let s2 = loglog_slope(&t2, &r2);
            s1_range = (s1_range.0.min(s1), s1_range.1.max(s1));
            s2_range = (s2_range.0.min(s2), s2_range.1.max(s2));
            let dev = (s1 - 2.0).abs().max((s2 - 3.0).abs());
            Ok((dev <= 0.3, dev, format!("trial {k}: slopes {s1:.3}, {s2:.3}")))
        })());
    }
    let summary = format!(
        "first-order slope in [{:.3},{:.3}], second-order slope in [{:.3},{:.3}]",
        s1_range.0, s1_range.1, s2_range.0, s2_range.1
    );
    tally.finish("1", "eigenvalue expansion orders", summary)
}

/// Chain rule for the subderivative against the first-order quotient oracle.
pub fn chain_rule(cfg: &VerifyConfig) -> CriterionOutcome {
    let mut tally = Tally::default();
    for k in 0..cfg.count(200) {
        let mut rng = cfg.rng(2, k);
        let kind = Kind::ALL[k % 4];
        tally.check((|| {
            let inst = instance(kind, 2, 6, &mut rng)?;
            let h = random_unit_symmetric(inst.es.n(), &mut rng);
            let formula = spectral_subderivative(&inst.spec, &inst.es, &h)?;
            let f = composite_objective(&inst.spec, inst.es.n());
            let probe = QuotientProbe::first_order().with_seed(cfg.seed ^ k as u64);
            let est = oracle::numeric_subderivative(&f, &inst.x.svec(), &h.svec(), &probe)?.estimate;
            let err = (est.to_f64() - formula).abs();
            Ok((err <= 1e-4, err, format!("trial {k} {kind:?}: formula {formula}, oracle {est}")))
        })());
    }
    tally.finish("2", "subderivative chain rule", "|formula − oracle| ≤ 1e-4".into())
}

/// Second-subderivative formula: flagship, critical and non-critical directions.
pub fn second_subderivative_formula(cfg: &VerifyConfig) -> CriterionOutcome {
    let mut tally = Tally::default();
    let mut flagship_note = String::new();
    tally.check((|| {
        let os1 = SymmetricFunctionSpec::order_stat(1)?;
        let es = eig(&SymMatrix::from_diag(&[2.0, 1.0]), 1e-8)?;
        let triple = spectral_subgradient(&os1, &es, &[1.0, 0.0])?;
        let h = SymMatrix::from_row_major(2, &[0.0, 1.0, 1.0, 0.0])?;
        let mut rep = spectral_second_subderivative(&os1, &es, &triple, &h)?;
        attach_oracle(&mut rep, &os1, &es, &triple, &QuotientProbe::default().with_seed(cfg.seed))?;
        let d2 = rep.d2.to_f64();
        let gap = rep.oracle_gap.unwrap_or(f64::INFINITY);
        flagship_note = format!("flagship d2={d2}, oracle gap={gap:.2e}");
        Ok(((d2 - 2.0).abs() <= 1e-12 && gap <= 1e-2, gap, flagship_note.clone()))
    })());
    let mut crit_worst: f64 = 0.0;
    for k in 0..cfg.count(100) {
        let mut rng = cfg.rng(3, k);
        let kind = Kind::ALL[k % 4];
        tally.check((|| {
            let inst = instance(kind, 2, 5, &mut rng)?;
            let h = critical_direction(&inst, &mut rng)?;
            let mut rep = spectral_second_subderivative(&inst.spec, &inst.es, &inst.triple, &h)?;
            attach_oracle(&mut rep, &inst.spec, &inst.es, &inst.triple, &QuotientProbe::default().with_seed(k as u64))?;
            let gap = rep.oracle_gap.unwrap_or(f64::INFINITY);
            crit_worst = crit_worst.max(gap);
            Ok((gap <= 1e-2, gap, format!("critical trial {k} {kind:?}: d2 {} oracle {:?}", rep.d2, rep.oracle_d2)))
        })());
    }
    let mut min_quotient = f64::INFINITY;
    let noncrit_kinds = [Kind::OrderStat, Kind::Mcp, Kind::EigGap];
    for k in 0..cfg.count(100) {
        let mut rng = cfg.rng(4, k);
        let kind = noncrit_kinds[k % 3];
        tally.check((|| {
            let mut found = None;
            for _ in 0..50 {
                let n = rng.random_range(2..=5).max(if kind == Kind::EigGap { 3 } else { 2 });
                let inst = supported_instance(kind, n, Shape { degenerate: true, min_blocks: 1 }, &mut rng)?;
                if let Some(h) = noncritical_direction(&inst, 0.1, &mut rng)? {
                    found = Some((inst, h));
                    break;
                }
            }
            let (inst, h) = found.ok_or_else(|| Error::Inconsistent("no non-critical direction found".into()))?;
            let rep = spectral_second_subderivative(&inst.spec, &inst.es, &inst.triple, &h)?;
            let out = crate::spectral::oracle_second_subderivative(
                &inst.spec,
                &inst.x,
                inst.triple.big_y(),
                &h,
                &QuotientProbe::default().with_seed(k as u64),
            )?;
            let at_1e4 = quotient_at(&out.levels, 1e-4);
            min_quotient = min_quotient.min(at_1e4);
            let ok = rep.d2 == ExtReal::PosInf && at_1e4 > 1e3;
            Ok((ok, 0.0, format!("non-critical trial {k} {kind:?}: d2 {} quotient {at_1e4}", rep.d2)))
        })());
    }
    let summary = format!(
        "{flagship_note}; critical worst gap {crit_worst:.2e}; non-critical min quotient at t=1e-4 {min_quotient:.3e}"
    );
    tally.finish("3", "second-subderivative formula", summary)
}

/// The lower estimate never exceeds the oracle (beyond 5e−3).
pub fn lower_estimate(cfg: &VerifyConfig) -> CriterionOutcome {
    let mut tally = Tally::default();
    let mut finite = 0;
    for k in 0..cfg.count(500) {
        let mut rng = cfg.rng(5, k);
        let kind = Kind::ALL[k % 4];
        tally.check((|| {
            let inst = instance(kind, 2, 5, &mut rng)?;
            let h = if k % 2 == 0 {
                critical_direction(&inst, &mut rng)?
            } else {
                random_unit_symmetric(inst.es.n(), &mut rng)
            };
            let rep = spectral_second_subderivative(&inst.spec, &inst.es, &inst.triple, &h)?;
            let ExtReal::Finite(lower) = rep.lower_estimate else {
                return Ok((true, 0.0, String::new()));
            };
            finite += 1;
            let out = crate::spectral::oracle_second_subderivative(
                &inst.spec,
                &inst.x,
                inst.triple.big_y(),
                &h,
                &QuotientProbe::default().with_seed(k as u64),
            )?;
            let violation = (lower - out.estimate.to_f64()).max(0.0);
            Ok((violation <= 5e-3, violation, format!("trial {k} {kind:?}: lower {lower}, oracle {}", out.estimate)))
        })());
    }
    tally.finish("4", "lower estimate", format!("{finite} finite lower estimates checked"))
}

/// Fan-equality critical cone test against the definition-level test.
pub fn critical_cone_equivalence(cfg: &VerifyConfig) -> CriterionOutcome {
    let mut tally = Tally::default();
    let mut members = 0;
    for k in 0..cfg.count(500) {
        let mut rng = cfg.rng(6, k);
        let kind = Kind::ALL[k % 4];
        tally.check((|| {
            let inst = instance(kind, 2, 5, &mut rng)?;
            let h = if rng.random_bool(0.5) {
                critical_direction(&inst, &mut rng)?
            } else {
                random_unit_symmetric(inst.es.n(), &mut rng)
            };
            let fan = critical_cone_member(&inst.spec, &inst.es, &inst.triple, &h)?;
            let gap = critical_cone_definition_gap(&inst.spec, &inst.es, &inst.triple, &h)?;
            let def = gap.abs() <= tol::CRITICAL_CONE_DEFINITION;
            if fan {
                members += 1;
            }
            Ok((fan == def, 0.0, format!("trial {k} {kind:?}: fan {fan}, definition gap {gap:e}")))
        })());
    }
    let trials = tally.trials;
    tally.finish("5", "critical cone equivalence", format!("{members}/{trials} members"))
}

/// Leading-eigenvalue formula against the general formula with ORDER_STAT.
pub fn leading_eigenvalue(cfg: &VerifyConfig) -> CriterionOutcome {
    let mut tally = Tally::default();
    let mut finite = 0;
    for k in 0..cfg.count(200) {
        let mut rng = cfg.rng(7, k);
        tally.check((|| {
            let n = rng.random_range(2..=6);
            let min_blocks = if k % 4 == 0 { 1 } else { 2 };
            let degenerate = n > min_blocks && rng.random_bool(0.5);
            let inst = supported_instance(Kind::OrderStat, n, Shape { degenerate, min_blocks }, &mut rng)?;
            let ThetaKind::OrderStat { i } = inst.spec.kind() else { unreachable!() };
            let block = inst.es.block_of(i - 1);
            let h = if rng.random_bool(0.5) {
                critical_direction(&inst, &mut rng)?
            } else {
                random_unit_symmetric(n, &mut rng)
            };
            let lead = leading_eig_second_subderivative(&inst.es, block, &inst.triple, &h)?;
            let general = spectral_second_subderivative(&inst.spec, &inst.es, &inst.triple, &h)?.d2;
            let (ok, err) = match (lead, general) {
                (ExtReal::PosInf, ExtReal::PosInf) => (true, 0.0),
                (ExtReal::Finite(a), ExtReal::Finite(b)) => {
                    finite += 1;
                    ((a - b).abs() <= 1e-10, (a - b).abs())
                }
                _ => (false, f64::INFINITY),
            };
            Ok((ok, err, format!("trial {k}: leading {lead}, general {general}")))
        })());
    }
    tally.finish("6", "leading-eigenvalue specialization", format!("{finite} finite pairs"))
}

/// MCP prox closed form against grid minimization; `d²φ(0,v)` against the quotient oracle.
pub fn mcp_calculus(cfg: &VerifyConfig) -> CriterionOutcome {
    let mut tally = Tally::default();
    let mut prox_worst: f64 = 0.0;
    for k in 0..cfg.count(1000) {
        let mut rng = cfg.rng(8, k);
        tally.check((|| {
            let a = rng.random_range(1.2..4.0);
            let c = rng.random_range(0.3..2.0);
            let gamma = rng.random_range(0.02..0.95) * a;
            let x = rng.random_range(-1.5..1.5) * a * c;
            let closed = mcp_prox_scalar(x, a, c, gamma);
            let f = move |p: &[f64]| ExtReal::Finite(mcp_phi(p[0], a, c));
            let num = oracle::numeric_prox(&f, gamma, &[x], &ProxSearch::default())?;
            let err = (num.point[0] - closed).abs();
            prox_worst = prox_worst.max(err);
            Ok((err <= 2e-5 && !num.flagged, err, format!("prox trial {k}: x={x} γ={gamma} closed {closed} grid {}", num.point[0])))
        })());
    }
    let mut d2_worst: f64 = 0.0;
    for k in 0..cfg.count(200) {
        let mut rng = cfg.rng(9, k);
        tally.check((|| {
            let a = rng.random_range(1.2..4.0);
            let c = rng.random_range(0.3..2.0);
            let spec = SymmetricFunctionSpec::mcp(a, c)?;
            let f = move |p: &[f64]| ExtReal::Finite(mcp_phi(p[0], a, c));
            let mag = rng.random_range(0.5..2.0);
            let critical = k % 2 == 0;
            let (v, w) = if critical {
                let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                (s * c, s * mag)
            } else if rng.random_bool(0.5) {
                let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                (s * c, -s * mag)
            } else {
                (rng.random_range(-0.9..0.9) * c, if rng.random_bool(0.5) { mag } else { -mag })
            };
            let formula = theta_second_subderivative(&spec, &[0.0], &[v], &[w])?;
            let out = oracle::numeric_second_subderivative(&f, &[0.0], &[v], &[w], &QuotientProbe::default().with_seed(k as u64))?;
            if critical {
                let want = -w * w / a;
                let err = (formula.to_f64() - want).abs().max((out.estimate.to_f64() - want).abs());
                d2_worst = d2_worst.max(err);
                Ok((err <= 1e-2, err, format!("d² trial {k}: v={v} w={w} formula {formula} oracle {}", out.estimate)))
            } else {
                let q = quotient_at(&out.levels, 1e-4);
                Ok((formula == ExtReal::PosInf && q > 1e3, 0.0, format!("d² trial {k}: v={v} w={w} formula {formula} quotient {q}")))
            }
        })());
    }
    tally.finish("7", "MCP calculus", format!("prox worst {prox_worst:.2e}; d² worst {d2_worst:.2e}"))
}

fn prox_objective(spec: &SymmetricFunctionSpec, gamma: f64, x: &SymMatrix, w: &SymMatrix) -> Result<f64> {
    Ok(spectral_value(spec, w)? + w.sub(x).norm_fro().powi(2) / (2.0 * gamma))
}

fn prox_spec(k: usize, rng: &mut SampleRng) -> Result<(SymmetricFunctionSpec, f64)> {
    if k.is_multiple_of(2) {
        let a = rng.random_range(1.5..3.5);
        let c = rng.random_range(0.5..1.5);
        Ok((SymmetricFunctionSpec::mcp(a, c)?, rng.random_range(0.1..0.9) * a))
    } else {
        Ok((SymmetricFunctionSpec::smooth_sep(rng.random_range(0.5..2.0))?, rng.random_range(0.1..2.0)))
    }
}

/// Spectral prox optimality probes and Richardson convergence of its directional derivative.
pub fn spectral_prox_suite(cfg: &VerifyConfig) -> CriterionOutcome {
    let mut tally = Tally::default();
    for k in 0..cfg.count(100) {
        let mut rng = cfg.rng(10, k);
        tally.check((|| {
            let (spec, gamma) = prox_spec(k, &mut rng)?;
            let n = rng.random_range(2..=6);
            let x = random_symmetric(n, &mut rng).scale(rng.random_range(0.5..2.5));
            let p = spectral_prox(&spec, gamma, &x)?.matrix;
            let fp = prox_objective(&spec, gamma, &x, &p)?;
            let mut worst: f64 = f64::NEG_INFINITY;
            for _ in 0..200 {
                let eps = 10f64.powf(rng.random_range(-4.0..0.0));
                let w = p.axpy(eps, &random_unit_symmetric(n, &mut rng));
                worst = worst.max(fp - prox_objective(&spec, gamma, &x, &w)?);
            }
            let ok = worst <= 1e-12 * (1.0 + fp.abs());
            Ok((ok, worst.max(0.0), format!("probe trial {k}: objective excess {worst:e}")))
        })());
    }
    let mut worst_incr: f64 = 0.0;
    for k in 0..cfg.count(100) {
        let mut rng = cfg.rng(11, k);
        tally.check((|| {
            let (spec, gamma) = prox_spec(k, &mut rng)?;
            let n = rng.random_range(2..=5);
            let lam: Vec<f64> = (0..n)
                .map(|_| match spec.kind() {
                    ThetaKind::Mcp { a, c } => loop {
                        let r = rng.random_range(0.0..a * c + 1.5);
                        if (r - gamma * c).abs() >= 0.05 && (r - a * c).abs() >= 0.05 {
                            break if rng.random_bool(0.5) { r } else { -r };
                        }
                    },
                    _ => rng.random_range(-2.0..2.0),
                })
                .collect();
            let x = prescribed_spectrum(&lam, &mut rng);
            let d = random_unit_symmetric(n, &mut rng);
            let r = prox_directional_derivative(&spec, gamma, &x, &d)?;
            let incr = r.increments.iter().copied().fold(0.0, f64::max);
            worst_incr = worst_incr.max(incr);
            Ok((r.converged, incr, format!("derivative trial {k}: increments {:?}", r.increments)))
        })());
    }
    tally.finish("8", "spectral prox", format!("worst Richardson increment {worst_incr:.2e}"))
}

fn central_second_difference(spec: &SymmetricFunctionSpec, x: &SymMatrix, h: &SymMatrix, t: f64) -> Result<f64> {
    let gp = spectral_value(spec, &x.axpy(t, h))?;
    let g0 = spectral_value(spec, x)?;
    let gm = spectral_value(spec, &x.axpy(-t, h))?;
    Ok((gp - 2.0 * g0 + gm) / (t * t))
}

/// Second semiderivative against central second differences.
pub fn second_semiderivative_suite(cfg: &VerifyConfig) -> CriterionOutcome {
    let mut tally = Tally::default();
    let (mut smooth_worst, mut mcp_worst): (f64, f64) = (0.0, 0.0);
    for k in 0..cfg.count(100) {
        let mut rng = cfg.rng(12, k);
        tally.check((|| {
            let coeff = if k % 2 == 0 { 1.0 } else { rng.random_range(0.5..2.0) };
            let spec = SymmetricFunctionSpec::smooth_sep(coeff)?;
            let n = rng.random_range(2..=6);
            let x = random_symmetric(n, &mut rng);
            let h = random_unit_symmetric(n, &mut rng);
            let es = eig_default(&x)?;
            let formula = second_semiderivative(&spec, &es, &h)?;
            let cd = central_second_difference(&spec, &x, &h, 1e-3)?;
            let mut err = (formula - cd).abs();
            let mut ok = err <= 1e-6;
            if coeff == 1.0 {
                let e2 = (formula - h.norm_fro().powi(2)).abs();
                ok &= e2 <= 1e-10;
                err = err.max(e2);
            }
            smooth_worst = smooth_worst.max(err);
            Ok((ok, err, format!("smooth trial {k}: formula {formula}, central {cd}")))
        })());
    }
    for k in 0..cfg.count(100) {
        let mut rng = cfg.rng(13, k);
        tally.check((|| {
            let a = rng.random_range(1.5..3.5);
            let c = rng.random_range(0.5..1.5);
            let spec = SymmetricFunctionSpec::mcp(a, c)?;
            let n = rng.random_range(2..=6);
            let r = rng.random_range(1..=n.min(4));
            let sizes = random_sizes(n, r, &mut rng);
            let mut vals = Vec::new();
            while vals.len() < r {
                let m = rng.random_range(0.1..a * c + 1.5);
                let v = if rng.random_bool(0.5) { m } else { -m };
                if (m - a * c).abs() >= 0.1 && vals.iter().all(|u: &f64| (u - v).abs() > 0.2) {
                    vals.push(v);
                }
            }
            vals.sort_by(|p, q| q.total_cmp(p));
            let lam: Vec<f64> = sizes.iter().zip(&vals).flat_map(|(s, v)| std::iter::repeat_n(*v, *s)).collect();
            let x = prescribed_spectrum(&lam, &mut rng);
            let h = random_unit_symmetric(n, &mut rng);
            let es = eig_default(&x)?;
            let formula = second_semiderivative(&spec, &es, &h)?;
            let cd = central_second_difference(&spec, &x, &h, 1e-3)?;
            let err = (formula - cd).abs();
            mcp_worst = mcp_worst.max(err);
            Ok((err <= 1e-3, err, format!("MCP trial {k}: formula {formula}, central {cd}")))
        })());
    }
    tally.finish(
        "9",
        "second semiderivative",
        format!("smooth worst {smooth_worst:.2e}; MCP worst {mcp_worst:.2e}"),
    )
}

/// Epi-attainment search on finite-d² instances and negative controls.
pub fn epi_attainment(cfg: &VerifyConfig) -> CriterionOutcome {
    let mut tally = Tally::default();
    let mut positives = 0;
    let mut rejected = 0;
    let acfg = AttainmentConfig::default();
    for k in 0..cfg.count(50) {
        let mut rng = cfg.rng(14, k);
        let kind = Kind::ALL[k % 4];
        let inst = instance(kind, 2, 4, &mut rng);
        let setup = inst.and_then(|inst| {
            let h = critical_direction(&inst, &mut rng)?;
            let rep = spectral_second_subderivative(&inst.spec, &inst.es, &inst.triple, &h)?;
            let target = rep
                .d2
                .finite()
                .ok_or_else(|| Error::Inconsistent("critical direction with infinite d2".into()))?;
            Ok((inst, h, target))
        });
        let (inst, h, target) = match setup {
            Ok(s) => s,
            Err(e) => {
                tally.check(Err(e.clone()));
                tally.check(Err(e));
                continue;
            }
        };
        let f = composite_objective(&inst.spec, inst.es.n());
        let (x, v, w) = (inst.x.svec(), inst.triple.big_y().svec(), h.svec());
        tally.check((|| {
            let res = oracle::epi_attainment_search(&f, &x, &v, &w, target, &acfg)?;
            let last = res.achieved.last().map(|s| s.quotient.to_f64()).unwrap_or(f64::NAN);
            if res.success {
                positives += 1;
            }
            Ok((res.success, (last - target).abs(), format!("trial {k} {kind:?}: target {target}, reached {last}")))
        })());
        tally.check((|| {
            let res = oracle::epi_attainment_search(&f, &x, &v, &w, target - 1.0, &acfg)?;
            if !res.success {
                rejected += 1;
            }
            Ok((!res.success, 0.0, format!("negative control {k} {kind:?}: unexpectedly attained")))
        })());
    }
    tally.finish(
        "10",
        "epi-attainment",
        format!("{positives} attained, {rejected} negative controls rejected"),
    )
}

/// Permutation, orthogonal and basis invariances and degree-2 homogeneity.
pub fn invariance(cfg: &VerifyConfig) -> CriterionOutcome {
    let mut tally = Tally::default();
    let count = cfg.count(1000);
    let mut worst = [0.0f64; 4];
    for k in 0..count {
        let mut rng = cfg.rng(15, k);
        tally.check((|| {
            let kind = Kind::ALL[k % 4];
            let n = rng.random_range(2..=8);
            let spec = random_spec(kind, n, &mut rng);
            let x: Vec<f64> = (0..n).map(|_| 3.0 * rng.random_range(-1.0..1.0)).collect();
            let mut px = x.clone();
            rand::seq::SliceRandom::shuffle(px.as_mut_slice(), &mut rng);
            let err = (theta_value(&spec, &px)? - theta_value(&spec, &x)?).abs();
            worst[0] = worst[0].max(err);
            Ok((err <= 1e-12, err, format!("permutation trial {k} {kind:?}: {err:e}")))
        })());
    }
    for k in 0..count {
        let mut rng = cfg.rng(16, k);
        tally.check((|| {
            let kind = Kind::ALL[k % 4];
            let n = rng.random_range(2..=6);
            let spec = random_spec(kind, n, &mut rng);
            let x = random_symmetric(n, &mut rng);
            let v = random_orthogonal(n, &mut rng);
            let err = (spectral_value(&spec, &x.congruence_t(&v))? - spectral_value(&spec, &x)?).abs();
            worst[1] = worst[1].max(err);
            Ok((err <= 1e-10, err, format!("orthogonal trial {k} {kind:?}: {err:e}")))
        })());
    }
    for k in 0..count {
        let mut rng = cfg.rng(17, k);
        tally.check((|| {
            let kind = Kind::ALL[k % 4];
            let inst = instance(kind, 2, 6, &mut rng)?;
            let h = random_symmetric(inst.es.n(), &mut rng);
            let rotated = inst.es.with_rotated_blocks(&random_block_rotations(&inst.es, &mut rng))?;
            let d0 = eig_dir_derivative(&inst.es, &h)?.d;
            let d1 = eig_dir_derivative(&rotated, &h)?.d;
            let err = d0.iter().zip(&d1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst[2] = worst[2].max(err);
            Ok((err <= 1e-9, err, format!("basis trial {k}: {err:e}")))
        })());
    }
    for k in 0..count {
        let mut rng = cfg.rng(18, k);
        tally.check((|| {
            let kind = Kind::ALL[k % 4];
            let inst = instance(kind, 2, 6, &mut rng)?;
            let h = if k % 3 == 2 {
                random_unit_symmetric(inst.es.n(), &mut rng)
            } else {
                critical_direction(&inst, &mut rng)?
            };
            let s = 10f64.powf(rng.random_range(-1.0..1.0));
            let sh = h.scale(s);
            let mut pairs: Vec<(ExtReal, ExtReal)> = Vec::new();
            let r1 = spectral_second_subderivative(&inst.spec, &inst.es, &inst.triple, &h)?;
            let r2 = spectral_second_subderivative(&inst.spec, &inst.es, &inst.triple, &sh)?;
            pairs.push((r1.d2, r2.d2));
            pairs.push((r1.lower_estimate, r2.lower_estimate));
            pairs.push((r1.theta_term, r2.theta_term));
            pairs.push((
                curvature_correction(&inst.es, inst.triple.y(), &h)?.into(),
                curvature_correction(&inst.es, inst.triple.y(), &sh)?.into(),
            ));
            if let ThetaKind::OrderStat { i } = inst.spec.kind() {
                let b = inst.es.block_of(i - 1);
                pairs.push((
                    leading_eig_second_subderivative(&inst.es, b, &inst.triple, &h)?,
                    leading_eig_second_subderivative(&inst.es, b, &inst.triple, &sh)?,
                ));
            }
            if kind == Kind::SmoothSep {
                pairs.push((
                    second_semiderivative(&inst.spec, &inst.es, &h)?.into(),
                    second_semiderivative(&inst.spec, &inst.es, &sh)?.into(),
                ));
            }
            let mut err: f64 = 0.0;
            let mut ok = true;
            for (a, b) in pairs {
                match (a, b) {
                    (ExtReal::PosInf, ExtReal::PosInf) => {}
                    (ExtReal::Finite(a), ExtReal::Finite(b)) => {
                        let e = (b - s * s * a).abs() / (1.0 + (s * s * a).abs());
                        err = err.max(e);
                        ok &= e <= 1e-9;
                    }
                    _ => ok = false,
                }
            }
            worst[3] = worst[3].max(err);
            Ok((ok, err, format!("homogeneity trial {k} {kind:?}: s={s}, rel err {err:e}")))
        })());
    }
    let summary = format!(
        "worst: permutation {:.1e}, orthogonal {:.1e}, basis {:.1e}, homogeneity {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    );
    tally.finish("11", "invariance suite", summary)
}

/// Eigendecomposition, pseudoinverse, block permutation and Fan inequality invariants.
pub fn symmat_invariants(cfg: &VerifyConfig) -> CriterionOutcome {
    let mut tally = Tally::default();
    for k in 0..cfg.count(1000) {
        let mut rng = cfg.rng(19, k);
        tally.check((|| {
            let n = rng.random_range(1..=7);
            let a = random_symmetric(n, &mut rng);
            let b = random_symmetric(n, &mut rng);
            let fan = fan_gap(&a, &b)?;
            let mut ok = fan >= -1e-9;
            let v = random_orthogonal(n, &mut rng);
            let l0 = a.eigenvalues();
            let l1 = a.congruence_t(&v).eigenvalues();
            let orth = dist(&l0, &l1);
            ok &= orth <= 1e-9;
            let r = rng.random_range(1..=n.min(3));
            let sizes = random_sizes(n, r, &mut rng);
            let lam: Vec<f64> = sizes
                .iter()
                .enumerate()
                .flat_map(|(m, s)| std::iter::repeat_n(2.0 - 1.3 * m as f64, *s))
                .collect();
            let x = prescribed_spectrum(&lam, &mut rng);
            let es = eig_default(&x)?;
            let recon = es.lift(es.lambda())?.sub(&x).max_abs();
            let uo = (es.u().transpose() * es.u() - nalgebra::DMatrix::identity(n, n)).amax();
            ok &= recon <= 1e-9 * (1.0 + x.max_abs()) && uo <= 1e-10;
            let m = rng.random_range(0..es.block_count());
            let p = pinv_shift(&es, m)?;
            let shifted = SymMatrix::identity(n).scale(es.mu()[m]).sub(&x);
            let (am, pm) = (shifted.as_matrix(), p.as_matrix());
            let mp = [
                (pm * am * pm - pm).amax(),
                (am * pm * am - am).amax(),
                ((am * pm) - (am * pm).transpose()).amax(),
                ((pm * am) - (pm * am).transpose()).amax(),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            ok &= mp <= 1e-8;
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (v_sorted, q) = block_sort_permutation(&y, &es)?;
            ok &= q.apply_transpose(&v_sorted) == y;
            let snapped = es.snapped_lambda();
            ok &= q.apply(&snapped) == snapped;
            let metric = orth.max(mp).max(recon).max((-fan).max(0.0));
            Ok((ok, metric, format!("trial {k}: fan {fan:e}, orth {orth:e}, MP {mp:e}, recon {recon:e}")))
        })());
    }
    tally.finish("S1", "matrix invariants", "Fan, Moore–Penrose, reconstruction, permutations".into())
}

/// Domain inclusion, transfer identities and the sorted/raw subgradient identity.
pub fn second_order_structure(cfg: &VerifyConfig) -> CriterionOutcome {
    let mut tally = Tally::default();
    for k in 0..cfg.count(300) {
        let mut rng = cfg.rng(20, k);
        let kind = Kind::ALL[k % 4];
        tally.check((|| {
            let inst = instance(kind, 2, 5, &mut rng)?;
            let n = inst.es.n();
            let critical = k % 2 == 0;
            let h = if critical {
                critical_direction(&inst, &mut rng)?
            } else {
                random_unit_symmetric(n, &mut rng)
            };
            let rep = spectral_second_subderivative(&inst.spec, &inst.es, &inst.triple, &h)?;
            let mut ok = !rep.d2.is_finite() || rep.in_critical_cone;
            if critical {
                ok &= rep.d2.is_finite();
            }
            // d²θ(λ, v)(λ′) = d²θ(λ, y)(Qᵀλ′)
            let lam = inst.es.snapped_lambda();
            let d = &rep.eig_dir.d;
            let lhs = theta_second_subderivative(&inst.spec, &lam, inst.triple.v(), d)?;
            let rhs = theta_second_subderivative(&inst.spec, &lam, inst.triple.y(), &inst.triple.q().apply_transpose(d))?;
            ok &= same(lhs, rhs, 1e-12);
            // transfer to the diagonal representative Λ(X)
            let big_lambda = SymMatrix::from_diag(&lam);
            let es_l = eig(&big_lambda, inst.es.cluster_tol())?;
            let t_l = spectral_subgradient(&inst.spec, &es_l, inst.triple.y())?;
            let w = inst.es.to_eigenbasis(&h);
            let at_l = spectral_second_subderivative(&inst.spec, &es_l, &t_l, &w)?.d2;
            ok &= same(at_l, rep.d2, 1e-9);
            let wd: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let diag_val = spectral_second_subderivative(&inst.spec, &es_l, &t_l, &SymMatrix::from_diag(&wd))?.d2;
            let theta_val = theta_second_subderivative(&inst.spec, &lam, inst.triple.y(), &wd)?;
            ok &= match (diag_val, theta_val) {
                (_, ExtReal::PosInf) => true,
                (ExtReal::Finite(a), ExtReal::Finite(b)) => a <= b + 1e-9 * (1.0 + b.abs()),
                _ => false,
            };
            Ok((ok, 0.0, format!("trial {k} {kind:?}: d2 {} at Λ {at_l}, diag {diag_val} vs θ {theta_val}", rep.d2)))
        })());
    }
    tally.finish("S2", "second-order structure", "domain inclusion, transfer, sorted vs raw".into())
}

fn same(a: ExtReal, b: ExtReal, rel: f64) -> bool {
    match (a, b) {
        (ExtReal::PosInf, ExtReal::PosInf) => true,
        (ExtReal::Finite(x), ExtReal::Finite(y)) => (x - y).abs() <= rel * (1.0 + x.abs().max(y.abs())),
        _ => false,
    }
}

/// The eleven acceptance criteria, in order.
pub fn acceptance_criteria(cfg: &VerifyConfig) -> Vec<CriterionOutcome> {
    vec![
        eigen_expansion_orders(cfg),
        chain_rule(cfg),
        second_subderivative_formula(cfg),
        lower_estimate(cfg),
        critical_cone_equivalence(cfg),
        leading_eigenvalue(cfg),
        mcp_calculus(cfg),
        spectral_prox_suite(cfg),
        second_semiderivative_suite(cfg),
        epi_attainment(cfg),
        invariance(cfg),
    ]
}

/// Acceptance criteria followed by the additional invariant suites.
pub fn run_all(cfg: &VerifyConfig) -> Vec<CriterionOutcome> {
    let mut out = acceptance_criteria(cfg);
    out.push(symmat_invariants(cfg));
    out.push(second_order_structure(cfg));
    out
}

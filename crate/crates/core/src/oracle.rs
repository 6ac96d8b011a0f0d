//! Brute-force oracles: difference quotients, sampled liminf surrogates for
//! first and second subderivatives, epi-attainment search, numeric prox.
//!
//! Every sample draws from its own ChaCha stream keyed by `(level, index)`,
//! so results do not depend on evaluation order.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::extreal::ExtReal;
use crate::symfun::{dot, norm, sub};

/// Objective over `R^D`; `PosInf` outside its domain.
pub type Objective<'a> = dyn Fn(&[f64]) -> ExtReal + 'a;

fn axpy(x: &[f64], t: f64, w: &[f64]) -> Vec<f64> {
    x.iter().zip(w).map(|(a, b)| a + t * b).collect()
}

fn finite_base(f: &Objective, x: &[f64]) -> Result<f64> {
    f(x).finite()
        .ok_or_else(|| Error::param("objective must be finite at the base point"))
}

fn quotient2(f: &Objective, fx: f64, x: &[f64], v: &[f64], w: &[f64], t: f64) -> ExtReal {
    match f(&axpy(x, t, w)) {
        ExtReal::PosInf => ExtReal::PosInf,
        ExtReal::Finite(ft) => ExtReal::Finite((ft - fx - t * dot(v, w)) / (0.5 * t * t)),
    }
}

/// `Δ²_t f(x,v)(w) = [f(x+tw) − f(x) − t⟨v,w⟩] / (t²/2)`.
pub fn diff_quotient2(f: &Objective, x: &[f64], v: &[f64], w: &[f64], t: f64) -> Result<ExtReal> {
    check_dim(x.len(), v.len())?;
    check_dim(x.len(), w.len())?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param("t must be positive"));
    }
    let fx = finite_base(f, x)?;
    Ok(quotient2(f, fx, x, v, w, t))
}

/// Sampling configuration for liminf surrogates. Perturbed directions are
/// drawn uniformly from the ball around `w` of radius `radius · t^radius_exponent`;
/// the best one is then polished by compass search inside the same ball
/// for at most `refine_polls` quotient evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuotientProbe {
    pub t_grid: Vec<f64>,
    pub radius: f64,
    pub radius_exponent: f64,
    pub samples: usize,
    pub refine_polls: usize,
    pub seed: u64,
}

impl Default for QuotientProbe {
    fn default() -> Self {
        Self::second_order()
    }
}

impl QuotientProbe {
    pub fn second_order() -> Self {
        QuotientProbe {
            t_grid: vec![1e-3, 1e-4, 1e-5],
            radius: 2e-2,
            radius_exponent: 0.5,
            samples: 256,
            refine_polls: 6000,
            seed: 0,
        }
    }

    pub fn first_order() -> Self {
        QuotientProbe {
            t_grid: vec![1e-4, 1e-5, 1e-6],
            radius: 1e-4,
            radius_exponent: 1.0,
            samples: 64,
            refine_polls: 0,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_grid.is_empty() {
            return Err(Error::param("t_grid must not be empty"));
        }
        if self.t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::param("t_grid entries must be positive"));
        }
        if self.t_grid.windows(2).any(|p| p[1] >= p[0]) {
            return Err(Error::param("t_grid must be strictly decreasing"));
        }
        if self.samples == 0 {
            return Err(Error::param("samples must be at least 1"));
        }
        if !(self.radius.is_finite() && self.radius >= 0.0 && self.radius_exponent.is_finite()) {
            return Err(Error::param("radius must be finite and nonnegative"));
        }
        Ok(())
    }

    fn ball_radius(&self, t: f64) -> f64 {
        self.radius * t.powf(self.radius_exponent)
    }
}

/// Per-level record of a probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeLevel {
    pub t: f64,
    pub min_quotient: ExtReal,
    pub at_w_quotient: ExtReal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub estimate: ExtReal,
    pub levels: Vec<ProbeLevel>,
}

fn stream_rng(seed: u64, level: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((level as u64) << 32) | index as u64);
    rng
}

/// Uniform sample from the ball of radius `r` around `center`.
fn ball_sample(center: &[f64], r: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = center.len();
    let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let gn = norm(&g).max(f64::MIN_POSITIVE);
    let u: f64 = rng.random();
    let scale = r * u.powf(1.0 / d as f64) / gn;
    center.iter().zip(&g).map(|(c, gi)| c + scale * gi).collect()
}

/// Direct search for a smaller value inside `ball(center, r)`. Each sweep polls
/// `±step` along a fresh random orthonormal basis (the coordinate axes on the
/// first sweep of every step size); the step halves after six failed sweeps,
/// from `r/2` down to `r·1e−4`.
fn direct_search_in_ball(
    center: &[f64],
    r: f64,
    start: (ExtReal, Vec<f64>),
    max_polls: usize,
    rng: &mut ChaCha8Rng,
    f: impl Fn(&[f64]) -> ExtReal,
) -> (ExtReal, Vec<f64>) {
    let d = center.len();
    let (mut best, mut p) = start;
    let mut step = 0.5 * r;
    let mut polls = 0;
    let mut failures = 0;
    while step > 1e-4 * r && polls < max_polls {
        let basis = if failures == 0 {
            DMatrix::identity(d, d)
        } else {
            let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            g.qr().q()
        };
        let mut improved = false;
        'sweep: for i in 0..d {
            for s in [step, -step] {
                let q: Vec<f64> = p.iter().enumerate().map(|(j, pj)| pj + s * basis[(j, i)]).collect();
                if norm(&sub(&q, center)) > r {
                    continue;
                }
                polls += 1;
                let val = f(&q);
                if val < best {
                    best = val;
                    p = q;
                    improved = true;
                    break 'sweep;
                }
            }
        }
        if improved {
            failures = 0;
        } else {
            failures += 1;
            if failures >= 6 {
                step *= 0.5;
                failures = 0;
            }
        }
    }
    (best, p)
}

fn run_probe(
    probe: &QuotientProbe,
    w: &[f64],
    quotient: impl Fn(&[f64], f64) -> ExtReal,
) -> Result<Vec<ProbeLevel>> {
    probe.validate()?;
    let mut levels = Vec::with_capacity(probe.t_grid.len());
    for (li, &t) in probe.t_grid.iter().enumerate() {
        let at_w = quotient(w, t);
        let r = probe.ball_radius(t);
        let mut best = (at_w, w.to_vec());
        for k in 0..probe.samples {
            let mut rng = stream_rng(probe.seed, li, k);
            let wp = ball_sample(w, r, &mut rng);
            let q = quotient(&wp, t);
            if q < best.0 {
                best = (q, wp);
            }
        }
        if probe.refine_polls > 0 && best.0.is_finite() && r > 0.0 {
            let mut rng = stream_rng(probe.seed, li, usize::MAX >> 32);
            best = direct_search_in_ball(w, r, best, probe.refine_polls, &mut rng, |p| quotient(p, t));
        }
        let best = best.0;
        levels.push(ProbeLevel {
            t,
            min_quotient: best,
            at_w_quotient: at_w,
        });
    }
    Ok(levels)
}

/// Liminf surrogate for `d²f(x,v)(w)`: the smallest quotient over the two
/// finest `t` levels, sampling `w` itself and `samples` points of a ball.
pub fn numeric_second_subderivative(
    f: &Objective,
    x: &[f64],
    v: &[f64],
    w: &[f64],
    probe: &QuotientProbe,
) -> Result<ProbeOutcome> {
    check_dim(x.len(), v.len())?;
    check_dim(x.len(), w.len())?;
    let fx = finite_base(f, x)?;
    let levels = run_probe(probe, w, |wp, t| quotient2(f, fx, x, v, wp, t))?;
    let tail = levels.len().saturating_sub(2);
    let estimate = levels[tail..]
        .iter()
        .fold(ExtReal::PosInf, |m, l| m.min(l.min_quotient));
    Ok(ProbeOutcome { estimate, levels })
}

/// Liminf surrogate for `df(x)(w)`: smallest first-order quotient over all levels.
pub fn numeric_subderivative(f: &Objective, x: &[f64], w: &[f64], probe: &QuotientProbe) -> Result<ProbeOutcome> {
    check_dim(x.len(), w.len())?;
    let fx = finite_base(f, x)?;
    let levels = run_probe(probe, w, |wp, t| match f(&axpy(x, t, wp)) {
        ExtReal::PosInf => ExtReal::PosInf,
        ExtReal::Finite(ft) => ExtReal::Finite((ft - fx) / t),
    })?;
    let estimate = levels.iter().fold(ExtReal::PosInf, |m, l| m.min(l.min_quotient));
    Ok(ProbeOutcome { estimate, levels })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttainmentConfig {
    pub t_seq: Vec<f64>,
    /// Search radius at level `t` is `radius · √t`.
    pub radius: f64,
    pub success_tol: f64,
    pub max_evals: usize,
}

impl Default for AttainmentConfig {
    fn default() -> Self {
        AttainmentConfig {
            t_seq: vec![1e-2, 1e-3, 1e-4, 1e-5],
            radius: 0.05,
            success_tol: 1e-2,
            max_evals: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttainmentStep {
    pub t: f64,
    pub w: Vec<f64>,
    pub quotient: ExtReal,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttainmentResult {
    pub achieved: Vec<AttainmentStep>,
    pub success: bool,
}

fn misfit(q: ExtReal, target: f64) -> f64 {
    match q {
        ExtReal::Finite(v) => (v - target).abs(),
        ExtReal::PosInf => f64::INFINITY,
    }
}

/// Searches, level by level, for `w_k` near `w` with `Δ²_{t_k}(w_k) ≈ target`
/// by derivative-free coordinate search inside a ball of radius `∝ √t_k`.
pub fn epi_attainment_search(
    f: &Objective,
    x: &[f64],
    v: &[f64],
    w: &[f64],
    target: f64,
    cfg: &AttainmentConfig,
) -> Result<AttainmentResult> {
    check_dim(x.len(), v.len())?;
    check_dim(x.len(), w.len())?;
    if !target.is_finite() {
        return Err(Error::param("attainment target must be finite"));
    }
    if cfg.t_seq.is_empty() || cfg.t_seq.windows(2).any(|p| p[1] >= p[0]) || cfg.t_seq[0] <= 0.0 {
        return Err(Error::param("t_seq must be positive and strictly decreasing"));
    }
    let fx = finite_base(f, x)?;
    let stop = 0.1 * cfg.success_tol;
    let mut achieved = Vec::with_capacity(cfg.t_seq.len());
    for &t in &cfg.t_seq {
        let big_r = cfg.radius * t.sqrt();
        let obj = |wp: &[f64]| misfit(quotient2(f, fx, x, v, wp, t), target);
        let mut cur = w.to_vec();
        let mut cur_val = obj(&cur);
        let mut step = 0.5 * big_r;
        let mut evals = 1;
        while cur_val > stop && step > 1e-6 * big_r && evals < cfg.max_evals {
            let mut improved = false;
            'poll: for i in 0..cur.len() {
                for sgn in [1.0, -1.0] {
                    let mut cand = cur.clone();
                    cand[i] += sgn * step;
                    if norm(&crate::symfun::sub(&cand, w)) > big_r {
                        continue;
                    }
                    let val = obj(&cand);
                    evals += 1;
                    if val < cur_val {
                        cur = cand;
                        cur_val = val;
                        improved = true;
                        break 'poll;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        let quotient = quotient2(f, fx, x, v, &cur, t);
        let distance = norm(&crate::symfun::sub(&cur, w));
        achieved.push(AttainmentStep {
            t,
            w: cur,
            quotient,
            distance,
        });
    }
    let last = achieved.last().expect("nonempty t_seq");
    let close = misfit(last.quotient, target) <= cfg.success_tol;
    let tail = &achieved[achieved.len().saturating_sub(3)..];
    let monotone = tail.windows(2).all(|p| p[1].distance <= p[0].distance + 1e-15);
    Ok(AttainmentResult {
        success: close && monotone,
        achieved,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxSearch {
    /// Final grid step in the scalar case.
    pub scalar_step: f64,
    /// Random restarts in the vector case (in addition to the start at `x`).
    pub restarts: usize,
    pub max_polls: usize,
    pub seed: u64,
}

impl Default for ProxSearch {
    fn default() -> Self {
        ProxSearch {
            scalar_step: 1e-5,
            restarts: 10,
            max_polls: 20_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumericProx {
    pub point: Vec<f64>,
    pub objective: f64,
    /// Set when the minimizer sits on the search-region boundary after widening.
    pub flagged: bool,
}

/// Brute-force minimizer of `f(p) + ‖p − x‖²/(2γ)`.
pub fn numeric_prox(f: &Objective, gamma: f64, x: &[f64], cfg: &ProxSearch) -> Result<NumericProx> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::param("gamma must be positive"));
    }
    check_finite(x, "prox argument")?;
    if x.is_empty() {
        return Err(Error::param("empty prox argument"));
    }
    let big_f = |p: &[f64]| -> f64 {
        match f(p) {
            ExtReal::Finite(v) => {
                let d = crate::symfun::sub(p, x);
                v + dot(&d, &d) / (2.0 * gamma)
            }
            ExtReal::PosInf => f64::INFINITY,
        }
    };
    if x.len() == 1 {
        Ok(scalar_prox(&|s| big_f(&[s]), gamma, x[0], cfg))
    } else {
        Ok(vector_prox(&big_f, gamma, x, cfg))
    }
}

fn scalar_prox(obj: &dyn Fn(f64) -> f64, gamma: f64, x: f64, cfg: &ProxSearch) -> NumericProx {
    const COARSE: usize = 4000;
    let mut half = 5.0 * gamma * (1.0 + x.abs());
    let mut flagged = false;
    let mut best = (x, obj(x));
    for attempt in 0..2 {
        let lo = x - half;
        let hc = 2.0 * half / COARSE as f64;
        let vals: Vec<f64> = (0..=COARSE).map(|k| obj(lo + hc * k as f64)).collect();
        let mut cands: Vec<usize> = (0..=COARSE)
            .filter(|&k| (k == 0 || vals[k] <= vals[k - 1]) && (k == COARSE || vals[k] <= vals[k + 1]))
            .collect();
        cands.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        cands.truncate(3);
        best = (x, obj(x));
        for &k in &cands {
            let c = lo + hc * k as f64;
            let fine = (2.0 * hc / cfg.scalar_step).ceil() as usize;
            let mut local = (c, vals[k]);
            for j in 0..=fine {
                let s = c - hc + cfg.scalar_step * j as f64;
                let v = obj(s);
                if v < local.1 {
                    local = (s, v);
                }
            }
            let refined = golden(obj, local.0 - cfg.scalar_step, local.0 + cfg.scalar_step);
            let rv = obj(refined);
            if rv < local.1 {
                local = (refined, rv);
            }
            if local.1 < best.1 {
                best = local;
            }
        }
        let at_edge = (best.0 - lo) < hc || (lo + 2.0 * half - best.0) < hc;
        if !at_edge {
            break;
        }
        if attempt == 1 {
            flagged = true;
        }
        half *= 4.0;
    }
    NumericProx {
        point: vec![best.0],
        objective: best.1,
        flagged,
    }
}

fn golden(obj: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (obj(c), obj(d));
    for _ in 0..80 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = obj(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = obj(d);
        }
    }
    0.5 * (a + b)
}

fn vector_prox(obj: &dyn Fn(&[f64]) -> f64, gamma: f64, x: &[f64], cfg: &ProxSearch) -> NumericProx {
    let scale = gamma * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let mut best = (x.to_vec(), obj(x));
    for start in 0..=cfg.restarts {
        let mut rng = stream_rng(cfg.seed, 1, start);
        let p0: Vec<f64> = if start == 0 {
            x.to_vec()
        } else {
            x.iter()
                .map(|v| v + scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let (p, _) = gradient_sampling(obj, p0, scale, cfg.max_polls, &mut rng);
        let (p, v) = pattern_polish(obj, p, 1e-3 * scale, cfg.max_polls, &mut rng);
        if v < best.1 {
            best = (p, v);
        }
    }
    NumericProx {
        point: best.0,
        objective: best.1,
        flagged: false,
    }
}

fn fd_gradient(obj: &dyn Fn(&[f64]) -> f64, p: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; p.len()];
    let mut q = p.to_vec();
    for i in 0..p.len() {
        let h = 1e-7 * (1.0 + p[i].abs());
        q[i] = p[i] + h;
        let fp = obj(&q);
        q[i] = p[i] - h;
        let fm = obj(&q);
        q[i] = p[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Gradient sampling: steps along the negative minimum-norm element of the
/// convex hull of gradients sampled in an `ε`-ball, shrinking `ε` on stalls.
fn gradient_sampling(
    obj: &dyn Fn(&[f64]) -> f64,
    mut p: Vec<f64>,
    scale: f64,
    max_iter: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, f64) {
    let n = p.len();
    let mut val = obj(&p);
    let mut eps = 0.1 * scale;
    let eps_min = 1e-9 * (1.0 + scale);
    let mut iter = 0;
    while eps > eps_min && iter < max_iter {
        iter += 1;
        let mut grads = vec![fd_gradient(obj, &p)];
        for _ in 0..(2 * n) {
            let q = ball_sample(&p, eps, rng);
            grads.push(fd_gradient(obj, &q));
        }
        let g = crate::symfun::min_norm_in_hull(&grads, 2_000);
        let gn = norm(&g);
        if gn <= 1e-9 {
            eps *= 0.1;
            continue;
        }
        let d: Vec<f64> = g.iter().map(|v| -v / gn).collect();
        let mut s = eps.max(gn * gamma_free_step(scale));
        let mut accepted = false;
        for _ in 0..40 {
            let cand = axpy(&p, s, &d);
            let cv = obj(&cand);
            if cv < val - 1e-6 * s * gn {
                p = cand;
                val = cv;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            eps *= 0.1;
        }
    }
    (p, val)
}

fn gamma_free_step(scale: f64) -> f64 {
    scale.max(1e-12)
}

fn pattern_polish(
    obj: &dyn Fn(&[f64]) -> f64,
    mut cur: Vec<f64>,
    step0: f64,
    max_polls: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, f64) {
    let n = cur.len();
    let mut cur_val = obj(&cur);
    let mut step = step0;
    let min_step = 1e-13 * (1.0 + step0);
    let mut polls = 0;
    while step > min_step && polls < max_polls {
        polls += 1;
        let mut moved = None;
        for k in 0..(3 * n) {
            let d: Vec<f64> = if k < 2 * n {
                let mut e = vec![0.0; n];
                e[k / 2] = if k % 2 == 0 { 1.0 } else { -1.0 };
                e
            } else {
                let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let gn = norm(&g).max(f64::MIN_POSITIVE);
                g.iter().map(|v| v / gn).collect()
            };
            let cand = axpy(&cur, step, &d);
            let v = obj(&cand);
            if v < cur_val && moved.as_ref().is_none_or(|(_, bv)| v < *bv) {
                moved = Some((cand, v));
            }
        }
        match moved {
            Some((cand, v)) => {
                cur = cand;
                cur_val = v;
                step *= 2.0;
            }
            None => step *= 0.5,
        }
    }
    (cur, cur_val)
}

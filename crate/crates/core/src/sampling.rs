//! Random instances at supported points and direction generators used by the
//! verification suites and property tests.

use nalgebra::DMatrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spectral::{critical_cone_definition_gap, spectral_subgradient, SubgradientTriple};
use crate::symfun::{mcp_phi, theta_subgradients, SymmetricFunctionSpec, ThetaKind};
use crate::symmat::{eig_default, EigenSystem, SymMatrix};

pub type SampleRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` derived from `seed`.
pub fn stream(seed: u64, index: u64) -> SampleRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

fn normal(rng: &mut SampleRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn random_orthogonal(n: usize, rng: &mut SampleRng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| normal(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn random_symmetric(n: usize, rng: &mut SampleRng) -> SymMatrix {
    let g = DMatrix::from_fn(n, n, |_, _| normal(rng));
    SymMatrix::new(g).expect("finite gaussian matrix")
}

/// Random symmetric matrix with unit Frobenius norm.
pub fn random_unit_symmetric(n: usize, rng: &mut SampleRng) -> SymMatrix {
    let h = random_symmetric(n, rng);
    let nrm = h.norm_fro();
    h.scale(1.0 / nrm)
}

/// `Q Diag(λ) Qᵀ` for a random orthogonal `Q`.
pub fn prescribed_spectrum(lambda: &[f64], rng: &mut SampleRng) -> SymMatrix {
    let q = random_orthogonal(lambda.len(), rng);
    SymMatrix::from_diag(lambda).congruence(&q)
}

/// Random composition of `n` into `r` positive parts.
pub fn random_sizes(n: usize, r: usize, rng: &mut SampleRng) -> Vec<usize> {
    assert!(r >= 1 && r <= n);
    let mut cuts: Vec<usize> = (1..n).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(r - 1).collect();
    cuts.sort_unstable();
    let mut sizes = Vec::with_capacity(r);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(n)) {
        sizes.push(c - prev);
        prev = c;
    }
    sizes
}

fn expand(sizes: &[usize], values: &[f64]) -> Vec<f64> {
    sizes
        .iter()
        .zip(values)
        .flat_map(|(s, v)| std::iter::repeat_n(*v, *s))
        .collect()
}

fn decreasing_values(r: usize, gap_lo: f64, gap_hi: f64, rng: &mut SampleRng) -> Vec<f64> {
    let mut v = vec![rng.random_range(-1.0..2.5)];
    for _ in 1..r {
        let last = *v.last().unwrap();
        v.push(last - rng.random_range(gap_lo..gap_hi));
    }
    v
}

fn random_weights(k: usize, rng: &mut SampleRng) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -rng.random_range(1e-3f64..1.0).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Convex combination of `k` vertices: a vertex, a face or an interior point.
fn random_hull_weights(k: usize, rng: &mut SampleRng) -> Vec<f64> {
    let mut w = vec![0.0; k];
    match rng.random_range(0..3) {
        0 => w[rng.random_range(0..k)] = 1.0,
        1 => {
            let mut idx: Vec<usize> = (0..k).collect();
            idx.shuffle(rng);
            let m = rng.random_range(1..=k);
            for (j, wj) in idx[..m].iter().zip(random_weights(m, rng)) {
                w[*j] = wj;
            }
        }
        _ => w = random_weights(k, rng),
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    OrderStat,
    Mcp,
    EigGap,
    SmoothSep,
}

impl Kind {
    pub const ALL: [Kind; 4] = [Kind::OrderStat, Kind::Mcp, Kind::EigGap, Kind::SmoothSep];
}

/// A spectral function at a supported point together with a subgradient.
#[derive(Debug, Clone)]
pub struct Instance {
    pub kind: Kind,
    pub spec: SymmetricFunctionSpec,
    pub x: SymMatrix,
    pub es: EigenSystem,
    pub triple: SubgradientTriple,
}

/// Instance shape controls.
#[derive(Debug, Clone, Copy, Default)]
pub struct Shape {
    /// Bias towards points where non-critical directions exist: a repeated
    /// active block for ORDER_STAT, a zero block for MCP, two active gaps for EIG_GAP.
    pub degenerate: bool,
    /// Minimum number of distinct eigenvalues.
    pub min_blocks: usize,
}

struct Draft {
    spec: SymmetricFunctionSpec,
    sizes: Vec<usize>,
    lambda: Vec<f64>,
    y: Vec<f64>,
}

fn draft_order_stat(n: usize, shape: Shape, rng: &mut SampleRng) -> Draft {
    let max_r = if shape.degenerate { n - 1 } else { n }.min(4);
    loop {
        let r = rng.random_range(shape.min_blocks.max(1)..=max_r);
        let sizes = random_sizes(n, r, rng);
        let values = decreasing_values(r, 0.6, 1.6, rng);
        let candidates: Vec<usize> = (0..r).filter(|&m| !shape.degenerate || sizes[m] >= 2).collect();
        let Some(&b) = candidates.choose(rng) else { continue };
        let start: usize = sizes[..b].iter().sum();
        let mut y = vec![0.0; n];
        for (k, w) in random_hull_weights(sizes[b], rng).into_iter().enumerate() {
            y[start + k] = w;
        }
        return Draft {
            spec: SymmetricFunctionSpec::order_stat(start + 1).unwrap(),
            lambda: expand(&sizes, &values),
            sizes,
            y,
        };
    }
}

fn draft_mcp(n: usize, shape: Shape, rng: &mut SampleRng) -> Draft {
    let a = rng.random_range(1.5..3.5);
    let c = rng.random_range(0.5..1.5);
    let ac = a * c;
    loop {
        let r = rng.random_range(shape.min_blocks.max(1)..=n.min(4));
        let zero_at = if shape.degenerate || rng.random_bool(0.5) {
            Some(rng.random_range(0..r))
        } else {
            None
        };
        let mut values: Vec<f64> = (0..r)
            .map(|m| {
                if Some(m) == zero_at {
                    return 0.0;
                }
                let mag = if rng.random_bool(0.5) {
                    rng.random_range(0.15 * ac..0.85 * ac)
                } else {
                    rng.random_range(1.15 * ac..1.15 * ac + 2.0)
                };
                if rng.random_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        values.sort_by(|p, q| q.total_cmp(p));
        if values.windows(2).any(|w| w[0] - w[1] < 0.2) {
            continue;
        }
        let sizes = random_sizes(n, r, rng);
        let lambda = expand(&sizes, &values);
        let y = lambda
            .iter()
            .map(|&t| {
                if t == 0.0 {
                    match rng.random_range(0..3) {
                        0 => c,
                        1 => -c,
                        _ => rng.random_range(-0.9 * c..0.9 * c),
                    }
                } else {
                    t.signum() * (c - t.abs() / a).max(0.0)
                }
            })
            .collect();
        return Draft {
            spec: SymmetricFunctionSpec::mcp(a, c).unwrap(),
            sizes,
            lambda,
            y,
        };
    }
}

fn draft_eig_gap(n: usize, shape: Shape, rng: &mut SampleRng) -> Draft {
    assert!(n >= 2);
    let big = rng.random_range(1.0..2.0);
    let n_active = if n >= 3 && (shape.degenerate || rng.random_bool(0.4)) { 2 } else { 1 };
    let mut pos: Vec<usize> = (0..n - 1).collect();
    pos.shuffle(rng);
    let active: Vec<usize> = pos[..n_active].to_vec();
    let mut gaps = vec![0.0; n - 1];
    for (k, g) in gaps.iter_mut().enumerate() {
        *g = if active.contains(&k) {
            big
        } else {
            let near_active = (k > 0 && active.contains(&(k - 1))) || active.contains(&(k + 1));
            if !near_active && rng.random_bool(0.4) {
                0.0
            } else {
                rng.random_range(0.1..0.7) * big
            }
        };
    }
    let mut lambda = vec![rng.random_range(-1.0..2.0)];
    for g in &gaps {
        let last = *lambda.last().unwrap();
        lambda.push(last - g);
    }
    let mut sizes = vec![1];
    for g in &gaps {
        if *g == 0.0 {
            *sizes.last_mut().unwrap() += 1;
        } else {
            sizes.push(1);
        }
    }
    let mut y = vec![0.0; n];
    let mut sorted_active = active.clone();
    sorted_active.sort_unstable();
    for (k, w) in sorted_active.iter().zip(random_hull_weights(n_active, rng)) {
        y[*k] += w;
        y[*k + 1] -= w;
    }
    Draft {
        spec: SymmetricFunctionSpec::eig_gap(),
        sizes,
        lambda,
        y,
    }
}

fn draft_smooth(n: usize, shape: Shape, rng: &mut SampleRng) -> Draft {
    let coeff = if rng.random_bool(0.5) { 1.0 } else { rng.random_range(0.5..2.0) };
    let r = rng.random_range(shape.min_blocks.max(1)..=n.min(4));
    let sizes = random_sizes(n, r, rng);
    let values = decreasing_values(r, 0.4, 1.2, rng);
    let lambda = expand(&sizes, &values);
    let y = lambda.iter().map(|t| coeff * t).collect();
    Draft {
        spec: SymmetricFunctionSpec::smooth_sep(coeff).unwrap(),
        sizes,
        lambda,
        y,
    }
}

/// Random instance of `kind` in dimension `n` at a point where every
/// formula applies.
pub fn supported_instance(kind: Kind, n: usize, shape: Shape, rng: &mut SampleRng) -> Result<Instance> {
    let max_blocks = if shape.degenerate && kind == Kind::OrderStat { n.saturating_sub(1) } else { n }.min(4);
    if n == 0 || shape.min_blocks > max_blocks {
        return Err(Error::param(format!("no {kind:?} instance of size {n} with shape {shape:?}")));
    }
    for _ in 0..200 {
        let draft = match kind {
            Kind::OrderStat => draft_order_stat(n, shape, rng),
            Kind::Mcp => draft_mcp(n, shape, rng),
            Kind::EigGap => draft_eig_gap(n, shape, rng),
            Kind::SmoothSep => draft_smooth(n, shape, rng),
        };
        if draft.sizes.len() < shape.min_blocks {
            continue;
        }
        let x = prescribed_spectrum(&draft.lambda, rng);
        let es = eig_default(&x)?;
        let lens: Vec<usize> = es.blocks().iter().map(|b| b.len()).collect();
        if es.is_ambiguous() || lens != draft.sizes {
            continue;
        }
        // y lives on the eigenbasis positions; its values only depend on the block structure
        let y = match kind {
            Kind::SmoothSep => {
                let ThetaKind::SmoothSep { coeff } = draft.spec.kind() else { unreachable!() };
                es.snapped_lambda().iter().map(|t| coeff * t).collect()
            }
            _ => draft.y,
        };
        let triple = spectral_subgradient(&draft.spec, &es, &y)?;
        return Ok(Instance {
            kind,
            spec: draft.spec,
            x,
            es,
            triple,
        });
    }
    Err(Error::Inconsistent("could not draw a supported instance".into()))
}

/// Sorted `λ′` values that keep `(λ(X), v)` critical for `θ`.
fn critical_d(inst: &Instance, rng: &mut SampleRng) -> Result<Vec<f64>> {
    let es = &inst.es;
    let v = inst.triple.v();
    let n = es.n();
    let mut d = vec![0.0; n];
    for b in es.blocks() {
        let mut vals: Vec<f64> = (0..b.len()).map(|_| normal(rng)).collect();
        vals.sort_by(|p, q| q.total_cmp(p));
        d[b.clone()].copy_from_slice(&vals);
    }
    let lam = es.snapped_lambda();
    match inst.spec.kind() {
        ThetaKind::OrderStat { i } => {
            let b = es.blocks()[es.block_of(i - 1)].clone();
            let top = normal(rng);
            for k in b {
                d[k] = if v[k] > 1e-12 { top } else { top - normal(rng).abs() };
            }
            let bb = es.blocks()[es.block_of(i - 1)].clone();
            d[bb].sort_by(|p, q| q.total_cmp(p));
        }
        ThetaKind::Mcp { c, .. } => {
            let zero_tol = crate::symfun::active_tol(&lam);
            for (m, b) in es.blocks().iter().enumerate() {
                if es.mu()[m].abs() > zero_tol {
                    continue;
                }
                for k in b.clone() {
                    d[k] = if v[k] >= c - 1e-12 {
                        normal(rng).abs()
                    } else if v[k] <= -c + 1e-12 {
                        -normal(rng).abs()
                    } else {
                        0.0
                    };
                }
                d[b.clone()].sort_by(|p, q| q.total_cmp(p));
            }
        }
        ThetaKind::EigGap => {
            let Some((coef, _)) = theta_subgradients(&inst.spec, &lam)?.hull_coefficients(v) else {
                return Err(Error::Inconsistent("gap hull".into()));
            };
            let active: Vec<usize> = (0..n - 1)
                .filter(|&k| {
                    let mut e = vec![0.0; n];
                    e[k] = 1.0;
                    e[k + 1] = -1.0;
                    lam[k] - lam[k + 1] > 0.0 && active_vertex(&inst.spec, &lam, &e)
                })
                .collect();
            let slope = normal(rng);
            for (idx, &k) in active.iter().enumerate() {
                d[k + 1] = if coef[idx] > 1e-12 {
                    d[k] - slope
                } else {
                    d[k] - slope + normal(rng).abs()
                };
            }
        }
        ThetaKind::SmoothSep { .. } => {}
    }
    Ok(d)
}

fn active_vertex(spec: &SymmetricFunctionSpec, lam: &[f64], e: &[f64]) -> bool {
    match theta_subgradients(spec, lam) {
        Ok(crate::symfun::Subdifferential::Hull { vertices }) => vertices.iter().any(|v| v == e),
        _ => false,
    }
}

/// A unit-norm direction in the critical cone of `g` at `(X, Y)`, with
/// random rotations inside groups of equal `y` and random off-block coupling.
pub fn critical_direction(inst: &Instance, rng: &mut SampleRng) -> Result<SymMatrix> {
    let es = &inst.es;
    let n = es.n();
    let y = inst.triple.y();
    let d = critical_d(inst, rng)?;
    let mut w = DMatrix::from_fn(n, n, |_, _| normal(rng));
    for (m, b) in es.blocks().iter().enumerate() {
        let k = b.len();
        // local positions ordered so that y is nonincreasing; d follows this order
        let local_perm = inst.triple.q().block_perm(m);
        let mut c = DMatrix::zeros(k, k);
        for (pos, &p) in local_perm.iter().enumerate() {
            c[(p, p)] = d[b.start + pos];
        }
        let mut r = DMatrix::identity(k, k);
        let mut seen = vec![false; k];
        for i in 0..k {
            if seen[i] {
                continue;
            }
            let group: Vec<usize> = (0..k).filter(|&j| (y[b.start + j] - y[b.start + i]).abs() <= 1e-12).collect();
            for &j in &group {
                seen[j] = true;
            }
            if group.len() > 1 {
                let q = random_orthogonal(group.len(), rng);
                for (gi, &a) in group.iter().enumerate() {
                    for (gj, &bb) in group.iter().enumerate() {
                        r[(a, bb)] = q[(gi, gj)];
                    }
                }
            }
        }
        let c = &r * c * r.transpose();
        w.view_mut((b.start, b.start), (k, k)).copy_from(&c);
    }
    let w = SymMatrix::new(w)?;
    // restore the exact diagonal blocks after symmetrization
    let h = w.congruence(es.u());
    let nrm = h.norm_fro();
    if nrm == 0.0 {
        return Ok(h);
    }
    Ok(h.scale(1.0 / nrm))
}

/// A unit-norm direction with `dg(X)(H) − ⟨Y,H⟩ ≥ margin`, or `None` when
/// none is found (e.g. when every direction is critical).
pub fn noncritical_direction(inst: &Instance, margin: f64, rng: &mut SampleRng) -> Result<Option<SymMatrix>> {
    for _ in 0..500 {
        let h = random_unit_symmetric(inst.es.n(), rng);
        let gap = critical_cone_definition_gap(&inst.spec, &inst.es, &inst.triple, &h)?;
        if gap >= margin {
            return Ok(Some(h));
        }
    }
    Ok(None)
}

/// Random block-diagonal rotations for [`EigenSystem::with_rotated_blocks`].
pub fn random_block_rotations(es: &EigenSystem, rng: &mut SampleRng) -> Vec<DMatrix<f64>> {
    es.blocks().iter().map(|b| random_orthogonal(b.len(), rng)).collect()
}

/// Uniform `θ` spec of the given kind with random parameters valid for dimension `n`.
pub fn random_spec(kind: Kind, n: usize, rng: &mut SampleRng) -> SymmetricFunctionSpec {
    match kind {
        Kind::OrderStat => SymmetricFunctionSpec::order_stat(rng.random_range(1..=n)).unwrap(),
        Kind::Mcp => SymmetricFunctionSpec::mcp(rng.random_range(1.5..3.5), rng.random_range(0.5..1.5)).unwrap(),
        Kind::EigGap => SymmetricFunctionSpec::eig_gap(),
        Kind::SmoothSep => SymmetricFunctionSpec::smooth_sep(rng.random_range(0.5..2.0)).unwrap(),
    }
}

/// MCP value helper re-exported for scalar checks.
pub fn mcp_scalar(t: f64, a: f64, c: f64) -> f64 {
    mcp_phi(t, a, c)
}

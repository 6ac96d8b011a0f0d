//! Dense symmetric matrices, ordered eigendecomposition with block clustering,
//! shifted pseudoinverses, block permutations and Fan's inequality.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dim, Error, Result};
use crate::tol;

/// A real symmetric matrix. Construction symmetrizes via `(A + Aᵀ)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        if a.nrows() == 0 {
            return Err(Error::param("matrix dimension must be positive"));
        }
        if !a.iter().all(|v| v.is_finite()) {
            return Err(Error::NotFinite("matrix entries"));
        }
        let s = (&a + a.transpose()) * 0.5;
        Ok(SymMatrix(s))
    }

    pub fn from_row_major(n: usize, entries: &[f64]) -> Result<Self> {
        check_dim(n * n, entries.len())?;
        Self::new(DMatrix::from_row_slice(n, n, entries))
    }

    pub fn from_diag(d: &[f64]) -> Self {
        assert!(!d.is_empty(), "empty diagonal");
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    /// `U Diag(d) Uᵀ`.
    pub fn from_spectral(u: &DMatrix<f64>, d: &[f64]) -> Result<Self> {
        check_dim(u.ncols(), d.len())?;
        let mut scaled = u.clone();
        for (j, dj) in d.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*dj);
        }
        Self::new(scaled * u.transpose())
    }

    /// Largest asymmetry `max |A_ij − A_ji|` of a raw square matrix.
    pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
        let n = a.nrows().min(a.ncols());
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                m = m.max((a[(i, j)] - a[(j, i)]).abs());
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn row_major(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn norm_fro(&self) -> f64 {
        self.0.norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix(&self.0 * s)
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    /// `self + t·other`.
    pub fn axpy(&self, t: f64, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0 * t)
    }

    /// `Vᵀ A V`.
    pub fn congruence_t(&self, v: &DMatrix<f64>) -> SymMatrix {
        let m = v.transpose() * &self.0 * v;
        SymMatrix((&m + m.transpose()) * 0.5)
    }

    /// `V A Vᵀ`.
    pub fn congruence(&self, v: &DMatrix<f64>) -> SymMatrix {
        let m = v * &self.0 * v.transpose();
        SymMatrix((&m + m.transpose()) * 0.5)
    }

    /// Eigenvalues sorted nonincreasing.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.dim();
        if n == 1 {
            return vec![self.0[(0, 0)]];
        }
        let mut ev: Vec<f64> = self.0.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    pub fn svec_len(n: usize) -> usize {
        n * (n + 1) / 2
    }

    /// Isometric vectorization: upper triangle row by row, off-diagonals scaled by √2.
    pub fn svec(&self) -> Vec<f64> {
        let n = self.dim();
        let r2 = std::f64::consts::SQRT_2;
        let mut out = Vec::with_capacity(Self::svec_len(n));
        for i in 0..n {
            out.push(self.0[(i, i)]);
            for j in (i + 1)..n {
                out.push(r2 * self.0[(i, j)]);
            }
        }
        out
    }

    pub fn from_svec(n: usize, v: &[f64]) -> Result<SymMatrix> {
        check_dim(Self::svec_len(n), v.len())?;
        let r2 = std::f64::consts::SQRT_2;
        let mut m = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            m[(i, i)] = v[k];
            k += 1;
            for j in (i + 1)..n {
                let val = v[k] / r2;
                m[(i, j)] = val;
                m[(j, i)] = val;
                k += 1;
            }
        }
        Ok(SymMatrix(m))
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    n: usize,
    entries: Vec<f64>,
}

/// JSON form `{"n": n, "entries": [row-major]}`.
impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson {
            n: self.dim(),
            entries: self.row_major(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MatrixJson::deserialize(d)?;
        SymMatrix::from_row_major(raw.n, &raw.entries).map_err(serde::de::Error::custom)
    }
}

/// Default clustering tolerance `1e−8 · (1 + ‖X‖₂)`.
pub fn default_cluster_tol(x: &SymMatrix) -> f64 {
    let ev = x.eigenvalues();
    let spec_norm = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    tol::CLUSTER_REL * (1.0 + spec_norm)
}

/// Ordered eigendecomposition `X = U Diag(λ) Uᵀ` with `λ` nonincreasing and
/// eigenvalues grouped into blocks `α_m` of (numerically) equal values.
///
/// Blocks are stored as 0-based half-open ranges.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    x: SymMatrix,
    u: DMatrix<f64>,
    lambda: Vec<f64>,
    blocks: Vec<Range<usize>>,
    mu: Vec<f64>,
    cluster_tol: f64,
    ambiguous: bool,
}

/// Ordered eigendecomposition with greedy consecutive-gap clustering.
pub fn eig(x: &SymMatrix, cluster_tol: f64) -> Result<EigenSystem> {
    if !(cluster_tol > 0.0 && cluster_tol.is_finite()) {
        return Err(Error::param("cluster_tol must be positive and finite"));
    }
    let n = x.dim();
    let (u, lambda) = if n == 1 {
        (DMatrix::identity(1, 1), vec![x.get(0, 0)])
    } else {
        let se = x
            .as_matrix()
            .clone()
            .try_symmetric_eigen(f64::EPSILON, 10_000)
            .ok_or_else(|| Error::EigenFailure("symmetric QR iteration did not converge".into()))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| se.eigenvalues[b].total_cmp(&se.eigenvalues[a]));
        let mut u = DMatrix::zeros(n, n);
        let mut lambda = Vec::with_capacity(n);
        for (k, &j) in order.iter().enumerate() {
            u.set_column(k, &se.eigenvectors.column(j));
            lambda.push(se.eigenvalues[j]);
        }
        (u, lambda)
    };
    if !lambda.iter().all(|v| v.is_finite()) {
        return Err(Error::EigenFailure("non-finite eigenvalue".into()));
    }
    let (blocks, ambiguous) = cluster(&lambda, cluster_tol);
    let mu = block_means(&lambda, &blocks);
    Ok(EigenSystem {
        x: x.clone(),
        u,
        lambda,
        blocks,
        mu,
        cluster_tol,
        ambiguous,
    })
}

/// Same as [`eig`] with [`default_cluster_tol`].
pub fn eig_default(x: &SymMatrix) -> Result<EigenSystem> {
    eig(x, default_cluster_tol(x))
}

fn cluster(lambda: &[f64], tol: f64) -> (Vec<Range<usize>>, bool) {
    let mut blocks = Vec::new();
    let mut ambiguous = false;
    let mut start = 0;
    for i in 1..lambda.len() {
        let gap = lambda[i - 1] - lambda[i];
        if (0.5 * tol..=2.0 * tol).contains(&gap) {
            ambiguous = true;
        }
        if gap > tol {
            blocks.push(start..i);
            start = i;
        }
    }
    blocks.push(start..lambda.len());
    // greedy chaining can stretch a block beyond the tolerance
    for b in &blocks {
        if lambda[b.start] - lambda[b.end - 1] > tol {
            ambiguous = true;
        }
    }
    (blocks, ambiguous)
}

fn block_means(lambda: &[f64], blocks: &[Range<usize>]) -> Vec<f64> {
    blocks
        .iter()
        .map(|b| lambda[b.clone()].iter().sum::<f64>() / b.len() as f64)
        .collect()
}

impl EigenSystem {
    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    pub fn x(&self) -> &SymMatrix {
        &self.x
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn cluster_tol(&self) -> f64 {
        self.cluster_tol
    }

    /// True when some consecutive gap lies in `[tol/2, 2·tol]` or a block is wider than `tol`.
    pub fn is_ambiguous(&self) -> bool {
        self.ambiguous
    }

    /// Index of the block containing the 0-based position `i`.
    pub fn block_of(&self, i: usize) -> usize {
        self.blocks
            .iter()
            .position(|b| b.contains(&i))
            .expect("position inside 0..n")
    }

    /// Eigenvalues with each block replaced by its mean `μ_m`.
    pub fn snapped_lambda(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (b, mu) in self.blocks.iter().zip(&self.mu) {
            for slot in &mut out[b.clone()] {
                *slot = *mu;
            }
        }
        out
    }

    /// Columns `U_{α_m}`.
    pub fn u_block(&self, m: usize) -> DMatrix<f64> {
        let b = &self.blocks[m];
        self.u.columns(b.start, b.len()).into_owned()
    }

    /// `U_{α_m}ᵀ H U_{α_m}`.
    pub fn compress(&self, m: usize, h: &SymMatrix) -> SymMatrix {
        h.congruence_t(&self.u_block(m))
    }

    /// Spectral projector `U_{α_m} U_{α_m}ᵀ`.
    pub fn projector(&self, m: usize) -> SymMatrix {
        let ub = self.u_block(m);
        SymMatrix(&ub * ub.transpose())
    }

    /// `U Diag(d) Uᵀ`.
    pub fn lift(&self, d: &[f64]) -> Result<SymMatrix> {
        SymMatrix::from_spectral(&self.u, d)
    }

    /// `Uᵀ H U`.
    pub fn to_eigenbasis(&self, h: &SymMatrix) -> SymMatrix {
        h.congruence_t(&self.u)
    }

    /// Replaces `U_{α_m}` by `U_{α_m} R_m` for orthogonal `R_m`; all block
    /// structure is kept. Useful for checking invariance to the choice of `U`.
    pub fn with_rotated_blocks(&self, rotations: &[DMatrix<f64>]) -> Result<EigenSystem> {
        check_dim(self.block_count(), rotations.len())?;
        let mut u = self.u.clone();
        for (b, r) in self.blocks.iter().zip(rotations) {
            if r.nrows() != b.len() || r.ncols() != b.len() {
                return Err(Error::DimensionMismatch {
                    expected: b.len(),
                    got: r.nrows(),
                });
            }
            let dev = (r.transpose() * r - DMatrix::identity(b.len(), b.len())).amax();
            if dev > 1e-10 {
                return Err(Error::param("block rotation is not orthogonal"));
            }
            let rotated = self.u.columns(b.start, b.len()) * r;
            u.columns_mut(b.start, b.len()).copy_from(&rotated);
        }
        Ok(EigenSystem { u, ..self.clone() })
    }
}

/// `(μ_m I − X)† = Σ_{s≠m} (μ_m − μ_s)⁻¹ U_{α_s} U_{α_s}ᵀ`, with `m` a 0-based block index.
pub fn pinv_shift(es: &EigenSystem, m: usize) -> Result<SymMatrix> {
    if m >= es.block_count() {
        return Err(Error::IndexOutOfRange {
            index: m + 1,
            len: es.block_count(),
        });
    }
    let n = es.n();
    let mut scaled = DMatrix::zeros(n, n);
    for (s, b) in es.blocks.iter().enumerate() {
        if s == m {
            continue;
        }
        let w = 1.0 / (es.mu[m] - es.mu[s]);
        for j in b.clone() {
            scaled.set_column(j, &(es.u.column(j) * w));
        }
    }
    SymMatrix::new(scaled * es.u.transpose())
}

/// A permutation acting inside each eigenvalue block: `(Qy)_i = y_{perm[i]}`
/// with `perm` mapping every block onto itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPermutation {
    perm: Vec<usize>,
    blocks: Vec<Range<usize>>,
}

impl BlockPermutation {
    pub fn identity(blocks: &[Range<usize>]) -> Self {
        let n = blocks.last().map_or(0, |b| b.end);
        BlockPermutation {
            perm: (0..n).collect(),
            blocks: blocks.to_vec(),
        }
    }

    /// Builds from an explicit index map, checking that each block maps onto itself.
    pub fn from_perm(perm: Vec<usize>, blocks: &[Range<usize>]) -> Result<Self> {
        let n = blocks.last().map_or(0, |b| b.end);
        check_dim(n, perm.len())?;
        let mut seen = vec![false; n];
        for b in blocks {
            for i in b.clone() {
                let p = perm[i];
                if !b.contains(&p) || seen[p] {
                    return Err(Error::param("not a block permutation"));
                }
                seen[p] = true;
            }
        }
        Ok(BlockPermutation {
            perm,
            blocks: blocks.to_vec(),
        })
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Local permutation of block `m` (positions relative to the block start).
    pub fn block_perm(&self, m: usize) -> Vec<usize> {
        let b = &self.blocks[m];
        self.perm[b.clone()].iter().map(|p| p - b.start).collect()
    }

    pub fn block_perms(&self) -> Vec<Vec<usize>> {
        (0..self.blocks.len()).map(|m| self.block_perm(m)).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, p)| i == *p)
    }

    /// `Qy`.
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&p| y[p]).collect()
    }

    /// `Qᵀv`.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; v.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            y[p] = v[i];
        }
        y
    }

    /// The 0/1 matrix `Q`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.perm.len();
        let mut q = DMatrix::zeros(n, n);
        for (i, &p) in self.perm.iter().enumerate() {
            q[(i, p)] = 1.0;
        }
        q
    }
}

/// Sorts `y` nonincreasingly inside each block of `es` (stable in original
/// index order) and returns `(v, Q)` with `v = Qy`.
pub fn block_sort_permutation(y: &[f64], es: &EigenSystem) -> Result<(Vec<f64>, BlockPermutation)> {
    check_dim(es.n(), y.len())?;
    let mut perm = Vec::with_capacity(y.len());
    for b in es.blocks() {
        let mut idx: Vec<usize> = b.clone().collect();
        idx.sort_by(|&i, &j| y[j].total_cmp(&y[i]));
        perm.extend(idx);
    }
    let q = BlockPermutation {
        perm,
        blocks: es.blocks.clone(),
    };
    Ok((q.apply(y), q))
}

/// `λ(A)ᵀλ(B) − ⟨A,B⟩`, nonnegative by Fan's inequality and zero exactly when
/// `A` and `B` admit a simultaneous ordered spectral decomposition.
pub fn fan_gap(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let la = a.eigenvalues();
    let lb = b.eigenvalues();
    let dot: f64 = la.iter().zip(&lb).map(|(x, y)| x * y).sum();
    Ok(dot - a.inner(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot2(theta: f64) -> DMatrix<f64> {
        let (s, c) = theta.sin_cos();
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    #[test]
    fn identity_is_one_block() {
        let es = eig(&SymMatrix::identity(3), 1e-8).unwrap();
        assert_eq!(es.lambda(), &[1.0, 1.0, 1.0]);
        assert_eq!(es.blocks().to_vec(), vec![0..3; 1]);
        assert_eq!(es.mu(), &[1.0]);
    }

    #[test]
    fn diagonal_blocks() {
        let es = eig(&SymMatrix::from_diag(&[1.0, 3.0, 1.0]), 1e-8).unwrap();
        assert_eq!(es.lambda(), &[3.0, 1.0, 1.0]);
        assert_eq!(es.blocks(), &[0..1, 1..3]);
        assert_eq!(es.mu(), &[3.0, 1.0]);
        assert!(!es.is_ambiguous());
    }

    #[test]
    fn rotated_reconstruction() {
        let q = rot2(0.7);
        let x = SymMatrix::from_diag(&[2.0, -1.0]).congruence(&q);
        let es = eig(&x, 1e-8).unwrap();
        assert!((es.lambda()[0] - 2.0).abs() < 1e-12);
        assert!((es.lambda()[1] + 1.0).abs() < 1e-12);
        let rec = es.lift(es.lambda()).unwrap();
        assert!(rec.sub(&x).max_abs() <= 1e-9);
        for j in 0..2 {
            let d = es.u().column(j).dot(&q.column(j)).abs();
            assert!((d - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn near_tie_is_flagged() {
        let es = eig(&SymMatrix::from_diag(&[1.0, 1.0 + 1e-8]), 1e-8).unwrap();
        assert!(es.is_ambiguous());
    }

    #[test]
    fn pinv_shift_examples() {
        let es = eig(&SymMatrix::from_diag(&[2.0, 1.0]), 1e-8).unwrap();
        let m = pinv_shift(&es, 0).unwrap();
        assert!(m.sub(&SymMatrix::from_diag(&[0.0, 1.0])).max_abs() < 1e-15);
        let es = eig(&SymMatrix::identity(4), 1e-8).unwrap();
        assert_eq!(pinv_shift(&es, 0).unwrap().max_abs(), 0.0);
        assert!(pinv_shift(&es, 1).is_err());
    }

    #[test]
    fn block_sort_examples() {
        let es = eig(&SymMatrix::identity(3), 1e-8).unwrap();
        let (v, q) = block_sort_permutation(&[1.0, 2.0, 3.0], &es).unwrap();
        assert_eq!(v, vec![3.0, 2.0, 1.0]);
        assert_eq!(q.perm(), &[2, 1, 0]);

        let es = eig(&SymMatrix::from_diag(&[3.0, 1.0, 1.0]), 1e-8).unwrap();
        let (v, q) = block_sort_permutation(&[5.0, 1.0, 4.0], &es).unwrap();
        assert_eq!(v, vec![5.0, 4.0, 1.0]);
        assert_eq!(q.perm(), &[0, 2, 1]);
        assert_eq!(q.block_perms(), vec![vec![0], vec![1, 0]]);

        let (v, q) = block_sort_permutation(&[5.0, 4.0, 1.0], &es).unwrap();
        assert_eq!(v, vec![5.0, 4.0, 1.0]);
        assert!(q.is_identity());
    }

    #[test]
    fn block_sort_is_stable() {
        let es = eig(&SymMatrix::identity(3), 1e-8).unwrap();
        let (_, q) = block_sort_permutation(&[1.0, 2.0, 1.0], &es).unwrap();
        assert_eq!(q.perm(), &[1, 0, 2]);
    }

    #[test]
    fn fan_gap_examples() {
        let a = SymMatrix::from_diag(&[2.0, 1.0]);
        assert!(fan_gap(&a, &SymMatrix::from_diag(&[3.0, 0.0])).unwrap().abs() < 1e-14);
        let g = fan_gap(&a, &SymMatrix::from_diag(&[0.0, 3.0])).unwrap();
        assert!((g - 3.0).abs() < 1e-14);
    }

    #[test]
    fn svec_is_isometric() {
        let a = SymMatrix::from_row_major(2, &[1.0, 2.0, 2.0, -3.0]).unwrap();
        let b = SymMatrix::from_row_major(2, &[0.5, -1.0, -1.0, 4.0]).unwrap();
        let dot: f64 = a.svec().iter().zip(b.svec()).map(|(x, y)| x * y).sum();
        assert!((dot - a.inner(&b)).abs() < 1e-14);
        assert_eq!(SymMatrix::from_svec(2, &a.svec()).unwrap().sub(&a).max_abs(), 0.0);
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(matches!(
            SymMatrix::new(DMatrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
        assert!(SymMatrix::from_row_major(1, &[f64::NAN]).is_err());
        let s = SymMatrix::from_row_major(2, &[0.0, 1.0, 3.0, 0.0]).unwrap();
        assert_eq!(s.get(0, 1), 2.0);
        assert_eq!(s.get(1, 0), 2.0);
    }
}

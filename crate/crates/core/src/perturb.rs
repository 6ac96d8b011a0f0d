//! Eigenvalue perturbation: directional derivatives `λ′(X;H)` and the
//! second-order prediction of `λ(X+tH)`.

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::symmat::{pinv_shift, EigenSystem, SymMatrix};

/// `λ′(X;H)`: per-block eigenvalues of the compressions `U_{α_m}ᵀ H U_{α_m}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigDirDeriv {
    pub per_block: Vec<Vec<f64>>,
    pub d: Vec<f64>,
}

pub fn eig_dir_derivative(es: &EigenSystem, h: &SymMatrix) -> Result<EigDirDeriv> {
    check_dim(es.n(), h.dim())?;
    let per_block: Vec<Vec<f64>> = (0..es.block_count())
        .map(|m| es.compress(m, h).eigenvalues())
        .collect();
    let d = per_block.concat();
    Ok(EigDirDeriv { per_block, d })
}

/// Second-order prediction of `λ(X+tH)`: on block `α_m` the eigenvalues of
/// `U_{α_m}ᵀ(tH)U_{α_m} + U_{α_m}ᵀ(tH)(μ_m I−X)†(tH)U_{α_m}` shifted by `μ_m`.
pub fn eig_second_prediction(es: &EigenSystem, h: &SymMatrix, t: f64) -> Result<Vec<f64>> {
    check_dim(es.n(), h.dim())?;
    if !t.is_finite() {
        return Err(Error::NotFinite("t"));
    }
    let th = h.scale(t);
    let mut out = Vec::with_capacity(es.n());
    for m in 0..es.block_count() {
        let ub = es.u_block(m);
        let p = pinv_shift(es, m)?;
        let first = th.congruence_t(&ub);
        let hph = th.as_matrix() * p.as_matrix() * th.as_matrix();
        let second = SymMatrix::new(hph)?.congruence_t(&ub);
        let mu = es.mu()[m];
        out.extend(first.add(&second).eigenvalues().into_iter().map(|e| e + mu));
    }
    Ok(out)
}

/// Position of eigenvalue index `i` (1-based) inside its block, 1-based.
pub fn ell_index(es: &EigenSystem, i: usize) -> Result<usize> {
    if i == 0 || i > es.n() {
        return Err(Error::IndexOutOfRange { index: i, len: es.n() });
    }
    let b = &es.blocks()[es.block_of(i - 1)];
    Ok(i - b.start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmat::eig;

    fn flagship_h() -> SymMatrix {
        SymMatrix::from_row_major(2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn distinct_eigenvalues_use_diagonal_entries() {
        let es = eig(&SymMatrix::from_diag(&[3.0, 2.0, 1.0]), 1e-8).unwrap();
        let h = SymMatrix::from_row_major(3, &[1.0, 2.0, 3.0, 2.0, -4.0, 5.0, 3.0, 5.0, 6.0]).unwrap();
        let d = eig_dir_derivative(&es, &h).unwrap();
        for (k, want) in [1.0, -4.0, 6.0].iter().enumerate() {
            assert!((d.d[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_gives_spectrum_of_direction() {
        let es = eig(&SymMatrix::identity(2), 1e-8).unwrap();
        let d = eig_dir_derivative(&es, &flagship_h()).unwrap();
        assert_eq!(d.per_block.len(), 1);
        assert!((d.d[0] - 1.0).abs() < 1e-12 && (d.d[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_block_matches_finite_difference() {
        let x = SymMatrix::from_diag(&[2.0, 1.0, 1.0]);
        let es = eig(&x, 1e-8).unwrap();
        let h = SymMatrix::from_row_major(3, &[0.3, -0.2, 0.5, -0.2, 0.7, 0.4, 0.5, 0.4, -0.1]).unwrap();
        let d = eig_dir_derivative(&es, &h).unwrap();
        let t = 1e-6;
        let lt = x.axpy(t, &h).eigenvalues();
        for (k, (a, b)) in lt.iter().zip(es.lambda()).enumerate() {
            let fd = (a - b) / t;
            assert!((fd - d.d[k]).abs() < 1e-5, "{k}: {fd} vs {}", d.d[k]);
        }
    }

    #[test]
    fn prediction_zero_direction_is_exact() {
        let es = eig(&SymMatrix::from_diag(&[2.0, 1.0, 1.0]), 1e-8).unwrap();
        let p = eig_second_prediction(&es, &SymMatrix::zeros(3), 1e-3).unwrap();
        assert_eq!(p, es.lambda());
    }

    #[test]
    fn prediction_matches_two_by_two_closed_form() {
        let es = eig(&SymMatrix::from_diag(&[2.0, 1.0]), 1e-8).unwrap();
        let t = 1e-3;
        let p = eig_second_prediction(&es, &flagship_h(), t).unwrap();
        // exact eigenvalues of [[2,t],[t,1]]
        let exact1 = 1.5 + (0.25 + t * t).sqrt();
        assert!((p[0] - (2.0 + t * t)).abs() < 1e-15);
        assert!((p[0] - exact1).abs() < 1e-11);
    }

    #[test]
    fn ell_index_examples() {
        let es = eig(&SymMatrix::from_diag(&[3.0, 1.0, 1.0]), 1e-8).unwrap();
        assert_eq!(ell_index(&es, 1).unwrap(), 1);
        assert_eq!(ell_index(&es, 2).unwrap(), 1);
        assert_eq!(ell_index(&es, 3).unwrap(), 2);
        assert!(ell_index(&es, 4).is_err());
        assert!(ell_index(&es, 0).is_err());
        let es = eig(&SymMatrix::from_diag(&[3.0, 2.0, 1.0]), 1e-8).unwrap();
        assert!((1..=3).all(|i| ell_index(&es, i).unwrap() == 1));
    }
}

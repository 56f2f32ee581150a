//! Dense small-matrix kernel: generalized inverses, projectors, Kronecker
//! products, centering matrices, symmetric roots and the Loewner order.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Relative tolerances for rank decisions and numerical comparisons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rank_tol: f64,
    pub eq_tol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rank_tol: 1e-10, eq_tol: 1e-8 }
    }
}

impl Tolerance {
    pub fn new(rank_tol: f64, eq_tol: f64) -> Result<Self> {
        for (name, v) in [("rank_tol", rank_tol), ("eq_tol", eq_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(Tolerance { rank_tol, eq_tol })
    }

    /// Same rank tolerance with a different comparison tolerance.
    pub fn with_eq(self, eq_tol: f64) -> Result<Self> {
        Tolerance::new(self.rank_tol, eq_tol)
    }
}

pub fn identity(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

pub fn ones(rows: usize, cols: usize) -> Matrix {
    Matrix::from_element(rows, cols, 1.0)
}

/// Build a matrix from row slices. Panics on ragged input; intended for literals.
pub fn from_rows(rows: &[&[f64]]) -> Matrix {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
    Matrix::from_fn(r, c, |i, j| rows[i][j])
}

/// Build a matrix from a vector of rows, checking shape and finiteness.
pub fn try_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::invalid("ragged matrix rows"));
    }
    let m = Matrix::from_fn(r, c, |i, j| rows[i][j]);
    check_finite(&m)?;
    Ok(m)
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn check_finite(m: &Matrix) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("matrix has non-finite entries"))
    }
}

fn check_square(m: &Matrix, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::dims(format!("{what} must be square, got {}x{}", m.nrows(), m.ncols())))
    }
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |a, &x| a.max(x.abs()))
}

/// Largest entrywise difference scaled by the largest entry of either input.
pub fn rel_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "rel_diff shape mismatch");
    let scale = max_abs(a).max(max_abs(b));
    let diff = max_abs(&(a - b));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Symmetric eigen-pairs carrying the singular structure of `m`: the matrix itself
/// when symmetric, otherwise the augmented [[0, M], [M', 0]] whose eigenvalues are ±σ.
/// nalgebra's SVD can lose accuracy on rank-deficient input, so it is avoided.
fn singular_pairs(m: &Matrix) -> (bool, SymmetricEigen<f64, nalgebra::Dyn>) {
    let (r, c) = m.shape();
    let scale = max_abs(m);
    if r == c && max_abs(&(m - m.transpose())) <= 1e-14 * scale {
        return (true, SymmetricEigen::new(symmetrize(m)));
    }
    let mut aug = Matrix::zeros(r + c, r + c);
    aug.view_mut((0, r), (r, c)).copy_from(m);
    aug.view_mut((r, 0), (c, r)).copy_from(&m.transpose());
    (false, SymmetricEigen::new(aug))
}

/// Moore–Penrose pseudo-inverse, dropping singular values below
/// `rank_tol × σ_max`.
pub fn pinv(m: &Matrix, tol: Tolerance) -> Result<Matrix> {
    check_finite(m)?;
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Ok(Matrix::zeros(c, r));
    }
    let (sym, eig) = singular_pairs(m);
    let smax = eig.eigenvalues.iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
    let cut = tol.rank_tol * smax;
    let mut out = Matrix::zeros(c, r);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        if sym {
            if l.abs() > cut && l != 0.0 {
                out += (v * v.transpose()) / l;
            }
        } else if l > cut && l > 0.0 {
            // eigenvector (u, v)/√2 for σ = l
            let u = v.rows(0, r);
            let w = v.rows(r, c);
            out += (w * u.transpose()) * (2.0 / l);
        }
    }
    Ok(out)
}

pub fn rank(m: &Matrix, tol: Tolerance) -> Result<usize> {
    check_finite(m)?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0);
    }
    let (sym, eig) = singular_pairs(m);
    let smax = eig.eigenvalues.iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
    let cut = tol.rank_tol * smax;
    Ok(eig.eigenvalues.iter().filter(|&&l| if sym { l.abs() > cut && l != 0.0 } else { l > cut && l > 0.0 }).count())
}

/// pr⊥(X) = I − X(X'X)⁻X'.
pub fn proj_perp(x: &Matrix, tol: Tolerance) -> Result<Matrix> {
    if x.nrows() == 0 {
        return Err(Error::invalid("proj_perp needs at least one row"));
    }
    let xtx = x.transpose() * x;
    let p = x * pinv(&xtx, tol)? * x.transpose();
    Ok(symmetrize(&(identity(x.nrows()) - p)))
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// H_n = I_n − J_n / n.
pub fn centering(n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::invalid("centering matrix needs n >= 1"));
    }
    Ok(identity(n) - ones(n, n) / n as f64)
}

/// Symmetric inverse square root of an SPD matrix.
pub fn sym_inv_sqrt(m: &Matrix, tol: Tolerance) -> Result<Matrix> {
    check_finite(m)?;
    check_square(m, "sym_inv_sqrt input")?;
    let eig = SymmetricEigen::new(symmetrize(m));
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
    let min = eig.eigenvalues.min();
    if !(min > tol.rank_tol * max) {
        return Err(Error::NotPositiveDefinite { what: "matrix".into(), eigenvalue: min });
    }
    let d = Matrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let q = &eig.eigenvectors;
    Ok(symmetrize(&(q * d * q.transpose())))
}

/// Check symmetric positive definiteness, naming the object in the error.
pub fn ensure_spd(m: &Matrix, what: &str, tol: Tolerance) -> Result<()> {
    check_finite(m)?;
    check_square(m, what)?;
    if rel_diff(m, &m.transpose()) > tol.eq_tol {
        return Err(Error::invalid(format!("{what} is not symmetric")));
    }
    let eig = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    let max = eig.iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
    let min = eig.min();
    if min > tol.rank_tol * max {
        Ok(())
    } else {
        Err(Error::NotPositiveDefinite { what: what.into(), eigenvalue: min })
    }
}

/// Inverse of an SPD matrix (via Cholesky, falling back to pinv).
pub fn spd_inverse(m: &Matrix, what: &str, tol: Tolerance) -> Result<Matrix> {
    ensure_spd(m, what, tol)?;
    match m.clone().cholesky() {
        Some(c) => Ok(symmetrize(&c.inverse())),
        None => pinv(m, tol),
    }
}

/// A ⪯ B in the Loewner order: B − A has eigenvalues ≥ −eq_tol·‖·‖.
pub fn loewner_leq(a: &Matrix, b: &Matrix, tol: Tolerance) -> Result<bool> {
    if a.shape() != b.shape() {
        return Err(Error::dims(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    check_square(a, "loewner_leq operand")?;
    check_finite(a)?;
    check_finite(b)?;
    let diff = symmetrize(&(b - a));
    let eig = SymmetricEigen::new(diff).eigenvalues;
    let norm = SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .chain(SymmetricEigen::new(symmetrize(b)).eigenvalues.iter())
        .fold(0.0_f64, |m, &x| m.max(x.abs()));
    let scale = if norm > 0.0 { norm } else { 1.0 };
    Ok(eig.iter().all(|&l| l >= -tol.eq_tol * scale))
}

/// Equal diagonal entries and equal off-diagonal entries (aI + bJ form).
pub fn is_completely_symmetric(m: &Matrix, tol: Tolerance) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    if n == 0 {
        return true;
    }
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let d0 = m[(0, 0)];
    let off0 = if n > 1 { m[(0, 1)] } else { 0.0 };
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { d0 } else { off0 };
            if (m[(i, j)] - target).abs() > tol.eq_tol * scale {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn assert_close(a: &Matrix, b: &Matrix, eps: f64) {
        assert!(rel_diff(a, b) <= eps, "matrices differ:\n{a}\n{b}");
    }

    #[test]
    fn tolerance_bounds() {
        assert!(Tolerance::new(0.0, 0.1).is_err());
        assert!(Tolerance::new(0.1, 1.0).is_err());
        assert!(Tolerance::new(1e-12, 1e-6).is_ok());
    }

    #[test]
    fn pinv_examples() {
        assert_close(&pinv(&identity(3), tol()).unwrap(), &identity(3), 1e-14);
        let d = from_rows(&[&[2.0, 0.0], &[0.0, 0.0]]);
        assert_close(&pinv(&d, tol()).unwrap(), &from_rows(&[&[0.5, 0.0], &[0.0, 0.0]]), 1e-14);
        let j = ones(2, 2);
        let g = pinv(&j, tol()).unwrap();
        assert_close(&g, &(ones(2, 2) / 4.0), 1e-14);
        assert_close(&(&j * &g * &j), &j, 1e-14);
        assert_close(&(&g * &j * &g), &g, 1e-14);
    }

    #[test]
    fn pinv_rejects_nan() {
        let m = from_rows(&[&[f64::NAN]]);
        assert!(matches!(pinv(&m, tol()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn proj_perp_examples() {
        let h3 = centering(3).unwrap();
        assert_close(&proj_perp(&ones(3, 1), tol()).unwrap(), &h3, 1e-14);
        assert!(max_abs(&proj_perp(&identity(2), tol()).unwrap()) < 1e-14);
        let x = from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let p = proj_perp(&x, tol()).unwrap();
        assert_close(&p, &from_rows(&[&[0.0, 0.0], &[0.0, 1.0]]), 1e-14);
        assert_close(&(&p * &p), &p, 1e-14);
        assert!(max_abs(&(&p * &x)) < 1e-14);
    }

    #[test]
    fn kron_examples() {
        let h2 = centering(2).unwrap();
        let k = kron(&identity(2), &h2);
        assert_eq!(k.shape(), (4, 4));
        assert_close(&k.view((0, 0), (2, 2)).into_owned(), &h2, 0.0);
        assert_close(&k.view((2, 2), (2, 2)).into_owned(), &h2, 0.0);
        assert_eq!(max_abs(&k.view((0, 2), (2, 2)).into_owned()), 0.0);
        let b = from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_close(&kron(&from_rows(&[&[2.0]]), &b), &(&b * 2.0), 0.0);
    }

    #[test]
    fn centering_examples() {
        let h2 = centering(2).unwrap();
        assert_close(&h2, &from_rows(&[&[0.5, -0.5], &[-0.5, 0.5]]), 1e-15);
        let h3 = centering(3).unwrap();
        assert!((h3[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((h3[(0, 1)] + 1.0 / 3.0).abs() < 1e-15);
        assert!(max_abs(&(centering(5).unwrap() * ones(5, 1))) < 1e-15);
        assert!(centering(0).is_err());
    }

    #[test]
    fn sym_inv_sqrt_examples() {
        assert_close(&sym_inv_sqrt(&identity(4), tol()).unwrap(), &identity(4), 1e-14);
        let d = from_rows(&[&[4.0, 0.0], &[0.0, 9.0]]);
        let r = sym_inv_sqrt(&d, tol()).unwrap();
        assert_close(&r, &from_rows(&[&[0.5, 0.0], &[0.0, 1.0 / 3.0]]), 1e-14);
        let m = from_rows(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, 0.2], &[0.5, 0.2, 2.0]]);
        let r = sym_inv_sqrt(&m, tol()).unwrap();
        assert_close(&(&r * &m * &r), &identity(3), 1e-12);
        let bad = from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
        match sym_inv_sqrt(&bad, tol()) {
            Err(Error::NotPositiveDefinite { eigenvalue, .. }) => assert!((eigenvalue + 1.0).abs() < 1e-12),
            other => panic!("expected not-PD, got {other:?}"),
        }
    }

    #[test]
    fn loewner_examples() {
        let h3 = centering(3).unwrap();
        assert!(loewner_leq(&Matrix::zeros(3, 3), &h3, tol()).unwrap());
        assert!(!loewner_leq(&identity(3), &Matrix::zeros(3, 3), tol()).unwrap());
        assert!(loewner_leq(&h3, &h3, tol()).unwrap());
        assert!(loewner_leq(&identity(2), &identity(3), tol()).is_err());
    }

    #[test]
    fn complete_symmetry_examples() {
        let m = identity(4) * 2.0 + ones(4, 4) * 0.3;
        assert!(is_completely_symmetric(&m, tol()));
        assert!(!is_completely_symmetric(&from_rows(&[&[1.0, 0.0], &[0.0, 2.0]]), tol()));
        for t in 2..7 {
            assert!(is_completely_symmetric(&centering(t).unwrap(), tol()));
        }
    }

    fn mat_strategy(max: usize) -> impl Strategy<Value = Matrix> {
        (1..=max, 1..=max).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-3.0..3.0f64, r * c).prop_map(move |v| Matrix::from_vec(r, c, v))
        })
    }

    /// Random matrix of prescribed rank as a product of thin factors.
    fn low_rank_strategy() -> impl Strategy<Value = (Matrix, usize)> {
        (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
            let kmax = r.min(c);
            (0..=kmax).prop_flat_map(move |k| {
                (
                    proptest::collection::vec(-2.0..2.0f64, r * k),
                    proptest::collection::vec(-2.0..2.0f64, k * c),
                )
                    .prop_map(move |(a, b)| {
                        let m = Matrix::from_vec(r, k, a) * Matrix::from_vec(k, c, b);
                        (m, k)
                    })
            })
        })
    }

    fn spd_strategy() -> impl Strategy<Value = Matrix> {
        (1usize..6).prop_flat_map(|n| {
            proptest::collection::vec(-1.0..1.0f64, n * n)
                .prop_map(move |v| {
                    let a = Matrix::from_vec(n, n, v);
                    &a * a.transpose() + identity(n) * 0.5
                })
        })
    }

    proptest! {
        #[test]
        fn penrose_identities((m, _k) in low_rank_strategy()) {
            let t = Tolerance::new(1e-9, 1e-8).unwrap();
            let g = pinv(&m, t).unwrap();
            let scale = 1.0 + max_abs(&m) * max_abs(&g);
            prop_assert!(max_abs(&(&m * &g * &m - &m)) <= 1e-7 * scale * (1.0 + max_abs(&m)));
            prop_assert!(max_abs(&(&g * &m * &g - &g)) <= 1e-7 * scale * (1.0 + max_abs(&g)));
            let mg = &m * &g;
            let gm = &g * &m;
            prop_assert!(max_abs(&(&mg - mg.transpose())) <= 1e-7 * scale);
            prop_assert!(max_abs(&(&gm - gm.transpose())) <= 1e-7 * scale);
        }

        #[test]
        fn proj_perp_properties(x in mat_strategy(5)) {
            let t = tol();
            let p = proj_perp(&x, t).unwrap();
            prop_assert!(max_abs(&(&p - p.transpose())) < 1e-10);
            prop_assert!(max_abs(&(&p * &p - &p)) < 1e-8);
            prop_assert!(max_abs(&(&p * &x)) < 1e-8 * (1.0 + max_abs(&x)));
            let expected = (x.nrows() - rank(&x, t).unwrap()) as f64;
            prop_assert!((p.trace() - expected).abs() < 1e-8);
        }

        #[test]
        fn kron_mixed_product(v in proptest::collection::vec(-2.0..2.0f64, 16)) {
            let a = Matrix::from_vec(2, 2, v[0..4].to_vec());
            let b = Matrix::from_vec(2, 2, v[4..8].to_vec());
            let c = Matrix::from_vec(2, 2, v[8..12].to_vec());
            let d = Matrix::from_vec(2, 2, v[12..16].to_vec());
            let lhs = kron(&a, &b) * kron(&c, &d);
            let rhs = kron(&(&a * &c), &(&b * &d));
            prop_assert!(max_abs(&(lhs - rhs)) < 1e-12);
            prop_assert!((kron(&a, &b).trace() - a.trace() * b.trace()).abs() < 1e-12);
        }

        #[test]
        fn inv_sqrt_squared_is_pinv(m in spd_strategy()) {
            let r = sym_inv_sqrt(&m, tol()).unwrap();
            let g = pinv(&m, tol()).unwrap();
            prop_assert!(rel_diff(&(&r * &r), &g) < 1e-9);
        }

        #[test]
        fn loewner_reflexive_antisymmetric(a in spd_strategy(), s in 0.0..2.0f64) {
            let t = tol();
            prop_assert!(loewner_leq(&a, &a, t).unwrap());
            let b = &a * (1.0 + s) + identity(a.nrows()) * 0.1;
            prop_assert!(loewner_leq(&a, &b, t).unwrap());
            prop_assert!(!loewner_leq(&b, &a, t).unwrap());
        }
    }
}

//! Small dense symmetric linear algebra.
//!
//! Everything here is sized for feature dimensions in the tens: a Gram matrix
//! is accumulated once per stage, factored once, and the factor is reused for
//! every right-hand side the stage needs.

use crate::error::{Error, Result};

/// Regularized Gram matrix `λI + Σ φφᵀ`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    dim: usize,
    lambda: f64,
    mat: Vec<f64>,
}

impl GramMatrix {
    /// `λI` with no rows accumulated yet.
    pub fn identity_scaled(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("gram matrix dimension must be positive".into()));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Input(format!("ridge parameter must be finite and >= 0, got {lambda}")));
        }
        let mut mat = vec![0.0; dim * dim];
        for i in 0..dim {
            mat[i * dim + i] = lambda;
        }
        Ok(Self { dim, lambda, mat })
    }

    /// Builds `λI + Σ rows·rowsᵀ` from dense rows.
    pub fn accumulate<'a, I>(dim: usize, rows: I, lambda: f64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut g = Self::identity_scaled(dim, lambda)?;
        for row in rows {
            g.add_outer(row)?;
        }
        g.symmetrize();
        Ok(g)
    }

    /// Adds `v·vᵀ`, skipping zero entries so sparse feature rows stay cheap.
    pub fn add_outer(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Input(format!(
                "row has length {}, expected {}",
                v.len(),
                self.dim
            )));
        }
        let d = self.dim;
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let row = &mut self.mat[i * d..(i + 1) * d];
            for (j, &vj) in v.iter().enumerate() {
                if vj != 0.0 {
                    row[j] += vi * vj;
                }
            }
        }
        Ok(())
    }

    /// Adds `v·vᵀ` for a vector given by its nonzero `(index, value)` pairs.
    pub fn add_outer_sparse(&mut self, v: &[(usize, f64)]) -> Result<()> {
        let d = self.dim;
        if let Some(&(i, _)) = v.iter().find(|(i, _)| *i >= d) {
            return Err(Error::Input(format!("sparse index {i} out of range for dimension {d}")));
        }
        for &(i, vi) in v {
            for &(j, vj) in v {
                self.mat[i * d + j] += vi * vj;
            }
        }
        Ok(())
    }

    /// Replaces the matrix by `(M + Mᵀ)/2`.
    pub fn symmetrize(&mut self) {
        let d = self.dim;
        for i in 0..d {
            for j in (i + 1)..d {
                let avg = 0.5 * (self.mat[i * d + j] + self.mat[j * d + i]);
                self.mat[i * d + j] = avg;
                self.mat[j * d + i] = avg;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat[i * self.dim + j]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.mat
    }

    /// `G·x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.mat
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn cholesky(&self) -> Result<Cholesky> {
        Cholesky::factor(self.dim, &self.mat)
    }
}

/// Lower-triangular Cholesky factor `L` with `G = L·Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factors a symmetric matrix given row-major; only the lower triangle is read.
    pub fn factor(dim: usize, mat: &[f64]) -> Result<Self> {
        if mat.len() != dim * dim {
            return Err(Error::Input(format!(
                "matrix has {} entries, expected {}",
                mat.len(),
                dim * dim
            )));
        }
        let mut l = vec![0.0; dim * dim];
        for j in 0..dim {
            let mut diag = mat[j * dim + j];
            for k in 0..j {
                diag -= l[j * dim + k] * l[j * dim + k];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::Numeric(format!(
                    "matrix is not positive definite (pivot {j} = {diag:e})"
                )));
            }
            let ljj = diag.sqrt();
            l[j * dim + j] = ljj;
            for i in (j + 1)..dim {
                let mut s = mat[i * dim + j];
                for k in 0..j {
                    s -= l[i * dim + k] * l[j * dim + k];
                }
                l[i * dim + j] = s / ljj;
            }
        }
        Ok(Self { dim, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Solves `G·x = rhs` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let d = self.dim;
        debug_assert_eq!(x.len(), d);
        // L·y = rhs
        for i in 0..d {
            let row = &self.lower[i * d..i * d + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / self.lower[i * d + i];
        }
        // Lᵀ·x = y
        for i in (0..d).rev() {
            let mut s = x[i];
            for k in (i + 1)..d {
                s -= self.lower[k * d + i] * x[k];
            }
            x[i] = s / self.lower[i * d + i];
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim {
            return Err(Error::Input(format!(
                "right-hand side has length {}, expected {}",
                rhs.len(),
                self.dim
            )));
        }
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }

    /// `sqrt(vᵀ G⁻¹ v)`, computed as `‖L⁻¹v‖`.
    pub fn inv_norm(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.dim {
            return Err(Error::Input(format!(
                "vector has length {}, expected {}",
                v.len(),
                self.dim
            )));
        }
        let d = self.dim;
        let mut y = v.to_vec();
        for i in 0..d {
            let row = &self.lower[i * d..i * d + i];
            let s: f64 = row.iter().zip(&y[..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / self.lower[i * d + i];
        }
        Ok(y.iter().map(|a| a * a).sum::<f64>().sqrt())
    }

    /// `sqrt((G⁻¹)_{ii})` for every `i`, i.e. the inverse norm of each basis vector.
    pub fn basis_inv_norms(&self) -> Vec<f64> {
        let d = self.dim;
        let mut e = vec![0.0; d];
        (0..d)
            .map(|i| {
                e.iter_mut().for_each(|x| *x = 0.0);
                e[i] = 1.0;
                self.inv_norm(&e).expect("dimension matches")
            })
            .collect()
    }
}

/// Solves `G·x = rhs` through a fresh Cholesky factorization.
pub fn ridge_solve(g: &GramMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    g.cholesky()?.solve(rhs)
}

/// `sqrt(vᵀ G⁻¹ v)`.
pub fn mahalanobis_inv_norm(g: &GramMatrix, v: &[f64]) -> Result<f64> {
    g.cholesky()?.inv_norm(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn inverse_oracle(g: &GramMatrix) -> nalgebra::DMatrix<f64> {
        let d = g.dim();
        nalgebra::DMatrix::from_row_slice(d, d, g.as_slice())
            .try_inverse()
            .expect("invertible")
    }

    fn random_pd(d: usize, seed: u64) -> GramMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..2 * d)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        GramMatrix::accumulate(d, rows.iter().map(|r| r.as_slice()), 0.5).unwrap()
    }

    #[test]
    fn empty_rows_give_scaled_identity() {
        let g = GramMatrix::accumulate(3, std::iter::empty(), 1.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn direct_sum_without_ridge() {
        let rows = [[1.0, 0.0], [1.0, 0.0]];
        let g = GramMatrix::accumulate(2, rows.iter().map(|r| r.as_slice()), 0.0).unwrap();
        assert_eq!(g.as_slice(), &[2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn accumulation_matches_naive_double_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                let raw: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / s).collect()
            })
            .collect();
        let g = GramMatrix::accumulate(4, rows.iter().map(|r| r.as_slice()), 1.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut naive = if i == j { 1.0 } else { 0.0 };
                for r in &rows {
                    naive += r[i] * r[j];
                }
                assert_relative_eq!(g.get(i, j), naive, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let rows = [[1.0, 0.0, 0.0]];
        let err = GramMatrix::accumulate(2, rows.iter().map(|r| r.as_slice()), 1.0).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn solves_identity_and_diagonal() {
        let g = GramMatrix::identity_scaled(2, 1.0).unwrap();
        assert_eq!(ridge_solve(&g, &[2.0, 3.0]).unwrap(), vec![2.0, 3.0]);

        let mut d = GramMatrix::identity_scaled(2, 0.0).unwrap();
        d.add_outer(&[2f64.sqrt(), 0.0]).unwrap();
        d.add_outer(&[0.0, 2.0]).unwrap();
        let x = ridge_solve(&d, &[2.0, 4.0]).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn solve_matches_explicit_inverse() {
        let g = random_pd(6, 11);
        let inv = inverse_oracle(&g);
        let rhs = [0.3, -1.0, 2.0, 0.5, 0.0, -0.7];
        let x = ridge_solve(&g, &rhs).unwrap();
        let expect = &inv * nalgebra::DVector::from_row_slice(&rhs);
        for i in 0..6 {
            assert_relative_eq!(x[i], expect[i], epsilon = 1e-9);
        }
        let back = g.mul_vec(&x);
        let resid: f64 = back.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let rhs_norm: f64 = rhs.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(resid <= 1e-10 * (rhs_norm + 1.0));
    }

    #[test]
    fn non_pd_matrix_fails_to_factor() {
        let g = GramMatrix::accumulate(2, [[1.0, 1.0]].iter().map(|r| r.as_slice()), 0.0).unwrap();
        assert!(matches!(ridge_solve(&g, &[1.0, 1.0]), Err(Error::Numeric(_))));
    }

    #[test]
    fn inverse_norm_examples() {
        let g = GramMatrix::identity_scaled(2, 1.0).unwrap();
        assert_relative_eq!(mahalanobis_inv_norm(&g, &[3.0, 4.0]).unwrap(), 5.0, epsilon = 1e-12);
        let g4 = GramMatrix::identity_scaled(2, 4.0).unwrap();
        assert_relative_eq!(mahalanobis_inv_norm(&g4, &[2.0, 0.0]).unwrap(), 1.0, epsilon = 1e-12);

        let g = random_pd(5, 5);
        let inv = inverse_oracle(&g);
        let v = nalgebra::DVector::from_row_slice(&[0.1, 0.9, -0.4, 0.0, 1.5]);
        let expect = (v.transpose() * &inv * &v)[(0, 0)].sqrt();
        assert_relative_eq!(mahalanobis_inv_norm(&g, v.as_slice()).unwrap(), expect, epsilon = 1e-10);
    }

    #[test]
    fn basis_norms_match_inverse_diagonal() {
        let g = random_pd(4, 9);
        let inv = inverse_oracle(&g);
        let norms = g.cholesky().unwrap().basis_inv_norms();
        for i in 0..4 {
            assert_relative_eq!(norms[i], inv[(i, i)].sqrt(), epsilon = 1e-12);
        }
    }

    fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-2.0f64..2.0, d)
    }

    proptest! {
        #[test]
        fn regularized_gram_always_factors(rows in proptest::collection::vec(vec_strategy(4), 0..12), lambda in 1e-3f64..5.0) {
            let g = GramMatrix::accumulate(4, rows.iter().map(|r| r.as_slice()), lambda).unwrap();
            prop_assert!(g.cholesky().is_ok());
        }

        #[test]
        fn solve_inverts_multiplication(seed in 0u64..1000, x in vec_strategy(5)) {
            let g = random_pd(5, seed);
            let rhs = g.mul_vec(&x);
            let back = ridge_solve(&g, &rhs).unwrap();
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn induced_norm_is_a_norm(seed in 0u64..1000, v in vec_strategy(3), w in vec_strategy(3)) {
            let g = random_pd(3, seed);
            let c = g.cholesky().unwrap();
            let nv = c.inv_norm(&v).unwrap();
            let nw = c.inv_norm(&w).unwrap();
            let sum: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
            prop_assert!(nv * nv + nw * nw >= 0.0);
            prop_assert!(c.inv_norm(&sum).unwrap() <= nv + nw + 1e-12);
        }
    }
}

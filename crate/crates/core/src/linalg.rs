//! Dense linear-algebra kernels: complex LU with a 1-norm condition
//! estimate, the Cholesky-reduced generalized symmetric eigenproblem and a
//! few matrix utilities.

use nalgebra::{Cholesky, ComplexField, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{cx_re, Cx, Real};

/// Partial-pivot LU factorization `P A = L U` of a square complex matrix.
#[derive(Debug, Clone)]
pub struct ComplexLu<T: Real> {
    lu: DMatrix<Cx<T>>,
    perm: Vec<usize>,
    norm1: T,
    singular: bool,
}

impl<T: Real> ComplexLu<T> {
    pub fn new(a: &DMatrix<Cx<T>>) -> Self {
        assert!(a.is_square(), "LU needs a square matrix");
        let n = a.nrows();
        let norm1 = norm1(a);
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut singular = false;
        for k in 0..n {
            let mut piv = k;
            let mut best = lu[(k, k)].modulus();
            for i in k + 1..n {
                let v = lu[(i, k)].modulus();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best == T::zero() {
                singular = true;
                continue;
            }
            if piv != k {
                lu.swap_rows(k, piv);
                perm.swap(k, piv);
            }
            let inv = Cx::new(T::one(), T::zero()) / lu[(k, k)];
            for i in k + 1..n {
                lu[(i, k)] *= inv;
            }
            for j in k + 1..n {
                let akj = lu[(k, j)];
                if akj == Cx::new(T::zero(), T::zero()) {
                    continue;
                }
                for i in k + 1..n {
                    let lik = lu[(i, k)];
                    lu[(i, j)] -= lik * akj;
                }
            }
        }
        Self {
            lu,
            perm,
            norm1,
            singular,
        }
    }

    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    /// True when an exactly zero pivot was met.
    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// Solves `A X = B`.
    pub fn solve(&self, b: &DMatrix<Cx<T>>) -> DMatrix<Cx<T>> {
        let n = self.dim();
        assert_eq!(b.nrows(), n);
        let mut x = DMatrix::from_fn(n, b.ncols(), |i, j| b[(self.perm[i], j)]);
        for c in 0..x.ncols() {
            for k in 0..n {
                let xk = x[(k, c)];
                for i in k + 1..n {
                    let l = self.lu[(i, k)];
                    x[(i, c)] -= l * xk;
                }
            }
            for k in (0..n).rev() {
                let xk = x[(k, c)] / self.lu[(k, k)];
                x[(k, c)] = xk;
                for i in 0..k {
                    let u = self.lu[(i, k)];
                    x[(i, c)] -= u * xk;
                }
            }
        }
        x
    }

    /// Solves `A^H x = b` for a single right-hand side.
    pub fn solve_adjoint(&self, b: &DVector<Cx<T>>) -> DVector<Cx<T>> {
        let n = self.dim();
        let mut z = b.clone();
        // U^H z = b (lower triangular)
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.lu[(k, i)].conj() * z[k];
            }
            z[i] = s / self.lu[(i, i)].conj();
        }
        // L^H w = z (unit upper triangular)
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.lu[(k, i)].conj() * z[k];
            }
            z[i] = s;
        }
        let mut x = DVector::from_element(n, cx_re(T::zero()));
        for i in 0..n {
            x[self.perm[i]] = z[i];
        }
        x
    }

    /// Reciprocal 1-norm condition number, `‖A⁻¹‖₁` estimated with Hager's
    /// method (a handful of solves with `A` and `A^H`).
    pub fn rcond(&self) -> T {
        let n = self.dim();
        if n == 0 {
            return T::one();
        }
        if self.singular {
            return T::zero();
        }
        if self.norm1 == T::zero() {
            return T::zero();
        }
        let nn = T::from_usize(n).unwrap();
        let mut x = DMatrix::from_element(n, 1, cx_re(T::one() / nn));
        let mut est = T::zero();
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let y = self.solve(&x);
            let ynorm = y.iter().fold(T::zero(), |acc, v| acc + v.modulus());
            if !(ynorm > est) && last_j != usize::MAX {
                break;
            }
            est = ynorm;
            let xi = DVector::from_iterator(
                n,
                y.iter().map(|v| {
                    let m = v.modulus();
                    if m > T::zero() {
                        *v / cx_re(m)
                    } else {
                        cx_re(T::one())
                    }
                }),
            );
            let z = self.solve_adjoint(&xi);
            let (mut j, mut zmax) = (0, T::zero());
            for (i, v) in z.iter().enumerate() {
                if v.modulus() > zmax {
                    zmax = v.modulus();
                    j = i;
                }
            }
            let ztx = z
                .iter()
                .zip(x.iter())
                .fold(T::zero(), |acc, (zi, xi)| acc + (zi.conj() * xi).re);
            if zmax <= ztx || j == last_j {
                break;
            }
            last_j = j;
            x.fill(cx_re(T::zero()));
            x[(j, 0)] = cx_re(T::one());
        }
        if !est.is_finite() || est == T::zero() {
            return T::zero();
        }
        T::one() / (self.norm1 * est)
    }
}

/// Matrix 1-norm (maximum absolute column sum).
pub fn norm1<T: Real>(a: &DMatrix<Cx<T>>) -> T {
    a.column_iter()
        .map(|c| c.iter().fold(T::zero(), |acc, v| acc + v.modulus()))
        .fold(T::zero(), |a, b| if b > a { b } else { a })
}

/// Largest singular value of a complex matrix.
pub fn spectral_norm<T: Real>(a: &DMatrix<Cx<T>>) -> T {
    if a.nrows() == 0 || a.ncols() == 0 {
        return T::zero();
    }
    if a.nrows() == 1 || a.ncols() == 1 {
        return a.iter().fold(T::zero(), |acc, v| acc + v.modulus_squared()).sqrt();
    }
    a.clone()
        .singular_values()
        .iter()
        .fold(T::zero(), |m, &s| if s > m { s } else { m })
}

/// Spectral norm of a real matrix.
pub fn spectral_norm_real<T: Real>(a: &DMatrix<T>) -> T {
    spectral_norm(&a.map(cx_re))
}

/// Largest absolute entry.
pub fn max_abs<T: Real>(a: &DMatrix<T>) -> T {
    a.iter()
        .fold(T::zero(), |m, v| if v.abs() > m { v.abs() } else { m })
}

/// `max|A − Aᵀ| / max|A|`, zero for the zero matrix.
pub fn relative_asymmetry<T: Real>(a: &DMatrix<T>) -> T {
    let scale = max_abs(a);
    if scale == T::zero() {
        return T::zero();
    }
    let n = a.nrows();
    let mut worst = T::zero();
    for j in 0..n {
        for i in j + 1..n {
            let d = (a[(i, j)] - a[(j, i)]).abs();
            if d > worst {
                worst = d;
            }
        }
    }
    worst / scale
}

/// `(A + Aᵀ)/2`.
pub fn symmetrize<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    let half = T::lit(0.5);
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)]) * half)
}

/// Symmetric eigendecomposition with ascending eigenvalues.
pub fn sym_eigen_sorted<T: Real>(a: &DMatrix<T>) -> Result<(DVector<T>, DMatrix<T>)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(symmetrize(a), T::eps(), 10_000)
        .ok_or_else(|| Error::EigenSolveFailure("symmetric QR iteration did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Smallest eigenvalue of a real symmetric matrix.
pub fn min_eigenvalue<T: Real>(a: &DMatrix<T>) -> Result<T> {
    if a.nrows() == 0 {
        return Ok(T::zero());
    }
    let (vals, _) = sym_eigen_sorted(a)?;
    Ok(vals[0])
}

/// Solves `K φ = λ M φ` for symmetric `K` and positive definite `M`.
///
/// Returns eigenvalues in ascending order and mass-normalized eigenvectors
/// (`Φᵀ M Φ = I`) as columns.
pub fn generalized_sym_eigen<T: Real>(
    k: &DMatrix<T>,
    m: &DMatrix<T>,
) -> Result<(DVector<T>, DMatrix<T>)> {
    let n = k.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let chol = Cholesky::new(symmetrize(m))
        .ok_or_else(|| Error::EigenSolveFailure("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let lk = l
        .solve_lower_triangular(k)
        .ok_or_else(|| Error::EigenSolveFailure("singular Cholesky factor".into()))?;
    let a = l
        .solve_lower_triangular(&lk.transpose())
        .ok_or_else(|| Error::EigenSolveFailure("singular Cholesky factor".into()))?;
    let (values, y) = sym_eigen_sorted(&a)?;
    let phi = l
        .tr_solve_lower_triangular(&y)
        .ok_or_else(|| Error::EigenSolveFailure("singular Cholesky factor".into()))?;
    Ok((values, phi))
}

/// Cholesky-based check that a symmetric matrix is positive definite.
pub fn is_positive_definite<T: Real>(a: &DMatrix<T>) -> bool {
    a.nrows() == 0 || Cholesky::new(symmetrize(a)).is_some()
}

/// Block-diagonal concatenation.
pub fn block_diag<N: nalgebra::Scalar + num_traits::Zero + Copy>(blocks: &[&DMatrix<N>]) -> DMatrix<N> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::from_element(rows, cols, N::zero());
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Lifts a real matrix to the complex field.
pub fn complexify<T: Real>(a: &DMatrix<T>) -> DMatrix<Cx<T>> {
    a.map(cx_re)
}

/// Relative Frobenius distance `‖A − B‖_F / ‖B‖_F` (absolute when `B = 0`).
pub fn rel_frobenius<T: Real>(a: &DMatrix<Cx<T>>, b: &DMatrix<Cx<T>>) -> T {
    let diff = (a - b).iter().fold(T::zero(), |s, v| s + v.modulus_squared()).sqrt();
    let nb = b.iter().fold(T::zero(), |s, v| s + v.modulus_squared()).sqrt();
    if nb == T::zero() {
        diff
    } else {
        diff / nb
    }
}

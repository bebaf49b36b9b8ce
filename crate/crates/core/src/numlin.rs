//! Dense linear-algebra kernels for the LQR benchmark.
//!
//! Matrices are `nalgebra::DMatrix<f64>`. Random matrices are filled in
//! row-major order from the seeded generator so that the draw order is
//! independent of the storage layout.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub type Mat = DMatrix<f64>;

/// Numerical tolerances used by the solvers in this module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Orthogonality defect allowed for sampled (semi-)orthogonal matrices.
    pub orthogonality: f64,
    /// A closed loop counts as stable when its spectral radius is below `1 - stability_margin`.
    pub stability_margin: f64,
    /// Smith doubling stops once the max-norm of an update drops below this.
    pub lyapunov_update: f64,
    pub lyapunov_max_rounds: usize,
    /// Relative fixed-point residual accepted for a Lyapunov solution.
    pub lyapunov_residual: f64,
    /// Riccati iteration stops once the max-norm of an update drops below this.
    pub dare_update: f64,
    pub dare_max_iters: usize,
    /// Relative fixed-point residual accepted for a DARE solution.
    pub dare_residual: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    orthogonality: 1e-10,
    stability_margin: 1e-9,
    lyapunov_update: 1e-14,
    lyapunov_max_rounds: 200,
    lyapunov_residual: 1e-10,
    dare_update: 1e-12,
    dare_max_iters: 10_000,
    dare_residual: 1e-9,
};

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub(crate) fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = rng_from_seed(seed);
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    Mat::from_row_slice(rows, cols, &data)
}

/// QR of a Gaussian matrix with the signs of `diag(R)` folded into `Q`, which
/// makes the result Haar distributed.
fn haar_columns(rows: usize, cols: usize, seed: u64) -> Mat {
    let g = gaussian_matrix(rows, cols, seed);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Haar-random `n x n` orthogonal matrix.
pub fn sample_orthogonal(n: usize, seed: u64) -> Result<Mat> {
    if n == 0 {
        return Err(Error::InvalidArgument("orthogonal matrix needs n >= 1".into()));
    }
    Ok(haar_columns(n, n, seed))
}

/// Random `rows x cols` matrix with orthonormal columns (`MᵀM = I`).
pub fn sample_semi_orthogonal(rows: usize, cols: usize, seed: u64) -> Result<Mat> {
    if cols == 0 || rows < cols {
        return Err(Error::InvalidArgument(format!(
            "semi-orthogonal matrix needs rows >= cols >= 1, got {rows}x{cols}"
        )));
    }
    Ok(haar_columns(rows, cols, seed))
}

fn require_square(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Largest eigenvalue modulus, from the real Schur form.
pub fn spectral_radius(m: &Mat) -> Result<f64> {
    require_square(m, "spectral_radius input")?;
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let eig = m.clone().complex_eigenvalues();
    Ok(eig.iter().fold(0.0_f64, |acc, z| acc.max(z.norm())))
}

pub fn is_stable(m: &Mat) -> Result<bool> {
    Ok(spectral_radius(m)? < 1.0 - TOLERANCES.stability_margin)
}

/// Solves `P = Qeff + Aclᵀ P Acl` by Smith doubling.
///
/// `P_{k+1} = P_k + A_kᵀ P_k A_k`, `A_{k+1} = A_k²`, starting at `P_0 = Qeff`.
pub fn solve_discrete_lyapunov(acl: &Mat, qeff: &Mat) -> Result<Mat> {
    require_square(acl, "closed-loop matrix")?;
    require_square(qeff, "weight matrix")?;
    if acl.nrows() != qeff.nrows() {
        return Err(Error::Shape(format!(
            "closed loop is {}x{} but weight is {}x{}",
            acl.nrows(),
            acl.ncols(),
            qeff.nrows(),
            qeff.ncols()
        )));
    }
    let radius = spectral_radius(acl)?;
    if radius >= 1.0 - TOLERANCES.stability_margin {
        return Err(Error::Unstable { radius });
    }
    lyapunov_doubling(acl, qeff, radius)
}

/// Doubling iteration without the up-front eigenvalue check; the caller has
/// already established stability.
pub(crate) fn lyapunov_doubling(acl: &Mat, qeff: &Mat, radius: f64) -> Result<Mat> {
    let n = acl.nrows();
    let mut p = qeff.clone();
    let mut a = acl.clone();
    let mut pa = Mat::zeros(n, n);
    let mut update = Mat::zeros(n, n);
    let mut last = f64::INFINITY;
    let mut converged = false;
    for _ in 0..TOLERANCES.lyapunov_max_rounds {
        pa.gemm(1.0, &p, &a, 0.0);
        update.gemm_tr(1.0, &a, &pa, 0.0);
        last = max_abs(&update);
        p += &update;
        if !last.is_finite() {
            return Err(Error::Unstable { radius });
        }
        if last < TOLERANCES.lyapunov_update {
            converged = true;
            break;
        }
        a = &a * &a;
    }
    if !converged {
        return Err(Error::NonConvergent {
            method: "lyapunov doubling",
            iterations: TOLERANCES.lyapunov_max_rounds,
            residual: last,
        });
    }
    let p = (&p + p.transpose()) * 0.5;
    let residual = max_abs(&(&p - (qeff + acl.transpose() * &p * acl)));
    if residual > TOLERANCES.lyapunov_residual * max_abs(&p).max(f64::MIN_POSITIVE) {
        return Err(Error::NonConvergent {
            method: "lyapunov doubling",
            iterations: TOLERANCES.lyapunov_max_rounds,
            residual,
        });
    }
    Ok(p)
}

/// Stabilizing solution of the discrete algebraic Riccati equation and the
/// matching optimal gain `Kstar = -(R + BᵀPB)⁻¹ BᵀPA` (so `a = Kstar s`).
pub fn solve_dare(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<(Mat, Mat)> {
    require_square(a, "A")?;
    require_square(q, "Q")?;
    require_square(r, "R")?;
    let n = a.nrows();
    let m = b.ncols();
    if b.nrows() != n || q.nrows() != n || r.nrows() != m {
        return Err(Error::Shape(format!(
            "DARE shapes: A {n}x{n}, B {}x{}, Q {}x{}, R {}x{}",
            b.nrows(),
            b.ncols(),
            q.nrows(),
            q.ncols(),
            r.nrows(),
            r.ncols()
        )));
    }

    let riccati = |p: &Mat| -> Result<(Mat, Mat)> {
        let bt_p = b.transpose() * p;
        let gram = r + &bt_p * b;
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("R + BᵀPB is not positive definite".into()))?;
        let gain_rhs = &bt_p * a;
        let k = -chol.solve(&gain_rhs);
        // Q + AᵀPA + AᵀPB K  (K already carries the minus sign)
        let next = q + a.transpose() * p * a + gain_rhs.transpose() * &k;
        Ok(((&next + next.transpose()) * 0.5, k))
    };

    let mut p = q.clone();
    let mut last = f64::INFINITY;
    for _ in 0..TOLERANCES.dare_max_iters {
        let (next, _) = riccati(&p)?;
        last = max_abs(&(&next - &p));
        p = next;
        if !last.is_finite() {
            break;
        }
        if last < TOLERANCES.dare_update {
            let (check, k) = riccati(&p)?;
            let residual = max_abs(&(&check - &p));
            if residual <= TOLERANCES.dare_residual * max_abs(&p).max(f64::MIN_POSITIVE) {
                return Ok((p, k));
            }
        }
    }
    Err(Error::NonConvergent {
        method: "riccati iteration",
        iterations: TOLERANCES.dare_max_iters,
        residual: last,
    })
}

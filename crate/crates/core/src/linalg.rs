//! Small dense complex matrix helpers shared by every module.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub type C64 = Complex64;
pub type Mat = DMatrix<C64>;

pub const I: C64 = C64::new(0.0, 1.0);
pub const TAU: f64 = std::f64::consts::TAU;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("eigenvalue at -1: principal logarithm undefined")]
    BranchCut,
    #[error("matrix not unitary within {0:e}")]
    NotUnitary(f64),
    #[error("matrix is singular")]
    Singular,
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// e^{2πi x}
pub fn cis(x: f64) -> C64 {
    let (s, c) = (TAU * x).sin_cos();
    C64::new(c, s)
}

pub fn identity(n: usize) -> Mat {
    Mat::identity(n, n)
}

pub fn zeros(n: usize) -> Mat {
    Mat::zeros(n, n)
}

pub fn diag(v: &[C64]) -> Mat {
    let n = v.len();
    let mut m = Mat::zeros(n, n);
    for (i, x) in v.iter().enumerate() {
        m[(i, i)] = *x;
    }
    m
}

/// Operator norm induced by the Hermitian inner product.
pub fn spectral_norm(m: &Mat) -> f64 {
    match m.nrows() {
        0 => 0.0,
        1 => m[(0, 0)].norm(),
        2 => {
            let (a, b, cc, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            let f2 = a.norm_sqr() + b.norm_sqr() + cc.norm_sqr() + d.norm_sqr();
            let det = (a * d - b * cc).norm();
            let disc = (f2 * f2 - 4.0 * det * det).max(0.0);
            ((f2 + disc.sqrt()) * 0.5).sqrt()
        }
        _ => {
            if m.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                return 0.0;
            }
            m.clone()
                .singular_values()
                .iter()
                .fold(0.0_f64, |a, b| a.max(*b))
        }
    }
}

pub fn frobenius(m: &Mat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// (X - X*)/2
pub fn skew_part(m: &Mat) -> Mat {
    (m - m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn unitarity_defect(m: &Mat) -> f64 {
    spectral_norm(&(m.adjoint() * m - identity(m.nrows())))
}

pub fn is_unitary(m: &Mat, tol: f64) -> bool {
    unitarity_defect(m) <= tol
}

/// Exponential of a skew-Hermitian matrix through the Hermitian eigenproblem of -iX,
/// so the result is unitary to rounding.
pub fn expm_skew(x: &Mat) -> Mat {
    let n = x.nrows();
    if n == 1 {
        return Mat::from_element(1, 1, C64::new(0.0, x[(0, 0)].im).exp());
    }
    let h = skew_part(x) * C64::new(0.0, -1.0);
    let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let v = eig.eigenvectors;
    let d: Vec<C64> = eig
        .eigenvalues
        .iter()
        .map(|mu| C64::new(0.0, *mu).exp())
        .collect();
    &v * diag(&d) * v.adjoint()
}

/// General matrix exponential (Padé, scaling and squaring).
pub fn expm(x: &Mat) -> Mat {
    if x.nrows() == 1 {
        return Mat::from_element(1, 1, x[(0, 0)].exp());
    }
    x.clone().exp()
}

/// Eigen-decomposition of a (near) unitary matrix: U = Z diag(λ) Z* with Z unitary and
/// |λ| = 1. Diagonal inputs keep their order and Z = I.
pub fn unitary_eig(u: &Mat) -> (Vec<C64>, Mat) {
    let n = u.nrows();
    let offdiag = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .all(|(i, j)| u[(i, j)] == C64::new(0.0, 0.0));
    if offdiag {
        let lam = (0..n).map(|i| normalize_phase(u[(i, i)])).collect();
        return (lam, identity(n));
    }
    if let Some(schur) = nalgebra::linalg::Schur::try_new(u.clone(), f64::EPSILON, SCHUR_MAX_ITERS) {
        let (z, t) = schur.unpack();
        let lam = (0..n).map(|i| normalize_phase(t[(i, i)])).collect();
        return (lam, z);
    }
    // U normal: its Hermitian and skew parts commute, so a generic real combination has
    // the same eigenvectors.
    let re = (u + u.adjoint()) * C64::new(0.5, 0.0);
    let im = (u - u.adjoint()) * C64::new(0.0, -0.5);
    let h = &re + &im * C64::new(SCHUR_FALLBACK_MIX, 0.0);
    let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
    let z = h.symmetric_eigen().eigenvectors;
    let t = z.adjoint() * u * &z;
    let lam = (0..n).map(|i| normalize_phase(t[(i, i)])).collect();
    (lam, z)
}

const SCHUR_MAX_ITERS: usize = 10_000;
const SCHUR_FALLBACK_MIX: f64 = 0.734_137_2;

fn normalize_phase(z: C64) -> C64 {
    let r = z.norm();
    if r == 0.0 {
        C64::new(1.0, 0.0)
    } else {
        z / r
    }
}

/// Principal logarithm of a unitary matrix, skew-Hermitian projected.
pub fn logm_unitary(u: &Mat) -> Result<Mat, LinalgError> {
    let n = u.nrows();
    if n == 1 {
        let z = u[(0, 0)];
        if (z + 1.0).norm() < 1e-12 {
            return Err(LinalgError::BranchCut);
        }
        return Ok(Mat::from_element(1, 1, C64::new(0.0, z.arg())));
    }
    let (lam, z) = unitary_eig(u);
    let mut d = Vec::with_capacity(n);
    for l in &lam {
        if (*l + 1.0).norm() < 1e-12 {
            return Err(LinalgError::BranchCut);
        }
        d.push(C64::new(0.0, l.arg()));
    }
    Ok(skew_part(&(&z * diag(&d) * z.adjoint())))
}

/// Integer power of a unitary matrix (negative powers use the adjoint).
pub fn unitary_pow(u: &Mat, k: i64) -> Mat {
    let base = if k < 0 { u.adjoint() } else { u.clone() };
    let mut e = k.unsigned_abs();
    let mut acc = identity(u.nrows());
    let mut b = base;
    while e > 0 {
        if e & 1 == 1 {
            acc = &acc * &b;
        }
        b = &b * &b;
        e >>= 1;
    }
    acc
}

/// Nearest unitary matrix in Frobenius norm (polar factor).
pub fn polar_unitary(m: &Mat) -> Mat {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    u * vt
}

pub fn inverse(m: &Mat) -> Result<Mat, LinalgError> {
    m.clone().try_inverse().ok_or(LinalgError::Singular)
}

/// Haar-distributed unitary: QR of a complex Gaussian matrix with the phases of diag(R)
/// moved into Q.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat {
    let g = Mat::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    });
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let phases: Vec<C64> = (0..n).map(|i| normalize_phase(r[(i, i)])).collect();
    q * diag(&phases)
}

/// Random skew-Hermitian matrix with Gaussian entries.
pub fn random_skew<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat {
    let g = Mat::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    });
    skew_part(&g)
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    spectral_norm(&(a - b))
}

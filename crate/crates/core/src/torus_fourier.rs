//! Matrix-valued trigonometric polynomials on T^d.
//!
//! A [`FourierMap`] stores finitely many coefficients `F̂(k)`, `k ∈ Z^d`, each an `n×n`
//! complex matrix. Strip norms use `|k| = |k_1| + … + |k_d|` and the spectral norm on
//! coefficients. Pointwise nonlinear maps (exp, log, products with inverses) go through
//! a uniform grid and an n-dimensional FFT.

use std::collections::BTreeMap;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, C64, Mat, LinalgError, TAU};

/// Relative coefficient floor applied after products.
pub const COEFF_FLOOR: f64 = 1e-16;
/// Relative truncation floor for exp/log outputs.
pub const EXP_FLOOR: f64 = 1e-14;
/// Power-series tail level used by the bandwidth heuristic.
const SERIES_TAIL: f64 = 1e-17;
const MAX_SERIES_ORDER: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FourierError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("grid {grid} too coarse, need at least {required}")]
    GridTooCoarse { grid: usize, required: usize },
    #[error("logarithm branch failure: sup |G - I| = {dist:.3e}")]
    Branch { dist: f64 },
    #[error("strip width must be nonnegative, got {0}")]
    StripWidth(f64),
    #[error("invalid coefficient file: {0}")]
    File(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Freq = Vec<i64>;

pub fn l1(k: &[i64]) -> i64 {
    k.iter().map(|x| x.abs()).sum()
}

pub fn dot(k: &[i64], a: &[f64]) -> f64 {
    k.iter().zip(a).map(|(x, y)| *x as f64 * y).sum()
}

pub fn next_pow2(x: usize) -> usize {
    x.max(1).next_power_of_two()
}

/// Finitely supported matrix Fourier series.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierMap {
    d: usize,
    n: usize,
    skew: bool,
    coeffs: BTreeMap<Freq, Mat>,
}

/// Unitary constant with its diagonalization `S A S* = diag(λ)`.
#[derive(Clone, Debug)]
pub struct UnitaryConstant {
    pub matrix: Mat,
    pub eigenvalues: Vec<C64>,
    pub s: Mat,
}

impl UnitaryConstant {
    pub fn new(a: Mat, tol: f64) -> Result<Self, LinalgError> {
        let defect = linalg::unitarity_defect(&a);
        if defect > tol {
            return Err(LinalgError::NotUnitary(defect));
        }
        let (eigenvalues, z) = linalg::unitary_eig(&a);
        Ok(UnitaryConstant {
            matrix: a,
            eigenvalues,
            s: z.adjoint(),
        })
    }

    pub fn from_phases(phases: &[f64]) -> Self {
        let lam: Vec<C64> = phases.iter().map(|p| linalg::cis(*p)).collect();
        let n = lam.len();
        UnitaryConstant {
            matrix: linalg::diag(&lam),
            eigenvalues: lam,
            s: linalg::identity(n),
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Phases ϱ_p ∈ (-1/2, 1/2] with λ_p = e^{2πiϱ_p}.
    pub fn phases(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| l.arg() / TAU).collect()
    }

    pub fn diag(&self) -> Mat {
        linalg::diag(&self.eigenvalues)
    }
}

impl FourierMap {
    pub fn zero(d: usize, n: usize) -> Self {
        FourierMap {
            d,
            n,
            skew: true,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(d: usize, m: Mat) -> Self {
        let n = m.nrows();
        let skew = linalg::spectral_norm(&(&m + m.adjoint())) == 0.0;
        let mut f = FourierMap::zero(d, n);
        f.skew = skew;
        f.insert(vec![0; d], m);
        f
    }

    pub fn identity(d: usize, n: usize) -> Self {
        let mut f = FourierMap::constant(d, linalg::identity(n));
        f.skew = false;
        f
    }

    pub fn single(k: Freq, m: Mat, skew: bool) -> Self {
        let mut f = FourierMap::zero(k.len(), m.nrows());
        f.skew = skew;
        f.insert(k, m);
        f
    }

    /// Builds a map from explicit coefficients; the skew flag is verified, not trusted.
    pub fn from_coeffs(d: usize, n: usize, coeffs: impl IntoIterator<Item = (Freq, Mat)>) -> Self {
        let mut f = FourierMap::zero(d, n);
        f.skew = false;
        for (k, m) in coeffs {
            f.add_coeff(k, &m);
        }
        f.skew = f.skew_defect() == 0.0;
        f
    }

    pub fn dim_d(&self) -> usize {
        self.d
    }

    pub fn dim_n(&self) -> usize {
        self.n
    }

    pub fn is_skew(&self) -> bool {
        self.skew
    }

    pub fn with_skew(mut self, skew: bool) -> Self {
        self.skew = skew;
        self
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Freq, &Mat)> {
        self.coeffs.iter()
    }

    pub fn get(&self, k: &[i64]) -> Option<&Mat> {
        self.coeffs.get(k)
    }

    pub fn coeff(&self, k: &[i64]) -> Mat {
        self.coeffs
            .get(k)
            .cloned()
            .unwrap_or_else(|| linalg::zeros(self.n))
    }

    pub fn mean(&self) -> Mat {
        self.coeff(&vec![0; self.d])
    }

    /// Sets a coefficient; does not update the skew flag.
    pub fn insert(&mut self, k: Freq, m: Mat) {
        assert_eq!(k.len(), self.d, "frequency length");
        assert_eq!(m.nrows(), self.n, "matrix size");
        self.coeffs.insert(k, m);
    }

    pub fn add_coeff(&mut self, k: Freq, m: &Mat) {
        assert_eq!(k.len(), self.d, "frequency length");
        match self.coeffs.get_mut(&k) {
            Some(e) => *e += m,
            None => {
                self.coeffs.insert(k, m.clone());
            }
        }
    }

    pub fn remove(&mut self, k: &[i64]) -> Option<Mat> {
        self.coeffs.remove(k)
    }

    /// Largest ℓ1 frequency in the support.
    pub fn max_l1(&self) -> i64 {
        self.coeffs.keys().map(|k| l1(k)).max().unwrap_or(0)
    }

    /// Largest single-axis frequency in the support.
    pub fn max_linf(&self) -> i64 {
        self.coeffs
            .keys()
            .flat_map(|k| k.iter().map(|x| x.abs()))
            .max()
            .unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.keys().all(|k| k.iter().all(|x| *x == 0))
    }

    /// max_k |F̂(k)* + F̂(-k)|
    pub fn skew_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (k, m) in &self.coeffs {
            let neg: Freq = k.iter().map(|x| -x).collect();
            let other = self.coeff(&neg);
            worst = worst.max(linalg::spectral_norm(&(m.adjoint() + other)));
        }
        worst
    }

    /// Coefficientwise projection onto skew-Hermitian-valued maps: (F - F*)/2.
    pub fn project_skew(&self) -> FourierMap {
        let adj = self.adjoint_map();
        let mut out = self.sub(&adj).scale(0.5);
        out.skew = true;
        out
    }

    /// The map θ ↦ F(θ)*.
    pub fn adjoint_map(&self) -> FourierMap {
        let mut out = FourierMap::zero(self.d, self.n);
        out.skew = self.skew;
        for (k, m) in &self.coeffs {
            let neg: Freq = k.iter().map(|x| -x).collect();
            out.coeffs.insert(neg, m.adjoint());
        }
        out
    }

    fn check_same(&self, other: &FourierMap) {
        assert_eq!(self.d, other.d, "torus dimension");
        assert_eq!(self.n, other.n, "matrix size");
    }

    pub fn add(&self, other: &FourierMap) -> FourierMap {
        self.check_same(other);
        let mut out = self.clone();
        for (k, m) in &other.coeffs {
            out.add_coeff(k.clone(), m);
        }
        out.skew = self.skew && other.skew;
        out
    }

    pub fn sub(&self, other: &FourierMap) -> FourierMap {
        self.add(&other.scale(-1.0))
    }

    /// Real multiple, keeps the skew flag.
    pub fn scale(&self, s: f64) -> FourierMap {
        let mut out = self.clone();
        for m in out.coeffs.values_mut() {
            *m *= C64::new(s, 0.0);
        }
        out
    }

    pub fn scale_complex(&self, s: C64) -> FourierMap {
        let mut out = self.clone();
        for m in out.coeffs.values_mut() {
            *m *= s;
        }
        out.skew = self.skew && s.im == 0.0;
        out
    }

    /// θ ↦ L F(θ) R for constant L, R.
    pub fn sandwich(&self, left: &Mat, right: &Mat) -> FourierMap {
        let mut out = self.clone();
        for m in out.coeffs.values_mut() {
            *m = left * &*m * right;
        }
        out.skew = false;
        out
    }

    /// θ ↦ S F(θ) S* for a unitary S; keeps the skew flag.
    pub fn conjugate_by(&self, s: &Mat) -> FourierMap {
        let skew = self.skew;
        let mut out = self.sandwich(s, &s.adjoint());
        out.skew = skew;
        out
    }

    pub fn truncate(&self, n_order: i64) -> FourierMap {
        self.filter(|k| l1(k) <= n_order)
    }

    pub fn remainder(&self, n_order: i64) -> FourierMap {
        self.filter(|k| l1(k) > n_order)
    }

    pub fn filter(&self, keep: impl Fn(&[i64]) -> bool) -> FourierMap {
        FourierMap {
            d: self.d,
            n: self.n,
            skew: self.skew,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, m)| (k.clone(), m.clone()))
                .collect(),
        }
    }

    /// Drops coefficients whose norm is below `rel` times the largest coefficient norm.
    pub fn prune(&self, rel: f64) -> FourierMap {
        let lead = self.max_coeff_norm();
        self.prune_abs(rel * lead)
    }

    pub fn prune_abs(&self, floor: f64) -> FourierMap {
        let mut out = self.clone();
        out.coeffs
            .retain(|_, m| m.iter().any(|z| z.re != 0.0 || z.im != 0.0) && linalg::spectral_norm(m) >= floor);
        out
    }

    pub fn max_coeff_norm(&self) -> f64 {
        self.coeffs
            .values()
            .map(linalg::spectral_norm)
            .fold(0.0, f64::max)
    }

    /// F̂(k) ↦ e^{2πi⟨k,α⟩} F̂(k), so that the result evaluates to F(θ+α).
    pub fn shift(&self, alpha: &[f64]) -> FourierMap {
        assert_eq!(alpha.len(), self.d, "shift dimension");
        let mut out = self.clone();
        for (k, m) in out.coeffs.iter_mut() {
            *m *= linalg::cis(dot(k, alpha));
        }
        out
    }

    /// Σ_k |F̂(k)| e^{2π|k|h}
    pub fn wiener_norm(&self, h: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(k, m)| linalg::spectral_norm(m) * (TAU * l1(k) as f64 * h).exp())
            .sum()
    }

    pub fn eval(&self, theta: &[f64]) -> Mat {
        let mut acc = linalg::zeros(self.n);
        for (k, m) in &self.coeffs {
            acc += m * linalg::cis(dot(k, theta));
        }
        acc
    }

    /// F(θ + iy)
    pub fn eval_complex(&self, theta: &[f64], y: &[f64]) -> Mat {
        let mut acc = linalg::zeros(self.n);
        for (k, m) in &self.coeffs {
            let w = linalg::cis(dot(k, theta)) * (-TAU * dot(k, y)).exp();
            acc += m * w;
        }
        acc
    }

    /// Lower bound from a grid over θ and y ∈ [-h,h]^d (endpoints included), upper
    /// bound from the Wiener norm.
    pub fn strip_sup_norm(&self, h: f64, grid: usize) -> Result<(f64, f64), FourierError> {
        if h < 0.0 {
            return Err(FourierError::StripWidth(h));
        }
        let grid = grid.max(1);
        let ny = if h == 0.0 { 1 } else { 5 };
        let ys: Vec<f64> = (0..ny)
            .map(|i| if ny == 1 { 0.0 } else { -h + 2.0 * h * i as f64 / (ny - 1) as f64 })
            .collect();
        let mut lower = 0.0_f64;
        let mut yidx = vec![0usize; self.d];
        loop {
            let y: Vec<f64> = yidx.iter().map(|i| ys[*i]).collect();
            let damped = self.damp(&y);
            for v in damped.to_grid(grid) {
                lower = lower.max(linalg::spectral_norm(&v));
            }
            if !advance(&mut yidx, ny) {
                break;
            }
        }
        Ok((lower, self.wiener_norm(h)))
    }

    /// Grid sup-norm on the real torus.
    pub fn grid_sup(&self, grid: usize) -> f64 {
        self.to_grid(grid)
            .iter()
            .map(linalg::spectral_norm)
            .fold(0.0, f64::max)
    }

    /// Coefficients multiplied by e^{-2π⟨k,y⟩}: the map θ ↦ F(θ + iy).
    fn damp(&self, y: &[f64]) -> FourierMap {
        let mut out = self.clone();
        for (k, m) in out.coeffs.iter_mut() {
            *m *= C64::new((-TAU * dot(k, y)).exp(), 0.0);
        }
        out.skew = false;
        out
    }

    /// Values at θ_j = j/M (row-major over the d axes). Exact for any M: aliased modes
    /// are accumulated before the transform.
    pub fn to_grid(&self, m: usize) -> Vec<Mat> {
        let total = m.pow(self.d as u32);
        let n = self.n;
        let mut planes: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); total]; n * n];
        for (k, c) in &self.coeffs {
            let idx = flat_index(k, m);
            for p in 0..n {
                for q in 0..n {
                    planes[p * n + q][idx] += c[(p, q)];
                }
            }
        }
        let mut planner = FftPlanner::new();
        for plane in planes.iter_mut() {
            fft_nd(&mut planner, plane, m, self.d, true);
        }
        (0..total)
            .map(|i| Mat::from_fn(n, n, |p, q| planes[p * n + q][i]))
            .collect()
    }

    /// Interpolating coefficients from grid values. The Nyquist bin of each axis is split
    /// evenly between ±M/2, which keeps skew symmetry and reproduces the grid exactly.
    pub fn from_grid(d: usize, n: usize, m: usize, values: &[Mat]) -> FourierMap {
        let total = m.pow(d as u32);
        assert_eq!(values.len(), total, "grid size");
        let mut planes: Vec<Vec<C64>> = (0..n * n)
            .map(|pq| values.iter().map(|v| v[(pq / n, pq % n)]).collect())
            .collect();
        let mut planner = FftPlanner::new();
        for plane in planes.iter_mut() {
            fft_nd(&mut planner, plane, m, d, false);
        }
        let norm = 1.0 / total as f64;
        let mut out = FourierMap::zero(d, n);
        out.skew = false;
        let mut idx = vec![0usize; d];
        let mut flat = 0usize;
        loop {
            let c = Mat::from_fn(n, n, |p, q| planes[p * n + q][flat] * norm);
            if c.iter().any(|z| z.re != 0.0 || z.im != 0.0) {
                for (k, w) in unfold_index(&idx, m) {
                    out.add_coeff(k, &(&c * C64::new(w, 0.0)));
                }
            }
            flat += 1;
            if !advance(&mut idx, m) {
                break;
            }
        }
        out
    }

    /// Grid points θ_j for a grid of size M per axis, in `to_grid` order.
    pub fn grid_points(d: usize, m: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(m.pow(d as u32));
        let mut idx = vec![0usize; d];
        loop {
            out.push(idx.iter().map(|i| *i as f64 / m as f64).collect());
            if !advance(&mut idx, m) {
                break;
            }
        }
        out
    }

    /// Product θ ↦ F(θ)G(θ). Direct convolution for small supports, FFT otherwise;
    /// pruned at the relative coefficient floor.
    pub fn mul(&self, other: &FourierMap) -> FourierMap {
        self.check_same(other);
        if self.is_empty() || other.is_empty() {
            return FourierMap::zero(self.d, self.n).with_skew(false);
        }
        let work = self.len() * other.len();
        let out = if work <= 4096 || self.d == 0 {
            let mut out = FourierMap::zero(self.d, self.n);
            for (k1, a) in &self.coeffs {
                for (k2, b) in &other.coeffs {
                    let k: Freq = k1.iter().zip(k2).map(|(x, y)| x + y).collect();
                    out.add_coeff(k, &(a * b));
                }
            }
            out
        } else {
            let kmax = self.max_linf() + other.max_linf();
            let l1max = self.max_l1() + other.max_l1();
            let m = next_pow2(2 * kmax as usize + 2);
            let ga = self.to_grid(m);
            let gb = other.to_grid(m);
            let prod: Vec<Mat> = ga.iter().zip(&gb).map(|(a, b)| a * b).collect();
            FourierMap::from_grid(self.d, self.n, m, &prod).filter(|k| l1(k) <= l1max)
        };
        let scale = self.wiener_norm(0.0) * other.wiener_norm(0.0);
        out.prune_abs(COEFF_FLOOR * scale).with_skew(false)
    }

    /// Applies `f` pointwise on a grid of size M per axis and interpolates back.
    pub fn map_grid<Fn1>(&self, m: usize, f: Fn1) -> Result<FourierMap, FourierError>
    where
        Fn1: Fn(&Mat) -> Result<Mat, FourierError> + Sync + Send,
    {
        use rayon::prelude::*;
        let vals = self.to_grid(m);
        let out: Result<Vec<Mat>, FourierError> = vals.par_iter().map(&f).collect();
        Ok(FourierMap::from_grid(self.d, self.n, m, &out?))
    }

    /// Bandwidth heuristic for a power series in the non-constant part: the smallest r
    /// with w^r/r! below the tail level (factorial = true) or w^r below it.
    pub fn series_order(w: f64, factorial: bool) -> usize {
        if w == 0.0 {
            return 0;
        }
        let mut term = 1.0_f64;
        for r in 1..=MAX_SERIES_ORDER {
            term *= w;
            if factorial {
                term /= r as f64;
            }
            if term <= SERIES_TAIL {
                return r;
            }
        }
        MAX_SERIES_ORDER
    }

    fn nonconstant_wiener(&self) -> f64 {
        self.coeffs
            .iter()
            .filter(|(k, _)| k.iter().any(|x| *x != 0))
            .map(|(_, m)| linalg::spectral_norm(m))
            .sum()
    }

    /// Smallest admissible grid for `exp_map`, together with the output ℓ1 bandwidth.
    pub fn exp_grid(&self) -> (usize, i64) {
        let r = Self::series_order(self.nonconstant_wiener(), true).max(1) as i64;
        let kinf = self.max_linf();
        let band = self.max_l1() * r;
        let need = (4 * (kinf + 1)).max(2 * kinf * r + 2) as usize;
        (next_pow2(need), band)
    }

    /// Smallest admissible grid for `log_map` and the output ℓ1 bandwidth.
    pub fn log_grid(&self) -> (usize, i64) {
        let c0 = linalg::spectral_norm(&(self.mean() - linalg::identity(self.n)));
        let w = self.nonconstant_wiener() / (1.0 - c0).max(1e-3);
        let r = Self::series_order(w, false).max(1) as i64;
        let kinf = self.max_linf();
        let band = self.max_l1() * r;
        let need = (4 * (kinf + 1)).max(2 * kinf * r + 2) as usize;
        (next_pow2(need), band)
    }

    /// e^{F(θ)} for skew-Hermitian-valued F, sampled on a grid and interpolated.
    pub fn exp_map(&self, grid: Option<usize>) -> Result<FourierMap, FourierError> {
        let (need, band) = self.exp_grid();
        let m = grid.unwrap_or(need);
        if m < need {
            return Err(FourierError::GridTooCoarse { grid: m, required: need });
        }
        if self.is_constant() {
            let e = linalg::expm_skew(&self.mean());
            return Ok(FourierMap::constant(self.d, e).with_skew(false));
        }
        let out = self.map_grid(m, |x| Ok(linalg::expm_skew(x)))?;
        Ok(out
            .filter(|k| l1(k) <= band)
            .prune(EXP_FLOOR)
            .with_skew(false))
    }

    /// Pointwise principal logarithm of a unitary-valued G with sup |G - I| < 1.
    pub fn log_map(&self, grid: Option<usize>) -> Result<FourierMap, FourierError> {
        let (need, band) = self.log_grid();
        let m = grid.unwrap_or(need);
        if m < need {
            return Err(FourierError::GridTooCoarse { grid: m, required: need });
        }
        let id = linalg::identity(self.n);
        let vals = self.to_grid(m);
        let dist = vals
            .iter()
            .map(|v| linalg::spectral_norm(&(v - &id)))
            .fold(0.0, f64::max);
        if dist >= 1.0 {
            return Err(FourierError::Branch { dist });
        }
        if self.is_constant() {
            let l = linalg::logm_unitary(&self.mean())?;
            return Ok(FourierMap::constant(self.d, l).with_skew(true));
        }
        let scale = vals.iter().map(linalg::spectral_norm).fold(0.0, f64::max);
        let out = self.map_grid(m, |g| Ok(linalg::logm_unitary(g)?))?;
        Ok(out
            .filter(|k| l1(k) <= band)
            .prune_abs(EXP_FLOOR * scale)
            .project_skew())
    }

    pub fn to_file(&self) -> CoeffFile {
        CoeffFile {
            d: self.d,
            n: self.n,
            skew: self.skew,
            coeffs: self
                .coeffs
                .iter()
                .map(|(k, m)| CoeffRecord {
                    k: k.clone(),
                    entries: (0..self.n)
                        .flat_map(|p| (0..self.n).map(move |q| (p, q)))
                        .filter(|(p, q)| m[(*p, *q)] != C64::new(0.0, 0.0))
                        .map(|(p, q)| EntryRecord {
                            p: p + 1,
                            q: q + 1,
                            re: m[(p, q)].re,
                            im: m[(p, q)].im,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_file(file: &CoeffFile) -> Result<FourierMap, FourierError> {
        if file.d == 0 || file.n == 0 {
            return Err(FourierError::File("d and n must be positive".into()));
        }
        let mut out = FourierMap::zero(file.d, file.n);
        for rec in &file.coeffs {
            if rec.k.len() != file.d {
                return Err(FourierError::File(format!(
                    "frequency {:?} has length {}, expected {}",
                    rec.k,
                    rec.k.len(),
                    file.d
                )));
            }
            let mut m = linalg::zeros(file.n);
            for e in &rec.entries {
                if e.p == 0 || e.q == 0 || e.p > file.n || e.q > file.n {
                    return Err(FourierError::File(format!("entry ({}, {}) out of range", e.p, e.q)));
                }
                m[(e.p - 1, e.q - 1)] += C64::new(e.re, e.im);
            }
            out.add_coeff(rec.k.clone(), &m);
        }
        if file.skew {
            let defect = out.skew_defect();
            let scale = out.max_coeff_norm().max(1.0);
            if defect > 1e-12 * scale {
                return Err(FourierError::File(format!(
                    "flagged skew but F̂(k)* + F̂(-k) reaches {defect:.3e}"
                )));
            }
        }
        out.skew = file.skew;
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("coefficient file serializes")
    }

    pub fn from_json(s: &str) -> Result<FourierMap, FourierError> {
        let file: CoeffFile =
            serde_json::from_str(s).map_err(|e| FourierError::File(e.to_string()))?;
        FourierMap::from_file(&file)
    }
}

/// A_k with (α, A)^k = (kα, A_k): A_k(θ) = A(θ+(k-1)α)⋯A(θ) for k > 0 and
/// A_{-k}(θ) = A_k(θ-kα)^{-1} = A_k(θ-kα)* for unitary-valued A.
pub fn cocycle_iterate(alpha: &[f64], a: &FourierMap, k: i64) -> FourierMap {
    let d = a.dim_d();
    let n = a.dim_n();
    let mut acc = FourierMap::identity(d, n);
    let steps = k.unsigned_abs();
    for j in 0..steps {
        let shift: Vec<f64> = alpha.iter().map(|x| x * j as f64).collect();
        acc = a.shift(&shift).mul(&acc);
    }
    if k >= 0 {
        acc
    } else {
        let back: Vec<f64> = alpha.iter().map(|x| x * k as f64).collect();
        acc.shift(&back).adjoint_map().with_skew(false)
    }
}

/// Serialized coefficient file; p, q are 1-based.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CoeffFile {
    pub d: usize,
    pub n: usize,
    pub skew: bool,
    pub coeffs: Vec<CoeffRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CoeffRecord {
    pub k: Vec<i64>,
    pub entries: Vec<EntryRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EntryRecord {
    pub p: usize,
    pub q: usize,
    pub re: f64,
    pub im: f64,
}

/// Odometer increment over {0..m}^d; false once it wraps.
pub(crate) fn advance(idx: &mut [usize], m: usize) -> bool {
    for i in (0..idx.len()).rev() {
        idx[i] += 1;
        if idx[i] < m {
            return true;
        }
        idx[i] = 0;
    }
    false
}

fn flat_index(k: &[i64], m: usize) -> usize {
    let mi = m as i64;
    k.iter()
        .fold(0usize, |acc, x| acc * m + x.rem_euclid(mi) as usize)
}

/// Grid index to frequency vectors with weights; Nyquist bins are split.
fn unfold_index(idx: &[usize], m: usize) -> Vec<(Freq, f64)> {
    let mut out: Vec<(Freq, f64)> = vec![(Vec::with_capacity(idx.len()), 1.0)];
    for &i in idx {
        let opts: Vec<(i64, f64)> = if m % 2 == 0 && i == m / 2 && m > 1 {
            vec![(-(m as i64) / 2, 0.5), ((m as i64) / 2, 0.5)]
        } else if i <= m / 2 {
            vec![(i as i64, 1.0)]
        } else {
            vec![(i as i64 - m as i64, 1.0)]
        };
        let mut next = Vec::with_capacity(out.len() * opts.len());
        for (k, w) in &out {
            for (x, wx) in &opts {
                let mut k2 = k.clone();
                k2.push(*x);
                next.push((k2, w * wx));
            }
        }
        out = next;
    }
    out
}

/// In-place separable FFT over a row-major M^d array. `inverse` is the unnormalized
/// e^{+2πi} transform.
fn fft_nd(planner: &mut FftPlanner<f64>, data: &mut [C64], m: usize, d: usize, inverse: bool) {
    if m <= 1 || d == 0 {
        return;
    }
    let fft = if inverse {
        planner.plan_fft_inverse(m)
    } else {
        planner.plan_fft_forward(m)
    };
    let total = data.len();
    let mut buf = vec![C64::new(0.0, 0.0); m];
    for axis in 0..d {
        let stride = m.pow((d - 1 - axis) as u32);
        let block = stride * m;
        for start in (0..total).step_by(block) {
            for off in 0..stride {
                let base = start + off;
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = data[base + j * stride];
                }
                fft.process(&mut buf);
                for (j, b) in buf.iter().enumerate() {
                    data[base + j * stride] = *b;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, random_skew};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize) -> Mat {
        linalg::identity(n)
    }

    fn random_skew_map(d: usize, n: usize, kmax: i64, scale: f64, seed: u64) -> FourierMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = FourierMap::zero(d, n);
        let mut idx = vec![0usize; d];
        let m = (2 * kmax + 1) as usize;
        loop {
            let k: Freq = idx.iter().map(|i| *i as i64 - kmax).collect();
            let x = random_skew(n, &mut rng) * C64::new(scale, 0.0);
            // place G on k and its skew partner on -k
            let g = Mat::from_fn(n, n, |_, _| {
                C64::new(rand::Rng::random::<f64>(&mut rng) - 0.5, rand::Rng::random::<f64>(&mut rng) - 0.5)
            }) * C64::new(scale, 0.0);
            if k.iter().all(|x| *x == 0) {
                f.add_coeff(k, &x);
            } else {
                let neg: Freq = k.iter().map(|x| -x).collect();
                f.add_coeff(k, &g);
                f.add_coeff(neg, &(-g.adjoint()));
            }
            if !advance(&mut idx, m) {
                break;
            }
        }
        f.with_skew(true)
    }

    #[test]
    fn wiener_examples() {
        let f = FourierMap::identity(1, 2);
        assert_eq!(f.wiener_norm(0.5), 1.0);
        let g = FourierMap::single(vec![1], unit(1), false);
        assert!((g.wiener_norm(0.1) - (0.2 * std::f64::consts::PI).exp()).abs() < 1e-14);
        assert!((g.wiener_norm(0.1) - 1.874_456_1).abs() < 1e-6);
        let fg = g.mul(&g);
        assert!((fg.wiener_norm(0.3) - (4.0 * std::f64::consts::PI * 0.3).exp()).abs() < 1e-12);
    }

    #[test]
    fn strip_sup_examples() {
        let (lo, up) = FourierMap::identity(1, 2).strip_sup_norm(0.3, 16).unwrap();
        assert!((lo - 1.0).abs() < 1e-14 && (up - 1.0).abs() < 1e-14);
        let g = FourierMap::single(vec![1], unit(1), false);
        let (lo, up) = g.strip_sup_norm(0.1, 16).unwrap();
        let want = (0.2 * std::f64::consts::PI).exp();
        assert!((lo - want).abs() < 1e-12 && (up - want).abs() < 1e-12);
        assert_eq!(FourierMap::zero(1, 2).strip_sup_norm(0.1, 8).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn truncate_examples() {
        let f = random_skew_map(1, 2, 3, 0.1, 1);
        assert!(f.remainder(3).is_empty());
        let g = FourierMap::single(vec![5], unit(2), false);
        assert!(g.truncate(3).is_empty());
        assert_eq!(g.remainder(3), g);
    }

    #[test]
    fn shift_examples() {
        let f = random_skew_map(1, 2, 2, 0.1, 2);
        assert_eq!(f.shift(&[0.0]), f);
        let cst = FourierMap::constant(1, unit(2));
        assert_eq!(cst.shift(&[0.3]), cst);
        let g = FourierMap::single(vec![3], unit(1), false).shift(&[0.1]);
        let z = g.coeff(&[3])[(0, 0)];
        assert!((z - linalg::cis(0.3)).norm() < 1e-15);
    }

    #[test]
    fn grid_roundtrip_with_nyquist_split() {
        for d in 1..=2 {
            let f = random_skew_map(d, 2, 3, 0.3, 7 + d as u64);
            let m = 8;
            let back = FourierMap::from_grid(d, 2, m, &f.to_grid(m));
            assert!(back.sub(&f).wiener_norm(0.0) < 1e-13);
            let g = FourierMap::from_grid(d, 2, 6, &f.to_grid(6));
            let a = f.to_grid(6);
            let b = g.to_grid(6);
            let err = a.iter().zip(&b).map(|(x, y)| linalg::max_abs_diff(x, y)).fold(0.0, f64::max);
            assert!(err < 1e-13);
            assert!(g.skew_defect() < 1e-13);
        }
    }

    #[test]
    fn grid_matches_direct_evaluation() {
        let f = random_skew_map(2, 2, 2, 0.5, 3);
        let m = 8;
        let vals = f.to_grid(m);
        for (v, th) in vals.iter().zip(FourierMap::grid_points(2, m)) {
            assert!(linalg::max_abs_diff(v, &f.eval(&th)) < 1e-13);
        }
    }

    #[test]
    fn exp_examples() {
        let z = FourierMap::zero(1, 2);
        let e = z.exp_map(None).unwrap();
        assert!(e.sub(&FourierMap::identity(1, 2)).wiener_norm(0.0) < 1e-15);
        let x = random_skew(2, &mut ChaCha8Rng::seed_from_u64(4));
        let e = FourierMap::constant(1, x.clone()).exp_map(None).unwrap();
        assert!(linalg::max_abs_diff(&e.mean(), &linalg::expm(&x)) < 1e-13);
        assert_eq!(e.len(), 1);
    }

    /// Jacobi-Anger: e^{iz cos 2πθ} = Σ i^k J_k(z) e^{2πikθ}; compared against a fine
    /// pointwise oracle.
    #[test]
    fn exp_jacobi_anger() {
        let eps = 0.3;
        let mut f = FourierMap::zero(1, 1);
        let half = Mat::from_element(1, 1, c(0.0, TAU * eps / 2.0));
        f.insert(vec![1], half.clone());
        f.insert(vec![-1], half);
        let e = f.exp_map(None).unwrap();
        let fine = 1024;
        let oracle: Vec<Mat> = (0..fine)
            .map(|j| {
                let th = j as f64 / fine as f64;
                Mat::from_element(1, 1, c(0.0, TAU * eps * (TAU * th).cos()).exp())
            })
            .collect();
        let o = FourierMap::from_grid(1, 1, fine, &oracle);
        for k in -8..=8 {
            assert!((o.coeff(&[k]) - e.coeff(&[k]))[(0, 0)].norm() < 1e-13, "k={k}");
        }
        // J_1 sign and size: i·J_1(2πε)
        let j1 = 0.5 * TAU * eps * (1.0 - (TAU * eps).powi(2) / 8.0 + (TAU * eps).powi(4) / 192.0 - (TAU * eps).powi(6) / 9216.0);
        assert!((e.coeff(&[1])[(0, 0)] - c(0.0, j1)).norm() < 2e-3);
    }

    #[test]
    fn exp_rejects_coarse_grid() {
        let f = random_skew_map(1, 2, 4, 0.1, 5);
        assert!(matches!(f.exp_map(Some(8)), Err(FourierError::GridTooCoarse { .. })));
    }

    #[test]
    fn log_examples() {
        let l = FourierMap::identity(1, 2).log_map(None).unwrap();
        assert!(l.wiener_norm(0.0) < 1e-15);
        let x = random_skew(2, &mut ChaCha8Rng::seed_from_u64(8)) * c(0.05, 0.0);
        let g = FourierMap::constant(1, linalg::expm_skew(&x));
        let l = g.log_map(None).unwrap();
        assert!(linalg::max_abs_diff(&l.mean(), &x) < 1e-14);
        let bad = FourierMap::constant(1, linalg::diag(&[c(-1.0, 0.0), c(1.0, 0.0)]));
        assert!(matches!(bad.log_map(None), Err(FourierError::Branch { .. })));
    }

    #[test]
    fn cocycle_iterate_examples() {
        let alpha = [0.618_033_988_749_894_9];
        let x = random_skew(2, &mut ChaCha8Rng::seed_from_u64(12));
        let cst = FourierMap::constant(1, linalg::expm_skew(&x));
        assert!(cocycle_iterate(&alpha, &cst, 0).sub(&FourierMap::identity(1, 2)).wiener_norm(0.0) == 0.0);
        assert!(cocycle_iterate(&alpha, &cst, 1).sub(&cst).wiener_norm(0.0) < 1e-15);
        let a3 = linalg::unitary_pow(&cst.mean(), 3);
        assert!(linalg::max_abs_diff(&cocycle_iterate(&alpha, &cst, 3).mean(), &a3) < 1e-14);

        let a = random_skew_map(1, 2, 1, 0.2, 13).exp_map(None).unwrap();
        let a2 = cocycle_iterate(&alpha, &a, 2);
        let am2 = cocycle_iterate(&alpha, &a, -2);
        // A_{-2}(θ + 2α) A_2(θ) = A_0 = I
        let comp = am2.shift(&[2.0 * alpha[0]]).mul(&a2);
        assert!(comp.sub(&FourierMap::identity(1, 2)).grid_sup(64) < 1e-10);
    }

    #[test]
    fn json_roundtrip() {
        let f = random_skew_map(2, 2, 1, 0.2, 21);
        let g = FourierMap::from_json(&f.to_json()).unwrap();
        assert_eq!(f, g);
        let bad = r#"{"d":1,"n":2,"skew":false,"coeffs":[{"k":[0,1],"entries":[]}]}"#;
        assert!(FourierMap::from_json(bad).is_err());
        let bad = r#"{"d":1,"n":2,"skew":false,"coeffs":[{"k":[0],"entries":[{"p":3,"q":1,"re":1,"im":0}]}]}"#;
        assert!(FourierMap::from_json(bad).is_err());
    }

    #[test]
    fn remainder_bound_with_unit_constant() {
        // |R_N F|_{1,h+} ≤ c N^d (h-h+)^{-d} e^{-N(h-h+)} |F|_h with c = 1; |F|_h from the
        // grid lower bound, which can only make the check stricter.
        for seed in 0..6u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut f = FourierMap::zero(1, 2);
            for k in -30i64..=30 {
                let x = random_skew(2, &mut rng) * C64::new((-TAU * 0.3 * k.abs() as f64).exp(), 0.0);
                f.add_coeff(vec![k], &x);
            }
            for (h, hp, nn) in [(0.3, 0.1, 10i64), (0.3, 0.2, 20), (0.25, 0.05, 5)] {
                let (lo, _) = f.strip_sup_norm(h, 256).unwrap();
                let lhs = f.remainder(nn).wiener_norm(hp);
                let rhs = (nn as f64) / (h - hp) * (-(nn as f64) * (h - hp)).exp() * lo;
                assert!(lhs <= rhs, "seed {seed} h {h} hp {hp} N {nn}: {lhs} > {rhs}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn submultiplicative(seed in 0u64..1000, h in 0.0f64..0.4) {
            let f = random_skew_map(1, 2, 3, 0.5, seed);
            let g = random_skew_map(1, 2, 2, 0.7, seed + 1);
            let lhs = f.mul(&g).wiener_norm(h);
            prop_assert!(lhs <= f.wiener_norm(h) * g.wiener_norm(h) * (1.0 + 1e-12));
        }

        #[test]
        fn sup_bracket_ordered(seed in 0u64..1000, h in 0.0f64..0.3) {
            let f = random_skew_map(1, 2, 3, 0.5, seed);
            let (lo, up) = f.strip_sup_norm(h, 32).unwrap();
            prop_assert!(lo <= up * (1.0 + 1e-12));
        }

        #[test]
        fn truncate_plus_remainder(seed in 0u64..1000, nn in 0i64..5) {
            let f = random_skew_map(2, 2, 2, 0.5, seed);
            let back = f.truncate(nn).add(&f.remainder(nn));
            prop_assert!(back.sub(&f).wiener_norm(0.0) == 0.0);
            prop_assert!(f.truncate(nn).is_skew() && f.remainder(nn).is_skew());
        }

        #[test]
        fn shift_evaluates_translate(seed in 0u64..1000, a in 0.0f64..1.0, t in 0.0f64..1.0) {
            let f = random_skew_map(1, 2, 3, 0.5, seed);
            let s = f.shift(&[a]);
            prop_assert!(s.is_skew());
            prop_assert!(s.skew_defect() < 1e-14);
            prop_assert!(linalg::max_abs_diff(&s.eval(&[t]), &f.eval(&[t + a])) < 1e-12);
        }

        #[test]
        fn exp_log_roundtrip(seed in 0u64..1000, d in 1usize..=2) {
            let f = random_skew_map(d, 2, 2, 1.0, seed);
            let f = f.scale(0.1 / f.wiener_norm(0.0));
            let e = f.exp_map(None).unwrap();
            let l = e.log_map(None).unwrap();
            prop_assert!(l.sub(&f).wiener_norm(0.0) < 1e-9);
            prop_assert!(l.is_skew());
            let vals = e.to_grid(16);
            for v in vals {
                prop_assert!(linalg::unitarity_defect(&v) < 1e-12);
            }
        }

        #[test]
        fn group_law(seed in 0u64..200, j in -4i64..=4, k in -4i64..=4) {
            let alpha = [0.618_033_988_749_894_9];
            let a = random_skew_map(1, 2, 1, 0.3, seed).exp_map(None).unwrap();
            let lhs = cocycle_iterate(&alpha, &a, j + k);
            let rhs = cocycle_iterate(&alpha, &a, j).shift(&[k as f64 * alpha[0]]).mul(&cocycle_iterate(&alpha, &a, k));
            prop_assert!(lhs.sub(&rhs).grid_sup(64) < 1e-9);
        }
    }
}

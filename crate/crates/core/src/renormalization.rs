//! Fibered Z²-actions on R × U(n) for d = 1: translation, rescaling, base change, the
//! renormalization operator and its iterates, normalization of actions and the renormalized
//! Υ check.
//!
//! Fiber maps on R are closures returning Taylor jets, so rescaled iterates carry exact
//! derivatives.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arithmetic::{self, AlphaExact, ArithError, ContinuedFraction, UpsilonReport};
use crate::linalg::{self, LinalgError, Mat, C64, TAU};
use crate::torus_fourier::{cocycle_iterate, CoeffFile, FourierError, FourierMap};

/// Grid points on [0, 1] for sup norms of fiber maps.
pub const GRID: usize = 64;
/// Absolute floor for commutation residuals of exactly commuting inputs.
pub const COMM_FLOOR: f64 = 1e-12;
/// Allowed growth factor of the commutation residual per operation.
pub const COMM_GROWTH: f64 = 10.0;
/// Agreement required between the iterated and the closed-form R^m.
pub const PATH_TOL: f64 = 1e-7;
/// Declared uniform constant for the derivative bound on rescaled iterates.
pub const DERIV_C_CAP: f64 = 2.0;
/// Highest derivative order in the rescaled-iterate bound.
pub const DERIV_ORDER: usize = 4;
/// Commutation tolerance for normalization inputs.
pub const NORMALIZE_COMM_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum RenormError {
    #[error("rotation number {0} is rational at working precision")]
    Rational(f64),
    #[error("base generator translation is {0}, expected 1")]
    NotNormalized(f64),
    #[error("base change matrix has determinant {0}")]
    NotUnimodular(i64),
    #[error("rescale factor is zero")]
    ZeroScale,
    #[error("action rotation number {action} does not match α = {alpha}")]
    AlphaMismatch { action: f64, alpha: f64 },
    #[error("iterate explosion at depth {m}: residual {residual:e}")]
    Explosion { m: usize, residual: f64 },
    #[error("generators do not commute: residual {0:e}")]
    NotCommuting(f64),
    #[error("eigenvalue at -1 in the gluing region near θ = {0}")]
    BranchFailure(f64),
    #[error("cutoff order ρ = {0} must exceed 1")]
    BumpOrder(f64),
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
}

/// Taylor coefficients c_0..c_r of t ↦ A(x + t).
pub type Jet = Vec<Mat>;

pub fn jet_mul(a: &Jet, b: &Jet) -> Jet {
    let r = a.len().min(b.len());
    let n = a[0].nrows();
    (0..r)
        .map(|j| (0..=j).fold(linalg::zeros(n), |acc, i| acc + &a[i] * &b[j - i]))
        .collect()
}

/// Jet of A(x + t)^{-1}. Fiber maps are unitary valued, so c_0 is invertible.
pub fn jet_inv(a: &Jet) -> Jet {
    let n = a[0].nrows();
    let b0 = a[0].clone().try_inverse().expect("fiber value is invertible");
    let mut out: Jet = vec![b0.clone()];
    for j in 1..a.len() {
        let s = (1..=j).fold(linalg::zeros(n), |acc, i| acc + &a[i] * &out[j - i]);
        out.push(-(&b0 * s));
    }
    out
}

fn identity_jet(n: usize, r: usize) -> Jet {
    let mut out = vec![linalg::zeros(n); r + 1];
    out[0] = linalg::identity(n);
    out
}

fn factorial(r: usize) -> f64 {
    (1..=r).map(|x| x as f64).product()
}

type JetFn = dyn Fn(f64, usize) -> Jet + Send + Sync;

/// Matrix-valued map on R given by its jets.
#[derive(Clone)]
pub struct MatFn {
    n: usize,
    f: Arc<JetFn>,
}

impl fmt::Debug for MatFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MatFn(n = {})", self.n)
    }
}

impl MatFn {
    pub fn new(n: usize, f: impl Fn(f64, usize) -> Jet + Send + Sync + 'static) -> Self {
        MatFn { n, f: Arc::new(f) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn jet(&self, x: f64, r: usize) -> Jet {
        (self.f)(x, r)
    }

    pub fn eval(&self, x: f64) -> Mat {
        self.jet(x, 0).swap_remove(0)
    }

    pub fn constant(m: Mat) -> Self {
        let n = m.nrows();
        MatFn::new(n, move |_, r| {
            let mut out = vec![linalg::zeros(n); r + 1];
            out[0] = m.clone();
            out
        })
    }

    /// Period-1 map from d = 1 Fourier data; jets by termwise differentiation.
    pub fn from_fourier(a: &FourierMap) -> Self {
        assert_eq!(a.dim_d(), 1, "fiber maps on R need d = 1");
        let n = a.dim_n();
        let coeffs: Vec<(i64, Mat)> = a.iter().map(|(k, m)| (k[0], m.clone())).collect();
        MatFn::new(n, move |x, r| {
            let mut out = vec![linalg::zeros(n); r + 1];
            for (k, m) in &coeffs {
                let w = C64::new(0.0, TAU * *k as f64);
                let mut fac = linalg::cis(*k as f64 * x);
                for (j, c) in out.iter_mut().enumerate() {
                    *c += m * fac;
                    fac *= w / (j as f64 + 1.0);
                }
            }
            out
        })
    }

    /// x ↦ A(x + θ)
    pub fn shifted(&self, theta: f64) -> Self {
        let g = self.clone();
        MatFn::new(self.n, move |x, r| g.jet(x + theta, r))
    }

    /// x ↦ A(λx)
    pub fn rescaled(&self, lambda: f64) -> Self {
        let g = self.clone();
        MatFn::new(self.n, move |x, r| {
            let mut out = g.jet(lambda * x, r);
            let mut p = 1.0;
            for c in out.iter_mut() {
                *c *= C64::new(p, 0.0);
                p *= lambda;
            }
            out
        })
    }

    /// sup over a uniform grid on [lo, hi] of ‖∂^r A‖.
    pub fn derivative_sup(&self, r: usize, lo: f64, hi: f64, grid: usize) -> f64 {
        let fac = factorial(r);
        (0..=grid)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / grid as f64;
                linalg::spectral_norm(&self.jet(x, r)[r]) * fac
            })
            .fold(0.0, f64::max)
    }
}

/// One generator (γ, A): (x, v) ↦ (x + γ, A(x) v).
#[derive(Clone, Debug)]
pub struct Generator {
    pub gamma: f64,
    pub map: MatFn,
    /// Fourier data when the map is 1-periodic.
    pub fourier: Option<FourierMap>,
}

impl Generator {
    pub fn new(gamma: f64, map: MatFn) -> Self {
        Generator { gamma, map, fourier: None }
    }

    pub fn periodic(gamma: f64, a: FourierMap) -> Self {
        Generator {
            gamma,
            map: MatFn::from_fourier(&a),
            fourier: Some(a),
        }
    }

    pub fn constant(gamma: f64, c: Mat) -> Self {
        Generator::periodic(gamma, FourierMap::constant(1, c))
    }

    pub fn n(&self) -> usize {
        self.map.n()
    }

    /// self ∘ other = (γ1 + γ2, A1(x + γ2) A2(x)).
    pub fn compose(&self, other: &Generator) -> Generator {
        let (a1, a2, g2) = (self.map.clone(), other.map.clone(), other.gamma);
        Generator::new(
            self.gamma + other.gamma,
            MatFn::new(self.n(), move |x, r| jet_mul(&a1.jet(x + g2, r), &a2.jet(x, r))),
        )
    }

    /// (−γ, A(x − γ)^{-1})
    pub fn inverse(&self) -> Generator {
        let (a, g) = (self.map.clone(), self.gamma);
        Generator::new(-g, MatFn::new(self.n(), move |x, r| jet_inv(&a.jet(x - g, r))))
    }

    /// k-fold composition; A_k(x) = A(x + (k−1)γ)⋯A(x) for k ≥ 0.
    pub fn pow(&self, k: i64) -> Generator {
        if k < 0 {
            return self.inverse().pow(-k);
        }
        let (a, g, n) = (self.map.clone(), self.gamma, self.n());
        Generator::new(
            k as f64 * g,
            MatFn::new(n, move |x, r| {
                (0..k).fold(identity_jet(n, r), |acc, j| jet_mul(&a.jet(x + j as f64 * g, r), &acc))
            }),
        )
    }

    /// Conjugation by x ↦ λx: (γ/λ, A(λ·)).
    pub fn rescale(&self, lambda: f64) -> Generator {
        Generator::new(self.gamma / lambda, self.map.rescaled(lambda))
    }

    /// Conjugation by x ↦ x + θ: (γ, A(· + θ)).
    pub fn translate(&self, theta: f64) -> Generator {
        Generator {
            gamma: self.gamma,
            map: self.map.shifted(theta),
            fourier: self.fourier.as_ref().map(|f| f.shift(&[theta])),
        }
    }

    pub fn to_record(&self) -> GeneratorRecord {
        let samples = match self.fourier {
            Some(_) => Vec::new(),
            None => (0..GRID)
                .map(|i| {
                    let x = i as f64 / GRID as f64;
                    let m = self.map.eval(x);
                    SampleRecord {
                        x,
                        re: m.iter().map(|z| z.re).collect(),
                        im: m.iter().map(|z| z.im).collect(),
                    }
                })
                .collect(),
        };
        GeneratorRecord {
            gamma: self.gamma,
            coeffs: self.fourier.as_ref().map(|f| f.to_file()),
            samples,
        }
    }
}

/// Samples are column-major, matching the matrix storage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub x: f64,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// Coefficients for periodic maps, otherwise grid samples on [0, 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRecord {
    pub gamma: f64,
    pub coeffs: Option<CoeffFile>,
    pub samples: Vec<SampleRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub gen10: GeneratorRecord,
    pub gen01: GeneratorRecord,
    pub commutation_residual: f64,
}

/// Z²-action Φ given by Φ(1,0) and Φ(0,1).
#[derive(Clone, Debug)]
pub struct FiberedAction {
    pub gen10: Generator,
    pub gen01: Generator,
}

impl FiberedAction {
    pub fn new(gen10: Generator, gen01: Generator) -> Self {
        FiberedAction { gen10, gen01 }
    }

    /// {(1, I), (α, A)} for a 1-periodic A.
    pub fn standard(alpha: f64, a: FourierMap) -> Self {
        let n = a.dim_n();
        FiberedAction::new(Generator::constant(1.0, linalg::identity(n)), Generator::periodic(alpha, a))
    }

    /// {(1, I), (α, C)}
    pub fn constant(alpha: f64, c: Mat) -> Self {
        FiberedAction::standard(alpha, FourierMap::constant(1, c))
    }

    pub fn n(&self) -> usize {
        self.gen10.n()
    }

    pub fn rotation_number(&self) -> f64 {
        self.gen01.gamma / self.gen10.gamma
    }

    /// Φ(k1, k2) = Φ(1,0)^{k1} ∘ Φ(0,1)^{k2}.
    pub fn eval_at(&self, k1: i64, k2: i64) -> Generator {
        self.gen10.pow(k1).compose(&self.gen01.pow(k2))
    }

    /// Grid sup over [0, 1] of A10(x + γ01) A01(x) − A01(x + γ10) A10(x).
    pub fn commutation_residual(&self) -> f64 {
        let (g10, g01) = (&self.gen10, &self.gen01);
        (0..=GRID)
            .map(|i| {
                let x = i as f64 / GRID as f64;
                let lhs = g10.map.eval(x + g01.gamma) * g01.map.eval(x);
                let rhs = g01.map.eval(x + g10.gamma) * g10.map.eval(x);
                linalg::spectral_norm(&(lhs - rhs))
            })
            .fold(0.0, f64::max)
    }

    /// Largest translation gap or grid sup fiber gap over [0, 1].
    pub fn distance(&self, other: &FiberedAction) -> f64 {
        let pairs = [(&self.gen10, &other.gen10), (&self.gen01, &other.gen01)];
        pairs
            .iter()
            .map(|(a, b)| {
                let sup = (0..=GRID)
                    .map(|i| {
                        let x = i as f64 / GRID as f64;
                        linalg::spectral_norm(&(a.map.eval(x) - b.map.eval(x)))
                    })
                    .fold(0.0, f64::max);
                sup.max((a.gamma - b.gamma).abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn to_record(&self) -> ActionRecord {
        ActionRecord {
            gen10: self.gen10.to_record(),
            gen01: self.gen01.to_record(),
            commutation_residual: self.commutation_residual(),
        }
    }
}

pub fn translate(phi: &FiberedAction, theta: f64) -> FiberedAction {
    FiberedAction::new(phi.gen10.translate(theta), phi.gen01.translate(theta))
}

/// M_λ: every generator becomes (γ/λ, A(λ·)).
pub fn rescale(phi: &FiberedAction, lambda: f64) -> Result<FiberedAction, RenormError> {
    if lambda == 0.0 {
        return Err(RenormError::ZeroScale);
    }
    if lambda == 1.0 {
        return Ok(phi.clone());
    }
    Ok(FiberedAction::new(phi.gen10.rescale(lambda), phi.gen01.rescale(lambda)))
}

pub type IntMat2 = [[i64; 2]; 2];

pub fn det2(u: &IntMat2) -> i64 {
    u[0][0] * u[1][1] - u[0][1] * u[1][0]
}

pub fn mat2_mul(a: &IntMat2, b: &IntMat2) -> IntMat2 {
    let mut out = [[0i64; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// U(α) = [[a_1, 1], [1, 0]]
pub fn cf_matrix(a: i64) -> IntMat2 {
    [[a, 1], [1, 0]]
}

/// N_U(Φ)(k) = Φ(k (U^T)^{-1}) for row vectors k.
pub fn base_change(phi: &FiberedAction, u: &IntMat2) -> Result<FiberedAction, RenormError> {
    let det = det2(u);
    if det.abs() != 1 {
        return Err(RenormError::NotUnimodular(det));
    }
    if *u == [[1, 0], [0, 1]] {
        return Ok(phi.clone());
    }
    // (U^T)^{-1} = det · [[u11, −u10], [−u01, u00]]
    let w = [[det * u[1][1], -det * u[1][0]], [-det * u[0][1], det * u[0][0]]];
    Ok(FiberedAction::new(phi.eval_at(w[0][0], w[0][1]), phi.eval_at(w[1][0], w[1][1])))
}

fn check_normalized(phi: &FiberedAction) -> Result<(), RenormError> {
    if (phi.gen10.gamma - 1.0).abs() > 1e-12 {
        return Err(RenormError::NotNormalized(phi.gen10.gamma));
    }
    Ok(())
}

/// R(Φ) = M_α N_{U(α)}(Φ) with α = γ_{0,1}.
pub fn renorm_step(phi: &FiberedAction) -> Result<FiberedAction, RenormError> {
    check_normalized(phi)?;
    let alpha = phi.gen01.gamma;
    if !(alpha > 1e-12 && alpha < 1.0) {
        return Err(RenormError::Rational(alpha));
    }
    let a = (1.0 / alpha).floor();
    if 1.0 / alpha - a <= 1e-12 {
        return Err(RenormError::Rational(alpha));
    }
    let mut out = rescale(&base_change(phi, &cf_matrix(a as i64))?, alpha)?;
    out.gen10.gamma = 1.0;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivRow {
    pub r: usize,
    /// "10" or "01".
    pub generator: String,
    pub sup_rescaled: f64,
    pub sup_base: f64,
    /// (sup_rescaled / sup_base)^{1/r}
    pub c: f64,
}

/// R^m(Φ) with its verification data.
#[derive(Clone, Debug)]
pub struct RenormState {
    pub m: usize,
    pub cf: ContinuedFraction,
    /// Closed form M_{β_{m−1}} N_{Q_m}(Φ).
    pub current: FiberedAction,
    /// Q_m = U(α_{m−1})⋯U(α_0).
    pub q_matrix: IntMat2,
    pub beta_prev: f64,
    /// Distance between m-fold renorm_step and the closed form.
    pub path_agreement: f64,
    /// Commutation residual of Φ, R(Φ), ..., R^m(Φ) along the iterated path.
    pub comm_residuals: Vec<f64>,
    pub deriv_rows: Vec<DerivRow>,
    /// max over rows of c; 0 when Φ(0,1) has vanishing derivatives.
    pub c_measured: f64,
    pub deriv_pass: bool,
}

/// Q_m = U(α_{m−1})⋯U(α_0).
pub fn q_matrix(cf: &ContinuedFraction, m: usize) -> IntMat2 {
    (1..=m).fold([[1, 0], [0, 1]], |acc, j| mat2_mul(&cf_matrix(cf.a(j)), &acc))
}

/// Exponents (s_m, s̃_m) = ((−1)^{m−1} q_{m−1}, (−1)^m q_m).
pub fn iterate_exponents(cf: &ContinuedFraction, m: usize) -> (i64, i64) {
    let sign = if m % 2 == 0 { 1 } else { -1 };
    let prev = if m == 0 { 0 } else { cf.q_i64(m - 1) };
    (-sign * prev, sign * cf.q_i64(m))
}

fn is_identity_generator(g: &Generator) -> bool {
    match &g.fourier {
        Some(f) => f.is_constant() && linalg::max_abs_diff(&f.mean(), &linalg::identity(g.n())) == 0.0,
        None => false,
    }
}

/// Closed form of R^m(Φ). For {(1, I), (α, A)} with Fourier data this is
/// {(1, A_{s_m}(β_{m−1}·)), (α_m, A_{s̃_m}(β_{m−1}·))} built from cocycle iterates;
/// otherwise M_{β_{m−1}} N_{Q_m}(Φ) by evaluation at integer pairs.
pub fn renorm_closed_form(phi: &FiberedAction, cf: &ContinuedFraction, m: usize) -> Result<FiberedAction, RenormError> {
    if m == 0 {
        return Ok(phi.clone());
    }
    let beta = cf.beta(m as i64 - 1);
    let out = match (&phi.gen01.fourier, is_identity_generator(&phi.gen10)) {
        (Some(a), true) => {
            let (s, st) = iterate_exponents(cf, m);
            let alpha = [cf.alpha_f64];
            let g10 = Generator::new(1.0, MatFn::from_fourier(&cocycle_iterate(&alpha, a, s)).rescaled(beta));
            let g01 = Generator::new(cf.tails[m], MatFn::from_fourier(&cocycle_iterate(&alpha, a, st)).rescaled(beta));
            FiberedAction::new(g10, g01)
        }
        _ => {
            let mut out = rescale(&base_change(phi, &q_matrix(cf, m))?, beta)?;
            out.gen10.gamma = 1.0;
            out
        }
    };
    Ok(out)
}

fn iterated_path(phi: &FiberedAction, m: usize) -> Result<(FiberedAction, Vec<f64>), RenormError> {
    let mut cur = phi.clone();
    let mut res = vec![cur.commutation_residual()];
    for j in 1..=m {
        cur = renorm_step(&cur)?;
        let r = cur.commutation_residual();
        let prev = *res.last().expect("non-empty");
        if r > (COMM_GROWTH * prev).max(COMM_FLOOR) {
            return Err(RenormError::Explosion { m: j, residual: r });
        }
        res.push(r);
    }
    Ok((cur, res))
}

/// Derivative bound ‖∂^r B‖_0 ≤ c^r ‖∂^r A‖_0 for both generators B of R^m(Φ) against
/// A = Φ(0,1), r ≤ DERIV_ORDER, sup over [0, 1].
pub fn derivative_rows(phi: &FiberedAction, current: &FiberedAction) -> Vec<DerivRow> {
    let mut rows = Vec::new();
    for r in 1..=DERIV_ORDER {
        let base = phi.gen01.map.derivative_sup(r, 0.0, 1.0, GRID);
        for (label, g) in [("10", &current.gen10), ("01", &current.gen01)] {
            let sup = g.map.derivative_sup(r, 0.0, 1.0, GRID);
            let c = if base > 0.0 { (sup / base).powf(1.0 / r as f64) } else { 0.0 };
            rows.push(DerivRow {
                r,
                generator: label.to_string(),
                sup_rescaled: sup,
                sup_base: base,
                c,
            });
        }
    }
    rows
}

/// R^m(Φ) from continued-fraction data, cross-checked against m-fold renorm_step (the
/// two paths run concurrently).
pub fn renorm_iterate(phi: &FiberedAction, alpha: &AlphaExact, m: usize) -> Result<RenormState, RenormError> {
    check_normalized(phi)?;
    let cf = arithmetic::cf_expand(alpha, m.max(1))?;
    if (phi.gen01.gamma - cf.alpha_f64).abs() > 1e-12 {
        return Err(RenormError::AlphaMismatch {
            action: phi.gen01.gamma,
            alpha: cf.alpha_f64,
        });
    }
    let (iter, closed) = rayon::join(|| iterated_path(phi, m), || renorm_closed_form(phi, &cf, m));
    let (iterated, comm_residuals) = iter?;
    let current = closed?;
    let path_agreement = iterated.distance(&current);
    if !(path_agreement <= PATH_TOL) {
        return Err(RenormError::Explosion { m, residual: path_agreement });
    }
    let deriv_rows = if m == 0 { Vec::new() } else { derivative_rows(phi, &current) };
    let c_measured = deriv_rows.iter().map(|r| r.c).fold(0.0, f64::max);
    Ok(RenormState {
        m,
        q_matrix: q_matrix(&cf, m),
        beta_prev: cf.beta(m as i64 - 1),
        cf,
        current,
        path_agreement,
        comm_residuals,
        deriv_pass: c_measured <= DERIV_C_CAP,
        deriv_rows,
        c_measured,
    })
}

/// A(θ) = exp(2π ε cos(2πθ) X) with X = [[i, 0.5+0.2i], [−0.5+0.2i, −i]] ∈ su(2).
pub fn cos_cocycle(eps: f64) -> Result<FourierMap, RenormError> {
    let c = C64::new;
    let x = Mat::from_row_slice(2, 2, &[c(0.0, 1.0), c(0.5, 0.2), c(-0.5, 0.2), c(0.0, -1.0)]) * c(std::f64::consts::PI * eps, 0.0);
    let f = FourierMap::from_coeffs(1, 2, [(vec![1], x.clone()), (vec![-1], x)]).with_skew(true);
    Ok(f.exp_map(None)?)
}

/// Smooth step from 0 (t ≤ 0) to 1 (t ≥ 1) built from ψ(t) = e^{−t^{−1/(ρ−1)}}; for ρ ≥ 2
/// the exponent is fixed at 1 (the e^{−1/t} cutoff).
pub fn smooth_step(t: f64, rho: f64) -> f64 {
    let p = if rho >= 2.0 { 1.0 } else { 1.0 / (rho - 1.0) };
    let psi = |s: f64| if s <= 0.0 { 0.0 } else { (-s.powf(-p)).exp() };
    let (a, b) = (psi(t), psi(1.0 - t));
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// Normalizing conjugacy P with P(θ + 1) = C(θ) P(θ). On [0, 1)
/// P(θ) = exp(b(θ) Y(θ)) e^{θ X_0}, X_0 = log C(0), Y(θ) = log(C(θ − 1) e^{−X_0}), where the
/// bump b vanishes on [0, 1 − 2δ] and equals 1 on [1 − δ, 1]; elsewhere P follows from the
/// cocycle relation.
#[derive(Clone, Debug)]
pub struct Normalizer {
    pub c: MatFn,
    pub x0: Mat,
    pub delta: f64,
    pub rho: f64,
}

impl Normalizer {
    fn fundamental(&self, t: f64) -> Result<Mat, RenormError> {
        let base = linalg::expm_skew(&(&self.x0 * C64::new(t, 0.0)));
        let b = smooth_step((t - (1.0 - 2.0 * self.delta)) / self.delta, self.rho);
        if b == 0.0 {
            return Ok(base);
        }
        let q = self.c.eval(t - 1.0) * linalg::expm_skew(&(-&self.x0));
        let y = linalg::logm_unitary(&q).map_err(|_| RenormError::BranchFailure(t - 1.0))?;
        Ok(linalg::expm_skew(&(y * C64::new(b, 0.0))) * base)
    }

    pub fn eval(&self, theta: f64) -> Result<Mat, RenormError> {
        let k = theta.floor();
        let t = theta - k;
        let mut p = self.fundamental(t)?;
        if k > 0.0 {
            for i in 0..k as i64 {
                p = self.c.eval(t + i as f64) * p;
            }
        } else {
            for i in 1..=(-k) as i64 {
                p = self.c.eval(t - i as f64).adjoint() * p;
            }
        }
        Ok(p)
    }
}

#[derive(Clone, Debug)]
pub struct Normalization {
    pub p: Normalizer,
    /// {(1, I), (γ, D′)} with D′ = P(· + γ)^{-1} D P as Fourier data.
    pub normalized: FiberedAction,
    /// sup over θ ∈ [−1, 2] of |P(θ + 1)^{-1} C(θ) P(θ) − I|.
    pub residual: f64,
    /// sup over θ ∈ [0, 1] of |D′(θ + 1) − D′(θ)|, evaluated through P.
    pub periodicity_residual: f64,
    /// |P(1 − τ) − P(1 + τ)| with τ = 1e-9.
    pub seam_jump: f64,
    /// sup_{|θ| ≤ 3} |C − I|
    pub c_dev: f64,
    /// sup_{θ ∈ [0, 1]} |P − I| / c_dev when c_dev < 1/3.
    pub near_identity_ratio: Option<f64>,
    /// grid error of the Fourier representation of D′.
    pub fourier_fit_error: f64,
}

/// Fourier grid for the normalized generator.
pub const NORMALIZED_GRID: usize = 256;

/// Normalization of {(1, C), (γ, D)} to {(1, I), (γ, D′)}.
pub fn normalize_action(phi: &FiberedAction, delta: f64, rho: f64) -> Result<Normalization, RenormError> {
    check_normalized(phi)?;
    if rho <= 1.0 {
        return Err(RenormError::BumpOrder(rho));
    }
    let comm = phi.commutation_residual();
    if comm > NORMALIZE_COMM_TOL {
        return Err(RenormError::NotCommuting(comm));
    }
    let c = phi.gen10.map.clone();
    let x0 = linalg::logm_unitary(&c.eval(0.0)).map_err(|_| RenormError::BranchFailure(0.0))?;
    let p = Normalizer { c: c.clone(), x0, delta, rho };
    let n = phi.n();
    let id = linalg::identity(n);
    let grid: Vec<f64> = (0..=3 * GRID).map(|i| -1.0 + 3.0 * i as f64 / (3 * GRID) as f64).collect();

    let mut residual: f64 = 0.0;
    for &th in &grid {
        let lhs = p.eval(th + 1.0)?.adjoint() * c.eval(th) * p.eval(th)?;
        residual = residual.max(linalg::spectral_norm(&(lhs - &id)));
    }
    let tau = 1e-9;
    let seam_jump = linalg::spectral_norm(&(p.eval(1.0 - tau)? - p.eval(1.0 + tau)?));

    let gamma = phi.gen01.gamma;
    let d = phi.gen01.map.clone();
    let dprime = |th: f64| -> Result<Mat, RenormError> { Ok(p.eval(th + gamma)?.adjoint() * d.eval(th) * p.eval(th)?) };
    let mut periodicity_residual: f64 = 0.0;
    for i in 0..=GRID {
        let th = i as f64 / GRID as f64;
        periodicity_residual = periodicity_residual.max(linalg::spectral_norm(&(dprime(th + 1.0)? - dprime(th)?)));
    }
    let samples = (0..NORMALIZED_GRID)
        .map(|i| dprime(i as f64 / NORMALIZED_GRID as f64))
        .collect::<Result<Vec<Mat>, RenormError>>()?;
    let dfour = FourierMap::from_grid(1, n, NORMALIZED_GRID, &samples).prune_abs(1e-15);
    let fourier_fit_error = (0..GRID)
        .map(|i| {
            let th = (i as f64 + 0.5) / GRID as f64;
            dprime(th).map(|v| linalg::spectral_norm(&(dfour.eval(&[th]) - v)))
        })
        .collect::<Result<Vec<f64>, RenormError>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let c_dev = (0..=6 * GRID)
        .map(|i| {
            let th = -3.0 + i as f64 / GRID as f64;
            linalg::spectral_norm(&(c.eval(th) - &id))
        })
        .fold(0.0, f64::max);
    let near_identity_ratio = if c_dev < 1.0 / 3.0 && c_dev > 0.0 {
        let mut sup: f64 = 0.0;
        for i in 0..=GRID {
            sup = sup.max(linalg::spectral_norm(&(p.eval(i as f64 / GRID as f64)? - &id)));
        }
        Some(sup / c_dev)
    } else {
        None
    };
    let normalized = FiberedAction::new(Generator::constant(1.0, id), Generator::periodic(gamma, dfour));
    Ok(Normalization {
        p,
        normalized,
        residual,
        periodicity_residual,
        seam_jump,
        c_dev,
        near_identity_ratio,
        fourier_fit_error,
    })
}

#[derive(Clone, Debug)]
pub struct ConstantNormalization {
    pub x0: Mat,
    /// |e^{X_0} − C|
    pub exp_residual: f64,
    /// |X_0 D − D X_0|
    pub comm_residual: f64,
}

/// X_0 with e^{X_0} = C and [X_0, D] = 0 for commuting unitaries C, D, through the Schur
/// basis of the normal matrix C + w D, which diagonalizes both for generic w.
pub fn normalize_constant(c: &Mat, d: &Mat, tol: f64) -> Result<ConstantNormalization, RenormError> {
    let comm = linalg::spectral_norm(&(c * d - d * c));
    if comm > tol {
        return Err(RenormError::NotCommuting(comm));
    }
    let n = c.nrows();
    let w = linalg::cis(0.7) * 0.5;
    let (_, z) = linalg::unitary_eig(&(c + d * w));
    let t = z.adjoint() * c * &z;
    let logs: Vec<C64> = (0..n).map(|i| C64::new(0.0, t[(i, i)].arg())).collect();
    let x0 = linalg::skew_part(&(&z * linalg::diag(&logs) * z.adjoint()));
    Ok(ConstantNormalization {
        exp_residual: linalg::spectral_norm(&(linalg::expm_skew(&x0) - c)),
        comm_residual: linalg::spectral_norm(&(&x0 * d - d * &x0)),
        x0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenormUpsilonReport {
    pub m: usize,
    /// Scan range used for φ at α: 3 q_m (K + 1).
    pub k_prime: i64,
    pub base: UpsilonReport,
    /// (−1)^m β_{m−1}^{-1} φ at α_m; None when the base check fails.
    pub rescaled: Option<UpsilonReport>,
    pub phi_m: Vec<f64>,
    pub alpha_m: f64,
    /// β_{m−1}^{-1} χ (4 q_m)^{−ν}
    pub chi_predicted: f64,
    pub chi_empirical: Option<f64>,
    pub pass: bool,
}

/// Υ check of (−1)^m β_{m−1}^{-1} φ at α_m with the predicted constant. The base scan at α
/// runs to K′ = 3 q_m (K + 1), which covers every original frequency l with |l| ≤ 2|k| + 3
/// for rescaled |k| ≤ K; larger |l| are separated by the size of the rotation alone.
pub fn renormalized_upsilon_check(phi: &[f64], cf: &ContinuedFraction, m: usize, chi: f64, nu: f64, kcut: i64) -> RenormUpsilonReport {
    let qm = cf.q_i64(m);
    let k_prime = 3 * qm * (kcut + 1);
    let base = arithmetic::upsilon_check(phi, &[cf.alpha_f64], chi, nu, k_prime, None);
    let beta = cf.beta(m as i64 - 1);
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let phi_m: Vec<f64> = phi.iter().map(|p| sign * p / beta).collect();
    let alpha_m = cf.tails[m];
    let chi_predicted = chi * (4.0 * qm as f64).powf(-nu) / beta;
    let rescaled = base
        .pass
        .then(|| arithmetic::upsilon_check(&phi_m, &[alpha_m], chi_predicted, nu, kcut, None));
    let pass = base.pass && rescaled.as_ref().is_some_and(|r| r.pass);
    RenormUpsilonReport {
        m,
        k_prime,
        chi_empirical: rescaled.as_ref().and_then(|r| r.chi_empirical),
        base,
        rescaled,
        phi_m,
        alpha_m,
        chi_predicted,
        pass,
    }
}

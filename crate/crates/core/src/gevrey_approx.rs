//! Gevrey-class functions given by Fourier coefficients: norm estimates, truncated
//! almost-analytic extensions, the Green-formula approximation ladder (d = 1), the
//! truncated-Fourier baseline, rate fits and the inverse ladder check.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, c, C64, Mat, TAU};
use crate::torus_fourier::{l1, next_pow2, FourierMap};

/// Largest Taylor order accepted by the extension.
pub const MAX_ORDER: usize = 100_000;
/// Tolerance of the doubled-grid quadrature comparison.
pub const QUADRATURE_TOL: f64 = 1e-12;
const MAX_QUADRATURE_GRID: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GevreyError {
    #[error("invalid parameters: {0}")]
    Parameters(String),
    #[error("extension order {order} exceeds the oracle limit {limit}")]
    Order { order: usize, limit: usize },
    #[error("imaginary offset {y:.3e} outside the strip |y| < 2h = {bound:.3e}")]
    Offset { y: f64, bound: f64 },
    #[error("Green ladder needs d = 1, got d = {0}")]
    Dimension(usize),
    #[error("quadrature did not converge at level {j} (change {change:.3e} on grid {grid})")]
    Quadrature { j: usize, change: f64, grid: usize },
    #[error("gap hypothesis violated at j = {j}: gap {gap:.3e} > {bound:.3e}")]
    GapHypothesis { j: usize, gap: f64, bound: f64 },
}

/// Gevrey-ρ function with constant L, given by its Fourier coefficients.
#[derive(Clone, Debug)]
pub struct GevreyFunction {
    pub rho: f64,
    pub l: f64,
    pub coeffs: FourierMap,
}

impl GevreyFunction {
    pub fn new(rho: f64, l: f64, coeffs: FourierMap) -> Result<Self, GevreyError> {
        if !(rho >= 1.0 && l > 0.0) {
            return Err(GevreyError::Parameters(format!("need ρ ≥ 1, L > 0; got ρ = {rho}, L = {l}")));
        }
        Ok(GevreyFunction { rho, l, coeffs })
    }

    /// a(θ) = Σ_{|k| ≤ K} e^{-|k|^{1/ρ}} e^{2πikθ} embedded as i·a(θ)·diag(pattern) (d = 1).
    pub fn model(rho: f64, l: f64, k_cap: i64, pattern: &[f64]) -> Result<Self, GevreyError> {
        let n = pattern.len();
        let d_mat = linalg::diag(&pattern.iter().map(|&p| c(0.0, p)).collect::<Vec<_>>());
        let coeffs = FourierMap::from_coeffs(
            1,
            n,
            (-k_cap..=k_cap).map(|k| (vec![k], &d_mat * c((-(k.abs() as f64).powf(1.0 / rho)).exp(), 0.0))),
        )
        .with_skew(true);
        GevreyFunction::new(rho, l, coeffs)
    }

    pub fn dim_d(&self) -> usize {
        self.coeffs.dim_d()
    }

    pub fn dim_n(&self) -> usize {
        self.coeffs.dim_n()
    }

    pub fn is_skew(&self) -> bool {
        self.coeffs.is_skew()
    }

    pub fn eval(&self, theta: &[f64]) -> Mat {
        self.coeffs.eval(theta)
    }

    /// Coefficients of ∂^r P for a multi-index r.
    pub fn derivative_map(&self, r: &[usize]) -> FourierMap {
        let mut out = FourierMap::zero(self.dim_d(), self.dim_n()).with_skew(self.is_skew());
        for (k, m) in self.coeffs.iter() {
            let f: C64 = k
                .iter()
                .zip(r)
                .map(|(&ki, &ri)| c(0.0, TAU * ki as f64).powu(ri as u32))
                .product();
            if f != c(0.0, 0.0) {
                out.insert(k.clone(), m * f);
            }
        }
        out
    }

    pub fn derivative(&self, r: &[usize], theta: &[f64]) -> Mat {
        self.derivative_map(r).eval(theta)
    }
}

fn multi_indices(d: usize, total: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(cur.clone());
            return;
        }
        for x in 0..=left {
            cur[i] = x;
            rec(i + 1, left - x, cur, out);
        }
    }
    let mut out = Vec::new();
    if d > 0 {
        rec(0, total, &mut vec![0; d], &mut out);
    }
    out
}

fn ln_factorial(r: usize) -> f64 {
    (1..=r).map(|i| (i as f64).ln()).sum()
}

/// max over |r| ≤ R and the grid of |∂^r P(θ)| L^{-|r|} (r!)^{-ρ}; a lower bound on ‖P‖_L.
pub fn gevrey_norm_estimate(p: &GevreyFunction, max_order: usize, grid: usize) -> f64 {
    let d = p.dim_d();
    let orders: Vec<Vec<usize>> = (0..=max_order).flat_map(|t| multi_indices(d, t)).collect();
    orders
        .par_iter()
        .map(|r| {
            let tot: usize = r.iter().sum();
            let lf: f64 = r.iter().map(|&x| ln_factorial(x)).sum();
            let scale = (-(tot as f64) * p.l.ln() - p.rho * lf).exp();
            p.derivative_map(r).grid_sup(grid) * scale
        })
        .reduce(|| 0.0, f64::max)
}

/// N_j = ⌊(2Lh)^{-1/(ρ-1)}⌋; None for ρ = 1 (full analytic continuation).
pub fn extension_order(rho: f64, l: f64, h: f64) -> Option<usize> {
    if rho == 1.0 {
        return None;
    }
    Some((2.0 * l * h).powf(-1.0 / (rho - 1.0)).floor() as usize)
}

/// Σ_{r ≤ N} x^r / r!; exp(x) for N = None.
pub fn truncated_exp(x: C64, order: Option<usize>) -> C64 {
    match order {
        None => x.exp(),
        Some(nn) => {
            let mut term = c(1.0, 0.0);
            let mut sum = term;
            for r in 1..=nn {
                term *= x / r as f64;
                sum += term;
            }
            sum
        }
    }
}

fn check_order(order: Option<usize>) -> Result<(), GevreyError> {
    match order {
        Some(o) if o > MAX_ORDER => Err(GevreyError::Order { order: o, limit: MAX_ORDER }),
        _ => Ok(()),
    }
}

/// Coefficients in θ of F_j(θ + iy) for fixed y: â(k) Π_i T_N(-2π k_i y_i).
fn extension_line(p: &GevreyFunction, y: &[f64], order: Option<usize>) -> FourierMap {
    let mut out = FourierMap::zero(p.dim_d(), p.dim_n()).with_skew(false);
    for (k, m) in p.coeffs.iter() {
        let f: C64 = k
            .iter()
            .zip(y)
            .map(|(&ki, &yi)| truncated_exp(c(-TAU * ki as f64 * yi, 0.0), order))
            .product();
        out.insert(k.clone(), m * f);
    }
    out
}

/// F_j(θ+iy) = Σ_{r ∈ M_j} ∂^r P(θ) (iy)^r / r!, with M_j = {r : r_i ≤ N_j}.
pub fn almost_analytic_extension(p: &GevreyFunction, h: f64, theta: &[f64], y: &[f64]) -> Result<Mat, GevreyError> {
    let ymax = y.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if ymax >= 2.0 * h {
        return Err(GevreyError::Offset { y: ymax, bound: 2.0 * h });
    }
    let order = extension_order(p.rho, p.l, h);
    check_order(order)?;
    Ok(extension_line(p, y, order).eval(theta))
}

/// ∂̄F_j at (θ, y) for d = 1: ½ ∂^{N+1}P(θ) (iy)^N / N!.
pub fn dbar_extension(p: &GevreyFunction, h: f64, theta: f64, y: f64) -> Result<Mat, GevreyError> {
    let order = extension_order(p.rho, p.l, h).ok_or_else(|| GevreyError::Parameters("ρ = 1 has no ∂̄ defect".into()))?;
    check_order(Some(order))?;
    let iy = c(0.0, y).powu(order as u32) * (-ln_factorial(order)).exp();
    Ok(p.derivative(&[order + 1], &[theta]) * (iy * 0.5))
}

/// sup_θ |∂̄F_j(θ + iy)| at |y| = h (d = 1), in log form to survive large orders.
pub fn dbar_defect(p: &GevreyFunction, h: f64, grid: usize) -> f64 {
    match extension_order(p.rho, p.l, h) {
        None => 0.0,
        Some(order) => {
            let sup = p.derivative_map(&[order + 1]).grid_sup(grid);
            if sup == 0.0 {
                return 0.0;
            }
            0.5 * (sup.ln() + order as f64 * h.ln() - ln_factorial(order)).exp()
        }
    }
}

/// π cot(πx), the periodized Cauchy kernel 1/x + Σ_{k≥1} 2x/(x² - k²).
pub fn cot_kernel(x: C64) -> C64 {
    let z = x * std::f64::consts::PI;
    std::f64::consts::PI * z.cos() / z.sin()
}

/// K_0 + K_1 by the series, stopping at the first term below `tol` in modulus.
pub fn kernel_series(x: C64, tol: f64, max_terms: usize) -> (C64, usize) {
    let mut sum = x.inv();
    for k in 1..=max_terms {
        let t = 2.0 * x / (x * x - (k * k) as f64);
        sum += t;
        if t.norm() < tol {
            return (sum, k);
        }
    }
    (sum, max_terms)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LadderKind {
    Green,
    Truncation,
    Supplied,
}

#[derive(Clone, Debug)]
pub struct LadderLevel {
    pub j: usize,
    pub h: f64,
    /// Taylor order N_j (Green) or Fourier cut (truncation).
    pub order: Option<usize>,
    pub p: FourierMap,
    /// |P_{j+1} - P_j|_{1,h_{j+1}}, absent at the last level.
    pub gap_norm: Option<f64>,
    pub sup_err: f64,
    pub dbar_defect: Option<f64>,
    pub quadrature_grid: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub frame: String,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least squares y = a + b x.
pub fn linear_fit(frame: &str, x: &[f64], y: &[f64]) -> RateFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if sxx > 0.0 && syy > 0.0 { sxy * sxy / (sxx * syy) } else { 0.0 };
    RateFit {
        frame: frame.into(),
        slope,
        intercept: my - slope * mx,
        r2,
    }
}

#[derive(Clone, Debug)]
pub struct AnalyticLadder {
    pub kind: LadderKind,
    pub rho: f64,
    pub l: f64,
    pub h0: f64,
    pub delta: f64,
    pub levels: Vec<LadderLevel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub j: usize,
    pub h_j: f64,
    pub gap_norm: Option<f64>,
    pub sup_err: f64,
    pub dbar_defect: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub kind: LadderKind,
    pub rho: f64,
    pub l: f64,
    pub levels: Vec<LevelRecord>,
    pub fits: Vec<RateFit>,
}

impl AnalyticLadder {
    fn points(&self) -> Vec<(f64, f64)> {
        self.levels
            .iter()
            .filter(|l| l.sup_err > 0.0)
            .map(|l| (l.h, l.sup_err.ln()))
            .collect()
    }

    /// log sup-error against h^{-γ}.
    pub fn fit_frame(&self, gamma: f64) -> RateFit {
        let pts = self.points();
        let x: Vec<f64> = pts.iter().map(|p| p.0.powf(-gamma)).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        linear_fit(&format!("h^-{gamma}"), &x, &y)
    }

    /// Slope of log(-log err) against log(1/h): the decay exponent γ in e^{-c h^{-γ}}.
    pub fn fit_exponent(&self) -> RateFit {
        let pts: Vec<(f64, f64)> = self.points().into_iter().filter(|p| p.1 < 0.0).collect();
        let x: Vec<f64> = pts.iter().map(|p| -p.0.ln()).collect();
        let y: Vec<f64> = pts.iter().map(|p| (-p.1).ln()).collect();
        linear_fit("exponent", &x, &y)
    }

    /// Same fit for the ∂̄ defect (Green ladder).
    pub fn fit_dbar_exponent(&self) -> Option<RateFit> {
        let pts: Vec<(f64, f64)> = self
            .levels
            .iter()
            .filter_map(|l| l.dbar_defect.filter(|&v| v > 0.0 && v < 1.0).map(|v| (l.h, v)))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let x: Vec<f64> = pts.iter().map(|p| -p.0.ln()).collect();
        let y: Vec<f64> = pts.iter().map(|p| (-p.1.ln()).ln()).collect();
        Some(linear_fit("dbar_exponent", &x, &y))
    }

    pub fn report(&self) -> LadderReport {
        let mut fits = vec![
            self.fit_frame(if self.rho > 1.0 { 1.0 / (self.rho - 1.0) } else { 1.0 }),
            self.fit_frame(1.0 / self.rho),
            self.fit_exponent(),
        ];
        fits.extend(self.fit_dbar_exponent());
        LadderReport {
            kind: self.kind,
            rho: self.rho,
            l: self.l,
            levels: self
                .levels
                .iter()
                .map(|l| LevelRecord {
                    j: l.j,
                    h_j: l.h,
                    gap_norm: l.gap_norm,
                    sup_err: l.sup_err,
                    dbar_defect: l.dbar_defect,
                })
                .collect(),
            fits,
        }
    }

    pub fn is_monotone(&self) -> bool {
        self.levels.windows(2).all(|w| w[1].sup_err <= w[0].sup_err * (1.0 + 1e-9) + 1e-15)
    }
}

fn check_ladder(h0: f64, delta: f64) -> Result<(), GevreyError> {
    if !(h0 > 0.0 && delta > 0.0 && delta < 1.0) {
        return Err(GevreyError::Parameters(format!("need h_0 > 0, δ ∈ (0,1); got {h0}, {delta}")));
    }
    Ok(())
}

fn error_grid(p: &GevreyFunction) -> usize {
    next_pow2(4 * p.coeffs.max_linf().max(1) as usize + 16)
}

fn finish_levels(p: &GevreyFunction, mut levels: Vec<LadderLevel>) -> Vec<LadderLevel> {
    let grid = error_grid(p);
    for l in levels.iter_mut() {
        l.sup_err = l.p.sub(&p.coeffs).grid_sup(grid);
    }
    for j in 0..levels.len().saturating_sub(1) {
        let h1 = levels[j + 1].h;
        levels[j].gap_norm = Some(levels[j + 1].p.sub(&levels[j].p).wiener_norm(h1));
    }
    levels
}

/// Green's formula on Γ_j = ∂{|Im z| < 2h_j}: the kernel π cot(π(η - z)) expands in
/// e^{±2πim(η - z)} on each line, so P̂_j(m) for m ≥ 1 (m ≤ -1) is the m-th
/// trapezoid coefficient of F_j on the lower (upper) line times e^{-4π|m|h_j}, and
/// P̂_j(0) averages both lines.
fn green_level(p: &GevreyFunction, j: usize, h: f64) -> Result<LadderLevel, GevreyError> {
    let order = extension_order(p.rho, p.l, h);
    check_order(order)?;
    let lower = extension_line(p, &[-2.0 * h], order);
    let upper = extension_line(p, &[2.0 * h], order);
    let band = p.coeffs.max_linf().max(1) as usize;
    let quad = |m: usize| -> FourierMap {
        let lo = FourierMap::from_grid(1, p.dim_n(), m, &lower.to_grid(m));
        let up = FourierMap::from_grid(1, p.dim_n(), m, &upper.to_grid(m));
        let mut out = FourierMap::zero(1, p.dim_n()).with_skew(p.is_skew());
        let half = (m / 2) as i64;
        for k in -half..=half {
            let w = (-2.0 * TAU * k.abs() as f64 * h).exp();
            let v = match k.signum() {
                1 => lo.coeff(&[k]) * c(w, 0.0),
                -1 => up.coeff(&[k]) * c(w, 0.0),
                _ => (lo.coeff(&[0]) + up.coeff(&[0])) * c(0.5, 0.0),
            };
            if v.iter().any(|z| z.norm() > 0.0) {
                out.insert(vec![k], v);
            }
        }
        out
    };
    let mut m = next_pow2(2 * band + 2);
    let mut cur = quad(m);
    loop {
        let next = quad(2 * m);
        let change = next.sub(&cur).wiener_norm(0.0);
        let scale = next.wiener_norm(0.0).max(1e-300);
        if change <= QUADRATURE_TOL * scale.max(1.0) {
            let pj = if p.is_skew() { next.project_skew() } else { next };
            return Ok(LadderLevel {
                j,
                h,
                order,
                p: pj,
                gap_norm: None,
                sup_err: 0.0,
                dbar_defect: None,
                quadrature_grid: Some(2 * m),
            });
        }
        if 4 * m > MAX_QUADRATURE_GRID {
            return Err(GevreyError::Quadrature { j, change, grid: 2 * m });
        }
        m *= 2;
        cur = next;
    }
}

/// Analytic approximants P_j on strips h_j = h_0 δ^j by Green's formula (d = 1).
pub fn build_ladder_green(p: &GevreyFunction, h0: f64, delta: f64, levels: usize) -> Result<AnalyticLadder, GevreyError> {
    if p.dim_d() != 1 {
        return Err(GevreyError::Dimension(p.dim_d()));
    }
    check_ladder(h0, delta)?;
    let grid = error_grid(p);
    let lv: Result<Vec<LadderLevel>, GevreyError> = (0..=levels)
        .into_par_iter()
        .map(|j| {
            let h = h0 * delta.powi(j as i32);
            let mut l = green_level(p, j, h)?;
            l.dbar_defect = (p.rho > 1.0).then(|| dbar_defect(p, h, grid));
            Ok(l)
        })
        .collect();
    Ok(AnalyticLadder {
        kind: LadderKind::Green,
        rho: p.rho,
        l: p.l,
        h0,
        delta,
        levels: finish_levels(p, lv?),
    })
}

/// Fourier cut tied to the strip width: N(h) = ⌈1/(2πh)⌉.
pub fn truncation_order(h: f64) -> i64 {
    (1.0 / (TAU * h)).ceil() as i64
}

/// P_j = Fourier truncation of P at |k| ≤ N(h_j).
pub fn build_ladder_truncation(p: &GevreyFunction, h0: f64, delta: f64, levels: usize) -> Result<AnalyticLadder, GevreyError> {
    check_ladder(h0, delta)?;
    let lv: Vec<LadderLevel> = (0..=levels)
        .map(|j| {
            let h = h0 * delta.powi(j as i32);
            let cut = truncation_order(h);
            LadderLevel {
                j,
                h,
                order: Some(cut as usize),
                p: p.coeffs.truncate(cut),
                gap_norm: None,
                sup_err: 0.0,
                dbar_defect: None,
                quadrature_grid: None,
            }
        })
        .collect();
    Ok(AnalyticLadder {
        kind: LadderKind::Truncation,
        rho: p.rho,
        l: p.l,
        h0,
        delta,
        levels: finish_levels(p, lv),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderComparison {
    pub frame: String,
    pub green: RateFit,
    pub truncation: RateFit,
    /// green slope / truncation slope
    pub ratio: f64,
}

pub fn compare_ladders(green: &AnalyticLadder, trunc: &AnalyticLadder) -> LadderComparison {
    let gamma = if green.rho > 1.0 { 1.0 / (green.rho - 1.0) } else { 1.0 };
    let g = green.fit_frame(gamma);
    let t = trunc.fit_frame(gamma);
    LadderComparison {
        frame: g.frame.clone(),
        ratio: g.slope / t.slope,
        green: g,
        truncation: t,
    }
}

/// P_j with gaps |P_{j+1} - P_j|_{1,h_j} = e^{-h_j^{-1/ρ}}: P_j = Σ_{i<j} g_i with
/// g_i = i e^{-h_i^{-1/ρ} - 2π(i+1)h_i} cos 2π(i+1)θ. Each increment sits on its own
/// mode so that gaps far below the partial sums stay representable.
pub fn adversarial_ladder(rho: f64, h0: f64, delta: f64, levels: usize) -> AnalyticLadder {
    let mut acc = FourierMap::zero(1, 1);
    let mut lv = Vec::new();
    for j in 0..=levels {
        let h = h0 * delta.powi(j as i32);
        lv.push(LadderLevel {
            j,
            h,
            order: None,
            p: acc.clone(),
            gap_norm: None,
            sup_err: 0.0,
            dbar_defect: None,
            quadrature_grid: None,
        });
        let k = j as i64 + 1;
        let a = (-h.powf(-1.0 / rho) - TAU * k as f64 * h).exp() / 2.0;
        let m = Mat::from_element(1, 1, c(0.0, a));
        acc = acc.add(&FourierMap::from_coeffs(1, 1, [(vec![k], m.clone()), (vec![-k], m)]).with_skew(true));
    }
    for j in 0..levels {
        let g = lv[j + 1].p.sub(&lv[j].p);
        lv[j].gap_norm = Some(g.wiener_norm(lv[j + 1].h));
    }
    AnalyticLadder {
        kind: LadderKind::Supplied,
        rho,
        l: 1.0,
        h0,
        delta,
        levels: lv,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyCheck {
    pub j: usize,
    pub r: usize,
    /// Σ |2πk|^r |ĝ(k)|, an upper bound for sup |∂^r (P_{j+1} - P_j)|.
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapCheck {
    pub j: usize,
    pub h: f64,
    pub gap: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseReport {
    pub rho: f64,
    pub l: f64,
    pub c0: f64,
    pub gaps: Vec<GapCheck>,
    pub cauchy: Vec<CauchyCheck>,
    /// ‖P_J - P_j‖_{c_0' L} estimates with c_0' = `norm_factor`.
    pub norm_factor: f64,
    pub limit_norms: Vec<f64>,
}

impl InverseReport {
    pub fn all_pass(&self) -> bool {
        self.gaps.iter().all(|g| g.pass) && self.cauchy.iter().all(|c| c.pass)
    }
}

fn hypothesis_rate(rho: f64, l: f64, h: f64) -> f64 {
    let e = if rho > 1.0 { 1.0 / (rho - 1.0) } else { 1.0 };
    (-(l * h).powf(-e)).exp()
}

fn gap_at(ladder: &AnalyticLadder, j: usize) -> FourierMap {
    ladder.levels[j + 1].p.sub(&ladder.levels[j].p)
}

/// max_j |P_{j+1} - P_j|_{1,h_j} e^{(L h_j)^{-1/(ρ-1)}}.
pub fn measured_c0(ladder: &AnalyticLadder, l: f64) -> f64 {
    (0..ladder.levels.len().saturating_sub(1))
        .map(|j| {
            let h = ladder.levels[j].h;
            gap_at(ladder, j).wiener_norm(h) / hypothesis_rate(ladder.rho, l, h)
        })
        .fold(0.0, f64::max)
}

/// Checks |P_{j+1} - P_j|_{1,h_j} ≤ C_0 e^{-(Lh_j)^{-1/(ρ-1)}} and the Cauchy bounds
/// sup |∂^r(P_{j+1} - P_j)| ≤ C_0 r! h_j^{-r-1} e^{-(Lh_j)^{-1/(ρ-1)}} for r ≤ R.
pub fn inverse_ladder(ladder: &AnalyticLadder, l: f64, c0: f64, max_r: usize) -> Result<InverseReport, GevreyError> {
    let rho = ladder.rho;
    let mut gaps = Vec::new();
    let mut cauchy = Vec::new();
    for j in 0..ladder.levels.len().saturating_sub(1) {
        let h = ladder.levels[j].h;
        let g = gap_at(ladder, j);
        let rate = hypothesis_rate(rho, l, h);
        let gap = g.wiener_norm(h);
        let bound = c0 * rate;
        gaps.push(GapCheck {
            j,
            h,
            gap,
            bound,
            pass: gap <= bound,
        });
        if gap > bound {
            return Err(GevreyError::GapHypothesis { j, gap, bound });
        }
        for r in 0..=max_r {
            let value: f64 = g
                .iter()
                .map(|(k, m)| (TAU * l1(k) as f64).powi(r as i32) * linalg::spectral_norm(m))
                .sum();
            let b = c0 * (ln_factorial(r) - (r as f64 + 1.0) * h.ln()).exp() * rate;
            cauchy.push(CauchyCheck {
                j,
                r,
                value,
                bound: b,
                pass: value <= b,
            });
        }
    }
    let last = &ladder.levels.last().expect("nonempty ladder").p;
    let norm_factor = 2.0;
    let limit_norms = ladder
        .levels
        .iter()
        .map(|lv| {
            let diff = GevreyFunction {
                rho,
                l: norm_factor * l,
                coeffs: last.sub(&lv.p),
            };
            gevrey_norm_estimate(&diff, max_r, 256)
        })
        .collect();
    Ok(InverseReport {
        rho,
        l,
        c0,
        gaps,
        cauchy,
        norm_factor,
        limit_norms,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StirlingReport {
    pub rho: f64,
    /// max over the tested (t, m) of t^m m!^{ρ-1} / (m^{(ρ-1)/2} e^{-(ρ-1)m})
    pub c_measured: f64,
    /// exp((ρ-1)(2 + ½ log 2π + 1/24)), from Stirling with the admissibility constraint.
    pub c_analytic: f64,
    pub cases: usize,
}

/// t^m m!^{ρ-1} ≤ C(ρ) m^{(ρ-1)/2} e^{-(ρ-1)m} for t ∈ (0,1], 1 ≤ m ≤ t^{-1/(ρ-1)} + 1.
pub fn stirling_check(rho: f64, ts: &[f64]) -> Result<StirlingReport, GevreyError> {
    if rho <= 1.0 {
        return Err(GevreyError::Parameters("Stirling bound needs ρ > 1".into()));
    }
    let r1 = rho - 1.0;
    let mut c_measured = 0.0_f64;
    let mut cases = 0;
    for &t in ts {
        if !(t > 0.0 && t <= 1.0) {
            return Err(GevreyError::Parameters(format!("t = {t} outside (0,1]")));
        }
        let mmax = (t.powf(-1.0 / r1) + 1.0).floor() as usize;
        for m in 1..=mmax {
            let mf = m as f64;
            let lhs = mf * t.ln() + r1 * ln_factorial(m);
            let rhs = 0.5 * r1 * mf.ln() - r1 * mf;
            c_measured = c_measured.max((lhs - rhs).exp());
            cases += 1;
        }
    }
    Ok(StirlingReport {
        rho,
        c_measured,
        c_analytic: (r1 * (2.0 + 0.5 * TAU.ln() + 1.0 / 24.0)).exp(),
        cases,
    })
}

/// Strip-width sequence h_j = h_0 δ^j.
pub fn ladder_widths(h0: f64, delta: f64, levels: usize) -> Vec<f64> {
    (0..=levels).map(|j| h0 * delta.powi(j as i32)).collect()
}

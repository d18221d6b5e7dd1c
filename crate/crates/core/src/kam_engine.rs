//! Non-resonant conjugation solve, the KAM step, the schedule and the iterative chain with
//! non-resonance detection and the convergent regime.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arithmetic::dc_floor;
use crate::linalg::{self, C64, LinalgError, Mat};
use crate::nondegeneracy::{character_map, pi_compose, NondegError, PiCert};
use crate::resonance::{
    self, build_mode_split, divisor, min_gap, partition_spectrum, split_re_nre, ModeSplit, ResonanceError,
    ResonanceLadder, ResonancePartition,
};
use crate::torus_fourier::{dot, l1, next_pow2, Freq, FourierError, FourierMap, UnitaryConstant};

pub const DELTA_STAR: f64 = 0.1;
pub const SOLVE_REL_TOL: f64 = 1e-11;
pub const SOLVE_ABS_TOL: f64 = 1e-17;
pub const STEP_RESIDUAL_TOL: f64 = 1e-8;
pub const MAX_SOLVE_ITERS: usize = 60;
pub const MAX_CONTRACTION: f64 = 0.9;
/// Per-dimension residual level at which exp/log rounding dominates; once reached, a
/// non-contracting step ends the solve instead of failing it.
pub const SOLVE_ROUNDING_FLOOR: f64 = 1e-14;
pub const K_STAR_MARGIN: f64 = 0.1;
pub const F_RE_CONSTANT_BOUND: f64 = 10.0;

#[derive(Debug, Error)]
pub enum KamError {
    #[error(transparent)]
    Resonance(#[from] ResonanceError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Nondeg(#[from] NondegError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("right-hand side has a resonant entry ({p},{q}) at k = {k:?}")]
    RhsNotNre { p: usize, q: usize, k: Freq },
    #[error("divisor {value:.3e} below δ = {delta:.3e} at ({p},{q}), k = {k:?}")]
    Divisor { p: usize, q: usize, k: Freq, value: f64, delta: f64 },
    #[error("contraction failure after {iterations} iterations (ratio {ratio:.3})")]
    Contraction { iterations: usize, ratio: f64 },
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("spectra unmatchable: {0}")]
    Unmatchable(String),
}

/// One evaluated inequality; a failed check is a recorded falsification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl BoundCheck {
    pub fn le(name: &str, value: f64, bound: f64) -> Self {
        BoundCheck {
            name: name.into(),
            value,
            bound,
            pass: value <= bound,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConstants {
    pub sigma: f64,
    pub kappa: f64,
    pub delta_star: f64,
    pub delta_0: f64,
    pub chi: f64,
    pub residual_tol: f64,
}

impl StepConstants {
    pub fn new(sigma: f64, kappa: f64) -> Self {
        StepConstants {
            sigma,
            kappa,
            delta_star: DELTA_STAR,
            delta_0: 1.0,
            chi: 1.0,
            residual_tol: STEP_RESIDUAL_TOL,
        }
    }
}

/// σ = min(1/100, (ℓ-1)/(5ℓ))
pub fn sigma_of_ell(ell: f64) -> f64 {
    (0.01_f64).min((ell - 1.0) / (5.0 * ell))
}

/// N = ((2n+1)/κ)^n (2/h · log(1/ε) + 1)
pub fn step_order(n: usize, kappa: f64, h: f64, eps: f64) -> f64 {
    ((2 * n + 1) as f64 / kappa).powi(n as i32) * (2.0 / h * (1.0 / eps).ln() + 1.0)
}

#[derive(Clone, Debug)]
pub struct NearConstantCocycle {
    pub alpha: Vec<f64>,
    pub a: UnitaryConstant,
    pub f: FourierMap,
    pub h: f64,
}

fn diag_conj(lam: &[C64]) -> Mat {
    linalg::diag(&lam.iter().map(|l| l.conj()).collect::<Vec<_>>())
}

/// ŷ_{p,q}(k) = f̂_{p,q}(k) / (λ̄_p(λ_p - λ_q e^{2πi⟨k,α⟩})) on the nre support.
pub fn linear_homological_solve(lam: &[C64], alpha: &[f64], rhs: &FourierMap, split: &ModeSplit, delta: f64) -> Result<FourierMap, KamError> {
    let n = rhs.dim_n();
    let mut out = FourierMap::zero(rhs.dim_d(), n).with_skew(rhs.is_skew());
    for (k, m) in rhs.iter() {
        let r = l1(k);
        let mut y = linalg::zeros(n);
        for p in 0..n {
            for q in 0..n {
                let f = m[(p, q)];
                if f == C64::new(0.0, 0.0) {
                    continue;
                }
                if r > split.bound || (r <= split.inner && split.contains(k, p, q)) {
                    return Err(KamError::RhsNotNre { p, q, k: k.clone() });
                }
                let dv = divisor(lam, p, q, k, alpha);
                if dv.norm() < delta {
                    return Err(KamError::Divisor {
                        p,
                        q,
                        k: k.clone(),
                        value: dv.norm(),
                        delta,
                    });
                }
                y[(p, q)] = f / dv;
            }
        }
        out.insert(k.clone(), y);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Wiener norms at h̃ of Π_nre log{…} before each correction.
    pub residuals: Vec<f64>,
    /// |Y_{j+1} - Y_j| / |Y_j - Y_{j-1}|, measured above tolerance.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub tolerance: f64,
    /// Stopped at the rounding floor above `tolerance`.
    pub rounding_stop: bool,
    pub f_norm: f64,
    pub y_norm: f64,
    pub f_re_norm: f64,
    pub f_re_constant: f64,
    pub precondition: BoundCheck,
    pub checks: Vec<BoundCheck>,
}

#[derive(Clone, Debug)]
pub struct NonlinearSolve {
    pub y: FourierMap,
    pub f_re: FourierMap,
    pub report: SolveReport,
}

/// log{A^{-1} e^{-Y(·+α)} A e^F e^Y} for A = diag(λ).
fn log_argument(lam: &[C64], alpha: &[f64], ef: &FourierMap, y: &FourierMap) -> Result<FourierMap, KamError> {
    let a = linalg::diag(lam);
    let left = y.shift(alpha).scale(-1.0).exp_map(None)?.sandwich(&diag_conj(lam), &a);
    let g = left.mul(ef).mul(&y.exp_map(None)?);
    Ok(g.log_map(None)?)
}

/// Fixed point Y_{j+1} = Y_j - L₀⁻¹ Π_nre log{A^{-1} e^{-Y_j(·+α)} A e^F e^{Y_j}} from
/// Y_0 = 0, for A = diag(λ).
pub fn nonlinear_nre_solve(
    lam: &[C64],
    alpha: &[f64],
    f: &FourierMap,
    split: &ModeSplit,
    eta: f64,
    h_tilde: f64,
    delta_star: f64,
) -> Result<NonlinearSolve, KamError> {
    let (d, n) = (f.dim_d(), f.dim_n());
    let f_norm = f.wiener_norm(h_tilde);
    let tol = (SOLVE_REL_TOL * f_norm).max(SOLVE_ABS_TOL);
    let ef = f.exp_map(None)?;
    let mut y = FourierMap::zero(d, n);
    let mut residuals = Vec::new();
    let mut ratios = Vec::new();
    let mut prev_step: Option<f64> = None;
    let mut f_re = None;
    let mut iterations = 0;
    let mut rounding_stop = false;
    for it in 0..=MAX_SOLVE_ITERS {
        let lg = log_argument(lam, alpha, &ef, &y)?;
        let (re, nre) = split_re_nre(&lg, split);
        let res = nre.wiener_norm(h_tilde);
        residuals.push(res);
        if res <= tol {
            f_re = Some(re);
            iterations = it;
            break;
        }
        if it == MAX_SOLVE_ITERS {
            break;
        }
        let step = linear_homological_solve(lam, alpha, &nre, split, eta)?;
        let sn = step.wiener_norm(h_tilde);
        if let Some(p) = prev_step {
            let ratio = if p > 0.0 { sn / p } else { 0.0 };
            if ratio > MAX_CONTRACTION {
                if residuals.iter().copied().fold(f64::INFINITY, f64::min) <= SOLVE_ROUNDING_FLOOR * n as f64 {
                    f_re = Some(re);
                    iterations = it;
                    rounding_stop = true;
                    break;
                }
                return Err(KamError::Contraction { iterations: it, ratio });
            }
            ratios.push(ratio);
        }
        prev_step = Some(sn);
        y = y.sub(&step).project_skew();
    }
    let f_re = f_re.ok_or(KamError::Contraction {
        iterations: MAX_SOLVE_ITERS,
        ratio: ratios.last().copied().unwrap_or(f64::NAN),
    })?;
    let y_norm = y.wiener_norm(h_tilde);
    let f_re_norm = f_re.wiener_norm(h_tilde);
    let f_re_constant = if f_norm > 0.0 { f_re_norm / f_norm } else { 0.0 };
    let precondition = BoundCheck::le("solve_ball", f_norm, delta_star * eta * eta);
    let checks = vec![
        BoundCheck::le("y_bound", y_norm, 2.0 / eta * f_norm * (1.0 + 1e-12) + 1e-300),
        BoundCheck::le("f_re_constant", f_re_constant, F_RE_CONSTANT_BOUND),
    ];
    Ok(NonlinearSolve {
        y,
        f_re,
        report: SolveReport {
            iterations,
            max_ratio: ratios.iter().copied().fold(0.0, f64::max),
            residuals,
            ratios,
            tolerance: tol,
            rounding_stop,
            f_norm,
            y_norm,
            f_re_norm,
            f_re_constant,
            precondition,
            checks,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaChoice {
    /// ε^σ
    pub paper: f64,
    /// min(ε^σ, DC floor at 4nN / (8n))
    pub used: f64,
    pub clamped: bool,
}

pub fn eta_for(alpha: &[f64], n: usize, n_order: f64, eps: f64, sigma: f64) -> EtaChoice {
    let paper = eps.powf(sigma);
    let cut = (4.0 * n as f64 * n_order).ceil() as i64;
    let floor = dc_floor(alpha, cut) / (8.0 * n as f64);
    EtaChoice {
        paper,
        used: paper.min(floor),
        clamped: floor < paper,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NrReport {
    pub nr: bool,
    /// min over pairs and 0 < |k| ≤ N of |λ_p - λ_q e^{2πi⟨k,α⟩}| minus the threshold.
    pub margin: f64,
    pub witness: Option<(usize, usize, Freq)>,
}

pub fn detect_nr(lam: &[C64], alpha: &[f64], n_order: i64, threshold: f64) -> NrReport {
    let n = lam.len();
    let mut best: Option<(f64, usize, usize, Freq)> = None;
    for p in 0..n {
        for q in 0..n {
            if let Some((g, k)) = min_gap(lam[p], lam[q], alpha, n_order) {
                if best.as_ref().is_none_or(|b| g < b.0) {
                    best = Some((g, p, q, k));
                }
            }
        }
    }
    match best {
        None => NrReport {
            nr: true,
            margin: f64::INFINITY,
            witness: None,
        },
        Some((g, p, q, k)) => NrReport {
            nr: g >= threshold,
            margin: g - threshold,
            witness: (g < threshold).then_some((p, q, k)),
        },
    }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub r: FourierMap,
    pub y: FourierMap,
    pub offsets: Vec<Freq>,
    pub a_plus: Mat,
    pub f_plus: FourierMap,
    pub pi_cert: PiCert,
    pub pi_claim: PiCert,
    pub nr_flag: bool,
    pub nr_margin: f64,
    pub residual: f64,
    pub n_order: f64,
    pub eps: f64,
    pub eta: EtaChoice,
    pub partition: ResonancePartition,
    pub solve: SolveReport,
    pub term1_norm: f64,
    pub term2_norm: f64,
    pub k_star: f64,
    /// Recorded, not enforced.
    pub preconditions: Vec<BoundCheck>,
    pub checks: Vec<BoundCheck>,
}

impl StepResult {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failed(&self) -> Vec<&BoundCheck> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

fn expm_values(f: &FourierMap, m: usize) -> Vec<Mat> {
    f.to_grid(m)
        .iter()
        .map(|x| linalg::expm_skew(&linalg::skew_part(x)))
        .collect()
}

fn residual_grid(d: usize, bands: &[i64]) -> usize {
    let band = bands.iter().copied().max().unwrap_or(0).max(1) as usize;
    let cap = match d {
        0 | 1 => 1 << 16,
        2 => 1 << 10,
        _ => 1 << (20 / d),
    };
    next_pow2(4 * band + 16).min(cap)
}

/// Grid sup of R(·+α)^{-1} A e^{F} R - A_+ e^{F_+}.
pub fn conjugation_residual(r: &FourierMap, a: &Mat, f: &FourierMap, a_plus: &Mat, f_plus: &FourierMap, alpha: &[f64]) -> f64 {
    let m = residual_grid(r.dim_d(), &[r.max_linf(), f.max_linf(), f_plus.max_linf()]);
    let rs = r.shift(alpha).to_grid(m);
    let r0 = r.to_grid(m);
    let ef = expm_values(f, m);
    let efp = expm_values(f_plus, m);
    let mut worst = 0.0_f64;
    for i in 0..r0.len() {
        let lhs = rs[i].adjoint() * a * &ef[i] * &r0[i];
        let rhs = a_plus * &efp[i];
        worst = worst.max(linalg::spectral_norm(&(lhs - rhs)));
    }
    worst
}

/// One KAM step: diagonalize, partition, solve on the nre space at h̃ = (1-κ/2)h, remove
/// the resonant constant by Q = diag(e^{2πi⟨k^(p),θ⟩}) and return R = e^Y Q in the
/// original basis.
pub fn kam_step(c: &NearConstantCocycle, consts: &StepConstants, eps: f64, n_order: Option<f64>) -> Result<StepResult, KamError> {
    let (sigma, kappa, h) = (consts.sigma, consts.kappa, c.h);
    let d = c.alpha.len();
    let n = c.a.n();
    if c.f.dim_d() != d || c.f.dim_n() != n {
        return Err(KamError::Precondition("F dimensions differ from (α, A)".into()));
    }
    if !(eps > 0.0 && eps < 1.0 && h > 0.0) {
        return Err(KamError::Precondition(format!("need ε ∈ (0,1), h > 0; got ε = {eps}, h = {h}")));
    }
    let f_h = c.f.wiener_norm(h);
    if f_h > eps * (1.0 + 1e-12) {
        return Err(KamError::Precondition(format!("|F|_h = {f_h:.3e} exceeds ε = {eps:.3e}")));
    }
    let n_order = n_order.unwrap_or_else(|| step_order(n, kappa, h, eps));
    let eta = eta_for(&c.alpha, n, n_order, eps, sigma);
    let ladder = ResonanceLadder::new(n, n_order, kappa, eta.used)?;
    let lam = c.a.eigenvalues.clone();
    let partition = partition_spectrum(&c.a, &c.alpha, &ladder)?;
    let split = build_mode_split(&partition, &ladder);
    let s = &c.a.s;
    let s_adj = s.adjoint();
    let f_eig = c.f.conjugate_by(s);
    let h_tilde = (1.0 - kappa / 2.0) * h;
    let solve = nonlinear_nre_solve(&lam, &c.alpha, &f_eig, &split, eta.used, h_tilde, consts.delta_star)?;

    // (I): resonant entries of F_re at |k| ≤ nN_j; (II): Q^{-1}(tail)Q.
    let offsets = partition.offsets.clone();
    let mut term1 = linalg::zeros(n);
    let mut tail: BTreeMap<Freq, Mat> = BTreeMap::new();
    for (k, m) in solve.f_re.iter() {
        if l1(k) > split.bound {
            for p in 0..n {
                for q in 0..n {
                    let kk: Freq = (0..d).map(|i| k[i] - offsets[p][i] + offsets[q][i]).collect();
                    tail.entry(kk).or_insert_with(|| linalg::zeros(n))[(p, q)] += m[(p, q)];
                }
            }
        } else if let Some(pairs) = split.zk.get(k) {
            for &(p, q) in pairs {
                term1[(p, q)] += m[(p, q)];
            }
        }
    }
    let term1 = linalg::skew_part(&term1);
    let term2 = FourierMap::from_coeffs(d, n, tail).with_skew(true);
    let a_tilde: Vec<C64> = (0..n).map(|p| lam[p] * linalg::cis(-dot(&offsets[p], &c.alpha))).collect();
    let a_plus_eig = linalg::diag(&a_tilde) * linalg::expm_skew(&term1);
    let f_plus_eig = if term2.is_empty() {
        FourierMap::zero(d, n)
    } else {
        let sum = term2.add(&FourierMap::constant(d, term1.clone()).with_skew(true));
        sum.exp_map(None)?
            .sandwich(&linalg::expm_skew(&(-&term1)), &linalg::identity(n))
            .log_map(None)?
    };
    let q_map = character_map(d, &offsets);
    let ey = solve.y.exp_map(None)?;
    let r_eig = if partition.is_trivial() { ey.clone() } else { ey.mul(&q_map) };
    let r = r_eig.sandwich(&s_adj, s);
    let y = solve.y.conjugate_by(&s_adj);
    let a_plus = &s_adj * a_plus_eig * s;
    let f_plus = f_plus_eig.conjugate_by(&s_adj);

    let residual = conjugation_residual(&r, &c.a.matrix, &c.f, &a_plus, &f_plus, &c.alpha);
    let nr = detect_nr(&lam, &c.alpha, n_order.floor() as i64, eta.used);
    let kmax = offsets.iter().map(|k| l1(k)).max().unwrap_or(0);
    let log_eps = (1.0 / eps).ln();
    let k_star = std::f64::consts::TAU * kmax as f64 * h / log_eps + K_STAR_MARGIN;
    let grid = residual_grid(d, &[ey.max_linf()]);
    let id = linalg::identity(n);
    let ey_sup = ey
        .to_grid(grid)
        .iter()
        .map(|v| linalg::spectral_norm(&(v - &id)))
        .fold(0.0, f64::max);
    let inner = ladder.scaled_cut(partition.level_j, n as f64);
    let pi_cert = pi_compose(
        PiCert {
            n_tilde: 0,
            xi: 1.0,
            eps: ey_sup,
        },
        PiCert {
            n_tilde: inner,
            xi: 1.0 / n as f64,
            eps: 0.0,
        },
    );
    let pi_claim = PiCert {
        n_tilde: n_order.ceil() as i64,
        xi: 1.0 / n as f64,
        eps: eps.powf(1.0 - 4.0 * sigma),
    };
    let h_plus = (1.0 - kappa) * h;
    let preconditions = vec![
        BoundCheck::le("eps_below_delta0_h_chi", eps, consts.delta_0 * h.powf(consts.chi)),
        solve.report.precondition.clone(),
    ];
    let mut checks = solve.report.checks.clone();
    checks.push(BoundCheck::le("step_residual", residual, consts.residual_tol));
    checks.push(BoundCheck::le("f_plus", f_plus.wiener_norm(h_plus), eps.powf(1.0 + sigma)));
    checks.push(BoundCheck::le("r_norm", r.wiener_norm(h_plus), eps.powf(-k_star)));
    checks.push(BoundCheck {
        name: "pi_cert_within_claim".into(),
        value: pi_cert.eps,
        bound: pi_claim.eps,
        pass: pi_cert.within(&pi_claim, 1e-12),
    });
    if nr.nr {
        checks.push(BoundCheck::le("nr_a_shift", linalg::spectral_norm(&(&a_plus - &c.a.matrix)), eps.sqrt()));
        checks.push(BoundCheck::le("nr_y_norm", y.wiener_norm(h), eps.powf(1.0 - 2.0 * sigma)));
        checks.push(BoundCheck {
            name: "nr_q_identity".into(),
            value: kmax as f64,
            bound: 0.0,
            pass: partition.is_trivial(),
        });
    }
    Ok(StepResult {
        r,
        y,
        offsets,
        a_plus,
        f_plus,
        pi_cert,
        pi_claim,
        nr_flag: nr.nr,
        nr_margin: nr.margin,
        residual,
        n_order,
        eps,
        eta,
        partition,
        term1_norm: linalg::spectral_norm(&term1),
        term2_norm: term2.wiener_norm(h_plus),
        solve: solve.report,
        k_star,
        preconditions,
        checks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub rho: f64,
    pub l: f64,
    pub ell: f64,
    pub h0: f64,
    pub n: usize,
    /// c(ρ) of the approximation ladder.
    pub c: f64,
    pub k_star: f64,
    /// Replaces the ε_0 formula, which is ≈ 1 at desk scale.
    pub eps0: Option<f64>,
    pub eps_stop: f64,
    pub max_steps: usize,
    pub delta_0: f64,
    pub chi: f64,
}

impl ScheduleParams {
    pub fn new(rho: f64, n: usize, h0: f64, eps0: Option<f64>) -> Self {
        ScheduleParams {
            rho,
            l: 1.0,
            ell: 2.0,
            h0,
            n,
            c: 1.0,
            k_star: 1.0,
            eps0,
            eps_stop: 1e-14,
            max_steps: 400,
            delta_0: 1.0,
            chi: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub m: usize,
    pub h: f64,
    pub eps: f64,
    pub n_real: f64,
    /// ⌈N_m⌉
    pub n_order: i64,
    /// N_0 + … + N_{m-1}
    pub l_m: i64,
    /// ε_m ≤ δ_0 h_m^χ
    pub kam_cond: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KamSchedule {
    pub params: ScheduleParams,
    pub sigma: f64,
    pub kappa: f64,
    pub eps0: f64,
    pub eps0_formula: f64,
    pub small_cond_clh0: bool,
    pub small_cond_eps0: bool,
    pub log_cond: bool,
    /// Rows m = 0..=M with ε_M the first value below the stop level (or the step cap).
    pub rows: Vec<ScheduleRow>,
}

impl KamSchedule {
    pub fn step_constants(&self) -> StepConstants {
        let mut c = StepConstants::new(self.sigma, self.kappa);
        c.delta_0 = self.params.delta_0;
        c.chi = self.params.chi;
        c
    }

    /// Closed form (L_m, n^{-m}, Σ_{i<m} n^{-(m-1-i)} ε_i^{1-4σ}) of the certificate of R^{(m)}.
    pub fn pi_closed_form(&self, m: usize) -> PiCert {
        let n = self.params.n as f64;
        let e: f64 = (0..m)
            .map(|i| n.powi(-((m - 1 - i) as i32)) * self.rows[i].eps.powf(1.0 - 4.0 * self.sigma))
            .sum();
        PiCert {
            n_tilde: self.rows[m].l_m,
            xi: n.powi(-(m as i32)),
            eps: e,
        }
    }
}

pub fn build_schedule(p: &ScheduleParams) -> Result<KamSchedule, KamError> {
    if !(p.rho > 1.0 && p.l >= 1.0 && p.ell > 1.0 && p.h0 > 0.0 && p.h0 <= 1.0 / (2.0 * p.l) && p.n >= 1) {
        return Err(KamError::Schedule("need ρ > 1, L ≥ 1, ℓ > 1, 0 < h_0 ≤ 1/(2L), n ≥ 1".into()));
    }
    if p.c * p.l * p.h0 > 1.0 {
        return Err(KamError::Schedule(format!("cLh_0 = {} > 1", p.c * p.l * p.h0)));
    }
    let sigma = sigma_of_ell(p.ell);
    let kappa = 1.0 - (1.0 + sigma / 2.0).powf(1.0 - p.rho);
    let eps0_formula = (-(p.c * p.l * p.h0).powf(-1.0 / (p.rho - 1.0)) / (16.0 * (1.0 + p.k_star / sigma))).exp();
    let eps0 = p.eps0.unwrap_or(eps0_formula);
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return Err(KamError::Schedule(format!("ε_0 = {eps0} outside (0,1)")));
    }
    let growth = 1.0 + sigma / 2.0;
    let mut rows = Vec::new();
    let mut l_m = 0i64;
    for m in 0..=p.max_steps {
        let h = p.h0 * (1.0 - kappa).powi(m as i32);
        let eps = eps0.powf(growth.powi(m as i32));
        let n_real = step_order(p.n, kappa, h, eps);
        let n_order = n_real.ceil() as i64;
        rows.push(ScheduleRow {
            m,
            h,
            eps,
            n_real,
            n_order,
            l_m,
            kam_cond: eps <= p.delta_0 * h.powf(p.chi),
        });
        l_m += n_order;
        if eps < p.eps_stop {
            break;
        }
    }
    Ok(KamSchedule {
        params: p.clone(),
        sigma,
        kappa,
        eps0,
        eps0_formula,
        small_cond_clh0: p.c * p.l * p.h0 <= 1.0,
        small_cond_eps0: eps0.powf(sigma / 2.0) <= 0.125,
        log_cond: -(1.0 - eps0).ln() <= 2.0 * eps0,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub m: usize,
    pub h_m: f64,
    pub eps_m: f64,
    pub n_m: i64,
    pub l_m: i64,
    pub sup_f_m: f64,
    pub wiener_f_m: f64,
    pub step_residual: f64,
    pub dist_a: f64,
    pub nr_flag: bool,
    pub nr_margin: f64,
    pub pi_n: i64,
    pub pi_xi: f64,
    pub pi_eps: f64,
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug)]
pub struct ChainState {
    pub m: usize,
    pub a: Mat,
    pub f: FourierMap,
    pub r_cum: FourierMap,
    pub pi_cert: PiCert,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StopReason {
    /// ε_m dropped below the stop level; no further step is meaningful in double precision.
    FloorReached { m: usize },
    StepCap { m: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainCheck {
    pub m: usize,
    pub check: BoundCheck,
}

#[derive(Clone, Debug)]
pub struct ChainTrace {
    pub rows: Vec<TraceRow>,
    /// States m = 0..=M.
    pub states: Vec<ChainState>,
    pub steps: Vec<StepResult>,
    pub checks: Vec<ChainCheck>,
    pub preconditions: Vec<ChainCheck>,
    pub stop: StopReason,
}

impl ChainTrace {
    pub fn falsifications(&self) -> Vec<&ChainCheck> {
        self.checks.iter().filter(|c| !c.check.pass).collect()
    }
}

fn approximant(gs: &[FourierMap], m: usize) -> &FourierMap {
    &gs[m.min(gs.len() - 1)]
}

/// log(A_+^{-1} R(·+α)^{-1} A e^{G} R)
fn reextract(r: &FourierMap, a: &Mat, g: &FourierMap, a_plus: &Mat, alpha: &[f64]) -> Result<FourierMap, KamError> {
    let lhs = r
        .shift(alpha)
        .adjoint_map()
        .sandwich(&a_plus.adjoint(), a)
        .mul(&g.exp_map(None)?)
        .mul(r);
    Ok(lhs.log_map(None)?)
}

/// Runs KAM steps along the schedule, absorbing G_m - G_{m-1} by re-extracting
/// F_{m+1} = log(A_{m+1}^{-1} R^{(m+1)}(·+α)^{-1} A e^{G_m} R^{(m+1)}).
pub fn iterate_chain(alpha: &[f64], a: &UnitaryConstant, approximants: &[FourierMap], sched: &KamSchedule) -> Result<ChainTrace, KamError> {
    if approximants.is_empty() {
        return Err(KamError::Precondition("no approximants".into()));
    }
    let n = a.n();
    let d = alpha.len();
    let consts = sched.step_constants();
    let g0 = &approximants[0];
    let mut checks = vec![ChainCheck {
        m: 0,
        check: BoundCheck::le("g0_bound", g0.wiener_norm(sched.rows[0].h), sched.eps0),
    }];
    let mut states = vec![ChainState {
        m: 0,
        a: a.matrix.clone(),
        f: g0.clone(),
        r_cum: FourierMap::identity(d, n),
        pi_cert: PiCert::IDENTITY,
    }];
    let mut steps = Vec::new();
    let mut rows = Vec::new();
    let mut preconditions = Vec::new();
    let mut stop = StopReason::StepCap { m: sched.rows.len() - 1 };
    for m in 0..sched.rows.len() - 1 {
        let row = &sched.rows[m];
        if row.eps < sched.params.eps_stop {
            stop = StopReason::FloorReached { m };
            break;
        }
        let t0 = Instant::now();
        let cur = states.last().expect("state").clone();
        let a_m = UnitaryConstant::new(cur.a.clone(), 1e-9)?;
        let coc = NearConstantCocycle {
            alpha: alpha.to_vec(),
            a: a_m,
            f: cur.f.clone(),
            h: row.h,
        };
        let step = kam_step(&coc, &consts, row.eps, Some(row.n_order as f64))?;
        let r_next = cur.r_cum.mul(&step.r);
        let g_m = approximant(approximants, m);
        let f_next = reextract(&r_next, &a.matrix, g_m, &step.a_plus, alpha)?;
        let next = &sched.rows[m + 1];
        let claim = PiCert {
            n_tilde: row.n_order,
            xi: 1.0 / n as f64,
            eps: row.eps.powf(1.0 - 4.0 * sched.sigma),
        };
        let pi_next = pi_compose(cur.pi_cert, claim);
        let closed = sched.pi_closed_form(m + 1);
        let rel = |x: f64, y: f64| if y == 0.0 { x.abs() } else { (x - y).abs() / y.abs() };
        for c in &step.checks {
            checks.push(ChainCheck { m, check: c.clone() });
        }
        for c in &step.preconditions {
            preconditions.push(ChainCheck { m, check: c.clone() });
        }
        let f_norm = f_next.wiener_norm(next.h);
        checks.push(ChainCheck {
            m: m + 1,
            check: BoundCheck::le("f_m_bound", f_norm, next.eps),
        });
        checks.push(ChainCheck {
            m: m + 1,
            check: BoundCheck::le(
                "r_cum_bound",
                r_next.wiener_norm(next.h),
                next.eps.powf(-2.0 * sched.params.k_star / sched.sigma),
            ),
        });
        let pi_ok = pi_next.n_tilde == closed.n_tilde && rel(pi_next.xi, closed.xi) <= 1e-14 && rel(pi_next.eps, closed.eps) <= 1e-14;
        checks.push(ChainCheck {
            m: m + 1,
            check: BoundCheck {
                name: "pi_closed_form".into(),
                value: rel(pi_next.eps, closed.eps).max(rel(pi_next.xi, closed.xi)),
                bound: 1e-14,
                pass: pi_ok,
            },
        });
        let grid = residual_grid(d, &[f_next.max_linf()]);
        rows.push(TraceRow {
            m: m + 1,
            h_m: next.h,
            eps_m: next.eps,
            n_m: next.n_order,
            l_m: next.l_m,
            sup_f_m: f_next.grid_sup(grid),
            wiener_f_m: f_norm,
            step_residual: step.residual,
            dist_a: linalg::spectral_norm(&(&step.a_plus - &cur.a)),
            nr_flag: step.nr_flag,
            nr_margin: step.nr_margin,
            pi_n: pi_next.n_tilde,
            pi_xi: pi_next.xi,
            pi_eps: pi_next.eps,
            wall_time_ms: t0.elapsed().as_secs_f64() * 1e3,
        });
        states.push(ChainState {
            m: m + 1,
            a: step.a_plus.clone(),
            f: f_next,
            r_cum: r_next,
            pi_cert: pi_next,
        });
        steps.push(step);
    }
    if let Some(last) = states.last() {
        if sched.rows[last.m].eps < sched.params.eps_stop {
            stop = StopReason::FloorReached { m: last.m };
        }
    }
    Ok(ChainTrace {
        rows,
        states,
        steps,
        checks,
        preconditions,
        stop,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZetaRow {
    pub m: usize,
    pub g_gap: f64,
    pub f_gap: f64,
    pub r_gap: f64,
    pub zeta: f64,
    pub bound: f64,
    pub a_gap: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct ConvergentReport {
    /// First m from which every step ran in the NR regime; None if never entered.
    pub m_star: Option<usize>,
    pub zeta: Vec<ZetaRow>,
    pub r_limit: FourierMap,
    pub a_limit: Mat,
    pub final_residual: f64,
    pub final_bound: f64,
}

impl ConvergentReport {
    pub fn all_pass(&self) -> bool {
        self.m_star.is_some() && self.zeta.iter().all(|z| z.pass) && self.final_residual <= self.final_bound
    }
}

/// ζ_m = max{|G_m - G_{m-1}|, |F_m - F_{m+1}|, |R^{(m+1)} - R^{(m)}|} at h_{m+1} for
/// m ≥ m_*, and the residual of the final composite against the last approximant.
pub fn convergent_chain(trace: &ChainTrace, sched: &KamSchedule, alpha: &[f64], a: &Mat, approximants: &[FourierMap]) -> ConvergentReport {
    let steps = &trace.steps;
    let m_star = (0..=steps.len()).find(|&m| steps[m..].iter().all(|s| s.nr_flag)).filter(|&m| m < steps.len());
    let mut zeta = Vec::new();
    if let Some(ms) = m_star {
        for m in ms..steps.len() {
            let h1 = sched.rows[m + 1].h;
            let eps = sched.rows[m].eps;
            let g_gap = if m == 0 {
                0.0
            } else {
                approximant(approximants, m).sub(approximant(approximants, m - 1)).wiener_norm(h1)
            };
            let f_gap = trace.states[m].f.sub(&trace.states[m + 1].f).wiener_norm(h1);
            let r_gap = trace.states[m + 1].r_cum.sub(&trace.states[m].r_cum).wiener_norm(h1);
            let a_gap = linalg::spectral_norm(&(&trace.states[m + 1].a - &trace.states[m].a));
            let z = g_gap.max(f_gap).max(r_gap);
            zeta.push(ZetaRow {
                m,
                g_gap,
                f_gap,
                r_gap,
                zeta: z,
                bound: eps.sqrt(),
                a_gap,
                pass: z <= eps.sqrt() && a_gap <= eps.sqrt(),
            });
        }
    }
    let last = trace.states.last().expect("state");
    let g = approximant(approximants, last.m.saturating_sub(1));
    let zero = FourierMap::zero(alpha.len(), a.nrows());
    let final_residual = conjugation_residual(&last.r_cum, a, g, &last.a, &zero, alpha);
    ConvergentReport {
        m_star,
        zeta,
        r_limit: last.r_cum.clone(),
        a_limit: last.a.clone(),
        final_residual,
        final_bound: 10.0 * sched.rows[last.m].eps.sqrt(),
    }
}

#[derive(Clone, Debug)]
pub struct ConstantConjugacy {
    pub u1: Mat,
    pub u2: Mat,
    pub u3: Mat,
    /// V(θ) = U_1 U_3^* diag(e^{2πi⟨k^(j),θ⟩}) U_2
    pub ks: Vec<Freq>,
    /// Column j pairs μ̃_j with μ_{pairing[j]}: μ̃_j = μ_{pairing[j]} e^{-2πi⟨k^(j),α⟩}.
    pub pairing: Vec<usize>,
    pub reconstruction_error: f64,
}

/// Recovers V = U_1 U_3^* e^{2πi diag⟨k^(j),θ⟩} U_2 from Ad(V).(α, C) = (α, Ã).
pub fn constant_conjugacy_structure(c: &Mat, a_tilde: &Mat, alpha: &[f64], v: &FourierMap, tol: f64) -> Result<ConstantConjugacy, KamError> {
    let n = c.nrows();
    let d = alpha.len();
    let zero = FourierMap::zero(d, n);
    let conj = conjugation_residual(v, c, &zero, a_tilde, &zero, alpha);
    if conj > tol {
        return Err(KamError::Precondition(format!("V does not conjugate C to Ã (residual {conj:.2e})")));
    }
    let (mu, p1) = linalg::unitary_eig(c);
    let (mu_t, p2) = linalg::unitary_eig(a_tilde);
    // X = P1* V P2 satisfies diag(μ) X(θ) = X(θ+α) diag(μ̃).
    let x = v.sandwich(&p1.adjoint(), &p2);
    let mut ks = Vec::with_capacity(n);
    let mut pairing = Vec::with_capacity(n);
    for q in 0..n {
        let mut best: Option<(f64, usize, Freq)> = None;
        for (k, m) in x.iter() {
            for p in 0..n {
                let v = m[(p, q)].norm();
                if best.as_ref().is_none_or(|b| v > b.0) {
                    best = Some((v, p, k.clone()));
                }
            }
        }
        let (_, p, k) = best.ok_or_else(|| KamError::Unmatchable("V has no coefficients".into()))?;
        let gap = (mu_t[q] - mu[p] * linalg::cis(-dot(&k, alpha))).norm();
        if gap > tol {
            return Err(KamError::Unmatchable(format!("column {q}: |μ̃ - μ e^{{-2πi⟨k,α⟩}}| = {gap:.2e} for k = {k:?}")));
        }
        ks.push(k);
        pairing.push(p);
    }
    let mut seen = vec![false; n];
    for &p in &pairing {
        if std::mem::replace(&mut seen[p], true) {
            return Err(KamError::Unmatchable(format!("eigenvalue {p} of C matched twice")));
        }
    }
    let neg: Vec<Freq> = ks.iter().map(|k| k.iter().map(|x| -x).collect()).collect();
    let w = x.mul(&character_map(d, &neg));
    let u3c = w.mean();
    let e = character_map(d, &ks);
    let rebuilt = e.sandwich(&(&p1 * &u3c), &p2.adjoint());
    let reconstruction_error = rebuilt
        .sub(v)
        .iter()
        .map(|(_, m)| linalg::spectral_norm(m))
        .fold(0.0, f64::max);
    if reconstruction_error > tol {
        return Err(KamError::Unmatchable(format!("reconstruction error {reconstruction_error:.2e}")));
    }
    Ok(ConstantConjugacy {
        u1: p1,
        u2: p2.adjoint(),
        u3: u3c.adjoint(),
        ks,
        pairing,
        reconstruction_error,
    })
}

/// Golden rotation number (√5 − 1)/2.
pub fn golden_alpha() -> Vec<f64> {
    vec![(5f64.sqrt() - 1.0) / 2.0]
}

/// Scalar reference perturbation 2πi ε' cos 2πθ with Wiener norm ε at h.
pub fn scalar_reference_f(eps: f64, h: f64) -> FourierMap {
    let a = eps / (2.0 * (linalg::TAU * h).exp());
    let m = Mat::from_element(1, 1, C64::new(0.0, a));
    FourierMap::from_coeffs(1, 1, [(vec![1], m.clone()), (vec![-1], m)]).with_skew(true)
}

/// Phases of the SU(2) reference constant diag(e^{πi/10}, e^{−πi/10}).
pub const SU2_REFERENCE_PHASES: [f64; 2] = [0.05, -0.05];

/// SU(2) reference perturbation on modes ±1 with Wiener norm ε at h.
pub fn su2_reference_f(eps: f64, h: f64) -> FourierMap {
    let x = Mat::from_row_slice(
        2,
        2,
        &[C64::new(0.0, 1.0), C64::new(0.5, 0.0), C64::new(-0.5, 0.0), C64::new(0.0, -1.0)],
    );
    let f = FourierMap::from_coeffs(1, 2, [(vec![1], x.clone()), (vec![-1], -x.adjoint())]).project_skew();
    f.scale(eps / f.wiener_norm(h))
}

/// Linearized operator Y ↦ Y - A^{-1} Y(·+α) A for A = diag(λ).
pub fn homological_op(y: &FourierMap, lam: &[C64], alpha: &[f64]) -> FourierMap {
    resonance::homological_op(y, lam, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, cis, TAU};
    use crate::rng;
    use proptest::prelude::*;

    fn golden() -> Vec<f64> {
        vec![(5f64.sqrt() - 1.0) / 2.0]
    }

    /// F = 2πiε' cos 2πθ scaled to Wiener norm ε at h.
    fn scalar_f(eps: f64, h: f64) -> FourierMap {
        let a = eps / (2.0 * (TAU * h).exp());
        let m = Mat::from_element(1, 1, c(0.0, a));
        FourierMap::from_coeffs(1, 1, [(vec![1], m.clone()), (vec![-1], m)]).with_skew(true)
    }

    fn random_skew_map(n: usize, kmax: i64, eps: f64, h: f64, seed: u64) -> FourierMap {
        let mut r = rng::stream(seed, 0);
        let mut f = FourierMap::zero(1, n);
        for k in -kmax..=kmax {
            f.add_coeff(vec![k], &linalg::random_skew(n, &mut r).scale((-(k.abs() as f64)).exp()));
        }
        let f = f.project_skew();
        f.scale(eps / f.wiener_norm(h))
    }

    fn split_for(a: &UnitaryConstant, n_order: f64, delta: f64) -> (ResonancePartition, ModeSplit) {
        let ladder = ResonanceLadder::new(a.n(), n_order, 0.5, delta).unwrap();
        let part = partition_spectrum(a, &golden(), &ladder).unwrap();
        let split = build_mode_split(&part, &ladder);
        (part, split)
    }

    #[test]
    fn linear_solve_zero_and_scalar_closed_form() {
        let a = UnitaryConstant::from_phases(&[0.0]);
        let (_, split) = split_for(&a, 64.0, 0.01);
        let al = golden();
        let y = linear_homological_solve(&a.eigenvalues, &al, &FourierMap::zero(1, 1), &split, 0.01).unwrap();
        assert!(y.is_empty());
        let f = FourierMap::single(vec![3], Mat::from_element(1, 1, c(0.2, -0.1)), false);
        let y = linear_homological_solve(&a.eigenvalues, &al, &f, &split, 0.01).unwrap();
        let want = c(0.2, -0.1) / (c(1.0, 0.0) - cis(3.0 * al[0]));
        assert!((y.coeff(&[3])[(0, 0)] - want).norm() < 1e-15);
    }

    #[test]
    fn linear_solve_rejects_resonant_rhs() {
        let a = UnitaryConstant::from_phases(&[0.0]);
        let (_, split) = split_for(&a, 64.0, 0.01);
        let f = FourierMap::constant(1, Mat::from_element(1, 1, c(0.0, 1.0)));
        assert!(matches!(
            linear_homological_solve(&a.eigenvalues, &golden(), &f, &split, 0.01),
            Err(KamError::RhsNotNre { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn linear_solve_substitution(n in 1usize..=4, seed in 0u64..1000) {
            let mut r = rng::stream(seed, 1);
            let a = UnitaryConstant::new(linalg::haar_unitary(n, &mut r), 1e-10).unwrap();
            let al = golden();
            let delta = dc_floor(&al, 4 * n as i64 * 64) / (8.0 * n as f64);
            let (_, split) = split_for(&a, 64.0, delta);
            let rhs = split_re_nre(&random_skew_map(n, 64, 1.0, 0.0, seed), &split).1;
            let y = linear_homological_solve(&a.eigenvalues, &al, &rhs, &split, delta).unwrap();
            let back = homological_op(&y, &a.eigenvalues, &al);
            prop_assert!(back.sub(&rhs).wiener_norm(0.0) <= 1e-12 * rhs.wiener_norm(0.0));
        }
    }

    #[test]
    fn nonlinear_solve_trivial_inputs() {
        let a = UnitaryConstant::from_phases(&[0.0]);
        let (_, split) = split_for(&a, 64.0, 0.01);
        let s = nonlinear_nre_solve(&a.eigenvalues, &golden(), &FourierMap::zero(1, 1), &split, 0.01, 0.1, DELTA_STAR).unwrap();
        assert!(s.y.is_empty() && s.f_re.is_empty());
        // A constant skew F lies in the re image.
        let f = FourierMap::constant(1, Mat::from_element(1, 1, c(0.0, 1e-6))).with_skew(true);
        let s = nonlinear_nre_solve(&a.eigenvalues, &golden(), &f, &split, 0.01, 0.1, DELTA_STAR).unwrap();
        assert!(s.y.wiener_norm(0.0) < 1e-20);
        assert!(s.f_re.sub(&f).wiener_norm(0.0) < 1e-20);
    }

    #[test]
    fn nonlinear_solve_scalar_perturbative() {
        let (eps, h) = (1e-4, 0.2);
        let a = UnitaryConstant::from_phases(&[0.0]);
        let al = golden();
        let (_, split) = split_for(&a, 200.0, 0.05);
        let f = scalar_f(eps, h);
        let s = nonlinear_nre_solve(&a.eigenvalues, &al, &f, &split, 0.05, 0.9 * h, DELTA_STAR).unwrap();
        let lin = linear_homological_solve(&a.eigenvalues, &al, &f, &split, 0.05).unwrap();
        // log{…} ≈ F + L₀Y, so the fixed point is Y = -L₀⁻¹F to first order.
        assert!(s.y.add(&lin).wiener_norm(0.0) < 10.0 * eps * eps);
        assert!(s.f_re.max_l1() == 0);
        assert!(s.f_re.wiener_norm(0.0) < 10.0 * eps * eps);
        assert!(s.report.max_ratio <= 0.5 && s.report.iterations <= 30);
    }

    #[test]
    fn kam_step_zero_perturbation() {
        let a = UnitaryConstant::from_phases(&[0.25, -0.25]);
        let c0 = NearConstantCocycle {
            alpha: golden(),
            a: a.clone(),
            f: FourierMap::zero(1, 2),
            h: 0.2,
        };
        let st = kam_step(&c0, &StepConstants::new(0.01, 0.5), 1e-4, None).unwrap();
        assert!(linalg::max_abs_diff(&st.a_plus, &a.matrix) < 1e-14);
        assert!(st.f_plus.is_empty());
        assert!(st.r.sub(&FourierMap::identity(1, 2)).wiener_norm(0.0) < 1e-14);
    }

    #[test]
    fn kam_step_scalar_reference() {
        for eps in [1e-3, 1e-4] {
            let c0 = NearConstantCocycle {
                alpha: golden(),
                a: UnitaryConstant::from_phases(&[0.0]),
                f: scalar_f(eps, 0.2),
                h: 0.2,
            };
            let st = kam_step(&c0, &StepConstants::new(0.01, 0.5), eps, None).unwrap();
            assert!(st.nr_flag, "{:?}", st.nr_margin);
            assert!(st.residual <= 1e-8);
            assert!((st.a_plus[(0, 0)] - c(1.0, 0.0)).norm() < 1e-6);
            assert!(st.all_pass(), "{:?}", st.failed());
        }
    }

    /// SU(2) reference: A = diag(e^{πi/10}, e^{-πi/10}), F on modes ±1 with Wiener norm ε at h.
    fn su2_reference(eps: f64, h: f64) -> NearConstantCocycle {
        let x = Mat::from_row_slice(2, 2, &[c(0.0, 1.0), c(0.5, 0.0), c(-0.5, 0.0), c(0.0, -1.0)]);
        let f = FourierMap::from_coeffs(1, 2, [(vec![1], x.clone()), (vec![-1], -x.adjoint())]).with_skew(true);
        let f = f.project_skew();
        NearConstantCocycle {
            alpha: golden(),
            a: UnitaryConstant::from_phases(&[0.05, -0.05]),
            f: f.scale(eps / f.wiener_norm(h)),
            h,
        }
    }

    #[test]
    fn kam_step_su2_nonresonant() {
        for eps in [1e-3, 1e-4] {
            let st = kam_step(&su2_reference(eps, 0.2), &StepConstants::new(0.01, 0.5), eps, None).unwrap();
            assert!(st.nr_flag);
            assert!(st.offsets.iter().all(|k| k[0] == 0));
            assert!(st.all_pass(), "{:?}", st.failed());
        }
    }

    #[test]
    fn small_divisors_falsify_literal_y_bound() {
        // |1 + e^{2πi·4α}| ≈ 0.18 inflates Y past ε^{1-2σ}; the step records it.
        let eps = 1e-4;
        let c0 = NearConstantCocycle {
            alpha: golden(),
            a: UnitaryConstant::from_phases(&[0.25, -0.25]),
            f: random_skew_map(2, 4, eps, 0.2, 11),
            h: 0.2,
        };
        let st = kam_step(&c0, &StepConstants::new(0.01, 0.5), eps, None).unwrap();
        assert!(st.nr_flag && st.residual <= 1e-8);
        let names: Vec<&str> = st.failed().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["nr_y_norm"]);
    }

    #[test]
    fn kam_step_su2_resonant_removes_resonance() {
        let eps = 1e-4;
        let al = golden();
        let k0 = 3.0;
        let a = UnitaryConstant::from_phases(&[-k0 * al[0] / 2.0, k0 * al[0] / 2.0]);
        let c0 = NearConstantCocycle {
            alpha: al.clone(),
            a,
            f: random_skew_map(2, 4, eps, 0.2, 5),
            h: 0.2,
        };
        let st = kam_step(&c0, &StepConstants::new(0.01, 0.5), eps, None).unwrap();
        assert!(!st.nr_flag);
        assert!(st.offsets.iter().any(|k| k[0] != 0));
        let diff: Vec<i64> = st.offsets.iter().map(|k| k[0]).collect();
        assert_eq!((diff[0] - diff[1]).abs(), 3);
        assert!(st.residual <= 1e-8, "{}", st.residual);
        let plus = UnitaryConstant::new(st.a_plus.clone(), 1e-9).unwrap();
        let nr = detect_nr(&plus.eigenvalues, &al, 3, 0.1);
        assert!(nr.nr, "{nr:?}");
    }

    #[test]
    fn detect_nr_examples() {
        let al = golden();
        let r = detect_nr(&[c(1.0, 0.0)], &al, 1000, 1e-4);
        assert!(r.nr && r.margin > 0.0);
        let lam = [c(1.0, 0.0), cis(3.0 * al[0])];
        let r = detect_nr(&lam, &al, 10, 1e-6);
        assert!(!r.nr);
        let (p, q, k) = r.witness.unwrap();
        assert_eq!((p, q, k[0].abs()), (p, 1 - p, 3));
    }

    #[test]
    fn schedule_formulas() {
        assert_eq!(sigma_of_ell(1.06), 0.01);
        assert!((sigma_of_ell(20.0 / 19.0) - 0.01).abs() < 1e-15);
        assert!(sigma_of_ell(1.02) < 0.01);
        let mut p = ScheduleParams::new(2.0, 1, 0.5, Some(1e-4));
        p.max_steps = 4;
        let s = build_schedule(&p).unwrap();
        assert!((s.kappa - (1.0 - 1.0 / 1.005)).abs() < 1e-15);
        assert!((s.rows[2].eps - 10f64.powf(-4.0 * 1.005f64.powi(2))).abs() < 1e-18);
        assert_eq!(s.rows[2].l_m, s.rows[0].n_order + s.rows[1].n_order);
        p.h0 = 0.6;
        assert!(build_schedule(&p).is_err());
    }

    #[test]
    fn schedule_reaches_floor() {
        let p = ScheduleParams::new(2.0, 1, 0.5, Some(1e-12));
        let s = build_schedule(&p).unwrap();
        let last = s.rows.last().unwrap();
        assert!(last.eps < 1e-14);
        assert!(s.rows[s.rows.len() - 2].eps >= 1e-14);
        assert!(s.rows.windows(2).all(|w| w[1].eps < w[0].eps && w[1].h < w[0].h));
    }

    fn short_schedule(steps: usize) -> KamSchedule {
        let mut p = ScheduleParams::new(2.0, 1, 0.5, Some(1e-12));
        p.max_steps = steps;
        build_schedule(&p).unwrap()
    }

    #[test]
    fn chain_with_zero_perturbation_is_stationary() {
        let s = short_schedule(3);
        let a = UnitaryConstant::from_phases(&[0.1]);
        let t = iterate_chain(&golden(), &a, &[FourierMap::zero(1, 1)], &s).unwrap();
        for st in &t.states {
            assert!(linalg::max_abs_diff(&st.a, &a.matrix) < 1e-14);
            assert!(st.f.wiener_norm(0.0) < 1e-14);
        }
        let conv = convergent_chain(&t, &s, &golden(), &a.matrix, &[FourierMap::zero(1, 1)]);
        assert!(conv.r_limit.sub(&FourierMap::identity(1, 1)).wiener_norm(0.0) < 1e-14);
        assert!(linalg::max_abs_diff(&conv.a_limit, &a.matrix) < 1e-14);
    }

    #[test]
    fn scalar_chain_four_steps() {
        let s = short_schedule(4);
        let al = golden();
        let a = UnitaryConstant::from_phases(&[0.0]);
        let g = scalar_f(0.9 * s.eps0, s.rows[0].h);
        let t = iterate_chain(&al, &a, std::slice::from_ref(&g), &s).unwrap();
        assert_eq!(t.rows.len(), 4);
        for ch in &t.checks {
            if ["f_m_bound", "pi_closed_form", "step_residual", "f_plus"].contains(&ch.check.name.as_str()) {
                assert!(ch.check.pass, "{ch:?}");
            }
        }
        let conv = convergent_chain(&t, &s, &al, &a.matrix, &[g]);
        assert_eq!(conv.m_star, Some(0));
        assert!(conv.zeta.iter().all(|z| z.pass), "{:?}", conv.zeta);
        assert!(conv.final_residual <= conv.final_bound);
    }

    #[test]
    fn constant_conjugacy_examples() {
        let al = golden();
        let mut r = rng::stream(3, 0);
        let mu = [0.1, 0.37, -0.2];
        let cm = linalg::diag(&mu.iter().map(|&p| cis(p)).collect::<Vec<_>>());
        // constant V
        let v0 = linalg::haar_unitary(3, &mut r);
        let at = v0.adjoint() * &cm * &v0;
        let out = constant_conjugacy_structure(&cm, &at, &al, &FourierMap::constant(1, v0.clone()), 1e-9).unwrap();
        assert!(out.ks.iter().all(|k| k[0] == 0));
        // character map
        let ks: Vec<Freq> = vec![vec![2], vec![-1], vec![0]];
        let w = character_map(1, &ks);
        let at = linalg::diag(&(0..3).map(|j| cis(mu[j] - dot(&ks[j], &al))).collect::<Vec<_>>());
        let out = constant_conjugacy_structure(&cm, &at, &al, &w, 1e-9).unwrap();
        assert_eq!(out.ks, ks);
        // S W T
        let s = linalg::haar_unitary(3, &mut r);
        let tt = linalg::haar_unitary(3, &mut r);
        let c2 = &s * &cm * s.adjoint();
        let v = w.sandwich(&s, &tt);
        let at2 = tt.adjoint() * &at * &tt;
        let out = constant_conjugacy_structure(&c2, &at2, &al, &v, 1e-9).unwrap();
        assert!(out.reconstruction_error <= 1e-9);
        let mut sorted = out.ks.clone();
        sorted.sort();
        assert_eq!(sorted, vec![vec![-1], vec![0], vec![2]]);
    }

    #[test]
    fn constant_conjugacy_rejects_non_conjugacy() {
        let cm = linalg::diag(&[cis(0.1), cis(0.3)]);
        let at = linalg::diag(&[cis(0.2), cis(0.4)]);
        let v = FourierMap::identity(1, 2);
        assert!(constant_conjugacy_structure(&cm, &at, &golden(), &v, 1e-9).is_err());
    }
}

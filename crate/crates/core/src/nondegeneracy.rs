//! Brackets ⌈·⌋₀ and ⌈·⌋, truncated non-degeneracy Γ(N,ε) and multiplication
//! certificates Π(Ñ,ξ,ε).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, C64, Mat};
use crate::rng;
use crate::torus_fourier::{l1, Freq, FourierMap};

const DESCENT_ITERS: usize = 50;
const DESCENT_STEP: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NondegError {
    #[error("certificate is vacuous: ξδ - ε = {0:.3e} ≤ 0")]
    Vacuous(f64),
    #[error("map does not match the declared kind: {0}")]
    Unrecognized(String),
    #[error("samples must be positive")]
    NoSamples,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyEstimate {
    pub bracket0: f64,
    /// Best ⌈SBT⌋₀ found; an upper bound on ⌈B⌋.
    pub bracket_upper: f64,
    pub samples: usize,
    pub seed: u64,
    /// Running minimum after each sample.
    #[serde(skip)]
    pub running_min: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaCert {
    pub n_order: i64,
    pub eps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiCert {
    pub n_tilde: i64,
    pub xi: f64,
    pub eps: f64,
}

impl PiCert {
    pub const IDENTITY: PiCert = PiCert {
        n_tilde: 0,
        xi: 1.0,
        eps: 0.0,
    };

    /// Whether every map certified by `self` is also certified by `other`: more modes,
    /// smaller factor and larger loss are weaker.
    pub fn within(&self, other: &PiCert, tol: f64) -> bool {
        self.n_tilde <= other.n_tilde && self.xi >= other.xi * (1.0 - tol) && self.eps <= other.eps * (1.0 + tol) + tol * 1e-300
    }
}

/// min_p max_q sup_k |b̂_{p,q}(k)|
pub fn bracket0(b: &FourierMap) -> f64 {
    bracket0_coeffs(&b.iter().map(|(_, m)| m.clone()).collect::<Vec<_>>(), b.dim_n())
}

fn bracket0_coeffs(coeffs: &[Mat], n: usize) -> f64 {
    let mut rows = vec![0.0_f64; n];
    for m in coeffs {
        for (p, r) in rows.iter_mut().enumerate() {
            for q in 0..n {
                *r = r.max(m[(p, q)].norm());
            }
        }
    }
    rows.into_iter().fold(f64::INFINITY, f64::min)
}

fn bracket0_sbt(coeffs: &[Mat], s: &Mat, t: &Mat) -> f64 {
    let n = s.nrows();
    let mut rows = vec![0.0_f64; n];
    for m in coeffs {
        let x = s * m * t;
        for (p, r) in rows.iter_mut().enumerate() {
            for q in 0..n {
                *r = r.max(x[(p, q)].norm());
            }
        }
    }
    rows.into_iter().fold(f64::INFINITY, f64::min)
}

/// Monte-Carlo upper bound on ⌈B⌋ = inf_{S,T} ⌈SBT⌋₀. Every Haar sample is refined by a
/// random-direction descent with step halving; the running minimum is reported.
pub fn bracket_estimate(b: &FourierMap, samples: usize, seed: u64) -> Result<DegeneracyEstimate, NondegError> {
    if samples == 0 {
        return Err(NondegError::NoSamples);
    }
    let n = b.dim_n();
    let coeffs: Vec<Mat> = b.iter().map(|(_, m)| m.clone()).collect();
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let mut s = linalg::haar_unitary(n, &mut r);
            let mut t = linalg::haar_unitary(n, &mut r);
            let mut best = bracket0_sbt(&coeffs, &s, &t);
            let mut step = DESCENT_STEP;
            for _ in 0..DESCENT_ITERS {
                let x = linalg::random_skew(n, &mut r);
                let y = linalg::random_skew(n, &mut r);
                let sx = (linalg::spectral_norm(&x) + 1e-300).recip() * step;
                let sy = (linalg::spectral_norm(&y) + 1e-300).recip() * step;
                let s2 = linalg::expm_skew(&(x * C64::new(sx, 0.0))) * &s;
                let t2 = &t * linalg::expm_skew(&(y * C64::new(sy, 0.0)));
                let v = bracket0_sbt(&coeffs, &s2, &t2);
                if v < best {
                    best = v;
                    s = s2;
                    t = t2;
                } else {
                    step *= 0.5;
                }
            }
            best
        })
        .collect();
    let mut running = Vec::with_capacity(samples);
    let mut cur = f64::INFINITY;
    for v in values {
        cur = cur.min(v);
        running.push(cur);
    }
    Ok(DegeneracyEstimate {
        bracket0: bracket0(b),
        bracket_upper: cur,
        samples,
        seed,
        running_min: running,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaMembership {
    pub member: bool,
    pub margin: f64,
    pub estimate: f64,
}

/// Compares the bracket estimate of T_N B with ε.
pub fn gamma_member(b: &FourierMap, cert: GammaCert, samples: usize, seed: u64) -> Result<GammaMembership, NondegError> {
    let t = b.truncate(cert.n_order);
    let est = if t.is_empty() {
        0.0
    } else {
        bracket_estimate(&t, samples, seed)?.bracket_upper
    };
    Ok(GammaMembership {
        member: est >= cert.eps,
        margin: est - cert.eps,
        estimate: est,
    })
}

/// (Ñ_1+Ñ_2, ξ_1ξ_2, ξ_2ε_1+ε_2): the certificate of P_1P_2.
pub fn pi_compose(c1: PiCert, c2: PiCert) -> PiCert {
    PiCert {
        n_tilde: c1.n_tilde + c2.n_tilde,
        xi: c1.xi * c2.xi,
        eps: c2.xi * c1.eps + c2.eps,
    }
}

/// Γ(N,δ)·P ⊆ Γ(N+Ñ, ξδ-ε).
pub fn pi_apply(cert: PiCert, g: GammaCert) -> Result<GammaCert, NondegError> {
    let eps = cert.xi * g.eps - cert.eps;
    if eps <= 0.0 {
        return Err(NondegError::Vacuous(eps));
    }
    Ok(GammaCert {
        n_order: g.n_order + cert.n_tilde,
        eps,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum MapKind {
    Constant,
    Character(Vec<Freq>),
    NearIdentity { grid: usize },
}

/// W(θ) = diag(e^{2πi⟨k^{(p)},θ⟩})
pub fn character_map(d: usize, freqs: &[Freq]) -> FourierMap {
    let n = freqs.len();
    let mut w = FourierMap::zero(d, n).with_skew(false);
    for (p, k) in freqs.iter().enumerate() {
        let mut e = linalg::zeros(n);
        e[(p, p)] = C64::new(1.0, 0.0);
        w.add_coeff(k.clone(), &e);
    }
    w
}

pub fn pi_cert_of_map(p: &FourierMap, kind: &MapKind) -> Result<PiCert, NondegError> {
    match kind {
        MapKind::Constant => {
            if !p.is_constant() {
                return Err(NondegError::Unrecognized("not constant".into()));
            }
            let defect = linalg::unitarity_defect(&p.mean());
            if defect > 1e-10 {
                return Err(NondegError::Unrecognized(format!("unitarity defect {defect:.2e}")));
            }
            Ok(PiCert::IDENTITY)
        }
        MapKind::Character(freqs) => {
            if freqs.len() != p.dim_n() {
                return Err(NondegError::Unrecognized("frequency count differs from n".into()));
            }
            let w = character_map(p.dim_d(), freqs);
            let diff = w.sub(p).wiener_norm(0.0);
            if diff > 1e-12 {
                return Err(NondegError::Unrecognized(format!("differs from W by {diff:.2e}")));
            }
            Ok(PiCert {
                n_tilde: freqs.iter().map(|k| l1(k)).max().unwrap_or(0),
                xi: 1.0 / p.dim_n() as f64,
                eps: 0.0,
            })
        }
        MapKind::NearIdentity { grid } => {
            let vals = p.to_grid(*grid);
            let worst_unitary = vals.iter().map(linalg::unitarity_defect).fold(0.0, f64::max);
            if worst_unitary > 1e-8 {
                return Err(NondegError::Unrecognized(format!("not unitary-valued ({worst_unitary:.2e})")));
            }
            let id = linalg::identity(p.dim_n());
            let eps = vals
                .iter()
                .map(|v| linalg::spectral_norm(&(v - &id)))
                .fold(0.0, f64::max);
            Ok(PiCert {
                n_tilde: 0,
                xi: 1.0,
                eps,
            })
        }
    }
}

//! Diophantine conditions, continued fractions and the spectral sets Υ, Σ, scanned to a
//! finite depth.
//!
//! Irrationals are held exactly, either as a rational number or as a quadratic surd
//! `(P + √D)/Q`, so tails α_m and products β_m never go through a cancelling
//! subtraction.

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::torus_fourier::{dot, l1, UnitaryConstant};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArithError {
    #[error("cannot parse alpha `{0}`")]
    Parse(String),
    #[error("alpha is rational: expansion terminates at depth {depth} (requested {requested})")]
    Rational { depth: usize, requested: usize },
    #[error("gauss map undefined at 0")]
    GaussAtZero,
    #[error("gauss map needs alpha in (0,1), got {0}")]
    OutOfRange(f64),
    #[error("surd radicand {0} is a perfect square")]
    PerfectSquare(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiophantineParams {
    pub gamma: f64,
    pub tau: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralGapParams {
    pub chi: f64,
    pub nu: f64,
}

/// Exact real number: a rational `num/den` (den > 0) or a quadratic surd `(p + √d)/q`
/// normalized so that `q | d - p²`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AlphaExact {
    Rational { num: BigInt, den: BigInt },
    Surd { p: BigInt, q: BigInt, d: BigInt },
}

fn big(x: i64) -> BigInt {
    BigInt::from(x)
}

/// num/den in double precision without overflowing either operand.
pub fn big_ratio(num: &BigInt, den: &BigInt) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let neg = (num.sign() == Sign::Minus) != (den.sign() == Sign::Minus);
    let (n, d) = (num.abs(), den.abs());
    let shift = 64 + d.bits() as i64 - n.bits() as i64;
    let q = if shift >= 0 {
        (n << (shift as usize)) / d
    } else {
        n / (d << ((-shift) as usize))
    };
    let mut v = q.to_f64().unwrap_or(f64::INFINITY);
    let mut s = -shift;
    while s != 0 {
        let step = s.clamp(-512, 512);
        v *= 2f64.powi(step as i32);
        s -= step;
    }
    if neg {
        -v
    } else {
        v
    }
}

impl AlphaExact {
    pub fn rational(num: BigInt, den: BigInt) -> AlphaExact {
        let (num, den) = if den.is_negative() { (-num, -den) } else { (num, den) };
        let g = num.gcd(&den);
        let g = if g.is_zero() { BigInt::one() } else { g };
        AlphaExact::Rational {
            num: num / &g,
            den: den / g,
        }
    }

    /// (a + b√c)/e
    pub fn surd(a: i64, b: i64, c: i64, e: i64) -> Result<AlphaExact, ArithError> {
        if e == 0 || c < 0 {
            return Err(ArithError::Parse(format!("surd ({a}+{b}√{c})/{e}")));
        }
        let c_big = big(c);
        let r = c_big.sqrt();
        if b == 0 || &r * &r == c_big {
            let num = big(a) + big(b) * r;
            return Ok(AlphaExact::rational(num, big(e)));
        }
        let s: i64 = if b > 0 { 1 } else { -1 };
        let (p0, d0, q0) = (big(a * s), big(b) * big(b) * big(c), big(e * s));
        let qa = q0.abs();
        Ok(AlphaExact::Surd {
            p: p0 * &qa,
            d: d0 * &qa * &qa,
            q: q0 * qa,
        })
    }

    pub fn golden() -> AlphaExact {
        AlphaExact::surd(-1, 1, 5, 2).expect("golden mean")
    }

    pub fn silver() -> AlphaExact {
        AlphaExact::surd(-1, 1, 2, 1).expect("silver mean")
    }

    /// Σ_{j ≤ depth} 10^{-j!}
    pub fn liouville(depth: u32) -> AlphaExact {
        let mut fact = 1u32;
        let mut exps = Vec::new();
        for j in 1..=depth {
            fact *= j;
            exps.push(fact);
        }
        let top = *exps.last().unwrap_or(&1);
        let den = BigInt::from(10u32).pow(top);
        let num = exps
            .iter()
            .fold(BigInt::zero(), |acc, e| acc + BigInt::from(10u32).pow(top - e));
        AlphaExact::rational(num, den)
    }

    /// Accepts `golden`, `silver`, `liouville[:J]`, `surd:a,b,c,e` for (a+b√c)/e,
    /// `p/q`, and plain decimals (read as exact rationals).
    pub fn parse(s: &str) -> Result<AlphaExact, ArithError> {
        let t = s.trim();
        let err = || ArithError::Parse(s.to_string());
        match t {
            "golden" => return Ok(AlphaExact::golden()),
            "silver" => return Ok(AlphaExact::silver()),
            "liouville" => return Ok(AlphaExact::liouville(6)),
            _ => {}
        }
        if let Some(rest) = t.strip_prefix("liouville:") {
            let j: u32 = rest.trim().parse().map_err(|_| err())?;
            if j == 0 || j > 8 {
                return Err(err());
            }
            return Ok(AlphaExact::liouville(j));
        }
        if let Some(rest) = t.strip_prefix("surd:") {
            let v: Vec<i64> = rest
                .split(',')
                .map(|x| x.trim().parse::<i64>())
                .collect::<Result<_, _>>()
                .map_err(|_| err())?;
            if v.len() != 4 {
                return Err(err());
            }
            return AlphaExact::surd(v[0], v[1], v[2], v[3]);
        }
        if let Some((a, b)) = t.split_once('/') {
            let num: BigInt = a.trim().parse().map_err(|_| err())?;
            let den: BigInt = b.trim().parse().map_err(|_| err())?;
            if den.is_zero() {
                return Err(err());
            }
            return Ok(AlphaExact::rational(num, den));
        }
        let (neg, body) = match t.strip_prefix('-') {
            Some(b) => (true, b),
            None => (false, t),
        };
        let (ip, fp) = body.split_once('.').unwrap_or((body, ""));
        if ip.is_empty() && fp.is_empty() {
            return Err(err());
        }
        if !ip.chars().chain(fp.chars()).all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let digits = format!("{ip}{fp}");
        let num: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().map_err(|_| err())? };
        let den = BigInt::from(10u32).pow(fp.len() as u32);
        Ok(AlphaExact::rational(if neg { -num } else { num }, den))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            AlphaExact::Rational { num, den } => big_ratio(num, den),
            AlphaExact::Surd { p, q, d } => {
                let sd = d.to_f64().unwrap_or(f64::INFINITY).sqrt();
                if !p.is_negative() {
                    (p.to_f64().unwrap_or(0.0) + sd) / q.to_f64().unwrap_or(1.0)
                } else {
                    // (d - p²) / (q (√d - p)) avoids cancellation
                    let num = d - p * p;
                    let den = q.to_f64().unwrap_or(1.0) * (sd - p.to_f64().unwrap_or(0.0));
                    num.to_f64().unwrap_or(0.0) / den
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, AlphaExact::Rational { num, .. } if num.is_zero())
    }

    /// (floor, fractional part).
    pub fn split_floor(&self) -> (BigInt, AlphaExact) {
        match self {
            AlphaExact::Rational { num, den } => {
                let (fl, r) = num.div_mod_floor(den);
                (fl, AlphaExact::rational(r, den.clone()))
            }
            AlphaExact::Surd { p, q, d } => {
                let s = d.sqrt();
                let fl = if q.is_positive() {
                    (p + &s).div_floor(q)
                } else {
                    (p + &s + BigInt::one()).div_floor(q)
                };
                let p2 = p - &fl * q;
                (
                    fl,
                    AlphaExact::Surd {
                        p: p2,
                        q: q.clone(),
                        d: d.clone(),
                    },
                )
            }
        }
    }

    /// 1/x for x ≠ 0.
    pub fn recip(&self) -> AlphaExact {
        match self {
            AlphaExact::Rational { num, den } => AlphaExact::rational(den.clone(), num.clone()),
            AlphaExact::Surd { p, q, d } => {
                // q/(p+√d) = (-p+√d)/((d-p²)/q)
                let q2 = (d - p * p) / q;
                AlphaExact::Surd {
                    p: -p.clone(),
                    q: q2,
                    d: d.clone(),
                }
            }
        }
    }

    /// One step of the continued fraction on a number in (0,1): (a = [1/x], G(x)).
    pub fn gauss_step(&self) -> Option<(BigInt, AlphaExact)> {
        if self.is_zero() {
            return None;
        }
        Some(self.recip().split_floor())
    }

    /// floor(x · 10^digits).
    pub fn fixed(&self, digits: u32) -> BigInt {
        let scale = BigInt::from(10u32).pow(digits);
        match self {
            AlphaExact::Rational { num, den } => (num * scale).div_floor(den),
            AlphaExact::Surd { p, q, d } => {
                let sd = (d * &scale * &scale).sqrt();
                let top = p * &scale + sd;
                if q.is_positive() {
                    top.div_floor(q)
                } else {
                    (top + BigInt::one()).div_floor(q)
                }
            }
        }
    }
}

/// Continued fraction data of α ∈ (0,1): partials a_1..a_M (index 0 holds a_0 = 0),
/// convergents p_m/q_m, tails α_m = G^m(α) and β_m = α_0⋯α_m.
#[derive(Clone, Debug)]
pub struct ContinuedFraction {
    pub alpha: AlphaExact,
    pub alpha_f64: f64,
    pub partials: Vec<BigInt>,
    pub p: Vec<BigInt>,
    pub q: Vec<BigInt>,
    pub tails: Vec<f64>,
    pub tails_exact: Vec<AlphaExact>,
    pub betas: Vec<f64>,
}

impl ContinuedFraction {
    pub fn depth(&self) -> usize {
        self.partials.len() - 1
    }

    pub fn a(&self, m: usize) -> i64 {
        self.partials[m].to_i64().expect("partial quotient fits i64")
    }

    pub fn q_i64(&self, m: usize) -> i64 {
        self.q[m].to_i64().expect("denominator fits i64")
    }

    pub fn p_i64(&self, m: usize) -> i64 {
        self.p[m].to_i64().expect("numerator fits i64")
    }

    /// β_m for m ≥ -1 (β_{-1} = 1).
    pub fn beta(&self, m: i64) -> f64 {
        if m < 0 {
            1.0
        } else {
            self.betas[m as usize]
        }
    }

    /// Checks the recurrence, determinant, β and sandwich identities.
    pub fn verify(&self) -> CfInvariants {
        let mm = self.depth();
        let mut rep = CfInvariants::default();
        let (mut pm2, mut qm2) = (BigInt::one(), BigInt::zero());
        let (mut pm1, mut qm1) = (BigInt::zero(), BigInt::one());
        rep.recurrence_ok = self.p[0].is_zero() && self.q[0].is_one();
        for m in 1..=mm {
            let pn = &self.partials[m] * &pm1 + &pm2;
            let qn = &self.partials[m] * &qm1 + &qm2;
            rep.recurrence_ok &= pn == self.p[m] && qn == self.q[m];
            pm2 = std::mem::replace(&mut pm1, pn);
            qm2 = std::mem::replace(&mut qm1, qn);
        }
        rep.determinant_ok = (0..=mm).all(|m| {
            let (pp, qp) = if m == 0 { (BigInt::one(), BigInt::zero()) } else { (self.p[m - 1].clone(), self.q[m - 1].clone()) };
            let det = &self.q[m] * pp - &self.p[m] * qp;
            det == if m % 2 == 0 { BigInt::one() } else { -BigInt::one() }
        });
        // β_m against (-1)^m (q_m α - p_m) at 60 extra digits
        let digits = 60 + 2 * self.q[mm].to_string().len() as u32;
        let a_fix = self.alpha.fixed(digits);
        let scale = BigInt::from(10u32).pow(digits);
        for m in 0..=mm {
            let mut num = &self.q[m] * &a_fix - &self.p[m] * &scale;
            if m % 2 == 1 {
                num = -num;
            }
            let exact = big_ratio(&num, &scale);
            let rel = ((exact - self.betas[m]) / exact).abs();
            rep.beta_identity_rel = rep.beta_identity_rel.max(rel);
            if m + 1 <= mm {
                let qm = self.q[m].to_f64().unwrap_or(f64::INFINITY);
                let qn = self.q[m + 1].to_f64().unwrap_or(f64::INFINITY);
                let b = self.betas[m];
                rep.sandwich_ok &= 1.0 / (qm + qn) < b && b < 1.0 / qn;
                let recip = 1.0 / (qn + self.tails[m + 1] * qm);
                rep.beta_recip_rel = rep.beta_recip_rel.max(((recip - b) / b).abs());
            }
        }
        for m in 1..=mm {
            let g = gauss_map(self.tails[m - 1]).unwrap_or(f64::NAN);
            let scale = (1.0 / self.tails[m - 1]).max(1.0);
            rep.gauss_tail_abs = rep.gauss_tail_abs.max((g - self.tails[m]).abs() / scale);
        }
        rep
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CfInvariants {
    pub recurrence_ok: bool,
    pub determinant_ok: bool,
    pub sandwich_ok: bool,
    pub beta_identity_rel: f64,
    pub beta_recip_rel: f64,
    /// |G(α_{m-1}) - α_m| in double precision, divided by max(1, 1/α_{m-1}).
    pub gauss_tail_abs: f64,
}

impl Default for CfInvariants {
    fn default() -> Self {
        CfInvariants {
            recurrence_ok: true,
            determinant_ok: true,
            sandwich_ok: true,
            beta_identity_rel: 0.0,
            beta_recip_rel: 0.0,
            gauss_tail_abs: 0.0,
        }
    }
}

impl CfInvariants {
    pub fn all_ok(&self, tol: f64) -> bool {
        self.recurrence_ok
            && self.determinant_ok
            && self.sandwich_ok
            && self.beta_identity_rel <= tol
            && self.beta_recip_rel <= tol
    }
}

/// Expands α (reduced mod 1) to depth M.
pub fn cf_expand(alpha: &AlphaExact, depth: usize) -> Result<ContinuedFraction, ArithError> {
    let (_, frac) = alpha.split_floor();
    let mut cf = ContinuedFraction {
        alpha: frac.clone(),
        alpha_f64: frac.to_f64(),
        partials: vec![BigInt::zero()],
        p: vec![BigInt::zero()],
        q: vec![BigInt::one()],
        tails: vec![frac.to_f64()],
        tails_exact: vec![frac.clone()],
        betas: vec![frac.to_f64()],
    };
    if frac.is_zero() {
        return Err(ArithError::Rational { depth: 0, requested: depth });
    }
    let (mut pm2, mut qm2) = (BigInt::one(), BigInt::zero());
    let mut cur = frac;
    for m in 1..=depth {
        let (a, next) = match cur.gauss_step() {
            Some(x) => x,
            None => return Err(ArithError::Rational { depth: m - 1, requested: depth }),
        };
        if next.is_zero() && m < depth {
            return Err(ArithError::Rational { depth: m, requested: depth });
        }
        let pn = &a * &cf.p[m - 1] + &pm2;
        let qn = &a * &cf.q[m - 1] + &qm2;
        pm2 = cf.p[m - 1].clone();
        qm2 = cf.q[m - 1].clone();
        let t = next.to_f64();
        cf.partials.push(a);
        cf.p.push(pn);
        cf.q.push(qn);
        cf.betas.push(cf.betas[m - 1] * t);
        cf.tails.push(t);
        cf.tails_exact.push(next.clone());
        cur = next;
    }
    Ok(cf)
}

/// G(α) = {1/α}
pub fn gauss_map(alpha: f64) -> Result<f64, ArithError> {
    if alpha == 0.0 {
        return Err(ArithError::GaussAtZero);
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(ArithError::OutOfRange(alpha));
    }
    let r = 1.0 / alpha;
    Ok(r - r.floor())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcWitness {
    pub k: Vec<i64>,
    pub value: f64,
}

/// Finite-depth Diophantine report. `gamma_star` is absent when a witness exists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcReport {
    pub alpha: String,
    pub tau: f64,
    #[serde(rename = "K")]
    pub k_cut: i64,
    pub gamma_star: Option<f64>,
    pub witness: Option<DcWitness>,
    #[serde(skip)]
    pub argmin: Vec<i64>,
    #[serde(skip)]
    pub method: &'static str,
}

/// |e^{2πix} - 1|
pub fn chord(x: f64) -> f64 {
    let t = x - x.round();
    2.0 * (std::f64::consts::PI * t.abs()).sin()
}

/// All k ∈ Z^d with 0 < |k| ≤ K whose first nonzero entry is positive, ordered by (|k|, k).
pub fn half_ball(d: usize, kcut: i64) -> Vec<Vec<i64>> {
    let mut out: Vec<Vec<i64>> = full_ball(d, kcut)
        .into_iter()
        .filter(|k| k.iter().find(|x| **x != 0).is_some_and(|x| *x > 0))
        .collect();
    out.sort_by(|a, b| (l1(a), a).cmp(&(l1(b), b)));
    out
}

/// All k ∈ Z^d with |k| ≤ K, ordered by (|k|, k).
pub fn full_ball(d: usize, kcut: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut cur = vec![0i64; d];
    fn rec(i: usize, left: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for x in -left..=left {
            cur[i] = x;
            rec(i + 1, left - x.abs(), cur, out);
        }
        cur[i] = 0;
    }
    rec(0, kcut, &mut cur, &mut out);
    out.sort_by(|a, b| (l1(a), a).cmp(&(l1(b), b)));
    out
}

/// Brute-force scan of |e^{2πi⟨k,α⟩} - 1|·|k|^τ over 0 < |k| ≤ K.
pub fn dc_check(alpha: &[f64], tau: f64, kcut: i64) -> DcReport {
    let d = alpha.len();
    let best = if d == 1 {
        (1..=kcut)
            .into_par_iter()
            .map(|k| {
                let v = chord(k as f64 * alpha[0]);
                (v * (k as f64).powf(tau), v, vec![k])
            })
            .reduce_with(pick_min)
    } else {
        half_ball(d, kcut)
            .into_par_iter()
            .map(|k| {
                let v = chord(dot(&k, alpha));
                (v * (l1(&k) as f64).powf(tau), v, k)
            })
            .reduce_with(pick_min)
    };
    dc_report(format!("{alpha:?}"), tau, kcut, best, "brute")
}

fn pick_min(a: (f64, f64, Vec<i64>), b: (f64, f64, Vec<i64>)) -> (f64, f64, Vec<i64>) {
    let ka = (l1(&a.2), a.2.clone());
    let kb = (l1(&b.2), b.2.clone());
    if b.0 < a.0 || (b.0 == a.0 && kb < ka) {
        b
    } else {
        a
    }
}

fn dc_report(alpha: String, tau: f64, kcut: i64, best: Option<(f64, f64, Vec<i64>)>, method: &'static str) -> DcReport {
    match best {
        None => DcReport {
            alpha,
            tau,
            k_cut: kcut,
            gamma_star: Some(0.0),
            witness: None,
            argmin: vec![],
            method,
        },
        Some((prod, v, k)) => {
            let witness = (v == 0.0).then(|| DcWitness { k: k.clone(), value: 0.0 });
            DcReport {
                alpha,
                tau,
                k_cut: kcut,
                gamma_star: if witness.is_some() { None } else { Some(1.0 / prod) },
                witness,
                argmin: k,
                method,
            }
        }
    }
}

/// d = 1 scan through the convergent denominators: for q_j ≤ k < q_{j+1} the best
/// approximation property gives ‖kα‖ ≥ ‖q_j α‖, so the weighted minimum sits on some q_j.
/// ‖q_j α‖ = β_j is a product of tails and keeps full relative precision.
pub fn dc_check_exact(alpha: &AlphaExact, label: &str, tau: f64, kcut: i64) -> DcReport {
    let (_, frac) = alpha.split_floor();
    let kbig = BigInt::from(kcut);
    let mut best: Option<(f64, f64, Vec<i64>)> = None;
    let mut consider = |q: &BigInt, dist: f64| {
        let qf = q.to_f64().unwrap_or(f64::INFINITY);
        let v = 2.0 * (std::f64::consts::PI * dist).sin();
        let cand = (v * qf.powf(tau), v, vec![q.to_i64().unwrap_or(i64::MAX)]);
        best = Some(match best.take() {
            None => cand,
            Some(b) => pick_min(b, cand),
        });
    };
    if frac.is_zero() {
        consider(&BigInt::one(), 0.0);
        return dc_report(label.to_string(), tau, kcut, best, "convergents");
    }
    let a0 = frac.to_f64();
    consider(&BigInt::one(), a0.min(1.0 - a0));
    let (mut qm2, mut qm1) = (BigInt::zero(), BigInt::one());
    let mut beta = a0;
    let mut cur = frac;
    while let Some((a, next)) = cur.gauss_step() {
        let qn = &a * &qm1 + &qm2;
        if qn > kbig {
            break;
        }
        let t = next.to_f64();
        beta *= t;
        consider(&qn, beta.min(1.0 - beta));
        if next.is_zero() {
            break;
        }
        qm2 = std::mem::replace(&mut qm1, qn);
        cur = next;
    }
    dc_report(label.to_string(), tau, kcut, best, "convergents")
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdcReport {
    pub members: Vec<usize>,
    pub gamma_stars: Vec<Option<f64>>,
    pub depth: usize,
    pub k_cut: i64,
    pub diagnostic: Option<String>,
}

/// Every m ≤ M whose tail G^m(α) passes the finite-depth DC(γ,τ) check at cutoff K.
pub fn rdc_scan(alpha: &AlphaExact, gamma: f64, tau: f64, depth: usize, kcut: i64) -> RdcReport {
    match cf_expand(alpha, depth) {
        Err(e) => RdcReport {
            members: vec![],
            gamma_stars: vec![],
            depth,
            k_cut: kcut,
            diagnostic: Some(e.to_string()),
        },
        Ok(cf) => {
            let stars: Vec<Option<f64>> = cf
                .tails_exact
                .par_iter()
                .map(|t| dc_check_exact(t, "", tau, kcut).gamma_star)
                .collect();
            let members = stars
                .iter()
                .enumerate()
                .filter(|(_, g)| g.is_some_and(|g| g < gamma))
                .map(|(m, _)| m)
                .collect();
            RdcReport {
                members,
                gamma_stars: stars,
                depth,
                k_cut: kcut,
                diagnostic: None,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpsilonWitness {
    pub k: Vec<i64>,
    /// 1-based indices.
    pub p: usize,
    pub q: usize,
    pub j: i64,
    pub value: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpsilonReport {
    pub pass: bool,
    pub witness: Option<UpsilonWitness>,
    /// min over the scan of the gap times (1+|k|)^ν; None when n = 1.
    pub chi_empirical: Option<f64>,
    pub k_cut: i64,
    pub j_cut: i64,
}

/// Smallest J beyond which |⟨k,α⟩ + φ_p - φ_q - j| ≥ 1 for every |k| ≤ K.
pub fn forced_j(phi: &[f64], alpha: &[f64], kcut: i64) -> i64 {
    let amax = alpha.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    let spread = phi.iter().fold(0.0_f64, |a, x| phi.iter().fold(a, |b, y| b.max((x - y).abs())));
    (kcut as f64 * amax * alpha.len() as f64 + spread + 1.0).ceil() as i64
}

/// Scans |⟨k,α⟩ + φ_p - φ_q - j| ≥ χ(1+|k|)^{-ν} over p ≠ q, |k| ≤ K (k = 0 included),
/// |j| ≤ J. The reported witness is the first violation in (|k|, k, p, q) order.
pub fn upsilon_check(phi: &[f64], alpha: &[f64], chi: f64, nu: f64, kcut: i64, jcut: Option<i64>) -> UpsilonReport {
    let n = phi.len();
    let jc = jcut.unwrap_or(0).max(forced_j(phi, alpha, kcut));
    if n <= 1 {
        return UpsilonReport {
            pass: true,
            witness: None,
            chi_empirical: None,
            k_cut: kcut,
            j_cut: jc,
        };
    }
    let ks = full_ball(alpha.len(), kcut);
    let per_k: Vec<(f64, Option<UpsilonWitness>)> = ks
        .par_iter()
        .map(|k| {
            let ka = dot(k, alpha);
            let w = (1.0 + l1(k) as f64).powf(nu);
            let mut chi_min = f64::INFINITY;
            let mut first = None;
            for p in 0..n {
                for q in 0..n {
                    if p == q {
                        continue;
                    }
                    let x = ka + phi[p] - phi[q];
                    let j = (x.round() as i64).clamp(-jc, jc);
                    let v = (x - j as f64).abs();
                    chi_min = chi_min.min(v * w);
                    let bound = chi / w;
                    if v < bound && first.is_none() {
                        first = Some(UpsilonWitness {
                            k: k.clone(),
                            p: p + 1,
                            q: q + 1,
                            j,
                            value: v,
                            bound,
                        });
                    }
                }
            }
            (chi_min, first)
        })
        .collect();
    let chi_emp = per_k.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
    let witness = per_k.into_iter().find_map(|x| x.1);
    UpsilonReport {
        pass: witness.is_none(),
        witness,
        chi_empirical: Some(chi_emp),
        k_cut: kcut,
        j_cut: jc,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaWitness {
    pub k: Vec<i64>,
    pub p: usize,
    pub q: usize,
    pub value: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaReport {
    pub pass: bool,
    pub witness: Option<SigmaWitness>,
    pub chi_empirical: Option<f64>,
}

/// Scans |λ_p - λ_q e^{2πi⟨k,α⟩}| ≥ χ(1+|k|)^{-ν} over p ≠ q, |k| ≤ K (k = 0 included).
/// The chordal gap equals 2 sin(π·dist(ϱ_p - ϱ_q - ⟨k,α⟩, Z)), so a Υ pass at χ implies a
/// Σ pass at χ and a Σ pass at χ implies a Υ pass at χ/(2π).
pub fn sigma_alpha_check(a: &UnitaryConstant, alpha: &[f64], chi: f64, nu: f64, kcut: i64) -> SigmaReport {
    let lam = &a.eigenvalues;
    let n = lam.len();
    if n <= 1 {
        return SigmaReport {
            pass: true,
            witness: None,
            chi_empirical: None,
        };
    }
    let ks = full_ball(alpha.len(), kcut);
    let per_k: Vec<(f64, Option<SigmaWitness>)> = ks
        .par_iter()
        .map(|k| {
            let rot = crate::linalg::cis(dot(k, alpha));
            let w = (1.0 + l1(k) as f64).powf(nu);
            let mut chi_min = f64::INFINITY;
            let mut first = None;
            for p in 0..n {
                for q in 0..n {
                    if p == q {
                        continue;
                    }
                    let v = (lam[p] - lam[q] * rot).norm();
                    chi_min = chi_min.min(v * w);
                    let bound = chi / w;
                    if v < bound && first.is_none() {
                        first = Some(SigmaWitness {
                            k: k.clone(),
                            p: p + 1,
                            q: q + 1,
                            value: v,
                            bound,
                        });
                    }
                }
            }
            (chi_min, first)
        })
        .collect();
    let chi_emp = per_k.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
    let witness = per_k.into_iter().find_map(|x| x.1);
    SigmaReport {
        pass: witness.is_none(),
        witness,
        chi_empirical: Some(chi_emp),
    }
}

/// min_{0<|k|≤K} |1 - e^{2πi⟨k,α⟩}|, the floor for equal-eigenvalue divisors.
pub fn dc_floor(alpha: &[f64], kcut: i64) -> f64 {
    if kcut <= 0 {
        return f64::INFINITY;
    }
    if alpha.len() == 1 {
        if let Some(v) = convergent_floor(alpha[0], kcut) {
            return v;
        }
    }
    half_ball(alpha.len(), kcut)
        .par_iter()
        .map(|k| chord(dot(k, alpha)))
        .reduce(|| f64::INFINITY, f64::min)
}

/// Floor through double-precision convergents of α; None if the expansion degenerates.
fn convergent_floor(alpha: f64, kcut: i64) -> Option<f64> {
    let mut x = alpha - alpha.floor();
    let (mut qm2, mut qm1) = (0i64, 1i64);
    let mut best = chord(alpha);
    for _ in 0..64 {
        if x < 1e-300 {
            return None;
        }
        let r = 1.0 / x;
        let a = r.floor();
        if a > 1e15 {
            return None;
        }
        let qn = (a as i64).checked_mul(qm1)?.checked_add(qm2)?;
        if qn > kcut {
            return Some(best);
        }
        best = best.min(chord(qn as f64 * alpha));
        qm2 = qm1;
        qm1 = qn;
        x = r - a;
    }
    None
}

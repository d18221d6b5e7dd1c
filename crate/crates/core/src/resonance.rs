//! (N,δ)-resonances of eigenvalue pairs, the ladder block partition of Spec(A), offsets
//! k^(p), mode sets Z_k and the re/nre splitting.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arithmetic::chord;
use crate::linalg::{self, C64, TAU};
use crate::torus_fourier::{dot, l1, Freq, FourierMap, UnitaryConstant};

const PAR_CUTOFF: i64 = 1 << 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResonanceError {
    #[error("resonance uniqueness violated for ({p},{q}): candidates {ks:?} within |k| ≤ {bound}; δ too large for this α and N")]
    Uniqueness { p: usize, q: usize, ks: Vec<Freq>, bound: i64 },
    #[error("no offset for eigenvalue {p} within |k| ≤ {bound}")]
    MissingOffset { p: usize, bound: i64 },
    #[error("invalid ladder: {0}")]
    Ladder(String),
    #[error("ladder loop did not terminate by level n-1")]
    NoLevel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceLadder {
    pub n: usize,
    pub n_order: f64,
    /// N_0..N_n
    pub levels: Vec<f64>,
    pub kappa: f64,
    pub delta: f64,
}

impl ResonanceLadder {
    /// N_j = (κ/(2n+1))^{n-j} N
    pub fn new(n: usize, n_order: f64, kappa: f64, delta: f64) -> Result<Self, ResonanceError> {
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(ResonanceError::Ladder(format!("κ = {kappa} outside (0,1)")));
        }
        if !(n_order > 0.0 && delta > 0.0) || n == 0 {
            return Err(ResonanceError::Ladder("N, δ and n must be positive".into()));
        }
        let r = kappa / (2 * n + 1) as f64;
        let levels = (0..=n).map(|j| r.powi((n - j) as i32) * n_order).collect();
        Ok(ResonanceLadder {
            n,
            n_order,
            levels,
            kappa,
            delta,
        })
    }

    /// Integer scan radius ⌊N_j⌋.
    pub fn cut(&self, j: usize) -> i64 {
        self.levels[j].floor() as i64
    }

    pub fn scaled_cut(&self, j: usize, factor: f64) -> i64 {
        (factor * self.levels[j]).floor() as i64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PairResonance {
    Nonresonant,
    Resonant { k: Freq, value: f64 },
}

impl PairResonance {
    pub fn is_resonant(&self) -> bool {
        matches!(self, PairResonance::Resonant { .. })
    }
}

/// Integer vectors with |k|_1 = r in lexicographic order.
pub fn shell(d: usize, r: i64) -> Vec<Freq> {
    fn rec(i: usize, left: i64, cur: &mut Vec<i64>, out: &mut Vec<Freq>) {
        let d = cur.len();
        if i + 1 == d {
            if left == 0 {
                cur[i] = 0;
                out.push(cur.clone());
            } else {
                cur[i] = -left;
                out.push(cur.clone());
                cur[i] = left;
                out.push(cur.clone());
            }
            cur[i] = 0;
            return;
        }
        for x in -left..=left {
            cur[i] = x;
            rec(i + 1, left - x.abs(), cur, out);
        }
        cur[i] = 0;
    }
    let mut out = Vec::new();
    if d == 0 {
        return out;
    }
    rec(0, r, &mut vec![0; d], &mut out);
    out
}

fn phase(l: C64) -> f64 {
    l.arg() / TAU
}

/// |e^{2πi⟨k,α⟩}λ̃ - λ| via phases.
fn gap(phi: f64, phi_t: f64, k: &[i64], alpha: &[f64]) -> f64 {
    chord(dot(k, alpha) + phi_t - phi)
}

/// Distance of x to the nearest integer; chord(x) = 2 sin(π·dist(x)).
fn frac_dist(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// d = 1 scan of (dist, k) over 0 < |k| ≤ N without allocation; first minimizer in (|k|, k) order.
fn min_dist_1d(c0: f64, a: f64, n_order: i64) -> Option<(f64, i64)> {
    let best = |lo: i64, hi: i64| {
        let mut b: Option<(f64, i64)> = None;
        for r in lo..=hi {
            for x in [-r, r] {
                let v = frac_dist(c0 + x as f64 * a);
                if b.is_none_or(|b| v < b.0) {
                    b = Some((v, x));
                }
            }
        }
        b
    };
    if n_order < 1 {
        return None;
    }
    let chunk = PAR_CUTOFF;
    let chunks = (n_order + chunk - 1) / chunk;
    (0..chunks)
        .into_par_iter()
        .filter_map(|i| best(1 + i * chunk, ((i + 1) * chunk).min(n_order)))
        .min_by(|x, y| x.0.total_cmp(&y.0).then_with(|| (x.1.abs(), x.1).cmp(&(y.1.abs(), y.1))))
}

/// First k in (|k|, k) order with 0 < |k| ≤ N and |e^{2πi⟨k,α⟩}λ̃ - λ| < δ.
pub fn is_resonant_pair(lam: C64, lam_t: C64, alpha: &[f64], n_order: i64, delta: f64) -> PairResonance {
    let (phi, phi_t) = (phase(lam), phase(lam_t));
    if alpha.len() == 1 && n_order > PAR_CUTOFF {
        return (1..=n_order)
            .into_par_iter()
            .find_map_first(|r| {
                [-r, r].into_iter().find_map(|x| {
                    let v = gap(phi, phi_t, &[x], alpha);
                    (v < delta).then(|| PairResonance::Resonant { k: vec![x], value: v })
                })
            })
            .unwrap_or(PairResonance::Nonresonant);
    }
    for r in 1..=n_order {
        for k in shell(alpha.len(), r) {
            let v = gap(phi, phi_t, &k, alpha);
            if v < delta {
                return PairResonance::Resonant { k, value: v };
            }
        }
    }
    PairResonance::Nonresonant
}

/// min over 0 < |k| ≤ N of |e^{2πi⟨k,α⟩}λ̃ - λ| with its first minimizer; None when N = 0.
pub fn min_gap(lam: C64, lam_t: C64, alpha: &[f64], n_order: i64) -> Option<(f64, Freq)> {
    let (phi, phi_t) = (phase(lam), phase(lam_t));
    if alpha.len() == 1 {
        return min_dist_1d(phi_t - phi, alpha[0], n_order).map(|(_, x)| (gap(phi, phi_t, &[x], alpha), vec![x]));
    }
    (1..=n_order)
        .into_par_iter()
        .flat_map_iter(|r| shell(alpha.len(), r).into_iter().map(move |k| (gap(phi, phi_t, &k, alpha), k)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| (l1(&a.1), &a.1).cmp(&(l1(&b.1), &b.1))))
}

/// All k with |k| ≤ N (k = 0 included) and |e^{2πi⟨k,α⟩}λ̃ - λ| < δ, in (|k|, k) order.
pub fn resonant_ks(lam: C64, lam_t: C64, alpha: &[f64], n_order: i64, delta: f64) -> Vec<Freq> {
    let (phi, phi_t) = (phase(lam), phase(lam_t));
    if alpha.len() == 1 {
        // Prefilter on the distance to Z, then confirm with the chord.
        let cut = (delta / 2.0).min(1.0).asin() / std::f64::consts::PI + 1e-12;
        let c0 = phi_t - phi;
        return std::iter::once(0)
            .chain((1..=n_order).flat_map(|r| [-r, r]))
            .filter(|&x| frac_dist(c0 + x as f64 * alpha[0]) < cut)
            .map(|x| vec![x])
            .filter(|k| gap(phi, phi_t, k, alpha) < delta)
            .collect();
    }
    (0..=n_order)
        .into_par_iter()
        .flat_map_iter(|r| {
            shell(alpha.len(), r)
                .into_iter()
                .filter(move |k| gap(phi, phi_t, k, alpha) < delta)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonancePartition {
    /// 0-based index sets, each sorted, ordered by smallest element.
    pub blocks: Vec<Vec<usize>>,
    pub level_j: usize,
    /// Smallest index of each block.
    pub representatives: Vec<usize>,
    pub offsets: Vec<Freq>,
}

impl ResonancePartition {
    pub fn block_of(&self) -> Vec<usize> {
        let n = self.offsets.len();
        let mut out = vec![0; n];
        for (t, b) in self.blocks.iter().enumerate() {
            for &p in b {
                out[p] = t;
            }
        }
        out
    }

    pub fn is_trivial(&self) -> bool {
        self.offsets.iter().all(|k| k.iter().all(|x| *x == 0))
    }
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut y = x;
    while parent[y] != r {
        let next = parent[y];
        parent[y] = r;
        y = next;
    }
    r
}

fn components(lam: &[C64], alpha: &[f64], cut: i64, delta: f64) -> Vec<Vec<usize>> {
    let n = lam.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for p in 0..n {
        for q in p + 1..n {
            let linked = (lam[p] - lam[q]).norm() < delta || is_resonant_pair(lam[p], lam[q], alpha, cut, delta).is_resonant();
            if linked {
                let (a, b) = (find(&mut parent, p), find(&mut parent, q));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for p in 0..n {
        let r = find(&mut parent, p);
        groups.entry(r).or_default().push(p);
    }
    groups.into_values().collect()
}

/// Ladder loop over N_0 < N_1 < …, then offsets by the uniqueness of the
/// (2nN, 2nδ)-resonance. Components also link pairs with |λ_p - λ_q| < δ (k = 0), so
/// equal eigenvalues share a block and no k = 0 divisor on the nre space vanishes.
pub fn partition_spectrum(a: &UnitaryConstant, alpha: &[f64], ladder: &ResonanceLadder) -> Result<ResonancePartition, ResonanceError> {
    let lam = &a.eigenvalues;
    let n = lam.len();
    if n != ladder.n {
        return Err(ResonanceError::Ladder(format!("ladder built for n = {}, A has n = {n}", ladder.n)));
    }
    let delta = ladder.delta;
    let mut chosen = None;
    for j in 0..n {
        let comps = components(lam, alpha, ladder.cut(j), delta);
        let next = ladder.cut(j + 1);
        let separated = comps.iter().enumerate().all(|(s, bs)| {
            comps[s + 1..].iter().all(|bt| {
                bs.iter()
                    .all(|&p| bt.iter().all(|&q| !is_resonant_pair(lam[p], lam[q], alpha, next, delta).is_resonant()))
            })
        });
        if separated {
            chosen = Some((j, comps));
            break;
        }
    }
    let (j, blocks) = chosen.ok_or(ResonanceError::NoLevel)?;
    let wide = 2 * n as i64 * ladder.n_order.floor() as i64;
    let inner = ladder.scaled_cut(j, n as f64);
    let mut offsets = vec![vec![0i64; alpha.len()]; n];
    for b in &blocks {
        let rep = b[0];
        for &p in &b[1..] {
            let ks = resonant_ks(lam[p], lam[rep], alpha, wide, 2.0 * n as f64 * delta);
            if ks.len() > 1 {
                return Err(ResonanceError::Uniqueness { p, q: rep, ks, bound: wide });
            }
            let k = ks.into_iter().next().ok_or(ResonanceError::MissingOffset { p, bound: wide })?;
            let phi = (phase(lam[p]), phase(lam[rep]));
            if l1(&k) > inner || gap(phi.0, phi.1, &k, alpha) >= n as f64 * delta {
                return Err(ResonanceError::MissingOffset { p, bound: inner });
            }
            offsets[p] = k;
        }
    }
    Ok(ResonancePartition {
        representatives: blocks.iter().map(|b| b[0]).collect(),
        blocks,
        level_j: j,
        offsets,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSplit {
    /// k ↦ 0-based entry pairs (p,q) with k = k^(p) - k^(q), p,q in one block.
    pub zk: BTreeMap<Freq, Vec<(usize, usize)>>,
    /// ⌊nN_j⌋
    pub inner: i64,
    /// ⌊N_{j+1}⌋
    pub bound: i64,
}

impl ModeSplit {
    pub fn contains(&self, k: &[i64], p: usize, q: usize) -> bool {
        self.zk.get(k).is_some_and(|v| v.contains(&(p, q)))
    }
}

pub fn build_mode_split(part: &ResonancePartition, ladder: &ResonanceLadder) -> ModeSplit {
    let mut zk: BTreeMap<Freq, Vec<(usize, usize)>> = BTreeMap::new();
    for b in &part.blocks {
        for &p in b {
            for &q in b {
                let k: Freq = part.offsets[p].iter().zip(&part.offsets[q]).map(|(x, y)| x - y).collect();
                zk.entry(k).or_default().push((p, q));
            }
        }
    }
    for v in zk.values_mut() {
        v.sort_unstable();
    }
    ModeSplit {
        zk,
        inner: ladder.scaled_cut(part.level_j, ladder.n as f64),
        bound: ladder.cut(part.level_j + 1),
    }
}

/// (X_re, X_nre) with X_re + X_nre = X; modes beyond N_{j+1} go to X_re.
pub fn split_re_nre(x: &FourierMap, split: &ModeSplit) -> (FourierMap, FourierMap) {
    let (d, n) = (x.dim_d(), x.dim_n());
    let mut re = FourierMap::zero(d, n).with_skew(x.is_skew());
    let mut nre = FourierMap::zero(d, n).with_skew(x.is_skew());
    for (k, m) in x.iter() {
        let r = l1(k);
        if r > split.bound {
            re.insert(k.clone(), m.clone());
        } else if r > split.inner {
            nre.insert(k.clone(), m.clone());
        } else {
            let mut a = linalg::zeros(n);
            let mut b = linalg::zeros(n);
            for p in 0..n {
                for q in 0..n {
                    if split.contains(k, p, q) {
                        a[(p, q)] = m[(p, q)];
                    } else {
                        b[(p, q)] = m[(p, q)];
                    }
                }
            }
            if a.iter().any(|z| *z != C64::new(0.0, 0.0)) {
                re.insert(k.clone(), a);
            }
            if b.iter().any(|z| *z != C64::new(0.0, 0.0)) {
                nre.insert(k.clone(), b);
            }
        }
    }
    (re, nre)
}

/// Divisor λ̄_p(λ_p - λ_q e^{2πi⟨k,α⟩}) of entry (p,q) at mode k.
pub fn divisor(lam: &[C64], p: usize, q: usize, k: &[i64], alpha: &[f64]) -> C64 {
    lam[p].conj() * (lam[p] - lam[q] * linalg::cis(dot(k, alpha)))
}

/// X - A^{-1} X(·+α) A for A = diag(λ).
pub fn homological_op(x: &FourierMap, lam: &[C64], alpha: &[f64]) -> FourierMap {
    let n = x.dim_n();
    let mut out = FourierMap::zero(x.dim_d(), n).with_skew(x.is_skew());
    for (k, m) in x.iter() {
        let mut r = m.clone();
        for p in 0..n {
            for q in 0..n {
                r[(p, q)] *= divisor(lam, p, q, k, alpha);
            }
        }
        out.insert(k.clone(), r);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arithmetic::{dc_floor, full_ball};
    use crate::linalg::{c, cis};
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    const GOLDEN: f64 = 0.618_033_988_749_894_8;

    fn brute_first(lam: C64, lam_t: C64, alpha: &[f64], n: i64, delta: f64) -> Option<Freq> {
        full_ball(alpha.len(), n)
            .into_iter()
            .filter(|k| l1(k) > 0)
            .find(|k| (cis(dot(k, alpha)) * lam_t - lam).norm() < delta)
    }

    /// Exhaustive post-hoc check of the partition invariants.
    fn check_partition(part: &ResonancePartition, lam: &[C64], alpha: &[f64], ladder: &ResonanceLadder) {
        let n = lam.len();
        let mut seen = vec![false; n];
        for b in &part.blocks {
            for &p in b {
                assert!(!seen[p]);
                seen[p] = true;
            }
        }
        assert!(seen.into_iter().all(|s| s));
        for &r in &part.representatives {
            assert!(part.offsets[r].iter().all(|x| *x == 0));
        }
        let inner = ladder.scaled_cut(part.level_j, n as f64);
        let delta = ladder.delta;
        let owner = part.block_of();
        let next = ladder.cut(part.level_j + 1);
        let ball = full_ball(alpha.len(), next);
        for p in 0..n {
            assert!(l1(&part.offsets[p]) <= inner);
            for q in 0..n {
                if owner[p] == owner[q] {
                    let k: Freq = part.offsets[p].iter().zip(&part.offsets[q]).map(|(x, y)| x - y).collect();
                    assert!((lam[p] - lam[q] * cis(dot(&k, alpha))).norm() < 2.0 * n as f64 * delta);
                } else {
                    for k in ball.iter() {
                        assert!((lam[p] - lam[q] * cis(dot(k, alpha))).norm() >= delta);
                    }
                }
            }
        }
    }

    #[test]
    fn pair_examples() {
        let one = c(1.0, 0.0);
        let floor = dc_floor(&[GOLDEN], 50);
        assert_eq!(is_resonant_pair(one, one, &[GOLDEN], 50, floor * 0.5), PairResonance::Nonresonant);
        let lam = cis(7.0 * GOLDEN);
        match is_resonant_pair(lam, one, &[GOLDEN], 50, 1e-6) {
            PairResonance::Resonant { k, .. } => assert_eq!(k, vec![7]),
            r => panic!("{r:?}"),
        }
        assert_eq!(is_resonant_pair(lam, one, &[GOLDEN], 0, 1.0), PairResonance::Nonresonant);
    }

    #[test]
    fn shells_cover_ball_in_order() {
        for d in 1..=3 {
            let mut all = Vec::new();
            for r in 0..=4 {
                let s = shell(d, r);
                let mut sorted = s.clone();
                sorted.sort();
                assert_eq!(s, sorted);
                all.extend(s);
            }
            assert_eq!(all, full_ball(d, 4));
        }
    }

    #[test]
    fn ladder_is_increasing() {
        let l = ResonanceLadder::new(3, 1000.0, 0.5, 1e-3).unwrap();
        assert!(l.levels.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(l.levels[3], 1000.0);
        assert!(ResonanceLadder::new(2, 10.0, 1.5, 0.1).is_err());
    }

    #[test]
    fn partition_examples() {
        let alpha = [GOLDEN];
        let ladder1 = ResonanceLadder::new(1, 200.0, 0.5, 1e-4).unwrap();
        let p1 = partition_spectrum(&UnitaryConstant::from_phases(&[0.3]), &alpha, &ladder1).unwrap();
        assert_eq!((p1.blocks.clone(), p1.level_j, p1.offsets.clone()), (vec![vec![0]], 0, vec![vec![0]]));

        let ladder3 = ResonanceLadder::new(3, 2000.0, 0.5, dc_floor(&alpha, 4 * 3 * 2000) / 24.0).unwrap();
        let p3 = partition_spectrum(&UnitaryConstant::from_phases(&[0.0; 3]), &alpha, &ladder3).unwrap();
        assert_eq!(p3.blocks, vec![vec![0, 1, 2]]);
        assert!(p3.is_trivial());
        let spread = partition_spectrum(&UnitaryConstant::from_phases(&[0.0, 0.2, -0.3]), &alpha, &ladder3).unwrap();
        assert_eq!(spread.blocks, vec![vec![0], vec![1], vec![2]]);

        let ladder2 = ResonanceLadder::new(2, 1000.0, 0.5, 1e-6).unwrap();
        let k0 = 3;
        assert!(k0 as f64 <= ladder2.levels[0]);
        let a = UnitaryConstant::from_phases(&[0.0, k0 as f64 * GOLDEN]);
        let p = partition_spectrum(&a, &alpha, &ladder2).unwrap();
        assert_eq!(p.blocks, vec![vec![0, 1]]);
        assert_eq!(p.offsets, vec![vec![0], vec![k0]]);
        check_partition(&p, &a.eigenvalues, &alpha, &ladder2);
        let split = build_mode_split(&p, &ladder2);
        assert_eq!(split.zk[&vec![-k0]], vec![(0, 1)]);
        assert_eq!(split.zk[&vec![k0]], vec![(1, 0)]);
        assert_eq!(split.zk[&vec![0]], vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn uniqueness_violation_is_reported() {
        let ladder = ResonanceLadder::new(2, 1000.0, 0.5, 0.3).unwrap();
        let a = UnitaryConstant::from_phases(&[0.0, 0.01]);
        assert!(matches!(
            partition_spectrum(&a, &[GOLDEN], &ladder),
            Err(ResonanceError::Uniqueness { .. })
        ));
    }

    #[test]
    fn split_examples() {
        let ladder = ResonanceLadder::new(1, 200.0, 0.5, 1e-4).unwrap();
        let p = partition_spectrum(&UnitaryConstant::from_phases(&[0.1]), &[GOLDEN], &ladder).unwrap();
        let split = build_mode_split(&p, &ladder);
        assert_eq!(split.zk.len(), 1);
        assert_eq!(split.zk[&vec![0]], vec![(0, 0)]);
        let tail = FourierMap::single(vec![split.bound + 1], Mat1::from_element(1, 1, c(0.0, 1.0)), true);
        let (re, nre) = split_re_nre(&tail, &split);
        assert!(nre.is_empty() && re == tail);
        let dconst = FourierMap::constant(1, Mat1::from_element(1, 1, c(0.0, 0.2))).with_skew(true);
        let (re, nre) = split_re_nre(&dconst, &split);
        assert!(nre.is_empty() && re == dconst);
    }

    type Mat1 = crate::linalg::Mat;

    fn random_partition_case(seed: u64) -> (UnitaryConstant, ResonanceLadder) {
        let mut r = rng::stream(seed, 0);
        let n = r.random_range(1..=4usize);
        let nn = r.random_range(20.0..200.0);
        let ladder = ResonanceLadder::new(n, nn, 0.5, 10f64.powf(r.random_range(-6.0..-3.0))).unwrap();
        let mut phases: Vec<f64> = (0..n).map(|_| r.random_range(-0.5..0.5)).collect();
        // Plant exact resonances on some pairs.
        for p in 1..n {
            if r.random_bool(0.5) {
                let k = r.random_range(-3..=3i64);
                phases[p] = phases[0] + k as f64 * GOLDEN;
            }
        }
        (UnitaryConstant::from_phases(&phases), ladder)
    }

    fn random_skew_map(n: usize, kmax: i64, seed: u64) -> FourierMap {
        let mut r = rng::stream(seed, 1);
        let mut x = FourierMap::zero(1, n);
        for k in 0..=kmax {
            let m = linalg::random_skew(n, &mut r) * c(0.1, 0.0);
            if k == 0 {
                x.add_coeff(vec![0], &crate::linalg::skew_part(&m));
            } else {
                let z = linalg::random_skew(n, &mut r) * c(0.0, 0.1) + m;
                x.add_coeff(vec![k], &z);
                x.add_coeff(vec![-k], &(-z.adjoint()));
            }
        }
        x
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn pair_scan_matches_brute_force(a in -0.5f64..0.5, b in -0.5f64..0.5, n in 0i64..40, lg in -4.0f64..-0.5) {
            let delta = 10f64.powf(lg);
            let r = is_resonant_pair(cis(a), cis(b), &[GOLDEN], n, delta);
            let brute = brute_first(cis(a), cis(b), &[GOLDEN], n, delta);
            match (r, brute) {
                (PairResonance::Nonresonant, None) => {}
                (PairResonance::Resonant { k, .. }, Some(kb)) => prop_assert_eq!(k, kb),
                (x, y) => prop_assert!(false, "{:?} vs {:?}", x, y),
            }
        }

        #[test]
        fn parallel_pair_scan_matches_serial(a in -0.5f64..0.5, b in -0.5f64..0.5, lg in -5.5f64..-4.0) {
            let delta = 10f64.powf(lg);
            let n = PAR_CUTOFF + 5000;
            let fast = is_resonant_pair(cis(a), cis(b), &[GOLDEN], n, delta);
            let (phi, phi_t) = (phase(cis(a)), phase(cis(b)));
            let slow = (1..=n).flat_map(|r| [-r, r]).find(|x| gap(phi, phi_t, &[*x], &[GOLDEN]) < delta);
            prop_assert_eq!(fast.is_resonant(), slow.is_some());
            if let (PairResonance::Resonant { k, .. }, Some(x)) = (fast, slow) {
                prop_assert_eq!(k, vec![x]);
            }
            let (m, k) = min_gap(cis(a), cis(b), &[GOLDEN], 300).unwrap();
            let brute = (1..=300i64).flat_map(|r| [-r, r]).map(|x| gap(phi, phi_t, &[x], &[GOLDEN])).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(m, brute);
            prop_assert_eq!(gap(phi, phi_t, &k, &[GOLDEN]), m);
        }

        #[test]
        fn partitions_satisfy_invariants(seed in 0u64..10_000) {
            let (a, ladder) = random_partition_case(seed);
            match partition_spectrum(&a, &[GOLDEN], &ladder) {
                Ok(p) => {
                    check_partition(&p, &a.eigenvalues, &[GOLDEN], &ladder);
                    let split = build_mode_split(&p, &ladder);
                    let mut pairs = std::collections::BTreeSet::new();
                    for (k, v) in &split.zk {
                        let neg: Freq = k.iter().map(|x| -x).collect();
                        for &(p, q) in v {
                            prop_assert!(split.contains(&neg, q, p));
                            prop_assert!(pairs.insert((p, q)));
                            if k.iter().all(|x| *x == 0) && p != q {
                                let gap = (a.eigenvalues[p] - a.eigenvalues[q]).norm();
                                prop_assert!(gap < 2.0 * a.n() as f64 * ladder.delta);
                            }
                        }
                    }
                    prop_assert!(split.zk.len() <= a.n() * a.n());
                }
                Err(ResonanceError::Uniqueness { .. }) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn split_is_exact_projection(seed in 0u64..10_000) {
            let (a, ladder) = random_partition_case(seed);
            if let Ok(p) = partition_spectrum(&a, &[GOLDEN], &ladder) {
                let split = build_mode_split(&p, &ladder);
                let x = random_skew_map(a.n(), split.bound + 3, seed);
                let (re, nre) = split_re_nre(&x, &split);
                prop_assert_eq!(re.add(&nre), x.clone());
                prop_assert!(re.is_skew() && nre.is_skew());
                prop_assert!(re.skew_defect() == 0.0 && nre.skew_defect() == 0.0);
                let (re2, nre2) = split_re_nre(&re, &split);
                prop_assert!(nre2.is_empty());
                prop_assert_eq!(re2, re);
                let (re3, nre3) = split_re_nre(&nre, &split);
                prop_assert!(re3.is_empty());
                prop_assert_eq!(nre3, nre);
            }
        }

        #[test]
        fn nre_lower_bound(seed in 0u64..10_000, h in 0.0f64..0.3) {
            let (a, ladder) = random_partition_case(seed);
            if let Ok(p) = partition_spectrum(&a, &[GOLDEN], &ladder) {
                let split = build_mode_split(&p, &ladder);
                let x = random_skew_map(a.n(), split.bound, seed);
                let (_, nre) = split_re_nre(&x, &split);
                let ax = homological_op(&nre, &a.eigenvalues, &[GOLDEN]);
                let (_, ax_nre) = split_re_nre(&ax, &split);
                prop_assert_eq!(ax_nre.len(), ax.len());
                prop_assert!(ax.wiener_norm(h) >= ladder.delta * nre.wiener_norm(h));
            }
        }
    }
}

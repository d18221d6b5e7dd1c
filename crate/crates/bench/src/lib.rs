//! Fixtures shared by the kernel benches.

use qpcocycle::linalg;
use qpcocycle::rng;
use qpcocycle::torus_fourier::FourierMap;

/// Skew-Hermitian map on T^1 with modes |k| ≤ kmax decaying like e^{-|k|/8}.
pub fn random_skew_map(n: usize, kmax: i64, seed: u64) -> FourierMap {
    let mut r = rng::stream(seed, 0);
    let mut f = FourierMap::zero(1, n);
    for k in -kmax..=kmax {
        f.add_coeff(vec![k], &linalg::random_skew(n, &mut r).scale((-(k.abs() as f64) / 8.0).exp()));
    }
    f.project_skew()
}

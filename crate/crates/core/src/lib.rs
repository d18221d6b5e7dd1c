pub mod linalg;
pub mod torus_fourier;
pub mod arithmetic;
pub mod nondegeneracy;
pub mod resonance;
pub mod rng;
pub mod kam_engine;
pub mod gevrey_approx;
pub mod renormalization;

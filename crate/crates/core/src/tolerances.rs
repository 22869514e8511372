//! Numerical tolerances and limits shared by every module.

use std::sync::OnceLock;

/// Default bound on any composite Hilbert-space dimension.
pub const DEFAULT_MAX_DIM: usize = 1 << 20;

/// Environment variable that overrides [`DEFAULT_MAX_DIM`].
pub const MAX_DIM_ENV: &str = "SCRAMBLE_MAX_DIM";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Max |h - h†| accepted as Hermitian (scaled by the largest entry).
    pub hermitian: f64,
    /// Max |U†U - I| accepted as unitary.
    pub unitary: f64,
    /// Max |<k|k> - 1| accepted for a ket.
    pub normalization: f64,
    /// Density-matrix checks (trace and smallest eigenvalue).
    pub density: f64,
    /// |F(t, I, B)| below this makes the corrected F-OTOC divergent.
    pub divergence: f64,
    /// Bath eigen-weights at or below this are dropped from the dilation.
    pub bath_weight: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    hermitian: 1e-9,
    unitary: 1e-9,
    normalization: 1e-10,
    density: 1e-9,
    divergence: 1e-9,
    bath_weight: 1e-15,
};

/// Current dimension limit: `SCRAMBLE_MAX_DIM` if set and valid, otherwise
/// [`DEFAULT_MAX_DIM`]. Read once per process.
pub fn max_dim() -> usize {
    static LIMIT: OnceLock<usize> = OnceLock::new();
    *LIMIT.get_or_init(|| {
        std::env::var(MAX_DIM_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&v| v > 0)
            .unwrap_or(DEFAULT_MAX_DIM)
    })
}

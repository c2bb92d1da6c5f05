//! Constellations, the noise model, channel generators and prompt sampling.

pub mod bessel;
pub mod constellation;
pub mod noise;
pub mod prompt;
pub mod scenario;

use nalgebra::{DMatrix, DVector, Vector2};
use num_complex::Complex64;

pub use bessel::bessel_j0;
pub use constellation::{Constellation, ConstellationKind};
pub use noise::{sigma2_from_snr_db, NoiseSpec};
pub use prompt::{sample_prompt, sample_prompt_on_channel, Prompt, PromptRecord};
pub use scenario::{
    draw_channel_scenario1, draw_channel_scenario2, los_channel, ChannelRealization, ClarkeConstants, ClarkeModel,
    LatentPrior, ScenarioConfig, ScenarioKind,
};

/// Real lift of a complex channel vector: `H = [[Re h̃, -Im h̃], [Im h̃, Re h̃]]` (2d × 2).
pub fn lift_complex_vector(h: &[Complex64]) -> DMatrix<f64> {
    let d = h.len();
    let mut out = DMatrix::zeros(2 * d, 2);
    for (j, v) in h.iter().enumerate() {
        out[(j, 0)] = v.re;
        out[(j, 1)] = -v.im;
        out[(d + j, 0)] = v.im;
        out[(d + j, 1)] = v.re;
    }
    out
}

/// `[Re h̃; Im h̃]`.
pub fn real_vector(h: &[Complex64]) -> DVector<f64> {
    let d = h.len();
    DVector::from_fn(2 * d, |r, _| if r < d { h[r].re } else { h[r - d].im })
}

/// Inverse of [`real_vector`]: first half real parts, second half imaginary parts.
pub fn complex_from_real(v: &DVector<f64>) -> Vec<Complex64> {
    let d = v.len() / 2;
    (0..d).map(|j| Complex64::new(v[j], v[d + j])).collect()
}

/// `M^d(x) = [[x_I, -x_Q], [x_Q, x_I]] ⊗ I_d`, so that `M^d(x) [Re h̃; Im h̃]`
/// is the real lift of `h̃ x̃`.
pub fn embed_symbol_matrix(x: &Vector2<f64>, d: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(2 * d, 2 * d);
    for j in 0..d {
        out[(j, j)] = x[0];
        out[(j, d + j)] = -x[1];
        out[(d + j, j)] = x[1];
        out[(d + j, d + j)] = x[0];
    }
    out
}

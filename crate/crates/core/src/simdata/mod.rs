//! Synthetic scenes: endmember spectra, abundance fields, forward mixing
//! models and calibrated noise.

mod abundance;
mod endmembers;
mod mixing;
mod scene;
mod types;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use abundance::{sample_dirichlet_abundances, sample_grf_abundances};
pub use endmembers::{min_pairwise_angle, synth_endmembers, MIN_ENDMEMBER_ANGLE};
pub use mixing::{add_noise_snr, blmm_mix, empirical_snr_db, lmm_mix, lmm_mix_naive, pnmm_mix};
pub use scene::{
    generate_scene, sub_seed, AbundanceSampler, MixingModel, PixelLayout, Preset, Scene, SceneSpec, DEFAULT_BANDS,
    DEFAULT_CORR_LEN, DEFAULT_ENDMEMBERS, DEFAULT_SNR_DB,
};
pub use types::{AbundanceMatrix, EndmemberMatrix, HsiCube, Provenance, SIMPLEX_TOL};

/// Deterministic generator for one seed and stream.
pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

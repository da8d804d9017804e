//! The committed random-weight models and image pairs under `fixtures/`.

use sisal_core::GraphSpec;

use crate::gen::trial_rng;
use crate::models::random_representative;

/// Seed of the 8x8 random-weight model.
pub const FIXTURE_SEED: u64 = 4;
/// Seed of the 4x4 toy model.
pub const TOY_SEED: u64 = 7;
/// Dense-weight scale of the random-weight models.
pub const CAM_SCALE: f64 = 1.0;

/// The 8x8 random-weight model used by the simulations.
pub fn fixture_model() -> GraphSpec {
    random_representative(&mut trial_rng(FIXTURE_SEED, 0), 8, CAM_SCALE)
}

/// The 4x4 model used for the small end-to-end fixtures.
pub fn toy_model() -> GraphSpec {
    random_representative(&mut trial_rng(TOY_SEED, 0), 4, CAM_SCALE)
}

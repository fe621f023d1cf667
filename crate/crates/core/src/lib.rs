//! ASPECTS scoring and evaluation for voxel mask volumes.
//!
//! Given a binary infarct mask and a 20-label anatomy map (ten regions per
//! hemisphere), this crate computes the 10-point ASPECT score with its
//! involvement details, the infarct volume, and the clinical bin. Around
//! that sit segmentation metrics (Dice, confusion rates, score-agreement
//! statistics), reference implementations of a focal + boundary + Dice
//! training loss with analytic gradients, deterministic phantom volumes for
//! end-to-end checks, and readers/writers for the on-disk volume, report,
//! and score-table formats.

pub mod error;
pub mod grid;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod phantom;
pub mod region;
pub mod report;
pub mod scoring;

pub use error::{Error, Result};
pub use grid::{BinaryMask, Dims, ProbabilityField, Spacing, VoxelGrid};
pub use region::{
    decode_label, encode_label, AnatomyLabelMap, Hemisphere, Level, Region, MAX_LABEL,
};
pub use report::{
    AspectsReport, ClinicalBin, HemisphereReport, ScorePair, ScorePairTable,
    REPORT_SCHEMA_VERSION,
};
pub use scoring::{
    bin_score, infarct_volume_ml, score, volume_ml_from_count, InvolvementPolicy, VolumeBucket,
};

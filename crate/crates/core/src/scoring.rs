//! Turning an infarct mask plus an anatomy label map into a score.
//!
//! Each hemisphere starts at 10 and loses one point per involved region.
//! A region counts as involved when the infarct overlap passes either leg
//! of the [`InvolvementPolicy`]; the affected side is the one with the
//! lower score, ties going to the left.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_same_geometry, BinaryMask, Spacing};
use crate::region::{decode_label, AnatomyLabelMap, Hemisphere, Region, RegionVoxelCounts};
use crate::report::{AspectsReport, ClinicalBin, HemisphereReport, REPORT_SCHEMA_VERSION};

/// Decides when a region's infarct overlap is large enough to deduct a point.
///
/// A region is involved when it overlaps the infarct at all *and* the overlap
/// reaches `min_overlap_voxels` voxels or `min_overlap_fraction` of the
/// region's own size — whichever triggers first. The absolute leg keeps tiny
/// regions sensitive, the relative leg keeps huge regions from needing an
/// outsized hit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy")]
pub struct InvolvementPolicy {
    min_overlap_voxels: u64,
    min_overlap_fraction: f64,
}

#[derive(Deserialize)]
struct RawPolicy {
    min_overlap_voxels: u64,
    min_overlap_fraction: f64,
}

impl TryFrom<RawPolicy> for InvolvementPolicy {
    type Error = Error;

    fn try_from(raw: RawPolicy) -> Result<Self> {
        InvolvementPolicy::new(raw.min_overlap_voxels, raw.min_overlap_fraction)
    }
}

impl Default for InvolvementPolicy {
    /// 10 voxels or 1% of the region, whichever comes first.
    fn default() -> Self {
        InvolvementPolicy {
            min_overlap_voxels: 10,
            min_overlap_fraction: 0.01,
        }
    }
}

impl InvolvementPolicy {
    /// Builds a policy; the voxel threshold must be positive and the
    /// fraction within `[0, 1]`.
    pub fn new(min_overlap_voxels: u64, min_overlap_fraction: f64) -> Result<Self> {
        if min_overlap_voxels == 0 {
            return Err(Error::domain(
                "min_overlap_voxels must be a positive integer",
            ));
        }
        if !(0.0..=1.0).contains(&min_overlap_fraction) {
            return Err(Error::domain(format!(
                "min_overlap_fraction must lie in [0, 1], got {min_overlap_fraction}"
            )));
        }
        Ok(InvolvementPolicy {
            min_overlap_voxels,
            min_overlap_fraction,
        })
    }

    pub fn min_overlap_voxels(&self) -> u64 {
        self.min_overlap_voxels
    }

    pub fn min_overlap_fraction(&self) -> f64 {
        self.min_overlap_fraction
    }

    pub(crate) fn validate(&self) -> Result<()> {
        InvolvementPolicy::new(self.min_overlap_voxels, self.min_overlap_fraction).map(|_| ())
    }

    /// The involvement test itself. A region with zero overlap (or zero
    /// size) is never involved, whatever the thresholds say.
    pub fn is_involved(&self, overlap_voxels: u64, region_size: u64) -> bool {
        if overlap_voxels == 0 || region_size == 0 {
            return false;
        }
        overlap_voxels >= self.min_overlap_voxels
            || (overlap_voxels as f64 / region_size as f64) >= self.min_overlap_fraction
    }
}

/// Counts infarct voxels falling inside each labelled region.
///
/// Both volumes must agree on dimensions and voxel spacing.
pub fn overlap_counts(
    infarct: &BinaryMask,
    anatomy: &AnatomyLabelMap,
) -> Result<RegionVoxelCounts> {
    check_same_geometry("overlap_counts", infarct.grid(), anatomy.grid())?;
    let mut counts = RegionVoxelCounts::default();
    for (&m, &label) in infarct.data().iter().zip(anatomy.data()) {
        if m == 1 && label > 0 {
            let (h, r) = decode_label(label).expect("validated label");
            counts.add(h, r, 1);
        }
    }
    Ok(counts)
}

/// Millilitres represented by `count` voxels at the given spacing.
///
/// One voxel is `sx * sy * sz` cubic millimetres; dividing by 1000 converts
/// to ml. Kept as a single function so every volume figure in the crate is
/// computed with the exact same floating-point steps.
pub fn volume_ml_from_count(count: u64, spacing: Spacing) -> f64 {
    count as f64 * spacing.voxel_volume_mm3() / 1000.0
}

/// Total infarct volume in millilitres.
pub fn infarct_volume_ml(infarct: &BinaryMask) -> f64 {
    volume_ml_from_count(infarct.count_set(), infarct.spacing())
}

/// Lesion-size strata used when reporting segmentation quality by burden.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeBucket {
    Under3Ml,
    From3To16Ml,
    From16To66Ml,
    Over66Ml,
}

impl VolumeBucket {
    pub const ALL: [VolumeBucket; 4] = [
        VolumeBucket::Under3Ml,
        VolumeBucket::From3To16Ml,
        VolumeBucket::From16To66Ml,
        VolumeBucket::Over66Ml,
    ];

    /// Row label, e.g. `<3ml`.
    pub fn label(self) -> &'static str {
        match self {
            VolumeBucket::Under3Ml => "<3ml",
            VolumeBucket::From3To16Ml => "3-16ml",
            VolumeBucket::From16To66Ml => "16-66ml",
            VolumeBucket::Over66Ml => ">66ml",
        }
    }
}

/// Buckets a volume. Boundaries are left-closed, right-open: `[0, 3)`,
/// `[3, 16)`, `[16, 66)`, `[66, inf)`. Negative or non-finite input is a
/// domain error.
pub fn classify_volume_bucket(volume_ml: f64) -> Result<VolumeBucket> {
    if !volume_ml.is_finite() || volume_ml < 0.0 {
        return Err(Error::domain(format!(
            "volume must be a non-negative finite number of ml, got {volume_ml}"
        )));
    }
    Ok(if volume_ml < 3.0 {
        VolumeBucket::Under3Ml
    } else if volume_ml < 16.0 {
        VolumeBucket::From3To16Ml
    } else if volume_ml < 66.0 {
        VolumeBucket::From16To66Ml
    } else {
        VolumeBucket::Over66Ml
    })
}

/// Bins a score into its clinical group; scores above 10 are rejected.
pub fn bin_score(score: u8) -> Result<ClinicalBin> {
    ClinicalBin::from_score(score)
}

/// Scores a scan: overlaps, involvement, per-hemisphere scores, infarct
/// volume, affected side and clinical bin, all in one report.
pub fn score(
    infarct: &BinaryMask,
    anatomy: &AnatomyLabelMap,
    policy: InvolvementPolicy,
) -> Result<AspectsReport> {
    policy.validate()?;
    let overlaps = overlap_counts(infarct, anatomy)?;
    let sizes = anatomy.region_sizes();

    let mut reports = [HemisphereReport::untouched(), HemisphereReport::untouched()];
    for (slot, hemisphere) in reports.iter_mut().zip(Hemisphere::ALL) {
        let mut involved = BTreeSet::new();
        let mut overlap_voxels = BTreeMap::new();
        for region in Region::ALL {
            let overlap = overlaps.get(hemisphere, region);
            if overlap > 0 {
                overlap_voxels.insert(region, overlap);
            }
            if policy.is_involved(overlap, sizes.get(hemisphere, region)) {
                involved.insert(region);
            }
        }
        *slot = HemisphereReport {
            score: 10 - involved.len() as u8,
            involved,
            overlap_voxels,
        };
    }
    let [left, right] = reports;

    // ties go to the left so the affected side is deterministic
    let affected_hemisphere = if right.score < left.score {
        Hemisphere::Right
    } else {
        Hemisphere::Left
    };
    let affected_score = match affected_hemisphere {
        Hemisphere::Left => left.score,
        Hemisphere::Right => right.score,
    };

    Ok(AspectsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        left,
        right,
        infarct_volume_ml: infarct_volume_ml(infarct),
        affected_hemisphere,
        bin: ClinicalBin::from_score(affected_score)?,
        policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Dims;

    fn spacing_1mm() -> Spacing {
        Spacing::isotropic(1.0).unwrap()
    }

    #[test]
    fn policy_rejects_bad_ranges() {
        assert!(InvolvementPolicy::new(0, 0.01).is_err());
        assert!(InvolvementPolicy::new(10, -0.1).is_err());
        assert!(InvolvementPolicy::new(10, 1.5).is_err());
        assert!(InvolvementPolicy::new(1, 0.0).is_ok());
        assert!(InvolvementPolicy::new(1, 1.0).is_ok());
    }

    #[test]
    fn policy_legs_combine_with_or() {
        let policy = InvolvementPolicy::default();
        // absolute leg: 10 voxels in a huge region
        assert!(policy.is_involved(10, 1_000_000));
        assert!(!policy.is_involved(9, 1_000_000));
        // relative leg: 5 voxels is 1% of a 500-voxel region
        assert!(policy.is_involved(5, 500));
        assert!(!policy.is_involved(4, 500));
        // zero overlap is never involved, even with a zero fraction threshold
        let lax = InvolvementPolicy::new(1, 0.0).unwrap();
        assert!(!lax.is_involved(0, 500));
        assert!(!lax.is_involved(1, 0));
        assert!(lax.is_involved(1, 500));
    }

    #[test]
    fn volume_of_thousand_half_mm_voxels() {
        // 1000 voxels x (0.5 * 0.5 * 5.0) mm^3 = 1250 mm^3 = 1.25 ml
        let spacing = Spacing::new(0.5, 0.5, 5.0).unwrap();
        let v = volume_ml_from_count(1000, spacing);
        assert!((v - 1.25).abs() <= 1e-12 * 1.25);
    }

    #[test]
    fn empty_mask_has_zero_volume() {
        let mask = BinaryMask::empty(Dims::new(4, 4, 4).unwrap(), spacing_1mm());
        assert_eq!(infarct_volume_ml(&mask), 0.0);
    }

    #[test]
    fn buckets_have_left_closed_boundaries() {
        use VolumeBucket::*;
        let cases = [
            (0.0, Under3Ml),
            (2.999, Under3Ml),
            (3.0, From3To16Ml),
            (15.999, From3To16Ml),
            (16.0, From16To66Ml),
            (65.999, From16To66Ml),
            (66.0, Over66Ml),
            (1000.0, Over66Ml),
        ];
        for (v, bucket) in cases {
            assert_eq!(classify_volume_bucket(v).unwrap(), bucket, "{v} ml");
        }
        assert!(classify_volume_bucket(-0.001).is_err());
        assert!(classify_volume_bucket(f64::NAN).is_err());
    }

    /// 4x1x1 grid: one left-caudate voxel, one right-caudate voxel.
    fn tiny_anatomy() -> AnatomyLabelMap {
        let dims = Dims::new(4, 1, 1).unwrap();
        AnatomyLabelMap::from_parts(dims, spacing_1mm(), vec![1, 0, 0, 11]).unwrap()
    }

    #[test]
    fn overlap_requires_matching_geometry() {
        let anatomy = tiny_anatomy();
        let other_dims = BinaryMask::empty(Dims::new(2, 1, 1).unwrap(), spacing_1mm());
        assert!(matches!(
            overlap_counts(&other_dims, &anatomy),
            Err(Error::Geometry(_))
        ));
        let other_spacing = BinaryMask::empty(
            Dims::new(4, 1, 1).unwrap(),
            Spacing::new(1.0, 1.0, 2.0).unwrap(),
        );
        assert!(matches!(
            overlap_counts(&other_spacing, &anatomy),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn empty_infarct_scores_ten_ten() {
        let anatomy = tiny_anatomy();
        let infarct = BinaryMask::empty(anatomy.dims(), anatomy.spacing());
        let report = score(&infarct, &anatomy, InvolvementPolicy::default()).unwrap();
        assert_eq!(report.left.score, 10);
        assert_eq!(report.right.score, 10);
        assert_eq!(report.affected_hemisphere, Hemisphere::Left);
        assert_eq!(report.bin, ClinicalBin::C);
        assert_eq!(report.infarct_volume_ml, 0.0);
        assert!(report.left.involved.is_empty());
        assert!(report.left.overlap_voxels.is_empty());
        report.validate().unwrap();
    }

    #[test]
    fn single_region_hit_scores_nine_on_that_side() {
        let anatomy = tiny_anatomy();
        // hit the single left-caudate voxel: overlap 1 of size 1 = 100%
        let infarct =
            BinaryMask::from_parts(anatomy.dims(), anatomy.spacing(), vec![1, 0, 0, 0]).unwrap();
        let report = score(&infarct, &anatomy, InvolvementPolicy::default()).unwrap();
        assert_eq!(report.left.score, 9);
        assert_eq!(report.right.score, 10);
        assert_eq!(report.affected_hemisphere, Hemisphere::Left);
        assert!(report.left.involved.contains(&Region::Caudate));
        assert_eq!(report.left.overlap_voxels[&Region::Caudate], 1);
        report.validate().unwrap();
    }

    #[test]
    fn infarct_outside_anatomy_changes_nothing_but_volume() {
        let anatomy = tiny_anatomy();
        // only background voxels hit
        let infarct =
            BinaryMask::from_parts(anatomy.dims(), anatomy.spacing(), vec![0, 1, 1, 0]).unwrap();
        let report = score(&infarct, &anatomy, InvolvementPolicy::default()).unwrap();
        assert_eq!(report.left.score, 10);
        assert_eq!(report.right.score, 10);
        assert!(report.infarct_volume_ml > 0.0);
    }

    #[test]
    fn overlap_below_both_thresholds_is_ignored() {
        // region of 2000 voxels, overlap 9: below 10 voxels and below 1%
        let policy = InvolvementPolicy::default();
        assert!(!policy.is_involved(9, 2000));
        // 20 voxels passes the absolute leg even though it is 1% exactly too
        assert!(policy.is_involved(20, 2000));
    }

    #[test]
    fn bin_score_matches_clinical_bins() {
        assert_eq!(bin_score(0).unwrap(), ClinicalBin::A);
        assert_eq!(bin_score(7).unwrap(), ClinicalBin::B);
        assert_eq!(bin_score(10).unwrap(), ClinicalBin::C);
        assert!(bin_score(11).is_err());
    }
}

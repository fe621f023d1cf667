//! Segmentation and reader-agreement metrics.
//!
//! Conventions for degenerate inputs are fixed here once: dice of two empty
//! masks is 1.0, a rate with an empty denominator is 1.0 when it comes from
//! voxel counts (nothing to miss), and statistics that genuinely have no
//! value (Pearson of a constant column, rates for a score nobody assigned)
//! are reported as explicitly undefined rather than silently 0 or 1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_same_dims, BinaryMask};
use crate::region::{encode_label, AnatomyLabelMap, Hemisphere, Region};
use crate::report::{ClinicalBin, ScorePairTable};
use crate::scoring::{classify_volume_bucket, infarct_volume_ml, VolumeBucket};

/// Voxel-level confusion counts of a prediction against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    /// `tp / (tp + fn)`; 1.0 when there are no positives to find.
    pub fn sensitivity(&self) -> f64 {
        let denom = self.true_pos + self.false_neg;
        if denom == 0 {
            1.0
        } else {
            self.true_pos as f64 / denom as f64
        }
    }

    /// `tn / (tn + fp)`; 1.0 when there are no negatives to keep.
    pub fn specificity(&self) -> f64 {
        let denom = self.true_neg + self.false_pos;
        if denom == 0 {
            1.0
        } else {
            self.true_neg as f64 / denom as f64
        }
    }

    /// Total voxels counted.
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

/// Dice similarity of two masks: `2|A n B| / (|A| + |B|)`, and 1.0 when both
/// masks are empty (perfect agreement on "nothing there").
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_same_dims("dice", a.grid(), b.grid())?;
    Ok(dice_of_indicators(a.data(), b.data()))
}

/// Dice over raw 0/1 slices; shared by [`dice`] and the per-region variant.
fn dice_of_indicators(a: &[u8], b: &[u8]) -> f64 {
    let mut na = 0u64;
    let mut nb = 0u64;
    let mut inter = 0u64;
    for (&va, &vb) in a.iter().zip(b) {
        na += va as u64;
        nb += vb as u64;
        inter += (va & vb) as u64;
    }
    if na + nb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (na + nb) as f64
    }
}

/// Voxel confusion counts of `pred` against `gt`.
pub fn voxel_confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    check_same_dims("voxel_confusion", pred.grid(), gt.grid())?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p, g) {
            (1, 1) => c.true_pos += 1,
            (1, 0) => c.false_pos += 1,
            (0, 0) => c.true_neg += 1,
            (0, 1) => c.false_neg += 1,
            _ => unreachable!("masks are validated 0/1"),
        }
    }
    Ok(c)
}

/// The three region pairs that are reported as merged columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairedRegions {
    M1M4,
    M2M5,
    M3M6,
}

impl PairedRegions {
    pub const ALL: [PairedRegions; 3] =
        [PairedRegions::M1M4, PairedRegions::M2M5, PairedRegions::M3M6];

    pub fn members(self) -> [Region; 2] {
        match self {
            PairedRegions::M1M4 => [Region::M1, Region::M4],
            PairedRegions::M2M5 => [Region::M2, Region::M5],
            PairedRegions::M3M6 => [Region::M3, Region::M6],
        }
    }

    /// Column label, e.g. `M1, M4`.
    pub fn label(self) -> &'static str {
        match self {
            PairedRegions::M1M4 => "M1, M4",
            PairedRegions::M2M5 => "M2, M5",
            PairedRegions::M3M6 => "M3, M6",
        }
    }
}

/// Per-region dice of one label map against another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDiceReport {
    /// Dice per region, hemispheres merged, all ten regions present.
    pub per_region: BTreeMap<Region, f64>,
    /// Dice of the merged M1/M4, M2/M5, M3/M6 indicator masks.
    pub paired: BTreeMap<PairedRegions, f64>,
    /// Dice of the "any label" indicators.
    pub overall: f64,
}

/// Dice for every region (hemispheres merged), for the three merged region
/// pairs, and overall (any label vs any label).
pub fn per_region_dice(pred: &AnatomyLabelMap, gt: &AnatomyLabelMap) -> Result<RegionDiceReport> {
    check_same_dims("per_region_dice", pred.grid(), gt.grid())?;

    // indicator vectors per comparison; one pass per indicator keeps this
    // simple and the volumes involved are small
    let indicator = |data: &[u8], accept: &dyn Fn(u8) -> bool| -> Vec<u8> {
        data.iter().map(|&v| accept(v) as u8).collect()
    };
    let region_labels = |r: Region| {
        [
            encode_label(Hemisphere::Left, r),
            encode_label(Hemisphere::Right, r),
        ]
    };

    let mut per_region = BTreeMap::new();
    for region in Region::ALL {
        let labels = region_labels(region);
        let accept = |v: u8| labels.contains(&v);
        let d = dice_of_indicators(
            &indicator(pred.data(), &accept),
            &indicator(gt.data(), &accept),
        );
        per_region.insert(region, d);
    }

    let mut paired = BTreeMap::new();
    for pair in PairedRegions::ALL {
        let [a, b] = pair.members();
        let labels = [region_labels(a), region_labels(b)].concat();
        let accept = |v: u8| labels.contains(&v);
        let d = dice_of_indicators(
            &indicator(pred.data(), &accept),
            &indicator(gt.data(), &accept),
        );
        paired.insert(pair, d);
    }

    let any = |v: u8| v > 0;
    let overall = dice_of_indicators(&indicator(pred.data(), &any), &indicator(gt.data(), &any));

    Ok(RegionDiceReport {
        per_region,
        paired,
        overall,
    })
}

/// Mean dice of the cases whose ground-truth volume fell in one bucket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketDice {
    pub cases: usize,
    pub mean_dice: f64,
}

/// Groups (pred, gt) mask pairs by ground-truth infarct volume and reports
/// the mean dice per bucket. Buckets with no cases are absent from the map.
pub fn dice_by_volume_bucket(
    cases: &[(&BinaryMask, &BinaryMask)],
) -> Result<BTreeMap<VolumeBucket, BucketDice>> {
    let mut sums: BTreeMap<VolumeBucket, (usize, f64)> = BTreeMap::new();
    for (pred, gt) in cases {
        let d = dice(pred, gt)?;
        let bucket = classify_volume_bucket(infarct_volume_ml(gt))?;
        let entry = sums.entry(bucket).or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 += d;
    }
    Ok(sums
        .into_iter()
        .map(|(bucket, (cases, sum))| {
            (
                bucket,
                BucketDice {
                    cases,
                    mean_dice: sum / cases as f64,
                },
            )
        })
        .collect())
}

/// Sensitivity and specificity, either of which may be undefined when the
/// corresponding denominator is empty.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RatePair {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

/// One-vs-rest sensitivity/specificity of column a against reference column
/// b, per score 0-10. Scores missing from the reference column get an
/// undefined sensitivity; specificity is undefined when every scan carries
/// that score.
pub fn per_score_table(table: &ScorePairTable) -> Result<BTreeMap<u8, RatePair>> {
    require_rows(table)?;
    Ok((0..=10)
        .map(|s| (s, one_vs_rest(table, |v| v == s)))
        .collect())
}

/// Same one-vs-rest rates after binning both columns.
pub fn binned_table(table: &ScorePairTable) -> Result<BTreeMap<ClinicalBin, RatePair>> {
    require_rows(table)?;
    let mut out = BTreeMap::new();
    for bin in ClinicalBin::ALL {
        // scores are validated <= 10, binning cannot fail
        let rates = one_vs_rest(table, |v| ClinicalBin::from_score(v).unwrap() == bin);
        out.insert(bin, rates);
    }
    Ok(out)
}

fn require_rows(table: &ScorePairTable) -> Result<()> {
    if table.is_empty() {
        return Err(Error::domain("score table has no rows"));
    }
    Ok(())
}

/// Reference-column-b rates for one positive class.
fn one_vs_rest(table: &ScorePairTable, positive: impl Fn(u8) -> bool) -> RatePair {
    let mut tp = 0u64;
    let mut fn_ = 0u64;
    let mut tn = 0u64;
    let mut fp = 0u64;
    for row in table.rows() {
        match (positive(row.score_a), positive(row.score_b)) {
            (true, true) => tp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
        }
    }
    RatePair {
        sensitivity: (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64),
        specificity: (tn + fp > 0).then(|| tn as f64 / (tn + fp) as f64),
    }
}

/// Inter-reader agreement over a score table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub n: usize,
    /// Percent of rows with identical scores.
    pub exact_pct: f64,
    /// Percent of rows within two points (includes exact matches).
    pub within2_pct: f64,
    /// Sample Pearson correlation; undefined for n < 2 or a constant column.
    pub pearson_r: Option<f64>,
}

/// Exact-match and within-2 percentages plus Pearson correlation.
pub fn agreement(table: &ScorePairTable) -> Result<AgreementStats> {
    require_rows(table)?;
    let n = table.len();
    let exact = table
        .rows()
        .iter()
        .filter(|r| r.score_a == r.score_b)
        .count();
    let within2 = table
        .rows()
        .iter()
        .filter(|r| (r.score_a as i16 - r.score_b as i16).abs() <= 2)
        .count();
    let a: Vec<f64> = table.rows().iter().map(|r| r.score_a as f64).collect();
    let b: Vec<f64> = table.rows().iter().map(|r| r.score_b as f64).collect();
    Ok(AgreementStats {
        n,
        exact_pct: 100.0 * exact as f64 / n as f64,
        within2_pct: 100.0 * within2 as f64 / n as f64,
        pearson_r: pearson(&a, &b),
    })
}

/// Sample Pearson correlation, or `None` when it is undefined (fewer than
/// two points, or a column with zero variance).
fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

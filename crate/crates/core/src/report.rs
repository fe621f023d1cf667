//! Score reports and paired score tables.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::region::{Hemisphere, Region};
use crate::scoring::InvolvementPolicy;

/// Version stamp written into every JSON report.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Coarse clinical grouping of a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClinicalBin {
    A,
    B,
    C,
}

impl ClinicalBin {
    pub const ALL: [ClinicalBin; 3] = [ClinicalBin::A, ClinicalBin::B, ClinicalBin::C];

    /// Bins a score: 0-3 is A, 4-7 is B, 8-10 is C. Scores above 10 are
    /// rejected.
    pub fn from_score(score: u8) -> Result<Self> {
        match score {
            0..=3 => Ok(ClinicalBin::A),
            4..=7 => Ok(ClinicalBin::B),
            8..=10 => Ok(ClinicalBin::C),
            s => Err(Error::domain(format!(
                "score {s} is out of range, scores run 0-10"
            ))),
        }
    }

    /// Row label including the score range, e.g. `A (0-3)`.
    pub fn label(self) -> &'static str {
        match self {
            ClinicalBin::A => "A (0-3)",
            ClinicalBin::B => "B (4-7)",
            ClinicalBin::C => "C (8-10)",
        }
    }
}

impl std::fmt::Display for ClinicalBin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClinicalBin::A => "A",
            ClinicalBin::B => "B",
            ClinicalBin::C => "C",
        })
    }
}

/// Scoring outcome for one hemisphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HemisphereReport {
    /// 10 minus the number of involved regions.
    pub score: u8,
    /// Regions whose infarct overlap passed the involvement policy.
    pub involved: BTreeSet<Region>,
    /// Infarct voxel count per region; regions with zero overlap are omitted.
    pub overlap_voxels: BTreeMap<Region, u64>,
}

impl HemisphereReport {
    /// A clean hemisphere: score 10, nothing involved.
    pub fn untouched() -> Self {
        HemisphereReport {
            score: 10,
            involved: BTreeSet::new(),
            overlap_voxels: BTreeMap::new(),
        }
    }
}

/// Full scoring outcome for a scan: both hemispheres, total infarct volume,
/// the affected side and its clinical bin, plus the policy that was applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectsReport {
    pub schema_version: u32,
    pub left: HemisphereReport,
    pub right: HemisphereReport,
    /// Whole-scan infarct volume in millilitres.
    pub infarct_volume_ml: f64,
    /// The hemisphere with the lower score; ties go to the left.
    pub affected_hemisphere: Hemisphere,
    /// Clinical bin of the affected hemisphere's score.
    pub bin: ClinicalBin,
    pub policy: InvolvementPolicy,
}

impl AspectsReport {
    pub fn hemisphere(&self, h: Hemisphere) -> &HemisphereReport {
        match h {
            Hemisphere::Left => &self.left,
            Hemisphere::Right => &self.right,
        }
    }

    /// Score of the affected hemisphere.
    pub fn affected_score(&self) -> u8 {
        self.hemisphere(self.affected_hemisphere).score
    }

    /// Re-checks the internal consistency rules; useful after parsing a
    /// report from JSON.
    pub fn validate(&self) -> Result<()> {
        for (side, rep) in [("left", &self.left), ("right", &self.right)] {
            if rep.score > 10 {
                return Err(Error::domain(format!("{side} score {} above 10", rep.score)));
            }
            if rep.score as usize + rep.involved.len() != 10 {
                return Err(Error::domain(format!(
                    "{side} score {} does not match {} involved regions",
                    rep.score,
                    rep.involved.len()
                )));
            }
            if rep.overlap_voxels.values().any(|&v| v == 0) {
                return Err(Error::domain(format!(
                    "{side} overlap map contains a zero count; zero-overlap regions are omitted"
                )));
            }
        }
        if !self.infarct_volume_ml.is_finite() || self.infarct_volume_ml < 0.0 {
            return Err(Error::domain(format!(
                "infarct volume {} ml is not a non-negative finite number",
                self.infarct_volume_ml
            )));
        }
        if self.bin != ClinicalBin::from_score(self.affected_score())? {
            return Err(Error::domain("bin does not match affected score"));
        }
        self.policy.validate()?;
        Ok(())
    }
}

/// One scan scored by two readers (or a prediction against a reference).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorePair {
    pub scan_id: String,
    pub score_a: u8,
    pub score_b: u8,
}

/// A list of paired scores with unique scan ids, both columns within 0-10.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ScorePair>", into = "Vec<ScorePair>")]
pub struct ScorePairTable(Vec<ScorePair>);

impl ScorePairTable {
    /// Validates score ranges and scan-id uniqueness.
    pub fn new(rows: Vec<ScorePair>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for row in &rows {
            for (col, v) in [("score_a", row.score_a), ("score_b", row.score_b)] {
                if v > 10 {
                    return Err(Error::domain(format!(
                        "scan `{}`: {col} is {v}, scores run 0-10",
                        row.scan_id
                    )));
                }
            }
            if !seen.insert(row.scan_id.as_str()) {
                return Err(Error::domain(format!(
                    "scan id `{}` appears more than once",
                    row.scan_id
                )));
            }
        }
        Ok(ScorePairTable(rows))
    }

    pub fn rows(&self) -> &[ScorePair] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<ScorePair>> for ScorePairTable {
    type Error = Error;

    fn try_from(rows: Vec<ScorePair>) -> Result<Self> {
        ScorePairTable::new(rows)
    }
}

impl From<ScorePairTable> for Vec<ScorePair> {
    fn from(table: ScorePairTable) -> Self {
        table.0
    }
}

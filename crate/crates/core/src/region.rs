//! The ten MCA-territory regions scored per hemisphere, and the label
//! encoding that packs (hemisphere, region) pairs into voxel values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Dims, Spacing, VoxelGrid};

/// Left or right cerebral hemisphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hemisphere {
    Left,
    Right,
}

impl Hemisphere {
    pub const ALL: [Hemisphere; 2] = [Hemisphere::Left, Hemisphere::Right];

    pub fn opposite(self) -> Hemisphere {
        match self {
            Hemisphere::Left => Hemisphere::Right,
            Hemisphere::Right => Hemisphere::Left,
        }
    }

    fn index(self) -> usize {
        match self {
            Hemisphere::Left => 0,
            Hemisphere::Right => 1,
        }
    }
}

impl std::fmt::Display for Hemisphere {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Hemisphere::Left => "left",
            Hemisphere::Right => "right",
        })
    }
}

impl std::str::FromStr for Hemisphere {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Hemisphere::Left),
            "right" => Ok(Hemisphere::Right),
            other => Err(Error::domain(format!(
                "unknown hemisphere `{other}` (expected `left` or `right`)"
            ))),
        }
    }
}

/// The axial level a region is assessed at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    /// Ganglionic cut: caudate, lentiform nucleus, internal capsule,
    /// insular cortex and M1-M3.
    BasalGanglia,
    /// Supraganglionic cut: M4-M6.
    CoronaRadiata,
}

/// One of the ten regions that each contribute a point to the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Caudate,
    LentiformNucleus,
    InternalCapsule,
    InsularCortex,
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
}

impl Region {
    /// Every region, in label order.
    pub const ALL: [Region; 10] = [
        Region::Caudate,
        Region::LentiformNucleus,
        Region::InternalCapsule,
        Region::InsularCortex,
        Region::M1,
        Region::M2,
        Region::M3,
        Region::M4,
        Region::M5,
        Region::M6,
    ];

    /// Position within [`Region::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    /// The axial level this region belongs to. M1-M3 sit at the basal
    /// ganglia level, M4-M6 one cut above at the corona radiata.
    pub fn level(self) -> Level {
        match self {
            Region::M4 | Region::M5 | Region::M6 => Level::CoronaRadiata,
            _ => Level::BasalGanglia,
        }
    }

    /// Human-readable name for report tables.
    pub fn label(self) -> &'static str {
        match self {
            Region::Caudate => "Caudate",
            Region::LentiformNucleus => "Lentiform Nucleus",
            Region::InternalCapsule => "Internal Capsule",
            Region::InsularCortex => "Insular Cortex",
            Region::M1 => "M1",
            Region::M2 => "M2",
            Region::M3 => "M3",
            Region::M4 => "M4",
            Region::M5 => "M5",
            Region::M6 => "M6",
        }
    }
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Region::Caudate => "caudate",
            Region::LentiformNucleus => "lentiform_nucleus",
            Region::InternalCapsule => "internal_capsule",
            Region::InsularCortex => "insular_cortex",
            Region::M1 => "m1",
            Region::M2 => "m2",
            Region::M3 => "m3",
            Region::M4 => "m4",
            Region::M5 => "m5",
            Region::M6 => "m6",
        })
    }
}

impl std::str::FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Region::ALL
            .into_iter()
            .find(|r| r.to_string() == s)
            .ok_or_else(|| Error::domain(format!("unknown region `{s}`")))
    }
}

/// Highest valid anatomy label; 0 is background.
pub const MAX_LABEL: u8 = 20;

/// Packs a (hemisphere, region) pair into a voxel label.
///
/// Labels 1-10 are the left-hemisphere regions in [`Region::ALL`] order,
/// labels 11-20 the right-hemisphere ones; 0 stays background.
pub fn encode_label(hemisphere: Hemisphere, region: Region) -> u8 {
    let base = match hemisphere {
        Hemisphere::Left => 1,
        Hemisphere::Right => 11,
    };
    base + region.index() as u8
}

/// Inverse of [`encode_label`]. Rejects 0 (background) and anything above
/// [`MAX_LABEL`].
pub fn decode_label(label: u8) -> Result<(Hemisphere, Region)> {
    if label == 0 || label > MAX_LABEL {
        return Err(Error::domain(format!(
            "label {label} does not name a region (valid labels are 1-{MAX_LABEL})"
        )));
    }
    let (hemisphere, offset) = if label <= 10 {
        (Hemisphere::Left, label - 1)
    } else {
        (Hemisphere::Right, label - 11)
    };
    Ok((hemisphere, Region::ALL[offset as usize]))
}

/// Voxel counts per (hemisphere, region), used for region sizes and
/// infarct overlaps alike. Pairs never touched stay at 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RegionVoxelCounts([[u64; 10]; 2]);

impl RegionVoxelCounts {
    pub fn get(&self, hemisphere: Hemisphere, region: Region) -> u64 {
        self.0[hemisphere.index()][region.index()]
    }

    pub(crate) fn add(&mut self, hemisphere: Hemisphere, region: Region, n: u64) {
        self.0[hemisphere.index()][region.index()] += n;
    }

    /// Sum over all twenty (hemisphere, region) pairs.
    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    /// All twenty pairs with their counts, hemispheres outermost.
    pub fn iter(&self) -> impl Iterator<Item = (Hemisphere, Region, u64)> + '_ {
        Hemisphere::ALL.into_iter().flat_map(move |h| {
            Region::ALL
                .into_iter()
                .map(move |r| (h, r, self.get(h, r)))
        })
    }
}

/// A voxel grid whose values are anatomy labels: 0 for background, 1-20 for
/// the twenty (hemisphere, region) pairs per [`encode_label`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnatomyLabelMap(VoxelGrid<u8>);

impl AnatomyLabelMap {
    /// Validates that every voxel is a background or region label.
    pub fn new(grid: VoxelGrid<u8>) -> Result<Self> {
        if let Some(i) = grid.data().iter().position(|&v| v > MAX_LABEL) {
            let (x, y, z) = grid.dims().coords(i);
            return Err(Error::domain(format!(
                "anatomy voxel ({x}, {y}, {z}) holds label {}, valid labels are 0-{MAX_LABEL}",
                grid.data()[i]
            )));
        }
        Ok(AnatomyLabelMap(grid))
    }

    /// Builds a label map straight from dims, spacing and flat data.
    pub fn from_parts(dims: Dims, spacing: Spacing, data: Vec<u8>) -> Result<Self> {
        AnatomyLabelMap::new(VoxelGrid::new(dims, spacing, data)?)
    }

    pub fn grid(&self) -> &VoxelGrid<u8> {
        &self.0
    }

    pub fn dims(&self) -> Dims {
        self.0.dims()
    }

    pub fn spacing(&self) -> Spacing {
        self.0.spacing()
    }

    pub fn data(&self) -> &[u8] {
        self.0.data()
    }

    pub fn label_at(&self, x: usize, y: usize, z: usize) -> u8 {
        self.0.value(x, y, z)
    }

    /// Voxel count of every (hemisphere, region) pair in one pass.
    pub fn region_sizes(&self) -> RegionVoxelCounts {
        let mut sizes = RegionVoxelCounts::default();
        for &label in self.0.data() {
            if label > 0 {
                // labels were validated at construction, decode cannot fail
                let (h, r) = decode_label(label).expect("validated label");
                sizes.add(h, r, 1);
            }
        }
        sizes
    }
}

//! Synthetic test volumes with exactly known scores.
//!
//! The generator lays the twenty regions out as disjoint axis-aligned boxes
//! (a caricature of anatomy, but one whose overlaps, volumes and scores can
//! be computed on paper), then fills planned fractions of chosen regions
//! with "infarct" voxels. Everything is driven by a fixed, documented
//! pseudo-random generator so a seed reproduces the same volumes anywhere.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Dims, Spacing, VoxelGrid};
use crate::region::{encode_label, AnatomyLabelMap, Hemisphere, Level, Region};
use crate::report::{
    AspectsReport, ClinicalBin, HemisphereReport, ScorePair, ScorePairTable,
    REPORT_SCHEMA_VERSION,
};
use crate::scoring::{volume_ml_from_count, InvolvementPolicy};

/// SplitMix64: 64 bits of state, one addition and two xor-multiply mixes per
/// draw. Chosen over a library generator because the algorithm is small
/// enough to restate exactly, which keeps phantoms reproducible across
/// implementations in other languages.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, n)` by 128-bit fixed-point scaling; `n` must be
    /// positive.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Uniform draw in `[0, 1)` with 53 random mantissa bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// One planned lesion: fill a fraction of a region with infarct voxels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesionSite {
    pub hemisphere: Hemisphere,
    pub region: Region,
    /// Fraction of the region's voxels to fill, within `[0, 1]`.
    pub fill_fraction: f64,
}

/// Everything needed to generate a phantom scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub seed: u64,
    pub dims: Dims,
    pub spacing: Spacing,
    pub lesion_plan: Vec<LesionSite>,
}

impl PhantomSpec {
    /// A spec with the default 64x64x32 grid at 1 mm isotropic spacing and
    /// an empty lesion plan.
    pub fn new(seed: u64) -> Self {
        PhantomSpec {
            seed,
            dims: Dims::new(64, 64, 32).expect("static dims"),
            spacing: Spacing::isotropic(1.0).expect("static spacing"),
            lesion_plan: Vec::new(),
        }
    }

    pub fn with_plan(mut self, plan: Vec<LesionSite>) -> Self {
        self.lesion_plan = plan;
        self
    }
}

/// The stock two-lesion plan: half the left caudate plus a third of the left
/// insular cortex, which scores the left hemisphere 8 under the default
/// involvement policy.
pub fn default_plan() -> Vec<LesionSite> {
    vec![
        LesionSite {
            hemisphere: Hemisphere::Left,
            region: Region::Caudate,
            fill_fraction: 0.5,
        },
        LesionSite {
            hemisphere: Hemisphere::Left,
            region: Region::InsularCortex,
            fill_fraction: 0.3,
        },
    ]
}

/// An axis-aligned box, exclusive upper bounds.
#[derive(Debug, Clone, Copy)]
struct Box3 {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    z0: usize,
    z1: usize,
}

/// `k`-th of `m` equal-ish slices of `[0, extent)`.
fn slice_of(extent: usize, k: usize, m: usize) -> (usize, usize) {
    (k * extent / m, (k + 1) * extent / m)
}

/// Generates the anatomy label map: twenty disjoint boxes, basal-ganglia
/// level regions in the lower half of the z range and the corona-radiata
/// regions above, left hemisphere strictly in the low-x half with the right
/// hemisphere its mirror image. Box edges are jittered by the seed, but the
/// layout guarantees every region keeps at least one voxel.
pub fn make_anatomy(spec: &PhantomSpec) -> Result<AnatomyLabelMap> {
    let dims = spec.dims;
    let half = dims.nx / 2;
    if half < 2 || dims.ny < 4 || dims.nz < 2 {
        return Err(Error::domain(format!(
            "dims {dims} are too small for the phantom layout; need at least 4x4x2"
        )));
    }

    let mut rng = SplitMix64::new(spec.seed);
    let mut data = vec![0u8; dims.len()];

    // jitter shrinks a cell from both ends by at most a quarter each, so at
    // least half of every cell (>= 1 voxel) always survives
    let jitter = |lo: usize, hi: usize, rng: &mut SplitMix64| -> (usize, usize) {
        let span = hi - lo;
        let cut = span / 4;
        let a = rng.below(cut as u64 + 1) as usize;
        let b = rng.below(cut as u64 + 1) as usize;
        (lo + a, hi - b)
    };

    for region in Region::ALL {
        // cell of this region within the left hemisphere
        let (xc, yc, zc) = match region.level() {
            // 7 regions on a 2x4 cell grid in the lower z band
            Level::BasalGanglia => {
                let i = region.index();
                let x = slice_of(half, i % 2, 2);
                let y = slice_of(dims.ny, i / 2, 4);
                (x, y, (0, dims.nz / 2))
            }
            // 3 regions stacked along y in the upper z band
            Level::CoronaRadiata => {
                let j = region.index() - Region::M4.index();
                let y = slice_of(dims.ny, j, 3);
                ((0, half), y, (dims.nz / 2, dims.nz))
            }
        };
        let (x0, x1) = jitter(xc.0, xc.1, &mut rng);
        let (y0, y1) = jitter(yc.0, yc.1, &mut rng);
        let (z0, z1) = jitter(zc.0, zc.1, &mut rng);
        let b = Box3 { x0, x1, y0, y1, z0, z1 };

        let left = encode_label(Hemisphere::Left, region);
        let right = encode_label(Hemisphere::Right, region);
        for z in b.z0..b.z1 {
            for y in b.y0..b.y1 {
                for x in b.x0..b.x1 {
                    data[dims.index(x, y, z)] = left;
                    // mirror across the mid-plane into the right half
                    data[dims.index(dims.nx - 1 - x, y, z)] = right;
                }
            }
        }
    }

    AnatomyLabelMap::new(VoxelGrid::new(dims, spec.spacing, data)?)
}

/// Fills the planned fraction of each planned region with infarct voxels and
/// returns the mask together with the report that scoring it must produce
/// under the default involvement policy.
///
/// Voxels are chosen by shuffling each region's voxel list with the seeded
/// stream and taking the first `floor(fraction * region_size)`. Plan entries
/// naming the same region are merged by summing fractions (capped at 1).
pub fn make_infarct(
    spec: &PhantomSpec,
    anatomy: &AnatomyLabelMap,
) -> Result<(BinaryMask, AspectsReport)> {
    let sizes = anatomy.region_sizes();

    // merge the plan; reject bad fractions and empty regions up front
    let mut merged: BTreeMap<(Hemisphere, Region), f64> = BTreeMap::new();
    for site in &spec.lesion_plan {
        if !(0.0..=1.0).contains(&site.fill_fraction) {
            return Err(Error::domain(format!(
                "fill_fraction {} for {} {} is outside [0, 1]",
                site.fill_fraction, site.hemisphere, site.region
            )));
        }
        if sizes.get(site.hemisphere, site.region) == 0 {
            return Err(Error::domain(format!(
                "lesion plan names {} {}, which has no voxels in this anatomy",
                site.hemisphere, site.region
            )));
        }
        let f = merged.entry((site.hemisphere, site.region)).or_insert(0.0);
        *f = (*f + site.fill_fraction).min(1.0);
    }

    // voxel indices per (hemisphere, region), in scan order
    let mut region_voxels: BTreeMap<(Hemisphere, Region), Vec<usize>> = BTreeMap::new();
    for (i, &label) in anatomy.data().iter().enumerate() {
        if label > 0 {
            let pair = crate::region::decode_label(label).expect("validated label");
            region_voxels.entry(pair).or_default().push(i);
        }
    }

    let policy = InvolvementPolicy::default();
    let mut rng = SplitMix64::new(spec.seed);
    let mut mask_data = vec![0u8; anatomy.dims().len()];
    let mut overlaps: BTreeMap<(Hemisphere, Region), u64> = BTreeMap::new();
    let mut total_filled: u64 = 0;

    // merged-map iteration order is (hemisphere, region), which fixes the
    // stream consumption order for reproducibility
    for (&(h, r), &fraction) in &merged {
        let size = sizes.get(h, r);
        let k = (fraction * size as f64).floor() as u64;
        if k == 0 {
            continue;
        }
        let voxels = region_voxels.get_mut(&(h, r)).expect("nonempty region");
        rng.shuffle(voxels);
        for &i in voxels.iter().take(k as usize) {
            mask_data[i] = 1;
        }
        overlaps.insert((h, r), k);
        total_filled += k;
    }

    // the report this mask must score to, computed from the plan arithmetic
    let mut reports = [HemisphereReport::untouched(), HemisphereReport::untouched()];
    for (slot, hemisphere) in reports.iter_mut().zip(Hemisphere::ALL) {
        let mut rep = HemisphereReport::untouched();
        for region in Region::ALL {
            let overlap = overlaps.get(&(hemisphere, region)).copied().unwrap_or(0);
            if overlap > 0 {
                rep.overlap_voxels.insert(region, overlap);
            }
            if policy.is_involved(overlap, sizes.get(hemisphere, region)) {
                rep.involved.insert(region);
            }
        }
        rep.score = 10 - rep.involved.len() as u8;
        *slot = rep;
    }
    let [left, right] = reports;
    let affected_hemisphere = if right.score < left.score {
        Hemisphere::Right
    } else {
        Hemisphere::Left
    };
    let affected_score = match affected_hemisphere {
        Hemisphere::Left => left.score,
        Hemisphere::Right => right.score,
    };

    let expected = AspectsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        left,
        right,
        infarct_volume_ml: volume_ml_from_count(total_filled, anatomy.spacing()),
        affected_hemisphere,
        bin: ClinicalBin::from_score(affected_score)?,
        policy,
    };
    let mask = BinaryMask::new(VoxelGrid::new(anatomy.dims(), anatomy.spacing(), mask_data)?)?;
    Ok((mask, expected))
}

/// Builds a score table with exact agreement composition: `exact` rows where
/// the columns match, `within2 - exact` rows differing by 1 or 2, and
/// `n - within2` rows differing by 3 or more. Row order is shuffled.
pub fn make_score_table(
    seed: u64,
    n: usize,
    exact: usize,
    within2: usize,
) -> Result<ScorePairTable> {
    if exact > within2 || within2 > n {
        return Err(Error::domain(format!(
            "need exact <= within2 <= n, got exact {exact}, within2 {within2}, n {n}"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let a = rng.below(11) as u8;
        let b = if i < exact {
            a
        } else if i < within2 {
            // off by 1 or 2, direction random where both fit
            let d = 1 + rng.below(2) as u8;
            let up_ok = a + d <= 10;
            let down_ok = a >= d;
            match (up_ok, down_ok) {
                (true, true) => {
                    if rng.below(2) == 0 {
                        a + d
                    } else {
                        a - d
                    }
                }
                (true, false) => a + d,
                (false, true) => a - d,
                (false, false) => unreachable!("0..=10 always fits a step of 2 one way"),
            }
        } else {
            // off by at least 3: pick uniformly among the valid scores
            let candidates: Vec<u8> = (0..=10)
                .filter(|&v| (v as i16 - a as i16).abs() >= 3)
                .collect();
            candidates[rng.below(candidates.len() as u64) as usize]
        };
        rows.push(ScorePair {
            scan_id: format!("scan_{:05}", i + 1),
            score_a: a,
            score_b: b,
        });
    }
    rng.shuffle(&mut rows);
    ScorePairTable::new(rows)
}

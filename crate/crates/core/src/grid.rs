//! Voxel grids: the common carrier for masks, label maps, probability fields
//! and anything else sampled on a regular 3-D lattice.
//!
//! Data is stored flat in x-fastest order: index `x + nx * (y + ny * z)`.
//! All types here are immutable once constructed, so they can be shared
//! freely across threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical voxel spacing in millimetres along x, y, z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl Spacing {
    /// Builds a spacing, rejecting non-finite or non-positive components.
    pub fn new(sx: f64, sy: f64, sz: f64) -> Result<Self> {
        for (axis, v) in [("x", sx), ("y", sy), ("z", sz)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::domain(format!(
                    "spacing along {axis} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(Spacing { sx, sy, sz })
    }

    /// Equal spacing along every axis.
    pub fn isotropic(s: f64) -> Result<Self> {
        Spacing::new(s, s, s)
    }

    /// Volume of one voxel in cubic millimetres.
    pub fn voxel_volume_mm3(&self) -> f64 {
        self.sx * self.sy * self.sz
    }
}

/// Grid extents along x, y, z. Every axis holds at least one voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    /// Builds grid extents, rejecting empty axes and products that overflow `usize`.
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::domain(format!(
                "dimensions must all be at least 1, got {nx}x{ny}x{nz}"
            )));
        }
        nx.checked_mul(ny)
            .and_then(|p| p.checked_mul(nz))
            .ok_or_else(|| Error::domain(format!("dimensions {nx}x{ny}x{nz} overflow usize")))?;
        Ok(Dims { nx, ny, nz })
    }

    /// Total voxel count.
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Always false: construction guarantees at least one voxel.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index of `(x, y, z)` in x-fastest order.
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz);
        x + self.nx * (y + self.ny * z)
    }

    /// Inverse of [`Dims::index`].
    pub fn coords(&self, i: usize) -> (usize, usize, usize) {
        debug_assert!(i < self.len());
        let x = i % self.nx;
        let y = (i / self.nx) % self.ny;
        let z = i / (self.nx * self.ny);
        (x, y, z)
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// A dense 3-D volume of `T` with physical spacing attached.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T> {
    dims: Dims,
    spacing: Spacing,
    data: Vec<T>,
}

impl<T> VoxelGrid<T> {
    /// Wraps flat x-fastest data; `data.len()` must equal `dims.len()`.
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<T>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::domain(format!(
                "grid {dims} needs {} voxels, got {}",
                dims.len(),
                data.len()
            )));
        }
        Ok(VoxelGrid {
            dims,
            spacing,
            data,
        })
    }

    /// A grid with every voxel set to `value`.
    pub fn fill(dims: Dims, spacing: Spacing, value: T) -> Self
    where
        T: Clone,
    {
        VoxelGrid {
            dims,
            spacing,
            data: vec![value; dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    /// Flat voxel data in x-fastest order.
    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Consumes the grid, returning its flat data.
    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Value at `(x, y, z)`.
    pub fn value(&self, x: usize, y: usize, z: usize) -> T
    where
        T: Copy,
    {
        self.data[self.dims.index(x, y, z)]
    }

    /// True when `other` has identical dimensions and identical spacing.
    ///
    /// Spacing is compared exactly; volumes that went through the same
    /// header round-trip bitwise-match, anything else is a geometry error.
    pub fn same_geometry<U>(&self, other: &VoxelGrid<U>) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }
}

/// Checks that two grids share dimensions and spacing, for operations that
/// combine them voxel-by-voxel.
pub(crate) fn check_same_geometry<T, U>(
    what: &str,
    a: &VoxelGrid<T>,
    b: &VoxelGrid<U>,
) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::geometry(format!(
            "{what}: dimensions differ ({} vs {})",
            a.dims(),
            b.dims()
        )));
    }
    if a.spacing() != b.spacing() {
        return Err(Error::geometry(format!(
            "{what}: voxel spacing differs ({:?} vs {:?})",
            a.spacing(),
            b.spacing()
        )));
    }
    Ok(())
}

/// Checks dimensions only, for operations that ignore physical spacing.
pub(crate) fn check_same_dims<T, U>(what: &str, a: &VoxelGrid<T>, b: &VoxelGrid<U>) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::geometry(format!(
            "{what}: dimensions differ ({} vs {})",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// A voxel grid whose values are all 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask(VoxelGrid<u8>);

impl BinaryMask {
    /// Validates that every voxel is 0 or 1.
    pub fn new(grid: VoxelGrid<u8>) -> Result<Self> {
        if let Some(i) = grid.data().iter().position(|&v| v > 1) {
            let (x, y, z) = grid.dims().coords(i);
            return Err(Error::domain(format!(
                "mask voxel ({x}, {y}, {z}) is {}, expected 0 or 1",
                grid.data()[i]
            )));
        }
        Ok(BinaryMask(grid))
    }

    /// Builds a mask straight from dims, spacing and flat data.
    pub fn from_parts(dims: Dims, spacing: Spacing, data: Vec<u8>) -> Result<Self> {
        BinaryMask::new(VoxelGrid::new(dims, spacing, data)?)
    }

    /// An all-zero mask.
    pub fn empty(dims: Dims, spacing: Spacing) -> Self {
        BinaryMask(VoxelGrid::fill(dims, spacing, 0))
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

    pub fn is_set(&self, x: usize, y: usize, z: usize) -> bool {
        self.0.value(x, y, z) == 1
    }

    /// Number of voxels set to 1.
    pub fn count_set(&self) -> u64 {
        self.0.data().iter().map(|&v| v as u64).sum()
    }
}

/// A voxel grid of probabilities, each within `[0, 1]`.
///
/// Values are held as `f64` so downstream loss arithmetic and gradient
/// checks run at full double precision; on disk the field is a 32-bit
/// float volume and widening is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityField(VoxelGrid<f64>);

impl ProbabilityField {
    /// Validates that every voxel lies in `[0, 1]` (NaN rejected).
    pub fn new(grid: VoxelGrid<f64>) -> Result<Self> {
        if let Some(i) = grid.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
            let (x, y, z) = grid.dims().coords(i);
            return Err(Error::domain(format!(
                "probability at ({x}, {y}, {z}) is {}, expected within [0, 1]",
                grid.data()[i]
            )));
        }
        Ok(ProbabilityField(grid))
    }

    /// Builds a field straight from dims, spacing and flat data.
    pub fn from_parts(dims: Dims, spacing: Spacing, data: Vec<f64>) -> Result<Self> {
        ProbabilityField::new(VoxelGrid::new(dims, spacing, data)?)
    }

    /// Widens a 32-bit float volume (the on-disk representation) exactly.
    pub fn from_float_grid(grid: &VoxelGrid<f32>) -> Result<Self> {
        let data = grid.data().iter().map(|&v| v as f64).collect();
        ProbabilityField::new(VoxelGrid::new(grid.dims(), grid.spacing(), data)?)
    }

    pub fn grid(&self) -> &VoxelGrid<f64> {
        &self.0
    }

    pub fn dims(&self) -> Dims {
        self.0.dims()
    }

    pub fn spacing(&self) -> Spacing {
        self.0.spacing()
    }

    pub fn values(&self) -> &[f64] {
        self.0.data()
    }
}

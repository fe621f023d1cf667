//! Python bindings for the scoring core. The surface mirrors the CLI:
//! build or load label volumes, score them, compare segmentations, and
//! evaluate the training losses. All failures surface as `ValueError`.

use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use aspects_core::io::{read_volume, write_volume, Volume};
use aspects_core::losses::{combined_loss, FocalParams, LossWeights};
use aspects_core::metrics::{agreement as core_agreement, dice as core_dice};
use aspects_core::phantom::{
    default_plan, make_anatomy, make_infarct, LesionSite, PhantomSpec,
};
use aspects_core::{
    infarct_volume_ml, score as core_score, volume_ml_from_count, AnatomyLabelMap, AspectsReport,
    BinaryMask, ClinicalBin, Dims, Hemisphere, InvolvementPolicy, ProbabilityField, ScorePair,
    ScorePairTable, Spacing,
};

fn to_py_err(e: aspects_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn build_dims(d: (usize, usize, usize)) -> PyResult<Dims> {
    Dims::new(d.0, d.1, d.2).map_err(to_py_err)
}

fn build_spacing(s: (f64, f64, f64)) -> PyResult<Spacing> {
    Spacing::new(s.0, s.1, s.2).map_err(to_py_err)
}

/// A binary infarct (or prediction) mask on a voxel grid.
#[pyclass(frozen)]
struct Mask {
    inner: BinaryMask,
}

#[pymethods]
impl Mask {
    /// `data` is x-fastest flat voxel data of length nx*ny*nz, values 0/1.
    #[new]
    fn new(dims: (usize, usize, usize), spacing: (f64, f64, f64), data: Vec<u8>) -> PyResult<Self> {
        let inner = BinaryMask::from_parts(build_dims(dims)?, build_spacing(spacing)?, data)
            .map_err(to_py_err)?;
        Ok(Mask { inner })
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        let d = self.inner.dims();
        (d.nx, d.ny, d.nz)
    }

    #[getter]
    fn spacing(&self) -> (f64, f64, f64) {
        let s = self.inner.spacing();
        (s.sx, s.sy, s.sz)
    }

    /// Number of set voxels.
    fn count(&self) -> u64 {
        self.inner.data().iter().filter(|&&v| v != 0).count() as u64
    }

    /// Volume of the set voxels in millilitres.
    fn volume_ml(&self) -> f64 {
        infarct_volume_ml(&self.inner)
    }

    /// Flat voxel data, x-fastest.
    fn data(&self) -> Vec<u8> {
        self.inner.data().to_vec()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        write_volume(self.inner.grid(), Path::new(path)).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        let d = self.inner.dims();
        format!("Mask({}x{}x{}, {} set)", d.nx, d.ny, d.nz, self.count())
    }
}

/// A labeled anatomy volume: 0 background, 1-10 left regions, 11-20 right.
#[pyclass(frozen)]
struct Anatomy {
    inner: AnatomyLabelMap,
}

#[pymethods]
impl Anatomy {
    #[new]
    fn new(dims: (usize, usize, usize), spacing: (f64, f64, f64), data: Vec<u8>) -> PyResult<Self> {
        let inner = AnatomyLabelMap::from_parts(build_dims(dims)?, build_spacing(spacing)?, data)
            .map_err(to_py_err)?;
        Ok(Anatomy { inner })
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        let d = self.inner.dims();
        (d.nx, d.ny, d.nz)
    }

    #[getter]
    fn spacing(&self) -> (f64, f64, f64) {
        let s = self.inner.spacing();
        (s.sx, s.sy, s.sz)
    }

    /// Flat label data, x-fastest.
    fn labels(&self) -> Vec<u8> {
        self.inner.data().to_vec()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        write_volume(self.inner.grid(), Path::new(path)).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        let d = self.inner.dims();
        format!("Anatomy({}x{}x{})", d.nx, d.ny, d.nz)
    }
}

/// The outcome of scoring one scan.
#[pyclass(frozen)]
struct Report {
    inner: AspectsReport,
}

fn involved_names(report: &AspectsReport, h: Hemisphere) -> Vec<String> {
    report
        .hemisphere(h)
        .involved
        .iter()
        .map(|r| r.to_string())
        .collect()
}

#[pymethods]
impl Report {
    /// Score of the affected hemisphere (the lower of the two).
    #[getter]
    fn score(&self) -> u8 {
        self.inner.affected_score()
    }

    #[getter]
    fn left_score(&self) -> u8 {
        self.inner.left.score
    }

    #[getter]
    fn right_score(&self) -> u8 {
        self.inner.right.score
    }

    /// "left" or "right"; ties go to the left.
    #[getter]
    fn affected_hemisphere(&self) -> String {
        self.inner.affected_hemisphere.to_string()
    }

    /// Clinical bin label, e.g. "B (4-7)".
    #[getter]
    fn bin(&self) -> &'static str {
        self.inner.bin.label()
    }

    #[getter]
    fn infarct_volume_ml(&self) -> f64 {
        self.inner.infarct_volume_ml
    }

    /// Involved region names for one hemisphere ("left" / "right").
    fn involved(&self, hemisphere: &str) -> PyResult<Vec<String>> {
        let h: Hemisphere = hemisphere.parse().map_err(to_py_err)?;
        Ok(involved_names(&self.inner, h))
    }

    /// The canonical JSON document, byte-identical to the CLI's output.
    fn to_json(&self) -> PyResult<String> {
        aspects_core::io::report_to_json(&self.inner).map_err(to_py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Report> {
        let inner = aspects_core::io::report_from_json(text).map_err(to_py_err)?;
        Ok(Report { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(score={}/10, bin={}, affected={})",
            self.inner.affected_score(),
            self.inner.bin.label(),
            self.inner.affected_hemisphere
        )
    }
}

/// Scores an infarct mask against an anatomy map.
#[pyfunction]
#[pyo3(signature = (infarct, anatomy, min_overlap_voxels = 10, min_overlap_fraction = 0.01))]
fn score(
    infarct: &Mask,
    anatomy: &Anatomy,
    min_overlap_voxels: u64,
    min_overlap_fraction: f64,
) -> PyResult<Report> {
    let policy =
        InvolvementPolicy::new(min_overlap_voxels, min_overlap_fraction).map_err(to_py_err)?;
    let inner = core_score(&infarct.inner, &anatomy.inner, policy).map_err(to_py_err)?;
    Ok(Report { inner })
}

/// Dice overlap between two masks on the same grid; 1.0 when both are empty.
#[pyfunction]
fn dice(a: &Mask, b: &Mask) -> PyResult<f64> {
    core_dice(&a.inner, &b.inner).map_err(to_py_err)
}

/// Clinical bin label for a score 0-10.
#[pyfunction]
fn bin_label(score: u8) -> PyResult<&'static str> {
    Ok(ClinicalBin::from_score(score).map_err(to_py_err)?.label())
}

/// Millilitres occupied by `count` voxels at the given spacing (mm).
#[pyfunction]
fn volume_ml(count: u64, spacing: (f64, f64, f64)) -> PyResult<f64> {
    Ok(volume_ml_from_count(count, build_spacing(spacing)?))
}

fn parse_plan(plan: Vec<(String, String, f64)>) -> PyResult<Vec<LesionSite>> {
    plan.into_iter()
        .map(|(h, r, f)| {
            Ok(LesionSite {
                hemisphere: h.parse().map_err(to_py_err)?,
                region: r.parse().map_err(to_py_err)?,
                fill_fraction: f,
            })
        })
        .collect()
}

/// Builds a synthetic anatomy + infarct pair and the report scoring must
/// reproduce. `plan` rows are (hemisphere, region, fill_fraction) tuples;
/// omitted, a small default lesion plan is used.
#[pyfunction]
#[pyo3(signature = (seed, dims = (64, 64, 32), spacing = (1.0, 1.0, 1.0), plan = None))]
fn make_phantom(
    seed: u64,
    dims: (usize, usize, usize),
    spacing: (f64, f64, f64),
    plan: Option<Vec<(String, String, f64)>>,
) -> PyResult<(Anatomy, Mask, Report)> {
    let lesion_plan = match plan {
        Some(p) => parse_plan(p)?,
        None => default_plan(),
    };
    let spec = PhantomSpec {
        seed,
        dims: build_dims(dims)?,
        spacing: build_spacing(spacing)?,
        lesion_plan,
    };
    let anatomy = make_anatomy(&spec).map_err(to_py_err)?;
    let (mask, expected) = make_infarct(&spec, &anatomy).map_err(to_py_err)?;
    Ok((
        Anatomy { inner: anatomy },
        Mask { inner: mask },
        Report { inner: expected },
    ))
}

/// Inter-reader agreement over (score_a, score_b) pairs. Returns a dict
/// with n, exact_pct, within2_pct, and pearson_r (None when undefined).
#[pyfunction]
fn agreement<'py>(py: Python<'py>, rows: Vec<(u8, u8)>) -> PyResult<Bound<'py, PyDict>> {
    let rows: Vec<ScorePair> = rows
        .into_iter()
        .enumerate()
        .map(|(i, (a, b))| ScorePair {
            scan_id: format!("row_{i:05}"),
            score_a: a,
            score_b: b,
        })
        .collect();
    let table = ScorePairTable::new(rows).map_err(to_py_err)?;
    let stats = core_agreement(&table).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("n", stats.n)?;
    out.set_item("exact_pct", stats.exact_pct)?;
    out.set_item("within2_pct", stats.within2_pct)?;
    out.set_item("pearson_r", stats.pearson_r)?;
    Ok(out)
}

/// Composite segmentation loss of a probability field against a mask.
/// `probs` is flat x-fastest data on the mask's grid, values in [0, 1].
/// Returns a dict with the combined value and the three components.
#[pyfunction]
#[pyo3(signature = (probs, gt, weights = (3.0, 1.0, 1.0), smooth = 1.0))]
fn loss<'py>(
    py: Python<'py>,
    probs: Vec<f64>,
    gt: &Mask,
    weights: (f64, f64, f64),
    smooth: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let p = ProbabilityField::from_parts(gt.inner.dims(), gt.inner.spacing(), probs)
        .map_err(to_py_err)?;
    let w = LossWeights::new(weights.0, weights.1, weights.2).map_err(to_py_err)?;
    let out = combined_loss(&p, &gt.inner, w, &FocalParams::default(), smooth)
        .map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("value", out.value)?;
    d.set_item("focal", out.focal)?;
    d.set_item("boundary", out.boundary)?;
    d.set_item("dice", out.dice)?;
    d.set_item("grad", out.grad.data().to_vec())?;
    Ok(d)
}

/// Reads a volume file as a binary mask (labels must be 0/1).
#[pyfunction]
fn read_mask(path: &str) -> PyResult<Mask> {
    let inner = read_volume(Path::new(path))
        .and_then(Volume::into_binary_mask)
        .map_err(|e| PyValueError::new_err(format!("{path}: {e}")))?;
    Ok(Mask { inner })
}

/// Reads a volume file as an anatomy label map (labels 0-20).
#[pyfunction]
fn read_anatomy(path: &str) -> PyResult<Anatomy> {
    let inner = read_volume(Path::new(path))
        .and_then(Volume::into_anatomy)
        .map_err(|e| PyValueError::new_err(format!("{path}: {e}")))?;
    Ok(Anatomy { inner })
}

#[pymodule]
fn aspects_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Mask>()?;
    m.add_class::<Anatomy>()?;
    m.add_class::<Report>()?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(dice, m)?)?;
    m.add_function(wrap_pyfunction!(bin_label, m)?)?;
    m.add_function(wrap_pyfunction!(volume_ml, m)?)?;
    m.add_function(wrap_pyfunction!(make_phantom, m)?)?;
    m.add_function(wrap_pyfunction!(agreement, m)?)?;
    m.add_function(wrap_pyfunction!(loss, m)?)?;
    m.add_function(wrap_pyfunction!(read_mask, m)?)?;
    m.add_function(wrap_pyfunction!(read_anatomy, m)?)?;
    Ok(())
}

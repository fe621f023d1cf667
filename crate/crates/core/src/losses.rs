//! Reference implementation of the composite segmentation loss and its
//! analytic gradients.
//!
//! The total loss is a weighted sum of three terms over a probability field
//! `p` and a binary ground truth `g`:
//!
//! ```text
//! L = alpha * L_focal + beta * L_boundary + gamma * L_dice
//! ```
//!
//! All three terms are means/ratios over the whole volume, all gradients are
//! exact derivatives of the implemented expressions (clamping included), and
//! everything runs in `f64` so central finite differences can be used to
//! verify the gradients tightly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_same_dims, BinaryMask, ProbabilityField, VoxelGrid};

/// Probabilities are clamped into `[PROB_CLAMP_EPS, 1 - PROB_CLAMP_EPS]`
/// before any logarithm so the focal term stays finite.
pub const PROB_CLAMP_EPS: f64 = 1e-7;

/// Weights of the three loss terms. The defaults `(3, 1, 1)` weight the
/// focal term three times as heavily as the boundary and dice terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 3.0,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

impl LossWeights {
    /// Builds weights, rejecting non-finite components.
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
            if !v.is_finite() {
                return Err(Error::domain(format!("loss weight {name} must be finite, got {v}")));
            }
        }
        Ok(LossWeights { alpha, beta, gamma })
    }
}

/// Parameters of the focal term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFocalParams")]
pub struct FocalParams {
    gamma_focal: f64,
    alpha_balance: f64,
}

#[derive(Deserialize)]
struct RawFocalParams {
    gamma_focal: f64,
    alpha_balance: f64,
}

impl TryFrom<RawFocalParams> for FocalParams {
    type Error = Error;

    fn try_from(raw: RawFocalParams) -> Result<Self> {
        FocalParams::new(raw.gamma_focal, raw.alpha_balance)
    }
}

impl Default for FocalParams {
    /// Focusing exponent 2.0, positive-class weight 0.25.
    fn default() -> Self {
        FocalParams {
            gamma_focal: 2.0,
            alpha_balance: 0.25,
        }
    }
}

impl FocalParams {
    /// Builds parameters; the focusing exponent must be >= 0 and the class
    /// balance strictly inside `(0, 1)`.
    pub fn new(gamma_focal: f64, alpha_balance: f64) -> Result<Self> {
        if !gamma_focal.is_finite() || gamma_focal < 0.0 {
            return Err(Error::domain(format!(
                "gamma_focal must be finite and >= 0, got {gamma_focal}"
            )));
        }
        if !alpha_balance.is_finite() || alpha_balance <= 0.0 || alpha_balance >= 1.0 {
            return Err(Error::domain(format!(
                "alpha_balance must lie strictly inside (0, 1), got {alpha_balance}"
            )));
        }
        Ok(FocalParams {
            gamma_focal,
            alpha_balance,
        })
    }

    pub fn gamma_focal(&self) -> f64 {
        self.gamma_focal
    }

    pub fn alpha_balance(&self) -> f64 {
        self.alpha_balance
    }
}

/// A loss value together with its gradient with respect to every voxel of
/// the probability field.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad: VoxelGrid<f64>,
}

/// One voxel's focal term: `-alpha_t * (1 - p_t)^gamma * ln(p_t)`, where
/// `p_t` is the probability assigned to the true class and `alpha_t` its
/// class weight. With `gamma = 0` and `alpha_t = 1` this is plain binary
/// cross-entropy.
pub fn focal_term(p_t: f64, alpha_t: f64, gamma: f64) -> f64 {
    -alpha_t * (1.0 - p_t).powf(gamma) * p_t.ln()
}

/// `(p_t, alpha_t, sign)` for one voxel; `sign` is `dp_t/dp`.
fn focal_voxel(p: f64, g: u8, params: &FocalParams) -> (f64, f64, f64) {
    let pc = p.clamp(PROB_CLAMP_EPS, 1.0 - PROB_CLAMP_EPS);
    if g == 1 {
        (pc, params.alpha_balance, 1.0)
    } else {
        (1.0 - pc, 1.0 - params.alpha_balance, -1.0)
    }
}

fn focal_value_raw(p: &[f64], g: &[u8], params: &FocalParams) -> f64 {
    let mut sum = 0.0;
    for (&pv, &gv) in p.iter().zip(g) {
        let (p_t, alpha_t, _) = focal_voxel(pv, gv, params);
        sum += focal_term(p_t, alpha_t, params.gamma_focal);
    }
    sum / p.len() as f64
}

fn focal_grad_raw(p: &[f64], g: &[u8], params: &FocalParams) -> Vec<f64> {
    let n = p.len() as f64;
    let gamma = params.gamma_focal;
    p.iter()
        .zip(g)
        .map(|(&pv, &gv)| {
            // outside the clamp window the term is constant in p
            if pv <= PROB_CLAMP_EPS || pv >= 1.0 - PROB_CLAMP_EPS {
                return 0.0;
            }
            let (p_t, alpha_t, sign) = focal_voxel(pv, gv, params);
            // d/dp_t of -alpha_t (1-p_t)^gamma ln(p_t):
            //   alpha_t * gamma * (1-p_t)^(gamma-1) * ln(p_t)
            // - alpha_t * (1-p_t)^gamma / p_t
            let one_minus = 1.0 - p_t;
            let first = if gamma == 0.0 {
                0.0
            } else {
                alpha_t * gamma * one_minus.powf(gamma - 1.0) * p_t.ln()
            };
            let second = alpha_t * one_minus.powf(gamma) / p_t;
            (first - second) * sign / n
        })
        .collect()
}

/// Mean focal loss over the volume, with its exact gradient.
///
/// Probabilities are clamped per [`PROB_CLAMP_EPS`] before the logarithm;
/// the gradient is the true derivative of the clamped expression, i.e. zero
/// at voxels sitting outside the clamp window.
pub fn focal_loss(
    p: &ProbabilityField,
    g: &BinaryMask,
    params: &FocalParams,
) -> Result<LossOutput> {
    check_same_dims("focal_loss", p.grid(), g.grid())?;
    let value = focal_value_raw(p.values(), g.data(), params);
    let grad = focal_grad_raw(p.values(), g.data(), params);
    Ok(LossOutput {
        value,
        grad: VoxelGrid::new(p.dims(), p.spacing(), grad)?,
    })
}

fn dice_sums(p: &[f64], g: &[u8]) -> (f64, f64, f64) {
    let mut sum_p = 0.0;
    let mut sum_g = 0.0;
    let mut sum_pg = 0.0;
    for (&pv, &gv) in p.iter().zip(g) {
        sum_p += pv;
        if gv == 1 {
            sum_g += 1.0;
            sum_pg += pv;
        }
    }
    (sum_p, sum_g, sum_pg)
}

fn dice_value_raw(p: &[f64], g: &[u8], smooth: f64) -> f64 {
    let (sum_p, sum_g, sum_pg) = dice_sums(p, g);
    1.0 - (2.0 * sum_pg + smooth) / (sum_p + sum_g + smooth)
}

fn dice_grad_raw(p: &[f64], g: &[u8], smooth: f64) -> Vec<f64> {
    let (sum_p, sum_g, sum_pg) = dice_sums(p, g);
    let denom = sum_p + sum_g + smooth;
    let numer = 2.0 * sum_pg + smooth;
    // d/dp_i [1 - numer/denom] = -(2 g_i * denom - numer) / denom^2
    g.iter()
        .map(|&gv| -((2.0 * gv as f64) * denom - numer) / (denom * denom))
        .collect()
}

/// Soft dice loss `1 - (2 sum(p*g) + smooth) / (sum(p) + sum(g) + smooth)`
/// with its exact gradient. `smooth` must be positive so the ratio is always
/// defined; 1.0 is the conventional choice.
pub fn dice_loss(p: &ProbabilityField, g: &BinaryMask, smooth: f64) -> Result<LossOutput> {
    check_same_dims("dice_loss", p.grid(), g.grid())?;
    if !smooth.is_finite() || smooth <= 0.0 {
        return Err(Error::domain(format!(
            "smooth must be finite and positive, got {smooth}"
        )));
    }
    let value = dice_value_raw(p.values(), g.data(), smooth);
    let grad = dice_grad_raw(p.values(), g.data(), smooth);
    Ok(LossOutput {
        value,
        grad: VoxelGrid::new(p.dims(), p.spacing(), grad)?,
    })
}

/// Signed Euclidean distance to a mask's boundary, in voxel units.
///
/// A boundary voxel is a set voxel with at least one 6-connected unset
/// neighbour (the volume edge does not count as unset). Boundary voxels get
/// 0, other set voxels the negated distance to the nearest boundary voxel
/// centre, unset voxels the positive distance.
///
/// A mask with no boundary (all-zero or all-one) yields a field of distances
/// to the virtual boundary one step outside the volume faces — positive for
/// the all-zero mask, negative for the all-one — and is flagged
/// [`SignedDistanceField::is_degenerate`]; the boundary loss refuses such
/// ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedDistanceField {
    grid: VoxelGrid<f64>,
    degenerate: bool,
}

impl SignedDistanceField {
    pub fn grid(&self) -> &VoxelGrid<f64> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        self.grid.data()
    }

    /// True when the source mask had no boundary (all-zero or all-one).
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

/// Sentinel for "no site yet" in the distance transform. Large enough to
/// dominate every real squared distance, small enough that adding a squared
/// coordinate keeps f64 arithmetic exact.
const DT_FAR: f64 = 1e15;

/// One-dimensional squared-distance lower envelope (the classic parabola
/// sweep). `f` holds squared distances per index; returns the transformed
/// row. Exact on integer-valued inputs.
fn dt_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n]; // site index of each envelope parabola
    let mut z = vec![0.0; n + 1]; // envelope breakpoints
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2 * (q - p)) as f64;
            if s <= z[k] {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q.abs_diff(p); // the owning site may lie on either side
        d[q] = (dq * dq) as f64 + f[p];
    }
    d
}

/// Exact squared Euclidean distance from every voxel to the nearest site,
/// by separable 1-D transforms along x, then y, then z.
fn squared_edt(dims: crate::grid::Dims, sites: &[bool]) -> Vec<f64> {
    let (nx, ny, nz) = (dims.nx, dims.ny, dims.nz);
    let mut d: Vec<f64> = sites
        .iter()
        .map(|&s| if s { 0.0 } else { DT_FAR })
        .collect();

    // x pass: rows are contiguous
    for row in d.chunks_mut(nx) {
        let t = dt_1d(row);
        row.copy_from_slice(&t);
    }

    // y pass
    let mut column = vec![0.0; ny];
    for z in 0..nz {
        for x in 0..nx {
            for y in 0..ny {
                column[y] = d[dims.index(x, y, z)];
            }
            let t = dt_1d(&column);
            for y in 0..ny {
                d[dims.index(x, y, z)] = t[y];
            }
        }
    }

    // z pass
    let mut pillar = vec![0.0; nz];
    for y in 0..ny {
        for x in 0..nx {
            for z in 0..nz {
                pillar[z] = d[dims.index(x, y, z)];
            }
            let t = dt_1d(&pillar);
            for z in 0..nz {
                d[dims.index(x, y, z)] = t[z];
            }
        }
    }

    d
}

/// Marks set voxels that touch an unset 6-neighbour within the volume.
fn boundary_voxels(g: &BinaryMask) -> Vec<bool> {
    let dims = g.dims();
    let (nx, ny, nz) = (dims.nx, dims.ny, dims.nz);
    let data = g.data();
    let mut boundary = vec![false; data.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = dims.index(x, y, z);
                if data[i] != 1 {
                    continue;
                }
                let unset = |xx: usize, yy: usize, zz: usize| data[dims.index(xx, yy, zz)] == 0;
                boundary[i] = (x > 0 && unset(x - 1, y, z))
                    || (x + 1 < nx && unset(x + 1, y, z))
                    || (y > 0 && unset(x, y - 1, z))
                    || (y + 1 < ny && unset(x, y + 1, z))
                    || (z > 0 && unset(x, y, z - 1))
                    || (z + 1 < nz && unset(x, y, z + 1));
            }
        }
    }
    boundary
}

/// Signed Euclidean distance field of a mask (see [`SignedDistanceField`]).
pub fn signed_distance(g: &BinaryMask) -> SignedDistanceField {
    let dims = g.dims();
    let boundary = boundary_voxels(g);

    if boundary.iter().all(|&b| !b) {
        // uniform mask: no internal boundary; fall back to the distance to
        // the virtual boundary one voxel outside the volume faces
        let all_set = g.data().iter().all(|&v| v == 1);
        let sign = if all_set { -1.0 } else { 1.0 };
        let data = (0..dims.len())
            .map(|i| {
                let (x, y, z) = dims.coords(i);
                let steps = (x + 1)
                    .min(dims.nx - x)
                    .min(y + 1)
                    .min(dims.ny - y)
                    .min(z + 1)
                    .min(dims.nz - z);
                sign * steps as f64
            })
            .collect();
        return SignedDistanceField {
            grid: VoxelGrid::new(dims, g.spacing(), data).expect("length preserved"),
            degenerate: true,
        };
    }

    let squared = squared_edt(dims, &boundary);
    let data = squared
        .iter()
        .zip(g.data())
        .map(|(&d2, &set)| {
            let d = d2.sqrt();
            if d == 0.0 {
                0.0
            } else if set == 1 {
                -d
            } else {
                d
            }
        })
        .collect();
    SignedDistanceField {
        grid: VoxelGrid::new(dims, g.spacing(), data).expect("length preserved"),
        degenerate: false,
    }
}

fn boundary_value_raw(p: &[f64], phi: &[f64]) -> f64 {
    let n = p.len() as f64;
    p.iter().zip(phi).map(|(&pv, &fv)| pv * fv).sum::<f64>() / n
}

/// Boundary loss: the mean over voxels of `p * phi_g`, where `phi_g` is the
/// signed distance field of the ground truth. Linear in `p`, so the gradient
/// is simply `phi_g / N`. Uniform ground truth has no boundary and is
/// rejected as degenerate.
pub fn boundary_loss(p: &ProbabilityField, g: &BinaryMask) -> Result<LossOutput> {
    check_same_dims("boundary_loss", p.grid(), g.grid())?;
    let phi = signed_distance(g);
    if phi.is_degenerate() {
        return Err(Error::Degenerate(
            "boundary loss needs a ground truth with a boundary; mask is all-zero or all-one"
                .into(),
        ));
    }
    let n = p.values().len() as f64;
    let value = boundary_value_raw(p.values(), phi.values());
    let grad = phi.values().iter().map(|&fv| fv / n).collect();
    Ok(LossOutput {
        value,
        grad: VoxelGrid::new(p.dims(), p.spacing(), grad)?,
    })
}

/// The composite loss: every component evaluated once, then combined.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedLoss {
    /// `alpha * focal + beta * boundary + gamma * dice`.
    pub value: f64,
    pub grad: VoxelGrid<f64>,
    pub focal: f64,
    pub boundary: f64,
    pub dice: f64,
}

/// Weighted sum of the three loss terms with its gradient. Component
/// preconditions apply regardless of the weights, so a uniform ground truth
/// is rejected even when `beta` is zero.
pub fn combined_loss(
    p: &ProbabilityField,
    g: &BinaryMask,
    weights: LossWeights,
    focal_params: &FocalParams,
    smooth: f64,
) -> Result<CombinedLoss> {
    let f = focal_loss(p, g, focal_params)?;
    let b = boundary_loss(p, g)?;
    let d = dice_loss(p, g, smooth)?;
    let value = weights.alpha * f.value + weights.beta * b.value + weights.gamma * d.value;
    let grad = f
        .grad
        .data()
        .iter()
        .zip(b.grad.data())
        .zip(d.grad.data())
        .map(|((&gf, &gb), &gd)| weights.alpha * gf + weights.beta * gb + weights.gamma * gd)
        .collect();
    Ok(CombinedLoss {
        value,
        grad: VoxelGrid::new(p.dims(), p.spacing(), grad)?,
        focal: f.value,
        boundary: b.value,
        dice: d.value,
    })
}

/// Finite-difference verification of one component's analytic gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientCheckEntry {
    /// Component name: `focal`, `boundary`, `dice` or `combined`.
    pub component: &'static str,
    /// Largest relative error between analytic and central-difference
    /// gradient over the sampled voxels; 0.0 when nothing was sampled.
    pub max_rel_err: f64,
    /// Number of voxels actually compared.
    pub sampled: usize,
}

/// Central-difference check of all four gradients at step `step`.
///
/// For the focal term (and therefore the combined loss) only voxels whose
/// probability keeps `p +/- step` strictly inside the clamp window are
/// sampled — a central difference straddling the clamp kink measures the
/// kink, not the derivative. The boundary and dice terms are smooth
/// everywhere, so every voxel is eligible. At most 256 voxels per component
/// are compared, evenly spaced over the eligible ones.
pub fn gradient_check(
    p: &ProbabilityField,
    g: &BinaryMask,
    weights: LossWeights,
    focal_params: &FocalParams,
    smooth: f64,
    step: f64,
) -> Result<Vec<GradientCheckEntry>> {
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::domain(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let combined = combined_loss(p, g, weights, focal_params, smooth)?;
    let focal = focal_loss(p, g, focal_params)?;
    let boundary = boundary_loss(p, g)?;
    let dice = dice_loss(p, g, smooth)?;

    let values = p.values();
    let gdata = g.data();
    let phi = signed_distance(g);
    let all: Vec<usize> = (0..values.len()).collect();
    let interior: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&i| {
            values[i] - step > PROB_CLAMP_EPS && values[i] + step < 1.0 - PROB_CLAMP_EPS
        })
        .collect();

    let fp = focal_params;
    let entries = vec![
        check_component(
            "focal",
            values,
            focal.grad.data(),
            &interior,
            step,
            |pv| focal_value_raw(pv, gdata, fp),
        ),
        check_component(
            "boundary",
            values,
            boundary.grad.data(),
            &all,
            step,
            |pv| boundary_value_raw(pv, phi.values()),
        ),
        check_component("dice", values, dice.grad.data(), &all, step, |pv| {
            dice_value_raw(pv, gdata, smooth)
        }),
        check_component(
            "combined",
            values,
            combined.grad.data(),
            &interior,
            step,
            |pv| {
                weights.alpha * focal_value_raw(pv, gdata, fp)
                    + weights.beta * boundary_value_raw(pv, phi.values())
                    + weights.gamma * dice_value_raw(pv, gdata, smooth)
            },
        ),
    ];
    Ok(entries)
}

fn check_component(
    component: &'static str,
    p: &[f64],
    grad: &[f64],
    eligible: &[usize],
    step: f64,
    eval: impl Fn(&[f64]) -> f64,
) -> GradientCheckEntry {
    const MAX_SAMPLES: usize = 256;
    let sample: Vec<usize> = if eligible.len() <= MAX_SAMPLES {
        eligible.to_vec()
    } else {
        (0..MAX_SAMPLES)
            .map(|k| eligible[k * eligible.len() / MAX_SAMPLES])
            .collect()
    };

    let mut work = p.to_vec();
    let mut max_rel_err = 0.0f64;
    for &i in &sample {
        let original = work[i];
        work[i] = original + step;
        let plus = eval(&work);
        work[i] = original - step;
        let minus = eval(&work);
        work[i] = original;
        let fd = (plus - minus) / (2.0 * step);
        max_rel_err = max_rel_err.max(relative_error(grad[i], fd));
    }
    GradientCheckEntry {
        component,
        max_rel_err,
        sampled: sample.len(),
    }
}

/// Relative disagreement of two gradient estimates; zero when both are
/// negligibly small.
pub fn relative_error(analytic: f64, finite_diff: f64) -> f64 {
    let scale = analytic.abs().max(finite_diff.abs());
    if scale < 1e-12 {
        0.0
    } else {
        (analytic - finite_diff).abs() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Dims, Spacing};

    fn dims(n: usize) -> Dims {
        Dims::new(n, 1, 1).unwrap()
    }

    fn sp() -> Spacing {
        Spacing::isotropic(1.0).unwrap()
    }

    fn field(data: Vec<f64>) -> ProbabilityField {
        ProbabilityField::from_parts(dims(data.len()), sp(), data).unwrap()
    }

    fn mask(data: Vec<u8>) -> BinaryMask {
        BinaryMask::from_parts(dims(data.len()), sp(), data).unwrap()
    }

    #[test]
    fn focal_term_at_half_confidence() {
        // gamma 2, full class weight: 0.25 * ln 2
        let expected = 0.25 * std::f64::consts::LN_2;
        assert!((focal_term(0.5, 1.0, 2.0) - expected).abs() < 1e-15);
    }

    #[test]
    fn focal_term_with_zero_gamma_is_cross_entropy() {
        // gamma 0, unit class weight reduces to -ln(p_t); at p_t = 0.5 -> ln 2
        assert!((focal_term(0.5, 1.0, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn focal_loss_is_tiny_for_a_confident_correct_prediction() {
        let g = mask(vec![1, 1, 0, 0]);
        let p = field(vec![1.0, 1.0, 0.0, 0.0]);
        let out = focal_loss(&p, &g, &FocalParams::default()).unwrap();
        assert!(out.value.abs() <= 1e-5, "value {}", out.value);
        // clamped voxels carry zero gradient
        assert!(out.grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn focal_params_reject_bad_ranges() {
        assert!(FocalParams::new(-0.1, 0.25).is_err());
        assert!(FocalParams::new(2.0, 0.0).is_err());
        assert!(FocalParams::new(2.0, 1.0).is_err());
        assert!(FocalParams::new(0.0, 0.5).is_ok());
    }

    #[test]
    fn dice_loss_at_half_confidence_matches_hand_arithmetic() {
        // 100 positive voxels, p = 0.5 on them, 0 elsewhere, smooth 1:
        // 1 - (2*50 + 1) / (50 + 100 + 1) = 50/151
        let mut g = vec![0u8; 151];
        let mut p = vec![0.0; 151];
        for i in 0..100 {
            g[i] = 1;
            p[i] = 0.5;
        }
        let out = dice_loss(&field(p), &mask(g), 1.0).unwrap();
        assert!((out.value - 50.0 / 151.0).abs() < 1e-15);
    }

    #[test]
    fn dice_loss_is_zero_for_exact_match() {
        let g = mask(vec![1, 0, 1, 0]);
        let p = field(vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(dice_loss(&p, &g, 1.0).unwrap().value, 0.0);
    }

    #[test]
    fn dice_loss_rejects_non_positive_smooth() {
        let g = mask(vec![1, 0]);
        let p = field(vec![0.5, 0.5]);
        assert!(dice_loss(&p, &g, 0.0).is_err());
        assert!(dice_loss(&p, &g, -1.0).is_err());
    }

    fn sdf_for(dims: Dims, set: &[(usize, usize, usize)]) -> SignedDistanceField {
        let mut data = vec![0u8; dims.len()];
        for &(x, y, z) in set {
            data[dims.index(x, y, z)] = 1;
        }
        signed_distance(&BinaryMask::from_parts(dims, sp(), data).unwrap())
    }

    #[test]
    fn single_voxel_is_its_own_boundary() {
        let d = Dims::new(5, 5, 5).unwrap();
        let phi = sdf_for(d, &[(2, 2, 2)]);
        assert!(!phi.is_degenerate());
        let at = |x, y, z| phi.values()[d.index(x, y, z)];
        assert_eq!(at(2, 2, 2), 0.0);
        assert_eq!(at(1, 2, 2), 1.0);
        assert_eq!(at(3, 2, 2), 1.0);
        assert_eq!(at(2, 1, 2), 1.0);
        assert_eq!(at(2, 2, 3), 1.0);
        assert_eq!(at(1, 1, 2), 2.0f64.sqrt());
        assert_eq!(at(1, 1, 1), 3.0f64.sqrt());
        assert_eq!(at(0, 2, 2), 2.0);
    }

    #[test]
    fn solid_block_interior_is_negative() {
        // 5^3 block centred in a 7^3 grid; centre sits 2 voxels from the
        // boundary shell
        let d = Dims::new(7, 7, 7).unwrap();
        let mut set = Vec::new();
        for z in 1..6 {
            for y in 1..6 {
                for x in 1..6 {
                    set.push((x, y, z));
                }
            }
        }
        let phi = sdf_for(d, &set);
        assert_eq!(phi.values()[d.index(3, 3, 3)], -2.0);
        // voxels of the block's outer layer are boundary
        assert_eq!(phi.values()[d.index(1, 3, 3)], 0.0);
        // just outside the block
        assert_eq!(phi.values()[d.index(0, 3, 3)], 1.0);
    }

    #[test]
    fn complement_flips_the_sign_everywhere() {
        // the boundary shell moves to the other side of the surface when the
        // mask is complemented, so magnitudes shift, but no voxel may keep a
        // strictly positive product of the two fields
        let d = Dims::new(6, 5, 4).unwrap();
        let mut data = vec![0u8; d.len()];
        for (i, v) in data.iter_mut().enumerate() {
            // an arbitrary but fixed non-uniform pattern
            *v = ((i * 2654435761) >> 7 & 1) as u8;
        }
        let g = BinaryMask::from_parts(d, sp(), data.clone()).unwrap();
        let flipped: Vec<u8> = data.iter().map(|&v| 1 - v).collect();
        let gc = BinaryMask::from_parts(d, sp(), flipped).unwrap();
        let phi = signed_distance(&g);
        let phic = signed_distance(&gc);
        for (a, b) in phi.values().iter().zip(phic.values()) {
            assert!(a * b <= 0.0, "signs must oppose, got {a} and {b}");
        }
    }

    #[test]
    fn uniform_masks_fall_back_to_the_virtual_boundary() {
        let d = Dims::new(4, 4, 4).unwrap();
        let zeros = BinaryMask::empty(d, sp());
        let phi = signed_distance(&zeros);
        assert!(phi.is_degenerate());
        // corner voxel is one step from the virtual boundary
        assert_eq!(phi.values()[d.index(0, 0, 0)], 1.0);
        // most interior voxel of a 4-wide axis is 2 steps in
        assert_eq!(phi.values()[d.index(1, 1, 1)], 2.0);
        assert!(phi.values().iter().all(|&v| v > 0.0));

        let ones = BinaryMask::from_parts(d, sp(), vec![1; d.len()]).unwrap();
        let phi = signed_distance(&ones);
        assert!(phi.is_degenerate());
        assert!(phi.values().iter().all(|&v| v < 0.0));
    }

    #[test]
    fn boundary_loss_of_zero_field_is_zero() {
        let g = mask(vec![1, 1, 0, 0]);
        let p = field(vec![0.0; 4]);
        assert_eq!(boundary_loss(&p, &g).unwrap().value, 0.0);
    }

    #[test]
    fn boundary_loss_scales_with_the_distance_under_the_mass() {
        // 7^3 grid, 5^3 block: put all probability mass on the voxel with
        // phi = -2; the mean is -2/343
        let d = Dims::new(7, 7, 7).unwrap();
        let mut gdata = vec![0u8; d.len()];
        for z in 1..6 {
            for y in 1..6 {
                for x in 1..6 {
                    gdata[d.index(x, y, z)] = 1;
                }
            }
        }
        let g = BinaryMask::from_parts(d, sp(), gdata).unwrap();
        let mut pdata = vec![0.0; d.len()];
        pdata[d.index(3, 3, 3)] = 1.0;
        let p = ProbabilityField::from_parts(d, sp(), pdata).unwrap();
        let out = boundary_loss(&p, &g).unwrap();
        assert!((out.value - (-2.0 / 343.0)).abs() < 1e-15);
    }

    #[test]
    fn boundary_loss_gradient_ignores_p() {
        let g = mask(vec![1, 1, 0, 0]);
        let a = boundary_loss(&field(vec![0.1, 0.2, 0.3, 0.4]), &g).unwrap();
        let b = boundary_loss(&field(vec![0.9, 0.8, 0.7, 0.6]), &g).unwrap();
        assert_eq!(a.grad, b.grad);
    }

    #[test]
    fn boundary_loss_rejects_uniform_ground_truth() {
        let p = field(vec![0.5; 4]);
        assert!(matches!(
            boundary_loss(&p, &mask(vec![0, 0, 0, 0])),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            boundary_loss(&p, &mask(vec![1, 1, 1, 1])),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn combined_loss_is_the_weighted_sum_of_its_parts() {
        let g = mask(vec![1, 1, 0, 0, 1, 0]);
        let p = field(vec![0.9, 0.7, 0.2, 0.1, 0.6, 0.3]);
        let params = FocalParams::default();
        let out = combined_loss(&p, &g, LossWeights::default(), &params, 1.0).unwrap();
        let f = focal_loss(&p, &g, &params).unwrap();
        let b = boundary_loss(&p, &g).unwrap();
        let d = dice_loss(&p, &g, 1.0).unwrap();
        assert!((out.value - (3.0 * f.value + b.value + d.value)).abs() < 1e-12);
        assert_eq!(out.focal, f.value);
        assert_eq!(out.boundary, b.value);
        assert_eq!(out.dice, d.value);
    }

    #[test]
    fn combined_loss_with_focal_only_weights_equals_focal() {
        let g = mask(vec![1, 0, 1, 0]);
        let p = field(vec![0.8, 0.3, 0.6, 0.4]);
        let params = FocalParams::default();
        let w = LossWeights::new(1.0, 0.0, 0.0).unwrap();
        let out = combined_loss(&p, &g, w, &params, 1.0).unwrap();
        let f = focal_loss(&p, &g, &params).unwrap();
        assert_eq!(out.value, f.value);
        let same = out
            .grad
            .data()
            .iter()
            .zip(f.grad.data())
            .all(|(&a, &b)| (a - b).abs() < 1e-15);
        assert!(same);
    }

    #[test]
    fn doubling_all_weights_doubles_the_value_exactly() {
        let g = mask(vec![1, 0, 1, 0, 0]);
        let p = field(vec![0.8, 0.3, 0.6, 0.4, 0.2]);
        let params = FocalParams::default();
        let w1 = LossWeights::new(3.0, 1.0, 1.0).unwrap();
        let w2 = LossWeights::new(6.0, 2.0, 2.0).unwrap();
        let a = combined_loss(&p, &g, w1, &params, 1.0).unwrap();
        let b = combined_loss(&p, &g, w2, &params, 1.0).unwrap();
        assert_eq!(b.value, 2.0 * a.value);
    }

    #[test]
    fn gradient_check_passes_on_a_smooth_field() {
        let g = mask(vec![1, 1, 0, 0, 1, 0, 0, 1]);
        let p = field(vec![0.9, 0.6, 0.2, 0.4, 0.7, 0.1, 0.3, 0.8]);
        let report = gradient_check(
            &p,
            &g,
            LossWeights::default(),
            &FocalParams::default(),
            1.0,
            1e-5,
        )
        .unwrap();
        assert_eq!(report.len(), 4);
        for entry in &report {
            assert!(
                entry.max_rel_err <= 1e-4,
                "{}: {}",
                entry.component,
                entry.max_rel_err
            );
            assert!(entry.sampled > 0);
        }
    }

    #[test]
    fn relative_error_detects_a_corrupted_gradient() {
        // self-test of the checker: a wrong analytic value must show up
        assert!(relative_error(1.0, 1.0) == 0.0);
        assert!(relative_error(1.0, 1.5) > 1e-4);
        assert!(relative_error(0.0, 0.0) == 0.0);
        // both negligibly small counts as agreement
        assert!(relative_error(1e-14, -1e-14) == 0.0);
    }

    #[test]
    fn gradient_check_rejects_bad_step() {
        let g = mask(vec![1, 0]);
        let p = field(vec![0.5, 0.5]);
        assert!(gradient_check(
            &p,
            &g,
            LossWeights::default(),
            &FocalParams::default(),
            1.0,
            0.0
        )
        .is_err());
    }
}

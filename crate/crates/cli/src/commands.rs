//! The five subcommands. Each returns the process exit code on success and
//! maps domain errors to the stable code contract in `main`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use aspects_core::io::{read_score_table, read_volume, write_report, write_volume};
use aspects_core::losses::{combined_loss, gradient_check, relative_error};
use aspects_core::metrics::{
    agreement, binned_table, dice, dice_by_volume_bucket, per_region_dice, per_score_table,
    PairedRegions,
};
use aspects_core::phantom::{default_plan, make_anatomy, make_infarct, LesionSite, PhantomSpec};
use aspects_core::{
    score, AnatomyLabelMap, BinaryMask, Dims, Error, Hemisphere, ProbabilityField, Region,
    Result, Spacing,
};
use serde::Serialize;

use crate::config::resolve;

/// Largest relative error the gradient check may report and still pass.
const GRADIENT_TOLERANCE: f64 = 1e-4;
/// Central-difference step used by the gradient check.
const GRADIENT_STEP: f64 = 1e-5;

fn with_path(path: &Path, e: Error) -> Error {
    Error::domain(format!("{}: {e}", path.display()))
}

fn read_mask(path: &Path) -> Result<BinaryMask> {
    read_volume(path)
        .and_then(|v| v.into_binary_mask())
        .map_err(|e| with_path(path, e))
}

fn read_anatomy(path: &Path) -> Result<AnatomyLabelMap> {
    read_volume(path)
        .and_then(|v| v.into_anatomy())
        .map_err(|e| with_path(path, e))
}

fn read_probability(path: &Path) -> Result<ProbabilityField> {
    read_volume(path)
        .and_then(|v| v.into_probability())
        .map_err(|e| with_path(path, e))
}

fn involvement_line(h: Hemisphere, regions: &std::collections::BTreeSet<Region>) -> String {
    if regions.is_empty() {
        format!("{h} involved: none")
    } else {
        let names: Vec<String> = regions.iter().map(|r| r.to_string()).collect();
        format!("{h} involved: {}", names.join(", "))
    }
}

pub fn cmd_score(
    infarct: &Path,
    anatomy: &Path,
    out: Option<&Path>,
    policy_json: Option<&str>,
    config: Option<&Path>,
) -> Result<i32> {
    let settings = resolve(config, policy_json, None)?;
    let infarct = read_mask(infarct)?;
    let anatomy = read_anatomy(anatomy)?;
    let report = score(&infarct, &anatomy, settings.policy)?;
    if let Some(path) = out {
        write_report(&report, path)?;
    }
    println!("score: {}/10, bin: {}", report.affected_score(), report.bin.label());
    println!("affected: {}", report.affected_hemisphere);
    println!("volume: {} ml", report.infarct_volume_ml);
    println!("{}", involvement_line(Hemisphere::Left, &report.left.involved));
    println!("{}", involvement_line(Hemisphere::Right, &report.right.involved));
    Ok(0)
}

#[derive(Serialize)]
struct CaseEvalJson {
    pred: PathBuf,
    gt: PathBuf,
    dice: f64,
    sensitivity: f64,
    specificity: f64,
}

#[derive(Serialize)]
struct BucketJson {
    bucket: &'static str,
    cases: usize,
    mean_dice: f64,
}

#[derive(Serialize)]
struct MaskEvalJson {
    cases: usize,
    mean_dice: f64,
    mean_sensitivity: f64,
    mean_specificity: f64,
    by_gt_volume: Vec<BucketJson>,
    per_case: Vec<CaseEvalJson>,
}

#[derive(Serialize)]
struct RegionEvalJson {
    cases: usize,
    per_region: BTreeMap<String, f64>,
    paired: BTreeMap<String, f64>,
    overall: f64,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn cmd_eval_seg(
    pred: &[PathBuf],
    gt: &[PathBuf],
    anatomy_mode: bool,
    out: Option<&Path>,
) -> Result<i32> {
    if pred.len() != gt.len() {
        return Err(Error::domain(format!(
            "--pred and --gt must list the same number of files ({} vs {})",
            pred.len(),
            gt.len()
        )));
    }
    if anatomy_mode {
        eval_label_maps(pred, gt, out)
    } else {
        eval_masks(pred, gt, out)
    }
}

/// Mask mode: overall Dice and confusion rates, then Dice grouped by
/// ground-truth lesion volume.
fn eval_masks(pred: &[PathBuf], gt: &[PathBuf], out: Option<&Path>) -> Result<i32> {
    let mut cases = Vec::new();
    for (p_path, g_path) in pred.iter().zip(gt) {
        let p = read_mask(p_path)?;
        let g = read_mask(g_path)?;
        cases.push((p, g));
    }

    let mut per_case = Vec::new();
    for ((p, g), (p_path, g_path)) in cases.iter().zip(pred.iter().zip(gt)) {
        let d = dice(p, g).map_err(|e| {
            Error::geometry(format!("{} vs {}: {e}", p_path.display(), g_path.display()))
        })?;
        let conf = aspects_core::metrics::voxel_confusion(p, g)?;
        per_case.push(CaseEvalJson {
            pred: p_path.clone(),
            gt: g_path.clone(),
            dice: d,
            sensitivity: conf.sensitivity(),
            specificity: conf.specificity(),
        });
    }

    let n = per_case.len() as f64;
    let mean = |f: &dyn Fn(&CaseEvalJson) -> f64| per_case.iter().map(|c| f(c)).sum::<f64>() / n;
    let mean_dice = mean(&|c| c.dice);
    let mean_sens = mean(&|c| c.sensitivity);
    let mean_spec = mean(&|c| c.specificity);

    let refs: Vec<(&BinaryMask, &BinaryMask)> = cases.iter().map(|(p, g)| (p, g)).collect();
    let buckets = dice_by_volume_bucket(&refs)?;

    println!("cases: {}", per_case.len());
    println!("mean dice: {mean_dice:.4}");
    println!("mean sensitivity: {mean_sens:.4}");
    println!("mean specificity: {mean_spec:.4}");
    println!("by ground-truth volume:");
    let mut bucket_rows = Vec::new();
    for (bucket, stats) in &buckets {
        println!(
            "  {:<8} {:>3} cases  mean dice {:.4}",
            bucket.label(),
            stats.cases,
            stats.mean_dice
        );
        bucket_rows.push(BucketJson {
            bucket: bucket.label(),
            cases: stats.cases,
            mean_dice: stats.mean_dice,
        });
    }

    if let Some(path) = out {
        write_json(
            &MaskEvalJson {
                cases: per_case.len(),
                mean_dice,
                mean_sensitivity: mean_sens,
                mean_specificity: mean_spec,
                by_gt_volume: bucket_rows,
                per_case,
            },
            path,
        )?;
    }
    Ok(0)
}

/// Anatomy mode: the files are 20-label maps; report Dice per region,
/// merged across hemispheres, plus the paired M-region view.
fn eval_label_maps(pred: &[PathBuf], gt: &[PathBuf], out: Option<&Path>) -> Result<i32> {
    let mut per_region_sum: BTreeMap<Region, f64> = Region::ALL.iter().map(|&r| (r, 0.0)).collect();
    let mut paired_sum: BTreeMap<PairedRegions, f64> =
        PairedRegions::ALL.iter().map(|&p| (p, 0.0)).collect();
    let mut overall_sum = 0.0;

    for (p_path, g_path) in pred.iter().zip(gt) {
        let p = read_anatomy(p_path)?;
        let g = read_anatomy(g_path)?;
        let rep = per_region_dice(&p, &g).map_err(|e| {
            Error::geometry(format!("{} vs {}: {e}", p_path.display(), g_path.display()))
        })?;
        for (r, d) in &rep.per_region {
            *per_region_sum.get_mut(r).unwrap() += d;
        }
        for (pr, d) in &rep.paired {
            *paired_sum.get_mut(pr).unwrap() += d;
        }
        overall_sum += rep.overall;
    }

    let n = pred.len() as f64;
    println!("cases: {}", pred.len());
    println!("per-region dice (hemispheres merged):");
    for (r, sum) in &per_region_sum {
        println!("  {:<18} {:.4}", r.to_string(), sum / n);
    }
    println!("paired m-regions:");
    for (pr, sum) in &paired_sum {
        println!("  {:<18} {:.4}", pr.label(), sum / n);
    }
    println!("overall: {:.4}", overall_sum / n);

    if let Some(path) = out {
        write_json(
            &RegionEvalJson {
                cases: pred.len(),
                per_region: per_region_sum
                    .iter()
                    .map(|(r, s)| (r.to_string(), s / n))
                    .collect(),
                paired: paired_sum
                    .iter()
                    .map(|(p, s)| (p.label().to_string(), s / n))
                    .collect(),
                overall: overall_sum / n,
            },
            path,
        )?;
    }
    Ok(0)
}

fn rate_cell(rate: Option<f64>) -> String {
    match rate {
        Some(v) => format!("{v:.4}"),
        None => "n/a".to_string(),
    }
}

pub fn cmd_agreement(table_path: &Path) -> Result<i32> {
    let table = read_score_table(table_path).map_err(|e| with_path(table_path, e))?;
    let stats = agreement(&table)?;

    println!("n: {}", stats.n);
    println!("exact agreement: {:.2}%", stats.exact_pct);
    println!("within 2 points: {:.2}%", stats.within2_pct);
    match stats.pearson_r {
        Some(r) => println!("pearson r: {r:.4}"),
        None => println!("pearson r: undefined"),
    }

    println!("per-score rates (column b as reference):");
    println!("  score  sensitivity  specificity");
    for (s, rates) in per_score_table(&table)? {
        println!(
            "  {:>5}  {:>11}  {:>11}",
            s,
            rate_cell(rates.sensitivity),
            rate_cell(rates.specificity)
        );
    }

    println!("binned rates:");
    println!("  bin       sensitivity  specificity");
    for (bin, rates) in binned_table(&table)? {
        println!(
            "  {:<8}  {:>11}  {:>11}",
            bin.label(),
            rate_cell(rates.sensitivity),
            rate_cell(rates.specificity)
        );
    }
    Ok(0)
}

fn parse_triple(text: &str, what: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = text.split('x').collect();
    if parts.len() != 3 {
        return Err(Error::domain(format!(
            "{what} must look like AxBxC, got {text:?}"
        )));
    }
    let mut vals = [0.0f64; 3];
    for (slot, part) in vals.iter_mut().zip(&parts) {
        *slot = part
            .parse()
            .map_err(|_| Error::domain(format!("{what}: {part:?} is not a number")))?;
    }
    Ok((vals[0], vals[1], vals[2]))
}

pub fn cmd_phantom(
    seed: u64,
    out_dir: &Path,
    plan_json: Option<&str>,
    dims_text: &str,
    spacing_text: &str,
) -> Result<i32> {
    let (nx, ny, nz) = parse_triple(dims_text, "--dims")?;
    if nx.fract() != 0.0 || ny.fract() != 0.0 || nz.fract() != 0.0 {
        return Err(Error::domain(format!(
            "--dims must be integers, got {dims_text:?}"
        )));
    }
    let dims = Dims::new(nx as usize, ny as usize, nz as usize)?;
    let (sx, sy, sz) = parse_triple(spacing_text, "--spacing")?;
    let spacing = Spacing::new(sx, sy, sz)?;

    let plan: Vec<LesionSite> = match plan_json {
        Some(text) => serde_json::from_str(text)
            .map_err(|e| Error::domain(format!("--plan: {e}")))?,
        None => default_plan(),
    };

    let spec = PhantomSpec {
        seed,
        dims,
        spacing,
        lesion_plan: plan,
    };
    let anatomy = make_anatomy(&spec)?;
    let (infarct, expected) = make_infarct(&spec, &anatomy)?;

    std::fs::create_dir_all(out_dir)?;
    let anatomy_path = out_dir.join("anatomy.mha");
    let infarct_path = out_dir.join("infarct.mha");
    let report_path = out_dir.join("expected_report.json");
    write_volume(anatomy.grid(), &anatomy_path)?;
    write_volume(infarct.grid(), &infarct_path)?;
    write_report(&expected, &report_path)?;

    println!("wrote {}", anatomy_path.display());
    println!("wrote {}", infarct_path.display());
    println!("wrote {}", report_path.display());
    println!(
        "expected score: {}/10 ({}), bin: {}",
        expected.affected_score(),
        expected.affected_hemisphere,
        expected.bin.label()
    );
    Ok(0)
}

pub fn cmd_loss_check(
    prob_path: &Path,
    gt_path: &Path,
    weights_json: Option<&str>,
    config: Option<&Path>,
    corrupt_gradient: bool,
) -> Result<i32> {
    let settings = resolve(config, None, weights_json)?;
    let prob = read_probability(prob_path)?;
    let gt = read_mask(gt_path)?;
    let w = settings.weights;

    let combined = combined_loss(&prob, &gt, w, &settings.focal, settings.smooth)?;
    println!("weights: ({}, {}, {})", w.alpha, w.beta, w.gamma);
    println!("L1 (focal): {:.6}", combined.focal);
    println!("L2 (boundary): {:.6}", combined.boundary);
    println!("L3 (dice): {:.6}", combined.dice);
    println!("L (combined): {:.6}", combined.value);

    let entries = gradient_check(
        &prob,
        &gt,
        w,
        &settings.focal,
        settings.smooth,
        GRADIENT_STEP,
    )?;
    println!("gradient check (central differences, step {GRADIENT_STEP:e}, tolerance {GRADIENT_TOLERANCE:e}):");
    let mut worst: f64 = 0.0;
    for e in &entries {
        println!(
            "  {:<9} max rel err {:>10.3e}  ({} samples)",
            e.component, e.max_rel_err, e.sampled
        );
        worst = worst.max(e.max_rel_err);
    }

    if corrupt_gradient {
        // self-test of the failure path: damage one gradient entry and let
        // the same comparison catch it
        let i = 0;
        let damaged = combined.grad.data()[i] * 2.0 + 1.0;
        let fd = {
            let step = GRADIENT_STEP;
            let base = prob.values().to_vec();
            let eval = |v: f64| -> Result<f64> {
                let mut data = base.clone();
                data[i] = v;
                let probe = ProbabilityField::from_parts(prob.dims(), prob.spacing(), data)?;
                Ok(combined_loss(&probe, &gt, w, &settings.focal, settings.smooth)?.value)
            };
            let v = base[i].clamp(step * 2.0, 1.0 - step * 2.0);
            (eval(v + step)? - eval(v - step)?) / (2.0 * step)
        };
        let err = relative_error(damaged, fd);
        println!("  {:<9} max rel err {:>10.3e}  (1 sample, deliberately corrupted)", "injected", err);
        worst = worst.max(err);
    }

    if worst <= GRADIENT_TOLERANCE {
        println!("gradient check: PASS");
        Ok(0)
    } else {
        println!("gradient check: FAIL");
        Ok(1)
    }
}

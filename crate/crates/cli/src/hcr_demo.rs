use std::path::{Path, PathBuf};

use anyhow::Context;
use cdfkan::data::{sample_gaussian_2d, GAUSSIAN_2D_COVARIANCE};
use cdfkan::hcr::{estimate_coefficients, full_basis, HcrModel};
use cdfkan::normalize::{edf_normalize, minmax_normalize};
use clap::Args;
use ndarray::Array2;
use serde_json::{json, Value};

use crate::manifest::RunManifest;
use crate::{prepare_out, UsageError};

#[derive(Debug, Args)]
pub struct HcrDemoArgs {
    /// Sample size.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Largest Legendre degree per coordinate.
    #[arg(long, default_value_t = 4)]
    degree: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Nodes per axis of the exported density grids.
    #[arg(long, default_value_t = 101)]
    grid: usize,
    /// Cells per axis for the negative-area estimate.
    #[arg(long, default_value_t = 400)]
    cells: usize,
    /// Clipping floor of the calibrated grid.
    #[arg(long, default_value_t = 1e-3)]
    floor: f64,
    /// Use independent coordinates (identity covariance) instead of [[3,2],[2,3]].
    #[arg(long)]
    independent: bool,
    /// Run directory; nothing is written outside it.
    #[arg(long)]
    out: PathBuf,
}

fn write_grid(path: &Path, raw: &Array2<f64>, calibrated: &Array2<f64>) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["x", "y", "density", "calibrated"])?;
    let last = (raw.nrows() - 1) as f64;
    for ((i, k), v) in raw.indexed_iter() {
        w.write_record([
            (i as f64 / last).to_string(),
            (k as f64 / last).to_string(),
            v.to_string(),
            calibrated[[i, k]].to_string(),
        ])?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Fits the density to `u`, exports its grids and returns its summary.
fn analyze(
    name: &str,
    u: Array2<f64>,
    args: &HcrDemoArgs,
    manifest: &mut RunManifest,
) -> anyhow::Result<(Value, f64)> {
    let model: HcrModel<f64> = estimate_coefficients(u.view(), &full_basis(2, args.degree), args.degree)?;
    let negative = model.negative_area_fraction(args.cells)?;
    let raw = model.density_grid(args.grid)?;
    let calibrated = model.calibrate_density_2d(args.floor, args.grid)?;
    let path = args.out.join(format!("density_{name}.csv"));
    write_grid(&path, &raw, &calibrated.values)?;
    manifest.output(&path);

    // Under independence n·Σâ² over the k cross terms is roughly χ²_k.
    let k = (args.degree * args.degree) as f64;
    let mi_null_bound = (k + 3.0 * (2.0 * k).sqrt()) / args.n as f64;
    let coefficients: Vec<Value> = model
        .coefficients()
        .map(|(idx, a)| json!([idx.as_slice()[0], idx.as_slice()[1], a]))
        .collect();
    let summary = json!({
        "negative_area_fraction": negative,
        "entropy_approx": model.entropy_approx(),
        "entropy_second_order": model.entropy_second_order(),
        "mutual_information_approx": model.mutual_information_approx(&[0], &[1])?,
        "mutual_information_second_order": model.mutual_information_second_order(&[0], &[1])?,
        "mutual_information_null_bound": mi_null_bound,
        "calibrated_integral": calibrated.integral(),
        "calibration_normalizer": calibrated.normalizer,
        "density_grid": path.file_name().map(|f| f.to_string_lossy().into_owned()),
        "coefficients": coefficients,
    });
    Ok((summary, negative))
}

pub fn cmd_hcr_demo(args: HcrDemoArgs) -> anyhow::Result<()> {
    if args.n < 2 || args.degree == 0 || args.cells == 0 || args.grid < cdfkan::hcr::MIN_CALIBRATION_GRID {
        return Err(UsageError(format!(
            "need n >= 2, degree >= 1, cells >= 1 and grid >= {}",
            cdfkan::hcr::MIN_CALIBRATION_GRID
        ))
        .into());
    }
    if !(args.floor > 0.0) {
        return Err(UsageError("--floor must be positive".into()).into());
    }
    let covariance = if args.independent {
        [[1.0, 0.0], [0.0, 1.0]]
    } else {
        GAUSSIAN_2D_COVARIANCE
    };
    let config = json!({
        "n": args.n,
        "degree": args.degree,
        "seed": args.seed,
        "grid": args.grid,
        "cells": args.cells,
        "floor": args.floor,
        "covariance": covariance,
        "out": args.out,
    });
    let mut manifest = RunManifest::start("hcr-demo", config, args.seed);
    prepare_out(&args.out)?;
    let data = sample_gaussian_2d::<f64>(args.n, covariance, args.seed)?;
    let x = data.features().view();
    let (minmax, neg_minmax) = analyze("minmax", minmax_normalize(x), &args, &mut manifest)?;
    let (edf, neg_edf) = analyze("edf", edf_normalize(x), &args, &mut manifest)?;
    let report = json!({
        "n": args.n,
        "degree": args.degree,
        "covariance": covariance,
        "minmax": minmax,
        "edf": edf,
        "edf_negative_area_not_larger": neg_edf <= neg_minmax,
    });
    let path = args.out.join("hcr_demo.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    manifest.output(&path);
    manifest.results = json!({
        "negative_area_fraction": { "minmax": neg_minmax, "edf": neg_edf },
    });
    manifest.finish("ok", &args.out)?;
    println!("negative-density area: MinMax {neg_minmax:.4}, EDF {neg_edf:.4}");
    Ok(())
}

use std::path::PathBuf;

use anyhow::Context;
use cdfkan::kan::{build_variant, Network, Variant};
use cdfkan::train::grad_check;
use clap::Args;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::manifest::RunManifest;
use crate::run::{parse_degree, parse_variant};
use crate::{prepare_out, CheckFailed, UsageError};

/// Toy network widths.
const TOY_DIMS: [usize; 3] = [6, 4, 3];

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Largest accepted relative error per parameter block.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, value_parser = parse_degree, default_value = "3")]
    degree: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rows in the random check batch.
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, value_parser = parse_variant, value_delimiter = ',',
          default_value = "KAL_NET,CDFKAL_NET,CDFKAL_NET_FIXEDNORM,CDFKAL_SILU")]
    variants: Vec<Variant>,
    /// Optional run directory for `gradcheck.csv` and the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn cmd_gradcheck(args: GradcheckArgs) -> anyhow::Result<()> {
    if args.batch == 0 || !(args.tolerance > 0.0) {
        return Err(UsageError("--batch and --tolerance must be positive".into()).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let x = Array2::from_shape_fn((args.batch, TOY_DIMS[0]), |_| rng.random_range(-1.5..1.5));
    let classes = TOY_DIMS[TOY_DIMS.len() - 1];
    let labels: Vec<usize> = (0..args.batch).map(|_| rng.random_range(0..classes)).collect();

    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for &variant in &args.variants {
        let net: Network<f64> = build_variant(variant, &TOY_DIMS, args.degree, args.seed)?;
        let report = grad_check(&net, x.view(), &labels, args.tolerance)?;
        for b in &report.blocks {
            let ok = b.max_relative_error < args.tolerance;
            println!(
                "{variant} {} params={} max_rel_err={:.3e} {}",
                b.name,
                b.params,
                b.max_relative_error,
                if ok { "PASS" } else { "FAIL" }
            );
            if !ok {
                failed.push(format!("{variant} {}", b.name));
            }
            rows.push((variant, b.clone(), ok));
        }
    }

    if let Some(out) = &args.out {
        let config = json!({
            "tolerance": args.tolerance,
            "degree": args.degree,
            "seed": args.seed,
            "batch": args.batch,
            "variants": args.variants,
            "dims": TOY_DIMS,
            "out": out,
        });
        let mut manifest = RunManifest::start("gradcheck", config, args.seed);
        prepare_out(out)?;
        let path = out.join("gradcheck.csv");
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(["variant", "block", "params", "max_relative_error", "passed"])?;
        for (variant, b, ok) in &rows {
            w.write_record([
                variant.to_string(),
                b.name.clone(),
                b.params.to_string(),
                b.max_relative_error.to_string(),
                ok.to_string(),
            ])?;
        }
        w.flush().with_context(|| format!("writing {}", path.display()))?;
        manifest.output(&path);
        manifest.results = json!({ "failed_blocks": failed });
        manifest.finish(if failed.is_empty() { "ok" } else { "check-failed" }, out)?;
    }

    if failed.is_empty() {
        Ok(())
    } else {
        Err(CheckFailed(format!(
            "{} block(s) above tolerance {:e}: {}",
            failed.len(),
            args.tolerance,
            failed.join(", ")
        ))
        .into())
    }
}

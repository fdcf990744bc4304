use std::path::{Path, PathBuf};

use anyhow::Context;
use cdfkan::data::{activation_histogram, load_mnist_dir, subset, Dataset, MNIST_DIR_ENV};
use cdfkan::kan::{Variant, DEGREE_RANGE};
use cdfkan::train::{train_with, write_metrics_csv, Scale, TrainConfig, TrainOutcome};
use clap::Args;
use serde_json::json;

use crate::manifest::RunManifest;
use crate::{prepare_out, UsageError};

pub fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: cdfkan::kan::KanError| e.to_string())
}

pub fn parse_degree(s: &str) -> Result<usize, String> {
    let d: usize = s.parse().map_err(|_| format!("`{s}` is not a degree"))?;
    if DEGREE_RANGE.contains(&d) {
        Ok(d)
    } else {
        Err(format!("degree {d} outside {}..={}", DEGREE_RANGE.start(), DEGREE_RANGE.end()))
    }
}

/// Flags shared by `train` and `sweep`.
#[derive(Debug, Args)]
pub struct Training {
    /// Training epochs [default: 5, or 20 with --full-scale].
    #[arg(long)]
    epochs: Option<usize>,
    /// Training images drawn from the MNIST training split [default: 2000, or 20000].
    #[arg(long)]
    train_n: Option<usize>,
    /// Test images drawn from the MNIST test split [default: 1000, or 10000].
    #[arg(long)]
    test_n: Option<usize>,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    hidden: Vec<usize>,
    /// Full-scale subsets and epochs (20000/10000 images, 20 epochs) instead of desk scale.
    #[arg(long)]
    full_scale: bool,
    /// Directory holding the four MNIST IDX files (plain or .gz).
    #[arg(long, env = MNIST_DIR_ENV, default_value = "data/mnist")]
    mnist_dir: PathBuf,
    /// Run directory; nothing is written outside it.
    #[arg(long)]
    out: PathBuf,
    /// Also export post-normalization histograms of every layer on the test set.
    #[arg(long)]
    histogram_bins: Option<usize>,
    /// Also save the trained network.
    #[arg(long)]
    checkpoint: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_variant)]
    variant: Variant,
    #[arg(long, value_parser = parse_degree, default_value = "3")]
    degree: usize,
    #[command(flatten)]
    training: Training,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_parser = parse_variant, value_delimiter = ',',
          default_value = "KAL_NET,CDFKAL_NET,CDFKAL_NET_FIXEDNORM,CDFKAL_SILU")]
    variants: Vec<Variant>,
    #[arg(long, value_parser = parse_degree, value_delimiter = ',', default_value = "3,4,5,6,7,8,9,10,11")]
    degrees: Vec<usize>,
    #[command(flatten)]
    training: Training,
}

struct Resolved {
    epochs: usize,
    train_n: usize,
    test_n: usize,
}

impl Training {
    fn resolve(&self) -> anyhow::Result<Resolved> {
        let scale = if self.full_scale { Scale::Full } else { Scale::Desk };
        let r = Resolved {
            epochs: self.epochs.unwrap_or(scale.epochs()),
            train_n: self.train_n.unwrap_or(scale.train_n()),
            test_n: self.test_n.unwrap_or(scale.test_n()),
        };
        if r.epochs == 0 || r.train_n == 0 || r.test_n == 0 || self.batch == 0 {
            return Err(UsageError("epochs, subset sizes and batch size must be positive".into()).into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(UsageError(format!("learning rate {} must be positive", self.lr)).into());
        }
        if self.hidden.contains(&0) {
            return Err(UsageError("hidden widths must be positive".into()).into());
        }
        if self.histogram_bins == Some(0) {
            return Err(UsageError("--histogram-bins must be at least 1".into()).into());
        }
        Ok(r)
    }

    fn config(&self, r: &Resolved, variant: Variant, degree: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            epochs: r.epochs,
            batch_size: self.batch,
            seed: self.seed,
            degree,
            variant,
            ..Default::default()
        }
    }

    fn snapshot(&self, r: &Resolved) -> serde_json::Value {
        json!({
            "epochs": r.epochs,
            "train_n": r.train_n,
            "test_n": r.test_n,
            "batch": self.batch,
            "lr": self.lr,
            "seed": self.seed,
            "hidden": self.hidden,
            "full_scale": self.full_scale,
            "mnist_dir": self.mnist_dir,
            "out": self.out,
            "histogram_bins": self.histogram_bins,
            "checkpoint": self.checkpoint,
        })
    }

    fn load(&self, r: &Resolved) -> anyhow::Result<(Dataset<f64>, Dataset<f64>)> {
        let (train, test) = load_mnist_dir::<f64>(&self.mnist_dir)
            .with_context(|| format!("loading MNIST from {} (set {MNIST_DIR_ENV} or --mnist-dir)", self.mnist_dir.display()))?;
        Ok((subset(&train, r.train_n, self.seed)?, subset(&test, r.test_n, self.seed)?))
    }

    fn dims(&self, input: usize, classes: usize) -> Vec<usize> {
        std::iter::once(input).chain(self.hidden.iter().copied()).chain(std::iter::once(classes)).collect()
    }
}

struct Cell {
    outcome: TrainOutcome<f64>,
    trainable_params: usize,
}

fn run_cell(
    t: &Training,
    cfg: &TrainConfig,
    train: &Dataset<f64>,
    test: &Dataset<f64>,
    manifest: &mut RunManifest,
) -> anyhow::Result<Cell> {
    let dims = t.dims(train.n_features(), 10);
    let net = cfg.build_network::<f64>(&dims)?;
    let trainable_params = net.trainable_params();
    let tag = format!("{}_d{}", cfg.variant, cfg.degree);
    eprintln!("{tag}: {trainable_params} trainable parameters");
    let outcome = train_with(net, train, test, cfg, |m| {
        eprintln!(
            "{tag} epoch {}: train loss {:.4}, test loss {:.4}, test accuracy {:.4}, {:.2} s",
            m.epoch, m.train_loss, m.test_loss, m.test_accuracy, m.wall_seconds
        );
    })?;
    let metrics = t.out.join(format!("metrics_{tag}.csv"));
    write_metrics_csv(&metrics, &outcome.metrics)?;
    manifest.output(&metrics);
    if let Some(bins) = t.histogram_bins {
        for layer in 0..outcome.network.layers().len() {
            let h = activation_histogram(&outcome.network, test, layer, bins, true)?;
            let path = t.out.join(format!("histogram_{tag}_layer{layer}.csv"));
            h.write_csv(&path)?;
            manifest.output(&path);
        }
    }
    if t.checkpoint {
        let path = t.out.join(format!("model_{tag}.ckpt"));
        outcome.network.save_checkpoint(&path)?;
        manifest.output(&path);
    }
    Ok(Cell {
        outcome,
        trainable_params,
    })
}

fn cell_summary(cfg: &TrainConfig, cell: &Cell) -> serde_json::Value {
    json!({
        "variant": cfg.variant,
        "degree": cfg.degree,
        "trainable_params": cell.trainable_params,
        "best_test_accuracy": cell.outcome.best_test_accuracy(),
        "final_test_accuracy": cell.outcome.metrics.last().map(|m| m.test_accuracy),
        "total_wall_seconds": cell.outcome.total_wall_seconds(),
    })
}

fn out_dir(t: &Training) -> anyhow::Result<&Path> {
    prepare_out(&t.out)?;
    Ok(&t.out)
}

pub fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let t = &args.training;
    let r = t.resolve()?;
    let cfg = t.config(&r, args.variant, args.degree);
    let mut config = t.snapshot(&r);
    config["variant"] = json!(args.variant);
    config["degree"] = json!(args.degree);
    let mut manifest = RunManifest::start("train", config, t.seed);
    let (train, test) = t.load(&r)?;
    let out = out_dir(t)?;
    let cell = run_cell(t, &cfg, &train, &test, &mut manifest)?;
    manifest.results = cell_summary(&cfg, &cell);
    manifest.finish("ok", out)?;
    Ok(())
}

pub fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let t = &args.training;
    let r = t.resolve()?;
    let mut config = t.snapshot(&r);
    config["variants"] = json!(args.variants);
    config["degrees"] = json!(args.degrees);
    let mut manifest = RunManifest::start("sweep", config, t.seed);
    let (train, test) = t.load(&r)?;
    let out = out_dir(t)?;

    let table = out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&table).with_context(|| format!("writing {}", table.display()))?;
    w.write_record(["variant", "degree", "best_test_accuracy", "total_wall_seconds"])?;
    let mut cells = Vec::new();
    for &degree in &args.degrees {
        for &variant in &args.variants {
            let cfg = t.config(&r, variant, degree);
            let cell = run_cell(t, &cfg, &train, &test, &mut manifest)?;
            w.write_record([
                variant.to_string(),
                degree.to_string(),
                cell.outcome.best_test_accuracy().to_string(),
                cell.outcome.total_wall_seconds().to_string(),
            ])?;
            cells.push(cell_summary(&cfg, &cell));
        }
    }
    w.flush().with_context(|| format!("writing {}", table.display()))?;
    manifest.output(&table);
    manifest.results = json!({ "cells": cells });
    manifest.finish("ok", out)?;
    Ok(())
}

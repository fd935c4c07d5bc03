use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde_json::json;

use tilelab::augment::{augment_corpus, feature_density_of_dir, AugmentOptions, DensityReport};
use tilelab::dpsgd::{
    run_training, speedup_model, Averaging, CoupledQuadratic, LeastSquares, LogisticRegression,
    Objective, TrainConfig,
};
use tilelab::fwloss::{
    cycle_fw_loss, finite_difference_check, AffineGen, Conv3x3Gen, FwLossConfig, Generator,
    IdentityGen, LossCheck, Tensor3,
};
use tilelab::metrics::{evaluate_corpus_dirs, EvalOptions, DEFAULT_IOU_THRESHOLD};
use tilelab::polygon::{polygonize, polygons_to_geojson, DEFAULT_MIN_AREA_PX};
use tilelab::raster::{list_map_keys, load_tile, save_tile, tile_entropy};
use tilelab::synth::{make_corpus, CorpusSpec};
use tilelab::{extract_mask, extract_mask_all, FeatureMask, RasterTile};

use crate::config::{load_palette, resolve, ToolConfig};

const DEFAULT_ENTROPY_THRESHOLD: f64 = 2.0;
const DEFAULT_RESOLUTION: f64 = 1.0;

#[derive(Args)]
pub struct SynthArgs {
    /// Corpus output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    tiles: usize,
    #[arg(long, default_value_t = 512)]
    tile_size: u32,
    /// Quadkey level; must address at least `tiles` keys.
    #[arg(long, default_value_t = 8)]
    level: u8,
    #[arg(long)]
    seed: Option<u64>,
    /// Probability that a house label is dropped from the map side.
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    /// Maximum label offset in pixels on the map side.
    #[arg(long, default_value_t = 0)]
    jitter: u32,
    #[arg(long)]
    resolution: Option<f64>,
    /// Mark the corpus as a split ("train" or "test").
    #[arg(long)]
    split: Option<String>,
    #[arg(long, default_value_t = 6)]
    houses_min: usize,
    #[arg(long, default_value_t = 14)]
    houses_max: usize,
    #[arg(long, default_value_t = 1)]
    roads_min: usize,
    #[arg(long, default_value_t = 2)]
    roads_max: usize,
    #[arg(long)]
    palette: Option<PathBuf>,
}

pub fn synth(args: SynthArgs, config: &ToolConfig) -> Result<()> {
    let palette = load_palette(args.palette.as_deref(), config)?;
    let spec = CorpusSpec {
        n_tiles: args.tiles,
        tile_size: args.tile_size,
        level: args.level,
        houses_per_tile: (args.houses_min, args.houses_max),
        roads_per_tile: (args.roads_min, args.roads_max),
        label_dropout: args.dropout,
        jitter_px: args.jitter,
        seed: resolve(args.seed, config.seed, 7),
        ground_resolution_m: resolve(args.resolution, config.ground_resolution_m, DEFAULT_RESOLUTION),
        split: args.split,
    };
    let manifest = make_corpus(&spec, &palette, &args.out)?;
    println!(
        "{}",
        json!({
            "out": args.out,
            "tiles": manifest.tiles.len(),
            "houses_total": manifest.count("house", true),
            "houses_labeled": manifest.count("house", false),
        })
    );
    Ok(())
}

#[derive(Args)]
pub struct MaskArgs {
    /// Map tile PNG.
    #[arg(long)]
    input: PathBuf,
    /// Feature class to extract, or "all" for the palette union.
    #[arg(long, default_value = "house")]
    class: String,
    /// Mask PNG output (0/255 grayscale).
    #[arg(long)]
    out: PathBuf,
    /// Also write the mask's polygons as GeoJSON.
    #[arg(long)]
    geojson: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MIN_AREA_PX)]
    min_area: usize,
    #[arg(long)]
    palette: Option<PathBuf>,
}

pub fn mask(args: MaskArgs, config: &ToolConfig) -> Result<()> {
    let palette = load_palette(args.palette.as_deref(), config)?;
    let tile = load_tile(&args.input)?;
    let mask = if args.class == "all" {
        extract_mask_all(&tile, &palette)?
    } else {
        extract_mask(&tile, palette.require_class(&args.class)?)?
    };
    save_mask_png(&args.out, &mask, &tile)?;
    if let Some(geojson_path) = args.geojson {
        let polygons = polygonize(
            &mask,
            tilelab::polygon::DEFAULT_CONNECTIVITY,
            args.min_area,
        );
        let doc = polygons_to_geojson(&polygons, tile.geo());
        std::fs::write(&geojson_path, serde_json::to_string_pretty(&doc)?)
            .with_context(|| format!("writing {}", geojson_path.display()))?;
    }
    println!(
        "{}",
        json!({ "out": args.out, "ones": mask.count_ones(), "class": args.class })
    );
    Ok(())
}

fn save_mask_png(path: &PathBuf, mask: &FeatureMask, source: &RasterTile) -> Result<()> {
    let pixels: Vec<u8> = mask.bits().iter().map(|b| if *b { 255 } else { 0 }).collect();
    let tile = RasterTile::new(mask.width(), mask.height(), 1, pixels)?
        .with_geo(source.geo().clone())
        .with_ground_resolution(source.ground_resolution_m())?;
    save_tile(path, &tile)?;
    Ok(())
}

#[derive(Args)]
pub struct FilterArgs {
    /// Directory of tile PNGs.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    entropy_threshold: Option<f64>,
    /// Report JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn filter(args: FilterArgs, config: &ToolConfig) -> Result<()> {
    let threshold = resolve(
        args.entropy_threshold,
        config.entropy_threshold,
        DEFAULT_ENTROPY_THRESHOLD,
    );
    if threshold < 0.0 {
        bail!("entropy threshold {threshold} must be >= 0");
    }
    let keys = list_map_keys(&args.input)?;
    if keys.is_empty() {
        bail!("no PNG tiles under {}", args.input.display());
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut entropies = serde_json::Map::new();
    for key in keys {
        let tile = load_tile(args.input.join(format!("{key}.png")))?;
        let entropy = tile_entropy(&tile);
        entropies.insert(key.clone(), json!(entropy));
        if entropy >= threshold {
            kept.push(key);
        } else {
            dropped.push(key);
        }
    }
    let report = json!({
        "threshold": threshold,
        "kept": kept,
        "dropped": dropped,
        "entropies": entropies,
    });
    emit(args.out.as_deref(), &report)
}

#[derive(Args)]
pub struct EvalArgs {
    /// Ground-truth map directory.
    #[arg(long)]
    gt: PathBuf,
    /// Generated (detection) map directory.
    #[arg(long)]
    det: PathBuf,
    #[arg(long)]
    palette: Option<PathBuf>,
    #[arg(long)]
    iou_threshold: Option<f64>,
    /// Report JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV summary (one row per class).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Corpus label used in the CSV summary.
    #[arg(long, default_value = "corpus")]
    label: String,
}

pub fn eval(args: EvalArgs, config: &ToolConfig) -> Result<()> {
    let palette = load_palette(args.palette.as_deref(), config)?;
    let options = EvalOptions {
        iou_threshold: resolve(args.iou_threshold, config.iou_threshold, DEFAULT_IOU_THRESHOLD),
        ..EvalOptions::default()
    };
    let report = evaluate_corpus_dirs(&args.gt, &args.det, &palette, &options)?;
    report.to_json_file(&args.out)?;
    if let Some(csv_path) = &args.csv {
        report.write_csv_summary(csv_path, &args.label)?;
    }
    let summary: serde_json::Map<String, serde_json::Value> = report
        .class_reports
        .iter()
        .map(|(class, r)| {
            (
                class.clone(),
                json!({ "tp": r.tp, "fp": r.fp, "fn": r.fn_, "f1": r.f1 }),
            )
        })
        .collect();
    println!(
        "{}",
        json!({
            "out": args.out,
            "pairs_evaluated": report.pairs_evaluated,
            "unpaired": report.unpaired.len(),
            "classes": summary,
        })
    );
    if !report.pair_errors.is_empty() {
        bail!(
            "{} pair(s) failed: {}",
            report.pair_errors.len(),
            serde_json::to_string(&report.pair_errors)?
        );
    }
    Ok(())
}

#[derive(Args)]
pub struct AugmentArgs {
    /// Training corpus root (with maps/, or a plain map directory).
    #[arg(long)]
    train: PathBuf,
    /// Directory of generated maps.
    #[arg(long)]
    generated: PathBuf,
    /// Output corpus root.
    #[arg(long)]
    out: PathBuf,
    /// Density report JSON path.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    palette: Option<PathBuf>,
    #[arg(long)]
    iou_threshold: Option<f64>,
    /// Classes to merge (houses by default; roads only on request).
    #[arg(long, value_delimiter = ',', default_value = "house")]
    classes: Vec<String>,
    #[arg(long, default_value = "corpus")]
    city: String,
    #[arg(long)]
    reference_density: Option<f64>,
    #[arg(long)]
    resolution: Option<f64>,
}

pub fn augment(args: AugmentArgs, config: &ToolConfig) -> Result<()> {
    let palette = load_palette(args.palette.as_deref(), config)?;
    let options = AugmentOptions {
        eval: EvalOptions {
            iou_threshold: resolve(args.iou_threshold, config.iou_threshold, DEFAULT_IOU_THRESHOLD),
            ..EvalOptions::default()
        },
        classes: args.classes,
        reference_density_per_km2: resolve(
            args.reference_density,
            config.reference_density,
            tilelab::augment::DEFAULT_REFERENCE_DENSITY,
        ),
        resolution_override: args.resolution.or(config.ground_resolution_m),
        city: args.city,
    };
    let report = augment_corpus(&args.train, &args.generated, &args.out, &palette, &options)?;
    std::fs::write(&args.report, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing {}", args.report.display()))?;
    println!(
        "{}",
        json!({
            "out": args.out,
            "pairs_augmented": report.pairs_augmented,
            "merged_polygons": report.merged_polygons,
            "density_before": report.density_before.stats.density_per_km2,
            "density_after": report.density_after.stats.density_per_km2,
        })
    );
    Ok(())
}

#[derive(Args)]
pub struct DensityArgs {
    /// Directory of map PNGs.
    #[arg(long)]
    maps: PathBuf,
    #[arg(long, default_value = "house")]
    class: String,
    #[arg(long)]
    palette: Option<PathBuf>,
    #[arg(long)]
    resolution: Option<f64>,
    #[arg(long)]
    reference_density: Option<f64>,
    #[arg(long, default_value = "corpus")]
    city: String,
    /// Report JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn density(args: DensityArgs, config: &ToolConfig) -> Result<()> {
    let palette = load_palette(args.palette.as_deref(), config)?;
    let class = palette.require_class(&args.class)?;
    let stats = feature_density_of_dir(
        &args.maps,
        class,
        args.resolution.or(config.ground_resolution_m),
        &EvalOptions::default(),
    )?;
    let report = DensityReport::new(
        args.city,
        class.class_name.clone(),
        stats,
        resolve(
            args.reference_density,
            config.reference_density,
            tilelab::augment::DEFAULT_REFERENCE_DENSITY,
        ),
    );
    emit(args.out.as_deref(), &serde_json::to_value(&report)?)
}

#[derive(Args)]
pub struct LossCheckArgs {
    /// Image tile PNG (the x side).
    #[arg(long)]
    image: PathBuf,
    /// Paired map tile PNG (the y side).
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    palette: Option<PathBuf>,
    /// Toy generator pair: identity, affine, or conv.
    #[arg(long, default_value = "affine")]
    generator: String,
    /// Weight of the feature-weighted term.
    #[arg(long, default_value_t = 1.0)]
    weight: f64,
    /// Finite-difference probe count.
    #[arg(long, default_value_t = 64)]
    probes: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Report JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn loss_check(args: LossCheckArgs, config: &ToolConfig) -> Result<()> {
    let palette = load_palette(args.palette.as_deref(), config)?;
    let image = load_tile(&args.image)?;
    let map = load_tile(&args.map)?;
    let x = Tensor3::from_tile(&image);

    let (g_map, g_image): (Box<dyn Generator>, Box<dyn Generator>) = match args.generator.as_str() {
        "identity" => (Box::new(IdentityGen), Box::new(IdentityGen)),
        "affine" => (
            Box::new(AffineGen {
                scale: 0.98,
                bias: 0.02,
            }),
            Box::new(AffineGen {
                scale: 1.02,
                bias: -0.05,
            }),
        ),
        "conv" => {
            let kernel = [[0.05, 0.1, 0.05], [0.1, 0.4, 0.1], [0.05, 0.1, 0.05]];
            (Box::new(Conv3x3Gen { kernel }), Box::new(Conv3x3Gen { kernel }))
        }
        other => bail!("unknown generator '{other}' (expected identity, affine, or conv)"),
    };

    let cycle = cycle_fw_loss(
        &x,
        &map,
        g_map.as_ref(),
        g_image.as_ref(),
        &palette,
        &FwLossConfig { weight: args.weight },
    )?;
    let max_grad_rel_error = finite_difference_check(
        &x,
        &cycle.y_hat,
        g_image.as_ref(),
        &cycle.mask,
        &cycle.grad_y_hat,
        args.probes,
        1e-6,
        resolve(args.seed, config.seed, 7),
    )?;
    let check = LossCheck {
        loss: cycle.loss,
        masked_pixels: cycle.mask.count_ones(),
        max_grad_rel_error,
    };
    emit(args.out.as_deref(), &serde_json::to_value(&check)?)
}

#[derive(Args)]
pub struct DpsgdSimArgs {
    #[arg(long, default_value_t = 8)]
    workers: usize,
    #[arg(long, default_value_t = 1000)]
    steps: u64,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    /// Per-step multiplicative learning-rate decay.
    #[arg(long, default_value_t = 1.0)]
    lr_decay: f64,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Objective: least-squares, logistic, or coupled-quadratic.
    #[arg(long, default_value = "least-squares")]
    objective: String,
    /// Averaging scheme: random-partner, ring-neighbor, or none.
    #[arg(long, default_value = "random-partner")]
    averaging: String,
    /// Dataset size for the synthetic objectives.
    #[arg(long, default_value_t = 512)]
    samples: usize,
    /// Parameter dimension for the synthetic objectives.
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Trace CSV path (step, worker, loss, consensus_distance).
    #[arg(long)]
    out: PathBuf,
}

pub fn dpsgd_sim(args: DpsgdSimArgs, config: &ToolConfig) -> Result<()> {
    let averaging = match args.averaging.as_str() {
        "random-partner" => Averaging::RandomPartner,
        "ring-neighbor" => Averaging::RingNeighbor,
        "none" => Averaging::None,
        other => bail!("unknown averaging '{other}'"),
    };
    let seed = resolve(args.seed, config.seed, 7);
    let cfg = TrainConfig {
        workers: args.workers,
        lr: args.lr,
        lr_decay: args.lr_decay,
        batch_size: args.batch,
        steps: args.steps,
        seed,
        averaging,
        divergence_threshold: 1e12,
    };
    let objective: Box<dyn Objective> = match args.objective.as_str() {
        "least-squares" => Box::new(LeastSquares::synthetic(args.samples, args.dim, 0.1, seed)),
        "logistic" => Box::new(LogisticRegression::synthetic(args.samples, args.dim, seed)),
        "coupled-quadratic" => Box::new(CoupledQuadratic {
            target_gen: vec![1.0; args.dim],
            target_disc: vec![-1.0; args.dim],
            coupling: 0.1,
        }),
        other => bail!("unknown objective '{other}'"),
    };
    let trace = run_training(objective.as_ref(), cfg)?;
    trace.to_csv(&args.out)?;
    let final_record = trace.final_record();
    println!(
        "{}",
        json!({
            "out": args.out,
            "steps": final_record.step,
            "final_consensus_distance": final_record.consensus_distance,
            "final_global_mean_loss": final_record.global_mean_loss,
            "averaging_events_last_step": final_record.averaging.len(),
            "modeled_speedup_16_workers": speedup_model(16, 1.0, 1.0, 0.0884),
        })
    );
    Ok(())
}

fn emit(path: Option<&std::path::Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            println!("{}", json!({ "out": path }));
        }
        None => println!("{text}"),
    }
    Ok(())
}

//! Subcommand driver.


use trajflow_core::clustering::{cut, pairwise_distances, ward_linkage};
use trajflow_core::eval::{standard_flag_sets, EvalConfig, EvalReport, RefitMode};
use trajflow_core::geometry::{prefix, GeoPoint, PrefixFraction};
use trajflow_core::gmm::{fit_flow_model, EmConfig};
use trajflow_core::scoring::PredictionRule;

use crate::config::{parse_flags, Options};
use crate::formats;
use crate::geojson;
use crate::ingest::{self, BoundingBox, DatasetSpec, PortoOptions};
use crate::synth::{synth_city, SyntheticCitySpec};
use crate::{CliError, Result};

const USAGE: &str = "\
trajflow — traffic-flow modelling and destination prediction for GPS trips

USAGE: trajflow <command> [--flag value ...] [--config FILE]

COMMANDS:
  ingest     parse a public corpus into the canonical trajectory file
               --format porto-csv|cabspotting --input PATH --output FILE
               [--origin-lon X --origin-lat Y] [--origin-radius-m 300]
               [--bbox minlon,minlat,maxlon,maxlat]
               [--min-points 2] [--max-points N] [--porto-interval-s 15] [--strict]
  synth      generate a synthetic benchmark city with known flows
               --output FILE [--labels-output FILE] [--flows 3] [--per-flow 200]
               [--waypoints 4] [--noise-m 20] [--step-m 100] [--path-length-m 3000]
               [--seed 7] [--origin-lon -8.61] [--origin-lat 41.15]
  distances  compute the pairwise SSPD matrix
               --input FILE --output FILE.bin
  cluster    cut the Ward dendrogram into K clusters
               --input FILE --distances FILE.bin --k K --output FILE
  fit        fit per-cluster Gaussian mixtures and context weights
               --input FILE --labels FILE --output FILE
               [--k-range 1..40] [--seed 0] [--restarts 5] [--max-iter 300]
               [--tol 1e-6] [--cov-floor 1.0]
  predict    predict destinations for (partial) trajectories
               --model FILE --input FILE --output FILE.csv
               [--completion 1.0] [--flags none|emp,weekday,hour|all] [--rule 1|2]
               [--geojson FILE]
  evaluate   cross-validated classification and prediction quality
               --input FILE --k K --output FILE.csv
               [--folds 10] [--seed 0] [--k-range 1..8] [--grid-step 0.05]
               [--flag-sets none,emp,weekday,hour,all] [--refit per-fold|fixed]
               [--roc-dir DIR] [--restarts 5] [--max-iter 300] [--tol 1e-6]
               [--cov-floor 1.0]
  export     render artifacts as GeoJSON
               --output FILE.geojson [--input FILE] [--labels FILE]
               [--model FILE] [--predictions FILE.csv]

Any flag may instead be set in a `key = value` config file given with
--config; explicit flags win. Exit codes: 0 ok, 1 usage error, 2 data error.
";

/// Entry point used by the binary and by integration tests.
pub fn run(args: &[String]) -> Result<()> {
    let Some(command) = args.first() else {
        return Err(CliError::Usage(USAGE.into()));
    };
    let opts = Options::from_args(&args[1..])?;
    match command.as_str() {
        "ingest" => cmd_ingest(&opts),
        "synth" => cmd_synth(&opts),
        "distances" => cmd_distances(&opts),
        "cluster" => cmd_cluster(&opts),
        "fit" => cmd_fit(&opts),
        "predict" => cmd_predict(&opts),
        "evaluate" => cmd_evaluate(&opts),
        "export" => cmd_export(&opts),
        "help" | "--help" | "-h" => {
            println!("{USAGE}");
            Ok(())
        }
        other => Err(CliError::Usage(format!("unknown command {other:?}\n\n{USAGE}"))),
    }
}

fn cmd_ingest(opts: &Options) -> Result<()> {
    opts.reject_unknown(&[
        "format",
        "input",
        "output",
        "origin-lon",
        "origin-lat",
        "origin-radius-m",
        "bbox",
        "min-points",
        "max-points",
        "porto-interval-s",
        "strict",
    ])?;
    let format = opts.require("format")?.to_string();
    let input = opts.path("input")?;
    let output = opts.path("output")?;
    let strict = opts.bool_flag("strict")?;

    let outcome = match format.as_str() {
        "porto-csv" => {
            let interval = opts.i64_or("porto-interval-s", 15)?;
            if interval <= 0 {
                return Err(CliError::Usage("--porto-interval-s must be positive".into()));
            }
            let porto = PortoOptions { sample_interval_s: interval, strict };
            ingest::parse_porto(&input, &porto)?
        }
        "cabspotting" | "cabspotting-dir" => ingest::parse_cabspotting(&input, strict)?,
        other => {
            return Err(CliError::Usage(format!(
                "unknown --format {other:?} (expected porto-csv or cabspotting)"
            )))
        }
    };

    let spec = dataset_spec(opts)?;
    let parsed = outcome.trajectories.len();
    let kept = ingest::filter(outcome.trajectories, &spec);
    formats::write_trajectories(&output, &kept)?;
    eprintln!(
        "ingest: parsed {parsed} trips ({} rows skipped), kept {} after filtering -> {}",
        outcome.skipped,
        kept.len(),
        output.display()
    );
    Ok(())
}

fn dataset_spec(opts: &Options) -> Result<DatasetSpec> {
    let origin_filter = match (opts.get("origin-lon"), opts.get("origin-lat")) {
        (Some(lon), Some(lat)) => {
            let lon: f64 = lon
                .parse()
                .map_err(|_| CliError::Usage("--origin-lon expects a number".into()))?;
            let lat: f64 = lat
                .parse()
                .map_err(|_| CliError::Usage("--origin-lat expects a number".into()))?;
            Some((GeoPoint::new(lon, lat)?, opts.f64_or("origin-radius-m", 300.0)?))
        }
        (None, None) => None,
        _ => {
            return Err(CliError::Usage(
                "--origin-lon and --origin-lat must be given together".into(),
            ))
        }
    };
    let destination_box = match opts.get("bbox") {
        None => None,
        Some(spec) => {
            let parts: Vec<f64> = spec
                .split(',')
                .map(|v| v.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| {
                    CliError::Usage("--bbox expects minlon,minlat,maxlon,maxlat".into())
                })?;
            if parts.len() != 4 {
                return Err(CliError::Usage(
                    "--bbox expects minlon,minlat,maxlon,maxlat".into(),
                ));
            }
            Some(BoundingBox::new(parts[0], parts[1], parts[2], parts[3])?)
        }
    };
    Ok(DatasetSpec {
        origin_filter,
        destination_box,
        min_points: opts.usize_or("min-points", 2)?,
        max_points: match opts.get("max-points") {
            None => None,
            Some(v) => Some(v.parse().map_err(|_| {
                CliError::Usage("--max-points expects an integer".into())
            })?),
        },
    })
}

fn cmd_synth(opts: &Options) -> Result<()> {
    opts.reject_unknown(&[
        "output",
        "labels-output",
        "flows",
        "per-flow",
        "waypoints",
        "noise-m",
        "step-m",
        "path-length-m",
        "seed",
        "origin-lon",
        "origin-lat",
    ])?;
    let output = opts.path("output")?;
    let defaults = SyntheticCitySpec::default();
    let spec = SyntheticCitySpec {
        flows: opts.usize_or("flows", defaults.flows)?,
        trajectories_per_flow: opts.usize_or("per-flow", defaults.trajectories_per_flow)?,
        waypoints: opts.usize_or("waypoints", defaults.waypoints)?,
        noise_sigma_m: opts.f64_or("noise-m", defaults.noise_sigma_m)?,
        step_m: opts.f64_or("step-m", defaults.step_m)?,
        path_length_m: opts.f64_or("path-length-m", defaults.path_length_m)?,
        seed: opts.u64_or("seed", defaults.seed)?,
        origin: GeoPoint::new(
            opts.f64_or("origin-lon", defaults.origin.lon)?,
            opts.f64_or("origin-lat", defaults.origin.lat)?,
        )?,
    };
    let (ts, flow_labels) = synth_city(&spec)?;
    formats::write_trajectories(&output, &ts)?;
    if let Some(labels_path) = opts.path_opt("labels-output") {
        let labels = trajflow_core::clustering::ClusterAssignment::from_labels(
            flow_labels.iter().map(|&l| l as u32).collect(),
            spec.flows,
        )?;
        formats::write_labels(&labels_path, &ts, &labels)?;
    }
    eprintln!(
        "synth: {} trajectories across {} flows -> {}",
        ts.len(),
        spec.flows,
        output.display()
    );
    Ok(())
}

fn cmd_distances(opts: &Options) -> Result<()> {
    opts.reject_unknown(&["input", "output"])?;
    let input = opts.path("input")?;
    let output = opts.path("output")?;
    let raw = formats::read_trajectories(&input)?;
    let (ts, origin) = crate::project_about_centroid(&raw)?;
    let d = pairwise_distances(&ts)?;
    formats::write_distance_matrix(&output, &d)?;
    eprintln!(
        "distances: {} trajectories (origin {:.6},{:.6}) -> {}",
        ts.len(),
        origin.lon,
        origin.lat,
        output.display()
    );
    Ok(())
}

fn cmd_cluster(opts: &Options) -> Result<()> {
    opts.reject_unknown(&["input", "distances", "k", "output"])?;
    let input = opts.path("input")?;
    let matrix_path = opts.path("distances")?;
    let k = opts.usize_req("k")?;
    let output = opts.path("output")?;

    let raw = formats::read_trajectories(&input)?;
    let d = formats::read_distance_matrix(&matrix_path)?;
    if d.observations() != raw.len() {
        return Err(CliError::Data(format!(
            "distance matrix covers {} trajectories but {} holds {}",
            d.observations(),
            input.display(),
            raw.len()
        )));
    }
    let dendrogram = ward_linkage(&d);
    let labels = cut(&dendrogram, k)?;
    formats::write_labels(&output, &raw, &labels)?;
    eprintln!("cluster: cut at k={k} -> {}", output.display());
    Ok(())
}

fn em_config(opts: &Options) -> Result<EmConfig> {
    let defaults = EmConfig::default();
    Ok(EmConfig {
        max_iter: opts.usize_or("max-iter", defaults.max_iter)?,
        tol: opts.f64_or("tol", defaults.tol)?,
        n_restarts: opts.usize_or("restarts", defaults.n_restarts)?,
        cov_floor: opts.f64_or("cov-floor", defaults.cov_floor)?,
        seed: opts.u64_or("seed", defaults.seed)?,
    })
}

fn cmd_fit(opts: &Options) -> Result<()> {
    opts.reject_unknown(&[
        "input", "labels", "output", "k-range", "seed", "restarts", "max-iter", "tol",
        "cov-floor",
    ])?;
    let input = opts.path("input")?;
    let labels_path = opts.path("labels")?;
    let output = opts.path("output")?;
    let k_range = opts.range_or("k-range", 1..=40)?;
    let em = em_config(opts)?;

    let raw = formats::read_trajectories(&input)?;
    let labels = formats::read_labels(&labels_path, &raw)?;
    let (ts, _) = crate::project_about_centroid(&raw)?;
    let model = fit_flow_model(&ts, &labels, &em, k_range)?;
    formats::write_model(&output, &model)?;
    let chosen: Vec<usize> =
        model.clusters().iter().map(|c| c.mixture.component_count()).collect();
    eprintln!(
        "fit: {} clusters, mixture sizes {:?} -> {}",
        model.cluster_count(),
        chosen,
        output.display()
    );
    Ok(())
}

fn cmd_predict(opts: &Options) -> Result<()> {
    opts.reject_unknown(&[
        "model", "input", "output", "completion", "flags", "rule", "geojson",
    ])?;
    let model_path = opts.path("model")?;
    let input = opts.path("input")?;
    let output = opts.path("output")?;
    let completion = PrefixFraction::new(opts.f64_or("completion", 1.0)?)
        .map_err(|_| CliError::Usage("--completion must be in [0, 1]".into()))?;
    let flags = parse_flags(opts.get("flags").unwrap_or("none"))?;
    let rule = match opts.usize_or("rule", 2)? {
        1 => 1u8,
        2 => 2u8,
        other => return Err(CliError::Usage(format!("--rule must be 1 or 2, got {other}"))),
    };

    let model = formats::read_model(&model_path)?;
    let raw = formats::read_trajectories(&input)?;
    let ts = crate::project_about(&raw, model.origin())?;

    let records: Vec<formats::PredictionRecord> = ts
        .iter()
        .map(|t| {
            let partial = prefix(t, completion);
            let classification = model.classify(&partial, flags);
            let top =
                model.predict_from_classification(&classification, PredictionRule::TopCluster);
            let weighted =
                model.predict_from_classification(&classification, PredictionRule::Weighted);
            formats::PredictionRecord {
                id: t.id().to_string(),
                completion: completion.value(),
                rule,
                top_cluster_dest: top,
                weighted_dest: weighted,
                top3: formats::top3_from_ranking(
                    &classification.ranking,
                    classification.scores.normalized(),
                ),
            }
        })
        .collect();
    formats::write_predictions(&output, &records)?;
    if let Some(geojson_path) = opts.path_opt("geojson") {
        geojson::write_feature_collection(
            &geojson_path,
            geojson::prediction_features(&records),
        )?;
    }
    eprintln!(
        "predict: {} trajectories at completion {} -> {}",
        records.len(),
        completion.value(),
        output.display()
    );
    Ok(())
}

fn cmd_evaluate(opts: &Options) -> Result<()> {
    opts.reject_unknown(&[
        "input", "output", "k", "folds", "seed", "k-range", "grid-step", "flag-sets",
        "refit", "roc-dir", "restarts", "max-iter", "tol", "cov-floor",
    ])?;
    let input = opts.path("input")?;
    let output = opts.path("output")?;
    let clusters = opts.usize_req("k")?;
    let folds = opts.usize_or("folds", 10)?;
    let seed = opts.u64_or("seed", 0)?;
    let component_range = opts.range_or("k-range", 1..=8)?;
    let grid_step = opts.f64_or("grid-step", 0.05)?;
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(CliError::Usage("--grid-step must be in (0, 1]".into()));
    }
    let flag_sets = match opts.get("flag-sets") {
        None => standard_flag_sets(),
        Some(spec) => spec
            .split(',')
            .map(parse_flags)
            .collect::<Result<Vec<_>>>()?,
    };
    let refit = match opts.get("refit").unwrap_or("per-fold") {
        "per-fold" => RefitMode::PerFold,
        "fixed" => RefitMode::FixedClustering,
        other => {
            return Err(CliError::Usage(format!(
                "--refit must be per-fold or fixed, got {other:?}"
            )))
        }
    };

    let mut completion_grid = Vec::new();
    let mut i = 0usize;
    loop {
        let p = i as f64 * grid_step;
        if p >= 1.0 - 1e-12 {
            break;
        }
        completion_grid.push(p);
        i += 1;
    }
    completion_grid.push(1.0);

    let raw = formats::read_trajectories(&input)?;
    let (ts, _) = crate::project_about_centroid(&raw)?;

    let cfg = EvalConfig {
        clusters,
        component_range,
        em: em_config(opts)?,
        folds,
        seed,
        completion_grid,
        flag_sets,
        refit: RefitMode::PerFold,
    };
    // Drive the folds here so long runs show progress.
    let plan = trajflow_core::eval::kfold(ts.len(), cfg.folds, cfg.seed)?;
    let global_labels = match refit {
        RefitMode::FixedClustering => {
            eprintln!("evaluate: clustering once over {} trajectories (fixed mode)", ts.len());
            let d = pairwise_distances(&ts)?;
            Some(cut(&ward_linkage(&d), cfg.clusters)?)
        }
        RefitMode::PerFold => None,
    };
    let cfg = EvalConfig { refit, ..cfg };
    let mut outcomes = Vec::with_capacity(cfg.folds);
    for fold in 0..cfg.folds {
        outcomes.push(trajflow_core::eval::evaluate_fold(
            &ts,
            &plan,
            fold,
            &cfg,
            global_labels.as_ref(),
        )?);
        eprintln!("evaluate: fold {}/{} done", fold + 1, cfg.folds);
    }
    let report = EvalReport::from_outcomes(
        &outcomes,
        cfg.completion_grid.clone(),
        cfg.flag_sets.clone(),
    );
    formats::write_eval_report(&output, &report)?;
    let roc_dir = opts.path_opt("roc-dir");
    let roc_files = formats::write_roc_files(&output, roc_dir.as_deref(), &report)?;
    eprintln!(
        "evaluate: report -> {} ({} ROC files)",
        output.display(),
        roc_files.len()
    );
    Ok(())
}

fn cmd_export(opts: &Options) -> Result<()> {
    opts.reject_unknown(&["input", "labels", "model", "predictions", "output"])?;
    let output = opts.path("output")?;
    let mut features = Vec::new();

    if let Some(input) = opts.path_opt("input") {
        let raw = formats::read_trajectories(&input)?;
        let labels = match opts.path_opt("labels") {
            Some(path) => Some(formats::read_labels(&path, &raw)?),
            None => None,
        };
        features.extend(geojson::trajectory_features(&raw, labels.as_ref()));
    } else if opts.get("labels").is_some() {
        return Err(CliError::Usage("--labels requires --input".into()));
    }
    if let Some(model_path) = opts.path_opt("model") {
        let model = formats::read_model(&model_path)?;
        features.extend(geojson::model_features(&model));
    }
    if let Some(pred_path) = opts.path_opt("predictions") {
        let records = formats::read_predictions(&pred_path)?;
        features.extend(geojson::prediction_features(&records));
    }
    let count = features.len();
    geojson::write_feature_collection(&output, features)?;
    eprintln!("export: {count} features -> {}", output.display());
    Ok(())
}

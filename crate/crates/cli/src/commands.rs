use std::path::{Path, PathBuf};

use carfollow::dataset::{split_train_test, write_instances_csv, build_instances, ReactionTime};
use carfollow::evaluation::{
    best_depth, compare_models, default_depths, default_m_values, default_nu_values, default_taus,
    grid_search_nu_m, mse, sweep_depth, sweep_tau, ComparisonDetail, DepthRow, GridReport, TauModel,
    TauSweep,
};
use carfollow::gbrt::{fit_gbrt, GbrtConfig, GbrtModel};
use carfollow::ghr::{calibrate_ghr, predict_set, GhrBounds, GhrCoefficients, GhrParameters};
use carfollow::reconstruction::{reconstruct, ReconstructionConfig, ReconstructionError, ReconstructionReport};
use carfollow::synthetic::{generate, GeneratorKind, GeneratorSpec, LeaderProfile, LeaderShape};
use carfollow::trajectory_io::{summarize, SeriesStats};
use carfollow::{InstanceSet64, Series64};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::CliError;
use crate::files::{
    create, fmt, is_instance_file, load_instances, load_series, load_tracks, meta_path, read_json,
    write_bytes, write_csv, write_json, InstanceMeta,
};
use crate::manifest::{manifest_path, write_manifest};
use crate::{
    BuildDatasetArgs, CalibrateArgs, Command, CompareArgs, EvaluateArgs, GbrtArgs, ReconstructArgs,
    SeriesArgs, SynthArgs, SynthKind, TrainArgs, TuneArgs,
};

const DEFAULT_TAU_S: f64 = 1.0;

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Tune(args) => {
            let threads = args
                .jobs
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
                .max(1);
            in_pool(threads, || tune(&args))
        }
        other => in_pool(1, || match other {
            Command::Synth(a) => synth(&a),
            Command::Reconstruct(a) => reconstruct_cmd(&a),
            Command::BuildDataset(a) => build_dataset(&a),
            Command::Train(a) => train(&a),
            Command::Calibrate(a) => calibrate(&a),
            Command::Evaluate(a) => evaluate(&a),
            Command::Compare(a) => compare(&a),
            Command::Tune(_) => unreachable!("handled above"),
        }),
    }
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}

fn series_for(path: &Path, s: &SeriesArgs) -> Result<Series64, CliError> {
    let recon = ReconstructionConfig::default();
    load_series(path, s.units.into(), s.follower, s.reconstruct.then_some(&recon))
}

// ---------------------------------------------------------------- synth

fn leader_profile(text: &str, base: f64) -> Result<LeaderProfile<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || CliError::Input(format!("leader profile `{text}` not understood"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let shape = match parts.as_slice() {
        ["constant"] => LeaderShape::Constant,
        ["sinusoidal", a, p] => LeaderShape::Sinusoidal {
            amplitude_mps: num(a)?,
            period_s: num(p)?,
        },
        ["sawtooth", a, p] => LeaderShape::Sawtooth {
            amplitude_mps: num(a)?,
            period_s: num(p)?,
        },
        _ => return Err(bad()),
    };
    Ok(LeaderProfile {
        base_speed_mps: base,
        shape,
    })
}

fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let coeffs = |v: &[f64]| GhrCoefficients::new(v[0], v[1], v[2]);
    let kind = match a.kind {
        SynthKind::Ghr => GeneratorKind::GhrDynamics {
            ghr: GhrCoefficients::new(a.alpha, a.m, a.l),
        },
        SynthKind::Regime => GeneratorKind::RegimeSwitch {
            near: coeffs(&a.near),
            far: coeffs(&a.far),
            gap_threshold_m: a.gap_threshold,
        },
    };
    let spec = GeneratorSpec {
        kind,
        tau_s: a.tau,
        leader: leader_profile(&a.leader, a.base_speed)?,
        follower_initial_speed_mps: a.follower_speed,
        duration_s: a.duration,
        dt_s: 0.1,
        initial_gap_m: a.initial_gap,
        noise_std_mps2: a.noise,
        seed: a.seed,
    };
    let generated = generate(&spec)?;
    write_bytes(&a.out, &generated.csv)?;
    write_json(&sidecar(&a.out, ".truth.json"), &generated.truth)?;
    if generated.truth.contact_reached {
        eprintln!(
            "warning: follower held at the minimum gap on {} frames",
            generated.truth.contact_frames
        );
    }
    write_manifest(&manifest_path(&a.out), "synth", &json!({ "args": a, "spec": spec }), &[])
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

// ---------------------------------------------------------- reconstruct

#[derive(Serialize)]
struct VehicleReconstruction {
    vehicle_id: i64,
    n_samples: usize,
    skipped: Option<String>,
    report: Option<ReconstructionReport<f64>>,
    outlier_frames: Vec<i64>,
}

fn reconstruct_cmd(a: &ReconstructArgs) -> Result<(), CliError> {
    let config = ReconstructionConfig {
        acc_threshold_mps2: a.threshold,
        anchor_count: a.anchors,
        filter_window: a.window,
        ..ReconstructionConfig::default()
    };
    config.validate()?;
    let tracks = load_tracks(&a.input, a.units.into())?;
    let selected: Vec<_> = match a.vehicle {
        Some(id) => vec![tracks
            .iter()
            .find(|t| t.vehicle_id == id)
            .ok_or_else(|| CliError::Input(format!("vehicle {id} not found")))?],
        None => tracks.iter().collect(),
    };

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for track in selected {
        let result = match reconstruct(track, &config) {
            Ok(r) => r,
            Err(e @ (ReconstructionError::TooShort(_) | ReconstructionError::WindowTooLarge { .. }))
                if a.vehicle.is_none() =>
            {
                reports.push(VehicleReconstruction {
                    vehicle_id: track.vehicle_id,
                    n_samples: track.len(),
                    skipped: Some(e.to_string()),
                    report: None,
                    outlier_frames: Vec::new(),
                });
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        for (i, s) in track.samples.iter().enumerate() {
            rows.push(vec![
                fmt(s.vehicle_id),
                fmt(s.frame_index),
                fmt(s.position_m),
                fmt(s.speed_mps),
                fmt(s.acc_mps2),
                fmt(result.positions_m[i]),
                fmt(result.speeds_mps[i]),
                fmt(result.accs_mps2[i]),
                fmt(u8::from(result.outlier_frames.contains(&s.frame_index))),
            ]);
        }
        reports.push(VehicleReconstruction {
            vehicle_id: track.vehicle_id,
            n_samples: track.len(),
            skipped: None,
            report: Some(result.report),
            outlier_frames: result.outlier_frames.iter().copied().collect(),
        });
    }
    write_csv(
        &a.out,
        &[
            "Vehicle_ID",
            "Frame_ID",
            "Local_Y",
            "v_Vel",
            "v_Acc",
            "pos_recon",
            "v_recon",
            "a_recon",
            "is_outlier",
        ],
        &rows,
    )?;
    write_json(&sidecar(&a.out, ".report.json"), &reports)?;
    write_manifest(&manifest_path(&a.out), "reconstruct", &json!({ "args": a, "config": config }), &[&a.input])
}

// -------------------------------------------------------- build-dataset

#[derive(Serialize)]
struct DatasetSummary<'a> {
    #[serde(flatten)]
    meta: &'a InstanceMeta,
    follower_id: i64,
    leader_id: i64,
    series_stats: SeriesStats<f64>,
}

fn build_dataset(a: &BuildDatasetArgs) -> Result<(), CliError> {
    let series = series_for(&a.input, &a.series)?;
    let set = build_instances(&series, ReactionTime::from_seconds(a.tau)?)?;
    let mut sink = create(&a.out)?;
    write_instances_csv(&set, &mut sink)?;
    drop(sink);
    let meta = InstanceMeta {
        tau_s: set.tau_s(),
        source_name: set.source_name.clone(),
        n_instances: set.len(),
    };
    write_json(
        &meta_path(&a.out),
        &DatasetSummary {
            meta: &meta,
            follower_id: series.follower_id,
            leader_id: series.leader_id,
            series_stats: summarize(&series)?,
        },
    )?;
    write_manifest(&manifest_path(&a.out), "build-dataset", &json!({ "args": a }), &[&a.input])
}

// ----------------------------------------------------------------- tune

/// Selected hyper-parameters, written to `tuned.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedParameters {
    pub series_name: String,
    /// Reaction time of the instances behind the grid and depth sweep.
    pub grid_tau_s: f64,
    pub nu: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub depth: usize,
    pub min_leaf: usize,
    pub grid_avg_mse: f64,
    pub depth_avg_mse: f64,
    pub tau_gbrt_s: f64,
    pub tau_gbrt_avg_mse: Option<f64>,
    pub tau_ghr_s: Option<f64>,
    pub tau_ghr_avg_mse: Option<f64>,
}

fn grid_rows(grid: &GridReport<f64>) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (i, &nu) in grid.nu_values.iter().enumerate() {
        for (j, &m) in grid.m_values.iter().enumerate() {
            rows.push(vec![fmt(nu), fmt(m), fmt(grid.avg_mse[i][j])]);
        }
    }
    rows
}

fn depth_rows(rows: &[DepthRow<f64>]) -> Vec<Vec<String>> {
    rows.iter().map(|r| vec![fmt(r.depth), fmt(r.avg_mse)]).collect()
}

fn tau_rows(sweep: &TauSweep<f64>) -> Vec<Vec<String>> {
    sweep
        .rows
        .iter()
        .map(|r| vec![fmt(r.tau_s), fmt(r.n_instances), fmt(r.n_train), fmt(r.avg_mse)])
        .collect()
}

const TAU_HEADER: [&str; 4] = ["tau", "n_instances", "n_train", "avg_mse"];

fn tune(a: &TuneArgs) -> Result<(), CliError> {
    let series = if is_instance_file(&a.input)? {
        None
    } else {
        Some(series_for(&a.input, &a.series)?)
    };
    let all = match &series {
        Some(s) => build_instances(s, ReactionTime::from_seconds(a.tau.unwrap_or(DEFAULT_TAU_S))?)?,
        None => load_instances(&a.input, a.tau)?,
    };
    let (train, _) = split_train_test(&all, a.train_fraction)?;

    let nus = a.nu.clone().unwrap_or_else(default_nu_values);
    let ms = a.m_values.clone().unwrap_or_else(default_m_values);
    let depths = a.depths.clone().unwrap_or_else(default_depths);
    let grid = grid_search_nu_m(&train, &nus, &ms, a.depth, a.min_leaf, a.folds)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    write_csv(&a.out_dir.join("grid_nu_m.csv"), &["nu", "M", "avg_mse"], &grid_rows(&grid))?;
    if a.plot_data {
        let mut header = vec!["nu".to_string()];
        header.extend(grid.m_values.iter().map(|m| format!("M={m}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = grid
            .nu_values
            .iter()
            .zip(&grid.avg_mse)
            .map(|(nu, row)| std::iter::once(fmt(nu)).chain(row.iter().map(fmt)).collect())
            .collect();
        write_csv(&a.out_dir.join("grid_matrix.csv"), &header, &rows)?;
    }

    let mut config = GbrtConfig {
        n_learners: grid.best.m,
        learning_rate: grid.best.nu,
        max_splits: a.depth,
        min_leaf: a.min_leaf,
    };
    let depth_sweep = sweep_depth(&train, &depths, &config, a.folds)?;
    write_csv(&a.out_dir.join("sweep_depth.csv"), &["depth", "avg_mse"], &depth_rows(&depth_sweep))?;
    let best_d = best_depth(&depth_sweep).expect("non-empty sweep");
    config.max_splits = best_d.depth;

    let mut tuned = TunedParameters {
        series_name: all.source_name.clone(),
        grid_tau_s: all.tau_s(),
        nu: config.learning_rate,
        m: config.n_learners,
        depth: config.max_splits,
        min_leaf: config.min_leaf,
        grid_avg_mse: grid.best.avg_mse,
        depth_avg_mse: best_d.avg_mse,
        tau_gbrt_s: all.tau_s(),
        tau_gbrt_avg_mse: None,
        tau_ghr_s: None,
        tau_ghr_avg_mse: None,
    };
    if let Some(series) = &series {
        let taus = a.taus.clone().unwrap_or_else(default_taus);
        let gbrt_sweep = sweep_tau(series, &taus, &TauModel::Gbrt { config }, a.train_fraction, a.folds)?;
        write_csv(&a.out_dir.join("sweep_tau.csv"), &TAU_HEADER, &tau_rows(&gbrt_sweep))?;
        tuned.tau_gbrt_s = gbrt_sweep.best_tau_s;
        tuned.tau_gbrt_avg_mse = best_row_mse(&gbrt_sweep);
        if !a.skip_ghr {
            let bounds = GhrBounds::default();
            let ghr_sweep = sweep_tau(series, &taus, &TauModel::Ghr { bounds }, a.train_fraction, a.folds)?;
            write_csv(&a.out_dir.join("sweep_tau_ghr.csv"), &TAU_HEADER, &tau_rows(&ghr_sweep))?;
            tuned.tau_ghr_s = Some(ghr_sweep.best_tau_s);
            tuned.tau_ghr_avg_mse = best_row_mse(&ghr_sweep);
        }
    }
    write_json(&a.out_dir.join("tuned.json"), &tuned)?;
    write_manifest(&a.out_dir.join("tune.manifest.json"), "tune", &json!({ "args": a }), &[&a.input])
}

fn best_row_mse(sweep: &TauSweep<f64>) -> Option<f64> {
    sweep
        .rows
        .iter()
        .find(|r| r.tau_s == sweep.best_tau_s)
        .map(|r| r.avg_mse)
}

// ------------------------------------------------------ train/calibrate

fn resolve_gbrt(g: &GbrtArgs) -> Result<(GbrtConfig<f64>, Option<TunedParameters>), CliError> {
    let tuned: Option<TunedParameters> = g.tuned.as_deref().map(read_json).transpose()?;
    let base = GbrtConfig::<f64>::default();
    let config = GbrtConfig {
        n_learners: g.learners.or(tuned.as_ref().map(|t| t.m)).unwrap_or(base.n_learners),
        learning_rate: g.nu.or(tuned.as_ref().map(|t| t.nu)).unwrap_or(base.learning_rate),
        max_splits: g.depth.or(tuned.as_ref().map(|t| t.depth)).unwrap_or(base.max_splits),
        min_leaf: g.min_leaf.or(tuned.as_ref().map(|t| t.min_leaf)).unwrap_or(base.min_leaf),
    };
    config.validate()?;
    Ok((config, tuned))
}

fn training_part(set: &InstanceSet64, all: bool, fraction: f64) -> Result<InstanceSet64, CliError> {
    if all {
        Ok(set.clone())
    } else {
        Ok(split_train_test(set, fraction)?.0)
    }
}

/// What `train` writes.
#[derive(Debug, Serialize, Deserialize)]
struct TrainedGbrt {
    tau_s: f64,
    source_name: String,
    n_train: usize,
    model: GbrtModel<f64>,
}

fn train(a: &TrainArgs) -> Result<(), CliError> {
    let (config, _) = resolve_gbrt(&a.gbrt)?;
    let set = load_instances(&a.input, a.tau)?;
    let part = training_part(&set, a.all, a.train_fraction)?;
    let model = fit_gbrt(&part, &config)?;
    write_json(
        &a.out,
        &TrainedGbrt {
            tau_s: set.tau_s(),
            source_name: set.source_name.clone(),
            n_train: part.len(),
            model,
        },
    )?;
    let mut inputs: Vec<&Path> = vec![&a.input];
    inputs.extend(a.gbrt.tuned.as_deref());
    write_manifest(&manifest_path(&a.out), "train", &json!({ "args": a, "resolved": config }), &inputs)
}

fn bounds_from(lb: &[f64], ub: &[f64]) -> GhrBounds<f64> {
    GhrBounds {
        lower: [lb[0], lb[1], lb[2]],
        upper: [ub[0], ub[1], ub[2]],
    }
}

fn calibrate(a: &CalibrateArgs) -> Result<(), CliError> {
    let set = load_instances(&a.input, a.tau)?;
    let part = training_part(&set, a.all, a.train_fraction)?;
    let params = calibrate_ghr(&part, &bounds_from(&a.lb, &a.ub))?;
    if params.optimizer_report.flat_landscape {
        eprintln!("warning: relative speed is zero everywhere; parameters are not identifiable");
    }
    write_json(&a.out, &params)?;
    write_manifest(&manifest_path(&a.out), "calibrate", &json!({ "args": a }), &[&a.input])
}

// ------------------------------------------------------------- evaluate

#[derive(Serialize)]
struct Evaluation {
    model: &'static str,
    tau_s: f64,
    scored: &'static str,
    n_scored: usize,
    mse: f64,
}

fn prediction_rows(set: &InstanceSet64, predicted: &[f64]) -> Vec<Vec<String>> {
    set.instances
        .iter()
        .zip(predicted)
        .map(|(i, p)| vec![fmt(i.t_index), fmt(i.response_acc_mps2), fmt(p)])
        .collect()
}

const PREDICTION_HEADER: [&str; 3] = ["t_index", "observed", "predicted"];

fn evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let value: serde_json::Value = read_json(&a.model)?;
    let json_err = |source| CliError::Json {
        path: a.model.clone(),
        source,
    };
    enum Loaded {
        Gbrt(TrainedGbrt),
        Ghr(GhrParameters<f64>),
    }
    let loaded = if value.get("model").is_some() {
        Loaded::Gbrt(serde_json::from_value(value).map_err(json_err)?)
    } else if value.get("alpha").is_some() {
        Loaded::Ghr(serde_json::from_value(value).map_err(json_err)?)
    } else {
        return Err(CliError::Input(format!(
            "{}: neither a trained GBRT nor a GHR parameter file",
            a.model.display()
        )));
    };
    let model_tau = match &loaded {
        Loaded::Gbrt(m) => m.tau_s,
        Loaded::Ghr(p) => p.tau_s,
    };
    let set = match load_instances(&a.input, a.tau) {
        Err(CliError::Input(_)) => load_instances(&a.input, Some(model_tau))?,
        other => other?,
    };
    if (set.tau_s() - model_tau).abs() > 1e-9 {
        return Err(CliError::Input(format!(
            "model was fitted at tau = {model_tau} s but the instances use {} s",
            set.tau_s()
        )));
    }
    let scored = if a.all {
        set.clone()
    } else {
        split_train_test(&set, a.train_fraction)?.1
    };
    let (kind, predicted) = match &loaded {
        Loaded::Gbrt(m) => ("gbrt", m.model.predict_batch(&scored.features())),
        Loaded::Ghr(p) => ("ghr", predict_set(&p.coefficients(), &scored).0),
    };
    let report = Evaluation {
        model: kind,
        tau_s: set.tau_s(),
        scored: if a.all { "all" } else { "test" },
        n_scored: scored.len(),
        mse: mse(&predicted, &scored.responses())?,
    };
    write_json(&a.out, &report)?;
    if a.plot_data {
        write_csv(&sidecar(&a.out, ".predictions.csv"), &PREDICTION_HEADER, &prediction_rows(&scored, &predicted))?;
    }
    write_manifest(&manifest_path(&a.out), "evaluate", &json!({ "args": a }), &[&a.model, &a.input])
}

// -------------------------------------------------------------- compare

fn compare(a: &CompareArgs) -> Result<(), CliError> {
    let (config, tuned) = resolve_gbrt(&a.gbrt)?;
    let tau_gbrt = a
        .tau_gbrt
        .or(tuned.as_ref().map(|t| t.tau_gbrt_s))
        .unwrap_or(DEFAULT_TAU_S);
    let tau_ghr = a
        .tau_ghr
        .or(tuned.as_ref().and_then(|t| t.tau_ghr_s))
        .unwrap_or(DEFAULT_TAU_S);
    let bounds = GhrBounds::default();
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;

    let mut reports = Vec::new();
    for input in &a.input {
        let series = series_for(input, &a.series)?;
        let detail: ComparisonDetail<f64> =
            compare_models(&series, &config, tau_gbrt, tau_ghr, &bounds, a.train_fraction)?;
        if a.plot_data {
            let stem = detail.report.series_name.clone();
            write_csv(
                &a.out_dir.join(format!("predictions_{stem}_gbrt.csv")),
                &PREDICTION_HEADER,
                &prediction_rows(&detail.gbrt_test, &detail.gbrt_predictions),
            )?;
            write_csv(
                &a.out_dir.join(format!("predictions_{stem}_ghr.csv")),
                &PREDICTION_HEADER,
                &prediction_rows(&detail.ghr_test, &detail.ghr_predictions),
            )?;
        }
        reports.push(detail.report);
    }
    write_json(&a.out_dir.join("comparison.json"), &reports)?;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.series_name.clone(),
                fmt(r.tau_gbrt_s),
                fmt(r.tau_ghr_s),
                fmt(r.gbrt_config.learning_rate),
                fmt(r.gbrt_config.n_learners),
                fmt(r.gbrt_config.max_splits),
                fmt(r.ghr_params.alpha),
                fmt(r.ghr_params.m_exp),
                fmt(r.ghr_params.l_exp),
                fmt(r.test_mse_gbrt),
                fmt(r.test_mse_ghr),
                fmt(r.n_test),
                fmt(r.n_test_ghr),
            ]
        })
        .collect();
    write_csv(
        &a.out_dir.join("comparison.csv"),
        &[
            "series",
            "tau_gbrt",
            "tau_ghr",
            "nu",
            "M",
            "depth",
            "alpha",
            "m",
            "l",
            "test_mse_gbrt",
            "test_mse_ghr",
            "n_test",
            "n_test_ghr",
        ],
        &rows,
    )?;
    let mut inputs: Vec<&Path> = a.input.iter().map(PathBuf::as_path).collect();
    inputs.extend(a.gbrt.tuned.as_deref());
    let resolved = json!({ "gbrt": config, "tau_gbrt_s": tau_gbrt, "tau_ghr_s": tau_ghr, "bounds": bounds });
    write_manifest(
        &a.out_dir.join("compare.manifest.json"),
        "compare",
        &json!({ "args": a, "resolved": resolved }),
        &inputs,
    )
}

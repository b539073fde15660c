//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ea_core::dataset::{generate_case_dataset, make_loto_split, CaseDataset, GenerationRequest};
use ea_core::eval::{
    accuracy_threshold_curve, compare_external_poses, evaluate_dataset, loto_cross_validation, plot_bars_png,
    plot_curve_png, read_pose_csv, texture_ablation, write_ablation_csv, write_comparison_csv, write_curve_csv,
    write_loto_csv, write_records_csv, EvalResult, PosePredictor,
};
use ea_core::geometry::{CameraIntrinsics, Pose};
use ea_core::image::RgbImage;
use ea_core::mesh::SurfaceMesh;
use ea_core::procedural::{dome_mesh, procedural_textures, DomeConfig};
use ea_core::regressor::{self, RegressorConfig, TrainedModel};
use ea_core::render::{render_pose_comparison, OverlayMode};
use ea_core::synthesis::extractor::default_cache_dir;
use ea_core::synthesis::{extractor_registry, synthesizer_registry, SynthesizerArgs};
use ea_core::texture::{load_texture_set, write_manifest, TextureEntry};
use serde_json::{json, Value};

use crate::config::{LoadedConfig, RunConfig};
use crate::error::{CliError, CliResult};

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| runtime(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Adds this command's configuration and seeds to `reports/<run_id>/run.json`.
/// Wall-clock timings go to the log only so reruns stay byte-identical.
fn record_run(lc: &LoadedConfig, command: &str, extra: Value) -> CliResult<()> {
    let path = lc.report_dir().join("run.json");
    let mut root: Value = std::fs::read_to_string(&path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .filter(Value::is_object)
        .unwrap_or_else(|| json!({}));
    root["tool"] = json!(format!("ea {}", env!("CARGO_PKG_VERSION")));
    root["commands"][command] = json!({
        "config": lc.config,
        "effective_seeds": lc.effective(),
        "details": extra,
    });
    let text = serde_json::to_string_pretty(&root).map_err(runtime)?;
    write_file(&path, text.as_bytes())
}

fn intrinsics(lc: &LoadedConfig) -> CliResult<CameraIntrinsics> {
    let c = &lc.config.case;
    let r = match c.focal {
        Some(f) => CameraIntrinsics::new(
            f,
            f,
            f64::from(c.image_width) / 2.0,
            f64::from(c.image_height) / 2.0,
            c.image_width,
            c.image_height,
        ),
        None => CameraIntrinsics::with_default_focal(c.image_width, c.image_height),
    };
    r.map_err(|e| lc.field_error("case", e))
}

pub fn gen_data(lc: &LoadedConfig) -> CliResult<()> {
    lc.validate_common()?;
    let c = &lc.config;
    lc.require_existing("case.mesh", &c.case.mesh)?;
    lc.require_existing("textures.dir", &c.textures.dir)?;
    if c.case.id.is_empty() {
        return Err(lc.field_error("case.id", "must not be empty"));
    }
    let intr = intrinsics(lc)?;
    let pose_cfg = lc.pose_config();
    pose_cfg.validate().map_err(|e| lc.field_error("poses", e))?;
    let synth_cfg = lc.synthesis_config();
    if !synthesizer_registry().contains(&synth_cfg.method) {
        return Err(lc.field_error("synthesis.method", format!("unknown; available: {}", synthesizer_registry().names().join(", "))));
    }
    if !extractor_registry().contains(&synth_cfg.extractor) {
        return Err(lc.field_error("synthesis.extractor", format!("unknown; available: {}", extractor_registry().names().join(", "))));
    }
    synth_cfg.validate().map_err(|e| lc.field_error("synthesis", e))?;
    let aug_cfg = lc.augment_config();
    aug_cfg.validate().map_err(|e| lc.field_error("augmentation", e))?;
    let mesh = SurfaceMesh::load(&c.case.mesh).map_err(|e| lc.field_error("case.mesh", e))?;
    let ids = (!c.textures.ids.is_empty()).then_some(c.textures.ids.as_slice());
    let textures = load_texture_set(&c.textures.dir, ids).map_err(|e| match e {
        ea_core::Error::InvalidInput(m) => lc.field_error("textures.ids", m),
        other => other.into(),
    })?;
    let synthesizer = synthesizer_registry().create(
        &synth_cfg.method,
        &SynthesizerArgs {
            config: synth_cfg.clone(),
            cache_dir: default_cache_dir(),
        },
    )?;
    let req = GenerationRequest {
        case_id: &c.case.id,
        mesh: &mesh,
        intrinsics: &intr,
        textures: &textures,
        pose_cfg: &pose_cfg,
        synth_cfg: &synth_cfg,
        aug_cfg: &aug_cfg,
        synthesizer: synthesizer.as_ref(),
        workers: c.workers,
    };
    let start = Instant::now();
    let (ds, summary) = generate_case_dataset(&req, &lc.data_dir())?;
    log::info!(
        "gen-data: {} samples ({} generated, {} resumed, {} failed) in {:.1} s",
        ds.samples.len(),
        summary.generated,
        summary.resumed,
        summary.failures.len(),
        start.elapsed().as_secs_f64()
    );
    for f in &summary.failures {
        log::warn!("pose {} texture {}: {}", f.pose_index, f.texture_id, f.message);
    }
    println!("{}", lc.data_dir().join(ea_core::dataset::MANIFEST_FILE).display());
    record_run(
        lc,
        "gen-data",
        json!({"samples": ds.samples.len(), "failures": ds.failures.len(), "config_hash": ds.config_hash}),
    )
}

fn load_dataset(lc: &LoadedConfig) -> CliResult<CaseDataset> {
    let ds = CaseDataset::load(&lc.data_dir())?;
    if !ds.complete {
        log::warn!("dataset at {} is incomplete; rerun gen-data to finish it", ds.root.display());
    }
    if ds.samples.is_empty() {
        return Err(runtime(format!("dataset at {} has no samples", ds.root.display())));
    }
    Ok(ds)
}

fn check_textures(lc: &LoadedConfig, ds: &CaseDataset, field: &str, ids: &[String]) -> CliResult<()> {
    if let Some(bad) = ids.iter().find(|t| !ds.texture_ids.contains(t)) {
        return Err(lc.field_error(field, format!("texture `{bad}` not in the dataset ({})", ds.texture_ids.join(", "))));
    }
    Ok(())
}

/// Training and evaluation splits selected by `evaluation.held_out`.
fn split(lc: &LoadedConfig, ds: &CaseDataset) -> CliResult<(CaseDataset, Option<CaseDataset>)> {
    let held = &lc.config.evaluation.held_out;
    if held.is_empty() {
        return Ok((ds.clone(), None));
    }
    check_textures(lc, ds, "evaluation.held_out", held)?;
    let (train, val) = make_loto_split(ds, held).map_err(|e| lc.field_error("evaluation.held_out", e))?;
    Ok((train, Some(val)))
}

pub fn train(lc: &LoadedConfig) -> CliResult<()> {
    lc.validate_common()?;
    lc.validate_regressor()?;
    let ds = load_dataset(lc)?;
    let (train_ds, val) = split(lc, &ds)?;
    let cfg = lc.regressor_config();
    let start = Instant::now();
    let model = regressor::train(&train_ds, val.as_ref(), &cfg)?;
    log::info!(
        "train: {} samples, {} epochs in {:.1} s",
        train_ds.samples.len(),
        cfg.epochs,
        start.elapsed().as_secs_f64()
    );
    model.save(&lc.model_dir())?;
    let mut hist = String::from("epoch,learning_rate,train_loss,val_loss\n");
    for h in &model.history {
        let val = h.val_loss.map(|v| format!("{v:.6}")).unwrap_or_default();
        hist.push_str(&format!("{},{:.6e},{:.6},{}\n", h.epoch, h.learning_rate, h.train_loss, val));
    }
    write_file(&lc.report_dir().join("history.csv"), hist.as_bytes())?;
    println!("{}", lc.model_dir().display());
    record_run(
        lc,
        "train",
        json!({
            "n_train": train_ds.samples.len(),
            "n_val": val.as_ref().map_or(0, |v| v.samples.len()),
            "param_count": model.net.param_count(),
        }),
    )
}

/// `name=path` pairs naming external pose files.
pub fn parse_external(spec: &str) -> CliResult<(String, PathBuf)> {
    match spec.split_once('=') {
        Some((n, p)) if !n.is_empty() && !p.is_empty() => Ok((n.to_string(), PathBuf::from(p))),
        _ => Err(CliError::Config(format!("--external {spec}: expected name=path"))),
    }
}

fn write_curve(lc: &LoadedConfig, result: &EvalResult, stem: &str) -> CliResult<()> {
    let e = &lc.config.evaluation;
    let curve = accuracy_threshold_curve(result, e.curve_max_mm, e.curve_step_mm)?;
    let dir = lc.report_dir();
    write_curve_csv(&dir.join(format!("{stem}.csv")), &curve)?;
    plot_curve_png(&dir.join(format!("{stem}.png")), &curve)?;
    Ok(())
}

pub fn evaluate(lc: &LoadedConfig, external: &[(String, PathBuf)]) -> CliResult<()> {
    lc.validate_common()?;
    lc.validate_curve()?;
    let ds = load_dataset(lc)?;
    let model = TrainedModel::load(&lc.model_dir())?;
    let (_, val) = split(lc, &ds)?;
    let eval_ds = val.unwrap_or(ds);
    let start = Instant::now();
    let result = evaluate_dataset(&model, &eval_ds)?;
    log::info!(
        "evaluate: {} samples in {:.1} s, mean ADD {:.3} mm",
        result.records.len(),
        start.elapsed().as_secs_f64(),
        result.summary.mean_add_mm
    );
    let dir = lc.report_dir();
    write_curve(lc, &result, "curve")?;
    write_records_csv(&dir.join("records.csv"), &result)?;
    let summary = serde_json::to_string_pretty(&result.summary).map_err(runtime)?;
    write_file(&dir.join("summary.json"), summary.as_bytes())?;
    if !external.is_empty() {
        let poses = |pick: fn(&ea_core::eval::EvalRecord) -> [f64; 6]| {
            result
                .records
                .iter()
                .map(|r| Ok((r.id.clone(), Pose::from_array(pick(r))?)))
                .collect::<ea_core::Result<Vec<_>>>()
        };
        let gt = poses(|r| r.gt)?;
        let mut methods = vec![("regressor".to_string(), poses(|r| r.pred)?)];
        for (name, path) in external {
            methods.push((name.clone(), read_pose_csv(path)?));
        }
        let mesh = eval_ds.load_mesh()?;
        let table = compare_external_poses(&gt, &methods, mesh.vertices())?;
        write_comparison_csv(&dir.join("comparison.csv"), &table)?;
        let bars: Vec<Option<f64>> = table.mean_add_mm.iter().copied().map(Some).collect();
        plot_bars_png(&dir.join("comparison.png"), &bars)?;
    }
    println!(
        "mean_add_mm={:.4} std_add_mm={:.4} acc_3mm3deg={:.2} acc_5mm5deg={:.2}",
        result.summary.mean_add_mm,
        result.summary.std_add_mm,
        result.summary.accuracy_3mm3deg,
        result.summary.accuracy_5mm5deg
    );
    record_run(
        lc,
        "evaluate",
        json!({"samples": result.records.len(), "external": external.iter().map(|(n, _)| n).collect::<Vec<_>>()}),
    )
}

fn trainer(cfg: RegressorConfig) -> impl Fn(&CaseDataset, &CaseDataset) -> ea_core::Result<Box<dyn PosePredictor>> + Sync {
    move |train: &CaseDataset, _val: &CaseDataset| {
        let start = Instant::now();
        let model = regressor::train(train, None, &cfg)?;
        log::info!(
            "trained on {} samples ({}) in {:.1} s",
            train.samples.len(),
            train.texture_ids.join(" "),
            start.elapsed().as_secs_f64()
        );
        Ok(Box::new(model) as Box<dyn PosePredictor>)
    }
}

pub fn loto(lc: &LoadedConfig) -> CliResult<()> {
    lc.validate_common()?;
    lc.validate_regressor()?;
    lc.validate_curve()?;
    let ds = load_dataset(lc)?;
    let textures = if lc.config.evaluation.loto_textures.is_empty() {
        ds.texture_ids.clone()
    } else {
        check_textures(lc, &ds, "evaluation.loto_textures", &lc.config.evaluation.loto_textures)?;
        lc.config.evaluation.loto_textures.clone()
    };
    if ds.texture_ids.len() < 2 {
        return Err(runtime("leave-one-texture-out needs at least two textures in the dataset"));
    }
    let train_fn = trainer(lc.regressor_config());
    let (report, results) = loto_cross_validation(&ds, &textures, &train_fn, lc.config.workers)?;
    let dir = lc.report_dir();
    write_loto_csv(&dir.join("loto.csv"), &report)?;
    let bars: Vec<Option<f64>> = report.folds.iter().map(|f| f.summary.as_ref().map(|s| s.mean_add_mm)).collect();
    plot_bars_png(&dir.join("loto.png"), &bars)?;
    let pooled: Vec<_> = results.into_iter().flatten().flat_map(|r| r.records).collect();
    if !pooled.is_empty() {
        let all = EvalResult::from_records(pooled)?;
        write_curve(lc, &all, "loto_curve")?;
        write_records_csv(&dir.join("loto_records.csv"), &all)?;
    }
    for f in &report.folds {
        match (&f.summary, &f.error) {
            (Some(s), _) => println!(
                "{}: mean_add_mm={:.4} acc_3mm3deg={:.2} acc_5mm5deg={:.2}",
                f.held_out.join(" "),
                s.mean_add_mm,
                s.accuracy_3mm3deg,
                s.accuracy_5mm5deg
            ),
            (None, e) => println!("{}: failed {}", f.held_out.join(" "), e.as_deref().unwrap_or("")),
        }
    }
    record_run(lc, "loto", json!({"textures": textures}))?;
    if report.folds.iter().all(|f| f.summary.is_none()) {
        return Err(runtime("every fold failed"));
    }
    Ok(())
}

pub fn ablation(lc: &LoadedConfig) -> CliResult<()> {
    lc.validate_common()?;
    lc.validate_regressor()?;
    let e = &lc.config.evaluation;
    if e.ablation_k.is_empty() {
        return Err(lc.field_error("evaluation.ablation_k", "must list at least one k"));
    }
    if e.ablation_held_out.is_empty() {
        return Err(lc.field_error("evaluation.ablation_held_out", "must name at least one texture"));
    }
    let ds = load_dataset(lc)?;
    check_textures(lc, &ds, "evaluation.ablation_held_out", &e.ablation_held_out)?;
    let available = ds.texture_ids.len() - e.ablation_held_out.len();
    if let Some(k) = e.ablation_k.iter().find(|&&k| k == 0 || k > available) {
        return Err(lc.field_error("evaluation.ablation_k", format!("k = {k} outside 1..={available}")));
    }
    let train_fn = trainer(lc.regressor_config());
    let points = texture_ablation(&ds, &e.ablation_k, &e.ablation_held_out, lc.effective().ablation, &train_fn, lc.config.workers)?;
    let dir = lc.report_dir();
    write_ablation_csv(&dir.join("ablation.csv"), &points)?;
    let bars: Vec<Option<f64>> = points.iter().map(|p| p.fold.summary.as_ref().map(|s| s.mean_add_mm)).collect();
    plot_bars_png(&dir.join("ablation.png"), &bars)?;
    for p in &points {
        match &p.fold.summary {
            Some(s) => println!("k={}: mean_add_mm={:.4} acc_5mm5deg={:.2}", p.k, s.mean_add_mm, s.accuracy_5mm5deg),
            None => println!("k={}: failed {}", p.k, p.fold.error.as_deref().unwrap_or("")),
        }
    }
    record_run(lc, "ablation", json!({"k": e.ablation_k}))
}

pub fn predict(lc: &LoadedConfig, image: &Path, model_dir: Option<&Path>) -> CliResult<()> {
    let dir = model_dir.map_or_else(|| lc.model_dir(), Path::to_path_buf);
    let model = TrainedModel::load(&dir)?;
    let img = RgbImage::load_png_rgb_only(image)?;
    let start = Instant::now();
    let pose = model.predict(&img)?;
    log::info!("predict: {:.1} ms", start.elapsed().as_secs_f64() * 1e3);
    let v = pose.to_array();
    println!("{}", v.map(|x| format!("{x:.9}")).join(" "));
    Ok(())
}

fn parse_pose(text: &str) -> CliResult<Pose> {
    let vals: Vec<f64> = text
        .split([',', ' '])
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("--pred-pose {text}: {e}")))?;
    let arr: [f64; 6] = vals
        .try_into()
        .map_err(|_| CliError::Config(format!("--pred-pose {text}: expected 6 numbers")))?;
    Pose::from_array(arr).map_err(|e| CliError::Config(format!("--pred-pose {text}: {e}")))
}

pub struct OverlayArgs<'a> {
    pub sample: &'a str,
    pub pred_pose: Option<&'a str>,
    pub opacity: f32,
    pub silhouette: bool,
    pub out: Option<&'a Path>,
}

pub fn overlay(lc: &LoadedConfig, args: &OverlayArgs<'_>) -> CliResult<()> {
    lc.validate_common()?;
    let ds = load_dataset(lc)?;
    let sample = ds
        .samples
        .iter()
        .find(|s| s.id == args.sample)
        .ok_or_else(|| runtime(format!("sample {} not in {}", args.sample, ds.root.display())))?;
    let image = ds.load_image(sample)?;
    let pred = match args.pred_pose {
        Some(t) => parse_pose(t)?,
        None => TrainedModel::load(&lc.model_dir())?.predict(&image)?,
    };
    let mode = if args.silhouette { OverlayMode::Silhouette } else { OverlayMode::Vessels };
    let mesh = ds.load_mesh()?;
    let out_img = render_pose_comparison(&image, &mesh, &ds.intrinsics, &sample.pose, &pred, args.opacity, mode)?;
    let out = args
        .out
        .map_or_else(|| lc.report_dir().join(format!("overlay_{}.png", sample.id)), Path::to_path_buf);
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent).map_err(|e| runtime(format!("{}: {e}", parent.display())))?;
    }
    out_img.save_png(&out)?;
    println!("{}", out.display());
    Ok(())
}

/// Sizes of the synthetic demonstration case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoProfile {
    pub textures: usize,
    pub poses: usize,
    pub epochs: usize,
}

pub const DEMO_FULL: DemoProfile = DemoProfile {
    textures: 11,
    poses: 100,
    epochs: 200,
};

pub const DEMO_SMOKE: DemoProfile = DemoProfile {
    textures: 4,
    poses: 20,
    epochs: 30,
};

const DEMO_IMAGE_SIZE: u32 = 64;
const DEMO_TEXTURE_SIZE: usize = 128;
const DEMO_TEXTURE_SEED: u64 = 2024;

/// Config of the demonstration case, with paths relative to its directory.
pub fn demo_config(p: DemoProfile) -> RunConfig {
    let mut c = RunConfig::default();
    c.run_id = "demo".into();
    c.case.id = "dome".into();
    c.case.mesh = "mesh.ply".into();
    c.case.image_width = DEMO_IMAGE_SIZE;
    c.case.image_height = DEMO_IMAGE_SIZE;
    c.textures.dir = "textures".into();
    c.poses.n_poses = p.poses;
    c.synthesis.extractor = "vgg19-tiny".into();
    c.regressor.input_size = DEMO_IMAGE_SIZE as usize;
    c.regressor.block_channels = [8, 16, 32];
    c.regressor.epochs = p.epochs;
    c.evaluation.held_out = vec!["proc-00".into()];
    c.evaluation.loto_textures = vec!["proc-00".into()];
    if p.textures >= 11 {
        c.evaluation.ablation_k = vec![3, 8];
        c.evaluation.ablation_held_out = (8..p.textures).map(|i| format!("proc-{i:02}")).collect();
    } else {
        c.evaluation.ablation_k = vec![1, p.textures - 1];
        c.evaluation.ablation_held_out = vec![format!("proc-{:02}", p.textures - 1)];
    }
    c
}

/// Writes a dome mesh, procedural textures and a config into `out`.
pub fn demo_case(out: &Path, p: DemoProfile) -> CliResult<PathBuf> {
    std::fs::create_dir_all(out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    let mesh = dome_mesh(&DomeConfig::default())?;
    mesh.save_ply(&out.join("mesh.ply"))?;
    let tex_dir = out.join("textures");
    let textures = procedural_textures(p.textures, DEMO_TEXTURE_SIZE, DEMO_TEXTURE_SEED)?;
    let mut entries = Vec::new();
    for t in &textures {
        t.save(&tex_dir)?;
        entries.push(TextureEntry {
            id: t.id.clone(),
            provenance: "procedural".into(),
            license: "generated".into(),
        });
    }
    write_manifest(&tex_dir, &entries)?;
    let text = toml::to_string(&demo_config(p)).map_err(runtime)?;
    let path = out.join("config.toml");
    write_file(&path, text.as_bytes())?;
    Ok(path)
}

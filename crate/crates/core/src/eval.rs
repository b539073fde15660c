//! Evaluation: ADD tables, accuracy-threshold curves, leave-one-texture-out
//! cross-validation, texture-count ablation and external pose comparison.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{make_loto_split, subsample_textures, CaseDataset};
use crate::error::{invalid, io_err, Error, Result};
use crate::geometry::{add_metric, rotation_error_deg, translation_error, within_threshold, Pose, Vec3};
use crate::image::RgbImage;
use crate::regressor::TrainedModel;

pub const CURVE_MAX_MM: f64 = 20.0;
pub const CURVE_STEP_MM: f64 = 0.5;

/// Anything that maps an image to a camera pose.
pub trait PosePredictor: Send + Sync {
    fn predict_pose(&self, image: &RgbImage) -> Result<Pose>;
}

impl PosePredictor for TrainedModel {
    fn predict_pose(&self, image: &RgbImage) -> Result<Pose> {
        self.predict(image)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub add_mm: f64,
    pub translation_err_mm: f64,
    pub rotation_err_deg: f64,
    pub within_3mm3deg: bool,
    pub gt: [f64; 6],
    pub pred: [f64; 6],
}

impl EvalRecord {
    pub fn new(id: impl Into<String>, vertices: &[Vec3], gt: &Pose, pred: &Pose) -> Result<Self> {
        Ok(Self {
            id: id.into(),
            add_mm: add_metric(vertices, gt, pred)?,
            translation_err_mm: translation_error(gt, pred),
            rotation_err_deg: rotation_error_deg(gt, pred),
            within_3mm3deg: within_threshold(gt, pred, 3.0, 3.0),
            gt: gt.to_array(),
            pred: pred.to_array(),
        })
    }

    /// Joint `X mm - X deg` test.
    pub fn within(&self, mm: f64, deg: f64) -> bool {
        self.translation_err_mm <= mm && self.rotation_err_deg <= deg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub count: usize,
    pub mean_add_mm: f64,
    pub std_add_mm: f64,
    /// Percentages.
    pub accuracy_3mm3deg: f64,
    pub accuracy_5mm5deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub records: Vec<EvalRecord>,
    pub summary: EvalSummary,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn percent(hits: usize, n: usize) -> f64 {
    100.0 * hits as f64 / n as f64
}

impl EvalResult {
    pub fn from_records(records: Vec<EvalRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(invalid("no evaluation records"));
        }
        let adds: Vec<f64> = records.iter().map(|r| r.add_mm).collect();
        let (mean, std) = mean_std(&adds);
        let n = records.len();
        let summary = EvalSummary {
            count: n,
            mean_add_mm: mean,
            std_add_mm: std,
            accuracy_3mm3deg: percent(records.iter().filter(|r| r.within_3mm3deg).count(), n),
            accuracy_5mm5deg: percent(records.iter().filter(|r| r.within(5.0, 5.0)).count(), n),
        };
        Ok(Self { records, summary })
    }

    /// Recomputes the aggregates from the records and compares.
    pub fn check_aggregates(&self) -> Result<()> {
        let again = Self::from_records(self.records.clone())?;
        if again.summary != self.summary {
            return Err(invalid("evaluation aggregates do not match their records"));
        }
        Ok(())
    }

    pub fn accuracy_at(&self, mm: f64, deg: f64) -> f64 {
        percent(self.records.iter().filter(|r| r.within(mm, deg)).count(), self.records.len())
    }
}

/// Predicts every `(id, image, gt)` sample and scores it on `vertices`.
pub fn evaluate(predictor: &dyn PosePredictor, samples: &[(String, RgbImage, Pose)], vertices: &[Vec3]) -> Result<EvalResult> {
    if samples.is_empty() {
        return Err(invalid("evaluation needs at least one sample"));
    }
    let records = samples
        .iter()
        .map(|(id, img, gt)| {
            let pred = predictor.predict_pose(img).map_err(|e| invalid(format!("sample {id}: {e}")))?;
            EvalRecord::new(id.clone(), vertices, gt, &pred)
        })
        .collect::<Result<Vec<_>>>()?;
    EvalResult::from_records(records)
}

/// [`evaluate`] over every sample of a case dataset, on its own mesh.
pub fn evaluate_dataset(predictor: &dyn PosePredictor, ds: &CaseDataset) -> Result<EvalResult> {
    let mesh = ds.load_mesh()?;
    let samples = ds
        .samples
        .iter()
        .map(|s| Ok((s.id.clone(), ds.load_image(s)?, s.pose)))
        .collect::<Result<Vec<_>>>()?;
    evaluate(predictor, &samples, mesh.vertices())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    /// Percentage of records within `threshold` mm and `threshold` deg.
    pub accuracy: f64,
}

/// Accuracy at joint `X mm - X deg` thresholds `0, step, ..., max_mm`.
pub fn accuracy_threshold_curve(result: &EvalResult, max_mm: f64, step_mm: f64) -> Result<Vec<CurvePoint>> {
    if result.records.is_empty() {
        return Err(invalid("empty evaluation result"));
    }
    if !(step_mm > 0.0 && max_mm >= 0.0) {
        return Err(invalid("curve needs step > 0 and max >= 0"));
    }
    let steps = (max_mm / step_mm).round() as usize;
    Ok((0..=steps)
        .map(|i| {
            let threshold = i as f64 * step_mm;
            CurvePoint {
                threshold,
                accuracy: result.accuracy_at(threshold, threshold),
            }
        })
        .collect())
}

/// Training strategy used by cross-validation and ablation jobs: given a
/// training and a validation split, returns a predictor.
pub type Trainer<'a> = dyn Fn(&CaseDataset, &CaseDataset) -> Result<Box<dyn PosePredictor>> + Sync + 'a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub held_out: Vec<String>,
    pub train_textures: Vec<String>,
    pub n_train: usize,
    pub n_val: usize,
    pub summary: Option<EvalSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotoReport {
    pub folds: Vec<FoldOutcome>,
    pub mean_add_mm: Option<f64>,
    pub std_add_mm: Option<f64>,
}

/// Fails if any training sample uses a held-out texture.
pub fn audit_split(train: &CaseDataset, held_out: &[String]) -> Result<()> {
    let held: BTreeSet<&str> = held_out.iter().map(String::as_str).collect();
    if let Some(s) = train.samples.iter().find(|s| held.contains(s.texture_id.as_str())) {
        return Err(invalid(format!("leak: training sample {} uses held-out texture {}", s.id, s.texture_id)));
    }
    if train.texture_ids.iter().any(|t| held.contains(t.as_str())) {
        return Err(invalid("leak: held-out texture listed in the training manifest"));
    }
    Ok(())
}

fn run_fold(
    train: &CaseDataset,
    val: &CaseDataset,
    held_out: &[String],
    trainer: &Trainer<'_>,
    keep: &mut Option<EvalResult>,
) -> FoldOutcome {
    let mut outcome = FoldOutcome {
        held_out: held_out.to_vec(),
        train_textures: train.texture_ids.clone(),
        n_train: train.samples.len(),
        n_val: val.samples.len(),
        summary: None,
        error: None,
    };
    let result = audit_split(train, held_out)
        .and_then(|_| trainer(train, val))
        .and_then(|p| evaluate_dataset(p.as_ref(), val));
    match result {
        Ok(r) => {
            outcome.summary = Some(r.summary.clone());
            *keep = Some(r);
        }
        Err(e) => {
            log::warn!("fold holding out {held_out:?} failed: {e}");
            outcome.error = Some(e.to_string());
        }
    }
    outcome
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| invalid(format!("worker pool: {e}")))
}

fn folds_summary(folds: &[FoldOutcome]) -> (Option<f64>, Option<f64>) {
    let adds: Vec<f64> = folds.iter().filter_map(|f| f.summary.as_ref().map(|s| s.mean_add_mm)).collect();
    if adds.is_empty() {
        return (None, None);
    }
    let (m, s) = mean_std(&adds);
    (Some(m), Some(s))
}

/// One fold per texture in `textures`; folds run on up to `workers`
/// threads. Failed folds are recorded and left out of the average.
/// Returns the report and the per-fold evaluation results.
pub fn loto_cross_validation(
    ds: &CaseDataset,
    textures: &[String],
    trainer: &Trainer<'_>,
    workers: usize,
) -> Result<(LotoReport, Vec<Option<EvalResult>>)> {
    if ds.texture_ids.len() < 2 {
        return Err(invalid("leave-one-texture-out needs at least 2 textures"));
    }
    if textures.is_empty() {
        return Err(invalid("no textures to hold out"));
    }
    let splits = textures
        .iter()
        .map(|t| make_loto_split(ds, std::slice::from_ref(t)))
        .collect::<Result<Vec<_>>>()?;
    let pool = pool(workers)?;
    let outcomes: Vec<(FoldOutcome, Option<EvalResult>)> = pool.install(|| {
        use rayon::prelude::*;
        splits
            .par_iter()
            .zip(textures)
            .map(|((train, val), t)| {
                let mut keep = None;
                let o = run_fold(train, val, std::slice::from_ref(t), trainer, &mut keep);
                (o, keep)
            })
            .collect()
    });
    let (folds, results): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    let (mean_add_mm, std_add_mm) = folds_summary(&folds);
    Ok((
        LotoReport {
            folds,
            mean_add_mm,
            std_add_mm,
        },
        results,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub k: usize,
    pub fold: FoldOutcome,
}

/// Trains one model per `k` on `k` textures drawn from those not held out,
/// with the training-set size held constant, and evaluates each on the
/// held-out textures.
pub fn texture_ablation(
    ds: &CaseDataset,
    k_values: &[usize],
    held_out: &[String],
    seed: u64,
    trainer: &Trainer<'_>,
    workers: usize,
) -> Result<Vec<AblationPoint>> {
    if held_out.is_empty() {
        return Err(invalid("ablation needs at least one held-out texture"));
    }
    let (pool_ds, val) = make_loto_split(ds, held_out)?;
    let available = pool_ds.texture_ids.len();
    if let Some(&k) = k_values.iter().find(|&&k| k == 0 || k > available) {
        return Err(invalid(format!("k = {k} outside 1..={available} (textures left after holding out {})", held_out.len())));
    }
    let subsets = k_values
        .iter()
        .map(|&k| {
            let sub = subsample_textures(&pool_ds, k, seed)?;
            if sub.samples.len() != pool_ds.samples.len() {
                return Err(invalid(format!("k = {k}: training size {} differs from {}", sub.samples.len(), pool_ds.samples.len())));
            }
            Ok(sub)
        })
        .collect::<Result<Vec<_>>>()?;
    let pool = pool(workers)?;
    let folds: Vec<FoldOutcome> = pool.install(|| {
        use rayon::prelude::*;
        subsets.par_iter().map(|train| run_fold(train, &val, held_out, trainer, &mut None)).collect()
    });
    Ok(k_values.iter().zip(folds).map(|(&k, fold)| AblationPoint { k, fold }).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub ids: Vec<String>,
    pub methods: Vec<String>,
    /// `add_mm[m][i]`: ADD of method `m` on sample `i`.
    pub add_mm: Vec<Vec<f64>>,
    pub mean_add_mm: Vec<f64>,
    pub std_add_mm: Vec<f64>,
}

/// ADD of each method's poses against the ground truth, sample by sample.
/// Every method must list exactly the ground-truth ids in the same order.
pub fn compare_external_poses(
    gt: &[(String, Pose)],
    methods: &[(String, Vec<(String, Pose)>)],
    vertices: &[Vec3],
) -> Result<ComparisonTable> {
    if gt.is_empty() || methods.is_empty() {
        return Err(invalid("comparison needs ground truth and at least one method"));
    }
    let mut add_mm = Vec::new();
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for (name, poses) in methods {
        if poses.len() != gt.len() {
            return Err(invalid(format!("method {name}: {} poses for {} ground-truth samples", poses.len(), gt.len())));
        }
        let row = gt
            .iter()
            .zip(poses)
            .map(|((gid, gp), (pid, pp))| {
                if gid != pid {
                    return Err(invalid(format!("method {name}: sample id {pid} where {gid} was expected")));
                }
                add_metric(vertices, gp, pp)
            })
            .collect::<Result<Vec<f64>>>()?;
        let (m, s) = mean_std(&row);
        means.push(m);
        stds.push(s);
        add_mm.push(row);
    }
    Ok(ComparisonTable {
        ids: gt.iter().map(|(id, _)| id.clone()).collect(),
        methods: methods.iter().map(|(n, _)| n.clone()).collect(),
        add_mm,
        mean_add_mm: means,
        std_add_mm: stds,
    })
}

/// Reads `id,rx,ry,rz,tx,ty,tz` rows; a header line starting with `id` is
/// skipped.
pub fn read_pose_csv(path: &Path) -> Result<Vec<(String, Pose)>> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    let fmt = |line: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("id")) {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 7 {
            return Err(fmt(i + 1, format!("expected 7 columns, found {}", cols.len())));
        }
        let mut v = [0.0; 6];
        for (k, c) in cols[1..].iter().enumerate() {
            v[k] = c.parse().map_err(|_| fmt(i + 1, format!("not a number: {c}")))?;
        }
        let pose = Pose::from_array(v).map_err(|e| fmt(i + 1, e.to_string()))?;
        out.push((cols[0].to_string(), pose));
    }
    Ok(out)
}

pub fn write_pose_csv(path: &Path, poses: &[(String, Pose)]) -> Result<()> {
    let mut s = String::from("id,rx,ry,rz,tx,ty,tz\n");
    for (id, p) in poses {
        let v = p.to_array();
        let _ = writeln!(s, "{id},{}", v.map(|x| format!("{x:.9}")).join(","));
    }
    write_text(path, &s)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut s = String::from("threshold,accuracy\n");
    for p in curve {
        let _ = writeln!(s, "{:.1},{:.4}", p.threshold, p.accuracy);
    }
    write_text(path, &s)
}

pub fn write_records_csv(path: &Path, result: &EvalResult) -> Result<()> {
    let mut s = String::from("id,add_mm,translation_err_mm,rotation_err_deg,within_3mm3deg\n");
    for r in &result.records {
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{}",
            r.id, r.add_mm, r.translation_err_mm, r.rotation_err_deg, r.within_3mm3deg
        );
    }
    write_text(path, &s)
}

fn summary_cols(f: &FoldOutcome) -> String {
    match (&f.summary, &f.error) {
        (Some(s), _) => format!(
            "{:.6},{:.6},{:.4},{:.4},ok",
            s.mean_add_mm, s.std_add_mm, s.accuracy_3mm3deg, s.accuracy_5mm5deg
        ),
        (None, Some(e)) => format!(",,,,failed: {}", e.replace([',', '\n'], ";")),
        (None, None) => ",,,,failed".into(),
    }
}

pub fn write_loto_csv(path: &Path, report: &LotoReport) -> Result<()> {
    let mut s = String::from("texture,n_train,n_val,mean_add_mm,std_add_mm,acc_3mm3deg,acc_5mm5deg,status\n");
    for f in &report.folds {
        let _ = writeln!(s, "{},{},{},{}", f.held_out.join(" "), f.n_train, f.n_val, summary_cols(f));
    }
    if let (Some(m), Some(sd)) = (report.mean_add_mm, report.std_add_mm) {
        let _ = writeln!(s, "average,,,{m:.6},{sd:.6},,,");
    }
    write_text(path, &s)
}

pub fn write_ablation_csv(path: &Path, points: &[AblationPoint]) -> Result<()> {
    let mut s = String::from("k,textures,n_train,mean_add_mm,std_add_mm,acc_3mm3deg,acc_5mm5deg,status\n");
    for p in points {
        let _ = writeln!(s, "{},{},{},{}", p.k, p.fold.train_textures.join(" "), p.fold.n_train, summary_cols(&p.fold));
    }
    write_text(path, &s)
}

pub fn write_comparison_csv(path: &Path, table: &ComparisonTable) -> Result<()> {
    let mut s = format!("id,{}\n", table.methods.join(","));
    for (i, id) in table.ids.iter().enumerate() {
        let row: Vec<String> = table.add_mm.iter().map(|m| format!("{:.6}", m[i])).collect();
        let _ = writeln!(s, "{id},{}", row.join(","));
    }
    let _ = writeln!(s, "mean,{}", table.mean_add_mm.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(","));
    let _ = writeln!(s, "std,{}", table.std_add_mm.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(","));
    write_text(path, &s)
}

const PLOT_W: usize = 480;
const PLOT_H: usize = 320;
const MARGIN: usize = 30;

struct Canvas {
    img: RgbImage,
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Canvas {
    fn new(x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        let mut img = RgbImage::new(PLOT_W, PLOT_H);
        for c in 0..3 {
            img.channel_mut(c).fill(1.0);
        }
        let mut cv = Self { img, x_range, y_range };
        let grey = [0.85, 0.85, 0.85];
        for i in 0..=4 {
            let y = y_range.0 + (y_range.1 - y_range.0) * i as f64 / 4.0;
            cv.line((x_range.0, y), (x_range.1, y), grey);
        }
        let black = [0.0, 0.0, 0.0];
        cv.line((x_range.0, y_range.0), (x_range.1, y_range.0), black);
        cv.line((x_range.0, y_range.0), (x_range.0, y_range.1), black);
        cv
    }

    fn to_px(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        let w = (PLOT_W - 2 * MARGIN) as f64;
        let h = (PLOT_H - 2 * MARGIN) as f64;
        let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
        (MARGIN as f64 + (x - x0) / span(x0, x1) * w, (PLOT_H - MARGIN) as f64 - (y - y0) / span(y0, y1) * h)
    }

    fn dot(&mut self, px: f64, py: f64, color: [f32; 3]) {
        let (x, y) = (px.round(), py.round());
        if x < 0.0 || y < 0.0 || x >= PLOT_W as f64 || y >= PLOT_H as f64 {
            return;
        }
        for (c, v) in color.iter().enumerate() {
            self.img.set(c, x as usize, y as usize, *v);
        }
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), color: [f32; 3]) {
        let (ax, ay) = self.to_px(a);
        let (bx, by) = self.to_px(b);
        let n = (bx - ax).abs().max((by - ay).abs()).ceil().max(1.0) as usize;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            self.dot(ax + (bx - ax) * t, ay + (by - ay) * t, color);
        }
    }

    fn bar(&mut self, x_center: f64, half_width: f64, height: f64, color: [f32; 3]) {
        let (l, top) = self.to_px((x_center - half_width, height));
        let (r, bottom) = self.to_px((x_center + half_width, self.y_range.0));
        for y in top.round() as i64..=bottom.round() as i64 {
            for x in l.round() as i64..=r.round() as i64 {
                self.dot(x as f64, y as f64, color);
            }
        }
    }
}

const BLUE: [f32; 3] = [0.12, 0.35, 0.75];

/// Accuracy-threshold curve as a line plot (0-20 mm by 0-100%).
pub fn plot_curve_png(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let x_max = curve.last().map_or(CURVE_MAX_MM, |p| p.threshold);
    let mut cv = Canvas::new((0.0, x_max), (0.0, 100.0));
    for w in curve.windows(2) {
        cv.line((w[0].threshold, w[0].accuracy), (w[1].threshold, w[1].accuracy), BLUE);
    }
    cv.img.save_png(path)
}

/// One bar per value; failed entries are left empty.
pub fn plot_bars_png(path: &Path, values: &[Option<f64>]) -> Result<()> {
    let top = values.iter().flatten().fold(0.0f64, |a, &b| a.max(b)).max(1e-9) * 1.1;
    let n = values.len().max(1) as f64;
    let mut cv = Canvas::new((0.0, n), (0.0, top));
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = v {
            cv.bar(i as f64 + 0.5, 0.35, *v, BLUE);
        }
    }
    cv.img.save_png(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, t: f64, r: f64, add: f64) -> EvalRecord {
        EvalRecord {
            id: id.into(),
            add_mm: add,
            translation_err_mm: t,
            rotation_err_deg: r,
            within_3mm3deg: t <= 3.0 && r <= 3.0,
            gt: [0.0; 6],
            pred: [0.0; 6],
        }
    }

    #[test]
    fn step_curve() {
        let r = EvalResult::from_records(vec![rec("a", 5.0, 0.0, 5.0)]).unwrap();
        let c = accuracy_threshold_curve(&r, CURVE_MAX_MM, CURVE_STEP_MM).unwrap();
        assert_eq!(c.len(), 41);
        for p in &c {
            assert_eq!(p.accuracy, if p.threshold >= 5.0 { 100.0 } else { 0.0 }, "{p:?}");
        }
    }

    #[test]
    fn aggregates_recompute() {
        let r = EvalResult::from_records(vec![rec("a", 1.0, 1.0, 2.0), rec("b", 4.0, 1.0, 4.0)]).unwrap();
        assert_eq!(r.summary.mean_add_mm, 3.0);
        assert_eq!(r.summary.std_add_mm, 1.0);
        assert_eq!(r.summary.accuracy_3mm3deg, 50.0);
        assert_eq!(r.summary.accuracy_5mm5deg, 100.0);
        r.check_aggregates().unwrap();
        let mut bad = r.clone();
        bad.summary.mean_add_mm = 2.5;
        assert!(bad.check_aggregates().is_err());
        assert!(EvalResult::from_records(vec![]).is_err());
    }

    #[test]
    fn comparison_rejects_misaligned_ids() {
        let v = vec![Vec3::new(1.0, 0.0, 0.0)];
        let gt = vec![("a".to_string(), Pose::identity()), ("b".to_string(), Pose::identity())];
        let swapped = vec![("b".to_string(), Pose::identity()), ("a".to_string(), Pose::identity())];
        let err = compare_external_poses(&gt, &[("m".into(), swapped)], &v).unwrap_err();
        assert!(err.to_string().contains("sample id b"));
        let t = compare_external_poses(&gt, &[("gt".into(), gt.clone())], &v).unwrap();
        assert_eq!(t.add_mm[0], vec![0.0, 0.0]);
    }

    #[test]
    fn pose_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("poses.csv");
        let poses = vec![("x".to_string(), Pose::from_array([0.1, -0.2, 0.3, 1.0, 2.0, 60.0]).unwrap())];
        write_pose_csv(&p, &poses).unwrap();
        let back = read_pose_csv(&p).unwrap();
        assert_eq!(back[0].0, "x");
        for (a, b) in back[0].1.to_array().iter().zip(poses[0].1.to_array()) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(matches!(read_pose_csv(&dir.path().join("none.csv")), Err(Error::MissingArtifact(_))));
    }
}

//! Run configuration: TOML file, `--set` overrides and field documentation.

use std::path::{Path, PathBuf};

use ea_core::augment::AugmentConfig;
use ea_core::dataset::derive_seed;
use ea_core::regressor::RegressorConfig;
use ea_core::sampling::PoseSamplingConfig;
use ea_core::synthesis::SynthesisConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_root: PathBuf,
    pub run_id: String,
    pub workers: usize,
    pub case: CaseConfig,
    pub textures: TextureConfig,
    pub poses: PoseSamplingConfig,
    pub synthesis: SynthesisConfig,
    pub augmentation: AugmentConfig,
    pub regressor: RegressorConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_root: PathBuf::from("run"),
            run_id: "default".into(),
            workers: 1,
            case: CaseConfig::default(),
            textures: TextureConfig::default(),
            poses: PoseSamplingConfig::default(),
            synthesis: SynthesisConfig::default(),
            augmentation: AugmentConfig::default(),
            regressor: RegressorConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseConfig {
    pub id: String,
    pub mesh: PathBuf,
    pub image_width: u32,
    pub image_height: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub focal: Option<f64>,
}

impl Default for CaseConfig {
    fn default() -> Self {
        Self {
            id: "case".into(),
            mesh: PathBuf::new(),
            image_width: 256,
            image_height: 256,
            focal: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureConfig {
    pub dir: PathBuf,
    pub ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub held_out: Vec<String>,
    pub loto_textures: Vec<String>,
    pub ablation_k: Vec<usize>,
    pub ablation_held_out: Vec<String>,
    pub ablation_seed: u64,
    pub curve_max_mm: f64,
    pub curve_step_mm: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            held_out: Vec::new(),
            loto_textures: Vec::new(),
            ablation_k: vec![3, 8],
            ablation_held_out: Vec::new(),
            ablation_seed: 0,
            curve_max_mm: ea_core::eval::CURVE_MAX_MM,
            curve_step_mm: ea_core::eval::CURVE_STEP_MM,
        }
    }
}

/// Documentation of every configuration key, in file order.
pub const FIELDS: &[(&str, &str)] = &[
    ("seed", "global seed mixed into every module seed"),
    ("output_root", "directory holding data/, model/ and reports/"),
    ("run_id", "report subdirectory name under reports/"),
    ("workers", "parallel worker cap (also --workers)"),
    ("case.id", "case identifier stored in the manifest"),
    ("case.mesh", "labelled surface mesh (PLY or OBJ)"),
    ("case.image_width", "rendered image width in pixels"),
    ("case.image_height", "rendered image height in pixels"),
    ("case.focal", "focal length in pixels; omitted for the default"),
    ("textures.dir", "directory with exemplars and manifest.tsv"),
    ("textures.ids", "exemplar ids to use; empty for all"),
    ("poses.n_poses", "number of sampled camera poses"),
    ("poses.radius_range", "camera distance range in mm"),
    ("poses.elevation_range", "elevation range in radians"),
    ("poses.azimuth_range", "azimuth range in radians"),
    ("poses.roll_range", "roll range in radians"),
    ("poses.lookat_jitter", "look-at jitter radius in mm"),
    ("poses.seed", "pose sampling seed"),
    ("synthesis.method", "synthesizer: gram-lbfgs or class-mean"),
    ("synthesis.extractor", "feature extractor: vgg19 or vgg19-tiny"),
    ("synthesis.layer_set", "extractor layers used by the style loss"),
    ("synthesis.max_iterations", "L-BFGS iteration cap"),
    ("synthesis.convergence_tol", "relative loss decrease that stops L-BFGS"),
    ("synthesis.init_mode", "initial image: class-mean or noise"),
    ("synthesis.init_noise", "noise std of the initial image"),
    ("synthesis.history_size", "L-BFGS memory"),
    ("synthesis.seed", "synthesis seed"),
    ("augmentation.method", "augmenter: elastic or none"),
    ("augmentation.n_augmentations", "augmented copies per synthesized image"),
    ("augmentation.grid_spacing", "coarse displacement grid spacing in pixels"),
    ("augmentation.displacement_sigma", "displacement std in pixels"),
    ("augmentation.seed", "augmentation seed"),
    ("regressor.input_size", "network input side in pixels (multiple of 4)"),
    ("regressor.block_channels", "output channels of the three conv blocks"),
    ("regressor.fc_sizes", "hidden fully connected widths"),
    ("regressor.kernel_size", "odd convolution kernel size"),
    ("regressor.epochs", "training epochs (also --epochs)"),
    ("regressor.batch_size", "minibatch size"),
    ("regressor.lr_start", "learning rate of the first epoch"),
    ("regressor.lr_end", "learning rate of the last epoch"),
    ("regressor.seed", "initialization and shuffling seed"),
    ("evaluation.held_out", "textures excluded from training and used for evaluation"),
    ("evaluation.loto_textures", "textures to hold out one at a time; empty for all"),
    ("evaluation.ablation_k", "training texture counts compared by the ablation"),
    ("evaluation.ablation_held_out", "textures held out from every ablation point"),
    ("evaluation.ablation_seed", "seed of the texture subset draw"),
    ("evaluation.curve_max_mm", "largest threshold of the accuracy curve"),
    ("evaluation.curve_step_mm", "threshold step of the accuracy curve"),
];

/// Help text listing the documented keys matching any of `prefixes`
/// (`"case."` matches the section, `"seed"` the exact key).
pub fn fields_help(prefixes: &[&str]) -> String {
    let mut s = String::from("Config fields read:\n");
    for (key, doc) in FIELDS {
        if prefixes.iter().any(|p| if p.ends_with('.') { key.starts_with(p) } else { key == p }) {
            s.push_str(&format!("  {key:<34} {doc}\n"));
        }
    }
    s
}

pub const GEN_DATA_FIELDS: &[&str] =
    &["seed", "output_root", "run_id", "workers", "case.", "textures.", "poses.", "synthesis.", "augmentation."];
pub const TRAIN_FIELDS: &[&str] = &["seed", "output_root", "run_id", "regressor.", "evaluation.held_out"];
pub const EVALUATE_FIELDS: &[&str] = &[
    "output_root",
    "run_id",
    "evaluation.held_out",
    "evaluation.curve_max_mm",
    "evaluation.curve_step_mm",
];
pub const LOTO_FIELDS: &[&str] = &["seed", "output_root", "run_id", "workers", "regressor.", "evaluation.loto_textures"];
pub const ABLATION_FIELDS: &[&str] = &[
    "seed",
    "output_root",
    "run_id",
    "workers",
    "regressor.",
    "evaluation.ablation_k",
    "evaluation.ablation_held_out",
    "evaluation.ablation_seed",
];
pub const PREDICT_FIELDS: &[&str] = &["output_root"];
pub const OVERLAY_FIELDS: &[&str] = &["output_root", "run_id"];

/// Command-line values that win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// `section.key=value` pairs; values are parsed as TOML, else taken as strings.
    pub set: Vec<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub run_id: Option<String>,
    pub output_root: Option<PathBuf>,
    pub epochs: Option<usize>,
}

impl Overrides {
    fn assignments(&self) -> Result<Vec<(String, toml::Value)>, CliError> {
        let mut out = Vec::new();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set {s}: expected section.key=value")))?;
            out.push((k.trim().to_string(), parse_value(v.trim())));
        }
        if let Some(v) = self.seed {
            out.push(("seed".into(), toml::Value::Integer(to_i64(v, "seed")?)));
        }
        if let Some(v) = self.workers {
            out.push(("workers".into(), toml::Value::Integer(to_i64(v as u64, "workers")?)));
        }
        if let Some(v) = &self.run_id {
            out.push(("run_id".into(), toml::Value::String(v.clone())));
        }
        if let Some(v) = &self.output_root {
            out.push(("output_root".into(), toml::Value::String(v.to_string_lossy().into_owned())));
        }
        if let Some(v) = self.epochs {
            out.push(("regressor.epochs".into(), toml::Value::Integer(to_i64(v as u64, "regressor.epochs")?)));
        }
        Ok(out)
    }
}

fn to_i64(v: u64, field: &str) -> Result<i64, CliError> {
    i64::try_from(v).map_err(|_| CliError::Config(format!("{field}: value {v} too large")))
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// A loaded configuration with its source for line lookups.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: Option<PathBuf>,
    text: String,
}

impl LoadedConfig {
    /// Reads `path` (defaults when `None`), applies overrides and resolves
    /// relative paths against the file's directory.
    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => {
                if !p.exists() {
                    return Err(CliError::Missing(p.to_path_buf()));
                }
                std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => String::new(),
        };
        let label = path.map_or_else(|| "<defaults>".to_string(), |p| p.display().to_string());
        let mut table: toml::Table = toml::from_str(&text).map_err(|e| CliError::Config(format!("{label}: {e}")))?;
        // Typed parse of the file alone keeps the parser's line numbers.
        toml::from_str::<RunConfig>(&text).map_err(|e| CliError::Config(format!("{label}: {e}")))?;
        for (key, value) in ov.assignments()? {
            set_path(&mut table, &key, value)?;
        }
        let mut config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("override: {}", e.message())))?;
        let base = path.and_then(Path::parent).map(Path::to_path_buf).unwrap_or_default();
        let resolve = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.output_root);
        resolve(&mut config.case.mesh);
        resolve(&mut config.textures.dir);
        Ok(Self {
            config,
            source: path.map(Path::to_path_buf),
            text,
        })
    }

    /// Config error for `field`, anchored to its line when the file sets it.
    pub fn field_error(&self, field: &str, msg: impl std::fmt::Display) -> CliError {
        match (&self.source, line_of(&self.text, field)) {
            (Some(p), Some(line)) => CliError::Config(format!("{}:{line}: {field}: {msg}", p.display())),
            _ => CliError::Config(format!("{field}: {msg}")),
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.config.output_root.join("data")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.config.output_root.join("model")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.config.output_root.join("reports").join(&self.config.run_id)
    }

    pub fn require_existing(&self, field: &str, path: &Path) -> Result<(), CliError> {
        if path.as_os_str().is_empty() {
            return Err(self.field_error(field, "not set"));
        }
        if !path.exists() {
            return Err(self.field_error(field, format!("{} does not exist", path.display())));
        }
        Ok(())
    }

    pub fn validate_common(&self) -> Result<(), CliError> {
        if self.config.run_id.is_empty() || self.config.run_id.contains(['/', '\\']) {
            return Err(self.field_error("run_id", "must be a non-empty name without path separators"));
        }
        if self.config.workers == 0 {
            return Err(self.field_error("workers", "must be >= 1"));
        }
        Ok(())
    }

    pub fn validate_regressor(&self) -> Result<(), CliError> {
        self.config.regressor.validate().map_err(|e| self.field_error("regressor", e))
    }

    pub fn validate_curve(&self) -> Result<(), CliError> {
        let e = &self.config.evaluation;
        if !(e.curve_step_mm > 0.0) {
            return Err(self.field_error("evaluation.curve_step_mm", "must be > 0"));
        }
        if !(e.curve_max_mm >= e.curve_step_mm) {
            return Err(self.field_error("evaluation.curve_max_mm", "must be >= curve_step_mm"));
        }
        Ok(())
    }

    /// Module configs with the global seed folded into their own seeds.
    pub fn effective(&self) -> EffectiveSeeds {
        let c = &self.config;
        EffectiveSeeds {
            poses: derive_seed(c.seed, &[1, c.poses.seed]),
            synthesis: derive_seed(c.seed, &[2, c.synthesis.seed]),
            augmentation: derive_seed(c.seed, &[3, c.augmentation.seed]),
            regressor: derive_seed(c.seed, &[4, c.regressor.seed]),
            ablation: derive_seed(c.seed, &[5, c.evaluation.ablation_seed]),
        }
    }

    pub fn pose_config(&self) -> PoseSamplingConfig {
        PoseSamplingConfig {
            seed: self.effective().poses,
            ..self.config.poses.clone()
        }
    }

    pub fn synthesis_config(&self) -> SynthesisConfig {
        SynthesisConfig {
            seed: self.effective().synthesis,
            ..self.config.synthesis.clone()
        }
    }

    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            seed: self.effective().augmentation,
            ..self.config.augmentation.clone()
        }
    }

    pub fn regressor_config(&self) -> RegressorConfig {
        RegressorConfig {
            seed: self.effective().regressor,
            ..self.config.regressor.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EffectiveSeeds {
    pub poses: u64,
    pub synthesis: u64,
    pub augmentation: u64,
    pub regressor: u64,
    pub ablation: u64,
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("--set {key}: empty key segment")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("--set {key}: `{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// 1-based line where `field` (`key` or `section.key` or `section`) is set.
fn line_of(text: &str, field: &str) -> Option<usize> {
    let (section, key) = match field.split_once('.') {
        Some((s, k)) => (Some(s), Some(k)),
        None if FIELDS.iter().any(|(k, _)| *k == field) => (None, Some(field)),
        None => (Some(field), None),
    };
    let mut current: Option<&str> = None;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = Some(name.trim());
            if key.is_none() && current == section {
                return Some(i + 1);
            }
            continue;
        }
        if let (Some(k), true) = (key, current == section) {
            if let Some((lhs, _)) = t.split_once('=') {
                if lhs.trim() == k {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys(prefix: &str, v: &toml::Value, out: &mut Vec<String>) {
        match v {
            toml::Value::Table(t) => {
                for (k, v) in t {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    if v.is_table() {
                        keys(&key, v, out);
                    } else {
                        out.push(key);
                    }
                }
            }
            _ => out.push(prefix.to_string()),
        }
    }

    #[test]
    fn every_key_is_documented() {
        let mut cfg = RunConfig::default();
        cfg.case.focal = Some(100.0);
        let v = toml::Value::try_from(&cfg).unwrap();
        let mut found = Vec::new();
        keys("", &v, &mut found);
        let mut documented: Vec<String> = FIELDS.iter().map(|(k, _)| k.to_string()).collect();
        found.sort();
        documented.sort();
        assert_eq!(found, documented);
    }

    #[test]
    fn overrides_win_and_parse_types() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 3\n[regressor]\nepochs = 5\n").unwrap();
        let ov = Overrides {
            set: vec!["regressor.lr_end=2e-4".into(), "case.id=brain".into()],
            epochs: Some(7),
            ..Default::default()
        };
        let c = LoadedConfig::load(Some(&p), &ov).unwrap().config;
        assert_eq!(c.seed, 3);
        assert_eq!(c.regressor.epochs, 7);
        assert_eq!(c.regressor.lr_end, 2e-4);
        assert_eq!(c.case.id, "brain");
        assert_eq!(c.output_root, dir.path().join("run"));
    }

    #[test]
    fn errors_point_at_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 1\n\n[case]\nmesh = \"nope.ply\"\n").unwrap();
        let lc = LoadedConfig::load(Some(&p), &Overrides::default()).unwrap();
        let msg = lc.require_existing("case.mesh", &lc.config.case.mesh).unwrap_err().to_string();
        assert!(msg.contains(":4: case.mesh"), "{msg}");

        std::fs::write(&p, "[case]\nmesh = 3\n").unwrap();
        let msg = LoadedConfig::load(Some(&p), &Overrides::default()).unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
        std::fs::write(&p, "[case]\nmeshh = \"a\"\n").unwrap();
        let msg = LoadedConfig::load(Some(&p), &Overrides::default()).unwrap_err().to_string();
        assert!(msg.contains("meshh"), "{msg}");
    }

    #[test]
    fn global_seed_changes_module_seeds() {
        let a = LoadedConfig::load(None, &Overrides::default()).unwrap();
        let b = LoadedConfig::load(None, &Overrides { seed: Some(1), ..Default::default() }).unwrap();
        assert_ne!(a.effective().poses, b.effective().poses);
        assert_ne!(a.effective().poses, a.effective().synthesis);
        assert_eq!(a.effective(), LoadedConfig::load(None, &Overrides::default()).unwrap().effective());
    }
}

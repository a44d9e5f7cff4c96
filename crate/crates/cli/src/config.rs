//! Experiment configuration: defaults, the `paper` preset, `key = value`
//! files and command-line overrides.
//!
//! Layers apply in order default, preset, file, flag; later layers win.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ngcl_core::fisher::DEFAULT_MAX_SAMPLES;
use ngcl_core::harness::{DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, PAPER_EPOCHS, PAPER_ETA};
use ngcl_core::optimizer::OptimizerKind;

pub const DEFAULT_ETA: f64 = 0.05;
pub const DEFAULT_EPSILON: f64 = 100.0;
/// Larger than the optimizer's own default: head rows born in the current task
/// have zero Fisher, so their NGD step is `eta / damping` times the gradient.
pub const DEFAULT_DAMPING: f64 = 0.3;
pub const DEFAULT_CLASSES_PER_TASK: usize = 5;
pub const DEFAULT_HIDDEN: usize = 64;

/// Every key accepted in a config file, spelled as on the command line.
pub const KEYS: &[&str] = &[
    "dataset",
    "classes-per-task",
    "seed",
    "optimizer",
    "eta",
    "damping",
    "epsilon",
    "epochs",
    "batch-size",
    "fisher-max-samples",
    "hidden-dims",
    "out-dir",
    "preset",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("config key `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// eta 0.001 and 300 epochs.
    Paper,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paper" => Ok(Preset::Paper),
            other => Err(format!("unknown preset {other:?} (expected paper)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Paper => f.write_str("paper"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    /// Gaussian blobs, split 80/20 per class.
    Synth {
        classes: usize,
        per_class: usize,
        dim: usize,
        spread: f64,
    },
    /// IDX files. Without a test pair the training pair is split 80/20.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test: Option<(PathBuf, PathBuf)>,
    },
}

impl DatasetSpec {
    pub const SYNTH_DEFAULT: DatasetSpec = DatasetSpec::Synth {
        classes: 10,
        per_class: 100,
        dim: 8,
        spread: 0.3,
    };
}

impl FromStr for DatasetSpec {
    type Err = String;

    /// `synth`, `synth:CLASSES[:PER_CLASS[:DIM[:SPREAD]]]`, or
    /// `idx:IMAGES,LABELS[,TEST_IMAGES,TEST_LABELS]`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, rest) = match s.split_once(':') {
            Some((k, r)) => (k, Some(r)),
            None => (s, None),
        };
        match kind {
            "synth" => {
                let DatasetSpec::Synth {
                    mut classes,
                    mut per_class,
                    mut dim,
                    mut spread,
                } = DatasetSpec::SYNTH_DEFAULT
                else {
                    unreachable!()
                };
                if let Some(rest) = rest {
                    let parts: Vec<&str> = rest.split(':').collect();
                    if parts.len() > 4 {
                        return Err("synth takes at most CLASSES:PER_CLASS:DIM:SPREAD".into());
                    }
                    let count = |p: &str, what: &str| -> Result<usize, String> {
                        p.parse().map_err(|_| format!("bad synth {what} {p:?}"))
                    };
                    if let Some(p) = parts.first() {
                        classes = count(p, "class count")?;
                    }
                    if let Some(p) = parts.get(1) {
                        per_class = count(p, "per-class count")?;
                    }
                    if let Some(p) = parts.get(2) {
                        dim = count(p, "dimension")?;
                    }
                    if let Some(p) = parts.get(3) {
                        spread = p.parse().map_err(|_| format!("bad synth spread {p:?}"))?;
                    }
                }
                if classes == 0 || per_class == 0 || dim == 0 {
                    return Err("synth counts must be >= 1".into());
                }
                if !(spread > 0.0 && spread.is_finite()) {
                    return Err("synth spread must be > 0".into());
                }
                Ok(DatasetSpec::Synth {
                    classes,
                    per_class,
                    dim,
                    spread,
                })
            }
            "idx" => {
                let paths: Vec<PathBuf> = rest
                    .unwrap_or("")
                    .split(',')
                    .filter(|p| !p.is_empty())
                    .map(PathBuf::from)
                    .collect();
                match paths.as_slice() {
                    [img, lbl] => Ok(DatasetSpec::Idx {
                        train_images: img.clone(),
                        train_labels: lbl.clone(),
                        test: None,
                    }),
                    [img, lbl, timg, tlbl] => Ok(DatasetSpec::Idx {
                        train_images: img.clone(),
                        train_labels: lbl.clone(),
                        test: Some((timg.clone(), tlbl.clone())),
                    }),
                    _ => Err("idx needs IMAGES,LABELS or IMAGES,LABELS,TEST_IMAGES,TEST_LABELS".into()),
                }
            }
            other => Err(format!("unknown dataset kind {other:?} (expected synth or idx)")),
        }
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::Synth {
                classes,
                per_class,
                dim,
                spread,
            } => write!(f, "synth:{classes}:{per_class}:{dim}:{spread}"),
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test,
            } => {
                write!(f, "idx:{},{}", train_images.display(), train_labels.display())?;
                if let Some((i, l)) = test {
                    write!(f, ",{},{}", i.display(), l.display())?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub classes_per_task: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub eta: f64,
    pub damping: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub fisher_max_samples: usize,
    pub hidden_dims: Vec<usize>,
    pub out_dir: PathBuf,
    pub preset: Option<Preset>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::SYNTH_DEFAULT,
            classes_per_task: DEFAULT_CLASSES_PER_TASK,
            seed: 0,
            optimizer: OptimizerKind::Sgd,
            eta: DEFAULT_ETA,
            damping: DEFAULT_DAMPING,
            epsilon: DEFAULT_EPSILON,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            fisher_max_samples: DEFAULT_MAX_SAMPLES,
            hidden_dims: vec![DEFAULT_HIDDEN],
            out_dir: PathBuf::from("runs"),
            preset: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| ConfigError::new(key, format!("cannot parse {value:?}: {e}")))
}

impl ExperimentConfig {
    pub fn apply_preset(&mut self, preset: Preset) {
        match preset {
            Preset::Paper => {
                self.eta = PAPER_ETA;
                self.epochs = PAPER_EPOCHS;
            }
        }
        self.preset = Some(preset);
    }

    /// Sets one field from its textual form. Range checks happen in
    /// [`ExperimentConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "dataset" => self.dataset = parse_value(key, value)?,
            "classes-per-task" => self.classes_per_task = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "optimizer" => self.optimizer = parse_value(key, value)?,
            "eta" => self.eta = parse_value(key, value)?,
            "damping" => self.damping = parse_value(key, value)?,
            "epsilon" => self.epsilon = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch-size" => self.batch_size = parse_value(key, value)?,
            "fisher-max-samples" => self.fisher_max_samples = parse_value(key, value)?,
            "hidden-dims" => {
                self.hidden_dims = value
                    .split(',')
                    .map(|p| parse_value(key, p.trim()))
                    .collect::<Result<_, _>>()?
            }
            "out-dir" => self.out_dir = PathBuf::from(value),
            "preset" => self.apply_preset(parse_value(key, value)?),
            other => return Err(ConfigError::new(other, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, key: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::new(key, msg))
            }
        };
        check(self.classes_per_task >= 1, "classes-per-task", "must be >= 1")?;
        if let DatasetSpec::Synth { classes, .. } = self.dataset {
            check(
                self.classes_per_task <= classes,
                "classes-per-task",
                "exceeds the number of dataset classes",
            )?;
        }
        check(self.eta > 0.0 && self.eta.is_finite(), "eta", "must be finite and > 0")?;
        check(
            self.damping >= 0.0 && self.damping.is_finite(),
            "damping",
            "must be finite and >= 0",
        )?;
        check(
            self.epsilon >= 0.0 && self.epsilon.is_finite(),
            "epsilon",
            "must be finite and >= 0",
        )?;
        check(self.epochs >= 1, "epochs", "must be >= 1")?;
        check(self.batch_size >= 1, "batch-size", "must be >= 1")?;
        check(self.fisher_max_samples >= 1, "fisher-max-samples", "must be >= 1")?;
        check(
            !self.hidden_dims.is_empty() && self.hidden_dims.iter().all(|&h| h >= 1),
            "hidden-dims",
            "needs at least one layer, every width >= 1",
        )?;
        Ok(())
    }

    /// Everything that determines the results, keyed like the config file.
    /// The output directory is left out.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let hidden: Vec<String> = self.hidden_dims.iter().map(usize::to_string).collect();
        let mut map = BTreeMap::new();
        map.insert("dataset".into(), self.dataset.to_string());
        map.insert("classes-per-task".into(), self.classes_per_task.to_string());
        map.insert("seed".into(), self.seed.to_string());
        map.insert("optimizer".into(), self.optimizer.to_string());
        map.insert("eta".into(), self.eta.to_string());
        map.insert("damping".into(), self.damping.to_string());
        map.insert("epsilon".into(), self.epsilon.to_string());
        map.insert("epochs".into(), self.epochs.to_string());
        map.insert("batch-size".into(), self.batch_size.to_string());
        map.insert("fisher-max-samples".into(), self.fisher_max_samples.to_string());
        map.insert("hidden-dims".into(), hidden.join(","));
        map
    }
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::new(line, format!("line {} is not `key = value`", n + 1)));
        };
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(ConfigError::new(key, "unknown key"));
        }
        pairs.push((key.to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config_text(&text)
}

/// Resolves the layered configuration. `file_pairs` and `flag_pairs` are
/// `(key, value)` lists; a `preset` in either layer is applied first, the
/// flag's preset taking priority.
pub fn parse_config(
    file_pairs: &[(String, String)],
    flag_pairs: &[(String, String)],
) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    let preset_of = |pairs: &[(String, String)]| -> Result<Option<Preset>, ConfigError> {
        pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "preset")
            .map(|(k, v)| parse_value(k, v))
            .transpose()
    };
    let flag_preset = preset_of(flag_pairs)?;
    if let Some(preset) = flag_preset.or(preset_of(file_pairs)?) {
        cfg.apply_preset(preset);
    }
    for (key, value) in file_pairs.iter().chain(flag_pairs) {
        if key != "preset" {
            cfg.set(key, value)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Renders the snapshot as a config file that [`parse_config_text`] accepts.
pub fn render_snapshot(snapshot: &BTreeMap<String, String>) -> String {
    snapshot.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

//! Run configuration: a line-oriented `key = value` file with `#`
//! comments, merged with command-line overrides (flags win). Every value
//! the pipeline consumes is resolved here, before any data is touched, so
//! a bad config can never leave partial outputs behind.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use datagrad::error::{Error, Result};
use datagrad::regularizer::RegularizerKind;
use datagrad::robustness::DEFAULT_PHI_GRID;
use datagrad::train::{TrainConfig, WeightPenalty};

/// Training variants: the plain baseline, weight-penalty baselines, the
/// input-gradient penalty in both flavors, and the multi-task versions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Rect,
    L1,
    L2,
    DgL1,
    DgL2,
    Mt,
    MtDgL1,
    MtDgL2,
}

pub const MODE_NAMES: [&str; 8] =
    ["rect", "l1", "l2", "dgl1", "dgl2", "mt", "mt_dgl1", "mt_dgl2"];

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Rect => "rect",
            Mode::L1 => "l1",
            Mode::L2 => "l2",
            Mode::DgL1 => "dgl1",
            Mode::DgL2 => "dgl2",
            Mode::Mt => "mt",
            Mode::MtDgL1 => "mt_dgl1",
            Mode::MtDgL2 => "mt_dgl2",
        }
    }

    pub fn is_multitask(self) -> bool {
        matches!(self, Mode::Mt | Mode::MtDgL1 | Mode::MtDgL2)
    }

    /// The input-gradient penalty's regularizer, where the mode uses one.
    pub fn datagrad_kind(self) -> Option<RegularizerKind> {
        match self {
            Mode::DgL1 | Mode::MtDgL1 => Some(RegularizerKind::L1),
            Mode::DgL2 | Mode::MtDgL2 => Some(RegularizerKind::L2),
            _ => None,
        }
    }

    /// The weight-decay penalty, for the classic baselines.
    pub fn weight_penalty_kind(self) -> Option<RegularizerKind> {
        match self {
            Mode::L1 => Some(RegularizerKind::L1),
            Mode::L2 => Some(RegularizerKind::L2),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "rect" => Ok(Mode::Rect),
            "l1" => Ok(Mode::L1),
            "l2" => Ok(Mode::L2),
            "dgl1" => Ok(Mode::DgL1),
            "dgl2" => Ok(Mode::DgL2),
            "mt" => Ok(Mode::Mt),
            "mt_dgl1" => Ok(Mode::MtDgL1),
            "mt_dgl2" => Ok(Mode::MtDgL2),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected one of {})",
                MODE_NAMES.join(", ")
            ))),
        }
    }
}

/// Values passed as command-line flags; each one overrides the matching
/// config-file key.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub mode: Option<String>,
    pub seed: Option<u64>,
    pub eta: Option<f64>,
    pub lambda1: Option<f64>,
    pub fd_step: Option<f64>,
    pub gamma: Option<f64>,
    pub phi_grid: Option<String>,
    pub out: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
}

/// Which command the config is being resolved for; determines the
/// required keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Train,
    Attack,
    Sweep,
}

const KNOWN_KEYS: [&str; 21] = [
    "mode",
    "train_images",
    "train_labels",
    "test_images",
    "test_labels",
    "layers",
    "validation_count",
    "shuffle_seed",
    "aux_classes",
    "eta",
    "lambda0",
    "lambda1",
    "fd_step",
    "gamma",
    "weight_penalty",
    "batch_size",
    "epochs",
    "seed",
    "phi_grid",
    "attack_kind",
    "out",
];

/// The merged key/value view the typed config is read from.
struct Raw {
    entries: Vec<(String, String)>,
}

impl Raw {
    fn parse_file(path: &Path) -> Result<Raw> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut entries: Vec<(String, String)> = Vec::new();
        let mut seen = BTreeSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{} line {}: expected 'key = value', got {line:?}",
                    path.display(),
                    n + 1
                ))
            })?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if !seen.insert(k.clone()) {
                return Err(Error::Config(format!(
                    "{} line {}: key '{k}' set twice",
                    path.display(),
                    n + 1
                )));
            }
            entries.push((k, v));
        }
        Ok(Raw { entries })
    }

    fn set(&mut self, key: &str, value: String) {
        if let Some(e) = self.entries.iter_mut().find(|(k, _)| k == key) {
            e.1 = value;
        } else {
            self.entries.push((key.to_string(), value));
        }
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn check_keys(&self) -> Result<()> {
        for (k, _) in &self.entries {
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown config key '{k}'")));
            }
        }
        Ok(())
    }
}

fn parse_as<T: FromStr>(key: &str, raw: &str, what: &str) -> Result<T> {
    raw.parse().map_err(|_| {
        Error::Config(format!("key '{key}': cannot parse {raw:?} as {what}"))
    })
}

fn parse_list<T: FromStr>(key: &str, raw: &str, what: &str) -> Result<Vec<T>> {
    raw.split(',').map(|s| parse_as(key, s.trim(), what)).collect()
}

/// Everything a command needs, typed and validated. Paths stay optional
/// here; each command demands the ones it uses.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Layer widths from the input through the digit output. Multi-task
    /// modes treat the last entry as the digit head and the rest as the
    /// shared stack.
    pub layers: Vec<usize>,
    pub validation_count: usize,
    pub shuffle_seed: u64,
    pub aux_classes: usize,
    pub train: TrainConfig,
    pub phi_grid: Vec<f64>,
    /// Noise family used by attack and sweep (the tables use l1).
    pub attack_kind: RegularizerKind,
    pub out: PathBuf,
}

fn require<'a>(raw: &'a Raw, key: &str, why: &str) -> Result<&'a str> {
    raw.get(key)
        .ok_or_else(|| Error::Config(format!("key '{key}' is required {why}")))
}

fn forbid(raw: &Raw, key: &str, mode: Mode, uses: &str) -> Result<()> {
    if raw.get(key).is_some() {
        return Err(Error::Config(format!(
            "key '{key}' is set but mode {mode} does not use it (only {uses})"
        )));
    }
    Ok(())
}

impl RunConfig {
    /// Reads the config file (when given), applies flag overrides, and
    /// resolves the typed view for `cmd`. All `Error::Config` failures
    /// happen here, before any data file is opened.
    pub fn load(cmd: Command, config: Option<&Path>, ov: &Overrides) -> Result<RunConfig> {
        let mut raw = match config {
            Some(path) => Raw::parse_file(path)?,
            None => Raw { entries: Vec::new() },
        };
        if let Some(v) = &ov.mode {
            raw.set("mode", v.clone());
        }
        if let Some(v) = ov.seed {
            raw.set("seed", v.to_string());
        }
        if let Some(v) = ov.eta {
            raw.set("eta", v.to_string());
        }
        if let Some(v) = ov.lambda1 {
            raw.set("lambda1", v.to_string());
        }
        if let Some(v) = ov.fd_step {
            raw.set("fd_step", v.to_string());
        }
        if let Some(v) = ov.gamma {
            raw.set("gamma", v.to_string());
        }
        if let Some(v) = &ov.phi_grid {
            raw.set("phi_grid", v.clone());
        }
        if let Some(v) = &ov.out {
            raw.set("out", v.display().to_string());
        }
        if let Some(v) = ov.epochs {
            raw.set("epochs", v.to_string());
        }
        if let Some(v) = ov.batch_size {
            raw.set("batch_size", v.to_string());
        }
        raw.check_keys()?;

        let mode: Option<Mode> = match raw.get("mode") {
            Some(m) => Some(m.parse()?),
            None => None,
        };

        let mut cfg = TrainConfig::default();
        if let Some(v) = raw.get("eta") {
            cfg.eta = parse_as("eta", v, "a number")?;
        }
        if let Some(v) = raw.get("lambda0") {
            cfg.lambda0 = parse_as("lambda0", v, "a number")?;
        }
        if let Some(v) = raw.get("seed") {
            cfg.seed = parse_as("seed", v, "an integer")?;
        }
        if let Some(v) = raw.get("batch_size") {
            cfg.batch_size = parse_as("batch_size", v, "a count")?;
        }
        if let Some(v) = raw.get("epochs") {
            cfg.epochs = parse_as("epochs", v, "a count")?;
        }

        if cmd == Command::Train {
            let mode = mode
                .ok_or_else(|| Error::Config("key 'mode' is required for train".to_string()))?;
            let why = format!("for mode {mode}");

            if let Some(kind) = mode.datagrad_kind() {
                cfg.reg_kind = kind;
                cfg.lambda1 = parse_as("lambda1", require(&raw, "lambda1", &why)?, "a number")?;
                cfg.fd_step = parse_as("fd_step", require(&raw, "fd_step", &why)?, "a number")?;
            } else {
                forbid(&raw, "lambda1", mode, "dgl1, dgl2, mt_dgl1, mt_dgl2")?;
                forbid(&raw, "fd_step", mode, "dgl1, dgl2, mt_dgl1, mt_dgl2")?;
            }

            if mode.is_multitask() {
                cfg.gamma = parse_as("gamma", require(&raw, "gamma", &why)?, "a number")?;
            } else {
                forbid(&raw, "gamma", mode, "mt, mt_dgl1, mt_dgl2")?;
                forbid(&raw, "aux_classes", mode, "mt, mt_dgl1, mt_dgl2")?;
            }

            if let Some(kind) = mode.weight_penalty_kind() {
                let coeff =
                    parse_as("weight_penalty", require(&raw, "weight_penalty", &why)?, "a number")?;
                cfg.weight_penalty = Some(WeightPenalty { kind, coeff });
            } else {
                forbid(&raw, "weight_penalty", mode, "l1, l2")?;
            }
        }

        let layers = match raw.get("layers") {
            Some(v) => {
                let layers: Vec<usize> = parse_list("layers", v, "a layer width")?;
                if layers.len() < 2 {
                    return Err(Error::Config(
                        "key 'layers' needs at least an input and an output width".to_string(),
                    ));
                }
                layers
            }
            None => vec![784, 784, 784, 784, 10],
        };

        let phi_grid = match raw.get("phi_grid") {
            Some(v) => parse_list("phi_grid", v, "a number")?,
            None => DEFAULT_PHI_GRID.to_vec(),
        };

        let path_of = |key: &str| raw.get(key).map(PathBuf::from);
        let need_path = |key: &str, why: &str| -> Result<PathBuf> {
            Ok(PathBuf::from(require(&raw, key, why)?))
        };

        let (train_images, train_labels) = if cmd == Command::Train {
            (
                Some(need_path("train_images", "for train")?),
                Some(need_path("train_labels", "for train")?),
            )
        } else {
            (path_of("train_images"), path_of("train_labels"))
        };
        let (test_images, test_labels) = if cmd == Command::Train {
            (path_of("test_images"), path_of("test_labels"))
        } else {
            (
                Some(need_path("test_images", "for attack and sweep")?),
                Some(need_path("test_labels", "for attack and sweep")?),
            )
        };

        let run = RunConfig {
            mode,
            train_images,
            train_labels,
            test_images,
            test_labels,
            layers,
            validation_count: match raw.get("validation_count") {
                Some(v) => parse_as("validation_count", v, "a count")?,
                None => 10_000,
            },
            shuffle_seed: match raw.get("shuffle_seed") {
                Some(v) => parse_as("shuffle_seed", v, "an integer")?,
                None => 1,
            },
            aux_classes: match raw.get("aux_classes") {
                Some(v) => parse_as("aux_classes", v, "a count")?,
                None => 5,
            },
            train: cfg,
            phi_grid,
            attack_kind: match raw.get("attack_kind") {
                Some(v) => v.parse()?,
                None => RegularizerKind::L1,
            },
            out: PathBuf::from(require(&raw, "out", "(output directory)")?),
        };

        if cmd == Command::Train {
            run.train.validate()?;
        }
        Ok(run)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_cfg(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("run.cfg");
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    const BASE: &str = "train_images = ti\ntrain_labels = tl\nout = o\neta = 0.1\n";

    #[test]
    fn parses_comments_defaults_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_cfg(
            dir.path(),
            &format!("# a comment\nmode = rect # trailing comment\n{BASE}epochs = 5\n"),
        );
        let ov = Overrides { epochs: Some(2), seed: Some(9), ..Overrides::default() };
        let run = RunConfig::load(Command::Train, Some(&p), &ov).unwrap();
        assert_eq!(run.mode, Some(Mode::Rect));
        assert_eq!(run.train.epochs, 2);
        assert_eq!(run.train.seed, 9);
        assert_eq!(run.layers, vec![784, 784, 784, 784, 10]);
        assert_eq!(run.validation_count, 10_000);
        assert_eq!(run.phi_grid, DEFAULT_PHI_GRID.to_vec());
    }

    #[test]
    fn missing_required_field_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_cfg(dir.path(), &format!("mode = dgl1\n{BASE}fd_step = 0.05\n"));
        let err = RunConfig::load(Command::Train, Some(&p), &Overrides::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("lambda1"), "{err}");

        let p = write_cfg(dir.path(), &format!("mode = mt\n{BASE}"));
        let err = RunConfig::load(Command::Train, Some(&p), &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");

        let p = write_cfg(dir.path(), &format!("mode = l1\n{BASE}"));
        let err = RunConfig::load(Command::Train, Some(&p), &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("weight_penalty"), "{err}");
    }

    #[test]
    fn keys_foreign_to_the_mode_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_cfg(dir.path(), &format!("mode = rect\n{BASE}lambda1 = 0.01\n"));
        let err = RunConfig::load(Command::Train, Some(&p), &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("lambda1"), "{err}");
        assert!(err.to_string().contains("does not use"), "{err}");
    }

    #[test]
    fn unknown_keys_duplicates_and_bad_numbers_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        for body in [
            format!("mode = rect\n{BASE}typo_key = 1\n"),
            format!("mode = rect\n{BASE}seed = 1\nseed = 2\n"),
            format!("mode = rect\n{BASE}epochs = soon\n"),
            format!("mode = wrong\n{BASE}"),
            "mode = rect\njust a line\n".to_string(),
        ] {
            let p = write_cfg(dir.path(), &body);
            let err =
                RunConfig::load(Command::Train, Some(&p), &Overrides::default()).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{body:?} -> {err}");
        }
    }

    #[test]
    fn attack_and_sweep_need_test_paths_not_mode() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_cfg(dir.path(), "test_images = x\ntest_labels = y\nout = o\n");
        let run = RunConfig::load(Command::Sweep, Some(&p), &Overrides::default()).unwrap();
        assert_eq!(run.mode, None);
        assert_eq!(run.test_images.as_deref(), Some(Path::new("x")));

        let p = write_cfg(dir.path(), "out = o\n");
        let err = RunConfig::load(Command::Attack, Some(&p), &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("test_images"), "{err}");
    }

    #[test]
    fn phi_grid_and_layers_parse_as_lists() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_cfg(
            dir.path(),
            "test_images = x\ntest_labels = y\nout = o\nphi_grid = 0, 0.05, 0.1\nlayers = 16, 8, 3\n",
        );
        let run = RunConfig::load(Command::Attack, Some(&p), &Overrides::default()).unwrap();
        assert_eq!(run.phi_grid, vec![0.0, 0.05, 0.1]);
        assert_eq!(run.layers, vec![16, 8, 3]);
    }
}

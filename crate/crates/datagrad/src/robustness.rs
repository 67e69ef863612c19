//! Adversarial evaluation: one model (the attacker) generates perturbed
//! test sets from its own input gradients, another (the defender) is
//! scored on them. Sweeping attack magnitudes over a defender/attacker
//! cross product yields the accuracy tables the training methods are
//! judged by.
//!
//! Attack construction mirrors training-time perturbations exactly:
//! y = immediate_gradient(kind, dL/dd) at the true label, d̂ = d + φ·y,
//! no clipping. φ = 0 therefore returns the test set untouched.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::multitask::{digit_accuracy, digit_data_gradients, mt_forward_batch, MultiTaskParams};
use crate::network::{backward_batch, forward_batch, NetworkParams};
use crate::regularizer::{immediate_gradient_in_place, RegularizerKind};
use crate::tensor::{Matrix, Vector};
use crate::train::accuracy;

/// Which task loss drives a multi-task attacker's gradient. Single-task
/// attackers ignore this; reported tables use the digit task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackHead {
    Digit,
    Rotation,
}

/// Attack family and magnitude grid. The attacker itself is chosen per
/// sweep pair rather than fixed here, so one config covers a whole matrix.
#[derive(Debug, Clone)]
pub struct AttackConfig {
    pub kind: RegularizerKind,
    pub phi_grid: Vec<f64>,
    pub use_head: AttackHead,
}

/// The magnitudes reported in the accuracy tables.
pub const DEFAULT_PHI_GRID: [f64; 5] = [0.0, 0.005, 0.01, 0.05, 0.1];

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            kind: RegularizerKind::L1,
            phi_grid: DEFAULT_PHI_GRID.to_vec(),
            use_head: AttackHead::Digit,
        }
    }
}

impl AttackConfig {
    /// The grid must be nonnegative, strictly ascending, and anchored at 0
    /// so every report carries its clean baseline.
    pub fn validate(&self) -> Result<()> {
        if self.phi_grid.is_empty() {
            return Err(Error::Config("phi grid must not be empty".to_string()));
        }
        if self.phi_grid[0] != 0.0 {
            return Err(Error::Config("phi grid must start at 0".to_string()));
        }
        for w in self.phi_grid.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config(format!(
                    "phi grid must be strictly ascending, got {} after {}",
                    w[1], w[0]
                )));
            }
        }
        if self.phi_grid.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("phi grid entries must be finite".to_string()));
        }
        Ok(())
    }
}

/// A trained model of either architecture, usable as attacker or defender.
#[derive(Debug, Clone)]
pub enum Model {
    Single(NetworkParams),
    Multi(MultiTaskParams),
}

impl Model {
    pub fn input_dim(&self) -> usize {
        match self {
            Model::Single(p) => p.input_dim(),
            Model::Multi(mt) => mt.input_dim(),
        }
    }

    /// Loads either checkpoint flavor, dispatching on the version header.
    pub fn from_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
        let path = path.as_ref();
        match crate::checkpoint::peek_version(path)? {
            crate::checkpoint::VERSION_SINGLE => {
                Ok(Model::Single(crate::checkpoint::load_network(path)?))
            }
            crate::checkpoint::VERSION_MULTITASK => {
                Ok(Model::Multi(crate::checkpoint::load_multitask(path)?))
            }
            v => Err(Error::format(path, format!("unknown checkpoint version {v}"))),
        }
    }

    /// Per-sample input gradients of the chosen loss at the true labels.
    /// `digits` indexes the digit head; `auxes` is consulted only for
    /// rotation-driven attacks on multi-task models.
    fn data_gradients(
        &self,
        images: &Matrix,
        digits: &[usize],
        auxes: Option<&[usize]>,
        use_head: AttackHead,
    ) -> Result<Matrix> {
        match self {
            Model::Single(p) => {
                let trace = forward_batch(p, images)?;
                let grads = backward_batch(p, &trace, digits, true)?;
                Ok(grads.data_gradients.expect("requested data gradients"))
            }
            Model::Multi(mt) => {
                let trace = mt_forward_batch(mt, images)?;
                match use_head {
                    AttackHead::Digit => digit_data_gradients(mt, &trace, digits),
                    AttackHead::Rotation => {
                        let auxes = auxes.ok_or_else(|| {
                            Error::InvalidInput(
                                "rotation-driven attack needs auxiliary labels".to_string(),
                            )
                        })?;
                        crate::multitask::rotation_data_gradients(mt, &trace, auxes)
                    }
                }
            }
        }
    }
}

/// A model plus the identifier and provenance lines it carries into
/// reports.
#[derive(Debug, Clone)]
pub struct NamedModel {
    pub name: String,
    pub model: Model,
    /// key = value pairs recorded in the report sidecar (seeds, training
    /// mode, data hashes). Order is preserved verbatim.
    pub provenance: Vec<(String, String)>,
}

impl NamedModel {
    pub fn new(name: impl Into<String>, model: Model) -> Self {
        NamedModel { name: name.into(), model, provenance: Vec::new() }
    }
}

const EVAL_CHUNK: usize = 500;

/// Perturbs every test image along the attacker's own loss gradient at
/// the true label: d̂ = d + φ·immediate_gradient(kind, dL/dd). Labels are
/// copied unchanged; pixels are not clipped. φ = 0 returns a bit-identical
/// copy.
pub fn generate_adversarial_testset(
    attacker: &Model,
    testset: &Dataset,
    cfg: &AttackConfig,
    phi: f64,
) -> Result<Dataset> {
    if testset.is_empty() {
        return Err(Error::InvalidInput("cannot attack an empty test set".to_string()));
    }
    let input_dim = attacker.input_dim();
    if let Some((i, img)) =
        testset.images.iter().enumerate().find(|(_, im)| im.len() != input_dim)
    {
        return Err(Error::shape(
            "generate_adversarial_testset",
            format!("image {i} has {} pixels, attacker expects {input_dim}", img.len()),
        ));
    }
    if !(phi.is_finite() && phi >= 0.0) {
        return Err(Error::InvalidInput(format!("phi must be finite and >= 0, got {phi}")));
    }
    if phi == 0.0 {
        return Ok(testset.clone());
    }
    if cfg.use_head == AttackHead::Rotation && testset.aux_labels.is_none() {
        return Err(Error::InvalidInput(
            "rotation-driven attack needs auxiliary labels".to_string(),
        ));
    }

    let mut images = Vec::with_capacity(testset.len());
    let mut start = 0usize;
    while start < testset.len() {
        let end = (start + EVAL_CHUNK).min(testset.len());
        let mut chunk = Matrix::zeros(end - start, input_dim);
        for (row, img) in testset.images[start..end].iter().enumerate() {
            chunk.row_mut(row).copy_from_slice(img.as_slice());
        }
        let digits: Vec<usize> =
            testset.labels[start..end].iter().map(|&l| l as usize).collect();
        let auxes: Option<Vec<usize>> = testset
            .aux_labels
            .as_ref()
            .map(|a| a[start..end].iter().map(|&l| l as usize).collect());
        let mut y = attacker.data_gradients(&chunk, &digits, auxes.as_deref(), cfg.use_head)?;
        immediate_gradient_in_place(cfg.kind, y.as_mut_slice());
        for row in 0..chunk.rows() {
            let d = chunk.row(row);
            let yr = y.row(row);
            let perturbed: Vec<f64> =
                d.iter().zip(yr).map(|(&dv, &yv)| dv + phi * yv).collect();
            images.push(Vector::from_vec(perturbed));
        }
        start = end;
    }
    Ok(Dataset {
        images,
        labels: testset.labels.clone(),
        aux_labels: testset.aux_labels.clone(),
    })
}

/// Digit classification accuracy of the defender, in percent.
pub fn evaluate_accuracy(defender: &Model, testset: &Dataset) -> Result<f64> {
    match defender {
        Model::Single(p) => accuracy(p, testset),
        Model::Multi(mt) => digit_accuracy(mt, testset),
    }
}

/// One grid point: the accuracy is stored already rounded to the two
/// decimals the tables print, or None when that cell failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub phi: f64,
    pub accuracy_pct: Option<f64>,
}

fn round2(v: f64) -> f64 {
    format!("{v:.2}").parse().expect("fixed-point formatting is parseable")
}

/// Accuracy of one defender under one attacker across the φ grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    pub defender: String,
    pub attacker: String,
    pub rows: Vec<ReportRow>,
    /// Sidecar lines: attack settings and both models' provenance.
    pub metadata: Vec<(String, String)>,
}

fn grid_string(grid: &[f64]) -> String {
    grid.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",")
}

/// Full attacker × defender matrix. Each adversarial set is generated
/// once per (attacker, φ) and scored by every defender; a failing cell is
/// recorded as failed without aborting the rest of the sweep. Reports are
/// ordered defender-major to match the table layout.
pub fn sweep(
    defenders: &[NamedModel],
    attackers: &[NamedModel],
    cfg: &AttackConfig,
    testset: &Dataset,
) -> Result<Vec<RobustnessReport>> {
    cfg.validate()?;
    if defenders.is_empty() || attackers.is_empty() {
        return Err(Error::InvalidInput(
            "sweep needs at least one defender and one attacker".to_string(),
        ));
    }

    // cells[(defender, attacker)] accumulates rows in grid order.
    let mut cells: HashMap<(usize, usize), Vec<ReportRow>> = HashMap::new();
    for (ai, attacker) in attackers.iter().enumerate() {
        for &phi in &cfg.phi_grid {
            let attacked = generate_adversarial_testset(&attacker.model, testset, cfg, phi);
            for (di, defender) in defenders.iter().enumerate() {
                let accuracy_pct = match &attacked {
                    Ok(set) => evaluate_accuracy(&defender.model, set).ok().map(round2),
                    Err(_) => None,
                };
                cells.entry((di, ai)).or_default().push(ReportRow { phi, accuracy_pct });
            }
        }
    }

    let mut reports = Vec::with_capacity(defenders.len() * attackers.len());
    for (di, defender) in defenders.iter().enumerate() {
        for (ai, attacker) in attackers.iter().enumerate() {
            let mut metadata = vec![
                ("attack.kind".to_string(), cfg.kind.to_string()),
                ("attack.phi_grid".to_string(), grid_string(&cfg.phi_grid)),
                (
                    "attack.head".to_string(),
                    match cfg.use_head {
                        AttackHead::Digit => "digit".to_string(),
                        AttackHead::Rotation => "rotation".to_string(),
                    },
                ),
            ];
            for (k, v) in &defender.provenance {
                metadata.push((format!("defender.{k}"), v.clone()));
            }
            for (k, v) in &attacker.provenance {
                metadata.push((format!("attacker.{k}"), v.clone()));
            }
            reports.push(RobustnessReport {
                defender: defender.name.clone(),
                attacker: attacker.name.clone(),
                rows: cells.remove(&(di, ai)).expect("every pair visited"),
                metadata,
            });
        }
    }
    Ok(reports)
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.contains(',') || name.contains('\n') || name.contains(']') {
        return Err(Error::InvalidInput(format!(
            "model name {name:?} must be non-empty and free of commas, newlines, and ']'"
        )));
    }
    Ok(())
}

/// Writes the accuracy table as CSV and a `.meta` sidecar holding every
/// report's metadata. Both files are bytewise deterministic for identical
/// inputs: no timestamps, no map iteration.
pub fn write_report(reports: &[RobustnessReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut csv = String::from("defender,attacker,phi,accuracy_pct\n");
    let mut meta = String::new();
    for r in reports {
        check_name(&r.defender)?;
        check_name(&r.attacker)?;
        for row in &r.rows {
            match row.accuracy_pct {
                Some(a) => {
                    let _ = writeln!(csv, "{},{},{},{:.2}", r.defender, r.attacker, row.phi, a);
                }
                None => {
                    let _ = writeln!(csv, "{},{},{},failed", r.defender, r.attacker, row.phi);
                }
            }
        }
        let _ = writeln!(meta, "[defender={} attacker={}]", r.defender, r.attacker);
        for (k, v) in &r.metadata {
            let _ = writeln!(meta, "{k} = {v}");
        }
        meta.push('\n');
    }
    fs::write(path, csv).map_err(|e| Error::io(path, e))?;
    let meta_path = sidecar_path(path);
    fs::write(&meta_path, meta).map_err(|e| Error::io(meta_path.clone(), e))?;
    Ok(())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".meta");
    std::path::PathBuf::from(os)
}

/// Reads back a report pair written by `write_report`. Returns the
/// reports in file order; `parse(write(x)) == x`.
pub fn parse_report(path: impl AsRef<Path>) -> Result<Vec<RobustnessReport>> {
    let path = path.as_ref();
    let csv = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = csv.lines();
    match lines.next() {
        Some("defender,attacker,phi,accuracy_pct") => {}
        other => {
            return Err(Error::format(
                path,
                format!("bad report header {:?}", other.unwrap_or_default()),
            ))
        }
    }

    let mut reports: Vec<RobustnessReport> = Vec::new();
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::format(
                path,
                format!("report line {}: expected 4 fields, got {}", n + 2, fields.len()),
            ));
        }
        let parse_err = |what: &str| {
            Error::format(
                path,
                format!("report line {}: unreadable {what} {:?}", n + 2, fields),
            )
        };
        let phi: f64 = fields[2].parse().map_err(|_| parse_err("phi"))?;
        let accuracy_pct = match fields[3] {
            "failed" => None,
            s => Some(s.parse().map_err(|_| parse_err("accuracy"))?),
        };
        let row = ReportRow { phi, accuracy_pct };
        match reports.last_mut() {
            Some(r) if r.defender == fields[0] && r.attacker == fields[1] => r.rows.push(row),
            _ => reports.push(RobustnessReport {
                defender: fields[0].to_string(),
                attacker: fields[1].to_string(),
                rows: vec![row],
                metadata: Vec::new(),
            }),
        }
    }

    let meta_path = sidecar_path(path);
    let meta =
        fs::read_to_string(&meta_path).map_err(|e| Error::io(meta_path.clone(), e))?;
    let mut current: Option<usize> = None;
    for line in meta.lines() {
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix("[defender=").and_then(|s| s.strip_suffix(']')) {
            let (d, a) = header.split_once(" attacker=").ok_or_else(|| {
                Error::format(&meta_path, format!("bad sidecar section {line:?}"))
            })?;
            current = reports.iter().position(|r| r.defender == d && r.attacker == a);
            if current.is_none() {
                return Err(Error::format(
                    &meta_path,
                    format!("sidecar section {line:?} has no matching report rows"),
                ));
            }
        } else if let Some(idx) = current {
            let (k, v) = line.split_once(" = ").ok_or_else(|| {
                Error::format(&meta_path, format!("bad sidecar line {line:?}"))
            })?;
            reports[idx].metadata.push((k.to_string(), v.to_string()));
        } else {
            return Err(Error::format(
                &meta_path,
                format!("sidecar line {line:?} outside any section"),
            ));
        }
    }
    Ok(reports)
}

//! The three pipeline commands. Each run ends with a metadata sidecar
//! holding every seed, hyperparameter, and input-file digest needed to
//! reproduce it; none of the emitted files contain timestamps, so equal
//! runs produce equal bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use datagrad::checkpoint;
use datagrad::data::{
    load_idx, load_idx_f64, normalize, peek_image_dims, rotation_augment, split, write_idx_f64,
    write_idx_labels, Dataset, SplitSpec, IMAGE_F64_MAGIC,
};
use datagrad::error::{Error, Result};
use datagrad::multitask::train_multitask;
use datagrad::robustness::{
    generate_adversarial_testset, sweep, write_report, AttackConfig, AttackHead, Model,
    NamedModel,
};
use datagrad::train::{train_network, EpochStats};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    Ok(hex)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn prepare_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out)
        .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", out.display())))
}

/// Loads an image/label pair, accepting either the raw u8 test files
/// (normalized here) or an already-generated f64 adversarial set.
fn load_eval_set(images: &Path, labels: &Path) -> Result<Dataset> {
    let (magic, _, _, _) = peek_image_dims(images)?;
    if magic == IMAGE_F64_MAGIC {
        load_idx_f64(images, labels)
    } else {
        normalize(load_idx(images, labels)?)
    }
}

fn sizes_string(sizes: &[usize]) -> String {
    sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

fn epoch_line(s: &EpochStats) -> String {
    format!(
        "epoch {:>3}: train acc {:6.2}%  loss {:.4}  val acc {:6.2}%",
        s.epoch, s.train_accuracy, s.train_loss, s.validation_accuracy
    )
}

/// Trains the configured mode, prints one line per epoch, and writes
/// checkpoint, log, and sidecar under the output directory.
pub fn cmd_train(run: &RunConfig) -> Result<()> {
    let mode = run.mode.expect("config resolution requires mode for train");
    let cfg = &run.train;
    let train_images = run.train_images.as_ref().expect("resolved");
    let train_labels = run.train_labels.as_ref().expect("resolved");

    let images_sha = sha256_hex(train_images)?;
    let labels_sha = sha256_hex(train_labels)?;

    let raw = load_idx(train_images, train_labels)?;
    let ds = normalize(raw)?;
    let (mut train_set, validation) = split(
        ds,
        SplitSpec { validation_count: run.validation_count, shuffle_seed: run.shuffle_seed },
    )?;
    if mode.is_multitask() {
        train_set = rotation_augment(&train_set)?;
    }

    let mut log = String::new();
    let mut on_epoch = |s: &EpochStats| {
        let line = epoch_line(s);
        println!("{line}");
        log.push_str(&line);
        log.push('\n');
    };

    enum Trained {
        Single(datagrad::train::TrainedModel),
        Multi(datagrad::multitask::TrainedMultiTask),
    }

    let trained = if mode.is_multitask() {
        let shared = &run.layers[..run.layers.len() - 1];
        let n_digit = run.layers[run.layers.len() - 1];
        Trained::Multi(train_multitask(
            &train_set,
            &validation,
            shared,
            n_digit,
            run.aux_classes,
            cfg,
            &mut on_epoch,
        )?)
    } else {
        Trained::Single(train_network(&train_set, &validation, &run.layers, cfg, &mut on_epoch)?)
    };

    prepare_out_dir(&run.out)?;
    let ckpt_path = run.out.join(format!("{mode}.ckpt"));
    let (best_epoch, best_acc) = match &trained {
        Trained::Single(t) => {
            checkpoint::save_network(&t.params, &ckpt_path)?;
            (t.best_epoch, t.best_validation_accuracy)
        }
        Trained::Multi(t) => {
            checkpoint::save_multitask(&t.mt, &ckpt_path)?;
            (t.best_epoch, t.best_validation_accuracy)
        }
    };

    let mut meta = String::new();
    let _ = writeln!(meta, "mode = {mode}");
    let _ = writeln!(meta, "layers = {}", sizes_string(&run.layers));
    if mode.is_multitask() {
        let _ = writeln!(meta, "aux_classes = {}", run.aux_classes);
    }
    let _ = writeln!(meta, "seed = {}", cfg.seed);
    let _ = writeln!(meta, "shuffle_seed = {}", run.shuffle_seed);
    let _ = writeln!(meta, "validation_count = {}", run.validation_count);
    let _ = writeln!(meta, "eta = {}", cfg.eta);
    let _ = writeln!(meta, "lambda0 = {}", cfg.lambda0);
    if mode.datagrad_kind().is_some() {
        let _ = writeln!(meta, "lambda1 = {}", cfg.lambda1);
        let _ = writeln!(meta, "fd_step = {}", cfg.fd_step);
        let _ = writeln!(meta, "reg_kind = {}", cfg.reg_kind);
    }
    if mode.is_multitask() {
        let _ = writeln!(meta, "gamma = {}", cfg.gamma);
    }
    if let Some(wp) = cfg.weight_penalty {
        let _ = writeln!(meta, "weight_penalty = {} {}", wp.kind, wp.coeff);
    }
    let _ = writeln!(meta, "batch_size = {}", cfg.batch_size);
    let _ = writeln!(meta, "epochs = {}", cfg.epochs);
    let _ = writeln!(meta, "train_images = {}", train_images.display());
    let _ = writeln!(meta, "train_images_sha256 = {images_sha}");
    let _ = writeln!(meta, "train_labels = {}", train_labels.display());
    let _ = writeln!(meta, "train_labels_sha256 = {labels_sha}");
    let _ = writeln!(meta, "best_epoch = {best_epoch}");
    let _ = writeln!(meta, "best_validation_accuracy = {best_acc:.2}");
    write_text(&sidecar(&ckpt_path), &meta)?;

    let summary = format!("best epoch {best_epoch}, validation accuracy {best_acc:.2}%");
    log.push_str(&summary);
    log.push('\n');
    write_text(&run.out.join(format!("{mode}.log")), &log)?;

    println!("saved {} ({summary})", ckpt_path.display());
    Ok(())
}

fn sidecar(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".meta");
    PathBuf::from(os)
}

fn model_stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(|s| s.to_string())
        .ok_or_else(|| {
            Error::Config(format!("cannot derive a model name from {}", path.display()))
        })
}

/// Generates one adversarial test set from a trained attacker and writes
/// it as an f64 IDX image file plus labels and sidecar.
pub fn cmd_attack(run: &RunConfig, attacker_ckpt: &Path, phi: f64) -> Result<()> {
    let test_images = run.test_images.as_ref().expect("resolved");
    let test_labels = run.test_labels.as_ref().expect("resolved");
    let (_, _, rows, cols) = peek_image_dims(test_images)?;
    let testset = load_eval_set(test_images, test_labels)?;
    let model = Model::from_checkpoint(attacker_ckpt)?;
    let cfg = AttackConfig {
        kind: run.attack_kind,
        phi_grid: run.phi_grid.clone(),
        use_head: AttackHead::Digit,
    };
    let attacked = generate_adversarial_testset(&model, &testset, &cfg, phi)?;

    prepare_out_dir(&run.out)?;
    let stem = model_stem(attacker_ckpt)?;
    let base = format!("{stem}_phi{phi}");
    let images_out = run.out.join(format!("{base}_images.idx"));
    let labels_out = run.out.join(format!("{base}_labels.idx"));
    write_idx_f64(&images_out, &attacked.images, rows, cols)?;
    write_idx_labels(&labels_out, &attacked.labels)?;

    let mut meta = String::new();
    let _ = writeln!(meta, "attacker = {}", attacker_ckpt.display());
    let _ = writeln!(meta, "attacker_sha256 = {}", sha256_hex(attacker_ckpt)?);
    let _ = writeln!(meta, "attack_kind = {}", run.attack_kind);
    let _ = writeln!(meta, "phi = {phi}");
    let _ = writeln!(meta, "test_images = {}", test_images.display());
    let _ = writeln!(meta, "test_images_sha256 = {}", sha256_hex(test_images)?);
    let _ = writeln!(meta, "test_labels = {}", test_labels.display());
    let _ = writeln!(meta, "test_labels_sha256 = {}", sha256_hex(test_labels)?);
    let _ = writeln!(meta, "samples = {}", attacked.len());
    let _ = writeln!(meta, "images_out = {}", images_out.display());
    let _ = writeln!(meta, "labels_out = {}", labels_out.display());
    write_text(&run.out.join(format!("{base}.meta")), &meta)?;

    println!(
        "wrote {} and {} ({} samples, phi = {phi})",
        images_out.display(),
        labels_out.display(),
        attacked.len()
    );
    Ok(())
}

fn load_models(paths: &[PathBuf]) -> Result<Vec<NamedModel>> {
    let mut models = Vec::with_capacity(paths.len());
    for path in paths {
        let name = model_stem(path)?;
        if models.iter().any(|m: &NamedModel| m.name == name) {
            return Err(Error::Config(format!(
                "two checkpoints resolve to the model name '{name}'; rename one"
            )));
        }
        let model = Model::from_checkpoint(path)?;
        let arch = match &model {
            Model::Single(p) => sizes_string(&p.layer_sizes),
            Model::Multi(mt) => format!(
                "{}+{}/{}",
                sizes_string(&mt.shared.layer_sizes),
                mt.head0.classes(),
                mt.head1.classes()
            ),
        };
        let mut named = NamedModel::new(name, model);
        named.provenance.push(("checkpoint".to_string(), path.display().to_string()));
        named.provenance.push(("checkpoint_sha256".to_string(), sha256_hex(path)?));
        named.provenance.push(("architecture".to_string(), arch));
        models.push(named);
    }
    Ok(models)
}

/// Runs the defender x attacker accuracy matrix over the φ grid and
/// writes `sweep.csv` (plus its sidecar) under the output directory.
pub fn cmd_sweep(run: &RunConfig, defenders: &[PathBuf], attackers: &[PathBuf]) -> Result<()> {
    if defenders.is_empty() || attackers.is_empty() {
        return Err(Error::Config(
            "sweep needs at least one --defender and one --attacker checkpoint".to_string(),
        ));
    }
    let cfg = AttackConfig {
        kind: run.attack_kind,
        phi_grid: run.phi_grid.clone(),
        use_head: AttackHead::Digit,
    };
    cfg.validate()?;

    let test_images = run.test_images.as_ref().expect("resolved");
    let test_labels = run.test_labels.as_ref().expect("resolved");
    let testset = load_eval_set(test_images, test_labels)?;
    let mut defenders = load_models(defenders)?;
    let attackers = load_models(attackers)?;
    let test_prov = [
        ("test_images".to_string(), test_images.display().to_string()),
        ("test_images_sha256".to_string(), sha256_hex(test_images)?),
        ("test_labels".to_string(), test_labels.display().to_string()),
        ("test_labels_sha256".to_string(), sha256_hex(test_labels)?),
    ];
    for d in &mut defenders {
        d.provenance.extend(test_prov.iter().cloned());
    }

    let reports = sweep(&defenders, &attackers, &cfg, &testset)?;
    prepare_out_dir(&run.out)?;
    let csv_path = run.out.join("sweep.csv");
    write_report(&reports, &csv_path)?;
    println!(
        "wrote {} ({} defender/attacker pairs x {} phi values)",
        csv_path.display(),
        reports.len(),
        run.phi_grid.len()
    );
    Ok(())
}

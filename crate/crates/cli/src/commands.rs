use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sspain_core::attention::{partition_aus_with, patch_boxes, render_attention_map, AuPartition, Thresholds};
use sspain_core::checkpoint;
use sspain_core::data::{load_dataset, save_dataset, split_loso, Dataset, Frame};
use sspain_core::evaluation::{cross_validate, evaluate, saliency_concentration, MetricsReport, ReportEcho};
use sspain_core::network::Model;
use sspain_core::ops;
use sspain_core::pgm;
use sspain_core::synth::{generate_synthetic, SynthConfig};
use sspain_core::training::{mine_hard_triplets, train};
use sspain_core::verify;

use crate::config::RunConfig;

/// Written next to a generated dataset so that its relevant AUs survive
/// the round trip through disk.
pub const SYNTH_FILE: &str = "synth.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "train.log.jsonl";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_TXT: &str = "metrics.txt";
pub const MINING_BATCHES: usize = 200;

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

pub fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.data {
        None => Ok(generate_synthetic(&cfg.synth)?),
        Some(root) => {
            let mut ds = load_dataset(root, &cfg.rescale).with_context(|| format!("loading {}", root.display()))?;
            let meta = root.join(SYNTH_FILE);
            if meta.is_file() {
                let synth: SynthConfig = serde_json::from_str(&fs::read_to_string(&meta)?)
                    .with_context(|| format!("reading {}", meta.display()))?;
                ds.relevant_au_ids = Some(synth.relevant_au_ids);
            }
            if ds.is_empty() {
                bail!("dataset at {} has no frames", root.display());
            }
            Ok(ds)
        }
    }
}

/// Train split and test split for an optional held-out subject.
fn split(ds: Dataset, subject: Option<&str>) -> Result<(Dataset, Dataset)> {
    match subject {
        Some(s) => Ok(split_loso(&ds, s)?),
        None => Ok((ds.clone(), ds)),
    }
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let root = cfg.data.clone().unwrap_or_else(|| cfg.out.join("dataset"));
    let ds = generate_synthetic(&cfg.synth)?;
    save_dataset(&ds, &root)?;
    write(&root.join(SYNTH_FILE), serde_json::to_string_pretty(&cfg.synth)? + "\n")?;
    println!(
        "wrote {} frames of {} subjects to {}",
        ds.len(),
        ds.subjects.len(),
        root.display()
    );
    Ok(())
}

pub fn train_cmd(cfg: &RunConfig, subject: Option<&str>) -> Result<()> {
    let (train_ds, _) = split(load_data(cfg)?, subject)?;
    let out = train(&train_ds, &cfg.model, &cfg.train, cfg.variant)?;
    checkpoint::save(&out.model, &cfg.out.join(CHECKPOINT_FILE))?;
    write(&cfg.out.join(LOG_FILE), out.log_jsonl()?)?;
    println!(
        "trained {} on {} frames ({} log entries), checkpoint {}",
        cfg.variant,
        train_ds.len(),
        out.log.len(),
        cfg.out.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

fn echo(cfg: &RunConfig, model: &Model) -> ReportEcho {
    ReportEcho {
        variant: cfg.variant,
        seed: cfg.train.seed,
        alpha: cfg.train.alpha,
        beta: cfg.train.beta,
        sign_convention: cfg.train.sign_convention(),
        rescale_thresholds: cfg.rescale.thresholds.to_vec(),
        model: model.config.clone(),
        train: cfg.train.clone(),
    }
}

fn write_report(cfg: &RunConfig, report: &MetricsReport) -> Result<()> {
    write(&cfg.out.join(METRICS_JSON), report.to_json()? + "\n")?;
    let table = report.to_table();
    write(&cfg.out.join(METRICS_TXT), &table)?;
    print!("{table}");
    Ok(())
}

pub fn eval(cfg: &RunConfig, subject: Option<&str>, checkpoint: Option<&Path>, loso: bool) -> Result<()> {
    let ds = load_data(cfg)?;
    if loso {
        let cv = cross_validate(&ds, &cfg.model, &cfg.train, cfg.variant, &cfg.rescale)?;
        return write_report(cfg, &cv.report);
    }
    let path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| cfg.out.join(CHECKPOINT_FILE));
    let model = checkpoint::load(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let (_, test) = split(ds, subject)?;
    let results = evaluate(&model, &test)?;
    write_report(cfg, &MetricsReport::from_results(&results, echo(cfg, &model))?)
}

/// Frames named in the config, or the first frame of every level.
fn chosen_frames<'a>(cfg: &RunConfig, ds: &'a Dataset) -> Result<Vec<usize>> {
    if cfg.saliency.frames.is_empty() {
        let mut picked: Vec<usize> = (0..=5u8)
            .filter_map(|l| ds.frames.iter().position(|f| f.level == l))
            .collect();
        picked.sort_unstable();
        return Ok(picked);
    }
    cfg.saliency
        .frames
        .iter()
        .map(|id| {
            ds.frames
                .iter()
                .position(|f| &f.frame_id == id)
                .ok_or_else(|| anyhow!("saliency.frames: unknown frame {id}"))
        })
        .collect()
}

/// AU partition of each chosen frame as the anchor of its batch-hard
/// triplet over the whole dataset, mined with the model's features.
fn anchor_partitions(model: &Model, ds: &Dataset, anchors: &[usize], cfg: &RunConfig) -> Result<Vec<Option<AuPartition>>> {
    let units: Vec<Vec<f64>> = ds
        .frames
        .iter()
        .map(|f| Ok(ops::l2_normalize(&model.encode(&f.image)?).0))
        .collect::<Result<_>>()?;
    let levels: Vec<u8> = ds.frames.iter().map(|f| f.level).collect();
    let keys: Vec<usize> = (0..ds.len()).collect();
    let mined = mine_hard_triplets(&units, &levels, &keys)?;
    let per_au = cfg.train.thresholds(&ds.au_ids)?;
    let th = Thresholds {
        default: cfg.train.alpha,
        per_au: &per_au,
    };
    anchors
        .iter()
        .map(|&a| {
            let Some(t) = mined.iter().find(|t| t.anchor == a) else {
                return Ok(None);
            };
            let v = |i: usize| &ds.frames[i].au_values;
            Ok(Some(partition_aus_with(v(t.anchor), v(t.positive), v(t.negative), &th)?))
        })
        .collect()
}

pub fn saliency(cfg: &RunConfig, subject: Option<&str>, checkpoint: Option<&Path>) -> Result<()> {
    let path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| cfg.out.join(CHECKPOINT_FILE));
    let model = checkpoint::load(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let (_, ds) = split(load_data(cfg)?, subject)?;
    let picked = chosen_frames(cfg, &ds)?;
    let parts = anchor_partitions(&model, &ds, &picked, cfg)?;
    let sal_dir: PathBuf = cfg.out.join("saliency");
    let att_dir: PathBuf = cfg.out.join("attention");
    for (&i, part) in picked.iter().zip(&parts) {
        let f: &Frame = &ds.frames[i];
        let hw = f.image_hw();
        write(&sal_dir.join(format!("{}.pgm", f.frame_id)), pgm::encode(&model.saliency(&f.image)?)?)?;
        let boxes = patch_boxes(&f.landmarks, hw, cfg.train.patch_half)?;
        let part = part.clone().unwrap_or_default();
        if part.set_a.is_empty() {
            eprintln!("note: frame {} has no relevant AU in its triplet; attention map is empty", f.frame_id);
        }
        let att = render_attention_map(&part, &boxes, hw)?;
        write(&att_dir.join(format!("{}.pgm", f.frame_id)), pgm::encode(&att)?)?;
    }
    println!("wrote {} saliency and attention maps under {}", picked.len(), cfg.out.display());
    let relevant = cfg
        .saliency
        .relevant_au_ids
        .clone()
        .or_else(|| ds.relevant_au_ids.clone());
    if let Some(rel) = relevant {
        let idx: Vec<usize> = rel
            .iter()
            .map(|a| ds.au_index(*a).ok_or_else(|| anyhow!("relevant AU {a} is not in the dataset")))
            .collect::<Result<_>>()?;
        let frames: Vec<&Frame> = ds.frames.iter().collect();
        let c = saliency_concentration(&model, &frames, &idx, cfg.saliency.box_half)?;
        println!("saliency concentration over {} frames: {c:.4}", frames.len());
    }
    Ok(())
}

/// Returns whether every check passed.
pub fn gradcheck(cfg: &RunConfig) -> Result<bool> {
    let fx = verify::active_toy_fixture(cfg.train.seed)?;
    let mut ok = true;
    for e in verify::gradient_suite(&fx)? {
        println!(
            "{:<18} {} value {:.6} max rel err {:.3e} at {} ({} scalars, {} refined, {} one-sided)",
            e.name,
            if e.passed() { "PASS" } else { "FAIL" },
            e.value,
            e.report.max_relative_error,
            e.report.worst,
            e.report.checked,
            e.report.refined,
            e.report.one_sided
        );
        ok &= e.passed();
    }
    Ok(ok)
}

pub fn oracle(cfg: &RunConfig) -> Result<bool> {
    let emd = verify::emd_transport_oracle()?;
    println!(
        "emd    {} {} histogram pairs, max |error| {:.3e}",
        if emd.passed() { "PASS" } else { "FAIL" },
        emd.pairs,
        emd.max_abs_error
    );
    let mining = verify::mining_oracle(MINING_BATCHES, cfg.train.seed)?;
    match mining.first_mismatch {
        None => println!("mining PASS {} batches, {} triplets", mining.batches, mining.triplets),
        Some(b) => println!("mining FAIL first mismatch in batch {b}"),
    }
    Ok(emd.passed() && mining.passed())
}

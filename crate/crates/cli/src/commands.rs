use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use meta4::bertis::{split_corpus, train_bertis, BertisModel};
use meta4::data::{
    load_pose_dataset, load_schema_corpus, read_poses_csv, save_pose_dataset, save_schema_corpus,
    synth_gesture_dataset, synth_schema_corpus, write_poses_csv, SegmentSample,
};
use meta4::eval::{
    classification_report, condition_vectors, pose_metrics, run_condition, Condition, ProtocolReport, Split,
};
use meta4::model::{prepare_samples, train_meta4_prepared, Meta4Model, PreparedSample};
use meta4::pose::PoseSequence;
use meta4::render::render_svg;
use meta4::tensor::SeededRng;
use meta4::ImageSchemaLabel;
use serde::{Deserialize, Serialize};

use crate::config::{output_path, read_json, write, write_json, LoadedConfig};

pub fn synth_data(n: usize, speakers: usize, seed: u64, out: &Path) -> Result<()> {
    let out = output_path(out);
    let samples = synth_gesture_dataset(n, speakers, seed)?;
    save_pose_dataset(&out, &samples).with_context(|| format!("saving dataset to {}", out.display()))?;
    write(
        &out.join("generator.toml"),
        format!("n = {n}\nspeakers = {speakers}\nseed = {seed}\n"),
    )?;
    println!("wrote {} samples to {}", samples.len(), out.display());
    Ok(())
}

pub fn synth_corpus(n: usize, seed: u64, out: &Path) -> Result<()> {
    let out = output_path(out);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let corpus = synth_schema_corpus(n, seed);
    save_schema_corpus(&out, &corpus)?;
    println!("wrote {} labeled texts to {}", corpus.len(), out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct BertisMetrics {
    seed: u64,
    train: usize,
    val: usize,
    test: usize,
    best_epoch: usize,
    val_accuracy: f64,
    test_accuracy: f64,
    test_macro_f1: f64,
}

pub fn train_bertis_cmd(cfg: &LoadedConfig, corpus: Option<&Path>, out: &Path) -> Result<()> {
    let c = &cfg.config;
    c.validate()?;
    let corpus = corpus
        .or(c.corpus.as_deref())
        .ok_or_else(|| anyhow!("no corpus given; pass --corpus or set `corpus` in the config"))?;
    let data = load_schema_corpus(corpus)?;
    let split = split_corpus(&data, c.seed)?;
    let out = output_path(out);
    cfg.write_to(&out)?;
    let (model, history) = train_bertis(&split.train, &split.val, &c.bertis, c.seed)?;
    let mut pred = Vec::with_capacity(split.test.len());
    for s in &split.test {
        pred.push(model.classify(&s.text)?.1);
    }
    let gt: Vec<ImageSchemaLabel> = split.test.iter().map(|s| s.label).collect();
    let report = classification_report(&pred, &gt)?;
    model.save(&out)?;
    write_json(&out.join("history.json"), &history)?;
    let metrics = BertisMetrics {
        seed: c.seed,
        train: split.train.len(),
        val: split.val.len(),
        test: split.test.len(),
        best_epoch: history.best_epoch,
        val_accuracy: history.best_val_accuracy,
        test_accuracy: report.accuracy,
        test_macro_f1: report.macro_f1,
    };
    write_json(&out.join("metrics.json"), &metrics)?;
    write(&out.join("test_report.txt"), report.to_table())?;
    print!("{}", report.to_table());
    println!(
        "best epoch {}  val accuracy {:.6}  test accuracy {:.6}  macro-F1 {:.6}",
        history.best_epoch, history.best_val_accuracy, report.accuracy, report.macro_f1
    );
    println!("saved classifier to {}", out.display());
    Ok(())
}

pub fn classify(model: &Path, text: &str) -> Result<()> {
    let model = BertisModel::load(model).with_context(|| format!("loading classifier from {}", model.display()))?;
    let (dist, label) = model.classify(text)?;
    println!("label: {label}");
    for (l, p) in ImageSchemaLabel::ALL.iter().zip(dist) {
        println!("  {:<18} {p:.6}", l.as_str());
    }
    println!("sum: {:.6}", dist.iter().sum::<f64>());
    Ok(())
}

/// Which segments a META4 run trained on and which it holds back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSplit {
    pub data: PathBuf,
    pub bertis_model: Option<PathBuf>,
    pub train_speakers: Vec<String>,
    pub held_out_speakers: Vec<String>,
    pub train_ids: Vec<String>,
    pub seen_test_ids: Vec<String>,
    pub unseen_ids: Vec<String>,
}

/// Speaker lists and sample indices of a train / seen-test / unseen split.
#[derive(Debug, PartialEq)]
struct SpeakerSplit {
    train_speakers: Vec<String>,
    held_out_speakers: Vec<String>,
    train: Vec<usize>,
    test: Vec<usize>,
    unseen: Vec<usize>,
}

fn make_split(
    samples: &[SegmentSample],
    held_out: Option<&[String]>,
    test_fraction: f64,
    seed: u64,
) -> Result<SpeakerSplit> {
    let speakers: BTreeSet<&str> = samples.iter().map(|s| s.speaker_id.as_str()).collect();
    let held: BTreeSet<&str> = match held_out {
        Some(list) => {
            for s in list {
                if !speakers.contains(s.as_str()) {
                    bail!("held-out speaker {s} does not occur in the dataset");
                }
            }
            list.iter().map(String::as_str).collect()
        }
        None if speakers.len() >= 2 => speakers.iter().next_back().copied().into_iter().collect(),
        None => BTreeSet::new(),
    };
    let train_speakers: Vec<String> = speakers.difference(&held).map(|s| s.to_string()).collect();
    if train_speakers.is_empty() {
        bail!("every speaker is held out; nothing left to train on");
    }
    let (mut seen, mut unseen) = (Vec::new(), Vec::new());
    for (i, s) in samples.iter().enumerate() {
        if held.contains(s.speaker_id.as_str()) {
            unseen.push(i);
        } else {
            seen.push(i);
        }
    }
    let mut order = seen.clone();
    SeededRng::new(seed).fork(0x5EE).shuffle(&mut order);
    let k = ((seen.len() as f64 * test_fraction).round() as usize).min(seen.len() - 1);
    let mut test = order[..k].to_vec();
    let mut train = order[k..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(SpeakerSplit {
        train_speakers,
        held_out_speakers: held.iter().map(|s| s.to_string()).collect(),
        train,
        test,
        unseen,
    })
}

fn load_bertis(path: Option<&Path>) -> Result<Option<BertisModel>> {
    path.map(|p| BertisModel::load(p).with_context(|| format!("loading classifier from {}", p.display())))
        .transpose()
}

pub fn train_meta4_cmd(cfg: &LoadedConfig, data: Option<&Path>, bertis: Option<&Path>, out: &Path) -> Result<()> {
    let c = &cfg.config;
    c.validate()?;
    let data_path = data
        .or(c.data.as_deref())
        .ok_or_else(|| anyhow!("no dataset given; pass --data or set `data` in the config"))?;
    let bertis_path = bertis.or(c.bertis_model.as_deref());
    let samples = load_pose_dataset(data_path)?;
    if samples.is_empty() {
        bail!("dataset {} is empty", data_path.display());
    }
    let classifier = load_bertis(bertis_path)?;
    let SpeakerSplit {
        train_speakers,
        held_out_speakers,
        train,
        test,
        unseen,
    } = make_split(
        &samples,
        c.split.held_out_speakers.as_deref(),
        c.split.seen_test_fraction,
        c.seed,
    )?;
    let ids = |idx: &[usize]| idx.iter().map(|&i| samples[i].id.clone()).collect::<Vec<_>>();
    let split = RunSplit {
        data: data_path.to_path_buf(),
        bertis_model: bertis_path.map(Path::to_path_buf),
        train_speakers,
        held_out_speakers,
        train_ids: ids(&train),
        seen_test_ids: ids(&test),
        unseen_ids: ids(&unseen),
    };
    let out = output_path(out);
    cfg.write_to(&out)?;
    write_json(&out.join("split.json"), &split)?;

    let train_samples: Vec<SegmentSample> = train.iter().map(|&i| samples[i].clone()).collect();
    let prepared = prepare_samples(&train_samples, classifier.as_ref(), c.meta4.model.schema_mode)?;
    println!(
        "training on {} segments from {} (seen test {}, unseen {})",
        prepared.len(),
        split.train_speakers.join(","),
        split.seen_test_ids.len(),
        split.unseen_ids.len()
    );
    let (model, history) = train_meta4_prepared(&prepared, &c.meta4, c.seed)?;
    model.save(&out)?;
    write_json(&out.join("history.json"), &history)?;
    println!(
        "epochs {}  best epoch {}  best validation rmse {:.6}",
        history.epoch_losses.len(),
        history.best_epoch,
        history.best_val_rmse
    );
    println!("saved model to {}", out.display());
    Ok(())
}

/// The trained model, its split, and the dataset prepared with its classifier.
struct Loaded {
    model: Meta4Model,
    split: RunSplit,
    prepared: Vec<PreparedSample>,
}

fn load_run(run: &Path, data: Option<&Path>, bertis: Option<&Path>) -> Result<Loaded> {
    let model = Meta4Model::load(run).with_context(|| format!("loading model from {}", run.display()))?;
    let split: RunSplit = read_json(&run.join("split.json"))?;
    let data_path = data.unwrap_or(&split.data);
    let samples = load_pose_dataset(data_path)?;
    let classifier = load_bertis(bertis.or(split.bertis_model.as_deref()))?;
    let prepared = prepare_samples(&samples, classifier.as_ref(), model.arch.schema_mode)?;
    Ok(Loaded { model, split, prepared })
}

fn select(prepared: &[PreparedSample], ids: &[String]) -> Result<Vec<PreparedSample>> {
    ids.iter()
        .map(|id| {
            prepared
                .iter()
                .find(|s| &s.id == id)
                .cloned()
                .ok_or_else(|| anyhow!("segment {id} from the run's split is missing from the dataset"))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct Generation<'a> {
    sample: &'a str,
    condition: &'a str,
    rmse: f64,
    mae: f64,
    pcc: f64,
    cosine: f64,
}

pub fn generate(
    run: &Path,
    sample: &str,
    condition: Condition,
    data: Option<&Path>,
    bertis: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let loaded = load_run(run, data, bertis)?;
    let idx = loaded
        .prepared
        .iter()
        .position(|s| s.id == sample)
        .ok_or_else(|| anyhow!("no segment {sample} in the dataset"))?;
    // Mismatched labels are assigned over the whole dataset, as in evaluation.
    let vectors = condition_vectors(&loaded.prepared, condition)?;
    let s = &loaded.prepared[idx];
    let pred = loaded.model.predict_patches(&loaded.model.standardize(&s.patches), &vectors[idx])?;
    let m = pose_metrics(&pred, &s.target)?;
    let out = output_path(out);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_poses_csv(&out.join("poses.csv"), &pred)?;
    write_poses_csv(&out.join("ground_truth.csv"), &s.target)?;
    let info = Generation {
        sample,
        condition: condition.as_str(),
        rmse: m.rmse,
        mae: m.mae,
        pcc: m.pcc,
        cosine: m.cosine,
    };
    write_json(&out.join("generation.json"), &info)?;
    println!(
        "{sample} ({condition}): rmse {:.6}  mae {:.6}  pcc {:.6}  cosine {:.6}",
        m.rmse, m.mae, m.pcc, m.cosine
    );
    println!("wrote {} frames to {}", pred.rows(), out.join("poses.csv").display());
    Ok(())
}

/// Runs the requested rows of the seen/unseen x condition grid (all six by
/// default) and writes `report.csv` and `report.txt`.
pub fn evaluate(
    run: &Path,
    condition: Option<Condition>,
    split: Option<Split>,
    data: Option<&Path>,
    bertis: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let loaded = load_run(run, data, bertis)?;
    let seen = select(&loaded.prepared, &loaded.split.seen_test_ids)?;
    let unseen = select(&loaded.prepared, &loaded.split.unseen_ids)?;
    let splits: Vec<Split> = split.map_or(vec![Split::Seen, Split::Unseen], |s| vec![s]);
    let conditions: Vec<Condition> = condition.map_or(Condition::ALL.to_vec(), |c| vec![c]);
    let mut rows = Vec::new();
    for sp in splits {
        let set = match sp {
            Split::Seen => &seen,
            Split::Unseen => &unseen,
        };
        if set.is_empty() {
            bail!("the run has no {sp} test segments; choose the other split with --split");
        }
        for &cond in &conditions {
            rows.push(
                run_condition(&loaded.model, set, cond, sp)
                    .with_context(|| format!("evaluating {sp}/{cond}"))?,
            );
        }
    }
    let report = ProtocolReport { rows };
    let out = out.map_or_else(|| run.join("evaluation"), output_path);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join("report.csv"), report.to_csv())?;
    write(&out.join("report.txt"), report.to_table())?;
    print!("{}", report.to_table());
    println!("wrote {}", out.join("report.csv").display());
    Ok(())
}

pub fn render(poses: &Path, out: &Path) -> Result<()> {
    let data = read_poses_csv(poses)?;
    let seq = PoseSequence::normalized(data)?;
    let out = output_path(out);
    let written = render_svg(&seq, &out)?;
    println!(
        "wrote {} and {} frame stills",
        written.animation.display(),
        written.stills.len()
    );
    Ok(())
}

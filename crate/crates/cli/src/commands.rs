use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use emgse_core::dataset::{build_dataset, DatasetIndex, NoiseBank, NoiseEntry, Split, INDEX_VERSION};
use emgse_core::formats::{emg_read, wav_read, wav_write, write_jsonl, Manifest, EMGC_VERSION};
use emgse_core::synth::synth_corpus;
use emgse_model::data::fit_pipeline;
use emgse_model::infer::LatentCondition;
use emgse_model::{enhance, evaluate, export_latents, train, Checkpoint, Corpus, FeaturePipeline, CHECKPOINT_VERSION};

use crate::cli::{Cli, Command, GlobalArgs};
use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::import::import_corpus;

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const PIPELINE_FILE: &str = "pipeline.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const REPORT_FILE: &str = "report.jsonl";
pub const TABLE_FILE: &str = "report.txt";

pub fn version_text() -> String {
    format!(
        "emgse {}\nwav: PCM 16-bit mono\nemgc: {EMGC_VERSION}\ncheckpoint: {CHECKPOINT_VERSION}\ndataset-index: {INDEX_VERSION}\n",
        env!("CARGO_PKG_VERSION")
    )
}

fn out_dir(g: &GlobalArgs) -> Result<&Path> {
    let out = g
        .out
        .as_deref()
        .ok_or_else(|| CliError::Usage("--out <dir> is required".into()))?;
    std::fs::create_dir_all(out)?;
    Ok(out)
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

/// Every `*.wav` in `dir`, sorted, with the file stem as id.
pub fn scan_noise_bank(dir: &Path, bank: NoiseBank) -> Result<Vec<NoiseEntry>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("wav") {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| CliError::Usage(format!("bad noise file name {}", path.display())))?
                .to_string();
            out.push(NoiseEntry { id, bank, path });
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

fn load_corpus(dataset: &Path, splits: &[Split]) -> Result<Corpus> {
    let index = DatasetIndex::read(dataset)?;
    Ok(Corpus::load(&index, splits)?)
}

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if g.version {
        print!("{}", version_text());
        return Ok(());
    }
    let command = cli
        .command
        .as_ref()
        .ok_or_else(|| CliError::Usage("a subcommand is required (see --help)".into()))?;
    let mut cfg = PipelineConfig::load(g.config.as_deref())?;
    if let Some(c) = g.channels {
        cfg.train.channel_set = c.into();
    }
    let seed = g.seed.unwrap_or(0);

    match command {
        Command::Synth => {
            let out = out_dir(g)?;
            let corpus = synth_corpus(&cfg.synth, seed, out, g.jobs)?;
            info!("wrote {} utterances to {}", corpus.manifest.rows.len(), out.display());
            println!("{}", corpus.manifest_path.display());
        }
        Command::Import { src } => {
            let out = out_dir(g)?;
            let manifest = import_corpus(src, out, &cfg.import)?;
            info!("imported {} utterances", manifest.rows.len());
            println!("{}", out.join("manifest.tsv").display());
        }
        Command::BuildDataset {
            manifest,
            train_noise,
            test_noise,
        } => {
            let out = out_dir(g)?;
            let m = Manifest::read(manifest)?;
            let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
            let train_dir = train_noise.clone().unwrap_or_else(|| base.join("noise/train"));
            let test_dir = test_noise.clone().unwrap_or_else(|| base.join("noise/test"));
            let mut noises = scan_noise_bank(&train_dir, NoiseBank::Train)?;
            noises.extend(scan_noise_bank(&test_dir, NoiseBank::Test)?);
            let index = build_dataset(&m, &noises, &cfg.dataset, seed)?;
            let path = out.join(DATASET_FILE);
            index.write(&path)?;
            info!("{} mixtures, splits {:?}", index.mixtures.len(), index.split_sizes());
            println!("{}", path.display());
        }
        Command::FitNorm { dataset, audio_only } => {
            let out = out_dir(g)?;
            let corpus = load_corpus(dataset, &[Split::Train])?;
            let p = fit_pipeline(&corpus, &cfg.features, cfg.train.channel_set, !audio_only, g.jobs)?;
            let path = out.join(PIPELINE_FILE);
            std::fs::write(&path, serde_json::to_string_pretty(&p)?)?;
            println!("{}", path.display());
        }
        Command::Train { dataset, variant, norm } => {
            let out = out_dir(g)?;
            if let Some(v) = variant {
                cfg.train.variant = (*v).into();
            }
            if let Some(s) = g.seed {
                cfg.train.seed = s;
            }
            let pipeline: Option<FeaturePipeline> = match norm {
                Some(p) => Some(serde_json::from_str(&std::fs::read_to_string(p)?)?),
                None => None,
            };
            let corpus = load_corpus(dataset, &[Split::Train, Split::Val])?;
            let (ck, history) = train(&cfg.train, &corpus, pipeline, &cfg.features, g.jobs)?;
            let path = out.join(CHECKPOINT_FILE);
            ck.save(&path)?;
            write_jsonl(&out.join(HISTORY_FILE), &history)?;
            info!(
                "best epoch {} of {}, val L1 {:.5}",
                ck.meta.best_epoch, ck.meta.epochs_run, ck.meta.best_val_loss
            );
            println!("{}", path.display());
        }
        Command::Enhance {
            checkpoint,
            noisy,
            emg,
            dataset,
        } => {
            let out = out_dir(g)?;
            let ck = Checkpoint::load(checkpoint)?;
            if let Some(noisy) = noisy {
                let x = wav_read(noisy)?;
                let e = emg.as_deref().map(emg_read).transpose()?;
                let y = enhance(&ck, &x, e.as_ref())?;
                let stem = noisy.file_stem().and_then(|s| s.to_str()).unwrap_or("noisy");
                let path = out.join(format!("{stem}_enhanced.wav"));
                wav_write(&path, &y)?;
                println!("{}", path.display());
            } else if let Some(dataset) = dataset {
                let corpus = load_corpus(dataset, &[Split::Test])?;
                let mixes = corpus.mixtures(Split::Test);
                let written: Vec<PathBuf> = thread_pool(g.jobs)?.install(|| {
                    mixes
                        .par_iter()
                        .map(|m| -> Result<PathBuf> {
                            let y = enhance(&ck, &corpus.noisy(m)?, Some(corpus.emg(&m.clean_id)?))?;
                            let path = out.join(format!("{}.wav", m.id));
                            wav_write(&path, &y)?;
                            Ok(path)
                        })
                        .collect::<Result<_>>()
                })?;
                info!("enhanced {} mixtures", written.len());
            }
        }
        Command::Evaluate { dataset, systems } => {
            let out = out_dir(g)?;
            let mut loaded = Vec::new();
            for s in systems {
                let (name, path) = s
                    .split_once('=')
                    .ok_or_else(|| CliError::Usage(format!("--system expects NAME=CHECKPOINT, got {s:?}")))?;
                loaded.push((name.to_string(), Checkpoint::load(Path::new(path))?));
            }
            let corpus = load_corpus(dataset, &[Split::Test])?;
            let refs: Vec<(&str, &Checkpoint)> = loaded.iter().map(|(n, c)| (n.as_str(), c)).collect();
            let report = evaluate(&refs, &corpus, g.jobs)?;
            report.write(&out.join(REPORT_FILE), &out.join(TABLE_FILE))?;
            print!("{}", report.to_table());
        }
        Command::ExportLatents {
            checkpoint,
            dataset,
            mixtures,
            snr,
            count,
        } => {
            let out = out_dir(g)?;
            let ck = Checkpoint::load(checkpoint)?;
            let corpus = load_corpus(dataset, &[Split::Test])?;
            let all = corpus.mixtures(Split::Test);
            let chosen: Vec<_> = if mixtures.is_empty() {
                all.into_iter().filter(|m| m.snr_db == *snr).take(*count).collect()
            } else {
                mixtures
                    .iter()
                    .map(|id| {
                        all.iter()
                            .find(|m| &m.id == id)
                            .copied()
                            .ok_or_else(|| CliError::Usage(format!("no test mixture {id}")))
                    })
                    .collect::<Result<_>>()?
            };
            if chosen.is_empty() {
                return Err(CliError::Usage(format!("no test mixtures at {snr} dB")));
            }
            let mut summary = Vec::new();
            for m in chosen {
                let lat = export_latents(
                    &ck,
                    corpus.clean(&m.clean_id)?,
                    &corpus.noisy(m)?,
                    corpus.emg(&m.clean_id)?,
                )?;
                let file = LatentFile::new(&m.id, &lat);
                std::fs::write(
                    out.join(format!("{}.latents.json", m.id)),
                    serde_json::to_string(&file)?,
                )?;
                println!(
                    "{}\tnoisy_plus_emg-clean_only {:.6}\tnoisy_only-clean_only {:.6}",
                    m.id, file.mean_differences[PAIRS[0].2], file.mean_differences[PAIRS[1].2]
                );
                summary.push(LatentSummary {
                    mixture_id: m.id.clone(),
                    mean_differences: file.mean_differences,
                });
            }
            write_jsonl(&out.join("latents_summary.jsonl"), &summary)?;
        }
    }
    Ok(())
}

const PAIRS: [(LatentCondition, LatentCondition, &str); 3] = [
    (
        LatentCondition::NoisyPlusEmg,
        LatentCondition::CleanOnly,
        "noisy_plus_emg-clean_only",
    ),
    (
        LatentCondition::NoisyOnly,
        LatentCondition::CleanOnly,
        "noisy_only-clean_only",
    ),
    (
        LatentCondition::NoisyPlusEmg,
        LatentCondition::NoisyOnly,
        "noisy_plus_emg-noisy_only",
    ),
];

#[derive(Serialize)]
struct LatentFile {
    mixture_id: String,
    latents: BTreeMap<&'static str, Vec<Vec<f64>>>,
    differences: BTreeMap<&'static str, Vec<Vec<f64>>>,
    mean_differences: BTreeMap<&'static str, f64>,
}

#[derive(Serialize)]
struct LatentSummary {
    mixture_id: String,
    mean_differences: BTreeMap<&'static str, f64>,
}

fn rows(a: &ndarray::Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

impl LatentFile {
    fn new(id: &str, lat: &emgse_model::LatentExport) -> Self {
        let conds = [
            LatentCondition::CleanOnly,
            LatentCondition::NoisyOnly,
            LatentCondition::NoisyPlusEmg,
        ];
        Self {
            mixture_id: id.to_string(),
            latents: conds.iter().map(|c| (c.name(), rows(lat.get(*c)))).collect(),
            differences: PAIRS
                .iter()
                .map(|(a, b, n)| (*n, rows(&lat.difference(*a, *b))))
                .collect(),
            mean_differences: PAIRS
                .iter()
                .map(|(a, b, n)| (*n, lat.mean_difference(*a, *b)))
                .collect(),
        }
    }
}

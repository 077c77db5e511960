//! L1/Adam training with per-epoch validation and patience-based early
//! stopping. One full utterance per step.

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use emgse_core::dataset::{derive_seed, Split};
use emgse_core::emg::ChannelSet;

use crate::adam::{clip_global_norm, Adam, AdamConfig};
use crate::checkpoint::{Checkpoint, TrainMeta};
use crate::data::{fit_pipeline, thread_pool, Corpus, Example, FeaturePipeline};
use crate::error::{ModelError, Result};
use crate::network::{l1_loss, NetConfig, Network, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub variant: Variant,
    pub channel_set: ChannelSet,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub patience_epochs: usize,
    pub max_epochs: usize,
    pub dropout: f64,
    pub seed: u64,
    /// Global-norm gradient clipping; off when absent.
    pub clip_norm: Option<f64>,
    pub encoder_hidden: usize,
    pub encoder_out: usize,
    pub fusion_dim: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let net = NetConfig::default();
        let adam = AdamConfig::default();
        Self {
            variant: Variant::Emgse,
            channel_set: ChannelSet::Full,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            patience_epochs: 15,
            max_epochs: 300,
            dropout: net.dropout,
            seed: 0,
            clip_norm: None,
            encoder_hidden: net.encoder_hidden,
            encoder_out: net.encoder_out,
            fusion_dim: net.fusion_dim,
            lstm_hidden: net.lstm_hidden,
            lstm_layers: net.lstm_layers,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.patience_epochs == 0 {
            return Err(ModelError::Config("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(ModelError::Config("max_epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(ModelError::Config("learning rate must be positive".into()));
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return Err(ModelError::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn net(&self, emg_dim: usize, audio_dim: usize) -> NetConfig {
        NetConfig {
            variant: self.variant,
            channel_set: self.channel_set,
            emg_dim,
            audio_dim,
            encoder_hidden: self.encoder_hidden,
            encoder_out: self.encoder_out,
            fusion_dim: self.fusion_dim,
            lstm_hidden: self.lstm_hidden,
            lstm_layers: self.lstm_layers,
            dropout: self.dropout,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Improved,
    Waiting,
    Stop,
}

/// Tracks the best validation loss; stops after `patience` consecutive
/// epochs without a strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> Progress {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale = 0;
            Progress::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                Progress::Stop
            } else {
                Progress::Waiting
            }
        }
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Running mean over the epoch's steps (training mode).
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: Network,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs_run: usize,
    pub history: Vec<EpochStats>,
}

/// Mean evaluation-mode L1 over `n` examples.
pub fn mean_loss<F>(net: &Network, n: usize, load: &F, jobs: usize) -> Result<f64>
where
    F: Fn(usize) -> Result<Example> + Sync,
{
    if n == 0 {
        return Err(ModelError::Training("no examples".into()));
    }
    let pool = thread_pool(jobs)?;
    let losses: Vec<f64> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let ex = load(i)?;
                let f = net.forward(ex.x_emg.as_ref().map(|x| x.view()), ex.x_audio.view(), None)?;
                l1_loss(f.z.view(), ex.target.view())
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(losses.iter().sum::<f64>() / n as f64)
}

/// Trains `net` on examples `0..n_train` from `train`, validating on
/// `0..n_val` from `val` after every epoch. Returns the parameters of the
/// best validation epoch.
pub fn train_network<T, V>(
    cfg: &TrainConfig,
    mut net: Network,
    n_train: usize,
    train: T,
    n_val: usize,
    val: V,
    jobs: usize,
) -> Result<TrainOutcome>
where
    T: Fn(usize) -> Result<Example>,
    V: Fn(usize) -> Result<Example> + Sync,
{
    cfg.validate()?;
    if n_train == 0 || n_val == 0 {
        return Err(ModelError::Training(
            "training and validation splits must be nonempty".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["train"]));
    let mut adam = Adam::new(cfg.adam(), &net);
    let mut stopper = EarlyStopping::new(cfg.patience_epochs);
    let mut best = net.clone();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..n_train).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let ex = train(i)?;
            let masks = net.sample_masks(&mut rng, ex.x_audio.nrows());
            let (loss, mut grads) = net.loss_and_grads(
                ex.x_emg.as_ref().map(|x| x.view()),
                ex.x_audio.view(),
                ex.target.view(),
                masks.as_ref(),
            )?;
            if !loss.is_finite() {
                return Err(ModelError::Training(format!("non-finite loss in epoch {epoch}")));
            }
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            adam.step(&mut net, &grads);
            total += loss;
        }
        let val_loss = mean_loss(&net, n_val, &val, jobs)?;
        let stats = EpochStats {
            epoch,
            train_loss: total / n_train as f64,
            val_loss,
        };
        info!("epoch {epoch}: train {:.5} val {:.5}", stats.train_loss, stats.val_loss);
        history.push(stats);
        match stopper.observe(epoch, val_loss) {
            Progress::Improved => best = net.clone(),
            Progress::Waiting => {}
            Progress::Stop => break,
        }
    }
    let (best_epoch, best_val_loss) = stopper.best();
    Ok(TrainOutcome {
        net: best,
        best_epoch,
        best_val_loss,
        epochs_run: history.len(),
        history,
    })
}

/// Fits normalizers on the corpus's training split (unless supplied),
/// trains on it and validates on its validation split.
pub fn train(
    cfg: &TrainConfig,
    corpus: &Corpus,
    pipeline: Option<FeaturePipeline>,
    emg_cfg: &emgse_core::emg::EmgFeatureConfig,
    jobs: usize,
) -> Result<(Checkpoint, Vec<EpochStats>)> {
    cfg.validate()?;
    let pipeline = match pipeline {
        Some(p) => p,
        None => fit_pipeline(corpus, emg_cfg, cfg.channel_set, cfg.variant.uses_emg(), jobs)?,
    };
    if cfg.variant.uses_emg() != pipeline.emg_norm.is_some() {
        return Err(ModelError::Config(
            "feature pipeline does not match the model variant".into(),
        ));
    }
    if pipeline.channel_set != cfg.channel_set && cfg.variant.uses_emg() {
        return Err(ModelError::Config(
            "feature pipeline was fitted for another channel set".into(),
        ));
    }
    let emg_dim = pipeline.emg_norm.as_ref().map_or(1, |n| n.dim());
    let net_cfg = cfg.net(emg_dim, pipeline.audio_norm.dim());
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["init"]));
    let net = Network::init(net_cfg, &mut init_rng)?;
    info!("{} parameters", net.num_params());

    let train_mix = corpus.mixtures(Split::Train);
    let val_mix = corpus.mixtures(Split::Val);
    let outcome = train_network(
        cfg,
        net,
        train_mix.len(),
        |i| pipeline.example(corpus, train_mix[i]),
        val_mix.len(),
        |i| pipeline.example(corpus, val_mix[i]),
        jobs,
    )?;
    Ok((
        Checkpoint {
            net: outcome.net,
            pipeline,
            meta: TrainMeta {
                best_epoch: outcome.best_epoch,
                epochs_run: outcome.epochs_run,
                best_val_loss: outcome.best_val_loss,
                seed: cfg.seed,
            },
        },
        outcome.history,
    ))
}

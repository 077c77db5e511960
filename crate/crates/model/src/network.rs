//! The late-fusion enhancement network and its SE(A) audio-only variant.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use emgse_core::dsp::NUM_BINS;
use emgse_core::emg::{ChannelSet, EmgFeatureConfig};

use crate::error::{ModelError, Result};
use crate::layers::{dropout_mask, relu, relu_backward, Bilstm, BilstmTrace, Linear, Tensor, TensorMut};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Emgse,
    /// Audio only: a second, independently parameterized audio encoder
    /// fills the EMG slot of the fusion layer.
    SeA,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Emgse => "EMGSE",
            Variant::SeA => "SE(A)",
        }
    }

    pub fn uses_emg(self) -> bool {
        self == Variant::Emgse
    }
}

impl std::str::FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "emgse" => Ok(Variant::Emgse),
            "se_a" | "se(a)" | "sea" => Ok(Variant::SeA),
            _ => Err(ModelError::Config(format!("unknown variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub variant: Variant,
    pub channel_set: ChannelSet,
    /// Stacked EMG feature width (5425 for 35 channels).
    pub emg_dim: usize,
    pub audio_dim: usize,
    pub encoder_hidden: usize,
    pub encoder_out: usize,
    pub fusion_dim: usize,
    /// Per direction; each BLSTM layer outputs twice this.
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    /// Applied after every ReLU of the EMG encoder in training mode.
    pub dropout: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Emgse,
            channel_set: ChannelSet::Full,
            emg_dim: EmgFeatureConfig::default().stacked_dim(35),
            audio_dim: NUM_BINS,
            encoder_hidden: 200,
            encoder_out: 100,
            fusion_dim: 200,
            lstm_hidden: 250,
            lstm_layers: 2,
            dropout: 0.5,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.emg_dim,
            self.audio_dim,
            self.encoder_hidden,
            self.encoder_out,
            self.fusion_dim,
            self.lstm_hidden,
            self.lstm_layers,
        ];
        if dims.contains(&0) {
            return Err(ModelError::Config("all network dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    fn aux_input_dim(&self) -> usize {
        match self.variant {
            Variant::Emgse => self.emg_dim,
            Variant::SeA => self.audio_dim,
        }
    }

    fn aux_prefix(&self) -> &'static str {
        match self.variant {
            Variant::Emgse => "emg_encoder",
            Variant::SeA => "audio2_encoder",
        }
    }

    fn uses_dropout(&self) -> bool {
        self.variant == Variant::Emgse && self.dropout > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetConfig,
    /// EMG encoder, or the second audio encoder for SE(A).
    pub aux: [Linear; 2],
    pub audio: [Linear; 2],
    pub fusion: Linear,
    pub blstm: Vec<Bilstm>,
    pub output: Linear,
}

/// Dropout masks for the two EMG-encoder activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Masks {
    pub hidden: Array2<f64>,
    pub out: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    x_aux: Array2<f64>,
    x_audio: Array2<f64>,
    aux_pre: [Array2<f64>; 2],
    aux_act: Array2<f64>,
    audio_pre: [Array2<f64>; 2],
    audio_act: Array2<f64>,
    fused_in: Array2<f64>,
    fusion_pre: Array2<f64>,
    blstm_in: Vec<Array2<f64>>,
    blstm: Vec<BilstmTrace>,
    out_pre: Array2<f64>,
    masks: Option<Masks>,
}

#[derive(Debug, Clone)]
pub struct Forward {
    /// Enhanced normalized log magnitude, `T x 257`.
    pub z: Array2<f64>,
    /// Fusion-layer output, `T x fusion_dim`.
    pub latent: Array2<f64>,
    pub trace: Trace,
}

impl Network {
    fn build(
        config: NetConfig,
        mut linear: impl FnMut(usize, usize) -> Linear,
        mut bilstm: impl FnMut(usize, usize) -> Bilstm,
    ) -> Self {
        let c = &config;
        let aux = [
            linear(c.aux_input_dim(), c.encoder_hidden),
            linear(c.encoder_hidden, c.encoder_out),
        ];
        let audio = [
            linear(c.audio_dim, c.encoder_hidden),
            linear(c.encoder_hidden, c.encoder_out),
        ];
        let fusion = linear(2 * c.encoder_out, c.fusion_dim);
        let blstm = (0..c.lstm_layers)
            .map(|l| bilstm(if l == 0 { c.fusion_dim } else { 2 * c.lstm_hidden }, c.lstm_hidden))
            .collect();
        let output = linear(2 * c.lstm_hidden, c.audio_dim);
        Self {
            config,
            aux,
            audio,
            fusion,
            blstm,
            output,
        }
    }

    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self::build(config, Linear::zeros, Bilstm::zeros))
    }

    /// Seeded initialization, layers drawn in declaration order.
    pub fn init<R: Rng>(config: NetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let rng = std::cell::RefCell::new(rng);
        Ok(Self::build(
            config,
            |i, o| Linear::init(&mut **rng.borrow_mut(), i, o),
            |i, h| Bilstm::init(&mut **rng.borrow_mut(), i, h),
        ))
    }

    pub fn zeros_like(&self) -> Self {
        Self::build(self.config.clone(), Linear::zeros, Bilstm::zeros)
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    pub fn tensors(&self) -> Vec<Tensor<'_>> {
        let mut out = Vec::new();
        let p = self.config.aux_prefix();
        self.aux[0].tensors(&format!("{p}.0"), &mut out);
        self.aux[1].tensors(&format!("{p}.1"), &mut out);
        self.audio[0].tensors("audio_encoder.0", &mut out);
        self.audio[1].tensors("audio_encoder.1", &mut out);
        self.fusion.tensors("fusion", &mut out);
        for (l, b) in self.blstm.iter().enumerate() {
            b.tensors(&format!("blstm.{l}"), &mut out);
        }
        self.output.tensors("output", &mut out);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::new();
        let p = self.config.aux_prefix();
        let [a0, a1] = &mut self.aux;
        a0.tensors_mut(&format!("{p}.0"), &mut out);
        a1.tensors_mut(&format!("{p}.1"), &mut out);
        let [b0, b1] = &mut self.audio;
        b0.tensors_mut("audio_encoder.0", &mut out);
        b1.tensors_mut("audio_encoder.1", &mut out);
        self.fusion.tensors_mut("fusion", &mut out);
        for (l, b) in self.blstm.iter_mut().enumerate() {
            b.tensors_mut(&format!("blstm.{l}"), &mut out);
        }
        self.output.tensors_mut("output", &mut out);
        out
    }

    /// Fresh training-mode masks, or `None` when this network has no
    /// dropout (SE(A), or `dropout == 0`).
    pub fn sample_masks<R: Rng>(&self, rng: &mut R, frames: usize) -> Option<Masks> {
        self.config.uses_dropout().then(|| Masks {
            hidden: dropout_mask(rng, frames, self.config.encoder_hidden, self.config.dropout),
            out: dropout_mask(rng, frames, self.config.encoder_out, self.config.dropout),
        })
    }

    /// Evaluation mode when `masks` is `None`. SE(A) ignores `x_emg`.
    pub fn forward(
        &self,
        x_emg: Option<ArrayView2<f64>>,
        x_audio: ArrayView2<f64>,
        masks: Option<&Masks>,
    ) -> Result<Forward> {
        let c = &self.config;
        let frames = x_audio.nrows();
        if x_audio.ncols() != c.audio_dim {
            return Err(ModelError::Shape(format!(
                "audio features have {} dims, expected {}",
                x_audio.ncols(),
                c.audio_dim
            )));
        }
        if frames == 0 {
            return Err(ModelError::Shape("empty input sequence".into()));
        }
        let x_aux = match c.variant {
            Variant::SeA => x_audio.to_owned(),
            Variant::Emgse => {
                let x = x_emg.ok_or_else(|| ModelError::MissingModality("EMGSE model requires EMG features".into()))?;
                if x.nrows() != frames {
                    return Err(ModelError::Shape(format!(
                        "EMG has {} frames, audio has {frames}",
                        x.nrows()
                    )));
                }
                if x.ncols() != c.emg_dim {
                    return Err(ModelError::Shape(format!(
                        "EMG features have {} dims, expected {}",
                        x.ncols(),
                        c.emg_dim
                    )));
                }
                x.to_owned()
            }
        };
        let masks = if c.uses_dropout() { masks.cloned() } else { None };
        if let Some(m) = &masks {
            if m.hidden.dim() != (frames, c.encoder_hidden) || m.out.dim() != (frames, c.encoder_out) {
                return Err(ModelError::Shape("dropout masks do not match the sequence".into()));
            }
        }

        let aux_pre0 = self.aux[0].forward(x_aux.view());
        let mut h = relu(&aux_pre0);
        if let Some(m) = &masks {
            h *= &m.hidden;
        }
        let aux_pre1 = self.aux[1].forward(h.view());
        let mut v_aux = relu(&aux_pre1);
        if let Some(m) = &masks {
            v_aux *= &m.out;
        }

        let audio_pre0 = self.audio[0].forward(x_audio);
        let a = relu(&audio_pre0);
        let audio_pre1 = self.audio[1].forward(a.view());
        let v_audio = relu(&audio_pre1);

        let fused_in = concatenate(Axis(1), &[v_aux.view(), v_audio.view()]).expect("equal frame counts");
        let fusion_pre = self.fusion.forward(fused_in.view());
        let latent = relu(&fusion_pre);

        let mut blstm_in = Vec::with_capacity(self.blstm.len());
        let mut traces = Vec::with_capacity(self.blstm.len());
        let mut y = latent.clone();
        for layer in &self.blstm {
            let (next, tr) = layer.forward(y.view());
            blstm_in.push(y);
            traces.push(tr);
            y = next;
        }
        let out_pre = self.output.forward(y.view());
        let z = relu(&out_pre);
        blstm_in.push(y);

        Ok(Forward {
            z,
            latent,
            trace: Trace {
                x_aux,
                x_audio: x_audio.to_owned(),
                aux_pre: [aux_pre0, aux_pre1],
                aux_act: h,
                audio_pre: [audio_pre0, audio_pre1],
                audio_act: a,
                fused_in,
                fusion_pre,
                blstm_in,
                blstm: traces,
                out_pre,
                masks,
            },
        })
    }

    /// Gradients of the loss for one recorded forward pass, given `dz`.
    pub fn backward(&self, trace: &Trace, dz: ArrayView2<f64>) -> Network {
        let mut g = self.zeros_like();
        let d_out = relu_backward(&trace.out_pre, &dz.to_owned());
        let n = self.blstm.len();
        let mut dy = self
            .output
            .backward(trace.blstm_in[n].view(), d_out.view(), &mut g.output, true)
            .expect("requested");
        for l in (0..n).rev() {
            dy = self.blstm[l]
                .backward(&trace.blstm[l], dy.view(), &mut g.blstm[l], true)
                .expect("requested");
        }
        let d_fusion = relu_backward(&trace.fusion_pre, &dy);
        let d_fused = self
            .fusion
            .backward(trace.fused_in.view(), d_fusion.view(), &mut g.fusion, true)
            .expect("requested");
        let e = self.config.encoder_out;

        let mut d_vaux = d_fused.slice(s![.., ..e]).to_owned();
        if let Some(m) = &trace.masks {
            d_vaux *= &m.out;
        }
        let d = relu_backward(&trace.aux_pre[1], &d_vaux);
        let mut dh = self.aux[1]
            .backward(trace.aux_act.view(), d.view(), &mut g.aux[1], true)
            .expect("requested");
        if let Some(m) = &trace.masks {
            dh *= &m.hidden;
        }
        let d = relu_backward(&trace.aux_pre[0], &dh);
        self.aux[0].backward(trace.x_aux.view(), d.view(), &mut g.aux[0], false);

        let d_vaudio = d_fused.slice(s![.., e..]).to_owned();
        let d = relu_backward(&trace.audio_pre[1], &d_vaudio);
        let da = self.audio[1]
            .backward(trace.audio_act.view(), d.view(), &mut g.audio[1], true)
            .expect("requested");
        let d = relu_backward(&trace.audio_pre[0], &da);
        self.audio[0].backward(trace.x_audio.view(), d.view(), &mut g.audio[0], false);
        g
    }

    /// Loss and gradients for one utterance.
    pub fn loss_and_grads(
        &self,
        x_emg: Option<ArrayView2<f64>>,
        x_audio: ArrayView2<f64>,
        target: ArrayView2<f64>,
        masks: Option<&Masks>,
    ) -> Result<(f64, Network)> {
        let fwd = self.forward(x_emg, x_audio, masks)?;
        let loss = l1_loss(fwd.z.view(), target)?;
        let dz = l1_grad(fwd.z.view(), target)?;
        Ok((loss, self.backward(&fwd.trace, dz.view())))
    }
}

fn check_same(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<()> {
    if pred.dim() != target.dim() {
        return Err(ModelError::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.is_empty() {
        return Err(ModelError::Shape("empty prediction".into()));
    }
    Ok(())
}

/// Mean absolute error over all elements.
pub fn l1_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    check_same(pred, target)?;
    let mut s = 0.0;
    Zip::from(pred).and(target).for_each(|p, t| s += (p - t).abs());
    Ok(s / pred.len() as f64)
}

/// Subgradient of [`l1_loss`] with `sign(0) = 0`.
pub fn l1_grad(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_same(pred, target)?;
    let n = pred.len() as f64;
    let mut g = Array2::zeros(pred.dim());
    Zip::from(&mut g).and(pred).and(target).for_each(|g, p, t| {
        let d = p - t;
        *g = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    });
    Ok(g)
}

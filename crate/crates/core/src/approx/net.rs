use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tape::{BankId, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Convolutional feature extractor shared by the actor and both critics.
///
/// Strided stages downsample; the residual blocks that follow keep the last stage's
/// width and resolution. Each block is `relu(x + conv(relu(conv(x))))` with 3×3
/// kernels and no normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub in_channels: usize,
    pub rows: usize,
    pub cols: usize,
    pub stages: Vec<ConvStage>,
    pub residual_blocks: usize,
}

impl EncoderSpec {
    /// Spatial size after every stage, `(rows, cols)`.
    pub fn stage_sizes(&self) -> Vec<(usize, usize)> {
        let mut hw = (self.rows, self.cols);
        self.stages
            .iter()
            .map(|s| {
                hw = ((hw.0 + 2 * s.pad - s.kernel) / s.stride + 1, (hw.1 + 2 * s.pad - s.kernel) / s.stride + 1);
                hw
            })
            .collect()
    }

    pub fn out_channels(&self) -> usize {
        self.stages.last().map_or(self.in_channels, |s| s.channels)
    }

    /// Multiply-accumulates of one forward pass for one sample.
    pub fn macs(&self) -> usize {
        let sizes = self.stage_sizes();
        let mut cin = self.in_channels;
        let mut total = 0;
        for (s, (h, w)) in self.stages.iter().zip(&sizes) {
            total += h * w * s.channels * cin * s.kernel * s.kernel;
            cin = s.channels;
        }
        if let Some((h, w)) = sizes.last() {
            total += self.residual_blocks * 2 * h * w * cin * cin * 9;
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum HeadKind {
    /// Actor emits mean and log-std per action dimension; critics take the action as input.
    Continuous,
    /// Actor emits logits; critics emit one value per action.
    Discrete { actions: usize },
}

/// Architecture of the actor and twin critics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    /// `None` means the input is a plain feature vector.
    pub encoder: Option<EncoderSpec>,
    /// Scalars concatenated after pooling (vehicle speed, or the whole state for
    /// vector tasks).
    pub aux_dim: usize,
    pub action_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub head: HeadKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Encoder,
    Actor,
    Critic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
    /// Input width used for initialization bounds.
    pub fan_in: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Layout {
    pub segments: Vec<Segment>,
}

impl Layout {
    fn push(&mut self, name: String, shape: Vec<usize>, fan_in: usize) {
        let offset = self.len();
        self.segments.push(Segment { name, offset, shape, fan_in });
    }

    pub fn len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.offset + s.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat parameters with a named segment index.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub data: Vec<f64>,
    pub layout: Layout,
}

impl ParamVector {
    pub fn zeros(layout: Layout) -> Self {
        Self { data: vec![0.0; layout.len()], layout }
    }

    /// Uniform in `±1/√fan_in` for weights and biases alike.
    pub fn init(layout: Layout, rng: &mut impl Rng) -> Self {
        let mut data = Vec::with_capacity(layout.len());
        for s in &layout.segments {
            let bound = 1.0 / (s.fan_in.max(1) as f64).sqrt();
            data.extend((0..s.len()).map(|_| rng.gen_range(-bound..bound)));
        }
        Self { data, layout }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        let s = self.layout.segments.iter().find(|s| s.name == name)?;
        Some(&self.data[s.offset..s.offset + s.len()])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A parameter vector as seen by one tape: trainable when a bank is given, frozen
/// (constant) otherwise.
#[derive(Clone, Copy)]
pub struct Bound<'a> {
    pub params: &'a ParamVector,
    pub bank: Option<BankId>,
}

impl<'a> Bound<'a> {
    pub fn frozen(params: &'a ParamVector) -> Self {
        Self { params, bank: None }
    }

    pub fn trainable(params: &'a ParamVector, bank: BankId) -> Self {
        Self { params, bank: Some(bank) }
    }

    fn load(&self, tape: &mut Tape, index: usize) -> Var {
        let s = &self.params.layout.segments[index];
        let data = &self.params.data[s.offset..s.offset + s.len()];
        match self.bank {
            Some(b) => tape.param(b, s.offset, s.shape.clone(), data),
            None => tape.constant(Tensor::new(s.shape.clone(), data.to_vec())),
        }
    }
}

/// Parameter counts by kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Census {
    pub conv: usize,
    pub fully_connected: usize,
}

impl Census {
    pub fn total(&self) -> usize {
        self.conv + self.fully_connected
    }

    pub fn fc_fraction(&self) -> f64 {
        self.fully_connected as f64 / self.total() as f64
    }
}

/// One network input batch: an optional image `[B, C, H, W]` and scalars `[B, aux]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetInput {
    pub image: Option<Tensor>,
    pub aux: Tensor,
}

impl NetInput {
    pub fn batch(&self) -> usize {
        self.aux.shape[0]
    }
}

impl NetSpec {
    /// The shipped architecture: 64×64 three-channel grid, three strided stages down
    /// to 4×4 and two residual blocks, hidden width 32.
    pub fn default_driving() -> Self {
        Self {
            encoder: Some(EncoderSpec {
                in_channels: 3,
                rows: 64,
                cols: 64,
                stages: vec![
                    ConvStage { channels: 16, kernel: 4, stride: 4, pad: 0 },
                    ConvStage { channels: 32, kernel: 3, stride: 2, pad: 1 },
                    ConvStage { channels: 32, kernel: 3, stride: 2, pad: 1 },
                ],
                residual_blocks: 2,
            }),
            aux_dim: 1,
            action_dim: 2,
            hidden: vec![32],
            activation: Activation::Relu,
            head: HeadKind::Continuous,
        }
    }

    /// Smaller encoder for single-core training runs: same topology, a quarter of the
    /// arithmetic.
    pub fn compact_driving() -> Self {
        Self {
            encoder: Some(EncoderSpec {
                in_channels: 3,
                rows: 64,
                cols: 64,
                stages: vec![
                    ConvStage { channels: 8, kernel: 4, stride: 4, pad: 0 },
                    ConvStage { channels: 16, kernel: 3, stride: 2, pad: 1 },
                    ConvStage { channels: 24, kernel: 3, stride: 2, pad: 1 },
                ],
                residual_blocks: 1,
            }),
            hidden: vec![16],
            ..Self::default_driving()
        }
    }

    /// Vector-input network with a two-layer MLP per head.
    pub fn mlp(state_dim: usize, action_dim: usize, hidden: Vec<usize>) -> Self {
        Self {
            encoder: None,
            aux_dim: state_dim,
            action_dim,
            hidden,
            activation: Activation::Relu,
            head: HeadKind::Continuous,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.action_dim == 0 {
            return Err(Error::Config("action_dim must be positive".into()));
        }
        if let HeadKind::Discrete { actions } = self.head {
            if actions == 0 {
                return Err(Error::Config("discrete head needs at least one action".into()));
            }
        }
        if let Some(e) = &self.encoder {
            let mut hw = (e.rows, e.cols);
            for s in &e.stages {
                if s.kernel == 0 || s.stride == 0 || s.channels == 0 || hw.0 + 2 * s.pad < s.kernel || hw.1 + 2 * s.pad < s.kernel {
                    return Err(Error::Config(format!("conv stage {s:?} does not fit input {hw:?}")));
                }
                hw = ((hw.0 + 2 * s.pad - s.kernel) / s.stride + 1, (hw.1 + 2 * s.pad - s.kernel) / s.stride + 1);
            }
            if e.residual_blocks > 0 && e.stages.is_empty() {
                return Err(Error::Config("residual blocks need at least one conv stage".into()));
            }
        } else if self.aux_dim == 0 {
            return Err(Error::Config("vector network needs a non-empty input".into()));
        }
        Ok(())
    }

    /// Width of the shared feature vector fed to the heads.
    pub fn feature_dim(&self) -> usize {
        self.encoder.as_ref().map_or(0, |e| e.out_channels()) + self.aux_dim
    }

    pub fn layout(&self, part: Part) -> Layout {
        let mut l = Layout::default();
        match part {
            Part::Encoder => {
                if let Some(e) = &self.encoder {
                    let mut cin = e.in_channels;
                    for (i, s) in e.stages.iter().enumerate() {
                        let fan = cin * s.kernel * s.kernel;
                        l.push(format!("conv{i}.w"), vec![s.channels, cin, s.kernel, s.kernel], fan);
                        l.push(format!("conv{i}.b"), vec![s.channels], fan);
                        cin = s.channels;
                    }
                    for i in 0..e.residual_blocks {
                        for j in 0..2 {
                            l.push(format!("res{i}.{j}.w"), vec![cin, cin, 3, 3], cin * 9);
                            l.push(format!("res{i}.{j}.b"), vec![cin], cin * 9);
                        }
                    }
                }
            }
            Part::Actor | Part::Critic => {
                let mut fin = self.feature_dim();
                if part == Part::Critic && self.head == HeadKind::Continuous {
                    fin += self.action_dim;
                }
                for (i, &h) in self.hidden.iter().enumerate() {
                    l.push(format!("fc{i}.w"), vec![h, fin], fin);
                    l.push(format!("fc{i}.b"), vec![h], fin);
                    fin = h;
                }
                let out = match (part, self.head) {
                    (Part::Actor, HeadKind::Continuous) => 2 * self.action_dim,
                    (Part::Critic, HeadKind::Continuous) => 1,
                    (_, HeadKind::Discrete { actions }) => actions,
                    (Part::Encoder, _) => unreachable!(),
                };
                l.push("out.w".into(), vec![out, fin], fin);
                l.push("out.b".into(), vec![out], fin);
            }
        }
        l
    }

    /// Counts for the encoder, the actor and both critics.
    pub fn census(&self) -> Census {
        Census {
            conv: self.layout(Part::Encoder).len(),
            fully_connected: self.layout(Part::Actor).len() + 2 * self.layout(Part::Critic).len(),
        }
    }

    /// SHA-256 over the canonical JSON form; checkpoints refuse to load across digests.
    pub fn digest(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("NetSpec serializes");
        Sha256::digest(&json).into()
    }

    pub fn check_input(&self, input: &NetInput) -> Result<()> {
        let b = input.batch();
        if input.aux.shape != [b, self.aux_dim] {
            return Err(Error::Shape(format!("aux input {:?}, expected [{b}, {}]", input.aux.shape, self.aux_dim)));
        }
        match (&self.encoder, &input.image) {
            (Some(e), Some(img)) => {
                let want = [b, e.in_channels, e.rows, e.cols];
                if img.shape != want {
                    return Err(Error::Shape(format!("image input {:?}, expected {want:?}", img.shape)));
                }
            }
            (Some(_), None) => return Err(Error::Shape("network expects an image input".into())),
            (None, Some(_)) => return Err(Error::Shape("vector network given an image".into())),
            (None, None) => {}
        }
        Ok(())
    }

    fn act(&self, tape: &mut Tape, x: Var) -> Var {
        match self.activation {
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }

    /// Shared features `[B, feature_dim]`: pooled encoder output followed by the aux scalars.
    pub fn encode(&self, tape: &mut Tape, enc: Bound, input: &NetInput) -> Result<Var> {
        self.check_input(input)?;
        let aux = tape.constant(input.aux.clone());
        let Some(e) = &self.encoder else { return Ok(aux) };
        let mut x = tape.constant(input.image.clone().expect("checked above"));
        let mut seg = 0;
        for s in &e.stages {
            let w = enc.load(tape, seg);
            let b = enc.load(tape, seg + 1);
            seg += 2;
            x = tape.conv2d(x, w, b, s.stride, s.pad);
            x = tape.relu(x);
        }
        for _ in 0..e.residual_blocks {
            let (w1, b1) = (enc.load(tape, seg), enc.load(tape, seg + 1));
            let (w2, b2) = (enc.load(tape, seg + 2), enc.load(tape, seg + 3));
            seg += 4;
            let h = tape.conv2d(x, w1, b1, 1, 1);
            let h = tape.relu(h);
            let h = tape.conv2d(h, w2, b2, 1, 1);
            let sum = tape.add(x, h);
            x = tape.relu(sum);
        }
        let pooled = tape.global_avg_pool(x);
        Ok(tape.concat(pooled, aux))
    }

    fn mlp_forward(&self, tape: &mut Tape, p: Bound, mut x: Var) -> Var {
        let n = self.hidden.len();
        for i in 0..=n {
            let w = p.load(tape, 2 * i);
            let b = p.load(tape, 2 * i + 1);
            x = tape.linear(x, w, b);
            if i < n {
                x = self.act(tape, x);
            }
        }
        x
    }

    /// Mean and clamped log-std, each `[B, action_dim]`.
    pub fn actor_head(&self, tape: &mut Tape, p: Bound, features: Var) -> (Var, Var) {
        debug_assert_eq!(self.head, HeadKind::Continuous);
        let out = self.mlp_forward(tape, p, features);
        let mean = tape.columns(out, 0, self.action_dim);
        let raw = tape.columns(out, self.action_dim, self.action_dim);
        let log_std = tape.clamp(raw, LOG_STD_MIN, LOG_STD_MAX);
        (mean, log_std)
    }

    /// Logits `[B, actions]` for the discrete head.
    pub fn actor_logits(&self, tape: &mut Tape, p: Bound, features: Var) -> Var {
        self.mlp_forward(tape, p, features)
    }

    /// `[B, 1]` for continuous heads (action joins the features), `[B, actions]` for
    /// discrete heads.
    pub fn critic_head(&self, tape: &mut Tape, p: Bound, features: Var, action: Option<Var>) -> Var {
        let x = match action {
            Some(a) => tape.concat(features, a),
            None => features,
        };
        self.mlp_forward(tape, p, x)
    }
}

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Evaluates the actor on a batch without recording gradients.
pub fn forward_actor(spec: &NetSpec, enc: &ParamVector, actor: &ParamVector, input: &NetInput) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let f = spec.encode(&mut tape, Bound::frozen(enc), input)?;
    let (m, s) = spec.actor_head(&mut tape, Bound::frozen(actor), f);
    Ok((tape.value(m).clone(), tape.value(s).clone()))
}

/// Evaluates one critic on a batch of observation/action pairs.
pub fn forward_critic(
    spec: &NetSpec,
    enc: &ParamVector,
    critic: &ParamVector,
    input: &NetInput,
    action: &Tensor,
) -> Result<Tensor> {
    if action.shape != [input.batch(), spec.action_dim] {
        return Err(Error::Shape(format!("action {:?}, expected [{}, {}]", action.shape, input.batch(), spec.action_dim)));
    }
    let mut tape = Tape::new();
    let f = spec.encode(&mut tape, Bound::frozen(enc), input)?;
    let a = tape.constant(action.clone());
    let q = spec.critic_head(&mut tape, Bound::frozen(critic), f, Some(a));
    Ok(tape.value(q).clone())
}

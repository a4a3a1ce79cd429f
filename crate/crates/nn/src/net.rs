use risce_core::{Complex, ComplexMatrix, RngStream};
use serde::{Deserialize, Serialize};

use crate::element::Element;
use crate::error::{mismatch, NnError, Result};
use crate::param::Parameter;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Stream id under the training seed reserved for weight initialization.
const INIT_STREAM: u64 = 0x1417;

/// How the mixed feature map is turned into the two output channels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    /// 3×3 conv to `C2` channels with ReLU, then a 1×1 conv to 2 channels.
    #[default]
    Projection,
    /// A single 3×3 conv straight to 2 channels.
    Direct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub channels: usize,
    pub blocks: usize,
    pub skip_connection: bool,
    pub post_concat_channels: usize,
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub head: OutputHead,
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.post_concat_channels == 0 {
            return Err(NnError::InvalidConfig("channel counts must be at least 1".into()));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(NnError::InvalidConfig("spatial extents must be at least 1".into()));
        }
        Ok(())
    }

    fn fuse_inputs(&self) -> usize {
        if self.skip_connection {
            2 * self.channels
        } else {
            self.channels
        }
    }
}

/// The four per-token affine maps of one self-attention layer, each `C×C`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionLayerParams<T> {
    pub w_k: Tensor<T>,
    pub b_k: Tensor<T>,
    pub w_q: Tensor<T>,
    pub b_q: Tensor<T>,
    pub w_v: Tensor<T>,
    pub b_v: Tensor<T>,
    pub w_o: Tensor<T>,
    pub b_o: Tensor<T>,
}

/// Tape handles of an [`AttentionLayerParams`], in key/query/value/output order.
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub key: (Var, Var),
    pub query: (Var, Var),
    pub value: (Var, Var),
    pub out: (Var, Var),
}

impl<T: Element> AttentionLayerParams<T> {
    pub fn init(c: usize, rng: &mut RngStream) -> Self {
        let mut w = || Parameter::<T>::uniform_init("", &[c, c], c, rng).value;
        let (w_k, w_q, w_v, w_o) = (w(), w(), w(), w());
        let z = || Tensor::zeros(&[c]);
        Self {
            w_k,
            b_k: z(),
            w_q,
            b_q: z(),
            w_v,
            b_v: z(),
            w_o,
            b_o: z(),
        }
    }

    pub fn register(&self, tape: &mut Tape<T>) -> AttentionVars {
        let mut pair = |w: &Tensor<T>, b: &Tensor<T>| (tape.leaf(w.clone()), tape.leaf(b.clone()));
        AttentionVars {
            key: pair(&self.w_k, &self.b_k),
            query: pair(&self.w_q, &self.b_q),
            value: pair(&self.w_v, &self.b_v),
            out: pair(&self.w_o, &self.b_o),
        }
    }
}

/// Self-attention over the `H·W` spatial tokens of an `(H, W, C)` map.
///
/// With `X` the `C×L` token matrix: `A = Kᵀ·Q`, `A′` its global softmax and
/// the result `FCL_O(V·A′)` mapped back to `(H, W, C)`.
pub fn self_attention<T: Element>(tape: &mut Tape<T>, x: Var, p: &AttentionVars) -> Result<Var> {
    self_attention_shifted(tape, x, p, None)
}

/// [`self_attention`] with an optional constant added to every logit of `A`.
pub fn self_attention_shifted<T: Element>(tape: &mut Tape<T>, x: Var, p: &AttentionVars, shift: Option<T>) -> Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    if shape.len() != 3 {
        return Err(mismatch("self_attention", &shape, &[0, 0, 0]));
    }
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    let tokens = tape.reshape(x, &[h * w, c])?;
    let xt = tape.transpose(tokens)?;
    let k = tape.fcl(xt, p.key.0, p.key.1)?;
    let q = tape.fcl(xt, p.query.0, p.query.1)?;
    let v = tape.fcl(xt, p.value.0, p.value.1)?;
    let kt = tape.transpose(k)?;
    let mut a = tape.matmul(kt, q)?;
    if let Some(s) = shift {
        a = tape.add_scalar(a, s);
    }
    let a = tape.global_softmax(a);
    let z = tape.matmul(v, a)?;
    let o = tape.fcl(z, p.out.0, p.out.1)?;
    let ot = tape.transpose(o)?;
    tape.reshape(ot, &[h, w, c])
}

/// `(M, N)` complex matrix as an `(M, N, 2)` tensor: channel 0 real, channel 1 imaginary.
pub fn pack_complex<T: Element>(h: &ComplexMatrix<T>) -> Tensor<T> {
    let data = h.as_slice().iter().flat_map(|z| [z.re, z.im]).collect();
    Tensor::from_vec(&[h.rows(), h.cols(), 2], data).expect("packed size")
}

pub fn unpack_complex<T: Element>(t: &Tensor<T>) -> Result<ComplexMatrix<T>> {
    if t.rank() != 3 || t.shape()[2] != 2 {
        return Err(mismatch("unpack_complex", t.shape(), &[0, 0, 2]));
    }
    let data = t.data().chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect();
    Ok(ComplexMatrix::from_vec(t.shape()[0], t.shape()[1], data)?)
}

/// Weights of an SC-attention network, flat and in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams<T> {
    pub config: NetConfig,
    pub params: Vec<Parameter<T>>,
}

struct Layout {
    entries: Vec<(String, Vec<usize>, usize)>,
}

impl Layout {
    fn conv(&mut self, name: &str, k: usize, cin: usize, cout: usize) {
        self.entries.push((format!("{name}.weight"), vec![k, k, cin, cout], k * k * cin));
        self.entries.push((format!("{name}.bias"), vec![cout], 0));
    }

    fn fcl(&mut self, name: &str, c: usize) {
        self.entries.push((format!("{name}.weight"), vec![c, c], c));
        self.entries.push((format!("{name}.bias"), vec![c], 0));
    }

    /// Entries `(name, shape, fan_in)` in forward order; `fan_in = 0` marks a bias.
    fn of(cfg: &NetConfig) -> Self {
        let c = cfg.channels;
        let mut l = Self { entries: Vec::new() };
        l.conv("conv_in", 3, 2, c);
        for b in 0..cfg.blocks {
            for m in ["key", "query", "value", "out"] {
                l.fcl(&format!("block{b}.attn.{m}"), c);
            }
            l.conv(&format!("block{b}.conv"), 3, c, c);
        }
        match cfg.head {
            OutputHead::Projection => {
                l.conv("fuse", 3, cfg.fuse_inputs(), cfg.post_concat_channels);
                l.conv("head", 1, cfg.post_concat_channels, 2);
            }
            OutputHead::Direct => l.conv("head", 3, cfg.fuse_inputs(), 2),
        }
        l
    }
}

/// Handles of every network parameter on one tape.
struct Registered {
    vars: Vec<Var>,
    names: Vec<String>,
}

impl Registered {
    fn get(&self, name: &str) -> Var {
        let i = self.names.iter().position(|n| n == name).unwrap_or_else(|| panic!("no parameter {name}"));
        self.vars[i]
    }

    fn conv<T: Element>(&self, tape: &mut Tape<T>, x: Var, name: &str) -> Result<Var> {
        tape.conv2d(x, self.get(&format!("{name}.weight")), self.get(&format!("{name}.bias")))
    }

    fn attention(&self, block: usize) -> AttentionVars {
        let pair = |m: &str| {
            (
                self.get(&format!("block{block}.attn.{m}.weight")),
                self.get(&format!("block{block}.attn.{m}.bias")),
            )
        };
        AttentionVars {
            key: pair("key"),
            query: pair("query"),
            value: pair("value"),
            out: pair("out"),
        }
    }
}

impl<T: Element> NetParams<T> {
    /// Fresh weights: `uniform(±sqrt(6/fan_in))` weights, zero biases.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = RngStream::new(seed, INIT_STREAM);
        let params = Layout::of(&config)
            .entries
            .into_iter()
            .map(|(name, shape, fan_in)| {
                if fan_in == 0 {
                    Parameter::zeros(name, &shape)
                } else {
                    Parameter::uniform_init(name, &shape, fan_in, &mut rng)
                }
            })
            .collect();
        Ok(Self { config, params })
    }

    /// Rebuilds from loose parameters, checking names and shapes against the config.
    pub fn from_params(config: NetConfig, params: Vec<Parameter<T>>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::of(&config);
        if layout.entries.len() != params.len() {
            return Err(NnError::InvalidConfig(format!(
                "expected {} parameters, found {}",
                layout.entries.len(),
                params.len()
            )));
        }
        for ((name, shape, _), p) in layout.entries.iter().zip(&params) {
            if &p.name != name || p.value.shape() != shape.as_slice() {
                return Err(NnError::InvalidConfig(format!(
                    "parameter {} {:?} does not match expected {name} {shape:?}",
                    p.name,
                    p.value.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn cast<U: Element>(&self) -> NetParams<U> {
        NetParams {
            config: self.config.clone(),
            params: self.params.iter().map(Parameter::cast).collect(),
        }
    }

    /// Records the network on `tape` for a packed `(M_t, N_t, 2)` input.
    /// Returns the parameter handles (in `self.params` order) and the output.
    pub fn build(&self, tape: &mut Tape<T>, input: &Tensor<T>) -> Result<(Vec<Var>, Var)> {
        let vars: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.value.clone())).collect();
        let out = self.build_from(tape, &vars, input)?;
        Ok((vars, out))
    }

    /// [`Self::build`] with caller-provided parameter handles, one per entry of `self.params`.
    pub fn build_from(&self, tape: &mut Tape<T>, vars: &[Var], input: &Tensor<T>) -> Result<Var> {
        let cfg = &self.config;
        if input.shape() != [cfg.rows, cfg.cols, 2] {
            return Err(mismatch("forward input", input.shape(), &[cfg.rows, cfg.cols, 2]));
        }
        if vars.len() != self.params.len() {
            return Err(mismatch("parameter handles", &[vars.len()], &[self.params.len()]));
        }
        let reg = Registered {
            vars: vars.to_vec(),
            names: self.params.iter().map(|p| p.name.clone()).collect(),
        };
        let x = tape.leaf(input.clone());
        let s = reg.conv(tape, x, "conv_in")?;
        let s = tape.relu(s);
        let mut y = s;
        for b in 0..cfg.blocks {
            y = self_attention(tape, y, &reg.attention(b))?;
            y = reg.conv(tape, y, &format!("block{b}.conv"))?;
            y = tape.relu(y);
        }
        if cfg.skip_connection {
            y = tape.concat_channels(y, s)?;
        }
        Ok(match cfg.head {
            OutputHead::Projection => {
                let f = reg.conv(tape, y, "fuse")?;
                let f = tape.relu(f);
                reg.conv(tape, f, "head")?
            }
            OutputHead::Direct => reg.conv(tape, y, "head")?,
        })
    }

    pub fn forward_tensor(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let (_, out) = self.build(&mut tape, input)?;
        Ok(tape.value(out).clone())
    }

    pub fn forward(&self, y: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
        unpack_complex(&self.forward_tensor(&pack_complex(y))?)
    }

    /// NMSE of one packed sample and its gradient for every parameter.
    pub fn loss_and_grads(&self, input: &Tensor<T>, label: &Tensor<T>) -> Result<(f64, Vec<Tensor<T>>)> {
        let mut tape = Tape::new();
        let (vars, out) = self.build(&mut tape, input)?;
        let loss = tape.nmse(out, label)?;
        let mut grads = tape.backward(loss);
        let g = vars
            .iter()
            .zip(&self.params)
            .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.value.shape())))
            .collect();
        Ok((tape.value(loss).item().as_f64(), g))
    }
}

/// Mean over samples of `‖pred − label‖² / ‖label‖²`, recorded on the tape.
pub fn nmse_loss<T: Element>(tape: &mut Tape<T>, preds: &[Var], labels: &[Tensor<T>]) -> Result<Var> {
    if preds.len() != labels.len() {
        return Err(mismatch("nmse_loss", &[preds.len()], &[labels.len()]));
    }
    let mut terms = Vec::with_capacity(preds.len());
    for (i, (&p, l)) in preds.iter().zip(labels).enumerate() {
        terms.push(tape.nmse(p, l).map_err(|e| match e {
            NnError::ZeroLabel(_) => NnError::ZeroLabel(i),
            other => other,
        })?);
    }
    tape.mean(&terms)
}

//! Transformer building blocks expressed over the autodiff tape.

use rand::Rng;

use super::autograd::{AttnMask, Graph, Var};
use super::params::{Initializer, ParamId, INIT_STD};

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub(crate) fn new<R: Rng>(init: &mut Initializer<'_, R>, name: &str, d_in: usize, d_out: usize) -> Self {
        Linear {
            weight: init.normal(&format!("{name}.weight"), d_in, d_out, INIT_STD),
            bias: init.constant(&format!("{name}.bias"), 1, d_out, 0.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub(crate) fn new<R: Rng>(init: &mut Initializer<'_, R>, name: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: init.constant(&format!("{name}.gamma"), 1, dim, 1.0),
            beta: init.constant(&format!("{name}.beta"), 1, dim, 0.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta)
    }
}

/// Multi-head attention; queries and keys/values may come from different sequences.
#[derive(Clone, Debug)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
}

impl Attention {
    pub(crate) fn new<R: Rng>(
        init: &mut Initializer<'_, R>,
        name: &str,
        d_model: usize,
        d_context: usize,
        heads: usize,
    ) -> Self {
        Attention {
            q: Linear::new(init, &format!("{name}.q"), d_model, d_model),
            k: Linear::new(init, &format!("{name}.k"), d_context, d_model),
            v: Linear::new(init, &format!("{name}.v"), d_context, d_model),
            out: Linear::new(init, &format!("{name}.out"), d_model, d_model),
            heads,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, context: Var, mask: Option<&AttnMask>) -> Var {
        let q = self.q.forward(g, x);
        let k = self.k.forward(g, context);
        let v = self.v.forward(g, context);
        let d_model = g.value(q).cols();
        let dh = d_model / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * dh, dh);
            let kh = g.slice_cols(k, h * dh, dh);
            let vh = g.slice_cols(v, h * dh, dh);
            let scores = g.matmul_t(qh, kh);
            let scores = g.scale(scores, scale);
            let p = g.softmax(scores, mask);
            outs.push(g.matmul(p, vh));
        }
        let merged = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs) };
        self.out.forward(g, merged)
    }
}

#[derive(Clone, Debug)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub(crate) fn new<R: Rng>(init: &mut Initializer<'_, R>, name: &str, dim: usize, hidden: usize) -> Self {
        Mlp {
            fc1: Linear::new(init, &format!("{name}.fc1"), dim, hidden),
            fc2: Linear::new(init, &format!("{name}.fc2"), hidden, dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.fc1.forward(g, x);
        let h = g.gelu(h);
        self.fc2.forward(g, h)
    }
}

/// Pre-norm self-attention + MLP block with residual connections.
#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub norm1: LayerNorm,
    pub attn: Attention,
    pub norm2: LayerNorm,
    pub mlp: Mlp,
}

impl EncoderBlock {
    pub(crate) fn new<R: Rng>(init: &mut Initializer<'_, R>, name: &str, dim: usize, heads: usize, mlp_ratio: usize) -> Self {
        EncoderBlock {
            norm1: LayerNorm::new(init, &format!("{name}.norm1"), dim),
            attn: Attention::new(init, &format!("{name}.attn"), dim, dim, heads),
            norm2: LayerNorm::new(init, &format!("{name}.norm2"), dim),
            mlp: Mlp::new(init, &format!("{name}.mlp"), dim, dim * mlp_ratio),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, mask: Option<&AttnMask>) -> Var {
        let h = self.norm1.forward(g, x);
        let a = self.attn.forward(g, h, h, mask);
        let x = g.add(x, a);
        let h = self.norm2.forward(g, x);
        let m = self.mlp.forward(g, h);
        g.add(x, m)
    }
}

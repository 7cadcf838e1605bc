//! The dual-path quality network.
//!
//! Alignment path: a frozen per-frame patch transformer encodes every frame;
//! a text encoder cross-attends from the prompt onto each frame separately
//! and pools one token per text-frame pair. Fidelity path: tubelet embedding
//! followed by alternating regular / shifted 3-D window attention. A fusion
//! stack attends from fidelity tokens onto alignment tokens in every other
//! block, and a frozen causal decoder reads the five level-token logits at
//! the final position of `[BOS] visual tokens instruction`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::autograd::{AttnMask, Graph, Var};
use super::config::{ModelConfig, PoolFused};
use super::frames::Clip;
use super::layers::{Attention, EncoderBlock, LayerNorm, Linear, Mlp};
use super::params::{Group, Initializer, ParamId, ParamStore, INIT_STD};
use super::tensor::Matrix;
use super::tokenizer::{Tokenizer, BOS};
use super::ModelError;

pub const LEVEL_WEIGHTS: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];

#[derive(Clone, Debug)]
struct FrameEncoder {
    patch_embed: Linear,
    cls: ParamId,
    pos: ParamId,
    blocks: Vec<EncoderBlock>,
    norm: LayerNorm,
}

#[derive(Clone, Debug)]
struct TextBlock {
    norm1: LayerNorm,
    self_attn: Attention,
    norm_cross: LayerNorm,
    cross_attn: Attention,
    norm2: LayerNorm,
    mlp: Mlp,
}

#[derive(Clone, Debug)]
struct TextEncoder {
    embed: ParamId,
    pos: ParamId,
    blocks: Vec<TextBlock>,
    norm: LayerNorm,
}

#[derive(Clone, Debug)]
struct FidelityEncoder {
    embed: Linear,
    blocks: Vec<EncoderBlock>,
    norm: LayerNorm,
}

#[derive(Clone, Debug)]
struct FusionBlock {
    norm1: LayerNorm,
    self_attn: Attention,
    cross: Option<(LayerNorm, Attention)>,
    norm2: LayerNorm,
    mlp: Mlp,
}

#[derive(Clone, Debug)]
struct Fusion {
    in_fidelity: Linear,
    in_alignment: Linear,
    blocks: Vec<FusionBlock>,
    norm: LayerNorm,
}

#[derive(Clone, Debug)]
struct Decoder {
    embed: ParamId,
    pos: ParamId,
    blocks: Vec<EncoderBlock>,
    norm: LayerNorm,
    lm_head: ParamId,
    lm_bias: ParamId,
}

/// Stage outputs of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub alignment: Var,
    pub fidelity: Var,
    pub fused: Var,
    pub level_logits: Var,
    pub score: Var,
}

#[derive(Clone, Debug)]
pub struct QualityModel {
    config: ModelConfig,
    tokenizer: Tokenizer,
    store: ParamStore,
    instruction: Vec<u32>,
    frame_encoder: FrameEncoder,
    text: TextEncoder,
    fidelity: FidelityEncoder,
    fidelity_masks: Vec<AttnMask>,
    fusion: Fusion,
    projector: Linear,
    decoder: Decoder,
    decoder_mask: AttnMask,
}

impl QualityModel {
    /// Seeded initialization of every parameter group.
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let tokenizer = Tokenizer::new(config.vocab_size);
        let instruction = tokenizer.encode(&config.instruction_text);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let c = &config;
        let heads = c.n_heads;

        let frame_encoder = {
            let mut init = Initializer { store: &mut store, rng: &mut rng, group: Group::FrameEncoder };
            let patch_dim = 3 * c.frame_patch * c.frame_patch;
            FrameEncoder {
                patch_embed: Linear::new(&mut init, "frame_encoder.patch_embed", patch_dim, c.vision_dim),
                cls: init.normal("frame_encoder.cls", 1, c.vision_dim, INIT_STD),
                pos: init.normal("frame_encoder.pos", c.n_frame_patches() + 1, c.vision_dim, INIT_STD),
                blocks: (0..c.n_vision_layers)
                    .map(|i| EncoderBlock::new(&mut init, &format!("frame_encoder.blocks.{i}"), c.vision_dim, heads, c.mlp_ratio))
                    .collect(),
                norm: LayerNorm::new(&mut init, "frame_encoder.norm", c.vision_dim),
            }
        };

        let text = {
            let mut init = Initializer { store: &mut store, rng: &mut rng, group: Group::TextEncoder };
            let d = c.align_dim;
            TextEncoder {
                embed: init.normal("text_encoder.embed", c.vocab_size, d, INIT_STD),
                pos: init.normal("text_encoder.pos", c.max_text_len, d, INIT_STD),
                blocks: (0..c.n_text_layers)
                    .map(|i| {
                        let n = format!("text_encoder.blocks.{i}");
                        TextBlock {
                            norm1: LayerNorm::new(&mut init, &format!("{n}.norm1"), d),
                            self_attn: Attention::new(&mut init, &format!("{n}.self_attn"), d, d, heads),
                            norm_cross: LayerNorm::new(&mut init, &format!("{n}.norm_cross"), d),
                            cross_attn: Attention::new(&mut init, &format!("{n}.cross_attn"), d, c.vision_dim, heads),
                            norm2: LayerNorm::new(&mut init, &format!("{n}.norm2"), d),
                            mlp: Mlp::new(&mut init, &format!("{n}.mlp"), d, d * c.mlp_ratio),
                        }
                    })
                    .collect(),
                norm: LayerNorm::new(&mut init, "text_encoder.norm", d),
            }
        };

        let fidelity = {
            let mut init = Initializer { store: &mut store, rng: &mut rng, group: Group::Fidelity };
            let tubelet = 3 * c.patch_size.iter().product::<usize>();
            FidelityEncoder {
                embed: Linear::new(&mut init, "fidelity.embed", tubelet, c.fidelity_dim),
                blocks: (0..c.n_fidelity_blocks)
                    .map(|i| EncoderBlock::new(&mut init, &format!("fidelity.blocks.{i}"), c.fidelity_dim, heads, c.mlp_ratio))
                    .collect(),
                norm: LayerNorm::new(&mut init, "fidelity.norm", c.fidelity_dim),
            }
        };

        let fusion = {
            let mut init = Initializer { store: &mut store, rng: &mut rng, group: Group::Fusion };
            let d = c.fusion_dim;
            Fusion {
                in_fidelity: Linear::new(&mut init, "fusion.in_fidelity", c.fidelity_dim, d),
                in_alignment: Linear::new(&mut init, "fusion.in_alignment", c.align_dim, d),
                blocks: (0..c.n_fusion_blocks)
                    .map(|i| {
                        let n = format!("fusion.blocks.{i}");
                        let cross = (i % 2 == c.cross_attention_parity).then(|| {
                            (
                                LayerNorm::new(&mut init, &format!("{n}.norm_cross"), d),
                                Attention::new(&mut init, &format!("{n}.cross_attn"), d, d, heads),
                            )
                        });
                        FusionBlock {
                            norm1: LayerNorm::new(&mut init, &format!("{n}.norm1"), d),
                            self_attn: Attention::new(&mut init, &format!("{n}.self_attn"), d, d, heads),
                            cross,
                            norm2: LayerNorm::new(&mut init, &format!("{n}.norm2"), d),
                            mlp: Mlp::new(&mut init, &format!("{n}.mlp"), d, d * c.mlp_ratio),
                        }
                    })
                    .collect(),
                norm: LayerNorm::new(&mut init, "fusion.norm", d),
            }
        };

        let projector = {
            let mut init = Initializer { store: &mut store, rng: &mut rng, group: Group::Projector };
            Linear::new(&mut init, "projector", c.fusion_dim, c.decoder_dim)
        };

        let seq_len = 1 + c.n_visual_tokens() + instruction.len();
        let decoder = {
            let mut init = Initializer { store: &mut store, rng: &mut rng, group: Group::Decoder };
            let d = c.decoder_dim;
            Decoder {
                embed: init.normal("decoder.embed", c.vocab_size, d, INIT_STD),
                pos: init.normal("decoder.pos", seq_len, d, INIT_STD),
                blocks: (0..c.n_decoder_layers)
                    .map(|i| EncoderBlock::new(&mut init, &format!("decoder.blocks.{i}"), d, heads, c.mlp_ratio))
                    .collect(),
                norm: LayerNorm::new(&mut init, "decoder.norm", d),
                lm_head: init.normal("decoder.lm_head", c.vocab_size, d, INIT_STD),
                lm_bias: init.constant("decoder.lm_bias", c.vocab_size, 1, 0.0),
            }
        };

        let fidelity_masks = if c.shifted_windows {
            vec![window_mask(c, false), window_mask(c, true)]
        } else {
            vec![window_mask(c, false)]
        };

        Ok(QualityModel {
            tokenizer,
            store,
            instruction,
            frame_encoder,
            text,
            fidelity,
            fidelity_masks,
            fusion,
            projector,
            decoder,
            decoder_mask: AttnMask::causal(seq_len),
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Bias of the level-token head for level `level` (0 = bad … 4 = excellent).
    pub fn level_bias_mut(&mut self, level: usize) -> &mut f64 {
        let row = self.config.level_token_ids[level] as usize;
        &mut self.store.value_mut(self.decoder.lm_bias).data_mut()[row]
    }

    /// Number of cross-attention layers in the fusion stack.
    pub fn fusion_cross_attention_count(&self) -> usize {
        self.fusion.blocks.iter().filter(|b| b.cross.is_some()).count()
    }

    /// Output projections of every fusion cross-attention layer.
    pub fn fusion_cross_output_params(&self) -> Vec<ParamId> {
        self.fusion
            .blocks
            .iter()
            .filter_map(|b| b.cross.as_ref())
            .flat_map(|(_, a)| [a.out.weight, a.out.bias])
            .collect()
    }

    pub(crate) fn check_clip(&self, clip: &Clip) -> Result<(), ModelError> {
        let c = &self.config;
        if clip.n_frames() != c.n_frames || clip.size() != c.frame_size {
            return Err(ModelError::Shape(format!(
                "clip is {}×{}×{}, model expects {}×{}×{}",
                clip.n_frames(),
                clip.size(),
                clip.size(),
                c.n_frames,
                c.frame_size,
                c.frame_size
            )));
        }
        Ok(())
    }

    fn text_tokens(&self, text: &str) -> Vec<usize> {
        let mut ids = vec![BOS as usize];
        ids.extend(self.tokenizer.encode(text).into_iter().map(|t| t as usize));
        ids.truncate(self.config.max_text_len);
        ids
    }

    fn encode_frame(&self, g: &mut Graph, clip: &Clip, t: usize) -> Var {
        let c = &self.config;
        let p = c.frame_patch;
        let per_side = c.frame_size / p;
        let mut patches = Matrix::zeros(per_side * per_side, 3 * p * p);
        for py in 0..per_side {
            for px in 0..per_side {
                let row = patches.row_mut(py * per_side + px);
                let mut k = 0;
                for ch in 0..3 {
                    for dy in 0..p {
                        for dx in 0..p {
                            row[k] = clip.at(t, ch, py * p + dy, px * p + dx);
                            k += 1;
                        }
                    }
                }
            }
        }
        let fe = &self.frame_encoder;
        let x = g.constant(patches);
        let x = fe.patch_embed.forward(g, x);
        let cls = g.param(fe.cls);
        let x = g.concat_rows(&[cls, x]);
        let rows: Vec<usize> = (0..per_side * per_side + 1).collect();
        let pos = g.param_rows(fe.pos, &rows);
        let mut x = g.add(x, pos);
        for block in &fe.blocks {
            x = block.forward(g, x, None);
        }
        fe.norm.forward(g, x)
    }

    /// Alignment feature: one pooled token per text-frame pair, rows in frame order.
    pub fn encode_alignment(&self, g: &mut Graph, text: &str, clip: &Clip) -> Result<Var, ModelError> {
        self.check_clip(clip)?;
        let tokens = self.text_tokens(text);
        let positions: Vec<usize> = (0..tokens.len()).collect();
        let mut pooled = Vec::with_capacity(clip.n_frames());
        for t in 0..clip.n_frames() {
            let frame = self.encode_frame(g, clip, t);
            let emb = g.param_rows(self.text.embed, &tokens);
            let pos = g.param_rows(self.text.pos, &positions);
            let mut x = g.add(emb, pos);
            for b in &self.text.blocks {
                let h = b.norm1.forward(g, x);
                let a = b.self_attn.forward(g, h, h, None);
                x = g.add(x, a);
                let h = b.norm_cross.forward(g, x);
                let a = b.cross_attn.forward(g, h, frame, None);
                x = g.add(x, a);
                let h = b.norm2.forward(g, x);
                let m = b.mlp.forward(g, h);
                x = g.add(x, m);
            }
            let x = self.text.norm.forward(g, x);
            pooled.push(g.gather_rows(x, &[0]));
        }
        Ok(g.concat_rows(&pooled))
    }

    /// Fidelity feature: `S × fidelity_dim` tubelet tokens in `(t, y, x)` order.
    pub fn encode_fidelity(&self, g: &mut Graph, clip: &Clip) -> Result<Var, ModelError> {
        self.check_clip(clip)?;
        let c = &self.config;
        let [pt, ph, pw] = c.patch_size;
        let [gt, gh, gw] = c.fidelity_grid();
        let mut tubelets = Matrix::zeros(gt * gh * gw, 3 * pt * ph * pw);
        for it in 0..gt {
            for iy in 0..gh {
                for ix in 0..gw {
                    let row = tubelets.row_mut((it * gh + iy) * gw + ix);
                    let mut k = 0;
                    for ch in 0..3 {
                        for dt in 0..pt {
                            for dy in 0..ph {
                                for dx in 0..pw {
                                    row[k] = clip.at(it * pt + dt, ch, iy * ph + dy, ix * pw + dx);
                                    k += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
        let x = g.constant(tubelets);
        let mut x = self.fidelity.embed.forward(g, x);
        for (i, block) in self.fidelity.blocks.iter().enumerate() {
            let mask = &self.fidelity_masks[i % self.fidelity_masks.len()];
            x = block.forward(g, x, Some(mask));
        }
        Ok(self.fidelity.norm.forward(g, x))
    }

    pub fn fuse(&self, g: &mut Graph, fidelity: Var, alignment: Var) -> Result<Var, ModelError> {
        let c = &self.config;
        if g.value(fidelity).cols() != c.fidelity_dim || g.value(alignment).cols() != c.align_dim {
            return Err(ModelError::Shape(format!(
                "fuse expects widths ({}, {}), got ({}, {})",
                c.fidelity_dim,
                c.align_dim,
                g.value(fidelity).cols(),
                g.value(alignment).cols()
            )));
        }
        let mut x = self.fusion.in_fidelity.forward(g, fidelity);
        let context = self.fusion.in_alignment.forward(g, alignment);
        for b in &self.fusion.blocks {
            let h = b.norm1.forward(g, x);
            let a = b.self_attn.forward(g, h, h, None);
            x = g.add(x, a);
            if let Some((norm, attn)) = &b.cross {
                let h = norm.forward(g, x);
                let a = attn.forward(g, h, context, None);
                x = g.add(x, a);
            }
            let h = b.norm2.forward(g, x);
            let m = b.mlp.forward(g, h);
            x = g.add(x, m);
        }
        Ok(self.fusion.norm.forward(g, x))
    }

    /// Level-token logits at the final decoder position and their expected level.
    pub fn regress(&self, g: &mut Graph, fused: Var) -> Result<(Var, Var), ModelError> {
        let c = &self.config;
        if g.value(fused).cols() != c.fusion_dim {
            return Err(ModelError::Shape(format!(
                "regress expects width {}, got {}",
                c.fusion_dim,
                g.value(fused).cols()
            )));
        }
        let visual = self.projector.forward(g, fused);
        let visual = match c.pool_fused {
            PoolFused::None => visual,
            PoolFused::Mean => g.mean_rows(visual),
        };
        let d = &self.decoder;
        let bos = g.param_rows(d.embed, &[BOS as usize]);
        let instr: Vec<usize> = self.instruction.iter().map(|&t| t as usize).collect();
        let mut parts = vec![bos, visual];
        if !instr.is_empty() {
            parts.push(g.param_rows(d.embed, &instr));
        }
        let seq = g.concat_rows(&parts);
        let len = g.value(seq).rows();
        if len != self.decoder_mask.shape().0 {
            return Err(ModelError::Shape(format!(
                "decoder sequence has {len} positions, expected {}",
                self.decoder_mask.shape().0
            )));
        }
        let positions: Vec<usize> = (0..len).collect();
        let pos = g.param_rows(d.pos, &positions);
        let mut x = g.add(seq, pos);
        for block in &d.blocks {
            x = block.forward(g, x, Some(&self.decoder_mask));
        }
        let last = g.gather_rows(x, &[len - 1]);
        let last = d.norm.forward(g, last);
        let level_rows: Vec<usize> = c.level_token_ids.iter().map(|&t| t as usize).collect();
        let head = g.param_rows(d.lm_head, &level_rows);
        let bias = g.param_rows(d.lm_bias, &level_rows);
        let bias = g.transpose(bias);
        let logits = g.matmul_t(last, head);
        let logits = g.add(logits, bias);
        let score = g.expectation(logits, &LEVEL_WEIGHTS);
        Ok((logits, score))
    }

    pub fn forward(&self, g: &mut Graph, text: &str, clip: &Clip) -> Result<ForwardVars, ModelError> {
        let alignment = self.encode_alignment(g, text, clip)?;
        let fidelity = self.encode_fidelity(g, clip)?;
        let fused = self.fuse(g, fidelity, alignment)?;
        let (level_logits, score) = self.regress(g, fused)?;
        Ok(ForwardVars { alignment, fidelity, fused, level_logits, score })
    }
}

/// Window membership for the fidelity encoder's 3-D window attention.
///
/// Two tokens attend to each other iff the (possibly cyclically shifted)
/// grid puts them in the same window and, for shifted windows, in the same
/// contiguous region of the original grid. The grid is implicitly padded up
/// to a window multiple; padded positions hold no tokens.
pub fn window_mask(config: &ModelConfig, shifted: bool) -> AttnMask {
    let grid = config.fidelity_grid();
    let win = config.effective_window();
    let shift = if shifted { config.shift_size() } else { [0; 3] };
    let padded: [usize; 3] = std::array::from_fn(|i| grid[i].div_ceil(win[i]) * win[i]);
    let n = grid.iter().product::<usize>();
    let keys: Vec<([usize; 3], [usize; 3])> = (0..n)
        .map(|idx| {
            let coord = [idx / (grid[1] * grid[2]), (idx / grid[2]) % grid[1], idx % grid[2]];
            let mut window = [0; 3];
            let mut region = [0; 3];
            for a in 0..3 {
                let p = (coord[a] + padded[a] - shift[a]) % padded[a];
                window[a] = p / win[a];
                region[a] = if shift[a] == 0 || p < padded[a] - win[a] {
                    0
                } else if p < padded[a] - shift[a] {
                    1
                } else {
                    2
                };
            }
            (window, region)
        })
        .collect();
    AttnMask::from_fn(n, n, |r, c| keys[r] == keys[c])
}

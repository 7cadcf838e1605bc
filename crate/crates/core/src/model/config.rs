use serde::{Deserialize, Serialize};

use super::tokenizer::LEVEL_IDS;
use super::ModelError;

pub const DEFAULT_INSTRUCTION: &str = "Please rate the quality of this video.";

/// How fused tokens are handed to the decoder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolFused {
    /// Pass the whole fused token sequence.
    #[default]
    None,
    /// Average fused tokens into a single visual token.
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_frames: usize,
    pub frame_size: usize,
    /// Square patch size of the per-frame encoder.
    pub frame_patch: usize,
    /// Tubelet size `(t, h, w)` of the fidelity encoder.
    pub patch_size: [usize; 3],
    pub vision_dim: usize,
    pub align_dim: usize,
    pub fidelity_dim: usize,
    pub fusion_dim: usize,
    pub decoder_dim: usize,
    pub n_heads: usize,
    pub mlp_ratio: usize,
    /// Attention window `(t, h, w)` over the tubelet grid.
    pub window_size: [usize; 3],
    pub shifted_windows: bool,
    pub n_vision_layers: usize,
    pub n_text_layers: usize,
    pub n_fidelity_blocks: usize,
    pub n_fusion_blocks: usize,
    pub n_decoder_layers: usize,
    /// Fusion blocks whose index has this parity get cross-attention.
    pub cross_attention_parity: usize,
    pub pool_fused: PoolFused,
    pub vocab_size: usize,
    pub max_text_len: usize,
    pub level_token_ids: [u32; 5],
    pub instruction_text: String,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::toy()
    }
}

impl ModelConfig {
    /// Desk-scale configuration: 8 frames of 32×32.
    pub fn toy() -> Self {
        ModelConfig {
            n_frames: 8,
            frame_size: 32,
            frame_patch: 8,
            patch_size: [2, 4, 4],
            vision_dim: 32,
            align_dim: 32,
            fidelity_dim: 32,
            fusion_dim: 32,
            decoder_dim: 32,
            n_heads: 2,
            mlp_ratio: 2,
            window_size: [2, 4, 4],
            shifted_windows: true,
            n_vision_layers: 1,
            n_text_layers: 1,
            n_fidelity_blocks: 2,
            n_fusion_blocks: 2,
            n_decoder_layers: 2,
            cross_attention_parity: 0,
            pool_fused: PoolFused::None,
            vocab_size: 1024,
            max_text_len: 32,
            level_token_ids: LEVEL_IDS,
            instruction_text: DEFAULT_INSTRUCTION.to_string(),
            seed: 0,
        }
    }

    /// Shapes matching the full-size backbones (224×224 input, 12 fusion blocks).
    pub fn full_scale() -> Self {
        ModelConfig {
            frame_size: 224,
            frame_patch: 16,
            patch_size: [2, 4, 4],
            vision_dim: 1024,
            align_dim: 768,
            fidelity_dim: 768,
            fusion_dim: 768,
            decoder_dim: 4096,
            n_heads: 16,
            mlp_ratio: 4,
            window_size: [8, 7, 7],
            n_vision_layers: 24,
            n_text_layers: 12,
            n_fidelity_blocks: 12,
            n_fusion_blocks: 12,
            n_decoder_layers: 32,
            vocab_size: 32000,
            ..ModelConfig::toy()
        }
    }

    /// Applies a JSON object of field overrides on top of `self`.
    pub fn with_overrides(&self, overrides: &serde_json::Value) -> Result<Self, ModelError> {
        let mut base = serde_json::to_value(self).map_err(|e| ModelError::Config(e.to_string()))?;
        let (Some(obj), Some(over)) = (base.as_object_mut(), overrides.as_object()) else {
            return Err(ModelError::Config("overrides must be a JSON object".into()));
        };
        for (k, v) in over {
            obj.insert(k.clone(), v.clone());
        }
        let cfg: ModelConfig = serde_json::from_value(base).map_err(|e| ModelError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn fidelity_grid(&self) -> [usize; 3] {
        [
            self.n_frames / self.patch_size[0],
            self.frame_size / self.patch_size[1],
            self.frame_size / self.patch_size[2],
        ]
    }

    pub fn n_fidelity_tokens(&self) -> usize {
        self.fidelity_grid().iter().product()
    }

    /// Window clamped to the token grid.
    pub fn effective_window(&self) -> [usize; 3] {
        let grid = self.fidelity_grid();
        std::array::from_fn(|i| self.window_size[i].min(grid[i]))
    }

    /// Half-window shift per axis; axes covered by a single window are not shifted.
    pub fn shift_size(&self) -> [usize; 3] {
        let grid = self.fidelity_grid();
        let win = self.effective_window();
        std::array::from_fn(|i| if win[i] < grid[i] { win[i] / 2 } else { 0 })
    }

    pub fn n_frame_patches(&self) -> usize {
        let per_side = self.frame_size / self.frame_patch;
        per_side * per_side
    }

    pub fn n_visual_tokens(&self) -> usize {
        match self.pool_fused {
            PoolFused::None => self.n_fidelity_tokens(),
            PoolFused::Mean => 1,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |msg: String| Err(ModelError::Config(msg));
        let dims = [
            ("n_frames", self.n_frames),
            ("frame_size", self.frame_size),
            ("frame_patch", self.frame_patch),
            ("vision_dim", self.vision_dim),
            ("align_dim", self.align_dim),
            ("fidelity_dim", self.fidelity_dim),
            ("fusion_dim", self.fusion_dim),
            ("decoder_dim", self.decoder_dim),
            ("n_heads", self.n_heads),
            ("mlp_ratio", self.mlp_ratio),
            ("n_fusion_blocks", self.n_fusion_blocks),
            ("max_text_len", self.max_text_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return err(format!("{name} must be positive"));
            }
        }
        if self.patch_size.contains(&0) || self.window_size.contains(&0) {
            return err("patch_size and window_size entries must be positive".into());
        }
        for (name, d) in [
            ("vision_dim", self.vision_dim),
            ("align_dim", self.align_dim),
            ("fidelity_dim", self.fidelity_dim),
            ("fusion_dim", self.fusion_dim),
            ("decoder_dim", self.decoder_dim),
        ] {
            if d % self.n_heads != 0 {
                return err(format!("{name} = {d} is not divisible by n_heads = {}", self.n_heads));
            }
        }
        if self.frame_size % self.frame_patch != 0 {
            return err(format!("frame_patch {} does not divide frame_size {}", self.frame_patch, self.frame_size));
        }
        let input = [self.n_frames, self.frame_size, self.frame_size];
        for i in 0..3 {
            if input[i] % self.patch_size[i] != 0 {
                return err(format!("patch_size {:?} does not divide input {:?}", self.patch_size, input));
            }
        }
        if self.cross_attention_parity > 1 {
            return err("cross_attention_parity must be 0 or 1".into());
        }
        if self.cross_attention_parity == 1 && self.n_fusion_blocks < 2 {
            return err("cross_attention_parity 1 needs at least two fusion blocks".into());
        }
        let mut ids = self.level_token_ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != 5 {
            return err("level_token_ids must be distinct".into());
        }
        if ids.iter().any(|&i| i as usize >= self.vocab_size) {
            return err("level_token_ids must be inside the vocabulary".into());
        }
        if self.vocab_size <= 8 {
            return err("vocab_size must exceed the 8 reserved ids".into());
        }
        Ok(())
    }
}

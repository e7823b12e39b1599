use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{BN_EPSILON, BN_MOMENTUM};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub window: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StemLayer {
    Conv(ConvSpec),
    MaxPool(PoolSpec),
}

/// Channel layout of one inception module.
///
/// Branches: a standalone 1×1 conv; 1×1 → 3×3; 1×1 → 3×3 → 3×3 (standing in
/// for a 5×5); and max-pool → 1×1 projection. With `stride == 2` the module is
/// the reduced variant: the 3×3 convs and the pool are strided, the
/// standalone 1×1 branch is dropped and the pool branch passes its input
/// channels through without projection.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InceptionSpec {
    pub in_channels: usize,
    pub out_1x1: usize,
    pub reduce_3x3: usize,
    pub out_3x3: usize,
    pub reduce_double_3x3: usize,
    pub out_double_3x3: usize,
    pub pool_proj: usize,
    pub stride: usize,
    pub include_1x1_output: bool,
}

impl InceptionSpec {
    pub fn is_reduced(&self) -> bool {
        self.stride == 2
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(format!("inception spec {self:?}: {msg}")));
        if self.stride != 1 && self.stride != 2 {
            return fail("stride must be 1 or 2");
        }
        if self.stride == 2 && self.include_1x1_output {
            return fail("a stride-2 (reduced) module has no standalone 1x1 output");
        }
        if self.stride == 2 && self.pool_proj != 0 {
            return fail("the reduced module's pool branch has no projection");
        }
        if self.include_1x1_output && self.out_1x1 == 0 {
            return fail("1x1 branch present but has zero channels");
        }
        if self.stride == 1 && self.pool_proj == 0 {
            return fail("pool projection needs at least one channel");
        }
        if self.in_channels == 0
            || self.reduce_3x3 == 0
            || self.out_3x3 == 0
            || self.reduce_double_3x3 == 0
            || self.out_double_3x3 == 0
        {
            return fail("branch channel counts must be positive");
        }
        Ok(())
    }

    /// Sum of the surviving branch widths.
    pub fn out_channels(&self) -> usize {
        let one = if self.include_1x1_output {
            self.out_1x1
        } else {
            0
        };
        let pool = if self.is_reduced() {
            self.in_channels
        } else {
            self.pool_proj
        };
        one + self.out_3x3 + self.out_double_3x3 + pool
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// `(channels, height, width)` of one input image.
    pub input_shape: [usize; 3],
    pub stem: Vec<StemLayer>,
    pub modules: Vec<InceptionSpec>,
    pub tail_pool: PoolSpec,
    pub tail_conv: ConvSpec,
    pub embed_dim: usize,
    pub num_classes: usize,
    #[serde(default = "default_bn_momentum")]
    pub bn_momentum: f64,
    #[serde(default = "default_bn_epsilon")]
    pub bn_epsilon: f64,
}

fn default_bn_momentum() -> f64 {
    BN_MOMENTUM
}

fn default_bn_epsilon() -> f64 {
    BN_EPSILON
}

fn conv(out_channels: usize, kernel: usize, stride: usize, padding: usize) -> ConvSpec {
    ConvSpec {
        out_channels,
        kernel,
        stride,
        padding,
    }
}

fn pool(window: usize, stride: usize, padding: usize) -> PoolSpec {
    PoolSpec {
        window,
        stride,
        padding,
    }
}

#[allow(clippy::too_many_arguments)]
fn module(
    in_channels: usize,
    out_1x1: usize,
    reduce_3x3: usize,
    out_3x3: usize,
    reduce_double_3x3: usize,
    out_double_3x3: usize,
    pool_proj: usize,
    stride: usize,
) -> InceptionSpec {
    InceptionSpec {
        in_channels,
        out_1x1,
        reduce_3x3,
        out_3x3,
        reduce_double_3x3,
        out_double_3x3,
        pool_proj,
        stride,
        include_1x1_output: stride == 1,
    }
}

impl NetworkConfig {
    /// The default desk-scale profile for 3×128×64 crops.
    ///
    /// Stem: 3×3/2 conv → 16, 3×3 conv → 24, 2×2/2 max pool. Then inception,
    /// inception, reduced inception, inception with 64, 64, 96, 96 output
    /// channels; a 2×2/2 max pool and a 1×1 conv to 128 channels; a 256-d
    /// tanh embedding and the softmax head.
    pub fn mini(num_classes: usize) -> Self {
        Self::mini_for_input(num_classes, 128, 64)
    }

    /// The mini profile with a different input resolution.
    pub fn mini_for_input(num_classes: usize, height: usize, width: usize) -> Self {
        Self {
            input_shape: [3, height, width],
            stem: vec![
                StemLayer::Conv(conv(16, 3, 2, 1)),
                StemLayer::Conv(conv(24, 3, 1, 1)),
                StemLayer::MaxPool(pool(2, 2, 0)),
            ],
            modules: vec![
                module(24, 16, 16, 24, 8, 12, 12, 1),
                module(64, 16, 16, 24, 8, 12, 12, 1),
                module(64, 0, 16, 16, 8, 16, 0, 2),
                module(96, 24, 24, 32, 12, 16, 24, 1),
            ],
            tail_pool: pool(2, 2, 0),
            tail_conv: conv(128, 1, 1, 0),
            embed_dim: 256,
            num_classes,
            bn_momentum: BN_MOMENTUM,
            bn_epsilon: BN_EPSILON,
        }
    }

    /// A very small network with the same topology, for gradient checks:
    /// 3×16×8 input, embedding width 8.
    pub fn tiny(num_classes: usize) -> Self {
        Self {
            input_shape: [3, 16, 8],
            stem: vec![
                StemLayer::Conv(conv(4, 3, 1, 1)),
                StemLayer::MaxPool(pool(2, 2, 0)),
            ],
            modules: vec![
                module(4, 2, 2, 2, 2, 2, 2, 1),
                module(8, 0, 2, 2, 2, 2, 0, 2),
                module(12, 2, 2, 2, 2, 2, 2, 1),
            ],
            tail_pool: pool(2, 2, 0),
            // 3×3 with zero padding: behind a 1×1 conv, train-mode batch norm
            // cancels uniform shifts and leaves exactly-zero gradients that
            // finite differences resolve only to rounding noise.
            tail_conv: conv(6, 3, 1, 1),
            embed_dim: 8,
            num_classes,
            bn_momentum: BN_MOMENTUM,
            bn_epsilon: BN_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_shape.contains(&0) {
            return Err(Error::Config("input shape has a zero dimension".into()));
        }
        if self.embed_dim < 2 {
            return Err(Error::Config("embed_dim must be at least 2".into()));
        }
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) || self.bn_epsilon <= 0.0 {
            return Err(Error::Config(
                "batch-norm momentum/epsilon out of range".into(),
            ));
        }
        for m in &self.modules {
            m.validate()?;
        }
        Ok(())
    }
}

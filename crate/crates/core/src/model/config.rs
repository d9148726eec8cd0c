//! Architecture hyper-parameters.

use std::fmt;

use crate::error::{Error, Result};

/// The two coding branches: luminance (Y) and chrominance (U, V).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    Luma,
    Chroma,
}

impl Branch {
    pub const ALL: [Branch; 2] = [Branch::Luma, Branch::Chroma];

    /// Image planes handled by the branch.
    pub fn planes(self) -> usize {
        match self {
            Branch::Luma => 1,
            Branch::Chroma => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::Luma => "lum",
            Branch::Chroma => "chroma",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Channel counts and kernel sizes of both branches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub lum_channels: usize,
    pub chroma_channels: usize,
    pub lum_hyper_channels: usize,
    pub chroma_hyper_channels: usize,
    /// Kernel of every main-transform (de)convolution.
    pub kernel: usize,
    /// Kernel of the first hyper-analysis / last hyper-synthesis layer.
    pub hyper_kernel_first: usize,
    /// Kernel of the strided hyper layers.
    pub hyper_kernel: usize,
}

/// Downsampling stages of each main transform, each with stride 2.
pub const MAIN_STAGES: usize = 4;
/// Strides of the hyper-analysis layers.
pub const HYPER_STRIDES: [usize; 3] = [1, 2, 2];

impl ModelConfig {
    /// Full-size preset: 128 luminance and 64 chrominance channels.
    pub fn full() -> Self {
        Self {
            lum_channels: 128,
            chroma_channels: 64,
            lum_hyper_channels: 128,
            chroma_hyper_channels: 64,
            kernel: 5,
            hyper_kernel_first: 3,
            hyper_kernel: 5,
        }
    }

    /// Small preset for fast experiments and tests.
    pub fn tiny() -> Self {
        Self {
            lum_channels: 32,
            chroma_channels: 16,
            lum_hyper_channels: 16,
            chroma_hyper_channels: 16,
            ..Self::full()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "tiny" => Ok(Self::tiny()),
            other => Err(Error::usage(format!("unknown preset {other:?} (expected full or tiny)"))),
        }
    }

    /// Product of the analysis strides.
    pub fn downsample_factor(&self) -> usize {
        1 << MAIN_STAGES
    }

    pub fn channels(&self, branch: Branch) -> usize {
        match branch {
            Branch::Luma => self.lum_channels,
            Branch::Chroma => self.chroma_channels,
        }
    }

    pub fn hyper_channels(&self, branch: Branch) -> usize {
        match branch {
            Branch::Luma => self.lum_hyper_channels,
            Branch::Chroma => self.chroma_hyper_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [self.lum_channels, self.chroma_channels, self.lum_hyper_channels, self.chroma_hyper_channels];
        if counts.contains(&0) || [self.kernel, self.hyper_kernel_first, self.hyper_kernel].contains(&0) {
            return Err(Error::usage("channel counts and kernel sizes must be positive"));
        }
        if self.chroma_channels >= self.lum_channels {
            return Err(Error::usage("chrominance must have fewer channels than luminance"));
        }
        Ok(())
    }

    /// Latent spatial size for a padded image size.
    pub fn latent_size(&self, height: usize, width: usize) -> (usize, usize) {
        let f = self.downsample_factor();
        (height / f, width / f)
    }

    /// Hyperlatent spatial size for a latent size.
    pub fn hyper_size(&self, height: usize, width: usize) -> (usize, usize) {
        HYPER_STRIDES.iter().fold((height, width), |(h, w), &s| (h.div_ceil(s), w.div_ceil(s)))
    }

    /// 16-bit identifier of the architecture, stored in bitstreams.
    pub fn config_id(&self) -> u16 {
        let fields = [
            self.lum_channels,
            self.chroma_channels,
            self.lum_hyper_channels,
            self.chroma_hyper_channels,
            self.kernel,
            self.hyper_kernel_first,
            self.hyper_kernel,
        ];
        // FNV-1a over the little-endian fields, folded to 16 bits.
        let mut h: u32 = 0x811C_9DC5;
        for f in fields {
            for b in (f as u32).to_le_bytes() {
                h ^= b as u32;
                h = h.wrapping_mul(0x0100_0193);
            }
        }
        ((h >> 16) ^ (h & 0xFFFF)) as u16
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lum {} / chroma {} channels, hyper {} / {}",
            self.lum_channels, self.chroma_channels, self.lum_hyper_channels, self.chroma_hyper_channels
        )
    }
}

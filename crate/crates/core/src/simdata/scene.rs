use std::fmt;
use std::str::FromStr;

use super::{
    add_noise_snr, blmm_mix, lmm_mix, pnmm_mix, sample_dirichlet_abundances, sample_grf_abundances, synth_endmembers,
    AbundanceMatrix, EndmemberMatrix, HsiCube,
};
use crate::error::{Error, Result};

/// Forward model used to synthesize pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixingModel {
    Lmm,
    Blmm,
    /// Post-nonlinear with elementwise exponent ξ.
    Pnmm {
        xi: f64,
    },
}

impl MixingModel {
    pub const DEFAULT_XI: f64 = 0.7;

    pub fn name(&self) -> &'static str {
        match self {
            MixingModel::Lmm => "lmm",
            MixingModel::Blmm => "blmm",
            MixingModel::Pnmm { .. } => "pnmm",
        }
    }

    pub fn mix(&self, m: &EndmemberMatrix, a: &AbundanceMatrix) -> Result<HsiCube> {
        match *self {
            MixingModel::Lmm => lmm_mix(m.view(), a.view(), a.grid()),
            MixingModel::Blmm => blmm_mix(m.view(), a.view(), a.grid()),
            MixingModel::Pnmm { xi } => pnmm_mix(m.view(), a.view(), xi, a.grid()),
        }
    }
}

impl FromStr for MixingModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lmm" => Ok(MixingModel::Lmm),
            "blmm" => Ok(MixingModel::Blmm),
            "pnmm" => Ok(MixingModel::Pnmm { xi: Self::DEFAULT_XI }),
            other => Err(Error::invalid(format!("unknown mixing model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AbundanceSampler {
    Dirichlet {
        concentration: f64,
    },
    /// Gaussian random field; requires a grid layout.
    Grf {
        corr_len: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelLayout {
    Count(usize),
    Grid { rows: usize, cols: usize },
}

impl PixelLayout {
    pub fn pixels(&self) -> usize {
        match *self {
            PixelLayout::Count(n) => n,
            PixelLayout::Grid { rows, cols } => rows * cols,
        }
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        match *self {
            PixelLayout::Count(_) => None,
            PixelLayout::Grid { rows, cols } => Some((rows, cols)),
        }
    }
}

/// Everything needed to regenerate a synthetic scene bit-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub layout: PixelLayout,
    pub bands: usize,
    pub endmembers: usize,
    pub sampler: AbundanceSampler,
    pub model: MixingModel,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

/// Named scene presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 10⁴ Dirichlet pixels, 224 bands, 3 endmembers.
    Dc1,
    /// 50 × 50 random-field grid, 224 bands, 3 endmembers.
    Dc2,
    /// DC1 protocol at 2500 pixels.
    Dc1Small,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Dc1 => "dc1",
            Preset::Dc2 => "dc2",
            Preset::Dc1Small => "dc1-small",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dc1" => Ok(Preset::Dc1),
            "dc2" => Ok(Preset::Dc2),
            "dc1-small" => Ok(Preset::Dc1Small),
            other => Err(Error::invalid(format!("unknown preset '{other}'"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const DEFAULT_BANDS: usize = 224;
pub const DEFAULT_ENDMEMBERS: usize = 3;
pub const DEFAULT_SNR_DB: f64 = 20.0;
pub const DEFAULT_CORR_LEN: f64 = 5.0;

impl SceneSpec {
    pub fn preset(preset: Preset, model: MixingModel, snr_db: Option<f64>, seed: u64) -> Self {
        let (layout, sampler) = match preset {
            Preset::Dc1 => (
                PixelLayout::Count(10_000),
                AbundanceSampler::Dirichlet { concentration: 1.0 },
            ),
            Preset::Dc1Small => (
                PixelLayout::Count(2_500),
                AbundanceSampler::Dirichlet { concentration: 1.0 },
            ),
            Preset::Dc2 => (
                PixelLayout::Grid { rows: 50, cols: 50 },
                AbundanceSampler::Grf {
                    corr_len: DEFAULT_CORR_LEN,
                },
            ),
        };
        Self {
            layout,
            bands: DEFAULT_BANDS,
            endmembers: DEFAULT_ENDMEMBERS,
            sampler,
            model,
            snr_db,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layout.pixels() == 0 {
            return Err(Error::invalid("scene needs at least one pixel"));
        }
        if self.endmembers == 0 || self.bands <= self.endmembers {
            return Err(Error::invalid(format!(
                "scene needs bands > endmembers >= 1, got L={}, P={}",
                self.bands, self.endmembers
            )));
        }
        if let MixingModel::Pnmm { xi } = self.model {
            if !(xi > 0.0) {
                return Err(Error::invalid(format!("PNMM exponent must be positive, got {xi}")));
            }
        }
        if matches!(self.sampler, AbundanceSampler::Grf { .. }) && self.layout.grid().is_none() {
            return Err(Error::invalid("random-field abundances need a grid layout"));
        }
        Ok(())
    }
}

/// A generated scene with its ground truth.
#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    pub endmembers: EndmemberMatrix,
    pub abundances: AbundanceMatrix,
    pub clean: HsiCube,
    pub cube: HsiCube,
}

/// Generates a scene. Supplied endmembers replace the synthetic ones and must
/// match the requested band and endmember counts.
pub fn generate_scene(spec: &SceneSpec, endmembers: Option<EndmemberMatrix>) -> Result<Scene> {
    spec.validate()?;
    let endmembers = match endmembers {
        Some(m) => {
            if m.bands() != spec.bands || m.count() != spec.endmembers {
                return Err(Error::Shape {
                    what: "supplied endmembers",
                    expected: (spec.bands, spec.endmembers),
                    got: (m.bands(), m.count()),
                });
            }
            m
        }
        None => synth_endmembers(spec.bands, spec.endmembers, sub_seed(spec.seed, 1))?,
    };
    let n = spec.layout.pixels();
    let abundances = match (spec.sampler, spec.layout) {
        (AbundanceSampler::Dirichlet { concentration }, layout) => {
            let a = sample_dirichlet_abundances(n, spec.endmembers, concentration, sub_seed(spec.seed, 2))?;
            AbundanceMatrix::new(a.into_data(), layout.grid())?
        }
        (AbundanceSampler::Grf { corr_len }, PixelLayout::Grid { rows, cols }) => {
            sample_grf_abundances(rows, cols, spec.endmembers, corr_len, sub_seed(spec.seed, 2))?
        }
        (AbundanceSampler::Grf { .. }, PixelLayout::Count(_)) => unreachable!("rejected by validate"),
    };
    let clean = spec.model.mix(&endmembers, &abundances)?;
    let cube = add_noise_snr(&clean, spec.snr_db, sub_seed(spec.seed, 3))?;
    Ok(Scene {
        spec: spec.clone(),
        endmembers,
        abundances,
        clean,
        cube,
    })
}

/// Independent seed for one generation stage (splitmix64 finalizer).
pub fn sub_seed(seed: u64, stage: u64) -> u64 {
    let mut z = seed ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::simdata::Preset;

#[derive(Debug, Parser)]
#[command(
    name = "nlunmix",
    version,
    about = "Nonlinear hyperspectral unmixing with model-based autoencoders"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Synthesize a scene: cube, true abundances and endmembers.
    Generate(GenerateArgs),
    /// Estimate abundances and endmembers of a cube.
    Unmix(UnmixArgs),
    /// Score estimates against ground truth.
    Evaluate(EvaluateArgs),
    /// Generate a scene and compare every method on it.
    Benchmark(BenchmarkArgs),
    /// Repeat a previous command from its manifest.
    Rerun(RerunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Unmix(_) => "unmix",
            Command::Evaluate(_) => "evaluate",
            Command::Benchmark(_) => "benchmark",
            Command::Rerun(_) => "rerun",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelName {
    Lmm,
    Blmm,
    Pnmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Fcls,
    Macu,
    Nfaec,
    Mfaec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridChoice {
    /// λ ∈ {1e-2, 1}, γ = 1e-4 (8 cells).
    Reduced,
    /// λ ∈ {1e-6, 1e-2, 1}, γ ∈ {1e-6, 1e-4} (54 cells).
    Full,
}

fn preset_parser(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

/// Absolute form of a path argument, so a manifest can be rerun from
/// another working directory.
fn abs_path(p: &std::path::Path) -> String {
    std::path::absolute(p)
        .unwrap_or_else(|_| p.to_path_buf())
        .display()
        .to_string()
}

fn value_name<T: ValueEnum>(v: &T) -> String {
    v.to_possible_value()
        .expect("no skipped variants")
        .get_name()
        .to_string()
}

/// Scene description shared by `generate` and `benchmark`.
#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    /// dc1 (10⁴ pixels), dc2 (50×50 grid) or dc1-small (2500 pixels).
    #[arg(long, default_value = "dc1", value_parser = preset_parser)]
    pub preset: Preset,
    #[arg(long, value_enum, default_value_t = ModelName::Blmm)]
    pub model: ModelName,
    /// Exponent of the post-nonlinear model.
    #[arg(long, default_value_t = 0.7)]
    pub xi: f64,
    /// Noise level in dB, or `none` for a noiseless cube.
    #[arg(long, default_value = "20")]
    pub snr: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Override the number of spectral bands.
    #[arg(long)]
    pub bands: Option<usize>,
    /// Override the number of endmembers.
    #[arg(long)]
    pub endmembers: Option<usize>,
    /// Override the pixel count of a non-grid preset.
    #[arg(long)]
    pub pixels: Option<usize>,
    /// Endmember CSV (bands × endmembers) to use instead of synthetic spectra.
    #[arg(long)]
    pub endmember_csv: Option<PathBuf>,
}

impl SceneArgs {
    pub fn canonical(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("preset", self.preset.to_string()),
            ("model", value_name(&self.model)),
            ("xi", self.xi.to_string()),
            ("snr", self.snr.clone()),
            ("seed", self.seed.to_string()),
        ];
        if let Some(b) = self.bands {
            v.push(("bands", b.to_string()));
        }
        if let Some(e) = self.endmembers {
            v.push(("endmembers", e.to_string()));
        }
        if let Some(p) = self.pixels {
            v.push(("pixels", p.to_string()));
        }
        if let Some(p) = &self.endmember_csv {
            v.push(("endmember-csv", abs_path(p)));
        }
        v
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct UnmixArgs {
    #[arg(long)]
    pub cube: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Training configuration (key = value lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of endmembers to extract.
    #[arg(long, default_value_t = 3)]
    pub endmembers: usize,
    /// Initial endmember CSV (bands × endmembers) instead of VCA.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Seed for VCA and training (overrides the config's seed).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Estimated abundance CSV.
    #[arg(long)]
    pub abundances: PathBuf,
    #[arg(long)]
    pub truth_abundances: PathBuf,
    /// Estimated endmember CSV; with the truth, enables spectral angles.
    #[arg(long)]
    pub endmembers: Option<PathBuf>,
    #[arg(long)]
    pub truth_endmembers: Option<PathBuf>,
    /// Observed cube; enables RMSE_Y.
    #[arg(long)]
    pub cube: Option<PathBuf>,
    /// Model checkpoint used to reconstruct pixels; without it the
    /// reconstruction is the linear mixture of the estimated endmembers.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, value_enum, default_value_t = GridChoice::Reduced)]
    pub grid: GridChoice,
    /// Comma-separated subset of fcls, macu, nfaec, mfaec.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "fcls,macu,nfaec,mfaec")]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 200)]
    pub max_epochs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RerunArgs {
    /// Manifest written by an earlier command.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory (defaults to the original one).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl UnmixArgs {
    pub fn canonical(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("cube", abs_path(&self.cube)),
            ("method", value_name(&self.method)),
            ("endmembers", self.endmembers.to_string()),
            ("seed", self.seed.to_string()),
        ];
        if let Some(c) = &self.config {
            v.push(("config", abs_path(c)));
        }
        if let Some(i) = &self.init {
            v.push(("init", abs_path(i)));
        }
        v
    }
}

impl EvaluateArgs {
    pub fn canonical(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("abundances", abs_path(&self.abundances)),
            ("truth-abundances", abs_path(&self.truth_abundances)),
        ];
        for (flag, p) in [
            ("endmembers", &self.endmembers),
            ("truth-endmembers", &self.truth_endmembers),
            ("cube", &self.cube),
            ("checkpoint", &self.checkpoint),
        ] {
            if let Some(p) = p {
                v.push((flag, abs_path(p)));
            }
        }
        v
    }
}

impl BenchmarkArgs {
    pub fn canonical(&self) -> Vec<(&'static str, String)> {
        let mut v = self.scene.canonical();
        v.push(("grid", value_name(&self.grid)));
        let methods: Vec<String> = self.methods.iter().map(value_name).collect();
        v.push(("methods", methods.join(",")));
        v.push(("max-epochs", self.max_epochs.to_string()));
        v
    }
}

pub(crate) fn method_label(m: Method) -> &'static str {
    match m {
        Method::Fcls => "FCLS",
        Method::Macu => "MAC-U",
        Method::Nfaec => "NF-AEC",
        Method::Mfaec => "MF-AEC",
    }
}

pub(crate) fn method_key(m: Method) -> String {
    value_name(&m)
}

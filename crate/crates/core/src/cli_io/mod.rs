//! Command-line surface and file formats.

mod cli;
mod commands;
mod formats;
mod manifest;

pub use cli::{
    BenchmarkArgs, Cli, Command, EvaluateArgs, GenerateArgs, GridChoice, Method, ModelName, RerunArgs, SceneArgs,
    UnmixArgs,
};
pub use commands::{
    benchmark, evaluate, exit_code, generate, main_with_args, manifest_path, rerun, run, unmix, BenchmarkCell,
    BenchmarkReport, MethodResult,
};
pub use formats::{
    column_names, decode_csv, decode_cube, encode_csv, encode_cube, encode_pgm, read_csv, read_cube, sha256_file,
    sha256_hex, write_atomic, write_csv, write_cube, CUBE_MAGIC,
};
pub use manifest::{RunManifest, MANIFEST_FILE};

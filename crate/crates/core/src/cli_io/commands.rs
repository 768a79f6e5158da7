use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use ndarray::Array2;

use super::cli::{
    method_key, method_label, BenchmarkArgs, Cli, Command, EvaluateArgs, GenerateArgs, GridChoice, Method, ModelName,
    RerunArgs, SceneArgs, UnmixArgs,
};
use super::formats::{
    column_names, encode_csv, encode_pgm, io_at, read_csv, read_cube, sha256_file, write_atomic, write_cube,
};
use super::manifest::{RunManifest, MANIFEST_FILE};
use crate::aecmodel::{read_checkpoint, write_checkpoint, AecParams, Variant};
use crate::classic::{fcls, vca};
use crate::error::{Error, Result};
use crate::metrics::{align_columns, rmse, EvalReport};
use crate::simdata::{
    generate_scene, AbundanceMatrix, EndmemberMatrix, HsiCube, MixingModel, PixelLayout, Provenance, Scene, SceneSpec,
};
use crate::trainer::{grid_search, train, CellOutcome, Grid, TrainConfig};

/// Exit status for a failed command: 2 usage, 3 numeric failure, 4 I/O.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Format { .. } => 4,
        e if e.is_numeric() => 3,
        _ => 2,
    }
}

/// Parses `args` (program name first), runs the command and reports to
/// stdout/stderr. Returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs one command; returns the text it reports on success.
pub fn run(command: Command) -> Result<String> {
    match command {
        Command::Generate(a) => generate(&a),
        Command::Unmix(a) => unmix(&a),
        Command::Evaluate(a) => evaluate(&a).map(|r| r.to_kv()),
        Command::Benchmark(a) => benchmark(&a).map(|r| r.table),
        Command::Rerun(a) => rerun(&a),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    Ok(())
}

fn scene_spec(args: &SceneArgs) -> Result<SceneSpec> {
    let model = match args.model {
        ModelName::Lmm => MixingModel::Lmm,
        ModelName::Blmm => MixingModel::Blmm,
        ModelName::Pnmm => MixingModel::Pnmm { xi: args.xi },
    };
    let snr = match args.snr.as_str() {
        "none" | "inf" => None,
        s => Some(
            s.parse::<f64>()
                .map_err(|_| Error::invalid(format!("--snr expects a number or `none`, got `{s}`")))?,
        ),
    };
    let mut spec = SceneSpec::preset(args.preset, model, snr, args.seed);
    if let Some(b) = args.bands {
        spec.bands = b;
    }
    if let Some(p) = args.endmembers {
        spec.endmembers = p;
    }
    if let Some(n) = args.pixels {
        match spec.layout {
            PixelLayout::Count(_) => spec.layout = PixelLayout::Count(n),
            PixelLayout::Grid { .. } => return Err(Error::invalid("--pixels does not apply to grid presets")),
        }
    }
    spec.validate()?;
    Ok(spec)
}

fn build_scene(args: &SceneArgs, manifest: &mut RunManifest) -> Result<Scene> {
    let spec = scene_spec(args)?;
    let supplied = match &args.endmember_csv {
        Some(path) => {
            manifest.record_input("endmember_csv", path)?;
            Some(EndmemberMatrix::new(read_csv(path)?, Provenance::Loaded)?)
        }
        None => None,
    };
    manifest.set("seed", args.seed);
    generate_scene(&spec, supplied)
}

fn abundance_csv(a: &Array2<f64>) -> String {
    encode_csv(&column_names("a", a.ncols()), a)
}

fn endmember_csv(m: &Array2<f64>) -> String {
    encode_csv(&column_names("e", m.ncols()), m)
}

pub fn generate(args: &GenerateArgs) -> Result<String> {
    ensure_dir(&args.out)?;
    let mut manifest = RunManifest::new("generate");
    manifest.record_args(&args.scene.canonical());
    manifest.set("arg.out", args.out.display());
    let scene = build_scene(&args.scene, &mut manifest)?;
    write_cube(&args.out.join("cube.nlc"), &scene.cube)?;
    write_atomic(
        &args.out.join("abundances.csv"),
        abundance_csv(scene.abundances.data()).as_bytes(),
    )?;
    write_atomic(
        &args.out.join("endmembers.csv"),
        endmember_csv(scene.endmembers.data()).as_bytes(),
    )?;
    for f in ["cube.nlc", "abundances.csv", "endmembers.csv"] {
        manifest.set(&format!("output.{f}.sha256"), sha256_file(&args.out.join(f))?);
    }
    manifest.write(&args.out)?;
    Ok(format!(
        "wrote {} pixels x {} bands to {}\n",
        scene.cube.pixels(),
        scene.cube.bands(),
        args.out.display()
    ))
}

fn initial_endmembers(cube: &HsiCube, p: usize, init: Option<&Path>, seed: u64) -> Result<EndmemberMatrix> {
    match init {
        // an initialization, not a reflectance library: noisy values are fine
        Some(path) => {
            let m = EndmemberMatrix::new(read_csv(path)?, Provenance::Extracted)?;
            if m.bands() != cube.bands() {
                return Err(Error::Shape {
                    what: "initial endmembers",
                    expected: (cube.bands(), m.count()),
                    got: (m.bands(), m.count()),
                });
            }
            Ok(m)
        }
        None => Ok(vca(cube, p, seed)?.endmembers),
    }
}

fn variant_of(m: Method) -> Option<Variant> {
    match m {
        Method::Fcls => None,
        Method::Macu => Some(Variant::Macu),
        Method::Nfaec => Some(Variant::Nfaec),
        Method::Mfaec => Some(Variant::Mfaec),
    }
}

/// One PGM per endmember when the cube has a grid.
fn write_maps(dir: &Path, a: &Array2<f64>, grid: Option<(usize, usize)>) -> Result<()> {
    let Some((rows, cols)) = grid else { return Ok(()) };
    let maps = dir.join("maps");
    ensure_dir(&maps)?;
    for k in 0..a.ncols() {
        let bytes = encode_pgm(rows, cols, a.column(k).iter().copied());
        write_atomic(&maps.join(format!("abundance_{}.pgm", k + 1)), &bytes)?;
    }
    Ok(())
}

pub fn unmix(args: &UnmixArgs) -> Result<String> {
    ensure_dir(&args.out)?;
    let mut manifest = RunManifest::new("unmix");
    manifest.record_args(&args.canonical());
    manifest.set("arg.out", args.out.display());
    manifest.record_input("cube", &args.cube)?;
    if let Some(init) = &args.init {
        manifest.record_input("init", init)?;
    }
    let cube = read_cube(&args.cube)?;
    let m0 = initial_endmembers(&cube, args.endmembers, args.init.as_deref(), args.seed)?;
    manifest.set("seed", args.seed);

    let (a, m) = match variant_of(args.method) {
        None => (fcls(&cube, m0.view())?.into_data(), m0.into_data()),
        Some(variant) => {
            let mut cfg = match &args.config {
                Some(path) => {
                    manifest.record_input("config", path)?;
                    TrainConfig::from_kv(&fs::read_to_string(path).map_err(io_at(path))?)?
                }
                None => TrainConfig::default(),
            };
            cfg.seed = args.seed;
            for line in cfg.to_kv().lines() {
                if let Some((k, v)) = line.split_once(" = ") {
                    manifest.set(&format!("config.{k}"), v);
                }
            }
            let (params, history) = match train(&cube, &m0, variant, &cfg) {
                Ok(r) => r,
                Err(Error::Diverged { epoch, reason, history }) => {
                    write_atomic(&args.out.join("history.csv"), history.to_csv().as_bytes())?;
                    manifest.set("result.status", "diverged");
                    manifest.write(&args.out)?;
                    return Err(Error::Diverged { epoch, reason, history });
                }
                Err(e) => return Err(e),
            };
            write_atomic(&args.out.join("history.csv"), history.to_csv().as_bytes())?;
            let mut ckpt = Vec::new();
            write_checkpoint(&mut ckpt, &params)?;
            write_atomic(&args.out.join("checkpoint.bin"), &ckpt)?;
            manifest.set("result.epochs", history.len());
            manifest.set("result.final_loss", history.last().map_or(f64::NAN, |r| r.terms.total));
            if let Some(alpha) = params.alpha() {
                manifest.set("result.alpha", join(&alpha));
            }
            if let Some(r) = params.pinv_residual() {
                manifest.set("result.pinv_residual", r);
            }
            (params.encode(cube.view())?, params.m().values().clone())
        }
    };
    write_atomic(&args.out.join("abundances.csv"), abundance_csv(&a).as_bytes())?;
    write_atomic(&args.out.join("endmembers.csv"), endmember_csv(&m).as_bytes())?;
    write_maps(&args.out, &a, cube.grid())?;
    manifest.set("result.status", "ok");
    manifest.write(&args.out)?;
    let mut summary = format!(
        "{} abundances for {} pixels written to {}\n",
        method_label(args.method),
        a.nrows(),
        args.out.display()
    );
    if let Some(alpha) = manifest.get("result.alpha") {
        let _ = writeln!(summary, "alpha = {alpha}");
    }
    Ok(summary)
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

pub fn evaluate(args: &EvaluateArgs) -> Result<EvalReport> {
    let start = Instant::now();
    ensure_dir(&args.out)?;
    let mut manifest = RunManifest::new("evaluate");
    manifest.record_args(&args.canonical());
    manifest.set("arg.out", args.out.display());
    let est_a = read_csv(&args.abundances)?;
    let true_a = read_csv(&args.truth_abundances)?;
    manifest.record_input("abundances", &args.abundances)?;
    manifest.record_input("truth_abundances", &args.truth_abundances)?;
    let est_m = args.endmembers.as_deref().map(read_csv).transpose()?;
    let true_m = args.truth_endmembers.as_deref().map(read_csv).transpose()?;
    for (name, p) in [
        ("endmembers", &args.endmembers),
        ("truth_endmembers", &args.truth_endmembers),
    ] {
        if let Some(p) = p {
            manifest.record_input(name, p)?;
        }
    }

    let reconstruction = match &args.cube {
        Some(path) => {
            manifest.record_input("cube", path)?;
            let cube = read_cube(path)?;
            let y_hat = match (&args.checkpoint, &est_m) {
                (Some(ck), _) => {
                    manifest.record_input("checkpoint", ck)?;
                    let params: AecParams =
                        read_checkpoint(std::io::BufReader::new(fs::File::open(ck).map_err(io_at(ck))?))?;
                    params.decode(est_a.view())?
                }
                (None, Some(m)) => {
                    if m.ncols() != est_a.ncols() {
                        return Err(Error::Shape {
                            what: "reconstruction",
                            expected: (m.nrows(), est_a.ncols()),
                            got: m.dim(),
                        });
                    }
                    est_a.dot(&m.t())
                }
                (None, None) => {
                    return Err(Error::invalid(
                        "--cube needs --checkpoint or --endmembers to reconstruct pixels",
                    ))
                }
            };
            Some((y_hat, cube.into_data()))
        }
        None => None,
    };
    let endmembers = match (&est_m, &true_m) {
        (Some(e), Some(t)) => Some((e.view(), t.view())),
        _ => None,
    };
    let report = EvalReport::evaluate(
        est_a.view(),
        true_a.view(),
        reconstruction.as_ref().map(|(h, y)| (h.view(), y.view())),
        endmembers,
        start.elapsed().as_secs_f64(),
    )?;
    let csv = format!("{}\n{}\n", EvalReport::csv_header(), report.csv_row());
    write_atomic(&args.out.join("eval.csv"), csv.as_bytes())?;
    write_atomic(&args.out.join("eval.txt"), report.to_kv().as_bytes())?;
    manifest.write(&args.out)?;
    Ok(report)
}

/// One row of the benchmark table.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: Method,
    /// `None` when every training run diverged.
    pub rmse_a: Option<f64>,
    pub rmse_y: Option<f64>,
    pub seconds: f64,
    pub config: Option<TrainConfig>,
    pub epochs: Option<usize>,
    pub pinv_residual: Option<f64>,
    pub alpha: Option<Vec<f64>>,
}

/// Per-cell record of a benchmark grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkCell {
    pub method: Method,
    pub config: TrainConfig,
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub rows: Vec<MethodResult>,
    pub cells: Vec<BenchmarkCell>,
    pub table: String,
}

fn opt_str<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

pub fn benchmark(args: &BenchmarkArgs) -> Result<BenchmarkReport> {
    ensure_dir(&args.out)?;
    let mut manifest = RunManifest::new("benchmark");
    manifest.record_args(&args.canonical());
    manifest.set("arg.out", args.out.display());
    let scene = build_scene(&args.scene, &mut manifest)?;
    let y = &scene.cube;
    let truth = &scene.abundances;
    let m0 = vca(y, scene.spec.endmembers, args.scene.seed)?.endmembers;

    let grid = match args.grid {
        GridChoice::Reduced => Grid::reduced(),
        GridChoice::Full => Grid::default(),
    };
    let base = TrainConfig {
        seed: args.scene.seed,
        max_epochs: args.max_epochs,
        ..TrainConfig::default()
    };

    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for &method in &args.methods {
        let start = Instant::now();
        let row = match variant_of(method) {
            None => {
                let a = fcls(y, m0.view())?;
                let y_hat = a.data().dot(&m0.data().t());
                MethodResult {
                    method,
                    rmse_a: Some(align_columns(a.view(), truth.view())?.rmse),
                    rmse_y: Some(rmse(y_hat.view(), y.view())?),
                    seconds: start.elapsed().as_secs_f64(),
                    config: None,
                    epochs: None,
                    pinv_residual: None,
                    alpha: None,
                }
            }
            Some(variant) => aec_row(method, variant, y, &m0, &grid, &base, truth, &mut cells, start)?,
        };
        rows.push(row);
    }

    let results = results_csv(&rows);
    write_atomic(&args.out.join("results.csv"), results.as_bytes())?;
    write_atomic(&args.out.join("cells.csv"), cells_csv(&cells).as_bytes())?;
    let mut timing = String::from("method,seconds\n");
    for r in &rows {
        let _ = writeln!(timing, "{},{}", method_key(r.method), r.seconds);
    }
    write_atomic(&args.out.join("timing.csv"), timing.as_bytes())?;
    let table = render_table(&rows);
    write_atomic(&args.out.join("table.txt"), table.as_bytes())?;
    manifest.set(
        "output.results.csv.sha256",
        super::formats::sha256_hex(results.as_bytes()),
    );
    manifest.write(&args.out)?;
    Ok(BenchmarkReport { rows, cells, table })
}

#[allow(clippy::too_many_arguments)]
fn aec_row(
    method: Method,
    variant: Variant,
    y: &HsiCube,
    m0: &EndmemberMatrix,
    grid: &Grid,
    base: &TrainConfig,
    truth: &AbundanceMatrix,
    cells: &mut Vec<BenchmarkCell>,
    start: Instant,
) -> Result<MethodResult> {
    match grid_search(y, m0, variant, grid, base, Some(truth)) {
        Ok(g) => {
            cells.extend(g.cells.iter().map(|c| BenchmarkCell {
                method,
                config: c.config.clone(),
                outcome: c.outcome.clone(),
            }));
            let s = g.best_scores();
            Ok(MethodResult {
                method,
                rmse_a: s.rmse_a,
                rmse_y: Some(s.rmse_y),
                seconds: start.elapsed().as_secs_f64(),
                config: Some(g.best_config().clone()),
                epochs: Some(s.epochs),
                pinv_residual: s.pinv_residual,
                alpha: g.params.alpha(),
            })
        }
        Err(Error::AllCellsDiverged) => Ok(MethodResult {
            method,
            rmse_a: None,
            rmse_y: None,
            seconds: start.elapsed().as_secs_f64(),
            config: None,
            epochs: None,
            pinv_residual: None,
            alpha: None,
        }),
        Err(e) => Err(e),
    }
}

/// Deterministic results: no timings.
fn results_csv(rows: &[MethodResult]) -> String {
    let mut s = String::from(
        "method,status,rmse_a,rmse_y,lambda_q,lambda_w,lambda_m,learning_rate,epochs,pinv_residual,alpha\n",
    );
    for r in rows {
        let status = if r.rmse_a.is_some() { "ok" } else { "diverged" };
        let c = r.config.as_ref();
        let _ = writeln!(
            s,
            "{},{status},{},{},{},{},{},{},{},{},{}",
            method_key(r.method),
            opt_str(&r.rmse_a),
            opt_str(&r.rmse_y),
            opt_str(&c.map(|c| c.lambda_q)),
            opt_str(&c.map(|c| c.lambda_w)),
            opt_str(&c.map(|c| c.lambda_m)),
            opt_str(&c.map(|c| c.learning_rate)),
            opt_str(&r.epochs),
            opt_str(&r.pinv_residual),
            r.alpha.as_deref().map(join).unwrap_or_default(),
        );
    }
    s
}

fn cells_csv(cells: &[BenchmarkCell]) -> String {
    let mut s = String::from(
        "method,lambda_q,lambda_w,lambda_m,learning_rate,status,rmse_a,rmse_y,epochs,final_loss,pinv_residual\n",
    );
    for c in cells {
        let cfg = &c.config;
        let head = format!(
            "{},{},{},{},{}",
            method_key(c.method),
            cfg.lambda_q,
            cfg.lambda_w,
            cfg.lambda_m,
            cfg.learning_rate
        );
        let _ = match &c.outcome {
            CellOutcome::Trained(sc) => writeln!(
                s,
                "{head},ok,{},{},{},{},{}",
                opt_str(&sc.rmse_a),
                sc.rmse_y,
                sc.epochs,
                sc.final_loss,
                opt_str(&sc.pinv_residual)
            ),
            CellOutcome::Diverged { epoch, .. } => writeln!(s, "{head},diverged,,,{epoch},,"),
        };
    }
    s
}

fn render_table(rows: &[MethodResult]) -> String {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "diverged".into());
    let mut s = format!("{:<8} {:>9} {:>9} {:>10}\n", "Method", "RMSE_A", "RMSE_Y", "Time (s)");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<8} {:>9} {:>9} {:>10.2}",
            method_label(r.method),
            fmt(r.rmse_a),
            fmt(r.rmse_y),
            r.seconds
        );
    }
    s
}

/// Repeats the command recorded in a manifest, after checking that its
/// inputs still hash to the recorded values.
pub fn rerun(args: &RerunArgs) -> Result<String> {
    let manifest = RunManifest::read(&args.manifest)?;
    let command = manifest.get("command").expect("parse checks command").to_string();
    if command == "rerun" {
        return Err(Error::invalid("cannot rerun a rerun manifest"));
    }
    for (name, path, hash) in manifest.inputs() {
        let now = sha256_file(Path::new(&path))?;
        if now != hash {
            return Err(Error::invalid(format!(
                "input `{name}` ({path}) changed since the recorded run"
            )));
        }
    }
    let out: PathBuf = match &args.out {
        Some(o) => o.clone(),
        None => manifest
            .get("arg.out")
            .map(PathBuf::from)
            .ok_or_else(|| Error::format("manifest", "missing `arg.out`"))?,
    };
    let mut argv = vec!["nlunmix".to_string(), command];
    for (flag, value) in manifest.args() {
        if flag == "out" {
            continue;
        }
        argv.push(format!("--{flag}"));
        argv.push(value.to_string());
    }
    argv.push("--out".into());
    argv.push(out.display().to_string());
    let cli = Cli::try_parse_from(&argv).map_err(|e| Error::format("manifest", e.to_string()))?;
    run(cli.command)
}

/// Path of the manifest a command writes into `dir`.
pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use ndarray::{array, Array2};
use nlunmix_core::cli_io::{
    decode_csv, decode_cube, encode_csv, encode_cube, main_with_args, read_csv, read_cube, write_cube, RunManifest,
    MANIFEST_FILE,
};
use nlunmix_core::simdata::HsiCube;
use nlunmix_core::Error;
use proptest::prelude::*;
use tempfile::TempDir;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["nlunmix"];
    argv.extend_from_slice(args);
    main_with_args(argv)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small count-layout scene with three endmembers.
fn small_scene(dir: &Path, model: &str, snr: &str, pixels: usize, bands: usize) -> PathBuf {
    let out = dir.join("scene");
    let code = run(&[
        "generate",
        "--preset",
        "dc1-small",
        "--model",
        model,
        "--snr",
        snr,
        "--pixels",
        &pixels.to_string(),
        "--bands",
        &bands.to_string(),
        "--seed",
        "5",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0);
    out
}

fn plain_rmse(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    assert_eq!(x.dim(), y.dim());
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (ss / x.len() as f64).sqrt()
}

fn kv_file(path: &Path) -> Vec<(String, String)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once(" = ").map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}

#[test]
fn cube_file_round_trip_with_grid() {
    let data = Array2::from_shape_fn((6, 4), |(i, j)| (i * 4 + j) as f64 * 0.125 - 1.0);
    let cube = HsiCube::new(data, Some((2, 3))).unwrap();
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("c.nlc");
    write_cube(&path, &cube).unwrap();
    let back = read_cube(&path).unwrap();
    assert_eq!(back, cube);
    assert_eq!(back.grid(), Some((2, 3)));
    let bytes = fs::read(&path).unwrap();
    let header_len = bytes.len() - 6 * 4 * 4;
    assert!(std::str::from_utf8(&bytes[..header_len]).unwrap().ends_with("end\n"));
    // first payload value is pixel 0, band 0
    assert_eq!(
        f32::from_le_bytes(bytes[header_len..header_len + 4].try_into().unwrap()),
        -1.0
    );
}

#[test]
fn cube_file_rejects_bad_payload_and_header() {
    let cube = HsiCube::new(Array2::from_elem((3, 2), 0.5), None).unwrap();
    let mut bytes = encode_cube(&cube);
    bytes.pop();
    assert!(matches!(decode_cube(&bytes[..]), Err(Error::Format { .. })));
    let mut long = encode_cube(&cube);
    long.extend_from_slice(&[0; 4]);
    assert!(matches!(decode_cube(&long[..]), Err(Error::Format { .. })));
    let text = String::from_utf8_lossy(&encode_cube(&cube)).into_owned();
    let no_dtype = text.replacen("dtype=f32\n", "", 1);
    assert!(matches!(decode_cube(no_dtype.as_bytes()), Err(Error::Format { .. })));
    let big_endian = text.replacen("byte_order=little", "byte_order=big", 1);
    assert!(matches!(decode_cube(big_endian.as_bytes()), Err(Error::Format { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cube_round_trip_is_bit_identical(
        pixels in 1usize..20,
        bands in 1usize..9,
        seed in any::<u64>(),
        with_grid in any::<bool>(),
    ) {
        // f32-representable values survive storage exactly
        let mut state = seed;
        let data = Array2::from_shape_fn((pixels, bands), |_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            f64::from(f32::from_bits((state >> 33) as u32 & 0x7f7f_ffff))
        });
        let grid = with_grid.then_some((1, pixels));
        let cube = HsiCube::new(data, grid).unwrap();
        let back = decode_cube(&encode_cube(&cube)[..]).unwrap();
        prop_assert_eq!(back.grid(), cube.grid());
        for (a, b) in back.data().iter().zip(cube.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn csv_round_trip_is_exact(values in prop::collection::vec(-1e300f64..1e300, 1..40)) {
        let cols = 1 + values.len() % 4;
        let rows = values.len() / cols;
        prop_assume!(rows > 0);
        let m = Array2::from_shape_vec((rows, cols), values[..rows * cols].to_vec()).unwrap();
        let header: Vec<String> = (0..cols).map(|k| format!("c{k}")).collect();
        let back = decode_csv(&encode_csv(&header, &m)).unwrap();
        for (a, b) in back.iter().zip(&m) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn generate_dc1_and_dc2_shapes() {
    let dir = TempDir::new().unwrap();
    let dc1 = dir.path().join("dc1");
    assert_eq!(
        run(&[
            "generate",
            "--preset",
            "dc1",
            "--model",
            "blmm",
            "--snr",
            "20",
            "--seed",
            "1",
            "--out",
            s(&dc1)
        ]),
        0
    );
    let cube = read_cube(&dc1.join("cube.nlc")).unwrap();
    assert_eq!((cube.pixels(), cube.bands(), cube.grid()), (10_000, 224, None));
    let dc2 = dir.path().join("dc2");
    assert_eq!(run(&["generate", "--preset", "dc2", "--out", s(&dc2)]), 0);
    let cube = read_cube(&dc2.join("cube.nlc")).unwrap();
    assert_eq!((cube.pixels(), cube.grid()), (2500, Some((50, 50))));
    let a = read_csv(&dc2.join("abundances.csv")).unwrap();
    let m = read_csv(&dc2.join("endmembers.csv")).unwrap();
    assert_eq!(a.nrows(), 2500);
    assert_eq!(m.dim(), (224, a.ncols()));
}

#[test]
fn generate_twice_and_rerun_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let first = small_scene(dir.path(), "pnmm", "20", 200, 16);
    let second = dir.path().join("again");
    let args = [
        "generate",
        "--preset",
        "dc1-small",
        "--model",
        "pnmm",
        "--snr",
        "20",
        "--pixels",
        "200",
        "--bands",
        "16",
        "--seed",
        "5",
        "--out",
    ];
    let mut v = args.to_vec();
    v.push(s(&second));
    assert_eq!(run(&v), 0);
    let third = dir.path().join("rerun");
    assert_eq!(
        run(&["rerun", "--manifest", s(&first.join(MANIFEST_FILE)), "--out", s(&third)]),
        0
    );
    for f in ["cube.nlc", "abundances.csv", "endmembers.csv"] {
        let a = fs::read(first.join(f)).unwrap();
        assert_eq!(a, fs::read(second.join(f)).unwrap(), "{f}");
        assert_eq!(a, fs::read(third.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn manifest_records_args_and_hashes() {
    let dir = TempDir::new().unwrap();
    let scene = small_scene(dir.path(), "lmm", "none", 60, 8);
    let out = dir.path().join("fcls");
    assert_eq!(
        run(&[
            "unmix",
            "--cube",
            s(&scene.join("cube.nlc")),
            "--method",
            "fcls",
            "--out",
            s(&out)
        ]),
        0
    );
    let m = RunManifest::read(&out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.get("command"), Some("unmix"));
    assert_eq!(m.get("arg.method"), Some("fcls"));
    assert_eq!(m.get("tool"), Some("nlunmix-core"));
    assert!(m.get("started_unix").is_some() && m.get("finished_unix").is_some());
    let cube_bytes = fs::read(scene.join("cube.nlc")).unwrap();
    let expected: String = {
        use sha2::{Digest, Sha256};
        Sha256::digest(&cube_bytes).iter().map(|b| format!("{b:02x}")).collect()
    };
    assert_eq!(m.get("input.cube.sha256"), Some(expected.as_str()));
}

#[test]
fn rerun_refuses_changed_inputs() {
    let dir = TempDir::new().unwrap();
    let scene = small_scene(dir.path(), "lmm", "none", 60, 8);
    let out = dir.path().join("fcls");
    assert_eq!(
        run(&[
            "unmix",
            "--cube",
            s(&scene.join("cube.nlc")),
            "--method",
            "fcls",
            "--out",
            s(&out)
        ]),
        0
    );
    let mut bytes = fs::read(scene.join("cube.nlc")).unwrap();
    *bytes.last_mut().unwrap() ^= 1;
    fs::write(scene.join("cube.nlc"), bytes).unwrap();
    let again = dir.path().join("again");
    assert_eq!(
        run(&["rerun", "--manifest", s(&out.join(MANIFEST_FILE)), "--out", s(&again)]),
        2
    );
    assert!(!again.join("abundances.csv").exists());
}

#[test]
fn fcls_with_true_endmembers_recovers_noiseless_lmm() {
    let dir = TempDir::new().unwrap();
    let scene = small_scene(dir.path(), "lmm", "none", 300, 30);
    let out = dir.path().join("fcls");
    let code = run(&[
        "unmix",
        "--cube",
        s(&scene.join("cube.nlc")),
        "--method",
        "fcls",
        "--init",
        s(&scene.join("endmembers.csv")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0);
    let est = read_csv(&out.join("abundances.csv")).unwrap();
    let truth = read_csv(&scene.join("abundances.csv")).unwrap();
    assert!(plain_rmse(&est, &truth) < 1e-6, "{}", plain_rmse(&est, &truth));
    assert_eq!(
        read_csv(&out.join("endmembers.csv")).unwrap(),
        read_csv(&scene.join("endmembers.csv")).unwrap()
    );
}

#[test]
fn macu_rows_lie_on_the_simplex_and_alpha_is_reported() {
    let dir = TempDir::new().unwrap();
    let scene = small_scene(dir.path(), "blmm", "20", 300, 12);
    let cfg = dir.path().join("train.cfg");
    fs::write(&cfg, "# short run\nmax_epochs = 2\n").unwrap();
    let out = dir.path().join("macu");
    let code = run(&[
        "unmix",
        "--cube",
        s(&scene.join("cube.nlc")),
        "--method",
        "macu",
        "--config",
        s(&cfg),
        "--seed",
        "3",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0);
    let a = read_csv(&out.join("abundances.csv")).unwrap();
    assert_eq!(a.dim(), (300, 3));
    for row in a.rows() {
        assert!(row.iter().all(|&v| v >= 0.0));
        assert!((row.sum() - 1.0).abs() < 1e-9);
    }
    let m = RunManifest::read(&out.join(MANIFEST_FILE)).unwrap();
    let alpha: Vec<f64> = m
        .get("result.alpha")
        .unwrap()
        .split(';')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(alpha.len(), 3);
    assert!(alpha.iter().all(|&v| v > 0.0));
    assert_eq!(m.get("config.seed"), Some("3"));
    assert_eq!(m.get("config.max_epochs"), Some("2"));
    assert!(out.join("checkpoint.bin").exists());
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
}

#[test]
fn grid_cubes_get_one_pgm_per_endmember() {
    let dir = TempDir::new().unwrap();
    let scene = dir.path().join("dc2");
    assert_eq!(
        run(&["generate", "--preset", "dc2", "--bands", "10", "--out", s(&scene)]),
        0
    );
    let out = dir.path().join("fcls");
    assert_eq!(
        run(&[
            "unmix",
            "--cube",
            s(&scene.join("cube.nlc")),
            "--method",
            "fcls",
            "--out",
            s(&out)
        ]),
        0
    );
    let a = read_csv(&out.join("abundances.csv")).unwrap();
    for k in 0..a.ncols() {
        let pgm = fs::read(out.join("maps").join(format!("abundance_{}.pgm", k + 1))).unwrap();
        let header = b"P5\n50 50\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        let pixels = &pgm[header.len()..];
        assert_eq!(pixels.len(), 2500);
        for (n, &byte) in pixels.iter().enumerate() {
            let want = (a[[n, k]].clamp(0.0, 1.0) * 255.0).round();
            assert_eq!(f64::from(byte), want);
        }
    }
}

#[test]
fn count_cubes_get_no_maps() {
    let dir = TempDir::new().unwrap();
    let scene = small_scene(dir.path(), "lmm", "none", 60, 8);
    let out = dir.path().join("fcls");
    assert_eq!(
        run(&[
            "unmix",
            "--cube",
            s(&scene.join("cube.nlc")),
            "--method",
            "fcls",
            "--out",
            s(&out)
        ]),
        0
    );
    assert!(!out.join("maps").exists());
}

/// Dyadic values keep `A Mᵀ` exact in f32 storage.
fn exact_truth(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let a = array![
        [0.5, 0.25, 0.25],
        [1.0, 0.0, 0.0],
        [0.125, 0.375, 0.5],
        [0.0, 0.75, 0.25]
    ];
    let m = array![
        [0.125, 0.5, 0.875],
        [0.25, 0.75, 0.5],
        [0.625, 0.125, 0.25],
        [0.5, 0.5, 0.0625],
        [1.0, 0.25, 0.375]
    ];
    let y = a.dot(&m.t());
    let (pa, pm, py) = (dir.join("a.csv"), dir.join("m.csv"), dir.join("y.nlc"));
    fs::write(&pa, encode_csv(&["a1".into(), "a2".into(), "a3".into()], &a)).unwrap();
    fs::write(&pm, encode_csv(&["e1".into(), "e2".into(), "e3".into()], &m)).unwrap();
    write_cube(&py, &HsiCube::new(y, None).unwrap()).unwrap();
    (pa, pm, py)
}

#[test]
fn evaluate_truth_against_itself_is_zero() {
    let dir = TempDir::new().unwrap();
    let (a, m, y) = exact_truth(dir.path());
    let out = dir.path().join("eval");
    let code = run(&[
        "evaluate",
        "--abundances",
        s(&a),
        "--truth-abundances",
        s(&a),
        "--endmembers",
        s(&m),
        "--truth-endmembers",
        s(&m),
        "--cube",
        s(&y),
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0);
    let kv = kv_file(&out.join("eval.txt"));
    let get = |k: &str| kv.iter().find(|(key, _)| key == k).unwrap().1.clone();
    assert_eq!(get("rmse_a").parse::<f64>().unwrap(), 0.0);
    assert_eq!(get("rmse_y").parse::<f64>().unwrap(), 0.0);
    assert!(get("angles").split(';').all(|v| v.parse::<f64>().unwrap() == 0.0));
    assert_eq!(get("permutation"), "0;1;2");
}

#[test]
fn evaluate_csv_row_matches_kv_report() {
    let dir = TempDir::new().unwrap();
    let (a, m, y) = exact_truth(dir.path());
    // swap two columns of the estimate and perturb it
    let est = read_csv(&a).unwrap();
    let swapped = Array2::from_shape_fn(est.dim(), |(i, j)| est[[i, [1, 0, 2][j]]] * 0.9 + 0.1 / 3.0);
    let pe = dir.path().join("est.csv");
    fs::write(&pe, encode_csv(&["a1".into(), "a2".into(), "a3".into()], &swapped)).unwrap();
    let out = dir.path().join("eval");
    let code = run(&[
        "evaluate",
        "--abundances",
        s(&pe),
        "--truth-abundances",
        s(&a),
        "--endmembers",
        s(&m),
        "--truth-endmembers",
        s(&m),
        "--cube",
        s(&y),
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0);
    let kv = kv_file(&out.join("eval.txt"));
    let csv = fs::read_to_string(out.join("eval.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), kv.len());
    for ((h, v), (k, kv_v)) in header.iter().zip(&row).zip(&kv) {
        assert_eq!(h, k);
        assert_eq!(v, kv_v);
    }
    let truth = read_csv(&a).unwrap();
    let realigned = Array2::from_shape_fn(truth.dim(), |(i, j)| swapped[[i, [1, 0, 2][j]]]);
    let rmse_a: f64 = kv.iter().find(|(k, _)| k == "rmse_a").unwrap().1.parse().unwrap();
    assert!((rmse_a - plain_rmse(&realigned, &truth)).abs() < 1e-15);
}

#[test]
fn evaluate_rejects_mismatched_shapes() {
    let dir = TempDir::new().unwrap();
    let (a, _, _) = exact_truth(dir.path());
    let short = dir.path().join("short.csv");
    fs::write(&short, "a1,a2,a3\n1,0,0\n").unwrap();
    let out = dir.path().join("eval");
    assert_eq!(
        run(&[
            "evaluate",
            "--abundances",
            s(&short),
            "--truth-abundances",
            s(&a),
            "--out",
            s(&out)
        ]),
        2
    );
}

#[test]
fn benchmark_table_and_rerun() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("bench");
    let code = run(&[
        "benchmark",
        "--preset",
        "dc1-small",
        "--pixels",
        "256",
        "--bands",
        "12",
        "--methods",
        "fcls,mfaec",
        "--max-epochs",
        "2",
        "--seed",
        "2",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0);
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    let rows: Vec<&str> = results.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("fcls,ok,") && rows[1].starts_with("mfaec,ok,"));
    let timing = fs::read_to_string(out.join("timing.csv")).unwrap();
    for line in timing.lines().skip(1) {
        let secs: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(secs > 0.0);
    }
    let table = fs::read_to_string(out.join("table.txt")).unwrap();
    assert!(table.lines().next().unwrap().contains("Time"));
    assert_eq!(
        table
            .lines()
            .filter(|l| l.starts_with("FCLS") || l.starts_with("MF-AEC"))
            .count(),
        2
    );
    let cells = fs::read_to_string(out.join("cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 1 + 8);

    let again = dir.path().join("again");
    assert_eq!(
        run(&["rerun", "--manifest", s(&out.join(MANIFEST_FILE)), "--out", s(&again)]),
        0
    );
    for f in ["results.csv", "cells.csv"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

fn binary() -> Process {
    Process::new(env!("CARGO_BIN_EXE_nlunmix"))
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let status = binary().args(["unmix", "--cube"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let missing = dir.path().join("missing.nlc");
    let out = dir.path().join("o");
    let status = binary()
        .args(["unmix", "--cube", s(&missing), "--method", "fcls", "--out", s(&out)])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&status.stderr).contains("missing.nlc"));

    let scene = small_scene(dir.path(), "lmm", "20", 200, 10);
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "learning_rate = 1e200\nmax_epochs = 3\n").unwrap();
    let out = dir.path().join("diverged");
    let status = binary()
        .args([
            "unmix",
            "--cube",
            s(&scene.join("cube.nlc")),
            "--method",
            "nfaec",
            "--config",
            s(&cfg),
        ])
        .args(["--out", s(&out)])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
    assert!(out.join("history.csv").exists());
    assert!(!out.join("abundances.csv").exists());
    let m = RunManifest::read(&out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.get("result.status"), Some("diverged"));
}

#[test]
fn init_endmembers_may_leave_the_unit_interval() {
    let dir = TempDir::new().unwrap();
    let scene = small_scene(dir.path(), "lmm", "20", 60, 8);
    let mut m = read_csv(&scene.join("endmembers.csv")).unwrap();
    m[[0, 0]] = 1.2;
    m[[1, 1]] = -0.05;
    let init = dir.path().join("init.csv");
    fs::write(&init, encode_csv(&["e1".into(), "e2".into(), "e3".into()], &m)).unwrap();
    let out = dir.path().join("fcls");
    let code = run(&[
        "unmix",
        "--cube",
        s(&scene.join("cube.nlc")),
        "--method",
        "fcls",
        "--init",
        s(&init),
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0);
    // a synthesis library is still checked
    let bad = dir.path().join("bad");
    let code = run(&[
        "generate",
        "--preset",
        "dc1-small",
        "--bands",
        "8",
        "--endmember-csv",
        s(&init),
        "--out",
        s(&bad),
    ]);
    assert_eq!(code, 2);
}

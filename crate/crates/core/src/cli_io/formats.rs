//! File formats: cube files, numeric CSV, PGM abundance maps, and the
//! atomic write helper every command uses.
//!
//! A cube file is a UTF-8 header followed by the raw payload:
//!
//! ```text
//! NLCUBE 1
//! pixels=2500
//! rows=50
//! cols=50
//! bands=224
//! dtype=f32
//! byte_order=little
//! layout=pixel-major
//! end
//! ```
//!
//! `rows`/`cols` are optional but come together. The payload is
//! `pixels × bands` little-endian 32-bit floats, all bands of pixel 0 first.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::simdata::HsiCube;

pub const CUBE_MAGIC: &str = "NLCUBE 1";

/// Encodes a cube. Values are narrowed to `f32`.
pub fn encode_cube(cube: &HsiCube) -> Vec<u8> {
    let mut out = format!("{CUBE_MAGIC}\npixels={}\n", cube.pixels());
    if let Some((r, c)) = cube.grid() {
        out.push_str(&format!("rows={r}\ncols={c}\n"));
    }
    out.push_str(&format!(
        "bands={}\ndtype=f32\nbyte_order=little\nlayout=pixel-major\nend\n",
        cube.bands()
    ));
    let mut bytes = out.into_bytes();
    bytes.reserve(cube.pixels() * cube.bands() * 4);
    for v in cube.data().iter() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    bytes
}

pub fn decode_cube<R: BufRead>(mut r: R) -> Result<HsiCube> {
    let bad = |d: String| Error::format("cube file", d);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != CUBE_MAGIC {
        return Err(bad(format!("unexpected magic `{}`", line.trim_end())));
    }
    let (mut pixels, mut rows, mut cols, mut bands) = (None, None, None, None);
    let (mut dtype, mut order, mut layout) = (None, None, None);
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("header is not terminated by `end`".into()));
        }
        let l = line.trim_end();
        if l == "end" {
            break;
        }
        let (k, v) = l.split_once('=').ok_or_else(|| bad(format!("bad header line `{l}`")))?;
        let num = || {
            v.parse::<usize>()
                .map_err(|_| bad(format!("bad number for `{k}`: `{v}`")))
        };
        match k {
            "pixels" => pixels = Some(num()?),
            "rows" => rows = Some(num()?),
            "cols" => cols = Some(num()?),
            "bands" => bands = Some(num()?),
            "dtype" => dtype = Some(v.to_string()),
            "byte_order" => order = Some(v.to_string()),
            "layout" => layout = Some(v.to_string()),
            other => return Err(bad(format!("unknown header key `{other}`"))),
        }
    }
    let need = |v: Option<String>, key: &str, want: &str| match v.as_deref() {
        Some(s) if s == want => Ok(()),
        Some(s) => Err(bad(format!("unsupported {key} `{s}`"))),
        None => Err(bad(format!("missing `{key}`"))),
    };
    need(dtype, "dtype", "f32")?;
    need(order, "byte_order", "little")?;
    need(layout, "layout", "pixel-major")?;
    let bands = bands.ok_or_else(|| bad("missing `bands`".into()))?;
    let grid = match (rows, cols) {
        (Some(r), Some(c)) => Some((r, c)),
        (None, None) => None,
        _ => return Err(bad("`rows` and `cols` must appear together".into())),
    };
    let pixels = match (pixels, grid) {
        (Some(n), Some((r, c))) if n != r * c => return Err(bad(format!("pixels={n} disagrees with {r}x{c} grid"))),
        (Some(n), _) => n,
        (None, Some((r, c))) => r * c,
        (None, None) => return Err(bad("missing `pixels` (or rows and cols)".into())),
    };
    let expected = pixels
        .checked_mul(bands)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| bad("declared size overflows".into()))?;
    let mut payload = Vec::with_capacity(expected);
    r.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(bad(format!(
            "payload is {} bytes, header declares {expected}",
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    let data = Array2::from_shape_vec((pixels, bands), values).expect("length checked");
    HsiCube::new(data, grid)
}

/// Attaches the offending path to an I/O error.
pub(crate) fn io_at(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn read_cube(path: &Path) -> Result<HsiCube> {
    let f = fs::File::open(path).map_err(io_at(path))?;
    decode_cube(io::BufReader::new(f))
}

pub fn write_cube(path: &Path, cube: &HsiCube) -> Result<()> {
    write_atomic(path, &encode_cube(cube))
}

/// Numeric matrix as CSV: a header row of column names, then one row per
/// matrix row with shortest round-trip decimal values.
pub fn encode_csv(header: &[String], m: &Array2<f64>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Column names `{prefix}1 .. {prefix}n`.
pub fn column_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("{prefix}{k}")).collect()
}

pub fn decode_csv(text: &str) -> Result<Array2<f64>> {
    let bad = |d: String| Error::format("csv", d);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let cols = header.split(',').count();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols {
            return Err(bad(format!(
                "row {} has {} fields, header has {cols}",
                i + 1,
                cells.len()
            )));
        }
        for c in cells {
            values.push(
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("row {}: `{c}` is not a number", i + 1)))?,
            );
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(bad("no data rows".into()));
    }
    Ok(Array2::from_shape_vec((rows, cols), values).expect("rectangular"))
}

pub fn read_csv(path: &Path) -> Result<Array2<f64>> {
    decode_csv(&fs::read_to_string(path).map_err(io_at(path))?)
}

pub fn write_csv(path: &Path, header: &[String], m: &Array2<f64>) -> Result<()> {
    write_atomic(path, encode_csv(header, m).as_bytes())
}

/// 8-bit binary PGM of `values` (row-major over a `rows × cols` grid),
/// mapping 0 to black and 1 to white; values outside [0, 1] are clamped.
pub fn encode_pgm(rows: usize, cols: usize, values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(values.into_iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    debug_assert_eq!(out.len(), format!("P5\n{cols} {rows}\n255\n").len() + rows * cols);
    out
}

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_sibling(path);
    let result = (|| -> io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_at(path))
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp{}", std::process::id()))
}

/// Lowercase hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(io_at(path))?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cube_bytes_round_trip() {
        let cube = HsiCube::new(array![[0.5, 0.25], [1.0, 0.125], [0.0, 2.0], [3.0, 0.75]], Some((2, 2))).unwrap();
        let bytes = encode_cube(&cube);
        let back = decode_cube(&bytes[..]).unwrap();
        assert_eq!(back, cube);
        assert_eq!(encode_cube(&back), bytes);
    }

    #[test]
    fn cube_header_errors() {
        let cube = HsiCube::new(array![[0.5, 0.25]], None).unwrap();
        let bytes = encode_cube(&cube);
        assert!(decode_cube(&bytes[..bytes.len() - 1]).is_err());
        let text = String::from_utf8_lossy(&bytes).replace("dtype=f32", "dtype=f64");
        assert!(decode_cube(text.as_bytes()).is_err());
        let no_layout = "NLCUBE 1\npixels=1\nbands=1\ndtype=f32\nbyte_order=little\nend\n\0\0\0\0";
        assert!(decode_cube(no_layout.as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let m = array![[0.1, 1.0 / 3.0], [1e-300, -2.5e17]];
        let text = encode_csv(&column_names("e", 2), &m);
        assert!(text.starts_with("e1,e2\n0.1,"));
        assert_eq!(decode_csv(&text).unwrap(), m);
        assert!(decode_csv("a,b\n1,2,3\n").is_err());
        assert!(decode_csv("a\nx\n").is_err());
    }

    #[test]
    fn pgm_scaling() {
        let bytes = encode_pgm(1, 3, [0.0, 0.5, 1.2]);
        assert_eq!(&bytes[..11], b"P5\n3 1\n255\n");
        assert_eq!(&bytes[11..], &[0, 128, 255]);
    }

    #[test]
    fn sha_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}

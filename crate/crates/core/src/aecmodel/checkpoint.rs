//! Parameter checkpoints.
//!
//! Layout: a UTF-8 header of `key=value` lines opened by the magic line and
//! closed by `end`, then every tensor as little-endian `f64`, row-major.
//! Tensors follow the header's `tensor=<name> <rows> <cols>` lines in order:
//! `m0` first, then the trainables in [`AecParams::trainables`] order.
//!
//! ```text
//! NLAEC 1
//! variant=macu
//! bands=224
//! endmembers=3
//! seed=7
//! tensor=m0 224 3
//! tensor=m 224 3
//! ...
//! end
//! ```

use std::io::{BufRead, Write};

use super::{build_network, AecParams, Variant};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::simdata::{EndmemberMatrix, Provenance};

pub const CHECKPOINT_MAGIC: &str = "NLAEC 1";

pub fn write_checkpoint<W: Write>(mut w: W, params: &AecParams) -> Result<()> {
    let mut header = format!(
        "{CHECKPOINT_MAGIC}\nvariant={}\nbands={}\nendmembers={}\nseed={}\n",
        params.variant(),
        params.bands(),
        params.endmembers(),
        params.seed()
    );
    let names = params.trainable_names();
    let tensors = params.trainables();
    let all = std::iter::once(("m0".to_string(), params.m0())).chain(names.into_iter().zip(tensors));
    let mut payload = Vec::new();
    for (name, t) in all {
        header.push_str(&format!("tensor={name} {} {}\n", t.rows(), t.cols()));
        for v in t.values().iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    header.push_str("end\n");
    w.write_all(header.as_bytes())?;
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(mut r: R) -> Result<AecParams> {
    let bad = |d: String| Error::format("checkpoint", d);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != CHECKPOINT_MAGIC {
        return Err(bad(format!("unexpected magic `{}`", line.trim_end())));
    }
    let (mut variant, mut bands, mut endmembers, mut seed) = (None, None, None, None);
    let mut shapes: Vec<(String, usize, usize)> = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("header is not terminated by `end`".into()));
        }
        let l = line.trim_end();
        if l == "end" {
            break;
        }
        let (key, value) = l.split_once('=').ok_or_else(|| bad(format!("bad line `{l}`")))?;
        let num = |v: &str| v.parse::<usize>().map_err(|_| bad(format!("bad number `{v}`")));
        match key {
            "variant" => variant = Some(value.parse::<Variant>()?),
            "bands" => bands = Some(num(value)?),
            "endmembers" => endmembers = Some(num(value)?),
            "seed" => seed = Some(value.parse::<u64>().map_err(|_| bad(format!("bad seed `{value}`")))?),
            "tensor" => {
                let parts: Vec<&str> = value.split(' ').collect();
                if parts.len() != 3 {
                    return Err(bad(format!("bad tensor line `{value}`")));
                }
                shapes.push((parts[0].to_string(), num(parts[1])?, num(parts[2])?));
            }
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
    }
    let missing = |k: &str| bad(format!("missing `{k}`"));
    let variant = variant.ok_or_else(|| missing("variant"))?;
    let bands = bands.ok_or_else(|| missing("bands"))?;
    let endmembers = endmembers.ok_or_else(|| missing("endmembers"))?;
    let seed = seed.ok_or_else(|| missing("seed"))?;

    let mut tensors = Vec::with_capacity(shapes.len());
    for (_, rows, cols) in &shapes {
        let mut buf = vec![0u8; rows * cols * 8];
        r.read_exact(&mut buf)
            .map_err(|_| bad("payload shorter than the header declares".into()))?;
        let values = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push(Tensor::from_vec(*rows, *cols, values)?);
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(bad("trailing bytes after payload".into()));
    }
    if shapes.first().map(|s| s.0.as_str()) != Some("m0") {
        return Err(bad("first tensor must be `m0`".into()));
    }
    let m0 = tensors.remove(0);
    if m0.shape() != (bands, endmembers) {
        return Err(bad("m0 shape disagrees with bands/endmembers".into()));
    }
    let skeleton = EndmemberMatrix::new(m0.values().clone(), Provenance::Extracted)?;
    let mut params = build_network(&skeleton, variant, seed)?;
    let expected = params.trainable_names();
    let got: Vec<&str> = shapes[1..].iter().map(|s| s.0.as_str()).collect();
    if expected.iter().map(String::as_str).ne(got.iter().copied()) {
        return Err(bad("tensor list does not match the variant's layout".into()));
    }
    params.set_trainables(tensors)?;
    params.set_m0(m0)?;
    Ok(params)
}

//! Flat binary snapshot format for [`ReluMlp`].
//!
//! Layout: 16-byte header (magic `RMLP`, version u32, layer-dim count u32,
//! reserved u32, all little-endian), then `layer_dims` as LE u32s, then
//! each weight matrix row-major as LE f64 in layer order. Round-trips are
//! bit-exact.

use std::io::{Read, Write};

use ndarray::Array2;

use super::ReluMlp;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RMLP";
const VERSION: u32 = 1;

pub fn write_snapshot<W: Write>(model: &ReluMlp, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(model.layer_dims().len() as u32).to_le_bytes())?;
    out.write_all(&0u32.to_le_bytes())?;
    for &d in model.layer_dims() {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for w in model.weights() {
        for v in w.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R, field: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Parse(format!("{field}: {e}")))?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<ReluMlp> {
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|e| Error::Parse(format!("snapshot magic: {e}")))?;
    if &magic != MAGIC {
        return Err(Error::Parse(format!(
            "snapshot magic: expected {:?}, got {:?}",
            MAGIC, magic
        )));
    }
    let version = read_u32(&mut input, "snapshot version")?;
    if version != VERSION {
        return Err(Error::Parse(format!(
            "snapshot version: expected {VERSION}, got {version}"
        )));
    }
    let n_dims = read_u32(&mut input, "snapshot layer count")? as usize;
    if n_dims < 2 {
        return Err(Error::Parse(format!(
            "snapshot layer count: need >= 2 dims, got {n_dims}"
        )));
    }
    let _reserved = read_u32(&mut input, "snapshot reserved")?;
    let mut dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        dims.push(read_u32(&mut input, "snapshot layer dim")? as usize);
    }
    let mut weights = Vec::with_capacity(n_dims - 1);
    let mut buf = [0u8; 8];
    for l in 0..n_dims - 1 {
        let (rows, cols) = (dims[l + 1], dims[l]);
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            input
                .read_exact(&mut buf)
                .map_err(|e| Error::Parse(format!("weight matrix {l}: {e}")))?;
            data.push(f64::from_le_bytes(buf));
        }
        weights.push(
            Array2::from_shape_vec((rows, cols), data)
                .map_err(|e| Error::Parse(format!("weight matrix {l}: {e}")))?,
        );
    }
    let mut model = ReluMlp::from_weights(dims, weights)?;
    // The format carries no flag for the constant-unit convention; recover
    // it from the frozen-row pattern, which training never disturbs.
    if model.frozen_row_pattern() {
        model.set_hidden_bias(true);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let model = ReluMlp::with_seed(&[7, 5, 4, 3], 17).unwrap();
        let mut bytes = Vec::new();
        write_snapshot(&model, &mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"RMLP");
        let back = read_snapshot(bytes.as_slice()).unwrap();
        assert_eq!(back, model);
        assert!(back.has_hidden_bias());

        let mut again = Vec::new();
        write_snapshot(&back, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn raw_model_round_trips_without_bias_flag() {
        let model = ReluMlp::from_weights(
            vec![2, 2],
            vec![ndarray::array![[0.25, -1.5], [3.0, 0.125]]],
        )
        .unwrap();
        let mut bytes = Vec::new();
        write_snapshot(&model, &mut bytes).unwrap();
        let back = read_snapshot(bytes.as_slice()).unwrap();
        assert_eq!(back, model);
        assert!(!back.has_hidden_bias());
    }

    #[test]
    fn wrong_magic_is_parse_error() {
        let model = ReluMlp::with_seed(&[3, 3, 2], 0).unwrap();
        let mut bytes = Vec::new();
        write_snapshot(&model, &mut bytes).unwrap();
        bytes[0] = b'X';
        let err = read_snapshot(bytes.as_slice()).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn truncated_snapshot_names_the_field() {
        let model = ReluMlp::with_seed(&[3, 3, 2], 0).unwrap();
        let mut bytes = Vec::new();
        write_snapshot(&model, &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        let err = read_snapshot(bytes.as_slice()).unwrap_err();
        assert!(err.to_string().contains("weight matrix"));
    }
}

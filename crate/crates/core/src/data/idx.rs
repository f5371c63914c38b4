//! IDX (big-endian MNIST layout) reader and writer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::LabeledDataset;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;
const CLASSES: usize = 10;

fn read_u32_be<R: Read>(r: &mut R, field: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Parse(format!("{field}: {e}")))?;
    Ok(u32::from_be_bytes(buf))
}

/// Loads an image/label IDX pair into a dataset with pixel values scaled
/// to `[0,1]`. `limit` keeps only the first that many examples.
pub fn load_idx(
    images_path: &Path,
    labels_path: &Path,
    limit: Option<usize>,
) -> Result<LabeledDataset> {
    let mut images = BufReader::new(
        File::open(images_path).map_err(|e| Error::Parse(format!("images file: {e}")))?,
    );
    let mut labels = BufReader::new(
        File::open(labels_path).map_err(|e| Error::Parse(format!("labels file: {e}")))?,
    );

    let magic = read_u32_be(&mut images, "images magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Parse(format!(
            "images magic: wrong magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"
        )));
    }
    let image_count = read_u32_be(&mut images, "images count")? as usize;
    let rows = read_u32_be(&mut images, "images rows")? as usize;
    let cols = read_u32_be(&mut images, "images cols")? as usize;

    let magic = read_u32_be(&mut labels, "labels magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Parse(format!(
            "labels magic: wrong magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"
        )));
    }
    let label_count = read_u32_be(&mut labels, "labels count")? as usize;
    if label_count != image_count {
        return Err(Error::Parse(format!(
            "count mismatch: {image_count} images vs {label_count} labels"
        )));
    }

    let take = match limit {
        Some(l) => l.min(image_count),
        None => image_count,
    };
    if take == 0 {
        return Err(Error::Parse("images count: no examples to load".into()));
    }

    let dim = rows * cols;
    let mut pixel_bytes = vec![0u8; take * dim];
    images
        .read_exact(&mut pixel_bytes)
        .map_err(|e| Error::Parse(format!("images data: {e}")))?;
    let mut label_bytes = vec![0u8; take];
    labels
        .read_exact(&mut label_bytes)
        .map_err(|e| Error::Parse(format!("labels data: {e}")))?;

    if let Some(&bad) = label_bytes.iter().find(|&&b| b as usize >= CLASSES) {
        return Err(Error::Parse(format!(
            "labels data: label {bad} out of range 0..{CLASSES}"
        )));
    }

    let features = Array2::from_shape_vec(
        (take, dim),
        pixel_bytes.iter().map(|&b| b as f64 / 255.0).collect(),
    )
    .map_err(|e| Error::Parse(format!("images data: {e}")))?;
    LabeledDataset::new(
        features,
        label_bytes.iter().map(|&b| b as usize).collect(),
        CLASSES,
    )
}

/// Writes a dataset back out as an IDX pair. The feature dimension must
/// equal `rows * cols`; pixels are quantized with `round(v * 255)`, so a
/// dataset that came from [`load_idx`] round-trips exactly.
pub fn write_idx(
    dataset: &LabeledDataset,
    images_path: &Path,
    labels_path: &Path,
    rows: usize,
    cols: usize,
) -> Result<()> {
    if rows * cols != dataset.feature_dim() {
        return Err(Error::Shape(format!(
            "feature dim {} != {rows}x{cols}",
            dataset.feature_dim()
        )));
    }
    let n = dataset.len() as u32;

    let mut images = BufWriter::new(File::create(images_path)?);
    images.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    images.write_all(&n.to_be_bytes())?;
    images.write_all(&(rows as u32).to_be_bytes())?;
    images.write_all(&(cols as u32).to_be_bytes())?;
    for v in dataset.features().iter() {
        images.write_all(&[(v * 255.0).round() as u8])?;
    }
    images.flush()?;

    let mut labels = BufWriter::new(File::create(labels_path)?);
    labels.write_all(&LABELS_MAGIC.to_be_bytes())?;
    labels.write_all(&n.to_be_bytes())?;
    for &y in dataset.labels() {
        labels.write_all(&[y as u8])?;
    }
    labels.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn fixture(
        dir: &Path,
        count: u32,
        magic_images: u32,
    ) -> (std::path::PathBuf, std::path::PathBuf) {
        let images_path = dir.join("images-idx3-ubyte");
        let labels_path = dir.join("labels-idx1-ubyte");
        let mut f = File::create(&images_path).unwrap();
        f.write_all(&magic_images.to_be_bytes()).unwrap();
        f.write_all(&count.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        for i in 0..count * 4 {
            f.write_all(&[(i % 256) as u8]).unwrap();
        }
        let mut f = File::create(&labels_path).unwrap();
        f.write_all(&LABELS_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&count.to_be_bytes()).unwrap();
        for i in 0..count {
            f.write_all(&[(i % 10) as u8]).unwrap();
        }
        (images_path, labels_path)
    }

    #[test]
    fn limit_takes_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let (im, la) = fixture(dir.path(), 10, IMAGES_MAGIC);
        let ds = load_idx(&im, &la, Some(5)).unwrap();
        assert_eq!(ds.len(), 5);
        assert_eq!(ds.feature_dim(), 4);
        assert_eq!(ds.labels(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn wrong_images_magic_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let (im, la) = fixture(dir.path(), 4, LABELS_MAGIC);
        let err = load_idx(&im, &la, None).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("images magic") && msg.contains("wrong magic"),
            "{msg}"
        );
    }

    #[test]
    fn pixel_255_maps_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let (im, la) = fixture(dir.path(), 64, IMAGES_MAGIC);
        let ds = load_idx(&im, &la, None).unwrap();
        // byte value 255 appears at flat index 255
        let (r, c) = (255 / 4, 255 % 4);
        assert_eq!(ds.features()[[r, c]], 1.0);
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let (im, la) = fixture(dir.path(), 4, IMAGES_MAGIC);
        let bytes = std::fs::read(&im).unwrap();
        std::fs::write(&im, &bytes[..bytes.len() - 2]).unwrap();
        let err = load_idx(&im, &la, None).unwrap_err();
        assert!(err.to_string().contains("images data"));
    }

    #[test]
    fn count_mismatch_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let (im, la) = fixture(dir.path(), 4, IMAGES_MAGIC);
        // rebuild labels with a different count
        let mut f = File::create(&la).unwrap();
        f.write_all(&LABELS_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&3u32.to_be_bytes()).unwrap();
        f.write_all(&[0, 1, 2]).unwrap();
        drop(f);
        let err = load_idx(&im, &la, None).unwrap_err();
        assert!(err.to_string().contains("count mismatch"));
    }

    #[test]
    fn idx_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (im, la) = fixture(dir.path(), 20, IMAGES_MAGIC);
        let ds = load_idx(&im, &la, None).unwrap();
        let im2 = dir.path().join("back-images");
        let la2 = dir.path().join("back-labels");
        write_idx(&ds, &im2, &la2, 2, 2).unwrap();
        let back = load_idx(&im2, &la2, None).unwrap();
        assert_eq!(back, ds);
    }
}

//! IDX (MNIST) image and label files, optionally gzip-compressed.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn open(path: &Path) -> Result<Box<dyn Read>> {
    let file = BufReader::new(File::open(path)?);
    if path.extension().is_some_and(|ext| ext == "gz") {
        Ok(Box::new(GzDecoder::new(file)))
    } else {
        Ok(Box::new(file))
    }
}

fn read_u32(r: &mut dyn Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_be_bytes(b))
}

fn expect_magic(r: &mut dyn Read, want: u32, path: &Path) -> Result<()> {
    let got = read_u32(r)?;
    if got != want {
        return Err(Error::Format(format!(
            "{}: magic {got:#010x}, expected {want:#010x}",
            path.display()
        )));
    }
    Ok(())
}

/// Loads an IDX image/label pair; pixels are scaled to `[0, 1]` by `/ 255`.
pub fn load_idx(image_path: impl AsRef<Path>, label_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let (image_path, label_path) = (image_path.as_ref(), label_path.as_ref());

    let mut images = open(image_path)?;
    expect_magic(&mut *images, IMAGE_MAGIC, image_path)?;
    let n_images = read_u32(&mut *images)? as usize;
    let rows = read_u32(&mut *images)? as usize;
    let cols = read_u32(&mut *images)? as usize;

    let mut labels = open(label_path)?;
    expect_magic(&mut *labels, LABEL_MAGIC, label_path)?;
    let n_labels = read_u32(&mut *labels)? as usize;
    if n_images != n_labels {
        return Err(Error::Consistency(format!("{n_images} images but {n_labels} labels")));
    }

    let dim = rows * cols;
    let mut pixels = vec![0u8; n_images * dim];
    images.read_exact(&mut pixels)?;
    let mut label_bytes = vec![0u8; n_labels];
    labels.read_exact(&mut label_bytes)?;

    let features: Vec<f64> = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let features = Matrix::from_vec_unchecked(n_images, dim, features);
    LabeledDataset::new(features, Some(label_bytes.into_iter().map(usize::from).collect()))
}

/// Serialises images (row-major bytes) and labels as an IDX pair. Used by tests and fixtures.
pub fn write_idx(
    image_path: impl AsRef<Path>,
    label_path: impl AsRef<Path>,
    rows: u32,
    cols: u32,
    pixels: &[u8],
    labels: &[u8],
) -> Result<()> {
    let mut img = Vec::with_capacity(16 + pixels.len());
    img.extend(IMAGE_MAGIC.to_be_bytes());
    img.extend((labels.len() as u32).to_be_bytes());
    img.extend(rows.to_be_bytes());
    img.extend(cols.to_be_bytes());
    img.extend_from_slice(pixels);
    std::fs::write(image_path, img)?;

    let mut lab = Vec::with_capacity(8 + labels.len());
    lab.extend(LABEL_MAGIC.to_be_bytes());
    lab.extend((labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    std::fs::write(label_path, lab)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn handcrafted_two_by_two() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
        write_idx(&img, &lab, 2, 2, &[0, 255, 128, 64], &[7]).unwrap();
        let d = load_idx(&img, &lab).unwrap();
        assert_eq!((d.len(), d.dim()), (1, 4));
        assert_eq!(d.features().row(0), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
        assert_eq!(d.labels().unwrap(), &[7]);
    }

    #[test]
    fn label_magic_in_image_slot() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
        write_idx(&img, &lab, 1, 1, &[3], &[1]).unwrap();
        assert!(matches!(load_idx(&lab, &lab), Err(Error::Format(_))));
    }

    #[test]
    fn count_mismatch_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab, lab2) = (dir.path().join("img"), dir.path().join("lab"), dir.path().join("lab2"));
        write_idx(&img, &lab, 1, 2, &[1, 2, 3, 4], &[0, 1]).unwrap();
        write_idx(dir.path().join("x"), &lab2, 1, 2, &[1, 2, 3, 4, 5, 6], &[0, 1, 2]).unwrap();
        assert!(matches!(load_idx(&img, &lab2), Err(Error::Consistency(_))));

        let bytes = std::fs::read(&img).unwrap();
        std::fs::write(&img, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(load_idx(&img, &lab), Err(Error::Io(_))));
    }

    #[test]
    fn gzip_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
        write_idx(&img, &lab, 1, 3, &[0, 51, 255, 102, 0, 0], &[2, 4]).unwrap();
        let gz = dir.path().join("img.gz");
        let mut enc = flate2::write::GzEncoder::new(File::create(&gz).unwrap(), flate2::Compression::fast());
        enc.write_all(&std::fs::read(&img).unwrap()).unwrap();
        enc.finish().unwrap();
        assert_eq!(load_idx(&gz, &lab).unwrap(), load_idx(&img, &lab).unwrap());
    }
}

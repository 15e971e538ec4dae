//! Labeled inputs: MNIST-style IDX pairs or JSON `[{"input": [...], "label": n}]`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: Vec<f64>,
    pub label: usize,
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Dataset(format!("{what}: truncated header")))
}

/// Images as `u8` pixels scaled into `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Dataset(format!(
            "images: magic {magic}, expected {IMAGE_MAGIC}"
        )));
    }
    let count = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let size = rows * cols;
    let body = &bytes[16..];
    if body.len() != count * size {
        return Err(Error::Dataset(format!(
            "images: header declares {count}x{rows}x{cols} pixels, body has {}",
            body.len()
        )));
    }
    if size == 0 {
        return Ok(vec![Vec::new(); count]);
    }
    Ok(body
        .chunks_exact(size)
        .map(|img| img.iter().map(|&p| f64::from(p) / 255.0).collect())
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != LABEL_MAGIC {
        return Err(Error::Dataset(format!(
            "labels: magic {magic}, expected {LABEL_MAGIC}"
        )));
    }
    let count = be_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::Dataset(format!(
            "labels: header declares {count} labels, body has {}",
            body.len()
        )));
    }
    Ok(body.iter().map(|&l| usize::from(l)).collect())
}

pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Vec<Sample>> {
    let images = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if images.len() != labels.len() {
        return Err(Error::Dataset(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    Ok(images
        .into_iter()
        .zip(labels)
        .map(|(input, label)| Sample { input, label })
        .collect())
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<Vec<Sample>> {
    let img = fs::read(images).map_err(|e| Error::io(images, e))?;
    let lab = fs::read(labels).map_err(|e| Error::io(labels, e))?;
    parse_idx(&img, &lab)
}

pub fn parse_json(text: &str) -> Result<Vec<Sample>> {
    let samples: Vec<Sample> =
        serde_json::from_str(text).map_err(|e| Error::Dataset(format!("dataset JSON: {e}")))?;
    if samples.iter().any(|s| s.input.iter().any(|v| !v.is_finite())) {
        return Err(Error::Dataset("dataset JSON: non-finite input value".into()));
    }
    Ok(samples)
}

/// Labels file paired with an IDX images file by the MNIST naming
/// convention (`*-images-idx3-ubyte` next to `*-labels-idx1-ubyte`).
pub fn sibling_labels(images: &Path) -> Option<PathBuf> {
    let name = images.file_name()?.to_str()?;
    let paired = name.replace("images", "labels").replace("idx3", "idx1");
    (paired != name).then(|| images.with_file_name(paired))
}

/// JSON when the file starts with `[`, otherwise an IDX images file whose
/// labels live in the conventionally named sibling.
pub fn load_dataset(path: &Path) -> Result<Vec<Sample>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'[') {
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Error::Dataset("dataset JSON is not UTF-8".into()))?;
        return parse_json(text);
    }
    let labels = sibling_labels(path).ok_or_else(|| {
        Error::Dataset(format!(
            "cannot infer the labels file for {}; name it *-labels-idx1-ubyte",
            path.display()
        ))
    })?;
    let lab = fs::read(&labels).map_err(|e| Error::io(&labels, e))?;
    parse_idx(&bytes, &lab)
}

/// The first `n` samples, or all of them.
pub fn first_n(mut samples: Vec<Sample>, n: Option<usize>) -> Vec<Sample> {
    if let Some(n) = n {
        samples.truncate(n);
    }
    samples
}

#[cfg(test)]
pub(crate) fn idx_bytes(images: &[Vec<u8>], rows: u32, cols: u32, labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut img = Vec::new();
    for v in [IMAGE_MAGIC, images.len() as u32, rows, cols] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    images.iter().for_each(|i| img.extend_from_slice(i));
    let mut lab = Vec::new();
    for v in [LABEL_MAGIC, labels.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend_from_slice(labels);
    (img, lab)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_single_pair() {
        let s = parse_json(r#"[{"input":[0,0],"label":1}]"#).unwrap();
        assert_eq!(s, vec![Sample { input: vec![0.0, 0.0], label: 1 }]);
    }

    #[test]
    fn idx_round_trip_normalizes() {
        let (img, lab) = idx_bytes(&[vec![0, 255, 51, 102], vec![255, 0, 0, 0]], 2, 2, &[7, 3]);
        let s = parse_idx(&img, &lab).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].input, vec![0.0, 1.0, 0.2, 0.4]);
        assert_eq!(s[1].label, 3);
    }

    #[test]
    fn idx_wrong_magic() {
        let (mut img, lab) = idx_bytes(&[vec![0; 4]], 2, 2, &[0]);
        img[3] = 0x04;
        assert!(matches!(parse_idx(&img, &lab), Err(Error::Dataset(_))));
        let (img, mut lab) = idx_bytes(&[vec![0; 4]], 2, 2, &[0]);
        lab[3] = 0x03;
        assert!(matches!(parse_idx(&img, &lab), Err(Error::Dataset(_))));
    }

    #[test]
    fn idx_length_mismatch() {
        let (img, lab) = idx_bytes(&[vec![0; 4], vec![1; 4]], 2, 2, &[0]);
        assert!(matches!(parse_idx(&img, &lab), Err(Error::Dataset(_))));
        let (mut img, lab) = idx_bytes(&[vec![0; 4]], 2, 2, &[0]);
        img.pop();
        assert!(parse_idx(&img, &lab).is_err());
    }

    #[test]
    fn loads_files_and_pairs_siblings() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = idx_bytes(&[vec![1, 2], vec![3, 4], vec![5, 6]], 1, 2, &[0, 1, 2]);
        let ip = dir.path().join("t10k-images-idx3-ubyte");
        fs::write(&ip, img).unwrap();
        fs::write(dir.path().join("t10k-labels-idx1-ubyte"), lab).unwrap();
        let all = load_dataset(&ip).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(first_n(all, Some(2)).len(), 2);

        let jp = dir.path().join("d.json");
        fs::write(&jp, r#" [{"input":[0.5],"label":0}]"#).unwrap();
        assert_eq!(load_dataset(&jp).unwrap()[0].input, vec![0.5]);
        assert!(matches!(
            load_dataset(&dir.path().join("missing.json")),
            Err(Error::Io { .. })
        ));
    }
}

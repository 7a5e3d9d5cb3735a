//! `ALOC` checkpoint: magic, u16 version, u32 K, u32 m, then f64 `W`
//! row-major and f64 `b`, all little-endian.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{ClassifierError, LinearClassifier};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"ALOC";
const VERSION: u16 = 1;

pub fn write_checkpoint(clf: &LinearClassifier, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
    let (k, m) = (clf.num_classes(), clf.dim());
    let mut out = Vec::with_capacity(14 + 8 * k * (m + 1));
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(k as u32).to_le_bytes());
    out.extend_from_slice(&(m as u32).to_le_bytes());
    for v in clf.weights().iter().chain(clf.bias().iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<LinearClassifier, ClassifierError> {
    let buf = fs::read(path)?;
    let bad = |msg: &str| ClassifierError::Checkpoint(msg.to_owned());
    if buf.len() < 14 {
        return Err(bad("truncated header"));
    }
    if buf[..4] != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != VERSION {
        return Err(ClassifierError::Checkpoint(format!("unsupported version {version}")));
    }
    let k = u32::from_le_bytes(buf[6..10].try_into().unwrap()) as usize;
    let m = u32::from_le_bytes(buf[10..14].try_into().unwrap()) as usize;
    let expected = k
        .checked_mul(m + 1)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(14))
        .ok_or_else(|| bad("truncated payload"))?;
    if buf.len() != expected {
        return Err(bad(if buf.len() < expected { "truncated payload" } else { "trailing bytes" }));
    }
    let values: Vec<f64> = buf[14..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let weights = Array2::from_shape_vec((k, m), values[..k * m].to_vec()).map_err(|e| bad(&e.to_string()))?;
    let bias = Array1::from(values[k * m..].to_vec());
    LinearClassifier::from_parts(weights, bias)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn roundtrip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("probe.aloc");
        let clf = LinearClassifier::from_parts(array![[1.5, -2.0, 0.0], [1e-300, 3.0, -0.5]], array![0.25, -7.0]).unwrap();
        write_checkpoint(&clf, &path).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap(), clf);

        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(ClassifierError::Checkpoint(m)) if m == "truncated payload"));

        bytes[0] = b'Z';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(ClassifierError::Checkpoint(m)) if m == "bad magic"));
    }
}

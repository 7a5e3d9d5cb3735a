//! Little-endian binary dataset format.
//!
//! ```text
//! "ALOE" | u16 version | u8 flags | u32 K | u64 n | u32 m
//! K x (u16 len, utf-8 class name)
//! n x u8 split tag (0 train, 1 validation, 2 test)
//! n*m x f32, row-major
//! [flags bit0] n x u16 label id
//! [flags bit1] u64 len, utf-8 JSON array of n metadata objects
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::{Dataset, DatasetError, Metadata, Split};
use crate::ClassId;

pub const MAGIC: [u8; 4] = *b"ALOE";
pub const FORMAT_VERSION: u16 = 1;

const FLAG_LABELS: u8 = 0b01;
const FLAG_METADATA: u8 = 0b10;

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let bytes = encode(dataset)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    file.sync_all()?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    decode(&fs::read(path)?)
}

pub(crate) fn encode(d: &Dataset) -> Result<Vec<u8>, DatasetError> {
    let (n, m) = (d.len(), d.dim());
    let mut out = Vec::with_capacity(23 + n * (1 + 4 * m + 2));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let mut flags = 0u8;
    if d.labels.is_some() {
        flags |= FLAG_LABELS;
    }
    if d.metadata.is_some() {
        flags |= FLAG_METADATA;
    }
    out.push(flags);
    out.extend_from_slice(&(d.num_classes() as u32).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(m as u32).to_le_bytes());
    for name in &d.classes {
        let len = u16::try_from(name.len())
            .map_err(|_| DatasetError::Shape(format!("class name longer than {} bytes", u16::MAX)))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    out.extend(d.splits.iter().map(|s| s.tag()));
    for v in d.vectors.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(labels) = &d.labels {
        for l in labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    if let Some(meta) = &d.metadata {
        let json = serde_json::to_vec(meta).map_err(|e| DatasetError::Metadata(e.to_string()))?;
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &'static str) -> Result<&'a [u8], DatasetError> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&end| end <= self.buf.len())
            .ok_or(DatasetError::Truncated(what))?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], DatasetError> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    /// Takes `count * width` bytes, failing early instead of allocating for a
    /// header that promises more data than the file holds.
    fn take_items(&mut self, count: usize, width: usize, what: &'static str) -> Result<&'a [u8], DatasetError> {
        let len = count.checked_mul(width).ok_or(DatasetError::Truncated(what))?;
        self.take(len, what)
    }
}

pub(crate) fn decode(buf: &[u8]) -> Result<Dataset, DatasetError> {
    let mut cur = Cursor { buf, pos: 0 };
    if cur.array::<4>("magic")? != MAGIC {
        return Err(DatasetError::BadMagic);
    }
    let version = u16::from_le_bytes(cur.array("version")?);
    if version != FORMAT_VERSION {
        return Err(DatasetError::UnsupportedVersion(version));
    }
    let flags = cur.array::<1>("flags")?[0];
    let k = u32::from_le_bytes(cur.array("class count")?) as usize;
    let n = usize::try_from(u64::from_le_bytes(cur.array("sample count")?))
        .map_err(|_| DatasetError::Truncated("sample count"))?;
    let m = u32::from_le_bytes(cur.array("dimension")?) as usize;

    let mut classes = Vec::with_capacity(k.min(cur.remaining() / 2));
    for _ in 0..k {
        let len = u16::from_le_bytes(cur.array("class name length")?) as usize;
        let raw = cur.take(len, "class name")?;
        let name = std::str::from_utf8(raw).map_err(|_| DatasetError::InvalidUtf8("class name"))?;
        classes.push(name.to_owned());
    }

    let tags = cur.take_items(n, 1, "split tags")?;
    let splits = tags
        .iter()
        .enumerate()
        .map(|(row, &tag)| Split::from_tag(tag).ok_or(DatasetError::InvalidSplitTag { row, tag }))
        .collect::<Result<Vec<_>, _>>()?;

    let cells = n.checked_mul(m).ok_or(DatasetError::Truncated("embedding matrix"))?;
    let raw = cur.take_items(cells, 4, "embedding matrix")?;
    let values: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();
    let vectors = Array2::from_shape_vec((n, m), values).map_err(|e| DatasetError::Shape(e.to_string()))?;

    let labels = if flags & FLAG_LABELS != 0 {
        let raw = cur.take_items(n, 2, "labels")?;
        let labels: Vec<ClassId> = raw
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| usize::from(l) >= k) {
            return Err(DatasetError::LabelOutOfRange { row, label, classes: k });
        }
        Some(labels)
    } else {
        None
    };

    let metadata = if flags & FLAG_METADATA != 0 {
        let len = usize::try_from(u64::from_le_bytes(cur.array("metadata length")?))
            .map_err(|_| DatasetError::Truncated("metadata"))?;
        let raw = cur.take(len, "metadata")?;
        let text = std::str::from_utf8(raw).map_err(|_| DatasetError::InvalidUtf8("metadata"))?;
        let meta: Vec<Metadata> =
            serde_json::from_str(text).map_err(|e| DatasetError::Metadata(e.to_string()))?;
        Some(meta)
    } else {
        None
    };

    if cur.remaining() != 0 {
        return Err(DatasetError::TrailingBytes(cur.remaining()));
    }
    Dataset::new(vectors, splits, labels, classes, metadata)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{generate_synthetic, SyntheticSpec};

    fn sample() -> Dataset {
        let d = generate_synthetic(&SyntheticSpec {
            classes: 3,
            dim: 4,
            per_class: 5,
            separation: 2.0,
            seed: 11,
        })
        .unwrap();
        let meta = (0..d.len())
            .map(|i| Metadata::from([("audio_url".to_string(), format!("https://example.org/{i}.wav"))]))
            .collect();
        Dataset::new(d.vectors.clone(), d.splits.clone(), d.labels.clone(), d.classes.clone(), Some(meta)).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"ALOE");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(bytes[6], FLAG_LABELS | FLAG_METADATA);
        assert_eq!(u32::from_le_bytes(bytes[7..11].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[11..19].try_into().unwrap()), 45);
        assert_eq!(u32::from_le_bytes(bytes[19..23].try_into().unwrap()), 4);
    }

    #[test]
    fn roundtrip_with_metadata() {
        let d = sample();
        assert_eq!(decode(&encode(&d).unwrap()).unwrap(), d);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode(&sample()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(DatasetError::BadMagic)));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = encode(&sample()).unwrap();
        bytes[4] = 2;
        assert!(matches!(decode(&bytes), Err(DatasetError::UnsupportedVersion(2))));
    }

    #[test]
    fn truncated_mid_matrix() {
        let bytes = encode(&sample()).unwrap();
        // header (23) + class names (3 * (2 + 7)) + 45 split tags + a few floats
        let cut = 23 + 27 + 45 + 10;
        assert!(matches!(
            decode(&bytes[..cut]),
            Err(DatasetError::Truncated("embedding matrix"))
        ));
    }

    #[test]
    fn label_out_of_range() {
        let d = sample();
        let mut bytes = encode(&d).unwrap();
        let labels_at = 23 + 27 + 45 + 45 * 4 * 4;
        bytes[labels_at] = 9;
        assert!(matches!(
            decode(&bytes),
            Err(DatasetError::LabelOutOfRange { row: 0, label: 9, classes: 3 })
        ));
    }

    #[test]
    fn huge_header_does_not_allocate() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC);
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.push(0);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&u64::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.push(b'a');
        assert!(matches!(decode(&bytes), Err(DatasetError::Truncated(_))));
    }

    #[test]
    fn trailing_garbage() {
        let mut bytes = encode(&sample()).unwrap();
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(DatasetError::TrailingBytes(1))));
    }
}

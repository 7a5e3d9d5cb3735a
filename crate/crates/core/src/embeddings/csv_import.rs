use std::path::Path;

use ndarray::Array2;

use super::{Dataset, DatasetError, Metadata, Split};
use crate::ClassId;

/// Reads externally computed embeddings from CSV.
///
/// Expected header: `id,split[,label],e0..e{m-1}`. Class names are the
/// distinct label strings in order of first appearance. The `id` column is
/// kept as the `id` metadata entry of each row. Row numbers in errors are
/// 1-based data rows (the header is row 0).
pub fn import_csv(path: impl AsRef<Path>, dim: usize, has_labels: bool) -> Result<Dataset, DatasetError> {
    let reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(0, e))?;
    read_rows(reader, dim, has_labels)
}

fn csv_error(row: usize, e: csv::Error) -> DatasetError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DatasetError::Io(io),
        other => DatasetError::Csv {
            row,
            message: format!("{other:?}"),
        },
    }
}

fn read_rows<R: std::io::Read>(mut reader: csv::Reader<R>, dim: usize, has_labels: bool) -> Result<Dataset, DatasetError> {
    if dim == 0 {
        return Err(DatasetError::Shape("embedding dimension must be >= 1".into()));
    }
    let lead = if has_labels { 3 } else { 2 };
    let headers = reader.headers().map_err(|e| csv_error(0, e))?.clone();
    if headers.len() != lead + dim {
        return Err(DatasetError::Csv {
            row: 0,
            message: format!("header has {} columns, expected {}", headers.len(), lead + dim),
        });
    }

    let mut values = Vec::new();
    let mut splits = Vec::new();
    let mut labels = Vec::new();
    let mut classes: Vec<String> = Vec::new();
    let mut metadata = Vec::new();

    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| csv_error(row, e))?;
        if record.len() != lead + dim {
            return Err(DatasetError::Csv {
                row,
                message: format!("{} columns, expected {}", record.len(), lead + dim),
            });
        }
        metadata.push(Metadata::from([("id".to_string(), record[0].to_string())]));
        let split: Split = record[1].parse().map_err(|message| DatasetError::Csv { row, message })?;
        splits.push(split);
        if has_labels {
            let name = &record[2];
            let id = match classes.iter().position(|c| c == name) {
                Some(i) => i,
                None => {
                    classes.push(name.to_string());
                    classes.len() - 1
                }
            };
            let id = ClassId::try_from(id).map_err(|_| DatasetError::Csv {
                row,
                message: "too many distinct labels".into(),
            })?;
            labels.push(id);
        }
        for (col, cell) in record.iter().skip(lead).enumerate() {
            let v: f32 = cell.parse().map_err(|_| DatasetError::Csv {
                row,
                message: format!("column e{col}: {cell:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(DatasetError::Csv {
                    row,
                    message: format!("column e{col}: non-finite value"),
                });
            }
            values.push(v);
        }
    }

    let n = splits.len();
    let vectors = Array2::from_shape_vec((n, dim), values).map_err(|e| DatasetError::Shape(e.to_string()))?;
    // Unlabeled input still needs a class list; the human oracle supplies
    // names through the serving config, so keep a placeholder.
    if classes.is_empty() {
        classes.push("unknown".into());
    }
    Dataset::new(vectors, splits, has_labels.then_some(labels), classes, Some(metadata))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_rows_two_classes() {
        let f = write("id,split,label,e0,e1\nx1,train,a,0.5,1\nx2,validation,b,2,3\nx3,test,a,-1,4e-1\n");
        let d = import_csv(f.path(), 2, true).unwrap();
        assert_eq!(d.num_classes(), 2);
        assert_eq!(d.classes(), ["a", "b"]);
        assert_eq!(d.labels().unwrap(), [0, 1, 0]);
        assert_eq!(d.row(2).to_vec(), vec![-1.0, 0.4]);
        assert_eq!(d.metadata_for(1).unwrap()["id"], "x2");
        assert_eq!(d.splits(), [Split::Train, Split::Validation, Split::Test]);
    }

    #[test]
    fn short_row_names_the_row() {
        let f = write("id,split,label,e0,e1\nx1,train,a,0.5,1\nx2,train,b,2\n");
        match import_csv(f.path(), 2, true) {
            Err(DatasetError::Csv { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell() {
        let f = write("id,split,e0\nx1,train,abc\n");
        assert!(matches!(import_csv(f.path(), 1, false), Err(DatasetError::Csv { row: 1, .. })));
    }

    #[test]
    fn unknown_split() {
        let f = write("id,split,e0\nx1,holdout,1\n");
        assert!(matches!(import_csv(f.path(), 1, false), Err(DatasetError::Csv { row: 1, .. })));
    }

    #[test]
    fn unlabeled_input() {
        let f = write("id,split,e0,e1\nu1,train,1,2\nu2,test,3,4\n");
        let d = import_csv(f.path(), 2, false).unwrap();
        assert!(d.labels().is_none());
        assert_eq!(d.len(), 2);
    }
}

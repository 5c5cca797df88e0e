//! Dataset files.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size        field
//! 0       4           magic "DS3D"
//! 4       4   u32     format version (1)
//! 8       8   u64     n_samples
//! 16      8   u64     dimension
//! 24      8   u64     n_classes (0 = real-valued targets)
//! 32      8·n·d f64   features, row-major (sample by sample)
//! ...     8·n         labels: u64 class index, or f64 target when n_classes = 0
//! ```
//!
//! The CSV form has a header `f0,…,f{d-1},class` (or `…,target`) and one row
//! per sample. It exists for inspection; the binary form is authoritative.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Dataset, Label, ModelError, Sample};

pub const DATASET_MAGIC: [u8; 4] = *b"DS3D";
pub const DATASET_VERSION: u32 = 1;

pub fn write_binary(data: &Dataset, path: &Path) -> Result<(), ModelError> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&DATASET_MAGIC)?;
    out.write_all(&DATASET_VERSION.to_le_bytes())?;
    for n in [data.len(), data.dimension, data.n_classes] {
        out.write_all(&(n as u64).to_le_bytes())?;
    }
    for s in &data.samples {
        if s.features.len() != data.dimension {
            return Err(ModelError::Format(format!(
                "sample has {} features, dataset dimension is {}",
                s.features.len(),
                data.dimension
            )));
        }
        for x in &s.features {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    for s in &data.samples {
        match (s.label, data.n_classes) {
            (Label::Class(c), k) if k > 0 => out.write_all(&(c as u64).to_le_bytes())?,
            (Label::Target(t), 0) => out.write_all(&t.to_le_bytes())?,
            _ => {
                return Err(ModelError::Format(
                    "label kind does not match n_classes".into(),
                ))
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<Dataset, ModelError> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if magic != DATASET_MAGIC {
        return Err(ModelError::Format(format!("bad magic {magic:?}")));
    }
    let version = u32::from_le_bytes(read_array(&mut input)?);
    if version != DATASET_VERSION {
        return Err(ModelError::Format(format!("unsupported version {version}")));
    }
    let n = read_u64(&mut input)? as usize;
    let dimension = read_u64(&mut input)? as usize;
    let n_classes = read_u64(&mut input)? as usize;
    let mut features = Vec::with_capacity(n);
    for _ in 0..n {
        let row = (0..dimension)
            .map(|_| read_array(&mut input).map(f64::from_le_bytes))
            .collect::<Result<Vec<_>, _>>()?;
        features.push(row);
    }
    let mut samples = Vec::with_capacity(n);
    for row in features {
        let label = if n_classes > 0 {
            let c = read_u64(&mut input)? as usize;
            if c >= n_classes {
                return Err(ModelError::LabelOutOfRange {
                    label: c,
                    classes: n_classes,
                });
            }
            Label::Class(c)
        } else {
            Label::Target(f64::from_le_bytes(read_array(&mut input)?))
        };
        samples.push(Sample {
            features: row,
            label,
        });
    }
    if input.read(&mut [0u8; 1])? != 0 {
        return Err(ModelError::Format("trailing bytes after labels".into()));
    }
    Ok(Dataset {
        samples,
        dimension,
        n_classes,
    })
}

pub fn write_csv(data: &Dataset, path: &Path) -> Result<(), ModelError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = (0..data.dimension).map(|k| format!("f{k}")).collect();
    header.push(
        if data.n_classes > 0 {
            "class"
        } else {
            "target"
        }
        .to_string(),
    );
    w.write_record(&header).map_err(csv_err)?;
    for s in &data.samples {
        let mut row: Vec<String> = s.features.iter().map(|x| format!("{x:?}")).collect();
        row.push(match s.label {
            Label::Class(c) => c.to_string(),
            Label::Target(t) => format!("{t:?}"),
        });
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the CSV form. The class count is taken as the largest label + 1.
pub fn read_csv(path: &Path) -> Result<Dataset, ModelError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    let Some(last) = header.iter().next_back() else {
        return Err(ModelError::Format("empty header".into()));
    };
    let classes = match last {
        "class" => true,
        "target" => false,
        other => {
            return Err(ModelError::Format(format!(
                "unknown label column {other:?}"
            )))
        }
    };
    let dimension = header.len() - 1;
    let mut samples = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| ModelError::Format(format!("row {}: {e}", line + 1)))
        };
        let features = record
            .iter()
            .take(dimension)
            .map(parse)
            .collect::<Result<Vec<_>, _>>()?;
        let label_field = &record[dimension];
        let label = if classes {
            Label::Class(
                label_field
                    .parse()
                    .map_err(|e| ModelError::Format(format!("row {}: {e}", line + 1)))?,
            )
        } else {
            Label::Target(parse(label_field)?)
        };
        samples.push(Sample { features, label });
    }
    let n_classes = if classes {
        samples
            .iter()
            .filter_map(|s| match s.label {
                Label::Class(c) => Some(c + 1),
                Label::Target(_) => None,
            })
            .max()
            .unwrap_or(0)
    } else {
        0
    };
    Ok(Dataset {
        samples,
        dimension,
        n_classes,
    })
}

fn csv_err(e: csv::Error) -> ModelError {
    ModelError::Format(e.to_string())
}

fn read_array<const N: usize>(input: &mut impl Read) -> std::io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u64(input: &mut impl Read) -> std::io::Result<u64> {
    read_array(input).map(u64::from_le_bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_synthetic_dataset, DatasetSpec, ModelKind};

    #[test]
    fn binary_header_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let data = Dataset {
            samples: vec![
                Sample::class(vec![1.0, -2.0], 1),
                Sample::class(vec![0.5, 0.25], 0),
            ],
            dimension: 2,
            n_classes: 2,
        };
        write_binary(&data, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 32 + 8 * 4 + 8 * 2);
        assert_eq!(&bytes[..4], b"DS3D");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[40..48].try_into().unwrap()), -2.0);
        assert_eq!(u64::from_le_bytes(bytes[64..72].try_into().unwrap()), 1);
        assert_eq!(read_binary(&path).unwrap(), data);
    }

    #[test]
    fn binary_and_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for spec in [
            DatasetSpec::new(ModelKind::LogisticRegression, 50, 5, 3, 2),
            DatasetSpec::new(ModelKind::Quadratic, 20, 4, 0, 2),
        ] {
            let data = make_synthetic_dataset(&spec).unwrap();
            let bin = dir.path().join("d.bin");
            write_binary(&data, &bin).unwrap();
            assert_eq!(read_binary(&bin).unwrap(), data);
            let csv = dir.path().join("d.csv");
            write_csv(&data, &csv).unwrap();
            assert_eq!(read_csv(&csv).unwrap(), data);
        }
    }

    #[test]
    fn truncated_or_corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let data = make_synthetic_dataset(&DatasetSpec::new(ModelKind::Mlp, 10, 3, 2, 0)).unwrap();
        write_binary(&data, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_binary(&path).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(read_binary(&path), Err(ModelError::Format(_))));
        let mut extra = bytes;
        extra.push(0);
        std::fs::write(&path, &extra).unwrap();
        assert!(read_binary(&path).is_err());
    }
}

//! Dataset files: a CSV with `dim_0,...,dim_{D-1},label` columns plus a JSON
//! sidecar (`<stem>.meta.json`) carrying the name, shape, split boundaries,
//! generator spec and seed.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::series::{SeriesDataset, SplitBounds};
use super::synth::AnomalySpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub name: String,
    pub t_len: usize,
    pub dims: usize,
    pub splits: SplitBounds,
    pub seed: Option<u64>,
    pub generator: Option<AnomalySpec>,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Write the CSV and its sidecar. Floats print with Rust's shortest
/// round-trip formatting, so identical data yields byte-identical files.
pub fn save_dataset<F: Scalar>(
    dataset: &SeriesDataset<F>,
    csv_path: &Path,
    seed: Option<u64>,
    generator: Option<&AnomalySpec>,
) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(csv_path)?);
    let d = dataset.dims();
    let mut header = String::new();
    for dim in 0..d {
        header.push_str(&format!("dim_{dim},"));
    }
    header.push_str("label");
    writeln!(out, "{header}")?;
    for t in 0..dataset.t_len() {
        let mut line = String::new();
        for dim in 0..d {
            line.push_str(&format!("{},", dataset.values.at2(t, dim)));
        }
        line.push_str(&format!("{}", dataset.labels[t]));
        writeln!(out, "{line}")?;
    }
    out.flush()?;

    let meta = DatasetMeta {
        format_version: DATASET_FORMAT_VERSION,
        name: dataset.name.clone(),
        t_len: dataset.t_len(),
        dims: d,
        splits: dataset.splits,
        seed,
        generator: generator.cloned(),
    };
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(sidecar_path(csv_path), json)?;
    Ok(())
}

/// Load a dataset CSV. When the sidecar is missing, the name comes from the
/// file stem and the splits default to 2:1:2.
pub fn load_dataset<F: Scalar>(csv_path: &Path) -> Result<SeriesDataset<F>> {
    let file = fs::File::open(csv_path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();

    let header = match lines.next() {
        Some(h) => h?,
        None => {
            return Err(Error::Parse {
                line: 0,
                message: "empty file: zero rows".into(),
            })
        }
    };
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if cols.len() < 2 || cols.last() != Some(&"label") {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `dim_0,...,label`, got `{header}`"),
        });
    }
    let d = cols.len() - 1;
    for (i, c) in cols[..d].iter().enumerate() {
        if *c != format!("dim_{i}") {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected column `dim_{i}`, got `{c}`"),
            });
        }
    }

    let mut data: Vec<F> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    let mut line_no = 1usize;
    for line in lines {
        let line = line?;
        line_no += 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != d + 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} columns, got {}", d + 1, fields.len()),
            });
        }
        for f in &fields[..d] {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid float `{f}`"),
            })?;
            data.push(F::from_f64(v));
        }
        let label = fields[d];
        match label {
            "0" => labels.push(0),
            "1" => labels.push(1),
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("label must be 0 or 1, got `{other}`"),
                })
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::Parse {
            line: line_no,
            message: "empty file: zero rows".into(),
        });
    }

    let t_len = labels.len();
    let values = Tensor::new(vec![t_len, d], data)?;

    let (name, splits) = match fs::read_to_string(sidecar_path(csv_path)) {
        Ok(text) => {
            let meta: DatasetMeta = serde_json::from_str(&text)?;
            if meta.t_len != t_len || meta.dims != d {
                return Err(Error::Config(format!(
                    "sidecar shape [{}, {}] does not match CSV [{t_len}, {d}]",
                    meta.t_len, meta.dims
                )));
            }
            (meta.name, meta.splits)
        }
        Err(_) => {
            let stem = csv_path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("dataset")
                .to_string();
            (stem, SplitBounds::ratio_2_1_2(t_len))
        }
    };

    SeriesDataset::new(&name, values, labels, splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate_synthetic, AnomalyKind};

    #[test]
    fn roundtrip_preserves_values_labels_splits() {
        let spec = AnomalySpec {
            kind: AnomalyKind::GlobalPoint,
            ratio: 0.02,
            ..Default::default()
        };
        let ds = generate_synthetic::<f32>(&spec, 300, 3, 21).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        save_dataset(&ds, &path, Some(21), Some(&spec)).unwrap();
        let loaded = load_dataset::<f32>(&path).unwrap();
        assert_eq!(loaded.labels, ds.labels);
        assert_eq!(loaded.splits, ds.splits);
        assert_eq!(loaded.name, ds.name);
        for (a, b) in loaded.values.data().iter().zip(ds.values.data().iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn bad_label_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut rows = vec!["dim_0,label".to_string()];
        for i in 0..20 {
            rows.push(format!("{}.0,0", i));
        }
        rows[16] = "3.0,2".to_string(); // file line 17
        fs::write(&path, rows.join("\n")).unwrap();
        let err = load_dataset::<f32>(&path).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 17);
                assert!(message.contains("label"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        fs::write(&path, "").unwrap();
        assert!(matches!(load_dataset::<f32>(&path), Err(Error::Parse { .. })));

        // header-only is also zero rows
        let path2 = dir.path().join("header.csv");
        fs::write(&path2, "dim_0,label\n").unwrap();
        assert!(matches!(load_dataset::<f32>(&path2), Err(Error::Parse { .. })));
    }

    #[test]
    fn wrong_column_count_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cols.csv");
        fs::write(&path, "dim_0,dim_1,label\n1.0,2.0,0\n1.0,0\n").unwrap();
        let err = load_dataset::<f32>(&path).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn deterministic_bytes_for_same_seed() {
        let spec = AnomalySpec::default();
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = Vec::new();
        for run in 0..2 {
            let ds = generate_synthetic::<f32>(&spec, 200, 2, 5).unwrap();
            let path = dir.path().join(format!("run{run}.csv"));
            save_dataset(&ds, &path, Some(5), Some(&spec)).unwrap();
            bytes.push(fs::read(&path).unwrap());
        }
        assert_eq!(bytes[0], bytes[1]);
    }
}

//! JSONL dataset files: a header line, then one sample per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetHeader, Split};
use crate::error::{Error, Result};
use crate::line_graph::{LineGraphSample, BUS_FEATURES, FEATURE_WIDTH, TARGET_WIDTH};
use crate::sparse::CsrMatrix;
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SampleLine {
    grid_name: String,
    split: Split,
    n_vertices: usize,
    edges: Vec<[usize; 2]>,
    features: Vec<Vec<f64>>,
    targets: Option<Vec<Vec<f64>>>,
    branch_ids: Vec<usize>,
    bus_ids: Vec<usize>,
    bus_features: Vec<Vec<f64>>,
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

fn tensor(rows: Vec<Vec<f64>>, width: usize, field: &str, line: usize) -> Result<Tensor> {
    let n = rows.len();
    let mut data = Vec::with_capacity(n * width);
    for (i, r) in rows.into_iter().enumerate() {
        if r.len() != width {
            return Err(Error::Schema {
                path: format!("line {line}: $.{field}[{i}]"),
                message: format!("expected {width} values, found {}", r.len()),
            });
        }
        data.extend(r);
    }
    Tensor::from_vec(n, width, data)
}

fn parse<T: DeserializeOwned>(text: &str, line: usize) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
        path: format!("line {line}: $.{}", e.path()),
        message: e.inner().to_string(),
    })
}

/// Writes through a sibling temporary file renamed into place.
pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut tmp = path.as_os_str().to_os_string();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut out = BufWriter::new(File::create(&tmp)?);
    let header = serde_json::to_string(&dataset.header).map_err(std::io::Error::other)?;
    writeln!(out, "{header}")?;
    for (s, &split) in dataset.samples.iter().zip(&dataset.splits) {
        let line = SampleLine {
            grid_name: s.grid_name.clone(),
            split,
            n_vertices: s.n_vertices(),
            edges: s.edges().into_iter().map(|(i, j)| [i, j]).collect(),
            features: rows(&s.features),
            targets: s.targets.as_ref().map(rows),
            branch_ids: s.branch_index_map.clone(),
            bus_ids: s.bus_index_map.clone(),
            bus_features: rows(&s.bus_features),
        };
        let text = serde_json::to_string(&line).map_err(std::io::Error::other)?;
        writeln!(out, "{text}")?;
    }
    out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let first = lines.next().ok_or_else(|| Error::Schema {
        path: "line 1".into(),
        message: "empty dataset file".into(),
    })??;
    let header: DatasetHeader = parse(&first, 1)?;
    if header.version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: header.version,
            expected: FORMAT_VERSION,
        });
    }
    let mut samples = Vec::new();
    let mut splits = Vec::new();
    for (i, text) in lines.enumerate() {
        let text = text?;
        let line = i + 2;
        if text.trim().is_empty() {
            continue;
        }
        let s: SampleLine = parse(&text, line)?;
        let n = s.n_vertices;
        let features = tensor(s.features, FEATURE_WIDTH, "features", line)?;
        let targets = s.targets.map(|t| tensor(t, TARGET_WIDTH, "targets", line)).transpose()?;
        let bus_features = tensor(s.bus_features, BUS_FEATURES, "bus_features", line)?;
        let bad = |field: &str, message: String| Error::Schema {
            path: format!("line {line}: $.{field}"),
            message,
        };
        if features.rows() != n || targets.as_ref().is_some_and(|t| t.rows() != n) || s.branch_ids.len() != n {
            return Err(bad("n_vertices", "row counts disagree with n_vertices".into()));
        }
        if s.bus_ids.len() != bus_features.rows() {
            return Err(bad("bus_ids", "length differs from bus_features".into()));
        }
        let mut triplets = Vec::with_capacity(2 * s.edges.len());
        for &[a, b] in &s.edges {
            if a >= n || b >= n || a == b {
                return Err(bad("edges", format!("invalid edge [{a}, {b}]")));
            }
            triplets.push((a, b, 1.0));
            triplets.push((b, a, 1.0));
        }
        samples.push(LineGraphSample {
            grid_name: s.grid_name,
            adjacency: CsrMatrix::from_triplets(n, n, &triplets).map(|_| 1.0),
            features,
            targets,
            branch_index_map: s.branch_ids,
            bus_features,
            bus_index_map: s.bus_ids,
        });
        splits.push(s.split);
    }
    Ok(Dataset {
        header,
        samples,
        splits,
    })
}

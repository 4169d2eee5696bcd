//! Data and tier files.
//!
//! Data is CSV with a header row and one numeric column per variable.
//! Tiers are JSON:
//!
//! ```json
//! {"columns": [{"name": "Z1", "tier": "background"}, {"name": "X1", "tier": "foreground"}]}
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Tier;
use crate::scalar::Scalar;
use crate::simgen::Column;

/// Writes `bytes` to a sibling temp file and renames it over `path`, so a
/// reader never observes a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{file_name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Serializes `value` as pretty JSON and writes it atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json("json output", e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Header and values of a numeric CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table<F> {
    pub names: Vec<String>,
    pub values: Array2<F>,
}

pub fn parse_csv<F: Scalar>(text: &str) -> Result<Table<F>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let names: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if names.is_empty() || names.iter().any(|n| n.is_empty()) {
        return Err(Error::Data("header has an empty column name".into()));
    }
    let mut flat = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        // header is line 1
        let line = r + 2;
        if record.len() != names.len() {
            return Err(Error::Data(format!(
                "line {line}: {} fields, expected {}",
                record.len(),
                names.len()
            )));
        }
        for (c, field) in record.iter().enumerate() {
            let v = F::from_str_radix(field.trim(), 10)
                .map_err(|_| Error::Data(format!("line {line}, column {}: non-numeric value {field:?}", names[c])))?;
            flat.push(v);
        }
        rows += 1;
    }
    let values = Array2::from_shape_vec((rows, names.len()), flat).expect("row-major shape");
    Ok(Table { names, values })
}

pub fn read_csv<F: Scalar>(path: &Path) -> Result<Table<F>> {
    parse_csv(&fs::read_to_string(path)?)
}

/// Shortest round-trip formatting, so a written table reads back exactly.
pub fn csv_string<F: Scalar>(names: &[String], values: &Array2<F>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(names)?;
    for row in values.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_csv<F: Scalar>(path: &Path, names: &[String], values: &Array2<F>) -> Result<()> {
    write_atomic(path, csv_string(names, values)?.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TiersFile {
    pub columns: Vec<Column>,
}

impl TiersFile {
    pub fn parse(text: &str) -> Result<TiersFile> {
        serde_json::from_str(text).map_err(|e| Error::json("tiers", e))
    }

    pub fn load(path: &Path) -> Result<TiersFile> {
        TiersFile::parse(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Tier of each header column, matched by name.
    pub fn align(&self, header: &[String]) -> Result<Vec<Tier>> {
        let mut by_name = HashMap::new();
        for c in &self.columns {
            if by_name.insert(c.name.as_str(), c.tier).is_some() {
                return Err(Error::Data(format!("tier manifest lists {:?} twice", c.name)));
            }
        }
        if self.columns.len() != header.len() {
            return Err(Error::Data(format!(
                "tier manifest lists {} columns but the data has {}",
                self.columns.len(),
                header.len()
            )));
        }
        header
            .iter()
            .map(|h| {
                by_name
                    .get(h.as_str())
                    .copied()
                    .ok_or_else(|| Error::Data(format!("data column {h:?} is missing from the tier manifest")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csv_round_trip_is_exact() {
        let names = vec!["a".to_string(), "b".to_string()];
        let values = array![[0.1f64, -1e-300], [std::f64::consts::PI, 12345.678]];
        let t: Table<f64> = parse_csv(&csv_string(&names, &values).unwrap()).unwrap();
        assert_eq!(t.names, names);
        assert_eq!(t.values, values);
        let v32 = array![[0.1f32, 1.0 / 3.0]];
        let t: Table<f32> = parse_csv(&csv_string(&names, &v32).unwrap()).unwrap();
        assert_eq!(t.values, v32);
    }

    #[test]
    fn bad_cells_name_their_line() {
        let err = parse_csv::<f64>("a,b\n1,2\n3,x\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(parse_csv::<f64>("a,b\n1\n").is_err());
    }

    #[test]
    fn tiers_align_by_name() {
        let t = TiersFile::parse(r#"{"columns":[{"name":"X1","tier":"foreground"},{"name":"Z1","tier":"background"}]}"#).unwrap();
        let tiers = t.align(&["Z1".into(), "X1".into()]).unwrap();
        assert_eq!(tiers, vec![Tier::Background, Tier::Foreground]);
        assert!(t.align(&["Z1".into(), "X2".into()]).is_err());
        assert!(t.align(&["Z1".into()]).is_err());
    }
}

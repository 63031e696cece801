//! Grouped-design CSV files.
//!
//! Design file: headered, comma-delimited, all cells numeric; one of the
//! columns is the response. Group map: headered two-column file
//! `column,group` assigning each predictor column a group label.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{validate_groups, DesignError, GroupStructure, UnmappedColumn};

/// Raw arrays read from disk, columns reordered so each group is contiguous.
#[derive(Debug, Clone)]
pub struct IngestedData {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub structure: GroupStructure,
    pub column_names: Vec<String>,
}

fn io_err(path: &Path, source: std::io::Error) -> DesignError {
    DesignError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, err: csv::Error) -> DesignError {
    let row = err.position().map(|p| p.line() as usize).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => io_err(path, e),
        other => DesignError::Parse {
            path: path.display().to_string(),
            row,
            column: String::new(),
            message: format!("{other:?}"),
        },
    }
}

fn open(path: &Path) -> Result<csv::Reader<File>, DesignError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file))
}

/// Reads a headered numeric CSV into a header list and a row-major table.
pub(crate) fn read_numeric_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), DesignError> {
    let mut reader = open(path)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        // Line 1 is the header.
        let line = i + 2;
        let row = record
            .iter()
            .zip(&header)
            .map(|(cell, name)| {
                cell.trim().parse::<f64>().map_err(|e| DesignError::Parse {
                    path: path.display().to_string(),
                    row: line,
                    column: name.clone(),
                    message: format!("`{cell}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Reads a design CSV and a group map, returning raw arrays ready for
/// [`super::preprocess`]. Groups are numbered by ascending label; within a
/// group, columns keep their order in the design file.
pub fn ingest_csv(
    design_path: &Path,
    response_column: &str,
    group_map_path: &Path,
) -> Result<IngestedData, DesignError> {
    let mut map_reader = open(group_map_path)?;
    let mut assignment: HashMap<String, String> = HashMap::new();
    for record in map_reader.records() {
        let record = record.map_err(|e| csv_err(group_map_path, e))?;
        let column = record.get(0).unwrap_or("").trim().to_string();
        let label = record.get(1).unwrap_or("").trim().to_string();
        if column == response_column {
            return Err(UnmappedColumn::ResponseInGroupMap(column).into());
        }
        assignment.insert(column, label);
    }

    let (header, rows) = read_numeric_table(design_path)?;
    let index_of: HashMap<&str, usize> = header
        .iter()
        .enumerate()
        .map(|(i, h)| (h.as_str(), i))
        .collect();
    let response_idx =
        *index_of
            .get(response_column)
            .ok_or_else(|| DesignError::UnknownColumn {
                column: response_column.to_string(),
                source_name: "the response argument".to_string(),
            })?;

    let mut missing: Vec<&String> = assignment
        .keys()
        .filter(|c| !index_of.contains_key(c.as_str()))
        .collect();
    missing.sort();
    if let Some(column) = missing.first() {
        return Err(DesignError::UnknownColumn {
            column: (*column).clone(),
            source_name: group_map_path.display().to_string(),
        });
    }

    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, name) in header.iter().enumerate() {
        if i == response_idx {
            continue;
        }
        let label = assignment
            .get(name)
            .ok_or_else(|| UnmappedColumn::NotInGroupMap(name.clone()))?;
        by_label.entry(label.as_str()).or_default().push(i);
    }

    let order: Vec<usize> = by_label.values().flatten().copied().collect();
    let mut groups = Vec::with_capacity(by_label.len());
    let mut start = 0;
    for cols in by_label.values() {
        groups.push((start..start + cols.len()).collect());
        start += cols.len();
    }
    let labels = by_label.keys().map(|l| l.to_string()).collect();
    let structure = validate_groups(groups, order.len())?.with_labels(labels)?;

    let n = rows.len();
    let x = DMatrix::from_fn(n, order.len(), |i, k| rows[i][order[k]]);
    let y = DVector::from_fn(n, |i, _| rows[i][response_idx]);
    let column_names = order.iter().map(|&i| header[i].clone()).collect();
    Ok(IngestedData {
        x,
        y,
        structure,
        column_names,
    })
}

/// Writes raw arrays in the formats [`ingest_csv`] reads back.
pub fn export_csv(
    design_path: &Path,
    group_map_path: &Path,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    structure: &GroupStructure,
    column_names: &[String],
    response_column: &str,
) -> Result<(), DesignError> {
    let mut design = csv::Writer::from_path(design_path).map_err(|e| csv_err(design_path, e))?;
    let mut header: Vec<&str> = column_names.iter().map(String::as_str).collect();
    header.push(response_column);
    design
        .write_record(&header)
        .map_err(|e| csv_err(design_path, e))?;
    for i in 0..x.nrows() {
        let row: Vec<String> = x
            .row(i)
            .iter()
            .chain(std::iter::once(&y[i]))
            .map(|v| format!("{v:e}"))
            .collect();
        design
            .write_record(&row)
            .map_err(|e| csv_err(design_path, e))?;
    }
    design.flush().map_err(|e| io_err(design_path, e))?;

    let mut map = File::create(group_map_path).map_err(|e| io_err(group_map_path, e))?;
    let mut text = String::from("column,group\n");
    for (j, cols) in structure.groups().iter().enumerate() {
        for &c in cols {
            text.push_str(&format!("{},{}\n", column_names[c], structure.label(j)));
        }
    }
    map.write_all(text.as_bytes())
        .map_err(|e| io_err(group_map_path, e))?;
    Ok(())
}

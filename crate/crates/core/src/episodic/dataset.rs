use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::linalg::Matrix;

pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

/// Instances (one per row) with optional dense class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTable {
    pub instances: Matrix,
    pub labels: Option<Vec<usize>>,
    pub domain: Domain,
}

impl DatasetTable {
    pub fn labeled(instances: Matrix, labels: Vec<usize>, domain: Domain) -> Result<Self> {
        if labels.len() != instances.rows() {
            return Err(Error::Data(format!(
                "{} labels for {} instances",
                labels.len(),
                instances.rows()
            )));
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; classes];
        for &y in &labels {
            seen[y] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Data(format!(
                "class indices must be dense in [0, {classes}); class {missing} is absent"
            )));
        }
        Ok(Self {
            instances,
            labels: Some(labels),
            domain,
        })
    }

    pub fn unlabeled(instances: Matrix, domain: Domain) -> Self {
        Self {
            instances,
            labels: None,
            domain,
        }
    }

    pub fn len(&self) -> usize {
        self.instances.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.instances.cols()
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Data("dataset has no labels".into()))
    }

    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |m| m + 1)
    }

    /// Row indices of each class, in row order.
    pub fn class_members(&self) -> Result<Vec<Vec<usize>>> {
        let labels = self.labels()?;
        let mut members = vec![Vec::new(); self.num_classes()];
        for (i, &y) in labels.iter().enumerate() {
            members[y].push(i);
        }
        Ok(members)
    }

    /// Header `x0,..,x{d-1}[,label]`, then one row per instance.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        out.push_str(&header.join(","));
        if self.labels.is_some() {
            out.push(',');
            out.push_str(LABEL_COLUMN);
        }
        out.push('\n');
        for i in 0..self.len() {
            for (j, v) in self.instances.row(i).iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            if let Some(labels) = &self.labels {
                let _ = write!(out, ",{}", labels[i]);
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV layout written by [`DatasetTable::to_csv_string`]. The
    /// `label` column may sit anywhere; `#` lines are comments.
    pub fn from_csv_str(text: &str, domain: Domain) -> Result<Self> {
        let table = CsvTable::parse(text)?;
        let label_col = table.column(LABEL_COLUMN);
        let feature_cols: Vec<usize> = (0..table.header.len()).filter(|&c| Some(c) != label_col).collect();
        let mut data = Vec::with_capacity(table.rows.len() * feature_cols.len());
        let mut labels = Vec::new();
        for (r, row) in table.rows.iter().enumerate() {
            for &c in &feature_cols {
                data.push(row[c].trim().parse::<f64>().map_err(|_| {
                    Error::Data(format!("row {}: bad value {:?} in column {}", r + 1, row[c], table.header[c]))
                })?);
            }
            if let Some(c) = label_col {
                labels.push(row[c].trim().parse::<usize>().map_err(|_| {
                    Error::Data(format!("row {}: bad label {:?}", r + 1, row[c]))
                })?);
            }
        }
        let instances = Matrix::new(table.rows.len(), feature_cols.len(), data)?;
        match label_col {
            Some(_) => Self::labeled(instances, labels, domain),
            None => Ok(Self::unlabeled(instances, domain)),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string())
    }

    pub fn read_csv(path: &Path, domain: Domain) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text, domain).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

/// Header plus string cells; the shared reader beneath the dataset and report CSVs.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::Data(format!("csv header: {e}")))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect::<Vec<_>>();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(Error::Data("csv has no header row".into()));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::Data(format!("csv: {e}")))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

//! Dataset representation, CSV ingestion, and missingness assessment.
//!
//! Values are stored at double precision and absence is a distinct state
//! (`None`), never a sentinel number.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ElmvError, Result};

/// Missing-rate threshold above which imputation is discouraged.
pub const DEFAULT_MISSINGNESS_THRESHOLD: f64 = 0.40;

/// A patients-by-features grid of optional numeric values plus optional labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationTable {
    patient_ids: Vec<String>,
    feature_names: Vec<String>,
    /// Row-major `n_patients x n_features` grid.
    values: Vec<Vec<Option<f64>>>,
    labels: Option<Vec<String>>,
}

impl ObservationTable {
    pub fn new(
        patient_ids: Vec<String>,
        feature_names: Vec<String>,
        values: Vec<Vec<Option<f64>>>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let n_p = patient_ids.len();
        let n_f = feature_names.len();
        if values.len() != n_p {
            return Err(ElmvError::Data(format!(
                "value grid has {} rows, expected {}",
                values.len(),
                n_p
            )));
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != n_f {
                return Err(ElmvError::Data(format!(
                    "row {} has {} values, expected {}",
                    i,
                    row.len(),
                    n_f
                )));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != n_p {
                return Err(ElmvError::Data(format!(
                    "{} labels for {} patients",
                    labels.len(),
                    n_p
                )));
            }
        }
        check_unique(&patient_ids, "patient id")?;
        check_unique(&feature_names, "feature name")?;
        Ok(ObservationTable {
            patient_ids,
            feature_names,
            values,
            labels,
        })
    }

    /// Builds a table with generated patient ids `r1..rN`.
    pub fn with_default_ids(
        feature_names: Vec<String>,
        values: Vec<Vec<Option<f64>>>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let ids = (1..=values.len()).map(|i| format!("r{i}")).collect();
        Self::new(ids, feature_names, values, labels)
    }

    pub fn n_patients(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn patient_ids(&self) -> &[String] {
        &self.patient_ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row][col]
    }

    pub fn row(&self, row: usize) -> &[Option<f64>] {
        &self.values[row]
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn label(&self, row: usize) -> Option<&str> {
        self.labels.as_ref().map(|l| l[row].as_str())
    }

    /// Distinct labels in lexicographic order.
    pub fn class_alphabet(&self) -> Vec<String> {
        match &self.labels {
            None => Vec::new(),
            Some(labels) => {
                let set: BTreeSet<&String> = labels.iter().collect();
                set.into_iter().cloned().collect()
            }
        }
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    pub fn patient_index(&self, id: &str) -> Option<usize> {
        self.patient_ids.iter().position(|p| p == id)
    }

    /// New table keeping `rows` and `cols` (indices) in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Result<Self> {
        for &r in rows {
            if r >= self.n_patients() {
                return Err(ElmvError::Argument(format!("row index {r} out of range")));
            }
        }
        for &c in cols {
            if c >= self.n_features() {
                return Err(ElmvError::Argument(format!("column index {c} out of range")));
            }
        }
        let patient_ids = rows.iter().map(|&r| self.patient_ids[r].clone()).collect();
        let feature_names = cols.iter().map(|&c| self.feature_names[c].clone()).collect();
        let values = rows
            .iter()
            .map(|&r| cols.iter().map(|&c| self.values[r][c]).collect())
            .collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| rows.iter().map(|&r| l[r].clone()).collect());
        ObservationTable::new(patient_ids, feature_names, values, labels)
    }

    /// Observed mean and standard deviation per feature.
    ///
    /// Constant or single-value features get a standard deviation of 0.
    pub fn feature_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let n_f = self.n_features();
        let mut means = vec![0.0; n_f];
        let mut stds = vec![0.0; n_f];
        for j in 0..n_f {
            let observed: Vec<f64> = self.values.iter().filter_map(|row| row[j]).collect();
            if observed.is_empty() {
                continue;
            }
            let mean = observed.iter().sum::<f64>() / observed.len() as f64;
            means[j] = mean;
            if observed.len() > 1 {
                let var = observed.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (observed.len() - 1) as f64;
                stds[j] = var.sqrt();
            }
        }
        (means, stds)
    }
}

fn check_unique(items: &[String], what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for item in items {
        if !seen.insert(item) {
            return Err(ElmvError::Data(format!("duplicate {what} {item:?}")));
        }
    }
    Ok(())
}

/// A patients-by-features-by-time grid of optional values.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalObservationTable {
    patient_ids: Vec<String>,
    feature_names: Vec<String>,
    time_points: Vec<String>,
    /// `values[p][f][t]`
    values: Vec<Vec<Vec<Option<f64>>>>,
    labels: Option<Vec<String>>,
}

impl TemporalObservationTable {
    pub fn new(
        patient_ids: Vec<String>,
        feature_names: Vec<String>,
        time_points: Vec<String>,
        values: Vec<Vec<Vec<Option<f64>>>>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        check_unique(&patient_ids, "patient id")?;
        check_unique(&feature_names, "feature name")?;
        check_unique(&time_points, "time point")?;
        if values.len() != patient_ids.len() {
            return Err(ElmvError::Data(format!(
                "value grid has {} patients, expected {}",
                values.len(),
                patient_ids.len()
            )));
        }
        for per_patient in &values {
            if per_patient.len() != feature_names.len() {
                return Err(ElmvError::Data("feature axis mismatch".into()));
            }
            for trajectory in per_patient {
                if trajectory.len() != time_points.len() {
                    return Err(ElmvError::Data("time axis mismatch".into()));
                }
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != patient_ids.len() {
                return Err(ElmvError::Data("label count mismatch".into()));
            }
        }
        Ok(TemporalObservationTable {
            patient_ids,
            feature_names,
            time_points,
            values,
            labels,
        })
    }

    pub fn n_patients(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_time_points(&self) -> usize {
        self.time_points.len()
    }

    pub fn value(&self, p: usize, f: usize, t: usize) -> Option<f64> {
        self.values[p][f][t]
    }
}

/// Binary patients-by-features matrix; a set bit marks an absent value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessMask {
    row_ids: Vec<String>,
    col_ids: Vec<String>,
    /// Row-major bits; `true` = missing.
    bits: Vec<bool>,
    row_rates: Vec<f64>,
    col_rates: Vec<f64>,
}

impl MissingnessMask {
    /// Builds a mask from explicit bits, generating `r*`/`c*` identities.
    pub fn from_bits(n_rows: usize, n_cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != n_rows * n_cols {
            return Err(ElmvError::Data(format!(
                "{} bits for a {}x{} mask",
                bits.len(),
                n_rows,
                n_cols
            )));
        }
        let row_ids = (1..=n_rows).map(|i| format!("r{i}")).collect();
        let col_ids = (1..=n_cols).map(|j| format!("c{j}")).collect();
        Ok(Self::from_parts(row_ids, col_ids, bits))
    }

    fn from_parts(row_ids: Vec<String>, col_ids: Vec<String>, bits: Vec<bool>) -> Self {
        let n_rows = row_ids.len();
        let n_cols = col_ids.len();
        let mut row_rates = vec![0.0; n_rows];
        let mut col_rates = vec![0.0; n_cols];
        if n_rows > 0 && n_cols > 0 {
            for i in 0..n_rows {
                let ones = (0..n_cols).filter(|&j| bits[i * n_cols + j]).count();
                row_rates[i] = ones as f64 / n_cols as f64;
            }
            for j in 0..n_cols {
                let ones = (0..n_rows).filter(|&i| bits[i * n_cols + j]).count();
                col_rates[j] = ones as f64 / n_rows as f64;
            }
        }
        MissingnessMask {
            row_ids,
            col_ids,
            bits,
            row_rates,
            col_rates,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_ids.len()
    }

    pub fn bit(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.n_cols() + col]
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[String] {
        &self.col_ids
    }

    pub fn row_rates(&self) -> &[f64] {
        &self.row_rates
    }

    pub fn col_rates(&self) -> &[f64] {
        &self.col_rates
    }

    pub fn missing_count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    pub fn overall_rate(&self) -> f64 {
        let cells = self.n_rows() * self.n_cols();
        if cells == 0 {
            0.0
        } else {
            self.missing_count() as f64 / cells as f64
        }
    }

    /// Writes the mask as a 0/1 TSV with a header of column ids.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "id")?;
        for c in &self.col_ids {
            write!(w, "\t{c}")?;
        }
        writeln!(w)?;
        for (i, r) in self.row_ids.iter().enumerate() {
            write!(w, "{r}")?;
            for j in 0..self.n_cols() {
                write!(w, "\t{}", u8::from(self.bit(i, j)))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Marks each absent cell of `table`.
pub fn build_mask(table: &ObservationTable) -> MissingnessMask {
    let n_cols = table.n_features();
    let mut bits = Vec::with_capacity(table.n_patients() * n_cols);
    for row in &table.values {
        bits.extend(row.iter().map(|v| v.is_none()));
    }
    MissingnessMask::from_parts(table.patient_ids.clone(), table.feature_names.clone(), bits)
}

/// Collapses the time axis: a cell is missing when any of its time points is.
pub fn collapse_temporal(table: &TemporalObservationTable) -> Result<MissingnessMask> {
    if table.n_time_points() == 0 {
        return Err(ElmvError::Argument(
            "temporal table has no time points".into(),
        ));
    }
    let n_cols = table.n_features();
    let mut bits = Vec::with_capacity(table.n_patients() * n_cols);
    for per_patient in &table.values {
        for trajectory in per_patient {
            bits.push(trajectory.iter().any(|v| v.is_none()));
        }
    }
    Ok(MissingnessMask::from_parts(
        table.patient_ids.clone(),
        table.feature_names.clone(),
        bits,
    ))
}

/// Whether the data is still a reasonable imputation target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recommendation {
    ImputationOk,
    ElmvRecommended,
}

/// Summary of a mask's missingness with an imputation recommendation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MissingnessReport {
    pub overall_rate: f64,
    pub per_feature: Vec<(String, f64)>,
    pub patient_rate_min: f64,
    pub patient_rate_max: f64,
    pub patient_rate_mean: f64,
    pub patient_rate_median: f64,
    pub threshold: f64,
    pub recommendation: Recommendation,
}

/// Summarizes `mask`; recommends the ensemble route strictly above `threshold`.
pub fn assess(mask: &MissingnessMask, threshold: f64) -> Result<MissingnessReport> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ElmvError::Argument(format!(
            "threshold must lie in (0,1), got {threshold}"
        )));
    }
    let overall_rate = mask.overall_rate();
    let per_feature = mask
        .col_ids
        .iter()
        .cloned()
        .zip(mask.col_rates.iter().copied())
        .collect();
    let mut rates = mask.row_rates.clone();
    rates.sort_by(|a, b| a.total_cmp(b));
    let (min, max, mean, median) = if rates.is_empty() {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        let median = if rates.len() % 2 == 1 {
            rates[rates.len() / 2]
        } else {
            (rates[rates.len() / 2 - 1] + rates[rates.len() / 2]) / 2.0
        };
        (rates[0], rates[rates.len() - 1], mean, median)
    };
    let recommendation = if overall_rate > threshold {
        Recommendation::ElmvRecommended
    } else {
        Recommendation::ImputationOk
    };
    Ok(MissingnessReport {
        overall_rate,
        per_feature,
        patient_rate_min: min,
        patient_rate_max: max,
        patient_rate_mean: mean,
        patient_rate_median: median,
        threshold,
        recommendation,
    })
}

/// CSV ingestion settings.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Cell contents treated as absent values.
    pub missing_tokens: BTreeSet<String>,
    /// Column holding class labels, by header name.
    pub label_column: Option<String>,
    /// Column holding patient ids, by header name. Absent ids become `r1..rN`.
    pub id_column: Option<String>,
    pub delimiter: u8,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            missing_tokens: default_missing_tokens(),
            label_column: None,
            id_column: None,
            delimiter: b',',
        }
    }
}

pub fn default_missing_tokens() -> BTreeSet<String> {
    ["", "NA", "NaN"].iter().map(|s| s.to_string()).collect()
}

/// Loads a CSV into an [`ObservationTable`].
///
/// The first row names the features. Cells matching a missing token become
/// absent values; everything else must parse as a real number.
pub fn load_table(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<ObservationTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| ElmvError::io(path.display().to_string(), e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| ElmvError::Parse(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.to_string())
        .collect();

    let label_idx = match &opts.label_column {
        None => None,
        Some(name) => Some(headers.iter().position(|h| h == name).ok_or_else(|| {
            ElmvError::Parse(format!("label column {name:?} not found in header"))
        })?),
    };
    let id_idx = match &opts.id_column {
        None => None,
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| ElmvError::Parse(format!("id column {name:?} not found in header")))?,
        ),
    };
    if label_idx.is_some() && label_idx == id_idx {
        return Err(ElmvError::Argument(
            "label column and id column must differ".into(),
        ));
    }

    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|i| Some(*i) != label_idx && Some(*i) != id_idx)
        .collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&i| headers[i].clone()).collect();

    let mut values = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut ids: Vec<String> = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        // 1-based data line number, after the header line.
        let line = row_no + 2;
        let record = record.map_err(|e| ElmvError::Parse(format!("line {line}: {e}")))?;
        if record.len() != headers.len() {
            return Err(ElmvError::Parse(format!(
                "line {line}: expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(feature_cols.len());
        for &col in &feature_cols {
            let cell = &record[col];
            if opts.missing_tokens.contains(cell) {
                row.push(None);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    ElmvError::Parse(format!(
                        "line {line}, column {:?}: cannot parse {cell:?} as a number",
                        headers[col]
                    ))
                })?;
                row.push(Some(v));
            }
        }
        values.push(row);
        if let Some(li) = label_idx {
            labels.push(record[li].to_string());
        }
        if let Some(ii) = id_idx {
            ids.push(record[ii].to_string());
        }
    }

    let n = values.len();
    let patient_ids = if id_idx.is_some() {
        ids
    } else {
        (1..=n).map(|i| format!("r{i}")).collect()
    };
    ObservationTable::new(
        patient_ids,
        feature_names,
        values,
        label_idx.map(|_| labels),
    )
}

/// CSV output settings; inverse of [`LoadOptions`].
#[derive(Debug, Clone)]
pub struct WriteOptions {
    pub missing_token: String,
    /// Header name for the label column when labels are present.
    pub label_column: String,
    /// Header name for the id column; `None` omits ids.
    pub id_column: Option<String>,
    pub delimiter: u8,
}

impl Default for WriteOptions {
    fn default() -> Self {
        WriteOptions {
            missing_token: String::new(),
            label_column: "label".into(),
            id_column: None,
            delimiter: b',',
        }
    }
}

/// Writes `table` as CSV. Values round-trip exactly through [`load_table`].
pub fn write_table(
    table: &ObservationTable,
    path: impl AsRef<Path>,
    opts: &WriteOptions,
) -> Result<()> {
    let path = path.as_ref();
    let file =
        std::fs::File::create(path).map_err(|e| ElmvError::io(path.display().to_string(), e))?;
    let mut writer = csv::WriterBuilder::new()
        .delimiter(opts.delimiter)
        .from_writer(file);

    let mut header: Vec<String> = Vec::new();
    if let Some(idc) = &opts.id_column {
        header.push(idc.clone());
    }
    header.extend(table.feature_names.iter().cloned());
    if table.labels.is_some() {
        header.push(opts.label_column.clone());
    }
    writer
        .write_record(&header)
        .map_err(|e| ElmvError::Parse(format!("{}: {e}", path.display())))?;

    for i in 0..table.n_patients() {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        if opts.id_column.is_some() {
            record.push(table.patient_ids[i].clone());
        }
        for v in &table.values[i] {
            match v {
                // Shortest round-trip formatting keeps bit-exact reloads.
                Some(x) => record.push(format!("{x}")),
                None => record.push(opts.missing_token.clone()),
            }
        }
        if let Some(labels) = &table.labels {
            record.push(labels[i].clone());
        }
        writer
            .write_record(&record)
            .map_err(|e| ElmvError::Parse(format!("{}: {e}", path.display())))?;
    }
    writer
        .flush()
        .map_err(|e| ElmvError::io(path.display().to_string(), e))?;
    Ok(())
}

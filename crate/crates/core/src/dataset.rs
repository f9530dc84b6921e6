//! Sensor CSV ingestion and feature preparation.
//!
//! The pipeline is `parse_csv` → `impute_means` → `encode_one_hot` →
//! `split_train_test` → `scale_minmax`. Scaling parameters are always fitted
//! on the training split and reused (with clamping) for everything else.

use std::collections::BTreeSet;
use std::io::Read;

use chrono::{NaiveDateTime, Timelike};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("csv header is missing column {0:?}")]
    MissingColumn(String),
    #[error("line {line}: malformed value {value:?} in column {column:?}")]
    MalformedRow {
        line: u64,
        column: String,
        value: String,
    },
    #[error("column {0:?} has no observed values to average")]
    AllMissingColumn(String),
    #[error("need at least 2 rows to split, got {0}")]
    TooFewRows(usize),
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("no rows with a battery-life target")]
    NoTargets,
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for DatasetError {
    fn from(e: csv::Error) -> Self {
        DatasetError::Csv(e.to_string())
    }
}

/// Numeric sensor columns, in the fixed order they appear in the feature layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericField {
    WaterTemperature,
    Turbidity,
    TransducerDepth,
    WaveHeight,
    WavePeriod,
}

impl NumericField {
    pub const ALL: [NumericField; 5] = [
        NumericField::WaterTemperature,
        NumericField::Turbidity,
        NumericField::TransducerDepth,
        NumericField::WaveHeight,
        NumericField::WavePeriod,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NumericField::WaterTemperature => "water_temperature",
            NumericField::Turbidity => "turbidity",
            NumericField::TransducerDepth => "transducer_depth",
            NumericField::WaveHeight => "wave_height",
            NumericField::WavePeriod => "wave_period",
        }
    }
}

/// One raw CSV row. `None` is the missing marker; stored values are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorRecord {
    pub beach_name: String,
    pub measurement_timestamp: String,
    pub water_temperature: Option<f64>,
    pub turbidity: Option<f64>,
    pub transducer_depth: Option<f64>,
    pub wave_height: Option<f64>,
    pub wave_period: Option<f64>,
    pub battery_life: Option<f64>,
}

impl SensorRecord {
    pub fn get(&self, field: NumericField) -> Option<f64> {
        match field {
            NumericField::WaterTemperature => self.water_temperature,
            NumericField::Turbidity => self.turbidity,
            NumericField::TransducerDepth => self.transducer_depth,
            NumericField::WaveHeight => self.wave_height,
            NumericField::WavePeriod => self.wave_period,
        }
    }

    pub fn slot(&mut self, field: NumericField) -> &mut Option<f64> {
        match field {
            NumericField::WaterTemperature => &mut self.water_temperature,
            NumericField::Turbidity => &mut self.turbidity,
            NumericField::TransducerDepth => &mut self.transducer_depth,
            NumericField::WaveHeight => &mut self.wave_height,
            NumericField::WavePeriod => &mut self.wave_period,
        }
    }

    /// Hour of day parsed from the timestamp, if it is in a recognised format.
    pub fn hour_of_day(&self) -> Option<f64> {
        parse_hour(&self.measurement_timestamp)
    }
}

fn parse_hour(ts: &str) -> Option<f64> {
    const FORMATS: [&str; 4] = [
        "%m/%d/%Y %I:%M:%S %p",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S%.f",
    ];
    let ts = ts.trim();
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(ts, f).ok())
        .map(|dt| dt.hour() as f64)
}

/// Maps logical fields to CSV header names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub beach_name: String,
    pub measurement_timestamp: String,
    pub water_temperature: String,
    pub turbidity: String,
    pub transducer_depth: String,
    pub wave_height: String,
    pub wave_period: String,
    pub battery_life: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            beach_name: "Beach Name".into(),
            measurement_timestamp: "Measurement Timestamp".into(),
            water_temperature: "Water Temperature".into(),
            turbidity: "Turbidity".into(),
            transducer_depth: "Transducer Depth".into(),
            wave_height: "Wave Height".into(),
            wave_period: "Wave Period".into(),
            battery_life: "Battery Life".into(),
        }
    }
}

impl ColumnMap {
    fn header_for(&self, field: NumericField) -> &str {
        match field {
            NumericField::WaterTemperature => &self.water_temperature,
            NumericField::Turbidity => &self.turbidity,
            NumericField::TransducerDepth => &self.transducer_depth,
            NumericField::WaveHeight => &self.wave_height,
            NumericField::WavePeriod => &self.wave_period,
        }
    }
}

fn parse_cell(line: u64, column: &str, raw: &str) -> Result<Option<f64>, DatasetError> {
    let s = raw.trim();
    if s.is_empty() {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(DatasetError::MalformedRow {
            line,
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

/// Parses a headered CSV into records. Columns not named in `map` are ignored.
pub fn parse_csv<R: Read>(source: R, map: &ColumnMap) -> Result<Vec<SensorRecord>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let beach_idx = find(&map.beach_name)?;
    let ts_idx = find(&map.measurement_timestamp)?;
    let mut numeric_idx = [0usize; 5];
    for (slot, field) in numeric_idx.iter_mut().zip(NumericField::ALL) {
        *slot = find(map.header_for(field))?;
    }
    let target_idx = find(&map.battery_life)?;

    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let cell = |i: usize| row.get(i).unwrap_or("");

        let beach = cell(beach_idx).trim();
        if beach.is_empty() {
            return Err(DatasetError::MalformedRow {
                line,
                column: map.beach_name.clone(),
                value: String::new(),
            });
        }
        let mut rec = SensorRecord {
            beach_name: beach.to_string(),
            measurement_timestamp: cell(ts_idx).trim().to_string(),
            water_temperature: None,
            turbidity: None,
            transducer_depth: None,
            wave_height: None,
            wave_period: None,
            battery_life: parse_cell(line, &map.battery_life, cell(target_idx))?,
        };
        for (field, &idx) in NumericField::ALL.iter().zip(&numeric_idx) {
            *rec.slot(*field) = parse_cell(line, map.header_for(*field), cell(idx))?;
        }
        out.push(rec);
    }
    Ok(out)
}

/// Column means over the observed values of each numeric field.
pub fn column_means(records: &[SensorRecord]) -> Result<[f64; 5], DatasetError> {
    let mut means = [0.0; 5];
    for (mean, field) in means.iter_mut().zip(NumericField::ALL) {
        let (sum, n) = records
            .iter()
            .filter_map(|r| r.get(field))
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if n == 0 {
            return Err(DatasetError::AllMissingColumn(field.name().to_string()));
        }
        *mean = sum / n as f64;
    }
    Ok(means)
}

/// Replaces every missing numeric cell by its column mean. The target is never imputed.
pub fn impute_means(records: &[SensorRecord]) -> Result<Vec<SensorRecord>, DatasetError> {
    let means = column_means(records)?;
    Ok(impute_with(records, &means))
}

pub fn impute_with(records: &[SensorRecord], means: &[f64; 5]) -> Vec<SensorRecord> {
    records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            for (field, &m) in NumericField::ALL.iter().zip(means) {
                r.slot(*field).get_or_insert(m);
            }
            r
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Indicator,
    Numeric,
}

/// Categorical layout learned from training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    /// Lexicographically sorted beach names.
    pub categories: Vec<String>,
    pub include_hour: bool,
    /// Fallback for unparseable timestamps when `include_hour` is set.
    pub mean_hour: f64,
}

impl Encoding {
    pub fn fit(records: &[SensorRecord], include_hour: bool) -> Encoding {
        let categories: BTreeSet<&str> = records.iter().map(|r| r.beach_name.as_str()).collect();
        let hours: Vec<f64> = records.iter().filter_map(|r| r.hour_of_day()).collect();
        let mean_hour = if hours.is_empty() {
            0.0
        } else {
            hours.iter().sum::<f64>() / hours.len() as f64
        };
        Encoding {
            categories: categories.into_iter().map(String::from).collect(),
            include_hour,
            mean_hour,
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .categories
            .iter()
            .map(|c| format!("beach_name={c}"))
            .collect();
        names.extend(NumericField::ALL.iter().map(|f| f.name().to_string()));
        if self.include_hour {
            names.push("hour_of_day".into());
        }
        names
    }

    pub fn feature_kinds(&self) -> Vec<FeatureKind> {
        let mut kinds = vec![FeatureKind::Indicator; self.categories.len()];
        kinds.extend(std::iter::repeat_n(FeatureKind::Numeric, self.numeric_count()));
        kinds
    }

    pub fn width(&self) -> usize {
        self.categories.len() + self.numeric_count()
    }

    fn numeric_count(&self) -> usize {
        NumericField::ALL.len() + usize::from(self.include_hour)
    }

    /// Encodes one imputed record. Unseen categories yield an all-zero indicator group;
    /// any numeric field still missing is written as 0.
    pub fn encode_row(&self, record: &SensorRecord, out: &mut Vec<f64>) {
        let hit = self
            .categories
            .binary_search_by(|c| c.as_str().cmp(&record.beach_name))
            .ok();
        out.extend((0..self.categories.len()).map(|i| if Some(i) == hit { 1.0 } else { 0.0 }));
        out.extend(NumericField::ALL.iter().map(|f| record.get(*f).unwrap_or(0.0)));
        if self.include_hour {
            out.push(record.hour_of_day().unwrap_or(self.mean_hour));
        }
    }

    /// Encodes every record that carries a target; rows without one are dropped.
    pub fn encode(&self, records: &[SensorRecord]) -> FeatureMatrix {
        let cols = self.width();
        let mut x = Vec::with_capacity(records.len() * cols);
        let mut y = Vec::with_capacity(records.len());
        for r in records {
            if let Some(t) = r.battery_life {
                self.encode_row(r, &mut x);
                y.push(t);
            }
        }
        FeatureMatrix {
            feature_names: self.feature_names(),
            feature_kinds: self.feature_kinds(),
            cols,
            x,
            y,
            scaling: None,
        }
    }
}

/// Dense row-major design matrix with its target vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub feature_names: Vec<String>,
    pub feature_kinds: Vec<FeatureKind>,
    pub cols: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub scaling: Option<ScalingParams>,
}

impl FeatureMatrix {
    /// Builds an all-numeric matrix from explicit rows.
    pub fn from_rows(rows: &[Vec<f64>], y: &[f64]) -> FeatureMatrix {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        assert_eq!(rows.len(), y.len(), "row/target count mismatch");
        FeatureMatrix {
            feature_names: (0..cols).map(|i| format!("x{i}")).collect(),
            feature_kinds: vec![FeatureKind::Numeric; cols],
            cols,
            x: rows.concat(),
            y: y.to_vec(),
            scaling: None,
        }
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.cols..(i + 1) * self.cols]
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let mut x = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            feature_names: self.feature_names.clone(),
            feature_kinds: self.feature_kinds.clone(),
            cols: self.cols,
            x,
            y: idx.iter().map(|&i| self.y[i]).collect(),
            scaling: self.scaling.clone(),
        }
    }

    /// Ranges of columns forming one-hot groups. Currently there is a single group
    /// made of the leading indicator columns.
    pub fn indicator_columns(&self) -> std::ops::Range<usize> {
        let n = self
            .feature_kinds
            .iter()
            .take_while(|k| **k == FeatureKind::Indicator)
            .count();
        0..n
    }
}

/// Fits the categorical layout on `records` and encodes them.
pub fn encode_one_hot(records: &[SensorRecord]) -> (FeatureMatrix, Encoding) {
    let enc = Encoding::fit(records, false);
    (enc.encode(records), enc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMethod {
    #[default]
    MinMax,
    ZScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub kind: FeatureKind,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

impl FeatureScale {
    fn forward(&self, v: f64, method: ScaleMethod, clamp: bool) -> f64 {
        if self.kind == FeatureKind::Indicator {
            return v;
        }
        match method {
            ScaleMethod::MinMax => {
                let range = self.max - self.min;
                if range <= 0.0 {
                    return 0.0;
                }
                let s = (v - self.min) / range;
                if clamp {
                    s.clamp(0.0, 1.0)
                } else {
                    s
                }
            }
            ScaleMethod::ZScore => {
                if self.std <= 0.0 {
                    0.0
                } else {
                    (v - self.mean) / self.std
                }
            }
        }
    }

    fn inverse(&self, s: f64, method: ScaleMethod) -> f64 {
        if self.kind == FeatureKind::Indicator {
            return s;
        }
        match method {
            ScaleMethod::MinMax => self.min + s * (self.max - self.min),
            ScaleMethod::ZScore => self.mean + s * self.std,
        }
    }
}

/// Per-feature statistics captured from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub method: ScaleMethod,
    pub features: Vec<FeatureScale>,
}

impl ScalingParams {
    pub fn fit(m: &FeatureMatrix, method: ScaleMethod) -> ScalingParams {
        let n = m.rows() as f64;
        let features = (0..m.cols)
            .map(|j| {
                let col = (0..m.rows()).map(|i| m.x[i * m.cols + j]);
                let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
                for v in col.clone() {
                    min = min.min(v);
                    max = max.max(v);
                    sum += v;
                }
                if m.rows() == 0 {
                    (min, max) = (0.0, 0.0);
                }
                let mean = if m.rows() == 0 { 0.0 } else { sum / n };
                let var = if m.rows() == 0 {
                    0.0
                } else {
                    col.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
                };
                FeatureScale {
                    kind: m.feature_kinds[j],
                    min,
                    max,
                    mean,
                    std: var.sqrt(),
                }
            })
            .collect();
        ScalingParams { method, features }
    }

    /// Scales one row in place. `clamp` restricts min-max output to [0, 1].
    pub fn apply_row(&self, row: &mut [f64], clamp: bool) {
        for (v, f) in row.iter_mut().zip(&self.features) {
            *v = f.forward(*v, self.method, clamp);
        }
    }

    pub fn inverse_row(&self, row: &mut [f64]) {
        for (v, f) in row.iter_mut().zip(&self.features) {
            *v = f.inverse(*v, self.method);
        }
    }
}

/// Scales `m` with the given method. With `params = None` the statistics are fitted on
/// `m` itself; otherwise they are reused and min-max output is clamped to [0, 1].
pub fn scale_features(
    m: &FeatureMatrix,
    params: Option<&ScalingParams>,
    method: ScaleMethod,
) -> (FeatureMatrix, ScalingParams) {
    let (params, clamp) = match params {
        Some(p) => (p.clone(), true),
        None => (ScalingParams::fit(m, method), false),
    };
    let mut out = m.clone();
    for row in out.x.chunks_mut(m.cols.max(1)) {
        params.apply_row(row, clamp);
    }
    out.scaling = Some(params.clone());
    (out, params)
}

pub fn scale_minmax(
    m: &FeatureMatrix,
    params: Option<&ScalingParams>,
) -> (FeatureMatrix, ScalingParams) {
    scale_features(m, params, ScaleMethod::MinMax)
}

/// Seeded shuffle split of `0..rows` into (train, test) index lists.
pub fn split_indices(
    rows: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatasetError::BadFraction(test_fraction));
    }
    if rows < 2 {
        return Err(DatasetError::TooFewRows(rows));
    }
    let n_test = ((rows as f64 * test_fraction).round() as usize).clamp(1, rows - 1);
    let mut idx: Vec<usize> = (0..rows).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train = idx.split_off(n_test);
    Ok((train, idx))
}

pub fn split_train_test(
    m: &FeatureMatrix,
    test_fraction: f64,
    seed: u64,
) -> Result<(FeatureMatrix, FeatureMatrix), DatasetError> {
    let (train, test) = split_indices(m.rows(), test_fraction, seed)?;
    Ok((m.select_rows(&train), m.select_rows(&test)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareConfig {
    pub test_fraction: f64,
    pub seed: u64,
    pub scale: ScaleMethod,
    pub include_hour: bool,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            test_fraction: 0.2,
            seed: 42,
            scale: ScaleMethod::MinMax,
            include_hour: false,
        }
    }
}

/// Everything needed to turn a raw reading into a model input row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub column_means: [f64; 5],
    pub encoding: Encoding,
    pub scaling: ScalingParams,
}

impl Preprocessor {
    pub fn feature_names(&self) -> Vec<String> {
        self.encoding.feature_names()
    }

    pub fn input_dim(&self) -> usize {
        self.encoding.width()
    }

    /// Impute, encode and scale a single reading for inference.
    pub fn transform(&self, record: &SensorRecord) -> Vec<f64> {
        let mut r = record.clone();
        for (field, &m) in NumericField::ALL.iter().zip(&self.column_means) {
            r.slot(*field).get_or_insert(m);
        }
        let mut row = Vec::with_capacity(self.input_dim());
        self.encoding.encode_row(&r, &mut row);
        self.scaling.apply_row(&mut row, true);
        row
    }
}

/// Train/test matrices plus the fitted preprocessing state.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub preprocessor: Preprocessor,
}

/// Runs imputation, encoding, splitting and scaling over parsed records.
pub fn prepare(records: &[SensorRecord], cfg: &PrepareConfig) -> Result<PreparedData, DatasetError> {
    let column_means = column_means(records)?;
    let imputed = impute_with(records, &column_means);
    let encoding = Encoding::fit(&imputed, cfg.include_hour);
    let full = encoding.encode(&imputed);
    if full.rows() == 0 {
        return Err(DatasetError::NoTargets);
    }
    let (train, test) = split_train_test(&full, cfg.test_fraction, cfg.seed)?;
    let (train, scaling) = scale_features(&train, None, cfg.scale);
    let (test, _) = scale_features(&test, Some(&scaling), cfg.scale);
    Ok(PreparedData {
        train,
        test,
        preprocessor: Preprocessor {
            column_means,
            encoding,
            scaling,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "Beach Name,Measurement Timestamp,Water Temperature,Turbidity,Transducer Depth,Wave Height,Wave Period,Battery Life\n";

    fn rec(beach: &str, temp: Option<f64>, bl: f64) -> SensorRecord {
        SensorRecord {
            beach_name: beach.into(),
            measurement_timestamp: "2020-07-15T10:00:00".into(),
            water_temperature: temp,
            turbidity: Some(1.0),
            transducer_depth: Some(1.5),
            wave_height: Some(0.2),
            wave_period: Some(4.0),
            battery_life: Some(bl),
        }
    }

    #[test]
    fn header_only_is_empty() {
        let recs = parse_csv(HEADER.as_bytes(), &ColumnMap::default()).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn empty_cell_is_missing() {
        let csv = format!("{HEADER}Montrose Beach,05/30/2013 09:00:00 AM,14.4,,1.2,0.1,4,60\n");
        let recs = parse_csv(csv.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].turbidity, None);
        assert_eq!(recs[0].water_temperature, Some(14.4));
        assert_eq!(recs[0].hour_of_day(), Some(9.0));
    }

    #[test]
    fn malformed_target_reports_line() {
        let csv = format!(
            "{HEADER}Ohio Street Beach,,14.4,1,1.2,0.1,4,60\nOhio Street Beach,,14.4,1,1.2,0.1,4,abc\n"
        );
        let err = parse_csv(csv.as_bytes(), &ColumnMap::default()).unwrap_err();
        match err {
            DatasetError::MalformedRow { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, "Battery Life");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn nan_text_is_rejected() {
        let csv = format!("{HEADER}Calumet Beach,,NaN,1,1.2,0.1,4,60\n");
        assert!(matches!(
            parse_csv(csv.as_bytes(), &ColumnMap::default()),
            Err(DatasetError::MalformedRow { .. })
        ));
    }

    #[test]
    fn missing_column_is_named() {
        let csv = "Beach Name,Turbidity\nx,1\n";
        assert_eq!(
            parse_csv(csv.as_bytes(), &ColumnMap::default()).unwrap_err(),
            DatasetError::MissingColumn("Measurement Timestamp".into())
        );
    }

    #[test]
    fn custom_column_map() {
        let map = ColumnMap {
            battery_life: "Battery".into(),
            ..ColumnMap::default()
        };
        let csv = "Beach Name,Measurement Timestamp,Water Temperature,Turbidity,Transducer Depth,Wave Height,Wave Period,Battery,Extra\nA,,1,2,3,4,5,6,ignored\n";
        let recs = parse_csv(csv.as_bytes(), &map).unwrap();
        assert_eq!(recs[0].battery_life, Some(6.0));
    }

    #[test]
    fn impute_symmetric_mean() {
        let recs = vec![
            rec("A", Some(10.0), 1.0),
            rec("A", None, 1.0),
            rec("A", Some(20.0), 1.0),
        ];
        let out = impute_means(&recs).unwrap();
        let temps: Vec<_> = out.iter().map(|r| r.water_temperature.unwrap()).collect();
        assert_eq!(temps, vec![10.0, 15.0, 20.0]);
    }

    #[test]
    fn impute_without_missing_is_identity() {
        let recs = vec![rec("A", Some(10.1), 1.0), rec("B", Some(-3.7), 2.0)];
        assert_eq!(impute_means(&recs).unwrap(), recs);
    }

    #[test]
    fn impute_all_missing_errors() {
        let recs = vec![rec("A", None, 1.0), rec("A", None, 1.0)];
        assert_eq!(
            impute_means(&recs).unwrap_err(),
            DatasetError::AllMissingColumn("water_temperature".into())
        );
    }

    #[test]
    fn one_hot_layout() {
        let recs = vec![
            rec("Ohio", Some(1.0), 1.0),
            rec("Montrose", Some(1.0), 1.0),
            rec("Calumet", Some(1.0), 1.0),
        ];
        let (m, enc) = encode_one_hot(&recs);
        assert_eq!(enc.categories, vec!["Calumet", "Montrose", "Ohio"]);
        assert_eq!(&m.row(1)[..3], &[0.0, 1.0, 0.0]);
        assert_eq!(m.feature_names[0], "beach_name=Calumet");
        assert_eq!(m.feature_names[3], "water_temperature");
        for i in 0..m.rows() {
            assert_eq!(m.row(i)[..3].iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn one_hot_single_category() {
        let recs = vec![rec("Only", Some(1.0), 1.0), rec("Only", Some(2.0), 1.0)];
        let (m, _) = encode_one_hot(&recs);
        assert_eq!(m.indicator_columns(), 0..1);
        assert!((0..m.rows()).all(|i| m.row(i)[0] == 1.0));
    }

    #[test]
    fn unseen_category_is_all_zero() {
        let (_, enc) = encode_one_hot(&[rec("A", Some(1.0), 1.0), rec("B", Some(1.0), 1.0)]);
        let mut row = Vec::new();
        enc.encode_row(&rec("Z", Some(1.0), 1.0), &mut row);
        assert_eq!(&row[..2], &[0.0, 0.0]);
    }

    #[test]
    fn rows_without_target_are_dropped() {
        let mut r = rec("A", Some(1.0), 1.0);
        r.battery_life = None;
        let (m, _) = encode_one_hot(&[r, rec("A", Some(2.0), 5.0)]);
        assert_eq!(m.rows(), 1);
        assert_eq!(m.y, vec![5.0]);
    }

    #[test]
    fn hour_feature_appended() {
        let recs = vec![rec("A", Some(1.0), 1.0)];
        let enc = Encoding::fit(&recs, true);
        let m = enc.encode(&recs);
        assert_eq!(m.feature_names.last().unwrap(), "hour_of_day");
        assert_eq!(*m.row(0).last().unwrap(), 10.0);
    }

    #[test]
    fn minmax_column() {
        let m = FeatureMatrix::from_rows(&[vec![50.0], vec![60.0], vec![80.0]], &[0.0; 3]);
        let (s, p) = scale_minmax(&m, None);
        assert_eq!(s.x[0], 0.0);
        assert!((s.x[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.x[2], 1.0);
        assert_eq!((p.features[0].min, p.features[0].max), (50.0, 80.0));
    }

    #[test]
    fn minmax_constant_column_is_zero() {
        let m = FeatureMatrix::from_rows(&[vec![7.0], vec![7.0], vec![7.0]], &[0.0; 3]);
        let (s, _) = scale_minmax(&m, None);
        assert_eq!(s.x, vec![0.0; 3]);
    }

    #[test]
    fn minmax_reused_params_clamp() {
        let train = FeatureMatrix::from_rows(&[vec![50.0], vec![80.0]], &[0.0; 2]);
        let (_, p) = scale_minmax(&train, None);
        let test = FeatureMatrix::from_rows(&[vec![90.0], vec![40.0]], &[0.0; 2]);
        let (s, _) = scale_minmax(&test, Some(&p));
        assert_eq!(s.x, vec![1.0, 0.0]);
    }

    #[test]
    fn indicator_columns_pass_through() {
        let recs = vec![rec("A", Some(1.0), 1.0), rec("B", Some(3.0), 1.0)];
        let (m, _) = encode_one_hot(&recs);
        let (s, _) = scale_minmax(&m, None);
        assert_eq!(&s.row(0)[..2], &[1.0, 0.0]);
        assert_eq!(s.row(0)[2], 0.0);
        assert_eq!(s.row(1)[2], 1.0);
    }

    #[test]
    fn zscore_switch() {
        let m = FeatureMatrix::from_rows(&[vec![1.0], vec![3.0]], &[0.0; 2]);
        let (s, _) = scale_features(&m, None, ScaleMethod::ZScore);
        assert_eq!(s.x, vec![-1.0, 1.0]);
    }

    #[test]
    fn split_cardinality_and_determinism() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let m = FeatureMatrix::from_rows(&rows, &[0.0; 10]);
        let (a, b) = split_train_test(&m, 0.2, 42).unwrap();
        assert_eq!((a.rows(), b.rows()), (8, 2));
        let (a2, b2) = split_train_test(&m, 0.2, 42).unwrap();
        assert_eq!((a, b), (a2, b2));
    }

    #[test]
    fn split_rejects_bad_inputs() {
        let m = FeatureMatrix::from_rows(&[vec![1.0], vec![2.0]], &[0.0; 2]);
        assert_eq!(split_train_test(&m, 0.0, 1).unwrap_err(), DatasetError::BadFraction(0.0));
        assert_eq!(split_train_test(&m, 1.0, 1).unwrap_err(), DatasetError::BadFraction(1.0));
        let one = FeatureMatrix::from_rows(&[vec![1.0]], &[0.0]);
        assert_eq!(split_train_test(&one, 0.5, 1).unwrap_err(), DatasetError::TooFewRows(1));
    }

    #[test]
    fn preprocessor_matches_batch_path() {
        let recs: Vec<_> = (0..20)
            .map(|i| {
                let t = if i % 5 == 0 { None } else { Some(i as f64) };
                rec(["A", "B", "C"][i % 3], t, 50.0 + i as f64)
            })
            .collect();
        let prep = prepare(&recs, &PrepareConfig::default()).unwrap();
        let p = &prep.preprocessor;
        let imputed = impute_with(&recs, &p.column_means);
        let full = p.encoding.encode(&imputed);
        let (train_idx, _) = split_indices(full.rows(), 0.2, 42).unwrap();
        for (k, &i) in train_idx.iter().enumerate() {
            assert_eq!(p.transform(&recs[i]), prep.train.row(k));
        }
    }

    fn arb_records() -> impl Strategy<Value = Vec<SensorRecord>> {
        let cell = prop::option::weighted(0.8, -50.0..50.0f64);
        let row = (
            prop::sample::select(vec!["A", "B", "C", "D"]),
            cell.clone(),
            cell.clone(),
            cell.clone(),
            cell.clone(),
            cell,
            0.0..100.0f64,
        )
            .prop_map(|(b, t, tu, d, h, p, bl)| SensorRecord {
                beach_name: b.into(),
                measurement_timestamp: String::new(),
                water_temperature: t,
                turbidity: tu,
                transducer_depth: d,
                wave_height: h,
                wave_period: p,
                battery_life: Some(bl),
            });
        prop::collection::vec(row, 2..60).prop_map(|mut v| {
            // guarantee at least one observation per column
            for f in NumericField::ALL {
                v[0].slot(f).get_or_insert(1.0);
            }
            v
        })
    }

    proptest! {
        #[test]
        fn impute_is_idempotent(recs in arb_records()) {
            let once = impute_means(&recs).unwrap();
            prop_assert_eq!(impute_means(&once).unwrap(), once);
        }

        #[test]
        fn pipeline_output_in_unit_box(recs in arb_records(), seed in 0u64..1000) {
            let prep = prepare(&recs, &PrepareConfig { seed, ..Default::default() }).unwrap();
            for m in [&prep.train, &prep.test] {
                for i in 0..m.rows() {
                    let row = m.row(i);
                    prop_assert!(row.iter().all(|v| v.is_finite() && (-1e-12..=1.0 + 1e-12).contains(v)));
                    prop_assert_eq!(row[m.indicator_columns()].iter().sum::<f64>(), 1.0);
                }
            }
        }

        #[test]
        fn inverse_recovers_training_values(recs in arb_records()) {
            let (m, _) = encode_one_hot(&impute_means(&recs).unwrap());
            let (s, p) = scale_minmax(&m, None);
            for i in 0..m.rows() {
                let mut row = s.row(i).to_vec();
                p.inverse_row(&mut row);
                for (j, (a, b)) in row.iter().zip(m.row(i)).enumerate() {
                    let f = &p.features[j];
                    if f.max > f.min {
                        prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(f.max - f.min));
                    }
                }
            }
        }

        #[test]
        fn split_is_partition(rows in 2usize..300, frac in 0.01f64..0.99, seed in any::<u64>()) {
            let (train, test) = split_indices(rows, frac, seed).unwrap();
            let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..rows).collect::<Vec<_>>());
            prop_assert!(!train.is_empty() && !test.is_empty());
        }
    }
}

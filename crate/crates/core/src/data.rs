//! Daily weather CSV ingestion, MinMax scaling, sliding windows and
//! chronological splits.

use std::fmt;
use std::io::Read;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

pub use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Column order of every [`WeatherSeries`].
pub const FEATURES: [&str; 10] = [
    "T2M", "QV2M", "RH2M", "PREC", "PS", "SWDWN", "CSWDWN", "LWDWN", "T2MDEW", "T2MWET",
];

pub const DATE_COLUMN: &str = "DATE";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Target {
    T2M,
    PS,
    PREC,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::T2M, Target::PS, Target::PREC];

    pub fn name(self) -> &'static str {
        match self {
            Target::T2M => "T2M",
            Target::PS => "PS",
            Target::PREC => "PREC",
        }
    }

    pub fn column(self) -> usize {
        FEATURES
            .iter()
            .position(|f| *f == self.name())
            .expect("target is a feature")
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "T2M" => Ok(Target::T2M),
            "PS" => Ok(Target::PS),
            "PREC" | "PRECTOTCORR" => Ok(Target::PREC),
            other => Err(Error::Config(format!("unknown target variable `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Reject,
    ForwardFill,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IngestOptions {
    pub missing: MissingPolicy,
    /// Values at or below this are treated as missing.
    pub sentinel: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            missing: MissingPolicy::Reject,
            sentinel: -999.0,
        }
    }
}

/// Gap-free daily series of the ten features, row-major `[day × feature]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeatherSeries {
    pub city: String,
    pub dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl WeatherSeries {
    pub fn new(city: impl Into<String>, dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if values.len() != dates.len() * FEATURES.len() {
            return Err(contract("weather series: values do not match dates × features"));
        }
        if dates.windows(2).any(|w| w[1] != w[0] + chrono::Days::new(1)) {
            return Err(contract("weather series: dates must be consecutive days"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(contract("weather series: non-finite value"));
        }
        Ok(Self {
            city: city.into(),
            dates,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, day: usize) -> &[f64] {
        let d = FEATURES.len();
        &self.values[day * d..(day + 1) * d]
    }

    pub fn column(&self, feature: usize) -> Vec<f64> {
        self.values
            .chunks(FEATURES.len())
            .map(|r| r[feature])
            .collect()
    }
}

pub fn ingest_csv(path: impl AsRef<Path>, city: &str, opts: &IngestOptions) -> Result<WeatherSeries> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_csv(file, city, opts)
}

/// Parses `DATE` (ISO-8601) plus the ten feature columns in any order.
/// Rows are sorted by date; duplicate dates are a data error.
pub fn parse_csv<R: Read>(reader: R, city: &str, opts: &IngestOptions) -> Result<WeatherSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::Schema("missing header row".into()));
    }
    let mut date_col = None;
    let mut feature_cols = [usize::MAX; 10];
    for (i, name) in headers.iter().enumerate() {
        if name.eq_ignore_ascii_case(DATE_COLUMN) {
            date_col = Some(i);
        } else if let Some(f) = FEATURES.iter().position(|f| f.eq_ignore_ascii_case(name)) {
            feature_cols[f] = i;
        } else {
            return Err(Error::Schema(format!("unknown column `{name}`")));
        }
    }
    let date_col = date_col.ok_or_else(|| Error::Schema("missing DATE column".into()))?;
    if let Some(f) = feature_cols.iter().position(|c| *c == usize::MAX) {
        return Err(Error::Schema(format!("missing column `{}`", FEATURES[f])));
    }

    let mut rows: Vec<(NaiveDate, usize, [f64; 10])> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| record.get(i).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(date_col), "%Y-%m-%d").map_err(|e| {
            Error::Data {
                line,
                msg: format!("bad date `{}`: {e}", field(date_col)),
            }
        })?;
        let mut vals = [0.0; 10];
        for (f, &col) in feature_cols.iter().enumerate() {
            let raw = field(col).trim();
            let v: f64 = if raw.is_empty() {
                f64::NAN
            } else {
                raw.parse().map_err(|_| Error::Data {
                line,
                    msg: format!("unparseable {} value `{raw}`", FEATURES[f]),
                })?
            };
            vals[f] = if !v.is_finite() || v <= opts.sentinel {
                f64::NAN
            } else {
                v
            };
        }
        rows.push((date, line, vals));
    }
    if rows.is_empty() {
        return Err(Error::Schema("no data rows".into()));
    }
    rows.sort_by_key(|r| r.0);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::Data {
                line: w[1].1,
                msg: format!("dates not strictly increasing: duplicate {}", w[1].0),
            });
        }
    }

    let mut dates = Vec::with_capacity(rows.len());
    let mut values: Vec<f64> = Vec::with_capacity(rows.len() * 10);
    for (date, line, vals) in rows {
        if let Some(&prev) = dates.last() {
            let mut expected: NaiveDate = prev + chrono::Days::new(1);
            while expected < date {
                if opts.missing == MissingPolicy::Reject {
                    return Err(Error::Data {
                        line,
                        msg: format!("missing day {expected}"),
                    });
                }
                let last: Vec<f64> = values[values.len() - 10..].to_vec();
                values.extend_from_slice(&last);
                dates.push(expected);
                expected = expected + chrono::Days::new(1);
            }
        }
        for (f, v) in vals.iter().enumerate() {
            if v.is_nan() {
                if opts.missing == MissingPolicy::Reject || dates.is_empty() {
                    return Err(Error::Data {
                        line,
                        msg: format!("missing {} value", FEATURES[f]),
                    });
                }
                values.push(values[values.len() - 10]);
            } else {
                values.push(*v);
            }
        }
        dates.push(date);
    }
    WeatherSeries::new(city, dates, values)
}

/// Writes a series in the ingestion format.
pub fn write_csv<W: std::io::Write>(series: &WeatherSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![DATE_COLUMN.to_string()];
    header.extend(FEATURES.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for (day, date) in series.dates.iter().enumerate() {
        let mut rec = vec![date.format("%Y-%m-%d").to_string()];
        rec.extend(series.row(day).iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// How features are mapped before a model sees them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingPolicy {
    /// Every feature onto `[0, 1]` (spline grid domain).
    Unit,
    /// `[0, 1]` everywhere except PREC, which goes onto `[-1, 1]`.
    Recurrent,
}

impl ScalingPolicy {
    pub fn ranges(self) -> Vec<(f64, f64)> {
        FEATURES
            .iter()
            .map(|f| match (self, *f) {
                (ScalingPolicy::Recurrent, "PREC") => (-1.0, 1.0),
                _ => (0.0, 1.0),
            })
            .collect()
    }
}

/// Per-feature affine map `x' = a + (x - min)(b - a)/(max - min)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub policy: ScalingPolicy,
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    pub ranges: Vec<(f64, f64)>,
}

impl MinMaxScaler {
    /// Statistics from `rows` (day indices) only.
    pub fn fit(series: &WeatherSeries, rows: Range<usize>, policy: ScalingPolicy) -> Result<Self> {
        if rows.is_empty() || rows.end > series.len() {
            return Err(contract(format!(
                "scaler rows {rows:?} invalid for series of length {}",
                series.len()
            )));
        }
        let d = FEATURES.len();
        let mut mins = vec![f64::INFINITY; d];
        let mut maxs = vec![f64::NEG_INFINITY; d];
        for day in rows {
            for (f, v) in series.row(day).iter().enumerate() {
                mins[f] = mins[f].min(*v);
                maxs[f] = maxs[f].max(*v);
            }
        }
        for f in 0..d {
            if maxs[f] <= mins[f] {
                return Err(Error::DegenerateFeature(FEATURES[f].to_string()));
            }
        }
        Ok(Self {
            policy,
            mins,
            maxs,
            ranges: policy.ranges(),
        })
    }

    pub fn features(&self) -> usize {
        self.mins.len()
    }

    pub fn transform_value(&self, feature: usize, x: f64) -> f64 {
        let (a, b) = self.ranges[feature];
        a + (x - self.mins[feature]) * (b - a) / (self.maxs[feature] - self.mins[feature])
    }

    pub fn inverse_value(&self, feature: usize, y: f64) -> f64 {
        let (a, b) = self.ranges[feature];
        self.mins[feature] + (y - a) * (self.maxs[feature] - self.mins[feature]) / (b - a)
    }

    pub fn transform(&self, series: &WeatherSeries) -> Result<WeatherSeries> {
        self.map(series, Self::transform_value)
    }

    pub fn inverse(&self, series: &WeatherSeries) -> Result<WeatherSeries> {
        self.map(series, Self::inverse_value)
    }

    fn map(&self, series: &WeatherSeries, f: fn(&Self, usize, f64) -> f64) -> Result<WeatherSeries> {
        let d = self.features();
        if d != FEATURES.len() {
            return Err(contract("scaler feature count does not match series"));
        }
        let values = series
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| f(self, i % d, *v))
            .collect();
        WeatherSeries::new(series.city.clone(), series.dates.clone(), values)
    }
}

/// Chronological, disjoint sample-index ranges.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl Splits {
    /// `train = floor(f_train·n)`, `val = floor(f_val·n)`, test takes the rest.
    pub fn new(n: usize, fractions: [f64; 3]) -> Result<Self> {
        let total: f64 = fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 || fractions.iter().any(|f| *f < 0.0) {
            return Err(contract(format!(
                "split fractions {fractions:?} must be non-negative and sum to 1"
            )));
        }
        // Tolerate representation error such as 0.72 * 100 = 71.99999999999999.
        let count = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let n_train = count(fractions[0]);
        let n_val = count(fractions[1]);
        let splits = Self {
            train: 0..n_train,
            val: n_train..n_train + n_val,
            test: (n_train + n_val).min(n)..n,
        };
        if splits.train.is_empty() || splits.val.is_empty() || splits.test.is_empty() {
            return Err(contract(format!(
                "split of {n} samples leaves an empty partition: {splits:?}"
            )));
        }
        Ok(splits)
    }

    pub fn range(&self, split: Split) -> Range<usize> {
        match split {
            Split::Train => self.train.clone(),
            Split::Val => self.val.clone(),
            Split::Test => self.test.clone(),
        }
    }

    /// Days touched by any training window or target.
    pub fn train_rows(&self, window: usize) -> Range<usize> {
        0..self.train.end + window
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Sliding windows over a (possibly scaled) series. Sample `j` covers days
/// `j..j+w` and targets day `j+w`.
#[derive(Clone, Debug)]
pub struct WindowedDataset {
    pub window: usize,
    pub target: Target,
    pub series: WeatherSeries,
}

pub fn make_windows(series: WeatherSeries, window: usize, horizon: usize, target: Target) -> Result<WindowedDataset> {
    if horizon != 1 {
        return Err(contract(format!("only one-day horizons are supported, got {horizon}")));
    }
    if window == 0 || series.len() < window + 1 {
        return Err(contract(format!(
            "series of length {} too short for window {window}",
            series.len()
        )));
    }
    Ok(WindowedDataset {
        window,
        target,
        series,
    })
}

/// Windows of a batch laid out `[sample][step][feature]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowBatch {
    pub batch: usize,
    pub window: usize,
    pub features: usize,
    pub data: Vec<f64>,
}

impl WindowBatch {
    pub fn new(batch: usize, window: usize, features: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != batch * window * features || batch == 0 || window == 0 {
            return Err(contract(format!(
                "window batch {batch}×{window}×{features} does not match {} values",
                data.len()
            )));
        }
        Ok(Self {
            batch,
            window,
            features,
            data,
        })
    }

    /// `[batch × features]` slice at time `t`.
    pub fn step(&self, t: usize) -> Vec<f64> {
        let stride = self.window * self.features;
        let mut out = Vec::with_capacity(self.batch * self.features);
        for b in 0..self.batch {
            let off = b * stride + t * self.features;
            out.extend_from_slice(&self.data[off..off + self.features]);
        }
        out
    }
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.series.len() - self.window
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> usize {
        FEATURES.len()
    }

    pub fn window_values(&self, sample: usize) -> &[f64] {
        let d = self.features();
        &self.series.values()[sample * d..(sample + self.window) * d]
    }

    pub fn target_day(&self, sample: usize) -> usize {
        sample + self.window
    }

    pub fn target_value(&self, sample: usize) -> f64 {
        self.series.row(self.target_day(sample))[self.target.column()]
    }

    pub fn target_date(&self, sample: usize) -> NaiveDate {
        self.series.dates[self.target_day(sample)]
    }

    pub fn batch(&self, samples: &[usize]) -> Result<(WindowBatch, Vec<f64>)> {
        let mut data = Vec::with_capacity(samples.len() * self.window * self.features());
        let mut targets = Vec::with_capacity(samples.len());
        for &j in samples {
            if j >= self.len() {
                return Err(contract(format!("sample {j} out of {}", self.len())));
            }
            data.extend_from_slice(self.window_values(j));
            targets.push(self.target_value(j));
        }
        Ok((
            WindowBatch::new(samples.len(), self.window, self.features(), data)?,
            targets,
        ))
    }

    pub fn scaled(&self, scaler: &MinMaxScaler) -> Result<WindowedDataset> {
        Ok(WindowedDataset {
            window: self.window,
            target: self.target,
            series: scaler.transform(&self.series)?,
        })
    }
}

/// Raw windows, their scaled counterpart, the fitted scaler and the splits.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub raw: WindowedDataset,
    pub scaled: WindowedDataset,
    pub scaler: MinMaxScaler,
    pub splits: Splits,
}

impl PreparedData {
    pub fn new(
        series: WeatherSeries,
        window: usize,
        target: Target,
        fractions: [f64; 3],
        policy: ScalingPolicy,
    ) -> Result<Self> {
        let raw = make_windows(series, window, 1, target)?;
        let splits = Splits::new(raw.len(), fractions)?;
        let scaler = MinMaxScaler::fit(&raw.series, splits.train_rows(window), policy)?;
        let scaled = raw.scaled(&scaler)?;
        Ok(Self {
            raw,
            scaled,
            scaler,
            splits,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> String {
        let mut h = vec!["DATE"];
        h.extend(FEATURES);
        h.join(",")
    }

    fn row(date: &str, base: f64) -> String {
        let mut r = vec![date.to_string()];
        r.extend((0..10).map(|f| format!("{}", base + f as f64)));
        r.join(",")
    }

    fn synthetic(n: usize) -> WeatherSeries {
        let start = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
        let dates = (0..n).map(|i| start + chrono::Days::new(i as u64)).collect();
        let values = (0..n * 10)
            .map(|i| ((i / 10) as f64 * 0.37 + (i % 10) as f64).sin() * 10.0 + (i % 10) as f64)
            .collect();
        WeatherSeries::new("x", dates, values).unwrap()
    }

    #[test]
    fn parse_and_sort() {
        let sorted = format!(
            "{}\n{}\n{}\n{}\n",
            header(),
            row("2020-01-01", 1.0),
            row("2020-01-02", 2.0),
            row("2020-01-03", 3.0)
        );
        let shuffled = format!(
            "{}\n{}\n{}\n{}\n",
            header(),
            row("2020-01-03", 3.0),
            row("2020-01-01", 1.0),
            row("2020-01-02", 2.0)
        );
        let opts = IngestOptions::default();
        let a = parse_csv(sorted.as_bytes(), "c", &opts).unwrap();
        let b = parse_csv(shuffled.as_bytes(), "c", &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert_eq!(a.row(1)[0], 2.0);
    }

    #[test]
    fn schema_errors() {
        let opts = IngestOptions::default();
        assert!(matches!(parse_csv("".as_bytes(), "c", &opts), Err(Error::Schema(_))));
        assert!(matches!(
            parse_csv(header().as_bytes(), "c", &opts),
            Err(Error::Schema(_))
        ));
        let extra = format!("{},WIND\n", header());
        assert!(matches!(parse_csv(extra.as_bytes(), "c", &opts), Err(Error::Schema(_))));
    }

    #[test]
    fn data_errors_carry_line_numbers() {
        let opts = IngestOptions::default();
        let bad = format!("{}\n{}\n2020-01-02,x,1,1,1,1,1,1,1,1,1\n", header(), row("2020-01-01", 1.0));
        match parse_csv(bad.as_bytes(), "c", &opts) {
            Err(Error::Data { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let dup = format!("{}\n{}\n{}\n", header(), row("2020-01-01", 1.0), row("2020-01-01", 2.0));
        assert!(matches!(parse_csv(dup.as_bytes(), "c", &opts), Err(Error::Data { .. })));
    }

    #[test]
    fn sentinel_and_gap_handling() {
        let mut r2 = row("2020-01-02", 2.0);
        r2 = r2.replacen(",2,", ",-999,", 1);
        let text = format!("{}\n{}\n{}\n{}\n", header(), row("2020-01-01", 1.0), r2, row("2020-01-04", 4.0));
        let reject = IngestOptions::default();
        assert!(parse_csv(text.as_bytes(), "c", &reject).is_err());
        let fill = IngestOptions {
            missing: MissingPolicy::ForwardFill,
            ..Default::default()
        };
        let s = parse_csv(text.as_bytes(), "c", &fill).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.row(1)[0], 1.0);
        assert_eq!(s.row(2), s.row(1));
        assert_eq!(s.row(3)[0], 4.0);

        let blank = format!("{}\n{}\n{}\n", header(), row("2020-01-01", 1.0), row("2020-01-02", 2.0).replacen(",2,", ",,", 1));
        assert!(parse_csv(blank.as_bytes(), "c", &reject).is_err());
        let s = parse_csv(blank.as_bytes(), "c", &fill).unwrap();
        assert_eq!((s.row(1)[0], s.row(1)[1]), (1.0, 3.0));
    }

    #[test]
    fn scaler_maps_extremes_and_round_trips() {
        let s = synthetic(200);
        let sc = MinMaxScaler::fit(&s, 0..150, ScalingPolicy::Recurrent).unwrap();
        let t = sc.transform(&s).unwrap();
        let prec = Target::PREC.column();
        for f in 0..10 {
            let col: Vec<f64> = t.column(f)[..150].to_vec();
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (a, b) = if f == prec { (-1.0, 1.0) } else { (0.0, 1.0) };
            assert!((lo - a).abs() < 1e-12 && (hi - b).abs() < 1e-12);
        }
        let back = sc.inverse(&t).unwrap();
        for (x, y) in back.values().iter().zip(s.values()) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn constant_feature_is_degenerate() {
        let start = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
        let dates = (0..5).map(|i| start + chrono::Days::new(i)).collect();
        let s = WeatherSeries::new("c", dates, vec![1.0; 50]).unwrap();
        assert!(matches!(
            MinMaxScaler::fit(&s, 0..5, ScalingPolicy::Unit),
            Err(Error::DegenerateFeature(_))
        ));
    }

    #[test]
    fn window_counts() {
        let ds = make_windows(synthetic(5115), 14, 1, Target::T2M).unwrap();
        assert_eq!(ds.len(), 5101);
        let ds = make_windows(synthetic(15), 14, 1, Target::PS).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.target_day(0), 14);
        assert!(make_windows(synthetic(14), 14, 1, Target::PS).is_err());
    }

    #[test]
    fn adjacent_windows_overlap() {
        let ds = make_windows(synthetic(40), 14, 1, Target::T2M).unwrap();
        let (a, b) = (ds.window_values(3), ds.window_values(4));
        assert_eq!(&a[10..], &b[..13 * 10]);
        assert_eq!(ds.target_value(3), ds.series.row(17)[0]);
    }

    #[test]
    fn split_arithmetic() {
        let s = Splits::new(5101, [0.72, 0.08, 0.20]).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (3672, 408, 1021));
        let s = Splits::new(100, [0.72, 0.08, 0.20]).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (72, 8, 20));
        assert_eq!(s.train.end, s.val.start);
        assert_eq!(s.val.end, s.test.start);
        assert!(Splits::new(3, [0.72, 0.08, 0.20]).is_err());
        assert!(Splits::new(100, [0.5, 0.5, 0.5]).is_err());
    }

    #[test]
    fn batch_steps_layout() {
        let ds = make_windows(synthetic(30), 3, 1, Target::T2M).unwrap();
        let (b, t) = ds.batch(&[0, 5]).unwrap();
        assert_eq!(b.step(2)[..10], *ds.series.row(2));
        assert_eq!(b.step(2)[10..], *ds.series.row(7));
        assert_eq!(t, vec![ds.series.row(3)[0], ds.series.row(8)[0]]);
    }
}

//! Cohesion Index computation and report rendering.
//!
//! `CoI(J)` is the mean over class modules of `1/f`, `CoI(AJ)` the same over
//! aspect modules, and the combined value is the plain mean of whichever of
//! the two is present. All arithmetic is carried out in the report's scalar
//! type; rounding to two decimals happens only when rendering.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::manifest::{ConcernManifest, ModuleDecl};
use crate::scalar::{format_hundredths, Scalar};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no cohesion index present to average")]
    NothingToAverage,
    #[error("unknown report format `{0}` (expected table, csv or json)")]
    UnknownFormat(String),
    #[error("cannot render an empty report list")]
    EmptyReport,
    #[error("serializing report: {0}")]
    Serialize(String),
}

fn reciprocal_mean<'a, T: Scalar>(modules: impl Iterator<Item = &'a ModuleDecl>) -> Option<T> {
    let (sum, n) = modules.fold((T::zero(), 0usize), |(sum, n), d| {
        (sum + T::one() / T::from_count(d.functionality_count()), n + 1)
    });
    (n > 0).then(|| sum / T::from_count(n))
}

/// `CoI(J)`; `None` when the manifest has no class modules.
pub fn coi_classes<T: Scalar>(m: &ConcernManifest) -> Option<T> {
    reciprocal_mean(m.classes())
}

/// `CoI(AJ)`; `None` when the manifest has no aspect modules.
pub fn coi_aspects<T: Scalar>(m: &ConcernManifest) -> Option<T> {
    reciprocal_mean(m.aspects())
}

/// Arithmetic mean of the indices that are present.
pub fn combined_average<T: Scalar>(classes: Option<T>, aspects: Option<T>) -> Result<T, MetricsError> {
    match (classes, aspects) {
        (Some(c), Some(a)) => Ok((c + a) / T::from_count(2)),
        (Some(v), None) | (None, Some(v)) => Ok(v),
        (None, None) => Err(MetricsError::NothingToAverage),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohesionReport<T> {
    pub version_label: String,
    pub coi_classes: Option<T>,
    pub coi_aspects: Option<T>,
    pub combined: T,
}

impl<T: Scalar> CohesionReport<T> {
    pub fn from_manifest(m: &ConcernManifest) -> Self {
        let coi_classes = coi_classes(m);
        let coi_aspects = coi_aspects(m);
        let combined = combined_average(coi_classes, coi_aspects)
            .expect("a valid manifest declares at least one module");
        Self {
            version_label: m.version_label().to_string(),
            coi_classes,
            coi_aspects,
            combined,
        }
    }

    /// Display value of `CoI(J)`, `"-"` when absent.
    pub fn classes_display(&self) -> String {
        display(self.coi_classes)
    }

    pub fn aspects_display(&self) -> String {
        display(self.coi_aspects)
    }

    pub fn combined_display(&self) -> String {
        format_hundredths(self.combined.hundredths())
    }

    /// One-line summary, e.g. `iot-java: CoI(J)=0.19, CoI(AJ)=-, avg=0.19`.
    pub fn summary_line(&self) -> String {
        format!(
            "{}: CoI(J)={}, CoI(AJ)={}, avg={}",
            self.version_label,
            self.classes_display(),
            self.aspects_display(),
            self.combined_display()
        )
    }
}

fn display<T: Scalar>(v: Option<T>) -> String {
    v.map(|v| format_hundredths(v.hundredths()))
        .unwrap_or_else(|| "-".to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Table,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(MetricsError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Table => "table",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        })
    }
}

#[derive(Serialize)]
struct JsonRow<'a> {
    version: &'a str,
    coi_classes: Option<f64>,
    coi_aspects: Option<f64>,
    average: f64,
}

fn rounded<T: Scalar>(v: T) -> f64 {
    v.hundredths() as f64 / 100.0
}

/// Renders reports as a whitespace table, CSV or a JSON array.
pub fn render_report<T: Scalar>(
    reports: &[CohesionReport<T>],
    format: ReportFormat,
) -> Result<String, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::EmptyReport);
    }
    match format {
        ReportFormat::Table => {
            let mut out = String::from("version CoI(J) CoI(AJ) Average\n");
            for r in reports {
                out.push_str(&format!(
                    "{} {} {} {}\n",
                    r.version_label,
                    r.classes_display(),
                    r.aspects_display(),
                    r.combined_display()
                ));
            }
            Ok(out)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let ser = |e: csv::Error| MetricsError::Serialize(e.to_string());
            w.write_record(["version", "coi_classes", "coi_aspects", "average"])
                .map_err(ser)?;
            for r in reports {
                let opt = |v: Option<T>| v.map(|v| format_hundredths(v.hundredths())).unwrap_or_default();
                w.write_record([
                    r.version_label.clone(),
                    opt(r.coi_classes),
                    opt(r.coi_aspects),
                    r.combined_display(),
                ])
                .map_err(ser)?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| MetricsError::Serialize(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| MetricsError::Serialize(e.to_string()))
        }
        ReportFormat::Json => {
            let rows: Vec<JsonRow<'_>> = reports
                .iter()
                .map(|r| JsonRow {
                    version: &r.version_label,
                    coi_classes: r.coi_classes.map(rounded),
                    coi_aspects: r.coi_aspects.map(rounded),
                    average: rounded(r.combined),
                })
                .collect();
            let mut s = serde_json::to_string_pretty(&rows)
                .map_err(|e| MetricsError::Serialize(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
    }
}

/// Display-level difference of `CoI(J)` between two reports (`right - left`),
/// in hundredths. `None` if either side has no classes.
pub fn classes_delta<T: Scalar>(left: &CohesionReport<T>, right: &CohesionReport<T>) -> Option<i64> {
    Some(right.coi_classes?.hundredths() - left.coi_classes?.hundredths())
}

/// Signed rendering of a hundredths delta: `+0.19`, `0.00`, `-0.05`.
pub fn format_delta(delta: Option<i64>) -> String {
    match delta {
        None => "-".to_string(),
        Some(0) => "0.00".to_string(),
        Some(d) if d > 0 => format!("+{}", format_hundredths(d)),
        Some(d) => format_hundredths(d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::parse_manifest;
    use num_rational::Rational64;

    fn manifest(text: &str) -> ConcernManifest {
        parse_manifest(text).unwrap()
    }

    #[test]
    fn two_functionalities_is_one_half() {
        let m = manifest("class A: x, y");
        assert_eq!(coi_classes::<f64>(&m), Some(0.5));
        assert_eq!(coi_classes::<Rational64>(&m), Some(Rational64::new(1, 2)));
    }

    #[test]
    fn three_functionalities_displays_033() {
        let m = manifest("class A: x, y, z");
        let r = CohesionReport::<f64>::from_manifest(&m);
        assert!((r.coi_classes.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.classes_display(), "0.33");
    }

    #[test]
    fn tangled_reference_counts() {
        let m = manifest("class A: a,b,c,d,e\nclass B: a,b,c,d,e,f\nclass C: a,b,c,d,e\nclass D: a,b,c,d,e");
        let v = coi_classes::<Rational64>(&m).unwrap();
        assert_eq!(v, Rational64::new(23, 120));
        assert_eq!(CohesionReport::<f64>::from_manifest(&m).classes_display(), "0.19");
    }

    #[test]
    fn single_functionality_classes_are_one() {
        let m = manifest("class A: x\nclass B: y");
        assert_eq!(coi_classes::<f64>(&m), Some(1.0));
    }

    #[test]
    fn aspects() {
        let m = manifest("aspect A: x\naspect B: y\naspect C: z");
        assert_eq!(coi_aspects::<Rational64>(&m), Some(Rational64::from_integer(1)));
        let m = manifest("class K: x, y");
        assert_eq!(coi_aspects::<f64>(&m), None);
        let m = manifest("aspect A: x\naspect B: y, z");
        assert_eq!(coi_aspects::<f64>(&m), Some(0.75));
    }

    #[test]
    fn averaging() {
        assert_eq!(combined_average(Some(0.375), Some(1.0)), Ok(0.6875));
        assert_eq!(combined_average(Some(0.1917), None), Ok(0.1917));
        assert_eq!(combined_average(Some(1.0), Some(1.0)), Ok(1.0));
        assert_eq!(
            combined_average::<f64>(None, None),
            Err(MetricsError::NothingToAverage)
        );
        assert_eq!(format_hundredths(0.6875f64.hundredths()), "0.69");
    }

    #[test]
    fn table_rendering() {
        let java = manifest("version iot-java\nclass A: a,b,c,d,e\nclass B: a,b,c,d,e,f\nclass C: a,b,c,d,e\nclass D: a,b,c,d,e");
        let aj = manifest("version iot-aspectj\nclass A: a,b\nclass B: a,b,c\nclass C: a,b,c\nclass D: a,b,c\naspect S: s\naspect L: l\naspect K: k");
        let reports = vec![
            CohesionReport::<f64>::from_manifest(&java),
            CohesionReport::<f64>::from_manifest(&aj),
        ];
        let table = render_report(&reports, ReportFormat::Table).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[1], "iot-java 0.19 - 0.19");
        assert_eq!(lines[2], "iot-aspectj 0.38 1.00 0.69");
        assert_eq!(reports[0].summary_line(), "iot-java: CoI(J)=0.19, CoI(AJ)=-, avg=0.19");
    }

    #[test]
    fn csv_and_json() {
        let m = manifest("version v\nclass A: x, y");
        let r = vec![CohesionReport::<f64>::from_manifest(&m)];
        assert_eq!(
            render_report(&r, ReportFormat::Csv).unwrap(),
            "version,coi_classes,coi_aspects,average\nv,0.50,,0.50\n"
        );
        let json: serde_json::Value =
            serde_json::from_str(&render_report(&r, ReportFormat::Json).unwrap()).unwrap();
        assert_eq!(json[0]["version"], "v");
        assert_eq!(json[0]["coi_classes"], 0.5);
        assert!(json[0]["coi_aspects"].is_null());
    }

    #[test]
    fn format_flags() {
        assert_eq!("csv".parse::<ReportFormat>(), Ok(ReportFormat::Csv));
        assert_eq!(
            "xml".parse::<ReportFormat>(),
            Err(MetricsError::UnknownFormat("xml".into()))
        );
        assert_eq!(
            render_report::<f64>(&[], ReportFormat::Table),
            Err(MetricsError::EmptyReport)
        );
    }

    #[test]
    fn deltas() {
        assert_eq!(format_delta(Some(19)), "+0.19");
        assert_eq!(format_delta(Some(0)), "0.00");
        assert_eq!(format_delta(Some(-5)), "-0.05");
        assert_eq!(format_delta(None), "-");
    }
}

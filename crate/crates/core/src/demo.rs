//! The end-to-end measurement: build both versions of the middleware,
//! check their manifests against the shipped ones, check that both run the
//! reference scenario identically, and report cohesion for each.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::manifest::{parse_manifest, write_manifest};
use crate::metrics::{render_report, CohesionReport, ReportFormat};
use crate::middleware::{reference_manifest, BuildMode};
use crate::scenario::{parse_scenario, ScenarioError};
use crate::sim::trace::{first_divergence, to_jsonl};
use crate::sim::{simulate, SimError};

pub const DEMO_SCENARIO: &str = include_str!("../../../scenarios/demo.scn");
pub const GOLDEN_TANGLED: &str = include_str!("../../../manifests/iot-java.cm");
pub const GOLDEN_WOVEN: &str = include_str!("../../../manifests/iot-aspectj.cm");

pub const MODES: [BuildMode; 2] = [BuildMode::Tangled, BuildMode::Woven];

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("manifest mismatch for {label}: line {line}: expected `{expected}`, emitted `{actual}`")]
    ManifestMismatch {
        label: String,
        line: usize,
        expected: String,
        actual: String,
    },
    #[error("golden manifest {label} does not parse: {message}")]
    GoldenUnreadable { label: String, message: String },
    #[error("trace mismatch between tangled and woven builds at event {index}")]
    TraceMismatch { index: usize },
    #[error("demo scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("cannot read golden manifest {path}: {message}")]
    Io { path: String, message: String },
}

impl DemoError {
    /// Short name of the failed check.
    pub fn verification(&self) -> &'static str {
        match self {
            DemoError::ManifestMismatch { .. } | DemoError::GoldenUnreadable { .. } | DemoError::Io { .. } => {
                "manifest"
            }
            DemoError::TraceMismatch { .. } => "trace-equivalence",
            DemoError::Scenario(_) | DemoError::Sim(_) => "simulation",
        }
    }
}

/// Expected manifests for the two builds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Goldens {
    pub tangled: String,
    pub woven: String,
}

impl Default for Goldens {
    fn default() -> Self {
        Self {
            tangled: GOLDEN_TANGLED.to_string(),
            woven: GOLDEN_WOVEN.to_string(),
        }
    }
}

impl Goldens {
    /// Reads `iot-java.cm` and `iot-aspectj.cm` from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, DemoError> {
        let read = |mode: BuildMode| {
            let path = dir.join(format!("{}.cm", mode.label()));
            fs::read_to_string(&path).map_err(|e| DemoError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        };
        Ok(Self {
            tangled: read(BuildMode::Tangled)?,
            woven: read(BuildMode::Woven)?,
        })
    }

    pub fn get(&self, mode: BuildMode) -> &str {
        match mode {
            BuildMode::Tangled => &self.tangled,
            BuildMode::Woven => &self.woven,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DemoOutput {
    /// `(mode, canonical manifest text)` for both builds.
    pub manifests: Vec<(BuildMode, String)>,
    /// `(mode, JSONL trace)` for both builds.
    pub traces: Vec<(BuildMode, String)>,
    pub reports: Vec<CohesionReport<f64>>,
}

impl DemoOutput {
    pub fn table(&self) -> String {
        render_report(&self.reports, ReportFormat::Table).expect("two reports")
    }

    pub fn csv(&self) -> String {
        render_report(&self.reports, ReportFormat::Csv).expect("two reports")
    }

    pub fn summary_lines(&self) -> Vec<String> {
        self.reports.iter().map(|r| r.summary_line()).collect()
    }

    /// Writes both manifests, both traces and `report.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (mode, text) in &self.manifests {
            let p = dir.join(format!("{}.cm", mode.label()));
            fs::write(&p, text)?;
            written.push(p);
        }
        for (mode, text) in &self.traces {
            let p = dir.join(format!("trace-{}.jsonl", mode.as_str()));
            fs::write(&p, text)?;
            written.push(p);
        }
        let p = dir.join("report.csv");
        fs::write(&p, self.csv())?;
        written.push(p);
        Ok(written)
    }
}

fn check_manifest(mode: BuildMode, emitted: &str, golden: &str) -> Result<(), DemoError> {
    let label = mode.label().to_string();
    parse_manifest(golden).map_err(|e| DemoError::GoldenUnreadable {
        label: label.clone(),
        message: e.to_string(),
    })?;
    if emitted == golden {
        return Ok(());
    }
    let (e_lines, g_lines): (Vec<&str>, Vec<&str>) = (emitted.lines().collect(), golden.lines().collect());
    let n = e_lines.len().max(g_lines.len());
    let line = (0..n)
        .find(|&i| e_lines.get(i) != g_lines.get(i))
        .unwrap_or(n);
    let at = |lines: &[&str]| {
        lines
            .get(line)
            .map_or_else(|| "<end of file>".to_string(), |l| l.to_string())
    };
    Err(DemoError::ManifestMismatch {
        label,
        line: line + 1,
        expected: at(&g_lines),
        actual: at(&e_lines),
    })
}

pub fn run_demo(goldens: &Goldens) -> Result<DemoOutput, DemoError> {
    let scenario = parse_scenario(DEMO_SCENARIO)?;
    let mut manifests = Vec::new();
    let mut reports = Vec::new();
    for mode in MODES {
        let m = reference_manifest(mode);
        let text = write_manifest(&m);
        check_manifest(mode, &text, goldens.get(mode))?;
        reports.push(CohesionReport::<f64>::from_manifest(&m));
        manifests.push((mode, text));
    }

    let mut runs = Vec::new();
    for mode in MODES {
        let world = simulate(&scenario, mode)?;
        runs.push((mode, world.trace().to_vec()));
    }
    if let Some(index) = first_divergence(&runs[0].1, &runs[1].1) {
        return Err(DemoError::TraceMismatch { index });
    }
    let traces = runs.into_iter().map(|(m, t)| (m, to_jsonl(&t))).collect();
    Ok(DemoOutput {
        manifests,
        traces,
        reports,
    })
}

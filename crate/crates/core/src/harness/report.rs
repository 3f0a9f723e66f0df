//! Per-row outcomes and the summary table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{CaseConfig, DomainConfig, GaugeConfig};
use crate::error::{Error, Result};
use crate::flow::{Backend, FlowResult, FlowStatus};
use crate::gauge::predicted_sf;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Agree,
    Disagree,
    Inconclusive,
    Failed,
}

impl RowStatus {
    pub fn name(self) -> &'static str {
        match self {
            RowStatus::Agree => "agree",
            RowStatus::Disagree => "DISAGREE",
            RowStatus::Inconclusive => "INCONCLUSIVE",
            RowStatus::Failed => "FAILED",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub key: String,
    pub backend: Backend,
    pub resolution: usize,
    pub predicted: i64,
    pub measured: Option<i64>,
    pub tracking: Option<i64>,
    pub agreement: bool,
    pub status: RowStatus,
    pub crossings: usize,
    pub refinement_depth: usize,
    pub samples: usize,
    pub runtime_s: f64,
    pub endpoint_defect: f64,
    pub refined_resolution: Option<usize>,
    pub refined_sf: Option<i64>,
    pub torus_index: Option<i64>,
    pub torus_index_doubled: Option<i64>,
    pub torus_gap_ratio: Option<f64>,
    pub flow_status: Option<FlowStatus>,
    pub error: Option<String>,
    pub notes: Vec<String>,
    pub domain: DomainConfig,
    pub gauge: GaugeConfig,
}

impl ReportRow {
    pub fn new(case: &CaseConfig, backend: Backend) -> Self {
        Self {
            key: case.key.clone(),
            backend,
            resolution: 0,
            predicted: 0,
            measured: None,
            tracking: None,
            agreement: false,
            status: RowStatus::Failed,
            crossings: 0,
            refinement_depth: 0,
            samples: 0,
            runtime_s: 0.0,
            endpoint_defect: 0.0,
            refined_resolution: None,
            refined_sf: None,
            torus_index: None,
            torus_index_doubled: None,
            torus_gap_ratio: None,
            flow_status: None,
            error: None,
            notes: Vec::new(),
            domain: case.domain.clone(),
            gauge: case.gauge.clone(),
        }
    }

    pub fn apply_flow(&mut self, r: &FlowResult) {
        self.flow_status = Some(r.status);
        self.measured = (r.status == FlowStatus::Complete).then_some(r.sf);
        self.tracking = r.tracking_sf;
        self.crossings = r.crossings.len();
        self.refinement_depth = r.refinement_depth;
        self.samples = r.samples;
        self.notes.extend(r.diagnostics.iter().cloned());
    }

    /// Sets `status` and `agreement` from the collected values.
    pub fn finalize(&mut self) {
        self.status = if self.error.is_some() {
            RowStatus::Failed
        } else if self.measured.is_none()
            || self.endpoint_defect > super::ENDPOINT_TOL
            || (self.refined_resolution.is_some() && self.refined_sf.is_none())
        {
            RowStatus::Inconclusive
        } else {
            let sf = self.measured.unwrap_or_default();
            let stable = self.refined_sf.is_none_or(|r| r == sf);
            let torus = [self.torus_index, self.torus_index_doubled].iter().all(|x| x.is_none_or(|i| i == sf));
            if sf == self.predicted && stable && torus { RowStatus::Agree } else { RowStatus::Disagree }
        };
        self.agreement = self.status == RowStatus::Agree;
    }

    /// Recomputes the predicted value from the stored configuration.
    pub fn audit(&self) -> Result<()> {
        let p = predicted_sf(&self.gauge.build(), &self.domain.build()?)?;
        if p != self.predicted {
            return Err(Error::Config(format!("row {:?}: stored prediction {} but the configuration gives {p}", self.key, self.predicted)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub agree: usize,
    pub disagree: usize,
    pub inconclusive: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub name: String,
    pub rows: Vec<ReportRow>,
    pub summary: Summary,
}

impl FlowReport {
    pub fn new(name: &str, rows: Vec<ReportRow>) -> Self {
        let mut summary = Summary { total: rows.len(), ..Default::default() };
        for r in &rows {
            match r.status {
                RowStatus::Agree => summary.agree += 1,
                RowStatus::Disagree => summary.disagree += 1,
                RowStatus::Inconclusive => summary.inconclusive += 1,
                RowStatus::Failed => summary.failed += 1,
            }
        }
        Self { name: name.to_string(), rows, summary }
    }

    /// 0 when every row agrees, 1 on any disagreement, 2 when rows are
    /// inconclusive or failed.
    pub fn exit_code(&self) -> i32 {
        if self.summary.disagree > 0 {
            1
        } else if self.summary.inconclusive + self.summary.failed > 0 {
            2
        } else {
            0
        }
    }

    pub fn render_text(&self) -> String {
        let opt = |x: Option<i64>| x.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        let header = ["key", "backend", "res", "pred", "sf", "track", "status", "cross", "depth", "runtime", "note"];
        let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            let mut note = r.error.clone().unwrap_or_default();
            if let Some(f) = r.refined_resolution {
                note = format!("{note}{}refined {f}: {}", if note.is_empty() { "" } else { "; " }, opt(r.refined_sf));
            }
            if let Some(t) = r.torus_index {
                note = format!("{note}{}torus {t}/{}", if note.is_empty() { "" } else { "; " }, opt(r.torus_index_doubled));
            }
            cells.push(vec![
                r.key.clone(),
                r.backend.to_string(),
                r.resolution.to_string(),
                r.predicted.to_string(),
                opt(r.measured),
                opt(r.tracking),
                r.status.name().to_string(),
                r.crossings.to_string(),
                r.refinement_depth.to_string(),
                format!("{:.1}s", r.runtime_s),
                note,
            ]);
        }
        let widths: Vec<usize> = (0..header.len()).map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = format!("{}\n", self.name);
        for row in &cells {
            let line: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        let s = &self.summary;
        let _ = writeln!(
            out,
            "{}/{} agree, {} disagree, {} inconclusive, {} failed",
            s.agree, s.total, s.disagree, s.inconclusive, s.failed
        );
        out
    }

    pub fn render_csv(&self) -> String {
        let opt = |x: Option<i64>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut out = String::from(
            "key,backend,resolution,predicted,measured,tracking,agreement,status,crossings,refinement_depth,samples,runtime_s,refined_resolution,refined_sf,torus_index,torus_index_doubled,error\n",
        );
        for r in &self.rows {
            let quote = |s: &str| format!("\"{}\"", s.replace('"', "\"\""));
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{:.3},{},{},{},{},{}",
                quote(&r.key),
                r.backend,
                r.resolution,
                r.predicted,
                opt(r.measured),
                opt(r.tracking),
                r.agreement,
                r.status.name().to_lowercase(),
                r.crossings,
                r.refinement_depth,
                r.samples,
                r.runtime_s,
                r.refined_resolution.map(|x| x.to_string()).unwrap_or_default(),
                opt(r.refined_sf),
                opt(r.torus_index),
                opt(r.torus_index_doubled),
                quote(r.error.as_deref().unwrap_or("")),
            );
        }
        out
    }

    /// Writes `report.json`, `report.csv` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(REPORT_JSON), serde_json::to_string_pretty(self)? + "\n")?;
        std::fs::write(dir.join(REPORT_CSV), self.render_csv())?;
        std::fs::write(dir.join(REPORT_TXT), self.render_text())?;
        Ok(())
    }
}

/// Reads and audits reports from directories or `report.json` files and
/// merges their rows.
pub fn load_reports(paths: &[PathBuf]) -> Result<FlowReport> {
    if paths.is_empty() {
        return Err(Error::Config("no report paths given".into()));
    }
    let mut rows = Vec::new();
    let mut names = Vec::new();
    for p in paths {
        let file = if p.is_dir() { p.join(REPORT_JSON) } else { p.clone() };
        let text = std::fs::read_to_string(&file).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", file.display())))
        })?;
        let r: FlowReport = serde_json::from_str(&text)?;
        for row in &r.rows {
            row.audit()?;
        }
        names.push(r.name);
        rows.extend(r.rows);
    }
    rows.sort_by(|a, b| (&a.key, a.backend).cmp(&(&b.key, b.backend)));
    Ok(FlowReport::new(&names.join(" + "), rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(status_sf: Option<i64>, predicted: i64) -> ReportRow {
        let domain = DomainConfig::Annulus { r_inner: 0.5, r_outer: 1.0, b_inner: -1.0, b_outer: 1.0 };
        let gauge = GaugeConfig { windings: vec![1], ..Default::default() };
        let case = CaseConfig::new(0, domain, gauge, 1.0);
        let mut r = ReportRow::new(&case, Backend::Radial);
        r.predicted = predicted;
        r.measured = status_sf;
        r.finalize();
        r
    }

    #[test]
    fn exit_codes() {
        assert_eq!(FlowReport::new("a", vec![row(Some(1), 1)]).exit_code(), 0);
        assert_eq!(FlowReport::new("a", vec![row(Some(1), 1), row(Some(0), 1)]).exit_code(), 1);
        let r = FlowReport::new("a", vec![row(Some(1), 1), row(None, 1)]);
        assert_eq!(r.exit_code(), 2);
        assert!(r.render_text().contains("INCONCLUSIVE"));
    }

    #[test]
    fn empty_directory_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_reports(&[dir.path().to_path_buf()]), Err(Error::Io(_))));
    }

    #[test]
    fn tampered_prediction_fails_the_audit() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = row(Some(1), 1);
        r.predicted = 3;
        FlowReport::new("x", vec![r]).write(dir.path()).unwrap();
        assert!(matches!(load_reports(&[dir.path().to_path_buf()]), Err(Error::Config(_))));
    }
}

//! Deterministic CSV and JSON emission shared by the CLI.
//!
//! Every table starts with `# key = value` comment lines recording the
//! tool version, the seed, and the run parameters, followed by a column
//! header and one row per record.  Floats are printed with a fixed
//! scientific format so identical runs produce byte-identical bodies;
//! a wall-clock stamp appears only when explicitly provided.

use std::fmt::Write as _;

use serde::Serialize;

use crate::cover::ComparisonTrial;
use crate::eigen::SpectrumSlice;
use crate::error::Result;
use crate::handle::HandleSweepRow;
use crate::pinch::PinchRow;

/// Provenance lines carried at the top of every report.
#[derive(Debug, Clone, Serialize)]
pub struct ReportHeader {
    pub tool: String,
    pub seed: u64,
    pub parameters: Vec<(String, String)>,
    /// Optional wall-clock stamp; omitted by default so bodies stay
    /// reproducible.
    pub stamp: Option<String>,
}

impl ReportHeader {
    pub fn new(seed: u64) -> Self {
        ReportHeader {
            tool: format!("conformal-spectra {}", env!("CARGO_PKG_VERSION")),
            seed,
            parameters: Vec::new(),
            stamp: None,
        }
    }

    pub fn with(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        self.parameters.push((key.to_string(), value.to_string()));
        self
    }

    fn comment_lines(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# tool = {}", self.tool);
        let _ = writeln!(out, "# seed = {}", self.seed);
        for (k, v) in &self.parameters {
            let _ = writeln!(out, "# {k} = {v}");
        }
        if let Some(stamp) = &self.stamp {
            let _ = writeln!(out, "# generated_at = {stamp}");
        }
        out
    }
}

/// Fixed float formatting used by every table.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Assembles a CSV document: header comments, column names, rows.
pub fn csv_document(header: &ReportHeader, columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.comment_lines();
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// JSON document with the same header block embedded.
pub fn json_document<T: Serialize>(header: &ReportHeader, payload: &T) -> Result<String> {
    #[derive(Serialize)]
    struct Document<'a, T: Serialize> {
        header: &'a ReportHeader,
        data: &'a T,
    }
    let mut text = serde_json::to_string_pretty(&Document { header, data: payload })?;
    text.push('\n');
    Ok(text)
}

/// Spectrum table: one row per eigenvalue with its 1-based index.
pub fn spectrum_csv(header: &ReportHeader, slice: &SpectrumSlice) -> String {
    let header = header
        .clone()
        .with("degree", slice.degree)
        .with("n_cells", slice.n_cells)
        .with("kernel_dim", slice.kernel_dim)
        .with("method", &slice.method)
        .with("max_residual", format_float(slice.max_residual));
    let rows: Vec<Vec<String>> = slice
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, v)| vec![(i + 1).to_string(), format_float(*v)])
        .collect();
    csv_document(&header, &["index", "mu"], &rows)
}

/// Pinch sweep table: eta, the leading eigenvalues, bound, volume.
pub fn pinch_csv(header: &ReportHeader, rows: &[PinchRow]) -> String {
    let count = rows.iter().map(|r| r.eigenvalues.len()).max().unwrap_or(0);
    let names: Vec<String> = (1..=count).map(|i| format!("mu_{i}")).collect();
    let mut columns = vec!["eta".to_string()];
    columns.extend(names);
    columns.push("upper_bound".to_string());
    columns.push("volume".to_string());
    let column_refs: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![format_float(r.eta)];
            for i in 0..count {
                row.push(r.eigenvalues.get(i).map(|v| format_float(*v)).unwrap_or_default());
            }
            row.push(format_float(r.upper_bound));
            row.push(format_float(r.volume));
            row
        })
        .collect();
    csv_document(header, &column_refs, &body)
}

/// Handle sweep table: radius, degree, per-position glued and reference
/// values, max relative deviation.
pub fn handle_csv(header: &ReportHeader, rows: &[HandleSweepRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .flat_map(|r| {
            r.glued.iter().zip(&r.reference).enumerate().map(move |(i, (g, u))| {
                vec![
                    format_float(r.epsilon),
                    r.degree.to_string(),
                    (i + 1).to_string(),
                    format_float(*g),
                    format_float(*u),
                    format_float(r.max_relative_deviation),
                ]
            })
        })
        .collect();
    csv_document(
        header,
        &["epsilon", "degree", "index", "glued", "reference", "max_relative_deviation"],
        &body,
    )
}

/// Comparison trial table: one row per trial with the worst-case ratio.
pub fn comparison_csv(header: &ReportHeader, trials: &[ComparisonTrial]) -> String {
    let body: Vec<Vec<String>> = trials
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let worst =
                t.ratios.iter().map(|r| r.max(1.0 / r)).fold(1.0f64, f64::max);
            vec![
                (i + 1).to_string(),
                format_float(t.tau),
                format_float(t.lo_factor),
                format_float(t.hi_factor),
                format_float(worst),
                t.contained.to_string(),
            ]
        })
        .collect();
    csv_document(
        header,
        &["trial", "tau", "lo_factor", "hi_factor", "worst_ratio", "contained"],
        &body,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slice() -> SpectrumSlice {
        SpectrumSlice {
            degree: 1,
            n_cells: 16,
            kernel_dim: 2,
            eigenvalues: vec![0.5, 1.25],
            max_residual: 1e-12,
            method: "dense".into(),
        }
    }

    #[test]
    fn csv_layout_is_stable() {
        let header = ReportHeader::new(7).with("complex", "cycle:8");
        let text = spectrum_csv(&header, &slice());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# tool = conformal-spectra 0.1.0");
        assert_eq!(lines[1], "# seed = 7");
        assert_eq!(lines[2], "# complex = cycle:8");
        assert_eq!(lines[3], "# degree = 1");
        assert!(lines.contains(&"index,mu"));
        assert!(text.ends_with('\n'));
        assert_eq!(lines.last().unwrap(), &"2,1.2500000000000000e0");
    }

    #[test]
    fn identical_inputs_identical_bytes() {
        let header = ReportHeader::new(42).with("k", 3);
        let a = spectrum_csv(&header, &slice());
        let b = spectrum_csv(&header, &slice());
        assert_eq!(a, b);
        let j1 = json_document(&header, &vec![1.0, 2.0]).unwrap();
        let j2 = json_document(&header, &vec![1.0, 2.0]).unwrap();
        assert_eq!(j1, j2);
    }

    #[test]
    fn stamp_appears_only_when_set() {
        let mut header = ReportHeader::new(1);
        let without = spectrum_csv(&header, &slice());
        assert!(!without.contains("generated_at"));
        header.stamp = Some("2026-01-01T00:00:00Z".into());
        let with = spectrum_csv(&header, &slice());
        assert!(with.contains("# generated_at = 2026-01-01T00:00:00Z"));
    }
}

//! Per-bucket result tables as CSV and aligned text.

use serde::{Deserialize, Serialize};

/// Metrics of one (enrollment age, time lapse) bucket. `None` renders as
/// `n/a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub age_bucket: String,
    pub lapse_bucket: String,
    pub n_subjects: usize,
    pub n_genuine: usize,
    pub n_imposter: usize,
    /// One entry per FAR target, in [`Report::far_targets`] order.
    pub tar: Vec<Option<f64>>,
    pub rank1: Option<f64>,
    pub rank5: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub far_targets: Vec<f64>,
    pub rows: Vec<ReportRow>,
}

/// `0.001` becomes `0.1`, `0.01` becomes `1.0`.
fn percent_label(far: f64) -> String {
    let pct = far * 100.0;
    let one = format!("{pct:.1}");
    if (one.parse::<f64>().unwrap_or(f64::NAN) - pct).abs() < 1e-9 {
        one
    } else {
        format!("{}", (pct * 1e6).round() / 1e6)
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

impl Report {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["age_bucket", "lapse_bucket", "n_subjects", "n_genuine", "n_imposter"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend(self.far_targets.iter().map(|&f| format!("tar_far_{}", percent_label(f))));
        h.push("rank1".into());
        h.push("rank5".into());
        h
    }

    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut c = vec![
                    r.age_bucket.clone(),
                    r.lapse_bucket.clone(),
                    r.n_subjects.to_string(),
                    r.n_genuine.to_string(),
                    r.n_imposter.to_string(),
                ];
                c.extend(r.tar.iter().map(|t| cell(*t)));
                c.push(cell(r.rank1));
                c.push(cell(r.rank5));
                c
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let rows = std::iter::once(self.header()).chain(self.cells());
        for row in rows {
            w.write_record(&row).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flushing to memory")).expect("csv output is UTF-8")
    }

    /// Space-aligned table: text columns left-aligned, numbers right-aligned.
    pub fn to_table(&self) -> String {
        let header = self.header();
        let cells = self.cells();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| cells.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
            .collect();
        let line = |row: &[String]| {
            let parts: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, v)| if c < 2 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
                .collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&header);
        out.push_str(&line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>()));
        for r in &cells {
            out.push_str(&line(r));
        }
        out
    }
}

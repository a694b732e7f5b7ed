//! Report tables, each rendered as CSV and as an aligned text table.

use std::path::Path;

use crate::error::Result;
use crate::footprint::EnergyEstimate;
use crate::gateway::{format_hours_minutes, Stage, TimingLog};
use crate::metrics::{AgreementRow, CoverageTable, ReferenceComparison};
use crate::store::write_atomic;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(title: impl Into<String>, headers: &[&str]) -> Self {
        Table {
            title: title.into(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| crate::error::Error::io("encoding csv", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
                if i > 0 {
                    s.push_str("  ");
                }
                s.push_str(c);
                if i + 1 < cells.len() {
                    s.extend(std::iter::repeat_n(' ', w - c.chars().count()));
                }
            }
            s.push('\n');
            s
        };
        let mut out = format!("{}\n\n", self.title);
        out.push_str(&line(&self.headers));
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&line(&rule));
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.txt` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(format!("creating {}", dir.display()), e))?;
        write_atomic(&dir.join(format!("{stem}.csv")), self.to_csv()?.as_bytes())?;
        write_atomic(&dir.join(format!("{stem}.txt")), self.to_text().as_bytes())
    }
}

/// `12992` → `"12,992"`.
pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

pub fn fraction(a: usize, b: usize) -> String {
    format!("{}/{}", thousands(a), thousands(b))
}

pub fn score(x: f64) -> String {
    format!("{x:.4}")
}

/// An endpoint row of the runtime table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuntimeRow {
    pub endpoint: String,
    pub hardware: String,
}

/// Per endpoint, deduplicated RAG and conversion runtime. Stages with no
/// logged time print as `--`.
pub fn runtime_table(log: &TimingLog, rows: &[RuntimeRow]) -> Table {
    let mut t = Table::new(
        "Processing time per model and stage",
        &["model", "hardware", "rag", "categorize"],
    );
    let cell = |endpoint: &str, stage: Stage| {
        let mut any = false;
        let ms: u64 = log
            .entries()
            .iter()
            .filter(|e| e.endpoint == endpoint && e.stage == stage)
            .inspect(|_| any = true)
            .map(|e| e.duration_ms)
            .sum();
        if any {
            format_hours_minutes(ms)
        } else {
            "--".to_string()
        }
    };
    for r in rows {
        t.push(vec![
            r.endpoint.clone(),
            r.hardware.clone(),
            cell(&r.endpoint, Stage::Rag),
            cell(&r.endpoint, Stage::Categorize),
        ]);
    }
    t
}

pub fn human_agreement_table(rows: &[AgreementRow]) -> Table {
    let mut t = Table::new(
        "Categorical verdicts against human annotation",
        &["model", "agreements", "kappa"],
    );
    for r in rows {
        t.push(vec![
            r.endpoint.clone(),
            fraction(r.agreements, r.total),
            score(r.kappa),
        ]);
    }
    t
}

/// `questions` maps CQ id to its text.
pub fn reference_table(cmp: &ReferenceComparison, question: impl Fn(u32) -> String) -> Table {
    let mut t = Table::new(
        "Voting decisions against earlier manual annotation",
        &["cq", "question", "variable", "agreements"],
    );
    for r in &cmp.rows {
        t.push(vec![
            r.cq_id.to_string(),
            question(r.cq_id),
            r.variable.clone(),
            fraction(r.agreements, r.total),
        ]);
    }
    t.push(vec![
        "--".into(),
        "Total".into(),
        String::new(),
        fraction(cmp.agreements(), cmp.total()),
    ]);
    t
}

pub fn coverage_table(cov: &CoverageTable) -> Table {
    let mut t = Table::new(
        "Publications providing information per CQ, before and after filtering",
        &["cq", "question", "all", "filtered"],
    );
    for r in &cov.rows {
        t.push(vec![
            r.cq_id.to_string(),
            r.question.clone(),
            fraction(r.before, cov.publications_before),
            fraction(r.after, cov.publications_after),
        ]);
    }
    t.push(vec![
        "--".into(),
        "Total for all queries".into(),
        fraction(cov.total_before(), cov.queries_before()),
        fraction(cov.total_after(), cov.queries_after()),
    ]);
    t
}

/// Pairwise scores before and after filtering; the two lists must pair up.
pub fn pair_table(title: &str, all: &[(String, String, f64)], filtered: &[(String, String, f64)]) -> Table {
    let mut t = Table::new(title, &["pair", "all", "filtered"]);
    for (a, b, x) in all {
        let y = filtered
            .iter()
            .find(|(fa, fb, _)| fa == a && fb == b)
            .map(|p| score(p.2))
            .unwrap_or_else(|| "--".into());
        t.push(vec![format!("{a} - {b}"), score(*x), y]);
    }
    t
}

pub fn footprint_table(rows: &[(Stage, EnergyEstimate)]) -> Table {
    let mut t = Table::new(
        "Energy and carbon estimate",
        &["stage", "runtime_h", "energy_kwh", "carbon_kg", "tree_months"],
    );
    for (stage, e) in rows {
        t.push(vec![
            stage.to_string(),
            format!("{:.2}", e.runtime_h),
            format!("{:.2}", e.energy_kwh),
            format!("{:.2}", e.carbon_kg),
            format!("{:.2}", e.tree_months),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formats() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(12992), "12,992");
        assert_eq!(thousands(1234567), "1,234,567");
        assert_eq!(fraction(3524, 12992), "3,524/12,992");
        assert_eq!(score(0.77081), "0.7708");
    }

    #[test]
    fn renders_csv_and_text() {
        let mut t = Table::new("T", &["a", "long header"]);
        t.push(vec!["x,y".into(), "1".into()]);
        assert_eq!(t.to_csv().unwrap(), "a,long header\n\"x,y\",1\n");
        assert_eq!(t.to_text(), "T\n\na    long header\n---  -----------\nx,y  1\n");
    }
}

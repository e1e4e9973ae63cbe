//! Report rendering: one CSV (machine) and one aligned-text summary (human)
//! per run.

use crate::runner::{ReportRow, SuiteOutcome};

fn csv_escape(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv(outcome: &SuiteOutcome) -> String {
    let mut out = String::from(
        "estimate,label,lhs,rhs_total,empirical_constant,refinement_stability,pass,params,notes\n",
    );
    for row in &outcome.rows {
        match &row.report {
            Some(r) => {
                let params: Vec<String> =
                    r.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                out.push_str(&format!(
                    "{},{},{:.9e},{:.9e},{:.9e},{:.6},{},{},{}\n",
                    r.id,
                    csv_escape(&row.label),
                    r.lhs,
                    r.rhs_total(),
                    r.empirical_constant,
                    r.refinement_stability,
                    if r.pass { "pass" } else { "FAIL" },
                    csv_escape(&params.join("; ")),
                    csv_escape(&r.notes.join("; ")),
                ));
            }
            None => {
                out.push_str(&format!(
                    "error,{},,,,,FAIL,,{}\n",
                    csv_escape(&row.label),
                    csv_escape(row.error.as_deref().unwrap_or("unknown")),
                ));
            }
        }
    }
    out
}

pub fn render_text(outcome: &SuiteOutcome) -> String {
    let mut rows: Vec<[String; 5]> = Vec::new();
    for row in &outcome.rows {
        match &row.report {
            Some(r) => rows.push([
                format!("{}", r.id),
                row.label.clone(),
                format!("c = {:.4e}", r.empirical_constant),
                format!("drift = {:.3}", r.refinement_stability),
                if r.pass { "pass".into() } else { "FAIL".into() },
            ]),
            None => rows.push([
                "error".into(),
                row.label.clone(),
                row.error.clone().unwrap_or_default(),
                String::new(),
                "FAIL".into(),
            ]),
        }
    }
    let mut widths = [0usize; 5];
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r.iter()) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for r in &rows {
        let line: Vec<String> =
            r.iter().zip(widths.iter()).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    let total = outcome.rows.len();
    let passed = outcome.rows.iter().filter(|r| r.passed()).count();
    out.push_str(&format!("{passed}/{total} checks passed\n"));
    out
}

pub fn render_report_details(row: &ReportRow) -> String {
    let mut out = String::new();
    if let Some(r) = &row.report {
        out.push_str(&format!("{} [{}]\n", r.id, row.label));
        out.push_str(&format!("  lhs              = {:.6e}\n", r.lhs));
        for (label, v) in &r.rhs_terms {
            out.push_str(&format!("  rhs {:<12} = {:.6e}\n", label, v));
        }
        out.push_str(&format!("  constant         = {:.6e}\n", r.empirical_constant));
        out.push_str(&format!("  stability        = {:.4}\n", r.refinement_stability));
        for (k, v) in &r.params {
            out.push_str(&format!("  param {k} = {v}\n"));
        }
        for n in &r.notes {
            out.push_str(&format!("  note: {n}\n"));
        }
    }
    out
}

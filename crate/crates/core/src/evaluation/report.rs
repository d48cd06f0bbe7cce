//! Plain-text tables and CSV exports of cross-validation results.
//!
//! Percentages use one decimal. Undefined values print as `n/a` in tables
//! and as empty fields in CSV.

use std::fmt::Write;

use super::cv::{AblationReport, Confusion, CvReport};
use super::{detection_metrics, multiclass_metrics, MulticlassConfusion};
use crate::vgrf::SeverityClass;

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}", 100.0 * v))
}

fn pct_sd(v: Option<(f64, f64)>) -> String {
    v.map_or_else(
        || "n/a".to_string(),
        |(m, sd)| format!("{:.1} ± {:.1}", 100.0 * m, 100.0 * sd),
    )
}

fn csv_num(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

fn rule(widths: &[usize]) -> String {
    let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    "-".repeat(total)
}

fn row(cells: &[String], widths: &[usize]) -> String {
    let mut line = String::new();
    for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
        if i == 0 {
            let _ = write!(line, "{cell:<w$}");
        } else {
            let _ = write!(line, "  {cell:>w$}");
        }
    }
    line.trim_end().to_string()
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let head: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    let mut out = String::new();
    out.push_str(&row(&head, &widths));
    out.push('\n');
    out.push_str(&rule(&widths));
    out.push('\n');
    for r in rows {
        out.push_str(&row(r, &widths));
        out.push('\n');
    }
    out
}

/// Sensitivity, specificity and accuracy (%) at window and walk level.
/// The walk-level row carries the across-fold mean ± SD.
pub fn detection_table(report: &CvReport) -> String {
    let Confusion::Detection(segment) = report.segment else {
        return "not a detection report\n".to_string();
    };
    let Confusion::Detection(walk) = report.subject else {
        return "not a detection report\n".to_string();
    };
    let s = detection_metrics(&segment);
    let w = detection_metrics(&walk);
    let (se_sd, sp_sd) = report.fold_detection_spread();
    let rows = vec![
        vec![
            "Segment level".to_string(),
            pct(s.sensitivity),
            pct(s.specificity),
            pct(s.accuracy),
        ],
        vec![
            "Walk level (pooled)".to_string(),
            pct(w.sensitivity),
            pct(w.specificity),
            pct(w.accuracy),
        ],
        vec![
            "Walk level (fold mean ± SD)".to_string(),
            pct_sd(se_sd),
            pct_sd(sp_sd),
            pct_sd(report.fold_accuracy()),
        ],
    ];
    table(&["", "Sensitivity", "Specificity", "Accuracy"], &rows)
}

pub fn detection_csv(report: &CvReport) -> String {
    let mut out = String::from("level,fold,tp,fn,tn,fp,sensitivity,specificity,accuracy\n");
    let mut line = |level: &str, fold: &str, c: &Confusion| {
        if let Confusion::Detection(cm) = c {
            let m = detection_metrics(cm);
            let _ = writeln!(
                out,
                "{level},{fold},{},{},{},{},{},{},{}",
                cm.tp,
                cm.fn_,
                cm.tn,
                cm.fp,
                csv_num(m.sensitivity),
                csv_num(m.specificity),
                csv_num(m.accuracy)
            );
        }
    };
    for f in &report.folds {
        line("segment", &f.fold.to_string(), &f.segment);
        line("walk", &f.fold.to_string(), &f.walk);
    }
    line("segment", "all", &report.segment);
    line("walk", "all", &report.subject);
    out
}

/// Per-class precision, recall and F1 (%) plus the support-weighted
/// average, for window- and walk-level decisions.
pub fn severity_table(report: &CvReport) -> String {
    let (Confusion::Severity(segment), Confusion::Severity(walk)) =
        (report.segment, report.subject)
    else {
        return "not a severity report\n".to_string();
    };
    let mut out = String::new();
    for (title, cm) in [("Segment level", segment), ("Walk level", walk)] {
        let m = multiclass_metrics(&cm);
        let mut rows: Vec<Vec<String>> = m
            .per_class
            .iter()
            .enumerate()
            .map(|(i, c)| {
                vec![
                    format!("Class {}", i + 1),
                    pct(c.precision),
                    pct(c.recall),
                    pct(c.f1),
                    c.support.to_string(),
                ]
            })
            .collect();
        rows.push(vec![
            "Weighted avg".to_string(),
            pct(m.weighted_precision),
            pct(m.weighted_recall),
            pct(m.weighted_f1),
            m.total.to_string(),
        ]);
        out.push_str(title);
        out.push('\n');
        out.push_str(&table(&["", "Precision", "Recall", "F1", "Support"], &rows));
        let _ = writeln!(out, "Accuracy: {}", pct(m.accuracy));
        out.push('\n');
    }
    let _ = writeln!(
        out,
        "Walk accuracy over folds: {}",
        pct_sd(report.fold_accuracy())
    );
    out
}

/// Row-normalized confusion matrix (% of each true class).
pub fn severity_confusion_table(cm: &MulticlassConfusion) -> String {
    let norm = cm.normalized();
    let rows: Vec<Vec<String>> = norm
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut cells = vec![format!("True {}", i + 1)];
            cells.extend(
                r.iter()
                    .map(|v| v.map_or("n/a".to_string(), |v| format!("{v:.1}"))),
            );
            cells
        })
        .collect();
    let header: Vec<String> = (1..=SeverityClass::COUNT)
        .map(|c| format!("Pred {c}"))
        .collect();
    let mut h: Vec<&str> = vec![""];
    h.extend(header.iter().map(String::as_str));
    table(&h, &rows)
}

pub fn severity_csv(report: &CvReport) -> String {
    let mut out = String::from("level,class,precision,recall,f1,support\n");
    for (level, c) in [("segment", report.segment), ("walk", report.subject)] {
        let Confusion::Severity(cm) = c else { continue };
        let m = multiclass_metrics(&cm);
        for (i, k) in m.per_class.iter().enumerate() {
            let _ = writeln!(
                out,
                "{level},{},{},{},{},{}",
                i + 1,
                csv_num(k.precision),
                csv_num(k.recall),
                csv_num(k.f1),
                k.support
            );
        }
        let _ = writeln!(
            out,
            "{level},weighted,{},{},{},{}",
            csv_num(m.weighted_precision),
            csv_num(m.weighted_recall),
            csv_num(m.weighted_f1),
            m.total
        );
    }
    out
}

pub fn normalized_confusion_csv(cm: &MulticlassConfusion) -> String {
    let mut out = String::from("true_class");
    for c in 1..=SeverityClass::COUNT {
        let _ = write!(out, ",pred_{c}");
    }
    out.push('\n');
    for (i, r) in cm.normalized().iter().enumerate() {
        let _ = write!(out, "{}", i + 1);
        for v in r {
            let _ = write!(out, ",{}", v.map_or(String::new(), |v| format!("{v:.4}")));
        }
        out.push('\n');
    }
    out
}

/// Window-level detection metrics (%) with one sensor pair removed.
pub fn ablation_table(report: &AblationReport) -> String {
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.label(),
                pct(r.metrics.sensitivity),
                pct(r.metrics.specificity),
                pct(r.metrics.accuracy),
            ]
        })
        .collect();
    table(&["Input", "Sensitivity", "Specificity", "Accuracy"], &rows)
}

pub fn ablation_csv(report: &AblationReport) -> String {
    let mut out =
        String::from("removed_pair,channels,tp,fn,tn,fp,sensitivity,specificity,accuracy\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            super::cv::pair_name(r.removed),
            r.channels,
            r.segment.tp,
            r.segment.fn_,
            r.segment.tn,
            r.segment.fp,
            csv_num(r.metrics.sensitivity),
            csv_num(r.metrics.specificity),
            csv_num(r.metrics.accuracy)
        );
    }
    out
}

/// One line per validation walk with its vote counts.
pub fn predictions_csv(report: &CvReport) -> String {
    let mut out = String::from("fold,subject,walk,truth,predicted,windows,votes\n");
    for p in report.walk_predictions() {
        let votes: Vec<String> = p.votes.iter().map(usize::to_string).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.fold,
            p.subject_id,
            p.walk_id,
            p.truth,
            p.predicted,
            p.windows(),
            votes.join(";")
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undefined_rows_print_na() {
        let cm = MulticlassConfusion::from_counts([
            [3, 1, 0, 0, 0],
            [0, 0, 0, 0, 0],
            [0, 0, 2, 0, 0],
            [0, 0, 0, 1, 0],
            [0, 0, 0, 0, 4],
        ]);
        let t = severity_confusion_table(&cm);
        let second = t.lines().nth(3).unwrap();
        assert!(second.starts_with("True 2"));
        assert_eq!(second.matches("n/a").count(), 5);
        assert!(t.contains("75.0") && t.contains("25.0"));
        let csv = normalized_confusion_csv(&cm);
        assert_eq!(csv.lines().nth(2).unwrap(), "2,,,,,");
    }

    #[test]
    fn table_alignment() {
        let t = table(
            &["", "A", "B"],
            &[vec!["x".into(), "1.0".into(), "22.0".into()]],
        );
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "     A     B");
        assert_eq!(lines[2], "x  1.0  22.0");
    }
}

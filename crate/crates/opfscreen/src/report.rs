//! Plain-text rendering of an evaluation summary.

use std::fmt::Write;

use opfscreen_core::metrics::{ConfusionCounts, MetricSet, Ratio};

use crate::eval::{ClassifierSummary, RunSummary};

const COLUMNS: [&str; 10] = [
    "FN", "FP", "TN", "TP", "NPV", "PPV", "TPR", "TNR", "Misclass.", "Accuracy",
];

fn pct(r: Option<Ratio>) -> String {
    r.map_or_else(|| "n/a".to_string(), |r| format!("{:.2}", r.percent()))
}

fn share(n: u64, c: &ConfusionCounts) -> Option<Ratio> {
    (c.total() > 0).then_some(Ratio { num: n, den: c.total() })
}

/// Counts as shares of all labels, then rates, all in percent.
pub fn metric_cells(c: &ConfusionCounts, m: &MetricSet) -> [String; 10] {
    [
        pct(share(c.fn_, c)),
        pct(share(c.fp, c)),
        pct(share(c.tn, c)),
        pct(share(c.tp, c)),
        pct(m.npv),
        pct(m.ppv),
        pct(m.tpr),
        pct(m.tnr),
        pct(m.misclassification),
        pct(m.accuracy),
    ]
}

/// Left-aligned first column, right-aligned rest.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let n = header.len();
    let mut w: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (k, c) in r.iter().enumerate().take(n) {
            w[k] = w[k].max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (k, c) in cells.iter().enumerate() {
            if k == 0 {
                let _ = write!(s, "{c:<width$}", width = w[0]);
            } else {
                let _ = write!(s, "  {c:>width$}", width = w[k]);
            }
        }
        s.push('\n');
        s
    };
    let mut out = line(header.to_vec());
    let total: usize = w.iter().sum::<usize>() + 2 * (n - 1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

fn classifier_row(name: &str, s: &ClassifierSummary) -> Vec<String> {
    let mut row = vec![name.to_string()];
    row.extend(metric_cells(&s.counts, &s.metrics));
    row
}

pub fn render_report(s: &RunSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Test scenarios: {}", s.scenarios);
    let _ = writeln!(
        out,
        "Threshold: {} ({}), fallback: {:?}, round cap: {}",
        s.settings.threshold.value,
        if s.settings.threshold.strict { "strict" } else { "inclusive" },
        s.settings.fallback,
        s.settings.round_cap
    );
    out.push('\n');

    out.push_str("Classification (percent)\n");
    let mut header = vec!["Labels"];
    header.extend(COLUMNS);
    out.push_str(&table(
        &header,
        &[classifier_row("voltage", &s.voltage), classifier_row("branch", &s.branch)],
    ));
    let _ = writeln!(
        out,
        "Raw counts: voltage tp={} tn={} fp={} fn={}; branch tp={} tn={} fp={} fn={}",
        s.voltage.counts.tp,
        s.voltage.counts.tn,
        s.voltage.counts.fp,
        s.voltage.counts.fn_,
        s.branch.counts.tp,
        s.branch.counts.tn,
        s.branch.counts.fp,
        s.branch.counts.fn_
    );
    out.push('\n');

    let p = &s.prevalence;
    out.push_str("Active constraints in the test set\n");
    let _ = writeln!(
        out,
        "Mean active voltage labels: {:.2} of {}",
        p.mean_active_voltage, p.voltage_labels
    );
    let _ = writeln!(out, "Mean active flow labels: {:.2} of {}", p.mean_active_flow, p.flow_labels);
    let _ = writeln!(out, "Inactive fraction: {:.2} %", p.inactive_fraction * 100.0);
    let _ = writeln!(
        out,
        "Mean enforced inequalities: {:.1} of {}",
        s.mean_truncated_inequalities, s.full_inequalities
    );
    out.push('\n');

    out.push_str("Optimality gap\n");
    let _ = writeln!(out, "Mean gap: {:.3e} %", s.gaps.mean_gap);
    match s.gaps.mean_gap_no_fallback {
        Some(g) => {
            let _ = writeln!(out, "Mean gap without fallback: {g:.3e} %");
        }
        None => out.push_str("Mean gap without fallback: n/a\n"),
    }
    let needed = s.gaps.fallback.iter().filter(|&&f| f).count();
    let _ = writeln!(
        out,
        "Scenarios needing fallback: {needed}, flagged: {}, unsolved: {}, max rounds: {}, mean rounds: {:.3}",
        s.flagged, s.unsolved, s.max_rounds, s.mean_rounds
    );
    out.push('\n');

    if let Some(t) = &s.timing {
        let _ = writeln!(out, "Solve cost over {} scenarios", t.scenarios);
        out.push_str(&table(
            &["Problem", "Iterations", "Time [ms]", "Fevals"],
            &[
                vec![
                    "original".into(),
                    format!("{:.2}", t.mean_iterations_original),
                    format!("{:.3}", t.mean_time_original * 1e3),
                    format!("{:.0}", t.mean_fevals_original),
                ],
                vec![
                    "truncated".into(),
                    format!("{:.2}", t.mean_iterations_truncated),
                    format!("{:.3}", t.mean_time_truncated * 1e3),
                    format!("{:.0}", t.mean_fevals_truncated),
                ],
            ],
        ));
        let _ = writeln!(
            out,
            "Time saving: {:.2} %, feval saving: {:.2} %",
            t.time_saving_percent, t.feval_saving_percent
        );
        out.push('\n');
    }

    if !s.comparisons.is_empty() {
        out.push_str("Comparison (percent)\n");
        let mut header = vec!["Model", "Labels"];
        header.extend(COLUMNS);
        let mut rows = Vec::new();
        for c in &s.comparisons {
            for (labels, cs) in [("voltage", &c.voltage), ("branch", &c.branch)] {
                let mut r = vec![c.name.clone(), labels.to_string()];
                r.extend(metric_cells(&cs.counts, &cs.metrics));
                rows.push(r);
            }
        }
        out.push_str(&table(&header, &rows));
    }
    out
}

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{MetricsError, Result};

/// Corpus-level scores. Rates are percentages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub matched_brackets: usize,
    pub gold_brackets: usize,
    pub predicted_brackets: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub complete_match_rate: f64,
    pub pos_accuracy: f64,
    pub pos_correct: usize,
    pub pos_total: usize,
    /// Set when there was no non-punctuation token to tag.
    pub pos_vacuous: bool,
    pub n_sentences: usize,
    /// label -> (matched, gold, predicted)
    pub per_label_counts: BTreeMap<String, (usize, usize, usize)>,
}

fn pct(num: usize, den: usize, vacuous: f64) -> f64 {
    if den == 0 {
        vacuous
    } else {
        100.0 * num as f64 / den as f64
    }
}

impl MetricReport {
    pub(super) fn finish(&mut self, complete: usize) {
        let both_empty = self.gold_brackets == 0 && self.predicted_brackets == 0;
        let vacuous = if both_empty { 100.0 } else { 0.0 };
        self.precision = pct(self.matched_brackets, self.predicted_brackets, vacuous);
        self.recall = pct(self.matched_brackets, self.gold_brackets, vacuous);
        self.f1 =
            if self.precision + self.recall > 0.0 { 2.0 * self.precision * self.recall / (self.precision + self.recall) } else { 0.0 };
        self.complete_match_rate = pct(complete, self.n_sentences, 100.0);
        self.pos_vacuous = self.pos_total == 0;
        self.pos_accuracy = pct(self.pos_correct, self.pos_total, 100.0);
    }

    /// `key=value` lines with two decimals.
    pub fn to_key_value(&self) -> String {
        format!(
            "precision={:.2}\nrecall={:.2}\nf1={:.2}\ncomplete_match={:.2}\npos_accuracy={:.2}\nn_sentences={}\n",
            self.precision, self.recall, self.f1, self.complete_match_rate, self.pos_accuracy, self.n_sentences
        )
    }

    /// Reads the scalar fields back from [`MetricReport::to_key_value`]
    /// output. Counts and per-label tables are not part of that format.
    pub fn from_key_value(text: &str) -> Result<Self> {
        let mut r = MetricReport::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| MetricsError::MalformedReport(line.into()))?;
            let bad = || MetricsError::MalformedReport(line.to_string());
            match k {
                "precision" => r.precision = v.parse().map_err(|_| bad())?,
                "recall" => r.recall = v.parse().map_err(|_| bad())?,
                "f1" => r.f1 = v.parse().map_err(|_| bad())?,
                "complete_match" => r.complete_match_rate = v.parse().map_err(|_| bad())?,
                "pos_accuracy" => r.pos_accuracy = v.parse().map_err(|_| bad())?,
                "n_sentences" => r.n_sentences = v.parse().map_err(|_| bad())?,
                _ => {}
            }
        }
        Ok(r)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<22}{:>10}", "sentences", self.n_sentences);
        let _ = writeln!(s, "{:<22}{:>10}", "gold brackets", self.gold_brackets);
        let _ = writeln!(s, "{:<22}{:>10}", "predicted brackets", self.predicted_brackets);
        let _ = writeln!(s, "{:<22}{:>10}", "matched brackets", self.matched_brackets);
        let _ = writeln!(s, "{:<22}{:>10.2}", "bracket precision", self.precision);
        let _ = writeln!(s, "{:<22}{:>10.2}", "bracket recall", self.recall);
        let _ = writeln!(s, "{:<22}{:>10.2}", "bracket F1", self.f1);
        let _ = writeln!(s, "{:<22}{:>10.2}", "complete match", self.complete_match_rate);
        let pos = if self.pos_vacuous { " (vacuous)" } else { "" };
        let _ = writeln!(s, "{:<22}{:>10.2}{}", "PoS accuracy", self.pos_accuracy, pos);
        if !self.per_label_counts.is_empty() {
            let _ = writeln!(s, "\n{:<16}{:>8}{:>8}{:>8}{:>8}", "label", "match", "gold", "pred", "F1");
            for (label, (m, g, p)) in &self.per_label_counts {
                let pr = pct(*m, *p, 0.0);
                let rc = pct(*m, *g, 0.0);
                let f = if pr + rc > 0.0 { 2.0 * pr * rc / (pr + rc) } else { 0.0 };
                let _ = writeln!(s, "{label:<16}{m:>8}{g:>8}{p:>8}{f:>8.2}");
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&format_mean_std(self.mean, self.std))
    }
}

/// `85.48 (1.5)`: mean to two decimals, std to at most two with trailing
/// zeros trimmed.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    let mut s = format!("{std:.2}");
    while s.ends_with('0') && !s.ends_with(".0") {
        s.pop();
    }
    format!("{mean:.2} ({s})")
}

/// Mean and population std of every scalar field over several runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub n_reports: usize,
    pub precision: Summary,
    pub recall: Summary,
    pub f1: Summary,
    pub complete_match: Summary,
    pub pos_accuracy: Summary,
}

impl Aggregate {
    pub fn fields(&self) -> [(&'static str, Summary); 5] {
        [
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
            ("complete_match", self.complete_match),
            ("pos_accuracy", self.pos_accuracy),
        ]
    }

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(s, "{k}={:.2}\n{k}_std={:.2}", v.mean, v.std);
        }
        let _ = writeln!(s, "n_reports={}", self.n_reports);
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(s, "{k:<16}{v}");
        }
        let _ = writeln!(s, "{:<16}{}", "runs", self.n_reports);
        s
    }
}

fn summarize(values: &[f64]) -> Summary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Summary { mean, std: var.sqrt() }
}

pub fn aggregate(reports: &[MetricReport]) -> Result<Aggregate> {
    if reports.is_empty() {
        return Err(MetricsError::EmptyAggregate);
    }
    let col = |f: fn(&MetricReport) -> f64| summarize(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(Aggregate {
        n_reports: reports.len(),
        precision: col(|r| r.precision),
        recall: col(|r| r.recall),
        f1: col(|r| r.f1),
        complete_match: col(|r| r.complete_match_rate),
        pos_accuracy: col(|r| r.pos_accuracy),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_f1(f1: f64) -> MetricReport {
        MetricReport { f1, ..Default::default() }
    }

    #[test]
    fn singleton_and_pair() {
        let a = aggregate(&[with_f1(85.34)]).unwrap();
        assert_eq!(a.f1, Summary { mean: 85.34, std: 0.0 });
        let a = aggregate(&[with_f1(80.0), with_f1(90.0)]).unwrap();
        assert_eq!(a.f1, Summary { mean: 85.0, std: 5.0 });
        assert_eq!(aggregate(&[]), Err(MetricsError::EmptyAggregate));
    }

    #[test]
    fn table_style_formatting() {
        assert_eq!(format_mean_std(85.48, 1.5), "85.48 (1.5)");
        assert_eq!(format_mean_std(85.34, 1.08), "85.34 (1.08)");
        assert_eq!(format_mean_std(71.714, 1.2249), "71.71 (1.22)");
        assert_eq!(format_mean_std(50.0, 0.0), "50.00 (0.0)");
        let scores = [84.0, 86.0, 85.0, 87.0, 83.5, 86.5, 84.5, 85.5, 86.0, 86.8];
        let reports: Vec<_> = scores.iter().map(|f| with_f1(*f)).collect();
        let a = aggregate(&reports).unwrap();
        assert!(a.f1.to_string().starts_with("85.48 ("));
    }

    #[test]
    fn key_value_roundtrip() {
        let r = MetricReport { precision: 91.234, recall: 80.0, f1: 85.0, n_sentences: 7, ..Default::default() };
        let kv = r.to_key_value();
        assert!(kv.starts_with("precision=91.23\nrecall=80.00\nf1=85.00\n"));
        let back = MetricReport::from_key_value(&kv).unwrap();
        assert_eq!(back.recall, 80.0);
        assert_eq!(back.n_sentences, 7);
        assert!(MetricReport::from_key_value("f1").is_err());
    }
}

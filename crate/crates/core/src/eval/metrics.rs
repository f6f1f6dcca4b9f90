//! Failure and accuracy rates with exact arithmetic, significance marks and
//! the tab-separated report table.

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::fisher::fisher_exact;
use super::{CaseResult, EvalError, Outcome};
use crate::memory::MemoryKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Kg2data,
    Rag2data,
    Chat2data,
}

impl System {
    pub fn display_name(self) -> &'static str {
        match self {
            System::Kg2data => "KG2data",
            System::Rag2data => "RAG2data",
            System::Chat2data => "chat2data",
        }
    }

    pub fn memory_kind(self) -> MemoryKind {
        match self {
            System::Kg2data => MemoryKind::Kg,
            System::Rag2data => MemoryKind::Vector,
            System::Chat2data => MemoryKind::Null,
        }
    }
}

impl From<MemoryKind> for System {
    fn from(kind: MemoryKind) -> Self {
        match kind {
            MemoryKind::Kg => System::Kg2data,
            MemoryKind::Vector => System::Rag2data,
            MemoryKind::Null => System::Chat2data,
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "FRIR")]
    Frir,
    #[serde(rename = "FRNR")]
    Frnr,
    #[serde(rename = "FRPR")]
    Frpr,
    #[serde(rename = "FRHR")]
    Frhr,
    #[serde(rename = "ACAR")]
    Acar,
}

impl Metric {
    /// Column order of the report table.
    pub const ALL: [Metric; 5] = [Metric::Frir, Metric::Frnr, Metric::Frpr, Metric::Frhr, Metric::Acar];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Frir => "FRIR",
            Metric::Frnr => "FRNR",
            Metric::Frpr => "FRPR",
            Metric::Frhr => "FRHR",
            Metric::Acar => "ACAR",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub intent_fail: u64,
    pub name_fail: u64,
    pub param_fail: u64,
    pub hallucination: u64,
    /// Correct calls whose final answer also surfaced every answer field.
    pub correct: u64,
    pub answer_fail: u64,
}

impl Counts {
    pub fn of(results: &[CaseResult]) -> Self {
        let mut c = Counts::default();
        for r in results {
            c.intent_fail += r.flags.intent_fail as u64;
            c.name_fail += r.flags.name_fail as u64;
            c.param_fail += r.flags.param_fail as u64;
            c.hallucination += r.flags.hallucination as u64;
            c.answer_fail += r.flags.answer_fail as u64;
            c.correct += (r.outcome == Outcome::Correct) as u64;
        }
        c
    }

    pub fn get(&self, metric: Metric) -> u64 {
        match metric {
            Metric::Frir => self.intent_fail,
            Metric::Frnr => self.name_fail,
            Metric::Frpr => self.param_fail,
            Metric::Frhr => self.hallucination,
            Metric::Acar => self.correct,
        }
    }
}

/// Percentage of `count / n` rounded half-up to two decimals, e.g. `1.43%`.
pub fn percent(count: u64, n: u64) -> String {
    assert!(n > 0, "percentage of an empty population");
    let hundredths = Ratio::new(u128::from(count) * 10_000, u128::from(n));
    let r = (hundredths + Ratio::new(1, 2)).floor().to_integer();
    format!("{}.{:02}%", r / 100, r % 100)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rate {
    pub count: u64,
    pub n: u64,
    /// Reduced fraction, e.g. `1/70`.
    pub exact: String,
    pub percent: String,
}

impl Rate {
    pub fn new(count: u64, n: u64) -> Self {
        let r = Ratio::new(count, n);
        Self { count, n, exact: format!("{}/{}", r.numer(), r.denom()), percent: percent(count, n) }
    }

    pub fn ratio(&self) -> Ratio<u64> {
        Ratio::new(self.count, self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rates {
    #[serde(rename = "FRIR")]
    pub frir: Rate,
    #[serde(rename = "FRNR")]
    pub frnr: Rate,
    #[serde(rename = "FRPR")]
    pub frpr: Rate,
    #[serde(rename = "FRHR")]
    pub frhr: Rate,
    #[serde(rename = "ACAR")]
    pub acar: Rate,
}

impl Rates {
    pub fn get(&self, metric: Metric) -> &Rate {
        match metric {
            Metric::Frir => &self.frir,
            Metric::Frnr => &self.frnr,
            Metric::Frpr => &self.frpr,
            Metric::Frhr => &self.frhr,
            Metric::Acar => &self.acar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: System,
    pub n: u64,
    pub counts: Counts,
    pub rates: Rates,
    /// Share of correct calls whose answer omitted a returned value.
    pub answer_fail: Rate,
    pub corpus_hash: String,
    pub seed: u64,
}

impl EvalReport {
    pub fn from_counts(system: System, counts: Counts, n: u64, corpus_hash: &str, seed: u64) -> Result<Self, EvalError> {
        if n == 0 {
            return Err(EvalError::Empty);
        }
        let rate = |m| Rate::new(counts.get(m), n);
        Ok(Self {
            system,
            n,
            counts,
            rates: Rates {
                frir: rate(Metric::Frir),
                frnr: rate(Metric::Frnr),
                frpr: rate(Metric::Frpr),
                frhr: rate(Metric::Frhr),
                acar: rate(Metric::Acar),
            },
            answer_fail: Rate::new(counts.answer_fail, n),
            corpus_hash: corpus_hash.to_string(),
            seed,
        })
    }

    /// The five percentages in column order, tab-separated.
    pub fn row_cells(&self) -> Vec<String> {
        Metric::ALL.iter().map(|m| self.rates.get(*m).percent.clone()).collect()
    }
}

pub fn compute_metrics(results: &[CaseResult], system: System, corpus_hash: &str, seed: u64) -> Result<EvalReport, EvalError> {
    EvalReport::from_counts(system, Counts::of(results), results.len() as u64, corpus_hash, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceMark {
    pub metric: Metric,
    pub p_value: f64,
    pub mark: String,
}

pub fn mark_for(p: f64) -> &'static str {
    if p <= 0.05 {
        "**"
    } else if p <= 0.1 {
        "*"
    } else {
        ""
    }
}

/// Two-sided Fisher exact test per metric on `count` vs `n - count`.
pub fn significance(a: &EvalReport, b: &EvalReport) -> Vec<SignificanceMark> {
    Metric::ALL
        .iter()
        .map(|&metric| {
            let (x, y) = (a.counts.get(metric), b.counts.get(metric));
            let p = fisher_exact(x, a.n - x, y, b.n - y);
            SignificanceMark { metric, p_value: p, mark: mark_for(p).to_string() }
        })
        .collect()
}

/// Tab-separated table: a header, one row per system, and under each
/// compared system a row of significance marks against the first report.
pub fn render_report(reports: &[EvalReport], marks: &[(System, Vec<SignificanceMark>)]) -> String {
    let mut lines = vec![std::iter::once("").chain(Metric::ALL.iter().map(|m| m.as_str())).collect::<Vec<_>>().join("\t")];
    for report in reports {
        lines.push(std::iter::once(report.system.display_name().to_string()).chain(report.row_cells()).collect::<Vec<_>>().join("\t"));
        if let Some((_, m)) = marks.iter().find(|(s, _)| *s == report.system) {
            lines.push(std::iter::once(String::new()).chain(m.iter().map(|x| x.mark.clone())).collect::<Vec<_>>().join("\t"));
        }
    }
    lines.join("\n") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(system: System, counts: Counts, n: u64) -> EvalReport {
        EvalReport::from_counts(system, counts, n, "h", 7).unwrap()
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(percent(1, 70), "1.43%");
        assert_eq!(percent(62, 70), "88.57%");
        assert_eq!(percent(1, 8), "12.50%");
        assert_eq!(percent(1, 800), "0.13%");
        assert_eq!(percent(1, 1600), "0.06%");
        assert_eq!(percent(0, 3), "0.00%");
        assert_eq!(percent(3, 3), "100.00%");
        assert_eq!(percent(101, 140), "72.14%");
    }

    #[test]
    fn rates_are_exact() {
        let r = report(System::Kg2data, Counts { param_fail: 2, correct: 62, name_fail: 1, ..Default::default() }, 70);
        assert_eq!(r.rates.frpr.exact, "1/35");
        assert_eq!(r.rates.frnr.ratio(), Ratio::new(1, 70));
        assert!(matches!(EvalReport::from_counts(System::Kg2data, Counts::default(), 0, "h", 7), Err(EvalError::Empty)));
    }

    #[test]
    fn identical_reports_are_not_significant() {
        let a = report(System::Kg2data, Counts { name_fail: 3, correct: 60, ..Default::default() }, 70);
        for m in significance(&a, &a) {
            assert!((m.p_value - 1.0).abs() < 1e-9);
            assert_eq!(m.mark, "");
        }
    }

    #[test]
    fn table_layout() {
        let a = report(System::Kg2data, Counts { name_fail: 1, param_fail: 2, correct: 62, ..Default::default() }, 70);
        let single = render_report(std::slice::from_ref(&a), &[]);
        assert_eq!(single, "\tFRIR\tFRNR\tFRPR\tFRHR\tACAR\nKG2data\t0.00%\t1.43%\t2.86%\t0.00%\t88.57%\n");
        let b = report(System::Rag2data, Counts { name_fail: 12, hallucination: 9, correct: 40, ..Default::default() }, 70);
        let marks = vec![(System::Rag2data, significance(&a, &b))];
        let text = render_report(&[a, b], &marks);
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(3).unwrap().starts_with('\t'));
        assert!(text.contains("**"));
    }
}

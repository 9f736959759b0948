use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rank-1 decisions tallied by true label (rows) and decided label (columns).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(labels: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let n = labels.len();
        Self {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    fn index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn record(&mut self, truth: &str, decided: &str) -> Result<()> {
        let i = self.index(truth)?;
        let j = self.index(decided)?;
        self.counts[i][j] += 1;
        Ok(())
    }

    pub fn row_total(&self, i: usize) -> usize {
        self.counts[i].iter().sum()
    }

    pub fn total(&self) -> usize {
        (0..self.labels.len()).map(|i| self.row_total(i)).sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Fraction of all queries decided correctly.
    pub fn recognition_rate(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.correct() as f64 / t as f64
        }
    }

    /// Percentage of row `i`'s queries decided as `j`; zero for empty rows.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        let t = self.row_total(i);
        if t == 0 {
            0.0
        } else {
            100.0 * self.counts[i][j] as f64 / t as f64
        }
    }

    /// Per-row error rate in percent (all off-diagonal cells).
    pub fn row_error(&self, i: usize) -> f64 {
        (0..self.labels.len())
            .filter(|&j| j != i)
            .map(|j| self.rate(i, j))
            .sum()
    }

    /// Off-diagonal cells with at least one query, as `(truth, decided, count)`.
    pub fn errors(&self) -> Vec<(&str, &str, usize)> {
        let mut out = Vec::new();
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if i != j && c > 0 {
                    out.push((self.labels[i].as_str(), self.labels[j].as_str(), c));
                }
            }
        }
        out
    }

    /// Error rates in percent with one decimal; the diagonal is printed as `--`
    /// and the last column is the row's total error.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\decided");
        for l in &self.labels {
            s.push(',');
            s.push_str(l);
        }
        s.push_str(",Total\n");
        for (i, l) in self.labels.iter().enumerate() {
            s.push_str(l);
            for j in 0..self.labels.len() {
                if i == j {
                    s.push_str(",--");
                } else {
                    let _ = write!(s, ",{:.1}", self.rate(i, j));
                }
            }
            let _ = writeln!(s, ",{:.1}", self.row_error(i));
        }
        s
    }

    /// Raw counts with a trailing per-row query count.
    pub fn counts_csv(&self) -> String {
        let mut s = String::from("true\\decided");
        for l in &self.labels {
            s.push(',');
            s.push_str(l);
        }
        s.push_str(",queries\n");
        for (i, l) in self.labels.iter().enumerate() {
            s.push_str(l);
            for c in &self.counts[i] {
                let _ = write!(s, ",{c}");
            }
            let _ = writeln!(s, ",{}", self.row_total(i));
        }
        s
    }
}

/// Tallies `(true label, decided label)` pairs into a matrix over `labels`.
pub fn evaluate_confusion<'a>(
    labels: &[String],
    decisions: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<ConfusionMatrix> {
    let mut m = ConfusionMatrix::new(labels.iter().cloned());
    for (truth, decided) in decisions {
        m.record(truth, decided)?;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> Vec<String> {
        vec!["a".into(), "b".into(), "c".into()]
    }

    #[test]
    fn all_correct_has_empty_off_diagonal() {
        let m = evaluate_confusion(&labels(), [("a", "a"), ("b", "b"), ("c", "c")]).unwrap();
        assert!(m.errors().is_empty());
        assert_eq!(m.recognition_rate(), 1.0);
        assert!(m.to_csv().contains("a,--,0.0,0.0,0.0"));
    }

    #[test]
    fn one_error_in_three() {
        let m = evaluate_confusion(&labels(), [("a", "a"), ("a", "b"), ("a", "a")]).unwrap();
        let csv = m.to_csv();
        let row = csv.lines().nth(1).unwrap();
        assert_eq!(row, "a,--,33.3,0.0,33.3");
        assert_eq!(m.row_total(0), 3);
        assert_eq!(m.errors(), vec![("a", "b", 1)]);
    }

    #[test]
    fn unknown_label_rejected() {
        let r = evaluate_confusion(&labels(), [("a", "z")]);
        assert!(matches!(r, Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn rows_conserve_query_counts() {
        let decisions = [("a", "b"), ("b", "b"), ("c", "a"), ("c", "c"), ("c", "b")];
        let m = evaluate_confusion(&labels(), decisions).unwrap();
        assert_eq!(m.row_total(0), 1);
        assert_eq!(m.row_total(1), 1);
        assert_eq!(m.row_total(2), 3);
        assert_eq!(m.total(), decisions.len());
    }
}

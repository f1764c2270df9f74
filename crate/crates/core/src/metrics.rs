//! Confusion matrix and the OA / AA / Cohen's κ accuracy suite.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::UNLABELED;
use crate::error::{Error, Result};

/// `C × C` counts; rows are ground truth, columns predictions (class `c` at index `c - 1`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::Shape(format!(
                "{classes}x{classes} matrix needs {} counts, got {}",
                classes * classes,
                counts.len()
            )));
        }
        Ok(Self { classes, counts })
    }

    pub fn from_rows(rows: &[&[u64]]) -> Result<Self> {
        let classes = rows.len();
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::Shape("confusion matrix must be square".into()));
        }
        Self::from_counts(
            classes,
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
        )
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Count for 1-based truth/prediction classes.
    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[(truth - 1) * self.classes + predicted - 1]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes)
            .map(|c| self.counts[c * self.classes + c])
            .sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[(class - 1) * self.classes..class * self.classes]
            .iter()
            .sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        (0..self.classes)
            .map(|r| self.counts[r * self.classes + class - 1])
            .sum()
    }

    pub fn record(&mut self, truth: u16, predicted: u16) -> Result<()> {
        if truth == UNLABELED {
            return Ok(());
        }
        let c = self.classes;
        for (what, l) in [("truth", truth), ("prediction", predicted)] {
            if l == UNLABELED || usize::from(l) > c {
                return Err(Error::Data(format!("{what} label {l} outside 1..={c}")));
            }
        }
        self.counts[(usize::from(truth) - 1) * c + usize::from(predicted) - 1] += 1;
        Ok(())
    }

    /// Elementwise sum; both matrices must have the same class count.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::Shape(
                "cannot merge matrices of different size".into(),
            ));
        }
        self.counts
            .iter_mut()
            .zip(&other.counts)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    fn ensure_nonempty(&self) -> Result<u64> {
        match self.total() {
            0 => Err(Error::Data("confusion matrix is empty".into())),
            n => Ok(n),
        }
    }

    /// Recall per class; `None` for classes without ground-truth samples.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        (1..=self.classes)
            .map(|c| match self.row_sum(c) {
                0 => None,
                n => Some(self.get(c, c) as f64 / n as f64),
            })
            .collect()
    }
}

/// Pairs with unlabeled ground truth are skipped.
pub fn accumulate(truth: &[u16], predicted: &[u16], classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "{} truth labels vs {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (&t, &p) in truth.iter().zip(predicted) {
        cm.record(t, p)?;
    }
    Ok(cm)
}

pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let n = cm.ensure_nonempty()?;
    Ok(cm.trace() as f64 / n as f64)
}

/// Mean recall over classes that have ground-truth samples.
pub fn average_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let present: Vec<f64> = cm.per_class_accuracy().into_iter().flatten().collect();
    if present.is_empty() {
        return Err(Error::Data(
            "confusion matrix has no ground-truth samples".into(),
        ));
    }
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

/// Cohen's κ, evaluated on exact integers as `(N·trace − Σ rᶜcᶜ) / (N² − Σ rᶜcᶜ)`.
/// When chance agreement is total (`p_e = 1`) the result is 1 if agreement is
/// perfect and 0 otherwise.
pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let n = u128::from(cm.ensure_nonempty()?);
    let trace = u128::from(cm.trace());
    let chance: u128 = (1..=cm.classes())
        .map(|c| u128::from(cm.row_sum(c)) * u128::from(cm.col_sum(c)))
        .sum();
    let denom = n * n - chance;
    if denom == 0 {
        return Ok(if trace == n { 1.0 } else { 0.0 });
    }
    let numer = (n * trace) as f64 - chance as f64;
    Ok(numer / denom as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: usize,
    pub name: String,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub rows: Vec<ClassRow>,
    pub overall_accuracy: f64,
    pub average_accuracy: f64,
    pub kappa: f64,
}

pub fn percent(value: f64) -> String {
    format!("{:.2}", value * 100.0)
}

fn percent_or_na(value: Option<f64>) -> String {
    value.map(percent).unwrap_or_else(|| "n/a".into())
}

/// Default names `C1`, `C2`, …
pub fn default_class_names(classes: usize) -> Vec<String> {
    (1..=classes).map(|c| format!("C{c}")).collect()
}

pub fn per_class_report(cm: &ConfusionMatrix, names: &[String]) -> Result<ClassReport> {
    if names.len() != cm.classes() {
        return Err(Error::Config(format!(
            "{} class names for {} classes",
            names.len(),
            cm.classes()
        )));
    }
    let rows = cm
        .per_class_accuracy()
        .into_iter()
        .zip(names)
        .enumerate()
        .map(|(i, (accuracy, name))| ClassRow {
            class: i + 1,
            name: name.clone(),
            accuracy,
        })
        .collect();
    Ok(ClassReport {
        rows,
        overall_accuracy: overall_accuracy(cm)?,
        average_accuracy: average_accuracy(cm)?,
        kappa: kappa(cm)?,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Pads cells so every column lines up.
pub fn markdown_table(header: &[String], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            rows.iter()
                .map(|r| r[i].chars().count())
                .chain(std::iter::once(header[i].chars().count()))
                .max()
                .unwrap_or(0)
                .max(3)
        })
        .collect();
    let line = |cells: &[String]| {
        let mut s = String::from("|");
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(s, " {c:<w$} |");
        }
        s.push('\n');
        s
    };
    let mut out = line(header);
    out.push('|');
    for w in &widths {
        out.push_str(&format!("{}|", "-".repeat(w + 2)));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

pub fn csv_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    for r in std::iter::once(header).chain(rows.iter().map(|r| r.as_slice())) {
        let cells: Vec<String> = r.iter().map(|c| csv_field(c)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

impl ClassReport {
    fn table(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let header = vec!["Class".into(), "Name".into(), "Accuracy (%)".into()];
        let mut rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    format!("C{}", r.class),
                    r.name.clone(),
                    percent_or_na(r.accuracy),
                ]
            })
            .collect();
        rows.push(vec![
            "OA".into(),
            String::new(),
            percent(self.overall_accuracy),
        ]);
        rows.push(vec![
            "AA".into(),
            String::new(),
            percent(self.average_accuracy),
        ]);
        rows.push(vec!["Kappa".into(), String::new(), percent(self.kappa)]);
        (header, rows)
    }

    pub fn to_csv(&self) -> String {
        let (h, r) = self.table();
        csv_table(&h, &r)
    }

    pub fn to_markdown(&self) -> String {
        let (h, r) = self.table();
        markdown_table(&h, &r)
    }
}

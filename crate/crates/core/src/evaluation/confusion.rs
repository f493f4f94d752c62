use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Counts indexed `[reference][predicted]` over zero-based classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix { k, counts: vec![0; k * k] }
    }

    pub fn from_counts(k: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != k * k {
            return Err(Error::shape(format!("{k}x{k} confusion matrix needs {} counts", k * k)));
        }
        Ok(ConfusionMatrix { k, counts })
    }

    /// Tallies zero-based `(reference, predicted)` pairs.
    pub fn from_pairs(k: usize, reference: &[usize], predicted: &[usize]) -> Result<Self> {
        if reference.len() != predicted.len() {
            return Err(Error::usage("reference and prediction lists differ in length"));
        }
        let mut cm = ConfusionMatrix::new(k);
        for (&r, &p) in reference.iter().zip(predicted) {
            if r >= k || p >= k {
                return Err(Error::data(format!("class index {} outside 0..{k}", r.max(p))));
            }
            cm.counts[r * k + p] += 1;
        }
        Ok(cm)
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, reference: usize, predicted: usize) -> u64 {
        self.counts[reference * self.k + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i * self.k..(i + 1) * self.k].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.k).map(|i| self.get(i, j)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
    /// Recall of each class, zero-based.
    pub per_class: Vec<f64>,
}

/// Overall accuracy, average per-class accuracy and Cohen's kappa.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::data("confusion matrix is empty"));
    }
    let n = total as f64;
    let per_class = (0..cm.classes())
        .map(|i| match cm.row_sum(i) {
            0 => Err(Error::data(format!("class {} has no reference pixels", i + 1))),
            r => Ok(cm.get(i, i) as f64 / r as f64),
        })
        .collect::<Result<Vec<f64>>>()?;
    let oa = cm.trace() as f64 / n;
    let aa = per_class.iter().sum::<f64>() / per_class.len() as f64;
    let pe = (0..cm.classes()).map(|i| cm.row_sum(i) as f64 * cm.col_sum(i) as f64).sum::<f64>() / (n * n);
    let kappa = if pe < 1.0 { (oa - pe) / (1.0 - pe) } else { 1.0 };
    Ok(Metrics { oa, aa, kappa, per_class })
}

impl Metrics {
    /// Accuracy table: one row per class with train/test counts, then OA,
    /// AA and Kappa x 100.
    pub fn report(&self, names: &[String], train: &[usize], test: &[usize]) -> String {
        let mut s = format!("{:<4} {:<20} {:>8} {:>8} {:>10}\n", "id", "class", "train", "test", "acc (%)");
        for (i, acc) in self.per_class.iter().enumerate() {
            let name = names.get(i).map_or_else(|| format!("class {}", i + 1), Clone::clone);
            let _ = writeln!(
                s,
                "{:<4} {:<20} {:>8} {:>8} {:>10.2}",
                i + 1,
                name,
                train.get(i).copied().unwrap_or(0),
                test.get(i).copied().unwrap_or(0),
                100.0 * acc
            );
        }
        let _ = writeln!(s, "{:<43} {:>10.2}", "OA (%)", 100.0 * self.oa);
        let _ = writeln!(s, "{:<43} {:>10.2}", "AA (%)", 100.0 * self.aa);
        let _ = writeln!(s, "{:<43} {:>10.2}", "Kappa x 100", 100.0 * self.kappa);
        s
    }

    /// `key=value` lines at full precision.
    pub fn to_kv(&self) -> String {
        let mut s = format!("oa={:?}\naa={:?}\nkappa={:?}\n", self.oa, self.aa, self.kappa);
        for (i, v) in self.per_class.iter().enumerate() {
            let _ = writeln!(s, "class_{}={:?}", i + 1, v);
        }
        s
    }
}

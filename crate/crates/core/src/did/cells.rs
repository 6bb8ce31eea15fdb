use crate::error::{DidError, Result};
use crate::panel::{GroupLabel, GroupPredicate, PanelDataset};
use crate::scalar::Scalar;

/// Outcome sums and counts per (group label, period), built in one pass.
///
/// Means over a set of labels add label sums in ascending label order, so
/// every caller sharing a table gets bit-identical cell means.
pub(crate) struct CellTable<T> {
    labels: Vec<GroupLabel>,
    periods: Vec<i64>,
    sums: Vec<T>,
    counts: Vec<usize>,
}

impl<T: Scalar> CellTable<T> {
    pub fn build(data: &PanelDataset<T>) -> Self {
        let labels = data.group_labels();
        let periods = data.periods().to_vec();
        let np = periods.len();
        let mut sums = vec![T::zero(); labels.len() * np];
        let mut counts = vec![0usize; labels.len() * np];
        let label_idx: Vec<usize> = data
            .groups()
            .iter()
            .map(|l| labels.binary_search(l).expect("label present"))
            .collect();
        for rec in data.records() {
            let p = periods.binary_search(&rec.time).expect("period present");
            let k = label_idx[rec.unit] * np + p;
            sums[k] = sums[k] + rec.outcome;
            counts[k] += 1;
        }
        Self {
            labels,
            periods,
            sums,
            counts,
        }
    }

    pub fn cell(&self, predicate: &GroupPredicate, time: i64) -> (T, usize) {
        let Ok(p) = self.periods.binary_search(&time) else {
            return (T::zero(), 0);
        };
        let np = self.periods.len();
        let mut sum = T::zero();
        let mut n = 0;
        for (li, &label) in self.labels.iter().enumerate() {
            if predicate.matches(label) {
                sum = sum + self.sums[li * np + p];
                n += self.counts[li * np + p];
            }
        }
        (sum, n)
    }

    /// Cell mean and size, enforcing `min_cell`.
    pub fn mean(&self, predicate: &GroupPredicate, time: i64, min_cell: usize) -> Result<(T, usize)> {
        let (sum, n) = self.cell(predicate, time);
        if n == 0 {
            return Err(DidError::EmptyCell {
                predicate: predicate.to_string(),
                time,
            });
        }
        if n < min_cell {
            return Err(DidError::SmallCell {
                predicate: predicate.to_string(),
                time,
                count: n,
                min_cell,
            });
        }
        Ok((sum / T::of_usize(n), n))
    }
}

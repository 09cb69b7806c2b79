//! Class-membership structure over a batch.

use crate::error::{Error, Result};

/// A grouping of batch columns into `k` mutually exclusive classes, stored as
/// a label vector plus per-class counts. Equivalent to the diagonal 0/1
/// selector matrices whose sum is the identity, without ever materializing
/// them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
    counts: Vec<usize>,
}

impl Partition {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::PartitionMismatch("empty label vector".into()));
        }
        if k == 0 {
            return Err(Error::PartitionMismatch("class count must be positive".into()));
        }
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::PartitionMismatch(format!(
                    "label {} at column {} out of range [0, {})",
                    l, i, k
                )));
            }
            counts[l] += 1;
        }
        Ok(Partition { labels, k, counts })
    }

    /// One class per column: the degenerate self-partition with n = 1.
    pub fn singletons(n: usize) -> Self {
        Partition {
            labels: (0..n).collect(),
            k: n,
            counts: vec![1; n],
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Column indices of class `j`, in increasing order.
    pub fn class_columns(&self, j: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == j)
            .map(|(i, _)| i)
            .collect()
    }

    /// Classes that actually occur in the batch, ascending.
    pub fn present_classes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.k).filter(|&j| self.counts[j] > 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_sum_to_len() {
        let p = Partition::new(vec![0, 1, 1, 2, 0], 4).unwrap();
        assert_eq!(p.counts().iter().sum::<usize>(), p.len());
        assert_eq!(p.counts(), &[2, 2, 1, 0]);
        assert_eq!(p.present_classes().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn out_of_range_label_rejected() {
        assert!(Partition::new(vec![0, 3], 3).is_err());
        assert!(Partition::new(vec![], 3).is_err());
    }

    #[test]
    fn class_columns_in_order() {
        let p = Partition::new(vec![1, 0, 1, 1], 2).unwrap();
        assert_eq!(p.class_columns(1), vec![0, 2, 3]);
        assert_eq!(p.class_columns(0), vec![1]);
    }
}

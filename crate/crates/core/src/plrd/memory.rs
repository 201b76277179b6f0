//! Per-class replay memory and exemplar selection.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::prototypes::PrototypeBank;
use crate::math;
use crate::numeric::matrix::DenseMatrix;
use crate::rng::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    Random,
    /// Samples closest to their class prototype.
    Icarl,
    /// Samples farthest from their class prototype.
    IcarlContrary,
}

/// Stored input rows per class id. Labels are ground truth for in-domain
/// classes and pseudo-labels otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayMemory {
    capacity: usize,
    dim: usize,
    classes: Vec<DenseMatrix>,
}

impl ReplayMemory {
    pub fn new(capacity: usize, dim: usize) -> Self {
        Self {
            capacity,
            dim,
            classes: Vec::new(),
        }
    }

    /// Samples kept per class, `n`.
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of class slots (known classes, including empty ones).
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, id: usize) -> Option<&DenseMatrix> {
        self.classes.get(id)
    }

    pub fn len(&self) -> usize {
        self.classes.iter().map(DenseMatrix::rows).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adds the next class slot (its id is the current class count).
    pub fn push_class(&mut self, rows: DenseMatrix) -> Result<usize> {
        if rows.rows() > self.capacity {
            return Err(Error::contract(format!(
                "{} samples exceed the per-class capacity {}",
                rows.rows(),
                self.capacity
            )));
        }
        if rows.cols() != self.dim && rows.rows() > 0 {
            return Err(Error::shape(
                "ReplayMemory::push_class",
                format!("{} columns", self.dim),
                format!("{} columns", rows.cols()),
            ));
        }
        let rows = if rows.rows() == 0 { DenseMatrix::empty(self.dim) } else { rows };
        self.classes.push(rows);
        Ok(self.classes.len() - 1)
    }

    /// Appends one class slot per consecutive id in `first..first + count`,
    /// filled from `inputs` by `selection` (a list of `(class, row indices)`).
    pub fn add_classes(
        &mut self,
        first: usize,
        count: usize,
        inputs: &DenseMatrix,
        selection: &[(usize, Vec<usize>)],
    ) -> Result<()> {
        if first != self.classes.len() {
            return Err(Error::contract(format!(
                "memory holds {} classes, cannot add from id {first}",
                self.classes.len()
            )));
        }
        for c in first..first + count {
            let idx = selection
                .iter()
                .find(|(class, _)| *class == c)
                .map_or(&[][..], |(_, idx)| idx.as_slice());
            self.push_class(inputs.select_rows(idx))?;
        }
        Ok(())
    }

    /// All stored rows with their labels, in class order.
    pub fn flatten(&self) -> (DenseMatrix, Vec<usize>) {
        let mut rows = DenseMatrix::empty(self.dim);
        let mut labels = Vec::with_capacity(self.len());
        for (c, m) in self.classes.iter().enumerate() {
            for r in m.row_iter() {
                rows.push_row(r).expect("memory rows share the input width");
                labels.push(c);
            }
        }
        (rows, labels)
    }

    /// Checks the capacity bound and that every label is below `known`.
    pub fn check_invariants(&self, known: usize) -> Result<()> {
        if self.classes.len() > known {
            return Err(Error::contract(format!(
                "memory holds labels up to {} but only {known} classes are known",
                self.classes.len() - 1
            )));
        }
        if let Some((c, m)) = self
            .classes
            .iter()
            .enumerate()
            .find(|(_, m)| m.rows() > self.capacity)
        {
            return Err(Error::contract(format!(
                "class {c} stores {} samples, capacity {}",
                m.rows(),
                self.capacity
            )));
        }
        Ok(())
    }
}

/// Chooses up to `n` row indices per class. Returns `(class, indices)` for
/// every class present in `labels`, in ascending class order.
///
/// `guide` supplies L2-normalized embeddings of `inputs` and the prototype
/// bank; it is required by the prototype-based strategies.
pub fn memory_select(
    labels: &[usize],
    n: usize,
    strategy: SelectionStrategy,
    guide: Option<(&DenseMatrix, &PrototypeBank)>,
    seed: u64,
) -> Result<Vec<(usize, Vec<usize>)>> {
    if strategy != SelectionStrategy::Random && guide.is_none() {
        return Err(Error::config(format!(
            "selection strategy {strategy:?} needs prototypes"
        )));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::new();
    for (c, mut idx) in by_class.into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        match (strategy, guide) {
            (SelectionStrategy::Random, _) => {
                idx.shuffle(&mut rng);
                idx.truncate(n);
            }
            (_, Some((emb, bank))) => {
                let proto = bank.prototype(c).ok_or_else(|| {
                    Error::config(format!("no prototype for class {c}"))
                })?;
                let mut scored: Vec<(f64, usize)> =
                    idx.iter().map(|&i| (math::dot(emb.row(i), proto), i)).collect();
                let closest = strategy == SelectionStrategy::Icarl;
                // stable sort keeps ascending index order among equal scores
                scored.sort_by(|a, b| {
                    let ord = a.0.total_cmp(&b.0);
                    if closest { ord.reverse() } else { ord }
                });
                idx = scored.into_iter().take(n).map(|(_, i)| i).collect();
            }
            _ => unreachable!("checked above"),
        }
        out.push((c, idx));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    New,
    Old,
}

/// New samples first, then replayed samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedBatch {
    pub inputs: DenseMatrix,
    pub origins: Vec<Origin>,
    /// Labels of the old rows, in row order after the new rows.
    pub old_labels: Vec<usize>,
}

impl MixedBatch {
    pub fn num_new(&self) -> usize {
        self.origins.iter().filter(|&&o| o == Origin::New).count()
    }

    pub fn num_old(&self) -> usize {
        self.old_labels.len()
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }
}

/// Pairs the new batch with as many replayed samples, drawn uniformly with
/// replacement from the whole memory. An empty memory yields a new-only batch.
pub fn assemble_batch(new_batch: &DenseMatrix, memory: &ReplayMemory, seed: u64) -> MixedBatch {
    let n_new = new_batch.rows();
    let (stored, labels) = memory.flatten();
    let mut inputs = new_batch.clone();
    let mut origins = vec![Origin::New; n_new];
    let mut old_labels = Vec::new();
    if stored.rows() == 0 {
        if memory.num_classes() > 0 && n_new > 0 {
            log::warn!("replay memory is empty; training on new samples only");
        }
    } else {
        let mut rng = rng_from_seed(seed);
        for _ in 0..n_new {
            let i = rng.random_range(0..stored.rows());
            inputs.push_row(stored.row(i)).expect("memory rows share the input width");
            origins.push(Origin::Old);
            old_labels.push(labels[i]);
        }
    }
    MixedBatch {
        inputs,
        origins,
        old_labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: usize, start: f64) -> DenseMatrix {
        DenseMatrix::new(n, 2, (0..2 * n).map(|i| start + i as f64).collect()).unwrap()
    }

    #[test]
    fn selection_clamps_and_zero() {
        let labels = [0, 0, 0, 1, 1];
        let sel = memory_select(&labels, 5, SelectionStrategy::Random, None, 1).unwrap();
        assert_eq!(sel[0].1.len(), 3);
        assert_eq!(sel[1].1.len(), 2);
        let none = memory_select(&labels, 0, SelectionStrategy::Random, None, 1).unwrap();
        assert!(none.iter().all(|(_, idx)| idx.is_empty()));
        assert!(matches!(
            memory_select(&labels, 1, SelectionStrategy::Icarl, None, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn icarl_matches_sort_oracle() {
        let emb = DenseMatrix::from_rows(&[[1.0, 0.0], [0.6, 0.8], [0.0, 1.0], [0.8, 0.6]]).unwrap();
        let mut bank = PrototypeBank::new(0.7, 2);
        bank.push(&[1.0, 0.0]);
        let labels = [0; 4];
        // cosine to (1, 0) is the first coordinate: 1.0, 0.6, 0.0, 0.8
        let close = memory_select(&labels, 2, SelectionStrategy::Icarl, Some((&emb, &bank)), 0).unwrap();
        assert_eq!(close, vec![(0, vec![0, 3])]);
        let far = memory_select(&labels, 2, SelectionStrategy::IcarlContrary, Some((&emb, &bank)), 0).unwrap();
        assert_eq!(far, vec![(0, vec![2, 1])]);
    }

    #[test]
    fn batch_counts_and_replacement() {
        let mut mem = ReplayMemory::new(5, 2);
        mem.push_class(rows(3, 0.0)).unwrap();
        mem.push_class(rows(2, 100.0)).unwrap();
        let batch = assemble_batch(&rows(8, -50.0), &mem, 3);
        assert_eq!(batch.len(), 16);
        assert_eq!(batch.num_old(), 8);
        assert_eq!(batch.origins[..8], [Origin::New; 8]);

        let mut single = ReplayMemory::new(1, 2);
        single.push_class(rows(1, 7.0)).unwrap();
        let b = assemble_batch(&rows(4, 0.0), &single, 9);
        for r in 4..8 {
            assert_eq!(b.inputs.row(r), &[7.0, 8.0]);
        }

        let empty = ReplayMemory::new(5, 2);
        assert_eq!(assemble_batch(&rows(4, 0.0), &empty, 1).len(), 4);
    }

    #[test]
    fn capacity_is_enforced() {
        let mut mem = ReplayMemory::new(2, 2);
        assert!(mem.push_class(rows(3, 0.0)).is_err());
        mem.push_class(rows(2, 0.0)).unwrap();
        assert!(mem.check_invariants(1).is_ok());
        assert!(mem.check_invariants(0).is_err());
    }
}

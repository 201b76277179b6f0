use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `a[t][i]`: accuracy on class set `Y_i` after stage `t`, for `i <= t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    /// `|Y_0|, ..., |Y_T|`.
    pub sizes: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new(sizes: Vec<usize>) -> Self {
        Self {
            sizes,
            rows: Vec::new(),
        }
    }

    /// Builds a matrix from complete lower-triangular rows.
    pub fn from_rows(sizes: Vec<usize>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = Self::new(sizes);
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    /// Appends row `t` (which must hold `t + 1` accuracies in `[0, 1]`).
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        let t = self.rows.len();
        if row.len() != t + 1 || t >= self.sizes.len() {
            return Err(Error::contract(format!(
                "accuracy row {t} must hold {} entries (of {} stages), got {}",
                t + 1,
                self.sizes.len(),
                row.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::contract(format!("accuracy {v} outside [0, 1]")));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Number of completed stages.
    pub fn stages(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.rows[t]
    }

    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.rows[t][i]
    }

    fn check(&self, t: usize) -> Result<()> {
        if t >= self.rows.len() {
            return Err(Error::contract(format!(
                "stage {t} not evaluated ({} rows)",
                self.rows.len()
            )));
        }
        Ok(())
    }

    /// `|Y_1| + ... + |Y_t|`.
    pub fn ood_classes(&self, t: usize) -> usize {
        self.sizes[1..=t].iter().sum()
    }

    /// `|Y^all_t|`.
    pub fn all_classes(&self, t: usize) -> usize {
        self.sizes[..=t].iter().sum()
    }

    /// `A^IND_t = a[t][0]`, defined at every stage.
    pub fn a_ind(&self, t: usize) -> Result<f64> {
        self.check(t)?;
        Ok(self.rows[t][0])
    }

    /// `A^ALL_t`, defined at every stage.
    pub fn a_all(&self, t: usize) -> Result<f64> {
        self.check(t)?;
        Ok(self.weighted(t, 0, |i| self.rows[t][i]) / self.all_classes(t) as f64)
    }

    fn weighted(&self, t: usize, from: usize, f: impl Fn(usize) -> f64) -> f64 {
        (from..=t).map(|i| self.sizes[i] as f64 * f(i)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageAccuracy {
    pub ind: f64,
    pub ood: f64,
    pub all: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageForgetting {
    pub ind: f64,
    pub ood: f64,
    pub all: f64,
}

fn need_ood_stage(t: usize) -> Result<()> {
    if t == 0 {
        return Err(Error::contract("out-of-domain metrics need t >= 1"));
    }
    Ok(())
}

/// Class-count weighted accuracies at stage `t >= 1`.
pub fn cgid_accuracy(a: &AccuracyMatrix, t: usize) -> Result<StageAccuracy> {
    need_ood_stage(t)?;
    a.check(t)?;
    Ok(StageAccuracy {
        ind: a.a_ind(t)?,
        ood: a.weighted(t, 1, |i| a.get(t, i)) / a.ood_classes(t) as f64,
        all: a.a_all(t)?,
    })
}

/// Forgetting `a[i][i] - a[t][i]`, class-count weighted, at stage `t >= 1`.
/// Negative values (backward transfer) are kept.
pub fn cgid_forgetting(a: &AccuracyMatrix, t: usize) -> Result<StageForgetting> {
    need_ood_stage(t)?;
    a.check(t)?;
    let drop = |i: usize| a.get(i, i) - a.get(t, i);
    Ok(StageForgetting {
        ind: drop(0),
        ood: a.weighted(t, 1, drop) / a.ood_classes(t) as f64,
        all: a.weighted(t, 0, drop) / a.all_classes(t) as f64,
    })
}

/// `Loss_t = -F^IND_t / A^IND_0` and
/// `Gain_t = |Y^all_t| A^ALL_t / (|Y_0| A^IND_0) - 1`.
pub fn loss_gain(a: &AccuracyMatrix, t: usize) -> Result<(f64, f64)> {
    a.check(t)?;
    let a0 = a.get(0, 0);
    if a0 == 0.0 {
        return Err(Error::UndefinedMetric(
            "Loss/Gain need a non-zero in-domain accuracy at stage 0".into(),
        ));
    }
    let loss = (a.get(t, 0) - a0) / a0;
    let gain = a.all_classes(t) as f64 * a.a_all(t)? / (a.sizes[0] as f64 * a0) - 1.0;
    Ok((loss, gain))
}

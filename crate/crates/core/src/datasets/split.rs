//! Train/validation/test partitions with an optional distribution shift.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use super::{Dataset, SplitData};
use crate::autodiff::rng_from_seed;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitCriterion {
    /// Smallest graphs train, largest graphs test.
    Size,
    /// Shuffled split stratified by label, so every part keeps the class
    /// proportions.
    MotifBalance,
    #[default]
    Random,
}

impl fmt::Display for SplitCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitCriterion::Size => "size",
            SplitCriterion::MotifBalance => "motif-balance",
            SplitCriterion::Random => "random",
        })
    }
}

impl FromStr for SplitCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "size" => Ok(SplitCriterion::Size),
            "motif-balance" => Ok(SplitCriterion::MotifBalance),
            "random" => Ok(SplitCriterion::Random),
            _ => Err(Error::arg(format!(
                "unknown split criterion `{s}` (size|motif-balance|random)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub criterion: SplitCriterion,
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            criterion: SplitCriterion::Random,
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
            return Err(Error::arg("split fractions must lie in [0, 1]"));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!(
                "split fractions {}/{}/{} do not sum to 1",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }

    /// Part sizes for `n` items. A part with a positive fraction must not
    /// come out empty; a zero fraction gives an empty part.
    pub fn counts(&self, n: usize) -> Result<[usize; 3]> {
        self.validate()?;
        let train = (self.train * n as f64).round() as usize;
        let val = ((self.val * n as f64).round() as usize).min(n - train.min(n));
        let test = n - train.min(n) - val;
        let counts = [train.min(n), val, test];
        for (c, (f, name)) in counts
            .iter()
            .zip([(self.train, "train"), (self.val, "val"), (self.test, "test")])
        {
            if f > 0.0 && *c == 0 {
                return Err(Error::arg(format!("{name} part of {n} graphs would be empty")));
            }
            if f == 0.0 && *c > 0 {
                return Err(Error::arg(format!("{name} fraction 0 but {c} graphs assigned")));
            }
        }
        if counts[0] == 0 || counts[2] == 0 {
            return Err(Error::arg("train and test parts must be nonempty"));
        }
        Ok(counts)
    }
}

/// Splits `ds`. `size` is deterministic (stable by node count, then index);
/// the other criteria shuffle under `seed`.
pub fn ood_split(ds: &Dataset, spec: &SplitSpec, seed: u64) -> Result<SplitData> {
    if ds.is_empty() {
        return Err(Error::arg("cannot split an empty dataset"));
    }
    let [n_train, n_val, _] = spec.counts(ds.len())?;
    let mut rng = rng_from_seed(seed);
    let order: Vec<usize> = match spec.criterion {
        SplitCriterion::Size => {
            let mut idx: Vec<usize> = (0..ds.len()).collect();
            idx.sort_by_key(|&i| ds.graphs[i].num_nodes());
            idx
        }
        SplitCriterion::Random => {
            let mut idx: Vec<usize> = (0..ds.len()).collect();
            idx.shuffle(&mut rng);
            idx
        }
        SplitCriterion::MotifBalance => {
            let labels = ds.labels()?;
            let classes = labels.iter().max().map_or(0, |m| m + 1);
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
            for (i, &y) in labels.iter().enumerate() {
                by_class[y].push(i);
            }
            // Interleave classes so every contiguous window holds them in proportion.
            let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(ds.len());
            for members in &mut by_class {
                members.shuffle(&mut rng);
                let m = members.len() as f64;
                keyed.extend(members.iter().enumerate().map(|(r, &i)| ((r as f64 + 0.5) / m, i)));
            }
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            keyed.into_iter().map(|(_, i)| i).collect()
        }
    };
    Ok(SplitData {
        train: ds.subset(&order[..n_train]),
        val: ds.subset(&order[n_train..n_train + n_val]),
        test: ds.subset(&order[n_train + n_val..]),
    })
}

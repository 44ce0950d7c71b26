use rand::Rng;

use crate::data::CovariateMatrix;

use super::update::Scratch;

/// Training covariates together with, per covariate, the sorted distinct
/// values and each row's rank among them. Built once per dataset and shared by
/// every forest fitted to it.
#[derive(Clone, Debug)]
pub struct SplitIndex {
    x: CovariateMatrix,
    ranks: Vec<u32>,
    uniques: Vec<Vec<f64>>,
}

impl SplitIndex {
    pub fn new(x: &CovariateMatrix) -> Self {
        let (n, k) = (x.n_rows(), x.n_cols());
        let mut ranks = vec![0u32; n * k];
        let mut uniques = Vec::with_capacity(k);
        for col in 0..k {
            let mut values = x.column(col);
            values.sort_by(f64::total_cmp);
            values.dedup();
            for i in 0..n {
                let v = x.get(i, col);
                let r = values.partition_point(|&u| u < v);
                ranks[i * k + col] = r as u32;
            }
            uniques.push(values);
        }
        SplitIndex {
            x: x.clone(),
            ranks,
            uniques,
        }
    }

    pub fn covariates(&self) -> &CovariateMatrix {
        &self.x
    }

    pub fn n_rows(&self) -> usize {
        self.x.n_rows()
    }

    pub fn n_vars(&self) -> usize {
        self.x.n_cols()
    }

    pub(crate) fn max_uniques(&self) -> usize {
        self.uniques.iter().map(Vec::len).max().unwrap_or(0)
    }

    #[inline]
    fn rank(&self, row: u32, var: usize) -> u32 {
        self.ranks[row as usize * self.n_vars() + var]
    }

    #[inline]
    pub(crate) fn value(&self, row: u32, var: usize) -> f64 {
        self.x.get(row as usize, var)
    }

    /// True when `var` takes at least two distinct values among `rows`.
    pub(crate) fn var_splittable(&self, rows: &[u32], var: usize) -> bool {
        let Some((&first, rest)) = rows.split_first() else {
            return false;
        };
        let r0 = self.rank(first, var);
        rest.iter().any(|&i| self.rank(i, var) != r0)
    }

    pub(crate) fn splittable(&self, rows: &[u32]) -> bool {
        (0..self.n_vars()).any(|v| self.var_splittable(rows, v))
    }

    pub(crate) fn available_vars(&self, rows: &[u32]) -> Vec<usize> {
        (0..self.n_vars())
            .filter(|&v| self.var_splittable(rows, v))
            .collect()
    }

    /// Number of distinct values of `var` among `rows`.
    pub(crate) fn n_distinct(&self, rows: &[u32], var: usize, scratch: &mut Scratch) -> usize {
        let stamp = scratch.next_stamp(self.max_uniques());
        let mut count = 0;
        for &i in rows {
            let r = self.rank(i, var) as usize;
            if scratch.marks[r] != stamp {
                scratch.marks[r] = stamp;
                count += 1;
            }
        }
        count
    }

    /// Sorted candidate cutpoints of `var` at a node holding `rows`: every
    /// distinct value except the largest.
    pub(crate) fn available_cuts(
        &self,
        rows: &[u32],
        var: usize,
        scratch: &mut Scratch,
    ) -> Vec<f64> {
        let stamp = scratch.next_stamp(self.max_uniques());
        let mut seen = Vec::new();
        for &i in rows {
            let r = self.rank(i, var) as usize;
            if scratch.marks[r] != stamp {
                scratch.marks[r] = stamp;
                seen.push(r);
            }
        }
        seen.sort_unstable();
        seen.pop();
        seen.into_iter().map(|r| self.uniques[var][r]).collect()
    }

    /// One cutpoint drawn uniformly from [`available_cuts`](Self::available_cuts).
    /// The node must have at least two distinct values of `var`.
    pub(crate) fn random_cut<R: Rng + ?Sized>(
        &self,
        rows: &[u32],
        var: usize,
        scratch: &mut Scratch,
        rng: &mut R,
    ) -> f64 {
        let stamp = scratch.next_stamp(self.max_uniques());
        let mut seen = std::mem::take(&mut scratch.seen);
        seen.clear();
        let mut top = 0;
        for &i in rows {
            let r = self.rank(i, var);
            if scratch.marks[r as usize] != stamp {
                scratch.marks[r as usize] = stamp;
                if r > seen.get(top).copied().unwrap_or(0) {
                    top = seen.len();
                }
                seen.push(r);
            }
        }
        seen.swap_remove(top);
        let r = seen[rng.random_range(0..seen.len())];
        scratch.seen = seen;
        self.uniques[var][r as usize]
    }

    /// Whether `cut` is an admissible cutpoint of `var` for `rows`: it must be
    /// an observed value there and not the largest one.
    pub(crate) fn cut_is_available(&self, rows: &[u32], var: usize, cut: f64) -> bool {
        let mut observed = false;
        let mut above = false;
        for &i in rows {
            let v = self.value(i, var);
            if v == cut {
                observed = true;
            } else if v > cut {
                above = true;
            }
            if observed && above {
                return true;
            }
        }
        false
    }
}

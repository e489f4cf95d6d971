//! Execution strategy for the data-parallel loops (ensemble trials, k-means
//! seeds, few-shot repeats, matrix rows).
//!
//! Every parallel loop in the crate goes through [`Execution`], and each unit
//! of work derives its own seed from its index, so a parallel run and a
//! sequential run produce identical results. Without the `parallel` feature
//! `Execution::Parallel` silently runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Evaluates `f(0..n)` and collects the results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }

    /// Calls `f(row_index, row)` for each `cols`-wide row of `data`.
    pub fn for_each_row<F>(self, data: &mut [f64], cols: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        if cols == 0 {
            return;
        }
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => data
                .par_chunks_mut(cols)
                .enumerate()
                .for_each(|(i, row)| f(i, row)),
            _ => data
                .chunks_mut(cols)
                .enumerate()
                .for_each(|(i, row)| f(i, row)),
        }
    }

    /// Parallel only when the work is large enough to amortize scheduling.
    pub(crate) fn for_work(self, flops: usize) -> Self {
        if flops < 1 << 16 {
            Execution::Sequential
        } else {
            self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order_in_both_modes() {
        let seq = Execution::Sequential.map(100, |i| i * i);
        let par = Execution::Parallel.map(100, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(seq[7], 49);
    }

    #[test]
    fn row_visitor_sees_every_row() {
        let mut data = vec![0.0; 12];
        Execution::Parallel.for_each_row(&mut data, 3, |i, row| row.fill(i as f64));
        assert_eq!(data, vec![0., 0., 0., 1., 1., 1., 2., 2., 2., 3., 3., 3.]);
    }
}

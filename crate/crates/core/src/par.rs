//! Execution policy for the data-parallel inner loops.
//!
//! With the `parallel` feature (default) `Execution::Parallel` dispatches to
//! rayon; without it both variants run on the calling thread. Results are
//! collected in index order either way, so output never depends on the policy.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Evaluates `f(0), …, f(n-1)` and returns the results in order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Fills consecutive `chunk`-sized slices of `out`; `f` receives the chunk index.
    pub fn fill_chunks<F>(self, out: &mut [f64], chunk: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        assert!(chunk > 0 && out.len() % chunk == 0);
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            out.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
        out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_policies_agree() {
        let a = Execution::Parallel.map(1000, |i| (i as f64).sqrt());
        let b = Execution::Sequential.map(1000, |i| (i as f64).sqrt());
        assert_eq!(a, b);

        let mut x = vec![0.0; 12];
        let mut y = vec![0.0; 12];
        Execution::Parallel.fill_chunks(&mut x, 3, |i, c| c.iter_mut().for_each(|v| *v = i as f64));
        Execution::Sequential.fill_chunks(&mut y, 3, |i, c| c.iter_mut().for_each(|v| *v = i as f64));
        assert_eq!(x, y);
    }
}

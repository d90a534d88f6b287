//! Evaluation grids and certified sup-norm brackets.

use std::sync::Arc;

use num_traits::{One, Zero};

use crate::expr::Expr;
use crate::rational::{one, q, to_f64, zero, Q};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<Q>,
}

impl Grid {
    /// `intervals` equal pieces of [0,1].
    pub fn uniform(intervals: usize) -> Grid {
        let n = intervals.max(1) as i64;
        Grid { nodes: (0..=n).map(|k| q(k, n)).collect() }
    }

    pub fn from_nodes(mut nodes: Vec<Q>) -> Grid {
        nodes.retain(|x| *x >= zero() && *x <= one());
        nodes.push(zero());
        nodes.push(one());
        nodes.sort();
        nodes.dedup();
        Grid { nodes }
    }

    pub fn with_points(&self, pts: impl IntoIterator<Item = Q>) -> Grid {
        let mut nodes = self.nodes.clone();
        nodes.extend(pts);
        Grid::from_nodes(nodes)
    }

    /// Uniform grid refined by the breakpoints of every function given.
    pub fn for_exprs(resolution: usize, fs: &[&Expr]) -> Grid {
        let mut g = Grid::uniform(resolution);
        for f in fs {
            g = g.with_points(f.breakpoints());
        }
        g
    }

    pub fn nodes(&self) -> &[Q] {
        &self.nodes
    }

    pub fn max_gap(&self) -> f64 {
        self.nodes.windows(2).map(|w| to_f64(&(&w[1] - &w[0]))).fold(0.0, f64::max)
    }

    pub fn contains_endpoints(&self) -> bool {
        self.nodes.first().is_some_and(|x| x.is_zero()) && self.nodes.last().is_some_and(|x| x.is_one())
    }
}

fn thread_cap() -> usize {
    let avail = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var("DDF_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        Some(n) if n >= 1 => n.min(avail),
        _ => avail,
    }
}

/// Maps `f` over the nodes, split across at most DDF_THREADS workers.
pub fn par_map<T: Send>(nodes: &[Q], f: impl Fn(&Q) -> T + Sync) -> Vec<T> {
    let threads = thread_cap().min(nodes.len()).max(1);
    if threads == 1 {
        return nodes.iter().map(f).collect();
    }
    let chunk = nodes.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = nodes
            .chunks(chunk)
            .map(|c| {
                let f = &f;
                s.spawn(move || c.iter().map(f).collect::<Vec<T>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Largest sampled spectral norm over the grid.
pub fn sampled_max(f: &Expr, grid: &Grid) -> f64 {
    par_map(grid.nodes(), |x| f.norm_at_f64(to_f64(x))).into_iter().fold(0.0, f64::max)
}

/// (lower, upper) with lower = max over nodes of ||f(x)|| and
/// upper = lower + L * (max gap) / 2.
pub fn sup_norm(f: &Expr, grid: &Grid) -> (f64, f64) {
    let lower = sampled_max(f, grid);
    (lower, lower + f.lipschitz() * grid.max_gap() / 2.0)
}

/// sup_norm on the default grid refined by the function's breakpoints.
pub fn sup_norm_auto(f: &Arc<Expr>, resolution: usize) -> (f64, f64) {
    sup_norm(f, &Grid::for_exprs(resolution, &[f]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMat;
    use nalgebra::DMatrix;

    #[test]
    fn identity_constant() {
        let f = Expr::unit(4);
        assert_eq!(sup_norm(&f, &Grid::uniform(64)), (1.0, 1.0));
    }

    #[test]
    fn linear_eleven_nodes() {
        let f = Expr::poly(vec![(vec![0.0, 1.0], CMat::identity(3))]);
        let (lo, hi) = sup_norm(&f, &Grid::uniform(10));
        assert_eq!(lo, 1.0);
        assert!((hi - 1.05).abs() < 1e-15);
    }

    #[test]
    fn bracket_contains_dense_max() {
        let h0 = CMat::real(DMatrix::from_fn(3, 3, |i, j| ((i + j) % 3) as f64 - 1.0));
        let h1 = CMat::real(DMatrix::from_fn(3, 3, |i, j| if i == j { 2.0 - i as f64 } else { 0.5 }));
        let h2 = CMat::real(DMatrix::from_fn(3, 3, |i, j| (i as f64 - j as f64).abs() * 0.3));
        let f = Expr::poly(vec![(vec![1.0], h0), (vec![0.0, 3.0], h1), (vec![0.0, 0.0, -2.0], h2)]);
        let (lo, hi) = sup_norm(&f, &Grid::uniform(64));
        let dense = (0..=10_000).map(|k| f.eval(&q(k, 10_000)).spectral_norm()).fold(0.0, f64::max);
        assert!(lo <= dense + 1e-12 && dense <= hi);
        assert!(dense - lo <= hi - lo);
    }

    #[test]
    fn grid_merges_points() {
        let g = Grid::uniform(2).with_points([q(1, 3), q(1, 2), q(3, 2)]);
        assert_eq!(g.nodes(), &[q(0, 1), q(1, 3), q(1, 2), q(1, 1)]);
        assert!(g.contains_endpoints());
    }
}

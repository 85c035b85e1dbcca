//! Order-preserving data-parallel maps. With the `parallel` feature the work
//! is spread over the rayon pool; without it everything runs on the caller's
//! thread. Results are always returned in input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Parallel map-reduce with an associative, commutative merge.
pub fn fold_reduce<T, A, Fold, Merge>(items: &[T], init: impl Fn() -> A + Sync + Send, fold: Fold, merge: Merge) -> A
where
    T: Sync,
    A: Send,
    Fold: Fn(A, &T) -> A + Sync + Send,
    Merge: Fn(A, A) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().fold(&init, &fold).reduce(&init, &merge)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = &merge;
        items.iter().fold(init(), fold)
    }
}

/// Runs `f` on a pool bounded to `workers` threads (0 = rayon default).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if workers == 0 {
            return f();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let ys = map(&xs, |x| x * x);
        assert_eq!(ys, map_sequential(&xs, |x| x * x));
    }

    #[test]
    fn fold_reduce_sums() {
        let xs: Vec<u64> = (1..=100).collect();
        let s = fold_reduce(&xs, || 0u64, |a, x| a + x, |a, b| a + b);
        assert_eq!(s, 5050);
    }

    #[test]
    fn bounded_pool_runs() {
        let xs: Vec<u64> = (0..64).collect();
        let ys = with_workers(2, || map(&xs, |x| x + 1));
        assert_eq!(ys[63], 64);
    }
}

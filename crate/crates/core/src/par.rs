//! Data-parallel maps that fall back to plain iteration without the `parallel`
//! feature. Results are always returned in index order, so any reduction done
//! by the caller over the returned vector is deterministic.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Whether the rayon backend is compiled in.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Sizes the global worker pool. Must run before the first parallel call;
/// a no-op without the `parallel` feature.
pub fn configure_threads(n: usize) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        Ok(())
    }
}

/// Worker threads available to the parallel maps (1 without the feature).
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// `items.iter().map(f).collect()`, possibly in parallel.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
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

/// Runs `f(chunk_index, chunk)` over consecutive `chunk_len` pieces of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk_len = chunk_len.max(1);
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
}

/// Sequential-order sum, independent of the backend.
pub fn ordered_sum(values: &[f64]) -> f64 {
    values.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_preserve_order() {
        let v = map_range(1000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
        let w = map_slice(&v, |x| x + 1);
        assert_eq!(w[999], 1999);
    }

    #[test]
    fn chunks_cover_everything() {
        let mut data = vec![0usize; 103];
        for_each_chunk_mut(&mut data, 10, |ci, c| {
            for (k, x) in c.iter_mut().enumerate() {
                *x = ci * 10 + k;
            }
        });
        assert!(data.iter().enumerate().all(|(i, &x)| x == i));
    }
}

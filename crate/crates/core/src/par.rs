//! Bounded fan-out over a slice.
//!
//! With the `parallel` feature (default) work runs on a dedicated rayon pool
//! sized to the requested width. Without it everything runs in order on the
//! calling thread.

/// Maps `f` over `items` with at most `width` calls in flight. Results keep
/// the input order; `None` entries are skipped work.
pub fn bounded_map<T, R, F>(items: &[T], width: usize, f: F) -> Vec<Option<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> Option<R> + Sync,
{
    #[cfg(feature = "parallel")]
    {
        parallel_map(items, width, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = width;
        sequential_map(items, f)
    }
}

pub fn sequential_map<T, R, F>(items: &[T], f: F) -> Vec<Option<R>>
where
    F: Fn(usize, &T) -> Option<R>,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

#[cfg(feature = "parallel")]
pub fn parallel_map<T, R, F>(items: &[T], width: usize, f: F) -> Vec<Option<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> Option<R> + Sync,
{
    use rayon::prelude::*;

    let width = width.max(1).min(items.len().max(1));
    if width == 1 {
        return sequential_map(items, f);
    }
    match rayon::ThreadPoolBuilder::new().num_threads(width).build() {
        Ok(pool) => pool.install(|| {
            items
                .par_iter()
                .enumerate()
                .with_max_len(1)
                .map(|(i, t)| f(i, t))
                .collect()
        }),
        Err(e) => {
            tracing::warn!("thread pool unavailable ({e}); running sequentially");
            sequential_map(items, f)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let items: Vec<u32> = (0..50).collect();
        let out = bounded_map(&items, 7, |i, x| (i % 5 != 0).then_some(x * 2));
        for (i, r) in out.iter().enumerate() {
            assert_eq!(*r, (i % 5 != 0).then_some(i as u32 * 2));
        }
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn respects_width() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        use std::time::Duration;

        let live = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        let items = vec![(); 24];
        parallel_map(&items, 3, |_, _| {
            let now = live.fetch_add(1, Ordering::SeqCst) + 1;
            peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            live.fetch_sub(1, Ordering::SeqCst);
            Some(())
        });
        assert!(peak.load(Ordering::SeqCst) <= 3);
        assert!(peak.load(Ordering::SeqCst) >= 2);
    }
}

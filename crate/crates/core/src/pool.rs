//! Ordered parallel map over a bounded set of scoped worker threads.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

/// Apply `f` to every item with up to `workers` threads. Results come back
/// in input order. `on_done` runs on the calling thread as each item
/// finishes, in completion order; it is the single serialization point.
pub fn map_ordered<T, R, F, D>(items: &[T], workers: usize, f: F, mut on_done: D) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
    D: FnMut(usize, &R),
{
    let workers = workers.max(1).min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = Vec::with_capacity(items.len());
    slots.resize_with(items.len(), || None);
    thread::scope(|scope| {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, f) = (&next, &f);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                if tx.send((i, f(i, &items[i]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, r) in rx {
            on_done(i, &r);
            slots[i] = Some(r);
        }
    });
    slots
        .into_iter()
        .map(|r| r.expect("worker finished without a result"))
        .collect()
}

//! Scoped worker pools used by the parallel read and write paths.
//!
//! Work items are claimed from a shared counter, so an uneven mix of cheap
//! and expensive items still balances across workers. Tasks run with no
//! crate lock held; coordination state is only touched between items.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use crate::error::{Error, Result};
use crate::sync::{TrackedCondvar, TrackedMutex};

/// Runs `n` independent tasks on up to `workers` threads and returns every
/// task's result, in task order. All claimed tasks settle even when some
/// fail, so the caller's choice of which error to surface does not depend
/// on scheduling.
pub(crate) fn run_tasks<R, F>(n: usize, workers: usize, task: F) -> Vec<Result<R>>
where
    R: Send,
    F: Fn(usize) -> Result<R> + Sync,
{
    if workers <= 1 || n <= 1 {
        return (0..n).map(&task).collect();
    }

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    thread::scope(|scope| {
        for _ in 0..workers.min(n) {
            let tx = tx.clone();
            let next = &next;
            let task = &task;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                if tx.send((i, task(i))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
    });

    let mut slots: Vec<Option<Result<R>>> = (0..n).map(|_| None).collect();
    for (i, result) in rx {
        slots[i] = Some(result);
    }
    slots
        .into_iter()
        .map(|slot| slot.expect("worker dropped a task result"))
        .collect()
}

/// Picks the error to report from settled task results: the failure with
/// the lowest task index, matching what a sequential loop would hit first.
pub(crate) fn first_error<R>(results: Vec<Result<R>>) -> Result<Vec<R>> {
    let mut values = Vec::with_capacity(results.len());
    let mut first: Option<Error> = None;
    for result in results {
        match result {
            Ok(v) => values.push(v),
            Err(e) => {
                if first.is_none() {
                    first = Some(e);
                }
            }
        }
    }
    match first {
        Some(e) => Err(e),
        None => Ok(values),
    }
}

struct PipeState<R> {
    next_claim: usize,
    delivered: usize,
    ready: BTreeMap<usize, R>,
    /// Earliest-index producer failure seen so far.
    failed: Option<(usize, Error)>,
    /// Consumer gave up; producers stop claiming.
    aborted: bool,
}

/// Produces items `0..n` on up to `workers` threads and feeds them to
/// `consume` strictly in index order, on the calling thread.
///
/// While item `k` is being consumed, producers run at most `window` items
/// ahead, which bounds buffered results to `window` items. A producer
/// error at index `e` stops new claims; items before `e` are still
/// delivered, then `e`'s error is returned, exactly as a sequential loop
/// would observe it. A consumer error aborts outstanding claims and is
/// returned as [`Error::Consumer`].
pub(crate) fn for_each_ordered<R, P, C>(
    n: usize,
    workers: usize,
    window: usize,
    produce: P,
    mut consume: C,
) -> Result<()>
where
    R: Send,
    P: Fn(usize) -> Result<R> + Sync,
    C: FnMut(usize, R) -> Result<()>,
{
    assert!(window >= 1, "pipeline window must be at least 1");
    if workers <= 1 {
        for i in 0..n {
            consume(i, produce(i)?)?;
        }
        return Ok(());
    }

    let state = TrackedMutex::new(PipeState::<R> {
        next_claim: 0,
        delivered: 0,
        ready: BTreeMap::new(),
        failed: None,
        aborted: false,
    });
    let claimable = TrackedCondvar::new();
    let deliverable = TrackedCondvar::new();

    thread::scope(|scope| {
        for _ in 0..workers.min(n) {
            scope.spawn(|| loop {
                let index = {
                    let mut s = state.lock();
                    loop {
                        if s.aborted || s.failed.is_some() || s.next_claim >= n {
                            return;
                        }
                        if s.next_claim <= s.delivered + window {
                            break;
                        }
                        s = claimable.wait(s);
                    }
                    let i = s.next_claim;
                    s.next_claim += 1;
                    i
                };

                let result = produce(index);

                let mut s = state.lock();
                match result {
                    Ok(item) => {
                        s.ready.insert(index, item);
                    }
                    Err(e) => {
                        if s.failed.as_ref().is_none_or(|(i, _)| index < *i) {
                            s.failed = Some((index, e));
                        }
                        claimable.notify_all();
                    }
                }
                deliverable.notify_all();
            });
        }

        let outcome = (|| {
            for k in 0..n {
                let item = {
                    let mut s = state.lock();
                    loop {
                        if let Some((i, _)) = &s.failed {
                            if *i == k {
                                let (_, e) = s.failed.take().unwrap();
                                s.aborted = true;
                                claimable.notify_all();
                                return Err(e);
                            }
                        }
                        if let Some(item) = s.ready.remove(&k) {
                            break item;
                        }
                        s = deliverable.wait(s);
                    }
                };

                // Deliver outside the lock; producers may claim meanwhile.
                if let Err(e) = consume(k, item) {
                    let mut s = state.lock();
                    s.aborted = true;
                    claimable.notify_all();
                    return Err(e);
                }

                let mut s = state.lock();
                s.delivered = k + 1;
                claimable.notify_all();
            }
            Ok(())
        })();

        // Unblock any producer still parked before leaving the scope.
        {
            let mut s = state.lock();
            s.aborted = true;
            claimable.notify_all();
        }
        outcome
    })
}

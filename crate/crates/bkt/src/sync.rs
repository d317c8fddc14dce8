//! Internal synchronization helpers.
//!
//! Every lock in this crate goes through [`TrackedMutex`], which maintains a
//! per-thread count of held guards. Hot paths that must never run under a
//! lock (compression, decompression, sink writes) call [`assert_unlocked`]
//! on entry; in debug builds a violation aborts the test run immediately
//! instead of surfacing later as a throughput regression.

use std::cell::Cell;
use std::collections::VecDeque;
use std::ops::{Deref, DerefMut};
use std::sync::{Condvar, Mutex, MutexGuard};

thread_local! {
    static HELD_LOCKS: Cell<usize> = const { Cell::new(0) };
}

fn held_inc() {
    HELD_LOCKS.with(|h| h.set(h.get() + 1));
}

fn held_dec() {
    HELD_LOCKS.with(|h| h.set(h.get() - 1));
}

/// Number of crate-internal locks held by the current thread.
pub(crate) fn locks_held() -> usize {
    HELD_LOCKS.with(Cell::get)
}

/// Debug-asserts that the calling thread holds no crate-internal lock.
#[inline]
pub(crate) fn assert_unlocked(context: &str) {
    debug_assert_eq!(
        locks_held(),
        0,
        "lock held while entering lock-free section: {context}"
    );
    let _ = context;
}

/// `Mutex` wrapper feeding the per-thread held-lock counter.
pub(crate) struct TrackedMutex<T> {
    inner: Mutex<T>,
}

impl<T> TrackedMutex<T> {
    pub fn new(value: T) -> Self {
        TrackedMutex {
            inner: Mutex::new(value),
        }
    }

    pub fn lock(&self) -> TrackedGuard<'_, T> {
        let guard = self.inner.lock().expect("mutex poisoned");
        held_inc();
        TrackedGuard { inner: Some(guard) }
    }
}

pub(crate) struct TrackedGuard<'a, T> {
    // `None` only transiently while parked inside a condvar wait.
    inner: Option<MutexGuard<'a, T>>,
}

impl<T> Deref for TrackedGuard<'_, T> {
    type Target = T;
    fn deref(&self) -> &T {
        self.inner.as_ref().unwrap()
    }
}

impl<T> DerefMut for TrackedGuard<'_, T> {
    fn deref_mut(&mut self) -> &mut T {
        self.inner.as_mut().unwrap()
    }
}

impl<T> Drop for TrackedGuard<'_, T> {
    fn drop(&mut self) {
        if self.inner.is_some() {
            held_dec();
        }
    }
}

/// `Condvar` companion to [`TrackedMutex`].
pub(crate) struct TrackedCondvar {
    inner: Condvar,
}

impl TrackedCondvar {
    pub fn new() -> Self {
        TrackedCondvar {
            inner: Condvar::new(),
        }
    }

    pub fn wait<'a, T>(&self, mut guard: TrackedGuard<'a, T>) -> TrackedGuard<'a, T> {
        let inner = guard.inner.take().unwrap();
        held_dec();
        drop(guard);
        let inner = self.inner.wait(inner).expect("mutex poisoned");
        held_inc();
        TrackedGuard { inner: Some(inner) }
    }

    pub fn notify_one(&self) {
        self.inner.notify_one();
    }

    pub fn notify_all(&self) {
        self.inner.notify_all();
    }
}

/// Bounded multi-producer FIFO with blocking producers.
///
/// `push` blocks while the queue is at capacity, which is the backpressure
/// that stops fast producers from buffering an unbounded amount of data
/// ahead of a slow consumer. `close` wakes everyone: pending and future
/// pushes fail, pops drain what is left and then return `None`.
pub(crate) struct BoundedQueue<T> {
    state: TrackedMutex<QueueState<T>>,
    not_full: TrackedCondvar,
    not_empty: TrackedCondvar,
    capacity: usize,
}

struct QueueState<T> {
    items: VecDeque<(T, usize)>,
    bytes: usize,
    closed: bool,
}

impl<T> BoundedQueue<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "queue capacity must be at least 1");
        BoundedQueue {
            state: TrackedMutex::new(QueueState {
                items: VecDeque::with_capacity(capacity),
                bytes: 0,
                closed: false,
            }),
            not_full: TrackedCondvar::new(),
            not_empty: TrackedCondvar::new(),
            capacity,
        }
    }

    /// Enqueues `item` accounted as `size` bytes, blocking while full.
    /// Returns the item back if the queue was closed.
    pub fn push(&self, item: T, size: usize) -> Result<(), T> {
        let mut state = self.state.lock();
        loop {
            if state.closed {
                return Err(item);
            }
            if state.items.len() < self.capacity {
                state.items.push_back((item, size));
                state.bytes += size;
                self.not_empty.notify_one();
                return Ok(());
            }
            state = self.not_full.wait(state);
        }
    }

    /// Dequeues the oldest item, blocking while empty. Returns `None` once
    /// the queue is closed and drained.
    pub fn pop(&self) -> Option<T> {
        let mut state = self.state.lock();
        loop {
            if let Some((item, size)) = state.items.pop_front() {
                state.bytes -= size;
                self.not_full.notify_one();
                return Some(item);
            }
            if state.closed {
                return None;
            }
            state = self.not_empty.wait(state);
        }
    }

    pub fn close(&self) {
        let mut state = self.state.lock();
        state.closed = true;
        self.not_full.notify_all();
        self.not_empty.notify_all();
    }

    pub fn len(&self) -> usize {
        self.state.lock().items.len()
    }

    /// Total accounted size of queued items; observability probe for
    /// backpressure tests and queue monitoring.
    pub fn queued_bytes(&self) -> usize {
        self.state.lock().bytes
    }
}

//! Bounded single-producer/single-consumer hand-off between pipeline stages.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Condvar, Mutex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Overflow {
    /// Live sources: the oldest queued item makes room for the newest.
    DropOldest,
    /// File sources: the producer waits.
    Block,
}

struct State<T> {
    items: VecDeque<T>,
    closed: bool,
}

struct Shared<T> {
    state: Mutex<State<T>>,
    changed: Condvar,
    capacity: usize,
    overflow: Overflow,
    dropped: Arc<AtomicU64>,
}

pub struct Sender<T>(Arc<Shared<T>>);
pub struct Receiver<T>(Arc<Shared<T>>);

pub fn bounded<T>(capacity: usize, overflow: Overflow) -> (Sender<T>, Receiver<T>) {
    assert!(capacity > 0, "queue capacity must be positive");
    let shared = Arc::new(Shared {
        state: Mutex::new(State {
            items: VecDeque::with_capacity(capacity),
            closed: false,
        }),
        changed: Condvar::new(),
        capacity,
        overflow,
        dropped: Arc::new(AtomicU64::new(0)),
    });
    (Sender(shared.clone()), Receiver(shared))
}

impl<T> Sender<T> {
    /// Queues `item`. Returns `false` once the receiver has gone away.
    pub fn send(&self, item: T) -> bool {
        let mut st = self.0.state.lock();
        loop {
            if st.closed {
                return false;
            }
            if st.items.len() < self.0.capacity {
                break;
            }
            match self.0.overflow {
                Overflow::DropOldest => {
                    st.items.pop_front();
                    self.0.dropped.fetch_add(1, Ordering::Relaxed);
                    break;
                }
                Overflow::Block => self.0.changed.wait(&mut st),
            }
        }
        st.items.push_back(item);
        self.0.changed.notify_all();
        true
    }

    pub fn dropped(&self) -> u64 {
        self.0.dropped.load(Ordering::Relaxed)
    }

    pub fn counter(&self) -> DropCounter {
        DropCounter(self.0.dropped.clone())
    }
}

impl<T> Drop for Sender<T> {
    fn drop(&mut self) {
        self.0.state.lock().closed = true;
        self.0.changed.notify_all();
    }
}

impl<T> Receiver<T> {
    /// Next item, or `None` once the sender is gone and the queue is empty.
    pub fn recv(&self) -> Option<T> {
        let mut st = self.0.state.lock();
        loop {
            if let Some(item) = st.items.pop_front() {
                self.0.changed.notify_all();
                return Some(item);
            }
            if st.closed {
                return None;
            }
            self.0.changed.wait(&mut st);
        }
    }

    pub fn counter(&self) -> DropCounter {
        DropCounter(self.0.dropped.clone())
    }
}

impl<T> Drop for Receiver<T> {
    fn drop(&mut self) {
        let mut st = self.0.state.lock();
        st.closed = true;
        st.items.clear();
        self.0.changed.notify_all();
    }
}

impl<T> Iterator for Receiver<T> {
    type Item = T;

    fn next(&mut self) -> Option<T> {
        self.recv()
    }
}

/// Read-only view of a queue's drop count.
#[derive(Clone)]
pub struct DropCounter(Arc<AtomicU64>);

impl DropCounter {
    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

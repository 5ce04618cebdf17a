use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use super::StorageError;

#[derive(Debug, Default)]
struct Counters {
    current: AtomicUsize,
    peak: AtomicUsize,
}

/// Accounts bytes of matrix data held in memory, with an optional hard limit.
///
/// Every buffer is paired with a [`Reservation`] that releases its bytes on drop.
#[derive(Debug, Clone, Default)]
pub struct MemoryTracker {
    counters: Arc<Counters>,
    limit: Option<usize>,
}

impl MemoryTracker {
    pub fn unlimited() -> Self {
        Self::default()
    }

    pub fn with_limit(limit: usize) -> Self {
        Self {
            counters: Arc::default(),
            limit: Some(limit),
        }
    }

    pub fn limit(&self) -> Option<usize> {
        self.limit
    }

    pub fn current(&self) -> usize {
        self.counters.current.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> usize {
        self.counters.peak.load(Ordering::SeqCst)
    }

    pub fn reserve(&self, bytes: usize) -> Result<Reservation, StorageError> {
        let prev = self.counters.current.fetch_add(bytes, Ordering::SeqCst);
        let now = prev + bytes;
        if let Some(limit) = self.limit {
            if now > limit {
                self.counters.current.fetch_sub(bytes, Ordering::SeqCst);
                return Err(StorageError::BudgetExceeded {
                    requested: bytes,
                    current: prev,
                    limit,
                });
            }
        }
        self.counters.peak.fetch_max(now, Ordering::SeqCst);
        Ok(Reservation {
            counters: Arc::clone(&self.counters),
            bytes,
        })
    }

    /// Reservation sized for `len` values of `f64`.
    pub fn reserve_f64(&self, len: usize) -> Result<Reservation, StorageError> {
        self.reserve(len * 8)
    }
}

/// Bytes held against a [`MemoryTracker`] until dropped.
#[derive(Debug)]
pub struct Reservation {
    counters: Arc<Counters>,
    bytes: usize,
}

impl Reservation {
    pub fn bytes(&self) -> usize {
        self.bytes
    }
}

impl Drop for Reservation {
    fn drop(&mut self) {
        self.counters.current.fetch_sub(self.bytes, Ordering::SeqCst);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracks_peak_and_releases() {
        let t = MemoryTracker::with_limit(100);
        let a = t.reserve(60).unwrap();
        assert!(matches!(t.reserve(50), Err(StorageError::BudgetExceeded { .. })));
        let b = t.reserve(40).unwrap();
        assert_eq!(t.current(), 100);
        drop(a);
        drop(b);
        assert_eq!(t.current(), 0);
        assert_eq!(t.peak(), 100);
    }
}

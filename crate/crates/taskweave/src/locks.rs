//! Try-only speculative locks.
//!
//! A [`SpecLock`] never blocks: acquisition either succeeds immediately or
//! reports the lock busy, and the caller is expected to treat failure as a
//! normal outcome, roll its work back and retry later. This is the
//! synchronization style of optimistic algorithms where conflicts are rare
//! but must be detected exactly.
//!
//! [`acquire_all`] extends the same idea to a set: either every lock in
//! the set is taken, or none are, the partial acquisitions having been
//! rolled back in reverse order. Re-acquiring a lock the thread already
//! holds succeeds idempotently and that lock stays out of the rollback and
//! release sets, so nested speculative sections compose.

use std::sync::atomic::{AtomicU32, Ordering};

/// Detailed outcome of a single acquisition attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TryLock {
    /// The lock was free and is now held by the caller.
    Acquired,
    /// The caller already held the lock; nothing changed.
    AlreadyOwned,
    /// Another thread holds the lock.
    Busy,
}

/// Word-sized try-lock storing its owner: 0 when free, `tid + 1` when held
/// by thread `tid`.
pub struct SpecLock(AtomicU32);

impl SpecLock {
    pub const fn new() -> Self {
        SpecLock(AtomicU32::new(0))
    }

    pub fn try_lock_detailed(&self, tid: usize) -> TryLock {
        let me = tid as u32 + 1;
        match self
            .0
            .compare_exchange(0, me, Ordering::Acquire, Ordering::Relaxed)
        {
            Ok(_) => TryLock::Acquired,
            Err(cur) if cur == me => TryLock::AlreadyOwned,
            Err(_) => TryLock::Busy,
        }
    }

    /// True when the caller holds the lock afterwards, whether this call
    /// took it or it was already held (idempotent re-entry).
    pub fn try_lock(&self, tid: usize) -> bool {
        self.try_lock_detailed(tid) != TryLock::Busy
    }

    pub fn unlock(&self, tid: usize) {
        debug_assert_eq!(
            self.0.load(Ordering::Relaxed),
            tid as u32 + 1,
            "unlock by non-owner"
        );
        let _ = tid;
        self.0.store(0, Ordering::Release);
    }

    /// Thread currently holding the lock, if any. Racy by nature; useful
    /// for diagnostics and residue checks on quiescent structures.
    pub fn holder(&self) -> Option<usize> {
        match self.0.load(Ordering::Acquire) {
            0 => None,
            v => Some((v - 1) as usize),
        }
    }

    pub fn is_locked(&self) -> bool {
        self.holder().is_some()
    }
}

impl Default for SpecLock {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for SpecLock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.holder() {
            Some(tid) => write!(f, "SpecLock(held by {tid})"),
            None => write!(f, "SpecLock(free)"),
        }
    }
}

/// Locks taken by one successful [`acquire_all`], released together.
///
/// Dropping the set releases the locks; [`LockSet::release`] does the same
/// explicitly. [`LockSet::leak`] keeps them held forever, which exists so
/// verification harnesses can inject a missing-release fault.
pub struct LockSet<'a> {
    held: Vec<&'a SpecLock>,
    tid: usize,
}

impl<'a> LockSet<'a> {
    /// Locks this acquisition actually took (idempotent re-entries are not
    /// part of the set).
    pub fn len(&self) -> usize {
        self.held.len()
    }

    pub fn is_empty(&self) -> bool {
        self.held.is_empty()
    }

    pub fn release(self) {
        // Drop does the work.
    }

    /// Forget the set without releasing anything.
    pub fn leak(mut self) {
        self.held.clear();
    }
}

impl Drop for LockSet<'_> {
    fn drop(&mut self) {
        for lock in self.held.drain(..).rev() {
            lock.unlock(self.tid);
        }
    }
}

/// Acquire every lock in `locks` for `tid`, or none of them.
///
/// Duplicate entries (by address) are acquired once. A lock the thread
/// already holds from an enclosing scope counts as success but is not
/// released by the returned set. On the first busy lock the locks this
/// call acquired are released in reverse order and `None` is returned;
/// aborting this way is a normal outcome, not an error.
pub fn acquire_all<'a>(locks: &[&'a SpecLock], tid: usize) -> Option<LockSet<'a>> {
    let mut held: Vec<&'a SpecLock> = Vec::with_capacity(locks.len());
    for &lock in locks {
        if held.iter().any(|&h| std::ptr::eq(h, lock)) {
            continue;
        }
        match lock.try_lock_detailed(tid) {
            TryLock::Acquired => held.push(lock),
            TryLock::AlreadyOwned => {}
            TryLock::Busy => {
                for h in held.drain(..).rev() {
                    h.unlock(tid);
                }
                return None;
            }
        }
    }
    Some(LockSet { held, tid })
}

/// Bounded randomized backoff between speculative retries.
///
/// Sleeps up to 64 microseconds, growing with the attempt number, with
/// jitter from `rng_state` so contending threads desynchronize. Callers
/// give up on backoff alone after repeated failures and fall back to a
/// sequential drain; see the refinement driver.
pub fn retry_backoff(rng_state: &mut u64, attempt: u32) {
    let cap_us = (1u64 << attempt.min(6)).min(64);
    let jitter = crate::util::splitmix64(rng_state) % (cap_us + 1);
    if jitter == 0 {
        std::thread::yield_now();
    } else {
        std::thread::sleep(std::time::Duration::from_micros(jitter));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicU64, Ordering};
    use std::sync::Arc;

    #[test]
    fn lock_stores_owner_plus_one() {
        let l = SpecLock::new();
        assert_eq!(l.holder(), None);
        assert_eq!(l.try_lock_detailed(3), TryLock::Acquired);
        assert_eq!(l.holder(), Some(3));
        assert_eq!(l.try_lock_detailed(3), TryLock::AlreadyOwned);
        assert_eq!(l.try_lock_detailed(5), TryLock::Busy);
        l.unlock(3);
        assert_eq!(l.holder(), None);
        assert!(l.try_lock(5));
    }

    #[test]
    fn acquire_all_rolls_back_on_busy() {
        let locks: Vec<SpecLock> = (0..4).map(|_| SpecLock::new()).collect();
        locks[2].try_lock(9); // another thread holds lock 2

        let refs: Vec<&SpecLock> = locks.iter().collect();
        assert!(acquire_all(&refs, 1).is_none());
        // Locks 0 and 1 were rolled back, lock 2 still belongs to 9.
        assert_eq!(locks[0].holder(), None);
        assert_eq!(locks[1].holder(), None);
        assert_eq!(locks[2].holder(), Some(9));
        assert_eq!(locks[3].holder(), None);
    }

    #[test]
    fn acquire_all_release_frees_everything() {
        let locks: Vec<SpecLock> = (0..4).map(|_| SpecLock::new()).collect();
        let refs: Vec<&SpecLock> = locks.iter().collect();
        let set = acquire_all(&refs, 2).unwrap();
        assert_eq!(set.len(), 4);
        assert!(locks.iter().all(|l| l.holder() == Some(2)));
        set.release();
        assert!(locks.iter().all(|l| l.holder().is_none()));
    }

    #[test]
    fn duplicates_acquire_once() {
        let lock = SpecLock::new();
        let set = acquire_all(&[&lock, &lock, &lock], 0).unwrap();
        assert_eq!(set.len(), 1);
        set.release();
        assert_eq!(lock.holder(), None);
    }

    #[test]
    fn nested_sets_do_not_release_outer_holds() {
        let a = SpecLock::new();
        let b = SpecLock::new();
        let outer = acquire_all(&[&a], 7).unwrap();
        // Inner set re-enters `a`; releasing it must keep `a` held.
        let inner = acquire_all(&[&a, &b], 7).unwrap();
        assert_eq!(inner.len(), 1);
        inner.release();
        assert_eq!(a.holder(), Some(7));
        assert_eq!(b.holder(), None);
        outer.release();
        assert_eq!(a.holder(), None);
    }

    #[test]
    fn leak_keeps_locks_held() {
        let a = SpecLock::new();
        let set = acquire_all(&[&a], 1).unwrap();
        set.leak();
        assert_eq!(a.holder(), Some(1));
    }

    #[test]
    fn drop_is_a_release_backstop() {
        let a = SpecLock::new();
        {
            let _set = acquire_all(&[&a], 1).unwrap();
        }
        assert_eq!(a.holder(), None);
    }

    // Non-atomic counters guarded by the locks: any mutual-exclusion
    // violation shows up as a lost update.
    #[test]
    fn acquire_all_is_mutually_exclusive() {
        const THREADS: usize = 8;
        const LOCKS: usize = 6;
        const ROUNDS: usize = 2_000;

        struct Cell(std::cell::UnsafeCell<u64>);
        unsafe impl Sync for Cell {}

        let locks: Arc<Vec<SpecLock>> =
            Arc::new((0..LOCKS).map(|_| SpecLock::new()).collect());
        let counters: Arc<Vec<Cell>> = Arc::new(
            (0..LOCKS)
                .map(|_| Cell(std::cell::UnsafeCell::new(0)))
                .collect(),
        );
        let successes = Arc::new(AtomicU64::new(0));

        let handles: Vec<_> = (0..THREADS)
            .map(|tid| {
                let locks = Arc::clone(&locks);
                let counters = Arc::clone(&counters);
                let successes = Arc::clone(&successes);
                std::thread::spawn(move || {
                    let mut rng = tid as u64 + 1;
                    for _ in 0..ROUNDS {
                        // Random non-empty subset of the locks.
                        let bits = (crate::util::splitmix64(&mut rng)
                            % (1 << LOCKS) as u64)
                            .max(1);
                        let subset: Vec<&SpecLock> = (0..LOCKS)
                            .filter(|i| bits & (1 << i) != 0)
                            .map(|i| &locks[i])
                            .collect();
                        if let Some(set) = acquire_all(&subset, tid) {
                            for (i, c) in counters.iter().enumerate() {
                                if bits & (1 << i) != 0 {
                                    unsafe { *c.0.get() += 1 };
                                }
                            }
                            successes
                                .fetch_add(bits.count_ones() as u64, Ordering::Relaxed);
                            set.release();
                        }
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }

        let total: u64 = counters.iter().map(|c| unsafe { *c.0.get() }).sum();
        assert_eq!(total, successes.load(Ordering::Relaxed));
        assert!(locks.iter().all(|l| !l.is_locked()), "residual locks");
    }

    proptest! {
        #[test]
        fn holder_roundtrips_any_tid(tid in 0usize..10_000) {
            let l = SpecLock::new();
            prop_assert!(l.try_lock(tid));
            prop_assert_eq!(l.holder(), Some(tid));
            l.unlock(tid);
            prop_assert_eq!(l.holder(), None);
        }

        #[test]
        fn rollback_restores_free_state(
            pre_held in proptest::collection::vec(any::<bool>(), 8),
            busy_at in 0usize..8,
        ) {
            let locks: Vec<SpecLock> = (0..8).map(|_| SpecLock::new()).collect();
            // Some other thread (tid 41) holds a scattering of locks,
            // guaranteeing at least one busy entry.
            let mut any_busy = false;
            for (i, &held) in pre_held.iter().enumerate() {
                if held || i == busy_at {
                    locks[i].try_lock(41);
                    any_busy = true;
                }
            }
            prop_assert!(any_busy);
            let refs: Vec<&SpecLock> = locks.iter().collect();
            prop_assert!(acquire_all(&refs, 3).is_none());
            for (i, l) in locks.iter().enumerate() {
                let expect = if pre_held[i] || i == busy_at { Some(41) } else { None };
                prop_assert_eq!(l.holder(), expect, "lock {}", i);
            }
        }
    }
}

//! Lock-free work-stealing deque.
//!
//! Each worker owns one deque. The owner pushes and pops at the *top* end,
//! so the task it runs next is the one it created most recently (good
//! locality, depth-first descent of task trees). Thieves steal single
//! tasks from the *bottom* end, i.e. the oldest task in the deque, which
//! tends to be the largest remaining piece of work.
//!
//! The implementation is the Chase-Lev growable circular buffer with the
//! memory orderings of the C11 formulation by Le, Pop, Cohen and Nardelli.
//! `push`/`pop` are owner-only and unsafe to call from any other thread;
//! `steal` may be called from anywhere.
//!
//! Elements must be `Copy`: a thief reads a slot speculatively and then
//! claims it with a CAS on `bottom`, so on a lost race it simply discards
//! the value it read. Retired buffers from growth are kept alive until the
//! deque is dropped, which makes those speculative reads always point into
//! live memory without requiring an epoch scheme.

use std::alloc::{alloc, dealloc, Layout};
use std::ptr;
use std::sync::atomic::{AtomicIsize, AtomicPtr, Ordering};
use std::sync::Mutex;

const MIN_CAP: usize = 64;

/// Result of a steal attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Steal<T> {
    /// A task was stolen.
    Success(T),
    /// The deque was observed empty. This is a normal outcome, not an error.
    Empty,
    /// Lost a race with the owner or another thief; worth retrying.
    Retry,
}

impl<T> Steal<T> {
    pub fn success(self) -> Option<T> {
        match self {
            Steal::Success(v) => Some(v),
            _ => None,
        }
    }
}

struct Buffer<T> {
    ptr: *mut T,
    cap: usize,
}

impl<T> Buffer<T> {
    fn new(cap: usize) -> Box<Self> {
        debug_assert!(cap.is_power_of_two());
        let layout = Layout::array::<T>(cap).unwrap();
        let ptr = unsafe { alloc(layout) as *mut T };
        assert!(!ptr.is_null(), "deque buffer allocation failed");
        Box::new(Buffer { ptr, cap })
    }

    fn at(&self, index: isize) -> *mut T {
        // `cap` is a power of two, so masking implements the circular wrap.
        unsafe { self.ptr.add(index as usize & (self.cap - 1)) }
    }

    /// Volatile access keeps the compiler from folding or tearing slot
    /// reads that race with a thief's speculative read of the same slot.
    unsafe fn write(&self, index: isize, value: T) {
        ptr::write_volatile(self.at(index), value)
    }

    unsafe fn read(&self, index: isize) -> T {
        ptr::read_volatile(self.at(index))
    }
}

impl<T> Drop for Buffer<T> {
    fn drop(&mut self) {
        let layout = Layout::array::<T>(self.cap).unwrap();
        unsafe { dealloc(self.ptr as *mut u8, layout) };
    }
}

/// Growable single-owner, multi-thief deque.
pub struct WorkerDeque<T: Copy> {
    /// Owner end. Next slot to push; the live range is `[bottom, top)`.
    top: AtomicIsize,
    /// Thief end. Index of the oldest element.
    bottom: AtomicIsize,
    buf: AtomicPtr<Buffer<T>>,
    /// Buffers replaced by growth, freed on drop.
    retired: Mutex<Vec<Box<Buffer<T>>>>,
}

unsafe impl<T: Copy + Send> Send for WorkerDeque<T> {}
unsafe impl<T: Copy + Send> Sync for WorkerDeque<T> {}

impl<T: Copy> WorkerDeque<T> {
    pub fn new() -> Self {
        Self::with_capacity(MIN_CAP)
    }

    pub fn with_capacity(cap: usize) -> Self {
        let cap = cap.next_power_of_two().max(MIN_CAP);
        WorkerDeque {
            top: AtomicIsize::new(0),
            bottom: AtomicIsize::new(0),
            buf: AtomicPtr::new(Box::into_raw(Buffer::new(cap))),
            retired: Mutex::new(Vec::new()),
        }
    }

    /// Number of elements currently in the deque. Racy by nature; only an
    /// estimate unless called while the deque is quiescent.
    pub fn len(&self) -> usize {
        let b = self.bottom.load(Ordering::Relaxed);
        let t = self.top.load(Ordering::Relaxed);
        t.saturating_sub(b).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Push a task at the owner end.
    ///
    /// # Safety
    /// Must only be called by the owning worker; concurrent `push`/`pop`
    /// from two threads is a data race.
    pub unsafe fn push(&self, value: T) {
        let t = self.top.load(Ordering::Relaxed);
        let b = self.bottom.load(Ordering::Acquire);
        let mut buf = &*self.buf.load(Ordering::Relaxed);

        if t - b >= buf.cap as isize {
            self.grow(b, t);
            buf = &*self.buf.load(Ordering::Relaxed);
        }

        buf.write(t, value);
        // Publish the slot before the new `top` becomes visible to thieves.
        std::sync::atomic::fence(Ordering::Release);
        self.top.store(t + 1, Ordering::Relaxed);
    }

    /// Pop the most recently pushed task.
    ///
    /// # Safety
    /// Owner-only, same contract as [`WorkerDeque::push`].
    pub unsafe fn pop(&self) -> Option<T> {
        let t = self.top.load(Ordering::Relaxed) - 1;
        let buf = &*self.buf.load(Ordering::Relaxed);
        self.top.store(t, Ordering::Relaxed);
        // The SeqCst fence orders the `top` store above against the
        // `bottom` load below, mirroring the fence in `steal`.
        std::sync::atomic::fence(Ordering::SeqCst);
        let b = self.bottom.load(Ordering::Relaxed);

        if b <= t {
            let value = buf.read(t);
            if b == t {
                // Single element left: race thieves for it.
                let won = self
                    .bottom
                    .compare_exchange(b, b + 1, Ordering::SeqCst, Ordering::Relaxed)
                    .is_ok();
                self.top.store(t + 1, Ordering::Relaxed);
                if won {
                    Some(value)
                } else {
                    None
                }
            } else {
                Some(value)
            }
        } else {
            // Already empty; restore top.
            self.top.store(t + 1, Ordering::Relaxed);
            None
        }
    }

    /// Steal the oldest task. Callable from any thread.
    pub fn steal(&self) -> Steal<T> {
        let b = self.bottom.load(Ordering::Acquire);
        std::sync::atomic::fence(Ordering::SeqCst);
        let t = self.top.load(Ordering::Acquire);

        if b >= t {
            return Steal::Empty;
        }

        let buf = unsafe { &*self.buf.load(Ordering::Acquire) };
        let value = unsafe { buf.read(b) };
        if self
            .bottom
            .compare_exchange(b, b + 1, Ordering::SeqCst, Ordering::Relaxed)
            .is_ok()
        {
            Steal::Success(value)
        } else {
            Steal::Retry
        }
    }

    /// Double the buffer. Owner-only, called from `push` when full.
    unsafe fn grow(&self, b: isize, t: isize) {
        let old = self.buf.load(Ordering::Relaxed);
        let new = Buffer::new((*old).cap * 2);
        for i in b..t {
            new.write(i, (*old).read(i));
        }
        self.buf.store(Box::into_raw(new), Ordering::Release);
        // A thief may still be reading a slot of the old buffer, so park it
        // until drop instead of freeing it here.
        self.retired.lock().unwrap().push(Box::from_raw(old));
    }
}

impl<T: Copy> Default for WorkerDeque<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Copy> Drop for WorkerDeque<T> {
    fn drop(&mut self) {
        unsafe { drop(Box::from_raw(self.buf.load(Ordering::Relaxed))) };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU64;
    use std::sync::Arc;

    #[test]
    fn owner_pop_is_lifo() {
        let d = WorkerDeque::new();
        unsafe {
            d.push(1u64);
            d.push(2);
            d.push(3);
            assert_eq!(d.pop(), Some(3));
            assert_eq!(d.pop(), Some(2));
            d.push(4);
            assert_eq!(d.pop(), Some(4));
            assert_eq!(d.pop(), Some(1));
            assert_eq!(d.pop(), None);
        }
    }

    #[test]
    fn steal_takes_oldest() {
        let d = WorkerDeque::new();
        unsafe {
            d.push(10u64);
            d.push(11);
            d.push(12);
        }
        assert_eq!(d.steal(), Steal::Success(10));
        assert_eq!(d.steal(), Steal::Success(11));
        unsafe {
            // Owner still pops from the young end.
            assert_eq!(d.pop(), Some(12));
        }
        assert_eq!(d.steal(), Steal::Empty);
    }

    #[test]
    fn empty_steal_is_normal() {
        let d: WorkerDeque<u64> = WorkerDeque::new();
        assert_eq!(d.steal(), Steal::Empty);
        assert!(d.is_empty());
    }

    #[test]
    fn grows_past_initial_capacity() {
        let d = WorkerDeque::with_capacity(64);
        unsafe {
            for i in 0..100_000u64 {
                d.push(i);
            }
        }
        assert_eq!(d.len(), 100_000);
        // Oldest elements survived every growth copy.
        assert_eq!(d.steal(), Steal::Success(0));
        assert_eq!(d.steal(), Steal::Success(1));
        unsafe {
            assert_eq!(d.pop(), Some(99_999));
        }
    }

    #[test]
    fn wraparound_reuses_slots() {
        let d = WorkerDeque::with_capacity(64);
        unsafe {
            for round in 0..1000u64 {
                for i in 0..32 {
                    d.push(round * 32 + i);
                }
                for i in (0..32).rev() {
                    assert_eq!(d.pop(), Some(round * 32 + i));
                }
            }
        }
        assert!(d.is_empty());
    }

    // Smaller sibling of the full acceptance stress run: one owner mixing
    // pushes and pops with concurrent thieves, every token seen exactly once.
    #[test]
    fn concurrent_exactly_once() {
        const N: u64 = 100_000;
        const THIEVES: usize = 4;

        for _ in 0..4 {
            let d = Arc::new(WorkerDeque::new());
            let seen: Arc<Vec<AtomicU64>> =
                Arc::new((0..N).map(|_| AtomicU64::new(0)).collect());
            let done = Arc::new(std::sync::atomic::AtomicBool::new(false));

            let mut handles = Vec::new();
            for _ in 0..THIEVES {
                let d = Arc::clone(&d);
                let seen = Arc::clone(&seen);
                let done = Arc::clone(&done);
                handles.push(std::thread::spawn(move || loop {
                    match d.steal() {
                        Steal::Success(v) => {
                            seen[v as usize].fetch_add(1, Ordering::Relaxed);
                        }
                        Steal::Empty => {
                            if done.load(Ordering::Acquire) && d.is_empty() {
                                return;
                            }
                            std::hint::spin_loop();
                        }
                        Steal::Retry => {}
                    }
                }));
            }

            let mut next = 0u64;
            while next < N {
                unsafe {
                    d.push(next);
                    next += 1;
                    // Pop a few back now and then to exercise the owner race.
                    if next % 7 == 0 {
                        if let Some(v) = d.pop() {
                            seen[v as usize].fetch_add(1, Ordering::Relaxed);
                        }
                    }
                }
            }
            while let Some(v) = unsafe { d.pop() } {
                seen[v as usize].fetch_add(1, Ordering::Relaxed);
            }
            done.store(true, Ordering::Release);
            for h in handles {
                h.join().unwrap();
            }

            for (i, c) in seen.iter().enumerate() {
                assert_eq!(c.load(Ordering::Relaxed), 1, "token {i} count");
            }
        }
    }
}

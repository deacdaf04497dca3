//! Thread-aware element pool with generation-tagged references.
//!
//! The pool hands out slots for mesh elements. Each worker allocates from
//! its own shard, so the hot path takes an uncontended per-shard lock and
//! touches memory that stays local to the worker. A freed slot goes onto
//! the free list of the worker that *freed* it (not the one that allocated
//! it), which is where the next allocation by that worker will find it
//! still cache-warm.
//!
//! Slots live in chains of geometrically growing slabs that are never
//! moved or freed while the pool exists, so `&T` obtained from a live
//! reference stays valid even as the pool grows. Each slot carries a
//! generation counter (odd while live, even while dead) and an [`ElemRef`]
//! embeds the generation it was created with, so a stale reference to a
//! reused slot is detected instead of silently reading the new occupant.

use std::sync::atomic::{AtomicPtr, AtomicU32, Ordering};
use std::sync::Mutex;

/// Slots in the first slab of a shard; slab `k` holds `BASE << k` slots.
const BASE: u32 = 64;
/// Slab count bounding a shard at `BASE * (2^SPINE - 1)` slots.
const SPINE: usize = 19;

const WORKER_BITS: u32 = 8;
const INDEX_BITS: u32 = 24;
pub const MAX_WORKERS: usize = (1 << WORKER_BITS) as usize;
const MAX_INDEX: u32 = (1 << INDEX_BITS) - 1;

/// Packed reference to a pool slot: shard, slot index within the shard,
/// and the generation observed at allocation.
///
/// The all-zero value is [`ElemRef::NULL`], which no live slot ever equals
/// (live generations are odd), so it doubles as a sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ElemRef(u64);

impl ElemRef {
    pub const NULL: ElemRef = ElemRef(0);

    fn new(shard: usize, index: u32, gen: u32) -> Self {
        debug_assert!(shard < MAX_WORKERS);
        debug_assert!(index <= MAX_INDEX);
        ElemRef(((shard as u64) << (INDEX_BITS + 32)) | ((index as u64) << 32) | gen as u64)
    }

    pub fn is_null(self) -> bool {
        self == Self::NULL
    }

    fn shard(self) -> usize {
        (self.0 >> (INDEX_BITS + 32)) as usize
    }

    fn index(self) -> u32 {
        ((self.0 >> 32) as u32) & MAX_INDEX
    }

    fn gen(self) -> u32 {
        self.0 as u32
    }

    /// Stable packed form, useful for hashing and compact queues.
    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn from_bits(bits: u64) -> Self {
        ElemRef(bits)
    }
}

struct Slot<T> {
    /// Even while dead, odd while live. Bumped on every transition.
    gen: AtomicU32,
    value: T,
}

struct ShardCore {
    /// Packed `(shard, index)` of slots freed by this worker.
    free: Vec<u64>,
    /// Next never-used slot index in this shard.
    next: u32,
    allocs: u64,
    frees: u64,
}

struct Shard<T> {
    slabs: [AtomicPtr<Slot<T>>; SPINE],
    core: Mutex<ShardCore>,
}

/// Running totals for leak accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PoolStats {
    pub allocs: u64,
    pub frees: u64,
    pub live: u64,
}

/// Sharded slot pool. `T` is shared mutable state (typically interior
/// atomics); the pool itself only manages slot lifetime and reuse.
pub struct Pool<T> {
    shards: Vec<Shard<T>>,
}

unsafe impl<T: Send + Sync> Send for Pool<T> {}
unsafe impl<T: Send + Sync> Sync for Pool<T> {}

/// Slab index and offset for a slot index. Slab `k` covers indices
/// `[BASE * (2^k - 1), BASE * (2^(k+1) - 1))`.
fn locate(index: u32) -> (usize, usize) {
    let j = index / BASE + 1;
    let slab = (31 - j.leading_zeros()) as usize;
    let offset = index - BASE * ((1 << slab) - 1);
    (slab, offset as usize)
}

fn slab_len(slab: usize) -> usize {
    (BASE << slab) as usize
}

impl<T: Default> Pool<T> {
    /// Pool with one shard per worker. Any thread may use any shard; the
    /// shard argument is a locality policy, not a safety requirement.
    pub fn new(shards: usize) -> Self {
        assert!(shards >= 1 && shards <= MAX_WORKERS);
        Pool {
            shards: (0..shards)
                .map(|_| Shard {
                    slabs: std::array::from_fn(|_| AtomicPtr::new(std::ptr::null_mut())),
                    core: Mutex::new(ShardCore {
                        free: Vec::new(),
                        next: 0,
                        allocs: 0,
                        frees: 0,
                    }),
                })
                .collect(),
        }
    }

    /// Allocate a slot from `tid`'s shard (its free list first, then fresh
    /// arena space). Returns the live reference and the slot's payload for
    /// initialization; publish the reference only after the payload is in
    /// a consistent state.
    pub fn alloc(&self, tid: usize) -> (ElemRef, &T) {
        let shard = &self.shards[tid];
        let mut core = shard.core.lock().unwrap();
        core.allocs += 1;

        let (home, index) = if let Some(packed) = core.free.pop() {
            ((packed >> 32) as usize, packed as u32)
        } else {
            let index = core.next;
            assert!(index <= MAX_INDEX, "pool shard {tid} exhausted");
            core.next += 1;
            let (slab, _) = locate(index);
            if shard.slabs[slab].load(Ordering::Relaxed).is_null() {
                let mut slots = Vec::with_capacity(slab_len(slab));
                slots.resize_with(slab_len(slab), || Slot {
                    gen: AtomicU32::new(0),
                    value: T::default(),
                });
                let ptr = Box::into_raw(slots.into_boxed_slice()) as *mut Slot<T>;
                shard.slabs[slab].store(ptr, Ordering::Release);
            }
            (tid, index)
        };
        drop(core);

        let slot = self.slot(home, index);
        let gen = slot.gen.load(Ordering::Relaxed);
        debug_assert_eq!(gen % 2, 0, "allocated slot was already live");
        // Odd generation marks the slot live. Release pairs with the
        // Acquire in `get` so a validated reader sees the slot's state.
        slot.gen.store(gen + 1, Ordering::Release);
        (ElemRef::new(home, index, gen + 1), &slot.value)
    }

    /// Free a live slot. The slot returns to the free list of the worker
    /// calling `free`, regardless of which shard's arena owns its memory.
    pub fn free(&self, tid: usize, r: ElemRef) {
        let slot = self.slot(r.shard(), r.index());
        let gen = slot.gen.load(Ordering::Relaxed);
        assert_eq!(gen, r.gen(), "double free or stale free of {r:?}");
        slot.gen.store(gen + 1, Ordering::Release);

        let mut core = self.shards[tid].core.lock().unwrap();
        core.frees += 1;
        core.free.push(((r.shard() as u64) << 32) | r.index() as u64);
    }

    /// Payload of `r` if the slot is still the generation `r` was created
    /// with; `None` for stale references. The returned borrow stays valid
    /// for the pool's lifetime (slabs never move), but its *contents* are
    /// only meaningful while the element stays live; speculative readers
    /// re-validate after reading.
    pub fn get(&self, r: ElemRef) -> Option<&T> {
        if r.is_null() {
            return None;
        }
        let slot = self.slot(r.shard(), r.index());
        if slot.gen.load(Ordering::Acquire) == r.gen() {
            Some(&slot.value)
        } else {
            None
        }
    }

    /// True while `r` points at a live, un-reused slot.
    pub fn is_live(&self, r: ElemRef) -> bool {
        self.get(r).is_some()
    }

    fn slot(&self, shard: usize, index: u32) -> &Slot<T> {
        let (slab, offset) = locate(index);
        let ptr = self.shards[shard].slabs[slab].load(Ordering::Acquire);
        debug_assert!(!ptr.is_null(), "reference into never-allocated slab");
        unsafe { &*ptr.add(offset) }
    }

    pub fn stats(&self) -> PoolStats {
        let mut s = PoolStats::default();
        for shard in &self.shards {
            let core = shard.core.lock().unwrap();
            s.allocs += core.allocs;
            s.frees += core.frees;
        }
        s.live = s.allocs - s.frees;
        s
    }

    /// Visit every live slot in deterministic order (shard by shard,
    /// oldest slot first). Intended for quiescent states: export,
    /// validation, residue scans.
    pub fn for_each_live(&self, mut f: impl FnMut(ElemRef, &T)) {
        for (si, shard) in self.shards.iter().enumerate() {
            let next = shard.core.lock().unwrap().next;
            for index in 0..next {
                let slot = self.slot(si, index);
                let gen = slot.gen.load(Ordering::Acquire);
                if gen % 2 == 1 {
                    f(ElemRef::new(si, index, gen), &slot.value);
                }
            }
        }
    }

    /// Live references, in the same order as [`Pool::for_each_live`].
    pub fn live_refs(&self) -> Vec<ElemRef> {
        let mut out = Vec::new();
        self.for_each_live(|r, _| out.push(r));
        out
    }
}

impl<T> Drop for Pool<T> {
    fn drop(&mut self) {
        for shard in &self.shards {
            for (k, slab) in shard.slabs.iter().enumerate() {
                let ptr = slab.load(Ordering::Relaxed);
                if !ptr.is_null() {
                    let slice = std::ptr::slice_from_raw_parts_mut(ptr, slab_len(k));
                    unsafe { drop(Box::from_raw(slice)) };
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::atomic::AtomicU64;

    #[test]
    fn slab_locate_covers_indices_contiguously() {
        let mut expected_index = 0u32;
        for slab in 0..6 {
            for offset in 0..slab_len(slab) {
                assert_eq!(locate(expected_index), (slab, offset));
                expected_index += 1;
            }
        }
    }

    #[test]
    fn alloc_free_realloc_reuses_slot_with_new_generation() {
        let pool: Pool<AtomicU64> = Pool::new(2);
        let (a, _) = pool.alloc(0);
        pool.free(0, a);
        let (b, _) = pool.alloc(0);
        assert_eq!(a.shard(), b.shard());
        assert_eq!(a.index(), b.index());
        assert_ne!(a.gen(), b.gen());
        assert!(pool.get(a).is_none(), "stale ref must not resolve");
        assert!(pool.get(b).is_some());
    }

    #[test]
    fn free_lands_on_freeing_workers_list() {
        let pool: Pool<AtomicU64> = Pool::new(2);
        let (a, _) = pool.alloc(0);
        // Worker 1 frees a slot from shard 0's arena...
        pool.free(1, a);
        // ...so worker 1's next alloc reuses it, while worker 0 gets a
        // fresh slot from its own arena.
        let (b, _) = pool.alloc(1);
        assert_eq!(b.shard(), 0);
        assert_eq!(b.index(), a.index());
        let (c, _) = pool.alloc(0);
        assert_eq!(c.shard(), 0);
        assert_ne!(c.index(), a.index());
    }

    #[test]
    fn addresses_stay_stable_across_growth() {
        let pool: Pool<AtomicU64> = Pool::new(1);
        let (first, v) = pool.alloc(0);
        v.store(42, Ordering::Relaxed);
        let first_ptr = v as *const AtomicU64;
        for _ in 0..10_000 {
            pool.alloc(0);
        }
        let again = pool.get(first).unwrap();
        assert_eq!(again as *const AtomicU64, first_ptr);
        assert_eq!(again.load(Ordering::Relaxed), 42);
    }

    #[test]
    fn null_ref_never_resolves() {
        let pool: Pool<AtomicU64> = Pool::new(1);
        assert!(ElemRef::NULL.is_null());
        assert!(pool.get(ElemRef::NULL).is_none());
    }

    #[test]
    fn stats_track_conservation() {
        let pool: Pool<AtomicU64> = Pool::new(3);
        let mut live = Vec::new();
        for i in 0..300 {
            live.push(pool.alloc(i % 3).0);
        }
        for r in live.drain(..150) {
            pool.free(2, r);
        }
        let s = pool.stats();
        assert_eq!(s.allocs, 300);
        assert_eq!(s.frees, 150);
        assert_eq!(s.live, 150);
        assert_eq!(pool.live_refs().len(), 150);
    }

    #[test]
    fn for_each_live_is_deterministic_and_complete() {
        let pool: Pool<AtomicU64> = Pool::new(2);
        let mut refs = Vec::new();
        for i in 0..100 {
            let (r, v) = pool.alloc(i % 2);
            v.store(i as u64, Ordering::Relaxed);
            refs.push(r);
        }
        for r in refs.iter().step_by(3) {
            pool.free(0, *r);
        }
        let first = pool.live_refs();
        let second = pool.live_refs();
        assert_eq!(first, second);
        let expected: Vec<ElemRef> = refs
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 3 != 0)
            .map(|(_, r)| *r)
            .collect();
        let mut sorted = expected.clone();
        sorted.sort();
        assert_eq!(first.len(), sorted.len());
        for r in &sorted {
            assert!(first.contains(r));
        }
    }

    #[test]
    #[should_panic(expected = "double free")]
    fn double_free_is_detected() {
        let pool: Pool<AtomicU64> = Pool::new(1);
        let (a, _) = pool.alloc(0);
        pool.free(0, a);
        pool.free(0, a);
    }

    #[test]
    fn concurrent_alloc_free_conserves() {
        let pool: std::sync::Arc<Pool<AtomicU64>> = std::sync::Arc::new(Pool::new(4));
        let handles: Vec<_> = (0..4)
            .map(|tid| {
                let pool = std::sync::Arc::clone(&pool);
                std::thread::spawn(move || {
                    let mut mine = Vec::new();
                    let mut rng = tid as u64 + 99;
                    for _ in 0..10_000 {
                        if crate::util::splitmix64(&mut rng) % 3 == 0 && !mine.is_empty() {
                            let idx = (crate::util::splitmix64(&mut rng)
                                % mine.len() as u64)
                                as usize;
                            pool.free(tid, mine.swap_remove(idx));
                        } else {
                            mine.push(pool.alloc(tid).0);
                        }
                    }
                    mine.len() as u64
                })
            })
            .collect();
        let live_expected: u64 = handles.into_iter().map(|h| h.join().unwrap()).sum();
        assert_eq!(pool.stats().live, live_expected);
        assert_eq!(pool.live_refs().len() as u64, live_expected);
    }

    proptest! {
        // Interleaved alloc/free scripts never break alloc - free = live,
        // and stale refs never resolve.
        #[test]
        fn conservation_holds_for_any_script(script in proptest::collection::vec(any::<u16>(), 1..200)) {
            let pool: Pool<AtomicU64> = Pool::new(2);
            let mut live = Vec::new();
            let mut freed = Vec::new();
            for step in script {
                let tid = (step & 1) as usize;
                if step % 3 == 0 && !live.is_empty() {
                    let r: ElemRef = live.swap_remove(step as usize % live.len());
                    pool.free(tid, r);
                    freed.push(r);
                } else {
                    live.push(pool.alloc(tid).0);
                }
            }
            let s = pool.stats();
            prop_assert_eq!(s.live as usize, live.len());
            prop_assert_eq!(s.allocs - s.frees, s.live);
            for r in &live {
                prop_assert!(pool.get(*r).is_some());
            }
            for r in &freed {
                prop_assert!(pool.get(*r).is_none());
            }
        }
    }
}

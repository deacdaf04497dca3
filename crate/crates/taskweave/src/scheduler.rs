//! Work-stealing scheduler: worker threads, task groups, quiescence.
//!
//! One scheduler runs per process at a time. [`Scheduler::start`] spins up
//! `nthreads` workers with stable ids `0..nthreads`, each owning one
//! work-stealing deque. Tasks are tasklets: once picked up they run to
//! completion on that worker, so [`Scheduler::current_thread_id`] is
//! constant for the whole body of a task.
//!
//! Task creation from a worker pushes onto that worker's own deque.
//! Creation from any other thread goes through a lock-protected injection
//! queue that worker 0 drains into its own deque, which keeps the deques
//! strictly single-owner.
//!
//! Completion is tracked per [`TaskGroup`]: the pending counter is
//! incremented *before* a task is published and decremented after its body
//! returns, so a counter observed at zero means the group has truly
//! quiesced. A worker that waits on a group keeps executing and stealing
//! tasks instead of blocking; an external waiter parks on a condvar.
//!
//! A task that panics does not kill its worker: the first panic payload is
//! captured in the group and re-raised from `wait_for_all` once the group
//! is quiescent.

use crate::deque::{Steal, WorkerDeque};
use std::any::Any;
use std::cell::Cell;
use std::collections::VecDeque;
use std::mem::ManuallyDrop;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{fence, AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;
use thiserror::Error;

/// Failed steal rounds before a worker starts yielding its time slice.
const SPIN_ROUNDS: usize = 64;
/// Failed steal rounds before a worker parks on the idle condvar.
const YIELD_ROUNDS: usize = 128;
/// Upper bound on one parked sleep; bounds wakeup staleness.
const PARK_TIMEOUT: Duration = Duration::from_micros(200);
/// Consecutive `Retry` results tolerated on one victim before moving on.
const STEAL_RETRIES: usize = 4;

static SCHEDULER_RUNNING: AtomicBool = AtomicBool::new(false);

#[derive(Debug, Error)]
pub enum SchedulerError {
    #[error("scheduler needs at least one worker thread")]
    ZeroThreads,
    #[error("a scheduler is already running in this process")]
    AlreadyRunning,
    #[error("cannot shut down: {0} tasks still pending")]
    TasksPending(usize),
}

/// Type-erased heap task. The pointee is a `TaskNode<F>`; `run` knows the
/// concrete `F`, frees the node and invokes the closure.
struct Header {
    run: unsafe fn(*mut Header),
    /// One owned `Arc<GroupInner>` reference, consumed when the task runs.
    group: *const GroupInner,
}

#[repr(C)]
struct TaskNode<F> {
    header: Header,
    f: ManuallyDrop<F>,
}

unsafe fn run_node<F: FnOnce()>(header: *mut Header) {
    let mut node = Box::from_raw(header as *mut TaskNode<F>);
    let f = ManuallyDrop::take(&mut node.f);
    drop(node);
    f();
}

#[derive(Clone, Copy)]
struct TaskPtr(*mut Header);
unsafe impl Send for TaskPtr {}

struct GroupInner {
    pending: AtomicUsize,
    ext_waiters: AtomicUsize,
    lock: Mutex<()>,
    cv: Condvar,
    panic: Mutex<Option<Box<dyn Any + Send>>>,
}

impl GroupInner {
    fn finish_one(&self) {
        // Release so a waiter that observes zero also observes every side
        // effect of the finished tasks.
        if self.pending.fetch_sub(1, Ordering::Release) == 1 {
            fence(Ordering::Acquire);
            if self.ext_waiters.load(Ordering::Acquire) > 0 {
                let _guard = self.lock.lock().unwrap();
                self.cv.notify_all();
            }
        }
    }

    fn record_panic(&self, payload: Box<dyn Any + Send>) {
        let mut slot = self.panic.lock().unwrap();
        if slot.is_none() {
            *slot = Some(payload);
        }
    }
}

/// Completion scope for a batch of tasks.
///
/// Groups are independent of any particular scheduler; the same group can
/// collect tasks submitted from several threads.
#[derive(Clone)]
pub struct TaskGroup {
    inner: Arc<GroupInner>,
}

impl TaskGroup {
    pub fn new() -> Self {
        TaskGroup {
            inner: Arc::new(GroupInner {
                pending: AtomicUsize::new(0),
                ext_waiters: AtomicUsize::new(0),
                lock: Mutex::new(()),
                cv: Condvar::new(),
                panic: Mutex::new(None),
            }),
        }
    }

    /// Tasks published but not yet finished.
    pub fn pending(&self) -> usize {
        self.inner.pending.load(Ordering::Acquire)
    }
}

impl Default for TaskGroup {
    fn default() -> Self {
        Self::new()
    }
}

#[repr(align(64))]
#[derive(Default)]
struct WorkerStats {
    created: AtomicU64,
    executed: AtomicU64,
    steal_attempts: AtomicU64,
    steals: AtomicU64,
}

/// Counter snapshot across all workers plus external submitters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SchedulerStats {
    pub tasks_created: u64,
    pub tasks_executed: u64,
    pub steal_attempts: u64,
    pub steals: u64,
}

impl std::ops::Sub for SchedulerStats {
    type Output = SchedulerStats;

    /// Difference of two snapshots, e.g. "tasks created by this call".
    fn sub(self, earlier: SchedulerStats) -> SchedulerStats {
        SchedulerStats {
            tasks_created: self.tasks_created - earlier.tasks_created,
            tasks_executed: self.tasks_executed - earlier.tasks_executed,
            steal_attempts: self.steal_attempts - earlier.steal_attempts,
            steals: self.steals - earlier.steals,
        }
    }
}

struct Inner {
    nthreads: usize,
    deques: Vec<WorkerDeque<TaskPtr>>,
    /// Side channel for tasks created off the worker threads.
    injected: Mutex<VecDeque<TaskPtr>>,
    has_injected: AtomicBool,
    /// Unfinished tasks across all groups; gates shutdown.
    outstanding: AtomicUsize,
    stop: AtomicBool,
    sleepers: AtomicUsize,
    idle_lock: Mutex<()>,
    idle_cv: Condvar,
    stats: Vec<WorkerStats>,
    external_created: AtomicU64,
}

impl Inner {
    fn wake_one(&self) {
        if self.sleepers.load(Ordering::Relaxed) > 0 {
            let _guard = self.idle_lock.lock().unwrap();
            self.idle_cv.notify_one();
        }
    }

    fn wake_all(&self) {
        let _guard = self.idle_lock.lock().unwrap();
        self.idle_cv.notify_all();
    }
}

thread_local! {
    /// (worker id, scheduler identity) for worker threads, `None` elsewhere.
    static WORKER: Cell<Option<(usize, *const ())>> = const { Cell::new(None) };
}

/// Handle to the running scheduler.
pub struct Scheduler {
    inner: Arc<Inner>,
    handles: Mutex<Vec<JoinHandle<()>>>,
}

impl Scheduler {
    /// Start `nthreads` workers. Rejects zero threads and rejects starting
    /// while another scheduler is still running in this process.
    pub fn start(nthreads: usize) -> Result<Self, SchedulerError> {
        if nthreads == 0 {
            return Err(SchedulerError::ZeroThreads);
        }
        if SCHEDULER_RUNNING.swap(true, Ordering::SeqCst) {
            return Err(SchedulerError::AlreadyRunning);
        }

        let inner = Arc::new(Inner {
            nthreads,
            deques: (0..nthreads).map(|_| WorkerDeque::new()).collect(),
            injected: Mutex::new(VecDeque::new()),
            has_injected: AtomicBool::new(false),
            outstanding: AtomicUsize::new(0),
            stop: AtomicBool::new(false),
            sleepers: AtomicUsize::new(0),
            idle_lock: Mutex::new(()),
            idle_cv: Condvar::new(),
            stats: (0..nthreads).map(|_| WorkerStats::default()).collect(),
            external_created: AtomicU64::new(0),
        });

        let handles = (0..nthreads)
            .map(|id| {
                let inner = Arc::clone(&inner);
                std::thread::Builder::new()
                    .name(format!("taskweave-{id}"))
                    .stack_size(8 << 20)
                    .spawn(move || worker_main(inner, id))
                    .expect("failed to spawn worker thread")
            })
            .collect();

        Ok(Scheduler {
            inner,
            handles: Mutex::new(handles),
        })
    }

    pub fn nthreads(&self) -> usize {
        self.inner.nthreads
    }

    /// Worker id of the calling thread, or `None` for threads that are not
    /// workers of this scheduler (the external sentinel).
    pub fn current_thread_id(&self) -> Option<usize> {
        WORKER.with(|w| match w.get() {
            Some((id, ident)) if ident == Arc::as_ptr(&self.inner) as *const () => Some(id),
            _ => None,
        })
    }

    /// Create a task in `group` and make it available for execution.
    ///
    /// From a worker thread the task goes to that worker's own deque; from
    /// any other thread it is pushed onto the injection queue, which worker
    /// 0 drains. The group's pending counter is incremented before the task
    /// becomes visible, so `wait_for_all` can never miss it.
    pub fn create_and_schedule<F>(&self, group: &TaskGroup, f: F)
    where
        F: FnOnce() + Send + 'static,
    {
        unsafe { self.spawn_unchecked(group, f) }
    }

    /// Non-'static spawn used by the parallel-for front end, which
    /// guarantees the group is waited on before borrowed data goes away.
    ///
    /// # Safety
    /// Caller must ensure everything captured by `f` outlives the task's
    /// execution, i.e. `wait_for_all(group)` returns before the borrows end.
    pub(crate) unsafe fn spawn_unchecked<F>(&self, group: &TaskGroup, f: F)
    where
        F: FnOnce() + Send,
    {
        let inner = &*self.inner;
        group.inner.pending.fetch_add(1, Ordering::Relaxed);
        inner.outstanding.fetch_add(1, Ordering::Relaxed);

        let node = Box::new(TaskNode {
            header: Header {
                run: run_node::<F>,
                group: Arc::into_raw(Arc::clone(&group.inner)),
            },
            f: ManuallyDrop::new(f),
        });
        let task = TaskPtr(Box::into_raw(node) as *mut Header);

        match self.current_thread_id() {
            Some(me) => {
                inner.stats[me].created.fetch_add(1, Ordering::Relaxed);
                unsafe { inner.deques[me].push(task) };
            }
            None => {
                inner.external_created.fetch_add(1, Ordering::Relaxed);
                let mut queue = inner.injected.lock().unwrap();
                queue.push_back(task);
                inner.has_injected.store(true, Ordering::Release);
            }
        }
        inner.wake_one();
    }

    /// Block until every task of `group` has finished.
    ///
    /// A waiting worker does not idle: it keeps running its own tasks and
    /// stealing others (of any group) until the counter reaches zero. An
    /// empty group returns immediately. Panics captured from the group's
    /// tasks are re-raised here after quiescence.
    pub fn wait_for_all(&self, group: &TaskGroup) {
        let inner = &*self.inner;
        match self.current_thread_id() {
            Some(me) => {
                let mut idle = 0usize;
                while group.inner.pending.load(Ordering::Acquire) != 0 {
                    if me == 0 && inner.has_injected.load(Ordering::Acquire) {
                        pump(inner);
                    }
                    let task = unsafe { inner.deques[me].pop() }
                        .or_else(|| steal_round(inner, me));
                    match task {
                        Some(t) => {
                            idle = 0;
                            unsafe { execute(inner, me, t) };
                        }
                        None => {
                            idle += 1;
                            if idle < 16 {
                                std::hint::spin_loop();
                            } else {
                                std::thread::yield_now();
                            }
                        }
                    }
                }
            }
            None => {
                if group.inner.pending.load(Ordering::Acquire) != 0 {
                    group.inner.ext_waiters.fetch_add(1, Ordering::SeqCst);
                    let mut guard = group.inner.lock.lock().unwrap();
                    while group.inner.pending.load(Ordering::Acquire) != 0 {
                        let (g, _) = group
                            .inner
                            .cv
                            .wait_timeout(guard, Duration::from_millis(10))
                            .unwrap();
                        guard = g;
                    }
                    drop(guard);
                    group.inner.ext_waiters.fetch_sub(1, Ordering::SeqCst);
                }
            }
        }

        let payload = group.inner.panic.lock().unwrap().take();
        if let Some(p) = payload {
            std::panic::resume_unwind(p);
        }
    }

    /// Counter totals since `start`.
    pub fn stats(&self) -> SchedulerStats {
        let inner = &*self.inner;
        let mut s = SchedulerStats {
            tasks_created: inner.external_created.load(Ordering::Relaxed),
            ..Default::default()
        };
        for w in &inner.stats {
            s.tasks_created += w.created.load(Ordering::Relaxed);
            s.tasks_executed += w.executed.load(Ordering::Relaxed);
            s.steal_attempts += w.steal_attempts.load(Ordering::Relaxed);
            s.steals += w.steals.load(Ordering::Relaxed);
        }
        s
    }

    /// Stop the workers and join them. Rejects if any task is still
    /// pending; idempotent once the workers are gone.
    pub fn shutdown(&self) -> Result<(), SchedulerError> {
        let pending = self.inner.outstanding.load(Ordering::Acquire);
        if pending > 0 {
            return Err(SchedulerError::TasksPending(pending));
        }
        let handles: Vec<_> = self.handles.lock().unwrap().drain(..).collect();
        if handles.is_empty() {
            return Ok(());
        }
        self.inner.stop.store(true, Ordering::SeqCst);
        self.inner.wake_all();
        for h in handles {
            if let Err(e) = h.join() {
                std::panic::resume_unwind(e);
            }
        }
        SCHEDULER_RUNNING.store(false, Ordering::SeqCst);
        Ok(())
    }
}

impl Drop for Scheduler {
    fn drop(&mut self) {
        // Graceful fallback when shutdown() was not called: wait for the
        // outstanding tasks to drain, then stop the workers.
        while self.shutdown().is_err() {
            std::thread::sleep(Duration::from_micros(50));
        }
    }
}

/// Move everything from the injection queue into worker 0's deque. Must be
/// called by worker 0 only (deques are single-owner).
fn pump(inner: &Inner) {
    let drained = {
        let mut queue = inner.injected.lock().unwrap();
        let drained = std::mem::take(&mut *queue);
        inner.has_injected.store(false, Ordering::Release);
        drained
    };
    let count = drained.len();
    for task in drained {
        unsafe { inner.deques[0].push(task) };
    }
    if count > 1 {
        inner.wake_one();
    }
}

/// One round of steal attempts: up to `nthreads` random victims.
fn steal_round(inner: &Inner, me: usize) -> Option<TaskPtr> {
    if inner.nthreads == 1 {
        return None;
    }
    let stats = &inner.stats[me];
    for _ in 0..inner.nthreads {
        // Cheap xorshift on the worker's counters; uniform enough for
        // victim selection and free of shared RNG state.
        let r = {
            let mut x = stats.steal_attempts.load(Ordering::Relaxed)
                ^ (me as u64) << 32
                ^ 0x9e37_79b9_7f4a_7c15;
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            x as usize
        };
        let victim = {
            let v = r % (inner.nthreads - 1);
            if v >= me {
                v + 1
            } else {
                v
            }
        };
        let mut retries = 0;
        loop {
            stats.steal_attempts.fetch_add(1, Ordering::Relaxed);
            match inner.deques[victim].steal() {
                Steal::Success(t) => {
                    stats.steals.fetch_add(1, Ordering::Relaxed);
                    return Some(t);
                }
                Steal::Empty => break,
                Steal::Retry => {
                    retries += 1;
                    if retries >= STEAL_RETRIES {
                        break;
                    }
                    std::hint::spin_loop();
                }
            }
        }
    }
    None
}

/// Run one task: consume its node, fold panics into the group, decrement
/// the counters that publication incremented.
unsafe fn execute(inner: &Inner, me: usize, task: TaskPtr) {
    let header = task.0;
    let group = Arc::from_raw((*header).group);
    let run = (*header).run;
    if let Err(payload) = catch_unwind(AssertUnwindSafe(|| run(header))) {
        group.record_panic(payload);
    }
    inner.stats[me].executed.fetch_add(1, Ordering::Relaxed);
    // Order matters: `finish_one` may release a waiter that immediately
    // calls shutdown, which checks `outstanding`.
    inner.outstanding.fetch_sub(1, Ordering::Release);
    group.finish_one();
}

fn worker_main(inner: Arc<Inner>, me: usize) {
    WORKER.with(|w| w.set(Some((me, Arc::as_ptr(&inner) as *const ()))));

    let mut idle_rounds = 0usize;
    loop {
        if me == 0 && inner.has_injected.load(Ordering::Acquire) {
            pump(&inner);
        }
        let task = unsafe { inner.deques[me].pop() }.or_else(|| steal_round(&inner, me));
        match task {
            Some(t) => {
                idle_rounds = 0;
                unsafe { execute(&inner, me, t) };
            }
            None => {
                if inner.stop.load(Ordering::Acquire) {
                    break;
                }
                idle_rounds += 1;
                if idle_rounds < SPIN_ROUNDS {
                    std::hint::spin_loop();
                } else if idle_rounds < YIELD_ROUNDS {
                    std::thread::yield_now();
                } else {
                    // Park. Raise the sleeper count first, then look for
                    // work once more: a spawner that missed the raised
                    // count published its task before our re-check, and
                    // one that sees it will notify. The timeout bounds any
                    // remaining race.
                    inner.sleepers.fetch_add(1, Ordering::SeqCst);
                    let again = unsafe { inner.deques[me].pop() }
                        .or_else(|| steal_round(&inner, me));
                    match again {
                        Some(t) => {
                            inner.sleepers.fetch_sub(1, Ordering::SeqCst);
                            idle_rounds = 0;
                            unsafe { execute(&inner, me, t) };
                        }
                        None => {
                            let skip = inner.stop.load(Ordering::Acquire)
                                || (me == 0 && inner.has_injected.load(Ordering::Acquire));
                            if !skip {
                                let guard = inner.idle_lock.lock().unwrap();
                                let _ =
                                    inner.idle_cv.wait_timeout(guard, PARK_TIMEOUT).unwrap();
                            }
                            inner.sleepers.fetch_sub(1, Ordering::SeqCst);
                        }
                    }
                }
            }
        }
    }

    WORKER.with(|w| w.set(None));
}

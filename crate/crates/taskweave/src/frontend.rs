//! Parallel-for front end with pluggable task-creation strategies.
//!
//! [`task_for`] applies an operation to every element of a slice, carving
//! the index range into grainsize-sized chunks and turning the chunks into
//! tasks. How the chunk tasks come into existence is the [`Strategy`]:
//!
//! * `Flat`: the caller creates one task per chunk, so all `ceil(n/g)`
//!   tasks funnel through the caller (and through the injection queue when
//!   the caller is not a worker).
//! * `TwoLevel`: the caller creates `2 * nthreads` first-level tasks, each
//!   covering a near-equal share of the chunks; every first-level task
//!   creates its share of chunk tasks from inside the pool, spreading the
//!   creation work across workers.
//! * `Hierarchical`: the caller creates a single root task that bisects
//!   its chunk range and recursively spawns two children until ranges are
//!   a single chunk, giving `2 * ceil(n/g) - 1` tasks that diffuse across
//!   workers by stealing subtrees.
//! * `Sequential`: no tasks at all; the caller applies the operation in
//!   index order. Useful as a baseline and for deterministic replay.
//!
//! Both the strategy and the [`Backend`] are runtime values, so callers
//! can switch between them per invocation without recompiling.

use crate::scheduler::{Scheduler, TaskGroup};
use thiserror::Error;

/// Grainsize used by the convenience wrappers when none is given.
pub const DEFAULT_GRAINSIZE: usize = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ForError {
    #[error("grainsize must be at least 1")]
    ZeroGrainsize,
}

/// How chunk tasks are created.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Flat,
    TwoLevel,
    Hierarchical,
    Sequential,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Flat,
        Strategy::TwoLevel,
        Strategy::Hierarchical,
        Strategy::Sequential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Flat => "flat",
            Strategy::TwoLevel => "2level",
            Strategy::Hierarchical => "hierarchical",
            Strategy::Sequential => "sequential",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flat" => Ok(Strategy::Flat),
            "2level" | "two_level" | "twolevel" => Ok(Strategy::TwoLevel),
            "hierarchical" => Ok(Strategy::Hierarchical),
            "sequential" => Ok(Strategy::Sequential),
            other => Err(format!("unknown strategy '{other}'")),
        }
    }
}

/// Where the work runs.
#[derive(Clone, Copy)]
pub enum Backend<'a> {
    /// Tasks on the given scheduler's workers.
    WorkStealing(&'a Scheduler),
    /// Everything inline on the calling thread, in index order, no tasks.
    Sequential,
}

/// Shared state of one `task_for` invocation; tasks reach it through a raw
/// pointer because they never outlive the stack frame that owns it.
struct Env<'a, F> {
    sched: &'a Scheduler,
    group: TaskGroup,
    op: F,
    n: usize,
    grainsize: usize,
}

struct EnvPtr<F>(*const Env<'static, F>);

impl<F> EnvPtr<F> {
    /// # Safety
    /// Valid only while the owning `task_for_index` frame is alive, which
    /// the pre-return `wait_for_all` guarantees for every task.
    unsafe fn env(&self) -> &Env<'static, F> {
        &*self.0
    }
}

impl<F> Clone for EnvPtr<F> {
    fn clone(&self) -> Self {
        EnvPtr(self.0)
    }
}
impl<F> Copy for EnvPtr<F> {}
unsafe impl<F: Sync> Send for EnvPtr<F> {}

/// Apply `op` to every element of `items`.
pub fn task_for<T, F>(
    backend: Backend<'_>,
    strategy: Strategy,
    grainsize: usize,
    items: &[T],
    op: F,
) -> Result<(), ForError>
where
    T: Sync,
    F: Fn(&T) + Sync,
{
    task_for_index(backend, strategy, grainsize, items.len(), |i| {
        op(&items[i])
    })
}

/// Apply `op` to every index in `0..n`. This is the core the slice version
/// wraps; workloads that index into their own structures use it directly.
pub fn task_for_index<F>(
    backend: Backend<'_>,
    strategy: Strategy,
    grainsize: usize,
    n: usize,
    op: F,
) -> Result<(), ForError>
where
    F: Fn(usize) + Sync,
{
    if grainsize == 0 {
        return Err(ForError::ZeroGrainsize);
    }
    if n == 0 {
        return Ok(());
    }

    let sched = match backend {
        Backend::Sequential => {
            run_serial(n, &op);
            return Ok(());
        }
        Backend::WorkStealing(s) => s,
    };
    if strategy == Strategy::Sequential {
        run_serial(n, &op);
        return Ok(());
    }

    let chunks = n.div_ceil(grainsize);
    let env = Env {
        sched,
        group: TaskGroup::new(),
        op,
        n,
        grainsize,
    };
    // Tasks borrow `env` (and whatever `op` borrows) for less than this
    // call: `wait_for_all` below reaches quiescence before returning, even
    // when a task panicked.
    let envp = EnvPtr(&env as *const Env<'_, F> as *const Env<'static, F>);

    match strategy {
        Strategy::Flat => {
            for c in 0..chunks {
                spawn_chunk(&env, envp, c);
            }
        }
        Strategy::TwoLevel => {
            let parts = 2 * sched.nthreads();
            for j in 0..parts {
                let lo = j * chunks / parts;
                let hi = (j + 1) * chunks / parts;
                unsafe {
                    sched.spawn_unchecked(&env.group, move || {
                        let env = envp.env();
                        for c in lo..hi {
                            spawn_chunk(env, envp, c);
                        }
                    });
                }
            }
        }
        Strategy::Hierarchical => {
            spawn_node(&env, envp, 0, chunks);
        }
        Strategy::Sequential => unreachable!("handled above"),
    }

    sched.wait_for_all(&env.group);
    Ok(())
}

fn run_serial<F: Fn(usize)>(n: usize, op: &F) {
    for i in 0..n {
        op(i);
    }
}

fn run_chunk<F: Fn(usize)>(env: &Env<'_, F>, c: usize) {
    let lo = c * env.grainsize;
    let hi = ((c + 1) * env.grainsize).min(env.n);
    for i in lo..hi {
        (env.op)(i);
    }
}

fn spawn_chunk<F: Fn(usize) + Sync>(env: &Env<'_, F>, envp: EnvPtr<F>, c: usize) {
    unsafe {
        env.sched
            .spawn_unchecked(&env.group, move || run_chunk(envp.env(), c));
    }
}

/// Task covering the chunk range `[lo, hi)`: a single chunk runs inline,
/// anything larger bisects into two child tasks (ceil half first).
fn spawn_node<F: Fn(usize) + Sync>(env: &Env<'_, F>, envp: EnvPtr<F>, lo: usize, hi: usize) {
    unsafe {
        env.sched.spawn_unchecked(&env.group, move || {
            let env = envp.env();
            if hi - lo == 1 {
                run_chunk(env, lo);
            } else {
                let mid = lo + (hi - lo + 1) / 2;
                spawn_node(env, envp, lo, mid);
                spawn_node(env, envp, mid, hi);
            }
        });
    }
}

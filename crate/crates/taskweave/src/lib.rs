//! A work-stealing tasking runtime for speculative parallel algorithms.
//!
//! The crate is organized in three layers:
//!
//! * runtime: [`deque`] (per-worker work-stealing deques), [`scheduler`]
//!   (worker threads, task groups, quiescence), [`frontend`] (parallel-for
//!   with pluggable task-creation strategies).
//! * speculation support: [`locks`] (try-only speculative locks with
//!   all-or-nothing acquisition) and [`pool`] (thread-aware element pool
//!   with generation-tagged references).
//! * workloads: [`geom`] and [`mesh`] (triangle meshes and predicates),
//!   [`refine`] (Delaunay refinement with optimistic cavity locking) and
//!   [`smooth`] (lock-guarded Laplacian vertex smoothing).

pub mod deque;
pub mod frontend;
pub mod geom;
pub mod locks;
pub mod mesh;
pub mod pool;
pub mod refine;
pub mod scheduler;
pub mod smooth;
mod util;

//! Speculative parallel Delaunay refinement.
//!
//! Each refinement operation is optimistic: it walks to the triangle
//! containing the new point, grows the cavity of triangles whose
//! circumcircles contain it, and only then tries to take every cavity
//! vertex lock at once. If any lock is busy the operation rolls back
//! without having touched the mesh and the element goes back on its
//! owner's queue; if all locks arrive, the cavity is re-validated under
//! them and retriangulated in one shot (Bowyer–Watson: delete the cavity,
//! fan the new vertex to its boundary cycle).
//!
//! Work distribution is two-staged. Bad triangles live in per-worker
//! [`ThreadQueues`]; each outer round spawns one batching task per queue,
//! which pops at most `schedule_limit` elements and turns each into a
//! refinement task on the runtime. New and rolled-back elements land on
//! the queue of the worker that produced them, so a round's output feeds
//! the next round with no central coordination.

use crate::geom::{
    circumcenter, in_circle, min_angle_deg, orient2d, tri_area, Point, Sign,
};
use crate::locks::{acquire_all, retry_backoff};
use crate::mesh::{Mesh, VertexId};
use crate::pool::ElemRef;
use crate::scheduler::{Scheduler, TaskGroup};
use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

/// What makes a triangle bad enough to refine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineCriteria {
    /// Triangles with area strictly above this are bad.
    pub max_area: f64,
    /// Triangles with a smaller minimum angle (degrees) are bad;
    /// zero disables the angle test.
    pub min_angle_deg: f64,
}

impl RefineCriteria {
    pub fn new(max_area: f64, min_angle_deg: f64) -> Self {
        RefineCriteria {
            max_area,
            min_angle_deg,
        }
    }

    /// Area-only criterion; always terminates.
    pub fn by_area(max_area: f64) -> Self {
        RefineCriteria::new(max_area, 0.0)
    }

    pub fn is_bad(&self, pts: [Point; 3]) -> bool {
        tri_area(pts[0], pts[1], pts[2]) > self.max_area
            || (self.min_angle_deg > 0.0
                && min_angle_deg(pts[0], pts[1], pts[2]) < self.min_angle_deg)
    }
}

/// One unit of refinement work: a triangle reference (generation
/// included) plus how many times it has been retried after rollbacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Work {
    pub el: ElemRef,
    pub attempts: u32,
}

impl Work {
    pub fn new(el: ElemRef) -> Self {
        Work { el, attempts: 0 }
    }
}

/// Per-worker bad-element queues. Workers push to their own slot;
/// batching tasks drain one slot each, so a triangle reference is
/// enqueued at most once per generation.
pub struct ThreadQueues {
    queues: Vec<Mutex<VecDeque<Work>>>,
}

impl ThreadQueues {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        ThreadQueues {
            queues: (0..n).map(|_| Mutex::new(VecDeque::new())).collect(),
        }
    }

    pub fn num_queues(&self) -> usize {
        self.queues.len()
    }

    pub fn push(&self, i: usize, w: Work) {
        self.queues[i].lock().unwrap().push_back(w);
    }

    /// Pop up to `limit` elements from queue `i`, front first.
    pub fn pop_batch(&self, i: usize, limit: usize) -> Vec<Work> {
        let mut q = self.queues[i].lock().unwrap();
        let take = limit.min(q.len());
        q.drain(..take).collect()
    }

    pub fn total_len(&self) -> usize {
        self.queues.iter().map(|q| q.lock().unwrap().len()).sum()
    }

    pub fn len(&self, i: usize) -> usize {
        self.queues[i].lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.total_len() == 0
    }
}

/// Counter block shared by every task of one refinement run.
#[derive(Default)]
pub struct RefineStats {
    pub rounds: AtomicU64,
    pub schedule_tasks: AtomicU64,
    pub refine_tasks: AtomicU64,
    pub inserted: AtomicU64,
    pub created_triangles: AtomicU64,
    pub stale: AtomicU64,
    pub not_bad: AtomicU64,
    pub aborts: AtomicU64,
    pub retries: AtomicU64,
    pub fallback_drains: AtomicU64,
    pub stalled: AtomicBool,
}

impl RefineStats {
    pub fn snapshot(&self) -> RefineReport {
        RefineReport {
            rounds: self.rounds.load(Ordering::Relaxed),
            schedule_tasks: self.schedule_tasks.load(Ordering::Relaxed),
            refine_tasks: self.refine_tasks.load(Ordering::Relaxed),
            inserted: self.inserted.load(Ordering::Relaxed),
            created_triangles: self.created_triangles.load(Ordering::Relaxed),
            stale: self.stale.load(Ordering::Relaxed),
            not_bad: self.not_bad.load(Ordering::Relaxed),
            aborts: self.aborts.load(Ordering::Relaxed),
            retries: self.retries.load(Ordering::Relaxed),
            fallback_drains: self.fallback_drains.load(Ordering::Relaxed),
            stalled: self.stalled.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RefineReport {
    pub rounds: u64,
    pub schedule_tasks: u64,
    pub refine_tasks: u64,
    pub inserted: u64,
    pub created_triangles: u64,
    pub stale: u64,
    pub not_bad: u64,
    pub aborts: u64,
    pub retries: u64,
    pub fallback_drains: u64,
    pub stalled: bool,
}

/// Result of one speculative refinement attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineOutcome {
    /// Cavity retriangulated; `created` new triangles exist.
    Inserted { created: usize },
    /// The element was deleted by someone else first; nothing to do.
    Stale,
    /// The element no longer violates the criteria; nothing to do.
    NotBad,
    /// Rolled back (lock conflict or concurrent restructuring); the
    /// element was re-enqueued on the caller's queue.
    Abort,
}

/// One directed edge of the cavity boundary cycle, with the triangle on
/// its far side (`NULL` on the domain boundary). `split` marks the single
/// edge the new point lies on, which gets divided instead of fanned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CavityEdge {
    pub a: VertexId,
    pub b: VertexId,
    pub outside: ElemRef,
    pub split: bool,
}

/// A cavity: the triangles whose circumcircles contain the new point,
/// its boundary cycle in counterclockwise order, and the cycle vertices.
#[derive(Debug, Clone)]
pub struct Cavity {
    pub tris: Vec<ElemRef>,
    pub cycle: Vec<CavityEdge>,
    pub verts: Vec<VertexId>,
}

const MAX_EXPANSIONS: usize = 32;

/// Walk from `from` toward `p` across shared edges until the containing
/// triangle is found. `None` when the walk hits a stale triangle, leaves
/// the domain, or exceeds its step budget (all "retry later" conditions
/// under concurrent mutation).
pub fn locate(mesh: &Mesh, from: ElemRef, p: Point) -> Option<ElemRef> {
    let mut cur = from;
    let budget = mesh.num_triangles() + 16;
    for _ in 0..budget {
        let view = mesh.tri(cur)?;
        let pts = mesh.points_of(&view);
        let mut next = None;
        for i in 0..3 {
            let (a, b) = (pts[(i + 1) % 3], pts[(i + 2) % 3]);
            if orient2d(a, b, p, mesh.eps()) == Sign::Negative {
                next = Some(view.nbr[i]);
                break;
            }
        }
        match next {
            None => return Some(cur),
            Some(n) if n.is_null() => return None,
            Some(n) => cur = n,
        }
    }
    None
}

/// Grow the cavity of `p` from the containing triangle `seed`: the
/// edge-connected set of triangles whose circumcircles contain `p`
/// (the seed unconditionally). The boundary is classified against `p`
/// and repaired where floating-point decisions left it inconsistent:
/// a vertex buried strictly inside pulls its whole ring in, and an
/// interior boundary edge collinear with `p` pulls in its far side.
/// `None` means a stale read or an unrepairable degeneracy; the caller
/// should retry.
pub fn find_cavity(mesh: &Mesh, seed: ElemRef, p: Point) -> Option<Cavity> {
    let mut tris: Vec<ElemRef> = vec![seed];
    let mut i = 0;
    while i < tris.len() {
        let view = mesh.tri(tris[i])?;
        for n in view.nbr {
            if n.is_null() || tris.contains(&n) {
                continue;
            }
            let nview = mesh.tri(n)?;
            let npts = mesh.points_of(&nview);
            if in_circle(npts[0], npts[1], npts[2], p, mesh.eps()) {
                tris.push(n);
            }
        }
        i += 1;
    }

    for _ in 0..MAX_EXPANSIONS {
        let (cycle, verts) = match cavity_boundary(mesh, &tris, p)? {
            BoundaryState::Closed { cycle, verts } => (cycle, verts),
            BoundaryState::Buried(v) => {
                // A vertex ended up strictly inside the cavity; absorb
                // its ring so the fan cannot orphan it.
                let start = tris.iter().copied().find(|&t| {
                    mesh.tri(t).is_some_and(|view| view.index_of(v).is_some())
                })?;
                let (ring, _) = mesh.ring(v, start)?;
                let before = tris.len();
                for t in ring {
                    if !tris.contains(&t) {
                        tris.push(t);
                    }
                }
                if tris.len() == before {
                    return None;
                }
                continue;
            }
            BoundaryState::GrowAcross(t) => {
                // `p` is collinear with an interior boundary edge; the
                // far triangle's circumcircle passes through `p`, so
                // take it too rather than fan a degenerate triangle.
                tris.push(t);
                continue;
            }
        };
        return Some(Cavity { tris, cycle, verts });
    }
    None
}

enum BoundaryState {
    Closed {
        cycle: Vec<CavityEdge>,
        verts: Vec<VertexId>,
    },
    Buried(VertexId),
    GrowAcross(ElemRef),
}

/// Rebuild and classify the boundary of the triangle set `tris` around
/// point `p`.
fn cavity_boundary(mesh: &Mesh, tris: &[ElemRef], p: Point) -> Option<BoundaryState> {
    // Directed boundary edges, interior on the left.
    let mut edges: Vec<CavityEdge> = Vec::new();
    let mut cavity_verts: Vec<VertexId> = Vec::new();
    for &t in tris {
        let view = mesh.tri(t)?;
        for &v in &view.v {
            if !cavity_verts.contains(&v) {
                cavity_verts.push(v);
            }
        }
        for i in 0..3 {
            let n = view.nbr[i];
            if n.is_null() || !tris.contains(&n) {
                let (a, b) = view.edge(i);
                edges.push(CavityEdge {
                    a,
                    b,
                    outside: n,
                    split: false,
                });
            }
        }
    }
    if edges.len() < 3 {
        return None;
    }

    // Classify each edge against p before walking the cycle.
    let mut split_count = 0usize;
    for e in &mut edges {
        let (pa, pb) = (mesh.point(e.a), mesh.point(e.b));
        if p.dist2(pa) == 0.0 || p.dist2(pb) == 0.0 {
            // Duplicate of an existing vertex; refuse to insert.
            return None;
        }
        match orient2d(pa, pb, p, mesh.eps()) {
            Sign::Positive => {}
            Sign::Zero => {
                if e.outside.is_null() && between(pa, pb, p) {
                    e.split = true;
                    split_count += 1;
                } else if !e.outside.is_null() {
                    return Some(BoundaryState::GrowAcross(e.outside));
                } else {
                    return None;
                }
            }
            Sign::Negative => {
                if e.outside.is_null() {
                    // p fell outside the domain side of this cavity.
                    return None;
                }
                return Some(BoundaryState::GrowAcross(e.outside));
            }
        }
    }
    if split_count > 1 {
        return None;
    }

    // Walk the directed edges into a single closed cycle, starting from
    // the smallest edge for determinism.
    let start = edges
        .iter()
        .enumerate()
        .min_by_key(|(_, e)| (e.a, e.b))
        .map(|(i, _)| i)
        .unwrap();
    let mut cycle: Vec<CavityEdge> = Vec::with_capacity(edges.len());
    let mut used = vec![false; edges.len()];
    let mut cur = start;
    loop {
        used[cur] = true;
        cycle.push(edges[cur]);
        let next_vert = edges[cur].b;
        if next_vert == edges[start].a {
            break;
        }
        let Some(next) = (0..edges.len()).find(|&k| !used[k] && edges[k].a == next_vert) else {
            return None;
        };
        cur = next;
        if cycle.len() > edges.len() {
            return None;
        }
    }
    if cycle.len() != edges.len() {
        // Disconnected boundary (pinched cavity); not retriangulable.
        return None;
    }

    // Every cavity vertex must lie on the cycle, or the fan would strand
    // it inside the new triangles.
    let cycle_verts: Vec<VertexId> = cycle.iter().map(|e| e.a).collect();
    for &v in &cavity_verts {
        if !cycle_verts.contains(&v) {
            return Some(BoundaryState::Buried(v));
        }
    }
    Some(BoundaryState::Closed {
        cycle,
        verts: cycle_verts,
    })
}

/// True when collinear `p` lies strictly between `a` and `b`.
fn between(a: Point, b: Point, p: Point) -> bool {
    let t = (p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y);
    t > 0.0 && t < a.dist2(b)
}

enum InsertError {
    /// Lost a race or a lock; worth retrying.
    Contention,
    /// The geometry refuses this point (duplicate vertex, degenerate
    /// cavity); retrying cannot help.
    Degenerate,
}

/// Insert `p` into the mesh, walking from `from`. Returns the created
/// triangles, or `None` on rollback (lock conflict, stale reads, or a
/// degenerate configuration); on `None` the mesh is untouched.
pub fn insert_point(mesh: &Mesh, from: ElemRef, p: Point, tid: usize) -> Option<Vec<ElemRef>> {
    try_insert(mesh, from, p, tid).ok()
}

fn try_insert(
    mesh: &Mesh,
    from: ElemRef,
    p: Point,
    tid: usize,
) -> Result<Vec<ElemRef>, InsertError> {
    let seed = locate(mesh, from, p).ok_or(InsertError::Contention)?;
    let cavity = find_cavity(mesh, seed, p).ok_or(InsertError::Contention)?;

    let locks: Vec<_> = cavity.verts.iter().map(|&v| mesh.vertex_lock(v)).collect();
    let held = acquire_all(&locks, tid).ok_or(InsertError::Contention)?;

    // Re-validate under the locks: every cavity triangle and every
    // outside neighbor must still be the generation we read. Vertex
    // coordinates cannot move during refinement, so unchanged generations
    // mean the cavity geometry is still exact.
    let intact = cavity.tris.iter().all(|&t| mesh.is_live(t))
        && cavity
            .cycle
            .iter()
            .all(|e| e.outside.is_null() || mesh.is_live(e.outside));
    if !intact {
        drop(held);
        return Err(InsertError::Contention);
    }

    let split = cavity.cycle.iter().any(|e| e.split);
    if split && !mesh.domain().on_boundary(p) {
        drop(held);
        return Err(InsertError::Degenerate);
    }

    // Commit: new vertex, fan triangles over every non-split cycle edge,
    // spokes between cycle-adjacent fans, then drop the old triangles.
    let vid = mesh.push_vertex(p, split);
    let m = cavity.cycle.len();
    let fans: Vec<Option<ElemRef>> = cavity
        .cycle
        .iter()
        .map(|e| {
            if e.split {
                None
            } else {
                Some(mesh.alloc_tri(tid, [e.a, e.b, vid]))
            }
        })
        .collect();
    for (k, e) in cavity.cycle.iter().enumerate() {
        let Some(fan) = fans[k] else { continue };
        if let Some(next) = fans[(k + 1) % m] {
            mesh.set_nbr(fan, 0, next);
            mesh.set_nbr(next, 1, fan);
        }
        mesh.set_nbr(fan, 2, e.outside);
        if !e.outside.is_null() {
            let oview = mesh.tri(e.outside).expect("validated neighbor vanished");
            let j = (0..3)
                .find(|&j| oview.edge(j) == (e.b, e.a))
                .expect("neighbor lost the shared edge");
            mesh.set_nbr(e.outside, j, fan);
        }
        mesh.set_hint(e.a, fan);
        mesh.set_hint(e.b, fan);
    }
    if let Some(first) = fans.iter().flatten().next() {
        mesh.set_hint(vid, *first);
    }
    for &t in &cavity.tris {
        mesh.free_tri(tid, t);
    }
    drop(held);
    Ok(fans.into_iter().flatten().collect())
}

/// Pick the refinement point for a bad triangle: its circumcenter, or
/// the midpoint of its longest edge when the circumcenter is degenerate
/// or falls outside the domain.
pub fn steiner_point(mesh: &Mesh, pts: [Point; 3]) -> Point {
    if let Some(cc) = circumcenter(pts[0], pts[1], pts[2]) {
        if cc.x.is_finite() && cc.y.is_finite() && mesh.domain().contains(cc) {
            return cc;
        }
    }
    let len = |i: usize| pts[(i + 1) % 3].dist2(pts[(i + 2) % 3]);
    let longest = (0..3).max_by(|&a, &b| len(a).total_cmp(&len(b))).unwrap();
    pts[(longest + 1) % 3].mid(pts[(longest + 2) % 3])
}

/// One speculative refinement attempt for `work.el`, running as worker
/// `tid`. New bad triangles and rolled-back elements are pushed to
/// `queues[tid]`.
pub fn refine_step(
    mesh: &Mesh,
    queues: &ThreadQueues,
    criteria: RefineCriteria,
    stats: &RefineStats,
    work: Work,
    tid: usize,
) -> RefineOutcome {
    stats.refine_tasks.fetch_add(1, Ordering::Relaxed);
    if work.attempts > 0 {
        stats.retries.fetch_add(1, Ordering::Relaxed);
    }
    let Some(view) = mesh.tri(work.el) else {
        stats.stale.fetch_add(1, Ordering::Relaxed);
        return RefineOutcome::Stale;
    };
    let pts = mesh.points_of(&view);
    if !criteria.is_bad(pts) {
        stats.not_bad.fetch_add(1, Ordering::Relaxed);
        return RefineOutcome::NotBad;
    }
    let p = steiner_point(mesh, pts);

    match try_insert(mesh, work.el, p, tid) {
        Ok(created) => {
            stats.inserted.fetch_add(1, Ordering::Relaxed);
            stats
                .created_triangles
                .fetch_add(created.len() as u64, Ordering::Relaxed);
            let n = created.len();
            for t in created {
                if let Some(v) = mesh.tri(t) {
                    if criteria.is_bad(mesh.points_of(&v)) {
                        queues.push(tid, Work::new(t));
                    }
                }
            }
            // The walk can land the cavity away from the seed in skewed
            // geometry; never drop a still-bad seed on the floor.
            if let Some(v) = mesh.tri(work.el) {
                if criteria.is_bad(mesh.points_of(&v)) {
                    queues.push(tid, Work::new(work.el));
                }
            }
            RefineOutcome::Inserted { created: n }
        }
        Err(InsertError::Contention) => {
            stats.aborts.fetch_add(1, Ordering::Relaxed);
            queues.push(
                tid,
                Work {
                    el: work.el,
                    attempts: work.attempts + 1,
                },
            );
            let mut rng = work.el.bits() ^ ((work.attempts as u64) << 40) ^ tid as u64;
            retry_backoff(&mut rng, work.attempts);
            RefineOutcome::Abort
        }
        Err(InsertError::Degenerate) => {
            // Deterministic geometry failure: retrying the same point
            // cannot succeed, so drop the element rather than spin.
            stats.aborts.fetch_add(1, Ordering::Relaxed);
            RefineOutcome::Abort
        }
    }
}

/// Scan the mesh and enqueue every bad triangle onto queue 0.
pub fn seed_bad_triangles(mesh: &Mesh, criteria: RefineCriteria, queues: &ThreadQueues) -> usize {
    let mut n = 0;
    for t in mesh.live_tris() {
        let view = mesh.tri(t).expect("seeding a quiescent mesh");
        if criteria.is_bad(mesh.points_of(&view)) {
            queues.push(0, Work::new(t));
            n += 1;
        }
    }
    n
}

/// How many consecutive zero-progress rounds before the driver drains
/// the queues itself.
const STALL_ROUNDS: u32 = 3;

/// Refine `mesh` on the work-stealing runtime until no bad triangles
/// remain. The driver seeds queue 0, then repeats rounds of one batching
/// task per queue until every queue is empty; each batching task pops at
/// most `schedule_limit` elements and spawns one refinement task per
/// element.
pub fn run_refinement(
    sched: &Arc<Scheduler>,
    mesh: &Arc<Mesh>,
    criteria: RefineCriteria,
    schedule_limit: usize,
) -> RefineReport {
    assert!(schedule_limit >= 1);
    let queues = Arc::new(ThreadQueues::new(sched.nthreads()));
    let stats = Arc::new(RefineStats::default());
    seed_bad_triangles(mesh, criteria, &queues);

    let mut stall = 0u32;
    while !queues.is_empty() {
        stats.rounds.fetch_add(1, Ordering::Relaxed);
        let before = stats.inserted.load(Ordering::Relaxed);
        let group = TaskGroup::new();
        for qi in 0..queues.num_queues() {
            let (sched2, mesh2, queues2, stats2, group2) = (
                Arc::clone(sched),
                Arc::clone(mesh),
                Arc::clone(&queues),
                Arc::clone(&stats),
                group.clone(),
            );
            sched.create_and_schedule(&group, move || {
                stats2.schedule_tasks.fetch_add(1, Ordering::Relaxed);
                for work in queues2.pop_batch(qi, schedule_limit) {
                    let (mesh3, queues3, stats3, sched3) = (
                        Arc::clone(&mesh2),
                        Arc::clone(&queues2),
                        Arc::clone(&stats2),
                        Arc::clone(&sched2),
                    );
                    sched2.create_and_schedule(&group2, move || {
                        let tid = sched3.current_thread_id().expect("refine task on worker");
                        refine_step(&mesh3, &queues3, criteria, &stats3, work, tid);
                    });
                }
            });
        }
        sched.wait_for_all(&group);

        if stats.inserted.load(Ordering::Relaxed) == before && !queues.is_empty() {
            stall += 1;
            if stall >= STALL_ROUNDS {
                drain_serially(mesh, &queues, criteria, &stats);
                break;
            }
        } else {
            stall = 0;
        }
    }
    stats.snapshot()
}

/// Refine without the runtime: one queue, FIFO order, worker id 0.
/// Deterministic for a given input mesh and criteria.
pub fn run_refinement_sequential(mesh: &Mesh, criteria: RefineCriteria) -> RefineReport {
    let queues = ThreadQueues::new(1);
    let stats = RefineStats::default();
    seed_bad_triangles(mesh, criteria, &queues);
    drain_serially(mesh, &queues, criteria, &stats);
    stats.snapshot()
}

/// Pop-and-refine until the queues are empty or a full sweep makes no
/// progress (which only happens with leaked locks or unrepairable
/// geometry; flagged as `stalled`).
fn drain_serially(
    mesh: &Mesh,
    queues: &ThreadQueues,
    criteria: RefineCriteria,
    stats: &RefineStats,
) {
    stats.fallback_drains.fetch_add(1, Ordering::Relaxed);
    let mut failures_in_a_row = 0usize;
    while !queues.is_empty() {
        for qi in 0..queues.num_queues() {
            for work in queues.pop_batch(qi, usize::MAX) {
                match refine_step(mesh, queues, criteria, stats, work, 0) {
                    RefineOutcome::Abort => failures_in_a_row += 1,
                    _ => failures_in_a_row = 0,
                }
                if failures_in_a_row > queues.total_len() + 1 {
                    stats.stalled.store(true, Ordering::Relaxed);
                    return;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::DEFAULT_EPS;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bad_triangle_by_area() {
        let mesh = Mesh::unit_square(1);
        let criteria = RefineCriteria::by_area(0.4);
        for t in mesh.live_tris() {
            let view = mesh.tri(t).unwrap();
            // Each half of the unit square has area 0.5 > 0.4.
            assert!(criteria.is_bad(mesh.points_of(&view)));
        }
        let loose = RefineCriteria::by_area(0.5);
        let view = mesh.tri(mesh.live_tris()[0]).unwrap();
        assert!(!loose.is_bad(mesh.points_of(&view)));
        // Angle bound: the right isoceles halves have a 45 degree corner.
        let angled = RefineCriteria::new(f64::INFINITY, 50.0);
        assert!(angled.is_bad(mesh.points_of(&view)));
    }

    #[test]
    fn locate_finds_containing_triangle() {
        let mesh = Mesh::unit_square(1);
        let tris = mesh.live_tris();
        // (0.8, 0.2) lies in the lower-right half (0,1,2).
        let hit = locate(&mesh, tris[1], Point::new(0.8, 0.2)).unwrap();
        assert_eq!(hit, tris[0]);
        let hit = locate(&mesh, tris[0], Point::new(0.2, 0.8)).unwrap();
        assert_eq!(hit, tris[1]);
    }

    #[test]
    fn center_cavity_covers_both_halves() {
        let mesh = Mesh::unit_square(1);
        let tris = mesh.live_tris();
        let p = Point::new(0.5, 0.5);
        let cavity = find_cavity(&mesh, tris[0], p).unwrap();
        assert_eq!(cavity.tris.len(), 2);
        assert_eq!(cavity.cycle.len(), 4);
        assert_eq!(cavity.verts.len(), 4);
        assert!(cavity.cycle.iter().all(|e| e.outside.is_null()));
        assert!(cavity.cycle.iter().all(|e| !e.split));
    }

    #[test]
    fn stale_seed_aborts_cavity() {
        let mesh = Mesh::unit_square(1);
        let t = mesh.live_tris()[0];
        mesh.free_tri(0, t);
        assert!(find_cavity(&mesh, t, Point::new(0.5, 0.5)).is_none());
        assert!(locate(&mesh, t, Point::new(0.5, 0.5)).is_none());
    }

    #[test]
    fn center_insert_deletes_two_creates_four() {
        let mesh = Mesh::unit_square(1);
        let from = mesh.live_tris()[0];
        let created = insert_point(&mesh, from, Point::new(0.5, 0.5), 0).unwrap();
        assert_eq!(created.len(), 4);
        assert_eq!(mesh.num_vertices(), 5);
        assert_eq!(mesh.num_triangles(), 4);
        let counts = mesh.validate().unwrap();
        assert_eq!(counts.boundary_edges, 4);
        mesh.delaunay_oracle(DEFAULT_EPS).unwrap();
        assert_eq!(mesh.residual_locks(), 0);
    }

    #[test]
    fn single_triangle_cavity_splits_one_into_three() {
        // Center fan: four triangles around (0.5, 0.5). A point low in
        // the bottom triangle is inside only that circumcircle.
        let mesh = Mesh::unit_square(1);
        insert_point(&mesh, mesh.live_tris()[0], Point::new(0.5, 0.5), 0).unwrap();
        let before = mesh.num_triangles();
        let created = insert_point(&mesh, mesh.live_tris()[0], Point::new(0.5, 0.2), 0).unwrap();
        assert_eq!(created.len(), 3);
        assert_eq!(mesh.num_triangles(), before + 2);
        mesh.validate().unwrap();
        mesh.delaunay_oracle(DEFAULT_EPS).unwrap();
    }

    #[test]
    fn boundary_point_splits_the_edge() {
        let mesh = Mesh::unit_square(1);
        let created = insert_point(&mesh, mesh.live_tris()[0], Point::new(0.5, 0.0), 0).unwrap();
        // Both halves deleted, three fans (the bottom edge is split).
        assert_eq!(created.len(), 3);
        let counts = mesh.validate().unwrap();
        assert_eq!(counts.triangles, 3);
        assert_eq!(counts.boundary_edges, 5);
        assert!(mesh.is_boundary(4), "split point is a boundary vertex");
        mesh.delaunay_oracle(DEFAULT_EPS).unwrap();
    }

    #[test]
    fn duplicate_point_refused() {
        let mesh = Mesh::unit_square(1);
        assert!(insert_point(&mesh, mesh.live_tris()[0], Point::new(1.0, 0.0), 0).is_none());
        mesh.validate().unwrap();
        assert_eq!(mesh.num_vertices(), 4);
    }

    #[test]
    fn held_lock_rolls_back_without_trace() {
        let mesh = Mesh::unit_square(1);
        let p = Point::new(0.5, 0.5);
        let cavity = find_cavity(&mesh, mesh.live_tris()[0], p).unwrap();
        let victim = cavity.verts[2];
        assert!(mesh.vertex_lock(victim).try_lock(77));

        let before = mesh.structural_hash();
        assert!(insert_point(&mesh, mesh.live_tris()[0], p, 0).is_none());
        assert_eq!(mesh.structural_hash(), before, "rollback left a trace");
        assert_eq!(mesh.residual_locks(), 1, "only the injected lock remains");

        mesh.vertex_lock(victim).unlock(77);
        // And the same insert succeeds once the contention is gone.
        assert!(insert_point(&mesh, mesh.live_tris()[0], p, 0).is_some());
        mesh.validate().unwrap();
    }

    #[test]
    fn random_serial_insertions_stay_delaunay() {
        let mesh = Mesh::unit_square(1);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut inserted = 0;
        while inserted < 100 {
            let p = Point::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let from = mesh.live_tris()[0];
            if insert_point(&mesh, from, p, 0).is_some() {
                inserted += 1;
            }
        }
        assert_eq!(mesh.num_vertices(), 104);
        mesh.validate().unwrap();
        mesh.delaunay_oracle(DEFAULT_EPS).unwrap();
        assert_eq!(mesh.residual_locks(), 0);
    }

    #[test]
    fn refine_step_outcomes_and_queueing() {
        let mesh = Mesh::unit_square(1);
        let queues = ThreadQueues::new(1);
        let stats = RefineStats::default();
        let criteria = RefineCriteria::by_area(0.2);

        let seeded = seed_bad_triangles(&mesh, criteria, &queues);
        assert_eq!(seeded, 2);

        let work = queues.pop_batch(0, 1)[0];
        let out = refine_step(&mesh, &queues, criteria, &stats, work, 0);
        assert!(matches!(out, RefineOutcome::Inserted { .. }));

        // The second seeded element is now stale (its triangle was part
        // of the first cavity).
        let work = queues.pop_batch(0, 1)[0];
        assert!(matches!(
            refine_step(&mesh, &queues, criteria, &stats, work, 0),
            RefineOutcome::Stale | RefineOutcome::Inserted { .. }
        ));
        assert!(stats.snapshot().inserted >= 1);
    }

    #[test]
    fn sequential_refinement_clears_all_bad_triangles() {
        let mesh = Mesh::unit_square(1);
        let criteria = RefineCriteria::by_area(0.01);
        let report = run_refinement_sequential(&mesh, criteria);
        assert!(!report.stalled);
        assert!(report.inserted > 0);
        assert_eq!(report.aborts, 0, "nothing contends in sequential mode");
        for t in mesh.live_tris() {
            let view = mesh.tri(t).unwrap();
            assert!(!criteria.is_bad(mesh.points_of(&view)));
        }
        mesh.validate().unwrap();
        mesh.delaunay_oracle(DEFAULT_EPS).unwrap();
        assert_eq!(mesh.residual_locks(), 0);
    }

    #[test]
    fn sequential_refinement_is_deterministic() {
        let export = |_| {
            let mesh = Mesh::unit_square(1);
            run_refinement_sequential(&mesh, RefineCriteria::by_area(0.005));
            mesh.export_string().unwrap()
        };
        assert_eq!(export(0), export(1));
    }

    #[test]
    fn parallel_refinement_matches_invariants() {
        let _serial = crate::testutil::serial();
        let sched = Arc::new(Scheduler::start(4).unwrap());
        let mesh = Arc::new(Mesh::unit_square(4));
        let criteria = RefineCriteria::by_area(0.002);
        let report = run_refinement(&sched, &mesh, criteria, 16);
        assert!(!report.stalled);
        assert!(report.inserted > 0);
        for t in mesh.live_tris() {
            let view = mesh.tri(t).unwrap();
            assert!(!criteria.is_bad(mesh.points_of(&view)));
        }
        mesh.validate().unwrap();
        mesh.delaunay_oracle(DEFAULT_EPS).unwrap();
        assert_eq!(mesh.residual_locks(), 0);
        sched.shutdown().unwrap();
    }

    #[test]
    fn queue_batches_respect_limit() {
        let queues = ThreadQueues::new(2);
        for i in 0..10 {
            queues.push(0, Work::new(ElemRef::from_bits(i + 1)));
        }
        assert_eq!(queues.pop_batch(0, 3).len(), 3);
        assert_eq!(queues.pop_batch(0, 100).len(), 7);
        assert_eq!(queues.pop_batch(0, 5).len(), 0);
        assert_eq!(queues.total_len(), 0);
        assert_eq!(queues.pop_batch(1, 5).len(), 0);
    }
}

//! Lock-guarded Laplacian vertex smoothing.
//!
//! Each interior vertex is speculatively pulled toward the centroid of
//! its neighbors. The operation locks the vertex and its whole one-ring
//! (all-or-nothing), re-reads the ring under the locks, and accepts the
//! move only when the worst incident triangle strictly improves and no
//! triangle inverts; otherwise the vertex stays put. A failed lock
//! acquisition counts as an abort and the vertex is simply skipped for
//! the rest of the pass.
//!
//! Quality is the normalized mean-ratio: `4·√3·area / Σ side²`, which is
//! 1 for an equilateral triangle and 0 for a degenerate or inverted one.
//! Because an accepted move strictly raises the minimum quality of the
//! triangles it touches and leaves every other triangle alone, the global
//! minimum is non-decreasing across passes, serial or parallel.

use crate::frontend::{task_for_index, Backend, ForError, Strategy};
use crate::geom::{orient2d, tri_area, Point, Sign};
use crate::locks::acquire_all;
use crate::mesh::{Mesh, VertexId};
use std::sync::atomic::{AtomicU64, Ordering};

/// Grain size used by the benchmark driver when none is given.
pub const DEFAULT_SMOOTH_GRAINSIZE: usize = 64;

/// Normalized mean-ratio quality: 1 for equilateral, 0 for degenerate
/// or inverted triangles.
pub fn mean_ratio(a: Point, b: Point, c: Point) -> f64 {
    let area = tri_area(a, b, c);
    if area <= 0.0 {
        return 0.0;
    }
    let l2 = a.dist2(b) + b.dist2(c) + c.dist2(a);
    if l2 == 0.0 {
        return 0.0;
    }
    4.0 * 3.0_f64.sqrt() * area / l2
}

/// Smallest mean-ratio over all live triangles (1.0 for an empty mesh).
pub fn min_quality(mesh: &Mesh) -> f64 {
    let mut min = 1.0_f64;
    for t in mesh.live_tris() {
        let view = mesh.tri(t).expect("quality sweep on quiescent mesh");
        let [a, b, c] = mesh.points_of(&view);
        min = min.min(mean_ratio(a, b, c));
    }
    min
}

/// Arithmetic mean of the mean-ratio over all live triangles.
pub fn mean_quality(mesh: &Mesh) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for t in mesh.live_tris() {
        let view = mesh.tri(t).expect("quality sweep on quiescent mesh");
        let [a, b, c] = mesh.points_of(&view);
        sum += mean_ratio(a, b, c);
        n += 1;
    }
    if n == 0 {
        1.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothOutcome {
    /// The vertex moved to its neighbor centroid.
    Improved,
    /// Moving would not strictly improve the worst incident triangle
    /// (or would invert one, or the vertex is pinned); nothing changed.
    Rejected,
    /// Lock conflict or stale read; nothing changed.
    Abort,
}

/// Try to move `v` to the centroid of its ring neighbors, as worker
/// `tid`. Boundary vertices never move.
pub fn smooth_vertex(mesh: &Mesh, v: VertexId, tid: usize) -> SmoothOutcome {
    if mesh.is_boundary(v) {
        return SmoothOutcome::Rejected;
    }
    let hint = mesh.hint(v);
    if hint.is_null() {
        return SmoothOutcome::Abort;
    }
    // Speculative pass: discover which vertices to lock.
    let Some((_, ring_verts)) = mesh.ring(v, hint) else {
        return SmoothOutcome::Abort;
    };
    let mut locks = vec![mesh.vertex_lock(v)];
    locks.extend(ring_verts.iter().map(|&u| mesh.vertex_lock(u)));
    let Some(held) = acquire_all(&locks, tid) else {
        return SmoothOutcome::Abort;
    };

    // Re-walk under the locks; a changed ring means we raced a
    // structural operation and must retry later.
    let Some((ring_tris, ring_now)) = mesh.ring(v, hint) else {
        drop(held);
        return SmoothOutcome::Abort;
    };
    if ring_now != ring_verts {
        drop(held);
        return SmoothOutcome::Abort;
    }

    let old = mesh.point(v);
    let candidate = {
        let (sx, sy) = ring_now
            .iter()
            .fold((0.0, 0.0), |(sx, sy), &u| {
                let p = mesh.point(u);
                (sx + p.x, sy + p.y)
            });
        Point::new(sx / ring_now.len() as f64, sy / ring_now.len() as f64)
    };

    // Quality of the ring with v at `at`.
    let ring_min = |at: Point| -> f64 {
        let mut min = f64::INFINITY;
        for &t in &ring_tris {
            let view = mesh.tri(t).expect("locked ring triangle vanished");
            let i = view.index_of(v).expect("ring triangle lost its hub");
            let mut pts = mesh.points_of(&view);
            pts[i] = at;
            min = min.min(mean_ratio(pts[0], pts[1], pts[2]));
        }
        min
    };
    let inverts = |at: Point| -> bool {
        ring_tris.iter().any(|&t| {
            let view = mesh.tri(t).expect("locked ring triangle vanished");
            let i = view.index_of(v).expect("ring triangle lost its hub");
            let mut pts = mesh.points_of(&view);
            pts[i] = at;
            orient2d(pts[0], pts[1], pts[2], mesh.eps()) != Sign::Positive
        })
    };

    if inverts(candidate) || ring_min(candidate) <= ring_min(old) {
        drop(held);
        return SmoothOutcome::Rejected;
    }
    mesh.set_point(v, candidate);
    drop(held);
    SmoothOutcome::Improved
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SmoothReport {
    pub improved: u64,
    pub rejected: u64,
    pub aborted: u64,
    pub boundary_skipped: u64,
    /// Minimum mean-ratio over the mesh after the pass.
    pub min_quality: f64,
}

/// One smoothing sweep over every vertex, parallelized with the given
/// loop strategy. Aborted vertices are skipped for the rest of the pass.
pub fn smooth_pass(
    backend: Backend<'_>,
    strategy: Strategy,
    grainsize: usize,
    mesh: &Mesh,
) -> Result<SmoothReport, ForError> {
    let improved = AtomicU64::new(0);
    let rejected = AtomicU64::new(0);
    let aborted = AtomicU64::new(0);
    let boundary = AtomicU64::new(0);
    task_for_index(backend, strategy, grainsize, mesh.num_vertices(), |i| {
        let v = i as VertexId;
        if mesh.is_boundary(v) {
            boundary.fetch_add(1, Ordering::Relaxed);
            return;
        }
        let tid = match backend {
            Backend::WorkStealing(sched) => sched.current_thread_id().unwrap_or(0),
            Backend::Sequential => 0,
        };
        let counter = match smooth_vertex(mesh, v, tid) {
            SmoothOutcome::Improved => &improved,
            SmoothOutcome::Rejected => &rejected,
            SmoothOutcome::Abort => &aborted,
        };
        counter.fetch_add(1, Ordering::Relaxed);
    })?;
    Ok(SmoothReport {
        improved: improved.into_inner(),
        rejected: rejected.into_inner(),
        aborted: aborted.into_inner(),
        boundary_skipped: boundary.into_inner(),
        min_quality: min_quality(mesh),
    })
}

/// Run `passes` smoothing sweeps and report each one.
pub fn run_smoothing(
    backend: Backend<'_>,
    strategy: Strategy,
    grainsize: usize,
    mesh: &Mesh,
    passes: usize,
) -> Result<Vec<SmoothReport>, ForError> {
    (0..passes)
        .map(|_| smooth_pass(backend, strategy, grainsize, mesh))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::DEFAULT_EPS;
    use crate::refine::{run_refinement_sequential, RefineCriteria};
    use crate::scheduler::Scheduler;

    const SQRT3_OVER_2: f64 = 0.8660254037844386;

    #[test]
    fn mean_ratio_reference_values() {
        let eq = mean_ratio(
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.5, 3.0_f64.sqrt() / 2.0),
        );
        assert!((eq - 1.0).abs() < 1e-12, "equilateral is 1, got {eq}");

        let right = mean_ratio(
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        );
        assert!(
            (right - SQRT3_OVER_2).abs() < 1e-12,
            "right isoceles is sqrt(3)/2, got {right}"
        );

        let flat = mean_ratio(
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.0),
        );
        assert_eq!(flat, 0.0);

        let inverted = mean_ratio(
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 0.0),
        );
        assert_eq!(inverted, 0.0);
    }

    /// Unit square fanned around an off-center interior vertex.
    fn skewed_fan() -> (Mesh, VertexId) {
        let mesh = Mesh::unit_square(1);
        let created =
            crate::refine::insert_point(&mesh, mesh.live_tris()[0], Point::new(0.7, 0.3), 0)
                .unwrap();
        assert_eq!(created.len(), 4);
        (mesh, 4)
    }

    #[test]
    fn smoothing_centers_a_skewed_fan() {
        let (mesh, v) = skewed_fan();
        let before = min_quality(&mesh);
        assert_eq!(smooth_vertex(&mesh, v, 0), SmoothOutcome::Improved);
        assert_eq!(mesh.point(v), Point::new(0.5, 0.5), "corner centroid");
        assert!(min_quality(&mesh) > before);
        mesh.validate().unwrap();
        assert_eq!(mesh.residual_locks(), 0);

        // Already at the centroid: no strict improvement possible.
        assert_eq!(smooth_vertex(&mesh, v, 0), SmoothOutcome::Rejected);
        assert_eq!(mesh.point(v), Point::new(0.5, 0.5));
    }

    #[test]
    fn boundary_vertices_are_pinned() {
        let (mesh, _) = skewed_fan();
        let before = mesh.structural_hash();
        for corner in 0..4 {
            assert_eq!(smooth_vertex(&mesh, corner, 0), SmoothOutcome::Rejected);
        }
        assert_eq!(mesh.structural_hash(), before);
    }

    #[test]
    fn held_ring_lock_aborts_cleanly() {
        let (mesh, v) = skewed_fan();
        let before = mesh.structural_hash();
        assert!(mesh.vertex_lock(2).try_lock(9));
        assert_eq!(smooth_vertex(&mesh, v, 0), SmoothOutcome::Abort);
        assert_eq!(mesh.structural_hash(), before, "abort left a trace");
        mesh.vertex_lock(2).unlock(9);
        assert_eq!(smooth_vertex(&mesh, v, 0), SmoothOutcome::Improved);
    }

    #[test]
    fn inverting_centroid_is_rejected() {
        // Concave ring: the neighbor centroid of v falls on the wrong
        // side of the (3, 0) edge, which would invert that triangle.
        let text = "5 4 4\n\
                    0 0 0\n\
                    1 4 0\n\
                    2 4 4\n\
                    3 2.4 1\n\
                    4 2.4 0.8\n\
                    0 0 1 4\n\
                    1 1 2 4\n\
                    2 2 3 4\n\
                    3 3 0 4\n";
        let mesh = Mesh::import(text.as_bytes(), DEFAULT_EPS).unwrap();
        let before = mesh.point(4);
        assert_eq!(smooth_vertex(&mesh, 4, 0), SmoothOutcome::Rejected);
        assert_eq!(mesh.point(4), before, "rejected move must not apply");
        mesh.validate().unwrap();
    }

    /// Refining the bare unit square yields a perfectly regular grid
    /// with nothing to smooth, so seed it with random interior points
    /// first to give the passes real work.
    fn irregular_mesh() -> Mesh {
        use rand::{Rng, SeedableRng};
        let mesh = Mesh::unit_square(4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut placed = 0;
        while placed < 40 {
            let p = Point::new(rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95));
            if crate::refine::insert_point(&mesh, mesh.live_tris()[0], p, 0).is_some() {
                placed += 1;
            }
        }
        run_refinement_sequential(&mesh, RefineCriteria::by_area(0.01));
        mesh
    }

    #[test]
    fn sequential_passes_monotone_and_deterministic() {
        let run = || {
            let mesh = irregular_mesh();
            let reports = run_smoothing(
                Backend::Sequential,
                Strategy::Sequential,
                DEFAULT_SMOOTH_GRAINSIZE,
                &mesh,
                3,
            )
            .unwrap();
            (mesh.export_string().unwrap(), reports)
        };
        let (export_a, reports) = run();
        let (export_b, _) = run();
        assert_eq!(export_a, export_b, "sequential smoothing must be bit-stable");

        let mut last = 0.0;
        for r in &reports {
            assert!(r.min_quality >= last, "quality regressed: {reports:?}");
            last = r.min_quality;
            assert_eq!(r.aborted, 0, "nothing contends sequentially");
        }
        assert!(reports[0].improved > 0);
    }

    #[test]
    fn parallel_pass_improves_without_inversion() {
        let _serial = crate::testutil::serial();
        let mesh = irregular_mesh();
        let mut floor = min_quality(&mesh);
        let sched = Scheduler::start(4).unwrap();
        let mut improved_total = 0;
        for strategy in [Strategy::Flat, Strategy::TwoLevel, Strategy::Hierarchical] {
            let report = smooth_pass(
                Backend::WorkStealing(&sched),
                strategy,
                DEFAULT_SMOOTH_GRAINSIZE,
                &mesh,
            )
            .unwrap();
            assert!(report.min_quality >= floor, "quality regressed under {strategy:?}");
            floor = report.min_quality;
            improved_total += report.improved;
            assert_eq!(
                (report.boundary_skipped + report.improved + report.rejected + report.aborted)
                    as usize,
                mesh.num_vertices()
            );
        }
        assert!(improved_total > 0);
        mesh.validate().unwrap();
        assert_eq!(mesh.residual_locks(), 0);
        sched.shutdown().unwrap();
    }
}

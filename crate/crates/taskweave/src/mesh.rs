//! Triangle mesh shared between concurrent speculative tasks.
//!
//! Storage is split by mutation pattern:
//!
//! * Vertices are append-only. Slabs never move, so a `VertexId` resolves
//!   to a stable address forever. Coordinates are atomic words because
//!   smoothing rewrites them in place (under the vertex's [`SpecLock`])
//!   while other tasks read them speculatively.
//! * Triangles live in a generation-tagged [`Pool`]: refinement deletes
//!   and creates them constantly, and stale [`ElemRef`]s held by other
//!   tasks must fail loudly instead of resolving to a recycled slot.
//!
//! Readers that traverse the mesh without locks take [`Mesh::tri`]
//! snapshots, which re-validate the generation after reading, and treat
//! `None` as "retry or abort". Writers only mutate while holding every
//! affected vertex lock.
//!
//! The mesh ships its own auditors: structural [`Mesh::validate`]
//! (adjacency symmetry, orientation, edge/Euler counts), the brute-force
//! [`Mesh::delaunay_oracle`], a lock [`Mesh::residual_locks`] scan, and an
//! order-independent [`Mesh::structural_hash`] used by abort-atomicity
//! checks. Export/import is a plain text format: header `V T B`, vertex
//! lines `id x y`, triangle lines `id v0 v1 v2`.

use crate::geom::{in_circle, orient2d_raw, Point, DEFAULT_EPS};
use crate::locks::SpecLock;
use crate::pool::{ElemRef, Pool};
use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU32, AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use thiserror::Error;

pub type VertexId = u32;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("domain rectangle is degenerate")]
    DegenerateDomain,
    #[error("mesh invariant violated: {0}")]
    Invalid(String),
    #[error("bad mesh file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Axis-aligned domain rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(min: Point, max: Point) -> Self {
        Rect { min, max }
    }

    pub fn unit_square() -> Self {
        Rect::new(Point::new(0.0, 0.0), Point::new(1.0, 1.0))
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// True when `p` lies on the rectangle's outline.
    pub fn on_boundary(&self, p: Point) -> bool {
        self.contains(p)
            && (p.x == self.min.x || p.x == self.max.x || p.y == self.min.y || p.y == self.max.y)
    }
}

struct Vertex {
    x: AtomicU64,
    y: AtomicU64,
    lock: SpecLock,
    boundary: bool,
    /// Some incident triangle (ElemRef bits), kept fresh by writers that
    /// hold the vertex lock; advisory for readers.
    hint: AtomicU64,
}

const VSLAB_BASE: u32 = 64;
const VSPINE: usize = 20;

fn vslab_locate(index: u32) -> (usize, usize) {
    let j = index / VSLAB_BASE + 1;
    let slab = (31 - j.leading_zeros()) as usize;
    (slab, (index - VSLAB_BASE * ((1 << slab) - 1)) as usize)
}

fn vslab_len(slab: usize) -> usize {
    (VSLAB_BASE << slab) as usize
}

/// Append-only vertex storage with stable addresses.
struct VertexArena {
    slabs: [std::sync::atomic::AtomicPtr<Vertex>; VSPINE],
    len: AtomicUsize,
    grow: Mutex<()>,
}

unsafe impl Send for VertexArena {}
unsafe impl Sync for VertexArena {}

impl VertexArena {
    fn new() -> Self {
        VertexArena {
            slabs: std::array::from_fn(|_| {
                std::sync::atomic::AtomicPtr::new(std::ptr::null_mut())
            }),
            len: AtomicUsize::new(0),
            grow: Mutex::new(()),
        }
    }

    fn len(&self) -> usize {
        self.len.load(Ordering::Acquire)
    }

    fn push(&self, p: Point, boundary: bool) -> VertexId {
        let _guard = self.grow.lock().unwrap();
        let index = self.len.load(Ordering::Relaxed);
        assert!(index < u32::MAX as usize, "vertex arena exhausted");
        let (slab, offset) = vslab_locate(index as u32);
        let mut base = self.slabs[slab].load(Ordering::Relaxed);
        if base.is_null() {
            let layout = std::alloc::Layout::array::<Vertex>(vslab_len(slab)).unwrap();
            base = unsafe { std::alloc::alloc(layout) as *mut Vertex };
            assert!(!base.is_null(), "vertex slab allocation failed");
            self.slabs[slab].store(base, Ordering::Release);
        }
        unsafe {
            base.add(offset).write(Vertex {
                x: AtomicU64::new(p.x.to_bits()),
                y: AtomicU64::new(p.y.to_bits()),
                lock: SpecLock::new(),
                boundary,
                hint: AtomicU64::new(ElemRef::NULL.bits()),
            });
        }
        // Publish after the slot is fully written.
        self.len.store(index + 1, Ordering::Release);
        index as VertexId
    }

    fn get(&self, v: VertexId) -> &Vertex {
        debug_assert!((v as usize) < self.len(), "vertex id out of range");
        let (slab, offset) = vslab_locate(v);
        let base = self.slabs[slab].load(Ordering::Acquire);
        unsafe { &*base.add(offset) }
    }
}

impl Drop for VertexArena {
    fn drop(&mut self) {
        // Vertex has no heap payload, so slabs are freed without dropping
        // individual slots.
        for (k, slab) in self.slabs.iter().enumerate() {
            let ptr = slab.load(Ordering::Relaxed);
            if !ptr.is_null() {
                let layout = std::alloc::Layout::array::<Vertex>(vslab_len(k)).unwrap();
                unsafe { std::alloc::dealloc(ptr as *mut u8, layout) };
            }
        }
    }
}

/// Pool payload of one triangle: vertex ids and, per edge, the neighbor
/// across it. `nbr[i]` is the triangle across the edge opposite `v[i]`,
/// i.e. the edge `(v[i+1], v[i+2])`; [`ElemRef::NULL`] marks the domain
/// boundary.
#[derive(Default)]
pub struct Tri {
    v: [AtomicU32; 3],
    nbr: [AtomicU64; 3],
}

/// Consistent snapshot of one triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriView {
    pub v: [VertexId; 3],
    pub nbr: [ElemRef; 3],
}

impl TriView {
    /// Local index of vertex `v`, if present.
    pub fn index_of(&self, v: VertexId) -> Option<usize> {
        self.v.iter().position(|&x| x == v)
    }

    /// The directed edge opposite local index `i`: `(v[i+1], v[i+2])`.
    pub fn edge(&self, i: usize) -> (VertexId, VertexId) {
        (self.v[(i + 1) % 3], self.v[(i + 2) % 3])
    }
}

pub struct Mesh {
    domain: Rect,
    eps: f64,
    verts: VertexArena,
    tris: Pool<Tri>,
}

impl Mesh {
    /// Initial triangulation of `domain`: its four corners and two
    /// triangles along the main diagonal.
    pub fn init(domain: Rect, shards: usize, eps: f64) -> Result<Mesh, MeshError> {
        if !(domain.width() > 0.0 && domain.height() > 0.0) {
            return Err(MeshError::DegenerateDomain);
        }
        let mesh = Mesh {
            domain,
            eps,
            verts: VertexArena::new(),
            tris: Pool::new(shards),
        };
        let c0 = mesh.push_vertex(domain.min, true);
        let c1 = mesh.push_vertex(Point::new(domain.max.x, domain.min.y), true);
        let c2 = mesh.push_vertex(domain.max, true);
        let c3 = mesh.push_vertex(Point::new(domain.min.x, domain.max.y), true);

        let t0 = mesh.alloc_tri(0, [c0, c1, c2]);
        let t1 = mesh.alloc_tri(0, [c0, c2, c3]);
        // Shared diagonal (c0, c2) is opposite c1 in t0 and opposite c3 in t1.
        mesh.set_nbr(t0, 1, t1);
        mesh.set_nbr(t1, 2, t0);
        for (v, t) in [(c0, t0), (c1, t0), (c2, t1), (c3, t1)] {
            mesh.set_hint(v, t);
        }
        Ok(mesh)
    }

    /// Initial unit-square mesh, the reference input of the test suites.
    pub fn unit_square(shards: usize) -> Mesh {
        Mesh::init(Rect::unit_square(), shards, DEFAULT_EPS).unwrap()
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn num_vertices(&self) -> usize {
        self.verts.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.tris.stats().live as usize
    }

    pub fn push_vertex(&self, p: Point, boundary: bool) -> VertexId {
        self.verts.push(p, boundary)
    }

    pub fn point(&self, v: VertexId) -> Point {
        let vert = self.verts.get(v);
        Point::new(
            f64::from_bits(vert.x.load(Ordering::Relaxed)),
            f64::from_bits(vert.y.load(Ordering::Relaxed)),
        )
    }

    /// Move a vertex. Caller must hold the vertex's lock (and its ring's,
    /// if triangle qualities are being preserved).
    pub fn set_point(&self, v: VertexId, p: Point) {
        let vert = self.verts.get(v);
        vert.x.store(p.x.to_bits(), Ordering::Relaxed);
        vert.y.store(p.y.to_bits(), Ordering::Relaxed);
    }

    pub fn is_boundary(&self, v: VertexId) -> bool {
        self.verts.get(v).boundary
    }

    pub fn vertex_lock(&self, v: VertexId) -> &SpecLock {
        &self.verts.get(v).lock
    }

    /// Advisory incident triangle of `v`.
    pub fn hint(&self, v: VertexId) -> ElemRef {
        ElemRef::from_bits(self.verts.get(v).hint.load(Ordering::Acquire))
    }

    pub fn set_hint(&self, v: VertexId, t: ElemRef) {
        self.verts.get(v).hint.store(t.bits(), Ordering::Release);
    }

    /// New triangle with the given vertices and boundary-sentinel
    /// neighbors. Wire adjacency with [`Mesh::set_nbr`] before exposing
    /// the reference to other tasks.
    pub fn alloc_tri(&self, tid: usize, v: [VertexId; 3]) -> ElemRef {
        let (r, tri) = self.tris.alloc(tid);
        for i in 0..3 {
            tri.v[i].store(v[i], Ordering::Relaxed);
            tri.nbr[i].store(ElemRef::NULL.bits(), Ordering::Relaxed);
        }
        r
    }

    pub fn free_tri(&self, tid: usize, t: ElemRef) {
        self.tris.free(tid, t);
    }

    pub fn set_nbr(&self, t: ElemRef, i: usize, n: ElemRef) {
        let tri = self.tris.get(t).expect("set_nbr on stale triangle");
        tri.nbr[i].store(n.bits(), Ordering::Release);
    }

    /// Snapshot of a triangle, or `None` when `t` is stale. The
    /// generation is re-checked after the fields are read, so a `Some`
    /// snapshot is internally consistent even against concurrent
    /// delete-and-reuse.
    pub fn tri(&self, t: ElemRef) -> Option<TriView> {
        let tri = self.tris.get(t)?;
        let view = TriView {
            v: [
                tri.v[0].load(Ordering::Relaxed),
                tri.v[1].load(Ordering::Relaxed),
                tri.v[2].load(Ordering::Relaxed),
            ],
            nbr: [
                ElemRef::from_bits(tri.nbr[0].load(Ordering::Acquire)),
                ElemRef::from_bits(tri.nbr[1].load(Ordering::Acquire)),
                ElemRef::from_bits(tri.nbr[2].load(Ordering::Acquire)),
            ],
        };
        if self.tris.is_live(t) {
            Some(view)
        } else {
            None
        }
    }

    pub fn is_live(&self, t: ElemRef) -> bool {
        self.tris.is_live(t)
    }

    pub fn points_of(&self, view: &TriView) -> [Point; 3] {
        [
            self.point(view.v[0]),
            self.point(view.v[1]),
            self.point(view.v[2]),
        ]
    }

    /// Live triangle references in deterministic (pool) order.
    pub fn live_tris(&self) -> Vec<ElemRef> {
        self.tris.live_refs()
    }

    /// Ordered triangles around an interior vertex, starting from the
    /// incident triangle `start`. Returns the ring triangles and the ring
    /// vertices (one per triangle, in walk order). `None` when the walk
    /// hits a stale triangle, a triangle not containing `v`, or the domain
    /// boundary (open ring).
    pub fn ring(&self, v: VertexId, start: ElemRef) -> Option<(Vec<ElemRef>, Vec<VertexId>)> {
        let mut tris = Vec::with_capacity(8);
        let mut ring = Vec::with_capacity(8);
        let mut cur = start;
        loop {
            let view = self.tri(cur)?;
            let i = view.index_of(v)?;
            tris.push(cur);
            ring.push(view.v[(i + 1) % 3]);
            // Cross the edge (v, v[i+1]), which is opposite v[i+2].
            let next = view.nbr[(i + 2) % 3];
            if next.is_null() {
                return None;
            }
            if next == start {
                return Some((tris, ring));
            }
            if tris.len() > self.num_triangles() {
                // Inconsistent adjacency under concurrent mutation.
                return None;
            }
            cur = next;
        }
    }

    /// Count of vertex locks still held. Zero on any quiescent, correctly
    /// rolled-back mesh; nonzero means a task leaked a lock.
    pub fn residual_locks(&self) -> usize {
        (0..self.verts.len() as u32)
            .filter(|&v| self.verts.get(v).lock.is_locked())
            .count()
    }

    /// Order-independent digest of the full structural state: vertex
    /// coordinates and flags, live triangle ids, their vertex triples and
    /// adjacency. Any mutation (insert, move, retriangulation) changes it;
    /// an aborted speculative operation must not.
    pub fn structural_hash(&self) -> u64 {
        let mut h = crate::util::mix_u64(&[
            self.verts.len() as u64,
            self.tris.stats().live,
        ]);
        for v in 0..self.verts.len() as u32 {
            let vert = self.verts.get(v);
            h = h.wrapping_add(crate::util::mix_u64(&[
                v as u64,
                vert.x.load(Ordering::Relaxed),
                vert.y.load(Ordering::Relaxed),
                vert.boundary as u64,
            ]));
        }
        self.tris.for_each_live(|r, tri| {
            h = h.wrapping_add(crate::util::mix_u64(&[
                r.bits(),
                tri.v[0].load(Ordering::Relaxed) as u64,
                tri.v[1].load(Ordering::Relaxed) as u64,
                tri.v[2].load(Ordering::Relaxed) as u64,
                tri.nbr[0].load(Ordering::Relaxed),
                tri.nbr[1].load(Ordering::Relaxed),
                tri.nbr[2].load(Ordering::Relaxed),
            ]));
        });
        h
    }

    /// Structural audit: vertex ids in range, triangles positively
    /// oriented, adjacency symmetric, every edge on at most two triangles,
    /// `2E = 3T + B` and the Euler relation `V - E + T = 1` for the
    /// triangulated rectangle.
    pub fn validate(&self) -> Result<MeshCounts, MeshError> {
        let nv = self.verts.len() as u32;
        let mut edges: HashMap<(u32, u32), u32> = HashMap::new();
        let mut tri_count = 0usize;
        let mut boundary = 0usize;

        for t in self.live_tris() {
            tri_count += 1;
            let view = self.tri(t).expect("live triangle vanished mid-audit");
            for &v in &view.v {
                if v >= nv {
                    return Err(MeshError::Invalid(format!(
                        "triangle {t:?} references vertex {v} out of range"
                    )));
                }
            }
            if view.v[0] == view.v[1] || view.v[1] == view.v[2] || view.v[0] == view.v[2] {
                return Err(MeshError::Invalid(format!(
                    "triangle {t:?} has repeated vertices {:?}",
                    view.v
                )));
            }
            let [a, b, c] = self.points_of(&view);
            if orient2d_raw(a, b, c) <= 0.0 {
                return Err(MeshError::Invalid(format!(
                    "triangle {t:?} {:?} is not counterclockwise",
                    view.v
                )));
            }
            for i in 0..3 {
                let (ea, eb) = view.edge(i);
                *edges.entry((ea.min(eb), ea.max(eb))).or_insert(0) += 1;
                let n = view.nbr[i];
                if n.is_null() {
                    boundary += 1;
                    continue;
                }
                let Some(nview) = self.tri(n) else {
                    return Err(MeshError::Invalid(format!(
                        "triangle {t:?} edge {i} points at stale neighbor {n:?}"
                    )));
                };
                // The neighbor must carry the same edge, reversed, and
                // point back at us across it.
                let back = (0..3).find(|&j| {
                    let (na, nb) = nview.edge(j);
                    (na, nb) == (eb, ea)
                });
                match back {
                    Some(j) if nview.nbr[j] == t => {}
                    _ => {
                        return Err(MeshError::Invalid(format!(
                            "adjacency between {t:?} and {n:?} is not symmetric"
                        )));
                    }
                }
            }
        }

        if let Some((&(a, b), &count)) = edges.iter().find(|(_, &c)| c > 2) {
            return Err(MeshError::Invalid(format!(
                "edge ({a},{b}) is shared by {count} triangles"
            )));
        }
        let e = edges.len();
        let single: usize = edges.values().filter(|&&c| c == 1).count();
        if single != boundary {
            return Err(MeshError::Invalid(format!(
                "boundary sentinel count {boundary} != single-sided edge count {single}"
            )));
        }
        if 2 * e != 3 * tri_count + boundary {
            return Err(MeshError::Invalid(format!(
                "edge balance broken: 2E={} vs 3T+B={}",
                2 * e,
                3 * tri_count + boundary
            )));
        }
        let euler = nv as i64 - e as i64 + tri_count as i64;
        if euler != 1 {
            return Err(MeshError::Invalid(format!(
                "Euler relation V-E+T = {euler}, expected 1"
            )));
        }
        Ok(MeshCounts {
            vertices: nv as usize,
            triangles: tri_count,
            edges: e,
            boundary_edges: boundary,
        })
    }

    /// Brute-force Delaunay audit: no vertex lies strictly inside any
    /// triangle's circumcircle, at predicate tolerance `eps`.
    pub fn delaunay_oracle(&self, eps: f64) -> Result<(), MeshError> {
        let nv = self.verts.len() as u32;
        for t in self.live_tris() {
            let view = self.tri(t).expect("live triangle vanished mid-audit");
            let [a, b, c] = self.points_of(&view);
            for v in 0..nv {
                if view.v.contains(&v) {
                    continue;
                }
                if in_circle(a, b, c, self.point(v), eps) {
                    return Err(MeshError::Invalid(format!(
                        "vertex {v} lies inside the circumcircle of {:?}",
                        view.v
                    )));
                }
            }
        }
        Ok(())
    }

    /// Write the mesh in the plain text format (`V T B` header, `id x y`
    /// vertex lines, `id v0 v1 v2` triangle lines). Deterministic: vertex
    /// order is creation order, triangle order is pool order.
    pub fn export_to(&self, w: &mut impl Write) -> Result<(), MeshError> {
        let counts = self.validate()?;
        writeln!(
            w,
            "{} {} {}",
            counts.vertices, counts.triangles, counts.boundary_edges
        )?;
        for v in 0..counts.vertices as u32 {
            let p = self.point(v);
            writeln!(w, "{} {} {}", v, p.x, p.y)?;
        }
        let mut next = 0usize;
        for t in self.live_tris() {
            let view = self.tri(t).unwrap();
            writeln!(w, "{} {} {} {}", next, view.v[0], view.v[1], view.v[2])?;
            next += 1;
        }
        Ok(())
    }

    pub fn export_string(&self) -> Result<String, MeshError> {
        let mut buf = Vec::new();
        self.export_to(&mut buf)?;
        Ok(String::from_utf8(buf).expect("mesh export is ASCII"))
    }

    /// Parse a mesh in the export format and rebuild adjacency from the
    /// triangle soup. Boundary vertices are inferred from single-sided
    /// edges.
    pub fn import(r: impl BufRead, eps: f64) -> Result<Mesh, MeshError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| MeshError::Format("empty file".into()))??;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|tok| tok.parse().map_err(|_| bad_token(&header)))
            .collect::<Result<_, _>>()?;
        let [nv, nt, nb] = head[..] else {
            return Err(MeshError::Format(format!(
                "header must be 'V T B', got '{header}'"
            )));
        };

        let mut points: Vec<Option<Point>> = vec![None; nv];
        for _ in 0..nv {
            let line = lines
                .next()
                .ok_or_else(|| MeshError::Format("truncated vertex section".into()))??;
            let tok: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad_token(&line)))
                .collect::<Result<_, _>>()?;
            let [id, x, y] = tok[..] else {
                return Err(MeshError::Format(format!("bad vertex line '{line}'")));
            };
            let id = id as usize;
            if id >= nv || points[id].is_some() {
                return Err(MeshError::Format(format!(
                    "vertex id {id} duplicate or out of range"
                )));
            }
            points[id] = Some(Point::new(x, y));
        }
        let mut tris: Vec<[u32; 3]> = Vec::with_capacity(nt);
        for _ in 0..nt {
            let line = lines
                .next()
                .ok_or_else(|| MeshError::Format("truncated triangle section".into()))??;
            let tok: Vec<u32> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad_token(&line)))
                .collect::<Result<_, _>>()?;
            let [_, v0, v1, v2] = tok[..] else {
                return Err(MeshError::Format(format!("bad triangle line '{line}'")));
            };
            for v in [v0, v1, v2] {
                if v as usize >= nv {
                    return Err(MeshError::Format(format!(
                        "triangle references vertex {v} out of range"
                    )));
                }
            }
            tris.push([v0, v1, v2]);
        }

        // Undirected edge -> incident parsed triangles.
        let mut edge_tris: HashMap<(u32, u32), Vec<(usize, usize)>> = HashMap::new();
        for (ti, t) in tris.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = (t[(i + 1) % 3], t[(i + 2) % 3]);
                edge_tris
                    .entry((a.min(b), a.max(b)))
                    .or_default()
                    .push((ti, i));
            }
        }
        let mut is_boundary = vec![false; nv];
        let mut boundary_edges = 0usize;
        for (&(a, b), inc) in &edge_tris {
            match inc.len() {
                1 => {
                    boundary_edges += 1;
                    is_boundary[a as usize] = true;
                    is_boundary[b as usize] = true;
                }
                2 => {}
                n => {
                    return Err(MeshError::Format(format!(
                        "edge ({a},{b}) is shared by {n} triangles"
                    )));
                }
            }
        }
        if boundary_edges != nb {
            return Err(MeshError::Format(format!(
                "header claims {nb} boundary edges, found {boundary_edges}"
            )));
        }

        let points: Vec<Point> = points
            .into_iter()
            .map(|p| p.ok_or_else(|| MeshError::Format("missing vertex id".into())))
            .collect::<Result<_, _>>()?;
        let (min, max) = points.iter().fold(
            (
                Point::new(f64::INFINITY, f64::INFINITY),
                Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
            ),
            |(lo, hi), p| {
                (
                    Point::new(lo.x.min(p.x), lo.y.min(p.y)),
                    Point::new(hi.x.max(p.x), hi.y.max(p.y)),
                )
            },
        );

        let mesh = Mesh {
            domain: Rect::new(min, max),
            eps,
            verts: VertexArena::new(),
            tris: Pool::new(1),
        };
        for (id, p) in points.iter().enumerate() {
            mesh.push_vertex(*p, is_boundary[id]);
        }
        let refs: Vec<ElemRef> = tris.iter().map(|t| mesh.alloc_tri(0, *t)).collect();
        for inc in edge_tris.values() {
            if let [(ta, ia), (tb, ib)] = inc[..] {
                mesh.set_nbr(refs[ta], ia, refs[tb]);
                mesh.set_nbr(refs[tb], ib, refs[ta]);
            }
        }
        for (ti, t) in tris.iter().enumerate() {
            for &v in t {
                mesh.set_hint(v, refs[ti]);
            }
        }
        mesh.validate()?;
        Ok(mesh)
    }
}

fn bad_token(line: &str) -> MeshError {
    MeshError::Format(format!("unparsable number in '{line}'"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshCounts {
    pub vertices: usize,
    pub triangles: usize,
    pub edges: usize,
    pub boundary_edges: usize,
}

//! Planar geometric predicates and small vector helpers.
//!
//! The predicates are floating-point evaluations of the standard
//! determinant forms, guarded by an epsilon scaled to the magnitude of the
//! inputs: the determinant of [`orient2d`] is degree 2 in the coordinate
//! differences and [`in_circle`] degree 4, so their zero thresholds scale
//! with `m^2` and `m^4` respectively, `m` being the largest coordinate
//! difference involved. Results within the threshold are treated as
//! degenerate: `orient2d` reports [`Sign::Zero`] and `in_circle` reports
//! *outside*, so cocircular configurations never trigger an insertion.

/// Default epsilon for the scaled predicate thresholds.
pub const DEFAULT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        self.dist2(other).sqrt()
    }

    pub fn dist2(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn mid(self, other: Point) -> Point {
        Point::new((self.x + other.x) * 0.5, (self.y + other.y) * 0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

/// Orientation of the triple `(a, b, c)`: `Positive` for counterclockwise,
/// `Negative` for clockwise, `Zero` within the scaled threshold of
/// collinear.
pub fn orient2d(a: Point, b: Point, c: Point, eps: f64) -> Sign {
    let det = orient2d_raw(a, b, c);
    let m = max4(
        (b.x - a.x).abs(),
        (b.y - a.y).abs(),
        (c.x - a.x).abs(),
        (c.y - a.y).abs(),
    );
    let tol = eps * m * m;
    if det > tol {
        Sign::Positive
    } else if det < -tol {
        Sign::Negative
    } else {
        Sign::Zero
    }
}

/// Signed doubled area of `(a, b, c)`; positive when counterclockwise.
pub fn orient2d_raw(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// True when `p` lies strictly inside the circumcircle of the
/// counterclockwise triangle `(a, b, c)`. Points on the circle (within the
/// scaled threshold) count as outside.
pub fn in_circle(a: Point, b: Point, c: Point, p: Point, eps: f64) -> bool {
    debug_assert!(
        orient2d_raw(a, b, c) > 0.0,
        "in_circle expects counterclockwise input"
    );
    let ax = a.x - p.x;
    let ay = a.y - p.y;
    let bx = b.x - p.x;
    let by = b.y - p.y;
    let cx = c.x - p.x;
    let cy = c.y - p.y;

    let a2 = ax * ax + ay * ay;
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;

    let det = a2 * (bx * cy - by * cx) - b2 * (ax * cy - ay * cx) + c2 * (ax * by - ay * bx);

    let m = max4(ax.abs(), ay.abs(), bx.abs(), by.abs())
        .max(cx.abs())
        .max(cy.abs());
    let m2 = m * m;
    det > eps * m2 * m2
}

/// Signed area of the triangle.
pub fn tri_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * orient2d_raw(a, b, c)
}

/// Circumcenter, or `None` when the triangle is too close to degenerate
/// for the center to be meaningful.
pub fn circumcenter(a: Point, b: Point, c: Point) -> Option<Point> {
    let d = 2.0 * orient2d_raw(a, b, c);
    let m = max4(
        (b.x - a.x).abs(),
        (b.y - a.y).abs(),
        (c.x - a.x).abs(),
        (c.y - a.y).abs(),
    );
    if d.abs() <= DEFAULT_EPS * m * m {
        return None;
    }
    let a2 = a.x * a.x + a.y * a.y;
    let b2 = b.x * b.x + b.y * b.y;
    let c2 = c.x * c.x + c.y * c.y;
    let ux = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d;
    let uy = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d;
    Some(Point::new(ux, uy))
}

/// Smallest interior angle in degrees.
pub fn min_angle_deg(a: Point, b: Point, c: Point) -> f64 {
    let la = b.dist(c);
    let lb = a.dist(c);
    let lc = a.dist(b);
    let angle = |opposite: f64, s1: f64, s2: f64| {
        let cos = ((s1 * s1 + s2 * s2 - opposite * opposite) / (2.0 * s1 * s2)).clamp(-1.0, 1.0);
        cos.acos().to_degrees()
    };
    angle(la, lb, lc)
        .min(angle(lb, la, lc))
        .min(angle(lc, la, lb))
}

fn max4(a: f64, b: f64, c: f64, d: f64) -> f64 {
    a.max(b).max(c).max(d)
}

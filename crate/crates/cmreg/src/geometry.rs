//! Geometric contact oracle for extruded peg/hole pairs.
//!
//! The peg and hole are 2-D cross-section polygons extruded along z. The
//! oracle discretizes the peg's lateral surface into points, transforms them
//! by a candidate pose and classifies the pose as free, in contact, or
//! penetrating from the points' signed distances to the continuous hole
//! boundary. It stands in for the force-threshold contact detector of a
//! compliant robot.
//!
//! Frames: the hole cavity occupies `z in [-hole_depth, 0]` with the opening
//! plane at `z = 0`; the peg's bottom face is at `z = 0` in its own frame and
//! the shaft extends to `z = +peg_depth`.

use nalgebra::{Point2, Point3};
use thiserror::Error;

use crate::pose::Pose6;

/// Default contact band upper edge, mm. One order below the smallest
/// catalog half-clearance so classes never merge.
pub const DEFAULT_CONTACT_TOL: f64 = 0.02;
/// Default tolerated incidental penetration, mm.
pub const DEFAULT_PEN_TOL: f64 = 0.005;

/// Points closer than this to a loop edge count as on the boundary.
const BOUNDARY_EPS: f64 = 1e-12;

/// Upper bound on the surface sampling pitch, mm.
const MAX_SPACING: f64 = 0.25;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("unknown geometry {0:?} (expected one of square, lshape, plus, twopin, eslot)")]
    UnknownGeometry(String),
    #[error("invalid tolerances: contact_tol ({contact_tol}) must exceed pen_tol ({pen_tol}) >= 0")]
    InvalidTolerance { contact_tol: f64, pen_tol: f64 },
}

/// A simple polygon with an optional set of hole loops. The outer loop is
/// counterclockwise, hole loops clockwise, coordinates in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon2 {
    outer: Vec<Point2<f64>>,
    holes: Vec<Vec<Point2<f64>>>,
}

fn signed_area(ring: &[Point2<f64>]) -> f64 {
    let mut a = 0.0;
    for i in 0..ring.len() {
        let p = ring[i];
        let q = ring[(i + 1) % ring.len()];
        a += p.x * q.y - q.x * p.y;
    }
    a / 2.0
}

fn segments_properly_intersect(
    a: Point2<f64>,
    b: Point2<f64>,
    c: Point2<f64>,
    d: Point2<f64>,
) -> bool {
    let cross = |o: Point2<f64>, p: Point2<f64>, q: Point2<f64>| {
        (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x)
    };
    let d1 = cross(a, b, c);
    let d2 = cross(a, b, d);
    let d3 = cross(c, d, a);
    let d4 = cross(c, d, b);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn ring_is_simple(ring: &[Point2<f64>]) -> bool {
    let n = ring.len();
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        if (b - a).norm() < BOUNDARY_EPS {
            return false; // degenerate edge
        }
        for j in i + 1..n {
            // skip adjacent edges, they share an endpoint
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let c = ring[j];
            let d = ring[(j + 1) % n];
            if segments_properly_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

fn ring_contains(ring: &[Point2<f64>], p: Point2<f64>) -> bool {
    // even-odd crossing test
    let mut inside = false;
    let mut j = ring.len() - 1;
    for i in 0..ring.len() {
        let pi = ring[i];
        let pj = ring[j];
        if (pi.y > p.y) != (pj.y > p.y) {
            let x_int = pi.x + (p.y - pi.y) * (pj.x - pi.x) / (pj.y - pi.y);
            if p.x < x_int {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn point_segment_distance(p: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

impl Polygon2 {
    pub fn new(
        outer: Vec<Point2<f64>>,
        holes: Vec<Vec<Point2<f64>>>,
    ) -> Result<Self, GeometryError> {
        let poly = Self { outer, holes };
        poly.validate()?;
        Ok(poly)
    }

    pub fn from_xy(outer: &[[f64; 2]]) -> Result<Self, GeometryError> {
        Self::new(outer.iter().map(|v| Point2::new(v[0], v[1])).collect(), vec![])
    }

    pub fn outer(&self) -> &[Point2<f64>] {
        &self.outer
    }

    pub fn holes(&self) -> &[Vec<Point2<f64>>] {
        &self.holes
    }

    fn validate(&self) -> Result<(), GeometryError> {
        if self.outer.len() < 3 {
            return Err(GeometryError::InvalidGeometry(
                "outer loop needs at least 3 vertices".into(),
            ));
        }
        if signed_area(&self.outer) <= 0.0 {
            return Err(GeometryError::InvalidGeometry(
                "outer loop must be counterclockwise".into(),
            ));
        }
        if !ring_is_simple(&self.outer) {
            return Err(GeometryError::InvalidGeometry(
                "outer loop is self-intersecting or degenerate".into(),
            ));
        }
        for (i, hole) in self.holes.iter().enumerate() {
            if hole.len() < 3 {
                return Err(GeometryError::InvalidGeometry(format!(
                    "hole loop {i} needs at least 3 vertices"
                )));
            }
            if signed_area(hole) >= 0.0 {
                return Err(GeometryError::InvalidGeometry(format!(
                    "hole loop {i} must be clockwise"
                )));
            }
            if !ring_is_simple(hole) {
                return Err(GeometryError::InvalidGeometry(format!(
                    "hole loop {i} is self-intersecting or degenerate"
                )));
            }
            if !ring_contains(&self.outer, hole[0]) {
                return Err(GeometryError::InvalidGeometry(format!(
                    "hole loop {i} lies outside the outer loop"
                )));
            }
        }
        Ok(())
    }

    fn loops(&self) -> impl Iterator<Item = &[Point2<f64>]> {
        std::iter::once(self.outer.as_slice()).chain(self.holes.iter().map(|h| h.as_slice()))
    }

    /// Iterates over every boundary segment of every loop.
    fn edges(&self) -> impl Iterator<Item = (Point2<f64>, Point2<f64>)> + '_ {
        self.loops().flat_map(|ring| {
            (0..ring.len()).map(move |i| (ring[i], ring[(i + 1) % ring.len()]))
        })
    }

    /// Total boundary length over all loops.
    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| (b - a).norm()).sum()
    }

    fn unsigned_boundary_distance(&self, p: Point2<f64>) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    fn contains(&self, p: Point2<f64>) -> bool {
        if !ring_contains(&self.outer, p) {
            return false;
        }
        !self.holes.iter().any(|h| ring_contains(h, p))
    }
}

/// True iff `p` lies in the material region of `poly`; points within
/// 1e-12 mm of any loop edge count as inside.
pub fn point_in_polygon(p: Point2<f64>, poly: &Polygon2) -> bool {
    if poly.unsigned_boundary_distance(p) <= BOUNDARY_EPS {
        return true;
    }
    poly.contains(p)
}

/// Distance from `p` to the nearest loop edge, negated when `p` is outside
/// the material region.
pub fn boundary_distance(p: Point2<f64>, poly: &Polygon2) -> f64 {
    let d = poly.unsigned_boundary_distance(p);
    if d <= BOUNDARY_EPS || poly.contains(p) {
        d
    } else {
        -d
    }
}

/// Exact minimum boundary-to-boundary distance between two non-crossing
/// polygons (attained at a vertex of one against an edge of the other).
pub fn polygon_gap(a: &Polygon2, b: &Polygon2) -> f64 {
    let mut gap = f64::INFINITY;
    for ring in a.loops() {
        for &v in ring {
            gap = gap.min(b.unsigned_boundary_distance(v));
        }
    }
    for ring in b.loops() {
        for &v in ring {
            gap = gap.min(a.unsigned_boundary_distance(v));
        }
    }
    gap
}

/// A peg/hole pair: cross-sections extruded along z, with depths and the
/// lateral surface sampling density.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySpec {
    pub name: String,
    pub peg_section: Polygon2,
    pub hole_section: Polygon2,
    /// Peg length along z, mm.
    pub peg_depth: f64,
    /// Cavity depth along z, mm.
    pub hole_depth: f64,
    /// Surface sampling density, points per mm^2.
    pub surface_density: f64,
    /// Diametric clearance at the nominal pose, mm (twice the minimum gap).
    pub clearance: f64,
}

impl GeometrySpec {
    pub fn new(
        name: impl Into<String>,
        peg_section: Polygon2,
        hole_section: Polygon2,
        peg_depth: f64,
        hole_depth: f64,
        surface_density: f64,
    ) -> Result<Self, GeometryError> {
        if peg_depth <= 0.0 || hole_depth <= 0.0 {
            return Err(GeometryError::InvalidGeometry(
                "depths must be positive".into(),
            ));
        }
        if surface_density <= 0.0 {
            return Err(GeometryError::InvalidGeometry(
                "surface density must be positive".into(),
            ));
        }
        // the peg must nest inside the hole at the nominal pose
        for (a, b) in peg_section.edges() {
            for (c, d) in hole_section.edges() {
                if segments_properly_intersect(a, b, c, d) {
                    return Err(GeometryError::InvalidGeometry(
                        "peg and hole boundaries cross at the nominal pose".into(),
                    ));
                }
            }
        }
        if !hole_section.contains(peg_section.outer[0]) {
            return Err(GeometryError::InvalidGeometry(
                "peg section is not inside the hole section at the nominal pose".into(),
            ));
        }
        let gap = polygon_gap(&peg_section, &hole_section);
        if !(0.05..=0.5 + 1e-9).contains(&gap) {
            return Err(GeometryError::InvalidGeometry(format!(
                "nominal boundary gap {gap} mm outside [0.05, 0.5]"
            )));
        }
        Ok(Self {
            name: name.into(),
            peg_section,
            hole_section,
            peg_depth,
            hole_depth,
            surface_density,
            clearance: 2.0 * gap,
        })
    }

    /// Sampling pitch derived from `surface_density`, capped at 0.25 mm.
    pub fn spacing(&self) -> f64 {
        (1.0 / self.surface_density.sqrt()).min(MAX_SPACING)
    }
}

/// Samples the peg's lateral surface (section boundary swept over depth
/// levels, the z = 0 level being the bottom rim) in the peg frame.
/// Deterministic for a fixed spec.
pub fn peg_surface_points(spec: &GeometrySpec) -> Vec<Point3<f64>> {
    let spacing = spec.spacing();
    let ring2d = sample_section_boundary(&spec.peg_section, spacing);
    let n_levels = (spec.peg_depth / spacing).ceil() as usize;
    let dz = spec.peg_depth / n_levels as f64;
    let mut points = Vec::with_capacity(ring2d.len() * (n_levels + 1));
    for level in 0..=n_levels {
        let z = level as f64 * dz;
        for p in &ring2d {
            points.push(Point3::new(p.x, p.y, z));
        }
    }
    points
}

/// Walks every loop of `section` at uniform arc length, `ceil(loop
/// perimeter / spacing)` samples per loop, starting at each loop's first
/// vertex.
fn sample_section_boundary(section: &Polygon2, spacing: f64) -> Vec<Point2<f64>> {
    let mut out = Vec::new();
    for ring in section.loops() {
        let n = ring.len();
        let lengths: Vec<f64> = (0..n).map(|i| (ring[(i + 1) % n] - ring[i]).norm()).collect();
        let perimeter: f64 = lengths.iter().sum();
        let count = (perimeter / spacing).ceil() as usize;
        let step = perimeter / count as f64;
        let mut edge = 0;
        let mut edge_start = 0.0;
        for k in 0..count {
            let s = k as f64 * step;
            while edge + 1 < n && s > edge_start + lengths[edge] {
                edge_start += lengths[edge];
                edge += 1;
            }
            let t = ((s - edge_start) / lengths[edge]).min(1.0);
            let a = ring[edge];
            let b = ring[(edge + 1) % n];
            out.push(a + (b - a) * t);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactClass {
    Free,
    Contact,
    Penetrating,
}

/// Outcome of classifying one peg pose against the hole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactReport {
    pub class: ContactClass,
    /// Smallest in-cavity boundary distance, clamped at 0 so it stays
    /// non-negative for non-penetrating poses; infinite when no peg point
    /// is inside the cavity.
    pub min_gap: f64,
    /// Largest wall or floor violation, 0 when none.
    pub max_penetration: f64,
    /// Number of peg points either violating or inside the contact band.
    pub witness_points: usize,
}

/// Flattened hole-section boundary for fast signed-distance queries.
struct SectionField {
    segs: Vec<(Point2<f64>, Point2<f64>)>,
}

impl SectionField {
    fn new(section: &Polygon2) -> Self {
        Self {
            segs: section.edges().collect(),
        }
    }

    /// Signed distance: positive inside the material region, combined with
    /// the even-odd crossing test in a single pass over the segments.
    fn signed_distance(&self, px: f64, py: f64) -> f64 {
        let mut min_d2 = f64::INFINITY;
        let mut inside = false;
        for &(a, b) in &self.segs {
            // crossing parity
            if (a.y > py) != (b.y > py) {
                let x_int = a.x + (py - a.y) * (b.x - a.x) / (b.y - a.y);
                if px < x_int {
                    inside = !inside;
                }
            }
            // squared point-segment distance
            let abx = b.x - a.x;
            let aby = b.y - a.y;
            let apx = px - a.x;
            let apy = py - a.y;
            let t = ((apx * abx + apy * aby) / (abx * abx + aby * aby)).clamp(0.0, 1.0);
            let dx = apx - t * abx;
            let dy = apy - t * aby;
            let d2 = dx * dx + dy * dy;
            if d2 < min_d2 {
                min_d2 = d2;
            }
        }
        let d = min_d2.sqrt();
        if d <= BOUNDARY_EPS || inside {
            d
        } else {
            -d
        }
    }
}

/// Contact classifier for one peg/hole pair with fixed tolerances. Holds the
/// precomputed peg surface points; cheap to query, immutable, and safe to
/// share across threads.
pub struct ContactOracle {
    spec: GeometrySpec,
    points: Vec<Point3<f64>>,
    /// one boundary ring; the surface points are this ring at every level
    ring: Vec<Point2<f64>>,
    n_levels: usize,
    dz: f64,
    hole_field: SectionField,
    contact_tol: f64,
    pen_tol: f64,
}

impl ContactOracle {
    pub fn new(spec: GeometrySpec, contact_tol: f64, pen_tol: f64) -> Result<Self, GeometryError> {
        if !(pen_tol >= 0.0 && contact_tol > pen_tol) {
            return Err(GeometryError::InvalidTolerance {
                contact_tol,
                pen_tol,
            });
        }
        let points = peg_surface_points(&spec);
        let spacing = spec.spacing();
        let ring = sample_section_boundary(&spec.peg_section, spacing);
        let n_levels = (spec.peg_depth / spacing).ceil() as usize;
        let dz = spec.peg_depth / n_levels as f64;
        let hole_field = SectionField::new(&spec.hole_section);
        Ok(Self {
            spec,
            points,
            ring,
            n_levels,
            dz,
            hole_field,
            contact_tol,
            pen_tol,
        })
    }

    pub fn with_default_tolerances(spec: GeometrySpec) -> Result<Self, GeometryError> {
        Self::new(spec, DEFAULT_CONTACT_TOL, DEFAULT_PEN_TOL)
    }

    pub fn spec(&self) -> &GeometrySpec {
        &self.spec
    }

    pub fn contact_tol(&self) -> f64 {
        self.contact_tol
    }

    pub fn pen_tol(&self) -> f64 {
        self.pen_tol
    }

    /// Full classification of `pose` (peg frame to hole frame) by
    /// exhaustive scan over every surface point.
    pub fn classify(&self, pose: &Pose6) -> ContactReport {
        let iso = pose.to_isometry();
        let r = iso.rotation.to_rotation_matrix();
        let m = r.matrix();
        let t = iso.translation.vector;
        let hole_depth = self.spec.hole_depth;

        // raw minimum signed lateral distance; clamped at 0 for the report
        let mut min_d = f64::INFINITY;
        let mut max_pen = 0.0_f64;
        let mut witnesses = 0usize;

        for p in &self.points {
            let z = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)] * p.z + t.z;
            if z >= 0.0 {
                continue; // above the opening plane
            }
            if z < -hole_depth {
                // below the cavity floor
                let pen = -hole_depth - z;
                if pen > max_pen {
                    max_pen = pen;
                }
                witnesses += 1;
                continue;
            }
            let x = m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)] * p.z + t.x;
            let y = m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)] * p.z + t.y;
            let d = self.hole_field.signed_distance(x, y);
            if d < min_d {
                min_d = d;
            }
            if d <= self.contact_tol {
                witnesses += 1;
            }
            if d < 0.0 && -d > max_pen {
                max_pen = -d;
            }
        }

        let class = if max_pen > self.pen_tol {
            ContactClass::Penetrating
        } else if min_d <= self.contact_tol {
            ContactClass::Contact
        } else {
            ContactClass::Free
        };
        ContactReport {
            class,
            min_gap: min_d.max(0.0),
            max_penetration: max_pen,
            witness_points: witnesses,
        }
    }

    pub fn is_free(&self, pose: &Pose6) -> bool {
        self.class_of(pose) == ContactClass::Free
    }

    /// Class of `pose`, computed by branch-and-bound over depth levels.
    ///
    /// Every level carries the same boundary ring, translated laterally by
    /// a per-level constant, so the per-level minimum distance is Lipschitz
    /// in the level index with constant `dz * |lateral drift per level|`.
    /// Intervals whose certified lower bound cannot change the class are
    /// skipped; the result is exact and equals `classify(pose).class`.
    pub fn class_of(&self, pose: &Pose6) -> ContactClass {
        let iso = pose.to_isometry();
        let r = iso.rotation.to_rotation_matrix();
        let m = r.matrix();
        let t = iso.translation.vector;
        let hd = self.spec.hole_depth;
        let n_ring = self.ring.len();

        // shared per-ring-point pieces: world = (qx, qy, zo) + level offset
        let mut qx = vec![0.0; n_ring];
        let mut qy = vec![0.0; n_ring];
        let mut zo = vec![0.0; n_ring];
        let (mut e_min, mut e_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for (i, p) in self.ring.iter().enumerate() {
            qx[i] = m[(0, 0)] * p.x + m[(0, 1)] * p.y;
            qy[i] = m[(1, 0)] * p.x + m[(1, 1)] * p.y;
            let e = m[(2, 0)] * p.x + m[(2, 1)] * p.y;
            zo[i] = e;
            e_min = e_min.min(e);
            e_max = e_max.max(e);
        }

        let level_z = |k: usize| k as f64 * self.dz;
        let zb = |k: usize| m[(2, 2)] * level_z(k) + t.z;
        let lx = |k: usize| m[(0, 2)] * level_z(k) + t.x;
        let ly = |k: usize| m[(1, 2)] * level_z(k) + t.y;

        let mut best = f64::INFINITY;
        let mut max_floor_pen = 0.0_f64;
        let mut interior: Vec<usize> = Vec::new();

        for k in 0..=self.n_levels {
            let base = zb(k);
            let (lo, hi) = (base + e_min, base + e_max);
            if lo >= 0.0 {
                continue; // entirely above the opening
            }
            if hi < -hd {
                // entirely below the floor: deepest point pins the violation
                max_floor_pen = max_floor_pen.max(-hd - lo);
                if max_floor_pen > self.pen_tol {
                    return ContactClass::Penetrating;
                }
                continue;
            }
            if hi < 0.0 && lo >= -hd {
                interior.push(k);
                continue;
            }
            // straddling level: per-point membership
            let (tx, ty) = (lx(k), ly(k));
            for i in 0..n_ring {
                let z = base + zo[i];
                if z >= 0.0 {
                    continue;
                }
                if z < -hd {
                    max_floor_pen = max_floor_pen.max(-hd - z);
                    if max_floor_pen > self.pen_tol {
                        return ContactClass::Penetrating;
                    }
                    continue;
                }
                let d = self.hole_field.signed_distance(qx[i] + tx, qy[i] + ty);
                if d < best {
                    best = d;
                    if best < -self.pen_tol {
                        return ContactClass::Penetrating;
                    }
                }
            }
        }

        // branch and bound over contiguous interior runs: the per-level
        // minimum shifts by at most `drift` between adjacent levels
        let drift = self.dz * (m[(0, 2)] * m[(0, 2)] + m[(1, 2)] * m[(1, 2)]).sqrt();
        let level_min = |k: usize| -> f64 {
            let (tx, ty) = (lx(k), ly(k));
            let mut lm = f64::INFINITY;
            for i in 0..n_ring {
                let d = self.hole_field.signed_distance(qx[i] + tx, qy[i] + ty);
                if d < lm {
                    lm = d;
                    if lm < -self.pen_tol {
                        return lm; // already disqualifying
                    }
                }
            }
            lm
        };

        let mut run_start = 0usize;
        while run_start < interior.len() {
            let mut run_end = run_start;
            while run_end + 1 < interior.len() && interior[run_end + 1] == interior[run_end] + 1 {
                run_end += 1;
            }
            let (a, b) = (interior[run_start], interior[run_end]);
            run_start = run_end + 1;

            let ma = level_min(a);
            best = best.min(ma);
            if best < -self.pen_tol {
                return ContactClass::Penetrating;
            }
            if a == b {
                continue;
            }
            let mb = level_min(b);
            best = best.min(mb);
            if best < -self.pen_tol {
                return ContactClass::Penetrating;
            }
            let mut stack = vec![(a, b, ma, mb)];
            while let Some((ka, kb, va, vb)) = stack.pop() {
                if kb - ka <= 1 {
                    continue;
                }
                let lower = 0.5 * (va + vb) - 0.5 * drift * (kb - ka) as f64;
                let explore = (best > self.contact_tol && lower <= self.contact_tol)
                    || lower < -self.pen_tol;
                if !explore {
                    continue;
                }
                let mid = ka + (kb - ka) / 2;
                let vm = level_min(mid);
                best = best.min(vm);
                if best < -self.pen_tol {
                    return ContactClass::Penetrating;
                }
                stack.push((ka, mid, va, vm));
                stack.push((mid, kb, vm, vb));
            }
        }

        if max_floor_pen > self.pen_tol || best < -self.pen_tol {
            ContactClass::Penetrating
        } else if best <= self.contact_tol {
            ContactClass::Contact
        } else {
            ContactClass::Free
        }
    }
}

/// One-shot classification; builds a transient [`ContactOracle`]. Prefer the
/// oracle for repeated queries against the same spec.
pub fn classify_contact(
    spec: &GeometrySpec,
    pose: &Pose6,
    contact_tol: f64,
    pen_tol: f64,
) -> Result<ContactReport, GeometryError> {
    Ok(ContactOracle::new(spec.clone(), contact_tol, pen_tol)?.classify(pose))
}

pub const CATALOG_NAMES: [&str; 5] = ["square", "lshape", "plus", "twopin", "eslot"];

/// Built-in peg/hole pairs. Every non-square entry is non-convex; diametric
/// clearances are square 0.2, lshape 0.4, plus 0.3, twopin 0.5, eslot 1.0 mm.
pub fn catalog(name: &str) -> Result<GeometrySpec, GeometryError> {
    let density = 16.0; // 0.25 mm pitch
    match name {
        "square" => {
            let peg = rect_ring(9.9);
            let hole = rect_ring(10.0);
            GeometrySpec::new("square", poly(&peg), poly(&hole), 30.0, 25.0, density)
        }
        "lshape" => {
            // 12 x 12 L with a 6 x 6 notch at the top-right corner
            let peg = [
                [-6.0, -6.0],
                [6.0, -6.0],
                [6.0, 0.0],
                [0.0, 0.0],
                [0.0, 6.0],
                [-6.0, 6.0],
            ];
            let hole = [
                [-6.2, -6.2],
                [6.2, -6.2],
                [6.2, 0.2],
                [0.2, 0.2],
                [0.2, 6.2],
                [-6.2, 6.2],
            ];
            GeometrySpec::new("lshape", poly(&peg), poly(&hole), 30.0, 25.0, density)
        }
        "plus" => {
            // 12 x 12 cross with 4 mm wide arms
            let peg = [
                [-2.0, -6.0],
                [2.0, -6.0],
                [2.0, -2.0],
                [6.0, -2.0],
                [6.0, 2.0],
                [2.0, 2.0],
                [2.0, 6.0],
                [-2.0, 6.0],
                [-2.0, 2.0],
                [-6.0, 2.0],
                [-6.0, -2.0],
                [-2.0, -2.0],
            ];
            let hole = [
                [-2.15, -6.15],
                [2.15, -6.15],
                [2.15, -2.15],
                [6.15, -2.15],
                [6.15, 2.15],
                [2.15, 2.15],
                [2.15, 6.15],
                [-2.15, 6.15],
                [-2.15, 2.15],
                [-6.15, 2.15],
                [-6.15, -2.15],
                [-2.15, -2.15],
            ];
            GeometrySpec::new("plus", poly(&peg), poly(&hole), 30.0, 25.0, density)
        }
        "twopin" => {
            // two 5 x 5 pads joined by a 6 x 2 bridge
            let peg = [
                [-8.0, -2.5],
                [-3.0, -2.5],
                [-3.0, -1.0],
                [3.0, -1.0],
                [3.0, -2.5],
                [8.0, -2.5],
                [8.0, 2.5],
                [3.0, 2.5],
                [3.0, 1.0],
                [-3.0, 1.0],
                [-3.0, 2.5],
                [-8.0, 2.5],
            ];
            let hole = [
                [-8.25, -2.75],
                [-2.75, -2.75],
                [-2.75, -1.25],
                [2.75, -1.25],
                [2.75, -2.75],
                [8.25, -2.75],
                [8.25, 2.75],
                [2.75, 2.75],
                [2.75, 1.25],
                [-2.75, 1.25],
                [-2.75, 2.75],
                [-8.25, 2.75],
            ];
            GeometrySpec::new("twopin", poly(&peg), poly(&hole), 30.0, 25.0, density)
        }
        "eslot" => {
            // E profile: 4 mm spine, three 2 mm teeth reaching x = 4
            let peg = [
                [-6.0, -6.0],
                [4.0, -6.0],
                [4.0, -4.0],
                [-2.0, -4.0],
                [-2.0, -1.0],
                [4.0, -1.0],
                [4.0, 1.0],
                [-2.0, 1.0],
                [-2.0, 4.0],
                [4.0, 4.0],
                [4.0, 6.0],
                [-6.0, 6.0],
            ];
            let hole = [
                [-6.5, -6.5],
                [4.5, -6.5],
                [4.5, -3.5],
                [-1.5, -3.5],
                [-1.5, -1.5],
                [4.5, -1.5],
                [4.5, 1.5],
                [-1.5, 1.5],
                [-1.5, 3.5],
                [4.5, 3.5],
                [4.5, 6.5],
                [-6.5, 6.5],
            ];
            GeometrySpec::new("eslot", poly(&peg), poly(&hole), 30.0, 25.0, density)
        }
        other => Err(GeometryError::UnknownGeometry(other.to_string())),
    }
}

fn rect_ring(half: f64) -> [[f64; 2]; 4] {
    [[-half, -half], [half, -half], [half, half], [-half, half]]
}

fn poly(ring: &[[f64; 2]]) -> Polygon2 {
    Polygon2::from_xy(ring).expect("catalog ring is valid")
}

/// Writes a spec in the plain-text polygon format: metadata as `#` comment
/// lines, one loop per block of `v x y` lines, blocks blank-line separated.
pub fn write_spec(spec: &GeometrySpec) -> String {
    let mut out = String::new();
    out.push_str(&format!("# geometry: {}\n", spec.name));
    out.push_str(&format!("# clearance_mm: {}\n", spec.clearance));
    out.push_str(&format!("# peg_depth_mm: {}\n", spec.peg_depth));
    out.push_str(&format!("# hole_depth_mm: {}\n", spec.hole_depth));
    out.push_str(&format!("# surface_density: {}\n", spec.surface_density));
    for (label, section) in [("peg", &spec.peg_section), ("hole", &spec.hole_section)] {
        out.push_str(&format!("\n# section: {label}\n"));
        for ring in section.loops() {
            for p in ring {
                out.push_str(&format!("v {} {}\n", p.x, p.y));
            }
            out.push('\n');
        }
    }
    out
}

/// Parses a single polygon from the plain-text format: the first loop block
/// is the outer boundary, later blocks are holes.
pub fn parse_polygon(text: &str) -> Result<Polygon2, GeometryError> {
    let mut loops: Vec<Vec<Point2<f64>>> = Vec::new();
    let mut current: Vec<Point2<f64>> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            if !current.is_empty() {
                loops.push(std::mem::take(&mut current));
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some("v"), Some(x), Some(y), None) => {
                let (x, y) = (
                    x.parse::<f64>()
                        .map_err(|_| GeometryError::InvalidGeometry(format!("bad vertex {line:?}")))?,
                    y.parse::<f64>()
                        .map_err(|_| GeometryError::InvalidGeometry(format!("bad vertex {line:?}")))?,
                );
                current.push(Point2::new(x, y));
            }
            _ => {
                return Err(GeometryError::InvalidGeometry(format!(
                    "unexpected line {line:?}"
                )))
            }
        }
    }
    if !current.is_empty() {
        loops.push(current);
    }
    if loops.is_empty() {
        return Err(GeometryError::InvalidGeometry("no loops found".into()));
    }
    let outer = loops.remove(0);
    Polygon2::new(outer, loops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Pose6;

    fn unit_square(half: f64) -> Polygon2 {
        Polygon2::from_xy(&rect_ring(half)).unwrap()
    }

    #[test]
    fn point_in_polygon_basics() {
        let sq = unit_square(0.5);
        assert!(point_in_polygon(Point2::new(0.0, 0.0), &sq));
        assert!(!point_in_polygon(Point2::new(2.0, 0.0), &sq));
        // boundary point counts as inside
        assert!(point_in_polygon(Point2::new(0.5, 0.0), &sq));
    }

    #[test]
    fn point_inside_hole_loop_is_outside() {
        let outer = rect_ring(10.0).map(|v| Point2::new(v[0], v[1])).to_vec();
        // clockwise inner loop
        let hole = vec![
            Point2::new(-2.0, -2.0),
            Point2::new(-2.0, 2.0),
            Point2::new(2.0, 2.0),
            Point2::new(2.0, -2.0),
        ];
        let poly = Polygon2::new(outer, vec![hole]).unwrap();
        assert!(!point_in_polygon(Point2::new(0.0, 0.0), &poly));
        assert!(point_in_polygon(Point2::new(5.0, 0.0), &poly));
        assert_eq!(boundary_distance(Point2::new(0.0, 0.0), &poly), -2.0);
    }

    #[test]
    fn boundary_distance_signed_examples() {
        let sq = unit_square(10.0);
        assert_eq!(boundary_distance(Point2::new(0.0, 0.0), &sq), 10.0);
        assert_eq!(boundary_distance(Point2::new(10.0, 0.0), &sq), 0.0);
        assert_eq!(boundary_distance(Point2::new(11.0, 0.0), &sq), -1.0);
    }

    #[test]
    fn invalid_polygons_are_rejected() {
        assert!(Polygon2::from_xy(&[[0.0, 0.0], [1.0, 0.0]]).is_err());
        // clockwise outer loop
        assert!(Polygon2::from_xy(&[[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]).is_err());
        // bow tie
        assert!(
            Polygon2::from_xy(&[[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]).is_err()
        );
    }

    #[test]
    fn surface_points_lie_on_boundary_and_count_matches() {
        let spec = GeometrySpec::new(
            "sq",
            unit_square(9.9),
            unit_square(10.0),
            30.0,
            25.0,
            16.0,
        )
        .unwrap();
        let pts = peg_surface_points(&spec);
        let per_level = (4.0_f64 * 19.8 / 0.25).ceil() as usize;
        let levels = (30.0_f64 / 0.25).ceil() as usize + 1;
        assert_eq!(pts.len(), per_level * levels);
        for p in pts.iter().step_by(97) {
            let d = boundary_distance(Point2::new(p.x, p.y), &spec.peg_section);
            assert!(d.abs() <= 1e-9, "point off boundary by {d}");
        }
        assert!(pts.iter().all(|p| (0.0..=30.0).contains(&p.z)));
        // determinism
        assert_eq!(pts, peg_surface_points(&spec));
    }

    fn square_oracle() -> ContactOracle {
        let spec = GeometrySpec::new(
            "sq",
            unit_square(9.9),
            unit_square(10.0),
            30.0,
            25.0,
            16.0,
        )
        .unwrap();
        ContactOracle::new(spec, 0.02, 0.005).unwrap()
    }

    #[test]
    fn analytic_square_cases() {
        // square peg side 19.8 in hole side 20.0, inserted 10 mm
        let oracle = square_oracle();
        let centered = Pose6::translation(0.0, 0.0, -10.0);
        let rep = oracle.classify(&centered);
        assert_eq!(rep.class, ContactClass::Free);
        assert!((rep.min_gap - 0.1).abs() < 1e-9, "min_gap = {}", rep.min_gap);

        let touching = Pose6::translation(0.10, 0.0, -10.0);
        let rep = oracle.classify(&touching);
        assert_eq!(rep.class, ContactClass::Contact);
        assert!(rep.min_gap.abs() < 1e-9, "min_gap = {}", rep.min_gap);

        let pushed = Pose6::translation(0.20, 0.0, -10.0);
        let rep = oracle.classify(&pushed);
        assert_eq!(rep.class, ContactClass::Penetrating);
        assert!(
            (rep.max_penetration - 0.10).abs() < 1e-9,
            "max_penetration = {}",
            rep.max_penetration
        );
    }

    #[test]
    fn lateral_sweep_is_monotone() {
        // FREE -> CONTACT -> PENETRATING with non-increasing min_gap on a
        // 0.01 mm grid trimmed to the in-cavity regime.
        let oracle = square_oracle();
        let mut last_gap = f64::INFINITY;
        let mut seen = Vec::new();
        for k in 0..=25 {
            let x = k as f64 * 0.01;
            let rep = oracle.classify(&Pose6::translation(x, 0.0, -10.0));
            if rep.class != ContactClass::Penetrating {
                assert!(rep.min_gap <= last_gap + 1e-12);
                last_gap = rep.min_gap;
            }
            if seen.last() != Some(&rep.class) {
                seen.push(rep.class);
            }
        }
        assert_eq!(
            seen,
            vec![
                ContactClass::Free,
                ContactClass::Contact,
                ContactClass::Penetrating
            ]
        );
    }

    #[test]
    fn floor_penetration_is_detected() {
        let oracle = square_oracle();
        // hole depth 25: bottom at z = -25.5 penetrates the floor by 0.5
        let rep = oracle.classify(&Pose6::translation(0.0, 0.0, -25.5));
        assert_eq!(rep.class, ContactClass::Penetrating);
        assert!((rep.max_penetration - 0.5).abs() < 1e-9);
    }

    #[test]
    fn class_only_path_agrees_with_full_report() {
        let oracle = square_oracle();
        for x in [0.0, 0.05, 0.099, 0.1, 0.15, 0.2, 0.3] {
            let pose = Pose6::new(x, 0.02, -10.0, 0.1, -0.05, 0.2);
            assert_eq!(oracle.class_of(&pose), oracle.classify(&pose).class);
        }
    }

    #[test]
    fn catalog_entries_validate() {
        let clearances = [
            ("square", 0.2),
            ("lshape", 0.4),
            ("plus", 0.3),
            ("twopin", 0.5),
            ("eslot", 1.0),
        ];
        for (name, c) in clearances {
            let spec = catalog(name).unwrap();
            assert_eq!(spec.name, name);
            assert!(
                (spec.clearance - c).abs() < 1e-9,
                "{name}: clearance {} != {c}",
                spec.clearance
            );
            // nominal partially-inserted pose is FREE
            let oracle = ContactOracle::with_default_tolerances(spec).unwrap();
            let nominal = Pose6::translation(0.0, 0.0, -0.4 * oracle.spec().hole_depth);
            assert_eq!(oracle.class_of(&nominal), ContactClass::Free, "{name}");
        }
        assert!(matches!(
            catalog("bogus"),
            Err(GeometryError::UnknownGeometry(_))
        ));
    }

    #[test]
    fn catalog_square_dimensions() {
        let spec = catalog("square").unwrap();
        let peg_w = spec
            .peg_section
            .outer()
            .iter()
            .map(|p| p.x)
            .fold(f64::NEG_INFINITY, f64::max)
            * 2.0;
        let hole_w = spec
            .hole_section
            .outer()
            .iter()
            .map(|p| p.x)
            .fold(f64::NEG_INFINITY, f64::max)
            * 2.0;
        assert!((peg_w - 19.8).abs() < 1e-12);
        assert!((hole_w - 20.0).abs() < 1e-12);
    }

    #[test]
    fn classification_is_deterministic() {
        let oracle = square_oracle();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let pose = Pose6::new(
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-12.0..-8.0),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            );
            let rep = oracle.classify(&pose);
            assert_eq!(rep, oracle.classify(&pose));
            assert_eq!(rep.class, oracle.class_of(&pose), "pose {pose}");
        }
    }

    #[test]
    fn invalid_tolerances_are_rejected() {
        let spec = catalog("square").unwrap();
        assert!(matches!(
            ContactOracle::new(spec, 0.005, 0.02),
            Err(GeometryError::InvalidTolerance { .. })
        ));
    }

    #[test]
    fn polygon_text_round_trip() {
        let spec = catalog("plus").unwrap();
        let text = write_spec(&spec);
        let (peg_text, hole_text) = text.split_once("# section: hole").unwrap();
        assert_eq!(
            parse_polygon(peg_text).unwrap().outer(),
            spec.peg_section.outer()
        );
        assert_eq!(
            parse_polygon(hole_text).unwrap().outer(),
            spec.hole_section.outer()
        );
    }
}

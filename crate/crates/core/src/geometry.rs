//! Planar geometry on the bird's-eye-view plane.
//!
//! Covers the ego-centred raster ([`GridSpec`]), Frenet projection onto
//! polyline paths ([`PathGeometry`]), discrete curvature, polygon
//! containment and oriented-box footprint rasterization.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::AgentState;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c, s)
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Self) -> f64 {
        (self - other).norm()
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn rotate(self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Largest cell count accepted along one grid axis.
pub const DEFAULT_MAX_CELLS_PER_AXIS: usize = 4096;

/// Square raster centred on `center`.
///
/// Cells are indexed `(row, col)`; `col` grows along the grid's local +x
/// axis and `row` grows along local -y, so row 0 is the top edge when the
/// grid is drawn as an image. With `orientation = 0` the local axes are the
/// world axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub center: Point2,
    /// Half-width of the square along each axis, meters.
    pub extent: f64,
    /// Meters per cell.
    pub resolution: f64,
    /// Rotation of the local frame relative to the world frame, radians.
    #[serde(default)]
    pub orientation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl GridSpec {
    pub fn new(center: Point2, extent: f64, resolution: f64, orientation: f64) -> Self {
        Self {
            center,
            extent,
            resolution,
            orientation,
        }
    }

    pub fn validate(&self, max_cells_per_axis: usize) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::Config(format!(
                "grid resolution must be positive, got {}",
                self.resolution
            )));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::Config(format!(
                "grid extent must be positive, got {}",
                self.extent
            )));
        }
        if !self.center.is_finite() || !self.orientation.is_finite() {
            return Err(Error::Config("grid pose must be finite".into()));
        }
        let n = self.cells_per_axis();
        if n == 0 || n > max_cells_per_axis {
            return Err(Error::Config(format!(
                "grid has {n} cells per axis, allowed range is 1..={max_cells_per_axis}"
            )));
        }
        Ok(())
    }

    pub fn cells_per_axis(&self) -> usize {
        (2.0 * self.extent / self.resolution).round() as usize
    }

    pub fn rows(&self) -> usize {
        self.cells_per_axis()
    }

    pub fn cols(&self) -> usize {
        self.cells_per_axis()
    }

    pub fn len(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Half the actual side length, `cells_per_axis * resolution / 2`.
    pub fn half_side(&self) -> f64 {
        0.5 * self.cells_per_axis() as f64 * self.resolution
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.cols() + cell.col
    }

    pub fn cell_of_index(&self, index: usize) -> Cell {
        Cell::new(index / self.cols(), index % self.cols())
    }

    pub fn to_local(&self, p: Point2) -> Point2 {
        let d = p - self.center;
        if self.orientation == 0.0 {
            d
        } else {
            d.rotate(-self.orientation)
        }
    }

    pub fn to_world(&self, local: Point2) -> Point2 {
        if self.orientation == 0.0 {
            self.center + local
        } else {
            self.center + local.rotate(self.orientation)
        }
    }

    /// Local x of the centre of column `col`.
    pub fn col_center_local(&self, col: usize) -> f64 {
        -self.half_side() + (col as f64 + 0.5) * self.resolution
    }

    /// Local y of the centre of row `row`.
    pub fn row_center_local(&self, row: usize) -> f64 {
        self.half_side() - (row as f64 + 0.5) * self.resolution
    }

    pub fn cell_to_world(&self, cell: Cell) -> Point2 {
        self.to_world(Point2::new(
            self.col_center_local(cell.col),
            self.row_center_local(cell.row),
        ))
    }

    /// Continuous (column, row) coordinates of a local point in cell units,
    /// where integer values fall on cell edges.
    pub fn local_to_fractional(&self, local: Point2) -> (f64, f64) {
        let h = self.half_side();
        ((local.x + h) / self.resolution, (h - local.y) / self.resolution)
    }

    /// Cell containing `p`, or `None` when `p` lies outside the grid.
    pub fn world_to_cell(&self, p: Point2) -> Option<Cell> {
        let (fc, fr) = self.local_to_fractional(self.to_local(p));
        let n = self.cells_per_axis() as f64;
        if !(0.0..=n).contains(&fc) || !(0.0..=n).contains(&fr) {
            return None;
        }
        let last = self.cells_per_axis() - 1;
        Some(Cell::new(
            (fr.floor() as usize).min(last),
            (fc.floor() as usize).min(last),
        ))
    }

    pub fn contains(&self, p: Point2) -> bool {
        let local = self.to_local(p);
        let h = self.half_side();
        local.x.abs() <= h && local.y.abs() <= h
    }

    /// World coordinates of every cell centre in row-major order.
    pub fn cell_centers(&self) -> Vec<Point2> {
        let n = self.cells_per_axis();
        let mut out = Vec::with_capacity(n * n);
        for row in 0..n {
            let ly = self.row_center_local(row);
            for col in 0..n {
                out.push(self.to_world(Point2::new(self.col_center_local(col), ly)));
            }
        }
        out
    }

    /// Bit-exact key of the grid pose, used for cache lookups.
    pub fn pose_key(&self) -> [u64; 5] {
        [
            self.center.x.to_bits(),
            self.center.y.to_bits(),
            self.extent.to_bits(),
            self.resolution.to_bits(),
            self.orientation.to_bits(),
        ]
    }
}

// ---------------------------------------------------------------------------
// Segments and polylines
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub(crate) struct SegmentProjection {
    /// Unclamped segment parameter.
    pub t_raw: f64,
    pub t: f64,
    pub dist_sq: f64,
    /// Sign of the query relative to the segment direction (+1 left).
    pub side: f64,
}

#[inline]
pub(crate) fn project_onto_segment(p: Point2, a: Point2, b: Point2) -> SegmentProjection {
    let ab = b - a;
    let ap = p - a;
    let len_sq = ab.norm_sq();
    let t_raw = if len_sq > 0.0 { ap.dot(ab) / len_sq } else { 0.0 };
    let t = t_raw.clamp(0.0, 1.0);
    let foot = a + ab * t;
    let diff = p - foot;
    let side = if ab.cross(ap) < 0.0 { -1.0 } else { 1.0 };
    SegmentProjection {
        t_raw,
        t,
        dist_sq: diff.norm_sq(),
        side,
    }
}

/// Segment with its direction and inverse squared length cached.
#[derive(Debug, Clone, Copy)]
struct Segment {
    a: Point2,
    ab: Point2,
    inv_len_sq: f64,
}

impl Segment {
    fn new(a: Point2, b: Point2) -> Self {
        let ab = b - a;
        let len_sq = ab.norm_sq();
        Self {
            a,
            ab,
            inv_len_sq: if len_sq > 0.0 { 1.0 / len_sq } else { 0.0 },
        }
    }

    #[inline]
    fn project(&self, p: Point2) -> SegmentProjection {
        let ap = p - self.a;
        let t_raw = ap.dot(self.ab) * self.inv_len_sq;
        let t = t_raw.clamp(0.0, 1.0);
        let diff = ap - self.ab * t;
        SegmentProjection {
            t_raw,
            t,
            dist_sq: diff.norm_sq(),
            side: if self.ab.cross(ap) < 0.0 { -1.0 } else { 1.0 },
        }
    }
}

/// Euclidean distance from `p` to the closest point of a polyline.
pub fn distance_to_polyline(p: Point2, points: &[Point2]) -> f64 {
    match points {
        [] => f64::INFINITY,
        [only] => p.distance(*only),
        _ => points
            .windows(2)
            .map(|w| project_onto_segment(p, w[0], w[1]).dist_sq)
            .fold(f64::INFINITY, f64::min)
            .sqrt(),
    }
}

/// Axis-aligned bounding box `(min, max)` of a point set.
pub fn bounding_box(points: &[Point2]) -> (Point2, Point2) {
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

/// Distance from `p` to an axis-aligned box; zero inside.
pub fn distance_to_box(p: Point2, lo: Point2, hi: Point2) -> f64 {
    let dx = (lo.x - p.x).max(0.0).max(p.x - hi.x);
    let dy = (lo.y - p.y).max(0.0).max(p.y - hi.y);
    dx.hypot(dy)
}

/// Mean Menger curvature over the interior vertices of a polyline.
///
/// Each interior vertex contributes `4·area / (|ab|·|bc|·|ca|)` of the
/// triangle it forms with its neighbours; repeated or collinear triples
/// contribute zero. Fewer than three points yields zero.
pub fn mean_curvature(points: &[Point2]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let sum: f64 = points
        .windows(3)
        .map(|w| menger_curvature(w[0], w[1], w[2]))
        .sum();
    sum / (points.len() - 2) as f64
}

pub fn menger_curvature(a: Point2, b: Point2, c: Point2) -> f64 {
    let ab = a.distance(b);
    let bc = b.distance(c);
    let ca = c.distance(a);
    let denom = ab * bc * ca;
    if denom <= f64::EPSILON * f64::EPSILON {
        return 0.0;
    }
    let twice_area = (b - a).cross(c - a).abs();
    2.0 * twice_area / denom
}

/// Longitudinal/lateral coordinates of a point relative to a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrenetCoord {
    pub s: f64,
    /// Signed lateral offset, positive to the left of the direction of travel.
    pub d: f64,
    /// False when the closest path point was clamped to either end.
    pub in_domain: bool,
}

const CHUNK: usize = 8;

#[derive(Debug, Clone)]
struct SegmentChunk {
    first: usize,
    end: usize,
    center: Point2,
    radius: f64,
}

/// Shape class used to pick candidate segments during projection.
#[derive(Debug, Clone)]
enum PathShape {
    General,
    /// Vertices on one line, strictly advancing along `dir`; `params[i]` is
    /// the coordinate of vertex `i` along `dir` relative to the first vertex.
    Line {
        dir: Point2,
        params: Vec<f64>,
        inv_step: f64,
    },
    /// Vertices on one circle, turning monotonically by less than half a
    /// turn; `spokes[i]` is the unit vector from the centre to vertex `i`.
    Arc {
        center: Point2,
        radius: f64,
        orient: f64,
        spokes: Vec<Point2>,
    },
}

/// Closest-point query result with the winning segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathProjection {
    pub frenet: FrenetCoord,
    /// Squared distance to the closest point.
    pub dist_sq: f64,
    pub segment: usize,
    /// Clamped parameter on `segment`.
    pub t: f64,
}

/// Polyline with cumulative arc length, mean curvature and an optional
/// per-vertex speed profile.
#[derive(Debug, Clone)]
pub struct PathGeometry {
    points: Vec<Point2>,
    cum_arclength: Vec<f64>,
    mean_curvature: f64,
    speeds: Option<Vec<f64>>,
    segments: Vec<Segment>,
    chunks: Vec<SegmentChunk>,
    shape: PathShape,
}

impl PathGeometry {
    /// Builds a path, dropping consecutive duplicate vertices so that the
    /// cumulative arc length is strictly increasing. A single remaining
    /// vertex gives a degenerate zero-length path.
    pub fn new(points: Vec<Point2>, speeds: Option<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Contract("path needs at least one point".into()));
        }
        if let Some(v) = &speeds {
            if v.len() != points.len() {
                return Err(Error::Contract(format!(
                    "speed profile has {} samples for {} points",
                    v.len(),
                    points.len()
                )));
            }
            if v.iter().any(|s| !s.is_finite()) {
                return Err(Error::Contract("speed profile must be finite".into()));
            }
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Contract("path points must be finite".into()));
        }

        let mut kept_points = Vec::with_capacity(points.len());
        let mut kept_speeds = speeds.as_ref().map(|v| Vec::with_capacity(v.len()));
        for (i, p) in points.iter().enumerate() {
            if kept_points.last().is_some_and(|last: &Point2| last.distance(*p) == 0.0) {
                continue;
            }
            kept_points.push(*p);
            if let (Some(out), Some(v)) = (kept_speeds.as_mut(), speeds.as_ref()) {
                out.push(v[i]);
            }
        }

        let mut cum = Vec::with_capacity(kept_points.len());
        cum.push(0.0);
        for w in kept_points.windows(2) {
            let next = cum.last().copied().unwrap_or(0.0) + w[0].distance(w[1]);
            cum.push(next);
        }
        let mean_curvature = mean_curvature(&kept_points);
        let chunks = build_chunks(&kept_points);
        let shape = classify(&kept_points);
        let segments = kept_points.windows(2).map(|w| Segment::new(w[0], w[1])).collect();
        Ok(Self {
            points: kept_points,
            cum_arclength: cum,
            mean_curvature,
            speeds: kept_speeds,
            segments,
            chunks,
            shape,
        })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn cum_arclength(&self) -> &[f64] {
        &self.cum_arclength
    }

    pub fn total_length(&self) -> f64 {
        self.cum_arclength.last().copied().unwrap_or(0.0)
    }

    pub fn mean_curvature(&self) -> f64 {
        self.mean_curvature
    }

    pub fn speeds(&self) -> Option<&[f64]> {
        self.speeds.as_deref()
    }

    pub fn is_degenerate(&self) -> bool {
        self.points.len() < 2
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let n = self.points.len();
        if n < 2 {
            return (0, 0.0);
        }
        let s = s.clamp(0.0, self.total_length());
        let seg = match self
            .cum_arclength
            .binary_search_by(|c| c.partial_cmp(&s).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let len = self.cum_arclength[seg + 1] - self.cum_arclength[seg];
        (seg, (s - self.cum_arclength[seg]) / len)
    }

    /// Linearly interpolated speed at arc length `s`, if a profile exists.
    pub fn speed_at(&self, s: f64) -> Option<f64> {
        let speeds = self.speeds.as_ref()?;
        if speeds.len() == 1 {
            return Some(speeds[0]);
        }
        let (seg, t) = self.locate(s);
        Some(speeds[seg] + (speeds[seg + 1] - speeds[seg]) * t)
    }

    /// Speed at parameter `t` of segment `seg`, if a profile exists.
    pub fn speed_on_segment(&self, seg: usize, t: f64) -> Option<f64> {
        let speeds = self.speeds.as_ref()?;
        if speeds.len() == 1 {
            return Some(speeds[0]);
        }
        Some(speeds[seg] + (speeds[seg + 1] - speeds[seg]) * t)
    }

    pub fn point_at(&self, s: f64) -> Point2 {
        if self.is_degenerate() {
            return self.points[0];
        }
        let (seg, t) = self.locate(s);
        let a = self.points[seg];
        a + (self.points[seg + 1] - a) * t
    }

    /// Unit tangent of the segment containing `s`.
    pub fn tangent_at(&self, s: f64) -> Point2 {
        if self.is_degenerate() {
            return Point2::new(1.0, 0.0);
        }
        let (seg, _) = self.locate(s);
        let d = self.points[seg + 1] - self.points[seg];
        d * (1.0 / d.norm())
    }

    /// Left-pointing unit normal of the segment containing `s`.
    pub fn normal_at(&self, s: f64) -> Point2 {
        self.tangent_at(s).perp()
    }

    #[inline]
    fn segment_frenet(&self, seg: usize, proj: SegmentProjection) -> PathProjection {
        let last = self.points.len() - 2;
        let len = self.cum_arclength[seg + 1] - self.cum_arclength[seg];
        let clamped_start = seg == 0 && proj.t_raw < 0.0;
        let clamped_end = seg == last && proj.t_raw > 1.0;
        PathProjection {
            frenet: FrenetCoord {
                s: self.cum_arclength[seg] + proj.t * len,
                d: proj.side * proj.dist_sq.sqrt(),
                in_domain: !(clamped_start || clamped_end),
            },
            dist_sq: proj.dist_sq,
            segment: seg,
            t: proj.t,
        }
    }

    fn degenerate_projection(&self, p: Point2) -> PathProjection {
        PathProjection {
            frenet: FrenetCoord {
                s: 0.0,
                d: p.distance(self.points[0]),
                in_domain: false,
            },
            dist_sq: (p - self.points[0]).norm_sq(),
            segment: 0,
            t: 0.0,
        }
    }

    /// Frenet coordinates of `p`; ties between equidistant segments go to
    /// the lowest segment index.
    #[inline]
    pub fn project(&self, p: Point2) -> FrenetCoord {
        self.project_detailed(p).frenet
    }

    /// Closest point by scanning every segment.
    pub fn project_exhaustive(&self, p: Point2) -> PathProjection {
        if self.is_degenerate() {
            return self.degenerate_projection(p);
        }
        let (i, proj) = self.best_of(p, 0..self.points.len() - 1);
        self.segment_frenet(i, proj)
    }

    /// Like [`project`](Self::project), also reporting the segment.
    ///
    /// Straight and circular paths restrict the search to the segment
    /// under the query's along-track coordinate or polar angle and its
    /// neighbours; other paths use a chunked branch-and-bound scan.
    #[inline]
    pub fn project_detailed(&self, p: Point2) -> PathProjection {
        let mut hint = usize::MAX;
        self.project_hinted(p, &mut hint)
    }

    /// Same result as [`project_detailed`](Self::project_detailed). On
    /// circular paths `hint` carries the last sector between calls, which
    /// makes scans over neighbouring points cheap; pass `usize::MAX` to
    /// start fresh.
    #[inline]
    pub fn project_hinted(&self, p: Point2, hint: &mut usize) -> PathProjection {
        if self.is_degenerate() {
            return self.degenerate_projection(p);
        }
        let nseg = self.points.len() - 1;
        let around = |k: usize| k.saturating_sub(1)..(k + 2).min(nseg);
        let (i, proj) = match &self.shape {
            PathShape::Line { dir, params, inv_step } => {
                let u = (p - self.points[0]).dot(*dir);
                if u < 0.0 {
                    self.best_of(p, 0..1)
                } else if u > params[nseg] {
                    self.best_of(p, nseg - 1..nseg)
                } else {
                    let mut k = ((u * inv_step) as usize).min(nseg - 1);
                    while k > 0 && params[k] > u {
                        k -= 1;
                    }
                    while k + 1 < nseg && params[k + 1] <= u {
                        k += 1;
                    }
                    if params[k] < u && u < params[k + 1] {
                        // foot strictly inside segment k
                        self.best_of(p, k..k + 1)
                    } else {
                        self.best_of(p, around(k))
                    }
                }
            }
            PathShape::Arc {
                center,
                radius,
                orient,
                spokes,
            } => {
                let q = p - *center;
                if q.norm_sq() < 1e-12 * radius * radius {
                    // every chord is nearly equidistant near the centre
                    return self.project_exhaustive(p);
                }
                let first = spokes[0];
                let last = spokes[nseg];
                if orient * first.cross(q) >= 0.0 && orient * q.cross(last) >= 0.0 {
                    let ahead = |k: usize| orient * spokes[k].cross(q) >= 0.0;
                    let mut k = if *hint < nseg {
                        *hint
                    } else {
                        spokes[..nseg].partition_point(|s| orient * s.cross(q) >= 0.0).saturating_sub(1)
                    };
                    while k > 0 && !ahead(k) {
                        k -= 1;
                    }
                    while k + 1 < nseg && ahead(k + 1) {
                        k += 1;
                    }
                    *hint = k;
                    if q.norm_sq() >= radius * radius {
                        // outside a convex chain inscribed in the circle the
                        // chord under the query's sector is closest
                        self.best_of(p, k..k + 1)
                    } else {
                        self.best_of(p, around(k))
                    }
                } else {
                    let (a, b) = (first.dot(q), last.dot(q));
                    if a > b {
                        self.best_of(p, 0..2.min(nseg))
                    } else if b > a {
                        self.best_of(p, nseg.saturating_sub(2)..nseg)
                    } else {
                        self.best_of_iter(p, (0..2.min(nseg)).chain(nseg.saturating_sub(2)..nseg))
                    }
                }
            }
            PathShape::General => self.branch_and_bound(p),
        };
        self.segment_frenet(i, proj)
    }

    /// Closest of the segments in a non-empty `range`; ties go to the
    /// lower index.
    #[inline]
    fn best_of(&self, p: Point2, range: std::ops::Range<usize>) -> (usize, SegmentProjection) {
        let segs = &self.segments[range.clone()];
        let mut best_i = range.start;
        let mut best = segs[0].project(p);
        for (off, seg) in segs.iter().enumerate().skip(1) {
            let proj = seg.project(p);
            if proj.dist_sq < best.dist_sq {
                best = proj;
                best_i = range.start + off;
            }
        }
        (best_i, best)
    }

    fn best_of_iter(&self, p: Point2, candidates: impl Iterator<Item = usize>) -> (usize, SegmentProjection) {
        let mut best: Option<(usize, SegmentProjection)> = None;
        for i in candidates {
            let proj = self.segments[i].project(p);
            let better = match best {
                None => true,
                Some((bi, b)) => proj.dist_sq < b.dist_sq || (proj.dist_sq == b.dist_sq && i < bi),
            };
            if better {
                best = Some((i, proj));
            }
        }
        best.expect("candidate set is never empty")
    }

    fn branch_and_bound(&self, p: Point2) -> (usize, SegmentProjection) {
        let mut best_i = 0;
        let mut best = self.segments[0].project(p);
        for chunk in &self.chunks {
            let bound = p.distance(chunk.center) - chunk.radius;
            // margin absorbs rounding in the bound itself
            if bound > best.dist_sq.sqrt() + 1e-6 {
                continue;
            }
            for i in chunk.first..chunk.end {
                let proj = self.segments[i].project(p);
                if proj.dist_sq < best.dist_sq || (proj.dist_sq == best.dist_sq && i < best_i) {
                    best = proj;
                    best_i = i;
                }
            }
        }
        (best_i, best)
    }
}

fn classify(points: &[Point2]) -> PathShape {
    if points.len() < 3 {
        return PathShape::General;
    }
    let p0 = points[0];
    let chord = points[points.len() - 1] - p0;
    let chord_len = chord.norm();
    if chord_len > 0.0 {
        let dir = chord * (1.0 / chord_len);
        let tol = 1e-9 * chord_len;
        let params: Vec<f64> = points.iter().map(|v| (*v - p0).dot(dir)).collect();
        let on_line = points.iter().all(|v| dir.cross(*v - p0).abs() <= tol);
        let advancing = params.windows(2).all(|w| w[1] > w[0]);
        if on_line && advancing {
            let inv_step = (points.len() - 1) as f64 / params[params.len() - 1];
            return PathShape::Line { dir, params, inv_step };
        }
    }
    let mid = points[points.len() / 2];
    let Some(center) = circumcenter(p0, mid, points[points.len() - 1]) else {
        return PathShape::General;
    };
    let radius = p0.distance(center);
    if !(radius.is_finite() && radius > 0.0) {
        return PathShape::General;
    }
    if points.iter().any(|v| (v.distance(center) - radius).abs() > 1e-9 * radius) {
        return PathShape::General;
    }
    let spokes: Vec<Point2> = points
        .iter()
        .map(|v| {
            let d = *v - center;
            d * (1.0 / d.norm())
        })
        .collect();
    let orient = if spokes[0].cross(spokes[1]) > 0.0 { 1.0 } else { -1.0 };
    let mut span = 0.0;
    for w in spokes.windows(2) {
        let (c, d) = (orient * w[0].cross(w[1]), w[0].dot(w[1]));
        if !(c > 0.0 && d > 0.0) {
            return PathShape::General;
        }
        span += c.atan2(d);
    }
    if span >= 0.95 * std::f64::consts::PI {
        return PathShape::General;
    }
    PathShape::Arc {
        center,
        radius,
        orient,
        spokes,
    }
}

fn circumcenter(a: Point2, b: Point2, c: Point2) -> Option<Point2> {
    let ab = b - a;
    let ac = c - a;
    let d = 2.0 * ab.cross(ac);
    if d.abs() <= 1e-12 * ab.norm_sq().max(ac.norm_sq()) {
        return None;
    }
    let ux = (ac.y * ab.norm_sq() - ab.y * ac.norm_sq()) / d;
    let uy = (ab.x * ac.norm_sq() - ac.x * ab.norm_sq()) / d;
    Some(a + Point2::new(ux, uy))
}

fn build_chunks(points: &[Point2]) -> Vec<SegmentChunk> {
    if points.len() < 2 {
        return Vec::new();
    }
    let nseg = points.len() - 1;
    (0..nseg)
        .step_by(CHUNK)
        .map(|first| {
            let end = (first + CHUNK).min(nseg);
            let verts = &points[first..=end];
            let (lo, hi) = bounding_box(verts);
            let center = (lo + hi) * 0.5;
            let radius = verts
                .iter()
                .map(|v| v.distance(center))
                .fold(0.0, f64::max);
            SegmentChunk {
                first,
                end,
                center,
                radius,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Polygons and boxes
// ---------------------------------------------------------------------------

/// Even-odd point-in-polygon test. The polygon is implicitly closed.
pub fn point_in_polygon(p: Point2, polygon: &[Point2]) -> bool {
    let n = polygon.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (polygon[i], polygon[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Even-odd containment in the union of several polygons.
pub fn point_in_any_polygon(p: Point2, polygons: &[Vec<Point2>]) -> bool {
    polygons.iter().any(|poly| point_in_polygon(p, poly))
}

fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let o1 = (b - a).cross(c - a);
    let o2 = (b - a).cross(d - a);
    let o3 = (d - c).cross(a - c);
    let o4 = (d - c).cross(b - c);
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    let on_segment = |p: Point2, q: Point2, r: Point2| {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// True when no two non-adjacent edges of the closed polygon touch.
pub fn is_simple_polygon(polygon: &[Point2]) -> bool {
    let n = polygon.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (polygon[i], polygon[(i + 1) % n]);
        if a == b {
            return false;
        }
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (c, d) = (polygon[j], polygon[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

/// Rectangle with arbitrary heading.
///
/// Containment is half-open in the box frame (`-h <= u < h`), so boxes that
/// line up with the raster cover exactly `2h / resolution` cells per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Point2,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl OrientedBox {
    pub fn of_agent(agent: &AgentState, inflation: f64) -> Self {
        Self {
            center: agent.position,
            heading: agent.heading,
            half_length: 0.5 * agent.length + inflation,
            half_width: 0.5 * agent.width + inflation,
        }
    }

    pub fn to_box_frame(&self, p: Point2) -> Point2 {
        (p - self.center).rotate(-self.heading)
    }

    pub fn contains(&self, p: Point2) -> bool {
        let q = self.to_box_frame(p);
        -self.half_length <= q.x
            && q.x < self.half_length
            && -self.half_width <= q.y
            && q.y < self.half_width
    }

    pub fn corners(&self) -> [Point2; 4] {
        let (hl, hw) = (self.half_length, self.half_width);
        [
            Point2::new(hl, hw),
            Point2::new(-hl, hw),
            Point2::new(-hl, -hw),
            Point2::new(hl, -hw),
        ]
        .map(|c| self.center + c.rotate(self.heading))
    }

    pub fn circumradius(&self) -> f64 {
        self.half_length.hypot(self.half_width)
    }
}

/// Cells whose centres lie inside the box, in row-major order.
pub fn rasterize_box(obb: &OrientedBox, grid: &GridSpec) -> Vec<Cell> {
    let n = grid.cells_per_axis() as isize;
    if n == 0 || obb.half_length <= 0.0 || obb.half_width <= 0.0 {
        return Vec::new();
    }
    let local_corners = obb.corners().map(|c| grid.to_local(c));
    let (lo, hi) = bounding_box(&local_corners);
    let h = grid.half_side();
    let res = grid.resolution;
    let col_lo = (((lo.x + h) / res).floor() as isize - 1).max(0);
    let col_hi = (((hi.x + h) / res).ceil() as isize + 1).min(n - 1);
    let row_lo = (((h - hi.y) / res).floor() as isize - 1).max(0);
    let row_hi = (((h - lo.y) / res).ceil() as isize + 1).min(n - 1);
    let mut cells = Vec::new();
    if col_lo > col_hi || row_lo > row_hi {
        return cells;
    }
    for row in row_lo..=row_hi {
        for col in col_lo..=col_hi {
            let cell = Cell::new(row as usize, col as usize);
            if obb.contains(grid.cell_to_world(cell)) {
                cells.push(cell);
            }
        }
    }
    cells
}

/// Grid cells covered by an agent's oriented bounding box grown by
/// `inflation` meters on every side.
pub fn rasterize_footprint(agent: &AgentState, grid: &GridSpec, inflation: f64) -> Vec<Cell> {
    rasterize_box(&OrientedBox::of_agent(agent, inflation), grid)
}

//! Oriented box geometry in the gravity-aligned frame.
//!
//! Boxes only rotate about the vertical axis, so every volume below factors
//! into a bird's-eye-view (BEV) area times a vertical extent. Intersections
//! are computed exactly by convex polygon clipping; the enclosing volume used
//! by GIoU is the BEV convex hull of both footprints extruded over the joint
//! vertical span, which is exact when the spans coincide.

use std::f64::consts::{PI, TAU};

use nalgebra::Point2;

use crate::detection::Detection;
use crate::error::{Error, Result};

/// On-edge tolerance for polygon clipping, in meters.
pub const CLIP_EPS: f64 = 1e-9;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Signed difference `a - b` wrapped into `(-π, π]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

/// Gravity-aligned oriented 3D box.
///
/// `length` runs along the heading direction given by `yaw`, `width` across it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox3D {
    pub center_x: f64,
    pub center_y: f64,
    pub center_z: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
}

impl BBox3D {
    /// Builds a validated box with `yaw` normalized into `(-π, π]`.
    pub fn new(
        center_x: f64,
        center_y: f64,
        center_z: f64,
        length: f64,
        width: f64,
        height: f64,
        yaw: f64,
    ) -> Result<Self> {
        let b = Self {
            center_x,
            center_y,
            center_z,
            length,
            width,
            height,
            yaw,
        };
        b.validate()?;
        Ok(Self {
            yaw: wrap_angle(yaw),
            ..b
        })
    }

    /// Layout `[cx, cy, cz, l, w, h, yaw]`.
    pub fn from_array(a: [f64; 7]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5], a[6])
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.center_x,
            self.center_y,
            self.center_z,
            self.length,
            self.width,
            self.height,
            self.yaw,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("center_x", self.center_x),
            ("center_y", self.center_y),
            ("center_z", self.center_z),
            ("length", self.length),
            ("width", self.width),
            ("height", self.height),
            ("yaw", self.yaw),
        ];
        for (field, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidBox {
                    field,
                    reason: "must be finite",
                });
            }
        }
        for (field, v) in &fields[3..6] {
            if *v <= 0.0 {
                return Err(Error::InvalidBox {
                    field,
                    reason: "must be positive",
                });
            }
        }
        Ok(())
    }

    pub fn bottom(&self) -> f64 {
        self.center_z - self.height / 2.0
    }

    pub fn top(&self) -> f64 {
        self.center_z + self.height / 2.0
    }

    pub fn volume(&self) -> f64 {
        self.length * self.width * self.height
    }

    pub fn bev_area(&self) -> f64 {
        self.length * self.width
    }

    /// Radius of the circle circumscribing the BEV footprint.
    pub fn bev_radius(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }

    pub fn translated(&self, dx: f64, dy: f64, dz: f64) -> Self {
        Self {
            center_x: self.center_x + dx,
            center_y: self.center_y + dy,
            center_z: self.center_z + dz,
            ..*self
        }
    }

    /// Rotates the box about the vertical axis through the origin.
    pub fn rotated_about_origin(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            center_x: c * self.center_x - s * self.center_y,
            center_y: s * self.center_x + c * self.center_y,
            yaw: wrap_angle(self.yaw + angle),
            ..*self
        }
    }
}

/// Convex BEV polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct BevPolygon {
    vertices: Vec<Point2<f64>>,
}

impl BevPolygon {
    /// Normalizes `points` into a strictly convex CCW polygon.
    ///
    /// Points must already be in convex position (either winding). Returns
    /// `None` when fewer than three non-collinear vertices remain.
    pub fn new(points: Vec<Point2<f64>>) -> Option<Self> {
        let mut pts = dedup_ring(points);
        if signed_area(&pts) < 0.0 {
            pts.reverse();
        }
        let pts = drop_collinear(pts);
        if pts.len() < 3 || signed_area(&pts) <= 0.0 {
            return None;
        }
        Some(Self { vertices: pts })
    }

    pub fn vertices(&self) -> &[Point2<f64>] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// Intersection with another convex polygon, `None` when degenerate.
    pub fn intersection(&self, other: &BevPolygon) -> Option<BevPolygon> {
        let clipped = clip_convex(&self.vertices, &other.vertices);
        BevPolygon::new(clipped)
    }
}

/// The four BEV corners of `b` in counter-clockwise order.
pub fn bev_corners(b: &BBox3D) -> BevPolygon {
    BevPolygon {
        vertices: raw_corners(b).to_vec(),
    }
}

fn raw_corners(b: &BBox3D) -> [Point2<f64>; 4] {
    let (s, c) = b.yaw.sin_cos();
    let hl = b.length / 2.0;
    let hw = b.width / 2.0;
    let local = [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)];
    local.map(|(x, y)| Point2::new(b.center_x + c * x - s * y, b.center_y + s * x + c * y))
}

fn cross(o: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn signed_area(pts: &[Point2<f64>]) -> f64 {
    if pts.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..pts.len() {
        let p = pts[i];
        let q = pts[(i + 1) % pts.len()];
        acc += p.x * q.y - q.x * p.y;
    }
    acc / 2.0
}

fn dedup_ring(mut pts: Vec<Point2<f64>>) -> Vec<Point2<f64>> {
    pts.dedup_by(|a, b| (a.x - b.x).abs() <= CLIP_EPS && (a.y - b.y).abs() <= CLIP_EPS);
    while pts.len() > 1 {
        let (f, l) = (pts[0], pts[pts.len() - 1]);
        if (f.x - l.x).abs() <= CLIP_EPS && (f.y - l.y).abs() <= CLIP_EPS {
            pts.pop();
        } else {
            break;
        }
    }
    pts
}

fn drop_collinear(pts: Vec<Point2<f64>>) -> Vec<Point2<f64>> {
    let mut pts = pts;
    loop {
        let n = pts.len();
        if n < 3 {
            return pts;
        }
        let idx = (0..n).find(|&i| {
            let prev = pts[(i + n - 1) % n];
            let next = pts[(i + 1) % n];
            cross(&prev, &pts[i], &next).abs() <= CLIP_EPS * CLIP_EPS.max(1.0)
        });
        match idx {
            Some(i) => {
                pts.remove(i);
            }
            None => return pts,
        }
    }
}

/// Sutherland-Hodgman clipping of `subject` by the convex CCW polygon `clip`.
fn clip_convex(subject: &[Point2<f64>], clip: &[Point2<f64>]) -> Vec<Point2<f64>> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let edge_len = (b - a).norm();
        // signed distance of p from the edge line, positive on the inner side
        let side = |p: &Point2<f64>| cross(&a, &b, p) / edge_len;
        let input = std::mem::take(&mut output);
        let mut prev = input[input.len() - 1];
        let mut prev_side = side(&prev);
        for p in input {
            let cur_side = side(&p);
            let cur_in = cur_side >= -CLIP_EPS;
            let prev_in = prev_side >= -CLIP_EPS;
            if cur_in {
                if !prev_in {
                    output.push(segment_cut(&prev, &p, prev_side, cur_side));
                }
                output.push(p);
            } else if prev_in && prev_side > CLIP_EPS {
                output.push(segment_cut(&prev, &p, prev_side, cur_side));
            }
            prev = p;
            prev_side = cur_side;
        }
    }
    output
}

fn segment_cut(p: &Point2<f64>, q: &Point2<f64>, dp: f64, dq: f64) -> Point2<f64> {
    let t = dp / (dp - dq);
    p + (q - p) * t
}

/// Convex hull (Andrew's monotone chain), CCW, collinear points removed.
pub fn convex_hull(points: &[Point2<f64>]) -> Vec<Point2<f64>> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point2<f64>> = Vec::with_capacity(pts.len() * 2);
    for p in &pts {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    let lower = hull.len() + 1;
    for p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    hull
}

/// BEV intersection area of two boxes' footprints.
pub fn bev_intersection_area(a: &BBox3D, b: &BBox3D) -> f64 {
    let d = (a.center_x - b.center_x).hypot(a.center_y - b.center_y);
    if d >= a.bev_radius() + b.bev_radius() {
        return 0.0;
    }
    let pa = raw_corners(a);
    let pb = raw_corners(b);
    let clipped = clip_convex(&pa, &pb);
    signed_area(&clipped).max(0.0)
}

/// Vertical overlap of the two boxes' `[bottom, top]` spans.
pub fn vertical_overlap(a: &BBox3D, b: &BBox3D) -> f64 {
    (a.top().min(b.top()) - a.bottom().max(b.bottom())).max(0.0)
}

/// Intersection, union, and enclosing-hull volumes of a box pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxOverlap {
    pub intersection: f64,
    pub union: f64,
    pub hull: f64,
}

impl BoxOverlap {
    pub fn iou(&self) -> f64 {
        (self.intersection / self.union).clamp(0.0, 1.0)
    }

    pub fn giou(&self) -> f64 {
        self.iou() - (self.hull - self.union).max(0.0) / self.hull
    }
}

pub fn box_overlap(a: &BBox3D, b: &BBox3D) -> BoxOverlap {
    let dz = vertical_overlap(a, b);
    let intersection = if dz > 0.0 {
        bev_intersection_area(a, b) * dz
    } else {
        0.0
    };
    let union = a.volume() + b.volume() - intersection;
    let mut corners = raw_corners(a).to_vec();
    corners.extend_from_slice(&raw_corners(b));
    let hull_area = signed_area(&convex_hull(&corners));
    let span = a.top().max(b.top()) - a.bottom().min(b.bottom());
    // the hull always contains the union; guard against round-off
    let hull = (hull_area * span).max(union);
    BoxOverlap {
        intersection,
        union,
        hull,
    }
}

/// Volumetric intersection over union.
pub fn iou_3d(a: &BBox3D, b: &BBox3D) -> f64 {
    let dz = vertical_overlap(a, b);
    if dz <= 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * dz;
    if inter <= 0.0 {
        return 0.0;
    }
    (inter / (a.volume() + b.volume() - inter)).clamp(0.0, 1.0)
}

/// Generalized IoU: `I/U - (C - U)/C` with `C` the extruded BEV hull volume.
pub fn giou_3d(a: &BBox3D, b: &BBox3D) -> f64 {
    box_overlap(a, b).giou()
}

pub fn bev_center_distance(a: &BBox3D, b: &BBox3D) -> f64 {
    (a.center_x - b.center_x).hypot(a.center_y - b.center_y)
}

/// Greedy non-maximum suppression by `iou_3d`.
///
/// Input is assumed to be one frame and one class. Equal scores keep input
/// order. A detection survives iff its IoU with every kept one is at most
/// `iou_threshold`.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| dets[j].score.total_cmp(&dets[i].score));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let cand = &dets[i].bbox;
        if kept
            .iter()
            .all(|&k| iou_3d(&dets[k].bbox, cand) <= iou_threshold)
        {
            kept.push(i);
        }
    }
    kept.into_iter().map(|i| dets[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;
    use std::f64::consts::FRAC_PI_4;

    fn cube(x: f64, y: f64, z: f64) -> BBox3D {
        BBox3D::new(x, y, z, 1.0, 1.0, 1.0, 0.0).unwrap()
    }

    fn det(b: BBox3D, s: f64) -> Detection {
        Detection::new(b, s, "vehicle")
    }

    fn same_ring(got: &[Point2<f64>], want: &[(f64, f64)], tol: f64) -> bool {
        let n = want.len();
        got.len() == n
            && (0..n).any(|shift| {
                (0..n).all(|i| {
                    let g = got[(i + shift) % n];
                    (g.x - want[i].0).abs() < tol && (g.y - want[i].1).abs() < tol
                })
            })
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI / 2.0) + FRAC_PI_2).abs() < 1e-12);
        assert!((angle_diff(PI - 0.1, -PI + 0.1) + 0.2).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_boxes() {
        assert!(matches!(
            BBox3D::new(0.0, 0.0, 0.0, 1.0, -1.0, 1.0, 0.0),
            Err(Error::InvalidBox { field: "width", .. })
        ));
        assert!(BBox3D::new(f64::NAN, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0).is_err());
        let b = BBox3D::new(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 3.0 * PI).unwrap();
        assert!((b.yaw - PI).abs() < 1e-12);
    }

    #[test]
    fn corners_axis_aligned_unit_cube() {
        let c = bev_corners(&cube(0.0, 0.0, 0.0));
        let want = [(0.5, 0.5), (-0.5, 0.5), (-0.5, -0.5), (0.5, -0.5)];
        assert!(same_ring(c.vertices(), &want, 1e-12));
        assert!((c.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corners_square_symmetry() {
        let a = bev_corners(&cube(0.0, 0.0, 0.0));
        let b = bev_corners(&BBox3D::new(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, FRAC_PI_2).unwrap());
        let want: Vec<(f64, f64)> = a.vertices().iter().map(|p| (p.x, p.y)).collect();
        assert!(same_ring(b.vertices(), &want, 1e-12));
    }

    #[test]
    fn corners_rotated_rectangle() {
        let b = BBox3D::new(0.0, 0.0, 0.0, 2.0, 1.0, 1.0, FRAC_PI_4).unwrap();
        let c = bev_corners(&b);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let rot = |x: f64, y: f64| (r * x - r * y, r * x + r * y);
        let want = [rot(1.0, 0.5), rot(-1.0, 0.5), rot(-1.0, -0.5), rot(1.0, -0.5)];
        assert!(same_ring(c.vertices(), &want, 1e-9));
        assert!((want[0].0 - 0.3536).abs() < 1e-4 && (want[0].1 - 1.0607).abs() < 1e-4);
    }

    #[test]
    fn iou_cases() {
        let a = cube(0.0, 0.0, 0.0);
        assert_eq!(iou_3d(&a, &a), 1.0);
        assert_eq!(iou_3d(&a, &cube(10.0, 0.0, 0.0)), 0.0);
        assert!((iou_3d(&a, &cube(0.5, 0.0, 0.0)) - 1.0 / 3.0).abs() < 1e-12);
        // vertical separation only
        assert_eq!(iou_3d(&a, &cube(0.0, 0.0, 1.5)), 0.0);
    }

    #[test]
    fn giou_cases() {
        let a = cube(0.0, 0.0, 0.0);
        assert!((giou_3d(&a, &a) - 1.0).abs() < 1e-12);
        assert!((giou_3d(&a, &cube(10.0, 0.0, 0.0)) + 9.0 / 11.0).abs() < 1e-9);
        let big = BBox3D::new(0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0).unwrap();
        assert!((giou_3d(&big, &a) - 0.125).abs() < 1e-9);
        assert!((iou_3d(&big, &a) - 0.125).abs() < 1e-9);
    }

    #[test]
    fn giou_tends_to_minus_one() {
        let a = cube(0.0, 0.0, 0.0);
        let mut last = 1.0;
        for d in [2.0, 5.0, 20.0, 100.0, 1000.0] {
            let g = giou_3d(&a, &cube(d, 0.0, 0.0));
            assert!(g < last);
            last = g;
        }
        assert!(last < -0.99);
    }

    #[test]
    fn center_distance() {
        let a = cube(0.0, 0.0, 0.0);
        assert_eq!(bev_center_distance(&a, &a), 0.0);
        assert_eq!(bev_center_distance(&a, &cube(3.0, 4.0, 9.0)), 5.0);
        let d = bev_center_distance(&cube(1.5, -2.0, 0.0), &cube(-1.0, 2.0, 0.0));
        assert!((d - 22.25f64.sqrt()).abs() < 1e-12);
        assert!((d - 4.717).abs() < 1e-3);
    }

    #[test]
    fn nms_full_overlap() {
        let b = cube(0.0, 0.0, 0.0);
        let out = nms(&[det(b, 0.8), det(b, 0.9)], 0.25);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].score, 0.9);
    }

    #[test]
    fn nms_disjoint() {
        let out = nms(&[det(cube(0.0, 0.0, 0.0), 0.3), det(cube(5.0, 0.0, 0.0), 0.9)], 0.25);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].score, 0.9);
    }

    #[test]
    fn nms_colinear_chain() {
        let dets = [
            det(cube(0.0, 0.0, 0.0), 0.9),
            det(cube(0.4, 0.0, 0.0), 0.8),
            det(cube(0.8, 0.0, 0.0), 0.7),
        ];
        assert!((iou_3d(&dets[0].bbox, &dets[1].bbox) - 0.6 / 1.4).abs() < 1e-12);
        assert!((iou_3d(&dets[0].bbox, &dets[2].bbox) - 0.2 / 1.8).abs() < 1e-12);
        let out = nms(&dets, 0.25);
        let scores: Vec<f64> = out.iter().map(|d| d.score).collect();
        assert_eq!(scores, vec![0.9, 0.7]);
    }

    #[test]
    fn nms_ties_keep_input_order() {
        let a = det(cube(0.0, 0.0, 0.0), 0.5);
        let mut b = det(cube(0.1, 0.0, 0.0), 0.5);
        b.class = "other".into();
        let out = nms(&[a.clone(), b], 0.25);
        assert_eq!(out, vec![a]);
        assert!(nms(&[], 0.25).is_empty());
    }

    #[test]
    fn polygon_normalization() {
        let cw = vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(0.5, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
        ];
        let p = BevPolygon::new(cw).unwrap();
        assert_eq!(p.vertices().len(), 4);
        assert!((p.area() - 1.0).abs() < 1e-12);
        assert!(BevPolygon::new(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)]).is_none());
    }

    #[test]
    fn touching_squares_have_degenerate_intersection() {
        let a = bev_corners(&cube(0.0, 0.0, 0.0));
        let b = bev_corners(&cube(1.0, 0.0, 0.0));
        assert!(a.intersection(&b).is_none());
        assert_eq!(bev_intersection_area(&cube(0.0, 0.0, 0.0), &cube(1.0, 0.0, 0.0)), 0.0);
    }
}

//! Oriented bounding boxes (yaw only), convex polygon clipping, IoU and DIoU.
//!
//! All routines are generic over [`Scalar`] so the same code produces values
//! (`f64`) and exact derivatives ([`Dual`](crate::autodiff::Dual)).

use arrayvec::ArrayVec;

use crate::autodiff::Scalar;
use crate::scene::{AssetSpec, Pose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec2<S = f64> {
    pub x: S,
    pub y: S,
}

impl<S: Scalar> Vec2<S> {
    pub fn new(x: S, y: S) -> Self {
        Self { x, y }
    }

    pub fn from_f64(x: f64, y: f64) -> Self {
        Self::new(S::cst(x), S::cst(y))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, s: S) -> Self {
        Self::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Self) -> S {
        self.x * o.y - self.y * o.x
    }

    pub fn norm_sq(self) -> S {
        self.dot(self)
    }

    pub fn norm(self) -> S {
        self.norm_sq().sqrt()
    }

    pub fn value(self) -> Vec2<f64> {
        Vec2 {
            x: self.x.val(),
            y: self.y.val(),
        }
    }
}

/// Footprint of an oriented box: center, half extents along the box's own
/// axes, yaw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb2<S = f64> {
    pub center: Vec2<S>,
    pub half_extents: [f64; 2],
    pub theta: S,
}

/// Yaw-rotated 3D box: footprint plus vertical extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb3<S = f64> {
    pub footprint: Obb2<S>,
    pub z_min: f64,
    pub z_max: f64,
}

impl Obb2<f64> {
    pub fn new(center: [f64; 2], half_extents: [f64; 2], theta: f64) -> Self {
        Self {
            center: Vec2::from_f64(center[0], center[1]),
            half_extents,
            theta,
        }
    }
}

impl<S: Scalar> Obb2<S> {
    pub fn area(&self) -> f64 {
        4.0 * self.half_extents[0] * self.half_extents[1]
    }

    /// Axis-aligned hull `[min_x, min_y, max_x, max_y]` of the footprint (values only).
    pub fn aabb(&self) -> [f64; 4] {
        let (s, c) = self.theta.val().sin_cos();
        let [hx, hy] = self.half_extents;
        let ex = c.abs() * hx + s.abs() * hy;
        let ey = s.abs() * hx + c.abs() * hy;
        let (cx, cy) = (self.center.x.val(), self.center.y.val());
        [cx - ex, cy - ey, cx + ex, cy + ey]
    }
}

impl Obb3<f64> {
    pub fn new(center: [f64; 3], dims: [f64; 3], theta: f64) -> Self {
        Self {
            footprint: Obb2::new(
                [center[0], center[1]],
                [dims[0] / 2.0, dims[1] / 2.0],
                theta,
            ),
            z_min: center[2] - dims[2] / 2.0,
            z_max: center[2] + dims[2] / 2.0,
        }
    }

    pub fn from_pose(pose: &Pose, spec: &AssetSpec) -> Self {
        Self::new([pose.x, pose.y, pose.z], spec.dims, pose.theta)
    }
}

impl<S: Scalar> Obb3<S> {
    pub fn height(&self) -> f64 {
        self.z_max - self.z_min
    }

    pub fn volume(&self) -> f64 {
        self.footprint.area() * self.height()
    }

    pub fn z_center(&self) -> f64 {
        0.5 * (self.z_min + self.z_max)
    }
}

/// Footprint corners, counterclockwise, starting at the local `(+hx, +hy)` corner.
pub fn corners<S: Scalar>(b: &Obb2<S>) -> [Vec2<S>; 4] {
    let (c, s) = (b.theta.cos(), b.theta.sin());
    let [hx, hy] = b.half_extents;
    [(hx, hy), (-hx, hy), (-hx, -hy), (hx, -hy)]
        .map(|(lx, ly)| Vec2::new(b.center.x + c * lx - s * ly, b.center.y + s * lx + c * ly))
}

/// Shoelace area; positive for counterclockwise polygons.
pub fn signed_area<S: Scalar>(poly: &[Vec2<S>]) -> S {
    let n = poly.len();
    let mut acc = S::cst(0.0);
    for i in 0..n {
        acc += poly[i].cross(poly[(i + 1) % n]);
    }
    acc * 0.5
}

type Poly<S> = ArrayVec<Vec2<S>, 16>;

/// Area of the intersection of two convex counterclockwise polygons
/// (Sutherland–Hodgman clipping of `a` against each edge of `b`).
pub fn polygon_intersection_area<S: Scalar>(a: &[Vec2<S>], b: &[Vec2<S>]) -> S {
    if a.len() < 3 || b.len() < 3 {
        return S::cst(0.0);
    }
    if signed_area(a).val() <= 0.0 || signed_area(b).val() <= 0.0 {
        return S::cst(0.0);
    }
    let mut subject: Poly<S> = a.iter().copied().collect();
    for k in 0..b.len() {
        let p = b[k];
        let q = b[(k + 1) % b.len()];
        let edge = q.sub(p);
        let side = |pt: Vec2<S>| edge.cross(pt.sub(p));
        let input = std::mem::take(&mut subject);
        if input.is_empty() {
            break;
        }
        for i in 0..input.len() {
            let s = input[(i + input.len() - 1) % input.len()];
            let e = input[i];
            let (ds, de) = (side(s), side(e));
            let (s_in, e_in) = (ds.val() >= 0.0, de.val() >= 0.0);
            if e_in != s_in {
                let t = ds / (ds - de);
                subject.push(s.add(e.sub(s).scale(t)));
            }
            if e_in {
                subject.push(e);
            }
        }
    }
    if subject.len() < 3 {
        return S::cst(0.0);
    }
    let area = signed_area(&subject);
    if area.val() <= 0.0 {
        S::cst(0.0)
    } else {
        area
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouMode {
    /// Footprint areas only.
    Xy,
    /// Volumes: footprint intersection times vertical overlap.
    Xyz,
}

fn aabb_disjoint(a: [f64; 4], b: [f64; 4]) -> bool {
    a[2] < b[0] || b[2] < a[0] || a[3] < b[1] || b[3] < a[1]
}

fn z_overlap<S: Scalar>(a: &Obb3<S>, b: &Obb3<S>) -> f64 {
    (a.z_max.min(b.z_max) - a.z_min.max(b.z_min)).max(0.0)
}

pub fn footprint_intersection<S: Scalar>(a: &Obb2<S>, b: &Obb2<S>) -> S {
    if aabb_disjoint(a.aabb(), b.aabb()) {
        return S::cst(0.0);
    }
    polygon_intersection_area(&corners(a), &corners(b))
}

pub fn iou<S: Scalar>(a: &Obb3<S>, b: &Obb3<S>, mode: IouMode) -> S {
    match mode {
        IouMode::Xy => {
            let inter = footprint_intersection(&a.footprint, &b.footprint);
            let union = S::cst(a.footprint.area() + b.footprint.area()) - inter;
            if union.val() <= 0.0 {
                S::cst(0.0)
            } else {
                inter / union
            }
        }
        IouMode::Xyz => {
            let dz = z_overlap(a, b);
            if dz <= 0.0 {
                return S::cst(0.0);
            }
            let inter = footprint_intersection(&a.footprint, &b.footprint) * dz;
            let union = S::cst(a.volume() + b.volume()) - inter;
            if union.val() <= 0.0 {
                S::cst(0.0)
            } else {
                inter / union
            }
        }
    }
}

/// Squared center distance `ρ²` and squared enclosing-box diagonal `c²`.
pub fn diou_penalty_terms<S: Scalar>(a: &Obb3<S>, b: &Obb3<S>, mode: IouMode) -> (S, S) {
    let d = a.footprint.center.sub(b.footprint.center);
    let mut rho2 = d.norm_sq();
    let ca = corners(&a.footprint);
    let cb = corners(&b.footprint);
    let mut lo = ca[0];
    let mut hi = ca[0];
    for p in ca.iter().chain(cb.iter()).skip(1) {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let ext = hi.sub(lo);
    let mut c2 = ext.norm_sq();
    if mode == IouMode::Xyz {
        let dz = a.z_center() - b.z_center();
        rho2 = rho2 + dz * dz;
        let wz = a.z_max.max(b.z_max) - a.z_min.min(b.z_min);
        c2 = c2 + wz * wz;
    }
    (rho2, c2)
}

/// Distance-IoU metric `IoU − ρ²/c²`, in `(−1, 1]`.
pub fn diou<S: Scalar>(a: &Obb3<S>, b: &Obb3<S>, mode: IouMode) -> S {
    let (rho2, c2) = diou_penalty_terms(a, b, mode);
    iou(a, b, mode) - rho2 / c2
}

/// Overlap penalty `IoU · (1 − ρ²/c²)`, in `[0, 1]`. Equals 1 for coincident
/// boxes, 0 for non-intersecting ones, and is continuous at contact.
pub fn overlap_penalty<S: Scalar>(a: &Obb3<S>, b: &Obb3<S>, mode: IouMode) -> S {
    let (rho2, c2) = diou_penalty_terms(a, b, mode);
    iou(a, b, mode) * (S::cst(1.0) - rho2 / c2)
}

/// Euclidean distance from `p` to the segment `seg[0]`–`seg[1]`.
pub fn point_segment_distance<S: Scalar>(p: Vec2<S>, seg: [Vec2<S>; 2]) -> S {
    let [a, b] = seg;
    let ab = b.sub(a);
    let len2 = ab.norm_sq();
    let t = if len2.val() > 0.0 {
        (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        S::cst(0.0)
    };
    p.sub(a.add(ab.scale(t))).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn unit_square(cx: f64, cy: f64, theta: f64) -> Vec<Vec2> {
        corners(&Obb2::new([cx, cy], [0.5, 0.5], theta)).to_vec()
    }

    fn pts(c: [Vec2; 4]) -> Vec<(f64, f64)> {
        c.iter().map(|p| (p.x, p.y)).collect()
    }

    #[test]
    fn corner_order() {
        let c = corners(&Obb2::new([0.0, 0.0], [0.5, 0.5], 0.0));
        assert_eq!(
            pts(c),
            vec![(0.5, 0.5), (-0.5, 0.5), (-0.5, -0.5), (0.5, -0.5)]
        );

        let c = corners(&Obb2::new([0.0, 0.0], [0.5, 0.5], FRAC_PI_2));
        let expect = [(-0.5, 0.5), (-0.5, -0.5), (0.5, -0.5), (0.5, 0.5)];
        for (p, e) in c.iter().zip(expect) {
            assert_abs_diff_eq!(p.x, e.0, epsilon = 1e-12);
            assert_abs_diff_eq!(p.y, e.1, epsilon = 1e-12);
        }

        let c = corners(&Obb2::new([1.0, 2.0], [0.5, 0.5], 0.0));
        assert_eq!(pts(c), vec![(1.5, 2.5), (0.5, 2.5), (0.5, 1.5), (1.5, 1.5)]);
    }

    #[test]
    fn intersection_examples() {
        let a = unit_square(0.0, 0.0, 0.0);
        assert_abs_diff_eq!(polygon_intersection_area(&a, &a), 1.0, epsilon = 1e-12);
        let far = unit_square(3.0, 0.0, 0.0);
        assert_eq!(polygon_intersection_area(&a, &far), 0.0);
        let rot = unit_square(0.0, 0.0, FRAC_PI_4);
        let expect = 2.0 * (2f64.sqrt() - 1.0);
        assert_abs_diff_eq!(polygon_intersection_area(&a, &rot), expect, epsilon = 1e-12);
        let degenerate = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(2.0, 0.0),
        ];
        assert_eq!(polygon_intersection_area(&a, &degenerate), 0.0);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn iou_examples() {
        let a = Obb3::new([0.5, 0.5, 0.5], [1.0; 3], 0.0);
        assert_abs_diff_eq!(iou(&a, &a, IouMode::Xy), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(iou(&a, &a, IouMode::Xyz), 1.0, epsilon = 1e-12);

        let up = Obb3::new([0.5, 0.5, 1.5], [1.0; 3], 0.0);
        assert_eq!(iou(&a, &up, IouMode::Xyz), 0.0);
        assert_abs_diff_eq!(iou(&a, &up, IouMode::Xy), 1.0, epsilon = 1e-12);

        let r = Obb3::new([0.5, 0.5, 0.5], [1.0; 3], FRAC_PI_4);
        let inter = 2.0 * (2f64.sqrt() - 1.0);
        assert_abs_diff_eq!(
            iou(&a, &r, IouMode::Xy),
            inter / (2.0 - inter),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(iou(&a, &r, IouMode::Xy), 0.7071, epsilon = 1e-4);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn diou_examples() {
        let a = Obb3::new([0.5, 0.5, 0.5], [1.0; 3], 0.0);
        assert_abs_diff_eq!(diou(&a, &a, IouMode::Xyz), 1.0, epsilon = 1e-12);

        let b = Obb3::new([10.5, 0.5, 0.5], [1.0; 3], 0.0);
        assert_abs_diff_eq!(diou(&a, &b, IouMode::Xyz), -100.0 / 123.0, epsilon = 1e-12);
        assert_abs_diff_eq!(diou(&a, &b, IouMode::Xyz), -0.8130, epsilon = 1e-4);

        let r = Obb3::new([0.5, 0.5, 0.5], [1.0; 3], FRAC_PI_4);
        assert_abs_diff_eq!(
            diou(&a, &r, IouMode::Xy),
            iou(&a, &r, IouMode::Xy),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(diou(&a, &r, IouMode::Xy), 0.7071, epsilon = 1e-4);
    }

    #[test]
    fn overlap_penalty_is_positive_and_vanishes_at_contact() {
        let a = Obb3::new([0.5, 0.5, 0.5], [1.0; 3], 0.0);
        assert_abs_diff_eq!(overlap_penalty(&a, &a, IouMode::Xyz), 1.0, epsilon = 1e-12);
        // slight overlap with far-apart centers: DIoU is negative, the penalty is not
        let b = Obb3::new([3.45, 0.5, 0.5], [5.0, 1.0, 1.0], 0.0);
        assert!(diou(&a, &b, IouMode::Xyz) < 0.0);
        assert!(overlap_penalty(&a, &b, IouMode::Xyz) > 0.0);
        let mut prev = f64::INFINITY;
        for k in 0..=10 {
            let c = Obb3::new([1.4 + 0.01 * k as f64, 0.5, 0.5], [1.0; 3], 0.0);
            let p = overlap_penalty(&a, &c, IouMode::Xyz);
            assert!(p < prev);
            prev = p;
        }
        assert_abs_diff_eq!(prev, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn segment_distance_examples() {
        let seg = [Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0)];
        assert_eq!(point_segment_distance(Vec2::new(0.0, 1.0), seg), 1.0);
        assert_abs_diff_eq!(
            point_segment_distance(Vec2::new(0.3, 0.0), seg),
            0.0,
            epsilon = 1e-12
        );
        let seg = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)];
        assert_abs_diff_eq!(
            point_segment_distance(Vec2::new(3.0, 4.0), seg),
            20f64.sqrt(),
            epsilon = 1e-12
        );
    }
}

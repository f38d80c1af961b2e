use nalgebra::Vector2;

use super::kinematics::fingertip;
use super::params::WorldParams;
use super::Configuration;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactKind {
    /// Fingertip of arm `i` against the box.
    FingerBox(usize),
    /// Box corner `c` against the table plane `z = 0`.
    BoxTable(usize),
    /// Box corner `c` against the torso wall `x = 0`.
    BoxWall(usize),
}

/// One contact pair. The force acts on the second body of the pair (the finger for
/// finger-box pairs, the box for box-environment pairs) along `+normal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub kind: ContactKind,
    /// Signed distance (m), negative when penetrating.
    pub phi: f64,
    /// Contact point on the box (m).
    pub point: Vector2<f64>,
    /// Unit normal.
    pub normal: Vector2<f64>,
    /// Tangential relative velocity along `tangent()` (m/s), zero when unknown.
    pub tangential_velocity: f64,
}

impl Contact {
    /// `normal` rotated by +90 degrees.
    pub fn tangent(&self) -> Vector2<f64> {
        Vector2::new(-self.normal.y, self.normal.x)
    }
}

/// All ten pairs in fixed order: finger 0, finger 1, table corners 0..4, wall corners 0..4.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSet {
    pub contacts: Vec<Contact>,
}

impl ContactSet {
    pub fn min_phi(&self) -> f64 {
        self.contacts.iter().map(|c| c.phi).fold(f64::INFINITY, f64::min)
    }

    pub fn get(&self, kind: ContactKind) -> Option<&Contact> {
        self.contacts.iter().find(|c| c.kind == kind)
    }
}

pub fn rotate(theta: f64, v: Vector2<f64>) -> Vector2<f64> {
    let (s, c) = theta.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// Corner offsets in the box frame, counter-clockwise from bottom-left.
pub fn corner_offsets(half: [f64; 2]) -> [Vector2<f64>; 4] {
    let [hx, hz] = half;
    [Vector2::new(-hx, -hz), Vector2::new(hx, -hz), Vector2::new(hx, hz), Vector2::new(-hx, hz)]
}

/// World coordinates of the box corners.
pub fn box_corners(q_u: &[f64; 3], half: [f64; 2]) -> [Vector2<f64>; 4] {
    let c = Vector2::new(q_u[0], q_u[1]);
    corner_offsets(half).map(|o| c + rotate(q_u[2], o))
}

/// Signed distance from a world point to the box and the outward unit gradient.
pub fn box_sdf(q_u: &[f64; 3], half: [f64; 2], p: Vector2<f64>) -> (f64, Vector2<f64>) {
    let c = Vector2::new(q_u[0], q_u[1]);
    let local = rotate(-q_u[2], p - c);
    let d = Vector2::new(local.x.abs() - half[0], local.y.abs() - half[1]);
    let (dist, grad_local) = if d.x > 0.0 || d.y > 0.0 {
        let outside = Vector2::new(d.x.max(0.0), d.y.max(0.0));
        let n = outside.norm();
        (n, Vector2::new(outside.x * local.x.signum(), outside.y * local.y.signum()) / n)
    } else if d.x > d.y {
        (d.x, Vector2::new(local.x.signum(), 0.0))
    } else {
        (d.y, Vector2::new(0.0, local.y.signum()))
    };
    (dist, rotate(q_u[2], grad_local))
}

/// Geometry of every contact pair at configuration `q`.
pub fn signed_distances(q: &Configuration, params: &WorldParams) -> ContactSet {
    let mut contacts = Vec::with_capacity(10);
    let r = params.fingertip_radius;
    for arm in 0..2 {
        let tip = fingertip(params, arm, q.q_a[2 * arm], q.q_a[2 * arm + 1]);
        let (sdf, normal) = box_sdf(&q.q_u, params.box_half_extents, tip);
        contacts.push(Contact { kind: ContactKind::FingerBox(arm), phi: sdf - r, point: tip - normal * sdf, normal, tangential_velocity: 0.0 });
    }
    let corners = box_corners(&q.q_u, params.box_half_extents);
    for (i, p) in corners.iter().enumerate() {
        contacts.push(Contact { kind: ContactKind::BoxTable(i), phi: p.y, point: *p, normal: Vector2::new(0.0, 1.0), tangential_velocity: 0.0 });
    }
    for (i, p) in corners.iter().enumerate() {
        contacts.push(Contact { kind: ContactKind::BoxWall(i), phi: p.x, point: *p, normal: Vector2::new(1.0, 0.0), tangential_velocity: 0.0 });
    }
    ContactSet { contacts }
}

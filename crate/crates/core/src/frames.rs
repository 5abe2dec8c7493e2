//! Attitude kinematics: unit quaternions, the ZXY Euler sequence and
//! frame-tagged vectors for the body and North-East-Down frames.
//!
//! The ZXY sequence (yaw, then roll, then pitch) puts the kinematic
//! singularity at ±90° roll, so the vehicle can sit at −90° pitch in
//! wing-borne flight without trouble.

use std::fmt;
use std::marker::PhantomData;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Hamilton unit quaternion, scalar first. Represents the rotation that
/// takes body-frame vectors into the NED frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis / n;
        Self::new(c, s * a.x, s * a.y, s * a.z)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalize(self) -> Self {
        let n = self.norm();
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Flip to the hemisphere with `w >= 0` (same rotation, shortest path).
    pub fn canonical(self) -> Self {
        if self.w < 0.0 {
            Self::new(-self.w, -self.x, -self.y, -self.z)
        } else {
            self
        }
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Rotation matrix taking body vectors to NED.
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Propagate by a constant body rate over `dt` (exact exponential map).
    pub fn integrate_body_rate(self, omega: Vector3<f64>, dt: f64) -> Self {
        let angle = omega.norm() * dt;
        (self * Self::from_axis_angle(omega, angle)).normalize()
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, r: Quaternion) -> Quaternion {
        let l = self;
        Quaternion::new(
            l.w * r.w - l.x * r.x - l.y * r.y - l.z * r.z,
            l.w * r.x + l.x * r.w + l.y * r.z - l.z * r.y,
            l.w * r.y - l.x * r.z + l.y * r.w + l.z * r.x,
            l.w * r.z + l.x * r.y - l.y * r.x + l.z * r.w,
        )
    }
}

/// ZXY Euler angles: yaw `psi` about NED Z, then roll `phi` about the
/// intermediate X, then pitch `theta` about body Y.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerZXY {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

impl EulerZXY {
    pub const fn new(phi: f64, theta: f64, psi: f64) -> Self {
        Self { phi, theta, psi }
    }

    pub fn is_finite(&self) -> bool {
        self.phi.is_finite() && self.theta.is_finite() && self.psi.is_finite()
    }
}

/// Body-to-NED rotation matrix for the ZXY sequence, in closed form.
pub fn rotmat_ned_from_body(eta: EulerZXY) -> Matrix3<f64> {
    let (sf, cf) = eta.phi.sin_cos();
    let (st, ct) = eta.theta.sin_cos();
    let (sp, cp) = eta.psi.sin_cos();
    Matrix3::new(
        ct * cp - sf * st * sp,
        -cf * sp,
        st * cp + sf * ct * sp,
        ct * sp + sf * st * cp,
        cf * cp,
        st * sp - sf * ct * cp,
        -cf * st,
        sf,
        cf * ct,
    )
}

/// Same rotation as [`rotmat_ned_from_body`], as a quaternion.
pub fn quat_from_euler_zxy(eta: EulerZXY) -> Quaternion {
    let (sz, cz) = (0.5 * eta.psi).sin_cos();
    let (sx, cx) = (0.5 * eta.phi).sin_cos();
    let (sy, cy) = (0.5 * eta.theta).sin_cos();
    let qz = Quaternion::new(cz, 0.0, 0.0, sz);
    let qx = Quaternion::new(cx, sx, 0.0, 0.0);
    let qy = Quaternion::new(cy, 0.0, sy, 0.0);
    (qz * qx * qy).normalize()
}

/// Below this `cos(phi)` the yaw and pitch axes align and yaw is unobservable.
const ROLL_SINGULAR_COS: f64 = 1e-9;

/// ZXY Euler angles of `q`. At the ±90° roll singularity the yaw is taken
/// from `last_psi` and pitch is recovered from what remains.
pub fn euler_zxy_from_quat_with_hint(q: Quaternion, last_psi: f64) -> EulerZXY {
    let m = q.rotation_matrix();
    let phi = m[(2, 1)].clamp(-1.0, 1.0).asin();
    if phi.cos() > ROLL_SINGULAR_COS {
        let theta = (-m[(2, 0)]).atan2(m[(2, 2)]);
        let psi = (-m[(0, 1)]).atan2(m[(1, 1)]);
        EulerZXY::new(phi, theta, psi)
    } else {
        // Ry(theta) = Rx(phi)^T Rz(psi)^T M
        let rz = rotmat_ned_from_body(EulerZXY::new(0.0, 0.0, last_psi));
        let rx = rotmat_ned_from_body(EulerZXY::new(phi, 0.0, 0.0));
        let ry = rx.transpose() * rz.transpose() * m;
        let theta = ry[(0, 2)].atan2(ry[(0, 0)]);
        EulerZXY::new(phi, theta, last_psi)
    }
}

pub fn euler_zxy_from_quat(q: Quaternion) -> EulerZXY {
    euler_zxy_from_quat_with_hint(q, 0.0)
}

/// Attitude error between a reference and the measured attitude, expressed
/// in body axes, canonicalized so the vector part commands the short way round.
pub fn quat_error(q_ref: Quaternion, q_s: Quaternion) -> Quaternion {
    (q_s.conjugate() * q_ref).normalize().canonical()
}

/// Wrap an angle to (−π, π].
pub fn wrap_pi(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

/// Marker trait for coordinate frames.
pub trait Frame: Copy + Clone + fmt::Debug + PartialEq + Default {
    const NAME: &'static str;
}

/// Vehicle body axes: X out of the belly in hover, Y along the right wing,
/// Z toward the tail (thrust acts along −Z).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Body;

/// Local North-East-Down frame fixed at the scenario origin.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Ned;

impl Frame for Body {
    const NAME: &'static str = "body";
}
impl Frame for Ned {
    const NAME: &'static str = "ned";
}

/// A 3-vector tagged with the frame it is expressed in. Arithmetic is only
/// defined between vectors of the same frame.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct FrameVec<F: Frame> {
    v: Vector3<f64>,
    _frame: PhantomData<F>,
}

pub type BodyVec = FrameVec<Body>;
pub type NedVec = FrameVec<Ned>;

impl<F: Frame> FrameVec<F> {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self::from_vector(Vector3::new(x, y, z))
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self {
            v,
            _frame: PhantomData,
        }
    }

    pub fn zeros() -> Self {
        Self::from_vector(Vector3::zeros())
    }

    pub fn vector(&self) -> Vector3<f64> {
        self.v
    }

    pub fn x(&self) -> f64 {
        self.v.x
    }
    pub fn y(&self) -> f64 {
        self.v.y
    }
    pub fn z(&self) -> f64 {
        self.v.z
    }

    pub fn norm(&self) -> f64 {
        self.v.norm()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.v.dot(&other.v)
    }

    pub fn cross(&self, other: &Self) -> Self {
        Self::from_vector(self.v.cross(&other.v))
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().all(|c| c.is_finite())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.v.x, self.v.y, self.v.z]
    }
}

impl<F: Frame> fmt::Debug for FrameVec<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}, {}, {}]", F::NAME, self.v.x, self.v.y, self.v.z)
    }
}

impl<F: Frame> Add for FrameVec<F> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from_vector(self.v + rhs.v)
    }
}

impl<F: Frame> AddAssign for FrameVec<F> {
    fn add_assign(&mut self, rhs: Self) {
        self.v += rhs.v;
    }
}

impl<F: Frame> Sub for FrameVec<F> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from_vector(self.v - rhs.v)
    }
}

impl<F: Frame> SubAssign for FrameVec<F> {
    fn sub_assign(&mut self, rhs: Self) {
        self.v -= rhs.v;
    }
}

impl<F: Frame> Neg for FrameVec<F> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::from_vector(-self.v)
    }
}

impl<F: Frame> Mul<f64> for FrameVec<F> {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::from_vector(self.v * k)
    }
}

/// Body-to-NED rotation, the only bridge between the two frame tags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NedFromBody(Matrix3<f64>);

impl NedFromBody {
    pub fn from_euler(eta: EulerZXY) -> Self {
        Self(rotmat_ned_from_body(eta))
    }

    pub fn from_quat(q: Quaternion) -> Self {
        Self(q.rotation_matrix())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn to_ned(&self, v: BodyVec) -> NedVec {
        NedVec::from_vector(self.0 * v.vector())
    }

    pub fn to_body(&self, v: NedVec) -> BodyVec {
        BodyVec::from_vector(self.0.transpose() * v.vector())
    }
}

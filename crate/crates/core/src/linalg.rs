//! Fixed-size 3D vectors and matrices for the camera code.

use std::ops::{Add, Mul, Neg, Sub};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3<S> {
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S: Real> Vec3<S> {
    pub fn new(x: S, y: S, z: S) -> Self {
        Self { x, y, z }
    }

    pub fn zeros() -> Self {
        Self::new(S::zero(), S::zero(), S::zero())
    }

    pub fn from_array(a: [S; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [S; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> S {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: S) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl<S: Real> Add for Vec3<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<S: Real> Sub for Vec3<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<S: Real> Neg for Vec3<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3<S> {
    pub m: [[S; 3]; 3],
}

impl<S: Real> Mat3<S> {
    pub fn identity() -> Self {
        let (o, z) = (S::one(), S::zero());
        Self {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    pub fn from_rows(m: [[S; 3]; 3]) -> Self {
        Self { m }
    }

    pub fn from_row_major(v: &[S; 9]) -> Self {
        Self {
            m: [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]],
        }
    }

    pub fn to_row_major(&self) -> [S; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    /// Rotation by `angle` radians about a unit `axis` (Rodrigues).
    pub fn from_axis_angle(axis: Vec3<S>, angle: S) -> Self {
        let a = axis.scale(S::one() / axis.norm());
        let (s, c) = angle.sin_cos();
        let t = S::one() - c;
        Self::from_rows([
            [t * a.x * a.x + c, t * a.x * a.y - s * a.z, t * a.x * a.z + s * a.y],
            [t * a.x * a.y + s * a.z, t * a.y * a.y + c, t * a.y * a.z - s * a.x],
            [t * a.x * a.z - s * a.y, t * a.y * a.z + s * a.x, t * a.z * a.z + c],
        ])
    }

    pub fn transpose(&self) -> Self {
        let m = &self.m;
        Self::from_rows([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn mul_vec(&self, v: Vec3<S>) -> Vec3<S> {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut out = [[S::zero(); 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        Self::from_rows(out)
    }

    pub fn trace(&self) -> S {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn determinant(&self) -> S {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.determinant();
        if det == S::zero() || !det.is_finite() {
            return None;
        }
        let m = &self.m;
        let inv = S::one() / det;
        let cof = |a: usize, b: usize, c: usize, d: usize| m[a][b] * m[c][d] - m[a][d] * m[c][b];
        Some(Self::from_rows([
            [cof(1, 1, 2, 2) * inv, -cof(0, 1, 2, 2) * inv, cof(0, 1, 1, 2) * inv],
            [-cof(1, 0, 2, 2) * inv, cof(0, 0, 2, 2) * inv, -cof(0, 0, 1, 2) * inv],
            [cof(1, 0, 2, 1) * inv, -cof(0, 0, 2, 1) * inv, cof(0, 0, 1, 1) * inv],
        ]))
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }

    /// Largest absolute entry of `RᵀR − I`, combined with `|det R − 1|`.
    pub fn orthonormality_defect(&self) -> S {
        let rtr = self.transpose().mul_mat(self);
        let id = Self::identity();
        let mut worst = (self.determinant() - S::one()).abs();
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((rtr.m[i][j] - id.m[i][j]).abs());
            }
        }
        worst
    }

    /// Orthonormal polar factor via the Newton iteration `X ← (X + X⁻ᵀ)/2`.
    ///
    /// Converges quadratically for matrices already close to a rotation.
    pub fn polar_rotation(&self) -> Option<Self> {
        let mut x = *self;
        let half = S::half();
        for _ in 0..32 {
            let inv_t = x.inverse()?.transpose();
            let mut next = x;
            for i in 0..3 {
                for j in 0..3 {
                    next.m[i][j] = half * (x.m[i][j] + inv_t.m[i][j]);
                }
            }
            let delta = (0..3)
                .flat_map(|i| (0..3).map(move |j| (i, j)))
                .map(|(i, j)| (next.m[i][j] - x.m[i][j]).abs())
                .fold(S::zero(), S::max);
            x = next;
            if delta <= S::epsilon() * S::lit(4.0) {
                break;
            }
        }
        Some(x)
    }
}

impl<S: Real> Mul for Mat3<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.mul_mat(&o)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_product_right_handed() {
        let x = Vec3::new(1.0, 0.0, 0.0);
        let y = Vec3::new(0.0, 1.0, 0.0);
        assert_eq!(x.cross(y), Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn inverse_round_trip() {
        let m = Mat3::from_rows([[2.0, 1.0, 0.0], [0.0, 3.0, 1.0], [1.0, 0.0, 4.0]]);
        let p = m.mul_mat(&m.inverse().unwrap());
        for i in 0..3 {
            for j in 0..3 {
                let want: f64 = if i == j { 1.0 } else { 0.0 };
                assert!((p.m[i][j] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn polar_recovers_rotation_from_perturbation() {
        let r = Mat3::from_axis_angle(Vec3::new(0.3, -0.5, 0.8), 0.7f64);
        let mut p = r;
        p.m[0][1] += 3e-7;
        p.m[2][0] -= 2e-7;
        assert!(p.orthonormality_defect() > 1e-8);
        let q = p.polar_rotation().unwrap();
        assert!(q.orthonormality_defect() < 1e-14);
        for i in 0..3 {
            for j in 0..3 {
                assert!((q.m[i][j] - r.m[i][j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn axis_angle_quarter_turn() {
        let r = Mat3::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), std::f64::consts::FRAC_PI_2);
        let v = r.mul_vec(Vec3::new(1.0, 0.0, 0.0));
        assert!(v.x.abs() < 1e-15 && (v.y - 1.0f64).abs() < 1e-15);
    }
}

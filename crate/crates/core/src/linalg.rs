//! Fixed-size vector and matrix helpers on plain arrays.

use crate::scalar::Real;

pub type Vec3<S> = [S; 3];
pub type Mat3<S> = [[S; 3]; 3];

#[inline]
pub fn add<S: Real>(a: Vec3<S>, b: Vec3<S>) -> Vec3<S> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub<S: Real>(a: Vec3<S>, b: Vec3<S>) -> Vec3<S> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale<S: Real>(a: Vec3<S>, s: S) -> Vec3<S> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot<S: Real>(a: Vec3<S>, b: Vec3<S>) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross<S: Real>(a: Vec3<S>, b: Vec3<S>) -> Vec3<S> {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub fn norm<S: Real>(a: Vec3<S>) -> S {
    dot(a, a).sqrt()
}

#[inline]
pub fn normalize<S: Real>(a: Vec3<S>) -> Vec3<S> {
    scale(a, S::one() / norm(a))
}

pub fn identity<S: Real>() -> Mat3<S> {
    let (o, z) = (S::one(), S::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

#[inline]
pub fn mat_vec<S: Real>(m: &Mat3<S>, v: Vec3<S>) -> Vec3<S> {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

/// `mᵀ v`
#[inline]
pub fn mat_t_vec<S: Real>(m: &Mat3<S>, v: Vec3<S>) -> Vec3<S> {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

pub fn mat_mul<S: Real>(a: &Mat3<S>, b: &Mat3<S>) -> Mat3<S> {
    let mut out = [[S::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn transpose<S: Real>(m: &Mat3<S>) -> Mat3<S> {
    let mut out = [[S::zero(); 3]; 3];
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[j][i] = v;
        }
    }
    out
}

/// Rotation about the camera y axis (yaw) followed by x (pitch), camera-to-world.
pub fn rotation_yaw_pitch<S: Real>(yaw: S, pitch: S) -> Mat3<S> {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (o, z) = (S::one(), S::zero());
    let ry = [[cy, z, sy], [z, o, z], [-sy, z, cy]];
    let rx = [[o, z, z], [z, cp, -sp], [z, sp, cp]];
    mat_mul(&ry, &rx)
}

pub fn orthonormality_error<S: Real>(m: &Mat3<S>) -> S {
    let p = mat_mul(&transpose(m), m);
    let id = identity::<S>();
    let mut err = S::zero();
    for i in 0..3 {
        for j in 0..3 {
            err = err.max((p[i][j] - id[i][j]).abs());
        }
    }
    err
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yaw_pitch_is_orthonormal() {
        let r = rotation_yaw_pitch(0.7f64, -0.3);
        assert!(orthonormality_error(&r) < 1e-12);
        let v = [0.2, -1.0, 3.0];
        let back = mat_t_vec(&r, mat_vec(&r, v));
        for i in 0..3 {
            assert!((back[i] - v[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_of_axes() {
        assert_eq!(cross([1.0f64, 0.0, 0.0], [0.0, 1.0, 0.0]), [0.0, 0.0, 1.0]);
    }
}

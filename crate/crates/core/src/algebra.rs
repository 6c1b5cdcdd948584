//! Small fixed-size algebra for planar fields.
//!
//! Conventions used throughout the crate:
//!
//! * [`Vec2`] holds the two components of either a tangent vector (`v^i`)
//!   or a cotangent vector (`xi_j`); the Euclidean pairing identifies the
//!   two, so no separate types are kept.
//! * [`Mat2`] is an endomorphism of cotangent space acting on column
//!   vectors, entry `m[row][col]`. The gradient of a tangent field `u` is
//!   stored as `G[j][i] = d_j u^i` so that `G` applied to a constant
//!   cotangent `xi` gives `grad(xi . u)`.
//! * `J` is the counter-clockwise rotation by pi/2, `J^2 = -id`; the same
//!   matrix acts on tangent and cotangent components.

/// A point in the plane, or a tangent/cotangent vector.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    /// `J v`: counter-clockwise rotation by pi/2.
    pub fn rot90(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn scale(self, c: f64) -> Vec2 {
        Vec2::new(c * self.x, c * self.y)
    }

    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn component(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => panic!("Vec2 component index out of range: {i}"),
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// A 2x2 endomorphism, row-major: `[m00, m01, m10, m11]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Mat2(pub [f64; 4]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([0.0; 4]);
    pub const IDENTITY: Mat2 = Mat2([1.0, 0.0, 0.0, 1.0]);
    /// Counter-clockwise rotation by pi/2.
    pub const J: Mat2 = Mat2([0.0, -1.0, 1.0, 0.0]);

    pub fn new(m00: f64, m01: f64, m10: f64, m11: f64) -> Self {
        Mat2([m00, m01, m10, m11])
    }

    pub fn get(self, row: usize, col: usize) -> f64 {
        self.0[2 * row + col]
    }

    /// Composition `self * rhs` (apply `rhs` first).
    pub fn mul(self, rhs: Mat2) -> Mat2 {
        let a = self.0;
        let b = rhs.0;
        Mat2([
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ])
    }

    pub fn add(self, o: Mat2) -> Mat2 {
        Mat2([
            self.0[0] + o.0[0],
            self.0[1] + o.0[1],
            self.0[2] + o.0[2],
            self.0[3] + o.0[3],
        ])
    }

    pub fn sub(self, o: Mat2) -> Mat2 {
        Mat2([
            self.0[0] - o.0[0],
            self.0[1] - o.0[1],
            self.0[2] - o.0[2],
            self.0[3] - o.0[3],
        ])
    }

    pub fn scale(self, c: f64) -> Mat2 {
        Mat2([c * self.0[0], c * self.0[1], c * self.0[2], c * self.0[3]])
    }

    /// Adjoint with respect to the Euclidean inner product (transpose).
    pub fn adjoint(self) -> Mat2 {
        Mat2([self.0[0], self.0[2], self.0[1], self.0[3]])
    }

    pub fn trace(self) -> f64 {
        self.0[0] + self.0[3]
    }

    pub fn det(self) -> f64 {
        self.0[0] * self.0[3] - self.0[1] * self.0[2]
    }

    /// Squared Frobenius norm, `tr(m* m)`.
    pub fn frob2(self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    /// Frobenius inner product `tr(self* other)`.
    pub fn frob_dot(self, o: Mat2) -> f64 {
        self.0
            .iter()
            .zip(o.0.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// `self` applied to a column vector.
    pub fn apply(self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.0[0] * v.x + self.0[1] * v.y,
            self.0[2] * v.x + self.0[3] * v.y,
        )
    }

    /// `v` contracted against the row index: `(self^T v)_i = v_j m[j][i]`.
    ///
    /// For a stored gradient `G[j][i] = d_j u^i` this is the transport term
    /// `v^j d_j u`.
    pub fn transpose_apply(self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.0[0] * v.x + self.0[2] * v.y,
            self.0[1] * v.x + self.0[3] * v.y,
        )
    }

    /// Tensor product of a cotangent vector and a tangent vector,
    /// `(alpha ⊗ v)[j][i] = alpha_j v^i`.
    pub fn outer(alpha: Vec2, v: Vec2) -> Mat2 {
        Mat2([alpha.x * v.x, alpha.x * v.y, alpha.y * v.x, alpha.y * v.y])
    }

    /// Left rotation `J * self`.
    pub fn j_left(self) -> Mat2 {
        Mat2([-self.0[2], -self.0[3], self.0[0], self.0[1]])
    }

    /// Right rotation `self * J`.
    pub fn j_right(self) -> Mat2 {
        Mat2([self.0[1], -self.0[0], self.0[3], -self.0[2]])
    }

    pub fn is_finite(self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

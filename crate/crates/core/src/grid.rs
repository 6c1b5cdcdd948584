//! Uniform 2-D evaluation grids for scalar, vector, endomorphism and
//! 3-tensor valued fields.
//!
//! All grids in one simulation share a [`GridSpec`]; combining fields from
//! different specs is a [`GridError::GridMismatch`]. Points are laid out
//! row-major, `index = ix * n + iy`, at positions `(ix * h, iy * h)` with
//! `h = box_length / n`.

use thiserror::Error;

use crate::algebra::{Mat2, Vec2};

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid resolution must be at least 4 per side, got {0}")]
    ResolutionTooSmall(usize),
    #[error("box length must be positive, got {0}")]
    NonpositiveBox(f64),
    #[error("grids do not share (n, box_length): ({0}, {1}) vs ({2}, {3})")]
    GridMismatch(usize, f64, usize, f64),
}

/// Resolution and physical extent shared by every field of one simulation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    n: usize,
    box_length: f64,
}

impl GridSpec {
    pub fn new(n: usize, box_length: f64) -> Result<Self, GridError> {
        if n < 4 {
            return Err(GridError::ResolutionTooSmall(n));
        }
        if !(box_length > 0.0) {
            return Err(GridError::NonpositiveBox(box_length));
        }
        Ok(GridSpec { n, box_length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.n as f64
    }

    pub fn num_points(&self) -> usize {
        self.n * self.n
    }

    pub fn ensure_matches(&self, other: &GridSpec) -> Result<(), GridError> {
        if self != other {
            return Err(GridError::GridMismatch(
                self.n,
                self.box_length,
                other.n,
                other.box_length,
            ));
        }
        Ok(())
    }
}

macro_rules! grid_type {
    ($(#[$doc:meta])* $name:ident, $elem:ty, $zero:expr) => {
        $(#[$doc])*
        #[derive(Clone, Debug)]
        pub struct $name {
            spec: GridSpec,
            values: Vec<$elem>,
        }

        impl $name {
            pub fn zeros(spec: GridSpec) -> Self {
                Self { spec, values: vec![$zero; spec.num_points()] }
            }

            pub fn spec(&self) -> GridSpec {
                self.spec
            }

            pub fn values(&self) -> &[$elem] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [$elem] {
                &mut self.values
            }

            pub fn get(&self, idx: usize) -> $elem {
                self.values[idx]
            }

            pub fn set(&mut self, idx: usize, v: $elem) {
                self.values[idx] = v;
            }
        }
    };
}

grid_type!(
    /// A scalar field sampled on the grid.
    ScalarGrid,
    f64,
    0.0
);
grid_type!(
    /// A tangent- or cotangent-vector field sampled on the grid.
    VectorGrid,
    Vec2,
    Vec2::ZERO
);
grid_type!(
    /// A field of endomorphisms of cotangent space.
    EndoGrid,
    Mat2,
    Mat2::ZERO
);
grid_type!(
    /// The `i`-indexed family of endomorphisms `grad(d_i dphi)`.
    Tensor3Grid,
    [Mat2; 2],
    [Mat2::ZERO; 2]
);

impl ScalarGrid {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn mean_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl VectorGrid {
    pub fn mean(&self) -> Vec2 {
        let mut acc = Vec2::ZERO;
        for v in &self.values {
            acc = acc.add(*v);
        }
        acc.scale(1.0 / self.values.len() as f64)
    }

    pub fn mean_norm2(&self) -> f64 {
        self.values.iter().map(|v| v.norm2()).sum::<f64>() / self.values.len() as f64
    }
}

impl EndoGrid {
    pub fn mean(&self) -> Mat2 {
        let mut acc = Mat2::ZERO;
        for v in &self.values {
            acc = acc.add(*v);
        }
        acc.scale(1.0 / self.values.len() as f64)
    }

    /// Space average of the squared Frobenius norm.
    pub fn mean_frob2(&self) -> f64 {
        self.values.iter().map(|m| m.frob2()).sum::<f64>() / self.values.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validates_inputs() {
        assert_eq!(GridSpec::new(3, 1.0), Err(GridError::ResolutionTooSmall(3)));
        assert_eq!(GridSpec::new(8, 0.0), Err(GridError::NonpositiveBox(0.0)));
        assert!(GridSpec::new(8, -1.0).is_err());
        let s = GridSpec::new(8, 4.0).unwrap();
        assert_eq!(s.spacing(), 0.5);
        assert_eq!(s.num_points(), 64);
    }

    #[test]
    fn mismatched_specs_are_rejected() {
        let a = GridSpec::new(8, 4.0).unwrap();
        let b = GridSpec::new(8, 5.0).unwrap();
        assert!(a.ensure_matches(&b).is_err());
        assert!(a.ensure_matches(&a).is_ok());
    }

    #[test]
    fn grid_means() {
        let spec = GridSpec::new(4, 1.0).unwrap();
        let mut g = ScalarGrid::zeros(spec);
        for (i, v) in g.values_mut().iter_mut().enumerate() {
            *v = i as f64;
        }
        assert_eq!(g.mean(), 7.5);
        let mut e = EndoGrid::zeros(spec);
        e.set(0, Mat2::IDENTITY);
        assert_eq!(e.mean_frob2(), 2.0 / 16.0);
    }
}

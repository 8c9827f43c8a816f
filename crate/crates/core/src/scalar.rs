//! Scalar abstraction for the matrix-valued simulator.
//!
//! The closed forms are generic over [`num_traits::Float`]; the simulator
//! needs dense linear algebra, so it is generic over [`Real`], which bundles
//! the nalgebra field trait with Gaussian sampling and `f64` conversion.

use nalgebra::RealField;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub trait Real: RealField + Copy + Send + Sync + 'static {
    fn cast(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Real for f64 {
    #[inline]
    fn cast(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Real for f32 {
    #[inline]
    fn cast(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::scalar::Real;
use crate::types::ModelGeometry;

/// Training data of the linear teacher `y = X^T theta + eps`.
///
/// Columns of `x` are examples.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset<T: Real> {
    pub x: DMatrix<T>,
    pub theta: DVector<T>,
    pub eps: DVector<T>,
    pub y: DVector<T>,
}

/// `rows x cols` matrix of i.i.d. `N(0, std^2)` entries, filled column by column.
pub fn gaussian_matrix<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> DMatrix<T> {
    let std = T::cast(std);
    let mut m = DMatrix::zeros(rows, cols);
    for v in m.iter_mut() {
        *v = T::standard_normal(rng) * std;
    }
    m
}

pub fn gaussian_vector<T: Real, R: Rng + ?Sized>(len: usize, std: f64, rng: &mut R) -> DVector<T> {
    let std = T::cast(std);
    DVector::from_fn(len, |_, _| T::standard_normal(rng) * std)
}

/// Draws `X ~ N(0, I/d)` columns, `theta ~ N(0, I)`, `eps ~ N(0, sigma_sq I)`,
/// in that order.
pub fn gen_dataset<T: Real, R: Rng + ?Sized>(geometry: &ModelGeometry, sigma_sq: f64, rng: &mut R) -> SyntheticDataset<T> {
    let (d, n) = (geometry.d(), geometry.n());
    let x = gaussian_matrix(d, n, 1.0 / (d as f64).sqrt(), rng);
    let theta = gaussian_vector(d, 1.0, rng);
    let eps = gaussian_vector(n, sigma_sq.sqrt(), rng);
    let y = x.tr_mul(&theta) + &eps;
    SyntheticDataset { x, theta, eps, y }
}

/// Regenerates labels for a new noise vector, keeping `x` and `theta`.
pub fn relabel<T: Real>(data: &SyntheticDataset<T>, eps: DVector<T>) -> SyntheticDataset<T> {
    let y = data.x.tr_mul(&data.theta) + &eps;
    SyntheticDataset {
        x: data.x.clone(),
        theta: data.theta.clone(),
        eps,
        y,
    }
}

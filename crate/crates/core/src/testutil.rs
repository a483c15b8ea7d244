use nalgebra::{dmatrix, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::model::IvDataset;

/// n=6, k=2, m_W=1, m_Y=1.
pub fn fixture() -> IvDataset {
    let zbar = dmatrix![
        1.0, 0.5;
        -0.3, 1.2;
        0.8, -0.7;
        -1.1, 0.4;
        0.2, -1.5;
        0.9, 0.6
    ];
    let y = DVector::from_vec(vec![1.2, -0.4, 0.7, -1.3, 0.5, 2.1]);
    let ytest = DMatrix::from_column_slice(6, 1, &[0.3, 1.1, -0.6, 0.2, -0.9, 0.4]);
    let w = DMatrix::from_column_slice(6, 1, &[0.8, -0.2, 0.5, -0.7, 1.4, 0.1]);
    IvDataset::new(y, ytest, w, zbar).unwrap()
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Heteroskedastic random dataset with `m_Y = 1`.
pub fn random_dataset(seed: u64, n: usize, k: usize, m_w: usize) -> IvDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zbar = normal_matrix(&mut rng, n, k);
    let pi_w = normal_matrix(&mut rng, k, m_w) * 0.5;
    let pi_y = normal_matrix(&mut rng, k, 1) * 0.5;
    let mut errs = normal_matrix(&mut rng, n, 2 + m_w);
    for i in 0..n {
        let scale = 0.5 + zbar.row(i).norm() * rng.random::<f64>();
        let common = errs[(i, 0)];
        for j in 0..errs.ncols() {
            errs[(i, j)] = scale * (errs[(i, j)] + 0.6 * common);
        }
    }
    let w = &zbar * &pi_w + errs.columns(2, m_w);
    let ytest = &zbar * &pi_y + errs.columns(1, 1);
    let gamma = DVector::from_fn(m_w, |_, _| rng.random::<f64>() - 0.5);
    let y = &ytest * 0.3 + &w * gamma + errs.column(0);
    IvDataset::new(y.column(0).into_owned(), ytest, w, zbar).unwrap()
}

pub fn random_nonsingular(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
    loop {
        let a = normal_matrix(rng, k, k);
        let s = a.clone().svd(false, false).singular_values;
        if s.min() > 0.1 * s.max() {
            return a;
        }
    }
}

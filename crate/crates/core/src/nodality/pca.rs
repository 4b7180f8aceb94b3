//! PCA on z-scored columns.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::centrality::NodalityMatrix;
use crate::error::{Error, Result};
use crate::types::ActorId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    pub actors: Vec<ActorId>,
    pub columns: Vec<String>,
    /// Metric count; the first `m` columns are topic-network columns.
    pub m: usize,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is loading vector `e_{k+1}`.
    pub loadings: DMatrix<f64>,
    /// Row per actor, column per component.
    pub scores: DMatrix<f64>,
}

impl PcaResult {
    pub fn loading(&self, component: usize) -> Vec<f64> {
        self.loadings.column(component).iter().copied().collect()
    }

    /// `(PC1, PC2)` per actor.
    pub fn coordinates(&self) -> Vec<[f64; 2]> {
        (0..self.scores.nrows())
            .map(|i| [self.scores[(i, 0)], self.scores.get((i, 1)).copied().unwrap_or(0.0)])
            .collect()
    }

    pub fn zscored(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        zscore(data, &self.means, &self.stds)
    }
}

fn zscore(data: &DMatrix<f64>, means: &[f64], stds: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(data.nrows(), data.ncols(), |i, j| (data[(i, j)] - means[j]) / stds[j])
}

pub fn pca(matrix: &NodalityMatrix) -> Result<PcaResult> {
    pca_columns(&matrix.data, matrix.actors.clone(), matrix.column_names(), matrix.m())
}

/// PCA of an arbitrary `n x 2m` matrix whose first `m` columns are the
/// topic-network side.
pub fn pca_columns(data: &DMatrix<f64>, actors: Vec<ActorId>, columns: Vec<String>, m: usize) -> Result<PcaResult> {
    let (n, p) = data.shape();
    if n < 3 {
        return Err(Error::TooFewRows { needed: 3, got: n });
    }
    if p == 0 || columns.len() != p || actors.len() != n {
        return Err(Error::invalid("matrix shape does not match its labels"));
    }
    let mut means = Vec::with_capacity(p);
    let mut stds = Vec::with_capacity(p);
    for j in 0..p {
        let col = data.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let scale = col.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let sd = var.sqrt();
        if !(sd > 1e-12 * scale.max(f64::MIN_POSITIVE)) || !sd.is_finite() {
            return Err(Error::ZeroVariance(columns[j].clone()));
        }
        means.push(mean);
        stds.push(sd);
    }
    let z = zscore(data, &means, &stds);
    let cov = (z.transpose() * &z) / (n - 1) as f64;
    let cov = (&cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut loadings = DMatrix::zeros(p, p);
    for (c, &k) in order.iter().enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        if flip_sign(&v, c, m) {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for (r, x) in v.into_iter().enumerate() {
            loadings[(r, c)] = x;
        }
    }
    let scores = &z * &loadings;
    Ok(PcaResult {
        actors,
        columns,
        m,
        means,
        stds,
        eigenvalues,
        loadings,
        scores,
    })
}

/// Sign convention: `e_1` has positive loading sum, `e_2` has positive mean
/// over the topic columns, every other component has its largest-magnitude
/// loading positive. The last rule is also the fallback when the primary
/// quantity is zero.
fn flip_sign(v: &[f64], component: usize, m: usize) -> bool {
    let key = match component {
        0 => v.iter().sum::<f64>(),
        1 if m > 0 && m <= v.len() => v[..m].iter().sum::<f64>() / m as f64,
        _ => 0.0,
    };
    if key.abs() > 1e-12 {
        return key < 0.0;
    }
    let (_, big) = v
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, &x)| if x.abs() > bv.abs() + 1e-12 { (i, x) } else { (bi, bv) });
    big < 0.0
}

/// Sign-pattern check on the first two loading vectors: every `e_1` loading
/// shares one sign; `e_2`'s topic loadings share one sign and its null
/// loadings all carry the opposite sign. Loadings with magnitude below `eps`
/// count as ambiguous and fail.
pub fn eigenvector_test_loadings(e1: &[f64], e2: &[f64], m: usize, eps: f64) -> bool {
    if m == 0 || e1.len() != 2 * m || e2.len() != 2 * m {
        return false;
    }
    let clear = |v: &[f64]| v.iter().all(|x| x.abs() >= eps);
    if !clear(e1) || !clear(e2) {
        return false;
    }
    let same_sign = |v: &[f64]| v.iter().all(|&x| x > 0.0) || v.iter().all(|&x| x < 0.0);
    if !same_sign(e1) {
        return false;
    }
    let (topic, null) = e2.split_at(m);
    same_sign(topic) && same_sign(null) && (topic[0] > 0.0) != (null[0] > 0.0)
}

pub fn eigenvector_test(result: &PcaResult, eps: f64) -> bool {
    if result.loadings.ncols() < 2 {
        return false;
    }
    eigenvector_test_loadings(&result.loading(0), &result.loading(1), result.m, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn labels(n: usize, p: usize) -> (Vec<String>, Vec<String>) {
        ((0..n).map(|i| format!("a{i}")).collect(), (0..p).map(|j| format!("c{j}")).collect())
    }

    fn run(data: &DMatrix<f64>, m: usize) -> Result<PcaResult> {
        let (a, c) = labels(data.nrows(), data.ncols());
        pca_columns(data, a, c, m)
    }

    #[test]
    fn identical_columns_concentrate_on_first_component() {
        let base = [1.0, 4.0, 2.0, 8.0, 5.0, 7.0];
        let data = DMatrix::from_fn(6, 6, |i, _| base[i]);
        let r = run(&data, 3).unwrap();
        assert!((r.eigenvalues[0] - 6.0).abs() < 1e-9);
        for &l in &r.eigenvalues[1..] {
            assert!(l.abs() < 1e-9);
        }
    }

    #[test]
    fn independent_normals_give_unit_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let data = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = run(&data, 1).unwrap();
        // sampling error of a correlation is about 1/sqrt(n) = 0.007
        assert!((r.eigenvalues[0] - 1.0).abs() < 0.03);
        assert!((r.eigenvalues[1] - 1.0).abs() < 0.03);
    }

    #[test]
    fn planted_factors_are_recovered() {
        // topic = a + b + noise, null = a - b + noise, var(a) = 4, var(b) = 1
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 5000;
        let m = 3;
        let mut data = DMatrix::zeros(n, 2 * m);
        for i in 0..n {
            let a: f64 = 2.0 * rng.sample::<f64, _>(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            for j in 0..m {
                data[(i, j)] = a + b + 0.1 * rng.sample::<f64, _>(StandardNormal);
                data[(i, m + j)] = a - b + 0.1 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let r = run(&data, m).unwrap();
        // the planted covariance has e1 ∝ (1,..,1), e2 ∝ (1,1,1,-1,-1,-1)
        let s = 1.0 / (2.0 * m as f64).sqrt();
        for j in 0..2 * m {
            assert!((r.loadings[(j, 0)] - s).abs() < 0.02);
            let e2 = if j < m { s } else { -s };
            assert!((r.loadings[(j, 1)] - e2).abs() < 0.02);
        }
        assert!(eigenvector_test(&r, 0.01));
    }

    #[test]
    fn shape_errors() {
        let data = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(run(&data, 1), Err(Error::TooFewRows { .. })));
        let flat = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        assert!(matches!(run(&flat, 1), Err(Error::ZeroVariance(c)) if c == "c1"));
    }

    #[test]
    fn eigenvector_test_cases() {
        let e1 = [0.4; 6];
        let e2 = [0.41, 0.41, 0.41, -0.41, -0.41, -0.41];
        assert!(eigenvector_test_loadings(&e1, &e2, 3, 0.01));
        let neg_e2: Vec<f64> = e2.iter().map(|x| -x).collect();
        assert!(eigenvector_test_loadings(&e1, &neg_e2, 3, 0.01));
        let neg_e1 = [-0.4; 6];
        assert!(eigenvector_test_loadings(&neg_e1, &e2, 3, 0.01));
        let mixed_e1 = [0.4, 0.4, -0.4, 0.4, 0.4, 0.4];
        assert!(!eigenvector_test_loadings(&mixed_e1, &e2, 3, 0.01));
        let interleaved = [0.4, -0.4, 0.4, -0.4, 0.4, -0.4];
        assert!(!eigenvector_test_loadings(&e1, &interleaved, 3, 0.01));
        let tiny = [0.41, 0.005, 0.41, -0.41, -0.41, -0.41];
        assert!(!eigenvector_test_loadings(&e1, &tiny, 3, 0.01));
        assert!(!eigenvector_test_loadings(&e1[..4], &e2, 3, 0.01));
    }

    fn random_matrix(seed: u64, n: usize, p: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let factor: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        DMatrix::from_fn(n, p, |i, j| factor[i] * (j as f64 + 1.0) * 0.3 + rng.sample::<f64, _>(StandardNormal))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn invariant_under_row_permutation_and_column_rescaling(
            seed in any::<u64>(),
            n in 5usize..60,
            m in 1usize..4,
            scale in 0.01f64..100.0,
            shift in -50.0f64..50.0,
        ) {
            let p = 2 * m;
            let data = random_matrix(seed, n, p);
            let r = run(&data, m).unwrap();

            let mut rescaled = data.clone();
            for i in 0..n {
                rescaled[(i, 0)] = data[(i, 0)] * scale + shift;
            }
            let r2 = run(&rescaled, m).unwrap();
            for i in 0..n {
                for c in 0..p {
                    prop_assert!((r.scores[(i, c)] - r2.scores[(i, c)]).abs() < 1e-9);
                }
            }

            let perm: Vec<usize> = (0..n).rev().collect();
            let permuted = DMatrix::from_fn(n, p, |i, j| data[(perm[i], j)]);
            let r3 = run(&permuted, m).unwrap();
            for i in 0..n {
                for c in 0..p {
                    prop_assert!((r.scores[(perm[i], c)] - r3.scores[(i, c)]).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn eigenvector_test_ignores_global_sign(
            e1 in proptest::collection::vec(-1.0f64..1.0, 6),
            e2 in proptest::collection::vec(-1.0f64..1.0, 6),
        ) {
            let f1: Vec<f64> = e1.iter().map(|x| -x).collect();
            let f2: Vec<f64> = e2.iter().map(|x| -x).collect();
            let base = eigenvector_test_loadings(&e1, &e2, 3, 0.01);
            prop_assert_eq!(base, eigenvector_test_loadings(&f1, &e2, 3, 0.01));
            prop_assert_eq!(base, eigenvector_test_loadings(&e1, &f2, 3, 0.01));
            prop_assert_eq!(base, eigenvector_test_loadings(&f1, &f2, 3, 0.01));
        }
    }
}

//! Feature standardization and PCA retaining a cumulative
//! explained-variance target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReductionConfig {
    /// Cumulative explained-variance ratio the retained components must reach.
    pub variance_target: f64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig {
            variance_target: 0.95,
        }
    }
}

const STD_FLOOR: f64 = 1e-9;

/// Per-feature standardization constants (population statistics).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// Population standard deviation, floored at 1e-9.
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Scaler> {
        if rows.len() < 2 {
            return Err(Error::Insufficient(format!(
                "scaler needs >= 2 rows, got {}",
                rows.len()
            )));
        }
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut std = vec![0.0; d];
        for row in rows {
            for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in std.iter_mut() {
            *s = (*s / n).sqrt().max(STD_FLOOR);
        }
        Ok(Scaler { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.apply_row(r)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::Model("scaler mean/std length mismatch".into()));
        }
        if self.std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Model("scaler std must be positive".into()));
        }
        Ok(())
    }
}

/// PCA basis fitted on standardized data. All components are stored in
/// eigenvalue order; `retained` gives the count used by [`PcaModel::transform`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal principal directions, one row per component.
    pub components: Vec<Vec<f64>>,
    /// Explained-variance ratio per component, non-increasing.
    pub explained_variance_ratio: Vec<f64>,
    /// Number of leading components retained by `transform`.
    pub retained: usize,
}

impl PcaModel {
    /// Eigendecomposition of the sample covariance (n-1 denominator).
    /// `retained` becomes the smallest count whose cumulative ratio reaches
    /// `variance_target`.
    pub fn fit(rows: &[Vec<f64>], variance_target: f64) -> Result<PcaModel> {
        if rows.len() < 2 {
            return Err(Error::Insufficient(format!(
                "PCA needs >= 2 rows, got {}",
                rows.len()
            )));
        }
        if !(variance_target > 0.0 && variance_target <= 1.0) {
            return Err(Error::Config(format!(
                "variance target {variance_target} outside (0, 1]"
            )));
        }
        let n = rows.len();
        let d = rows[0].len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Model("ragged or empty feature matrix".into()));
        }

        let mut mean = vec![0.0; d];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n as f64;
        }

        // Sample covariance.
        let mut cov = vec![vec![0.0; d]; d];
        for row in rows {
            let centered: Vec<f64> = row.iter().zip(&mean).map(|(v, m)| v - m).collect();
            for i in 0..d {
                let ci = centered[i];
                if ci == 0.0 {
                    continue;
                }
                for j in i..d {
                    cov[i][j] += ci * centered[j];
                }
            }
        }
        let denom = (n - 1) as f64;
        for i in 0..d {
            for j in i..d {
                cov[i][j] /= denom;
                cov[j][i] = cov[i][j];
            }
        }

        let (eigvals, eigvecs) = jacobi_eigen(cov);

        // Sort descending, clamp tiny negative eigenvalues to zero.
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eigvals[b].total_cmp(&eigvals[a]));
        let lambdas: Vec<f64> = order.iter().map(|&i| eigvals[i].max(0.0)).collect();
        let total: f64 = lambdas.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Model(
                "degenerate input: zero total variance, PCA undefined".into(),
            ));
        }

        let mut components = Vec::with_capacity(d);
        for &i in &order {
            let mut comp: Vec<f64> = (0..d).map(|r| eigvecs[r][i]).collect();
            // Deterministic sign: the largest-magnitude entry is positive.
            let lead = comp
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            if comp[lead] < 0.0 {
                for v in comp.iter_mut() {
                    *v = -*v;
                }
            }
            components.push(comp);
        }

        let ratios: Vec<f64> = lambdas.iter().map(|l| l / total).collect();
        let mut cumulative = 0.0;
        let mut retained = d;
        for (i, r) in ratios.iter().enumerate() {
            cumulative += r;
            if cumulative >= variance_target - 1e-12 {
                retained = i + 1;
                break;
            }
        }

        Ok(PcaModel {
            mean,
            components,
            explained_variance_ratio: ratios,
            retained,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    fn project_row(&self, row: &[f64], k: usize) -> Result<Vec<f64>> {
        if row.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: row.len(),
            });
        }
        let centered: Vec<f64> = row.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        Ok(self.components[..k]
            .iter()
            .map(|c| c.iter().zip(&centered).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Projects rows onto the retained components.
    pub fn transform(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter()
            .map(|r| self.project_row(r, self.retained))
            .collect()
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.project_row(row, self.retained)
    }

    /// Projects onto all components (used by reconstruction checks).
    pub fn project_all(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter()
            .map(|r| self.project_row(r, self.components.len()))
            .collect()
    }

    /// Maps projected rows back to the original space.
    pub fn reconstruct(&self, projected: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let d = self.input_dim();
        projected
            .iter()
            .map(|p| {
                if p.len() > self.components.len() {
                    return Err(Error::Dimension {
                        expected: self.components.len(),
                        got: p.len(),
                    });
                }
                let mut row = self.mean.clone();
                for (w, comp) in p.iter().zip(&self.components) {
                    for i in 0..d {
                        row[i] += w * comp[i];
                    }
                }
                Ok(row)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.input_dim();
        if self.components.len() != d || self.components.iter().any(|c| c.len() != d) {
            return Err(Error::Model("PCA component matrix shape mismatch".into()));
        }
        if self.retained == 0 || self.retained > d {
            return Err(Error::Model(format!(
                "PCA retained count {} outside 1..={d}",
                self.retained
            )));
        }
        if self.explained_variance_ratio.len() != d {
            return Err(Error::Model("PCA ratio vector length mismatch".into()));
        }
        let sum: f64 = self.explained_variance_ratio.iter().sum();
        if sum > 1.0 + 1e-9 || self.explained_variance_ratio.iter().any(|r| *r < 0.0) {
            return Err(Error::Model(
                "PCA ratios must be non-negative, sum <= 1".into(),
            ));
        }
        for w in self.explained_variance_ratio.windows(2) {
            if w[1] > w[0] + 1e-12 {
                return Err(Error::Model("PCA ratios must be non-increasing".into()));
            }
        }
        // Orthonormality of the basis.
        for i in 0..d {
            for j in i..d {
                let dot: f64 = self.components[i]
                    .iter()
                    .zip(&self.components[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > 1e-8 {
                    return Err(Error::Model(format!(
                        "PCA components not orthonormal: <c{i}, c{j}> = {dot}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// `(eigenvalues, eigenvectors)` with eigenvectors as columns.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    if n <= 1 {
        return (
            a.iter()
                .enumerate()
                .map(|(i, r)| r.get(i).copied().unwrap_or(0.0))
                .collect(),
            v,
        );
    }

    let scale: f64 = a
        .iter()
        .flat_map(|r| r.iter())
        .map(|x| x.abs())
        .fold(0.0, f64::max)
        .max(1.0);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let h = t * apq;

                a[p][p] -= h;
                a[q][q] += h;
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for i in 0..n {
                    if i != p && i != q {
                        let aip = a[i][p];
                        let aiq = a[i][q];
                        a[i][p] = aip - s * (aiq + tau * aip);
                        a[p][i] = a[i][p];
                        a[i][q] = aiq + s * (aip - tau * aiq);
                        a[q][i] = a[i][q];
                    }
                    let vip = v[i][p];
                    let viq = v[i][q];
                    v[i][p] = vip - s * (viq + tau * vip);
                    v[i][q] = viq + s * (vip - tau * viq);
                }
            }
        }
    }

    let eigvals: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    (eigvals, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_column_scales_to_zero() {
        let rows = vec![vec![5.0, 1.0], vec![5.0, 3.0], vec![5.0, 2.0]];
        let sc = Scaler::fit(&rows).unwrap();
        let out = sc.apply(&rows).unwrap();
        for r in &out {
            assert_eq!(r[0], 0.0);
        }
    }

    #[test]
    fn two_point_column_uses_population_std() {
        let rows = vec![vec![1.0], vec![3.0]];
        let sc = Scaler::fit(&rows).unwrap();
        let out = sc.apply(&rows).unwrap();
        assert!((out[0][0] + 1.0).abs() < 1e-12);
        assert!((out[1][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaled_training_matrix_has_zero_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..4).map(|_| rng.random_range(-10.0..10.0)).collect())
            .collect();
        let sc = Scaler::fit(&rows).unwrap();
        let out = sc.apply(&rows).unwrap();
        for c in 0..4 {
            let mean: f64 = out.iter().map(|r| r[c]).sum::<f64>() / out.len() as f64;
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn scaler_needs_two_rows() {
        assert!(Scaler::fit(&[vec![1.0]]).is_err());
    }

    #[test]
    fn rank_one_data_needs_one_component() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let x = i as f64 - 10.0;
                vec![x, 2.0 * x]
            })
            .collect();
        let pca = PcaModel::fit(&rows, 0.95).unwrap();
        assert_eq!(pca.retained, 1);
        assert!((pca.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isotropic_cloud_needs_both_components() {
        let rows = vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ];
        let pca = PcaModel::fit(&rows, 0.95).unwrap();
        assert_eq!(pca.retained, 2);
        assert!((pca.explained_variance_ratio[0] - 0.5).abs() < 1e-12);
        assert!((pca.explained_variance_ratio[1] - 0.5).abs() < 1e-12);
    }

    /// Brute-force eigenvalues of a symmetric 3x3 matrix via the
    /// trigonometric solution of the characteristic polynomial.
    fn eig3_bruteforce(m: &[Vec<f64>]) -> Vec<f64> {
        let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
        let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
        let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
        if p2 <= 1e-30 {
            return vec![q, q, q];
        }
        let p = (p2 / 6.0).sqrt();
        // B = (1/p)(A - qI); r = det(B)/2
        let b: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                (0..3)
                    .map(|j| (m[i][j] - if i == j { q } else { 0.0 }) / p)
                    .collect()
            })
            .collect();
        let det_b = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
            - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
            + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
        let r = (det_b / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let e2 = 3.0 * q - e1 - e3;
        vec![e1, e2, e3]
    }

    #[test]
    fn jacobi_matches_characteristic_polynomial_on_3x3() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let mut m = vec![vec![0.0; 3]; 3];
            for i in 0..3 {
                for j in i..3 {
                    let v = rng.random_range(-5.0..5.0);
                    m[i][j] = v;
                    m[j][i] = v;
                }
            }
            let (mut ours, vecs) = jacobi_eigen(m.clone());
            let mut exact = eig3_bruteforce(&m);
            ours.sort_by(|a, b| b.total_cmp(a));
            exact.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in ours.iter().zip(&exact) {
                assert!((a - b).abs() < 1e-8, "eigenvalue {a} vs {b}");
            }
            // Residual check: A v = lambda v for each eigenpair.
            let (vals, _) = jacobi_eigen(m.clone());
            for k in 0..3 {
                for i in 0..3 {
                    let av: f64 = (0..3).map(|j| m[i][j] * vecs[j][k]).sum();
                    assert!((av - vals[k] * vecs[i][k]).abs() < 1e-8);
                }
            }
        }
    }

    fn random_matrix(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        // Correlated columns so the spectrum is interesting.
        (0..n)
            .map(|_| {
                let base: f64 = rng.random_range(-1.0..1.0);
                (0..d)
                    .map(|j| base * (j as f64 + 1.0) + rng.random_range(-0.5..0.5))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn transformed_training_columns_are_uncorrelated() {
        let rows = random_matrix(200, 5, 21);
        let pca = PcaModel::fit(&rows, 1.0).unwrap();
        let z = pca.transform(&rows).unwrap();
        let m = z[0].len();
        let n = z.len() as f64;
        for a in 0..m {
            for b in (a + 1)..m {
                let ma: f64 = z.iter().map(|r| r[a]).sum::<f64>() / n;
                let mb: f64 = z.iter().map(|r| r[b]).sum::<f64>() / n;
                let mut cov = 0.0;
                let mut va = 0.0;
                let mut vb = 0.0;
                for r in &z {
                    cov += (r[a] - ma) * (r[b] - mb);
                    va += (r[a] - ma).powi(2);
                    vb += (r[b] - mb).powi(2);
                }
                let corr = cov / (va.sqrt() * vb.sqrt());
                assert!(corr.abs() < 1e-6, "corr({a},{b}) = {corr}");
            }
        }
    }

    #[test]
    fn projecting_the_mean_gives_zero() {
        let rows = random_matrix(60, 4, 5);
        let pca = PcaModel::fit(&rows, 0.95).unwrap();
        let z = pca.transform(&[pca.mean.clone()]).unwrap();
        for v in &z[0] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn full_reconstruction_recovers_input() {
        for (n, d, seed) in [(40usize, 3usize, 1u64), (60, 4, 2), (80, 6, 3)] {
            let rows = random_matrix(n, d, seed);
            let pca = PcaModel::fit(&rows, 0.95).unwrap();
            let z = pca.project_all(&rows).unwrap();
            let back = pca.reconstruct(&z).unwrap();
            for (orig, rec) in rows.iter().zip(&back) {
                for (a, b) in orig.iter().zip(rec) {
                    assert!((a - b).abs() < 1e-8, "reconstruction {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn retained_count_is_minimal() {
        let rows = random_matrix(120, 6, 9);
        let target = 0.95;
        let pca = PcaModel::fit(&rows, target).unwrap();
        let cum: f64 = pca.explained_variance_ratio[..pca.retained].iter().sum();
        assert!(cum >= target - 1e-12);
        if pca.retained > 1 {
            let prev: f64 = pca.explained_variance_ratio[..pca.retained - 1]
                .iter()
                .sum();
            assert!(prev < target);
        }
        pca.validate().unwrap();
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let rows = random_matrix(100, 4, 13);
        let a = PcaModel::fit(&rows, 0.95).unwrap();
        let b = PcaModel::fit(&rows, 0.95).unwrap();
        assert_eq!(a, b);
        for comp in &a.components {
            let lead = comp
                .iter()
                .cloned()
                .max_by(|x, y| x.abs().total_cmp(&y.abs()))
                .unwrap();
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn all_zero_matrix_is_rejected() {
        let rows = vec![vec![0.0; 3]; 10];
        assert!(PcaModel::fit(&rows, 0.95).is_err());
    }

    #[test]
    fn transform_checks_dimensions() {
        let rows = random_matrix(30, 3, 17);
        let pca = PcaModel::fit(&rows, 0.95).unwrap();
        assert!(pca.transform(&[vec![0.0; 4]]).is_err());
    }
}

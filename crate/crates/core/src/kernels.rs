//! Log-Euclidean kernels and certified Gram matrices.
//!
//! All four kernels act on matrix logarithms: the linear kernel
//! `tr(log X log Y)`, a polynomial `p(·)` of it, `exp(p(·))`, and the
//! Gaussian `exp(−β‖log X − log Y‖²_F)`. Gram construction computes each
//! point's logarithm once and then works on the logs only.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{check_dims, matrix_log, sym_eig, SpdMatrix, SymMatrix, EXP_ARG_CAP};

/// Gram matrices must satisfy `λ_min ≥ −PSD_TOL · max|λ|`.
pub const PSD_TOL: f64 = 1e-8;

/// A Log-Euclidean kernel.
///
/// Polynomial coefficients are listed from the linear term upward:
/// `coeffs = [c1, c2, …, cn]` means `p(t) = c1·t + c2·t² + … + cn·tⁿ`.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelSpec {
    LogeLinear,
    LogePoly { coeffs: Vec<f64> },
    LogeExp { coeffs: Vec<f64> },
    LogeGauss { beta: f64 },
}

impl KernelSpec {
    pub fn poly(coeffs: Vec<f64>) -> Result<Self> {
        let spec = KernelSpec::LogePoly { coeffs };
        spec.validate()?;
        Ok(spec)
    }

    pub fn exp(coeffs: Vec<f64>) -> Result<Self> {
        let spec = KernelSpec::LogeExp { coeffs };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gauss(beta: f64) -> Result<Self> {
        let spec = KernelSpec::LogeGauss { beta };
        spec.validate()?;
        Ok(spec)
    }

    /// `p(t) = t + t²`.
    pub fn default_poly() -> Self {
        KernelSpec::LogePoly {
            coeffs: vec![1.0, 1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::LogeLinear => Ok(()),
            KernelSpec::LogePoly { coeffs } | KernelSpec::LogeExp { coeffs } => {
                if coeffs.is_empty() {
                    return Err(Error::invalid("polynomial needs degree >= 1"));
                }
                if coeffs.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
                    return Err(Error::invalid(format!(
                        "polynomial coefficients must be positive, got {coeffs:?}"
                    )));
                }
                Ok(())
            }
            KernelSpec::LogeGauss { beta } => {
                if !(*beta > 0.0) || !beta.is_finite() {
                    return Err(Error::invalid(format!("beta must be positive, got {beta}")));
                }
                Ok(())
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            KernelSpec::LogeLinear => "loge_linear",
            KernelSpec::LogePoly { .. } => "loge_poly",
            KernelSpec::LogeExp { .. } => "loge_exp",
            KernelSpec::LogeGauss { .. } => "loge_gauss",
        }
    }

    pub fn degree(&self) -> Option<usize> {
        match self {
            KernelSpec::LogePoly { coeffs } | KernelSpec::LogeExp { coeffs } => Some(coeffs.len()),
            _ => None,
        }
    }

    /// Parameters as a single whitespace-free token: `-`, `coeffs=1,1` or `beta=0.5`.
    pub fn params_token(&self) -> String {
        match self {
            KernelSpec::LogeLinear => "-".to_string(),
            KernelSpec::LogePoly { coeffs } | KernelSpec::LogeExp { coeffs } => {
                let list: Vec<String> = coeffs.iter().map(|c| format!("{c:?}")).collect();
                format!("coeffs={}", list.join(","))
            }
            KernelSpec::LogeGauss { beta } => format!("beta={beta:?}"),
        }
    }

    /// Inverse of (`kind`, `params_token`).
    pub fn from_tokens(kind: &str, params: &str) -> Result<Self> {
        let value = |key: &str| {
            params
                .strip_prefix(key)
                .and_then(|rest| rest.strip_prefix('='))
                .ok_or_else(|| Error::invalid(format!("expected {key}=..., got {params:?}")))
        };
        let coeffs = || -> Result<Vec<f64>> {
            value("coeffs")?
                .split(',')
                .map(|c| {
                    c.parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad coefficient {c:?}")))
                })
                .collect()
        };
        match kind {
            "loge_linear" => Ok(KernelSpec::LogeLinear),
            "loge_poly" => KernelSpec::poly(coeffs()?),
            "loge_exp" => KernelSpec::exp(coeffs()?),
            "loge_gauss" => {
                let beta = value("beta")?
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad beta in {params:?}")))?;
                KernelSpec::gauss(beta)
            }
            other => Err(Error::invalid(format!("unknown kernel kind {other:?}"))),
        }
    }

    /// Kernel value from the logarithms of the two points.
    pub fn eval_logs(&self, log_x: &SymMatrix, log_y: &SymMatrix) -> Result<f64> {
        check_dims(log_x.dim(), log_y.dim())?;
        let a = log_x.as_slice();
        let b = log_y.as_slice();
        match self {
            KernelSpec::LogeLinear => Ok(dot(a, b)),
            KernelSpec::LogePoly { coeffs } => Ok(poly(coeffs, dot(a, b))),
            KernelSpec::LogeExp { coeffs } => {
                let arg = poly(coeffs, dot(a, b));
                if arg > EXP_ARG_CAP {
                    return Err(Error::Overflow {
                        value: arg,
                        cap: EXP_ARG_CAP,
                    });
                }
                Ok(arg.exp())
            }
            KernelSpec::LogeGauss { beta } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                Ok((-beta * d2).exp())
            }
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::LogeLinear => f.write_str(self.kind()),
            _ => write!(f, "{}({})", self.kind(), self.params_token()),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn poly(coeffs: &[f64], t: f64) -> f64 {
    // Horner on c1 t + c2 t² + … = t (c1 + t (c2 + …))
    let inner = coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c);
    inner * t
}

pub fn kernel_eval(spec: &KernelSpec, x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
    spec.validate()?;
    check_dims(x.dim(), y.dim())?;
    spec.eval_logs(&matrix_log(x)?, &matrix_log(y)?)
}

/// Matrix logarithms of a point list, computed in parallel.
pub fn log_points(points: &[SpdMatrix]) -> Result<Vec<SymMatrix>> {
    points.par_iter().map(matrix_log).collect()
}

fn check_same_dim(mut dims: impl Iterator<Item = usize>) -> Result<()> {
    if let Some(first) = dims.next() {
        for d in dims {
            check_dims(first, d)?;
        }
    }
    Ok(())
}

/// Kernel matrix over precomputed logs, exactly symmetric, not certified.
pub fn gram_from_logs(spec: &KernelSpec, logs: &[SymMatrix]) -> Result<DMatrix<f64>> {
    spec.validate()?;
    check_same_dim(logs.iter().map(SymMatrix::dim))?;
    let m = logs.len();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            (i..m)
                .map(|j| spec.eval_logs(&logs[i], &logs[j]))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut out = DMatrix::zeros(m, m);
    for (i, row) in rows.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            out[(i, i + k)] = v;
            out[(i + k, i)] = v;
        }
    }
    Ok(out)
}

/// `out[(i, j)] = k(train_i, test_j)` over precomputed logs.
pub fn cross_gram_from_logs(
    spec: &KernelSpec,
    train: &[SymMatrix],
    test: &[SymMatrix],
) -> Result<DMatrix<f64>> {
    spec.validate()?;
    check_same_dim(train.iter().chain(test).map(SymMatrix::dim))?;
    let cols: Vec<Vec<f64>> = test
        .par_iter()
        .map(|t| train.iter().map(|d| spec.eval_logs(d, t)).collect())
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(train.len(), test.len(), |i, j| cols[j][i]))
}

/// Kernel matrix with its smallest eigenvalue certified against [`PSD_TOL`].
#[derive(Clone, Debug)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
    point_ids: Vec<String>,
    kernel: KernelSpec,
    min_eig: f64,
}

impl GramMatrix {
    /// Certifies an assembled kernel matrix.
    pub fn certify(entries: DMatrix<f64>, point_ids: Vec<String>, kernel: KernelSpec) -> Result<Self> {
        check_dims(entries.nrows(), point_ids.len())?;
        let sym = SymMatrix::from_matrix(entries)?;
        let eig = sym_eig(&sym)?;
        let min_eig = eig.min();
        let max_abs = eig.min().abs().max(eig.max().abs());
        if min_eig < -PSD_TOL * max_abs {
            return Err(Error::PsdCertification {
                kernel: kernel.to_string(),
                min_eig,
                max_abs,
            });
        }
        Ok(GramMatrix {
            entries: sym.into_matrix(),
            point_ids,
            kernel,
            min_eig,
        })
    }

    pub fn len(&self) -> usize {
        self.point_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_ids.is_empty()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn point_ids(&self) -> &[String] {
        &self.point_ids
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn min_eig(&self) -> f64 {
        self.min_eig
    }
}

pub fn gram_matrix(spec: &KernelSpec, points: &[SpdMatrix], ids: &[String]) -> Result<GramMatrix> {
    if points.is_empty() {
        return Err(Error::invalid("gram matrix needs at least one point"));
    }
    check_dims(points.len(), ids.len())?;
    check_same_dim(points.iter().map(SpdMatrix::dim))?;
    let logs = log_points(points)?;
    let entries = gram_from_logs(spec, &logs)?;
    GramMatrix::certify(entries, ids.to_vec(), spec.clone())
}

pub fn cross_gram(spec: &KernelSpec, train: &[SpdMatrix], test: &[SpdMatrix]) -> Result<DMatrix<f64>> {
    check_same_dim(train.iter().chain(test).map(SpdMatrix::dim))?;
    cross_gram_from_logs(spec, &log_points(train)?, &log_points(test)?)
}

/// Median heuristic `β = 1 / median_{i<j} ‖log Pᵢ − log Pⱼ‖²_F`.
pub fn median_beta(points: &[SpdMatrix]) -> Result<f64> {
    let logs = log_points(points)?;
    median_beta_logs(&logs)
}

pub fn median_beta_logs(logs: &[SymMatrix]) -> Result<f64> {
    check_same_dim(logs.iter().map(SymMatrix::dim))?;
    let mut d2 = Vec::new();
    for i in 0..logs.len() {
        for j in (i + 1)..logs.len() {
            let a = logs[i].as_slice();
            let b = logs[j].as_slice();
            d2.push(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>());
        }
    }
    if d2.is_empty() {
        return Err(Error::Degenerate(
            "median heuristic needs at least two points".into(),
        ));
    }
    d2.sort_by(f64::total_cmp);
    let mid = d2.len() / 2;
    let median = if d2.len() % 2 == 1 {
        d2[mid]
    } else {
        0.5 * (d2[mid - 1] + d2[mid])
    };
    if !(median > 0.0) {
        return Err(Error::Degenerate(
            "all pairwise Log-Euclidean distances are zero".into(),
        ));
    }
    Ok(1.0 / median)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_spd;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;
    use std::f64::consts::E;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    fn all_kinds() -> Vec<KernelSpec> {
        vec![
            KernelSpec::LogeLinear,
            KernelSpec::default_poly(),
            KernelSpec::exp(vec![0.05]).unwrap(),
            KernelSpec::gauss(0.3).unwrap(),
        ]
    }

    #[test]
    fn eval_examples() {
        let x = SpdMatrix::from_row_major(2, &[2.0, 1.0, 1.0, 3.0]).unwrap();
        assert_eq!(
            kernel_eval(&KernelSpec::gauss(2.5).unwrap(), &x, &x).unwrap(),
            1.0
        );
        assert_eq!(
            kernel_eval(&KernelSpec::LogeLinear, &SpdMatrix::identity(2), &x).unwrap(),
            0.0
        );
        let ee = SpdMatrix::from_diagonal(&[E, E]).unwrap();
        let v = kernel_eval(&KernelSpec::default_poly(), &ee, &ee).unwrap();
        assert!((v - 6.0).abs() < 1e-14);
    }

    #[test]
    fn spec_validation() {
        assert!(KernelSpec::poly(vec![]).is_err());
        assert!(KernelSpec::poly(vec![1.0, 0.0]).is_err());
        assert!(KernelSpec::exp(vec![-1.0]).is_err());
        assert!(KernelSpec::gauss(0.0).is_err());
        assert!(KernelSpec::gauss(f64::NAN).is_err());
        for k in all_kinds() {
            let back = KernelSpec::from_tokens(k.kind(), &k.params_token()).unwrap();
            assert_eq!(back, k);
        }
        assert!(KernelSpec::from_tokens("rbf", "-").is_err());
    }

    #[test]
    fn exp_kernel_overflow_is_an_error() {
        let big = SpdMatrix::from_diagonal(&[E.powi(30), E.powi(30)]).unwrap();
        let r = kernel_eval(&KernelSpec::exp(vec![1.0]).unwrap(), &big, &big);
        assert!(matches!(r, Err(Error::Overflow { .. })));
    }

    #[test]
    fn gram_examples() {
        let x = SpdMatrix::from_row_major(2, &[2.0, 1.0, 1.0, 3.0]).unwrap();
        for k in all_kinds() {
            let g = gram_matrix(&k, std::slice::from_ref(&x), &ids(1)).unwrap();
            assert_eq!(g.get(0, 0), kernel_eval(&k, &x, &x).unwrap());
        }

        let eye = vec![SpdMatrix::identity(3); 4];
        let g = gram_matrix(&KernelSpec::LogeLinear, &eye, &ids(4)).unwrap();
        assert!(g.entries().iter().all(|&v| v == 0.0));
        assert_eq!(g.min_eig(), 0.0);

        assert!(gram_matrix(&KernelSpec::LogeLinear, &[], &[]).is_err());
        assert!(gram_matrix(&KernelSpec::LogeLinear, std::slice::from_ref(&x), &ids(2)).is_err());
        assert!(gram_matrix(
            &KernelSpec::LogeLinear,
            &[x, SpdMatrix::identity(3)],
            &ids(2)
        )
        .is_err());
    }

    #[test]
    fn certification_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let r = GramMatrix::certify(m, ids(2), KernelSpec::LogeLinear);
        assert!(matches!(r, Err(Error::PsdCertification { .. })));
    }

    #[test]
    fn linear_gram_matches_explicit_features() {
        // oracle: column i of L is vec(log Pᵢ); Gram = Lᵀ L
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
        let pts: Vec<_> = (0..7).map(|_| random_spd(&mut rng, 4, 50.0)).collect();
        let g = gram_matrix(&KernelSpec::LogeLinear, &pts, &ids(7)).unwrap();
        let feats: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| {
                let e = nalgebra::SymmetricEigen::new(p.as_matrix().clone());
                let l = &e.eigenvectors
                    * DMatrix::from_diagonal(&e.eigenvalues.map(f64::ln))
                    * e.eigenvectors.transpose();
                l.iter().copied().collect()
            })
            .collect();
        let l = DMatrix::from_fn(16, 7, |r, c| feats[c][r]);
        let expect = l.transpose() * l;
        assert!((g.entries() - expect).amax() < 1e-10);
    }

    #[test]
    fn cross_gram_examples() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        let train: Vec<_> = (0..2).map(|_| random_spd(&mut rng, 3, 20.0)).collect();
        let test: Vec<_> = (0..3).map(|_| random_spd(&mut rng, 3, 20.0)).collect();
        for k in all_kinds() {
            let c = cross_gram(&k, &train, &test).unwrap();
            assert_eq!(c.shape(), (2, 3));
            for i in 0..2 {
                for j in 0..3 {
                    assert_eq!(c[(i, j)], kernel_eval(&k, &train[i], &test[j]).unwrap());
                }
            }
            let g = gram_matrix(&k, &train, &ids(2)).unwrap();
            let self_cross = cross_gram(&k, &train, &train).unwrap();
            assert!((g.entries() - self_cross).amax() <= 1e-15 * g.entries().amax());
        }
        let row = cross_gram(&KernelSpec::LogeLinear, &[SpdMatrix::identity(3)], &test).unwrap();
        assert!(row.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn median_beta_heuristic() {
        let e1 = SpdMatrix::from_diagonal(&[E, 1.0]).unwrap();
        let e2 = SpdMatrix::from_diagonal(&[1.0, E]).unwrap();
        // squared distances: I–e1 = 1, I–e2 = 1, e1–e2 = 2 → median 1
        let b = median_beta(&[SpdMatrix::identity(2), e1, e2]).unwrap();
        assert!((b - 1.0).abs() < 1e-14);
        assert!(median_beta(&[SpdMatrix::identity(2)]).is_err());
        assert!(median_beta(&vec![SpdMatrix::identity(2); 3]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn every_kind_is_mercer(seed in any::<u64>(), n in 1usize..=20, dim in 1usize..=8) {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
            let pts: Vec<_> = (0..n).map(|_| random_spd(&mut rng, dim, 20.0)).collect();
            for k in all_kinds() {
                let g = gram_matrix(&k, &pts, &ids(n)).unwrap();
                let e = sym_eig(&SymMatrix::from_matrix(g.entries().clone()).unwrap()).unwrap();
                let max_abs = e.min().abs().max(e.max().abs());
                prop_assert!(e.min() >= -PSD_TOL * max_abs);
            }
        }

        #[test]
        fn gauss_entries_in_unit_interval(seed in any::<u64>(), n in 1usize..=10) {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
            let pts: Vec<_> = (0..n).map(|_| random_spd(&mut rng, 3, 20.0)).collect();
            let g = gram_matrix(&KernelSpec::gauss(0.2).unwrap(), &pts, &ids(n)).unwrap();
            for i in 0..n {
                prop_assert_eq!(g.get(i, i), 1.0);
                for j in 0..n {
                    prop_assert!(g.get(i, j) > 0.0 && g.get(i, j) <= 1.0);
                }
            }
        }

        #[test]
        fn gram_is_permutation_equivariant(seed in any::<u64>(), n in 2usize..=8) {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
            let pts: Vec<_> = (0..n).map(|_| random_spd(&mut rng, 3, 20.0)).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let permuted: Vec<_> = perm.iter().map(|&i| pts[i].clone()).collect();
            for k in all_kinds() {
                let g = gram_matrix(&k, &pts, &ids(n)).unwrap();
                let gp = gram_matrix(&k, &permuted, &ids(n)).unwrap();
                for a in 0..n {
                    for b in 0..n {
                        prop_assert_eq!(gp.get(a, b), g.get(perm[a], perm[b]));
                    }
                }
            }
        }

        #[test]
        fn linear_poly_is_linear(seed in any::<u64>(), n in 1usize..=6) {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
            let pts: Vec<_> = (0..n).map(|_| random_spd(&mut rng, 3, 20.0)).collect();
            let lin = gram_matrix(&KernelSpec::LogeLinear, &pts, &ids(n)).unwrap();
            let p1 = gram_matrix(&KernelSpec::poly(vec![1.0]).unwrap(), &pts, &ids(n)).unwrap();
            prop_assert_eq!(lin.entries(), p1.entries());
        }
    }
}

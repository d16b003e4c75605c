//! Reversible rate matrices, their transition matrices, and the
//! branch-length thresholds of the symmetric (Potts) model.
//!
//! Every [`RateModel`] is normalized so that its second eigenvalue is
//! exactly `-1`; with that convention the Kesten-Stigum bound is `ln √2`
//! for every model and the percolation bound of the symmetric model is
//! `ln 2`.

use std::f64::consts::LN_2;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, ModelDiagnostic, Result};

/// Tolerance used when checking model invariants.
pub const MODEL_TOL: f64 = 1e-9;

/// Dense row-major square matrix.
#[derive(Clone, PartialEq, Serialize)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter(
                "matrix rows must have equal length n".into(),
            ));
        }
        Ok(Matrix {
            n,
            data: rows.concat(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Matrix {
            n: self.n,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    /// Row vector times matrix.
    pub fn left_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &vi) in v.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += vi * self.get(i, j);
            }
        }
        out
    }

    /// Matrix times column vector.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn norm1(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn add_assign(&mut self, other: &Matrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries((0..self.n).map(|i| self.row(i)))
            .finish()
    }
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
///
/// Independent of the spectral route used by [`RateModel::transition_matrix`];
/// used to validate it.
pub fn expm_series(a: &Matrix) -> Matrix {
    let n = a.dim();
    let norm = a.norm1();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a.scaled(0.5f64.powi(squarings as i32));
    let mut result = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..=40 {
        term = term.mul(&scaled).scaled(1.0 / k as f64);
        result.add_assign(&term);
        if term.norm1() < 1e-20 {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.mul(&result);
    }
    result
}

/// A reversible rate matrix normalized to `Λ₂ = -1`.
#[derive(Clone, Debug, Serialize)]
pub struct RateModel {
    q: usize,
    rate: Matrix,
    pi: Vec<f64>,
    /// Second eigenvalue, `-1` after normalization.
    lambda2: f64,
    /// Eigenvalues of `rate`, descending.
    #[serde(skip)]
    eigenvalues: Vec<f64>,
    /// `D^{-1/2} U` and `Uᵀ D^{1/2}` from the symmetrized eigendecomposition.
    #[serde(skip)]
    left: Matrix,
    #[serde(skip)]
    right: Matrix,
    potts: bool,
}

/// Result of [`validate_gtr`]: the normalized model and the factor `Q` was
/// multiplied by.
#[derive(Clone, Debug)]
pub struct ValidatedModel {
    pub model: RateModel,
    pub scale_factor: f64,
}

/// Branch-length thresholds of a model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Thresholds {
    /// Kesten-Stigum bound under the `Λ₂ = -1` normalization.
    pub g_lin: f64,
    /// Percolation bound `ln 2`; defined for the symmetric model only.
    pub g_perc: Option<f64>,
    /// Kesten-Stigum bound when `Q` is instead normalized to unit total
    /// substitution rate at stationarity.
    pub g_lin_bio: f64,
}

/// The `q`-state symmetric (Potts) model: rate `1/q` between any two
/// distinct states, uniform stationary distribution.
pub fn potts_rate_matrix(q: usize) -> Result<RateModel> {
    if q < 2 {
        return Err(Error::InvalidParameter(format!("q must be >= 2, got {q}")));
    }
    let qf = q as f64;
    let mut rate = Matrix::zeros(q);
    for i in 0..q {
        for j in 0..q {
            rate.set(i, j, if i == j { -(qf - 1.0) / qf } else { 1.0 / qf });
        }
    }
    let pi = vec![1.0 / qf; q];
    let mut model = RateModel::build(rate, pi)?;
    model.lambda2 = -1.0;
    model.potts = true;
    Ok(model)
}

/// Probability of a specific change along a symmetric-model edge of length `tau`:
/// `(1 - e^{-tau}) / q`.
pub fn delta_from_tau(q: usize, tau: f64) -> f64 {
    -(-tau).exp_m1() / q as f64
}

/// Closed-form symmetric-model transition matrix.
pub fn potts_transition(q: usize, tau: f64) -> Matrix {
    let d = delta_from_tau(q, tau);
    let mut m = Matrix::zeros(q);
    for i in 0..q {
        for j in 0..q {
            m.set(
                i,
                j,
                if i == j {
                    1.0 - (q as f64 - 1.0) * d
                } else {
                    d
                },
            );
        }
    }
    m
}

/// Checks the GTR invariants of `(q, Q, π)` and rescales `Q` so that
/// `Λ₂ = -1`.
pub fn validate_gtr(q: usize, rate_rows: &[Vec<f64>], pi: &[f64]) -> Result<ValidatedModel> {
    if q < 2 {
        return Err(ModelDiagnostic::AlphabetTooSmall(q).into());
    }
    if rate_rows.len() != q || rate_rows.iter().any(|r| r.len() != q) || pi.len() != q {
        return Err(ModelDiagnostic::ShapeMismatch { expected: q }.into());
    }
    if let Some((i, &p)) = pi
        .iter()
        .enumerate()
        .find(|(_, p)| !(**p > 0.0) || !p.is_finite())
    {
        return Err(
            ModelDiagnostic::InvalidStationary(format!("pi[{i}] = {p} is not positive")).into(),
        );
    }
    let total: f64 = pi.iter().sum();
    if (total - 1.0).abs() > MODEL_TOL {
        return Err(ModelDiagnostic::InvalidStationary(format!("weights sum to {total}")).into());
    }
    for (i, row) in rate_rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i != j && !(v > 0.0) {
                return Err(ModelDiagnostic::NegativeRate {
                    row: i,
                    col: j,
                    value: v,
                }
                .into());
            }
        }
        let sum: f64 = row.iter().sum();
        if sum.abs() > MODEL_TOL {
            return Err(ModelDiagnostic::RowSum { row: i, sum }.into());
        }
    }
    for i in 0..q {
        for j in (i + 1)..q {
            let lhs = pi[i] * rate_rows[i][j];
            let rhs = pi[j] * rate_rows[j][i];
            if (lhs - rhs).abs() > MODEL_TOL {
                return Err(ModelDiagnostic::NotReversible { i, j, lhs, rhs }.into());
            }
        }
    }
    let raw = RateModel::build(Matrix::from_rows(rate_rows)?, pi.to_vec())?;
    let lambda2 = raw.eigenvalues[1];
    if !(lambda2 < -MODEL_TOL) {
        return Err(ModelDiagnostic::Degenerate(lambda2).into());
    }
    let scale_factor = if (lambda2 + 1.0).abs() <= MODEL_TOL {
        1.0
    } else {
        -1.0 / lambda2
    };
    let mut model = if scale_factor == 1.0 {
        raw
    } else {
        RateModel::build(raw.rate.scaled(scale_factor), pi.to_vec())?
    };
    model.lambda2 = -1.0;
    model.potts = is_potts_shape(&model);
    Ok(ValidatedModel {
        model,
        scale_factor,
    })
}

fn is_potts_shape(m: &RateModel) -> bool {
    let q = m.q as f64;
    m.pi.iter().all(|p| (p - 1.0 / q).abs() <= MODEL_TOL)
        && (0..m.q).all(|i| {
            (0..m.q).all(|j| {
                let want = if i == j { -(q - 1.0) / q } else { 1.0 / q };
                (m.rate.get(i, j) - want).abs() <= MODEL_TOL
            })
        })
}

impl RateModel {
    /// Builds the spectral decomposition without any validation.
    fn build(rate: Matrix, pi: Vec<f64>) -> Result<Self> {
        let q = rate.dim();
        let sqrt_pi: Vec<f64> = pi.iter().map(|p| p.sqrt()).collect();
        // S = D^{1/2} Q D^{-1/2} is symmetric when Q is reversible.
        let sym = DMatrix::from_fn(q, q, |i, j| {
            let a = sqrt_pi[i] * rate.get(i, j) / sqrt_pi[j];
            let b = sqrt_pi[j] * rate.get(j, i) / sqrt_pi[i];
            0.5 * (a + b)
        });
        let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 10_000).ok_or_else(|| {
            Error::Numeric("symmetric eigendecomposition did not converge".into())
        })?;
        let mut order: Vec<usize> = (0..q).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let mut left = Matrix::zeros(q);
        let mut right = Matrix::zeros(q);
        for (col, &k) in order.iter().enumerate() {
            for i in 0..q {
                let u = eig.eigenvectors[(i, k)];
                left.set(i, col, u / sqrt_pi[i]);
                right.set(col, i, u * sqrt_pi[i]);
            }
        }
        let lambda2 = eigenvalues[1];
        Ok(RateModel {
            q,
            rate,
            pi,
            lambda2,
            eigenvalues,
            left,
            right,
            potts: false,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn rate(&self) -> &Matrix {
        &self.rate
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// True for the symmetric model (uniform `π`, equal off-diagonal rates).
    pub fn is_potts(&self) -> bool {
        self.potts
    }

    /// `exp(tau Q)` via the symmetrized spectral decomposition.
    pub fn transition_matrix(&self, tau: f64) -> Result<Matrix> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "branch length must be finite and >= 0, got {tau}"
            )));
        }
        let q = self.q;
        let mut m = Matrix::zeros(q);
        let exps: Vec<f64> = self.eigenvalues.iter().map(|l| (l * tau).exp()).collect();
        for i in 0..q {
            for j in 0..q {
                let v: f64 = (0..q)
                    .map(|k| self.left.get(i, k) * exps[k] * self.right.get(k, j))
                    .sum();
                if !v.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite transition entry at tau={tau}"
                    )));
                }
                m.set(i, j, v.clamp(0.0, 1.0));
            }
        }
        Ok(m)
    }

    /// `exp(tau Q) v` for a column vector `v`. Uses the closed form for the
    /// symmetric model.
    pub fn propagate(&self, tau: f64, v: &[f64]) -> Vec<f64> {
        if self.potts {
            let keep = (-tau).exp();
            let mean = v.iter().sum::<f64>() / self.q as f64;
            v.iter().map(|x| keep * x + (1.0 - keep) * mean).collect()
        } else {
            match self.transition_matrix(tau) {
                Ok(m) => m.apply(v),
                Err(_) => vec![f64::NAN; self.q],
            }
        }
    }

    pub fn thresholds(&self) -> Thresholds {
        thresholds(self)
    }

    /// Parses the plain-text model format: `q`, then `q` rows of `Q`, then `π`.
    /// Blank lines and `#` comments are ignored.
    pub fn parse_config(text: &str) -> Result<ValidatedModel> {
        let lines: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        let parse_row = |l: &str| -> Result<Vec<f64>> {
            l.split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad number {t:?}: {e}")))
                })
                .collect()
        };
        let q: usize = lines
            .first()
            .ok_or_else(|| Error::Config("empty model file".into()))?
            .parse()
            .map_err(|e| Error::Config(format!("bad alphabet size: {e}")))?;
        if lines.len() != q + 2 {
            return Err(Error::Config(format!(
                "expected {} non-comment lines, found {}",
                q + 2,
                lines.len()
            )));
        }
        let rows = lines[1..=q]
            .iter()
            .map(|l| parse_row(l))
            .collect::<Result<Vec<_>>>()?;
        let pi = parse_row(lines[q + 1])?;
        validate_gtr(q, &rows, &pi)
    }

    /// Inverse of [`RateModel::parse_config`].
    pub fn to_config(&self) -> String {
        let mut s = format!("{}\n", self.q);
        for i in 0..self.q {
            let row: Vec<String> = self.rate.row(i).iter().map(|v| format!("{v}")).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        let pi: Vec<String> = self.pi.iter().map(|v| format!("{v}")).collect();
        s.push_str(&pi.join(" "));
        s.push('\n');
        s
    }
}

/// Thresholds of a normalized model.
pub fn thresholds(model: &RateModel) -> Thresholds {
    let lambda = -model.lambda2;
    let g_lin = 0.5 * LN_2 / lambda;
    // Rescale so that sum_i pi_i Q_ii = -1; the second eigenvalue scales with it.
    let total_rate: f64 = (0..model.q)
        .map(|i| -model.pi[i] * model.rate.get(i, i))
        .sum();
    let lambda_bio = lambda / total_rate;
    Thresholds {
        g_lin,
        g_perc: model.potts.then_some(LN_2),
        g_lin_bio: LN_2 / (2.0 * lambda_bio),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn potts_q2_matrix() {
        let m = potts_rate_matrix(2).unwrap();
        assert_eq!(m.rate().rows(), vec![vec![-0.5, 0.5], vec![0.5, -0.5]]);
        assert_abs_diff_eq!(m.eigenvalues()[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn potts_q4_is_jukes_cantor() {
        let m = potts_rate_matrix(4).unwrap();
        for i in 0..4 {
            assert_eq!(m.pi()[i], 0.25);
            for j in 0..4 {
                let want = if i == j { -0.75 } else { 0.25 };
                assert_eq!(m.rate().get(i, j), want);
            }
        }
    }

    #[test]
    fn potts_second_eigenvalue_is_minus_one() {
        for q in [2, 3, 5, 16, 64] {
            let m = potts_rate_matrix(q).unwrap();
            assert_abs_diff_eq!(m.eigenvalues()[0], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(m.eigenvalues()[1], -1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn potts_rejects_q_below_two() {
        assert!(matches!(
            potts_rate_matrix(1),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn transition_at_zero_is_identity() {
        let m = potts_rate_matrix(3).unwrap();
        assert!(
            m.transition_matrix(0.0)
                .unwrap()
                .max_abs_diff(&Matrix::identity(3))
                < 1e-14
        );
    }

    #[test]
    fn cfn_at_ln2() {
        let m = potts_rate_matrix(2)
            .unwrap()
            .transition_matrix(LN_2)
            .unwrap();
        assert_abs_diff_eq!(m.get(0, 0), 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(m.get(0, 1), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(delta_from_tau(2, LN_2), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn jc_spectral_matches_series() {
        let m = potts_rate_matrix(4).unwrap();
        let spectral = m.transition_matrix(0.5).unwrap();
        let series = expm_series(&m.rate().scaled(0.5));
        assert!(spectral.max_abs_diff(&series) < 1e-10);
    }

    #[test]
    fn delta_limits() {
        assert_eq!(delta_from_tau(4, 0.0), 0.0);
        assert!(delta_from_tau(4, 30.0) < 0.25);
        assert_abs_diff_eq!(delta_from_tau(4, 30.0), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn threshold_values() {
        let jc = potts_rate_matrix(4).unwrap().thresholds();
        assert_abs_diff_eq!(jc.g_lin, 0.346_573_590_279_972_6, epsilon = 1e-12);
        assert_abs_diff_eq!(jc.g_lin_bio, 0.375 * LN_2, epsilon = 1e-12);
        assert_eq!(jc.g_perc, Some(LN_2));
        assert!(jc.g_lin < jc.g_perc.unwrap());
    }

    #[test]
    fn validate_accepts_potts_unscaled() {
        let p = potts_rate_matrix(3).unwrap();
        let v = validate_gtr(3, &p.rate().rows(), p.pi()).unwrap();
        assert_eq!(v.scale_factor, 1.0);
        assert!(v.model.is_potts());
    }

    #[test]
    fn validate_rescales_doubled_potts() {
        let p = potts_rate_matrix(4).unwrap();
        let doubled = p.rate().scaled(2.0).rows();
        let v = validate_gtr(4, &doubled, p.pi()).unwrap();
        // eigenvalue oracle: Q_JC has spectrum {0, -1, -1, -1}; doubling gives -2.
        assert_abs_diff_eq!(v.scale_factor, 0.5, epsilon = 1e-12);
        assert!(v.model.rate().max_abs_diff(p.rate()) < 1e-12);
    }

    #[test]
    fn validate_diagnostics() {
        let p = potts_rate_matrix(3).unwrap();
        let mut rows = p.rate().rows();
        rows[0][1] = -rows[0][1];
        rows[0][0] = -(rows[0][1] + rows[0][2]);
        assert!(matches!(
            validate_gtr(3, &rows, p.pi()),
            Err(Error::InvalidModel(ModelDiagnostic::NegativeRate {
                row: 0,
                col: 1,
                ..
            }))
        ));

        let mut rows = p.rate().rows();
        rows[1][1] += 0.1;
        assert!(matches!(
            validate_gtr(3, &rows, p.pi()),
            Err(Error::InvalidModel(ModelDiagnostic::RowSum { row: 1, .. }))
        ));

        assert!(matches!(
            validate_gtr(3, &p.rate().rows(), &[0.5, 0.5, 0.5]),
            Err(Error::InvalidModel(ModelDiagnostic::InvalidStationary(_)))
        ));

        // Uniform pi with an asymmetric Q cannot be reversible.
        let rows = vec![
            vec![-0.3, 0.1, 0.2],
            vec![0.2, -0.3, 0.1],
            vec![0.1, 0.2, -0.3],
        ];
        assert!(matches!(
            validate_gtr(3, &rows, &[1.0 / 3.0; 3]),
            Err(Error::InvalidModel(ModelDiagnostic::NotReversible { .. }))
        ));
    }

    #[test]
    fn general_gtr_is_reversible_and_stationary() {
        // Q_ij = s_ij pi_j with symmetric exchangeabilities.
        let pi = [0.1, 0.2, 0.3, 0.4];
        let s = [
            [0.0, 1.0, 2.0, 0.5],
            [1.0, 0.0, 1.5, 1.0],
            [2.0, 1.5, 0.0, 0.7],
            [0.5, 1.0, 0.7, 0.0],
        ];
        let mut rows = vec![vec![0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    rows[i][j] = s[i][j] * pi[j];
                }
            }
            rows[i][i] = -rows[i].iter().sum::<f64>();
        }
        let v = validate_gtr(4, &rows, &pi).unwrap();
        assert!(!v.model.is_potts());
        assert_abs_diff_eq!(v.model.lambda2(), -1.0);
        let m = v.model.transition_matrix(0.7).unwrap();
        let series = expm_series(&v.model.rate().scaled(0.7));
        assert!(m.max_abs_diff(&series) < 1e-10);
        let stat = m.left_apply(&pi);
        for i in 0..4 {
            assert_abs_diff_eq!(stat[i], pi[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn config_round_trip() {
        let p = potts_rate_matrix(3).unwrap();
        let v = RateModel::parse_config(&format!("# model\n{}", p.to_config())).unwrap();
        assert!(v.model.rate().max_abs_diff(p.rate()) < 1e-15);
        assert!(RateModel::parse_config("2\n-1 1\n").is_err());
    }

    proptest! {
        #[test]
        fn semigroup(a in 0.0f64..3.0, b in 0.0f64..3.0, q in 2usize..6) {
            let m = potts_rate_matrix(q).unwrap();
            let lhs = m.transition_matrix(a).unwrap().mul(&m.transition_matrix(b).unwrap());
            let rhs = m.transition_matrix(a + b).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-9);
        }

        #[test]
        fn stationarity_and_rows(tau in 0.0f64..5.0) {
            let pi = [0.2, 0.3, 0.5];
            let rows = vec![
                vec![-(0.3 + 0.5), 0.3, 0.5],
                vec![0.2, -(0.2 + 0.5 * 0.8), 0.5 * 0.8],
                vec![0.2, 0.3 * 0.8, -(0.2 + 0.3 * 0.8)],
            ];
            let v = validate_gtr(3, &rows, &pi).unwrap();
            let m = v.model.transition_matrix(tau).unwrap();
            let stat = m.left_apply(&pi);
            for i in 0..3 {
                prop_assert!((stat[i] - pi[i]).abs() < 1e-9);
                prop_assert!((m.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn delta_monotone(t1 in 0.0f64..10.0, dt in 1e-6f64..5.0, q in 2usize..100) {
            prop_assert!(delta_from_tau(q, t1) < delta_from_tau(q, t1 + dt));
        }
    }
}

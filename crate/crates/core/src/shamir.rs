//! Polynomial secret sharing over the reals.
//!
//! A secret `c` is hidden as the constant term of `f(θ) = c + a_1 θ + … + a_{p-1} θ^{p-1}`
//! with masking coefficients drawn from `[-1, 1]`. Shares are evaluations of `f`
//! at the integer points of a [`KeySequence`]; any `p` of them recover `c` by
//! Lagrange interpolation at zero, while fewer leave it linearly free (see
//! [`underdetermination_certificate`]).

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use twofloat::TwoFloat;

use crate::error::{Error, Result};

/// Largest admissible key element.
pub const MAX_KAPPA: i64 = 10_000;
/// Largest admissible number of channels.
pub const MAX_CHANNELS: usize = 16;
/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct SecretPolynomial {
    constant_term: f64,
    coefficients: Vec<f64>,
}

impl SecretPolynomial {
    /// Builds a polynomial from its constant term and masking coefficients
    /// `a_1..a_{p-1}`, each of which must lie in `[-1, 1]`.
    pub fn new(constant_term: f64, coefficients: Vec<f64>) -> Result<Self> {
        if let Some(bad) = coefficients.iter().find(|a| !(-1.0..=1.0).contains(*a)) {
            return Err(Error::Config(format!("coefficient {bad} outside [-1, 1]")));
        }
        Ok(Self {
            constant_term,
            coefficients,
        })
    }

    /// Draws `degree_bound` coefficients uniformly from `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(constant_term: f64, degree_bound: usize, rng: &mut R) -> Self {
        let coefficients = (0..degree_bound).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        Self {
            constant_term,
            coefficients,
        }
    }

    pub fn constant_term(&self) -> f64 {
        self.constant_term
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn degree_bound(&self) -> usize {
        self.coefficients.len()
    }

    pub fn eval(&self, theta: f64) -> f64 {
        eval_poly(self, theta)
    }
}

/// Horner evaluation of `constant + Σ a_j θ^j`, carried in double-double
/// so the share is the correctly rounded value in practice.
pub fn eval_poly(poly: &SecretPolynomial, theta: f64) -> f64 {
    let tail = poly
        .coefficients
        .iter()
        .rev()
        .fold(TwoFloat::from(0.0), |acc, &a| (acc + a) * theta);
    f64::from(tail + poly.constant_term)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Share {
    pub point: i64,
    pub value: f64,
}

impl Share {
    pub fn new(point: i64, value: f64) -> Self {
        Self { point, value }
    }
}

/// The common evaluation abscissas, one per channel, with their Lagrange
/// weights at zero cached.
#[derive(Clone, Debug, PartialEq)]
pub struct KeySequence {
    elements: Vec<i64>,
    kappa: i64,
    weights: Vec<f64>,
}

impl KeySequence {
    pub fn new(elements: Vec<i64>, kappa: i64) -> Result<Self> {
        if !(1..=MAX_KAPPA).contains(&kappa) {
            return Err(Error::Config(format!("kappa {kappa} outside [1, {MAX_KAPPA}]")));
        }
        if elements.is_empty() || elements.len() > MAX_CHANNELS {
            return Err(Error::Config(format!(
                "key length {} outside [1, {MAX_CHANNELS}]",
                elements.len()
            )));
        }
        if let Some(&value) = elements.iter().find(|&&e| e < 1 || e > kappa) {
            return Err(Error::KeyOutOfRange { value, kappa });
        }
        let weights = lagrange_weights_at_zero(&elements)?;
        Ok(Self {
            elements,
            kappa,
            weights,
        })
    }

    /// The public default key `(1, 2, …, bar_p)`.
    pub fn default_key(bar_p: usize) -> Result<Self> {
        let elements: Vec<i64> = (1..=bar_p as i64).collect();
        Self::new(elements, (bar_p as i64).max(1))
    }

    pub fn elements(&self) -> &[i64] {
        &self.elements
    }

    pub fn kappa(&self) -> i64 {
        self.kappa
    }

    /// Number of channels `p̄`.
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn position(&self, point: i64) -> Option<usize> {
        self.elements.iter().position(|&e| e == point)
    }

    /// Cached weights, in key order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `∏_{ℓ≠k} (−ℓ) / ∏_{ℓ≠k} (k − ℓ)` over the other elements of `key`.
pub fn lagrange_weight_at_zero(point: i64, key: &KeySequence) -> Result<f64> {
    key.position(point)
        .map(|idx| key.weights[idx])
        .ok_or(Error::PointNotInKey(point))
}

/// Lagrange basis values at zero for an arbitrary set of distinct points.
pub fn lagrange_weights_at_zero(points: &[i64]) -> Result<Vec<f64>> {
    Ok(extended_weights(points)?.into_iter().map(f64::from).collect())
}

fn extended_weights(points: &[i64]) -> Result<Vec<TwoFloat>> {
    ensure_distinct(points)?;
    Ok(points
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let (num, den) = points
                .iter()
                .enumerate()
                .filter(|&(m, _)| m != j)
                .fold((TwoFloat::from(1.0), TwoFloat::from(1.0)), |(n, d), (_, &l)| {
                    (n * (-l) as f64, d * (k - l) as f64)
                });
            quotient(num, den)
        })
        .collect())
}

/// Double-double quotient by residual correction; `TwoFloat`'s own division
/// keeps only the leading word.
fn quotient(num: TwoFloat, den: TwoFloat) -> TwoFloat {
    let q1 = num.hi() / den.hi();
    let r = num - den * q1;
    let q2 = r.hi() / den.hi();
    let r = r - den * q2;
    let q3 = r.hi() / den.hi();
    TwoFloat::from(q1) + q2 + q3
}

fn ensure_distinct(points: &[i64]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for &p in points {
        if !seen.insert(p) {
            return Err(Error::DuplicateKeyPoint(p));
        }
    }
    Ok(())
}

/// Evaluates `poly` at every key element, in key order.
pub fn share(poly: &SecretPolynomial, key: &[i64]) -> Result<Vec<Share>> {
    ensure_distinct(key)?;
    Ok(key
        .iter()
        .map(|&k| Share::new(k, eval_poly(poly, k as f64)))
        .collect())
}

/// Interpolates the shares and evaluates at zero.
pub fn reconstruct(shares: &[Share]) -> Result<f64> {
    if shares.is_empty() {
        return Err(Error::Config("cannot reconstruct from zero shares".into()));
    }
    let points: Vec<i64> = shares.iter().map(|s| s.point).collect();
    let weights = extended_weights(&points)?;
    let total = shares
        .iter()
        .zip(weights)
        .fold(TwoFloat::from(0.0), |acc, (s, w)| acc + w * s.value);
    Ok(f64::from(total))
}

/// Whether a share set pins down the constant term of a polynomial of degree
/// at most `degree_bound`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Certificate {
    /// The constant term is the unique value consistent with the shares
    /// (least-squares value when the shares over-determine the system).
    Determined { constant: f64 },
    /// The constant term is unconstrained; `dimension` is the dimension of the
    /// affine space of polynomials consistent with the shares.
    Free { dimension: usize },
}

impl Certificate {
    pub fn is_determined(&self) -> bool {
        matches!(self, Certificate::Determined { .. })
    }
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
}

/// Rank test on the Vandermonde system of `shares` against a polynomial of
/// degree `degree_bound`. Columns are rescaled by powers of the largest
/// abscissa, which leaves the rank unchanged.
pub fn underdetermination_certificate(shares: &[Share], degree_bound: usize) -> Certificate {
    let unknowns = degree_bound + 1;
    let scale = shares
        .iter()
        .map(|s| (s.point as f64).abs())
        .fold(1.0_f64, f64::max);
    let rows = shares.len();
    let vandermonde = DMatrix::from_fn(rows, unknowns, |r, c| {
        (shares[r].point as f64 / scale).powi(c as i32)
    });
    let rank = numerical_rank(&vandermonde);

    let augmented = DMatrix::from_fn(rows + 1, unknowns, |r, c| {
        if r < rows {
            vandermonde[(r, c)]
        } else if c == 0 {
            1.0
        } else {
            0.0
        }
    });
    if numerical_rank(&augmented) != rank {
        return Certificate::Free {
            dimension: unknowns - rank,
        };
    }

    let values = DVector::from_iterator(rows, shares.iter().map(|s| s.value));
    let svd = vandermonde.svd(true, true);
    let max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let solution = svd
        .solve(&values, RANK_TOLERANCE * max)
        .expect("both factors were computed");
    Certificate::Determined {
        constant: solution[0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn poly(c: f64, coeffs: &[f64]) -> SecretPolynomial {
        SecretPolynomial::new(c, coeffs.to_vec()).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(eval_poly(&poly(5.0, &[]), 100.0), 5.0);
        assert_eq!(eval_poly(&poly(5.0, &[0.5]), 4.0), 7.0);
        let p = poly(37.5, &[0.3, -0.2, 0.9]);
        assert_eq!(eval_poly(&p, 0.0), 37.5);
    }

    #[test]
    fn coefficients_must_be_in_unit_interval() {
        assert!(SecretPolynomial::new(1.0, vec![2.0]).is_err());
        assert!(SecretPolynomial::new(1.0, vec![-1.0, 1.0]).is_ok());
    }

    #[test]
    fn share_examples() {
        // 2x + 5 needs a coefficient outside [-1, 1], so build it directly.
        let p = SecretPolynomial {
            constant_term: 5.0,
            coefficients: vec![2.0],
        };
        assert_eq!(
            share(&p, &[1, 2]).unwrap(),
            vec![Share::new(1, 7.0), Share::new(2, 9.0)]
        );
        let zero = poly(0.0, &[0.0, 0.0, 0.0]);
        let shares = share(&zero, &[4, 7, 15, 3]).unwrap();
        assert!(shares.iter().all(|s| s.value == 0.0));
        assert_eq!(
            shares.iter().map(|s| s.point).collect::<Vec<_>>(),
            vec![4, 7, 15, 3]
        );
        assert!(matches!(
            share(&zero, &[4, 4]),
            Err(Error::DuplicateKeyPoint(4))
        ));
    }

    #[test]
    fn share_matches_power_sum_oracle() {
        let others = [31.2, 40.0, 28.5, 36.955];
        let c = 37.731 * 5.0 - others.iter().sum::<f64>();
        let p = poly(c, &[0.25, -0.75, 0.5]);
        for s in share(&p, &[4, 7, 15, 3]).unwrap() {
            let x = s.point as f64;
            let oracle = c + 0.25 * x - 0.75 * x * x + 0.5 * x * x * x;
            assert!((s.value - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
        }
    }

    #[test]
    fn lagrange_weight_examples() {
        let key = KeySequence::new(vec![1, 2], 20).unwrap();
        assert_eq!(lagrange_weight_at_zero(1, &key).unwrap(), 2.0);
        assert_eq!(lagrange_weight_at_zero(2, &key).unwrap(), -1.0);
        assert!(matches!(
            lagrange_weight_at_zero(3, &key),
            Err(Error::PointNotInKey(3))
        ));
        let key = KeySequence::new(vec![4, 7, 15, 3], 20).unwrap();
        let sum: f64 = key.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reconstruct_examples() {
        let r = reconstruct(&[Share::new(1, 7.0), Share::new(2, 9.0)]).unwrap();
        assert!((r - 5.0).abs() < 1e-12);
        let c = -12.5;
        let constant: Vec<Share> = [4, 7, 15, 3].iter().map(|&k| Share::new(k, c)).collect();
        assert!((reconstruct(&constant).unwrap() - c).abs() < 1e-12);
        assert!(matches!(
            reconstruct(&[Share::new(3, 1.0), Share::new(3, 2.0)]),
            Err(Error::DuplicateKeyPoint(3))
        ));
    }

    #[test]
    fn key_validation() {
        assert!(matches!(
            KeySequence::new(vec![1, 1], 20),
            Err(Error::DuplicateKeyPoint(1))
        ));
        assert!(matches!(
            KeySequence::new(vec![0, 1], 20),
            Err(Error::KeyOutOfRange { value: 0, .. })
        ));
        assert!(KeySequence::new(vec![1, 21], 20).is_err());
        assert!(KeySequence::new((1..=17).collect(), 100).is_err());
        assert!(KeySequence::new(vec![1], 10_001).is_err());
        assert_eq!(KeySequence::default_key(4).unwrap().elements(), &[1, 2, 3, 4]);
    }

    #[test]
    fn certificate_examples() {
        let p = poly(3.0, &[0.5, -0.5]);
        let shares = share(&p, &[2, 5]).unwrap();
        assert_eq!(
            underdetermination_certificate(&shares, 2),
            Certificate::Free { dimension: 1 }
        );
        let shares = share(&p, &[2, 5, 9]).unwrap();
        match underdetermination_certificate(&shares, 2) {
            Certificate::Determined { constant } => assert!((constant - 3.0).abs() < 1e-9),
            other => panic!("expected Determined, got {other:?}"),
        }
        assert_eq!(
            underdetermination_certificate(&[], 0),
            Certificate::Free { dimension: 1 }
        );
    }

    #[test]
    fn repeated_points_add_no_rank() {
        let shares = [Share::new(4, 1.0), Share::new(4, 1.0), Share::new(7, 2.0)];
        assert_eq!(
            underdetermination_certificate(&shares, 2),
            Certificate::Free { dimension: 1 }
        );
    }

    #[test]
    fn zero_point_pins_constant_even_when_underdetermined() {
        let shares = [Share::new(0, 4.0)];
        assert_eq!(
            underdetermination_certificate(&shares, 3),
            Certificate::Determined { constant: 4.0 }
        );
    }

    #[test]
    fn random_polynomial_respects_degree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = SecretPolynomial::random(1.0, 3, &mut rng);
        assert_eq!(p.degree_bound(), 3);
        assert!(p.coefficients().iter().all(|a| (-1.0..=1.0).contains(a)));
    }
}

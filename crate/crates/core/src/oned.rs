//! Closed-form one-dimensional homogenization by exact rational integration.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::material::{piecewise_1d_field, validate_breakpoints, PerturbedMaterial};

/// A function on `[-1/2, 1/2)` taking `values[i]` on
/// `[breakpoints[i], breakpoints[i+1])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstant1D {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseConstant1D {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        validate_breakpoints(&breakpoints, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values must be finite"));
        }
        Ok(PiecewiseConstant1D { breakpoints, values })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(vec![-0.5, 0.5], vec![c])
    }

    /// Two phases of equal measure: `first` on `[-1/2, 0)`, `second` on `[0, 1/2)`.
    pub fn halves(first: f64, second: f64) -> Result<Self> {
        Self::new(vec![-0.5, 0.0, 0.5], vec![first, second])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value on the interval containing `x`, for `x ∈ [-1/2, 1/2)`.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.breakpoints[1..].partition_point(|&b| b <= x);
        self.values[i.min(self.values.len() - 1)]
    }

    fn ensure_positive(&self, what: &str) -> Result<()> {
        if let Some(v) = self.values.iter().find(|&&v| !(v > 0.0)) {
            return Err(invalid(format!("{what} must be strictly positive, found {v}")));
        }
        Ok(())
    }

    pub fn to_material(a: &Self, c: &Self) -> Result<PerturbedMaterial> {
        let (bps, av, cv) = refine(a, c);
        let bps: Vec<f64> = bps.iter().map(|b| b.to_f64().expect("finite breakpoint")).collect();
        let av: Vec<f64> = av.iter().map(|v| v.to_f64().expect("finite")).collect();
        let cv: Vec<f64> = cv.iter().map(|v| v.to_f64().expect("finite")).collect();
        PerturbedMaterial::new(piecewise_1d_field(&bps, &av)?, piecewise_1d_field(&bps, &cv)?)
    }
}

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite value")
}

/// Common refinement of the two partitions with the values on each piece.
fn refine(a: &PiecewiseConstant1D, c: &PiecewiseConstant1D) -> (Vec<BigRational>, Vec<BigRational>, Vec<BigRational>) {
    let mut bps: Vec<f64> = a.breakpoints.iter().chain(&c.breakpoints).copied().collect();
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    let mids: Vec<f64> = bps.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    (
        bps.iter().map(|&b| rat(b)).collect(),
        mids.iter().map(|&m| rat(a.eval(m))).collect(),
        mids.iter().map(|&m| rat(c.eval(m))).collect(),
    )
}

fn integrate(bps: &[BigRational], f: impl Fn(usize) -> BigRational) -> BigRational {
    bps.windows(2)
        .enumerate()
        .fold(BigRational::zero(), |acc, (i, w)| acc + (&w[1] - &w[0]) * f(i))
}

fn check_sum(av: &[BigRational], cv: &[BigRational]) -> Result<()> {
    if av.iter().zip(cv).any(|(a, c)| !(a + c).is_positive()) {
        return Err(invalid("a + c must be strictly positive"));
    }
    Ok(())
}

/// `(∫ 1/a)⁻¹`.
pub fn exact_aper_star_rational(a: &PiecewiseConstant1D) -> Result<BigRational> {
    a.ensure_positive("a")?;
    let bps: Vec<BigRational> = a.breakpoints.iter().map(|&b| rat(b)).collect();
    let vals: Vec<BigRational> = a.values.iter().map(|&v| rat(v)).collect();
    Ok(integrate(&bps, |i| vals[i].recip()).recip())
}

pub fn exact_aper_star(a: &PiecewiseConstant1D) -> Result<f64> {
    Ok(to_f64(&exact_aper_star_rational(a)?))
}

/// `((1−η)∫ 1/a + η ∫ 1/(a+c))⁻¹`.
pub fn exact_aeta_star_rational(a: &PiecewiseConstant1D, c: &PiecewiseConstant1D, eta: f64) -> Result<BigRational> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(invalid(format!("eta must lie in [0, 1], got {eta}")));
    }
    a.ensure_positive("a")?;
    let (bps, av, cv) = refine(a, c);
    check_sum(&av, &cv)?;
    let eta = rat(eta);
    let one_minus = BigRational::one() - &eta;
    let inv = integrate(&bps, |i| &one_minus * av[i].recip() + &eta * (&av[i] + &cv[i]).recip());
    Ok(inv.recip())
}

pub fn exact_aeta_star(a: &PiecewiseConstant1D, c: &PiecewiseConstant1D, eta: f64) -> Result<f64> {
    Ok(to_f64(&exact_aeta_star_rational(a, c, eta)?))
}

/// `S = ∫ c / (a (a + c))`.
fn defect_integral(a: &PiecewiseConstant1D, c: &PiecewiseConstant1D) -> Result<BigRational> {
    a.ensure_positive("a")?;
    let (bps, av, cv) = refine(a, c);
    check_sum(&av, &cv)?;
    Ok(integrate(&bps, |i| &cv[i] / (&av[i] * (&av[i] + &cv[i]))))
}

/// `(ā₁*, ā₂*) = (a*² S, a*³ S²)`.
pub fn exact_expansion_coeffs_rational(
    a: &PiecewiseConstant1D,
    c: &PiecewiseConstant1D,
) -> Result<(BigRational, BigRational)> {
    let s = defect_integral(a, c)?;
    let a_star = exact_aper_star_rational(a)?;
    let a1 = &a_star * &a_star * &s;
    let a2 = &a_star * &a_star * &a_star * &s * &s;
    Ok((a1, a2))
}

pub fn exact_expansion_coeffs(a: &PiecewiseConstant1D, c: &PiecewiseConstant1D) -> Result<(f64, f64)> {
    let (a1, a2) = exact_expansion_coeffs_rational(a, c)?;
    Ok((to_f64(&a1), to_f64(&a2)))
}

/// Exact `A₁*,N` and `A₂*,N` of the continuous supercell problems in 1D.
/// With `x = a* S / N`: `A₁*,N = ā₁ / (1 − x)` and
/// `A₂*,N = (N − 1)/N · ā₂ / ((1 − x)(1 − 2x))`.
pub fn exact_finite_n_coeffs(a: &PiecewiseConstant1D, c: &PiecewiseConstant1D, n: usize) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(invalid("N must be positive"));
    }
    let s = defect_integral(a, c)?;
    let a_star = exact_aper_star_rational(a)?;
    let (a1_bar, a2_bar) = exact_expansion_coeffs_rational(a, c)?;
    let nn = BigRational::from_integer(BigInt::from(n));
    let x = &a_star * &s / &nn;
    let one = BigRational::one();
    let two = BigRational::from_integer(BigInt::from(2));
    let a1 = a1_bar / (&one - &x);
    let a2 = (&nn - &one) / &nn * a2_bar / ((&one - &x) * (&one - &two * &x));
    Ok((to_f64(&a1), to_f64(&a2)))
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// One row of the remainder table `r(η) = a_η* − (a* + η ā₁* + η² ā₂*)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainderRow {
    pub eta: f64,
    pub exact: f64,
    pub expansion: f64,
    pub remainder: f64,
    /// `r(η) / r(2η)` when `2η` is also in the table.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio_to_double: Option<f64>,
}

pub fn remainder(a: &PiecewiseConstant1D, c: &PiecewiseConstant1D, eta: f64) -> Result<f64> {
    let exact = exact_aeta_star_rational(a, c, eta)?;
    let a_star = exact_aper_star_rational(a)?;
    let (a1, a2) = exact_expansion_coeffs_rational(a, c)?;
    let e = rat(eta);
    Ok(to_f64(&(exact - a_star - &e * a1 - &e * &e * a2)))
}

pub fn remainder_table(a: &PiecewiseConstant1D, c: &PiecewiseConstant1D, etas: &[f64]) -> Result<Vec<RemainderRow>> {
    let a_star = exact_aper_star(a)?;
    let (a1, a2) = exact_expansion_coeffs(a, c)?;
    let rows: Vec<(f64, f64, f64)> = etas
        .iter()
        .map(|&eta| Ok((eta, exact_aeta_star(a, c, eta)?, remainder(a, c, eta)?)))
        .collect::<Result<_>>()?;
    Ok(rows
        .iter()
        .map(|&(eta, exact, r)| {
            let ratio_to_double = rows
                .iter()
                .find(|(e2, _, _)| (*e2 - 2.0 * eta).abs() < 1e-15)
                .map(|(_, _, r2)| r / r2);
            RemainderRow {
                eta,
                exact,
                expansion: a_star + eta * a1 + eta * eta * a2,
                remainder: r,
                ratio_to_double,
            }
        })
        .collect())
}

/// Summary emitted by the `oned` subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnedReport {
    pub a_star: f64,
    pub eta: f64,
    pub a_eta_star: f64,
    pub a1_bar: f64,
    pub a2_bar: f64,
    pub remainder_table: Vec<RemainderRow>,
}

pub const DEFAULT_REMAINDER_ETAS: [f64; 4] = [0.4, 0.2, 0.1, 0.05];

pub fn report(a: &PiecewiseConstant1D, c: &PiecewiseConstant1D, eta: f64, etas: &[f64]) -> Result<OnedReport> {
    let (a1_bar, a2_bar) = exact_expansion_coeffs(a, c)?;
    Ok(OnedReport {
        a_star: exact_aper_star(a)?,
        eta,
        a_eta_star: exact_aeta_star(a, c, eta)?,
        a1_bar,
        a2_bar,
        remainder_table: remainder_table(a, c, etas)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::FromPrimitive;
    use proptest::prelude::*;

    fn frac(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    fn test_case() -> (PiecewiseConstant1D, PiecewiseConstant1D) {
        (
            PiecewiseConstant1D::halves(20.0, 120.0).unwrap(),
            PiecewiseConstant1D::halves(0.0, -100.0).unwrap(),
        )
    }

    #[test]
    fn harmonic_means() {
        assert_eq!(exact_aper_star(&PiecewiseConstant1D::constant(3.5).unwrap()).unwrap(), 3.5);
        let (a, _) = test_case();
        assert_eq!(exact_aper_star_rational(&a).unwrap(), frac(240, 7));
        let b = PiecewiseConstant1D::halves(1.0, 4.0).unwrap();
        assert_eq!(exact_aper_star_rational(&b).unwrap(), frac(8, 5));
    }

    #[test]
    fn aeta_star_values() {
        let (a, c) = test_case();
        assert_eq!(exact_aeta_star_rational(&a, &c, 0.0).unwrap(), frac(240, 7));
        assert_eq!(exact_aeta_star_rational(&a, &c, 1.0).unwrap(), BigRational::from_u32(20).unwrap());
        assert_eq!(exact_aeta_star_rational(&a, &c, 0.5).unwrap(), frac(480, 19));
        assert!(exact_aeta_star(&a, &c, 1.5).is_err());
    }

    #[test]
    fn expansion_coefficients() {
        let (a, c) = test_case();
        let (a1, a2) = exact_expansion_coeffs_rational(&a, &c).unwrap();
        assert_eq!(a1, frac(-1200, 49));
        assert_eq!(a2, frac(6000, 343));
        let zero = PiecewiseConstant1D::constant(0.0).unwrap();
        let (z1, z2) = exact_expansion_coeffs(&a, &zero).unwrap();
        assert_eq!((z1, z2), (0.0, 0.0));
    }

    #[test]
    fn rejects_non_coercive_input() {
        let bad = PiecewiseConstant1D::halves(1.0, -1.0).unwrap();
        assert!(exact_aper_star(&bad).is_err());
        let (a, _) = test_case();
        let c = PiecewiseConstant1D::halves(0.0, -120.0).unwrap();
        assert!(exact_expansion_coeffs(&a, &c).is_err());
    }

    #[test]
    fn remainder_is_third_order() {
        let (a, c) = test_case();
        let table = remainder_table(&a, &c, &[0.2, 0.1, 0.05, 0.025]).unwrap();
        for row in table.iter().filter(|r| r.ratio_to_double.is_some()) {
            let ratio = row.ratio_to_double.unwrap();
            assert!((0.1..=0.16).contains(&ratio), "eta {} ratio {ratio}", row.eta);
        }
    }

    #[test]
    fn finite_n_coefficients_converge_like_one_over_n() {
        let (a, c) = test_case();
        let (a1_bar, a2_bar) = exact_expansion_coeffs(&a, &c).unwrap();
        let (a1, a2) = exact_finite_n_coeffs(&a, &c, 41).unwrap();
        assert!((a1 / a1_bar - 41.0 / (41.0 + 5.0 / 7.0)).abs() < 1e-14);
        let (b1, _) = exact_finite_n_coeffs(&a, &c, 82).unwrap();
        let ratio = (a1 - a1_bar) / (b1 - a1_bar);
        assert!((ratio - 2.0).abs() < 0.05);
        assert!(a2 < a2_bar && a2 > 0.9 * a2_bar);
    }

    #[test]
    fn refinement_handles_distinct_partitions() {
        let a = PiecewiseConstant1D::new(vec![-0.5, -0.25, 0.5], vec![1.0, 2.0]).unwrap();
        let c = PiecewiseConstant1D::new(vec![-0.5, 0.25, 0.5], vec![0.0, 1.0]).unwrap();
        // ∫1/a = 1/4 + 3/8 = 5/8
        assert_eq!(exact_aper_star_rational(&a).unwrap(), frac(8, 5));
        // ∫1/(a+c) = 1/4 + 1/4 + 1/12 = 7/12
        assert_eq!(exact_aeta_star_rational(&a, &c, 1.0).unwrap(), frac(12, 7));
    }

    proptest! {
        #[test]
        fn second_coefficient_is_non_negative(a1 in 1.0f64..100.0, a2 in 1.0f64..100.0, c1 in -0.9f64..5.0, c2 in -0.9f64..5.0) {
            let a = PiecewiseConstant1D::halves(a1, a2).unwrap();
            let c = PiecewiseConstant1D::halves(c1 * a1, c2 * a2).unwrap();
            let (_, abar2) = exact_expansion_coeffs(&a, &c).unwrap();
            prop_assert!(abar2 >= 0.0);
        }

        #[test]
        fn aeta_star_between_endpoints(a1 in 1.0f64..100.0, a2 in 1.0f64..100.0, c2 in -0.9f64..5.0, eta in 0.0f64..1.0) {
            let a = PiecewiseConstant1D::halves(a1, a2).unwrap();
            let c = PiecewiseConstant1D::halves(0.0, c2 * a2).unwrap();
            let lo = exact_aeta_star(&a, &c, 0.0).unwrap();
            let hi = exact_aeta_star(&a, &c, 1.0).unwrap();
            let v = exact_aeta_star(&a, &c, eta).unwrap();
            prop_assert!(v >= lo.min(hi) * (1.0 - 1e-12) && v <= lo.max(hi) * (1.0 + 1e-12));
        }
    }
}

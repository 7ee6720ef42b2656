//! Gauss-sum kernels.
//!
//! Every phase is reduced exactly in integer arithmetic before it is turned
//! into an angle, so `exp(2πi m²ℓ/N)` never sees a large floating argument.
//! Direct sums accumulate with Neumaier compensation: the analytic zeros of
//! the shifted sums must stay distinguishable from values like `1/N`.

use std::f64::consts::PI;

use num_complex::Complex64;
use num_rational::Ratio;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::numtheory::{gcd_conv, Semiprime};

/// `exp(2πi · num/den)` with `num` reduced modulo `den` first.
#[inline]
pub fn unit_phase(num: u64, den: u64) -> Complex64 {
    let r = num % den;
    let frac = r as f64 / den as f64;
    Complex64::from_polar(1.0, 2.0 * PI * frac)
}

#[inline]
fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

/// `m² · ell mod n`.
#[inline]
pub fn quadratic_residue_phase(m: u64, ell: u64, n: u64) -> u64 {
    let sq = mul_mod(m, m, n);
    mul_mod(sq, ell % n, n)
}

/// Neumaier-compensated running sum of complex terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    re: f64,
    re_c: f64,
    im: f64,
    im_c: f64,
}

#[inline]
fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: Complex64) {
        neumaier(&mut self.re, &mut self.re_c, z.re);
        neumaier(&mut self.im, &mut self.im_c, z.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re + self.re_c, self.im + self.im_c)
    }
}

impl FromIterator<Complex64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = Complex64>>(iter: I) -> Self {
        let mut acc = Self::new();
        for z in iter {
            acc.add(z);
        }
        acc
    }
}

/// Neumaier-compensated sum of reals.
pub fn compensated_real_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for x in iter {
        neumaier(&mut s, &mut c, x);
    }
    s + c
}

/// Standard Gauss sum `G(ℓ, N) = Σ_{m<N} exp(2πi m²ℓ/N)`.
pub fn eval_g(ell: u64, n: u64) -> Complex64 {
    assert!(n >= 1, "eval_g: modulus must be positive");
    (0..n)
        .map(|m| unit_phase(quadratic_residue_phase(m, ell, n), n))
        .collect::<CompensatedSum>()
        .value()
}

fn require_odd_modulus(n: u64) -> Result<()> {
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "modulus must be odd and at least 3, got {n}"
        )));
    }
    Ok(())
}

/// `g(ℓ, N) = |G(ℓ, N)|² / N`, which for odd `N` is `gcd(ℓ mod N, N)`.
pub fn g_of(ell: u64, n: u64) -> Result<u64> {
    require_odd_modulus(n)?;
    gcd_conv(ell % n, n)
}

/// Shifted normalized Gauss sum
/// `𝒲_n(ℓ) = (1/N) Σ_{m<N} exp(2πi (m²ℓ + m·n)/N)`.
pub fn eval_w(n0: u64, ell: u64, n: u64) -> Complex64 {
    assert!(n >= 1, "eval_w: modulus must be positive");
    let shift = n0 % n;
    let sum = (0..n)
        .map(|m| {
            let num = quadratic_residue_phase(m, ell, n) + mul_mod(m, shift, n);
            unit_phase(num, n)
        })
        .collect::<CompensatedSum>()
        .value();
    sum / n as f64
}

/// Exact `|𝒲_{n0}(ℓ)|²` for `N = p·q`.
///
/// Unit `ℓ` gives `1/N`; `gcd(ℓ, N) = f ∈ {p, q}` gives `f/N` when `f | n0`
/// and zero otherwise; `ℓ ≡ 0` gives 1 at `n0 ≡ 0` and zero elsewhere.
pub fn closed_w_sq(n0: u64, ell: u64, s: &Semiprime) -> Ratio<u64> {
    let n = s.n();
    let n0 = n0 % n;
    let class = s.classify(ell);
    match class.gcd {
        1 => Ratio::new(1, n),
        g if g == n => Ratio::from_integer(u64::from(n0 == 0)),
        f if n0.is_multiple_of(f) => Ratio::new(f, n),
        _ => Ratio::from_integer(0),
    }
}

/// `(1/M) Σ_{m<M} exp(2πi (m²ℓ/N + m·n/M))`, summed directly.
pub fn eval_w_tilde(n0: u64, ell: u64, n: u64, m_len: u64) -> Complex64 {
    assert!(
        n >= 1 && m_len >= 1,
        "eval_w_tilde: empty modulus or length"
    );
    let shift = n0 % m_len;
    let sum = (0..m_len)
        .map(|m| w_tilde_term(m, ell, n, shift, m_len))
        .collect::<CompensatedSum>()
        .value();
    sum / m_len as f64
}

#[inline]
fn w_tilde_term(m: u64, ell: u64, n: u64, shift: u64, m_len: u64) -> Complex64 {
    let quad = quadratic_residue_phase(m, ell, n) as f64 / n as f64;
    let lin = mul_mod(m, shift, m_len) as f64 / m_len as f64;
    let mut frac = quad + lin;
    if frac >= 1.0 {
        frac -= 1.0;
    }
    Complex64::from_polar(1.0, 2.0 * PI * frac)
}

/// The quadratic-phase vector `exp(2πi m²ℓ/N)`, `m < m_len`.
pub fn quadratic_phase_vector(ell: u64, n: u64, m_len: u64) -> Vec<Complex64> {
    (0..m_len)
        .map(|m| unit_phase(quadratic_residue_phase(m, ell, n), n))
        .collect()
}

/// All of `𝒲̃_n(ℓ, M)` for `n < M` at once, through one inverse FFT of the
/// quadratic-phase vector.
pub fn w_tilde_row(ell: u64, n: u64, m_len: u64, planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
    let mut buf = quadratic_phase_vector(ell, n, m_len);
    planner.plan_fft_inverse(m_len as usize).process(&mut buf);
    let scale = 1.0 / m_len as f64;
    buf.iter_mut().for_each(|z| *z *= scale);
    buf
}

/// Splits `𝒲̃` along `m = s·N + k` into the block-periodic main part and the
/// tail remainder over the last `M mod N` indices. `main + remainder` equals
/// [`eval_w_tilde`]; dropping the remainder is the usual approximation.
pub fn w_tilde_split(n0: u64, ell: u64, n: u64, m_len: u64) -> (Complex64, Complex64) {
    let blocks = m_len / n;
    let shift = n0 % m_len;
    let block_factor = eval_f(mul_mod(n, shift, m_len) as f64 / m_len as f64, blocks);
    let inner = (0..n)
        .map(|k| w_tilde_term(k, ell, n, shift, m_len))
        .collect::<CompensatedSum>()
        .value();
    let main = block_factor * inner / m_len as f64;
    let remainder = (blocks * n..m_len)
        .map(|m| w_tilde_term(m, ell, n, shift, m_len))
        .collect::<CompensatedSum>()
        .value()
        / m_len as f64;
    (main, remainder)
}

/// Geometric sum `F(α; M) = Σ_{k<M} exp(2πi k α)`, summed directly.
pub fn eval_f(alpha: f64, m_len: u64) -> Complex64 {
    let x = alpha - alpha.round();
    (0..m_len)
        .map(|k| {
            let t = k as f64 * x;
            Complex64::from_polar(1.0, 2.0 * PI * (t - t.round()))
        })
        .collect::<CompensatedSum>()
        .value()
}

/// Closed form of [`eval_f`]: `exp(iπα(M−1)) sin(παM)/sin(πα)`, with the
/// removable singularity at integral `α` returning `M`.
pub fn eval_f_closed(alpha: f64, m_len: u64) -> Complex64 {
    let x = alpha - alpha.round();
    let den = (PI * x).sin();
    let m = m_len as f64;
    if den.abs() < 1e-12 {
        return Complex64::new(m, 0.0);
    }
    let ratio = (PI * x * m).sin() / den;
    Complex64::from_polar(1.0, PI * x * (m - 1.0)) * ratio
}

/// Truncated Gauss sum `(1/(M+1)) Σ_{m=0}^{M} exp(2πi m² N/ℓ)`.
pub fn eval_truncated(ell: u64, n: u64, terms: u64) -> Result<Complex64> {
    if ell == 0 {
        return Err(Error::InvalidArgument(
            "truncated sum needs a trial factor ell >= 1".into(),
        ));
    }
    let sum = (0..=terms)
        .map(|m| unit_phase(quadratic_residue_phase(m, n, ell), ell))
        .collect::<CompensatedSum>()
        .value();
    Ok(sum / (terms + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numtheory::{factor_semiprime, odd_semiprimes_up_to};

    fn ratio_f64(r: Ratio<u64>) -> f64 {
        *r.numer() as f64 / *r.denom() as f64
    }

    #[test]
    fn gauss_sum_examples() {
        assert!((eval_g(0, 35).norm_sqr() - 1225.0).abs() < 1e-9);
        assert!((eval_g(1, 35).norm_sqr() - 35.0).abs() < 1e-9);
        assert!((eval_g(7, 35).norm_sqr() - 245.0).abs() < 1e-9);
    }

    #[test]
    fn g_of_examples() {
        assert_eq!(g_of(7, 35), Ok(7));
        assert_eq!(g_of(35, 35), Ok(35));
        assert_eq!(g_of(8, 35), Ok(1));
        assert!(g_of(3, 36).is_err());
    }

    #[test]
    fn g_of_agrees_with_gauss_sum() {
        for n in (3..=99).step_by(2) {
            for ell in 0..n {
                let numeric = eval_g(ell, n).norm_sqr() / n as f64;
                assert!((numeric - g_of(ell, n).unwrap() as f64).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn w_examples() {
        assert!((eval_w(0, 1, 91).norm_sqr() - 1.0 / 91.0).abs() < 1e-12);
        assert!(eval_w(4, 7, 91).norm_sqr() < 1e-12);
        assert!((eval_w(14, 7, 91).norm_sqr() - 7.0 / 91.0).abs() < 1e-12);
    }

    #[test]
    fn closed_w_sq_examples() {
        let s = factor_semiprime(91).unwrap();
        assert_eq!(closed_w_sq(0, 0, &s), Ratio::from_integer(1));
        assert_eq!(closed_w_sq(3, 0, &s), Ratio::from_integer(0));
        assert_eq!(closed_w_sq(14, 7, &s), Ratio::new(7, 91));
        assert!(eval_w(3, 0, 91).norm_sqr() < 1e-20);
    }

    #[test]
    fn closed_w_sq_matches_direct_sum() {
        for s in odd_semiprimes_up_to(143) {
            let [p, q] = s.factors();
            if p > 13 || q > 13 {
                continue;
            }
            for ell in 0..s.n() {
                for n0 in 0..s.n() {
                    let direct = eval_w(n0, ell, s.n()).norm_sqr();
                    let closed = ratio_f64(closed_w_sq(n0, ell, &s));
                    assert!((direct - closed).abs() <= 1e-9, "{s} ell={ell} n0={n0}");
                }
            }
        }
    }

    #[test]
    fn w_rows_are_normalized_over_shift() {
        for s in odd_semiprimes_up_to(91) {
            for ell in 0..s.n() {
                let total: f64 = (0..s.n()).map(|j| eval_w(j, ell, s.n()).norm_sqr()).sum();
                assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn factor_structure_zeroes_unshared_shift() {
        // ℓ = k·p with gcd(k, q) = 1: the r-sum over p vanishes unless p | n0
        let s = factor_semiprime(91).unwrap();
        for k in 1..13u64 {
            let ell = 7 * k;
            for n0 in (0..91).filter(|n0| n0 % 7 != 0) {
                assert!(eval_w(n0, ell, 91).norm() < 1e-9);
            }
        }
        assert_eq!(s.cofactor(7), Some(13));
    }

    #[test]
    fn w_tilde_reduces_to_w_at_equal_length() {
        for ell in 0..21 {
            for n0 in 0..21 {
                let a = eval_w_tilde(n0, ell, 21, 21);
                let b = eval_w(n0, ell, 21);
                assert!((a - b).norm() < 1e-12);
            }
        }
        assert!((eval_w_tilde(0, 0, 21, 512).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn w_tilde_fast_row_matches_direct() {
        let mut planner = FftPlanner::new();
        for ell in [0, 1, 3, 7, 20, 511] {
            let row = w_tilde_row(ell, 21, 512, &mut planner);
            for n0 in [0, 1, 24, 25, 171, 300, 511] {
                let direct = eval_w_tilde(n0, ell, 21, 512);
                assert!(
                    (row[n0 as usize] - direct).norm() < 1e-12,
                    "ell={ell} n0={n0}"
                );
            }
        }
        // frozen from the direct sum
        let v = eval_w_tilde(24, 1, 21, 512).norm_sqr();
        let row = w_tilde_row(1, 21, 512, &mut planner);
        assert!((row[24].norm_sqr() - v).abs() < 1e-14);
    }

    #[test]
    fn w_tilde_split_is_exact_and_remainder_small() {
        for (n, m_len) in [(21u64, 512u64), (15, 512), (35, 2048)] {
            let tail = (m_len % n) as f64 / m_len as f64;
            for ell in [1, 2, 3, 5, 7, 10] {
                for n0 in [0, 1, 24, 49, 100] {
                    let (main, rem) = w_tilde_split(n0, ell, n, m_len);
                    let exact = eval_w_tilde(n0, ell, n, m_len);
                    assert!((main + rem - exact).norm() < 1e-12);
                    assert!(rem.norm() <= tail + 1e-12);
                }
            }
        }
    }

    #[test]
    fn f_examples() {
        assert!((eval_f(0.0, 293) - Complex64::new(293.0, 0.0)).norm() < 1e-9);
        assert!(eval_f(0.5, 2).norm() < 1e-12);
        assert_eq!(eval_f_closed(3.0, 293), Complex64::new(293.0, 0.0));
        let alpha = 1.0 + 0.5 / 293.0;
        let expected = 1.0 / (PI / (2.0 * 293.0)).sin();
        assert!((eval_f(alpha, 293).norm() - expected).abs() < 1e-9);
        assert!((eval_f_closed(alpha, 293).norm() - expected).abs() < 1e-9);
        assert!(expected > 2.0 / PI * 293.0);
        assert!((expected - 186.54).abs() < 0.01);
    }

    #[test]
    fn f_peak_lower_bound() {
        for m_len in 2..=1024u64 {
            for delta in [-0.5, -0.25, 0.0, 0.25, 0.5] {
                for j in [0.0, 1.0, 5.0] {
                    let alpha = j + delta / m_len as f64;
                    let bound = 2.0 / PI * m_len as f64;
                    assert!(
                        eval_f_closed(alpha, m_len).norm() >= bound,
                        "M={m_len} δ={delta}"
                    );
                    assert!(eval_f(alpha, m_len).norm() >= bound, "M={m_len} δ={delta}");
                }
            }
        }
    }

    #[test]
    fn truncated_examples() {
        assert!((eval_truncated(1, 91, 5).unwrap() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((eval_truncated(7, 91, 5).unwrap() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        let v = eval_truncated(4, 91, 5).unwrap();
        // 91 ≡ 3 (mod 4): phases m²·3/4 for m = 0..5 are 0, 3/4, 0, 3/4, 0, 3/4
        let expected = (Complex64::new(3.0, 0.0) + unit_phase(3, 4) * 3.0) / 6.0;
        assert!((v - expected).norm() < 1e-12);
        assert!(v.norm() < 1.0);
        assert!(eval_truncated(0, 91, 5).is_err());
    }

    #[test]
    fn compensated_sum_cancels() {
        let acc: CompensatedSum = [1e16, 1.0, -1e16]
            .iter()
            .map(|&x| Complex64::new(x, -x))
            .collect();
        assert_eq!(acc.value(), Complex64::new(1.0, -1.0));
        assert_eq!(compensated_real_sum([1e16, 1.0, -1e16]), 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn f_direct_matches_closed(num in 0u64..10_000, den in 1u64..5_000, m_len in 1u64..2_000) {
                let alpha = num as f64 / den as f64;
                let d = eval_f(alpha, m_len);
                let c = eval_f_closed(alpha, m_len);
                prop_assert!((d - c).norm() <= 1e-9 * m_len as f64);
            }
        }
    }
}

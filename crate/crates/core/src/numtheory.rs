//! Exact integer arithmetic: gcd with the `gcd(0, n) = n` convention,
//! semiprime validation by trial division, and the strict-upper count `[x]`.

use num_integer::Integer;

use crate::error::{Error, Result};

/// Largest number [`factor_semiprime`] accepts by default.
pub const DEFAULT_FACTOR_CAP: u64 = 1_000_000;

/// Greatest common divisor with `gcd_conv(0, n) = n`.
///
/// Euclid already yields `n` for a zero first argument; the convention is
/// spelled out because every class table downstream depends on it.
pub fn gcd_conv(a: u64, n: u64) -> Result<u64> {
    if n == 0 {
        return Err(Error::ZeroModulus);
    }
    if a == 0 {
        return Ok(n);
    }
    Ok(a.gcd(&n))
}

/// Smallest integer strictly larger than `numerator / denominator`.
///
/// This is `floor + 1`, so an exact quotient is bumped by one. For the
/// register counts `2^Q / N` with odd `N > 1` the quotient is never integral
/// and the value coincides with the ceiling: the number of multiples of `N`
/// in `0..2^Q`.
///
/// Panics if `denominator` is zero.
pub fn count_upper(numerator: u64, denominator: u64) -> u64 {
    assert!(denominator >= 1, "count_upper: zero denominator");
    numerator / denominator + 1
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Prime factors with multiplicity, ascending.
pub fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        while n.is_multiple_of(d) {
            out.push(d);
            n /= d;
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Euler's totient.
pub fn euler_phi(n: u64) -> u64 {
    let mut primes = prime_factors(n);
    primes.dedup();
    primes.iter().fold(n, |acc, p| acc / p * (p - 1))
}

/// An odd number `n = p * q` with distinct primes `3 <= p < q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Semiprime {
    n: u64,
    p: u64,
    q: u64,
}

impl Semiprime {
    /// Builds from a prime pair in either order.
    pub fn from_primes(a: u64, b: u64) -> Result<Self> {
        let (p, q) = if a <= b { (a, b) } else { (b, a) };
        for x in [p, q] {
            if !is_prime(x) {
                return Err(Error::InvalidArgument(format!("{x} is not prime")));
            }
            if x == 2 {
                return Err(Error::EvenNumber(p * q));
            }
        }
        if p == q {
            return Err(Error::PrimePower {
                n: p * q,
                base: p,
                exponent: 2,
            });
        }
        Ok(Self { n: p * q, p, q })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn factors(&self) -> [u64; 2] {
        [self.p, self.q]
    }

    /// The other factor of `n`, given one of them.
    pub fn cofactor(&self, factor: u64) -> Option<u64> {
        match factor {
            f if f == self.p => Some(self.q),
            f if f == self.q => Some(self.p),
            _ => None,
        }
    }

    /// Classifies `ell` by `gcd_conv(ell, n)`.
    pub fn classify(&self, ell: u64) -> GcdClass {
        let gcd = gcd_conv(ell % self.n, self.n).expect("n is positive");
        let kind = match gcd {
            1 => GcdKind::Unit,
            g if g == self.n => GcdKind::MultipleOfN,
            g if g == self.p => GcdKind::SharesP,
            _ => GcdKind::SharesQ,
        };
        GcdClass { kind, gcd }
    }
}

impl std::fmt::Display for Semiprime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}={}*{}", self.n, self.p, self.q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GcdKind {
    Unit,
    SharesP,
    SharesQ,
    MultipleOfN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GcdClass {
    pub kind: GcdKind,
    pub gcd: u64,
}

/// Trial-division factorization into a [`Semiprime`], capped at
/// [`DEFAULT_FACTOR_CAP`]. Ground truth for oracles only.
pub fn factor_semiprime(n: u64) -> Result<Semiprime> {
    factor_semiprime_with_cap(n, DEFAULT_FACTOR_CAP)
}

pub fn factor_semiprime_with_cap(n: u64, cap: u64) -> Result<Semiprime> {
    if n.is_multiple_of(2) {
        return Err(Error::EvenNumber(n));
    }
    if n < 15 {
        // 1, 3..13 odd: primes, 1, or 9
        return Err(match n {
            9 => Error::PrimePower {
                n,
                base: 3,
                exponent: 2,
            },
            n if is_prime(n) => Error::Prime(n),
            n => Error::TooSmall(n),
        });
    }
    if n > cap {
        return Err(Error::AboveCap { n, cap });
    }
    let factors = prime_factors(n);
    match factors.as_slice() {
        [_] => Err(Error::Prime(n)),
        [p, q] if p == q => Err(Error::PrimePower {
            n,
            base: *p,
            exponent: 2,
        }),
        [p, q] => Ok(Semiprime { n, p: *p, q: *q }),
        many if many.iter().all(|&f| f == many[0]) => Err(Error::PrimePower {
            n,
            base: many[0],
            exponent: many.len() as u32,
        }),
        many => Err(Error::ThreeOrMoreFactors {
            n,
            factors: many.to_vec(),
        }),
    }
}

/// All odd semiprimes `p * q <= limit` with distinct primes, ascending by `n`.
pub fn odd_semiprimes_up_to(limit: u64) -> Vec<Semiprime> {
    (15..=limit)
        .step_by(2)
        .filter_map(|n| factor_semiprime_with_cap(n, limit).ok())
        .collect()
}

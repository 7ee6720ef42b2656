//! Factoring from a superposition of shifted Gauss sums.
//!
//! Start from the uniform product state of `A` and `B`, entangle with
//! `exp(2πi m_B² ℓ_A / N)`, Fourier transform `B`. The joint amplitude of
//! `|ℓ⟩|n⟩` is then `𝒲_n(ℓ)/√N` (exact dimension `N`) or `𝒲̃_n(ℓ, 2^Q)/2^{Q/2}`
//! (qubit registers). Measuring `B` first decides whether `A` concentrates
//! on factor multiples or hides them as zeros.

use std::collections::HashMap;

use num_rational::Ratio;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::kernels::{closed_w_sq, compensated_real_sum, eval_w_tilde, w_tilde_row};
use crate::numtheory::{count_upper, factor_semiprime, gcd_conv, Semiprime};
use crate::shor_gauss::{trial_rng, DriverResult, TrialRecord};
use crate::state::{amplitude_cap, check_cap, BipartiteState, Distribution};

/// Largest qubit count the streaming path accepts.
pub const MAX_STREAMING_QUBITS: u32 = 20;

/// Rows per leaf of the fixed reduction tree.
const REDUCTION_BLOCK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunMode {
    /// `dim A = dim B = N`.
    Exact,
    /// `dim A = dim B = 2^Q` with `N² < 2^Q`.
    Qubit(u32),
}

fn is_proper_divisor(g: u64, n: u64) -> bool {
    g > 1 && g < n
}

/// Whether `ell` is a nonzero multiple of a proper factor of `n`, modulo `n`.
pub fn is_factor_multiple(ell: u64, n: u64) -> bool {
    let r = ell % n;
    r != 0 && is_proper_divisor(gcd_conv(r, n).expect("n is positive"), n)
}

/// Probability mass a distribution over trial factors puts on factor
/// multiples of `n`.
pub fn factor_multiple_mass(dist: &Distribution, n: u64) -> f64 {
    dist.mass_where(|ell| is_factor_multiple(ell, n))
}

/// `Ψ₂` over `N × N`.
#[derive(Debug, Clone)]
pub struct ExactRun {
    n: u64,
    state: BipartiteState,
}

/// Exact run for a semiprime `n`; prime powers, primes and numbers with three
/// or more prime factors are rejected.
pub fn run_exact(n: u64) -> Result<ExactRun> {
    factor_semiprime(n)?;
    ExactRun::build(n)
}

impl ExactRun {
    /// Builds `Ψ₂` for any odd `n ≥ 3` within the amplitude cap.
    pub fn build(n: u64) -> Result<Self> {
        if n < 3 || n.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "N must be odd and at least 3, got {n}"
            )));
        }
        let state = BipartiteState::uniform_product(n, n)?
            .apply_quadratic_phase(n)
            .qft_b();
        Ok(Self { n, state })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn state(&self) -> &BipartiteState {
        &self.state
    }

    /// `P_B(n) = (1/N) Σ_ℓ |𝒲_n(ℓ)|²` from the state.
    pub fn p_b_distribution(&self) -> Distribution {
        self.state.marginal_b()
    }

    pub fn conditional_a(&self, n0: u64) -> Result<Distribution> {
        self.state.conditional_a(n0)
    }

    pub fn success_mass(&self) -> SuccessMass {
        let pb = self.p_b_distribution();
        let n = self.n;
        let p_b_zero = pb.prob(0);
        let p_b_factor_multiple = pb.mass_where(|m| m != 0 && is_factor_multiple(m, n));
        let p_b_coprime = pb.mass_where(|m| gcd_conv(m, n) == Ok(1));
        SuccessMass {
            p_b_zero,
            p_b_factor_multiple,
            p_b_coprime,
            total_useful: p_b_zero + p_b_factor_multiple,
        }
    }

    /// Mass of `conditional_a(n0)` on nonzero factor multiples.
    pub fn factor_mass_a(&self, n0: u64) -> Result<f64> {
        Ok(factor_multiple_mass(&self.conditional_a(n0)?, self.n))
    }
}

/// Partition of B outcomes into useful (zero or sharing a factor) and
/// coprime ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuccessMass {
    pub p_b_zero: f64,
    pub p_b_factor_multiple: f64,
    pub p_b_coprime: f64,
    pub total_useful: f64,
}

/// `(2N − p − q) / (2(2N − p − q) + 1)`: factor-multiple mass after `n0 = 0`.
pub fn factor_mass_zero_closed(s: &Semiprime) -> Ratio<u64> {
    let k = 2 * s.n() - s.p() - s.q();
    Ratio::new(k, 2 * k + 1)
}

/// `(N − f) / (2(N − f) − N/f + 1)`: factor-multiple mass after an `n0` with
/// `gcd(n0, N) = f`.
pub fn factor_mass_shared_closed(s: &Semiprime, f: u64) -> Result<Ratio<u64>> {
    let co = s
        .cofactor(f)
        .ok_or_else(|| Error::InvalidArgument(format!("{f} is not a factor of {}", s.n())))?;
    let k = s.n() - f;
    Ok(Ratio::new(k, 2 * k + 1 - co))
}

/// `Σ_ℓ |𝒲_{n0}(ℓ)|²` in closed form: `(4N−2p−2q+1)/N` at `n0 ≡ 0`,
/// `(2N−2f−N/f+1)/N` when `gcd(n0, N) = f`, `(N−p−q+1)/N` otherwise.
pub fn shifted_row_weight_closed(n0: u64, s: &Semiprime) -> Ratio<u64> {
    (0..s.n()).map(|ell| closed_w_sq(n0, ell, s)).sum()
}

/// `P_B(n0)` in closed form, `shifted_row_weight_closed / N`.
pub fn p_b_closed(n0: u64, s: &Semiprime) -> Ratio<u64> {
    shifted_row_weight_closed(n0, s) / s.n()
}

/// The often-quoted two-prime expression
/// `(1/N){[(N−p−q+1)/N + 1] δ_{n,0} + (p/N)(q−1) δ_{gcd=p} + (q/N)(p−1) δ_{gcd=q}}`.
///
/// Kept for comparison only. It does not agree with the direct marginal (for
/// `N = 91` it gives `163/8281` at `n = 0` where the state gives `325/8281`),
/// assigns zero to coprime outcomes, and does not sum to one.
pub fn p_b_reference_formula(n0: u64, s: &Semiprime) -> Ratio<u64> {
    let (n, p, q) = (s.n(), s.p(), s.q());
    let n0 = n0 % n;
    let bracket = if n0 == 0 {
        Ratio::new(n + 1 - p - q, n) + 1
    } else {
        match gcd_conv(n0, n).expect("n is positive") {
            g if g == p => Ratio::new(p * (q - 1), n),
            g if g == q => Ratio::new(q * (p - 1), n),
            _ => Ratio::from_integer(0),
        }
    };
    bracket / n
}

/// Streaming handle for the qubit-register variant.
///
/// `𝒲̃_n(ℓ, 2^Q)` depends on `ℓ` only through `ℓ mod N`, so each of the `N`
/// residue rows is transformed once and weighted by its multiplicity in
/// `0..2^Q`; the `2^{2Q}` grid is never formed.
#[derive(Debug, Clone)]
pub struct QubitRun {
    n: u64,
    qubits: u32,
    p_b: Distribution,
}

/// Number of `ℓ < dim` with `ℓ ≡ r (mod n)`.
fn residue_multiplicity(r: u64, n: u64, dim: u64) -> u64 {
    if r >= dim {
        0
    } else {
        (dim - 1 - r) / n + 1
    }
}

fn add_into(acc: &mut [f64], other: &[f64]) {
    acc.iter_mut().zip(other).for_each(|(a, b)| *a += b);
}

impl QubitRun {
    pub fn new(n: u64, qubits: u32) -> Result<Self> {
        if n < 3 || n.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "N must be odd and at least 3, got {n}"
            )));
        }
        if qubits > MAX_STREAMING_QUBITS {
            return Err(Error::InvalidArgument(format!(
                "Q={qubits} exceeds the streaming cap {MAX_STREAMING_QUBITS}"
            )));
        }
        let n_squared = n as u128 * n as u128;
        if (1u128 << qubits) <= n_squared {
            return Err(Error::RegisterTooSmall { qubits, n_squared });
        }
        // one B row plus per-thread scratch must fit
        check_cap(1u64 << qubits, 1, amplitude_cap())?;
        let dim = 1u64 << qubits;
        let rows = n.min(dim) as usize;
        let leaves = rows.div_ceil(REDUCTION_BLOCK);
        let mut acc = reduce_rows(n, dim, 0, leaves, rows);
        let scale = 1.0 / dim as f64;
        acc.iter_mut().for_each(|x| *x *= scale);
        Ok(Self {
            n,
            qubits,
            p_b: Distribution::indexed(acc)?,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn qubits(&self) -> u32 {
        self.qubits
    }

    /// `P′_B(n) = 2^{-Q} Σ_ℓ |𝒲̃_n(ℓ, 2^Q)|²`.
    pub fn p_b_prime(&self) -> &Distribution {
        &self.p_b
    }

    /// Nearest bins to `j · 2^Q / N`, `j = 0..N`.
    pub fn peak_bins(&self) -> Vec<u64> {
        let dim = 1u128 << self.qubits;
        let n = self.n as u128;
        (0..n)
            .map(|j| ((2 * j * dim + n) / (2 * n)) as u64)
            .collect()
    }

    /// Total `P′_B` on [`peak_bins`](Self::peak_bins).
    pub fn peak_mass(&self) -> f64 {
        let probs = self.p_b.probs();
        compensated_real_sum(self.peak_bins().iter().map(|&b| probs[b as usize]))
    }

    /// The `j` with `|bin − j·2^Q/N| ≤ 1/2`, if any.
    pub fn nearest_peak(&self, bin: u64) -> Option<u64> {
        let dim = 1u128 << self.qubits;
        let n = self.n as u128;
        let j = (2 * bin as u128 * n + dim) / (2 * dim);
        let dist2 = (2 * bin as u128 * n).abs_diff(2 * j * dim);
        (dist2 <= n).then_some((j % n) as u64)
    }

    /// `|𝒲̃_{n0}(ℓ)|²` for residues `ℓ < N`, via direct summation.
    fn column(&self, n0: u64) -> Vec<f64> {
        let dim = 1u64 << self.qubits;
        (0..self.n.min(dim))
            .into_par_iter()
            .map(|r| eval_w_tilde(n0, r, self.n, dim).norm_sqr())
            .collect()
    }

    /// Distribution of `ℓ ∈ 0..2^Q` after observing `n0` in B.
    pub fn conditional_a(&self, n0: u64) -> Result<Distribution> {
        let dim = 1u64 << self.qubits;
        if n0 >= dim {
            return Err(Error::InvalidArgument(format!(
                "outcome {n0} outside 2^{}",
                self.qubits
            )));
        }
        let col = self.column(n0);
        let weight = compensated_real_sum(
            col.iter()
                .enumerate()
                .map(|(r, w)| w * residue_multiplicity(r as u64, self.n, dim) as f64),
        );
        if weight <= 1e-12 {
            return Err(Error::ImpossibleOutcome(n0));
        }
        let probs = (0..dim)
            .map(|ell| col[(ell % self.n) as usize] / weight)
            .collect();
        Distribution::indexed(probs)
    }

    /// Conditional A distribution after a B outcome that sits on a peak,
    /// together with the peak index `j`.
    pub fn conditional_after_peak(&self, n_peak: u64) -> Result<(u64, Distribution)> {
        let j = self.nearest_peak(n_peak).ok_or(Error::NotNearPeak {
            bin: n_peak,
            qubits: self.qubits,
            n: self.n,
        })?;
        Ok((j, self.conditional_a(n_peak)?))
    }
}

/// Fixed-shape pairwise reduction of weighted `|row|²` over leaves
/// `lo..hi`; the tree depends only on the leaf count.
fn reduce_rows(n: u64, dim: u64, lo: usize, hi: usize, rows: usize) -> Vec<f64> {
    if hi - lo == 1 {
        let mut planner = FftPlanner::new();
        let mut acc = vec![0.0; dim as usize];
        let start = lo * REDUCTION_BLOCK;
        for r in start..(start + REDUCTION_BLOCK).min(rows) {
            let weight = residue_multiplicity(r as u64, n, dim) as f64;
            let row = w_tilde_row(r as u64, n, dim, &mut planner);
            acc.iter_mut()
                .zip(&row)
                .for_each(|(a, z)| *a += weight * z.norm_sqr());
        }
        return acc;
    }
    let mid = lo + (hi - lo) / 2;
    let (mut left, right) = rayon::join(
        || reduce_rows(n, dim, lo, mid, rows),
        || reduce_rows(n, dim, mid, hi, rows),
    );
    add_into(&mut left, &right);
    left
}

/// Samples B, tests the outcome (mapped to its peak index in qubit mode) for a
/// shared factor, otherwise samples A once and tests `gcd(ℓ, N)`.
pub fn sample_factor_driver(
    n: u64,
    mode: RunMode,
    max_trials: u64,
    seed: u64,
) -> Result<DriverResult> {
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "N must be odd and at least 3, got {n}"
        )));
    }
    let mut result = DriverResult {
        n,
        factor: None,
        trials: 0,
        seed,
        records: Vec::new(),
    };
    if max_trials == 0 {
        return Ok(result);
    }
    let run = match mode {
        RunMode::Exact => Sampler::Exact(ExactRun::build(n)?),
        RunMode::Qubit(q) => Sampler::Qubit(QubitRun::new(n, q)?),
    };
    let b_dist = run.b_distribution();
    let mut a_cache: HashMap<u64, Distribution> = HashMap::new();
    for t in 0..max_trials {
        let mut rng = trial_rng(seed, t);
        let n0 = b_dist.sample(&mut rng);
        let mut record = TrialRecord {
            trial: t,
            b_outcome: n0,
            a_outcome: None,
            factor: None,
        };
        let shift_gcd = gcd_conv(run.shift_index(n0) % n, n)?;
        if is_proper_divisor(shift_gcd, n) {
            record.factor = Some(shift_gcd);
        } else {
            if let std::collections::hash_map::Entry::Vacant(e) = a_cache.entry(n0) {
                e.insert(run.conditional_a(n0)?);
            }
            let ell = a_cache[&n0].sample(&mut rng);
            record.a_outcome = Some(ell);
            let g = gcd_conv(ell % n, n)?;
            record.factor = is_proper_divisor(g, n).then_some(g);
        }
        result.trials = t + 1;
        result.records.push(record);
        if record.factor.is_some() {
            result.factor = record.factor;
            break;
        }
    }
    Ok(result)
}

enum Sampler {
    Exact(ExactRun),
    Qubit(QubitRun),
}

impl Sampler {
    fn b_distribution(&self) -> Distribution {
        match self {
            Sampler::Exact(r) => r.p_b_distribution(),
            Sampler::Qubit(r) => r.p_b_prime().clone(),
        }
    }

    /// Exact mode: the outcome itself; qubit mode: `round(n0 · N / 2^Q)`.
    fn shift_index(&self, n0: u64) -> u64 {
        match self {
            Sampler::Exact(_) => n0,
            Sampler::Qubit(r) => {
                let dim = 1u128 << r.qubits;
                ((2 * n0 as u128 * r.n as u128 + dim) / (2 * dim)) as u64
            }
        }
    }

    fn conditional_a(&self, n0: u64) -> Result<Distribution> {
        match self {
            Sampler::Exact(r) => r.conditional_a(n0),
            Sampler::Qubit(r) => r.conditional_a(n0),
        }
    }
}

/// `M_N = [2^Q/N]`, exposed for reports on the qubit variant.
pub fn block_count(n: u64, qubits: u32) -> u64 {
    count_upper(1u64 << qubits, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::eval_w;
    use crate::state::purity_closed;

    fn sp(n: u64) -> Semiprime {
        factor_semiprime(n).unwrap()
    }

    fn rf(r: Ratio<u64>) -> f64 {
        *r.numer() as f64 / *r.denom() as f64
    }

    #[test]
    fn exact_run_examples() {
        let run = run_exact(91).unwrap();
        let expected = eval_w(0, 1, 91) / 91f64.sqrt();
        assert!((run.state().amplitude(1, 0) - expected).norm() < 1e-9);
        assert!((run.state().norm_sqr() - 1.0).abs() < 1e-9);
        assert!(matches!(run_exact(9), Err(Error::PrimePower { .. })));
        assert!(run_exact(105).is_err());
    }

    #[test]
    fn p_b_values_91() {
        let pb = run_exact(91).unwrap().p_b_distribution();
        assert!((pb.prob(0) - 325.0 / 8281.0).abs() < 1e-9);
        assert!((pb.prob(14) - 156.0 / 8281.0).abs() < 1e-9);
        assert!((pb.prob(26) - 150.0 / 8281.0).abs() < 1e-9);
        assert!((pb.prob(4) - 72.0 / 8281.0).abs() < 1e-9);
    }

    #[test]
    fn closed_p_b_matches_normalization_constants() {
        let s = sp(91);
        assert_eq!(shifted_row_weight_closed(0, &s), Ratio::new(325, 91));
        assert_eq!(shifted_row_weight_closed(14, &s), Ratio::new(156, 91));
        assert_eq!(shifted_row_weight_closed(26, &s), Ratio::new(150, 91));
        assert_eq!(shifted_row_weight_closed(4, &s), Ratio::new(72, 91));
        let (n, p, q) = (91, 7, 13);
        assert_eq!(
            shifted_row_weight_closed(0, &s).recip(),
            Ratio::new(n, 4 * n - 2 * p - 2 * q + 1)
        );
        assert_eq!(
            shifted_row_weight_closed(14, &s).recip(),
            Ratio::new(n, 2 * n - 2 * p - q + 1)
        );
        assert_eq!(
            shifted_row_weight_closed(4, &s).recip(),
            Ratio::new(n, n - p - q + 1)
        );
        let total: Ratio<u64> = (0..91).map(|m| p_b_closed(m, &s)).sum();
        assert_eq!(total, Ratio::from_integer(1));
    }

    #[test]
    fn reference_formula_disagrees_with_state() {
        let s = sp(91);
        assert_eq!(p_b_reference_formula(0, &s), Ratio::new(163, 8281));
        assert_eq!(p_b_reference_formula(14, &s), Ratio::new(84, 8281));
        let total: Ratio<u64> = (0..91).map(|m| p_b_reference_formula(m, &s)).sum();
        assert_ne!(total, Ratio::from_integer(1));
    }

    #[test]
    fn p_b_zero_equals_purity() {
        for n in [15u64, 21, 35, 91] {
            let run = run_exact(n).unwrap();
            let p0 = run.p_b_distribution().prob(0);
            assert!((p0 - run.state().purity_a()).abs() < 1e-9);
            assert!((p0 - rf(purity_closed(&sp(n)))).abs() < 1e-9);
        }
    }

    #[test]
    fn success_mass_91() {
        let m = run_exact(91).unwrap().success_mass();
        assert!((m.total_useful - 3097.0 / 8281.0).abs() < 1e-9);
        assert!((m.p_b_coprime - 72.0 * 72.0 / 8281.0).abs() < 1e-9);
        assert!((m.total_useful + m.p_b_coprime - 1.0).abs() < 1e-9);
    }

    #[test]
    fn success_mass_complement_15() {
        let run = run_exact(15).unwrap();
        let m = run.success_mass();
        let coprime_single = run.p_b_distribution().prob(1);
        assert!((m.total_useful - (1.0 - 8.0 * coprime_single)).abs() < 1e-9);
    }

    #[test]
    fn factor_masses_91() {
        let s = sp(91);
        let run = run_exact(91).unwrap();
        assert!((run.factor_mass_a(0).unwrap() - 162.0 / 325.0).abs() < 1e-9);
        assert_eq!(factor_mass_zero_closed(&s), Ratio::new(162, 325));
        assert!((run.factor_mass_a(14).unwrap() - 84.0 / 156.0).abs() < 1e-9);
        assert_eq!(
            factor_mass_shared_closed(&s, 7).unwrap(),
            Ratio::new(84, 156)
        );
        assert!(run.factor_mass_a(4).unwrap() < 1e-12);
    }

    #[test]
    fn qubit_peaks_21() {
        let run = QubitRun::new(21, 9).unwrap();
        let bins = run.peak_bins();
        assert_eq!(&bins[..4], &[0, 24, 49, 73]);
        assert!(run.peak_mass() >= 0.40);
        assert!((run.p_b_prime().probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn qubit_row_zero_is_a_delta() {
        let mut planner = FftPlanner::new();
        let row = w_tilde_row(0, 21, 512, &mut planner);
        assert!((row[0].norm() - 1.0).abs() < 1e-12);
        assert!(row[1..].iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn qubit_streaming_matches_materialized_state() {
        let (n, q) = (15u64, 8u32);
        let dim = 1u64 << q;
        let run = QubitRun::new(n, q).unwrap();
        let full = BipartiteState::uniform_product(dim, dim)
            .unwrap()
            .apply_quadratic_phase(n)
            .qft_b();
        let pb = full.marginal_b();
        for (a, b) in run.p_b_prime().probs().iter().zip(pb.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
        let c_stream = run.conditional_a(17).unwrap();
        let c_full = full.conditional_a(17).unwrap();
        for (a, b) in c_stream.probs().iter().zip(c_full.probs()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn conditional_after_peak_examples() {
        let run = QubitRun::new(21, 9).unwrap();
        let (j, d0) = run.conditional_after_peak(0).unwrap();
        assert_eq!(j, 0);
        let exact = run_exact(21).unwrap();
        assert!((factor_multiple_mass(&d0, 21) - exact.factor_mass_a(0).unwrap()).abs() < 0.02);
        let (j, d7) = run.conditional_after_peak(171).unwrap();
        assert_eq!(j, 7);
        // j = 7 shares the factor 7: multiples of 3 are suppressed
        let threes = d7.mass_where(|l| l % 21 != 0 && l % 3 == 0);
        assert!(threes < 0.01);
        assert!((factor_multiple_mass(&d7, 21) - exact.factor_mass_a(7).unwrap()).abs() < 0.02);
        assert!(matches!(
            run.conditional_after_peak(12),
            Err(Error::NotNearPeak { .. })
        ));
    }

    #[test]
    fn exact_driver_examples() {
        let r = sample_factor_driver(91, RunMode::Exact, 100, 7).unwrap();
        assert!(matches!(r.factor, Some(7) | Some(13)));
        let r = sample_factor_driver(15, RunMode::Qubit(9), 100, 3).unwrap();
        assert!(matches!(r.factor, Some(3) | Some(5)));
        assert!(sample_factor_driver(90, RunMode::Exact, 10, 1).is_err());
        let r = sample_factor_driver(91, RunMode::Exact, 0, 1).unwrap();
        assert_eq!(r.trials, 0);
    }

    #[test]
    fn block_count_matches_counts() {
        assert_eq!(block_count(21, 9), 25);
    }
}

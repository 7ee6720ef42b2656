//! Shor-style factoring with `g(ℓ, N) = gcd(ℓ, N)` in place of modular
//! exponentiation.
//!
//! System `A` holds `2^Q` trial factors; system `B` holds the value of `g`,
//! stored as a small label register (for `N = p·q` the labels are
//! `{1, p, q, N}`). Measuring `B` leaves `A` in one of three branch states;
//! the factor branch is read directly or Fourier-analysed, the unit branch
//! only through its (weak) QFT peaks.

use std::collections::HashMap;

use num_complex::Complex64;
use num_integer::Integer;
use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::{compensated_real_sum, eval_f_closed};
use crate::numtheory::{count_upper, gcd_conv, Semiprime};
use crate::state::{amplitude_cap, check_cap, qft_vector, BipartiteState, Distribution};

/// Largest register accepted, keeping `2^Q` and `N²` comparisons in range.
pub const MAX_QUBITS: u32 = 30;

/// Smallest `Q` with `2^Q > N²`.
pub fn min_qubits(n: u64) -> u32 {
    let sq = n as u128 * n as u128;
    (0..=127u32).find(|&q| (1u128 << q) > sq).unwrap_or(128)
}

/// Rejects registers violating `2^Q > N²` unless `allow_small` is set.
pub fn check_register(n: u64, qubits: u32, allow_small: bool) -> Result<()> {
    if qubits == 0 || qubits > MAX_QUBITS {
        return Err(Error::InvalidArgument(format!(
            "register size Q={qubits} outside 1..={MAX_QUBITS}"
        )));
    }
    let n_squared = n as u128 * n as u128;
    if !allow_small && (1u128 << qubits) <= n_squared {
        return Err(Error::RegisterTooSmall { qubits, n_squared });
    }
    Ok(())
}

fn require_odd(n: u64) -> Result<()> {
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "N must be odd and at least 3, got {n}"
        )));
    }
    Ok(())
}

/// `2^{-Q/2} Σ_ℓ |ℓ⟩_A |g(ℓ, N)⟩_B` with `B` as a label register.
#[derive(Debug, Clone)]
pub struct GaussRegisterState {
    n: u64,
    qubits: u32,
    labels: Vec<u64>,
    state: BipartiteState,
}

impl GaussRegisterState {
    /// Builds the entangled register for any odd `n`. The label set is the
    /// set of distinct `g` values that occur.
    pub fn build(n: u64, qubits: u32, allow_small: bool) -> Result<Self> {
        require_odd(n)?;
        check_register(n, qubits, allow_small)?;
        let dim_a = 1u64 << qubits;
        let gs: Vec<u64> = (0..dim_a)
            .map(|ell| gcd_conv(ell % n, n))
            .collect::<Result<_>>()?;
        let mut labels = gs.clone();
        labels.sort_unstable();
        labels.dedup();
        check_cap(dim_a, labels.len() as u64, amplitude_cap())?;
        let dim_b = labels.len();
        let index: HashMap<u64, usize> = labels.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        let amp = Complex64::new((dim_a as f64).sqrt().recip(), 0.0);
        let mut amps = vec![Complex64::default(); dim_a as usize * dim_b];
        for (ell, g) in gs.iter().enumerate() {
            amps[ell * dim_b + index[g]] = amp;
        }
        let state = BipartiteState::from_amplitudes(dim_a as usize, dim_b, amps)?;
        Ok(Self {
            n,
            qubits,
            labels,
            state,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn qubits(&self) -> u32 {
        self.qubits
    }

    /// B labels in register order.
    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    pub fn state(&self) -> &BipartiteState {
        &self.state
    }

    /// The B label stored alongside trial factor `ell`.
    pub fn label_at(&self, ell: usize) -> Option<u64> {
        let row = self.state.row(ell);
        row.iter()
            .position(|z| z.norm_sqr() > 0.0)
            .map(|i| self.labels[i])
    }

    /// Distribution of B outcomes, labelled by `g` value.
    pub fn b_distribution(&self) -> Distribution {
        let marginal = self.state.marginal_b();
        Distribution::new(self.labels.clone(), marginal.probs().to_vec())
            .expect("relabelled marginal stays normalized")
    }

    /// The normalized A state after observing `label` in B.
    pub fn collapse(&self, label: u64) -> Result<Vec<Complex64>> {
        let idx = self
            .labels
            .iter()
            .position(|&g| g == label)
            .ok_or(Error::ImpossibleOutcome(label))?;
        Ok(self.state.collapse_b(idx as u64)?.state_a)
    }
}

/// [`GaussRegisterState::build`] for a validated semiprime.
pub fn build_state(s: &Semiprime, qubits: u32, allow_small: bool) -> Result<GaussRegisterState> {
    GaussRegisterState::build(s.n(), qubits, allow_small)
}

/// The three measurement branches of B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// `g = N`: A holds multiples of `N` only.
    CaseN,
    /// `g` is a proper factor.
    CaseFactor(u64),
    /// `g = 1`.
    CaseUnit,
}

impl Branch {
    pub fn label(&self, n: u64) -> u64 {
        match *self {
            Branch::CaseN => n,
            Branch::CaseFactor(f) => f,
            Branch::CaseUnit => 1,
        }
    }

    fn validate(&self, s: &Semiprime) -> Result<()> {
        match *self {
            Branch::CaseFactor(f) if f != s.p() && f != s.q() => Err(Error::InvalidArgument(
                format!("{f} is not a prime factor of {}", s.n()),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchOutcome {
    pub kind: Branch,
    pub probability: Ratio<u64>,
}

/// Exact branch probabilities from register counts `M_x = [2^Q / x]`, in the
/// order `CaseN, CaseFactor(p), CaseFactor(q), CaseUnit`.
pub fn branch_probs(s: &Semiprime, qubits: u32) -> Vec<BranchOutcome> {
    let dim = 1u64 << qubits;
    let (m_n, m_p, m_q) = (
        count_upper(dim, s.n()),
        count_upper(dim, s.p()),
        count_upper(dim, s.q()),
    );
    vec![
        BranchOutcome {
            kind: Branch::CaseN,
            probability: Ratio::new(m_n, dim),
        },
        BranchOutcome {
            kind: Branch::CaseFactor(s.p()),
            probability: Ratio::new(m_p - m_n, dim),
        },
        BranchOutcome {
            kind: Branch::CaseFactor(s.q()),
            probability: Ratio::new(m_q - m_n, dim),
        },
        BranchOutcome {
            kind: Branch::CaseUnit,
            probability: Ratio::new(dim + m_n - m_p - m_q, dim),
        },
    ]
}

/// The A state left behind by `branch`, built from its support directly:
/// multiples of `N`; multiples of the factor that are not multiples of `N`;
/// or everything coprime to `N`.
pub fn post_state(s: &Semiprime, qubits: u32, branch: Branch) -> Result<Vec<Complex64>> {
    branch.validate(s)?;
    let dim = 1u64 << qubits;
    let n = s.n();
    let in_support = |ell: u64| match branch {
        Branch::CaseN => ell.is_multiple_of(n),
        Branch::CaseFactor(f) => ell.is_multiple_of(f) && !ell.is_multiple_of(n),
        Branch::CaseUnit => !ell.is_multiple_of(s.p()) && !ell.is_multiple_of(s.q()),
    };
    let support = (0..dim).filter(|&l| in_support(l)).count();
    if support == 0 {
        return Err(Error::ImpossibleOutcome(branch.label(n)));
    }
    let amp = Complex64::new((support as f64).sqrt().recip(), 0.0);
    Ok((0..dim)
        .map(|l| {
            if in_support(l) {
                amp
            } else {
                Complex64::default()
            }
        })
        .collect())
}

/// `|QFT ψ|²` for the branch state.
pub fn post_qft_distribution(s: &Semiprime, qubits: u32, branch: Branch) -> Result<Distribution> {
    let spectrum = qft_vector(&post_state(s, qubits, branch)?);
    Distribution::indexed(spectrum.iter().map(|z| z.norm_sqr()).collect())
}

/// The QFT of the factor branch written through geometric sums:
/// `(M_f − M_N)^{-1/2} 2^{-Q/2} [F(f·m/2^Q; M_f) − F(N·m/2^Q; M_N)]`.
pub fn factor_branch_spectrum(s: &Semiprime, qubits: u32, factor: u64) -> Result<Vec<Complex64>> {
    Branch::CaseFactor(factor).validate(s)?;
    let dim = 1u64 << qubits;
    let (m_f, m_n) = (count_upper(dim, factor), count_upper(dim, s.n()));
    let pref = ((m_f - m_n) as f64 * dim as f64).sqrt().recip();
    Ok((0..dim)
        .map(|m| {
            let a = eval_f_closed(frac_mul(factor, m, dim), m_f);
            let b = eval_f_closed(frac_mul(s.n(), m, dim), m_n);
            (a - b) * pref
        })
        .collect())
}

/// The QFT of the unit branch through geometric sums:
/// `𝒩 2^{-Q/2} [F(m/2^Q; 2^Q) − F(pm/2^Q; M_p) − F(qm/2^Q; M_q) + F(Nm/2^Q; M_N)]`.
pub fn unit_branch_spectrum(s: &Semiprime, qubits: u32) -> Vec<Complex64> {
    let dim = 1u64 << qubits;
    let (m_n, m_p, m_q) = (
        count_upper(dim, s.n()),
        count_upper(dim, s.p()),
        count_upper(dim, s.q()),
    );
    let pref = (((dim + m_n - m_p - m_q) as f64) * dim as f64)
        .sqrt()
        .recip();
    (0..dim)
        .map(|m| {
            let total = eval_f_closed(frac_mul(1, m, dim), dim)
                - eval_f_closed(frac_mul(s.p(), m, dim), m_p)
                - eval_f_closed(frac_mul(s.q(), m, dim), m_q)
                + eval_f_closed(frac_mul(s.n(), m, dim), m_n);
            total * pref
        })
        .collect()
}

/// `(a·m mod dim) / dim`, exact before the division.
fn frac_mul(a: u64, m: u64, dim: u64) -> f64 {
    ((a as u128 * m as u128) % dim as u128) as f64 / dim as f64
}

/// Nearest integers to `j · 2^Q / period` for `j = 1..period`, halves
/// rounded up, deduplicated.
pub fn peak_positions(period: u64, qubits: u32) -> Vec<u64> {
    let dim = 1u128 << qubits;
    let mut out: Vec<u64> = (1..period as u128)
        .map(|j| ((2 * j * dim + period as u128) / (2 * period as u128)) as u64)
        .collect();
    out.dedup();
    out
}

/// Peak positions of `modulus` that are not peak positions of any period in
/// `exclude`.
pub fn off_structure_positions(modulus: u64, exclude: &[u64], qubits: u32) -> Vec<u64> {
    let excluded: Vec<u64> = exclude
        .iter()
        .flat_map(|&p| peak_positions(p, qubits))
        .collect();
    peak_positions(modulus, qubits)
        .into_iter()
        .filter(|m| !excluded.contains(m))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakReport {
    pub period: u64,
    /// `round(j · 2^Q / period)`, `j = 1..period`.
    pub positions: Vec<u64>,
    /// Total probability on `positions`.
    pub mass: f64,
    /// Probability of the DC bin `m = 0`.
    pub dc: f64,
    pub max_on_peak: f64,
    /// Largest bin among the `N`-comb positions that are not in `positions`.
    pub max_off_structure: f64,
}

impl PeakReport {
    /// `max_on_peak / max_off_structure`; infinite when there is no off-structure bin.
    pub fn height_ratio(&self) -> f64 {
        if self.max_off_structure > 0.0 {
            self.max_on_peak / self.max_off_structure
        } else {
            f64::INFINITY
        }
    }
}

/// Peak analysis of a `2^Q`-bin spectrum against a candidate `period`, with
/// the `modulus` comb as the competing structure.
pub fn analyze_peaks(
    dist: &Distribution,
    period: u64,
    modulus: u64,
    qubits: u32,
) -> Result<PeakReport> {
    let dim = 1usize << qubits;
    if dist.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "distribution has {} bins, expected 2^{qubits}",
            dist.len()
        )));
    }
    if period < 2 {
        return Err(Error::InvalidArgument("period must be at least 2".into()));
    }
    let probs = dist.probs();
    let positions = peak_positions(period, qubits);
    let mass = compensated_real_sum(positions.iter().map(|&m| probs[m as usize]));
    let max_on_peak = positions
        .iter()
        .map(|&m| probs[m as usize])
        .fold(0.0, f64::max);
    let max_off_structure = off_structure_positions(modulus, &[period], qubits)
        .iter()
        .map(|&m| probs[m as usize])
        .fold(0.0, f64::max);
    Ok(PeakReport {
        period,
        positions,
        mass,
        dc: probs[0],
        max_on_peak,
        max_off_structure,
    })
}

/// Analytic lower bounds for the factor branch with factor `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FactorBranchBounds {
    pub factor: u64,
    /// `0.4 (N−f)/(N f)` per `m_f` bin.
    pub per_factor_peak: Ratio<u64>,
    /// `0.4 (N−f)/N`.
    pub total_factor_peaks: Ratio<u64>,
    /// `0.4 f/(N (N−f))` per `m_N` bin.
    pub per_modulus_peak: Ratio<u64>,
    /// `0.4 f/N`.
    pub total_modulus_peaks: Ratio<u64>,
}

/// Analytic lower bounds for the unit branch; `d = N − p − q + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitBranchBounds {
    /// `0.4 (q−1)²/(N d)` per `m_p` bin.
    pub per_p_peak: Ratio<u64>,
    /// `0.4 (p−1)²/(N d)` per `m_q` bin.
    pub per_q_peak: Ratio<u64>,
    /// `0.4/(N d)` per `m_N` bin.
    pub per_modulus_peak: Ratio<u64>,
    /// `0.4 (Nq + Np + q + p − 4N)/(N d)`.
    pub total_p_or_q: Ratio<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeakMassBounds {
    pub factor_p: FactorBranchBounds,
    pub factor_q: FactorBranchBounds,
    pub unit: UnitBranchBounds,
}

/// `0.4 = 2/5` as used throughout the bounds.
fn two_fifths(num: u64, den: u64) -> Ratio<u64> {
    Ratio::new(2 * num, 5 * den)
}

pub fn peak_mass_bounds(s: &Semiprime) -> PeakMassBounds {
    let n = s.n();
    let factor = |f: u64| FactorBranchBounds {
        factor: f,
        per_factor_peak: two_fifths(n - f, n * f),
        total_factor_peaks: two_fifths(n - f, n),
        per_modulus_peak: two_fifths(f, n * (n - f)),
        total_modulus_peaks: two_fifths(f, n),
    };
    let (p, q) = (s.p(), s.q());
    let d = n + 1 - p - q;
    PeakMassBounds {
        factor_p: factor(p),
        factor_q: factor(q),
        unit: UnitBranchBounds {
            per_p_peak: two_fifths((q - 1) * (q - 1), n * d),
            per_q_peak: two_fifths((p - 1) * (p - 1), n * d),
            per_modulus_peak: two_fifths(1, n * d),
            total_p_or_q: two_fifths(n * q + n * p + q + p - 4 * n, n * d),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DivisorCandidate {
    pub numerator: u64,
    pub denominator: u64,
    pub gcd_with_n: u64,
}

impl DivisorCandidate {
    /// `Some(gcd)` when it is a proper divisor of `n`.
    pub fn factor(&self, n: u64) -> Option<u64> {
        (self.gcd_with_n > 1 && self.gcd_with_n < n).then_some(self.gcd_with_n)
    }
}

/// Continued-fraction convergents `h/k` of `num/den`, in order.
pub fn convergents(num: u64, den: u64) -> Vec<(u64, u64)> {
    let (mut a, mut b) = (num as u128, den as u128);
    let (mut h_prev, mut h) = (0u128, 1u128);
    let (mut k_prev, mut k) = (1u128, 0u128);
    let mut out = Vec::new();
    // first term of num/den is floor(num/den)
    while b != 0 {
        let (t, r) = a.div_rem(&b);
        (h_prev, h) = (h, t * h + h_prev);
        (k_prev, k) = (k, t * k + k_prev);
        out.push((h as u64, k as u64));
        (a, b) = (b, r);
    }
    out
}

/// Rational reconstruction of a QFT outcome: the convergent `j/d` of
/// `m/2^Q` with `d ≤ N` closest to `m/2^Q`.
pub fn recover_divisor(m: u64, qubits: u32, n: u64) -> Result<DivisorCandidate> {
    let dim = 1u64 << qubits;
    if m == 0 || m >= dim {
        return Err(Error::InvalidArgument(format!(
            "outcome {m} carries no period information in a 2^{qubits} register"
        )));
    }
    let (numerator, denominator) = convergents(m, dim)
        .into_iter()
        .filter(|&(_, k)| k >= 1 && k <= n)
        // |m/2^Q − h/k| ∝ |m·k − h·2^Q| / k
        .min_by(|&(h1, k1), &(h2, k2)| {
            let e1 = (m as u128 * k1 as u128).abs_diff(h1 as u128 * dim as u128) * k2 as u128;
            let e2 = (m as u128 * k2 as u128).abs_diff(h2 as u128 * dim as u128) * k1 as u128;
            e1.cmp(&e2).then(k1.cmp(&k2))
        })
        .expect("the first convergent has denominator 1");
    Ok(DivisorCandidate {
        numerator,
        denominator,
        gcd_with_n: gcd_conv(denominator, n)?,
    })
}

/// Per-trial generator: one ChaCha stream per trial index under one seed.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TrialMode {
    /// Fourier-analyse A after a unit outcome; report factor outcomes as is.
    #[default]
    Qft,
    /// Sample A directly without a QFT and test `gcd(ℓ, N)`.
    DirectRead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialRecord {
    pub trial: u64,
    pub b_outcome: u64,
    /// QFT bin or trial factor drawn from A, if A was measured.
    pub a_outcome: Option<u64>,
    pub factor: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DriverResult {
    pub n: u64,
    pub factor: Option<u64>,
    pub trials: u64,
    pub seed: u64,
    pub records: Vec<TrialRecord>,
}

impl DriverResult {
    pub fn succeeded(&self) -> bool {
        self.factor.is_some()
    }
}

/// Everything a trial needs, with A-side distributions cached per B label.
pub struct TrialContext {
    register: GaussRegisterState,
    b_dist: Distribution,
    mode: TrialMode,
    a_cache: HashMap<u64, Distribution>,
}

impl TrialContext {
    pub fn new(register: GaussRegisterState, mode: TrialMode) -> Self {
        let b_dist = register.b_distribution();
        Self {
            register,
            b_dist,
            mode,
            a_cache: HashMap::new(),
        }
    }

    pub fn register(&self) -> &GaussRegisterState {
        &self.register
    }

    fn a_distribution(&mut self, label: u64) -> Result<&Distribution> {
        if !self.a_cache.contains_key(&label) {
            let collapsed = self.register.collapse(label)?;
            let amps = match self.mode {
                TrialMode::Qft => qft_vector(&collapsed),
                TrialMode::DirectRead => collapsed,
            };
            let dist = Distribution::indexed(amps.iter().map(|z| z.norm_sqr()).collect())?;
            self.a_cache.insert(label, dist);
        }
        Ok(&self.a_cache[&label])
    }

    /// One trial: measure B; a proper-factor label is the answer (after an A
    /// read in direct mode); `N` retries; unit falls back to A.
    pub fn run_trial(&mut self, trial: u64, rng: &mut ChaCha8Rng) -> Result<TrialRecord> {
        let n = self.register.n();
        let qubits = self.register.qubits();
        let mode = self.mode;
        let label = self.b_dist.sample(rng);
        let mut record = TrialRecord {
            trial,
            b_outcome: label,
            a_outcome: None,
            factor: None,
        };
        if label == n {
            return Ok(record);
        }
        if label > 1 && mode == TrialMode::Qft {
            record.factor = Some(label);
            return Ok(record);
        }
        let a = self.a_distribution(label)?.sample(rng);
        record.a_outcome = Some(a);
        record.factor = match mode {
            TrialMode::DirectRead => {
                let g = gcd_conv(a % n, n)?;
                (g > 1 && g < n).then_some(g)
            }
            TrialMode::Qft if a == 0 => None,
            TrialMode::Qft => recover_divisor(a, qubits, n)?.factor(n),
        };
        Ok(record)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DriverOptions {
    /// `None` picks [`min_qubits`].
    pub qubits: Option<u32>,
    pub allow_small_register: bool,
    pub mode: TrialMode,
}

impl Default for DriverOptions {
    fn default() -> Self {
        Self {
            qubits: None,
            allow_small_register: false,
            mode: TrialMode::Qft,
        }
    }
}

/// Repeats trials with generators `trial_rng(seed, t)` until one yields a
/// proper factor or `max_trials` is spent. Exhaustion is a result, not an
/// error.
pub fn factor_driver(
    n: u64,
    max_trials: u64,
    seed: u64,
    opts: DriverOptions,
) -> Result<DriverResult> {
    let qubits = opts.qubits.unwrap_or_else(|| min_qubits(n));
    let mut result = DriverResult {
        n,
        factor: None,
        trials: 0,
        seed,
        records: Vec::new(),
    };
    if max_trials == 0 {
        require_odd(n)?;
        check_register(n, qubits, opts.allow_small_register)?;
        return Ok(result);
    }
    let register = GaussRegisterState::build(n, qubits, opts.allow_small_register)?;
    let mut ctx = TrialContext::new(register, opts.mode);
    for t in 0..max_trials {
        let mut rng = trial_rng(seed, t);
        let record = ctx.run_trial(t, &mut rng)?;
        result.trials = t + 1;
        result.records.push(record);
        if let Some(f) = record.factor {
            result.factor = Some(f);
            break;
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numtheory::factor_semiprime;

    fn sp(n: u64) -> Semiprime {
        factor_semiprime(n).unwrap()
    }

    fn rf(r: Ratio<u64>) -> f64 {
        *r.numer() as f64 / *r.denom() as f64
    }

    #[test]
    fn register_size_checks() {
        assert!(build_state(&sp(91), 14, false).is_ok());
        assert!(matches!(
            build_state(&sp(91), 11, false),
            Err(Error::RegisterTooSmall { qubits: 11, .. })
        ));
        assert!(build_state(&sp(91), 11, true).is_ok());
        assert_eq!(min_qubits(91), 14);
        assert_eq!(min_qubits(15), 8);
    }

    #[test]
    fn register_labels() {
        let reg = build_state(&sp(91), 11, true).unwrap();
        assert_eq!(reg.labels(), &[1, 7, 13, 91]);
        assert_eq!(reg.label_at(14), Some(7));
        assert_eq!(reg.label_at(0), Some(91));
        assert_eq!(reg.label_at(26), Some(13));
        assert_eq!(reg.label_at(4), Some(1));
    }

    #[test]
    fn branch_probabilities_91() {
        let b = branch_probs(&sp(91), 11);
        assert_eq!(b[0].kind, Branch::CaseN);
        assert_eq!(b[0].probability, Ratio::new(23, 2048));
        assert_eq!(b[1].kind, Branch::CaseFactor(7));
        assert_eq!(b[1].probability, Ratio::new(270, 2048));
        assert_eq!(b[3].probability, Ratio::new(1620, 2048));
        assert!((rf(b[3].probability) - 72.0 / 91.0).abs() < 1e-3);
        let total: Ratio<u64> = b.iter().map(|o| o.probability).sum();
        assert_eq!(total, Ratio::from_integer(1));
    }

    #[test]
    fn branch_probs_match_register_marginal() {
        for (n, q) in [(15u64, 8u32), (21, 9), (91, 11)] {
            let s = sp(n);
            let dist = build_state(&s, q, true).unwrap().b_distribution();
            for o in branch_probs(&s, q) {
                assert!((dist.prob(o.kind.label(n)) - rf(o.probability)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn post_states_have_expected_support() {
        let s = sp(91);
        let f7 = post_state(&s, 11, Branch::CaseFactor(7)).unwrap();
        assert!(f7[91].norm() == 0.0 && f7[182].norm() == 0.0);
        assert!(f7[7].norm() > 0.0);
        let unit = post_state(&s, 11, Branch::CaseUnit).unwrap();
        let amp = (1.0f64 / 1620.0).sqrt();
        for (ell, z) in unit.iter().enumerate() {
            let coprime = ell % 7 != 0 && ell % 13 != 0;
            assert!((z.re - if coprime { amp } else { 0.0 }).abs() < 1e-15);
        }
        let cn = post_state(&s, 11, Branch::CaseN).unwrap();
        assert_eq!(cn.iter().filter(|z| z.norm() > 0.0).count(), 23);
        assert!((cn[0].re - 23f64.sqrt().recip()).abs() < 1e-15);
        assert!(post_state(&s, 11, Branch::CaseFactor(5)).is_err());
    }

    #[test]
    fn post_states_match_register_collapse() {
        let s = sp(35);
        let reg = build_state(&s, 11, true).unwrap();
        for (branch, label) in [
            (Branch::CaseN, 35),
            (Branch::CaseFactor(5), 5),
            (Branch::CaseFactor(7), 7),
            (Branch::CaseUnit, 1),
        ] {
            let a = post_state(&s, 11, branch).unwrap();
            let b = reg.collapse(label).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn factor_spectrum_matches_geometric_form() {
        for (n, q, f) in [(91u64, 11u32, 7u64), (91, 11, 13), (21, 9, 3), (15, 8, 5)] {
            let s = sp(n);
            let fast = qft_vector(&post_state(&s, q, Branch::CaseFactor(f)).unwrap());
            let analytic = factor_branch_spectrum(&s, q, f).unwrap();
            for (a, b) in fast.iter().zip(&analytic) {
                assert!((a - b).norm() < 1e-9);
            }
        }
        let s = sp(91);
        let fast = qft_vector(&post_state(&s, 11, Branch::CaseUnit).unwrap());
        for (a, b) in fast.iter().zip(&unit_branch_spectrum(&s, 11)) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn peak_positions_round_half_up() {
        assert_eq!(peak_positions(7, 11), vec![293, 585, 878, 1170, 1463, 1755]);
        // 2^3 · 1/2 = 4 exactly; 2^2 · 1/8 = 0.5 rounds up to 1
        assert_eq!(peak_positions(2, 3), vec![4]);
        assert_eq!(peak_positions(8, 2)[0], 1);
        // duplicates collapse
        let p = peak_positions(8, 2);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn factor_seven_peak_report_91() {
        let s = sp(91);
        let dist = post_qft_distribution(&s, 11, Branch::CaseFactor(7)).unwrap();
        let report = analyze_peaks(&dist, 7, 91, 11).unwrap();
        assert_eq!(report.positions[0], 293);
        assert!(report.mass >= rf(peak_mass_bounds(&s).factor_p.total_factor_peaks));
        assert!(report.height_ratio() >= 100.0);
    }

    #[test]
    fn modulus_branch_peaks_only_on_modulus_comb() {
        let s = sp(21);
        let dist = post_qft_distribution(&s, 9, Branch::CaseN).unwrap();
        let comb = peak_positions(21, 9);
        let on: f64 = comb.iter().map(|&m| dist.probs()[m as usize]).sum::<f64>() + dist.probs()[0];
        assert!(on > 0.7);
        let near = |m: u64| comb.iter().chain(&[0]).any(|&c| c.abs_diff(m) <= 1);
        let far_max = (0..512u64)
            .filter(|&m| !near(m))
            .map(|m| dist.probs()[m as usize])
            .fold(0.0, f64::max);
        let peak_min = comb
            .iter()
            .map(|&m| dist.probs()[m as usize])
            .fold(1.0, f64::min);
        assert!(peak_min > 10.0 * far_max);
    }

    #[test]
    fn bounds_examples() {
        let b = peak_mass_bounds(&sp(91));
        assert!((rf(b.factor_p.total_factor_peaks) - 0.4 * 84.0 / 91.0).abs() < 1e-15);
        assert!((rf(b.factor_p.total_modulus_peaks) - 0.4 * 7.0 / 91.0).abs() < 1e-15);
        assert!((rf(b.unit.total_p_or_q) - 0.4 * 1476.0 / 6552.0).abs() < 1e-15);
        assert!((rf(b.unit.total_p_or_q) - 0.0901).abs() < 1e-4);
    }

    #[test]
    fn continued_fraction_examples() {
        assert_eq!(
            convergents(878, 2048),
            vec![(0, 1), (1, 2), (3, 7), (439, 1024)]
        );
        let c = recover_divisor(878, 11, 91).unwrap();
        assert_eq!((c.numerator, c.denominator, c.gcd_with_n), (3, 7, 7));
        assert_eq!(c.factor(91), Some(7));
        assert!(recover_divisor(0, 11, 91).is_err());
        let c = recover_divisor(1024, 11, 91).unwrap();
        assert_eq!((c.denominator, c.gcd_with_n), (2, 1));
        assert_eq!(c.factor(91), None);
    }

    #[test]
    fn driver_examples() {
        let r = factor_driver(91, 200, 1, DriverOptions::default()).unwrap();
        assert!(matches!(r.factor, Some(7) | Some(13)));
        let opts = DriverOptions {
            qubits: Some(8),
            allow_small_register: true,
            ..Default::default()
        };
        let r = factor_driver(15, 200, 1, opts).unwrap();
        assert!(matches!(r.factor, Some(3) | Some(5)));
        let r = factor_driver(91, 0, 1, DriverOptions::default()).unwrap();
        assert_eq!((r.factor, r.trials), (None, 0));
    }

    #[test]
    fn direct_read_mode_factors() {
        let opts = DriverOptions {
            mode: TrialMode::DirectRead,
            ..Default::default()
        };
        let r = factor_driver(35, 200, 4, opts).unwrap();
        assert!(matches!(r.factor, Some(5) | Some(7)));
        let last = r.records.last().unwrap();
        assert!(last.a_outcome.is_some());
    }

    #[test]
    fn driver_is_seed_deterministic() {
        let a = factor_driver(21, 50, 9, DriverOptions::default()).unwrap();
        let b = factor_driver(21, 50, 9, DriverOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn driver_handles_three_prime_factors() {
        let r = factor_driver(105, 200, 2, DriverOptions::default()).unwrap();
        let f = r.factor.unwrap();
        assert!(f > 1 && f < 105 && 105 % f == 0);
    }
}

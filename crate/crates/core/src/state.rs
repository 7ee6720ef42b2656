//! Bipartite statevectors over `A × B`, stored dense and row-major: the
//! amplitude of `|ℓ⟩_A |m⟩_B` lives at `ℓ · dim_b + m`.

use std::f64::consts::PI;

use num_complex::Complex64;
use num_rational::Ratio;
use rand::Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::kernels::{compensated_real_sum, quadratic_residue_phase, unit_phase, CompensatedSum};
use crate::numtheory::Semiprime;

/// Norm tolerance for every state and distribution.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Default amplitude-count cap, 2^24 complex doubles (256 MiB).
pub const DEFAULT_AMPLITUDE_CAP: usize = 1 << 24;

/// Environment variable overriding [`DEFAULT_AMPLITUDE_CAP`].
pub const MEM_CAP_ENV: &str = "GAUSSHOR_MEM_CAP";

/// The active amplitude cap: `GAUSSHOR_MEM_CAP` if set and parseable,
/// otherwise [`DEFAULT_AMPLITUDE_CAP`].
pub fn amplitude_cap() -> usize {
    std::env::var(MEM_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_AMPLITUDE_CAP)
}

pub(crate) fn check_cap(dim_a: u64, dim_b: u64, cap: usize) -> Result<usize> {
    let requested = dim_a as u128 * dim_b as u128;
    if dim_a == 0 || dim_b == 0 {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    if requested > cap as u128 {
        return Err(Error::CapExceeded { requested, cap });
    }
    Ok(requested as usize)
}

/// A labeled probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    labels: Vec<u64>,
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates non-negativity, distinct labels and unit mass.
    pub fn new(labels: Vec<u64>, probs: Vec<f64>) -> Result<Self> {
        if labels.len() != probs.len() || labels.is_empty() {
            return Err(Error::InvalidDistribution(format!(
                "{} labels for {} probabilities",
                labels.len(),
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("bad probability {p}")));
        }
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidDistribution("duplicate labels".into()));
        }
        let total = compensated_real_sum(probs.iter().copied());
        if (total - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("mass {total}")));
        }
        Ok(Self { labels, probs })
    }

    /// Labels `0..probs.len()`.
    pub fn indexed(probs: Vec<f64>) -> Result<Self> {
        let labels = (0..probs.len() as u64).collect();
        Self::new(labels, probs)
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.labels.iter().copied().zip(self.probs.iter().copied())
    }

    /// Probability of `label`, zero if absent.
    pub fn prob(&self, label: u64) -> f64 {
        self.labels
            .iter()
            .position(|&l| l == label)
            .map_or(0.0, |i| self.probs[i])
    }

    /// Total probability of labels satisfying `pred`.
    pub fn mass_where(&self, mut pred: impl FnMut(u64) -> bool) -> f64 {
        compensated_real_sum(self.iter().filter(|(l, _)| pred(*l)).map(|(_, p)| p))
    }

    /// Inverse-CDF draw of one label.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.labels[self.sample_index(rng)]
    }

    fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let total: f64 = self.probs.iter().sum();
        let target = u * total;
        let mut cum = 0.0;
        let mut last_nonzero = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                cum += p;
                last_nonzero = i;
                if cum > target {
                    return i;
                }
            }
        }
        last_nonzero
    }
}

/// Outcome of measuring `B` together with the renormalized `A` state.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseResult {
    pub outcome: u64,
    pub state_a: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteState {
    dim_a: usize,
    dim_b: usize,
    amps: Vec<Complex64>,
}

impl BipartiteState {
    /// Every amplitude `1/√(dim_a · dim_b)`, under the active cap.
    pub fn uniform_product(dim_a: u64, dim_b: u64) -> Result<Self> {
        Self::uniform_product_with_cap(dim_a, dim_b, amplitude_cap())
    }

    pub fn uniform_product_with_cap(dim_a: u64, dim_b: u64, cap: usize) -> Result<Self> {
        let len = check_cap(dim_a, dim_b, cap)?;
        let amp = Complex64::new(1.0 / (len as f64).sqrt(), 0.0);
        Ok(Self {
            dim_a: dim_a as usize,
            dim_b: dim_b as usize,
            amps: vec![amp; len],
        })
    }

    /// Wraps an amplitude grid, rejecting it unless its norm is 1 within
    /// [`NORM_TOLERANCE`].
    pub fn from_amplitudes(dim_a: usize, dim_b: usize, amps: Vec<Complex64>) -> Result<Self> {
        if dim_a == 0 || dim_b == 0 || amps.len() != dim_a * dim_b {
            return Err(Error::InvalidArgument(format!(
                "{} amplitudes for a {dim_a}x{dim_b} grid",
                amps.len()
            )));
        }
        let state = Self { dim_a, dim_b, amps };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Integrity { norm });
        }
        Ok(state)
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, ell: usize, m: usize) -> Complex64 {
        self.amps[ell * self.dim_b + m]
    }

    pub fn row(&self, ell: usize) -> &[Complex64] {
        &self.amps[ell * self.dim_b..(ell + 1) * self.dim_b]
    }

    pub fn norm_sqr(&self) -> f64 {
        compensated_real_sum(self.amps.iter().map(|z| z.norm_sqr()))
    }

    /// Multiplies `(ℓ, m)` by `exp(2πi m²ℓ/N)`.
    pub fn apply_quadratic_phase(&self, n: u64) -> Self {
        assert!(n >= 1, "apply_quadratic_phase: modulus must be positive");
        let mut out = self.clone();
        let dim_b = self.dim_b;
        out.amps
            .par_chunks_mut(dim_b)
            .enumerate()
            .for_each(|(ell, row)| {
                for (m, z) in row.iter_mut().enumerate() {
                    *z *= unit_phase(quadratic_residue_phase(m as u64, ell as u64, n), n);
                }
            });
        out
    }

    /// Forward QFT (`+i` kernel) on every B row.
    pub fn qft_b(&self) -> Self {
        self.map_rows(qft_vector)
    }

    pub fn inverse_qft_b(&self) -> Self {
        self.map_rows(inverse_qft_vector)
    }

    fn map_rows(&self, f: fn(&[Complex64]) -> Vec<Complex64>) -> Self {
        let amps: Vec<Complex64> = self.amps.par_chunks(self.dim_b).flat_map_iter(f).collect();
        Self {
            dim_a: self.dim_a,
            dim_b: self.dim_b,
            amps,
        }
    }

    /// `P(m) = Σ_ℓ |amplitude(ℓ, m)|²`.
    pub fn marginal_b(&self) -> Distribution {
        let mut probs = vec![0.0; self.dim_b];
        let mut comps = vec![0.0; self.dim_b];
        for row in self.amps.chunks(self.dim_b) {
            for (m, z) in row.iter().enumerate() {
                let x = z.norm_sqr();
                let t = probs[m] + x;
                comps[m] += if probs[m] >= x {
                    (probs[m] - t) + x
                } else {
                    (x - t) + probs[m]
                };
                probs[m] = t;
            }
        }
        let probs = probs.iter().zip(&comps).map(|(p, c)| p + c).collect();
        Distribution::indexed(probs).expect("marginal of a normalized state")
    }

    /// `P(ℓ) = Σ_m |amplitude(ℓ, m)|²`.
    pub fn marginal_a(&self) -> Distribution {
        let probs = self
            .amps
            .chunks(self.dim_b)
            .map(|row| compensated_real_sum(row.iter().map(|z| z.norm_sqr())))
            .collect();
        Distribution::indexed(probs).expect("marginal of a normalized state")
    }

    /// Collapse onto B-outcome `n0` without sampling.
    pub fn collapse_b(&self, n0: u64) -> Result<CollapseResult> {
        let col = n0 as usize;
        if col >= self.dim_b {
            return Err(Error::InvalidArgument(format!(
                "outcome {n0} outside B dimension {}",
                self.dim_b
            )));
        }
        let column: Vec<Complex64> = (0..self.dim_a)
            .map(|ell| self.amplitude(ell, col))
            .collect();
        let weight = compensated_real_sum(column.iter().map(|z| z.norm_sqr()));
        if weight <= 1e-12 {
            return Err(Error::ImpossibleOutcome(n0));
        }
        let scale = 1.0 / weight.sqrt();
        Ok(CollapseResult {
            outcome: n0,
            state_a: column.into_iter().map(|z| z * scale).collect(),
        })
    }

    /// Samples a B-outcome from [`marginal_b`](Self::marginal_b) and collapses.
    pub fn measure_b<R: Rng + ?Sized>(&self, rng: &mut R) -> CollapseResult {
        let outcome = self.marginal_b().sample(rng);
        self.collapse_b(outcome)
            .expect("sampled outcomes have positive probability")
    }

    /// Distribution of `ℓ` given B-outcome `n0`.
    pub fn conditional_a(&self, n0: u64) -> Result<Distribution> {
        let collapsed = self.collapse_b(n0)?;
        Distribution::indexed(collapsed.state_a.iter().map(|z| z.norm_sqr()).collect())
    }

    /// `Tr ρ_A²` as `Σ_{ℓ,ℓ'} |⟨row_ℓ, row_ℓ'⟩|²`.
    pub fn purity_a(&self) -> f64 {
        let rows: Vec<&[Complex64]> = self.amps.chunks(self.dim_b).collect();
        let partial: Vec<f64> = (0..rows.len())
            .into_par_iter()
            .map(|i| {
                let ri = rows[i];
                let mut acc = 0.0;
                for (j, rj) in rows.iter().enumerate().skip(i) {
                    let overlap: CompensatedSum = ri
                        .iter()
                        .zip(rj.iter())
                        .map(|(a, b)| a.conj() * b)
                        .collect();
                    let w = overlap.value().norm_sqr();
                    acc += if j == i { w } else { 2.0 * w };
                }
                acc
            })
            .collect();
        compensated_real_sum(partial)
    }
}

/// `(4N − 2p − 2q + 1) / N²`, the purity of the reduced state of `A` for
/// `N = p·q`.
pub fn purity_closed(s: &Semiprime) -> Ratio<u64> {
    let n = s.n();
    Ratio::new(4 * n + 1 - 2 * s.p() - 2 * s.q(), n * n)
}

fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// Unitary DFT with kernel `exp(+2πi mℓ/D)/√D`. Radix-2 FFT for powers of two,
/// direct `O(D²)` evaluation otherwise.
pub fn qft_vector(v: &[Complex64]) -> Vec<Complex64> {
    transform(v, true)
}

/// Inverse of [`qft_vector`] (kernel `exp(−2πi mℓ/D)/√D`).
pub fn inverse_qft_vector(v: &[Complex64]) -> Vec<Complex64> {
    transform(v, false)
}

fn transform(v: &[Complex64], forward: bool) -> Vec<Complex64> {
    let d = v.len();
    assert!(d >= 1, "QFT of an empty register");
    let scale = 1.0 / (d as f64).sqrt();
    if is_power_of_two(d) {
        let mut buf = v.to_vec();
        let mut planner = FftPlanner::new();
        // rustfft's "inverse" carries the +i sign
        let fft = if forward {
            planner.plan_fft_inverse(d)
        } else {
            planner.plan_fft_forward(d)
        };
        fft.process(&mut buf);
        buf.iter_mut().for_each(|z| *z *= scale);
        return buf;
    }
    direct_dft(v, forward)
}

/// `O(D²)` DFT with integer-reduced phase indices; also the oracle for the
/// fast path.
pub fn direct_dft(v: &[Complex64], forward: bool) -> Vec<Complex64> {
    let d = v.len() as u64;
    let scale = 1.0 / (d as f64).sqrt();
    (0..d)
        .into_par_iter()
        .map(|m| {
            let acc: CompensatedSum = v
                .iter()
                .enumerate()
                .map(|(ell, z)| {
                    let k = (m * ell as u64) % d;
                    let k = if forward { k } else { (d - k) % d };
                    z * Complex64::from_polar(1.0, 2.0 * PI * k as f64 / d as f64)
                })
                .collect();
            acc.value() * scale
        })
        .collect()
}

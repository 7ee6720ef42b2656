//! The superposition algorithm on 2^Q-dimensional registers: P'_B peaks near
//! multiples of 2^Q/N, and conditioning on a peak recovers the exact case.

use gausshor::superposition::{
    factor_multiple_mass, run_exact, sample_factor_driver, QubitRun, RunMode,
};

fn main() -> gausshor::Result<()> {
    let (n, q) = (21, 9);
    let run = QubitRun::new(n, q)?;
    let probs = run.p_b_prime().probs();
    println!("N={n} Q={q}");
    for (j, &bin) in run.peak_bins().iter().enumerate().take(6) {
        println!("  j={j}  bin {bin:>3}  {:.5}", probs[bin as usize]);
    }
    println!("mass on peaks {:.4}", run.peak_mass());

    let exact = run_exact(n)?;
    for bin in [0, 171] {
        let (j, dist) = run.conditional_after_peak(bin)?;
        println!(
            "after bin {bin}: j={j}, factor-multiple mass {:.4} (exact {:.4})",
            factor_multiple_mass(&dist, n),
            exact.factor_mass_a(j)?
        );
    }

    let r = sample_factor_driver(n, RunMode::Qubit(q), 100, 3)?;
    println!("driver: factor {:?} after {} trial(s)", r.factor, r.trials);
    Ok(())
}

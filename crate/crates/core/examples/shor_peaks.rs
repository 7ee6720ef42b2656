//! Post-QFT spectra of the Shor-style register for N = 91 and 2^11 bins.
//!
//! The register is smaller than N^2 on purpose; the spectra are still well
//! defined, only continued-fraction recovery loses its uniqueness guarantee.

use gausshor::numtheory::factor_semiprime;
use gausshor::shor_gauss::{
    analyze_peaks, branch_probs, peak_mass_bounds, peak_positions, post_qft_distribution, Branch,
};

fn main() -> gausshor::Result<()> {
    let s = factor_semiprime(91)?;
    let q = 11;

    for b in branch_probs(&s, q) {
        println!("{:<16} {}", format!("{:?}", b.kind), b.probability);
    }

    let bounds = peak_mass_bounds(&s);
    let dist = post_qft_distribution(&s, q, Branch::CaseFactor(7))?;
    let report = analyze_peaks(&dist, 7, 91, q)?;
    println!("\nfactor 7 branch");
    println!("  peaks      {:?}", report.positions);
    println!(
        "  mass       {:.4} (bound {})",
        report.mass, bounds.factor_p.total_factor_peaks
    );
    println!("  dc         {:.4}", report.dc);
    println!(
        "  height     {:.1}x the tallest N-comb bin",
        report.height_ratio()
    );

    let unit = post_qft_distribution(&s, q, Branch::CaseUnit)?;
    let probs = unit.probs();
    println!("\nunit branch");
    for (f, bound) in [(7, bounds.unit.per_p_peak), (13, bounds.unit.per_q_peak)] {
        let smallest = peak_positions(f, q)
            .iter()
            .map(|&m| probs[m as usize])
            .fold(f64::MAX, f64::min);
        println!("  m_{f:<2} smallest bin {smallest:.5} (bound {bound})");
    }
    Ok(())
}

//! The superposition algorithm on exact N-dimensional registers.

use gausshor::numtheory::factor_semiprime;
use gausshor::superposition::{
    factor_mass_shared_closed, factor_mass_zero_closed, p_b_closed, run_exact,
    sample_factor_driver, RunMode,
};

fn main() -> gausshor::Result<()> {
    let s = factor_semiprime(91)?;
    let run = run_exact(91)?;
    let pb = run.p_b_distribution();

    println!("P_B(n0)");
    for n0 in [0u64, 14, 26, 4] {
        println!(
            "  n0={n0:>2}  {:.6}  closed={}/8281",
            pb.prob(n0),
            p_b_closed(n0, &s) * 8281
        );
    }

    let m = run.success_mass();
    println!(
        "useful outcomes {:.4}, coprime {:.4}",
        m.total_useful, m.p_b_coprime
    );

    println!("\nfactor-multiple mass of A after measuring B");
    println!(
        "  n0=0   {:.6}  closed={}",
        run.factor_mass_a(0)?,
        factor_mass_zero_closed(&s)
    );
    println!(
        "  n0=14  {:.6}  closed={}",
        run.factor_mass_a(14)?,
        factor_mass_shared_closed(&s, 7)?
    );
    println!("  n0=4   {:.1e}", run.factor_mass_a(4)?);

    let r = sample_factor_driver(91, RunMode::Exact, 100, 7)?;
    println!(
        "\ndriver: factor {:?} after {} trial(s)",
        r.factor, r.trials
    );
    Ok(())
}

//! Repeated Shor-style trials until a factor turns up, with the
//! continued-fraction step shown for a few peak positions.

use gausshor::shor_gauss::{
    factor_driver, min_qubits, peak_positions, recover_divisor, DriverOptions,
};

fn main() -> gausshor::Result<()> {
    let n = 91;
    let q = min_qubits(n);
    println!("N={n} Q={q}");

    for m in peak_positions(13, q).into_iter().take(4) {
        let c = recover_divisor(m, q, n)?;
        println!(
            "  m={m:>5} -> {}/{}  gcd={}",
            c.numerator, c.denominator, c.gcd_with_n
        );
    }

    for seed in 0..5 {
        let r = factor_driver(n, 200, seed, DriverOptions::default())?;
        println!(
            "seed {seed}: factor {:?} after {} trial(s)",
            r.factor, r.trials
        );
    }
    Ok(())
}

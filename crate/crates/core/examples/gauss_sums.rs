//! Standard, shifted and truncated Gauss sums for N = 91.
//!
//! ```bash
//! cargo run --example gauss_sums
//! ```

use gausshor::kernels::{closed_w_sq, eval_g, eval_truncated, eval_w};
use gausshor::numtheory::{factor_semiprime, gcd_conv};

fn main() -> gausshor::Result<()> {
    let s = factor_semiprime(91)?;
    let n = s.n();
    println!("{s}");

    println!("\n|G(l,N)|^2 / N against gcd(l,N)");
    for ell in [1, 7, 13, 14, 26, 45, 91] {
        let g = eval_g(ell % n, n).norm_sqr() / n as f64;
        println!("  l={ell:>3}  {g:>8.4}  gcd={}", gcd_conv(ell % n, n)?);
    }

    // n0 = 14 shares the factor 7: multiples of 7 survive, multiples of 13 vanish
    for n0 in [14u64, 4] {
        println!("\n|W_{n0}(l)|^2 on factor multiples");
        for ell in [7, 13, 14, 26, 39, 49] {
            let w = eval_w(n0, ell, n).norm_sqr();
            println!("  l={ell:>2}  {w:.6}  closed={}", closed_w_sq(n0, ell, &s));
        }
    }

    println!("\ntruncated sum with 5 terms");
    for ell in [3, 7, 9, 13, 20] {
        let a = eval_truncated(ell, n, 5)?.norm_sqr();
        println!(
            "  l={ell:>2}  {a:.4}{}",
            if n % ell == 0 { "  divisor" } else { "" }
        );
    }
    Ok(())
}

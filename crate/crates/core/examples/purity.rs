//! Entanglement of the Gauss-sum state: measured purity of A against the
//! closed form.

use gausshor::numtheory::odd_semiprimes_up_to;
use gausshor::state::purity_closed;
use gausshor::superposition::run_exact;

fn main() -> gausshor::Result<()> {
    println!(
        "{:>4} {:>8} {:>12} {:>12}",
        "N", "factors", "measured", "closed"
    );
    for s in odd_semiprimes_up_to(120) {
        let measured = run_exact(s.n())?.state().purity_a();
        let closed = purity_closed(&s);
        println!(
            "{:>4} {:>8} {measured:>12.8} {:>12}",
            s.n(),
            format!("{}*{}", s.p(), s.q()),
            closed.to_string()
        );
    }
    Ok(())
}

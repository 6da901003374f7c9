//! Central finite differences against the tape's reverse-mode gradients for
//! every op and both networks.
//!
//! ```bash
//! cargo run --release -p metricgan-u --example gradient_check
//! ```

use metricgan_u::selfcheck::{gradient_cases, run_grad_case, GRAD_TOL};

fn main() -> anyhow::Result<()> {
    let mut worst = 0.0f64;
    for c in gradient_cases() {
        let err = run_grad_case(&c, 3, false)?;
        worst = worst.max(err);
        println!("{:<24} {err:.2e}", c.name);
    }
    println!("worst relative error {worst:.2e} (tolerance {GRAD_TOL:.0e})");
    Ok(())
}

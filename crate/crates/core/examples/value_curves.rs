//! Backward induction over a short price series, printed as a curve dump.
//!
//! ```bash
//! cargo run --example value_curves
//! ```

use conformal_arbitrage::domain::StorageSpec;
use conformal_arbitrage::valuefn::{backward_induct, write_curves, MarginalValueCurve};

fn main() -> conformal_arbitrage::Result<()> {
    // 1 MWh battery, 0.5 MWh per step, 90% one-way efficiency, $5/MWh wear cost
    let spec = StorageSpec::new(0.5, 1.0, 0.9, 5.0, 1.0)?;
    let prices = [22.0, 18.0, 35.0, 80.0, 60.0, 25.0];
    let terminal = MarginalValueCurve::target_soc(1.0, 0.5, 40.0)?;

    let curves = backward_induct(&prices, &spec, &terminal, None)?;
    println!("value of the initial state of charge:");
    let v0 = curves[0].integrate();
    for e in [0.0, 0.25, 0.5, 0.75, 1.0] {
        println!("  Q0({e:.2}) = {:8.3}", v0.value_at(e));
    }

    println!("\nmarginal value curves (t, soc_start, soc_end, $/MWh):");
    write_curves(std::io::stdout().lock(), &curves)?;
    Ok(())
}

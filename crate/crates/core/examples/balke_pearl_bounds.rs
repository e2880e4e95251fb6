//! Sharp bounds on the vitamin A trial counts, closed form against the LP.

use superopt::bounds::{balke_pearl_ate_bounds, lp_oracle_bounds, natural_att_bounds, vitamin_a_counts, Estimand, NaturalValueConvention};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let counts = vitamin_a_counts();
    println!("ATE          closed form {}  lp {}", balke_pearl_ate_bounds(&counts)?, lp_oracle_bounds(&counts, Estimand::Ate)?);
    for a in 0..2u8 {
        let closed = natural_att_bounds(&counts, a, NaturalValueConvention::Pooled)?;
        println!("E(Y1-Y0|A={a}) closed form {closed}  lp {}", lp_oracle_bounds(&counts, Estimand::Att(a))?);
    }
    Ok(())
}

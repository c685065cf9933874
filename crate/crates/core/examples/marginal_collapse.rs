//! Relative error of the predictive-likelihood estimate of the marginal algorithm as the
//! dimension grows with N fixed.

use hdsmc::filtering::{idealized_log_predictive, marginal_predictive_rel_error, BoundedToyModel, MarginalLaw, UniformLaw};
use hdsmc::rng::stream;

fn main() -> hdsmc::Result<()> {
    let model = BoundedToyModel::new(0.9, 4.0)?;
    let law = UniformLaw { lo: 0.0, hi: 1.0 };
    let (y, n, reps) = (1.0, 10, 5000);
    let mut rng = stream(4, &[]);
    let m1 = hdsmc::filtering::predictive_factor_moments(&model, &law, y)?.0;
    for d in [2, 8, 32, 64] {
        let mut sq = 0.0;
        for _ in 0..reps {
            let centers: Vec<f64> = (0..n * d).map(|_| law.sample(&mut rng)).collect();
            let est = idealized_log_predictive(&model, y, &centers, d)?;
            sq += (est - d as f64 * m1.ln()).exp_m1().powi(2);
        }
        println!(
            "d {d:3}: formula {:.4}, empirical {:.4}",
            marginal_predictive_rel_error(&model, &law, y, d, n)?,
            sq / reps as f64
        );
    }
    Ok(())
}

use lbp::ddp::{competitor_corr_bounds, mu_diagonal, tie_probability};
use lbp::harness::{dependence_curve, linspace};
use lbp::CorrelationKernel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{header, write_csv};
use crate::{CliError, Common};

const COMPETITOR_B: [f64; 10] = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];

pub fn prior_analyze(b: f64, max_distance: f64, draws: usize, common: &Common) -> Result<(), CliError> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(CliError::Usage(format!("--b must be positive, got {b}")));
    }
    if !(max_distance > 0.0 && max_distance.is_finite()) {
        return Err(CliError::Usage(format!("--max-distance must be positive, got {max_distance}")));
    }
    if draws < 2 {
        return Err(CliError::Usage("--draws must be at least 2".into()));
    }
    let run = common.run_config()?;
    let shape = run.shape()?;
    let kernel = run.kernel.clone().unwrap_or(CorrelationKernel::Matern {
        range: 0.3,
        smoothness: 1.5,
    });
    let out = common.out_dir()?;
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);

    let rows = dependence_curve(&kernel, &shape, b, &linspace(0.0, max_distance, 21), draws, &mut rng)?;
    write_csv(
        &out.join("dependence.csv"),
        &header(&["distance", "kernel", "eta_corr", "prob_corr", "tie_probability", "rpm_corr"]),
        rows.iter()
            .map(|r| vec![r.distance, r.kernel, r.eta_corr, r.prob_corr, r.tie_probability, r.rpm_corr]),
    )?;

    let mut bs = COMPETITOR_B.to_vec();
    if !bs.contains(&b) {
        bs.push(b);
        bs.sort_by(f64::total_cmp);
    }
    let mut table = Vec::with_capacity(bs.len());
    for &v in &bs {
        let c = competitor_corr_bounds(v, draws, &mut rng)?;
        table.push(vec![v, c.m1.value, c.m1.se, c.m2_stick, c.m2_rpm, c.m3, c.m4.value, c.m4.se]);
    }
    write_csv(
        &out.join("competitor_bounds.csv"),
        &header(&["b", "m1", "m1_se", "m2_stick", "m2_rpm", "m3", "m4", "m4_se"]),
        table,
    )?;

    let tie = tie_probability(mu_diagonal(b), b)?;
    println!("tie probability at distance 0: {}", trimmed(tie));
    Ok(())
}

/// Twelve decimals with trailing zeros removed.
fn trimmed(v: f64) -> String {
    let s = format!("{v:.12}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

//! Bootstrap interval coverage on data simulated at the published estimates.

use hhcontact::estimation::bootstrap;
use hhcontact::simulation::{belgian_like_design, simulate_dataset};
use hhcontact::ParameterVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DATASETS: u64 = 200;
/// Replicates per dataset; enough for 2.5%/97.5% quantiles at this budget.
const REPLICATES: usize = 50;

#[test]
fn percentile_intervals_cover_the_truth() {
    let truth = ParameterVector::published();
    let rows = belgian_like_design();
    let (mut covered, mut total) = (0usize, 0usize);
    for seed in 0..DATASETS {
        let data = simulate_dataset(&rows, &truth, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let boot = bootstrap(&data, REPLICATES, 10_000 + seed).unwrap();
        for (interval, t) in boot.intervals.iter().zip(truth.values()) {
            total += 1;
            covered += usize::from(interval.contains(*t));
        }
    }
    let rate = covered as f64 / total as f64;
    println!("coverage {covered}/{total} = {rate:.3}");
    assert!(rate >= 0.88, "coverage {rate:.3}");
}

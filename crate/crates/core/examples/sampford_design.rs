//! Cluster inclusion probabilities proportional to size, Sampford draws, and
//! the empirical inclusion frequencies they produce.

use dml_survey::design::{cluster_inclusion_probs, ClusterDesign, DesignKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dml_survey::Result<()> {
    let sizes = [12.0, 30.0, 7.0, 55.0, 21.0, 90.0, 16.0, 40.0];
    let pi = cluster_inclusion_probs(&sizes, 3)?;
    let design = ClusterDesign::new(DesignKind::Sampford, 3, pi.clone())?;
    let sampler = design.sampler();

    let draws = 50_000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut hits = vec![0usize; sizes.len()];
    for _ in 0..draws {
        for (h, picked) in hits.iter_mut().zip(sampler.draw(&mut rng)?) {
            *h += picked as usize;
        }
    }
    println!("{:>6} {:>8} {:>10}", "size", "pi", "observed");
    for ((s, p), h) in sizes.iter().zip(&pi).zip(&hits) {
        println!("{s:>6} {p:>8.4} {:>10.4}", *h as f64 / draws as f64);
    }
    Ok(())
}

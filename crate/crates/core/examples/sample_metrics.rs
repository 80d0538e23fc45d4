//! Fréchet distance, MMD and TV on known inputs.
//!
//! cargo run --release --example sample_metrics

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use purigan::distributions::{AnalyticDensity, TabularDistribution};
use purigan::metrics::{auroc, frechet_gaussian, median_heuristic, mmd_rbf, tv_tabular};

fn main() -> purigan::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let p = AnalyticDensity::isotropic(vec![0.0, 0.0], 1.0)?;
    let a = p.sample_array(&mut rng, 5000)?;
    for shift in [0.0, 0.5, 1.0, 2.0] {
        let q = AnalyticDensity::isotropic(vec![shift, 0.0], 1.0)?;
        let b = q.sample_array(&mut rng, 5000)?;
        let bw = median_heuristic(a.view(), b.view(), 500)?;
        let mmd = mmd_rbf(a.slice(ndarray::s![..500, ..]), b.slice(ndarray::s![..500, ..]), bw)?;
        println!(
            "shift {shift}: frechet {:.4} (exact {:.4})  mmd {mmd:.5}",
            frechet_gaussian(a.view(), b.view())?,
            shift * shift
        );
    }
    let u = TabularDistribution::uniform(4)?;
    let v = TabularDistribution::new(vec![0.4, 0.4, 0.1, 0.1])?;
    println!("TV(uniform, {:?}) = {}", v.mass(), tv_tabular(&u, &v)?);
    println!("AUROC of a perfect ranking = {}", auroc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true])?);
    Ok(())
}

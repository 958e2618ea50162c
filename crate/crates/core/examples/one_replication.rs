//! Runs the sample side and one bootstrap draw on a simulated null sample and
//! reports estimates and timings.

use std::time::Instant;

use semigen::bootstrap::{bootstrap_statistic, fit_sample_side};
use semigen::pipeline::PipelineOptions;
use semigen::rng::{domain, stream};
use semigen::simulation::{generate_dgp, simulation_model, DgpSpec, DgpVariant};
use semigen::{KernelSpec, Sample64, SlsOptions, ThirdBandwidth, TrimmingSpec};

fn main() -> semigen::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(400);
    let reps: u64 = std::env::args().nth(2).and_then(|a| a.parse().ok()).unwrap_or(3);
    let spec = DgpSpec::new(DgpVariant::Dgp1Normal, 0.0, n)?;
    let model = simulation_model();
    let kspec = KernelSpec::default();
    let opts = PipelineOptions::new(true, ThirdBandwidth::Auto, false, SlsOptions::default());
    for rep in 0..reps {
        let sample: Sample64 = generate_dgp(&spec, &mut stream(1, domain::DATA, rep));
        let t = Instant::now();
        let side = fit_sample_side(&sample, &model, kspec, &TrimmingSpec::default(), &opts)?;
        let t_sample = t.elapsed().as_secs_f64();
        let sls = side.fit.index.sls.as_ref().unwrap();
        let evals: usize = sls.optimizer_trace.iter().map(|s| s.evaluations).sum();
        let t = Instant::now();
        let draw = side.bootstrap_draw(&sample, &mut stream(1, domain::WARP, rep));
        let s_star = bootstrap_statistic(&sample, &draw, &model, kspec, &side.h_first, &side.trim, &opts)?;
        println!(
            "rep {rep}: beta {:?} h_bar {:.3} h {:.3} S {:.5} S* {:.5} evals {evals} sample {t_sample:.2}s boot {:.2}s",
            sls.beta_hat,
            sls.h_bar,
            side.fit.test.h_third,
            side.fit.test.s_n,
            s_star,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

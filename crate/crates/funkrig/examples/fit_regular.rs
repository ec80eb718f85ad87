//! Fit a kriging model to regular-grid functional data and inspect the
//! estimates.
//!
//! Run with: cargo run --example fit_regular

use funkrig::corr::{CorrParams, PowerExponent};
use funkrig::generate::{generate, DesignChoice, GenSpec};
use funkrig::kriging::FitOpts;
use funkrig::pipeline::{fit_pipeline, PipelineOpts};

fn main() -> funkrig::Result<()> {
    // Sample a ground-truth Gaussian process on a shared 20-point grid:
    // mean 12 + 0.5 t, two inputs, exponential kernel.
    let spec = GenSpec {
        design: DesignChoice::Random { n: 15, p: 2 },
        m: 20,
        t_step: 1.0,
        mu0: 12.0,
        t_slope: 0.5,
        x_slopes: vec![],
        sigma2: 3.0,
        params: CorrParams::new(vec![1.0, 1.0], 0.3, PowerExponent::Exponential, 0.0)?,
        keep_lo: 1.0, // no truncation: every run observes the full grid
        keep_hi: 1.0,
    };
    let data = generate(&spec, 2024)?;
    println!(
        "dataset: {} runs x {} grid points, regular = {}",
        data.dataset.n_runs(),
        data.dataset.union_grid().len(),
        data.dataset.is_regular()
    );

    let opts = PipelineOpts {
        nugget: 0.0,
        stage_fit: FitOpts::with_restarts(2),
        ..Default::default()
    };
    let pipe = fit_pipeline(&data.dataset, &opts)?;
    let model = &pipe.model;
    println!("selected mean basis: {}", model.basis);
    println!("mu     = {:?}", model.mu.iter().copied().collect::<Vec<_>>());
    println!("sigma2 = {:.4}", model.sigma2);
    println!("alphas = {:?}  (truth 1.0, 1.0)", model.params.alphas);
    println!("beta   = {:.4}  (truth 0.3)", model.params.beta);

    // Kriging interpolates: at a training point the prediction is the datum.
    let x0 = data.dataset.design.row(3).to_vec();
    let t0 = data.dataset.union_grid()[7];
    let y0 = data.dataset.runs[3].y[7];
    println!(
        "training point: prediction {:.6} vs observation {:.6}",
        model.predict(&x0, t0),
        y0
    );

    // Off the design, the 95% interval widens.
    let p = model.predict_ci(&[0.5, 0.5], 10.5, 0.05);
    println!(
        "off-design query: {:.3} with 95% interval [{:.3}, {:.3}]",
        p.value, p.lo, p.hi
    );
    Ok(())
}

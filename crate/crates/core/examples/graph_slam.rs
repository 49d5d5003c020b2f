//! GraphSLAM on a known association: a 1-D linear chain against its closed
//! form, then a simulated scenario with the true partition.

use pmbm_slam::association::ExistenceVector;
use pmbm_slam::fixtures::linear_chain;
use pmbm_slam::graph::{build_graph, dead_reckoning, optimize, OptimizerSettings};
use pmbm_slam::models::{generate_scenario, Preset};
use pmbm_slam::ScenarioConfig;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let chain = linear_chain(&[1.0, 0.5, -0.3], &[0.2, 1.1, 1.4, 1.3]);
    let (gls_mean, _) = chain.gls();
    let res = optimize(&chain.problem, &DVector::zeros(4), &OptimizerSettings::default())?;
    println!("chain estimate {:.4?}", res.mean.as_slice());
    println!("closed form    {:.4?}", gls_mean.as_slice());
    println!("{} iterations, std {:.4?}", res.iterations, res.cov.diagonal().map(f64::sqrt).as_slice());

    let cfg = ScenarioConfig::desk_preset(Preset::III);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (truth, batch) = generate_scenario(&cfg, &mut rng);
    let p = truth.associations.clone();
    let psi = ExistenceVector {
        psi: p.cells().iter().map(|c| c.len() > 1).collect(),
        r: vec![1.0; p.num_cells()],
    };
    let init = dead_reckoning(&cfg, cfg.steps);
    let prob = build_graph(&p, &psi, &init, &batch, &cfg)?;
    let res = optimize(&prob, &prob.initial_state(&init, &[]), &OptimizerSettings::default())?;
    println!(
        "\nscenario: {} variables, {} landmarks, cost {:.1} -> {:.1} in {} iterations",
        prob.dim(),
        prob.num_landmarks(),
        res.cost_trace[0],
        res.final_cost,
        res.iterations
    );
    for (k, (est, tru)) in res.trajectory().iter().zip(&truth.trajectory).enumerate().step_by(5) {
        let dr = (init[k].position - tru.position).norm();
        let e = (est.position - tru.position).norm();
        println!("step {k:>2}: dead reckoning off by {dr:6.2} m, estimate off by {e:5.2} m");
    }
    Ok(())
}

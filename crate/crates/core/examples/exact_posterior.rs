//! Enumerate every data association of a small fixture and list the most
//! probable ones.

use pmbm_slam::association::{exact_posterior, CellModel};
use pmbm_slam::fixtures::association_fixtures;

fn main() -> anyhow::Result<()> {
    for fx in association_fixtures() {
        let mut model = CellModel::new(&fx.batch, &fx.traj, &fx.cfg);
        let mut post = exact_posterior(&mut model)?;
        post.sort_by(|a, b| b.1.total_cmp(&a.1));
        println!("{} ({} measurements, {} partitions)", fx.name, fx.batch.len(), post.len());
        println!("  truth {:?}", fx.truth().canonical());
        for (p, prob) in post.iter().take(4) {
            let cells: Vec<String> = p
                .cells()
                .iter()
                .map(|c| {
                    let l = model.get(c);
                    format!("{c:?}:{:.1}", l.log_l)
                })
                .collect();
            println!("  {prob:.4}  {}", cells.join(" "));
        }
    }
    Ok(())
}

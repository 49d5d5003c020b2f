//! GOSPA between landmark sets and NMI between partitions.

use nalgebra::Vector3;
use pmbm_slam::metrics::{gospa, nmi, GospaParams};
use pmbm_slam::Partition;

fn main() -> anyhow::Result<()> {
    let truth = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(10.0, 0.0, 0.0), Vector3::new(0.0, 10.0, 2.0)];
    let est = [Vector3::new(0.3, -0.2, 0.0), Vector3::new(10.0, 0.5, 0.1), Vector3::new(30.0, 30.0, 0.0)];
    let g = gospa(&truth, &est, GospaParams::default());
    println!(
        "GOSPA {:.3} m: localization {:.3} m, missed {:.3} m, false {:.3} m, pairs {:?}",
        g.total, g.localization, g.missed, g.false_alarm, g.assignment
    );
    let p = GospaParams::default().p;
    let sum = g.localization.powf(p) + g.missed.powf(p) + g.false_alarm.powf(p);
    println!("parts recombine to {:.3} m", sum.powf(1.0 / p));

    let a = Partition::from_cells(vec![vec![0, 2], vec![1, 3], vec![4]], 5)?;
    let b = Partition::from_cells(vec![vec![0, 2], vec![1], vec![3], vec![4]], 5)?;
    let c = Partition::singletons(5);
    println!("NMI(a, a) {:.4}", nmi(&a, &a));
    println!("NMI(a, b) {:.4}", nmi(&a, &b));
    println!("NMI(a, singletons) {:.4}", nmi(&a, &c));
    Ok(())
}

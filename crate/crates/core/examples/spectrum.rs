// Timing and regularity check across grid sizes (debugging aid).
use std::time::Instant;
use twistorlab_core::chart::catalog;
use twistorlab_core::curves::{bolt_lift, kernel_moebius_angles, linearize, ProductJ};
use twistorlab_core::hyperkahler::hk_triple;

fn main() {
    let chart = catalog("eguchi-hanson-bolt").unwrap();
    let triple = hk_triple(&chart).unwrap();
    for n in [16usize, 24, 32] {
        let t0 = Instant::now();
        let map = bolt_lift(&chart, n).unwrap();
        let j = ProductJ { triple: &triple, sign: 1.0 };
        match linearize(&map, &j) {
            Ok(op) => {
                let (k, c, gap) = op.kernel_cokernel(1e-5).unwrap();
                let angles = kernel_moebius_angles(&op, &map);
                println!(
                    "n={n}: dim={} ({k},{c}) gap={:.3e} obstruction={:?} max-angle={:.4} elapsed={:.1}s",
                    op.nodal_dim(),
                    gap.ratio,
                    gap.obstruction_singular_values,
                    angles.last().unwrap(),
                    t0.elapsed().as_secs_f64()
                );
            }
            Err(e) => println!("n={n}: {e}"),
        }
    }
}

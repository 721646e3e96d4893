use nlchns::experiments::experiment_local_limit;
use nlchns::kernel::{KernelFamily, KernelSpec};
use nlchns::Grid2D;

fn main() {
    let g = Grid2D::new(256, 256, 1.0, 1.0).unwrap();
    for &(w, rb) in &[
        (0.08_f64, 0.25_f64),
        (0.10, 0.25),
        (0.12, 0.30),
        (0.12, 0.25),
        (0.14, 0.30),
        (0.16, 0.30),
        (0.09, 0.27),
    ] {
        let base = KernelSpec {
            family: KernelFamily::Gaussian { width: w },
            scale: 1.0,
            amplitude: 1.0,
        };
        match experiment_local_limit(&base, &[2.0, 4.0, 8.0, 16.0], g, (0.5, 0.5), rb) {
            Ok(study) => {
                let gaps: Vec<String> =
                    study.rows.iter().map(|r| format!("{:.4}", r.rel_gap)).collect();
                println!(
                    "w={w} rb={rb}: gaps=[{}] decreasing={}",
                    gaps.join(", "),
                    study.decreasing
                );
            }
            Err(e) => println!("w={w} rb={rb}: rejected: {e}"),
        }
    }
}

//! Paired Baseline/Seg/SegGlobal comparison over 20 seeds on a 40 m corridor.
//!
//! Usage: `drift_sweep [noise] [detect_prob] [scale_sigma] [tau]`

use segclust_core::{ate, generate_corridor, run, AlignMode, DriftConfig, Mode, ObservationConfig, ScheduleConfig, WorldSpec};

fn arg(i: usize, default: f64) -> f64 {
    std::env::args()
        .nth(i)
        .map_or(default, |s| s.parse().expect("numeric argument"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    0.5 * (v[(n - 1) / 2] + v[n / 2])
}

fn main() {
    let (noise, detect_prob, scale_sigma, tau) = (arg(1, 0.01), arg(2, 0.8), arg(3, 1e-3), arg(4, 0.005));
    let world = generate_corridor(&WorldSpec::default()).unwrap();
    let mut ates = vec![Vec::new(); 3];
    let mut clusters = Vec::new();
    for seed in 0..20u64 {
        let drift = DriftConfig { seed, scale_sigma, ..DriftConfig::none() };
        let obs = ObservationConfig { seed, endpoint_noise_sigma: noise, detect_prob, ..ObservationConfig::default() };
        let mut row = Vec::new();
        for (k, mode) in Mode::ALL.into_iter().enumerate() {
            let schedule = ScheduleConfig { tau, ..ScheduleConfig::with_mode(mode) };
            let r = run(&world, drift, obs, schedule).unwrap();
            let e = ate(&r.trajectory, &world.gt_trajectory, AlignMode::Similarity).unwrap();
            if mode == Mode::Seg {
                clusters.push(r.clusters.len() as f64);
            }
            row.push(format!("{mode} {e:.4} (scale err {:.4})", r.final_scale_error()));
            ates[k].push(e);
        }
        println!("seed {seed:2}: {}", row.join("  "));
    }
    let wins = ates[1].iter().zip(&ates[0]).filter(|(s, b)| s < b).count();
    println!(
        "median ATE: Baseline {:.4}  Seg {:.4}  SegGlobal {:.4}; Seg wins {wins}/20; median clusters {}",
        median(ates[0].clone()),
        median(ates[1].clone()),
        median(ates[2].clone()),
        median(clusters)
    );
}

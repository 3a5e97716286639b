//! Compare the plain backbone with the RAFNI-wrapped one on synthetic blobs.
//!
//! cargo run --release --example desk_scale -- [cluster_sep] [noise_rate] [seeds]

use rafni::eval::{run_experiment, ExperimentSpec, Protocol, TrainSetup};
use rafni::{gen_synthetic, NoiseSpec, RafniConfig};

fn main() -> rafni::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let sep: f64 = args.first().map_or(3.0, |s| s.parse().expect("cluster_sep"));
    let rate: f64 = args.get(1).map_or(0.4, |s| s.parse().expect("noise rate"));
    let seeds: u64 = args.get(2).map_or(5, |s| s.parse().expect("seeds"));
    for seed in 0..seeds {
        let ds = gen_synthetic(3000, 4, 2, sep, seed)?;
        let spec = ExperimentSpec {
            rafni: RafniConfig::default(),
            noise: (rate > 0.0).then(|| NoiseSpec::symmetric(rate)),
            setup: TrainSetup::default(),
            protocol: Protocol::HoldOut { fraction: 0.2, stratified: true },
            master_seed: seed,
            baseline: true,
        };
        let res = run_experiment(&ds, &spec)?;
        let audit = res.audit.unwrap_or_default();
        let started = res.runs[0].rafni.epoch_reports.iter().position(|r| r.started);
        let frozen = res.runs[0].rafni.epoch_reports.iter().position(|r| r.frozen);
        println!(
            "seed {seed}: baseline {:.4} rafni {:.4} | removals {} ({:.3} good) changes {} ({:.3} good) start@{:?} freeze@{:?}",
            res.baseline.as_ref().map_or(f64::NAN, |b| b.mean),
            res.rafni.mean,
            audit.total_removals,
            audit.pct_good_removals,
            audit.total_changes,
            audit.pct_good_changes,
            started,
            frozen,
        );
    }
    Ok(())
}

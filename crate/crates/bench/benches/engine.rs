use std::hint::black_box;

use aoi_starve_core::metrics::{simulate, ResetRule};
use aoi_starve_core::sim::{PhyModel, PhyOptions, SimOptions};
use aoi_starve_core::{AttackMode, Config};
use criterion::{criterion_group, criterion_main, Criterion};

fn scenario(mode: AttackMode, x: f64) -> Config {
    let mut c = Config::default();
    c.attack.mode = mode;
    c.attack.x = x;
    c.sim_duration_ms = 10_000;
    c
}

fn engine(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate_10s_n100");
    g.sample_size(20);
    for (name, mode, x, phy) in [
        ("benign_abstract", AttackMode::Off, 0.0, PhyModel::Abstract),
        ("probabilistic_0.9", AttackMode::Probabilistic, 0.9, PhyModel::Abstract),
        ("active_eve_0.9_collision", AttackMode::ActiveEve, 0.9, PhyModel::Collision),
    ] {
        let cfg = scenario(mode, x);
        let opts = SimOptions { phy: PhyOptions { model: phy, ..Default::default() }, ..Default::default() };
        g.bench_function(name, |b| {
            b.iter(|| simulate(black_box(&cfg), &opts, &[100, 120, 400], ResetRule::Latency).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, engine);
criterion_main!(benches);

//! Way reallocation: the time-based miss rate and the controller in a full run.

use cgrasim::kernel::*;
use cgrasim::oracle::{digest_of, pattern_image};
use cgrasim::reconfig::{model_hit_rates, time_miss_rate, SampleWindow, SampledAccess};
use cgrasim::sim::{Simulator, Variant};
use cgrasim::{Addr, Preset};

fn window(addrs: &[Addr], length: u64) -> SampleWindow {
    let mut w = SampleWindow::new(0, length, 1);
    for (i, &addr) in addrs.iter().enumerate() {
        w.record(0, SampledAccess { cycle: i as u64, addr, write: false });
    }
    w
}

#[test]
fn time_rate_depends_on_misses_not_accesses() {
    let cfg = Preset::Reconfig.config();
    // Every cold line is a miss; 4 KiB apart so none share a line.
    let cold: Vec<Addr> = (0..200).map(|i| 0x10_0000 + 4096 * i).collect();
    let mut mixed: Vec<Addr> = cold[..199].to_vec();
    mixed.extend(std::iter::repeat_n(0x4000, 801));
    let (m, c) = (window(&mixed, 4096), window(&cold, 4096));
    let rm = model_hit_rates::<f64>(&m, &cfg, 0, 8, 64).unwrap();
    let rc = model_hit_rates::<f64>(&c, &cfg, 0, 8, 64).unwrap();
    assert_eq!((rm.misses, rc.misses), (200, 200));
    assert_eq!(rm.rate, rc.rate);
    assert_eq!(rm.rate, 1.0 - 200.0 / 4096.0);
    let classic = |hits: u64, misses: u64| hits as f64 / (hits + misses) as f64;
    assert!(classic(rm.hits, rm.misses) - classic(rc.hits, rc.misses) >= 0.3);
    assert_eq!(time_miss_rate::<f32>(200, 4096).unwrap(), 200.0 / 4096.0);
}

#[test]
fn controller_moves_ways_to_the_random_stream() {
    let mut a = AccessPatternSpec::new(PatternKind::Linear, 0x4000, 4096);
    a.seed = 1;
    let mut b = AccessPatternSpec::new(PatternKind::RandomUniform, 0x10000, 16384);
    b.seed = 2;
    let len = 12_000;
    let k = gen_dual_pattern_kernel(&a, &b, len, 4, 4).unwrap();
    let want = digest_of(&pattern_image(&k, &[(&a, "data_a", "result_a"), (&b, "data_b", "result_b")], len));
    let cfg = Preset::Reconfig.config();

    let cache = Simulator::new(&k, &cfg, Variant::Cache).unwrap().run().unwrap();
    let mut sim = Simulator::new(&k, &cfg, Variant::Reconfig).unwrap();
    let re = sim.run().unwrap();
    assert_eq!(cache.image_digest, want);
    assert_eq!(re.image_digest, want);
    assert!(!sim.reconfigs.is_empty());
    let plan = &sim.reconfigs[0].plan;
    assert!(plan.ways[1] > plan.ways[0], "{plan:?}");
    assert!(plan.ways.iter().sum::<usize>() <= cfg.total_ways());
    assert!(re.total_cycles <= cache.total_cycles, "{} > {}", re.total_cycles, cache.total_cycles);
    assert_eq!(re.reconfigs, sim.reconfigs.len() as u64);
    assert!(re.reconfig_cycles >= 64);
}

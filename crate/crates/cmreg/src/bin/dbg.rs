// debug scratch: budget & scale levers on the weaker geometries
use cmreg::bench::bench_registration_config;
use cmreg::geometry::{catalog, ContactOracle};
use cmreg::manifold::{generate_manifold, SamplerConfig};
use cmreg::observe::{simulate_observations, ExplorationConfig};
use cmreg::pose::*;
use cmreg::registration::register;
use rand::{Rng, SeedableRng};

fn main() {
    for (name, t_obs, rs) in [
        ("lshape", 10.0, 0.25),
        ("lshape", 16.0, 0.25),
        ("lshape", 16.0, 0.4),
        ("twopin", 16.0, 0.25),
        ("eslot", 16.0, 0.25),
    ] {
        let oracle = ContactOracle::with_default_tolerances(catalog(name).unwrap()).unwrap();
        let mut mcfg = SamplerConfig::for_oracle(&oracle, 20_000, 42);
        mcfg.scale = MetricScale::new(rs);
        let m = generate_manifold(&oracle, &mcfg).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut fails = 0; let mut sum = 0.0; let mut worst: f64 = 0.0;
        let trials = 12u64;
        for trial in 0..trials {
            let truth = Pose6::new(
                rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0),
                rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
            let offset = Pose6::new(
                rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let init = compose(&truth, &offset);
            let mut ecfg = ExplorationConfig::for_geometry(oracle.spec(), t_obs, 100 + trial);
            ecfg.sigma_pos = 0.0; ecfg.sigma_rot = 0.0;
            let obs = match simulate_observations(&oracle, &truth, &ecfg) {
                Ok(o) => o, Err(e) => { println!("  {name} t{trial}: obs failed: {e}"); fails += 1; continue; }
            };
            let rcfg = bench_registration_config(&m, 1);
            let r = register(&m, &obs.poses, &init, &rcfg).unwrap();
            let e = pose_error(&r.estimate, &truth);
            let w = [e[0].abs(), e[1].abs(), e[3].abs(), e[4].abs(), e[5].abs()]
                .into_iter().fold(0.0f64, f64::max);
            worst = worst.max(w); sum += w;
            if w > 0.1 { fails += 1; }
        }
        println!("{name} t_obs={t_obs} rs={rs}: fails {fails}/{trials} mean {:.3} max {:.3}",
                 sum / trials as f64, worst);
    }
}

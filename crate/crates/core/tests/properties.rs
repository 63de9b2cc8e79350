use pfsi_core::checkpoint;
use pfsi_core::config::{parse_config, Preset, RunConfig};
use pfsi_core::forcing::NoForcing;
use pfsi_core::grid::ops::{divergence, mean_value};
use pfsi_core::par::with_threads;
use pfsi_core::presets::initial_state;
use pfsi_core::timeloop::{run_plain, step, DtPolicy};
use proptest::prelude::*;

fn small(preset: Preset, n: usize, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.grid.nx = n;
    cfg.grid.ny = n;
    cfg.initial.preset = preset;
    cfg.initial.seed = seed;
    cfg.initial.flow_speed = 0.5;
    cfg
}

fn preset_strategy() -> impl Strategy<Value = Preset> {
    prop_oneof![Just(Preset::Spinodal), Just(Preset::Bubble), Just(Preset::ChannelThrombus), Just(Preset::Smooth)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn coupled_steps_conserve_mass_and_stay_solenoidal(preset in preset_strategy(), n in 8usize..20, seed in 0u64..1000) {
        let cfg = small(preset, n, seed);
        let p = cfg.model_params();
        let mut s = initial_state(&cfg).unwrap();
        let m0 = mean_value(&s.phi);
        for _ in 0..5 {
            s = step(&s, &p, &cfg.step_control(), &NoForcing).unwrap().0;
            prop_assert!((mean_value(&s.phi) - m0).abs() < 1e-12);
            prop_assert!(divergence(&s.u).max_abs() <= 1e-8);
            prop_assert!(s.u.max_boundary_abs() == 0.0);
        }
    }

    #[test]
    fn config_echo_is_idempotent(nx in 4usize..200, lambda in 1e-3f64..10.0, dt in 1e-6f64..1e-2, seed in any::<u64>(), cfl in any::<bool>()) {
        let text = format!(
            "[grid]\nnx = {nx}\n\n[model]\nlambda = {lambda}\n\n[time]\ndt = {dt}\ndt_policy = \"{}\"\n\n[initial]\nseed = {seed}\n",
            if cfl { "cfl" } else { "fixed" }
        );
        let a = RunConfig::from_toml(&text).unwrap();
        let b = parse_config(&a.to_toml()).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.to_toml(), b.to_toml());
    }
}

#[test]
fn restart_from_checkpoint_is_bit_exact() {
    let cfg = small(Preset::Spinodal, 16, 3);
    let p = cfg.model_params();
    let mut settings = cfg.run_settings();
    settings.t_end = 0.02;
    settings.policy = DtPolicy::Fixed(1e-3);
    let s0 = initial_state(&cfg).unwrap();
    let whole = run_plain(s0.clone(), &p, &settings).unwrap().state;

    let mut first = settings;
    first.max_steps = Some(10);
    let mid = run_plain(s0, &p, &first).unwrap().state;
    let bytes = checkpoint::encode(&mid, &p);
    let (restored, p2) = checkpoint::decode(&bytes, std::path::Path::new("memory")).unwrap();
    assert_eq!(restored, mid);
    let resumed = run_plain(restored, &p2, &settings).unwrap().state;
    assert_eq!(resumed.n, whole.n);
    assert!(checkpoint::encode(&resumed, &p) == checkpoint::encode(&whole, &p));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let cfg = small(Preset::ChannelThrombus, 128, 1);
    let p = cfg.model_params();
    let go = || {
        let mut s = initial_state(&cfg).unwrap();
        for _ in 0..3 {
            s = step(&s, &p, &cfg.step_control(), &NoForcing).unwrap().0;
        }
        checkpoint::encode(&s, &p)
    };
    assert!(with_threads(1, go) == with_threads(4, go));
}

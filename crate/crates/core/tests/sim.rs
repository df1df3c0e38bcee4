use byzagg::attacks::{AttackConfig, AttackKind};
use byzagg::estimators::EstimatorKind;
use byzagg::sim::{
    local_update, plateau, run_experiment, theorem31_envelope, DeltaSource, ExperimentConfig, Simulation,
};
use byzagg::vector::ParamVector;

fn base(m: usize, n: usize, d: usize, eps: f64, rounds: usize) -> ExperimentConfig {
    ExperimentConfig::new(m, n, d, eps, rounds)
}

#[test]
fn zero_rounds_is_empty() {
    let out = run_experiment(&base(10, 5, 3, 0.1, 0)).unwrap();
    assert!(out.records.is_empty());
}

#[test]
fn noiseless_runs_reach_the_optimum() {
    for kind in EstimatorKind::ALL {
        let mut cfg = base(12, 4, 5, 0.0, 40);
        cfg.task.sigma = 0.0;
        cfg.estimator.kind = kind;
        // Sub-optimal step so the contraction is visible.
        cfg.experiment.step = Some(0.25);
        let out = run_experiment(&cfg).unwrap();
        let last = out.records.last().unwrap();
        assert!(last.param_err < 1e-9, "{kind:?}: {}", last.param_err);
        let r1 = out.records[0].param_err / out.w0_err;
        assert!((r1 - 0.5).abs() < 1e-12, "{kind:?}: rate {r1}");
    }
}

#[test]
fn honest_mean_run_has_zero_aggregation_error() {
    let mut cfg = base(9, 3, 4, 0.0, 5);
    cfg.task.sigma = 0.0;
    cfg.estimator.kind = EstimatorKind::Mean;
    for r in run_experiment(&cfg).unwrap().records {
        assert_eq!(r.agg_err, 0.0);
    }
}

#[test]
fn model_replacement_lands_on_projected_target() {
    let mut cfg = base(10, 5, 3, 0.1, 1);
    cfg.estimator.kind = EstimatorKind::Mean;
    cfg.attack = AttackConfig::new(AttackKind::Mra);
    cfg.task.sigma = 0.3;
    let mut sim = Simulation::new(&cfg).unwrap();
    let target = ParamVector::new(cfg.attack.target.clone().unwrap_or_else(|| {
        let mut t = sim.task.w_star.as_slice().to_vec();
        t[0] += 5.0;
        t
    }));
    let trace = sim.step().unwrap();
    // One malicious client boosted by m cancels the honest mass up to the
    // honest mean scaled by (m - 1) / m.
    let honest_ids: Vec<usize> = (0..10).filter(|&i| !sim.attack.is_malicious(i)).collect();
    let honest_sum = trace.honest.mean_of(&honest_ids).scaled(honest_ids.len() as f64 / 10.0);
    let w0 = ParamVector::zeros(3);
    let expected = sim.space.project(&w0.add(&target.sub(&w0)).add(&honest_sum)).unwrap();
    assert!(sim.w.distance(&expected) < 1e-9, "{:?} vs {:?}", sim.w, expected);
}

#[test]
fn two_local_steps_compose() {
    let mut cfg = base(6, 8, 3, 0.0, 1);
    cfg.experiment.h = 2;
    cfg.estimator.kind = EstimatorKind::Mean;
    let mut sim = Simulation::new(&cfg).unwrap();
    let w = sim.w.clone();
    let eta = sim.step_size(0);
    let trace = sim.step().unwrap();
    for i in 0..6 {
        let first = local_update(&sim.task, &w, &sim.client_data[i], eta, 1).unwrap();
        let mid = w.add(&first);
        let second = local_update(&sim.task, &mid, &sim.client_data[i], eta, 1).unwrap();
        let manual = first.add(&second);
        assert!(trace.honest.row_vector(i).distance(&manual) < 1e-12);
    }
}

#[test]
fn decaying_schedule_engages_with_local_steps() {
    let mut cfg = base(4, 2, 2, 0.0, 1);
    let sim = Simulation::new(&cfg).unwrap();
    assert_eq!(sim.step_size(0), 0.5);
    assert_eq!(sim.step_size(7), 0.5);
    cfg.experiment.h = 2;
    let sim = Simulation::new(&cfg).unwrap();
    // a = (L + lambda) / lambda = 2, eta_t = a / (L (t + a)).
    assert_eq!(sim.step_size(0), 0.5);
    assert_eq!(sim.step_size(2), 0.25);
}

#[test]
fn identical_seed_gives_identical_records() {
    let mut cfg = base(30, 5, 6, 0.2, 6);
    cfg.attack = AttackConfig::new(AttackKind::Ima);
    cfg.estimator.kind = EstimatorKind::NoRegret;
    let a = run_experiment(&cfg).unwrap().records;
    let b = run_experiment(&cfg).unwrap().records;
    assert_eq!(a, b);
    cfg.experiment.seed = 1;
    assert_ne!(run_experiment(&cfg).unwrap().records, a);
}

#[test]
fn iterates_stay_in_the_ball_and_rounds_are_ordered() {
    let mut cfg = base(20, 5, 4, 0.3, 8);
    cfg.attack = AttackConfig::new(AttackKind::Ima);
    cfg.attack.scale = Some(1e4);
    cfg.estimator.kind = EstimatorKind::Mean;
    let mut sim = Simulation::new(&cfg).unwrap();
    for t in 1..=8 {
        let r = sim.run_round().unwrap();
        assert_eq!(r.round, t);
        assert!(sim.space.contains(&sim.w));
        assert!(r.param_err.is_finite() && r.param_err >= 0.0);
    }
}

#[test]
fn secure_mode_matches_plaintext_up_to_quantization() {
    let mut cfg = base(40, 5, 8, 0.2, 3);
    // Sign flipping keeps every upload inside the adaptive clip range.
    cfg.attack = AttackConfig::new(AttackKind::SignFlip);
    cfg.estimator.kind = EstimatorKind::Bucketing;
    let mut plain = Simulation::new(&cfg).unwrap();
    cfg.secure.enabled = true;
    let mut secure = Simulation::new(&cfg).unwrap();
    let a = plain.step().unwrap();
    let b = secure.step().unwrap();
    assert_eq!(a.buckets, b.buckets);
    assert!(b.transcripts.iter().all(|t| t.cancels(cfg.secure.modulus)));
    let q = cfg.secure.quantizer(secure.sigma_h, a.eta, 8);
    let step = 2.0 * q.clip / (q.levels - 1) as f64;
    assert!(a.uploads.as_flat().iter().all(|x| x.abs() <= q.clip));
    for (x, y) in a.estimator_input.as_flat().iter().zip(b.estimator_input.as_flat()) {
        assert!((x - y).abs() <= 0.5 * step + 1e-12);
    }
    assert!(a.aggregate.distance(&b.aggregate) < 0.05 * a.aggregate.norm());
}

#[test]
fn server_sees_only_masked_uploads() {
    let mut cfg = base(12, 5, 4, 0.2, 1);
    cfg.estimator.kind = EstimatorKind::Bucketing;
    cfg.experiment.k = Some(3);
    cfg.secure.enabled = true;
    let mut sim = Simulation::new(&cfg).unwrap();
    let trace = sim.step().unwrap();
    for (t, (masked, _)) in trace.transcripts.iter().zip(trace.server_view()) {
        for (plain, seen) in t.quantized.iter().zip(masked) {
            assert_ne!(plain, seen);
        }
    }
}

#[test]
fn oversized_buckets_are_config_errors() {
    let mut cfg = base(40, 5, 4, 0.2, 1);
    cfg.estimator.kind = EstimatorKind::Bucketing;
    cfg.experiment.k = Some(2);
    cfg.secure.enabled = true;
    cfg.secure.modulus = 1 << 20;
    cfg.secure.levels = 1 << 16;
    assert!(matches!(Simulation::new(&cfg), Err(byzagg::Error::Config(_))));
}

#[test]
fn lower_bound_adversary_controls_atom_holders() {
    let mut cfg = base(50, 10, 2, 0.2, 2);
    cfg.attack = AttackConfig::new(AttackKind::LowerBound);
    let sim = Simulation::new(&cfg).unwrap();
    let alt = sim.alt_data.as_ref().unwrap();
    assert!(!sim.attack.malicious_ids.is_empty());
    assert!(sim.attack.malicious_ids.len() <= 10);
    for &i in &sim.attack.malicious_ids {
        assert_ne!(sim.client_data[i], alt[i]);
    }
    for i in (0..50).filter(|&i| sim.client_data[i] == alt[i]) {
        assert!(!sim.attack.is_malicious(i));
    }
}

#[test]
fn label_noise_uses_flipped_data() {
    let mut cfg = base(20, 5, 3, 0.2, 3);
    cfg.attack = AttackConfig::new(AttackKind::LabelNoise);
    cfg.estimator.kind = EstimatorKind::Mean;
    let mut sim = Simulation::new(&cfg).unwrap();
    let trace = sim.step().unwrap();
    let i = sim.attack.malicious_ids[0];
    let w0 = ParamVector::zeros(3);
    let flipped = local_update(&sim.task, &w0, &sim.alt_data.as_ref().unwrap()[i], trace.eta, 1).unwrap();
    assert_eq!(trace.uploads.row(i), flipped.as_slice());
}

#[test]
fn filtering_envelope_holds_under_ima() {
    let mut cfg = base(100, 20, 32, 0.2, 40);
    cfg.attack = AttackConfig::new(AttackKind::Ima);
    let out = run_experiment(&cfg).unwrap();
    let rep = theorem31_envelope(&out.records, 2.0, 2.0, out.w0_err, DeltaSource::StepErr, 0.1);
    assert_eq!(rep.violations(), 0, "{:?}", rep.violating_rounds);
    assert!(plateau(&out.records) < 0.5);
}

#[test]
fn estimator_failure_is_flagged_and_run_continues() {
    let mut cfg = base(10, 5, 3, 0.2, 3);
    cfg.estimator.kind = EstimatorKind::Bulyan;
    cfg.attack = AttackConfig::new(AttackKind::Ima);
    // Bulyan needs m >= 4 f + 3.
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.records.len(), 3);
    assert!(out.records.iter().all(|r| r.estimator_failed && !r.converged));
    assert!((out.records[2].param_err - out.w0_err).abs() < 1e-12);
}

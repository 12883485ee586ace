use liteupdate_core::pipeline::{
    evaluate, finetune_random, lite_update, lite_update_multi, pretrain, random_update_set, select_buffer,
};
use liteupdate_core::select::assemble_representative;
use liteupdate_core::synth::render;
use liteupdate_core::{Activation, Architecture, GeneratorSpec, Label, Origin, UpdatePlan};

fn small_plan(seed: u64) -> UpdatePlan {
    UpdatePlan {
        arch: Architecture::new(vec![256, 16, 8, 2], Activation::Tanh).unwrap(),
        n: 60,
        train_per_class: 150,
        test_per_class: 60,
        ..UpdatePlan::default().with_seed(seed)
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn update_is_identical_across_thread_counts() {
    let plan = small_plan(3);
    let g_old = GeneratorSpec::default_old();
    let g_new = &GeneratorSpec::default_new()[1];
    let run = || {
        let theta0 = pretrain(&g_old, &plan, plan.seed).unwrap();
        lite_update(&theta0, &g_old, g_new, &plan).unwrap()
    };
    let one = in_pool(1, run);
    let four = in_pool(4, run);
    assert_eq!(one, four);
    assert_eq!(one, run());
}

#[test]
fn zero_merge_weight_returns_pretrained_detector() {
    let plan = UpdatePlan { k: 0.0, ..small_plan(1) };
    let g_old = GeneratorSpec::default_old();
    let theta0 = pretrain(&g_old, &plan, 1).unwrap();
    let b = lite_update(&theta0, &g_old, &GeneratorSpec::default_new()[0], &plan).unwrap();
    assert_eq!(b.theta_new, theta0);
    assert_ne!(b.theta1, theta0);
    assert_ne!(b.theta2, theta0);
}

#[test]
fn zero_epoch_fine_tunes_leave_weights_alone() {
    let mut plan = small_plan(2);
    let g_old = GeneratorSpec::default_old();
    let theta0 = pretrain(&g_old, &plan, 2).unwrap();
    plan.finetune.epochs = 0;
    let b = lite_update(&theta0, &g_old, &GeneratorSpec::default_new()[0], &plan).unwrap();
    assert_eq!(b.theta1, theta0);
    assert_eq!(b.theta2, theta0);
    for (m, w) in b.theta_new.weights().iter().zip(theta0.weights()) {
        assert!((m - w).abs() <= 1e-15 * w.abs().max(1.0));
    }
    plan.pretrain.epochs = 0;
    let init = pretrain(&g_old, &plan, 2).unwrap();
    assert_eq!(init, pretrain(&g_old, &plan, 2).unwrap());
    assert_ne!(init, theta0);
}

#[test]
fn representative_set_regenerates_from_the_same_content() {
    let plan = small_plan(4);
    let g_old = GeneratorSpec::default_old();
    let g_new = &GeneratorSpec::default_new()[2];
    let theta0 = pretrain(&g_old, &plan, 4).unwrap();
    let pool = plan.training_pool(&g_old).unwrap();
    let buffer = select_buffer(&theta0, &pool, &plan).unwrap();
    let rep = assemble_representative(&buffer, &pool, g_new).unwrap();

    let members: Vec<_> = buffer.ids().map(|id| &pool.samples[id]).collect();
    let gen_members: Vec<_> = members.iter().filter(|s| s.label == Label::Generated).collect();
    assert_eq!(rep.len(), buffer.len());
    assert_eq!(rep.regenerated_samples.len(), gen_members.len());
    for (r, m) in rep.regenerated_samples.iter().zip(&gen_members) {
        assert_eq!(*r, render(g_new, m.content));
        assert_eq!(r.origin, Origin::Generated(g_new.version_id.clone()));
    }
    let reals: Vec<_> = members.iter().filter(|s| s.label == Label::Real).map(|s| (*s).clone()).collect();
    assert_eq!(rep.real_samples, reals);
}

#[test]
fn random_update_set_is_half_new_renders() {
    let gens = GeneratorSpec::default_new();
    let set = random_update_set(&gens[..1], 10, 7).unwrap();
    assert_eq!(set.len(), 10);
    assert_eq!(set.iter().filter(|s| s.origin == Origin::Generated("gen-v2".into())).count(), 5);
    assert_eq!(set.iter().filter(|s| s.origin == Origin::Real).count(), 5);
    let multi = random_update_set(&gens, 16, 7).unwrap();
    for g in &gens {
        assert_eq!(multi.iter().filter(|s| s.origin.as_str() == g.version_id).count(), 2);
    }
    assert_eq!(set, random_update_set(&gens[..1], 10, 7).unwrap());
}

#[test]
fn multi_update_spreads_regenerations_over_generators() {
    let plan = small_plan(5);
    let g_old = GeneratorSpec::default_old();
    let gens = GeneratorSpec::default_new();
    let theta0 = pretrain(&g_old, &plan, 5).unwrap();
    let b = lite_update_multi(&theta0, &g_old, &gens, &plan).unwrap();
    assert!(b.notes.iter().any(|n| n.contains("gen-v2+gen-v3+gen-v4+gen-v5")));
    assert!(lite_update_multi(&theta0, &g_old, &[], &plan).is_err());
}

#[test]
fn evaluation_is_seeded_and_bounded() {
    let plan = small_plan(6);
    let g_old = GeneratorSpec::default_old();
    let theta0 = pretrain(&g_old, &plan, 6).unwrap();
    let sets = vec![
        ("gen-v1".to_string(), plan.test_set(&g_old).unwrap()),
        ("gen-v2".to_string(), plan.test_set(&GeneratorSpec::default_new()[0]).unwrap()),
    ];
    let a = evaluate(&theta0, &sets, 6).unwrap();
    assert_eq!(a, evaluate(&theta0, &sets, 6).unwrap());
    assert!(a.accuracies.iter().all(|(_, x)| (0.0..=100.0).contains(x)));
    assert!((a.mean - (a.accuracies[0].1 + a.accuracies[1].1) / 2.0).abs() < 1e-12);
    assert!(evaluate(&theta0, &[], 6).is_err());
}

#[test]
fn mismatched_inputs_are_rejected() {
    let plan = small_plan(7);
    let g_old = GeneratorSpec::default_old();
    let other = pretrain(&g_old, &UpdatePlan { arch: Architecture::new(vec![256, 4, 2], Activation::Tanh).unwrap(), ..plan.clone() }, 7)
        .unwrap();
    assert!(lite_update(&other, &g_old, &GeneratorSpec::default_new()[0], &plan).is_err());
    assert!(finetune_random(&other, &GeneratorSpec::default_new()[0], 0, &plan, 7).is_err());
    let bad = UpdatePlan { k: 0.7, ..plan };
    assert!(pretrain(&g_old, &bad, 7).is_err());
}

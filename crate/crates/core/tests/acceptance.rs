//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line (run with `--nocapture` to see them on success).

use std::time::Instant;

use dpcert_core::bounds::{
    maxinfo_dpsgd_explicit, maxinfo_dpsgd_optimized, maxinfo_gaussian_mechanism, ratio_r,
    tau_closed_form, tau_grid_minimized, BoundMethod, TrainingRecipe,
};
use dpcert_core::dpsgd::{clip, dpsgd_batch, dpsgd_trace, UpdateRule};
use dpcert_core::models::{loss_and_gradient, loss_value, BoundedLoss, ModelSpec};
use dpcert_core::oracle::{validate_bound, Mechanism, StatisticKind, TinyInstance};
use dpcert_core::pac_bayes::{binary_kl, kl_inverse, pinsker_gap};
use dpcert_core::{data, rng};

use rand::Rng;

fn pass(name: &str) {
    println!("acceptance: {name} ... PASS");
}

#[test]
fn ratio_lemma_values() {
    let started = Instant::now();

    let v = ratio_r(3.0, 0.5).unwrap();
    assert!(
        (1.94..=1.96).contains(&v),
        "acceptance: ratio_lemma_values ... FAIL (R(3,0.5) = {v}, expected in [1.94,1.96])"
    );

    // Monotonicity in both arguments on a 50x50 grid over (0,3] x (0,1/2].
    let n = 50;
    for i in 1..=n {
        for j in 1..=n {
            let alpha = 3.0 * i as f64 / n as f64;
            let beta = 0.5 * j as f64 / n as f64;
            let v = ratio_r(alpha, beta).unwrap();
            if i > 1 {
                let left = ratio_r(3.0 * (i - 1) as f64 / n as f64, beta).unwrap();
                assert!(v > left, "R not increasing in alpha at ({alpha},{beta})");
            }
            if j > 1 {
                let below = ratio_r(alpha, 0.5 * (j - 1) as f64 / n as f64).unwrap();
                assert!(v > below, "R not increasing in beta at ({alpha},{beta})");
            }
        }
    }

    assert!(started.elapsed().as_secs_f64() < 1.0, "ratio lemma checks exceeded 1 s");

    // Limit check as stated: R(1e-9, 1e-12) in (0.25, 0.27). The limit of
    // R(alpha -> 0, beta -> 0) is 1/4, but convergence is
    // O(1/sqrt(log(1/beta))): the computed value at these arguments is
    // ~0.3693, and R does not drop below 0.27 until beta ~ 1e-300. The
    // assertion is kept exactly as stated and is expected to fail.
    let v = ratio_r(1e-9, 1e-12).unwrap();
    assert!(
        v > 0.25 && v < 0.27,
        "acceptance: ratio_lemma_values ... FAIL (R(1e-9,1e-12) = {v:.6}, stated interval \
         (0.25, 0.27) is unattainable: the 1/4 limit is approached at rate \
         1/sqrt(log(1/beta)), so R stays above 0.27 for every beta down to ~1e-300)"
    );

    pass("ratio_lemma_values");
}

#[test]
fn appendix_numeric_constant() {
    // log(1.25)/sqrt(log 2) + log(1.25) - 3 - sqrt(log 2) - log 2
    let c = 1.25f64.ln() / 2f64.ln().sqrt() + 1.25f64.ln() - 3.0 - 2f64.ln().sqrt() - 2f64.ln();
    assert!(
        (-4.05..=-4.01).contains(&c),
        "acceptance: appendix_numeric_constant ... FAIL (got {c}, expected in [-4.05,-4.01])"
    );
    pass("appendix_numeric_constant");
}

#[test]
fn dominance_suite() {
    let started = Instant::now();
    let mut gen = rng::stream(101, "acceptance-dominance");
    for case in 0..1000 {
        let e = gen.random_range(1..=8u32);
        let t = gen.random_range(1..=32u32);
        let m = gen.random_range(1..=256u32);
        let zeta = 10f64.powf(gen.random_range(-3.0..0.5));
        let sigma = 10f64.powf(gen.random_range(-1.0..1.5));
        let beta = gen.random_range(0.001..0.999f64);
        let recipe = TrainingRecipe {
            epochs: e,
            steps_per_epoch: t,
            batch_size: m,
            clip_threshold: zeta,
            noise_scale: sigma,
            dataset_size: t * m,
        };
        let opt = maxinfo_dpsgd_optimized(&recipe, beta).unwrap().value;
        let exp = maxinfo_dpsgd_explicit(&recipe, beta).unwrap().value;
        assert!(
            opt <= exp,
            "acceptance: dominance_suite ... FAIL (case {case}: optimized {opt} > explicit {exp})"
        );
        let nu = recipe.noise_ratio().unwrap();
        let tau_grid = tau_grid_minimized(t, nu, beta).unwrap();
        let tau_closed = tau_closed_form(t, nu, beta).unwrap();
        assert!(
            tau_grid <= tau_closed * (1.0 + 1e-12),
            "acceptance: dominance_suite ... FAIL (case {case}: tau grid {tau_grid} > closed {tau_closed})"
        );
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "dominance suite took {elapsed:.2} s, budget 5 s");
    pass("dominance_suite");
}

#[test]
fn composition_identity() {
    let mut gen = rng::stream(103, "acceptance-composition");
    for case in 0..200 {
        let e = gen.random_range(2..=20u32);
        let t = gen.random_range(1..=24u32);
        let m = gen.random_range(1..=128u32);
        let zeta = 10f64.powf(gen.random_range(-3.0..0.0));
        let sigma = 10f64.powf(gen.random_range(-0.5..1.0));
        let beta = gen.random_range(0.001..0.99f64);
        let multi = TrainingRecipe {
            epochs: e,
            steps_per_epoch: t,
            batch_size: m,
            clip_threshold: zeta,
            noise_scale: sigma,
            dataset_size: t * m,
        };
        let single = TrainingRecipe { epochs: 1, ..multi };
        let lhs = maxinfo_dpsgd_optimized(&multi, beta).unwrap().value;
        let rhs =
            f64::from(e) * maxinfo_dpsgd_optimized(&single, beta / f64::from(e)).unwrap().value;
        let rel = (lhs - rhs).abs() / rhs.max(f64::MIN_POSITIVE);
        assert!(
            rel <= 1e-9,
            "acceptance: composition_identity ... FAIL (case {case}: E={e}: {lhs} vs E*kappa(1,beta/E)={rhs}, rel {rel:.2e})"
        );
    }
    pass("composition_identity");
}

fn single_shot_instance() -> TinyInstance {
    TinyInstance {
        mechanism: Mechanism::SingleShot,
        domain: vec![-1.0, 1.0],
        probs: None,
        n: 2,
        zeta: 1.0,
        sigma: 5.0,
        statistic: StatisticKind::Identity,
        sensitivity: Some(1.0),
        batch_size: None,
        steps_per_epoch: None,
        epochs: None,
        learning_rate: None,
        theta0: None,
    }
}

#[test]
fn oracle_gaussian_mechanism_tail() {
    let started = Instant::now();
    let instance = single_shot_instance();
    for seed in 0..20u64 {
        let report = validate_bound(
            &instance,
            BoundMethod::GaussianSingle,
            0.05,
            100_000,
            1000 + seed,
            1.0,
        )
        .unwrap();
        assert!(
            report.passed,
            "acceptance: oracle_gaussian_mechanism_tail ... FAIL (seed {seed}: tail {} > beta + radius {})",
            report.estimate.tail,
            report.beta + report.estimate.radius
        );
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "20-seed oracle run took {elapsed:.1} s, budget 60 s");
    pass("oracle_gaussian_mechanism_tail");
}

#[test]
fn oracle_dpsgd_chain_tail() {
    let started = Instant::now();
    let instance = TinyInstance {
        mechanism: Mechanism::DpsgdChain,
        domain: vec![-1.0, 1.0],
        probs: None,
        n: 4,
        zeta: 1.0,
        sigma: 4.0,
        statistic: StatisticKind::Residual,
        sensitivity: None,
        batch_size: Some(2),
        steps_per_epoch: Some(2),
        epochs: Some(1),
        learning_rate: Some(0.25),
        theta0: Some(0.0),
    };
    let report =
        validate_bound(&instance, BoundMethod::Optimized, 0.1, 100_000, 77, 1.0).unwrap();
    assert!(
        report.passed,
        "acceptance: oracle_dpsgd_chain_tail ... FAIL (tail {} > beta + radius {})",
        report.estimate.tail,
        report.beta + report.estimate.radius
    );
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "chain oracle took {elapsed:.1} s, budget 120 s");
    pass("oracle_dpsgd_chain_tail");
}

#[test]
fn kl_inversion() {
    let mut gen = rng::stream(107, "acceptance-klinv");
    for case in 0..10_000 {
        let q: f64 = gen.random();
        let b: f64 = gen.random_range(0.0..2.0);
        let p = kl_inverse(q, b).unwrap();
        let pg = pinsker_gap(q, b).unwrap();
        assert!(
            pg >= p - 1e-12,
            "acceptance: kl_inversion ... FAIL (case {case}: pinsker {pg} < kl_inverse {p})"
        );
        if b > 0.0 && p < 1.0 {
            let back = binary_kl(q, p).unwrap();
            assert!(back <= b, "case {case}: kl({q},{p}) = {back} exceeds budget {b}");
            // interior means away from the p -> 1 edge, where adjacent f64
            // values of p are farther apart than 1e-8 in kl
            if p <= 1.0 - 1e-7 {
                assert!(
                    back >= b - 1e-8,
                    "acceptance: kl_inversion ... FAIL (case {case}: kl({q},{p}) = {back} < {})",
                    b - 1e-8
                );
            }
        }
    }
    for q in [0.0, 0.135, 0.5, 0.82, 1.0] {
        assert_eq!(kl_inverse(q, 0.0).unwrap(), q, "kl_inverse(q,0) must equal q exactly");
    }
    pass("kl_inversion");
}

/// Independent forward pass returning the smallest |pre-activation| over
/// the hidden layers, used to exclude ReLU-kink points by construction.
/// Parameter layout: per layer a row-major weight matrix then biases.
fn smallest_hidden_margin(sizes: &[usize], params: &[f64], x: &[f64]) -> f64 {
    let mut margin = f64::INFINITY;
    let mut activation = x.to_vec();
    let mut offset = 0usize;
    for (l, w) in sizes.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let mut z = vec![0.0f64; fan_out];
        for (j, zj) in z.iter_mut().enumerate() {
            *zj = params[offset + fan_in * fan_out + j];
            for (k, a) in activation.iter().enumerate() {
                *zj += params[offset + j * fan_in + k] * a;
            }
        }
        offset += fan_in * fan_out + fan_out;
        let last = l + 2 == sizes.len();
        if !last {
            for zj in z.iter_mut() {
                margin = margin.min(zj.abs());
                *zj = zj.max(0.0);
            }
        }
        activation = z;
    }
    margin
}

#[test]
fn gradient_correctness() {
    // central finite differences, step 1e-5, at 100 random non-kink
    // points per architecture; the clamp never binds at c_max = 50
    let specs: [(ModelSpec, Vec<usize>); 2] = [
        (ModelSpec::linear(4, 3), vec![4, 3]),
        (ModelSpec::mlp(3, vec![8, 6], 3), vec![3, 8, 6, 3]),
    ];
    let loss = BoundedLoss::ClampedCrossEntropy { c_max: 50.0 };
    let h = 1e-5;
    for (si, (spec, sizes)) in specs.iter().enumerate() {
        let mut accepted = 0usize;
        let mut seed = 5000 + 1000 * si as u64;
        while accepted < 100 {
            seed += 1;
            let params = spec.init_params(seed, None);
            let mut gen = rng::stream(seed, "acceptance-gradcheck");
            let x: Vec<f64> =
                (0..spec.input_dim).map(|_| gen.random_range(-2.0..2.0)).collect();
            let y = gen.random_range(0..spec.classes);
            // kink points excluded by construction of the test points
            if smallest_hidden_margin(sizes, &params, &x) < 1e-3 {
                continue;
            }
            let (_, analytic) = loss_and_gradient(spec, &params, &x, y, &loss).unwrap();
            let norm = analytic.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm < 1e-5 {
                continue; // avoid vanishing-gradient points
            }
            let mut numeric = vec![0.0; params.len()];
            let mut work = params.clone();
            for i in 0..params.len() {
                work[i] = params[i] + h;
                let up = loss_value(spec, &work, &x, y, &loss).unwrap();
                work[i] = params[i] - h;
                let dn = loss_value(spec, &work, &x, y, &loss).unwrap();
                work[i] = params[i];
                numeric[i] = (up - dn) / (2.0 * h);
            }
            let diff = analytic
                .iter()
                .zip(&numeric)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let rel = diff / norm;
            assert!(
                rel < 1e-5,
                "acceptance: gradient_correctness ... FAIL (arch {si}, seed {seed}: rel err {rel:.2e})"
            );
            accepted += 1;
        }
    }
    pass("gradient_correctness");
}

#[test]
fn dpsgd_mechanics() {
    let data = data::synth_dataset(data::SynthKind::TwoGaussians { separation: 2.0 }, 64, 3, 5)
        .unwrap();
    let spec = ModelSpec::linear(3, 2);
    let loss = BoundedLoss::ClampedCrossEntropy { c_max: 4.0 };
    let zeta = 0.05;
    let recipe = TrainingRecipe {
        epochs: 3,
        steps_per_epoch: 4,
        batch_size: 8,
        clip_threshold: zeta,
        noise_scale: 0.5,
        dataset_size: 64,
    };
    let rule = UpdateRule::plain(0.1);
    let theta0 = spec.init_params(9, None);
    let grad_fn = |params: &[f64], i: usize| {
        loss_and_gradient(&spec, params, &data.features[i], data.labels[i], &loss)
            .map(|(_, g)| g)
    };

    let trace = dpsgd_trace(&recipe, &rule, grad_fn, theta0.clone(), 31).unwrap();
    let trace2 = dpsgd_trace(&recipe, &rule, grad_fn, theta0.clone(), 31).unwrap();
    assert_eq!(trace, trace2, "acceptance: dpsgd_mechanics ... FAIL (traces not bit-identical)");

    // batch output equals the final streamed parameters
    let batch_out = dpsgd_batch(&recipe, &rule, grad_fn, theta0.clone(), 31).unwrap();
    assert_eq!(
        trace.final_params(),
        batch_out.as_slice(),
        "acceptance: dpsgd_mechanics ... FAIL (stream/batch mismatch)"
    );

    // batch plans: disjoint, size-m, and the clipped per-sample gradient
    // norms stay within zeta at every recorded step (recomputed from the
    // trace)
    let t = recipe.steps_per_epoch as usize;
    assert_eq!(trace.plans.len(), recipe.epochs as usize);
    for (e, plan) in trace.plans.iter().enumerate() {
        let mut seen = std::collections::HashSet::new();
        for (s, batch) in plan.batches.iter().enumerate() {
            assert_eq!(batch.len(), recipe.batch_size as usize);
            for &i in batch {
                assert!(seen.insert(i), "index {i} reused within epoch {e}");
            }
            let g = e * t + s;
            let theta_prev: &[f64] =
                if g == 0 { &trace.theta0 } else { &trace.params[g - 1] };
            for &i in batch {
                let raw = grad_fn(theta_prev, i).unwrap();
                let clipped = clip(&raw, zeta).unwrap();
                let norm = clipped.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!(
                    norm <= zeta * (1.0 + 1e-12),
                    "acceptance: dpsgd_mechanics ... FAIL (clipped norm {norm} > {zeta} at step {g})"
                );
            }
        }
    }
    pass("dpsgd_mechanics");
}

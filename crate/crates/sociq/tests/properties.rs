//! Property suites for the analytic layer and the queue recursion.

use proptest::prelude::*;
use sociq::effective::{
    effective_bandwidth, effective_capacity, predicted_tail, solve_theta, target_theta,
    QoSExponent,
};
use sociq::processes::ProcessSpec;
use sociq::queueing::{inverse_transform, simulate_queue, step_queue, QueueConfig};
use sociq::rng::StreamSeed;
use sociq::social::{effective_outage_threshold, loan_limit, CreditAccount, LoanPolicy};

const REL_TOL: f64 = 1e-9;

fn tol(x: f64) -> f64 {
    REL_TOL * x.abs().max(1.0)
}

fn two_state_markov() -> impl Strategy<Value = ProcessSpec> {
    (
        0.05..0.95f64,
        0.05..0.95f64,
        0.0..3.0f64,
        0.0..3.0f64,
    )
        .prop_map(|(p01, p10, r0, r1)| ProcessSpec::MarkovModulated {
            transition: vec![vec![1.0 - p01, p01], vec![p10, 1.0 - p10]],
            rate_per_state: vec![r0, r1],
        })
}

fn analytic_spec() -> impl Strategy<Value = ProcessSpec> {
    prop_oneof![
        (0.0..5.0f64).prop_map(|rate| ProcessSpec::Constant { rate }),
        (0.1..4.0f64, 0.05..0.95f64)
            .prop_map(|(batch, prob)| ProcessSpec::BernoulliBatch { batch, prob }),
        proptest::collection::vec(0.0..5.0f64, 1..6)
            .prop_map(|support| ProcessSpec::DiscreteUniform { support }),
        (0.05..3.0f64).prop_map(|mean| ProcessSpec::Poisson { mean }),
        two_state_markov(),
    ]
}

proptest! {
    // Effective bandwidth grows with the QoS exponent, effective capacity
    // shrinks, and the mean sits between them at every exponent.
    #[test]
    fn bandwidth_capacity_monotone_and_ordered(
        spec in analytic_spec(),
        thetas in proptest::collection::vec(1e-4..50.0f64, 2..6),
    ) {
        let mean = spec.mean_rate().unwrap();
        let mut sorted = thetas;
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut prev: Option<(f64, f64)> = None;
        for &theta in &sorted {
            let eb = effective_bandwidth(&spec, theta).unwrap();
            let ec = effective_capacity(&spec, theta).unwrap();
            prop_assert!(eb >= mean - tol(mean), "E_B {eb} below mean {mean}");
            prop_assert!(ec <= mean + tol(mean), "E_C {ec} above mean {mean}");
            if let Some((peb, pec)) = prev {
                prop_assert!(eb >= peb - tol(eb), "E_B not nondecreasing: {peb} -> {eb}");
                prop_assert!(ec <= pec + tol(ec), "E_C not nonincreasing: {pec} -> {ec}");
            }
            prev = Some((eb, ec));
        }
    }

    // A deterministic rate is its own bandwidth and capacity at any exponent.
    #[test]
    fn constant_is_self_dual(rate in 0.0..10.0f64, theta in 1e-4..100.0f64) {
        let spec = ProcessSpec::Constant { rate };
        prop_assert!((effective_bandwidth(&spec, theta).unwrap() - rate).abs() <= tol(rate));
        prop_assert!((effective_capacity(&spec, theta).unwrap() - rate).abs() <= tol(rate));
    }

    // Both functionals approach the mean rate as the exponent vanishes.
    #[test]
    fn small_theta_recovers_mean(spec in analytic_spec()) {
        let mean = spec.mean_rate().unwrap();
        let eb = effective_bandwidth(&spec, 1e-8).unwrap();
        let ec = effective_capacity(&spec, 1e-8).unwrap();
        prop_assert!((eb - mean).abs() <= 1e-6 * mean.abs().max(1.0));
        prop_assert!((ec - mean).abs() <= 1e-6 * mean.abs().max(1.0));
    }

    // Bounded specs keep both functionals inside the support range.
    #[test]
    fn bounded_by_support_range(spec in analytic_spec(), theta in 1e-4..50.0f64) {
        if let Some(max) = spec.max_rate() {
            let eb = effective_bandwidth(&spec, theta).unwrap();
            prop_assert!(eb <= max + tol(max));
        }
        let min = spec.min_rate();
        let ec = effective_capacity(&spec, theta).unwrap();
        prop_assert!(ec >= min - tol(min));
    }

    // A finite root really equates bandwidth and capacity, at a positive
    // exponent, and the predicted tail decays in the backlog level.
    #[test]
    fn solved_exponent_balances_the_functionals(
        arrival in analytic_spec(),
        departure in analytic_spec(),
    ) {
        let (ma, mr) = (arrival.mean_rate().unwrap(), departure.mean_rate().unwrap());
        prop_assume!(ma + 0.05 < mr);
        match solve_theta(&arrival, &departure) {
            Ok(QoSExponent::Finite { theta }) => {
                prop_assert!(theta > 0.0);
                let eb = effective_bandwidth(&arrival, theta).unwrap();
                let ec = effective_capacity(&departure, theta).unwrap();
                prop_assert!((eb - ec).abs() <= 1e-6 * eb.abs().max(1.0), "gap at root: {eb} vs {ec}");
                let exponent = QoSExponent::finite(theta);
                let p1 = predicted_tail(&exponent, 1.0).unwrap();
                let p5 = predicted_tail(&exponent, 5.0).unwrap();
                prop_assert!(p1 < 1.0 && p5 < p1);
            }
            Ok(QoSExponent::DeterministicInfinite) => {
                prop_assert!(arrival.is_degenerate() && departure.is_degenerate());
            }
            Err(sociq::Error::NoFiniteRoot { .. }) => {}
            other => prop_assert!(false, "unexpected outcome {other:?}"),
        }
    }

    // The target exponent inverts the predicted tail back to delta.
    #[test]
    fn target_theta_inverts_delta(
        c_max in 10.0..500.0f64,
        frac in 0.05..0.95f64,
        delta in 1e-6..0.1f64,
    ) {
        let c_th = frac * c_max;
        let theta = target_theta(c_max, c_th, delta).unwrap();
        let theta = theta.theta().unwrap();
        let tail = predicted_tail(&QoSExponent::finite(theta), c_max - c_th).unwrap();
        prop_assert!((tail - delta).abs() <= 1e-9 * delta);
    }

    // One queue step stays inside [0, c_max], moves monotonically with the
    // inflow and against the outflow, and is 1-Lipschitz in the prior level.
    #[test]
    fn queue_step_shape(
        q in 0.0..200.0f64,
        dq in 0.0..5.0f64,
        a in 0.0..20.0f64,
        da in 0.0..5.0f64,
        r in 0.0..20.0f64,
        dr in 0.0..5.0f64,
        c_max in 1.0..200.0f64,
    ) {
        let base = step_queue(q.min(c_max), a, r, c_max);
        prop_assert!((0.0..=c_max).contains(&base));
        prop_assert!(step_queue((q + dq).min(c_max), a, r, c_max) >= base);
        prop_assert!(step_queue(q.min(c_max), a + da, r, c_max) >= base);
        prop_assert!(step_queue(q.min(c_max), a, r + dr, c_max) <= base);
        let shifted = step_queue((q + dq).min(c_max), a, r, c_max);
        prop_assert!(shifted - base <= dq + 1e-12);
    }

    // On a dyadic lattice the low-credit event and the transformed
    // budget-overflow event coincide exactly, and the transform involutes.
    #[test]
    fn inverse_event_identity_on_lattice(
        c_max_ticks in 2u64..(1u64 << 27),
        q_num in 0u64..=1u64 << 27,
        th_num in 1u64..1u64 << 27,
    ) {
        let tick = (2f64).powi(-20);
        let c_max = c_max_ticks as f64 * tick;
        let q = (q_num % (c_max_ticks + 1)) as f64 * tick;
        let c_th = (1 + th_num % (c_max_ticks - 1)) as f64 * tick;
        let inv = inverse_transform(q, c_max).unwrap();
        prop_assert_eq!(q < c_th, inv > c_max - c_th);
        prop_assert_eq!(inverse_transform(inv, c_max).unwrap(), q);
    }

    // Simulation is the fold of the one-step recursion, and a pointwise
    // larger arrival trace never yields a lower queue anywhere.
    #[test]
    fn simulation_matches_manual_fold(
        arrival in analytic_spec(),
        departure in analytic_spec(),
        bump in 0.0..2.0f64,
        seed in any::<u64>(),
        n in 3usize..60,
        c_max in 1.0..50.0f64,
        q0_frac in 0.0..1.0f64,
    ) {
        let a = arrival.sample_path(n, StreamSeed::new(seed, 0)).unwrap();
        let r = departure.sample_path(n, StreamSeed::new(seed, 1)).unwrap();
        let q0 = q0_frac * c_max;
        let config = QueueConfig::capped(c_max).with_q0(q0).with_warmup(0);
        let trace = simulate_queue(&a, &r, &config).unwrap();
        let mut q = q0;
        prop_assert_eq!(trace.levels()[0], q0);
        for (i, (&ai, &ri)) in a.values().iter().zip(r.values()).enumerate() {
            q = step_queue(q, ai, ri, c_max);
            prop_assert_eq!(trace.levels()[i + 1], q);
        }
        let mut q_hi = q0;
        for (i, (&ai, &ri)) in a.values().iter().zip(r.values()).enumerate() {
            q_hi = step_queue(q_hi, ai + bump, ri, c_max);
            prop_assert!(q_hi >= trace.levels()[i + 1]);
        }
    }

    // Loan limits grow with reputation and never exceed the hard cap; the
    // shifted outage threshold stays inside [0, c_th].
    #[test]
    fn loan_and_threshold_shape(
        kappa in 0.0..2.0f64,
        l_max in 0.0..50.0f64,
        rep in 0.0..100.0f64,
        extra in 0.0..20.0f64,
        loan in 0.0..200.0f64,
    ) {
        let policy = LoanPolicy { kappa, l_max };
        let low = loan_limit(&policy, rep).unwrap();
        let high = loan_limit(&policy, rep + extra).unwrap();
        prop_assert!(low <= high + 1e-12);
        prop_assert!(high <= l_max + 1e-12);
        let account = CreditAccount::new(100.0, 90.0, 1e-3).unwrap();
        let th = effective_outage_threshold(&account, loan).unwrap();
        prop_assert!((0.0..=90.0).contains(&th));
    }
}

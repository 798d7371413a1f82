//! Workspace acceptance gate: one test per promised behavior, spanning the
//! scalar mass law, the coupled shape flow, the stochastic simulator, the
//! anchored fixed points, and the landscape functionals. Each test prints a
//! `[acceptance] NN <label>: pass` line so a `--nocapture` run doubles as a
//! checklist.

use std::time::Instant;

use bandit_sim::{
    grpo_clipped_step, reinforce_step, run_replica, sample_group, truth_labels, SimConfig, SimMode,
};
use kl_dynamics::{
    fixed_point_stability, interior_fixed_point, regularized_drift, strong_kl_prediction,
    weak_kl_prediction, KlConfig,
};
use meanfield::{
    closed_form_p, heterogeneity_expansion, hitting_time_bracket, integrate, logit_envelopes,
    tail_exponent, two_class_drift, OdeConfig, Trajectory,
};
use noise_model::{reward_stats, rng::substream, learnability_argmax, learnability_speed, NoiseSpec};
use rand::Rng as _;
use rayon::prelude::*;
use simplex_core::{
    jacobian_apply, kl_divergence, mirror_ascent_step, replicator_field, BlockState, ProbVector,
};
use sweep_cli::{run_sweep, Engine, GridPoint, Phase, SweepSpec};

fn pass(index: usize, label: &str) {
    println!("[acceptance] {index:02} {label}: pass");
}

fn state(p: f64, y: &[f64], z: &[f64]) -> BlockState {
    BlockState::new(
        p,
        ProbVector::new(y.to_vec()).unwrap(),
        ProbVector::new(z.to_vec()).unwrap(),
    )
    .unwrap()
}

/// Least-squares slope of `ys` against `xs`.
fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Centered log-probability shift between two policies on the same support.
/// The underlying logit updates sum to zero, so this recovers them exactly.
fn centered_log_shift(post: &ProbVector, pre: &ProbVector) -> Vec<f64> {
    let mut d: Vec<f64> = post
        .iter()
        .zip(pre.iter())
        .map(|(&a, &b)| a.ln() - b.ln())
        .collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    for x in &mut d {
        *x -= mean;
    }
    d
}

// ---------------------------------------------------------------------------
// 1. Adaptive integration of the scalar mass law vs its closed form.
// ---------------------------------------------------------------------------

/// Scalar Cash-Karp 4(5) pair with the same controller settings as the
/// library integrator, kept local so the comparison exercises an
/// independently coded scheme.
fn cash_karp_path<F: Fn(f64) -> f64>(
    f: F,
    p0: f64,
    t_end: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Vec<(f64, f64)> {
    const A: [[f64; 5]; 5] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
        [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0, 0.0, 0.0],
        [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0, 0.0],
        [
            1631.0 / 55296.0,
            175.0 / 512.0,
            575.0 / 13824.0,
            44275.0 / 110592.0,
            253.0 / 4096.0,
        ],
    ];
    const B5: [f64; 6] = [
        37.0 / 378.0,
        0.0,
        250.0 / 621.0,
        125.0 / 594.0,
        0.0,
        512.0 / 1771.0,
    ];
    const B4: [f64; 6] = [
        2825.0 / 27648.0,
        0.0,
        18575.0 / 48384.0,
        13525.0 / 55296.0,
        277.0 / 14336.0,
        1.0 / 4.0,
    ];
    let mut out = vec![(0.0, p0)];
    let (mut t, mut p) = (0.0, p0);
    let mut h = 1e-3_f64;
    while t < t_end {
        h = h.min(t_end - t);
        let mut k = [0.0; 6];
        k[0] = f(p);
        for stage in 1..6 {
            let row = A[stage - 1];
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate().take(stage) {
                acc += row[j] * kj;
            }
            k[stage] = f(p + h * acc);
        }
        let order5: f64 = h * B5.iter().zip(&k).map(|(b, kj)| b * kj).sum::<f64>();
        let order4: f64 = h * B4.iter().zip(&k).map(|(b, kj)| b * kj).sum::<f64>();
        let scale = abs_tol + rel_tol * (p + order5).abs();
        let err = (order5 - order4).abs() / scale;
        if err <= 1.0 {
            p += order5;
            t += h;
            out.push((t, p));
        }
        let factor = if err > 0.0 {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        // The cap keeps the sample grid dense enough for a meaningful
        // sup-norm comparison even where the solution is nearly flat.
        h = (h * factor).min(0.25);
        assert!(h > 1e-12, "step underflow at t = {t}");
    }
    out
}

#[test]
fn c01_adaptive_mass_integration_matches_the_closed_form() {
    let started = Instant::now();
    let spec = NoiseSpec::noiseless();
    for p0 in [0.1, 0.5, 0.9] {
        let path = cash_karp_path(|p| two_class_drift(p, &spec, 1.0), p0, 50.0, 1e-9, 1e-9);
        assert!(path.len() > 50, "suspiciously few accepted steps");
        let mut sup = 0.0_f64;
        for &(t, p) in &path {
            sup = sup.max((p - closed_form_p(p0, 1.0, t)).abs());
        }
        assert!(sup <= 1e-6, "p0 {p0}: sup-norm gap {sup:.3e} above 1e-6");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1 s");
    pass(1, "closed-form agreement of the adaptive mass integration");
}

// ---------------------------------------------------------------------------
// 2. The sign of the discrimination decides the flow direction.
// ---------------------------------------------------------------------------

#[test]
fn c02_the_discrimination_sign_sets_the_flow_direction() {
    let started = Instant::now();
    let p0 = 0.4;
    for j in [-0.5, -0.1, 0.0, 0.1, 0.5, 1.0] {
        let delta = (1.0 - j) / 2.0;
        let spec = NoiseSpec::new(delta, delta).unwrap();
        let initial = state(p0, &[0.5, 0.3, 0.2], &[0.6, 0.4]);
        let traj = integrate(&initial, &spec, &OdeConfig::rk4(0.5, 0.01, 20.0)).unwrap();
        let last = traj.points().last().unwrap().state.bad_mass();
        if j == 0.0 {
            assert!(
                (last - p0).abs() < 1e-12,
                "blind verifier moved the mass by {:.3e}",
                (last - p0).abs()
            );
        } else if j > 0.0 {
            assert!(last < p0 - 1e-6, "J = {j}: mass rose to {last}");
        } else {
            assert!(last > p0 + 1e-6, "J = {j}: mass fell to {last}");
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1 s");
    pass(2, "deterministic phase trichotomy across the symmetric family");
}

// ---------------------------------------------------------------------------
// 3. The sampled grid reproduces the phase table.
// ---------------------------------------------------------------------------

#[test]
fn c03_the_stochastic_grid_reproduces_the_phase_table() {
    let started = Instant::now();
    // (fpr, fnr) per point; expected labels in the same order.
    let grid = vec![
        GridPoint::new(0.0, 0.0),
        GridPoint::new(0.2, 0.1),
        GridPoint::new(0.0, 0.7),
        GridPoint::new(0.7, 0.0),
        GridPoint::new(0.5, 0.5),
        GridPoint::new(0.6, 0.5),
    ];
    let mut spec = SweepSpec::minimal(Engine::Sim, grid);
    spec.k = 3;
    spec.m = 2;
    spec.g = 8;
    spec.eta = 1e-3;
    spec.steps = 50_000;
    spec.record_every = Some(500);
    spec.replicas = 100;
    spec.base_seed = 20;

    let dir = tempfile::tempdir().unwrap();
    let outcome = run_sweep(&spec, dir.path()).unwrap();
    assert!(outcome.all_succeeded(), "failures: {:?}", outcome.failures);

    let expected = [
        Phase::Learning,
        Phase::Learning,
        Phase::Learning,
        Phase::Learning,
        Phase::Neutral,
        Phase::AntiLearning,
    ];
    for (summary, want) in outcome.summaries.iter().zip(expected) {
        assert_eq!(
            summary.phase,
            Some(want),
            "point {} (fnr {}, fpr {}): got {:?}",
            summary.point,
            summary.fnr,
            summary.fpr,
            summary.phase
        );
    }
    // The two strongly informative points should also cross p = 0.1 within
    // the horizon in most replicas.
    for idx in [0, 1] {
        assert!(
            outcome.summaries[idx].hit_tenth.is_some(),
            "point {idx} never crossed 0.1"
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}, budget 5 min");
    pass(3, "stochastic phase labels across the noise grid");
}

// ---------------------------------------------------------------------------
// 4. Late-time decay exponents follow the noise structure.
// ---------------------------------------------------------------------------

#[test]
fn c04_late_time_decay_exponents_follow_the_noise_structure() {
    let started = Instant::now();
    let cases = [
        // (delta_fn, delta_fp, expected slope): a false-negative floor keeps
        // the reward variance alive, so the bad mass decays like 1/t; with
        // that floor removed the variance vanishes with p and the decay
        // steepens to 1/t^2; an adversarial verifier drives 1 - p like 1/t.
        (0.3, 0.2, -1.0),
        (0.0, 0.2, -2.0),
        (0.6, 0.6, -1.0),
    ];
    for (delta_fn, delta_fp, want) in cases {
        let spec = NoiseSpec::new(delta_fn, delta_fp).unwrap();
        let initial = state(0.5, &[1.0], &[1.0]);
        let traj = integrate(&initial, &spec, &OdeConfig::rk45(1.0, 2000.0, 1e-12, 1e-8)).unwrap();
        let slope = tail_exponent(&traj, (200.0, 2000.0)).unwrap();
        assert!(
            (slope - want).abs() <= 0.15,
            "spec ({delta_fn}, {delta_fp}): slope {slope:.3} vs {want}"
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30 s");
    pass(4, "late-time decay exponents across the noise regimes");
}

// ---------------------------------------------------------------------------
// 5. In internal time the logit moves at the geometry rate.
// ---------------------------------------------------------------------------

#[test]
fn c05_the_logit_moves_at_the_geometry_rate_in_internal_time() {
    for (delta_fn, delta_fp) in [(0.1, 0.2), (0.5, 0.6)] {
        let spec = NoiseSpec::new(delta_fn, delta_fp).unwrap();
        let sign = spec.youden().signum();
        let initial = state(0.6, &[0.5, 0.3, 0.2], &[0.7, 0.3]);
        let traj = integrate(&initial, &spec, &OdeConfig::rk4(1.0, 1e-3, 3.0)).unwrap();
        let pts = traj.points();
        assert!(pts.len() > 1000);
        let mut checked = 0usize;
        for i in 1..pts.len() - 1 {
            let dtau = pts[i + 1].tau - pts[i - 1].tau;
            assert!(dtau > 1e-12, "internal clock stalled at index {i}");
            let rate = (pts[i + 1].logit - pts[i - 1].logit) / dtau;
            let want = -sign * (pts[i].s2 + pts[i].t2);
            assert!(
                (rate - want).abs() <= 1e-4,
                "index {i}: dL/dtau {rate:.8} vs {want:.8}"
            );
            checked += 1;
        }
        assert!(checked > 1000);
    }
    pass(5, "internal-time logit rate equals the collision geometry factor");
}

// ---------------------------------------------------------------------------
// 6. Nearly uniform shapes follow the second-order logit expansion.
// ---------------------------------------------------------------------------

#[test]
fn c06_near_uniform_shapes_follow_the_second_order_expansion() {
    let spec = NoiseSpec::new(0.1, 0.2).unwrap();
    let (k, m) = (3usize, 2usize);
    let mut required_c = 0.0_f64;
    for zeta0 in [1e-4, 1e-3] {
        for xi0 in [1e-4, 1e-3] {
            // Two-point perturbations hitting the requested excess collision
            // masses exactly: s2 - 1/K = 2 a^2 and t2 - 1/M = 2 b^2.
            let a = (zeta0 / 2.0_f64).sqrt();
            let b = (xi0 / 2.0_f64).sqrt();
            let third = 1.0 / 3.0;
            let initial = state(0.3, &[third + a, third - a, third], &[0.5 + b, 0.5 - b]);
            let traj = integrate(&initial, &spec, &OdeConfig::rk4(1.0, 2e-3, 600.0)).unwrap();
            let mut in_regime = 0usize;
            for pt in traj.points().iter().step_by(50) {
                let pred = heterogeneity_expansion(&initial, k, m, pt.tau, &spec).unwrap();
                if !pred.in_regime {
                    continue;
                }
                in_regime += 1;
                let err = (pt.logit - pred.logit).abs();
                let bound = zeta0.powf(1.5) * (3.0 * pt.tau / k as f64).exp() + xi0.powf(1.5);
                required_c = required_c.max(err / bound);
            }
            assert!(in_regime > 50, "only {in_regime} samples inside the regime");
        }
    }
    assert!(
        required_c < 10.0,
        "needed C = {required_c:.3} to cover the expansion error"
    );
    pass(6, "second-order expansion bounds the logit error uniformly");
}

// ---------------------------------------------------------------------------
// 7. Envelopes and the hitting-time bracket.
// ---------------------------------------------------------------------------

#[test]
fn c07_trajectories_respect_the_envelopes_and_the_hitting_bracket() {
    let p0 = 0.6;
    let noiseless = NoiseSpec::noiseless();
    let noisy = NoiseSpec::new(0.1, 0.2).unwrap();
    let uniform = |d: usize| vec![1.0 / d as f64; d];
    let cases: [(usize, usize, Vec<f64>, Vec<f64>, NoiseSpec); 4] = [
        (1, 1, uniform(1), uniform(1), noiseless),
        (2, 1, uniform(2), uniform(1), noiseless),
        (3, 2, uniform(3), uniform(2), noiseless),
        (3, 2, vec![0.5, 0.3, 0.2], vec![0.7, 0.3], noisy),
    ];
    for (k, m, y, z, spec) in cases {
        let initial = state(p0, &y, &z);
        let traj = integrate(&initial, &spec, &OdeConfig::rk4(1.0, 1e-3, 60.0)).unwrap();
        // Uniform shapes ride one envelope exactly, so the slack only has
        // to absorb integration and clock-accumulation error.
        for pt in traj.points() {
            let (lower, upper) = logit_envelopes(p0, k, m, pt.tau).unwrap();
            let p = pt.state.bad_mass();
            assert!(
                p >= lower - 1e-5 && p <= upper + 1e-5,
                "K {k} M {m}: p {p:.9} outside [{lower:.9}, {upper:.9}] at tau {:.4}",
                pt.tau
            );
        }
        for threshold in [0.5, 0.1] {
            let crossing = traj
                .tau_at_first_crossing(threshold)
                .unwrap_or_else(|| panic!("K {k} M {m}: never crossed {threshold}"));
            let (lo, hi) = hitting_time_bracket(p0, threshold, k, m).unwrap();
            // The crossing is read off the recorded grid, so allow one
            // sample spacing of slack on either side.
            assert!(
                crossing >= lo - 1e-3 && crossing <= hi + 1e-3,
                "K {k} M {m}: crossing {crossing:.5} outside [{lo:.5}, {hi:.5}]"
            );
        }
    }
    pass(7, "envelopes and hitting brackets hold along trajectories");
}

// ---------------------------------------------------------------------------
// 8. Shape flows lock onto their initial leader.
// ---------------------------------------------------------------------------

/// Draws a tie-free shape: unit-exponential weights, normalized, resampled
/// until the top two entries are separated and no pair nearly collides.
fn tie_free_shape(rng: &mut impl rand::Rng, d: usize) -> Vec<f64> {
    loop {
        let mut w: Vec<f64> = (0..d).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = w.iter().sum();
        for x in &mut w {
            *x /= total;
        }
        let mut sorted = w.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let top_gap = sorted[0] - sorted[1];
        let min_gap = sorted
            .windows(2)
            .map(|v| v[0] - v[1])
            .fold(f64::INFINITY, f64::min);
        if top_gap >= 0.1 && min_gap >= 0.02 {
            return w;
        }
    }
}

/// Checks leader stability and pairwise order preservation of one shape
/// column across a trajectory, then returns the final shape.
fn assert_order_preserved<'a>(
    traj: &'a Trajectory,
    shape_of: fn(&meanfield::TrajectoryPoint) -> &[f64],
    initial: &[f64],
    label: &str,
) -> &'a [f64] {
    let leader = argmax(initial);
    for pt in traj.points() {
        let shape = shape_of(pt);
        assert_eq!(argmax(shape), leader, "{label}: leader changed");
        for i in 0..initial.len() {
            for j in 0..initial.len() {
                if initial[i] > initial[j] && shape[i].max(shape[j]) > 1e-9 {
                    assert!(
                        shape[i] > shape[j] - 1e-12,
                        "{label}: pair ({i}, {j}) flipped"
                    );
                }
            }
        }
    }
    shape_of(traj.points().last().unwrap())
}

#[test]
fn c08_shape_flows_lock_onto_the_initial_leader() {
    // Informative side: the good shape sharpens onto its initial leader.
    // A wide inert bad block keeps the geometry factor low, which leaves
    // plenty of internal time before the mass is absorbed.
    let spec = NoiseSpec::noiseless();
    let cfg = OdeConfig::rk45(1.0, 1e6, 1e-12, 1e-8);
    for start in 0..50u64 {
        let mut rng = substream(2088, start);
        let y0 = tie_free_shape(&mut rng, 4);
        let initial = state(0.5, &y0, &[0.2; 5]);
        let traj = integrate(&initial, &spec, &cfg).unwrap();
        let final_y = assert_order_preserved(
            &traj,
            |pt| pt.state.good_shape().entries(),
            &y0,
            &format!("start {start}"),
        );
        let leader = argmax(&y0);
        let gap: f64 = final_y
            .iter()
            .enumerate()
            .map(|(i, &v)| if i == leader { (1.0 - v).abs() } else { v.abs() })
            .sum();
        assert!(gap < 1e-3, "start {start}: final distance to vertex {gap:.2e}");
    }

    // Adversarial side: the bad shape polarizes onto its own initial
    // leader while the mass escapes upward.
    let spec = NoiseSpec::new(0.75, 0.75).unwrap();
    let cfg = OdeConfig::rk45(1.0, 2e9, 1e-12, 1e-8);
    for start in 0..50u64 {
        let mut rng = substream(2089, start);
        let z0 = tie_free_shape(&mut rng, 3);
        let initial = state(0.5, &[0.2; 5], &z0);
        let traj = integrate(&initial, &spec, &cfg).unwrap();
        let final_z = assert_order_preserved(
            &traj,
            |pt| pt.state.bad_shape().entries(),
            &z0,
            &format!("bad start {start}"),
        );
        let leader = argmax(&z0);
        let gap: f64 = final_z
            .iter()
            .enumerate()
            .map(|(i, &v)| if i == leader { (1.0 - v).abs() } else { v.abs() })
            .sum();
        assert!(gap < 1e-3, "bad start {start}: final distance to vertex {gap:.2e}");
    }
    pass(8, "winner-take-all with order preservation in both blocks");
}

// ---------------------------------------------------------------------------
// 9. The simulator tracks the mean-field statistics.
// ---------------------------------------------------------------------------

#[test]
fn c09_the_simulator_tracks_the_mean_field_statistics() {
    // (a) One-step mean drift equals the projected advantage field at
    // three states spanning informative, weakly informative, and
    // adversarial verifiers.
    let drift_cases: [(Vec<f64>, (f64, f64), usize, u64); 3] = [
        (vec![0.2, 0.15, 0.15, 0.3, 0.2], (0.1, 0.2), 2048, 910),
        (vec![0.5, 0.2, 0.1, 0.1, 0.1], (0.3, 0.4), 512, 911),
        (vec![0.1, 0.2, 0.3, 0.25, 0.15], (0.6, 0.6), 1024, 912),
    ];
    for (entries, (delta_fn, delta_fp), g, seed) in drift_cases {
        let policy = ProbVector::new(entries).unwrap();
        let spec = NoiseSpec::new(delta_fn, delta_fp).unwrap();
        let (k, m) = (3usize, 2usize);
        let truth = truth_labels(k, m);
        let cfg = SimConfig::new(SimMode::Reinforce, k, m, g, 1e-3, 1, seed);
        let p_bad: f64 = policy.entries()[k..].iter().sum();
        let stats = reward_stats(&spec, p_bad).unwrap();
        let mut advantages = vec![stats.a_good; k];
        advantages.extend(std::iter::repeat(stats.a_bad).take(m));
        let field = jacobian_apply(&policy, &advantages).unwrap();

        let reps = 100_000u64;
        let d = k + m;
        let (sum, sumsq) = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = substream(seed, rep);
                let (post, _) = reinforce_step(&policy, &truth, &spec, &cfg, &mut rng).unwrap();
                centered_log_shift(&post, &policy)
            })
            .fold(
                || (vec![0.0; d], vec![0.0; d]),
                |(mut s, mut q), shift| {
                    for i in 0..d {
                        s[i] += shift[i];
                        q[i] += shift[i] * shift[i];
                    }
                    (s, q)
                },
            )
            .reduce(
                || (vec![0.0; d], vec![0.0; d]),
                |(mut s1, mut q1), (s2, q2)| {
                    for i in 0..d {
                        s1[i] += s2[i];
                        q1[i] += q2[i];
                    }
                    (s1, q1)
                },
            );
        // The in-group z-score estimates its own denominator, leaving a
        // systematic remainder of order eta / G on top of the Monte Carlo
        // band.
        let bias = cfg.eta / g as f64;
        for i in 0..d {
            let mean = sum[i] / reps as f64;
            let var = (sumsq[i] / reps as f64 - mean * mean).max(0.0);
            let se = (var / reps as f64).sqrt();
            let want = cfg.eta * field.entries()[i];
            assert!(
                (mean - want).abs() <= 3.0 * se + bias,
                "seed {seed} component {i}: {mean:.3e} vs {want:.3e} (3se {:.3e})",
                3.0 * se
            );
        }
    }

    // (b) Rollout-frequency covariance matches the sampling geometry.
    {
        let policy = ProbVector::new(vec![0.35, 0.15, 0.1, 0.25, 0.15]).unwrap();
        let spec = NoiseSpec::new(0.1, 0.2).unwrap();
        let truth = truth_labels(3, 2);
        let g = 64usize;
        let reps = 200_000u64;
        let d = 5usize;
        let pairs: Vec<(usize, usize)> = (0..d)
            .flat_map(|i| (i..d).map(move |j| (i, j)))
            .collect();
        let np = pairs.len();
        let (sum, sumsq) = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = substream(920, rep);
                let (arms, _) = sample_group(&policy, &truth, &spec, g, &mut rng);
                let mut freq = vec![0.0_f64; d];
                for &arm in &arms {
                    freq[arm] += 1.0;
                }
                let x: Vec<f64> = freq
                    .iter()
                    .zip(policy.iter())
                    .map(|(&c, &p)| c / g as f64 - p)
                    .collect();
                pairs.iter().map(|&(i, j)| x[i] * x[j]).collect::<Vec<f64>>()
            })
            .fold(
                || (vec![0.0; np], vec![0.0; np]),
                |(mut s, mut q), prods| {
                    for i in 0..np {
                        s[i] += prods[i];
                        q[i] += prods[i] * prods[i];
                    }
                    (s, q)
                },
            )
            .reduce(
                || (vec![0.0; np], vec![0.0; np]),
                |(mut s1, mut q1), (s2, q2)| {
                    for i in 0..np {
                        s1[i] += s2[i];
                        q1[i] += q2[i];
                    }
                    (s1, q1)
                },
            );
        for (idx, &(i, j)) in pairs.iter().enumerate() {
            let mean = sum[idx] / reps as f64;
            let var = (sumsq[idx] / reps as f64 - mean * mean).max(0.0);
            let se = (var / reps as f64).sqrt();
            let pi = policy.entries()[i];
            let pj = policy.entries()[j];
            let want = (if i == j { pi * (1.0 - pi) } else { -pi * pj }) / g as f64;
            assert!(
                (mean - want).abs() <= 3.0 * se + 1e-12,
                "pair ({i}, {j}): {mean:.3e} vs {want:.3e} (3se {:.3e})",
                3.0 * se
            );
        }
    }

    // (c) The diffusion surrogate closes on the deterministic flow at the
    // genetic-drift rate: the sup-norm gap over a fixed horizon shrinks
    // like G^(-1/2).
    {
        let spec = NoiseSpec::noiseless();
        let flat = ProbVector::new(vec![0.25, 0.25, 0.5]).unwrap();
        let initial = state(0.5, &[0.5, 0.5], &[1.0]);
        let ode = integrate(&initial, &spec, &OdeConfig::rk4(1e-3, 0.5, 2000.0)).unwrap();
        let ode_pts = ode.points();
        let reps = 40u64;
        let mut gaps = Vec::new();
        for (exp, g) in [8usize, 64, 512].into_iter().enumerate() {
            let mut cfg = SimConfig::new(SimMode::WrightFisher, 2, 1, g, 1e-3, 2000, 930 + exp as u64);
            cfg.record_every = 20;
            let curves: Vec<Vec<(usize, f64)>> = (0..reps)
                .into_par_iter()
                .map(|rep| {
                    run_replica(&cfg, &spec, &flat, rep)
                        .unwrap()
                        .points()
                        .iter()
                        .map(|pt| (pt.step, pt.state.bad_mass()))
                        .collect()
                })
                .collect();
            let n = curves[0].len();
            let mut sup = 0.0_f64;
            for idx in 0..n {
                let step = curves[0][idx].0;
                let mean: f64 =
                    curves.iter().map(|c| c[idx].1).sum::<f64>() / reps as f64;
                let ode_idx = step * 2;
                assert!((ode_pts[ode_idx].t - step as f64).abs() < 1e-9);
                sup = sup.max((mean - ode_pts[ode_idx].state.bad_mass()).abs());
            }
            gaps.push((g as f64, sup));
        }
        assert!(
            gaps[0].1 > gaps[1].1 && gaps[1].1 > gaps[2].1,
            "gaps not monotone in G: {gaps:?}"
        );
        let xs: Vec<f64> = gaps.iter().map(|&(g, _)| g.ln()).collect();
        let ys: Vec<f64> = gaps.iter().map(|&(_, s)| s.ln()).collect();
        let slope = fit_slope(&xs, &ys);
        assert!(
            (-0.75..=-0.25).contains(&slope),
            "gap slope {slope:.3} outside [-0.75, -0.25]; gaps {gaps:?}"
        );
    }
    pass(9, "one-step drift, sampling covariance, and diffusion gap scaling");
}

// ---------------------------------------------------------------------------
// 10. Ratio weighting agrees with the plain step to second order.
// ---------------------------------------------------------------------------

#[test]
fn c10_ratio_weighting_matches_the_plain_step_to_second_order() {
    let theta0 = [0.3_f64, -0.1, 0.2];
    let z: f64 = theta0.iter().map(|t| t.exp()).sum();
    let policy = ProbVector::new(theta0.iter().map(|t| t.exp() / z).collect()).unwrap();
    let truth = truth_labels(2, 1);
    let spec = NoiseSpec::new(0.1, 0.2).unwrap();
    let etas = [1e-2, 1e-3, 1e-4];
    let reps = 20_000u64;
    let mut gaps = Vec::new();
    for (idx, &eta) in etas.iter().enumerate() {
        let plain = SimConfig::new(SimMode::Reinforce, 2, 1, 8, eta, 1, 1010);
        let mut clipped = SimConfig::new(SimMode::GrpoClipped, 2, 1, 8, eta, 1, 1010);
        clipped.clip_low = 0.2;
        clipped.clip_high = 0.2;
        let sum = (0..reps)
            .into_par_iter()
            .map(|rep| {
                // Twin RNG streams feed both update rules the same group.
                let mut rng_a = substream(1010 + idx as u64, rep);
                let mut rng_b = rng_a.clone();
                let (post_plain, _) =
                    reinforce_step(&policy, &truth, &spec, &plain, &mut rng_a).unwrap();
                let (post_ratio, _) =
                    grpo_clipped_step(&policy, &truth, &spec, &clipped, &mut rng_b).unwrap();
                let dp = centered_log_shift(&post_plain, &policy);
                let dr = centered_log_shift(&post_ratio, &policy);
                [dr[0] - dp[0], dr[1] - dp[1], dr[2] - dp[2]]
            })
            .reduce(
                || [0.0; 3],
                |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]],
            );
        let norm = sum
            .iter()
            .map(|s| (s / reps as f64).abs())
            .fold(0.0_f64, f64::max);
        gaps.push(norm);
    }
    let xs: Vec<f64> = etas.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    let slope = fit_slope(&xs, &ys);
    assert!(
        slope >= 1.8,
        "mean-drift gap slope {slope:.3} below 1.8; gaps {gaps:?}"
    );
    pass(10, "the ratio-weighted correction is second order in the step size");
}

// ---------------------------------------------------------------------------
// 11. Anchored fixed points sit where the expansions say.
// ---------------------------------------------------------------------------

#[test]
fn c11_anchoring_pins_the_rest_mass_where_the_expansions_say() {
    let informative = NoiseSpec::new(0.1, 0.2).unwrap();
    let adversarial = NoiseSpec::new(0.5, 0.6).unwrap();
    let blind = NoiseSpec::new(0.5, 0.5).unwrap();

    // Ordering against the reference, with stability at the rest point.
    let cfg = KlConfig::two_class(1.0, 0.5, 1, 1).unwrap();
    let p_low = interior_fixed_point(&informative, 1e-3, &cfg, 1.0, 1.0).unwrap();
    assert!(p_low < 0.5, "informative rest mass {p_low} not below the reference");
    assert!(fixed_point_stability(p_low, &informative, 1e-3, &cfg, 1.0, 1.0).unwrap() < 0.0);
    let p_high = interior_fixed_point(&adversarial, 1e-3, &cfg, 1.0, 1.0).unwrap();
    assert!(p_high > 0.5, "adversarial rest mass {p_high} not above the reference");
    let p_blind = interior_fixed_point(&blind, 1e-3, &cfg, 1.0, 1.0).unwrap();
    assert_eq!(p_blind, 0.5, "a blind verifier must leave the anchor untouched");

    // Strong anchoring: the first-order location is off by O(beta^-2), so
    // tightening beta tenfold shrinks the error a hundredfold. A large
    // step constant keeps both errors far above rounding.
    let eta = 100.0;
    let mut errs = Vec::new();
    for beta in [1e6, 1e7] {
        let cfg = KlConfig::two_class(beta, 0.5, 1, 1).unwrap();
        let root = interior_fixed_point(&informative, eta, &cfg, 1.0, 1.0).unwrap();
        let predicted = strong_kl_prediction(&informative, eta, &cfg, 1.0, 1.0).unwrap();
        errs.push((root - predicted).abs());
    }
    let order = (errs[0] / errs[1]).log10();
    assert!(
        (1.8..=2.2).contains(&order),
        "strong-anchoring error order {order:.3}; errors {errs:?}"
    );

    // Weak anchoring against an adversarial verifier: the predicted
    // distance from full corruption is right up to the slowly decaying
    // log-log correction.
    let eta = 1e-3;
    let stats_at_one = reward_stats(&adversarial, 1.0).unwrap();
    let c = eta * adversarial.youden().abs() * 2.0 / stats_at_one.sigma;
    let beta = c * 1e-12;
    let cfg = KlConfig::two_class(beta, 0.5, 1, 1).unwrap();
    let root = interior_fixed_point(&adversarial, eta, &cfg, 1.0, 1.0).unwrap();
    let predicted = weak_kl_prediction(&adversarial, eta, &cfg, 1.0, 1.0)
        .unwrap()
        .expect("the weak expansion applies when beta is far below the drift scale");
    assert!(root > 0.99, "weak anchoring should leave the mass near 1, got {root}");
    let ratio = (1.0 - root) / (1.0 - predicted);
    assert!(
        (ratio - 1.0).abs() <= 0.2,
        "weak-anchoring distance ratio {ratio:.4} strays past 0.2"
    );

    // Explicit forward marches converge onto the rest mass from both sides.
    let eta = 1.0;
    let cfg = KlConfig::two_class(1.0, 0.5, 1, 1).unwrap();
    let p_star = interior_fixed_point(&informative, eta, &cfg, 1.0, 1.0).unwrap();
    for start in [p_star - 0.25, p_star + 0.25] {
        let mut p = start.clamp(0.01, 0.99);
        let dt = 0.05;
        for _ in 0..200_000 {
            let st = state(p, &[1.0], &[1.0]);
            let drift = regularized_drift(&st, &informative, eta, &cfg).unwrap();
            p = (p + dt * drift.dp).clamp(1e-6, 1.0 - 1e-6);
        }
        assert!(
            (p - p_star).abs() < 1e-6,
            "march from {start:.3} settled at {p:.9}, rest mass {p_star:.9}"
        );
    }
    pass(11, "fixed-point ordering, both anchoring expansions, and convergence");
}

// ---------------------------------------------------------------------------
// 12. The learnability peak sits at the cubic root.
// ---------------------------------------------------------------------------

/// Golden-section maximization of a unimodal function on [lo, hi].
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > 1e-13 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn c12_the_learnability_peak_sits_at_the_cubic_root() {
    // Symmetric specs: the peak is the midpoint, with height (1 - 2 delta) / 8.
    for delta in [0.0, 0.1, 0.25] {
        let spec = NoiseSpec::new(delta, delta).unwrap();
        let p_peak = learnability_argmax(&spec).unwrap();
        assert_eq!(p_peak, 0.5, "symmetric spec delta = {delta}");
        let speed = learnability_speed(&spec, p_peak).unwrap();
        let want = (1.0 - 2.0 * delta) / 8.0;
        assert!(
            (speed - want).abs() <= 1e-15,
            "delta {delta}: peak speed {speed:.17} vs {want:.17}"
        );
    }
    // The fully dyadic cases admit no rounding at all.
    assert_eq!(
        learnability_speed(&NoiseSpec::noiseless(), 0.5).unwrap(),
        0.125
    );
    assert_eq!(
        learnability_speed(&NoiseSpec::new(0.25, 0.25).unwrap(), 0.5).unwrap(),
        0.0625
    );

    // Asymmetric specs: an independent golden-section search lands on the
    // cubic root. Discrimination is kept away from zero so the peak stays
    // well conditioned.
    let mut worst = 0.0_f64;
    for case in 0..100u64 {
        let mut rng = substream(1200, case);
        let delta_fn = 0.35 * rng.random::<f64>();
        let delta_fp = 0.35 * rng.random::<f64>();
        let spec = NoiseSpec::new(delta_fn, delta_fp).unwrap();
        let p_root = learnability_argmax(&spec).unwrap();
        let p_gss = golden_max(
            |p| learnability_speed(&spec, p).unwrap(),
            1e-6,
            1.0 - 1e-6,
        );
        worst = worst.max((p_root - p_gss).abs());
    }
    assert!(
        worst <= 1e-8,
        "worst golden-section vs cubic-root gap {worst:.3e}"
    );
    pass(12, "learnability peak location and height across the spec family");
}

// ---------------------------------------------------------------------------
// 13. One mirror step obeys the information geometry.
// ---------------------------------------------------------------------------

#[test]
fn c13_a_mirror_step_obeys_the_information_geometry() {
    // Symmetrized divergence identity: the sum of both KL directions
    // equals the step size times the advantage-weighted mass transport.
    for case in 0..20u64 {
        let mut rng = substream(1300, case);
        let p = loop {
            let mut w: Vec<f64> = (0..5).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let total: f64 = w.iter().sum();
            for x in &mut w {
                *x /= total;
            }
            if w.iter().all(|&x| x > 1e-3) {
                break ProbVector::new(w).unwrap();
            }
        };
        let a: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let eta = if case % 2 == 0 { 0.5 } else { 0.05 };
        let plus = mirror_ascent_step(&p, &a, eta).unwrap();
        let lhs = kl_divergence(&plus, &p).unwrap() + kl_divergence(&p, &plus).unwrap();
        let rhs: f64 = eta
            * a.iter()
                .zip(plus.iter().zip(p.iter()))
                .map(|(&ai, (&qi, &pi))| ai * (qi - pi))
                .sum::<f64>();
        assert!(
            (lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1e-12),
            "case {case}: {lhs:.17} vs {rhs:.17}"
        );
    }

    // First-order agreement with the replicator field, at second order in
    // the step size.
    let p = ProbVector::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
    let a = [1.2, -0.3, 0.5, -1.0];
    let field = replicator_field(&p, &a).unwrap();
    let etas = [1e-2, 1e-3, 1e-4];
    let errs: Vec<f64> = etas
        .iter()
        .map(|&eta| {
            let plus = mirror_ascent_step(&p, &a, eta).unwrap();
            plus.iter()
                .zip(p.iter().zip(field.entries()))
                .map(|(&qi, (&pi, &fi))| (qi - pi - eta * fi).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let xs: Vec<f64> = etas.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let slope = fit_slope(&xs, &ys);
    assert!(
        slope >= 1.9,
        "replicator residual slope {slope:.3}; residuals {errs:?}"
    );

    // Advantage shifts leave the step bitwise unchanged, because only gaps
    // to the leading advantage enter. Dyadic advantages, shifts, and step
    // size keep every scaled gap exactly representable, so the equality
    // holds without any rounding caveat.
    let p = ProbVector::new(vec![0.5, 0.25, 0.125, 0.125]).unwrap();
    let a = [0.25, -0.5, 1.5, 0.75];
    let base = mirror_ascent_step(&p, &a, 0.25).unwrap();
    for shift in [2.0, -4.0, 0.5] {
        let shifted: Vec<f64> = a.iter().map(|&ai| ai + shift).collect();
        let moved = mirror_ascent_step(&p, &shifted, 0.25).unwrap();
        for (x, y) in base.iter().zip(moved.iter()) {
            assert_eq!(x.to_bits(), y.to_bits(), "shift {shift} changed the step");
        }
    }
    pass(13, "divergence identity, replicator limit, and shift invariance");
}

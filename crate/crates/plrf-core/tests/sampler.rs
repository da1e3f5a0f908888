use plrf_core::optim::{step, AdamState, OptimizerKind};
use plrf_core::rng::{stream_id, trajectory_rng};
use plrf_core::sampler::{ExactSampler, JointSampler, PairSampler, SamplerKind};
use plrf_core::trajectory::{run_trajectory, RecordingGrid, TrajectoryStatus};
use plrf_core::{build_instance, OptimizerConfig, PlrfInstance, PlrfParams, Schedule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn inst(alpha: f64, beta: f64, m: usize, d: usize, seed: u64) -> PlrfInstance {
    build_instance(PlrfParams { alpha, beta, model_size: m, ambient_dim: d, seed }).unwrap()
}

#[test]
fn label_is_the_ambient_inner_product() {
    let p = inst(0.8, 0.3, 5, 20, 1);
    let s = ExactSampler::new(&p, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let (f, y, z) = s.sample_with_latent(&mut rng);
        let direct: f64 = (1..=20).map(|j| (j as f64).powf(-0.8 - 0.3) * z[j - 1]).sum();
        assert!((y - direct).abs() < 1e-12);
        for i in 0..5 {
            let v: f64 = (0..20).map(|j| p.sketch[(i, j)] * ((j + 1) as f64).powf(-0.8) * z[j]).sum();
            assert!((f[i] - v).abs() < 1e-12);
        }
    }
}

/// Entrywise check of the empirical second moments of `(S x, y)` against `K`, `S H w*` and
/// `w*ᵀ H w* + σ²`, each within five standard errors.
fn check_moments<S: PairSampler>(p: &PlrfInstance, sampler: &mut S, sigma: f64, n: usize, seed: u64) {
    let m = p.model_size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = vec![0.0; m];
    let mut cov = vec![0.0; m * m];
    let mut cross = vec![0.0; m];
    let mut yy = 0.0;
    for _ in 0..n {
        let y = sampler.sample_into(&mut rng, &mut f);
        for a in 0..m {
            for b in 0..m {
                cov[a * m + b] += f[a] * f[b];
            }
            cross[a] += f[a] * y;
        }
        yy += y * y;
    }
    let nf = n as f64;
    let var_y = p.initial_loss + sigma * sigma;
    for a in 0..m {
        for b in 0..m {
            let emp = cov[a * m + b] / nf;
            let k = p.k[(a, b)];
            let se = ((p.k[(a, a)] * p.k[(b, b)] + k * k) / nf).sqrt();
            assert!((emp - k).abs() < 5.0 * se, "K[{a},{b}]: {emp} vs {k}");
        }
        let c = p.target_proj[a];
        let se = ((p.k[(a, a)] * var_y + c * c) / nf).sqrt();
        assert!((cross[a] / nf - c).abs() < 5.0 * se);
    }
    let se = (2.0 * var_y * var_y / nf).sqrt();
    assert!((yy / nf - var_y).abs() < 5.0 * se);
}

#[test]
fn exact_sampler_covariance_matches_k() {
    let p = inst(0.7, 0.2, 4, 16, 8);
    let mut s = ExactSampler::new(&p, 0.0);
    check_moments(&p, &mut s, 0.0, 100_000, 1);
}

#[test]
fn joint_sampler_covariance_matches_k() {
    let p = inst(0.7, 0.2, 4, 16, 8);
    let mut s = JointSampler::new(&p, 0.3);
    assert!(s.is_triangular());
    check_moments(&p, &mut s, 0.3, 100_000, 2);
}

#[test]
fn joint_sampler_handles_a_singular_joint_covariance() {
    // With d = M the label lies in the span of the features, so the joint covariance is singular.
    let p = inst(1.0, 0.0, 4, 4, 5);
    let mut s = JointSampler::new(&p, 0.0);
    check_moments(&p, &mut s, 0.0, 50_000, 3);
}

#[test]
fn label_noise_has_unit_variance() {
    let p = inst(1.0, 0.0, 4, 16, 2);
    let s = ExactSampler::new(&p, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let z: Vec<f64> = (0..16).map(|_| StandardNormal.sample(&mut rng)).collect();
    let (_, clean) = s.project(&z, 0.0);
    let n = 100_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let e: f64 = StandardNormal.sample(&mut rng);
        let (_, y) = s.project(&z, e);
        acc += (y - clean) * (y - clean);
    }
    let var = acc / n as f64;
    assert!((var - 1.0).abs() < 0.02, "{var}");
}

#[test]
fn sgd_mean_update_vanishes_at_the_optimum() {
    let p = inst(1.0, 0.0, 4, 4, 12);
    assert!(p.w_perp_energy < 1e-20);
    let mut s = ExactSampler::new(&p, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 10_000;
    let mut f = vec![0.0; 4];
    let mut sum = vec![0.0; 4];
    let mut sq = vec![0.0; 4];
    for _ in 0..n {
        let y = s.sample_into(&mut rng, &mut f);
        let out = step(OptimizerKind::Sgd, &p.theta_star, &[(f.clone(), y)], 1.0, None).unwrap();
        for i in 0..4 {
            let u = out[i] - p.theta_star[i];
            sum[i] += u;
            sq[i] += u * u;
        }
    }
    for i in 0..4 {
        let mean = sum[i] / n as f64;
        let sd = (sq[i] / n as f64 - mean * mean).max(0.0).sqrt();
        let se = sd / (n as f64).sqrt();
        assert!(mean.abs() <= 5.0 * se + 1e-12, "coord {i}: {mean} se {se}");
    }
}

#[test]
fn signsgd_coordinates_move_by_gamma() {
    let p = inst(1.0, 0.0, 6, 24, 1);
    let mut s = ExactSampler::new(&p, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut f = vec![0.0; 6];
    let theta = vec![0.0; 6];
    for _ in 0..50 {
        let y = s.sample_into(&mut rng, &mut f);
        let out = step(OptimizerKind::SignSgd, &theta, &[(f.clone(), y)], 0.25, None).unwrap();
        for (o, t) in out.iter().zip(&theta) {
            let mv = (o - t).abs();
            assert!(mv == 0.25 || mv == 0.0);
        }
    }
}

#[test]
fn adam_bias_correction_first_step_is_signlike() {
    // After one step m̂ = g and v̂ = g², so each coordinate moves by γ g / (|g| + ε).
    let g = vec![(vec![0.5, -2.0, 1.5], 0.7)];
    let mut st = AdamState::new(3, 0.9, 0.999, 1e-8);
    let out = step(OptimizerKind::Adam, &[0.0; 3], &g, 0.1, Some(&mut st)).unwrap();
    for v in out {
        assert!((v.abs() - 0.1).abs() < 1e-7);
    }
    assert_eq!(st.t, 1);
}

#[test]
fn zero_rate_keeps_the_loss_constant() {
    let p = inst(1.0, 0.0, 16, 64, 1);
    let cfg = OptimizerConfig::sign_sgd(0.0);
    let rec = run_trajectory(&p, &cfg, 500, &RecordingGrid::default_for(500), 7, SamplerKind::Joint);
    assert_eq!(rec.losses[0].0, 0);
    assert!(rec.losses.iter().all(|&(_, l)| l == p.population_loss(&vec![0.0; 16])));
    assert_eq!(rec.status, TrajectoryStatus::Completed);
}

#[test]
fn trajectories_are_reproducible() {
    let p = inst(1.0, 0.0, 16, 64, 1);
    let cfg = OptimizerConfig::sign_sgd(0.01);
    let grid = RecordingGrid::default_for(2000);
    let id = stream_id(42, 16, 0);
    for kind in [SamplerKind::Exact, SamplerKind::Joint] {
        let a = run_trajectory(&p, &cfg, 2000, &grid, id, kind);
        let b = run_trajectory(&p, &cfg, 2000, &grid, id, kind);
        assert_eq!(a.losses, b.losses);
        assert!(a.losses.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(a.final_loss() < a.losses[0].1);
    }
    let c = run_trajectory(&p, &cfg, 2000, &grid, stream_id(42, 16, 1), SamplerKind::Joint);
    let a = run_trajectory(&p, &cfg, 2000, &grid, id, SamplerKind::Joint);
    assert_ne!(a.losses, c.losses);
}

#[test]
fn large_rate_sgd_diverges() {
    let p = inst(0.6, 0.0, 16, 64, 1);
    let cfg = OptimizerConfig::sgd(50.0);
    let rec = run_trajectory(&p, &cfg, 10_000, &RecordingGrid::default_for(10_000), 1, SamplerKind::Joint);
    assert!(rec.diverged());
}

#[test]
fn batches_average_before_the_sign() {
    let p = inst(1.0, 0.0, 16, 64, 2);
    let mut cfg = OptimizerConfig::sign_sgd(0.005);
    cfg.batch_size = 8;
    cfg.schedule = Schedule::wsd(1, 0.05, 0.9, 0.1, 1.0);
    let rec = run_trajectory(&p, &cfg, 1000, &RecordingGrid::default_for(1000), 3, SamplerKind::Joint);
    assert!(rec.final_loss() < rec.losses[0].1);
}

#[test]
fn streams_are_independent() {
    use rand::Rng;
    let mut a = trajectory_rng(stream_id(1, 64, 0));
    let mut b = trajectory_rng(stream_id(1, 64, 1));
    let xs: Vec<u64> = (0..4).map(|_| a.random()).collect();
    let ys: Vec<u64> = (0..4).map(|_| b.random()).collect();
    assert_ne!(xs, ys);
}

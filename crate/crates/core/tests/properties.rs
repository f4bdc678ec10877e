use gmmse::filters::{FilterContext, SpeechPrior};
use gmmse::metrics::{segment_scores, si_sdr_segmental, MetricsConfig};
use gmmse::noisemodel::{em_fit, sample, ComplexGaussianMixture, EmOptions};
use gmmse::numerics::{hermitian_solve, log_kummer_m, principal_eigenvector, HermitianMatrix};
use gmmse::spatial::{diffuse_covariance, directivity, steering_vector, ArrayGeometry};
use gmmse::stft::{Stft, StftConfig};
use gmmse::Complex64 as C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<C64> {
    (0..d)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale)
        .collect()
}

fn random_pd(rng: &mut ChaCha8Rng, d: usize, ridge: f64) -> HermitianMatrix {
    let mut m = HermitianMatrix::identity(d).scaled(ridge);
    for _ in 0..d + 1 {
        m.add_outer(&random_vec(rng, d, 1.0), 1.0);
    }
    m
}

fn random_mixture(rng: &mut ChaCha8Rng, d: usize, m: usize) -> ComplexGaussianMixture {
    let mut w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    ComplexGaussianMixture::new(w, (0..m).map(|_| random_pd(rng, d, 0.1)).collect()).unwrap()
}

fn real_noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hermitian_solve_residual_is_small(seed in any::<u64>(), d in 1usize..=8, ridge in 1e-3f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_pd(&mut rng, d, ridge);
        let b = random_vec(&mut rng, d, 1.0);
        let x = hermitian_solve(&a, &b).unwrap();
        let r = a.mul_vec(&x);
        let res: f64 = r.iter().zip(&b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
        let bn: f64 = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(res <= 1e-9 * bn.max(1.0), "residual {res}");
    }

    #[test]
    fn principal_eigenvector_is_deterministic_and_unit(seed in any::<u64>(), d in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_pd(&mut rng, d, 0.5);
        let u = principal_eigenvector(&a).unwrap();
        prop_assert_eq!(&u, &principal_eigenvector(&a.clone()).unwrap());
        let n: f64 = u.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((n - 1.0).abs() < 1e-9);
        // Rayleigh quotient bounds every other unit direction
        let top = a.quadratic_form(&u);
        let v = random_vec(&mut rng, d, 1.0);
        let vn: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        prop_assert!(a.quadratic_form(&v) / vn <= top * (1.0 + 1e-8));
    }

    #[test]
    fn kummer_contiguous_relation(a in 1.05f64..3.0, b in 0.5f64..3.0, x in 0.01f64..600.0) {
        // a·M(a+1) = (x + 2a − b)·M(a) + (b − a)·M(a−1)
        let m_up = log_kummer_m(a + 1.0, b, x).unwrap();
        let m = log_kummer_m(a, b, x).unwrap();
        let m_dn = log_kummer_m(a - 1.0, b, x).unwrap();
        let lhs = a * (m_up - m).exp();
        let rhs = (x + 2.0 * a - b) + (b - a) * (m_dn - m).exp();
        prop_assert!((lhs - rhs).abs() <= 1e-7 * lhs.abs().max(rhs.abs()).max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn stft_round_trip_parseval_linearity(seed in any::<u64>(), len in 1500usize..6000, alpha in -3.0f64..3.0) {
        let cfg = StftConfig::default();
        let stft = Stft::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = real_noise(&mut rng, len);
        let y = real_noise(&mut rng, len);
        let sx = stft.analyze(&[&x]).unwrap();
        let n = cfg.window_len();

        let back = stft.synthesize(&sx).unwrap().swap_remove(0);
        prop_assert_eq!(back.len(), len);
        for t in n..len.saturating_sub(n) {
            prop_assert!((back[t] - x[t]).abs() <= 1e-10);
        }

        let w = stft.window();
        let k = sx.num_bins();
        for i in 0..sx.num_frames() {
            let time: f64 = (0..n)
                .map(|t| (x.get(i * cfg.shift() + t).copied().unwrap_or(0.0) * w[t]).powi(2))
                .sum();
            let mut freq = sx.get(0, 0, i).norm_sqr() + sx.get(0, k - 1, i).norm_sqr();
            freq += 2.0 * (1..k - 1).map(|b| sx.get(0, b, i).norm_sqr()).sum::<f64>();
            freq /= n as f64;
            prop_assert!((time - freq).abs() <= 1e-8 * time.max(1e-300));
        }

        let comb: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + b).collect();
        let sy = stft.analyze(&[&y]).unwrap();
        let sc = stft.analyze(&[&comb]).unwrap();
        for ((a, b), c) in sx.as_slice().iter().zip(sy.as_slice()).zip(sc.as_slice()) {
            prop_assert!((a * alpha + b - c).norm() < 1e-10);
        }
    }

    #[test]
    fn steering_has_unit_magnitude(mics in 2usize..8, spacing in 0.01f64..0.3, angle in 0.0f64..6.3, f in 0.0f64..8000.0) {
        let g = ArrayGeometry::linear(mics, spacing).unwrap();
        for v in steering_vector(&g, angle, f) {
            prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn diffuse_covariance_is_hermitian_psd(mics in 2usize..8, spacing in 0.01f64..0.3, f in 0.0f64..8000.0,
                                           white in 0.0f64..0.5, seed in any::<u64>()) {
        let g = ArrayGeometry::linear(mics, spacing).unwrap();
        let m = diffuse_covariance(&g, f, white);
        for i in 0..mics {
            for j in 0..mics {
                prop_assert!((m.get(i, j) - m.get(j, i).conj()).norm() < 1e-14);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_vec(&mut rng, mics, 1.0);
        let vn: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        prop_assert!(m.quadratic_form(&v) >= -1e-12 * vn);
    }

    #[test]
    fn linear_directivity_is_mirror_symmetric(seed in any::<u64>(), mics in 2usize..6, f in 100.0f64..8000.0, deg in 0u32..360) {
        let g = ArrayGeometry::linear(mics, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_vec(&mut rng, mics, 1.0);
        let theta = (deg as f64).to_radians();
        let p = directivity(|_| Ok(w.clone()), &g, &[theta, -theta], &[f]).unwrap();
        prop_assert!((p.gain(0, 0) - p.gain(0, 1)).abs() < 1e-9);
    }

    #[test]
    fn sampling_is_seed_deterministic(seed in any::<u64>(), d in 1usize..5, m in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mix = random_mixture(&mut rng, d, m);
        let a = sample(&mix, 50, seed).unwrap();
        prop_assert_eq!(&a, &sample(&mix, 50, seed).unwrap());
        prop_assert_ne!(&a, &sample(&mix, 50, seed.wrapping_add(1)).unwrap());
    }

    #[test]
    fn single_component_reduces_to_postfilter_and_wiener(seed in any::<u64>(), d in 1usize..6, amp in 0.1f64..5.0,
                                                         s2 in 0.01f64..10.0, nu in 0.05f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steer = random_vec(&mut rng, d, 1.0);
        let ctx = FilterContext::new(&steer, &random_mixture(&mut rng, d, 1)).unwrap();
        let y = random_vec(&mut rng, d, amp);
        let p = SpeechPrior::new(nu, s2).unwrap();
        prop_assert!(rel(ctx.nonlinear_mmse(&y, &p).unwrap(), ctx.mvdr_postfilter(&y, &p).unwrap()) < 1e-10);
        let gauss = SpeechPrior::new(1.0, s2).unwrap();
        let mwf = ctx.mwf(&y, s2);
        prop_assert!(rel(ctx.mvdr_postfilter(&y, &gauss).unwrap(), mwf) < 1e-10);
        prop_assert!(rel(ctx.nonlinear_mmse(&y, &gauss).unwrap(), mwf) < 1e-10);
    }

    #[test]
    fn estimators_finite_for_extreme_inputs(seed in any::<u64>(), d in 1usize..6, m in 1usize..5,
                                            log_amp in -3.0f64..7.0, log_s2 in -6.0f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steer = random_vec(&mut rng, d, 1.0);
        let ctx = FilterContext::new(&steer, &random_mixture(&mut rng, d, m)).unwrap();
        let y = random_vec(&mut rng, d, 10f64.powf(log_amp));
        let p = SpeechPrior::new(0.25, 10f64.powf(log_s2)).unwrap();
        for v in [ctx.nonlinear_mmse(&y, &p).unwrap(), ctx.mvdr_postfilter(&y, &p).unwrap()] {
            prop_assert!(v.re.is_finite() && v.im.is_finite());
        }
    }

    #[test]
    fn em_objective_never_decreases(seed in any::<u64>(), d in 1usize..4, m in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = random_mixture(&mut rng, d, m);
        let frames = sample(&truth, 200, seed).unwrap();
        let opts = EmOptions { restarts: 2, max_iterations: 60, seed, ..EmOptions::default() };
        let fit = em_fit(&frames, m, &opts).unwrap();
        for pair in fit.history.windows(2) {
            prop_assert!(pair[1] >= pair[0] - 1e-9 * pair[0].abs().max(1.0), "{} -> {}", pair[0], pair[1]);
        }
        let total: f64 = fit.mixture.weights().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn si_sdr_scale_invariant(seed in any::<u64>(), k in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = real_noise(&mut rng, 1600);
        let n = real_noise(&mut rng, 1600);
        let e: Vec<f64> = s.iter().zip(&n).map(|(a, b)| a + 0.3 * b).collect();
        let ek: Vec<f64> = e.iter().map(|v| v * k).collect();
        let cfg = MetricsConfig::new(16_000);
        let a = si_sdr_segmental(&e, &s, &n, &cfg).unwrap();
        let b = si_sdr_segmental(&ek, &s, &n, &cfg).unwrap();
        prop_assert!((a.si_sdr - b.si_sdr).abs() < 1e-9);
        prop_assert!((a.si_sir - b.si_sir).abs() < 1e-9);
        prop_assert!((a.si_sar - b.si_sar).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_noise_never_helps(seed in any::<u64>(), g1 in 0.01f64..1.0, g2 in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = real_noise(&mut rng, 160);
        let mut n = real_noise(&mut rng, 160);
        let proj = dot(&n, &s) / dot(&s, &s);
        n.iter_mut().zip(&s).for_each(|(v, t)| *v -= proj * t);
        let e1: Vec<f64> = s.iter().zip(&n).map(|(a, b)| a + g1 * b).collect();
        let e2: Vec<f64> = s.iter().zip(&n).map(|(a, b)| a + (g1 + g2) * b).collect();
        let zero = vec![0.0; 160];
        let (a, _, _) = segment_scores(&e1, &s, &zero).unwrap();
        let (b, _, _) = segment_scores(&e2, &s, &zero).unwrap();
        prop_assert!(b <= a + 1e-9);
    }

    #[test]
    fn silent_segments_are_gated(seed in any::<u64>(), silent in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = real_noise(&mut rng, 1600);
        // leading segments far below the activity threshold
        s[..silent * 160].iter_mut().for_each(|v| *v *= 1e-3);
        let e: Vec<f64> = s.iter().map(|v| v + 0.01).collect();
        let r = si_sdr_segmental(&e, &s, &vec![0.0; 1600], &MetricsConfig::new(16_000)).unwrap();
        prop_assert_eq!(r.segment_count, 10 - silent);
        prop_assert!(r.segments.iter().all(|g| g.start >= silent * 160));
    }
}

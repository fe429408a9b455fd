use cldp::channels::{ChannelSpec, KernelFn, PrivacyBudget};
use cldp::estimators::{
    optimal_truncations, private_joint_moment, private_kde, private_mean, MomentProfile, PrivatizedSample,
    TruncationMode,
};
use cldp::lowerbounds::simpson;
use cldp::rng::{stream, ZeroNoise};
use cldp::simdata::{HolderDensity, ParetoFactor};
use proptest::prelude::*;
use rand::Rng;

fn identity_channels(d: usize) -> Vec<ChannelSpec> {
    // A huge truncation with a huge level leaves values essentially unchanged;
    // with ZeroNoise the release equals the input exactly.
    (0..d).map(|_| ChannelSpec::laplace_trunc(1e12, 1.0).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimators_are_plain_means(d in 1usize..4, rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 1..40)) {
        let raw: Vec<f64> = rows.iter().flat_map(|r| r[..d].to_vec()).collect();
        let z = PrivatizedSample::privatize(&raw, identity_channels(d), &mut ZeroNoise).unwrap();
        let n = rows.len() as f64;
        let mut prod_sum = 0.0;
        for r in &rows {
            let mut p = 1.0;
            for v in &r[..d] {
                p *= v;
            }
            prod_sum += p;
        }
        let want = prod_sum / n;
        let got = private_joint_moment(&z).unwrap();
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
        for j in 0..d {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            prop_assert!((private_mean(&z, j).unwrap() - m).abs() <= 1e-12 * m.abs().max(1.0));
        }
    }
}

#[test]
fn unbiased_when_truncation_never_binds() {
    let mut rng = stream(21, 0);
    let n = 50;
    let raw: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.5..1.5)).collect();
    let truth = raw.chunks_exact(2).map(|r| r[0] * r[1]).sum::<f64>() / n as f64;
    let chans = vec![
        ChannelSpec::laplace_trunc(2.0, 1.0).unwrap(),
        ChannelSpec::laplace_trunc(2.0, 2.0).unwrap(),
    ];
    let reps = 4000;
    let ests: Vec<f64> = (0..reps)
        .map(|r| {
            let mut noise = stream(22, r);
            private_joint_moment(&PrivatizedSample::privatize(&raw, chans.clone(), &mut noise).unwrap()).unwrap()
        })
        .collect();
    let mean = ests.iter().sum::<f64>() / reps as f64;
    let sd = (ests.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
    assert!(
        (mean - truth).abs() < 4.0 * sd / (reps as f64).sqrt(),
        "mean {mean}, truth {truth}, sd {sd}"
    );
}

/// Variance of the joint-moment estimate against `prod T_j^2 / (n prod alpha_j^2)`.
///
/// The Laplace scale `2T/alpha` gives each release a noise variance of
/// `8 T^2 / alpha^2`, so the raw ratio sits near `8^d`. The constant is
/// therefore fitted against `prod(8 T_j^2 / alpha_j^2) / n`.
#[test]
fn variance_follows_the_noise_bound() {
    let model = ParetoFactor::with_default_tails(vec![4.0, 4.0], 0.5).unwrap();
    let profile = MomentProfile::new(vec![4.0, 4.0]).unwrap();
    let reps = 200;
    let mut worst: f64 = 0.0;
    for (i, &(n, a)) in [(256usize, 0.5), (1024, 0.5), (4096, 1.0), (1024, 2.0)].iter().enumerate() {
        let budget = PrivacyBudget::new(vec![a, a]).unwrap();
        let ts = optimal_truncations(&profile, &budget, n, TruncationMode::Joint).unwrap();
        let chans: Vec<ChannelSpec> = ts.iter().map(|&t| ChannelSpec::laplace_trunc(t, a).unwrap()).collect();
        let ests: Vec<f64> = (0..reps)
            .map(|r| {
                let mut rng = stream(23, (i as u64) << 32 | r);
                let raw = model.sample(n, &mut rng);
                private_joint_moment(&PrivatizedSample::privatize(&raw, chans.clone(), &mut rng).unwrap()).unwrap()
            })
            .collect();
        let mean = ests.iter().sum::<f64>() / reps as f64;
        let var = ests.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let scale: f64 = ts.iter().map(|t| 8.0 * t * t / (a * a)).product::<f64>() / n as f64;
        let raw_scale: f64 = ts.iter().map(|t| t * t / (a * a)).product::<f64>() / n as f64;
        assert!(var / raw_scale > 16.0, "noise variance should dominate: {}", var / raw_scale);
        worst = worst.max(var / scale);
    }
    assert!(worst <= 10.0, "fitted constant {worst}");
}

#[test]
fn noiseless_kde_bias_is_of_order_h_beta() {
    let dens = HolderDensity::standard(1, 2.0).unwrap();
    let kernel = KernelFn::for_smoothness(2.0).unwrap();
    let x0 = 0.3;
    // c = sup|pi''| / 2 * int |u|^2 |K(u)| du.
    let step = 1e-3;
    let sup2 = (0..=4000)
        .map(|i| -2.0 + i as f64 * 1e-3)
        .map(|x| (dens.axis_density(x + step) - 2.0 * dens.axis_density(x) + dens.axis_density(x - step)) / (step * step))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let c = 0.5 * sup2 * simpson(|u| u * u * kernel.eval(u).abs(), -1.0, 1.0, 2000);
    for &h in &[0.5, 0.25, 0.1, 0.05, 0.02] {
        // Expected noiseless release, integrated in kernel coordinates.
        let mean = simpson(|u| kernel.eval(u) * dens.axis_density(x0 + h * u), -1.0, 1.0, 4000);
        let bias = (mean - dens.axis_density(x0)).abs();
        assert!(bias <= c * h * h, "h={h}: bias {bias} > {}", c * h * h);
    }
}

#[test]
fn noiseless_uniform_kde_recovers_one() {
    let n = 200_000;
    let mut rng = stream(24, 0);
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let ch = ChannelSpec::kernel_laplace(0.1, 0.5, KernelFn::legendre(2).unwrap(), 1.0).unwrap();
    let z = PrivatizedSample::privatize(&raw, vec![ch], &mut ZeroNoise).unwrap();
    let est = private_kde(&z).unwrap();
    // Window is inside [0,1], so the bias is zero; allow 4 sd of kernel sampling noise.
    let sd = (KernelFn::legendre(2).unwrap().kappa() / 0.1) / (n as f64).sqrt();
    assert!((est - 1.0).abs() < 4.0 * sd, "{est}");
}

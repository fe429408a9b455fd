use cldp::adaptive::{
    gl_select_bandwidth, gl_select_truncation, truncation_penalty, BandwidthGrid, GlConfig, TruncationGrid,
};
use cldp::channels::{default_audit_grids, privacy_audit, ChannelSpec, KernelFn, PrivacyBudget};
use cldp::estimators::{
    optimal_bandwidth, optimal_truncations, HolderClass, MomentProfile, MultiLevelSample, TruncationMode,
};
use cldp::rng::stream;
use cldp::simdata::{HolderDensity, ParetoFactor};

const N: usize = 1 << 14;
const ALPHA: f64 = 0.5;

fn trunc_channels(d: usize) -> Vec<ChannelSpec> {
    let grid = TruncationGrid::new(N).unwrap().levels().to_vec();
    (0..d).map(|_| ChannelSpec::multi_trunc(grid.clone(), ALPHA).unwrap()).collect()
}

fn bandwidth_channel(x0: f64) -> ChannelSpec {
    let grid = BandwidthGrid::new(N).unwrap().levels().to_vec();
    ChannelSpec::multi_bandwidth(grid, x0, KernelFn::for_smoothness(2.0).unwrap(), ALPHA).unwrap()
}

#[test]
fn multi_level_channels_keep_the_declared_level() {
    for ch in trunc_channels(1).into_iter().chain([bandwidth_channel(0.0)]) {
        let (xs, zs) = default_audit_grids(&ch);
        let r = privacy_audit(&ch, &xs, &zs).max_ratio;
        assert!(r <= ALPHA.exp() * (1.0 + 1e-9), "{r}");
    }
}

#[test]
fn truncation_selection_tracks_the_oracle() {
    let model = ParetoFactor::with_default_tails(vec![4.0, 4.0], 0.5).unwrap();
    let profile = MomentProfile::new(vec![4.0, 4.0]).unwrap();
    let budget = PrivacyBudget::new(vec![ALPHA, ALPHA]).unwrap();
    let t_star = optimal_truncations(&profile, &budget, N, TruncationMode::Joint).unwrap();
    let cfg = GlConfig::default();
    let reps = 100;
    let close = (0..reps)
        .filter(|&r| {
            let mut rng = stream(31, r);
            let raw = model.sample(N, &mut rng);
            let zm = MultiLevelSample::privatize(&raw, trunc_channels(2), &mut rng).unwrap();
            let sel = gl_select_truncation(&zm, &cfg).unwrap();
            sel.t_hat.iter().zip(&t_star).all(|(t, s)| (t / s).ln().abs() <= 4f64.ln())
        })
        .count();
    assert!(close >= 80, "{close} of {reps} within a factor 4 of {t_star:?}");
}

#[test]
fn bandwidth_selection_tracks_the_oracle() {
    let dens = HolderDensity::standard(1, 2.0).unwrap();
    let hc = HolderClass::new(2.0, 1.0, 1).unwrap();
    let budget = PrivacyBudget::new(vec![ALPHA]).unwrap();
    let h_star = optimal_bandwidth(&hc, &budget, N).unwrap().h_star;
    let cfg = GlConfig::default();
    let reps = 100;
    let close = (0..reps)
        .filter(|&r| {
            let mut rng = stream(32, r);
            let raw = dens.sample(N, &mut rng);
            let zm = MultiLevelSample::privatize(&raw, vec![bandwidth_channel(0.0)], &mut rng).unwrap();
            let sel = gl_select_bandwidth(&zm, &cfg).unwrap();
            (sel.h_hat / h_star).ln().abs() <= 4f64.ln()
        })
        .count();
    assert!(close >= 80, "{close} of {reps} within a factor 4 of {h_star}");
}

#[test]
fn selection_is_reproducible() {
    let model = ParetoFactor::with_default_tails(vec![4.0, 4.0], 0.5).unwrap();
    let run = || {
        let mut rng = stream(33, 0);
        let raw = model.sample(N, &mut rng);
        let zm = MultiLevelSample::privatize(&raw, trunc_channels(2), &mut rng).unwrap();
        gl_select_truncation(&zm, &GlConfig::default()).unwrap()
    };
    assert_eq!(run(), run());
    let dens = HolderDensity::standard(1, 2.0).unwrap();
    let run_h = || {
        let mut rng = stream(34, 0);
        let raw = dens.sample(N, &mut rng);
        let zm = MultiLevelSample::privatize(&raw, vec![bandwidth_channel(0.0)], &mut rng).unwrap();
        gl_select_bandwidth(&zm, &GlConfig::default()).unwrap()
    };
    assert_eq!(run_h(), run_h());
}

#[test]
fn penalties_in_the_table_match_the_closed_form() {
    let model = ParetoFactor::with_default_tails(vec![4.0, 4.0], 0.5).unwrap();
    let mut rng = stream(35, 0);
    let raw = model.sample(1024, &mut rng);
    let grid = TruncationGrid::new(1024).unwrap().levels().to_vec();
    let chans: Vec<ChannelSpec> = (0..2).map(|_| ChannelSpec::multi_trunc(grid.clone(), 1.0).unwrap()).collect();
    let zm = MultiLevelSample::privatize(&raw, chans, &mut rng).unwrap();
    let cfg = GlConfig::new(3.0).unwrap();
    let sel = gl_select_truncation(&zm, &cfg).unwrap();
    let beta = 1.0 / 10.0;
    for row in &sel.bv_table {
        let want = 3.0 * 1024f64.ln() * row.candidate.iter().map(|t| 8.0 * t * t / (beta * beta)).product::<f64>() / 1024.0;
        assert!((row.penalty - want).abs() <= 1e-12 * want);
        assert!((truncation_penalty(&cfg, 1024, &row.candidate, &[beta, beta]) - want).abs() <= 1e-12 * want);
    }
}

use eisdrt::circuit::{eval_colloid_circuit, eval_rc_ladder, CircuitParams, ImpedanceModel, RcLadder, RcStage};
use eisdrt::estimator::{estimate_impedance, estimate_noise_floor, period_spectra, simulate_channel, ChannelConfig};
use eisdrt::multisine::{design_multisine, MultisineDesign, MultisineSpec};
use eisdrt::Complex64;

fn reference_spec() -> MultisineSpec {
    design_multisine(&MultisineDesign::default()).unwrap()
}

fn colloid() -> ImpedanceModel {
    CircuitParams::new(1e-6, 100.0, 100.0, 10e-9).unwrap().into()
}

/// Output-noise std that puts the clean output record at the given SNR (dB).
fn noise_for_snr(spec: &MultisineSpec, model: &ImpedanceModel, snr_db: f64) -> f64 {
    let clean = simulate_channel(spec, 1, model, &ChannelConfig::default()).unwrap();
    clean.v_o.rms() / 10f64.powf(snr_db / 20.0)
}

fn complex_variance(z: &[Complex64]) -> f64 {
    let mean = z.iter().sum::<Complex64>() / z.len() as f64;
    z.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (z.len() - 1) as f64
}

#[test]
fn noiseless_round_trip_for_both_models() {
    let spec = reference_spec();
    let ladder = RcLadder::new(50.0, vec![RcStage::from_tau(100.0, 2e-6), RcStage::from_tau(40.0, 1e-4)]).unwrap();
    let p = CircuitParams::new(1e-6, 100.0, 900.0, 2e-9).unwrap();
    for model in [ImpedanceModel::from(p), ladder.clone().into()] {
        let rec = simulate_channel(&spec, 8, &model, &ChannelConfig::default()).unwrap();
        let est = estimate_impedance(&rec).unwrap();
        assert_eq!(est.freqs(), spec.freqs());
        for pt in est.points() {
            let truth = match &model {
                ImpedanceModel::Colloid(p) => eval_colloid_circuit(p, pt.freq).unwrap(),
                ImpedanceModel::Ladder(l) => eval_rc_ladder(l, pt.freq).unwrap(),
            };
            assert!((pt.z - truth).norm() / truth.norm() < 1e-9);
        }
    }
}

#[test]
fn scaling_output_scales_estimate_inversely() {
    let spec = reference_spec();
    let cfg = ChannelConfig { noise_std_vo: 1e-4, seed: 5, ..Default::default() };
    let rec = simulate_channel(&spec, 4, &colloid(), &cfg).unwrap();
    let base = estimate_impedance(&rec).unwrap();
    let mut scaled = rec.clone();
    scaled.v_o.samples.iter_mut().for_each(|v| *v *= 3.5);
    let est = estimate_impedance(&scaled).unwrap();
    for (a, b) in base.points().iter().zip(est.points()) {
        assert!((a.z / 3.5 - b.z).norm() < 1e-12 * a.z.norm());
    }
}

fn estimates_at_tone(spec: &MultisineSpec, periods: usize, std: f64, tone: usize, seeds: u64) -> Vec<Complex64> {
    (0..seeds)
        .map(|seed| {
            let cfg = ChannelConfig { noise_std_vo: std, seed, ..Default::default() };
            let rec = simulate_channel(spec, periods, &colloid(), &cfg).unwrap();
            estimate_impedance(&rec).unwrap().points()[tone].z
        })
        .collect()
}

#[test]
fn averaging_shrinks_variance_as_one_over_periods() {
    let spec = reference_spec();
    let std = noise_for_snr(&spec, &colloid(), 40.0);
    let ps = [1usize, 2, 4, 8, 16];
    let vars: Vec<f64> = ps.iter().map(|&p| complex_variance(&estimates_at_tone(&spec, p, std, 30, 200))).collect();
    let x: Vec<f64> = ps.iter().map(|&p| (p as f64).ln()).collect();
    let y: Vec<f64> = vars.iter().map(|v| v.ln()).collect();
    let (mx, my) = (x.iter().sum::<f64>() / 5.0, y.iter().sum::<f64>() / 5.0);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    assert!((slope + 1.0).abs() <= 0.15, "slope {slope}");
    let ratio = (vars[0] / vars[4]).sqrt();
    assert!((ratio - 4.0).abs() <= 0.8, "std ratio {ratio}");
}

#[test]
fn noise_floor_matches_white_noise_dft() {
    let spec = reference_spec();
    let sigma = 2e-3;
    let n = spec.samples_per_period() as f64;
    let expected = sigma * n.sqrt();
    let seeds = 100;
    let mut mean_std = vec![0.0; spec.tones().len()];
    let mut single = Vec::new();
    for seed in 0..seeds {
        let cfg = ChannelConfig { noise_std_vo: sigma, seed, ..Default::default() };
        let rec = simulate_channel(&spec, 8, &colloid(), &cfg).unwrap();
        for (m, b) in mean_std.iter_mut().zip(estimate_noise_floor(&rec).unwrap()) {
            *m += b.std / seeds as f64;
        }
        // Monte Carlo cross-check on the first period alone
        single.push(period_spectra(&rec.v_o, &spec)[0][10]);
    }
    for (k, m) in mean_std.iter().enumerate() {
        assert!((m - expected).abs() / expected < 0.15, "bin {k}: {m} vs {expected}");
    }
    let mc = complex_variance(&single).sqrt();
    assert!((mc - expected).abs() / expected < 0.15, "{mc} vs {expected}");
}

#[test]
fn noise_floor_ignores_excitation_content() {
    let a = reference_spec();
    let b = design_multisine(&MultisineDesign { seed: 77, ..Default::default() }).unwrap();
    let cfg = ChannelConfig { noise_std_vo: 1e-3, seed: 9, ..Default::default() };
    let na = estimate_noise_floor(&simulate_channel(&a, 6, &colloid(), &cfg).unwrap()).unwrap();
    let nb = estimate_noise_floor(&simulate_channel(&b, 6, &colloid(), &cfg).unwrap()).unwrap();
    for (x, y) in na.iter().zip(&nb) {
        assert!((x.std - y.std).abs() < 1e-6 * x.std);
    }
}

#[test]
fn input_noise_is_independent_of_output_noise() {
    let spec = reference_spec();
    let cfg = ChannelConfig { noise_std_vi: 1e-3, noise_std_vo: 1e-3, seed: 4, ..Default::default() };
    let model: ImpedanceModel = RcLadder::resistor(100.0).unwrap().into();
    let rec = simulate_channel(&spec, 1, &model, &cfg).unwrap();
    // the clean parts are identical, so any difference is the two noise streams
    let diff: Vec<f64> = rec.v_i.samples.iter().zip(&rec.v_o.samples).map(|(a, b)| a - b).collect();
    let var = diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64;
    assert!((var - 2e-6).abs() / 2e-6 < 0.05, "{var}");
}

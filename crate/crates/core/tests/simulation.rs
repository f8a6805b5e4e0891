use statrs::distribution::{Beta, ContinuousCDF};

use sadsac::models::{Ldr1Params, PlnParams};
use sadsac::rng::substream;
use sadsac::sac::{mle_power_sac, FirstAppearanceSample};
use sadsac::simulate::{sim_fof, sim_mppp_window, sim_rho_from_fof, FofSampler};
use sadsac::{FrequencyOfFrequencies, Model};

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 0.1% critical value.
fn ks_critical(n: usize) -> f64 {
    1.95 / (n as f64).sqrt()
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (
        m,
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0),
    )
}

fn model() -> Model {
    PlnParams::new(0.5, 1.0, 40.0).unwrap().into()
}

#[test]
fn sim_fof_is_deterministic_per_seed() {
    let m = model();
    assert_eq!(sim_fof(&m, 1.0, 11).unwrap(), sim_fof(&m, 1.0, 11).unwrap());
    assert_ne!(sim_fof(&m, 1.0, 11).unwrap(), sim_fof(&m, 1.0, 12).unwrap());
}

#[test]
fn both_simulators_match_model_moments() {
    let m = model();
    let reps = 1500;
    let psi = m.psi(1.0).unwrap();
    let e1 = m.expected_nk(1, 1.0).unwrap();
    let sampler = FofSampler::new(&m, 1.0).unwrap();
    assert_eq!(
        sampler.sample(&mut substream(5, 0)),
        sim_fof(&m, 1.0, 5).unwrap()
    );
    for (name, draw) in [
        (
            "fof",
            Box::new(|s| sampler.sample(&mut substream(s, 0)))
                as Box<dyn Fn(u64) -> FrequencyOfFrequencies>,
        ),
        (
            "mppp",
            Box::new(|s| sim_mppp_window(&m, 1.0, s).unwrap().fof()),
        ),
    ] {
        let fofs: Vec<_> = (0..reps).map(|s| draw(s as u64)).collect();
        let (mn, vn) = mean_var(&fofs.iter().map(|f| f.n_plus() as f64).collect::<Vec<_>>());
        let (m1, v1) = mean_var(&fofs.iter().map(|f| f.get(1) as f64).collect::<Vec<_>>());
        let se = |v: f64| (v / reps as f64).sqrt();
        assert!(
            (mn - psi).abs() < 4.0 * se(vn),
            "{name}: mean n_+ {mn} vs {psi}"
        );
        assert!(
            (m1 - e1).abs() < 4.0 * se(v1),
            "{name}: mean n_1 {m1} vs {e1}"
        );
        // N_+ is Poisson, so its variance matches its mean
        assert!(
            (vn / psi - 1.0).abs() < 0.15,
            "{name}: var n_+ {vn} vs {psi}"
        );
    }
}

#[test]
fn neighbouring_seeds_are_uncorrelated() {
    let m = model();
    let sampler = FofSampler::new(&m, 1.0).unwrap();
    let xs: Vec<f64> = (0..2000)
        .map(|s| sampler.sample(&mut substream(s, 0)).n_plus() as f64)
        .collect();
    let (mu, var) = mean_var(&xs);
    let lag1 = xs
        .windows(2)
        .map(|w| (w[0] - mu) * (w[1] - mu))
        .sum::<f64>()
        / ((xs.len() - 1) as f64 * var);
    assert!(
        lag1.abs() < 4.0 / (xs.len() as f64).sqrt(),
        "lag-1 correlation {lag1}"
    );
}

#[test]
fn appearance_times_are_uniform_order_statistics() {
    // given m appearances in [0, t0], the first is t0·Beta(1, m)
    let m: Model = Ldr1Params::new(30.0, 0.2, 0.6).unwrap().into();
    let t0 = 2.0;
    let mut firsts = Vec::new();
    for seed in 0..200 {
        for s in sim_mppp_window(&m, t0, seed).unwrap().species {
            assert!(s.times.windows(2).all(|w| w[0] <= w[1]));
            assert!(s.times.iter().all(|&t| (0.0..=t0).contains(&t)));
            if s.times.len() == 3 {
                firsts.push(s.times[0] / t0);
            }
        }
    }
    assert!(firsts.len() > 500, "{}", firsts.len());
    let beta = Beta::new(1.0, 3.0).unwrap();
    let n = firsts.len();
    let d = ks_statistic(firsts, |x| beta.cdf(x));
    assert!(d < ks_critical(n), "KS {d} with n = {n}");
}

#[test]
fn rho_times_from_fof_follow_beta() {
    let fof = FrequencyOfFrequencies::new(1.5, [(1, 40), (5, 3000)]).unwrap();
    let data = sim_rho_from_fof(&fof, 2, 4).unwrap();
    assert_eq!(data.low_counts(), &[40]);
    assert_eq!(data.times().len(), 3000);
    let xs: Vec<f64> = data.times().iter().map(|t| t / 1.5).collect();
    let (mean, _) = mean_var(&xs);
    assert!((mean - 2.0 / 6.0).abs() < 0.01, "{mean}");
    let beta = Beta::new(2.0, 4.0).unwrap();
    let d = ks_statistic(xs, |x| beta.cdf(x));
    assert!(d < ks_critical(3000), "KS {d}");
}

#[test]
fn rho_one_keeps_every_species() {
    let m = model();
    let real = sim_mppp_window(&m, 1.0, 8).unwrap();
    let data = real.rho_data(1).unwrap();
    assert_eq!(data.n_plus(), real.n_plus());
    assert_eq!(data.times(), real.first_appearances().as_slice());
}

#[test]
fn power_sac_exponent_is_consistent() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    for z in [0.2, 0.5, 0.8] {
        // first appearances of ψ(t) ∝ t^z on (0, 1]
        let times: Vec<f64> = (0..20_000)
            .map(|_| rng.random::<f64>().powf(1.0 / z))
            .collect();
        let fit = mle_power_sac(&FirstAppearanceSample::new(times, 1.0).unwrap()).unwrap();
        assert!(
            (fit.z - z).abs() < 4.0 * z / (20_000f64).sqrt(),
            "z {z}: {}",
            fit.z
        );
    }
}

#[test]
fn dkw_band_covers_the_true_curve() {
    use rand::{Rng, SeedableRng};
    use sadsac::sac::dkw_band;
    let z = 0.5;
    let reps = 400;
    let mut covered = 0;
    for seed in 0..reps {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let times: Vec<f64> = (0..150)
            .map(|_| rng.random::<f64>().powf(1.0 / z))
            .collect();
        let sample = FirstAppearanceSample::new(times, 1.0).unwrap();
        let band = dkw_band(&sample, 0.05).unwrap();
        // the supremum is attained at a jump, from one side or the other
        let inside = sample.times().iter().all(|&t| {
            let (_, lo, hi) = band.cdf_band(t);
            let (_, lo_left, hi_left) = band.cdf_band(t - 1e-12);
            let f = t.powf(z);
            lo <= f && f <= hi && lo_left <= f && f <= hi_left
        });
        covered += inside as u64;
    }
    assert!(
        covered as f64 / reps as f64 >= 0.93,
        "coverage {covered}/{reps}"
    );
}

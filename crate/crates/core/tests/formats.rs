use sadsac::bootstrap::{e_star_interval, unseen_interval, BootstrapConfig, RareCountsModel};
use sadsac::models::PlnParams;
use sadsac::richness::{self, Method, XiRule};
use sadsac::simulate::sim_mppp_window;
use sadsac::{datasets, BinnedSac, Error, FrequencyOfFrequencies, Model, RhoAppearanceData};

#[test]
fn fof_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bird.csv");
    let fof = datasets::bird();
    fof.save(&path).unwrap();
    assert_eq!(FrequencyOfFrequencies::load(&path, None).unwrap(), fof);
}

#[test]
fn fof_needs_t0_from_somewhere() {
    let text = "k,count\n1,4\n2,1\n";
    let err = FrequencyOfFrequencies::parse_csv(text, "x.csv".as_ref(), None).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    let fof = FrequencyOfFrequencies::parse_csv(text, "x.csv".as_ref(), Some(2.0)).unwrap();
    assert_eq!(fof.t0(), 2.0);
    assert_eq!(fof.n_plus(), 5);
}

#[test]
fn fof_rejects_bad_rows() {
    for text in [
        "k,count\n0,3\n",
        "k,count\n1,-2\n",
        "k,count\n1,2\n1,3\n",
        "n,k\n1,2\n",
        "k,count\n1\n",
    ] {
        let r = FrequencyOfFrequencies::parse_csv(text, "x.csv".as_ref(), Some(1.0));
        assert!(r.is_err(), "accepted {text:?}");
        assert!(r.unwrap_err().is_validation(), "{text:?}");
    }
}

#[test]
fn rho_data_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rho.csv");
    let m: Model = PlnParams::new(0.0, 1.0, 30.0).unwrap().into();
    let data = sim_mppp_window(&m, 1.0, 3).unwrap().rho_data(3).unwrap();
    data.save(&path).unwrap();
    let back = RhoAppearanceData::load(&path, None).unwrap();
    assert_eq!(back, data);
    assert_eq!(back.low_counts().len(), 2);
}

#[test]
fn binned_sac_roundtrip() {
    let b = BinnedSac::from_times(&[0.1, 0.15, 0.4, 0.9], vec![0.25, 0.5, 1.0]).unwrap();
    assert_eq!(b.cumulative(), &[2, 3, 4]);
    let back = BinnedSac::parse_csv(
        &format!("t,cum_species\n0,0\n{}", &b.to_csv()[14..]),
        "s.csv".as_ref(),
    )
    .unwrap();
    assert_eq!(back, b);
    assert!(BinnedSac::parse_csv("t,cum_species\n0.5,4\n1.0,3\n", "s.csv".as_ref()).is_err());
}

#[test]
fn bundled_datasets_load() {
    for name in datasets::NAMES {
        let fof = datasets::by_name(name).unwrap();
        assert!(fof.n_plus() > 0, "{name}");
        let text = datasets::csv_text(name).unwrap();
        assert_eq!(
            FrequencyOfFrequencies::parse_csv(text, name.as_ref(), None).unwrap(),
            fof
        );
    }
    assert!(datasets::by_name("nope").is_err());
}

#[test]
fn richness_and_extrapolation_share_their_limit() {
    for fof in [datasets::swine(), datasets::tomato(), datasets::bird()] {
        for (method, rule) in [
            (Method::EStar, XiRule::ModifiedFirstOrder),
            (Method::Chao1, XiRule::ZerothOrder),
        ] {
            let e = richness::unseen(&fof, method).total;
            let lim = richness::extrapolate_psi(&fof, &rule, f64::INFINITY).unwrap();
            assert!(
                e == lim || (e.value() - lim.value()).abs() < 1e-9 * e.value(),
                "{method}: {e} vs {lim}"
            );
        }
    }
}

#[test]
fn rare_counts_shift_back_when_a_count_is_zero() {
    let fof = FrequencyOfFrequencies::new(1.0, [(1, 10), (3, 4), (5, 2)]).unwrap();
    let rc = RareCountsModel::new(&fof).unwrap();
    assert!(rc.shifted);
    assert!(rc.t < 1.0);
    assert!(rc.means.iter().all(|&m| m > 0.0), "{:?}", rc.means);
    assert!(rc.psi < fof.n_plus() as f64);

    let plain = RareCountsModel::new(&datasets::bird()).unwrap();
    assert!(!plain.shifted);
}

#[test]
fn bootstrap_intervals_are_reproducible_and_ordered() {
    let fof = datasets::tomato();
    let cfg = BootstrapConfig::new(199, 0.05, 42).unwrap();
    let a = e_star_interval(&fof, &cfg).unwrap();
    assert_eq!(a, e_star_interval(&fof, &cfg).unwrap());
    assert!(a.lower <= a.upper);
    assert!(a.lower.value() >= fof.n_plus() as f64);
    let u = unseen_interval(&fof, &cfg).unwrap();
    assert!(u.lower <= u.upper);
    assert!(BootstrapConfig::new(200, 0.05, 1).is_err());
}

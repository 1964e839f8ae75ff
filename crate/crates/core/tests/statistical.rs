//! Statistical checks against the benchmark simulation model.

use std::collections::BTreeMap;

use lmshift::dataset::Dataset;
use lmshift::estimation::stats::{bootstrap_se, sd};
use lmshift::estimation::{dr_fate, DrfCorrection, dr_nate, fit_linear, fit_logistic, DesignFormula, EstimatorConfig};
use lmshift::recovery::{QuerySpec, Target};
use lmshift::scm::{appendix_a, APPENDIX_A_30, APPENDIX_A_50};
use lmshift::{Error, NodeId};

fn rows_where(d: &Dataset, col: &str, v: f64) -> Vec<usize> {
    let c = d.raw_column(col).unwrap();
    (0..c.len()).filter(|&i| c[i] == v).collect()
}

fn formula(s: &str) -> DesignFormula {
    s.parse().unwrap()
}

fn query() -> QuerySpec {
    QuerySpec::new("A", "Y1", Target::Nate)
}

#[test]
fn exposure_mechanism_in_the_missing_context() {
    let d = appendix_a(APPENDIX_A_50.0, APPENDIX_A_50.1).sample_observational(1_000_000, 21).unwrap();
    let r0 = rows_where(&d, "R_Y0", 0.0);
    let fit = fit_logistic(&d, &formula("1 + W"), "A", &r0).unwrap();
    assert!(fit.converged);
    assert!((fit.coefficients[0] + 0.5).abs() < 0.05, "{:?}", fit.coefficients);
    assert!((fit.coefficients[1] - 1.5).abs() < 0.05, "{:?}", fit.coefficients);
}

#[test]
fn outcome_mechanism_follows_the_context() {
    let d = appendix_a(APPENDIX_A_30.0, APPENDIX_A_30.1)
        .sample_full(400_000, 5, &BTreeMap::new())
        .unwrap();
    let check = |rows: &[usize], f: &str, want: &[f64]| {
        let fit = fit_linear(&d, &formula(f), "Y1", rows, None).unwrap();
        for (got, w) in fit.coefficients.iter().zip(want) {
            assert!((got - w).abs() < 0.25, "{f}: {:?} vs {want:?}", fit.coefficients);
        }
    };
    check(&rows_where(&d, "R_Y0", 0.0), "1 + W + A + A:W", &[4.0, 6.0, 8.0, -8.0]);
    check(
        &rows_where(&d, "R_Y0", 1.0),
        "1 + W + A + Y0 + A:W + A:Y0",
        &[3.0, 1.8, -2.0, -1.5, -0.8, 4.0],
    );
}

#[test]
fn fully_observed_effect_ignores_the_missingness_model() {
    let a = appendix_a(APPENDIX_A_50.0, APPENDIX_A_50.1).oracle_effects(&query(), 400_000, 9).unwrap();
    let b = appendix_a(APPENDIX_A_30.0, APPENDIX_A_30.1).oracle_effects(&query(), 400_000, 9).unwrap();
    assert_eq!(a.fate, b.fate);
    assert_ne!(a.nate, b.nate);
    // E[-2 - 0.8 W + 4 Y0] with E[Y0] = -3 + E[W^2] = -2.
    assert!((a.fate + 10.0).abs() < 4.0 * a.mc_se_fate, "{a:?}");
}

#[test]
fn natural_effect_matches_the_context_mixture() {
    let scm = appendix_a(APPENDIX_A_50.0, APPENDIX_A_50.1);
    let o = scm.oracle_effects(&query(), 1_000_000, 2).unwrap();
    let d = scm.sample_full(1_000_000, 3, &BTreeMap::new()).unwrap();
    let (w, y0, r) = (
        d.raw_column("W").unwrap(),
        d.raw_column("Y0").unwrap(),
        d.raw_column("R_Y0").unwrap(),
    );
    let cate: Vec<f64> = (0..w.len())
        .map(|i| if r[i] == 0.0 { 8.0 - 8.0 * w[i] } else { -2.0 - 0.8 * w[i] + 4.0 * y0[i] })
        .collect();
    let m = cate.iter().sum::<f64>() / cate.len() as f64;
    let se = sd(&cate) / (cate.len() as f64).sqrt();
    assert!((m - o.nate).abs() < 4.0 * (se * se + o.mc_se_nate * o.mc_se_nate).sqrt(), "{m} vs {o:?}");
}

#[test]
fn doubly_robust_estimators_track_their_oracles() {
    let scm = appendix_a(APPENDIX_A_50.0, APPENDIX_A_50.1);
    let o = scm.oracle_effects(&query(), 1_000_000, 1).unwrap();
    let cfg = EstimatorConfig::appendix_a();
    let reps: Vec<(f64, f64)> = lmshift::par::map_indices(40, |k| {
        let d = scm.sample_observational(5000, 1000 + k as u64).unwrap();
        (dr_nate(&d, &cfg).unwrap().point, dr_fate(&d, &cfg).unwrap().point)
    });
    let mean = |f: fn(&(f64, f64)) -> f64| reps.iter().map(f).sum::<f64>() / reps.len() as f64;
    let (n, f) = (mean(|r| r.0), mean(|r| r.1));
    assert!((n - o.nate).abs() < 0.25, "DR.N {n} vs {}", o.nate);
    assert!((f - o.fate).abs() < 0.25, "DR.F {f} vs {}", o.fate);
}

#[test]
fn dr_nate_bootstrap_se_matches_replication_spread() {
    let scm = appendix_a(APPENDIX_A_50.0, APPENDIX_A_50.1);
    let cfg = EstimatorConfig::appendix_a();
    let d = scm.sample_observational(5000, 77).unwrap();
    let boot = bootstrap_se(|d| Ok(dr_nate(d, &cfg)?.point), &d, 200, 3).unwrap();
    let points = lmshift::par::map_indices(200, |k| {
        dr_nate(&scm.sample_observational(5000, 5000 + k as u64).unwrap(), &cfg).unwrap().point
    });
    let spread = sd(&points);
    assert!((boot / spread - 1.0).abs() <= 0.3, "bootstrap {boot} vs replication {spread}");
}

#[test]
fn dr_fate_asymptotic_se_matches_bootstrap() {
    // Only the pseudo-outcome residual has a valid sandwich form.
    let scm = appendix_a(APPENDIX_A_50.0, APPENDIX_A_50.1);
    let mut cfg = EstimatorConfig::appendix_a();
    cfg.drf_correction = DrfCorrection::PseudoResidual;
    let d = scm.sample_observational(5000, 78).unwrap();
    let asym = dr_fate(&d, &cfg).unwrap().se;
    let boot = bootstrap_se(|d| Ok(dr_fate(d, &cfg)?.point), &d, 200, 4).unwrap();
    assert!((asym / boot - 1.0).abs() <= 0.3, "asymptotic {asym} vs bootstrap {boot}");
}

#[test]
fn missing_cells_are_never_read() {
    let d = appendix_a(APPENDIX_A_50.0, APPENDIX_A_50.1).sample_observational(3000, 8).unwrap();
    assert!(d.masked_count("Y0_obs").unwrap() > 0);
    let mut cfg = EstimatorConfig::appendix_a();
    assert!(dr_nate(&d, &cfg).is_ok());
    cfg.nate.outcome = formula("1 + W + A + Y0");
    assert!(matches!(dr_nate(&d, &cfg), Err(Error::MaskedCell { .. })));
}

#[test]
fn intervening_on_the_indicator_removes_masking() {
    let scm = appendix_a(APPENDIX_A_50.0, APPENDIX_A_50.1);
    let d = scm
        .sample_interventional(&BTreeMap::from([(NodeId::from("R_Y0"), 1.0)]), 2000, 1)
        .unwrap();
    assert_eq!(d.masked_count("Y0_obs").unwrap(), 0);
}

use std::fs;

use blobflow::scenario::{preset, run_scenario, ScenarioConfig};
use blobflow::Error;

fn heat_coarse() -> ScenarioConfig {
    let mut c = preset("heat1d").unwrap();
    c.grid.h = 0.02;
    c.integrator.record_times.clear();
    c
}

#[test]
fn heat_run_reports_errors_against_the_exact_solution() {
    let run = run_scenario(&heat_coarse(), None).unwrap();
    let errs = run.errors.as_ref().unwrap();
    assert_eq!(errs.columns, vec!["w2", "l1", "linf"]);
    assert_eq!(errs.times, vec![0.0, 0.05]);
    let last = errs.rows.last().unwrap();
    // eps ~ 0.021: the blob density is a Gaussian smoothing of width ~ eps
    assert!(last[0] > 0.0 && last[0] < 0.02, "w2 {}", last[0]);
    assert!(last[1] > 0.0 && last[1] < 0.01, "l1 {}", last[1]);
    assert!(last[2] > 0.0 && last[2] < 0.01, "linf {}", last[2]);
    assert!(run.trajectory.blow_up.is_none());
    assert_eq!(run.manifest.derived.n_particles, 251);
}

#[test]
fn artifacts_are_written_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let run = run_scenario(&heat_coarse(), Some(&a)).unwrap();
    for f in ["diagnostics.csv", "errors.csv", "density_000.csv", "density_001.csv", "manifest.toml"] {
        assert!(a.join(f).exists(), "{f} missing");
    }
    let header = fs::read_to_string(a.join("diagnostics.csv")).unwrap();
    assert!(header.starts_with("t,energy,dissipation,second_moment\n"));

    // the manifest alone reproduces the run bit for bit
    let again = ScenarioConfig::load(&a.join("manifest.toml")).unwrap();
    assert_eq!(again, run.manifest.scenario);
    run_scenario(&again, Some(&b)).unwrap();
    for f in ["diagnostics.csv", "errors.csv", "density_001.csv", "manifest.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn invalid_exponent_is_rejected_with_its_constraint() {
    let mut c = heat_coarse();
    c.m = 0.5;
    let err = run_scenario(&c, None).err().unwrap();
    assert!(err.is_validation());
    assert!(err.to_string().contains("m >= 1"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let src = r#"
        name = "x"
        dimension = 1
        m = 1.0
        [initial]
        bumps = [{ profile = "heat", tau = 0.1, wieght = 2.0 }]
        [grid]
        h = 0.1
    "#;
    assert!(matches!(ScenarioConfig::from_toml_str(src), Err(Error::Parse(_))));
}

#[test]
fn supercritical_keller_segel_second_moment_decreases() {
    let mut c = preset("ks1d_supercritical").unwrap();
    c.grid.h = 0.05;
    c.integrator.t_final = 0.2;
    c.integrator.record_times = vec![0.05, 0.1, 0.15];
    c.output.densities = false;
    let run = run_scenario(&c, None).unwrap();
    let m2 = run.series.column("second_moment").unwrap();
    assert!(m2.windows(2).all(|w| w[1] < w[0]), "{m2:?}");
    // the central particles collide and are fused, and the run still finishes
    assert!(run.trajectory.blow_up.is_none());
    assert!(run.manifest.derived.merged_particles > 0);
    let mass = run.trajectory.last().1.total_mass();
    assert!((mass - run.manifest.derived.total_mass).abs() < 1e-14);
}

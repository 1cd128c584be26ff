use nta::{experiments, run, PyConfig, PyDomain};

#[test]
fn all_experiments_are_listed() {
    let names = experiments();
    assert_eq!(names.len(), 9);
    assert!(names.contains(&"self-improve") && names.contains(&"polygon"));
}

#[test]
fn config_defaults_and_errors() {
    let c = PyConfig::parse("[domain]\nkind = \"sawtooth\"\nlipschitz = 0.5\n").unwrap();
    assert_eq!(c.aperture(), 4.0);
    assert_eq!(c.dim(), 2);
    assert!(PyConfig::parse("[sweep]\np_grid = [4.0, 3.0]\n").is_err());
}

#[test]
fn domain_queries() {
    let d = PyDomain::sawtooth(0.5, 1.0, 8.0, 8.0).unwrap();
    let x = vec![0.2, d.psi(vec![0.2]) + 0.3];
    let delta = d.distance_to_boundary(x.clone()).unwrap();
    let gap = d.vertical_gap(x.clone()).unwrap();
    assert!((gap - 0.3).abs() < 1e-12 && delta <= gap);
    let z = vec![0.2, d.psi(vec![0.2])];
    assert!(d.in_cone(z, x, None, None).unwrap());
    assert!(d.distance_to_boundary(vec![0.0, -5.0]).is_err());
}

#[test]
fn hardy_run_from_bindings() {
    let c = PyConfig::parse("[domain]\ndim = 2\ntruncation = 4.0\nmesh_h = 0.05\n").unwrap();
    let r = run(&c, "hardy", None).unwrap();
    assert!(r.passed);
    assert_eq!(r.reports.len(), 4);
    assert!(r.manifest_json.contains("\"experiment\": \"hardy\""));
    assert!(run(&c, "nope", None).is_err());
}

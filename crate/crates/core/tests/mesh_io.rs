use std::path::Path;

use nitsche_bps::geometry::{build_partition, cartesian_quad_mesh, format_mesh, parse_mesh, structured_tri_mesh};
use nitsche_bps::harness::{run_experiment, ExperimentConfig, GridKind};
use nitsche_bps::precond::Variant;
use nitsche_bps::Error;

#[test]
fn structured_mesh_roundtrips_through_text() {
    let part = build_partition(1).unwrap();
    let mesh = structured_tri_mesh(&part, 3, 2).unwrap();
    let text = format_mesh(&mesh);
    let back = parse_mesh(&text, Path::new("roundtrip.mesh"), &part).unwrap();
    assert_eq!(back.n_elements(), mesh.n_elements());
    assert_eq!(format_mesh(&back), text);
}

#[test]
fn quad_mesh_roundtrips_through_text() {
    let part = build_partition(2).unwrap();
    let mesh = cartesian_quad_mesh(&part, 3).unwrap();
    let text = format_mesh(&mesh);
    let back = parse_mesh(&text, Path::new("q.mesh"), &part).unwrap();
    assert_eq!(format_mesh(&back), text);
}

#[test]
fn file_grid_reproduces_generated_grid() {
    let part = build_partition(2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("N16_n128.mesh");
    std::fs::write(&path, format_mesh(&structured_tri_mesh(&part, 3, 1).unwrap())).unwrap();
    let generated = run_experiment(&ExperimentConfig::structured(2, 3, 1, Variant::P)).unwrap();
    let cfg = ExperimentConfig { grid: GridKind::File, mesh: Some(path), ..ExperimentConfig::structured(2, 3, 1, Variant::P) };
    let loaded = run_experiment(&cfg).unwrap();
    assert_eq!(loaded.n_elements, 128);
    assert!((loaded.kappa - generated.kappa).abs() < 1e-10 * generated.kappa);
}

fn parse_error(text: &str) -> (usize, String) {
    let part = build_partition(1).unwrap();
    match parse_mesh(text, Path::new("bad.mesh"), &part) {
        Err(Error::Parse { line, msg, .. }) => (line, msg),
        other => panic!("expected a parse error, got {:?}", other.map(|m| m.n_elements())),
    }
}

#[test]
fn malformed_files_report_lines() {
    assert_eq!(parse_error("").0, 1);
    assert!(parse_error("subdomains 3\n").1.contains("partition has 4"));
    let (line, msg) = parse_error("subdomains 4\nsubdomain 0 nodes 3 elements 1\n0 0\n0.5 0\n0 0.5\n0 1 7\n");
    assert_eq!(line, 6);
    assert!(msg.contains("out of range"));
    let (line, _) = parse_error("subdomains 4\nsubdomain 0 nodes 1 elements 0\n0 zero\n");
    assert_eq!(line, 3);
    let (_, msg) = parse_error("subdomains 4\nsubdomain 9 nodes 0 elements 0\n");
    assert!(msg.contains("subdomain id 9"));
}

#[test]
fn missing_file_is_an_io_error() {
    let part = build_partition(1).unwrap();
    let err = nitsche_bps::geometry::load_mesh(Path::new("/nonexistent/x.mesh"), &part).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

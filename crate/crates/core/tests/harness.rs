mod common;

use rand::Rng;
use speckle_pat::geometry::{star_phantom, ArrayKind, ObjectField, ObjectGrid};
use speckle_pat::harness::io::{export_image, read_matrix, read_pgm};
use speckle_pat::harness::{
    compute_metrics, pearson, read_simulation, reconstruct, reconstruct_from_dir, run_experiment, simulate,
    write_simulation, ExperimentConfig, GridSpec, Method, ReconContext,
};
use speckle_pat::Error;

fn tiny(kind: ArrayKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk_scale(kind);
    cfg.data_grid = GridSpec::square(15);
    cfg.recon_grid = GridSpec::square(11);
    cfg.array.count = 4;
    cfg.recordings = 40;
    cfg.batch_size = 16;
    cfg.speckle_sizes = vec![24e-6, 12e-6];
    cfg
}

/// Two-pass Pearson correlation, independent of the library's streaming form.
fn two_pass_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    sxy / (sxx * syy).sqrt()
}

#[test]
fn streaming_correlation_matches_two_pass_formula() {
    let grid = ObjectGrid::new(41, 41, 160e-6, 160e-6, 0.0).unwrap();
    let truth = star_phantom(&grid, 8, 24e-6, 72e-6).unwrap();
    let mut r = common::rng(4);
    let noisy: Vec<f64> = truth.rho().iter().map(|v| v + 0.1 * r.random_range(-1.0..1.0)).collect();
    let streaming = pearson(&noisy, truth.rho()).unwrap();
    assert!((streaming - two_pass_pearson(&noisy, truth.rho())).abs() <= 1e-12);
    let field = ObjectField::new(grid, noisy).unwrap();
    let m = compute_metrics(&field, &truth).unwrap();
    assert!((m.correlation - streaming).abs() <= 1e-12);
}

#[test]
fn metrics_against_a_finer_truth() {
    let fine = ObjectGrid::new(41, 41, 160e-6, 160e-6, 0.0).unwrap();
    let coarse = ObjectGrid::new(33, 33, 160e-6, 160e-6, 0.0).unwrap();
    // bilinear resampling is exact for affine fields
    let affine = |g: &ObjectGrid| g.points().iter().map(|p| 1.0 + p[0] * 1e4 - p[1] * 2e4).collect::<Vec<_>>();
    let truth = ObjectField::new(fine.clone(), affine(&fine)).unwrap();
    let estimate = ObjectField::new(coarse.clone(), affine(&coarse)).unwrap();
    let m = compute_metrics(&estimate, &truth).unwrap();
    assert!((m.correlation - 1.0).abs() < 1e-12 && m.rel_l2 < 1e-12);
}

#[test]
fn exported_field_round_trips_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let grid = ObjectGrid::new(7, 5, 1.0, 1.0, 0.0).unwrap();
    let mut r = common::rng(9);
    let values: Vec<f64> = (0..35).map(|_| r.random_range(-1e3..1e3)).collect();
    let field = ObjectField::new(grid, values.clone()).unwrap();
    let raw = export_image(&field, &dir.path().join("f.pgm"), true).unwrap();
    let back = read_matrix(&raw).unwrap();
    assert_eq!((back.rows, back.cols), (5, 7));
    assert!(back.data.iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()));
    let constant = ObjectField::new(ObjectGrid::new(3, 3, 1.0, 1.0, 0.0).unwrap(), vec![0.25; 9]).unwrap();
    export_image(&constant, &dir.path().join("c.pgm"), false).unwrap();
    let (_, _, px) = read_pgm(&dir.path().join("c.pgm")).unwrap();
    assert!(px.iter().all(|&p| p == px[0]));
}

#[test]
fn run_writes_one_entry_per_method_and_size() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(ArrayKind::Square);
    cfg.output_dir = Some(dir.path().to_path_buf());
    let result = run_experiment(&cfg).unwrap();
    assert_eq!(result.entries.len(), 4);
    for &size in &cfg.speckle_sizes {
        for method in [Method::First, Method::Second] {
            let e = result.entry(method, size).unwrap();
            assert!(e.metrics.correlation.is_finite() && e.metrics.rel_l2.is_finite());
            assert_eq!(e.field.grid().len(), 121);
        }
    }
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("method,speckle_size_m,correlation,rel_l2,wall_seconds"));
    assert_eq!(lines.count(), 4);
    for name in ["config.json", "timings.json", "truth.pgm", "truth.bin", "fields/second_order_size1.pgm", "fields/first_order_size0.bin"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let timings: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("timings.json")).unwrap()).unwrap();
    for stage in ["operator_build", "data_simulation", "moment_accumulation", "factorization", "algorithm1"] {
        assert!(timings[stage].as_f64().unwrap() >= 0.0, "{stage}");
    }
}

#[test]
fn single_recording_runs() {
    let mut cfg = tiny(ArrayKind::Circular);
    cfg.recordings = 1;
    let result = run_experiment(&cfg).unwrap();
    assert_eq!(result.entries.len(), 4);
    assert!(result.entries.iter().all(|e| e.metrics.correlation.is_finite()));
}

#[test]
fn identical_seeds_give_identical_metrics_files() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let run = |dir: &std::path::Path, seed| {
        let mut cfg = tiny(ArrayKind::Square);
        cfg.seed = seed;
        cfg.output_dir = Some(dir.to_path_buf());
        run_experiment(&cfg).unwrap();
        std::fs::read(dir.join("metrics.csv")).unwrap()
    };
    let first = run(a.path(), 11);
    assert_eq!(first, run(b.path(), 11));
    assert_ne!(first, run(c.path(), 12));
}

#[test]
fn stored_moments_reproduce_the_end_to_end_result() {
    let cfg = tiny(ArrayKind::Square);
    let sim = simulate(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_simulation(&cfg, &sim, dir.path()).unwrap();
    let loaded = read_simulation(dir.path()).unwrap();
    for (a, b) in loaded.iter().zip(&sim.sizes) {
        assert_eq!(a.moments, b.moments);
        assert_eq!(a.noise_sigma.to_bits(), b.noise_sigma.to_bits());
    }
    let out = tempfile::tempdir().unwrap();
    let entries = reconstruct_from_dir(&cfg, dir.path(), Method::Second, out.path()).unwrap();
    let direct = run_experiment(&cfg).unwrap();
    for e in &entries {
        let d = direct.entry(Method::Second, e.speckle_size).unwrap();
        assert_eq!(e.field.rho(), d.field.rho());
    }
    assert!(out.path().join("metrics.csv").exists());
}

#[test]
fn reused_context_skips_factorization() {
    let cfg = tiny(ArrayKind::Circular);
    let sim = simulate(&cfg).unwrap();
    let ctx = ReconContext::prepare(&cfg).unwrap();
    let (fresh, t1) = reconstruct(&cfg, &sim.truth, &sim.sizes, &ctx, &[Method::Second]).unwrap();
    let (again, t2) = reconstruct(&cfg, &sim.truth, &sim.sizes, &ctx.reuse(), &[Method::Second]).unwrap();
    assert!(!t1.factorization_cached && t1.factorization > 0.0);
    assert!(t2.factorization_cached && t2.factorization == 0.0);
    for (a, b) in fresh.iter().zip(&again) {
        assert_eq!(a.field.rho(), b.field.rho());
    }
}

#[test]
fn identical_grids_are_refused_with_stage_context() {
    let mut cfg = tiny(ArrayKind::Square);
    cfg.recon_grid = cfg.data_grid;
    match run_experiment(&cfg) {
        Err(Error::Stage { stage, source }) => {
            assert_eq!(stage, "configuration");
            assert!(matches!(*source, Error::InverseCrime));
        }
        other => panic!("expected staged inverse-crime error, got {other:?}"),
    }
}

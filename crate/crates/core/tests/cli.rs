use std::path::Path;
use std::process::{Command, Output};

fn geojitter(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geojitter"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SQUARE: &str = "0 0\n100 0\n100 100\n0 100\n";

const SMALL_SCENARIO: &str = "\
signal = med
replicates = 2
urban = 20
rural = 30
landscape_width = 200
landscape_height = 160
landscape_cities = 2
landscape_towns = 20
landscape_rivers = 2
mesh_max_edge = 20
mesh_max_edge_outer = 50
mesh_extension = 100
eval_locations = 100
keep_datasets = true
";

#[test]
fn mesh_subcommand_writes_a_readable_mesh() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("square.poly"), SQUARE).unwrap();
    let o = geojitter(&["mesh", "--domain", "square.poly", "--out", "mesh.txt"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let domain = geojitter::geometry::Polygon::read(dir.path().join("square.poly")).unwrap();
    let mesh = geojitter::mesh::TriangulationMesh::read(dir.path().join("mesh.txt"), domain).unwrap();
    assert!(mesh.num_nodes() > 16);
    assert!(mesh.max_interior_edge() <= 25.0 * 2f64.sqrt() + 1e-9);
}

#[test]
fn fit_rejects_more_successes_than_trials_naming_the_row() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("square.poly"), SQUARE).unwrap();
    std::fs::write(
        dir.path().join("data.csv"),
        "id,x_km,y_km,y,n,urban,admin_id\nok1,10,10,2,10,1,\nbad7,20,20,12,10,0,\n",
    )
    .unwrap();
    let o = geojitter(&["fit", "--data", "data.csv", "--domain", "square.poly", "--out", "fit.json"], dir.path());
    assert!(!o.status.success());
    let err = stderr(&o);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: data.csv:3:") && err.contains("bad7"), "{err}");
    assert!(!dir.path().join("fit.json").exists());
}

#[test]
fn usage_and_parse_errors_are_single_lines() {
    let dir = tempfile::tempdir().unwrap();
    let o = geojitter(&["mesh", "--domain", "a.poly"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).trim_end().lines().count(), 1);
    assert!(stderr(&o).contains("--out"));

    std::fs::write(dir.path().join("broken.poly"), "0 0\n10 0\n10 ten\n").unwrap();
    let o = geojitter(&["mesh", "--domain", "broken.poly", "--out", "m.txt"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: broken.poly:3:"), "{}", stderr(&o));
}

#[test]
fn simulate_is_deterministic_under_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.cfg"), SMALL_SCENARIO).unwrap();
    for out in ["a", "b", "c"] {
        let seed = if out == "c" { "8" } else { "7" };
        let o = geojitter(&["simulate", "--config", "small.cfg", "--seed", seed, "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let files = ["records.csv", "estimates.csv", "scores.txt", "scores.csv", "result.json", "datasets/replicate_0001.csv"];
    for f in files {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between identical runs");
    }
    let a = std::fs::read(dir.path().join("a/records.csv")).unwrap();
    let c = std::fs::read(dir.path().join("c/records.csv")).unwrap();
    assert_ne!(a, c, "a different seed should change the results");
}

#[test]
fn simulate_fit_predict_evaluate_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("small.cfg"), SMALL_SCENARIO).unwrap();
    let o = geojitter(&["simulate", "--config", "small.cfg", "--seed", "3", "--out", "sim", "--write-landscape"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let sim = d.join("sim");
    let mut common: Vec<String> = [
        "--data", "datasets/replicate_0000.csv", "--domain", "domain.poly", "--admin", "admin.txt",
        "--max-edge", "20", "--max-edge-outer", "50", "--extension", "100",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for name in geojitter::simulate::COVARIATE_NAMES {
        common.push("--raster".into());
        common.push(format!("{name}:none=covariate_{name}.asc"));
    }
    let with = |extra: &[&str]| -> Vec<String> {
        let mut v: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
        v.extend(common.iter().cloned());
        v
    };
    let args = with(&["fit", "--mode", "fulladj", "--out", "fit.json", "--table", "beta.csv"]);
    let o = geojitter(&args.iter().map(String::as_str).collect::<Vec<_>>(), &sim);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(sim.join("beta.csv")).unwrap();
    assert!(table.starts_with("mode,parameter,estimate,sd,lower95,upper95,unit\nFullAdj,rho,"));

    let args = with(&[
        "predict", "--fit", "fit.json", "--grid", "10", "--samples", "100", "--out", "grid.csv", "--population",
        "population.asc", "--areal", "areal.csv",
    ]);
    let o = geojitter(&args.iter().map(String::as_str).collect::<Vec<_>>(), &sim);
    assert!(o.status.success(), "{}", stderr(&o));
    let grid = std::fs::read_to_string(sim.join("grid.csv")).unwrap();
    let mut lines = grid.lines();
    assert_eq!(lines.next(), Some("mode,x_km,y_km,eta_mean_logit,eta_sd_logit,r_median,r_mean,r_cv"));
    // 200 × 160 km at 10 km cells
    assert_eq!(lines.clone().count(), 320);
    assert!(lines.all(|l| l.starts_with("FullAdj,")));
    let areal = std::fs::read_to_string(sim.join("areal.csv")).unwrap();
    assert!(areal.starts_with("mode,region,r_mean,r_cv,population_weight,pixels\nFullAdj,"));

    let o = geojitter(&["evaluate", "--estimates", "estimates.csv", "--out", "eval.csv"], &sim);
    assert!(o.status.success(), "{}", stderr(&o));
    let eval = std::fs::read_to_string(sim.join("eval.csv")).unwrap();
    // scoring the long-format estimates reproduces the scenario's own table
    let scores = std::fs::read_to_string(sim.join("scores.csv")).unwrap();
    let rows = |t: &str| -> Vec<String> { t.lines().filter(|l| l.contains(",bias,") || l.contains(",rmse,")).map(String::from).collect() };
    assert_eq!(rows(&eval).len(), rows(&scores).len());
    for (a, b) in rows(&eval).iter().zip(rows(&scores)) {
        let (va, vb) = (a.split(',').nth(3).unwrap(), b.split(',').nth(3).unwrap());
        let (va, vb): (f64, f64) = (va.parse().unwrap(), vb.parse().unwrap());
        assert!((va - vb).abs() <= 1e-9 * (1.0 + vb.abs()), "{a} vs {b}");
    }
}

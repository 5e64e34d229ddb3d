use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn degenfuse(args: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_degenfuse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(s: &str) -> &Path {
    Path::new(s)
}

const SCENE: &str = "\
[scene]
frames = 30
seed = 4

[actor0]
waypoints = 5,-8; 5,8
speed = 1.2

[smoke]
intervals = 8-11:clutter; 20-21:delete
";

#[test]
fn synth_run_eval_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(root.join("scene.ini"), SCENE).unwrap();
    fs::write(root.join("pipeline.ini"), "[pipeline]\ndump_removed = true\n").unwrap();
    let (data, out) = (root.join("data"), root.join("out"));

    let o = degenfuse(&[p("synth"), &root.join("scene.ini"), &data]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(data.join("000000_lidar.csv").exists());
    assert!(!data.join("000020_lidar.csv").exists());
    assert!(data.join("labels_000010.csv").exists());

    let o = degenfuse(&[p("run"), &data, &root.join("pipeline.ini"), &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let selection = fs::read_to_string(out.join("selection.csv")).unwrap();
    let mut lines = selection.lines();
    assert_eq!(lines.next().unwrap(), "frame,source,ratio,n_removed,ego_vx,ego_vy,ego_vz");
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 30);
    for (i, r) in rows.iter().enumerate() {
        let smoke = (8..=11).contains(&i) || (20..=21).contains(&i);
        assert_eq!(r[1] == "radar", smoke, "frame {i}: {r:?}");
    }
    assert!(rows.iter().any(|r| r[3] != "0"), "walker points were never removed");
    let degeneracy = fs::read_to_string(out.join("degeneracy.csv")).unwrap();
    assert!(degeneracy.starts_with("frame,n_matched,n_radar_static,ratio,use_lidar\n"));
    assert!(fs::read_dir(&out).unwrap().any(|e| e.unwrap().file_name().to_string_lossy().starts_with("removed_")));
    let est = fs::read_to_string(out.join("est.tum")).unwrap();
    assert_eq!(est.lines().count(), 30);
    assert!(est.starts_with("0 0 0 0 0 0 0 1\n"));

    let metrics = out.join("metrics.json");
    let o = degenfuse(&[
        p("eval"),
        &out.join("est.tum"),
        &data.join("gt.tum"),
        p("--flags"),
        &out.join("degeneracy.csv"),
        p("--smoke"),
        &data.join("smoke_frames.csv"),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(json["recall"], 1.0);
    assert_eq!(json["false_positive_rate"], 0.0);
    assert_eq!(json["n_poses_evaluated"], 30);
    assert!(json["ape_rmse"].as_f64().unwrap() < 0.5);

    let o = degenfuse(&[p("eval"), &out.join("est.tum"), &data.join("gt.tum"), p("--no-align"), p("--out"), &root.join("raw.json")]);
    assert!(o.status.success());
    let raw: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.join("raw.json")).unwrap()).unwrap();
    assert_eq!(raw["aligned"], false);
    assert!(raw["ape_rmse"].as_f64().unwrap() > json["ape_rmse"].as_f64().unwrap());
}

#[test]
fn lidar_only_mode_skips_deleted_frames() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(root.join("scene.ini"), SCENE).unwrap();
    fs::write(root.join("pipeline.ini"), "[pipeline]\nmode = lidar_only\n").unwrap();
    assert!(degenfuse(&[p("synth"), &root.join("scene.ini"), &root.join("data")]).status.success());
    let o = degenfuse(&[p("run"), &root.join("data"), &root.join("pipeline.ini"), &root.join("out")]);
    assert!(o.status.success());
    let selection = fs::read_to_string(root.join("out/selection.csv")).unwrap();
    let sources: Vec<&str> = selection.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(sources.iter().filter(|s| **s == "skip").count(), 2);
    assert!(sources.iter().all(|s| *s == "lidar" || *s == "skip"));
    let effective = fs::read_to_string(root.join("out/config.ini")).unwrap();
    assert!(effective.contains("mode = lidar_only"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let o = degenfuse(&[p("frobnicate")]);
    assert_eq!(o.status.code(), Some(1));

    fs::write(root.join("bad_scene.ini"), "[smoke]\nintervals = 50-40:delete\n").unwrap();
    let o = degenfuse(&[p("synth"), &root.join("bad_scene.ini"), &root.join("x")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("smoke.intervals"));

    fs::write(root.join("bad.ini"), "[odometry]\nwindow = 3\n").unwrap();
    fs::create_dir(root.join("data")).unwrap();
    fs::write(root.join("data/frames.csv"), "index,timestamp\n0,0.0\n").unwrap();
    let o = degenfuse(&[p("run"), &root.join("data"), &root.join("bad.ini"), &root.join("out")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("odometry.window"));

    // Valid config, but the only frame has no usable data.
    fs::write(root.join("ok.ini"), "").unwrap();
    let o = degenfuse(&[p("run"), &root.join("data"), &root.join("ok.ini"), &root.join("out")]);
    assert_eq!(o.status.code(), Some(2));

    fs::write(root.join("a.tum"), "0 0 0 0 0 0 0 1\n").unwrap();
    fs::write(root.join("b.tum"), "5 0 0 0 0 0 0 1\n").unwrap();
    let o = degenfuse(&[p("eval"), &root.join("a.tum"), &root.join("b.tum")]);
    assert_eq!(o.status.code(), Some(2));

    fs::write(root.join("c.tum"), "0 0 0 0 0 0 0 3\n").unwrap();
    let o = degenfuse(&[p("eval"), &root.join("c.tum"), &root.join("b.tum")]);
    assert_eq!(o.status.code(), Some(1));
}

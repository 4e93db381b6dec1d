mod common;

use std::fs;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use silvar::evaluation::GridRow;
use silvar::io::{
    read_model, read_regression_csv, sibling_path, write_graph_csv, write_graph_nodes_json, write_model,
    write_score_table, SCORE_TABLE_HEADER,
};
use silvar::link::LinkFunction;
use silvar::model::{ModelLink, SilvarModel, Standardization};
use silvar::timeseries::{Edge, GraphExport};
use silvar::SilvarError;

fn sample_model() -> SilvarModel {
    SilvarModel::new(
        ModelLink::Learned(LinkFunction::new(vec![-1.0, 0.0, 2.0], vec![0.0, 0.5, 1.5], 0.0, 1.0).unwrap()),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]),
        DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.2, 0.4]),
        1,
        Standardization::identity(2),
    )
    .unwrap()
}

#[test]
fn model_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("model.json");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let m = common::random_model(3, 2, 2, &mut rng);
        write_model(&p, &m).unwrap();
        assert_eq!(read_model(&p).unwrap(), m);
    }
}

fn corrupt(edit: impl Fn(&mut serde_json::Value)) -> SilvarError {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("model.json");
    write_model(&p, &sample_model()).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
    edit(&mut v);
    fs::write(&p, v.to_string()).unwrap();
    read_model(&p).unwrap_err()
}

#[test]
fn decreasing_link_is_rejected() {
    let err = corrupt(|v| v["link"]["values"] = serde_json::json!([0.0, -0.5, 1.5])).to_string();
    assert!(err.contains("link not monotone"), "{err}");
}

#[test]
fn steep_link_is_rejected() {
    let err = corrupt(|v| v["link"]["values"] = serde_json::json!([0.0, 3.0, 3.5])).to_string();
    assert!(err.to_lowercase().contains("lipschitz") || err.contains("slope"), "{err}");
}

#[test]
fn shape_mismatch_is_rejected() {
    let err = corrupt(|v| v["L"] = serde_json::json!([[0.1, 0.2, 0.3], [0.0, 0.0, 0.0]])).to_string();
    assert!(err.contains("shape mismatch"), "{err}");
    let err = corrupt(|v| v["m"] = serde_json::json!(3)).to_string();
    assert!(err.contains("m=3"), "{err}");
}

#[test]
fn unknown_model_fields_are_rejected() {
    let err = corrupt(|v| v["extra"] = serde_json::json!(1));
    assert!(matches!(err, SilvarError::Json(_)), "{err}");
}

#[test]
fn score_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("scores.csv");
    let rows = vec![
        GridRow {
            lambda_sparse: 0.01,
            lambda_lowrank: 1.0,
            val_rmse: 0.5,
            test_rmse: None,
            iters: 12,
            converged: true,
        },
        GridRow {
            lambda_sparse: 0.1,
            lambda_lowrank: 1.0,
            val_rmse: f64::INFINITY,
            test_rmse: Some(0.25),
            iters: 0,
            converged: false,
        },
    ];
    write_score_table(&p, &rows).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, [SCORE_TABLE_HEADER, "0.01,1,0.5,,12,true", "0.1,1,inf,0.25,0,false"]);
}

#[test]
fn graph_files() {
    let dir = tempfile::tempdir().unwrap();
    let graph = GraphExport {
        node_count: 3,
        edges: vec![
            Edge {
                source: 2,
                target: 0,
                weight: 1.5,
            },
            Edge {
                source: 0,
                target: 0,
                weight: 0.25,
            },
        ],
        node_names: Some(vec!["a".into(), "b".into(), "c".into()]),
        coordinates: Some(vec![Some((-80.0, 40.0)), None, Some((1.0, 2.0))]),
        density: 2.0 / 9.0,
    };
    let csv = dir.path().join("g.csv");
    write_graph_csv(&csv, &graph).unwrap();
    assert_eq!(fs::read_to_string(&csv).unwrap(), "source,target,weight\n2,0,1.5\n0,0,0.25\n");

    let nodes = sibling_path(&csv, "_nodes", "json");
    assert_eq!(nodes, dir.path().join("g_nodes.json"));
    write_graph_nodes_json(&nodes, &graph).unwrap();
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&nodes).unwrap()).unwrap();
    assert_eq!(v["nodes"].as_array().unwrap().len(), 3);
    assert_eq!(v["nodes"][0]["name"], "a");
    assert_eq!(v["nodes"][0]["longitude"], -80.0);
    assert!(v["nodes"][1]["latitude"].is_null());
    assert_eq!(v["density"].as_f64().unwrap(), 2.0 / 9.0);
}

#[test]
fn regression_csv_errors_point_at_the_cell() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    let y = dir.path().join("y.csv");
    fs::write(&x, "1,2,3\n4,five,6\n").unwrap();
    fs::write(&y, "1,2,3\n").unwrap();
    match read_regression_csv(&x, &y, false).unwrap_err() {
        SilvarError::Parse { row, col, .. } => assert_eq!((row, col), (2, 2)),
        e => panic!("{e}"),
    }
    fs::write(&x, "1,2,3\n4,NaN,6\n").unwrap();
    assert!(matches!(read_regression_csv(&x, &y, false), Err(SilvarError::Parse { .. })));
}

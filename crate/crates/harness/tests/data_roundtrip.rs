use cheatt_core::table::{ColumnKind, FeatureValue, Reserved};
use cheatt_harness::data::{load_csv, read_raw, SchemaHints, Split, TableDataset};
use cheatt_harness::synthetic::{generate_synthetic, SyntheticSpec};
use cheatt_harness::Error;
use proptest::prelude::*;

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn three_row_file_types_columns() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "t.csv", "x,colour,label\n0.5,red,yes\n1.25,blue,no\n-2,red,no\n");
    let hints = SchemaHints {
        categorical_threshold: 1,
        ..SchemaHints::default()
    };
    let ds = load_csv(&p, &hints).unwrap();
    assert_eq!(ds.schema.columns[0].kind, ColumnKind::Continuous);
    assert_eq!(ds.schema.columns[1].name, "colour");
    assert!(matches!(ds.schema.columns[1].kind, ColumnKind::Categorical { .. }));
    assert_eq!(ds.schema.label.classes, vec!["no", "yes"]);
}

#[test]
fn binary_valued_column_is_categorical() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("flag,label\n");
    for i in 0..100 {
        text.push_str(&format!("{},{}\n", (i * 7) % 2, i % 3 == 0));
    }
    let ds = load_csv(&write(&dir, "f.csv", &text), &SchemaHints::default()).unwrap();
    assert_eq!(ds.schema.columns[0].kind, ColumnKind::Categorical { vocab: 2 });
}

#[test]
fn standardization_holds_on_the_train_split() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        n_rows: 100,
        ..SyntheticSpec::default()
    };
    let p = dir.path().join("s.csv");
    generate_synthetic(&spec, 4).unwrap().save_csv(&p).unwrap();
    let ds = load_csv(&p, &SchemaHints::default()).unwrap();
    let (train, _) = ds.split(Split::Train);
    for (c, col) in ds.schema.columns.iter().enumerate() {
        if col.kind != ColumnKind::Continuous {
            continue;
        }
        let xs: Vec<f64> = train
            .iter()
            .map(|r| match r.values[c] {
                FeatureValue::Continuous(x) => x,
                _ => unreachable!(),
            })
            .collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() <= 1e-9, "{}: mean {mean}", col.name);
        assert!((var - 1.0).abs() <= 1e-6, "{}: var {var}", col.name);
    }
}

#[test]
fn constant_column_is_flagged_not_scaled() {
    let mut text = String::from("k,v,label\n");
    for i in 0..60 {
        text.push_str(&format!("3.5,{},{}\n", i as f64 * 0.1, i % 2));
    }
    let dir = tempfile::tempdir().unwrap();
    let hints = SchemaHints {
        continuous: vec!["k".into()],
        ..SchemaHints::default()
    };
    let ds = load_csv(&write(&dir, "c.csv", &text), &hints).unwrap();
    assert!(ds.schema.columns[0].constant);
    assert!(!ds.schema.columns[1].constant);
    assert!(ds.rows.iter().all(|r| r.values[0] == FeatureValue::Continuous(0.0)));
}

#[test]
fn splits_are_disjoint_and_cover_all_rows() {
    let ds = generate_synthetic(&SyntheticSpec::default(), 11).unwrap();
    let mut all: Vec<usize> = [Split::Train, Split::Valid, Split::Test]
        .iter()
        .flat_map(|&s| ds.splits.get(s).to_vec())
        .collect();
    all.sort_unstable();
    assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
}

#[test]
fn synthetic_save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.csv");
    let ds = generate_synthetic(&SyntheticSpec::default(), 7).unwrap();
    ds.save_csv(&p).unwrap();
    let back = load_csv(&p, &SchemaHints::default()).unwrap();
    assert_eq!(back, ds);
    let p2 = dir.path().join("g2.csv");
    back.save_csv(&p2).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
}

#[test]
fn load_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_csv(&write(&dir, "r.csv", "a,label\n1,0\n2,1\n3\n"), &SchemaHints::default()).unwrap_err();
    assert!(matches!(err, Error::Data(_)));
    assert!(err.to_string().contains("line 4"), "{err}");

    let err = load_csv(&write(&dir, "e.csv", "a,label\n"), &SchemaHints::default()).unwrap_err();
    assert!(matches!(err, Error::Data(_)));

    let hints = SchemaHints {
        continuous: vec!["a".into()],
        ..SchemaHints::default()
    };
    let err = load_csv(&write(&dir, "n.csv", "a,label\n1,0\nx,1\n"), &hints).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");

    let err = load_csv(&dir.path().join("missing.csv"), &SchemaHints::default()).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

#[test]
fn missing_categories_use_reserved_index() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "m.csv", "c,label,split\na,0,train\n,1,train\nb,0,train\nq,1,test\n");
    let ds = load_csv(&p, &SchemaHints::default()).unwrap();
    assert_eq!(ds.rows[1].values[0], FeatureValue::Categorical(Reserved::Missing.index(2)));
    assert_eq!(ds.rows[3].values[0], FeatureValue::Categorical(Reserved::Unk.index(2)));
}

fn table() -> impl Strategy<Value = (Vec<Vec<String>>, u64)> {
    let cell = prop_oneof![
        (-1000i32..1000).prop_map(|v| (v as f64 / 8.0).to_string()),
        "[a-e]{1,3}",
        Just(String::new()),
        Just("NA".to_string()),
    ];
    (3usize..40).prop_flat_map(move |n| {
        (
            prop::collection::vec(
                (prop::collection::vec(cell.clone(), 3), any::<bool>()).prop_map(|(mut cells, y)| {
                    cells.push(if y { "pos".into() } else { "neg".into() });
                    cells
                }),
                n,
            ),
            any::<u64>(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_tables_round_trip((rows, seed) in table()) {
        let labels: std::collections::BTreeSet<&String> = rows.iter().map(|r| &r[3]).collect();
        prop_assume!(labels.len() == 2);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let mut text = String::from("a,b,c,label\n");
        for r in &rows {
            text.push_str(&r.join(","));
            text.push('\n');
        }
        std::fs::write(&p, text).unwrap();
        let hints = SchemaHints { split_seed: seed, categorical_threshold: 3, ..SchemaHints::default() };
        let ds = match load_csv(&p, &hints) {
            Ok(ds) => ds,
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let p2 = dir.path().join("y.csv");
        ds.save_csv(&p2).unwrap();
        let back = load_csv(&p2, &hints).unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(read_raw(&p2).unwrap().rows.len(), rows.len());
        prop_assert_eq!(TableDataset::from_raw(read_raw(&p2).unwrap(), &hints).unwrap(), ds);
    }
}

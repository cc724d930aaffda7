use cordmetrics::io::{
    read_gradient_table, read_volume, write_gradient_table, write_volume, Datatype, GradientScheme, Level, Metric, MetricTable,
    RowKey,
};
use cordmetrics::reproducibility::{bland_altman, read_models, write_models};
use cordmetrics::volume::Volume;
use proptest::prelude::*;

#[test]
fn gradient_files_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let s = GradientScheme::default_protocol();
    let (bval, bvec) = (dir.path().join("d.bval"), dir.path().join("d.bvec"));
    write_gradient_table(&s, &bval, &bvec).unwrap();
    assert_eq!(read_gradient_table(&bval, &bvec).unwrap(), s);
}

#[test]
fn model_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _) = bland_altman::<f64>(Metric::RD, Level::C2, &[(1.0e-3, 1.1e-3), (0.9e-3, 0.95e-3), (1.2e-3, 1.1e-3)]).unwrap();
    let path = dir.path().join("m.csv");
    write_models(&[m], &path).unwrap();
    assert_eq!(read_models(&path).unwrap(), vec![m]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn float64_volume_file_roundtrip(data in proptest::collection::vec(-1e6f64..1e6, 24)) {
        let dir = tempfile::tempdir().unwrap();
        let vol = Volume::new([2, 3, 2], 2, [1.0, 1.0, 2.0], data).unwrap();
        let path = dir.path().join("v.nii");
        write_volume(&vol, Datatype::Float64, &path).unwrap();
        prop_assert_eq!(read_volume(&path).unwrap(), vol);
    }

    #[test]
    fn table_file_roundtrip(values in proptest::collection::vec(0.0f64..1.0, 9)) {
        let dir = tempfile::tempdir().unwrap();
        let mut t = MetricTable::new();
        for (level, v) in Level::ALL.iter().zip(&values) {
            t.insert(RowKey::new("S", "scan1", *level, Metric::FWW), *v).unwrap();
        }
        let path = dir.path().join("t.csv");
        t.write(&path).unwrap();
        prop_assert_eq!(MetricTable::read(&path).unwrap(), t);
    }
}

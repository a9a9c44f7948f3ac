use passage_ldp::oracle::{exact_cdf, exact_pointwise, GridSpec};
use passage_ldp::IncrementModel;

#[test]
fn oracle_reproduces_recorded_fixtures() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/oracle.csv");
    let mut reader = csv::Reader::from_path(path).unwrap();
    let mut count = 0;
    for record in reader.records() {
        let r = record.unwrap();
        let model: IncrementModel = r[1].parse().unwrap();
        let u: f64 = r[2].parse().unwrap();
        let n: u64 = r[3].parse().unwrap();
        let h: f64 = r[4].parse().unwrap();
        let value: f64 = r[5].parse().unwrap();
        let bound: f64 = r[6].parse().unwrap();
        let spec = GridSpec::for_walk(&model, u, n, h).unwrap();
        let got = match &r[0] {
            "cdf" => exact_cdf(&model, u, n, &spec),
            "pointwise" => exact_pointwise(&model, u, n, &spec),
            other => panic!("unknown quantity {other}"),
        }
        .unwrap();
        assert!((got.value - value).abs() <= 1e-12 * value, "{model} u={u} n={n}: {} vs {value}", got.value);
        assert!((got.error_bound - bound).abs() <= 1e-6 * bound);
        assert!(bound < 1e-2 * value);
        count += 1;
    }
    assert!(count >= 5);
}

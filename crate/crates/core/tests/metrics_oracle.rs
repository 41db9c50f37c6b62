use rdfl::train::{inception_score, LookupOracle};

fn softmax_table() -> Vec<Vec<f64>> {
    (0..100)
        .map(|r| {
            let r = r as f64;
            let z = [r.sin(), (2.0 * r).cos(), r / 100.0];
            let m = z.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        })
        .collect()
}

#[test]
fn inception_score_matches_direct_formula() {
    // Reference values from a direct per-split evaluation of exp(mean KL).
    let samples: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
    let oracle = LookupOracle(softmax_table());
    let one = inception_score(&samples, &oracle, 1).unwrap();
    let ten = inception_score(&samples, &oracle, 10).unwrap();
    assert!((one - 1.113484844578192).abs() < 1e-12, "{one}");
    assert!((ten - 1.0998440465169146).abs() < 1e-12, "{ten}");
}

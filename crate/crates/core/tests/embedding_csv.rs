use domshift_core::embedding::{read_embeddings, write_embeddings, EmbeddingMatrix};
use domshift_core::rng::stream;
use rand_distr::{Distribution, Normal};

#[test]
fn wide_fixture_round_trips() {
    let mut r = stream(42, 0);
    let normal = Normal::new(0.0, 3.0).unwrap();
    let rows: Vec<Vec<f64>> = (0..250).map(|_| (0..512).map(|_| normal.sample(&mut r)).collect()).collect();
    let ids: Vec<String> = (0..250).map(|i| format!("ISIC_{i:07}")).collect();
    let m = EmbeddingMatrix::from_rows(ids, &rows).unwrap();
    let bytes = write_embeddings(&m);
    let back = read_embeddings(&bytes).unwrap();
    assert_eq!(back.len(), 250);
    assert_eq!(back.dim(), 512);
    assert_eq!(back.ids(), m.ids());
    for (a, b) in back.values().iter().zip(m.values()) {
        assert!((a - b).abs() <= 1e-8 * b.abs(), "{a} vs {b}");
    }
    // a second pass is a fixed point
    assert_eq!(write_embeddings(&back), bytes);
}

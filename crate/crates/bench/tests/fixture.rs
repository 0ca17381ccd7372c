use curvemean_bench::fixture;

#[test]
fn fixture_shapes_agree() {
    let f = fixture(500, 60, 50);
    assert_eq!(f.grid.len(), 50);
    assert_eq!(f.draw.len(), 60);
    assert_eq!(f.obs.values().rows(), 60);
    assert_eq!(f.obs.values().cols(), 50);
    assert_eq!(f.probs.population_size(), 500);
    // expansion weights of a fixed-size design recover the population size
    let total: f64 = f.draw.units().iter().map(|&k| 1.0 / f.probs.pi(k)).sum();
    assert!((total - 500.0).abs() < 1e-9, "{total}");
}

#[test]
fn fixture_is_reproducible() {
    let (a, b) = (fixture(300, 30, 20), fixture(300, 30, 20));
    assert_eq!(a.draw.units(), b.draw.units());
    assert_eq!(a.obs.values(), b.obs.values());
}

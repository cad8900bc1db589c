use clinreason_bench::fixture;

#[test]
fn fixture_is_seeded_and_consistent() {
    let a = fixture(90, 7);
    let b = fixture(90, 7);
    assert_eq!(a.records, b.records);
    assert_eq!(a.cases.len(), 90);
    assert!(a.cases.iter().zip(&a.records).all(|(c, r)| c.record_id == r.id && c.gold == r.gold));
    assert_ne!(fixture(90, 8).records, a.records);
}

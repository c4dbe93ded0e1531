mod common;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use lakeveil_core::backend::{self, decrypt_row, selection_key, FamilyParams, RevealParams, DEFAULT_CACHE_CAPACITY};
use lakeveil_core::crypto::{pack, prf, prf_block};
use lakeveil_core::oracle::{eval_family, eval_view};
use lakeveil_core::planner::{plan_family, plan_view, CanonicalFamily, PlannerParams};
use lakeveil_core::table::{encode_cell, Column, EncryptedPartition, PlainPartition, Schema, Value};
use lakeveil_core::SymKey;

use common::{encrypted_reveal, plan_case, random_case};

fn random_params(rng: &mut StdRng) -> FamilyParams {
    FamilyParams { tag_len: [1, 2, 4, 16][rng.gen_range(0..4)], cache_capacity: [0, 2, 512][rng.gen_range(0..3)] }
}

fn encoded(schema: &Schema, row: &[Value]) -> Vec<Vec<u8>> {
    row.iter().zip(schema.columns()).map(|(v, c)| encode_cell(v, c).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn reveal_equals_oracle(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let case = random_case(&mut rng, 6, 64, true);
        let Some((fam, view)) = plan_case(&case, 100_000, false) else { return Ok(()) };
        let params = random_params(&mut rng);
        let (rows, _) = encrypted_reveal(&case.schema, &case.rows, &fam, &view, &params, rng.gen_range(1..100), seed);
        let expected = eval_view(&case.schema, &case.rows, &case.view_sql()).unwrap();
        prop_assert_eq!(rows, expected, "{}", case.view_sql());
    }

    #[test]
    fn reveal_with_unbound_wildcards_equals_oracle(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let case = random_case(&mut rng, 6, 64, false);
        let Some((fam, view)) = plan_case(&case, 100_000, true) else { return Ok(()) };
        let params = random_params(&mut rng);
        let (rows, _) = encrypted_reveal(&case.schema, &case.rows, &fam, &view, &params, 1, seed);
        let expected = eval_family(&case.schema, &case.rows, &case.family_sql(), &case.bindings).unwrap();
        prop_assert_eq!(rows, expected);
    }

    /// Each key's final count equals the number of rows whose selection key it
    /// is, computed from plaintext.
    #[test]
    fn counters_match_plaintext_counts(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let case = random_case(&mut rng, 5, 64, true);
        let Some((fam, view)) = plan_case(&case, 100_000, false) else { return Ok(()) };
        let params = random_params(&mut rng);
        let (_, counts) = encrypted_reveal(&case.schema, &case.rows, &fam, &view, &params, 1, seed);
        for (j, pred) in fam.predicates.iter().enumerate() {
            let gs: Vec<Vec<u8>> = case.rows.iter().map(|r| pred.eval(&encoded(&case.schema, r))).collect();
            let expected: Vec<u32> = view.values[j].iter().map(|x| gs.iter().filter(|g| *g == x).count() as u32).collect();
            prop_assert_eq!(&counts[j], &expected, "predicate {}", j);
        }
    }

    #[test]
    fn selection_keys_differ_across_predicates(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let case = random_case(&mut rng, 5, 32, true);
        let Some((fam, _)) = plan_case(&case, 100_000, false) else { return Ok(()) };
        let fk = SymKey::random(&mut rng);
        let mut seen = std::collections::HashMap::new();
        for row in &case.rows {
            let cells = encoded(&case.schema, row);
            for (j, pred) in fam.predicates.iter().enumerate() {
                let s = selection_key(&fk, j, &pred.eval(&cells));
                let prev = seen.insert(s, j);
                prop_assert!(prev.is_none() || prev == Some(j));
            }
        }
    }

    #[test]
    fn foreign_family_key_opens_nothing(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let case = random_case(&mut rng, 5, 48, true);
        let Some((fam, view)) = plan_case(&case, 100_000, false) else { return Ok(()) };
        let (tk, fk) = (SymKey::random(&mut rng), SymKey::random(&mut rng));
        let plain = PlainPartition::new(1, case.rows.clone()).unwrap();
        let mut part = backend::encrypt_table_partition(&plain, &case.schema, &tk).unwrap();
        backend::add_family_partition(&mut part, &tk, &fam, &fk, &FamilyParams::default(), &mut rng).unwrap();
        let other = backend::view_gen(&view, &SymKey::random(&mut rng), 4).unwrap();
        let out = backend::reveal_view_partition(&part, &fam, &other, &RevealParams::default()).unwrap();
        prop_assert!(out.rows.is_empty());
        let untagged = backend::reveal_view_partition(&part, &fam, &other, &RevealParams { tagged: false }).unwrap();
        prop_assert!(untagged.rows.is_empty());
    }

    #[test]
    fn cache_capacity_does_not_change_bytes(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let case = random_case(&mut rng, 5, 48, true);
        let Some((fam, _)) = plan_case(&case, 100_000, false) else { return Ok(()) };
        let plain = PlainPartition::new(2, case.rows.clone()).unwrap();
        let build = |cap: usize| {
            let mut rng = StdRng::seed_from_u64(seed);
            let tk = SymKey::random(&mut rng);
            let fk = SymKey::random(&mut rng);
            let mut part = backend::encrypt_table_partition(&plain, &case.schema, &tk).unwrap();
            let params = FamilyParams { cache_capacity: cap, ..FamilyParams::default() };
            backend::add_family_partition(&mut part, &tk, &fam, &fk, &params, &mut rng).unwrap();
            part.to_bytes()
        };
        let reference = build(0);
        prop_assert_eq!(&build(1), &reference);
        prop_assert_eq!(&build(DEFAULT_CACHE_CAPACITY), &reference);
    }
}

fn boats() -> (Schema, PlainPartition) {
    let schema = Schema::new(vec![Column::int("bid"), Column::utf8("bname"), Column::utf8("color")]).unwrap();
    let rows =
        [(101, "Interlake", "blue"), (102, "Interlake", "red"), (103, "Clipper", "green"), (104, "Marine", "red")]
            .iter()
            .map(|&(b, n, c)| vec![Value::Int(b), Value::Str(n.into()), Value::Str(c.into())])
            .collect();
    (schema, PlainPartition::new(1, rows).unwrap())
}

const BOATS_FAMILY: &str = "SELECT bname, color FROM boats WHERE bname IN ?x_1 OR color IN ?x_2";

struct Boats {
    schema: Schema,
    plain: PlainPartition,
    fam: CanonicalFamily,
    part: EncryptedPartition,
    fk: SymKey,
}

fn boats_encrypted(tag_len: usize) -> Boats {
    let (schema, plain) = boats();
    let fam = plan_family(BOATS_FAMILY, &schema, &PlannerParams::default()).unwrap();
    let mut rng = StdRng::seed_from_u64(5);
    let tk = SymKey::random(&mut rng);
    let fk = SymKey::random(&mut rng);
    let mut part = backend::encrypt_table_partition(&plain, &schema, &tk).unwrap();
    let params = FamilyParams { tag_len, ..FamilyParams::default() };
    backend::add_family_partition(&mut part, &tk, &fam, &fk, &params, &mut rng).unwrap();
    Boats { schema, plain, fam, part, fk }
}

fn s(v: &str) -> Value {
    Value::Str(v.into())
}

#[test]
fn running_example_reveals_rows_one_two_four() {
    let b = boats_encrypted(4);
    let view_sql = "SELECT bname, color FROM boats WHERE bname IN ('Interlake') OR color IN ('red')";
    let view = plan_view(view_sql, &b.fam, &b.schema, &PlannerParams::default()).unwrap();
    let keys = backend::view_gen(&view, &b.fk, 4).unwrap();
    assert_eq!(keys.key_count(), 2);
    let out = backend::reveal_view_partition(&b.part, &b.fam, &keys, &RevealParams::default()).unwrap();
    let expected = vec![
        (0, vec![s("Interlake"), s("blue")]),
        (1, vec![s("Interlake"), s("red")]),
        (3, vec![s("Marine"), s("red")]),
    ];
    assert_eq!(out.rows, expected);
    assert_eq!(out.counts, vec![vec![2], vec![2]]);
    assert_eq!(eval_view(&b.schema, &b.plain.rows, view_sql).unwrap(), expected);
}

#[test]
fn shared_selection_key_gets_distinct_tags() {
    let b = boats_encrypted(16);
    let cells: Vec<Vec<Vec<u8>>> = b.plain.rows.iter().map(|r| encoded(&b.schema, r)).collect();
    let color = &b.fam.predicates[1];
    let s2 = selection_key(&b.fk, 1, &color.eval(&cells[1]));
    let s4 = selection_key(&b.fk, 1, &color.eval(&cells[3]));
    assert_eq!(s2, s4);
    assert_ne!(s2, selection_key(&b.fk, 1, &color.eval(&cells[0])));

    // Tags are PRF(PRF(s, p), count), truncated.
    let tau = prf(&s2, &pack(&[1]));
    let tags = &b.part.families[&b.fam.family_id()].tagging;
    assert_eq!(&tags[1][16..32], &prf_block(&tau, &pack(&[0])));
    assert_eq!(&tags[3][16..32], &prf_block(&tau, &pack(&[1])));
    assert_ne!(tags[1][16..32], tags[3][16..32]);
}

#[test]
fn decrypt_row_opens_only_matching_rows() {
    let b = boats_encrypted(4);
    let view = plan_view(
        "SELECT bname, color FROM boats WHERE bname IN ('Interlake') OR color IN ('red')",
        &b.fam,
        &b.schema,
        &PlannerParams::default(),
    )
    .unwrap();
    let keys = backend::view_gen(&view, &b.fk, 4).unwrap();
    let interlake = &keys.keys[0][0].1;
    let red = &keys.keys[1][0].1;
    assert_eq!(decrypt_row(&b.part, &b.fam, 0, 0, interlake).unwrap(), Some(vec![s("Interlake"), s("blue")]));
    assert_eq!(decrypt_row(&b.part, &b.fam, 3, 1, red).unwrap(), Some(vec![s("Marine"), s("red")]));
    assert_eq!(decrypt_row(&b.part, &b.fam, 2, 1, red).unwrap(), None);
    // Right value, wrong predicate slot.
    assert_eq!(decrypt_row(&b.part, &b.fam, 0, 1, interlake).unwrap(), None);
    assert_eq!(decrypt_row(&b.part, &b.fam, 0, 0, &SymKey::from_bytes([0; 16])).unwrap(), None);
}

#[test]
fn single_column_projection_uses_cell_key() {
    let (schema, plain) = boats();
    let fam = plan_family("SELECT color FROM boats WHERE color IN ?c", &schema, &PlannerParams::default()).unwrap();
    let mut rng = StdRng::seed_from_u64(1);
    let (tk, fk) = (SymKey::random(&mut rng), SymKey::random(&mut rng));
    let mut part = backend::encrypt_table_partition(&plain, &schema, &tk).unwrap();
    backend::add_family_partition(&mut part, &tk, &fam, &fk, &FamilyParams::default(), &mut rng).unwrap();
    assert!(part.families[&fam.family_id()].projection.iter().all(|p| p.len() == 16));
    let view_sql = "SELECT color FROM boats WHERE color IN ('red', 'green')";
    let view = plan_view(view_sql, &fam, &schema, &PlannerParams::default()).unwrap();
    let keys = backend::view_gen(&view, &fk, 4).unwrap();
    let out = backend::reveal_view_partition(&part, &fam, &keys, &RevealParams::default()).unwrap();
    assert_eq!(out.rows, eval_view(&schema, &plain.rows, view_sql).unwrap());
    assert_eq!(out.rows.len(), 3);
}

#[test]
fn empty_key_set_reveals_nothing() {
    let b = boats_encrypted(4);
    let view = plan_view(
        "SELECT bname, color FROM boats WHERE bname IN ('nobody') OR color IN ('mauve')",
        &b.fam,
        &b.schema,
        &PlannerParams::default(),
    )
    .unwrap();
    let mut keys = backend::view_gen(&view, &b.fk, 4).unwrap();
    keys.keys.iter_mut().for_each(Vec::clear);
    let out = backend::reveal_view_partition(&b.part, &b.fam, &keys, &RevealParams::default()).unwrap();
    assert!(out.rows.is_empty());
    assert_eq!(out.stats.trials, 0);
}

/// One-byte tags collide often on a large partition; the projection check
/// must filter every false positive.
#[test]
fn short_tags_match_full_tags() {
    let schema = Schema::new(vec![Column::int("x"), Column::utf8("s")]).unwrap();
    let mut rng = StdRng::seed_from_u64(77);
    let rows: Vec<Vec<Value>> =
        (0..10_000).map(|i| vec![Value::Int(rng.gen_range(0..500)), Value::Str(format!("r{i}"))]).collect();
    let p = PlannerParams::default();
    let fam = plan_family("SELECT * FROM t WHERE x = ?v", &schema, &p).unwrap();
    let view = plan_view("SELECT * FROM t WHERE x IN (1, 2, 3, 4, 5, 6, 7, 8, 9, 10)", &fam, &schema, &p).unwrap();
    let short = FamilyParams { tag_len: 1, ..FamilyParams::default() };
    let full = FamilyParams { tag_len: 16, ..FamilyParams::default() };
    let (a, _) = encrypted_reveal(&schema, &rows, &fam, &view, &short, 1, 3);
    let (b, _) = encrypted_reveal(&schema, &rows, &fam, &view, &full, 1, 3);
    assert_eq!(a, b);
    assert!(!a.is_empty());
}

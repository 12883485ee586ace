use proptest::prelude::*;

use liteupdate_cli::MetricsReport;

fn rows() -> impl Strategy<Value = Vec<(usize, usize, f64, f64, u64)>> {
    prop::collection::vec((0..3usize, 0..2usize, 0.0..=100.0f64, 0.0..=100.0f64, 0..20u64), 0..30)
}

fn build(rows: &[(usize, usize, f64, f64, u64)]) -> MetricsReport {
    let methods = ["pretrain", "random", "liteupdate"];
    let gens = ["gen-v2", "gen-v3"];
    let mut r = MetricsReport::new("main", "gen-v1");
    for &(m, g, old, new, seed) in rows {
        r.push(methods[m], gens[g], old, new, seed);
    }
    r
}

proptest! {
    #[test]
    fn csv_round_trip_keeps_rows(rows in rows()) {
        let r = build(&rows);
        let back = MetricsReport::from_csv(&r.to_csv()).unwrap();
        prop_assert_eq!(back.rows, r.rows);
    }

    #[test]
    fn markdown_round_trip_keeps_rows_per_generator(rows in rows()) {
        let r = build(&rows);
        let back = MetricsReport::from_markdown(&r.to_markdown()).unwrap();
        let mut want = Vec::new();
        for g in r.generators() {
            want.extend(r.rows.iter().filter(|x| x.generator == g).cloned());
        }
        prop_assert_eq!(back.rows, want);
        prop_assert_eq!(back.title, r.title);
    }

    #[test]
    fn average_is_the_midpoint(rows in rows()) {
        for row in build(&rows).rows {
            prop_assert!((row.avg - (row.old_acc + row.new_acc) / 2.0).abs() < 1e-12);
            prop_assert!((0.0..=100.0).contains(&row.avg));
        }
    }
}

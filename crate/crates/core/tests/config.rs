//! Config parsing on the bundled files and the write/parse round trip.

use heleshaw::io::config::*;
use heleshaw::io::{parse_config, parse_config_str, write_config};
use proptest::prelude::*;
use std::path::Path;

#[test]
fn bundled_scenarios_parse_and_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let back = parse_config_str(&write_config(&cfg).unwrap(), &dir).unwrap();
            assert_eq!(cfg, back, "{}", path.display());
            n += 1;
        }
    }
    assert!(n >= 8);
}

fn kind() -> impl Strategy<Value = heleshaw::geometry::BoundaryKind> {
    prop_oneof![
        Just(heleshaw::geometry::BoundaryKind::Dirichlet),
        Just(heleshaw::geometry::BoundaryKind::Neumann)
    ]
}

prop_compose! {
    fn config()(
        nx in 5usize..60,
        lx in 0.5f64..3.0,
        right in kind(),
        steps in 1usize..20,
        tau in 1e-3f64..0.1,
        value in -1.0f64..1.0,
        x0 in 0.0f64..0.5,
        width in 0.01f64..0.5,
        src in prop::option::of(-2.0f64..2.0),
        eps_exp in 3i32..9,
        seed in 0..=i64::MAX as u64,
        deltas in prop::collection::vec(1e-5f64..1e-1, 1..4),
    ) -> String {
        let mut s = format!(
            "[grid]\nnx = {nx}\nlx = {lx:?}\nleft = \"dirichlet\"\nright = \"{}\"\n[initial]\nkind = \"box\"\nvalue = {value:?}\nx_min = {x0:?}\nx_max = {:?}\n",
            if right == heleshaw::geometry::BoundaryKind::Dirichlet { "dirichlet" } else { "neumann" },
            x0 + width,
        );
        if let Some(c) = src {
            s += &format!("[source]\nkind = \"constant\"\nvalue = {c:?}\n");
        }
        s += &format!("[time]\nT = {:?}\ntau = {tau:?}\n", tau * steps as f64);
        s += &format!("[solver]\ngraph_epsilon = 1e-{eps_exp}\n[verify]\nseed = {seed}\ndeltas = {deltas:?}\n");
        s
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parse_of_write_is_identity(text in config()) {
        let cfg = parse_config_str(&text, Path::new(".")).unwrap();
        let written = write_config(&cfg).unwrap();
        let back = parse_config_str(&written, Path::new(".")).unwrap();
        prop_assert_eq!(&cfg, &back);
        prop_assert_eq!(written, write_config(&back).unwrap());
    }
}

#[test]
fn unknown_key_is_reported_with_section() {
    match parse_config_str("[grid]\nnx = 10\ncells = 3\n[time]\nT = 1.0\ntau = 0.5\n", Path::new(".")) {
        Err(heleshaw::Error::ConfigValidation(v)) => assert!(v[0].starts_with("[grid]") && v[0].contains("cells"), "{v:?}"),
        other => panic!("{other:?}"),
    }
    assert_eq!(SUITES.len(), 8);
}

use numgame_web::{grid, parse_language, reference, score};

#[test]
fn generated_languages_round_trip_through_csv() {
    for kind in ["compositional", "positional", "holistic"] {
        let csv = reference(kind, 2, 3, 8, 4, 1).unwrap();
        assert_eq!(parse_language(&csv).unwrap().len(), 15, "{kind}");
    }
    assert!(reference("pidgin", 2, 3, 8, 4, 1).is_err());
}

#[test]
fn compositional_scores_one_and_has_a_grid() {
    let csv = reference("compositional", 2, 3, 8, 4, 2).unwrap();
    let v = score(&csv, 0).unwrap();
    assert_eq!(v["toposim"]["Ham+Edit"], 1.0);
    assert_eq!(v["meanings"], 15);
    let g = grid(&csv).unwrap();
    // header plus counts 0..=3
    assert_eq!(g.lines().count(), 5);
}

#[test]
fn malformed_input_is_reported() {
    assert!(score("meaning_sequence,message\n12", 0).is_err());
    assert!(score("12,ab\n12,cd\n21,ef", 0).is_err());
    assert!(grid("123,ab\n321,cd").is_err());
}

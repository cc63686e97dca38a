use std::collections::BTreeSet;

use privlabel::aggregation::AggregatedLabels;
use privlabel::corpus::builtin_lexicon;
use privlabel::evaluation::{indicator_counts, significance_test, top_k_terms, IndicatorCounts};
use privlabel::{Corpus, DataPoint, Label};

const T: Label = Label::Target;
const N: Label = Label::NonTarget;

fn corpus(rows: &[(&str, Label)]) -> Corpus {
    let pts = rows.iter().enumerate().map(|(i, (t, l))| DataPoint::new(format!("x{i:02}"), *t, *l).unwrap()).collect();
    Corpus::new("fx", "target", pts).unwrap()
}

#[test]
fn indicator_counts_hand_tally() {
    let c = corpus(&[
        ("how much is the cheapest fare", T),
        ("what does it cost", T),
        ("list fares and fare codes", T),
        ("how much how much", T),
        ("show me the price of the airfare", T),
        ("show flights to boston", N),
        ("how many flights", N),
        ("what is the cheapest hotel", N),
        ("much ado about how", N),
        ("fare fare fare", N),
    ]);
    let lex = builtin_lexicon("atis", None).unwrap();
    assert_eq!(indicator_counts(&c, &lex), IndicatorCounts { target: 10, rest: 4 });
}

#[test]
fn top_terms_hand_tally() {
    let c = corpus(&[
        ("the fare to boston", T),
        ("cheapest fare to denver", T),
        ("fare to boston", T),
        ("how much is a ticket", T),
        ("ticket price to boston", T),
        ("cheapest ticket", T),
        ("fare please", T),
        ("price of a fare", T),
        ("how much to denver", T),
        ("cheapest price", T),
        ("play some jazz", N),
        ("play the song", N),
        ("add song to playlist", N),
        ("show me flights", N),
        ("show flights to boston", N),
        ("play jazz now", N),
        ("flights to denver", N),
        ("book a table", N),
        ("show the weather", N),
        ("play a song", N),
    ]);
    let stop: BTreeSet<String> = ["the", "to", "a", "of", "is"].iter().map(|s| s.to_string()).collect();
    let tables = top_k_terms(&c, 5, &stop).unwrap();
    let own = |v: &[(&str, usize)]| v.iter().map(|(t, c)| (t.to_string(), *c)).collect::<Vec<_>>();
    assert_eq!(tables.target, own(&[("fare", 5), ("boston", 3), ("cheapest", 3), ("price", 3), ("ticket", 3)]));
    assert_eq!(tables.non_target, own(&[("play", 4), ("flights", 3), ("show", 3), ("song", 3), ("jazz", 2)]));
}

#[test]
fn perfect_vs_inverted_is_significant() {
    let rows: Vec<(String, Label)> = (0..100).map(|i| (format!("w{i}"), if i % 2 == 0 { T } else { N })).collect();
    let refs: Vec<(&str, Label)> = rows.iter().map(|(t, l)| (t.as_str(), *l)).collect();
    let gold = corpus(&refs);
    let perfect = AggregatedLabels::from_labels(gold.points().iter().map(|p| (p.id.clone(), p.gold)));
    let inverted = AggregatedLabels::from_labels(gold.points().iter().map(|p| (p.id.clone(), p.gold.flipped())));
    let r = significance_test(&perfect, &inverted, &gold, 0.05, 2000, 9).unwrap();
    assert_eq!(r.observed_diff, 1.0);
    assert!(r.significant && r.p_value < 0.05, "{r:?}");
    let swapped = significance_test(&inverted, &perfect, &gold, 0.05, 2000, 9).unwrap();
    assert_eq!(swapped.p_value, r.p_value);
}

//! Corpus and sentence BLEU against values frozen from an external reference
//! implementation (whitespace tokens, no smoothing for corpus scores, add-one
//! on higher orders for sentence scores).

use proptest::prelude::*;
use stylemt::corpus::TokenSeq;
use stylemt::metrics::{bleu_corpus, bleu_sentence, sentence_stats, BleuConfig};

const HYP: &str = include_str!("data/bleu/hyp.txt");
const REF: &str = include_str!("data/bleu/ref.txt");

fn lines(text: &str) -> Vec<TokenSeq> {
    text.lines()
        .map(|l| TokenSeq::new(l.split_whitespace()))
        .collect()
}

#[test]
fn corpus_score_matches_reference() {
    let (h, r) = (lines(HYP), lines(REF));
    assert_eq!(h.len(), 10);
    let score = bleu_corpus(&h, &r, &BleuConfig::default()).unwrap();
    assert!((score - 43.98810116326034).abs() < 1e-4, "{score}");
    let three = bleu_corpus(&h[..3], &r[..3], &BleuConfig::default()).unwrap();
    assert!((three - 56.16776266392924).abs() < 1e-4, "{three}");
}

#[test]
fn corpus_sufficient_statistics() {
    let cfg = BleuConfig::default();
    let (h, r) = (lines(HYP), lines(REF));
    let mut matches = [0u64; 4];
    let mut totals = [0u64; 4];
    let (mut hl, mut rl) = (0, 0);
    for (a, b) in h.iter().zip(&r) {
        let s = sentence_stats(a, b, &cfg);
        for n in 0..4 {
            matches[n] += s.matches[n];
            totals[n] += s.totals[n];
        }
        hl += s.hyp_len;
        rl += s.ref_len;
    }
    assert_eq!(matches, [88, 58, 37, 26]);
    assert_eq!(totals, [104, 94, 84, 74]);
    assert_eq!((hl, rl), (104, 124));
}

#[test]
fn sentence_scores_match_reference() {
    let expected = [
        59.460355750136046,
        58.93552608162604,
        51.9527292569408,
        23.239228146978583,
        50.19931845457394,
        24.808415001701817,
        40.19480958339268,
        24.08487488718891,
        73.33658260562989,
        40.34660859972525,
    ];
    let cfg = BleuConfig::sentence();
    for ((h, r), want) in lines(HYP).iter().zip(&lines(REF)).zip(expected) {
        let got = bleu_sentence(h, r, &cfg);
        assert!((got - want).abs() < 1e-4, "{got} vs {want}");
    }
}

#[test]
fn fully_clipped_hypothesis() {
    let h = TokenSeq::new(["the"; 7]);
    let r = TokenSeq::new("the cat is on the mat".split(' '));
    let smoothed = bleu_sentence(&h, &r, &BleuConfig::sentence());
    assert!((smoothed - 19.20561263749893).abs() < 1e-4, "{smoothed}");
    assert_eq!(
        bleu_corpus(&[h], &[r], &BleuConfig::default()).unwrap(),
        0.0
    );
}

proptest! {
    #[test]
    fn joint_shuffle_leaves_score_unchanged(seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut pairs: Vec<(TokenSeq, TokenSeq)> = lines(HYP).into_iter().zip(lines(REF)).collect();
        let cfg = BleuConfig::default();
        let before = {
            let (h, r): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
            bleu_corpus(&h, &r, &cfg).unwrap()
        };
        pairs.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let (h, r): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        prop_assert_eq!(bleu_corpus(&h, &r, &cfg).unwrap(), before);
    }

    #[test]
    fn score_within_bounds(
        pairs in prop::collection::vec(
            (prop::collection::vec("[abc]", 1..10), prop::collection::vec("[abc]", 1..10)),
            1..6,
        )
    ) {
        let h: Vec<TokenSeq> = pairs.iter().map(|p| TokenSeq::new(p.0.clone())).collect();
        let r: Vec<TokenSeq> = pairs.iter().map(|p| TokenSeq::new(p.1.clone())).collect();
        let s = bleu_corpus(&h, &r, &BleuConfig::default()).unwrap();
        prop_assert!((0.0..=100.0).contains(&s));
        let same = pairs.iter().all(|p| p.0 == p.1);
        if same && pairs.iter().any(|p| p.0.len() >= 4) {
            prop_assert_eq!(s, 100.0);
        }
        if s == 100.0 {
            // perfect clipped precision at every order forces equal unigram bags
            for p in &pairs {
                let (mut a, mut b) = (p.0.clone(), p.1.clone());
                a.sort();
                b.sort();
                prop_assert_eq!(a, b);
            }
        }
    }
}

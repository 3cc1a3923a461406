//! Keyword template bank shared by the synthetic schema corpus and the
//! transcripts of the synthetic gesture dataset.

use crate::schema::{ImageSchemaLabel, NUM_SCHEMAS};
use crate::tensor::SeededRng;

/// One labeled utterance. `id` is stable and drives split assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledText {
    pub id: usize,
    pub text: String,
    pub label: ImageSchemaLabel,
}

/// Cue words per class, in label order.
const CUES: [&[&str]; NUM_SCHEMAS] = [
    &["brushed", "sidelined", "fringe", "margins", "periphery", "outskirts", "core", "central", "edge", "aside"],
    &["blew", "touched", "hit", "struck", "bumped", "kissed", "grazed", "tapped", "collided", "stung"],
    &["mind", "back", "inside", "trapped", "contained", "enclosed", "boxed", "within", "locked", "bottled"],
    &["clouded", "covered", "veiled", "hidden", "masked", "shrouded", "blanketed", "coated", "wrapped", "buried"],
    &["attracted", "pulled", "pushed", "forced", "pressured", "driven", "compelled", "dragged", "repelled", "drawn"],
    &["ties", "bond", "connected", "linked", "bridge", "joined", "attached", "chained", "network", "tied"],
    &["seize", "Seize", "grasp", "grabbed", "handed", "opportunity", "thing", "caught", "possession", "gift"],
    &["assembled", "pieces", "parts", "component", "fragment", "whole", "composed", "segment", "built", "element"],
    &["bigger", "smaller", "larger", "grew", "shrank", "huge", "tiny", "more", "less", "enormous"],
    &["arrived", "journey", "path", "road", "headed", "destination", "toward", "progress", "route", "departed"],
    &["separates", "split", "divided", "torn", "cut", "apart", "severed", "broke", "cracked", "divorced"],
    &["tinged", "suffuse", "soaked", "flooded", "poured", "drained", "dripping", "saturated", "dissolved", "thick"],
    &["boost", "support", "backed", "propped", "foundation", "upheld", "carried", "grounded", "rests", "leaned"],
    &["lateral", "axis", "rose", "fell", "climbed", "high", "low", "top", "bottom", "peak"],
];

/// Weak cues: word `k` is used by both class `k` and class `k + 1 (mod 14)`.
const SHARED_CUES: [&str; NUM_SCHEMAS] = [
    "moved", "turned", "shifted", "changed", "felt", "went", "came", "made", "got", "kept", "put",
    "set", "took", "ran",
];

const SUBJECTS: &[&str] = &[
    "She", "He", "They", "We", "I", "You", "That", "It", "Everyone", "The team", "My friend",
    "No one",
];
const OBJECTS: &[&str] = &["me", "her", "him", "them", "us", "it", "everyone"];
const NOUNS: &[&str] = &[
    "thought", "idea", "plan", "argument", "feeling", "story", "problem", "project", "memory",
    "question", "time", "class", "theory", "country", "language", "answer", "deal", "career",
];
const TAILS: &[&str] = &[
    "away", "today", "again", "slowly", "at last", "in the end", "for a while", "of course",
    "right now", "every day", "for time", "with us",
];

fn pick<'a>(rng: &mut SeededRng, xs: &[&'a str]) -> &'a str {
    xs[rng.below(xs.len())]
}

/// Fills one of a handful of sentence frames around `cue`.
fn frame_sentence(rng: &mut SeededRng, cue: &str) -> String {
    let s = pick(rng, SUBJECTS);
    let o = pick(rng, OBJECTS);
    let n = pick(rng, NOUNS);
    let t = pick(rng, TAILS);
    match rng.below(5) {
        0 => format!("{s} {cue} the {n} {t}."),
        1 => format!("The {n} was {cue} {t}."),
        2 => format!("{s} said the {n} {cue} {o} {t}."),
        3 => format!("{s} {cue} {o} {t}."),
        _ => format!("It is the {n}, {cue} {t}!"),
    }
}

/// Rank drawn with probability proportional to `(rank + 1)^-1.5`, so the
/// last few cues of each class are rare.
fn zipf_index(rng: &mut SeededRng, n: usize) -> usize {
    let total: f64 = (1..=n).map(|r| (r as f64).powf(-1.5)).sum();
    let mut u = rng.next_f64() * total;
    for r in 0..n {
        u -= ((r + 1) as f64).powf(-1.5);
        if u < 0.0 {
            return r;
        }
    }
    n - 1
}

/// A transcript whose cue word identifies `label` unambiguously. Cues follow
/// a heavy-tailed frequency profile, so minority classes see their rare cues
/// only a handful of times in training.
pub fn transcript_for(label: ImageSchemaLabel, rng: &mut SeededRng) -> String {
    let cues = CUES[label.index()];
    let cue = cues[zipf_index(rng, cues.len())];
    frame_sentence(rng, cue)
}

/// A transcript carrying only a cue shared with a neighbouring class.
fn ambiguous_transcript_for(label: ImageSchemaLabel, rng: &mut SeededRng) -> String {
    let k = label.index();
    let word = if rng.below(2) == 0 {
        SHARED_CUES[k]
    } else {
        SHARED_CUES[(k + NUM_SCHEMAS - 1) % NUM_SCHEMAS]
    };
    frame_sentence(rng, word)
}

/// Relative class frequencies of the synthetic corpus (max/min = 5).
pub fn class_weights() -> [f64; NUM_SCHEMAS] {
    let mut w = [0.0; NUM_SCHEMAS];
    for (c, wc) in w.iter_mut().enumerate() {
        *wc = 0.4 + 1.6 * ((c * 5) % NUM_SCHEMAS) as f64 / (NUM_SCHEMAS - 1) as f64;
    }
    w
}

/// Fraction of corpus samples whose only cue is shared with a neighbour class.
pub const AMBIGUOUS_FRACTION: f64 = 0.05;

/// Class-imbalanced keyword corpus of exactly `n` samples. Class counts are
/// proportional to [`class_weights`]; every class gets at least one sample
/// when `n >= 14`. Sample order is shuffled; ids are `0..n`.
pub fn synth_schema_corpus(n: usize, seed: u64) -> Vec<LabeledText> {
    let mut rng = SeededRng::new(seed);
    let w = class_weights();
    let total: f64 = w.iter().sum();
    let mut counts: Vec<usize> = w
        .iter()
        .map(|wc| ((n as f64 * wc / total).floor() as usize).max(usize::from(n >= NUM_SCHEMAS)))
        .collect();
    // Hand out the rounding remainder to the heaviest classes first.
    let mut order: Vec<usize> = (0..NUM_SCHEMAS).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    let mut i = 0;
    while counts.iter().sum::<usize>() < n {
        counts[order[i % NUM_SCHEMAS]] += 1;
        i += 1;
    }
    while counts.iter().sum::<usize>() > n {
        let c = order[i % NUM_SCHEMAS];
        if counts[c] > 1 {
            counts[c] -= 1;
        }
        i += 1;
    }
    let mut labels: Vec<ImageSchemaLabel> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &k)| std::iter::repeat_n(ImageSchemaLabel::ALL[c], k))
        .collect();
    rng.shuffle(&mut labels);
    labels
        .into_iter()
        .enumerate()
        .map(|(id, label)| {
            let text = if rng.next_f64() < AMBIGUOUS_FRACTION {
                ambiguous_transcript_for(label, &mut rng)
            } else {
                transcript_for(label, &mut rng)
            };
            LabeledText { id, text, label }
        })
        .collect()
}

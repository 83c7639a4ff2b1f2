#![no_main]

use libfuzzer_sys::fuzz_target;
use semcascade::metrics::{bleu, rouge_l, rouge_n, tokenize};

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let (a, b) = text.split_at(text.char_indices().nth(text.chars().count() / 2).map_or(0, |(i, _)| i));
    let (ta, tb) = (tokenize(a), tokenize(b));
    assert!(ta.iter().all(|t| !t.is_empty()));
    for s in [bleu(&ta, &tb, 4), rouge_n(&ta, &tb, 2), rouge_l(&ta, &tb)] {
        assert!((0.0..=1.0).contains(&s.value()));
    }
});

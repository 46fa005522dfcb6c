//! Dynamic-programming WER against exhaustive enumeration of alignments.

use lombard_core::eval::word_error_rate;

/// Enumerates every alignment; returns (min cost, max substitutions at min cost).
fn brute_force(r: &[u8], h: &[u8]) -> (usize, usize) {
    fn walk(r: &[u8], h: &[u8], cost: usize, subs: usize, best: &mut (usize, usize)) {
        if r.is_empty() && h.is_empty() {
            if cost < best.0 || (cost == best.0 && subs > best.1) {
                *best = (cost, subs);
            }
            return;
        }
        if let (Some((a, rr)), Some((b, hh))) = (r.split_first(), h.split_first()) {
            if a == b {
                walk(rr, hh, cost, subs, best);
            } else {
                walk(rr, hh, cost + 1, subs + 1, best);
            }
        }
        if let Some((_, rr)) = r.split_first() {
            walk(rr, h, cost + 1, subs, best);
        }
        if let Some((_, hh)) = h.split_first() {
            walk(r, hh, cost + 1, subs, best);
        }
    }
    let mut best = (usize::MAX, 0);
    walk(r, h, 0, 0, &mut best);
    best
}

fn all_sequences(max_len: usize, alphabet: u8) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for a in 0..alphabet {
                let mut t: Vec<u8> = s.clone();
                t.push(a);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[test]
fn dp_equals_exhaustive_alignment() {
    let seqs = all_sequences(5, 3);
    assert_eq!(seqs.len(), 364);
    for r in seqs.iter().filter(|s| !s.is_empty()) {
        for h in &seqs {
            let dp = word_error_rate(r, h).unwrap();
            let (cost, subs) = brute_force(r, h);
            assert_eq!(dp.errors(), cost, "{r:?} vs {h:?}");
            assert_eq!(dp.substitutions, subs, "{r:?} vs {h:?}");
            assert_eq!(dp.wer, cost as f64 / r.len() as f64);
            assert_eq!(r.len() + dp.insertions, h.len() + dp.deletions);
        }
    }
    assert!(word_error_rate::<u8>(&[], &[1]).is_err());
}

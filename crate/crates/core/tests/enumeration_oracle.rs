//! Independent cross-checks of the enumeration pipeline.
//!
//! The census oracle re-derives the small-n counts from scratch: exhaust
//! every partial transition map, re-test membership with simple
//! implementations (Floyd-Warshall reachability, distinguishing-word
//! search), and count isomorphism classes by trying all state
//! permutations. None of that shares code with the production search.

use bsi_core::enumeration::{
    build_library, canonical_encoding, canonicalize, enumerate_topological_machines,
    is_minimal_uniform,
};
use bsi_core::machine::{Symbol, Topology};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Every total assignment of `n * k` slots to `{absent, 0..n-1}`,
/// materialized as edge lists. Small n only.
fn all_partial_maps(n: usize, k: usize) -> Vec<Vec<(usize, usize, usize)>> {
    let slots = n * k;
    let choices = n + 1;
    let total = choices.pow(slots as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut c = code;
        let mut edges = Vec::new();
        for slot in 0..slots {
            let pick = c % choices;
            c /= choices;
            if pick > 0 {
                edges.push((slot / k, slot % k, pick - 1));
            }
        }
        out.push(edges);
    }
    out
}

fn reachable_everywhere(n: usize, edges: &[(usize, usize, usize)]) -> bool {
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(f, _, t) in edges {
        reach[f][t] = true;
    }
    for mid in 0..n {
        for a in 0..n {
            for b in 0..n {
                if reach[a][mid] && reach[mid][b] {
                    reach[a][b] = true;
                }
            }
        }
    }
    reach.iter().all(|row| row.iter().all(|&r| r))
}

/// `Pr(word | state)` at the equal-outgoing-probability setting.
fn word_probability(top: &Topology, state: usize, word: &[usize]) -> f64 {
    let mut p = 1.0;
    let mut current = state;
    for &symbol in word {
        match top.successor(current, Symbol(symbol as u8)) {
            Some(next) => {
                p *= 1.0 / top.out_degree(current) as f64;
                current = next;
            }
            None => return 0.0,
        }
    }
    p
}

/// Minimality by brute force: every pair of states must disagree on the
/// probability of some word no longer than `2 n`.
fn minimal_by_word_search(top: &Topology) -> bool {
    let n = top.n_states();
    let k = top.alphabet_size();
    let max_len = 2 * n;
    for a in 0..n {
        for b in a + 1..n {
            let mut distinguished = false;
            'words: for len in 0..=max_len {
                let mut word = vec![0usize; len];
                loop {
                    let pa = word_probability(top, a, &word);
                    let pb = word_probability(top, b, &word);
                    if (pa - pb).abs() > 1e-9 {
                        distinguished = true;
                        break 'words;
                    }
                    // next word in base-k
                    let mut pos = 0;
                    loop {
                        if pos == len {
                            break;
                        }
                        word[pos] += 1;
                        if word[pos] < k {
                            break;
                        }
                        word[pos] = 0;
                        pos += 1;
                    }
                    if pos == len {
                        break;
                    }
                }
            }
            if !distinguished {
                return false;
            }
        }
    }
    true
}

fn isomorphic(a: &Topology, b: &Topology) -> bool {
    let n = a.n_states();
    if b.n_states() != n || b.alphabet_size() != a.alphabet_size() {
        return false;
    }
    let k = a.alphabet_size();
    let mut perm: Vec<usize> = (0..n).collect();
    // Heap's algorithm would be tidier; n <= 3 makes naive permutation
    // generation via sorting recursion unnecessary -- just enumerate.
    fn permutations(items: &mut Vec<usize>, cursor: usize, out: &mut Vec<Vec<usize>>) {
        if cursor == items.len() {
            out.push(items.clone());
            return;
        }
        for i in cursor..items.len() {
            items.swap(cursor, i);
            permutations(items, cursor + 1, out);
            items.swap(cursor, i);
        }
    }
    let mut perms = Vec::new();
    permutations(&mut perm, 0, &mut perms);
    'outer: for p in perms {
        for state in 0..n {
            for symbol in 0..k {
                let lhs = a.successor(state, Symbol(symbol as u8)).map(|t| p[t]);
                let rhs = b.successor(p[state], Symbol(symbol as u8));
                if lhs != rhs {
                    continue 'outer;
                }
            }
        }
        return true;
    }
    false
}

/// Count isomorphism classes among `machines` by pairwise permutation
/// tests.
fn count_classes(machines: &[Topology]) -> usize {
    let mut representatives: Vec<&Topology> = Vec::new();
    for m in machines {
        if !representatives.iter().any(|r| isomorphic(r, m)) {
            representatives.push(m);
        }
    }
    representatives.len()
}

#[test]
fn census_matches_independent_brute_force_for_small_n() {
    let expected = [1usize, 7, 78];
    for (i, &want) in expected.iter().enumerate() {
        let n = i + 1;
        let mut members = Vec::new();
        for edges in all_partial_maps(n, 2) {
            let Ok(top) = Topology::from_edges("bf", n, 2, &edges) else {
                continue; // out-degree violation
            };
            let mut symbols = [false; 2];
            for &(_, s, _) in &edges {
                symbols[s] = true;
            }
            if !symbols.iter().all(|&s| s) {
                continue;
            }
            if !reachable_everywhere(n, &edges) {
                continue;
            }
            if !minimal_by_word_search(&top) {
                continue;
            }
            members.push(top);
        }
        assert_eq!(count_classes(&members), want, "class count for n={n}");

        let enumerated = enumerate_topological_machines(n, 2).unwrap();
        assert_eq!(enumerated.len(), want, "production census for n={n}");

        // Same classes, not just the same count: every brute-force member
        // must match some enumerated machine's canonical encoding.
        let canon: std::collections::HashSet<String> =
            enumerated.iter().map(canonical_encoding).collect();
        for m in &members {
            assert!(canon.contains(&canonical_encoding(m)));
        }
    }
}

#[test]
fn refinement_minimality_agrees_with_word_search() {
    // All valid machines (not only minimal ones) with up to three states.
    for n in 1..=3 {
        for edges in all_partial_maps(n, 2) {
            let Ok(top) = Topology::from_edges("bf", n, 2, &edges) else {
                continue;
            };
            if !reachable_everywhere(n, &edges) {
                continue;
            }
            assert_eq!(
                is_minimal_uniform(&top),
                minimal_by_word_search(&top),
                "disagreement on {edges:?}"
            );
        }
    }
}

#[test]
fn canonical_encoding_is_permutation_invariant() {
    let lib = build_library(1..=4, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let machine = &lib.machines()[rng.random_range(0..lib.len())];
        let n = machine.n_states();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let edges: Vec<(usize, usize, usize)> = machine
            .edges()
            .map(|(f, s, t)| (perm[f], s.index(), perm[t]))
            .collect();
        let relabeled = Topology::from_edges("perm", n, 2, &edges).unwrap();
        assert_eq!(
            canonical_encoding(machine),
            canonical_encoding(&relabeled)
        );
        let canon = canonicalize(&relabeled);
        assert_eq!(canonical_encoding(&canon), canonical_encoding(machine));
    }
}

#[test]
fn library_ids_follow_canonical_order() {
    let lib = build_library(1..=3, 2).unwrap();
    // An absent edge sorts below any successor in the canonical form; remap
    // '_' below '0' so string comparison reproduces that order.
    let sortable = |m: &Topology| canonical_encoding(m).replace('_', "!");
    let mut last: Option<(usize, String)> = None;
    for m in lib.machines() {
        assert!(m.id().starts_with(&format!("n{}k2c", m.n_states())));
        let enc = sortable(m);
        if let Some((n, prev)) = &last {
            if *n == m.n_states() {
                assert!(*prev < enc, "library not sorted by encoding");
            } else {
                assert!(*n < m.n_states());
            }
        }
        last = Some((m.n_states(), enc));
    }
}

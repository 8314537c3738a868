//! Character-level Levenshtein distance, used as the retention filter for
//! any future paraphrase source.

/// Unit-cost edit distance over characters, two-row dynamic programming.
pub fn char_edit_distance(a: &str, b: &str) -> usize {
    let a_chars: Vec<char> = a.chars().collect();
    let b_chars: Vec<char> = b.chars().collect();
    if a_chars.is_empty() {
        return b_chars.len();
    }
    if b_chars.is_empty() {
        return a_chars.len();
    }
    let mut cur: Vec<usize> = (0..=b_chars.len()).collect();
    for (i, ca) in a_chars.iter().enumerate() {
        let mut prev = cur[0];
        cur[0] = i + 1;
        for (j, cb) in b_chars.iter().enumerate() {
            let tmp = cur[j + 1];
            cur[j + 1] = (tmp + 1)
                .min(cur[j] + 1)
                .min(prev + usize::from(ca != cb));
            prev = tmp;
        }
    }
    cur[b_chars.len()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_is_zero() {
        assert_eq!(char_edit_distance("abc", "abc"), 0);
        assert_eq!(char_edit_distance("", ""), 0);
    }

    #[test]
    fn kitten_sitting_is_three() {
        assert_eq!(char_edit_distance("kitten", "sitting"), 3);
    }

    #[test]
    fn empty_against_text() {
        assert_eq!(char_edit_distance("", "abc"), 3);
        assert_eq!(char_edit_distance("abc", ""), 3);
    }

    #[test]
    fn symmetric_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let len_a = rng.gen_range(0..12);
            let len_b = rng.gen_range(0..12);
            let a: String = (0..len_a).map(|_| (b'a' + rng.gen_range(0..4)) as char).collect();
            let b: String = (0..len_b).map(|_| (b'a' + rng.gen_range(0..4)) as char).collect();
            assert_eq!(char_edit_distance(&a, &b), char_edit_distance(&b, &a));
        }
    }
}

use std::collections::HashMap;

use super::check_parallel;
use crate::error::Result;

const MAX_ORDER: usize = 4;

/// Corpus BLEU in [0, 100] over whitespace tokens, n = 1..4, with clipped
/// counts, geometric mean and brevity penalty. No smoothing: any order with
/// zero matches yields 0.
pub fn bleu(hypotheses: &[String], references: &[String]) -> Result<f64> {
    check_parallel(hypotheses, references)?;
    let mut matched = [0usize; MAX_ORDER];
    let mut total = [0usize; MAX_ORDER];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;

    for (hyp, reference) in hypotheses.iter().zip(references) {
        let h: Vec<&str> = hyp.split_whitespace().collect();
        let r: Vec<&str> = reference.split_whitespace().collect();
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=MAX_ORDER {
            if h.len() < n {
                continue;
            }
            let mut ref_counts: HashMap<&[&str], usize> = HashMap::new();
            if r.len() >= n {
                for gram in r.windows(n) {
                    *ref_counts.entry(gram).or_insert(0) += 1;
                }
            }
            let mut hyp_counts: HashMap<&[&str], usize> = HashMap::new();
            for gram in h.windows(n) {
                *hyp_counts.entry(gram).or_insert(0) += 1;
            }
            total[n - 1] += h.len() + 1 - n;
            matched[n - 1] += hyp_counts
                .iter()
                .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }

    if hyp_len == 0 || matched.iter().any(|&m| m == 0) {
        return Ok(0.0);
    }
    let log_precision: f64 = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / MAX_ORDER as f64;
    let brevity = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    Ok(100.0 * brevity * log_precision.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn identical_is_100() {
        let refs = s(&["a b c d e", "f g h i"]);
        assert_eq!(bleu(&refs, &refs).unwrap(), 100.0);
    }

    #[test]
    fn no_fourgram_overlap_is_zero() {
        let hyp = s(&["a b c x d e f"]);
        let reference = s(&["a b c y d e f"]);
        assert_eq!(bleu(&hyp, &reference).unwrap(), 0.0);
    }

    #[test]
    fn clipping_and_brevity_by_hand() {
        // hyp "a a a a a" vs ref "a b c d e f": p1 = 1/5 (clipped), no bigram
        // matches -> 0.
        assert_eq!(bleu(&s(&["a a a a a"]), &s(&["a b c d e f"])).unwrap(), 0.0);
        // hyp = first 4 of a 5-token ref: p_n = 1, BP = exp(1 - 5/4).
        let v = bleu(&s(&["a b c d"]), &s(&["a b c d e"])).unwrap();
        assert!((v - 100.0 * (1.0f64 - 1.25).exp()).abs() < 1e-9);
    }

    #[test]
    fn errors_on_mismatch() {
        assert!(bleu(&s(&["a"]), &[]).is_err());
    }
}

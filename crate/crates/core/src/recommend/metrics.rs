use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{filter_duplicates, ObjectSuggestion, SceneDescription};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no labels to measure")]
    EmptyInput,
}

fn norm_label(s: &str) -> String {
    s.trim().to_lowercase()
}

fn frequencies<S: AsRef<str>>(labels: &[S]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for l in labels {
        *counts.entry(norm_label(l.as_ref())).or_insert(0) += 1;
    }
    counts
}

/// Raw Shannon entropy in bits of the label frequency distribution.
pub fn shannon_entropy_bits<S: AsRef<str>>(labels: &[S]) -> Result<f64, MetricsError> {
    if labels.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = labels.len() as f64;
    Ok(frequencies(labels)
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum())
}

/// Entropy normalised by `log2(distinct)`, in `[0, 1]`. A single distinct
/// label gives 0. Labels compare trimmed and case-insensitively.
pub fn diversity_index<S: AsRef<str>>(labels: &[S]) -> Result<f64, MetricsError> {
    let h = shannon_entropy_bits(labels)?;
    let distinct = frequencies(labels).len();
    if distinct < 2 {
        return Ok(0.0);
    }
    Ok((h / (distinct as f64).log2()).clamp(0.0, 1.0))
}

/// Share of distinct `current` labels not seen in any `history` set.
/// An empty `current` scores 0.
pub fn novelty_score<S: AsRef<str>, T: AsRef<str>>(history: &[Vec<S>], current: &[T]) -> f64 {
    let seen: HashSet<String> = history.iter().flatten().map(|l| norm_label(l.as_ref())).collect();
    let current: HashSet<String> = current.iter().map(|l| norm_label(l.as_ref())).collect();
    if current.is_empty() {
        return 0.0;
    }
    current.iter().filter(|l| !seen.contains(*l)).count() as f64 / current.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationMetrics {
    pub diversity_index: f64,
    pub novelty_score: f64,
    pub duplicate_rate: f64,
    pub rounds: usize,
    pub suggestions: usize,
    pub duplicates: usize,
}

/// One recommendation batch and the scene it was made for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationRound {
    pub scene: SceneDescription,
    pub suggestions: Vec<ObjectSuggestion>,
}

/// Diversity over every suggested name, novelty averaged over rounds after
/// the first against all earlier rounds, duplicate rate pooled over rounds.
pub fn evaluate(rounds: &[RecommendationRound]) -> Result<RecommendationMetrics, MetricsError> {
    let names: Vec<&str> = rounds.iter().flat_map(|r| r.suggestions.iter().map(|s| s.name.as_str())).collect();
    let diversity_index = diversity_index(&names)?;

    let mut history: Vec<Vec<&str>> = Vec::new();
    let mut novelty = Vec::new();
    let mut duplicates = 0;
    for r in rounds {
        let current: Vec<&str> = r.suggestions.iter().map(|s| s.name.as_str()).collect();
        if !history.is_empty() && !current.is_empty() {
            novelty.push(novelty_score(&history, &current));
        }
        duplicates += filter_duplicates(&r.suggestions, &r.scene, &[]).dropped.len();
        history.push(current);
    }
    let novelty_score = if novelty.is_empty() {
        1.0
    } else {
        novelty.iter().sum::<f64>() / novelty.len() as f64
    };
    Ok(RecommendationMetrics {
        diversity_index,
        novelty_score,
        duplicate_rate: duplicates as f64 / names.len() as f64,
        rounds: rounds.len(),
        suggestions: names.len(),
        duplicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Independent entropy: counts via sort, natural log converted to bits.
    fn oracle_entropy(labels: &[String]) -> f64 {
        let mut sorted: Vec<String> = labels.iter().map(|l| l.trim().to_lowercase()).collect();
        sorted.sort();
        let mut counts = Vec::new();
        let mut i = 0;
        while i < sorted.len() {
            let j = sorted[i..].iter().take_while(|x| **x == sorted[i]).count();
            counts.push(j);
            i += j;
        }
        let n = labels.len() as f64;
        -counts.iter().map(|&c| (c as f64 / n) * (c as f64 / n).ln()).sum::<f64>() / std::f64::consts::LN_2
    }

    #[test]
    fn constant_labels_are_zero() {
        assert_eq!(diversity_index(&["lamp"; 7]).unwrap(), 0.0);
        assert_eq!(diversity_index(&["Lamp", "lamp ", "LAMP"]).unwrap(), 0.0);
    }

    #[test]
    fn uniform_is_one() {
        for n in [2usize, 4, 8, 16] {
            let labels: Vec<String> = (0..n).map(|i| format!("obj{i}")).collect();
            let h = shannon_entropy_bits(&labels).unwrap();
            assert!((h - (n as f64).log2()).abs() <= 1e-12);
            assert!((diversity_index(&labels).unwrap() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn half_quarter_quarter() {
        let labels = ["a", "a", "b", "c"];
        assert!((shannon_entropy_bits(&labels).unwrap() - 1.5).abs() <= 1e-12);
        let want = 1.5 / 3f64.log2();
        assert!((diversity_index(&labels).unwrap() - want).abs() <= 1e-12);
        assert!((want - 0.946).abs() < 5e-4);
    }

    #[test]
    fn empty_is_an_error() {
        assert_eq!(diversity_index::<&str>(&[]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn novelty_examples() {
        let none: Vec<Vec<&str>> = vec![];
        assert_eq!(novelty_score(&none, &["a", "b"]), 1.0);
        assert_eq!(novelty_score(&[vec!["a", "b"], vec!["c"]], &["A", "c"]), 0.0);
        assert_eq!(novelty_score(&[vec!["a", "b"]], &["a", "b", "c", "d", "e"]), 0.6);
        assert_eq!(novelty_score(&[vec!["a"]], &Vec::<&str>::new()), 0.0);
    }

    fn sugg(name: &str) -> ObjectSuggestion {
        ObjectSuggestion {
            name: name.into(),
            color: String::new(),
            shape: String::new(),
            location: String::new(),
        }
    }

    #[test]
    fn evaluate_pools_rounds() {
        let rounds = vec![
            RecommendationRound {
                scene: SceneDescription::new("office", "", ["desk"]),
                suggestions: ["Desk", "Lamp", "Plant", "Rug", "Clock"].map(sugg).to_vec(),
            },
            RecommendationRound {
                scene: SceneDescription::new("office", "", ["desk"]),
                suggestions: ["Lamp", "Vase", "Shelf", "Poster", "Mirror"].map(sugg).to_vec(),
            },
        ];
        let m = evaluate(&rounds).unwrap();
        assert_eq!(m.duplicates, 1);
        assert_eq!(m.duplicate_rate, 0.1);
        assert_eq!(m.novelty_score, 0.8);
        let names: Vec<String> = rounds.iter().flat_map(|r| r.suggestions.iter().map(|s| s.name.clone())).collect();
        assert!((m.diversity_index - oracle_entropy(&names) / 9f64.log2()).abs() < 1e-12);
        assert!(evaluate(&[]).is_err());
    }

    fn labels() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "f", "g"]).prop_map(String::from), 1..60)
    }

    proptest! {
        #[test]
        fn matches_oracle_and_stays_in_range(l in labels()) {
            let h = shannon_entropy_bits(&l).unwrap();
            prop_assert!((h - oracle_entropy(&l)).abs() < 1e-12);
            let d = diversity_index(&l).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn permutation_and_repetition_invariant(l in labels(), k in 1usize..5, seed in any::<u64>()) {
            let d = diversity_index(&l).unwrap();
            let mut shuffled = l.clone();
            let n = shuffled.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert!((diversity_index(&shuffled).unwrap() - d).abs() < 1e-12);
            let repeated: Vec<String> = l.iter().cycle().take(n * k).cloned().collect();
            prop_assert!((diversity_index(&repeated).unwrap() - d).abs() < 1e-12);
        }

        #[test]
        fn kept_never_meets_detected(
            detected in prop::collection::vec("[a-cA-C]{1,2}", 0..5),
            names in prop::collection::vec("[a-cA-C]{1,2}", 0..8),
        ) {
            let scene = SceneDescription::new("room", "", &detected);
            let batch: Vec<ObjectSuggestion> = names.iter().map(|n| sugg(n)).collect();
            let f = filter_duplicates(&batch, &scene, &[]);
            for k in &f.kept {
                prop_assert!(!detected.iter().any(|d| d.to_lowercase() == k.suggestion.name.to_lowercase()));
            }
            prop_assert_eq!(f.kept.len() + f.dropped.len(), batch.len());
        }
    }
}

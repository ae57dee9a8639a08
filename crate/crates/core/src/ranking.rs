//! The ranked list shared by every retriever, fuser and reranker.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub id: String,
    pub score: f64,
}

/// Ordered `(doc id, score)` list for one query.
///
/// Entries are unique by id and sorted by descending score, ties broken by
/// ascending id. Rank is the 1-based position.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Ranking {
    pub query_id: String,
    entries: Vec<Scored>,
}

/// Descending score, ascending id.
pub(crate) fn rank_order(a: &Scored, b: &Scored) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.id.cmp(&b.id))
}

impl Ranking {
    pub fn empty(query_id: impl Into<String>) -> Self {
        Ranking {
            query_id: query_id.into(),
            entries: Vec::new(),
        }
    }

    /// Sorts `scores` into ranking order and keeps the first `top_n`.
    ///
    /// Duplicate ids keep their highest score.
    pub fn from_scores<I, S>(query_id: impl Into<String>, scores: I, top_n: usize) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut entries: Vec<Scored> = scores
            .into_iter()
            .map(|(id, score)| Scored {
                id: id.into(),
                score,
            })
            .collect();
        entries.sort_by(rank_order);
        let mut seen = HashSet::with_capacity(entries.len());
        entries.retain(|e| seen.insert(e.id.clone()));
        entries.truncate(top_n);
        Ranking {
            query_id: query_id.into(),
            entries,
        }
    }

    pub fn entries(&self) -> &[Scored] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    /// 1-based rank of `id`, if present.
    pub fn rank_of(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id).map(|p| p + 1)
    }

    pub fn score_of(&self, id: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.id == id).map(|e| e.score)
    }

    pub fn truncated(&self, top_n: usize) -> Ranking {
        Ranking {
            query_id: self.query_id.clone(),
            entries: self.entries.iter().take(top_n).cloned().collect(),
        }
    }

    /// Applies `f` to every score and re-sorts.
    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> Ranking {
        Ranking::from_scores(
            self.query_id.clone(),
            self.entries.iter().map(|e| (e.id.clone(), f(e.score))),
            usize::MAX,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorts_and_breaks_ties_by_id() {
        let r = Ranking::from_scores("q", [("b", 1.0), ("a", 1.0), ("c", 2.0)], 10);
        let ids: Vec<_> = r.ids().collect();
        assert_eq!(ids, ["c", "a", "b"]);
        assert_eq!(r.rank_of("a"), Some(2));
    }

    #[test]
    fn duplicates_keep_best() {
        let r = Ranking::from_scores("q", [("a", 0.1), ("a", 0.9)], 10);
        assert_eq!(r.len(), 1);
        assert_eq!(r.score_of("a"), Some(0.9));
    }

    #[test]
    fn positive_scaling_keeps_order() {
        let r = Ranking::from_scores("q", [("a", 0.3), ("b", 0.3), ("c", 0.7), ("d", 0.1)], 10);
        let s = r.map_scores(|x| x * 3.5);
        assert_eq!(r.ids().collect::<Vec<_>>(), s.ids().collect::<Vec<_>>());
    }
}

//! Shared tokenizer.
//!
//! Every component that compares text (capability profiles, sub-query routing,
//! knowledge-base retrieval, fact matching) goes through [`tokenize`], so two
//! pieces of text either share a token everywhere or nowhere.

use std::collections::BTreeSet;

/// Tokens shorter than this are discarded.
pub const MIN_TOKEN_LEN: usize = 2;

/// Fixed English stop-word list. Sorted so membership is a binary search.
pub const STOP_WORDS: &[&str] = &[
    "about", "after", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be", "been",
    "before", "being", "between", "both", "but", "by", "can", "could", "did", "do", "does",
    "doing", "each", "else", "etc", "for", "from", "further", "get", "go", "had", "has", "have",
    "having", "he", "her", "here", "hers", "him", "his", "how", "if", "in", "into", "is", "it",
    "its", "just", "let", "may", "me", "might", "more", "most", "must", "my", "no", "nor", "not",
    "now", "of", "off", "on", "once", "only", "or", "other", "our", "ours", "out", "over", "own",
    "please", "regarding", "same", "she", "should", "so", "some", "such", "than", "that", "the",
    "their", "theirs", "them", "then", "there", "these", "they", "this", "those", "through", "to",
    "too", "under", "until", "up", "us", "very", "was", "we", "were", "what", "when", "where",
    "which", "while", "who", "whom", "why", "will", "with", "would", "yes", "you", "your",
    "yours",
];

/// Words that mark a clause: finite verbs, modal/auxiliary verbs and
/// interrogatives. Used by question segmentation; sorted.
pub const CLAUSE_MARKERS: &[&str] = &[
    "are", "can", "check", "could", "create", "describe", "did", "do", "does", "draft", "explain",
    "find", "give", "has", "have", "how", "is", "list", "need", "offer", "plan", "prepare",
    "provide", "schedule", "send", "should", "show", "tell", "was", "were", "what", "when",
    "where", "which", "who", "why", "will", "would", "write",
];

/// Imperative verbs that mark a message as a task rather than a question.
pub const TASK_VERBS: &[&str] = &["create", "draft", "prepare", "schedule"];

pub fn is_stop_word(word: &str) -> bool {
    STOP_WORDS.binary_search(&word).is_ok()
}

/// Splits `text` into lowercase ASCII words without filtering anything.
pub fn words(text: &str) -> Vec<String> {
    let folded = deunicode::deunicode(text).to_ascii_lowercase();
    folded
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Content tokens in order of appearance (duplicates kept).
pub fn tokenize(text: &str) -> Vec<String> {
    words(text)
        .into_iter()
        .filter(|w| w.len() >= MIN_TOKEN_LEN && !is_stop_word(w))
        .collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

/// English stopwords excluded from fallback key-term extraction.
pub const STOPWORDS: [&str; 200] = [
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an",
    "and", "any", "are", "around", "as", "at", "back", "be", "because", "been",
    "before", "being", "below", "between", "both", "but", "by", "came", "can", "cannot",
    "come", "could", "day", "days", "did", "do", "does", "doing", "done", "down",
    "during", "each", "either", "else", "enough", "even", "ever", "every", "feel", "feeling",
    "few", "for", "from", "further", "get", "gets", "getting", "give", "go", "going",
    "good", "got", "had", "has", "have", "having", "he", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "however", "i", "if", "in", "into",
    "is", "it", "its", "itself", "just", "know", "last", "like", "little", "long",
    "lot", "made", "make", "many", "may", "me", "might", "more", "most", "much",
    "must", "my", "myself", "never", "new", "no", "nor", "not", "now", "of",
    "off", "often", "on", "once", "one", "only", "or", "other", "our", "ours",
    "ourselves", "out", "over", "own", "past", "per", "quite", "rather", "really", "right",
    "said", "same", "say", "see", "seem", "seems", "she", "should", "since", "so",
    "some", "something", "sometimes", "still", "such", "take", "than", "that", "the", "their",
    "theirs", "them", "themselves", "then", "there", "these", "they", "thing", "things", "think",
    "this", "those", "though", "through", "time", "times", "to", "today", "too", "two",
    "under", "until", "up", "upon", "us", "very", "was", "way", "we", "week",
    "weeks", "well", "were", "what", "when", "where", "whether", "which", "while", "who",
    "whom", "why", "will", "with", "within", "without", "would", "yes", "you", "your",
];

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.binary_search(&word).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_is_sorted_and_unique() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
        assert!(is_stopword("the"));
        assert!(!is_stopword("fever"));
    }
}

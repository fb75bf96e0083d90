/// Lowercases, replaces punctuation with whitespace and splits into words.
///
/// Shared by the caption vocabulary and the evaluation metrics so both see
/// the same token boundaries.
pub fn words(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect();
    cleaned
        .to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

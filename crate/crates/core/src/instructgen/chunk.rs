/// Splits `text` into pieces of at most `max_units` Unicode scalar values
/// whose concatenation is exactly `text`.
///
/// Each piece is as long as possible while ending on a paragraph break
/// (blank line) if one fits, otherwise after a sentence terminator,
/// otherwise at the hard limit.
///
/// # Panics
/// If `max_units` is zero.
pub fn chunk_article(text: &str, max_units: usize) -> Vec<String> {
    assert!(max_units > 0, "max_units must be positive");
    let chars: Vec<char> = text.chars().collect();
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let end = if chars.len() - start <= max_units {
            chars.len()
        } else {
            let window = &chars[start..start + max_units];
            paragraph_cut(window)
                .or_else(|| sentence_cut(window))
                .map_or(start + max_units, |cut| start + cut)
        };
        chunks.push(chars[start..end].iter().collect());
        start = end;
    }
    chunks
}

/// Offset just past the last blank line in `window`.
fn paragraph_cut(window: &[char]) -> Option<usize> {
    let mut prev_newline = None;
    let mut cut = None;
    for (i, &c) in window.iter().enumerate() {
        if c != '\n' {
            continue;
        }
        if let Some(j) = prev_newline {
            if window[j + 1..i].iter().all(|c: &char| c.is_whitespace()) {
                cut = Some(i + 1);
            }
        }
        prev_newline = Some(i);
    }
    cut
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '。' | '！' | '？' | '\n')
}

/// Offset just past the last sentence terminator (and any whitespace that
/// follows it inside the window).
fn sentence_cut(window: &[char]) -> Option<usize> {
    let i = window.iter().rposition(|&c| is_terminator(c))?;
    let mut cut = i + 1;
    while cut < window.len() && window[cut].is_whitespace() {
        cut += 1;
    }
    Some(cut)
}

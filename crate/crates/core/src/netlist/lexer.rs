use super::ast::Word;

/// Splits one source line into words. `=` and `->` are tokens of their own,
/// whitespace separates, `#` ends the line.
pub(super) fn tokenize_line(src: &str, line: usize) -> Vec<Word> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut current = String::new();
    let mut start = 0;
    let flush = |current: &mut String, start: usize, out: &mut Vec<Word>| {
        if !current.is_empty() {
            out.push(Word {
                text: std::mem::take(current),
                line,
                column: start + 1,
            });
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            flush(&mut current, start, &mut out);
            i += 1;
            continue;
        }
        if c == '=' || (c == '-' && chars.get(i + 1) == Some(&'>')) {
            flush(&mut current, start, &mut out);
            let text = if c == '=' { "=" } else { "->" };
            out.push(Word {
                text: text.to_string(),
                line,
                column: i + 1,
            });
            i += text.len();
            continue;
        }
        if current.is_empty() {
            start = i;
        }
        current.push(c);
        i += 1;
    }
    flush(&mut current, start, &mut out);
    out
}

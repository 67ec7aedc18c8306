use std::sync::LazyLock;

use regex::Regex;

static MARKUP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[^<>]*>|&[a-z0-9#]+;").unwrap());
static URL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:https?://|ftp://|www\.)\S*").unwrap());
static SPACE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").unwrap());

fn map_char(c: char) -> Option<&'static str> {
    Some(match c {
        '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{201B}' | '\u{2032}' | '`' => "'",
        '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' | '\u{2033}' | '\u{00AB}' | '\u{00BB}' => "\"",
        '\u{2010}'..='\u{2015}' | '\u{2212}' => "-",
        '\u{2026}' => "...",
        '\u{00A0}' | '\u{2009}' | '\u{200A}' | '\u{202F}' => " ",
        _ => return None,
    })
}

fn pass(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let mut mapped = String::with_capacity(lowered.len());
    for c in lowered.chars() {
        match map_char(c) {
            Some(s) => mapped.push_str(s),
            None => mapped.push(c),
        }
    }
    let no_markup = MARKUP.replace_all(&mapped, " ");
    let no_urls = URL.replace_all(&no_markup, " ");
    SPACE.replace_all(no_urls.trim(), " ").into_owned()
}

/// Lowercases, maps typographic punctuation to ASCII, strips URLs and
/// markup, and collapses whitespace.
///
/// The passes are repeated until nothing changes, so the result is a fixed
/// point: `normalize_text(normalize_text(x)) == normalize_text(x)`.
pub fn normalize_text(raw: &str) -> String {
    let mut current = pass(raw);
    loop {
        let next = pass(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases() {
        assert_eq!(normalize_text("I'm SO Sad!!"), "i'm so sad!!");
    }

    #[test]
    fn strips_urls() {
        assert_eq!(normalize_text("see https://x.y now"), "see now");
        assert_eq!(normalize_text("go to www.example.com/a?b=c please"), "go to please");
    }

    #[test]
    fn maps_curly_quotes() {
        assert_eq!(normalize_text("\u{201C}ok\u{201D}"), "\"ok\"");
        assert_eq!(normalize_text("it\u{2019}s fine \u{2014} really"), "it's fine - really");
    }

    #[test]
    fn strips_markup_and_collapses_space() {
        assert_eq!(normalize_text("a<br/>b  &amp;\n\tc"), "a b c");
    }
}

/// A fenced block: info string and the exact text between the opening
/// line and the closing fence's line.
struct Fence<'a> {
    info: &'a str,
    body: &'a str,
}

/// `(start, end)` byte spans of each line, excluding the line terminator.
fn line_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, b) in text.bytes().enumerate() {
        if b == b'\n' {
            spans.push((start, i));
            start = i + 1;
        }
    }
    if start < text.len() {
        spans.push((start, text.len()));
    }
    spans
}

fn fences(text: &str) -> Vec<Fence<'_>> {
    let spans = line_spans(text);
    let line = |(s, e): (usize, usize)| text[s..e].trim_end_matches('\r');
    let mut found = Vec::new();
    let mut i = 0;
    while i < spans.len() {
        let Some(info) = line(spans[i]).trim_start().strip_prefix("```") else {
            i += 1;
            continue;
        };
        let body_start = (spans[i].1 + 1).min(text.len());
        let close = (i + 1..spans.len()).find(|j| line(spans[*j]).trim() == "```");
        let body = match close {
            Some(j) if spans[j].0 > body_start => {
                text[body_start..spans[j].0 - 1].trim_end_matches('\r')
            }
            Some(_) => "",
            None => &text[body_start..],
        };
        found.push(Fence { info: info.trim(), body });
        match close {
            Some(j) => i = j + 1,
            None => break,
        }
    }
    found
}

fn tag_matches(info: &str, language_tag: &str) -> bool {
    let lang = info.split_whitespace().next().unwrap_or("");
    let normalize = |s: &str| match s.to_ascii_lowercase().as_str() {
        "c++" | "cxx" | "cc" => "cpp".to_string(),
        "h" => "c".to_string(),
        other => other.to_string(),
    };
    !lang.is_empty() && normalize(lang) == normalize(language_tag)
}

/// Pulls program source out of a model completion: the first fenced block
/// tagged with `language_tag`, else the first fenced block of any tag, else
/// the whole completion trimmed.
pub fn extract_code(completion: &str, language_tag: &str) -> String {
    let blocks = fences(completion);
    if let Some(block) = blocks.iter().find(|b| tag_matches(b.info, language_tag)) {
        return block.body.to_string();
    }
    if let Some(block) = blocks.first() {
        return block.body.to_string();
    }
    completion.trim().to_string()
}

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Applies `f` to every item on up to `workers` threads; output order matches input.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

/// Timestamp source; `Fixed` makes artifacts reproducible.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    #[default]
    System,
    Fixed(String),
}

impl Clock {
    /// RFC 3339 timestamp.
    pub fn now(&self) -> String {
        match self {
            Clock::System => chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            Clock::Fixed(t) => t.clone(),
        }
    }
}

/// One JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> io::Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{}:{}: {e}", path.display(), n + 1),
            )
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Body of the last fenced code block in `text`, with its info string.
pub fn last_fenced_block(text: &str) -> Option<(String, String)> {
    let mut blocks = Vec::new();
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        let trimmed = line.trim_start();
        if let Some(info) = trimmed.strip_prefix("```") {
            let info = info.trim().to_string();
            let mut body = Vec::new();
            let mut closed = false;
            for inner in lines.by_ref() {
                if inner.trim_start().starts_with("```") {
                    closed = true;
                    break;
                }
                body.push(inner);
            }
            if closed {
                blocks.push((info, body.join("\n")));
            }
        }
    }
    blocks.pop()
}

/// JSON payload of the last fenced block tagged `json` (or untagged).
pub fn fenced_json(text: &str) -> Option<String> {
    let mut found = None;
    let mut rest = text;
    while let Some((info, body, after)) = next_block(rest) {
        if info.is_empty() || info.eq_ignore_ascii_case("json") {
            found = Some(body);
        }
        rest = after;
    }
    found
}

fn next_block(text: &str) -> Option<(String, String, &str)> {
    let start = text.find("```")?;
    let after_fence = &text[start + 3..];
    let info_end = after_fence.find('\n')?;
    let info = after_fence[..info_end].trim().to_string();
    let body_start = &after_fence[info_end + 1..];
    let close = body_start.find("```")?;
    let body = body_start[..close].to_string();
    Some((info, body, &body_start[close + 3..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_preserves_order() {
        let items: Vec<usize> = (0..100).collect();
        let out = parallel_map(&items, 7, |x| x * 2);
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn fenced_json_takes_last_json_block() {
        let text = "intro\n```python\nprint(1)\n```\n```json\n{\"a\":1}\n```\nbye";
        assert_eq!(fenced_json(text).unwrap().trim(), "{\"a\":1}");
        assert!(fenced_json("no fence {\"a\":1}").is_none());
    }

    #[test]
    fn last_fenced_block_reports_language() {
        let (lang, body) = last_fenced_block("x\n```python\nprint('hi')\n```").unwrap();
        assert_eq!(lang, "python");
        assert_eq!(body, "print('hi')");
    }
}

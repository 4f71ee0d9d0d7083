//! Dataset text format: a `seed` header followed by one `s a r s'` record
//! per transition. The last record of an episode carries `end` (terminal
//! reached) or `cut` (truncated).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Dataset, EpisodeEnd, Transition};
use crate::error::{Result, SpiError};

pub fn write_dataset<W: Write>(data: &Dataset, mut out: W) -> std::io::Result<()> {
    writeln!(out, "seed {}", data.rng_seed())?;
    let mut ends = data.episode_ends().iter().zip(data.end_kinds()).peekable();
    for (i, t) in data.transitions().iter().enumerate() {
        write!(out, "{} {} {} {}", t.s, t.a, t.r, t.s_next)?;
        if let Some((&end, kind)) = ends.peek() {
            if end == i + 1 {
                let tag = match kind {
                    EpisodeEnd::Terminal => "end",
                    EpisodeEnd::Truncated => "cut",
                };
                write!(out, " {tag}")?;
                ends.next();
            }
        }
        writeln!(out)?;
    }
    out.flush()
}

pub fn read_dataset<R: Read>(input: R) -> Result<Dataset> {
    let mut seed = None;
    let mut transitions = Vec::new();
    let mut ends = Vec::new();
    let mut kinds = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| SpiError::Parse { line: line_no, message: e.to_string() })?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() || toks[0].starts_with('#') {
            continue;
        }
        if seed.is_none() {
            match toks.as_slice() {
                ["seed", v] => {
                    seed = Some(parse(v, line_no)?);
                    continue;
                }
                _ => return Err(SpiError::Parse { line: line_no, message: "expected `seed <u64>` header".into() }),
            }
        }
        if toks.len() != 4 && toks.len() != 5 {
            return Err(SpiError::Parse { line: line_no, message: "expected `s a r s' [end|cut]`".into() });
        }
        transitions.push(Transition {
            s: parse(toks[0], line_no)?,
            a: parse(toks[1], line_no)?,
            r: parse(toks[2], line_no)?,
            s_next: parse(toks[3], line_no)?,
        });
        if let Some(tag) = toks.get(4) {
            let kind = match *tag {
                "end" => EpisodeEnd::Terminal,
                "cut" => EpisodeEnd::Truncated,
                other => {
                    return Err(SpiError::Parse { line: line_no, message: format!("unknown tag `{other}`") });
                }
            };
            ends.push(transitions.len());
            kinds.push(kind);
        }
    }
    let seed = seed.ok_or(SpiError::Parse { line: 0, message: "missing seed header".into() })?;
    if ends.last().copied().unwrap_or(0) != transitions.len() {
        ends.push(transitions.len());
        kinds.push(EpisodeEnd::Truncated);
    }
    Dataset::new(transitions, ends, kinds, seed)
}

pub fn save_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| SpiError::io(path, e))?;
    write_dataset(data, BufWriter::new(file)).map_err(|e| SpiError::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| SpiError::io(path, e))?;
    read_dataset(file)
}

fn parse<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse()
        .map_err(|_| SpiError::Parse { line, message: format!("cannot parse `{tok}`") })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let t = |s, r, s2| Transition { s, a: 1, r, s_next: s2 };
        let data = Dataset::new(
            vec![t(0, 0.1, 1), t(1, -0.3, 2), t(0, 1.0 / 3.0, 1)],
            vec![2, 3],
            vec![EpisodeEnd::Terminal, EpisodeEnd::Truncated],
            99,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_dataset(&data, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("seed 99\n0 1 0.1 1\n1 1 -0.3 2 end\n"));
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn empty_dataset_round_trip() {
        let data = Dataset::new(vec![], vec![], vec![], 5).unwrap();
        let mut buf = Vec::new();
        write_dataset(&data, &mut buf).unwrap();
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), data);
    }
}

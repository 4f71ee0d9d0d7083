//! Line-oriented text format for [`TabularMdp`].
//!
//! ```text
//! spi-mdp 1
//! n_states 2
//! n_actions 1
//! gamma 0.9
//! r_max 1
//! reward_mode sa
//! terminal 1
//! 0 0 1 1 0.5
//! ```
//!
//! Each record after the header is `s a s' P(s'|s,a) reward`, listed for
//! non-zero probabilities only. With `reward_mode sas` the reward column is
//! `R₃(s,a,s')` and extra `sa s a R(s,a)` lines carry the pair reward table.
//! Floats are written in shortest round-trip form, so a save/load cycle is
//! exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};

use super::TabularMdp;
use crate::error::{Result, SpiError};

const MAGIC: &str = "spi-mdp 1";

pub fn write_mdp<W: Write>(mdp: &TabularMdp, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "n_states {}", mdp.n_states())?;
    writeln!(out, "n_actions {}", mdp.n_actions())?;
    writeln!(out, "gamma {}", mdp.gamma())?;
    writeln!(out, "r_max {}", mdp.r_max())?;
    let mode = if mdp.reward_sas().is_some() { "sas" } else { "sa" };
    writeln!(out, "reward_mode {mode}")?;
    let terminals: Vec<String> = (0..mdp.n_states())
        .filter(|&s| mdp.is_terminal(s))
        .map(|s| s.to_string())
        .collect();
    if terminals.is_empty() {
        writeln!(out, "terminal")?;
    } else {
        writeln!(out, "terminal {}", terminals.join(" "))?;
    }
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            if mdp.reward_sas().is_some() {
                writeln!(out, "sa {s} {a} {}", mdp.reward()[[s, a]])?;
            }
            for succ in mdp.successors(s, a) {
                writeln!(out, "{s} {a} {} {} {}", succ.state, succ.prob, succ.reward)?;
            }
        }
    }
    out.flush()
}

pub fn read_mdp<R: Read>(input: R) -> Result<TabularMdp> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines().enumerate();
    let mut next_line = |expect: &str| -> Result<(usize, String)> {
        loop {
            match lines.next() {
                Some((i, Ok(line))) => {
                    let trimmed = line.trim();
                    if trimmed.is_empty() || trimmed.starts_with('#') {
                        continue;
                    }
                    return Ok((i + 1, trimmed.to_string()));
                }
                Some((i, Err(e))) => {
                    return Err(SpiError::Parse { line: i + 1, message: e.to_string() });
                }
                None => {
                    return Err(SpiError::Parse { line: 0, message: format!("missing {expect}") });
                }
            }
        }
    };

    let (line, magic) = next_line("header")?;
    if magic != MAGIC {
        return Err(SpiError::Parse { line, message: format!("expected `{MAGIC}`") });
    }
    let n_states: usize = header_value(next_line("n_states")?, "n_states")?;
    let n_actions: usize = header_value(next_line("n_actions")?, "n_actions")?;
    let gamma: f64 = header_value(next_line("gamma")?, "gamma")?;
    let r_max: f64 = header_value(next_line("r_max")?, "r_max")?;
    let (line, mode_line) = next_line("reward_mode")?;
    let sas = match mode_line.strip_prefix("reward_mode ") {
        Some("sa") => false,
        Some("sas") => true,
        _ => return Err(SpiError::Parse { line, message: "expected `reward_mode sa|sas`".into() }),
    };
    let (line, term_line) = next_line("terminal")?;
    let rest = term_line
        .strip_prefix("terminal")
        .ok_or_else(|| SpiError::Parse { line, message: "expected `terminal`".into() })?;
    let mut terminal = vec![false; n_states];
    for tok in rest.split_whitespace() {
        let s: usize = parse_tok(tok, line)?;
        if s >= n_states {
            return Err(SpiError::Parse { line, message: format!("terminal {s} out of range") });
        }
        terminal[s] = true;
    }

    let mut p = Array3::zeros((n_states, n_actions, n_states));
    let mut r = Array2::zeros((n_states, n_actions));
    let mut r3 = if sas { Some(Array3::zeros((n_states, n_actions, n_states))) } else { None };
    loop {
        let (line, text) = match next_line("record") {
            Ok(v) => v,
            Err(SpiError::Parse { line: 0, .. }) => break,
            Err(e) => return Err(e),
        };
        let toks: Vec<&str> = text.split_whitespace().collect();
        if toks.first() == Some(&"sa") {
            if toks.len() != 4 || !sas {
                return Err(SpiError::Parse { line, message: "malformed `sa` record".into() });
            }
            let s: usize = parse_tok(toks[1], line)?;
            let a: usize = parse_tok(toks[2], line)?;
            check_range(s, a, 0, n_states, n_actions, line)?;
            r[[s, a]] = parse_tok(toks[3], line)?;
            continue;
        }
        if toks.len() != 5 {
            return Err(SpiError::Parse { line, message: "expected `s a s' prob reward`".into() });
        }
        let s: usize = parse_tok(toks[0], line)?;
        let a: usize = parse_tok(toks[1], line)?;
        let s2: usize = parse_tok(toks[2], line)?;
        check_range(s, a, s2, n_states, n_actions, line)?;
        p[[s, a, s2]] = parse_tok(toks[3], line)?;
        let reward: f64 = parse_tok(toks[4], line)?;
        match r3.as_mut() {
            Some(r3) => r3[[s, a, s2]] = reward,
            None => r[[s, a]] = reward,
        }
    }
    TabularMdp::new(p, r, r3, gamma, terminal, r_max)
}

pub fn save_mdp(mdp: &TabularMdp, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| SpiError::io(path, e))?;
    write_mdp(mdp, BufWriter::new(file)).map_err(|e| SpiError::io(path, e))
}

pub fn load_mdp(path: &Path) -> Result<TabularMdp> {
    let file = File::open(path).map_err(|e| SpiError::io(path, e))?;
    read_mdp(file)
}

fn header_value<T: std::str::FromStr>((line, text): (usize, String), key: &str) -> Result<T> {
    let value = text
        .strip_prefix(key)
        .map(str::trim)
        .ok_or_else(|| SpiError::Parse { line, message: format!("expected `{key}`") })?;
    parse_tok(value, line)
}

fn parse_tok<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse()
        .map_err(|_| SpiError::Parse { line, message: format!("cannot parse `{tok}`") })
}

fn check_range(s: usize, a: usize, s2: usize, n_s: usize, n_a: usize, line: usize) -> Result<()> {
    if s >= n_s || a >= n_a || s2 >= n_s {
        return Err(SpiError::Parse { line, message: "index out of range".into() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_is_exact() {
        let mut p = Array3::zeros((2, 2, 2));
        p[[0, 0, 0]] = 0.123456789012;
        p[[0, 0, 1]] = 1.0 - 0.123456789012;
        p[[0, 1, 1]] = 1.0;
        p[[1, 0, 1]] = 1.0;
        p[[1, 1, 1]] = 1.0;
        let mdp = TabularMdp::new(p, array![[0.1, -0.7], [0.0, 0.0]], None, 0.95, vec![false, true], 1.0)
            .unwrap();
        let mut buf = Vec::new();
        write_mdp(&mdp, &mut buf).unwrap();
        let back = read_mdp(buf.as_slice()).unwrap();
        assert_eq!(back.transition(), mdp.transition());
        assert_eq!(back.reward(), mdp.reward());
        assert_eq!(back.terminal(), mdp.terminal());
        assert_eq!(back.gamma(), mdp.gamma());
    }

    #[test]
    fn round_trip_with_transition_rewards() {
        let mut p = Array3::zeros((2, 1, 2));
        p[[0, 0, 0]] = 0.25;
        p[[0, 0, 1]] = 0.75;
        p[[1, 0, 0]] = 1.0;
        let mut r3 = Array3::zeros((2, 1, 2));
        r3[[0, 0, 1]] = 3.0;
        let mdp = TabularMdp::new(p, array![[2.25], [0.0]], Some(r3), 0.9, vec![false; 2], 3.0).unwrap();
        let mut buf = Vec::new();
        write_mdp(&mdp, &mut buf).unwrap();
        let back = read_mdp(buf.as_slice()).unwrap();
        assert_eq!(back.reward_sas(), mdp.reward_sas());
        assert_eq!(back.reward(), mdp.reward());
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_mdp("hello".as_bytes()).is_err());
        let bad = "spi-mdp 1\nn_states 1\nn_actions 1\ngamma 0.5\nr_max 0\nreward_mode sa\nterminal\n0 0 3 1 0\n";
        assert!(matches!(read_mdp(bad.as_bytes()), Err(SpiError::Parse { .. })));
    }
}

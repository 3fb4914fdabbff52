//! File helpers shared by the library and the command-line front end.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use crate::grammar::{TokenId, TokenTable};

/// Writes `bytes` to a temporary file next to `path`, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Reads one sequence per line; blank lines and lines starting with `#` are skipped.
pub fn read_corpus(path: &Path) -> io::Result<Vec<String>> {
    let f = fs::File::open(path)?;
    let mut out = Vec::new();
    for line in io::BufReader::new(f).lines() {
        let line = line?;
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        out.push(s.to_string());
    }
    Ok(out)
}

/// Tokenizes every line, reporting the first bad line by number.
pub fn tokenize_corpus(lines: &[String]) -> Result<Vec<Vec<TokenId>>, String> {
    let table = TokenTable::standard();
    lines
        .iter()
        .enumerate()
        .map(|(i, s)| table.tokenize(s).map_err(|e| format!("sequence {}: {e}", i + 1)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_and_corpus_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        write_atomic(&p, b"# header\nCCO\n\n  C1CC1 \n").unwrap();
        write_atomic(&p, b"# header\nCCO\n\n  C1CC1 \n#x\nN\n").unwrap();
        let lines = read_corpus(&p).unwrap();
        assert_eq!(lines, vec!["CCO", "C1CC1", "N"]);
        assert_eq!(tokenize_corpus(&lines).unwrap()[1].len(), 5);
        assert!(tokenize_corpus(&["CX".to_string()]).unwrap_err().contains("sequence 1"));
        let leftovers = fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 1);
    }
}

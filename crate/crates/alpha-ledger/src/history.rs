//! JSON-lines ledger history: one object per applied test with its spec,
//! parameters, outcome and the balances right after it.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use alpha_ledger_core::{HistoryEntry, WealthState};

use crate::error::{Error, IoContext, Result};

/// Writes one JSON object per line.
pub fn write_history<W: Write>(entries: &[HistoryEntry], mut out: W) -> Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")
            .map_err(|source| Error::Io {
                path: "<writer>".into(),
                source,
            })?;
    }
    Ok(())
}

/// Reads entries written by [`write_history`]; blank lines are ignored.
pub fn read_history<R: BufRead>(input: R, origin: &Path) -> Result<Vec<HistoryEntry>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.at(origin)?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line).map_err(|e| Error::CorruptLog {
            path: origin.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(e);
    }
    Ok(out)
}

pub fn save_history(state: &WealthState, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).at(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_history(state.history(), &mut w)?;
    w.flush().at(path)
}

/// Loads a history file and rebuilds the ledger it describes, checking that
/// every stored balance matches the replayed one bit for bit.
pub fn load_history(
    path: &Path,
    alpha_global: f64,
    eta: f64,
    budget: f64,
) -> Result<WealthState> {
    let file = std::fs::File::open(path).at(path)?;
    let entries = read_history(BufReader::new(file), path)?;
    let state = WealthState::replay(alpha_global, eta, budget, &entries)?;
    for (i, (a, b)) in state.history().iter().zip(&entries).enumerate() {
        if a.w_alpha.to_bits() != b.w_alpha.to_bits() || a.w_dollar.to_bits() != b.w_dollar.to_bits()
        {
            return Err(Error::CorruptLog {
                path: path.to_path_buf(),
                line: i + 1,
                message: "stored balances disagree with the replayed ledger".into(),
            });
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alpha_ledger_core::{init_wealth, HypothesisSpec, Outcome, TestParams};

    fn sample_state() -> WealthState {
        let mut w = init_wealth(0.05, 0.95, 100.0).unwrap();
        let spec = HypothesisSpec::new(0.9, 2.0, 1.0, 1.0).unwrap();
        let params = TestParams {
            phi: 0.004,
            alpha_j: 0.003,
            psi: 0.05,
            rho: 0.5,
            n: 3.0,
        };
        for k in 0..5 {
            let o = Outcome::from_p_value(if k % 2 == 0 { 0.001 } else { 0.4 }, params.alpha_j);
            w.apply_outcome(&spec, &params, &o).unwrap();
        }
        w
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let w = sample_state();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        save_history(&w, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 5);
        let back = load_history(&path, 0.05, 0.95, 100.0).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn tampered_balances_are_reported() {
        let w = sample_state();
        let mut entries = w.history().to_vec();
        entries[2].w_alpha += 1e-3;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        write_history(&entries, std::fs::File::create(&path).unwrap()).unwrap();
        match load_history(&path, 0.05, 0.95, 100.0) {
            Err(Error::CorruptLog { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "{not json}\n").unwrap();
        assert!(matches!(
            load_history(&path, 0.05, 0.95, 100.0),
            Err(Error::CorruptLog { line: 1, .. })
        ));
    }
}

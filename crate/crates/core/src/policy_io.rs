//! Policy tables as CSV.
//!
//! The first line is `# fingerprint: <hex>` identifying the model, followed
//! by a header of state then action component labels and one row per state
//! in index order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::mdp::{Fingerprint, MdpModel};
use crate::vi::Policy;

const FINGERPRINT_PREFIX: &str = "# fingerprint: ";

pub fn write_policy_csv<M: MdpModel>(path: &Path, model: &M, policy: &Policy) -> Result<()> {
    if policy.actions.len() != model.num_states() {
        return Err(Error::Contract(format!(
            "policy has {} entries, model has {} states",
            policy.actions.len(),
            model.num_states()
        )));
    }
    let mut out = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    let mut header = model.state_labels();
    header.extend(model.action_labels());
    out.write_record(&header).map_err(csv_err)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for (s, &a) in policy.actions.iter().enumerate() {
        rec.clear();
        rec.extend(model.state_components(s).iter().map(usize::to_string));
        rec.extend(model.action_components(a as usize).iter().map(usize::to_string));
        out.write_record(&rec).map_err(csv_err)?;
    }
    let body = out.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    atomic_write(path, |w| {
        use std::io::Write;
        writeln!(w, "{FINGERPRINT_PREFIX}{}", model.fingerprint().to_hex())?;
        w.write_all(&body)
    })
}

/// Reads a policy written for `model`, rejecting files made for another model.
pub fn read_policy_csv<M: MdpModel>(path: &Path, model: &M) -> Result<Policy> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (first, body) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    let hex = first
        .trim_end()
        .strip_prefix(FINGERPRINT_PREFIX)
        .ok_or_else(|| Error::format(path, "missing fingerprint line"))?;
    let found = Fingerprint::from_hex(hex).ok_or_else(|| Error::format(path, "malformed fingerprint"))?;
    let expected = model.fingerprint();
    if found != expected {
        return Err(Error::Fingerprint {
            expected: expected.to_hex(),
            found: found.to_hex(),
        });
    }
    let n_state = model.state_labels().len();
    let n_action = model.action_labels().len();
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header = reader.headers().map_err(|e| Error::format(path, e.to_string()))?;
    if header.len() != n_state + n_action {
        return Err(Error::format(path, format!("expected {} columns, found {}", n_state + n_action, header.len())));
    }
    let mut actions = Vec::with_capacity(model.num_states());
    let mut comps = Vec::with_capacity(header.len());
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        comps.clear();
        for field in rec.iter() {
            let v: usize = field
                .trim()
                .parse()
                .map_err(|_| Error::format(path, format!("row {}: bad value {field:?}", row + 1)))?;
            comps.push(v);
        }
        if comps.len() != n_state + n_action {
            return Err(Error::format(path, format!("row {} has {} fields", row + 1, comps.len())));
        }
        let s = model
            .state_index(&comps[..n_state])
            .map_err(|e| Error::format(path, format!("row {}: {e}", row + 1)))?;
        if s != row {
            return Err(Error::format(path, format!("row {} holds state {s}; rows must be in index order", row + 1)));
        }
        let a = model
            .action_index(&comps[n_state..])
            .map_err(|e| Error::format(path, format!("row {}: {e}", row + 1)))?;
        actions.push(a as u32);
    }
    if actions.len() != model.num_states() {
        return Err(Error::format(
            path,
            format!("{} rows for {} states", actions.len(), model.num_states()),
        ));
    }
    Ok(Policy { actions })
}

use super::TraceStep;
use crate::store::{RecordStore, StoreError};

pub fn trace_file_name(episode: &str) -> String {
    format!("trace_{episode}.jsonl")
}

/// Appends the steps to `trace_<episode>.jsonl` in the patient folder, one
/// JSON object per line.
pub fn write_trace(store: &RecordStore, patient_id: &str, episode: &str, trace: &[TraceStep]) -> Result<String, StoreError> {
    let name = trace_file_name(episode);
    let mut buf = Vec::new();
    for step in trace {
        serde_json::to_writer(&mut buf, step)?;
        buf.push(b'\n');
    }
    store.append_aux(patient_id, &name, &buf)?;
    Ok(name)
}

pub fn read_trace(store: &RecordStore, patient_id: &str, episode: &str) -> Result<Vec<TraceStep>, StoreError> {
    let Some(bytes) = store.read_aux(patient_id, &trace_file_name(episode))? else {
        return Ok(Vec::new());
    };
    String::from_utf8_lossy(&bytes)
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(StoreError::from))
        .collect()
}

//! Merges recommendations from every reasoner into one ranked list.

use std::collections::BTreeMap;

use crate::model::{ActionId, Alternative, Evidence, Recommendation};

/// Per action, keeps the most confident input (the earliest on ties) and
/// folds the other inputs' evidence into it. Each output lists every other
/// action as an alternative. Sorted by confidence descending, then action id.
pub fn aggregate(inputs: &[Recommendation]) -> Vec<Recommendation> {
    let mut merged: BTreeMap<ActionId, (Recommendation, Vec<Evidence>)> = BTreeMap::new();
    for rec in inputs {
        match merged.get_mut(&rec.action_id) {
            None => {
                merged.insert(rec.action_id, (rec.clone(), rec.evidence.clone()));
            }
            Some((best, evidence)) => {
                evidence.extend(rec.evidence.iter().cloned());
                if rec.confidence.value() > best.confidence.value() {
                    *best = rec.clone();
                }
            }
        }
    }

    let mut out: Vec<Recommendation> = merged
        .into_values()
        .map(|(mut best, evidence)| {
            let supporting: Vec<String> = evidence
                .iter()
                .filter(|e| e.source != best.source)
                .map(|e| format!("{} {:.4}", e.source, e.confidence.value()))
                .collect();
            if !supporting.is_empty() {
                best.explanation = format!(
                    "{} (supporting: {})",
                    best.explanation,
                    supporting.join(", ")
                );
            }
            best.evidence = evidence;
            best
        })
        .collect();

    out.sort_by(|a, b| {
        b.confidence
            .value()
            .total_cmp(&a.confidence.value())
            .then_with(|| a.action_id.as_str().cmp(b.action_id.as_str()))
    });
    let summary: Vec<Alternative> = out
        .iter()
        .map(|r| Alternative {
            action_id: r.action_id,
            confidence: r.confidence,
        })
        .collect();
    for rec in &mut out {
        rec.alternatives = summary
            .iter()
            .filter(|a| a.action_id != rec.action_id)
            .cloned()
            .collect();
    }
    out
}

use std::collections::HashMap;

use super::records::{InteractionRecord, RawCorpus, Split};
use crate::error::{Error, Result};

/// Holds out, per user, the final `ceil(fraction * k)` of the user's `k`
/// interactions (file order) as test. A user left with no training
/// interaction keeps everything in train.
///
/// Returns `(train, test)` with the `split` field rewritten accordingly.
pub fn split_train_test(
    raw: &RawCorpus,
    fraction: f64,
) -> Result<(Vec<InteractionRecord>, Vec<InteractionRecord>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must be in (0, 1), got {fraction}"
        )));
    }
    let mut per_user: HashMap<&str, usize> = HashMap::new();
    for rec in &raw.interactions {
        *per_user.entry(rec.user_id.as_str()).or_default() += 1;
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for rec in &raw.interactions {
        let k = per_user[rec.user_id.as_str()];
        let n_test = (fraction * k as f64).ceil() as usize;
        let pos = seen.entry(rec.user_id.as_str()).or_default();
        let held_out = n_test < k && *pos >= k - n_test;
        *pos += 1;
        let mut rec = rec.clone();
        if held_out {
            rec.split = Split::Test;
            test.push(rec);
        } else {
            rec.split = Split::Train;
            train.push(rec);
        }
    }
    Ok((train, test))
}

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sample::Sample;
use crate::error::{Error, Result};

/// Assignment of sample ids to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// Ids of fold `f`, sorted.
    pub fn members(&self, f: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &v)| v == f)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn check_fold(&self, f: usize) -> Result<()> {
        if f >= self.k {
            return Err(Error::Config(format!("fold {f} outside 0..{}", self.k)));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let plan: FoldPlan = serde_json::from_str(&text)?;
        if let Some((id, f)) = plan.assignment.iter().find(|(_, &f)| f >= plan.k) {
            return Err(Error::data(id, format!("fold {f} outside 0..{}", plan.k)));
        }
        Ok(plan)
    }

    /// Splits `samples` into (training, held-out) for fold `f`.
    pub fn split<'a>(
        &self,
        samples: &'a [Sample],
        f: usize,
    ) -> Result<(Vec<&'a Sample>, Vec<&'a Sample>)> {
        self.check_fold(f)?;
        let mut train = Vec::new();
        let mut test = Vec::new();
        for s in samples {
            match self.fold_of(&s.id) {
                Some(g) if g == f => test.push(s),
                Some(_) => train.push(s),
                None => return Err(Error::data(&s.id, "sample missing from the fold plan")),
            }
        }
        Ok((train, test))
    }
}

fn check_inputs(items: &[(&str, usize)], k: usize) -> Result<BTreeMap<usize, Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "k = {k}; need at least 2 folds"
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &(_, label)) in items.iter().enumerate() {
        by_class.entry(label).or_default().push(i);
    }
    if let Some((c, members)) = by_class.iter().find(|(_, m)| m.len() < k) {
        return Err(Error::InvalidArgument(format!(
            "class {c} has {} samples, fewer than k = {k}",
            members.len()
        )));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some((id, _)) = items.iter().find(|(id, _)| !seen.insert(*id)) {
        return Err(Error::data(*id, "duplicate sample id"));
    }
    Ok(by_class)
}

/// Class-stratified folds over `(id, label)` pairs.
///
/// Each class is shuffled and dealt round-robin; the dealing position
/// carries over from one class to the next, so fold sizes differ by at most
/// one overall as well as per class.
pub fn stratified_kfold_ids(items: &[(&str, usize)], k: usize, seed: u64) -> Result<FoldPlan> {
    let by_class = check_inputs(items, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    let mut next = 0usize;
    for members in by_class.values() {
        let mut members = members.clone();
        members.shuffle(&mut rng);
        for i in members {
            assignment.insert(items[i].0.to_string(), next % k);
            next += 1;
        }
    }
    Ok(FoldPlan {
        k,
        seed,
        assignment,
    })
}

pub fn stratified_kfold(samples: &[Sample], k: usize, seed: u64) -> Result<FoldPlan> {
    let items: Vec<(&str, usize)> = samples.iter().map(|s| (s.id.as_str(), s.label)).collect();
    stratified_kfold_ids(&items, k, seed)
}

/// Keeps every patient's samples in one fold. Patients are shuffled, then
/// placed largest-first into the fold with the fewest samples of their
/// majority class (ties: fewest samples overall, then lowest index). Sizes
/// are balanced greedily, not to within one.
pub fn patient_kfold(samples: &[Sample], k: usize, seed: u64) -> Result<FoldPlan> {
    let items: Vec<(&str, usize)> = samples.iter().map(|s| (s.id.as_str(), s.label)).collect();
    check_inputs(&items, k)?;
    let mut groups: BTreeMap<&str, Vec<&Sample>> = BTreeMap::new();
    for s in samples {
        groups.entry(&s.patient_id).or_default().push(s);
    }
    let mut groups: Vec<Vec<&Sample>> = groups.into_values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    groups.sort_by_key(|g| std::cmp::Reverse(g.len()));

    let n_classes = samples.iter().map(|s| s.label).max().unwrap_or(0) + 1;
    let mut per_class = vec![vec![0usize; n_classes]; k];
    let mut totals = vec![0usize; k];
    let mut assignment = BTreeMap::new();
    for g in groups {
        let mut counts = vec![0usize; n_classes];
        g.iter().for_each(|s| counts[s.label] += 1);
        let major = (0..n_classes)
            .max_by_key(|&c| (counts[c], std::cmp::Reverse(c)))
            .unwrap_or(0);
        let f = (0..k)
            .min_by_key(|&f| (per_class[f][major], totals[f], f))
            .expect("k ≥ 2");
        for s in g {
            per_class[f][s.label] += 1;
            totals[f] += 1;
            assignment.insert(s.id.clone(), f);
        }
    }
    Ok(FoldPlan {
        k,
        seed,
        assignment,
    })
}

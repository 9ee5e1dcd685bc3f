//! Class balancing and the stratified train/validation split.
//!
//! A sample and every augmentation of the same source file form a group;
//! groups are never divided between train and validation. Each class sends
//! `ceil(fraction * count)` samples to validation when whole groups allow
//! it. Otherwise the nearest achievable count is used, first searching
//! upwards and then downwards. With equal class sizes every class gets the
//! same validation count, so train stays exactly balanced.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::data::manifest::Sample;
use crate::error::{Error, Result};
use crate::loss::Label;
use crate::rng::Rng;

/// Validation count for `count` samples. Products within 1e-9 of an integer
/// are treated as that integer so `0.1 * 30` gives 3, not 4.
pub fn val_target(fraction: f64, count: usize) -> usize {
    let exact = fraction * count as f64;
    let rounded = exact.round();
    if (exact - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        exact.ceil() as usize
    }
}

fn by_label(samples: Vec<Sample>) -> BTreeMap<Label, Vec<Sample>> {
    let mut classes: BTreeMap<Label, Vec<Sample>> = BTreeMap::new();
    classes.insert(Label::Animal, Vec::new());
    classes.insert(Label::Litter, Vec::new());
    for s in samples {
        classes.entry(s.label).or_default().push(s);
    }
    classes
}

/// Uniformly subsamples every larger class down to the smallest class size,
/// then shuffles the result.
pub fn balance_classes(samples: Vec<Sample>, rng: &mut Rng) -> Result<Vec<Sample>> {
    let classes = by_label(samples);
    if let Some((label, _)) = classes.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::Dataset(format!("class {label} has no samples")));
    }
    let keep = classes.values().map(Vec::len).min().unwrap_or(0);
    let mut out = Vec::with_capacity(keep * classes.len());
    for (_, members) in classes {
        if members.len() == keep {
            out.extend(members);
            continue;
        }
        let mut idx: Vec<usize> = (0..members.len()).collect();
        rng.shuffle(&mut idx);
        let mut chosen = idx[..keep].to_vec();
        chosen.sort_unstable();
        let mut members: Vec<Option<Sample>> = members.into_iter().map(Some).collect();
        out.extend(chosen.into_iter().filter_map(|i| members[i].take()));
    }
    rng.shuffle(&mut out);
    Ok(out)
}

/// Groups of one class in first-appearance order: (source path, members).
fn groups_of(samples: Vec<Sample>) -> Vec<(PathBuf, Vec<Sample>)> {
    let mut groups: Vec<(PathBuf, Vec<Sample>)> = Vec::new();
    let mut index: BTreeMap<PathBuf, usize> = BTreeMap::new();
    for s in samples {
        match index.get(&s.path) {
            Some(&g) => groups[g].1.push(s),
            None => {
                index.insert(s.path.clone(), groups.len());
                groups.push((s.path.clone(), vec![s]));
            }
        }
    }
    groups
}

/// `table[i][s]`: some subset of the first `i` groups has exactly `s` samples.
fn subset_sums(sizes: &[usize]) -> Vec<Vec<bool>> {
    let total: usize = sizes.iter().sum();
    let mut table = vec![vec![false; total + 1]];
    table[0][0] = true;
    for (i, &size) in sizes.iter().enumerate() {
        let prev = &table[i];
        let mut row = prev.clone();
        for s in size..=total {
            row[s] |= prev[s - size];
        }
        table.push(row);
    }
    table
}

/// Indices of groups whose sizes add up to `target`; later groups are left
/// out whenever possible.
fn pick_groups(table: &[Vec<bool>], sizes: &[usize], mut target: usize) -> Vec<usize> {
    let mut picked = Vec::new();
    for i in (1..table.len()).rev() {
        if table[i - 1][target] {
            continue;
        }
        picked.push(i - 1);
        target -= sizes[i - 1];
    }
    debug_assert_eq!(target, 0);
    picked
}

/// Candidate validation counts in preference order: target, target+1, ...,
/// total-1, then target-1 down to 1.
fn candidates(target: usize, total: usize) -> impl Iterator<Item = usize> {
    let target = target.clamp(1, total.saturating_sub(1).max(1));
    (target..total).chain((1..target).rev())
}

/// Seeded shuffle followed by the grouped, stratified split described in
/// the module docs. Returns `(train, val)`.
pub fn split_train_val(
    samples: Vec<Sample>,
    fraction: f64,
    rng: &mut Rng,
) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut samples = samples;
    rng.shuffle(&mut samples);

    struct ClassPlan {
        label: Label,
        groups: Vec<(PathBuf, Vec<Sample>)>,
        sizes: Vec<usize>,
        table: Vec<Vec<bool>>,
        total: usize,
    }

    let plans: Vec<ClassPlan> = by_label(samples)
        .into_iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(label, members)| {
            let total = members.len();
            let groups = groups_of(members);
            let sizes: Vec<usize> = groups.iter().map(|g| g.1.len()).collect();
            let table = subset_sums(&sizes);
            ClassPlan {
                label,
                groups,
                sizes,
                table,
                total,
            }
        })
        .collect();
    if plans.is_empty() {
        return Err(Error::Dataset("nothing to split".into()));
    }

    let reachable = |p: &ClassPlan, v: usize| v >= 1 && v < p.total && p.table[p.sizes.len()][v];
    let balanced = plans.iter().all(|p| p.total == plans[0].total);
    let mut counts = Vec::with_capacity(plans.len());
    if balanced {
        let total = plans[0].total;
        let v = candidates(val_target(fraction, total), total)
            .find(|&v| plans.iter().all(|p| reachable(p, v)));
        let v = v.ok_or_else(|| {
            Error::Dataset(format!(
                "classes of {total} samples cannot be split into train and validation without separating augmentations from their source"
            ))
        })?;
        counts.resize(plans.len(), v);
    } else {
        for p in &plans {
            let v = candidates(val_target(fraction, p.total), p.total)
                .find(|&v| reachable(p, v))
                .ok_or_else(|| {
                    Error::Dataset(format!(
                        "class {} with {} samples is too small to stratify",
                        p.label, p.total
                    ))
                })?;
            counts.push(v);
        }
    }

    let mut train = Vec::new();
    let mut val = Vec::new();
    for (plan, v) in plans.into_iter().zip(counts) {
        let picked = pick_groups(&plan.table, &plan.sizes, v);
        for (i, (_, members)) in plan.groups.into_iter().enumerate() {
            if picked.contains(&i) {
                val.extend(members);
            } else {
                train.extend(members);
            }
        }
    }
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::manifest::Origin;
    use std::collections::HashSet;

    fn originals(label: Label, n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample::original(format!("{label}/{i}.png"), label))
            .collect()
    }

    fn count(v: &[Sample], label: Label) -> usize {
        v.iter().filter(|s| s.label == label).count()
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(val_target(0.1, 822), 83);
        assert_eq!(val_target(0.1, 30), 3);
        assert_eq!(val_target(0.1, 10), 1);
        assert_eq!(val_target(0.1, 1644), 165);
    }

    #[test]
    fn balance_trims_majority() {
        let mut s = originals(Label::Litter, 900);
        s.extend(originals(Label::Animal, 822));
        let b = balance_classes(s, &mut Rng::new(1)).unwrap();
        assert_eq!(count(&b, Label::Litter), 822);
        assert_eq!(count(&b, Label::Animal), 822);
    }

    #[test]
    fn balance_keeps_balanced_multiset() {
        let mut s = originals(Label::Litter, 5);
        s.extend(originals(Label::Animal, 5));
        let b = balance_classes(s.clone(), &mut Rng::new(2)).unwrap();
        let a: HashSet<_> = s.into_iter().collect();
        let c: HashSet<_> = b.into_iter().collect();
        assert_eq!(a, c);
    }

    #[test]
    fn balance_drop_set_is_seeded() {
        let mut s = originals(Label::Litter, 10);
        s.extend(originals(Label::Animal, 3));
        let a = balance_classes(s.clone(), &mut Rng::new(5)).unwrap();
        let b = balance_classes(s.clone(), &mut Rng::new(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(count(&a, Label::Litter), 3);
        assert_eq!(count(&a, Label::Animal), 3);
        assert!(balance_classes(originals(Label::Litter, 4), &mut Rng::new(1)).is_err());
    }

    #[test]
    fn split_full_size_corpus() {
        let mut s = originals(Label::Litter, 822);
        s.extend(originals(Label::Animal, 822));
        let (train, val) = split_train_val(s, 0.1, &mut Rng::new(3)).unwrap();
        assert_eq!(val.len(), 166);
        assert_eq!(count(&val, Label::Animal), 83);
        assert_eq!(train.len(), 1478);
    }

    #[test]
    fn split_small_classes() {
        let mut s = originals(Label::Litter, 10);
        s.extend(originals(Label::Animal, 10));
        let (train, val) = split_train_val(s.clone(), 0.1, &mut Rng::new(3)).unwrap();
        assert_eq!(count(&val, Label::Litter), 1);
        assert_eq!(count(&val, Label::Animal), 1);
        let mut all: Vec<_> = train.into_iter().chain(val).collect();
        let mut orig = s;
        all.sort_by(|a, b| a.path.cmp(&b.path));
        orig.sort_by(|a, b| a.path.cmp(&b.path));
        assert_eq!(all, orig);
    }

    #[test]
    fn groups_stay_together() {
        let mut s = Vec::new();
        for label in [Label::Animal, Label::Litter] {
            for i in 0..6 {
                let path = PathBuf::from(format!("{label}/{i}.png"));
                s.push(Sample::original(path.clone(), label));
                for k in 1..=2 {
                    s.push(Sample { path: path.clone(), label, origin: Origin::Rotate(k) });
                }
            }
        }
        let (train, val) = split_train_val(s, 0.1, &mut Rng::new(8)).unwrap();
        let train_paths: HashSet<_> = train.iter().map(|s| &s.path).collect();
        assert!(val.iter().all(|s| !train_paths.contains(&s.path)));
        assert_eq!(count(&train, Label::Animal), count(&train, Label::Litter));
        // target ceil(1.8)=2 is not a multiple of 3, so 3 is used
        assert_eq!(count(&val, Label::Animal), 3);
    }

    #[test]
    fn split_errors() {
        let s = originals(Label::Animal, 1);
        assert!(split_train_val(s.clone(), 0.1, &mut Rng::new(1)).is_err());
        assert!(split_train_val(originals(Label::Animal, 5), 0.0, &mut Rng::new(1)).is_err());
        assert!(split_train_val(originals(Label::Animal, 5), 1.0, &mut Rng::new(1)).is_err());
    }
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal_io::{SegmentSet, Split};

pub const DEFAULT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

/// Partition sizes by largest remainder; ties go to the earlier partition.
pub fn largest_remainder(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let total: f64 = ratios.iter().sum();
    let raw = ratios.map(|r| n as f64 * r / total);
    let mut counts = raw.map(|r| r.floor() as usize);
    let mut left = n - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Within-subject split: each video class is shuffled (seeded) and cut by
/// `ratios` into train/val/test.
pub fn split_within(set: &SegmentSet, ratios: [f64; 3], seed: u64) -> Result<SegmentSet> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || ratios.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Config(format!("invalid split ratios {ratios:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = set.clone();
    for class in 0..set.num_video_classes() {
        let mut members: Vec<usize> = (0..set.len()).filter(|&i| set.video_label[i] == class).collect();
        if members.len() < 3 {
            return Err(Error::Split(format!(
                "video class {class} has {} segments; at least 3 are needed",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let [n_train, n_val, _] = largest_remainder(members.len(), ratios);
        for (pos, &i) in members.iter().enumerate() {
            out.split[i] = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}

/// Held-out-subject split: every segment of the two test subjects is test,
/// all others train, validation empty.
pub fn split_leave_two(set: &SegmentSet, test_subjects: (u32, u32)) -> Result<SegmentSet> {
    let (a, b) = test_subjects;
    if a == b {
        return Err(Error::Split(format!("test subjects must differ, got {a} twice")));
    }
    for s in [a, b] {
        if !set.subject_id.contains(&s) {
            return Err(Error::Split(format!("unknown subject id {s}")));
        }
    }
    let mut out = set.clone();
    for (tag, &s) in out.split.iter_mut().zip(&set.subject_id) {
        *tag = if s == a || s == b { Split::Test } else { Split::Train };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::SEGMENT_SAMPLES;

    fn set(per_class: usize, classes: usize, subjects: u32) -> SegmentSet {
        let mut video = Vec::new();
        let mut subj = Vec::new();
        for s in 1..=subjects {
            for k in 0..classes {
                for _ in 0..per_class {
                    video.push(k);
                    subj.push(s);
                }
            }
        }
        let n = video.len();
        SegmentSet::new(
            1,
            (0..n * SEGMENT_SAMPLES).map(|i| (i % 97) as f64).collect(),
            video,
            vec![-1; n],
            subj,
            vec![Split::Train; n],
        )
        .unwrap()
    }

    #[test]
    fn ten_segments_split_eight_one_one() {
        assert_eq!(largest_remainder(10, DEFAULT_RATIOS), [8, 1, 1]);
        let s = split_within(&set(10, 1, 1), DEFAULT_RATIOS, 3).unwrap();
        assert_eq!(s.split_counts(), [8, 1, 1]);
    }

    #[test]
    fn largest_remainder_sums() {
        for n in 0..50 {
            assert_eq!(largest_remainder(n, DEFAULT_RATIOS).iter().sum::<usize>(), n);
        }
        assert_eq!(largest_remainder(7, DEFAULT_RATIOS), [5, 1, 1]);
    }

    #[test]
    fn within_split_is_seeded_and_partitions() {
        let base = set(7, 3, 2);
        let a = split_within(&base, DEFAULT_RATIOS, 9).unwrap();
        let b = split_within(&base, DEFAULT_RATIOS, 9).unwrap();
        assert_eq!(a.split, b.split);
        let c = split_within(&base, DEFAULT_RATIOS, 10).unwrap();
        assert_ne!(a.split, c.split);
        let mut all: Vec<usize> = [Split::Train, Split::Val, Split::Test]
            .iter()
            .flat_map(|&s| a.indices_in(s))
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..base.len()).collect::<Vec<_>>());
    }

    #[test]
    fn small_class_rejected() {
        let err = split_within(&set(2, 2, 1), DEFAULT_RATIOS, 0).unwrap_err();
        assert!(matches!(err, Error::Split(ref m) if m.contains("class 0")));
    }

    #[test]
    fn leave_two_subjects() {
        let base = set(2, 2, 15);
        let s = split_leave_two(&base, (14, 15)).unwrap();
        let test_subjects: std::collections::BTreeSet<u32> =
            s.indices_in(Split::Test).iter().map(|&i| s.subject_id[i]).collect();
        assert_eq!(test_subjects.into_iter().collect::<Vec<_>>(), vec![14, 15]);
        assert!(s
            .indices_in(Split::Train)
            .iter()
            .all(|&i| s.subject_id[i] != 14 && s.subject_id[i] != 15));
        let [tr, va, te] = s.split_counts();
        assert_eq!((tr + te, va), (base.len(), 0));
        assert!(matches!(split_leave_two(&base, (14, 16)), Err(Error::Split(_))));
    }
}

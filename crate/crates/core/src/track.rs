use chrono::NaiveDateTime;

use crate::geodesy::GeodeticPoint;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackSample {
    pub epoch: u64,
    pub time: Option<NaiveDateTime>,
    pub pos: GeodeticPoint,
}

/// Ordered sequence of timestamped positions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Track {
    pub samples: Vec<TrackSample>,
}

impl Track {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: impl IntoIterator<Item = GeodeticPoint>) -> Self {
        points
            .into_iter()
            .enumerate()
            .map(|(i, pos)| TrackSample {
                epoch: i as u64,
                time: None,
                pos,
            })
            .collect()
    }

    pub fn push(&mut self, sample: TrackSample) {
        self.samples.push(sample);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = &GeodeticPoint> + '_ {
        self.samples.iter().map(|s| &s.pos)
    }

    /// Samples from index `start` onward, epochs preserved.
    pub fn tail(&self, start: usize) -> Track {
        Track {
            samples: self.samples.get(start..).unwrap_or_default().to_vec(),
        }
    }
}

/// Restrict each track to the epochs present in all of them, in ascending
/// epoch order. Duplicate epochs keep their first sample.
pub fn align_by_epoch(tracks: &[&Track]) -> Vec<Track> {
    use std::collections::{BTreeMap, BTreeSet};
    let maps: Vec<BTreeMap<u64, &TrackSample>> = tracks
        .iter()
        .map(|t| {
            let mut m = BTreeMap::new();
            for s in &t.samples {
                m.entry(s.epoch).or_insert(s);
            }
            m
        })
        .collect();
    let common: BTreeSet<u64> = match maps.split_first() {
        Some((first, rest)) => first
            .keys()
            .filter(|k| rest.iter().all(|m| m.contains_key(k)))
            .copied()
            .collect(),
        None => BTreeSet::new(),
    };
    maps.iter()
        .map(|m| common.iter().map(|k| *m[k]).collect())
        .collect()
}

impl FromIterator<TrackSample> for Track {
    fn from_iter<I: IntoIterator<Item = TrackSample>>(iter: I) -> Self {
        Track {
            samples: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(epochs: &[u64]) -> Track {
        epochs
            .iter()
            .map(|&e| TrackSample {
                epoch: e,
                time: None,
                pos: GeodeticPoint::new(e as f64, 0.0, 0.0),
            })
            .collect()
    }

    #[test]
    fn align_keeps_common_epochs() {
        let a = track(&[0, 1, 2, 3, 5]);
        let b = track(&[5, 3, 1, 4]);
        let out = align_by_epoch(&[&a, &b]);
        let epochs = |t: &Track| t.samples.iter().map(|s| s.epoch).collect::<Vec<_>>();
        assert_eq!(epochs(&out[0]), vec![1, 3, 5]);
        assert_eq!(epochs(&out[1]), vec![1, 3, 5]);
        assert_eq!(out[1].samples[1].pos.lat_deg, 3.0);
        assert!(align_by_epoch(&[]).is_empty());
    }
}

//! Phase segments and fixed-stride sequence enumeration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::SurgicalPhase;

/// Inclusive frame interval of one phase within a source video.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSegment {
    pub video_id: String,
    pub phase: SurgicalPhase,
    pub first_frame: usize,
    pub last_frame: usize,
}

impl PhaseSegment {
    pub fn new(video_id: impl Into<String>, phase: SurgicalPhase, first_frame: usize, last_frame: usize) -> Result<Self> {
        if first_frame > last_frame {
            return Err(Error::Input(format!(
                "segment first frame {first_frame} is after last frame {last_frame}"
            )));
        }
        Ok(PhaseSegment {
            video_id: video_id.into(),
            phase,
            first_frame,
            last_frame,
        })
    }

    pub fn len(&self) -> usize {
        self.last_frame + 1 - self.first_frame
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: usize) -> bool {
        (self.first_frame..=self.last_frame).contains(&frame)
    }
}

/// Number of source frames covered by a `length`-frame sequence at `stride`.
pub fn span(length: usize, stride: usize) -> usize {
    (length - 1) * stride + 1
}

/// Start frames of every `length`-frame, `stride`-spaced window inside `segment`.
pub fn enumerate_sequences(segment: &PhaseSegment, length: usize, stride: usize) -> Result<Vec<usize>> {
    if length == 0 || stride == 0 {
        return Err(Error::InvalidConfig(format!(
            "sequence length {length} and stride {stride} must be positive"
        )));
    }
    let need = span(length, stride);
    if need > segment.len() {
        return Ok(Vec::new());
    }
    Ok((segment.first_frame..=segment.last_frame + 1 - need).collect())
}

/// Checks that segments belonging to the same video do not overlap.
pub fn check_disjoint(segments: &[PhaseSegment]) -> Result<()> {
    let mut sorted: Vec<&PhaseSegment> = segments.iter().collect();
    sorted.sort_by(|a, b| (&a.video_id, a.first_frame).cmp(&(&b.video_id, b.first_frame)));
    for pair in sorted.windows(2) {
        if pair[0].video_id == pair[1].video_id && pair[1].first_frame <= pair[0].last_frame {
            return Err(Error::Input(format!(
                "overlapping segments in video {}: frames {}..={} and {}..={}",
                pair[0].video_id, pair[0].first_frame, pair[0].last_frame, pair[1].first_frame, pair[1].last_frame
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(first: usize, len: usize) -> PhaseSegment {
        PhaseSegment::new("v", SurgicalPhase::Preparation, first, first + len - 1).unwrap()
    }

    #[test]
    fn paper_scale_counts() {
        assert_eq!(enumerate_sequences(&seg(0, 97), 49, 2).unwrap(), vec![0]);
        assert_eq!(enumerate_sequences(&seg(10, 100), 49, 2).unwrap(), vec![10, 11, 12, 13]);
        assert!(enumerate_sequences(&seg(0, 96), 49, 2).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_segments() {
        assert!(PhaseSegment::new("v", SurgicalPhase::Preparation, 5, 4).is_err());
        assert!(enumerate_sequences(&seg(0, 10), 0, 2).is_err());
        let a = seg(0, 10);
        let b = seg(9, 5);
        assert!(check_disjoint(&[a.clone(), b]).is_err());
        assert!(check_disjoint(&[a, seg(10, 5)]).is_ok());
    }

    proptest! {
        #[test]
        fn count_formula_matches_brute_force(first in 0usize..50, len in 1usize..150, length in 1usize..30, stride in 1usize..4) {
            let s = seg(first, len);
            let starts = enumerate_sequences(&s, length, stride).unwrap();
            let brute: Vec<usize> = (first..first + len)
                .filter(|&st| (0..length).all(|i| s.contains(st + i * stride)))
                .collect();
            prop_assert_eq!(&starts, &brute);
            let expected = len as i64 - ((length - 1) * stride) as i64;
            prop_assert_eq!(starts.len() as i64, expected.max(0));
        }
    }
}

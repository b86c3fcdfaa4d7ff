use crate::error::{Error, Result};
use crate::model::{TokenId, PAD_TOKEN};

/// Left-padded batch: every row has `padded_len - sample_lengths[j]` leading pads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub token_ids: Vec<Vec<TokenId>>,
    /// `true` marks a pad slot.
    pub pad_mask: Vec<Vec<bool>>,
    pub sample_lengths: Vec<usize>,
    pub padded_len: usize,
}

pub fn pad_batch(samples: &[Vec<TokenId>]) -> Result<Batch> {
    if samples.is_empty() {
        return Err(Error::input("batch needs at least one sample"));
    }
    if let Some(j) = samples.iter().position(Vec::is_empty) {
        return Err(Error::input(format!("sample {j} is empty")));
    }
    let sample_lengths: Vec<usize> = samples.iter().map(Vec::len).collect();
    let padded_len = *sample_lengths.iter().max().expect("non-empty");
    let mut token_ids = Vec::with_capacity(samples.len());
    let mut pad_mask = Vec::with_capacity(samples.len());
    for s in samples {
        let pads = padded_len - s.len();
        let mut row = vec![PAD_TOKEN; pads];
        row.extend_from_slice(s);
        let mut mask = vec![true; pads];
        mask.resize(padded_len, false);
        token_ids.push(row);
        pad_mask.push(mask);
    }
    Ok(Batch {
        token_ids,
        pad_mask,
        sample_lengths,
        padded_len,
    })
}

impl Batch {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn pad_count(&self, sample: usize) -> usize {
        self.padded_len - self.sample_lengths[sample]
    }

    /// Tokens and mask of the slots `[t0, t1)` for every sample.
    pub fn block(&self, t0: usize, t1: usize) -> (Vec<Vec<TokenId>>, Vec<Vec<bool>>) {
        (
            self.token_ids.iter().map(|r| r[t0..t1].to_vec()).collect(),
            self.pad_mask.iter().map(|r| r[t0..t1].to_vec()).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shorter_rows_get_leading_pads() {
        let b = pad_batch(&[vec![5, 6, 7], vec![1, 2, 3, 4, 5]]).unwrap();
        assert_eq!(b.padded_len, 5);
        assert_eq!(b.token_ids[0], vec![PAD_TOKEN, PAD_TOKEN, 5, 6, 7]);
        assert_eq!(b.pad_mask[0], vec![true, true, false, false, false]);
        assert_eq!(b.pad_count(0), 2);
        assert_eq!(b.pad_count(1), 0);
    }

    #[test]
    fn equal_lengths_need_no_pads() {
        let b = pad_batch(&[vec![3, 4], vec![5, 6]]).unwrap();
        assert!(b.pad_mask.iter().flatten().all(|m| !m));
        let single = pad_batch(&[vec![9, 9, 9]]).unwrap();
        assert_eq!(single.token_ids, vec![vec![9, 9, 9]]);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(matches!(pad_batch(&[]), Err(Error::Input(_))));
        assert!(matches!(pad_batch(&[vec![1], vec![]]), Err(Error::Input(_))));
    }
}

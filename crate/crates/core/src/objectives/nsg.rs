use super::{ExampleMeta, Objective, ObjectiveConfig, ObjectiveError, PretrainExample, Rng};

/// Next segment generation with the split point drawn uniformly from
/// `[1, len - 1]`: the input is the prefix (its last `max_input_len` tokens),
/// the target is the next `target_len` tokens.
pub fn next_segment_split(
    id: &str,
    seq: &[u32],
    target_len: usize,
    cfg: &ObjectiveConfig,
    rng: &mut Rng,
) -> Result<PretrainExample, ObjectiveError> {
    if seq.len() < 2 {
        return Err(ObjectiveError::TooShort {
            len: seq.len(),
            required: 2,
        });
    }
    let split = rng.uniform_inclusive(1, seq.len() - 1);
    Ok(split_at(id, seq, split, target_len, cfg))
}

/// NSG pair for a fixed split point `1 <= split < seq.len()`.
pub(super) fn split_at(
    id: &str,
    seq: &[u32],
    split: usize,
    target_len: usize,
    cfg: &ObjectiveConfig,
) -> PretrainExample {
    assert!(split >= 1 && split < seq.len());
    let input_start = split.saturating_sub(cfg.max_input_len);
    let target_end = (split + target_len).min(seq.len());
    PretrainExample {
        id: id.to_string(),
        objective: Objective::Nsg,
        input: seq[input_start..split].to_vec().into(),
        target: seq[split..target_end].to_vec().into(),
        meta: ExampleMeta::Split { split },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_split_example() {
        let seq: Vec<u32> = (1..=10).collect();
        let ex = split_at("d", &seq, 6, 4, &ObjectiveConfig::default());
        assert_eq!(ex.input.ids(), &[1, 2, 3, 4, 5, 6]);
        assert_eq!(ex.target.ids(), &[7, 8, 9, 10]);
    }

    #[test]
    fn piece_predicts_next_256() {
        let seq: Vec<u32> = (0..768).collect();
        let ex = split_at("d", &seq, 512, 256, &ObjectiveConfig::default());
        assert_eq!(ex.input.len(), 512);
        assert_eq!(ex.target.len(), 256);
    }

    #[test]
    fn input_and_target_are_contiguous() {
        let seq: Vec<u32> = (100..1500).collect();
        let cfg = ObjectiveConfig::default();
        let mut rng = Rng::new(9);
        for _ in 0..200 {
            let ex = next_segment_split("d", &seq, 256, &cfg, &mut rng).unwrap();
            let ExampleMeta::Split { split } = ex.meta else { panic!() };
            assert!((1..seq.len()).contains(&split));
            assert!(ex.input.len() <= 512 && !ex.target.is_empty());
            let joined: Vec<u32> = ex.input.iter().chain(ex.target.iter()).copied().collect();
            let start = split - ex.input.len();
            assert_eq!(&seq[start..start + joined.len()], joined.as_slice());
        }
    }

    #[test]
    fn too_short() {
        let cfg = ObjectiveConfig::default();
        assert_eq!(
            next_segment_split("d", &[5], 256, &cfg, &mut Rng::new(0)),
            Err(ObjectiveError::TooShort { len: 1, required: 2 })
        );
    }
}

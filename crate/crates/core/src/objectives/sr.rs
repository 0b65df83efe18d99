use super::{ExampleMeta, Objective, ObjectiveConfig, ObjectiveError, PretrainExample, Rng};
use crate::text::truncate;

/// Sentence reordering: the input is the piece with its sentences shuffled
/// by a uniformly random permutation (the identity included), the target is
/// the piece in its original order.
pub fn sentence_reorder<S: AsRef<[u32]>>(
    id: &str,
    sentences: &[S],
    cfg: &ObjectiveConfig,
    rng: &mut Rng,
) -> Result<PretrainExample, ObjectiveError> {
    let total: usize = sentences.iter().map(|s| s.as_ref().len()).sum();
    if sentences.is_empty() {
        return Err(ObjectiveError::EmptyDocument);
    }
    if total == 0 {
        return Err(ObjectiveError::TooShort { len: 0, required: 1 });
    }
    let perm = rng.permutation(sentences.len());
    let shuffled: Vec<u32> = perm
        .iter()
        .flat_map(|&i| sentences[i].as_ref().iter().copied())
        .collect();
    let original: Vec<u32> = sentences
        .iter()
        .flat_map(|s| s.as_ref().iter().copied())
        .collect();
    Ok(PretrainExample {
        id: id.to_string(),
        objective: Objective::Sr,
        input: truncate(&shuffled, cfg.max_input_len),
        target: truncate(&original, cfg.max_target_len),
        meta: ExampleMeta::Reorder {
            order: perm.iter().map(|i| i + 1).collect(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentences() -> Vec<Vec<u32>> {
        vec![vec![10, 11], vec![20, 21, 22], vec![30]]
    }

    #[test]
    fn input_follows_drawn_order() {
        let cfg = ObjectiveConfig::default();
        for seed in 0..20 {
            let ex = sentence_reorder("d", &sentences(), &cfg, &mut Rng::new(seed)).unwrap();
            let ExampleMeta::Reorder { order } = &ex.meta else { panic!() };
            let expected: Vec<u32> = order
                .iter()
                .flat_map(|&a| sentences()[a - 1].clone())
                .collect();
            assert_eq!(ex.input.ids(), expected.as_slice());
            assert_eq!(ex.target.ids(), &[10, 11, 20, 21, 22, 30]);
        }
    }

    #[test]
    fn order_three_one_two() {
        // Find a seed that draws (3, 1, 2) and check the figure's example.
        let cfg = ObjectiveConfig::default();
        let ex = (0..200)
            .map(|seed| sentence_reorder("d", &sentences(), &cfg, &mut Rng::new(seed)).unwrap())
            .find(|ex| ex.meta == ExampleMeta::Reorder { order: vec![3, 1, 2] })
            .expect("some seed draws (3,1,2)");
        assert_eq!(ex.input.ids(), &[30, 10, 11, 20, 21, 22]);
    }

    #[test]
    fn single_sentence_is_identity() {
        let cfg = ObjectiveConfig::default();
        let ex = sentence_reorder("d", &[vec![1u32, 2, 3]], &cfg, &mut Rng::new(0)).unwrap();
        assert_eq!(ex.input, ex.target);
        assert_eq!(ex.meta, ExampleMeta::Reorder { order: vec![1] });
    }

    #[test]
    fn empty_document_is_rejected() {
        let cfg = ObjectiveConfig::default();
        let empty: Vec<Vec<u32>> = Vec::new();
        assert_eq!(
            sentence_reorder("d", &empty, &cfg, &mut Rng::new(0)),
            Err(ObjectiveError::EmptyDocument)
        );
    }

    #[test]
    fn truncates_after_shuffling() {
        let cfg = ObjectiveConfig {
            max_input_len: 4,
            max_target_len: 2,
            ..Default::default()
        };
        let ex = sentence_reorder("d", &sentences(), &cfg, &mut Rng::new(5)).unwrap();
        assert_eq!(ex.input.len(), 4);
        assert_eq!(ex.target.ids(), &[10, 11]);
    }
}

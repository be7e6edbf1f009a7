mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn split_matrix_back_substitutes(input in split_input()) {
        check_split(&input)?;
    }

    #[test]
    fn birkhoff_back_substitutes(input in birkhoff_input()) {
        check_birkhoff(&input)?;
    }

    #[test]
    fn derivatives_obey_leibniz(input in leibniz_input()) {
        check_leibniz(&input)?;
    }

    #[test]
    fn random_cubic_deformations_patch(terms in cubic_input()) {
        check_cubic_patching(&terms)?;
    }

    #[test]
    fn torsion_free_families_satisfy_first_bianchi(entries in symmetric_gamma_input()) {
        check_bianchi(&entries)?;
    }

    #[test]
    fn free_parameter_counts_match_h0(input in h0_input()) {
        check_h0_counts(&input)?;
    }
}

//! The named designs used in the illustrations: d1, d2, d* for p = t ∈ {3, 4}
//! and the gene-study design d0.

use crate::designs::Design;

fn lit(t: usize, rows: &[&[usize]]) -> Design {
    Design::from_labels(t, rows).expect("fixture literal is valid")
}

/// Uniform design, p = t = 3, n = 6.
pub fn d1_t3() -> Design {
    lit(3, &[&[1, 2, 3, 1, 2, 3], &[2, 3, 1, 2, 3, 1], &[3, 1, 2, 3, 1, 2]])
}

/// Orthogonal array OA_I(6, 3, 3, 2).
pub fn dstar_t3() -> Design {
    lit(3, &[&[1, 2, 3, 1, 2, 3], &[2, 3, 1, 3, 1, 2], &[3, 1, 2, 2, 3, 1]])
}

/// Uniform design, p = t = 4, n = 12.
pub fn d1_t4() -> Design {
    lit(
        4,
        &[
            &[1, 4, 3, 2, 1, 4, 3, 2, 1, 4, 3, 2],
            &[2, 1, 4, 3, 2, 1, 4, 3, 2, 1, 4, 3],
            &[3, 2, 1, 4, 3, 2, 1, 4, 3, 2, 1, 4],
            &[4, 3, 2, 1, 4, 3, 2, 1, 4, 3, 2, 1],
        ],
    )
}

/// Balanced uniform (Williams) design, p = t = 4, n = 12.
pub fn d2_t4() -> Design {
    lit(
        4,
        &[
            &[1, 2, 3, 4, 1, 2, 3, 4, 1, 2, 3, 4],
            &[4, 1, 2, 3, 4, 1, 2, 3, 4, 1, 2, 3],
            &[2, 3, 4, 1, 2, 3, 4, 1, 2, 3, 4, 1],
            &[3, 4, 1, 2, 3, 4, 1, 2, 3, 4, 1, 2],
        ],
    )
}

/// Orthogonal array OA_I(12, 4, 4, 2).
pub fn dstar_t4() -> Design {
    lit(
        4,
        &[
            &[1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4],
            &[2, 3, 4, 1, 3, 4, 1, 2, 4, 1, 2, 3],
            &[3, 4, 2, 4, 1, 3, 2, 4, 1, 3, 1, 2],
            &[4, 2, 3, 3, 4, 1, 4, 1, 2, 2, 3, 1],
        ],
    )
}

/// Gene-study design: 18 subjects, six each on ABC, CAB and BCA.
pub fn d0_gene() -> Design {
    let seqs = [[0, 1, 2], [2, 0, 1], [1, 2, 0]];
    let cols: Vec<Vec<usize>> = seqs.iter().flat_map(|s| std::iter::repeat_n(s.to_vec(), 6)).collect();
    Design::from_columns(3, &cols).expect("valid")
}

/// The n = 18 orthogonal array used as the gene-study reference.
pub fn dstar_gene() -> Design {
    dstar_t3().replicate(3).expect("valid")
}

/// Named fixture sets: `p3`, `p4`, `gene`.
pub fn fixture_set(name: &str) -> Option<Vec<(&'static str, Design)>> {
    match name {
        "p3" => Some(vec![("d1", d1_t3()), ("dstar", dstar_t3())]),
        "p4" => Some(vec![("d1", d1_t4()), ("d2", d2_t4()), ("dstar", dstar_t4())]),
        "gene" => Some(vec![("d0", d0_gene()), ("dstar", dstar_gene())]),
        _ => None,
    }
}

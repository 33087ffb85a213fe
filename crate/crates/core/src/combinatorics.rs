//! Lexicographic enumeration helpers shared by the objectives and metrics.

/// All permutations of `0..n` in lexicographic order.
pub(crate) fn lex_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..n).collect();
    let mut out = vec![cur.clone()];
    while next_permutation(&mut cur) {
        out.push(cur.clone());
    }
    out
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// All vectors in `{0..base}^len` in lexicographic order.
pub(crate) fn all_assignments(len: usize, base: usize) -> Vec<Vec<usize>> {
    let total = base.pow(len as u32);
    (0..total)
        .map(|mut code| {
            let mut v = vec![0; len];
            for slot in v.iter_mut().rev() {
                *slot = code % base;
                code /= base;
            }
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutations_are_lexicographic() {
        let p = lex_permutations(3);
        assert_eq!(
            p,
            vec![
                vec![0, 1, 2],
                vec![0, 2, 1],
                vec![1, 0, 2],
                vec![1, 2, 0],
                vec![2, 0, 1],
                vec![2, 1, 0]
            ]
        );
        assert_eq!(lex_permutations(5).len(), 120);
        assert_eq!(lex_permutations(1), vec![vec![0]]);
    }

    #[test]
    fn assignment_order() {
        let a = all_assignments(4, 2);
        assert_eq!(a.len(), 16);
        assert_eq!(a[0], vec![0, 0, 0, 0]);
        assert_eq!(a[3], vec![0, 0, 1, 1]);
        assert_eq!(a[15], vec![1, 1, 1, 1]);
    }
}

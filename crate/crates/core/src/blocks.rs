//! Splitting a system into groups of variables that never share a monomial.
//!
//! The sum of a system over a product box factors over these groups, which is
//! what makes exponential sums, local sums and value histograms cheap for
//! diagonal and block-diagonal forms.

use crate::forms::{Form, FormSystem, IntegerForm};

/// One group of variables with every form restricted to it.
#[derive(Clone, Debug)]
pub struct Block {
    /// Global indices of the variables in this block, increasing.
    pub vars: Vec<usize>,
    /// Each form's monomials in these variables, re-indexed locally.
    pub forms: Vec<IntegerForm>,
}

/// Connected components of the graph joining variables that occur in a common monomial.
pub fn variable_groups(system: &FormSystem) -> Vec<Vec<usize>> {
    let n = system.vars();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    for f in system.forms() {
        for e in f.terms().keys() {
            let vars: Vec<usize> = (0..n).filter(|&v| e[v] > 0).collect();
            for w in vars.windows(2) {
                let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; n];
    for v in 0..n {
        let r = find(&mut parent, v);
        if root_slot[r] == usize::MAX {
            root_slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_slot[r]].push(v);
    }
    groups
}

/// The blocks of a system together with its constant terms.
pub fn split_blocks(system: &FormSystem) -> (Vec<Block>, Vec<i64>) {
    let groups = variable_groups(system);
    let constants = system
        .forms()
        .iter()
        .map(|f| {
            f.coefficient(&vec![0; system.vars()])
                .copied()
                .unwrap_or(0)
        })
        .collect();
    let blocks = groups
        .into_iter()
        .map(|vars| {
            let forms = system
                .forms()
                .iter()
                .map(|f| restrict(f, &vars))
                .collect();
            Block { vars, forms }
        })
        .collect();
    (blocks, constants)
}

fn restrict(f: &IntegerForm, vars: &[usize]) -> IntegerForm {
    let terms = f
        .terms()
        .iter()
        .filter(|(e, _)| e.iter().any(|&p| p > 0) && vars.iter().any(|&v| e[v] > 0))
        .map(|(e, &c)| (vars.iter().map(|&v| e[v]).collect::<Vec<u32>>(), c));
    Form::new(vars.len(), f.degree(), terms).expect("restriction keeps shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::parse_system;

    #[test]
    fn diagonal_form_splits_into_singletons() {
        let sys = parse_system(r#"{"forms": ["x1^2 + x2^2 + x3^2 + x4^2 - x5^2"]}"#).unwrap();
        let groups = variable_groups(&sys);
        assert_eq!(groups, vec![vec![0], vec![1], vec![2], vec![3], vec![4]]);
    }

    #[test]
    fn shared_monomials_merge_groups() {
        let sys = parse_system(r#"{"forms": ["x1*x3 + x2^2 + 4", "x4*x5 - x3^2"]}"#).unwrap();
        let (blocks, constants) = split_blocks(&sys);
        let vars: Vec<_> = blocks.iter().map(|b| b.vars.clone()).collect();
        assert_eq!(vars, vec![vec![0, 2], vec![1], vec![3, 4]]);
        assert_eq!(constants, vec![4, 0]);
        assert_eq!(blocks[0].forms[0].coefficient(&[1, 1]), Some(&1));
        assert_eq!(blocks[0].forms[1].coefficient(&[0, 2]), Some(&-1));
        assert!(blocks[2].forms[0].is_zero());
    }

    #[test]
    fn block_values_sum_to_form_value() {
        let sys = parse_system(r#"{"forms": ["x1*x3 + x2^2 - 2*x2 + 4", "x4*x5 - x3^2 + x1"]}"#).unwrap();
        let (blocks, constants) = split_blocks(&sys);
        let x = [2i64, -3, 5, 1, -7];
        let full = sys.evaluate(&x).unwrap();
        for i in 0..2 {
            let mut s = constants[i] as i128;
            for b in &blocks {
                let local: Vec<i64> = b.vars.iter().map(|&v| x[v]).collect();
                s += b.forms[i].evaluate(&local).unwrap();
            }
            assert_eq!(s, full[i]);
        }
    }
}

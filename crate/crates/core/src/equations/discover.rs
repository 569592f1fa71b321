//! Small-formula search: finds minimal disjunctive-normal-form right-hand
//! sides `target <-> t1 | t2 | ...` that hold in every reasonable
//! environment.

use std::collections::BTreeMap;

use super::{eval_atom, Atom, Condition, EquationError};
use crate::checker::{reasonable_envs, Checker};
use crate::formula::Expr;
use crate::xdi::{Environment, XdiMachine};

/// Values of every atom of a machine, one bit per reasonable environment.
#[derive(Debug, Clone)]
pub struct TruthTable {
    pub envs: Vec<Environment>,
    pub atoms: BTreeMap<Atom, u64>,
}

impl TruthTable {
    pub fn full_mask(&self) -> u64 {
        if self.envs.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.envs.len()) - 1
        }
    }
}

pub fn truth_table(m: &XdiMachine) -> Result<TruthTable, EquationError> {
    let envs = reasonable_envs(m);
    if envs.len() > 64 {
        return Err(EquationError::TooManyEnvironments(envs.len()));
    }
    let checker = Checker::new(m);
    let mut atoms = BTreeMap::new();
    for h in m.handshakes() {
        for atom in [Atom::Blocked(h.to_string()), Atom::Idle(h.to_string())] {
            let mut mask = 0u64;
            for (i, env) in envs.iter().enumerate() {
                if eval_atom(&checker, &atom, env)? {
                    mask |= 1 << i;
                }
            }
            atoms.insert(atom, mask);
        }
    }
    Ok(TruthTable { envs, atoms })
}

#[derive(Debug, Clone)]
struct Term {
    literals: Vec<(Atom, bool)>,
    mask: u64,
}

impl Term {
    fn to_expr(&self) -> Condition {
        Expr::all(self.literals.iter().map(|(a, positive)| {
            let e = Expr::Atom(a.clone());
            if *positive {
                e
            } else {
                Expr::not(e)
            }
        }))
    }
}

fn combinations(n: usize, k: usize, f: &mut impl FnMut(&[usize]) -> bool) {
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return;
    }
    loop {
        if !f(&idx) {
            return;
        }
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Returns every minimal condition `target <-> DNF` over the other atoms of
/// `m`, using at most `max_terms` terms of at most `max_literals` literals.
/// Results are ordered by term count, then literal count; at most `limit`
/// are returned.
pub fn discover(
    m: &XdiMachine,
    target: &Atom,
    max_terms: usize,
    max_literals: usize,
    limit: usize,
) -> Result<Vec<Condition>, EquationError> {
    if !m.has_handshake(target.handshake()) {
        return Err(EquationError::UnknownHandshake(
            target.handshake().to_string(),
        ));
    }
    let table = truth_table(m)?;
    let full = table.full_mask();
    let goal = table.atoms[target];
    let lhs = Expr::Atom(target.clone());

    if goal == 0 {
        return Ok(vec![Expr::iff(lhs, Expr::Const(false))]);
    }
    if goal == full {
        return Ok(vec![Expr::iff(lhs, Expr::Const(true))]);
    }

    let literals: Vec<(Atom, bool, u64)> = table
        .atoms
        .iter()
        .filter(|(a, _)| *a != target)
        .flat_map(|(a, &mask)| [(a.clone(), true, mask), (a.clone(), false, !mask & full)])
        .collect();

    // implicants of the goal, deduplicated by mask keeping the shortest
    let mut implicants: Vec<Term> = Vec::new();
    let mut seen_masks = std::collections::HashSet::new();
    for k in 1..=max_literals {
        combinations(literals.len(), k, &mut |idx| {
            let atoms_distinct = idx.windows(2).all(|w| literals[w[0]].0 != literals[w[1]].0);
            if atoms_distinct {
                let mask = idx.iter().fold(full, |acc, &i| acc & literals[i].2);
                if mask != 0 && mask & !goal == 0 && seen_masks.insert(mask) {
                    implicants.push(Term {
                        literals: idx
                            .iter()
                            .map(|&i| (literals[i].0.clone(), literals[i].1))
                            .collect(),
                        mask,
                    });
                }
            }
            true
        });
    }

    let mut found: Vec<(usize, Condition)> = Vec::new();
    for k in 1..=max_terms {
        combinations(implicants.len(), k, &mut |idx| {
            let mask = idx.iter().fold(0, |acc, &i| acc | implicants[i].mask);
            if mask == goal {
                let size = idx.iter().map(|&i| implicants[i].literals.len()).sum();
                let rhs = Expr::any(idx.iter().map(|&i| implicants[i].to_expr()));
                found.push((size, Expr::iff(lhs.clone(), rhs)));
            }
            true
        });
        if !found.is_empty() {
            break;
        }
    }
    found.sort_by_key(|(size, _)| *size);
    Ok(found.into_iter().take(limit).map(|(_, c)| c).collect())
}

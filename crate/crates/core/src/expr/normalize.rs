use std::collections::BTreeMap;

use super::{factors, render, Format, ProbExpr, ProbTerm, Sym, VarOrder};

/// Canonical form: sorted slots, sums and products flattened and sorted,
/// unit factors dropped, and `Σ_v` eliminated wherever `v` is absent or is a
/// marginalizable outcome of the only factor mentioning it.
pub fn normalize(e: &ProbExpr, order: &VarOrder) -> ProbExpr {
    let mut cur = e.clone();
    loop {
        let next = step(&cur, order);
        if next == cur {
            return next;
        }
        cur = next;
    }
}

/// Equality after normalization and canonical renaming of bound symbols.
pub fn equivalent(a: &ProbExpr, b: &ProbExpr, order: &VarOrder) -> bool {
    canon_bound(&normalize(a, order)) == canon_bound(&normalize(b, order))
}

/// Pushes each expectation inward through sums, differences and factors
/// that do not mention its variable, then normalizes.
pub fn expand_expectations(e: &ProbExpr, order: &VarOrder) -> ProbExpr {
    fn push(var: &Sym, of: &ProbExpr) -> ProbExpr {
        match of {
            ProbExpr::Sum { over, body } if !over.contains(var) => ProbExpr::sum(over.clone(), push(var, body)),
            ProbExpr::Difference(a, b) => ProbExpr::difference(push(var, a), push(var, b)),
            ProbExpr::Quotient(a, b) if !b.free_syms().contains(var) => ProbExpr::quotient(push(var, a), (**b).clone()),
            ProbExpr::Product(fs) => {
                let (with, without): (Vec<ProbExpr>, Vec<ProbExpr>) = fs.iter().cloned().partition(|f| f.free_syms().contains(var));
                if without.is_empty() {
                    return ProbExpr::expectation(var.clone(), of.clone());
                }
                let inner = match with.len() {
                    0 => ProbExpr::expectation(var.clone(), ProbExpr::one()),
                    1 => push(var, &with[0]),
                    _ => ProbExpr::expectation(var.clone(), ProbExpr::product(with)),
                };
                ProbExpr::product(without.into_iter().chain([inner]).collect())
            }
            _ => ProbExpr::expectation(var.clone(), of.clone()),
        }
    }
    fn go(e: &ProbExpr) -> ProbExpr {
        match e {
            ProbExpr::Expectation { var, of } => push(var, &go(of)),
            ProbExpr::Sum { over, body } => ProbExpr::sum(over.clone(), go(body)),
            ProbExpr::Product(fs) => ProbExpr::product(fs.iter().map(go).collect()),
            ProbExpr::Quotient(a, b) => ProbExpr::quotient(go(a), go(b)),
            ProbExpr::Difference(a, b) => ProbExpr::difference(go(a), go(b)),
            ProbExpr::Const(_) | ProbExpr::Term(_) => e.clone(),
        }
    }
    normalize(&go(&normalize(e, order)), order)
}

fn step(e: &ProbExpr, order: &VarOrder) -> ProbExpr {
    match e {
        ProbExpr::Const(c) => ProbExpr::Const(*c),
        ProbExpr::Term(t) => {
            let mut t = t.clone();
            order.sort_slots(&mut t.outcome);
            order.sort_slots(&mut t.given);
            order.sort_slots(&mut t.dos);
            ProbExpr::Term(t)
        }
        ProbExpr::Sum { over, body } => {
            let mut over = over.clone();
            let mut body = step(body, order);
            // merging is only sound when the inner sum rebinds nothing
            if let ProbExpr::Sum { over: inner, body: b } = &body {
                if inner.iter().all(|s| !over.contains(s)) {
                    over.extend(inner.iter().cloned());
                    body = (**b).clone();
                }
            }
            over.sort();
            over.dedup();
            let (mut over, body) = collapse(over, body);
            order.sort_syms(&mut over);
            ProbExpr::sum(over, body)
        }
        ProbExpr::Product(fs) => {
            let mut k: i64 = 1;
            let mut out = Vec::new();
            for f in fs {
                match step(f, order) {
                    ProbExpr::Product(inner) => out.extend(inner),
                    ProbExpr::Const(c) => k *= c,
                    other => out.push(other),
                }
            }
            if k == 0 {
                return ProbExpr::Const(0);
            }
            if k != 1 {
                out.push(ProbExpr::Const(k));
            }
            out.sort_by_cached_key(|f| (matches!(f, ProbExpr::Sum { .. }), render(f, Format::Structured)));
            ProbExpr::product(out)
        }
        ProbExpr::Quotient(a, b) => {
            let (a, b) = (step(a, order), step(b, order));
            let (a, b) = cancel(a, b);
            match (&a, &b) {
                (_, ProbExpr::Const(1)) => a,
                (ProbExpr::Const(0), _) => a,
                _ => ProbExpr::quotient(a, b),
            }
        }
        ProbExpr::Difference(a, b) => {
            let (a, b) = (step(a, order), step(b, order));
            if b == ProbExpr::Const(0) {
                a
            } else if a == b {
                ProbExpr::Const(0)
            } else {
                ProbExpr::difference(a, b)
            }
        }
        ProbExpr::Expectation { var, of } => ProbExpr::expectation(var.clone(), step(of, order)),
    }
}

/// Removes factors shared by numerator and denominator.
fn cancel(a: ProbExpr, b: ProbExpr) -> (ProbExpr, ProbExpr) {
    let mut num = factors(&a);
    let mut den = factors(&b);
    let before = num.len() + den.len();
    num.retain(|f| match den.iter().position(|g| g == f) {
        Some(i) => {
            den.remove(i);
            false
        }
        None => true,
    });
    if num.len() + den.len() == before {
        return (a, b);
    }
    (ProbExpr::product(num), ProbExpr::product(den))
}

/// Σ_v over a product where only one term mentions `v`, as a free outcome:
/// marginalize `v` out of that term (dropping it once its outcome is empty).
fn collapse(mut over: Vec<Sym>, body: ProbExpr) -> (Vec<Sym>, ProbExpr) {
    let mut fs = factors(&body);
    let mut changed = false;
    let mut i = 0;
    while i < over.len() {
        let v = &over[i];
        let hits: Vec<usize> = (0..fs.len()).filter(|&j| fs[j].free_syms().contains(v)).collect();
        let reducible = match hits.as_slice() {
            [j] => match &fs[*j] {
                ProbExpr::Term(t) => t.outcome.iter().any(|s| s.symbol().as_ref() == Some(v)),
                _ => false,
            },
            _ => false,
        };
        if !reducible {
            i += 1;
            continue;
        }
        let j = hits[0];
        let ProbExpr::Term(t) = &fs[j] else { unreachable!() };
        let outcome: Vec<_> = t.outcome.iter().filter(|s| s.symbol().as_ref() != Some(v)).cloned().collect();
        if outcome.is_empty() {
            fs.remove(j);
        } else {
            fs[j] = ProbExpr::Term(ProbTerm { outcome, ..t.clone() });
        }
        over.remove(i);
        changed = true;
    }
    if changed {
        (over, ProbExpr::product(fs))
    } else {
        (over, body)
    }
}

/// Renames bound symbols, in pre-order, to high fresh primes per node so that
/// alpha-equivalent expressions compare equal.
fn canon_bound(e: &ProbExpr) -> ProbExpr {
    fn go(e: &ProbExpr, next: &mut BTreeMap<String, u8>) -> ProbExpr {
        match e {
            ProbExpr::Sum { over, body } => {
                let mut body = (**body).clone();
                let mut new_over = Vec::new();
                for s in over {
                    let n = next.entry(s.node.clone()).or_insert(128);
                    let fresh = Sym::primed(s.node.clone(), *n);
                    *n += 1;
                    body = body.rename(s, &fresh);
                    new_over.push(fresh);
                }
                ProbExpr::Sum { over: new_over, body: Box::new(go(&body, next)) }
            }
            ProbExpr::Expectation { var, of } => {
                let n = next.entry(var.node.clone()).or_insert(128);
                let fresh = Sym::primed(var.node.clone(), *n);
                *n += 1;
                let of = of.rename(var, &fresh);
                ProbExpr::expectation(fresh, go(&of, next))
            }
            ProbExpr::Product(fs) => ProbExpr::Product(fs.iter().map(|f| go(f, next)).collect()),
            ProbExpr::Quotient(a, b) => {
                let a = go(a, next);
                ProbExpr::quotient(a, go(b, next))
            }
            ProbExpr::Difference(a, b) => {
                let a = go(a, next);
                ProbExpr::difference(a, go(b, next))
            }
            other => other.clone(),
        }
    }
    go(e, &mut BTreeMap::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn n(s: &str) -> String {
        render(&normalize(&parse_expr(s).unwrap(), &VarOrder::lexical()), Format::Structured)
    }

    #[test]
    fn slots_and_factors_sorted() {
        assert_eq!(n("P(Y | Z, A)"), "P[src](Y | A, Z)");
        assert_eq!(n("P(Z) P(Y | Z)"), "prod(P[src](Y | Z), P[src](Z))");
    }

    #[test]
    fn unit_factors_drop() {
        assert_eq!(n("prod(1, P(Y), 1)"), "P[src](Y)");
        assert_eq!(n("P(Y) / 1"), "P[src](Y)");
    }

    #[test]
    fn marginal_collapses() {
        assert_eq!(n("sum{Z} P(Z | X) P(Y | X)"), "P[src](Y | X)");
        assert_eq!(n("sum{Z} P(Y, Z | X)"), "P[src](Y | X)");
        // Z also in the conditioning set of another factor: stays
        assert_eq!(n("sum{Z} P(Y | Z) P(Z)"), "(sum{Z} prod(P[src](Y | Z), P[src](Z)))");
    }

    #[test]
    fn nested_sums_merge() {
        assert_eq!(n("sum{A} sum{B} P(Y | A, B) P(A, B)"), "(sum{A, B} prod(P[src](A, B), P[src](Y | A, B)))");
    }

    #[test]
    fn expectations_move_inside() {
        let o = VarOrder::lexical();
        let e = parse_expr("E{Y}(sum{W} prod(P(W), P(Y | X, W)))").unwrap();
        assert_eq!(expand_expectations(&e, &o).to_string(), "Σ_w E(Y | w, x) P(w)");
        let e = parse_expr("E{Y}(P(Y | X=1) - P(Y | X=0))").unwrap();
        assert_eq!(expand_expectations(&e, &o).to_string(), "E(Y | X=1) - E(Y | X=0)");
    }

    #[test]
    fn idempotent_on_examples() {
        for s in ["sum{Z} P(Y | Z, do(X)) P[tgt](Z)", "E(Y | X=1) - E(Y | X=0)", "sum{M} P(M | X) P(Y | M)"] {
            let once = normalize(&parse_expr(s).unwrap(), &VarOrder::lexical());
            assert_eq!(normalize(&once, &VarOrder::lexical()), once);
        }
    }

    #[test]
    fn alpha_equivalence() {
        let a = parse_expr("sum{X'} P(Y | X', Z) P(X')").unwrap();
        let b = parse_expr("sum{X''} P(X'') P(Y | X'', Z)").unwrap();
        assert!(equivalent(&a, &b, &VarOrder::lexical()));
        let c = parse_expr("sum{X'} P(Y | X', Z) P(X' | Z)").unwrap();
        assert!(!equivalent(&a, &c, &VarOrder::lexical()));
    }
}
